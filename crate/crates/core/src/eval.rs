//! Concrete semantics of formula DAGs over a bounded integer domain.
//!
//! Integers are signed `width`-bit two's complement values; every arithmetic
//! result, constant and environment value is wrapped into that range. All
//! operations are total unless [`Semantics::strict`] asks for array bounds
//! errors: division and modulo by zero yield 0, out-of-range array reads
//! yield 0, out-of-range writes leave the array unchanged and an
//! out-of-range multiplexer selector is clamped onto the choice list.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dag::{FormulaDag, NodeId, OpKind, Sort};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct Semantics {
    /// Bit width of integers.
    pub width: u32,
    /// Length of source arrays.
    pub array_len: usize,
    /// Out-of-bounds array accesses are errors instead of total.
    pub strict: bool,
}

impl Default for Semantics {
    fn default() -> Self {
        Semantics {
            width: 4,
            array_len: 4,
            strict: false,
        }
    }
}

impl Semantics {
    pub fn with_width(width: u32) -> Self {
        Semantics {
            width,
            ..Semantics::default()
        }
    }

    pub fn min_int(&self) -> i64 {
        -(1i64 << (self.width - 1))
    }

    pub fn max_int(&self) -> i64 {
        (1i64 << (self.width - 1)) - 1
    }

    pub fn wrap(&self, v: i128) -> i64 {
        let m = 1i128 << self.width;
        let mut r = v.rem_euclid(m);
        if r >= m / 2 {
            r -= m;
        }
        r as i64
    }

    /// Every value a scalar of `sort` can take.
    pub fn domain(&self, sort: Sort) -> Vec<i64> {
        match sort {
            Sort::Bool => vec![0, 1],
            _ => (self.min_int()..=self.max_int()).collect(),
        }
    }

    pub fn normalize(&self, sort: Sort, v: i64) -> i64 {
        match sort {
            Sort::Bool | Sort::BoolArr => (v != 0) as i64,
            _ => self.wrap(v as i128),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Scalar(i64),
    Array(Vec<i64>),
}

impl Value {
    pub fn scalar(&self) -> i64 {
        match self {
            Value::Scalar(v) => *v,
            Value::Array(_) => panic!("array used where a scalar is required"),
        }
    }

    pub fn array(&self) -> &[i64] {
        match self {
            Value::Array(a) => a,
            Value::Scalar(_) => panic!("scalar used where an array is required"),
        }
    }
}

/// Values for sources and controls, keyed by name.
pub type Environment = BTreeMap<String, Value>;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("no value for source {0}")]
    MissingSource(String),
    #[error("source {name} needs a {sort} value")]
    SourceSort { name: String, sort: Sort },
    #[error("node {node}: index {index} out of bounds")]
    OutOfBounds { node: NodeId, index: i64 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Evaluation {
    pub values: Vec<Value>,
    /// ASSERT nodes whose operand evaluated to 0.
    pub violations: Vec<NodeId>,
}

impl Evaluation {
    pub fn root_values(&self, dag: &FormulaDag) -> Vec<Value> {
        dag.roots()
            .iter()
            .map(|&r| self.values[r].clone())
            .collect()
    }
}

pub fn evaluate(
    dag: &FormulaDag,
    env: &Environment,
    sem: &Semantics,
) -> Result<Evaluation, EvalError> {
    let mut values: Vec<Value> = Vec::with_capacity(dag.len());
    let mut violations = Vec::new();
    for (id, node) in dag.nodes().iter().enumerate() {
        let v = match node.op {
            OpKind::Const => {
                Value::Scalar(sem.normalize(node.sort, node.const_value().unwrap_or(0)))
            }
            OpKind::Src | OpKind::Ctrl => {
                let name = node.name().unwrap_or_default();
                let raw = env
                    .get(name)
                    .ok_or_else(|| EvalError::MissingSource(name.to_string()))?;
                match (raw, node.sort.is_array()) {
                    (Value::Scalar(x), false) => Value::Scalar(sem.normalize(node.sort, *x)),
                    (Value::Array(xs), true) => {
                        Value::Array(xs.iter().map(|&x| sem.normalize(node.sort, x)).collect())
                    }
                    _ => {
                        return Err(EvalError::SourceSort {
                            name: name.to_string(),
                            sort: node.sort,
                        })
                    }
                }
            }
            op => {
                let args: Vec<&Value> = node.operands.iter().map(|&o| &values[o]).collect();
                if op == OpKind::Assert && args[0].scalar() == 0 {
                    violations.push(id);
                }
                apply_op(op, node.sort, &args, sem)
                    .map_err(|index| EvalError::OutOfBounds { node: id, index })?
            }
        };
        values.push(v);
    }
    Ok(Evaluation { values, violations })
}

/// Applies a non-leaf op. `Err(index)` reports an out-of-bounds access in strict mode.
pub fn apply_op(op: OpKind, sort: Sort, args: &[&Value], sem: &Semantics) -> Result<Value, i64> {
    let b = |v: &Value| v.scalar() != 0;
    let bool_v = |x: bool| Value::Scalar(x as i64);
    let int_v = |x: i128| Value::Scalar(sem.wrap(x));
    let s = |i: usize| args[i].scalar() as i128;
    Ok(match op {
        OpKind::Not => bool_v(!b(args[0])),
        OpKind::And => bool_v(b(args[0]) && b(args[1])),
        OpKind::Or => bool_v(b(args[0]) || b(args[1])),
        OpKind::Xor => bool_v(b(args[0]) != b(args[1])),
        OpKind::Assert => args[0].clone(),
        OpKind::Plus => int_v(s(0) + s(1)),
        OpKind::Times => int_v(s(0) * s(1)),
        OpKind::Div => int_v(if s(1) == 0 { 0 } else { s(0) / s(1) }),
        OpKind::Mod => int_v(if s(1) == 0 { 0 } else { s(0) % s(1) }),
        OpKind::Neg => int_v(-s(0)),
        OpKind::Eq => bool_v(args[0].scalar() == args[1].scalar()),
        OpKind::Lt => bool_v(args[0].scalar() < args[1].scalar()),
        OpKind::ArrAcc => {
            let n = args.len() - 1;
            let sel = args[0].scalar().clamp(0, n as i64 - 1) as usize;
            args[1 + sel].clone()
        }
        OpKind::ArrR => {
            let idx = args[0].scalar();
            let arr = args[1].array();
            match usize::try_from(idx).ok().and_then(|i| arr.get(i)) {
                Some(&v) => Value::Scalar(v),
                None if sem.strict => return Err(idx),
                None => Value::Scalar(0),
            }
        }
        OpKind::ArrW => {
            let idx = args[0].scalar();
            let mut arr = args[1].array().to_vec();
            match usize::try_from(idx).ok().filter(|&i| i < arr.len()) {
                Some(i) => arr[i] = args[2].scalar(),
                None if sem.strict => return Err(idx),
                None => {}
            }
            Value::Array(arr)
        }
        OpKind::ArrCreate => Value::Array(args.iter().map(|a| a.scalar()).collect()),
        OpKind::Const | OpKind::Src | OpKind::Ctrl => {
            unreachable!("leaf {op} in apply_op ({sort})")
        }
    })
}

/// A uniformly random environment for every source of `dag`.
pub fn random_environment<R: rand::Rng + ?Sized>(
    dag: &FormulaDag,
    sem: &Semantics,
    rng: &mut R,
) -> Environment {
    let mut env = Environment::new();
    for (name, sort) in dag.sources() {
        env.entry(name)
            .or_insert_with(|| random_value(sort, sem, rng));
    }
    env
}

pub fn random_value<R: rand::Rng + ?Sized>(sort: Sort, sem: &Semantics, rng: &mut R) -> Value {
    let scalar = |s: Sort, rng: &mut R| match s {
        Sort::Bool => rng.gen_range(0..=1),
        _ => rng.gen_range(sem.min_int()..=sem.max_int()),
    };
    match sort.element() {
        Some(e) => Value::Array((0..sem.array_len).map(|_| scalar(e, rng)).collect()),
        None => Value::Scalar(scalar(sort, rng)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dag::parse_dag;

    fn env(pairs: &[(&str, i64)]) -> Environment {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), Value::Scalar(*v)))
            .collect()
    }

    #[test]
    fn and_over_sources() {
        let d = parse_dag("0 = S BOOL N_1\n1 = S BOOL N_2\n2 = AND BOOL 0 1\n2").unwrap();
        let e = evaluate(&d, &env(&[("N_1", 1), ("N_2", 0)]), &Semantics::default()).unwrap();
        assert_eq!(e.values[2], Value::Scalar(0));
    }

    #[test]
    fn mux_selects() {
        let d =
            parse_dag("0 = S INT T\n1 = S INT C\n2 = S INT D\n3 = ARRACC INT 0 1 2\n3").unwrap();
        let sem = Semantics::default();
        let e = evaluate(&d, &env(&[("T", 1), ("C", 7), ("D", 9)]), &sem).unwrap();
        assert_eq!(e.values[3], Value::Scalar(-7), "9 wraps to -7 at width 4");
        let wide = Semantics::with_width(8);
        let e = evaluate(&d, &env(&[("T", 1), ("C", 7), ("D", 9)]), &wide).unwrap();
        assert_eq!(e.values[3], Value::Scalar(9));
        let e = evaluate(&d, &env(&[("T", 5), ("C", 7), ("D", 9)]), &wide).unwrap();
        assert_eq!(
            e.values[3],
            Value::Scalar(9),
            "selector clamps to the last choice"
        );
        let e = evaluate(&d, &env(&[("T", -3), ("C", 7), ("D", 9)]), &wide).unwrap();
        assert_eq!(e.values[3], Value::Scalar(7));
    }

    #[test]
    fn nested_or_absorption_lhs_equals_n4() {
        let d = parse_dag(
            "0 = S BOOL N_3\n1 = S BOOL N_4\n2 = S BOOL N_2\n3 = S BOOL N_1\n\
             4 = OR BOOL 0 1\n5 = OR BOOL 4 2\n6 = OR BOOL 5 3\n7 = AND BOOL 6 1\n7",
        )
        .unwrap();
        for bits in 0..16i64 {
            let e = env(&[
                ("N_1", bits & 1),
                ("N_2", bits >> 1 & 1),
                ("N_3", bits >> 2 & 1),
                ("N_4", bits >> 3 & 1),
            ]);
            let out = evaluate(&d, &e, &Semantics::default()).unwrap();
            assert_eq!(out.values[7], Value::Scalar(bits >> 3 & 1));
        }
    }

    #[test]
    fn total_division_and_arrays() {
        let sem = Semantics::default();
        let z = Value::Scalar(0);
        let five = Value::Scalar(5);
        assert_eq!(
            apply_op(OpKind::Div, Sort::Int, &[&five, &z], &sem),
            Ok(Value::Scalar(0))
        );
        assert_eq!(
            apply_op(OpKind::Mod, Sort::Int, &[&five, &z], &sem),
            Ok(Value::Scalar(0))
        );
        let min = Value::Scalar(-8);
        let m1 = Value::Scalar(-1);
        assert_eq!(
            apply_op(OpKind::Div, Sort::Int, &[&min, &m1], &sem),
            Ok(Value::Scalar(-8))
        );
        let arr = Value::Array(vec![1, 2, 3, 4]);
        let idx = Value::Scalar(6);
        assert_eq!(
            apply_op(OpKind::ArrR, Sort::Int, &[&idx, &arr], &sem),
            Ok(Value::Scalar(0))
        );
        let strict = Semantics {
            strict: true,
            ..sem
        };
        assert_eq!(
            apply_op(OpKind::ArrR, Sort::Int, &[&idx, &arr], &strict),
            Err(6)
        );
        let one = Value::Scalar(1);
        assert_eq!(
            apply_op(OpKind::ArrW, Sort::IntArr, &[&one, &arr, &five], &sem),
            Ok(Value::Array(vec![1, 5, 3, 4]))
        );
    }

    #[test]
    fn assert_violation_recorded() {
        let d = parse_dag("0 = S BOOL N_1\n1 = ASSERT BOOL 0\n").unwrap();
        let e = evaluate(&d, &env(&[("N_1", 0)]), &Semantics::default()).unwrap();
        assert_eq!(e.violations, vec![1]);
        assert_eq!(e.values[1], Value::Scalar(0));
    }

    #[test]
    fn missing_source() {
        let d = parse_dag("0 = S BOOL N_1\n0").unwrap();
        assert_eq!(
            evaluate(&d, &Environment::new(), &Semantics::default()),
            Err(EvalError::MissingSource("N_1".into()))
        );
    }
}
