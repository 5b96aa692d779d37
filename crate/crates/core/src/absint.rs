//! Forward value analysis over formula DAGs.
//!
//! Each node gets a [`AbstractValue`]: an explicit value list while it stays
//! under the list cap, an interval beyond that, or `Top`. BOOL nodes are
//! always a subset of `{0,1}`; the full boolean set is reported as `R(0-1)`.
//! Transfer functions enumerate small inputs exactly under the concrete
//! semantics and fall back to interval arithmetic otherwise.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dag::{FormulaDag, OpKind, Sort};
use crate::eval::{apply_op, Semantics, Value};
use crate::predicate::{Atom, Operand, Predicate};

/// Largest input product enumerated exactly.
const ENUM_LIMIT: usize = 4096;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AbstractValue {
    Range(i64, i64),
    ValueList(Vec<i64>),
    Top,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisConfig {
    pub sem: Semantics,
    /// Value lists longer than this widen to ranges.
    pub list_cap: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            sem: Semantics::default(),
            list_cap: 32,
        }
    }
}

impl AnalysisConfig {
    pub fn new(sem: Semantics) -> Self {
        AnalysisConfig {
            sem,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tri {
    True,
    False,
    Unknown,
}

impl Tri {
    pub fn and(self, other: Tri) -> Tri {
        match (self, other) {
            (Tri::False, _) | (_, Tri::False) => Tri::False,
            (Tri::True, Tri::True) => Tri::True,
            _ => Tri::Unknown,
        }
    }
}

impl AbstractValue {
    pub fn singleton(v: i64) -> Self {
        AbstractValue::ValueList(vec![v])
    }

    pub fn boolean() -> Self {
        AbstractValue::Range(0, 1)
    }

    pub fn default_for(sort: Sort) -> Self {
        match sort {
            Sort::Bool => AbstractValue::boolean(),
            _ => AbstractValue::Top,
        }
    }

    /// Normal form of a finite value set.
    pub fn from_set(set: &BTreeSet<i64>, cfg: &AnalysisConfig) -> Self {
        Self::normal_form(set, false, cfg)
    }

    /// As [`from_set`](Self::from_set); contiguous sets derived from range
    /// inputs stay ranges.
    fn normal_form(set: &BTreeSet<i64>, prefer_range: bool, cfg: &AnalysisConfig) -> Self {
        let (Some(&lo), Some(&hi)) = (set.first(), set.last()) else {
            // Unreachable code paths produce no values; any fact is sound.
            return AbstractValue::Top;
        };
        let contiguous = set.len() as i64 == hi - lo + 1;
        if lo <= cfg.sem.min_int() && hi >= cfg.sem.max_int() && contiguous {
            return AbstractValue::Top;
        }
        if prefer_range && contiguous && lo < hi {
            return AbstractValue::Range(lo, hi);
        }
        if set.len() <= cfg.list_cap {
            AbstractValue::ValueList(set.iter().copied().collect())
        } else {
            AbstractValue::Range(lo, hi)
        }
    }

    fn from_bounds(lo: i128, hi: i128, cfg: &AnalysisConfig) -> Self {
        if lo < cfg.sem.min_int() as i128 || hi > cfg.sem.max_int() as i128 {
            return AbstractValue::Top;
        }
        let (lo, hi) = (lo as i64, hi as i64);
        if lo == hi {
            AbstractValue::singleton(lo)
        } else if lo == cfg.sem.min_int() && hi == cfg.sem.max_int() {
            AbstractValue::Top
        } else {
            AbstractValue::Range(lo, hi)
        }
    }

    pub fn bounds(&self, cfg: &AnalysisConfig) -> (i64, i64) {
        match self {
            AbstractValue::Range(lo, hi) => (*lo, *hi),
            AbstractValue::ValueList(v) => (v[0], v[v.len() - 1]),
            AbstractValue::Top => (cfg.sem.min_int(), cfg.sem.max_int()),
        }
    }

    pub fn contains(&self, v: i64, cfg: &AnalysisConfig) -> bool {
        match self {
            AbstractValue::ValueList(vs) => vs.binary_search(&v).is_ok(),
            _ => {
                let (lo, hi) = self.bounds(cfg);
                lo <= v && v <= hi
            }
        }
    }

    pub fn size(&self, cfg: &AnalysisConfig) -> u64 {
        match self {
            AbstractValue::ValueList(v) => v.len() as u64,
            _ => {
                let (lo, hi) = self.bounds(cfg);
                (hi - lo + 1) as u64
            }
        }
    }

    /// The concrete values, when there are at most `limit` of them.
    pub fn enumerate(&self, cfg: &AnalysisConfig, limit: usize) -> Option<Vec<i64>> {
        if self.size(cfg) > limit as u64 {
            return None;
        }
        Some(match self {
            AbstractValue::ValueList(v) => v.clone(),
            _ => {
                let (lo, hi) = self.bounds(cfg);
                (lo..=hi).collect()
            }
        })
    }

    pub fn join(&self, other: &AbstractValue, cfg: &AnalysisConfig) -> AbstractValue {
        if let (AbstractValue::ValueList(a), AbstractValue::ValueList(b)) = (self, other) {
            let set: BTreeSet<i64> = a.iter().chain(b).copied().collect();
            return AbstractValue::from_set(&set, cfg);
        }
        if matches!(self, AbstractValue::Top) || matches!(other, AbstractValue::Top) {
            return AbstractValue::Top;
        }
        let (a, b) = (self.bounds(cfg), other.bounds(cfg));
        AbstractValue::from_bounds(a.0.min(b.0) as i128, a.1.max(b.1) as i128, cfg)
    }
}

impl fmt::Display for AbstractValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AbstractValue::Range(lo, hi) => write!(f, "R({lo}-{hi})"),
            AbstractValue::ValueList(vs) => {
                f.write_str("L(|")?;
                for v in vs {
                    write!(f, "{v}|")?;
                }
                f.write_str(")")
            }
            AbstractValue::Top => f.write_str("T"),
        }
    }
}

impl FromStr for AbstractValue {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let bad = || format!("bad annotation `{s}`");
        if s == "T" {
            return Ok(AbstractValue::Top);
        }
        if let Some(body) = s.strip_prefix("R(").and_then(|b| b.strip_suffix(')')) {
            // The separator is the first '-' after the (possibly signed) lower bound.
            let sep = body
                .char_indices()
                .skip(1)
                .find(|&(_, c)| c == '-')
                .map(|(i, _)| i)
                .ok_or_else(bad)?;
            let lo = body[..sep].parse().map_err(|_| bad())?;
            let hi = body[sep + 1..].parse().map_err(|_| bad())?;
            if lo > hi {
                return Err(bad());
            }
            return Ok(AbstractValue::Range(lo, hi));
        }
        if let Some(body) = s.strip_prefix("L(").and_then(|b| b.strip_suffix(')')) {
            let mut vs: Vec<i64> = body
                .split('|')
                .filter(|t| !t.is_empty())
                .map(|t| t.parse().map_err(|_| bad()))
                .collect::<Result<_, _>>()?;
            vs.sort_unstable();
            vs.dedup();
            if vs.is_empty() {
                return Err(bad());
            }
            return Ok(AbstractValue::ValueList(vs));
        }
        Err(bad())
    }
}

fn bool_result(op: OpKind) -> bool {
    matches!(
        op,
        OpKind::Not
            | OpKind::And
            | OpKind::Or
            | OpKind::Xor
            | OpKind::Eq
            | OpKind::Lt
            | OpKind::Assert
    )
}

/// Abstract transfer for a scalar-valued op over scalar inputs.
///
/// Array-typed ops are handled by [`analyze`], which can see the operand nodes.
pub fn transfer(op: OpKind, inputs: &[AbstractValue], cfg: &AnalysisConfig) -> AbstractValue {
    let fallback = || {
        if bool_result(op) {
            AbstractValue::boolean()
        } else {
            AbstractValue::Top
        }
    };
    if op.is_leaf() || op == OpKind::ArrW || op == OpKind::ArrCreate || op == OpKind::ArrR {
        return fallback();
    }
    // Exact enumeration when the input product is small.
    let mut product: usize = 1;
    let mut lists = Vec::with_capacity(inputs.len());
    for i in inputs {
        match i.enumerate(cfg, ENUM_LIMIT) {
            Some(vs) => {
                product = product.saturating_mul(vs.len());
                lists.push(vs);
            }
            None => {
                product = usize::MAX;
                break;
            }
        }
    }
    if product <= ENUM_LIMIT {
        let mut out = BTreeSet::new();
        let mut idx = vec![0usize; lists.len()];
        loop {
            let args: Vec<Value> = idx
                .iter()
                .zip(&lists)
                .map(|(&i, l)| Value::Scalar(l[i]))
                .collect();
            let refs: Vec<&Value> = args.iter().collect();
            match apply_op(op, Sort::Int, &refs, &cfg.sem) {
                Ok(Value::Scalar(v)) => {
                    out.insert(v);
                }
                _ => return fallback(),
            }
            if !advance(&mut idx, &lists) {
                break;
            }
        }
        let ranged = inputs
            .iter()
            .any(|i| !matches!(i, AbstractValue::ValueList(_)));
        return AbstractValue::normal_form(&out, ranged, cfg);
    }
    let b = |i: usize| {
        let (lo, hi) = inputs[i].bounds(cfg);
        (lo as i128, hi as i128)
    };
    match op {
        OpKind::Plus => {
            let ((al, ah), (bl, bh)) = (b(0), b(1));
            AbstractValue::from_bounds(al + bl, ah + bh, cfg)
        }
        OpKind::Neg => {
            let (al, ah) = b(0);
            AbstractValue::from_bounds(-ah, -al, cfg)
        }
        OpKind::Times => {
            let ((al, ah), (bl, bh)) = (b(0), b(1));
            let c = [al * bl, al * bh, ah * bl, ah * bh];
            AbstractValue::from_bounds(*c.iter().min().unwrap(), *c.iter().max().unwrap(), cfg)
        }
        OpKind::Lt => {
            let ((al, ah), (bl, bh)) = (b(0), b(1));
            if ah < bl {
                AbstractValue::singleton(1)
            } else if al >= bh {
                AbstractValue::singleton(0)
            } else {
                AbstractValue::boolean()
            }
        }
        OpKind::Eq => {
            let ((al, ah), (bl, bh)) = (b(0), b(1));
            if ah < bl || bh < al {
                AbstractValue::singleton(0)
            } else {
                AbstractValue::boolean()
            }
        }
        OpKind::ArrAcc => inputs[1..]
            .iter()
            .skip(1)
            .fold(inputs[1].clone(), |acc, c| acc.join(c, cfg)),
        _ => fallback(),
    }
}

fn advance(idx: &mut [usize], lists: &[Vec<i64>]) -> bool {
    for k in (0..idx.len()).rev() {
        idx[k] += 1;
        if idx[k] < lists[k].len() {
            return true;
        }
        idx[k] = 0;
    }
    false
}

/// One topological pass computing a fact per node.
///
/// Sources absent from `seeds` default to `R(0-1)` (BOOL) or `T`.
pub fn analyze(
    dag: &FormulaDag,
    seeds: &BTreeMap<String, AbstractValue>,
    cfg: &AnalysisConfig,
) -> Vec<AbstractValue> {
    let mut facts: Vec<AbstractValue> = Vec::with_capacity(dag.len());
    for node in dag.nodes() {
        let fact = node_fact(dag, node, &facts, seeds, cfg);
        facts.push(fact);
    }
    facts
}

pub fn node_fact(
    nodes: &impl NodeSource,
    node: &crate::dag::Node,
    facts: &[AbstractValue],
    seeds: &BTreeMap<String, AbstractValue>,
    cfg: &AnalysisConfig,
) -> AbstractValue {
    match node.op {
        OpKind::Const => AbstractValue::singleton(
            cfg.sem
                .normalize(node.sort, node.const_value().unwrap_or(0)),
        ),
        OpKind::Src | OpKind::Ctrl => {
            if node.sort.is_array() {
                return AbstractValue::Top;
            }
            match node.name().and_then(|n| seeds.get(n)) {
                Some(AbstractValue::Top) | None => AbstractValue::default_for(node.sort),
                Some(f) => f.clone(),
            }
        }
        OpKind::ArrW | OpKind::ArrCreate => AbstractValue::Top,
        OpKind::ArrR => {
            let elem = node.sort;
            let arr = nodes.get(node.operands[1]);
            if arr.op != OpKind::ArrCreate {
                return AbstractValue::default_for(elem);
            }
            let idx = &facts[node.operands[0]];
            let n = arr.operands.len() as i64;
            let mut acc: Option<AbstractValue> = None;
            let mut join = |f: AbstractValue| {
                acc = Some(match acc.take() {
                    Some(a) => a.join(&f, cfg),
                    None => f,
                })
            };
            match idx.enumerate(cfg, ENUM_LIMIT) {
                Some(vs) => {
                    for v in vs {
                        if (0..n).contains(&v) {
                            join(facts[arr.operands[v as usize]].clone());
                        } else {
                            join(AbstractValue::singleton(0));
                        }
                    }
                }
                None => {
                    for &e in &arr.operands {
                        join(facts[e].clone());
                    }
                    join(AbstractValue::singleton(0));
                }
            }
            acc.unwrap_or_else(|| AbstractValue::default_for(elem))
        }
        op => {
            let inputs: Vec<AbstractValue> =
                node.operands.iter().map(|&o| facts[o].clone()).collect();
            transfer(op, &inputs, cfg)
        }
    }
}

/// Read access to nodes by id; lets analysis run over a DAG under construction.
pub trait NodeSource {
    fn get(&self, id: usize) -> &crate::dag::Node;
}

impl NodeSource for FormulaDag {
    fn get(&self, id: usize) -> &crate::dag::Node {
        self.node(id)
    }
}

impl NodeSource for crate::hashcons::DagBuilder {
    fn get(&self, id: usize) -> &crate::dag::Node {
        self.node(id)
    }
}

/// Decides a guard against per-variable facts.
///
/// When every variable has a small finite fact the joint valuations are
/// enumerated, which is exact. Otherwise atoms are decided one at a time and
/// combined by tri-state conjunction. Variables without facts are `T`.
pub fn implies(
    facts: &BTreeMap<String, AbstractValue>,
    pred: &Predicate,
    cfg: &AnalysisConfig,
) -> Tri {
    let vars = pred.variables();
    let fact = |v: &str| facts.get(v).cloned().unwrap_or(AbstractValue::Top);
    let mut lists = Vec::with_capacity(vars.len());
    let mut product = 1usize;
    for v in &vars {
        match fact(v).enumerate(cfg, ENUM_LIMIT) {
            Some(vs) => {
                product = product.saturating_mul(vs.len());
                lists.push(vs);
            }
            None => {
                product = usize::MAX;
                break;
            }
        }
    }
    if product <= ENUM_LIMIT {
        let (mut any_true, mut any_false) = (false, false);
        let mut idx = vec![0usize; lists.len()];
        let mut env = BTreeMap::new();
        loop {
            for (k, v) in vars.iter().enumerate() {
                env.insert(v.to_string(), lists[k][idx[k]]);
            }
            if pred.eval(&env) {
                any_true = true;
            } else {
                any_false = true;
            }
            if any_true && any_false {
                return Tri::Unknown;
            }
            if !advance(&mut idx, &lists) {
                break;
            }
        }
        return if any_false { Tri::False } else { Tri::True };
    }
    pred.atoms()
        .iter()
        .fold(Tri::True, |acc, a| acc.and(atom_tri(a, &fact, cfg)))
}

fn atom_tri(a: &Atom, fact: &dyn Fn(&str) -> AbstractValue, cfg: &AnalysisConfig) -> Tri {
    use crate::predicate::Relation::*;
    let l = fact(&a.left);
    let r = match &a.right {
        Operand::Var(v) => fact(v),
        Operand::Const(c) => AbstractValue::singleton(*c),
    };
    let ((ll, lh), (rl, rh)) = (l.bounds(cfg), r.bounds(cfg));
    let disjoint = lh < rl || rh < ll;
    let same_point = ll == lh && rl == rh && ll == rl;
    let t = |b: bool| if b { Tri::True } else { Tri::False };
    match a.rel {
        Lt if lh < rl => t(true),
        Lt if ll >= rh => t(false),
        Le if lh <= rl => t(true),
        Le if ll > rh => t(false),
        Eq if same_point => t(true),
        Eq if disjoint => t(false),
        Ne if disjoint => t(true),
        Ne if same_point => t(false),
        _ => Tri::Unknown,
    }
}
