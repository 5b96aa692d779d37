//! Guard predicates: conjunctions of (in)equality atoms over pattern variables.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Relation {
    Eq,
    Ne,
    Lt,
    Le,
}

impl Relation {
    pub const ALL: [Relation; 4] = [Relation::Eq, Relation::Ne, Relation::Lt, Relation::Le];

    pub fn holds(self, l: i64, r: i64) -> bool {
        match self {
            Relation::Eq => l == r,
            Relation::Ne => l != r,
            Relation::Lt => l < r,
            Relation::Le => l <= r,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Eq => "=",
            Relation::Ne => "!=",
            Relation::Lt => "<",
            Relation::Le => "<=",
        }
    }

    pub fn is_symmetric(self) -> bool {
        matches!(self, Relation::Eq | Relation::Ne)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Operand {
    Var(String),
    Const(i64),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Atom {
    pub left: String,
    pub rel: Relation,
    pub right: Operand,
}

impl Atom {
    /// Orders the variables of symmetric relations, so `y = x` becomes `x = y`.
    pub fn new(left: impl Into<String>, rel: Relation, right: Operand) -> Self {
        let left = left.into();
        match right {
            Operand::Var(r) if rel.is_symmetric() && r < left => Atom {
                left: r,
                rel,
                right: Operand::Var(left),
            },
            right => Atom { left, rel, right },
        }
    }

    pub fn eval(&self, env: &BTreeMap<String, i64>) -> bool {
        let l = env.get(&self.left).copied().unwrap_or(0);
        let r = match &self.right {
            Operand::Var(v) => env.get(v).copied().unwrap_or(0),
            Operand::Const(c) => *c,
        };
        self.rel.holds(l, r)
    }

    pub fn variables(&self) -> impl Iterator<Item = &str> {
        let right = match &self.right {
            Operand::Var(v) => Some(v.as_str()),
            Operand::Const(_) => None,
        };
        std::iter::once(self.left.as_str()).chain(right)
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} ", self.left, self.rel.symbol())?;
        match &self.right {
            Operand::Var(v) => f.write_str(v),
            Operand::Const(c) => write!(f, "{c}"),
        }
    }
}

/// A conjunction of atoms, canonically sorted and deduplicated. Empty is TRUE.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct Predicate {
    atoms: Vec<Atom>,
}

impl Predicate {
    pub fn truth() -> Self {
        Predicate::default()
    }

    pub fn new(atoms: impl IntoIterator<Item = Atom>) -> Self {
        let mut atoms: Vec<Atom> = atoms.into_iter().collect();
        atoms.sort();
        atoms.dedup();
        Predicate { atoms }
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn is_true(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn eval(&self, env: &BTreeMap<String, i64>) -> bool {
        self.atoms.iter().all(|a| a.eval(env))
    }

    /// Variables in first-mention order, without repeats.
    pub fn variables(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for a in &self.atoms {
            for v in a.variables() {
                if !out.contains(&v) {
                    out.push(v);
                }
            }
        }
        out
    }

    pub fn and(&self, other: &Predicate) -> Predicate {
        Predicate::new(self.atoms.iter().chain(other.atoms.iter()).cloned())
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.atoms.is_empty() {
            return f.write_str("TRUE");
        }
        for (i, a) in self.atoms.iter().enumerate() {
            if i > 0 {
                f.write_str(" & ")?;
            }
            write!(f, "{a}")?;
        }
        Ok(())
    }
}
