//! Synthesis of verified conditional rewrite rules.
//!
//! For a pattern used as left-hand side, candidate guards are built from
//! (in)equality atoms that the recorded static facts make definitely true.
//! Guards are ordered by implication, and for each one the smallest
//! right-hand side is searched as a let-chain `t_1 .. t_k` of single
//! operations. Candidates are filtered on a growing set of counterexamples
//! and then checked against a bounded oracle: exhaustive enumeration of the
//! variables at the oracle width when that is small enough, stratified random
//! sampling otherwise, followed by a random re-check two bits wider.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::absint::{implies, AbstractValue, AnalysisConfig, Tri};
use crate::dag::{parse_dag, write_node_line, DagError, FormulaDag, Node, NodeId, OpKind, Sort};
use crate::eval::{apply_op, Semantics, Value};
use crate::hashcons::{prune, DagBuilder};
use crate::pattern::{parse_signature, Pattern, PatternError};
use crate::predicate::{Atom, Operand, Predicate, Relation};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Dag(#[from] DagError),
    #[error(transparent)]
    Pattern(#[from] PatternError),
    #[error("{file}: {msg}")]
    Aux { file: String, msg: String },
    #[error("invalid rule: {0}")]
    Rule(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    /// Largest number of operations in a right-hand side. Always kept below
    /// the size of the left-hand side.
    pub k_max: usize,
    pub oracle_width: u32,
    pub array_len: usize,
    /// Integer constants for guards and right-hand sides, besides those of
    /// the left-hand side.
    pub const_pool: Vec<i64>,
    pub max_atoms: usize,
    /// Guard candidates beyond this are dropped and the set is flagged.
    pub max_predicates: usize,
    /// Largest valuation count checked exhaustively.
    pub exhaustive_cap: u64,
    /// Samples drawn when the valuation count exceeds the cap.
    pub random_checks: usize,
    /// Samples of the wider re-check.
    pub recheck: usize,
    /// Complete right-hand side candidates tried per guard.
    pub candidate_budget: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            k_max: 3,
            oracle_width: 4,
            array_len: 4,
            const_pool: vec![-1, 0, 1],
            max_atoms: 2,
            max_predicates: 256,
            exhaustive_cap: 1 << 20,
            random_checks: 200_000,
            recheck: 1000,
            candidate_budget: 2_000_000,
            seed: 0x5eed,
        }
    }
}

impl SynthConfig {
    pub fn sem(&self) -> Semantics {
        Semantics {
            width: self.oracle_width,
            array_len: self.array_len,
            strict: false,
        }
    }
}

/// A guarded rewrite `lhs -> rhs`, valid wherever `pred` holds.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RewriteRule {
    pub lhs: Pattern,
    pub pred: Predicate,
    pub rhs: Pattern,
    /// Integer width the oracle checked.
    pub verified_bound: u32,
    /// False when the oracle had to sample instead of enumerating.
    pub exhaustive: bool,
}

impl RewriteRule {
    pub fn new(
        lhs: Pattern,
        pred: Predicate,
        rhs: Pattern,
        verified_bound: u32,
    ) -> Result<Self, SynthError> {
        if rhs.size() >= lhs.size() {
            return Err(SynthError::Rule(format!(
                "rhs size {} is not below lhs size {}",
                rhs.size(),
                lhs.size()
            )));
        }
        if rhs.sort() != lhs.sort() {
            return Err(SynthError::Rule(format!(
                "rhs sort {} differs from lhs sort {}",
                rhs.sort(),
                lhs.sort()
            )));
        }
        let vars: BTreeMap<String, Sort> = lhs.variables().into_iter().collect();
        for (name, sort) in rhs.variables() {
            if vars.get(&name) != Some(&sort) {
                return Err(SynthError::Rule(format!(
                    "rhs variable {name} is not an lhs variable"
                )));
            }
        }
        for v in pred.variables() {
            if !vars.contains_key(v) {
                return Err(SynthError::Rule(format!(
                    "guard variable {v} is not an lhs variable"
                )));
            }
        }
        Ok(RewriteRule {
            lhs,
            pred,
            rhs,
            verified_bound,
            exhaustive: true,
        })
    }

    /// The rule as `d.aux`, `f.aux` and `p.aux` texts. All three start with
    /// the same variable nodes.
    pub fn to_aux(&self) -> AuxFiles {
        let vars = self.lhs.variables();
        let index: BTreeMap<&str, usize> = vars
            .iter()
            .enumerate()
            .map(|(i, (n, _))| (n.as_str(), i))
            .collect();
        let mut prefix = String::new();
        for (i, (name, sort)) in vars.iter().enumerate() {
            write_node_line(&mut prefix, i, &Node::source(*sort, name.clone()));
        }
        let body = |p: &Pattern| {
            let mut out = prefix.clone();
            let mut map = vec![0usize; p.dag().len()];
            let mut next = vars.len();
            for (id, n) in p.dag().nodes().iter().enumerate() {
                if let Some(name) = n.name() {
                    map[id] = index[name];
                    continue;
                }
                let mut n = n.clone();
                for o in &mut n.operands {
                    *o = map[*o];
                }
                write_node_line(&mut out, next, &n);
                map[id] = next;
                next += 1;
            }
            out.push_str(&format!("{}\n", map[p.root()]));
            out
        };
        let mut p = prefix.clone();
        let root = write_guard(&mut p, &self.pred, &index, &vars);
        p.push_str(&format!("{root}\n"));
        AuxFiles {
            d: body(&self.lhs),
            f: body(&self.rhs),
            p,
        }
    }

    pub fn from_aux(files: &AuxFiles, verified_bound: u32) -> Result<Self, SynthError> {
        let aux = |file: &str, msg: String| SynthError::Aux {
            file: file.to_string(),
            msg,
        };
        let lhs = Pattern::new(parse_dag(&files.d)?)?;
        let rhs = Pattern::new(prune(parse_dag(&files.f)?))?;
        let pdag = parse_dag(&files.p)?;
        let &[root] = pdag.roots() else {
            return Err(aux("p.aux", "expected one root".into()));
        };
        let pred = read_guard(&pdag, root).map_err(|m| aux("p.aux", m))?;
        RewriteRule::new(lhs, pred, rhs, verified_bound)
    }
}

impl fmt::Display for RewriteRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} [{}] => {}", self.lhs, self.pred, self.rhs)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuxFiles {
    pub d: String,
    pub f: String,
    pub p: String,
}

/// Writes the nodes of a guard after the variable prefix; returns the root.
fn write_guard(
    out: &mut String,
    pred: &Predicate,
    index: &BTreeMap<&str, usize>,
    vars: &[(String, Sort)],
) -> NodeId {
    let mut next = vars.len();
    if pred.is_true() {
        out.push_str(&format!("{next} = CONST BIT 1\n"));
        return next;
    }
    let mut emit = |out: &mut String, n: Node| {
        write_node_line(out, next, &n);
        next += 1;
        next - 1
    };
    let mut conj: Option<NodeId> = None;
    for a in pred.atoms() {
        let l = index[a.left.as_str()];
        let sort = vars[l].1;
        let r = match &a.right {
            Operand::Var(v) => index[v.as_str()],
            Operand::Const(c) => emit(out, Node::constant(sort, *c)),
        };
        let atom = match a.rel {
            Relation::Eq => emit(out, Node::op(OpKind::Eq, Sort::Bool, vec![l, r])),
            Relation::Ne => {
                let e = emit(out, Node::op(OpKind::Eq, Sort::Bool, vec![l, r]));
                emit(out, Node::op(OpKind::Not, Sort::Bool, vec![e]))
            }
            Relation::Lt => emit(out, Node::op(OpKind::Lt, Sort::Bool, vec![l, r])),
            Relation::Le => {
                let e = emit(out, Node::op(OpKind::Lt, Sort::Bool, vec![r, l]));
                emit(out, Node::op(OpKind::Not, Sort::Bool, vec![e]))
            }
        };
        conj = Some(match conj {
            None => atom,
            Some(c) => emit(out, Node::op(OpKind::And, Sort::Bool, vec![c, atom])),
        });
    }
    conj.unwrap_or(next)
}

fn read_guard(dag: &FormulaDag, root: NodeId) -> Result<Predicate, String> {
    fn operand(dag: &FormulaDag, id: NodeId) -> Result<Operand, String> {
        let n = dag.node(id);
        match (n.name(), n.const_value()) {
            (Some(name), _) => Ok(Operand::Var(name.to_string())),
            (_, Some(c)) => Ok(Operand::Const(c)),
            _ => Err(format!("node {id} is not a variable or constant")),
        }
    }
    fn atom(
        dag: &FormulaDag,
        id: NodeId,
        rel: Relation,
        l: NodeId,
        r: NodeId,
    ) -> Result<Atom, String> {
        match operand(dag, l)? {
            Operand::Var(v) => Ok(Atom::new(v, rel, operand(dag, r)?)),
            Operand::Const(_) => Err(format!("node {id}: constant on the left")),
        }
    }
    fn walk(dag: &FormulaDag, id: NodeId, out: &mut Vec<Atom>) -> Result<(), String> {
        let n = dag.node(id);
        let ops = &n.operands;
        match n.op {
            OpKind::Const if n.const_value() == Some(1) => Ok(()),
            OpKind::And => {
                walk(dag, ops[0], out)?;
                walk(dag, ops[1], out)
            }
            OpKind::Eq => {
                out.push(atom(dag, id, Relation::Eq, ops[0], ops[1])?);
                Ok(())
            }
            OpKind::Lt => {
                out.push(atom(dag, id, Relation::Lt, ops[0], ops[1])?);
                Ok(())
            }
            OpKind::Not => {
                let inner = dag.node(ops[0]);
                match inner.op {
                    OpKind::Eq => {
                        out.push(atom(
                            dag,
                            id,
                            Relation::Ne,
                            inner.operands[0],
                            inner.operands[1],
                        )?);
                        Ok(())
                    }
                    OpKind::Lt => {
                        out.push(atom(
                            dag,
                            id,
                            Relation::Le,
                            inner.operands[1],
                            inner.operands[0],
                        )?);
                        Ok(())
                    }
                    _ => Err(format!("node {id}: unsupported negation")),
                }
            }
            op => Err(format!("node {id}: unsupported {op} in guard")),
        }
    }
    let mut atoms = Vec::new();
    walk(dag, root, &mut atoms)?;
    Ok(Predicate::new(atoms))
}

#[derive(Debug, Serialize, Deserialize)]
struct RuleMeta {
    verified_bound: u32,
    exhaustive: bool,
}

/// Writes each rule to `dir/<index>/{d,f,p}.aux` plus a small `meta.json`.
pub fn save_rules(dir: &Path, rules: &[RewriteRule]) -> Result<(), SynthError> {
    fs::create_dir_all(dir)?;
    for (i, r) in rules.iter().enumerate() {
        let sub = dir.join(i.to_string());
        fs::create_dir_all(&sub)?;
        let aux = r.to_aux();
        fs::write(sub.join("d.aux"), aux.d)?;
        fs::write(sub.join("f.aux"), aux.f)?;
        fs::write(sub.join("p.aux"), aux.p)?;
        let meta = RuleMeta {
            verified_bound: r.verified_bound,
            exhaustive: r.exhaustive,
        };
        fs::write(
            sub.join("meta.json"),
            serde_json::to_string(&meta).expect("plain struct"),
        )?;
    }
    Ok(())
}

/// Reads rules saved by [`save_rules`], in numeric directory order. Missing
/// metadata defaults to a width-4 exhaustive check.
pub fn load_rules(dir: &Path) -> Result<Vec<RewriteRule>, SynthError> {
    let mut subs: Vec<(usize, std::path::PathBuf)> = Vec::new();
    for e in fs::read_dir(dir)? {
        let e = e?;
        if let Some(i) = e.file_name().to_str().and_then(|s| s.parse().ok()) {
            if e.path().join("d.aux").exists() {
                subs.push((i, e.path()));
            }
        }
    }
    subs.sort();
    let mut rules = Vec::with_capacity(subs.len());
    for (_, sub) in subs {
        let files = AuxFiles {
            d: fs::read_to_string(sub.join("d.aux"))?,
            f: fs::read_to_string(sub.join("f.aux"))?,
            p: fs::read_to_string(sub.join("p.aux"))?,
        };
        let meta = fs::read_to_string(sub.join("meta.json"))
            .ok()
            .and_then(|s| serde_json::from_str::<RuleMeta>(&s).ok())
            .unwrap_or(RuleMeta {
                verified_bound: 4,
                exhaustive: true,
            });
        let mut rule = RewriteRule::from_aux(&files, meta.verified_bound).map_err(|e| match e {
            SynthError::Aux { file, msg } => SynthError::Aux {
                file: format!("{}/{file}", sub.display()),
                msg,
            },
            e => e,
        })?;
        rule.exhaustive = meta.exhaustive;
        rules.push(rule);
    }
    Ok(rules)
}

// ---------------------------------------------------------------------------
// Compiled evaluation over a fixed variable order.

#[derive(Debug, Clone)]
enum Step {
    Var(usize),
    Const(Sort, i64),
    Op(OpKind, Sort, Vec<usize>),
}

#[derive(Debug, Clone)]
struct Program {
    steps: Vec<Step>,
    out: usize,
}

impl Program {
    fn compile(p: &Pattern, vars: &[(String, Sort)]) -> Program {
        let steps = p
            .dag()
            .nodes()
            .iter()
            .map(|n| match (n.op, n.name()) {
                (_, Some(name)) => Step::Var(
                    vars.iter()
                        .position(|(v, _)| v == name)
                        .expect("known variable"),
                ),
                (OpKind::Const, _) => Step::Const(n.sort, n.const_value().unwrap_or(0)),
                (op, _) => Step::Op(op, n.sort, n.operands.clone()),
            })
            .collect();
        Program {
            steps,
            out: p.root(),
        }
    }

    fn run(&self, env: &[Value], sem: &Semantics, buf: &mut Vec<Value>) -> Value {
        buf.clear();
        for s in &self.steps {
            let v = match s {
                Step::Var(i) => env[*i].clone(),
                Step::Const(sort, c) => Value::Scalar(sem.normalize(*sort, *c)),
                Step::Op(op, sort, ops) => {
                    let args: Vec<&Value> = ops.iter().map(|&o| &buf[o]).collect();
                    apply_op(*op, *sort, &args, sem).unwrap_or(Value::Scalar(0))
                }
            };
            buf.push(v);
        }
        buf.swap_remove(self.out)
    }
}

#[derive(Debug, Clone)]
struct Guard {
    atoms: Vec<(usize, Relation, Result<usize, i64>)>,
}

impl Guard {
    fn compile(pred: &Predicate, vars: &[(String, Sort)]) -> Guard {
        let idx = |n: &str| {
            vars.iter()
                .position(|(v, _)| v == n)
                .expect("guard variable")
        };
        let atoms = pred
            .atoms()
            .iter()
            .map(|a| {
                let r = match &a.right {
                    Operand::Var(v) => Ok(idx(v)),
                    Operand::Const(c) => Err(*c),
                };
                (idx(&a.left), a.rel, r)
            })
            .collect();
        Guard { atoms }
    }

    fn holds(&self, env: &[Value]) -> bool {
        self.atoms.iter().all(|(l, rel, r)| {
            let rv = match r {
                Ok(i) => env[*i].scalar(),
                Err(c) => *c,
            };
            rel.holds(env[*l].scalar(), rv)
        })
    }
}

/// The bounded valuation space of a variable list.
#[derive(Debug, Clone)]
struct Domain {
    sorts: Vec<Sort>,
    sem: Semantics,
    specials: Vec<i64>,
}

impl Domain {
    fn new(sorts: Vec<Sort>, sem: Semantics, consts: &[i64]) -> Domain {
        let mut specials: Vec<i64> = [sem.min_int(), sem.max_int(), -1, 0, 1, 2]
            .into_iter()
            .chain(consts.iter().map(|&c| sem.wrap(c as i128)))
            .collect();
        specials.sort_unstable();
        specials.dedup();
        Domain {
            sorts,
            sem,
            specials,
        }
    }

    fn scalar_size(&self, s: Sort) -> u64 {
        match s {
            Sort::Bool | Sort::BoolArr => 2,
            _ => 1u64 << self.sem.width,
        }
    }

    fn scalar_min(&self, s: Sort) -> i64 {
        match s {
            Sort::Bool | Sort::BoolArr => 0,
            _ => self.sem.min_int(),
        }
    }

    /// Number of valuations, when it fits in a `u64`.
    fn size(&self) -> Option<u64> {
        let mut total: u64 = 1;
        for &s in &self.sorts {
            let per = if s.is_array() {
                self.scalar_size(s).checked_pow(self.sem.array_len as u32)?
            } else {
                self.scalar_size(s)
            };
            total = total.checked_mul(per)?;
        }
        Some(total)
    }

    fn decode(&self, mut idx: u64, out: &mut Vec<Value>) {
        out.clear();
        for &s in &self.sorts {
            let (size, lo) = (self.scalar_size(s), self.scalar_min(s));
            if s.is_array() {
                let mut arr = Vec::with_capacity(self.sem.array_len);
                for _ in 0..self.sem.array_len {
                    arr.push(lo + (idx % size) as i64);
                    idx /= size;
                }
                out.push(Value::Array(arr));
            } else {
                out.push(Value::Scalar(lo + (idx % size) as i64));
                idx /= size;
            }
        }
    }

    /// A random valuation biased towards boundary and pool values.
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Vec<Value>) {
        out.clear();
        let scalar = |s: Sort, rng: &mut R| -> i64 {
            match s {
                Sort::Bool | Sort::BoolArr => rng.gen_range(0..=1),
                _ if rng.gen_bool(0.5) => self.specials[rng.gen_range(0..self.specials.len())],
                _ => rng.gen_range(self.sem.min_int()..=self.sem.max_int()),
            }
        };
        for &s in &self.sorts {
            if s.is_array() {
                out.push(Value::Array(
                    (0..self.sem.array_len).map(|_| scalar(s, rng)).collect(),
                ));
            } else {
                out.push(Value::Scalar(scalar(s, rng)));
            }
        }
    }

    /// Up to `n` random valuations satisfying `guard`.
    fn draw_satisfying<R: Rng + ?Sized>(
        &self,
        guard: &Guard,
        n: usize,
        rng: &mut R,
    ) -> Vec<Vec<Value>> {
        let mut out = Vec::with_capacity(n);
        let mut env = Vec::new();
        let mut tries = 0usize;
        while out.len() < n && tries < n.saturating_mul(500).max(10_000) {
            tries += 1;
            self.draw(rng, &mut env);
            if guard.holds(&env) {
                out.push(env.clone());
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verdict {
    pub holds: bool,
    pub exhaustive: bool,
    /// Valuations that satisfied the guard and were compared.
    pub checked: u64,
    /// Variable values, in lhs variable order, of a failing valuation.
    pub witness: Option<Vec<Value>>,
}

struct Oracle {
    vars: Vec<(String, Sort)>,
    lhs: Program,
    guard: Guard,
    domain: Domain,
}

impl Oracle {
    fn new(lhs: &Pattern, pred: &Predicate, sem: Semantics, pool: &[i64]) -> Oracle {
        let vars = lhs.variables();
        let mut consts = lhs.constants();
        consts.extend(pool);
        consts.extend(pred.atoms().iter().filter_map(|a| match a.right {
            Operand::Const(c) => Some(c),
            Operand::Var(_) => None,
        }));
        let domain = Domain::new(vars.iter().map(|(_, s)| *s).collect(), sem, &consts);
        Oracle {
            lhs: Program::compile(lhs, &vars),
            guard: Guard::compile(pred, &vars),
            domain,
            vars,
        }
    }

    fn check(&self, rhs: &Program, cfg: &SynthConfig, seed: u64) -> Verdict {
        let sem = self.domain.sem;
        let differs = |env: &[Value], a: &mut Vec<Value>, b: &mut Vec<Value>| {
            self.guard.holds(env) && self.lhs.run(env, &sem, a) != rhs.run(env, &sem, b)
        };
        match self.domain.size().filter(|&n| n <= cfg.exhaustive_cap) {
            Some(total) => {
                const CHUNK: u64 = 4096;
                let chunks = total.div_ceil(CHUNK);
                let witness = (0..chunks).into_par_iter().find_map_first(|c| {
                    let (mut env, mut a, mut b) = (Vec::new(), Vec::new(), Vec::new());
                    for idx in c * CHUNK..((c + 1) * CHUNK).min(total) {
                        self.domain.decode(idx, &mut env);
                        if differs(&env, &mut a, &mut b) {
                            return Some(env);
                        }
                    }
                    None
                });
                let checked = if witness.is_none() {
                    self.count_satisfying(total)
                } else {
                    0
                };
                Verdict {
                    holds: witness.is_none(),
                    exhaustive: true,
                    checked,
                    witness,
                }
            }
            None => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let envs = self
                    .domain
                    .draw_satisfying(&self.guard, cfg.random_checks, &mut rng);
                let (mut a, mut b) = (Vec::new(), Vec::new());
                let witness = envs.iter().find(|e| differs(e, &mut a, &mut b)).cloned();
                Verdict {
                    holds: witness.is_none(),
                    exhaustive: false,
                    checked: envs.len() as u64,
                    witness,
                }
            }
        }
    }

    fn count_satisfying(&self, total: u64) -> u64 {
        if self.guard.atoms.is_empty() {
            return total;
        }
        let mut env = Vec::new();
        (0..total)
            .filter(|&i| {
                self.domain.decode(i, &mut env);
                self.guard.holds(&env)
            })
            .count() as u64
    }

    /// Random comparison at a wider width; true when no difference is found.
    fn recheck(&self, rhs: &Program, width: u32, samples: usize, seed: u64) -> bool {
        let sem = Semantics {
            width,
            ..self.domain.sem
        };
        let consts: Vec<i64> = self.domain.specials.clone();
        let wide = Domain::new(self.domain.sorts.clone(), sem, &consts);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let (mut a, mut b) = (Vec::new(), Vec::new());
        wide.draw_satisfying(&self.guard, samples, &mut rng)
            .iter()
            .all(|env| self.lhs.run(env, &sem, &mut a) == rhs.run(env, &sem, &mut b))
    }
}

/// Checks `rule` against the oracle at `sem` (exhaustive up to the cap).
pub fn check_rule(rule: &RewriteRule, sem: &Semantics, cfg: &SynthConfig) -> Verdict {
    let oracle = Oracle::new(&rule.lhs, &rule.pred, *sem, &cfg.const_pool);
    let rhs = Program::compile(&rule.rhs, &oracle.vars);
    oracle.check(&rhs, cfg, cfg.seed)
}

/// True iff `lhs = rhs` on every guarded valuation at `width` bits.
pub fn verify_rule(rule: &RewriteRule, width: u32) -> bool {
    let cfg = SynthConfig {
        oracle_width: width,
        ..SynthConfig::default()
    };
    check_rule(rule, &cfg.sem(), &cfg).holds
}

/// Compares both sides on `samples` random guarded valuations at `width` bits.
pub fn recheck_rule(rule: &RewriteRule, width: u32, samples: usize, seed: u64) -> bool {
    let cfg = SynthConfig {
        oracle_width: width,
        ..SynthConfig::default()
    };
    let oracle = Oracle::new(&rule.lhs, &rule.pred, cfg.sem(), &cfg.const_pool);
    let rhs = Program::compile(&rule.rhs, &oracle.vars);
    oracle.recheck(&rhs, width, samples, seed)
}

// ---------------------------------------------------------------------------
// Guards.

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredicateSet {
    pub preds: Vec<Predicate>,
    /// Set when candidates beyond `max_predicates` were dropped.
    pub truncated: bool,
}

/// Every atom over the variables of `lhs` and the constant pool.
pub fn candidate_atoms(lhs: &Pattern, cfg: &SynthConfig) -> Vec<Atom> {
    let vars = lhs.variables();
    let mut consts: Vec<i64> = cfg
        .const_pool
        .iter()
        .copied()
        .chain(lhs.constants())
        .collect();
    consts.sort_unstable();
    consts.dedup();
    let mut out = BTreeSet::new();
    for (i, (x, sx)) in vars.iter().enumerate() {
        let others = vars[i + 1..]
            .iter()
            .filter(|(_, s)| s == sx)
            .map(|(y, _)| y);
        match sx {
            Sort::Int => {
                for y in others {
                    let v = |n: &String| Operand::Var(n.clone());
                    out.insert(Atom::new(x.clone(), Relation::Eq, v(y)));
                    out.insert(Atom::new(x.clone(), Relation::Ne, v(y)));
                    for rel in [Relation::Lt, Relation::Le] {
                        out.insert(Atom::new(x.clone(), rel, v(y)));
                        out.insert(Atom::new(y.clone(), rel, v(x)));
                    }
                }
                for &c in &consts {
                    for rel in Relation::ALL {
                        out.insert(Atom::new(x.clone(), rel, Operand::Const(c)));
                    }
                }
            }
            Sort::Bool => {
                for y in others {
                    out.insert(Atom::new(x.clone(), Relation::Eq, Operand::Var(y.clone())));
                    out.insert(Atom::new(x.clone(), Relation::Ne, Operand::Var(y.clone())));
                }
                for c in [0, 1] {
                    out.insert(Atom::new(x.clone(), Relation::Eq, Operand::Const(c)));
                }
            }
            _ => {}
        }
    }
    out.into_iter().collect()
}

/// Guards with at most `max_atoms` atoms that some recorded configuration
/// makes definitely true, plus TRUE. Ordered by atom count, then by value.
pub fn enumerate_predicates(
    lhs: &Pattern,
    configs: &[BTreeMap<String, AbstractValue>],
    cfg: &SynthConfig,
) -> PredicateSet {
    let acfg = AnalysisConfig::new(cfg.sem());
    let atoms = candidate_atoms(lhs, cfg);
    let mut found: BTreeSet<(usize, Predicate)> = BTreeSet::new();
    found.insert((0, Predicate::truth()));
    for facts in configs {
        let valid: Vec<&Atom> = atoms
            .iter()
            .filter(|a| implies(facts, &Predicate::new([(*a).clone()]), &acfg) == Tri::True)
            .collect();
        let mut combos: Vec<Vec<&Atom>> = vec![vec![]];
        for size in 1..=cfg.max_atoms {
            let mut next = Vec::new();
            for c in &combos {
                let start = c
                    .last()
                    .map_or(0, |l| valid.iter().position(|v| v == l).unwrap() + 1);
                for a in &valid[start..] {
                    let mut c = c.clone();
                    c.push(a);
                    next.push(c);
                }
            }
            for c in &next {
                found.insert((size, Predicate::new(c.iter().map(|a| (*a).clone()))));
            }
            combos = next;
        }
    }
    let truncated = found.len() > cfg.max_predicates;
    let preds = found
        .into_iter()
        .take(cfg.max_predicates)
        .map(|(_, p)| p)
        .collect();
    PredicateSet { preds, truncated }
}

/// Decides `a => b` by enumerating the variables of both at the oracle width.
pub fn predicate_implies(
    a: &Predicate,
    b: &Predicate,
    sorts: &BTreeMap<String, Sort>,
    sem: &Semantics,
) -> bool {
    let mut names: Vec<String> = a
        .variables()
        .into_iter()
        .chain(b.variables())
        .map(str::to_string)
        .collect();
    names.sort();
    names.dedup();
    let vars: Vec<(String, Sort)> = names
        .iter()
        .map(|n| (n.clone(), sorts.get(n).copied().unwrap_or(Sort::Int)))
        .collect();
    let (ga, gb) = (Guard::compile(a, &vars), Guard::compile(b, &vars));
    let domain = Domain::new(vars.iter().map(|(_, s)| *s).collect(), *sem, &[]);
    let total = domain.size().expect("guard variables are scalars");
    let mut env = Vec::new();
    (0..total).all(|i| {
        domain.decode(i, &mut env);
        !ga.holds(&env) || gb.holds(&env)
    })
}

/// Guards ordered by strength, with logically equivalent guards merged.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImplicationGraph {
    /// One representative per equivalence class: the one with fewest atoms.
    pub preds: Vec<Predicate>,
    pub members: Vec<Vec<Predicate>>,
    /// `stronger[a][b]`: `a => b` and `a != b`.
    stronger: Vec<Vec<bool>>,
}

impl ImplicationGraph {
    pub fn len(&self) -> usize {
        self.preds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.preds.is_empty()
    }

    pub fn implies(&self, a: usize, b: usize) -> bool {
        self.stronger[a][b]
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let n = self.len();
        (0..n)
            .flat_map(|a| {
                (0..n)
                    .filter(move |&b| self.stronger[a][b])
                    .map(move |b| (a, b))
            })
            .collect()
    }

    pub fn index_of(&self, p: &Predicate) -> Option<usize> {
        self.members.iter().position(|m| m.contains(p))
    }
}

pub fn build_implication_graph(
    preds: &[Predicate],
    lhs: &Pattern,
    cfg: &SynthConfig,
) -> ImplicationGraph {
    let sorts: BTreeMap<String, Sort> = lhs.variables().into_iter().collect();
    let sem = cfg.sem();
    let mut uniq: Vec<Predicate> = preds.to_vec();
    uniq.sort_by(|a, b| (a.atoms().len(), a).cmp(&(b.atoms().len(), b)));
    uniq.dedup();
    let n = uniq.len();
    let imp: Vec<Vec<bool>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| i == j || predicate_implies(&uniq[i], &uniq[j], &sorts, &sem))
                .collect()
        })
        .collect();
    // Classes of mutually implying guards; the first (smallest) member represents.
    let mut class = vec![usize::MAX; n];
    let mut reps = Vec::new();
    for i in 0..n {
        if class[i] != usize::MAX {
            continue;
        }
        for j in i..n {
            if class[j] == usize::MAX && imp[i][j] && imp[j][i] {
                class[j] = reps.len();
            }
        }
        reps.push(i);
    }
    let members = reps
        .iter()
        .enumerate()
        .map(|(c, _)| {
            (0..n)
                .filter(|&j| class[j] == c)
                .map(|j| uniq[j].clone())
                .collect()
        })
        .collect();
    let stronger = reps
        .iter()
        .map(|&a| reps.iter().map(|&b| a != b && imp[a][b]).collect())
        .collect();
    ImplicationGraph {
        preds: reps.iter().map(|&r| uniq[r].clone()).collect(),
        members,
        stronger,
    }
}

// ---------------------------------------------------------------------------
// Right-hand side search.

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RhsOutcome {
    Found(Pattern),
    /// Every candidate up to the operation bound was refuted.
    Absent,
    /// The candidate budget ran out first.
    Budget,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Def {
    Var(usize),
    Const(i64),
    Temp(OpKind, Vec<usize>),
}

#[derive(Debug, Clone)]
struct Item {
    sort: Sort,
    def: Def,
}

fn families(op: OpKind) -> &'static [OpKind] {
    use OpKind::*;
    match op {
        And | Or | Not | Xor => &[And, Or, Not, Xor],
        Plus | Times | Div | Mod | Neg => &[Plus, Times, Div, Mod, Neg],
        Eq | Lt => &[Eq, Lt],
        ArrAcc => &[ArrAcc],
        ArrR => &[ArrR],
        ArrW => &[ArrW],
        ArrCreate => &[ArrCreate],
        Const | Src | Ctrl | Assert => &[],
    }
}

fn default_arity(op: OpKind) -> Option<usize> {
    use OpKind::*;
    match op {
        Not | Neg => Some(1),
        And | Or | Xor | Plus | Times | Div | Mod | Eq | Lt | ArrR => Some(2),
        ArrW => Some(3),
        _ => None,
    }
}

/// Operations a right-hand side may use: the families present in `lhs`,
/// with variadic ones restricted to the arities seen there.
fn allowed_ops(lhs: &Pattern) -> Vec<(OpKind, usize)> {
    let mut out = BTreeSet::new();
    for n in lhs.dag().nodes() {
        if n.op.is_leaf() {
            continue;
        }
        for &op in families(n.op) {
            match default_arity(op) {
                Some(a) => out.insert((op, a)),
                None if op == n.op => out.insert((op, n.operands.len())),
                None => false,
            };
        }
    }
    out.into_iter().collect()
}

struct Search<'a> {
    cfg: &'a SynthConfig,
    oracle: &'a Oracle,
    items: Vec<Item>,
    terms: usize,
    uses: Vec<usize>,
    /// `vals[item][env]` over the counterexample set.
    vals: Vec<Vec<Value>>,
    envs: Vec<Vec<Value>>,
    target: Vec<Value>,
    ops: Vec<(OpKind, usize)>,
    root_sort: Sort,
    tried: usize,
    seen: HashSet<String>,
    found: Vec<(String, String, Pattern)>,
}

impl<'a> Search<'a> {
    fn new(lhs: &Pattern, oracle: &'a Oracle, cfg: &'a SynthConfig) -> Self {
        let mut items: Vec<Item> = oracle
            .vars
            .iter()
            .enumerate()
            .map(|(i, (_, s))| Item {
                sort: *s,
                def: Def::Var(i),
            })
            .collect();
        let has = |s: Sort| lhs.dag().nodes().iter().any(|n| n.sort == s);
        if has(Sort::Int) {
            let mut consts: Vec<i64> = cfg
                .const_pool
                .iter()
                .copied()
                .chain(lhs.constants())
                .collect();
            consts
                .iter_mut()
                .for_each(|c| *c = oracle.domain.sem.wrap(*c as i128));
            consts.sort_unstable();
            consts.dedup();
            items.extend(consts.into_iter().map(|c| Item {
                sort: Sort::Int,
                def: Def::Const(c),
            }));
        }
        if has(Sort::Bool) {
            items.extend([0, 1].map(|c| Item {
                sort: Sort::Bool,
                def: Def::Const(c),
            }));
        }
        let terms = items.len();
        let mut s = Search {
            cfg,
            oracle,
            uses: vec![0; terms],
            vals: vec![Vec::new(); terms],
            items,
            terms,
            envs: Vec::new(),
            target: Vec::new(),
            ops: allowed_ops(lhs),
            root_sort: lhs.sort(),
            tried: 0,
            seen: HashSet::new(),
            found: Vec::new(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        for env in oracle.domain.draw_satisfying(&oracle.guard, 24, &mut rng) {
            s.add_env(env);
        }
        s
    }

    fn value(&self, def: &Def, sort: Sort, env: usize) -> Value {
        let sem = &self.oracle.domain.sem;
        match def {
            Def::Var(i) => self.envs[env][*i].clone(),
            Def::Const(c) => Value::Scalar(*c),
            Def::Temp(op, ops) => {
                let args: Vec<&Value> = ops.iter().map(|&o| &self.vals[o][env]).collect();
                apply_op(*op, sort, &args, sem).unwrap_or(Value::Scalar(0))
            }
        }
    }

    fn add_env(&mut self, env: Vec<Value>) {
        let mut buf = Vec::new();
        self.target
            .push(self.oracle.lhs.run(&env, &self.oracle.domain.sem, &mut buf));
        self.envs.push(env);
        let e = self.envs.len() - 1;
        for i in 0..self.items.len() {
            let v = self.value(&self.items[i].def.clone(), self.items[i].sort, e);
            self.vals[i].push(v);
        }
    }

    fn pattern(&self, root: &Item) -> Pattern {
        fn add(s: &Search, b: &mut DagBuilder, it: &Item) -> NodeId {
            match &it.def {
                Def::Var(i) => b.add(Node::source(it.sort, s.oracle.vars[*i].0.clone())),
                Def::Const(c) => b.add(Node::constant(it.sort, *c)),
                Def::Temp(op, ops) => {
                    let ids = ops.iter().map(|&o| add(s, b, &s.items[o])).collect();
                    b.add(Node::op(*op, it.sort, ids))
                }
            }
        }
        let mut b = DagBuilder::new();
        let r = add(self, &mut b, root);
        Pattern::new(b.finish(vec![r])).expect("candidate is a rooted pattern")
    }

    /// Full oracle on a candidate that matched every counterexample.
    fn confirm(&mut self, root: Item) {
        let p = self.pattern(&root);
        let key = p.to_string();
        if !self.seen.insert(key.clone()) {
            return;
        }
        let prog = Program::compile(&p, &self.oracle.vars);
        let v = self.oracle.check(&prog, self.cfg, self.cfg.seed);
        if let Some(w) = v.witness {
            self.add_env(w);
            return;
        }
        let width = self.oracle.domain.sem.width + 2;
        if self
            .oracle
            .recheck(&prog, width, self.cfg.recheck, self.cfg.seed)
        {
            self.found.push((p.signature(), key, p));
        }
    }

    fn matches(&self, def: &Def, sort: Sort) -> bool {
        (0..self.envs.len()).all(|e| self.value(def, sort, e) == self.target[e])
    }

    /// Operand tuples of `arity` over the current items, nondecreasing for
    /// commutative ops.
    fn tuples(&self, arity: usize, commutative: bool) -> Vec<Vec<usize>> {
        let n = self.items.len();
        let mut out = Vec::new();
        let mut cur = vec![0usize; arity];
        loop {
            if !commutative || cur.windows(2).all(|w| w[0] <= w[1]) {
                out.push(cur.clone());
            }
            let mut i = arity;
            loop {
                if i == 0 {
                    return out;
                }
                i -= 1;
                cur[i] += 1;
                if cur[i] < n {
                    break;
                }
                cur[i] = 0;
            }
        }
    }

    /// Enumerates chains of exactly `k` temps; returns false on budget exhaustion.
    fn level(&mut self, depth: usize, k: usize) -> bool {
        let last = depth + 1 == k;
        for (op, arity) in self.ops.clone() {
            for tuple in self.tuples(arity, op.is_commutative()) {
                let sorts: Vec<Sort> = tuple.iter().map(|&o| self.items[o].sort).collect();
                let Ok(sort) = op.result_sort(&sorts) else {
                    continue;
                };
                let def = Def::Temp(op, tuple.clone());
                if self.items[self.terms..].iter().any(|it| it.def == def) {
                    continue;
                }
                if last {
                    if sort != self.root_sort {
                        continue;
                    }
                    let unused = (self.terms..self.items.len())
                        .any(|t| self.uses[t] == 0 && !tuple.contains(&t));
                    if unused {
                        continue;
                    }
                    self.tried += 1;
                    if self.tried > self.cfg.candidate_budget {
                        return false;
                    }
                    if self.matches(&def, sort) {
                        self.confirm(Item { sort, def });
                    }
                } else {
                    let id = self.items.len();
                    let vals = (0..self.envs.len())
                        .map(|e| self.value(&def, sort, e))
                        .collect();
                    for &o in &tuple {
                        self.uses[o] += 1;
                    }
                    self.items.push(Item { sort, def });
                    self.vals.push(vals);
                    self.uses.push(0);
                    let ok = self.level(depth + 1, k);
                    self.items.pop();
                    self.vals.pop();
                    self.uses.pop();
                    for &o in &tuple {
                        self.uses[o] -= 1;
                    }
                    debug_assert_eq!(self.items.len(), id);
                    if !ok {
                        return false;
                    }
                }
            }
        }
        true
    }

    fn run(&mut self, k_max: usize) -> RhsOutcome {
        for t in 0..self.terms {
            let it = self.items[t].clone();
            if it.sort == self.root_sort && self.matches(&it.def, it.sort) {
                self.confirm(it);
            }
        }
        for k in 1..=k_max {
            if !self.found.is_empty() {
                break;
            }
            if !self.level(0, k) && self.found.is_empty() {
                return RhsOutcome::Budget;
            }
        }
        self.found.sort_by(|a, b| (&a.0, &a.1).cmp(&(&b.0, &b.1)));
        match self.found.first() {
            Some((_, _, p)) => RhsOutcome::Found(p.clone()),
            None => RhsOutcome::Absent,
        }
    }
}

/// The smallest right-hand side equal to `lhs` wherever `pred` holds, with
/// ties broken by signature.
pub fn synth_rhs(lhs: &Pattern, pred: &Predicate, cfg: &SynthConfig) -> RhsOutcome {
    let oracle = Oracle::new(lhs, pred, cfg.sem(), &cfg.const_pool);
    let k_max = cfg.k_max.min(lhs.size().saturating_sub(1));
    Search::new(lhs, &oracle, cfg).run(k_max)
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SynthReport {
    pub rules: Vec<RewriteRule>,
    /// Right-hand side searches started.
    pub calls: usize,
    pub truncated: bool,
    pub budget_hit: bool,
}

/// Keeps a rule unless another one has a strictly weaker guard and a right-hand
/// side no larger.
pub fn dominance_filter(rules: Vec<RewriteRule>, graph: &ImplicationGraph) -> Vec<RewriteRule> {
    let idx: Vec<usize> = rules
        .iter()
        .map(|r| graph.index_of(&r.pred).expect("guard in graph"))
        .collect();
    (0..rules.len())
        .filter(|&i| {
            !(0..rules.len()).any(|j| {
                graph.implies(idx[i], idx[j]) && rules[j].rhs.size() <= rules[i].rhs.size()
            })
        })
        .map(|i| rules[i].clone())
        .collect()
}

fn make_rule(lhs: &Pattern, pred: &Predicate, rhs: Pattern, cfg: &SynthConfig) -> RewriteRule {
    let mut rule = RewriteRule::new(lhs.clone(), pred.clone(), rhs, cfg.oracle_width)
        .expect("synthesized rule is well formed");
    let oracle = Oracle::new(lhs, pred, cfg.sem(), &cfg.const_pool);
    rule.exhaustive = oracle
        .domain
        .size()
        .is_some_and(|n| n <= cfg.exhaustive_cap);
    rule
}

/// Strongest-first refinement over `graph`: a guard that admits no
/// right-hand side removes every guard it implies.
pub fn refine(lhs: &Pattern, graph: &ImplicationGraph, cfg: &SynthConfig) -> SynthReport {
    refine_with(lhs, graph, cfg, |p| synth_rhs(lhs, p, cfg))
}

/// [`refine`] with a custom right-hand side search.
pub fn refine_with(
    lhs: &Pattern,
    graph: &ImplicationGraph,
    cfg: &SynthConfig,
    mut search: impl FnMut(&Predicate) -> RhsOutcome,
) -> SynthReport {
    let n = graph.len();
    let mut alive = vec![true; n];
    let mut report = SynthReport::default();
    let mut rules = Vec::new();
    while let Some(i) =
        (0..n).find(|&i| alive[i] && !(0..n).any(|j| alive[j] && graph.implies(j, i)))
    {
        report.calls += 1;
        alive[i] = false;
        match search(&graph.preds[i]) {
            RhsOutcome::Found(rhs) => rules.push(make_rule(lhs, &graph.preds[i], rhs, cfg)),
            RhsOutcome::Absent => (0..n)
                .filter(|&j| graph.implies(i, j))
                .for_each(|j| alive[j] = false),
            RhsOutcome::Budget => report.budget_hit = true,
        }
    }
    report.rules = dominance_filter(rules, graph);
    report
}

/// Reference for [`refine`]: searches every guard independently.
pub fn refine_exhaustive(
    lhs: &Pattern,
    graph: &ImplicationGraph,
    cfg: &SynthConfig,
) -> SynthReport {
    let mut report = SynthReport::default();
    let mut rules = Vec::new();
    for p in &graph.preds {
        report.calls += 1;
        match synth_rhs(lhs, p, cfg) {
            RhsOutcome::Found(rhs) => rules.push(make_rule(lhs, p, rhs, cfg)),
            RhsOutcome::Absent => {}
            RhsOutcome::Budget => report.budget_hit = true,
        }
    }
    report.rules = dominance_filter(rules, graph);
    report
}

/// Guard enumeration, implication ordering and refinement for one pattern.
pub fn synthesize_rules(
    lhs: &Pattern,
    configs: &[BTreeMap<String, AbstractValue>],
    cfg: &SynthConfig,
) -> SynthReport {
    let set = enumerate_predicates(lhs, configs, cfg);
    let graph = build_implication_graph(&set.preds, lhs, cfg);
    let mut report = refine(lhs, &graph, cfg);
    report.truncated = set.truncated;
    report
}

/// Leaf facts of annotated signatures, keyed by canonical variable name.
/// Unparsable entries are skipped.
pub fn parse_configs<'a>(
    configs: impl IntoIterator<Item = &'a str>,
) -> Vec<BTreeMap<String, AbstractValue>> {
    configs
        .into_iter()
        .filter_map(|c| parse_signature(c).ok().map(|(_, f)| f))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pat(text: &str) -> Pattern {
        Pattern::new(parse_dag(text).unwrap()).unwrap()
    }

    fn atom(l: &str, rel: Relation, r: &str) -> Atom {
        let right = match r.parse::<i64>() {
            Ok(c) => Operand::Const(c),
            Err(_) => Operand::Var(r.to_string()),
        };
        Atom::new(l, rel, right)
    }

    fn mux() -> Pattern {
        pat("0 = S INT t\n1 = S INT c\n2 = S INT d\n3 = ARRACC INT 0 1 2\n3")
    }

    fn absorb() -> Pattern {
        pat("0 = S BOOL x\n1 = S BOOL y\n2 = OR BOOL 0 1\n3 = AND BOOL 2 0\n3")
    }

    #[test]
    fn absorption_under_true() {
        let cfg = SynthConfig::default();
        let out = synth_rhs(&absorb(), &Predicate::truth(), &cfg);
        let RhsOutcome::Found(rhs) = out else {
            panic!("{out:?}")
        };
        assert_eq!(rhs.to_string(), "(S:x:BOOL)");
        let r = synthesize_rules(&absorb(), &[], &cfg);
        assert_eq!(r.rules.len(), 1);
        assert!(r.rules[0].pred.is_true());
    }

    #[test]
    fn mux_needs_equal_choices() {
        let cfg = SynthConfig::default();
        let eq = Predicate::new([atom("c", Relation::Eq, "d")]);
        let RhsOutcome::Found(rhs) = synth_rhs(&mux(), &eq, &cfg) else {
            panic!()
        };
        assert_eq!(rhs.to_string(), "(S:c:INT)");
        assert_eq!(
            synth_rhs(&mux(), &Predicate::truth(), &cfg),
            RhsOutcome::Absent
        );
        let g = build_implication_graph(&[eq.clone(), Predicate::truth()], &mux(), &cfg);
        let r = refine(&mux(), &g, &cfg);
        assert_eq!(r.rules.len(), 1);
        assert_eq!(r.rules[0].pred, eq);
    }

    #[test]
    fn or_of_comparisons() {
        let p = pat("0 = S INT a\n1 = S INT b\n2 = S INT d\n3 = LT BOOL 0 1\n4 = LT BOOL 0 2\n5 = OR BOOL 3 4\n5");
        let cfg = SynthConfig::default();
        let lt = Predicate::new([atom("b", Relation::Lt, "d")]);
        let RhsOutcome::Found(rhs) = synth_rhs(&p, &lt, &cfg) else {
            panic!()
        };
        assert_eq!(rhs.to_string(), "(LT|(S:a:INT)|(S:d:INT)|)");
    }

    #[test]
    fn predicates_follow_facts() {
        let cfg = SynthConfig::default();
        let facts: BTreeMap<String, AbstractValue> = [
            ("c".to_string(), AbstractValue::singleton(5)),
            ("d".to_string(), AbstractValue::singleton(5)),
        ]
        .into();
        let set = enumerate_predicates(&mux(), &[facts], &cfg);
        assert!(set
            .preds
            .contains(&Predicate::new([atom("c", Relation::Eq, "d")])));
        assert!(set.preds.contains(&Predicate::truth()));
        assert!(!set
            .preds
            .contains(&Predicate::new([atom("c", Relation::Lt, "d")])));
        let none = enumerate_predicates(&mux(), &[], &cfg);
        assert_eq!(none.preds, vec![Predicate::truth()]);
    }

    #[test]
    fn implication_edges() {
        let cfg = SynthConfig::default();
        let p = pat("0 = S INT x\n1 = S INT y\n2 = S INT z\n3 = PLUS INT 0 1\n4 = PLUS INT 3 2\n4");
        let a = Predicate::new([atom("x", Relation::Eq, "y"), atom("x", Relation::Lt, "z")]);
        let b = Predicate::new([atom("x", Relation::Lt, "z")]);
        let g = build_implication_graph(&[a.clone(), b.clone(), Predicate::truth()], &p, &cfg);
        let (ia, ib, it) = (
            g.index_of(&a).unwrap(),
            g.index_of(&b).unwrap(),
            g.index_of(&Predicate::truth()).unwrap(),
        );
        assert!(g.implies(ia, ib) && g.implies(ib, it) && g.implies(ia, it));
        assert!(!g.implies(ib, ia) && !g.implies(it, ib));

        let e = Predicate::new([atom("x", Relation::Eq, "0")]);
        let le = Predicate::new([atom("x", Relation::Le, "0")]);
        let g = build_implication_graph(&[e.clone(), le.clone()], &p, &cfg);
        assert_eq!(
            g.edges(),
            vec![(g.index_of(&e).unwrap(), g.index_of(&le).unwrap())]
        );

        let lt = Predicate::new([atom("x", Relation::Lt, "y")]);
        let gt = Predicate::new([atom("y", Relation::Lt, "x")]);
        assert!(build_implication_graph(&[lt, gt], &p, &cfg)
            .edges()
            .is_empty());

        // x <= y and y <= x together are x = y.
        let both = Predicate::new([atom("x", Relation::Le, "y"), atom("y", Relation::Le, "x")]);
        let eq = Predicate::new([atom("x", Relation::Eq, "y")]);
        let g = build_implication_graph(&[both.clone(), eq.clone()], &p, &cfg);
        assert_eq!(g.preds, vec![eq]);
        assert_eq!(g.members[0].len(), 2);
    }

    #[test]
    fn verifier_finds_counterexamples() {
        let lhs = pat("0 = S BOOL x\n1 = S BOOL y\n2 = AND BOOL 0 1\n2");
        let rhs = pat("0 = S BOOL x\n0");
        let bogus = RewriteRule::new(lhs, Predicate::truth(), rhs, 4).unwrap();
        assert!(!verify_rule(&bogus, 4));
        let cfg = SynthConfig::default();
        let v = check_rule(&bogus, &cfg.sem(), &cfg);
        assert_eq!(v.witness, Some(vec![Value::Scalar(1), Value::Scalar(0)]));
    }

    #[test]
    fn nested_or_absorption_verifies() {
        let lhs = pat(
            "0 = S BOOL N_3\n1 = S BOOL N_4\n2 = S BOOL N_2\n3 = S BOOL N_1\n4 = OR BOOL 0 1\n5 = OR BOOL 4 2\n6 = OR BOOL 5 3\n7 = AND BOOL 6 1\n7",
        );
        let rhs = pat("0 = S BOOL N_4\n0");
        let rule = RewriteRule::new(lhs, Predicate::truth(), rhs, 1).unwrap();
        let cfg = SynthConfig {
            oracle_width: 1,
            ..Default::default()
        };
        let v = check_rule(&rule, &cfg.sem(), &cfg);
        assert!(v.holds && v.exhaustive);
        assert_eq!(v.checked, 16);
    }

    #[test]
    fn aux_round_trip() {
        let lhs = mux();
        let rhs = pat("0 = S INT c\n0");
        let pred = Predicate::new([atom("c", Relation::Eq, "d"), atom("t", Relation::Le, "0")]);
        let rule = RewriteRule::new(lhs, pred, rhs, 4).unwrap();
        let aux = rule.to_aux();
        assert!(aux.d.starts_with("0 = S INT t\n1 = S INT c\n2 = S INT d\n"));
        assert!(aux.f.ends_with("\n1\n"));
        assert_eq!(RewriteRule::from_aux(&aux, 4).unwrap(), rule);

        let t = RewriteRule::new(absorb(), Predicate::truth(), pat("0 = S BOOL x\n0"), 4).unwrap();
        let aux = t.to_aux();
        assert_eq!(aux.p, "0 = S BOOL x\n1 = S BOOL y\n2 = CONST BIT 1\n2\n");
        assert_eq!(RewriteRule::from_aux(&aux, 4).unwrap(), t);
    }

    #[test]
    fn rejects_malformed_rules() {
        assert!(RewriteRule::new(absorb(), Predicate::truth(), absorb(), 4).is_err());
        assert!(RewriteRule::new(absorb(), Predicate::truth(), pat("0 = S BOOL q\n0"), 4).is_err());
        assert!(RewriteRule::new(absorb(), Predicate::truth(), pat("0 = S INT x\n0"), 4).is_err());
    }

    #[test]
    fn tuples_respect_commutativity() {
        let p = absorb();
        let cfg = SynthConfig::default();
        let oracle = Oracle::new(&p, &Predicate::truth(), cfg.sem(), &cfg.const_pool);
        let s = Search::new(&p, &oracle, &cfg);
        // x, y, false, true
        assert_eq!(s.tuples(2, true).len(), 10);
        assert_eq!(s.tuples(2, false).len(), 16);
    }
}
