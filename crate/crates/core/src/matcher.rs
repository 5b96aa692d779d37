//! Compiled matching of many rule left-hand sides at once.
//!
//! Each left-hand side is flattened into a preorder sequence of node tests.
//! Sequences are merged into a trie per root operation, so rules with a
//! common prefix share their tests and rules with the same left-hand side
//! share the whole path. Every operand ordering of every commutative node is
//! compiled as its own sequence.
//!
//! Guards are discharged per match: an equality between two variables bound
//! to the same node holds by identity, every other atom must be definitely
//! true under the analysis facts of the bound nodes.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use thiserror::Error;

use crate::absint::{implies, AbstractValue, AnalysisConfig, NodeSource, Tri};
use crate::dag::{NodeId, OpKind, Sort};
use crate::eval::Semantics;
use crate::pattern::Pattern;
use crate::predicate::{Operand, Predicate, Relation};
use crate::synth::{AuxFiles, RewriteRule};

const MAGIC: &[u8; 8] = b"SGMATCH\0";
const VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MatcherError {
    #[error("rule {0} appears twice in the order")]
    DuplicateRule(usize),
    #[error("order references unknown rule {0}")]
    UnknownRule(usize),
    #[error("not a matcher file")]
    BadMagic,
    #[error("unsupported matcher format version {0}")]
    Version(u32),
    #[error("matcher file is truncated")]
    Truncated,
    #[error("corrupt matcher file: {0}")]
    Corrupt(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Test {
    Op(OpKind, Sort, usize),
    Bind(Sort),
    /// The subject node equals the one seen at this earlier position.
    Same(usize),
    Const(Sort, i64),
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Leaf {
    rule: usize,
    /// Variable name and the sequence position that binds it.
    vars: Vec<(String, usize)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
struct NetNode {
    children: Vec<(Test, usize)>,
    leaves: Vec<Leaf>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Match {
    pub rule: usize,
    pub binding: BTreeMap<String, NodeId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Matcher {
    rules: Vec<RewriteRule>,
    /// Rule ids in priority order; only these are compiled.
    order: Vec<usize>,
    rank: Vec<Option<usize>>,
    roots: BTreeMap<OpKind, usize>,
    net: Vec<NetNode>,
    analysis: AnalysisConfig,
}

/// Tests in preorder, with the position each variable binds at.
type Sequence = (Vec<Test>, Vec<(String, usize)>);

/// Preorder test sequences of `lhs`, one per commutative ordering.
fn sequences(lhs: &Pattern) -> Vec<Sequence> {
    let dag = lhs.dag();
    let comm: Vec<NodeId> = (0..dag.len())
        .filter(|&i| dag.node(i).op.is_commutative() && dag.node(i).operands.len() == 2)
        .collect();
    let mut out: BTreeSet<Sequence> = BTreeSet::new();
    for mask in 0u64..(1u64 << comm.len()) {
        let flipped = |id: NodeId| {
            comm.iter()
                .position(|&c| c == id)
                .is_some_and(|k| mask >> k & 1 == 1)
        };
        let mut tests = Vec::new();
        let mut vars = Vec::new();
        let mut first: HashMap<NodeId, usize> = HashMap::new();
        let mut stack = vec![lhs.root()];
        while let Some(id) = stack.pop() {
            let pos = tests.len();
            if let Some(&p) = first.get(&id) {
                tests.push(Test::Same(p));
                continue;
            }
            first.insert(id, pos);
            let n = dag.node(id);
            match n.op {
                OpKind::Src | OpKind::Ctrl => {
                    tests.push(Test::Bind(n.sort));
                    vars.push((n.name().unwrap_or_default().to_string(), pos));
                }
                OpKind::Const => tests.push(Test::Const(n.sort, n.const_value().unwrap_or(0))),
                op => {
                    tests.push(Test::Op(op, n.sort, n.operands.len()));
                    let mut ops = n.operands.clone();
                    if flipped(id) {
                        ops.reverse();
                    }
                    stack.extend(ops.into_iter().rev());
                }
            }
        }
        vars.sort();
        out.insert((tests, vars));
    }
    out.into_iter().collect()
}

/// True when every atom of `pred` holds for `binding`.
pub fn discharge(
    pred: &Predicate,
    binding: &BTreeMap<String, NodeId>,
    facts: &[AbstractValue],
    cfg: &AnalysisConfig,
) -> bool {
    pred.atoms().iter().all(|a| {
        let l = binding[&a.left];
        let mut env = BTreeMap::from([(a.left.clone(), facts[l].clone())]);
        if let Operand::Var(r) = &a.right {
            let rn = binding[r];
            if rn == l {
                return matches!(a.rel, Relation::Eq | Relation::Le);
            }
            env.insert(r.clone(), facts[rn].clone());
        }
        implies(&env, &Predicate::new([a.clone()]), cfg) == Tri::True
    })
}

impl Matcher {
    /// Compiles `rules`; `order` lists the rule ids to use, highest priority
    /// first (all rules in their given order when `None`).
    pub fn compile(
        rules: &[RewriteRule],
        order: Option<&[usize]>,
    ) -> Result<Matcher, MatcherError> {
        let order: Vec<usize> = order.map_or_else(|| (0..rules.len()).collect(), <[usize]>::to_vec);
        let mut rank = vec![None; rules.len()];
        for (r, &id) in order.iter().enumerate() {
            match rank.get(id) {
                None => return Err(MatcherError::UnknownRule(id)),
                Some(Some(_)) => return Err(MatcherError::DuplicateRule(id)),
                Some(None) => rank[id] = Some(r),
            }
        }
        // Stored in the exact shape they are serialized in.
        let rules: Vec<RewriteRule> = rules
            .iter()
            .map(|r| {
                let mut n = RewriteRule::from_aux(&r.to_aux(), r.verified_bound)
                    .expect("aux form of a valid rule");
                n.exhaustive = r.exhaustive;
                n
            })
            .collect();
        let mut m = Matcher {
            rules,
            order,
            rank,
            roots: BTreeMap::new(),
            net: Vec::new(),
            analysis: AnalysisConfig::default(),
        };
        for &id in &m.order.clone() {
            for (tests, vars) in sequences(&m.rules[id].lhs) {
                let Test::Op(op, ..) = tests[0] else { continue };
                let mut cur = match m.roots.get(&op) {
                    Some(&r) => r,
                    None => {
                        m.net.push(NetNode::default());
                        m.roots.insert(op, m.net.len() - 1);
                        m.net.len() - 1
                    }
                };
                for t in tests {
                    cur = match m.net[cur].children.iter().find(|(ct, _)| *ct == t) {
                        Some(&(_, c)) => c,
                        None => {
                            m.net.push(NetNode::default());
                            let c = m.net.len() - 1;
                            m.net[cur].children.push((t, c));
                            c
                        }
                    };
                }
                m.net[cur].leaves.push(Leaf { rule: id, vars });
            }
        }
        Ok(m)
    }

    /// Facts passed to [`Matcher::match_at`] are interpreted under `sem`.
    pub fn with_semantics(mut self, sem: Semantics) -> Self {
        self.analysis = AnalysisConfig::new(sem);
        self
    }

    pub fn analysis(&self) -> &AnalysisConfig {
        &self.analysis
    }

    pub fn rules(&self) -> &[RewriteRule] {
        &self.rules
    }

    pub fn rule(&self, id: usize) -> &RewriteRule {
        &self.rules[id]
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Root operations that have a net.
    pub fn root_ops(&self) -> Vec<OpKind> {
        self.roots.keys().copied().collect()
    }

    /// Number of test nodes in the net.
    pub fn net_size(&self) -> usize {
        self.net.iter().map(|n| n.children.len()).sum()
    }

    /// Number of rule entries at net leaves.
    pub fn leaf_entries(&self) -> usize {
        self.net.iter().map(|n| n.leaves.len()).sum()
    }

    /// Every rule whose left-hand side matches at `node` and whose guard is
    /// discharged, by priority and then binding.
    pub fn match_at<S: NodeSource>(
        &self,
        src: &S,
        node: NodeId,
        facts: &[AbstractValue],
    ) -> Vec<Match> {
        let Some(&root) = self.roots.get(&src.get(node).op) else {
            return Vec::new();
        };
        let mut raw = BTreeSet::new();
        let mut stack = vec![node];
        let mut regs = Vec::new();
        self.walk(root, src, &mut stack, &mut regs, &mut raw);
        let mut out: Vec<Match> = raw
            .into_iter()
            .filter(|m: &Match| {
                discharge(&self.rules[m.rule].pred, &m.binding, facts, &self.analysis)
            })
            .collect();
        out.sort_by(|a, b| (self.rank[a.rule], &a.binding).cmp(&(self.rank[b.rule], &b.binding)));
        out
    }

    fn walk<S: NodeSource>(
        &self,
        at: usize,
        src: &S,
        stack: &mut Vec<NodeId>,
        regs: &mut Vec<NodeId>,
        out: &mut BTreeSet<Match>,
    ) {
        let net = &self.net[at];
        for leaf in &net.leaves {
            let binding = leaf
                .vars
                .iter()
                .map(|(v, p)| (v.clone(), regs[*p]))
                .collect();
            out.insert(Match {
                rule: leaf.rule,
                binding,
            });
        }
        let Some(subj) = stack.pop() else { return };
        let n = src.get(subj);
        for (test, child) in &net.children {
            let ok = match *test {
                Test::Op(op, sort, arity) => {
                    n.op == op && n.sort == sort && n.operands.len() == arity
                }
                Test::Bind(sort) => n.sort == sort,
                Test::Same(p) => regs[p] == subj,
                Test::Const(sort, v) => {
                    n.op == OpKind::Const && n.sort == sort && n.const_value() == Some(v)
                }
            };
            if !ok {
                continue;
            }
            let pushed = if matches!(test, Test::Op(..)) {
                n.operands.len()
            } else {
                0
            };
            if pushed > 0 {
                stack.extend(n.operands.iter().rev());
            }
            regs.push(subj);
            self.walk(*child, src, stack, regs, out);
            regs.pop();
            stack.truncate(stack.len() - pushed);
        }
        stack.push(subj);
    }

    pub fn serialize(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.u32(VERSION);
        w.u32(self.analysis.sem.width);
        w.u32(self.analysis.sem.array_len as u32);
        w.0.push(self.analysis.sem.strict as u8);
        w.u32(self.analysis.list_cap as u32);
        w.u32(self.rules.len() as u32);
        for r in &self.rules {
            let aux = r.to_aux();
            w.str(&aux.d);
            w.str(&aux.f);
            w.str(&aux.p);
            w.u32(r.verified_bound);
            w.0.push(r.exhaustive as u8);
        }
        w.u32(self.order.len() as u32);
        for &o in &self.order {
            w.u32(o as u32);
        }
        w.u32(self.roots.len() as u32);
        for (op, &r) in &self.roots {
            w.str(op.token());
            w.u32(r as u32);
        }
        w.u32(self.net.len() as u32);
        for n in &self.net {
            w.u32(n.children.len() as u32);
            for (t, c) in &n.children {
                match *t {
                    Test::Op(op, sort, arity) => {
                        w.0.push(0);
                        w.str(op.token());
                        w.str(sort.token());
                        w.u32(arity as u32);
                    }
                    Test::Bind(sort) => {
                        w.0.push(1);
                        w.str(sort.token());
                    }
                    Test::Same(p) => {
                        w.0.push(2);
                        w.u32(p as u32);
                    }
                    Test::Const(sort, v) => {
                        w.0.push(3);
                        w.str(sort.token());
                        w.0.extend_from_slice(&v.to_le_bytes());
                    }
                }
                w.u32(*c as u32);
            }
            w.u32(n.leaves.len() as u32);
            for l in &n.leaves {
                w.u32(l.rule as u32);
                w.u32(l.vars.len() as u32);
                for (v, p) in &l.vars {
                    w.str(v);
                    w.u32(*p as u32);
                }
            }
        }
        w.0
    }

    pub fn deserialize(bytes: &[u8]) -> Result<Matcher, MatcherError> {
        let mut r = Reader { b: bytes, pos: 0 };
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(if bytes.len() < MAGIC.len() && MAGIC.starts_with(bytes) {
                MatcherError::Truncated
            } else {
                MatcherError::BadMagic
            });
        }
        r.pos = MAGIC.len();
        let version = r.u32()?;
        if version != VERSION {
            return Err(MatcherError::Version(version));
        }
        let sem = Semantics {
            width: r.u32()?,
            array_len: r.u32()? as usize,
            strict: r.byte()? != 0,
        };
        if !(1..=62).contains(&sem.width) {
            return Err(corrupt("width"));
        }
        let analysis = AnalysisConfig {
            sem,
            list_cap: r.u32()? as usize,
        };
        let nrules = r.len()?;
        let mut rules = Vec::with_capacity(nrules);
        for i in 0..nrules {
            let files = AuxFiles {
                d: r.str()?,
                f: r.str()?,
                p: r.str()?,
            };
            let bound = r.u32()?;
            let mut rule = RewriteRule::from_aux(&files, bound)
                .map_err(|e| corrupt(&format!("rule {i}: {e}")))?;
            rule.exhaustive = r.byte()? != 0;
            rules.push(rule);
        }
        let norder = r.len()?;
        let mut order = Vec::with_capacity(norder);
        let mut rank = vec![None; nrules];
        for k in 0..norder {
            let id = r.u32()? as usize;
            match rank.get(id) {
                Some(None) => rank[id] = Some(k),
                _ => return Err(corrupt("order")),
            }
            order.push(id);
        }
        let nroots = r.len()?;
        let mut roots = BTreeMap::new();
        let mut root_ids = Vec::new();
        for _ in 0..nroots {
            let op: OpKind = r.str()?.parse().map_err(|_| corrupt("op"))?;
            let id = r.u32()? as usize;
            roots.insert(op, id);
            root_ids.push(id);
        }
        let nnet = r.len()?;
        let mut net = Vec::with_capacity(nnet);
        for _ in 0..nnet {
            let nchildren = r.len()?;
            let mut children = Vec::with_capacity(nchildren);
            for _ in 0..nchildren {
                let t = match r.byte()? {
                    0 => Test::Op(r.op()?, r.sort()?, r.u32()? as usize),
                    1 => Test::Bind(r.sort()?),
                    2 => Test::Same(r.u32()? as usize),
                    3 => {
                        let sort = r.sort()?;
                        let raw = r.take(8)?;
                        Test::Const(
                            sort,
                            i64::from_le_bytes(raw.try_into().expect("eight bytes")),
                        )
                    }
                    _ => return Err(corrupt("test tag")),
                };
                children.push((t, r.u32()? as usize));
            }
            let nleaves = r.len()?;
            let mut leaves = Vec::with_capacity(nleaves);
            for _ in 0..nleaves {
                let rule = r.u32()? as usize;
                if rule >= nrules || rank[rule].is_none() {
                    return Err(corrupt("leaf rule"));
                }
                let nvars = r.len()?;
                let mut vars = Vec::with_capacity(nvars);
                for _ in 0..nvars {
                    vars.push((r.str()?, r.u32()? as usize));
                }
                leaves.push(Leaf { rule, vars });
            }
            net.push(NetNode { children, leaves });
        }
        if r.pos != bytes.len() {
            return Err(corrupt("trailing bytes"));
        }
        let in_range = |i: usize| i < net.len();
        if !root_ids.iter().all(|&i| in_range(i))
            || !net
                .iter()
                .all(|n| n.children.iter().all(|(_, c)| in_range(*c)))
        {
            return Err(corrupt("net index"));
        }
        Ok(Matcher {
            rules,
            order,
            rank,
            roots,
            net,
            analysis,
        })
    }
}

fn corrupt(what: &str) -> MatcherError {
    MatcherError::Corrupt(what.to_string())
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.0.extend_from_slice(s.as_bytes());
    }
}

struct Reader<'a> {
    b: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], MatcherError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.b.len())
            .ok_or(MatcherError::Truncated)?;
        let s = &self.b[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn byte(&mut self) -> Result<u8, MatcherError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, MatcherError> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("four bytes"),
        ))
    }

    /// A count, sanity-checked against the remaining input.
    fn len(&mut self) -> Result<usize, MatcherError> {
        let n = self.u32()? as usize;
        if n > self.b.len() - self.pos {
            return Err(MatcherError::Truncated);
        }
        Ok(n)
    }

    fn str(&mut self) -> Result<String, MatcherError> {
        let n = self.len()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| corrupt("utf-8"))
    }

    fn op(&mut self) -> Result<OpKind, MatcherError> {
        self.str()?.parse().map_err(|_| corrupt("op"))
    }

    fn sort(&mut self) -> Result<Sort, MatcherError> {
        self.str()?.parse().map_err(|_| corrupt("sort"))
    }
}

/// Reference matcher: tries each rule on its own by backtracking over both
/// operand orders of commutative nodes.
pub fn naive_match<S: NodeSource>(
    rules: &[RewriteRule],
    order: &[usize],
    src: &S,
    node: NodeId,
    facts: &[AbstractValue],
    cfg: &AnalysisConfig,
) -> Vec<Match> {
    type Assign = BTreeMap<NodeId, NodeId>;
    fn go<S: NodeSource>(lhs: &Pattern, l: NodeId, s: NodeId, src: &S, a: Assign) -> Vec<Assign> {
        if let Some(&prev) = a.get(&l) {
            return if prev == s { vec![a] } else { Vec::new() };
        }
        let (ln, sn) = (lhs.dag().node(l), src.get(s));
        let mut a = a;
        a.insert(l, s);
        match ln.op {
            OpKind::Src | OpKind::Ctrl => {
                if ln.sort == sn.sort {
                    vec![a]
                } else {
                    Vec::new()
                }
            }
            OpKind::Const => {
                if sn.op == OpKind::Const
                    && sn.sort == ln.sort
                    && sn.const_value() == ln.const_value()
                {
                    vec![a]
                } else {
                    Vec::new()
                }
            }
            op => {
                if sn.op != op || sn.sort != ln.sort || sn.operands.len() != ln.operands.len() {
                    return Vec::new();
                }
                let mut orders = vec![sn.operands.clone()];
                if op.is_commutative() && sn.operands.len() == 2 {
                    orders.push(vec![sn.operands[1], sn.operands[0]]);
                }
                let mut out = Vec::new();
                for so in orders {
                    let mut sols = vec![a.clone()];
                    for (&lc, &sc) in ln.operands.iter().zip(&so) {
                        sols = sols
                            .into_iter()
                            .flat_map(|x| go(lhs, lc, sc, src, x))
                            .collect();
                    }
                    out.extend(sols);
                }
                out
            }
        }
    }
    let mut out = Vec::new();
    for &id in order {
        let rule = &rules[id];
        let lhs = &rule.lhs;
        let mut found = BTreeSet::new();
        for a in go(lhs, lhs.root(), node, src, Assign::new()) {
            let binding: BTreeMap<String, NodeId> = a
                .iter()
                .filter_map(|(&l, &s)| lhs.dag().node(l).name().map(|n| (n.to_string(), s)))
                .collect();
            if discharge(&rule.pred, &binding, facts, cfg) {
                found.insert(binding);
            }
        }
        out.extend(found.into_iter().map(|binding| Match { rule: id, binding }));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::absint::analyze;
    use crate::dag::parse_dag;
    use crate::predicate::Atom;

    fn pat(text: &str) -> Pattern {
        Pattern::new(parse_dag(text).unwrap()).unwrap()
    }

    fn mux_rule() -> RewriteRule {
        let lhs = pat("0 = S INT t\n1 = S INT c\n2 = S INT d\n3 = ARRACC INT 0 1 2\n3");
        let pred = Predicate::new([Atom::new("c", Relation::Eq, Operand::Var("d".into()))]);
        RewriteRule::new(lhs, pred, pat("0 = S INT c\n0"), 4).unwrap()
    }

    fn or_lt_rule() -> RewriteRule {
        let lhs = pat("0 = S INT a\n1 = S INT b\n2 = S INT d\n3 = LT BOOL 0 1\n4 = LT BOOL 0 2\n5 = OR BOOL 3 4\n5");
        let pred = Predicate::new([Atom::new("b", Relation::Lt, Operand::Var("d".into()))]);
        let rhs = pat("0 = S INT a\n1 = S INT d\n2 = LT BOOL 0 1\n2");
        RewriteRule::new(lhs, pred, rhs, 4).unwrap()
    }

    fn facts(d: &crate::dag::FormulaDag) -> Vec<AbstractValue> {
        analyze(d, &BTreeMap::new(), &AnalysisConfig::default())
    }

    #[test]
    fn empty_matcher_matches_nothing() {
        let m = Matcher::compile(&[], None).unwrap();
        let d = parse_dag("0 = S BOOL a\n1 = NOT BOOL 0\n1").unwrap();
        assert!(m.match_at(&d, 1, &facts(&d)).is_empty());
        assert_eq!(Matcher::deserialize(&m.serialize()).unwrap(), m);
    }

    #[test]
    fn root_partition() {
        let m = Matcher::compile(&[mux_rule(), or_lt_rule()], None).unwrap();
        assert_eq!(m.root_ops(), vec![OpKind::Or, OpKind::ArrAcc]);
    }

    #[test]
    fn mux_matches_by_identity() {
        let m = Matcher::compile(&[mux_rule()], None).unwrap();
        let d = parse_dag("0 = S INT t\n1 = S INT c\n2 = ARRACC INT 0 1 1\n2").unwrap();
        let got = m.match_at(&d, 2, &facts(&d));
        assert_eq!(got.len(), 1);
        let b = &got[0].binding;
        assert_eq!((b["t"], b["c"], b["d"]), (0, 1, 1));
        let d =
            parse_dag("0 = S INT t\n1 = S INT c\n2 = S INT e\n3 = ARRACC INT 0 1 2\n3").unwrap();
        assert!(m.match_at(&d, 3, &facts(&d)).is_empty());
    }

    #[test]
    fn or_lt_matches_with_facts() {
        let m = Matcher::compile(&[or_lt_rule()], None).unwrap();
        let d = parse_dag(
            "0 = S INT a\n1 = CONST INT 1\n2 = CONST INT 3\n3 = LT BOOL 0 1\n4 = LT BOOL 0 2\n5 = OR BOOL 4 3\n5",
        )
        .unwrap();
        let f = facts(&d);
        let got = m.match_at(&d, 5, &f);
        // Only the binding with b = 1 and d = 3 discharges b < d.
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].binding["b"], 1);
        let naive = naive_match(m.rules(), m.order(), &d, 5, &f, m.analysis());
        assert_eq!(naive, got);
    }

    #[test]
    fn shared_lhs_shares_the_path() {
        let r = mux_rule();
        let mut r2 = r.clone();
        r2.pred = Predicate::new([
            Atom::new("c", Relation::Eq, Operand::Var("d".into())),
            Atom::new("t", Relation::Le, Operand::Const(0)),
        ]);
        let one = Matcher::compile(std::slice::from_ref(&r), None).unwrap();
        let two = Matcher::compile(&[r.clone(), r2], Some(&[1, 0])).unwrap();
        assert_eq!(one.net_size(), two.net_size());
        assert_eq!(two.leaf_entries(), 2);
        let d = parse_dag("0 = CONST INT -1\n1 = S INT c\n2 = ARRACC INT 0 1 1\n2").unwrap();
        let got: Vec<usize> = two
            .match_at(&d, 2, &facts(&d))
            .iter()
            .map(|m| m.rule)
            .collect();
        assert_eq!(got, vec![1, 0]);
    }

    #[test]
    fn order_errors() {
        assert_eq!(
            Matcher::compile(&[mux_rule()], Some(&[0, 0])).unwrap_err(),
            MatcherError::DuplicateRule(0)
        );
        assert_eq!(
            Matcher::compile(&[mux_rule()], Some(&[3])).unwrap_err(),
            MatcherError::UnknownRule(3)
        );
    }

    #[test]
    fn serialization_round_trip_and_errors() {
        let m = Matcher::compile(&[mux_rule(), or_lt_rule()], Some(&[1, 0])).unwrap();
        let bytes = m.serialize();
        assert_eq!(Matcher::deserialize(&bytes).unwrap(), m);
        for cut in [0, 3, 8, 12, bytes.len() / 2, bytes.len() - 1] {
            assert!(Matcher::deserialize(&bytes[..cut]).is_err(), "cut at {cut}");
        }
        let mut bad = bytes.clone();
        bad[8] = 9;
        assert_eq!(
            Matcher::deserialize(&bad).unwrap_err(),
            MatcherError::Version(9)
        );
        assert_eq!(
            Matcher::deserialize(b"notamatcherfile").unwrap_err(),
            MatcherError::BadMagic
        );
    }

    #[test]
    fn commutative_variants_are_all_found() {
        let lhs = pat("0 = S BOOL x\n1 = S BOOL y\n2 = OR BOOL 0 1\n3 = AND BOOL 2 0\n3");
        let rule = RewriteRule::new(lhs, Predicate::truth(), pat("0 = S BOOL x\n0"), 4).unwrap();
        let m = Matcher::compile(std::slice::from_ref(&rule), None).unwrap();
        for text in [
            "0 = S BOOL p\n1 = S BOOL q\n2 = OR BOOL 0 1\n3 = AND BOOL 2 0\n3",
            "0 = S BOOL p\n1 = S BOOL q\n2 = OR BOOL 1 0\n3 = AND BOOL 0 2\n3",
        ] {
            let d = crate::hashcons::hash_cons(&parse_dag(text).unwrap());
            let f = facts(&d);
            let got = m.match_at(&d, 3, &f);
            assert_eq!(got.len(), 1, "{text}");
            assert_eq!(
                got,
                naive_match(m.rules(), m.order(), &d, 3, &f, m.analysis())
            );
        }
    }
}
