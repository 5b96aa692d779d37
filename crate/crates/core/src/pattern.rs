//! Single-rooted patterns and their canonical signature strings.
//!
//! A signature is a parenthesized tree encoding such as
//! `(AND|(AND|(S:N_3:BOOL)|(S:N_4:BOOL)|)|(EQ|(S:N_1:INT)|(S:N_2:INT)|)|)`.
//! Leaves are numbered breadth-first from the root, visiting the children of
//! commutative nodes in descending order of their unnumbered shape; children
//! of commutative nodes are printed in ascending order. When two children of
//! a commutative node have the same shape, both visit orders are tried and the
//! smallest resulting string wins, which makes the encoding invariant under
//! commutative operand reordering.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;

use thiserror::Error;

use crate::absint::AbstractValue;
use crate::dag::{FormulaDag, Node, NodeId, OpKind, Payload, Sort};
use crate::hashcons::DagBuilder;

/// Tie bits beyond this are not enumerated; the default visit order is used.
const MAX_TIE_BITS: usize = 12;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PatternError {
    #[error("pattern needs exactly one root, found {0}")]
    Roots(usize),
    #[error("node {0} is not reachable from the root")]
    Unreachable(NodeId),
    #[error("node {0}: {1} leaves are not allowed in patterns")]
    Leaf(NodeId, OpKind),
    #[error("bad signature at byte {pos}: {msg}")]
    Signature { pos: usize, msg: String },
}

/// A rooted DAG whose leaves are variables (S nodes) or constants.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Pattern {
    dag: FormulaDag,
}

impl Pattern {
    pub fn new(dag: FormulaDag) -> Result<Self, PatternError> {
        if dag.roots().len() != 1 {
            return Err(PatternError::Roots(dag.roots().len()));
        }
        if let Some(id) = dag.reachable().iter().position(|&l| !l) {
            return Err(PatternError::Unreachable(id));
        }
        if dag.nodes().iter().any(|n| n.op == OpKind::Ctrl) {
            // Controls act as ordinary variables inside patterns.
            let nodes = dag
                .nodes()
                .iter()
                .map(|n| {
                    if n.op == OpKind::Ctrl {
                        Node {
                            op: OpKind::Src,
                            ..n.clone()
                        }
                    } else {
                        n.clone()
                    }
                })
                .collect();
            return Pattern::new(FormulaDag::from_parts(nodes, dag.roots().to_vec()));
        }
        if let Some((id, n)) = dag
            .nodes()
            .iter()
            .enumerate()
            .find(|(_, n)| n.op == OpKind::Assert)
        {
            return Err(PatternError::Leaf(id, n.op));
        }
        Ok(Pattern { dag })
    }

    pub fn dag(&self) -> &FormulaDag {
        &self.dag
    }

    pub fn root(&self) -> NodeId {
        self.dag.roots()[0]
    }

    pub fn root_node(&self) -> &Node {
        self.dag.node(self.root())
    }

    pub fn sort(&self) -> Sort {
        self.root_node().sort
    }

    /// Number of operation nodes.
    pub fn size(&self) -> usize {
        self.dag.nodes().iter().filter(|n| !n.op.is_leaf()).count()
    }

    /// Variable names and sorts, in node order.
    pub fn variables(&self) -> Vec<(String, Sort)> {
        self.dag
            .nodes()
            .iter()
            .filter(|n| n.op == OpKind::Src)
            .filter_map(|n| n.name().map(|s| (s.to_string(), n.sort)))
            .collect()
    }

    pub fn constants(&self) -> Vec<i64> {
        self.dag
            .nodes()
            .iter()
            .filter_map(|n| (n.op == OpKind::Const).then(|| n.const_value()).flatten())
            .collect()
    }

    pub fn ops(&self) -> Vec<OpKind> {
        let mut ops: Vec<OpKind> = self
            .dag
            .nodes()
            .iter()
            .map(|n| n.op)
            .filter(|o| !o.is_leaf())
            .collect();
        ops.sort();
        ops.dedup();
        ops
    }

    pub fn signature(&self) -> String {
        self.canonical_form().0
    }

    /// The signature and the canonical `N_k` name of each variable.
    pub fn canonical_form(&self) -> (String, BTreeMap<String, String>) {
        let (sig, numbering) = canonicalize(&self.dag, self.root());
        let mut names = BTreeMap::new();
        for (id, k) in numbering {
            if let Some(name) = self.dag.node(id).name() {
                names.insert(name.to_string(), format!("N_{k}"));
            }
        }
        (sig, names)
    }

    /// Signature with each variable annotated by its fact, as in static
    /// configuration files. Variables missing from `facts` are annotated `T`.
    pub fn annotated_signature(&self, facts: &BTreeMap<String, AbstractValue>) -> String {
        let (_, numbering) = canonicalize(&self.dag, self.root());
        let printer = Printer::new(&self.dag, &numbering);
        let mut out = String::new();
        printer.print(self.root(), Some(facts), &mut out);
        out
    }

    /// The same pattern with variables renamed to their canonical `N_k` names.
    pub fn canonical(&self) -> Pattern {
        let (_, names) = self.canonical_form();
        self.rename(&names)
    }

    pub fn rename(&self, names: &BTreeMap<String, String>) -> Pattern {
        let nodes = self
            .dag
            .nodes()
            .iter()
            .map(|n| match &n.payload {
                Payload::Name(s) if names.contains_key(s) => Node::source(n.sort, names[s].clone()),
                _ => n.clone(),
            })
            .collect();
        Pattern {
            dag: FormulaDag::from_parts(nodes, self.dag.roots().to_vec()),
        }
    }

    pub fn parse_signature(sig: &str) -> Result<Pattern, PatternError> {
        parse_signature(sig).map(|(p, _)| p)
    }

    pub fn to_text(&self) -> String {
        self.dag.to_text()
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let printer = Printer::named(&self.dag);
        let mut out = String::new();
        printer.print(self.root(), None, &mut out);
        f.write_str(&out)
    }
}

/// Builds the pattern spanned by `members` (operation nodes of `host`, the
/// first being the root). Operands outside the set become leaves: constants
/// stay constants, anything else becomes a variable named `v<host id>`.
/// Returns the pattern and the host node behind each variable name.
pub fn extract(host: &FormulaDag, members: &[NodeId]) -> (Pattern, BTreeMap<String, NodeId>) {
    let mut sorted: Vec<NodeId> = members.to_vec();
    sorted.sort_unstable();
    let mut b = DagBuilder::new();
    let mut map: HashMap<NodeId, NodeId> = HashMap::new();
    let mut leaves = BTreeMap::new();
    let mut leaf = |b: &mut DagBuilder, h: NodeId, map: &mut HashMap<NodeId, NodeId>| -> NodeId {
        if let Some(&id) = map.get(&h) {
            return id;
        }
        let hn = host.node(h);
        let id = if hn.op == OpKind::Const {
            b.add(hn.clone())
        } else {
            let name = format!("v{h}");
            leaves.insert(name.clone(), h);
            b.add(Node::source(hn.sort, name))
        };
        map.insert(h, id);
        id
    };
    for &h in &sorted {
        let hn = host.node(h);
        let mut operands = Vec::with_capacity(hn.operands.len());
        for &o in &hn.operands {
            let id = if sorted.binary_search(&o).is_ok() {
                map[&o]
            } else {
                leaf(&mut b, o, &mut map)
            };
            operands.push(id);
        }
        let id = b.add(Node::op(hn.op, hn.sort, operands));
        map.insert(h, id);
    }
    let root = map[&members[0]];
    let dag = b.finish(vec![root]);
    (Pattern { dag }, leaves)
}

fn shapes(dag: &FormulaDag) -> Vec<String> {
    let mut out: Vec<String> = Vec::with_capacity(dag.len());
    for n in dag.nodes() {
        let s = match n.op {
            OpKind::Src | OpKind::Ctrl => format!("(S:{})", n.sort),
            OpKind::Const => format!("(CONST:{}:{})", n.const_value().unwrap_or(0), n.sort),
            op => {
                let mut kids: Vec<&str> = n.operands.iter().map(|&o| out[o].as_str()).collect();
                if op.is_commutative() {
                    kids.sort_unstable();
                }
                let mut s = format!("({op}|");
                for k in kids {
                    s.push_str(k);
                    s.push('|');
                }
                s.push(')');
                s
            }
        };
        out.push(s);
    }
    out
}

/// Canonical signature and the BFS leaf numbering that produced it.
fn canonicalize(dag: &FormulaDag, root: NodeId) -> (String, Vec<(NodeId, usize)>) {
    let shape = shapes(dag);
    let ties: Vec<NodeId> = dag
        .nodes()
        .iter()
        .enumerate()
        .filter(|(_, n)| {
            n.op.is_commutative()
                && n.operands[0] != n.operands[1]
                && shape[n.operands[0]] == shape[n.operands[1]]
        })
        .map(|(id, _)| id)
        .take(MAX_TIE_BITS)
        .collect();
    let mut best: Option<(String, Vec<(NodeId, usize)>)> = None;
    for bits in 0u32..(1 << ties.len()) {
        let flip = |id: NodeId| {
            ties.iter()
                .position(|&t| t == id)
                .is_some_and(|k| bits >> k & 1 == 1)
        };
        let numbering = number_leaves(dag, root, &shape, &flip);
        let printer = Printer::new(dag, &numbering);
        let mut s = String::new();
        printer.print(root, None, &mut s);
        if best.as_ref().is_none_or(|(b, _)| s < *b) {
            best = Some((s, numbering));
        }
    }
    best.expect("at least one numbering")
}

fn number_leaves(
    dag: &FormulaDag,
    root: NodeId,
    shape: &[String],
    flip: &dyn Fn(NodeId) -> bool,
) -> Vec<(NodeId, usize)> {
    let mut numbering: Vec<(NodeId, usize)> = Vec::new();
    let mut queue = VecDeque::from([root]);
    while let Some(id) = queue.pop_front() {
        let n = dag.node(id);
        match n.op {
            OpKind::Src | OpKind::Ctrl => {
                if !numbering.iter().any(|&(l, _)| l == id) {
                    numbering.push((id, numbering.len() + 1));
                }
            }
            OpKind::Const => {}
            op => {
                let mut kids = n.operands.clone();
                if op.is_commutative() {
                    kids.sort_by(|a, b| shape[*b].cmp(&shape[*a]));
                    if flip(id) {
                        kids.reverse();
                    }
                }
                queue.extend(kids);
            }
        }
    }
    numbering
}

struct Printer<'a> {
    dag: &'a FormulaDag,
    names: HashMap<NodeId, String>,
    /// Canonical names are `N_k`; annotation lookups use the node's own name.
    canonical: bool,
}

impl<'a> Printer<'a> {
    fn new(dag: &'a FormulaDag, numbering: &[(NodeId, usize)]) -> Self {
        let names = numbering
            .iter()
            .map(|&(id, k)| (id, format!("N_{k}")))
            .collect();
        Printer {
            dag,
            names,
            canonical: true,
        }
    }

    fn named(dag: &'a FormulaDag) -> Self {
        let names = dag
            .nodes()
            .iter()
            .enumerate()
            .filter_map(|(id, n)| n.name().map(|s| (id, s.to_string())))
            .collect();
        Printer {
            dag,
            names,
            canonical: false,
        }
    }

    fn print(&self, id: NodeId, facts: Option<&BTreeMap<String, AbstractValue>>, out: &mut String) {
        let n = self.dag.node(id);
        match n.op {
            OpKind::Src | OpKind::Ctrl => {
                let name = self.names.get(&id).map(String::as_str).unwrap_or("?");
                out.push_str(&format!("(S:{name}:{}", n.sort));
                if let Some(f) = facts {
                    let own = n.name().unwrap_or_default();
                    let fact = f
                        .get(own)
                        .cloned()
                        .unwrap_or_else(|| AbstractValue::default_for(n.sort));
                    out.push_str(&format!(":{fact}"));
                }
                out.push(')');
            }
            OpKind::Const => out.push_str(&format!(
                "(CONST:{}:{})",
                n.const_value().unwrap_or(0),
                n.sort
            )),
            op => {
                let mut kids: Vec<(String, NodeId)> = n
                    .operands
                    .iter()
                    .map(|&o| {
                        let mut s = String::new();
                        self.print(o, None, &mut s);
                        (s, o)
                    })
                    .collect();
                if op.is_commutative() && self.canonical {
                    kids.sort();
                }
                out.push_str(&format!("({op}|"));
                for (plain, o) in kids {
                    if facts.is_some() {
                        self.print(o, facts, out);
                    } else {
                        out.push_str(&plain);
                    }
                    out.push('|');
                }
                out.push(')');
            }
        }
    }
}

/// Parses a (possibly annotated) signature into a pattern plus leaf facts.
pub fn parse_signature(
    sig: &str,
) -> Result<(Pattern, BTreeMap<String, AbstractValue>), PatternError> {
    let mut p = SigParser {
        s: sig.as_bytes(),
        pos: 0,
        b: DagBuilder::new(),
        facts: BTreeMap::new(),
    };
    let root = p.term()?;
    if p.pos != p.s.len() {
        return Err(p.err("trailing input"));
    }
    let dag = p.b.finish(vec![root]);
    Ok((Pattern::new(dag)?, p.facts))
}

struct SigParser<'a> {
    s: &'a [u8],
    pos: usize,
    b: DagBuilder,
    facts: BTreeMap<String, AbstractValue>,
}

impl SigParser<'_> {
    fn err(&self, msg: &str) -> PatternError {
        PatternError::Signature {
            pos: self.pos,
            msg: msg.to_string(),
        }
    }

    fn expect(&mut self, c: u8) -> Result<(), PatternError> {
        if self.s.get(self.pos) == Some(&c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(&format!("expected `{}`", c as char)))
        }
    }

    fn token(&mut self, stops: &[u8]) -> &str {
        let start = self.pos;
        while self.pos < self.s.len() && !stops.contains(&self.s[self.pos]) {
            self.pos += 1;
        }
        std::str::from_utf8(&self.s[start..self.pos]).unwrap_or("")
    }

    fn term(&mut self) -> Result<NodeId, PatternError> {
        self.expect(b'(')?;
        let head = self.token(b"|:)").to_string();
        match self.s.get(self.pos) {
            Some(b':') => self.leaf(&head),
            Some(b'|') => {
                let op: OpKind = head
                    .parse()
                    .map_err(|_| self.err(&format!("unknown op `{head}`")))?;
                let mut kids = Vec::new();
                while self.s.get(self.pos) == Some(&b'|') {
                    self.pos += 1;
                    if self.s.get(self.pos) == Some(&b')') {
                        break;
                    }
                    kids.push(self.term()?);
                }
                self.expect(b')')?;
                let sorts: Vec<Sort> = kids.iter().map(|&k| self.b.node(k).sort).collect();
                let sort = op.result_sort(&sorts).map_err(|m| self.err(&m))?;
                Ok(self.b.add(Node::op(op, sort, kids)))
            }
            _ => Err(self.err("expected `:` or `|`")),
        }
    }

    fn leaf(&mut self, head: &str) -> Result<NodeId, PatternError> {
        self.expect(b':')?;
        let first = self.token(b":)").to_string();
        self.expect(b':')?;
        let sort_tok = self.token(b":)").to_string();
        let sort: Sort = sort_tok
            .parse()
            .map_err(|_| self.err(&format!("unknown sort `{sort_tok}`")))?;
        let mut annotation = None;
        if self.s.get(self.pos) == Some(&b':') {
            self.pos += 1;
            let start = self.pos;
            let mut depth = 0i32;
            while self.pos < self.s.len() {
                match self.s[self.pos] {
                    b'(' => depth += 1,
                    b')' if depth == 0 => break,
                    b')' => depth -= 1,
                    _ => {}
                }
                self.pos += 1;
            }
            let text = std::str::from_utf8(&self.s[start..self.pos]).unwrap_or("");
            annotation = Some(text.parse::<AbstractValue>().map_err(|m| self.err(&m))?);
        }
        self.expect(b')')?;
        match head {
            "S" => {
                if let Some(a) = annotation {
                    self.facts.insert(first.clone(), a);
                }
                Ok(self.b.add(Node::source(sort, first)))
            }
            "CONST" => {
                let v: i64 = first.parse().map_err(|_| self.err("bad constant"))?;
                Ok(self.b.add(Node::constant(sort, v)))
            }
            _ => Err(self.err(&format!("unknown leaf `{head}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dag::parse_dag;

    fn pat(text: &str) -> Pattern {
        Pattern::new(parse_dag(text).unwrap()).unwrap()
    }

    #[test]
    fn and_of_two_sources() {
        let p = pat("0 = S BOOL a\n1 = S BOOL b\n2 = AND BOOL 0 1\n2");
        assert_eq!(p.signature(), "(AND|(S:N_1:BOOL)|(S:N_2:BOOL)|)");
        let q = pat("0 = S BOOL a\n1 = S BOOL b\n2 = AND BOOL 1 0\n2");
        assert_eq!(q.signature(), p.signature());
    }

    #[test]
    fn appendix_signatures() {
        let p = pat("0 = S BOOL b3\n1 = S BOOL b4\n2 = S INT i1\n3 = S INT i2\n\
             4 = AND BOOL 0 1\n5 = EQ BOOL 2 3\n6 = AND BOOL 4 5\n6");
        assert_eq!(
            p.signature(),
            "(AND|(AND|(S:N_3:BOOL)|(S:N_4:BOOL)|)|(EQ|(S:N_1:INT)|(S:N_2:INT)|)|)"
        );
        let p = pat("0 = S BOOL a\n1 = S BOOL b\n2 = S BOOL c\n3 = S BOOL d\n\
             4 = AND BOOL 0 1\n5 = AND BOOL 2 3\n6 = AND BOOL 4 5\n6");
        assert_eq!(
            p.signature(),
            "(AND|(AND|(S:N_1:BOOL)|(S:N_2:BOOL)|)|(AND|(S:N_3:BOOL)|(S:N_4:BOOL)|)|)"
        );
        let p = pat("0 = S BOOL a\n1 = S BOOL b\n2 = S BOOL c\n3 = S BOOL d\n\
             4 = AND BOOL 0 1\n5 = AND BOOL 4 2\n6 = AND BOOL 3 5\n6");
        assert_eq!(
            p.signature(),
            "(AND|(AND|(AND|(S:N_3:BOOL)|(S:N_4:BOOL)|)|(S:N_2:BOOL)|)|(S:N_1:BOOL)|)"
        );
    }

    #[test]
    fn shared_leaves_and_constants() {
        let p = pat("0 = S BOOL x\n1 = CONST BOOL 1\n2 = AND BOOL 0 1\n3 = OR BOOL 2 0\n3");
        assert_eq!(
            p.signature(),
            "(OR|(AND|(CONST:1:BOOL)|(S:N_1:BOOL)|)|(S:N_1:BOOL)|)"
        );
        assert_eq!(p.size(), 2);
    }

    #[test]
    fn signature_parse_round_trip() {
        let sig = "(AND|(AND|(S:N_3:BOOL)|(S:N_4:BOOL)|)|(EQ|(S:N_1:INT)|(S:N_2:INT)|)|)";
        let p = Pattern::parse_signature(sig).unwrap();
        assert_eq!(p.size(), 3);
        assert_eq!(p.signature(), sig);
        assert!(Pattern::parse_signature("(AND|(S:N_1:BOOL)|").is_err());
        assert!(Pattern::parse_signature("(FOO|(S:N_1:BOOL)|)").is_err());
    }

    #[test]
    fn annotated_round_trip() {
        let annotated = "(AND|(AND|(S:N_3:BOOL:R(0-1))|(S:N_4:BOOL:R(0-1))|)|(EQ|(S:N_1:INT:L(|-1|0|1|2|3|4|))|(S:N_2:INT:L(|-1|))|)|)";
        let (p, facts) = parse_signature(annotated).unwrap();
        assert_eq!(
            facts["N_1"],
            AbstractValue::ValueList(vec![-1, 0, 1, 2, 3, 4])
        );
        assert_eq!(facts["N_3"], AbstractValue::Range(0, 1));
        assert_eq!(p.annotated_signature(&facts), annotated);
    }

    #[test]
    fn extract_from_host() {
        let host = parse_dag(
            "0 = S BOOL a\n1 = S BOOL b\n2 = CONST BOOL 1\n3 = AND BOOL 0 1\n4 = OR BOOL 3 2\n5 = NOT BOOL 4\n5",
        )
        .unwrap();
        let (p, leaves) = extract(&host, &[4, 3]);
        assert_eq!(
            p.signature(),
            "(OR|(AND|(S:N_1:BOOL)|(S:N_2:BOOL)|)|(CONST:1:BOOL)|)"
        );
        assert_eq!(leaves.len(), 2);
        assert_eq!(leaves["v0"], 0);
    }
}
