//! Formula DAG representation and its line-oriented text format.
//!
//! One node per line: `<id> = <OP> <SORT> <operands...>`. `CONST` lines carry
//! the literal as the final token, `S`/`CTRL` lines carry the source name, and
//! a line holding a bare id marks a root. Ids in the text are arbitrary
//! integers; they are mapped to dense positions in line order.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub type NodeId = usize;

/// Default cap on operand count per node.
pub const DEFAULT_MAX_ARITY: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sort {
    Bool,
    Int,
    BoolArr,
    IntArr,
}

impl Sort {
    pub fn is_array(self) -> bool {
        matches!(self, Sort::BoolArr | Sort::IntArr)
    }

    pub fn element(self) -> Option<Sort> {
        match self {
            Sort::BoolArr => Some(Sort::Bool),
            Sort::IntArr => Some(Sort::Int),
            _ => None,
        }
    }

    pub fn array_of(self) -> Option<Sort> {
        match self {
            Sort::Bool => Some(Sort::BoolArr),
            Sort::Int => Some(Sort::IntArr),
            _ => None,
        }
    }

    pub fn token(self) -> &'static str {
        match self {
            Sort::Bool => "BOOL",
            Sort::Int => "INT",
            Sort::BoolArr => "BOOL_ARR",
            Sort::IntArr => "INT_ARR",
        }
    }
}

impl fmt::Display for Sort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for Sort {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            // `BIT` appears on the TRUE constant of predicate files.
            "BOOL" | "BIT" => Ok(Sort::Bool),
            "INT" => Ok(Sort::Int),
            "BOOL_ARR" => Ok(Sort::BoolArr),
            "INT_ARR" => Ok(Sort::IntArr),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OpKind {
    Const,
    Src,
    Ctrl,
    Not,
    And,
    Or,
    Xor,
    Plus,
    Times,
    Div,
    Mod,
    Neg,
    Eq,
    Lt,
    ArrAcc,
    ArrR,
    ArrW,
    ArrCreate,
    Assert,
}

impl OpKind {
    pub const ALL: [OpKind; 19] = [
        OpKind::Const,
        OpKind::Src,
        OpKind::Ctrl,
        OpKind::Not,
        OpKind::And,
        OpKind::Or,
        OpKind::Xor,
        OpKind::Plus,
        OpKind::Times,
        OpKind::Div,
        OpKind::Mod,
        OpKind::Neg,
        OpKind::Eq,
        OpKind::Lt,
        OpKind::ArrAcc,
        OpKind::ArrR,
        OpKind::ArrW,
        OpKind::ArrCreate,
        OpKind::Assert,
    ];

    pub fn token(self) -> &'static str {
        match self {
            OpKind::Const => "CONST",
            OpKind::Src => "S",
            OpKind::Ctrl => "CTRL",
            OpKind::Not => "NOT",
            OpKind::And => "AND",
            OpKind::Or => "OR",
            OpKind::Xor => "XOR",
            OpKind::Plus => "PLUS",
            OpKind::Times => "TIMES",
            OpKind::Div => "DIV",
            OpKind::Mod => "MOD",
            OpKind::Neg => "NEG",
            OpKind::Eq => "EQ",
            OpKind::Lt => "LT",
            OpKind::ArrAcc => "ARRACC",
            OpKind::ArrR => "ARR_R",
            OpKind::ArrW => "ARR_W",
            OpKind::ArrCreate => "ARR_CREATE",
            OpKind::Assert => "ASSERT",
        }
    }

    pub fn is_commutative(self) -> bool {
        matches!(
            self,
            OpKind::And | OpKind::Or | OpKind::Xor | OpKind::Plus | OpKind::Times | OpKind::Eq
        )
    }

    /// Sources, controls and constants: nodes without operands.
    pub fn is_leaf(self) -> bool {
        matches!(self, OpKind::Const | OpKind::Src | OpKind::Ctrl)
    }

    pub fn is_boolean(self) -> bool {
        matches!(self, OpKind::Not | OpKind::And | OpKind::Or | OpKind::Xor)
    }

    pub fn is_arithmetic(self) -> bool {
        matches!(
            self,
            OpKind::Plus | OpKind::Times | OpKind::Div | OpKind::Mod | OpKind::Neg
        )
    }

    pub fn is_array_op(self) -> bool {
        matches!(self, OpKind::ArrR | OpKind::ArrW | OpKind::ArrCreate)
    }

    /// Output sort of this op applied to operands of the given sorts, or a
    /// description of why the combination is ill-typed.
    pub fn result_sort(self, operands: &[Sort]) -> Result<Sort, String> {
        use OpKind::*;
        use Sort::*;
        let n = operands.len();
        let want = |k: usize| -> Result<(), String> {
            if n == k {
                Ok(())
            } else {
                Err(format!("{} expects {k} operands, got {n}", self.token()))
            }
        };
        let all = |s: Sort| -> Result<(), String> {
            match operands.iter().find(|&&o| o != s) {
                Some(o) => Err(format!("{} expects {s} operands, got {o}", self.token())),
                None => Ok(()),
            }
        };
        match self {
            Const | Src | Ctrl => {
                want(0)?;
                Err("leaf sort is declared, not derived".into())
            }
            Not | Assert => {
                want(1)?;
                all(Bool)?;
                Ok(Bool)
            }
            And | Or | Xor => {
                want(2)?;
                all(Bool)?;
                Ok(Bool)
            }
            Plus | Times | Div | Mod => {
                want(2)?;
                all(Int)?;
                Ok(Int)
            }
            Neg => {
                want(1)?;
                all(Int)?;
                Ok(Int)
            }
            Lt => {
                want(2)?;
                all(Int)?;
                Ok(Bool)
            }
            Eq => {
                want(2)?;
                if operands[0] != operands[1] || operands[0].is_array() {
                    return Err(format!(
                        "EQ expects two equal scalar sorts, got {} and {}",
                        operands[0], operands[1]
                    ));
                }
                Ok(Bool)
            }
            ArrAcc => {
                if n < 2 {
                    return Err(format!(
                        "ARRACC expects a selector and choices, got {n} operands"
                    ));
                }
                if operands[0] != Int && operands[0] != Bool {
                    return Err(format!(
                        "ARRACC selector must be scalar, got {}",
                        operands[0]
                    ));
                }
                let choice = operands[1];
                if choice.is_array() || operands[1..].iter().any(|&s| s != choice) {
                    return Err("ARRACC choices must share one scalar sort".into());
                }
                Ok(choice)
            }
            ArrR => {
                want(2)?;
                if operands[0] != Int {
                    return Err(format!("ARR_R index must be INT, got {}", operands[0]));
                }
                operands[1]
                    .element()
                    .ok_or_else(|| format!("ARR_R expects an array, got {}", operands[1]))
            }
            ArrW => {
                want(3)?;
                if operands[0] != Int {
                    return Err(format!("ARR_W index must be INT, got {}", operands[0]));
                }
                let elem = operands[1]
                    .element()
                    .ok_or_else(|| format!("ARR_W expects an array, got {}", operands[1]))?;
                if operands[2] != elem {
                    return Err(format!("ARR_W value must be {elem}, got {}", operands[2]));
                }
                Ok(operands[1])
            }
            ArrCreate => {
                if n == 0 {
                    return Err("ARR_CREATE needs at least one element".into());
                }
                let elem = operands[0];
                if operands.iter().any(|&s| s != elem) {
                    return Err("ARR_CREATE elements must share one sort".into());
                }
                elem.array_of()
                    .ok_or_else(|| "ARR_CREATE elements must be scalar".to_string())
            }
        }
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for OpKind {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        OpKind::ALL
            .iter()
            .copied()
            .find(|op| op.token() == s)
            .ok_or(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Payload {
    None,
    Const(i64),
    Name(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Node {
    pub op: OpKind,
    pub sort: Sort,
    pub operands: Vec<NodeId>,
    pub payload: Payload,
}

impl Node {
    pub fn constant(sort: Sort, value: i64) -> Self {
        Node {
            op: OpKind::Const,
            sort,
            operands: Vec::new(),
            payload: Payload::Const(value),
        }
    }

    pub fn source(sort: Sort, name: impl Into<String>) -> Self {
        Node {
            op: OpKind::Src,
            sort,
            operands: Vec::new(),
            payload: Payload::Name(name.into()),
        }
    }

    pub fn control(sort: Sort, name: impl Into<String>) -> Self {
        Node {
            op: OpKind::Ctrl,
            sort,
            operands: Vec::new(),
            payload: Payload::Name(name.into()),
        }
    }

    pub fn op(op: OpKind, sort: Sort, operands: Vec<NodeId>) -> Self {
        Node {
            op,
            sort,
            operands,
            payload: Payload::None,
        }
    }

    pub fn const_value(&self) -> Option<i64> {
        match self.payload {
            Payload::Const(v) => Some(v),
            _ => None,
        }
    }

    pub fn name(&self) -> Option<&str> {
        match &self.payload {
            Payload::Name(n) => Some(n),
            _ => None,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DagError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("node {node}: {msg}")]
    Type { node: String, msg: String },
    #[error("line {line}: operand {operand} is not defined")]
    UndefinedOperand { line: usize, operand: String },
    #[error("node {node}: {arity} operands exceed the arity bound {max}")]
    Arity {
        node: String,
        arity: usize,
        max: usize,
    },
    #[error("node {node}: operand {operand} does not precede it")]
    Order { node: NodeId, operand: NodeId },
    #[error("root {0} is not a node")]
    Root(NodeId),
}

/// Topologically ordered DAG; operands always reference earlier positions.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct FormulaDag {
    nodes: Vec<Node>,
    roots: Vec<NodeId>,
}

impl FormulaDag {
    /// Validates order, sorts and arity. Roots are stored sorted and deduplicated.
    pub fn new(nodes: Vec<Node>, roots: Vec<NodeId>, max_arity: usize) -> Result<Self, DagError> {
        for (id, node) in nodes.iter().enumerate() {
            check_node(&nodes, id, node, max_arity).map_err(|e| match e {
                DagError::Type { msg, .. } => DagError::Type {
                    node: id.to_string(),
                    msg,
                },
                other => other,
            })?;
        }
        let mut dag = FormulaDag {
            nodes,
            roots: Vec::new(),
        };
        for r in roots {
            if r >= dag.nodes.len() {
                return Err(DagError::Root(r));
            }
            dag.roots.push(r);
        }
        dag.normalize_roots();
        Ok(dag)
    }

    /// Builds without validation; callers guarantee the invariants.
    pub(crate) fn from_parts(nodes: Vec<Node>, roots: Vec<NodeId>) -> Self {
        let mut dag = FormulaDag { nodes, roots };
        dag.normalize_roots();
        dag
    }

    fn normalize_roots(&mut self) {
        self.roots.sort_unstable();
        self.roots.dedup();
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn roots(&self) -> &[NodeId] {
        &self.roots
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn max_arity(&self) -> usize {
        self.nodes
            .iter()
            .map(|n| n.operands.len())
            .max()
            .unwrap_or(0)
    }

    /// Consumers of every node, in ascending order.
    pub fn consumers(&self) -> Vec<Vec<NodeId>> {
        let mut out = vec![Vec::new(); self.nodes.len()];
        for (id, n) in self.nodes.iter().enumerate() {
            for &o in &n.operands {
                if out[o].last() != Some(&id) {
                    out[o].push(id);
                }
            }
        }
        out
    }

    /// Names and sorts of all S and CTRL nodes.
    pub fn sources(&self) -> Vec<(String, Sort)> {
        self.nodes
            .iter()
            .filter(|n| matches!(n.op, OpKind::Src | OpKind::Ctrl))
            .filter_map(|n| n.name().map(|s| (s.to_string(), n.sort)))
            .collect()
    }

    /// Nodes reachable from the roots, as a membership mask.
    pub fn reachable(&self) -> Vec<bool> {
        let mut live = vec![false; self.nodes.len()];
        for &r in &self.roots {
            live[r] = true;
        }
        for id in (0..self.nodes.len()).rev() {
            if live[id] {
                for &o in &self.nodes[id].operands {
                    live[o] = true;
                }
            }
        }
        live
    }

    pub fn to_text(&self) -> String {
        serialize_dag(self)
    }
}

fn check_node(nodes: &[Node], id: NodeId, node: &Node, max_arity: usize) -> Result<(), DagError> {
    if node.operands.len() > max_arity {
        return Err(DagError::Arity {
            node: id.to_string(),
            arity: node.operands.len(),
            max: max_arity,
        });
    }
    for &o in &node.operands {
        if o >= id {
            return Err(DagError::Order {
                node: id,
                operand: o,
            });
        }
    }
    let ty = |msg: String| DagError::Type {
        node: id.to_string(),
        msg,
    };
    match node.op {
        OpKind::Const => {
            if node.const_value().is_none() || !node.operands.is_empty() {
                return Err(ty("CONST needs a literal and no operands".into()));
            }
            if node.sort.is_array() {
                return Err(ty("CONST must be scalar".into()));
            }
        }
        OpKind::Src | OpKind::Ctrl => {
            if node.name().is_none() || !node.operands.is_empty() {
                return Err(ty(format!("{} needs a name and no operands", node.op)));
            }
        }
        op => {
            let sorts: Vec<Sort> = node.operands.iter().map(|&o| nodes[o].sort).collect();
            let out = op.result_sort(&sorts).map_err(ty)?;
            if out != node.sort {
                return Err(ty(format!("declared {} but {op} yields {out}", node.sort)));
            }
        }
    }
    Ok(())
}

/// Parses the DAG text format with the default arity bound.
pub fn parse_dag(text: &str) -> Result<FormulaDag, DagError> {
    parse_dag_with(text, DEFAULT_MAX_ARITY)
}

pub fn parse_dag_with(text: &str, max_arity: usize) -> Result<FormulaDag, DagError> {
    let mut ids: HashMap<&str, NodeId> = HashMap::new();
    let mut nodes: Vec<Node> = Vec::new();
    let mut roots = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let toks: Vec<&str> = raw.split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        let perr = |msg: String| DagError::Parse { line, msg };
        if toks.len() == 1 {
            let id = *ids
                .get(toks[0])
                .ok_or_else(|| perr(format!("root {} is not a defined node", toks[0])))?;
            roots.push(id);
            continue;
        }
        if toks.len() < 4 || toks[1] != "=" {
            return Err(perr(format!(
                "expected `<id> = <OP> <SORT> ...`, got `{raw}`"
            )));
        }
        let label = toks[0];
        if label.parse::<i64>().is_err() {
            return Err(perr(format!("node id `{label}` is not an integer")));
        }
        if ids.contains_key(label) {
            return Err(perr(format!("node {label} defined twice")));
        }
        let op: OpKind = toks[2]
            .parse()
            .map_err(|_| perr(format!("unknown op `{}`", toks[2])))?;
        let sort: Sort = toks[3]
            .parse()
            .map_err(|_| perr(format!("unknown sort `{}`", toks[3])))?;
        let rest = &toks[4..];
        let node = match op {
            OpKind::Const => {
                let [lit] = rest else {
                    return Err(perr("CONST takes exactly one literal".into()));
                };
                let v = lit
                    .parse::<i64>()
                    .map_err(|_| perr(format!("bad literal `{lit}`")))?;
                Node::constant(sort, v)
            }
            OpKind::Src | OpKind::Ctrl => {
                let [name] = rest else {
                    return Err(perr(format!("{op} takes exactly one name")));
                };
                Node {
                    op,
                    sort,
                    operands: Vec::new(),
                    payload: Payload::Name(name.to_string()),
                }
            }
            _ => {
                if rest.len() > max_arity {
                    return Err(DagError::Arity {
                        node: label.to_string(),
                        arity: rest.len(),
                        max: max_arity,
                    });
                }
                let mut operands = Vec::with_capacity(rest.len());
                for &t in rest {
                    let o = *ids.get(t).ok_or_else(|| DagError::UndefinedOperand {
                        line,
                        operand: t.to_string(),
                    })?;
                    operands.push(o);
                }
                Node::op(op, sort, operands)
            }
        };
        let id = nodes.len();
        check_node(&nodes, id, &node, max_arity).map_err(|e| match e {
            DagError::Type { msg, .. } => DagError::Type {
                node: label.to_string(),
                msg,
            },
            other => other,
        })?;
        if op == OpKind::Assert {
            roots.push(id);
        }
        ids.insert(label, id);
        nodes.push(node);
    }
    Ok(FormulaDag::from_parts(nodes, roots))
}

/// Writes the text format with dense ids. ASSERT roots are implicit.
pub fn serialize_dag(dag: &FormulaDag) -> String {
    let mut out = String::new();
    for (id, n) in dag.nodes.iter().enumerate() {
        write_node_line(&mut out, id, n);
    }
    for &r in &dag.roots {
        if dag.nodes[r].op != OpKind::Assert {
            out.push_str(&r.to_string());
            out.push('\n');
        }
    }
    out
}

pub(crate) fn write_node_line(out: &mut String, id: NodeId, n: &Node) {
    use std::fmt::Write;
    let _ = write!(out, "{id} = {} {}", n.op, n.sort);
    match &n.payload {
        Payload::Const(v) => {
            let _ = write!(out, " {v}");
        }
        Payload::Name(s) => {
            let _ = write!(out, " {s}");
        }
        Payload::None => {
            for o in &n.operands {
                let _ = write!(out, " {o}");
            }
        }
    }
    out.push('\n');
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_smallest() {
        let d = parse_dag("0 = S BOOL N_1\n1 = NOT BOOL 0\n1").unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.roots(), &[1]);
        assert_eq!(d.node(1).op, OpKind::Not);
        assert_eq!(d.node(0).name(), Some("N_1"));
        assert_eq!(serialize_dag(&d), "0 = S BOOL N_1\n1 = NOT BOOL 0\n1\n");
    }

    #[test]
    fn parse_empty() {
        let d = parse_dag("").unwrap();
        assert!(d.is_empty());
        assert!(d.roots().is_empty());
        assert_eq!(serialize_dag(&d), "");
    }

    #[test]
    fn parse_array_snippet() {
        let text = "\
429 = S INT N_1
536 = S INT_ARR N_2
542 = S INT N_3
428 = S INT N_4
5 = S INT N_5
482 = S BOOL N_6
361 = S BOOL N_7
481 = S BOOL N_8
543 = ARR_W INT_ARR 429 536 542
544 = ARR_W INT_ARR 428 543 5
545 = NOT BOOL 482
546 = AND BOOL 361 545
547 = AND BOOL 481 546
";
        let d = parse_dag(text).unwrap();
        let ops: Vec<OpKind> = d.nodes()[8..].iter().map(|n| n.op).collect();
        assert_eq!(
            ops,
            vec![
                OpKind::ArrW,
                OpKind::ArrW,
                OpKind::Not,
                OpKind::And,
                OpKind::And
            ]
        );
        assert_eq!(d.node(9).operands, vec![3, 8, 4]);
    }

    #[test]
    fn assert_nodes_are_roots() {
        let d = parse_dag("0 = S BOOL N_1\n1 = ASSERT BOOL 0\n").unwrap();
        assert_eq!(d.roots(), &[1]);
        let again = parse_dag(&serialize_dag(&d)).unwrap();
        assert_eq!(again, d);
    }

    #[test]
    fn bit_sort_is_bool() {
        let d = parse_dag("4 = CONST BIT 1\n4").unwrap();
        assert_eq!(d.node(0).sort, Sort::Bool);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            parse_dag("0 = S BOOL N_1\n1 = NOT BOOL 7\n"),
            Err(DagError::UndefinedOperand { line: 2, .. })
        ));
        assert!(matches!(
            parse_dag("0 = FOO BOOL\n"),
            Err(DagError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_dag("0 S BOOL N\n"),
            Err(DagError::Parse { line: 1, .. })
        ));
        let e = parse_dag("0 = S INT N_1\n7 = NOT BOOL 0\n").unwrap_err();
        assert!(
            matches!(e, DagError::Type { ref node, .. } if node == "7"),
            "{e}"
        );
        let wide = "0 = S INT N_1\n1 = ARR_CREATE INT_ARR 0 0 0 0\n";
        assert!(matches!(parse_dag(wide), Err(DagError::Arity { .. })));
        assert!(parse_dag_with(wide, 4).is_ok());
        assert!(matches!(parse_dag("3\n"), Err(DagError::Parse { .. })));
    }

    #[test]
    fn sort_rules() {
        use Sort::*;
        assert_eq!(OpKind::Eq.result_sort(&[Bool, Bool]), Ok(Bool));
        assert!(OpKind::Eq.result_sort(&[Bool, Int]).is_err());
        assert_eq!(OpKind::ArrAcc.result_sort(&[Int, Int, Int]), Ok(Int));
        assert_eq!(OpKind::ArrR.result_sort(&[Int, BoolArr]), Ok(Bool));
        assert_eq!(OpKind::ArrCreate.result_sort(&[Int, Int]), Ok(IntArr));
        let commutative: Vec<OpKind> = OpKind::ALL
            .iter()
            .copied()
            .filter(|o| o.is_commutative())
            .collect();
        assert_eq!(
            commutative,
            vec![
                OpKind::And,
                OpKind::Or,
                OpKind::Xor,
                OpKind::Plus,
                OpKind::Times,
                OpKind::Eq
            ]
        );
    }
}
