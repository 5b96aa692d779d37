//! Structural hashing and constant propagation: the baseline simplifier.

use std::collections::HashMap;

use crate::dag::{FormulaDag, Node, NodeId, OpKind};
use crate::eval::{apply_op, Semantics, Value};

/// Incremental hash-consing DAG construction.
///
/// Commutative operands are sorted by id, so `AND(a,b)` and `AND(b,a)` are
/// the same node.
#[derive(Debug, Default, Clone)]
pub struct DagBuilder {
    nodes: Vec<Node>,
    table: HashMap<Node, NodeId>,
}

impl DagBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Starts from the nodes of an already hash-consed DAG.
    pub fn from_dag(dag: &FormulaDag) -> Self {
        let mut b = DagBuilder::new();
        for n in dag.nodes() {
            b.add(n.clone());
        }
        b
    }

    pub fn add(&mut self, mut node: Node) -> NodeId {
        if node.op.is_commutative() {
            node.operands.sort_unstable();
        }
        if let Some(&id) = self.table.get(&node) {
            return id;
        }
        let id = self.nodes.len();
        self.table.insert(node.clone(), id);
        self.nodes.push(node);
        id
    }

    pub fn lookup(&self, node: &Node) -> Option<NodeId> {
        let mut key = node.clone();
        if key.op.is_commutative() {
            key.operands.sort_unstable();
        }
        self.table.get(&key).copied()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Finishes the DAG, dropping nodes unreachable from `roots` (when any).
    pub fn finish(self, roots: Vec<NodeId>) -> FormulaDag {
        self.finish_with_map(roots).0
    }

    /// [`finish`](Self::finish), also returning where each builder node
    /// went (`usize::MAX` when dropped).
    pub fn finish_with_map(self, roots: Vec<NodeId>) -> (FormulaDag, Vec<NodeId>) {
        prune_with_map(FormulaDag::from_parts(self.nodes, roots))
    }
}

/// Removes nodes that no root reaches. A DAG without roots is kept whole.
pub fn prune(dag: FormulaDag) -> FormulaDag {
    prune_with_map(dag).0
}

/// [`prune`] plus the old-to-new id map (`usize::MAX` for dropped nodes).
pub fn prune_with_map(dag: FormulaDag) -> (FormulaDag, Vec<NodeId>) {
    let live = dag.reachable();
    if dag.roots().is_empty() || live.iter().all(|&l| l) {
        let id = (0..dag.len()).collect();
        return (dag, id);
    }
    let mut remap = vec![usize::MAX; dag.len()];
    let mut nodes = Vec::new();
    for (id, n) in dag.nodes().iter().enumerate() {
        if live[id] {
            let mut n = n.clone();
            for o in &mut n.operands {
                *o = remap[*o];
            }
            remap[id] = nodes.len();
            nodes.push(n);
        }
    }
    let roots = dag.roots().iter().map(|&r| remap[r]).collect();
    (FormulaDag::from_parts(nodes, roots), remap)
}

/// Composes node maps: `first` then `second`, keeping dropped nodes dropped.
pub fn compose(first: &[NodeId], second: &[NodeId]) -> Vec<NodeId> {
    first
        .iter()
        .map(|&x| if x == usize::MAX { x } else { second[x] })
        .collect()
}

fn rebuild(
    dag: &FormulaDag,
    mut f: impl FnMut(&DagBuilder, Node) -> Node,
) -> (FormulaDag, Vec<NodeId>) {
    let mut b = DagBuilder::new();
    let mut remap = Vec::with_capacity(dag.len());
    for n in dag.nodes() {
        let mut n = n.clone();
        for o in &mut n.operands {
            *o = remap[*o];
        }
        let n = f(&b, n);
        remap.push(b.add(n));
    }
    let roots = dag.roots().iter().map(|&r| remap[r]).collect();
    let (out, pruned) = b.finish_with_map(roots);
    (out, compose(&remap, &pruned))
}

pub fn hash_cons(dag: &FormulaDag) -> FormulaDag {
    hash_cons_with_map(dag).0
}

/// [`hash_cons`] plus the old-to-new id map.
pub fn hash_cons_with_map(dag: &FormulaDag) -> (FormulaDag, Vec<NodeId>) {
    rebuild(dag, |_, n| n)
}

/// Replaces every scalar op whose operands are all constants by its value.
pub fn constant_fold(dag: &FormulaDag, sem: &Semantics) -> FormulaDag {
    constant_fold_with_map(dag, sem).0
}

pub fn constant_fold_with_map(dag: &FormulaDag, sem: &Semantics) -> (FormulaDag, Vec<NodeId>) {
    rebuild(dag, |b, n| fold_node(b, &n, sem).unwrap_or(n))
}

pub(crate) fn fold_node(b: &DagBuilder, n: &Node, sem: &Semantics) -> Option<Node> {
    if n.op.is_leaf() || n.op == OpKind::Assert || n.sort.is_array() {
        return None;
    }
    let mut args = Vec::with_capacity(n.operands.len());
    for &o in &n.operands {
        let on = b.node(o);
        if on.op != OpKind::Const {
            return None;
        }
        args.push(Value::Scalar(sem.normalize(on.sort, on.const_value()?)));
    }
    let refs: Vec<&Value> = args.iter().collect();
    match apply_op(n.op, n.sort, &refs, sem).ok()? {
        Value::Scalar(v) => Some(Node::constant(n.sort, v)),
        Value::Array(_) => None,
    }
}

/// The baseline simplifier: hash-consing plus constant folding to fixpoint.
pub fn baseline(dag: &FormulaDag, sem: &Semantics) -> FormulaDag {
    baseline_with_map(dag, sem).0
}

/// [`baseline`] plus the old-to-new id map.
pub fn baseline_with_map(dag: &FormulaDag, sem: &Semantics) -> (FormulaDag, Vec<NodeId>) {
    let (mut cur, mut map) = hash_cons_with_map(dag);
    loop {
        let (next, m) = constant_fold_with_map(&cur, sem);
        if next == cur {
            return (cur, map);
        }
        map = compose(&map, &m);
        cur = next;
    }
}
