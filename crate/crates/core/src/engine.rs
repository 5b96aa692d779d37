//! Rule application to fixpoint.
//!
//! A pass hash-conses and folds the DAG, then rebuilds it bottom-up. Each
//! rebuilt node is offered to the matcher (with facts computed on the DAG
//! under construction) and the first match in priority order is replaced by
//! its instantiated right-hand side. Passes repeat until one changes nothing
//! or a limit is reached.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::absint::{node_fact, AbstractValue, AnalysisConfig};
use crate::dag::{FormulaDag, Node, NodeId, OpKind};
use crate::eval::Semantics;
use crate::hashcons::{baseline_with_map, compose, fold_node, DagBuilder};
use crate::matcher::{Match, Matcher};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Limits {
    pub max_passes: usize,
    /// Rewrites allowed per run, as a multiple of the initial size.
    pub rewrite_factor: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            max_passes: 5,
            rewrite_factor: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub rule: usize,
    /// Id of the rewritten node in the DAG the pass started from.
    pub node: NodeId,
    pub pass: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Simplified {
    pub dag: FormulaDag,
    pub trace: Vec<TraceEntry>,
    pub passes: usize,
    /// A pass or rewrite limit stopped the run before a fixpoint.
    pub limit_hit: bool,
    /// For each root of the input, in order, the node computing it in `dag`.
    pub root_map: Vec<NodeId>,
}

/// Operation nodes: everything except sources, controls and constants.
pub fn size_metric(dag: &FormulaDag) -> usize {
    dag.nodes().iter().filter(|n| !n.op.is_leaf()).count()
}

struct Pass<'a> {
    m: &'a Matcher,
    cfg: AnalysisConfig,
    b: DagBuilder,
    facts: Vec<AbstractValue>,
}

impl Pass<'_> {
    fn add(&mut self, n: Node) -> (NodeId, bool) {
        let n = fold_node(&self.b, &n, &self.cfg.sem).unwrap_or(n);
        let before = self.b.len();
        let id = self.b.add(n);
        if id == self.facts.len() {
            let fact = node_fact(
                &self.b,
                self.b.node(id),
                &self.facts,
                &BTreeMap::new(),
                &self.cfg,
            );
            self.facts.push(fact);
        }
        (id, self.b.len() > before)
    }

    /// Number of right-hand side operation nodes `m` would add.
    fn fresh_nodes(&self, m: &Match) -> usize {
        let rhs = &self.m.rule(m.rule).rhs;
        let mut ids: Vec<Option<NodeId>> = Vec::with_capacity(rhs.dag().len());
        let mut fresh = 0;
        for n in rhs.dag().nodes() {
            let id = match n.name() {
                Some(v) => Some(m.binding[v]),
                None => {
                    let operands: Option<Vec<NodeId>> =
                        n.operands.iter().map(|&o| ids[o]).collect();
                    match operands {
                        Some(ops) => {
                            let n = Node {
                                operands: ops,
                                ..n.clone()
                            };
                            let n = fold_node(&self.b, &n, &self.cfg.sem).unwrap_or(n);
                            let found = self.b.lookup(&n);
                            fresh += usize::from(found.is_none() && !n.op.is_leaf());
                            found
                        }
                        None => {
                            fresh += usize::from(!n.op.is_leaf());
                            None
                        }
                    }
                }
            };
            ids.push(id);
        }
        fresh
    }

    fn instantiate(&mut self, m: &Match) -> NodeId {
        let rhs = &self.m.rule(m.rule).rhs;
        let mut ids = Vec::with_capacity(rhs.dag().len());
        for n in rhs.dag().nodes() {
            let id = match n.name() {
                Some(v) => m.binding[v],
                None => {
                    let mut n = n.clone();
                    for o in &mut n.operands {
                        *o = ids[*o];
                    }
                    self.add(n).0
                }
            };
            ids.push(id);
        }
        ids[rhs.root()]
    }
}

fn uses(dag: &FormulaDag) -> Vec<usize> {
    let mut u = vec![0usize; dag.len()];
    for n in dag.nodes() {
        for &o in &n.operands {
            u[o] += 1;
        }
    }
    for &r in dag.roots() {
        u[r] += 1;
    }
    u
}

/// One sweep over `dag` (already hash-consed and folded).
fn sweep(
    dag: &FormulaDag,
    m: &Matcher,
    cfg: AnalysisConfig,
    pass: usize,
    budget: &mut usize,
    trace: &mut Vec<TraceEntry>,
) -> (FormulaDag, Vec<NodeId>) {
    let mut p = Pass {
        m,
        cfg,
        b: DagBuilder::new(),
        facts: Vec::new(),
    };
    let old_uses = uses(dag);
    // Builder node -> original node, for nodes copied unchanged.
    let mut origin: HashMap<NodeId, NodeId> = HashMap::new();
    let mut remap = Vec::with_capacity(dag.len());
    for (id, n) in dag.nodes().iter().enumerate() {
        let mut n = n.clone();
        for o in &mut n.operands {
            *o = remap[*o];
        }
        let (nid, _) = p.add(n);
        origin.entry(nid).or_insert(id);
        let mut target = nid;
        let node = p.b.node(nid);
        if *budget > 0 && !node.op.is_leaf() && node.op != OpKind::Assert {
            let matches = m.match_at(&p.b, nid, &p.facts);
            if let Some(first) = matches.into_iter().next() {
                // A right-hand side with several new nodes must free as many
                // matched nodes, or the rewrite could grow the DAG.
                let fresh = p.fresh_nodes(&first);
                let freed = 1 + matched_internal(&p.b, nid, &first)
                    .into_iter()
                    .filter(|x| origin.get(x).is_some_and(|&o| old_uses[o] == 1))
                    .count();
                if fresh <= 1 || fresh <= freed {
                    target = p.instantiate(&first);
                    *budget -= 1;
                    trace.push(TraceEntry {
                        rule: first.rule,
                        node: id,
                        pass,
                    });
                }
            }
        }
        remap.push(target);
    }
    let roots = dag.roots().iter().map(|&r| remap[r]).collect();
    let (out, pruned) = p.b.finish_with_map(roots);
    (out, compose(&remap, &pruned))
}

/// Operation nodes strictly inside the matched region: below `root`, above
/// the bound variables.
fn matched_internal(b: &DagBuilder, root: NodeId, m: &Match) -> Vec<NodeId> {
    let bound: Vec<NodeId> = m.binding.values().copied().collect();
    let mut out = Vec::new();
    let mut stack: Vec<NodeId> = b.node(root).operands.clone();
    while let Some(x) = stack.pop() {
        if bound.contains(&x) || out.contains(&x) || b.node(x).op.is_leaf() {
            continue;
        }
        out.push(x);
        stack.extend(b.node(x).operands.iter().copied());
    }
    out
}

/// Applies `m` to `dag` until a pass changes nothing or a limit is hit.
/// With an empty matcher this is the hash-consing plus folding baseline.
pub fn simplify(dag: &FormulaDag, m: &Matcher, limits: &Limits, sem: &Semantics) -> Simplified {
    let cfg = AnalysisConfig {
        sem: *sem,
        ..*m.analysis()
    };
    let (mut cur, map) = baseline_with_map(dag, sem);
    let mut root_map: Vec<NodeId> = dag.roots().iter().map(|&r| map[r]).collect();
    let mut budget = limits
        .rewrite_factor
        .saturating_mul(size_metric(dag).max(1));
    let mut trace = Vec::new();
    let mut passes = 0;
    if m.is_empty() {
        return Simplified {
            dag: cur,
            trace,
            passes,
            limit_hit: false,
            root_map,
        };
    }
    loop {
        if passes == limits.max_passes || budget == 0 {
            return Simplified {
                dag: cur,
                trace,
                passes,
                limit_hit: true,
                root_map,
            };
        }
        passes += 1;
        let mut pass_trace = Vec::new();
        let mut pass_budget = budget;
        let (swept, m1) = sweep(&cur, m, cfg, passes, &mut pass_budget, &mut pass_trace);
        let (next, m2) = baseline_with_map(&swept, sem);
        if size_metric(&next) > size_metric(&cur) {
            // Shared structure can defeat the local size check; keep the smaller DAG.
            return Simplified {
                dag: cur,
                trace,
                passes,
                limit_hit: false,
                root_map,
            };
        }
        budget = pass_budget;
        trace.extend(pass_trace);
        if next == cur {
            return Simplified {
                dag: cur,
                trace,
                passes,
                limit_hit: false,
                root_map,
            };
        }
        let step = compose(&m1, &m2);
        root_map = root_map.iter().map(|&r| step[r]).collect();
        cur = next;
    }
}
