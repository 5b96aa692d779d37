//! Random sampling of recurrent patterns from a corpus.
//!
//! A sample grows from a start node by repeatedly drawing one slot from a
//! boundary of `k(T-1)+1` operand slots, where `k` is the number of nodes
//! collected so far. Slots that lead to leaves, to nodes already seen, or that
//! only pad an operation up to `T` operands are shadow slots; drawing one
//! restarts the sample. The operand slots that produced the current nodes are
//! not part of the boundary, so every pick sequence has probability
//! `prod 1/(i(T-1)+1)`.
//!
//! A node set can be produced by more than one pick sequence (two siblings
//! can be collected in either order). Completed samples are therefore kept
//! with probability `1/m`, `m` being the number of sequences yielding the
//! set, which makes every set of `N` nodes rooted at the start equally likely.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::absint::{analyze, AbstractValue, AnalysisConfig};
use crate::dag::{FormulaDag, NodeId, OpKind};
use crate::pattern::{extract, Pattern};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MinerError {
    #[error("invalid miner configuration: {0}")]
    Config(String),
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("benchmark {bench}, node {node}: {arity} operands exceed the bound T={bound}")]
    Degree {
        bench: usize,
        node: NodeId,
        arity: usize,
        bound: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MinerConfig {
    /// Pattern size in operation nodes.
    pub n: usize,
    /// Accepted samples per batch.
    pub m: usize,
    pub epsilon: f64,
    /// Operand bound; every node must have at most `t` operands.
    pub t: usize,
    pub seed: u64,
    /// Relative change of the above-epsilon count that counts as converged.
    pub tolerance: f64,
    pub max_batches: usize,
    /// Independent RNG substreams per batch. Fixed so results do not depend
    /// on the thread count.
    pub workers: usize,
    pub analysis: AnalysisConfig,
}

impl Default for MinerConfig {
    fn default() -> Self {
        MinerConfig {
            n: 3,
            m: 50_000,
            epsilon: 0.02,
            t: 3,
            seed: 0,
            tolerance: 0.01,
            max_batches: 20,
            workers: 8,
            analysis: AnalysisConfig::default(),
        }
    }
}

impl MinerConfig {
    pub fn validate(&self) -> Result<(), MinerError> {
        let bad = |m: &str| Err(MinerError::Config(m.to_string()));
        if self.n < 2 {
            return bad("N must be at least 2");
        }
        if self.m == 0 {
            return bad("M must be at least 1");
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad("epsilon must lie in (0,1)");
        }
        if self.t < 2 {
            return bad("T must be at least 2");
        }
        if self.workers == 0 || self.max_batches == 0 {
            return bad("workers and max_batches must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternStats {
    pub signature: String,
    pub count: u64,
    pub significance: f64,
    pub configs: BTreeSet<String>,
}

/// Operation nodes that can be part of a pattern.
fn collectible(op: OpKind) -> bool {
    !op.is_leaf() && op != OpKind::Assert
}

/// One draw of the growth process from `start`: the collected nodes in pick
/// order, or `None` when a shadow slot was drawn.
fn grow<R: Rng + ?Sized>(
    dag: &FormulaDag,
    start: NodeId,
    n: usize,
    t: usize,
    rng: &mut R,
) -> Option<Vec<NodeId>> {
    if !collectible(dag.node(start).op) {
        return None;
    }
    let mut nodes = vec![start];
    let mut tree: Vec<(usize, usize)> = Vec::new();
    while nodes.len() < n {
        let slots = nodes.len() * (t - 1) + 1;
        let pick = rng.gen_range(0..slots);
        let real = boundary(dag, &nodes, &tree);
        let (parent, slot, node) = *real.get(pick)?;
        nodes.push(node);
        tree.push((parent, slot));
    }
    Some(nodes)
}

/// The real boundary slots as (collected index, operand slot, node). Shadow
/// slots fill the remainder of the `k(T-1)+1` boundary.
fn boundary(
    dag: &FormulaDag,
    nodes: &[NodeId],
    tree: &[(usize, usize)],
) -> Vec<(usize, usize, NodeId)> {
    let mut seen: Vec<NodeId> = nodes.to_vec();
    let mut out = Vec::new();
    for (i, &p) in nodes.iter().enumerate() {
        for (slot, &o) in dag.node(p).operands.iter().enumerate() {
            if tree.contains(&(i, slot)) {
                continue;
            }
            if collectible(dag.node(o).op) && !seen.contains(&o) {
                seen.push(o);
                out.push((i, slot, o));
            }
        }
    }
    out
}

/// Number of pick sequences from `members[0]` whose collected set is exactly
/// `members`.
pub fn pick_sequences(dag: &FormulaDag, members: &[NodeId]) -> u64 {
    fn walk(
        dag: &FormulaDag,
        target: &[NodeId],
        nodes: &mut Vec<NodeId>,
        tree: &mut Vec<(usize, usize)>,
    ) -> u64 {
        if nodes.len() == target.len() {
            return 1;
        }
        let mut total = 0;
        for (parent, slot, node) in boundary(dag, nodes, tree) {
            if target.contains(&node) {
                nodes.push(node);
                tree.push((parent, slot));
                total += walk(dag, target, nodes, tree);
                nodes.pop();
                tree.pop();
            }
        }
        total
    }
    walk(dag, members, &mut vec![members[0]], &mut Vec::new())
}

/// Draws one sample rooted at `start`: the member nodes (root first), or
/// `None` on restart.
pub fn sample_from<R: Rng + ?Sized>(
    dag: &FormulaDag,
    start: NodeId,
    n: usize,
    t: usize,
    rng: &mut R,
) -> Option<Vec<NodeId>> {
    let nodes = grow(dag, start, n, t, rng)?;
    let m = pick_sequences(dag, &nodes);
    if m > 1 && rng.gen_range(0..m) != 0 {
        return None;
    }
    Some(nodes)
}

/// One attempt from a uniformly random start node.
pub fn sample_pattern<R: Rng + ?Sized>(
    dag: &FormulaDag,
    n: usize,
    t: usize,
    rng: &mut R,
) -> Option<Pattern> {
    if dag.is_empty() {
        return None;
    }
    let start = rng.gen_range(0..dag.len());
    let members = sample_from(dag, start, n, t, rng)?;
    Some(extract(dag, &members).0)
}

/// All node sets of size `n` that contain `start` and are reachable from it
/// through operand edges inside the set. Each set is sorted.
pub fn rooted_sets(dag: &FormulaDag, start: NodeId, n: usize) -> Vec<Vec<NodeId>> {
    fn go(dag: &FormulaDag, n: usize, cur: &mut BTreeSet<NodeId>, out: &mut BTreeSet<Vec<NodeId>>) {
        if cur.len() == n {
            out.insert(cur.iter().copied().collect());
            return;
        }
        let frontier: BTreeSet<NodeId> = cur
            .iter()
            .flat_map(|&c| dag.node(c).operands.iter().copied())
            .filter(|&o| collectible(dag.node(o).op) && !cur.contains(&o))
            .collect();
        for o in frontier {
            cur.insert(o);
            go(dag, n, cur, out);
            cur.remove(&o);
        }
    }
    if !collectible(dag.node(start).op) {
        return Vec::new();
    }
    let mut out = BTreeSet::new();
    go(dag, n, &mut BTreeSet::from([start]), &mut out);
    out.into_iter().collect()
}

fn substream(seed: u64, n: usize, batch: usize, worker: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((n as u64) << 48) | ((batch as u64) << 24) | worker as u64);
    rng
}

#[derive(Default)]
struct Tally {
    counts: HashMap<String, (u64, BTreeSet<String>)>,
    accepted: u64,
}

impl Tally {
    fn merge(&mut self, other: Tally) {
        self.accepted += other.accepted;
        for (sig, (c, cfgs)) in other.counts {
            let e = self.counts.entry(sig).or_default();
            e.0 += c;
            e.1.extend(cfgs);
        }
    }

    fn above(&self, epsilon: f64) -> usize {
        let total = self.accepted.max(1) as f64;
        self.counts
            .values()
            .filter(|(c, _)| *c as f64 / total > epsilon)
            .count()
    }
}

/// Samples patterns of size `cfg.n` in batches of `cfg.m` accepted samples
/// until the number of signatures with significance above `cfg.epsilon`
/// stabilizes. Start nodes are uniform over all nodes of the corpus.
pub fn mine(corpus: &[FormulaDag], cfg: &MinerConfig) -> Result<Vec<PatternStats>, MinerError> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(MinerError::EmptyCorpus);
    }
    for (bench, dag) in corpus.iter().enumerate() {
        if let Some((node, n)) = dag
            .nodes()
            .iter()
            .enumerate()
            .find(|(_, n)| n.operands.len() > cfg.t)
        {
            return Err(MinerError::Degree {
                bench,
                node,
                arity: n.operands.len(),
                bound: cfg.t,
            });
        }
    }
    let facts: Vec<Vec<AbstractValue>> = corpus
        .par_iter()
        .map(|d| analyze(d, &BTreeMap::new(), &cfg.analysis))
        .collect();
    let offsets: Vec<usize> = corpus
        .iter()
        .scan(0, |acc, d| {
            *acc += d.len();
            Some(*acc)
        })
        .collect();
    let pool = *offsets.last().unwrap();
    if pool == 0 {
        return Err(MinerError::EmptyCorpus);
    }

    let mut tally = Tally::default();
    let mut prev_above: Option<usize> = None;
    for batch in 0..cfg.max_batches {
        let parts: Vec<Tally> = (0..cfg.workers)
            .into_par_iter()
            .map(|w| {
                let quota = cfg.m / cfg.workers + usize::from(w < cfg.m % cfg.workers);
                let mut rng = substream(cfg.seed, cfg.n, batch, w);
                let mut part = Tally::default();
                // Corpora without any pattern of size N would never fill the quota.
                let max_attempts = (quota as u64).saturating_mul(10_000).max(1_000_000);
                let mut attempts = 0u64;
                while (part.accepted as usize) < quota && attempts < max_attempts {
                    attempts += 1;
                    let g = rng.gen_range(0..pool);
                    let bench = offsets.partition_point(|&o| o <= g);
                    let start = g - if bench == 0 { 0 } else { offsets[bench - 1] };
                    let dag = &corpus[bench];
                    let Some(members) = sample_from(dag, start, cfg.n, cfg.t, &mut rng) else {
                        continue;
                    };
                    let (pattern, leaves) = extract(dag, &members);
                    let leaf_facts: BTreeMap<String, AbstractValue> = leaves
                        .iter()
                        .map(|(name, &h)| (name.clone(), facts[bench][h].clone()))
                        .collect();
                    let entry = part.counts.entry(pattern.signature()).or_default();
                    entry.0 += 1;
                    entry.1.insert(pattern.annotated_signature(&leaf_facts));
                    part.accepted += 1;
                }
                part
            })
            .collect();
        let before = tally.accepted;
        for p in parts {
            tally.merge(p);
        }
        if tally.accepted == before {
            break;
        }
        let above = tally.above(cfg.epsilon);
        if let Some(prev) = prev_above {
            if (above as f64 - prev as f64).abs() <= cfg.tolerance * prev as f64 {
                break;
            }
        }
        prev_above = Some(above);
    }

    let total = tally.accepted.max(1) as f64;
    let mut stats: Vec<PatternStats> = tally
        .counts
        .into_iter()
        .map(|(signature, (count, configs))| PatternStats {
            signature,
            count,
            significance: count as f64 / total,
            configs,
        })
        .collect();
    stats.sort_by(|a, b| {
        b.count
            .cmp(&a.count)
            .then_with(|| a.signature.cmp(&b.signature))
    });
    Ok(stats)
}

/// One line per pattern: signature, count, number of distinct configurations.
pub fn write_patterns(stats: &[PatternStats]) -> String {
    stats
        .iter()
        .map(|s| format!("{} {} {}\n", s.signature, s.count, s.configs.len()))
        .collect()
}

/// One line per pattern, in the same order: its configurations joined by `##`.
pub fn write_configs(stats: &[PatternStats]) -> String {
    stats
        .iter()
        .map(|s| s.configs.iter().cloned().collect::<Vec<_>>().join("##") + "\n")
        .collect()
}

/// Parses pattern and configuration files back. Significance is recomputed
/// from the counts.
pub fn read_patterns(
    patterns: &str,
    configs: Option<&str>,
) -> Result<Vec<PatternStats>, MinerError> {
    let bad = |i: usize| MinerError::Config(format!("pattern file line {}", i + 1));
    let mut cfg_lines = configs.map(|c| c.lines());
    let mut out = Vec::new();
    for (i, line) in patterns
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
    {
        let mut parts = line.split_whitespace();
        let (Some(signature), Some(count)) = (parts.next(), parts.next()) else {
            return Err(bad(i));
        };
        let count: u64 = count.parse().map_err(|_| bad(i))?;
        let configs = match cfg_lines.as_mut().and_then(|l| l.next()) {
            Some(l) => l
                .split("##")
                .filter(|s| !s.is_empty())
                .map(str::to_string)
                .collect(),
            None => BTreeSet::new(),
        };
        out.push(PatternStats {
            signature: signature.to_string(),
            count,
            significance: 0.0,
            configs,
        });
    }
    let total: u64 = out.iter().map(|s| s.count).sum();
    for s in &mut out {
        s.significance = s.count as f64 / total.max(1) as f64;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dag::parse_dag;

    fn chain() -> FormulaDag {
        parse_dag("0 = S BOOL a\n1 = NOT BOOL 0\n2 = NOT BOOL 1\n3 = NOT BOOL 2\n3").unwrap()
    }

    #[test]
    fn single_node_never_samples() {
        let d = parse_dag("0 = S BOOL a\n0").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!((0..1000).all(|_| sample_pattern(&d, 2, 3, &mut rng).is_none()));
    }

    #[test]
    fn boundary_has_no_tree_edges() {
        let d =
            parse_dag("0 = S BOOL a\n1 = NOT BOOL 0\n2 = NOT BOOL 1\n3 = AND BOOL 2 1\n3").unwrap();
        // Root 3 sees 2 and 1; 1 is also an operand of 2 but already seen.
        assert_eq!(boundary(&d, &[3], &[]), vec![(0, 0, 2), (0, 1, 1)]);
        assert_eq!(boundary(&d, &[3, 2], &[(0, 0)]), vec![(0, 1, 1)]);
    }

    #[test]
    fn sibling_sets_have_two_sequences() {
        let d = parse_dag(
            "0 = S BOOL a\n1 = NOT BOOL 0\n2 = NOT BOOL 0\n3 = AND BOOL 1 2\n4 = NOT BOOL 1\n3",
        )
        .unwrap();
        assert_eq!(pick_sequences(&d, &[3, 1, 2]), 2);
        assert_eq!(pick_sequences(&d, &[3, 1]), 1);
    }

    #[test]
    fn rooted_sets_enumerates_connected_sets() {
        let d = chain();
        assert_eq!(rooted_sets(&d, 3, 2), vec![vec![2, 3]]);
        assert_eq!(rooted_sets(&d, 3, 3), vec![vec![1, 2, 3]]);
        assert!(rooted_sets(&d, 1, 2).is_empty());
        assert!(rooted_sets(&d, 0, 2).is_empty());
    }

    #[test]
    fn rejects_bad_config() {
        let d = parse_dag("0 = S BOOL a\n1 = S BOOL b\n2 = AND BOOL 0 1\n2").unwrap();
        let cfg = MinerConfig {
            n: 1,
            ..Default::default()
        };
        assert!(matches!(
            mine(std::slice::from_ref(&d), &cfg),
            Err(MinerError::Config(_))
        ));
        let cfg = MinerConfig {
            t: 1,
            ..Default::default()
        };
        assert!(matches!(
            mine(std::slice::from_ref(&d), &cfg),
            Err(MinerError::Config(_))
        ));
        assert_eq!(
            mine(&[], &MinerConfig::default()),
            Err(MinerError::EmptyCorpus)
        );
        let wide = crate::dag::parse_dag_with(
            "0 = S INT i\n1 = CONST INT 0\n2 = ARRACC INT 0 1 1 1\n2",
            8,
        )
        .unwrap();
        assert!(matches!(
            mine(&[wide], &MinerConfig::default()),
            Err(MinerError::Degree { .. })
        ));
    }

    #[test]
    fn mining_is_deterministic() {
        let d = parse_dag(
            "0 = S BOOL a\n1 = S BOOL b\n2 = AND BOOL 0 1\n3 = NOT BOOL 2\n4 = OR BOOL 3 2\n5 = NOT BOOL 4\n5",
        )
        .unwrap();
        let cfg = MinerConfig {
            n: 2,
            m: 2000,
            ..Default::default()
        };
        let a = mine(std::slice::from_ref(&d), &cfg).unwrap();
        let b = mine(&[d], &cfg).unwrap();
        assert_eq!(a, b);
        let sum: f64 = a.iter().map(|s| s.significance).sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn file_round_trip() {
        let stats = vec![PatternStats {
            signature: "(NOT|(S:N_1:BOOL)|)".into(),
            count: 3,
            significance: 1.0,
            configs: [
                "(NOT|(S:N_1:BOOL:R(0-1))|)".to_string(),
                "(NOT|(S:N_1:BOOL:L(|0|))|)".to_string(),
            ]
            .into(),
        }];
        let p = write_patterns(&stats);
        assert_eq!(p, "(NOT|(S:N_1:BOOL)|) 3 2\n");
        let back = read_patterns(&p, Some(&write_configs(&stats))).unwrap();
        assert_eq!(back, stats);
    }
}
