//! Budgeted search over rule subsets and orderings.
//!
//! Rules are partitioned into interaction groups. A configuration picks a
//! priority list of rules (its prefix of `selected_count` entries is the
//! active set) and one permutation per group (the relative priority of
//! active rules that can interfere with each other). The search is random
//! restarts plus greedy local moves, scored by [`fopt`].

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;

use petgraph::unionfind::UnionFind;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dag::{FormulaDag, NodeId};
use crate::engine::{simplify, size_metric, Limits};
use crate::eval::Semantics;
use crate::matcher::{Matcher, MatcherError};
use crate::pattern::Pattern;
use crate::synth::RewriteRule;

#[derive(Debug, Error)]
pub enum TunerError {
    #[error("invalid tuner configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Matcher(#[from] MatcherError),
    #[error("cannot write tuning log: {0}")]
    Log(#[from] std::io::Error),
}

fn unifies(a: &Pattern, x: NodeId, b: &Pattern, y: NodeId) -> bool {
    let (p, q) = (a.dag().node(x), b.dag().node(y));
    if p.sort != q.sort {
        return false;
    }
    if p.name().is_some() || q.name().is_some() {
        return true;
    }
    if p.op != q.op || p.operands.len() != q.operands.len() || p.const_value() != q.const_value() {
        return false;
    }
    let pairwise = |ops: &[NodeId]| {
        ops.iter()
            .zip(&q.operands)
            .all(|(&u, &v)| unifies(a, u, b, v))
    };
    if pairwise(&p.operands) {
        return true;
    }
    p.op.is_commutative() && p.operands.len() == 2 && pairwise(&[p.operands[1], p.operands[0]])
}

/// `a`'s left-hand side unifies with some operation node of `b`'s.
fn overlaps(a: &Pattern, b: &Pattern) -> bool {
    b.dag()
        .nodes()
        .iter()
        .enumerate()
        .any(|(y, n)| !n.op.is_leaf() && unifies(a, a.root(), b, y))
}

/// Finest partition where rules sharing a root operation, or whose
/// left-hand sides overlap, are together. Groups are sorted by smallest id.
pub fn interaction_groups(rules: &[RewriteRule]) -> Vec<Vec<usize>> {
    let mut uf = UnionFind::<usize>::new(rules.len());
    for i in 0..rules.len() {
        for j in i + 1..rules.len() {
            let (a, b) = (&rules[i].lhs, &rules[j].lhs);
            if a.root_node().op == b.root_node().op || overlaps(a, b) || overlaps(b, a) {
                uf.union(i, j);
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..rules.len() {
        groups.entry(uf.find(i)).or_default().push(i);
    }
    let mut out: Vec<Vec<usize>> = groups.into_values().collect();
    out.sort();
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TunerConfig {
    pub selected_count: usize,
    /// Group index -> that group's rule ids, highest priority first.
    pub group_permutations: BTreeMap<usize, Vec<usize>>,
    /// Every rule id once; the first `selected_count` are active.
    pub selection: Vec<usize>,
}

impl TunerConfig {
    /// No rules active, identity permutations.
    pub fn empty(groups: &[Vec<usize>]) -> Self {
        let group_permutations: BTreeMap<usize, Vec<usize>> =
            groups.iter().cloned().enumerate().collect();
        let mut selection: Vec<usize> = groups.iter().flatten().copied().collect();
        selection.sort_unstable();
        TunerConfig {
            selected_count: 0,
            group_permutations,
            selection,
        }
    }

    pub fn validate(&self, groups: &[Vec<usize>]) -> Result<(), TunerError> {
        let total: usize = groups.iter().map(Vec::len).sum();
        if self.selected_count > total {
            return Err(TunerError::Config(format!(
                "{} rules selected out of {total}",
                self.selected_count
            )));
        }
        let mut sel = self.selection.clone();
        sel.sort_unstable();
        if sel != (0..total).collect::<Vec<_>>() {
            return Err(TunerError::Config(
                "selection is not a permutation of the rules".into(),
            ));
        }
        if self.group_permutations.len() != groups.len() {
            return Err(TunerError::Config(
                "wrong number of group permutations".into(),
            ));
        }
        for (g, members) in groups.iter().enumerate() {
            let mut perm = self.group_permutations.get(&g).cloned().unwrap_or_default();
            perm.sort_unstable();
            if perm != *members {
                return Err(TunerError::Config(format!(
                    "group {g} permutation is not a bijection"
                )));
            }
        }
        Ok(())
    }

    pub fn active(&self) -> BTreeSet<usize> {
        self.selection[..self.selected_count]
            .iter()
            .copied()
            .collect()
    }

    /// Active rule ids in matcher priority order: groups in index order,
    /// each following its permutation.
    pub fn order(&self) -> Vec<usize> {
        let active = self.active();
        self.group_permutations
            .values()
            .flatten()
            .copied()
            .filter(|r| active.contains(r))
            .collect()
    }
}

/// Cost of one simplified benchmark; lower is better.
pub trait Metric: Sync {
    fn measure(&self, dag: &FormulaDag) -> Result<f64, String>;

    fn repetitions(&self) -> usize {
        1
    }
}

pub struct SizeMetric;

impl Metric for SizeMetric {
    fn measure(&self, dag: &FormulaDag) -> Result<f64, String> {
        Ok(size_metric(dag) as f64)
    }
}

/// Median of `reps` runs of a noisy metric.
pub struct MedianOf<M> {
    pub inner: M,
    pub reps: usize,
}

impl<M: Metric> Metric for MedianOf<M> {
    fn measure(&self, dag: &FormulaDag) -> Result<f64, String> {
        let mut xs = (0..self.reps.max(1))
            .map(|_| self.inner.measure(dag))
            .collect::<Result<Vec<_>, _>>()?;
        xs.sort_by(f64::total_cmp);
        let k = xs.len();
        Ok(if k % 2 == 1 {
            xs[k / 2]
        } else {
            (xs[k / 2 - 1] + xs[k / 2]) / 2.0
        })
    }

    fn repetitions(&self) -> usize {
        self.reps.max(1) * self.inner.repetitions()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TuneOptions {
    pub budget: usize,
    pub seed: u64,
    pub penalty_factor: f64,
    /// Fruitless greedy moves before a restart.
    pub patience: usize,
    pub limits: Limits,
    pub sem: Semantics,
}

impl Default for TuneOptions {
    fn default() -> Self {
        TuneOptions {
            budget: 150,
            seed: 0,
            penalty_factor: 4.0,
            patience: 12,
            limits: Limits::default(),
            sem: Semantics::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub baseline: Vec<f64>,
    pub tuned: Vec<f64>,
    pub rewards: Vec<f64>,
    /// Benchmarks whose metric failed and got the worst-case reward.
    pub failed: Vec<bool>,
    pub score: f64,
    pub repetitions: usize,
    pub policy: String,
}

/// Reward of one benchmark.
pub fn reward(baseline: f64, tuned: f64, penalty_factor: f64) -> f64 {
    let r = if baseline > 0.0 {
        (baseline - tuned) / baseline
    } else if tuned <= baseline {
        0.0
    } else {
        -1.0
    };
    if r >= 0.0 {
        r
    } else {
        penalty_factor * r
    }
}

/// Scores configurations against a fixed training set, measuring the
/// baseline once.
pub struct Evaluator<'a, M: Metric> {
    rules: &'a [RewriteRule],
    train: &'a [FormulaDag],
    metric: &'a M,
    opts: TuneOptions,
    baseline: Vec<Result<f64, String>>,
}

impl<'a, M: Metric> Evaluator<'a, M> {
    pub fn new(
        rules: &'a [RewriteRule],
        train: &'a [FormulaDag],
        metric: &'a M,
        opts: TuneOptions,
    ) -> Self {
        let empty = Matcher::compile(&[], None).expect("empty matcher");
        let baseline = train
            .par_iter()
            .map(|d| metric.measure(&simplify(d, &empty, &opts.limits, &opts.sem).dag))
            .collect();
        Evaluator {
            rules,
            train,
            metric,
            opts,
            baseline,
        }
    }

    pub fn fopt(&self, cfg: &TunerConfig) -> Result<EvalReport, TunerError> {
        let m = Matcher::compile(self.rules, Some(&cfg.order()))?.with_semantics(self.opts.sem);
        let tuned: Vec<Result<f64, String>> = self
            .train
            .par_iter()
            .map(|d| {
                self.metric
                    .measure(&simplify(d, &m, &self.opts.limits, &self.opts.sem).dag)
            })
            .collect();
        let k = self.opts.penalty_factor;
        let mut report = EvalReport {
            baseline: Vec::new(),
            tuned: Vec::new(),
            rewards: Vec::new(),
            failed: Vec::new(),
            score: 0.0,
            repetitions: self.metric.repetitions(),
            policy: if self.metric.repetitions() > 1 {
                "median"
            } else {
                "single"
            }
            .into(),
        };
        for (b, t) in self.baseline.iter().zip(tuned) {
            let (b, t, r, f) = match (b, t) {
                (Ok(b), Ok(t)) => (*b, t, reward(*b, t, k), false),
                (b, t) => (
                    *b.as_ref().unwrap_or(&f64::NAN),
                    t.unwrap_or(f64::NAN),
                    -k,
                    true,
                ),
            };
            report.baseline.push(b);
            report.tuned.push(t);
            report.rewards.push(r);
            report.failed.push(f);
        }
        if !report.rewards.is_empty() {
            report.score = report.rewards.iter().sum::<f64>() / report.rewards.len() as f64;
        }
        Ok(report)
    }
}

/// Scores one configuration under `metric` on `train`.
pub fn fopt<M: Metric>(
    cfg: &TunerConfig,
    rules: &[RewriteRule],
    train: &[FormulaDag],
    metric: &M,
    opts: &TuneOptions,
) -> Result<EvalReport, TunerError> {
    Evaluator::new(rules, train, metric, *opts).fopt(cfg)
}

#[derive(Debug, Clone, Copy)]
enum Move {
    Out(usize),
    In(usize),
    Replace(usize, usize),
    Swap(usize, usize),
    More,
    Fewer,
}

fn moves(cfg: &TunerConfig) -> Vec<Move> {
    let (k, n) = (cfg.selected_count, cfg.selection.len());
    let mut out: Vec<Move> = (0..k).map(Move::Out).collect();
    out.extend((k..n).map(Move::In));
    for i in 0..k {
        out.extend((k..n).map(|j| Move::Replace(i, j)));
    }
    for (&g, perm) in &cfg.group_permutations {
        out.extend((1..perm.len()).map(|i| Move::Swap(g, i)));
    }
    if k < n {
        out.push(Move::More);
    }
    if k > 0 {
        out.push(Move::Fewer);
    }
    out
}

fn apply(cfg: &TunerConfig, mv: Move) -> TunerConfig {
    let mut c = cfg.clone();
    let k = c.selected_count;
    match mv {
        Move::Out(i) => {
            let r = c.selection.remove(i);
            c.selection.insert(k - 1, r);
            c.selected_count -= 1;
        }
        Move::In(j) => {
            let r = c.selection.remove(j);
            c.selection.insert(k, r);
            c.selected_count += 1;
        }
        Move::Replace(i, j) => c.selection.swap(i, j),
        Move::Swap(g, i) => c.group_permutations.get_mut(&g).unwrap().swap(i - 1, i),
        Move::More => c.selected_count += 1,
        Move::Fewer => c.selected_count -= 1,
    }
    c
}

fn random_config(groups: &[Vec<usize>], rng: &mut ChaCha8Rng) -> TunerConfig {
    let mut c = TunerConfig::empty(groups);
    c.selection.shuffle(rng);
    for perm in c.group_permutations.values_mut() {
        perm.shuffle(rng);
    }
    c.selected_count = if c.selection.is_empty() {
        0
    } else {
        rng.gen_range(1..=c.selection.len())
    };
    c
}

#[derive(Serialize)]
struct LogLine<'a> {
    eval: usize,
    config: &'a TunerConfig,
    order: Vec<usize>,
    score: f64,
    rewards: &'a [f64],
}

/// Outcome of [`search`].
#[derive(Debug, Clone)]
pub struct SearchResult<R> {
    pub best: TunerConfig,
    pub best_report: R,
    pub evaluations: usize,
}

/// Random-restart greedy search over configurations of `groups`. `eval`
/// returns a score (higher is better) and a report. Configurations with the
/// same effective rule order are scored once. The empty configuration is
/// evaluated first.
pub fn search<R: Clone, E>(
    groups: &[Vec<usize>],
    budget: usize,
    seed: u64,
    patience: usize,
    mut eval: impl FnMut(&TunerConfig, usize) -> Result<(f64, R), E>,
) -> Result<SearchResult<R>, E> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen: HashMap<Vec<usize>, f64> = HashMap::new();
    let mut evaluations = 0;
    let empty = TunerConfig::empty(groups);
    let (s, r) = eval(&empty, 0)?;
    evaluations += 1;
    seen.insert(empty.order(), s);
    let (mut best, mut best_score, mut best_report) = (empty, s, r);

    let space: usize = groups.iter().map(Vec::len).sum();
    // Proposals that hit the cache cost nothing, so cap them separately.
    let mut proposals = 0usize;
    let max_proposals = budget.saturating_mul(50).max(100);
    'restart: while evaluations < budget && proposals < max_proposals && space > 0 {
        let mut cur = random_config(groups, &mut rng);
        proposals += 1;
        let mut cur_score = match seen.get(&cur.order()) {
            Some(&s) => s,
            None => {
                let (s, r) = eval(&cur, evaluations)?;
                evaluations += 1;
                seen.insert(cur.order(), s);
                if s > best_score {
                    (best, best_score, best_report) = (cur.clone(), s, r);
                }
                s
            }
        };
        let mut fruitless = 0;
        loop {
            let mut mv = moves(&cur);
            mv.shuffle(&mut rng);
            let mut improved = false;
            for m in mv {
                if evaluations >= budget || proposals >= max_proposals {
                    break 'restart;
                }
                proposals += 1;
                let next = apply(&cur, m);
                let key = next.order();
                let s = match seen.get(&key) {
                    Some(&s) => s,
                    None => {
                        let (s, r) = eval(&next, evaluations)?;
                        evaluations += 1;
                        seen.insert(key, s);
                        if s > best_score {
                            (best, best_score, best_report) = (next.clone(), s, r);
                        }
                        s
                    }
                };
                if s > cur_score {
                    (cur, cur_score) = (next, s);
                    improved = true;
                    fruitless = 0;
                    break;
                }
                fruitless += 1;
                if fruitless >= patience {
                    continue 'restart;
                }
            }
            if !improved {
                continue 'restart;
            }
        }
    }
    Ok(SearchResult {
        best,
        best_report,
        evaluations,
    })
}

/// Tunes `rules` on `train`; each evaluation is appended to `log` as a
/// JSON line when given.
pub fn tune<M: Metric>(
    rules: &[RewriteRule],
    train: &[FormulaDag],
    metric: &M,
    opts: &TuneOptions,
    mut log: Option<&mut dyn Write>,
) -> Result<(TunerConfig, EvalReport), TunerError> {
    if opts.budget == 0 {
        return Err(TunerError::Config("budget must be at least 1".into()));
    }
    let groups = interaction_groups(rules);
    let ev = Evaluator::new(rules, train, metric, *opts);
    let res = search(
        &groups,
        opts.budget,
        opts.seed,
        opts.patience.max(1),
        |cfg, k| {
            let rep = ev.fopt(cfg)?;
            if let Some(w) = log.as_deref_mut() {
                let line = LogLine {
                    eval: k,
                    config: cfg,
                    order: cfg.order(),
                    score: rep.score,
                    rewards: &rep.rewards,
                };
                writeln!(w, "{}", serde_json::to_string(&line).expect("log line"))?;
            }
            Ok::<_, TunerError>((rep.score, rep))
        },
    )?;
    Ok((res.best, res.best_report))
}

/// Ordered rule ids, one per line.
pub fn write_manifest(order: &[usize]) -> String {
    order.iter().map(|r| format!("{r}\n")).collect()
}

pub fn read_manifest(text: &str) -> Result<Vec<usize>, TunerError> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            l.parse()
                .map_err(|_| TunerError::Config(format!("bad rule id {l:?}")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dag::parse_dag;
    use crate::predicate::Predicate;

    fn rule(lhs: &str, rhs: &str) -> RewriteRule {
        let p = |t: &str| Pattern::new(parse_dag(t).unwrap()).unwrap();
        RewriteRule::new(p(lhs), Predicate::truth(), p(rhs), 4).unwrap()
    }

    fn and_rule() -> RewriteRule {
        rule("0 = S BOOL a\n1 = AND BOOL 0 0\n1", "0 = S BOOL a\n0")
    }

    fn or_rule() -> RewriteRule {
        rule("0 = S BOOL a\n1 = OR BOOL 0 0\n1", "0 = S BOOL a\n0")
    }

    #[test]
    fn groups_by_root_and_overlap() {
        let mux = rule(
            "0 = S INT t\n1 = S INT c\n2 = ARRACC INT 0 1 1\n2",
            "0 = S INT c\n0",
        );
        assert_eq!(
            interaction_groups(&[mux, or_rule()]),
            vec![vec![0], vec![1]]
        );
        assert_eq!(
            interaction_groups(&[and_rule(), and_rule()]),
            vec![vec![0, 1]]
        );
        let b = rule(
            "0 = S BOOL a\n1 = NOT BOOL 0\n2 = AND BOOL 0 1\n2",
            "0 = CONST BOOL 0\n0",
        );
        let c = rule(
            "0 = S BOOL a\n1 = AND BOOL 0 0\n2 = S BOOL b\n3 = OR BOOL 1 2\n3",
            "0 = S BOOL a\n1 = S BOOL b\n2 = OR BOOL 0 1\n2",
        );
        assert_eq!(
            interaction_groups(&[and_rule(), b, c.clone()]),
            vec![vec![0, 1, 2]]
        );
        assert_eq!(interaction_groups(&[or_rule(), c]), vec![vec![0, 1]]);
    }

    #[test]
    fn config_order_and_validation() {
        let groups = vec![vec![0, 2], vec![1]];
        let mut c = TunerConfig::empty(&groups);
        assert!(c.order().is_empty());
        c.selected_count = 2;
        c.selection = vec![2, 1, 0];
        c.group_permutations.insert(0, vec![2, 0]);
        assert_eq!(c.order(), vec![2, 1]);
        c.validate(&groups).unwrap();
        c.selected_count = 4;
        assert!(c.validate(&groups).is_err());
        c.selected_count = 1;
        c.group_permutations.insert(0, vec![2, 2]);
        assert!(c.validate(&groups).is_err());
    }

    #[test]
    fn reward_is_asymmetric() {
        assert_eq!(reward(100.0, 90.0, 4.0), 0.1);
        assert_eq!(reward(100.0, 110.0, 4.0), -0.4);
        assert_eq!(reward(0.0, 0.0, 4.0), 0.0);
        assert_eq!(reward(0.0, 3.0, 4.0), -4.0);
    }

    #[test]
    fn synthetic_table_picks_best_subset() {
        let groups = vec![vec![0], vec![1]];
        let table = |order: &[usize]| match order {
            [] => 0.0,
            [0] => 0.2,
            [1] => -0.1,
            _ => 0.05,
        };
        let res = search(&groups, 50, 1, 4, |c, _| {
            Ok::<_, ()>((table(&c.order()), ()))
        })
        .unwrap();
        assert_eq!(res.best.order(), vec![0]);
        assert!(res.evaluations <= 4);
    }

    #[test]
    fn one_rule_budget_three() {
        let groups = vec![vec![0]];
        let mut seen = Vec::new();
        let res = search(&groups, 3, 9, 4, |c, _| {
            seen.push(c.order());
            Ok::<_, ()>((c.selected_count as f64, ()))
        })
        .unwrap();
        assert_eq!(seen, vec![vec![], vec![0]]);
        assert_eq!(res.best.order(), vec![0]);
    }

    #[test]
    fn fopt_scores() {
        let d =
            parse_dag("0 = S BOOL x\n1 = AND BOOL 0 0\n2 = S BOOL y\n3 = OR BOOL 1 2\n3").unwrap();
        let rules = vec![and_rule(), or_rule()];
        let groups = interaction_groups(&rules);
        let train = vec![d];
        let opts = TuneOptions::default();
        let empty = fopt(
            &TunerConfig::empty(&groups),
            &rules,
            &train,
            &SizeMetric,
            &opts,
        )
        .unwrap();
        assert_eq!(empty.score, 0.0);
        let mut c = TunerConfig::empty(&groups);
        c.selected_count = 1;
        c.selection = vec![1, 0];
        assert_eq!(
            fopt(&c, &rules, &train, &SizeMetric, &opts).unwrap().score,
            0.0
        );
        c.selection = vec![0, 1];
        let rep = fopt(&c, &rules, &train, &SizeMetric, &opts).unwrap();
        assert_eq!(rep.score, 0.5);
        assert_eq!(rep.baseline, vec![2.0]);
    }

    #[test]
    fn tune_is_deterministic_and_logs() {
        let d =
            parse_dag("0 = S BOOL x\n1 = AND BOOL 0 0\n2 = S BOOL y\n3 = OR BOOL 1 2\n3").unwrap();
        let rules = vec![and_rule(), or_rule()];
        let train = vec![d];
        let opts = TuneOptions {
            budget: 10,
            seed: 3,
            ..TuneOptions::default()
        };
        let mut log = Vec::new();
        let (a, ra) = tune(&rules, &train, &SizeMetric, &opts, Some(&mut log)).unwrap();
        let (b, _) = tune(&rules, &train, &SizeMetric, &opts, None).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra.score, 0.5);
        let text = String::from_utf8(log).unwrap();
        assert!(text.lines().next().unwrap().contains("\"order\":[]"));
        assert!(text
            .lines()
            .all(|l| serde_json::from_str::<serde_json::Value>(l).is_ok()));
    }

    #[test]
    fn manifest_round_trip() {
        assert_eq!(
            read_manifest(&write_manifest(&[3, 0, 7])).unwrap(),
            vec![3, 0, 7]
        );
        assert!(read_manifest("x\n").is_err());
    }
}
