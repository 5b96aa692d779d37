//! Pipeline stages shared by the command line and the tests.

use std::io::Write;
use std::process::Command;
use std::time::Instant;

use anyhow::{Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use simplgen::engine::{simplify, size_metric, Limits, Simplified, TraceEntry};
use simplgen::eval::random_environment;
use simplgen::matcher::Matcher;
use simplgen::miner::{mine, PatternStats};
use simplgen::pattern::parse_signature;
use simplgen::synth::{parse_configs, synthesize_rules, RewriteRule};
use simplgen::tuner::{tune, EvalReport, Metric, TuneOptions, TunerConfig};
use simplgen::{evaluate, serialize_dag, FormulaDag, Semantics};

use crate::config::PipelineConfig;

/// Wall-clock seconds of an external command run on the DAG, whose text is
/// passed as a temporary file appended to the arguments.
pub struct CommandMetric {
    pub program: String,
    pub args: Vec<String>,
}

impl CommandMetric {
    /// Splits a command line on whitespace.
    pub fn parse(cmd: &str) -> Option<Self> {
        let mut parts = cmd.split_whitespace().map(str::to_string);
        Some(CommandMetric {
            program: parts.next()?,
            args: parts.collect(),
        })
    }
}

impl Metric for CommandMetric {
    fn measure(&self, dag: &FormulaDag) -> Result<f64, String> {
        let mut f = tempfile::Builder::new()
            .suffix(".dag")
            .tempfile()
            .map_err(|e| e.to_string())?;
        f.write_all(serialize_dag(dag).as_bytes())
            .map_err(|e| e.to_string())?;
        f.flush().map_err(|e| e.to_string())?;
        let start = Instant::now();
        let status = Command::new(&self.program)
            .args(&self.args)
            .arg(f.path())
            .stdout(std::process::Stdio::null())
            .status()
            .map_err(|e| format!("{}: {e}", self.program))?;
        let secs = start.elapsed().as_secs_f64();
        if status.success() {
            Ok(secs)
        } else {
            Err(format!("{} exited with {status}", self.program))
        }
    }
}

/// Mines every configured pattern size and merges the results, most
/// frequent first.
pub fn mine_all(dags: &[FormulaDag], cfg: &PipelineConfig) -> Result<Vec<PatternStats>> {
    let mut all = Vec::new();
    for &n in &cfg.pattern_sizes {
        let mc = simplgen::miner::MinerConfig {
            n,
            ..cfg.miner.clone()
        };
        all.extend(mine(dags, &mc).with_context(|| format!("mining patterns of size {n}"))?);
    }
    all.sort_by(|a, b| {
        b.count
            .cmp(&a.count)
            .then_with(|| a.signature.cmp(&b.signature))
    });
    Ok(all)
}

/// Rules for every pattern at least `cfg.synth_epsilon` significant, in
/// pattern order. Duplicates are dropped.
pub fn synth_all(stats: &[PatternStats], cfg: &PipelineConfig) -> Result<Vec<RewriteRule>> {
    let chosen: Vec<&PatternStats> = stats
        .iter()
        .filter(|s| s.significance >= cfg.synth_epsilon)
        .collect();
    let per: Vec<Vec<RewriteRule>> = chosen
        .par_iter()
        .map(|s| {
            let (lhs, _) = parse_signature(&s.signature)
                .with_context(|| format!("pattern {}", s.signature))?;
            let configs = parse_configs(s.configs.iter().map(String::as_str));
            Ok(synthesize_rules(&lhs, &configs, &cfg.synth).rules)
        })
        .collect::<Result<_>>()?;
    let mut seen = std::collections::HashSet::new();
    Ok(per
        .into_iter()
        .flatten()
        .filter(|r| seen.insert(r.to_string()))
        .collect())
}

#[derive(Serialize)]
struct TraceLine {
    rule: usize,
    node: usize,
    pass: usize,
}

pub fn write_trace<W: Write>(trace: &[TraceEntry], mut out: W) -> Result<()> {
    for t in trace {
        let line = TraceLine {
            rule: t.rule,
            node: t.node,
            pass: t.pass,
        };
        writeln!(out, "{}", serde_json::to_string(&line)?)?;
    }
    Ok(())
}

/// Root values of `a` and `b` agree on `envs` random environments over the
/// sources of `a`. Returns the first disagreeing environment index.
pub fn semantics_agree(
    a: &FormulaDag,
    b: &Simplified,
    sem: &Semantics,
    envs: usize,
    seed: u64,
) -> Result<(), usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in 0..envs {
        let env = random_environment(a, sem, &mut rng);
        let x = evaluate(a, &env, sem).map(|e| e.root_values(a));
        let y = evaluate(&b.dag, &env, sem).map(|e| {
            b.root_map
                .iter()
                .map(|&r| e.values[r].clone())
                .collect::<Vec<_>>()
        });
        match (x, y) {
            (Ok(x), Ok(y)) if x == y => {}
            _ => return Err(k),
        }
    }
    Ok(())
}

/// Baseline and simplified size of every benchmark under `m`.
pub fn sizes(
    dags: &[FormulaDag],
    m: &Matcher,
    limits: &Limits,
    sem: &Semantics,
) -> Vec<(usize, usize, Simplified)> {
    let empty = Matcher::compile(&[], None).expect("empty matcher");
    dags.par_iter()
        .map(|d| {
            let base = size_metric(&simplify(d, &empty, limits, sem).dag);
            let s = simplify(d, m, limits, sem);
            (base, size_metric(&s.dag), s)
        })
        .collect()
}

/// Relative reduction of the mean size, in percent.
pub fn mean_reduction(sizes: &[(usize, usize, Simplified)]) -> f64 {
    let base: usize = sizes.iter().map(|s| s.0).sum();
    let simp: usize = sizes.iter().map(|s| s.1).sum();
    if base == 0 {
        0.0
    } else {
        100.0 * (base as f64 - simp as f64) / base as f64
    }
}

/// Tuned configuration of one fold and its effect on held-out benchmarks.
#[derive(Debug, Clone)]
pub struct Fold {
    pub config: TunerConfig,
    pub train_report: EvalReport,
    pub order: Vec<usize>,
    pub test_reduction: f64,
    pub simplified: Vec<Simplified>,
}

/// Tunes on `train` with the size metric, then measures `test`.
pub fn run_fold<M: Metric>(
    rules: &[RewriteRule],
    train: &[FormulaDag],
    test: &[FormulaDag],
    metric: &M,
    opts: &TuneOptions,
    log: Option<&mut dyn Write>,
) -> Result<Fold> {
    let (config, train_report) = tune(rules, train, metric, opts, log)?;
    let order = config.order();
    let m = Matcher::compile(rules, Some(&order))?.with_semantics(opts.sem);
    let s = sizes(test, &m, &opts.limits, &opts.sem);
    let test_reduction = mean_reduction(&s);
    Ok(Fold {
        config,
        train_report,
        order,
        test_reduction,
        simplified: s.into_iter().map(|x| x.2).collect(),
    })
}
