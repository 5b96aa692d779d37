use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use simplgen::engine::{simplify, size_metric};
use simplgen::matcher::Matcher;
use simplgen::miner::{read_patterns, write_configs, write_patterns};
use simplgen::synth::{load_rules, recheck_rule, save_rules, verify_rule};
use simplgen::tuner::{
    read_manifest as read_order, tune, write_manifest as write_order, MedianOf, Metric, SizeMetric,
};
use simplgen::{serialize_dag, FormulaDag};
use simplgen_cli::config::PipelineConfig;
use simplgen_cli::corpus::{
    filter_corpus, list_corpus, load_all, load_dag, read_manifest, split_corpus, write_manifest,
};
use simplgen_cli::pipeline::{mine_all, synth_all, write_trace, CommandMetric};
use simplgen_cli::planted::{planted_corpus, PlantedConfig};
use simplgen_cli::report::{percentile_table, write_csv, Row};

#[derive(Parser)]
#[command(
    name = "simplgen",
    version,
    about = "Mine, synthesize, tune and apply formula rewrite rules"
)]
struct Cli {
    /// TOML experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (all cores by default).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic corpus with planted patterns.
    GenCorpus {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 60)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 2000)]
        min_nodes: usize,
        #[arg(long, default_value_t = 5000)]
        max_nodes: usize,
    },
    /// Split a corpus into Search, Train and Test manifests.
    Split {
        /// Corpus directory or manifest.
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated Search, Train and Test shares.
        #[arg(long, value_delimiter = ',')]
        fractions: Option<Vec<f64>>,
        /// Exchange Train and Test, for the second fold.
        #[arg(long)]
        swap: bool,
    },
    /// Keep benchmarks above a size threshold and inside a cost window.
    Filter {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        min_terms: Option<usize>,
        /// Command whose run time on a benchmark is its cost.
        #[arg(long)]
        cost_cmd: Option<String>,
        #[arg(long)]
        min_cost: Option<f64>,
        #[arg(long)]
        max_cost: Option<f64>,
    },
    /// Sample frequent patterns; writes patterns.txt and configs.txt.
    Mine {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        t: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Synthesize verified rules for mined patterns.
    Synth {
        /// Directory written by `mine`.
        #[arg(long)]
        patterns: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compile rules into a matcher file.
    Compile {
        #[arg(long)]
        rules: PathBuf,
        /// Rule-id manifest written by `tune`; all rules when absent.
        #[arg(long)]
        order: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Choose and order rules on a training set.
    Tune {
        #[arg(long)]
        rules: PathBuf,
        #[arg(long)]
        train: PathBuf,
        /// Rule-id manifest of the best configuration.
        #[arg(long)]
        out: PathBuf,
        /// JSON-lines log of every evaluation.
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Tune on the run time of this command instead of DAG size.
        #[arg(long)]
        metric_cmd: Option<String>,
    },
    /// Apply a matcher to one DAG.
    Simplify {
        #[arg(long)]
        matcher: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// JSON-lines rewrite trace.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Re-check every rule of a rule directory.
    Verify {
        #[arg(long)]
        rules: PathBuf,
        #[arg(long)]
        width: Option<u32>,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Size table of a corpus before and after a matcher.
    Report {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        matcher: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        metric_cmd: Option<String>,
    },
}

fn inputs(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_dir() {
        list_corpus(path)
    } else {
        read_manifest(path)
    }
}

fn load_matcher(path: &Path) -> Result<Matcher> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Matcher::deserialize(&bytes).with_context(|| format!("loading matcher {}", path.display()))
}

fn command_metric(cmd: &str, reps: usize) -> Result<MedianOf<CommandMetric>> {
    let inner = CommandMetric::parse(cmd).context("empty metric command")?;
    Ok(MedianOf { inner, reps })
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    match cli.cmd {
        Cmd::GenCorpus {
            out,
            count,
            seed,
            min_nodes,
            max_nodes,
        } => {
            if min_nodes > max_nodes {
                bail!("--min-nodes exceeds --max-nodes");
            }
            fs::create_dir_all(&out)?;
            let pc = PlantedConfig {
                min_nodes,
                max_nodes,
                ..PlantedConfig::default()
            };
            for (i, p) in planted_corpus(count, &pc, seed).iter().enumerate() {
                fs::write(out.join(format!("b{i:03}.dag")), serialize_dag(&p.dag))?;
            }
        }
        Cmd::Split {
            corpus,
            out,
            seed,
            fractions,
            swap,
        } => {
            let files = inputs(&corpus)?;
            let fr = match fractions {
                Some(f) if f.len() == 3 => [f[0], f[1], f[2]],
                Some(_) => bail!("--fractions takes three values"),
                None => cfg.split.fractions,
            };
            let mut s = split_corpus(&files, fr, seed.unwrap_or(cfg.split.seed))?;
            if swap {
                s = s.swapped();
            }
            fs::create_dir_all(&out)?;
            write_manifest(&out.join("search.txt"), &s.search)?;
            write_manifest(&out.join("train.txt"), &s.train)?;
            write_manifest(&out.join("test.txt"), &s.test)?;
        }
        Cmd::Filter {
            corpus,
            out,
            min_terms,
            cost_cmd,
            min_cost,
            max_cost,
        } => {
            let files = inputs(&corpus)?;
            let dags = load_all(&files)?;
            let hook = cost_cmd
                .map(|c| command_metric(&c, cfg.metric_reps))
                .transpose()?;
            let keep = filter_corpus(
                &dags,
                min_terms.unwrap_or(cfg.filter.min_terms),
                hook.as_ref().map(|h| h as &dyn Metric),
                min_cost.or(cfg.filter.min_cost),
                max_cost.or(cfg.filter.max_cost),
            )?;
            let kept: Vec<PathBuf> = keep.into_iter().map(|i| files[i].clone()).collect();
            write_manifest(&out, &kept)?;
        }
        Cmd::Mine {
            corpus,
            out,
            n,
            m,
            epsilon,
            t,
            seed,
        } => {
            if let Some(n) = n {
                cfg.pattern_sizes = vec![n];
            }
            cfg.miner.m = m.unwrap_or(cfg.miner.m);
            cfg.miner.epsilon = epsilon.unwrap_or(cfg.miner.epsilon);
            cfg.miner.t = t.unwrap_or(cfg.miner.t);
            cfg.miner.seed = seed.unwrap_or(cfg.miner.seed);
            let dags = load_all(&inputs(&corpus)?)?;
            let stats = mine_all(&dags, &cfg)?;
            fs::create_dir_all(&out)?;
            fs::write(out.join("patterns.txt"), write_patterns(&stats))?;
            fs::write(out.join("configs.txt"), write_configs(&stats))?;
        }
        Cmd::Synth {
            patterns,
            out,
            epsilon,
            seed,
        } => {
            let p = fs::read_to_string(patterns.join("patterns.txt"))
                .context("reading patterns.txt")?;
            let c = fs::read_to_string(patterns.join("configs.txt")).ok();
            let stats = read_patterns(&p, c.as_deref())?;
            cfg.synth_epsilon = epsilon.unwrap_or(cfg.synth_epsilon);
            cfg.synth.seed = seed.unwrap_or(cfg.synth.seed);
            let rules = synth_all(&stats, &cfg)?;
            save_rules(&out, &rules)?;
            println!("{} rules", rules.len());
        }
        Cmd::Compile { rules, order, out } => {
            let rules = load_rules(&rules)?;
            let order = order.map(|o| {
                fs::read_to_string(&o)
                    .map_err(anyhow::Error::from)
                    .and_then(|t| Ok(read_order(&t)?))
            });
            let order = order.transpose()?;
            let m = Matcher::compile(&rules, order.as_deref())?.with_semantics(cfg.tuner.sem);
            fs::write(&out, m.serialize())?;
        }
        Cmd::Tune {
            rules,
            train,
            out,
            log,
            budget,
            seed,
            metric_cmd,
        } => {
            let rules = load_rules(&rules)?;
            let train = load_all(&inputs(&train)?)?;
            cfg.tuner.budget = budget.unwrap_or(cfg.tuner.budget);
            cfg.tuner.seed = seed.unwrap_or(cfg.tuner.seed);
            let mut log_file = log
                .map(|l| fs::File::create(&l).map(BufWriter::new))
                .transpose()?;
            let log_ref = log_file.as_mut().map(|w| w as &mut dyn std::io::Write);
            let (best, report) = match metric_cmd {
                Some(c) => tune(
                    &rules,
                    &train,
                    &command_metric(&c, cfg.metric_reps)?,
                    &cfg.tuner,
                    log_ref,
                )?,
                None => tune(&rules, &train, &SizeMetric, &cfg.tuner, log_ref)?,
            };
            fs::write(&out, write_order(&best.order()))?;
            println!(
                "score {:.6} with {} rules",
                report.score, best.selected_count
            );
        }
        Cmd::Simplify {
            matcher,
            input,
            out,
            trace,
        } => {
            let m = load_matcher(&matcher)?;
            let dag = load_dag(&input)?;
            let sem = m.analysis().sem;
            let res = simplify(&dag, &m, &cfg.tuner.limits, &sem);
            fs::write(&out, serialize_dag(&res.dag))?;
            if let Some(t) = trace {
                write_trace(&res.trace, BufWriter::new(fs::File::create(&t)?))?;
            }
        }
        Cmd::Verify {
            rules,
            width,
            samples,
            seed,
        } => {
            let rules = load_rules(&rules)?;
            let w = width.unwrap_or(cfg.synth.oracle_width);
            let mut bad = 0;
            for (i, r) in rules.iter().enumerate() {
                let ok = verify_rule(r, w) && recheck_rule(r, w + 2, samples, seed);
                println!("rule {i}: {}", if ok { "ok" } else { "FAIL" });
                bad += usize::from(!ok);
            }
            if bad > 0 {
                bail!("{bad} of {} rules failed verification", rules.len());
            }
        }
        Cmd::Report {
            corpus,
            matcher,
            csv,
            metric_cmd,
        } => {
            let files = inputs(&corpus)?;
            let dags = load_all(&files)?;
            let m = load_matcher(&matcher)?;
            let sem = m.analysis().sem;
            let empty = Matcher::compile(&[], None)?;
            let metric = metric_cmd
                .map(|c| command_metric(&c, cfg.metric_reps))
                .transpose()?;
            let measure = |d: &FormulaDag| -> Result<Option<f64>> {
                metric
                    .as_ref()
                    .map(|mm| mm.measure(d).map_err(anyhow::Error::msg))
                    .transpose()
            };
            let mut rows = Vec::with_capacity(dags.len());
            for (f, d) in files.iter().zip(&dags) {
                let base = simplify(d, &empty, &cfg.tuner.limits, &sem).dag;
                let simp = simplify(d, &m, &cfg.tuner.limits, &sem).dag;
                rows.push(Row {
                    benchmark: f.display().to_string(),
                    baseline_size: size_metric(&base),
                    simplified_size: size_metric(&simp),
                    baseline_metric: measure(&base)?,
                    simplified_metric: measure(&simp)?,
                });
            }
            if let Some(c) = csv {
                write_csv(&rows, fs::File::create(&c)?)?;
            }
            print!("{}", percentile_table(&rows));
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .ok();
    }
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
