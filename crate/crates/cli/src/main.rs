use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use treedens::distributions::{BenchmarkDistribution, DistributionSpec};
use treedens::experiment::{self, ExperimentConfig, InitialTree};
use treedens::tree_adapter::{optimize_tree, TreeProposalConfig};
use treedens::{Basis, DimensionTree, SampleSet, TreeTensor};

#[derive(Parser)]
#[command(name = "treedens", version, about = "Tree tensor density estimation")]
struct Cli {
    /// Worker threads for independent trials.
    #[arg(long, global = true, env = "TREEDENS_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Source {
    /// Experiment or distribution config (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Named distribution preset.
    #[arg(long)]
    preset: Option<String>,
    /// Master seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum Cmd {
    /// Fit one model, from a samples file or fresh samples of a distribution.
    Fit {
        #[command(flatten)]
        src: Source,
        /// Samples CSV (header x1,...,xd); requires --bases or a distribution.
        #[arg(long)]
        samples: Option<PathBuf>,
        /// JSON array of bases.
        #[arg(long)]
        bases: Option<PathBuf>,
        /// Number of samples to draw when no samples file is given.
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        #[arg(long, value_enum, default_value_t = TreeKind::RandomLinear)]
        tree: TreeKind,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Multi-trial experiment with results and aggregate tables.
    Experiment {
        #[command(flatten)]
        src: Source,
        /// Training sizes (comma separated), overriding the config.
        #[arg(long, value_delimiter = ',')]
        n: Vec<usize>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Compress the exact table of a discrete distribution.
    Compress {
        #[command(flatten)]
        src: Source,
        /// linear, permuted, balanced, random, a 1-based order like 1,3,2 or a tree JSON file.
        #[arg(long, default_value = "linear")]
        tree: String,
        #[arg(long, default_value_t = 1e-13)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the tree search on a saved model.
    Treeopt {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 1e-13)]
        eps: f64,
        #[arg(long, default_value_t = 100)]
        iterations: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw samples from a distribution.
    Sample {
        #[command(flatten)]
        src: Source,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        /// Output CSV (stdout when absent).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a saved model at points from a CSV file.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        points: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum TreeKind {
    RandomLinear,
    Linear,
    Balanced,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if let Some(te) = cause.downcast_ref::<treedens::Error>() {
            return if te.is_config() { 2 } else { 3 };
        }
    }
    2
}

fn run(cli: Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global().context("thread pool")?;
    }
    match cli.cmd {
        Cmd::Fit { src, samples, bases, n, tree, out } => fit(&src, samples, bases, n, tree, &out),
        Cmd::Experiment { src, n, trials, out } => run_experiment(&src, n, trials, &out),
        Cmd::Compress { src, tree, tol, out } => compress(&src, &tree, tol, out),
        Cmd::Treeopt { model, eps, iterations, seed, out } => treeopt(&model, eps, iterations, seed, out),
        Cmd::Sample { src, n, out } => sample(&src, n, out),
        Cmd::Eval { model, points, out } => eval(&model, &points, out),
    }
}

/// Experiment config from `--config`, or a default one around `--preset`.
fn experiment_config(src: &Source) -> Result<ExperimentConfig> {
    let mut cfg = match (&src.config, &src.preset) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            match serde_json::from_str::<ExperimentConfig>(&text) {
                Ok(c) => c,
                Err(full) => {
                    // a bare distribution spec is accepted too
                    let spec: DistributionSpec = serde_json::from_str(&text)
                        .map_err(|_| treedens::Error::Config(format!("{}: {full}", path.display())))?;
                    ExperimentConfig::for_distribution(spec, vec![10_000])
                }
            }
        }
        (None, Some(p)) => {
            ExperimentConfig::for_distribution(DistributionSpec::Preset { preset: p.clone(), seed: src.seed }, vec![10_000])
        }
        (None, None) => return Err(treedens::Error::Config("one of --config or --preset is required".into()).into()),
    };
    if src.config.is_some() && src.seed != 0 {
        cfg.seed = src.seed;
    }
    Ok(cfg)
}

fn distribution(src: &Source) -> Result<BenchmarkDistribution> {
    Ok(experiment_config(src)?.distribution.build()?)
}

fn write_json(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn save_model(g: &TreeTensor, path: &Path) -> Result<()> {
    if path.extension().is_some_and(|e| e == "bin") {
        g.write_binary(BufWriter::new(File::create(path)?))?;
        Ok(())
    } else {
        write_json(path, &g.to_json())
    }
}

fn load_model(path: &Path) -> Result<TreeTensor> {
    if path.extension().is_some_and(|e| e == "bin") {
        Ok(TreeTensor::read_binary(io::BufReader::new(File::open(path)?))?)
    } else {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(TreeTensor::from_json(&text)?)
    }
}

fn fit(src: &Source, samples: Option<PathBuf>, bases: Option<PathBuf>, n: usize, tree: TreeKind, out: &Path) -> Result<()> {
    let init = match tree {
        TreeKind::RandomLinear => InitialTree::RandomLinear,
        TreeKind::Linear => InitialTree::Linear,
        TreeKind::Balanced => InitialTree::Balanced,
    };
    fs::create_dir_all(out)?;
    let summary = if let Some(path) = samples {
        let (cfg, bases) = match (bases, src.config.is_some() || src.preset.is_some()) {
            (Some(b), _) => {
                let text = fs::read_to_string(&b).with_context(|| format!("reading {}", b.display()))?;
                let bases: Vec<Basis> = serde_json::from_str(&text).map_err(|e| treedens::Error::Config(e.to_string()))?;
                let cfg = if src.config.is_some() || src.preset.is_some() { Some(experiment_config(src)?) } else { None };
                (cfg, bases)
            }
            (None, true) => {
                let cfg = experiment_config(src)?;
                let b = cfg.distribution.build()?.natural_bases(cfg.max_degree);
                (Some(cfg), b)
            }
            (None, false) => bail!(treedens::Error::Config("a samples file needs --bases, --config or --preset".into())),
        };
        let discrete: Vec<bool> = bases.iter().map(|b| b.is_discrete()).collect();
        let s = SampleSet::read_csv_path(&path, &discrete)?;
        s.check_domain(&bases)?;
        let cfg = cfg.unwrap_or_else(|| {
            ExperimentConfig::for_distribution(DistributionSpec::Preset { preset: "table1".into(), seed: 0 }, vec![s.n()])
        });
        let mut rng = experiment::trial_rng(cfg.seed, 0);
        let (train, valid) = s.split(cfg.rank.validation_fraction, &mut rng);
        let t = experiment::initial_tree(init, s.d(), &mut rng)?;
        let st = treedens::rank_adapter::adapt_ranks(&t, &bases, &train, &valid, &cfg.learner, &cfg.rank, &cfg.tree)?;
        save_model(&st.model, &out.join("model.json"))?;
        serde_json::json!({
            "n": s.n(),
            "complexity": st.model.storage_complexity(),
            "ranks": st.model.ranks(),
            "tree": st.model.tree.to_string(),
            "validation_risk": st.history.iter().map(|h| h.validation_risk).fold(f64::INFINITY, f64::min),
        })
    } else {
        let mut cfg = experiment_config(src)?;
        cfg.initial_tree = init;
        let dist = cfg.distribution.build()?;
        let (r, _) = experiment::run_trial(&cfg, &dist, n, 0, 0)?;
        save_model(r.model.as_ref().unwrap(), &out.join("model.json"))?;
        serde_json::json!({
            "n": n,
            "seed": r.seed,
            "test_risk": r.test_risk,
            "rel_error": r.rel_error,
            "complexity": r.complexity,
            "ranks": r.ranks,
            "tree": r.tree_json,
            "elapsed_s": r.elapsed_s,
        })
    };
    let text = serde_json::to_string_pretty(&summary)?;
    write_json(&out.join("summary.json"), &text)?;
    println!("{text}");
    Ok(())
}

fn run_experiment(src: &Source, n: Vec<usize>, trials: Option<usize>, out: &Path) -> Result<()> {
    let mut cfg = experiment_config(src)?;
    if !n.is_empty() {
        cfg.n_train = n;
    }
    if let Some(t) = trials {
        cfg.trials = t;
    }
    let res = experiment::run_experiment(&cfg)?;
    fs::create_dir_all(out)?;
    experiment::write_results_csv(File::create(out.join("results.csv"))?, &res.trials)?;
    experiment::write_aggregate_csv(File::create(out.join("aggregate.csv"))?, &res.aggregates)?;
    experiment::write_aggregate_csv(io::stdout().lock(), &res.aggregates)?;
    if res.aggregates.len() >= 2 {
        let slope = experiment::emit_convergence(File::create(out.join("convergence.csv"))?, &res.aggregates)?;
        println!("convergence slope {slope:.3}");
    }
    Ok(())
}

fn compress_tree(spec: &str, d: usize, seed: u64) -> Result<DimensionTree> {
    Ok(match spec {
        "linear" => DimensionTree::linear(d, &(1..=d).collect::<Vec<_>>())?,
        "permuted" => {
            let order: Vec<usize> = (1..=d).step_by(2).chain((2..=d).step_by(2)).collect();
            DimensionTree::linear(d, &order)?
        }
        "balanced" => DimensionTree::balanced(d)?,
        "random" => DimensionTree::random_binary(d, &mut ChaCha8Rng::seed_from_u64(seed))?,
        s if s.contains(',') || s.parse::<usize>().is_ok() => {
            let order: Vec<usize> = s
                .split(',')
                .map(|x| x.trim().parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| treedens::Error::Config(format!("--tree: {e}")))?;
            DimensionTree::linear(d, &order)?
        }
        path => {
            let text = fs::read_to_string(path).with_context(|| format!("reading tree {path}"))?;
            DimensionTree::from_json(&text)?
        }
    })
}

fn compress(src: &Source, tree: &str, tol: f64, out: Option<PathBuf>) -> Result<()> {
    let dist = distribution(src)?;
    let f = dist.exact_tensor()?;
    let t = compress_tree(tree, dist.d(), src.seed)?;
    let g = TreeTensor::from_full(&f, &t, dist.natural_bases(0), tol)?;
    println!("tree {}", g.tree);
    println!("max rank {}", g.ranks().iter().max().unwrap());
    println!("storage {}", g.storage_complexity());
    if let Some(p) = out {
        save_model(&g, &p)?;
    }
    Ok(())
}

fn treeopt(model: &Path, eps: f64, iterations: usize, seed: u64, out: Option<PathBuf>) -> Result<()> {
    let g = load_model(model)?;
    let cfg = TreeProposalConfig { epsilon: eps, max_iterations: iterations, seed, ..Default::default() };
    let res = optimize_tree(&g, &cfg)?;
    let mut stdout = io::stdout().lock();
    for e in res.events.iter().filter(|e| e.accepted) {
        writeln!(stdout, "{}", serde_json::to_string(e)?)?;
    }
    writeln!(stdout, "storage {} -> {}", res.initial_complexity, res.model.storage_complexity())?;
    writeln!(stdout, "tree {}", res.model.tree)?;
    if let Some(p) = out {
        save_model(&res.model, &p)?;
    }
    Ok(())
}

fn sample(src: &Source, n: usize, out: Option<PathBuf>) -> Result<()> {
    let dist = distribution(src)?;
    let mut rng = experiment::trial_rng(src.seed, u64::MAX);
    let s = dist.sample(n, &mut rng)?;
    let discrete = vec![dist.is_discrete(); dist.d()];
    match out {
        Some(p) => s.write_csv(BufWriter::new(File::create(&p)?), &discrete)?,
        None => s.write_csv(io::stdout().lock(), &discrete)?,
    }
    Ok(())
}

fn eval(model: &Path, points: &Path, out: Option<PathBuf>) -> Result<()> {
    let g = load_model(model)?;
    let discrete: Vec<bool> = g.bases.iter().map(|b| b.is_discrete()).collect();
    let s = SampleSet::read_csv_path(points, &discrete)?;
    if s.d() != g.tree.d() {
        return Err(anyhow!(treedens::Error::ShapeMismatch(format!("points have d = {}, model d = {}", s.d(), g.tree.d()))));
    }
    let vals = treedens::contraction::evaluate_batch(&g, &s)?;
    let mut w: Box<dyn Write> = match out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    };
    writeln!(w, "value")?;
    for v in vals {
        writeln!(w, "{v:e}")?;
    }
    Ok(())
}
