//! `onebit`: train, run and benchmark one-bit sparse recovery.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use onebit::bench::{self, ExperimentConfig};
use onebit::ensemble::train_ensemble;
use onebit::recovery::{recover_exhaustive, BranchAndBound, BranchOrder, FeasibilityInstance};
use onebit::signal::{observe, sample_sensing_matrix, RngSeed};
use onebit::training::{train, L1Scale, Recoverer};
use onebit::{BinaryObservation, EnsembleModel, Error, NetParams, SensingMatrix, SparseSignal};

/// Environment variable holding the worker thread count.
const THREADS_ENV: &str = "ONEBIT_THREADS";

#[derive(Parser)]
#[command(name = "onebit", version, about = "Sparse binary signal recovery from one-bit observations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a network (or an ensemble) and write the model file and loss log.
    Train(TrainArgs),
    /// Recover a signal from an observation file with a trained model.
    Recover(RecoverArgs),
    /// Recovery-rate sweep over m for networks, ensembles and branch-and-bound.
    Benchmark(BenchmarkArgs),
    /// Training curve with periodic recovery-rate probes.
    Curve(ExperimentArgs),
    /// Solve one feasibility instance exactly.
    Oracle(OracleArgs),
    /// Draw a Gaussian sensing matrix.
    Matrix(MatrixArgs),
    /// Compute sign(Ax) for a given support.
    Observe(ObserveArgs),
}

#[derive(Args, Clone)]
struct ExperimentArgs {
    /// Start from a preset: `desk` or `paper-k6`.
    #[arg(long)]
    preset: Option<String>,
    /// Key-value config file applied on top of the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    alpha: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long, value_enum)]
    l1_scale: Option<L1ScaleArg>,
    /// Comma-separated ensemble sizes.
    #[arg(long)]
    ensemble_sizes: Option<String>,
    /// Comma-separated observation lengths.
    #[arg(long)]
    m_values: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    probe_every: Option<usize>,
    #[arg(long)]
    probe_trials: Option<usize>,
    #[arg(long)]
    curve_m: Option<usize>,
    #[arg(long)]
    timing_instances: Option<usize>,
    /// Skip the branch-and-bound recoverer.
    #[arg(long)]
    no_ip: bool,
}

#[derive(Copy, Clone, ValueEnum)]
enum L1ScaleArg {
    PerSample,
    PerEntry,
}

impl From<L1ScaleArg> for L1Scale {
    fn from(v: L1ScaleArg) -> Self {
        match v {
            L1ScaleArg::PerSample => L1Scale::PerSample,
            L1ScaleArg::PerEntry => L1Scale::PerEntry,
        }
    }
}

impl ExperimentArgs {
    fn resolve(&self) -> onebit::Result<ExperimentConfig> {
        let mut cfg = match &self.preset {
            Some(name) => ExperimentConfig::preset(name)?,
            None => ExperimentConfig::default(),
        };
        if let Some(path) = &self.config {
            cfg.apply_text(&fs::read_to_string(path)?)?;
        }
        let mut set = |key: &str, value: Option<String>| -> onebit::Result<()> {
            if let Some(v) = value {
                cfg.set(key, &v)
                    .map_err(|message| Error::invalid(format!("--{}: {message}", key.replace('_', "-"))))?;
            }
            Ok(())
        };
        let s = |v: Option<usize>| v.map(|v| v.to_string());
        set("n", s(self.n))?;
        set("k", s(self.k))?;
        set("alpha", s(self.alpha))?;
        set("batch_size", s(self.batch_size))?;
        set("steps", s(self.steps))?;
        set("lambda", self.lambda.map(|v| v.to_string()))?;
        set("learning_rate", self.learning_rate.map(|v| v.to_string()))?;
        set("l1_scale", self.l1_scale.map(|v| L1Scale::from(v).as_str().to_string()))?;
        set("ensemble_sizes", self.ensemble_sizes.clone())?;
        set("m_values", self.m_values.clone())?;
        set("trials", s(self.trials))?;
        set("seed", self.seed.map(|v| v.to_string()))?;
        set("output", self.output.as_ref().map(|p| p.display().to_string()))?;
        set("probe_every", s(self.probe_every))?;
        set("probe_trials", s(self.probe_trials))?;
        set("curve_m", s(self.curve_m))?;
        set("timing_instances", s(self.timing_instances))?;
        if self.no_ip {
            cfg.include_ip = false;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    exp: ExperimentArgs,
    /// Observation length; defaults to the first of --m-values.
    #[arg(long)]
    m: Option<usize>,
    /// Number of component networks; more than one writes an ensemble file.
    #[arg(long, default_value_t = 1)]
    ensemble: usize,
    /// Existing sensing matrix to train against.
    #[arg(long, conflicts_with = "new_matrix")]
    matrix: Option<PathBuf>,
    /// Draw a fresh sensing matrix from the seed and write it here.
    #[arg(long)]
    new_matrix: Option<PathBuf>,
    /// Model output path.
    #[arg(long)]
    model: PathBuf,
    /// Per-step loss CSV (single network only).
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct RecoverArgs {
    /// Network or ensemble model file.
    #[arg(long)]
    model: PathBuf,
    /// Observation file of +1/-1 tokens.
    #[arg(long)]
    observation: PathBuf,
}

#[derive(Args)]
struct BenchmarkArgs {
    #[command(flatten)]
    exp: ExperimentArgs,
    /// Also write timing.csv measured on the sweep's trained models.
    #[arg(long)]
    timing: bool,
}

#[derive(Copy, Clone, ValueEnum)]
enum Solver {
    Bnb,
    Exhaustive,
}

#[derive(Copy, Clone, ValueEnum)]
enum OrderArg {
    Influence,
    Index,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    matrix: PathBuf,
    #[arg(long)]
    observation: PathBuf,
    #[arg(long)]
    k: usize,
    #[arg(long, value_enum, default_value = "bnb")]
    solver: Solver,
    #[arg(long, value_enum, default_value = "influence")]
    order: OrderArg,
}

#[derive(Args)]
struct MatrixArgs {
    #[arg(long)]
    m: usize,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ObserveArgs {
    #[arg(long)]
    matrix: PathBuf,
    /// Comma-separated zero-based indices of the ones in x.
    #[arg(long, value_delimiter = ',')]
    support: Vec<usize>,
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> onebit::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, contents)?;
    Ok(())
}

fn estimate_line(values: &[u8]) -> String {
    values.iter().map(u8::to_string).collect::<Vec<_>>().join(" ")
}

fn cmd_train(args: &TrainArgs) -> onebit::Result<()> {
    let mut exp = args.exp.clone();
    if let Some(m) = args.m {
        exp.m_values = Some(m.to_string());
        exp.curve_m = Some(m);
    }
    let cfg = exp.resolve()?;
    let m = cfg.m_values[0];
    let matrix = match (&args.matrix, &args.new_matrix) {
        (Some(path), _) => SensingMatrix::load(path)?,
        (None, Some(path)) => {
            let a = sample_sensing_matrix(m, cfg.n, &mut RngSeed(cfg.seed).derive(&[0]).rng())?;
            a.save(path)?;
            a
        }
        (None, None) => return Err(Error::invalid("one of --matrix or --new-matrix is required")),
    };
    if matrix.m() != m || matrix.n() != cfg.n {
        return Err(Error::invalid(format!(
            "sensing matrix is {}x{}, expected {m}x{}",
            matrix.m(),
            matrix.n(),
            cfg.n
        )));
    }
    let tcfg = cfg.training(m, RngSeed(cfg.seed));
    if args.ensemble <= 1 {
        let (params, log) = train(&tcfg, &matrix)?;
        params.save(&args.model)?;
        if let Some(path) = &args.log {
            write_file(path, log.to_csv())?;
        }
        if let Some((head, tail)) = log.head_tail_mean(100) {
            eprintln!("trained {} steps; mean loss first 100 = {head:.6}, last 100 = {tail:.6}", tcfg.steps);
        }
    } else {
        let model = train_ensemble(&tcfg, args.ensemble, &matrix)?;
        model.save(&args.model)?;
        eprintln!("trained {} components, tau = {}", model.size(), model.tau());
    }
    Ok(())
}

fn cmd_recover(args: &RecoverArgs) -> onebit::Result<()> {
    let bytes = fs::read(&args.model)?;
    let u = BinaryObservation::parse(&fs::read_to_string(&args.observation)?)?;
    let recoverer: Box<dyn Recoverer> = if bytes.starts_with(b"OBEN") {
        Box::new(EnsembleModel::from_bytes(&bytes)?)
    } else {
        Box::new(NetParams::from_bytes(&bytes)?)
    };
    let estimate = recoverer.recover(&u)?;
    println!("{}", estimate_line(&estimate.values));
    Ok(())
}

fn cmd_benchmark(args: &BenchmarkArgs) -> onebit::Result<()> {
    let cfg = args.exp.resolve()?;
    fs::create_dir_all(&cfg.output)?;
    write_file(&cfg.output.join("config.txt"), cfg.to_text())?;
    let out = bench::run_sweep(&cfg)?;
    for f in &out.result.failures {
        eprintln!("warning: m={} training failed: {}", f.m, f.message);
    }
    write_file(&cfg.output.join("sweep.csv"), out.result.to_csv())?;
    if args.timing {
        let timing = bench::run_timing_with(&cfg, &out.models)?;
        write_file(&cfg.output.join("timing.csv"), timing.to_csv())?;
    }
    print!("{}", out.result.to_csv());
    Ok(())
}

fn cmd_curve(args: &ExperimentArgs) -> onebit::Result<()> {
    let cfg = args.resolve()?;
    fs::create_dir_all(&cfg.output)?;
    write_file(&cfg.output.join("config.txt"), cfg.to_text())?;
    let log = bench::run_training_curve(&cfg)?;
    write_file(&cfg.output.join("curve.csv"), log.to_csv())?;
    for (step, rate) in log.probes() {
        println!("{step},{rate}");
    }
    Ok(())
}

fn cmd_oracle(args: &OracleArgs) -> onebit::Result<()> {
    let a = SensingMatrix::load(&args.matrix)?;
    let u = BinaryObservation::parse(&fs::read_to_string(&args.observation)?)?;
    let inst = FeasibilityInstance::new(&a, &u, args.k)?;
    let outcome = match args.solver {
        Solver::Exhaustive => recover_exhaustive(&inst)?,
        Solver::Bnb => {
            let order = match args.order {
                OrderArg::Influence => BranchOrder::ColumnInfluence,
                OrderArg::Index => BranchOrder::Index,
            };
            BranchAndBound::new(a.clone(), args.k, order)?.solve(&u)?
        }
    };
    eprintln!("nodes explored: {}", outcome.nodes_explored);
    match outcome.solution() {
        Some(z) => {
            println!("found");
            println!("{}", estimate_line(z));
        }
        None => println!("infeasible"),
    }
    Ok(())
}

fn cmd_matrix(args: &MatrixArgs) -> onebit::Result<()> {
    sample_sensing_matrix(args.m, args.n, &mut RngSeed(args.seed).rng())?.save(&args.out)
}

fn cmd_observe(args: &ObserveArgs) -> onebit::Result<()> {
    let a = SensingMatrix::load(&args.matrix)?;
    let x = SparseSignal::from_support(a.n(), &args.support)?;
    println!("{}", observe(&a, &x)?.to_text());
    Ok(())
}

fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = raw
        .parse()
        .map_err(|_| format!("{THREADS_ENV}={raw} is not a thread count"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    let result = match &cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Recover(a) => cmd_recover(a),
        Command::Benchmark(a) => cmd_benchmark(a),
        Command::Curve(a) => cmd_curve(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Matrix(a) => cmd_matrix(a),
        Command::Observe(a) => cmd_observe(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
