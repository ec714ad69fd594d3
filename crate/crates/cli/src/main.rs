use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{error, info};

use svrmu_core::acceleration::compute_budget_l;
use svrmu_core::datagen_io::{
    gen_synthetic, inject_outliers, load_matrix, save_matrix, MatrixFormat, OutlierSpec, SyntheticSpec,
};
use svrmu_core::harness_metrics::{
    cached_f_star, compute_f_star, emit_basis_mosaic, emit_trace, run_experiment, run_solver, RunConfig,
};
use svrmu_core::{ExperimentConfig, NmfError, NonnegativeMatrix, SolverKind};

#[derive(Debug, Parser)]
#[command(name = "svrmu", version, about = "Stochastic variance-reduced multiplicative updates for NMF")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a normalized low-rank synthetic matrix.
    Synth(SynthArgs),
    /// Factorize a matrix with one solver and write its trace.
    Factorize(FactorizeArgs),
    /// Run a benchmark described by a TOML config.
    Benchmark(BenchmarkArgs),
    /// Corrupt a matrix with sparse additive outliers.
    InjectOutliers(InjectArgs),
    /// Render the columns of a basis matrix as a PGM mosaic.
    Mosaic(MosaicArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    rows: usize,
    #[arg(long)]
    cols: usize,
    #[arg(long)]
    rank: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Also write the ground-truth basis.
    #[arg(long)]
    w_out: Option<PathBuf>,
    /// Also write the ground-truth coefficients.
    #[arg(long)]
    h_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FactorizeArgs {
    #[arg(long)]
    data: PathBuf,
    /// One of: mu, hals, smu, smu-acc, svrmu, svrmu-acc, svrmu-minibatch, rsvrmu.
    #[arg(long)]
    solver: String,
    #[arg(long)]
    rank: usize,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    inner_iters: Option<usize>,
    #[arg(long)]
    alpha0: Option<f64>,
    #[arg(long)]
    decay: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Reference optimum; computed with HALS when omitted.
    #[arg(long)]
    f_star: Option<f64>,
    /// Directory for the cached HALS reference.
    #[arg(long)]
    f_star_cache: Option<PathBuf>,
    /// Zero the wall-clock column.
    #[arg(long)]
    no_timing: bool,
    #[arg(long)]
    w_out: Option<PathBuf>,
    #[arg(long)]
    h_out: Option<PathBuf>,
    /// Outlier matrix output (rsvrmu only).
    #[arg(long)]
    r_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchmarkArgs {
    #[arg(long)]
    config: PathBuf,
    /// Parallel runs; overrides `experiment.jobs`.
    #[arg(long)]
    jobs: Option<usize>,
    /// Overrides `experiment.output_dir`.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct InjectArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    density: f64,
    #[arg(long)]
    low: f64,
    #[arg(long)]
    high: f64,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct MosaicArgs {
    /// Basis matrix (F×K), F = tile_width·tile_height.
    #[arg(long)]
    w: PathBuf,
    #[arg(long)]
    tile_width: usize,
    #[arg(long)]
    tile_height: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug)]
enum CliError {
    Nmf(NmfError),
    RunsFailed { numeric: bool, count: usize },
}

impl From<NmfError> for CliError {
    fn from(e: NmfError) -> Self {
        CliError::Nmf(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Nmf(NmfError::InvalidConfig(_) | NmfError::IndexOutOfRange { .. }) => 2,
            CliError::Nmf(NmfError::NumericFailure { .. }) => 3,
            CliError::Nmf(_) => 1,
            CliError::RunsFailed { numeric: true, .. } => 3,
            CliError::RunsFailed { numeric: false, .. } => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Nmf(e) => write!(f, "{e}"),
            CliError::RunsFailed { count, .. } => write!(f, "{count} run(s) failed; see summary.csv"),
        }
    }
}

fn save(m: &NonnegativeMatrix, path: &Path) -> Result<(), NmfError> {
    save_matrix(m, path, MatrixFormat::from_path(path))
}

fn load(path: &Path) -> Result<NonnegativeMatrix, NmfError> {
    load_matrix(path, MatrixFormat::from_path(path))
}

fn synth(args: SynthArgs) -> Result<(), CliError> {
    let spec = SyntheticSpec::new(args.rows, args.cols, args.rank, args.seed)?;
    let (v, w, h) = gen_synthetic(&spec)?;
    save(&v, &args.out)?;
    if let Some(p) = &args.w_out {
        save(&w, p)?;
    }
    if let Some(p) = &args.h_out {
        save(&h, p)?;
    }
    info!("wrote {}x{} matrix to {}", args.rows, args.cols, args.out.display());
    Ok(())
}

fn factorize(args: FactorizeArgs) -> Result<(), CliError> {
    let kind: SolverKind = args.solver.parse()?;
    if args.rank == 0 {
        return Err(NmfError::InvalidConfig("rank must be at least 1".into()).into());
    }
    let mut run = RunConfig::new(kind, args.epochs);
    run.batch_size = args.batch_size;
    run.inner_iters = args.inner_iters;
    run.alpha0 = args.alpha0.unwrap_or(run.alpha0);
    run.decay = args.decay.unwrap_or(run.decay);
    run.beta = args.beta.unwrap_or(run.beta);
    run.epsilon = args.epsilon.unwrap_or(run.epsilon);
    run.lambda = args.lambda.unwrap_or(run.lambda);

    let v = load(&args.data)?;
    if matches!(kind, SolverKind::SmuAcc | SolverKind::SvrmuAcc) {
        info!(
            "coefficient refresh budget L = {}",
            compute_budget_l(v.rows(), v.cols(), args.rank, run.beta)
        );
    }
    let out = run_solver(&v, args.rank, &run, args.seed)?;
    let mut trace = out.trace;
    if kind != SolverKind::Rsvrmu {
        let f_star = match (args.f_star, &args.f_star_cache) {
            (Some(f), _) => f,
            (None, Some(dir)) => cached_f_star(dir, &v, args.rank, &[args.seed], args.epochs)?.value,
            (None, None) => compute_f_star(&v, args.rank, &[args.seed], args.epochs)?.value,
        };
        trace.rebase(f_star)?;
    }
    if args.no_timing {
        trace.strip_timing();
    }
    emit_trace(&trace, &args.trace)?;
    if let Some(p) = &args.w_out {
        save(out.factors.w(), p)?;
    }
    if let Some(p) = &args.h_out {
        save(out.factors.h(), p)?;
    }
    if let (Some(p), Some(o)) = (&args.r_out, &out.outliers) {
        save(o.r(), p)?;
    }
    if let Some(last) = trace.last() {
        println!(
            "{kind}: epochs={} grad_count={} cost={:e} gap={:e}",
            last.epoch, last.grad_count, last.cost, last.optimality_gap
        );
    }
    Ok(())
}

fn benchmark(args: BenchmarkArgs) -> Result<(), CliError> {
    let mut config = ExperimentConfig::from_path(&args.config)?;
    if let Some(j) = args.jobs {
        config.experiment.jobs = j;
    }
    if let Some(dir) = args.output_dir {
        config.experiment.output_dir = dir;
    }
    let summary = run_experiment(&config)?;
    println!("f* = {:e}", summary.f_star.value);
    println!("{:<20} {:>8} {:>14}", "solver", "seed", "final_gap");
    for r in &summary.runs {
        match r.final_gap() {
            Some(g) => println!("{:<20} {:>8} {:>14.6e}", r.label, r.seed, g),
            None => println!("{:<20} {:>8} {:>14}", r.label, r.seed, "failed"),
        }
    }
    let failed: Vec<_> = summary.failures().collect();
    if failed.is_empty() {
        return Ok(());
    }
    for r in &failed {
        if let Err(e) = &r.outcome {
            error!("{} seed {}: {e}", r.label, r.seed);
        }
    }
    let numeric = failed
        .iter()
        .any(|r| matches!(r.outcome, Err(NmfError::NumericFailure { .. })));
    Err(CliError::RunsFailed {
        numeric,
        count: failed.len(),
    })
}

fn inject(args: InjectArgs) -> Result<(), CliError> {
    let v = load(&args.data)?;
    let spec = OutlierSpec::new(args.density, args.low, args.high, args.seed)?;
    let (corrupted, mask) = inject_outliers(&v, &spec)?;
    save(&corrupted, &args.out)?;
    info!("corrupted {} of {} entries", mask.iter().filter(|m| **m).count(), mask.len());
    Ok(())
}

fn mosaic(args: MosaicArgs) -> Result<(), CliError> {
    let w = load(&args.w)?;
    emit_basis_mosaic(&w, args.tile_width, args.tile_height, &args.out)?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("NMF_LOG_LEVEL", "info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Factorize(a) => factorize(a),
        Command::Benchmark(a) => benchmark(a),
        Command::InjectOutliers(a) => inject(a),
        Command::Mosaic(a) => mosaic(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
