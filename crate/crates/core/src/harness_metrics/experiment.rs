use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::{debug, info, warn};
use rayon::prelude::*;
use serde::Deserialize;
use sha2::{Digest, Sha256};

use super::trace::{emit_trace, ConvergenceTrace};
use crate::acceleration::{smu_acc_solve, svrmu_acc_solve, AccelConfig, DEFAULT_BETA, DEFAULT_EPSILON};
use crate::batch_solvers::{hals_loop, hals_solve_traced, mu_batch_solve, BatchConfig};
use crate::datagen_io::{
    gen_synthetic, inject_outliers, load_image_dir, load_matrix, MatrixFormat, OutlierSpec, SyntheticSpec,
};
use crate::error::{NmfError, Result};
use crate::factor_model::{FactorPair, NonnegativeMatrix, OutlierModel};
use crate::robust::{rsvrmu_solve, DEFAULT_LAMBDA};
use crate::stochastic_solvers::{smu_solve, svrmu_solve, StochasticConfig, DEFAULT_ALPHA0, DEFAULT_DECAY};

/// Minimum HALS sweep budget for the `f*` reference.
pub const F_STAR_MIN_ITERS: usize = 1000;
pub const F_STAR_REL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    Mu,
    Hals,
    Smu,
    SmuAcc,
    Svrmu,
    SvrmuAcc,
    SvrmuMinibatch,
    Rsvrmu,
}

impl SolverKind {
    pub const ALL: [SolverKind; 8] = [
        SolverKind::Mu,
        SolverKind::Hals,
        SolverKind::Smu,
        SolverKind::SmuAcc,
        SolverKind::Svrmu,
        SolverKind::SvrmuAcc,
        SolverKind::SvrmuMinibatch,
        SolverKind::Rsvrmu,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Mu => "mu",
            SolverKind::Hals => "hals",
            SolverKind::Smu => "smu",
            SolverKind::SmuAcc => "smu-acc",
            SolverKind::Svrmu => "svrmu",
            SolverKind::SvrmuAcc => "svrmu-acc",
            SolverKind::SvrmuMinibatch => "svrmu-minibatch",
            SolverKind::Rsvrmu => "rsvrmu",
        }
    }

    pub fn valid_names() -> String {
        SolverKind::ALL.map(SolverKind::name).join(", ")
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SolverKind {
    type Err = NmfError;

    fn from_str(s: &str) -> Result<Self> {
        SolverKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                NmfError::config(format!("unknown solver `{s}` (valid: {})", SolverKind::valid_names()))
            })
    }
}

/// Fully resolved settings for a single solver run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConfig {
    pub kind: SolverKind,
    pub epochs: usize,
    /// `None` picks 1, or `max(1, N/10)` for `svrmu-minibatch`.
    pub batch_size: Option<usize>,
    /// `None` picks `N`.
    pub inner_iters: Option<usize>,
    pub alpha0: f64,
    pub decay: f64,
    pub beta: f64,
    pub epsilon: f64,
    pub lambda: f64,
}

impl RunConfig {
    pub fn new(kind: SolverKind, epochs: usize) -> Self {
        RunConfig {
            kind,
            epochs,
            batch_size: None,
            inner_iters: None,
            alpha0: DEFAULT_ALPHA0,
            decay: DEFAULT_DECAY,
            beta: DEFAULT_BETA,
            epsilon: DEFAULT_EPSILON,
            lambda: DEFAULT_LAMBDA,
        }
    }

    pub fn batch_size_for(&self, samples: usize) -> usize {
        match (self.batch_size, self.kind) {
            (Some(b), _) => b,
            (None, SolverKind::SvrmuMinibatch) => (samples / 10).max(1),
            (None, _) => 1,
        }
    }

    fn stochastic(&self, samples: usize, seed: u64) -> Result<StochasticConfig> {
        let mut cfg = StochasticConfig::new(self.epochs, seed)?
            .with_alpha0(self.alpha0)?
            .with_decay(self.decay)?
            .with_batch_size(self.batch_size_for(samples))?;
        if let Some(m) = self.inner_iters {
            cfg = cfg.with_inner_iters(m)?;
        }
        cfg.validate_for(samples)?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone)]
pub struct SolverOutput {
    pub factors: FactorPair,
    /// Present for `rsvrmu` only.
    pub outliers: Option<OutlierModel>,
    /// Gaps are measured against zero; see [`run_experiment`] for rebasing.
    pub trace: ConvergenceTrace,
}

/// Run one solver from its seeded random start.
pub fn run_solver(v: &NonnegativeMatrix, rank: usize, run: &RunConfig, seed: u64) -> Result<SolverOutput> {
    let n = v.cols();
    let plain = |(factors, trace)| SolverOutput {
        factors,
        outliers: None,
        trace,
    };
    let accel = || AccelConfig::new(run.beta, run.epsilon);
    Ok(match run.kind {
        SolverKind::Mu => plain(mu_batch_solve(v, rank, &BatchConfig::new(run.epochs, 0.0, seed)?)?),
        SolverKind::Hals => plain(hals_solve_traced(v, rank, &BatchConfig::new(run.epochs, 0.0, seed)?)?),
        SolverKind::Smu => plain(smu_solve(v, rank, &run.stochastic(n, seed)?)?),
        SolverKind::SmuAcc => plain(smu_acc_solve(v, rank, &run.stochastic(n, seed)?, &accel()?)?),
        SolverKind::Svrmu | SolverKind::SvrmuMinibatch => plain(svrmu_solve(v, rank, &run.stochastic(n, seed)?)?),
        SolverKind::SvrmuAcc => plain(svrmu_acc_solve(v, rank, &run.stochastic(n, seed)?, &accel()?)?),
        SolverKind::Rsvrmu => {
            let (factors, outliers, trace) = rsvrmu_solve(v, rank, &run.stochastic(n, seed)?, run.lambda)?;
            SolverOutput {
                factors,
                outliers: Some(outliers),
                trace,
            }
        }
    })
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DatasetConfig {
    Synthetic {
        rows: usize,
        cols: usize,
        rank: usize,
        seed: u64,
    },
    File {
        path: PathBuf,
    },
    Images {
        dir: PathBuf,
        width: usize,
        height: usize,
        #[serde(default = "default_max_level")]
        max_level: f64,
    },
}

fn default_max_level() -> f64 {
    255.0
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutlierConfig {
    pub density: f64,
    pub low: f64,
    pub high: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub rank: usize,
    pub max_epochs: usize,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    /// When false, `wall_ms` is zeroed so traces depend only on seeds.
    #[serde(default = "default_true")]
    pub timing: bool,
    #[serde(default = "default_jobs")]
    pub jobs: usize,
}

fn default_true() -> bool {
    true
}

fn default_jobs() -> usize {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverEntry {
    pub name: SolverKind,
    /// File-name stem for this entry's traces; defaults to `name`.
    pub label: Option<String>,
    pub batch_size: Option<usize>,
    pub inner_iters: Option<usize>,
    pub alpha0: Option<f64>,
    pub decay: Option<f64>,
    pub beta: Option<f64>,
    pub epsilon: Option<f64>,
    pub lambda: Option<f64>,
}

impl SolverEntry {
    pub fn label(&self) -> &str {
        self.label.as_deref().unwrap_or(self.name.name())
    }

    pub fn resolve(&self, epochs: usize) -> RunConfig {
        let d = RunConfig::new(self.name, epochs);
        RunConfig {
            batch_size: self.batch_size,
            inner_iters: self.inner_iters,
            alpha0: self.alpha0.unwrap_or(d.alpha0),
            decay: self.decay.unwrap_or(d.decay),
            beta: self.beta.unwrap_or(d.beta),
            epsilon: self.epsilon.unwrap_or(d.epsilon),
            lambda: self.lambda.unwrap_or(d.lambda),
            ..d
        }
    }
}

/// Benchmark description, read from TOML:
///
/// ```toml
/// [dataset]
/// kind = "synthetic"      # or "file" (path) / "images" (dir, width, height)
/// rows = 100
/// cols = 300
/// rank = 5
/// seed = 7
///
/// [outliers]              # optional
/// density = 0.3
/// low = 0.6
/// high = 1.0
/// seed = 11
///
/// [experiment]
/// rank = 5
/// max_epochs = 50
/// seeds = [1, 2, 3]
/// output_dir = "out"
///
/// [[solver]]
/// name = "svrmu"
/// batch_size = 30
/// ```
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub outliers: Option<OutlierConfig>,
    pub experiment: ExperimentSection,
    #[serde(default, rename = "solver")]
    pub solvers: Vec<SolverEntry>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| NmfError::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| NmfError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let ex = &self.experiment;
        if self.solvers.is_empty() {
            return Err(NmfError::config("`solver`: at least one [[solver]] entry is required"));
        }
        if ex.rank == 0 {
            return Err(NmfError::config("`experiment.rank` must be at least 1"));
        }
        if ex.max_epochs == 0 {
            return Err(NmfError::config("`experiment.max_epochs` must be at least 1"));
        }
        if ex.seeds.is_empty() {
            return Err(NmfError::config("`experiment.seeds` must not be empty"));
        }
        if ex.jobs == 0 {
            return Err(NmfError::config("`experiment.jobs` must be at least 1"));
        }
        for (i, a) in self.solvers.iter().enumerate() {
            if self.solvers[..i].iter().any(|b| b.label() == a.label()) {
                return Err(NmfError::config(format!(
                    "`solver[{i}].label`: duplicate label `{}`",
                    a.label()
                )));
            }
            if let (Some(beta), Some(eps)) = (a.beta, a.epsilon) {
                AccelConfig::new(beta, eps)
                    .map_err(|e| NmfError::config(format!("`solver[{i}]`: {e}")))?;
            }
        }
        Ok(())
    }
}

pub fn load_dataset(dataset: &DatasetConfig, outliers: Option<&OutlierConfig>) -> Result<NonnegativeMatrix> {
    let v = match dataset {
        DatasetConfig::Synthetic { rows, cols, rank, seed } => {
            gen_synthetic(&SyntheticSpec::new(*rows, *cols, *rank, *seed)?)?.0
        }
        DatasetConfig::File { path } => load_matrix(path, MatrixFormat::from_path(path))?,
        DatasetConfig::Images {
            dir,
            width,
            height,
            max_level,
        } => load_image_dir(dir, *width, *height, *max_level)?,
    };
    match outliers {
        Some(o) => Ok(inject_outliers(&v, &OutlierSpec::new(o.density, o.low, o.high, o.seed)?)?.0),
        None => Ok(v),
    }
}

/// Reference optimum and the sweep count of the HALS run that produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FStar {
    pub value: f64,
    pub iterations: usize,
}

/// Minimum HALS cost over `seeds`, each run for `max(1000, 10·max_epochs)`
/// sweeps or until the relative change falls below 1e-10.
pub fn compute_f_star(v: &NonnegativeMatrix, rank: usize, seeds: &[u64], max_epochs: usize) -> Result<FStar> {
    if seeds.is_empty() {
        return Err(NmfError::config("f* needs at least one seed"));
    }
    let iters = F_STAR_MIN_ITERS.max(max_epochs.saturating_mul(10));
    let mut best: Option<FStar> = None;
    for &seed in seeds {
        let run = hals_loop(v, rank, &BatchConfig::new(iters, F_STAR_REL_TOL, seed)?, None)?;
        debug!("HALS seed {seed}: best cost {:e} after {} sweeps", run.best_cost, run.sweeps);
        if best.is_none_or(|b| run.best_cost < b.value) {
            best = Some(FStar {
                value: run.best_cost,
                iterations: run.sweeps,
            });
        }
    }
    Ok(best.expect("seeds checked non-empty"))
}

/// Hex SHA-256 of the matrix contents together with the `f*` protocol
/// inputs (rank, seeds, epoch budget), so a cached value is only reused
/// under identical settings.
pub fn dataset_digest(v: &NonnegativeMatrix, rank: usize, seeds: &[u64], max_epochs: usize) -> String {
    let mut hasher = Sha256::new();
    hasher.update((v.rows() as u64).to_le_bytes());
    hasher.update((v.cols() as u64).to_le_bytes());
    for x in v.as_array().iter() {
        hasher.update(x.to_le_bytes());
    }
    hasher.update((rank as u64).to_le_bytes());
    hasher.update((max_epochs as u64).to_le_bytes());
    for s in seeds {
        hasher.update(s.to_le_bytes());
    }
    hex::encode(hasher.finalize())
}

fn read_f_star(path: &Path) -> Option<FStar> {
    let text = fs::read_to_string(path).ok()?;
    let mut lines = text.lines();
    let value = lines.next()?.trim().parse().ok()?;
    let iterations = lines.next()?.trim().parse().ok()?;
    Some(FStar { value, iterations })
}

/// Load `<digest>.fstar` from `dir`, computing and writing it on a miss.
pub fn cached_f_star(
    dir: &Path,
    v: &NonnegativeMatrix,
    rank: usize,
    seeds: &[u64],
    max_epochs: usize,
) -> Result<FStar> {
    let path = dir.join(format!("{}.fstar", dataset_digest(v, rank, seeds, max_epochs)));
    if let Some(f) = read_f_star(&path) {
        debug!("reusing f* from {}", path.display());
        return Ok(f);
    }
    let f = compute_f_star(v, rank, seeds, max_epochs)?;
    fs::write(&path, format!("{}\n{}\n", f.value, f.iterations)).map_err(|e| NmfError::io(&path, e))?;
    Ok(f)
}

#[derive(Debug)]
pub struct RunSummary {
    pub label: String,
    pub solver: SolverKind,
    pub seed: u64,
    pub trace_path: PathBuf,
    pub outcome: Result<ConvergenceTrace>,
}

impl RunSummary {
    pub fn final_gap(&self) -> Option<f64> {
        self.outcome.as_ref().ok()?.last().map(|r| r.optimality_gap)
    }
}

#[derive(Debug)]
pub struct ExperimentSummary {
    pub f_star: FStar,
    pub runs: Vec<RunSummary>,
    pub summary_path: PathBuf,
}

impl ExperimentSummary {
    pub fn failures(&self) -> impl Iterator<Item = &RunSummary> {
        self.runs.iter().filter(|r| r.outcome.is_err())
    }

    /// Median final gap over the successful runs carrying `label`.
    pub fn median_final_gap(&self, label: &str) -> Option<f64> {
        let mut gaps: Vec<f64> = self
            .runs
            .iter()
            .filter(|r| r.label == label)
            .filter_map(RunSummary::final_gap)
            .collect();
        if gaps.is_empty() {
            return None;
        }
        gaps.sort_by(f64::total_cmp);
        let m = gaps.len() / 2;
        Some(if gaps.len() % 2 == 1 {
            gaps[m]
        } else {
            0.5 * (gaps[m - 1] + gaps[m])
        })
    }

    fn to_csv(&self) -> String {
        let mut out = String::from("solver,seed,status,epochs,grad_count,final_cost,final_gap\n");
        for r in &self.runs {
            match &r.outcome {
                Ok(t) => {
                    let last = t.last().expect("solver traces are non-empty");
                    out.push_str(&format!(
                        "{},{},ok,{},{},{},{}\n",
                        r.label, r.seed, last.epoch, last.grad_count, last.cost, last.optimality_gap
                    ));
                }
                Err(_) => out.push_str(&format!("{},{},failed,,,,\n", r.label, r.seed)),
            }
        }
        out
    }
}

fn execute_run(
    v: &NonnegativeMatrix,
    config: &ExperimentConfig,
    entry: &SolverEntry,
    seed: u64,
    f_star: f64,
    trace_path: &Path,
) -> Result<ConvergenceTrace> {
    let ex = &config.experiment;
    let run = entry.resolve(ex.max_epochs);
    let mut trace = run_solver(v, ex.rank, &run, seed)?.trace;
    // The robust objective is not comparable to the Frobenius f*.
    if entry.name != SolverKind::Rsvrmu {
        trace.rebase(f_star)?;
    }
    if !ex.timing {
        trace.strip_timing();
    }
    emit_trace(&trace, trace_path)?;
    Ok(trace)
}

/// Run every `(solver, seed)` pair, write one trace per pair plus
/// `summary.csv`, and return the collected results. Individual run failures
/// are reported in the summary without aborting the others.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentSummary> {
    config.validate()?;
    let ex = &config.experiment;
    let v = load_dataset(&config.dataset, config.outliers.as_ref())?;
    info!("dataset {}x{}, rank {}", v.rows(), v.cols(), ex.rank);
    fs::create_dir_all(&ex.output_dir).map_err(|e| NmfError::io(&ex.output_dir, e))?;

    let needs_f_star = config.solvers.iter().any(|s| s.name != SolverKind::Rsvrmu);
    let f_star = if needs_f_star {
        cached_f_star(&ex.output_dir, &v, ex.rank, &ex.seeds, ex.max_epochs)?
    } else {
        FStar {
            value: 0.0,
            iterations: 0,
        }
    };
    info!("f* = {:e} ({} HALS sweeps)", f_star.value, f_star.iterations);

    let jobs: Vec<(&SolverEntry, u64)> = config
        .solvers
        .iter()
        .flat_map(|s| ex.seeds.iter().map(move |&seed| (s, seed)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(ex.jobs)
        .build()
        .map_err(|e| NmfError::config(format!("thread pool: {e}")))?;
    let runs: Vec<RunSummary> = pool.install(|| {
        jobs.par_iter()
            .map(|&(entry, seed)| {
                let trace_path = ex.output_dir.join(format!("{}_seed{seed}.csv", entry.label()));
                let outcome = execute_run(&v, config, entry, seed, f_star.value, &trace_path);
                match &outcome {
                    Ok(t) => info!(
                        "{} seed {seed}: final gap {:e}",
                        entry.label(),
                        t.last().map_or(f64::NAN, |r| r.optimality_gap)
                    ),
                    Err(e) => warn!("{} seed {seed} failed: {e}", entry.label()),
                }
                RunSummary {
                    label: entry.label().to_string(),
                    solver: entry.name,
                    seed,
                    trace_path,
                    outcome,
                }
            })
            .collect()
    });

    let summary_path = ex.output_dir.join("summary.csv");
    let summary = ExperimentSummary {
        f_star,
        runs,
        summary_path,
    };
    fs::write(&summary.summary_path, summary.to_csv()).map_err(|e| NmfError::io(&summary.summary_path, e))?;
    Ok(summary)
}
