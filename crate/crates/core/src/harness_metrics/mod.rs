//! Optimality gaps, gradient accounting, experiment orchestration and trace
//! persistence.

mod experiment;
mod mosaic;
pub mod trace;

pub use experiment::{
    cached_f_star, compute_f_star, dataset_digest, load_dataset, run_experiment, run_solver,
    DatasetConfig, ExperimentConfig, ExperimentSection, ExperimentSummary, FStar, OutlierConfig,
    RunConfig, RunSummary, SolverEntry, SolverKind, SolverOutput, F_STAR_MIN_ITERS, F_STAR_REL_TOL,
};
pub use mosaic::{basis_mosaic, emit_basis_mosaic};
pub use trace::{
    emit_trace, optimality_gap, read_trace, ConvergenceTrace, GradEvent, GradientCounter,
    TraceRecord, GAP_SLACK, TRACE_HEADER,
};
