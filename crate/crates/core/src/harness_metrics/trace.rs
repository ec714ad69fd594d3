use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use crate::error::{NmfError, Result};

/// Slack allowed below zero when a run edges past the HALS baseline.
pub const GAP_SLACK: f64 = 1e-9;

pub const TRACE_HEADER: &str = "epoch,grad_count,wall_ms,cost,optimality_gap";

pub fn optimality_gap(cost: f64, f_star: f64) -> f64 {
    cost - f_star
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub epoch: usize,
    pub grad_count: u64,
    pub wall_ms: f64,
    pub cost: f64,
    pub optimality_gap: f64,
}

/// Per-epoch convergence history of one solver run.
///
/// Appends enforce: strictly increasing `grad_count` (except the leading
/// record), non-decreasing `wall_ms`, and `optimality_gap >= -GAP_SLACK`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTrace {
    f_star: f64,
    records: Vec<TraceRecord>,
}

impl Default for ConvergenceTrace {
    fn default() -> Self {
        Self::new(0.0)
    }
}

impl ConvergenceTrace {
    pub fn new(f_star: f64) -> Self {
        ConvergenceTrace {
            f_star,
            records: Vec::new(),
        }
    }

    pub fn f_star(&self) -> f64 {
        self.f_star
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    pub fn costs(&self) -> impl Iterator<Item = f64> + '_ {
        self.records.iter().map(|r| r.cost)
    }

    pub fn push(&mut self, epoch: usize, grad_count: u64, wall_ms: f64, cost: f64) -> Result<()> {
        let record = TraceRecord {
            epoch,
            grad_count,
            wall_ms,
            cost,
            optimality_gap: optimality_gap(cost, self.f_star),
        };
        self.validate_next(&record)?;
        self.records.push(record);
        Ok(())
    }

    fn validate_next(&self, rec: &TraceRecord) -> Result<()> {
        if !(rec.cost.is_finite() && rec.wall_ms.is_finite() && rec.wall_ms >= 0.0) {
            return Err(NmfError::TraceInvariant(format!(
                "non-finite or negative entry at epoch {}",
                rec.epoch
            )));
        }
        if rec.optimality_gap < -GAP_SLACK {
            return Err(NmfError::TraceInvariant(format!(
                "optimality gap {:e} below -{GAP_SLACK:e} at epoch {}",
                rec.optimality_gap, rec.epoch
            )));
        }
        if let Some(prev) = self.records.last() {
            if rec.grad_count <= prev.grad_count {
                return Err(NmfError::TraceInvariant(format!(
                    "grad_count {} not above {} at epoch {}",
                    rec.grad_count, prev.grad_count, rec.epoch
                )));
            }
            if rec.wall_ms < prev.wall_ms {
                return Err(NmfError::TraceInvariant(format!(
                    "wall_ms decreased at epoch {}",
                    rec.epoch
                )));
            }
        }
        Ok(())
    }

    /// Recompute every gap against a new baseline.
    pub fn rebase(&mut self, f_star: f64) -> Result<()> {
        let mut rebased = ConvergenceTrace::new(f_star);
        for r in &self.records {
            rebased.push(r.epoch, r.grad_count, r.wall_ms, r.cost)?;
        }
        *self = rebased;
        Ok(())
    }

    /// Zero all wall-clock entries so emitted CSVs depend only on the seed.
    pub fn strip_timing(&mut self) {
        for r in &mut self.records {
            r.wall_ms = 0.0;
        }
    }

    /// Gap of the latest record whose gradient count does not exceed `grad_count`.
    pub fn gap_at_grad_count(&self, grad_count: u64) -> Option<f64> {
        self.records
            .iter()
            .take_while(|r| r.grad_count <= grad_count)
            .last()
            .map(|r| r.optimality_gap)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.records.len() + 1));
        out.push_str(TRACE_HEADER);
        out.push('\n');
        for r in &self.records {
            // `{}` on f64 prints the shortest representation that round-trips.
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.epoch, r.grad_count, r.wall_ms, r.cost, r.optimality_gap
            );
        }
        out
    }

    pub fn from_csv(text: &str, origin: &Path) -> Result<Self> {
        let parse_err = |line: usize, col: usize, msg: String| NmfError::Parse {
            path: origin.to_path_buf(),
            line,
            col,
            msg,
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == TRACE_HEADER => {}
            _ => return Err(parse_err(1, 1, format!("expected header `{TRACE_HEADER}`"))),
        }
        let mut records = Vec::new();
        for (idx, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(parse_err(idx + 1, 1, format!("expected 5 fields, found {}", fields.len())));
            }
            let num = |col: usize| -> Result<f64> {
                fields[col]
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| parse_err(idx + 1, col + 1, e.to_string()))
            };
            let int = |col: usize| -> Result<u64> {
                fields[col]
                    .trim()
                    .parse::<u64>()
                    .map_err(|e| parse_err(idx + 1, col + 1, e.to_string()))
            };
            records.push(TraceRecord {
                epoch: int(0)? as usize,
                grad_count: int(1)?,
                wall_ms: num(2)?,
                cost: num(3)?,
                optimality_gap: num(4)?,
            });
        }
        let f_star = records
            .first()
            .map(|r| r.cost - r.optimality_gap)
            .unwrap_or(0.0);
        Ok(ConvergenceTrace { f_star, records })
    }
}

pub fn emit_trace(trace: &ConvergenceTrace, path: &Path) -> Result<()> {
    if trace.is_empty() {
        return Err(NmfError::TraceInvariant("refusing to write an empty trace".into()));
    }
    fs::write(path, trace.to_csv()).map_err(|e| NmfError::io(path, e))
}

pub fn read_trace(path: &Path) -> Result<ConvergenceTrace> {
    let text = fs::read_to_string(path).map_err(|e| NmfError::io(path, e))?;
    ConvergenceTrace::from_csv(&text, path)
}

/// Work units that count toward the gradient axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradEvent {
    /// One stochastic inner step over `b` samples.
    SampleGradients(usize),
    /// Snapshot full-gradient precomputation over `N` samples.
    FullPass(usize),
    /// One batch MU/HALS iteration over `N` samples.
    BatchIteration(usize),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GradientCounter {
    count: u64,
}

impl GradientCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn account(&mut self, event: GradEvent) -> u64 {
        let added = match event {
            GradEvent::SampleGradients(b) => b,
            GradEvent::FullPass(n) | GradEvent::BatchIteration(n) => n,
        };
        self.count += added as u64;
        self.count
    }
}

/// Stopwatch that only accumulates while resumed.
#[derive(Debug, Default)]
pub(crate) struct Stopwatch {
    elapsed: Duration,
    since: Option<Instant>,
}

impl Stopwatch {
    pub fn resume(&mut self) {
        if self.since.is_none() {
            self.since = Some(Instant::now());
        }
    }

    pub fn pause(&mut self) {
        if let Some(t) = self.since.take() {
            self.elapsed += t.elapsed();
        }
    }

    pub fn elapsed_ms(&self) -> f64 {
        self.elapsed.as_secs_f64() * 1e3
    }
}

/// Bookkeeping shared by the solver loops: gradient counter, solver-only
/// wall clock and the trace being built.
#[derive(Debug, Default)]
pub(crate) struct TraceRecorder {
    trace: ConvergenceTrace,
    counter: GradientCounter,
    clock: Stopwatch,
}

impl TraceRecorder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn resume(&mut self) {
        self.clock.resume();
    }

    pub fn pause(&mut self) {
        self.clock.pause();
    }

    pub fn account(&mut self, event: GradEvent) {
        self.counter.account(event);
    }

    pub fn record(&mut self, epoch: usize, cost: f64) -> Result<()> {
        if !cost.is_finite() {
            return Err(NmfError::NumericFailure { epoch });
        }
        self.trace
            .push(epoch, self.counter.count(), self.clock.elapsed_ms(), cost)
    }

    pub fn finish(self) -> ConvergenceTrace {
        self.trace
    }
}
