//! The work behind each subcommand, kept free of argument parsing so it can
//! be driven directly from tests.

use std::path::{Path, PathBuf};

use cpcp::centroid;
use cpcp::diagnostics::{self, SwampOptions, SwampReport};
use cpcp::reduced;
use cpcp::solvers::{self, Decomposition, Init, Method, SolverConfig, Status};
use cpcp::{FactorSet, Mode, Tensor3};
use log::info;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{CliError, Result, EXIT_MAX_ITERS, EXIT_OK, EXIT_STALLED};
use crate::generate::{generate, GeneratorSpec};
use crate::io;

pub fn status_code(status: Status) -> i32 {
    match status {
        Status::Converged => EXIT_OK,
        Status::Stalled => EXIT_STALLED,
        Status::MaxIters => EXIT_MAX_ITERS,
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

#[derive(Debug, Clone, Serialize)]
pub struct ModeBounds {
    /// Eliminated mode, 1-based.
    pub mode: usize,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub gap_bound: f64,
    pub centroid_norm: f64,
    pub lambda_sum: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundsReport {
    pub rank: usize,
    /// Values with the first mode eliminated.
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub gap_bound: f64,
    pub centroid_norm: f64,
    pub lambda_sum: f64,
    /// Largest lower bound over the three eliminated modes.
    pub best_lower_bound: f64,
    /// Mode chosen by the centroid initializer and its objective, when the
    /// rank is feasible for some mode.
    pub init_mode: Option<usize>,
    pub init_objective: Option<f64>,
    pub modes: Vec<ModeBounds>,
}

pub fn bounds_report(t: &Tensor3, rank: usize) -> Result<BoundsReport> {
    let mut modes = Vec::with_capacity(3);
    for mode in Mode::ALL {
        let kernel = reduced::build_kernel(&t.mode_view(mode))?;
        let b = centroid::bounds(&kernel, rank)?;
        modes.push(ModeBounds {
            mode: mode.number(),
            lower_bound: b.lower,
            upper_bound: b.upper,
            gap_bound: b.gap,
            centroid_norm: b.centroid_norm,
            lambda_sum: b.lambda_sum,
        });
    }
    let init = match centroid::centroid_init(t, rank) {
        Ok(bundle) => Some(bundle),
        Err(cpcp::CpError::InfeasibleRank { .. }) => None,
        Err(e) => return Err(e.into()),
    };
    let first = modes[0].clone();
    Ok(BoundsReport {
        rank,
        lower_bound: first.lower_bound,
        upper_bound: first.upper_bound,
        gap_bound: first.gap_bound,
        centroid_norm: first.centroid_norm,
        lambda_sum: first.lambda_sum,
        best_lower_bound: modes.iter().map(|m| m.lower_bound).fold(0.0, f64::max),
        init_mode: init.as_ref().map(|b| b.mode_assignment.number()),
        init_objective: init.as_ref().map(|b| b.init_objective),
        modes,
    })
}

pub fn format_bounds(report: &BoundsReport) -> String {
    to_json(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub method: String,
    pub init: String,
    pub rank: usize,
    pub status: String,
    pub iterations: usize,
    pub initial_objective: f64,
    pub final_objective: f64,
}

impl RunSummary {
    pub fn new(cfg: &SolverConfig, out: &Decomposition) -> Self {
        Self {
            method: cfg.method.to_string(),
            init: cfg.init.kind().to_string(),
            rank: cfg.rank,
            status: out.status.to_string(),
            iterations: out.trace.records.len(),
            initial_objective: out.trace.initial_objective,
            final_objective: out.trace.final_objective(),
        }
    }
}

/// Paths written by a decomposition run named `name` inside `dir`.
#[derive(Debug, Clone)]
pub struct RunFiles {
    pub factors: PathBuf,
    pub trace: PathBuf,
    pub summary: PathBuf,
    pub history: PathBuf,
}

impl RunFiles {
    pub fn new(dir: &Path, name: &str) -> Self {
        Self {
            factors: dir.join(format!("{name}.factors")),
            trace: dir.join(format!("{name}.trace.jsonl")),
            summary: dir.join(format!("{name}.summary.json")),
            history: dir.join(format!("{name}.history")),
        }
    }
}

pub fn write_run(files: &RunFiles, cfg: &SolverConfig, out: &Decomposition, timing: bool) -> Result<()> {
    io::write_text(&files.factors, &io::format_factors(&out.factors))?;
    io::write_text(&files.trace, &io::format_trace(&out.trace, timing))?;
    io::write_text(&files.summary, &to_json(&RunSummary::new(cfg, out)))?;
    if let Some(h) = &out.history {
        io::write_text(&files.history, &io::format_history(h))?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct SwampLine {
    iter: usize,
    proj_distance: [f64; 3],
    /// `null` stands for an infinite condition number.
    condition: [Option<f64>; 3],
    reference_distance: Option<[f64; 3]>,
    stalled: bool,
}

pub fn format_swamp(report: &SwampReport) -> String {
    let mut out = String::new();
    for step in &report.steps {
        let line = SwampLine {
            iter: step.iter,
            proj_distance: step.proj_distance,
            condition: step.condition.map(|c| c.is_finite().then_some(c)),
            reference_distance: step.reference_distance,
            stalled: step.stalled,
        };
        out.push_str(&serde_json::to_string(&line).expect("swamp record serializes"));
        out.push('\n');
    }
    out
}

/// Swamp report for a history, with objectives taken from `trace` when
/// given (it must list one record per iterate after the first) or
/// recomputed from the tensor otherwise.
pub fn diagnose(
    t: &Tensor3,
    history: &[FactorSet],
    trace_objectives: Option<(f64, Vec<f64>)>,
    opts: &SwampOptions,
) -> Result<SwampReport> {
    for f in history {
        f.check_tensor(t)?;
    }
    let objectives = match trace_objectives {
        Some((initial, rest)) => {
            if rest.len() + 1 != history.len() {
                return Err(CliError::Data(format!(
                    "trace has {} records for {} iterates",
                    rest.len(),
                    history.len()
                )));
            }
            std::iter::once(initial).chain(rest).collect()
        }
        None => diagnostics::history_objectives(t, history)?,
    };
    Ok(diagnostics::swamp_report(history, &objectives, opts)?)
}

/// A grid of solver runs over seeded generated tensors.
#[derive(Debug, Clone)]
pub struct BenchSpec {
    /// Repetition `r` uses seed `generator.seed + r` for the tensor.
    pub generator: GeneratorSpec,
    pub methods: Vec<Method>,
    /// Init kinds: `random`, `centroid`, `centroid_symmetric`.
    pub inits: Vec<String>,
    pub repetitions: usize,
    /// Template for every run; method, init and rank are replaced.
    pub config: SolverConfig,
    pub threshold: f64,
}

/// Seed of the random initialization for repetition `rep`.
pub fn bench_init_seed(base: u64, rep: usize) -> u64 {
    base.wrapping_add(rep as u64).wrapping_add(0x1000_0000)
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchRun {
    pub method: String,
    pub init: String,
    pub repetition: usize,
    pub status: String,
    /// `None` when the threshold was never reached.
    pub iterations_to_threshold: Option<usize>,
    pub iterations: usize,
    pub final_objective: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub method: String,
    pub init: String,
    pub repetitions: usize,
    pub threshold: f64,
    /// Number of runs that reached the threshold.
    pub reached: usize,
    /// Quartiles of iterations-to-threshold; runs that never reach it count
    /// as infinitely slow, and an infinite quartile is written as `null`.
    pub iters_median: Option<f64>,
    pub iters_q1: Option<f64>,
    pub iters_q3: Option<f64>,
    pub iters_iqr: Option<f64>,
    pub final_objective_median: f64,
    pub final_objective_iqr: f64,
}

/// Linear-interpolation quantile of sorted data. Infinite neighbours give
/// an infinite result.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    if lo == hi || sorted[lo] == sorted[hi] {
        return sorted[lo];
    }
    if sorted[hi].is_infinite() {
        return f64::INFINITY;
    }
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn summarize(method: &str, init: &str, runs: &[&BenchRun], threshold: f64) -> BenchRow {
    let mut iters: Vec<f64> = runs
        .iter()
        .map(|r| r.iterations_to_threshold.map_or(f64::INFINITY, |n| n as f64))
        .collect();
    iters.sort_by(f64::total_cmp);
    let mut finals: Vec<f64> = runs.iter().map(|r| r.final_objective).collect();
    finals.sort_by(f64::total_cmp);
    let (q1, q3) = (quantile(&iters, 0.25), quantile(&iters, 0.75));
    BenchRow {
        method: method.to_string(),
        init: init.to_string(),
        repetitions: runs.len(),
        threshold,
        reached: runs.iter().filter(|r| r.iterations_to_threshold.is_some()).count(),
        iters_median: finite(quantile(&iters, 0.5)),
        iters_q1: finite(q1),
        iters_q3: finite(q3),
        iters_iqr: finite(q3 - q1),
        final_objective_median: quantile(&finals, 0.5),
        final_objective_iqr: quantile(&finals, 0.75) - quantile(&finals, 0.25),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub runs: Vec<BenchRun>,
}

/// Runs every (method, init, repetition) combination, in parallel, and
/// reduces them to one row per (method, init) in the order given.
pub fn bench(spec: &BenchSpec) -> Result<BenchReport> {
    if spec.repetitions == 0 {
        return Err(CliError::Usage("repetitions must be at least 1".into()));
    }
    if spec.methods.is_empty() || spec.inits.is_empty() {
        return Err(CliError::Usage("bench needs at least one method and one init".into()));
    }
    for init in &spec.inits {
        Init::parse(init, 0)?;
    }
    let tensors: Vec<Tensor3> = (0..spec.repetitions)
        .into_par_iter()
        .map(|rep| {
            let mut g = spec.generator;
            g.seed = g.seed.wrapping_add(rep as u64);
            generate(&g).map(|out| out.tensor)
        })
        .collect::<Result<_>>()?;

    let mut jobs = Vec::new();
    for method in &spec.methods {
        for init in &spec.inits {
            for rep in 0..spec.repetitions {
                jobs.push((*method, init.as_str(), rep));
            }
        }
    }
    let runs: Vec<BenchRun> = jobs
        .par_iter()
        .map(|&(method, init, rep)| {
            let mut cfg = spec.config.clone();
            cfg.method = method;
            cfg.rank = spec.generator.rank;
            cfg.init = Init::parse(init, bench_init_seed(spec.generator.seed, rep))?;
            cfg.keep_history = false;
            let out = solvers::decompose(&tensors[rep], &cfg)?;
            Ok(BenchRun {
                method: method.to_string(),
                init: init.to_string(),
                repetition: rep,
                status: out.status.to_string(),
                iterations_to_threshold: out.trace.iterations_to(spec.threshold),
                iterations: out.trace.records.len(),
                final_objective: out.trace.final_objective(),
            })
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for method in &spec.methods {
        for init in &spec.inits {
            let group: Vec<&BenchRun> = runs
                .iter()
                .filter(|r| r.method == method.to_string() && r.init == *init)
                .collect();
            let row = summarize(&method.to_string(), init, &group, spec.threshold);
            info!(
                "{} / {}: median iterations {:?}, reached {}/{}",
                row.method, row.init, row.iters_median, row.reached, row.repetitions
            );
            rows.push(row);
        }
    }
    Ok(BenchReport { rows, runs })
}

pub fn format_bench(report: &BenchReport) -> String {
    to_json(report)
}
