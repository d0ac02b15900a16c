//! Iterative CP solvers and the decomposition driver.
//!
//! Every method is a block Gauss-Seidel sweep over the three factors, each
//! block solved in closed form through the Gramian of the other two:
//!
//! - `als`: plain least squares per block;
//! - `rals`: least squares with a proximal term `α_k‖X − X^k‖²`, `α_k` decaying
//!   geometrically to a floor;
//! - `lsals`: an ALS sweep followed by a line search along the sweep direction
//!   over a fixed set of extrapolation steps.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use log::debug;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::centroid;
use crate::error::{CpError, Result};
use crate::reduced::{self, KrRank};
use crate::spectra;
use crate::tensor::{self, FactorSet, Mat, Mode, Tensor3};

/// Consecutive low-progress iterations that end a run as stalled.
pub const STALL_WINDOW: usize = 5;

/// Extrapolation steps tried by the line search; `1.0` is the plain sweep.
pub const LINE_SEARCH_STEPS: [f64; 5] = [1.0, 1.5, 2.0, 3.0, 5.0];

/// `σ_min(KR) < ratio·σ_max(KR)` flags a near-degenerate block solve.
pub const DEGENERACY_RATIO: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Als,
    Rals,
    Lsals,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Als => "als",
            Method::Rals => "rals",
            Method::Lsals => "lsals",
        })
    }
}

impl FromStr for Method {
    type Err = CpError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "als" => Ok(Method::Als),
            "rals" => Ok(Method::Rals),
            "lsals" => Ok(Method::Lsals),
            other => Err(CpError::InvalidConfig(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Init {
    /// Seeded standard normal entries, columns scaled to unit norm.
    Random { seed: u64 },
    Centroid,
    CentroidSymmetric,
}

impl Init {
    pub fn kind(&self) -> &'static str {
        match self {
            Init::Random { .. } => "random",
            Init::Centroid => "centroid",
            Init::CentroidSymmetric => "centroid_symmetric",
        }
    }

    /// Parses `random`, `centroid` or `centroid_symmetric`; `seed` is used by `random`.
    pub fn parse(kind: &str, seed: u64) -> Result<Self> {
        match kind.trim().to_ascii_lowercase().as_str() {
            "random" => Ok(Init::Random { seed }),
            "centroid" => Ok(Init::Centroid),
            "centroid_symmetric" => Ok(Init::CentroidSymmetric),
            other => Err(CpError::InvalidConfig(format!("unknown init `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub method: Method,
    pub init: Init,
    pub rank: usize,
    pub max_iters: usize,
    pub tol_residual: f64,
    /// Relative decrease of the objective below which an iteration counts
    /// toward a stall.
    pub tol_stall: f64,
    pub rals_alpha0: f64,
    pub rals_decay: f64,
    pub rals_alpha_floor: f64,
    /// The line search runs every `ls_interval` iterations.
    pub ls_interval: usize,
    /// Keep `B = C` by updating the pair with a single least-squares solve.
    pub symmetric: bool,
    /// Record the factor iterates alongside the trace.
    pub keep_history: bool,
}

impl SolverConfig {
    pub fn new(method: Method, init: Init, rank: usize) -> Self {
        Self {
            method,
            init,
            rank,
            max_iters: 1000,
            tol_residual: 1e-10,
            tol_stall: 1e-12,
            rals_alpha0: 1.0,
            rals_decay: 0.7,
            rals_alpha_floor: 1e-12,
            ls_interval: 1,
            symmetric: false,
            keep_history: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(CpError::InvalidConfig(msg.to_string()));
        if self.rank == 0 {
            return Err(CpError::InfeasibleRank {
                rank: 0,
                reason: "rank must be at least 1".into(),
            });
        }
        if self.max_iters == 0 {
            return fail("max_iters must be at least 1");
        }
        if !(self.tol_residual > 0.0) || !(self.tol_stall > 0.0) {
            return fail("tolerances must be positive");
        }
        if !(self.rals_decay > 0.0 && self.rals_decay < 1.0) {
            return fail("rals_decay must lie in (0, 1)");
        }
        if !(self.rals_alpha0 >= 0.0) || !(self.rals_alpha_floor >= 0.0) {
            return fail("regularization parameters must be nonnegative");
        }
        if self.ls_interval == 0 {
            return fail("ls_interval must be at least 1");
        }
        Ok(())
    }
}

/// `α_k = max(α₀·decay^k, α_floor)`.
pub fn rals_schedule(k: usize, cfg: &SolverConfig) -> f64 {
    let exponent = i32::try_from(k).unwrap_or(i32::MAX);
    (cfg.rals_alpha0 * cfg.rals_decay.powi(exponent)).max(cfg.rals_alpha_floor)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    /// 1-based sweep index.
    pub iter: usize,
    /// Objective after the sweep.
    pub objective: f64,
    /// Objective after the first-factor update, `J_red(B^k, C^k)`.
    pub jred: f64,
    /// Rank monitors of `B⊙C`, `C⊙A`, `A⊙B` at the end of the sweep.
    pub kr: [KrRank; 3],
    pub wall_ms: f64,
    pub alpha: Option<f64>,
    /// Line-search step taken, when the line search ran.
    pub step: Option<f64>,
    /// A block solve hit the degeneracy guard.
    pub degenerate: bool,
}

impl IterationRecord {
    pub fn sigma_min(&self) -> [f64; 3] {
        [self.kr[0].sigma_min, self.kr[1].sigma_min, self.kr[2].sigma_min]
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConvergenceTrace {
    pub initial_objective: f64,
    pub records: Vec<IterationRecord>,
}

impl ConvergenceTrace {
    pub fn objectives(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.objective).collect()
    }

    /// First iteration whose objective falls below `threshold`.
    pub fn iterations_to(&self, threshold: f64) -> Option<usize> {
        if self.initial_objective < threshold {
            return Some(0);
        }
        self.records.iter().find(|r| r.objective < threshold).map(|r| r.iter)
    }

    pub fn final_objective(&self) -> f64 {
        self.records.last().map_or(self.initial_objective, |r| r.objective)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Converged,
    Stalled,
    MaxIters,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Converged => "converged",
            Status::Stalled => "stalled",
            Status::MaxIters => "max_iters",
        })
    }
}

#[derive(Debug, Clone)]
pub struct Decomposition {
    pub factors: FactorSet,
    pub trace: ConvergenceTrace,
    pub status: Status,
    /// Initial factors followed by every iterate, when requested.
    pub history: Option<Vec<FactorSet>>,
}

/// Result of one block update.
struct BlockUpdate {
    factor: Mat,
    degenerate: bool,
}

fn solve_block(t: &Tensor3, f: &FactorSet, mode: Mode, alpha: f64) -> Result<BlockUpdate> {
    let (x, y) = f.others(mode);
    let g = reduced::gramian(x, y)?;
    let rhs = tensor::mode_contraction(t, f, mode)?;
    let degenerate = g.rank < f.rank() || g.monitor().is_degenerate(DEGENERACY_RATIO);
    let factor = if alpha == 0.0 {
        rhs * &g.pseudo_inverse
    } else {
        let damped = &g.matrix + Mat::identity(f.rank(), f.rank()) * alpha;
        (rhs + f.factor(mode) * alpha) * spectra::pinv_gram(&damped)?
    };
    Ok(BlockUpdate { factor, degenerate })
}

/// Replaces the factor of `mode` by its (optionally damped) least-squares update.
pub fn update_factor(t: &Tensor3, f: &FactorSet, mode: Mode, alpha: f64) -> Result<FactorSet> {
    f.check_tensor(t)?;
    let mut next = f.clone();
    *next.factor_mut(mode) = solve_block(t, f, mode, alpha)?.factor;
    Ok(next)
}

struct SweepOutcome {
    factors: FactorSet,
    jred: f64,
    degenerate: bool,
}

fn sweep(t: &Tensor3, f: &FactorSet, alpha: f64, symmetric: bool) -> Result<SweepOutcome> {
    f.check_tensor(t)?;
    let mut cur = f.clone();
    let mut degenerate = false;

    let upd = solve_block(t, &cur, Mode::One, alpha)?;
    cur.a = upd.factor;
    degenerate |= upd.degenerate;
    let jred = reduced::objective(t, &cur)?;

    let upd = solve_block(t, &cur, Mode::Two, alpha)?;
    cur.b = upd.factor;
    degenerate |= upd.degenerate;
    if symmetric {
        cur.c = cur.b.clone();
    } else {
        let upd = solve_block(t, &cur, Mode::Three, alpha)?;
        cur.c = upd.factor;
        degenerate |= upd.degenerate;
    }
    Ok(SweepOutcome {
        factors: cur,
        jred,
        degenerate,
    })
}

/// One ALS sweep: `A`, then `B`, then `C`, each by exact least squares.
pub fn als_sweep(t: &Tensor3, f: &FactorSet) -> Result<FactorSet> {
    Ok(sweep(t, f, 0.0, false)?.factors)
}

/// One regularized sweep with proximal weight `alpha`.
pub fn rals_sweep(t: &Tensor3, f: &FactorSet, alpha: f64) -> Result<FactorSet> {
    if !(alpha >= 0.0) {
        return Err(CpError::InvalidConfig(format!("alpha must be nonnegative, got {alpha}")));
    }
    Ok(sweep(t, f, alpha, false)?.factors)
}

/// Outcome of a line-search sweep.
#[derive(Debug, Clone)]
pub struct LineSearchStep {
    pub factors: FactorSet,
    pub step: f64,
    pub objective: f64,
}

fn line_search(t: &Tensor3, start: &FactorSet, plain: FactorSet) -> Result<LineSearchStep> {
    let mut best = LineSearchStep {
        objective: reduced::objective(t, &plain)?,
        factors: plain.clone(),
        step: 1.0,
    };
    for &s in LINE_SEARCH_STEPS.iter().skip(1) {
        let cand = start.extrapolate(&plain, s);
        let obj = reduced::objective(t, &cand)?;
        if obj < best.objective {
            best = LineSearchStep {
                factors: cand,
                step: s,
                objective: obj,
            };
        }
    }
    Ok(best)
}

/// ALS sweep followed by a search over `F + s·(F_sweep − F)` for
/// `s ∈ LINE_SEARCH_STEPS`; the plain sweep is kept unless a step strictly
/// improves the objective.
pub fn lsals_sweep(t: &Tensor3, f: &FactorSet) -> Result<LineSearchStep> {
    let plain = als_sweep(t, f)?;
    line_search(t, f, plain)
}

/// Seeded standard normal factors with unit-norm columns.
pub fn random_factors(dims: [usize; 3], rank: usize, seed: u64) -> Result<FactorSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |rows: usize| {
        let mut m = Mat::from_fn(rows, rank, |_, _| StandardNormal.sample(&mut rng));
        normalize_columns(&mut m);
        m
    };
    let a = draw(dims[0]);
    let b = draw(dims[1]);
    let c = draw(dims[2]);
    FactorSet::new(a, b, c)
}

pub fn normalize_columns(m: &mut Mat) {
    for mut col in m.column_iter_mut() {
        let n = col.norm();
        if n > 0.0 {
            col /= n;
        }
    }
}

fn initial_factors(t: &Tensor3, cfg: &SolverConfig) -> Result<FactorSet> {
    let mut f = match cfg.init {
        Init::Random { seed } => random_factors(t.dims(), cfg.rank, seed)?,
        Init::Centroid => centroid::centroid_init(t, cfg.rank)?.init_factors,
        Init::CentroidSymmetric => centroid::centroid_init_symmetric(t, cfg.rank)?.factors,
    };
    if cfg.symmetric {
        f.c = f.b.clone();
    }
    Ok(f)
}

fn kr_monitors(f: &FactorSet) -> Result<[KrRank; 3]> {
    Ok([
        reduced::kr_rank(&f.b, &f.c)?,
        reduced::kr_rank(&f.c, &f.a)?,
        reduced::kr_rank(&f.a, &f.b)?,
    ])
}

/// Runs the configured solver from the configured initialization until the
/// objective drops below `tol_residual`, progress stalls for
/// [`STALL_WINDOW`] consecutive sweeps, or `max_iters` sweeps have run.
pub fn decompose(t: &Tensor3, cfg: &SolverConfig) -> Result<Decomposition> {
    cfg.validate()?;
    let [_, j_dim, k_dim] = t.dims();
    if cfg.symmetric && j_dim != k_dim {
        return Err(CpError::InvalidConfig(format!(
            "symmetric mode needs J = K, got {j_dim} and {k_dim}"
        )));
    }
    let started = Instant::now();
    let mut factors = initial_factors(t, cfg)?;
    let initial_objective = reduced::objective(t, &factors)?;
    let mut trace = ConvergenceTrace {
        initial_objective,
        records: Vec::with_capacity(cfg.max_iters.min(4096)),
    };
    let mut history = cfg.keep_history.then(|| vec![factors.clone()]);
    let mut prev = initial_objective;
    let mut low_progress = 0usize;
    let mut status = Status::MaxIters;

    for iter in 1..=cfg.max_iters {
        let alpha = match cfg.method {
            Method::Rals => rals_schedule(iter - 1, cfg),
            _ => 0.0,
        };
        let outcome = sweep(t, &factors, alpha, cfg.symmetric)?;
        let (next, step, objective) = match cfg.method {
            Method::Lsals if iter % cfg.ls_interval == 0 => {
                let ls = line_search(t, &factors, outcome.factors)?;
                if ls.step > 1.0 {
                    debug!("iteration {iter}: line search step {}", ls.step);
                }
                (ls.factors, Some(ls.step), ls.objective)
            }
            _ => {
                let obj = reduced::objective(t, &outcome.factors)?;
                (outcome.factors, None, obj)
            }
        };
        factors = next;
        let kr = kr_monitors(&factors)?;
        let degenerate = outcome.degenerate || kr.iter().any(|m| m.is_degenerate(DEGENERACY_RATIO));
        trace.records.push(IterationRecord {
            iter,
            objective,
            jred: outcome.jred,
            kr,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
            alpha: (cfg.method == Method::Rals).then_some(alpha),
            step,
            degenerate,
        });
        if let Some(h) = history.as_mut() {
            h.push(factors.clone());
        }

        if objective < cfg.tol_residual {
            status = Status::Converged;
            break;
        }
        let relative = if prev > 0.0 { (prev - objective) / prev } else { 0.0 };
        if relative < cfg.tol_stall {
            low_progress += 1;
        } else {
            low_progress = 0;
        }
        if low_progress >= STALL_WINDOW {
            status = Status::Stalled;
            break;
        }
        prev = objective;
    }

    Ok(Decomposition {
        factors,
        trace,
        status,
        history,
    })
}
