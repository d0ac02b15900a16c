//! Swamp metrics and rank-one critical point tooling.
//!
//! A swamp shows up as consecutive Khatri-Rao iterates spanning almost the
//! same subspace while the objective barely moves. Two per-iteration signals
//! are tracked for each mode pairing (`B⊙C`, `C⊙A`, `A⊙B`): the distance
//! between the projections of a fixed probe vector onto consecutive ranges,
//! and the condition number of the concatenated iterates.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{CpError, Result};
use crate::reduced;
use crate::solvers;
use crate::spectra;
use crate::tensor::{self, FactorSet, Mat, Mode, Tensor3};

/// Seed of the default probe vector.
pub const DEFAULT_PROBE_SEED: u64 = 0x5EED;

/// Unit-norm standard normal probe of length `n`.
pub fn probe(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        x.iter_mut().for_each(|v| *v /= norm);
    }
    x
}

/// `‖P₁x − P₂x‖` for the orthogonal projectors onto `range(m1)` and
/// `range(m2)`, with `x` scaled to unit norm.
pub fn subspace_proj_distance(m1: &Mat, m2: &Mat, x: &[f64]) -> Result<f64> {
    let n = m1.nrows();
    if m2.nrows() != n || x.len() != n {
        return Err(CpError::DimensionMismatch(format!(
            "ranges in R^{n} and R^{} probed with a length-{} vector",
            m2.nrows(),
            x.len()
        )));
    }
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(CpError::ZeroVector("probe"));
    }
    let x = nalgebra::DVector::from_iterator(n, x.iter().map(|v| v / norm));
    let q1 = spectra::orthonormal_range(m1)?;
    let q2 = spectra::orthonormal_range(m2)?;
    let p1 = &q1 * (q1.transpose() * &x);
    let p2 = &q2 * (q2.transpose() * &x);
    Ok((p1 - p2).norm())
}

/// Mean of [`subspace_proj_distance`] over `count` probes seeded from `seed`.
pub fn subspace_proj_distance_avg(m1: &Mat, m2: &Mat, seed: u64, count: usize) -> Result<f64> {
    let count = count.max(1);
    let mut total = 0.0;
    for idx in 0..count {
        let x = probe(m1.nrows(), seed.wrapping_add(idx as u64));
        total += subspace_proj_distance(m1, m2, &x)?;
    }
    Ok(total / count as f64)
}

/// `σ_max/σ_min` of `[m1 m2]`, or `+∞` when the concatenation is numerically
/// rank deficient (which includes `σ_min < 1e-300`).
pub fn kr_condition(m1: &Mat, m2: &Mat) -> Result<f64> {
    if m1.nrows() != m2.nrows() {
        return Err(CpError::DimensionMismatch(format!(
            "concatenating {:?} and {:?}",
            m1.shape(),
            m2.shape()
        )));
    }
    let mut joined = Mat::zeros(m1.nrows(), m1.ncols() + m2.ncols());
    joined.columns_mut(0, m1.ncols()).copy_from(m1);
    joined.columns_mut(m1.ncols(), m2.ncols()).copy_from(m2);
    let s = spectra::svd(&joined)?;
    let (max, min) = (s.sigma_max(), s.sigma_min());
    if s.rank() < s.singular_values.len() || min < 1e-300 {
        return Ok(f64::INFINITY);
    }
    Ok(max / min)
}

/// Sine of the angle between the lines spanned by `x` and `y`.
fn line_sine(x: &[f64], y: &[f64]) -> f64 {
    let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    if nx == 0.0 || ny == 0.0 {
        return if nx == ny { 0.0 } else { 1.0 };
    }
    let dot: f64 = x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>() / (nx * ny);
    let residual: f64 = x
        .iter()
        .zip(y)
        .map(|(p, q)| p / nx - dot * q / ny)
        .map(|d| d * d)
        .sum();
    residual.sqrt()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Largest first-order optimality residual of the rank-one problem at
/// `(a, b, c)`. The norms of `b` and `c` are moved onto `a`, which leaves
/// `a∘b∘c` unchanged; with `μ = ‖a‖·‖b‖·‖c‖` and `ã = a/‖a‖` this is the max of `‖μã − T(·,b,c)‖`, `‖μb − T(ã,·,c)‖` and
/// `‖μc − T(ã,b,·)‖`.
pub fn rank1_critical_residual(t: &Tensor3, a: &[f64], b: &[f64], c: &[f64]) -> Result<f64> {
    let [i_dim, j_dim, k_dim] = t.dims();
    if a.len() != i_dim || b.len() != j_dim || c.len() != k_dim {
        return Err(CpError::DimensionMismatch(format!(
            "vectors of lengths {}, {}, {} for tensor {:?}",
            a.len(),
            b.len(),
            c.len(),
            t.dims()
        )));
    }
    let na = norm(a);
    if na == 0.0 {
        return Err(CpError::ZeroVector("a"));
    }
    let (nb, nc) = (norm(b), norm(c));
    if nb == 0.0 || nc == 0.0 {
        return Err(CpError::ZeroVector("b or c"));
    }
    let mu = na * nb * nc;
    let at: Vec<f64> = a.iter().map(|v| v / na).collect();
    let bn: Vec<f64> = b.iter().map(|v| v / nb).collect();
    let cn: Vec<f64> = c.iter().map(|v| v / nc).collect();
    let f = FactorSet::new(
        Mat::from_column_slice(i_dim, 1, &at),
        Mat::from_column_slice(j_dim, 1, &bn),
        Mat::from_column_slice(k_dim, 1, &cn),
    )?;
    let mut worst: f64 = 0.0;
    for (mode, own) in [(Mode::One, &at), (Mode::Two, &bn), (Mode::Three, &cn)] {
        let contracted = tensor::mode_contraction(t, &f, mode)?;
        let r: f64 = own
            .iter()
            .zip(contracted.iter())
            .map(|(x, y)| (mu * x - y).powi(2))
            .sum::<f64>()
            .sqrt();
        worst = worst.max(r);
    }
    Ok(worst)
}

/// Runs `n_sweeps` rank-one ALS sweeps from `(a, b, c)` and returns the
/// largest sine of the angle between consecutive iterates of any factor.
pub fn rank1_stationarity_check(
    t: &Tensor3,
    a: &[f64],
    b: &[f64],
    c: &[f64],
    n_sweeps: usize,
) -> Result<f64> {
    let [i_dim, j_dim, k_dim] = t.dims();
    if a.len() != i_dim || b.len() != j_dim || c.len() != k_dim {
        return Err(CpError::DimensionMismatch("rank-one factors do not fit the tensor".into()));
    }
    let (nb, nc) = (norm(b), norm(c));
    if norm(a) == 0.0 || nb == 0.0 || nc == 0.0 {
        return Err(CpError::ZeroVector("rank-one factor"));
    }
    let mut f = FactorSet::new(
        Mat::from_column_slice(i_dim, 1, a),
        Mat::from_column_slice(j_dim, 1, &b.iter().map(|v| v / nb).collect::<Vec<_>>()),
        Mat::from_column_slice(k_dim, 1, &c.iter().map(|v| v / nc).collect::<Vec<_>>()),
    )?;
    let mut drift: f64 = 0.0;
    for _ in 0..n_sweeps {
        let next = solvers::als_sweep(t, &f)?;
        for mode in Mode::ALL {
            drift = drift.max(line_sine(f.factor(mode).as_slice(), next.factor(mode).as_slice()));
        }
        f = next;
    }
    Ok(drift)
}

/// A critical point of the rank-one problem on a 2×2×2 tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Rank1Critical {
    /// `a = μ·ã`, so `(a, b, c)` is a stationary rank-one triple.
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    /// `T(ã, b, c)`, signed.
    pub value: f64,
    /// Local extremum of `T(ã, b, c)` on the product of circles.
    pub extremal: bool,
}

fn unit(theta: f64) -> [f64; 2] {
    [theta.cos(), theta.sin()]
}

fn unit_d(theta: f64) -> [f64; 2] {
    [-theta.sin(), theta.cos()]
}

fn form(t: &Tensor3, x: [f64; 2], y: [f64; 2], z: [f64; 2]) -> f64 {
    let mut s = 0.0;
    for k in 0..2 {
        for j in 0..2 {
            for i in 0..2 {
                s += t.get(i, j, k) * x[i] * y[j] * z[k];
            }
        }
    }
    s
}

/// Gradient and Hessian of `θ ↦ T(u(θ₁), u(θ₂), u(θ₃))`.
fn angular_derivatives(t: &Tensor3, th: [f64; 3]) -> (f64, [f64; 3], [[f64; 3]; 3]) {
    let u = th.map(unit);
    let d = th.map(unit_d);
    let f = form(t, u[0], u[1], u[2]);
    let grad = [
        form(t, d[0], u[1], u[2]),
        form(t, u[0], d[1], u[2]),
        form(t, u[0], u[1], d[2]),
    ];
    let h01 = form(t, d[0], d[1], u[2]);
    let h02 = form(t, d[0], u[1], d[2]);
    let h12 = form(t, u[0], d[1], d[2]);
    let hess = [[-f, h01, h02], [h01, -f, h12], [h02, h12, -f]];
    (f, grad, hess)
}

fn wrap_pi(x: f64) -> f64 {
    x.rem_euclid(std::f64::consts::PI)
}

fn circular_gap(x: f64, y: f64) -> f64 {
    let d = (x - y).rem_euclid(std::f64::consts::PI);
    d.min(std::f64::consts::PI - d)
}

fn require_2x2x2(t: &Tensor3) -> Result<()> {
    if t.dims() != [2, 2, 2] {
        return Err(CpError::DimensionMismatch(format!(
            "critical point search needs a 2x2x2 tensor, got {:?}",
            t.dims()
        )));
    }
    Ok(())
}

/// Deduplicated critical points keyed by their angles modulo π.
struct CriticalSet<'a> {
    t: &'a Tensor3,
    found: Vec<([f64; 3], Rank1Critical)>,
}

impl<'a> CriticalSet<'a> {
    fn new(t: &'a Tensor3) -> Self {
        Self { t, found: Vec::new() }
    }

    /// Points with `|T(ã,b,c)| ≤ 1e-8` are dropped since they give a zero
    /// first factor.
    fn insert(&mut self, point: [f64; 3]) -> Result<()> {
        let key = point.map(wrap_pi);
        let duplicate = self
            .found
            .iter()
            .any(|(other, _)| key.iter().zip(other).all(|(x, y)| circular_gap(*x, *y) < 1e-6));
        if duplicate {
            return Ok(());
        }
        let (f, _, hess) = angular_derivatives(self.t, key);
        if f.abs() <= 1e-8 {
            return Ok(());
        }
        // Local maximum of |f|, i.e. a local minimizer of the rank-one loss.
        let hm = Mat::from_fn(3, 3, |r, c| f.signum() * hess[r][c]);
        let extremal = spectra::sym_eig(&hm)?.eigenvalues.iter().all(|&l| l < 0.0);
        let [ua, ub, uc] = key.map(unit);
        self.found.push((
            key,
            Rank1Critical {
                a: ua.iter().map(|v| v * f).collect(),
                b: ub.to_vec(),
                c: uc.to_vec(),
                value: f,
                extremal,
            },
        ));
        Ok(())
    }

    fn finish(self) -> Vec<Rank1Critical> {
        self.found.into_iter().map(|(_, p)| p).collect()
    }
}

/// Enumerates critical points of the rank-one problem on a 2×2×2 tensor.
///
/// Each unit factor is parametrized by an angle in `[0, π)`, the squared
/// gradient of `T(u(θ₁), u(θ₂), u(θ₃))` is scanned on a `grid³` lattice, and
/// every local minimum of the lattice is refined by Newton's method on the
/// gradient. This finds saddles as well as extrema.
pub fn rank1_critical_points_2x2x2(t: &Tensor3, grid: usize) -> Result<Vec<Rank1Critical>> {
    require_2x2x2(t)?;
    let grid = grid.max(4);
    let h = std::f64::consts::PI / grid as f64;
    let idx = |i: usize, j: usize, k: usize| i + grid * (j + grid * k);
    let mut g2 = vec![0.0; grid * grid * grid];
    for k in 0..grid {
        for j in 0..grid {
            for i in 0..grid {
                let (_, g, _) = angular_derivatives(t, [i as f64 * h, j as f64 * h, k as f64 * h]);
                g2[idx(i, j, k)] = g.iter().map(|v| v * v).sum();
            }
        }
    }
    let mut set = CriticalSet::new(t);
    for k in 0..grid {
        for j in 0..grid {
            for i in 0..grid {
                let here = g2[idx(i, j, k)];
                let mut is_min = true;
                'scan: for dk in [grid - 1, 0, 1] {
                    for dj in [grid - 1, 0, 1] {
                        for di in [grid - 1, 0, 1] {
                            if di == 0 && dj == 0 && dk == 0 {
                                continue;
                            }
                            let other = g2[idx((i + di) % grid, (j + dj) % grid, (k + dk) % grid)];
                            if other < here {
                                is_min = false;
                                break 'scan;
                            }
                        }
                    }
                }
                if is_min {
                    if let Some(point) = newton_refine(t, [i as f64 * h, j as f64 * h, k as f64 * h]) {
                        set.insert(point)?;
                    }
                }
            }
        }
    }
    Ok(set.finish())
}

/// Critical points reached by coupled power iteration on a 2×2×2 tensor.
///
/// Starts from a `grid²` lattice of unit pairs `(b, c)` and iterates
/// `b ∝ ℳ(·, c, b, c)`, `c ∝ ℳ(b, c, b, ·)` with `ℳ_{jkj'k'} = Σᵢ T_{ijk} T_{ij'k'}`,
/// then polishes each limit with Newton steps and sets `a = T(·, b, c)`.
/// The iteration only settles on points that attract it, which are the
/// points where rank-one ALS can sit.
pub fn rank1_critical_search(t: &Tensor3, grid: usize) -> Result<Vec<Rank1Critical>> {
    require_2x2x2(t)?;
    let grid = grid.max(2);
    let h = std::f64::consts::PI / grid as f64;
    let mut set = CriticalSet::new(t);
    for jc in 0..grid {
        for jb in 0..grid {
            let mut b = unit(jb as f64 * h);
            let mut c = unit(jc as f64 * h);
            let mut settled = false;
            for _ in 0..2000 {
                let a = contract_a(t, b, c);
                let nb = normalize2(contract_b(t, a, c));
                let Some(nb) = nb else { break };
                let a = contract_a(t, nb, c);
                let Some(nc) = normalize2(contract_c(t, a, nb)) else { break };
                let moved = line_sine(&b, &nb).max(line_sine(&c, &nc));
                b = nb;
                c = nc;
                if moved < 1e-13 {
                    settled = true;
                    break;
                }
            }
            if !settled {
                continue;
            }
            let a = contract_a(t, b, c);
            let Some(ua) = normalize2(a) else { continue };
            let start = [ua[1].atan2(ua[0]), b[1].atan2(b[0]), c[1].atan2(c[0])];
            if let Some(point) = newton_refine(t, start) {
                set.insert(point)?;
            }
        }
    }
    Ok(set.finish())
}

fn contract_a(t: &Tensor3, b: [f64; 2], c: [f64; 2]) -> [f64; 2] {
    std::array::from_fn(|i| (0..2).flat_map(|j| (0..2).map(move |k| (j, k))).map(|(j, k)| t.get(i, j, k) * b[j] * c[k]).sum())
}

fn contract_b(t: &Tensor3, a: [f64; 2], c: [f64; 2]) -> [f64; 2] {
    std::array::from_fn(|j| (0..2).flat_map(|i| (0..2).map(move |k| (i, k))).map(|(i, k)| t.get(i, j, k) * a[i] * c[k]).sum())
}

fn contract_c(t: &Tensor3, a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    std::array::from_fn(|k| (0..2).flat_map(|i| (0..2).map(move |j| (i, j))).map(|(i, j)| t.get(i, j, k) * a[i] * b[j]).sum())
}

fn normalize2(v: [f64; 2]) -> Option<[f64; 2]> {
    let n = v[0].hypot(v[1]);
    (n > 1e-300).then(|| [v[0] / n, v[1] / n])
}

fn newton_refine(t: &Tensor3, start: [f64; 3]) -> Option<[f64; 3]> {
    let mut th = start;
    for _ in 0..60 {
        let (_, g, hess) = angular_derivatives(t, th);
        let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gnorm < 1e-15 {
            return Some(th);
        }
        let hm = nalgebra::Matrix3::from_fn(|r, c| hess[r][c]);
        let step = hm.lu().solve(&nalgebra::Vector3::new(g[0], g[1], g[2]))?;
        if !step.iter().all(|v| v.is_finite()) {
            return None;
        }
        for (x, s) in th.iter_mut().zip(step.iter()) {
            *x -= s;
        }
    }
    let (_, g, _) = angular_derivatives(t, th);
    (g.iter().map(|v| v * v).sum::<f64>().sqrt() < 1e-12).then_some(th)
}

/// Swamp metrics between iterate `iter − 1` and iterate `iter`.
#[derive(Debug, Clone, PartialEq)]
pub struct SwampStep {
    pub iter: usize,
    /// Probe projection distance for `B⊙C`, `C⊙A`, `A⊙B`.
    pub proj_distance: [f64; 3],
    /// Condition number of each consecutive pair, `+∞` when dependent.
    pub condition: [f64; 3],
    /// `‖P(X^k) − P(X_ref)‖_F` per factor, when a reference is supplied.
    pub reference_distance: Option<[f64; 3]>,
    /// Relative decrease of the objective below the stall tolerance.
    pub stalled: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SwampReport {
    pub steps: Vec<SwampStep>,
}

impl SwampReport {
    /// Maximal runs of at least `min_len` consecutive stalled steps, as index ranges.
    pub fn stall_windows(&self, min_len: usize) -> Vec<std::ops::Range<usize>> {
        let mut out = Vec::new();
        let mut start = None;
        for (idx, step) in self.steps.iter().enumerate() {
            match (step.stalled, start) {
                (true, None) => start = Some(idx),
                (false, Some(s)) => {
                    if idx - s >= min_len {
                        out.push(s..idx);
                    }
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            if self.steps.len() - s >= min_len {
                out.push(s..self.steps.len());
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct SwampOptions {
    pub probe_seed: u64,
    /// 1 for a single fixed probe; larger values average over that many.
    pub probes: usize,
    pub tol_stall: f64,
    pub reference: Option<FactorSet>,
}

impl Default for SwampOptions {
    fn default() -> Self {
        Self {
            probe_seed: DEFAULT_PROBE_SEED,
            probes: 1,
            tol_stall: 1e-12,
            reference: None,
        }
    }
}

/// Swamp metrics for a factor history with matching objective values.
pub fn swamp_report(history: &[FactorSet], objectives: &[f64], opts: &SwampOptions) -> Result<SwampReport> {
    if history.len() != objectives.len() {
        return Err(CpError::DimensionMismatch(format!(
            "{} iterates with {} objective values",
            history.len(),
            objectives.len()
        )));
    }
    let mut steps = Vec::with_capacity(history.len().saturating_sub(1));
    for (k, pair) in history.windows(2).enumerate() {
        let (prev, cur) = (&pair[0], &pair[1]);
        let mut proj_distance = [0.0; 3];
        let mut condition = [0.0; 3];
        for (slot, mode) in Mode::ALL.into_iter().enumerate() {
            let x = prev.khatri_rao_excluding(mode);
            let y = cur.khatri_rao_excluding(mode);
            proj_distance[slot] = subspace_proj_distance_avg(&x, &y, opts.probe_seed, opts.probes)?;
            condition[slot] = kr_condition(&x, &y)?;
        }
        let reference_distance = match &opts.reference {
            Some(r) => {
                let mut d = [0.0; 3];
                for (slot, mode) in Mode::ALL.into_iter().enumerate() {
                    let p = spectra::range_projector(cur.factor(mode))?;
                    let q = spectra::range_projector(r.factor(mode))?;
                    if p.shape() != q.shape() {
                        return Err(CpError::DimensionMismatch("reference factors".into()));
                    }
                    d[slot] = (p - q).norm();
                }
                Some(d)
            }
            None => None,
        };
        let (before, after) = (objectives[k], objectives[k + 1]);
        let relative = if before > 0.0 { (before - after) / before } else { 0.0 };
        steps.push(SwampStep {
            iter: k + 1,
            proj_distance,
            condition,
            reference_distance,
            stalled: relative < opts.tol_stall,
        });
    }
    Ok(SwampReport { steps })
}

/// Objective values for every iterate of a history.
pub fn history_objectives(t: &Tensor3, history: &[FactorSet]) -> Result<Vec<f64>> {
    history.iter().map(|f| reduced::objective(t, f)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::random_factors;
    use crate::tensor::outer3;

    fn col(v: &[f64]) -> Mat {
        Mat::from_column_slice(v.len(), 1, v)
    }

    fn gaussian_tensor(dims: [usize; 3], seed: u64) -> Tensor3 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..dims[0] * dims[1] * dims[2])
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        Tensor3::new(dims, data).unwrap()
    }

    #[test]
    fn proj_distance_examples() {
        let m = Mat::from_column_slice(3, 2, &[1.0, 2.0, 0.0, 0.0, 1.0, 1.0]);
        let x = probe(3, 1);
        assert!(subspace_proj_distance(&m, &m, &x).unwrap() < 1e-15);
        let e1 = col(&[1.0, 0.0]);
        let e2 = col(&[0.0, 1.0]);
        assert!((subspace_proj_distance(&e1, &e2, &[1.0, 0.0]).unwrap() - 1.0).abs() < 1e-15);
        let scaled = &m * Mat::from_row_slice(2, 2, &[3.0, 0.0, 0.0, -0.2]);
        assert!(subspace_proj_distance(&m, &scaled, &x).unwrap() < 1e-12);
        assert!(matches!(
            subspace_proj_distance(&m, &m, &[0.0; 3]),
            Err(CpError::ZeroVector(_))
        ));
    }

    #[test]
    fn proj_distance_is_symmetric_and_permutation_invariant() {
        let m1 = random_factors([6, 2, 2], 2, 1).unwrap().a;
        let m2 = random_factors([6, 2, 2], 3, 2).unwrap().a;
        let x = probe(6, 9);
        let d12 = subspace_proj_distance(&m1, &m2, &x).unwrap();
        let d21 = subspace_proj_distance(&m2, &m1, &x).unwrap();
        assert!((d12 - d21).abs() < 1e-15);
        let perm = Mat::from_fn(3, 3, |r, c| if (r + 1) % 3 == c { 1.0 } else { 0.0 });
        let d_perm = subspace_proj_distance(&m1, &(&m2 * perm), &x).unwrap();
        assert!((d12 - d_perm).abs() < 1e-12);
        let avg = subspace_proj_distance_avg(&m1, &m2, 5, 8).unwrap();
        assert!(avg > 0.0);
    }

    #[test]
    fn condition_examples() {
        let e1 = col(&[1.0, 0.0]);
        let e2 = col(&[0.0, 1.0]);
        assert!((kr_condition(&e1, &e2).unwrap() - 1.0).abs() < 1e-15);
        let m = random_factors([5, 2, 2], 2, 4).unwrap().a;
        assert_eq!(kr_condition(&m, &m).unwrap(), f64::INFINITY);
        let near = &m + Mat::from_fn(5, 2, |r, c| 1e-8 * ((r + 2 * c) as f64).sin());
        assert!(kr_condition(&m, &near).unwrap() > 1e6);
    }

    #[test]
    fn critical_residual_examples() {
        let (a, b, c) = ([2.0, -1.0], [0.6, 0.8], [1.0, 0.0]);
        let t = outer3(&a, &b, &c).unwrap();
        assert!(rank1_critical_residual(&t, &a, &b, &c).unwrap() < 1e-15);
        let (b3, c2) = ([1.8, 2.4], [2.0, 0.0]);
        let scaled = outer3(&a, &b3, &c2).unwrap();
        assert!(rank1_critical_residual(&scaled, &a, &b3, &c2).unwrap() < 1e-14);
        assert!(matches!(
            rank1_critical_residual(&t, &[0.0, 0.0], &b, &c),
            Err(CpError::ZeroVector(_))
        ));
        let noisy = rank1_critical_residual(&t, &[1.0, 1.0], &[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert!(noisy > 0.01);
    }

    #[test]
    fn global_minimizer_is_stationary() {
        let (a, b, c) = ([1.5, 0.5, -1.0], [0.6, 0.8], [0.0, 1.0, 0.0]);
        let t = outer3(&a, &b, &c).unwrap();
        assert!(rank1_stationarity_check(&t, &a, &b, &c, 20).unwrap() < 1e-10);
    }

    #[test]
    fn enumerated_points_are_critical() {
        for seed in 0..3 {
            let t = gaussian_tensor([2, 2, 2], 40 + seed);
            let points = rank1_critical_points_2x2x2(&t, 24).unwrap();
            assert!(points.iter().any(|p| p.extremal));
            for p in &points {
                assert!(rank1_critical_residual(&t, &p.a, &p.b, &p.c).unwrap() < 1e-9);
            }
        }
    }

    #[test]
    fn searched_points_hold_under_als() {
        for seed in 0..3 {
            let t = gaussian_tensor([2, 2, 2], 40 + seed);
            let all = rank1_critical_points_2x2x2(&t, 24).unwrap();
            let searched = rank1_critical_search(&t, 16).unwrap();
            assert!(!searched.is_empty());
            for p in &searched {
                assert!(rank1_critical_residual(&t, &p.a, &p.b, &p.c).unwrap() < 1e-9);
                assert!(rank1_stationarity_check(&t, &p.a, &p.b, &p.c, 20).unwrap() < 1e-8);
                let known = all.iter().any(|q| {
                    (q.value - p.value).abs() < 1e-9
                        && line_sine(&q.b, &p.b) < 1e-6
                        && line_sine(&q.c, &p.c) < 1e-6
                });
                assert!(known);
            }
        }
    }

    #[test]
    fn constructed_saddle_is_fixed() {
        // e2∘e2∘e2 is critical with an indefinite angular Hessian and every
        // ALS product at it is exact in floating point.
        let mut data = vec![0.0; 8];
        data[0] = 3.0; // (0,0,0)
        data[7] = 1.0; // (1,1,1)
        data[4] = 2.0; // (0,0,1)
        let t = Tensor3::new([2, 2, 2], data).unwrap();
        let e2 = [0.0, 1.0];
        assert_eq!(rank1_critical_residual(&t, &e2, &e2, &e2).unwrap(), 0.0);
        let saddle = rank1_critical_points_2x2x2(&t, 24)
            .unwrap()
            .into_iter()
            .find(|p| line_sine(&p.b, &e2) < 1e-9 && line_sine(&p.c, &e2) < 1e-9)
            .unwrap();
        assert!(!saddle.extremal);
        assert!(rank1_stationarity_check(&t, &e2, &e2, &e2, 20).unwrap() < 1e-8);
    }

    #[test]
    fn perturbed_critical_point_moves() {
        let t = gaussian_tensor([2, 2, 2], 41);
        let p = &rank1_critical_search(&t, 16).unwrap()[0];
        let b = [p.b[0] + 1e-3, p.b[1] - 1e-3];
        let drift = rank1_stationarity_check(&t, &p.a, &b, &p.c, 1).unwrap();
        assert!(drift > 1e-6);
    }

    #[test]
    fn swamp_report_on_stationary_history() {
        let f = random_factors([3, 3, 3], 2, 5).unwrap();
        let history = vec![f.clone(), f.clone(), f.clone()];
        let report = swamp_report(&history, &[1.0, 1.0, 1.0], &SwampOptions::default()).unwrap();
        assert_eq!(report.steps.len(), 2);
        for step in &report.steps {
            assert!(step.proj_distance.iter().all(|&d| d < 1e-14));
            assert!(step.condition.iter().all(|c| c.is_infinite()));
            assert!(step.stalled);
        }
        assert_eq!(report.stall_windows(2), vec![0..2]);
        assert!(swamp_report(&history, &[1.0], &SwampOptions::default()).is_err());
    }

    #[test]
    fn swamp_report_with_reference() {
        let t = gaussian_tensor([3, 3, 3], 6);
        let mut cfg = crate::solvers::SolverConfig::new(
            crate::solvers::Method::Als,
            crate::solvers::Init::Random { seed: 1 },
            2,
        );
        cfg.max_iters = 5;
        cfg.keep_history = true;
        let out = crate::solvers::decompose(&t, &cfg).unwrap();
        let history = out.history.unwrap();
        let objectives = history_objectives(&t, &history).unwrap();
        let opts = SwampOptions {
            reference: Some(out.factors.clone()),
            ..SwampOptions::default()
        };
        let report = swamp_report(&history, &objectives, &opts).unwrap();
        let last = report.steps.last().unwrap();
        assert!(last.reference_distance.unwrap().iter().all(|&d| d < 1e-10));
        assert!(report.steps.iter().all(|s| s.condition.iter().all(|&c| c >= 1.0)));
    }
}
