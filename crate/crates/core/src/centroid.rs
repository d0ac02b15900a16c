//! Computable bounds on the reduced functional and the centroid projection
//! initializer.
//!
//! With `(λ_i, V_i)` the eigenpairs of the contraction kernel (eigenvectors
//! reshaped to J×K) and `σ_k^i` the singular values of `V_i`:
//!
//! - lower bound: `½ Σ_i λ_i Σ_{k>R} (σ_k^i)²` (Eckart-Young per slice);
//! - centroid: `V^C = Σ_i λ_i V_i / Σ_i λ_i`;
//! - upper bound: `½ Λ [(1 − ‖V^C‖²) + Σ_{k>R} σ_k(V^C)²]` with `Λ = Σ_i λ_i`,
//!   attained by the leading R singular vector pairs of `V^C`;
//! - gap: `½ (Σ_i λ_i Σ_{k≤R} (σ_k^i)² − Λ Σ_{k≤R} σ_k(V^C)²)`, which equals
//!   upper minus lower.
//!
//! Eigenpairs whose eigenvalue is numerically zero carry no weight and are
//! dropped from every sum.

use log::{debug, warn};

use crate::error::{CpError, Result};
use crate::reduced::{self, ContractionKernel};
use crate::spectra::{self, SvdResult, RANK_EPS};
use crate::tensor::{FactorSet, Mat, Mode, Tensor3};

/// Indices and weights of the eigenpairs that enter the bounds.
fn weighted_pairs(kernel: &ContractionKernel) -> Vec<(usize, f64)> {
    let eigenvalues = kernel.eigenvalues();
    let top = eigenvalues.first().copied().unwrap_or(0.0);
    if top <= 0.0 {
        return Vec::new();
    }
    let threshold = RANK_EPS * top * eigenvalues.len() as f64;
    eigenvalues
        .iter()
        .copied()
        .enumerate()
        .filter(|&(_, l)| l > threshold)
        .collect()
}

fn check_rank(rank: usize) -> Result<()> {
    if rank == 0 {
        return Err(CpError::InfeasibleRank {
            rank,
            reason: "rank must be at least 1".into(),
        });
    }
    Ok(())
}

fn tail_energy(sigma: &[f64], rank: usize) -> f64 {
    sigma.iter().skip(rank).map(|s| s * s).sum()
}

fn head_energy(sigma: &[f64], rank: usize) -> f64 {
    sigma.iter().take(rank).map(|s| s * s).sum()
}

/// Values of all three bounds for one kernel and rank.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: f64,
    pub upper: f64,
    pub gap: f64,
    pub lambda_sum: f64,
    pub centroid_norm: f64,
}

/// `½ Σ_i λ_i Σ_{k>R} (σ_k^i)²`. Zero when `R ≥ min(J, K)` or the tensor is zero.
pub fn lower_bound(kernel: &ContractionKernel, rank: usize) -> Result<f64> {
    check_rank(rank)?;
    if rank >= kernel.dims.0.min(kernel.dims.1) {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (idx, lambda) in weighted_pairs(kernel) {
        let s = spectra::svd(&kernel.slices[idx])?;
        total += lambda * tail_energy(&s.singular_values, rank);
    }
    Ok(0.5 * total)
}

/// Eigenvalue-weighted average of the matricized eigenvectors.
pub fn centroid(kernel: &ContractionKernel) -> Result<Mat> {
    let pairs = weighted_pairs(kernel);
    if pairs.is_empty() {
        return Err(CpError::EmptySpectrum);
    }
    let (j_dim, k_dim) = kernel.dims;
    let mut acc = Mat::zeros(j_dim, k_dim);
    let mut lambda_sum = 0.0;
    for (idx, lambda) in pairs {
        acc += &kernel.slices[idx] * lambda;
        lambda_sum += lambda;
    }
    Ok(acc / lambda_sum)
}

fn lambda_sum(kernel: &ContractionKernel) -> Result<f64> {
    let pairs = weighted_pairs(kernel);
    if pairs.is_empty() {
        return Err(CpError::EmptySpectrum);
    }
    Ok(pairs.iter().map(|(_, l)| l).sum())
}

/// Minimum of the dominating functional, attained by the centroid's leading
/// singular vectors.
pub fn upper_bound(kernel: &ContractionKernel, rank: usize) -> Result<f64> {
    check_rank(rank)?;
    let total = lambda_sum(kernel)?;
    let vc = centroid(kernel)?;
    let s = spectra::svd(&vc)?;
    let norm_sq = vc.norm_squared();
    Ok(0.5 * total * ((1.0 - norm_sq) + tail_energy(&s.singular_values, rank)))
}

/// A-posteriori bound on `|J_red(B_C, C_C) − inf J_red|`.
pub fn gap_bound(kernel: &ContractionKernel, rank: usize) -> Result<f64> {
    check_rank(rank)?;
    let total = lambda_sum(kernel)?;
    let vc = centroid(kernel)?;
    let s = spectra::svd(&vc)?;
    let mut slice_head = 0.0;
    for (idx, lambda) in weighted_pairs(kernel) {
        let si = spectra::svd(&kernel.slices[idx])?;
        slice_head += lambda * head_energy(&si.singular_values, rank);
    }
    Ok(0.5 * (slice_head - total * head_energy(&s.singular_values, rank)))
}

/// All bounds at once, sharing the per-slice SVDs.
pub fn bounds(kernel: &ContractionKernel, rank: usize) -> Result<Bounds> {
    check_rank(rank)?;
    let total = lambda_sum(kernel)?;
    let vc = centroid(kernel)?;
    let s = spectra::svd(&vc)?;
    let small = kernel.dims.0.min(kernel.dims.1);
    let mut lower = 0.0;
    let mut slice_head = 0.0;
    for (idx, lambda) in weighted_pairs(kernel) {
        let si = spectra::svd(&kernel.slices[idx])?;
        if rank < small {
            lower += lambda * tail_energy(&si.singular_values, rank);
        }
        slice_head += lambda * head_energy(&si.singular_values, rank);
    }
    let norm_sq = vc.norm_squared();
    Ok(Bounds {
        lower: 0.5 * lower,
        upper: 0.5 * total * ((1.0 - norm_sq) + tail_energy(&s.singular_values, rank)),
        gap: 0.5 * (slice_head - total * head_energy(&s.singular_values, rank)),
        lambda_sum: total,
        centroid_norm: norm_sq.sqrt(),
    })
}

/// One eliminated-mode candidate of the centroid projection.
#[derive(Debug, Clone)]
pub struct ModeCandidate {
    /// The mode eliminated in closed form.
    pub mode: Mode,
    pub bounds: Bounds,
    pub centroid: Mat,
    pub centroid_svd: SvdResult,
    /// Factors in the original mode order.
    pub factors: FactorSet,
    /// Full objective at `factors`, equal to the reduced functional of this view.
    pub objective: f64,
}

/// Output of [`centroid_init`]: the winning candidate's centroid, bounds and
/// initial factors, plus every evaluated candidate.
#[derive(Debug, Clone)]
pub struct CentroidBundle {
    pub centroid: Mat,
    pub centroid_svd: SvdResult,
    pub lambda_sum: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub gap_bound: f64,
    pub init_factors: FactorSet,
    pub init_objective: f64,
    pub mode_assignment: Mode,
    pub candidates: Vec<ModeCandidate>,
}

impl CentroidBundle {
    /// Largest lower bound over all evaluated modes; every mode bounds the
    /// same infimum.
    pub fn best_lower_bound(&self) -> f64 {
        self.candidates
            .iter()
            .map(|c| c.bounds.lower)
            .fold(self.lower_bound, f64::max)
    }
}

fn mode_candidate(t: &Tensor3, mode: Mode, rank: usize) -> Result<ModeCandidate> {
    let view = t.mode_view(mode);
    let kernel = reduced::build_kernel(&view)?;
    let bounds = bounds(&kernel, rank)?;
    let vc = centroid(&kernel)?;
    let svd = spectra::svd(&vc)?;
    let b = svd.u.columns(0, rank).into_owned();
    let c = svd.v.columns(0, rank).into_owned();
    let a = reduced::solve_a(&view, &b, &c)?;
    let factors = FactorSet::from_mode_view(FactorSet::new(a, b, c)?, mode);
    let objective = reduced::objective(t, &factors)?;
    Ok(ModeCandidate {
        mode,
        bounds,
        centroid: vc,
        centroid_svd: svd,
        factors,
        objective,
    })
}

/// Centroid projection: for each mode whose retained dimensions admit rank
/// `R`, eliminate that mode, take the leading R singular vector pairs of the
/// centroid as the retained factors and solve for the eliminated one. The
/// candidate with the smallest objective wins; ties go to the lower mode.
pub fn centroid_init(t: &Tensor3, rank: usize) -> Result<CentroidBundle> {
    check_rank(rank)?;
    if crate::tensor::frobenius_sq(t) == 0.0 {
        return Err(CpError::EmptySpectrum);
    }
    let dims = t.dims();
    let mut candidates = Vec::new();
    for mode in Mode::ALL {
        let view_dims = t.mode_view(mode).dims();
        if rank > view_dims[1].min(view_dims[2]) {
            debug!("mode {mode} skipped: rank {rank} exceeds retained dims");
            continue;
        }
        candidates.push(mode_candidate(t, mode, rank)?);
    }
    if candidates.is_empty() {
        return Err(CpError::InfeasibleRank {
            rank,
            reason: format!("exceeds the smaller retained dimension for every mode of {dims:?}"),
        });
    }
    let mut best = 0;
    for (idx, cand) in candidates.iter().enumerate().skip(1) {
        if cand.objective < candidates[best].objective {
            best = idx;
        }
    }
    let win = candidates[best].clone();
    Ok(CentroidBundle {
        centroid: win.centroid,
        centroid_svd: win.centroid_svd,
        lambda_sum: win.bounds.lambda_sum,
        lower_bound: win.bounds.lower,
        upper_bound: win.bounds.upper,
        gap_bound: win.bounds.gap,
        init_factors: win.factors,
        init_objective: win.objective,
        mode_assignment: win.mode,
        candidates,
    })
}

/// Symmetric centroid initialization with `B = C`.
#[derive(Debug, Clone)]
pub struct SymmetricInit {
    pub factors: FactorSet,
    /// `‖V^C − (V^C)ᵀ‖_F / ‖V^C‖_F` before symmetrization.
    pub symmetry_defect: f64,
    /// Eigenvalues of the symmetrized centroid used for `B`, by decreasing magnitude.
    pub eigenvalues: Vec<f64>,
}

/// Initial factors for tensors symmetric in the last two modes: `B = C` are
/// the R eigenvectors of `½(V^C + (V^C)ᵀ)` of largest |eigenvalue|.
pub fn centroid_init_symmetric(t: &Tensor3, rank: usize) -> Result<SymmetricInit> {
    check_rank(rank)?;
    let [_, j_dim, k_dim] = t.dims();
    if j_dim != k_dim {
        return Err(CpError::DimensionMismatch(format!(
            "symmetric initialization needs J = K, got {j_dim} and {k_dim}"
        )));
    }
    if rank > j_dim {
        return Err(CpError::InfeasibleRank {
            rank,
            reason: format!("exceeds J = {j_dim}"),
        });
    }
    let kernel = reduced::build_kernel(t)?;
    let vc = centroid(&kernel)?;
    let defect = (&vc - vc.transpose()).norm() / vc.norm();
    if defect > 1e-6 {
        warn!("centroid symmetry defect {defect:e} exceeds 1e-6; symmetrizing");
    }
    let sym = (&vc + vc.transpose()) * 0.5;
    let eig = spectra::sym_eig(&sym)?;
    let mut order: Vec<usize> = (0..j_dim).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[y].abs().total_cmp(&eig.eigenvalues[x].abs()));
    let b = Mat::from_fn(j_dim, rank, |row, r| eig.eigenvectors[(row, order[r])]);
    let c = b.clone();
    let a = reduced::solve_a(t, &b, &c)?;
    Ok(SymmetricInit {
        factors: FactorSet::new(a, b, c)?,
        symmetry_defect: defect,
        eigenvalues: order.iter().take(rank).map(|&i| eig.eigenvalues[i]).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reduced::{build_kernel, jred_direct};
    use crate::tensor::outer3;

    fn diagonal_222() -> Tensor3 {
        let e1 = [1.0, 0.0];
        let e2 = [0.0, 1.0];
        outer3(&e1, &e1, &e1).unwrap().add(&outer3(&e2, &e2, &e2).unwrap()).unwrap()
    }

    fn lcg(rows: usize, cols: usize, seed: u64) -> Mat {
        let mut state = seed ^ 0x5851_F42D_4C95_7F2D;
        Mat::from_fn(rows, cols, |_, _| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
    }

    fn lcg_tensor(dims: [usize; 3], seed: u64) -> Tensor3 {
        let m = lcg(dims[0] * dims[1] * dims[2], 1, seed);
        Tensor3::new(dims, m.as_slice().to_vec()).unwrap()
    }

    #[test]
    fn diagonal_worked_example() {
        let t = diagonal_222();
        let k = build_kernel(&t).unwrap();
        assert!(lower_bound(&k, 1).unwrap().abs() < 1e-10);
        assert!((upper_bound(&k, 1).unwrap() - 0.75).abs() < 1e-10);
        assert!((gap_bound(&k, 1).unwrap() - 0.75).abs() < 1e-10);
        let vc = centroid(&k).unwrap();
        assert!((vc - Mat::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.5])).norm() < 1e-12);

        let bundle = centroid_init(&t, 1).unwrap();
        assert!((bundle.init_objective - 0.5).abs() < 1e-10);
        assert!((bundle.upper_bound - 0.75).abs() < 1e-10);
        assert_eq!(bundle.mode_assignment, Mode::One);
    }

    #[test]
    fn single_slab_lower_bound() {
        // T[0,:,:] = I₂: λ₁ = 2 with V₁ = I/√2, σ₂ = 1/√2
        let t = Tensor3::new([1, 2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let k = build_kernel(&t).unwrap();
        assert!((lower_bound(&k, 1).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn lower_bound_vanishes_at_full_rank() {
        let t = lcg_tensor([3, 3, 4], 1);
        let k = build_kernel(&t).unwrap();
        assert_eq!(lower_bound(&k, 3).unwrap(), 0.0);
        assert_eq!(lower_bound(&k, 5).unwrap(), 0.0);
    }

    #[test]
    fn rank_one_kernel() {
        let t = outer3(&[1.0, -2.0], &[0.6, 0.8], &[1.0, 2.0, 2.0]).unwrap();
        let k = build_kernel(&t).unwrap();
        let vc = centroid(&k).unwrap();
        assert!((&vc - &k.slices[0]).norm() < 1e-12);
        assert!(upper_bound(&k, 1).unwrap().abs() < 1e-12);
        assert!(gap_bound(&k, 1).unwrap().abs() < 1e-12);
        let bundle = centroid_init(&t, 1).unwrap();
        assert!(bundle.init_objective < 1e-12);
    }

    #[test]
    fn zero_tensor_errors() {
        let z = Tensor3::zeros([2, 2, 2]);
        let k = build_kernel(&z).unwrap();
        assert_eq!(centroid(&k), Err(CpError::EmptySpectrum));
        assert!(upper_bound(&k, 1).is_err());
        assert!(gap_bound(&k, 1).is_err());
        assert_eq!(lower_bound(&k, 1).unwrap(), 0.0);
        assert!(matches!(centroid_init(&z, 1), Err(CpError::EmptySpectrum)));
    }

    #[test]
    fn infeasible_rank_errors() {
        let t = lcg_tensor([2, 2, 2], 3);
        assert!(matches!(centroid_init(&t, 3), Err(CpError::InfeasibleRank { .. })));
        assert!(matches!(centroid_init(&t, 0), Err(CpError::InfeasibleRank { .. })));
        // mode 1 is skipped (J = 1) but the other modes remain usable
        let thin = lcg_tensor([3, 1, 3], 4);
        let bundle = centroid_init(&thin, 2).unwrap();
        assert_ne!(bundle.mode_assignment, Mode::One);
    }

    #[test]
    fn sandwich_and_gap_on_random_tensors() {
        for seed in 0..15 {
            let t = lcg_tensor([3, 4, 3], 100 + seed);
            for rank in 1..=2 {
                let bundle = centroid_init(&t, rank).unwrap();
                for cand in &bundle.candidates {
                    let b = &cand.bounds;
                    assert!(b.lower <= cand.objective + 1e-8);
                    assert!(cand.objective <= b.upper + 1e-8);
                    assert!(b.gap >= -1e-10);
                    assert!((b.gap - (b.upper - b.lower)).abs() < 1e-10 * b.upper.max(1.0));
                    assert!(b.centroid_norm <= 1.0 + 1e-12);
                }
                let direct = jred_direct(
                    &t,
                    &bundle.init_factors.b,
                    &bundle.init_factors.c,
                )
                .unwrap();
                if bundle.mode_assignment == Mode::One {
                    assert!((direct - bundle.init_objective).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn separate_bound_functions_match_combined() {
        let t = lcg_tensor([3, 4, 5], 9);
        let k = build_kernel(&t).unwrap();
        let b = bounds(&k, 2).unwrap();
        assert!((b.lower - lower_bound(&k, 2).unwrap()).abs() < 1e-14);
        assert!((b.upper - upper_bound(&k, 2).unwrap()).abs() < 1e-14);
        assert!((b.gap - gap_bound(&k, 2).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn bounds_scale_quadratically() {
        let t = lcg_tensor([3, 3, 4], 11);
        let base = bounds(&build_kernel(&t).unwrap(), 1).unwrap();
        let scaled = bounds(&build_kernel(&t.scaled(3.0)).unwrap(), 1).unwrap();
        assert!((scaled.lower - 9.0 * base.lower).abs() < 1e-10 * scaled.lower.max(1.0));
        assert!((scaled.upper - 9.0 * base.upper).abs() < 1e-10 * scaled.upper.max(1.0));
        assert!((scaled.gap - 9.0 * base.gap).abs() < 1e-10 * scaled.gap.max(1.0));
    }

    #[test]
    fn symmetric_rank_one() {
        let v = [1.0, 2.0, -1.0];
        let t = outer3(&v, &v, &v).unwrap();
        let init = centroid_init_symmetric(&t, 1).unwrap();
        assert_eq!(init.factors.b, init.factors.c);
        let norm = (6.0f64).sqrt();
        for (got, want) in init.factors.b.iter().zip(v) {
            assert!((got.abs() - (want / norm).abs()).abs() < 1e-12);
        }
        assert!(reduced::objective(&t, &init.factors).unwrap() < 1e-12);
    }

    #[test]
    fn symmetric_diagonal_rank_two() {
        let init = centroid_init_symmetric(&diagonal_222(), 2).unwrap();
        assert_eq!(init.factors.b, init.factors.c);
        let abs = init.factors.b.map(f64::abs);
        assert!((abs - Mat::identity(2, 2)).norm() < 1e-12);
        assert!(init.symmetry_defect < 1e-12);
    }

    #[test]
    fn symmetric_requires_square_slices() {
        let t = lcg_tensor([2, 3, 2], 5);
        assert!(matches!(
            centroid_init_symmetric(&t, 1),
            Err(CpError::DimensionMismatch(_))
        ));
    }
}
