//! The reduced functional: the CP least-squares objective with the first
//! factor eliminated by its closed-form minimizer.
//!
//! For fixed `(B, C)` the optimal first factor is
//! `Ã[B,C] = T •₂,₃ (B, C) · G†` with `G = (BᵀB) ∘ (CᵀC)`, and the resulting
//! value `J_red(B, C) = J(Ã[B,C], B, C)` depends on `(B, C)` only through the
//! range of `B ⊙ C`. Three independent evaluations are provided:
//!
//! - [`jred_direct`] forms `Ã` and evaluates the full residual;
//! - [`jred_trace`] uses `½(‖T‖² − Σ_r ⟨u_r, M u_r⟩)` over an orthonormal basis
//!   `u_r` of `range(B ⊙ C)`;
//! - [`jred_spectral`] expands in the eigenpairs of the contraction kernel `M`.

use crate::error::{CpError, Result};
use crate::spectra::{self, EigResult};
use crate::tensor::{self, hadamard, khatri_rao, FactorSet, Mat, Mode, Tensor3};

/// `G = (B⊙C)ᵀ(B⊙C) = (BᵀB) ∘ (CᵀC)` and its pseudo-inverse.
///
/// The pseudo-inverse is assembled from the thin SVD of `B⊙C` as
/// `V·Σ⁻²·Vᵀ` over the numerical rank of `B⊙C`, so rank decisions are made on
/// `σ(B⊙C)` rather than on the squared spectrum of `G`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gramian {
    pub matrix: Mat,
    pub pseudo_inverse: Mat,
    /// Rank retained by the pseudo-inverse.
    pub rank: usize,
    pub sigma_min: f64,
    pub sigma_max: f64,
}

impl Gramian {
    pub fn monitor(&self) -> KrRank {
        KrRank {
            rank: self.rank,
            sigma_min: self.sigma_min,
            sigma_max: self.sigma_max,
        }
    }
}

pub fn gramian(b: &Mat, c: &Mat) -> Result<Gramian> {
    if b.ncols() != c.ncols() {
        return Err(CpError::DimensionMismatch(format!(
            "gramian column counts {} and {}",
            b.ncols(),
            c.ncols()
        )));
    }
    let matrix = hadamard(&(b.transpose() * b), &(c.transpose() * c))?;
    let s = spectra::svd(&khatri_rao(b, c)?)?;
    let rank = s.rank();
    let r_dim = b.ncols();
    let mut pseudo_inverse = Mat::zeros(r_dim, r_dim);
    for idx in 0..rank {
        let v = s.v.column(idx);
        let sigma = s.singular_values[idx];
        pseudo_inverse += (v * v.transpose()) / (sigma * sigma);
    }
    Ok(Gramian {
        matrix,
        pseudo_inverse,
        rank,
        sigma_min: s.sigma_min(),
        sigma_max: s.sigma_max(),
    })
}

/// Least-squares optimal first factor `T •₂,₃ (B, C) · G†`.
pub fn solve_a(t: &Tensor3, b: &Mat, c: &Mat) -> Result<Mat> {
    let g = gramian(b, c)?;
    Ok(tensor::tucker_23(t, b, c)? * g.pseudo_inverse)
}

/// `½ Σ (T_ijk − Σ_r a_ir b_jr c_kr)²`.
pub fn objective(t: &Tensor3, factors: &FactorSet) -> Result<f64> {
    factors.check_tensor(t)?;
    let model = Tensor3::from_factors(factors);
    let residual: f64 = t
        .data()
        .iter()
        .zip(model.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(0.5 * residual)
}

/// The fourth-order contraction `M_{αβγδ} = Σ_i T_iαβ T_iγδ`, stored as its
/// symmetric JK×JK matricization with row index `α + J·β`.
#[derive(Debug, Clone)]
pub struct ContractionKernel {
    pub matrix: Mat,
    pub eig: EigResult,
    /// `(J, K)`.
    pub dims: (usize, usize),
    /// Eigenvectors reshaped to J×K, unit Frobenius norm.
    pub slices: Vec<Mat>,
    /// `‖T‖_F²`.
    pub norm_sq: f64,
}

impl ContractionKernel {
    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eig.eigenvalues
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eig.eigenvalues.last().copied().unwrap_or(0.0)
    }

    fn check_factors(&self, b: &Mat, c: &Mat) -> Result<()> {
        if b.nrows() != self.dims.0 || c.nrows() != self.dims.1 || b.ncols() != c.ncols() {
            return Err(CpError::DimensionMismatch(format!(
                "kernel for {}x{} slices, got B {:?} and C {:?}",
                self.dims.0,
                self.dims.1,
                b.shape(),
                c.shape()
            )));
        }
        Ok(())
    }
}

pub fn build_kernel(t: &Tensor3) -> Result<ContractionKernel> {
    let [_, j_dim, k_dim] = t.dims();
    let unfolded = tensor::unfold(t, Mode::One);
    let matrix = &unfolded * unfolded.transpose();
    let eig = spectra::sym_eig(&matrix)?;
    let slices = eig
        .eigenvectors
        .column_iter()
        .map(|v| tensor::matricize(v.as_slice(), j_dim, k_dim))
        .collect();
    Ok(ContractionKernel {
        matrix,
        eig,
        dims: (j_dim, k_dim),
        slices,
        norm_sq: tensor::frobenius_sq(t),
    })
}

/// Rank monitor for a Khatri-Rao matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrRank {
    pub rank: usize,
    pub sigma_min: f64,
    pub sigma_max: f64,
}

impl KrRank {
    /// `σ_min < ratio·σ_max`, the approach-to-degeneracy signal.
    pub fn is_degenerate(&self, ratio: f64) -> bool {
        self.sigma_min < ratio * self.sigma_max
    }
}

pub fn kr_rank(b: &Mat, c: &Mat) -> Result<KrRank> {
    let kr = khatri_rao(b, c)?;
    let s = spectra::svd(&kr)?;
    Ok(KrRank {
        rank: s.rank(),
        sigma_min: s.sigma_min(),
        sigma_max: s.sigma_max(),
    })
}

fn kr_basis(b: &Mat, c: &Mat) -> Result<Mat> {
    spectra::orthonormal_range(&khatri_rao(b, c)?)
}

/// `J(Ã[B,C], B, C)`, evaluated from the full residual.
pub fn jred_direct(t: &Tensor3, b: &Mat, c: &Mat) -> Result<f64> {
    let a = solve_a(t, b, c)?;
    objective(t, &FactorSet::new(a, b.clone(), c.clone())?)
}

/// `½(‖T‖² − Σ_{r ≤ R̄} ⟨u_r, M u_r⟩)` with `u_r` an orthonormal basis of
/// `range(B ⊙ C)` and `R̄` its numerical rank.
pub fn jred_trace(kernel: &ContractionKernel, b: &Mat, c: &Mat) -> Result<f64> {
    kernel.check_factors(b, c)?;
    let u = kr_basis(b, c)?;
    let captured = rayleigh_unchecked(kernel, &u);
    Ok((0.5 * (kernel.norm_sq - captured)).max(0.0))
}

/// The two spectral forms of the reduced functional.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralJred {
    /// `½ Σ_i λ_i (1 − Σ_r ⟨v_i, u_r⟩²)`.
    pub weighted_overlap: f64,
    /// `½ Σ_i λ_i ‖V_i − P V_i‖_F²` with `P` the projector onto the Khatri-Rao range.
    pub subspace_distance: f64,
}

impl SpectralJred {
    pub fn value(&self) -> f64 {
        self.weighted_overlap
    }
}

pub fn jred_spectral(kernel: &ContractionKernel, b: &Mat, c: &Mat) -> Result<SpectralJred> {
    kernel.check_factors(b, c)?;
    let u = kr_basis(b, c)?;
    let projector = &u * u.transpose();
    let mut overlap = 0.0;
    let mut distance = 0.0;
    for (lambda, v) in kernel.eig.eigenvalues.iter().zip(kernel.eig.eigenvectors.column_iter()) {
        let coeffs = u.transpose() * v;
        overlap += lambda * (1.0 - coeffs.norm_squared());
        let residual = v - &projector * v;
        distance += lambda * residual.norm_squared();
    }
    Ok(SpectralJred {
        weighted_overlap: (0.5 * overlap).max(0.0),
        subspace_distance: (0.5 * distance).max(0.0),
    })
}

fn rayleigh_unchecked(kernel: &ContractionKernel, u: &Mat) -> f64 {
    let mu = &kernel.matrix * u;
    u.iter().zip(mu.iter()).map(|(x, y)| x * y).sum()
}

/// `Σ_r ⟨u_r, M u_r⟩` for orthonormal columns `u_r`; invariant under `U ↦ U·Q`
/// for orthogonal `Q`.
pub fn rayleigh_value(kernel: &ContractionKernel, u: &Mat) -> Result<f64> {
    let jk = kernel.dims.0 * kernel.dims.1;
    if u.nrows() != jk {
        return Err(CpError::DimensionMismatch(format!(
            "basis with {} rows for a {jk}-dimensional kernel",
            u.nrows()
        )));
    }
    let defect = (u.transpose() * u - Mat::identity(u.ncols(), u.ncols())).norm();
    if defect > 1e-8 {
        return Err(CpError::NotOrthonormal(defect));
    }
    Ok(rayleigh_unchecked(kernel, u))
}

/// `(B⊙C)·G†·(B⊙C)ᵀ`, the projector onto the Khatri-Rao range written through
/// the Gramian.
pub fn gram_projector(b: &Mat, c: &Mat) -> Result<Mat> {
    let kr = khatri_rao(b, c)?;
    let g = gramian(b, c)?;
    Ok(&kr * g.pseudo_inverse * kr.transpose())
}
