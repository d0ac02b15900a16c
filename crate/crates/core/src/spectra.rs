//! Dense symmetric eigendecomposition, SVD, pseudo-inverse and numerical rank.
//!
//! The symmetric eigensolver is nalgebra's; the SVD is a one-sided Jacobi
//! iteration, which stays accurate for rank-deficient inputs. Both results are
//! post-processed into a canonical form: values sorted nonincreasing (stable
//! in the original order) and every vector scaled so its largest-magnitude
//! entry is positive, ties going to the lowest index. For SVD the sign is fixed on the left vector and
//! the right vector follows it.

use crate::error::{CpError, Result};
use crate::tensor::Mat;

/// Machine epsilon used for rank decisions.
pub const RANK_EPS: f64 = 2.2e-16;

/// Thin singular value decomposition `A = U·diag(σ)·Vᵀ` with `p = min(m, n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdResult {
    /// m×p, orthonormal columns.
    pub u: Mat,
    /// Nonincreasing, nonnegative.
    pub singular_values: Vec<f64>,
    /// n×p, orthonormal columns.
    pub v: Mat,
}

impl SvdResult {
    pub fn rank(&self) -> usize {
        numerical_rank(&self.singular_values, self.u.nrows(), self.v.nrows())
    }

    pub fn reconstruct(&self) -> Mat {
        let mut us = self.u.clone();
        for (mut col, s) in us.column_iter_mut().zip(&self.singular_values) {
            col *= *s;
        }
        us * self.v.transpose()
    }

    /// Orthonormal basis of the numerical range (first `rank` left vectors).
    pub fn range_basis(&self) -> Mat {
        self.u.columns(0, self.rank()).into_owned()
    }

    pub fn sigma_max(&self) -> f64 {
        self.singular_values.first().copied().unwrap_or(0.0)
    }

    pub fn sigma_min(&self) -> f64 {
        self.singular_values.last().copied().unwrap_or(0.0)
    }
}

/// Eigenpairs of a symmetric matrix, eigenvalues nonincreasing.
#[derive(Debug, Clone, PartialEq)]
pub struct EigResult {
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors stored as columns.
    pub eigenvectors: Mat,
}

fn check_finite(m: &Mat, what: &'static str) -> Result<()> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(CpError::NonFinite(what));
    }
    Ok(())
}

/// Flips `v` so its largest-magnitude entry is positive. Returns the sign applied.
fn canonical_sign(v: &[f64]) -> f64 {
    let mut best = 0usize;
    let mut best_abs = -1.0;
    for (idx, x) in v.iter().enumerate() {
        if x.abs() > best_abs {
            best_abs = x.abs();
            best = idx;
        }
    }
    if v.is_empty() || v[best] >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Permutation sorting `values` nonincreasing, stable.
fn descending_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&x, &y| values[y].total_cmp(&values[x]));
    order
}

/// Eigendecomposition of a symmetric matrix. The input is symmetrized as
/// `(M + Mᵀ)/2` before factorization.
pub fn sym_eig(m: &Mat) -> Result<EigResult> {
    if !m.is_square() {
        return Err(CpError::DimensionMismatch(format!(
            "sym_eig of non-square {:?}",
            m.shape()
        )));
    }
    check_finite(m, "symmetric eigenproblem input")?;
    let n = m.nrows();
    if n == 0 {
        return Ok(EigResult {
            eigenvalues: vec![],
            eigenvectors: Mat::zeros(0, 0),
        });
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let raw: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let order = descending_order(&raw);
    let mut vectors = Mat::zeros(n, n);
    let mut eigenvalues = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        let col = eig.eigenvectors.column(src);
        let sign = canonical_sign(col.as_slice());
        vectors.set_column(dst, &(col * sign));
        eigenvalues.push(raw[src]);
    }
    Ok(EigResult {
        eigenvalues,
        eigenvectors: vectors,
    })
}

/// Thin SVD with deterministic ordering and signs.
pub fn svd(a: &Mat) -> Result<SvdResult> {
    check_finite(a, "svd input")?;
    let (m, n) = a.shape();
    if m.min(n) == 0 {
        return Ok(SvdResult {
            u: Mat::zeros(m, 0),
            singular_values: vec![],
            v: Mat::zeros(n, 0),
        });
    }
    let (u_raw, raw, v_raw) = if m >= n {
        one_sided_jacobi(a)
    } else {
        let (v, s, u) = one_sided_jacobi(&a.transpose());
        (u, s, v)
    };
    let p = raw.len();
    let order = descending_order(&raw);
    let mut u = Mat::zeros(m, p);
    let mut v = Mat::zeros(n, p);
    let mut singular_values = Vec::with_capacity(p);
    for (dst, &src) in order.iter().enumerate() {
        let ucol = u_raw.column(src);
        let sign = canonical_sign(ucol.as_slice());
        u.set_column(dst, &(ucol * sign));
        v.set_column(dst, &(v_raw.column(src) * sign));
        singular_values.push(raw[src]);
    }
    Ok(SvdResult {
        u,
        singular_values,
        v,
    })
}

const JACOBI_MAX_SWEEPS: usize = 80;

/// Hestenes one-sided Jacobi for a tall matrix (m ≥ n). Returns unsorted
/// `(U, σ, V)` with U m×n. Left vectors of zero singular values are completed
/// to an orthonormal set.
fn one_sided_jacobi(a: &Mat) -> (Mat, Vec<f64>, Mat) {
    let (m, n) = a.shape();
    let mut w = a.clone();
    let mut v = Mat::identity(n, n);
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let (alpha, beta, gamma) = {
                    let (cp, cq) = (w.column(p), w.column(q));
                    (cp.norm_squared(), cq.norm_squared(), cp.dot(&cq))
                };
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_columns(&mut w, p, q, c, s);
                rotate_columns(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
    let sigma: Vec<f64> = w.column_iter().map(|col| col.norm()).collect();
    let top = sigma.iter().copied().fold(0.0, f64::max);
    let mut u = Mat::zeros(m, n);
    let mut missing = Vec::new();
    for (j, &s) in sigma.iter().enumerate() {
        if s > 0.0 && s > top * f64::MIN_POSITIVE.sqrt() {
            u.set_column(j, &(w.column(j) / s));
        } else {
            missing.push(j);
        }
    }
    complete_orthonormal(&mut u, &missing);
    (u, sigma, v)
}

fn rotate_columns(m: &mut Mat, p: usize, q: usize, c: f64, s: f64) {
    for row in 0..m.nrows() {
        let (x, y) = (m[(row, p)], m[(row, q)]);
        m[(row, p)] = c * x - s * y;
        m[(row, q)] = s * x + c * y;
    }
}

/// Fills the listed columns with unit vectors orthogonal to every other
/// column, trying standard basis vectors in order.
fn complete_orthonormal(u: &mut Mat, missing: &[usize]) {
    let m = u.nrows();
    let mut filled: Vec<usize> = (0..u.ncols()).filter(|j| !missing.contains(j)).collect();
    let mut candidate = 0;
    for &j in missing {
        while candidate < m {
            let mut e = nalgebra::DVector::zeros(m);
            e[candidate] = 1.0;
            candidate += 1;
            for _ in 0..2 {
                for &k in &filled {
                    let proj = u.column(k).dot(&e);
                    e -= u.column(k) * proj;
                }
            }
            let norm = e.norm();
            if norm > 1e-8 {
                u.set_column(j, &(e / norm));
                filled.push(j);
                break;
            }
        }
    }
}

/// Count of `σ_k > ε·σ_1·max(m, n)`; zero for a zero matrix.
pub fn numerical_rank(sigma: &[f64], m: usize, n: usize) -> usize {
    let Some(&top) = sigma.first() else {
        return 0;
    };
    if top <= 0.0 {
        return 0;
    }
    let threshold = RANK_EPS * top * m.max(n) as f64;
    sigma.iter().filter(|&&s| s > threshold).count()
}

/// Moore-Penrose pseudo-inverse of a symmetric positive semidefinite matrix.
/// Eigenvalues at or below the numerical-rank threshold are treated as zero.
pub fn pinv_gram(g: &Mat) -> Result<Mat> {
    Ok(pinv_gram_ranked(g)?.0)
}

/// [`pinv_gram`] that also reports the retained rank.
pub fn pinv_gram_ranked(g: &Mat) -> Result<(Mat, usize)> {
    let eig = sym_eig(g)?;
    let n = g.nrows();
    let magnitudes: Vec<f64> = eig.eigenvalues.iter().map(|l| l.max(0.0)).collect();
    let rank = numerical_rank(&magnitudes, n, n);
    let mut out = Mat::zeros(n, n);
    for idx in 0..rank {
        let v = eig.eigenvectors.column(idx);
        out += (v * v.transpose()) / magnitudes[idx];
    }
    Ok((out, rank))
}

/// Orthonormal basis of the numerical range of `a`.
pub fn orthonormal_range(a: &Mat) -> Result<Mat> {
    Ok(svd(a)?.range_basis())
}

/// Orthogonal projector onto the numerical range of `a`.
pub fn range_projector(a: &Mat) -> Result<Mat> {
    let q = orthonormal_range(a)?;
    Ok(&q * q.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lcg_matrix(rows: usize, cols: usize, seed: u64) -> Mat {
        let mut state = seed ^ 0x9E37_79B9_7F4A_7C15;
        Mat::from_fn(rows, cols, |_, _| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
    }

    fn orthonormality_defect(q: &Mat) -> f64 {
        (q.transpose() * q - Mat::identity(q.ncols(), q.ncols())).norm()
    }

    #[test]
    fn eig_identity_and_diagonal() {
        let e = sym_eig(&Mat::identity(3, 3)).unwrap();
        assert_eq!(e.eigenvalues, vec![1.0, 1.0, 1.0]);
        let d = Mat::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 1.0, 2.0]));
        let e = sym_eig(&d).unwrap();
        for (got, want) in e.eigenvalues.iter().zip([3.0, 2.0, 1.0]) {
            assert!((got - want).abs() < 1e-14);
        }
        assert!((e.eigenvectors.column(0)[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn eig_random_symmetric_reconstructs() {
        let x = lcg_matrix(6, 6, 5);
        let m = &x + x.transpose();
        let e = sym_eig(&m).unwrap();
        let s = Mat::from_diagonal(&nalgebra::DVector::from_vec(e.eigenvalues.clone()));
        let rec = &e.eigenvectors * s * e.eigenvectors.transpose();
        assert!((rec - &m).norm() < 1e-9);
        assert!(orthonormality_defect(&e.eigenvectors) < 1e-10);
        for idx in 0..6 {
            let v = e.eigenvectors.column(idx);
            let residual = (&m * v - v * e.eigenvalues[idx]).norm();
            assert!(residual <= 1e-9 * m.norm().max(1.0));
        }
        assert!(e.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn eig_rejects_non_finite() {
        let mut m = Mat::identity(2, 2);
        m[(0, 1)] = f64::INFINITY;
        assert!(matches!(sym_eig(&m), Err(CpError::NonFinite(_))));
    }

    #[test]
    fn eig_sign_convention() {
        let m = Mat::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0]);
        let e = sym_eig(&m).unwrap();
        for col in e.eigenvectors.column_iter() {
            let (idx, _) = col
                .iter()
                .enumerate()
                .fold((0, -1.0), |acc, (i, v)| if v.abs() > acc.1 { (i, v.abs()) } else { acc });
            assert!(col[idx] > 0.0);
        }
    }

    #[test]
    fn svd_examples() {
        let z = svd(&Mat::zeros(3, 2)).unwrap();
        assert_eq!(z.singular_values, vec![0.0, 0.0]);
        assert_eq!(z.rank(), 0);

        let d = Mat::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        let s = svd(&d).unwrap();
        assert_eq!(s.singular_values, vec![2.0, 1.0]);

        let a = lcg_matrix(5, 3, 9);
        let s = svd(&a).unwrap();
        assert!((s.reconstruct() - &a).norm() < 1e-10);
        assert!(orthonormality_defect(&s.u) < 1e-10);
        assert!(orthonormality_defect(&s.v) < 1e-10);
    }

    #[test]
    fn svd_wide_matrix() {
        let a = lcg_matrix(2, 5, 3);
        let s = svd(&a).unwrap();
        assert_eq!(s.u.shape(), (2, 2));
        assert_eq!(s.v.shape(), (5, 2));
        assert!((s.reconstruct() - &a).norm() < 1e-10);
    }

    #[test]
    fn svd_is_deterministic() {
        let a = lcg_matrix(7, 4, 17);
        assert_eq!(svd(&a).unwrap(), svd(&a).unwrap());
        let m = &a * a.transpose();
        assert_eq!(sym_eig(&m).unwrap(), sym_eig(&m).unwrap());
    }

    #[test]
    fn pinv_examples() {
        assert_eq!(pinv_gram(&Mat::identity(3, 3)).unwrap(), Mat::identity(3, 3));
        let d = Mat::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 0.0]);
        let p = pinv_gram(&d).unwrap();
        assert!((p - Mat::from_row_slice(2, 2, &[0.25, 0.0, 0.0, 0.0])).norm() < 1e-15);
    }

    #[test]
    fn pinv_moore_penrose_on_rank_deficient_gram() {
        let mut b = lcg_matrix(4, 3, 1);
        let c = lcg_matrix(5, 3, 2);
        let dup = b.column(0).into_owned();
        b.set_column(2, &dup);
        let mut c2 = c.clone();
        c2.set_column(2, &c.column(0).into_owned());
        let kr = crate::tensor::khatri_rao(&b, &c2).unwrap();
        let g = kr.transpose() * &kr;
        let (p, rank) = pinv_gram_ranked(&g).unwrap();
        assert_eq!(rank, 2);
        let scale = g.norm();
        assert!((&g * &p * &g - &g).norm() <= 1e-8 * scale);
        assert!((&p * &g * &p - &p).norm() <= 1e-8 * p.norm());
    }

    #[test]
    fn numerical_rank_examples() {
        assert_eq!(numerical_rank(&[1.0, 1e-20], 2, 2), 1);
        assert_eq!(numerical_rank(&[0.0, 0.0], 2, 2), 0);
        assert_eq!(numerical_rank(&[], 0, 0), 0);
        let x = lcg_matrix(5, 2, 4);
        let y = lcg_matrix(2, 5, 6);
        let s = svd(&(x * y)).unwrap();
        assert_eq!(numerical_rank(&s.singular_values, 5, 5), 2);
    }

    #[test]
    fn svd_rank_deficient_khatri_rao() {
        let mut b = lcg_matrix(5, 3, 8);
        let mut c = lcg_matrix(6, 3, 9);
        b.set_column(2, &b.column(0).into_owned());
        c.set_column(2, &c.column(0).into_owned());
        let kr = crate::tensor::khatri_rao(&b, &c).unwrap();
        let s = svd(&kr).unwrap();
        assert_eq!(s.rank(), 2);
        assert!((s.reconstruct() - &kr).norm() < 1e-12);
        assert!(orthonormality_defect(&s.u) < 1e-12);
    }

    proptest! {
        #[test]
        fn svd_rank_deficient_products(rows in 1usize..8, cols in 1usize..8, inner in 1usize..4, seed in any::<u64>()) {
            let a = lcg_matrix(rows, inner, seed) * lcg_matrix(inner, cols, seed ^ 1);
            let s = svd(&a).unwrap();
            prop_assert!((s.reconstruct() - &a).norm() <= 1e-10 * a.norm().max(1.0));
            prop_assert!(orthonormality_defect(&s.u) < 1e-10);
            prop_assert!(orthonormality_defect(&s.v) < 1e-10);
            prop_assert!(s.rank() <= inner);
        }

        #[test]
        fn sym_eig_reconstructs_low_rank(n in 1usize..9, inner in 1usize..4, seed in any::<u64>()) {
            let x = lcg_matrix(n, inner, seed);
            let m = &x * x.transpose();
            let e = sym_eig(&m).unwrap();
            let s = Mat::from_diagonal(&nalgebra::DVector::from_vec(e.eigenvalues.clone()));
            let rec = &e.eigenvectors * s * e.eigenvectors.transpose();
            prop_assert!((rec - &m).norm() <= 1e-9 * m.norm().max(1.0));
            prop_assert!(orthonormality_defect(&e.eigenvectors) < 1e-10);
        }

        #[test]
        fn svd_reconstructs_any_shape(rows in 1usize..7, cols in 1usize..7, seed in any::<u64>()) {
            let a = lcg_matrix(rows, cols, seed);
            let s = svd(&a).unwrap();
            prop_assert!((s.reconstruct() - &a).norm() <= 1e-10 * a.norm().max(1.0));
            prop_assert!(s.singular_values.windows(2).all(|w| w[0] >= w[1]));
            prop_assert!(orthonormality_defect(&s.u) < 1e-10);
        }

        #[test]
        fn gram_eigenvalues_nonnegative(rows in 1usize..8, cols in 1usize..8, seed in any::<u64>()) {
            let x = lcg_matrix(rows, cols, seed);
            let m = &x * x.transpose();
            let e = sym_eig(&m).unwrap();
            let floor = -1e-9 * m.norm().max(1.0);
            prop_assert!(e.eigenvalues.iter().all(|&l| l >= floor));
        }
    }
}
