//! Dense third-order tensors, factor matrices and the multilinear products
//! built on them.
//!
//! Index conventions used throughout the crate:
//!
//! - A [`Tensor3`] of size `I×J×K` stores entry `(i, j, k)` at offset
//!   `i + I·(j + J·k)`, first index fastest.
//! - Vectorizing a `J×K` matrix places entry `(j, k)` at `j + J·k`. Every
//!   Khatri-Rao column and every unfolding row index follows this rule, so
//!   `khatri_rao(B, C)` column `r` is `vec(b_r ∘ c_r)`.

use nalgebra::DMatrix;

use crate::error::{CpError, Result};

/// Dense real matrix in column-major storage.
pub type Mat = DMatrix<f64>;

/// Tensor mode, numbered 1 to 3 as in `I×J×K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    One,
    Two,
    Three,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::One, Mode::Two, Mode::Three];

    /// Zero-based axis index.
    pub fn axis(self) -> usize {
        match self {
            Mode::One => 0,
            Mode::Two => 1,
            Mode::Three => 2,
        }
    }

    pub fn number(self) -> usize {
        self.axis() + 1
    }
}

impl TryFrom<usize> for Mode {
    type Error = CpError;

    fn try_from(value: usize) -> Result<Self> {
        match value {
            1 => Ok(Mode::One),
            2 => Ok(Mode::Two),
            3 => Ok(Mode::Three),
            other => Err(CpError::InvalidMode(other)),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.number())
    }
}

/// Dense `I×J×K` real tensor, first index fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    dims: [usize; 3],
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn new(dims: [usize; 3], data: Vec<f64>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(CpError::DimensionMismatch(format!(
                "tensor dims must be positive, got {dims:?}"
            )));
        }
        let count = dims[0] * dims[1] * dims[2];
        if data.len() != count {
            return Err(CpError::DimensionMismatch(format!(
                "{} values for a {}x{}x{} tensor",
                data.len(),
                dims[0],
                dims[1],
                dims[2]
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(CpError::NonFinite("tensor"));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: [usize; 3]) -> Self {
        assert!(dims.iter().all(|&d| d > 0), "tensor dims must be positive");
        Self {
            dims,
            data: vec![0.0; dims[0] * dims[1] * dims[2]],
        }
    }

    /// Builds a tensor from `f(i, j, k)`.
    pub fn from_fn(dims: [usize; 3], mut f: impl FnMut(usize, usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    data.push(f(i, j, k));
                }
            }
        }
        Self::new(dims, data)
    }

    /// Assembles `Σ_r a_r ∘ b_r ∘ c_r`.
    pub fn from_factors(factors: &FactorSet) -> Self {
        let [i_dim, j_dim, k_dim] = factors.dims();
        let mut data = vec![0.0; i_dim * j_dim * k_dim];
        for r in 0..factors.rank() {
            let (a, b, c) = (factors.a.column(r), factors.b.column(r), factors.c.column(r));
            for k in 0..k_dim {
                for j in 0..j_dim {
                    let bc = b[j] * c[k];
                    let base = i_dim * (j + j_dim * k);
                    for i in 0..i_dim {
                        data[base + i] += a[i] * bc;
                    }
                }
            }
        }
        Self {
            dims: [i_dim, j_dim, k_dim],
            data,
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    /// Raw values in storage order.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn offset(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.offset(i, j, k)]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            dims: self.dims,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn sub(&self, other: &Tensor3) -> Result<Self> {
        self.check_same_dims(other)?;
        Ok(Self {
            dims: self.dims,
            data: self.data.iter().zip(&other.data).map(|(x, y)| x - y).collect(),
        })
    }

    pub fn add(&self, other: &Tensor3) -> Result<Self> {
        self.check_same_dims(other)?;
        Ok(Self {
            dims: self.dims,
            data: self.data.iter().zip(&other.data).map(|(x, y)| x + y).collect(),
        })
    }

    /// Cyclic reindexing `T'[j, k, i] = T[i, j, k]`, so the second mode of
    /// `self` becomes the first mode of the result.
    pub fn rotate_modes(&self) -> Self {
        let [i_dim, j_dim, k_dim] = self.dims;
        let mut data = Vec::with_capacity(self.data.len());
        for i in 0..i_dim {
            for k in 0..k_dim {
                for j in 0..j_dim {
                    data.push(self.get(i, j, k));
                }
            }
        }
        Self {
            dims: [j_dim, k_dim, i_dim],
            data,
        }
    }

    /// View with `mode` moved to the front by cyclic reindexing.
    pub fn mode_view(&self, mode: Mode) -> Self {
        match mode {
            Mode::One => self.clone(),
            Mode::Two => self.rotate_modes(),
            Mode::Three => self.rotate_modes().rotate_modes(),
        }
    }

    /// Max deviation from full symmetry `t_ijk = t_jki = t_kij = t_ikj`.
    pub fn symmetry_defect(&self) -> Option<f64> {
        let [n, j_dim, k_dim] = self.dims;
        if n != j_dim || n != k_dim {
            return None;
        }
        let mut defect: f64 = 0.0;
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    let v = self.get(i, j, k);
                    for w in [self.get(j, k, i), self.get(k, i, j), self.get(i, k, j)] {
                        defect = defect.max((v - w).abs());
                    }
                }
            }
        }
        Some(defect)
    }

    fn check_same_dims(&self, other: &Tensor3) -> Result<()> {
        if self.dims != other.dims {
            return Err(CpError::DimensionMismatch(format!(
                "{:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        Ok(())
    }
}

/// Factor matrices `A` (I×R), `B` (J×R) and `C` (K×R) of a CP model.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorSet {
    pub a: Mat,
    pub b: Mat,
    pub c: Mat,
}

impl FactorSet {
    pub fn new(a: Mat, b: Mat, c: Mat) -> Result<Self> {
        let rank = a.ncols();
        if rank == 0 {
            return Err(CpError::DimensionMismatch("rank must be at least 1".into()));
        }
        if b.ncols() != rank || c.ncols() != rank {
            return Err(CpError::DimensionMismatch(format!(
                "factor column counts {}, {}, {}",
                a.ncols(),
                b.ncols(),
                c.ncols()
            )));
        }
        if [&a, &b, &c].iter().any(|m| m.nrows() == 0) {
            return Err(CpError::DimensionMismatch("factor with zero rows".into()));
        }
        if [&a, &b, &c].iter().any(|m| m.iter().any(|v| !v.is_finite())) {
            return Err(CpError::NonFinite("factor matrix"));
        }
        Ok(Self { a, b, c })
    }

    pub fn rank(&self) -> usize {
        self.a.ncols()
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.a.nrows(), self.b.nrows(), self.c.nrows()]
    }

    pub fn factor(&self, mode: Mode) -> &Mat {
        match mode {
            Mode::One => &self.a,
            Mode::Two => &self.b,
            Mode::Three => &self.c,
        }
    }

    pub fn factor_mut(&mut self, mode: Mode) -> &mut Mat {
        match mode {
            Mode::One => &mut self.a,
            Mode::Two => &mut self.b,
            Mode::Three => &mut self.c,
        }
    }

    /// Factors reordered to match [`Tensor3::mode_view`] for the same mode.
    pub fn mode_view(&self, mode: Mode) -> Self {
        let (a, b, c) = (self.a.clone(), self.b.clone(), self.c.clone());
        match mode {
            Mode::One => Self { a, b, c },
            Mode::Two => Self { a: b, b: c, c: a },
            Mode::Three => Self { a: c, b: a, c: b },
        }
    }

    /// Inverse of [`FactorSet::mode_view`].
    pub fn from_mode_view(view: Self, mode: Mode) -> Self {
        let FactorSet { a, b, c } = view;
        match mode {
            Mode::One => Self { a, b, c },
            Mode::Two => Self { a: c, b: a, c: b },
            Mode::Three => Self { a: b, b: c, c: a },
        }
    }

    /// Khatri-Rao matrix of the two factors other than `mode`, in the cyclic
    /// order used by [`unfold`]: `B⊙C`, `C⊙A`, `A⊙B`.
    pub fn khatri_rao_excluding(&self, mode: Mode) -> Mat {
        let (x, y) = self.others(mode);
        khatri_rao(x, y).expect("factor set has consistent ranks")
    }

    /// The two factors other than `mode`, in cyclic order.
    pub fn others(&self, mode: Mode) -> (&Mat, &Mat) {
        match mode {
            Mode::One => (&self.b, &self.c),
            Mode::Two => (&self.c, &self.a),
            Mode::Three => (&self.a, &self.b),
        }
    }

    pub fn check_tensor(&self, t: &Tensor3) -> Result<()> {
        if self.dims() != t.dims() {
            return Err(CpError::DimensionMismatch(format!(
                "factors sized {:?} for tensor {:?}",
                self.dims(),
                t.dims()
            )));
        }
        Ok(())
    }

    /// `self + s·(other − self)` applied to every factor.
    pub fn extrapolate(&self, other: &FactorSet, s: f64) -> FactorSet {
        let step = |x: &Mat, y: &Mat| x + (y - x) * s;
        FactorSet {
            a: step(&self.a, &other.a),
            b: step(&self.b, &other.b),
            c: step(&self.c, &other.c),
        }
    }
}

/// Outer product `a ∘ b ∘ c`.
pub fn outer3(a: &[f64], b: &[f64], c: &[f64]) -> Result<Tensor3> {
    if a.is_empty() || b.is_empty() || c.is_empty() {
        return Err(CpError::DimensionMismatch("outer product of an empty vector".into()));
    }
    Tensor3::from_fn([a.len(), b.len(), c.len()], |i, j, k| a[i] * b[j] * c[k])
}

/// Column-wise Kronecker product `B ⊙ C` (JK×R), row `j + J·k`.
pub fn khatri_rao(b: &Mat, c: &Mat) -> Result<Mat> {
    if b.ncols() != c.ncols() {
        return Err(CpError::DimensionMismatch(format!(
            "khatri_rao column counts {} and {}",
            b.ncols(),
            c.ncols()
        )));
    }
    let (j_dim, k_dim) = (b.nrows(), c.nrows());
    Ok(Mat::from_fn(j_dim * k_dim, b.ncols(), |row, r| {
        b[(row % j_dim, r)] * c[(row / j_dim, r)]
    }))
}

/// Elementwise product of equally sized matrices.
pub fn hadamard(x: &Mat, y: &Mat) -> Result<Mat> {
    if x.shape() != y.shape() {
        return Err(CpError::DimensionMismatch(format!(
            "hadamard of {:?} and {:?}",
            x.shape(),
            y.shape()
        )));
    }
    Ok(x.component_mul(y))
}

/// `result[i, r] = Σ_{j,k} T[i,j,k]·B[j,r]·C[k,r]`.
pub fn tucker_23(t: &Tensor3, b: &Mat, c: &Mat) -> Result<Mat> {
    let [i_dim, j_dim, k_dim] = t.dims();
    if b.nrows() != j_dim || c.nrows() != k_dim || b.ncols() != c.ncols() {
        return Err(CpError::DimensionMismatch(format!(
            "contracting {:?} with B {:?} and C {:?}",
            t.dims(),
            b.shape(),
            c.shape()
        )));
    }
    let rank = b.ncols();
    let mut out = Mat::zeros(i_dim, rank);
    let data = t.data();
    for r in 0..rank {
        let (bcol, ccol) = (b.column(r), c.column(r));
        let mut col = out.column_mut(r);
        for k in 0..k_dim {
            let ck = ccol[k];
            if ck == 0.0 {
                continue;
            }
            for j in 0..j_dim {
                let w = bcol[j] * ck;
                if w == 0.0 {
                    continue;
                }
                let base = i_dim * (j + j_dim * k);
                for i in 0..i_dim {
                    col[i] += data[base + i] * w;
                }
            }
        }
    }
    Ok(out)
}

/// Contraction of `t` with the two factors other than `mode`
/// (the matricized-tensor-times-Khatri-Rao product for that mode).
pub fn mode_contraction(t: &Tensor3, factors: &FactorSet, mode: Mode) -> Result<Mat> {
    factors.check_tensor(t)?;
    let [i_dim, j_dim, k_dim] = t.dims();
    let rank = factors.rank();
    let data = t.data();
    match mode {
        Mode::One => tucker_23(t, &factors.b, &factors.c),
        Mode::Two => {
            let mut out = Mat::zeros(j_dim, rank);
            for r in 0..rank {
                let (a, c) = (factors.a.column(r), factors.c.column(r));
                for k in 0..k_dim {
                    for j in 0..j_dim {
                        let base = i_dim * (j + j_dim * k);
                        let s: f64 = (0..i_dim).map(|i| data[base + i] * a[i]).sum();
                        out[(j, r)] += s * c[k];
                    }
                }
            }
            Ok(out)
        }
        Mode::Three => {
            let mut out = Mat::zeros(k_dim, rank);
            for r in 0..rank {
                let (a, b) = (factors.a.column(r), factors.b.column(r));
                for k in 0..k_dim {
                    let mut acc = 0.0;
                    for j in 0..j_dim {
                        let base = i_dim * (j + j_dim * k);
                        let s: f64 = (0..i_dim).map(|i| data[base + i] * a[i]).sum();
                        acc += s * b[j];
                    }
                    out[(k, r)] = acc;
                }
            }
            Ok(out)
        }
    }
}

/// Mode unfolding. Mode 1 gives the JK×I matrix with row `j + J·k`, mode 2
/// the KI×J matrix with row `k + K·i`, mode 3 the IJ×K matrix with row `i + I·j`.
pub fn unfold(t: &Tensor3, mode: Mode) -> Mat {
    let [i_dim, j_dim, k_dim] = t.dims();
    match mode {
        Mode::One => Mat::from_fn(j_dim * k_dim, i_dim, |row, i| {
            t.get(i, row % j_dim, row / j_dim)
        }),
        Mode::Two => Mat::from_fn(k_dim * i_dim, j_dim, |row, j| {
            t.get(row / k_dim, j, row % k_dim)
        }),
        Mode::Three => Mat::from_fn(i_dim * j_dim, k_dim, |row, k| {
            t.get(row % i_dim, row / i_dim, k)
        }),
    }
}

/// Inverse of [`unfold`].
pub fn refold(m: &Mat, mode: Mode, dims: [usize; 3]) -> Result<Tensor3> {
    let [i_dim, j_dim, k_dim] = dims;
    let expected = match mode {
        Mode::One => (j_dim * k_dim, i_dim),
        Mode::Two => (k_dim * i_dim, j_dim),
        Mode::Three => (i_dim * j_dim, k_dim),
    };
    if m.shape() != expected {
        return Err(CpError::DimensionMismatch(format!(
            "refold of {:?} into mode {mode} of {dims:?}",
            m.shape()
        )));
    }
    Tensor3::from_fn(dims, |i, j, k| match mode {
        Mode::One => m[(j + j_dim * k, i)],
        Mode::Two => m[(k + k_dim * i, j)],
        Mode::Three => m[(i + i_dim * j, k)],
    })
}

pub fn frobenius_sq(t: &Tensor3) -> f64 {
    t.data().iter().map(|v| v * v).sum()
}

pub fn inner(t: &Tensor3, l: &Tensor3) -> Result<f64> {
    t.check_same_dims(l)?;
    Ok(t.data().iter().zip(l.data()).map(|(x, y)| x * y).sum())
}

/// Column-major vectorization of a matrix, matching the crate-wide convention.
pub fn vec_of(m: &Mat) -> Vec<f64> {
    m.as_slice().to_vec()
}

/// Reshapes a length `rows·cols` vector into a matrix, first index fastest.
pub fn matricize(v: &[f64], rows: usize, cols: usize) -> Mat {
    Mat::from_column_slice(rows, cols, v)
}
