//! Seeded synthetic tensors.

use std::fmt;
use std::str::FromStr;

use cpcp::solvers::{normalize_columns, random_factors};
use cpcp::{FactorSet, Mat, Tensor3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GeneratorKind {
    /// Normal factors with unit columns.
    RandomFactors,
    /// Factor columns pulled toward a shared direction; pairwise cosines ≈ `collinearity`.
    Swampy { collinearity: f64 },
    /// `Σ a_r∘a_r∘a_r`, invariant under every permutation of indices.
    Symmetric,
    /// `Σ e_r∘e_r∘e_r`.
    Diagonal,
    /// Random-factor tensor plus Gaussian noise scaled by `‖T‖_F/√(IJK)`.
    Noisy { sigma: f64 },
}

impl GeneratorKind {
    pub fn name(&self) -> &'static str {
        match self {
            GeneratorKind::RandomFactors => "random_factors",
            GeneratorKind::Swampy { .. } => "swampy",
            GeneratorKind::Symmetric => "symmetric",
            GeneratorKind::Diagonal => "diagonal",
            GeneratorKind::Noisy { .. } => "noisy",
        }
    }

    /// Builds a kind from its name and the optional shape parameters.
    pub fn parse(name: &str, collinearity: f64, sigma: f64) -> Result<Self> {
        let kind = match name {
            "random_factors" | "random" => GeneratorKind::RandomFactors,
            "swampy" => GeneratorKind::Swampy { collinearity },
            "symmetric" => GeneratorKind::Symmetric,
            "diagonal" => GeneratorKind::Diagonal,
            "noisy" => GeneratorKind::Noisy { sigma },
            other => return Err(CliError::Usage(format!("unknown generator `{other}`"))),
        };
        Ok(kind)
    }
}

impl fmt::Display for GeneratorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeneratorKind::Swampy { collinearity } => write!(f, "swampy(c={collinearity})"),
            GeneratorKind::Noisy { sigma } => write!(f, "noisy(sigma={sigma})"),
            other => f.write_str(other.name()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    pub dims: [usize; 3],
    pub rank: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct Generated {
    pub tensor: Tensor3,
    /// Ground truth for the kinds that have one.
    pub factors: Option<FactorSet>,
}

/// Parses `I,J,K` (or `IxJxK`).
pub fn parse_dims(s: &str) -> Result<[usize; 3]> {
    let parts: Vec<&str> = s.split([',', 'x']).map(str::trim).collect();
    let bad = || CliError::Usage(format!("dims must look like 4,5,6, got `{s}`"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let mut out = [0usize; 3];
    for (slot, p) in out.iter_mut().zip(parts) {
        *slot = p.parse().map_err(|_| bad())?;
        if *slot == 0 {
            return Err(bad());
        }
    }
    Ok(out)
}

impl FromStr for GeneratorKind {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        GeneratorKind::parse(s, 0.0, 0.0)
    }
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dims.contains(&0) {
            return Err(CliError::Usage("dims must be positive".into()));
        }
        if self.rank == 0 {
            return Err(CliError::Usage("rank must be at least 1".into()));
        }
        match self.kind {
            GeneratorKind::Swampy { collinearity } if !(0.0..1.0).contains(&collinearity) => {
                Err(CliError::Usage(format!("collinearity must lie in [0, 1), got {collinearity}")))
            }
            GeneratorKind::Swampy { .. } if self.dims.contains(&1) => {
                Err(CliError::Usage("swampy tensors need every dimension ≥ 2".into()))
            }
            GeneratorKind::Noisy { sigma } if !(sigma >= 0.0 && sigma.is_finite()) => {
                Err(CliError::Usage(format!("noise level must be nonnegative, got {sigma}")))
            }
            GeneratorKind::Symmetric if self.dims[0] != self.dims[1] || self.dims[1] != self.dims[2] => {
                Err(CliError::Usage("symmetric tensors need I = J = K".into()))
            }
            GeneratorKind::Diagonal if self.rank > *self.dims.iter().min().unwrap() => Err(CliError::Usage(
                format!("diagonal rank {} exceeds the smallest dimension", self.rank),
            )),
            _ => Ok(()),
        }
    }
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

fn unit_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    loop {
        let mut v = normal_vec(rng, n);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            return v;
        }
    }
}

/// `√c·s + √(1−c)·z_r` with `s` shared by all columns and each `z_r` a unit
/// vector orthogonal to `s`, so every column has unit norm and
/// `cos(x_r, x_q) = c + (1−c)·⟨z_r, z_q⟩`.
fn collinear_factor(rng: &mut ChaCha8Rng, rows: usize, rank: usize, c: f64) -> Mat {
    let shared = unit_vec(rng, rows);
    let mut m = Mat::zeros(rows, rank);
    for r in 0..rank {
        let z = loop {
            let mut z = normal_vec(rng, rows);
            let proj: f64 = z.iter().zip(&shared).map(|(a, b)| a * b).sum();
            z.iter_mut().zip(&shared).for_each(|(a, b)| *a -= proj * b);
            let norm = z.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-8 {
                z.iter_mut().for_each(|x| *x /= norm);
                break z;
            }
        };
        for i in 0..rows {
            m[(i, r)] = c.sqrt() * shared[i] + (1.0 - c).sqrt() * z[i];
        }
    }
    normalize_columns(&mut m);
    m
}

pub fn generate(spec: &GeneratorSpec) -> Result<Generated> {
    spec.validate()?;
    let [i_dim, j_dim, k_dim] = spec.dims;
    let out = match spec.kind {
        GeneratorKind::RandomFactors => {
            let f = random_factors(spec.dims, spec.rank, spec.seed)?;
            Generated {
                tensor: Tensor3::from_factors(&f),
                factors: Some(f),
            }
        }
        GeneratorKind::Swampy { collinearity } => {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            let a = collinear_factor(&mut rng, i_dim, spec.rank, collinearity);
            let b = collinear_factor(&mut rng, j_dim, spec.rank, collinearity);
            let c = collinear_factor(&mut rng, k_dim, spec.rank, collinearity);
            let f = FactorSet::new(a, b, c)?;
            Generated {
                tensor: Tensor3::from_factors(&f),
                factors: Some(f),
            }
        }
        GeneratorKind::Symmetric => {
            let a = random_factors(spec.dims, spec.rank, spec.seed)?.a;
            // Evaluate each entry at its sorted index triple so that every
            // permutation reads the same rounded value.
            let tensor = Tensor3::from_fn(spec.dims, |i, j, k| {
                let mut idx = [i, j, k];
                idx.sort_unstable();
                (0..spec.rank)
                    .map(|r| a[(idx[0], r)] * a[(idx[1], r)] * a[(idx[2], r)])
                    .sum()
            })?;
            Generated {
                tensor,
                factors: Some(FactorSet::new(a.clone(), a.clone(), a)?),
            }
        }
        GeneratorKind::Diagonal => {
            let eye = |n: usize| Mat::from_fn(n, spec.rank, |r, c| if r == c { 1.0 } else { 0.0 });
            let f = FactorSet::new(eye(i_dim), eye(j_dim), eye(k_dim))?;
            Generated {
                tensor: Tensor3::from_factors(&f),
                factors: Some(f),
            }
        }
        GeneratorKind::Noisy { sigma } => {
            let f = random_factors(spec.dims, spec.rank, spec.seed)?;
            let clean = Tensor3::from_factors(&f);
            let scale = sigma * cpcp::tensor::frobenius_sq(&clean).sqrt() / (clean.len() as f64).sqrt();
            // Separate stream so the noise does not alias the factor draws.
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x9E37_79B9_7F4A_7C15);
            let noise = normal_vec(&mut rng, clean.len());
            let data = clean.data().iter().zip(noise).map(|(x, e)| x + scale * e).collect();
            Generated {
                tensor: Tensor3::new(spec.dims, data)?,
                factors: Some(f),
            }
        }
    };
    Ok(out)
}
