//! Poisson point-pattern model: observation type, Gaussian spatial density,
//! and the ranking-function baseline score.

use crate::error::{Error, Result};
use crate::numerics::{ln_gamma, Cholesky, SmallMatrix};

const LN_2PI: f64 = 1.837_877_066_409_345_6;
const LN_4PI: f64 = 2.531_024_246_969_291;

/// One point-pattern observation: a time index and an unordered collection
/// of d-dimensional points (stored flat, row per point).
#[derive(Debug, Clone, PartialEq)]
pub struct PointPattern {
    t: u64,
    dim: usize,
    coords: Vec<f64>,
}

impl PointPattern {
    /// Builds a pattern from flat row-major coordinates (`len` must be a
    /// multiple of `dim`).
    pub fn new(t: u64, dim: usize, coords: Vec<f64>) -> Result<Self> {
        if t == 0 {
            return Err(Error::Domain("time index must be >= 1".into()));
        }
        if dim == 0 {
            return Err(Error::Domain("point dimension must be >= 1".into()));
        }
        if coords.len() % dim != 0 {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: coords.len() % dim,
            });
        }
        Ok(PointPattern { t, dim, coords })
    }

    pub fn from_points(t: u64, dim: usize, points: &[Vec<f64>]) -> Result<Self> {
        let mut coords = Vec::with_capacity(points.len() * dim);
        for p in points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: p.len(),
                });
            }
            coords.extend_from_slice(p);
        }
        Self::new(t, dim, coords)
    }

    pub fn empty(t: u64, dim: usize) -> Self {
        Self::new(t, dim, Vec::new()).expect("valid empty pattern")
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of points in the pattern.
    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    /// Sample mean of the points; `None` for an empty pattern.
    pub fn sample_mean(&self) -> Option<Vec<f64>> {
        if self.is_empty() {
            return None;
        }
        let n = self.len() as f64;
        let mut mean = vec![0.0; self.dim];
        for p in self.points() {
            for (m, x) in mean.iter_mut().zip(p) {
                *m += x;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        Some(mean)
    }
}

/// Mean and covariance of the Gaussian spatial density. The covariance is
/// factored once at construction so repeated density evaluations are cheap.
#[derive(Debug, Clone)]
pub struct GaussParams {
    mean: Vec<f64>,
    cov: SmallMatrix,
    chol: Cholesky,
}

impl GaussParams {
    pub fn new(mean: Vec<f64>, cov: SmallMatrix) -> Result<Self> {
        if mean.len() != cov.dim() {
            return Err(Error::DimensionMismatch {
                expected: cov.dim(),
                got: mean.len(),
            });
        }
        let chol = cov.cholesky()?;
        Ok(GaussParams { mean, cov, chol })
    }

    /// Standard normal in `dim` dimensions.
    pub fn standard(dim: usize) -> Self {
        Self::new(vec![0.0; dim], SmallMatrix::identity(dim)).expect("identity is SPD")
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn cov(&self) -> &SmallMatrix {
        &self.cov
    }

    pub fn chol(&self) -> &Cholesky {
        &self.chol
    }
}

/// Parameters of the Poisson point-pattern process: cardinality rate and
/// spatial density.
#[derive(Debug, Clone)]
pub struct PoissonRfsParams {
    rate: f64,
    gauss: GaussParams,
}

impl PoissonRfsParams {
    pub fn new(rate: f64, gauss: GaussParams) -> Result<Self> {
        if !rate.is_finite() || rate <= 0.0 {
            return Err(Error::Domain(format!("rate must be positive, got {rate}")));
        }
        Ok(PoissonRfsParams { rate, gauss })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn gauss(&self) -> &GaussParams {
        &self.gauss
    }
}

/// Log density of `N_d(x; mean, cov)` using the cached Cholesky factor.
pub fn gaussian_logpdf(x: &[f64], g: &GaussParams) -> Result<f64> {
    if x.len() != g.dim() {
        return Err(Error::DimensionMismatch {
            expected: g.dim(),
            got: x.len(),
        });
    }
    let diff: Vec<f64> = x.iter().zip(g.mean()).map(|(a, b)| a - b).collect();
    let maha = g.chol().mahalanobis_sq(&diff);
    let d = g.dim() as f64;
    Ok(-0.5 * (d * LN_2PI + g.chol().log_det() + maha))
}

/// Log likelihood of a pattern under the Poisson point-pattern process:
/// `-λ + Σ_j [ln λ + ln p(x_j)]`; an empty pattern contributes `-λ`.
pub fn poisson_rfs_logdensity(x: &PointPattern, p: &PoissonRfsParams) -> Result<f64> {
    let mut acc = -p.rate();
    let ln_rate = p.rate().ln();
    for point in x.points() {
        acc += ln_rate + gaussian_logpdf(point, p.gauss())?;
    }
    Ok(acc)
}

/// Log of the squared L2 norm of the Gaussian density,
/// `‖p‖₂² = (4π)^{-d/2} |Σ|^{-1/2}` in closed form.
pub fn gaussian_log_l2_norm_sq(g: &GaussParams) -> f64 {
    let d = g.dim() as f64;
    -0.5 * d * LN_4PI - 0.5 * g.chol().log_det()
}

/// Log of the ranking-function score `ρ(n) ∏ p(x) / ‖p‖₂²ⁿ`, with the
/// proportionality constant fixed to one. Only quantiles of its
/// distribution under the in-control process matter, and those are
/// invariant to a common constant.
pub fn ranking_log_score(x: &PointPattern, p: &PoissonRfsParams) -> Result<f64> {
    let n = x.len() as f64;
    // log Poisson pmf at n
    let mut score = -p.rate() + n * p.rate().ln() - ln_gamma(n + 1.0)?;
    if x.is_empty() {
        return Ok(score);
    }
    for point in x.points() {
        score += gaussian_logpdf(point, p.gauss())?;
    }
    score -= n * gaussian_log_l2_norm_sq(p.gauss());
    Ok(score)
}
