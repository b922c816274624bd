//! Synthetic marginals, costs and test matrices.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{rng, Error, Result};

/// Discretized Gaussian density on the midpoint grid `(i − ½)/d` of [0, 1],
/// normalized to sum 1.
pub fn gaussian_marginal(d: usize, mean: f64, sigma: f64) -> Result<DVector<f64>> {
    if d == 0 {
        return Err(Error::InvalidArgument("marginal size must be >= 1".into()));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidArgument(format!("sigma must be positive, got {sigma}")));
    }
    if !(0.0..=1.0).contains(&mean) {
        return Err(Error::InvalidArgument(format!("mean must lie in [0, 1], got {mean}")));
    }
    let v = DVector::from_fn(d, |i, _| {
        let x = (i as f64 + 0.5) / d as f64;
        (-(x - mean).powi(2) / (2.0 * sigma * sigma)).exp()
    });
    let total = v.sum();
    if !(total > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "gaussian marginal underflowed to zero on a grid of {d} points; use a larger sigma than {sigma}"
        )));
    }
    Ok(v / total)
}

pub fn uniform_marginal(d: usize) -> Result<DVector<f64>> {
    if d == 0 {
        return Err(Error::InvalidArgument("marginal size must be >= 1".into()));
    }
    Ok(DVector::from_element(d, 1.0 / d as f64))
}

/// Scales a nonnegative vector (e.g. grayscale pixels) to sum 1.
pub fn normalize_marginal(v: DVector<f64>) -> Result<DVector<f64>> {
    if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::InvalidArgument("marginal entries must be finite and >= 0".into()));
    }
    let total = v.sum();
    if !(total > 0.0) {
        return Err(Error::InvalidArgument("marginal has zero mass".into()));
    }
    Ok(v / total)
}

/// `a × b` cost with i.i.d. Unif[0, 1) entries drawn from `seed`.
pub fn random_cost(a: usize, b: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = rng::seeded(seed);
    let mut m = DMatrix::zeros(a, b);
    for i in 0..a {
        for j in 0..b {
            m[(i, j)] = rng.random::<f64>();
        }
    }
    m
}

/// Pixelwise ℓ1 distances on an `h × w` grid, row-major. With `normalize`
/// the matrix is divided by `(h − 1) + (w − 1)` so entries lie in [0, 1].
pub fn grid_l1_cost(h: usize, w: usize, normalize: bool) -> Result<DMatrix<f64>> {
    if h == 0 || w == 0 {
        return Err(Error::InvalidArgument("grid dimensions must be >= 1".into()));
    }
    let n = h * w;
    let scale = if normalize && h + w > 2 {
        1.0 / ((h - 1) + (w - 1)) as f64
    } else {
        1.0
    };
    Ok(DMatrix::from_fn(n, n, |p, q| {
        let (pi, pj) = (p / w, p % w);
        let (qi, qj) = (q / w, q % w);
        (pi.abs_diff(qi) + pj.abs_diff(qj)) as f64 * scale
    }))
}

/// Singular-value profiles for synthetic least-squares matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SvProfile {
    /// `0.6^{i−1}`.
    Fast,
    /// `i^{−2}`.
    Medium,
    /// `i^{−1/2}`.
    Slow,
    /// Geometric `ratio^{i−1}` floored at `floor`.
    Geometric { ratio: f64, floor: f64 },
    Explicit(Vec<f64>),
}

/// Relative floor applied to the named profiles.
pub const PROFILE_FLOOR: f64 = 1e-6;

impl SvProfile {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "fast" => Ok(SvProfile::Fast),
            "medium" => Ok(SvProfile::Medium),
            "slow" => Ok(SvProfile::Slow),
            other => Err(Error::InvalidArgument(format!(
                "unknown singular-value profile '{other}' (expected fast, medium or slow)"
            ))),
        }
    }

    pub fn values(&self, d: usize) -> Result<Vec<f64>> {
        let named = |f: &dyn Fn(f64) -> f64| -> Vec<f64> {
            let first = f(1.0);
            (1..=d).map(|i| f(i as f64).max(PROFILE_FLOOR * first)).collect()
        };
        let out = match self {
            SvProfile::Fast => named(&|i| 0.6f64.powf(i - 1.0)),
            SvProfile::Medium => named(&|i| i.powi(-2)),
            SvProfile::Slow => named(&|i| i.powf(-0.5)),
            SvProfile::Geometric { ratio, floor } => {
                (0..d).map(|i| ratio.powi(i as i32).max(*floor)).collect()
            }
            SvProfile::Explicit(v) => {
                if v.len() != d {
                    return Err(Error::DimensionMismatch {
                        context: "singular-value profile length",
                        expected: d,
                        got: v.len(),
                    });
                }
                v.clone()
            }
        };
        if out.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidArgument("singular values must be positive".into()));
        }
        if out.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::InvalidArgument("singular values must be non-increasing".into()));
        }
        Ok(out)
    }
}

/// `U diag(σ) Vᵀ` where `U`, `V` are the singular bases of a `p × d`
/// standard-normal matrix drawn from `seed`.
pub fn sv_profile_matrix(p: usize, d: usize, profile: &SvProfile, seed: u64) -> Result<DMatrix<f64>> {
    if d == 0 || p < d {
        return Err(Error::InvalidArgument(format!(
            "need p >= d >= 1, got p = {p}, d = {d}"
        )));
    }
    let sigma = profile.values(d)?;
    let mut rng = rng::seeded(seed);
    let g = DMatrix::from_fn(p, d, |_, _| crate::rng::gaussian(&mut rng));
    let svd = g.svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested Vᵀ");
    let scaled = DMatrix::from_fn(p, d, |i, j| u[(i, j)] * sigma[j]);
    Ok(scaled * v_t)
}

/// `b = A x` with `x ~ N(0, I)` drawn from `seed`.
pub fn consistent_rhs(a: &crate::objectives::DesignMatrix, seed: u64) -> DVector<f64> {
    let mut rng = rng::seeded(seed);
    let x = DVector::from_fn(a.ncols(), |_, _| crate::rng::gaussian(&mut rng));
    a.mul_vec(&x)
}

/// `b ~ N(0, I)` of length `p`.
pub fn gaussian_rhs(p: usize, seed: u64) -> DVector<f64> {
    let mut rng = rng::seeded(seed);
    DVector::from_fn(p, |_, _| crate::rng::gaussian(&mut rng))
}
