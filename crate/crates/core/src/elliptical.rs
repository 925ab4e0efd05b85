//! Population-side machinery: AR(1) scatter construction, elliptical
//! samplers, the scale equation E[psi(x^T Lambda^{-1} x / sigma)] = p, the
//! population M-functional sigma * Lambda, and the one-step estimator used
//! to validate the shrinkage formulas.
//!
//! Conventions: `Lambda` is the covariance matrix of the sampled vectors.
//! For the t family this means the distribution's scatter parameter is
//! ((nu - 2) / nu) * Lambda, so every weight family is scored against one
//! covariance-parametrized target. The quadratic form x^T Lambda^{-1} x is
//! then chi-squared(p) under the normal family and ((nu - 2)/nu) * p *
//! F(p, nu) under the t family, which reduces the scale equation to a 1-D
//! integral.

use ndarray::{Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{ChiSquared as ChiSquaredDistr, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mestimator::{DataSample, ScatterMatrix};
use crate::specialfn::ln_gamma;
use crate::weights::{WeightKind, WeightSpec};

/// Elliptical family of the sampled vectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Mvn,
    /// Multivariate t with `dof > 2` so the covariance parametrization is
    /// valid.
    T { dof: f64 },
}

/// A centered elliptical population with covariance matrix `covariance`.
#[derive(Debug, Clone)]
pub struct EllipticalModel {
    family: Family,
    covariance: ScatterMatrix,
}

impl EllipticalModel {
    pub fn new(family: Family, covariance: ScatterMatrix) -> Result<Self> {
        if let Family::T { dof } = family {
            if !(dof > 2.0) || !dof.is_finite() {
                return Err(Error::Domain(format!(
                    "t family requires dof > 2 for a finite covariance, got {dof}"
                )));
            }
        }
        Ok(Self { family, covariance })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn covariance(&self) -> &ScatterMatrix {
        &self.covariance
    }

    pub fn dim(&self) -> usize {
        self.covariance.dim()
    }

    /// Sphericity of the population scatter; scale-invariant, so it is the
    /// same for Lambda and sigma * Lambda.
    pub fn gamma(&self) -> f64 {
        self.covariance.sphericity()
    }

    /// Elliptical kurtosis: 0 for the normal family, 2 / (dof - 4) for t
    /// with dof > 4, `None` (non-finite) for t with dof <= 4.
    pub fn kappa(&self) -> Option<f64> {
        match self.family {
            Family::Mvn => Some(0.0),
            Family::T { dof } if dof > 4.0 => Some(2.0 / (dof - 4.0)),
            Family::T { .. } => None,
        }
    }

    /// Draw `n` observations; deterministic in `seed`.
    ///
    /// MVN: x = L z with z standard normal. t(nu): x = L z sqrt((nu-2)/s)
    /// with s ~ chi-squared(nu), which makes cov(x) equal the model
    /// covariance exactly.
    pub fn sample(&self, n: usize, seed: u64) -> Result<DataSample> {
        let p = self.dim();
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut z = Array2::<f64>::zeros((n, p));
        for v in z.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        let mut x = z.dot(&self.covariance.cholesky_lower().t());
        if let Family::T { dof } = self.family {
            let chi = ChiSquaredDistr::new(dof)
                .map_err(|e| Error::Domain(format!("chi-squared sampler: {e}")))?;
            for mut row in x.rows_mut() {
                let s: f64 = chi.sample(&mut rng);
                let scale = ((dof - 2.0) / s).sqrt();
                row.mapv_inplace(|v| v * scale);
            }
        }
        DataSample::new(x)
    }
}

/// AR(1) scatter matrix (Lambda)_ij = eta * rho^|i - j|, trace = p * eta.
pub fn ar1_scatter(p: usize, rho: f64, eta: f64) -> Result<ScatterMatrix> {
    if p == 0 {
        return Err(Error::Domain("dimension must be >= 1".to_string()));
    }
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::Domain(format!(
            "AR(1) parameter must lie in (0, 1), got {rho}"
        )));
    }
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(Error::Domain(format!(
            "scale parameter must be positive, got {eta}"
        )));
    }
    let mut m = Array2::<f64>::zeros((p, p));
    for i in 0..p {
        for j in 0..p {
            m[[i, j]] = eta * rho.powi((i as i32 - j as i32).abs());
        }
    }
    ScatterMatrix::from_symmetric(m)
}

/// Population description of an M-estimator's limit under a given model:
/// the scale sigma solving the scale equation, the M-functional
/// sigma * Lambda, and the population sphericity/kurtosis.
#[derive(Debug, Clone)]
pub struct PopulationOracle {
    pub sigma: f64,
    pub m_functional: ScatterMatrix,
    pub gamma: f64,
    /// `None` marks non-finite kurtosis (t with dof <= 4).
    pub kappa: Option<f64>,
}

/// E[f(r)] where r is the radial quadratic form x^T Lambda^{-1} x of the
/// model, evaluated by adaptive quadrature. `f` must be bounded on the
/// model's radial support (all psi evaluations used here are).
fn radial_expectation(model: &EllipticalModel, f: &dyn Fn(f64) -> f64) -> f64 {
    let p = model.dim() as f64;
    match model.family {
        Family::Mvn => {
            // r ~ chi-squared(p); the tail beyond 5p + 100 is negligible at
            // the 1e-10 tolerance used here.
            let k = p / 2.0;
            let ln_norm = k * 2.0_f64.ln() + ln_gamma(k);
            let pdf = move |r: f64| ((k - 1.0) * r.ln() - r / 2.0 - ln_norm).exp();
            let upper = 5.0 * p + 100.0;
            adaptive_simpson(
                &|r: f64| if r <= 0.0 { 0.0 } else { f(r) * pdf(r) },
                0.0,
                upper,
                1e-10,
            )
        }
        Family::T { dof } => {
            // With w ~ Beta(p/2, dof/2), r = (dof - 2) w / (1 - w); compact
            // domain and a bounded integrand for the Huber and t weights.
            let (a, b) = (p / 2.0, dof / 2.0);
            let ln_beta = ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b);
            let integrand = move |w: f64| {
                if w <= 0.0 || w >= 1.0 {
                    return 0.0;
                }
                let r = (dof - 2.0) * w / (1.0 - w);
                let dens = ((a - 1.0) * w.ln() + (b - 1.0) * (1.0 - w).ln() - ln_beta).exp();
                f(r) * dens
            };
            adaptive_simpson(&integrand, 0.0, 1.0 - 1e-9, 1e-10)
        }
    }
}

fn check_radial_args(weight: &WeightSpec, sigma: f64) -> Result<()> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::Domain(format!(
            "sigma must be positive and finite, got {sigma}"
        )));
    }
    if weight.is_adaptive() {
        return Err(Error::Domain(
            "adaptive t dof must be resolved before radial expectations".to_string(),
        ));
    }
    Ok(())
}

/// E[psi(r / sigma)], the left side of the scale equation.
pub fn psi_expectation(model: &EllipticalModel, weight: &WeightSpec, sigma: f64) -> Result<f64> {
    check_radial_args(weight, sigma)?;
    Ok(radial_expectation(model, &|r| weight.psi(r / sigma)))
}

/// The population constant psi_1 = E[psi(r / sigma)^2] / (p (p + 2)).
pub fn psi1_constant(model: &EllipticalModel, weight: &WeightSpec, sigma: f64) -> Result<f64> {
    check_radial_args(weight, sigma)?;
    let p = model.dim() as f64;
    let second = radial_expectation(model, &|r| weight.psi(r / sigma).powi(2));
    Ok(second / (p * (p + 2.0)))
}

/// Solve E[psi(r / sigma)] = p for sigma by bisection on [1e-3, 1e3].
///
/// The Gaussian weight is linear in 1/sigma and E[x^T Lambda^{-1} x] = p
/// under the covariance parametrization, so it returns 1 exactly. For
/// nondecreasing psi the expectation is nonincreasing in sigma, which makes
/// the bisection safe.
pub fn solve_sigma(model: &EllipticalModel, weight: &WeightSpec) -> Result<f64> {
    if matches!(weight.kind(), WeightKind::Gaussian) {
        return Ok(1.0);
    }
    let p = model.dim() as f64;
    let (mut lo, mut hi) = (1e-3, 1e3);
    let f_lo = psi_expectation(model, weight, lo)?;
    let f_hi = psi_expectation(model, weight, hi)?;
    if f_lo < p || f_hi > p {
        return Err(Error::BracketFailure);
    }
    for _ in 0..90 {
        let mid = 0.5 * (lo + hi);
        let val = psi_expectation(model, weight, mid)?;
        if val > p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 * hi.max(1.0) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Population oracle for the pair (model, weight).
pub fn m_functional(model: &EllipticalModel, weight: &WeightSpec) -> Result<PopulationOracle> {
    let sigma = solve_sigma(model, weight)?;
    Ok(PopulationOracle {
        sigma,
        m_functional: model.covariance.scaled(sigma)?,
        gamma: model.gamma(),
        kappa: model.kappa(),
    })
}

/// One-step estimator: the weighted sample covariance with weights
/// evaluated at the known M-functional,
/// C = (1/n) sum u(x_i^T M0^{-1} x_i) x_i x_i^T.
/// Unbiased for M0; used only for analysis and validation.
pub fn one_step_c(
    data: &DataSample,
    oracle: &PopulationOracle,
    weight: &WeightSpec,
) -> Result<ScatterMatrix> {
    let forms = oracle.m_functional.quadratic_forms(data)?;
    let wts = forms.mapv(|t| weight.u(t));
    let weighted = data.rows() * &wts.insert_axis(Axis(1));
    let c = data.rows().t().dot(&weighted) / data.n() as f64;
    ScatterMatrix::from_symmetric(c)
}

/// Adaptive Simpson quadrature with absolute tolerance `tol`.
fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fb, fm, whole, tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fb: f64,
    fm: f64,
    whole: f64,
    tol: f64,
    depth: usize,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        simpson_step(f, a, m, fa, fm, flm, left, tol / 2.0, depth - 1)
            + simpson_step(f, m, b, fm, fb, frm, right, tol / 2.0, depth - 1)
    }
}
