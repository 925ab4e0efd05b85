//! Shrinkage-parameter formulas, their data-driven plug-ins, and the
//! top-level estimator assembly.
//!
//! Two closed forms are kept deliberately separate: [`beta_app`] is the
//! elliptical minimum-MSE parameter in terms of (gamma, psi_1), and
//! [`beta_gauss`] is the Gaussian-loss form in terms of (gamma, kappa).
//! They coincide through psi_1 = 1 + kappa, which the test suites assert as
//! a transcription check rather than exploiting in the code.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mestimator::{
    estimate_t_dof, m_estimate, mean_marginal_excess_kurtosis, scm, shrink, DataSample,
    ScatterMatrix, SolveReport, DEFAULT_MAX_ITER, DEFAULT_TOL,
};
use crate::weights::WeightSpec;

/// Estimator tag: which weight family and which shrinkage rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Sample covariance with the Gaussian-loss optimal parameter.
    Gauss,
    /// Sample covariance with the Ledoit-Wolf parameter.
    Lw,
    /// Huber M-estimator with the elliptical optimal parameter.
    Huber,
    /// t-MLE M-estimator (adaptive dof) with the elliptical optimal
    /// parameter.
    TMle,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Method::Gauss => "Gauss",
            Method::Lw => "LW",
            Method::Huber => "Huber",
            Method::TMle => "t-MLE",
        };
        f.write_str(s)
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gauss" | "gaussian" => Ok(Method::Gauss),
            "lw" | "ledoit-wolf" => Ok(Method::Lw),
            "huber" => Ok(Method::Huber),
            "t-mle" | "tmle" | "t" => Ok(Method::TMle),
            other => Err(Error::UnknownEstimator(other.to_string())),
        }
    }
}

/// Knobs of the top-level estimator.
#[derive(Debug, Clone, Copy)]
pub struct EstimateOptions {
    /// Huber threshold quantile.
    pub huber_q: f64,
    /// Fixed-point relative tolerance.
    pub tol: f64,
    /// Fixed-point iteration cap.
    pub max_iter: usize,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self {
            huber_q: 0.7,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

/// Per-estimate diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct Diagnostics {
    pub gamma_hat: f64,
    pub psi1_hat: Option<f64>,
    pub kappa_hat: Option<f64>,
    pub nu_hat: Option<f64>,
    pub solve_report: Option<SolveReport>,
}

/// A regularized scatter estimate: shrink(M-hat, beta) plus everything that
/// went into choosing beta.
#[derive(Debug, Clone)]
pub struct ShrinkageEstimate {
    pub matrix: ScatterMatrix,
    pub beta: f64,
    pub method: Method,
    pub diagnostics: Diagnostics,
}

const BETA_SUP: f64 = 1.0 - f64::EPSILON;

/// Minimum-MSE shrinkage parameter under elliptical sampling:
/// beta = (gamma - 1) / [(gamma - 1)(1 - 1/n) + psi1 (1 - 1/p)(2 gamma + p)/n].
///
/// The value lies in [0, 1); clipping only guards against rounding.
pub fn beta_app(gamma: f64, psi1: f64, n: usize, p: usize) -> Result<f64> {
    if !(gamma >= 1.0) || !gamma.is_finite() {
        return Err(Error::Domain(format!(
            "sphericity must satisfy gamma >= 1, got {gamma}"
        )));
    }
    if !(psi1 > 0.0) || !psi1.is_finite() {
        return Err(Error::Domain(format!("psi1 must be > 0, got {psi1}")));
    }
    if n < 2 || p < 2 {
        return Err(Error::Domain(format!(
            "beta_app requires n >= 2 and p >= 2, got n = {n}, p = {p}"
        )));
    }
    let (nf, pf) = (n as f64, p as f64);
    let num = gamma - 1.0;
    let den = (gamma - 1.0) * (1.0 - 1.0 / nf)
        + psi1 * (1.0 - 1.0 / pf) * (2.0 * gamma + pf) / nf;
    Ok((num / den).clamp(0.0, BETA_SUP))
}

/// Gaussian-loss optimal shrinkage parameter for the regularized sample
/// covariance matrix: beta = (gamma - 1) / (gamma - 1 + a) with
/// a = [kappa (2 gamma (1 - 1/p) + p - 1) + gamma (1 - 2/p) + p] / n.
pub fn beta_gauss(gamma: f64, kappa: f64, n: usize, p: usize) -> Result<f64> {
    if !(gamma >= 1.0) || !gamma.is_finite() {
        return Err(Error::Domain(format!(
            "sphericity must satisfy gamma >= 1, got {gamma}"
        )));
    }
    if n < 2 || p < 3 {
        return Err(Error::Domain(format!(
            "beta_gauss requires n >= 2 and p >= 3, got n = {n}, p = {p}"
        )));
    }
    let pf = p as f64;
    if !(kappa > -2.0 / (pf + 2.0)) || !kappa.is_finite() {
        return Err(Error::Domain(format!(
            "elliptical kurtosis must exceed -2/(p+2), got {kappa}"
        )));
    }
    let nf = n as f64;
    let a = kappa * (2.0 * gamma * (1.0 - 1.0 / pf) + pf - 1.0) / nf
        + (gamma * (1.0 - 2.0 / pf) + pf) / nf;
    Ok(((gamma - 1.0) / (gamma - 1.0 + a)).clamp(0.0, BETA_SUP))
}

/// Plug-in estimate of psi_1: (1/n) sum [t_i u(t_i)]^2 / (p (p + 2)) with
/// t_i = x_i^T M^{-1} x_i.
///
/// Uses the converged M-estimate of the same weight and deliberately skips
/// any scale correction; a known accuracy loss for non-Gaussian data comes
/// with that choice.
pub fn psi1_hat(data: &DataSample, m: &ScatterMatrix, weight: &WeightSpec) -> Result<f64> {
    if weight.is_adaptive() {
        return Err(Error::Domain(
            "adaptive t dof must be resolved before computing psi1".to_string(),
        ));
    }
    let forms = m.quadratic_forms(data)?;
    let pf = data.p() as f64;
    let mean_sq = forms.iter().map(|&t| weight.psi(t).powi(2)).sum::<f64>() / data.n() as f64;
    Ok(mean_sq / (pf * (pf + 2.0)))
}

/// Sign-based sphericity estimate: with SGN the spatial-sign covariance
/// (1/n) sum (x_i / |x_i|)(x_i / |x_i|)^T,
/// gamma-hat = clip((n/(n-1)) (p tr(SGN^2) - p/n), 1, p).
///
/// Distribution-free over the elliptical family since the radius cancels.
pub fn sphericity_hat(data: &DataSample) -> Result<f64> {
    let (n, p) = (data.n(), data.p());
    let mut signs = data.rows().to_owned();
    for (i, mut row) in signs.rows_mut().into_iter().enumerate() {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::ZeroNormRow { row: i });
        }
        row.mapv_inplace(|v| v / norm);
    }
    let sgn = signs.t().dot(&signs) / n as f64;
    let tr_sq: f64 = sgn.iter().map(|v| v * v).sum();
    let (nf, pf) = (n as f64, p as f64);
    let gamma = nf / (nf - 1.0) * (pf * tr_sq - pf / nf);
    Ok(gamma.clamp(1.0, pf))
}

/// Kurtosis plug-in: the average marginal excess kurtosis over 3, floored
/// just above the theoretical elliptical lower bound -2/(p+2).
pub fn kappa_hat(data: &DataSample) -> Result<f64> {
    if data.n() < 4 {
        return Err(Error::Domain(format!(
            "kurtosis estimation needs n >= 4, got n = {}",
            data.n()
        )));
    }
    let pf = data.p() as f64;
    let floor = -2.0 / (pf + 2.0) + 1e-3;
    Ok(mean_marginal_excess_kurtosis(data).max(floor))
}

/// Ledoit-Wolf shrinkage parameter toward the scaled identity:
/// beta = 1 - b^2 / d^2 with m = tr(S)/p, d^2 = |S - m I|_F^2 and
/// b^2 = min(d^2, (1/n^2) sum_i |x_i x_i^T - S|_F^2).
///
/// Returns 0 when S is exactly spherical (d^2 = 0).
pub fn lw_beta(data: &DataSample) -> Result<f64> {
    let (n, p) = (data.n(), data.p());
    let nf = n as f64;
    let x = data.rows();
    let s = x.t().dot(x) / nf;
    let mean_eig = s.diag().sum() / p as f64;

    let mut d_sq = 0.0;
    for i in 0..p {
        for j in 0..p {
            let target = if i == j { mean_eig } else { 0.0 };
            d_sq += (s[[i, j]] - target).powi(2);
        }
    }
    if d_sq <= 0.0 {
        return Ok(0.0);
    }

    let s_frob_sq: f64 = s.iter().map(|v| v * v).sum();
    let mut sum_dev = 0.0;
    for row in x.rows() {
        let norm_sq: f64 = row.iter().map(|v| v * v).sum();
        let s_x = s.dot(&row);
        let x_s_x: f64 = row
            .iter()
            .zip(s_x.iter())
            .map(|(a, b)| a * b)
            .sum();
        // |x x^T - S|_F^2 = |x|^4 - 2 x^T S x + |S|_F^2
        sum_dev += norm_sq * norm_sq - 2.0 * x_s_x + s_frob_sq;
    }
    let b_sq = (sum_dev / (nf * nf)).min(d_sq);
    Ok(1.0 - b_sq / d_sq)
}

/// Run one of the four configured estimators end to end: estimate the
/// scatter, choose beta by the method's rule, shrink, and return the result
/// with diagnostics.
pub fn estimate(data: &DataSample, method: Method, options: &EstimateOptions) -> Result<ShrinkageEstimate> {
    let (n, p) = (data.n(), data.p());
    let gamma = sphericity_hat(data)?;
    match method {
        Method::Gauss => {
            let s = scm(data)?;
            let kappa = kappa_hat(data)?;
            let beta = beta_gauss(gamma, kappa, n, p)?;
            Ok(ShrinkageEstimate {
                matrix: shrink(&s, beta)?,
                beta,
                method,
                diagnostics: Diagnostics {
                    gamma_hat: gamma,
                    psi1_hat: None,
                    kappa_hat: Some(kappa),
                    nu_hat: None,
                    solve_report: None,
                },
            })
        }
        Method::Lw => {
            let s = scm(data)?;
            let beta = lw_beta(data)?;
            Ok(ShrinkageEstimate {
                matrix: shrink(&s, beta)?,
                beta,
                method,
                diagnostics: Diagnostics {
                    gamma_hat: gamma,
                    psi1_hat: None,
                    kappa_hat: None,
                    nu_hat: None,
                    solve_report: None,
                },
            })
        }
        Method::Huber => {
            let weight = WeightSpec::huber(p, options.huber_q)?;
            let (m, report) = m_estimate(data, &weight, options.tol, options.max_iter)?;
            let psi1 = psi1_hat(data, &m, &weight)?;
            let beta = beta_app(gamma, psi1, n, p)?;
            Ok(ShrinkageEstimate {
                matrix: shrink(&m, beta)?,
                beta,
                method,
                diagnostics: Diagnostics {
                    gamma_hat: gamma,
                    psi1_hat: Some(psi1),
                    kappa_hat: None,
                    nu_hat: None,
                    solve_report: Some(report),
                },
            })
        }
        Method::TMle => {
            let nu = estimate_t_dof(data);
            let weight = WeightSpec::t_mle(p, nu)?;
            let (m, report) = m_estimate(data, &weight, options.tol, options.max_iter)?;
            let psi1 = psi1_hat(data, &m, &weight)?;
            let beta = beta_app(gamma, psi1, n, p)?;
            Ok(ShrinkageEstimate {
                matrix: shrink(&m, beta)?,
                beta,
                method,
                diagnostics: Diagnostics {
                    gamma_hat: gamma,
                    psi1_hat: Some(psi1),
                    kappa_hat: None,
                    nu_hat: Some(nu),
                    solve_report: Some(report),
                },
            })
        }
    }
}
