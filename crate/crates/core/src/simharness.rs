//! Monte-Carlo experiment runner: sweeps sample sizes over a configured
//! elliptical population, scores every estimator by normalized MSE against
//! its own population target sigma * Lambda, and aggregates per-cell means
//! and standard errors into a CSV plus a JSON run manifest.
//!
//! Also hosts the brute-force shrinkage-parameter oracle (grid search over
//! the one-step estimator's MSE) and the moment-identity self-tests that
//! validate the closed-form shrinkage rules.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::elliptical::{
    ar1_scatter, m_functional, one_step_c, psi1_constant, solve_sigma, EllipticalModel, Family,
};
use crate::error::{Error, Result};
use crate::mestimator::{DataSample, ScatterMatrix};
use crate::shrinkage::{beta_app, estimate, EstimateOptions, Method};
use crate::weights::WeightSpec;

/// Description of one Monte-Carlo sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub p: usize,
    pub rho: f64,
    pub eta: f64,
    pub family: Family,
    pub n_grid: Vec<usize>,
    pub trials: usize,
    pub estimators: Vec<Method>,
    pub huber_q: f64,
    pub root_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            p: 40,
            rho: 0.6,
            eta: 10.0,
            family: Family::Mvn,
            n_grid: vec![60, 120, 180, 240],
            trials: 2000,
            estimators: vec![Method::Gauss, Method::Lw, Method::Huber, Method::TMle],
            huber_q: 0.7,
            root_seed: 1,
        }
    }
}

/// Aggregates for one (estimator, n) cell.
#[derive(Debug, Clone, Serialize)]
pub struct CellStats {
    pub estimator: Method,
    pub n: usize,
    pub nmse_mean: f64,
    pub nmse_se: f64,
    pub beta_mean: f64,
    pub beta_se: f64,
    pub failures: usize,
}

/// Full sweep output.
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    /// Scale of each estimator's population target: Lambda_0 = sigma * Lambda.
    pub sigmas: Vec<(Method, f64)>,
    pub cells: Vec<CellStats>,
}

impl ExperimentResult {
    /// Render the result table; the header is part of the interface contract.
    pub fn csv(&self) -> String {
        let mut out = String::from("estimator,n,nmse_mean,nmse_se,beta_mean,beta_se,failures\n");
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                c.estimator, c.n, c.nmse_mean, c.nmse_se, c.beta_mean, c.beta_se, c.failures
            ));
        }
        out
    }

    /// Machine-readable record of what was run: config, seed, target scales,
    /// and library version.
    pub fn manifest_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Manifest<'a> {
            library: &'static str,
            version: &'static str,
            config: &'a ExperimentConfig,
            sigma: BTreeMap<String, f64>,
        }
        let manifest = Manifest {
            library: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            config: &self.config,
            sigma: self
                .sigmas
                .iter()
                .map(|(m, s)| (m.to_string(), *s))
                .collect(),
        };
        serde_json::to_string_pretty(&manifest)
            .map_err(|e| Error::InvalidConfig(format!("manifest serialization: {e}")))
    }
}

/// Normalized MSE |A - B|_F^2 / |B|_F^2.
pub fn nmse(estimate: &ScatterMatrix, target: &ScatterMatrix) -> Result<f64> {
    if estimate.dim() != target.dim() {
        return Err(Error::DimensionMismatch {
            expected: target.dim(),
            actual: estimate.dim(),
        });
    }
    let num: f64 = estimate
        .matrix()
        .iter()
        .zip(target.matrix().iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(num / target.frobenius_norm_sq())
}

/// SplitMix64 round; the per-trial seed stream.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic seed for (stream, index) under a root seed, so trials are
/// independent and order-insensitive.
pub fn derive_seed(root: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(root ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15)) ^ index)
}

/// Scale of the population target Lambda_0 = sigma * Lambda for a given
/// estimator under a given model.
///
/// Gauss and LW target the covariance itself (sigma = 1). Huber solves the
/// scale equation with its own weight. The adaptive t-MLE is scored against
/// the population-matched weight: the model's own dof under the t family,
/// and the Gaussian limit (sigma = 1) under the normal family, so the
/// target does not change from trial to trial.
pub fn target_sigma(model: &EllipticalModel, method: Method, huber_q: f64) -> Result<f64> {
    let p = model.dim();
    match method {
        Method::Gauss | Method::Lw => Ok(1.0),
        Method::Huber => solve_sigma(model, &WeightSpec::huber(p, huber_q)?),
        Method::TMle => match model.family() {
            Family::Mvn => Ok(1.0),
            Family::T { dof } => solve_sigma(model, &WeightSpec::t_mle(p, dof)?),
        },
    }
}

/// Run the configured sweep. Fully deterministic given the config; failures
/// (singular solves or non-convergence) are counted per cell and excluded
/// from the averages.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    if config.trials == 0 {
        return Err(Error::InvalidConfig("trials must be >= 1".to_string()));
    }
    if config.n_grid.is_empty() {
        return Err(Error::InvalidConfig("n_grid must be non-empty".to_string()));
    }
    if config.estimators.is_empty() {
        return Err(Error::InvalidConfig(
            "at least one estimator is required".to_string(),
        ));
    }
    for &n in &config.n_grid {
        if n <= config.p {
            return Err(Error::SampleTooSmall { n, p: config.p });
        }
    }
    if !(config.huber_q > 0.0 && config.huber_q < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "huber_q must lie in (0, 1), got {}",
            config.huber_q
        )));
    }

    let lambda = ar1_scatter(config.p, config.rho, config.eta)?;
    let model = EllipticalModel::new(config.family, lambda)?;

    let mut sigmas = Vec::with_capacity(config.estimators.len());
    let mut targets = Vec::with_capacity(config.estimators.len());
    for &method in &config.estimators {
        let sigma = target_sigma(&model, method, config.huber_q)?;
        targets.push(model.covariance().scaled(sigma)?);
        sigmas.push((method, sigma));
    }

    let options = EstimateOptions {
        huber_q: config.huber_q,
        ..EstimateOptions::default()
    };

    let mut cells = Vec::new();
    for (n_index, &n) in config.n_grid.iter().enumerate() {
        let mut acc: Vec<CellAccumulator> = config
            .estimators
            .iter()
            .map(|_| CellAccumulator::default())
            .collect();
        for trial in 0..config.trials {
            let seed = derive_seed(config.root_seed, n_index as u64 + 1, trial as u64);
            let data = model.sample(n, seed)?;
            for (slot, &method) in config.estimators.iter().enumerate() {
                match estimate(&data, method, &options) {
                    Ok(est)
                        if est
                            .diagnostics
                            .solve_report
                            .is_none_or(|r| r.converged) =>
                    {
                        let v = nmse(&est.matrix, &targets[slot])?;
                        acc[slot].push(v, est.beta);
                    }
                    Ok(_) | Err(Error::SingularIterate) | Err(Error::NotPositiveDefinite) => {
                        acc[slot].failures += 1;
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        for (slot, &method) in config.estimators.iter().enumerate() {
            cells.push(acc[slot].stats(method, n));
        }
    }

    Ok(ExperimentResult {
        config: config.clone(),
        sigmas,
        cells,
    })
}

#[derive(Default)]
struct CellAccumulator {
    count: usize,
    nmse_sum: f64,
    nmse_sumsq: f64,
    beta_sum: f64,
    beta_sumsq: f64,
    failures: usize,
}

impl CellAccumulator {
    fn push(&mut self, nmse: f64, beta: f64) {
        self.count += 1;
        self.nmse_sum += nmse;
        self.nmse_sumsq += nmse * nmse;
        self.beta_sum += beta;
        self.beta_sumsq += beta * beta;
    }

    fn stats(&self, estimator: Method, n: usize) -> CellStats {
        let (nmse_mean, nmse_se) = mean_se(self.count, self.nmse_sum, self.nmse_sumsq);
        let (beta_mean, beta_se) = mean_se(self.count, self.beta_sum, self.beta_sumsq);
        CellStats {
            estimator,
            n,
            nmse_mean,
            nmse_se,
            beta_mean,
            beta_se,
            failures: self.failures,
        }
    }
}

fn mean_se(count: usize, sum: f64, sumsq: f64) -> (f64, f64) {
    if count == 0 {
        return (f64::NAN, f64::NAN);
    }
    let m = count as f64;
    let mean = sum / m;
    if count < 2 {
        return (mean, 0.0);
    }
    let var = ((sumsq - m * mean * mean) / (m - 1.0)).max(0.0);
    (mean, (var / m).sqrt())
}

/// Monte-Carlo MSE curve of the shrunk one-step estimator over a beta grid.
#[derive(Debug, Clone)]
pub struct OracleBetaCurve {
    pub grid: Vec<f64>,
    pub mse_mean: Vec<f64>,
    pub mse_se: Vec<f64>,
    /// Grid point minimizing the mean MSE.
    pub beta_star: f64,
}

/// Brute-force minimizer of E |C_beta - Lambda_0|_F^2 over `grid`, using the
/// one-step estimator C built from the known population oracle. This is the
/// independent check of the closed-form shrinkage parameter.
pub fn oracle_beta_grid(
    model: &EllipticalModel,
    weight: &WeightSpec,
    n: usize,
    trials: usize,
    grid: &[f64],
    root_seed: u64,
) -> Result<OracleBetaCurve> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig("beta grid must be non-empty".to_string()));
    }
    if grid.iter().any(|b| !(0.0..=1.0).contains(b)) {
        return Err(Error::InvalidConfig(
            "beta grid points must lie in [0, 1]".to_string(),
        ));
    }
    if trials < 2 {
        return Err(Error::InvalidConfig("trials must be >= 2".to_string()));
    }
    let oracle = m_functional(model, weight)?;
    let target = oracle.m_functional.matrix();
    let p = model.dim();

    let mut sum = vec![0.0; grid.len()];
    let mut sumsq = vec![0.0; grid.len()];
    for trial in 0..trials {
        let data = model.sample(n, derive_seed(root_seed, 0, trial as u64))?;
        let c = one_step_c(&data, &oracle, weight)?;
        // |beta (C - m I) + (m I - Lambda_0)|^2 is quadratic in beta
        let m = c.trace() / p as f64;
        let mut quad = 0.0;
        let mut lin = 0.0;
        let mut constant = 0.0;
        for i in 0..p {
            for j in 0..p {
                let d = c.matrix()[[i, j]] - if i == j { m } else { 0.0 };
                let e = if i == j { m } else { 0.0 } - target[[i, j]];
                quad += d * d;
                lin += 2.0 * d * e;
                constant += e * e;
            }
        }
        for (k, &beta) in grid.iter().enumerate() {
            let v = quad * beta * beta + lin * beta + constant;
            sum[k] += v;
            sumsq[k] += v * v;
        }
    }

    let mut mse_mean = Vec::with_capacity(grid.len());
    let mut mse_se = Vec::with_capacity(grid.len());
    for k in 0..grid.len() {
        let (m, se) = mean_se(trials, sum[k], sumsq[k]);
        mse_mean.push(m);
        mse_se.push(se);
    }
    let best = mse_mean
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    Ok(OracleBetaCurve {
        grid: grid.to_vec(),
        mse_mean,
        mse_se,
        beta_star: grid[best],
    })
}

/// Monte-Carlo versus closed-form moment identities of the one-step
/// estimator, plus the MSE at the optimal shrinkage parameter.
#[derive(Debug, Clone)]
pub struct MomentIdentityCheck {
    pub trials: usize,
    pub tr_c2_mc: f64,
    pub tr_c2_se: f64,
    pub tr_c2_expected: f64,
    pub tr_c_sq_mc: f64,
    pub tr_c_sq_se: f64,
    pub tr_c_sq_expected: f64,
    pub mse_opt_mc: f64,
    pub mse_opt_se: f64,
    pub mse_opt_expected: f64,
    pub beta_opt: f64,
}

/// Estimate E[tr(C^2)], E[tr(C)^2] and the MSE of C_beta at the optimal
/// beta by Monte-Carlo, against their closed forms under the population
/// constant `psi1`:
///
/// E[tr(C^2)]  = (1 + (2 psi1 - 1)/n) tr(L0^2) + (psi1/n) tr(L0)^2
/// E[tr(C)^2]  = (2 psi1 / n) tr(L0^2) + (1 + (psi1 - 1)/n) tr(L0)^2
/// MSE(C_b*)   = (E[tr(C)^2] - tr(L0)^2)/p + (1 - b*) |L0 - eta0 I|_F^2
pub fn moment_identity_check(
    model: &EllipticalModel,
    weight: &WeightSpec,
    psi1: f64,
    n: usize,
    trials: usize,
    root_seed: u64,
) -> Result<MomentIdentityCheck> {
    if trials < 2 {
        return Err(Error::InvalidConfig("trials must be >= 2".to_string()));
    }
    let oracle = m_functional(model, weight)?;
    let target = &oracle.m_functional;
    let p = model.dim() as f64;
    let nf = n as f64;

    let tr0 = target.trace();
    let tr2 = target.frobenius_norm_sq();
    let tr_c2_expected = (1.0 + (2.0 * psi1 - 1.0) / nf) * tr2 + psi1 / nf * tr0 * tr0;
    let tr_c_sq_expected = 2.0 * psi1 / nf * tr2 + (1.0 + (psi1 - 1.0) / nf) * tr0 * tr0;
    let beta_opt = beta_app(oracle.gamma, psi1, n, model.dim())?;
    let dispersion = tr2 - tr0 * tr0 / p; // |L0 - eta0 I|_F^2
    let mse_opt_expected = (tr_c_sq_expected - tr0 * tr0) / p + (1.0 - beta_opt) * dispersion;

    let (mut s1, mut q1) = (0.0, 0.0);
    let (mut s2, mut q2) = (0.0, 0.0);
    let (mut s3, mut q3) = (0.0, 0.0);
    for trial in 0..trials {
        let data = model.sample(n, derive_seed(root_seed, 0, trial as u64))?;
        let c = one_step_c(&data, &oracle, weight)?;
        let tr_c2 = c.frobenius_norm_sq();
        let tr_c = c.trace();
        let shrunk = crate::mestimator::shrink(&c, beta_opt)?;
        let mse: f64 = shrunk
            .matrix()
            .iter()
            .zip(target.matrix().iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        s1 += tr_c2;
        q1 += tr_c2 * tr_c2;
        s2 += tr_c * tr_c;
        q2 += tr_c * tr_c * tr_c * tr_c;
        s3 += mse;
        q3 += mse * mse;
    }
    let (tr_c2_mc, tr_c2_se) = mean_se(trials, s1, q1);
    let (tr_c_sq_mc, tr_c_sq_se) = mean_se(trials, s2, q2);
    let (mse_opt_mc, mse_opt_se) = mean_se(trials, s3, q3);

    Ok(MomentIdentityCheck {
        trials,
        tr_c2_mc,
        tr_c2_se,
        tr_c2_expected,
        tr_c_sq_mc,
        tr_c_sq_se,
        tr_c_sq_expected,
        mse_opt_mc,
        mse_opt_se,
        mse_opt_expected,
        beta_opt,
    })
}

/// One line of selftest output.
#[derive(Debug, Clone)]
pub struct SelfTestOutcome {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

/// Run the moment-identity and oracle-equivalence checks on a small model
/// (p = 5, AR(1) rho = 0.6, standard normal family).
pub fn selftest(trials: usize, root_seed: u64) -> Result<Vec<SelfTestOutcome>> {
    let p = 5;
    let n = 50;
    let model = EllipticalModel::new(Family::Mvn, ar1_scatter(p, 0.6, 1.0)?)?;
    let mut out = Vec::new();

    // Gaussian weight at the normal family has psi1 = 1 exactly.
    let gaussian = WeightSpec::gaussian(p);
    let check = moment_identity_check(&model, &gaussian, 1.0, n, trials, root_seed)?;
    for (name, mc, se, expected) in [
        (
            "moment-identity-tr-c2",
            check.tr_c2_mc,
            check.tr_c2_se,
            check.tr_c2_expected,
        ),
        (
            "moment-identity-tr-c-squared",
            check.tr_c_sq_mc,
            check.tr_c_sq_se,
            check.tr_c_sq_expected,
        ),
        (
            "mse-at-optimal-beta",
            check.mse_opt_mc,
            check.mse_opt_se,
            check.mse_opt_expected,
        ),
    ] {
        let dev = (mc - expected).abs();
        out.push(SelfTestOutcome {
            name: name.to_string(),
            pass: dev <= 3.0 * se,
            detail: format!("mc {mc:.6} vs expected {expected:.6} ({:.2} se)", dev / se),
        });
    }

    // Grid-search oracle agrees with the closed form within one grid step.
    let grid: Vec<f64> = (0..=50).map(|i| i as f64 * 0.02).collect();
    let gamma = model.gamma();

    let curve = oracle_beta_grid(&model, &gaussian, n, trials, &grid, root_seed)?;
    let closed = beta_app(gamma, 1.0, n, p)?;
    out.push(SelfTestOutcome {
        name: "oracle-beta-gaussian".to_string(),
        pass: (curve.beta_star - closed).abs() <= 0.02 + 1e-12,
        detail: format!("grid {:.2} vs closed form {closed:.4}", curve.beta_star),
    });

    let huber = WeightSpec::huber(p, 0.7)?;
    let sigma = solve_sigma(&model, &huber)?;
    let psi1 = psi1_constant(&model, &huber, sigma)?;
    let curve_h = oracle_beta_grid(&model, &huber, n, trials, &grid, root_seed)?;
    let closed_h = beta_app(gamma, psi1, n, p)?;
    out.push(SelfTestOutcome {
        name: "oracle-beta-huber".to_string(),
        pass: (curve_h.beta_star - closed_h).abs() <= 0.02 + 1e-12,
        detail: format!("grid {:.2} vs closed form {closed_h:.4}", curve_h.beta_star),
    });

    // Every per-trial curve is an upward parabola in beta, so the mean curve
    // must be convex to rounding.
    let convex = curve
        .mse_mean
        .windows(3)
        .all(|w| w[0] - 2.0 * w[1] + w[2] >= -1e-9 * w[1].abs());
    out.push(SelfTestOutcome {
        name: "oracle-curve-convexity".to_string(),
        pass: convex,
        detail: "second differences of the MSE curve".to_string(),
    });

    Ok(out)
}

/// Read a numeric matrix from CSV: one observation per row, comma separated.
/// Blank lines are ignored; `skip_header` drops the first non-blank line.
pub fn read_matrix_csv(path: &Path, skip_header: bool) -> Result<Array2<f64>> {
    let mut text = String::new();
    std::fs::File::open(path)?.read_to_string(&mut text)?;
    parse_matrix_csv(&text, skip_header)
}

/// CSV parsing backing [`read_matrix_csv`]; ragged rows and non-numeric
/// fields produce distinct errors with 1-based line numbers.
pub fn parse_matrix_csv(text: &str, skip_header: bool) -> Result<Array2<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width: Option<usize> = None;
    let mut skipped_header = !skip_header;
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        if !skipped_header {
            skipped_header = true;
            continue;
        }
        let mut row = Vec::new();
        for token in line.split(',') {
            let token = token.trim();
            let value: f64 = token.parse().map_err(|_| Error::MalformedCsv {
                line: line_no,
                reason: format!("could not parse `{token}` as a number"),
            })?;
            row.push(value);
        }
        if let Some(w) = width {
            if row.len() != w {
                return Err(Error::MalformedCsv {
                    line: line_no,
                    reason: format!("ragged row: expected {w} columns, found {}", row.len()),
                });
            }
        } else {
            width = Some(row.len());
        }
        rows.push(row);
    }
    let w = width.ok_or(Error::MalformedCsv {
        line: 1,
        reason: "no data rows".to_string(),
    })?;
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((rows.len(), w), flat)
        .map_err(|e| Error::InvalidConfig(format!("matrix shape: {e}")))
}

/// Construct a [`DataSample`] from parsed CSV rows, surfacing the n > p
/// requirement as its own error.
pub fn data_from_matrix(matrix: Array2<f64>) -> Result<DataSample> {
    DataSample::new(matrix)
}
