//! Fixed-point M-estimation of scatter, the sample covariance matrix, and
//! eigenvalue shrinkage toward the grand mean.

use ndarray::{Array1, Array2, ArrayView1, Axis};

use crate::error::{Error, Result};
use crate::weights::WeightSpec;

/// Default relative-change tolerance of the fixed-point solver.
pub const DEFAULT_TOL: f64 = 1e-7;
/// Default iteration cap of the fixed-point solver.
pub const DEFAULT_MAX_ITER: usize = 500;

/// Symmetric positive-definite matrix with a cached Cholesky factor.
///
/// Symmetry is enforced at construction by mirroring the lower triangle;
/// positive definiteness is established by the factorization itself.
#[derive(Debug, Clone)]
pub struct ScatterMatrix {
    mat: Array2<f64>,
    chol: Array2<f64>,
}

impl ScatterMatrix {
    /// Build from a symmetric matrix. Fails if the input is not square,
    /// not (approximately) symmetric, has non-finite entries, or is not
    /// positive definite.
    pub fn from_symmetric(m: Array2<f64>) -> Result<Self> {
        let p = m.nrows();
        if p == 0 || m.ncols() != p {
            return Err(Error::DimensionMismatch {
                expected: p.max(1),
                actual: m.ncols(),
            });
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let scale = m.iter().fold(0.0_f64, |a, v| a.max(v.abs())).max(1e-300);
        let mut mat = m;
        for i in 0..p {
            for j in 0..i {
                let lower = mat[[i, j]];
                if (lower - mat[[j, i]]).abs() > 1e-6 * scale {
                    return Err(Error::Domain("matrix is not symmetric".to_string()));
                }
                mat[[j, i]] = lower;
            }
        }
        let chol = cholesky_lower(&mat).ok_or(Error::NotPositiveDefinite)?;
        Ok(Self { mat, chol })
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.mat
    }

    /// Lower-triangular factor L with self = L L^T.
    pub fn cholesky_lower(&self) -> &Array2<f64> {
        &self.chol
    }

    pub fn trace(&self) -> f64 {
        self.mat.diag().sum()
    }

    /// tr(M^2) = squared Frobenius norm for symmetric M.
    pub fn frobenius_norm_sq(&self) -> f64 {
        self.mat.iter().map(|v| v * v).sum()
    }

    /// Sphericity p tr(M^2) / tr(M)^2, in [1, p].
    pub fn sphericity(&self) -> f64 {
        let tr = self.trace();
        self.dim() as f64 * self.frobenius_norm_sq() / (tr * tr)
    }

    /// Same matrix scaled by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0) || !factor.is_finite() {
            return Err(Error::Domain(format!(
                "scale factor must be positive and finite, got {factor}"
            )));
        }
        Ok(Self {
            mat: &self.mat * factor,
            chol: &self.chol * factor.sqrt(),
        })
    }

    /// Quadratic form x^T M^{-1} x via one triangular solve.
    pub fn quadratic_form_inv(&self, x: ArrayView1<'_, f64>) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: x.len(),
            });
        }
        let mut y = x.to_owned();
        forward_substitute(&self.chol, y.view_mut());
        Ok(y.iter().map(|v| v * v).sum())
    }

    /// All quadratic forms x_i^T M^{-1} x_i for the rows of `data`.
    pub fn quadratic_forms(&self, data: &DataSample) -> Result<Array1<f64>> {
        if data.p() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: data.p(),
            });
        }
        // Solve L Y = X^T once; column sums of squares give the forms.
        let mut y = data.rows().t().to_owned();
        let p = self.dim();
        for i in 0..p {
            let (above, mut below) = y.view_mut().split_at(Axis(0), i);
            let mut row_i = below.row_mut(0);
            for k in 0..i {
                let lik = self.chol[[i, k]];
                row_i.zip_mut_with(&above.row(k), |r, a| *r -= lik * a);
            }
            let lii = self.chol[[i, i]];
            row_i.mapv_inplace(|v| v / lii);
        }
        Ok(y.map_axis(Axis(0), |col| col.iter().map(|v| v * v).sum()))
    }
}

fn forward_substitute(l: &Array2<f64>, mut y: ndarray::ArrayViewMut1<'_, f64>) {
    let p = l.nrows();
    for i in 0..p {
        let mut s = y[i];
        for k in 0..i {
            s -= l[[i, k]] * y[k];
        }
        y[i] = s / l[[i, i]];
    }
}

fn cholesky_lower(m: &Array2<f64>) -> Option<Array2<f64>> {
    let p = m.nrows();
    let mut l = Array2::<f64>::zeros((p, p));
    for i in 0..p {
        for j in 0..=i {
            let mut s = m[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return None;
                }
                l[[i, j]] = s.sqrt();
            } else {
                l[[i, j]] = s / l[[j, j]];
            }
        }
    }
    Some(l)
}

/// Centered observations, one per row; the layer standing assumption n > p
/// is enforced at construction.
#[derive(Debug, Clone)]
pub struct DataSample {
    rows: Array2<f64>,
}

impl DataSample {
    pub fn new(rows: Array2<f64>) -> Result<Self> {
        let (n, p) = rows.dim();
        if p == 0 || n <= p {
            return Err(Error::SampleTooSmall { n, p });
        }
        if rows.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { rows })
    }

    pub fn n(&self) -> usize {
        self.rows.nrows()
    }

    pub fn p(&self) -> usize {
        self.rows.ncols()
    }

    pub fn rows(&self) -> &Array2<f64> {
        &self.rows
    }
}

/// Convergence record of a fixed-point solve.
#[derive(Debug, Clone, Copy)]
pub struct SolveReport {
    pub iterations: usize,
    pub final_relative_change: f64,
    pub converged: bool,
}

/// Sample covariance matrix S = (1/n) sum x_i x_i^T.
pub fn scm(data: &DataSample) -> Result<ScatterMatrix> {
    let n = data.n() as f64;
    let s = data.rows().t().dot(data.rows()) / n;
    ScatterMatrix::from_symmetric(s)
}

/// Solve the M-estimating equation
/// M = (1/n) sum u(x_i^T M^{-1} x_i) x_i x_i^T
/// by fixed-point iteration started at the sample covariance matrix.
///
/// Stops when the relative Frobenius change drops to `tol`; if `max_iter`
/// is exhausted first the last iterate is still returned with
/// `converged = false`. An iterate that loses positive definiteness is a
/// hard error. An adaptive t weight is resolved from the data before
/// iterating.
pub fn m_estimate(
    data: &DataSample,
    weight: &WeightSpec,
    tol: f64,
    max_iter: usize,
) -> Result<(ScatterMatrix, SolveReport)> {
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tolerance must be > 0, got {tol}")));
    }
    if weight.dim() != data.p() {
        return Err(Error::DimensionMismatch {
            expected: data.p(),
            actual: weight.dim(),
        });
    }
    let weight = if weight.is_adaptive() {
        weight.with_dof(estimate_t_dof(data))?
    } else {
        *weight
    };

    let x = data.rows();
    let (n, p) = (data.n(), data.p());
    let nf = n as f64;

    let mut current = match scm(data) {
        Ok(s) => s,
        // Degenerate start: fall back to the identity at the sample scale.
        Err(Error::NotPositiveDefinite) => {
            let scale = x.iter().map(|v| v * v).sum::<f64>() / (nf * p as f64);
            ScatterMatrix::from_symmetric(Array2::eye(p) * scale.max(1e-300))?
        }
        Err(e) => return Err(e),
    };

    // Reused buffers for the hot loop: xt is X^T in standard layout, y the
    // triangular-solve workspace, weighted the row-scaled copy of X.
    let xt = x.t().to_owned();
    let mut y = Array2::<f64>::zeros((p, n));
    let mut forms = vec![0.0_f64; n];
    let mut weighted = Array2::<f64>::zeros((n, p));

    let mut last_rel = f64::INFINITY;
    for iteration in 1..=max_iter {
        quadratic_forms_into(&current, &xt, &mut y, &mut forms);
        weighted.assign(x);
        for (j, mut row) in weighted.rows_mut().into_iter().enumerate() {
            let w = weight.u(forms[j]);
            row.mapv_inplace(|v| v * w);
        }
        let next = x.t().dot(&weighted) / nf;

        let denom = current.frobenius_norm_sq().sqrt();
        let rel = frob_distance(&next, current.matrix()) / denom;

        current = ScatterMatrix::from_symmetric(next).map_err(|e| match e {
            Error::NotPositiveDefinite => Error::SingularIterate,
            other => other,
        })?;
        last_rel = rel;
        if rel <= tol {
            return Ok((
                current,
                SolveReport {
                    iterations: iteration,
                    final_relative_change: rel,
                    converged: true,
                },
            ));
        }
    }
    Ok((
        current,
        SolveReport {
            iterations: max_iter,
            final_relative_change: last_rel,
            converged: false,
        },
    ))
}

/// Quadratic forms x_i^T M^{-1} x_i for all observations at once: solve
/// L Y = X^T in place over the preallocated workspace and accumulate column
/// sums of squares. Raw-slice arithmetic keeps this loop vectorizable.
fn quadratic_forms_into(
    m: &ScatterMatrix,
    xt: &Array2<f64>,
    y: &mut Array2<f64>,
    forms: &mut [f64],
) {
    let p = m.dim();
    let n = forms.len();
    y.assign(xt);
    let l = m
        .cholesky_lower()
        .as_slice()
        .expect("cholesky factor is contiguous");
    let ys = y.as_slice_mut().expect("workspace is contiguous");
    for i in 0..p {
        let (head, tail) = ys.split_at_mut(i * n);
        let row_i = &mut tail[..n];
        for k in 0..i {
            let lik = l[i * p + k];
            let row_k = &head[k * n..(k + 1) * n];
            for j in 0..n {
                row_i[j] -= lik * row_k[j];
            }
        }
        let inv = 1.0 / l[i * p + i];
        for v in row_i.iter_mut() {
            *v *= inv;
        }
    }
    forms.fill(0.0);
    for i in 0..p {
        let row = &ys[i * n..(i + 1) * n];
        for j in 0..n {
            forms[j] += row[j] * row[j];
        }
    }
}

fn frob_distance(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Eigenvalue shrinkage toward the grand mean:
/// beta * M + (1 - beta) * (tr M / p) * I. Preserves the trace.
pub fn shrink(m: &ScatterMatrix, beta: f64) -> Result<ScatterMatrix> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::Domain(format!(
            "shrinkage parameter must lie in [0, 1], got {beta}"
        )));
    }
    let p = m.dim();
    let mean_eig = m.trace() / p as f64;
    let mut out = m.matrix() * beta;
    for i in 0..p {
        out[[i, i]] += (1.0 - beta) * mean_eig;
    }
    ScatterMatrix::from_symmetric(out)
}

/// Average marginal excess kurtosis divided by 3; a moment estimate of the
/// elliptical kurtosis, shared by the kurtosis plug-in and the adaptive
/// t-dof rule.
pub(crate) fn mean_marginal_excess_kurtosis(data: &DataSample) -> f64 {
    let n = data.n() as f64;
    let p = data.p();
    let mut acc = 0.0;
    for col in data.rows().columns() {
        let mean = col.sum() / n;
        let mut m2 = 0.0;
        let mut m4 = 0.0;
        for &v in col {
            let d = v - mean;
            m2 += d * d;
            m4 += d * d * d * d;
        }
        m2 /= n;
        m4 /= n;
        if m2 > 0.0 {
            acc += m4 / (m2 * m2) - 3.0;
        }
    }
    acc / (3.0 * p as f64)
}

/// Estimate the t-weight degrees of freedom by inverting the elliptical
/// kurtosis relation kappa = 2 / (nu - 4); Gaussian-looking data caps at
/// 1000 and the result is clipped to [2.5, 1000].
pub fn estimate_t_dof(data: &DataSample) -> f64 {
    let kappa = mean_marginal_excess_kurtosis(data);
    let nu = if kappa > 0.0 { 2.0 / kappa + 4.0 } else { 1000.0 };
    nu.clamp(2.5, 1000.0)
}
