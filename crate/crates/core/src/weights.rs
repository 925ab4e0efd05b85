//! Weight functions u(t) of the M-estimation family, their psi(t) = t u(t),
//! and the Huber consistency constant.
//!
//! A [`WeightSpec`] binds a weight family to the ambient dimension `p` at
//! construction so the Huber threshold and scaling, and the `p + nu` factor
//! of the t weight, are computed once.

use crate::error::{Error, Result};
use crate::specialfn::{chi2_cdf, chi2_quantile};

/// Degrees of freedom for the t weight: either fixed up front or resolved
/// from the data before the solver runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TDof {
    Fixed(f64),
    Adaptive,
}

/// Weight-function family tag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightKind {
    /// u(t) = 1 for all t; the M-estimator is the sample covariance matrix.
    Gaussian,
    /// Huber weight with threshold c^2 at the chi-squared(p) quantile `q`.
    Huber { q: f64 },
    /// t-MLE weight u(t) = (p + nu) / (nu + t).
    TMle { dof: TDof },
}

/// Huber threshold and Fisher-consistency scaling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HuberConstants {
    pub c_squared: f64,
    pub b: f64,
}

/// A weight function bound to an ambient dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightSpec {
    p: usize,
    kind: WeightKind,
    huber: Option<HuberConstants>,
}

impl WeightSpec {
    /// Gaussian weight: u(t) = 1.
    pub fn gaussian(p: usize) -> Self {
        Self {
            p,
            kind: WeightKind::Gaussian,
            huber: None,
        }
    }

    /// Huber weight with threshold quantile `q` in (0, 1); precomputes
    /// c^2 and b for dimension `p`.
    pub fn huber(p: usize, q: f64) -> Result<Self> {
        let c_squared = huber_c_squared(p, q)?;
        let b = huber_b(p, c_squared)?;
        Ok(Self {
            p,
            kind: WeightKind::Huber { q },
            huber: Some(HuberConstants { c_squared, b }),
        })
    }

    /// t weight with fixed degrees of freedom `dof > 0`.
    pub fn t_mle(p: usize, dof: f64) -> Result<Self> {
        if !(dof > 0.0) || !dof.is_finite() {
            return Err(Error::Domain(format!(
                "t weight requires dof > 0, got {dof}"
            )));
        }
        Ok(Self {
            p,
            kind: WeightKind::TMle {
                dof: TDof::Fixed(dof),
            },
            huber: None,
        })
    }

    /// t weight whose degrees of freedom will be estimated from the data.
    pub fn t_adaptive(p: usize) -> Self {
        Self {
            p,
            kind: WeightKind::TMle { dof: TDof::Adaptive },
            huber: None,
        }
    }

    /// Replace an adaptive t dof with a concrete value.
    pub fn with_dof(self, dof: f64) -> Result<Self> {
        match self.kind {
            WeightKind::TMle { .. } => Self::t_mle(self.p, dof),
            _ => Ok(self),
        }
    }

    pub fn is_adaptive(&self) -> bool {
        matches!(
            self.kind,
            WeightKind::TMle {
                dof: TDof::Adaptive
            }
        )
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    pub fn kind(&self) -> WeightKind {
        self.kind
    }

    pub fn huber_constants(&self) -> Option<HuberConstants> {
        self.huber
    }

    /// Weight u(t) at a quadratic form t >= 0.
    ///
    /// Panics if the t dof is still adaptive; resolution is the caller's
    /// contract.
    pub fn u(&self, t: f64) -> f64 {
        debug_assert!(t >= 0.0);
        match self.kind {
            WeightKind::Gaussian => 1.0,
            WeightKind::Huber { .. } => {
                let HuberConstants { c_squared, b } = self.huber.expect("huber constants");
                // continuous extension at t = 0
                if t <= c_squared {
                    1.0 / b
                } else {
                    c_squared / (b * t)
                }
            }
            WeightKind::TMle { dof } => {
                let nu = resolved(dof);
                (self.p as f64 + nu) / (nu + t)
            }
        }
    }

    /// psi(t) = t u(t).
    pub fn psi(&self, t: f64) -> f64 {
        debug_assert!(t >= 0.0);
        match self.kind {
            WeightKind::Gaussian => t,
            WeightKind::Huber { .. } => {
                let HuberConstants { c_squared, b } = self.huber.expect("huber constants");
                t.min(c_squared) / b
            }
            WeightKind::TMle { dof } => {
                let nu = resolved(dof);
                // (p + nu) t / (nu + t), written to stay finite as t -> inf
                if t == 0.0 {
                    0.0
                } else {
                    (self.p as f64 + nu) / (nu / t + 1.0)
                }
            }
        }
    }
}

fn resolved(dof: TDof) -> f64 {
    match dof {
        TDof::Fixed(nu) => nu,
        TDof::Adaptive => panic!("adaptive t dof must be resolved before evaluating the weight"),
    }
}

/// Huber threshold c^2 = F^{-1}_{chi^2_p}(q).
pub fn huber_c_squared(p: usize, q: f64) -> Result<f64> {
    let dof = u32::try_from(p)
        .map_err(|_| Error::Domain(format!("dimension {p} out of range for chi-squared")))?;
    chi2_quantile(dof, q)
}

/// Fisher-consistency scaling b = F_{chi^2_{p+2}}(c^2) + c^2 (1 - F_{chi^2_p}(c^2)) / p,
/// which makes E[psi(t)] = p for t ~ chi^2_p.
pub fn huber_b(p: usize, c_squared: f64) -> Result<f64> {
    if p == 0 {
        return Err(Error::Domain("dimension must be >= 1".to_string()));
    }
    if !(c_squared > 0.0) {
        return Err(Error::Domain(format!(
            "huber_b requires c_squared > 0, got {c_squared}"
        )));
    }
    let p32 = u32::try_from(p)
        .map_err(|_| Error::Domain(format!("dimension {p} out of range for chi-squared")))?;
    let head = chi2_cdf(p32 + 2, c_squared)?;
    let tail = 1.0 - chi2_cdf(p32, c_squared)?;
    Ok(head + c_squared * tail / p as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;
    use rand_distr::{ChiSquared as ChiSquaredDistr, Distribution};

    #[test]
    fn huber_threshold_reference_values() {
        // frozen from the chi-squared quantile oracle in specialfn
        assert_relative_eq!(
            huber_c_squared(40, 0.7).unwrap(),
            44.164_866_652_43,
            max_relative = 1e-9
        );
        assert_abs_diff_eq!(
            huber_c_squared(2, 0.5).unwrap(),
            2.0 * 2.0_f64.ln(),
            epsilon = 1e-10
        );
        // monotone in q, growing without bound near 1
        let a = huber_c_squared(1, 0.9).unwrap();
        let b = huber_c_squared(1, 0.99).unwrap();
        let c = huber_c_squared(1, 0.999999).unwrap();
        assert!(a < b && b < c);
        assert!(c > 20.0);
    }

    #[test]
    fn huber_b_limits() {
        // c^2 -> inf: both CDF terms saturate and b -> 1 (Gaussian weight)
        let b = huber_b(40, 1.0e6).unwrap();
        assert_abs_diff_eq!(b, 1.0, epsilon = 1e-12);
        // c^2 -> 0+: b ~ c^2 / p
        let c2 = 1.0e-8;
        let b = huber_b(5, c2).unwrap();
        assert_relative_eq!(b, c2 / 5.0, max_relative = 1e-3);
    }

    #[test]
    fn huber_b_reference_value_and_quadrature_identity() {
        // b = E[min(t, c^2)] / p for t ~ chi^2_p, checked by Simpson quadrature
        // of the chi^2_40 density (independent of the CDF route).
        let c2 = 44.164_866_652_43;
        let b = huber_b(40, c2).unwrap();
        assert_relative_eq!(b, 0.950_969_875_461_67, max_relative = 1e-9);

        let pdf = |x: f64| {
            let k = 20.0;
            let mut ln_fact = 0.0; // ln 19!
            for i in 2..20 {
                ln_fact += f64::from(i).ln();
            }
            ((k - 1.0) * x.max(1e-300).ln() - x / 2.0 - k * 2.0_f64.ln() - ln_fact).exp()
        };
        let n = 40_000;
        let (a, bb) = (0.0, 400.0);
        let h = (bb - a) / n as f64;
        let mut acc = 0.0;
        for i in 0..=n {
            let x = a + i as f64 * h;
            let w = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc += w * x.min(c2) * pdf(x);
        }
        let quad = acc * h / 3.0 / 40.0;
        assert_relative_eq!(b, quad, max_relative = 1e-8);
    }

    #[test]
    fn weight_values_by_family() {
        let g = WeightSpec::gaussian(40);
        assert_eq!(g.u(0.0), 1.0);
        assert_eq!(g.u(123.4), 1.0);
        assert_eq!(g.psi(7.0), 7.0);

        let t = WeightSpec::t_mle(40, 5.0).unwrap();
        assert_abs_diff_eq!(t.u(0.0), 9.0, epsilon = 1e-15); // (40 + 5) / 5
        assert_abs_diff_eq!(t.psi(1e308), 45.0, epsilon = 1e-9); // -> p + nu
        assert_eq!(t.psi(0.0), 0.0);

        let h = WeightSpec::huber(40, 0.7).unwrap();
        let HuberConstants { c_squared, b } = h.huber_constants().unwrap();
        assert_abs_diff_eq!(h.u(0.0), 1.0 / b, epsilon = 1e-15);
        assert_abs_diff_eq!(h.u(0.5 * c_squared), 1.0 / b, epsilon = 1e-15);
        assert_abs_diff_eq!(h.u(2.0 * c_squared), 0.5 / b, epsilon = 1e-15);
        // psi plateaus at c^2 / b
        assert_abs_diff_eq!(h.psi(c_squared), c_squared / b, epsilon = 1e-12);
        assert_abs_diff_eq!(h.psi(10.0 * c_squared), c_squared / b, epsilon = 1e-12);
    }

    #[test]
    fn u_nonincreasing_psi_nondecreasing_on_grid() {
        let specs = [
            WeightSpec::gaussian(12),
            WeightSpec::huber(12, 0.7).unwrap(),
            WeightSpec::huber(12, 0.3).unwrap(),
            WeightSpec::t_mle(12, 3.0).unwrap(),
            WeightSpec::t_mle(12, 100.0).unwrap(),
        ];
        for spec in specs {
            let mut t = 0.0_f64;
            let mut prev_u = spec.u(t);
            let mut prev_psi = spec.psi(t);
            while t < 1.0e6 {
                t = (t * 1.35).max(t + 1e-3);
                let (u, psi) = (spec.u(t), spec.psi(t));
                assert!(u <= prev_u + 1e-15, "u increased at t={t} for {spec:?}");
                assert!(
                    psi >= prev_psi - 1e-12,
                    "psi decreased at t={t} for {spec:?}"
                );
                prev_u = u;
                prev_psi = psi;
            }
        }
    }

    #[test]
    fn huber_degenerates_to_gaussian_as_q_tends_to_one() {
        // fixed bounded grid [0, 40]; q close enough to 1 that c^2 clears it
        let h = WeightSpec::huber(10, 0.999_999).unwrap();
        assert!(h.huber_constants().unwrap().c_squared > 40.0);
        let mut worst = 0.0_f64;
        let mut t = 0.0;
        while t <= 40.0 {
            worst = worst.max((h.u(t) - 1.0).abs());
            t += 0.5;
        }
        assert!(worst < 1e-4, "sup |u_H - 1| = {worst}");
    }

    #[test]
    fn huber_fisher_consistent_at_mvn() {
        // E[psi(t)] = p for t ~ chi^2_p is the sigma = 1 statement; Monte-Carlo
        // with a seeded chi-squared sampler.
        let p = 8;
        let spec = WeightSpec::huber(p, 0.7).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(901);
        let chi = ChiSquaredDistr::new(p as f64).unwrap();
        let n = 200_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let t: f64 = chi.sample(&mut rng);
            let v = spec.psi(t);
            sum += v;
            sumsq += v * v;
        }
        let mean = sum / n as f64;
        let se = ((sumsq / n as f64 - mean * mean) / n as f64).sqrt();
        assert!(
            (mean / p as f64 - 1.0).abs() <= 3.0 * se / p as f64,
            "E[psi]/p = {} not within 3 SE ({se}) of 1",
            mean / p as f64
        );
    }

    #[test]
    #[should_panic(expected = "adaptive t dof")]
    fn adaptive_dof_panics_unresolved() {
        WeightSpec::t_adaptive(5).u(1.0);
    }

    #[test]
    fn adaptive_dof_resolution() {
        let w = WeightSpec::t_adaptive(5);
        assert!(w.is_adaptive());
        let w = w.with_dof(7.5).unwrap();
        assert!(!w.is_adaptive());
        assert_abs_diff_eq!(w.u(0.0), 12.5 / 7.5, epsilon = 1e-15);
    }
}
