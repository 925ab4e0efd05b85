//! Chi-squared CDF and quantile built on the regularized incomplete gamma
//! function.
//!
//! The incomplete gamma function is evaluated by its power series for
//! `x < a + 1` and by a continued fraction otherwise, iterating until the
//! relative term falls below 1e-15 (capped at 500 terms). The quantile uses
//! a safeguarded Newton iteration started from the Wilson-Hilferty
//! approximation, falling back to bisection whenever a step leaves the
//! bracketing interval.

use crate::error::{Error, Result};

const MAX_SERIES_TERMS: usize = 500;
const SERIES_EPS: f64 = 1e-15;

/// Natural log of the gamma function, Lanczos approximation (g = 7, n = 9).
///
/// Accurate to roughly 1e-14 relative error over the positive reals;
/// arguments below 0.5 go through the reflection formula.
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEFFS: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];

    if x < 0.5 {
        // Reflection: Γ(x)Γ(1-x) = π / sin(πx)
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }

    let z = x - 1.0;
    let mut acc = COEFFS[0];
    for (i, &c) in COEFFS.iter().enumerate().skip(1) {
        acc += c / (z + i as f64);
    }
    let t = z + G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (z + 0.5) * t.ln() - t + acc.ln()
}

/// Regularized lower incomplete gamma function P(a, x).
///
/// Absolute error is below 1e-12 over the parameter range used by the
/// chi-squared layer (a up to a few hundred).
pub fn reg_lower_gamma(a: f64, x: f64) -> Result<f64> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::Domain(format!(
            "reg_lower_gamma requires a > 0, got a = {a}"
        )));
    }
    if !(x >= 0.0) {
        return Err(Error::Domain(format!(
            "reg_lower_gamma requires x >= 0, got x = {x}"
        )));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(1.0);
    }
    if x < a + 1.0 {
        Ok(lower_gamma_series(a, x))
    } else {
        Ok(1.0 - upper_gamma_cf(a, x))
    }
}

/// Series expansion of P(a, x), converges fast for x < a + 1.
fn lower_gamma_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut term = 1.0 / a;
    let mut sum = term;
    for _ in 0..MAX_SERIES_TERMS {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * SERIES_EPS {
            break;
        }
    }
    let log_prefix = a * x.ln() - x - ln_gamma(a);
    (sum.ln() + log_prefix).exp().clamp(0.0, 1.0)
}

/// Continued fraction for Q(a, x) = 1 - P(a, x), modified Lentz algorithm.
fn upper_gamma_cf(a: f64, x: f64) -> f64 {
    const FPMIN: f64 = f64::MIN_POSITIVE / f64::EPSILON;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / FPMIN;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..=MAX_SERIES_TERMS {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = b + an / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < SERIES_EPS {
            break;
        }
    }
    let log_prefix = a * x.ln() - x - ln_gamma(a);
    (h.ln() + log_prefix).exp().clamp(0.0, 1.0)
}

/// Chi-squared distribution with `dof` degrees of freedom.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChiSquared {
    dof: u32,
}

impl ChiSquared {
    /// Requires `dof >= 1`.
    pub fn new(dof: u32) -> Result<Self> {
        if dof == 0 {
            return Err(Error::Domain(
                "chi-squared degrees of freedom must be >= 1".to_string(),
            ));
        }
        Ok(Self { dof })
    }

    pub fn dof(&self) -> u32 {
        self.dof
    }

    /// CDF at `x`: P(dof/2, x/2).
    pub fn cdf(&self, x: f64) -> Result<f64> {
        if !(x >= 0.0) {
            return Err(Error::Domain(format!(
                "chi-squared CDF requires x >= 0, got x = {x}"
            )));
        }
        reg_lower_gamma(f64::from(self.dof) / 2.0, x / 2.0)
    }

    /// Density at `x` (zero for x <= 0).
    pub fn pdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let k = f64::from(self.dof) / 2.0;
        ((k - 1.0) * x.ln() - x / 2.0 - k * 2.0_f64.ln() - ln_gamma(k)).exp()
    }

    /// Quantile at probability `q` in (0, 1).
    ///
    /// Round-trips through the CDF to within 1e-10 in probability units.
    pub fn quantile(&self, q: f64) -> Result<f64> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::Domain(format!(
                "chi-squared quantile requires 0 < q < 1, got q = {q}"
            )));
        }
        let k = f64::from(self.dof);

        // Wilson-Hilferty starting point.
        let z = standard_normal_quantile(q);
        let d = 2.0 / (9.0 * k);
        let v = 1.0 - d + z * d.sqrt();
        let mut x = if v > 0.0 { k * v * v * v } else { k * 1e-3 };

        // Bracket the root; the initial upper bound covers all moderate q and
        // is doubled until the CDF passes q.
        let mut lo = 0.0_f64;
        let mut hi = k + 20.0 * (2.0 * k).sqrt();
        for _ in 0..200 {
            if self.cdf(hi)? >= q {
                break;
            }
            hi *= 2.0;
        }
        if !(x > lo && x < hi) {
            x = 0.5 * (lo + hi);
        }

        for _ in 0..200 {
            let f = self.cdf(x)? - q;
            if f.abs() <= 1e-13 {
                break;
            }
            if f > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let slope = self.pdf(x);
            let newton = x - f / slope;
            x = if slope > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if hi - lo <= f64::EPSILON * hi.max(1.0) {
                break;
            }
        }
        Ok(x)
    }
}

/// CDF of the chi-squared distribution with `dof` degrees of freedom.
pub fn chi2_cdf(dof: u32, x: f64) -> Result<f64> {
    ChiSquared::new(dof)?.cdf(x)
}

/// Quantile of the chi-squared distribution with `dof` degrees of freedom.
pub fn chi2_quantile(dof: u32, q: f64) -> Result<f64> {
    ChiSquared::new(dof)?.quantile(q)
}

/// Standard normal quantile (Acklam's rational approximation, ~1e-9).
///
/// Only used to seed the chi-squared Newton iteration, so the modest
/// accuracy is immaterial.
fn standard_normal_quantile(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0);
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_690e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.02425;

    if p < P_LOW {
        let t = (-2.0 * p.ln()).sqrt();
        (((((C[0] * t + C[1]) * t + C[2]) * t + C[3]) * t + C[4]) * t + C[5])
            / ((((D[0] * t + D[1]) * t + D[2]) * t + D[3]) * t + 1.0)
    } else if p <= 1.0 - P_LOW {
        let u = p - 0.5;
        let t = u * u;
        (((((A[0] * t + A[1]) * t + A[2]) * t + A[3]) * t + A[4]) * t + A[5]) * u
            / (((((B[0] * t + B[1]) * t + B[2]) * t + B[3]) * t + B[4]) * t + 1.0)
    } else {
        let t = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * t + C[1]) * t + C[2]) * t + C[3]) * t + C[4]) * t + C[5])
            / ((((D[0] * t + D[1]) * t + D[2]) * t + D[3]) * t + 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Composite Simpson rule over [a, b]; test-side oracle, independent of
    /// the incomplete-gamma route used by the implementation.
    fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
        let n = panels * 2;
        let h = (b - a) / n as f64;
        let mut acc = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(a + i as f64 * h);
        }
        acc * h / 3.0
    }

    /// Chi-squared density with the normalizing constant built from exact
    /// factorials, so the oracle does not share the Lanczos code path.
    fn chi2_pdf_oracle(dof: u32, x: f64) -> f64 {
        assert!(dof % 2 == 0, "oracle only handles even dof");
        let k = f64::from(dof) / 2.0;
        // ln Γ(k) = ln (k-1)! for integer k
        let mut ln_fact = 0.0;
        for i in 2..dof / 2 {
            ln_fact += f64::from(i).ln();
        }
        ((k - 1.0) * x.ln() - x / 2.0 - k * 2.0_f64.ln() - ln_fact).exp()
    }

    #[test]
    fn ln_gamma_known_values() {
        assert_abs_diff_eq!(ln_gamma(1.0), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(ln_gamma(5.0), 24.0_f64.ln(), epsilon = 1e-13);
        assert_abs_diff_eq!(
            ln_gamma(0.5),
            std::f64::consts::PI.sqrt().ln(),
            epsilon = 1e-14
        );
        // half-integer via recursion: Γ(20.5) = 19.5 * 18.5 * ... * 0.5 * Γ(0.5)
        let mut expect = std::f64::consts::PI.sqrt().ln();
        let mut v = 0.5_f64;
        while v < 20.0 {
            expect += v.ln();
            v += 1.0;
        }
        assert_abs_diff_eq!(ln_gamma(20.5), expect, epsilon = 1e-12);
    }

    #[test]
    fn reg_lower_gamma_edges() {
        assert_eq!(reg_lower_gamma(1.0, 0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(reg_lower_gamma(0.5, 50.0).unwrap(), 1.0, epsilon = 1e-12);
        // a = 1 is the unit exponential CDF: P(1, x) = 1 - exp(-x)
        let expect = 1.0 - (-1.0_f64).exp();
        assert_abs_diff_eq!(reg_lower_gamma(1.0, 1.0).unwrap(), expect, epsilon = 1e-13);
    }

    #[test]
    fn reg_lower_gamma_domain_errors() {
        assert!(reg_lower_gamma(0.0, 1.0).is_err());
        assert!(reg_lower_gamma(-1.0, 1.0).is_err());
        assert!(reg_lower_gamma(1.0, -0.5).is_err());
    }

    #[test]
    fn chi2_cdf_closed_forms() {
        assert_eq!(chi2_cdf(2, 0.0).unwrap(), 0.0);
        // chi-squared with 2 dof is exponential with mean 2
        let x = 2.0 * 2.0_f64.ln();
        assert_abs_diff_eq!(chi2_cdf(2, x).unwrap(), 0.5, epsilon = 1e-13);
        assert_abs_diff_eq!(
            chi2_cdf(2, 5.0).unwrap(),
            1.0 - (-2.5_f64).exp(),
            epsilon = 1e-13
        );
    }

    #[test]
    fn chi2_cdf_matches_quadrature_oracle() {
        // Independent oracle: Simpson quadrature of the chi2_40 density.
        let oracle = simpson(|t| chi2_pdf_oracle(40, t.max(1e-300)), 0.0, 44.16, 4000);
        assert_abs_diff_eq!(oracle, 0.699_823_073_802_321_4, epsilon = 1e-9);
        assert_abs_diff_eq!(chi2_cdf(40, 44.16).unwrap(), oracle, epsilon = 1e-10);
    }

    #[test]
    fn chi2_quantile_closed_form_and_oracle() {
        let q50 = chi2_quantile(2, 0.5).unwrap();
        assert_abs_diff_eq!(q50, 2.0 * 2.0_f64.ln(), epsilon = 1e-10);

        // Bisection against the quadrature oracle for dof = 40, q = 0.7.
        let cdf40 = |x: f64| simpson(|t| chi2_pdf_oracle(40, t.max(1e-300)), 0.0, x, 4000);
        let (mut lo, mut hi) = (30.0, 60.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if cdf40(mid) < 0.7 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let oracle = 0.5 * (lo + hi);
        assert_abs_diff_eq!(oracle, 44.164_866_652_43, epsilon = 1e-6);
        assert_abs_diff_eq!(chi2_quantile(40, 0.7).unwrap(), oracle, epsilon = 1e-6);
        assert_abs_diff_eq!(
            chi2_quantile(40, 0.7).unwrap(),
            44.164_866_652_43,
            epsilon = 1e-8
        );
    }

    #[test]
    fn chi2_quantile_round_trip() {
        for dof in [1u32, 2, 3, 5, 10, 20, 40, 75, 120, 200] {
            let mut q = 0.01;
            while q < 0.995 {
                let x = chi2_quantile(dof, q).unwrap();
                let back = chi2_cdf(dof, x).unwrap();
                assert!(
                    (back - q).abs() <= 1e-10,
                    "round-trip failed: dof={dof} q={q} x={x} back={back}"
                );
                q += 0.07;
            }
        }
    }

    #[test]
    fn chi2_cdf_monotone_in_x() {
        for dof in [1u32, 4, 40, 150] {
            let mut prev = 0.0;
            for i in 1..200 {
                let x = i as f64 * (f64::from(dof) * 3.0 + 10.0) / 200.0;
                let c = chi2_cdf(dof, x).unwrap();
                assert!(c >= prev, "CDF not nondecreasing at dof={dof} x={x}");
                prev = c;
            }
            assert!(prev > 0.99);
        }
    }

    #[test]
    fn chi2_median_below_mean() {
        // The chi-squared median lies just below the mean for dof >= 2.
        for dof in 2u32..=200 {
            let med = chi2_quantile(dof, 0.5).unwrap();
            let k = f64::from(dof);
            assert!(
                med > k - 1.0 && med < k,
                "median {med} outside ({}, {k}) for dof={dof}",
                k - 1.0
            );
        }
    }

    #[test]
    fn chi2_quantile_domain_errors() {
        assert!(chi2_quantile(0, 0.5).is_err());
        assert!(chi2_quantile(3, 0.0).is_err());
        assert!(chi2_quantile(3, 1.0).is_err());
        assert!(chi2_quantile(3, -0.2).is_err());
        assert!(chi2_cdf(3, -1.0).is_err());
    }
}
