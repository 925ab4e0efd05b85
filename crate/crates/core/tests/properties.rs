//! Property tests for the structural invariants: quantile round-trips,
//! weight-function monotonicity, shrinkage-parameter range and identity,
//! and trace preservation of the shrinkage map.

use ndarray::Array2;
use proptest::prelude::*;

use shrinkm::mestimator::{shrink, ScatterMatrix};
use shrinkm::shrinkage::{beta_app, beta_gauss};
use shrinkm::specialfn::{chi2_cdf, chi2_quantile};
use shrinkm::weights::WeightSpec;

fn weight_spec_strategy(p: usize) -> impl Strategy<Value = WeightSpec> {
    prop_oneof![
        Just(WeightSpec::gaussian(p)),
        (0.05..0.95f64).prop_map(move |q| WeightSpec::huber(p, q).unwrap()),
        (0.5..50.0f64).prop_map(move |nu| WeightSpec::t_mle(p, nu).unwrap()),
    ]
}

/// Deterministic pseudo-random SPD matrix from integer noise.
fn spd_from_seed(p: usize, seed: u64) -> ScatterMatrix {
    let mut state = seed | 1;
    let mut next = || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    let mut a = Array2::<f64>::zeros((p, p));
    for v in a.iter_mut() {
        *v = next();
    }
    let m = a.t().dot(&a) + Array2::<f64>::eye(p) * 0.3;
    ScatterMatrix::from_symmetric(m).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn chi2_quantile_round_trips(dof in 1u32..200, q in 0.001f64..0.999) {
        let x = chi2_quantile(dof, q).unwrap();
        let back = chi2_cdf(dof, x).unwrap();
        prop_assert!((back - q).abs() <= 1e-10, "dof={dof} q={q} back={back}");
    }

    #[test]
    fn chi2_cdf_is_monotone(dof in 1u32..150, a in 0.0f64..400.0, b in 0.0f64..400.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(chi2_cdf(dof, lo).unwrap() <= chi2_cdf(dof, hi).unwrap() + 1e-15);
    }

    #[test]
    fn weight_monotonicity(
        spec in weight_spec_strategy(12),
        a in 0.0f64..1.0e6,
        b in 0.0f64..1.0e6,
    ) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(spec.u(lo) >= spec.u(hi) - 1e-12, "u not non-increasing for {spec:?}");
        prop_assert!(spec.psi(lo) <= spec.psi(hi) + 1e-9, "psi not nondecreasing for {spec:?}");
    }

    #[test]
    fn beta_formulas_range_and_identity(
        p in 3usize..120,
        extra_n in 1usize..800,
        gamma_frac in 0.0f64..1.0,
        kappa_frac in 0.0f64..1.0,
    ) {
        let n = p + extra_n;
        let gamma = 1.0 + gamma_frac * (p as f64 - 1.0);
        let floor = -2.0 / (p as f64 + 2.0);
        let kappa = floor + 1e-6 + kappa_frac * (8.0 - floor);
        let bg = beta_gauss(gamma, kappa, n, p).unwrap();
        let ba = beta_app(gamma, 1.0 + kappa, n, p).unwrap();
        prop_assert!((0.0..1.0).contains(&bg));
        prop_assert!((0.0..1.0).contains(&ba));
        let scale = bg.abs().max(ba.abs());
        if scale > 0.0 {
            prop_assert!((bg - ba).abs() / scale <= 1e-12);
        }
    }

    #[test]
    fn shrink_preserves_trace_and_reduces_sphericity(seed in 1u64..10_000, beta in 0.0f64..1.0) {
        let m = spd_from_seed(6, seed);
        let shrunk = shrink(&m, beta).unwrap();
        let rel = ((shrunk.trace() - m.trace()) / m.trace()).abs();
        prop_assert!(rel <= 1e-12, "trace drift {rel}");
        prop_assert!(shrunk.sphericity() <= m.sphericity() + 1e-12);
        prop_assert!(shrunk.sphericity() >= 1.0 - 1e-12);
    }
}
