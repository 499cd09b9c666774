use proptest::prelude::*;

use tfspde::bernstein::BernsteinSpec;
use tfspde::config::ExperimentConfig;
use tfspde::fit::loglog_regression;
use tfspde::grid::{Field, SpectralGrid};
use tfspde::harmonic::DyadicBank;
use tfspde::kernels::{kernel_grid, symbol_s, KernelOrder};
use tfspde::mittag_leffler::{MLParams, MittagLeffler};
use tfspde::noise::{sample_cloud, LevyMeasureSpec, Window};
use tfspde::solver::truncate;
use tfspde::special::gamma_fn;

fn phi_strategy() -> impl Strategy<Value = BernsteinSpec> {
    prop_oneof![
        (0.05f64..=1.0).prop_map(|s| BernsteinSpec::power(s).unwrap()),
        (0.1f64..=1.0, 0.2f64..5.0).prop_map(|(s, c)| BernsteinSpec::log_power(s, c).unwrap()),
        (0.1f64..0.9, 0.1f64..3.0).prop_map(|(s, w)| BernsteinSpec::mixture(&[(1.0, s), (w, 1.0)]).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn bernstein_increasing_concave_and_invertible(phi in phi_strategy(), x in 1e-3f64..1e3) {
        let (a, b, c) = (phi.eval(x).unwrap(), phi.eval(2.0 * x).unwrap(), phi.eval(3.0 * x).unwrap());
        prop_assert!(a > 0.0 && b > a && c > b);
        prop_assert!(b - a >= c - b - 1e-12 * c);
        let back = phi.inverse(a).unwrap();
        prop_assert!((back - x).abs() <= 1e-8 * x, "{back} vs {x}");
    }

    #[test]
    fn mittag_leffler_completely_monotone_on_negative_axis(
        alpha in 0.1f64..=1.0,
        extra in 0.0f64..1.0,
        x in 0.0f64..50.0,
        h in 0.01f64..5.0,
    ) {
        let ml = MittagLeffler::new(MLParams::new(alpha, alpha + extra).unwrap()).unwrap();
        let (u, v) = (ml.eval(-x).unwrap(), ml.eval(-x - h).unwrap());
        prop_assert!(v > 0.0);
        prop_assert!(v <= u * (1.0 + 1e-12), "E(-{x}) = {u}, E(-{}) = {v}", x + h);
        prop_assert!(u <= ml.eval(0.0).unwrap() * (1.0 + 1e-12));
    }

    #[test]
    fn probability_symbol_is_a_contraction(
        alpha in 0.1f64..0.95,
        t in 1e-3f64..10.0,
        xi_sq in 0.0f64..1e4,
        phi in phi_strategy(),
    ) {
        let k = KernelOrder::new(alpha, alpha).unwrap();
        let s0 = symbol_s(k, t, 0.0, &phi).unwrap();
        let s = symbol_s(k, t, xi_sq, &phi).unwrap();
        prop_assert!((s0 - 1.0).abs() < 1e-14);
        prop_assert!(s > 0.0 && s <= 1.0 + 1e-14);
    }

    #[test]
    fn kernel_mass_matches_time_power(
        alpha in 0.1f64..0.95,
        gap in 0.0f64..1.0,
        t in 0.05f64..2.0,
        phi in phi_strategy(),
    ) {
        let sigma = alpha + gap * (1.0 - alpha);
        let grid = SpectralGrid::new(1, 128, 8.0).unwrap();
        let k = kernel_grid(KernelOrder::new(alpha, sigma).unwrap(), t, &grid, &phi, None).unwrap();
        let expected = t.powf(alpha - sigma) / gamma_fn(1.0 + alpha - sigma);
        prop_assert!((k.mass() - expected).abs() <= 1e-10 * expected.max(1.0));
    }

    #[test]
    fn truncation_clamps_the_norm(
        values in prop::collection::vec(-20.0f64..20.0, 32),
        k in 0.1f64..30.0,
        p in 1.0f64..4.0,
    ) {
        let grid = SpectralGrid::new(1, 32, 2.0).unwrap();
        let f = Field::new(grid, values).unwrap();
        let g = truncate(&f, k, p);
        let norm = f.lp_norm(p);
        prop_assert!(g.lp_norm(p) <= k * (1.0 + 1e-12) || norm <= k);
        if norm <= k {
            prop_assert_eq!(g.values(), f.values());
        } else {
            prop_assert!((g.lp_norm(p) - k).abs() <= 1e-10 * k);
        }
    }

    #[test]
    fn spectrum_round_trip(values in prop::collection::vec(-5.0f64..5.0, 256)) {
        let grid = SpectralGrid::new(2, 16, 1.5).unwrap();
        let f = Field::new(grid, values).unwrap();
        let back = Field::from_spectrum(grid, f.spectrum());
        prop_assert!(back.sub(&f).unwrap().max_abs() < 1e-13);
        let id = f.apply_multiplier(&vec![1.0; grid.len()]).unwrap();
        prop_assert!(id.sub(&f).unwrap().max_abs() < 1e-13);
    }

    #[test]
    fn dyadic_bank_partitions_unity(n_pow in 4u32..10, l in 0.5f64..40.0, d in 1usize..=2) {
        let n = if d == 2 { 1usize << n_pow.min(6) } else { 1usize << n_pow };
        let bank = DyadicBank::new(SpectralGrid::new(d, n, l).unwrap());
        prop_assert!(bank.partition_defect() < 1e-12);
    }

    #[test]
    fn poisson_cloud_is_reproducible_and_inside(seed in any::<u64>(), rate in 0.5f64..40.0) {
        let spec = LevyMeasureSpec::gaussian(rate, 1.0, 1).unwrap();
        let window = Window::new(2.0, vec![-1.0], vec![3.0]).unwrap();
        let a = sample_cloud(&spec, &window, seed).unwrap();
        let b = sample_cloud(&spec, &window, seed).unwrap();
        prop_assert_eq!(&a.atoms, &b.atoms);
        prop_assert!(a.check_inside().is_ok());
        prop_assert!(a.atoms.windows(2).all(|w| w[0].s <= w[1].s));
    }

    #[test]
    fn regression_recovers_power_laws(slope in -3.0f64..3.0, c in 0.01f64..100.0) {
        let samples: Vec<(f64, f64)> = (0..8).map(|k| {
            let t = 2f64.powi(-k);
            (t, c * t.powf(slope))
        }).collect();
        let (s, icpt, r2) = loglog_regression(&samples).unwrap();
        prop_assert!((s - slope).abs() < 1e-10);
        prop_assert!((icpt - c.ln()).abs() < 1e-9);
        prop_assert!(r2 > 1.0 - 1e-12 || slope.abs() < 1e-12);
    }

    #[test]
    fn config_round_trips_through_toml(seed in any::<u32>(), n_pow in 4u32..9, paths in 1usize..100) {
        let mut cfg = ExperimentConfig::preset();
        cfg.seed = seed as u64;
        cfg.grid.n = 1 << n_pow;
        cfg.solver.paths = paths;
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml()).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.hash(), cfg.hash());
    }
}
