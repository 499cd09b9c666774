//! Acceptance suite. Runs every criterion in sequence and prints one line each.

use std::time::Instant;

use tfspde::config::ExperimentConfig;
use tfspde::experiments::{
    band_check, default_perturbation, kernel_mass_cases, l1_slope_cases, lp_slope_cases, mass_check_phis, ml_identities,
    noise_sweep, square_sweep, stopped_moment_doubling, Table,
};
use tfspde::kernels::{symbol_s, KernelOrder};
use tfspde::solver::{
    check_gate, contraction_sweep, sample_noises, self_convergence, InitialData, NonlinearitySpec, PointwiseMap,
    SolverConfig, SolverPlan,
};
use tfspde::special::gamma_fn;
use tfspde::Error;

type Outcome = tfspde::Result<(bool, String)>;

fn within(limit_s: f64, start: Instant) -> (bool, f64) {
    let s = start.elapsed().as_secs_f64();
    (s < limit_s, s)
}

fn ml_identities_hold() -> Outcome {
    let start = Instant::now();
    let mut table = Table::new("values", &["alpha", "beta", "z", "value", "method", "reference", "abs_err"]);
    let ids = ml_identities(&mut table)?;
    let (fast, secs) = within(1.0, start);
    let worst = ids.iter().find(|i| i.max_error > i.tolerance);
    let detail = ids.iter().map(|i| format!("{} {:.1e}", i.name, i.max_error)).collect::<Vec<_>>().join("; ");
    Ok((worst.is_none() && fast, format!("{detail}; {secs:.2} s")))
}

fn kernel_mass() -> Outcome {
    let cfg = ExperimentConfig::preset();
    let start = Instant::now();
    let cases = kernel_mass_cases(&cfg, &mass_check_phis())?;
    let (fast, secs) = within(10.0, start);
    let worst = cases.iter().map(|c| c.error).fold(0.0, f64::max);
    let complete = cases.len() == 3 * 2 * 3 * 2;
    Ok((
        worst <= 1e-6 && fast && complete,
        format!("{} cases, max error {worst:.2e}; {secs:.2} s", cases.len()),
    ))
}

fn l1_scaling() -> Outcome {
    let cases = l1_slope_cases(&ExperimentConfig::preset())?;
    let worst = cases.iter().map(|c| c.deviation).fold(0.0, f64::max);
    Ok((cases.len() == 6 && worst <= 0.05, format!("{} combos, max deviation {worst:.2e}", cases.len())))
}

fn lp_scaling() -> Outcome {
    let cases = lp_slope_cases(&ExperimentConfig::preset())?;
    let worst = cases.iter().map(|c| c.deviation).fold(0.0, f64::max);
    let detail = cases
        .iter()
        .map(|c| format!("d={} p={} {:.4}/{:.4}", c.d, c.p, c.slope, c.declared))
        .collect::<Vec<_>>()
        .join("; ");
    Ok((cases.len() == 3 && worst <= 0.10, format!("{detail}; max deviation {worst:.2e}")))
}

fn band_estimate() -> Outcome {
    let a = band_check(&ExperimentConfig::preset())?;
    let failed: Vec<_> = a.verdict.failed_checks().map(|c| c.name.clone()).collect();
    Ok((
        a.verdict.passed,
        format!("{} checks, max ratio {}, failed {failed:?}", a.verdict.checks.len(), a.verdict.summary["max_ratio"]),
    ))
}

fn square_function() -> Outcome {
    let r = square_sweep(&ExperimentConfig::preset(), 1)?;
    let spread_ok = r.ps.len() == 3 && r.spread.iter().all(|&s| s < 5.0);
    let samples = r.ratios.iter().map(|v| v.len()).min().unwrap_or(0);
    Ok((
        spread_ok && samples == 20 && r.fourier_gap <= 1e-6,
        format!("spreads {:?}, Fourier gap {:.1e}, {samples} samples", r.spread, r.fourier_gap),
    ))
}

fn compensated_isometry() -> Outcome {
    let cfg = ExperimentConfig::preset();
    let start = Instant::now();
    let (rows, _) = noise_sweep(&cfg, 1)?;
    let (fast, secs) = within(30.0, start);
    let mut ok = cfg.noise_check.realizations == 10_000;
    let mut worst_iso = 0.0f64;
    for r in &rows {
        if r.p == 2.0 {
            let z = (r.ratio - 1.0).abs() / r.ratio_se;
            worst_iso = worst_iso.max(z);
            ok &= z <= 5.0;
        } else {
            ok &= r.ratio.is_finite() && r.ratio <= r.constant * (1.0 + 3.0 * r.ratio_se / r.ratio);
        }
    }
    Ok((ok && fast, format!("{} rows, worst isometry {worst_iso:.2} SE; {secs:.1} s", rows.len())))
}

fn zero_noise_identities() -> Outcome {
    // g = 0: the initial term alone; a cosine is an eigenfunction with eigenvalue the symbol
    let mut cfg = SolverConfig::lipschitz_preset();
    cfg.initial = InitialData::Cosine { amp: 1.0, mode: vec![2] };
    let plan = SolverPlan::new(cfg.clone())?;
    let noise = plan.sample_noise(0)?;
    let path = plan.picard(&NonlinearitySpec::zero(), &noise)?;
    let order = KernelOrder::new(cfg.exponents.alpha, cfg.exponents.alpha)?;
    let xi = 2.0 * cfg.grid.dxi();
    let mut identity_err = 0.0f64;
    for (&t, w) in path.times.iter().zip(&path.fields) {
        let decay = if t == 0.0 { 1.0 } else { symbol_s(order, t, xi * xi, &cfg.phi)? };
        let expected = noise.w0.scaled(decay);
        identity_err = identity_err.max(w.sub(&expected)?.max_abs());
    }

    // g = c: spatially constant c t^α / Γ(1+α)
    let c = 1.5;
    let mut det = SolverConfig::deterministic_preset();
    det.n_t = 256;
    det.initial = InitialData::Zero;
    let alpha = det.exponents.alpha;
    let nonlin = NonlinearitySpec {
        g: PointwiseMap::Constant { c },
        ..NonlinearitySpec::zero()
    };
    let plan = SolverPlan::new(det.clone())?;
    let path = plan.picard(&nonlin, &plan.sample_noise(0)?)?;
    let mut constant_err = 0.0f64;
    for (&t, w) in path.times.iter().zip(&path.fields) {
        let exact = c * t.powf(alpha) / gamma_fn(1.0 + alpha);
        constant_err = w.values().iter().map(|v| (v - exact).abs()).fold(constant_err, f64::max);
    }

    let sc = self_convergence(
        &SolverConfig::deterministic_preset(),
        &NonlinearitySpec::lipschitz_preset(),
        &[16, 32, 64, 128, 256],
    )?;
    Ok((
        identity_err <= 1e-8 && constant_err <= 1e-4 && (sc.slope - 1.0).abs() <= 0.3,
        format!("S*w0 error {identity_err:.1e}, constant drift error {constant_err:.1e}, dt slope {:.3}", sc.slope),
    ))
}

fn contraction() -> Outcome {
    let cfg = SolverConfig::lipschitz_preset();
    let start = Instant::now();
    let plan = SolverPlan::new(cfg.clone())?;
    let noises = sample_noises(&plan, 0..64)?;
    let sweep = contraction_sweep(
        &plan,
        &NonlinearitySpec::lipschitz_preset(),
        &noises,
        &default_perturbation(&cfg.grid),
        &[0.0, 5.0, 20.0, 80.0],
    )?;
    let (fast, secs) = within(300.0, start);
    let monotone = sweep.windows(2).all(|w| w[1].1 <= w[0].1);
    let last = sweep.last().map_or(f64::INFINITY, |s| s.1);
    let preset = cfg.grid.d() == 1 && cfg.exponents.p == 2.0 && cfg.k_trunc == 10.0;
    let ratios: Vec<String> = sweep.iter().map(|(t, r)| format!("{t}:{r:.4}")).collect();
    Ok((
        preset && last < 1.0 && monotone && fast,
        format!("ratios {}; {secs:.0} s", ratios.join(" ")),
    ))
}

fn stopped_moments_and_nesting() -> Outcome {
    let cfg = SolverConfig::lipschitz_preset();
    let nonlin = NonlinearitySpec::lipschitz_preset();
    let plan = SolverPlan::new(cfg.clone())?;
    let [m1, se1, m2, se2] = stopped_moment_doubling(&plan, &nonlin, 64)?;
    let drift = (m2 - m1).abs() / se1;
    let stable = m1.is_finite() && m2.is_finite() && drift < 3.0;

    // K = 4 and K = 10 share noise; they must agree up to the smaller stopping index
    let mut small = cfg.clone();
    small.k_trunc = 4.0;
    let plan_small = SolverPlan::new(small)?;
    let mut worst = 0.0f64;
    let mut stopped = 0;
    for i in 0..16 {
        let noise = plan.sample_noise(i)?;
        let a = plan_small.picard(&nonlin, &noise)?;
        let b = plan.picard(&nonlin, &noise)?;
        let stop = a.stopping_index.unwrap_or(a.fields.len() - 1);
        stopped += a.stopping_index.is_some() as usize;
        for n in 0..=stop {
            let scale = b.fields[n].max_abs().max(1.0);
            worst = worst.max(a.fields[n].sub(&b.fields[n])?.max_abs() / scale);
        }
    }
    let nested = worst <= cfg.picard_tol;
    Ok((
        stable && nested,
        format!(
            "moment {m1:.4}+-{se1:.4} -> {m2:.4}+-{se2:.4} ({drift:.2} SE); K-nesting gap {worst:.1e} ({stopped}/16 stopped at K=4)"
        ),
    ))
}

fn solvability_gate() -> Outcome {
    let base = ExperimentConfig::preset().to_toml();
    let boundary = base.replace("sigma2 = 0.6", "sigma2 = 0.75");
    let violating = base.replace("sigma2 = 0.6", "sigma2 = 0.9");
    let mut ok = boundary != base && violating != base;
    let mut detail = String::new();
    for (label, text) in [("boundary", &boundary), ("violating", &violating)] {
        match ExperimentConfig::from_toml_str(text) {
            Err(Error::Gate(msg)) => {
                ok &= msg.contains("is not >");
                detail.push_str(&format!("{label}: rejected; "));
            }
            other => {
                ok = false;
                detail.push_str(&format!("{label}: {other:?}; "));
            }
        }
    }
    // the solver refuses directly too
    let mut cfg = SolverConfig::lipschitz_preset();
    cfg.exponents.sigma2 = 0.75;
    ok &= matches!(check_gate(&cfg.exponents, &cfg.phi, 1), Err(Error::Gate(_)));
    ok &= SolverPlan::new(cfg).is_err();
    Ok((ok, detail.trim_end_matches("; ").to_string()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("Mittag-Leffler identities", ml_identities_hold),
        ("kernel mass", kernel_mass),
        ("L1 scaling slopes", l1_scaling),
        ("Lp bound slopes", lp_scaling),
        ("band estimate", band_estimate),
        ("square function strong-(p,p)", square_function),
        ("compensated Poisson moments", compensated_isometry),
        ("zero-noise solver identities", zero_noise_identities),
        ("contraction in the weighted norm", contraction),
        ("stopped moments and K-nesting", stopped_moments_and_nesting),
        ("solvability gate", solvability_gate),
    ];
    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (passed, detail) = match run() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        failures += !passed as usize;
        println!(
            "criterion {:2} {name}: {} ({detail}) [{:.1} s]",
            i + 1,
            if passed { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} of {} passed", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
