//! Acceptance suite: one pass/fail line per criterion.
//!
//! Run a subset with `cargo test --test acceptance -- 1 4 9`.

use avglemma_core::fields::catalog;
use avglemma_core::fit::geometric_grid;
use avglemma_core::oscillatory::{decay_check, partitioned_bound, vdc_constant, BoundSource, PartitionOptions};
use avglemma_core::smooth::TestFunction;
use avglemma_core::sobolev::{chi, estimate_exponent, gain_certificate, m0_eval, mode_radii, multiplier_bound_check, GainInputs, MultiplierOptions};
use avglemma_core::sublevel::{check_gamma_nd, compare_exponents, default_eps_grid, fit_alpha, gamma_opt, measure_bound_check, ExponentVerdict, SweepOptions};
use avglemma_core::transport::{
    characteristics_convergence, make_pair, manufactured_density, reconstruct_from_slice, spectral_ode_residual, CharacteristicsMap,
    CharacteristicsOptions, PairMode,
};
use avglemma_core::{Amplitude, Complex64, Field, OscillatorySpec, PhaseFunction, SmoothForce, TorusGrid};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

type Criterion = (usize, &'static str, Duration, fn() -> Outcome);

fn vdc_constants() -> Outcome {
    let lambdas = geometric_grid(1.0, 1e6, 40);
    let mut ok = true;
    let mut parts = Vec::new();
    for k in 1..=3usize {
        let phi = PhaseFunction::monomial(k, 1.0, (0.0, 1.0));
        let spec = OscillatorySpec::new(Amplitude::constant(1.0), phi, (0.0, 1.0), 1.0).unwrap();
        let r = decay_check(&spec, &lambdas, &BoundSource::VanDerCorput { k }).unwrap();
        let cap = 5.0 * 2f64.powi(k as i32 - 1) - 2.0;
        assert_eq!(vdc_constant(k).unwrap(), cap);
        let exponent = r.decay_exponent.unwrap_or(f64::NAN);
        let pass = r.measured_constant <= cap && (exponent - 1.0 / k as f64).abs() <= 0.05;
        ok &= pass;
        parts.push(format!("k={k}: sup={:.4} (cap {cap}), exponent={exponent:.4}", r.measured_constant));
    }
    outcome(ok, parts.join("; "))
}

fn measure_bounds() -> Outcome {
    let eps = geometric_grid(1e-6, 1e-1, 10);
    let mut ok = true;
    let mut parts = Vec::new();
    for k in 1..=3usize {
        let phi = PhaseFunction::monomial(k, 1.0, (-1.0, 1.0));
        let delta: f64 = (1..=k).map(|i| i as f64).product();
        let r = measure_bound_check(&phi, k, delta, (-1.0, 1.0), &eps).unwrap();
        ok &= r.passed;
        parts.push(format!("k={k}: cbar={} worst ratio={:.12}", r.cbar, r.worst_ratio));
    }
    outcome(ok, parts.join("; "))
}

fn optimal_alpha() -> Outcome {
    let opts = SweepOptions::default();
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, n, m, want) in [("polynomial-curve", 2, 1, 0.5), ("polynomial-curve", 3, 1, 1.0 / 3.0), ("identity", 2, 2, 1.0)] {
        let a = catalog(name, n, m).unwrap().0;
        let fit = fit_alpha(&a, 1.0, &default_eps_grid(m), &opts).unwrap();
        let pass = (fit.alpha - want).abs() <= 0.05;
        ok &= pass;
        parts.push(format!("{name} N={n} M={m}: alpha={:.4} (want {want:.4}, r2={:.4})", fit.alpha, fit.r2));
    }
    outcome(ok, parts.join("; "))
}

fn optimal_gamma() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for n in 1..=4usize {
        let a = catalog("polynomial-curve", n, 1).unwrap().0;
        let r = gamma_opt(&a, &[1.0], 1.0, n + 2, 4096).unwrap();
        let below = check_gamma_nd(&a, &[1.0], n, 1.0, 4096).unwrap();
        let witness_norm: f64 = below.witness_direction.iter().map(|x| x * x).sum::<f64>().sqrt();
        let pass = r.gamma_opt == Some(n + 1) && !below.holds && (witness_norm - 1.0).abs() < 1e-9;
        ok &= pass;
        parts.push(format!(
            "N={n}: gamma_opt={:?}, gamma=N min={:.2e} witness={:?}",
            r.gamma_opt,
            below.min_value,
            below.witness_direction.iter().map(|x| (x * 1e4).round() / 1e4).collect::<Vec<_>>()
        ));
    }
    outcome(ok, parts.join("; "))
}

fn exponent_comparison() -> Outcome {
    let a = compare_exponents(2, 1).unwrap();
    let b = compare_exponents(2, 2).unwrap();
    let c = compare_exponents(3, 3).unwrap();
    let pass = a.inv_gamma_opt == 1.0 / 3.0
        && a.half_alpha_opt == Some(0.25)
        && a.verdict == ExponentVerdict::DerivativeConditionStronger
        && b.half_alpha_opt == Some(0.5)
        && b.verdict == ExponentVerdict::MeasureConditionStronger
        && c.verdict == ExponentVerdict::MeasureConditionStronger;
    outcome(
        pass,
        format!(
            "(2,1): 1/gamma={:.4} alpha/2={:?} {:?}; (2,2): alpha/2={:?} {:?}",
            a.inv_gamma_opt, a.half_alpha_opt, a.verdict, b.half_alpha_opt, b.verdict
        ),
    )
}

fn reconstruction_round_trip() -> Outcome {
    let (a, force) = catalog("polynomial-curve", 1, 1).unwrap();
    let grid = TorusGrid::new(1, 1, 1.0, 64, 128, 3.0, 1.1).unwrap();
    let f = manufactured_density(&grid, 3, 0.2).unwrap();
    let pair = make_pair(PairMode::Manufactured(f), &a, &force, &grid).unwrap();
    let slice = pair.f.slice(pair.v1_index).unwrap();
    let rec = reconstruct_from_slice(&slice, &pair.g, &*a, &[1.0]).unwrap();
    let err = rec.relative_l2_distance(&pair.f).unwrap();
    let mut worst_residual = 0.0f64;
    for seed in 1..=3u64 {
        let p = make_pair(PairMode::Random { seed, cutoff: 16.0 }, &a, &force, &grid).unwrap();
        let r = spectral_ode_residual(&p.f, &p.g, &*a, &[1.0], 64).unwrap();
        worst_residual = worst_residual.max(r.relative);
    }
    outcome(err <= 1e-6 && worst_residual <= 1e-6, format!("round-trip error={err:.3e}; random-pair residual={worst_residual:.3e}"))
}

fn averaging_gain() -> Outcome {
    let (a, force) = catalog("polynomial-curve", 2, 1).unwrap();
    let amp = 1.1;
    let grid = TorusGrid::new(2, 1, 1.0, 128, 256, 3.0, amp).unwrap();
    let psi = TestFunction::new(1, amp);
    let gamma = 3;
    let bound = partitioned_bound(&a, &[1.0], None, &psi, gamma, amp, &PartitionOptions::default()).unwrap();
    let gamma_nd = check_gamma_nd(&a, &[1.0], gamma, amp, 4096).unwrap();
    let mut ok = true;
    let mut parts = vec![format!("d_gamma={:.4}", bound.d_gamma)];
    for seed in 1..=5u64 {
        let pair = make_pair(PairMode::Random { seed, cutoff: 32.0 }, &a, &force, &grid).unwrap();
        let residual = spectral_ode_residual(&pair.f, &pair.g, &*a, &[1.0], 256).unwrap();
        let slice = pair.f.slice(pair.v1_index).unwrap();
        let cert = gain_certificate(GainInputs {
            f: &pair.f,
            g: &pair.g,
            slice: &slice,
            psi,
            gamma,
            d_gamma: bound.d_gamma,
            force_norm: 1.0,
            residual: &residual,
            gamma_nd: &gamma_nd,
        })
        .unwrap();
        let other = pair.f.slice(grid.closest_node(-0.5)).unwrap();
        let f_est = estimate_exponent(&mode_radii(&pair.f), &other.values).unwrap();
        let rho_s = cert.rho_estimate.s_star.unwrap_or(f64::NAN);
        let f_s = f_est.s_star.unwrap_or(f64::NAN);
        let pass = cert.passed && rho_s >= 1.0 / 3.0 - 0.1 && f_s <= 0.1;
        ok &= pass;
        parts.push(format!("seed {seed}: worst={:.3e} s(rho)={rho_s:.3} s(f)={f_s:.3}", cert.worst_ratio));
    }
    outcome(ok, parts.join("; "))
}

fn characteristics() -> Outcome {
    let id = catalog("identity", 1, 1).unwrap().0;
    let opts = CharacteristicsOptions::default();
    let zero = SmoothForce::new(2, 1, "zero", |_, _, o| o[0] = 0.0);
    let one = SmoothForce::new(2, 1, "one", |_, _, o| o[0] = 1.0);
    let z = CharacteristicsMap::new(id.clone(), zero, 0.0, vec![0.1], vec![0.3], 0.5, opts).unwrap().report().unwrap();
    let map = CharacteristicsMap::new(id.clone(), one, 0.0, vec![0.0], vec![0.2], 0.5, opts).unwrap();
    let mut closed = 0.0f64;
    for (t, x, w) in map.samples() {
        closed = closed.max((map.evaluate(t, &x, &w).unwrap()[0] - (w[0] + t)).abs());
    }
    let u = map.report().unwrap();
    let fx = SmoothForce::affine(vec![0.0], vec![vec![0.0, 1.0]], vec![vec![0.0]]).unwrap();
    let conv = characteristics_convergence(id, fx, 0.0, vec![0.2], vec![0.3], 0.4, &[4, 8, 16, 32], opts).unwrap();
    let min_jac = conv.reports.iter().map(|r| r.min_jacobian).fold(f64::INFINITY, f64::min);
    let pass = z.max_residual <= 1e-10 && u.max_residual <= 1e-10 && closed <= 1e-10 && conv.observed_order >= 3.5 && min_jac > 0.0;
    outcome(
        pass,
        format!(
            "F=0 residual={:.1e}; F=1 residual={:.1e} closed-form error={closed:.1e}; F=x order={:.2} residuals={:?} min jacobian={min_jac:.4}",
            z.max_residual,
            u.max_residual,
            conv.observed_order,
            conv.residuals.iter().map(|r| format!("{r:.1e}")).collect::<Vec<_>>()
        ),
    )
}

fn multiplier() -> Outcome {
    let h = 1e-4;
    let chi2 = (chi(h) - 2.0 * chi(0.0) + chi(-h)) / (h * h);
    let limit = Complex64::new(-chi2, 0.0) / Complex64::new(0.0, 2.0);
    let exact_limit = Complex64::new(0.0, -1.0);
    let m0 = m0_eval(0.0);
    let a: Field = catalog("identity", 2, 2).unwrap().0;
    let r = multiplier_bound_check(&a, 1.0, 3, &MultiplierOptions::default()).unwrap();
    let worst_change = r.entries.iter().map(|e| e.relative_change).fold(0.0, f64::max);
    let pass = (m0 - exact_limit).norm() <= 1e-8 && (limit - exact_limit).norm() <= 1e-6 && r.passed;
    outcome(
        pass,
        format!(
            "m0(0)={m0}, -chi''(0)/(2i)={limit:.8}; {} suprema finite={} worst grid change={worst_change:.2e}",
            r.entries.len(),
            r.entries.iter().all(|e| e.finite)
        ),
    )
}

fn write_config(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let p = dir.join(format!("{name}.toml"));
    std::fs::write(&p, body).unwrap();
    p
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let scenarios = [
        (
            "averaging-gain",
            "command = \"averaging-gain\"\nseed = 7\n[field]\nname = \"polynomial-curve\"\nspace_dim = 2\nvelocity_dim = 1\n\
             [force]\nkind = \"constant\"\nvalues = [1.0]\n[grid]\nn_x = 32\nn_v = 64\n[pair]\nmode = \"random\"\ncutoff = 6.0\n\
             [sweep]\ngamma = 3\nsphere_samples = 512\n",
        ),
        (
            "fit-alpha",
            "command = \"fit-alpha\"\n[field]\nname = \"polynomial-curve\"\nspace_dim = 2\nvelocity_dim = 1\n\
             [sweep]\neps_min = 1e-4\neps_max = 1e-1\nsphere_samples = 256\n",
        ),
        (
            "reconstruct-test",
            "command = \"reconstruct-test\"\nseed = 3\n[field]\nname = \"polynomial-curve\"\nspace_dim = 1\nvelocity_dim = 1\n\
             [force]\nkind = \"constant\"\nvalues = [1.0]\n[grid]\nn_x = 16\nn_v = 64\n[pair]\nmode = \"random\"\ncutoff = 5.0\n",
        ),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (cmd, body) in scenarios {
        let cfg = write_config(dir.path(), cmd, body);
        let mut reports = Vec::new();
        for threads in ["1", "2", "4"] {
            let out = dir.path().join(format!("{cmd}-{threads}"));
            let status = Command::new(env!("CARGO_BIN_EXE_avglemma"))
                .args([cmd, "--config"])
                .arg(&cfg)
                .arg("--out")
                .arg(&out)
                .args(["--threads", threads])
                .env_remove("AVGLEMMA_THREADS")
                .output()
                .unwrap();
            let code = status.status.code();
            let bytes = std::fs::read(out.join("report.json")).unwrap_or_default();
            reports.push((code, bytes));
        }
        let same = reports.windows(2).all(|w| w[0] == w[1]) && !reports[0].1.is_empty();
        ok &= same;
        parts.push(format!("{cmd}: exit {:?}, identical={same}", reports[0].0));
    }
    outcome(ok, parts.join("; "))
}

fn main() {
    let criteria: Vec<Criterion> = vec![
        (1, "van der Corput constants", Duration::from_secs(30), vdc_constants),
        (2, "measure bounds", Duration::from_secs(10), measure_bounds),
        (3, "optimal alpha", Duration::from_secs(300), optimal_alpha),
        (4, "optimal gamma", Duration::from_secs(120), optimal_gamma),
        (5, "exponent comparison", Duration::from_secs(1), exponent_comparison),
        (6, "reconstruction round trip", Duration::from_secs(120), reconstruction_round_trip),
        (7, "averaging gain certificate", Duration::from_secs(600), averaging_gain),
        (8, "characteristics construction", Duration::from_secs(60), characteristics),
        (9, "multiplier checks", Duration::from_secs(30), multiplier),
        (10, "determinism", Duration::from_secs(600), determinism),
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failures = 0;
    for (id, name, budget, run) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let result = std::panic::catch_unwind(run).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            outcome(false, format!("panicked: {}", msg.unwrap_or_default()))
        });
        let elapsed = start.elapsed();
        let in_time = elapsed <= budget;
        let passed = result.passed && in_time;
        if !passed {
            failures += 1;
        }
        println!(
            "criterion {id:>2} [{}] {name}: {} ({:.1}s of {}s)",
            if passed { "PASS" } else { "FAIL" },
            result.detail,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
}
