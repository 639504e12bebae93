//! One function per subcommand: run the kernels, record checks, collect artifacts.

use crate::config::{BoundSpec, CommandName, ConfigError, PairModeSpec, PhaseSpec, ScenarioConfig};
use crate::emit::Artifacts;
use crate::report::{Check, RunReport};
use avglemma_core::oscillatory::{decay_check, force_line_phase, partitioned_bound, BoundSource, PartitionOptions};
use avglemma_core::smooth::TestFunction;
use avglemma_core::sobolev::{
    estimate_exponent, gain_certificate, m0_eval, m0_expected_limit, mode_radii, multiplier_bound_check, GainInputs, MultiplierOptions,
};
use avglemma_core::sublevel::{check_gamma_nd, compare_exponents, fit_alpha, gamma_opt, measure_bound_check, SweepOptions};
use avglemma_core::tolerances::{CHARACTERISTICS_RESIDUAL, M0_LIMIT, RECONSTRUCTION_ERROR};
use avglemma_core::transport::{
    characteristics_convergence, make_pair, manufactured_density, reconstruct_from_slice, spectral_ode_residual, CharacteristicsOptions,
    PairMode,
};
use avglemma_core::{make_phase, Amplitude, Direction, Error, OscillatorySpec, PhaseFunction, Table, TorusGrid};
use serde::Serialize;
use serde_json::{json, Value};

/// Why a run stopped before producing its checks.
#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Core(Error),
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        RunError::Core(e)
    }
}

type Outcome = Result<(), RunError>;

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("result serializes")
}

fn table_from(name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Table {
    let mut t = Table::new(name, header);
    for r in rows {
        t.push(r);
    }
    t
}

/// Dispatches to the subcommand.
pub fn execute(command: CommandName, cfg: &ScenarioConfig, report: &mut RunReport, art: &mut Artifacts) -> Outcome {
    match command {
        CommandName::FitAlpha => fit_alpha_cmd(cfg, report, art),
        CommandName::GammaOpt => gamma_opt_cmd(cfg, report, art),
        CommandName::Decay => decay_cmd(cfg, report, art),
        CommandName::MeasureBounds => measure_bounds_cmd(cfg, report, art),
        CommandName::AveragingGain => averaging_gain_cmd(cfg, report, art),
        CommandName::ReconstructTest => reconstruct_cmd(cfg, report, art),
        CommandName::CharacteristicsTest => characteristics_cmd(cfg, report, art),
        CommandName::MultiplierCheck => multiplier_cmd(cfg, report, art),
        CommandName::CompareExponents => compare_cmd(cfg, report),
    }
}

fn sweep_options(cfg: &ScenarioConfig) -> SweepOptions {
    SweepOptions { sphere_samples: cfg.sweep.sphere_samples, ..SweepOptions::default() }
}

fn fit_alpha_cmd(cfg: &ScenarioConfig, report: &mut RunReport, art: &mut Artifacts) -> Outcome {
    let (a, _) = cfg.build_field()?;
    let eps = cfg.eps_grid(a.velocity_dim());
    let fit = fit_alpha(&a, cfg.sweep.amp, &eps, &sweep_options(cfg))?;
    report.checks.push(Check::at_least("fit_r2", fit.r2, avglemma_core::tolerances::FIT_R2_MIN));
    if let Some(want) = cfg.expect.alpha {
        report.checks.push(Check::within("alpha_deviation", fit.alpha, want, cfg.expect.alpha_tolerance.unwrap_or(0.05)));
    }
    let table = fit.table();
    art.plot("sup_measure", table.rows.iter().map(|r| (r[0], r[1])).collect());
    art.table(Table { name: "sup_measure".into(), ..table });
    report.result = to_value(&fit);
    Ok(())
}

fn gamma_opt_cmd(cfg: &ScenarioConfig, report: &mut RunReport, art: &mut Artifacts) -> Outcome {
    let (a, suggested) = cfg.build_field()?;
    let force = cfg.constant_force(&suggested)?;
    let gamma_max = cfg.sweep.gamma_max.unwrap_or(a.space_dim() + 2);
    let r = gamma_opt(&a, &force, cfg.sweep.amp, gamma_max, cfg.sweep.sphere_samples)?;
    report.checks.push(Check::holds("gamma_found", r.gamma_opt.is_some()));
    if let Some(want) = cfg.expect.gamma {
        report.checks.push(Check::equal("gamma_opt", r.gamma_opt.map_or(f64::NAN, |g| g as f64), want as f64));
    }
    art.table(table_from(
        "gamma_checks",
        &["gamma", "holds", "min_value", "threshold"],
        r.checks.iter().map(|c| vec![c.gamma as f64, if c.holds { 1.0 } else { 0.0 }, c.min_value, c.threshold]),
    ));
    report.result = to_value(&r);
    Ok(())
}

fn phase_and_interval(cfg: &ScenarioConfig, spec: &PhaseSpec) -> Result<(PhaseFunction, (f64, f64)), RunError> {
    let amp = cfg.sweep.amp;
    Ok(match spec {
        PhaseSpec::Monomial { order, scale, lo, hi } => (PhaseFunction::monomial(*order, *scale, (*lo, *hi)), (*lo, *hi)),
        PhaseSpec::Polynomial { coeffs, lo, hi } => (PhaseFunction::polynomial(coeffs.clone(), (*lo, *hi)), (*lo, *hi)),
        PhaseSpec::Field { direction } => {
            let (a, _) = cfg.build_field()?;
            let d = Direction::normalize(direction)?;
            (make_phase(&a, &d)?, (-amp, amp))
        }
        PhaseSpec::ForceLine { direction } => {
            let (a, suggested) = cfg.build_field()?;
            let force = cfg.constant_force(&suggested)?;
            let d = Direction::normalize(direction)?;
            (force_line_phase(&a, force[0], &d)?, (-amp, amp))
        }
    })
}

fn decay_cmd(cfg: &ScenarioConfig, report: &mut RunReport, art: &mut Artifacts) -> Outcome {
    let phase = cfg.phase.as_ref().ok_or_else(|| ConfigError { path: "phase".into(), message: "missing section".into() })?;
    let bound = cfg.bound.as_ref().ok_or_else(|| ConfigError { path: "bound".into(), message: "missing section".into() })?;
    let (phi, interval) = phase_and_interval(cfg, phase)?;
    let (source, psi, partition) = match bound {
        BoundSpec::VanDerCorput { k } => (BoundSource::VanDerCorput { k: *k }, Amplitude::constant(1.0), None),
        BoundSpec::Corollary { k, delta } => (BoundSource::Corollary { k: *k, delta: *delta }, Amplitude::constant(1.0), None),
        BoundSpec::Amplitude { k, delta } => {
            let psi = TestFunction::new(1, interval.1.abs().max(interval.0.abs()));
            (BoundSource::Amplitude { k: *k, delta: *delta }, Amplitude::from_test_function(psi), None)
        }
        BoundSpec::Partitioned { gamma } => {
            let PhaseSpec::ForceLine { direction } = phase else {
                return Err(ConfigError { path: "phase.kind".into(), message: "a partitioned bound needs a force-line phase".into() }.into());
            };
            let (a, suggested) = cfg.build_field()?;
            let force = cfg.constant_force(&suggested)?;
            let d = Direction::normalize(direction)?;
            let psi = TestFunction::new(1, cfg.sweep.amp);
            let opts = PartitionOptions { sphere_samples: cfg.sweep.sphere_samples, ..PartitionOptions::default() };
            let pb = partitioned_bound(&a, &force, Some(&d), &psi, *gamma, cfg.sweep.amp, &opts)?;
            (BoundSource::Partitioned { d_gamma: pb.d_gamma, gamma: *gamma }, Amplitude::from_test_function(psi), Some(pb))
        }
    };
    let spec = OscillatorySpec::new(psi, phi, interval, 1.0)?;
    let r = decay_check(&spec, &cfg.lambda_grid(), &source)?;
    report.checks.push(Check::at_most("worst_ratio", r.worst_ratio, 1.0 + r.tolerance));
    if let Some(want) = cfg.expect.decay_exponent {
        report.checks.push(Check::within(
            "decay_exponent_deviation",
            r.decay_exponent.unwrap_or(f64::NAN),
            want,
            cfg.expect.exponent_tolerance.unwrap_or(0.05),
        ));
    }
    if let Some(cap) = cfg.expect.measured_constant_max {
        report.checks.push(Check::at_most("measured_constant", r.measured_constant, cap));
    }
    art.plot("decay", r.lambdas.iter().copied().zip(r.magnitudes.iter().copied()).collect());
    art.table(r.table());
    report.result = json!({ "decay": to_value(&r), "partition": to_value(&partition) });
    Ok(())
}

fn measure_bounds_cmd(cfg: &ScenarioConfig, report: &mut RunReport, art: &mut Artifacts) -> Outcome {
    let phase = cfg.phase.as_ref().ok_or_else(|| ConfigError { path: "phase".into(), message: "missing section".into() })?;
    let lb = cfg.lower_bound.as_ref().ok_or_else(|| ConfigError { path: "lower_bound".into(), message: "missing section".into() })?;
    let (phi, interval) = phase_and_interval(cfg, phase)?;
    let r = measure_bound_check(&phi, lb.k, lb.delta, interval, &cfg.eps_grid(1))?;
    report.checks.push(Check::at_most("worst_ratio", r.worst_ratio, 1.0 + r.tolerance));
    let table = r.table();
    art.plot("measure", r.eps.iter().copied().zip(r.measures.iter().copied()).collect());
    art.table(Table { name: "measure_bound".into(), ..table });
    report.result = to_value(&r);
    Ok(())
}

fn grid_of(cfg: &ScenarioConfig, space_dim: usize, velocity_dim: usize) -> Result<TorusGrid, RunError> {
    let g = &cfg.grid;
    TorusGrid::new(space_dim, velocity_dim, g.length_scale, g.n_x, g.n_v, g.v_period, g.amp)
        .map_err(|e| ConfigError { path: "grid".into(), message: e.to_string() }.into())
}

fn averaging_gain_cmd(cfg: &ScenarioConfig, report: &mut RunReport, art: &mut Artifacts) -> Outcome {
    let (a, suggested) = cfg.build_field()?;
    let force = cfg.constant_force(&suggested)?;
    let force_field = avglemma_core::ForceField::constant(force.clone())?;
    let grid = grid_of(cfg, a.space_dim(), a.velocity_dim())?;
    let pair_spec = cfg.pair.as_ref().expect("validated");
    let gamma = cfg.sweep.gamma.unwrap_or(a.space_dim() + 1);
    let psi = TestFunction::new(a.velocity_dim(), grid.amp);
    let opts = PartitionOptions { sphere_samples: cfg.sweep.sphere_samples, ..PartitionOptions::default() };
    let bound = partitioned_bound(&a, &force, None, &psi, gamma, grid.amp, &opts)?;
    let gamma_nd = check_gamma_nd(&a, &force, gamma, grid.amp, cfg.sweep.sphere_samples)?;
    let mode = match pair_spec.mode {
        PairModeSpec::Random => PairMode::Random { seed: cfg.seed.expect("validated"), cutoff: pair_spec.cutoff },
        PairModeSpec::Manufactured => PairMode::Manufactured(manufactured_density(&grid, pair_spec.max_index, pair_spec.width)?),
    };
    let pair = make_pair(mode, &a, &force_field, &grid)?;
    let residual = spectral_ode_residual(&pair.f, &pair.g, &*a, &force, pair_spec.residual_modes)?;
    report.checks.push(Check::at_most("spectral_residual", residual.relative, residual.tolerance));
    report.checks.push(Check::holds("gamma_nd", gamma_nd.holds));
    if !residual.passed || !gamma_nd.holds {
        report.result = json!({ "bound": to_value(&bound), "gamma_nd": to_value(&gamma_nd), "residual": to_value(&residual) });
        return Ok(());
    }
    let slice = pair.f.slice(pair.v1_index)?;
    let force_norm = force.iter().map(|x| x * x).sum::<f64>().sqrt();
    let cert = gain_certificate(GainInputs {
        f: &pair.f,
        g: &pair.g,
        slice: &slice,
        psi,
        gamma,
        d_gamma: bound.d_gamma,
        force_norm,
        residual: &residual,
        gamma_nd: &gamma_nd,
    })?;
    report.checks.push(Check::at_most("worst_gain_ratio", cert.worst_ratio, 1.0));
    let other = pair.f.slice(grid.closest_node(-0.5))?;
    let slice_estimate = estimate_exponent(&mode_radii(&pair.f), &other.values)?;
    if let Some(min) = cfg.expect.rho_exponent_min {
        report.checks.push(Check::at_least("rho_exponent", cert.rho_estimate.s_star.unwrap_or(f64::NAN), min));
    }
    if let Some(max) = cfg.expect.slice_exponent_max {
        report.checks.push(Check::at_most("slice_exponent", slice_estimate.s_star.unwrap_or(f64::NAN), max));
    }
    art.plot("rho_shells", cert.rho_estimate.spectrum.plot_points());
    art.table(Table { name: "rho_shells".into(), ..cert.rho_estimate.spectrum.table() });
    art.table(Table { name: "slice_shells".into(), ..slice_estimate.spectrum.table() });
    report.result = json!({
        "bound": to_value(&bound),
        "gamma_nd": to_value(&gamma_nd),
        "residual": to_value(&residual),
        "certificate": to_value(&cert),
        "slice_estimate": to_value(&slice_estimate),
        "slice_node": grid.v_node(pair.v1_index),
    });
    Ok(())
}

fn reconstruct_cmd(cfg: &ScenarioConfig, report: &mut RunReport, art: &mut Artifacts) -> Outcome {
    let (a, suggested) = cfg.build_field()?;
    let force = cfg.constant_force(&suggested)?;
    let force_field = avglemma_core::ForceField::constant(force.clone())?;
    let grid = grid_of(cfg, a.space_dim(), a.velocity_dim())?;
    let pair_spec = cfg.pair.as_ref().expect("validated");
    let (pair, round_trip) = match pair_spec.mode {
        PairModeSpec::Random => {
            let mode = PairMode::Random { seed: cfg.seed.expect("validated"), cutoff: pair_spec.cutoff };
            (make_pair(mode, &a, &force_field, &grid)?, None)
        }
        PairModeSpec::Manufactured => {
            let f = manufactured_density(&grid, pair_spec.max_index, pair_spec.width)?;
            let pair = make_pair(PairMode::Manufactured(f), &a, &force_field, &grid)?;
            let slice = pair.f.slice(pair.v1_index)?;
            let rec = reconstruct_from_slice(&slice, &pair.g, &*a, &force)?;
            let err = rec.relative_l2_distance(&pair.f)?;
            (pair, Some(err))
        }
    };
    let residual = spectral_ode_residual(&pair.f, &pair.g, &*a, &force, pair_spec.residual_modes)?;
    report.checks.push(Check::at_most("spectral_residual", residual.relative, residual.tolerance));
    if let Some(err) = round_trip {
        report.checks.push(Check::at_most("round_trip_error", err, RECONSTRUCTION_ERROR));
    }
    let profile = pair.f.v1_profile();
    art.table(table_from("v1_profile", &["v1", "energy"], profile.iter().enumerate().map(|(i, h)| vec![grid.v_node(i), *h])));
    report.result = json!({
        "residual": to_value(&residual),
        "round_trip_error": round_trip,
        "slice_node": grid.v_node(pair.v1_index),
        "modes": pair.f.mode_count(),
        "f_l2": pair.f.l2_norm(),
        "g_l2": pair.g.l2_norm(),
    });
    Ok(())
}

fn characteristics_cmd(cfg: &ScenarioConfig, report: &mut RunReport, art: &mut Artifacts) -> Outcome {
    let (a, _) = cfg.build_field()?;
    let force = cfg.smooth_force(a.space_dim())?;
    let anchor = cfg.anchor.as_ref().expect("validated");
    let opts = CharacteristicsOptions::default();
    let mut steps = anchor.steps.clone();
    steps.sort_unstable();
    steps.dedup();
    let (reports, order) = if steps.len() >= 2 {
        let c = characteristics_convergence(a, force, anchor.t0, anchor.x0.clone(), anchor.w0.clone(), anchor.radius, &steps, opts)?;
        (c.reports, Some(c.observed_order))
    } else {
        let map = avglemma_core::CharacteristicsMap::new(
            a,
            force,
            anchor.t0,
            anchor.x0.clone(),
            anchor.w0.clone(),
            anchor.radius,
            CharacteristicsOptions { steps: steps[0], ..opts },
        )?;
        (vec![map.report()?], None)
    };
    let finest = reports.last().expect("at least one report");
    report.checks.push(Check::at_most("finest_residual", finest.max_residual, CHARACTERISTICS_RESIDUAL));
    let min_jac = reports.iter().map(|r| r.min_jacobian).fold(f64::INFINITY, f64::min);
    report.checks.push(Check::holds("positive_jacobian", min_jac > 0.0));
    if let (Some(want), Some(got)) = (cfg.expect.order_min, order) {
        report.checks.push(Check::at_least("observed_order", got, want));
    }
    art.plot("residual", reports.iter().map(|r| (r.steps as f64, r.max_residual)).collect());
    art.table(table_from(
        "characteristics",
        &["steps", "radius", "max_residual", "min_jacobian", "anchor_error"],
        reports.iter().map(|r| vec![r.steps as f64, r.radius, r.max_residual, r.min_jacobian, r.anchor_error]),
    ));
    report.result = json!({ "reports": to_value(&reports), "observed_order": order });
    Ok(())
}

fn multiplier_cmd(cfg: &ScenarioConfig, report: &mut RunReport, art: &mut Artifacts) -> Outcome {
    let (a, _) = cfg.build_field()?;
    let opts = MultiplierOptions { per_decade: cfg.sweep.y_per_decade, v_per_axis: cfg.sweep.v_per_axis, ..MultiplierOptions::default() };
    let r = multiplier_bound_check(&a, cfg.sweep.amp, cfg.sweep.k_max, &opts)?;
    let limit = m0_expected_limit();
    report.checks.push(Check::at_most("m0_limit_deviation", (m0_eval(0.0) - limit).norm(), M0_LIMIT));
    for e in &r.entries {
        report.checks.push(Check::holds(format!("finite_axis{}_k{}", e.axis, e.k), e.finite));
        report.checks.push(Check::at_most(
            format!("grid_change_axis{}_k{}", e.axis, e.k),
            e.relative_change,
            avglemma_core::tolerances::MULTIPLIER_GRID_CHANGE,
        ));
    }
    art.table(table_from(
        "multiplier",
        &["axis", "k", "sup", "sup_refined", "relative_change"],
        r.entries.iter().map(|e| vec![e.axis as f64, e.k as f64, e.sup, e.sup_refined, e.relative_change]),
    ));
    let zs = avglemma_core::fit::geometric_grid(1e-3, 1e3, 32);
    art.plot("m0", zs.iter().map(|&z| (z, m0_eval(z).im)).collect());
    report.result = json!({ "multiplier": to_value(&r), "expected_limit": to_value(&limit) });
    Ok(())
}

fn compare_cmd(cfg: &ScenarioConfig, report: &mut RunReport) -> Outcome {
    let f = cfg.field_spec()?;
    let c = compare_exponents(f.space_dim, f.velocity_dim)?;
    report.checks.push(Check::equal("inverse_gamma_opt", c.inv_gamma_opt, 1.0 / (f.space_dim as f64 + 1.0)));
    report.result = to_value(&c);
    Ok(())
}
