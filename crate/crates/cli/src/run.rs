use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use pdectl::control::{
    check_assumption_d, controllability_gramian, hum_exact_control_wave, hum_null_control_heat,
    kalman_rank, lambda_min, make_control_geometry, random_system, semilinear_null_control,
    ControlGeometry, Domain, HeatGramian, SemilinearOptions, WaveGramian,
};
use pdectl::identities::{
    fit_slope, random_det_instance, reference_stoch_instance, stoch_convergence_study,
    verify_det_slice, verify_identity_suite, StochKind,
};
use pdectl::observability::{
    heat_observability, lr_gram_constant, lr_growth_fit, obs_constant_wave, stoch_obs_lower_bound,
    Anchor, HeatObsMode, LrCutoff, ObsEstimate, QuotientOptions, WaveObsOptions, WaveObservation,
};
use pdectl::pde::{
    blow_up_threshold, solve_semilinear_heat, stoch_heat_map, CoefficientField, Grid, GridFunction,
    Trajectory,
};
use pdectl::seeds::derive_seed;
use pdectl::stabilization::{boundary_damping_experiment, local_damping_experiment, LocalDamping};
use pdectl::Error;
use serde_json::{json, Value};

use crate::config::{
    DampingKind, Equation, Expectation, Experiment, ExperimentConfig, ObsMode, Observation, Profile,
};
use crate::report::{emit_report, format_float, Check, Comparison, Format, RunReport};
use crate::CliError;

/// Relative residual above which a wave run below the critical time counts as stalled.
const PLATEAU: f64 = 0.1;

fn ctx(what: &'static str) -> impl Fn(Error) -> CliError {
    move |e| CliError::Runtime(format!("{what}: {e}"))
}

/// Checks, results and artifacts collected by one experiment.
struct Outcome {
    checks: Vec<Check>,
    results: Value,
}

struct Artifacts {
    dir: Option<PathBuf>,
    written: Vec<String>,
}

impl Artifacts {
    fn new(dir: Option<&str>) -> Self {
        Self {
            dir: dir.map(PathBuf::from),
            written: vec![],
        }
    }

    fn enabled(&self) -> bool {
        self.dir.is_some()
    }

    fn write(&mut self, name: &str, content: impl FnOnce() -> String) -> Result<(), CliError> {
        let Some(dir) = &self.dir else {
            return Ok(());
        };
        std::fs::create_dir_all(dir)?;
        let path = dir.join(name);
        std::fs::write(&path, content())?;
        self.written.push(path.to_string_lossy().into_owned());
        Ok(())
    }

    fn trajectory(
        &mut self,
        every: Option<usize>,
        traj: impl FnOnce() -> Result<Trajectory, CliError>,
    ) -> Result<(), CliError> {
        let Some(every) = every else {
            return Ok(());
        };
        if !self.enabled() {
            return Ok(());
        }
        let t = traj()?;
        let mut buf = Vec::new();
        pdectl::pde::io::write_csv(&t, every, &mut buf)?;
        self.write("trajectory.csv", || String::from_utf8(buf).expect("ascii"))
    }
}

fn f(x: f64) -> String {
    format_float(x)
}

fn make_grid(c: &ExperimentConfig) -> Result<Grid, CliError> {
    let n = c.grid.n.expect("resolved");
    let t = c.grid.horizon.expect("resolved");
    let steps = c.grid.steps.expect("resolved");
    let g = if c.grid.dim == 1 {
        Grid::unit_interval(n, t, steps)
    } else {
        Grid::unit_square(n, t, steps)
    };
    g.map_err(|e| CliError::Usage(format!("grid: {e}")))
}

fn make_coef(c: &ExperimentConfig) -> CoefficientField {
    let p = c.coefficients.diffusivity;
    let noise = c.coefficients.noise.unwrap_or(0.0);
    let mut coef = CoefficientField::laplacian().with_constant_potential(c.coefficients.potential);
    if p != 1.0 {
        coef = coef.with_diffusivity(move |_| p);
    }
    if noise != 0.0 {
        coef = coef.with_noise(move |_| noise);
    }
    coef
}

fn make_geometry(c: &ExperimentConfig) -> Result<ControlGeometry, CliError> {
    let domain = Domain::unit(c.grid.dim);
    let x0 = c.geometry.x0.as_deref().expect("resolved");
    let geo = make_control_geometry(
        &domain,
        x0,
        c.geometry.epsilon,
        c.grid.horizon.expect("resolved"),
    )
    .map_err(|e| CliError::Usage(format!("geometry: {e}")))?;
    match (&c.geometry.omega_lo, &c.geometry.omega_hi) {
        (Some(lo), Some(hi)) => geo
            .with_omega(lo, hi)
            .map_err(|e| CliError::Usage(format!("geometry: {e}"))),
        _ => Ok(geo),
    }
}

fn make_data(c: &ExperimentConfig, g: &Grid) -> GridFunction {
    let base = match c.data.profile {
        Profile::Mode => g.dirichlet_mode(&c.data.mode),
        Profile::Zero => g.zeros(),
        Profile::Sin8 => g.sample(|x| {
            x.iter()
                .map(|v| (std::f64::consts::PI * v).sin().powi(8))
                .product()
        }),
        Profile::Parabola => g.sample(|x| x.iter().map(|v| v * (1.0 - v)).product()),
    };
    base.scale(c.data.amplitude)
}

fn control_csv(g: &Grid, control: &[Vec<f64>]) -> String {
    let mut s = String::from("step,time,node,value\n");
    for (k, u) in control.iter().enumerate() {
        for (i, v) in u.iter().enumerate() {
            let _ = writeln!(s, "{k},{},{i},{}", f(g.time(k)), f(*v));
        }
    }
    s
}

fn history_csv(h: &[f64]) -> String {
    let mut s = String::from("iteration,value\n");
    for (i, v) in h.iter().enumerate() {
        let _ = writeln!(s, "{i},{}", f(*v));
    }
    s
}

fn verify_identity(c: &ExperimentConfig, art: &mut Artifacts) -> Result<Outcome, CliError> {
    let ic = &c.identity;
    let mut checks = vec![];
    let mut kinds = serde_json::Map::new();
    let mut csv = String::from("name,samples,max_rel_residual,tolerance,pass\n");
    for kind in &ic.kinds {
        let tol = ic.tolerance.unwrap_or(kind.default_tolerance());
        let r = verify_identity_suite(*kind, ic.instances, c.seed, tol)
            .map_err(ctx("identity suite"))?;
        checks.push(Check::new(
            format!("{kind}.max_rel_residual"),
            r.max_rel_residual,
            Comparison::Le,
            tol,
        ));
        let _ = writeln!(
            csv,
            "{kind},{},{},{},{}",
            r.samples,
            f(r.max_rel_residual),
            f(tol),
            r.pass
        );
        kinds.insert(
            kind.name().into(),
            serde_json::to_value(&r).expect("serializable"),
        );
    }
    let mut slices = serde_json::Map::new();
    for slice in &ic.slices {
        let tol = ic.tolerance.unwrap_or(1e-9);
        let r = verify_det_slice(*slice, ic.instances, c.seed, tol, ic.i_tolerance)
            .map_err(ctx("identity slice"))?;
        let name = slice.name();
        checks.push(Check::new(
            format!("{name}.max_rel_residual"),
            r.max_rel_residual,
            Comparison::Le,
            tol,
        ));
        checks.push(Check::new(
            format!("{name}.i_terms"),
            r.max_rel_i_terms,
            Comparison::Le,
            ic.i_tolerance,
        ));
        let _ = writeln!(
            csv,
            "{name},{},{},{},{}",
            r.samples,
            f(r.max_rel_residual),
            f(tol),
            r.pass
        );
        slices.insert(name.into(), serde_json::to_value(&r).expect("serializable"));
    }
    art.write("identity.csv", || csv)?;
    if c.output.dump_instance {
        let inst = random_det_instance(derive_seed(c.seed, "dump-instance", 0), 2)
            .map_err(ctx("instance"))?;
        let mut text = String::new();
        let mut section = |name: &str, body: String| {
            let _ = write!(text, "# {name}\n{body}");
        };
        section("z.re", inst.z.re.to_text());
        section("z.im", inst.z.im.to_text());
        section("ell", inst.ell.to_text());
        section("alpha", inst.alpha.to_text());
        section("beta", inst.beta.to_text());
        for (j, row) in inst.b().iter().enumerate() {
            for (k, p) in row.iter().enumerate().skip(j) {
                section(&format!("b[{j}][{k}]"), p.to_text());
            }
        }
        let _ = writeln!(
            text,
            "# a = {}\n# b = {}\n# lambda = {}",
            f(inst.a_param),
            f(inst.b_param),
            f(inst.lambda)
        );
        if art.enabled() {
            art.write("instance.txt", || text)?;
        } else {
            std::fs::write("instance.txt", text)?;
            art.written.push("instance.txt".into());
        }
    }
    Ok(Outcome {
        checks,
        results: json!({ "kinds": kinds, "slices": slices, "instances": ic.instances }),
    })
}

fn null_control(c: &ExperimentConfig, art: &mut Artifacts) -> Result<Outcome, CliError> {
    let g = make_grid(c)?;
    let geo = make_geometry(c)?;
    let coef = make_coef(c);
    let y0 = make_data(c, &g);
    let (tol, max_iter) = (
        c.solver.tolerance.expect("resolved"),
        c.solver.max_iter.expect("resolved"),
    );
    let thr = c.solver.residual_threshold.expect("resolved");
    let r = hum_null_control_heat(&coef, &g, &geo, &y0, c.solver.epsilon, tol, max_iter)
        .map_err(ctx("null control"))?;
    let y0_norm = y0.norm();
    let mut checks = vec![Check::new(
        "terminal_residual",
        r.terminal_residual,
        Comparison::Le,
        thr * y0_norm,
    )];
    let mut sweep = vec![];
    let mut slope = Value::Null;
    if !c.solver.epsilon_sweep.is_empty() && y0_norm > 0.0 {
        if c.solver.epsilon_sweep.len() < 2 {
            return Err(CliError::Usage(
                "solver.epsilon_sweep needs at least two values".into(),
            ));
        }
        let mut csv = String::from("epsilon,terminal_residual,cg_iterations,cost\n");
        for eps in &c.solver.epsilon_sweep {
            let s = hum_null_control_heat(&coef, &g, &geo, &y0, *eps, tol, max_iter)
                .map_err(ctx("epsilon sweep"))?;
            let _ = writeln!(
                csv,
                "{},{},{},{}",
                f(*eps),
                f(s.terminal_residual),
                s.cg_iterations,
                f(s.cost)
            );
            sweep.push(json!({ "epsilon": eps, "terminal_residual": s.terminal_residual, "cg_iterations": s.cg_iterations }));
        }
        let x: Vec<f64> = c.solver.epsilon_sweep.iter().map(|e| e.ln()).collect();
        let y: Vec<f64> = sweep
            .iter()
            .map(|s| s["terminal_residual"].as_f64().unwrap_or(f64::NAN).ln())
            .collect();
        let s = fit_slope(&x, &y);
        checks.push(Check::new("epsilon_slope_min", s, Comparison::Ge, 0.4));
        checks.push(Check::new("epsilon_slope_max", s, Comparison::Le, 0.6));
        slope = json!(s);
        art.write("epsilon_sweep.csv", || csv)?;
    }
    art.write("control.csv", || control_csv(&g, &r.control))?;
    art.trajectory(c.output.dump_every, || {
        let gram = HeatGramian::new(&coef, &g, geo.mask(&g), None).map_err(ctx("trajectory"))?;
        gram.trajectory(&y0.values, Some(&r.control))
            .map_err(ctx("trajectory"))
    })?;
    Ok(Outcome {
        checks,
        results: json!({
            "y0_norm": y0_norm,
            "terminal_residual": r.terminal_residual,
            "relative_residual": r.relative_residual,
            "cg_iterations": r.cg_iterations,
            "cost": r.cost,
            "epsilon": c.solver.epsilon,
            "warnings": r.warnings,
            "epsilon_sweep": sweep,
            "epsilon_slope": slope,
        }),
    })
}

fn exact_control(c: &ExperimentConfig, art: &mut Artifacts) -> Result<Outcome, CliError> {
    let g = make_grid(c)?;
    let geo = make_geometry(c)?;
    let coef = make_coef(c);
    let y0 = make_data(c, &g);
    let z = g.zeros();
    let thr = c.solver.residual_threshold.expect("resolved");
    let beyond = geo.beyond_critical_time();
    let run = hum_exact_control_wave(
        &coef,
        &g,
        &geo,
        (&y0, &z),
        (&z, &z),
        c.solver.tolerance.expect("resolved"),
        c.solver.max_iter.expect("resolved"),
    );
    let (residual, converged, history, control) = match run {
        Ok(r) => (r.relative_residual, true, r.cg_history, Some(r.control)),
        Err(Error::NoConvergence {
            residual, history, ..
        }) => (residual, false, history, None),
        Err(e) => return Err(ctx("exact control")(e)),
    };
    let check = if beyond {
        Check::new("relative_residual", residual, Comparison::Le, thr)
    } else {
        Check::new("plateau_residual", residual, Comparison::Gt, PLATEAU)
    };
    art.write("cg_history.csv", || history_csv(&history))?;
    if let Some(u) = &control {
        art.write("control.csv", || control_csv(&g, u))?;
        art.trajectory(c.output.dump_every, || {
            let gram = WaveGramian::new(&coef, &g, geo.mask(&g)).map_err(ctx("trajectory"))?;
            gram.system()
                .solve(&y0.values, &z.values, Some(u))
                .map_err(ctx("trajectory"))
        })?;
    }
    Ok(Outcome {
        checks: vec![check],
        results: json!({
            "t_star": geo.t_star,
            "horizon": geo.horizon,
            "beyond_critical_time": beyond,
            "converged": converged,
            "relative_residual": residual,
            "cg_iterations": history.len().saturating_sub(1),
            "omega_lo": geo.omega_lo,
            "omega_hi": geo.omega_hi,
        }),
    })
}

fn semilinear_control(c: &ExperimentConfig, art: &mut Artifacts) -> Result<Outcome, CliError> {
    let g = make_grid(c)?;
    let geo = make_geometry(c)?;
    let coef = make_coef(c);
    let sc = &c.semilinear;
    let profile = make_data(c, &g);
    let threshold = if profile.max_abs() > 0.0 {
        blow_up_threshold(&coef, &g, &profile, sc.r_exponent, 1.0, 1e12, 1e-3)
            .map_err(ctx("blow-up threshold"))?
    } else {
        None
    };
    let y0 = match threshold {
        Some(a) => profile.scale(sc.amplitude_factor * a),
        None => profile.clone(),
    };
    let free = solve_semilinear_heat(&coef, &g, &y0, None, sc.r_exponent, -1.0)
        .map_err(ctx("uncontrolled run"))?;
    let opts = SemilinearOptions {
        epsilon: c.solver.epsilon,
        cg_tol: c.solver.tolerance.expect("resolved"),
        max_iter: c.solver.max_iter.expect("resolved"),
        sign: -1.0,
    };
    let r = semilinear_null_control(
        &coef,
        &g,
        &geo,
        &y0,
        sc.r_exponent,
        sc.outer_tolerance,
        sc.max_outer,
        opts,
    )
    .map_err(ctx("semilinear control"))?;
    let thr = c.solver.residual_threshold.expect("resolved");
    let checks = vec![
        Check::flag("uncontrolled_blows_up", free.blew_up()),
        Check::new(
            "terminal_residual",
            r.terminal_residual,
            Comparison::Le,
            thr * y0.norm(),
        ),
        Check::new(
            "outer_iterations",
            r.outer_history.len() as f64,
            Comparison::Le,
            sc.max_outer as f64,
        ),
    ];
    art.write("control.csv", || control_csv(&g, &r.control))?;
    art.write("outer_history.csv", || history_csv(&r.outer_history))?;
    art.trajectory(c.output.dump_every, || {
        solve_semilinear_heat(&coef, &g, &y0, Some(&r.control), sc.r_exponent, -1.0)
            .map_err(ctx("trajectory"))
    })?;
    Ok(Outcome {
        checks,
        results: json!({
            "blow_up_amplitude": threshold,
            "y0_norm": y0.norm(),
            "uncontrolled_blow_up_step": free.blow_up_step,
            "terminal_residual": r.terminal_residual,
            "relative_residual": r.relative_residual,
            "outer_iterations": r.outer_history.len(),
            "outer_history": r.outer_history,
            "cost": r.cost,
            "warnings": r.warnings,
        }),
    })
}

fn observe(c: &ExperimentConfig) -> Result<ObsEstimate, CliError> {
    let g = make_grid(c)?;
    let geo = make_geometry(c)?;
    let coef = make_coef(c);
    let oc = &c.observability;
    let quotient = QuotientOptions {
        delta_rel: oc.delta_rel,
        ..QuotientOptions::default()
    };
    match oc.equation {
        Equation::Heat => {
            let mode = match oc.mode {
                ObsMode::Initial => HeatObsMode::Initial,
                ObsMode::Terminal => HeatObsMode::Terminal,
            };
            heat_observability(&coef, &g, &geo.mask(&g), mode, &quotient)
                .map_err(ctx("heat observability"))
        }
        Equation::Wave => {
            let opts = WaveObsOptions {
                modes: oc.modes,
                anchor: match oc.mode {
                    ObsMode::Initial => Anchor::Initial,
                    ObsMode::Terminal => Anchor::Terminal,
                },
                quotient,
            };
            let obs = match oc.observation {
                Observation::Interior => WaveObservation::Interior,
                Observation::Boundary => WaveObservation::BoundaryTrace,
            };
            obs_constant_wave(&coef, &g, &geo, obs, &opts).map_err(ctx("wave observability"))
        }
        Equation::StochHeat => {
            stoch_obs_lower_bound(&coef, &g, &geo, oc.candidates, oc.paths, c.seed)
                .map_err(ctx("stochastic observability"))
        }
    }
}

fn observability(
    raw: &ExperimentConfig,
    c: &ExperimentConfig,
    art: &mut Artifacts,
) -> Result<Outcome, CliError> {
    let points: Vec<(String, ExperimentConfig)> = match &c.observability.sweep {
        Some(sw) => sw
            .values
            .iter()
            .map(|v| {
                Ok((
                    format!("{}={v}", sw.key),
                    raw.with_override(&sw.key, v.clone())?.resolved()?,
                ))
            })
            .collect::<Result<_, CliError>>()?,
        None => vec![(String::new(), c.clone())],
    };
    let mut checks = vec![];
    let mut rows = vec![];
    let mut csv = String::from("param,constant,iterations,regularization\n");
    let mut last = None;
    for (label, pc) in &points {
        let est = observe(pc)?;
        let name = if label.is_empty() {
            "constant".to_string()
        } else {
            format!("constant[{label}]")
        };
        checks.push(Check::new(name, est.constant, Comparison::Gt, 0.0));
        let param = label.split_once('=').map_or("", |p| p.1);
        let _ = writeln!(
            csv,
            "{param},{},{},{}",
            f(est.constant),
            est.iterations,
            f(est.regularization)
        );
        rows.push(json!({
            "param": param,
            "n": pc.grid.n,
            "steps": pc.grid.steps,
            "constant": est.constant,
            "iterations": est.iterations,
            "regularization": est.regularization,
            "eigen_residual": est.eigen_residual,
            "beyond_critical_time": est.beyond_critical_time,
            "half_width": est.half_width,
            "lower_bound_only": est.lower_bound_only,
        }));
        last = Some(est);
    }
    let is_wave = c.observability.equation == Equation::Wave;
    if let (true, Some(sw)) = (is_wave, &c.observability.sweep) {
        if sw.key == "grid.n" && rows.len() >= 2 {
            let k: Vec<f64> = rows
                .iter()
                .map(|r| r["constant"].as_f64().unwrap_or(f64::NAN))
                .collect();
            if make_geometry(c)?.beyond_critical_time() {
                let hi = k.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lo = k.iter().cloned().fold(f64::INFINITY, f64::min);
                checks.push(Check::new("refinement_ratio", hi / lo, Comparison::Le, 1.5));
            } else {
                checks.push(Check::new(
                    "refinement_growth",
                    k[k.len() - 1] / k[0],
                    Comparison::Ge,
                    5.0,
                ));
            }
        }
    }
    art.write("sweep.csv", || csv)?;
    if let Some(est) = &last {
        art.write("maximizer.csv", || {
            let mut s = String::from("node,value,velocity\n");
            for (i, v) in est.maximizer.values.iter().enumerate() {
                let w = est.maximizer_velocity.as_ref().map_or(0.0, |m| m.values[i]);
                let _ = writeln!(s, "{i},{},{}", f(*v), f(w));
            }
            s
        })?;
    }
    Ok(Outcome {
        checks,
        results: json!({ "points": rows }),
    })
}

fn lr_constant(c: &ExperimentConfig, art: &mut Artifacts) -> Result<Outcome, CliError> {
    let lc = &c.lr;
    if lc.modes == 0 {
        return Err(CliError::Usage("lr.modes must be positive".into()));
    }
    let spectra = (1..=lc.modes)
        .map(|k| lr_gram_constant(LrCutoff::Modes(k), &lc.omega_lo, &lc.omega_hi))
        .collect::<Result<Vec<_>, _>>()
        .map_err(ctx("Gram spectrum"))?;
    let lam: Vec<f64> = spectra.iter().map(|s| s.lambda_min).collect();
    let violations = lam.windows(2).filter(|w| !(w[1] < w[0])).count()
        + lam.iter().filter(|l| !(**l > 0.0)).count();
    let mut r: Vec<f64> = spectra.iter().map(|s| s.r).collect();
    r.dedup();
    let fit = lr_growth_fit(&lc.omega_lo, &lc.omega_hi, &r).map_err(ctx("growth fit"))?;
    let checks = vec![
        Check::new(
            "lambda_min_order_violations",
            violations as f64,
            Comparison::Le,
            0.0,
        ),
        Check::new(
            "growth_r_squared",
            fit.r_squared,
            Comparison::Ge,
            lc.min_r_squared,
        ),
        Check::new("growth_slope", fit.slope, Comparison::Gt, 0.0),
    ];
    art.write("lr.csv", || {
        let mut s = String::from("modes,r,lambda_min,constant,precision\n");
        for (k, sp) in spectra.iter().enumerate() {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                k + 1,
                f(sp.r),
                f(sp.lambda_min),
                f(sp.constant),
                sp.precision
            );
        }
        s
    })?;
    Ok(Outcome {
        checks,
        results: json!({
            "modes": lc.modes,
            "r": spectra.iter().map(|s| s.r).collect::<Vec<_>>(),
            "lambda_min": lam,
            "precision": spectra.iter().map(|s| s.precision).collect::<Vec<_>>(),
            "growth": fit,
        }),
    })
}

fn stabilize(c: &ExperimentConfig, art: &mut Artifacts) -> Result<Outcome, CliError> {
    let g = make_grid(c)?;
    let coef = make_coef(c);
    let y0 = make_data(c, &g);
    let y1 = g.zeros();
    let sc = &c.stabilization;
    let run = match sc.damping {
        DampingKind::Boundary => {
            boundary_damping_experiment(&coef, &g, sc.left, sc.right, &y0, &y1)
                .map_err(ctx("boundary damping"))?
        }
        DampingKind::Local => {
            let geo = make_control_geometry(
                &Domain::unit(c.grid.dim),
                c.geometry.x0.as_deref().expect("resolved"),
                c.geometry.epsilon,
                g.horizon(),
            )
            .and_then(|geo| geo.with_omega(&sc.region_lo, &sc.region_hi))
            .map_err(|e| CliError::Usage(format!("stabilization region: {e}")))?;
            let region = geo.clone();
            let b = move |x: &[f64]| if region.in_omega(x) { 1.0 } else { 0.0 };
            let damping = LocalDamping {
                c0: sc.c0,
                power: sc.power,
            };
            local_damping_experiment(&coef, &g, b, damping, Some(&geo), &y0, &y1)
                .map_err(ctx("local damping"))?
        }
    };
    let e0 = run.energy[0];
    let expect = match sc.expect {
        Expectation::Auto if run.dissipative => Expectation::Decay,
        Expectation::Auto => Expectation::Conservation,
        e => e,
    };
    let mut checks = vec![Check::flag("monotone", run.monotone)];
    match expect {
        Expectation::Conservation => {
            let drift = if e0 == 0.0 {
                run.energy.iter().fold(0.0f64, |m, e| m.max(e.abs()))
            } else {
                run.energy
                    .iter()
                    .fold(0.0f64, |m, e| m.max((e / e0 - 1.0).abs()))
            };
            checks.push(Check::new(
                "energy_drift",
                drift,
                Comparison::Le,
                sc.conservation_tolerance,
            ));
        }
        Expectation::Decay => {
            checks.push(Check::new(
                "decay_rate",
                run.exponential.rate_or_c,
                Comparison::Gt,
                0.0,
            ));
            checks.push(Check::new(
                "fit_r_squared",
                run.exponential.r_squared,
                Comparison::Ge,
                sc.min_r_squared,
            ));
        }
        Expectation::Extinction => {
            let late = run
                .times
                .iter()
                .zip(&run.energy)
                .filter(|(t, _)| **t >= sc.extinction_time)
                .map(|(_, e)| e / e0)
                .fold(f64::NAN, f64::max);
            checks.push(Check::new(
                "late_energy_ratio",
                late,
                Comparison::Le,
                sc.extinction_level,
            ));
        }
        Expectation::Auto => unreachable!(),
    }
    art.write("energy.csv", || {
        let res = run.fit_residuals();
        let mut s = String::from("t,E,fit_residual\n");
        for ((t, e), r) in run.times.iter().zip(&run.energy).zip(&res) {
            let _ = writeln!(
                s,
                "{},{},{}",
                f(*t),
                f(*e),
                if r.is_nan() { String::new() } else { f(*r) }
            );
        }
        s
    })?;
    Ok(Outcome {
        checks,
        results: json!({
            "expectation": serde_json::to_value(expect).expect("serializable"),
            "initial_energy": e0,
            "final_energy": run.energy[run.energy.len() - 1],
            "exponential": run.exponential,
            "logarithmic": run.logarithmic,
            "monotone": run.monotone,
            "dissipative": run.dissipative,
            "flags": run.flags,
        }),
    })
}

fn stoch_heat(c: &ExperimentConfig, art: &mut Artifacts) -> Result<Outcome, CliError> {
    let g = make_grid(c)?;
    let coef = make_coef(c);
    let z0 = make_data(c, &g);
    let paths = c.stochastic.paths;
    let sq = stoch_heat_map(&coef, &g, &z0, c.seed, paths, |p| {
        p.terminal().norm().powi(2)
    })
    .map_err(ctx("stochastic heat"))?;
    let np = sq.len() as f64;
    let mean = sq.iter().sum::<f64>() / np;
    let sd = (sq.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (np - 1.0).max(1.0)).sqrt();
    let mut checks = vec![];
    let law = if c.data.profile == Profile::Mode {
        let gamma = c.coefficients.noise.unwrap_or(0.0);
        let lambda = c.coefficients.diffusivity * g.dirichlet_eigenvalue(&c.data.mode)
            + c.coefficients.potential;
        let law = z0.norm().powi(2) * ((-2.0 * lambda + gamma * gamma) * g.horizon()).exp();
        let dev = if law == 0.0 {
            mean.abs()
        } else {
            (mean / law - 1.0).abs()
        };
        checks.push(Check::new(
            "moment_deviation",
            dev,
            Comparison::Le,
            c.stochastic.moment_tolerance,
        ));
        Some(law)
    } else {
        None
    };
    art.write("samples.csv", || {
        let mut s = String::from("path,terminal_norm_sq\n");
        for (i, v) in sq.iter().enumerate() {
            let _ = writeln!(s, "{i},{}", f(*v));
        }
        s
    })?;
    art.trajectory(c.output.dump_every, || {
        stoch_heat_map(&coef, &g, &z0, c.seed, 1, Trajectory::clone)
            .map(|mut v| v.remove(0))
            .map_err(ctx("trajectory"))
    })?;
    Ok(Outcome {
        checks,
        results: json!({
            "paths": paths,
            "mean_terminal_norm_sq": mean,
            "standard_error": sd / np.sqrt(),
            "modal_law": law,
        }),
    })
}

fn stoch_identity(c: &ExperimentConfig, art: &mut Artifacts) -> Result<Outcome, CliError> {
    let s = &c.stochastic;
    let mut checks = vec![];
    let mut results = serde_json::Map::new();
    let mut csv = String::from("kind,noisy,dt,mean_residual\n");
    for (kind, name) in [
        (StochKind::Parabolic, "parabolic"),
        (StochKind::Hyperbolic, "hyperbolic"),
    ] {
        for noisy in [false, true] {
            let inst = reference_stoch_instance(kind, noisy).map_err(ctx("reference instance"))?;
            let (base, halvings, paths, bound) = if noisy {
                (
                    s.noisy_base_steps,
                    s.noisy_halvings,
                    s.noisy_paths,
                    s.noisy_slope,
                )
            } else {
                (s.drift_base_steps, s.drift_halvings, 1, s.drift_slope)
            };
            let study =
                stoch_convergence_study(&inst, kind, &[s.point], base, halvings, paths, c.seed)
                    .map_err(ctx("convergence study"))?;
            let label = if noisy { "noisy" } else { "drift" };
            checks.push(Check::new(
                format!("{name}.{label}_slope"),
                study.slope,
                Comparison::Ge,
                bound,
            ));
            for (dt, r) in study.dts.iter().zip(&study.mean_residuals) {
                let _ = writeln!(csv, "{name},{noisy},{},{}", f(*dt), f(*r));
            }
            results.insert(
                format!("{name}_{label}"),
                serde_json::to_value(&study).expect("serializable"),
            );
        }
    }
    art.write("convergence.csv", || csv)?;
    Ok(Outcome {
        checks,
        results: Value::Object(results),
    })
}

fn geometry(c: &ExperimentConfig) -> Result<Outcome, CliError> {
    let geo = make_geometry(c)?;
    let report = check_assumption_d(&geo.domain, &geo.x0, c.coefficients.diffusivity)
        .map_err(ctx("assumption check"))?;
    Ok(Outcome {
        checks: vec![],
        results: json!({
            "geometry": geo,
            "beyond_critical_time": geo.beyond_critical_time(),
            "assumption": report,
        }),
    })
}

fn kalman(c: &ExperimentConfig, art: &mut Artifacts) -> Result<Outcome, CliError> {
    let kc = &c.kalman;
    let mut disagreements = 0usize;
    let mut controllable = 0usize;
    let mut csv = String::from("case,n,inputs,rank,lambda_min,agree\n");
    for i in 0..kc.systems {
        let n = 1 + i % kc.max_dim;
        let sys = random_system(derive_seed(c.seed, "kalman", i as u64), n)
            .map_err(ctx("random system"))?;
        let rank = kalman_rank(&sys);
        let w = controllability_gramian(&sys, kc.horizon).map_err(ctx("Gramian"))?;
        let lm = lambda_min(&w);
        let agree = (rank == n) == (lm > kc.threshold);
        disagreements += usize::from(!agree);
        controllable += usize::from(rank == n);
        let _ = writeln!(csv, "{i},{n},{},{rank},{},{agree}", sys.b.ncols(), f(lm));
    }
    art.write("kalman.csv", || csv)?;
    Ok(Outcome {
        checks: vec![Check::new(
            "disagreements",
            disagreements as f64,
            Comparison::Le,
            0.0,
        )],
        results: json!({
            "systems": kc.systems,
            "controllable": controllable,
            "disagreements": disagreements,
        }),
    })
}

/// Resolves defaults, runs the experiment and assembles its report. JSON and CSV reports
/// are written when `output.json` / `output.csv` are set, artifacts when `output.dir` is.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunReport, CliError> {
    let start = Instant::now();
    let c = config.resolved()?;
    let mut art = Artifacts::new(c.output.dir.as_deref());
    let out = match c.experiment {
        Experiment::VerifyIdentity => verify_identity(&c, &mut art),
        Experiment::NullControl => null_control(&c, &mut art),
        Experiment::ExactControl => exact_control(&c, &mut art),
        Experiment::SemilinearControl => semilinear_control(&c, &mut art),
        Experiment::Observability => observability(config, &c, &mut art),
        Experiment::LrConstant => lr_constant(&c, &mut art),
        Experiment::Stabilize => stabilize(&c, &mut art),
        Experiment::StochHeat => stoch_heat(&c, &mut art),
        Experiment::StochIdentity => stoch_identity(&c, &mut art),
        Experiment::Geometry => geometry(&c),
        Experiment::Kalman => kalman(&c, &mut art),
    }?;
    let mut report = RunReport::empty();
    report.experiment = Some(c.experiment);
    report.seed = Some(c.seed);
    report.results = out.results;
    report.artifacts = art.written;
    for check in out.checks {
        report.push(check);
    }
    report.config = Some(c);
    report.wall_time_s = start.elapsed().as_secs_f64();
    let output = &report.config.as_ref().expect("just set").output;
    if let Some(p) = &output.json {
        emit_report(&report, Format::Json, p)?;
    }
    if let Some(p) = &output.csv {
        emit_report(&report, Format::Csv, p)?;
    }
    Ok(report)
}
