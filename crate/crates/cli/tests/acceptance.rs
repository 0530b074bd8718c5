//! Acceptance run: one line per criterion, all through the experiment runner.

use std::time::Instant;

use pdectl_cli::config::parse_assignment;
use pdectl_cli::report::to_json;
use pdectl_cli::{run_experiment, Experiment, ExperimentConfig, RunReport};

fn run(kind: Experiment, sets: &[&str]) -> RunReport {
    let overrides: Vec<_> = sets.iter().map(|s| parse_assignment(s).unwrap()).collect();
    let c = ExperimentConfig::load(None, Some(kind), &overrides).unwrap();
    run_experiment(&c).unwrap_or_else(|e| panic!("{} {sets:?}: {e}", kind.name()))
}

fn failures(r: &RunReport) -> Vec<String> {
    r.checks
        .iter()
        .filter(|c| !c.pass)
        .map(|c| {
            format!(
                "{} = {:.3e} (needs {} {:.3e})",
                c.name,
                c.value,
                c.comparison.symbol(),
                c.threshold
            )
        })
        .collect()
}

fn summary(r: &RunReport) -> String {
    r.checks
        .iter()
        .map(|c| format!("{}={:.3e}", c.name, c.value))
        .collect::<Vec<_>>()
        .join(" ")
}

fn without_timing(json: &str) -> String {
    json.lines()
        .filter(|l| !l.contains("\"wall_time_s\""))
        .collect::<Vec<_>>()
        .join("\n")
}

struct Ledger {
    failed: Vec<usize>,
}

impl Ledger {
    fn record(
        &mut self,
        n: usize,
        start: Instant,
        reports: &[&RunReport],
        extra: Result<String, String>,
    ) {
        let mut problems: Vec<String> = reports.iter().flat_map(|r| failures(r)).collect();
        let detail = match extra {
            Ok(d) => d,
            Err(e) => {
                problems.push(e.clone());
                e
            }
        };
        let pass = problems.is_empty();
        let body = if pass {
            let mut parts: Vec<String> = reports.iter().map(|r| summary(r)).collect();
            if !detail.is_empty() {
                parts.push(detail);
            }
            parts.join(" | ")
        } else {
            problems.join("; ")
        };
        println!(
            "criterion {n}: {} ({:.1} s) {body}",
            if pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
        if !pass {
            self.failed.push(n);
        }
    }
}

fn nested_heat_pairs() -> Result<String, String> {
    let pairs = [
        ((0.3, 0.6), (0.2, 0.7)),
        ((0.4, 0.5), (0.3, 0.6)),
        ((0.0, 0.2), (0.0, 0.5)),
        ((0.7, 0.9), (0.6, 1.0)),
        ((0.45, 0.55), (0.4, 0.6)),
        ((0.1, 0.3), (0.05, 0.35)),
        ((0.5, 0.8), (0.5, 0.9)),
        ((0.2, 0.4), (0.0, 1.0)),
        ((0.6, 0.7), (0.55, 0.8)),
        ((0.25, 0.3), (0.2, 0.32)),
    ];
    let constant = |mode: &str, (a, b): (f64, f64)| {
        let lo = format!("geometry.omega_lo=[{a:?}]");
        let hi = format!("geometry.omega_hi=[{b:?}]");
        let mode = format!("observability.mode=\"{mode}\"");
        let r = run(
            Experiment::Observability,
            &[
                "grid.n=40",
                "grid.horizon=0.3",
                "grid.steps=150",
                &lo,
                &hi,
                &mode,
            ],
        );
        r.results["points"][0]["constant"].as_f64().unwrap()
    };
    let mut worst = f64::INFINITY;
    for mode in ["initial", "terminal"] {
        for (small, large) in pairs {
            let (cs, cl) = (constant(mode, small), constant(mode, large));
            if cs < cl * (1.0 - 1e-12) {
                return Err(format!(
                    "{mode} {small:?} gives {cs:.6e} < {large:?} {cl:.6e}"
                ));
            }
            worst = worst.min(cs / cl);
        }
    }
    Ok(format!("nested pairs min ratio={worst:.4}"))
}

#[test]
fn acceptance() {
    let mut ledger = Ledger { failed: vec![] };

    let t = Instant::now();
    let r = run(
        Experiment::VerifyIdentity,
        &[
            "identity.kinds=[\"ode\",\"multiplier\",\"deterministic\"]",
            "identity.slices=[]",
        ],
    );
    let count = if r.checks.len() == 3 {
        Ok(String::new())
    } else {
        Err(format!("{} checks", r.checks.len()))
    };
    ledger.record(1, t, &[&r], count);

    let t = Instant::now();
    let r = run(Experiment::VerifyIdentity, &["identity.kinds=[]"]);
    let count = if r.checks.len() == 6 {
        Ok(String::new())
    } else {
        Err(format!("{} checks", r.checks.len()))
    };
    ledger.record(2, t, &[&r], count);

    let t = Instant::now();
    let r = run(Experiment::StochIdentity, &[]);
    ledger.record(3, t, &[&r], Ok(String::new()));

    let t = Instant::now();
    let r = run(Experiment::Kalman, &[]);
    ledger.record(4, t, &[&r], Ok(format!("systems={}", r.results["systems"])));

    let t = Instant::now();
    let r = run(Experiment::NullControl, &[]);
    let sweep = if r.checks.len() == 3 {
        Ok(String::new())
    } else {
        Err("epsilon sweep missing".into())
    };
    ledger.record(5, t, &[&r], sweep);

    let t = Instant::now();
    let beyond = run(Experiment::ExactControl, &["grid.horizon=2.5"]);
    let short = run(Experiment::ExactControl, &["grid.horizon=1.0"]);
    let t_star = beyond.results["t_star"].as_f64().unwrap();
    let geometry = if (t_star - 2.2).abs() < 1e-12
        && beyond.results["beyond_critical_time"] == true
        && short.results["beyond_critical_time"] == false
    {
        Ok(format!("t_star={t_star}"))
    } else {
        Err(format!("unexpected critical time {t_star}"))
    };
    ledger.record(6, t, &[&beyond, &short], geometry);

    let t = Instant::now();
    let r = run(Experiment::SemilinearControl, &[]);
    ledger.record(7, t, &[&r], Ok(String::new()));

    let t = Instant::now();
    let r = run(Experiment::LrConstant, &[]);
    ledger.record(8, t, &[&r], Ok(String::new()));

    let t = Instant::now();
    let pairs = nested_heat_pairs();
    let sweep = [
        "observability.equation=\"wave\"",
        "observability.sweep={key=\"grid.n\", values=[50, 100, 200]}",
    ];
    let stable = run(
        Experiment::Observability,
        &[sweep[0], sweep[1], "grid.horizon=2.5"],
    );
    let divergent = run(
        Experiment::Observability,
        &[sweep[0], sweep[1], "grid.horizon=1.0"],
    );
    let has = |r: &RunReport, name: &str| r.checks.iter().any(|c| c.name == name);
    let pairs = pairs.and_then(|d| {
        if has(&stable, "refinement_ratio") && has(&divergent, "refinement_growth") {
            Ok(d)
        } else {
            Err("refinement checks missing".into())
        }
    });
    ledger.record(9, t, &[&stable, &divergent], pairs);

    let t = Instant::now();
    let r = run(Experiment::StochHeat, &[]);
    ledger.record(10, t, &[&r], Ok(String::new()));

    let t = Instant::now();
    let zero = run(
        Experiment::Stabilize,
        &[
            "grid.horizon=50",
            "grid.steps=10000",
            "stabilization.right=0.0",
        ],
    );
    let local = run(Experiment::Stabilize, &["stabilization.damping=\"local\""]);
    let matched = run(
        Experiment::Stabilize,
        &[
            "grid.horizon=5",
            "grid.steps=1000",
            "data.profile=\"sin8\"",
            "stabilization.expect=\"extinction\"",
        ],
    );
    let kinds = ["energy_drift", "decay_rate", "late_energy_ratio"];
    let present = [&zero, &local, &matched]
        .iter()
        .zip(kinds)
        .all(|(r, k)| has(r, k));
    let present = if present {
        Ok(String::new())
    } else {
        Err("stabilization checks missing".into())
    };
    ledger.record(11, t, &[&zero, &local, &matched], present);

    let t = Instant::now();
    let cases: [(Experiment, &[&str]); 2] = [
        (Experiment::Kalman, &["seed=17"]),
        (
            Experiment::Observability,
            &["seed=17", "observability.equation=\"stoch-heat\""],
        ),
    ];
    let mut identical = Ok("kalman and stochastic observability reports identical".to_string());
    for (kind, sets) in cases {
        let a = without_timing(&to_json(&run(kind, sets)));
        let b = without_timing(&to_json(&run(kind, sets)));
        if a != b {
            identical = Err(format!("{} reports differ", kind.name()));
        }
    }
    ledger.record(12, t, &[], identical);

    assert!(
        ledger.failed.is_empty(),
        "failed criteria: {:?}",
        ledger.failed
    );
}
