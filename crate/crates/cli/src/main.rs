use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pdectl_cli::config::{parse_assignment, parse_value};
use pdectl_cli::{run_experiment, CliError, Experiment, ExperimentConfig, RunReport};

#[derive(Parser)]
#[command(
    name = "pdectl",
    version,
    about = "Control, observability and stabilization experiments for model PDEs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Global seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Write the JSON report to PATH (standard output if PATH is omitted).
    #[arg(long, value_name = "PATH", num_args = 0..=1, default_missing_value = "-")]
    json: Option<String>,
    /// Write the check table as CSV to PATH (standard output if PATH is omitted).
    #[arg(long, value_name = "PATH", num_args = 0..=1, default_missing_value = "-")]
    csv: Option<String>,
    /// Directory for CSV artifacts.
    #[arg(long, value_name = "DIR")]
    out_dir: Option<String>,
    /// Write every K-th trajectory snapshot to trajectory.csv in the artifact directory.
    #[arg(long, value_name = "K")]
    dump_every: Option<usize>,
    /// Write the first deterministic identity instance as polynomial text.
    #[arg(long)]
    dump_instance: bool,
    /// Space dimension (1 or 2).
    #[arg(long)]
    dim: Option<usize>,
    /// Interior nodes per axis.
    #[arg(long)]
    n: Option<usize>,
    /// Time horizon T.
    #[arg(long)]
    horizon: Option<f64>,
    /// Time steps.
    #[arg(long)]
    steps: Option<usize>,
    /// Override any configuration key, e.g. `--set solver.epsilon=1e-6`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Randomized verification of the weighted identities.
    VerifyIdentity {
        #[command(flatten)]
        common: Common,
        /// Identity kinds, comma separated.
        #[arg(long, value_delimiter = ',')]
        kinds: Vec<String>,
        /// Random instances per kind.
        #[arg(long)]
        instances: Option<usize>,
    },
    /// Penalized HUM null control of the heat equation.
    NullControl {
        #[command(flatten)]
        common: Common,
        /// Penalization ε.
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// HUM exact control of the wave equation.
    ExactControl {
        #[command(flatten)]
        common: Common,
    },
    /// Fixed-point null control of the semilinear heat equation.
    SemilinearControl {
        #[command(flatten)]
        common: Common,
        /// Exponent r of the nonlinearity.
        #[arg(long)]
        r: Option<f64>,
    },
    /// Observability constants.
    Observability {
        #[command(flatten)]
        common: Common,
        /// heat, wave or stoch-heat.
        #[arg(long)]
        equation: Option<String>,
        /// initial or terminal.
        #[arg(long)]
        mode: Option<String>,
        /// interior or boundary (wave only).
        #[arg(long)]
        observation: Option<String>,
        /// Sweep over a config key, e.g. `grid.n=50,100,200`.
        #[arg(long, value_name = "KEY=V1,V2,..")]
        sweep: Option<String>,
    },
    /// Gram-matrix constants for sums of eigenfunctions.
    LrConstant {
        #[command(flatten)]
        common: Common,
        /// Observation box `a,b` (1D) or `a,b,c,d` (2D, `(a,b)×(c,d)`).
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        omega: Vec<f64>,
        /// Largest number of modes.
        #[arg(long)]
        modes: Option<usize>,
    },
    /// Energy decay of the damped wave equation.
    Stabilize {
        #[command(flatten)]
        common: Common,
        /// boundary or local.
        #[arg(long)]
        damping: Option<String>,
    },
    /// Second moment of the stochastic heat equation.
    StochHeat {
        #[command(flatten)]
        common: Common,
        /// Monte Carlo paths.
        #[arg(long)]
        paths: Option<usize>,
    },
    /// Time-step refinement of the stochastic identities.
    StochIdentity {
        #[command(flatten)]
        common: Common,
    },
    /// Observed boundary, control region, critical time and the assumption checks.
    Geometry {
        #[command(flatten)]
        common: Common,
    },
    /// Kalman rank against Gramian positivity on random systems.
    Kalman {
        #[command(flatten)]
        common: Common,
        /// Number of random systems.
        #[arg(long)]
        systems: Option<usize>,
    },
    /// Runs the experiment named in the configuration file.
    Run {
        #[command(flatten)]
        common: Common,
    },
}

fn string(s: &str) -> toml::Value {
    toml::Value::String(s.to_string())
}

fn build(cli: Cli) -> Result<ExperimentConfig, CliError> {
    let mut extra: Vec<(String, toml::Value)> = vec![];
    let mut put = |k: &str, v: toml::Value| extra.push((k.to_string(), v));
    let (common, kind) = match cli.command {
        Command::VerifyIdentity {
            common,
            kinds,
            instances,
        } => {
            if !kinds.is_empty() {
                put(
                    "identity.kinds",
                    toml::Value::Array(kinds.iter().map(|k| string(k)).collect()),
                );
            }
            if let Some(i) = instances {
                put("identity.instances", toml::Value::Integer(i as i64));
            }
            (common, Some(Experiment::VerifyIdentity))
        }
        Command::NullControl { common, epsilon } => {
            if let Some(e) = epsilon {
                put("solver.epsilon", toml::Value::Float(e));
            }
            (common, Some(Experiment::NullControl))
        }
        Command::ExactControl { common } => (common, Some(Experiment::ExactControl)),
        Command::SemilinearControl { common, r } => {
            if let Some(r) = r {
                put("semilinear.r_exponent", toml::Value::Float(r));
            }
            (common, Some(Experiment::SemilinearControl))
        }
        Command::Observability {
            common,
            equation,
            mode,
            observation,
            sweep,
        } => {
            for (k, v) in [
                ("equation", equation),
                ("mode", mode),
                ("observation", observation),
            ] {
                if let Some(v) = v {
                    put(&format!("observability.{k}"), string(&v));
                }
            }
            if let Some(s) = sweep {
                let (key, values) = s.split_once('=').ok_or_else(|| {
                    CliError::Usage(format!("--sweep expects KEY=V1,V2,.., got '{s}'"))
                })?;
                let mut t = toml::Table::new();
                t.insert("key".into(), string(key.trim()));
                t.insert(
                    "values".into(),
                    toml::Value::Array(values.split(',').map(|v| parse_value(v.trim())).collect()),
                );
                put("observability.sweep", toml::Value::Table(t));
            }
            (common, Some(Experiment::Observability))
        }
        Command::LrConstant {
            common,
            omega,
            modes,
        } => {
            if !omega.is_empty() {
                if omega.len() % 2 != 0 {
                    return Err(CliError::Usage("--omega expects a,b or a,b,c,d".into()));
                }
                let lo = omega
                    .iter()
                    .step_by(2)
                    .map(|v| toml::Value::Float(*v))
                    .collect();
                let hi = omega
                    .iter()
                    .skip(1)
                    .step_by(2)
                    .map(|v| toml::Value::Float(*v))
                    .collect();
                put("lr.omega_lo", toml::Value::Array(lo));
                put("lr.omega_hi", toml::Value::Array(hi));
            }
            if let Some(m) = modes {
                put("lr.modes", toml::Value::Integer(m as i64));
            }
            (common, Some(Experiment::LrConstant))
        }
        Command::Stabilize { common, damping } => {
            if let Some(d) = damping {
                put("stabilization.damping", string(&d));
            }
            (common, Some(Experiment::Stabilize))
        }
        Command::StochHeat { common, paths } => {
            if let Some(p) = paths {
                put("stochastic.paths", toml::Value::Integer(p as i64));
            }
            (common, Some(Experiment::StochHeat))
        }
        Command::StochIdentity { common } => (common, Some(Experiment::StochIdentity)),
        Command::Geometry { common } => (common, Some(Experiment::Geometry)),
        Command::Kalman { common, systems } => {
            if let Some(s) = systems {
                put("kalman.systems", toml::Value::Integer(s as i64));
            }
            (common, Some(Experiment::Kalman))
        }
        Command::Run { common } => (common, None),
    };
    let text = match &common.config {
        Some(p) => Some(
            std::fs::read_to_string(p)
                .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", p.display())))?,
        ),
        None if kind.is_none() => return Err(CliError::Usage("run needs --config".into())),
        None => None,
    };
    let mut overrides = vec![];
    if let Some(s) = common.seed {
        let s =
            i64::try_from(s).map_err(|_| CliError::Usage("--seed must be below 2^63".into()))?;
        overrides.push(("seed".to_string(), toml::Value::Integer(s)));
    }
    let int = |v: usize| toml::Value::Integer(v as i64);
    for (k, v) in [
        ("grid.dim", common.dim),
        ("grid.n", common.n),
        ("grid.steps", common.steps),
    ] {
        if let Some(v) = v {
            overrides.push((k.to_string(), int(v)));
        }
    }
    if let Some(t) = common.horizon {
        overrides.push(("grid.horizon".into(), toml::Value::Float(t)));
    }
    overrides.extend(extra);
    for (k, v) in [
        ("output.json", common.json),
        ("output.csv", common.csv),
        ("output.dir", common.out_dir),
    ] {
        if let Some(v) = v {
            overrides.push((k.to_string(), string(&v)));
        }
    }
    if let Some(k) = common.dump_every {
        overrides.push(("output.dump_every".into(), int(k)));
    }
    if common.dump_instance {
        overrides.push(("output.dump_instance".into(), toml::Value::Boolean(true)));
    }
    for s in &common.set {
        overrides.push(parse_assignment(s)?);
    }
    ExperimentConfig::load(text.as_deref(), kind, &overrides)
}

fn summarize(report: &RunReport) {
    for c in &report.checks {
        eprintln!(
            "{} {}: {:.6e} {} {:.6e}",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.comparison.symbol(),
            c.threshold
        );
    }
    for a in &report.artifacts {
        eprintln!("wrote {a}");
    }
    eprintln!(
        "{} in {:.2} s",
        if report.pass { "pass" } else { "fail" },
        report.wall_time_s
    );
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = build(cli).and_then(|c| run_experiment(&c));
    match outcome {
        Ok(report) => {
            summarize(&report);
            ExitCode::from(if report.pass { 0 } else { 1 })
        }
        Err(e) => {
            eprintln!("pdectl: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
