//! Run reports and their JSON and CSV encodings.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

use crate::config::{Experiment, ExperimentConfig};
use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    Le,
    Lt,
    Ge,
    Gt,
}

impl Comparison {
    pub fn holds(self, value: f64, threshold: f64) -> bool {
        match self {
            Self::Le => value <= threshold,
            Self::Lt => value < threshold,
            Self::Ge => value >= threshold,
            Self::Gt => value > threshold,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Self::Le => "<=",
            Self::Lt => "<",
            Self::Ge => ">=",
            Self::Gt => ">",
        }
    }
}

fn nan_as_null<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_none()
    }
}

fn null_as_nan<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

/// One asserted outcome: `value comparison threshold`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    #[serde(serialize_with = "nan_as_null", deserialize_with = "null_as_nan")]
    pub value: f64,
    pub threshold: f64,
    pub comparison: Comparison,
    pub pass: bool,
}

impl Check {
    pub fn new(
        name: impl Into<String>,
        value: f64,
        comparison: Comparison,
        threshold: f64,
    ) -> Self {
        Self {
            name: name.into(),
            value,
            threshold,
            comparison,
            pass: comparison.holds(value, threshold),
        }
    }

    /// A boolean outcome recorded as `value ≥ 1` with value 1 or 0.
    pub fn flag(name: impl Into<String>, ok: bool) -> Self {
        Self::new(name, if ok { 1.0 } else { 0.0 }, Comparison::Ge, 1.0)
    }

    /// Whether `pass` agrees with the comparison.
    pub fn is_consistent(&self) -> bool {
        self.pass == self.comparison.holds(self.value, self.threshold)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub tool: String,
    pub version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<Experiment>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<ExperimentConfig>,
    pub checks: Vec<Check>,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub results: Value,
    pub artifacts: Vec<String>,
    pub pass: bool,
    /// The only field that differs between repeated runs.
    pub wall_time_s: f64,
}

impl RunReport {
    /// Metadata only: no experiment, checks or results.
    pub fn empty() -> Self {
        Self {
            tool: "pdectl".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            experiment: None,
            seed: None,
            config: None,
            checks: vec![],
            results: Value::Null,
            artifacts: vec![],
            pass: true,
            wall_time_s: 0.0,
        }
    }

    pub fn push(&mut self, check: Check) {
        self.pass &= check.pass;
        self.checks.push(check);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

/// Formats a float with 17 significant digits.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_value(out: &mut String, v: &Value, indent: usize) {
    let pad = |n: usize| "  ".repeat(n);
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                let _ = write!(out, "{i}");
            } else if let Some(u) = n.as_u64() {
                let _ = write!(out, "{u}");
            } else {
                out.push_str(&format_float(n.as_f64().expect("finite number")));
            }
        }
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(a) if a.is_empty() => out.push_str("[]"),
        Value::Array(a) => {
            out.push_str("[\n");
            for (i, x) in a.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                write_value(out, x, indent + 1);
                out.push_str(if i + 1 < a.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push(']');
        }
        Value::Object(m) if m.is_empty() => out.push_str("{}"),
        Value::Object(m) => {
            let mut keys: Vec<&String> = m.keys().collect();
            keys.sort();
            out.push_str("{\n");
            for (i, k) in keys.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                out.push_str(&Value::String((*k).clone()).to_string());
                out.push_str(": ");
                write_value(out, &m[*k], indent + 1);
                out.push_str(if i + 1 < keys.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push('}');
        }
    }
}

/// JSON with sorted keys, two-space indentation and floats in `{:.16e}` form.
pub fn to_json(report: &RunReport) -> String {
    let v = serde_json::to_value(report).expect("reports serialize");
    let mut out = String::new();
    write_value(&mut out, &v, 0);
    out.push('\n');
    out
}

pub fn from_json(text: &str) -> Result<RunReport, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::Usage(format!("report: {e}")))
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One row per check: `name,value,comparison,threshold,pass`.
pub fn to_csv(report: &RunReport) -> String {
    let mut out = String::from("name,value,comparison,threshold,pass\n");
    for c in &report.checks {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            csv_field(&c.name),
            format_float(c.value),
            c.comparison.symbol(),
            format_float(c.threshold),
            c.pass
        );
    }
    out
}

/// Writes the report to `path`, or to standard output for `-`.
pub fn emit_report(report: &RunReport, format: Format, path: &str) -> Result<(), CliError> {
    let text = match format {
        Format::Json => to_json(report),
        Format::Csv => to_csv(report),
    };
    if path == "-" {
        std::io::stdout().write_all(text.as_bytes())?;
        return Ok(());
    }
    if let Some(parent) = Path::new(path)
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
    {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, text)?;
    Ok(())
}
