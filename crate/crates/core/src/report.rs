//! Run manifests and their JSON / CSV serializations.

use std::io::Write;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{LabError, Result};
use crate::lemmas::{CheckReport, ScanSummary};

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const CSV_HEADER: [&str; 8] = [
    "lemma_id",
    "lambda",
    "params_json",
    "lhs",
    "rhs",
    "ratio",
    "fitted_constant",
    "pass",
];

/// Everything one command produced, in grid order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Value,
    pub seed: u64,
    pub artifact_version: String,
    /// Unix seconds; only recorded on request so that re-runs stay byte-identical.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub started: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished: Option<String>,
    pub reports: Vec<CheckReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<ScanSummary>,
    /// Command-specific output that is not a check (sieve statistics, spectrum peaks).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<Value>,
}

impl RunManifest {
    pub fn new(
        command: impl Into<String>,
        config: Value,
        seed: u64,
        reports: Vec<CheckReport>,
    ) -> Self {
        Self {
            command: command.into(),
            config,
            seed,
            artifact_version: ARTIFACT_VERSION.to_string(),
            started: None,
            finished: None,
            reports,
            summary: None,
            payload: None,
        }
    }

    pub fn all_pass(&self) -> bool {
        self.reports.iter().all(|r| r.pass)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Current time as fractional Unix seconds.
pub fn unix_timestamp() -> String {
    let d = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .unwrap_or_default();
    format!("{}.{:03}", d.as_secs(), d.subsec_millis())
}

fn float_field(x: f64) -> String {
    if x.is_finite() {
        // Display is the shortest representation that parses back to `x`.
        format!("{x}")
    } else if x.is_nan() {
        "NaN".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub fn write_csv<W: Write>(reports: &[CheckReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in reports {
        w.write_record([
            r.lemma_id.as_str().to_string(),
            r.lambda.to_string(),
            serde_json::to_string(&r.params)?,
            float_field(r.lhs),
            float_field(r.rhs),
            float_field(r.ratio),
            r.fitted_constant.map(float_field).unwrap_or_default(),
            r.pass.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Header plus one RFC-4180 row per report.
pub fn emit_csv(reports: &[CheckReport]) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(reports, &mut buf)?;
    String::from_utf8(buf).map_err(|e| LabError::Format(e.to_string()))
}

fn parse_float(field: &str) -> Result<f64> {
    field
        .parse::<f64>()
        .map_err(|_| LabError::Format(format!("bad number {field:?} in CSV")))
}

/// Inverse of [`emit_csv`].
pub fn parse_csv(text: &str) -> Result<Vec<CheckReport>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header = rdr.headers()?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(LabError::Format(format!(
            "unexpected CSV header {header:?}"
        )));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let lambda = rec[1]
            .parse()
            .map_err(|_| LabError::Format(format!("bad lambda {:?}", &rec[1])))?;
        let fitted = match &rec[6] {
            "" => None,
            f => Some(parse_float(f)?),
        };
        let pass = match &rec[7] {
            "true" => true,
            "false" => false,
            p => return Err(LabError::Format(format!("bad pass flag {p:?}"))),
        };
        out.push(CheckReport {
            lemma_id: rec[0].parse()?,
            lambda,
            params: serde_json::from_str(&rec[2])?,
            lhs: parse_float(&rec[3])?,
            rhs: parse_float(&rec[4])?,
            ratio: parse_float(&rec[5])?,
            fitted_constant: fitted,
            pass,
        });
    }
    Ok(out)
}
