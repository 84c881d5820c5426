//! Experiment reports and their CSV/JSON encodings.

use std::fmt::Write as _;
use std::io;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, OutputFormat};
use crate::error::{Error, Result};
use crate::stats::z_score;

pub const CSV_HEADER: &str = "quantity,k,observed,predicted,stderr,z,trials,seed";

/// How an asserted row is judged.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    /// Not asserted.
    None,
    /// `|z| ≤ threshold`.
    TwoSided,
    /// `z ≤ threshold`: the prediction is an upper bound.
    UpperBound,
    /// `observed ≤ predicted`, no sampling error involved.
    AtMost,
    /// `observed ≥ predicted`, no sampling error involved.
    AtLeast,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub quantity: String,
    pub k: Option<u64>,
    pub observed: f64,
    pub predicted: Option<f64>,
    pub stderr: Option<f64>,
    pub z: Option<f64>,
    pub trials: u64,
    pub seed: u64,
    pub check: Check,
    /// `None` for unasserted rows and for rows whose standard error is undefined.
    pub pass: Option<bool>,
}

impl ReportRow {
    /// An unasserted measurement.
    pub fn measure(quantity: impl Into<String>, k: Option<u64>, observed: f64, trials: u64, seed: u64) -> Self {
        Self {
            quantity: quantity.into(),
            k,
            observed,
            predicted: None,
            stderr: None,
            z: None,
            trials,
            seed,
            check: Check::None,
            pass: None,
        }
    }

    /// An observation carried next to a reference value without asserting.
    pub fn compare(mut self, predicted: f64, stderr: Option<f64>) -> Self {
        self.predicted = Some(predicted);
        self.stderr = stderr;
        self.z = z_score(self.observed, predicted, stderr);
        self
    }

    /// Asserts `observed` against `predicted` with the given check.
    pub fn assert(mut self, check: Check, predicted: f64, stderr: Option<f64>, threshold: f64) -> Self {
        self = self.compare(predicted, stderr);
        self.check = check;
        self.pass = match check {
            Check::None => None,
            Check::TwoSided => self.z.map(|z| z.abs() <= threshold),
            Check::UpperBound => self.z.map(|z| z <= threshold),
            Check::AtMost => Some(self.observed <= predicted),
            Check::AtLeast => Some(self.observed >= predicted),
        };
        self
    }

    pub fn asserted(&self) -> bool {
        self.check != Check::None
    }

    /// An asserted row that failed, or whose standard error was undefined.
    pub fn failed(&self) -> bool {
        self.asserted() && self.pass != Some(true)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Note {
    pub key: String,
    pub value: String,
}

/// Outcome of one verification criterion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub id: u32,
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub tool: String,
    pub version: String,
    pub config: Option<ExperimentConfig>,
    pub rows: Vec<ReportRow>,
    pub notes: Vec<Note>,
    pub verdicts: Vec<Verdict>,
    pub total_draws: u64,
    pub passed: bool,
}

impl Report {
    pub fn new(config: Option<ExperimentConfig>) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            rows: Vec::new(),
            notes: Vec::new(),
            verdicts: Vec::new(),
            total_draws: 0,
            passed: true,
        }
    }

    pub fn note(&mut self, key: impl Into<String>, value: impl ToString) {
        self.notes.push(Note { key: key.into(), value: value.to_string() });
    }

    /// Recomputes `passed` from the asserted rows and the verdicts.
    pub fn finish(mut self) -> Self {
        self.passed = !self.rows.iter().any(ReportRow::failed) && self.verdicts.iter().all(|v| v.pass);
        self
    }

    pub fn failures(&self) -> impl Iterator<Item = &ReportRow> {
        self.rows.iter().filter(|r| r.failed())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.rows.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.quantity,
                r.k.map(|k| k.to_string()).unwrap_or_default(),
                csv_num(Some(r.observed)),
                csv_num(r.predicted),
                csv_num(r.stderr),
                csv_num(r.z),
                r.trials,
                r.seed
            );
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        let mut buf = Vec::new();
        let mut ser = serde_json::Serializer::with_formatter(&mut buf, FullPrecision::default());
        self.serialize(&mut ser).map_err(|e| Error::Serialization(e.to_string()))?;
        buf.push(b'\n');
        String::from_utf8(buf).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn render(&self, format: OutputFormat) -> Result<String> {
        match format {
            OutputFormat::Csv => Ok(self.to_csv()),
            OutputFormat::Json => self.to_json(),
        }
    }

    /// Human-readable summary of asserted rows and verdicts.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for v in &self.verdicts {
            let _ = writeln!(out, "criterion {:>2} [{}] {}: {}", v.id, pass_word(v.pass), v.name, v.detail);
        }
        let asserted = self.rows.iter().filter(|r| r.asserted()).count();
        let failed: Vec<_> = self.failures().collect();
        let _ = writeln!(out, "{} rows, {asserted} asserted, {} failed", self.rows.len(), failed.len());
        for r in failed {
            let _ = writeln!(
                out,
                "  FAIL {}{}: observed {:.6e}, predicted {}, z {}",
                r.quantity,
                r.k.map(|k| format!(" k={k}")).unwrap_or_default(),
                r.observed,
                r.predicted.map_or("-".into(), |p| format!("{p:.6e}")),
                r.z.map_or("undefined".into(), |z| format!("{z:.3}")),
            );
        }
        let _ = writeln!(out, "overall: {}", pass_word(self.passed));
        out
    }
}

fn pass_word(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

fn csv_num(x: Option<f64>) -> String {
    match x {
        None => String::new(),
        Some(v) if v.is_nan() => "nan".into(),
        Some(v) if v.is_infinite() => if v > 0.0 { "inf" } else { "-inf" }.into(),
        Some(v) => format!("{v:.16e}"),
    }
}

/// Pretty JSON with every float written to 17 significant digits.
#[derive(Default)]
struct FullPrecision<'a>(serde_json::ser::PrettyFormatter<'a>);

impl serde_json::ser::Formatter for FullPrecision<'_> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{value:.16e}")
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}
