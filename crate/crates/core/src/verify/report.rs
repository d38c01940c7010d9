use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};

use super::{IntegralBundle, LemmaCheck};
use crate::error::{Error, Result};

pub const SCHEMA: &str = "newtonspec-report/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub slack_ratio: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualSummary {
    pub trace_max_abs: f64,
    pub contraction_max_abs: f64,
    pub weak_lr_x: f64,
    pub weak_lr_x_relative: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshCounts {
    pub vertices: usize,
    pub elements: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverSummary {
    pub name: String,
    pub iterations: usize,
    pub max_residual: f64,
}

/// Wall-clock seconds per phase. Only recorded on request, since it makes reports differ
/// between otherwise identical runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub mesh: f64,
    pub assemble: f64,
    pub solve: f64,
    pub integrate: f64,
    pub lemma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub schema: String,
    pub surface: String,
    pub n: usize,
    #[serde(rename = "N")]
    pub big_n: usize,
    pub c: u8,
    pub r: usize,
    pub level: usize,
    pub mesh: MeshCounts,
    pub quadrature_order: usize,
    pub mass: String,
    pub equality_case: bool,
    pub tol_discr: f64,
    pub eigenvalues: Vec<f64>,
    pub clusters: Vec<Vec<usize>>,
    pub solver: SolverSummary,
    pub integrals: IntegralBundle,
    pub thm1: InequalityCheck,
    pub thm2: InequalityCheck,
    pub cor1: InequalityCheck,
    pub cor2: InequalityCheck,
    pub eigenvalue_chain_holds: bool,
    pub identity_residuals: ResidualSummary,
    pub ellipticity_min: f64,
    pub lemma_check_pass: bool,
    pub lemma: LemmaCheck,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timings: Option<Timings>,
}

impl VerificationReport {
    /// 0 when every check passes, 2 when an inequality or identity check fails.
    pub fn exit_code(&self) -> i32 {
        if self.pass {
            0
        } else {
            2
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            other => Err(Error::InvalidInput(format!("unknown report format {other:?}"))),
        }
    }
}

/// Pretty JSON with every float written as 17 significant digits.
struct FixedDigits<'a>(PrettyFormatter<'a>);

impl Formatter for FixedDigits<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        if value.is_finite() {
            write!(writer, "{value:.16e}")
        } else {
            writer.write_all(b"null")
        }
    }

    fn begin_array<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.begin_array(writer)
    }

    fn end_array<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_array(writer)
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(writer, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_array_value(writer)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.begin_object(writer)
    }

    fn end_object<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_object(writer)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(writer, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.begin_object_value(writer)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_object_value(writer)
    }
}

/// Serializes any report-like value with the fixed float format.
pub fn to_fixed_json<S: Serialize>(value: &S) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FixedDigits(PrettyFormatter::new()));
    value
        .serialize(&mut ser)
        .expect("in-memory serialization of plain data cannot fail");
    buf.push(b'\n');
    String::from_utf8(buf).expect("serde_json writes UTF-8")
}

pub fn report_to_json(report: &VerificationReport) -> String {
    to_fixed_json(report)
}

fn flat_fields(report: &VerificationReport) -> Vec<(String, String)> {
    let f = |x: f64| format!("{x:.16e}");
    let lambda = |i: usize| report.eigenvalues.get(i).map_or(String::new(), |x| f(*x));
    let out: Vec<(&'static str, String)> = vec![
        ("schema", report.schema.clone()),
        ("surface", report.surface.clone()),
        ("n", report.n.to_string()),
        ("N", report.big_n.to_string()),
        ("c", report.c.to_string()),
        ("r", report.r.to_string()),
        ("level", report.level.to_string()),
        ("vertices", report.mesh.vertices.to_string()),
        ("elements", report.mesh.elements.to_string()),
        ("quadrature_order", report.quadrature_order.to_string()),
        ("mass", report.mass.clone()),
        ("equality_case", report.equality_case.to_string()),
        ("lambda_1", lambda(0)),
        ("lambda_n", lambda(report.n - 1)),
        ("vol", f(report.integrals.vol)),
        ("int_h_r", f(report.integrals.int_h_r)),
        ("int_hnext2_plus_c_hr2", f(report.integrals.int_hnext2_plus_c_hr2)),
        ("int_s_r", f(report.integrals.int_s_r)),
        ("int_h2_plus_c", f(report.integrals.int_h2_plus_c)),
    ];
    let mut checks = Vec::new();
    for (name, check) in [
        ("thm1", &report.thm1),
        ("thm2", &report.thm2),
        ("cor1", &report.cor1),
        ("cor2", &report.cor2),
    ] {
        let key = |suffix: &str| format!("{name}_{suffix}");
        checks.push((key("lhs"), f(check.lhs)));
        checks.push((key("rhs"), f(check.rhs)));
        checks.push((key("slack_ratio"), f(check.slack_ratio)));
        checks.push((key("pass"), check.pass.to_string()));
    }
    let tail: Vec<(&'static str, String)> = vec![
        ("trace_max_abs", f(report.identity_residuals.trace_max_abs)),
        ("contraction_max_abs", f(report.identity_residuals.contraction_max_abs)),
        ("weak_lr_x", f(report.identity_residuals.weak_lr_x)),
        ("ellipticity_min", f(report.ellipticity_min)),
        ("lemma_check_pass", report.lemma_check_pass.to_string()),
        ("pass", report.pass.to_string()),
    ];
    out.into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .chain(checks)
        .chain(tail.into_iter().map(|(k, v)| (k.to_string(), v)))
        .collect()
}

/// Header row and one value row of the scalar fields.
pub fn report_to_csv(report: &VerificationReport) -> String {
    let fields = flat_fields(report);
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record(fields.iter().map(|(k, _)| k.as_str()))
        .and_then(|_| writer.write_record(fields.iter().map(|(_, v)| v.as_str())))
        .expect("in-memory CSV write cannot fail");
    String::from_utf8(writer.into_inner().expect("flush to Vec")).expect("CSV of UTF-8 fields")
}

pub fn emit_report(report: &VerificationReport, path: &Path, format: ReportFormat) -> Result<()> {
    let text = match format {
        ReportFormat::Json => report_to_json(report),
        ReportFormat::Csv => report_to_csv(report),
    };
    let wrap = |source: io::Error| Error::ReportWrite {
        path: path.to_path_buf(),
        source,
    };
    let mut out = BufWriter::new(File::create(path).map_err(wrap)?);
    out.write_all(text.as_bytes()).map_err(wrap)?;
    out.flush().map_err(wrap)
}

pub fn parse_report(text: &str) -> Result<VerificationReport> {
    serde_json::from_str(text).map_err(|e| Error::ReportParse(e.to_string()))
}
