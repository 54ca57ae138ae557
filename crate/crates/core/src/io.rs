//! Text formats: measure and matrix files, JSON with full-precision floats,
//! long-form result tables and plot columns.
//!
//! Floats are written with 17 significant digits (`{:.16e}`) everywhere, so
//! every value read back is bit-identical to the one written.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::error::{Error, Result};
use crate::lewis::{LewisPosition, SubspaceSpec};
use crate::measures::{DiscreteIsotropicMeasure, MeasureOptions};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// `x` with 17 significant digits; `NaN`, `inf` and `-inf` otherwise.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "NaN".to_string()
    } else if x > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

fn parse_f64(token: &str, line: u64) -> Result<f64> {
    token.trim().parse::<f64>().map_err(|_| Error::Parse {
        line,
        message: format!("'{}' is not a number", token.trim()),
    })
}

struct FullPrecision<'a>(PrettyFormatter<'a>);

impl Formatter for FullPrecision<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> std::io::Result<()> {
        w.write_all(format!("{value:.16e}").as_bytes())
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> std::io::Result<()> {
        self.write_f64(w, f64::from(value))
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> std::io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> std::io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Pretty JSON with 17-digit floats and a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FullPrecision(PrettyFormatter::new()));
    value.serialize(&mut ser).map_err(|e| Error::Io(e.to_string()))?;
    buf.push(b'\n');
    String::from_utf8(buf).map_err(|e| Error::Io(e.to_string()))
}

pub fn from_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line() as u64,
        message: e.to_string(),
    })
}

/// Provenance attached to every artifact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Effective configuration, flag name to value.
    pub config: BTreeMap<String, String>,
    pub seed: u64,
    pub workers: usize,
    /// Command line that regenerates the artifact.
    pub reproduce: String,
}

impl Metadata {
    /// `# key: value` lines for CSV headers.
    pub fn comment_lines(&self) -> Vec<String> {
        let config = self
            .config
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(" ");
        vec![
            format!("# {} {}", self.tool, self.version),
            format!("# command: {}", self.command),
            format!("# seed: {}", self.seed),
            format!("# workers: {}", self.workers),
            format!("# config: {config}"),
            format!("# reproduce: {}", self.reproduce),
        ]
    }
}

/// One scalar result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub op: String,
    pub params: BTreeMap<String, serde_json::Value>,
    pub value: f64,
    pub std_err: Option<f64>,
    pub samples: Option<usize>,
    pub seed: u64,
}

/// A JSON artifact: metadata, scalar records and an optional free-form
/// detail section.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub meta: Metadata,
    pub records: Vec<ResultRecord>,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub details: serde_json::Value,
}

/// Lewis position in serializable form. Atoms are the compact ones, one per
/// kept row, with masses equal to the weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LewisRecord {
    pub p: f64,
    pub weights: Vec<f64>,
    /// `R = M(w)^{-1/2}`, row-major.
    pub transform: Vec<Vec<f64>>,
    pub atoms: Vec<Vec<f64>>,
    pub masses: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    /// Input rows (0-based) that survived zero-row pruning.
    pub kept_rows: Vec<usize>,
    pub redundant_rows: Vec<usize>,
}

impl LewisRecord {
    pub fn new(pos: &LewisPosition, spec: &SubspaceSpec) -> Self {
        let compact = pos.measure.compact();
        let t = &pos.transform;
        Self {
            p: spec.p(),
            weights: pos.weights.clone(),
            transform: (0..t.nrows()).map(|i| t.row(i).iter().copied().collect()).collect(),
            atoms: compact.atoms(),
            masses: compact.masses().to_vec(),
            residual: pos.residual,
            iterations: pos.iterations,
            kept_rows: spec.kept_rows().to_vec(),
            redundant_rows: pos.redundant_rows.clone(),
        }
    }

    pub fn measure(&self) -> Result<DiscreteIsotropicMeasure> {
        let dim = self.transform.len();
        DiscreteIsotropicMeasure::new(dim, &self.atoms, &self.masses, false).map(|m| m.symmetrize())
    }
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

fn zero_or_full(x: f64) -> String {
    if x == 0.0 && x.is_sign_positive() {
        "0".to_string()
    } else {
        fmt_f64(x)
    }
}

/// Writes `theta_1,…,theta_n,mass`, one atom per row.
pub fn write_measure_csv<W: Write>(measure: &DiscreteIsotropicMeasure, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let n = measure.dim();
    let mut header: Vec<String> = (1..=n).map(|i| format!("theta_{i}")).collect();
    header.push("mass".into());
    w.write_record(&header).map_err(csv_error)?;
    for i in 0..measure.len() {
        let mut row: Vec<String> = measure.atom(i).into_iter().map(zero_or_full).collect();
        row.push(fmt_f64(measure.masses()[i]));
        w.write_record(&row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn is_antipodal_layout(atoms: &[Vec<f64>], masses: &[f64]) -> bool {
    atoms.len().is_multiple_of(2)
        && !atoms.is_empty()
        && (0..atoms.len() / 2).all(|k| {
            let (a, b) = (&atoms[2 * k], &atoms[2 * k + 1]);
            masses[2 * k] == masses[2 * k + 1] && a.iter().zip(b).all(|(x, y)| *x == -*y)
        })
}

/// Reads a measure file. Adjacent exact antipodal pairs of equal mass are
/// taken as the symmetrized layout. With `check_isotropy = false` only the
/// per-atom checks run.
pub fn read_measure_csv<R: Read>(input: R, check_isotropy: bool) -> Result<DiscreteIsotropicMeasure> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input);
    let header = rdr.headers().map_err(csv_error)?.clone();
    let cols = header.len();
    let well_formed = cols >= 2
        && header.get(cols - 1) == Some("mass")
        && (1..cols).all(|i| header.get(i - 1) == Some(format!("theta_{i}").as_str()));
    if !well_formed {
        return Err(Error::Parse {
            line: 1,
            message: "expected header theta_1,...,theta_n,mass".into(),
        });
    }
    let n = cols - 1;
    let mut atoms = Vec::new();
    let mut masses = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != cols {
            return Err(Error::Parse {
                line,
                message: format!("expected {cols} fields, found {}", rec.len()),
            });
        }
        let vals = rec.iter().map(|t| parse_f64(t, line)).collect::<Result<Vec<f64>>>()?;
        masses.push(vals[n]);
        atoms.push(vals[..n].to_vec());
    }
    let opts = MeasureOptions {
        isotropy_tol: if check_isotropy {
            MeasureOptions::default().isotropy_tol
        } else {
            None
        },
        symmetrized: is_antipodal_layout(&atoms, &masses),
    };
    DiscreteIsotropicMeasure::with_options(n, &atoms, &masses, opts)
}

/// Parses a dense matrix given as comma- or whitespace-separated rows.
/// Blank lines and `#` comments are skipped; a leading line with no numeric
/// field is taken as a header.
pub fn parse_matrix(text: &str) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut seen_data = false;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx as u64 + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = if line.contains(',') {
            line.split(',').map(str::trim).collect()
        } else {
            line.split_whitespace().collect()
        };
        if !seen_data && tokens.iter().all(|t| t.parse::<f64>().is_err()) {
            seen_data = true;
            continue;
        }
        seen_data = true;
        let row = tokens
            .iter()
            .map(|t| parse_f64(t, line_no))
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected {} columns, found {}", first.len(), row.len()),
                });
            }
        }
        rows.push(row);
    }
    let Some(first) = rows.first() else {
        return Err(Error::Parse {
            line: 0,
            message: "matrix file has no data rows".into(),
        });
    };
    let ncols = first.len();
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

/// A row type of a long-form CSV table.
pub trait CsvRow: Sized + DeserializeOwned {
    const HEADER: &'static [&'static str];
    fn fields(&self) -> Vec<String>;
}

/// Tail profile row: `P(|‖X‖ − c| ≥ ε c)` for one `ε`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub eps: f64,
    pub tail: f64,
    pub stderr: f64,
    pub center: String,
    pub n: usize,
    pub p: f64,
    pub seed: u64,
    pub count: u64,
    pub censored: bool,
    pub upper_ci: f64,
}

impl CsvRow for TailRow {
    const HEADER: &'static [&'static str] = &[
        "eps", "tail", "stderr", "center", "n", "p", "seed", "count", "censored", "upper_ci",
    ];

    fn fields(&self) -> Vec<String> {
        vec![
            fmt_f64(self.eps),
            fmt_f64(self.tail),
            fmt_f64(self.stderr),
            self.center.clone(),
            self.n.to_string(),
            fmt_f64(self.p),
            self.seed.to_string(),
            self.count.to_string(),
            self.censored.to_string(),
            fmt_f64(self.upper_ci),
        ]
    }
}

/// One point of the empirical frontier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontierCsvRow {
    pub eps: f64,
    pub k_max: usize,
    pub psi: f64,
    pub pass_rate: f64,
    pub trials: usize,
    pub seed_base: u64,
    pub net_delta: f64,
}

impl CsvRow for FrontierCsvRow {
    const HEADER: &'static [&'static str] = &["eps", "k_max", "psi", "pass_rate", "trials", "seed_base", "net_delta"];

    fn fields(&self) -> Vec<String> {
        vec![
            fmt_f64(self.eps),
            self.k_max.to_string(),
            fmt_f64(self.psi),
            fmt_f64(self.pass_rate),
            self.trials.to_string(),
            self.seed_base.to_string(),
            fmt_f64(self.net_delta),
        ]
    }
}

/// Writes `#` comment lines, the header and the rows.
pub fn write_csv<T: CsvRow, W: Write>(mut out: W, comments: &[String], rows: &[T]) -> Result<()> {
    for c in comments {
        writeln!(out, "{c}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(T::HEADER).map_err(csv_error)?;
    for row in rows {
        w.write_record(row.fields()).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn csv_string<T: CsvRow>(comments: &[String], rows: &[T]) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(&mut buf, comments, rows)?;
    String::from_utf8(buf).map_err(|e| Error::Io(e.to_string()))
}

pub fn read_csv<T: CsvRow>(text: &str) -> Result<Vec<T>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let header = rdr.headers().map_err(csv_error)?.clone();
    if header.iter().ne(T::HEADER.iter().copied()) {
        let line = header.position().map(|p| p.line()).unwrap_or(1);
        return Err(Error::Parse {
            line,
            message: format!("expected header {}", T::HEADER.join(",")),
        });
    }
    rdr.deserialize().map(|r| r.map_err(csv_error)).collect()
}

/// `(ε, −log tail, stderr/tail)`; censored and empty cells are listed as
/// comments only.
pub fn plot_tail(rows: &[TailRow]) -> String {
    let mut out = String::from("# x: eps\n# y: -log(tail)\n# yerr: stderr/tail\n");
    for r in rows {
        if r.censored || r.tail <= 0.0 {
            out.push_str(&format!(
                "# censored eps={} upper_ci={}\n",
                fmt_f64(r.eps),
                fmt_f64(r.upper_ci)
            ));
            continue;
        }
        out.push_str(&format!(
            "{} {} {}\n",
            fmt_f64(r.eps),
            fmt_f64(-r.tail.ln()),
            fmt_f64(r.stderr / r.tail)
        ));
    }
    out
}

/// `(log ε, log k_max)`; rows with `k_max = 0` are skipped.
pub fn plot_frontier(rows: &[FrontierCsvRow]) -> String {
    let mut out = String::from("# x: log(eps)\n# y: log(k_max)\n");
    for r in rows.iter().filter(|r| r.k_max > 0) {
        out.push_str(&format!("{} {}\n", fmt_f64(r.eps.ln()), fmt_f64((r.k_max as f64).ln())));
    }
    out
}

/// `(q, I_q, std_err)` from `moment` records.
pub fn plot_moments(records: &[ResultRecord]) -> Result<String> {
    let mut out = String::from("# x: q\n# y: I_q estimate\n# yerr: std_err\n");
    for (i, r) in records.iter().filter(|r| r.op == "moment").enumerate() {
        let q = r
            .params
            .get("q")
            .and_then(serde_json::Value::as_f64)
            .ok_or_else(|| Error::Parse {
                line: 0,
                message: format!("moment record {i} has no numeric q parameter"),
            })?;
        out.push_str(&format!(
            "{} {} {}\n",
            fmt_f64(q),
            fmt_f64(r.value),
            fmt_f64(r.std_err.unwrap_or(0.0))
        ));
    }
    Ok(out)
}

/// Plot columns for any result file, recognized by content.
pub fn plot_data(text: &str) -> Result<String> {
    if text.trim_start().starts_with('{') {
        let artifact: Artifact = from_json(text)?;
        return plot_moments(&artifact.records);
    }
    let header = text
        .lines()
        .enumerate()
        .find(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));
    match header {
        Some((_, h)) if h.trim() == TailRow::HEADER.join(",") => Ok(plot_tail(&read_csv::<TailRow>(text)?)),
        Some((_, h)) if h.trim() == FrontierCsvRow::HEADER.join(",") => {
            Ok(plot_frontier(&read_csv::<FrontierCsvRow>(text)?))
        }
        Some((i, _)) => Err(Error::Parse {
            line: i as u64 + 1,
            message: "unrecognized result file header".into(),
        }),
        None => Err(Error::Parse {
            line: 0,
            message: "empty result file".into(),
        }),
    }
}
