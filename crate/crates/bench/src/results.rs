//! Result tables and their CSV form.
//!
//! Column order: the configuration echo, then `rep`, `trace_correlation`,
//! `r_squared`, `wall_time_seconds`, `bytes_up`, `bytes_down`, `error_flag`,
//! followed by `successes`, `worker_phase_seconds`, `r_squared_columns` and
//! `error_message`. Reals are written with 17 significant digits.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use dsdr_core::metrics::{aggregate, MetricRecord};

use crate::config::ECHO_COLUMNS;
use crate::error::{BenchError, Result};

pub const METRIC_COLUMNS: [&str; 11] = [
    "rep",
    "trace_correlation",
    "r_squared",
    "wall_time_seconds",
    "bytes_up",
    "bytes_down",
    "error_flag",
    "successes",
    "worker_phase_seconds",
    "r_squared_columns",
    "error_message",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RepLabel {
    Rep(u64),
    Mean,
    Std,
}

impl fmt::Display for RepLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RepLabel::Rep(r) => write!(f, "{r}"),
            RepLabel::Mean => f.write_str("mean"),
            RepLabel::Std => f.write_str("std"),
        }
    }
}

impl FromStr for RepLabel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "mean" => Ok(RepLabel::Mean),
            "std" => Ok(RepLabel::Std),
            _ => s.parse().map(RepLabel::Rep).map_err(|_| format!("bad rep label `{s}`")),
        }
    }
}

/// Successful repetition: the metric record plus diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct RepMetrics {
    pub record: MetricRecord,
    pub r_squared_columns: Vec<f64>,
    pub worker_phase_seconds: f64,
}

/// Outcome of one repetition; failures keep their message.
#[derive(Debug, Clone, PartialEq)]
pub struct RepOutcome {
    pub rep: u64,
    pub result: std::result::Result<RepMetrics, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub echo: Vec<String>,
    pub rep: RepLabel,
    pub trace_correlation: f64,
    pub r_squared: f64,
    pub wall_time_seconds: f64,
    /// Integral on repetition rows.
    pub bytes_up: f64,
    pub bytes_down: f64,
    pub error_flag: bool,
    /// Successful repetitions behind an aggregate row.
    pub successes: Option<u64>,
    pub worker_phase_seconds: f64,
    pub r_squared_columns: Vec<f64>,
    pub error_message: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    /// Appends the repetition rows of one configuration, then its mean and
    /// std rows computed over the successful repetitions only.
    pub fn push_group(&mut self, echo: &[String], outcomes: &[RepOutcome]) {
        let mut ok = Vec::new();
        for o in outcomes {
            let row = match &o.result {
                Ok(m) => {
                    ok.push(m);
                    ResultRow {
                        echo: echo.to_vec(),
                        rep: RepLabel::Rep(o.rep),
                        trace_correlation: m.record.trace_correlation,
                        r_squared: m.record.r_squared,
                        wall_time_seconds: m.record.wall_time_seconds,
                        bytes_up: m.record.bytes_up as f64,
                        bytes_down: m.record.bytes_down as f64,
                        error_flag: false,
                        successes: None,
                        worker_phase_seconds: m.worker_phase_seconds,
                        r_squared_columns: m.r_squared_columns.clone(),
                        error_message: String::new(),
                    }
                }
                Err(e) => ResultRow {
                    echo: echo.to_vec(),
                    rep: RepLabel::Rep(o.rep),
                    trace_correlation: f64::NAN,
                    r_squared: f64::NAN,
                    wall_time_seconds: f64::NAN,
                    bytes_up: f64::NAN,
                    bytes_down: f64::NAN,
                    error_flag: true,
                    successes: None,
                    worker_phase_seconds: f64::NAN,
                    r_squared_columns: Vec::new(),
                    error_message: e.clone(),
                },
            };
            self.rows.push(row);
        }
        self.rows.extend(summary_rows(echo, &ok));
    }

    pub fn repetitions(&self) -> impl Iterator<Item = &ResultRow> {
        self.rows.iter().filter(|r| matches!(r.rep, RepLabel::Rep(_)))
    }

    /// The aggregate row with `label` for the group whose echo satisfies `pick`.
    pub fn summary(&self, label: RepLabel, pick: impl Fn(&[String]) -> bool) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.rep == label && pick(&r.echo))
    }

    pub fn successes(&self) -> usize {
        self.repetitions().filter(|r| !r.error_flag).count()
    }
}

fn summary_rows(echo: &[String], ok: &[&RepMetrics]) -> [ResultRow; 2] {
    let records: Vec<MetricRecord> = ok.iter().map(|m| m.record.clone()).collect();
    let phase: Vec<f64> = ok.iter().map(|m| m.worker_phase_seconds).collect();
    let (mean, std) = mean_std(&phase);
    let row = |label, vals: [f64; 5], phase| ResultRow {
        echo: echo.to_vec(),
        rep: label,
        trace_correlation: vals[0],
        r_squared: vals[1],
        wall_time_seconds: vals[2],
        bytes_up: vals[3],
        bytes_down: vals[4],
        error_flag: ok.is_empty(),
        successes: Some(ok.len() as u64),
        worker_phase_seconds: phase,
        r_squared_columns: Vec::new(),
        error_message: String::new(),
    };
    let nan = [f64::NAN; 5];
    let (m, s) = match records.len() {
        0 => (nan, nan),
        1 => {
            let r = &records[0];
            (
                [
                    r.trace_correlation,
                    r.r_squared,
                    r.wall_time_seconds,
                    r.bytes_up as f64,
                    r.bytes_down as f64,
                ],
                nan,
            )
        }
        _ => {
            let a = aggregate(&records).expect("two or more records");
            let arr = |v: dsdr_core::metrics::MetricValues| {
                [v.trace_correlation, v.r_squared, v.wall_time_seconds, v.bytes_up, v.bytes_down]
            };
            (arr(a.mean), arr(a.std))
        }
    };
    [row(RepLabel::Mean, m, mean), row(RepLabel::Std, s, std)]
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, f64::NAN);
    }
    let ss: f64 = v.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Formats a real with 17 significant digits.
pub fn fmt_real(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

fn fmt_bytes(v: f64, integral: bool) -> String {
    if integral && v.is_finite() {
        format!("{}", v as u64)
    } else {
        fmt_real(v)
    }
}

pub fn header() -> Vec<&'static str> {
    ECHO_COLUMNS.iter().chain(METRIC_COLUMNS.iter()).copied().collect()
}

pub fn write_results<W: Write>(table: &ResultTable, out: W) -> std::result::Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header())?;
    for r in &table.rows {
        let integral = matches!(r.rep, RepLabel::Rep(_));
        let mut rec: Vec<String> = r.echo.clone();
        rec.extend([
            r.rep.to_string(),
            fmt_real(r.trace_correlation),
            fmt_real(r.r_squared),
            fmt_real(r.wall_time_seconds),
            fmt_bytes(r.bytes_up, integral),
            fmt_bytes(r.bytes_down, integral),
            u8::from(r.error_flag).to_string(),
            r.successes.map(|s| s.to_string()).unwrap_or_default(),
            fmt_real(r.worker_phase_seconds),
            r.r_squared_columns.iter().map(|v| fmt_real(*v)).collect::<Vec<_>>().join(";"),
            r.error_message.clone(),
        ]);
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `table` to `path`, or to stdout when `path` is `-`.
pub fn emit_results(table: &ResultTable, path: &Path) -> Result<()> {
    let to_io = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(io) => BenchError::io(path, io),
        other => BenchError::Results(format!("{other:?}")),
    };
    if path == Path::new("-") {
        write_results(table, std::io::stdout().lock()).map_err(to_io)
    } else {
        let f = std::fs::File::create(path).map_err(|e| BenchError::io(path, e))?;
        write_results(table, std::io::BufWriter::new(f)).map_err(to_io)
    }
}

fn field<T: FromStr>(rec: &csv::StringRecord, i: usize, line: u64) -> Result<T> {
    let s = rec.get(i).unwrap_or("");
    s.parse()
        .map_err(|_| BenchError::Results(format!("line {line}: cannot parse `{s}` in column {}", header()[i])))
}

pub fn parse_results<R: Read>(input: R) -> Result<ResultTable> {
    let mut rd = csv::Reader::from_reader(input);
    let head = rd.headers().map_err(|e| BenchError::Results(e.to_string()))?.clone();
    if head.iter().ne(header()) {
        return Err(BenchError::Results("unexpected header".into()));
    }
    let e = ECHO_COLUMNS.len();
    let mut table = ResultTable::default();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec.map_err(|e| BenchError::Results(e.to_string()))?;
        let line = i as u64 + 2;
        let successes = rec.get(e + 7).unwrap_or("");
        let cols = rec.get(e + 9).unwrap_or("");
        table.rows.push(ResultRow {
            echo: rec.iter().take(e).map(str::to_owned).collect(),
            rep: field(&rec, e, line)?,
            trace_correlation: field(&rec, e + 1, line)?,
            r_squared: field(&rec, e + 2, line)?,
            wall_time_seconds: field(&rec, e + 3, line)?,
            bytes_up: field(&rec, e + 4, line)?,
            bytes_down: field(&rec, e + 5, line)?,
            error_flag: field::<u8>(&rec, e + 6, line)? != 0,
            successes: if successes.is_empty() {
                None
            } else {
                Some(field(&rec, e + 7, line)?)
            },
            worker_phase_seconds: field(&rec, e + 8, line)?,
            r_squared_columns: if cols.is_empty() {
                Vec::new()
            } else {
                cols.split(';')
                    .map(|s| s.parse().map_err(|_| BenchError::Results(format!("line {line}: bad column list"))))
                    .collect::<Result<_>>()?
            },
            error_message: rec.get(e + 10).unwrap_or("").to_owned(),
        });
    }
    Ok(table)
}

pub fn read_results(path: &Path) -> Result<ResultTable> {
    let f = std::fs::File::open(path).map_err(|e| BenchError::io(path, e))?;
    parse_results(f)
}
