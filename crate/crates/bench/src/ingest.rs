//! Loading external data from headed numeric CSV files.

use std::io::{Read, Write};
use std::path::Path;

use dsdr_core::Dataset;
use ndarray::{Array1, Array2, Axis};

use crate::error::{BenchError, IngestError, Result};
use crate::results::fmt_real;

/// A response column picked by header name or zero-based position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ColumnRef {
    Name(String),
    Index(usize),
}

impl ColumnRef {
    /// Bare integers are positions; anything else is a header name.
    pub fn parse(s: &str) -> Self {
        s.parse().map_or_else(|_| ColumnRef::Name(s.to_owned()), ColumnRef::Index)
    }
}

/// Parsed data with the predictor names in file order.
#[derive(Debug, Clone)]
pub struct LoadedData {
    pub data: Dataset<f64>,
    pub predictors: Vec<String>,
    pub response: String,
}

fn parse_error(e: &csv::Error) -> IngestError {
    let line = e.position().map_or(0, |p| p.line());
    let reason = match e.kind() {
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
            format!("expected {expected_len} fields, found {len}")
        }
        other => format!("{other:?}"),
    };
    IngestError::ParseError {
        line,
        column: 0,
        reason,
    }
}

/// Reads a rectangular numeric CSV; every column except the response
/// becomes a predictor. `standardize` z-scores the predictors.
pub fn parse_csv<R: Read>(input: R, response: &ColumnRef, standardize: bool) -> std::result::Result<LoadedData, IngestError> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(input);
    let headers: Vec<String> = rd.headers().map_err(|e| parse_error(&e))?.iter().map(str::to_owned).collect();
    if headers.is_empty() || headers.iter().all(String::is_empty) {
        return Err(IngestError::ParseError {
            line: 1,
            column: 0,
            reason: "missing header row".into(),
        });
    }
    let yi = match response {
        ColumnRef::Name(name) => headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| IngestError::MissingColumn(name.clone()))?,
        ColumnRef::Index(i) if *i < headers.len() => *i,
        ColumnRef::Index(i) => return Err(IngestError::MissingColumn(format!("#{i}"))),
    };
    let p = headers.len() - 1;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(|e| parse_error(&e))?;
        let line = rec.position().map_or(0, |p| p.line());
        for (j, cell) in rec.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| IngestError::NonNumericCell {
                line,
                column: j + 1,
                value: cell.to_owned(),
            })?;
            if !v.is_finite() {
                return Err(IngestError::NonNumericCell {
                    line,
                    column: j + 1,
                    value: cell.to_owned(),
                });
            }
            if j == yi {
                ys.push(v);
            } else {
                xs.push(v);
            }
        }
    }
    let n = ys.len();
    if n == 0 {
        return Err(IngestError::ParseError {
            line: 2,
            column: 0,
            reason: "no data rows".into(),
        });
    }
    let mut x = Array2::from_shape_vec((n, p), xs).expect("rectangular by construction");
    let mut predictors = headers.clone();
    let response = predictors.remove(yi);
    if standardize {
        if n < 2 {
            return Err(IngestError::ParseError {
                line: 2,
                column: 0,
                reason: "need two rows to standardize".into(),
            });
        }
        for (mut col, name) in x.axis_iter_mut(Axis(1)).zip(&predictors) {
            let mean = col.sum() / n as f64;
            let sd = (col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt();
            if !(sd > 0.0) {
                return Err(IngestError::ConstantColumn(name.clone()));
            }
            col.mapv_inplace(|v| (v - mean) / sd);
        }
    }
    let data = Dataset::new(x, Array1::from(ys)).map_err(|e| IngestError::ParseError {
        line: 0,
        column: 0,
        reason: e.to_string(),
    })?;
    Ok(LoadedData {
        data,
        predictors,
        response,
    })
}

pub fn load_csv(path: &Path, response: &ColumnRef, standardize: bool) -> Result<LoadedData> {
    let f = std::fs::File::open(path).map_err(|e| BenchError::io(path, e))?;
    Ok(parse_csv(std::io::BufReader::new(f), response, standardize)?)
}

/// Writes `data` with the response first, in the format [`parse_csv`] reads.
pub fn write_dataset<W: Write>(data: &Dataset<f64>, response: &str, predictors: &[String], out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut head = vec![response.to_owned()];
    head.extend(predictors.iter().cloned());
    w.write_record(&head)?;
    for (row, y) in data.x().axis_iter(Axis(0)).zip(data.y()) {
        let mut rec = vec![fmt_real(*y)];
        rec.extend(row.iter().map(|v| fmt_real(*v)));
        w.write_record(&rec)?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(text: &str, col: &str) -> std::result::Result<LoadedData, IngestError> {
        parse_csv(text.as_bytes(), &ColumnRef::parse(col), false)
    }

    #[test]
    fn three_rows_two_predictors() {
        let d = load("y,x1,x2\n1,2,3\n4,5,6\n7,8,9\n", "y").unwrap();
        assert_eq!((d.data.n(), d.data.p()), (3, 2));
        assert_eq!(d.predictors, ["x1", "x2"]);
        assert_eq!(d.data.x()[[2, 1]], 9.0);
        assert_eq!(d.data.y()[1], 4.0);
    }

    #[test]
    fn response_can_sit_anywhere() {
        let d = load("a,resp,b\n1,10,2\n3,30,4\n", "resp").unwrap();
        assert_eq!(d.data.y().to_vec(), [10.0, 30.0]);
        assert_eq!(d.data.x().row(1).to_vec(), [3.0, 4.0]);
        let by_index = load("a,resp,b\n1,10,2\n3,30,4\n", "1").unwrap();
        assert_eq!(by_index.data.y(), d.data.y());
    }

    #[test]
    fn errors_name_the_offense() {
        assert_eq!(load("y,x\n1,2\n", "z").unwrap_err(), IngestError::MissingColumn("z".into()));
        assert_eq!(
            load("y,x\n1,2\n3,abc\n", "y").unwrap_err(),
            IngestError::NonNumericCell {
                line: 3,
                column: 2,
                value: "abc".into()
            }
        );
        assert!(matches!(
            load("y,x\n1,2\n3\n", "y").unwrap_err(),
            IngestError::ParseError { line: 3, .. }
        ));
        assert!(matches!(load("y,x\n", "y").unwrap_err(), IngestError::ParseError { .. }));
    }

    #[test]
    fn standardizing_gives_unit_columns() {
        let d = parse_csv("y,a,b\n1,1,10\n2,2,20\n3,4,5\n".as_bytes(), &ColumnRef::parse("y"), true).unwrap();
        for col in d.data.x().axis_iter(Axis(1)) {
            let m = col.sum() / 3.0;
            let v = col.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / 2.0;
            assert!(m.abs() < 1e-15 && (v - 1.0).abs() < 1e-14);
        }
        assert_eq!(
            parse_csv("y,a\n1,1\n2,1\n".as_bytes(), &ColumnRef::parse("y"), true).unwrap_err(),
            IngestError::ConstantColumn("a".into())
        );
    }
}
