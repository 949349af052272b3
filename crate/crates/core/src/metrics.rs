//! Subspace recovery scores and Monte-Carlo summaries.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Result, SdrError};
use crate::linalg::SpectralInverse;
use crate::scalar::Scalar;

/// Slack allowed outside `[0, 1]` before a metric is reported as invalid.
pub const METRIC_SLACK: f64 = 1e-10;

const RANK_TOL: f64 = 1e-10;

fn to_f64<T: Scalar>(m: ArrayView2<'_, T>) -> Array2<f64> {
    m.mapv(|v| v.as_f64())
}

/// Orthonormal basis for the column span via modified Gram-Schmidt with one
/// reorthogonalization pass.
fn orthonormal_basis(a: &Array2<f64>) -> Result<Array2<f64>> {
    let (p, k) = a.dim();
    if k == 0 || k > p {
        return Err(SdrError::RankDeficient);
    }
    let mut q = a.clone();
    for j in 0..k {
        let orig = q.column(j).dot(&q.column(j)).sqrt();
        for _ in 0..2 {
            for i in 0..j {
                let proj = q.column(i).dot(&q.column(j));
                let qi = q.column(i).to_owned();
                q.column_mut(j).scaled_add(-proj, &qi);
            }
        }
        let norm = q.column(j).dot(&q.column(j)).sqrt();
        if !(norm > RANK_TOL * orig.max(f64::MIN_POSITIVE)) || !norm.is_finite() {
            return Err(SdrError::RankDeficient);
        }
        q.column_mut(j).mapv_inplace(|v| v / norm);
    }
    Ok(q)
}

fn clamp_metric(v: f64) -> Result<f64> {
    if !v.is_finite() || v < -METRIC_SLACK || v > 1.0 + METRIC_SLACK {
        return Err(SdrError::MetricOutOfRange(v));
    }
    Ok(v.clamp(0.0, 1.0))
}

/// `Tr(P_B P_Bhat) / K` with `K` the number of columns of `b_true`.
pub fn trace_correlation<T: Scalar>(b_true: ArrayView2<'_, T>, b_hat: ArrayView2<'_, T>) -> Result<f64> {
    if b_true.nrows() != b_hat.nrows() {
        return Err(SdrError::DimensionMismatch {
            expected: b_true.nrows(),
            found: b_hat.nrows(),
        });
    }
    let qa = orthonormal_basis(&to_f64(b_true))?;
    let qb = orthonormal_basis(&to_f64(b_hat))?;
    let c = qa.t().dot(&qb);
    let tr = c.iter().map(|v| v * v).sum::<f64>();
    clamp_metric(tr / qa.ncols() as f64)
}

/// Squared multiple correlation of one direction with `span(b_true)` under
/// covariance `sigma`.
pub fn r_squared_column<T: Scalar>(
    beta_hat: ArrayView1<'_, T>,
    b_true: ArrayView2<'_, T>,
    sigma: ArrayView2<'_, T>,
) -> Result<f64> {
    let p = b_true.nrows();
    if beta_hat.len() != p {
        return Err(SdrError::DimensionMismatch {
            expected: p,
            found: beta_hat.len(),
        });
    }
    if sigma.dim() != (p, p) {
        return Err(SdrError::DimensionMismatch {
            expected: p,
            found: sigma.nrows(),
        });
    }
    let b = to_f64(b_true);
    orthonormal_basis(&b)?;
    let s = to_f64(sigma);
    let bh: Array1<f64> = beta_hat.mapv(|v| v.as_f64());
    if bh.iter().all(|v| *v == 0.0) {
        return Err(SdrError::RankDeficient);
    }
    let s_bh = s.dot(&bh);
    let denom = bh.dot(&s_bh);
    let gram = b.t().dot(&s).dot(&b);
    if !(denom > 0.0) {
        return Err(SdrError::SingularCovariance {
            min_eigenvalue: denom,
            max_eigenvalue: denom,
        });
    }
    let gram_inv = SpectralInverse::with_ridge(gram.view(), 0.0)?.inverse();
    let c = b.t().dot(&s_bh);
    clamp_metric(c.dot(&gram_inv.dot(&c)) / denom)
}

/// Per-column squared multiple correlations.
pub fn r_squared_columns<T: Scalar>(
    beta_hat: ArrayView2<'_, T>,
    b_true: ArrayView2<'_, T>,
    sigma: ArrayView2<'_, T>,
) -> Result<Vec<f64>> {
    beta_hat
        .axis_iter(Axis(1))
        .map(|col| r_squared_column(col, b_true, sigma))
        .collect()
}

/// Mean of [`r_squared_columns`].
pub fn r_squared<T: Scalar>(
    beta_hat: ArrayView2<'_, T>,
    b_true: ArrayView2<'_, T>,
    sigma: ArrayView2<'_, T>,
) -> Result<f64> {
    let cols = r_squared_columns(beta_hat, b_true, sigma)?;
    if cols.is_empty() {
        return Err(SdrError::RankDeficient);
    }
    Ok(cols.iter().sum::<f64>() / cols.len() as f64)
}

/// One repetition's scores and costs.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRecord {
    pub rep: u64,
    pub trace_correlation: f64,
    pub r_squared: f64,
    pub wall_time_seconds: f64,
    pub bytes_up: u64,
    pub bytes_down: u64,
}

/// The numeric fields of a [`MetricRecord`] as reals.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricValues {
    pub trace_correlation: f64,
    pub r_squared: f64,
    pub wall_time_seconds: f64,
    pub bytes_up: f64,
    pub bytes_down: f64,
}

impl MetricValues {
    fn of(r: &MetricRecord) -> Self {
        Self {
            trace_correlation: r.trace_correlation,
            r_squared: r.r_squared,
            wall_time_seconds: r.wall_time_seconds,
            bytes_up: r.bytes_up as f64,
            bytes_down: r.bytes_down as f64,
        }
    }

    fn to_array(self) -> [f64; 5] {
        [
            self.trace_correlation,
            self.r_squared,
            self.wall_time_seconds,
            self.bytes_up,
            self.bytes_down,
        ]
    }

    fn from_array(a: [f64; 5]) -> Self {
        Self {
            trace_correlation: a[0],
            r_squared: a[1],
            wall_time_seconds: a[2],
            bytes_up: a[3],
            bytes_down: a[4],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub count: usize,
    pub mean: MetricValues,
    /// Sample standard deviation, divisor `count - 1`.
    pub std: MetricValues,
}

/// Per-field mean and sample standard deviation.
pub fn aggregate(records: &[MetricRecord]) -> Result<Aggregate> {
    let n = records.len();
    if n < 2 {
        return Err(SdrError::InsufficientRepetitions(n));
    }
    let rows: Vec<[f64; 5]> = records.iter().map(|r| MetricValues::of(r).to_array()).collect();
    let mut mean = [0.0; 5];
    for row in &rows {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = [0.0; 5];
    for row in &rows {
        for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let std = var.map(|s| (s / (n - 1) as f64).sqrt());
    Ok(Aggregate {
        count: n,
        mean: MetricValues::from_array(mean),
        std: MetricValues::from_array(std),
    })
}
