use ndarray::{concatenate, Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Result, SdrError};
use crate::scalar::Scalar;

/// An `n x p` predictor matrix paired with an `n`-vector response.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    x: Array2<T>,
    y: Array1<T>,
}

impl<T: Scalar> Dataset<T> {
    /// Builds a dataset, checking shapes and that every entry is finite.
    pub fn new(x: Array2<T>, y: Array1<T>) -> Result<Self> {
        let (n, p) = x.dim();
        if n == 0 {
            return Err(SdrError::InvalidData("no observations".into()));
        }
        if p == 0 {
            return Err(SdrError::InvalidData("no predictors".into()));
        }
        if y.len() != n {
            return Err(SdrError::DimensionMismatch {
                expected: n,
                found: y.len(),
            });
        }
        if let Some(((i, j), _)) = x.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(SdrError::InvalidData(format!(
                "non-finite predictor at row {i}, column {j}"
            )));
        }
        if let Some((i, _)) = y.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(SdrError::InvalidData(format!(
                "non-finite response at row {i}"
            )));
        }
        Ok(Self { x, y })
    }

    pub fn x(&self) -> ArrayView2<'_, T> {
        self.x.view()
    }

    pub fn y(&self) -> ArrayView1<'_, T> {
        self.y.view()
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn into_parts(self) -> (Array2<T>, Array1<T>) {
        (self.x, self.y)
    }

    /// Column means of the predictors.
    pub fn column_mean(&self) -> Array1<T> {
        let n = T::from_usize_lossy(self.n());
        self.x.sum_axis(Axis(0)) / n
    }

    /// Smallest and largest response.
    pub fn response_range(&self) -> (T, T) {
        self.y.iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        })
    }

    /// Rows selected by `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(SdrError::EmptyShard);
        }
        Ok(Self {
            x: self.x.select(Axis(0), indices),
            y: self.y.select(Axis(0), indices),
        })
    }

    /// Stacks shards back into one dataset, preserving shard order.
    pub fn concat(shards: &[Dataset<T>]) -> Result<Self> {
        let first = shards.first().ok_or(SdrError::EmptyShard)?;
        let p = first.p();
        if let Some(bad) = shards.iter().find(|s| s.p() != p) {
            return Err(SdrError::DimensionMismatch {
                expected: p,
                found: bad.p(),
            });
        }
        let xs: Vec<_> = shards.iter().map(|s| s.x.view()).collect();
        let ys: Vec<_> = shards.iter().map(|s| s.y.view()).collect();
        let x = concatenate(Axis(0), &xs).expect("shapes checked");
        let y = concatenate(Axis(0), &ys).expect("shapes checked");
        Ok(Self { x, y })
    }

    /// Converts to another scalar type.
    pub fn cast<U: Scalar>(&self) -> Dataset<U> {
        Dataset {
            x: self.x.mapv(|v| U::lit(v.as_f64())),
            y: self.y.mapv(|v| U::lit(v.as_f64())),
        }
    }
}

/// Sample covariance with divisor `n - 1`.
pub fn sample_covariance<T: Scalar>(x: ArrayView2<'_, T>) -> Result<(Array1<T>, Array2<T>)> {
    let n = x.nrows();
    if n < 2 {
        return Err(SdrError::InsufficientSamples {
            needed: 2,
            found: n,
        });
    }
    let mean = x.sum_axis(Axis(0)) / T::from_usize_lossy(n);
    let u = &x - &mean;
    let cov = u.t().dot(&u) / T::from_usize_lossy(n - 1);
    Ok((mean, cov))
}
