//! Response slicing and per-slice sufficient statistics.
//!
//! Slices are right-closed, left-open intervals `(g[h-1], g[h]]` over an
//! ascending grid `g[0] < ... < g[H]`, except the first slice, which is also
//! closed on the left so the smallest response is never dropped. Slice
//! indices are zero-based.

use ndarray::{Array1, Array2, ArrayView1, Axis};

use crate::data::Dataset;
use crate::error::{Result, SdrError};
use crate::scalar::Scalar;

/// An ascending grid of `H + 1` points defining `H` response slices.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceSpec<T> {
    grid: Vec<T>,
}

impl<T: Scalar> SliceSpec<T> {
    /// Wraps an explicit grid. Requires at least three points, strictly ascending.
    pub fn from_grid(grid: Vec<T>) -> Result<Self> {
        if grid.len() < 3 {
            return Err(SdrError::InvalidSliceCount(grid.len().saturating_sub(1)));
        }
        if let Some(i) = grid.iter().position(|v| !v.is_finite()) {
            return Err(SdrError::InvalidGrid(i));
        }
        if let Some(i) = grid.windows(2).position(|w| w[0] >= w[1]) {
            return Err(SdrError::InvalidGrid(i + 1));
        }
        Ok(Self { grid })
    }

    pub fn grid(&self) -> &[T] {
        &self.grid
    }

    /// Number of slices `H`.
    pub fn slices(&self) -> usize {
        self.grid.len() - 1
    }

    pub fn lower(&self) -> T {
        self.grid[0]
    }

    pub fn upper(&self) -> T {
        self.grid[self.grid.len() - 1]
    }

    /// Zero-based slice index containing `y`.
    pub fn assign(&self, y: T) -> Result<usize> {
        let (lo, hi) = (self.lower(), self.upper());
        if !(y >= lo && y <= hi) {
            return Err(SdrError::OutOfRange {
                value: y.as_f64(),
                lo: lo.as_f64(),
                hi: hi.as_f64(),
            });
        }
        // first interior grid point >= y
        let interior = &self.grid[1..];
        let h = interior.partition_point(|g| *g < y);
        Ok(h.min(self.slices() - 1))
    }
}

/// Equal-width grid of `slices` intervals over `[y_min, y_max]`.
///
/// The last grid point is pinned to `y_max` so the maximum always falls in
/// the final slice regardless of rounding.
pub fn make_slice_grid<T: Scalar>(y_min: T, y_max: T, slices: usize) -> Result<SliceSpec<T>> {
    if slices < 2 {
        return Err(SdrError::InvalidSliceCount(slices));
    }
    if !(y_min < y_max) || !y_min.is_finite() || !y_max.is_finite() {
        return Err(SdrError::DegenerateRange {
            min: y_min.as_f64(),
            max: y_max.as_f64(),
        });
    }
    let width = y_max - y_min;
    let h_total = T::from_usize_lossy(slices);
    let mut grid: Vec<T> = (0..slices)
        .map(|h| y_min + T::from_usize_lossy(h) * width / h_total)
        .collect();
    grid.push(y_max);
    SliceSpec::from_grid(grid).map_err(|_| SdrError::DegenerateRange {
        min: y_min.as_f64(),
        max: y_max.as_f64(),
    })
}

/// Zero-based slice index of `y` under `spec`.
pub fn assign_slice<T: Scalar>(y: T, spec: &SliceSpec<T>) -> Result<usize> {
    spec.assign(y)
}

/// Per-slice counts and sums of centered predictors, plus the total scatter.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceStats<T> {
    /// `n_h` for each slice.
    pub counts: Vec<u64>,
    /// Row `h` holds the sum of `x_i - center` over observations in slice `h`.
    pub sums: Array2<T>,
    /// `sum_i (x_i - center)(x_i - center)^T` over all observations.
    pub scatter: Array2<T>,
}

impl<T: Scalar> SliceStats<T> {
    pub fn zeros(slices: usize, p: usize) -> Self {
        Self {
            counts: vec![0; slices],
            sums: Array2::zeros((slices, p)),
            scatter: Array2::zeros((p, p)),
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn p(&self) -> usize {
        self.sums.ncols()
    }

    pub fn slices(&self) -> usize {
        self.counts.len()
    }

    /// Adds another set of statistics computed on the same grid and center.
    pub fn accumulate(&mut self, other: &SliceStats<T>) -> Result<()> {
        if other.slices() != self.slices() {
            return Err(SdrError::DimensionMismatch {
                expected: self.slices(),
                found: other.slices(),
            });
        }
        if other.p() != self.p() {
            return Err(SdrError::DimensionMismatch {
                expected: self.p(),
                found: other.p(),
            });
        }
        for (c, o) in self.counts.iter_mut().zip(&other.counts) {
            *c += o;
        }
        self.sums += &other.sums;
        self.scatter += &other.scatter;
        Ok(())
    }
}

/// Slice assignments for every response value.
pub fn assign_all<T: Scalar>(y: ArrayView1<'_, T>, spec: &SliceSpec<T>) -> Result<Vec<usize>> {
    y.iter().map(|&v| spec.assign(v)).collect()
}

/// Counts, centered slice sums and centered scatter of `data` on `spec`.
pub fn slice_statistics<T: Scalar>(
    data: &Dataset<T>,
    center: ArrayView1<'_, T>,
    spec: &SliceSpec<T>,
) -> Result<SliceStats<T>> {
    let p = data.p();
    if center.len() != p {
        return Err(SdrError::DimensionMismatch {
            expected: p,
            found: center.len(),
        });
    }
    let labels = assign_all(data.y(), spec)?;
    let u = &data.x() - &center;
    let mut stats = SliceStats::zeros(spec.slices(), p);
    for (row, &h) in u.axis_iter(Axis(0)).zip(&labels) {
        stats.counts[h] += 1;
        let mut acc = stats.sums.row_mut(h);
        acc += &row;
    }
    stats.scatter = u.t().dot(&u);
    Ok(stats)
}

/// Mean response-slice vectors `m_h = s_h / n_h` for nonempty slices, with
/// their proportions `n_h / n`.
pub fn slice_means<T: Scalar>(stats: &SliceStats<T>, n: u64) -> Vec<(T, Array1<T>)> {
    let n = T::from_u64(n).expect("count representable");
    stats
        .counts
        .iter()
        .zip(stats.sums.axis_iter(Axis(0)))
        .filter(|(c, _)| **c > 0)
        .map(|(&c, s)| {
            let c = T::from_u64(c).expect("count representable");
            (c / n, s.mapv(|v| v / c))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn uniform_grids() {
        let g = make_slice_grid(0.0, 10.0, 10).unwrap();
        let expect: Vec<f64> = (0..=10).map(f64::from).collect();
        assert_eq!(g.grid(), expect.as_slice());
        let g = make_slice_grid(-1.0, 1.0, 2).unwrap();
        assert_eq!(g.grid(), &[-1.0, 0.0, 1.0]);
    }

    #[test]
    fn degenerate_grids_are_rejected() {
        assert_eq!(
            make_slice_grid(5.0, 5.0, 3),
            Err(SdrError::DegenerateRange { min: 5.0, max: 5.0 })
        );
        assert!(matches!(
            make_slice_grid(6.0, 5.0, 3),
            Err(SdrError::DegenerateRange { .. })
        ));
        assert_eq!(make_slice_grid(0.0, 1.0, 1), Err(SdrError::InvalidSliceCount(1)));
        assert!(matches!(
            SliceSpec::from_grid(vec![0.0, 1.0, 1.0]),
            Err(SdrError::InvalidGrid(2))
        ));
    }

    #[test]
    fn boundaries_are_right_closed_with_left_endpoint_absorbed() {
        let spec = SliceSpec::from_grid(vec![0.0, 1.0, 2.0]).unwrap();
        assert_eq!(assign_slice(0.5, &spec).unwrap(), 0);
        assert_eq!(assign_slice(1.0, &spec).unwrap(), 0);
        assert_eq!(assign_slice(0.0, &spec).unwrap(), 0);
        assert_eq!(assign_slice(1.0 + 1e-12, &spec).unwrap(), 1);
        assert_eq!(assign_slice(2.0, &spec).unwrap(), 1);
        assert!(matches!(
            assign_slice(-0.1, &spec),
            Err(SdrError::OutOfRange { .. })
        ));
        assert!(matches!(
            assign_slice(2.1, &spec),
            Err(SdrError::OutOfRange { .. })
        ));
        assert!(assign_slice(f64::NAN, &spec).is_err());
    }

    #[test]
    fn two_point_statistics() {
        let d = Dataset::new(array![[-1.0], [1.0]], array![0.2, 0.8]).unwrap();
        let spec = SliceSpec::from_grid(vec![0.0, 0.5, 1.0]).unwrap();
        let st = slice_statistics(&d, array![0.0].view(), &spec).unwrap();
        assert_eq!(st.counts, vec![1, 1]);
        assert_eq!(st.sums, array![[-1.0], [1.0]]);
        assert_eq!(st.scatter, array![[2.0]]);
    }

    #[test]
    fn single_slice_holds_all_centered_mass() {
        let d = Dataset::new(array![[1.0, 2.0], [3.0, 5.0], [2.0, 2.0]], array![0.1, 0.2, 0.3])
            .unwrap();
        let spec = SliceSpec::from_grid(vec![0.0, 1.0, 2.0]).unwrap();
        let center = d.column_mean();
        let st = slice_statistics(&d, center.view(), &spec).unwrap();
        assert_eq!(st.counts, vec![3, 0]);
        assert!(st.sums.iter().all(|v: &f64| v.abs() < 1e-12));
    }

    #[test]
    fn center_length_is_checked() {
        let d = Dataset::new(array![[1.0, 2.0]], array![0.1]).unwrap();
        let spec = SliceSpec::from_grid(vec![0.0, 1.0, 2.0]).unwrap();
        assert!(matches!(
            slice_statistics(&d, array![0.0].view(), &spec),
            Err(SdrError::DimensionMismatch { .. })
        ));
    }
}
