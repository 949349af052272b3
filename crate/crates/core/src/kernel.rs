use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::data::{sample_covariance, Dataset};
use crate::error::{Result, SdrError};
use crate::scalar::Scalar;
use crate::slicing::{assign_all, slice_means, SliceSpec, SliceStats};

/// Inverse-regression method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Sir,
    Save,
    Dr,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Sir => "sir",
            Method::Save => "save",
            Method::Dr => "dr",
        }
    }

    /// Single-byte tag used on the wire.
    pub fn tag(self) -> u8 {
        match self {
            Method::Sir => 1,
            Method::Save => 2,
            Method::Dr => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            1 => Some(Method::Sir),
            2 => Some(Method::Save),
            3 => Some(Method::Dr),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sir" => Ok(Method::Sir),
            "save" => Ok(Method::Save),
            "dr" => Ok(Method::Dr),
            other => Err(format!("unknown method `{other}`")),
        }
    }
}

/// Coordinates a kernel is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelScale {
    CenteredX,
    StandardizedZ,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix<T> {
    pub v: Array2<T>,
    pub method: Method,
    pub scale: KernelScale,
}

/// Weighted between-slice covariance `sum_h (n_h/n) m_h m_h^T`.
pub fn sir_kernel<T: Scalar>(stats: &SliceStats<T>, n: u64) -> KernelMatrix<T> {
    let p = stats.p();
    let mut v = Array2::zeros((p, p));
    for (w, m) in slice_means(stats, n) {
        let col = m.view().insert_axis(Axis(1));
        let outer = col.dot(&col.t());
        v.scaled_add(w, &outer);
    }
    KernelMatrix {
        v,
        method: Method::Sir,
        scale: KernelScale::CenteredX,
    }
}

/// First and second moments of `u` within each nonempty slice.
struct SliceMoments<T> {
    weight: T,
    mean: Array1<T>,
    /// `E(u u^T | slice)` with divisor `n_h`.
    second: Array2<T>,
}

fn slice_moments<T: Scalar>(
    u: ArrayView2<'_, T>,
    y: ArrayView1<'_, T>,
    spec: &SliceSpec<T>,
) -> Result<Vec<SliceMoments<T>>> {
    let labels = assign_all(y, spec)?;
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); spec.slices()];
    for (i, &h) in labels.iter().enumerate() {
        members[h].push(i);
    }
    let n = T::from_usize_lossy(u.nrows());
    Ok(members
        .iter()
        .filter(|rows| !rows.is_empty())
        .map(|rows| {
            let block = u.select(Axis(0), rows);
            let nh = T::from_usize_lossy(rows.len());
            SliceMoments {
                weight: nh / n,
                mean: block.sum_axis(Axis(0)) / nh,
                second: block.t().dot(&block) / nh,
            }
        })
        .collect())
}

fn outer<T: Scalar>(m: &Array1<T>) -> Array2<T> {
    let col = m.view().insert_axis(Axis(1));
    col.dot(&col.t())
}

fn save_from_moments<T: Scalar>(moments: &[SliceMoments<T>], sigma: ArrayView2<'_, T>) -> Array2<T> {
    let p = sigma.nrows();
    let mut v = Array2::zeros((p, p));
    for sm in moments {
        let cond_cov = &sm.second - &outer(&sm.mean);
        let d = &sigma - &cond_cov;
        v.scaled_add(sm.weight, &d.dot(&d));
    }
    v
}

/// `sum_h (n_h/n) (sigma - cov(x | slice h))^2` with per-slice covariances
/// using divisor `n_h`.
pub fn save_kernel<T: Scalar>(
    data: &Dataset<T>,
    center: ArrayView1<'_, T>,
    spec: &SliceSpec<T>,
    sigma: ArrayView2<'_, T>,
) -> Result<KernelMatrix<T>> {
    let p = data.p();
    if center.len() != p {
        return Err(SdrError::DimensionMismatch {
            expected: p,
            found: center.len(),
        });
    }
    if sigma.dim() != (p, p) {
        return Err(SdrError::DimensionMismatch {
            expected: p,
            found: sigma.nrows(),
        });
    }
    let u = &data.x() - &center;
    let moments = slice_moments(u.view(), data.y(), spec)?;
    Ok(KernelMatrix {
        v: save_from_moments(&moments, sigma),
        method: Method::Save,
        scale: KernelScale::CenteredX,
    })
}

/// SAVE on standardized predictors, where the marginal covariance is `I`.
pub fn save_kernel_standardized<T: Scalar>(
    z: ArrayView2<'_, T>,
    spec: &SliceSpec<T>,
    y: ArrayView1<'_, T>,
) -> Result<KernelMatrix<T>> {
    check_rows(z, y)?;
    let moments = slice_moments(z, y, spec)?;
    let eye = Array2::eye(z.ncols());
    Ok(KernelMatrix {
        v: save_from_moments(&moments, eye.view()),
        method: Method::Save,
        scale: KernelScale::StandardizedZ,
    })
}

fn check_rows<T: Scalar>(z: ArrayView2<'_, T>, y: ArrayView1<'_, T>) -> Result<()> {
    if z.nrows() != y.len() {
        return Err(SdrError::DimensionMismatch {
            expected: z.nrows(),
            found: y.len(),
        });
    }
    if z.nrows() == 0 {
        return Err(SdrError::InvalidData("no observations".into()));
    }
    Ok(())
}

/// Tolerances for the standardization guard of [`dr_kernel`].
pub const STANDARDIZED_MEAN_TOL: f64 = 1e-6;
pub const STANDARDIZED_COV_TOL: f64 = 1e-3;

/// Directional-regression kernel on standardized predictors `z`.
///
/// Rejects `z` whose column means or sample covariance are visibly off the
/// standardized values; use [`dr_kernel_unchecked`] when the caller knowingly
/// centers or scales differently.
pub fn dr_kernel<T: Scalar>(
    z: ArrayView2<'_, T>,
    spec: &SliceSpec<T>,
    y: ArrayView1<'_, T>,
) -> Result<KernelMatrix<T>> {
    check_rows(z, y)?;
    let (mean, cov) = sample_covariance(z)?;
    let mean_err = mean.iter().fold(0.0f64, |a, v| a.max(v.as_f64().abs()));
    let cov_err = (&cov - &Array2::eye(z.ncols()))
        .iter()
        .map(|v| v.as_f64().powi(2))
        .sum::<f64>()
        .sqrt();
    if mean_err > STANDARDIZED_MEAN_TOL || cov_err > STANDARDIZED_COV_TOL {
        return Err(SdrError::NotStandardized { mean_err, cov_err });
    }
    dr_kernel_unchecked(z, spec, y)
}

/// [`dr_kernel`] without the standardization guard.
pub fn dr_kernel_unchecked<T: Scalar>(
    z: ArrayView2<'_, T>,
    spec: &SliceSpec<T>,
    y: ArrayView1<'_, T>,
) -> Result<KernelMatrix<T>> {
    check_rows(z, y)?;
    let moments = slice_moments(z, y, spec)?;
    Ok(KernelMatrix {
        v: dr_from_moments(&moments, z.ncols()),
        method: Method::Dr,
        scale: KernelScale::StandardizedZ,
    })
}

fn dr_from_moments<T: Scalar>(moments: &[SliceMoments<T>], p: usize) -> Array2<T> {
    let two = T::lit(2.0);
    let mut second_sq = Array2::<T>::zeros((p, p));
    let mut between = Array2::<T>::zeros((p, p));
    for sm in moments {
        second_sq.scaled_add(sm.weight, &sm.second.dot(&sm.second));
        between.scaled_add(sm.weight, &outer(&sm.mean));
    }
    let trace: T = between.diag().iter().copied().sum();
    let mut v = second_sq * two;
    v.scaled_add(two, &between.dot(&between));
    v.scaled_add(two * trace, &between);
    v - Array2::<T>::eye(p) * two
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::slicing::{make_slice_grid, slice_statistics};
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn two_point_sir_kernel() {
        let d = Dataset::new(array![[-1.0], [1.0]], array![0.2, 0.8]).unwrap();
        let spec = SliceSpec::from_grid(vec![0.0, 0.5, 1.0]).unwrap();
        let st = slice_statistics(&d, array![0.0].view(), &spec).unwrap();
        assert_eq!(sir_kernel(&st, 2).v, array![[1.0]]);
    }

    #[test]
    fn single_occupied_slice_gives_zero_kernels() {
        let x = array![[1.0, 2.0], [3.0, -1.0], [0.5, 0.5], [2.0, 1.0]];
        let y = array![0.1, 0.2, 0.3, 0.4];
        let d = Dataset::new(x.clone(), y.clone()).unwrap();
        let spec = SliceSpec::from_grid(vec![0.0, 1.0, 2.0]).unwrap();
        let mean = d.column_mean();
        let st = slice_statistics(&d, mean.view(), &spec).unwrap();
        assert!(sir_kernel(&st, 4).v.iter().all(|v: &f64| v.abs() < 1e-15));

        // divisor n_h for the slice covariance, so compare against the same
        let u = &x - &mean;
        let sigma = u.t().dot(&u) / 4.0;
        let k = save_kernel(&d, mean.view(), &spec, sigma.view()).unwrap();
        assert!(k.v.iter().all(|v: &f64| v.abs() < 1e-12));
    }

    #[test]
    fn dr_cancels_on_exact_standardized_moments() {
        // per-slice mean 0 and second moment I in two dimensions
        let block = array![[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]];
        let z = ndarray::concatenate(Axis(0), &[block.view(), block.view()]).unwrap();
        let y = array![0.1, 0.1, 0.1, 0.1, 0.9, 0.9, 0.9, 0.9];
        let spec = SliceSpec::from_grid(vec![0.0, 0.5, 1.0]).unwrap();
        let k = dr_kernel_unchecked(z.view(), &spec, y.view()).unwrap();
        assert_abs_diff_eq!(k.v, Array2::zeros((2, 2)), epsilon = 1e-14);
        assert_eq!(k.scale, KernelScale::StandardizedZ);
    }

    #[test]
    fn dr_guard_rejects_raw_predictors() {
        let z = array![[1.0, 2.0], [3.0, 5.0], [4.0, 1.0]];
        let y = array![0.0, 1.0, 2.0];
        let spec = make_slice_grid(0.0, 2.0, 2).unwrap();
        assert!(matches!(
            dr_kernel(z.view(), &spec, y.view()),
            Err(SdrError::NotStandardized { .. })
        ));
    }

    #[test]
    fn method_round_trips_through_text_and_tag() {
        for m in [Method::Sir, Method::Save, Method::Dr] {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
            assert_eq!(Method::from_tag(m.tag()), Some(m));
        }
        assert!("pca".parse::<Method>().is_err());
        assert_eq!(Method::from_tag(9), None);
    }
}
