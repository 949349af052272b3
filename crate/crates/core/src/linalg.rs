//! Dense symmetric eigendecomposition and the spectral inverses built on it.
//!
//! The eigensolver is the classical Householder tridiagonalization followed
//! by the implicit QL iteration (EISPACK `tred2`/`tql2`). It is deterministic
//! for a given input, which the distributed estimators rely on when they
//! compare against pooled fits.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::data::{sample_covariance, Dataset};
use crate::error::{Result, SdrError};
use crate::scalar::Scalar;

/// Relative asymmetry accepted before a matrix is rejected as non-symmetric.
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Eigenvalue ratio at or below which a covariance counts as singular.
pub const SINGULAR_RATIO: f64 = 1e-12;
/// Ridge scale (times `trace / p`) used when a covariance is singular.
pub const RIDGE_SCALE: f64 = 1e-8;
/// Negative eigenvalues down to `-PSD_SLACK * trace` are treated as zero.
pub const PSD_SLACK: f64 = 1e-10;

const MAX_QL_SWEEPS: usize = 64;

/// Eigenvalues in descending order with matching orthonormal eigenvectors
/// stored as columns.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair<T> {
    pub values: Array1<T>,
    pub vectors: Array2<T>,
}

impl<T: Scalar> EigenPair<T> {
    /// Keeps the leading `k` pairs.
    pub fn truncate(&self, k: usize) -> EigenPair<T> {
        EigenPair {
            values: self.values.slice(ndarray::s![..k]).to_owned(),
            vectors: self.vectors.slice(ndarray::s![.., ..k]).to_owned(),
        }
    }

    /// `V diag(values) V^T`.
    pub fn reconstruct(&self) -> Array2<T> {
        let scaled = &self.vectors * &self.values;
        scaled.dot(&self.vectors.t())
    }
}

/// Largest absolute asymmetry relative to the largest absolute entry.
pub fn relative_asymmetry<T: Scalar>(m: ArrayView2<'_, T>) -> f64 {
    let n = m.nrows();
    let mut scale = 0.0f64;
    let mut asym = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            scale = scale.max(m[[i, j]].as_f64().abs());
            if j > i {
                asym = asym.max((m[[i, j]] - m[[j, i]]).as_f64().abs());
            }
        }
    }
    if scale == 0.0 {
        0.0
    } else {
        asym / scale
    }
}

fn check_square<T: Scalar>(m: ArrayView2<'_, T>) -> Result<usize> {
    let (r, c) = m.dim();
    if r != c {
        return Err(SdrError::DimensionMismatch {
            expected: r,
            found: c,
        });
    }
    if r == 0 {
        return Err(SdrError::InvalidData("empty matrix".into()));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(SdrError::InvalidData("non-finite matrix entry".into()));
    }
    Ok(r)
}

/// Flips `v` so its entry of largest magnitude is positive; ties go to the
/// lowest index.
pub fn canonical_sign<T: Scalar>(mut v: ndarray::ArrayViewMut1<'_, T>) {
    let mut best = 0;
    let mut best_abs = T::zero();
    for (i, x) in v.iter().enumerate() {
        if x.abs() > best_abs {
            best_abs = x.abs();
            best = i;
        }
    }
    if v[best] < T::zero() {
        v.mapv_inplace(|x| -x);
    }
}

/// Applies [`canonical_sign`] to every column.
pub fn canonicalize_columns<T: Scalar>(m: &mut Array2<T>) {
    for col in m.axis_iter_mut(Axis(1)) {
        canonical_sign(col);
    }
}

/// Full eigendecomposition of a symmetric matrix, descending order, canonical signs.
pub fn symmetric_eigen<T: Scalar>(m: ArrayView2<'_, T>) -> Result<EigenPair<T>> {
    let n = check_square(m)?;
    let asym = relative_asymmetry(m);
    if asym > SYMMETRY_TOL {
        return Err(SdrError::NonSymmetric(asym));
    }
    let half = T::lit(0.5);
    let mut v = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..n {
            v[i * n + j] = (m[[i, j]] + m[[j, i]]) * half;
        }
    }
    let mut d = vec![T::zero(); n];
    let mut e = vec![T::zero(); n];
    tred2(n, &mut v, &mut d, &mut e);
    // tql2 rotates pairs of columns; work on the transpose so they are rows.
    let mut vt = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..n {
            vt[j * n + i] = v[i * n + j];
        }
    }
    tql2(n, &mut vt, &mut d, &mut e)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[b].partial_cmp(&d[a]).expect("finite eigenvalues"));
    let values = Array1::from_iter(order.iter().map(|&i| d[i]));
    let mut vectors = Array2::zeros((n, n));
    for (col, &src) in order.iter().enumerate() {
        for row in 0..n {
            vectors[[row, col]] = vt[src * n + row];
        }
    }
    canonicalize_columns(&mut vectors);
    Ok(EigenPair { values, vectors })
}

/// The `k` leading eigenpairs of a symmetric matrix.
pub fn top_k_eigen<T: Scalar>(m: ArrayView2<'_, T>, k: usize) -> Result<EigenPair<T>> {
    let p = check_square(m)?;
    if k == 0 || k > p {
        return Err(SdrError::InvalidDirectionCount { k, p });
    }
    Ok(symmetric_eigen(m)?.truncate(k))
}

fn tred2<T: Scalar>(n: usize, v: &mut [T], d: &mut [T], e: &mut [T]) {
    let zero = T::zero();
    let idx = |r: usize, c: usize| r * n + c;
    for j in 0..n {
        d[j] = v[idx(n - 1, j)];
    }
    for i in (1..n).rev() {
        let mut scale = zero;
        let mut h = zero;
        for k in 0..i {
            scale = scale + d[k].abs();
        }
        if scale == zero {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[idx(i - 1, j)];
                v[idx(i, j)] = zero;
                v[idx(j, i)] = zero;
            }
        } else {
            for k in 0..i {
                d[k] = d[k] / scale;
                h = h + d[k] * d[k];
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > zero {
                g = -g;
            }
            e[i] = scale * g;
            h = h - f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = zero;
            }
            for j in 0..i {
                f = d[j];
                v[idx(j, i)] = f;
                g = e[j] + v[idx(j, j)] * f;
                for k in (j + 1)..i {
                    g = g + v[idx(k, j)] * d[k];
                    e[k] = e[k] + v[idx(k, j)] * f;
                }
                e[j] = g;
            }
            f = zero;
            for j in 0..i {
                e[j] = e[j] / h;
                f = f + e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] = e[j] - hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[idx(k, j)] = v[idx(k, j)] - (f * e[k] + g * d[k]);
                }
                d[j] = v[idx(i - 1, j)];
                v[idx(i, j)] = zero;
            }
        }
        d[i] = h;
    }
    for i in 0..n.saturating_sub(1) {
        v[idx(n - 1, i)] = v[idx(i, i)];
        v[idx(i, i)] = T::one();
        let h = d[i + 1];
        if h != zero {
            for k in 0..=i {
                d[k] = v[idx(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = zero;
                for k in 0..=i {
                    g = g + v[idx(k, i + 1)] * v[idx(k, j)];
                }
                for k in 0..=i {
                    v[idx(k, j)] = v[idx(k, j)] - g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[idx(k, i + 1)] = zero;
        }
    }
    for j in 0..n {
        d[j] = v[idx(n - 1, j)];
        v[idx(n - 1, j)] = zero;
    }
    v[idx(n - 1, n - 1)] = T::one();
    e[0] = zero;
}

/// Implicit QL on the tridiagonal (d, e). `vt` holds eigenvectors as rows.
fn tql2<T: Scalar>(n: usize, vt: &mut [T], d: &mut [T], e: &mut [T]) -> Result<()> {
    let zero = T::zero();
    let one = T::one();
    let two = T::lit(2.0);
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = zero;
    let mut f = zero;
    let mut tst1 = zero;
    let eps = T::epsilon();
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > MAX_QL_SWEEPS {
                    return Err(SdrError::ConvergenceFailure(iter));
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (two * e[l]);
                let mut r = p.hypot(one);
                if p < zero {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().take(n).skip(l + 2) {
                    *di = *di - h;
                }
                f = f + h;

                p = d[m];
                let mut c = one;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = zero;
                let mut s2 = zero;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    let (lo, hi) = vt.split_at_mut((i + 1) * n);
                    let row_i = &mut lo[i * n..];
                    let row_i1 = &mut hi[..n];
                    for (a, b) in row_i.iter_mut().zip(row_i1.iter_mut()) {
                        let hb = *b;
                        *b = s * *a + c * hb;
                        *a = c * *a - s * hb;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] = d[l] + f;
        e[l] = zero;
    }
    Ok(())
}

/// Eigendecomposition of a symmetric positive semidefinite matrix together
/// with the ridge applied when inverting it.
#[derive(Debug, Clone)]
pub struct SpectralInverse<T> {
    eigen: EigenPair<T>,
    ridge: T,
}

impl<T: Scalar> SpectralInverse<T> {
    /// Decomposes `sigma` with an explicit ridge `ridge >= 0`.
    ///
    /// With `ridge == 0` a numerically singular matrix is an error.
    pub fn with_ridge(sigma: ArrayView2<'_, T>, ridge: T) -> Result<Self> {
        let eigen = psd_eigen(sigma)?;
        if ridge == T::zero() {
            check_nonsingular(&eigen)?;
        }
        Ok(Self { eigen, ridge })
    }

    /// Decomposes `sigma`, adding a small ridge only if it is singular.
    pub fn regularized(sigma: ArrayView2<'_, T>) -> Result<Self> {
        let eigen = psd_eigen(sigma)?;
        let ridge = if check_nonsingular(&eigen).is_ok() {
            T::zero()
        } else {
            let p = T::from_usize_lossy(sigma.nrows());
            let trace: T = sigma.diag().iter().copied().sum();
            T::lit(RIDGE_SCALE) * trace / p
        };
        if ridge <= T::zero() && check_nonsingular(&eigen).is_err() {
            // zero matrix: no scale to regularize against
            check_nonsingular(&eigen)?;
        }
        Ok(Self { eigen, ridge })
    }

    pub fn ridge(&self) -> T {
        self.ridge
    }

    pub fn eigen(&self) -> &EigenPair<T> {
        &self.eigen
    }

    fn spectral(&self, f: impl Fn(T) -> T) -> Array2<T> {
        let q = &self.eigen.vectors;
        let scale = self
            .eigen
            .values
            .mapv(|l| f(l.max(T::zero()) + self.ridge));
        (q * &scale).dot(&q.t())
    }

    /// `(sigma + ridge I)^(-1/2)`.
    pub fn inverse_sqrt(&self) -> Array2<T> {
        self.spectral(|l| T::one() / l.sqrt())
    }

    /// `(sigma + ridge I)^(-1)`.
    pub fn inverse(&self) -> Array2<T> {
        self.spectral(|l| T::one() / l)
    }
}

fn psd_eigen<T: Scalar>(sigma: ArrayView2<'_, T>) -> Result<EigenPair<T>> {
    let eigen = symmetric_eigen(sigma)?;
    let trace: T = sigma.diag().iter().copied().sum();
    let min = eigen.values[eigen.values.len() - 1];
    if min < -T::lit(PSD_SLACK) * trace.abs() {
        return Err(SdrError::SingularCovariance {
            min_eigenvalue: min.as_f64(),
            max_eigenvalue: eigen.values[0].as_f64(),
        });
    }
    Ok(eigen)
}

fn check_nonsingular<T: Scalar>(eigen: &EigenPair<T>) -> Result<()> {
    let max = eigen.values[0];
    let min = eigen.values[eigen.values.len() - 1];
    if max <= T::zero() || min <= T::lit(SINGULAR_RATIO) * max {
        return Err(SdrError::SingularCovariance {
            min_eigenvalue: min.as_f64(),
            max_eigenvalue: max.as_f64(),
        });
    }
    Ok(())
}

/// `Q diag((lambda + ridge)^(-1/2)) Q^T` for a symmetric PSD `sigma`.
pub fn inverse_sqrt<T: Scalar>(sigma: ArrayView2<'_, T>, ridge: T) -> Result<Array2<T>> {
    Ok(SpectralInverse::with_ridge(sigma, ridge)?.inverse_sqrt())
}

/// Standardized predictors `z = (x - mean) W` with `W = cov^(-1/2)`.
#[derive(Debug, Clone)]
pub struct Whitened<T> {
    pub z: Array2<T>,
    pub mean: Array1<T>,
    pub w: Array2<T>,
    pub ridge: T,
}

/// Centers and whitens the predictors by the inverse square root of their
/// sample covariance (ridged only when singular).
pub fn whiten<T: Scalar>(data: &Dataset<T>) -> Result<Whitened<T>> {
    let (mean, cov) = sample_covariance(data.x())?;
    let inv = SpectralInverse::regularized(cov.view())?;
    let w = inv.inverse_sqrt();
    let z = (&data.x() - &mean).dot(&w);
    Ok(Whitened {
        z,
        mean,
        w,
        ridge: inv.ridge(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn diagonal_leading_pair() {
        let m = array![[3.0, 0.0], [0.0, 1.0]];
        let e = top_k_eigen(m.view(), 1).unwrap();
        assert_eq!(e.values, array![3.0]);
        assert_eq!(e.vectors, array![[1.0], [0.0]]);
    }

    #[test]
    fn identity_returns_canonical_basis() {
        let e = top_k_eigen(Array2::<f64>::eye(2).view(), 2).unwrap();
        assert_eq!(e.values, array![1.0, 1.0]);
        assert_eq!(e.vectors, Array2::eye(2));
    }

    #[test]
    fn canonical_sign_prefers_lowest_index_on_ties() {
        let mut v = array![-0.5, 0.5, 0.1];
        canonical_sign(v.view_mut());
        assert_eq!(v, array![0.5, -0.5, -0.1]);
    }

    #[test]
    fn rejects_asymmetric_and_bad_k() {
        let m = array![[1.0, 2.0], [0.0, 1.0]];
        assert!(matches!(
            top_k_eigen(m.view(), 1),
            Err(SdrError::NonSymmetric(_))
        ));
        let m = Array2::<f64>::eye(3);
        assert!(matches!(
            top_k_eigen(m.view(), 0),
            Err(SdrError::InvalidDirectionCount { .. })
        ));
        assert!(matches!(
            top_k_eigen(m.view(), 4),
            Err(SdrError::InvalidDirectionCount { .. })
        ));
    }

    #[test]
    fn one_by_one_and_zero_matrices() {
        let e = symmetric_eigen(array![[-2.5]].view()).unwrap();
        assert_eq!(e.values, array![-2.5]);
        assert_eq!(e.vectors, array![[1.0]]);
        let e = symmetric_eigen(Array2::<f64>::zeros((3, 3)).view()).unwrap();
        assert!(e.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn inverse_sqrt_of_diagonal() {
        let w = inverse_sqrt(array![[4.0, 0.0], [0.0, 1.0]].view(), 0.0).unwrap();
        assert_abs_diff_eq!(w, array![[0.5, 0.0], [0.0, 1.0]], epsilon = 1e-15);
        let w = inverse_sqrt(Array2::<f64>::eye(4).view(), 0.0).unwrap();
        assert_abs_diff_eq!(w, Array2::eye(4), epsilon = 1e-15);
    }

    #[test]
    fn singular_covariance_needs_ridge() {
        let s = array![[1.0, 1.0], [1.0, 1.0]];
        assert!(matches!(
            inverse_sqrt(s.view(), 0.0),
            Err(SdrError::SingularCovariance { .. })
        ));
        assert!(inverse_sqrt(s.view(), 1e-3).is_ok());
        let inv = SpectralInverse::regularized(s.view()).unwrap();
        assert_abs_diff_eq!(inv.ridge(), 1e-8, epsilon = 1e-20);
        assert!(SpectralInverse::regularized(Array2::<f64>::zeros((2, 2)).view()).is_err());
    }

    #[test]
    fn whiten_needs_two_rows() {
        let d = Dataset::new(array![[1.0, 2.0]], array![0.0]).unwrap();
        assert!(matches!(
            whiten(&d),
            Err(SdrError::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn works_in_single_precision() {
        let m = array![[2.0f32, 1.0], [1.0, 2.0]];
        let e = symmetric_eigen(m.view()).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-5);
        assert!((e.values[1] - 1.0).abs() < 1e-5);
    }
}
