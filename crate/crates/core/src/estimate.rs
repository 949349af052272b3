use std::fmt;

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::data::{sample_covariance, Dataset};
use crate::error::{Result, SdrError};
use crate::kernel::{dr_kernel_unchecked, save_kernel_standardized, sir_kernel, KernelMatrix, Method};
use crate::linalg::{canonical_sign, top_k_eigen, whiten, EigenPair, SpectralInverse};
use crate::scalar::Scalar;
use crate::slicing::{make_slice_grid, slice_statistics, SliceSpec};

/// How an estimate was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Global,
    ExactDistributed,
    ApproxDistributed,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Global => "global",
            Mode::ExactDistributed => "exact",
            Mode::ApproxDistributed => "approx",
        })
    }
}

/// Number of directions to keep: fixed, or the smallest count whose share of
/// the nonnegative spectrum reaches `alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KRule {
    Fixed(usize),
    VarianceThreshold(f64),
}

impl KRule {
    /// Applies the rule to a descending spectrum of a `p x p` matrix.
    pub fn select<T: Scalar>(&self, values: &[T]) -> Result<usize> {
        let p = values.len();
        match *self {
            KRule::Fixed(k) => {
                if k == 0 || k > p {
                    Err(SdrError::InvalidDirectionCount { k, p })
                } else {
                    Ok(k)
                }
            }
            KRule::VarianceThreshold(alpha) => {
                if !(alpha > 0.0 && alpha <= 1.0) {
                    return Err(SdrError::InvalidData(format!(
                        "variance threshold {alpha} outside (0, 1]"
                    )));
                }
                let positive: Vec<f64> = values.iter().map(|v| v.as_f64().max(0.0)).collect();
                let total: f64 = positive.iter().sum();
                if total <= 0.0 {
                    return Ok(1);
                }
                let mut acc = 0.0;
                for (i, v) in positive.iter().enumerate() {
                    acc += v;
                    if acc / total >= alpha * (1.0 - 1e-12) {
                        return Ok(i + 1);
                    }
                }
                Ok(p)
            }
        }
    }
}

impl fmt::Display for KRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KRule::Fixed(k) => write!(f, "k={k}"),
            KRule::VarianceThreshold(a) => write!(f, "alpha={a}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateParams {
    pub slices: usize,
    pub k_rule: KRule,
    pub workers: usize,
    pub partition: Option<String>,
}

/// Estimated directions (unit columns, canonical signs) and the leading
/// kernel eigenvalues.
#[derive(Debug, Clone, PartialEq)]
pub struct SdrEstimate<T> {
    pub beta: Array2<T>,
    pub eigenvalues: Array1<T>,
    pub method: Method,
    pub mode: Mode,
    pub params: EstimateParams,
}

impl<T: Scalar> SdrEstimate<T> {
    pub fn k(&self) -> usize {
        self.beta.ncols()
    }
}

/// Scales every column to unit length and applies the canonical sign rule.
pub fn normalize_columns<T: Scalar>(m: &mut Array2<T>) {
    for mut col in m.axis_iter_mut(Axis(1)) {
        let norm = col.iter().map(|v| *v * *v).sum::<T>().sqrt();
        if norm > T::zero() {
            col.mapv_inplace(|v| v / norm);
        }
        canonical_sign(col);
    }
}

/// `Sigma^-1 eta` for the leading eigenvectors `eta` of a centered-X SIR kernel.
pub fn sir_directions<T: Scalar>(
    v: ArrayView2<'_, T>,
    sigma: ArrayView2<'_, T>,
    k_rule: KRule,
) -> Result<EigenPair<T>> {
    let full = top_k_eigen(v, v.nrows())?;
    let k = k_rule.select(full.values.as_slice().expect("contiguous"))?;
    let eta = full.truncate(k);
    let inv = SpectralInverse::regularized(sigma)?.inverse();
    let mut beta = inv.dot(&eta.vectors);
    normalize_columns(&mut beta);
    Ok(EigenPair {
        values: eta.values,
        vectors: beta,
    })
}

/// `W eta` for the leading eigenvectors `eta` of a kernel on the standardized scale.
pub fn standardized_directions<T: Scalar>(
    v: ArrayView2<'_, T>,
    w: ArrayView2<'_, T>,
    k_rule: KRule,
) -> Result<EigenPair<T>> {
    let full = top_k_eigen(v, v.nrows())?;
    let k = k_rule.select(full.values.as_slice().expect("contiguous"))?;
    let eta = full.truncate(k);
    let mut beta = w.dot(&eta.vectors);
    normalize_columns(&mut beta);
    Ok(EigenPair {
        values: eta.values,
        vectors: beta,
    })
}

/// A full-sample fit together with its intermediate quantities.
#[derive(Debug, Clone)]
pub struct GlobalFit<T> {
    pub estimate: SdrEstimate<T>,
    pub kernel: KernelMatrix<T>,
    pub spec: SliceSpec<T>,
    pub mean: Array1<T>,
    /// Sample covariance of the predictors, divisor `n - 1`.
    pub sigma: Array2<T>,
}

/// Full-sample SIR, SAVE or DR with `k` directions.
pub fn fit_global<T: Scalar>(
    data: &Dataset<T>,
    method: Method,
    slices: usize,
    k: usize,
) -> Result<SdrEstimate<T>> {
    Ok(fit_global_detailed(data, method, slices, KRule::Fixed(k))?.estimate)
}

pub fn fit_global_detailed<T: Scalar>(
    data: &Dataset<T>,
    method: Method,
    slices: usize,
    k_rule: KRule,
) -> Result<GlobalFit<T>> {
    if let KRule::Fixed(k) = k_rule {
        if k == 0 || k > data.p() {
            return Err(SdrError::InvalidDirectionCount { k, p: data.p() });
        }
    }
    if data.n() <= data.p() {
        log::warn!(
            "fitting with n = {} not exceeding p = {}; estimates will be unstable",
            data.n(),
            data.p()
        );
    }
    let (lo, hi) = data.response_range();
    let spec = make_slice_grid(lo, hi, slices)?;
    let (mean, sigma) = sample_covariance(data.x())?;

    let (kernel, dirs) = match method {
        Method::Sir => {
            let stats = slice_statistics(data, mean.view(), &spec)?;
            let kernel = sir_kernel(&stats, data.n() as u64);
            let dirs = sir_directions(kernel.v.view(), sigma.view(), k_rule)?;
            (kernel, dirs)
        }
        Method::Save | Method::Dr => {
            let wh = whiten(data)?;
            let kernel = if method == Method::Save {
                save_kernel_standardized(wh.z.view(), &spec, data.y())?
            } else {
                dr_kernel_unchecked(wh.z.view(), &spec, data.y())?
            };
            let dirs = standardized_directions(kernel.v.view(), wh.w.view(), k_rule)?;
            (kernel, dirs)
        }
    };

    Ok(GlobalFit {
        estimate: SdrEstimate {
            beta: dirs.vectors,
            eigenvalues: dirs.values,
            method,
            mode: Mode::Global,
            params: EstimateParams {
                slices,
                k_rule,
                workers: 1,
                partition: None,
            },
        },
        kernel,
        spec,
        mean,
        sigma,
    })
}
