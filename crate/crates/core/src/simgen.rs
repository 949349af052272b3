//! Simulation designs: predictor distributions, response models 1 to 8,
//! their true bases and shard partition schemes.
//!
//! Every generator draws from ChaCha20 keyed by the seed, with a fixed
//! stream per task so predictors, noise and partitions are independent and
//! replayable on any platform.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::data::Dataset;
use crate::error::{Result, SdrError};
use crate::linalg::symmetric_eigen;
use crate::scalar::Scalar;

pub const PREDICTOR_STREAM: u64 = 1;
pub const NOISE_STREAM: u64 = 2;
pub const PARTITION_STREAM: u64 = 3;

/// Default noise scale.
pub const DEFAULT_SIGMA: f64 = 0.5;

/// Default shard proportions for unequal heterogeneous partitions.
pub const DEFAULT_PROPORTIONS: [f64; 5] = [0.05, 0.30, 0.10, 0.40, 0.15];

pub fn rng_for(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictorMode {
    /// `N(0, I)`.
    StandardNormal,
    /// `N(mu, I)` with `mu = (1, 2, 3, 4, 5, 1, 2, ...)`.
    HeterogeneousNormal,
    /// `N(0, Sigma)` with `Sigma_ii = 0.8`, `Sigma_ij = 0.5^|i-j|`.
    DependentNormal,
}

impl fmt::Display for PredictorMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PredictorMode::StandardNormal => "standard",
            PredictorMode::HeterogeneousNormal => "hetero",
            PredictorMode::DependentNormal => "dependent",
        })
    }
}

impl FromStr for PredictorMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "standard" => Ok(PredictorMode::StandardNormal),
            "hetero" | "heterogeneous" => Ok(PredictorMode::HeterogeneousNormal),
            "dependent" => Ok(PredictorMode::DependentNormal),
            other => Err(format!("unknown predictor mode `{other}`")),
        }
    }
}

/// Population mean of the predictors.
pub fn population_mean<T: Scalar>(mode: PredictorMode, p: usize) -> Array1<T> {
    match mode {
        PredictorMode::HeterogeneousNormal => Array1::from_shape_fn(p, |i| T::from_usize_lossy(i % 5 + 1)),
        _ => Array1::zeros(p),
    }
}

/// Population covariance of the predictors.
pub fn population_covariance<T: Scalar>(mode: PredictorMode, p: usize) -> Array2<T> {
    match mode {
        PredictorMode::DependentNormal => Array2::from_shape_fn((p, p), |(i, j)| {
            if i == j {
                T::lit(0.8)
            } else {
                T::lit(0.5f64.powi(i.abs_diff(j) as i32))
            }
        }),
        _ => Array2::eye(p),
    }
}

/// `n x p` predictor matrix with i.i.d. rows.
pub fn gen_predictors<T: Scalar>(mode: PredictorMode, n: usize, p: usize, seed: u64) -> Array2<T> {
    let mut rng = rng_for(seed, PREDICTOR_STREAM);
    let e: Array2<f64> = Array2::from_shape_simple_fn((n, p), || rng.sample(StandardNormal));
    let x = match mode {
        PredictorMode::StandardNormal => e,
        PredictorMode::HeterogeneousNormal => e + &population_mean::<f64>(mode, p),
        PredictorMode::DependentNormal => {
            let cov = population_covariance::<f64>(mode, p);
            let eig = symmetric_eigen(cov.view()).expect("covariance is symmetric");
            let q = &eig.vectors;
            // symmetric square root; rows of e times it have covariance cov
            let root = (q * &eig.values.mapv(f64::sqrt)).dot(&q.t());
            e.dot(&root)
        }
    };
    x.mapv(T::lit)
}

/// Smallest predictor dimension a model is defined for.
pub fn min_dimension(model: u8) -> Result<usize> {
    match model {
        1 | 2 => Ok(4),
        3..=5 => Ok(2),
        6..=8 => Ok(6),
        other => Err(SdrError::UnknownModel(other)),
    }
}

/// Dimension of the central subspace of a model.
pub fn structural_dimension(model: u8) -> Result<usize> {
    match model {
        1 | 4 | 5 => Ok(1),
        2 | 3 | 6..=8 => Ok(2),
        other => Err(SdrError::UnknownModel(other)),
    }
}

fn check_dimension(model: u8, p: usize) -> Result<()> {
    let needed = min_dimension(model)?;
    if p < needed {
        return Err(SdrError::InsufficientDimension { model, needed, p });
    }
    Ok(())
}

fn model_mean(model: u8, x: &[f64]) -> f64 {
    let s2 = 2f64.sqrt();
    match model {
        1 => x[0] + x[1] + x[2] + x[3],
        2 => (x[0] + x[1]) + (x[2] + x[3]).exp(),
        3 => x[0] / (0.5 + (x[1] + 1.5).powi(2)),
        4 => (s2 * x[0] + s2 * x[1]).powi(2),
        5 => (x[0] + x[1] + 1.0).powi(2),
        6 => 0.4 * (x[0] + x[1] + x[2]).powi(2) + (x[0] + x[4] + 3.0 * x[5]).abs().sqrt(),
        7 => 0.3 * ((x[0] + x[4] + 3.0 * x[5]) / 4.0).sin(),
        8 => 0.4 * (x[0] + x[1] + x[2]).powi(2) + 3.0 * ((x[0] + x[4] + 3.0 * x[5]) / 4.0).sin(),
        _ => unreachable!("model checked"),
    }
}

fn noise_scale(model: u8, x: &[f64]) -> f64 {
    match model {
        7 => 1.0 + (x[0] + x[1] + x[2]).powi(2),
        _ => 1.0,
    }
}

/// Response of `model` for each row of `x`, with noise `sigma * eps`.
pub fn gen_response<T: Scalar>(model: u8, x: ArrayView2<'_, T>, sigma: f64, seed: u64) -> Result<Array1<T>> {
    check_dimension(model, x.ncols())?;
    let mut rng = rng_for(seed, NOISE_STREAM);
    let mut row = vec![0.0; x.ncols()];
    let y = x
        .axis_iter(Axis(0))
        .map(|r| {
            for (dst, v) in row.iter_mut().zip(r.iter()) {
                *dst = v.as_f64();
            }
            let eps: f64 = rng.sample(StandardNormal);
            T::lit(model_mean(model, &row) + noise_scale(model, &row) * sigma * eps)
        })
        .collect();
    Ok(y)
}

/// The model's true directions as unit columns, zero-padded to length `p`.
pub fn true_basis<T: Scalar>(model: u8, p: usize) -> Result<Array2<T>> {
    check_dimension(model, p)?;
    let r2 = 0.5f64.sqrt();
    let r3 = (1.0f64 / 3.0).sqrt();
    let r11 = (1.0f64 / 11.0).sqrt();
    let cols: Vec<Vec<(usize, f64)>> = match model {
        1 => vec![(0..4).map(|i| (i, 0.5)).collect()],
        2 => vec![vec![(2, r2), (3, r2)], vec![(0, r2), (1, r2)]],
        3 => vec![vec![(0, 1.0)], vec![(1, 1.0)]],
        4 | 5 => vec![vec![(0, r2), (1, r2)]],
        _ => vec![
            vec![(0, r3), (1, r3), (2, r3)],
            vec![(0, r11), (4, r11), (5, 3.0 * r11)],
        ],
    };
    let mut b = Array2::zeros((p, cols.len()));
    for (j, entries) in cols.iter().enumerate() {
        for &(i, v) in entries {
            b[[i, j]] = T::lit(v);
        }
    }
    Ok(b)
}

/// Predictors and response for one simulated repetition.
pub fn simulate<T: Scalar>(
    model: u8,
    mode: PredictorMode,
    n: usize,
    p: usize,
    sigma: f64,
    seed: u64,
) -> Result<Dataset<T>> {
    check_dimension(model, p)?;
    let x = gen_predictors::<T>(mode, n, p, seed);
    let y = gen_response(model, x.view(), sigma, seed)?;
    Dataset::new(x, y)
}

#[derive(Debug, Clone, PartialEq)]
pub enum PartitionScheme {
    /// Random permutation split into `S` near-equal blocks.
    HomogeneousEqual(usize),
    /// Sorted by descending response, `S` near-equal blocks.
    HeterogeneousEqual(usize),
    /// Sorted by descending response, blocks of the given proportions.
    HeterogeneousUnequal(Vec<f64>),
}

impl PartitionScheme {
    pub fn workers(&self) -> usize {
        match self {
            PartitionScheme::HomogeneousEqual(s) | PartitionScheme::HeterogeneousEqual(s) => *s,
            PartitionScheme::HeterogeneousUnequal(p) => p.len(),
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            PartitionScheme::HomogeneousEqual(_) => "homo-equal",
            PartitionScheme::HeterogeneousEqual(_) => "hetero-equal",
            PartitionScheme::HeterogeneousUnequal(_) => "hetero-unequal",
        }
    }

    /// Shard sizes for `n` observations.
    pub fn sizes(&self, n: usize) -> Result<Vec<usize>> {
        let sizes = match self {
            PartitionScheme::HomogeneousEqual(s) | PartitionScheme::HeterogeneousEqual(s) => {
                if *s == 0 {
                    return Err(SdrError::InvalidPartition("need at least one shard".into()));
                }
                let (base, rem) = (n / s, n % s);
                (0..*s).map(|i| base + usize::from(i < rem)).collect::<Vec<_>>()
            }
            PartitionScheme::HeterogeneousUnequal(props) => {
                if props.is_empty() {
                    return Err(SdrError::InvalidPartition("no proportions".into()));
                }
                if props.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                    return Err(SdrError::InvalidPartition(
                        "proportions must be positive".into(),
                    ));
                }
                let total: f64 = props.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(SdrError::InvalidPartition(format!(
                        "proportions sum to {total}, not 1"
                    )));
                }
                let head: Vec<usize> = props[..props.len() - 1]
                    .iter()
                    .map(|pr| (pr * n as f64).round() as usize)
                    .collect();
                let used: usize = head.iter().sum();
                if used >= n {
                    return Err(SdrError::EmptyShard);
                }
                let mut sizes = head;
                sizes.push(n - used);
                sizes
            }
        };
        if sizes.iter().any(|&s| s == 0) {
            return Err(SdrError::EmptyShard);
        }
        Ok(sizes)
    }
}

/// Row indices assigned to each shard.
pub fn partition_indices<T: Scalar>(
    data: &Dataset<T>,
    scheme: &PartitionScheme,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    let n = data.n();
    let sizes = scheme.sizes(n)?;
    let mut order: Vec<usize> = (0..n).collect();
    match scheme {
        PartitionScheme::HomogeneousEqual(_) => {
            order.shuffle(&mut rng_for(seed, PARTITION_STREAM));
        }
        _ => {
            let y = data.y();
            order.sort_by(|&a, &b| y[b].partial_cmp(&y[a]).expect("finite responses"));
        }
    }
    let mut out = Vec::with_capacity(sizes.len());
    let mut start = 0;
    for s in sizes {
        out.push(order[start..start + s].to_vec());
        start += s;
    }
    Ok(out)
}

/// Splits `data` into shards under `scheme`.
pub fn partition<T: Scalar>(data: &Dataset<T>, scheme: &PartitionScheme, seed: u64) -> Result<Vec<Dataset<T>>> {
    partition_indices(data, scheme, seed)?
        .iter()
        .map(|idx| data.select(idx))
        .collect()
}
