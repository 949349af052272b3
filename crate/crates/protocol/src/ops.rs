//! Worker and master steps of the exact two-round SIR protocol and the
//! one-shot eigen-aggregation protocol. All functions are pure; transports
//! and orchestration live in [`crate::run`].

use std::collections::HashSet;

use dsdr_core::estimate::{normalize_columns, sir_directions, EstimateParams, KRule, Mode, SdrEstimate};
use dsdr_core::kernel::{dr_kernel_unchecked, save_kernel_standardized, sir_kernel, Method};
use dsdr_core::linalg::{symmetric_eigen, whiten, SpectralInverse};
use dsdr_core::slicing::{make_slice_grid, slice_statistics, SliceSpec, SliceStats};
use dsdr_core::{sample_covariance, Dataset, SdrError};
use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{ProtocolError, Result};
use crate::message::{Broadcast1, EigenPayload, Round1Msg, Round2Msg};

/// Sorts by worker id, rejecting duplicates.
fn sorted_by_worker<'a, M>(msgs: &'a [M], id: impl Fn(&M) -> u32) -> Result<Vec<&'a M>> {
    if msgs.is_empty() {
        return Err(ProtocolError::NoWorkers);
    }
    let mut seen = HashSet::new();
    for m in msgs {
        if !seen.insert(id(m)) {
            return Err(ProtocolError::DuplicateWorker(id(m)));
        }
    }
    let mut out: Vec<&M> = msgs.iter().collect();
    out.sort_by_key(|m| id(m));
    Ok(out)
}

fn same(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(ProtocolError::Inconsistent {
            what,
            expected,
            found,
        });
    }
    Ok(())
}

/// Shard size, response range and predictor mean.
pub fn edsir_worker_round1(worker_id: u32, shard: &Dataset<f64>) -> Round1Msg {
    let (y_min, y_max) = shard.response_range();
    Round1Msg {
        worker_id,
        n_s: shard.n() as u64,
        y_min,
        y_max,
        xbar: shard.column_mean(),
    }
}

/// Global slice grid over the pooled response range and the pooled mean.
pub fn edsir_master_round1(msgs: &[Round1Msg], slices: usize) -> Result<Broadcast1> {
    let msgs = sorted_by_worker(msgs, |m| m.worker_id)?;
    let p = msgs[0].xbar.len();
    let mut n = 0u64;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for m in &msgs {
        same("predictor dimension", p, m.xbar.len())?;
        if m.n_s == 0 {
            return Err(SdrError::EmptyShard.into());
        }
        n += m.n_s;
        lo = lo.min(m.y_min);
        hi = hi.max(m.y_max);
    }
    let spec = make_slice_grid(lo, hi, slices)?;
    let mut xbar = Array1::zeros(p);
    for m in &msgs {
        xbar.scaled_add(m.n_s as f64 / n as f64, &m.xbar);
    }
    Ok(Broadcast1 {
        grid: spec.grid().to_vec(),
        xbar_global: xbar,
    })
}

/// Slice counts, centered slice sums and centered scatter on the global grid.
pub fn edsir_worker_round2(worker_id: u32, shard: &Dataset<f64>, b: &Broadcast1) -> Result<Round2Msg> {
    let spec = SliceSpec::from_grid(b.grid.clone())?;
    let stats = slice_statistics(shard, b.xbar_global.view(), &spec)?;
    Ok(Round2Msg {
        worker_id,
        n_s: shard.n() as u64,
        counts: stats.counts,
        sums: stats.sums,
        scatter: stats.scatter,
    })
}

/// Sums the round-two statistics of all workers.
pub fn pool_round2(msgs: &[Round2Msg]) -> Result<(SliceStats<f64>, u64)> {
    let msgs = sorted_by_worker(msgs, |m| m.worker_id)?;
    let h = msgs[0].counts.len();
    let p = msgs[0].scatter.nrows();
    let mut pooled = SliceStats::zeros(h, p);
    let mut n = 0;
    for m in &msgs {
        same("slice count", h, m.counts.len())?;
        same("predictor dimension", p, m.scatter.nrows())?;
        same("slice sums rows", h, m.sums.nrows())?;
        same("slice sums columns", p, m.sums.ncols())?;
        same("scatter columns", p, m.scatter.ncols())?;
        same("slice counts total", m.n_s as usize, m.counts.iter().sum::<u64>() as usize)?;
        pooled.accumulate(&SliceStats {
            counts: m.counts.clone(),
            sums: m.sums.clone(),
            scatter: m.scatter.clone(),
        })?;
        n += m.n_s;
    }
    Ok((pooled, n))
}

/// Pooled sample covariance `sum_s G_s / (n - 1)`.
pub fn pooled_covariance(msgs: &[Round2Msg]) -> Result<Array2<f64>> {
    let (stats, n) = pool_round2(msgs)?;
    if n < 2 {
        return Err(SdrError::InsufficientSamples {
            needed: 2,
            found: n as usize,
        }
        .into());
    }
    Ok(stats.scatter / (n - 1) as f64)
}

/// Result of the exact protocol with its pooled kernel and covariance.
#[derive(Debug, Clone)]
pub struct ExactFit {
    pub estimate: SdrEstimate<f64>,
    pub kernel: Array2<f64>,
    pub sigma: Array2<f64>,
}

/// Pools round-two statistics into the full-sample SIR estimate.
pub fn edsir_finalize(msgs: &[Round2Msg], k_rule: KRule) -> Result<ExactFit> {
    let (stats, n) = pool_round2(msgs)?;
    if n < 2 {
        return Err(SdrError::InsufficientSamples {
            needed: 2,
            found: n as usize,
        }
        .into());
    }
    let kernel = sir_kernel(&stats, n).v;
    let sigma = &stats.scatter / (n - 1) as f64;
    let dirs = sir_directions(kernel.view(), sigma.view(), k_rule)?;
    Ok(ExactFit {
        estimate: SdrEstimate {
            beta: dirs.vectors,
            eigenvalues: dirs.values,
            method: Method::Sir,
            mode: Mode::ExactDistributed,
            params: EstimateParams {
                slices: stats.slices(),
                k_rule,
                workers: msgs.len(),
                partition: None,
            },
        },
        kernel,
        sigma,
    })
}

/// Where a worker takes its centering and slice grid from.
#[derive(Debug, Clone, Copy)]
pub enum Standardization<'a> {
    /// The shard's own mean, response range and covariance.
    Local,
    /// The broadcast global mean and grid.
    FromBroadcast(&'a Broadcast1),
}

/// Local kernel of a shard, before eigendecomposition.
pub fn local_kernel(
    shard: &Dataset<f64>,
    method: Method,
    slices: usize,
    standardization: Standardization<'_>,
) -> Result<Array2<f64>> {
    let (spec, center) = match standardization {
        Standardization::Local => {
            let (lo, hi) = shard.response_range();
            (make_slice_grid(lo, hi, slices)?, shard.column_mean())
        }
        Standardization::FromBroadcast(b) => (SliceSpec::from_grid(b.grid.clone())?, b.xbar_global.clone()),
    };
    let v = match method {
        Method::Sir => {
            let stats = slice_statistics(shard, center.view(), &spec)?;
            sir_kernel(&stats, shard.n() as u64).v
        }
        Method::Save | Method::Dr => {
            let z = match standardization {
                Standardization::Local => whiten(shard)?.z,
                Standardization::FromBroadcast(_) => {
                    let (_, cov) = sample_covariance(shard.x())?;
                    let w = SpectralInverse::regularized(cov.view())?.inverse_sqrt();
                    (&shard.x() - &center).dot(&w)
                }
            };
            if method == Method::Save {
                save_kernel_standardized(z.view(), &spec, shard.y())?.v
            } else {
                dr_kernel_unchecked(z.view(), &spec, shard.y())?.v
            }
        }
    };
    Ok(v)
}

/// Leading eigenpairs of the shard's kernel, `K_s` chosen by `k_rule`.
pub fn approx_local(
    worker_id: u32,
    shard: &Dataset<f64>,
    method: Method,
    slices: usize,
    k_rule: KRule,
    standardization: Standardization<'_>,
) -> Result<EigenPayload> {
    let v = local_kernel(shard, method, slices, standardization)?;
    let eig = symmetric_eigen(v.view())?;
    let k = k_rule.select(eig.values.as_slice().expect("contiguous"))?;
    let eig = eig.truncate(k);
    Ok(EigenPayload {
        worker_id,
        n_s: shard.n() as u64,
        method,
        values: eig.values,
        vectors: eig.vectors,
    })
}

/// How the master rebuilds each worker's kernel from its eigenpairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregation {
    /// `U diag(lambda) U^T`.
    SpectrumWeighted,
    /// `U U^T / K_s`.
    BasisOnly,
}

#[derive(Debug, Clone)]
pub struct ApproxFit {
    pub estimate: SdrEstimate<f64>,
    /// The aggregated kernel `sum_s (n_s / n) V_s`.
    pub v_tilde: Array2<f64>,
}

/// Sample-size weighted average of reconstructed local kernels.
pub fn aggregate_kernels(payloads: &[EigenPayload], aggregation: Aggregation) -> Result<Array2<f64>> {
    let sorted = sorted_by_worker(payloads, |m| m.worker_id)?;
    let p = sorted[0].vectors.nrows();
    let method = sorted[0].method;
    let mut n = 0u64;
    for m in &sorted {
        same("predictor dimension", p, m.vectors.nrows())?;
        same("eigenvalue count", m.values.len(), m.vectors.ncols())?;
        same("method tag", usize::from(method.tag()), usize::from(m.method.tag()))?;
        if m.n_s == 0 || m.values.is_empty() {
            return Err(SdrError::EmptyShard.into());
        }
        n += m.n_s;
    }
    let mut v = Array2::zeros((p, p));
    for m in &sorted {
        let u = &m.vectors;
        let local = match aggregation {
            Aggregation::SpectrumWeighted => (u * &m.values).dot(&u.t()),
            Aggregation::BasisOnly => u.dot(&u.t()) / m.values.len() as f64,
        };
        v.scaled_add(m.n_s as f64 / n as f64, &local);
    }
    Ok(v)
}

/// Leading eigenvectors of the aggregated kernel.
pub fn approx_master(payloads: &[EigenPayload], kg_rule: KRule, aggregation: Aggregation) -> Result<ApproxFit> {
    let v_tilde = aggregate_kernels(payloads, aggregation)?;
    let eig = symmetric_eigen(v_tilde.view())?;
    let k = kg_rule.select(eig.values.as_slice().expect("contiguous"))?;
    let eig = eig.truncate(k);
    Ok(ApproxFit {
        estimate: SdrEstimate {
            beta: eig.vectors,
            eigenvalues: eig.values,
            method: payloads[0].method,
            mode: Mode::ApproxDistributed,
            params: EstimateParams {
                slices: 0,
                k_rule: kg_rule,
                workers: payloads.len(),
                partition: None,
            },
        },
        v_tilde,
    })
}

/// Maps directions from the kernel's scale back to the predictor scale with
/// a pooled covariance: `Sigma^-1` for SIR, `Sigma^-1/2` for SAVE and DR.
pub fn back_transform(estimate: &mut SdrEstimate<f64>, sigma: ArrayView2<'_, f64>) -> Result<()> {
    let inv = SpectralInverse::regularized(sigma)?;
    let m = match estimate.method {
        Method::Sir => inv.inverse(),
        Method::Save | Method::Dr => inv.inverse_sqrt(),
    };
    let mut beta = m.dot(&estimate.beta);
    normalize_columns(&mut beta);
    estimate.beta = beta;
    Ok(())
}

/// Column sums of slice counts, handy for checks.
pub fn total_counts(msgs: &[Round2Msg]) -> u64 {
    msgs.iter().map(|m| m.counts.iter().sum::<u64>()).sum()
}

/// Sum over workers and slices of the centered slice sums.
pub fn total_slice_sum(msgs: &[Round2Msg]) -> Array1<f64> {
    let p = msgs.first().map_or(0, |m| m.sums.ncols());
    msgs.iter()
        .fold(Array1::zeros(p), |acc, m| acc + m.sums.sum_axis(Axis(0)))
}
