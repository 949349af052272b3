//! Monte-Carlo repetitions of one configuration.

use std::time::Instant;

use dsdr_core::estimate::{fit_global_detailed, SdrEstimate};
use dsdr_core::metrics::{r_squared_columns, trace_correlation, MetricRecord};
use dsdr_core::simgen::{partition, population_covariance, simulate, true_basis};
use dsdr_core::{sample_covariance, Dataset};
use dsdr_protocol::{run_protocol, ProtocolConfig, TransportKind};
use ndarray::Array2;
use rayon::prelude::*;

use crate::config::{DataSource, ExperimentConfig};
use crate::error::{BenchError, Result};
use crate::ingest::{load_csv, ColumnRef};
use crate::results::{RepMetrics, RepOutcome, ResultTable};

/// One estimation and its cost.
#[derive(Debug, Clone)]
pub struct Estimation {
    pub estimate: SdrEstimate<f64>,
    /// Estimation time; simulated-parallel for distributed modes.
    pub seconds: f64,
    /// Summed per-round slowest-worker time (the whole fit for global mode).
    pub worker_phase_seconds: f64,
    pub bytes_up: u64,
    pub bytes_down: u64,
}

/// Fits `data` under `cfg` with partition seed `seed`. Partitioning is not
/// timed.
pub fn estimate(cfg: &ExperimentConfig, data: &Dataset<f64>, seed: u64, transport: TransportKind) -> Result<Estimation> {
    let k_rule = cfg.effective_k_rule();
    let Some(mode) = cfg.mode.protocol() else {
        let t = Instant::now();
        let fit = fit_global_detailed(data, cfg.method, cfg.slices, k_rule)?;
        let seconds = t.elapsed().as_secs_f64();
        return Ok(Estimation {
            estimate: fit.estimate,
            seconds,
            worker_phase_seconds: seconds,
            bytes_up: 0,
            bytes_down: 0,
        });
    };
    let scheme = cfg.scheme()?;
    let shards = partition(data, &scheme, seed)?;
    let mut pc = ProtocolConfig::new(mode, cfg.method, cfg.slices, 1);
    pc.local_k = k_rule;
    pc.global_k = k_rule;
    pc.aggregation = cfg.aggregation;
    pc.back_transform = cfg.back_transform;
    pc.transport = transport;
    let run = run_protocol(&shards, &pc)?;
    let mut est = run.estimate;
    est.params.partition = Some(scheme.tag().to_owned());
    Ok(Estimation {
        estimate: est,
        seconds: run.timing.simulated_parallel().as_secs_f64(),
        worker_phase_seconds: run.timing.worker_phase().as_secs_f64(),
        bytes_up: run.ledger.bytes_up(),
        bytes_down: run.ledger.bytes_down(),
    })
}

/// What each repetition is scored against.
enum Prepared {
    Simulated {
        model: u8,
        xmode: dsdr_core::simgen::PredictorMode,
        sigma: f64,
        basis: Array2<f64>,
        cov: Array2<f64>,
    },
    /// External data is fitted globally once; that fit is the reference.
    External {
        data: Dataset<f64>,
        basis: Array2<f64>,
        cov: Array2<f64>,
    },
}

fn score(est: &Estimation, basis: &Array2<f64>, cov: &Array2<f64>, rep: u64) -> Result<RepMetrics> {
    let beta = est.estimate.beta.view();
    let tc = trace_correlation(basis.view(), beta)?;
    let cols = r_squared_columns(beta, basis.view(), cov.view())?;
    Ok(RepMetrics {
        record: MetricRecord {
            rep,
            trace_correlation: tc,
            r_squared: cols.iter().sum::<f64>() / cols.len() as f64,
            wall_time_seconds: est.seconds,
            bytes_up: est.bytes_up,
            bytes_down: est.bytes_down,
        },
        r_squared_columns: cols,
        worker_phase_seconds: est.worker_phase_seconds,
    })
}

fn run_rep(cfg: &ExperimentConfig, prep: &Prepared, rep: u64) -> Result<RepMetrics> {
    let seed = cfg.seed.wrapping_add(rep);
    let transport = cfg.transport_for(rep);
    match prep {
        Prepared::Simulated {
            model,
            xmode,
            sigma,
            basis,
            cov,
        } => {
            let data = simulate(*model, *xmode, cfg.n, cfg.p, *sigma, seed)?;
            score(&estimate(cfg, &data, seed, transport)?, basis, cov, rep)
        }
        Prepared::External { data, basis, cov } => score(&estimate(cfg, data, seed, transport)?, basis, cov, rep),
    }
}

/// Loads external data and fills in `n` and `p`; simulated configs pass
/// through unchanged.
pub fn resolve(cfg: &ExperimentConfig) -> Result<(ExperimentConfig, Option<Dataset<f64>>)> {
    let mut cfg = cfg.clone();
    let data = match &cfg.source {
        DataSource::Csv {
            path,
            response,
            standardize,
        } => {
            let loaded = load_csv(path, &ColumnRef::parse(response), *standardize)?;
            cfg.n = loaded.data.n();
            cfg.p = loaded.data.p();
            Some(loaded.data)
        }
        DataSource::Model { .. } => None,
    };
    cfg.validate()?;
    Ok((cfg, data))
}

/// Runs every repetition. Failures are kept per repetition.
pub fn run_repetitions(cfg: &ExperimentConfig) -> Result<(ExperimentConfig, Vec<RepOutcome>)> {
    let (cfg, data) = resolve(cfg)?;
    let prep = match (&cfg.source, data) {
        (DataSource::Model { id, xmode, sigma }, _) => Prepared::Simulated {
            model: *id,
            xmode: *xmode,
            sigma: *sigma,
            basis: true_basis(*id, cfg.p)?,
            cov: population_covariance(*xmode, cfg.p),
        },
        (DataSource::Csv { .. }, Some(data)) => {
            let reference = fit_global_detailed(&data, cfg.method, cfg.slices, cfg.effective_k_rule())?;
            Prepared::External {
                basis: reference.estimate.beta,
                cov: sample_covariance(data.x())?.1,
                data,
            }
        }
        (DataSource::Csv { .. }, None) => unreachable!("resolve loads CSV sources"),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| BenchError::Config(e.to_string()))?;
    let outcomes = pool.install(|| {
        (0..cfg.reps as u64)
            .into_par_iter()
            .map(|rep| RepOutcome {
                rep,
                result: run_rep(&cfg, &prep, rep).map_err(|e| e.to_string()),
            })
            .collect::<Vec<_>>()
    });
    for o in &outcomes {
        if let Err(e) = &o.result {
            log::warn!("repetition {} failed: {e}", o.rep);
        }
    }
    Ok((cfg, outcomes))
}

/// Runs the configuration and tabulates repetitions plus aggregates.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let (cfg, outcomes) = run_repetitions(cfg)?;
    let mut table = ResultTable::default();
    table.push_group(&cfg.echo(), &outcomes);
    Ok(table)
}
