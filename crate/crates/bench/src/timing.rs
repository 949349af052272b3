//! Timing sweep over sample size, dimension and worker count.

use dsdr_core::estimate::KRule;
use dsdr_core::metrics::{r_squared_columns, trace_correlation, MetricRecord};
use dsdr_core::simgen::{population_covariance, simulate, true_basis, PredictorMode, DEFAULT_SIGMA};
use dsdr_core::Method;
use dsdr_protocol::TransportKind;

use crate::config::{DataSource, ExperimentConfig, PartitionKind, RunMode};
use crate::error::{BenchError, Result};
use crate::experiment::estimate;
use crate::results::{RepMetrics, RepOutcome, ResultTable};

/// Default cap on `n * p` per point.
pub const DEFAULT_BUDGET_CELLS: u64 = 20_000_000;
pub const BUDGET_ENV: &str = "DSDR_BUDGET_CELLS";

/// Budget from the environment, falling back to [`DEFAULT_BUDGET_CELLS`].
pub fn budget_cells() -> Result<u64> {
    match std::env::var(BUDGET_ENV) {
        Ok(v) => parse_count(&v).map_err(|e| BenchError::Config(format!("{BUDGET_ENV}: {e}"))),
        Err(std::env::VarError::NotPresent) => Ok(DEFAULT_BUDGET_CELLS),
        Err(e) => Err(BenchError::Config(format!("{BUDGET_ENV}: {e}"))),
    }
}

/// Parses a positive count, accepting forms like `1e5`.
pub fn parse_count(s: &str) -> std::result::Result<u64, String> {
    let s = s.trim();
    if let Ok(v) = s.parse::<u64>() {
        return if v > 0 { Ok(v) } else { Err("must be positive".into()) };
    }
    match s.parse::<f64>() {
        Ok(v) if v >= 1.0 && v.fract() == 0.0 && v < 1.8e19 => Ok(v as u64),
        _ => Err(format!("`{s}` is not a positive integer")),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingGrid {
    pub ns: Vec<usize>,
    pub ps: Vec<usize>,
    pub workers: Vec<usize>,
    pub modes: Vec<RunMode>,
    pub method: Method,
    pub model: u8,
    pub xmode: PredictorMode,
    pub slices: usize,
    pub k_rule: Option<KRule>,
    pub reps: usize,
    pub seed: u64,
    pub transport: TransportKind,
}

impl Default for TimingGrid {
    fn default() -> Self {
        Self {
            ns: vec![10_000, 20_000, 50_000, 100_000, 200_000],
            ps: vec![100, 200, 500],
            workers: vec![5, 10],
            modes: vec![RunMode::Global, RunMode::Exact, RunMode::ApproxHomogeneous],
            method: Method::Sir,
            model: 1,
            xmode: PredictorMode::StandardNormal,
            slices: 10,
            k_rule: None,
            reps: 3,
            seed: 1,
            transport: TransportKind::InProcess,
        }
    }
}

impl TimingGrid {
    /// Overrides axes from a spec such as `n=1e4,1e5;p=100;s=5,10`.
    pub fn with_spec(mut self, spec: &str) -> std::result::Result<Self, String> {
        for part in spec.split(';').map(str::trim).filter(|s| !s.is_empty()) {
            let (key, vals) = part
                .split_once('=')
                .ok_or_else(|| format!("grid entry `{part}` lacks `=`"))?;
            let nums = || -> std::result::Result<Vec<usize>, String> {
                vals.split(',').map(|v| parse_count(v).map(|c| c as usize)).collect()
            };
            match key.trim() {
                "n" => self.ns = nums()?,
                "p" => self.ps = nums()?,
                "s" | "S" | "workers" => self.workers = nums()?,
                "mode" | "modes" => {
                    self.modes = vals.split(',').map(|m| m.trim().parse()).collect::<std::result::Result<_, _>>()?
                }
                other => return Err(format!("unknown grid axis `{other}`")),
            }
        }
        Ok(self)
    }

    fn config(&self, mode: RunMode, n: usize, p: usize, workers: usize) -> ExperimentConfig {
        ExperimentConfig {
            method: self.method,
            mode,
            source: DataSource::Model {
                id: self.model,
                xmode: self.xmode,
                sigma: DEFAULT_SIGMA,
            },
            n,
            p,
            slices: self.slices,
            workers,
            k_rule: self.k_rule,
            partition: PartitionKind::HomoEqual,
            reps: self.reps,
            seed: self.seed,
            transport: self.transport,
            ..Default::default()
        }
    }

    /// Every (mode, n, p, S) point; global points carry `S = 1`.
    pub fn points(&self) -> Vec<ExperimentConfig> {
        let mut out = Vec::new();
        for &n in &self.ns {
            for &p in &self.ps {
                for &mode in &self.modes {
                    if mode == RunMode::Global {
                        out.push(self.config(mode, n, p, 1));
                    } else {
                        out.extend(self.workers.iter().map(|&s| self.config(mode, n, p, s)));
                    }
                }
            }
        }
        out
    }
}

fn scored(cfg: &ExperimentConfig, data: &dsdr_core::Dataset<f64>, seed: u64, rep: u64) -> Result<RepMetrics> {
    let DataSource::Model { id, xmode, .. } = cfg.source else {
        unreachable!("sweep points are simulated")
    };
    let est = estimate(cfg, data, seed, cfg.transport_for(rep))?;
    let basis = true_basis(id, cfg.p)?;
    let cols = r_squared_columns(est.estimate.beta.view(), basis.view(), population_covariance(xmode, cfg.p).view())?;
    Ok(RepMetrics {
        record: MetricRecord {
            rep,
            trace_correlation: trace_correlation(basis.view(), est.estimate.beta.view())?,
            r_squared: cols.iter().sum::<f64>() / cols.len() as f64,
            wall_time_seconds: est.seconds,
            bytes_up: est.bytes_up,
            bytes_down: est.bytes_down,
        },
        r_squared_columns: cols,
        worker_phase_seconds: est.worker_phase_seconds,
    })
}

/// Times every grid point. Points over `budget` cells are flagged with a
/// budget error instead of run. Runs sequentially so timings do not compete.
pub fn timing_sweep(grid: &TimingGrid, budget: u64) -> Result<ResultTable> {
    if grid.reps == 0 {
        return Err(BenchError::Config("timing needs at least one repetition".into()));
    }
    let points = grid.points();
    for cfg in &points {
        cfg.validate()?;
    }
    let mut outcomes: Vec<Vec<RepOutcome>> = vec![Vec::new(); points.len()];
    for rep in 0..grid.reps as u64 {
        let seed = grid.seed.wrapping_add(rep);
        // one dataset per (n, p, rep), shared by all modes
        let mut cached: Option<((usize, usize), dsdr_core::Dataset<f64>)> = None;
        for (i, cfg) in points.iter().enumerate() {
            let cells = (cfg.n as u64).saturating_mul(cfg.p as u64);
            if cells > budget {
                let err = BenchError::BudgetExceeded { cells, budget };
                outcomes[i].push(RepOutcome {
                    rep,
                    result: Err(err.to_string()),
                });
                continue;
            }
            let key = (cfg.n, cfg.p);
            if cached.as_ref().map(|c| c.0) != Some(key) {
                // release the previous dataset before allocating the next
                cached.take();
                let data = simulate(grid.model, grid.xmode, cfg.n, cfg.p, DEFAULT_SIGMA, seed)?;
                cached = Some((key, data));
            }
            let data = &cached.as_ref().expect("just filled").1;
            let result = scored(cfg, data, seed, rep).map_err(|e| e.to_string());
            log::info!(
                "{} n={} p={} S={} rep={rep}: {}",
                cfg.mode,
                cfg.n,
                cfg.p,
                cfg.workers,
                result.as_ref().map_or_else(|e| e.clone(), |m| format!("{:.4}s", m.record.wall_time_seconds))
            );
            outcomes[i].push(RepOutcome { rep, result });
        }
    }
    let mut table = ResultTable::default();
    for (cfg, o) in points.iter().zip(&outcomes) {
        table.push_group(&cfg.echo(), o);
    }
    Ok(table)
}
