//! Experiment configuration and validation.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use dsdr_core::estimate::KRule;
use dsdr_core::simgen::{min_dimension, structural_dimension, PartitionScheme, PredictorMode, DEFAULT_PROPORTIONS, DEFAULT_SIGMA};
use dsdr_core::Method;
use dsdr_protocol::{Aggregation, ProtocolMode, TransportKind};

use crate::error::{BenchError, Result};

/// Estimation pipeline of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RunMode {
    Global,
    Exact,
    ApproxHomogeneous,
    ApproxHeterogeneous,
}

impl RunMode {
    pub fn protocol(self) -> Option<ProtocolMode> {
        match self {
            RunMode::Global => None,
            RunMode::Exact => Some(ProtocolMode::Exact),
            RunMode::ApproxHomogeneous => Some(ProtocolMode::ApproxHomogeneous),
            RunMode::ApproxHeterogeneous => Some(ProtocolMode::ApproxHeterogeneous),
        }
    }
}

impl fmt::Display for RunMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RunMode::Global => "global",
            RunMode::Exact => "exact",
            RunMode::ApproxHomogeneous => "approx-homo",
            RunMode::ApproxHeterogeneous => "approx-hetero",
        })
    }
}

impl FromStr for RunMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "global" => Ok(RunMode::Global),
            "exact" => Ok(RunMode::Exact),
            "approx-homo" | "approx-homogeneous" => Ok(RunMode::ApproxHomogeneous),
            "approx-hetero" | "approx-heterogeneous" => Ok(RunMode::ApproxHeterogeneous),
            other => Err(format!("unknown mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartitionKind {
    HomoEqual,
    HeteroEqual,
    HeteroUnequal,
}

impl fmt::Display for PartitionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PartitionKind::HomoEqual => "homo-equal",
            PartitionKind::HeteroEqual => "hetero-equal",
            PartitionKind::HeteroUnequal => "hetero-unequal",
        })
    }
}

impl FromStr for PartitionKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "homo-equal" => Ok(PartitionKind::HomoEqual),
            "hetero-equal" => Ok(PartitionKind::HeteroEqual),
            "hetero-unequal" => Ok(PartitionKind::HeteroUnequal),
            other => Err(format!("unknown partition scheme `{other}`")),
        }
    }
}

pub fn aggregation_name(a: Aggregation) -> &'static str {
    match a {
        Aggregation::SpectrumWeighted => "spectrum",
        Aggregation::BasisOnly => "basis",
    }
}

pub fn parse_aggregation(s: &str) -> std::result::Result<Aggregation, String> {
    match s {
        "spectrum" => Ok(Aggregation::SpectrumWeighted),
        "basis" => Ok(Aggregation::BasisOnly),
        other => Err(format!("unknown aggregation `{other}`")),
    }
}

pub fn transport_name(t: TransportKind) -> &'static str {
    match t {
        TransportKind::InProcess => "inproc",
        TransportKind::Tcp { .. } => "tcp",
    }
}

/// Where each repetition's data comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Model { id: u8, xmode: PredictorMode, sigma: f64 },
    Csv { path: PathBuf, response: String, standardize: bool },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub method: Method,
    pub mode: RunMode,
    pub source: DataSource,
    /// Sample size and dimension; taken from the file for CSV sources.
    pub n: usize,
    pub p: usize,
    pub slices: usize,
    pub workers: usize,
    /// `None` picks the model's structural dimension (1 for external data).
    pub k_rule: Option<KRule>,
    pub aggregation: Aggregation,
    pub partition: PartitionKind,
    /// Shard proportions for `hetero-unequal`.
    pub proportions: Vec<f64>,
    /// Heterogeneous back-transform with the pooled covariance.
    pub back_transform: bool,
    pub reps: usize,
    pub seed: u64,
    /// `Tcp { port }` with a nonzero port gives repetition `r` port `port + r`.
    pub transport: TransportKind,
    /// Worker threads for repetitions; 0 uses the rayon default.
    pub jobs: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            method: Method::Sir,
            mode: RunMode::Global,
            source: DataSource::Model {
                id: 1,
                xmode: PredictorMode::StandardNormal,
                sigma: DEFAULT_SIGMA,
            },
            n: 1000,
            p: 10,
            slices: 10,
            workers: 5,
            k_rule: None,
            aggregation: Aggregation::SpectrumWeighted,
            partition: PartitionKind::HomoEqual,
            proportions: DEFAULT_PROPORTIONS.to_vec(),
            back_transform: false,
            reps: 200,
            seed: 1,
            transport: TransportKind::InProcess,
            jobs: 0,
        }
    }
}

fn bad(msg: impl Into<String>) -> BenchError {
    BenchError::Config(msg.into())
}

/// Names of the configuration columns echoed into every result row.
pub const ECHO_COLUMNS: [&str; 14] = [
    "method",
    "mode",
    "source",
    "xmode",
    "n",
    "p",
    "slices",
    "workers",
    "k_rule",
    "aggregate",
    "partition",
    "back_transform",
    "transport",
    "seed",
];

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mode == RunMode::Exact && self.method != Method::Sir {
            return Err(bad("exact mode requires --method sir"));
        }
        if self.reps == 0 {
            return Err(bad("--reps must be at least 1"));
        }
        if self.n == 0 || self.p == 0 {
            return Err(bad("--n and --p must be positive"));
        }
        if self.slices < 2 {
            return Err(bad("--slices must be at least 2"));
        }
        if self.workers == 0 {
            return Err(bad("--workers must be positive"));
        }
        if let DataSource::Model { id, sigma, .. } = &self.source {
            let need = min_dimension(*id).map_err(|e| bad(e.to_string()))?;
            if self.p < need {
                return Err(bad(format!("model {id} needs --p at least {need}")));
            }
            if !(sigma.is_finite() && *sigma >= 0.0) {
                return Err(bad("noise level must be finite and nonnegative"));
            }
        }
        match self.effective_k_rule() {
            KRule::Fixed(k) if k == 0 || k > self.p => {
                return Err(bad(format!("--k must lie in 1..={}", self.p)))
            }
            KRule::VarianceThreshold(a) if !(a > 0.0 && a <= 1.0) => {
                return Err(bad("--alpha must lie in (0, 1]"))
            }
            _ => {}
        }
        if self.mode != RunMode::Global {
            self.scheme()?.sizes(self.n).map_err(|e| bad(e.to_string()))?;
        }
        if let TransportKind::Tcp { port } = self.transport {
            if port != 0 && port as usize + self.reps - 1 > u16::MAX as usize {
                return Err(bad("--port range exceeds 65535"));
            }
        }
        Ok(())
    }

    pub fn effective_k_rule(&self) -> KRule {
        self.k_rule.unwrap_or_else(|| match &self.source {
            DataSource::Model { id, .. } => KRule::Fixed(structural_dimension(*id).unwrap_or(1)),
            DataSource::Csv { .. } => KRule::Fixed(1),
        })
    }

    pub fn scheme(&self) -> Result<PartitionScheme> {
        Ok(match self.partition {
            PartitionKind::HomoEqual => PartitionScheme::HomogeneousEqual(self.workers),
            PartitionKind::HeteroEqual => PartitionScheme::HeterogeneousEqual(self.workers),
            PartitionKind::HeteroUnequal => {
                if self.proportions.len() != self.workers {
                    return Err(bad(format!(
                        "hetero-unequal with {} proportions needs --workers {}",
                        self.proportions.len(),
                        self.proportions.len()
                    )));
                }
                PartitionScheme::HeterogeneousUnequal(self.proportions.clone())
            }
        })
    }

    /// Transport for repetition `rep`.
    pub fn transport_for(&self, rep: u64) -> TransportKind {
        match self.transport {
            TransportKind::Tcp { port } if port != 0 => TransportKind::Tcp {
                port: port + rep as u16,
            },
            t => t,
        }
    }

    /// Values for [`ECHO_COLUMNS`].
    pub fn echo(&self) -> Vec<String> {
        let (source, xmode) = match &self.source {
            DataSource::Model { id, xmode, .. } => (format!("model-{id}"), xmode.to_string()),
            DataSource::Csv { path, .. } => (path.display().to_string(), String::new()),
        };
        vec![
            self.method.to_string(),
            self.mode.to_string(),
            source,
            xmode,
            self.n.to_string(),
            self.p.to_string(),
            self.slices.to_string(),
            self.workers.to_string(),
            self.effective_k_rule().to_string(),
            aggregation_name(self.aggregation).to_string(),
            self.partition.to_string(),
            self.back_transform.to_string(),
            transport_name(self.transport).to_string(),
            self.seed.to_string(),
        ]
    }
}
