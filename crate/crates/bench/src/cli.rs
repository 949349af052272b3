//! The `dsdr` command line.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dsdr_core::estimate::KRule;
use dsdr_core::simgen::{PredictorMode, DEFAULT_PROPORTIONS, DEFAULT_SIGMA};
use dsdr_core::Method;
use dsdr_protocol::{Aggregation, TransportKind};

use crate::config::{DataSource, ExperimentConfig, PartitionKind, RunMode};
use crate::error::{BenchError, Result};
use crate::experiment::run_experiment;
use crate::results::{emit_results, ResultTable};
use crate::timing::{budget_cells, timing_sweep, TimingGrid};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_ALL_FAILED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "dsdr", version, about = "Distributed sufficient dimension reduction experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte-Carlo repetitions on simulated data.
    Run(RunArgs),
    /// Repetitions on an external CSV dataset.
    Fit(FitArgs),
    /// Timing sweep over n, p and worker count.
    Timing(TimingArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    Sir,
    Save,
    Dr,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Sir => Method::Sir,
            MethodArg::Save => Method::Save,
            MethodArg::Dr => Method::Dr,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Global,
    Exact,
    ApproxHomo,
    ApproxHetero,
}

impl From<ModeArg> for RunMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Global => RunMode::Global,
            ModeArg::Exact => RunMode::Exact,
            ModeArg::ApproxHomo => RunMode::ApproxHomogeneous,
            ModeArg::ApproxHetero => RunMode::ApproxHeterogeneous,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum XModeArg {
    Standard,
    Hetero,
    Dependent,
}

impl From<XModeArg> for PredictorMode {
    fn from(m: XModeArg) -> Self {
        match m {
            XModeArg::Standard => PredictorMode::StandardNormal,
            XModeArg::Hetero => PredictorMode::HeterogeneousNormal,
            XModeArg::Dependent => PredictorMode::DependentNormal,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AggregateArg {
    Spectrum,
    Basis,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PartitionArg {
    HomoEqual,
    HeteroEqual,
    HeteroUnequal,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TransportArg {
    Inproc,
    Tcp,
}

/// Estimation options shared by `run` and `fit`.
#[derive(Debug, Args)]
pub struct EstimationArgs {
    #[arg(long, value_enum, default_value = "sir")]
    pub method: MethodArg,
    #[arg(long, value_enum, default_value = "global")]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 10)]
    pub slices: usize,
    #[arg(long, default_value_t = 5)]
    pub workers: usize,
    /// Fixed number of directions (default: the model's structural dimension).
    #[arg(long, conflicts_with = "alpha")]
    pub k: Option<usize>,
    /// Keep the fewest directions explaining this share of the spectrum.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, value_enum, default_value = "spectrum")]
    pub aggregate: AggregateArg,
    #[arg(long, value_enum, default_value = "homo-equal")]
    pub partition: PartitionArg,
    /// Shard proportions for hetero-unequal.
    #[arg(long, value_delimiter = ',')]
    pub proportions: Option<Vec<f64>>,
    /// Map approx-hetero directions back with the pooled covariance.
    #[arg(long)]
    pub back_transform: bool,
    #[arg(long, default_value_t = 200)]
    pub reps: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "inproc")]
    pub transport: TransportArg,
    /// First TCP port; repetition r uses port + r. Default: any free port.
    #[arg(long)]
    pub port: Option<u16>,
    /// Threads for repetitions (0: one per core).
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    /// Output CSV path, `-` for stdout.
    #[arg(long, default_value = "-")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=8))]
    pub model: u8,
    #[arg(long, value_enum, default_value = "standard")]
    pub xmode: XModeArg,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 10)]
    pub p: usize,
    /// Noise scale of the response models.
    #[arg(long, default_value_t = DEFAULT_SIGMA)]
    pub sigma: f64,
    #[command(flatten)]
    pub est: EstimationArgs,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Response column name, or zero-based position.
    #[arg(long)]
    pub response: String,
    /// Z-score the predictors before fitting.
    #[arg(long)]
    pub standardize: bool,
    #[command(flatten)]
    pub est: EstimationArgs,
}

#[derive(Debug, Args)]
pub struct TimingArgs {
    /// Axis overrides, e.g. `n=1e4,1e5;p=100;s=5,10;modes=global,exact`.
    #[arg(long, default_value = "")]
    pub grid: String,
    #[arg(long, value_enum, default_value = "sir")]
    pub method: MethodArg,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=8))]
    pub model: u8,
    #[arg(long, value_enum, default_value = "standard")]
    pub xmode: XModeArg,
    #[arg(long, default_value_t = 10)]
    pub slices: usize,
    #[arg(long, conflicts_with = "alpha")]
    pub k: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, default_value_t = 3)]
    pub reps: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "inproc")]
    pub transport: TransportArg,
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long, default_value = "-")]
    pub out: PathBuf,
}

fn k_rule(k: Option<usize>, alpha: Option<f64>) -> Option<KRule> {
    k.map(KRule::Fixed).or(alpha.map(KRule::VarianceThreshold))
}

fn transport(t: TransportArg, port: Option<u16>) -> TransportKind {
    match t {
        TransportArg::Inproc => TransportKind::InProcess,
        TransportArg::Tcp => TransportKind::Tcp { port: port.unwrap_or(0) },
    }
}

impl EstimationArgs {
    fn config(&self, source: DataSource, n: usize, p: usize) -> ExperimentConfig {
        let partition = match self.partition {
            PartitionArg::HomoEqual => PartitionKind::HomoEqual,
            PartitionArg::HeteroEqual => PartitionKind::HeteroEqual,
            PartitionArg::HeteroUnequal => PartitionKind::HeteroUnequal,
        };
        let proportions = self.proportions.clone().unwrap_or_else(|| DEFAULT_PROPORTIONS.to_vec());
        // the unequal scheme's worker count comes from its proportions
        let workers = match partition {
            PartitionKind::HeteroUnequal if self.workers == 5 => proportions.len(),
            _ => self.workers,
        };
        ExperimentConfig {
            method: self.method.into(),
            mode: self.mode.into(),
            source,
            n,
            p,
            slices: self.slices,
            workers,
            k_rule: k_rule(self.k, self.alpha),
            aggregation: match self.aggregate {
                AggregateArg::Spectrum => Aggregation::SpectrumWeighted,
                AggregateArg::Basis => Aggregation::BasisOnly,
            },
            partition,
            proportions,
            back_transform: self.back_transform,
            reps: self.reps,
            seed: self.seed,
            transport: transport(self.transport, self.port),
            jobs: self.jobs,
        }
    }
}

fn finish(table: &ResultTable, out: &std::path::Path) -> Result<()> {
    emit_results(table, out)?;
    let reps = table.repetitions().count();
    if reps > 0 && table.successes() == 0 {
        return Err(BenchError::AllRepetitionsFailed(reps));
    }
    Ok(())
}

/// Executes a parsed command.
pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(a) => {
            let source = DataSource::Model {
                id: a.model,
                xmode: a.xmode.into(),
                sigma: a.sigma,
            };
            let cfg = a.est.config(source, a.n, a.p);
            finish(&run_experiment(&cfg)?, &a.est.out)
        }
        Command::Fit(a) => {
            let source = DataSource::Csv {
                path: a.input.clone(),
                response: a.response.clone(),
                standardize: a.standardize,
            };
            // n and p are read from the file
            let cfg = a.est.config(source, 1, 1);
            finish(&run_experiment(&cfg)?, &a.est.out)
        }
        Command::Timing(a) => {
            let grid = TimingGrid {
                method: a.method.into(),
                model: a.model,
                xmode: a.xmode.into(),
                slices: a.slices,
                k_rule: k_rule(a.k, a.alpha),
                reps: a.reps,
                seed: a.seed,
                transport: transport(a.transport, a.port),
                ..Default::default()
            }
            .with_spec(&a.grid)
            .map_err(BenchError::Config)?;
            let table = timing_sweep(&grid, budget_cells()?)?;
            finish(&table, &a.out)
        }
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("dsdr: {e}");
            e.exit_code()
        }
    }
}
