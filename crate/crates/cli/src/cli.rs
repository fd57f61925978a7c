use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use clusterloop_core::{reference, ExperimentConfig};

#[derive(Debug, Parser)]
#[command(name = "clusterloop", version, about = "Simulate and analyze loop-based photonic cluster-state experiments")]
pub struct Cli {
    /// Seed of the Monte-Carlo sampler.
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    /// JSON experiment configuration; flags override its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Write outputs into this directory instead of standard output.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Phases on the command line and in outputs are in degrees.
    #[arg(long, global = true)]
    pub degrees: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Engine {
    /// Polarization-qubit density operator.
    A,
    /// Multi-photon mode network with loss, full post-selection.
    B,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Expectation of one observable over a phase scan.
    Simulate(SimulateArgs),
    /// Visibility curves and fits of the standard curve kinds.
    Scan(ScanArgs),
    /// Partial post-selection windows, amplitudes and their ordering.
    Pps(PpsArgs),
    /// Per-photon rate scaling.
    Rates(RatesArgs),
    /// Write a synthetic event stream.
    Sample(SampleArgs),
    /// Bin, match, fit and align an event stream (file or `-` for stdin).
    Analyze(AnalyzeArgs),
}

/// Overrides of [`ExperimentConfig`] fields.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// Photons per trial.
    #[arg(long = "n")]
    pub n: Option<usize>,
    #[arg(long)]
    pub pair_vis: Option<f64>,
    #[arg(long)]
    pub eta_sp: Option<f64>,
    #[arg(long)]
    pub eta_setup: Option<f64>,
    #[arg(long)]
    pub eta_det: Option<f64>,
    /// Loop round-trip transmission.
    #[arg(long)]
    pub loop_trans: Option<f64>,
    #[arg(long)]
    pub off_cycles: Option<usize>,
    #[arg(long)]
    pub interleave: Option<usize>,
    #[arg(long)]
    pub slot_period_ns: Option<f64>,
    /// Start from unit efficiencies and a lossless loop.
    #[arg(long)]
    pub lossless: bool,
}

impl ConfigArgs {
    /// Applies the flags on top of `base`.
    pub fn apply(&self, mut base: ExperimentConfig) -> anyhow::Result<ExperimentConfig> {
        if self.lossless {
            base = ExperimentConfig { eta_sp: 1.0, eta_setup: 1.0, eta_det: 1.0, loop_roundtrip_trans: 1.0, ..base };
        }
        let c = &mut base;
        if let Some(v) = self.n {
            c.n_photons = v;
        }
        if let Some(v) = self.pair_vis {
            c.pair_vis = v;
        }
        if let Some(v) = self.eta_sp {
            c.eta_sp = v;
        }
        if let Some(v) = self.eta_setup {
            c.eta_setup = v;
        }
        if let Some(v) = self.eta_det {
            c.eta_det = v;
        }
        if let Some(v) = self.loop_trans {
            c.loop_roundtrip_trans = v;
        }
        if let Some(v) = self.off_cycles {
            c.off_cycles = v;
        }
        if let Some(v) = self.interleave {
            c.interleave_factor = v;
        }
        if let Some(v) = self.slot_period_ns {
            c.slot_period_ns = v;
        }
        base.validate()?;
        Ok(base)
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Observable such as XXZ or XIXZ; defaults to X on all photons but a final Z.
    #[arg(long)]
    pub observable: Option<String>,
    /// Single phase; otherwise a scan over [-pi, pi].
    #[arg(long, allow_hyphen_values = true)]
    pub phi: Option<f64>,
    #[arg(long, default_value_t = 25)]
    pub points: usize,
    #[arg(long, value_enum, default_value_t = Engine::A)]
    pub engine: Engine,
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Curve kinds, comma separated (V2, V3, V4, V4p, V6, V6p, V6pp).
    #[arg(long, value_delimiter = ',', default_value = "V2,V3,V4,V4p")]
    pub kinds: Vec<String>,
    #[arg(long, default_value_t = 25)]
    pub points: usize,
    #[arg(long, value_enum, default_value_t = Engine::B)]
    pub engine: Engine,
}

#[derive(Debug, Args)]
pub struct PpsArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Photons kept by each window.
    #[arg(long, default_value_t = 2)]
    pub m: usize,
    #[arg(long, default_value_t = 13)]
    pub points: usize,
}

#[derive(Debug, Args)]
pub struct RatesArgs {
    #[arg(long, default_value_t = reference::ETA_SP)]
    pub eta_sp: f64,
    #[arg(long, default_value_t = reference::ETA_SETUP)]
    pub eta_setup: f64,
    #[arg(long, default_value_t = reference::ETA_DET)]
    pub eta_det: f64,
    #[arg(long, default_value_t = reference::ETA_ENT)]
    pub eta_ent: f64,
    /// Photon numbers to predict rates for.
    #[arg(long, value_delimiter = ',', default_value = "2,3,4,6")]
    pub n_list: Vec<usize>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Single phase set-point; otherwise a scan over [-pi, pi].
    #[arg(long, allow_hyphen_values = true)]
    pub phi: Option<f64>,
    /// Phase set-points per scan.
    #[arg(long, default_value_t = 13)]
    pub points: usize,
    /// Trials per set-point, rounded up to a multiple of the interleave factor.
    #[arg(long, default_value_t = 76_926)]
    pub trials: u64,
    #[arg(long, default_value_t = 1)]
    pub scans: usize,
    /// Phase offset added to every set-point, one per scan (radians).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub drift: Vec<f64>,
    /// Independent random streams. The output depends on the seed and on
    /// this number only, not on the number of threads.
    #[arg(long, default_value_t = 16)]
    pub blocks: usize,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Event file, or `-` for standard input.
    #[arg(default_value = "-")]
    pub input: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Selection windows: `full`, `last:M`, `pps:M@P` (P is the 1-based chain
    /// position of the first photon), each optionally followed by `=OBSERVABLE`.
    #[arg(long = "window", default_value = "full")]
    pub windows: Vec<String>,
    /// Window whose per-scan phase offset is tracked.
    #[arg(long, default_value_t = 0)]
    pub reference: usize,
    /// Align scans on the reference window and refit this window.
    #[arg(long)]
    pub align: Option<usize>,
    /// Emit a JSON status line every K segments (0 disables).
    #[arg(long, default_value_t = 0)]
    pub snapshot_every: usize,
    /// Destination of status lines (default: standard error).
    #[arg(long)]
    pub status: Option<PathBuf>,
    /// Binning tolerance as a fraction of the bin spacing.
    #[arg(long)]
    pub tolerance: Option<f64>,
}
