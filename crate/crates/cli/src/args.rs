// SPDX-License-Identifier: MIT OR Apache-2.0

//! Command-line flags and the matching config-file schema. Every flag has a
//! config key of the same name (dashes become underscores); flags win.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use tcoder_core::shardio::RowView;
use tcoder_core::synth::CorpusSampling;
use tcoder_core::Arch;

#[derive(Debug, Parser)]
#[command(name = "tcoder", version, about = "Train and evaluate sparse transcoders")]
pub struct Cli {
    /// TOML file with one table per subcommand; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output directory. Falls back to the config file, then
    /// `TCODER_OUT_DIR`, then a per-command default.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,

    /// Repeat for more log output (stderr).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic activation data.
    #[command(subcommand)]
    Synth(SynthCommand),
    /// Train one coder per point of the arch × k × n-latents grid.
    Train(TrainArgs),
    /// Evaluate a checkpoint.
    Eval(EvalArgs),
    /// Sample activating and non-activating examples for latents.
    Sample(SampleArgs),
    /// Score judged examples.
    Score(ScoreArgs),
    /// Fold the identity into a skip transcoder's skip matrix.
    Convert(ConvertArgs),
    /// Collect evaluation reports into a summary, optionally with SVG plots.
    Report(ReportArgs),
}

#[derive(Debug, Subcommand)]
pub enum SynthCommand {
    /// Planted-dictionary rows.
    Planted(PlantedArgs),
    /// Toy language model, its token corpus and MLP activations.
    Toylm(ToyLmArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArchArg {
    Sae,
    Transcoder,
    Skip,
}

impl From<ArchArg> for Arch {
    fn from(a: ArchArg) -> Arch {
        match a {
            ArchArg::Sae => Arch::Sae,
            ArchArg::Transcoder => Arch::Transcoder,
            ArchArg::Skip => Arch::SkipTranscoder,
        }
    }
}

/// Which stored vector an autoencoder reconstructs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SaeOn {
    Target,
    Input,
}

impl From<SaeOn> for RowView {
    fn from(s: SaeOn) -> RowView {
        match s {
            SaeOn::Target => RowView::TargetOnly,
            SaeOn::Input => RowView::InputOnly,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DtypeArg {
    F32,
    F64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputDistArg {
    Gaussian,
    Sparse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingArg {
    Uniform,
    Model,
}

impl From<SamplingArg> for CorpusSampling {
    fn from(s: SamplingArg) -> CorpusSampling {
        match s {
            SamplingArg::Uniform => CorpusSampling::Uniform,
            SamplingArg::Model => CorpusSampling::Model,
        }
    }
}

/// Fills every `None` in `self` from `base`; boolean switches are OR-ed.
pub trait Overlay {
    fn overlay(self, base: Self) -> Self;
}

macro_rules! overlay {
    ($ty:ty { $($opt:ident),* $(,)? } $(switches { $($sw:ident),* $(,)? })?) => {
        impl Overlay for $ty {
            fn overlay(self, base: Self) -> Self {
                Self {
                    $($opt: self.$opt.or(base.$opt),)*
                    $($($sw: self.$sw || base.$sw,)*)?
                }
            }
        }
    };
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantedArgs {
    #[arg(long)]
    pub d_in: Option<usize>,
    #[arg(long)]
    pub d_out: Option<usize>,
    #[arg(long)]
    pub n_features: Option<usize>,
    /// Firing probability of each feature under Gaussian input.
    #[arg(long)]
    pub feature_prob: Option<f64>,
    /// Scale of the linear component; 0 disables it.
    #[arg(long)]
    pub linear_scale: Option<f64>,
    #[arg(long)]
    pub offset_scale: Option<f64>,
    #[arg(long)]
    pub rows: Option<u64>,
    #[arg(long)]
    pub rows_per_file: Option<u64>,
    #[arg(long, value_enum)]
    pub input_dist: Option<InputDistArg>,
    /// Gaussian noise added to sparse-code inputs.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Also write `probe/probe.acts`: fresh inputs labeled by whether feature 0
    /// fires. 0 skips it.
    #[arg(long)]
    pub probe_rows: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
}
overlay!(PlantedArgs {
    d_in, d_out, n_features, feature_prob, linear_scale, offset_scale, rows, rows_per_file, input_dist, noise,
    probe_rows, seed
});

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyLmArgs {
    #[arg(long)]
    pub vocab: Option<usize>,
    #[arg(long)]
    pub d_model: Option<usize>,
    #[arg(long)]
    pub d_mlp: Option<usize>,
    #[arg(long)]
    pub logit_scale: Option<f64>,
    #[arg(long)]
    pub tokens: Option<usize>,
    #[arg(long, value_enum)]
    pub sampling: Option<SamplingArg>,
    #[arg(long, value_enum)]
    pub dtype: Option<DtypeArg>,
    #[arg(long)]
    pub seed: Option<u64>,
}
overlay!(ToyLmArgs { vocab, d_model, d_mlp, logit_scale, tokens, sampling, dtype, seed });

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainArgs {
    /// Shard file or directory of shards.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum, value_delimiter = ',')]
    pub arch: Option<Vec<ArchArg>>,
    #[arg(long, value_delimiter = ',')]
    pub k: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub n_latents: Option<Vec<usize>>,
    /// Stored vector an SAE reconstructs.
    #[arg(long, value_enum)]
    pub sae_on: Option<SaeOn>,
    #[arg(long, value_enum)]
    pub dtype: Option<DtypeArg>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub dead_token_window: Option<u64>,
    #[arg(long)]
    pub log_every: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
}
overlay!(TrainArgs {
    data, arch, k, n_latents, sae_on, dtype, learning_rate, beta1, beta2, epsilon, batch_size, steps,
    dead_token_window, log_every, seed
});

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Shard file or directory used by fvu and density.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Toy model archive, for patching.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Token file, for patching.
    #[arg(long)]
    pub tokens: Option<PathBuf>,
    /// Planted dictionary archive, for recovery.
    #[arg(long)]
    pub dictionary: Option<PathBuf>,
    /// Shard whose single target column holds 0/1 labels, for probing.
    #[arg(long)]
    pub probe_data: Option<PathBuf>,
    #[arg(long)]
    pub probe_m: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    #[serde(default)]
    pub fvu: bool,
    #[arg(long)]
    #[serde(default)]
    pub patch: bool,
    #[arg(long)]
    #[serde(default)]
    pub density: bool,
    #[arg(long)]
    #[serde(default)]
    pub probe: bool,
    #[arg(long)]
    #[serde(default)]
    pub recovery: bool,
    /// Every evaluation whose inputs were given.
    #[arg(long)]
    #[serde(default)]
    pub all: bool,
}
overlay!(EvalArgs { checkpoint, data, model, tokens, dictionary, probe_data, probe_m, seed }
    switches { fvu, patch, density, probe, recovery, all });

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Shard with one row per token.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub tokens: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub latents: Option<Vec<usize>>,
    #[arg(long)]
    pub n_quantiles: Option<usize>,
    #[arg(long)]
    pub n_per_quantile: Option<usize>,
    #[arg(long)]
    pub n_non_activating: Option<usize>,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub record_offset: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}
overlay!(SampleArgs {
    checkpoint, data, tokens, latents, n_quantiles, n_per_quantile, n_non_activating, window, record_offset, seed
});

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreArgs {
    /// JSONL of judged detection examples.
    #[arg(long)]
    pub detection: Option<PathBuf>,
    /// JSONL of judged fuzzing examples.
    #[arg(long)]
    pub fuzzing: Option<PathBuf>,
}
overlay!(ScoreArgs { detection, fuzzing });

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvertArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}
overlay!(ConvertArgs { checkpoint });

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportArgs {
    /// Directories searched recursively for evaluation reports.
    #[arg(long, value_delimiter = ',')]
    pub runs: Option<Vec<PathBuf>>,
    /// Also write density and Pareto plots as SVG.
    #[arg(long)]
    #[serde(default)]
    pub plot: bool,
}
overlay!(ReportArgs { runs } switches { plot });

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthFile {
    #[serde(default)]
    pub planted: PlantedArgs,
    #[serde(default)]
    pub toylm: ToyLmArgs,
}

/// Config file layout: `out_dir` plus one table per subcommand.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub synth: SynthFile,
    #[serde(default)]
    pub train: TrainArgs,
    #[serde(default)]
    pub eval: EvalArgs,
    #[serde(default)]
    pub sample: SampleArgs,
    #[serde(default)]
    pub score: ScoreArgs,
    #[serde(default)]
    pub convert: ConvertArgs,
    #[serde(default)]
    pub report: ReportArgs,
}
