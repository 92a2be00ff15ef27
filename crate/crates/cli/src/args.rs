use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "ksae", version, about = "k-sparse autoencoder experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a k-sparse autoencoder and write a checkpoint.
    Train(TrainArgs),
    /// Encode data with a checkpoint into αk-sparse codes.
    Encode(EncodeArgs),
    /// Planted-support recovery trials with iterative thresholding.
    Recover(RecoverArgs),
    /// Mutual coherence and recovery-condition statistics of a dictionary.
    Coherence(CoherenceArgs),
    /// Render the filters of a checkpoint as a PGM grid.
    Visualize(VisualizeArgs),
    /// Histogram of hidden activities after sparsification.
    Hist(HistArgs),
    /// Softmax classification on raw pixels or frozen codes.
    Eval(EvalArgs),
    /// Frozen-feature head followed by joint fine-tuning of one layer.
    Finetune(FinetuneArgs),
    /// Greedy layer-wise pretraining plus three-stage fine-tuning.
    #[command(name = "pretrain-deep")]
    PretrainDeep(PretrainDeepArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Train(_) => "train",
            Command::Encode(_) => "encode",
            Command::Recover(_) => "recover",
            Command::Coherence(_) => "coherence",
            Command::Visualize(_) => "visualize",
            Command::Hist(_) => "hist",
            Command::Eval(_) => "eval",
            Command::Finetune(_) => "finetune",
            Command::PretrainDeep(_) => "pretrain-deep",
        }
    }
}

/// `<input>x<atoms>xk<k>`, e.g. `64x128xk5`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SynthShape {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub k: usize,
}

impl FromStr for SynthShape {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let bad = || format!("expected <input>x<atoms>xk<k> (e.g. 64x128xk5), got `{s}`");
        let parts: Vec<&str> = s.split('x').collect();
        let [n, h, k] = parts[..] else { return Err(bad()) };
        let k = k.strip_prefix('k').ok_or_else(bad)?;
        let num = |v: &str| v.parse::<usize>().ok().filter(|&v| v > 0).ok_or_else(bad);
        Ok(Self {
            input_dim: num(n)?,
            hidden_dim: num(h)?,
            k: num(k)?,
        })
    }
}

impl std::fmt::Display for SynthShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}xk{}", self.input_dim, self.hidden_dim, self.k)
    }
}

/// `HxW`
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TileShape {
    pub rows: usize,
    pub cols: usize,
}

impl FromStr for TileShape {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let bad = || format!("expected HxW, got `{s}`");
        let (r, c) = s.split_once('x').ok_or_else(bad)?;
        let num = |v: &str| v.parse::<usize>().ok().filter(|&v| v > 0).ok_or_else(bad);
        Ok(Self {
            rows: num(r)?,
            cols: num(c)?,
        })
    }
}

/// `hidden:k` for one layer of a deep stack.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerSpec {
    pub hidden: usize,
    pub k: usize,
}

impl FromStr for LayerSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let bad = || format!("expected hidden:k, got `{s}`");
        let (h, k) = s.split_once(':').ok_or_else(bad)?;
        let num = |v: &str| v.parse::<usize>().ok().filter(|&v| v > 0).ok_or_else(bad);
        Ok(Self {
            hidden: num(h)?,
            k: num(k)?,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum VelocityRuleArg {
    Updated,
    Literal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DictionaryKind {
    Gaussian,
    Orthonormal,
    Identity,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum CodesFormat {
    Csv,
    Binary,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FeatureKind {
    Raw,
    Model,
}

#[derive(Args, Debug, Clone)]
pub struct CommonArgs {
    /// File of `key=value` lines; flags on the command line take precedence.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Exactly one of `--synthetic`, `--digits` or `--images/--labels`.
#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// Planted sparse data: `<input>x<atoms>xk<k>`.
    #[arg(long, value_name = "NxHxkK")]
    pub synthetic: Option<SynthShape>,
    /// Procedurally drawn 28×28 digit images.
    #[arg(long, value_name = "N")]
    pub digits: Option<usize>,
    /// IDX image file (requires --labels).
    #[arg(long, requires = "labels")]
    pub images: Option<PathBuf>,
    /// IDX label file.
    #[arg(long, requires = "images")]
    pub labels: Option<PathBuf>,
    /// Sample count for --synthetic.
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    /// Gaussian noise added to --synthetic samples.
    #[arg(long = "data-noise", default_value_t = 0.0)]
    pub data_noise: f64,
    /// Preprocessing statistics to apply to the loaded data.
    #[arg(long, value_name = "FILE")]
    pub stats: Option<PathBuf>,
}

/// Autoencoder optimisation knobs.
#[derive(Args, Debug, Clone)]
pub struct OptimArgs {
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long = "batch", default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    pub batch: u64,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    /// Decay the learning rate linearly to this value over the run.
    #[arg(long)]
    pub lr_final: Option<f64>,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    /// Standard deviation of the initial weights.
    #[arg(long, default_value_t = 0.01)]
    pub sigma: f64,
    /// Enable the k schedule (default).
    #[arg(long, overrides_with = "no_schedule_k")]
    pub schedule_k: bool,
    #[arg(long, overrides_with = "schedule_k")]
    pub no_schedule_k: bool,
    /// Starting k of the schedule; defaults to a tenth of the hidden units.
    #[arg(long)]
    pub k_initial: Option<usize>,
    #[arg(long, value_enum, default_value_t = VelocityRuleArg::Updated)]
    pub velocity_rule: VelocityRuleArg,
}

#[derive(Args, Debug, Clone)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, required = true)]
    pub hidden: usize,
    #[arg(long, required = true)]
    pub k: usize,
    #[command(flatten)]
    pub optim: OptimArgs,
    /// Standardise features and write `stats.kpre` next to the checkpoint.
    #[arg(long)]
    pub standardize: bool,
}

#[derive(Args, Debug, Clone)]
pub struct EncodeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, required = true)]
    pub model: PathBuf,
    #[arg(long, required = true)]
    pub k: usize,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value_t = CodesFormat::Csv)]
    pub format: CodesFormat,
}

#[derive(Args, Debug, Clone)]
pub struct RecoverArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Planted problem shape: `<input>x<atoms>xk<k>`.
    #[arg(long, value_name = "NxHxkK", required_unless_present = "model")]
    pub synthetic: Option<SynthShape>,
    /// Use the dictionary of this checkpoint instead of a random one.
    #[arg(long, conflicts_with = "synthetic", requires = "k")]
    pub model: Option<PathBuf>,
    /// Sparsity; defaults to the k of --synthetic.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    pub trials: u64,
    /// Standard deviation of additive Gaussian noise.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// Sweep k = 1..=K instead of a single k.
    #[arg(long, value_name = "K")]
    pub kmax_sweep: Option<usize>,
    #[arg(long, value_enum, default_value_t = DictionaryKind::Gaussian)]
    pub dictionary: DictionaryKind,
    #[arg(long, default_value_t = 50)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
}

#[derive(Args, Debug, Clone)]
pub struct CoherenceArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, required_unless_present = "synthetic")]
    pub model: Option<PathBuf>,
    /// Random dictionary of this shape (the k part is ignored).
    #[arg(long, value_name = "NxHxkK", conflicts_with = "model")]
    pub synthetic: Option<SynthShape>,
    #[arg(long, value_enum, default_value_t = DictionaryKind::Gaussian)]
    pub dictionary: DictionaryKind,
    /// Binary codes file; reports how often the one-step condition holds.
    #[arg(long, value_name = "FILE")]
    pub codes: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct VisualizeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, required = true)]
    pub model: PathBuf,
    /// Filter shape; defaults to a square when the input size allows it.
    #[arg(long, value_name = "HxW")]
    pub shape: Option<TileShape>,
    #[arg(long, default_value = "filters.pgm")]
    pub name: String,
}

#[derive(Args, Debug, Clone)]
pub struct HistArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, required = true)]
    pub model: PathBuf,
    #[arg(long, required = true)]
    pub k: usize,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(1..))]
    pub bins: u64,
}

/// Labelled evaluation data: the data source plus an optional separate test
/// set; without one, the data is split.
#[derive(Args, Debug, Clone)]
pub struct EvalDataArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, requires = "test_labels")]
    pub test_images: Option<PathBuf>,
    #[arg(long, requires = "test_images")]
    pub test_labels: Option<PathBuf>,
    /// Training samples when splitting; defaults to five sixths.
    #[arg(long)]
    pub train_size: Option<usize>,
    #[arg(long, default_value = "run")]
    pub run_id: String,
}

/// Softmax head optimisation knobs.
#[derive(Args, Debug, Clone)]
pub struct HeadArgs {
    #[arg(long, default_value_t = 30)]
    pub head_epochs: usize,
    #[arg(long, default_value_t = 1.0)]
    pub head_lr: f64,
    #[arg(long, default_value_t = 0.001)]
    pub head_lr_final: f64,
    #[arg(long, default_value_t = 0.25)]
    pub head_momentum: f64,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    pub head_batch: u64,
}

/// Fine-tuning knobs.
#[derive(Args, Debug, Clone)]
pub struct FinetuneOptArgs {
    #[arg(long, default_value_t = 15)]
    pub ft_epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    pub ft_lr: f64,
    #[arg(long, default_value_t = 0.00001)]
    pub ft_lr_final: f64,
    #[arg(long, default_value_t = 0.25)]
    pub ft_momentum: f64,
}

#[derive(Args, Debug, Clone)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub eval: EvalDataArgs,
    #[arg(long, value_enum, default_value_t = FeatureKind::Model)]
    pub features: FeatureKind,
    #[arg(long, required_if_eq("features", "model"))]
    pub model: Option<PathBuf>,
    #[arg(long, required_if_eq("features", "model"))]
    pub k: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[command(flatten)]
    pub head: HeadArgs,
}

#[derive(Args, Debug, Clone)]
pub struct FinetuneArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub eval: EvalDataArgs,
    #[arg(long, required = true)]
    pub model: PathBuf,
    #[arg(long, required = true)]
    pub k: usize,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[command(flatten)]
    pub head: HeadArgs,
    #[command(flatten)]
    pub ft: FinetuneOptArgs,
}

#[derive(Args, Debug, Clone)]
pub struct PretrainDeepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub eval: EvalDataArgs,
    /// Layer sizes as `hidden:k`, comma separated, input side first.
    #[arg(long, required = true, value_delimiter = ',')]
    pub layers: Vec<LayerSpec>,
    #[command(flatten)]
    pub optim: OptimArgs,
    #[command(flatten)]
    pub head: HeadArgs,
    #[command(flatten)]
    pub ft: FinetuneOptArgs,
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn parse_shapes() {
        assert_eq!(
            "64x128xk5".parse::<SynthShape>().unwrap(),
            SynthShape {
                input_dim: 64,
                hidden_dim: 128,
                k: 5
            }
        );
        assert_eq!("64x128xk5".parse::<SynthShape>().unwrap().to_string(), "64x128xk5");
        for bad in ["64x128", "64x128x5", "0x128xk5", "axbxkc", "64x128xk5x1"] {
            assert!(bad.parse::<SynthShape>().is_err(), "{bad}");
        }
        assert_eq!("28x28".parse::<TileShape>().unwrap(), TileShape { rows: 28, cols: 28 });
        assert!("28".parse::<TileShape>().is_err());
        assert_eq!("256:6".parse::<LayerSpec>().unwrap(), LayerSpec { hidden: 256, k: 6 });
        assert!("256".parse::<LayerSpec>().is_err());
    }
}
