use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "slu", version, about = "Spoken language understanding toolkit")]
pub struct Cli {
    /// Human-readable output instead of compact JSON.
    #[arg(long, global = true)]
    pub pretty: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check manifests for schema and label errors.
    Validate(ValidateArgs),
    /// Split manifest words into subword pieces.
    Tokenize(TokenizeArgs),
    /// Score hypotheses against references.
    Score(ScoreArgs),
    /// Word error rate with per-utterance edit counts.
    Wer(WerArgs),
    /// Mix every record with noise at several SNR levels.
    Augment(AugmentArgs),
    /// Write the synthetic tone-coded corpus used by the toy model.
    Synth(SynthArgs),
    /// Train the toy joint model.
    TrainToy(TrainArgs),
    /// Two-step decoding with a trained checkpoint.
    Decode(DecodeArgs),
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(required = true)]
    pub manifests: Vec<PathBuf>,
    /// Also decode every referenced audio file.
    #[arg(long)]
    pub check_audio: bool,
}

#[derive(Debug, Args)]
pub struct TokenizeArgs {
    #[arg(long)]
    pub vocab: PathBuf,
    /// Manifest whose words are tokenized.
    #[arg(long, conflicts_with = "text", required_unless_present = "text")]
    pub manifest: Option<PathBuf>,
    /// Raw text, normalized before tokenization.
    #[arg(long)]
    pub text: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Metric {
    Wer,
    SlotsEditF1,
    SpanF1,
    IntentF1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MatchMode {
    WordAndLabel,
    LabelOnly,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub refs: PathBuf,
    #[arg(long)]
    pub hyps: PathBuf,
    /// Metrics to report; all by default.
    #[arg(long, value_delimiter = ',')]
    pub metrics: Vec<Metric>,
    #[arg(long, value_enum, default_value_t = MatchMode::WordAndLabel)]
    pub match_mode: MatchMode,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct WerArgs {
    #[arg(long, required_unless_present = "ref_text")]
    pub refs: Option<PathBuf>,
    #[arg(long, required_unless_present = "hyp_text")]
    pub hyps: Option<PathBuf>,
    #[arg(long, conflicts_with = "refs", requires = "hyp_text")]
    pub ref_text: Option<String>,
    #[arg(long, conflicts_with = "hyps", requires = "ref_text")]
    pub hyp_text: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory with `train/` and `test/` subdirectories of WAV noises.
    #[arg(long)]
    pub noise_dir: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::Train)]
    pub split: SplitArg,
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 10.0, 20.0, 30.0, 40.0])]
    pub snr: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Start each noise at a random offset.
    #[arg(long)]
    pub random_offset: bool,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// JSON training configuration.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    /// Checkpoint path.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Per-epoch losses as JSON.
    #[arg(long)]
    pub loss_log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    /// Hypothesis manifest, scoreable with `slu score`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub beam: usize,
    #[arg(long, default_value_t = 32)]
    pub max_len: usize,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}
