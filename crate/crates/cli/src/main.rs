//! `mmt`: the command-line pipeline over the library. Debias embedding
//! files, report hubness, build vocabulary + initialization tables, train
//! the sequence models on small corpora, translate files, and score the
//! output.
//!
//! Exit codes: 0 on success, 1 on a usage error (bad flags or flag
//! combinations), 2 on a data error (missing or malformed files,
//! incompatible shapes). All file artifacts are written to a temporary
//! sibling and renamed into place, and contain no timestamps, so a rerun
//! with the same seed reproduces them byte for byte.

mod commands;
mod files;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use commands::Failure;

#[derive(Parser)]
#[command(name = "mmt", version, about = "Multimodal translation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Remove common bias directions from an embedding text file
    Debias(DebiasArgs),
    /// Report k-occurrence hubness statistics as JSON
    Hubness(HubnessArgs),
    /// Build a vocabulary and an initialization table from a corpus
    Init(InitArgs),
    /// Train a translation model on a parallel corpus
    Train(TrainArgs),
    /// Greedy-decode a file of source sentences
    Translate(TranslateArgs),
    /// Score translations with BLEU and a per-word F-score breakdown
    Evaluate(EvaluateArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    /// Copy the table unchanged
    None,
    /// Localized centering: subtract each word's neighborhood centroid
    Lc,
    /// All-but-the-top: drop the mean and the top principal components
    Abtt,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    Cosine,
    Euclidean,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    /// Word and values per line, dimension inferred (GloVe)
    Headerless,
    /// Leading "count dim" line (word2vec text)
    Header,
}

#[derive(Args)]
pub struct DebiasArgs {
    /// Embedding text file to read
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Debiased embedding text file to write
    #[arg(long)]
    pub out: PathBuf,
    /// Correction to apply
    #[arg(long, value_enum)]
    pub method: MethodArg,
    /// Neighborhood size for localized centering
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// Principal components removed by all-but-the-top
    #[arg(long, default_value_t = 3)]
    pub d: usize,
    /// Layout of both embedding files
    #[arg(long, value_enum, default_value_t = FormatArg::Headerless)]
    pub format: FormatArg,
}

#[derive(Args)]
pub struct HubnessArgs {
    /// Embedding text file to read
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Neighborhood size
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, value_enum, default_value_t = MetricArg::Cosine)]
    pub metric: MetricArg,
    /// Keep only the most hub-like words in the report
    #[arg(long)]
    pub top: Option<usize>,
    /// Layout of the embedding file
    #[arg(long, value_enum, default_value_t = FormatArg::Headerless)]
    pub format: FormatArg,
    /// Report file; stdout when absent
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct InitArgs {
    /// Tokenized training corpus, one sentence per line
    #[arg(long)]
    pub corpus: PathBuf,
    /// Pretrained embedding text file
    #[arg(long)]
    pub emb: PathBuf,
    /// Keep tokens with at least this corpus count
    #[arg(long = "min-freq", default_value_t = 1)]
    pub min_freq: u64,
    /// Cap on non-special vocabulary entries
    #[arg(long = "max-size")]
    pub max_size: Option<usize>,
    /// Layout of the embedding file
    #[arg(long, value_enum, default_value_t = FormatArg::Headerless)]
    pub format: FormatArg,
    /// Vocabulary file to write
    #[arg(long = "out-vocab")]
    pub out_vocab: PathBuf,
    /// Initialization table to write (embedding text, specials included)
    #[arg(long = "out-table")]
    pub out_table: PathBuf,
}

#[derive(Args)]
pub struct TrainArgs {
    /// Architecture: nmt, da, imagination, or vag
    #[arg(long)]
    pub model: String,
    /// Source-side corpus, one tokenized sentence per line
    #[arg(long)]
    pub src: PathBuf,
    /// Target-side corpus, aligned with --src
    #[arg(long)]
    pub tgt: PathBuf,
    /// Visual feature file, one item per corpus line
    #[arg(long)]
    pub feats: Option<PathBuf>,
    /// Embedding text used to initialize the source table
    #[arg(long = "emb-init")]
    pub emb_init: Option<PathBuf>,
    /// Layout of the --emb-init file
    #[arg(long, value_enum, default_value_t = FormatArg::Headerless)]
    pub format: FormatArg,
    /// JSON training config; flags override its fields
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Checkpoint to write; vocabularies land in sidecar files
    #[arg(long)]
    pub out: PathBuf,
    /// Loss log destination; defaults to <out>.loss.csv
    #[arg(long = "loss-csv")]
    pub loss_csv: Option<PathBuf>,
    #[arg(long = "min-freq", default_value_t = 1)]
    pub min_freq: u64,
    #[arg(long = "max-size")]
    pub max_size: Option<usize>,
    /// Embedding width (default 300, or the --emb-init width)
    #[arg(long = "emb-dim")]
    pub emb_dim: Option<usize>,
    /// Encoder hidden width per direction (default 256)
    #[arg(long = "enc-hidden")]
    pub enc_hidden: Option<usize>,
    /// Shared space width for the grounding losses (default 512)
    #[arg(long = "shared-dim")]
    pub shared_dim: Option<usize>,
    /// Latent width (defaults to the global feature width)
    #[arg(long = "latent-dim")]
    pub latent_dim: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long = "batch-size")]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long = "clip-norm")]
    pub clip_norm: Option<f64>,
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Weight on the translation loss in the multitask objective
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Margin of the latent-space ranking losses
    #[arg(long)]
    pub margin: Option<f64>,
    /// Visual-vs-mean mix for the grounded decoder initialization
    #[arg(long)]
    pub rho: Option<f64>,
    /// Seed for every random choice in the run
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args)]
pub struct TranslateArgs {
    /// Checkpoint written by `mmt train`
    #[arg(long)]
    pub model: PathBuf,
    /// Source sentences, one per line
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Translations, exactly one line per input line
    #[arg(long)]
    pub out: PathBuf,
    /// Visual feature file, one item per input line
    #[arg(long)]
    pub feats: Option<PathBuf>,
    /// Decode step cap per sentence
    #[arg(long = "max-len", default_value_t = 50)]
    pub max_len: usize,
}

#[derive(Args)]
pub struct EvaluateArgs {
    /// System output, one tokenized sentence per line
    #[arg(long)]
    pub hyp: PathBuf,
    /// Reference translations, aligned with --hyp
    #[arg(long = "ref")]
    pub reference: PathBuf,
    /// Corpus that supplies word frequencies for the F-score buckets
    #[arg(long = "train-corpus")]
    pub train_corpus: Option<PathBuf>,
    /// Highest n-gram order in BLEU
    #[arg(long = "max-n", default_value_t = 4)]
    pub max_n: usize,
    /// Frequency bucket edges, e.g. 1,10,100
    #[arg(long, value_delimiter = ',')]
    pub buckets: Vec<u64>,
    /// Report file; stdout when absent
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    if let Err(msg) = files::cap_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(1);
    }

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };

    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
