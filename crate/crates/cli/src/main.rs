mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use policylens::classify::ClassifierKind;
use policylens::report::StageError;

/// Exit status for bad flags or configuration. clap uses the same code.
const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_STAGE: u8 = 4;

#[derive(Parser, Debug)]
#[command(
    name = "policylens",
    version,
    about = "Privacy policy sentence classification, shortening and topic tagging"
)]
pub struct Cli {
    /// Seed for the SVM shuffle, fold assignment and topic sampler.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Directory for outputs whose path is not given explicitly.
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,

    /// Pipeline configuration file (.toml or .json).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Load policies and write one sentence record per line.
    Ingest(IngestArgs),
    /// Tokenize, remove stop words and stem sentence records.
    Preprocess(PreprocessArgs),
    /// Train a classifier on a feature dataset.
    Train(TrainArgs),
    /// Stratified k-fold cross-validation.
    Eval(EvalArgs),
    /// Label sentence records with a trained model.
    Predict(PredictArgs),
    /// Keep only the sentences of a policy that the model labels sensitive.
    Shorten(ShortenArgs),
    /// Fit, apply and summarise the topic model.
    #[command(subcommand)]
    Topics(TopicsCommand),
    /// Write highlighted HTML and DOT graphs for annotated policies.
    Report(ReportArgs),
    /// Run every stage end to end.
    Run(RunArgs),
}

#[derive(Args, Debug)]
pub struct IngestArgs {
    /// A directory of .txt policies or a single file.
    pub corpus: PathBuf,
    /// Gold labels to attach (sentence JSONL).
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Defaults to <out-dir>/sentences.jsonl.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PreprocessArgs {
    /// Sentence JSONL.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Defaults to <out-dir>/stems.jsonl.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Stop word file, one word per line.
    #[arg(long)]
    pub stoplist: Option<PathBuf>,
    /// Write `stem,count` frequencies here.
    #[arg(long)]
    pub emit_freq: Option<PathBuf>,
    /// Write the top-k vocabulary here.
    #[arg(long)]
    pub emit_vocab: Option<PathBuf>,
    /// Write the labelled feature dataset here (needs labels in the input).
    #[arg(long)]
    pub emit_dataset: Option<PathBuf>,
    #[arg(long, default_value_t = policylens::features::DEFAULT_TOP_K)]
    pub top_k: usize,
}

#[derive(Args, Debug, Clone)]
pub struct HyperArgs {
    /// Naive Bayes smoothing.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// KNN neighbour count (odd).
    #[arg(long)]
    pub k: Option<usize>,
    /// SVM regularisation.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// SVM passes over the data.
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub model: KindArg,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    /// Defaults to <out-dir>/model.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub hyper: HyperArgs,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long, value_enum)]
    pub model: KindArg,
    #[arg(long)]
    pub data: PathBuf,
    /// Defaults to vocab.txt next to the dataset.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long, default_value_t = policylens::evaluate::DEFAULT_FOLDS)]
    pub folds: usize,
    /// Reuse the fold assignment of an earlier report.
    #[arg(long)]
    pub replay: Option<PathBuf>,
    /// Defaults to <out-dir>/report.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub hyper: HyperArgs,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Sentence JSONL.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Defaults to <out-dir>/predictions.jsonl.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Checked against the vocabulary stored in the model.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub stoplist: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ShortenArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Checked against the vocabulary stored in the model.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// A policy text file.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Defaults to <out-dir>/<name>.short.txt.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Defaults to <out-dir>/<name>.stats.json.
    #[arg(long)]
    pub stats: Option<PathBuf>,
    #[arg(long)]
    pub stoplist: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum TopicsCommand {
    /// Fit the seeded topic model on sensitive sentences.
    Fit(TopicsFitArgs),
    /// Assign topics to sentences with a fitted model.
    Assign(TopicsAssignArgs),
    /// Fraction of sentences or policies carrying each topic.
    Dist(TopicsDistArgs),
}

#[derive(Args, Debug)]
pub struct TopicsFitArgs {
    /// Stems JSONL. Only sensitive sentences are used.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Predictions JSONL supplying labels when the stems carry none.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// Defaults to <out-dir>/topics.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub seed_boost: Option<f64>,
    #[arg(long)]
    pub min_policy_df: Option<usize>,
}

#[derive(Args, Debug)]
pub struct TopicsAssignArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Stems JSONL. Sentences labelled non-sensitive are skipped.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// Defaults to <out-dir>/assignments.jsonl.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = policylens::topics::DEFAULT_THRESHOLD)]
    pub threshold: f64,
}

#[derive(Args, Debug)]
pub struct TopicsDistArgs {
    /// Assignments JSONL.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = ByArg::Sentence)]
    pub by: ByArg,
    /// Defaults to <out-dir>/distribution.csv.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// The policies (directory or single file).
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub topics: PathBuf,
    #[arg(long)]
    pub assignments: PathBuf,
    #[arg(long)]
    pub stoplist: Option<PathBuf>,
    /// Only graph these sentence indices.
    #[arg(long, value_delimiter = ',')]
    pub sentences: Option<Vec<usize>>,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    /// A directory of .txt policies or a single file.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Pretrained model; trained from --labels when absent.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub classifier: Option<KindArg>,
    #[arg(long)]
    pub top_k: Option<usize>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub stoplist: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum KindArg {
    Nb,
    Knn,
    Svm,
}

impl From<KindArg> for ClassifierKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Nb => ClassifierKind::Nb,
            KindArg::Knn => ClassifierKind::Knn,
            KindArg::Svm => ClassifierKind::Svm,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum ByArg {
    Sentence,
    Policy,
}

/// Flag or configuration mistakes found after parsing.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<StageError>().is_some() {
        return EXIT_STAGE;
    }
    if err.downcast_ref::<UsageError>().is_some() {
        return EXIT_USAGE;
    }
    match err.downcast_ref::<policylens::Error>() {
        Some(policylens::Error::InvalidConfig(_)) => EXIT_USAGE,
        Some(e) if e.is_data_error() => EXIT_DATA,
        _ => EXIT_STAGE,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match commands::dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
