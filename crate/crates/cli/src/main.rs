use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

#[derive(Parser, Debug)]
#[command(name = "nmflab", version, about = "Tri-factorization NMF with known covariates")]
struct Cli {
    /// Directory searched for data files given as relative paths.
    #[arg(long, global = true, env = "NMFLAB_DATA_DIR")]
    data_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a model and write it as JSON.
    Train(TrainArgs),
    /// Write class probabilities (or fitted curves) for new samples.
    Predict(PredictArgs),
    /// Cross-validate the kernel bandwidth.
    Cv(CvArgs),
    /// Split, tune, refit and score, optionally over repeated splits.
    Evaluate(EvaluateArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Forward,
    Label,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum DesignArg {
    Direct,
    Kernel,
    Nystrom,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum CriterionArg {
    Loss,
    Accuracy,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum InitArg {
    Identity,
    Kmeans,
    Random,
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// Column holding class labels (label mode) or groups (forward mode).
    #[arg(long)]
    pub label_column: Option<String>,
    /// Column holding sample identifiers; excluded from the features.
    #[arg(long)]
    pub id_column: Option<String>,
    /// Keep raw feature values instead of min-max scaling to [0, 1].
    #[arg(long)]
    pub no_scale: bool,
}

#[derive(Args, Debug, Clone)]
pub struct FitArgs {
    /// Number of basis columns; defaults to the number of classes (or features).
    #[arg(long)]
    pub rank: Option<usize>,
    #[arg(long, default_value_t = 5000)]
    pub max_iter: usize,
    /// Relative loss change that counts as converged.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// Basis initialization; identity needs rank equal to the row count.
    #[arg(long, value_enum)]
    pub init: Option<InitArg>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug, Clone)]
pub struct LabelArgs {
    /// Soft labels: the true class gets r, the others share 1 - r.
    #[arg(long)]
    pub soft_r: Option<f64>,
    /// Label value marking unlabeled samples (encoded as uniform columns).
    #[arg(long)]
    pub unlabeled_token: Option<String>,
}

#[derive(Args, Debug, Clone)]
pub struct DesignArgs {
    #[arg(long, value_enum, default_value_t = DesignArg::Kernel)]
    pub design: DesignArg,
    /// Kernel bandwidth: `median` or a positive number.
    #[arg(long, default_value = "median")]
    pub beta: String,
    /// Bandwidths to cross-validate: `coarse` (median x 1e-2..1e1), `fine`
    /// (ten steps per decade), or a comma-separated list.
    #[arg(long)]
    pub beta_grid: Option<String>,
    /// Landmark count for the Nyström design.
    #[arg(long)]
    pub landmarks: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct CvOptions {
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    /// Number of fold partitions averaged in cross-validation.
    #[arg(long, default_value_t = 1)]
    pub cv_repeats: usize,
    #[arg(long, value_enum, default_value_t = CriterionArg::Loss)]
    pub criterion: CriterionArg,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long, value_enum, default_value_t = ModeArg::Label)]
    pub mode: ModeArg,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub fit: FitArgs,
    #[command(flatten)]
    pub labels: LabelArgs,
    #[command(flatten)]
    pub design: DesignArgs,
    #[command(flatten)]
    pub cv: CvOptions,
    /// Where to write the model JSON.
    #[arg(long, short)]
    pub output: PathBuf,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    /// Model JSON written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub id_column: Option<String>,
    /// Output CSV; standard output when omitted.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CvArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub fit: FitArgs,
    #[command(flatten)]
    pub labels: LabelArgs,
    #[command(flatten)]
    pub design: DesignArgs,
    #[command(flatten)]
    pub cv: CvOptions,
    /// Where to write the per-candidate CSV; standard output when omitted.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub fit: FitArgs,
    #[command(flatten)]
    pub labels: LabelArgs,
    #[command(flatten)]
    pub design: DesignArgs,
    #[command(flatten)]
    pub cv: CvOptions,
    /// Number of random 40/40/20 splits.
    #[arg(long, default_value_t = 1)]
    pub repeats: usize,
    /// Fit on every sample and score on the same samples instead of splitting.
    #[arg(long)]
    pub full_data: bool,
    /// Where to write the confusion matrix CSV (summed over repeats).
    #[arg(long)]
    pub confusion: Option<PathBuf>,
    /// Where to write the per-repeat accuracy CSV.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion)
                || e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand
            {
                let _ = e.print();
                return if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand {
                    ExitCode::from(2)
                } else {
                    ExitCode::SUCCESS
                };
            }
            let text = e.to_string();
            let first = text
                .lines()
                .map(str::trim)
                .find(|l| !l.is_empty())
                .unwrap_or("invalid arguments")
                .trim_start_matches("error: ");
            eprintln!("error[E_USAGE]: {first}");
            return ExitCode::from(2);
        }
    };

    let ctx = commands::Context { data_dir: cli.data_dir };
    let result = match cli.command {
        Command::Train(a) => commands::train(&ctx, a),
        Command::Predict(a) => commands::predict(&ctx, a),
        Command::Cv(a) => commands::cv(&ctx, a),
        Command::Evaluate(a) => commands::evaluate(&ctx, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let message = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {message}", e.code());
            ExitCode::FAILURE
        }
    }
}
