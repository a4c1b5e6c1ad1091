use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ids_core::dataset::{DEFAULT_SEED, DEFAULT_TEST_FRACTION};
use ids_core::ensemble::ModelKind;
use ids_core::pipeline::{self, FitOn, PipelineError, RunConfig};

#[derive(Parser)]
#[command(
    name = "ids",
    version,
    about = "Train and compare tree-ensemble intrusion detectors on flow CSVs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Row, column, class and missing-cell counts
    Inspect(DataArgs),
    /// Correlation of every feature with the label
    SelectFeatures {
        #[command(flatten)]
        run: RunArgs,
        /// Also write the feature-feature correlation matrix
        #[arg(long)]
        matrix: bool,
    },
    /// Train one model and evaluate it on the held-out split
    Train {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum)]
        model: ModelArg,
    },
    /// Train all four models on one split and print the comparison table
    Compare(RunArgs),
    /// Score a CSV with a saved model
    Predict {
        /// Model file written by `train` or `compare`
        #[arg(long)]
        model_file: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Destination CSV; stdout when omitted
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "Class")]
    label_column: String,
    /// Cell text treated as missing; repeatable. Defaults to "", NA, NaN, null
    #[arg(long = "na-token")]
    na_tokens: Vec<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = DEFAULT_TEST_FRACTION)]
    test_fraction: f64,
    #[arg(long, env = "IDS_SEED", default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Keep every feature instead of only positively correlated ones
    #[arg(long)]
    no_selection: bool,
    /// Rows used to fit imputation, encoding and selection
    #[arg(long, value_enum, default_value_t = FitOnArg::Train)]
    fit_on: FitOnArg,
    #[arg(long, default_value = "ids-out")]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 100)]
    rf_trees: usize,
    #[arg(long, default_value_t = 100)]
    gb_rounds: usize,
    #[arg(long, default_value_t = 0.1)]
    gb_lr: f64,
    #[arg(long, default_value_t = 3)]
    gb_depth: usize,
    #[arg(long, default_value_t = 50)]
    ada_rounds: usize,
    /// Omit for unlimited depth
    #[arg(long)]
    dt_max_depth: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Dt,
    Rf,
    Gb,
    Ada,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Dt => ModelKind::DecisionTree,
            ModelArg::Rf => ModelKind::RandomForest,
            ModelArg::Gb => ModelKind::GradientBoosting,
            ModelArg::Ada => ModelKind::AdaBoost,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FitOnArg {
    Train,
    Full,
}

impl DataArgs {
    fn config(&self) -> RunConfig {
        let mut c = RunConfig::new(&self.input, "ids-out");
        c.label_column = self.label_column.clone();
        if !self.na_tokens.is_empty() {
            c.na_tokens = self.na_tokens.clone();
        }
        c
    }
}

impl RunArgs {
    fn config(&self) -> RunConfig {
        let mut c = self.data.config();
        c.test_fraction = self.test_fraction;
        c.seed = self.seed;
        c.selection = !self.no_selection;
        c.fit_on = match self.fit_on {
            FitOnArg::Train => FitOn::Train,
            FitOnArg::Full => FitOn::Full,
        };
        c.out_dir = self.out_dir.clone();
        let h = &mut c.hyperparams;
        h.random_forest.n_trees = self.rf_trees;
        h.gradient_boosting.n_rounds = self.gb_rounds;
        h.gradient_boosting.learning_rate = self.gb_lr;
        h.gradient_boosting.max_depth = self.gb_depth;
        h.adaboost.n_rounds = self.ada_rounds;
        h.decision_tree.max_depth = self.dt_max_depth;
        c
    }
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Inspect(args) => {
            let summary = pipeline::cmd_inspect(&args.config())?;
            print!("{}", summary.render());
        }
        Command::SelectFeatures { run, matrix } => {
            let config = run.config();
            let report = pipeline::cmd_select_features(&config, matrix)?;
            for f in report.sorted() {
                let r = f.r.map_or_else(|| "undefined".to_string(), |r| format!("{r:.4}"));
                println!("{:<8} {:>10}  {}", if f.kept { "keep" } else { "drop" }, r, f.feature);
            }
            println!(
                "kept {} of {} features",
                report.kept_names().len(),
                report.features.len()
            );
        }
        Command::Train { run, model } => {
            let config = run.config();
            let outcome = pipeline::cmd_train(&config, model.into())?;
            let e = &outcome.run.evaluation;
            println!("{}  auc {:.4}", e.metrics(), e.auc);
            print!("{}", e.confusion.render());
            println!("model written to {}", outcome.model_path.display());
            eprintln!(
                "timing: train {:.3}s, eval {:.3}s",
                outcome.run.train_seconds, outcome.run.eval_seconds
            );
        }
        Command::Compare(run) => {
            let config = run.config();
            let report = pipeline::cmd_compare(&config)?;
            print!("{}", report.render_table());
            println!("artifacts written to {}", config.out_dir.display());
            eprint!("{}", report.render_timings());
        }
        Command::Predict {
            model_file,
            input,
            output,
        } => match output {
            Some(path) => {
                let predictions = pipeline::cmd_predict(&model_file, &input, &path)?;
                eprintln!("scored {} rows into {}", predictions.len(), path.display());
            }
            None => {
                let predictions = pipeline::predict_file(&model_file, &input)?;
                pipeline::write_predictions(&predictions, std::io::stdout().lock()).map_err(|e| PipelineError::Io {
                    path: "<stdout>".into(),
                    source: std::io::Error::other(e),
                })?;
            }
        },
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
