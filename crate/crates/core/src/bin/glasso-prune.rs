use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use glasso_prune::experiment::{
    cmd_analyze, cmd_prune, cmd_sweep, cmd_train, AnalyzeArgs, AnalyzeFlags, PruneArgs,
};
use glasso_prune::pruning::DEFAULT_CURVE_STEP;
use glasso_prune::regularization::Grouping;
use glasso_prune::trainer::DISPOSABLE_THRESHOLD;

/// Group-Lasso training and node pruning for sigmoid MLPs.
#[derive(Parser)]
#[command(name = "glasso-prune", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the network described by a config file.
    Train {
        config: PathBuf,
        /// Overrides output.dir.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Remove low-norm hidden nodes from a trained model.
    Prune {
        model: PathBuf,
        #[arg(long, value_parser = parse_grouping)]
        mode: Grouping,
        #[arg(long, required_unless_present = "match_count")]
        theta: Option<f64>,
        /// Remove exactly N smallest-norm nodes instead of thresholding.
        #[arg(long)]
        match_count: Option<usize>,
        /// Config file (its test split is used), csv:<path> or idx:<images>,<labels>.
        #[arg(long)]
        data: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write diagnostic reports for a model or a history.jsonl file.
    Analyze {
        input: PathBuf,
        #[arg(long)]
        histogram: bool,
        #[arg(long)]
        curve: bool,
        #[arg(long, default_value_t = DEFAULT_CURVE_STEP, requires = "curve")]
        step: usize,
        #[arg(long)]
        gap: bool,
        #[arg(long)]
        disposable: bool,
        #[arg(long)]
        retained: bool,
        #[arg(long, value_parser = parse_grouping, default_value = "out")]
        mode: Grouping,
        /// Threshold for --retained.
        #[arg(long, default_value_t = DISPOSABLE_THRESHOLD)]
        theta: f64,
        /// Evaluation data for --curve.
        #[arg(long)]
        data: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train once per alpha and summarize.
    Sweep {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        alphas: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_grouping(s: &str) -> Result<Grouping, String> {
    match s {
        "out" => Ok(Grouping::Outgoing),
        "in" => Ok(Grouping::Incoming),
        _ => Err(format!("expected `out` or `in`, got `{s}`")),
    }
}

fn run(cli: Cli) -> glasso_prune::Result<()> {
    match cli.command {
        Command::Train { config, out } => {
            let m = cmd_train(&config, out.as_deref())?;
            println!(
                "best epoch {} val_acc {:.4} test_acc {:.4} removed {} pruned_test_acc {:.4}",
                m.best_epoch, m.best_val_acc, m.test_acc, m.prune.total_removed, m.pruned_test_acc
            );
        }
        Command::Prune {
            model,
            mode,
            theta,
            match_count,
            data,
            out,
        } => {
            let r = cmd_prune(&PruneArgs {
                model: &model,
                grouping: mode,
                theta: theta.unwrap_or(DISPOSABLE_THRESHOLD),
                match_count,
                data: &data,
                out: out.as_deref(),
            })?;
            println!(
                "removed {} {:?} accuracy {:.4} -> {:.4}",
                r.summary.total_removed,
                r.summary.removed_per_layer,
                r.accuracy_before,
                r.accuracy_after
            );
        }
        Command::Analyze {
            input,
            histogram,
            curve,
            step,
            gap,
            disposable,
            retained,
            mode,
            theta,
            data,
            out,
        } => {
            let bundle = cmd_analyze(&AnalyzeArgs {
                input: &input,
                flags: AnalyzeFlags {
                    histogram,
                    curve_step: curve.then_some(step),
                    gap,
                    disposable,
                    retained,
                },
                grouping: mode,
                theta,
                data: data.as_deref(),
                out: out.as_deref(),
            })?;
            if let Some(g) = bundle.gap_report {
                println!("gap {}/{} = {:.4}", g.inside, g.total, g.fraction);
            }
        }
        Command::Sweep {
            config,
            alphas,
            out,
        } => {
            for row in cmd_sweep(&config, &alphas, out.as_deref())? {
                println!(
                    "alpha {} best_val_acc {:.4} disposable {} post_prune_acc {:.4}",
                    row.alpha, row.best_val_acc, row.disposable_total, row.post_prune_acc
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
