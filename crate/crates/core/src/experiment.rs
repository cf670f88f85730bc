//! Config-driven experiment runs behind the `glasso-prune` binary: train,
//! prune, analyze and sweep. Every command writes plain files and is
//! byte-for-byte reproducible for a fixed config.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::analysis::{
    disposable_rows, gap_report, norm_histogram, retained_rows, write_bundle, AnalysisBundle,
    HistogramSpec, DEFAULT_GAP_BAND,
};
use crate::config::{DataConfig, DataSource, ExperimentConfig};
use crate::datasets::{context_stack, load_csv, load_idx, split, synth_gaussians, Dataset};
use crate::error::{Error, Result};
use crate::format::{load_glnn, save_glnn};
use crate::network::MlpNetwork;
use crate::pruning::{forced_removal_curve, match_count_prune, prune, PruneOutcome, PruneSummary};
use crate::regularization::Grouping;
use crate::trainer::{evaluate, parse_history_jsonl, train, write_history_jsonl, TrainResult};

pub const MODEL_FILE: &str = "model.glnn";
pub const HISTORY_FILE: &str = "history.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const BUNDLE_DIR: &str = "analysis";
pub const PRUNED_MODEL_FILE: &str = "pruned.glnn";
pub const PRUNE_REPORT_FILE: &str = "prune.json";
pub const SUMMARY_FILE: &str = "summary.csv";

#[derive(Clone, Debug)]
pub struct Splits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

/// Loads, context-stacks, splits and (optionally) standardizes the data. The
/// standardization statistics come from the training split only.
pub fn load_data(cfg: &DataConfig) -> Result<Splits> {
    let raw = match &cfg.source {
        DataSource::Synth {
            classes,
            dim,
            per_class,
            separation,
            seed,
        } => synth_gaussians(*classes, *dim, *per_class, *separation, *seed)?,
        DataSource::Idx { images, labels } => load_idx(images, labels)?,
        DataSource::Csv { path, label_column } => load_csv(path, label_column)?,
    };
    let raw = if cfg.context_window > 1 {
        context_stack(&raw, cfg.context_window)?
    } else {
        raw
    };
    let (mut train, mut val, mut test) = split(&raw, cfg.split_fractions(), cfg.split_seed)?;
    if cfg.standardize {
        let (mean, std) = train.feature_stats();
        for ds in [&mut train, &mut val, &mut test] {
            ds.standardize_with(&mean, &std);
        }
    }
    Ok(Splits { train, val, test })
}

/// Everything a finished training run produced, before anything is written.
#[derive(Clone, Debug)]
pub struct TrainRun {
    pub config: ExperimentConfig,
    pub splits: Splits,
    pub result: TrainResult,
    pub test_accuracy: f64,
    pub pruned: PruneOutcome,
    pub pruned_test_accuracy: f64,
}

impl TrainRun {
    pub fn grouping(&self) -> Grouping {
        self.config.prune_grouping
    }
}

pub fn layer_sizes(cfg: &ExperimentConfig, splits: &Splits) -> Vec<usize> {
    let mut sizes = vec![splits.train.dim()];
    sizes.extend(&cfg.hidden);
    sizes.push(splits.train.num_classes());
    sizes
}

/// Trains the configured network and prunes the selected epoch at `theta`.
pub fn run_training(cfg: &ExperimentConfig) -> Result<TrainRun> {
    let splits = load_data(&cfg.data)?;
    let init = MlpNetwork::init(&layer_sizes(cfg, &splits), cfg.train.seed)?;
    let result = train(&init, &splits.train, &splits.val, &cfg.train)?;
    let test_accuracy = evaluate(&result.best_network, &splits.test)?;
    let pruned = prune(&result.best_network, cfg.prune_grouping, cfg.theta)?;
    let pruned_test_accuracy = evaluate(&pruned.pruned_network, &splits.test)?;
    Ok(TrainRun {
        config: cfg.clone(),
        splits,
        result,
        test_accuracy,
        pruned,
        pruned_test_accuracy,
    })
}

/// Histogram, forced-removal curve on the test split, disposable trajectory,
/// retained profile at `theta`, and the default gap band.
pub fn run_bundle(run: &TrainRun) -> Result<AnalysisBundle> {
    let g = run.grouping();
    let net = &run.result.best_network;
    Ok(AnalysisBundle {
        histogram: Some(norm_histogram(net, g, HistogramSpec::default())?),
        pruning_curve: Some(forced_removal_curve(
            net,
            g,
            run.config.curve_step,
            &run.splits.test,
        )?),
        disposable_trajectory: Some(disposable_rows(&run.result.history)),
        retained_profile: Some(retained_rows(&run.pruned)),
        gap_report: Some(gap_report(net, g, DEFAULT_GAP_BAND.0, DEFAULT_GAP_BAND.1)?),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunManifest {
    pub config: Value,
    pub seed: u64,
    pub layer_sizes: Vec<usize>,
    pub best_epoch: usize,
    pub best_val_acc: f64,
    pub final_train_loss: f64,
    pub test_acc: f64,
    pub prune: PruneSummary,
    pub pruned_test_acc: f64,
}

impl RunManifest {
    pub fn from_run(run: &TrainRun) -> Self {
        RunManifest {
            config: run.config.to_json_value(),
            seed: run.config.train.seed,
            layer_sizes: run.result.best_network.layer_sizes(),
            best_epoch: run.result.best_epoch,
            best_val_acc: run.result.best_report().val_accuracy,
            final_train_loss: run.result.history.last().map_or(f64::NAN, |r| r.train_loss),
            test_acc: run.test_accuracy,
            prune: run.pruned.summary(),
            pruned_test_acc: run.pruned_test_accuracy,
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes the files the config asks for into `dir`.
pub fn write_run(run: &TrainRun, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let out = &run.config.output;
    if out.model {
        save_glnn(&run.result.best_network, dir.join(MODEL_FILE))?;
    }
    if out.history {
        let path = dir.join(HISTORY_FILE);
        let mut buf = Vec::new();
        write_history_jsonl(&run.result.history, &mut buf).map_err(|e| Error::io(&path, e))?;
        fs::write(&path, buf).map_err(|e| Error::io(&path, e))?;
    }
    if out.bundle {
        write_bundle(&run_bundle(run)?, dir.join(BUNDLE_DIR))?;
    }
    write_json(&dir.join(MANIFEST_FILE), &RunManifest::from_run(run))
}

/// `train <config>`: runs one experiment. `out` overrides `output.dir`.
pub fn cmd_train(config_path: &Path, out: Option<&Path>) -> Result<RunManifest> {
    let mut cfg = ExperimentConfig::load(config_path)?;
    if let Some(o) = out {
        cfg.output.dir = o.to_path_buf();
    }
    let run = run_training(&cfg)?;
    write_run(&run, &cfg.output.dir)?;
    Ok(RunManifest::from_run(&run))
}

/// Evaluation data for `prune` and `analyze`. Either an experiment config,
/// whose test split is used, `csv:<path>` with a `label` column, or
/// `idx:<images>,<labels>`.
pub fn load_eval_data(spec: &str) -> Result<Dataset> {
    if let Some(path) = spec.strip_prefix("csv:") {
        return load_csv(path, "label");
    }
    if let Some(rest) = spec.strip_prefix("idx:") {
        let (images, labels) = rest.split_once(',').ok_or_else(|| {
            Error::invalid(format!(
                "idx data spec needs `idx:<images>,<labels>`, got `{spec}`"
            ))
        })?;
        return load_idx(images, labels);
    }
    let cfg = ExperimentConfig::load(spec)?;
    Ok(load_data(&cfg.data)?.test)
}

/// Loads a model from GLNN, or from JSON when the file ends in `.json`.
pub fn load_model(path: &Path) -> Result<MlpNetwork> {
    if path.extension().is_some_and(|e| e == "json") {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        crate::format::from_json(&text)
    } else {
        load_glnn(path)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PruneReport {
    pub model: String,
    /// Set when nodes were removed by count instead of threshold.
    pub match_count: Option<usize>,
    #[serde(flatten)]
    pub summary: PruneSummary,
    pub accuracy_before: f64,
    pub accuracy_after: f64,
}

#[derive(Clone, Debug)]
pub struct PruneArgs<'a> {
    pub model: &'a Path,
    pub grouping: Grouping,
    pub theta: f64,
    pub match_count: Option<usize>,
    pub data: &'a str,
    /// Output directory; defaults to the model's directory.
    pub out: Option<&'a Path>,
}

fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

/// `prune <model>`: writes the pruned model and a JSON report with the
/// accuracy before and after.
pub fn cmd_prune(args: &PruneArgs) -> Result<PruneReport> {
    let net = load_model(args.model)?;
    let data = load_eval_data(args.data)?;
    let outcome = match args.match_count {
        Some(n) => match_count_prune(&net, args.grouping, n)?,
        None => prune(&net, args.grouping, args.theta)?,
    };
    let report = PruneReport {
        model: args.model.display().to_string(),
        match_count: args.match_count,
        summary: outcome.summary(),
        accuracy_before: evaluate(&net, &data)?,
        accuracy_after: evaluate(&outcome.pruned_network, &data)?,
    };
    let dir = args
        .out
        .map_or_else(|| parent_dir(args.model), Path::to_path_buf);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    save_glnn(&outcome.pruned_network, dir.join(PRUNED_MODEL_FILE))?;
    write_json(&dir.join(PRUNE_REPORT_FILE), &report)?;
    Ok(report)
}

#[derive(Clone, Debug, Default)]
pub struct AnalyzeFlags {
    pub histogram: bool,
    /// Curve step; `None` skips the curve.
    pub curve_step: Option<usize>,
    pub gap: bool,
    pub disposable: bool,
    pub retained: bool,
}

#[derive(Clone, Debug)]
pub struct AnalyzeArgs<'a> {
    /// A model file, or a history `.jsonl` file.
    pub input: &'a Path,
    pub flags: AnalyzeFlags,
    pub grouping: Grouping,
    pub theta: f64,
    /// Needed for the curve.
    pub data: Option<&'a str>,
    pub out: Option<&'a Path>,
}

/// `analyze <model|history>`: writes the requested bundle files.
pub fn cmd_analyze(args: &AnalyzeArgs) -> Result<AnalysisBundle> {
    let f = &args.flags;
    let is_history = args.input.extension().is_some_and(|e| e == "jsonl");
    let mut bundle = AnalysisBundle::default();
    if is_history {
        if f.histogram || f.curve_step.is_some() || f.gap || f.retained {
            return Err(Error::invalid(
                "--histogram, --curve, --gap and --retained need a model file, not a history file",
            ));
        }
        let path = args.input;
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        bundle.disposable_trajectory = Some(disposable_rows(&parse_history_jsonl(&text)?));
    } else {
        if f.disposable {
            return Err(Error::invalid(
                "--disposable needs a history .jsonl file, not a model",
            ));
        }
        let net = load_model(args.input)?;
        let g = args.grouping;
        if f.histogram {
            bundle.histogram = Some(norm_histogram(&net, g, HistogramSpec::default())?);
        }
        if let Some(step) = f.curve_step {
            let spec = args
                .data
                .ok_or_else(|| Error::invalid("--curve needs evaluation data via --data"))?;
            bundle.pruning_curve =
                Some(forced_removal_curve(&net, g, step, &load_eval_data(spec)?)?);
        }
        if f.gap {
            bundle.gap_report = Some(gap_report(&net, g, DEFAULT_GAP_BAND.0, DEFAULT_GAP_BAND.1)?);
        }
        if f.retained {
            bundle.retained_profile = Some(retained_rows(&prune(&net, g, args.theta)?));
        }
    }
    if bundle.is_empty() {
        return Err(Error::invalid(
            "nothing to analyze; pass --histogram, --curve, --gap, --disposable or --retained",
        ));
    }
    let dir = args.out.map_or_else(
        || parent_dir(args.input).join(BUNDLE_DIR),
        Path::to_path_buf,
    );
    write_bundle(&bundle, &dir)?;
    Ok(bundle)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub best_val_acc: f64,
    pub disposable_total: usize,
    pub post_prune_acc: f64,
}

/// Per-alpha subdirectory name, e.g. `alpha_0.006`.
pub fn sweep_dir_name(alpha: f64) -> String {
    format!("alpha_{alpha}")
}

/// `sweep <config> --alphas ...`: one full run per alpha under
/// `<output.dir>/alpha_<a>/`, plus `summary.csv`.
pub fn cmd_sweep(config_path: &Path, alphas: &[f64], out: Option<&Path>) -> Result<Vec<SweepRow>> {
    if alphas.is_empty() {
        return Err(Error::config(
            None,
            "alphas",
            "sweep needs at least one alpha",
        ));
    }
    let base = ExperimentConfig::load(config_path)?;
    let root = out.map_or_else(|| base.output.dir.clone(), Path::to_path_buf);
    let mut rows = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let mut cfg = base.with_alpha(alpha)?;
        cfg.output.dir = root.join(sweep_dir_name(alpha));
        let run = run_training(&cfg)?;
        write_run(&run, &cfg.output.dir)?;
        rows.push(SweepRow {
            alpha,
            best_val_acc: run.result.best_report().val_accuracy,
            disposable_total: run.result.best_report().disposable_total(),
            post_prune_acc: run.pruned_test_accuracy,
        });
    }
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let path = root.join(SUMMARY_FILE);
    for row in &rows {
        w.serialize(row)
            .map_err(|e| Error::format("CSV", e.to_string()))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::format("CSV", e.to_string()))?;
    fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    Ok(rows)
}
