//! Experiment configuration files.
//!
//! The text format is one `key = value` pair per line. `#` starts a comment,
//! blank lines are ignored, keys are dotted and flat, lists are comma
//! separated, and a value may be wrapped in double quotes. A file whose first
//! non-blank character is `{` is read as JSON instead; nested objects are
//! flattened into dotted keys and arrays into comma lists.
//!
//! ```text
//! data.source = synth
//! data.classes = 10
//! network.hidden = 256, 256, 256
//! reg.mode = glasso_out
//! reg.alpha = 0.006
//! reg.beta_coupling = true
//! output.dir = runs/out
//! ```
//!
//! Unknown keys, duplicate keys and keys that do not apply to the chosen
//! data source are rejected.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::Value;

use crate::error::{Error, Result};
use crate::regularization::{Grouping, RegularizerMode, RegularizerSpec, DEFAULT_EPSILON_NORM};
use crate::trainer::TrainConfig;

#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Synth {
        classes: usize,
        dim: usize,
        per_class: usize,
        separation: f64,
        seed: u64,
    },
    Idx {
        images: PathBuf,
        labels: PathBuf,
    },
    Csv {
        path: PathBuf,
        label_column: String,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataConfig {
    pub source: DataSource,
    /// Train/val/test weights, normalized by their sum.
    pub split: (f64, f64, f64),
    pub split_seed: u64,
    /// Standardize features with the training split's mean and std.
    pub standardize: bool,
    /// Odd frame-context window; 1 leaves the features alone.
    pub context_window: usize,
}

impl DataConfig {
    pub fn split_fractions(&self) -> (f64, f64, f64) {
        let (a, b, c) = self.split;
        let s = a + b + c;
        (a / s, b / s, c / s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub model: bool,
    pub history: bool,
    pub bundle: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    /// Hidden layer widths; input and output widths come from the data.
    pub hidden: Vec<usize>,
    /// `train.seed` drives both the initial weights and the shuffling.
    pub train: TrainConfig,
    pub theta: f64,
    /// Grouping used for pruning and analysis. Defaults to the trained
    /// grouping, or outgoing for L2-only runs.
    pub prune_grouping: Grouping,
    pub curve_step: usize,
    pub output: OutputConfig,
}

#[derive(Clone, Debug)]
struct Entry {
    line: Option<usize>,
    value: String,
}

struct Fields {
    entries: BTreeMap<String, Entry>,
}

impl Fields {
    fn take_raw(&mut self, key: &str) -> Option<Entry> {
        self.entries.remove(key)
    }

    fn take<T>(
        &mut self,
        key: &str,
        default: T,
        parse: impl Fn(&str) -> Option<T>,
        expected: &str,
    ) -> Result<T> {
        match self.take_raw(key) {
            None => Ok(default),
            Some(e) => parse(&e.value).ok_or_else(|| {
                Error::config(
                    e.line,
                    key,
                    format!("expected {expected}, got `{}`", e.value),
                )
            }),
        }
    }

    fn required<T>(
        &mut self,
        key: &str,
        parse: impl Fn(&str) -> Option<T>,
        expected: &str,
    ) -> Result<T> {
        match self.take_raw(key) {
            None => Err(Error::config(None, key, "missing required key")),
            Some(e) => parse(&e.value).ok_or_else(|| {
                Error::config(
                    e.line,
                    key,
                    format!("expected {expected}, got `{}`", e.value),
                )
            }),
        }
    }

    fn line_of(&self, key: &str) -> Option<usize> {
        self.entries.get(key).and_then(|e| e.line)
    }
}

fn parse_usize(s: &str) -> Option<usize> {
    s.parse().ok()
}

fn parse_u64(s: &str) -> Option<u64> {
    s.parse().ok()
}

fn parse_f64(s: &str) -> Option<f64> {
    s.parse().ok().filter(|x: &f64| x.is_finite())
}

fn parse_bool(s: &str) -> Option<bool> {
    match s {
        "true" | "yes" | "1" => Some(true),
        "false" | "no" | "0" => Some(false),
        _ => None,
    }
}

fn parse_list<T>(s: &str, item: impl Fn(&str) -> Option<T>) -> Option<Vec<T>> {
    s.split(',').map(|p| item(p.trim())).collect()
}

fn parse_string(s: &str) -> Option<String> {
    (!s.is_empty()).then(|| s.to_string())
}

// Shortest round-trip text, switching to exponent form for tiny values.
fn real(x: f64) -> String {
    if x != 0.0 && x.abs() < 1e-4 {
        format!("{x:e}")
    } else {
        x.to_string()
    }
}

fn parse_text(text: &str) -> Result<BTreeMap<String, Entry>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = strip_comment(raw).trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(Error::config(Some(line), content, "expected `key = value`"));
        };
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::config(Some(line), "", "empty key"));
        }
        let mut value = value.trim();
        if value.len() >= 2 && value.starts_with('"') && value.ends_with('"') {
            value = &value[1..value.len() - 1];
        }
        insert(&mut out, key.to_string(), Some(line), value.to_string())?;
    }
    Ok(out)
}

// A `#` inside double quotes is part of the value.
fn strip_comment(line: &str) -> &str {
    let mut quoted = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => quoted = !quoted,
            '#' if !quoted => return &line[..i],
            _ => {}
        }
    }
    line
}

fn insert(
    out: &mut BTreeMap<String, Entry>,
    key: String,
    line: Option<usize>,
    value: String,
) -> Result<()> {
    if let Some(prev) = out.get(&key) {
        let msg = match prev.line {
            Some(l) => format!("duplicate key, first set at line {l}"),
            None => "duplicate key".to_string(),
        };
        return Err(Error::config(line, key, msg));
    }
    out.insert(key, Entry { line, value });
    Ok(())
}

fn parse_json(text: &str) -> Result<BTreeMap<String, Entry>> {
    let root: Value = serde_json::from_str(text)
        .map_err(|e| Error::config(Some(e.line()), "", format!("invalid JSON: {e}")))?;
    let Value::Object(map) = root else {
        return Err(Error::config(None, "", "JSON config must be an object"));
    };
    let mut out = BTreeMap::new();
    flatten("", &Value::Object(map), &mut out)?;
    Ok(out)
}

fn flatten(prefix: &str, v: &Value, out: &mut BTreeMap<String, Entry>) -> Result<()> {
    let scalar = |v: &Value| -> Option<String> {
        match v {
            Value::String(s) => Some(s.clone()),
            Value::Number(n) => Some(n.to_string()),
            Value::Bool(b) => Some(b.to_string()),
            _ => None,
        }
    };
    match v {
        Value::Object(map) => {
            for (k, child) in map {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&key, child, out)?;
            }
            Ok(())
        }
        Value::Array(items) => {
            let parts: Option<Vec<String>> = items.iter().map(scalar).collect();
            let parts =
                parts.ok_or_else(|| Error::config(None, prefix, "arrays may only hold scalars"))?;
            insert(out, prefix.to_string(), None, parts.join(","))
        }
        Value::Null => Err(Error::config(None, prefix, "null is not a valid value")),
        other => insert(
            out,
            prefix.to_string(),
            None,
            scalar(other).expect("scalar"),
        ),
    }
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Parses either the flat text format or JSON.
    pub fn parse(text: &str) -> Result<Self> {
        let entries = if text.trim_start().starts_with('{') {
            parse_json(text)?
        } else {
            parse_text(text)?
        };
        Self::from_entries(Fields { entries })
    }

    fn from_entries(mut f: Fields) -> Result<Self> {
        let source_kind = f.take(
            "data.source",
            "synth".to_string(),
            parse_string,
            "synth, idx or csv",
        )?;
        let source = match source_kind.as_str() {
            "synth" => DataSource::Synth {
                classes: f.take("data.classes", 10, parse_usize, "a count")?,
                dim: f.take("data.dim", 64, parse_usize, "a count")?,
                per_class: f.take("data.per_class", 300, parse_usize, "a count")?,
                separation: f.take("data.separation", 10.0, parse_f64, "a real")?,
                seed: f.take("data.seed", 42, parse_u64, "an integer seed")?,
            },
            "idx" => DataSource::Idx {
                images: f.required("data.images", parse_string, "a path")?.into(),
                labels: f.required("data.labels", parse_string, "a path")?.into(),
            },
            "csv" => DataSource::Csv {
                path: f.required("data.path", parse_string, "a path")?.into(),
                label_column: f.take(
                    "data.label_column",
                    "label".to_string(),
                    parse_string,
                    "a column name",
                )?,
            },
            other => {
                return Err(Error::config(
                    None,
                    "data.source",
                    format!("expected synth, idx or csv, got `{other}`"),
                ))
            }
        };
        let split_line = f.line_of("data.split");
        let split = f.take(
            "data.split",
            vec![0.8, 0.1, 0.1],
            |s| parse_list(s, parse_f64),
            "three weights",
        )?;
        let [a, b, c] = split[..] else {
            return Err(Error::config(
                split_line,
                "data.split",
                "expected three weights",
            ));
        };
        if !(a > 0.0 && b > 0.0 && c > 0.0) {
            return Err(Error::config(
                split_line,
                "data.split",
                "weights must be positive",
            ));
        }
        let data = DataConfig {
            source,
            split: (a, b, c),
            split_seed: f.take("data.split_seed", 42, parse_u64, "an integer seed")?,
            standardize: f.take("data.standardize", false, parse_bool, "true or false")?,
            context_window: f.take("data.context_window", 1, parse_usize, "an odd count")?,
        };
        if data.context_window % 2 == 0 {
            return Err(Error::config(
                None,
                "data.context_window",
                "window must be odd",
            ));
        }

        let hidden_line = f.line_of("network.hidden");
        let hidden = f.take(
            "network.hidden",
            vec![256, 256, 256],
            |s| parse_list(s, parse_usize),
            "a list of widths",
        )?;
        if hidden.is_empty() || hidden.contains(&0) {
            return Err(Error::config(
                hidden_line,
                "network.hidden",
                "need at least one non-empty hidden layer",
            ));
        }

        let mode_line = f.line_of("reg.mode");
        let mode: RegularizerMode = f.take(
            "reg.mode",
            RegularizerMode::GlassoOut,
            |s| s.parse().ok(),
            "glasso_out, glasso_in or l2_all",
        )?;
        let alpha_line = f.line_of("reg.alpha");
        let default_alpha = if mode == RegularizerMode::L2All {
            0.0
        } else {
            0.006
        };
        let alpha = f.take("reg.alpha", default_alpha, parse_f64, "a real")?;
        if alpha < 0.0 {
            return Err(Error::config(
                alpha_line,
                "reg.alpha",
                format!("must be nonnegative, got {alpha}"),
            ));
        }
        if mode == RegularizerMode::L2All && alpha != 0.0 {
            return Err(Error::config(
                alpha_line.or(mode_line),
                "reg.alpha",
                "must be 0 when reg.mode = l2_all",
            ));
        }
        let coupling_line = f.line_of("reg.beta_coupling");
        let coupling = f.take("reg.beta_coupling", false, parse_bool, "true or false")?;
        let beta_line = f.line_of("reg.beta");
        let beta_given = f.entries.contains_key("reg.beta");
        let beta = f.take("reg.beta", 0.0, parse_f64, "a real")?;
        if beta < 0.0 {
            return Err(Error::config(
                beta_line,
                "reg.beta",
                format!("must be nonnegative, got {beta}"),
            ));
        }
        if coupling && beta_given {
            return Err(Error::config(
                beta_line.or(coupling_line),
                "reg.beta",
                "cannot be set together with reg.beta_coupling",
            ));
        }
        if coupling && mode == RegularizerMode::L2All {
            return Err(Error::config(
                coupling_line,
                "reg.beta_coupling",
                "needs a gLasso mode; set reg.beta directly",
            ));
        }
        let eps_line = f.line_of("reg.epsilon_norm");
        let eps = f.take(
            "reg.epsilon_norm",
            DEFAULT_EPSILON_NORM,
            parse_f64,
            "a positive real",
        )?;
        let spec = RegularizerSpec::with_epsilon(mode, alpha, beta, eps)
            .map_err(|e| Error::config(eps_line, "reg.epsilon_norm", e.to_string()))?;

        let mut train = TrainConfig::new(spec);
        train.epochs = f.take("train.epochs", train.epochs, parse_usize, "a count")?;
        train.batch_size = f.take("train.batch_size", train.batch_size, parse_usize, "a count")?;
        train.learning_rate = f.take(
            "train.learning_rate",
            train.learning_rate,
            parse_f64,
            "a real",
        )?;
        train.momentum = f.take("train.momentum", train.momentum, parse_f64, "a real")?;
        train.lr_decay = f.take("train.lr_decay", train.lr_decay, parse_f64, "a real")?;
        train.seed = f.take("train.seed", train.seed, parse_u64, "an integer seed")?;
        if coupling {
            train = train.with_beta_coupling();
        }
        if let Err(e) = train.validate() {
            let msg = e.to_string();
            let key = [
                "epochs",
                "batch_size",
                "learning_rate",
                "momentum",
                "lr_decay",
            ]
            .into_iter()
            .find(|k| msg.contains(k))
            .map(|k| format!("train.{k}"))
            .unwrap_or_else(|| "train".into());
            return Err(Error::config(None, key, msg));
        }

        let theta_line = f.line_of("prune.theta");
        let theta = f.take("prune.theta", 1e-2, parse_f64, "a positive real")?;
        if theta <= 0.0 {
            return Err(Error::config(
                theta_line,
                "prune.theta",
                format!("must be positive, got {theta}"),
            ));
        }
        let default_grouping = mode.grouping().unwrap_or(Grouping::Outgoing);
        let prune_grouping = f.take(
            "prune.mode",
            default_grouping,
            |s| s.parse().ok(),
            "out or in",
        )?;
        let step_line = f.line_of("analysis.curve_step");
        let curve_step = f.take(
            "analysis.curve_step",
            crate::pruning::DEFAULT_CURVE_STEP,
            parse_usize,
            "a count",
        )?;
        if curve_step == 0 {
            return Err(Error::config(
                step_line,
                "analysis.curve_step",
                "must be at least 1",
            ));
        }
        let output = OutputConfig {
            dir: f
                .take("output.dir", "run".to_string(), parse_string, "a path")?
                .into(),
            model: f.take("output.model", true, parse_bool, "true or false")?,
            history: f.take("output.history", true, parse_bool, "true or false")?,
            bundle: f.take("output.bundle", true, parse_bool, "true or false")?,
        };

        if let Some((key, entry)) = f.entries.into_iter().next() {
            let msg = if key.starts_with("data.") {
                format!("unknown key, or not used by data.source = {source_kind}")
            } else {
                "unknown key".to_string()
            };
            return Err(Error::config(entry.line, key, msg));
        }
        Ok(ExperimentConfig {
            data,
            hidden,
            train,
            theta,
            prune_grouping,
            curve_step,
            output,
        })
    }

    /// Every setting as `(key, value)` in key order, with defaults filled in.
    /// Feeding this back through the text parser rebuilds the same config.
    pub fn entries(&self) -> Vec<(String, String)> {
        let mut kv: Vec<(String, String)> = Vec::new();
        let mut put = |k: &str, v: String| kv.push((k.to_string(), v));
        match &self.data.source {
            DataSource::Synth {
                classes,
                dim,
                per_class,
                separation,
                seed,
            } => {
                put("data.source", "synth".into());
                put("data.classes", classes.to_string());
                put("data.dim", dim.to_string());
                put("data.per_class", per_class.to_string());
                put("data.separation", real(*separation));
                put("data.seed", seed.to_string());
            }
            DataSource::Idx { images, labels } => {
                put("data.source", "idx".into());
                put("data.images", images.display().to_string());
                put("data.labels", labels.display().to_string());
            }
            DataSource::Csv { path, label_column } => {
                put("data.source", "csv".into());
                put("data.path", path.display().to_string());
                put("data.label_column", label_column.clone());
            }
        }
        let (a, b, c) = self.data.split;
        put("data.split", format!("{},{},{}", real(a), real(b), real(c)));
        put("data.split_seed", self.data.split_seed.to_string());
        put("data.standardize", self.data.standardize.to_string());
        put("data.context_window", self.data.context_window.to_string());
        put(
            "network.hidden",
            self.hidden
                .iter()
                .map(|h| h.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        let t = &self.train;
        put("train.epochs", t.epochs.to_string());
        put("train.batch_size", t.batch_size.to_string());
        put("train.learning_rate", real(t.learning_rate));
        put("train.momentum", real(t.momentum));
        put("train.lr_decay", real(t.lr_decay));
        put("train.seed", t.seed.to_string());
        put("reg.mode", t.spec.mode().as_str().into());
        put("reg.alpha", real(t.spec.alpha()));
        if t.beta_coupling {
            put("reg.beta_coupling", "true".into());
        } else {
            put("reg.beta", real(t.spec.beta()));
        }
        put("reg.epsilon_norm", real(t.spec.epsilon_norm()));
        put("prune.theta", real(self.theta));
        put("prune.mode", self.prune_grouping.as_str().into());
        put("analysis.curve_step", self.curve_step.to_string());
        put("output.dir", self.output.dir.display().to_string());
        put("output.model", self.output.model.to_string());
        put("output.history", self.output.history.to_string());
        put("output.bundle", self.output.bundle.to_string());
        kv.sort();
        kv
    }

    /// Canonical text form.
    pub fn to_text(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| {
                if v.contains('#') || v.trim() != v {
                    format!("{k} = \"{v}\"\n")
                } else {
                    format!("{k} = {v}\n")
                }
            })
            .collect()
    }

    /// Canonical JSON object of string values, accepted by [`ExperimentConfig::parse`].
    pub fn to_json_value(&self) -> Value {
        Value::Object(
            self.entries()
                .into_iter()
                .map(|(k, v)| (k, Value::String(v)))
                .collect(),
        )
    }

    /// Points the run at `alpha`, re-deriving beta when coupling is on. For
    /// L2-only runs `alpha` sets the paired beta instead, `0.1 * alpha`.
    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        let mut cfg = self.clone();
        let spec = &self.train.spec;
        let new_spec = match spec.mode() {
            RegularizerMode::L2All => RegularizerSpec::with_epsilon(
                spec.mode(),
                0.0,
                crate::trainer::BETA_COUPLING_RATIO * alpha,
                spec.epsilon_norm(),
            ),
            mode => RegularizerSpec::with_epsilon(mode, alpha, spec.beta(), spec.epsilon_norm()),
        }
        .map_err(|e| Error::config(None, "reg.alpha", e.to_string()))?;
        cfg.train.spec = new_spec;
        if cfg.train.beta_coupling {
            cfg.train = cfg.train.with_beta_coupling();
        }
        Ok(cfg)
    }
}
