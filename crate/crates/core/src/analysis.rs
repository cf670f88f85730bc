//! Diagnostics over trained networks and training histories, written out as
//! CSV/JSON report files.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::MlpNetwork;
use crate::pruning::{CurvePoint, PruneOutcome};
use crate::regularization::{group_norms, Grouping};
use crate::trainer::EpochReport;

pub const HISTOGRAM_FILE: &str = "histogram.csv";
pub const CURVE_FILE: &str = "curve.csv";
pub const DISPOSABLE_FILE: &str = "disposable.csv";
pub const RETAINED_FILE: &str = "retained.csv";
pub const GAP_FILE: &str = "gap.json";

/// Layer label used for the histogram pooled over all hidden layers.
pub const POOLED_LAYER: &str = "all";

pub const DEFAULT_GAP_BAND: (f64, f64) = (1e-2, 1e-1);

/// Log-spaced bins over group norms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramSpec {
    pub log10_min: f64,
    pub log10_max: f64,
    pub bins: usize,
}

impl Default for HistogramSpec {
    fn default() -> Self {
        HistogramSpec {
            log10_min: -8.0,
            log10_max: 2.0,
            bins: 50,
        }
    }
}

impl HistogramSpec {
    pub fn new(log10_min: f64, log10_max: f64, bins: usize) -> Result<Self> {
        let spec = HistogramSpec {
            log10_min,
            log10_max,
            bins,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.bins == 0 {
            return Err(Error::invalid("histogram needs at least one bin"));
        }
        if !(self.log10_min.is_finite()
            && self.log10_max.is_finite()
            && self.log10_min < self.log10_max)
        {
            return Err(Error::invalid(format!(
                "histogram range [{}, {}] is empty or not finite",
                self.log10_min, self.log10_max
            )));
        }
        Ok(())
    }

    /// Lower edge of bin `k` in norm space; `k == bins` gives the top edge.
    pub fn edge(&self, k: usize) -> f64 {
        let t = self.log10_min + (self.log10_max - self.log10_min) * k as f64 / self.bins as f64;
        10f64.powf(t)
    }

    fn slot(&self, norm: f64) -> Slot {
        if norm <= 0.0 {
            return Slot::Under;
        }
        let x = norm.log10();
        if x < self.log10_min {
            return Slot::Under;
        }
        let pos = (x - self.log10_min) / (self.log10_max - self.log10_min) * self.bins as f64;
        let k = pos.floor() as usize;
        if k >= self.bins {
            Slot::Over
        } else {
            Slot::Bin(k)
        }
    }
}

enum Slot {
    Under,
    Bin(usize),
    Over,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistogramCounts {
    pub underflow: usize,
    pub bins: Vec<usize>,
    pub overflow: usize,
}

impl HistogramCounts {
    fn empty(bins: usize) -> Self {
        HistogramCounts {
            underflow: 0,
            bins: vec![0; bins],
            overflow: 0,
        }
    }

    pub fn total(&self) -> usize {
        self.underflow + self.overflow + self.bins.iter().sum::<usize>()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormHistogram {
    pub spec: HistogramSpec,
    pub grouping: Grouping,
    /// One entry per hidden layer.
    pub layers: Vec<HistogramCounts>,
    pub pooled: HistogramCounts,
}

/// One line of `histogram.csv`. Edges are norms, not log10 values. The
/// underflow row spans `[0, 10^min)` and the overflow row `[10^max, inf)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramRow {
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub layer: String,
    pub count: usize,
}

impl NormHistogram {
    pub fn rows(&self) -> Vec<HistogramRow> {
        let labelled = self
            .layers
            .iter()
            .enumerate()
            .map(|(h, c)| ((h + 1).to_string(), c))
            .chain(std::iter::once((POOLED_LAYER.to_string(), &self.pooled)));
        let mut rows = Vec::new();
        let s = &self.spec;
        for (label, counts) in labelled {
            let mut push = |lo, hi, count| {
                rows.push(HistogramRow {
                    bin_lo: lo,
                    bin_hi: hi,
                    layer: label.clone(),
                    count,
                })
            };
            push(0.0, s.edge(0), counts.underflow);
            for (k, &c) in counts.bins.iter().enumerate() {
                push(s.edge(k), s.edge(k + 1), c);
            }
            push(s.edge(s.bins), f64::INFINITY, counts.overflow);
        }
        rows
    }
}

/// Bins every hidden-node group norm by log10. Exact zeros land in the
/// underflow bucket.
pub fn norm_histogram(
    net: &MlpNetwork,
    grouping: Grouping,
    spec: HistogramSpec,
) -> Result<NormHistogram> {
    spec.validate()?;
    let report = group_norms(net, grouping);
    let mut layers: Vec<HistogramCounts> = report
        .layers
        .iter()
        .map(|_| HistogramCounts::empty(spec.bins))
        .collect();
    let mut pooled = HistogramCounts::empty(spec.bins);
    for (h, _, norm) in report.iter() {
        for counts in [&mut layers[h], &mut pooled] {
            match spec.slot(norm) {
                Slot::Under => counts.underflow += 1,
                Slot::Bin(k) => counts.bins[k] += 1,
                Slot::Over => counts.overflow += 1,
            }
        }
    }
    Ok(NormHistogram {
        spec,
        grouping,
        layers,
        pooled,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub band_lo: f64,
    pub band_hi: f64,
    pub inside: usize,
    pub total: usize,
    pub fraction: f64,
}

/// Counts group norms inside the closed band `[band_lo, band_hi]`.
pub fn gap_report(
    net: &MlpNetwork,
    grouping: Grouping,
    band_lo: f64,
    band_hi: f64,
) -> Result<GapReport> {
    if !(band_lo > 0.0 && band_lo < band_hi) {
        return Err(Error::invalid(format!(
            "gap band [{band_lo}, {band_hi}] must satisfy 0 < lo < hi"
        )));
    }
    let report = group_norms(net, grouping);
    let total = report.total();
    let inside = report
        .iter()
        .filter(|&(_, _, n)| n >= band_lo && n <= band_hi)
        .count();
    Ok(GapReport {
        band_lo,
        band_hi,
        inside,
        total,
        fraction: inside as f64 / total as f64,
    })
}

/// Fraction of hidden nodes whose group norm sits in `[band_lo, band_hi]`.
/// A well separated bimodal split leaves this band almost empty.
pub fn bimodality_gap(
    net: &MlpNetwork,
    grouping: Grouping,
    band_lo: f64,
    band_hi: f64,
) -> Result<f64> {
    gap_report(net, grouping, band_lo, band_hi).map(|g| g.fraction)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisposableRow {
    pub epoch: usize,
    pub layer: usize,
    pub count: usize,
}

/// Flattens per-epoch disposable counts into `(epoch, layer, count)` rows,
/// layers 1-based.
pub fn disposable_rows(history: &[EpochReport]) -> Vec<DisposableRow> {
    history
        .iter()
        .flat_map(|r| {
            r.disposable_per_layer
                .iter()
                .enumerate()
                .map(move |(h, &count)| DisposableRow {
                    epoch: r.epoch,
                    layer: h + 1,
                    count,
                })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetainedRow {
    pub layer: usize,
    pub kept: usize,
    pub total: usize,
}

pub fn retained_rows(outcome: &PruneOutcome) -> Vec<RetainedRow> {
    outcome
        .retained_per_layer
        .iter()
        .zip(&outcome.removed_per_layer)
        .enumerate()
        .map(|(h, (&kept, &removed))| RetainedRow {
            layer: h + 1,
            kept,
            total: kept + removed,
        })
        .collect()
}

/// Any subset of the report files. Absent parts are not written.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AnalysisBundle {
    pub histogram: Option<NormHistogram>,
    pub pruning_curve: Option<Vec<CurvePoint>>,
    pub disposable_trajectory: Option<Vec<DisposableRow>>,
    pub retained_profile: Option<Vec<RetainedRow>>,
    pub gap_report: Option<GapReport>,
}

impl AnalysisBundle {
    pub fn is_empty(&self) -> bool {
        self.histogram.is_none()
            && self.pruning_curve.is_none()
            && self.disposable_trajectory.is_none()
            && self.retained_profile.is_none()
            && self.gap_report.is_none()
    }
}

/// Writes the present parts of `bundle` into `dir`, creating it if needed.
pub fn write_bundle(bundle: &AnalysisBundle, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    if let Some(h) = &bundle.histogram {
        write_rows(
            &dir.join(HISTOGRAM_FILE),
            &["bin_lo", "bin_hi", "layer", "count"],
            &h.rows(),
        )?;
    }
    if let Some(c) = &bundle.pruning_curve {
        write_rows(&dir.join(CURVE_FILE), &["removed", "accuracy"], c)?;
    }
    if let Some(d) = &bundle.disposable_trajectory {
        write_rows(&dir.join(DISPOSABLE_FILE), &["epoch", "layer", "count"], d)?;
    }
    if let Some(r) = &bundle.retained_profile {
        write_rows(&dir.join(RETAINED_FILE), &["layer", "kept", "total"], r)?;
    }
    if let Some(g) = &bundle.gap_report {
        let path = dir.join(GAP_FILE);
        let mut text = serde_json::to_string_pretty(g).expect("gap report serializes");
        text.push('\n');
        fs::write(&path, text).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

// The header is written explicitly so an empty table still gets one.
fn write_rows<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::format("CSV", format!("{}: {e}", path.display()));
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::format("CSV", e.to_string()))?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reads back any of the bundle CSVs into its row type.
pub fn read_rows<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let text = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(text.as_slice());
    r.deserialize()
        .map(|row| row.map_err(|e| Error::format("CSV", format!("{}: {e}", path.display()))))
        .collect()
}

pub fn read_gap_report(path: impl AsRef<Path>) -> Result<GapReport> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format("gap JSON", e.to_string()))
}
