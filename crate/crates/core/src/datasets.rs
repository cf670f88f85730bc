//! Dataset container, loaders for IDX and CSV files, and synthetic data.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::Vector;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    #[default]
    Train,
    Val,
    Test,
}

/// Labelled samples with a uniform feature dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: Vec<Vector>,
    labels: Vec<usize>,
    num_classes: usize,
    pub split: SplitTag,
}

impl Dataset {
    pub fn new(features: Vec<Vector>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::shape(
                "Dataset::new",
                format!("{} feature rows", features.len()),
                format!("{} labels", labels.len()),
            ));
        }
        if let Some(first) = features.first() {
            let dim = first.len();
            if let Some((i, f)) = features.iter().enumerate().find(|(_, f)| f.len() != dim) {
                return Err(Error::shape(
                    "Dataset::new",
                    format!("dimension {dim}"),
                    format!("sample {i} of {}", f.len()),
                ));
            }
        }
        if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= num_classes) {
            return Err(Error::invalid(format!(
                "label {l} of sample {i} is not below class count {num_classes}"
            )));
        }
        Ok(Dataset {
            features,
            labels,
            num_classes,
            split: SplitTag::Train,
        })
    }

    pub fn with_split(mut self, split: SplitTag) -> Self {
        self.split = split;
        self
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Feature dimension, 0 for an empty dataset.
    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, |f| f.len())
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self) -> &[Vector] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Vector, usize)> {
        self.features.iter().zip(self.labels.iter().copied())
    }

    fn subset(&self, idx: &[usize], split: SplitTag) -> Dataset {
        Dataset {
            features: idx.iter().map(|&i| self.features[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
            split,
        }
    }

    /// Per-feature mean and standard deviation, for use with [`Dataset::standardize_with`].
    pub fn feature_stats(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.len().max(1) as f64;
        let d = self.dim();
        let mut mean = vec![0.0; d];
        for f in &self.features {
            mean.iter_mut().zip(f.iter()).for_each(|(m, x)| *m += x / n);
        }
        let mut var = vec![0.0; d];
        for f in &self.features {
            var.iter_mut()
                .zip(f.iter().zip(&mean))
                .for_each(|(v, (x, m))| *v += (x - m) * (x - m) / n);
        }
        (mean, var.into_iter().map(f64::sqrt).collect())
    }

    /// Shift and scale every feature; zero-variance features are only centred.
    pub fn standardize_with(&mut self, mean: &[f64], std: &[f64]) {
        for f in &mut self.features {
            for ((x, m), s) in f.iter_mut().zip(mean).zip(std) {
                *x = if *s > 0.0 { (*x - m) / s } else { *x - m };
            }
        }
    }
}

const IDX_U8_TENSOR: u32 = 0x0000_0803;
const IDX_U8_VECTOR: u32 = 0x0000_0801;

struct IdxTensor {
    dims: Vec<usize>,
    payload: Vec<u8>,
}

fn parse_idx(bytes: &[u8], expected_magic: u32, what: &str) -> Result<IdxTensor> {
    let word = |i: usize| -> Result<u32> {
        bytes
            .get(4 * i..4 * i + 4)
            .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
            .ok_or_else(|| Error::format("IDX", format!("{what}: truncated header")))
    };
    let magic = word(0)?;
    if magic != expected_magic {
        return Err(Error::format(
            "IDX",
            format!("{what}: bad magic, expected {expected_magic:#010x}, found {magic:#010x}"),
        ));
    }
    let rank = (magic & 0xff) as usize;
    let dims = (1..=rank)
        .map(|i| word(i).map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let header = 4 * (rank + 1);
    let expected: usize = dims.iter().product();
    let actual = bytes.len() - header;
    if actual != expected {
        return Err(Error::format(
            "IDX",
            format!(
                "{what}: payload has {actual} bytes, header dimensions {dims:?} need {expected}{}",
                if actual < expected {
                    " (truncated)"
                } else {
                    ""
                }
            ),
        ));
    }
    Ok(IdxTensor {
        dims,
        payload: bytes[header..].to_vec(),
    })
}

/// Parses an IDX image tensor (`0x00000803`) and label vector
/// (`0x00000801`). Pixels are scaled to `[0, 1]`. The class count is one
/// more than the largest label.
pub fn parse_idx_pair(images: &[u8], labels: &[u8]) -> Result<Dataset> {
    let images = parse_idx(images, IDX_U8_TENSOR, "images")?;
    let labels = parse_idx(labels, IDX_U8_VECTOR, "labels")?;
    let n = images.dims[0];
    if labels.dims[0] != n {
        return Err(Error::format(
            "IDX",
            format!("{n} images but {} labels", labels.dims[0]),
        ));
    }
    let dim: usize = images.dims[1..].iter().product();
    let features = if dim == 0 {
        vec![Vector::zeros(0); n]
    } else {
        images
            .payload
            .chunks_exact(dim)
            .map(|px| {
                Vector::from_vec_unchecked(px.iter().map(|&p| f64::from(p) / 255.0).collect())
            })
            .collect()
    };
    let labels: Vec<usize> = labels.payload.iter().map(|&l| l as usize).collect();
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    Dataset::new(features, labels, classes)
}

pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    let images = fs::read(ip).map_err(|e| Error::io(ip, e))?;
    let labels = fs::read(lp).map_err(|e| Error::io(lp, e))?;
    parse_idx_pair(&images, &labels)
}

/// Encodes images (each `rows * cols` bytes) and labels as an IDX pair.
pub fn encode_idx_pair(
    images: &[Vec<u8>],
    rows: u32,
    cols: u32,
    labels: &[u8],
) -> (Vec<u8>, Vec<u8>) {
    let mut img = Vec::new();
    img.extend_from_slice(&IDX_U8_TENSOR.to_be_bytes());
    img.extend_from_slice(&(images.len() as u32).to_be_bytes());
    img.extend_from_slice(&rows.to_be_bytes());
    img.extend_from_slice(&cols.to_be_bytes());
    images.iter().for_each(|i| img.extend_from_slice(i));
    let mut lab = Vec::new();
    lab.extend_from_slice(&IDX_U8_VECTOR.to_be_bytes());
    lab.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    lab.extend_from_slice(labels);
    (img, lab)
}

/// Reads a headed numeric CSV. Every column other than `label_column` is a
/// feature, in header order.
pub fn load_csv(path: impl AsRef<Path>, label_column: &str) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text[..], label_column)
}

pub fn parse_csv<R: std::io::Read>(input: R, label_column: &str) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(input);
    let headers = reader
        .headers()
        .map_err(|e| Error::format("CSV", e.to_string()))?
        .clone();
    let label_idx = headers
        .iter()
        .position(|h| h.trim() == label_column)
        .ok_or_else(|| {
            Error::format("CSV", format!("no column named `{label_column}` in header"))
        })?;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| Error::format("CSV", format!("row {row}: {e}")))?;
        if record.len() != headers.len() {
            return Err(Error::format(
                "CSV",
                format!(
                    "row {row}: {} fields, header has {}",
                    record.len(),
                    headers.len()
                ),
            ));
        }
        let mut f = Vec::with_capacity(headers.len() - 1);
        for (c, cell) in record.iter().enumerate() {
            let cell = cell.trim();
            if c == label_idx {
                let l = cell.parse::<usize>().map_err(|_| {
                    Error::format(
                        "CSV",
                        format!("row {row}: label `{cell}` is not a class index"),
                    )
                })?;
                labels.push(l);
            } else {
                let x = cell
                    .parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| {
                        Error::format(
                            "CSV",
                            format!(
                                "row {row}, column `{}`: `{cell}` is not a finite number",
                                &headers[c]
                            ),
                        )
                    })?;
                f.push(x);
            }
        }
        features.push(Vector::from_vec_unchecked(f));
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    Dataset::new(features, labels, classes)
}

/// Writes `ds` as CSV with feature columns `x0..x{D-1}` followed by `label`.
pub fn write_csv<W: std::io::Write>(ds: &Dataset, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    let csv_err = |e: csv::Error| Error::format("CSV", e.to_string());
    let mut header: Vec<String> = (0..ds.dim()).map(|j| format!("x{j}")).collect();
    header.push("label".into());
    w.write_record(&header).map_err(csv_err)?;
    for (f, l) in ds.iter() {
        let mut rec: Vec<String> = f.iter().map(|x| x.to_string()).collect();
        rec.push(l.to_string());
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::format("CSV", e.to_string()))
}

/// `classes` isotropic unit-variance Gaussian blobs in `dim` dimensions.
/// Class `k` is centred at `separation * u_k`, where the `u_k` are random
/// unit directions drawn from `seed`.
pub fn synth_gaussians(
    classes: usize,
    dim: usize,
    per_class: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset> {
    if classes < 2 || dim < 1 {
        return Err(Error::invalid(format!(
            "synthetic data needs at least 2 classes and 1 dimension, got {classes} and {dim}"
        )));
    }
    if !separation.is_finite() || separation < 0.0 {
        return Err(Error::invalid(format!(
            "separation must be nonnegative, got {separation}"
        )));
    }
    let centers = class_centers(classes, dim, separation, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let mut features = Vec::with_capacity(classes * per_class);
    let mut labels = Vec::with_capacity(classes * per_class);
    for _ in 0..per_class {
        for (k, c) in centers.iter().enumerate() {
            let x = c
                .iter()
                .map(|m| {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    m + e
                })
                .collect();
            features.push(Vector::from_vec_unchecked(x));
            labels.push(k);
        }
    }
    Dataset::new(features, labels, classes)
}

/// The class means used by [`synth_gaussians`] for the same arguments.
pub fn class_centers(classes: usize, dim: usize, separation: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..classes)
        .map(|_| {
            let u: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let n = u
                .iter()
                .map(|x| x * x)
                .sum::<f64>()
                .sqrt()
                .max(f64::MIN_POSITIVE);
            u.into_iter().map(|x| separation * x / n).collect()
        })
        .collect()
}

/// Concatenates `window` consecutive frames centred on each frame, repeating
/// the first and last frame at the edges. Labels follow the centre frame.
pub fn context_stack(frames: &Dataset, window: usize) -> Result<Dataset> {
    if frames.is_empty() {
        return Err(Error::invalid("cannot context-stack an empty sequence"));
    }
    if window % 2 == 0 {
        return Err(Error::invalid(format!(
            "context window must be odd, got {window}"
        )));
    }
    let n = frames.len() as isize;
    let half = (window / 2) as isize;
    let features = (0..n)
        .map(|t| {
            let mut x = Vec::with_capacity(window * frames.dim());
            for o in -half..=half {
                let i = (t + o).clamp(0, n - 1) as usize;
                x.extend_from_slice(&frames.features[i]);
            }
            Vector::from_vec_unchecked(x)
        })
        .collect();
    Ok(Dataset {
        features,
        labels: frames.labels.clone(),
        num_classes: frames.num_classes,
        split: frames.split,
    })
}

/// Seeded shuffle followed by contiguous train/val/test slices.
pub fn split(
    ds: &Dataset,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<(Dataset, Dataset, Dataset)> {
    let (a, b, c) = fractions;
    if !(a > 0.0 && b > 0.0 && c > 0.0) || ((a + b + c) - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "split fractions must be positive and sum to 1, got ({a}, {b}, {c})"
        )));
    }
    let n = ds.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((n as f64) * a).round() as usize;
    let n_val = (((n as f64) * b).round() as usize).min(n - n_train);
    let train = ds.subset(&idx[..n_train], SplitTag::Train);
    let val = ds.subset(&idx[n_train..n_train + n_val], SplitTag::Val);
    let test = ds.subset(&idx[n_train + n_val..], SplitTag::Test);
    let mut present = vec![false; ds.num_classes];
    train.labels.iter().for_each(|&l| present[l] = true);
    if let Some(k) = present.iter().position(|p| !p) {
        return Err(Error::invalid(format!(
            "class {k} is absent from the training split"
        )));
    }
    Ok((train, val, test))
}
