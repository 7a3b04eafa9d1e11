//! Dataset loading: IDX image/label pairs, headed CSV tables and the
//! bundled synthetic glyph images.

use std::fs;
use std::path::Path;

use microt_core::data::{split_indices, Dataset, Splits, SyntheticImages};
use microt_core::image::resize_bilinear;
use microt_core::Tensor;

use crate::config::{DataSource, PipelineConfig};
use crate::error::{CoreContext, PipelineError, Result};

const STAGE: &str = "ingest";

/// Steps applied to every raw sample, recorded in report headers.
pub const PREPROCESSING: &str = "bilinear resize to side x side (half-pixel centres); per-sample per-channel min-max to [0,1]; \
CSV columns min-max over the dataset";

/// A loaded dataset with its deterministic split.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetHandle {
    pub dataset: Dataset,
    pub splits: Splits,
    pub preprocessing: String,
}

impl DatasetHandle {
    pub fn new(dataset: Dataset, ratios: [u32; 3], seed: u64, preprocessing: impl Into<String>) -> Result<Self> {
        let splits = split_indices(dataset.len(), ratios, seed).stage(STAGE)?;
        Ok(DatasetHandle {
            dataset,
            splits,
            preprocessing: preprocessing.into(),
        })
    }

    pub fn train(&self) -> Dataset {
        self.dataset.subset(&self.splits.train)
    }

    pub fn test(&self) -> Dataset {
        self.dataset.subset(&self.splits.test)
    }

    pub fn val(&self) -> Dataset {
        self.dataset.subset(&self.splits.val)
    }
}

fn format_err(path: &Path, message: impl Into<String>) -> PipelineError {
    PipelineError::Format {
        stage: STAGE,
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| PipelineError::Io {
        stage: STAGE,
        path: path.to_path_buf(),
        source,
    })
}

/// Parses an unsigned-byte IDX file into `(dims, payload)`.
pub fn parse_idx(path: &Path, bytes: &[u8]) -> Result<(Vec<usize>, Vec<u8>)> {
    if bytes.len() < 4 || bytes[0] != 0 || bytes[1] != 0 {
        return Err(format_err(path, "bad IDX magic"));
    }
    if bytes[2] != 0x08 {
        return Err(format_err(path, format!("unsupported IDX element type {:#04x}", bytes[2])));
    }
    let ndims = bytes[3] as usize;
    let header = 4 + 4 * ndims;
    if ndims == 0 || bytes.len() < header {
        return Err(format_err(path, "truncated IDX header"));
    }
    let dims: Vec<usize> = bytes[4..header]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes(c.try_into().expect("4 bytes")) as usize)
        .collect();
    let n: usize = dims.iter().product();
    if bytes.len() - header != n {
        return Err(format_err(path, format!("IDX payload has {} bytes, header says {n}", bytes.len() - header)));
    }
    Ok((dims, bytes[header..].to_vec()))
}

/// Per-channel min-max of a `[c, h, w]` image; flat channels become zero.
pub fn min_max_channels(img: &Tensor) -> Tensor {
    let shape = img.shape().to_vec();
    let plane: usize = shape[1..].iter().product();
    let mut data = img.data().to_vec();
    for ch in data.chunks_mut(plane) {
        let lo = ch.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = ch.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let range = hi - lo;
        for v in ch.iter_mut() {
            *v = if range > 0.0 { (*v - lo) / range } else { 0.0 };
        }
    }
    Tensor::new(shape, data).expect("same shape, finite values")
}

fn prepare_image(img: &Tensor, side: usize) -> Result<Tensor> {
    let s = img.shape();
    let img = if s[1] != side || s[2] != side {
        resize_bilinear(img, side, side).stage(STAGE)?
    } else {
        img.clone()
    };
    Ok(min_max_channels(&img))
}

fn class_count(labels: &[u32]) -> usize {
    labels.iter().max().map_or(0, |&m| m as usize + 1)
}

/// Loads an IDX image file (`n × h × w` or `n × c × h × w`) and its label file.
pub fn ingest_idx(images: &Path, labels: &Path, side: usize) -> Result<Dataset> {
    let (dims, pixels) = parse_idx(images, &read(images)?)?;
    let (ldims, lbytes) = parse_idx(labels, &read(labels)?)?;
    let shape: Vec<usize> = match dims[..] {
        [_, h, w] => vec![1, h, w],
        [_, c, h, w] => vec![c, h, w],
        _ => return Err(format_err(images, "expected a 3- or 4-dimensional image file")),
    };
    if ldims.len() != 1 {
        return Err(format_err(labels, "label file must be one-dimensional"));
    }
    if ldims[0] != dims[0] {
        return Err(format_err(
            labels,
            format!("{} labels for {} samples", ldims[0], dims[0]),
        ));
    }
    let per: usize = shape.iter().product();
    let inputs = pixels
        .chunks_exact(per.max(1))
        .map(|px| {
            let t = Tensor::new(shape.clone(), px.iter().map(|&b| f64::from(b) / 255.0).collect()).stage(STAGE)?;
            prepare_image(&t, side)
        })
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<u32> = lbytes.iter().map(|&b| u32::from(b)).collect();
    let classes = class_count(&labels);
    Dataset::new(inputs, labels, classes).stage(STAGE)
}

/// Loads a headed CSV table of numeric features plus a `label` column
/// (the last column when none is named `label`). Every feature column is
/// min-max scaled to [0, 1] over the file.
pub fn ingest_csv(path: &Path) -> Result<Dataset> {
    let csv_err = |source| PipelineError::Csv {
        stage: STAGE,
        path: path.to_path_buf(),
        source,
    };
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path).map_err(csv_err)?;
    let headers = rdr.headers().map_err(csv_err)?.clone();
    if headers.len() < 2 {
        return Err(format_err(path, "need at least one feature column and a label column"));
    }
    let label_col = headers.iter().position(|h| h.trim() == "label").unwrap_or(headers.len() - 1);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let mut feats = Vec::with_capacity(rec.len() - 1);
        for (i, field) in rec.iter().enumerate() {
            let field = field.trim();
            if i == label_col {
                labels.push(field.parse::<u32>().map_err(|_| format_err(path, format!("row {}: bad label {field:?}", line + 1)))?);
            } else {
                let v: f64 = field.parse().map_err(|_| format_err(path, format!("row {}: bad value {field:?}", line + 1)))?;
                if !v.is_finite() {
                    return Err(format_err(path, format!("row {}: non-finite value", line + 1)));
                }
                feats.push(v);
            }
        }
        rows.push(feats);
    }
    if rows.is_empty() {
        return Err(format_err(path, "no samples"));
    }
    let dim = rows[0].len();
    for c in 0..dim {
        let lo = rows.iter().map(|r| r[c]).fold(f64::INFINITY, f64::min);
        let hi = rows.iter().map(|r| r[c]).fold(f64::NEG_INFINITY, f64::max);
        for r in rows.iter_mut() {
            r[c] = if hi > lo { (r[c] - lo) / (hi - lo) } else { 0.0 };
        }
    }
    let inputs = rows.into_iter().map(Tensor::vector).collect();
    let classes = class_count(&labels).max(2);
    Dataset::new(inputs, labels, classes).stage(STAGE)
}

/// Which synthetic glyph population a source stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Public,
    Local,
}

/// Loads the public or local dataset named by the config.
pub fn load_source(cfg: &PipelineConfig, role: Role, seed: u64) -> Result<Dataset> {
    let src = match role {
        Role::Public => &cfg.data.public,
        Role::Local => &cfg.data.local,
    };
    match src {
        DataSource::Synthetic { samples } => {
            let gen = match role {
                Role::Public => SyntheticImages::public(cfg.data.side),
                Role::Local => SyntheticImages::local(cfg.data.side),
            };
            gen.generate(*samples, seed).stage(STAGE)
        }
        DataSource::Idx { images, labels } => ingest_idx(&cfg.resolve(images), &cfg.resolve(labels), cfg.data.side),
        DataSource::Csv { path } => ingest_csv(&cfg.resolve(path)),
    }
}
