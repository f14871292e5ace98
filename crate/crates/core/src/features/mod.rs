//! Per-sample feature vectors: built-in NSS extraction, temporal pooling and
//! feature-table import/export.

mod nss;
mod plane;

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::dataset::{Dataset, MediaKind};
use crate::error::{Error, Result};

pub use nss::{
    brisque_features, fit_aggd, fit_ggd, mscn_coefficients, pairwise_products, pool_temporal,
    AggdFit, GgdFit, BRISQUE_DIM, FEATURES_PER_SCALE, MSCN_C, ORIENTATIONS,
};
pub use plane::{ImagePlane, Plane, MIN_SIDE};

pub const BRISQUE_SET_NAME: &str = "brisque";

/// Fixed-length feature vectors aligned to a dataset's content ids.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub feature_set_name: String,
    dim: usize,
    ids: Vec<String>,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(name: impl Into<String>, ids: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if ids.len() != rows.len() {
            return Err(Error::Validation(format!(
                "{} ids for {} feature rows",
                ids.len(),
                rows.len()
            )));
        }
        let dim = rows.first().map_or(0, Vec::len);
        if dim == 0 {
            return Err(Error::Validation("feature rows must be nonempty".into()));
        }
        let mut data = Vec::with_capacity(dim * rows.len());
        for (r, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: row.len(),
                });
            }
            if let Some(c) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { row: r, column: c });
            }
            data.extend_from_slice(row);
        }
        Ok(FeatureMatrix {
            feature_set_name: name.into(),
            dim,
            ids,
            data,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_rows(&self) -> usize {
        self.ids.len()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Vec<Vec<f64>> {
        indices.iter().map(|&i| self.row(i).to_vec()).collect()
    }

    /// Checks that rows follow the dataset's sample order one-to-one.
    pub fn check_alignment(&self, d: &Dataset) -> Result<()> {
        if self.n_rows() != d.len() {
            return Err(Error::Validation(format!(
                "feature matrix has {} rows, dataset has {} samples",
                self.n_rows(),
                d.len()
            )));
        }
        for (id, s) in self.ids.iter().zip(d.samples()) {
            if *id != s.content_id {
                return Err(Error::Validation(format!(
                    "feature row `{id}` out of order, expected `{}`",
                    s.content_id
                )));
            }
        }
        Ok(())
    }

    /// Writes `content_id,f0,...` rows with shortest round-trip decimals.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut writer = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| Error::parse(path.display().to_string(), e);
        let mut header = vec!["content_id".to_string()];
        header.extend((0..self.dim).map(|j| format!("f{j}")));
        writer.write_record(&header).map_err(err)?;
        for (id, row) in self.ids.iter().zip(self.rows()) {
            let mut rec = vec![id.clone()];
            rec.extend(row.iter().map(|v| format!("{v:?}")));
            writer.write_record(&rec).map_err(err)?;
        }
        let bytes = writer
            .into_inner()
            .map_err(|e| Error::parse(path.display().to_string(), e))?;
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }
}

/// Reads a feature table and aligns it to the dataset's sample order.
pub fn import_features(path: impl AsRef<Path>, d: &Dataset) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let context = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| Error::parse(&context, e))?.clone();
    if headers.get(0) != Some("content_id") || headers.len() < 2 {
        return Err(Error::parse(&context, "header must be `content_id,f0,f1,...`"));
    }
    let dim = headers.len() - 1;

    let mut by_id: HashMap<String, Vec<f64>> = HashMap::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::parse(&context, format!("row {r}: {e}")))?;
        if record.len() != dim + 1 {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: record.len().saturating_sub(1),
            });
        }
        let id = record[0].to_string();
        let mut row = Vec::with_capacity(dim);
        for c in 0..dim {
            let v = record[c + 1]
                .parse::<f64>()
                .map_err(|_| Error::NonFinite { row: r, column: c })?;
            if !v.is_finite() {
                return Err(Error::NonFinite { row: r, column: c });
            }
            row.push(v);
        }
        if by_id.insert(id.clone(), row).is_some() {
            return Err(Error::DuplicateId(id));
        }
    }

    let mut ids = Vec::with_capacity(d.len());
    let mut rows = Vec::with_capacity(d.len());
    for s in d.samples() {
        let row = by_id
            .remove(&s.content_id)
            .ok_or_else(|| Error::MissingId(s.content_id.clone()))?;
        ids.push(s.content_id.clone());
        rows.push(row);
    }
    if let Some(extra) = by_id.into_keys().min() {
        return Err(Error::UnexpectedId(extra));
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    FeatureMatrix::new(name, ids, rows)
}

const FRAME_EXTENSIONS: &[&str] = &["png", "jpg", "jpeg", "bmp", "tif", "tiff"];

/// Image files in a frame directory, sorted by file name.
pub fn list_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut frames: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| FRAME_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        })
        .collect();
    frames.sort();
    if frames.is_empty() {
        return Err(Error::Validation(format!("no frames in {}", dir.display())));
    }
    Ok(frames)
}

/// Content-addressed cache of per-file feature vectors.
#[derive(Debug, Clone)]
pub struct FeatureCache {
    dir: PathBuf,
}

impl FeatureCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        FeatureCache { dir: dir.into() }
    }

    fn entry(&self, bytes: &[u8]) -> PathBuf {
        let digest = Sha256::digest(bytes);
        let key: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        self.dir.join(BRISQUE_SET_NAME).join(format!("{key}.json"))
    }

    fn get_or_compute(&self, path: &Path) -> Result<Vec<f64>> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let entry = self.entry(&bytes);
        if let Ok(text) = fs::read_to_string(&entry) {
            if let Ok(v) = serde_json::from_str::<Vec<f64>>(&text) {
                if v.len() == BRISQUE_DIM {
                    return Ok(v);
                }
            }
        }
        let v = image_features(path)?;
        if let Some(parent) = entry.parent() {
            if fs::create_dir_all(parent).is_ok() {
                let _ = fs::write(&entry, serde_json::to_string(&v).unwrap_or_default());
            }
        }
        Ok(v)
    }
}

fn image_features(path: &Path) -> Result<Vec<f64>> {
    let img = ImagePlane::open(path)?;
    brisque_features(&img).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn file_features(path: &Path, cache: Option<&FeatureCache>) -> Result<Vec<f64>> {
    match cache {
        Some(c) => c.get_or_compute(path),
        None => image_features(path),
    }
}

/// BRISQUE features for one sample: a single image, or the pooled frames of a
/// frame directory.
pub fn extract_media(path: &Path, kind: MediaKind, cache: Option<&FeatureCache>) -> Result<Vec<f64>> {
    match kind {
        MediaKind::Image => file_features(path, cache),
        MediaKind::Video => {
            let frames = list_frames(path)?
                .iter()
                .map(|f| file_features(f, cache))
                .collect::<Result<Vec<_>>>()?;
            pool_temporal(&frames)
        }
    }
}

/// Extracts BRISQUE features for every sample of `d`, in parallel over samples.
pub fn extract_dataset(d: &Dataset, cache: Option<&FeatureCache>) -> Result<FeatureMatrix> {
    let rows = d
        .samples()
        .par_iter()
        .map(|s| {
            let path = d.resolve_media(s).ok_or_else(|| {
                Error::Validation(format!("sample `{}` has no media_ref", s.content_id))
            })?;
            extract_media(&path, d.kind, cache)
        })
        .collect::<Result<Vec<_>>>()?;
    let ids = d.samples().iter().map(|s| s.content_id.clone()).collect();
    FeatureMatrix::new(BRISQUE_SET_NAME, ids, rows)
}
