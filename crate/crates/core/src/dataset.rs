//! Dataset manifests: content ids mapped to MOS labels and media references.
//!
//! A manifest is a UTF-8 comma-separated table with header
//! `content_id,media_ref,mos,mos_sigma`. Dataset-level metadata is given either as a
//! block of `# key = value` lines before the header, or in a companion file
//! `<manifest>.meta` holding the same `key = value` lines. Recognized keys are
//! `name`, `range_min`, `range_max` and `kind` (`image` or `video`).

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed score interval `[min, max]` with `min < max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreRange {
    pub min: f64,
    pub max: f64,
}

impl ScoreRange {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(min.is_finite() && max.is_finite()) || min >= max {
            return Err(Error::Validation(format!(
                "score range [{min}, {max}] must be finite with min < max"
            )));
        }
        Ok(ScoreRange { min, max })
    }

    pub fn len(&self) -> f64 {
        self.max - self.min
    }

    pub fn contains(&self, y: f64) -> bool {
        y >= self.min && y <= self.max
    }

    /// Affine map of `y` from this range onto `target`.
    pub fn map_to(&self, target: &ScoreRange, y: f64) -> f64 {
        target.min + target.len() * (y - self.min) / self.len()
    }
}

impl fmt::Display for ScoreRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.min, self.max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MediaKind {
    Image,
    Video,
}

impl FromStr for MediaKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "image" => Ok(MediaKind::Image),
            "video" => Ok(MediaKind::Video),
            other => Err(Error::parse("kind", format!("unknown media kind `{other}`"))),
        }
    }
}

impl fmt::Display for MediaKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MediaKind::Image => "image",
            MediaKind::Video => "video",
        })
    }
}

/// One content item with its subjective score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub content_id: String,
    pub media_ref: Option<String>,
    pub mos: f64,
    /// Carried through from the label file; no computation reads it.
    pub mos_sigma: Option<f64>,
}

/// A validated collection of samples over a declared score range.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub kind: MediaKind,
    score_range: ScoreRange,
    samples: Vec<Sample>,
    base_dir: Option<PathBuf>,
}

impl Dataset {
    /// Builds a dataset and checks every invariant.
    pub fn new(
        name: impl Into<String>,
        kind: MediaKind,
        score_range: ScoreRange,
        samples: Vec<Sample>,
    ) -> Result<Self> {
        let d = Dataset {
            name: name.into(),
            kind,
            score_range,
            samples,
            base_dir: None,
        };
        d.validate()?;
        Ok(d)
    }

    fn validate(&self) -> Result<()> {
        if self.samples.is_empty() {
            return Err(Error::Validation(format!("dataset `{}` has no samples", self.name)));
        }
        let mut seen = HashSet::with_capacity(self.samples.len());
        for s in &self.samples {
            if s.content_id.is_empty() {
                return Err(Error::Validation("empty content_id".into()));
            }
            if !seen.insert(s.content_id.as_str()) {
                return Err(Error::DuplicateId(s.content_id.clone()));
            }
            if !s.mos.is_finite() || !self.score_range.contains(s.mos) {
                return Err(Error::Validation(format!(
                    "mos {} of `{}` outside score range {}",
                    s.mos, s.content_id, self.score_range
                )));
            }
            if let Some(sigma) = s.mos_sigma {
                if !(sigma.is_finite() && sigma >= 0.0) {
                    return Err(Error::Validation(format!(
                        "mos_sigma {sigma} of `{}` must be a nonnegative number",
                        s.content_id
                    )));
                }
            }
            if let Some(path) = self.resolve_media(s) {
                if path.exists() {
                    let ok = match self.kind {
                        MediaKind::Video => path.is_dir(),
                        MediaKind::Image => path.is_file(),
                    };
                    if !ok {
                        return Err(Error::Validation(format!(
                            "media_ref `{}` of `{}` must be {} for a {} dataset",
                            path.display(),
                            s.content_id,
                            if self.kind == MediaKind::Video { "a frame directory" } else { "a file" },
                            self.kind
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn score_range(&self) -> ScoreRange {
        self.score_range
    }

    pub fn scores(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.mos).collect()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.samples.iter().map(|s| s.content_id.as_str()).collect()
    }

    /// Directory that relative media references are resolved against.
    pub fn base_dir(&self) -> Option<&Path> {
        self.base_dir.as_deref()
    }

    pub fn with_base_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.base_dir = Some(dir.into());
        self
    }

    pub fn resolve_media(&self, sample: &Sample) -> Option<PathBuf> {
        let r = Path::new(sample.media_ref.as_deref()?);
        Some(match (&self.base_dir, r.is_relative()) {
            (Some(base), true) => base.join(r),
            _ => r.to_path_buf(),
        })
    }

    /// Maps every score affinely from the current range onto `target`.
    pub fn normalize_scores(&self, target: ScoreRange) -> Dataset {
        let src = self.score_range;
        let samples = self
            .samples
            .iter()
            .map(|s| Sample {
                // clamp guards the last ulp at the endpoints
                mos: src.map_to(&target, s.mos).clamp(target.min, target.max),
                ..s.clone()
            })
            .collect();
        Dataset {
            name: self.name.clone(),
            kind: self.kind,
            score_range: target,
            samples,
            base_dir: self.base_dir.clone(),
        }
    }
}

#[derive(Debug, Default)]
struct Meta {
    name: Option<String>,
    range_min: Option<f64>,
    range_max: Option<f64>,
    kind: Option<MediaKind>,
}

impl Meta {
    fn apply_line(&mut self, line: &str, context: &str) -> Result<()> {
        let line = line.trim();
        if line.is_empty() {
            return Ok(());
        }
        let (key, value) = line
            .split_once('=')
            .or_else(|| line.split_once(':'))
            .ok_or_else(|| Error::parse(context, format!("expected `key = value`, got `{line}`")))?;
        let value = value.trim();
        let number = |v: &str| {
            v.parse::<f64>()
                .map_err(|e| Error::parse(context, format!("`{key}`: {e}")))
        };
        match key.trim() {
            "name" => self.name = Some(value.to_string()),
            "range_min" => self.range_min = Some(number(value)?),
            "range_max" => self.range_max = Some(number(value)?),
            "kind" => self.kind = Some(value.parse()?),
            other => log::warn!("{context}: ignoring unknown metadata key `{other}`"),
        }
        Ok(())
    }

    fn is_complete(&self) -> bool {
        self.range_min.is_some() && self.range_max.is_some()
    }
}

fn companion_meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

/// Loads and validates a manifest file.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let context = path.display().to_string();

    let mut meta = Meta::default();
    let mut body_start = 0;
    for line in text.split_inclusive('\n') {
        let trimmed = line.trim();
        if let Some(rest) = trimmed.strip_prefix('#') {
            meta.apply_line(rest, &context)?;
        } else if !trimmed.is_empty() {
            break;
        }
        body_start += line.len();
    }
    if !meta.is_complete() {
        let meta_path = companion_meta_path(path);
        if meta_path.exists() {
            let meta_text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
            let meta_context = meta_path.display().to_string();
            for line in meta_text.lines() {
                let line = line.trim();
                if !line.starts_with('#') {
                    meta.apply_line(line, &meta_context)?;
                }
            }
        }
    }
    let (Some(min), Some(max)) = (meta.range_min, meta.range_max) else {
        return Err(Error::parse(&context, "missing `range_min`/`range_max` metadata"));
    };
    let range = ScoreRange::new(min, max)?;
    let name = meta.name.unwrap_or_else(|| {
        path.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    });

    let samples = parse_rows(&text[body_start..], &context)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let d = Dataset {
        name,
        kind: meta.kind.unwrap_or(MediaKind::Image),
        score_range: range,
        samples,
        base_dir: Some(base),
    };
    d.validate()?;
    Ok(d)
}

fn parse_rows(body: &str, context: &str) -> Result<Vec<Sample>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(body.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::parse(context, e))?
        .clone();
    let column = |name: &str| headers.iter().position(|h| h == name);
    let id_col = column("content_id")
        .ok_or_else(|| Error::parse(context, "header lacks `content_id`"))?;
    let mos_col = column("mos").ok_or_else(|| Error::parse(context, "header lacks `mos`"))?;
    let media_col = column("media_ref");
    let sigma_col = column("mos_sigma");

    let mut samples = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| Error::parse(context, format!("row {line}: {e}")))?;
        let field = |col: Option<usize>| col.and_then(|c| record.get(c)).filter(|v| !v.is_empty());
        let content_id = field(Some(id_col))
            .ok_or_else(|| Error::parse(context, format!("row {line}: empty content_id")))?
            .to_string();
        let mos = field(Some(mos_col))
            .ok_or_else(|| Error::parse(context, format!("row {line}: empty mos")))?
            .parse::<f64>()
            .map_err(|e| Error::parse(context, format!("row {line}: mos: {e}")))?;
        let mos_sigma = field(sigma_col)
            .map(|v| v.parse::<f64>())
            .transpose()
            .map_err(|e| Error::parse(context, format!("row {line}: mos_sigma: {e}")))?;
        samples.push(Sample {
            content_id,
            media_ref: field(media_col).map(str::to_string),
            mos,
            mos_sigma,
        });
    }
    Ok(samples)
}

/// Writes a manifest with an embedded metadata block.
pub fn save_manifest(d: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    out.push_str(&format!("# name = {}\n", d.name));
    out.push_str(&format!("# range_min = {}\n", d.score_range.min));
    out.push_str(&format!("# range_max = {}\n", d.score_range.max));
    out.push_str(&format!("# kind = {}\n", d.kind));
    let mut writer = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::parse(path.display().to_string(), e);
    writer
        .write_record(["content_id", "media_ref", "mos", "mos_sigma"])
        .map_err(err)?;
    for s in &d.samples {
        writer
            .write_record([
                s.content_id.clone(),
                s.media_ref.clone().unwrap_or_default(),
                format!("{:?}", s.mos),
                s.mos_sigma.map(|v| format!("{v:?}")).unwrap_or_default(),
            ])
            .map_err(err)?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::parse(path.display().to_string(), e))?;
    out.push_str(&String::from_utf8_lossy(&bytes));
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(dir: &tempfile::TempDir, name: &str, body: &str) -> PathBuf {
        let p = dir.path().join(name);
        let mut f = fs::File::create(&p).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        p
    }

    fn sample(id: &str, mos: f64) -> Sample {
        Sample {
            content_id: id.into(),
            media_ref: None,
            mos,
            mos_sigma: None,
        }
    }

    #[test]
    fn loads_three_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(
            &dir,
            "m.csv",
            "# name = toy\n# range_min = 1\n# range_max = 5\n# kind = image\n\
             content_id,media_ref,mos,mos_sigma\na,a.png,1.2,0.3\nb,,3.3,\nc,c.png,4.9,\n",
        );
        let d = load_manifest(&p).unwrap();
        assert_eq!(d.name, "toy");
        assert_eq!(d.len(), 3);
        assert_eq!(d.scores(), vec![1.2, 3.3, 4.9]);
        assert_eq!(d.score_range(), ScoreRange::new(1.0, 5.0).unwrap());
        assert_eq!(d.samples()[0].mos_sigma, Some(0.3));
        assert_eq!(d.samples()[1].media_ref, None);
        assert_eq!(d.resolve_media(&d.samples()[0]), Some(dir.path().join("a.png")));
    }

    #[test]
    fn duplicate_id_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(
            &dir,
            "m.csv",
            "# range_min = 1\n# range_max = 5\ncontent_id,media_ref,mos,mos_sigma\nx,,2,\nx,,3,\n",
        );
        match load_manifest(&p) {
            Err(Error::DuplicateId(id)) => assert_eq!(id, "x"),
            other => panic!("expected duplicate error, got {other:?}"),
        }
    }

    #[test]
    fn out_of_range_and_empty_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(
            &dir,
            "m.csv",
            "# range_min = 1\n# range_max = 5\ncontent_id,media_ref,mos,mos_sigma\nx,,5.5,\n",
        );
        assert!(matches!(load_manifest(&p), Err(Error::Validation(_))));
        let p = write_tmp(
            &dir,
            "e.csv",
            "# range_min = 1\n# range_max = 5\ncontent_id,media_ref,mos,mos_sigma\n",
        );
        assert!(matches!(load_manifest(&p), Err(Error::Validation(_))));
        let p = write_tmp(
            &dir,
            "s.csv",
            "# range_min = 1\n# range_max = 5\ncontent_id,media_ref,mos,mos_sigma\nx,,2,-1\n",
        );
        assert!(matches!(load_manifest(&p), Err(Error::Validation(_))));
    }

    #[test]
    fn malformed_row_is_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(
            &dir,
            "m.csv",
            "# range_min = 1\n# range_max = 5\ncontent_id,media_ref,mos,mos_sigma\nx,,abc,\n",
        );
        assert!(matches!(load_manifest(&p), Err(Error::Parse { .. })));
        let p = write_tmp(&dir, "n.csv", "content_id,media_ref,mos,mos_sigma\nx,,2,\n");
        assert!(matches!(load_manifest(&p), Err(Error::Parse { .. })));
        let p = write_tmp(&dir, "r.csv", "# range_min = 5\n# range_max = 5\ncontent_id,mos\nx,5\n");
        assert!(matches!(load_manifest(&p), Err(Error::Validation(_))));
    }

    #[test]
    fn companion_metadata_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(&dir, "vqc.csv", "content_id,media_ref,mos,mos_sigma\nv1,,57.948,\nv2,,12,\n");
        write_tmp(&dir, "vqc.csv.meta", "name = LIVE-VQC\nrange_min = 0\nrange_max = 100\nkind = video\n");
        let d = load_manifest(&p).unwrap();
        assert_eq!(d.name, "LIVE-VQC");
        assert_eq!(d.kind, MediaKind::Video);
        assert_eq!(d.score_range().max, 100.0);
    }

    #[test]
    fn video_media_must_be_directory() {
        let dir = tempfile::tempdir().unwrap();
        write_tmp(&dir, "clip.png", "not a dir");
        let p = write_tmp(
            &dir,
            "m.csv",
            "# range_min = 1\n# range_max = 5\n# kind = video\ncontent_id,media_ref,mos,mos_sigma\nx,clip.png,2,\n",
        );
        assert!(matches!(load_manifest(&p), Err(Error::Validation(_))));
    }

    #[test]
    fn normalize_examples() {
        let src = ScoreRange::new(0.0, 100.0).unwrap();
        let d = Dataset::new(
            "n",
            MediaKind::Video,
            src,
            vec![sample("a", 50.0), sample("b", 0.0), sample("c", 57.948), sample("d", 100.0)],
        )
        .unwrap();
        let n = d.normalize_scores(ScoreRange::new(1.0, 5.0).unwrap());
        let s = n.scores();
        assert_eq!(s[0], 3.0);
        assert_eq!(s[1], 1.0);
        approx::assert_abs_diff_eq!(s[2], 3.31792, epsilon = 1e-12);
        assert_eq!(s[3], 5.0);
        assert_eq!(n.score_range(), ScoreRange::new(1.0, 5.0).unwrap());
    }

    #[test]
    fn save_then_load_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let d = Dataset::new(
            "round trip",
            MediaKind::Image,
            ScoreRange::new(0.0, 100.0).unwrap(),
            vec![
                Sample {
                    content_id: "p,1".into(),
                    media_ref: Some("imgs/p1.jpg".into()),
                    mos: 49.4261234567891,
                    mos_sigma: Some(12.25),
                },
                sample("p2", 0.1 + 0.2),
            ],
        )
        .unwrap();
        let p = dir.path().join("out.csv");
        save_manifest(&d, &p).unwrap();
        let back = load_manifest(&p).unwrap();
        assert_eq!(back.name, d.name);
        assert_eq!(back.kind, d.kind);
        assert_eq!(back.score_range(), d.score_range());
        assert_eq!(back.samples(), d.samples());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn normalization_preserves_order(
                scores in proptest::collection::vec(0.0f64..100.0, 2..60),
                lo in -10.0f64..10.0,
                width in 0.5f64..50.0,
            ) {
                let samples: Vec<Sample> = scores
                    .iter()
                    .enumerate()
                    .map(|(i, &m)| sample(&format!("s{i}"), m))
                    .collect();
                let d = Dataset::new("p", MediaKind::Image, ScoreRange::new(0.0, 100.0).unwrap(), samples).unwrap();
                let n = d.normalize_scores(ScoreRange::new(lo, lo + width).unwrap());
                let (a, b) = (d.scores(), n.scores());
                for i in 0..a.len() {
                    for j in 0..a.len() {
                        if a[i] < a[j] {
                            prop_assert!(b[i] <= b[j]);
                        }
                    }
                }
            }
        }
    }
}
