//! Dataset handling: PPM stereo pairs, manifests, patch tiling,
//! scene-disjoint splits, and the synthetic desk-scale generator.

mod patch;
mod ppm;
mod split;
mod synthetic;

pub use patch::{aggregate_score, patch_grid, tile_patches, MosLabels, PatchBatch, PatchOrigin};
pub use ppm::{decode_ppm, encode_ppm, write_ppm};
pub use split::{make_split, read_split_csv, write_split_csv, SplitPlan, TrainFraction};
pub use synthetic::{generate_synthetic, synthetic_mos, synthetic_stereo_mos, SynthConfig};

use std::collections::HashSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::PATCH_SIZE;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{path}: not a binary PPM: magic `{found}` (only \"P6\" is supported)")]
    PpmMagic { path: PathBuf, found: String },
    #[error("{path}: unsupported maxval {got} (only 255)")]
    PpmMaxval { path: PathBuf, got: usize },
    #[error("{path}: malformed PPM header: {detail}")]
    PpmHeader { path: PathBuf, detail: String },
    #[error("{path}: truncated pixel data: expected {expected} bytes, got {got}")]
    PpmTruncated {
        path: PathBuf,
        expected: usize,
        got: usize,
    },
    #[error("{path}: {extra} trailing bytes after pixel data")]
    PpmTrailing { path: PathBuf, extra: usize },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {detail}")]
    ManifestParse {
        path: PathBuf,
        line: u64,
        detail: String,
    },
    #[error("manifest {path}: duplicate sample id `{id}`")]
    DuplicateId { path: PathBuf, id: String },
    #[error("manifest {path}: sample `{id}` references missing file {file}")]
    MissingFile {
        path: PathBuf,
        id: String,
        file: PathBuf,
    },
    #[error("manifest {path}: split needs at least 2 reference scenes, found {found}")]
    TooFewScenes { path: PathBuf, found: usize },
    #[error("sample `{id}`: left view is {left_w}x{left_h} but right view is {right_w}x{right_h}")]
    EyeDimMismatch {
        id: String,
        left_w: usize,
        left_h: usize,
        right_w: usize,
        right_h: usize,
    },
    #[error("sample `{id}`: {width}x{height} image is smaller than one {PATCH_SIZE}x{PATCH_SIZE} patch")]
    ImageTooSmall {
        id: String,
        width: usize,
        height: usize,
    },
    #[error("invalid synthetic config: {detail}")]
    InvalidConfig { detail: String },
    #[error("aggregate_score needs at least one patch score")]
    EmptyAggregate,
}

pub type Result<T> = std::result::Result<T, DataError>;

/// Interleaved 8-bit RGB, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistortionType {
    Pristine,
    Awgn,
    Gblur,
    Jpeg,
    Synthetic,
}

impl DistortionType {
    pub fn as_str(self) -> &'static str {
        match self {
            DistortionType::Pristine => "pristine",
            DistortionType::Awgn => "awgn",
            DistortionType::Gblur => "gblur",
            DistortionType::Jpeg => "jpeg",
            DistortionType::Synthetic => "synthetic",
        }
    }

    pub fn parse(s: &str) -> Option<DistortionType> {
        match s {
            "pristine" => Some(DistortionType::Pristine),
            "awgn" => Some(DistortionType::Awgn),
            "gblur" => Some(DistortionType::Gblur),
            "jpeg" => Some(DistortionType::Jpeg),
            "synthetic" => Some(DistortionType::Synthetic),
            _ => None,
        }
    }
}

/// One manifest row: paths plus the three subjective scores.
#[derive(Debug, Clone)]
pub struct SampleRecord {
    pub id: String,
    pub left_path: PathBuf,
    pub right_path: PathBuf,
    pub mos_left: f64,
    pub mos_right: f64,
    pub mos_stereo: f64,
    pub reference_id: String,
    pub distortion_type: DistortionType,
    pub level_left: f64,
    pub level_right: f64,
}

/// A dataset: list of sample records with paths relative to the manifest's
/// directory. `name` is the canonical path of the manifest file and serves
/// as the dataset's identity.
#[derive(Debug, Clone)]
pub struct DatasetManifest {
    pub name: String,
    pub root: PathBuf,
    pub samples: Vec<SampleRecord>,
}

pub const MANIFEST_HEADER: &str =
    "id,left_path,right_path,mos_left,mos_right,mos_stereo,reference_id,distortion_type,level_left,level_right";

const MOS_MIN: f64 = 10.0;
const MOS_MAX: f64 = 100.0;

impl DatasetManifest {
    /// Reads and validates a manifest CSV. Every referenced image file must
    /// exist; ids must be unique `[A-Za-z0-9_-]` strings; MOS values must
    /// lie in [10,100]; at least two distinct reference scenes are needed.
    pub fn load(path: &Path) -> Result<DatasetManifest> {
        let path_buf = path.to_path_buf();
        let err_at = |line: u64, detail: String| DataError::ManifestParse {
            path: path_buf.clone(),
            line,
            detail,
        };
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_path(path)
            .map_err(|e| match e.kind() {
                csv::ErrorKind::Io(_) => DataError::Io {
                    path: path_buf.clone(),
                    source: std::io::Error::other(e.to_string()),
                },
                _ => err_at(0, e.to_string()),
            })?;
        {
            let headers = reader.headers().map_err(|e| err_at(1, e.to_string()))?;
            let got = headers.iter().collect::<Vec<_>>().join(",");
            if got != MANIFEST_HEADER {
                return Err(err_at(1, format!("bad header: expected `{MANIFEST_HEADER}`, got `{got}`")));
            }
        }
        let root = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
        let mut samples = Vec::new();
        let mut ids = HashSet::new();
        for record in reader.records() {
            let record = record.map_err(|e| err_at(0, e.to_string()))?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            if record.len() != 10 {
                return Err(err_at(line, format!("expected 10 fields, got {}", record.len())));
            }
            let field = |i: usize| record.get(i).unwrap_or_default().to_string();
            let number = |i: usize, what: &str| -> Result<f64> {
                record
                    .get(i)
                    .unwrap_or_default()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| err_at(line, format!("invalid {what} `{}`", field(i))))
            };
            let id = field(0);
            if id.is_empty() || !id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                return Err(err_at(line, format!("invalid id `{id}`")));
            }
            if !ids.insert(id.clone()) {
                return Err(DataError::DuplicateId {
                    path: path_buf.clone(),
                    id,
                });
            }
            let mos_left = number(3, "mos_left")?;
            let mos_right = number(4, "mos_right")?;
            let mos_stereo = number(5, "mos_stereo")?;
            for (what, v) in [("mos_left", mos_left), ("mos_right", mos_right), ("mos_stereo", mos_stereo)] {
                if !(MOS_MIN..=MOS_MAX).contains(&v) {
                    return Err(err_at(line, format!("{what} {v} outside [{MOS_MIN},{MOS_MAX}]")));
                }
            }
            let reference_id = field(6);
            if reference_id.is_empty() {
                return Err(err_at(line, "empty reference_id".into()));
            }
            let distortion_type = DistortionType::parse(&field(7))
                .ok_or_else(|| err_at(line, format!("unknown distortion_type `{}`", field(7))))?;
            let level_left = number(8, "level_left")?;
            let level_right = number(9, "level_right")?;
            if level_left < 0.0 || level_right < 0.0 {
                return Err(err_at(line, "negative distortion level".into()));
            }
            let sample = SampleRecord {
                id,
                left_path: PathBuf::from(field(1)),
                right_path: PathBuf::from(field(2)),
                mos_left,
                mos_right,
                mos_stereo,
                reference_id,
                distortion_type,
                level_left,
                level_right,
            };
            for file in [&sample.left_path, &sample.right_path] {
                let resolved = root.join(file);
                if !resolved.is_file() {
                    return Err(DataError::MissingFile {
                        path: path_buf.clone(),
                        id: sample.id.clone(),
                        file: resolved,
                    });
                }
            }
            samples.push(sample);
        }
        let scene_count = samples
            .iter()
            .map(|s| s.reference_id.as_str())
            .collect::<HashSet<_>>()
            .len();
        if scene_count < 2 {
            return Err(DataError::TooFewScenes {
                path: path_buf,
                found: scene_count,
            });
        }
        let name = std::fs::canonicalize(path)
            .unwrap_or(path_buf)
            .display()
            .to_string();
        Ok(DatasetManifest {
            name,
            root,
            samples,
        })
    }

    /// Writes rows in order with the required header. Numbers use Rust's
    /// shortest round-trip formatting.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::from(MANIFEST_HEADER);
        out.push('\n');
        for s in &self.samples {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                s.id,
                s.left_path.display(),
                s.right_path.display(),
                s.mos_left,
                s.mos_right,
                s.mos_stereo,
                s.reference_id,
                s.distortion_type.as_str(),
                s.level_left,
                s.level_right
            ));
        }
        std::fs::write(path, out).map_err(|source| DataError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn sample(&self, id: &str) -> Option<&SampleRecord> {
        self.samples.iter().find(|s| s.id == id)
    }

    /// Distinct reference scenes in first-appearance order.
    pub fn reference_ids(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for s in &self.samples {
            if seen.insert(s.reference_id.clone()) {
                out.push(s.reference_id.clone());
            }
        }
        out
    }

    pub fn resolve(&self, relative: &Path) -> PathBuf {
        self.root.join(relative)
    }
}

/// A fully decoded stereo pair with its labels.
#[derive(Debug, Clone)]
pub struct StereoSample {
    pub record: SampleRecord,
    pub left: RgbImage,
    pub right: RgbImage,
}

/// Decodes both views of a record and checks that their dimensions agree.
pub fn load_sample(manifest: &DatasetManifest, record: &SampleRecord) -> Result<StereoSample> {
    let left = decode_ppm(&manifest.resolve(&record.left_path))?;
    let right = decode_ppm(&manifest.resolve(&record.right_path))?;
    if left.width != right.width || left.height != right.height {
        return Err(DataError::EyeDimMismatch {
            id: record.id.clone(),
            left_w: left.width,
            left_h: left.height,
            right_w: right.width,
            right_h: right.height,
        });
    }
    Ok(StereoSample {
        record: record.clone(),
        left,
        right,
    })
}

/// Absolute mismatch between the stereo score and the left/right average:
/// `D = |(mos_left + mos_right)/2 - mos_stereo|`.
pub fn mos_mismatch(record: &SampleRecord) -> f64 {
    ((record.mos_left + record.mos_right) / 2.0 - record.mos_stereo).abs()
}

/// Writes the per-sample mismatch table, sorted by descending D (ties by
/// id). Columns: `id,mos_left,mos_right,mos_mean,mos_stereo,D`.
pub fn write_mismatch_csv(manifest: &DatasetManifest, out: &Path) -> Result<()> {
    let mut rows: Vec<(&SampleRecord, f64)> =
        manifest.samples.iter().map(|s| (s, mos_mismatch(s))).collect();
    rows.sort_by(|(a, da), (b, db)| db.partial_cmp(da).unwrap().then_with(|| a.id.cmp(&b.id)));
    let file = std::fs::File::create(out).map_err(|source| DataError::Io {
        path: out.to_path_buf(),
        source,
    })?;
    let mut w = std::io::BufWriter::new(file);
    let io_err = |source| DataError::Io {
        path: out.to_path_buf(),
        source,
    };
    writeln!(w, "id,mos_left,mos_right,mos_mean,mos_stereo,D").map_err(io_err)?;
    for (s, d) in rows {
        let mean = (s.mos_left + s.mos_right) / 2.0;
        writeln!(
            w,
            "{},{},{},{},{},{}",
            s.id, s.mos_left, s.mos_right, mean, s.mos_stereo, d
        )
        .map_err(io_err)?;
    }
    w.flush().map_err(io_err)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(mos_left: f64, mos_right: f64, mos_stereo: f64) -> SampleRecord {
        SampleRecord {
            id: "s".into(),
            left_path: "l.ppm".into(),
            right_path: "r.ppm".into(),
            mos_left,
            mos_right,
            mos_stereo,
            reference_id: "ref".into(),
            distortion_type: DistortionType::Synthetic,
            level_left: 0.0,
            level_right: 0.0,
        }
    }

    #[test]
    fn mismatch_is_zero_for_agreeing_scores() {
        assert_eq!(mos_mismatch(&record(60.0, 60.0, 60.0)), 0.0);
    }

    #[test]
    fn mismatch_hand_values() {
        assert_eq!(mos_mismatch(&record(80.0, 30.0, 30.0)), 25.0);
        assert_eq!(mos_mismatch(&record(70.0, 40.0, 48.0)), 7.0);
    }

    #[test]
    fn mismatch_is_swap_invariant() {
        let a = mos_mismatch(&record(80.0, 30.0, 42.0));
        let b = mos_mismatch(&record(30.0, 80.0, 42.0));
        assert_eq!(a, b);
    }
}
