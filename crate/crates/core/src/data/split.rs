//! Scene-disjoint train/test splits.
//!
//! Reference scenes are shuffled with an RNG keyed on (seed, repeat_index)
//! and assigned to the training side until the cumulative sample count
//! first reaches the target fraction; every remaining scene goes to test.
//! Train and test therefore never share a reference scene.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{DataError, DatasetManifest, Result};

/// The supported train-side fractions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainFraction {
    Half,
    Seventy,
    Eighty,
}

impl TrainFraction {
    pub fn value(self) -> f64 {
        match self {
            TrainFraction::Half => 0.5,
            TrainFraction::Seventy => 0.7,
            TrainFraction::Eighty => 0.8,
        }
    }

    fn tenths(self) -> usize {
        match self {
            TrainFraction::Half => 5,
            TrainFraction::Seventy => 7,
            TrainFraction::Eighty => 8,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TrainFraction::Half => "0.5",
            TrainFraction::Seventy => "0.7",
            TrainFraction::Eighty => "0.8",
        }
    }

    pub fn parse(s: &str) -> Option<TrainFraction> {
        match s {
            "0.5" => Some(TrainFraction::Half),
            "0.7" => Some(TrainFraction::Seventy),
            "0.8" => Some(TrainFraction::Eighty),
            _ => None,
        }
    }
}

/// A train/test partition of sample ids with disjoint reference scenes.
#[derive(Debug, Clone)]
pub struct SplitPlan {
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
    pub train_fraction: TrainFraction,
    pub repeat_index: u32,
    pub seed: u64,
}

const SPLIT_STREAM_BASE: u64 = 0x5350_4C49_0000_0000;

pub fn make_split(
    manifest: &DatasetManifest,
    train_fraction: TrainFraction,
    repeat_index: u32,
    seed: u64,
) -> Result<SplitPlan> {
    let mut scenes = manifest.reference_ids();
    if scenes.len() < 2 {
        return Err(DataError::TooFewScenes {
            path: manifest.name.clone().into(),
            found: scenes.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SPLIT_STREAM_BASE | repeat_index as u64);
    scenes.shuffle(&mut rng);

    let total = manifest.samples.len();
    let mut train_scenes = std::collections::HashSet::new();
    let mut cumulative = 0usize;
    for scene in &scenes {
        let scene_samples = manifest
            .samples
            .iter()
            .filter(|s| &s.reference_id == scene)
            .count();
        train_scenes.insert(scene.clone());
        cumulative += scene_samples;
        // Integer comparison of cumulative/total >= tenths/10.
        if cumulative * 10 >= total * train_fraction.tenths() {
            break;
        }
    }

    let mut train_ids = Vec::new();
    let mut test_ids = Vec::new();
    for s in &manifest.samples {
        if train_scenes.contains(&s.reference_id) {
            train_ids.push(s.id.clone());
        } else {
            test_ids.push(s.id.clone());
        }
    }
    Ok(SplitPlan {
        train_ids,
        test_ids,
        train_fraction,
        repeat_index,
        seed,
    })
}

/// Persists a plan as `id,reference_id,role` rows in manifest order.
pub fn write_split_csv(plan: &SplitPlan, manifest: &DatasetManifest, path: &Path) -> Result<()> {
    let io_err = |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = std::fs::File::create(path).map_err(io_err)?;
    let mut w = std::io::BufWriter::new(file);
    writeln!(w, "id,reference_id,role").map_err(io_err)?;
    let train: std::collections::HashSet<&str> = plan.train_ids.iter().map(|s| s.as_str()).collect();
    for s in &manifest.samples {
        let role = if train.contains(s.id.as_str()) {
            "train"
        } else {
            "test"
        };
        writeln!(w, "{},{},{}", s.id, s.reference_id, role).map_err(io_err)?;
    }
    w.flush().map_err(io_err)?;
    Ok(())
}

/// Reads back a split written by [`write_split_csv`].
pub fn read_split_csv(path: &Path) -> Result<(Vec<String>, Vec<String>)> {
    let content = std::fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, line) in content.lines().enumerate() {
        if i == 0 {
            if line != "id,reference_id,role" {
                return Err(DataError::ManifestParse {
                    path: path.to_path_buf(),
                    line: 1,
                    detail: format!("bad split header `{line}`"),
                });
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(DataError::ManifestParse {
                path: path.to_path_buf(),
                line: (i + 1) as u64,
                detail: format!("expected 3 fields, got {}", fields.len()),
            });
        }
        match fields[2] {
            "train" => train.push(fields[0].to_string()),
            "test" => test.push(fields[0].to_string()),
            other => {
                return Err(DataError::ManifestParse {
                    path: path.to_path_buf(),
                    line: (i + 1) as u64,
                    detail: format!("unknown role `{other}`"),
                })
            }
        }
    }
    Ok((train, test))
}
