//! Non-overlapping 32x32 patch tiling and per-image score aggregation.

use super::{DataError, Result, RgbImage, StereoSample};
use crate::model::ScoreQuad;
use crate::tensor::Tensor;
use crate::PATCH_SIZE;

/// Per-patch copies of the source image's three subjective scores.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MosLabels {
    pub left: f64,
    pub right: f64,
    pub stereo: f64,
}

/// Where a patch came from: sample id plus the top-left pixel offset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchOrigin {
    pub sample_id: String,
    pub row: u32,
    pub col: u32,
}

/// Co-located left/right patch tensors for one stereo image, with labels.
#[derive(Debug)]
pub struct PatchBatch {
    pub left_patches: Tensor,
    pub right_patches: Tensor,
    pub labels: Vec<MosLabels>,
    pub origins: Vec<PatchOrigin>,
}

impl PatchBatch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Top-left offsets (row, col) of every full patch window, in row-major
/// grid order. Trailing pixels that cannot fill a window are discarded.
pub fn patch_grid(width: usize, height: usize) -> Vec<(usize, usize)> {
    let mut grid = Vec::new();
    let rows = height / PATCH_SIZE;
    let cols = width / PATCH_SIZE;
    for i in 0..rows {
        for j in 0..cols {
            grid.push((i * PATCH_SIZE, j * PATCH_SIZE));
        }
    }
    grid
}

/// Copies one patch into `out` in CHW order as raw pixel values.
pub(crate) fn extract_patch(img: &RgbImage, row: usize, col: usize, out: &mut [f32]) {
    debug_assert_eq!(out.len(), 3 * PATCH_SIZE * PATCH_SIZE);
    for c in 0..3 {
        for y in 0..PATCH_SIZE {
            let src_base = ((row + y) * img.width + col) * 3 + c;
            let dst_base = (c * PATCH_SIZE + y) * PATCH_SIZE;
            for x in 0..PATCH_SIZE {
                out[dst_base + x] = img.data[src_base + x * 3] as f32;
            }
        }
    }
}

fn patches_tensor(img: &RgbImage, grid: &[(usize, usize)]) -> Tensor {
    let patch_len = 3 * PATCH_SIZE * PATCH_SIZE;
    let mut data = vec![0.0f32; grid.len() * patch_len];
    for (i, &(row, col)) in grid.iter().enumerate() {
        extract_patch(img, row, col, &mut data[i * patch_len..][..patch_len]);
    }
    Tensor::new_unchecked(vec![grid.len(), 3, PATCH_SIZE, PATCH_SIZE], data)
}

/// Tiles a stereo pair into co-located patch pairs. Pixels are used as
/// decoded; no normalization. Every patch carries its image's labels.
pub fn tile_patches(sample: &StereoSample) -> Result<PatchBatch> {
    let (w, h) = (sample.left.width, sample.left.height);
    if w < PATCH_SIZE || h < PATCH_SIZE {
        return Err(DataError::ImageTooSmall {
            id: sample.record.id.clone(),
            width: w,
            height: h,
        });
    }
    let grid = patch_grid(w, h);
    let labels = MosLabels {
        left: sample.record.mos_left,
        right: sample.record.mos_right,
        stereo: sample.record.mos_stereo,
    };
    let origins = grid
        .iter()
        .map(|&(row, col)| PatchOrigin {
            sample_id: sample.record.id.clone(),
            row: row as u32,
            col: col as u32,
        })
        .collect();
    Ok(PatchBatch {
        left_patches: patches_tensor(&sample.left, &grid),
        right_patches: patches_tensor(&sample.right, &grid),
        labels: vec![labels; grid.len()],
        origins,
    })
}

/// Arithmetic mean of each score channel over all patches of one image.
pub fn aggregate_score(patch_scores: &[ScoreQuad]) -> Result<ScoreQuad> {
    if patch_scores.is_empty() {
        return Err(DataError::EmptyAggregate);
    }
    let n = patch_scores.len() as f64;
    let mut acc = [0.0f64; 4];
    for q in patch_scores {
        acc[0] += q.q_left;
        acc[1] += q.q_right;
        acc[2] += q.q_stereo;
        acc[3] += q.q_global;
    }
    Ok(ScoreQuad {
        q_left: acc[0] / n,
        q_right: acc[1] / n,
        q_stereo: acc[2] / n,
        q_global: acc[3] / n,
    })
}
