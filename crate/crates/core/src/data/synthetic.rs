//! Procedural desk-scale datasets: multi-octave noise scenes, additive
//! Gaussian noise and box blur distortions, and an analytic label model.
//!
//! Labels are artifact-internal ground truth for exercising the training
//! and evaluation machinery; they are not calibrated against any subjective
//! data. Per-eye MOS decays linearly with distortion level; the stereo MOS
//! follows a rivalry-flavored rule that sits between the worse eye and the
//! plain average: `min(l,r) + 0.25*|l-r|`.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    write_ppm, DataError, DatasetManifest, DistortionType, Result, RgbImage,
    MANIFEST_HEADER,
};
use crate::PATCH_SIZE;

/// Horizontal offset between the two views of a synthetic scene, in pixels.
const DISPARITY: usize = 4;

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub scenes: u32,
    pub levels: u32,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    /// Scene-name prefix; gives datasets disjoint sample ids.
    pub prefix: String,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            scenes: 6,
            levels: 3,
            width: 96,
            height: 96,
            seed: 0,
            prefix: "s".into(),
        }
    }
}

/// Per-eye quality for a distortion level: 100 at pristine, decaying
/// linearly to 10 at the maximum level.
pub fn synthetic_mos(level: f64, level_max: f64) -> f64 {
    (100.0 - 90.0 * level / level_max).clamp(10.0, 100.0)
}

/// Stereo quality from the two per-eye scores.
pub fn synthetic_stereo_mos(mos_left: f64, mos_right: f64) -> f64 {
    mos_left.min(mos_right) + 0.25 * (mos_left - mos_right).abs()
}

/// Generates `scenes` pristine stereo scenes plus symmetric and asymmetric
/// noise/blur variants at `levels` levels, writes them as PPM pairs with a
/// manifest.csv into `out_dir`, and returns the loaded manifest. Identical
/// configs produce byte-identical files.
pub fn generate_synthetic(config: &SynthConfig, out_dir: &Path) -> Result<DatasetManifest> {
    if config.scenes < 2 {
        return Err(DataError::InvalidConfig {
            detail: format!("need at least 2 scenes, got {}", config.scenes),
        });
    }
    if config.levels < 2 {
        return Err(DataError::InvalidConfig {
            detail: format!("need at least 2 distortion levels, got {}", config.levels),
        });
    }
    if config.width < PATCH_SIZE || config.height < PATCH_SIZE {
        return Err(DataError::InvalidConfig {
            detail: format!(
                "image size {}x{} is below the {PATCH_SIZE}-pixel patch size",
                config.width, config.height
            ),
        });
    }
    if config.prefix.is_empty()
        || !config
            .prefix
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
    {
        return Err(DataError::InvalidConfig {
            detail: format!("prefix `{}` must be non-empty [A-Za-z0-9_-]", config.prefix),
        });
    }
    std::fs::create_dir_all(out_dir).map_err(|source| DataError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;

    let mut rows = String::from(MANIFEST_HEADER);
    rows.push('\n');
    let level_max = config.levels as f64;

    for scene_idx in 0..config.scenes {
        let scene = format!("{}{scene_idx:02}", config.prefix);
        let (pristine_left, pristine_right) = render_scene(config, scene_idx);
        let mut variant_idx = 0u64;

        let emit = |id: &str,
                        kind: DistortionType,
                        level_left: u32,
                        level_right: u32,
                        variant_idx: u64|
         -> Result<String> {
            let left = distort(
                &pristine_left,
                kind,
                level_left,
                stream(config.seed, scene_idx, variant_idx, 0),
            );
            let right = distort(
                &pristine_right,
                kind,
                level_right,
                stream(config.seed, scene_idx, variant_idx, 1),
            );
            let left_name = format!("{id}_l.ppm");
            let right_name = format!("{id}_r.ppm");
            write_ppm(&left, &out_dir.join(&left_name))?;
            write_ppm(&right, &out_dir.join(&right_name))?;
            let mos_left = synthetic_mos(level_left as f64, level_max);
            let mos_right = synthetic_mos(level_right as f64, level_max);
            let mos_stereo = synthetic_stereo_mos(mos_left, mos_right);
            Ok(format!(
                "{id},{left_name},{right_name},{mos_left},{mos_right},{mos_stereo},{scene},{},{},{}\n",
                kind.as_str(),
                level_left,
                level_right
            ))
        };

        rows.push_str(&emit(
            &format!("{scene}_pristine"),
            DistortionType::Pristine,
            0,
            0,
            variant_idx,
        )?);
        variant_idx += 1;

        for kind in [DistortionType::Awgn, DistortionType::Gblur] {
            for level in 1..=config.levels {
                let id = format!("{scene}_{}_sym{level}", kind.as_str());
                rows.push_str(&emit(&id, kind, level, level, variant_idx)?);
                variant_idx += 1;
            }
            for level in 1..=config.levels {
                let id = format!("{scene}_{}_asym{level}", kind.as_str());
                rows.push_str(&emit(&id, kind, level, level / 2, variant_idx)?);
                variant_idx += 1;
            }
        }
    }

    let manifest_path = out_dir.join("manifest.csv");
    std::fs::write(&manifest_path, rows).map_err(|source| DataError::Io {
        path: manifest_path.clone(),
        source,
    })?;
    DatasetManifest::load(&manifest_path)
}

fn stream(seed: u64, scene: u32, variant: u64, eye: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((scene as u64) << 32) | (variant << 1) | eye);
    rng
}

/// Renders the pristine pair: a master image DISPARITY pixels wider than
/// the target, split into two horizontally offset crops.
fn render_scene(config: &SynthConfig, scene_idx: u32) -> (RgbImage, RgbImage) {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(((scene_idx as u64) << 32) | 0xFFFF);

    let w = config.width + DISPARITY;
    let h = config.height;
    let gradient_x: f32 = rng.gen_range(-1.0..1.0);
    let gradient_y: f32 = rng.gen_range(-1.0..1.0);
    let coarse = NoiseGrid::new(w, h, 16, &mut rng);
    let fine = NoiseGrid::new(w, h, 4, &mut rng);

    let mut master = vec![0u8; w * h * 3];
    for y in 0..h {
        for x in 0..w {
            let smooth = 45.0 * coarse.sample(x, y) + 25.0 * fine.sample(x, y);
            let gradient = 30.0
                * (gradient_x * (x as f32 / w as f32 - 0.5)
                    + gradient_y * (y as f32 / h as f32 - 0.5));
            // Per-pixel octave keeps high-frequency energy in the scene so
            // blur has a visible signature.
            let grain: f32 = rng.gen_range(-25.0..25.0);
            for c in 0..3 {
                let base = 118.0 + 10.0 * c as f32;
                let v = base + smooth + gradient + grain * [1.0, 0.8, 1.2][c];
                master[(y * w + x) * 3 + c] = v.clamp(0.0, 255.0) as u8;
            }
        }
    }

    let crop = |offset: usize| -> RgbImage {
        let mut data = vec![0u8; config.width * h * 3];
        for y in 0..h {
            let src = (y * w + offset) * 3;
            let dst = y * config.width * 3;
            data[dst..dst + config.width * 3].copy_from_slice(&master[src..src + config.width * 3]);
        }
        RgbImage {
            width: config.width,
            height: h,
            data,
        }
    };
    (crop(0), crop(DISPARITY))
}

fn distort(img: &RgbImage, kind: DistortionType, level: u32, mut rng: ChaCha8Rng) -> RgbImage {
    if level == 0 {
        return img.clone();
    }
    match kind {
        DistortionType::Awgn => add_gaussian_noise(img, 14.0 * level as f64, &mut rng),
        DistortionType::Gblur => box_blur(img, 2 * level as usize),
        DistortionType::Pristine | DistortionType::Jpeg | DistortionType::Synthetic => img.clone(),
    }
}

fn add_gaussian_noise(img: &RgbImage, sigma: f64, rng: &mut ChaCha8Rng) -> RgbImage {
    let data = img
        .data
        .iter()
        .map(|&v| (v as f64 + sigma * standard_normal(rng)).clamp(0.0, 255.0) as u8)
        .collect();
    RgbImage {
        width: img.width,
        height: img.height,
        data,
    }
}

/// Box-Muller transform; two uniform draws per sample.
fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Separable box blur with windows truncated at the borders.
fn box_blur(img: &RgbImage, radius: usize) -> RgbImage {
    let (w, h) = (img.width, img.height);
    let mut horizontal = vec![0.0f32; w * h * 3];
    for y in 0..h {
        for x in 0..w {
            let x0 = x.saturating_sub(radius);
            let x1 = (x + radius).min(w - 1);
            for c in 0..3 {
                let mut acc = 0.0f32;
                for xi in x0..=x1 {
                    acc += img.data[(y * w + xi) * 3 + c] as f32;
                }
                horizontal[(y * w + x) * 3 + c] = acc / (x1 - x0 + 1) as f32;
            }
        }
    }
    let mut data = vec![0u8; w * h * 3];
    for y in 0..h {
        let y0 = y.saturating_sub(radius);
        let y1 = (y + radius).min(h - 1);
        for x in 0..w {
            for c in 0..3 {
                let mut acc = 0.0f32;
                for yi in y0..=y1 {
                    acc += horizontal[(yi * w + x) * 3 + c];
                }
                data[(y * w + x) * 3 + c] = (acc / (y1 - y0 + 1) as f32).clamp(0.0, 255.0) as u8;
            }
        }
    }
    RgbImage {
        width: w,
        height: h,
        data,
    }
}

/// Bilinearly interpolated lattice of uniform values: smooth value noise.
struct NoiseGrid {
    cells_x: usize,
    cell: usize,
    values: Vec<f32>,
}

impl NoiseGrid {
    fn new(width: usize, height: usize, cell: usize, rng: &mut ChaCha8Rng) -> NoiseGrid {
        let cells_x = width / cell + 2;
        let cells_y = height / cell + 2;
        let values = (0..cells_x * cells_y).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
        NoiseGrid {
            cells_x,
            cell,
            values,
        }
    }

    fn sample(&self, x: usize, y: usize) -> f32 {
        let fx = x as f32 / self.cell as f32;
        let fy = y as f32 / self.cell as f32;
        let ix = fx as usize;
        let iy = fy as usize;
        let tx = fx - ix as f32;
        let ty = fy - iy as f32;
        let at = |gx: usize, gy: usize| self.values[gy * self.cells_x + gx];
        let top = at(ix, iy) * (1.0 - tx) + at(ix + 1, iy) * tx;
        let bottom = at(ix, iy + 1) * (1.0 - tx) + at(ix + 1, iy + 1) * tx;
        top * (1.0 - ty) + bottom * ty
    }
}
