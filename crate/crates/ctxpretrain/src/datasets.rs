//! Synthetic dense-object imagery, folder ingestion, and normalization.
//!
//! The generator emulates the regime the method targets: many small objects
//! scattered over a textured background, so that random patch masking
//! regularly hides whole objects. Rendered object footprints are recorded as
//! patch-index sets for the coverage analyzer, and three label rules give
//! the probe something to classify.

use crate::error::{Error, Result};
use crate::patchgrid::PatchGrid;
use ndarray::Array3;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::Path;

/// Object silhouettes the generator can draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Rectangle,
    Ellipse,
}

/// How class labels are assigned to generated images.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelRule {
    /// Binary: fewer vs more objects, split at the midpoint of the range.
    ObjectCountBucket,
    /// Binary: more rectangles vs more ellipses (ties re-rolled).
    DominantShape,
    /// Binary: dark vs bright background band.
    BackgroundLevel,
}

/// Synthetic scene parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    /// Patch size used to record object footprints as patch indices.
    pub patch_size: usize,
    pub k_min: usize,
    pub k_max: usize,
    /// Object bounding-box side range, pixels.
    pub size_min: usize,
    pub size_max: usize,
    pub shapes: Vec<ShapeKind>,
    /// Peak-to-mean amplitude of the background value noise.
    pub background_amplitude: f64,
    pub label_rule: LabelRule,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            height: 32,
            width: 32,
            channels: 3,
            patch_size: 4,
            k_min: 2,
            k_max: 6,
            size_min: 4,
            size_max: 9,
            shapes: vec![ShapeKind::Rectangle, ShapeKind::Ellipse],
            background_amplitude: 0.08,
            label_rule: LabelRule::ObjectCountBucket,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let grid = self.grid()?; // checks sides, channels, patch divisibility
        let _ = grid;
        if self.k_min > self.k_max {
            return Err(Error::Config(format!(
                "object count range [{}, {}] is inverted",
                self.k_min, self.k_max
            )));
        }
        if self.size_min == 0 || self.size_min > self.size_max {
            return Err(Error::Config(format!(
                "object size range [{}, {}] is degenerate",
                self.size_min, self.size_max
            )));
        }
        if self.size_max >= self.height.min(self.width) {
            return Err(Error::Config(format!(
                "max object size {} does not fit a {}x{} image",
                self.size_max, self.height, self.width
            )));
        }
        if self.shapes.is_empty() {
            return Err(Error::Config("shape set is empty".into()));
        }
        if !(self.background_amplitude >= 0.0) || self.background_amplitude > 0.5 {
            return Err(Error::Config(format!(
                "background amplitude {} outside [0, 0.5]",
                self.background_amplitude
            )));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<PatchGrid> {
        PatchGrid::new(self.height, self.width, self.channels, self.patch_size)
    }
}

/// One image with its class label and per-object patch footprints.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage {
    /// `(C, H, W)` values in `[0, 1]`.
    pub pixels: Array3<f64>,
    pub label: usize,
    /// For each object, the set of patch indices its silhouette touches.
    pub object_footprints: Vec<BTreeSet<usize>>,
}

/// Background bands of the `BackgroundLevel` rule; separated by a wide
/// margin so the class stays linearly separable from mean intensity.
const BG_BANDS: [(f64, f64); 2] = [(0.15, 0.30), (0.50, 0.65)];
/// Background base range used by the other label rules; keeps headroom on
/// both sides so object contrast can be drawn symmetrically, and varies
/// enough that scene-level context carries signal worth modeling.
const BG_FREE: (f64, f64) = (0.30, 0.50);
/// Value-noise lattice pitch in pixels.
const NOISE_CELL: usize = 8;

struct Scene {
    base: f64,
    label: usize,
    object_shapes: Vec<ShapeKind>,
}

/// Draws the label-determining scene structure first so every rule yields
/// balanced classes.
fn draw_scene(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Scene {
    let draw_k = |rng: &mut ChaCha8Rng| {
        if cfg.k_min == cfg.k_max {
            cfg.k_min
        } else {
            rng.random_range(cfg.k_min..=cfg.k_max)
        }
    };
    let draw_shapes = |rng: &mut ChaCha8Rng, k: usize| -> Vec<ShapeKind> {
        (0..k).map(|_| cfg.shapes[rng.random_range(0..cfg.shapes.len())]).collect()
    };
    match cfg.label_rule {
        LabelRule::BackgroundLevel => {
            let label = rng.random_range(0..BG_BANDS.len());
            let (lo, hi) = BG_BANDS[label];
            let k = draw_k(rng);
            Scene { base: rng.random_range(lo..hi), label, object_shapes: draw_shapes(rng, k) }
        }
        LabelRule::ObjectCountBucket => {
            // Sample the bucket first, then a count inside it, so classes
            // stay balanced even for odd-sized ranges.
            let mid = (cfg.k_min + cfg.k_max) / 2;
            let label = if cfg.k_min == cfg.k_max {
                0
            } else {
                usize::from(rng.random_bool(0.5))
            };
            let k = if cfg.k_min == cfg.k_max {
                cfg.k_min
            } else if label == 0 {
                rng.random_range(cfg.k_min..=mid)
            } else {
                rng.random_range(mid + 1..=cfg.k_max)
            };
            Scene {
                base: rng.random_range(BG_FREE.0..BG_FREE.1),
                label,
                object_shapes: draw_shapes(rng, k),
            }
        }
        LabelRule::DominantShape => {
            let k = draw_k(rng);
            let mut shapes = draw_shapes(rng, k);
            let count = |s: &[ShapeKind], kind: ShapeKind| s.iter().filter(|&&x| x == kind).count();
            let rects = count(&shapes, ShapeKind::Rectangle);
            let ells = count(&shapes, ShapeKind::Ellipse);
            if rects == ells && !shapes.is_empty() {
                // Break the tie toward a fair coin so classes stay balanced.
                let last = shapes.len() - 1;
                shapes[last] =
                    if rng.random_bool(0.5) { ShapeKind::Rectangle } else { ShapeKind::Ellipse };
            }
            let label = usize::from(
                count(&shapes, ShapeKind::Ellipse) > count(&shapes, ShapeKind::Rectangle),
            );
            Scene { base: rng.random_range(BG_FREE.0..BG_FREE.1), label, object_shapes: shapes }
        }
    }
}

/// Bilinearly interpolated lattice noise in `[-1, 1]`.
fn value_noise(h: usize, w: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let gh = h.div_ceil(NOISE_CELL) + 1;
    let gw = w.div_ceil(NOISE_CELL) + 1;
    let lattice: Vec<f64> = (0..gh * gw).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        let fy = y as f64 / NOISE_CELL as f64;
        let (y0, ty) = (fy.floor() as usize, fy.fract());
        for x in 0..w {
            let fx = x as f64 / NOISE_CELL as f64;
            let (x0, tx) = (fx.floor() as usize, fx.fract());
            let at = |yy: usize, xx: usize| lattice[yy * gw + xx];
            let top = at(y0, x0) * (1.0 - tx) + at(y0, x0 + 1) * tx;
            let bot = at(y0 + 1, x0) * (1.0 - tx) + at(y0 + 1, x0 + 1) * tx;
            out[y * w + x] = top * (1.0 - ty) + bot * ty;
        }
    }
    out
}

/// Pixel set covered by a shape inside its bounding box.
fn rasterize(shape: ShapeKind, x0: usize, y0: usize, bw: usize, bh: usize) -> Vec<(usize, usize)> {
    let mut pixels = Vec::with_capacity(bw * bh);
    match shape {
        ShapeKind::Rectangle => {
            for y in y0..y0 + bh {
                for x in x0..x0 + bw {
                    pixels.push((x, y));
                }
            }
        }
        ShapeKind::Ellipse => {
            let (cx, cy) = (x0 as f64 + bw as f64 / 2.0, y0 as f64 + bh as f64 / 2.0);
            let (rx, ry) = (bw as f64 / 2.0, bh as f64 / 2.0);
            for y in y0..y0 + bh {
                for x in x0..x0 + bw {
                    let dx = (x as f64 + 0.5 - cx) / rx;
                    let dy = (y as f64 + 0.5 - cy) / ry;
                    if dx * dx + dy * dy <= 1.0 {
                        pixels.push((x, y));
                    }
                }
            }
        }
    }
    pixels
}

/// Deterministically generates `count` labeled scenes.
pub fn synth_generate(cfg: &SynthConfig, seed: u64, count: usize) -> Result<Vec<LabeledImage>> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut rng = ChaCha8Rng::seed_from_u64(master.random());
        let scene = draw_scene(cfg, &mut rng);
        let (h, w, c) = (cfg.height, cfg.width, cfg.channels);

        // Background: per-channel tinted base plus shared value noise.
        let noise = value_noise(h, w, &mut rng);
        let tints: Vec<f64> = (0..c).map(|_| rng.random_range(-0.04..0.04)).collect();
        let mut pixels = Array3::zeros((c, h, w));
        for ch in 0..c {
            for y in 0..h {
                for x in 0..w {
                    pixels[[ch, y, x]] =
                        scene.base + tints[ch] + cfg.background_amplitude * noise[y * w + x];
                }
            }
        }

        // Objects: bodies at symmetric contrast around the local background
        // level — half brighter, half darker — so no linear functional of
        // the pixels carries the object count. The per-object contrast is
        // additionally scaled by 1/sqrt(k), equalizing the total contrast
        // energy (a quadratic pixel statistic) across count classes; with
        // both the linear and the quadratic shortcut closed, counting
        // requires a genuinely local object detector.
        let k = scene.object_shapes.len();
        let energy_norm = (3.0 / k.max(1) as f64).sqrt();
        let mut footprints = Vec::with_capacity(k);
        for &shape in &scene.object_shapes {
            let bw = rng.random_range(cfg.size_min..=cfg.size_max);
            let bh = rng.random_range(cfg.size_min..=cfg.size_max);
            let x0 = rng.random_range(0..=w - bw);
            let y0 = rng.random_range(0..=h - bh);
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let frac = (rng.random_range(0.55..0.95) * energy_norm).clamp(0.40, 0.95);
            let body: Vec<f64> = (0..c)
                .map(|ch| {
                    let local = scene.base + tints[ch];
                    local + sign * frac * local.min(1.0 - local)
                })
                .collect();
            let mut footprint = BTreeSet::new();
            for (x, y) in rasterize(shape, x0, y0, bw, bh) {
                for ch in 0..c {
                    pixels[[ch, y, x]] = body[ch];
                }
                footprint
                    .insert((y / cfg.patch_size) * grid.n_cols() + x / cfg.patch_size);
            }
            footprints.push(footprint);
        }

        pixels.mapv_inplace(|v| v.clamp(0.0, 1.0));
        out.push(LabeledImage { pixels, label: scene.label, object_footprints: footprints });
    }
    Ok(out)
}

/// Maps one 8-bit sample to `[0, 1]` by exact division.
pub fn normalize(raw: i32) -> Result<f64> {
    if !(0..=255).contains(&raw) {
        return Err(Error::Range(format!("pixel value {raw} outside [0, 255]")));
    }
    Ok(raw as f64 / 255.0)
}

/// Loads 8-bit PNGs from `<root>/<class>/*.png`, sorted for determinism;
/// images are scaled to cover the target and center-cropped. Non-PNG files
/// and undecodable PNGs are skipped with a logged warning.
pub fn load_image_folder(
    root: &Path,
    height: usize,
    width: usize,
    channels: usize,
) -> Result<Vec<LabeledImage>> {
    if !(channels == 1 || channels == 3) {
        return Err(Error::Config(format!("folder loading supports 1 or 3 channels, not {channels}")));
    }
    if !root.is_dir() {
        return Err(Error::Data(format!("dataset root {} is not a directory", root.display())));
    }
    let mut class_dirs: Vec<_> = std::fs::read_dir(root)?
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .filter(|e| e.path().is_dir())
        .map(|e| e.path())
        .collect();
    class_dirs.sort();
    let mut out = Vec::new();
    for (label, dir) in class_dirs.iter().enumerate() {
        let mut files: Vec<_> = std::fs::read_dir(dir)?
            .collect::<std::io::Result<Vec<_>>>()?
            .into_iter()
            .map(|e| e.path())
            .filter(|p| p.is_file())
            .collect();
        files.sort();
        for file in files {
            let is_png = file
                .extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| e.eq_ignore_ascii_case("png"));
            if !is_png {
                log::warn!("skipping non-PNG entry {}", file.display());
                continue;
            }
            let decoded = match image::open(&file) {
                Ok(img) => img,
                Err(e) => {
                    log::warn!("skipping undecodable PNG {}: {e}", file.display());
                    continue;
                }
            };
            out.push(LabeledImage {
                pixels: fit_to_target(&decoded, height, width, channels)?,
                label,
                object_footprints: Vec::new(),
            });
        }
    }
    if out.is_empty() {
        return Err(Error::Data(format!(
            "no usable PNGs under {} (expected <root>/<class>/*.png)",
            root.display()
        )));
    }
    Ok(out)
}

/// Loads one PNG, fitted to the target geometry like [`load_image_folder`].
pub fn load_single_png(
    path: &Path,
    height: usize,
    width: usize,
    channels: usize,
) -> Result<Array3<f64>> {
    if !(channels == 1 || channels == 3) {
        return Err(Error::Config(format!("PNG loading supports 1 or 3 channels, not {channels}")));
    }
    let decoded = image::open(path)?;
    fit_to_target(&decoded, height, width, channels)
}

/// Scales to cover `height x width` preserving aspect, center-crops, and
/// normalizes to `[0, 1]`.
fn fit_to_target(
    img: &image::DynamicImage,
    height: usize,
    width: usize,
    channels: usize,
) -> Result<Array3<f64>> {
    let (iw, ih) = (img.width() as usize, img.height() as usize);
    if iw == 0 || ih == 0 {
        return Err(Error::Data("image has a zero dimension".into()));
    }
    let scale = f64::max(width as f64 / iw as f64, height as f64 / ih as f64);
    let (sw, sh) = (
        ((iw as f64 * scale).round() as u32).max(width as u32),
        ((ih as f64 * scale).round() as u32).max(height as u32),
    );
    let resized = img.resize_exact(sw, sh, image::imageops::FilterType::Triangle);
    let x0 = (sw as usize - width) / 2;
    let y0 = (sh as usize - height) / 2;
    let mut pixels = Array3::zeros((channels, height, width));
    if channels == 1 {
        let gray = resized.to_luma8();
        for y in 0..height {
            for x in 0..width {
                pixels[[0, y, x]] =
                    normalize(i32::from(gray.get_pixel((x0 + x) as u32, (y0 + y) as u32)[0]))?;
            }
        }
    } else {
        let rgb = resized.to_rgb8();
        for y in 0..height {
            for x in 0..width {
                let p = rgb.get_pixel((x0 + x) as u32, (y0 + y) as u32);
                for ch in 0..3 {
                    pixels[[ch, y, x]] = normalize(i32::from(p[ch]))?;
                }
            }
        }
    }
    Ok(pixels)
}
