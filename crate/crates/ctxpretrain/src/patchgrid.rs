//! Patchification geometry and random patch masks.
//!
//! Images are `(C, H, W)` arrays of values in `[0, 1]`. A [`PatchGrid`]
//! splits the plane into non-overlapping `P x P` patches scanned row-major;
//! [`patchify`] flattens each patch into one row of a [`PatchSequence`] and
//! [`unpatchify`] inverts it exactly.

use crate::error::{Error, Result};
use ndarray::{Array2, Array3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Geometry of a patchified image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchGrid {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub patch_size: usize,
}

impl PatchGrid {
    /// Builds a grid, checking that the patch size divides both image sides.
    pub fn new(height: usize, width: usize, channels: usize, patch_size: usize) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 || patch_size == 0 {
            return Err(Error::Dimension(format!(
                "grid sides must be positive, got {height}x{width}x{channels}, patch {patch_size}"
            )));
        }
        if !height.is_multiple_of(patch_size) || !width.is_multiple_of(patch_size) {
            return Err(Error::Dimension(format!(
                "patch size {patch_size} does not divide image {height}x{width}"
            )));
        }
        Ok(Self { height, width, channels, patch_size })
    }

    pub fn n_rows(&self) -> usize {
        self.height / self.patch_size
    }

    pub fn n_cols(&self) -> usize {
        self.width / self.patch_size
    }

    /// Total number of patches `N`.
    pub fn n_patches(&self) -> usize {
        self.n_rows() * self.n_cols()
    }

    /// Flattened length of one patch row: `P^2 * C`.
    pub fn patch_dim(&self) -> usize {
        self.patch_size * self.patch_size * self.channels
    }
}

/// Flattened pixel content of every patch, one patch per row.
///
/// Row `i` holds patch `(i / n_cols, i % n_cols)`; within a row entries are
/// ordered (pixel row, pixel col, channel) with the channel varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSequence {
    pub grid: PatchGrid,
    pub values: Array2<f64>,
}

impl PatchSequence {
    /// Validates that `values` matches the grid shape.
    pub fn new(grid: PatchGrid, values: Array2<f64>) -> Result<Self> {
        if values.nrows() != grid.n_patches() || values.ncols() != grid.patch_dim() {
            return Err(Error::Dimension(format!(
                "patch sequence is {}x{}, grid wants {}x{}",
                values.nrows(),
                values.ncols(),
                grid.n_patches(),
                grid.patch_dim()
            )));
        }
        Ok(Self { grid, values })
    }
}

/// A random set of masked patches together with the seed that produced it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskSpec {
    /// `true` marks a masked patch; length equals the grid's `N`.
    pub indicator: Vec<bool>,
    pub masked_count: usize,
    pub seed: u64,
}

impl MaskSpec {
    /// `true` when the mask hides no patches at all.
    pub fn is_empty(&self) -> bool {
        self.masked_count == 0
    }

    /// Indices of masked patches in ascending order.
    pub fn masked_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.indicator.iter().enumerate().filter(|&(_, &m)| m).map(|(i, _)| i)
    }
}

/// Rounds half up: the masked-count contract for a given ratio.
pub fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

/// Rearranges a `(C, H, W)` image into its patch sequence.
pub fn patchify(image: &Array3<f64>, patch_size: usize) -> Result<PatchSequence> {
    let (channels, height, width) = image.dim();
    let grid = PatchGrid::new(height, width, channels, patch_size)?;
    if image.iter().any(|v| !v.is_finite()) {
        return Err(Error::Range("image contains non-finite values".into()));
    }
    let p = patch_size;
    let mut values = Array2::zeros((grid.n_patches(), grid.patch_dim()));
    for pr in 0..grid.n_rows() {
        for pc in 0..grid.n_cols() {
            let row = pr * grid.n_cols() + pc;
            for py in 0..p {
                for px in 0..p {
                    for ch in 0..channels {
                        values[[row, (py * p + px) * channels + ch]] =
                            image[[ch, pr * p + py, pc * p + px]];
                    }
                }
            }
        }
    }
    PatchSequence::new(grid, values)
}

/// Exact inverse of [`patchify`].
pub fn unpatchify(seq: &PatchSequence) -> Result<Array3<f64>> {
    let grid = &seq.grid;
    if seq.values.nrows() != grid.n_patches() || seq.values.ncols() != grid.patch_dim() {
        return Err(Error::Dimension(format!(
            "sequence rows are {}x{}, grid wants {}x{}",
            seq.values.nrows(),
            seq.values.ncols(),
            grid.n_patches(),
            grid.patch_dim()
        )));
    }
    let p = grid.patch_size;
    let mut image = Array3::zeros((grid.channels, grid.height, grid.width));
    for pr in 0..grid.n_rows() {
        for pc in 0..grid.n_cols() {
            let row = pr * grid.n_cols() + pc;
            for py in 0..p {
                for px in 0..p {
                    for ch in 0..grid.channels {
                        image[[ch, pr * p + py, pc * p + px]] =
                            seq.values[[row, (py * p + px) * grid.channels + ch]];
                    }
                }
            }
        }
    }
    Ok(image)
}

/// Draws `round_half_up(ratio * n)` masked patches uniformly without
/// replacement, deterministically for a given seed.
pub fn generate_mask(n: usize, ratio: f64, seed: u64) -> Result<MaskSpec> {
    if n == 0 {
        return Err(Error::Range("mask needs at least one patch".into()));
    }
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::Range(format!("mask ratio {ratio} outside [0, 1]")));
    }
    let count = round_half_up(ratio * n as f64).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(sample_mask(n, count, seed, &mut rng))
}

/// Marks `count` of `n` patches chosen uniformly without replacement.
pub(crate) fn sample_mask(n: usize, count: usize, seed: u64, rng: &mut ChaCha8Rng) -> MaskSpec {
    let mut indicator = vec![false; n];
    for idx in rand::seq::index::sample(rng, n, count) {
        indicator[idx] = true;
    }
    MaskSpec { indicator, masked_count: count, seed }
}

/// Coarse-unit masking: draws whole `unit x unit` blocks of patches instead
/// of single patches, with the count rounded half-up at block granularity.
/// `unit = 1` reproduces [`generate_mask`] exactly.
pub fn generate_mask_with_unit(
    n_rows: usize,
    n_cols: usize,
    unit: usize,
    ratio: f64,
    seed: u64,
) -> Result<MaskSpec> {
    if unit == 0 {
        return Err(Error::Range("mask unit must be positive".into()));
    }
    if unit == 1 {
        return generate_mask(n_rows * n_cols, ratio, seed);
    }
    if !n_rows.is_multiple_of(unit) || !n_cols.is_multiple_of(unit) {
        return Err(Error::Dimension(format!(
            "mask unit {unit} does not divide patch grid {n_rows}x{n_cols}"
        )));
    }
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::Range(format!("mask ratio {ratio} outside [0, 1]")));
    }
    let coarse_rows = n_rows / unit;
    let coarse_cols = n_cols / unit;
    let n_coarse = coarse_rows * coarse_cols;
    let count = round_half_up(ratio * n_coarse as f64).min(n_coarse);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indicator = vec![false; n_rows * n_cols];
    for cell in rand::seq::index::sample(&mut rng, n_coarse, count) {
        let (cr, cc) = (cell / coarse_cols, cell % coarse_cols);
        for dy in 0..unit {
            for dx in 0..unit {
                indicator[(cr * unit + dy) * n_cols + cc * unit + dx] = true;
            }
        }
    }
    let masked_count = count * unit * unit;
    Ok(MaskSpec { indicator, masked_count, seed })
}

/// Number of scalar elements under the mask: `masked_count * P^2 * C`.
pub fn masked_element_count(mask: &MaskSpec, patch_size: usize, channels: usize) -> usize {
    mask.masked_count * patch_size * patch_size * channels
}
