//! Learnable weights of the shared encoder and prediction head.
//!
//! Every array is reachable through [`BackboneParams::tensors`] /
//! [`BackboneParams::tensors_mut`] under a stable dotted name; the optimizer,
//! the checkpoint format, and the finite-difference tests all iterate that
//! directory, so its order must never depend on anything but the config.

use crate::backbone::BackboneConfig;
use crate::error::{Error, Result};
use ndarray::{Array1, Array2, ArrayViewD, ArrayViewMutD};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Scale of the truncated-normal weight initialization.
pub const INIT_STD: f64 = 0.02;
/// Truncation bound in units of `INIT_STD`.
pub const INIT_TRUNC_SIGMAS: f64 = 2.0;

/// Per-row affine normalization weights.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerNormParams {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
}

impl LayerNormParams {
    fn zeros(dim: usize) -> Self {
        Self { gamma: Array1::zeros(dim), beta: Array1::zeros(dim) }
    }
}

/// Weights of one pre-norm transformer block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams {
    pub ln1: LayerNormParams,
    /// `D x 3D`: packed query/key/value projection.
    pub w_qkv: Array2<f64>,
    pub b_qkv: Array1<f64>,
    /// `D x D`: attention output projection.
    pub w_proj: Array2<f64>,
    pub b_proj: Array1<f64>,
    pub ln2: LayerNormParams,
    /// `D x hidden`.
    pub w_fc1: Array2<f64>,
    pub b_fc1: Array1<f64>,
    /// `hidden x D`.
    pub w_fc2: Array2<f64>,
    pub b_fc2: Array1<f64>,
}

impl BlockParams {
    fn zeros(dim: usize, hidden: usize) -> Self {
        Self {
            ln1: LayerNormParams::zeros(dim),
            w_qkv: Array2::zeros((dim, 3 * dim)),
            b_qkv: Array1::zeros(3 * dim),
            w_proj: Array2::zeros((dim, dim)),
            b_proj: Array1::zeros(dim),
            ln2: LayerNormParams::zeros(dim),
            w_fc1: Array2::zeros((dim, hidden)),
            b_fc1: Array1::zeros(hidden),
            w_fc2: Array2::zeros((hidden, dim)),
            b_fc2: Array1::zeros(dim),
        }
    }
}

/// Every learnable array of the backbone: patch embedding, positional
/// embeddings, mask token, transformer blocks, and the pixel head.
#[derive(Debug, Clone, PartialEq)]
pub struct BackboneParams {
    /// `P^2 C x D`.
    pub patch_embed_w: Array2<f64>,
    pub patch_embed_b: Array1<f64>,
    /// `N x D`, absolute per-patch position vectors.
    pub pos_embed: Array2<f64>,
    /// `D`, substituted for masked tokens.
    pub mask_token: Array1<f64>,
    pub blocks: Vec<BlockParams>,
    /// `D x P^2 C`.
    pub head_w: Array2<f64>,
    pub head_b: Array1<f64>,
}

impl BackboneParams {
    /// All-zero parameter set with the shapes demanded by `config`.
    /// Also serves as the gradient / optimizer-moment container.
    pub fn zeros(config: &BackboneConfig) -> Result<Self> {
        config.validate()?;
        let grid = config.grid()?;
        let d = config.embed_dim;
        let pd = grid.patch_dim();
        Ok(Self {
            patch_embed_w: Array2::zeros((pd, d)),
            patch_embed_b: Array1::zeros(d),
            pos_embed: Array2::zeros((grid.n_patches(), d)),
            mask_token: Array1::zeros(d),
            blocks: (0..config.depth).map(|_| BlockParams::zeros(d, config.hidden_dim())).collect(),
            head_w: Array2::zeros((d, pd)),
            head_b: Array1::zeros(pd),
        })
    }

    /// Read-only directory of `(name, view)` pairs in stable order.
    pub fn tensors(&self) -> Vec<(String, ArrayViewD<'_, f64>)> {
        let mut out: Vec<(String, ArrayViewD<'_, f64>)> = vec![
            ("patch_embed.weight".into(), self.patch_embed_w.view().into_dyn()),
            ("patch_embed.bias".into(), self.patch_embed_b.view().into_dyn()),
            ("pos_embed".into(), self.pos_embed.view().into_dyn()),
            ("mask_token".into(), self.mask_token.view().into_dyn()),
        ];
        for (i, b) in self.blocks.iter().enumerate() {
            out.push((format!("blocks.{i}.ln1.gamma"), b.ln1.gamma.view().into_dyn()));
            out.push((format!("blocks.{i}.ln1.beta"), b.ln1.beta.view().into_dyn()));
            out.push((format!("blocks.{i}.attn.qkv.weight"), b.w_qkv.view().into_dyn()));
            out.push((format!("blocks.{i}.attn.qkv.bias"), b.b_qkv.view().into_dyn()));
            out.push((format!("blocks.{i}.attn.proj.weight"), b.w_proj.view().into_dyn()));
            out.push((format!("blocks.{i}.attn.proj.bias"), b.b_proj.view().into_dyn()));
            out.push((format!("blocks.{i}.ln2.gamma"), b.ln2.gamma.view().into_dyn()));
            out.push((format!("blocks.{i}.ln2.beta"), b.ln2.beta.view().into_dyn()));
            out.push((format!("blocks.{i}.mlp.fc1.weight"), b.w_fc1.view().into_dyn()));
            out.push((format!("blocks.{i}.mlp.fc1.bias"), b.b_fc1.view().into_dyn()));
            out.push((format!("blocks.{i}.mlp.fc2.weight"), b.w_fc2.view().into_dyn()));
            out.push((format!("blocks.{i}.mlp.fc2.bias"), b.b_fc2.view().into_dyn()));
        }
        out.push(("head.weight".into(), self.head_w.view().into_dyn()));
        out.push(("head.bias".into(), self.head_b.view().into_dyn()));
        out
    }

    /// Mutable directory; same names and order as [`Self::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<(String, ArrayViewMutD<'_, f64>)> {
        let mut out: Vec<(String, ArrayViewMutD<'_, f64>)> = vec![
            ("patch_embed.weight".into(), self.patch_embed_w.view_mut().into_dyn()),
            ("patch_embed.bias".into(), self.patch_embed_b.view_mut().into_dyn()),
            ("pos_embed".into(), self.pos_embed.view_mut().into_dyn()),
            ("mask_token".into(), self.mask_token.view_mut().into_dyn()),
        ];
        for (i, b) in self.blocks.iter_mut().enumerate() {
            out.push((format!("blocks.{i}.ln1.gamma"), b.ln1.gamma.view_mut().into_dyn()));
            out.push((format!("blocks.{i}.ln1.beta"), b.ln1.beta.view_mut().into_dyn()));
            out.push((format!("blocks.{i}.attn.qkv.weight"), b.w_qkv.view_mut().into_dyn()));
            out.push((format!("blocks.{i}.attn.qkv.bias"), b.b_qkv.view_mut().into_dyn()));
            out.push((format!("blocks.{i}.attn.proj.weight"), b.w_proj.view_mut().into_dyn()));
            out.push((format!("blocks.{i}.attn.proj.bias"), b.b_proj.view_mut().into_dyn()));
            out.push((format!("blocks.{i}.ln2.gamma"), b.ln2.gamma.view_mut().into_dyn()));
            out.push((format!("blocks.{i}.ln2.beta"), b.ln2.beta.view_mut().into_dyn()));
            out.push((format!("blocks.{i}.mlp.fc1.weight"), b.w_fc1.view_mut().into_dyn()));
            out.push((format!("blocks.{i}.mlp.fc1.bias"), b.b_fc1.view_mut().into_dyn()));
            out.push((format!("blocks.{i}.mlp.fc2.weight"), b.w_fc2.view_mut().into_dyn()));
            out.push((format!("blocks.{i}.mlp.fc2.bias"), b.b_fc2.view_mut().into_dyn()));
        }
        out.push(("head.weight".into(), self.head_w.view_mut().into_dyn()));
        out.push(("head.bias".into(), self.head_b.view_mut().into_dyn()));
        out
    }

    /// Number of scalar parameters.
    pub fn n_scalars(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// True when every entry of every tensor is finite.
    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }
}

/// Draws from a zero-mean normal truncated at `INIT_TRUNC_SIGMAS` standard
/// deviations, by rejection.
fn truncated_normal(rng: &mut ChaCha8Rng, normal: &Normal<f64>) -> f64 {
    let bound = INIT_STD * INIT_TRUNC_SIGMAS;
    loop {
        let v = normal.sample(rng);
        if v.abs() <= bound {
            return v;
        }
    }
}

/// Deterministic parameter initialization: affine weights, positional
/// embeddings, and the mask token from a truncated normal of scale
/// [`INIT_STD`]; biases zero; normalization gains one.
pub fn init_params(config: &BackboneConfig, seed: u64) -> Result<BackboneParams> {
    let mut params = BackboneParams::zeros(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, INIT_STD)
        .map_err(|e| Error::Config(format!("init distribution: {e}")))?;
    for (name, mut tensor) in params.tensors_mut() {
        if name.ends_with(".bias") || name.ends_with(".beta") {
            tensor.fill(0.0);
        } else if name.ends_with(".gamma") {
            tensor.fill(1.0);
        } else {
            for v in tensor.iter_mut() {
                *v = truncated_normal(&mut rng, &normal);
            }
        }
    }
    Ok(params)
}

/// Applies `f(dst, src)` over every aligned scalar pair of two directories.
pub fn zip_tensors_mut(dst: &mut BackboneParams, src: &BackboneParams, mut f: impl FnMut(&mut f64, f64)) {
    let srcs = src.tensors();
    for ((dn, mut d), (sn, s)) in dst.tensors_mut().into_iter().zip(srcs) {
        debug_assert_eq!(dn, sn);
        for (dv, sv) in d.iter_mut().zip(s.iter()) {
            f(dv, *sv);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> BackboneConfig {
        BackboneConfig {
            embed_dim: 8,
            depth: 1,
            heads: 2,
            window: None,
            patch_size: 4,
            height: 8,
            width: 8,
            channels: 1,
            mlp_ratio: 2.0,
        }
    }

    #[test]
    fn init_is_deterministic() {
        let cfg = tiny_config();
        let a = init_params(&cfg, 7).unwrap();
        let b = init_params(&cfg, 7).unwrap();
        assert_eq!(a, b);
        let c = init_params(&cfg, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn init_biases_zero_gains_one() {
        let params = init_params(&tiny_config(), 3).unwrap();
        for (name, t) in params.tensors() {
            if name.ends_with(".bias") || name.ends_with(".beta") {
                assert!(t.iter().all(|&v| v == 0.0), "{name} not zero");
            } else if name.ends_with(".gamma") {
                assert!(t.iter().all(|&v| v == 1.0), "{name} not one");
            } else {
                assert!(t.iter().any(|&v| v != 0.0), "{name} left at zero");
                assert!(
                    t.iter().all(|&v| v.abs() <= INIT_STD * INIT_TRUNC_SIGMAS),
                    "{name} exceeds truncation bound"
                );
            }
        }
    }

    #[test]
    fn init_shapes_match_tiny_config() {
        // D=8, depth=1, heads=2, P=4 over an 8x8x1 image: N=4 patches, P^2 C=16.
        let params = init_params(&tiny_config(), 0).unwrap();
        assert_eq!(params.patch_embed_w.dim(), (16, 8));
        assert_eq!(params.patch_embed_b.len(), 8);
        assert_eq!(params.pos_embed.dim(), (4, 8));
        assert_eq!(params.mask_token.len(), 8);
        assert_eq!(params.blocks.len(), 1);
        assert_eq!(params.blocks[0].w_qkv.dim(), (8, 24));
        assert_eq!(params.blocks[0].w_fc1.dim(), (8, 16));
        assert_eq!(params.blocks[0].w_fc2.dim(), (16, 8));
        assert_eq!(params.head_w.dim(), (8, 16));
        assert_eq!(params.head_b.len(), 16);
    }

    #[test]
    fn tensor_directories_align() {
        let mut params = init_params(&tiny_config(), 1).unwrap();
        let names: Vec<String> = params.tensors().into_iter().map(|(n, _)| n).collect();
        let names_mut: Vec<String> = params.tensors_mut().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names, names_mut);
        let unique: std::collections::BTreeSet<_> = names.iter().collect();
        assert_eq!(unique.len(), names.len(), "duplicate tensor name");
    }

    #[test]
    fn zip_tensors_adds_elementwise() {
        let cfg = tiny_config();
        let mut a = init_params(&cfg, 1).unwrap();
        let b = init_params(&cfg, 2).unwrap();
        let a0 = a.clone();
        zip_tensors_mut(&mut a, &b, |d, s| *d += s);
        let (a0t, bt, at) = (a0.tensors(), b.tensors(), a.tensors());
        for i in 0..at.len() {
            for ((x, y), z) in a0t[i].1.iter().zip(bt[i].1.iter()).zip(at[i].1.iter()) {
                assert_eq!(*z, x + y);
            }
        }
    }
}
