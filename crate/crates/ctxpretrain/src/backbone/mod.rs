//! Shared encoder and prediction head of the two pretraining branches.
//!
//! Both branches run the same patchify → embed → encode → predict pipeline
//! over one parameter set; the reconstructive branch additionally swaps
//! masked tokens for a learned mask token before encoding. Mask selection is
//! deliberately absent here — the head predicts every position and the
//! objective reads only masked ones.

pub mod nn;
pub mod params;

use crate::error::{Error, Result};
use crate::patchgrid::{patchify, MaskSpec, PatchGrid, PatchSequence};
use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

pub use params::{init_params, BackboneParams, BlockParams, LayerNormParams};

/// Architecture hyperparameters of encoder and head.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackboneConfig {
    /// Token width `D`.
    pub embed_dim: usize,
    /// Number of transformer blocks; zero makes the encoder the identity.
    pub depth: usize,
    pub heads: usize,
    /// Tokens per attention-window side; `None` means full attention.
    pub window: Option<usize>,
    pub patch_size: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    /// MLP hidden width as a multiple of `embed_dim`.
    pub mlp_ratio: f64,
}

impl Default for BackboneConfig {
    /// Desk-scale default: small enough to pretrain on one CPU core in
    /// minutes, large enough for the probe to find signal.
    fn default() -> Self {
        Self {
            embed_dim: 16,
            depth: 2,
            heads: 4,
            window: None,
            patch_size: 4,
            height: 32,
            width: 32,
            channels: 3,
            mlp_ratio: 2.0,
        }
    }
}

impl BackboneConfig {
    /// Checks every structural invariant.
    pub fn validate(&self) -> Result<()> {
        let grid = self.grid()?;
        if self.embed_dim == 0 || self.heads == 0 {
            return Err(Error::Config("embed_dim and heads must be positive".into()));
        }
        if !self.embed_dim.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "embed_dim {} not divisible by heads {}",
                self.embed_dim, self.heads
            )));
        }
        if !(self.mlp_ratio > 0.0) || !self.mlp_ratio.is_finite() {
            return Err(Error::Config(format!("mlp_ratio {} must be positive", self.mlp_ratio)));
        }
        if let Some(w) = self.window {
            if w == 0 {
                return Err(Error::Config("window must be positive when set".into()));
            }
            if grid.n_rows() % w != 0 || grid.n_cols() % w != 0 {
                return Err(Error::Config(format!(
                    "window {w} does not tile the {}x{} patch grid",
                    grid.n_rows(),
                    grid.n_cols()
                )));
            }
        }
        Ok(())
    }

    /// Patch geometry implied by the image fields.
    pub fn grid(&self) -> Result<PatchGrid> {
        PatchGrid::new(self.height, self.width, self.channels, self.patch_size)
    }

    /// MLP hidden width.
    pub fn hidden_dim(&self) -> usize {
        ((self.embed_dim as f64 * self.mlp_ratio).round() as usize).max(1)
    }
}

/// `N x D` token matrix aligned with the patch grid's row order.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSequence {
    pub values: Array2<f64>,
}

impl TokenSequence {
    pub fn n_tokens(&self) -> usize {
        self.values.nrows()
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }
}

/// Which pipeline produced a prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// Masked input; the prediction target of the reconstruction loss.
    Reconstructive,
    /// Unmasked input; supplies the consistency template.
    Context,
}

/// Per-patch pixel predictions of one branch.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchOutput {
    pub predicted: PatchSequence,
    pub branch: Branch,
}

/// Affine patch embedding plus positional term: `row_i * W + b + pos_i`.
pub fn embed_patches(seq: &PatchSequence, params: &BackboneParams) -> Result<TokenSequence> {
    if seq.values.ncols() != params.patch_embed_w.nrows() {
        return Err(Error::Dimension(format!(
            "patch dim {} does not match embedding input {}",
            seq.values.ncols(),
            params.patch_embed_w.nrows()
        )));
    }
    if seq.values.nrows() != params.pos_embed.nrows() {
        return Err(Error::Dimension(format!(
            "sequence length {} does not match positional table {}",
            seq.values.nrows(),
            params.pos_embed.nrows()
        )));
    }
    let values = seq.values.dot(&params.patch_embed_w) + &params.patch_embed_b + &params.pos_embed;
    Ok(TokenSequence { values })
}

/// Replaces masked rows by `mask_token + pos_i`; unmasked rows pass through.
pub fn substitute_mask_tokens(
    tokens: &TokenSequence,
    mask: &MaskSpec,
    params: &BackboneParams,
) -> Result<TokenSequence> {
    if mask.indicator.len() != tokens.n_tokens() {
        return Err(Error::Dimension(format!(
            "mask length {} does not match {} tokens",
            mask.indicator.len(),
            tokens.n_tokens()
        )));
    }
    let mut values = tokens.values.clone();
    for (i, &masked) in mask.indicator.iter().enumerate() {
        if masked {
            let pos = params.pos_embed.row(i);
            for (j, v) in values.row_mut(i).iter_mut().enumerate() {
                *v = params.mask_token[j] + pos[j];
            }
        }
    }
    Ok(TokenSequence { values })
}

/// Runs the transformer stack; `depth = 0` returns the input unchanged.
pub fn encode(
    tokens: &TokenSequence,
    config: &BackboneConfig,
    params: &BackboneParams,
) -> Result<TokenSequence> {
    check_token_shape(tokens, config)?;
    let windows = nn::attention_windows(config);
    let (values, _) = nn::encode_forward(&tokens.values, config, params, &windows);
    Ok(TokenSequence { values })
}

/// Affine map `D -> P^2 C` applied to every token row.
pub fn predict_pixels(
    tokens: &TokenSequence,
    config: &BackboneConfig,
    params: &BackboneParams,
) -> Result<PatchSequence> {
    check_token_shape(tokens, config)?;
    let pred = nn::head_forward(&tokens.values, params);
    PatchSequence::new(config.grid()?, pred)
}

fn check_token_shape(tokens: &TokenSequence, config: &BackboneConfig) -> Result<()> {
    let grid = config.grid()?;
    if tokens.n_tokens() != grid.n_patches() || tokens.dim() != config.embed_dim {
        return Err(Error::Dimension(format!(
            "token matrix {}x{} does not match {} patches x dim {}",
            tokens.n_tokens(),
            tokens.dim(),
            grid.n_patches(),
            config.embed_dim
        )));
    }
    Ok(())
}

/// Masked-input branch: patchify, embed, substitute mask tokens, encode,
/// predict all positions.
pub fn forward_reconstructive(
    image: &Array3<f64>,
    mask: &MaskSpec,
    config: &BackboneConfig,
    params: &BackboneParams,
) -> Result<BranchOutput> {
    let (out, _) = forward_cached(image, Some(mask), config, params)?;
    Ok(out)
}

/// Unmasked-input branch over the same shared parameters; the mask plays no
/// role in this forward pass (it only defines the loss support later).
pub fn forward_context(
    image: &Array3<f64>,
    _mask: &MaskSpec,
    config: &BackboneConfig,
    params: &BackboneParams,
) -> Result<BranchOutput> {
    let (mut out, _) = forward_cached(image, None, config, params)?;
    out.branch = Branch::Context;
    Ok(out)
}

/// Everything the backward pass needs about one branch forward.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Patchified input pixels (embedding input).
    pub seq_values: Array2<f64>,
    /// Mask applied before encoding, if any.
    pub mask: Option<MaskSpec>,
    /// Tokens entering the encoder.
    pub encode_in: Array2<f64>,
    pub encode: nn::EncodeCache,
    /// Tokens leaving the encoder (head input).
    pub encoded: Array2<f64>,
}

/// Cached forward shared by both branches; `mask = None` is the context path.
pub fn forward_cached(
    image: &Array3<f64>,
    mask: Option<&MaskSpec>,
    config: &BackboneConfig,
    params: &BackboneParams,
) -> Result<(BranchOutput, ForwardCache)> {
    config.validate()?;
    let (c, h, w) = image.dim();
    if (c, h, w) != (config.channels, config.height, config.width) {
        return Err(Error::Dimension(format!(
            "image {c}x{h}x{w} does not match configured {}x{}x{}",
            config.channels, config.height, config.width
        )));
    }
    let seq = patchify(image, config.patch_size)?;
    let embedded = embed_patches(&seq, params)?;
    let (encode_in, branch) = match mask {
        Some(m) => (substitute_mask_tokens(&embedded, m, params)?, Branch::Reconstructive),
        None => (embedded, Branch::Context),
    };
    let windows = nn::attention_windows(config);
    let (encoded, encode_cache) = nn::encode_forward(&encode_in.values, config, params, &windows);
    let pred = nn::head_forward(&encoded, params);
    let out = BranchOutput { predicted: PatchSequence::new(config.grid()?, pred)?, branch };
    let cache = ForwardCache {
        seq_values: seq.values,
        mask: mask.cloned(),
        encode_in: encode_in.values,
        encode: encode_cache,
        encoded,
    };
    Ok((out, cache))
}

/// Backpropagates a head-output gradient through one cached branch forward,
/// accumulating into `grads`.
pub fn backward_branch(
    d_pred: &Array2<f64>,
    cache: &ForwardCache,
    config: &BackboneConfig,
    params: &BackboneParams,
    grads: &mut BackboneParams,
) {
    let d_tokens = nn::head_backward(d_pred, &cache.encoded, params, grads);
    backward_tokens(&d_tokens, cache, config, params, grads);
}

/// Backpropagates a gradient on the encoder's output tokens through the
/// encoder and embedding, accumulating into `grads`. Used directly by the
/// fine-tuning probe, and by [`backward_branch`] after the head.
pub fn backward_tokens(
    d_tokens: &Array2<f64>,
    cache: &ForwardCache,
    config: &BackboneConfig,
    params: &BackboneParams,
    grads: &mut BackboneParams,
) {
    let windows = nn::attention_windows(config);
    let d_in = nn::encode_backward(d_tokens, &cache.encode, config, params, grads, &windows);
    // Embedding stage: masked rows fed mask_token + pos; unmasked rows fed
    // seq * W + b + pos.
    let n = d_in.nrows();
    for i in 0..n {
        let masked = cache.mask.as_ref().is_some_and(|m| m.indicator[i]);
        let d_row = d_in.row(i);
        grads.pos_embed.row_mut(i).zip_mut_with(&d_row, |g, &d| *g += d);
        if masked {
            grads.mask_token.zip_mut_with(&d_row, |g, &d| *g += d);
        } else {
            let x_row = cache.seq_values.row(i);
            for (k, &xv) in x_row.iter().enumerate() {
                for (j, &dv) in d_row.iter().enumerate() {
                    grads.patch_embed_w[[k, j]] += xv * dv;
                }
            }
            grads.patch_embed_b.zip_mut_with(&d_row, |g, &d| *g += d);
        }
    }
}
