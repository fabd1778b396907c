//! Hand-written forward and backward passes of the encoder internals.
//!
//! Everything is double precision and allocation-per-call; sizes are desk
//! scale (tens of tokens, tens of channels) so clarity wins over blocking
//! tricks. Backward functions accumulate into a caller-owned gradient set so
//! batch reduction order stays fixed.

use crate::backbone::params::{BackboneParams, BlockParams, LayerNormParams};
use crate::backbone::BackboneConfig;
use ndarray::{s, Array1, Array2, Array3, Axis};

/// Additive variance guard of layer normalization.
pub const LN_EPS: f64 = 1e-5;

const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
const GELU_CUBIC: f64 = 0.044_715;

// ---------------------------------------------------------------- layernorm

/// Saved activations of one layer-norm application.
#[derive(Debug, Clone)]
pub struct LayerNormCache {
    /// Normalized rows before the affine map.
    pub x_hat: Array2<f64>,
    pub inv_std: Array1<f64>,
}

/// Per-row normalization followed by the learned affine map.
pub fn layernorm_forward(x: &Array2<f64>, ln: &LayerNormParams) -> (Array2<f64>, LayerNormCache) {
    let (n, d) = x.dim();
    let mut x_hat = Array2::zeros((n, d));
    let mut inv_std = Array1::zeros(n);
    let mut y = Array2::zeros((n, d));
    for i in 0..n {
        let row = x.row(i);
        let mean = row.mean().expect("non-empty row");
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let is = 1.0 / (var + LN_EPS).sqrt();
        inv_std[i] = is;
        for j in 0..d {
            let xh = (x[[i, j]] - mean) * is;
            x_hat[[i, j]] = xh;
            y[[i, j]] = xh * ln.gamma[j] + ln.beta[j];
        }
    }
    (y, LayerNormCache { x_hat, inv_std })
}

/// Backward pass of [`layernorm_forward`]; accumulates parameter gradients
/// and returns the gradient with respect to the input.
pub fn layernorm_backward(
    dy: &Array2<f64>,
    cache: &LayerNormCache,
    ln: &LayerNormParams,
    d_gamma: &mut Array1<f64>,
    d_beta: &mut Array1<f64>,
) -> Array2<f64> {
    let (n, d) = dy.dim();
    let mut dx = Array2::zeros((n, d));
    for i in 0..n {
        let mut mean_dxhat = 0.0;
        let mut mean_dxhat_xhat = 0.0;
        for j in 0..d {
            let g = dy[[i, j]];
            let xh = cache.x_hat[[i, j]];
            d_gamma[j] += g * xh;
            d_beta[j] += g;
            let dxhat = g * ln.gamma[j];
            mean_dxhat += dxhat;
            mean_dxhat_xhat += dxhat * xh;
        }
        mean_dxhat /= d as f64;
        mean_dxhat_xhat /= d as f64;
        for j in 0..d {
            let dxhat = dy[[i, j]] * ln.gamma[j];
            dx[[i, j]] =
                cache.inv_std[i] * (dxhat - mean_dxhat - cache.x_hat[[i, j]] * mean_dxhat_xhat);
        }
    }
    dx
}

// --------------------------------------------------------------------- gelu

/// Smooth GELU (tanh form).
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (SQRT_2_OVER_PI * (x + GELU_CUBIC * x * x * x)).tanh())
}

/// Derivative of [`gelu`].
pub fn gelu_prime(x: f64) -> f64 {
    let u = SQRT_2_OVER_PI * (x + GELU_CUBIC * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_CUBIC * x * x)
}

// ------------------------------------------------------------------ softmax

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(x: &Array2<f64>) -> Array2<f64> {
    let mut y = x.clone();
    for mut row in y.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    y
}

/// Backward of row-wise softmax: `dx = (dy - <dy, y>) * y` per row.
pub fn softmax_rows_backward(dy: &Array2<f64>, y: &Array2<f64>) -> Array2<f64> {
    let (n, d) = y.dim();
    let mut dx = Array2::zeros((n, d));
    for i in 0..n {
        let dot: f64 = (0..d).map(|j| dy[[i, j]] * y[[i, j]]).sum();
        for j in 0..d {
            dx[[i, j]] = (dy[[i, j]] - dot) * y[[i, j]];
        }
    }
    dx
}

// ---------------------------------------------------------------- attention

/// Token-index sets attended jointly: one set per attention window, or a
/// single set of all tokens for full attention.
pub fn attention_windows(config: &BackboneConfig) -> Vec<Vec<usize>> {
    let grid = config.grid().expect("validated config");
    let (rows, cols) = (grid.n_rows(), grid.n_cols());
    match config.window {
        None => vec![(0..rows * cols).collect()],
        Some(w) => {
            let mut windows = Vec::with_capacity((rows / w) * (cols / w));
            for wr in 0..rows / w {
                for wc in 0..cols / w {
                    let mut idx = Vec::with_capacity(w * w);
                    for dy in 0..w {
                        for dx in 0..w {
                            idx.push((wr * w + dy) * cols + wc * w + dx);
                        }
                    }
                    windows.push(idx);
                }
            }
            windows
        }
    }
}

/// Saved activations of one block's attention sub-layer.
#[derive(Debug, Clone)]
pub struct AttentionCache {
    pub q: Array2<f64>,
    pub k: Array2<f64>,
    pub v: Array2<f64>,
    /// Per window: `heads x s x s` post-softmax weights.
    pub soft: Vec<Array3<f64>>,
    /// Head outputs re-concatenated, before the output projection.
    pub concat: Array2<f64>,
}

fn gather_rows(x: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((idx.len(), x.ncols()));
    for (r, &i) in idx.iter().enumerate() {
        out.row_mut(r).assign(&x.row(i));
    }
    out
}

/// Multi-head self-attention over each window's token set.
pub fn attention_forward(
    x: &Array2<f64>,
    block: &BlockParams,
    config: &BackboneConfig,
    windows: &[Vec<usize>],
) -> (Array2<f64>, AttentionCache) {
    let (n, d) = x.dim();
    let heads = config.heads;
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();

    let qkv = x.dot(&block.w_qkv) + &block.b_qkv;
    let q = qkv.slice(s![.., 0..d]).to_owned();
    let k = qkv.slice(s![.., d..2 * d]).to_owned();
    let v = qkv.slice(s![.., 2 * d..3 * d]).to_owned();

    let mut concat = Array2::zeros((n, d));
    let mut soft = Vec::with_capacity(windows.len());
    for idx in windows {
        let sz = idx.len();
        let qw = gather_rows(&q, idx);
        let kw = gather_rows(&k, idx);
        let vw = gather_rows(&v, idx);
        let mut soft_w = Array3::zeros((heads, sz, sz));
        for h in 0..heads {
            let cols = s![.., h * dh..(h + 1) * dh];
            let qh = qw.slice(cols).to_owned();
            let kh = kw.slice(cols).to_owned();
            let vh = vw.slice(cols).to_owned();
            let scores = qh.dot(&kh.t()) * scale;
            let a = softmax_rows(&scores);
            let oh = a.dot(&vh);
            soft_w.index_axis_mut(Axis(0), h).assign(&a);
            for (r, &i) in idx.iter().enumerate() {
                for c in 0..dh {
                    concat[[i, h * dh + c]] = oh[[r, c]];
                }
            }
        }
        soft.push(soft_w);
    }
    let out = concat.dot(&block.w_proj) + &block.b_proj;
    (out, AttentionCache { q, k, v, soft, concat })
}

/// Backward of [`attention_forward`]. `x` is the sub-layer input;
/// accumulates into the matching gradient block and returns `dL/dx`.
#[allow(clippy::too_many_arguments)]
pub fn attention_backward(
    d_out: &Array2<f64>,
    x: &Array2<f64>,
    cache: &AttentionCache,
    block: &BlockParams,
    grads: &mut BlockParams,
    config: &BackboneConfig,
    windows: &[Vec<usize>],
) -> Array2<f64> {
    let (n, d) = x.dim();
    let heads = config.heads;
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();

    grads.w_proj += &cache.concat.t().dot(d_out);
    grads.b_proj += &d_out.sum_axis(Axis(0));
    let d_concat = d_out.dot(&block.w_proj.t());

    let mut dq = Array2::zeros((n, d));
    let mut dk = Array2::zeros((n, d));
    let mut dv = Array2::zeros((n, d));
    for (widx, idx) in windows.iter().enumerate() {
        let qw = gather_rows(&cache.q, idx);
        let kw = gather_rows(&cache.k, idx);
        let vw = gather_rows(&cache.v, idx);
        let d_conc_w = gather_rows(&d_concat, idx);
        for h in 0..heads {
            let cols = s![.., h * dh..(h + 1) * dh];
            let qh = qw.slice(cols).to_owned();
            let kh = kw.slice(cols).to_owned();
            let vh = vw.slice(cols).to_owned();
            let a = cache.soft[widx].index_axis(Axis(0), h).to_owned();
            let d_oh = d_conc_w.slice(cols).to_owned();
            let d_a = d_oh.dot(&vh.t());
            let d_vh = a.t().dot(&d_oh);
            let d_scores = softmax_rows_backward(&d_a, &a);
            let d_qh = d_scores.dot(&kh) * scale;
            let d_kh = d_scores.t().dot(&qh) * scale;
            for (r, &i) in idx.iter().enumerate() {
                for c in 0..dh {
                    dq[[i, h * dh + c]] += d_qh[[r, c]];
                    dk[[i, h * dh + c]] += d_kh[[r, c]];
                    dv[[i, h * dh + c]] += d_vh[[r, c]];
                }
            }
        }
    }

    let mut d_qkv = Array2::zeros((n, 3 * d));
    d_qkv.slice_mut(s![.., 0..d]).assign(&dq);
    d_qkv.slice_mut(s![.., d..2 * d]).assign(&dk);
    d_qkv.slice_mut(s![.., 2 * d..3 * d]).assign(&dv);
    grads.w_qkv += &x.t().dot(&d_qkv);
    grads.b_qkv += &d_qkv.sum_axis(Axis(0));
    d_qkv.dot(&block.w_qkv.t())
}

// ------------------------------------------------------------------- blocks

/// Saved activations of one transformer block.
#[derive(Debug, Clone)]
pub struct BlockCache {
    pub ln1: LayerNormCache,
    /// Output of the first layer norm (attention input).
    pub a_in: Array2<f64>,
    pub attn: AttentionCache,
    pub ln2: LayerNormCache,
    /// Output of the second layer norm (MLP input).
    pub m_in: Array2<f64>,
    /// MLP pre-activation.
    pub pre: Array2<f64>,
    /// MLP hidden activation.
    pub hidden: Array2<f64>,
}

/// Pre-norm block: `x + attn(ln1(x))`, then `+ mlp(ln2(·))`.
pub fn block_forward(
    x: &Array2<f64>,
    block: &BlockParams,
    config: &BackboneConfig,
    windows: &[Vec<usize>],
) -> (Array2<f64>, BlockCache) {
    let (a_in, ln1) = layernorm_forward(x, &block.ln1);
    let (attn_out, attn) = attention_forward(&a_in, block, config, windows);
    let x2 = x + &attn_out;
    let (m_in, ln2) = layernorm_forward(&x2, &block.ln2);
    let pre = m_in.dot(&block.w_fc1) + &block.b_fc1;
    let hidden = pre.mapv(gelu);
    let y = &x2 + &hidden.dot(&block.w_fc2) + &block.b_fc2;
    (y, BlockCache { ln1, a_in, attn, ln2, m_in, pre, hidden })
}

/// Backward of [`block_forward`].
pub fn block_backward(
    dy: &Array2<f64>,
    cache: &BlockCache,
    block: &BlockParams,
    grads: &mut BlockParams,
    config: &BackboneConfig,
    windows: &[Vec<usize>],
) -> Array2<f64> {
    grads.w_fc2 += &cache.hidden.t().dot(dy);
    grads.b_fc2 += &dy.sum_axis(Axis(0));
    let d_hidden = dy.dot(&block.w_fc2.t());
    let d_pre = &d_hidden * &cache.pre.mapv(gelu_prime);
    grads.w_fc1 += &cache.m_in.t().dot(&d_pre);
    grads.b_fc1 += &d_pre.sum_axis(Axis(0));
    let d_m_in = d_pre.dot(&block.w_fc1.t());
    let d_x2_from_ln2 =
        layernorm_backward(&d_m_in, &cache.ln2, &block.ln2, &mut grads.ln2.gamma, &mut grads.ln2.beta);
    let d_x2 = dy + &d_x2_from_ln2;
    let d_a_in =
        attention_backward(&d_x2, &cache.a_in, &cache.attn, block, grads, config, windows);
    let d_x_from_ln1 =
        layernorm_backward(&d_a_in, &cache.ln1, &block.ln1, &mut grads.ln1.gamma, &mut grads.ln1.beta);
    &d_x2 + &d_x_from_ln1
}

// ------------------------------------------------------------------ encoder

/// Saved activations of the whole encoder stack.
#[derive(Debug, Clone)]
pub struct EncodeCache {
    pub blocks: Vec<BlockCache>,
}

/// Runs all blocks; depth zero is the identity.
pub fn encode_forward(
    x: &Array2<f64>,
    config: &BackboneConfig,
    params: &BackboneParams,
    windows: &[Vec<usize>],
) -> (Array2<f64>, EncodeCache) {
    let mut cur = x.clone();
    let mut blocks = Vec::with_capacity(params.blocks.len());
    for block in &params.blocks {
        let (next, cache) = block_forward(&cur, block, config, windows);
        cur = next;
        blocks.push(cache);
    }
    (cur, EncodeCache { blocks })
}

/// Backward of [`encode_forward`]; accumulates into `grads.blocks`.
pub fn encode_backward(
    dy: &Array2<f64>,
    cache: &EncodeCache,
    config: &BackboneConfig,
    params: &BackboneParams,
    grads: &mut BackboneParams,
    windows: &[Vec<usize>],
) -> Array2<f64> {
    let mut cur = dy.clone();
    for i in (0..params.blocks.len()).rev() {
        cur = block_backward(&cur, &cache.blocks[i], &params.blocks[i], &mut grads.blocks[i], config, windows);
    }
    cur
}

// --------------------------------------------------------------------- head

/// Affine pixel head applied to every token row.
pub fn head_forward(tokens: &Array2<f64>, params: &BackboneParams) -> Array2<f64> {
    tokens.dot(&params.head_w) + &params.head_b
}

/// Backward of [`head_forward`].
pub fn head_backward(
    d_pred: &Array2<f64>,
    tokens: &Array2<f64>,
    params: &BackboneParams,
    grads: &mut BackboneParams,
) -> Array2<f64> {
    grads.head_w += &tokens.t().dot(d_pred);
    grads.head_b += &d_pred.sum_axis(Axis(0));
    d_pred.dot(&params.head_w.t())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::params::init_params;
    use ndarray::Array;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_mat(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0))
    }

    // Floor 1e-6: entries below it are held to an absolute bound, since the
    // finite-difference oracle's own roundoff noise dominates tiny gradients.
    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / f64::max(a.abs() + b.abs(), 1e-6)
    }

    #[test]
    fn gelu_matches_reference_points() {
        assert_eq!(gelu(0.0), 0.0);
        // Large inputs saturate to identity / zero.
        assert!((gelu(10.0) - 10.0).abs() < 1e-9);
        assert!(gelu(-10.0).abs() < 1e-9);
        // Reflection identity: gelu(x) - gelu(-x) = x.
        for x in [-1.7, -0.3, 0.4, 2.2] {
            assert!((gelu(x) - gelu(-x) - x).abs() < 1e-12);
        }
    }

    #[test]
    fn gelu_prime_matches_finite_difference() {
        let h = 1e-6;
        for x in [-3.0, -1.2, -0.1, 0.0, 0.5, 1.9, 3.3] {
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!(rel_err(fd, gelu_prime(x)) < 1e-6, "x={x}");
        }
    }

    #[test]
    fn softmax_rows_are_distributions() {
        let x = rand_mat(5, 7, 1) * 10.0;
        let y = softmax_rows(&x);
        for row in y.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn softmax_backward_matches_finite_difference() {
        let x = rand_mat(3, 5, 2);
        let r = rand_mat(3, 5, 3); // random cotangent
        let h = 1e-6;
        let y = softmax_rows(&x);
        let dx = softmax_rows_backward(&r, &y);
        for i in 0..3 {
            for j in 0..5 {
                let mut xp = x.clone();
                xp[[i, j]] += h;
                let mut xm = x.clone();
                xm[[i, j]] -= h;
                let fp = (softmax_rows(&xp) * &r).sum();
                let fm = (softmax_rows(&xm) * &r).sum();
                let fd = (fp - fm) / (2.0 * h);
                assert!(rel_err(fd, dx[[i, j]]) < 1e-5, "({i},{j})");
            }
        }
    }

    #[test]
    fn layernorm_normalizes_rows() {
        let x = rand_mat(4, 16, 4) * 3.0;
        let ln = LayerNormParams { gamma: Array1::ones(16), beta: Array1::zeros(16) };
        let (y, _) = layernorm_forward(&x, &ln);
        for row in y.rows() {
            let mean = row.mean().unwrap();
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 16.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-4); // LN_EPS shifts variance slightly
        }
    }

    #[test]
    fn layernorm_backward_matches_finite_difference() {
        let x = rand_mat(3, 8, 5);
        let r = rand_mat(3, 8, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let ln = LayerNormParams {
            gamma: Array::from_shape_fn(8, |_| rng.random_range(0.5..1.5)),
            beta: Array::from_shape_fn(8, |_| rng.random_range(-0.5..0.5)),
        };
        let (y0, cache) = layernorm_forward(&x, &ln);
        let _ = y0;
        let mut dg = Array1::zeros(8);
        let mut db = Array1::zeros(8);
        let dx = layernorm_backward(&r, &cache, &ln, &mut dg, &mut db);
        let h = 1e-6;
        let f = |xx: &Array2<f64>, lnp: &LayerNormParams| (layernorm_forward(xx, lnp).0 * &r).sum();
        for i in 0..3 {
            for j in 0..8 {
                let mut xp = x.clone();
                xp[[i, j]] += h;
                let mut xm = x.clone();
                xm[[i, j]] -= h;
                let fd = (f(&xp, &ln) - f(&xm, &ln)) / (2.0 * h);
                assert!(rel_err(fd, dx[[i, j]]) < 1e-5, "dx ({i},{j})");
            }
        }
        for j in 0..8 {
            let mut lp = ln.clone();
            lp.gamma[j] += h;
            let mut lm = ln.clone();
            lm.gamma[j] -= h;
            let fd = (f(&x, &lp) - f(&x, &lm)) / (2.0 * h);
            assert!(rel_err(fd, dg[j]) < 1e-5, "dgamma {j}");
            let mut lp = ln.clone();
            lp.beta[j] += h;
            let mut lm = ln.clone();
            lm.beta[j] -= h;
            let fd = (f(&x, &lp) - f(&x, &lm)) / (2.0 * h);
            assert!(rel_err(fd, db[j]) < 1e-5, "dbeta {j}");
        }
    }

    fn tiny_config(window: Option<usize>) -> BackboneConfig {
        BackboneConfig {
            embed_dim: 8,
            depth: 1,
            heads: 2,
            window,
            patch_size: 4,
            height: 16,
            width: 16,
            channels: 1,
            mlp_ratio: 2.0,
        }
    }

    #[test]
    fn encode_backward_matches_finite_difference() {
        // Scalar probe L = <encode(x), R>; checks dL/dx and dL/dtheta.
        let cfg = tiny_config(Some(2));
        let params = init_params(&cfg, 11).unwrap();
        let windows = attention_windows(&cfg);
        let n = cfg.grid().unwrap().n_patches();
        let x = rand_mat(n, cfg.embed_dim, 12);
        let r = rand_mat(n, cfg.embed_dim, 13);
        let f = |p: &BackboneParams, xx: &Array2<f64>| {
            (encode_forward(xx, &cfg, p, &windows).0 * &r).sum()
        };
        let (_, cache) = encode_forward(&x, &cfg, &params, &windows);
        let mut grads = BackboneParams::zeros(&cfg).unwrap();
        let dx = encode_backward(&r, &cache, &cfg, &params, &mut grads, &windows);
        // h = 1e-5 keeps central-difference roundoff (~eps/2h) below the
        // tolerance even for near-zero gradient entries.
        let h = 1e-5;
        for i in 0..n {
            for j in 0..cfg.embed_dim {
                let mut xp = x.clone();
                xp[[i, j]] += h;
                let mut xm = x.clone();
                xm[[i, j]] -= h;
                let fd = (f(&params, &xp) - f(&params, &xm)) / (2.0 * h);
                assert!(rel_err(fd, dx[[i, j]]) < 1e-4, "dx ({i},{j})");
            }
        }
        // Spot-check parameter gradients across every tensor of the block.
        let mut probe = params.clone();
        let flat_grads: Vec<(String, Vec<f64>)> = grads
            .tensors()
            .iter()
            .map(|(nm, t)| (nm.clone(), t.iter().cloned().collect()))
            .collect();
        for (t_idx, (name, g)) in flat_grads.iter().enumerate() {
            if !name.starts_with("blocks.") {
                continue; // encode touches only block weights
            }
            let stride = (g.len() / 5).max(1);
            for e_idx in (0..g.len()).step_by(stride) {
                let orig = {
                    let mut ts = probe.tensors_mut();
                    let v = ts[t_idx].1.iter_mut().nth(e_idx).unwrap();
                    let orig = *v;
                    *v = orig + h;
                    orig
                };
                let fp = f(&probe, &x);
                {
                    let mut ts = probe.tensors_mut();
                    *ts[t_idx].1.iter_mut().nth(e_idx).unwrap() = orig - h;
                }
                let fm = f(&probe, &x);
                {
                    let mut ts = probe.tensors_mut();
                    *ts[t_idx].1.iter_mut().nth(e_idx).unwrap() = orig;
                }
                let fd = (fp - fm) / (2.0 * h);
                assert!(rel_err(fd, g[e_idx]) < 1e-4, "{name}[{e_idx}]: fd={fd} an={}", g[e_idx]);
            }
        }
    }

    #[test]
    fn single_window_equals_full_attention() {
        let full = tiny_config(None);
        let windowed = BackboneConfig { window: Some(4), ..full };
        let params = init_params(&full, 21).unwrap();
        let x = rand_mat(16, 8, 22);
        let wf = attention_windows(&full);
        let ww = attention_windows(&windowed);
        let (yf, _) = encode_forward(&x, &full, &params, &wf);
        let (yw, _) = encode_forward(&x, &windowed, &params, &ww);
        let max_diff =
            yf.iter().zip(yw.iter()).map(|(a, b)| (a - b).abs()).fold(0.0f64, f64::max);
        assert!(max_diff <= 1e-12, "max diff {max_diff}");
    }

    #[test]
    fn windows_partition_the_grid() {
        let cfg = tiny_config(Some(2));
        let windows = attention_windows(&cfg);
        assert_eq!(windows.len(), 4);
        let mut seen: Vec<usize> = windows.iter().flatten().cloned().collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..16).collect::<Vec<_>>());
    }
}
