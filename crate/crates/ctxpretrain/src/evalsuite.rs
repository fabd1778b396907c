//! Evaluation harness: linear probing of frozen encoders, masked
//! reconstruction metrics, and the occlusion-coverage analyzer.
//!
//! The coverage analyzer answers the motivating question for dense-object
//! imagery: with `m` of `N` patches masked uniformly at random, how likely
//! is an object spanning `k` patches to be hidden entirely? The closed form
//! is hypergeometric; a Monte Carlo estimator drives the same mask sampler
//! the trainer uses, so a disagreement indicts the sampler, not the math.

use crate::backbone::{
    embed_patches, encode, forward_cached, init_params, BackboneConfig, BackboneParams,
};
use crate::backbone::params::zip_tensors_mut;
use crate::backbone::nn::softmax_rows;
use crate::datasets::LabeledImage;
use crate::error::{Error, Result};
use crate::objective::l1_masked;
use crate::patchgrid::{patchify, sample_mask, MaskSpec, PatchSequence};
use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Hyperparameters of the classification probe. Features are the mean over
/// the encoder's final token rows; a single affine classifier is trained on
/// them with softmax cross-entropy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    /// When set, the encoder is updated alongside the classifier instead of
    /// staying frozen.
    pub fine_tune: bool,
    /// Fraction of the dataset held out for the reported accuracy.
    pub holdout_fraction: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 64,
            lr: 0.2,
            seed: 0,
            fine_tune: false,
            holdout_fraction: 0.25,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("probe epochs and batch size must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("probe learning rate {} must be positive", self.lr)));
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return Err(Error::Config(format!(
                "holdout fraction {} outside (0, 1)",
                self.holdout_fraction
            )));
        }
        Ok(())
    }
}

/// Occlusion query: an object occupying `k` of `n` patches, `m` masked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageQuery {
    pub n: usize,
    pub k: usize,
    pub m: usize,
}

impl CoverageQuery {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k > self.n {
            return Err(Error::Range(format!(
                "object size {} outside [1, {}]",
                self.k, self.n
            )));
        }
        if self.m > self.n {
            return Err(Error::Range(format!(
                "masked count {} exceeds {} patches",
                self.m, self.n
            )));
        }
        Ok(())
    }
}

/// Masked-region reconstruction quality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReconMetrics {
    pub masked_l1: f64,
    pub masked_psnr_db: f64,
}

/// PSNR cap reported when the masked MSE is exactly zero (and ceiling
/// otherwise), keeping the metric total.
pub const PSNR_CAP_DB: f64 = 99.0;

/// Mean absolute error and PSNR (signal peak 1.0) over masked elements.
pub fn recon_metrics(
    pred: &PatchSequence,
    target: &PatchSequence,
    mask: &MaskSpec,
) -> Result<ReconMetrics> {
    let masked_l1 = l1_masked(pred, target, mask)?;
    let mut sq_sum = 0.0;
    let mut count = 0usize;
    for i in mask.masked_indices() {
        for (p, t) in pred.values.row(i).iter().zip(target.values.row(i)) {
            sq_sum += (p - t) * (p - t);
            count += 1;
        }
    }
    let mse = sq_sum / count as f64;
    let masked_psnr_db =
        if mse == 0.0 { PSNR_CAP_DB } else { (10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB) };
    Ok(ReconMetrics { masked_l1, masked_psnr_db })
}

/// `C(n, r)` computed exactly, or `None` on u128 overflow.
fn binomial_u128(n: usize, r: usize) -> Option<u128> {
    let r = r.min(n - r);
    let mut acc: u128 = 1;
    for i in 1..=r {
        // Each prefix is itself a binomial coefficient, so the division is
        // exact at every step.
        acc = acc.checked_mul((n - r + i) as u128)?;
        acc /= i as u128;
    }
    Some(acc)
}

/// Probability that all `k` object patches fall inside a uniformly random
/// `m`-subset of `n` patches: `C(n-k, m-k) / C(n, m)`, 0 when `m < k`.
pub fn coverage_closed_form(q: &CoverageQuery) -> Result<f64> {
    q.validate()?;
    if q.m < q.k {
        return Ok(0.0);
    }
    match (binomial_u128(q.n - q.k, q.m - q.k), binomial_u128(q.n, q.m)) {
        (Some(num), Some(den)) => Ok(num as f64 / den as f64),
        // Overflow fallback: the same ratio telescopes to a k-term product.
        _ => Ok((0..q.k).map(|i| (q.m - i) as f64 / (q.n - i) as f64).product()),
    }
}

/// Empirical full-occlusion frequency of the fixed patch set `{0..k}` under
/// the trainer's mask sampler; deterministic per seed.
pub fn coverage_monte_carlo(q: &CoverageQuery, trials: usize, seed: u64) -> Result<f64> {
    q.validate()?;
    if trials == 0 {
        return Err(Error::Range("monte carlo needs at least one trial".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0u64;
    for _ in 0..trials {
        let mask = sample_mask(q.n, q.m, seed, &mut rng);
        if mask.indicator[..q.k].iter().all(|&b| b) {
            hits += 1;
        }
    }
    Ok(hits as f64 / trials as f64)
}

/// Mean over the encoder's final token rows for one image.
fn pooled_feature(
    image: &ndarray::Array3<f64>,
    config: &BackboneConfig,
    params: &BackboneParams,
) -> Result<Array1<f64>> {
    let seq = patchify(image, config.patch_size)?;
    let tokens = embed_patches(&seq, params)?;
    let encoded = encode(&tokens, config, params)?;
    Ok(encoded.values.mean_axis(Axis(0)).expect("token sequence is nonempty"))
}

fn argmax(row: &Array1<f64>) -> usize {
    row.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
        .0
}

/// Trains an affine classifier on mean-pooled encoder features and returns
/// held-out top-1 accuracy. The encoder stays frozen unless
/// [`ProbeConfig::fine_tune`] is set; either way the caller's parameters are
/// untouched. Deterministic per seed.
pub fn linear_probe(
    params: &BackboneParams,
    config: &BackboneConfig,
    dataset: &[LabeledImage],
    probe: &ProbeConfig,
) -> Result<f64> {
    config.validate()?;
    probe.validate()?;
    if dataset.len() < 2 {
        return Err(Error::Data(format!(
            "probe needs at least 2 samples, got {}",
            dataset.len()
        )));
    }
    for img in dataset {
        if img.pixels.dim() != (config.channels, config.height, config.width) {
            return Err(Error::Dimension(format!(
                "probe image {:?} does not match configured {}x{}x{}",
                img.pixels.dim(),
                config.channels,
                config.height,
                config.width
            )));
        }
    }
    let n_classes = dataset.iter().map(|i| i.label).max().expect("nonempty") + 1;
    let distinct = {
        let mut seen = vec![false; n_classes];
        dataset.iter().for_each(|i| seen[i.label] = true);
        seen.iter().filter(|&&s| s).count()
    };
    if distinct < 2 {
        return Err(Error::Data("probe dataset has a single class".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(probe.seed);
    let mut indices: Vec<usize> = (0..dataset.len()).collect();
    indices.shuffle(&mut rng);
    let eval_count = crate::patchgrid::round_half_up(probe.holdout_fraction * dataset.len() as f64)
        .clamp(1, dataset.len() - 1);
    let (eval_idx, train_idx) = indices.split_at(eval_count);
    let mut train_idx = train_idx.to_vec();

    let mut encoder = params.clone();
    let dim = config.embed_dim;
    let initial_features: Vec<Array1<f64>> = dataset
        .iter()
        .map(|img| pooled_feature(&img.pixels, config, &encoder))
        .collect::<Result<_>>()?;
    // Per-dimension standardization over the train split: pooled features
    // vary wildly in scale across encoders, and the classifier's convergence
    // should not depend on that scale. Statistics stay fixed during
    // fine-tuning so train and eval features share one frame.
    let mut mu = Array1::<f64>::zeros(dim);
    for &i in &train_idx {
        mu += &initial_features[i];
    }
    mu /= train_idx.len() as f64;
    let mut var = Array1::<f64>::zeros(dim);
    for &i in &train_idx {
        let d = &initial_features[i] - &mu;
        var += &(&d * &d);
    }
    var /= train_idx.len() as f64;
    let sigma = var.mapv(|v| v.sqrt() + 1e-8);
    let standardize = |f: &Array1<f64>| (f - &mu) / &sigma;
    // Frozen encoders admit a one-time feature pass; fine-tuning recomputes.
    let frozen_features: Vec<Array1<f64>> =
        if probe.fine_tune { Vec::new() } else { initial_features.iter().map(&standardize).collect() };

    let mut w = Array2::<f64>::zeros((dim, n_classes));
    let mut b = Array1::<f64>::zeros(n_classes);
    let n_tokens = config.grid()?.n_patches() as f64;
    for _ in 0..probe.epochs {
        train_idx.shuffle(&mut rng);
        for batch in train_idx.chunks(probe.batch_size) {
            let scale = 1.0 / batch.len() as f64;
            let mut dw = Array2::<f64>::zeros((dim, n_classes));
            let mut db = Array1::<f64>::zeros(n_classes);
            let mut enc_grads =
                if probe.fine_tune { Some(BackboneParams::zeros(config)?) } else { None };
            for &i in batch {
                let (feature, cache) = if probe.fine_tune {
                    let (_, cache) = forward_cached(&dataset[i].pixels, None, config, &encoder)?;
                    let f = cache.encoded.mean_axis(Axis(0)).expect("nonempty");
                    (standardize(&f), Some(cache))
                } else {
                    (frozen_features[i].clone(), None)
                };
                let logits = (feature.dot(&w) + &b).insert_axis(Axis(0));
                let mut dlogits = softmax_rows(&logits).remove_axis(Axis(0));
                dlogits[dataset[i].label] -= 1.0;
                dlogits *= scale;
                dw += &feature
                    .view()
                    .insert_axis(Axis(1))
                    .dot(&dlogits.view().insert_axis(Axis(0)));
                db += &dlogits;
                if let (Some(grads), Some(cache)) = (enc_grads.as_mut(), cache) {
                    // Chain through standardization (1/sigma), then broadcast
                    // the mean-pool gradient evenly over token rows.
                    let dfeature = w.dot(&dlogits) / &sigma;
                    let drow = &dfeature / n_tokens;
                    let dtokens = Array2::from_shape_fn((n_tokens as usize, dim), |(_, j)| drow[j]);
                    crate::backbone::backward_tokens(&dtokens, &cache, config, &encoder, grads);
                }
            }
            w.scaled_add(-probe.lr, &dw);
            b.scaled_add(-probe.lr, &db);
            if let Some(grads) = enc_grads {
                zip_tensors_mut(&mut encoder, &grads, |p, g| *p -= probe.lr * g);
            }
        }
    }

    let mut correct = 0usize;
    for &i in eval_idx {
        let feature = if probe.fine_tune {
            standardize(&pooled_feature(&dataset[i].pixels, config, &encoder)?)
        } else {
            frozen_features[i].clone()
        };
        let logits = feature.dot(&w) + &b;
        if argmax(&logits) == dataset[i].label {
            correct += 1;
        }
    }
    Ok(correct as f64 / eval_count as f64)
}

/// Probe accuracy of a freshly initialized (untrained) encoder — the
/// baseline the pretrained encoders are compared against.
pub fn random_init_probe(
    config: &BackboneConfig,
    init_seed: u64,
    dataset: &[LabeledImage],
    probe: &ProbeConfig,
) -> Result<f64> {
    let params = init_params(config, init_seed)?;
    linear_probe(&params, config, dataset, probe)
}
