//! Training objective: masked reconstruction, context prediction, and the
//! stop-gradient consistency term.
//!
//! Three ℓ1 means over masked pixels tie the two branches together. The
//! consistency term treats the context branch's prediction as a constant
//! template: its gradient flows only into the reconstructive branch, which
//! is what prevents the two branches from collapsing onto a shared constant.

use crate::backbone::{
    backward_branch, forward_cached, BackboneConfig, BackboneParams, BranchOutput,
};
use crate::error::{Error, Result};
use crate::patchgrid::{masked_element_count, MaskSpec, PatchSequence};
use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

/// Nonnegative weights of the three loss components; the method's objective
/// uses (1, 1, 1), and (1, 0, 0) reduces to plain masked reconstruction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub lambda_re: f64,
    pub lambda_pr: f64,
    pub lambda_cc: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda_re: 1.0, lambda_pr: 1.0, lambda_cc: 1.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in
            [("lambda_re", self.lambda_re), ("lambda_pr", self.lambda_pr), ("lambda_cc", self.lambda_cc)]
        {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} = {v} must be a nonnegative real")));
            }
        }
        Ok(())
    }

    /// True when the context branch contributes nothing to loss or gradient.
    pub fn context_free(&self) -> bool {
        self.lambda_pr == 0.0 && self.lambda_cc == 0.0
    }
}

/// Support over which the context-prediction loss is averaged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrSupport {
    /// Masked positions only, normalized by the masked element count.
    #[default]
    MaskedOnly,
    /// Every position, normalized by the full element count.
    AllPositions,
}

/// The three loss components and their weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_re: f64,
    pub l_pr: f64,
    pub l_cc: f64,
    pub total: f64,
}

/// ℓ1 subgradient with the tie broken to zero (`f64::signum(0.0)` is 1).
fn sign_zero(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn check_same_grid(pred: &PatchSequence, target: &PatchSequence, mask: &MaskSpec) -> Result<()> {
    if pred.grid != target.grid || pred.values.dim() != target.values.dim() {
        return Err(Error::Dimension(format!(
            "prediction {}x{} and target {}x{} grids differ",
            pred.values.nrows(),
            pred.values.ncols(),
            target.values.nrows(),
            target.values.ncols()
        )));
    }
    if mask.indicator.len() != pred.values.nrows() {
        return Err(Error::Dimension(format!(
            "mask length {} does not match {} patches",
            mask.indicator.len(),
            pred.values.nrows()
        )));
    }
    Ok(())
}

/// Mean absolute difference over masked rows' elements, normalized by the
/// masked element count `N_M`.
pub fn l1_masked(pred: &PatchSequence, target: &PatchSequence, mask: &MaskSpec) -> Result<f64> {
    check_same_grid(pred, target, mask)?;
    let n_m = masked_element_count(mask, pred.grid.patch_size, pred.grid.channels);
    if n_m == 0 {
        return Err(Error::EmptySupport("masked l1 over an empty mask".into()));
    }
    let mut sum = 0.0;
    for i in mask.masked_indices() {
        for (p, t) in pred.values.row(i).iter().zip(target.values.row(i)) {
            sum += (p - t).abs();
        }
    }
    Ok(sum / n_m as f64)
}

/// Mean absolute difference over every element.
fn l1_all(pred: &PatchSequence, target: &PatchSequence) -> f64 {
    let n = pred.values.len();
    pred.values.iter().zip(target.values.iter()).map(|(p, t)| (p - t).abs()).sum::<f64>()
        / n as f64
}

/// Reconstruction loss of the masked branch against raw pixels.
pub fn loss_re(y_re: &BranchOutput, x: &PatchSequence, mask: &MaskSpec) -> Result<f64> {
    l1_masked(&y_re.predicted, x, mask)
}

/// Prediction loss of the context branch against raw pixels.
pub fn loss_pr(
    y_pr: &BranchOutput,
    x: &PatchSequence,
    mask: &MaskSpec,
    support: PrSupport,
) -> Result<f64> {
    match support {
        PrSupport::MaskedOnly => l1_masked(&y_pr.predicted, x, mask),
        PrSupport::AllPositions => {
            check_same_grid(&y_pr.predicted, x, mask)?;
            Ok(l1_all(&y_pr.predicted, x))
        }
    }
}

/// Consistency loss between the two branches on masked positions. The value
/// is symmetric; the gradient contract is not — see [`grad_total`].
pub fn loss_cc(y_re: &BranchOutput, y_pr: &BranchOutput, mask: &MaskSpec) -> Result<f64> {
    l1_masked(&y_re.predicted, &y_pr.predicted, mask)
}

/// Assembles the weighted breakdown from both branches' outputs.
pub fn total_loss(
    y_re: &BranchOutput,
    y_pr: &BranchOutput,
    x: &PatchSequence,
    mask: &MaskSpec,
    weights: &LossWeights,
    support: PrSupport,
) -> Result<LossBreakdown> {
    weights.validate()?;
    let l_re = loss_re(y_re, x, mask)?;
    let l_pr = loss_pr(y_pr, x, mask, support)?;
    let l_cc = loss_cc(y_re, y_pr, mask)?;
    Ok(LossBreakdown {
        l_re,
        l_pr,
        l_cc,
        total: weights.lambda_re * l_re + weights.lambda_pr * l_pr + weights.lambda_cc * l_cc,
    })
}

/// Loss and full parameter gradient of the joint objective on one image.
///
/// Gradient routing: the reconstruction term differentiates through the
/// masked forward only; the prediction term through the context forward
/// only; the consistency term through the masked forward only, with the
/// context prediction frozen (stop-gradient). When the weights make the
/// context branch irrelevant its forward pass is skipped entirely and its
/// logged components are zero.
pub fn grad_total(
    params: &BackboneParams,
    image: &Array3<f64>,
    mask: &MaskSpec,
    config: &BackboneConfig,
    weights: &LossWeights,
    support: PrSupport,
) -> Result<(LossBreakdown, BackboneParams)> {
    weights.validate()?;
    if mask.masked_count == 0 {
        return Err(Error::EmptySupport("gradient over an empty mask".into()));
    }
    let mut grads = BackboneParams::zeros(config)?;

    let (y_re, cache_re) = forward_cached(image, Some(mask), config, params)?;
    let x = PatchSequence::new(config.grid()?, cache_re.seq_values.clone())?;
    let pd = x.grid.patch_dim();
    let n_m = (mask.masked_count * pd) as f64;

    let context = if weights.context_free() {
        None
    } else {
        Some(forward_cached(image, None, config, params)?)
    };

    let (l_pr, l_cc) = match &context {
        Some((y_pr, _)) => (
            loss_pr(y_pr, &x, mask, support)?,
            loss_cc(&y_re, y_pr, mask)?,
        ),
        None => (0.0, 0.0),
    };
    let l_re = loss_re(&y_re, &x, mask)?;
    let breakdown = LossBreakdown {
        l_re,
        l_pr,
        l_cc,
        total: weights.lambda_re * l_re + weights.lambda_pr * l_pr + weights.lambda_cc * l_cc,
    };

    // d(total)/d(y_re): reconstruction plus frozen-template consistency,
    // both supported on masked rows only.
    let (n, _) = y_re.predicted.values.dim();
    let mut d_re = Array2::zeros(y_re.predicted.values.dim());
    for i in mask.masked_indices() {
        for j in 0..pd {
            let re = y_re.predicted.values[[i, j]];
            let mut g = weights.lambda_re * sign_zero(re - x.values[[i, j]]) / n_m;
            if let Some((y_pr, _)) = &context {
                g += weights.lambda_cc * sign_zero(re - y_pr.predicted.values[[i, j]]) / n_m;
            }
            d_re[[i, j]] = g;
        }
    }
    backward_branch(&d_re, &cache_re, config, params, &mut grads);

    // d(total)/d(y_pr): prediction term only — the consistency term is
    // stopped here by construction.
    if let Some((y_pr, cache_pr)) = &context
        && weights.lambda_pr > 0.0
    {
        let mut d_pr = Array2::zeros(y_pr.predicted.values.dim());
        match support {
            PrSupport::MaskedOnly => {
                for i in mask.masked_indices() {
                    for j in 0..pd {
                        d_pr[[i, j]] = weights.lambda_pr
                            * sign_zero(y_pr.predicted.values[[i, j]] - x.values[[i, j]])
                            / n_m;
                    }
                }
            }
            PrSupport::AllPositions => {
                let n_all = (n * pd) as f64;
                for i in 0..n {
                    for j in 0..pd {
                        d_pr[[i, j]] = weights.lambda_pr
                            * sign_zero(y_pr.predicted.values[[i, j]] - x.values[[i, j]])
                            / n_all;
                    }
                }
            }
        }
        backward_branch(&d_pr, cache_pr, config, params, &mut grads);
    }

    Ok((breakdown, grads))
}
