use ndarray::{Array2, ArrayView2, Axis};

use super::{attention, check_tokens, softmax_rows, ssm, Block, ClassifierParams};
use crate::dicf::{separation_loss, separation_loss_grad};
use crate::error::{Error, Result};
use crate::softlabel::{soft_cross_entropy, total_loss, SoftLabelMatrix, LOG_FLOOR};

/// What the training loss is made of.
#[derive(Debug, Clone, Copy)]
pub struct Objective<'a> {
    pub labels: &'a SoftLabelMatrix,
    /// Kept center features for the separation term, if it is part of the loss.
    pub separation: Option<ArrayView2<'a, f64>>,
    /// Multiplier applied to the whole objective.
    pub scale: f64,
}

impl<'a> Objective<'a> {
    pub fn new(labels: &'a SoftLabelMatrix) -> Self {
        Self { labels, separation: None, scale: 1.0 }
    }

    pub fn with_separation(mut self, features: ArrayView2<'a, f64>) -> Self {
        self.separation = Some(features);
        self
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }
}

/// Loss value and its gradient with respect to everything it depends on.
#[derive(Debug, Clone)]
pub struct Gradient {
    /// `scale * (ce + sst)`.
    pub loss: f64,
    pub ce: f64,
    pub sst: f64,
    pub params: ClassifierParams,
    pub tokens: Array2<f64>,
    pub separation: Option<Array2<f64>>,
}

enum Cache {
    Attention(attention::AttentionCache),
    Ssm(ssm::SsmCache),
}

/// Total objective and its reverse-mode gradient.
///
/// Non-finite predictions are reported as [`Error::TrainingDiverged`] with step 0.
pub fn loss_and_gradient(
    tokens: ArrayView2<'_, f64>,
    params: &ClassifierParams,
    objective: &Objective<'_>,
) -> Result<Gradient> {
    check_tokens(tokens, params)?;
    let labels = objective.labels;
    if labels.token_count() != tokens.nrows() || labels.class_count() != params.classes() {
        return Err(Error::invalid(format!(
            "labels are {}x{}, expected {}x{}",
            labels.token_count(),
            labels.class_count(),
            tokens.nrows(),
            params.classes()
        )));
    }
    let scale = objective.scale;

    let mut x = tokens.to_owned();
    let mut caches = Vec::with_capacity(params.blocks.len());
    for block in &params.blocks {
        let (y, cache) = match block {
            Block::Attention(p) => {
                let (y, c) = attention::forward_cached(x.view(), p);
                (y, Cache::Attention(c))
            }
            Block::Ssm(p) => {
                let (y, c) = ssm::forward_cached(x.view(), p);
                (y, Cache::Ssm(c))
            }
        };
        caches.push(cache);
        x += &y;
    }
    let probs = softmax_rows(&(x.dot(&params.head_weight) + &params.head_bias));
    if probs.iter().any(|p| !p.is_finite()) {
        return Err(Error::TrainingDiverged { step: 0, loss: f64::NAN });
    }
    let ce = soft_cross_entropy(probs.view(), labels)?;

    let (sst, sst_grad) = match objective.separation {
        Some(features) => (separation_loss(features)?.loss, Some(separation_loss_grad(features)? * scale)),
        None => (0.0, None),
    };
    let loss = scale * total_loss(ce, sst)?;

    // d/dz of -(1/V) sum_c L_c log(max(p_c, floor)) through the softmax.
    let valid = labels.valid_count() as f64;
    let mut dlogits = Array2::zeros(probs.raw_dim());
    for (m, (mut dz, (p, l))) in
        dlogits.rows_mut().into_iter().zip(probs.rows().into_iter().zip(labels.values().rows())).enumerate()
    {
        if !labels.valid()[m] {
            continue;
        }
        let active = |c: usize| p[c] > LOG_FLOOR;
        let mass: f64 = (0..p.len()).filter(|&c| active(c)).map(|c| l[c]).sum();
        for c in 0..p.len() {
            let own = if active(c) { l[c] } else { 0.0 };
            dz[c] = scale / valid * (p[c] * mass - own);
        }
    }

    let mut grad = params.zeros_like();
    grad.head_weight = x.t().dot(&dlogits);
    grad.head_bias = dlogits.sum_axis(Axis(0)).insert_axis(Axis(0));
    let mut dx = dlogits.dot(&params.head_weight.t());

    for ((block, cache), gblock) in params.blocks.iter().zip(&caches).zip(grad.blocks.iter_mut()).rev() {
        let dinner = match (block, cache, gblock) {
            (Block::Attention(p), Cache::Attention(c), Block::Attention(g)) => attention::backward(c, p, &dx, g),
            (Block::Ssm(p), Cache::Ssm(c), Block::Ssm(g)) => ssm::backward(c, p, &dx, g),
            _ => unreachable!("gradient container mirrors the parameter layout"),
        };
        dx += &dinner;
    }

    Ok(Gradient { loss, ce, sst, params: grad, tokens: dx, separation: sst_grad })
}
