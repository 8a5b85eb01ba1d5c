//! Plain gradient descent on the classifier with the clustering held fixed.

use ndarray::ArrayView2;

use super::{loss_and_gradient, ClassifierParams, Objective};
use crate::config::PipelineConfig;
use crate::cube::{HsiCube, LabelMap};
use crate::error::{Error, Result};
use crate::pipeline::{run_clustering, Clustering};
use crate::softlabel::{class_counts, soft_labels, SoftLabelMatrix};

#[derive(Debug, Clone)]
pub struct TrainReport {
    /// Total loss evaluated before each update.
    pub losses: Vec<f64>,
    pub params: ClassifierParams,
    pub clustering: Clustering,
    pub labels: SoftLabelMatrix,
}

impl TrainReport {
    pub fn initial_loss(&self) -> f64 {
        self.losses[0]
    }

    pub fn final_loss(&self) -> f64 {
        *self.losses.last().expect("at least one step")
    }
}

/// Runs `steps` descent steps in place and returns the loss seen at each step.
pub fn descend(
    tokens: ArrayView2<'_, f64>,
    params: &mut ClassifierParams,
    objective: &Objective<'_>,
    steps: usize,
    learning_rate: f64,
) -> Result<Vec<f64>> {
    if steps == 0 {
        return Err(Error::invalid("training needs at least one step"));
    }
    let mut losses = Vec::with_capacity(steps);
    for step in 0..steps {
        let g = loss_and_gradient(tokens, params, objective).map_err(|e| match e {
            Error::TrainingDiverged { loss, .. } => Error::TrainingDiverged { step, loss },
            other => other,
        })?;
        if !g.loss.is_finite() {
            return Err(Error::TrainingDiverged { step, loss: g.loss });
        }
        losses.push(g.loss);
        params.scaled_add(-learning_rate, &g.params);
        if !params.is_finite() {
            return Err(Error::TrainingDiverged { step, loss: f64::NAN });
        }
    }
    Ok(losses)
}

/// Clusters `cube`, derives soft labels from `labels`, and trains a freshly
/// initialized classifier on the final tokens.
///
/// The loss is soft cross-entropy plus the separation loss of the filtered
/// centers; the latter is constant here because the clustering does not move.
pub fn train_toy(
    config: &PipelineConfig,
    cube: &HsiCube,
    labels: &LabelMap,
    steps: usize,
    learning_rate: f64,
) -> Result<TrainReport> {
    if labels.height() != cube.height() || labels.width() != cube.width() {
        return Err(Error::invalid("label map and cube sizes differ"));
    }
    let clustering = run_clustering(cube, config)?;
    let soft = soft_labels(&class_counts(&clustering.assignment, labels)?);
    let mut params = ClassifierParams::init(config.channels, labels.class_count(), &config.blocks, config.seed)?;
    let kept = clustering.filter.kept_centers.semantic();
    let objective = Objective::new(&soft).with_separation(kept.view());
    let losses = descend(clustering.tokens.features().view(), &mut params, &objective, steps, learning_rate)?;
    Ok(TrainReport { losses, params, clustering, labels: soft })
}
