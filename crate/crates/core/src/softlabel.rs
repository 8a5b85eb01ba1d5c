//! Category proportion-aware soft labels.
//!
//! Each pixel is assigned exclusively to its most similar token, the labeled
//! pixels of every token are tallied per class, and the tallies are
//! normalized into per-token class distributions.

use ndarray::{Array2, ArrayView2};

use crate::cube::LabelMap;
use crate::error::{Error, Result};
use crate::scpa::AssociationMatrix;

/// Floor applied inside `log` by the soft cross-entropy.
pub const LOG_FLOOR: f64 = 1e-12;

/// Per-pixel owning token (argmax of the association row).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HardAssignment {
    tokens: usize,
    owner: Vec<usize>,
}

impl HardAssignment {
    pub fn new(tokens: usize, owner: Vec<usize>) -> Result<Self> {
        if let Some(&bad) = owner.iter().find(|&&t| t >= tokens) {
            return Err(Error::invalid(format!("token index {bad} out of range for {tokens} tokens")));
        }
        Ok(Self { tokens, owner })
    }

    pub fn token_count(&self) -> usize {
        self.tokens
    }

    pub fn owners(&self) -> &[usize] {
        &self.owner
    }

    pub fn len(&self) -> usize {
        self.owner.len()
    }

    pub fn is_empty(&self) -> bool {
        self.owner.is_empty()
    }
}

/// Per-token class distributions; rows of tokens without labeled pixels are zero and invalid.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftLabelMatrix {
    values: Array2<f64>,
    valid: Vec<bool>,
}

impl SoftLabelMatrix {
    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    pub fn token_count(&self) -> usize {
        self.values.nrows()
    }

    pub fn class_count(&self) -> usize {
        self.values.ncols()
    }

    /// One-hot rows at each valid row's argmax (ties: lower class), the hard-label pathway.
    pub fn to_hard(&self) -> SoftLabelMatrix {
        let mut values = Array2::zeros(self.values.raw_dim());
        for (m, row) in self.values.rows().into_iter().enumerate() {
            if self.valid[m] {
                let best = row
                    .iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |acc, (c, &v)| if v > acc.1 { (c, v) } else { acc });
                values[(m, best.0)] = 1.0;
            }
        }
        SoftLabelMatrix { values, valid: self.valid.clone() }
    }
}

/// Per pixel, the stored center with the largest weight (ties: lower center index).
pub fn hard_assign(assoc: &AssociationMatrix) -> Result<HardAssignment> {
    if assoc.k() == 0 {
        return Err(Error::InvalidState("association stores no centers per pixel".into()));
    }
    let owner = (0..assoc.pixel_count())
        .map(|n| {
            assoc
                .row(n)
                .fold(None, |best: Option<(usize, f64)>, (m, w)| match best {
                    Some((bm, bw)) if bw > w || (bw == w && bm < m) => Some((bm, bw)),
                    _ => Some((m, w)),
                })
                .map(|(m, _)| m)
                .ok_or_else(|| Error::InvalidState(format!("pixel {n} has no stored association")))
        })
        .collect::<Result<Vec<_>>>()?;
    HardAssignment::new(assoc.center_count(), owner)
}

/// Labeled-pixel tallies per (token, class); column `c - 1` holds class `c`.
pub fn class_counts(assign: &HardAssignment, labels: &LabelMap) -> Result<Array2<u64>> {
    if assign.len() != labels.labels().len() {
        return Err(Error::invalid(format!(
            "assignment covers {} pixels, label map has {}",
            assign.len(),
            labels.labels().len()
        )));
    }
    let mut counts = Array2::zeros((assign.token_count(), labels.class_count()));
    for (&token, &label) in assign.owners().iter().zip(labels.labels()) {
        if label > 0 {
            counts[(token, label as usize - 1)] += 1;
        }
    }
    Ok(counts)
}

/// Normalizes each positive-sum row to a distribution; zero rows become invalid.
pub fn soft_labels(counts: &Array2<u64>) -> SoftLabelMatrix {
    let mut values = Array2::zeros(counts.raw_dim());
    let mut valid = vec![false; counts.nrows()];
    for (m, row) in counts.rows().into_iter().enumerate() {
        let total: u64 = row.sum();
        if total > 0 {
            valid[m] = true;
            for (c, &v) in row.iter().enumerate() {
                values[(m, c)] = v as f64 / total as f64;
            }
        }
    }
    SoftLabelMatrix { values, valid }
}

fn check_predictions(predictions: ArrayView2<'_, f64>, labels: &SoftLabelMatrix) -> Result<()> {
    if predictions.dim() != labels.values.dim() {
        return Err(Error::invalid(format!(
            "prediction shape {:?} does not match label shape {:?}",
            predictions.dim(),
            labels.values.dim()
        )));
    }
    for (m, row) in predictions.rows().into_iter().enumerate() {
        let sum: f64 = row.sum();
        if row.iter().any(|&p| p.is_nan() || p < 0.0) || (sum - 1.0).abs() > 1e-6 {
            return Err(Error::invalid(format!("prediction row {m} is not a probability distribution")));
        }
    }
    Ok(())
}

/// Mean over valid tokens of `-sum_c L(m, c) * log(max(S(m, c), 1e-12))`.
pub fn soft_cross_entropy(predictions: ArrayView2<'_, f64>, labels: &SoftLabelMatrix) -> Result<f64> {
    check_predictions(predictions, labels)?;
    let valid = labels.valid_count();
    if valid == 0 {
        return Err(Error::Degenerate("no token owns a labeled pixel".into()));
    }
    let mut total = 0.0;
    for (m, (pred, lab)) in predictions.rows().into_iter().zip(labels.values.rows()).enumerate() {
        if labels.valid[m] {
            total -= pred.iter().zip(lab).map(|(&p, &l)| l * p.max(LOG_FLOOR).ln()).sum::<f64>();
        }
    }
    Ok(total / valid as f64)
}

/// `L = L_CE + L_sst`.
pub fn total_loss(ce: f64, sst: f64) -> Result<f64> {
    if !ce.is_finite() || !sst.is_finite() {
        return Err(Error::invalid("loss terms must be finite"));
    }
    Ok(ce + sst)
}

/// Per-pixel class map built from each pixel's token prediction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassMap {
    pub height: usize,
    pub width: usize,
    pub classes: Vec<u16>,
}

/// Paints every pixel with its owning token's class.
pub fn project_to_pixels(
    assign: &HardAssignment,
    token_classes: &[u16],
    height: usize,
    width: usize,
) -> Result<ClassMap> {
    if token_classes.len() != assign.token_count() {
        return Err(Error::invalid(format!(
            "{} token classes for {} tokens",
            token_classes.len(),
            assign.token_count()
        )));
    }
    if assign.len() != height * width {
        return Err(Error::invalid("assignment does not cover the image"));
    }
    Ok(ClassMap { height, width, classes: assign.owners().iter().map(|&t| token_classes[t]).collect() })
}
