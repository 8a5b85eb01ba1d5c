//! Density-isolation center filtering.
//!
//! Each center is scored by the product of its K-nearest-neighbor density
//! `rho = exp(-mean(d^2))` and its isolation `eta`, the distance to the nearest
//! strictly denser center (the row maximum for density peaks). The highest
//! scoring centers survive unmerged. The separation loss `1 / d_e` rewards
//! kept centers that are far apart in feature space.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::scpa::{spatial_term, CenterSet, FeatureNorms, SupertokenSet};

/// Center-to-center distance matrix with the per-center scores derived from it.
#[derive(Debug, Clone, PartialEq)]
pub struct CenterGraph {
    pub distance: Array2<f64>,
    pub density: Vec<f64>,
    pub isolation: Vec<f64>,
    pub score: Vec<f64>,
}

impl CenterGraph {
    /// Largest entry of the distance matrix.
    pub fn max_distance(&self) -> f64 {
        self.distance.iter().copied().fold(0.0, f64::max)
    }
}

/// Mean pairwise Euclidean distance `d_e` of the kept centers and `L_sst = 1 / d_e`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Separation {
    pub mean_distance: f64,
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct FilterResult {
    /// Kept center indices, descending score (ties: lower index first).
    pub kept_indices: Vec<usize>,
    pub graph: CenterGraph,
    pub separation: Separation,
    /// Kept centers in `kept_indices` order, rows taken unchanged from the input.
    pub kept_centers: CenterSet,
}

impl FilterResult {
    pub fn scores(&self) -> &[f64] {
        &self.graph.score
    }
}

fn row(a: &Array2<f64>, i: usize) -> &[f64] {
    a.row(i).to_slice().expect("standard layout")
}

/// Pairwise multi-criteria distance between centers.
///
/// Uses the same spatial and feature terms as the pixel-to-center distance,
/// with centers in both roles. Symmetric with an exactly zero diagonal.
pub fn center_distance_matrix(centers: &CenterSet, height: usize, width: usize) -> Result<Array2<f64>> {
    let m = centers.len();
    if m < 2 {
        return Err(Error::invalid(format!("center filtering needs at least 2 centers, got {m}")));
    }
    let norms = FeatureNorms::new(centers.spectral().ncols(), centers.semantic().ncols());
    let mut d = Array2::zeros((m, m));
    for j in 0..m {
        for k in j + 1..m {
            let v = spatial_term(centers.coords()[j], centers.coords()[k], height, width)
                + norms.distance(
                    (row(centers.spectral(), j), row(centers.spectral(), k)),
                    (row(centers.derivative(), j), row(centers.derivative(), k)),
                    (row(centers.semantic(), j), row(centers.semantic(), k)),
                );
            d[(j, k)] = v;
            d[(k, j)] = v;
        }
    }
    Ok(d)
}

/// `rho(j) = exp(-(1/K) * sum of squared distances to the K nearest other centers)`.
pub fn local_density(distance: &Array2<f64>, k: usize) -> Result<Vec<f64>> {
    let m = distance.nrows();
    if k == 0 || k >= m {
        return Err(Error::invalid(format!("density neighbors must be in 1..={}, got {k}", m.saturating_sub(1))));
    }
    Ok((0..m)
        .map(|j| {
            let mut others: Vec<f64> = (0..m).filter(|&i| i != j).map(|i| distance[(j, i)]).collect();
            others.sort_by(f64::total_cmp);
            let mean_sq = others[..k].iter().map(|d| d * d).sum::<f64>() / k as f64;
            (-mean_sq).exp()
        })
        .collect())
}

/// Distance to the nearest strictly denser center; density peaks get their row maximum.
pub fn isolation(distance: &Array2<f64>, density: &[f64]) -> Result<Vec<f64>> {
    let m = distance.nrows();
    if density.len() != m {
        return Err(Error::invalid("density length does not match the distance matrix"));
    }
    Ok((0..m)
        .map(|j| {
            let denser = (0..m)
                .filter(|&k| density[k] > density[j])
                .map(|k| distance[(j, k)])
                .fold(None, |acc: Option<f64>, d| Some(acc.map_or(d, |a| a.min(d))));
            denser.unwrap_or_else(|| (0..m).filter(|&k| k != j).map(|k| distance[(j, k)]).fold(0.0, f64::max))
        })
        .collect())
}

/// Scores every center and keeps the `keep` best.
///
/// `centers` must carry the aggregated token features as semantic rows (the
/// `centers` output of an aggregation group); `tokens` is checked against it.
pub fn filter_centers(
    tokens: &SupertokenSet,
    centers: &CenterSet,
    k: usize,
    keep: usize,
    height: usize,
    width: usize,
) -> Result<FilterResult> {
    if tokens.len() != centers.len() || tokens.center_coords() != centers.coords() {
        return Err(Error::invalid("tokens and centers describe different center sets"));
    }
    let scored = centers.with_semantic(tokens.features().clone())?;
    let m = scored.len();
    if keep > m {
        return Err(Error::invalid(format!("cannot keep {keep} of {m} centers")));
    }
    if keep < 2 {
        return Err(Error::invalid(format!("at least 2 centers must be kept, got {keep}")));
    }
    let distance = center_distance_matrix(&scored, height, width)?;
    let density = local_density(&distance, k)?;
    let isolation = isolation(&distance, &density)?;
    let score: Vec<f64> = density.iter().zip(&isolation).map(|(r, e)| r * e).collect();

    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| score[b].total_cmp(&score[a]).then(a.cmp(&b)));
    order.truncate(keep);

    let kept_centers = scored.select(&order)?;
    let separation = separation_loss(kept_centers.semantic().view())?;
    Ok(FilterResult {
        kept_indices: order,
        graph: CenterGraph { distance, density, isolation, score },
        separation,
        kept_centers,
    })
}

/// Mean Euclidean distance over ordered distinct pairs of rows, and its reciprocal.
pub fn separation_loss(features: ArrayView2<'_, f64>) -> Result<Separation> {
    let m = features.nrows();
    if m < 2 {
        return Err(Error::invalid("separation needs at least 2 centers"));
    }
    let mut total = 0.0;
    for i in 0..m {
        for j in i + 1..m {
            total += features.row(i).iter().zip(features.row(j)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        }
    }
    let mean_distance = 2.0 * total / (m * (m - 1)) as f64;
    if mean_distance <= 0.0 || !mean_distance.is_finite() {
        return Err(Error::Degenerate("all kept center features coincide".into()));
    }
    Ok(Separation { mean_distance, loss: 1.0 / mean_distance })
}

/// Gradient of `1 / d_e` with respect to each feature row.
///
/// Coincident pairs contribute a zero subgradient.
pub fn separation_loss_grad(features: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let sep = separation_loss(features)?;
    let m = features.nrows();
    let scale = -1.0 / (sep.mean_distance * sep.mean_distance) * 2.0 / (m * (m - 1)) as f64;
    let mut grad = Array2::zeros(features.raw_dim());
    for i in 0..m {
        for j in i + 1..m {
            let diff = &features.row(i) - &features.row(j);
            let norm = diff.dot(&diff).sqrt();
            if norm > 0.0 {
                let g = diff * (scale / norm);
                grad.row_mut(i).scaled_add(1.0, &g);
                grad.row_mut(j).scaled_add(-1.0, &g);
            }
        }
    }
    Ok(grad)
}
