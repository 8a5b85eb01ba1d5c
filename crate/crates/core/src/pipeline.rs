//! Stage-one orchestration: derivative, features, grid centers, first
//! aggregation group, center filtering, second aggregation group.

use crate::config::PipelineConfig;
use crate::cube::{spectral_derivative, FeatureMap, FeatureProvider, HsiCube, PcaFeatureProvider, SpectralDerivative};
use crate::dicf::{filter_centers, separation_loss, FilterResult, Separation};
use crate::error::Result;
use crate::scpa::{init_center_grid, scpa_group, CenterSet, ScpaOutput, SupertokenSet};
use crate::softlabel::{hard_assign, HardAssignment};

/// Everything produced by the clustering stage.
#[derive(Debug, Clone)]
pub struct Clustering {
    pub derivative: SpectralDerivative,
    pub features: FeatureMap,
    pub initial_centers: CenterSet,
    pub first: ScpaOutput,
    pub filter: FilterResult,
    pub second: ScpaOutput,
    /// Final supertokens, in kept-index order.
    pub tokens: SupertokenSet,
    /// Owning token per pixel.
    pub assignment: HardAssignment,
}

impl Clustering {
    /// Separation loss of the filtered centers.
    pub fn separation_loss(&self) -> f64 {
        self.filter.separation.loss
    }

    /// Separation of the token features at the end of each aggregation group.
    pub fn group_separation(&self) -> Result<[Separation; 2]> {
        Ok([
            separation_loss(self.first.tokens.features().view())?,
            separation_loss(self.second.tokens.features().view())?,
        ])
    }
}

/// Runs stage one with the smoothed-PCA feature provider.
pub fn run_clustering(cube: &HsiCube, config: &PipelineConfig) -> Result<Clustering> {
    let provider = PcaFeatureProvider::new(config.channels, config.smoothing_radius);
    run_clustering_with(cube, config, &provider)
}

pub fn run_clustering_with(
    cube: &HsiCube,
    config: &PipelineConfig,
    provider: &dyn FeatureProvider,
) -> Result<Clustering> {
    config.validate_for(cube.height(), cube.width(), cube.bands())?;
    let (h, w) = (cube.height(), cube.width());
    let derivative = spectral_derivative(cube)?;
    let features = provider.features(cube)?;

    let initial_centers = CenterSet::sample(init_center_grid(h, w, config.m1)?, cube, &derivative, &features)?;
    let first = scpa_group(cube, &derivative, &features, &initial_centers, config.mask_size, config.repeats1)?;
    let filter = filter_centers(&first.tokens, &first.centers, config.dicf_k, config.m2, h, w)?;
    let second =
        scpa_group(cube, &derivative, &features, &filter.kept_centers, config.second_mask_size(), config.repeats2)?;
    let assignment = hard_assign(&second.association)?;
    let tokens = second.tokens.clone();
    Ok(Clustering { derivative, features, initial_centers, first, filter, second, tokens, assignment })
}
