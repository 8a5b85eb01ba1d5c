//! Spectral supertoken clustering and token classification for hyperspectral images.
//!
//! The pipeline runs in two stages. Stage one groups pixels into supertokens:
//! every pixel is compared with every clustering center through a
//! multi-criteria distance ([`scpa`]), the centers are pruned by a
//! density/isolation score ([`dicf`]), and the surviving centers are refined
//! again. Stage two classifies the tokens with a small attention/state-space
//! stack ([`classifier`]) supervised by per-token class proportions
//! ([`softlabel`]) and projects the predictions back to pixels.
//!
//! ```no_run
//! use supertoken::prelude::*;
//!
//! let (cube, labels) = supertoken::synthetic::separable_cube(32, 32, 8, 3, 7).unwrap();
//! let config = PipelineConfig { m1: 16, m2: 8, mask_size: 4, dicf_k: 3, ..PipelineConfig::default() };
//! let clustering = run_clustering(&cube, &config).unwrap();
//! println!("{} tokens", clustering.tokens.len());
//! # let _ = labels;
//! ```

pub mod baseline;
pub mod bench;
pub mod classifier;
pub mod commands;
pub mod config;
pub mod cube;
pub mod dicf;
pub mod error;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod scpa;
pub mod softlabel;
pub mod synthetic;

pub use error::{Error, Result};

pub mod prelude {
    pub use crate::config::PipelineConfig;
    pub use crate::cube::{
        pca_feature_provider, sample_at, spectral_derivative, FeatureMap, FeatureProvider, HsiCube, LabelMap,
        PcaFeatureProvider, PixelCoord, SpectralDerivative,
    };
    pub use crate::dicf::{filter_centers, FilterResult};
    pub use crate::error::{Error, Result};
    pub use crate::metrics::{confusion, scores, ConfusionMatrix, Scores};
    pub use crate::pipeline::{run_clustering, Clustering};
    pub use crate::scpa::{init_center_grid, scpa_block, scpa_group, AssociationMatrix, CenterSet, SupertokenSet};
    pub use crate::softlabel::{class_counts, hard_assign, soft_labels, HardAssignment, SoftLabelMatrix};
}
