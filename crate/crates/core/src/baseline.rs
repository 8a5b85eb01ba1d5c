//! Patch-restricted association, the local-window scheme the global path replaces.
//!
//! The image is tiled into `patch_size` squares (the last row and column of
//! tiles are truncated at the image border). Each tile gets its own center
//! grid, computes the dense distance to its own centers only, and is processed
//! independently of the others, one tile after the next. Pixels can never
//! associate with a center of a neighboring tile.

use ndarray::Array2;

use crate::cube::{FeatureMap, HsiCube, PixelCoord, SpectralDerivative};
use crate::error::{Error, Result};
use crate::scpa::{
    aggregate, associate, image_coords, init_center_grid, AssociationMatrix, CenterSet, DistanceMatrix, PixelFeatures,
};

/// One tile in image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Patch {
    pub row0: usize,
    pub col0: usize,
    pub height: usize,
    pub width: usize,
}

impl Patch {
    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    pub fn contains(&self, p: PixelCoord) -> bool {
        (self.row0..self.row0 + self.height).contains(&p.row) && (self.col0..self.col0 + self.width).contains(&p.col)
    }
}

/// Row-major tiling; border tiles are clamped to the image.
pub fn patch_grid(height: usize, width: usize, patch_size: usize) -> Result<Vec<Patch>> {
    if patch_size == 0 || height == 0 || width == 0 {
        return Err(Error::invalid("patch size and image size must be positive"));
    }
    let mut out = Vec::new();
    for row0 in (0..height).step_by(patch_size) {
        for col0 in (0..width).step_by(patch_size) {
            out.push(Patch { row0, col0, height: patch_size.min(height - row0), width: patch_size.min(width - col0) });
        }
    }
    Ok(out)
}

/// Per-tile work for one pass, in tile coordinates.
#[derive(Debug, Clone)]
pub struct PatchResult {
    pub patch: Patch,
    pub association: AssociationMatrix,
    /// Centers after the last pass, semantic rows replaced by the token features.
    pub centers: CenterSet,
}

#[derive(Debug, Clone)]
pub struct PatchBaseline {
    pub patches: Vec<PatchResult>,
    /// Image-level association: `H*W` pixels against all tiles' centers, numbered tile by tile.
    pub association: AssociationMatrix,
    /// Center coordinates in image coordinates, same numbering.
    pub center_coords: Vec<PixelCoord>,
    /// Token features, same numbering.
    pub tokens: Array2<f64>,
    pub mask_size: usize,
    /// Number of pixel-center distances evaluated.
    pub distance_evaluations: u64,
}

/// Runs `iterations` aggregation passes inside every tile.
///
/// Each tile holds `min(centers_per_patch, tile pixels)` centers on its own
/// grid. The mask size is `min(mask_size, fewest centers in any tile)` so
/// every pixel keeps the same number of entries.
pub fn patch_baseline_associate(
    cube: &HsiCube,
    deriv: &SpectralDerivative,
    features: &FeatureMap,
    patch_size: usize,
    centers_per_patch: usize,
    mask_size: usize,
    iterations: usize,
) -> Result<PatchBaseline> {
    if centers_per_patch == 0 || mask_size == 0 || iterations == 0 {
        return Err(Error::invalid("centers per patch, mask size and iterations must be positive"));
    }
    let (h, w) = (cube.height(), cube.width());
    let patches = patch_grid(h, w, patch_size)?;
    let per_patch: Vec<usize> = patches.iter().map(|p| centers_per_patch.min(p.pixel_count())).collect();
    let k = mask_size.min(*per_patch.iter().min().expect("at least one tile"));

    let mut results = Vec::with_capacity(patches.len());
    let mut evaluations = 0u64;
    for (patch, &m) in patches.iter().zip(&per_patch) {
        let Patch { row0, col0, height: ph, width: pw } = *patch;
        let c = cube.crop(row0, col0, ph, pw)?;
        let d = deriv.crop(row0, col0, ph, pw)?;
        let f = features.crop(row0, col0, ph, pw)?;
        let pixels = PixelFeatures::from_maps(&c, &d, &f)?;
        let coords = image_coords(ph, pw);
        let mut centers = CenterSet::sample(init_center_grid(ph, pw, m)?, &c, &d, &f)?;
        let mut association = None;
        for _ in 0..iterations {
            let distance = DistanceMatrix::compute(&pixels, &centers, ph, pw)?;
            evaluations += (ph * pw * m) as u64;
            let a = associate(&distance, k, &coords, centers.coords())?;
            let tokens = aggregate(&a, f.as_matrix(), &centers)?;
            centers = centers.with_semantic(tokens.into_features())?;
            association = Some(a);
        }
        results.push(PatchResult { patch: *patch, association: association.expect("at least one pass"), centers });
    }

    let total_centers: usize = per_patch.iter().sum();
    let mut indices = vec![0u32; h * w * k];
    let mut weights = vec![0.0; h * w * k];
    let mut center_coords = Vec::with_capacity(total_centers);
    let mut tokens = Array2::zeros((total_centers, features.channels()));
    let mut offset = 0;
    for r in &results {
        let p = r.patch;
        for (i, c) in r.centers.coords().iter().enumerate() {
            center_coords.push(PixelCoord::new(p.row0 + c.row, p.col0 + c.col));
            tokens.row_mut(offset + i).assign(&r.centers.semantic().row(i));
        }
        for n in 0..p.pixel_count() {
            let global = (p.row0 + n / p.width) * w + p.col0 + n % p.width;
            for (j, (m, a)) in r.association.row(n).enumerate() {
                indices[global * k + j] = (offset + m) as u32;
                weights[global * k + j] = a;
            }
        }
        offset += r.centers.len();
    }
    let association = AssociationMatrix::from_entries(h * w, total_centers, k, indices, weights)?;
    Ok(PatchBaseline {
        patches: results,
        association,
        center_coords,
        tokens,
        mask_size: k,
        distance_evaluations: evaluations,
    })
}
