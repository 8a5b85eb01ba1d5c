//! Spectral-consistent pixel aggregation.
//!
//! Pixels are compared against every clustering center with a multi-criteria
//! distance (normalized spatial term plus normalized spectral, derivative and
//! semantic terms), turned into affinities with `exp(-D)`, restricted to the
//! `k` spatially nearest centers, and aggregated into supertoken features.
//!
//! The production path never materializes the dense N x M matrices: the
//! spatial top-k candidates are found first and the distance is evaluated only
//! on the kept pairs. [`DistanceMatrix`] and [`associate`] provide the dense
//! route; both routes evaluate each pair with the same arithmetic, so kept
//! weights agree bit for bit.

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;

use crate::cube::{sample_at, FeatureMap, HsiCube, PixelCoord, SpectralDerivative};
use crate::error::{Error, Result};

/// Clustering centers with their sampled (or aggregated) feature rows.
#[derive(Debug, Clone, PartialEq)]
pub struct CenterSet {
    coords: Vec<PixelCoord>,
    spectral: Array2<f64>,
    derivative: Array2<f64>,
    semantic: Array2<f64>,
}

impl CenterSet {
    pub fn new(
        coords: Vec<PixelCoord>,
        spectral: Array2<f64>,
        derivative: Array2<f64>,
        semantic: Array2<f64>,
    ) -> Result<Self> {
        let m = coords.len();
        if m == 0 {
            return Err(Error::invalid("a center set needs at least one center"));
        }
        for (name, mat) in [("spectral", &spectral), ("derivative", &derivative), ("semantic", &semantic)] {
            if mat.nrows() != m {
                return Err(Error::invalid(format!("{name} rows {} != center count {m}", mat.nrows())));
            }
            if mat.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("non-finite {name} feature")));
            }
        }
        if derivative.ncols() + 1 != spectral.ncols() {
            return Err(Error::invalid("derivative width must be spectral width - 1"));
        }
        let mut seen = coords.clone();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("center coordinates must be pairwise distinct"));
        }
        Ok(Self {
            coords,
            spectral: spectral.as_standard_layout().into_owned(),
            derivative: derivative.as_standard_layout().into_owned(),
            semantic: semantic.as_standard_layout().into_owned(),
        })
    }

    /// Samples spectra, derivatives and semantic features at `coords`.
    pub fn sample(
        coords: Vec<PixelCoord>,
        cube: &HsiCube,
        deriv: &SpectralDerivative,
        features: &FeatureMap,
    ) -> Result<Self> {
        let spectral = sample_at(&coords, cube)?;
        let derivative = sample_at(&coords, deriv)?;
        let semantic = sample_at(&coords, features)?;
        Self::new(coords, spectral, derivative, semantic)
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coords(&self) -> &[PixelCoord] {
        &self.coords
    }

    pub fn spectral(&self) -> &Array2<f64> {
        &self.spectral
    }

    pub fn derivative(&self) -> &Array2<f64> {
        &self.derivative
    }

    pub fn semantic(&self) -> &Array2<f64> {
        &self.semantic
    }

    /// Same centers with the semantic rows replaced.
    pub fn with_semantic(&self, semantic: Array2<f64>) -> Result<Self> {
        if semantic.dim() != self.semantic.dim() {
            return Err(Error::invalid(format!("semantic shape {:?} != {:?}", semantic.dim(), self.semantic.dim())));
        }
        Self::new(self.coords.clone(), self.spectral.clone(), self.derivative.clone(), semantic)
    }

    /// Centers at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::invalid(format!("center index {bad} out of range")));
        }
        Self::new(
            indices.iter().map(|&i| self.coords[i]).collect(),
            self.spectral.select(Axis(0), indices),
            self.derivative.select(Axis(0), indices),
            self.semantic.select(Axis(0), indices),
        )
    }
}

/// Row-major coordinates of every pixel of an H x W image.
pub fn image_coords(height: usize, width: usize) -> Vec<PixelCoord> {
    (0..height).flat_map(|r| (0..width).map(move |c| PixelCoord::new(r, c))).collect()
}

/// Uniform grid of `count` centers.
///
/// The grid has `round(sqrt(M * H / W))` rows (clamped to `[1, H]`) and
/// `ceil(M / rows)` columns (clamped to `[1, W]`); the first `M` cells in
/// row-major order each contribute the floor of their midpoint.
pub fn init_center_grid(height: usize, width: usize, count: usize) -> Result<Vec<PixelCoord>> {
    if height == 0 || width == 0 {
        return Err(Error::invalid("image dimensions must be positive"));
    }
    if count == 0 || count > height * width {
        return Err(Error::invalid(format!("center count must be in 1..={}, got {count}", height * width)));
    }
    let mut rows = ((count as f64 * height as f64 / width as f64).sqrt().round() as usize).clamp(1, height);
    let mut cols = count.div_ceil(rows).clamp(1, width);
    // The clamp on columns can leave too few cells; grow the rows until the grid fits.
    while rows * cols < count {
        rows += 1;
        cols = count.div_ceil(rows).clamp(1, width);
    }
    let mid =
        |i: usize, cells: usize, extent: usize| ((i as f64 + 0.5) * extent as f64 / cells as f64).floor() as usize;
    Ok((0..count).map(|cell| PixelCoord::new(mid(cell / cols, rows, height), mid(cell % cols, cols, width))).collect())
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
fn row<'a>(m: &'a ArrayView2<'_, f64>, i: usize) -> &'a [f64] {
    let ncols = m.ncols();
    let flat = m.as_slice().expect("standard layout");
    &flat[i * ncols..(i + 1) * ncols]
}

/// Spatial term: squared coordinate distance over `max(H, W)`.
#[inline]
pub fn spatial_term(pixel: PixelCoord, center: PixelCoord, height: usize, width: usize) -> f64 {
    pixel.dist2(center) / height.max(width) as f64
}

/// Per-modality normalizers: square roots of the channel counts.
#[derive(Debug, Clone, Copy)]
pub(crate) struct FeatureNorms {
    spectral: f64,
    derivative: f64,
    semantic: f64,
}

impl FeatureNorms {
    pub(crate) fn new(bands: usize, semantic: usize) -> Self {
        Self {
            spectral: (bands as f64).sqrt(),
            derivative: ((bands - 1) as f64).sqrt(),
            semantic: (semantic as f64).sqrt(),
        }
    }

    #[inline]
    pub(crate) fn distance(&self, spec: (&[f64], &[f64]), der: (&[f64], &[f64]), sem: (&[f64], &[f64])) -> f64 {
        sq_dist(spec.0, spec.1) / self.spectral
            + sq_dist(der.0, der.1) / self.derivative
            + sq_dist(sem.0, sem.1) / self.semantic
    }
}

/// Pixel-side inputs of the distance: reshaped spectra, derivatives and semantics.
#[derive(Debug, Clone, Copy)]
pub struct PixelFeatures<'a> {
    pub spectra: ArrayView2<'a, f64>,
    pub derivs: ArrayView2<'a, f64>,
    pub semantic: ArrayView2<'a, f64>,
}

impl<'a> PixelFeatures<'a> {
    pub fn from_maps(cube: &'a HsiCube, deriv: &'a SpectralDerivative, features: &'a FeatureMap) -> Result<Self> {
        let dims = |r: &crate::cube::Raster| (r.height(), r.width());
        if dims(cube) != dims(deriv) || dims(cube) != dims(features) {
            return Err(Error::invalid("cube, derivative and feature map sizes differ"));
        }
        Self::new(cube.as_matrix(), deriv.as_matrix(), features.as_matrix())
    }

    pub fn new(
        spectra: ArrayView2<'a, f64>,
        derivs: ArrayView2<'a, f64>,
        semantic: ArrayView2<'a, f64>,
    ) -> Result<Self> {
        let n = spectra.nrows();
        if derivs.nrows() != n || semantic.nrows() != n {
            return Err(Error::invalid("pixel feature row counts differ"));
        }
        if spectra.ncols() < 2 || derivs.ncols() + 1 != spectra.ncols() {
            return Err(Error::invalid("derivative width must be spectral width - 1"));
        }
        if semantic.ncols() == 0 {
            return Err(Error::invalid("semantic features need at least one channel"));
        }
        if !(spectra.is_standard_layout() && derivs.is_standard_layout() && semantic.is_standard_layout()) {
            return Err(Error::invalid("pixel feature matrices must be row-major"));
        }
        Ok(Self { spectra, derivs, semantic })
    }

    pub fn len(&self) -> usize {
        self.spectra.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn check_centers(&self, centers: &CenterSet) -> Result<FeatureNorms> {
        if centers.spectral.ncols() != self.spectra.ncols()
            || centers.derivative.ncols() != self.derivs.ncols()
            || centers.semantic.ncols() != self.semantic.ncols()
        {
            return Err(Error::invalid(format!(
                "center feature widths ({}, {}, {}) do not match pixel widths ({}, {}, {})",
                centers.spectral.ncols(),
                centers.derivative.ncols(),
                centers.semantic.ncols(),
                self.spectra.ncols(),
                self.derivs.ncols(),
                self.semantic.ncols()
            )));
        }
        Ok(FeatureNorms::new(self.spectra.ncols(), self.semantic.ncols()))
    }

    #[inline]
    fn feature_distance(&self, norms: &FeatureNorms, n: usize, centers: &CenterSet, m: usize) -> f64 {
        let cs = centers.spectral.view();
        let cd = centers.derivative.view();
        let cf = centers.semantic.view();
        norms.distance(
            (row(&self.spectra, n), row(&cs, m)),
            (row(&self.derivs, n), row(&cd, m)),
            (row(&self.semantic, n), row(&cf, m)),
        )
    }
}

/// Dense N x M spatial distance matrix.
pub fn spatial_distance(
    pixel_coords: &[PixelCoord],
    center_coords: &[PixelCoord],
    height: usize,
    width: usize,
) -> Result<Array2<f64>> {
    for c in pixel_coords.iter().chain(center_coords) {
        if c.row >= height || c.col >= width {
            return Err(Error::invalid(format!("coordinate ({}, {}) out of bounds", c.row, c.col)));
        }
    }
    Ok(Array2::from_shape_fn((pixel_coords.len(), center_coords.len()), |(n, m)| {
        spatial_term(pixel_coords[n], center_coords[m], height, width)
    }))
}

/// Dense N x M multi-feature distance matrix.
pub fn feature_distance(pixels: &PixelFeatures<'_>, centers: &CenterSet) -> Result<Array2<f64>> {
    let norms = pixels.check_centers(centers)?;
    let m = centers.len();
    let mut out = vec![0.0; pixels.len() * m];
    out.par_chunks_mut(m).enumerate().for_each(|(n, row)| {
        for (j, v) in row.iter_mut().enumerate() {
            *v = pixels.feature_distance(&norms, n, centers, j);
        }
    });
    Ok(Array2::from_shape_vec((pixels.len(), m), out).expect("one row per pixel"))
}

/// Dense pixel-to-center distance with its spatial and feature components.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    total: Array2<f64>,
    spatial: Option<Array2<f64>>,
    feature: Option<Array2<f64>>,
}

impl DistanceMatrix {
    /// `D = D_spa + D_feat`, keeping both components.
    pub fn from_parts(spatial: Array2<f64>, feature: Array2<f64>) -> Result<Self> {
        if spatial.dim() != feature.dim() {
            return Err(Error::invalid("spatial and feature distance shapes differ"));
        }
        let total = &spatial + &feature;
        Self::check(&total)?;
        Ok(Self { total, spatial: Some(spatial), feature: Some(feature) })
    }

    pub fn from_total(total: Array2<f64>) -> Result<Self> {
        Self::check(&total)?;
        Ok(Self { total, spatial: None, feature: None })
    }

    fn check(total: &Array2<f64>) -> Result<()> {
        if total.iter().any(|&v| !v.is_finite() || v < 0.0) {
            return Err(Error::invalid("distances must be finite and non-negative"));
        }
        Ok(())
    }

    /// Dense distance between every pixel of an image and every center.
    pub fn compute(pixels: &PixelFeatures<'_>, centers: &CenterSet, height: usize, width: usize) -> Result<Self> {
        if pixels.len() != height * width {
            return Err(Error::invalid("pixel feature rows must equal H * W"));
        }
        let spatial = spatial_distance(&image_coords(height, width), centers.coords(), height, width)?;
        Self::from_parts(spatial, feature_distance(pixels, centers)?)
    }

    pub fn total(&self) -> &Array2<f64> {
        &self.total
    }

    pub fn spatial(&self) -> Option<&Array2<f64>> {
        self.spatial.as_ref()
    }

    pub fn feature(&self) -> Option<&Array2<f64>> {
        self.feature.as_ref()
    }
}

/// Bucket grid over center coordinates for exact spatial k-nearest queries.
#[derive(Debug, Clone)]
struct CenterIndex {
    row0: usize,
    col0: usize,
    cell: usize,
    rows: usize,
    cols: usize,
    buckets: Vec<Vec<u32>>,
}

impl CenterIndex {
    fn new(centers: &[PixelCoord]) -> Self {
        let row0 = centers.iter().map(|c| c.row).min().unwrap_or(0);
        let col0 = centers.iter().map(|c| c.col).min().unwrap_or(0);
        let row1 = centers.iter().map(|c| c.row).max().unwrap_or(0);
        let col1 = centers.iter().map(|c| c.col).max().unwrap_or(0);
        let area = ((row1 - row0 + 1) * (col1 - col0 + 1)) as f64;
        let cell = ((area / centers.len().max(1) as f64).sqrt().round() as usize).max(1);
        let rows = (row1 - row0) / cell + 1;
        let cols = (col1 - col0) / cell + 1;
        let mut buckets = vec![Vec::new(); rows * cols];
        for (i, c) in centers.iter().enumerate() {
            buckets[((c.row - row0) / cell) * cols + (c.col - col0) / cell].push(i as u32);
        }
        Self { row0, col0, cell, rows, cols, buckets }
    }

    /// Writes the `k` nearest centers (ties to the lower index) into `out`, nearest first.
    fn nearest(&self, p: PixelCoord, k: usize, centers: &[PixelCoord], scratch: &mut Vec<(f64, u32)>, out: &mut [u32]) {
        let cell = self.cell as isize;
        let pr = (p.row as isize - self.row0 as isize).div_euclid(cell);
        let pc = (p.col as isize - self.col0 as isize).div_euclid(cell);
        let max_ring = [pr, self.rows as isize - 1 - pr, pc, self.cols as isize - 1 - pc]
            .into_iter()
            .map(|d| d.unsigned_abs())
            .max()
            .unwrap_or(0) as isize;
        scratch.clear();
        let visit = |r: isize, c: isize, scratch: &mut Vec<(f64, u32)>| {
            if r < 0 || c < 0 || r >= self.rows as isize || c >= self.cols as isize {
                return;
            }
            for &i in &self.buckets[r as usize * self.cols + c as usize] {
                scratch.push((p.dist2(centers[i as usize]), i));
            }
        };
        let by_dist = |a: &(f64, u32), b: &(f64, u32)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        for ring in 0..=max_ring {
            if ring == 0 {
                visit(pr, pc, scratch);
            } else {
                for c in pc - ring..=pc + ring {
                    visit(pr - ring, c, scratch);
                    visit(pr + ring, c, scratch);
                }
                for r in pr - ring + 1..pr + ring {
                    visit(r, pc - ring, scratch);
                    visit(r, pc + ring, scratch);
                }
            }
            if scratch.len() >= k {
                if scratch.len() > k {
                    scratch.select_nth_unstable_by(k - 1, by_dist);
                    scratch.truncate(k);
                }
                // Distance along one axis from `p` to the nearest unvisited bucket.
                let (r, c) = (p.row as isize - self.row0 as isize, p.col as isize - self.col0 as isize);
                let margin = [
                    (pr - ring > 0).then(|| r - (pr - ring) * cell + 1),
                    (pr + ring < self.rows as isize - 1).then(|| (pr + ring + 1) * cell - r),
                    (pc - ring > 0).then(|| c - (pc - ring) * cell + 1),
                    (pc + ring < self.cols as isize - 1).then(|| (pc + ring + 1) * cell - c),
                ]
                .into_iter()
                .flatten()
                .min();
                let Some(margin) = margin else { break };
                let bound = (margin * margin) as f64;
                if scratch.iter().all(|e| e.0 < bound) {
                    break;
                }
            }
        }
        scratch.sort_unstable_by(by_dist);
        for (o, &(_, i)) in out.iter_mut().zip(scratch.iter()) {
            *o = i;
        }
    }
}

/// Per-pixel list of the `k` spatially nearest centers, nearest first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborTable {
    k: usize,
    centers: usize,
    indices: Vec<u32>,
}

impl NeighborTable {
    /// Exact spatial top-k; ties are broken by the lower center index.
    pub fn build(pixel_coords: &[PixelCoord], center_coords: &[PixelCoord], k: usize) -> Result<Self> {
        if k == 0 || k > center_coords.len() {
            return Err(Error::invalid(format!("mask size must be in 1..={}, got {k}", center_coords.len())));
        }
        let index = CenterIndex::new(center_coords);
        let mut indices = vec![0u32; pixel_coords.len() * k];
        indices.par_chunks_mut(k).zip(pixel_coords.par_iter()).for_each_init(
            || Vec::with_capacity(4 * k),
            |scratch, (out, &p)| index.nearest(p, k, center_coords, scratch, out),
        );
        Ok(Self { k, centers: center_coords.len(), indices })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn pixel_count(&self) -> usize {
        self.indices.len() / self.k
    }

    pub fn neighbors(&self, n: usize) -> &[u32] {
        &self.indices[n * self.k..(n + 1) * self.k]
    }
}

/// Sparse pixel-to-center affinities: `k` entries per pixel holding `exp(-D)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AssociationMatrix {
    pixels: usize,
    centers: usize,
    k: usize,
    indices: Vec<u32>,
    weights: Vec<f64>,
}

impl AssociationMatrix {
    /// Builds from flat per-pixel entries (`k` per pixel).
    pub fn from_entries(pixels: usize, centers: usize, k: usize, indices: Vec<u32>, weights: Vec<f64>) -> Result<Self> {
        if indices.len() != pixels * k || weights.len() != pixels * k {
            return Err(Error::invalid("association entry count must be pixels * k"));
        }
        if indices.iter().any(|&i| i as usize >= centers) {
            return Err(Error::invalid("association refers to a missing center"));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::invalid("association weights must be finite and non-negative"));
        }
        Ok(Self { pixels, centers, k, indices, weights })
    }

    pub fn pixel_count(&self) -> usize {
        self.pixels
    }

    pub fn center_count(&self) -> usize {
        self.centers
    }

    /// Stored entries per pixel.
    pub fn k(&self) -> usize {
        self.k
    }

    /// Stored `(center, weight)` pairs of pixel `n`, spatially nearest first.
    pub fn row(&self, n: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = n * self.k..(n + 1) * self.k;
        self.indices[span.clone()].iter().map(|&i| i as usize).zip(self.weights[span].iter().copied())
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Dense N x M view with zeros for masked entries.
    pub fn to_dense(&self) -> Array2<f64> {
        let mut dense = Array2::zeros((self.pixels, self.centers));
        for n in 0..self.pixels {
            for (m, w) in self.row(n) {
                dense[(n, m)] = w;
            }
        }
        dense
    }
}

/// Applies the spatial top-k mask and the exponential kernel to a dense distance.
pub fn associate(
    distance: &DistanceMatrix,
    mask_size: usize,
    pixel_coords: &[PixelCoord],
    center_coords: &[PixelCoord],
) -> Result<AssociationMatrix> {
    let d = distance.total();
    if d.dim() != (pixel_coords.len(), center_coords.len()) {
        return Err(Error::invalid(format!(
            "distance shape {:?} does not match {} pixels x {} centers",
            d.dim(),
            pixel_coords.len(),
            center_coords.len()
        )));
    }
    let table = NeighborTable::build(pixel_coords, center_coords, mask_size)?;
    associate_with(&table, center_coords.len(), |n, m| d[(n, m)])
}

/// Masked association from a neighbor table and a pair distance function.
pub fn associate_with<F>(table: &NeighborTable, centers: usize, distance: F) -> Result<AssociationMatrix>
where
    F: Fn(usize, usize) -> f64 + Sync,
{
    let k = table.k();
    let mut weights = vec![0.0; table.indices.len()];
    weights.par_chunks_mut(k).enumerate().for_each(|(n, out)| {
        for (w, &m) in out.iter_mut().zip(table.neighbors(n)) {
            *w = (-distance(n, m as usize)).exp();
        }
    });
    AssociationMatrix::from_entries(table.pixel_count(), centers, k, table.indices.clone(), weights)
}

/// Aggregated supertoken features with the pixels that contributed to each.
#[derive(Debug, Clone, PartialEq)]
pub struct SupertokenSet {
    features: Array2<f64>,
    provenance: Vec<Vec<(usize, f64)>>,
    center_coords: Vec<PixelCoord>,
}

impl SupertokenSet {
    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    /// `(pixel index, weight)` pairs of token `m`, ascending pixel index.
    pub fn provenance(&self, m: usize) -> &[(usize, f64)] {
        &self.provenance[m]
    }

    pub fn center_coords(&self) -> &[PixelCoord] {
        &self.center_coords
    }

    pub fn into_features(self) -> Array2<f64> {
        self.features
    }
}

/// `s = (p + sum a_i f_i) / (1 + sum a_i)` for every center.
///
/// Contributions are accumulated in ascending pixel order.
pub fn aggregate(
    assoc: &AssociationMatrix,
    pixel_sem: ArrayView2<'_, f64>,
    centers: &CenterSet,
) -> Result<SupertokenSet> {
    if assoc.pixel_count() != pixel_sem.nrows() {
        return Err(Error::invalid("association and semantic features disagree on pixel count"));
    }
    if assoc.center_count() != centers.len() {
        return Err(Error::invalid("association and center set disagree on center count"));
    }
    if pixel_sem.ncols() != centers.semantic.ncols() {
        return Err(Error::invalid("semantic feature width mismatch"));
    }
    let mut provenance: Vec<Vec<(usize, f64)>> = vec![Vec::new(); centers.len()];
    for n in 0..assoc.pixel_count() {
        for (m, w) in assoc.row(n) {
            if w > 0.0 {
                provenance[m].push((n, w));
            }
        }
    }
    let dim = pixel_sem.ncols();
    let rows: Vec<Vec<f64>> = provenance
        .par_iter()
        .enumerate()
        .map(|(m, pixels)| {
            let mut num: Vec<f64> = centers.semantic.row(m).to_vec();
            let mut den = 1.0;
            for &(n, w) in pixels {
                for (acc, f) in num.iter_mut().zip(pixel_sem.row(n)) {
                    *acc += w * f;
                }
                den += w;
            }
            num.iter_mut().for_each(|v| *v /= den);
            num
        })
        .collect();
    let features = Array2::from_shape_vec((centers.len(), dim), rows.concat()).expect("row lengths match");
    Ok(SupertokenSet { features, provenance, center_coords: centers.coords.clone() })
}

/// Result of one aggregation block.
#[derive(Debug, Clone)]
pub struct ScpaOutput {
    pub tokens: SupertokenSet,
    pub association: AssociationMatrix,
    /// Input centers with semantic rows replaced by the token features.
    pub centers: CenterSet,
}

/// One block: distance on the masked pairs, exponential kernel, aggregation.
pub fn scpa_block(
    cube: &HsiCube,
    deriv: &SpectralDerivative,
    features: &FeatureMap,
    centers: &CenterSet,
    mask_size: usize,
) -> Result<ScpaOutput> {
    scpa_group(cube, deriv, features, centers, mask_size, 1)
}

/// `repeats` consecutive blocks sharing one spatial neighbor table.
///
/// Center coordinates never move between repeats, so the spatial mask is
/// computed once; only the centers' semantic rows change.
pub fn scpa_group(
    cube: &HsiCube,
    deriv: &SpectralDerivative,
    features: &FeatureMap,
    centers: &CenterSet,
    mask_size: usize,
    repeats: usize,
) -> Result<ScpaOutput> {
    if repeats == 0 {
        return Err(Error::invalid("an aggregation group needs at least one repeat"));
    }
    let pixels = PixelFeatures::from_maps(cube, deriv, features)?;
    let norms = pixels.check_centers(centers)?;
    let (h, w) = (cube.height(), cube.width());
    if let Some(c) = centers.coords().iter().find(|c| c.row >= h || c.col >= w) {
        return Err(Error::invalid(format!("center ({}, {}) outside the image", c.row, c.col)));
    }
    let coords = image_coords(h, w);
    let table = NeighborTable::build(&coords, centers.coords(), mask_size)?;

    let mut current = centers.clone();
    let mut last = None;
    for _ in 0..repeats {
        let association = associate_with(&table, current.len(), |n, m| {
            spatial_term(coords[n], current.coords[m], h, w) + pixels.feature_distance(&norms, n, &current, m)
        })?;
        let tokens = aggregate(&association, pixels.semantic, &current)?;
        current = current.with_semantic(tokens.features.clone())?;
        last = Some((tokens, association));
    }
    let (tokens, association) = last.expect("at least one repeat");
    Ok(ScpaOutput { tokens, association, centers: current })
}
