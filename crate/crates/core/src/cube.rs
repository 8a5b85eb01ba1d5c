//! Hyperspectral cubes, label maps, spectral derivatives and semantic features.
//!
//! Every per-pixel quantity is stored in a [`Raster`]: row-major pixel order with
//! the channel index running fastest. The wrappers ([`HsiCube`],
//! [`SpectralDerivative`], [`FeatureMap`]) only add the invariants specific to
//! each kind of data.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

/// Integer pixel position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PixelCoord {
    pub row: usize,
    pub col: usize,
}

impl PixelCoord {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }

    /// Squared Euclidean distance between two pixel positions.
    pub fn dist2(self, other: PixelCoord) -> f64 {
        let dr = self.row as f64 - other.row as f64;
        let dc = self.col as f64 - other.col as f64;
        dr * dr + dc * dc
    }
}

impl From<(usize, usize)> for PixelCoord {
    fn from((row, col): (usize, usize)) -> Self {
        Self { row, col }
    }
}

/// A height x width grid of equally sized feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    height: usize,
    width: usize,
    channels: usize,
    values: Vec<f64>,
}

impl Raster {
    pub fn new(height: usize, width: usize, channels: usize, values: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::invalid(format!("raster dimensions must be positive, got {height}x{width}x{channels}")));
        }
        if values.len() != height * width * channels {
            return Err(Error::invalid(format!(
                "expected {} values for a {height}x{width}x{channels} raster, got {}",
                height * width * channels,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite value at flat index {pos}")));
        }
        Ok(Self { height, width, channels, values })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn pixel(&self, row: usize, col: usize) -> &[f64] {
        let start = (row * self.width + col) * self.channels;
        &self.values[start..start + self.channels]
    }

    /// Feature vector of the pixel with flat (row-major) index `n`.
    pub fn pixel_at(&self, n: usize) -> &[f64] {
        &self.values[n * self.channels..(n + 1) * self.channels]
    }

    /// View as an N x channels matrix (the reshaped form used by the distance formulas).
    pub fn as_matrix(&self) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((self.pixel_count(), self.channels), &self.values)
            .expect("raster length checked at construction")
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Copy of the window `[row0, row0 + h) x [col0, col0 + w)`.
    pub fn crop(&self, row0: usize, col0: usize, h: usize, w: usize) -> Result<Raster> {
        if h == 0 || w == 0 || row0 + h > self.height || col0 + w > self.width {
            return Err(Error::invalid(format!(
                "crop {h}x{w} at ({row0},{col0}) outside {}x{} raster",
                self.height, self.width
            )));
        }
        let mut values = Vec::with_capacity(h * w * self.channels);
        for r in row0..row0 + h {
            let start = (r * self.width + col0) * self.channels;
            values.extend_from_slice(&self.values[start..start + w * self.channels]);
        }
        Ok(Raster { height: h, width: w, channels: self.channels, values })
    }
}

impl AsRef<Raster> for Raster {
    fn as_ref(&self) -> &Raster {
        self
    }
}

macro_rules! raster_wrapper {
    ($name:ident) => {
        impl AsRef<Raster> for $name {
            fn as_ref(&self) -> &Raster {
                &self.0
            }
        }

        impl std::ops::Deref for $name {
            type Target = Raster;

            fn deref(&self) -> &Raster {
                &self.0
            }
        }
    };
}

/// H x W x B reflectance volume.
#[derive(Debug, Clone, PartialEq)]
pub struct HsiCube(Raster);
raster_wrapper!(HsiCube);

impl HsiCube {
    pub fn new(height: usize, width: usize, bands: usize, values: Vec<f64>) -> Result<Self> {
        if bands < 2 {
            return Err(Error::invalid(format!("a cube needs at least 2 bands, got {bands}")));
        }
        Ok(Self(Raster::new(height, width, bands, values)?))
    }

    /// Builds a cube from a per-pixel spectrum function.
    pub fn from_fn(
        height: usize,
        width: usize,
        bands: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(height * width * bands);
        for r in 0..height {
            for c in 0..width {
                for b in 0..bands {
                    values.push(f(r, c, b));
                }
            }
        }
        Self::new(height, width, bands, values)
    }

    pub fn bands(&self) -> usize {
        self.0.channels
    }

    pub fn crop(&self, row0: usize, col0: usize, h: usize, w: usize) -> Result<HsiCube> {
        Ok(HsiCube(self.0.crop(row0, col0, h, w)?))
    }
}

/// Forward band differences of a cube, B - 1 channels.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDerivative(Raster);
raster_wrapper!(SpectralDerivative);

impl SpectralDerivative {
    pub fn bands(&self) -> usize {
        self.0.channels
    }

    pub fn crop(&self, row0: usize, col0: usize, h: usize, w: usize) -> Result<SpectralDerivative> {
        Ok(SpectralDerivative(self.0.crop(row0, col0, h, w)?))
    }
}

/// Per-pixel semantic feature vectors with C1 channels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap(Raster);
raster_wrapper!(FeatureMap);

impl FeatureMap {
    pub fn new(height: usize, width: usize, channels: usize, values: Vec<f64>) -> Result<Self> {
        Ok(Self(Raster::new(height, width, channels, values)?))
    }

    pub fn crop(&self, row0: usize, col0: usize, h: usize, w: usize) -> Result<FeatureMap> {
        Ok(FeatureMap(self.0.crop(row0, col0, h, w)?))
    }
}

/// Per-pixel ground truth: 0 is unlabeled, 1..=C are classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    height: usize,
    width: usize,
    class_count: usize,
    labels: Vec<u16>,
}

impl LabelMap {
    pub fn new(height: usize, width: usize, class_count: usize, labels: Vec<u16>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid("label map dimensions must be positive"));
        }
        if labels.len() != height * width {
            return Err(Error::invalid(format!("expected {} labels, got {}", height * width, labels.len())));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize > class_count) {
            return Err(Error::invalid(format!("label {bad} exceeds class count {class_count}")));
        }
        Ok(Self { height, width, class_count, labels })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn labels(&self) -> &[u16] {
        &self.labels
    }

    pub fn get(&self, row: usize, col: usize) -> u16 {
        self.labels[row * self.width + col]
    }
}

/// Computes `I'(i) = I(i + 1) - I(i)` for every pixel.
pub fn spectral_derivative(cube: &HsiCube) -> Result<SpectralDerivative> {
    let bands = cube.bands();
    if bands < 2 {
        return Err(Error::invalid("spectral derivative needs at least 2 bands"));
    }
    let mut values = Vec::with_capacity(cube.pixel_count() * (bands - 1));
    for spectrum in cube.values().chunks_exact(bands) {
        values.extend(spectrum.windows(2).map(|w| w[1] - w[0]));
    }
    Ok(SpectralDerivative(Raster::new(cube.height(), cube.width(), bands - 1, values)?))
}

/// Reads feature vectors at integer pixel positions (nearest pixel, no interpolation).
///
/// Row `m` of the result is the vector stored at `coords[m]`.
pub fn sample_at<R: AsRef<Raster> + ?Sized>(coords: &[PixelCoord], source: &R) -> Result<Array2<f64>> {
    let raster = source.as_ref();
    let mut out = Array2::zeros((coords.len(), raster.channels()));
    for (m, c) in coords.iter().enumerate() {
        if c.row >= raster.height() || c.col >= raster.width() {
            return Err(Error::invalid(format!(
                "coordinate ({}, {}) outside {}x{} image",
                c.row,
                c.col,
                raster.height(),
                raster.width()
            )));
        }
        out.row_mut(m).assign(&ndarray::aview1(raster.pixel(c.row, c.col)));
    }
    Ok(out)
}

/// Produces the semantic feature map consumed by the clustering stage.
///
/// Implementations must be deterministic: the same cube and configuration give
/// the same feature map.
pub trait FeatureProvider {
    /// Number of channels (C1) of the produced feature map.
    fn channels(&self) -> usize;

    fn features(&self, cube: &HsiCube) -> Result<FeatureMap>;
}

/// Box-smoothed principal component projection of the spectra.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PcaFeatureProvider {
    pub channels: usize,
    pub smoothing_radius: usize,
}

impl PcaFeatureProvider {
    pub fn new(channels: usize, smoothing_radius: usize) -> Self {
        Self { channels, smoothing_radius }
    }
}

impl FeatureProvider for PcaFeatureProvider {
    fn channels(&self) -> usize {
        self.channels
    }

    fn features(&self, cube: &HsiCube) -> Result<FeatureMap> {
        pca_feature_provider(cube, self.channels, self.smoothing_radius)
    }
}

/// Replicate-edge box mean over a (2r+1)^2 window, applied separably.
pub fn box_smooth(raster: &Raster, radius: usize) -> Raster {
    if radius == 0 {
        return raster.clone();
    }
    let (h, w, ch) = (raster.height(), raster.width(), raster.channels());
    let r = radius as isize;
    let clamp = |v: isize, hi: usize| v.clamp(0, hi as isize - 1) as usize;

    let mut horiz = vec![0.0; raster.values().len()];
    for row in 0..h {
        for col in 0..w {
            let out = &mut horiz[(row * w + col) * ch..(row * w + col + 1) * ch];
            for d in -r..=r {
                let src = raster.pixel(row, clamp(col as isize + d, w));
                out.iter_mut().zip(src).for_each(|(o, s)| *o += s);
            }
        }
    }
    let scale = 1.0 / ((2 * radius + 1) * (2 * radius + 1)) as f64;
    let mut values = vec![0.0; horiz.len()];
    for row in 0..h {
        for col in 0..w {
            let out = &mut values[(row * w + col) * ch..(row * w + col + 1) * ch];
            for d in -r..=r {
                let src_row = clamp(row as isize + d, h);
                let src = &horiz[(src_row * w + col) * ch..(src_row * w + col + 1) * ch];
                out.iter_mut().zip(src).for_each(|(o, s)| *o += s);
            }
            out.iter_mut().for_each(|o| *o *= scale);
        }
    }
    Raster { height: h, width: w, channels: ch, values }
}

/// Deterministic stand-in for a learned feature extractor.
///
/// Spectra are box-mean smoothed with replicated borders, centered, and
/// projected onto the leading `channels` principal components of the smoothed
/// spectra. Each component's sign is fixed so that its largest-magnitude entry
/// is positive.
pub fn pca_feature_provider(cube: &HsiCube, channels: usize, smoothing_radius: usize) -> Result<FeatureMap> {
    let bands = cube.bands();
    if channels == 0 || channels > bands {
        return Err(Error::invalid(format!("feature channels must be in 1..={bands}, got {channels}")));
    }
    let smoothed = box_smooth(cube, smoothing_radius);
    let n = smoothed.pixel_count();

    let mut mean = vec![0.0; bands];
    for spectrum in smoothed.values().chunks_exact(bands) {
        mean.iter_mut().zip(spectrum).for_each(|(m, s)| *m += s);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let mut cov = DMatrix::<f64>::zeros(bands, bands);
    let mut centered = vec![0.0; bands];
    for spectrum in smoothed.values().chunks_exact(bands) {
        for (c, (s, m)) in centered.iter_mut().zip(spectrum.iter().zip(&mean)) {
            *c = s - m;
        }
        for i in 0..bands {
            for j in i..bands {
                cov[(i, j)] += centered[i] * centered[j];
            }
        }
    }
    for i in 0..bands {
        for j in i..bands {
            let v = cov[(i, j)] / n as f64;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..bands).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let components: Vec<Vec<f64>> = order[..channels]
        .iter()
        .map(|&k| {
            let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
            let lead =
                v.iter()
                    .copied()
                    .enumerate()
                    .fold((0, 0.0f64), |best, (i, x)| if x.abs() > best.1.abs() { (i, x) } else { best });
            if lead.1 < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            v
        })
        .collect();

    let mut values = Vec::with_capacity(n * channels);
    for spectrum in smoothed.values().chunks_exact(bands) {
        for comp in &components {
            let proj: f64 = spectrum.iter().zip(&mean).zip(comp).map(|((s, m), c)| (s - m) * c).sum();
            values.push(proj);
        }
    }
    FeatureMap::new(cube.height(), cube.width(), channels, values)
}
