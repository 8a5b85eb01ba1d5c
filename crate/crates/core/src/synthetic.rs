//! Seeded synthetic cubes for examples, tests and benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cube::{HsiCube, LabelMap};
use crate::error::{Error, Result};

/// Mean spectrum of class `class` (0-based) over `bands` bands.
pub fn class_spectrum(class: usize, classes: usize, bands: usize) -> Vec<f64> {
    (0..bands)
        .map(|b| {
            let phase = std::f64::consts::PI * (class as f64 + 1.0) * b as f64 / bands as f64;
            2.0 + 3.0 * class as f64 / classes as f64 + 1.5 * phase.cos()
        })
        .collect()
}

/// Region index of pixel `(row, col)` when a `height x width` image is split
/// among `classes` regions.
///
/// The longer side is halved; the first half takes `classes / 2` regions, the
/// second half the rest, recursively. Three classes give a left half, a top
/// right quarter and a bottom right quarter.
pub fn region_of(row: usize, col: usize, height: usize, width: usize, classes: usize) -> usize {
    let (mut r0, mut c0, mut h, mut w, mut n, mut base) = (0, 0, height, width, classes, 0);
    while n > 1 {
        let first = n / 2;
        if w >= h {
            let half = w / 2;
            if col < c0 + half {
                w = half;
                n = first;
            } else {
                c0 += half;
                w -= half;
                base += first;
                n -= first;
            }
        } else {
            let half = h / 2;
            if row < r0 + half {
                h = half;
                n = first;
            } else {
                r0 += half;
                h -= half;
                base += first;
                n -= first;
            }
        }
    }
    base
}

/// Cube split into `classes` rectangular regions (see [`region_of`]), each a
/// distinct spectrum plus uniform noise in `[-0.05, 0.05)`.
///
/// Labels are 1-based; every pixel is labeled.
pub fn separable_cube(
    height: usize,
    width: usize,
    bands: usize,
    classes: usize,
    seed: u64,
) -> Result<(HsiCube, LabelMap)> {
    if classes == 0 || classes > height * width {
        return Err(Error::invalid(format!("need 1..={} classes, got {classes}", height * width)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spectra: Vec<Vec<f64>> = (0..classes).map(|c| class_spectrum(c, classes, bands)).collect();
    let class_of = |r: usize, c: usize| region_of(r, c, height, width, classes);
    let cube =
        HsiCube::from_fn(height, width, bands, |r, c, b| spectra[class_of(r, c)][b] + rng.random_range(-0.05..0.05))?;
    let labels = (0..height * width).map(|n| class_of(n / width, n % width) as u16 + 1).collect();
    let labels = LabelMap::new(height, width, classes, labels)?;
    Ok((cube, labels))
}

/// Uniform random reflectance in `[0, 1)`.
pub fn random_cube(height: usize, width: usize, bands: usize, seed: u64) -> Result<HsiCube> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    HsiCube::from_fn(height, width, bands, |_, _, _| rng.random())
}
