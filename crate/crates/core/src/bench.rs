//! Wall-clock comparison of the global masked association against the
//! tile-restricted baseline at equal total center count.

use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;

use crate::baseline::{patch_baseline_associate, patch_grid};
use crate::cube::{pca_feature_provider, spectral_derivative, HsiCube};
use crate::error::{Error, Result};
use crate::scpa::{init_center_grid, scpa_block, CenterSet};
use crate::synthetic::random_cube;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BenchSize {
    pub height: usize,
    pub width: usize,
    pub bands: usize,
}

impl FromStr for BenchSize {
    type Err = Error;

    /// Parses `HxWxB`, e.g. `256x256x32`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(['x', 'X']).collect();
        let dims: Option<Vec<usize>> = parts.iter().map(|p| p.parse().ok()).collect();
        match dims.as_deref() {
            Some(&[height, width, bands]) if height > 0 && width > 0 && bands >= 2 => Ok(Self { height, width, bands }),
            _ => Err(Error::config("sizes", format!("`{s}` is not HxWxB with B >= 2"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub sizes: Vec<BenchSize>,
    pub repetitions: usize,
    pub centers: usize,
    pub mask_size: usize,
    pub channels: usize,
    pub patch_size: usize,
    /// Aggregation passes inside each tile for the baseline.
    pub baseline_iterations: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            sizes: vec![BenchSize { height: 256, width: 256, bands: 32 }],
            repetitions: 5,
            centers: 256,
            mask_size: 9,
            channels: 8,
            patch_size: 64,
            baseline_iterations: 1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Timing {
    pub samples_s: Vec<f64>,
    pub median_s: f64,
    /// Median absolute deviation from the median.
    pub mad_s: f64,
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

impl Timing {
    pub fn from_samples(samples_s: Vec<f64>) -> Self {
        let median_s = median(&samples_s);
        let deviations: Vec<f64> = samples_s.iter().map(|s| (s - median_s).abs()).collect();
        Self { mad_s: median(&deviations), median_s, samples_s }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathReport {
    pub timing: Timing,
    pub total_centers: usize,
    pub mask_size: usize,
    pub distance_evaluations: u64,
    pub flop_estimate: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SizeReport {
    pub size: BenchSize,
    pub patches: usize,
    pub centers_per_patch: usize,
    pub global: PathReport,
    pub baseline: PathReport,
    /// Baseline median over global median.
    pub speedup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub threads: usize,
    pub hardware: String,
    pub repetitions: usize,
    pub channels: usize,
    pub patch_size: usize,
    pub baseline_iterations: usize,
    pub seed: u64,
    pub sizes: Vec<SizeReport>,
}

impl BenchReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report fields serialize") + "\n"
    }
}

/// Flops for one pixel-center distance: squared differences over the three
/// feature groups, the three scalings, and the spatial term.
pub fn pair_flops(bands: usize, channels: usize) -> u64 {
    (3 * bands + 3 * (bands - 1) + 3 * channels + 12) as u64
}

/// Flops for the kernel and the weighted accumulation of one kept pair.
pub fn kept_pair_flops(channels: usize) -> u64 {
    (2 * channels + 2) as u64
}

/// Closed-form flops of one masked global pass.
pub fn global_flops(pixels: usize, centers: usize, k: usize, bands: usize, channels: usize) -> u64 {
    let kept = (pixels * k) as u64;
    kept * (pair_flops(bands, channels) + kept_pair_flops(channels)) + (centers * channels) as u64
}

/// Closed-form flops of the baseline, which evaluates every pixel against every center of its tile.
pub fn baseline_flops(
    evaluations: u64,
    pixels: usize,
    centers: usize,
    k: usize,
    bands: usize,
    channels: usize,
    iterations: usize,
) -> u64 {
    let per_pass_kept = (pixels * k) as u64 * kept_pair_flops(channels) + (centers * channels) as u64;
    evaluations * pair_flops(bands, channels) + iterations as u64 * per_pass_kept
}

pub fn hardware_note() -> String {
    let cpu = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split(':').nth(1))
                .map(|s| s.trim().to_string())
        })
        .unwrap_or_else(|| "unknown cpu".into());
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    format!("{cpu}; {} {}; {cores} logical cores", std::env::consts::OS, std::env::consts::ARCH)
}

fn time<T>(f: impl FnOnce() -> Result<T>) -> Result<(f64, T)> {
    let start = Instant::now();
    let out = f()?;
    Ok((start.elapsed().as_secs_f64(), out))
}

/// Benchmarks one cube. One untimed warm-up run precedes the timed repetitions of each path.
pub fn bench_cube(cube: &HsiCube, config: &BenchConfig) -> Result<SizeReport> {
    if config.repetitions < 3 {
        return Err(Error::config("repetitions", "need at least 3 repetitions"));
    }
    let (h, w, b) = (cube.height(), cube.width(), cube.bands());
    let size = BenchSize { height: h, width: w, bands: b };
    let deriv = spectral_derivative(cube)?;
    let features = pca_feature_provider(cube, config.channels, 1)?;
    let patches = patch_grid(h, w, config.patch_size)?.len();
    let centers_per_patch = config.centers.div_ceil(patches);

    let global_once = || {
        let centers = CenterSet::sample(init_center_grid(h, w, config.centers)?, cube, &deriv, &features)?;
        scpa_block(cube, &deriv, &features, &centers, config.mask_size)
    };
    let baseline_once = || {
        patch_baseline_associate(
            cube,
            &deriv,
            &features,
            config.patch_size,
            centers_per_patch,
            config.mask_size,
            config.baseline_iterations,
        )
    };

    let warm_global = global_once()?;
    let warm_base = baseline_once()?;
    let mut global_samples = Vec::with_capacity(config.repetitions);
    let mut base_samples = Vec::with_capacity(config.repetitions);
    for _ in 0..config.repetitions {
        global_samples.push(time(global_once)?.0);
        base_samples.push(time(baseline_once)?.0);
    }

    let n = h * w;
    let k = warm_global.association.k();
    let global = PathReport {
        timing: Timing::from_samples(global_samples),
        total_centers: config.centers,
        mask_size: k,
        distance_evaluations: (n * k) as u64,
        flop_estimate: global_flops(n, config.centers, k, b, config.channels),
    };
    let base_centers = warm_base.center_coords.len();
    let baseline = PathReport {
        timing: Timing::from_samples(base_samples),
        total_centers: base_centers,
        mask_size: warm_base.mask_size,
        distance_evaluations: warm_base.distance_evaluations,
        flop_estimate: baseline_flops(
            warm_base.distance_evaluations,
            n,
            base_centers,
            warm_base.mask_size,
            b,
            config.channels,
            config.baseline_iterations,
        ),
    };
    let speedup = baseline.timing.median_s / global.timing.median_s;
    Ok(SizeReport { size, patches, centers_per_patch, global, baseline, speedup })
}

/// Benchmarks every configured size on seeded random cubes.
pub fn run_bench(config: &BenchConfig) -> Result<BenchReport> {
    let mut sizes = Vec::with_capacity(config.sizes.len());
    for (i, s) in config.sizes.iter().enumerate() {
        let cube = random_cube(s.height, s.width, s.bands, config.seed.wrapping_add(i as u64))?;
        sizes.push(bench_cube(&cube, config)?);
    }
    Ok(BenchReport {
        threads: rayon::current_num_threads(),
        hardware: hardware_note(),
        repetitions: config.repetitions,
        channels: config.channels,
        patch_size: config.patch_size,
        baseline_iterations: config.baseline_iterations,
        seed: config.seed,
        sizes,
    })
}
