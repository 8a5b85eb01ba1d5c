//! File-level operations behind the `supertoken` binary.
//!
//! Every command reads its inputs from disk, runs the library, and writes its
//! outputs into an output directory under fixed file names.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::bench::{run_bench, BenchConfig, BenchReport};
use crate::classifier::{checkpoint, classify, predict_classes, train_toy, ClassifierParams, TrainReport};
use crate::config::PipelineConfig;
use crate::cube::{HsiCube, LabelMap};
use crate::error::{Error, Result};
use crate::io;
use crate::metrics::{confusion, scores, ConfusionMatrix, Scores};
use crate::pipeline::{run_clustering, Clustering};
use crate::softlabel::{class_counts, project_to_pixels, soft_labels, ClassMap};
use crate::synthetic::separable_cube;

pub const TOKEN_MAP: &str = "tokens.hsil";
pub const TOKEN_FEATURES: &str = "token_features.hsic";
pub const MANIFEST: &str = "manifest.txt";
pub const FILTER_REPORT: &str = "filter.json";
pub const SOFT_LABELS: &str = "soft_labels.json";
pub const CHECKPOINT: &str = "checkpoint.bin";
pub const LOSS_TRACE: &str = "loss_trace.txt";
pub const CLASS_MAP: &str = "class_map.hsil";
pub const METRICS_TEXT: &str = "metrics.txt";
pub const METRICS_JSON: &str = "metrics.json";
pub const BENCH_REPORT: &str = "bench.json";
pub const TOY_CUBE: &str = "toy_cube.hsic";
pub const TOY_LABELS: &str = "toy_labels.hsil";

/// Runs `f` on a dedicated pool of `threads` workers, or the global pool for `None`.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(Error::invalid("--threads must be at least 1")),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidState(format!("cannot build thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn out_file(out: &Path, name: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(out)?;
    Ok(out.join(name))
}

/// Per-pixel owning token as a label map with `C = M2` (values are 0-based token indices).
pub fn token_map(clustering: &Clustering, height: usize, width: usize) -> Result<LabelMap> {
    let owners = clustering.assignment.owners().iter().map(|&t| t as u16).collect();
    LabelMap::new(height, width, clustering.tokens.len(), owners)
}

/// Writes the token map, token features and a run manifest.
pub fn cmd_cluster(cube_path: &Path, config: &PipelineConfig, out: &Path) -> Result<Clustering> {
    let cube = io::read_cube(cube_path)?;
    let clustering = run_clustering(&cube, config)?;
    io::write_labels(&out_file(out, TOKEN_MAP)?, &token_map(&clustering, cube.height(), cube.width())?)?;
    io::write_matrix(&out_file(out, TOKEN_FEATURES)?, clustering.tokens.features())?;
    let manifest = format!(
        "{}cube = {}x{}x{}\ntokens = {}\nseparation_loss = {}\n",
        config.to_text(),
        cube.height(),
        cube.width(),
        cube.bands(),
        clustering.tokens.len(),
        clustering.separation_loss()
    );
    std::fs::write(out_file(out, MANIFEST)?, manifest)?;
    Ok(clustering)
}

#[derive(Debug, Serialize)]
struct FilterReport<'a> {
    kept_indices: &'a [usize],
    scores: &'a [f64],
    density: &'a [f64],
    isolation: &'a [f64],
    mean_distance: f64,
    separation_loss: f64,
}

/// Writes the center filtering outcome as JSON.
pub fn cmd_filter(cube_path: &Path, config: &PipelineConfig, out: &Path) -> Result<Clustering> {
    let cube = io::read_cube(cube_path)?;
    let clustering = run_clustering(&cube, config)?;
    let f = &clustering.filter;
    let report = FilterReport {
        kept_indices: &f.kept_indices,
        scores: f.scores(),
        density: &f.graph.density,
        isolation: &f.graph.isolation,
        mean_distance: f.separation.mean_distance,
        separation_loss: f.separation.loss,
    };
    let json = serde_json::to_string_pretty(&report).map_err(|e| Error::InvalidState(e.to_string()))?;
    std::fs::write(out_file(out, FILTER_REPORT)?, json + "\n")?;
    Ok(clustering)
}

#[derive(Debug, Serialize)]
struct SoftLabelRow {
    token: usize,
    valid: bool,
    counts: Vec<u64>,
    labels: Vec<f64>,
}

fn read_pair(cube_path: &Path, labels_path: &Path) -> Result<(HsiCube, LabelMap)> {
    let cube = io::read_cube(cube_path)?;
    let labels = io::read_labels(labels_path)?;
    if labels.height() != cube.height() || labels.width() != cube.width() {
        return Err(Error::invalid(format!(
            "labels are {}x{}, cube is {}x{}",
            labels.height(),
            labels.width(),
            cube.height(),
            cube.width()
        )));
    }
    Ok((cube, labels))
}

/// Writes per-token class counts and soft labels as JSON.
pub fn cmd_softlabel(cube_path: &Path, labels_path: &Path, config: &PipelineConfig, out: &Path) -> Result<()> {
    let (cube, labels) = read_pair(cube_path, labels_path)?;
    let clustering = run_clustering(&cube, config)?;
    let counts = class_counts(&clustering.assignment, &labels)?;
    let soft = soft_labels(&counts);
    let rows: Vec<SoftLabelRow> = (0..soft.token_count())
        .map(|m| SoftLabelRow {
            token: m,
            valid: soft.valid()[m],
            counts: counts.row(m).to_vec(),
            labels: soft.values().row(m).to_vec(),
        })
        .collect();
    let json = serde_json::to_string_pretty(&rows).map_err(|e| Error::InvalidState(e.to_string()))?;
    std::fs::write(out_file(out, SOFT_LABELS)?, json + "\n")?;
    Ok(())
}

/// Trains on the given cube and labels, or on a generated 32x32x8 three-class cube when none is given.
///
/// Writes the checkpoint and the loss trace (one value per line); a generated
/// cube is written next to them.
pub fn cmd_train_toy(
    inputs: Option<(&Path, &Path)>,
    config: &PipelineConfig,
    steps: usize,
    learning_rate: f64,
    out: &Path,
) -> Result<TrainReport> {
    let (cube, labels) = match inputs {
        Some((c, l)) => read_pair(c, l)?,
        None => {
            let (cube, labels) = separable_cube(32, 32, 8, 3, config.seed)?;
            io::write_cube(&out_file(out, TOY_CUBE)?, &cube)?;
            io::write_labels(&out_file(out, TOY_LABELS)?, &labels)?;
            (cube, labels)
        }
    };
    let report = train_toy(config, &cube, &labels, steps, learning_rate)?;
    checkpoint::save(&out_file(out, CHECKPOINT)?, &report.params)?;
    let trace: String = report.losses.iter().map(|l| format!("{l:e}\n")).collect();
    std::fs::write(out_file(out, LOSS_TRACE)?, trace)?;
    Ok(report)
}

fn predict(cube: &HsiCube, config: &PipelineConfig, params: &ClassifierParams) -> Result<ClassMap> {
    let clustering = run_clustering(cube, config)?;
    let probs = classify(clustering.tokens.features().view(), params)?;
    project_to_pixels(&clustering.assignment, &predict_classes(&probs), cube.height(), cube.width())
}

fn write_class_map(out: &Path, map: &ClassMap, classes: usize) -> Result<()> {
    let labels = LabelMap::new(map.height, map.width, classes, map.classes.clone())?;
    io::write_labels(&out_file(out, CLASS_MAP)?, &labels)
}

/// Classifies the tokens of a cube and writes the pixel class map.
pub fn cmd_classify(cube_path: &Path, config: &PipelineConfig, checkpoint_path: &Path, out: &Path) -> Result<ClassMap> {
    let cube = io::read_cube(cube_path)?;
    let params = checkpoint::load(checkpoint_path)?;
    if params.dim() != config.channels || params.pattern() != config.blocks {
        return Err(Error::Checkpoint(format!(
            "checkpoint is dim {} blocks {:?}, config asks for dim {} blocks {:?}",
            params.dim(),
            params.pattern(),
            config.channels,
            config.blocks
        )));
    }
    let map = predict(&cube, config, &params)?;
    write_class_map(out, &map, params.classes())?;
    Ok(map)
}

/// Classifies, writes the class map, and writes the metric report in text and JSON.
pub fn cmd_eval(
    cube_path: &Path,
    labels_path: &Path,
    config: &PipelineConfig,
    checkpoint_path: &Path,
    out: &Path,
) -> Result<(ConfusionMatrix, Scores)> {
    let (cube, labels) = read_pair(cube_path, labels_path)?;
    let params = checkpoint::load_compatible(checkpoint_path, config.channels, labels.class_count(), &config.blocks)?;
    let map = predict(&cube, config, &params)?;
    write_class_map(out, &map, params.classes())?;
    let cm = confusion(&labels, &map)?;
    let s = scores(&cm)?;
    std::fs::write(out_file(out, METRICS_TEXT)?, s.to_kv_text(&cm))?;
    std::fs::write(out_file(out, METRICS_JSON)?, s.to_json(&cm))?;
    Ok((cm, s))
}

pub fn cmd_bench(config: &BenchConfig, out: &Path) -> Result<BenchReport> {
    let report = run_bench(config)?;
    std::fs::write(out_file(out, BENCH_REPORT)?, report.to_json())?;
    Ok(report)
}
