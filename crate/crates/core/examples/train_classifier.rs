//! Trains the token classifier on a toy cube, saves a checkpoint and scores the class map.

use supertoken::classifier::{checkpoint, classify, predict_classes, train_toy};
use supertoken::config::PipelineConfig;
use supertoken::metrics::{confusion, scores};
use supertoken::softlabel::project_to_pixels;
use supertoken::synthetic::separable_cube;

fn main() -> supertoken::Result<()> {
    let (cube, labels) = separable_cube(32, 32, 8, 3, 0)?;
    let config = PipelineConfig { m1: 16, m2: 8, mask_size: 4, dicf_k: 3, ..PipelineConfig::default() };
    let report = train_toy(&config, &cube, &labels, 200, 0.5)?;
    for (step, loss) in report.losses.iter().enumerate().step_by(25) {
        println!("step {step:3}  loss {loss:.4}");
    }
    println!("final    loss {:.4}", report.final_loss());

    let path = std::env::temp_dir().join("supertoken_example_checkpoint.bin");
    checkpoint::save(&path, &report.params)?;
    let params = checkpoint::load(&path)?;
    println!("checkpoint: {} parameters -> {}", params.parameter_count(), path.display());

    let probs = classify(report.clustering.tokens.features().view(), &params)?;
    let map = project_to_pixels(&report.clustering.assignment, &predict_classes(&probs), cube.height(), cube.width())?;
    let cm = confusion(&labels, &map)?;
    print!("{}", scores(&cm)?.to_kv_text(&cm));
    Ok(())
}
