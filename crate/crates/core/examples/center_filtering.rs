//! Density and isolation scores of the first-stage centers and the ones kept.

use supertoken::config::PipelineConfig;
use supertoken::pipeline::run_clustering;
use supertoken::synthetic::separable_cube;

fn main() -> supertoken::Result<()> {
    let (cube, _) = separable_cube(32, 32, 8, 3, 2)?;
    let config = PipelineConfig { m1: 16, m2: 8, mask_size: 4, dicf_k: 3, ..PipelineConfig::default() };
    let c = run_clustering(&cube, &config)?;
    let g = &c.filter.graph;

    println!("center  density  isolation  score");
    for j in 0..g.density.len() {
        let mark = if c.filter.kept_indices.contains(&j) { "*" } else { "" };
        println!("{j:6}  {:7.4}  {:9.4}  {:6.4} {mark}", g.density[j], g.isolation[j], g.score[j]);
    }
    println!("kept (best first): {:?}", c.filter.kept_indices);
    println!("mean kept distance {:.4}, separation loss {:.4}", c.filter.separation.mean_distance, c.separation_loss());
    Ok(())
}
