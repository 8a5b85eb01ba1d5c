//! Per-token class proportions, their hard counterpart, and the soft cross-entropy.

use ndarray::Array2;
use supertoken::config::PipelineConfig;
use supertoken::pipeline::run_clustering;
use supertoken::softlabel::{class_counts, soft_cross_entropy, soft_labels};
use supertoken::synthetic::separable_cube;

fn main() -> supertoken::Result<()> {
    let (cube, labels) = separable_cube(32, 32, 8, 3, 3)?;
    let config = PipelineConfig { m1: 16, m2: 8, mask_size: 4, dicf_k: 3, ..PipelineConfig::default() };
    let c = run_clustering(&cube, &config)?;
    let counts = class_counts(&c.assignment, &labels)?;
    let soft = soft_labels(&counts);

    for m in 0..soft.token_count() {
        let row: Vec<String> = soft.values().row(m).iter().map(|v| format!("{v:.3}")).collect();
        println!("token {m}: counts {:?} -> [{}]", counts.row(m).to_vec(), row.join(", "));
    }
    let classes = soft.class_count();
    let uniform = Array2::from_elem((soft.token_count(), classes), 1.0 / classes as f64);
    println!(
        "uniform prediction: soft CE {:.4}, hard CE {:.4}, ln C {:.4}",
        soft_cross_entropy(uniform.view(), &soft)?,
        soft_cross_entropy(uniform.view(), &soft.to_hard())?,
        (classes as f64).ln()
    );
    Ok(())
}
