//! Writes a cube, a label map and a token feature matrix, then reads them back.

use supertoken::config::PipelineConfig;
use supertoken::io;
use supertoken::pipeline::run_clustering;
use supertoken::synthetic::separable_cube;

fn main() -> supertoken::Result<()> {
    let dir = std::env::temp_dir().join("supertoken_example_files");
    std::fs::create_dir_all(&dir)?;
    let (cube, labels) = separable_cube(16, 16, 6, 2, 0)?;
    let config = PipelineConfig { m1: 16, m2: 8, mask_size: 4, dicf_k: 3, channels: 4, ..PipelineConfig::default() };
    let tokens = run_clustering(&cube, &config)?.tokens.into_features();

    io::write_cube(&dir.join("cube.hsic"), &cube)?;
    io::write_labels(&dir.join("labels.hsil"), &labels)?;
    io::write_matrix(&dir.join("tokens.hsic"), &tokens)?;

    let cube_back = io::read_cube(&dir.join("cube.hsic"))?;
    let labels_back = io::read_labels(&dir.join("labels.hsil"))?;
    let tokens_back = io::read_matrix(&dir.join("tokens.hsic"))?;
    let cube_err = cube_back.values().iter().zip(cube.values()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    io::write_cube(&dir.join("cube_again.hsic"), &cube_back)?;
    let same = std::fs::read(dir.join("cube.hsic"))? == std::fs::read(dir.join("cube_again.hsic"))?;
    println!("cube stored as f32, max error {cube_err:.2e}; rewrite is byte-identical: {same}");
    println!("labels round trip exact: {}", labels_back == labels);
    let err = (&tokens_back - &tokens).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    println!("token features stored as f32, max error {err:.2e}");
    for entry in std::fs::read_dir(&dir)? {
        let entry = entry?;
        println!("{:>8} bytes  {}", entry.metadata()?.len(), entry.path().display());
    }
    Ok(())
}
