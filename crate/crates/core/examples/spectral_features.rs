//! Spectral derivative and PCA semantic features of a synthetic cube.

use supertoken::cube::{pca_feature_provider, spectral_derivative};
use supertoken::synthetic::separable_cube;

fn main() -> supertoken::Result<()> {
    let (cube, labels) = separable_cube(24, 24, 10, 3, 0)?;
    let deriv = spectral_derivative(&cube)?;
    let features = pca_feature_provider(&cube, 4, 1)?;

    println!("cube {}x{}x{}", cube.height(), cube.width(), cube.bands());
    println!("derivative channels: {}", deriv.channels());
    println!("semantic channels: {}", features.channels());
    for (r, c) in [(0, 0), (0, 23), (23, 23)] {
        let f: Vec<String> = features.pixel(r, c).iter().map(|v| format!("{v:+.3}")).collect();
        println!("pixel ({r:2},{c:2}) class {} -> [{}]", labels.get(r, c), f.join(", "));
    }
    Ok(())
}
