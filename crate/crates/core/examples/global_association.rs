//! One-shot masked association of every pixel with its spatially nearest centers.

use supertoken::cube::{pca_feature_provider, spectral_derivative};
use supertoken::scpa::{init_center_grid, scpa_group, CenterSet};
use supertoken::softlabel::hard_assign;
use supertoken::synthetic::separable_cube;

fn main() -> supertoken::Result<()> {
    let (cube, _) = separable_cube(32, 32, 8, 3, 1)?;
    let (h, w) = (cube.height(), cube.width());
    let deriv = spectral_derivative(&cube)?;
    let features = pca_feature_provider(&cube, 4, 1)?;

    let centers = CenterSet::sample(init_center_grid(h, w, 16)?, &cube, &deriv, &features)?;
    let out = scpa_group(&cube, &deriv, &features, &centers, 4, 3)?;
    let owners = hard_assign(&out.association)?;

    println!(
        "{} pixels, {} tokens, {} entries per pixel",
        out.association.pixel_count(),
        out.tokens.len(),
        out.association.k()
    );
    let mut sizes = vec![0usize; out.tokens.len()];
    owners.owners().iter().for_each(|&m| sizes[m] += 1);
    for (m, c) in out.tokens.center_coords().iter().enumerate() {
        println!("token {m:2} at ({:2},{:2}) owns {:3} pixels", c.row, c.col, sizes[m]);
    }
    Ok(())
}
