//! A uniform region straddling a tile border: split by the tiled baseline,
//! kept whole by the global association.

use supertoken::baseline::patch_baseline_associate;
use supertoken::cube::{pca_feature_provider, spectral_derivative, HsiCube};
use supertoken::scpa::{init_center_grid, scpa_block, CenterSet};
use supertoken::softlabel::hard_assign;
use supertoken::synthetic::random_cube;

fn main() -> supertoken::Result<()> {
    let (h, w, b) = (32, 32, 16);
    let noise = random_cube(h, w, b, 5)?;
    let inside = |r: usize, c: usize| (9..=15).contains(&r) && (9..=19).contains(&c);
    let cube = HsiCube::from_fn(h, w, b, |r, c, k| if inside(r, c) { 3.0 } else { noise.pixel(r, c)[k] })?;
    let deriv = spectral_derivative(&cube)?;
    let features = pca_feature_provider(&cube, 4, 1)?;

    let tiled = patch_baseline_associate(&cube, &deriv, &features, 16, 4, 9, 1)?;
    let centers = CenterSet::sample(init_center_grid(h, w, 16)?, &cube, &deriv, &features)?;
    let global = scpa_block(&cube, &deriv, &features, &centers, 9)?;

    for (name, assoc) in [("tiled", &tiled.association), ("global", &global.association)] {
        let owners = hard_assign(assoc)?;
        println!("{name}:");
        for r in 6..19 {
            let line: String = (4..25)
                .map(|c| {
                    let t = owners.owners()[r * w + c] as u32;
                    if inside(r, c) {
                        char::from_digit(t % 36, 36).unwrap()
                    } else {
                        '.'
                    }
                })
                .collect();
            println!("  {line}");
        }
    }
    println!("(token ids inside the uniform region; the tile border is between the 12th and 13th columns shown)");
    Ok(())
}
