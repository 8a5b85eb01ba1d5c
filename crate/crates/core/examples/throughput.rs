//! Times the global association against the tiled baseline.
//!
//! `cargo run --release --example throughput -- 128x128x32 256x256x32`

use supertoken::bench::{run_bench, BenchConfig, BenchSize};

fn main() -> supertoken::Result<()> {
    let mut config = BenchConfig::default();
    let sizes: Vec<BenchSize> = std::env::args().skip(1).map(|s| s.parse()).collect::<supertoken::Result<_>>()?;
    if !sizes.is_empty() {
        config.sizes = sizes;
    }
    let report = run_bench(&config)?;
    println!("{} ({} threads)", report.hardware, report.threads);
    for s in &report.sizes {
        println!(
            "{}x{}x{}: global {:.4}s ± {:.4}, baseline {:.4}s ± {:.4} over {} tiles, speedup {:.2}",
            s.size.height,
            s.size.width,
            s.size.bands,
            s.global.timing.median_s,
            s.global.timing.mad_s,
            s.baseline.timing.median_s,
            s.baseline.timing.mad_s,
            s.patches,
            s.speedup
        );
        println!(
            "  estimated flops: global {:e}, baseline {:e}",
            s.global.flop_estimate as f64, s.baseline.flop_estimate as f64
        );
    }
    Ok(())
}
