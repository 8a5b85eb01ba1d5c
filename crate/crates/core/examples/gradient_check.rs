//! Compares the analytic classifier gradient with central differences.

use ndarray::{array, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use supertoken::classifier::{default_pattern, loss_and_gradient, ClassifierParams, Objective};
use supertoken::softlabel::soft_labels;

fn main() -> supertoken::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let tokens = Array2::from_shape_fn((6, 8), |_| rng.random_range(-1.0..1.0));
    let mut params = ClassifierParams::init(8, 3, &default_pattern(), 7)?;
    for t in params.tensors_mut() {
        t.mapv_inplace(|_| rng.random_range(-0.5..0.5));
    }
    let labels = soft_labels(&array![[3u64, 1, 0], [0, 2, 0], [0, 5, 2], [1, 1, 1], [0, 0, 4], [2, 0, 7]]);
    let kept = Array2::from_shape_fn((4, 8), |_| rng.random_range(-1.0..1.0));
    let objective = Objective::new(&labels).with_separation(kept.view());
    let g = loss_and_gradient(tokens.view(), &params, &objective)?;
    println!("loss {:.6} (cross-entropy {:.6}, separation {:.6})", g.loss, g.ce, g.sst);

    let h = 1e-4;
    let names = params.tensor_names();
    let analytic: Vec<Array2<f64>> = g.params.tensors().into_iter().cloned().collect();
    for (ti, a) in analytic.iter().enumerate() {
        let mut worst = 0.0f64;
        for idx in 0..a.len() {
            let (r, c) = (idx / a.ncols(), idx % a.ncols());
            let orig = params.tensors()[ti][(r, c)];
            params.tensors_mut()[ti][(r, c)] = orig + h;
            let up = loss_and_gradient(tokens.view(), &params, &objective)?.loss;
            params.tensors_mut()[ti][(r, c)] = orig - h;
            let down = loss_and_gradient(tokens.view(), &params, &objective)?.loss;
            params.tensors_mut()[ti][(r, c)] = orig;
            let fd = (up - down) / (2.0 * h);
            worst = worst.max((a[(r, c)] - fd).abs() / a[(r, c)].abs().max(1.0));
        }
        println!("{:<30} {:>2}x{:<2} max rel err {worst:.2e}", names[ti], a.nrows(), a.ncols());
    }
    Ok(())
}
