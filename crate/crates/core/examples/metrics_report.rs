//! Scores from a confusion matrix, as text and JSON.

use ndarray::array;
use supertoken::metrics::{scores, ConfusionMatrix};

fn main() -> supertoken::Result<()> {
    // rows are ground truth, columns are predictions; class 4 never appears
    let cm = ConfusionMatrix::from_counts(array![[50, 3, 2, 0], [4, 40, 6, 0], [0, 5, 30, 0], [0, 0, 0, 0]])?;
    let s = scores(&cm)?;
    print!("{}", s.to_kv_text(&cm));
    println!("{}", s.to_json(&cm));

    let chance = ConfusionMatrix::from_counts(array![[5, 5], [5, 5]])?;
    println!("chance agreement: kappa = {}", scores(&chance)?.kappa);
    Ok(())
}
