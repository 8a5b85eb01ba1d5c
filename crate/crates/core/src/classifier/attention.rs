use ndarray::{Array2, ArrayView2};

use super::{softmax_rows, softmax_rows_backward, AttentionParams};

pub(crate) struct AttentionCache {
    input: Array2<f64>,
    query: Array2<f64>,
    key: Array2<f64>,
    value: Array2<f64>,
    weights: Array2<f64>,
    mixed: Array2<f64>,
}

/// `softmax(Q K^T / sqrt(C1)) V`, then the output projection.
pub fn attention_forward(x: ArrayView2<'_, f64>, p: &AttentionParams) -> Array2<f64> {
    forward_cached(x, p).0
}

pub(crate) fn forward_cached(x: ArrayView2<'_, f64>, p: &AttentionParams) -> (Array2<f64>, AttentionCache) {
    let scale = (x.ncols() as f64).sqrt();
    let query = x.dot(&p.query);
    let key = x.dot(&p.key);
    let value = x.dot(&p.value);
    let weights = softmax_rows(&(query.dot(&key.t()) / scale));
    let mixed = weights.dot(&value);
    let out = mixed.dot(&p.output);
    (out, AttentionCache { input: x.to_owned(), query, key, value, weights, mixed })
}

/// Accumulates parameter gradients into `grad` and returns the input gradient.
pub(crate) fn backward(
    cache: &AttentionCache,
    p: &AttentionParams,
    dy: &Array2<f64>,
    grad: &mut AttentionParams,
) -> Array2<f64> {
    let scale = (cache.input.ncols() as f64).sqrt();
    grad.output += &cache.mixed.t().dot(dy);
    let dmixed = dy.dot(&p.output.t());
    let dweights = dmixed.dot(&cache.value.t());
    let dvalue = cache.weights.t().dot(&dmixed);
    let dlogits = softmax_rows_backward(&cache.weights, &dweights) / scale;
    let dquery = dlogits.dot(&cache.key);
    let dkey = dlogits.t().dot(&cache.query);
    let xt = cache.input.t();
    grad.query += &xt.dot(&dquery);
    grad.key += &xt.dot(&dkey);
    grad.value += &xt.dot(&dvalue);
    dquery.dot(&p.query.t()) + dkey.dot(&p.key.t()) + dvalue.dot(&p.value.t())
}
