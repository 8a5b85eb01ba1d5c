use ndarray::{Array2, ArrayView2};

use super::SsmParams;

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Sequential diagonal scan in token order with `h_0 = 0`.
///
/// `h_t = transition_t * h_{t-1} + input_gate_t * x_t` (element-wise) and
/// `y_t = h_t C + x_t D`. Returns `(y, h)`.
pub fn selective_scan(
    x: ArrayView2<'_, f64>,
    transition: ArrayView2<'_, f64>,
    input_gate: ArrayView2<'_, f64>,
    readout: &Array2<f64>,
    skip: &Array2<f64>,
) -> (Array2<f64>, Array2<f64>) {
    let (m, d) = x.dim();
    let mut states = Array2::zeros((m, d));
    for t in 0..m {
        for c in 0..d {
            let prev = if t == 0 { 0.0 } else { states[(t - 1, c)] };
            states[(t, c)] = transition[(t, c)] * prev + input_gate[(t, c)] * x[(t, c)];
        }
    }
    let y = states.dot(readout) + x.dot(skip);
    (y, states)
}

pub(crate) struct SsmCache {
    input: Array2<f64>,
    transition: Array2<f64>,
    gate: Array2<f64>,
    states: Array2<f64>,
}

pub fn ssm_forward(x: ArrayView2<'_, f64>, p: &SsmParams) -> Array2<f64> {
    forward_cached(x, p).0
}

pub(crate) fn forward_cached(x: ArrayView2<'_, f64>, p: &SsmParams) -> (Array2<f64>, SsmCache) {
    let transition = (x.dot(&p.transition_weight) + &p.transition_bias).mapv(sigmoid);
    let gate = x.dot(&p.input_weight) + &p.input_bias;
    let (y, states) = selective_scan(x, transition.view(), gate.view(), &p.readout, &p.skip);
    (y, SsmCache { input: x.to_owned(), transition, gate, states })
}

pub(crate) fn backward(cache: &SsmCache, p: &SsmParams, dy: &Array2<f64>, grad: &mut SsmParams) -> Array2<f64> {
    let (m, d) = cache.input.dim();
    let x = &cache.input;
    grad.readout += &cache.states.t().dot(dy);
    grad.skip += &x.t().dot(dy);
    let dh_out = dy.dot(&p.readout.t());
    let mut dx = dy.dot(&p.skip.t());

    let mut dtransition = Array2::zeros((m, d));
    let mut dgate = Array2::zeros((m, d));
    let mut carry = vec![0.0; d];
    for t in (0..m).rev() {
        for c in 0..d {
            let dh = dh_out[(t, c)] + carry[c];
            let prev = if t == 0 { 0.0 } else { cache.states[(t - 1, c)] };
            dtransition[(t, c)] = dh * prev;
            dgate[(t, c)] = dh * x[(t, c)];
            dx[(t, c)] += dh * cache.gate[(t, c)];
            carry[c] = dh * cache.transition[(t, c)];
        }
    }
    let dpre = &dtransition * &cache.transition.mapv(|a| a * (1.0 - a));
    grad.transition_weight += &x.t().dot(&dpre);
    grad.transition_bias += &dpre.sum_axis(ndarray::Axis(0)).insert_axis(ndarray::Axis(0));
    grad.input_weight += &x.t().dot(&dgate);
    grad.input_bias += &dgate.sum_axis(ndarray::Axis(0)).insert_axis(ndarray::Axis(0));
    dx + dpre.dot(&p.transition_weight.t()) + dgate.dot(&p.input_weight.t())
}
