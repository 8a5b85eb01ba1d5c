//! Token classifier: alternating single-head attention and diagonal state-space
//! blocks with residual connections, followed by a linear softmax head.
//!
//! All matrices act on row vectors (`y = x W`). Gradients are derived by hand
//! and checked against central finite differences in the tests.

mod attention;
pub mod checkpoint;
mod objective;
mod ssm;
pub mod train;

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub use attention::attention_forward;
pub use objective::{loss_and_gradient, Gradient, Objective};
pub use ssm::{selective_scan, ssm_forward};
pub use train::{train_toy, TrainReport};

/// Half-width of the uniform initialization interval.
pub const INIT_SCALE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BlockKind {
    Attention,
    Ssm,
}

impl BlockKind {
    pub fn tag(self) -> u8 {
        match self {
            BlockKind::Attention => 0,
            BlockKind::Ssm => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(BlockKind::Attention),
            1 => Some(BlockKind::Ssm),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BlockKind::Attention => "attention",
            BlockKind::Ssm => "ssm",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "attention" | "attn" | "a" => Some(BlockKind::Attention),
            "ssm" | "mamba" | "s" => Some(BlockKind::Ssm),
            _ => None,
        }
    }
}

/// Default stack: attention, ssm, attention, ssm.
pub fn default_pattern() -> Vec<BlockKind> {
    vec![BlockKind::Attention, BlockKind::Ssm, BlockKind::Attention, BlockKind::Ssm]
}

/// Query/key/value projections and the output projection, all `C1 x C1`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub query: Array2<f64>,
    pub key: Array2<f64>,
    pub value: Array2<f64>,
    pub output: Array2<f64>,
}

/// Diagonal selective state-space block.
///
/// `a_t = sigmoid(x_t W_A + b_A)` is the per-channel transition,
/// `g_t = x_t W_B + b_B` the per-channel input gate,
/// `h_t = a_t * h_{t-1} + g_t * x_t` and `y_t = h_t C + x_t D`.
#[derive(Debug, Clone, PartialEq)]
pub struct SsmParams {
    pub transition_weight: Array2<f64>,
    pub transition_bias: Array2<f64>,
    pub input_weight: Array2<f64>,
    pub input_bias: Array2<f64>,
    pub readout: Array2<f64>,
    pub skip: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Block {
    Attention(AttentionParams),
    Ssm(SsmParams),
}

impl Block {
    pub fn kind(&self) -> BlockKind {
        match self {
            Block::Attention(_) => BlockKind::Attention,
            Block::Ssm(_) => BlockKind::Ssm,
        }
    }

    fn zeros(kind: BlockKind, dim: usize) -> Self {
        let sq = || Array2::zeros((dim, dim));
        let bias = || Array2::zeros((1, dim));
        match kind {
            BlockKind::Attention => {
                Block::Attention(AttentionParams { query: sq(), key: sq(), value: sq(), output: sq() })
            }
            BlockKind::Ssm => Block::Ssm(SsmParams {
                transition_weight: sq(),
                transition_bias: bias(),
                input_weight: sq(),
                input_bias: bias(),
                readout: sq(),
                skip: sq(),
            }),
        }
    }
}

/// Every learnable tensor of the classifier. Also used as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierParams {
    dim: usize,
    classes: usize,
    pub blocks: Vec<Block>,
    pub head_weight: Array2<f64>,
    pub head_bias: Array2<f64>,
}

impl ClassifierParams {
    /// All-zero parameters for the given block pattern.
    pub fn zeros(dim: usize, classes: usize, pattern: &[BlockKind]) -> Result<Self> {
        if dim == 0 || classes == 0 {
            return Err(Error::invalid("classifier needs positive feature and class counts"));
        }
        if pattern.is_empty() {
            return Err(Error::invalid("block pattern must not be empty"));
        }
        if pattern[0] != BlockKind::Attention {
            return Err(Error::invalid("block pattern must start with an attention block"));
        }
        Ok(Self {
            dim,
            classes,
            blocks: pattern.iter().map(|&k| Block::zeros(k, dim)).collect(),
            head_weight: Array2::zeros((dim, classes)),
            head_bias: Array2::zeros((1, classes)),
        })
    }

    /// Seeded uniform initialization in `[-0.05, 0.05]`.
    pub fn init(dim: usize, classes: usize, pattern: &[BlockKind], seed: u64) -> Result<Self> {
        let mut params = Self::zeros(dim, classes, pattern)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for t in params.tensors_mut() {
            t.mapv_inplace(|_| rng.random_range(-INIT_SCALE..=INIT_SCALE));
        }
        Ok(params)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn pattern(&self) -> Vec<BlockKind> {
        self.blocks.iter().map(Block::kind).collect()
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.dim, self.classes, &self.pattern()).expect("shape already validated")
    }

    /// Tensors in declaration order (blocks in stack order, then the head).
    pub fn tensors(&self) -> Vec<&Array2<f64>> {
        let mut out = Vec::new();
        for b in &self.blocks {
            match b {
                Block::Attention(p) => out.extend([&p.query, &p.key, &p.value, &p.output]),
                Block::Ssm(p) => out.extend([
                    &p.transition_weight,
                    &p.transition_bias,
                    &p.input_weight,
                    &p.input_bias,
                    &p.readout,
                    &p.skip,
                ]),
            }
        }
        out.extend([&self.head_weight, &self.head_bias]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut out = Vec::new();
        for b in &mut self.blocks {
            match b {
                Block::Attention(p) => out.extend([&mut p.query, &mut p.key, &mut p.value, &mut p.output]),
                Block::Ssm(p) => out.extend([
                    &mut p.transition_weight,
                    &mut p.transition_bias,
                    &mut p.input_weight,
                    &mut p.input_bias,
                    &mut p.readout,
                    &mut p.skip,
                ]),
            }
        }
        out.extend([&mut self.head_weight, &mut self.head_bias]);
        out
    }

    /// Human-readable tensor names in declaration order.
    pub fn tensor_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (i, b) in self.blocks.iter().enumerate() {
            let names: &[&str] = match b {
                Block::Attention(_) => &["query", "key", "value", "output"],
                Block::Ssm(_) => {
                    &["transition_weight", "transition_bias", "input_weight", "input_bias", "readout", "skip"]
                }
            };
            out.extend(names.iter().map(|n| format!("block{i}.{}.{n}", b.kind().name())));
        }
        out.extend(["head.weight".to_string(), "head.bias".to_string()]);
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// `self += alpha * other`, tensor by tensor.
    pub fn scaled_add(&mut self, alpha: f64, other: &ClassifierParams) {
        for (t, o) in self.tensors_mut().into_iter().zip(other.tensors()) {
            t.scaled_add(alpha, o);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

pub(crate) fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// Backward pass of a row softmax: `dz = p * (dp - sum(dp * p))`.
pub(crate) fn softmax_rows_backward(probs: &Array2<f64>, dprobs: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(probs.raw_dim());
    for ((mut o, p), dp) in out.rows_mut().into_iter().zip(probs.rows()).zip(dprobs.rows()) {
        let dot = p.dot(&dp);
        for ((o, &p), &dp) in o.iter_mut().zip(p).zip(dp) {
            *o = p * (dp - dot);
        }
    }
    out
}

fn check_tokens(tokens: ArrayView2<'_, f64>, params: &ClassifierParams) -> Result<()> {
    if tokens.ncols() != params.dim {
        return Err(Error::invalid(format!(
            "token width {} does not match classifier width {}",
            tokens.ncols(),
            params.dim
        )));
    }
    if tokens.nrows() == 0 {
        return Err(Error::invalid("classifier needs at least one token"));
    }
    Ok(())
}

/// Output of the block stack before the head.
pub fn encode(tokens: ArrayView2<'_, f64>, params: &ClassifierParams) -> Result<Array2<f64>> {
    check_tokens(tokens, params)?;
    let mut x = tokens.to_owned();
    for block in &params.blocks {
        let y = match block {
            Block::Attention(p) => attention_forward(x.view(), p),
            Block::Ssm(p) => ssm_forward(x.view(), p),
        };
        x += &y;
    }
    Ok(x)
}

/// Per-token class probabilities (`M x C`, rows sum to one).
pub fn classify(tokens: ArrayView2<'_, f64>, params: &ClassifierParams) -> Result<Array2<f64>> {
    let x = encode(tokens, params)?;
    Ok(softmax_rows(&(x.dot(&params.head_weight) + &params.head_bias)))
}

/// Argmax class per token, as 1-based labels (ties: lower class).
pub fn predict_classes(probabilities: &Array2<f64>) -> Vec<u16> {
    probabilities
        .rows()
        .into_iter()
        .map(|row| {
            let best = row
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (c, &p)| if p > acc.1 { (c, p) } else { acc });
            best.0 as u16 + 1
        })
        .collect()
}
