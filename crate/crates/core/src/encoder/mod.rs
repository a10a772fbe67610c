//! A small trainable text encoder standing in for BERT: whitespace tokens,
//! learned token/position embeddings, a configurable stack of post-norm
//! self-attention blocks, CLS pooling, and exact analytic gradients.
//!
//! All arithmetic is 64-bit; at desk scale gradient-check fidelity matters
//! more than speed.

mod checkpoint;
mod net;
mod vocab;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

pub use checkpoint::{
    checkpoint_bytes, checkpoint_from_bytes, load_checkpoint, save_checkpoint,
    write_config_sidecar,
};
pub use net::{classify_forward, encode_backward, encode_backward_into, encode_forward, ForwardCache};
pub use vocab::{
    build_vocab, Vocab, CLS_ID, CLS_TOKEN, PAD_ID, PAD_TOKEN, RESERVED_TOKENS, UNK_ID, UNK_TOKEN,
};

use crate::contrastive::ProjectionHead;
use crate::error::{Error, Result};
use crate::rng::CounterRng;

fn default_layers() -> usize {
    2
}
fn default_heads() -> usize {
    2
}
fn default_d() -> usize {
    64
}
fn default_d_ff() -> usize {
    128
}
fn default_d_h() -> usize {
    64
}
fn default_d_z() -> usize {
    32
}
fn default_max_len() -> usize {
    128
}
fn default_vocab_size() -> usize {
    RESERVED_TOKENS.len()
}
fn default_classes() -> usize {
    2
}

/// Shape and initialization settings for the encoder. `vocab_size` and
/// `classes` are filled in from the data at hand.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    #[serde(default = "default_layers")]
    pub layers: usize,
    #[serde(default = "default_heads")]
    pub heads: usize,
    #[serde(default = "default_d")]
    pub d: usize,
    #[serde(default = "default_d_ff")]
    pub d_ff: usize,
    #[serde(default = "default_d_h")]
    pub d_h: usize,
    #[serde(default = "default_d_z")]
    pub d_z: usize,
    #[serde(default = "default_max_len")]
    pub max_len: usize,
    /// Filled in from the corpus at hand.
    #[serde(default = "default_vocab_size")]
    pub vocab_size: usize,
    /// Filled in from the label set at hand.
    #[serde(default = "default_classes")]
    pub classes: usize,
    #[serde(default)]
    pub init_seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            layers: default_layers(),
            heads: default_heads(),
            d: default_d(),
            d_ff: default_d_ff(),
            d_h: default_d_h(),
            d_z: default_d_z(),
            max_len: default_max_len(),
            vocab_size: RESERVED_TOKENS.len(),
            classes: 2,
            init_seed: 0,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("layers", self.layers),
            ("heads", self.heads),
            ("d", self.d),
            ("d_ff", self.d_ff),
            ("d_h", self.d_h),
            ("d_z", self.d_z),
            ("max_len", self.max_len),
            ("vocab_size", self.vocab_size),
            ("classes", self.classes),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !self.d.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "d = {} not divisible by heads = {}",
                self.d, self.heads
            )));
        }
        if self.vocab_size < RESERVED_TOKENS.len() {
            return Err(Error::Config(format!(
                "vocab_size {} smaller than the {} reserved tokens",
                self.vocab_size,
                RESERVED_TOKENS.len()
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d / self.heads
    }
}

/// Weights of one transformer block. Projection matrices are stored as
/// (out, in); `y = x . W^T + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub w_q: Array2<f64>,
    pub b_q: Array1<f64>,
    pub w_k: Array2<f64>,
    pub b_k: Array1<f64>,
    pub w_v: Array2<f64>,
    pub b_v: Array1<f64>,
    pub w_o: Array2<f64>,
    pub b_o: Array1<f64>,
    pub w_ff1: Array2<f64>,
    pub b_ff1: Array1<f64>,
    pub w_ff2: Array2<f64>,
    pub b_ff2: Array1<f64>,
    pub ln1_g: Array1<f64>,
    pub ln1_b: Array1<f64>,
    pub ln2_g: Array1<f64>,
    pub ln2_b: Array1<f64>,
}

/// Every trainable tensor: embeddings, transformer stack, projection head,
/// classifier head. Doubles as the gradient container (same layout).
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub config: EncoderConfig,
    pub tok_emb: Array2<f64>,
    pub pos_emb: Array2<f64>,
    pub layers: Vec<LayerParams>,
    pub proj: ProjectionHead,
    pub classifier: Array2<f64>,
}

impl EncoderParams {
    /// All tensors zero. Gradient accumulators start here.
    pub fn zeros(config: &EncoderConfig) -> Result<Self> {
        config.validate()?;
        let d = config.d;
        let layers = (0..config.layers)
            .map(|_| LayerParams {
                w_q: Array2::zeros((d, d)),
                b_q: Array1::zeros(d),
                w_k: Array2::zeros((d, d)),
                b_k: Array1::zeros(d),
                w_v: Array2::zeros((d, d)),
                b_v: Array1::zeros(d),
                w_o: Array2::zeros((d, d)),
                b_o: Array1::zeros(d),
                w_ff1: Array2::zeros((config.d_ff, d)),
                b_ff1: Array1::zeros(config.d_ff),
                w_ff2: Array2::zeros((d, config.d_ff)),
                b_ff2: Array1::zeros(d),
                ln1_g: Array1::zeros(d),
                ln1_b: Array1::zeros(d),
                ln2_g: Array1::zeros(d),
                ln2_b: Array1::zeros(d),
            })
            .collect();
        Ok(EncoderParams {
            config: config.clone(),
            tok_emb: Array2::zeros((config.vocab_size, d)),
            pos_emb: Array2::zeros((config.max_len, d)),
            layers,
            proj: ProjectionHead {
                w1: Array2::zeros((config.d_h, d)),
                w2: Array2::zeros((config.d_z, config.d_h)),
            },
            classifier: Array2::zeros((config.classes, d)),
        })
    }

    /// Truncated-normal (std 0.02) weights from `config.init_seed`; zero
    /// biases; unit layer-norm gains. Each tensor draws from its own
    /// stream, so the result is independent of initialization order.
    pub fn init(config: &EncoderConfig) -> Result<Self> {
        let mut params = Self::zeros(config)?;
        let root = CounterRng::new(config.init_seed);
        for (name, data) in params.flat_tensors_mut() {
            let leaf = name.rsplit('.').next().unwrap_or(&name);
            if leaf == "ln1_g" || leaf == "ln2_g" {
                data.fill(1.0);
            } else if leaf.starts_with("b_") || leaf.ends_with("_b") {
                // biases and layer-norm shifts stay zero
            } else {
                let mut rng = root.split_str(&name);
                for x in data.iter_mut() {
                    *x = rng.truncated_normal(0.02);
                }
            }
        }
        Ok(params)
    }

    /// Named tensors with shapes, in a fixed order shared by gradients,
    /// the optimizer and the checkpoint format.
    pub fn named_tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out: Vec<(String, Vec<usize>, &[f64])> = Vec::new();
        let m = |a: &Array2<f64>| vec![a.nrows(), a.ncols()];
        macro_rules! push_m {
            ($name:expr, $a:expr) => {
                out.push(($name, m(&$a), $a.as_slice().expect("standard layout")))
            };
        }
        macro_rules! push_v {
            ($name:expr, $a:expr) => {
                out.push(($name, vec![$a.len()], $a.as_slice().expect("standard layout")))
            };
        }
        push_m!("tok_emb".to_string(), self.tok_emb);
        push_m!("pos_emb".to_string(), self.pos_emb);
        for (i, l) in self.layers.iter().enumerate() {
            push_m!(format!("layer{i}.w_q"), l.w_q);
            push_v!(format!("layer{i}.b_q"), l.b_q);
            push_m!(format!("layer{i}.w_k"), l.w_k);
            push_v!(format!("layer{i}.b_k"), l.b_k);
            push_m!(format!("layer{i}.w_v"), l.w_v);
            push_v!(format!("layer{i}.b_v"), l.b_v);
            push_m!(format!("layer{i}.w_o"), l.w_o);
            push_v!(format!("layer{i}.b_o"), l.b_o);
            push_m!(format!("layer{i}.w_ff1"), l.w_ff1);
            push_v!(format!("layer{i}.b_ff1"), l.b_ff1);
            push_m!(format!("layer{i}.w_ff2"), l.w_ff2);
            push_v!(format!("layer{i}.b_ff2"), l.b_ff2);
            push_v!(format!("layer{i}.ln1_g"), l.ln1_g);
            push_v!(format!("layer{i}.ln1_b"), l.ln1_b);
            push_v!(format!("layer{i}.ln2_g"), l.ln2_g);
            push_v!(format!("layer{i}.ln2_b"), l.ln2_b);
        }
        push_m!("proj.w1".to_string(), self.proj.w1);
        push_m!("proj.w2".to_string(), self.proj.w2);
        push_m!("classifier".to_string(), self.classifier);
        out
    }

    /// Mutable flat views in the same order as [`named_tensors`].
    pub fn flat_tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out: Vec<(String, &mut [f64])> = Vec::new();
        macro_rules! push {
            ($name:expr, $a:expr) => {
                out.push(($name, $a.as_slice_mut().expect("standard layout")))
            };
        }
        push!("tok_emb".to_string(), self.tok_emb);
        push!("pos_emb".to_string(), self.pos_emb);
        for (i, l) in self.layers.iter_mut().enumerate() {
            push!(format!("layer{i}.w_q"), l.w_q);
            push!(format!("layer{i}.b_q"), l.b_q);
            push!(format!("layer{i}.w_k"), l.w_k);
            push!(format!("layer{i}.b_k"), l.b_k);
            push!(format!("layer{i}.w_v"), l.w_v);
            push!(format!("layer{i}.b_v"), l.b_v);
            push!(format!("layer{i}.w_o"), l.w_o);
            push!(format!("layer{i}.b_o"), l.b_o);
            push!(format!("layer{i}.w_ff1"), l.w_ff1);
            push!(format!("layer{i}.b_ff1"), l.b_ff1);
            push!(format!("layer{i}.w_ff2"), l.w_ff2);
            push!(format!("layer{i}.b_ff2"), l.b_ff2);
            push!(format!("layer{i}.ln1_g"), l.ln1_g);
            push!(format!("layer{i}.ln1_b"), l.ln1_b);
            push!(format!("layer{i}.ln2_g"), l.ln2_g);
            push!(format!("layer{i}.ln2_b"), l.ln2_b);
        }
        push!("proj.w1".to_string(), self.proj.w1);
        push!("proj.w2".to_string(), self.proj.w2);
        push!("classifier".to_string(), self.classifier);
        out
    }

    /// `self += scale * other`, tensor by tensor.
    pub fn scaled_add(&mut self, other: &EncoderParams, scale: f64) {
        for ((_, a), (_, _, b)) in self.flat_tensors_mut().into_iter().zip(other.named_tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for (_, a) in self.flat_tensors_mut() {
            for x in a.iter_mut() {
                *x *= s;
            }
        }
    }

    /// Global L2 norm over every tensor.
    pub fn l2_norm(&self) -> f64 {
        self.named_tensors()
            .iter()
            .map(|(_, _, t)| t.iter().map(|x| x * x).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    pub fn assert_finite(&self) -> Result<()> {
        for (name, _, t) in self.named_tensors() {
            if t.iter().any(|x| !x.is_finite()) {
                return Err(Error::Numeric(format!("non-finite value in tensor {name}")));
            }
        }
        Ok(())
    }
}
