use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ModelConfig, ModelError};
use crate::tensor::{Tape, Tensor, Var};

/// Affine map `x·weight + bias` with `weight: [in × out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub weight: T,
    pub bias: T,
}

/// Layer-norm gain and bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Norm<T> {
    pub gain: T,
    pub bias: T,
}

/// One pre-norm transformer block.
#[derive(Debug, Clone, PartialEq)]
pub struct Block<T> {
    pub attn_norm: Norm<T>,
    pub query: Dense<T>,
    pub key: Dense<T>,
    pub value: Dense<T>,
    pub attn_out: Dense<T>,
    pub ff_norm: Norm<T>,
    pub ff_in: Dense<T>,
    pub ff_out: Dense<T>,
}

/// Every trainable array of the model. `Weights<Tensor>` holds values;
/// `Weights<Var>` holds the same arrays registered on a [`Tape`].
#[derive(Debug, Clone, PartialEq)]
pub struct Weights<T> {
    /// Token embedding matrix, `[vocab_size × hidden_size]`.
    pub embedding: T,
    pub positional: T,
    pub blocks: Vec<Block<T>>,
    pub final_norm: Norm<T>,
    pub classifier: Dense<T>,
    pub projection: Vec<Dense<T>>,
}

pub type ModelParams = Weights<Tensor>;

impl<T> Dense<T> {
    fn map<'a, U>(&'a self, prefix: &str, f: &mut impl FnMut(String, &'a T) -> U) -> Dense<U> {
        Dense {
            weight: f(format!("{prefix}.weight"), &self.weight),
            bias: f(format!("{prefix}.bias"), &self.bias),
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut impl FnMut(String, &mut T)) {
        f(format!("{prefix}.weight"), &mut self.weight);
        f(format!("{prefix}.bias"), &mut self.bias);
    }
}

impl<T> Norm<T> {
    fn map<'a, U>(&'a self, prefix: &str, f: &mut impl FnMut(String, &'a T) -> U) -> Norm<U> {
        Norm {
            gain: f(format!("{prefix}.gain"), &self.gain),
            bias: f(format!("{prefix}.bias"), &self.bias),
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut impl FnMut(String, &mut T)) {
        f(format!("{prefix}.gain"), &mut self.gain);
        f(format!("{prefix}.bias"), &mut self.bias);
    }
}

impl<T> Block<T> {
    fn map<'a, U>(&'a self, p: &str, f: &mut impl FnMut(String, &'a T) -> U) -> Block<U> {
        Block {
            attn_norm: self.attn_norm.map(&format!("{p}.attn_norm"), f),
            query: self.query.map(&format!("{p}.query"), f),
            key: self.key.map(&format!("{p}.key"), f),
            value: self.value.map(&format!("{p}.value"), f),
            attn_out: self.attn_out.map(&format!("{p}.attn_out"), f),
            ff_norm: self.ff_norm.map(&format!("{p}.ff_norm"), f),
            ff_in: self.ff_in.map(&format!("{p}.ff_in"), f),
            ff_out: self.ff_out.map(&format!("{p}.ff_out"), f),
        }
    }

    fn visit_mut(&mut self, p: &str, f: &mut impl FnMut(String, &mut T)) {
        self.attn_norm.visit_mut(&format!("{p}.attn_norm"), f);
        self.query.visit_mut(&format!("{p}.query"), f);
        self.key.visit_mut(&format!("{p}.key"), f);
        self.value.visit_mut(&format!("{p}.value"), f);
        self.attn_out.visit_mut(&format!("{p}.attn_out"), f);
        self.ff_norm.visit_mut(&format!("{p}.ff_norm"), f);
        self.ff_in.visit_mut(&format!("{p}.ff_in"), f);
        self.ff_out.visit_mut(&format!("{p}.ff_out"), f);
    }
}

impl<T> Weights<T> {
    /// Applies `f` to every array in a fixed order, passing its dotted name.
    pub fn map<'a, U>(&'a self, f: &mut impl FnMut(String, &'a T) -> U) -> Weights<U> {
        Weights {
            embedding: f("embedding".into(), &self.embedding),
            positional: f("positional".into(), &self.positional),
            blocks: self
                .blocks
                .iter()
                .enumerate()
                .map(|(i, b)| b.map(&format!("blocks.{i}"), f))
                .collect(),
            final_norm: self.final_norm.map("final_norm", f),
            classifier: self.classifier.map("classifier", f),
            projection: self
                .projection
                .iter()
                .enumerate()
                .map(|(i, d)| d.map(&format!("projection.{i}"), f))
                .collect(),
        }
    }

    pub fn visit_mut(&mut self, f: &mut impl FnMut(String, &mut T)) {
        f("embedding".into(), &mut self.embedding);
        f("positional".into(), &mut self.positional);
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.visit_mut(&format!("blocks.{i}"), f);
        }
        self.final_norm.visit_mut("final_norm", f);
        self.classifier.visit_mut("classifier", f);
        for (i, d) in self.projection.iter_mut().enumerate() {
            d.visit_mut(&format!("projection.{i}"), f);
        }
    }

    pub fn named(&self) -> Vec<(String, &T)> {
        let mut out = Vec::new();
        self.map(&mut |name, t| out.push((name, t)));
        out
    }

    /// Visits arrays of `self` mutably alongside the matching arrays of `other`.
    pub fn zip_mut<U>(&mut self, other: &Weights<U>, f: &mut impl FnMut(&str, &mut T, &U)) {
        let others = other.named();
        let mut i = 0;
        self.visit_mut(&mut |name, t| {
            let (other_name, u) = &others[i];
            debug_assert_eq!(&name, other_name);
            f(&name, t, u);
            i += 1;
        });
    }
}

/// Standard deviation of the token and position tables at initialization,
/// the usual scale for transformer embeddings.
pub const EMBEDDING_STD: f64 = 0.02;

impl Weights<Tensor> {
    /// Deterministic initialization: linear weights uniform in
    /// `±sqrt(3/fan_in)` (unit variance scaled by `1/sqrt(fan_in)`), biases
    /// zero, layer-norm gains one. Embedding tables are uniform with standard
    /// deviation [`EMBEDDING_STD`].
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = config.hidden_size;
        let mut uniform = |rows: usize, cols: usize, std: f64| {
            let a = std * 3f64.sqrt();
            let data = (0..rows * cols).map(|_| rng.gen_range(-a..a)).collect();
            Tensor::matrix(rows, cols, data).expect("positive dims")
        };
        let dense = |uniform: &mut dyn FnMut(usize, usize, f64) -> Tensor, i: usize, o: usize| Dense {
            weight: uniform(i, o, 1.0 / (i as f64).sqrt()),
            bias: Tensor::zeros(&[o]),
        };
        let norm = || Norm {
            gain: Tensor::filled(&[h], 1.0),
            bias: Tensor::zeros(&[h]),
        };
        let embedding = uniform(config.vocab_size, h, EMBEDDING_STD);
        let positional = uniform(config.max_len, h, EMBEDDING_STD);
        let mut blocks = Vec::with_capacity(config.n_layers);
        for _ in 0..config.n_layers {
            blocks.push(Block {
                attn_norm: norm(),
                query: dense(&mut uniform, h, h),
                key: dense(&mut uniform, h, h),
                value: dense(&mut uniform, h, h),
                attn_out: dense(&mut uniform, h, h),
                ff_norm: norm(),
                ff_in: dense(&mut uniform, h, config.ff_size),
                ff_out: dense(&mut uniform, config.ff_size, h),
            });
        }
        let classifier = dense(&mut uniform, h, config.n_classes);
        let mut projection = Vec::with_capacity(config.proj_layers);
        for i in 0..config.proj_layers {
            let out = if i + 1 == config.proj_layers {
                config.proj_size
            } else {
                h
            };
            projection.push(dense(&mut uniform, h, out));
        }
        Ok(Self {
            embedding,
            positional,
            blocks,
            final_norm: norm(),
            classifier,
            projection,
        })
    }

    pub fn num_parameters(&self) -> usize {
        self.named().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.named().iter().all(|(_, t)| t.is_finite())
    }

    /// Registers every array on the tape, as trainable leaves or constants.
    pub fn register(&self, tape: &mut Tape, trainable: bool) -> Weights<Var> {
        self.map(&mut |_, t| tape.leaf(t.clone(), trainable))
    }
}

impl Weights<Var> {
    /// Gradients for every array, zeros where the tape recorded none.
    pub fn grads(&self, tape: &Tape) -> Weights<Tensor> {
        self.map(&mut |_, &v| {
            tape.grad(v)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(tape.shape(v)))
        })
    }
}
