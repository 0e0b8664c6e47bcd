use std::ops::Range;

use rand::Rng;

use crate::error::{Error, Result};
use crate::seed;

/// Model dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    /// Vocabulary size `V`.
    pub vocab: usize,
    /// Embedding and projection width `D`.
    pub dim: usize,
    /// CIFG units `H`.
    pub hidden: usize,
}

impl Shape {
    pub fn new(vocab: usize, dim: usize, hidden: usize) -> Self {
        Self { vocab, dim, hidden }
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab < 4 {
            return Err(Error::config(format!(
                "vocabulary size must be at least 4 (three reserved tokens plus one word), got {}",
                self.vocab
            )));
        }
        if self.dim == 0 || self.hidden == 0 {
            return Err(Error::config("embedding and hidden dimensions must be positive"));
        }
        Ok(())
    }

    pub fn layout(&self) -> Layout {
        Layout::new(*self)
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "V={} D={} H={}", self.vocab, self.dim, self.hidden)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    pub shape: Shape,
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(vocab: usize, dim: usize, hidden: usize, seed: u64) -> Self {
        Self { shape: Shape::new(vocab, dim, hidden), seed }
    }
}

/// The three parameterised CIFG transforms. The forget gate is `1 - input`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Input,
    Output,
    Candidate,
}

impl Gate {
    pub const ALL: [Gate; 3] = [Gate::Input, Gate::Output, Gate::Candidate];
}

/// Offsets of every tensor inside the flat parameter vector.
///
/// Field order is W, U_i, b_i, U_o, b_o, U_c, b_c, P. `W` is stored one
/// token column at a time (`W[d, v]` at `v * D + d`); gate matrices are
/// `H x 2D` row-major with the first `D` columns acting on the input
/// embedding; `P` is `D x H` row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub embedding: Range<usize>,
    pub gate_weights: [Range<usize>; 3],
    pub gate_bias: [Range<usize>; 3],
    pub projection: Range<usize>,
    pub total: usize,
}

impl Layout {
    fn new(shape: Shape) -> Self {
        let Shape { vocab, dim, hidden } = shape;
        let mut cursor = 0;
        let mut take = |n: usize| {
            let r = cursor..cursor + n;
            cursor += n;
            r
        };
        let embedding = take(vocab * dim);
        let wi = take(hidden * 2 * dim);
        let bi = take(hidden);
        let wo = take(hidden * 2 * dim);
        let bo = take(hidden);
        let wc = take(hidden * 2 * dim);
        let bc = take(hidden);
        let projection = take(dim * hidden);
        Self { embedding, gate_weights: [wi, wo, wc], gate_bias: [bi, bo, bc], projection, total: cursor }
    }

    pub fn gate_weights(&self, gate: Gate) -> Range<usize> {
        self.gate_weights[gate as usize].clone()
    }

    pub fn gate_bias(&self, gate: Gate) -> Range<usize> {
        self.gate_bias[gate as usize].clone()
    }
}

/// `V*D + 3*(2*D*H + H) + H*D`.
pub fn count_params(shape: Shape) -> usize {
    let Shape { vocab, dim, hidden } = shape;
    vocab * dim + 3 * (2 * dim * hidden + hidden) + hidden * dim
}

/// All model weights in one flat, addressable vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    shape: Shape,
    layout: Layout,
    data: Vec<f64>,
}

/// Gradient with the same layout as [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGradient {
    shape: Shape,
    data: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(shape: Shape) -> Self {
        let layout = shape.layout();
        let data = vec![0.0; layout.total];
        Self { shape, layout, data }
    }

    pub fn from_vec(shape: Shape, data: Vec<f64>) -> Result<Self> {
        let layout = shape.layout();
        if data.len() != layout.total {
            return Err(Error::ShapeMismatch {
                expected: format!("{} scalars for {shape}", layout.total),
                found: format!("{} scalars", data.len()),
            });
        }
        Ok(Self { shape, layout, data })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn embedding(&self) -> &[f64] {
        &self.data[self.layout.embedding.clone()]
    }

    /// Column `token` of `W`, i.e. the embedding of that token.
    pub fn embedding_column(&self, token: usize) -> &[f64] {
        let d = self.shape.dim;
        &self.embedding()[token * d..(token + 1) * d]
    }

    pub fn gate_weights(&self, gate: Gate) -> &[f64] {
        &self.data[self.layout.gate_weights(gate)]
    }

    pub fn gate_bias(&self, gate: Gate) -> &[f64] {
        &self.data[self.layout.gate_bias(gate)]
    }

    pub fn projection(&self) -> &[f64] {
        &self.data[self.layout.projection.clone()]
    }

    pub fn embedding_mut(&mut self) -> &mut [f64] {
        let r = self.layout.embedding.clone();
        &mut self.data[r]
    }

    pub fn gate_weights_mut(&mut self, gate: Gate) -> &mut [f64] {
        let r = self.layout.gate_weights(gate);
        &mut self.data[r]
    }

    pub fn gate_bias_mut(&mut self, gate: Gate) -> &mut [f64] {
        let r = self.layout.gate_bias(gate);
        &mut self.data[r]
    }

    pub fn projection_mut(&mut self) -> &mut [f64] {
        let r = self.layout.projection.clone();
        &mut self.data[r]
    }

    pub(crate) fn ensure_same_shape(&self, other_shape: Shape) -> Result<()> {
        if self.shape != other_shape {
            return Err(Error::ShapeMismatch { expected: self.shape.to_string(), found: other_shape.to_string() });
        }
        Ok(())
    }
}

impl ParamGradient {
    pub fn zeros(shape: Shape) -> Self {
        Self { shape, data: vec![0.0; count_params(shape)] }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// Uniform `[-0.05, 0.05]` initialization from the config seed.
pub fn init_params(config: &ModelConfig) -> Result<ModelParams> {
    config.shape.validate()?;
    let mut params = ModelParams::zeros(config.shape);
    let mut rng = seed::rng(config.seed);
    for w in params.as_mut_slice() {
        *w = rng.random_range(-0.05..=0.05);
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn count_params_examples() {
        assert_eq!(count_params(Shape::new(10_000, 96, 670)), 1_412_250);
        assert_eq!(count_params(Shape::new(2, 1, 1)), 12);
        assert_eq!(count_params(Shape::new(4, 2, 3)), 59);
    }

    #[test]
    fn layout_is_contiguous_and_matches_count() {
        for v in 4..9 {
            for d in 1..4 {
                for h in 1..4 {
                    let shape = Shape::new(v, d, h);
                    let l = shape.layout();
                    assert_eq!(l.total, count_params(shape));
                    assert_eq!(ModelParams::zeros(shape).len(), count_params(shape));
                    assert_eq!(l.embedding.start, 0);
                    assert_eq!(l.embedding.end, l.gate_weights[0].start);
                    assert_eq!(l.gate_weights[0].end, l.gate_bias[0].start);
                    assert_eq!(l.gate_bias[0].end, l.gate_weights[1].start);
                    assert_eq!(l.gate_bias[2].end, l.projection.start);
                    assert_eq!(l.projection.end, l.total);
                }
            }
        }
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let cfg = ModelConfig::new(20, 3, 5, 11);
        let a = init_params(&cfg).unwrap();
        let b = init_params(&cfg).unwrap();
        assert_eq!(a.as_slice(), b.as_slice());
        let c = init_params(&ModelConfig::new(20, 3, 5, 12)).unwrap();
        assert_ne!(a.as_slice(), c.as_slice());
        assert!(a.as_slice().iter().all(|w| (-0.05..=0.05).contains(w)));
    }

    #[test]
    fn rejects_degenerate_configs() {
        assert!(init_params(&ModelConfig::new(3, 2, 2, 0)).is_err());
        assert!(init_params(&ModelConfig::new(5, 0, 2, 0)).is_err());
        assert!(init_params(&ModelConfig::new(5, 2, 0, 0)).is_err());
        assert!(ModelParams::from_vec(Shape::new(4, 1, 1), vec![0.0; 3]).is_err());
    }
}
