//! CIFG language model with tied input/output embeddings and a recurrent
//! projection.
//!
//! Per step, with `x` the embedding column of the input token and `h` the
//! projected state from the previous step:
//!
//! ```text
//! z = [x; h_prev]
//! i = sigmoid(U_i z + b_i)
//! c = (1 - i) * c_prev + i * tanh(U_c z + b_c)
//! o = sigmoid(U_o z + b_o)
//! h = P (o * tanh(c))
//! logits = W^T h
//! ```
//!
//! All arithmetic is `f64`. Training functions return fresh parameter values
//! and never mutate their inputs.

mod cell;
pub mod checkpoint;
mod params;
mod train;
mod vocab;

pub use cell::{backward, forward_loss, softmax, step_cell, step_cell_traced, CellTrace, ForwardCache, RecurrentState};
pub use params::{count_params, init_params, Gate, Layout, ModelConfig, ModelParams, ParamGradient, Shape};
pub use train::{accuracy, argmax, sgd_step, train_batch, Accuracy, BatchOutcome};
pub use vocab::{Vocabulary, BOS, EOS, OOV, RESERVED_TOKENS};

/// Dense token id in `[0, V)`.
pub type TokenId = u32;
