//! Desk-scale federated learning with on-device personalization evaluation.
//!
//! The crate trains a small CIFG recurrent language model with
//! FederatedAveraging and a Nesterov-momentum server optimizer
//! ([`fedcore`]), then runs the client-side personalization evaluation
//! protocol ([`fpe`]): each simulated device splits its data temporally,
//! scores the global model, fine-tunes a private copy, scores it again and
//! reports only the accuracy pair. The server side ([`aggregate`]) turns the
//! reports into delta histograms, summaries and slice tables.
//!
//! Client populations come from seeded non-IID Markov sources or from a
//! JSONL corpus ([`synthdata`]).

// NaN-rejecting checks read as `!(x > 0.0)`; index loops mirror the math.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod aggregate;
pub mod dataset;
pub mod error;
pub mod fedcore;
pub mod fpe;
pub mod kv;
pub mod model;
pub mod seed;
pub mod synthdata;

pub use dataset::{ClientDataset, ClientId};
pub use error::{Error, Result};
pub use model::{ModelConfig, ModelParams, ParamGradient, Shape, TokenId, Vocabulary};
