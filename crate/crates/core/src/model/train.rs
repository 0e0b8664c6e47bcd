use super::cell::{backward_into, check_token, forward_loss, step_cell, RecurrentState};
use super::params::{ModelParams, ParamGradient};
use super::vocab::{BOS, EOS};
use super::TokenId;
use crate::error::{Error, Result};

/// Result of one minibatch SGD step.
#[derive(Debug, Clone)]
pub struct BatchOutcome {
    pub params: ModelParams,
    /// Mean over sentences of the per-sentence mean loss, before the update.
    pub mean_loss: f64,
    /// Target tokens in the batch (sentence lengths + 1 each).
    pub target_tokens: u64,
}

/// Mean gradient over `batch`, plus the mean loss and target count.
pub(crate) fn batch_gradient<S: AsRef<[TokenId]>>(
    params: &ModelParams,
    batch: &[S],
) -> Result<(ParamGradient, f64, u64)> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut sum = ParamGradient::zeros(params.shape());
    let mut scratch = ParamGradient::zeros(params.shape());
    let mut loss_sum = 0.0;
    let mut tokens = 0u64;
    for sentence in batch {
        let (loss, cache) = forward_loss(params, sentence.as_ref())?;
        scratch.as_mut_slice().iter_mut().for_each(|g| *g = 0.0);
        backward_into(params, &cache, scratch.as_mut_slice());
        for (acc, g) in sum.as_mut_slice().iter_mut().zip(scratch.as_slice()) {
            *acc += g;
        }
        loss_sum += loss;
        tokens += cache.len() as u64;
    }
    let n = batch.len() as f64;
    sum.as_mut_slice().iter_mut().for_each(|g| *g /= n);
    Ok((sum, loss_sum / n, tokens))
}

/// `params - lr * mean_gradient(batch)`, with the loss and token count of the batch.
pub fn train_batch<S: AsRef<[TokenId]>>(params: &ModelParams, batch: &[S], lr: f64) -> Result<BatchOutcome> {
    if !(lr >= 0.0) {
        return Err(Error::config(format!("learning rate must be non-negative, got {lr}")));
    }
    let (grad, mean_loss, target_tokens) = batch_gradient(params, batch)?;
    let mut next = params.clone();
    if lr != 0.0 {
        for (w, g) in next.as_mut_slice().iter_mut().zip(grad.as_slice()) {
            *w -= lr * g;
        }
    }
    Ok(BatchOutcome { params: next, mean_loss, target_tokens })
}

/// One SGD step on the mean of the per-sentence gradients.
pub fn sgd_step<S: AsRef<[TokenId]>>(params: &ModelParams, batch: &[S], lr: f64) -> Result<ModelParams> {
    train_batch(params, batch, lr).map(|o| o.params)
}

/// Correct next-token predictions over total targets.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Accuracy {
    pub correct: u64,
    pub total: u64,
}

impl Accuracy {
    /// `None` when there were no targets.
    pub fn ratio(&self) -> Option<f64> {
        (self.total > 0).then(|| self.correct as f64 / self.total as f64)
    }
}

/// First index of the maximum; lowest id wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Next-word accuracy over every target position (`w1..wn, EOS`).
pub fn accuracy<S: AsRef<[TokenId]>>(params: &ModelParams, sentences: &[S]) -> Result<Accuracy> {
    let mut acc = Accuracy::default();
    for sentence in sentences {
        let sentence = sentence.as_ref();
        for &t in sentence {
            check_token(params, t)?;
        }
        let mut state = RecurrentState::zeros(params);
        let mut input = BOS;
        for &target in sentence.iter().chain(std::iter::once(&EOS)) {
            let (next, logits) = step_cell(params, &state, input)?;
            if argmax(&logits) == target as usize {
                acc.correct += 1;
            }
            acc.total += 1;
            state = next;
            input = target;
        }
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_params;
    use crate::model::params::{ModelConfig, Shape};

    fn small() -> ModelParams {
        init_params(&ModelConfig::new(8, 3, 4, 5)).unwrap()
    }

    #[test]
    fn zero_lr_is_identity() {
        let p = small();
        let next = sgd_step(&p, &[vec![3u32, 4, 5]], 0.0).unwrap();
        assert_eq!(next.as_slice(), p.as_slice());
    }

    #[test]
    fn unit_lr_subtracts_gradient() {
        let p = small();
        let s = vec![3u32, 6, 7];
        let (_, cache) = forward_loss(&p, &s).unwrap();
        let g = super::super::backward(&p, &cache);
        let next = sgd_step(&p, &[s], 1.0).unwrap();
        for ((n, w), g) in next.as_slice().iter().zip(p.as_slice()).zip(g.as_slice()) {
            assert_eq!(*n, w - g);
        }
    }

    #[test]
    fn duplicated_batch_matches_single() {
        let p = small();
        let s = vec![5u32, 4, 3, 7];
        let a = sgd_step(&p, std::slice::from_ref(&s), 0.3).unwrap();
        let b = sgd_step(&p, &[s.clone(), s], 0.3).unwrap();
        assert_eq!(a.as_slice(), b.as_slice());
    }

    #[test]
    fn empty_batch_and_negative_lr() {
        let p = small();
        let empty: [Vec<u32>; 0] = [];
        assert!(matches!(sgd_step(&p, &empty, 0.1), Err(Error::EmptyBatch)));
        assert!(sgd_step(&p, &[vec![3u32]], -1.0).is_err());
    }

    #[test]
    fn empty_accuracy() {
        let p = small();
        let none: [Vec<u32>; 0] = [];
        let acc = accuracy(&p, &none).unwrap();
        assert_eq!(acc, Accuracy { correct: 0, total: 0 });
        assert_eq!(acc.ratio(), None);
    }

    /// With all weights zero except a bias pattern, the logits are constant
    /// across positions; use the embedding of one token to dominate.
    #[test]
    fn constant_predictor_counts_hits() {
        // D=1, H=1. Output gate saturated on, candidate saturated on,
        // projection 1: h is positive and nearly constant; W column 4 = 1,
        // every other column 0, so token 4 always wins.
        let mut p = ModelParams::zeros(Shape::new(6, 1, 1));
        p.embedding_mut().copy_from_slice(&[0.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        p.gate_bias_mut(crate::model::Gate::Input).copy_from_slice(&[30.0]);
        p.gate_bias_mut(crate::model::Gate::Candidate).copy_from_slice(&[30.0]);
        p.gate_bias_mut(crate::model::Gate::Output).copy_from_slice(&[30.0]);
        p.projection_mut().copy_from_slice(&[1.0]);
        // 10 targets: [4,3,4,5,3,4,3,3,5] + EOS -> token 4 appears 3 times
        let acc = accuracy(&p, &[vec![4u32, 3, 4, 5, 3, 4, 3, 3, 5]]).unwrap();
        assert_eq!(acc, Accuracy { correct: 3, total: 10 });
    }

    #[test]
    fn ties_break_to_lowest_id() {
        assert_eq!(argmax(&[0.0, 0.0, 0.0]), 0);
        assert_eq!(argmax(&[0.0, 2.0, 2.0]), 1);
    }
}
