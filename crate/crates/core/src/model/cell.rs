use super::params::{Gate, ModelParams, ParamGradient};
use super::vocab::{BOS, EOS};
use super::TokenId;
use crate::error::{Error, Result};

/// Cell state `c` (length `H`) and projected output `h` (length `D`).
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentState {
    pub cell: Vec<f64>,
    pub hidden: Vec<f64>,
}

impl RecurrentState {
    pub fn zeros(params: &ModelParams) -> Self {
        let shape = params.shape();
        Self { cell: vec![0.0; shape.hidden], hidden: vec![0.0; shape.dim] }
    }
}

/// Gate activations of one step, exposed for inspecting the coupling.
#[derive(Debug, Clone, PartialEq)]
pub struct CellTrace {
    pub input_gate: Vec<f64>,
    /// The coefficient applied to `c_prev`; always `1 - input_gate`.
    pub forget_gate: Vec<f64>,
    pub candidate: Vec<f64>,
    pub output_gate: Vec<f64>,
}

#[derive(Debug, Clone)]
struct StepActivations {
    token: usize,
    z: Vec<f64>,
    input_gate: Vec<f64>,
    candidate: Vec<f64>,
    output_gate: Vec<f64>,
    cell_prev: Vec<f64>,
    cell: Vec<f64>,
    tanh_cell: Vec<f64>,
    gated: Vec<f64>,
    hidden: Vec<f64>,
}

/// Activations of a full sentence, consumed by [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    steps: Vec<StepActivations>,
    probs: Vec<Vec<f64>>,
    targets: Vec<usize>,
}

impl ForwardCache {
    /// Number of predicted targets (sentence length + 1).
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `out[r] = bias[r] + W[r, :] . z` for a row-major `rows x z.len()` matrix.
fn affine(weights: &[f64], bias: &[f64], z: &[f64], out: &mut [f64]) {
    let cols = z.len();
    for (r, o) in out.iter_mut().enumerate() {
        *o = bias[r] + dot(&weights[r * cols..(r + 1) * cols], z);
    }
}

pub(crate) fn check_token(params: &ModelParams, token: TokenId) -> Result<usize> {
    let vocab_size = params.shape().vocab;
    let idx = token as usize;
    if idx >= vocab_size {
        return Err(Error::TokenOutOfRange { token, vocab_size });
    }
    Ok(idx)
}

fn cell_forward(params: &ModelParams, token: usize, cell_prev: &[f64], hidden_prev: &[f64]) -> StepActivations {
    let shape = params.shape();
    let (d, h) = (shape.dim, shape.hidden);

    let mut z = Vec::with_capacity(2 * d);
    z.extend_from_slice(params.embedding_column(token));
    z.extend_from_slice(hidden_prev);

    let mut pre = vec![0.0; h];
    affine(params.gate_weights(Gate::Input), params.gate_bias(Gate::Input), &z, &mut pre);
    let input_gate: Vec<f64> = pre.iter().map(|&a| sigmoid(a)).collect();
    affine(params.gate_weights(Gate::Candidate), params.gate_bias(Gate::Candidate), &z, &mut pre);
    let candidate: Vec<f64> = pre.iter().map(|&a| a.tanh()).collect();
    affine(params.gate_weights(Gate::Output), params.gate_bias(Gate::Output), &z, &mut pre);
    let output_gate: Vec<f64> = pre.iter().map(|&a| sigmoid(a)).collect();

    let cell: Vec<f64> = (0..h).map(|j| (1.0 - input_gate[j]) * cell_prev[j] + input_gate[j] * candidate[j]).collect();
    let tanh_cell: Vec<f64> = cell.iter().map(|c| c.tanh()).collect();
    let gated: Vec<f64> = output_gate.iter().zip(&tanh_cell).map(|(o, t)| o * t).collect();

    let proj = params.projection();
    let hidden: Vec<f64> = (0..d).map(|r| dot(&proj[r * h..(r + 1) * h], &gated)).collect();

    StepActivations {
        token,
        z,
        input_gate,
        candidate,
        output_gate,
        cell_prev: cell_prev.to_vec(),
        cell,
        tanh_cell,
        gated,
        hidden,
    }
}

/// Tied output layer: `logits[v] = W[:, v] . h`.
fn logits_into(params: &ModelParams, hidden: &[f64], out: &mut Vec<f64>) {
    let vocab = params.shape().vocab;
    out.clear();
    out.extend((0..vocab).map(|v| dot(params.embedding_column(v), hidden)));
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// One recurrent step. Returns the new state and the vocabulary logits.
pub fn step_cell(params: &ModelParams, state: &RecurrentState, token: TokenId) -> Result<(RecurrentState, Vec<f64>)> {
    let (state, logits, _) = step_cell_traced(params, state, token)?;
    Ok((state, logits))
}

/// [`step_cell`] that also returns the gate activations.
pub fn step_cell_traced(
    params: &ModelParams,
    state: &RecurrentState,
    token: TokenId,
) -> Result<(RecurrentState, Vec<f64>, CellTrace)> {
    let token = check_token(params, token)?;
    let acts = cell_forward(params, token, &state.cell, &state.hidden);
    let mut logits = Vec::new();
    logits_into(params, &acts.hidden, &mut logits);
    let trace = CellTrace {
        forget_gate: acts.input_gate.iter().map(|i| 1.0 - i).collect(),
        input_gate: acts.input_gate,
        candidate: acts.candidate,
        output_gate: acts.output_gate,
    };
    let next = RecurrentState { cell: acts.cell, hidden: acts.hidden };
    Ok((next, logits, trace))
}

/// Runs `[BOS, w1..wn]` and scores targets `[w1..wn, EOS]`.
///
/// Returns the mean cross-entropy over the `n + 1` targets and the cache
/// needed for [`backward`].
pub fn forward_loss(params: &ModelParams, sentence: &[TokenId]) -> Result<(f64, ForwardCache)> {
    if sentence.is_empty() {
        return Err(Error::EmptySentence);
    }
    let mut targets = Vec::with_capacity(sentence.len() + 1);
    for &t in sentence {
        targets.push(check_token(params, t)?);
    }
    targets.push(EOS as usize);

    let shape = params.shape();
    let mut cell = vec![0.0; shape.hidden];
    let mut hidden = vec![0.0; shape.dim];
    let mut steps = Vec::with_capacity(targets.len());
    let mut probs = Vec::with_capacity(targets.len());
    let mut logits = Vec::with_capacity(shape.vocab);
    let mut total = 0.0;

    let inputs = std::iter::once(BOS as usize).chain(targets[..targets.len() - 1].iter().copied());
    for (input, &target) in inputs.zip(&targets) {
        let acts = cell_forward(params, input, &cell, &hidden);
        logits_into(params, &acts.hidden, &mut logits);
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = logits.iter().map(|&l| (l - max).exp()).sum();
        total += max + sum_exp.ln() - logits[target];
        probs.push(logits.iter().map(|&l| (l - max).exp() / sum_exp).collect());
        cell.clone_from(&acts.cell);
        hidden.clone_from(&acts.hidden);
        steps.push(acts);
    }

    let loss = total / targets.len() as f64;
    Ok((loss, ForwardCache { steps, probs, targets }))
}

/// Exact gradient of the mean cross-entropy from [`forward_loss`].
pub fn backward(params: &ModelParams, cache: &ForwardCache) -> ParamGradient {
    let mut grad = ParamGradient::zeros(params.shape());
    backward_into(params, cache, grad.as_mut_slice());
    grad
}

/// Adds the gradient for `cache` into `grad` (flat, same layout as the params).
pub(crate) fn backward_into(params: &ModelParams, cache: &ForwardCache, grad: &mut [f64]) {
    let shape = params.shape();
    let (vocab, d, h) = (shape.vocab, shape.dim, shape.hidden);
    let layout = params.layout().clone();
    let scale = 1.0 / cache.targets.len() as f64;

    let embedding = params.embedding();
    let proj = params.projection();

    let mut dh_next = vec![0.0; d];
    let mut dc_next = vec![0.0; h];
    let mut dlogits = vec![0.0; vocab];
    let mut dh = vec![0.0; d];
    let mut dm = vec![0.0; h];
    let mut dz = vec![0.0; 2 * d];
    let mut da = [vec![0.0; h], vec![0.0; h], vec![0.0; h]];

    for t in (0..cache.steps.len()).rev() {
        let s = &cache.steps[t];
        let target = cache.targets[t];

        for (dl, &p) in dlogits.iter_mut().zip(&cache.probs[t]) {
            *dl = p * scale;
        }
        dlogits[target] -= scale;

        // Output use of the tied matrix.
        dh.copy_from_slice(&dh_next);
        {
            let g_emb = &mut grad[layout.embedding.clone()];
            for v in 0..vocab {
                let dl = dlogits[v];
                let col = v * d;
                for k in 0..d {
                    g_emb[col + k] += dl * s.hidden[k];
                    dh[k] += embedding[col + k] * dl;
                }
            }
        }

        // h = P m
        dm.iter_mut().for_each(|x| *x = 0.0);
        {
            let g_proj = &mut grad[layout.projection.clone()];
            for r in 0..d {
                let row = r * h;
                for j in 0..h {
                    g_proj[row + j] += dh[r] * s.gated[j];
                    dm[j] += proj[row + j] * dh[r];
                }
            }
        }

        for j in 0..h {
            let i = s.input_gate[j];
            let g = s.candidate[j];
            let o = s.output_gate[j];
            let tc = s.tanh_cell[j];
            let d_out = dm[j] * tc;
            let dc = dm[j] * o * (1.0 - tc * tc) + dc_next[j];
            let d_in = dc * (g - s.cell_prev[j]);
            let d_cand = dc * i;
            dc_next[j] = dc * (1.0 - i);
            da[Gate::Input as usize][j] = d_in * i * (1.0 - i);
            da[Gate::Output as usize][j] = d_out * o * (1.0 - o);
            da[Gate::Candidate as usize][j] = d_cand * (1.0 - g * g);
        }

        dz.iter_mut().for_each(|x| *x = 0.0);
        let cols = 2 * d;
        for gate in Gate::ALL {
            let delta = &da[gate as usize];
            let weights = params.gate_weights(gate);
            {
                let g_w = &mut grad[layout.gate_weights(gate)];
                for r in 0..h {
                    let row = r * cols;
                    let dr = delta[r];
                    for k in 0..cols {
                        g_w[row + k] += dr * s.z[k];
                        dz[k] += weights[row + k] * dr;
                    }
                }
            }
            let g_b = &mut grad[layout.gate_bias(gate)];
            for r in 0..h {
                g_b[r] += delta[r];
            }
        }

        // Input use of the tied matrix.
        let g_emb = &mut grad[layout.embedding.clone()];
        let col = s.token * d;
        for k in 0..d {
            g_emb[col + k] += dz[k];
        }
        dh_next.copy_from_slice(&dz[d..]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::params::Shape;

    fn hand_params() -> ModelParams {
        // V=4, D=1, H=1 with every weight hand-picked.
        let mut p = ModelParams::zeros(Shape::new(4, 1, 1));
        p.embedding_mut().copy_from_slice(&[0.5, -0.3, 0.2, 0.8]);
        p.gate_weights_mut(Gate::Input).copy_from_slice(&[0.4, -0.6]);
        p.gate_bias_mut(Gate::Input).copy_from_slice(&[0.1]);
        p.gate_weights_mut(Gate::Output).copy_from_slice(&[-0.2, 0.3]);
        p.gate_bias_mut(Gate::Output).copy_from_slice(&[0.05]);
        p.gate_weights_mut(Gate::Candidate).copy_from_slice(&[0.7, 0.25]);
        p.gate_bias_mut(Gate::Candidate).copy_from_slice(&[-0.15]);
        p.projection_mut().copy_from_slice(&[1.3]);
        p
    }

    /// Scalar evaluation of the four cell equations, written out by hand.
    fn scalar_step(x: f64, c_prev: f64, h_prev: f64) -> (f64, f64) {
        let s = |a: f64| 1.0 / (1.0 + (-a).exp());
        let i = s(0.4 * x - 0.6 * h_prev + 0.1);
        let cand = (0.7 * x + 0.25 * h_prev - 0.15).tanh();
        let o = s(-0.2 * x + 0.3 * h_prev + 0.05);
        let c = (1.0 - i) * c_prev + i * cand;
        let h = 1.3 * (o * c.tanh());
        (c, h)
    }

    #[test]
    fn zero_params_give_zero_state_and_logits() {
        let p = ModelParams::zeros(Shape::new(6, 2, 3));
        let (state, logits) = step_cell(&p, &RecurrentState::zeros(&p), 4).unwrap();
        assert!(state.cell.iter().all(|&c| c == 0.0));
        assert!(state.hidden.iter().all(|&h| h == 0.0));
        assert!(logits.iter().all(|&l| l == 0.0));
    }

    #[test]
    fn hand_computed_step() {
        let p = hand_params();
        let emb = [0.5, -0.3, 0.2, 0.8];
        let (c, h) = scalar_step(emb[3], 0.0, 0.0);
        let (state, logits) = step_cell(&p, &RecurrentState::zeros(&p), 3).unwrap();
        assert!((state.cell[0] - c).abs() < 1e-12);
        assert!((state.hidden[0] - h).abs() < 1e-12);
        for v in 0..4 {
            assert!((logits[v] - emb[v] * h).abs() < 1e-12);
        }
        // second step from the carried state
        let (c2, h2) = scalar_step(emb[2], c, h);
        let (state2, _) = step_cell(&p, &state, 2).unwrap();
        assert!((state2.cell[0] - c2).abs() < 1e-12);
        assert!((state2.hidden[0] - h2).abs() < 1e-12);
    }

    #[test]
    fn hand_computed_loss() {
        let p = hand_params();
        let emb = [0.5, -0.3, 0.2, 0.8];
        let nll = |h: f64, target: usize| {
            let l: Vec<f64> = emb.iter().map(|e| e * h).collect();
            let z: f64 = l.iter().map(|x| x.exp()).sum();
            z.ln() - l[target]
        };
        // sentence [3]: inputs BOS(0), 3; targets 3, EOS(1)
        let (c1, h1) = scalar_step(emb[0], 0.0, 0.0);
        let (_, h2) = scalar_step(emb[3], c1, h1);
        let expected = (nll(h1, 3) + nll(h2, 1)) / 2.0;
        let (loss, cache) = forward_loss(&p, &[3]).unwrap();
        assert_eq!(cache.len(), 2);
        assert!((loss - expected).abs() < 1e-12, "{loss} vs {expected}");
    }

    #[test]
    fn uniform_logits_give_log_vocab_loss() {
        let p = ModelParams::zeros(Shape::new(9, 2, 2));
        let (loss, _) = forward_loss(&p, &[3, 4, 5]).unwrap();
        assert!((loss - 9f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn errors_on_bad_input() {
        let p = ModelParams::zeros(Shape::new(5, 1, 1));
        assert!(matches!(forward_loss(&p, &[]), Err(Error::EmptySentence)));
        assert!(matches!(forward_loss(&p, &[3, 5]), Err(Error::TokenOutOfRange { token: 5, vocab_size: 5 })));
        assert!(step_cell(&p, &RecurrentState::zeros(&p), 9).is_err());
    }

    #[test]
    fn forget_coefficient_is_one_minus_input() {
        let mut p = ModelParams::zeros(Shape::new(7, 3, 4));
        for (k, w) in p.as_mut_slice().iter_mut().enumerate() {
            *w = ((k * 37 % 101) as f64 / 101.0 - 0.5) * 0.8;
        }
        let mut state = RecurrentState::zeros(&p);
        for token in [0u32, 4, 6, 3, 5] {
            let prev = state.cell.clone();
            let (next, _, trace) = step_cell_traced(&p, &state, token).unwrap();
            for j in 0..4 {
                assert_eq!(trace.forget_gate[j], 1.0 - trace.input_gate[j]);
                let c = trace.forget_gate[j] * prev[j] + trace.input_gate[j] * trace.candidate[j];
                assert!((next.cell[j] - c).abs() < 1e-15);
            }
            state = next;
        }
    }

    #[test]
    fn absent_token_column_only_gets_output_gradient() {
        let mut p = ModelParams::zeros(Shape::new(7, 3, 4));
        for (k, w) in p.as_mut_slice().iter_mut().enumerate() {
            *w = ((k * 53 % 97) as f64 / 97.0 - 0.5) * 0.6;
        }
        let (_, cache) = forward_loss(&p, &[3, 4]).unwrap();
        let grad = backward(&p, &cache);
        // Column 6 is neither input nor target: its gradient is the sum over
        // steps of p_t[6] * h_t / T, the output path alone.
        let d = 3;
        let mut expected = [0.0; 3];
        for (s, probs) in cache.steps.iter().zip(&cache.probs) {
            for k in 0..d {
                expected[k] += probs[6] * s.hidden[k] / cache.len() as f64;
            }
        }
        for k in 0..d {
            assert!((grad.as_slice()[6 * d + k] - expected[k]).abs() < 1e-15);
        }
    }
}
