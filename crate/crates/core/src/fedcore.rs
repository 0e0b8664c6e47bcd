//! FederatedAveraging with a Nesterov-momentum server optimizer.
//!
//! A round samples `K` clients without replacement, lets each run local SGD
//! from the current global model, averages the returned models weighted by
//! the number of target tokens each client processed, and hands the average
//! to the server optimizer as a pseudo-gradient `global - averaged`.

use rand::seq::index;
use rayon::prelude::*;

use crate::dataset::{ClientDataset, ClientId};
use crate::error::{Error, Result};
use crate::model::{train_batch, ModelParams};
use crate::seed;

/// A client's locally trained model and its aggregation weight `n_k`.
#[derive(Debug, Clone)]
pub struct ClientUpdate {
    pub client_id: ClientId,
    pub params: ModelParams,
    pub weight: u64,
    /// Mean per-batch training loss seen during the first local epoch.
    pub mean_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundConfig {
    pub clients_per_round: usize,
    pub client_lr: f64,
    pub local_epochs: usize,
    /// `None` trains on the whole local dataset as one batch.
    pub local_batch_size: Option<usize>,
    pub round: u64,
    pub sampling_seed: u64,
}

impl Default for RoundConfig {
    fn default() -> Self {
        Self {
            clients_per_round: 20,
            client_lr: 0.5,
            local_epochs: 1,
            local_batch_size: None,
            round: 0,
            sampling_seed: 0,
        }
    }
}

impl RoundConfig {
    pub fn validate(&self) -> Result<()> {
        if self.clients_per_round == 0 {
            return Err(Error::config("clients per round must be at least 1"));
        }
        if !(self.client_lr >= 0.0) || !self.client_lr.is_finite() {
            return Err(Error::config("client learning rate must be finite and non-negative"));
        }
        if self.local_batch_size == Some(0) {
            return Err(Error::config("local batch size must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServerOptimizerState {
    pub velocity: Vec<f64>,
    pub momentum: f64,
    pub learning_rate: f64,
}

impl ServerOptimizerState {
    pub fn new(params: &ModelParams, momentum: f64, learning_rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::config(format!("server momentum must be in [0, 1), got {momentum}")));
        }
        if !(learning_rate >= 0.0) || !learning_rate.is_finite() {
            return Err(Error::config("server learning rate must be finite and non-negative"));
        }
        Ok(Self { velocity: vec![0.0; params.len()], momentum, learning_rate })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundMetrics {
    pub round: u64,
    /// Unweighted mean over sampled clients of their local training loss.
    pub mean_loss: f64,
    pub clients: usize,
    pub total_tokens: u64,
    pub client_ids: Vec<ClientId>,
}

/// Local minibatch SGD from `global`, sentences in temporal order.
pub fn client_update(global: &ModelParams, data: &ClientDataset, cfg: &RoundConfig) -> Result<ClientUpdate> {
    if data.is_empty() {
        return Err(Error::EmptyDataset { client: data.id });
    }
    let batch = cfg.local_batch_size.unwrap_or(data.len()).max(1);
    let mut params = global.clone();
    let mut weight = 0u64;
    let mut first_epoch_loss = 0.0;
    let mut first_epoch_batches = 0usize;
    for epoch in 0..cfg.local_epochs {
        for chunk in data.sentences().chunks(batch) {
            let outcome = train_batch(&params, chunk, cfg.client_lr)?;
            if epoch == 0 {
                first_epoch_loss += outcome.mean_loss;
                first_epoch_batches += 1;
            }
            weight += outcome.target_tokens;
            params = outcome.params;
        }
    }
    if weight == 0 {
        // zero local epochs: weight by the data the client holds
        weight = data.target_tokens();
    }
    let mean_loss = if first_epoch_batches > 0 { first_epoch_loss / first_epoch_batches as f64 } else { f64::NAN };
    Ok(ClientUpdate { client_id: data.id, params, weight, mean_loss })
}

/// Weighted mean `sum_k (n_k / N) w_k`, summed in ascending client-id order.
///
/// Computed as `w_a + sum_k (n_k / N) (w_k - w_a)` anchored on the lowest-id
/// update, which is the same mean but returns identical inputs unchanged.
pub fn federated_average(updates: &[ClientUpdate]) -> Result<ModelParams> {
    if updates.is_empty() {
        return Err(Error::NoUpdates);
    }
    let mut order: Vec<&ClientUpdate> = updates.iter().collect();
    order.sort_by_key(|u| u.client_id);
    let shape = order[0].params.shape();
    for u in &order {
        order[0].params.ensure_same_shape(u.params.shape())?;
    }
    let total: u64 = order.iter().map(|u| u.weight).sum();
    if total == 0 {
        return Err(Error::ZeroWeight);
    }
    let anchor = order[0].params.as_slice();
    let mut out = anchor.to_vec();
    for u in &order[1..] {
        let frac = u.weight as f64 / total as f64;
        for ((o, &w), &a) in out.iter_mut().zip(u.params.as_slice()).zip(anchor) {
            *o += frac * (w - a);
        }
    }
    ModelParams::from_vec(shape, out)
}

/// Nesterov momentum on the pseudo-gradient `g = global - averaged`:
/// `v' = mu v + g`, `new = global - eta (g + mu v')`.
pub fn server_step(
    global: &ModelParams,
    averaged: &ModelParams,
    state: &ServerOptimizerState,
) -> Result<(ModelParams, ServerOptimizerState)> {
    global.ensure_same_shape(averaged.shape())?;
    if state.velocity.len() != global.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("velocity of {} scalars", global.len()),
            found: format!("{} scalars", state.velocity.len()),
        });
    }
    let mu = state.momentum;
    let eta = state.learning_rate;
    let mut velocity = Vec::with_capacity(global.len());
    let mut next = Vec::with_capacity(global.len());
    for ((&w, &avg), &v) in global.as_slice().iter().zip(averaged.as_slice()).zip(&state.velocity) {
        let g = w - avg;
        let v_new = mu * v + g;
        // With eta = 1 the update is `averaged - mu v'`; writing it that way
        // makes mu = 0 reproduce plain averaging exactly.
        let w_new = if eta == 1.0 { avg - mu * v_new } else { w - eta * (g + mu * v_new) };
        velocity.push(v_new);
        next.push(w_new);
    }
    Ok((
        ModelParams::from_vec(global.shape(), next)?,
        ServerOptimizerState { velocity, momentum: mu, learning_rate: eta },
    ))
}

/// Seeded uniform sample of `k` distinct client indices, ascending.
pub fn sample_clients(population: usize, k: usize, sampling_seed: u64, round: u64) -> Result<Vec<usize>> {
    if population < k {
        return Err(Error::PopulationTooSmall { available: population, requested: k });
    }
    let mut rng = seed::rng(seed::derive(sampling_seed, "round", round));
    let mut picked = index::sample(&mut rng, population, k).into_vec();
    picked.sort_unstable();
    Ok(picked)
}

/// One synchronous round: sample, train locally in parallel, average, server step.
pub fn run_round(
    global: &ModelParams,
    population: &[ClientDataset],
    cfg: &RoundConfig,
    state: &ServerOptimizerState,
) -> Result<(ModelParams, ServerOptimizerState, RoundMetrics)> {
    cfg.validate()?;
    let picked = sample_clients(population.len(), cfg.clients_per_round, cfg.sampling_seed, cfg.round)?;
    let mut updates =
        picked.par_iter().map(|&i| client_update(global, &population[i], cfg)).collect::<Result<Vec<_>>>()?;
    updates.sort_by_key(|u| u.client_id);

    let averaged = federated_average(&updates)?;
    let (next, next_state) = server_step(global, &averaged, state)?;
    let metrics = RoundMetrics {
        round: cfg.round,
        mean_loss: updates.iter().map(|u| u.mean_loss).sum::<f64>() / updates.len() as f64,
        clients: updates.len(),
        total_tokens: updates.iter().map(|u| u.weight).sum(),
        client_ids: updates.iter().map(|u| u.client_id).collect(),
    };
    Ok((next, next_state, metrics))
}

/// Server-side optimizer settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServerConfig {
    pub momentum: f64,
    pub learning_rate: f64,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self { momentum: 0.9, learning_rate: 1.0 }
    }
}

/// Folds [`run_round`] `rounds` times starting at round index `cfg.round`.
///
/// `on_round` sees every round's metrics and the resulting global model,
/// which is where callers log and checkpoint.
pub fn train_global<F>(
    population: &[ClientDataset],
    rounds: u64,
    cfg: &RoundConfig,
    server: ServerConfig,
    init: ModelParams,
    mut on_round: F,
) -> Result<(ModelParams, Vec<RoundMetrics>)>
where
    F: FnMut(&RoundMetrics, &ModelParams) -> Result<()>,
{
    cfg.validate()?;
    let mut state = ServerOptimizerState::new(&init, server.momentum, server.learning_rate)?;
    let mut global = init;
    let mut log = Vec::with_capacity(rounds as usize);
    for r in 0..rounds {
        let round_cfg = RoundConfig { round: cfg.round + r, ..cfg.clone() };
        let (next, next_state, metrics) = run_round(&global, population, &round_cfg, &state)?;
        global = next;
        state = next_state;
        on_round(&metrics, &global)?;
        log.push(metrics);
    }
    Ok((global, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_params, ModelConfig, Shape};

    fn scalar_update(id: ClientId, value: f64, weight: u64) -> ClientUpdate {
        // Shape V=4, D=1, H=1 has 14 scalars; fill all with `value`.
        let shape = Shape::new(4, 1, 1);
        ClientUpdate {
            client_id: id,
            params: ModelParams::from_vec(shape, vec![value; 14]).unwrap(),
            weight,
            mean_loss: 0.0,
        }
    }

    fn scalar(value: f64) -> ModelParams {
        scalar_update(0, value, 1).params
    }

    #[test]
    fn average_scalar_examples() {
        let one = federated_average(&[scalar_update(0, 0.7, 5)]).unwrap();
        assert_eq!(one.as_slice(), scalar(0.7).as_slice());

        let two = federated_average(&[scalar_update(0, 0.0, 1), scalar_update(1, 4.0, 3)]).unwrap();
        assert!(two.as_slice().iter().all(|&w| w == 3.0));

        let three =
            federated_average(&[scalar_update(0, 1.0, 2), scalar_update(1, 2.0, 2), scalar_update(2, 3.0, 2)]).unwrap();
        assert!(three.as_slice().iter().all(|&w| w == 2.0));
    }

    #[test]
    fn average_errors() {
        assert!(matches!(federated_average(&[]), Err(Error::NoUpdates)));
        assert!(matches!(federated_average(&[scalar_update(0, 1.0, 0)]), Err(Error::ZeroWeight)));
        let other =
            ClientUpdate { client_id: 1, params: ModelParams::zeros(Shape::new(5, 1, 1)), weight: 1, mean_loss: 0.0 };
        assert!(federated_average(&[scalar_update(0, 1.0, 1), other]).is_err());
    }

    #[test]
    fn average_ignores_input_order() {
        let a = [scalar_update(2, 0.3, 7), scalar_update(0, 1.1, 2), scalar_update(1, -0.4, 5)];
        let b = [a[1].clone(), a[2].clone(), a[0].clone()];
        assert_eq!(federated_average(&a).unwrap().as_slice(), federated_average(&b).unwrap().as_slice());
    }

    #[test]
    fn nesterov_scalar_example() {
        let global = scalar(0.0);
        let state = ServerOptimizerState::new(&global, 0.9, 1.0).unwrap();
        let (next, st) = server_step(&global, &scalar(1.0), &state).unwrap();
        assert!(next.as_slice().iter().all(|&w| (w - 1.9).abs() < 1e-15));
        assert!(st.velocity.iter().all(|&v| v == -1.0));
    }

    #[test]
    fn plain_averaging_and_frozen_server() {
        let global = scalar(0.25);
        let averaged = scalar(0.1 + 0.2);
        let plain = ServerOptimizerState::new(&global, 0.0, 1.0).unwrap();
        let (next, _) = server_step(&global, &averaged, &plain).unwrap();
        assert_eq!(next.as_slice(), averaged.as_slice());

        let frozen = ServerOptimizerState::new(&global, 0.9, 0.0).unwrap();
        let (same, st) = server_step(&global, &averaged, &frozen).unwrap();
        assert_eq!(same.as_slice(), global.as_slice());
        let (_, st2) = server_step(&global, &averaged, &st).unwrap();
        let g = 0.25 - (0.1 + 0.2);
        assert!(st2.velocity.iter().all(|&v| v == 0.9 * g + g));
    }

    #[test]
    fn velocity_decays_when_average_equals_global() {
        let global = scalar(0.5);
        let mut state = ServerOptimizerState::new(&global, 0.8, 1.0).unwrap();
        state.velocity.iter_mut().for_each(|v| *v = 2.0);
        let (_, st) = server_step(&global, &global, &state).unwrap();
        assert!(st.velocity.iter().all(|&v| v == 0.8 * 2.0));
        // from rest, an unchanged average leaves the model where it is
        let rest = ServerOptimizerState::new(&global, 0.8, 1.0).unwrap();
        let (next, _) = server_step(&global, &global, &rest).unwrap();
        assert_eq!(next.as_slice(), global.as_slice());
    }

    #[test]
    fn server_rejects_bad_hyperparameters() {
        let p = scalar(0.0);
        assert!(ServerOptimizerState::new(&p, 1.0, 1.0).is_err());
        assert!(ServerOptimizerState::new(&p, -0.1, 1.0).is_err());
        assert!(ServerOptimizerState::new(&p, 0.5, -1.0).is_err());
        let mut st = ServerOptimizerState::new(&p, 0.5, 1.0).unwrap();
        st.velocity.pop();
        assert!(server_step(&p, &p, &st).is_err());
    }

    fn tiny_population(n: usize) -> Vec<ClientDataset> {
        (0..n).map(|i| ClientDataset::new(i as u64, vec![vec![3 + (i % 4) as u32, 4], vec![5, 6, 3]])).collect()
    }

    #[test]
    fn zero_client_lr_returns_global() {
        let g = init_params(&ModelConfig::new(8, 2, 3, 1)).unwrap();
        let cfg = RoundConfig { client_lr: 0.0, ..RoundConfig::default() };
        let u = client_update(&g, &tiny_population(1)[0], &cfg).unwrap();
        assert_eq!(u.params.as_slice(), g.as_slice());
        assert_eq!(u.weight, 3 + 4);
        assert!(client_update(&g, &ClientDataset::new(9, vec![]), &cfg).is_err());
    }

    #[test]
    fn sampling_full_population_and_too_small() {
        assert_eq!(sample_clients(5, 5, 3, 0).unwrap(), vec![0, 1, 2, 3, 4]);
        let a = sample_clients(100, 10, 3, 7).unwrap();
        assert_eq!(a, sample_clients(100, 10, 3, 7).unwrap());
        assert_ne!(a, sample_clients(100, 10, 3, 8).unwrap());
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert!(matches!(sample_clients(3, 4, 0, 0), Err(Error::PopulationTooSmall { .. })));
    }

    #[test]
    fn frozen_round_keeps_global() {
        let g = init_params(&ModelConfig::new(8, 2, 3, 1)).unwrap();
        let pop = tiny_population(6);
        let cfg = RoundConfig { clients_per_round: 3, client_lr: 0.0, ..RoundConfig::default() };
        let st = ServerOptimizerState::new(&g, 0.0, 1.0).unwrap();
        let (next, _, m) = run_round(&g, &pop, &cfg, &st).unwrap();
        assert_eq!(next.as_slice(), g.as_slice());
        assert_eq!(m.clients, 3);
    }

    #[test]
    fn zero_rounds_returns_init() {
        let g = init_params(&ModelConfig::new(8, 2, 3, 1)).unwrap();
        let (out, log) = train_global(
            &tiny_population(4),
            0,
            &RoundConfig::default(),
            ServerConfig::default(),
            g.clone(),
            |_, _| Ok(()),
        )
        .unwrap();
        assert_eq!(out, g);
        assert!(log.is_empty());
    }
}
