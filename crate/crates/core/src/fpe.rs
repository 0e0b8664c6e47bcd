//! Client-side personalization evaluation.
//!
//! Each device: splits its data temporally into train and test partitions,
//! scores the global model on test, fine-tunes a private copy on train,
//! scores the copy on the same test partition, and reports the pair. Only
//! the [`MetricReport`] leaves [`fpe_client_task`].

use std::fmt;

use rayon::prelude::*;

use crate::dataset::{ClientDataset, ClientId};
use crate::error::{Error, Result};
use crate::kv::KvMap;
use crate::model::{accuracy, train_batch, ModelParams};

pub const DEFAULT_TRAIN_FRACTION: f64 = 0.8;

/// Fine-tuning hyperparameters.
///
/// Training stops at the first batch boundary where the processed target
/// tokens reach `token_budget` or the completed epochs reach `epoch_budget`.
/// A zero budget therefore means no training at all.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PersonalizationStrategy {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub token_budget: u64,
    pub epoch_budget: u64,
    pub train_fraction: f64,
}

impl PersonalizationStrategy {
    pub fn new(learning_rate: f64, batch_size: usize, token_budget: u64, epoch_budget: u64) -> Self {
        Self { learning_rate, batch_size, token_budget, epoch_budget, train_fraction: DEFAULT_TRAIN_FRACTION }
    }

    /// No fine-tuning; used as a calibration control.
    pub fn frozen(batch_size: usize) -> Self {
        Self::new(0.0, batch_size, 0, 0)
    }

    pub fn is_frozen(&self) -> bool {
        self.token_budget == 0 || self.epoch_budget == 0
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::config(format!(
                "learning rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be at least 1"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::config(format!("train fraction must be in (0, 1), got {}", self.train_fraction)));
        }
        Ok(())
    }

    /// Directory-style label `B{B}_L{L}_T{T}_E{E}`.
    pub fn label(&self) -> String {
        format!("B{}_L{}_T{}_E{}", self.batch_size, self.learning_rate, self.token_budget, self.epoch_budget)
    }

    fn from_kv(kv: &mut KvMap) -> Result<Self> {
        let s = Self {
            learning_rate: kv.take_required("L")?,
            batch_size: kv.take_required("B")?,
            token_budget: kv.take_required("T")?,
            epoch_budget: kv.take_required("E")?,
            train_fraction: kv.take_or("train_fraction", DEFAULT_TRAIN_FRACTION)?,
        };
        s.validate()?;
        Ok(s)
    }

    /// Strategy file: `key = value` lines for `L`, `B`, `T`, `E` and optionally `train_fraction`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = KvMap::parse(text)?;
        let s = Self::from_kv(&mut kv)?;
        kv.finish()?;
        Ok(s)
    }
}

impl fmt::Display for PersonalizationStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "L={} B={} T={} E={} train_fraction={}",
            self.learning_rate, self.batch_size, self.token_budget, self.epoch_budget, self.train_fraction
        )
    }
}

/// Sweep file: one strategy per line as whitespace-separated `key=value`
/// pairs, e.g. `L=0.1 B=5 T=5000 E=1`. `#` comments and blank lines are skipped.
pub fn parse_sweep(text: &str) -> Result<Vec<PersonalizationStrategy>> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut kv = KvMap::default();
        for pair in content.split_whitespace() {
            let (k, v) =
                pair.split_once('=').ok_or_else(|| Error::parse(line, format!("expected key=value, got `{pair}`")))?;
            if kv.contains(k) {
                return Err(Error::parse(line, format!("duplicate key `{k}`")));
            }
            kv.insert(k, v);
        }
        let s =
            PersonalizationStrategy::from_kv(&mut kv).and_then(|s| kv.finish().map(|_| s)).map_err(|e| match e {
                Error::Parse { message, .. } => Error::parse(line, message),
                other => Error::parse(line, other.to_string()),
            })?;
        out.push(s);
    }
    Ok(out)
}

pub fn format_sweep(strategies: &[PersonalizationStrategy]) -> String {
    strategies.iter().map(|s| format!("{s}\n")).collect()
}

/// Number of train sentences for `n` sentences: `floor(fraction * n)` clamped to `[1, n - 1]`.
fn train_count(n: usize, fraction: f64) -> usize {
    // the epsilon absorbs representation error such as 0.57 * 100 = 56.999...
    let k = (fraction * n as f64 + 1e-9).floor() as usize;
    k.clamp(1, n - 1)
}

/// Temporal split: the first sentences train, the rest test.
pub fn split_dataset(data: &ClientDataset, train_fraction: f64) -> Result<(ClientDataset, ClientDataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::config(format!("train fraction must be in (0, 1), got {train_fraction}")));
    }
    let n = data.len();
    if n < 2 {
        return Err(Error::InsufficientData { client: data.id, sentences: n });
    }
    let k = train_count(n, train_fraction);
    let (train, test) = data.sentences().split_at(k);
    Ok((ClientDataset::new(data.id, train.to_vec()), ClientDataset::new(data.id, test.to_vec())))
}

/// Fine-tunes `global` on `train`; returns the model and target tokens processed.
pub fn personalize(
    global: &ModelParams,
    train: &ClientDataset,
    strategy: &PersonalizationStrategy,
) -> Result<(ModelParams, u64)> {
    strategy.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyDataset { client: train.id });
    }
    let mut params = global.clone();
    let mut tokens = 0u64;
    let mut epochs = 0u64;
    'outer: loop {
        if tokens >= strategy.token_budget || epochs >= strategy.epoch_budget {
            break;
        }
        for batch in train.sentences().chunks(strategy.batch_size) {
            let outcome = train_batch(&params, batch, strategy.learning_rate)?;
            params = outcome.params;
            tokens += outcome.target_tokens;
            if tokens >= strategy.token_budget {
                break 'outer;
            }
        }
        epochs += 1;
    }
    Ok((params, tokens))
}

/// Accuracies of both models on the same test partition.
pub fn evaluate_pair(global: &ModelParams, personalized: &ModelParams, test: &ClientDataset) -> Result<(f64, f64)> {
    if test.is_empty() {
        return Err(Error::EmptyDataset { client: test.id });
    }
    let base = accuracy(global, test.sentences())?;
    let pers = accuracy(personalized, test.sentences())?;
    Ok((
        base.ratio().expect("non-empty test partition has targets"),
        pers.ratio().expect("non-empty test partition has targets"),
    ))
}

/// What a client uploads.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub client_id: ClientId,
    pub baseline_accuracy: f64,
    pub personalized_accuracy: f64,
    /// `personalized_accuracy - baseline_accuracy`.
    pub delta: f64,
    /// Target tokens in the client's train partition.
    pub n_train_tokens: u64,
    pub n_test_tokens: u64,
}

impl MetricReport {
    pub fn new(
        client_id: ClientId,
        baseline_accuracy: f64,
        personalized_accuracy: f64,
        n_train_tokens: u64,
        n_test_tokens: u64,
    ) -> Self {
        Self {
            client_id,
            baseline_accuracy,
            personalized_accuracy,
            delta: personalized_accuracy - baseline_accuracy,
            n_train_tokens,
            n_test_tokens,
        }
    }
}

/// Split, baseline eval, fine-tune, personalized eval, delta.
pub fn fpe_client_task(
    global: &ModelParams,
    data: &ClientDataset,
    strategy: &PersonalizationStrategy,
) -> Result<MetricReport> {
    let (train, test) = split_dataset(data, strategy.train_fraction)?;
    let base = accuracy(global, test.sentences())?;
    let (personalized, _) = personalize(global, &train, strategy)?;
    let pers = accuracy(&personalized, test.sentences())?;
    Ok(MetricReport::new(
        data.id,
        base.ratio().expect("test partition is non-empty"),
        pers.ratio().expect("test partition is non-empty"),
        train.target_tokens(),
        test.target_tokens(),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateDecision {
    Accept,
    Reject,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GatePolicy {
    pub min_delta: f64,
    pub min_test_tokens: u64,
}

impl Default for GatePolicy {
    fn default() -> Self {
        Self { min_delta: 0.0, min_test_tokens: 1 }
    }
}

/// Accept iff `delta >= min_delta` and `n_test_tokens >= min_test_tokens`.
pub fn gate(report: &MetricReport, policy: &GatePolicy) -> GateDecision {
    if report.delta >= policy.min_delta && report.n_test_tokens >= policy.min_test_tokens {
        GateDecision::Accept
    } else {
        GateDecision::Reject
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FpeRun {
    /// Ascending client id.
    pub reports: Vec<MetricReport>,
    pub skipped: usize,
}

/// Runs [`fpe_client_task`] over the population in parallel.
///
/// Clients with too little data are skipped and counted; any other client
/// error aborts the run.
pub fn run_fpe(
    global: &ModelParams,
    population: &[ClientDataset],
    strategy: &PersonalizationStrategy,
) -> Result<FpeRun> {
    strategy.validate()?;
    let outcomes: Vec<Result<MetricReport>> =
        population.par_iter().map(|client| fpe_client_task(global, client, strategy)).collect();
    let mut run = FpeRun::default();
    for outcome in outcomes {
        match outcome {
            Ok(report) => run.reports.push(report),
            Err(Error::InsufficientData { .. }) => run.skipped += 1,
            Err(e) => return Err(e),
        }
    }
    run.reports.sort_by_key(|r| r.client_id);
    Ok(run)
}
