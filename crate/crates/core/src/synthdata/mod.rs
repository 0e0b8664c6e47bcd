//! Seeded non-IID client populations and JSONL corpus I/O.
//!
//! Sources are order-1 Markov chains over the word ids `3..V` (reserved ids
//! are never emitted; BOS/EOS are structural). Row `s` of a chain is the
//! next-word distribution after state `s`, where state 0 is sentence start
//! and state `k >= 1` is word `k + 2`.
//!
//! The global chain draws each row from a symmetric Dirichlet with
//! concentration `concentration`. A user's own chain perturbs the global
//! rows in log space and renormalizes:
//! `u[s][w] ∝ g[s][w] * exp(noise * z[s][w])`, `z ~ N(0, 1)`.
//! The user samples from the mixture `(1 - alpha) * g + alpha * u`, so
//! `alpha = 0` is the global chain and `alpha = 1` is the user's own.
//! With `alpha_spread > 0` each user draws their own weight uniformly from
//! `[alpha - alpha_spread, alpha + alpha_spread]`, clamped to `[0, 1]`.

mod corpus;

pub use corpus::{emit_corpus, ingest_corpus, ingest_corpus_text, map_corpus, parse_corpus, RawClient};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;

use crate::dataset::ClientDataset;
use crate::error::{Error, Result};
use crate::kv::KvMap;
use crate::model::TokenId;
use crate::seed;

const FIRST_WORD: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct PopulationSpec {
    pub users: usize,
    pub vocab_size: usize,
    /// Weight of the user-specific chain in each user's mixture.
    pub alpha: f64,
    /// Half-width of the per-user spread around `alpha`.
    pub alpha_spread: f64,
    pub min_sentences: usize,
    pub max_sentences: usize,
    pub min_sentence_len: usize,
    pub max_sentence_len: usize,
    /// Dirichlet concentration for global rows; small values give peaked rows.
    pub concentration: f64,
    /// Log-space noise scale of user chains.
    pub noise: f64,
    pub seed: u64,
}

impl Default for PopulationSpec {
    fn default() -> Self {
        Self {
            users: 500,
            vocab_size: 200,
            alpha: 0.6,
            alpha_spread: 0.0,
            min_sentences: 50,
            max_sentences: 150,
            min_sentence_len: 2,
            max_sentence_len: 8,
            concentration: 0.05,
            noise: 3.0,
            seed: 0,
        }
    }
}

impl PopulationSpec {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 4 {
            return Err(Error::config(format!("vocab_size must be at least 4, got {}", self.vocab_size)));
        }
        if self.users == 0 {
            return Err(Error::config("population needs at least one user"));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::config(format!("alpha must be in [0, 1], got {}", self.alpha)));
        }
        if !(0.0..=1.0).contains(&self.alpha_spread) {
            return Err(Error::config(format!("alpha_spread must be in [0, 1], got {}", self.alpha_spread)));
        }
        if self.min_sentences > self.max_sentences {
            return Err(Error::config("min_sentences exceeds max_sentences"));
        }
        if self.min_sentence_len == 0 || self.min_sentence_len > self.max_sentence_len {
            return Err(Error::config("sentence length bounds must satisfy 1 <= min <= max"));
        }
        if !(self.concentration > 0.0) || !self.concentration.is_finite() {
            return Err(Error::config("concentration must be positive"));
        }
        if !(self.noise >= 0.0) || !self.noise.is_finite() {
            return Err(Error::config("noise must be finite and non-negative"));
        }
        Ok(())
    }

    /// Reads `prefix.`-qualified keys; missing keys keep their defaults.
    pub fn from_kv(kv: &mut KvMap, prefix: &str) -> Result<Self> {
        let d = Self::default();
        let k = |name: &str| format!("{prefix}{name}");
        let spec = Self {
            users: kv.take_or(&k("users"), d.users)?,
            vocab_size: kv.take_or(&k("vocab_size"), d.vocab_size)?,
            alpha: kv.take_or(&k("alpha"), d.alpha)?,
            alpha_spread: kv.take_or(&k("alpha_spread"), d.alpha_spread)?,
            min_sentences: kv.take_or(&k("min_sentences"), d.min_sentences)?,
            max_sentences: kv.take_or(&k("max_sentences"), d.max_sentences)?,
            min_sentence_len: kv.take_or(&k("min_sentence_len"), d.min_sentence_len)?,
            max_sentence_len: kv.take_or(&k("max_sentence_len"), d.max_sentence_len)?,
            concentration: kv.take_or(&k("concentration"), d.concentration)?,
            noise: kv.take_or(&k("noise"), d.noise)?,
            seed: kv.take_or(&k("seed"), d.seed)?,
        };
        Ok(spec)
    }

    /// Standalone population spec file (unprefixed keys).
    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = KvMap::parse(text)?;
        let spec = Self::from_kv(&mut kv, "")?;
        kv.finish()?;
        spec.validate()?;
        Ok(spec)
    }

    fn words(&self) -> usize {
        self.vocab_size - FIRST_WORD
    }
}

/// Row-stochastic Markov chain: `words + 1` states by `words` next words.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovChain {
    words: usize,
    probs: Vec<f64>,
}

impl MarkovChain {
    pub fn words(&self) -> usize {
        self.words
    }

    pub fn states(&self) -> usize {
        self.words + 1
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.probs[state * self.words..(state + 1) * self.words]
    }

    /// State index after emitting `token` (0 is sentence start).
    pub fn state_of(token: Option<TokenId>) -> usize {
        token.map_or(0, |t| t as usize - FIRST_WORD + 1)
    }

    fn sample_next(&self, cdf: &[f64], state: usize, rng: &mut ChaCha8Rng) -> usize {
        let row = &cdf[state * self.words..(state + 1) * self.words];
        let u: f64 = rng.random::<f64>() * row[self.words - 1];
        row.partition_point(|&c| c <= u).min(self.words - 1)
    }

    fn cdf(&self) -> Vec<f64> {
        let mut cdf = self.probs.clone();
        for row in cdf.chunks_mut(self.words) {
            let mut acc = 0.0;
            for p in row {
                acc += *p;
                *p = acc;
            }
        }
        cdf
    }
}

fn normalize(row: &mut [f64]) {
    let total: f64 = row.iter().sum();
    if total > 0.0 && total.is_finite() {
        row.iter_mut().for_each(|p| *p /= total);
    } else {
        let u = 1.0 / row.len() as f64;
        row.iter_mut().for_each(|p| *p = u);
    }
}

pub fn global_chain(spec: &PopulationSpec) -> Result<MarkovChain> {
    spec.validate()?;
    let words = spec.words();
    let mut rng = seed::rng(seed::derive(spec.seed, "global-chain", 0));
    let gamma = Gamma::new(spec.concentration, 1.0).map_err(|e| Error::config(e.to_string()))?;
    let mut probs = Vec::with_capacity((words + 1) * words);
    for _ in 0..=words {
        let mut row: Vec<f64> = (0..words).map(|_| gamma.sample(&mut rng)).collect();
        normalize(&mut row);
        probs.extend(row);
    }
    Ok(MarkovChain { words, probs })
}

/// One user's sampling source.
#[derive(Debug, Clone, PartialEq)]
pub struct UserSource {
    pub user_id: u64,
    pub alpha: f64,
    pub user_seed: u64,
    /// The user-specific chain, absent when `alpha == 0`.
    pub own: Option<MarkovChain>,
    /// `(1 - alpha) * global + alpha * own`.
    pub mixture: MarkovChain,
}

pub fn user_source(spec: &PopulationSpec, global: &MarkovChain, user_id: u64) -> UserSource {
    let user_seed = seed::derive(spec.seed, "user", user_id);
    let mut rng = seed::rng(seed::derive(user_seed, "chain", 0));
    let alpha = if spec.alpha_spread > 0.0 {
        let u: f64 = rng.random();
        (spec.alpha + spec.alpha_spread * (2.0 * u - 1.0)).clamp(0.0, 1.0)
    } else {
        spec.alpha
    };
    if alpha == 0.0 {
        return UserSource { user_id, alpha, user_seed, own: None, mixture: global.clone() };
    }
    let words = global.words;
    let mut own = global.probs.clone();
    for row in own.chunks_mut(words) {
        for p in row.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *p *= (spec.noise * z).exp();
        }
        normalize(row);
    }
    let a = alpha;
    let mixture: Vec<f64> = global.probs.iter().zip(&own).map(|(g, u)| (1.0 - a) * g + a * u).collect();
    UserSource {
        user_id,
        alpha: a,
        user_seed,
        own: Some(MarkovChain { words, probs: own }),
        mixture: MarkovChain { words, probs: mixture },
    }
}

fn sample_user(spec: &PopulationSpec, source: &UserSource) -> ClientDataset {
    let mut rng = seed::rng(seed::derive(source.user_seed, "text", 0));
    let cdf = source.mixture.cdf();
    let n = rng.random_range(spec.min_sentences..=spec.max_sentences);
    let sentences = (0..n)
        .map(|_| {
            let len = rng.random_range(spec.min_sentence_len..=spec.max_sentence_len);
            let mut state = 0;
            (0..len)
                .map(|_| {
                    let w = source.mixture.sample_next(&cdf, state, &mut rng);
                    state = w + 1;
                    (w + FIRST_WORD) as TokenId
                })
                .collect()
        })
        .collect();
    ClientDataset::new(source.user_id, sentences)
}

/// Generates every user independently; the result does not depend on thread count.
pub fn generate_population(spec: &PopulationSpec) -> Result<Vec<ClientDataset>> {
    let global = global_chain(spec)?;
    Ok((0..spec.users as u64).into_par_iter().map(|id| sample_user(spec, &user_source(spec, &global, id))).collect())
}
