//! Experiment configuration.
//!
//! A config file is `key = value` text with dotted sections. Every key is
//! optional; missing keys take the defaults below, which describe the
//! desk-scale experiment. Unknown keys are errors.
//!
//! | key | default |
//! |-----|---------|
//! | `seed` | 0 |
//! | `model.vocab_size`, `model.dim`, `model.hidden` | 200, 16, 32 |
//! | `population.users` | 500 |
//! | `population.vocab_size` | `model.vocab_size` |
//! | `population.alpha`, `population.alpha_spread` | 0.6, 0 |
//! | `population.min_sentences`, `population.max_sentences` | 50, 150 |
//! | `population.min_sentence_len`, `population.max_sentence_len` | 2, 8 |
//! | `population.concentration`, `population.noise` | 0.05, 3 |
//! | `population.seed` | derived from `seed` |
//! | `data.corpus` | `<out>/corpus.jsonl` |
//! | `data.vocab` | `<out>/vocab.txt` if present, else built from the corpus |
//! | `train.rounds` | 50 |
//! | `train.clients_per_round` | 20 |
//! | `train.client_lr` | 0.5 |
//! | `train.local_epochs` | 1 |
//! | `train.local_batch_size` | 5 (0 trains on the whole local dataset) |
//! | `train.server_momentum`, `train.server_lr` | 0.9, 1 |
//! | `train.checkpoint_every` | 0 (only the final checkpoint) |
//! | `train.init_checkpoint` | none |
//! | `train.start_round` | 0 |
//! | `fpe.checkpoint` | `<out>/global/checkpoint.bin` |
//! | `fpe.batch_sizes` | 5,10,20 |
//! | `fpe.learning_rates` | 0.02,0.2,2 |
//! | `fpe.token_budget`, `fpe.epoch_budget` | 500, 1 |
//! | `fpe.train_fraction` | 0.8 |
//! | `fpe.sweep` | none; a sweep file replaces the grid |
//! | `fpe.include_frozen` | false |
//! | `report.histogram_edges` | 41 buckets over [-0.1, 0.1] |
//! | `report.token_edges` | 0,300,400,500,inf |
//! | `report.baseline_edges` | 0,0.1,0.15,0.2,1 |
//! | `report.thresholds` | 0.02 |
//! | `report.svg` | true |
//! | `gate.min_delta`, `gate.min_test_tokens` | 0, 1 |

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use fedpe::aggregate::HistogramSpec;
use fedpe::fedcore::{RoundConfig, ServerConfig};
use fedpe::fpe::{parse_sweep, GatePolicy, PersonalizationStrategy};
use fedpe::kv::KvMap;
use fedpe::seed;
use fedpe::synthdata::PopulationSpec;
use fedpe::Shape;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSettings {
    pub rounds: u64,
    pub clients_per_round: usize,
    pub client_lr: f64,
    pub local_epochs: usize,
    pub local_batch_size: usize,
    pub server: ServerConfig,
    pub checkpoint_every: u64,
    pub init_checkpoint: Option<PathBuf>,
    pub start_round: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FpeSettings {
    pub checkpoint: Option<PathBuf>,
    pub strategies: Vec<PersonalizationStrategy>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportSettings {
    pub histogram_edges: Vec<f64>,
    pub token_edges: Vec<f64>,
    pub baseline_edges: Vec<f64>,
    pub thresholds: Vec<f64>,
    pub svg: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    pub model: Shape,
    pub population: PopulationSpec,
    pub corpus: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    pub train: TrainSettings,
    pub fpe: FpeSettings,
    pub report: ReportSettings,
    pub gate: GatePolicy,
}

/// Seeds of every randomized stage, all derived from the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Seeds {
    pub population: u64,
    pub init: u64,
    pub sampling: u64,
}

impl Seeds {
    pub fn derive(master: u64) -> Self {
        Self {
            population: seed::derive(master, "population", 0),
            init: seed::derive(master, "model-init", 0),
            sampling: seed::derive(master, "client-sampling", 0),
        }
    }
}

fn grid(batch_sizes: &[usize], lrs: &[f64], t: u64, e: u64, fraction: f64) -> Vec<PersonalizationStrategy> {
    let mut out = Vec::new();
    for &b in batch_sizes {
        for &l in lrs {
            out.push(PersonalizationStrategy { train_fraction: fraction, ..PersonalizationStrategy::new(l, b, t, e) });
        }
    }
    out
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::from_kv(KvMap::default(), None).expect("defaults are valid")
    }
}

impl ExperimentConfig {
    /// Parses config text; `seed_override` replaces the `seed` key.
    pub fn parse(text: &str, seed_override: Option<u64>) -> CliResult<Self> {
        Self::from_kv(KvMap::parse(text)?, seed_override)
    }

    pub fn load(path: Option<&Path>, seed_override: Option<u64>) -> CliResult<Self> {
        match path {
            None => Self::from_kv(KvMap::default(), seed_override),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                Self::parse(&text, seed_override).map_err(|e| match e {
                    CliError::Config(msg) => CliError::Config(format!("{}: {msg}", p.display())),
                    other => other,
                })
            }
        }
    }

    fn from_kv(mut kv: KvMap, seed_override: Option<u64>) -> CliResult<Self> {
        let file_seed: u64 = kv.take_or("seed", 0)?;
        let master_seed = seed_override.unwrap_or(file_seed);
        let seeds = Seeds::derive(master_seed);

        let model = Shape::new(
            kv.take_or("model.vocab_size", 200)?,
            kv.take_or("model.dim", 16)?,
            kv.take_or("model.hidden", 32)?,
        );
        model.validate()?;

        let has_vocab = kv.contains("population.vocab_size");
        let has_seed = kv.contains("population.seed");
        let mut population = PopulationSpec::from_kv(&mut kv, "population.")?;
        if !has_vocab {
            population.vocab_size = model.vocab;
        }
        if !has_seed {
            population.seed = seeds.population;
        }
        population.validate()?;

        let corpus = kv.take::<PathBuf>("data.corpus")?;
        let vocab = kv.take::<PathBuf>("data.vocab")?;

        let rounds_default = RoundConfig::default();
        let train = TrainSettings {
            rounds: kv.take_or("train.rounds", 50)?,
            clients_per_round: kv.take_or("train.clients_per_round", rounds_default.clients_per_round)?,
            client_lr: kv.take_or("train.client_lr", rounds_default.client_lr)?,
            local_epochs: kv.take_or("train.local_epochs", rounds_default.local_epochs)?,
            local_batch_size: kv.take_or("train.local_batch_size", 5)?,
            server: ServerConfig {
                momentum: kv.take_or("train.server_momentum", ServerConfig::default().momentum)?,
                learning_rate: kv.take_or("train.server_lr", ServerConfig::default().learning_rate)?,
            },
            checkpoint_every: kv.take_or("train.checkpoint_every", 0)?,
            init_checkpoint: kv.take("train.init_checkpoint")?,
            start_round: kv.take_or("train.start_round", 0)?,
        };

        let checkpoint = kv.take::<PathBuf>("fpe.checkpoint")?;
        let batch_sizes: Vec<usize> = kv.take_list("fpe.batch_sizes")?.unwrap_or(vec![5, 10, 20]);
        let lrs: Vec<f64> = kv.take_list("fpe.learning_rates")?.unwrap_or(vec![0.02, 0.2, 2.0]);
        let token_budget: u64 = kv.take_or("fpe.token_budget", 500)?;
        let epoch_budget: u64 = kv.take_or("fpe.epoch_budget", 1)?;
        let fraction: f64 = kv.take_or("fpe.train_fraction", fedpe::fpe::DEFAULT_TRAIN_FRACTION)?;
        let sweep_file = kv.take::<PathBuf>("fpe.sweep")?;
        let include_frozen: bool = kv.take_or("fpe.include_frozen", false)?;
        let mut strategies = match &sweep_file {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                parse_sweep(&text).map_err(|e| CliError::in_file(p, e))?
            }
            None => grid(&batch_sizes, &lrs, token_budget, epoch_budget, fraction),
        };
        if include_frozen {
            let b = strategies.first().map_or(5, |s| s.batch_size);
            strategies.push(PersonalizationStrategy { train_fraction: fraction, ..PersonalizationStrategy::frozen(b) });
        }
        if strategies.is_empty() {
            return Err(CliError::Config("the strategy sweep is empty".into()));
        }
        for s in &strategies {
            s.validate()?;
        }
        let mut labels: Vec<String> = strategies.iter().map(label_with_fraction).collect();
        labels.sort();
        if let Some(w) = labels.windows(2).find(|w| w[0] == w[1]) {
            return Err(CliError::Config(format!("strategy {} appears twice in the sweep", w[0])));
        }

        let report = ReportSettings {
            histogram_edges: kv
                .take_list("report.histogram_edges")?
                .unwrap_or_else(|| HistogramSpec::default_delta().edges().to_vec()),
            token_edges: kv.take_list("report.token_edges")?.unwrap_or(vec![0.0, 300.0, 400.0, 500.0, f64::INFINITY]),
            baseline_edges: kv.take_list("report.baseline_edges")?.unwrap_or(vec![0.0, 0.1, 0.15, 0.2, 1.0]),
            thresholds: kv.take_list("report.thresholds")?.unwrap_or(vec![0.02]),
            svg: kv.take_or("report.svg", true)?,
        };
        let gate = GatePolicy {
            min_delta: kv.take_or("gate.min_delta", GatePolicy::default().min_delta)?,
            min_test_tokens: kv.take_or("gate.min_test_tokens", GatePolicy::default().min_test_tokens)?,
        };
        kv.finish()?;

        let config = Self {
            master_seed,
            model,
            population,
            corpus,
            vocab,
            train,
            fpe: FpeSettings { checkpoint, strategies },
            report,
            gate,
        };
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> CliResult<()> {
        let bad = |m: &str| Err(CliError::Config(m.to_string()));
        self.round_config(0).validate()?;
        fedpe::fedcore::ServerOptimizerState::new(
            &fedpe::ModelParams::zeros(Shape::new(4, 1, 1)),
            self.train.server.momentum,
            self.train.server.learning_rate,
        )?;
        if self.train.clients_per_round > self.population.users {
            return bad("train.clients_per_round exceeds population.users");
        }
        HistogramSpec::new(self.report.histogram_edges.clone())?;
        HistogramSpec::new(self.report.token_edges.clone())?;
        HistogramSpec::new(self.report.baseline_edges.clone())?;
        if self.report.thresholds.is_empty() {
            return bad("report.thresholds must list at least one value");
        }
        if self.report.thresholds.iter().any(|t| !t.is_finite()) {
            return bad("report.thresholds must be finite");
        }
        if !self.gate.min_delta.is_finite() {
            return bad("gate.min_delta must be finite");
        }
        Ok(())
    }

    pub fn seeds(&self) -> Seeds {
        Seeds { population: self.population.seed, ..Seeds::derive(self.master_seed) }
    }

    pub fn round_config(&self, round: u64) -> RoundConfig {
        RoundConfig {
            clients_per_round: self.train.clients_per_round,
            client_lr: self.train.client_lr,
            local_epochs: self.train.local_epochs,
            local_batch_size: (self.train.local_batch_size > 0).then_some(self.train.local_batch_size),
            round,
            sampling_seed: self.seeds().sampling,
        }
    }

    pub fn corpus_path(&self, out: &Path) -> PathBuf {
        self.corpus.clone().unwrap_or_else(|| out.join("corpus.jsonl"))
    }

    /// Explicit vocabulary path, or the generated one if it exists.
    pub fn vocab_path(&self, out: &Path) -> Option<PathBuf> {
        match &self.vocab {
            Some(p) => Some(p.clone()),
            None if self.corpus.is_none() => Some(out.join("vocab.txt")).filter(|p| p.exists()),
            None => None,
        }
    }

    pub fn checkpoint_path(&self, out: &Path) -> PathBuf {
        self.fpe.checkpoint.clone().unwrap_or_else(|| out.join("global").join("checkpoint.bin"))
    }

    /// Every resolved setting in a fixed order, one `key = value` per line.
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        let list = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
        let path = |p: &Option<PathBuf>| p.as_ref().map_or(String::new(), |p| p.display().to_string());
        let p = &self.population;
        let _ = writeln!(s, "seed = {}", self.master_seed);
        let _ = writeln!(s, "model.vocab_size = {}", self.model.vocab);
        let _ = writeln!(s, "model.dim = {}", self.model.dim);
        let _ = writeln!(s, "model.hidden = {}", self.model.hidden);
        let _ = writeln!(s, "population.users = {}", p.users);
        let _ = writeln!(s, "population.vocab_size = {}", p.vocab_size);
        let _ = writeln!(s, "population.alpha = {}", p.alpha);
        let _ = writeln!(s, "population.alpha_spread = {}", p.alpha_spread);
        let _ = writeln!(s, "population.min_sentences = {}", p.min_sentences);
        let _ = writeln!(s, "population.max_sentences = {}", p.max_sentences);
        let _ = writeln!(s, "population.min_sentence_len = {}", p.min_sentence_len);
        let _ = writeln!(s, "population.max_sentence_len = {}", p.max_sentence_len);
        let _ = writeln!(s, "population.concentration = {}", p.concentration);
        let _ = writeln!(s, "population.noise = {}", p.noise);
        let _ = writeln!(s, "population.seed = {}", p.seed);
        let _ = writeln!(s, "data.corpus = {}", path(&self.corpus));
        let _ = writeln!(s, "data.vocab = {}", path(&self.vocab));
        let t = &self.train;
        let _ = writeln!(s, "train.rounds = {}", t.rounds);
        let _ = writeln!(s, "train.clients_per_round = {}", t.clients_per_round);
        let _ = writeln!(s, "train.client_lr = {}", t.client_lr);
        let _ = writeln!(s, "train.local_epochs = {}", t.local_epochs);
        let _ = writeln!(s, "train.local_batch_size = {}", t.local_batch_size);
        let _ = writeln!(s, "train.server_momentum = {}", t.server.momentum);
        let _ = writeln!(s, "train.server_lr = {}", t.server.learning_rate);
        let _ = writeln!(s, "train.checkpoint_every = {}", t.checkpoint_every);
        let _ = writeln!(s, "train.init_checkpoint = {}", path(&t.init_checkpoint));
        let _ = writeln!(s, "train.start_round = {}", t.start_round);
        let _ = writeln!(s, "fpe.checkpoint = {}", path(&self.fpe.checkpoint));
        for st in &self.fpe.strategies {
            let _ = writeln!(s, "fpe.strategy = {st}");
        }
        let r = &self.report;
        let _ = writeln!(s, "report.histogram_edges = {}", list(&r.histogram_edges));
        let _ = writeln!(s, "report.token_edges = {}", list(&r.token_edges));
        let _ = writeln!(s, "report.baseline_edges = {}", list(&r.baseline_edges));
        let _ = writeln!(s, "report.thresholds = {}", list(&r.thresholds));
        let _ = writeln!(s, "report.svg = {}", r.svg);
        let _ = writeln!(s, "gate.min_delta = {}", self.gate.min_delta);
        let _ = writeln!(s, "gate.min_test_tokens = {}", self.gate.min_test_tokens);
        s
    }

    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Output directory name; the train fraction is appended only when it is not the default.
pub fn label_with_fraction(s: &PersonalizationStrategy) -> String {
    if s.train_fraction == fedpe::fpe::DEFAULT_TRAIN_FRACTION {
        s.label()
    } else {
        format!("{}_F{}", s.label(), s.train_fraction)
    }
}
