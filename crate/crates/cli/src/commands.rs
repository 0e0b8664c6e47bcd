use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use fedpe::aggregate::{
    build_histogram, format_histogram_csv, format_reports_csv, format_slice_csv, format_summary, format_sweep_csv,
    histogram_svg, parse_reports_csv, slice, summarize_with_gate, sweep_table, HistogramSpec, SliceKey, SliceSpec,
};
use fedpe::fedcore::train_global as run_training;
use fedpe::fpe::{run_fpe as run_sweep_cell, MetricReport, PersonalizationStrategy};
use fedpe::model::{checkpoint, init_params};
use fedpe::synthdata::{emit_corpus, generate_population, ingest_corpus_text, map_corpus, parse_corpus};
use fedpe::{ClientDataset, ModelConfig, ModelParams, Vocabulary};

use crate::config::{label_with_fraction, ExperimentConfig};
use crate::error::{CliError, CliResult};
use crate::output::{read_bytes, read_text, write_atomic};

fn note(msg: impl AsRef<str>) {
    eprintln!("{}", msg.as_ref());
}

pub fn gen_data(cfg: &ExperimentConfig, out: &Path) -> CliResult<()> {
    let population = generate_population(&cfg.population)?;
    let vocab = Vocabulary::synthetic(cfg.population.vocab_size)?;
    let corpus = emit_corpus(&vocab, &population)?;
    write_atomic(&out.join("corpus.jsonl"), corpus.as_bytes())?;
    write_atomic(&out.join("vocab.txt"), vocab.to_text().as_bytes())?;
    let tokens: u64 = population.iter().map(ClientDataset::target_tokens).sum();
    note(format!("generated {} users, {tokens} target tokens", population.len()));
    Ok(())
}

/// Reads the corpus and maps it to token ids under the configured vocabulary.
pub fn load_population(cfg: &ExperimentConfig, out: &Path) -> CliResult<Vec<ClientDataset>> {
    let corpus_path = cfg.corpus_path(out);
    let text = read_text(&corpus_path)?;
    let v = cfg.model.vocab;
    match cfg.vocab_path(out) {
        Some(vocab_path) => {
            let vocab = Vocabulary::parse(&read_text(&vocab_path)?).map_err(|e| CliError::in_file(&vocab_path, e))?;
            if vocab.len() != v {
                return Err(CliError::Mismatch(format!(
                    "{} has {} entries but model.vocab_size is {v}",
                    vocab_path.display(),
                    vocab.len()
                )));
            }
            let raw = parse_corpus(&text).map_err(|e| CliError::in_file(&corpus_path, e))?;
            Ok(map_corpus(&raw, &vocab))
        }
        None => {
            let (_, clients) = ingest_corpus_text(&text, v).map_err(|e| CliError::in_file(&corpus_path, e))?;
            Ok(clients)
        }
    }
}

fn load_checkpoint(path: &Path, cfg: &ExperimentConfig) -> CliResult<ModelParams> {
    let params = checkpoint::decode(&read_bytes(path)?).map_err(|e| CliError::in_file(path, e))?;
    if params.shape() != cfg.model {
        return Err(CliError::Mismatch(format!(
            "{} holds a {:?} model but the config asks for {:?}",
            path.display(),
            params.shape(),
            cfg.model
        )));
    }
    Ok(params)
}

pub fn train_global(cfg: &ExperimentConfig, out: &Path) -> CliResult<()> {
    let population = load_population(cfg, out)?;
    let seeds = cfg.seeds();
    let init = match &cfg.train.init_checkpoint {
        Some(p) => load_checkpoint(p, cfg)?,
        None => init_params(&ModelConfig { shape: cfg.model, seed: seeds.init })?,
    };
    if cfg.train.rounds > 0 && population.len() < cfg.train.clients_per_round {
        return Err(CliError::Config(format!(
            "corpus has {} clients but train.clients_per_round is {}",
            population.len(),
            cfg.train.clients_per_round
        )));
    }
    let dir = out.join("global");
    let every = cfg.train.checkpoint_every;
    let start = cfg.train.start_round;
    let (params, log) =
        run_training(&population, cfg.train.rounds, &cfg.round_config(start), cfg.train.server, init, |m, p| {
            note(format!("round {} loss {:.4} tokens {}", m.round, m.mean_loss, m.total_tokens));
            let done = m.round + 1 - start;
            if every > 0 && done.is_multiple_of(every) && done < cfg.train.rounds {
                let path = dir.join(format!("checkpoint_r{}.bin", m.round + 1));
                write_atomic(&path, &checkpoint::encode(p)).map_err(|e| match e {
                    CliError::Io { path, source } => fedpe::Error::Io { path, source },
                    other => fedpe::Error::Config(other.to_string()),
                })?;
            }
            Ok(())
        })?;

    let mut metrics = String::from("round,mean_loss,clients,total_tokens\n");
    for m in &log {
        let _ = writeln!(metrics, "{},{},{},{}", m.round, m.mean_loss, m.clients, m.total_tokens);
    }
    let mut meta = String::new();
    let _ = writeln!(meta, "rounds = {}", cfg.train.rounds);
    let _ = writeln!(meta, "next_round = {}", start + cfg.train.rounds);
    let _ = writeln!(meta, "master_seed = {}", cfg.master_seed);
    let _ = writeln!(meta, "population_seed = {}", seeds.population);
    let _ = writeln!(meta, "init_seed = {}", seeds.init);
    let _ = writeln!(meta, "sampling_seed = {}", seeds.sampling);
    let _ = writeln!(meta, "config_sha256 = {}", cfg.hash());
    write_atomic(&dir.join("metrics.csv"), metrics.as_bytes())?;
    write_atomic(&dir.join("checkpoint.meta"), meta.as_bytes())?;
    write_atomic(&dir.join("checkpoint.bin"), &checkpoint::encode(&params))?;
    Ok(())
}

/// Files derived from one strategy's reports, in write order.
pub fn aggregate_artifacts(reports: &[MetricReport], cfg: &ExperimentConfig) -> CliResult<Vec<(&'static str, String)>> {
    let r = &cfg.report;
    let deltas: Vec<f64> = reports.iter().map(|m| m.delta).collect();
    let hist = build_histogram(&deltas, &HistogramSpec::new(r.histogram_edges.clone())?);
    let tokens = slice(reports, &SliceSpec::new(SliceKey::TokenCount, r.token_edges.clone())?, &r.thresholds);
    let baseline =
        slice(reports, &SliceSpec::new(SliceKey::BaselineAccuracy, r.baseline_edges.clone())?, &r.thresholds);
    let summary = summarize_with_gate(reports, &r.thresholds, Some(&cfg.gate));
    let mut files = vec![("histogram.csv", format_histogram_csv(&hist))];
    if r.svg {
        files.push(("histogram.svg", histogram_svg(&hist, &format!("delta accuracy, n = {}", reports.len()))));
    }
    files.push(("slice_token_count.csv", format_slice_csv(&tokens)));
    files.push(("slice_baseline_accuracy.csv", format_slice_csv(&baseline)));
    files.push(("summary.txt", format_summary(&summary)));
    Ok(files)
}

pub fn run_fpe(cfg: &ExperimentConfig, out: &Path) -> CliResult<()> {
    let population = load_population(cfg, out)?;
    let global = load_checkpoint(&cfg.checkpoint_path(out), cfg)?;
    let mut runs: Vec<(PersonalizationStrategy, Vec<MetricReport>)> = Vec::new();
    let mut files: Vec<(PathBuf, String)> = Vec::new();
    for s in &cfg.fpe.strategies {
        let run = run_sweep_cell(&global, &population, s)?;
        let label = label_with_fraction(s);
        let mean = summarize_with_gate(&run.reports, &cfg.report.thresholds, None).mean_delta;
        note(format!(
            "{label}: {} reports, {} skipped, mean delta {}",
            run.reports.len(),
            run.skipped,
            mean.map_or("NA".into(), |d| format!("{d:.4}"))
        ));
        let dir = out.join("fpe").join(&label);
        files.push((dir.join("reports.csv"), format_reports_csv(&run.reports)));
        for (name, text) in aggregate_artifacts(&run.reports, cfg)? {
            files.push((dir.join(name), text));
        }
        runs.push((*s, run.reports));
    }
    let rows = sweep_table(&runs, &cfg.report.thresholds);
    files.push((out.join("fpe").join("sweep.csv"), format_sweep_csv(&rows, cfg.report.thresholds[0])));
    for (path, text) in files {
        write_atomic(&path, text.as_bytes())?;
    }
    Ok(())
}

/// Recomputes one strategy's aggregates from its reports CSV.
pub fn report(cfg: &ExperimentConfig, input: &Path, out: Option<&Path>) -> CliResult<()> {
    let input = if input.is_dir() { input.join("reports.csv") } else { input.to_path_buf() };
    let reports = parse_reports_csv(&read_text(&input)?).map_err(|e| CliError::in_file(&input, e))?;
    let dir = match out {
        Some(d) => d.to_path_buf(),
        None => input.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf),
    };
    for (name, text) in aggregate_artifacts(&reports, cfg)? {
        write_atomic(&dir.join(name), text.as_bytes())?;
    }
    note(format!("aggregated {} reports into {}", reports.len(), dir.display()));
    Ok(())
}
