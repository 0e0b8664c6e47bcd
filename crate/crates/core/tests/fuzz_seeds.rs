use std::fs;
use std::path::PathBuf;

use fedpe::aggregate::parse_reports_csv;
use fedpe::fpe::{parse_sweep, PersonalizationStrategy};
use fedpe::model::checkpoint;
use fedpe::synthdata::parse_corpus;
use fedpe::Vocabulary;

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    out
}

fn text(bytes: &[u8]) -> &str {
    std::str::from_utf8(bytes).unwrap()
}

#[test]
fn checkpoint_seeds() {
    for (name, bytes) in seeds("checkpoint_decode") {
        assert_eq!(checkpoint::decode(&bytes).is_ok(), name == "small.bin", "{name}");
    }
}

#[test]
fn text_seeds_parse() {
    for (_, b) in seeds("corpus_parse") {
        assert_eq!(parse_corpus(text(&b)).unwrap().len(), 2);
    }
    for (_, b) in seeds("reports_csv") {
        parse_reports_csv(text(&b)).unwrap();
    }
    for (_, b) in seeds("vocab_parse") {
        assert_eq!(Vocabulary::parse(text(&b)).unwrap().len(), 12);
    }
    for (name, b) in seeds("strategy_parse") {
        match name.as_str() {
            "sweep.txt" => assert_eq!(parse_sweep(text(&b)).unwrap().len(), 2),
            _ => assert_eq!(PersonalizationStrategy::parse(text(&b)).unwrap().batch_size, 5),
        }
    }
}
