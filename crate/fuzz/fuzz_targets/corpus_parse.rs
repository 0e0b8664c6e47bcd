#![no_main]

use fedpe::synthdata::{ingest_corpus_text, parse_corpus};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = parse_corpus(text);
        if let Ok((vocab, clients)) = ingest_corpus_text(text, 16) {
            assert!(vocab.len() <= 16);
            for c in &clients {
                assert!(c.sentences().iter().flatten().all(|&t| (t as usize) < vocab.len()));
            }
        }
    }
});
