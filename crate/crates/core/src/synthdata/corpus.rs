//! JSONL corpora: one client per line,
//! `{"client_id": "...", "sentences": [["tok", ...], ...]}`, sentences in
//! temporal order.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::ClientDataset;
use crate::error::{Error, Result};
use crate::model::{TokenId, Vocabulary, OOV, RESERVED_TOKENS};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawClient {
    pub client_id: String,
    pub sentences: Vec<Vec<String>>,
}

pub fn parse_corpus(text: &str) -> Result<Vec<RawClient>> {
    let mut clients = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let client: RawClient = serde_json::from_str(line).map_err(|e| Error::parse(lineno, e.to_string()))?;
        if let Some(pos) = client.sentences.iter().position(Vec::is_empty) {
            return Err(Error::parse(lineno, format!("sentence {pos} of client `{}` is empty", client.client_id)));
        }
        if client.sentences.iter().flatten().any(|t| t.is_empty() || t.chars().any(char::is_whitespace)) {
            return Err(Error::parse(lineno, "tokens must be non-empty and contain no whitespace"));
        }
        if !seen.insert(client.client_id.clone()) {
            return Err(Error::parse(lineno, format!("duplicate client_id `{}`", client.client_id)));
        }
        clients.push(client);
    }
    if clients.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok(clients)
}

fn is_reserved(token: &str) -> bool {
    RESERVED_TOKENS.contains(&token)
}

/// Top `vocab_size - 3` words by frequency, ties broken lexicographically.
fn build_vocabulary(clients: &[RawClient], vocab_size: usize) -> Result<Vocabulary> {
    if vocab_size < 4 {
        return Err(Error::config(format!("vocab_size must be at least 4, got {vocab_size}")));
    }
    let mut freq: HashMap<&str, u64> = HashMap::new();
    for tok in clients.iter().flat_map(|c| c.sentences.iter().flatten()) {
        if !is_reserved(tok) {
            *freq.entry(tok.as_str()).or_default() += 1;
        }
    }
    let mut ranked: Vec<(&str, u64)> = freq.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    ranked.truncate(vocab_size - RESERVED_TOKENS.len());
    if ranked.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Vocabulary::from_words(ranked.into_iter().map(|(w, _)| w.to_string()))
}

fn token_id(vocab: &Vocabulary, token: &str) -> TokenId {
    if is_reserved(token) {
        OOV
    } else {
        vocab.id(token)
    }
}

/// Maps raw clients through an existing vocabulary. Client ids are line order.
pub fn map_corpus(clients: &[RawClient], vocab: &Vocabulary) -> Vec<ClientDataset> {
    clients
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let sentences = c.sentences.iter().map(|s| s.iter().map(|t| token_id(vocab, t)).collect()).collect();
            ClientDataset::new(i as u64, sentences)
        })
        .collect()
}

pub fn ingest_corpus_text(text: &str, vocab_size: usize) -> Result<(Vocabulary, Vec<ClientDataset>)> {
    let clients = parse_corpus(text)?;
    let vocab = build_vocabulary(&clients, vocab_size)?;
    let datasets = map_corpus(&clients, &vocab);
    Ok((vocab, datasets))
}

pub fn ingest_corpus(path: &Path, vocab_size: usize) -> Result<(Vocabulary, Vec<ClientDataset>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ingest_corpus_text(&text, vocab_size)
}

/// Writes datasets as JSONL; `client_id` is the decimal dataset id.
pub fn emit_corpus(vocab: &Vocabulary, datasets: &[ClientDataset]) -> Result<String> {
    let mut out = String::new();
    for d in datasets {
        let sentences = d
            .sentences()
            .iter()
            .map(|s| {
                s.iter()
                    .map(|&t| {
                        vocab
                            .token(t)
                            .map(str::to_string)
                            .ok_or(Error::TokenOutOfRange { token: t, vocab_size: vocab.len() })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let raw = RawClient { client_id: d.id.to_string(), sentences };
        out.push_str(&serde_json::to_string(&raw).expect("serializable"));
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"{"client_id": "a", "sentences": [["the", "cat", "sat"], ["the", "dog"]]}
{"client_id": "b", "sentences": [["a", "cat"]]}
"#;

    #[test]
    fn all_words_fit() {
        let (vocab, data) = ingest_corpus_text(SMALL, 8).unwrap();
        assert_eq!(vocab.len(), 8);
        assert!(data.iter().flat_map(|d| d.sentences().iter().flatten()).all(|&t| t != OOV));
        // frequency order: cat(2), the(2) tie -> lexicographic; then a, dog, sat
        assert_eq!(&vocab.tokens()[3..], ["cat", "the", "a", "dog", "sat"]);
        assert_eq!(data[0].sentences()[0], vec![4, 3, 7]);
    }

    #[test]
    fn one_word_slot() {
        let (vocab, data) = ingest_corpus_text(SMALL, 4).unwrap();
        assert_eq!(vocab.tokens()[3], "cat");
        let flat: Vec<TokenId> = data.iter().flat_map(|d| d.sentences().iter().flatten().copied()).collect();
        assert_eq!(flat.iter().filter(|&&t| t == 3).count(), 2);
        assert!(flat.iter().all(|&t| t == 3 || t == OOV));
    }

    #[test]
    fn reingest_identical() {
        assert_eq!(ingest_corpus_text(SMALL, 6).unwrap(), ingest_corpus_text(SMALL, 6).unwrap());
    }

    #[test]
    fn malformed_input() {
        let bad = "{\"client_id\": \"a\", \"sentences\": [[\"x\"]]}\n{not json\n";
        assert!(matches!(parse_corpus(bad), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_corpus("\n\n"), Err(Error::EmptyCorpus)));
        assert!(parse_corpus(r#"{"client_id": "a", "sentences": [[]]}"#).is_err());
        assert!(parse_corpus(r#"{"client_id": "a", "sentences": [["x y"]]}"#).is_err());
        assert!(parse_corpus(r#"{"client_id": "a", "sentences": [], "extra": 1}"#).is_err());
        let dup = "{\"client_id\": \"a\", \"sentences\": []}\n{\"client_id\": \"a\", \"sentences\": []}\n";
        assert!(matches!(parse_corpus(dup), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn reserved_forms_are_oov() {
        let text = r#"{"client_id": "a", "sentences": [["<s>", "hi", "</s>"]]}"#;
        let (vocab, data) = ingest_corpus_text(text, 10).unwrap();
        assert_eq!(vocab.len(), 4);
        assert_eq!(data[0].sentences()[0], vec![OOV, 3, OOV]);
    }

    #[test]
    fn emit_then_map() {
        let vocab = Vocabulary::synthetic(10).unwrap();
        let data = vec![ClientDataset::new(0, vec![vec![3, 9, 4]]), ClientDataset::new(1, vec![vec![5]])];
        let text = emit_corpus(&vocab, &data).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert_eq!(map_corpus(&parse_corpus(&text).unwrap(), &vocab), data);
        let bad = vec![ClientDataset::new(0, vec![vec![42]])];
        assert!(emit_corpus(&vocab, &bad).is_err());
    }
}
