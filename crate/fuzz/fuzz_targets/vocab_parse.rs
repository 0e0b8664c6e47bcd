#![no_main]

use fedpe::Vocabulary;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(vocab) = Vocabulary::parse(text) {
            let again = Vocabulary::parse(&vocab.to_text()).expect("serialized vocab must parse");
            assert_eq!(vocab.len(), again.len());
        }
    }
});
