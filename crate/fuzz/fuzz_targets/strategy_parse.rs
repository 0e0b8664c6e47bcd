#![no_main]

use fedpe::fpe::{parse_sweep, PersonalizationStrategy};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = PersonalizationStrategy::parse(text);
        if let Ok(strategies) = parse_sweep(text) {
            for s in strategies {
                assert!(s.batch_size >= 1);
            }
        }
    }
});
