#![no_main]

use fedpe_cli::ExperimentConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = ExperimentConfig::parse(text, None) {
            let again = ExperimentConfig::parse(&cfg.canonical(), None).expect("canonical form must parse");
            assert_eq!(cfg.hash(), again.hash());
        }
    }
});
