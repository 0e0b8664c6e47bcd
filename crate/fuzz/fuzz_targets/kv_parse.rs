#![no_main]

use fedpe::kv::KvMap;
use fedpe::synthdata::PopulationSpec;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = KvMap::parse(text);
        let _ = PopulationSpec::parse(text);
    }
});
