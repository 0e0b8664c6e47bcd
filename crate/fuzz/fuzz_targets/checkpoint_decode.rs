#![no_main]

use fedpe::model::checkpoint;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(params) = checkpoint::decode(data) {
        let bytes = checkpoint::encode(&params);
        let again = checkpoint::decode(&bytes).expect("re-encoded checkpoint must decode");
        assert_eq!(params.shape(), again.shape());
        assert_eq!(bytes, checkpoint::encode(&again));
    }
});
