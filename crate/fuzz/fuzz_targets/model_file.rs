#![no_main]

use libfuzzer_sys::fuzz_target;
use scope_refine::model::{decode_model, encode_model};

fuzz_target!(|data: &[u8]| {
    if let Ok(model) = decode_model(data) {
        let bytes = encode_model(&model);
        assert!(decode_model(&bytes).is_ok());
    }
});
