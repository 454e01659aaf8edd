#![no_main]

use std::sync::OnceLock;

use libfuzzer_sys::fuzz_target;
use scope_refine::model::wire::handle_line;
use scope_refine::model::{decode_model, ModelHandle};

static MODEL: OnceLock<ModelHandle> = OnceLock::new();

fuzz_target!(|data: &[u8]| {
    let model = MODEL.get_or_init(|| {
        decode_model(include_bytes!("../corpus/model_file/tiny.srm")).expect("seed model decodes")
    });
    let Ok(line) = std::str::from_utf8(data) else { return };
    let reply = handle_line(model, line);
    let v: serde_json::Value = serde_json::from_str(&reply).expect("reply is JSON");
    assert!(v.get("id").is_some());
});
