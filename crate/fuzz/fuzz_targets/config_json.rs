#![no_main]

use brite::harness::ExperimentConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = ExperimentConfig::from_json(text) {
            let _ = cfg.evaluated_frames();
            let back = ExperimentConfig::from_json(&cfg.to_json().unwrap()).expect("serialized config parses");
            assert!(back.validate().is_ok());
        }
    }
});
