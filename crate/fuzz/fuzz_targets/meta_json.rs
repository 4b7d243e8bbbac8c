#![no_main]

use brite::phantom::SequenceMeta;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(meta) = SequenceMeta::from_json(text) {
            meta.validate().expect("parsed metadata is valid");
        }
    }
});
