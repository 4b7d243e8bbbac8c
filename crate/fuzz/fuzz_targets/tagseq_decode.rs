#![no_main]

use brite::tagseq::Container;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(c) = Container::decode(data) {
        // Anything that decodes must re-encode to the same bytes.
        let bytes = c.encode().expect("decoded container re-encodes");
        assert_eq!(bytes, data);
    }
});
