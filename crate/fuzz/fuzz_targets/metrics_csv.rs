#![no_main]

use brite::harness::{aggregate, parse_metrics_csv, ranking};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(records) = parse_metrics_csv(data) {
        let rows = aggregate(&records);
        let _ = ranking(&rows);
    }
});
