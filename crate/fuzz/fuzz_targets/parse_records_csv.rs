#![no_main]

use libfuzzer_sys::fuzz_target;
use qubo_gcs::bench::parse_records;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = parse_records(text);
    }
});
