#![no_main]

use libfuzzer_sys::fuzz_target;
use qubo_gcs::qubo::{parse_instance, render_instance};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(inst) = parse_instance(text) {
        // anything accepted must survive a render/parse round trip
        let again = parse_instance(&render_instance(&inst, &[])).expect("rendered instance parses");
        assert_eq!(again, inst);
    }
});
