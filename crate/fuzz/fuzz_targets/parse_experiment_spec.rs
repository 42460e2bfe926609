#![no_main]

use libfuzzer_sys::fuzz_target;
use qubo_gcs::bench::ExperimentSpec;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(spec) = ExperimentSpec::parse(text) {
        let again = ExperimentSpec::parse(&spec.render()).expect("canonical form parses");
        assert_eq!(again.digest(), spec.digest());
    }
});
