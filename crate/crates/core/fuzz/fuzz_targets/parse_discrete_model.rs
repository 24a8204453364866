#![no_main]
use libfuzzer_sys::fuzz_target;
use lqdisc::cli::{discrete_to_json, parse_discrete_model};

fuzz_target!(|data: &str| {
    if let Ok(d) = parse_discrete_model(data) {
        let again = parse_discrete_model(&discrete_to_json(&d, None)).expect("written model parses");
        assert_eq!(again, d);
    }
});
