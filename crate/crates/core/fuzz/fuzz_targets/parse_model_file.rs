#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(m) = lqdisc::cli::parse_model_file(data) {
        // accepted models are internally consistent
        assert!(m.validate().is_empty());
        assert_eq!(m.inputs.len(), m.targets.len());
    }
});
