#![no_main]
use libfuzzer_sys::fuzz_target;
use lqdisc::{Method, Scheme};

fuzz_target!(|data: &str| {
    if let Ok(m) = data.parse::<Method>() {
        assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
    }
    if let Ok(s) = data.parse::<Scheme>() {
        assert_eq!(s.name(), data);
    }
    let _ = lqdisc::cli::parse_schemes(data);
});
