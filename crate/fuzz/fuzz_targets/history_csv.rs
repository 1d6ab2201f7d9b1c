#![no_main]

use libfuzzer_sys::fuzz_target;
use stripe_core::evolve::{history_to_csv, parse_history_csv};

fuzz_target!(|data: &str| {
    if let Ok(h) = parse_history_csv(data) {
        assert_eq!(parse_history_csv(&history_to_csv(&h)).unwrap(), h);
    }
});
