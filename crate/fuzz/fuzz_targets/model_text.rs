#![no_main]

use libfuzzer_sys::fuzz_target;
use stripe_core::detect::LiteModel;

fuzz_target!(|data: &str| {
    if let Ok(m) = LiteModel::from_text(data) {
        assert_eq!(LiteModel::from_text(&m.to_text()).unwrap(), m);
    }
});
