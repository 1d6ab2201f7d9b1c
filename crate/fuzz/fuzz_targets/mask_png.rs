#![no_main]

use libfuzzer_sys::fuzz_target;
use stripe_core::io::{decode_mask_png, encode_mask_png};

fuzz_target!(|data: &[u8]| {
    if let Ok(mask) = decode_mask_png(data) {
        let bytes = encode_mask_png(&mask).expect("decoded masks encode");
        assert_eq!(decode_mask_png(&bytes).unwrap(), mask);
    }
});
