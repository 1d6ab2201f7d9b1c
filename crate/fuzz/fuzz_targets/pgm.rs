#![no_main]

use libfuzzer_sys::fuzz_target;
use stripe_core::io::{decode_pgm, encode_pgm16};

fuzz_target!(|data: &[u8]| {
    if let Ok(img) = decode_pgm(data) {
        // Whatever decodes must survive our own 16-bit encoding.
        let again = decode_pgm(&encode_pgm16(&img)).expect("re-encoded PGM decodes");
        assert_eq!(again.dims(), img.dims());
    }
});
