#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(img) = stripe_core::io::decode_png_gray(data) {
        assert!(img.data().iter().all(|x| (0.0..=1.0).contains(x)));
    }
});
