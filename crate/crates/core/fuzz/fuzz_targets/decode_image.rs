#![no_main]

use libfuzzer_sys::fuzz_target;
use nutripred::dataio::decode_image_bytes;

fuzz_target!(|data: &[u8]| {
    if let Ok(img) = decode_image_bytes(data, 16, "fuzz") {
        assert_eq!(img.pixels.len(), 3 * 16 * 16);
        assert!(img.pixels.iter().all(|v| (0.0..=1.0).contains(v)));
    }
});
