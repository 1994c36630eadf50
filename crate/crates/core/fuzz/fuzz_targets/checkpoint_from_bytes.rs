#![no_main]

use libfuzzer_sys::fuzz_target;
use nutripred::training::Checkpoint;

fuzz_target!(|data: &[u8]| {
    if let Ok(ckpt) = Checkpoint::from_bytes(data) {
        let _ = ckpt.model();
    }
});
