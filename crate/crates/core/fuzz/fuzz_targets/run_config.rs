#![no_main]

use libfuzzer_sys::fuzz_target;
use nutripred::cli::TrainArgs;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(args) = TrainArgs::from_json(text) {
        let _ = args.resolve();
    }
});
