#![no_main]

use libfuzzer_sys::fuzz_target;
use nutripred::model::NutritionModel;

fuzz_target!(|data: &[u8]| {
    let _ = NutritionModel::weights_from_bytes(data);
});
