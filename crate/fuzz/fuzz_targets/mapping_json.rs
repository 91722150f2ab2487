#![no_main]
use libfuzzer_sys::fuzz_target;
use wienerchaos::mappingzoo::MappingSpec;

fuzz_target!(|data: &[u8]| {
    if let Ok(spec) = serde_json::from_slice::<MappingSpec>(data) {
        if spec.validate().is_ok() {
            let _ = spec.signal_variance();
        }
    }
});
