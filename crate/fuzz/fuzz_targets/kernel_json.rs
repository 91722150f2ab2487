#![no_main]
use libfuzzer_sys::fuzz_target;
use wienerchaos::kernelkit::{KernelDescriptor, MomentKernel};

fuzz_target!(|data: &[u8]| {
    if let Ok(desc) = serde_json::from_slice::<KernelDescriptor>(data) {
        if let Ok(k) = MomentKernel::try_from(desc) {
            let _ = k.eval(0.5);
            let _ = k.l2_norm();
        }
    }
});
