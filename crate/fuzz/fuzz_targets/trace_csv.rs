#![no_main]
use libfuzzer_sys::fuzz_target;
use wienerchaos::glselect::{parse_traces_csv, write_traces_csv};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(traces) = parse_traces_csv(text) {
        let mut out = Vec::new();
        write_traces_csv(&traces, &mut out).unwrap();
        assert_eq!(
            parse_traces_csv(std::str::from_utf8(&out).unwrap()).unwrap().len(),
            traces.len()
        );
    }
});
