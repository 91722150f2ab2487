#![no_main]
use libfuzzer_sys::fuzz_target;
use wienerchaos::pathlab::{parse_path_csv, write_path_csv, BrownianPath};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok((grid, values)) = parse_path_csv(text) {
        assert_eq!(values.len(), grid.len());
        let mut out = Vec::new();
        write_path_csv(grid, &values, &mut out).unwrap();
        let (g2, v2) = parse_path_csv(std::str::from_utf8(&out).unwrap()).unwrap();
        assert_eq!(g2, grid);
        assert_eq!(v2.len(), values.len());
    }
    let _ = BrownianPath::from_csv(text);
});
