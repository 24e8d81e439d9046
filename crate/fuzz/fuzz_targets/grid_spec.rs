#![no_main]
use libfuzzer_sys::fuzz_target;

use frozen_perc::cli::{parse_grid, parse_range};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(grid) = parse_grid(text) {
        assert!(!grid.is_empty());
        assert!(grid.iter().all(|t| t.is_finite()));
    }
    if let Ok(range) = parse_range(text) {
        assert!(!range.is_empty());
    }
});
