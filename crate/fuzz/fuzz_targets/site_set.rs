#![no_main]
use libfuzzer_sys::fuzz_target;

use frozen_perc::tree::{format_site_set, geometry_counts, parse_site_set, validate_connected};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(sites) = parse_site_set(text) else { return };
    assert_eq!(parse_site_set(&format_site_set(&sites)).unwrap(), sites);
    if validate_connected(&sites).is_ok() {
        let c = geometry_counts(&sites).unwrap();
        assert_eq!(c.n0 + c.n1 + c.n2, if sites.len() == 1 { 0 } else { sites.len() });
        if sites.len() > 1 {
            assert_eq!(c.n0 + 2, c.n2);
        }
    }
});
