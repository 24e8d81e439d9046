#![no_main]
use libfuzzer_sys::fuzz_target;

use frozen_perc::tree::SiteId;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(site) = text.parse::<SiteId>() {
        let again: SiteId = site.to_string().parse().expect("display output parses");
        assert_eq!(again, site);
        assert_eq!(SiteId::from_steps(&site.steps()).unwrap(), site);
        if let Some(parent) = site.parent() {
            assert!(parent.is_adjacent(site));
            assert!(parent.children().any(|c| c == site));
        }
    }
});
