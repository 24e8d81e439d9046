#![no_main]
use libfuzzer_sys::fuzz_target;

use frozen_perc::bethe_sim::RealizationDump;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(dump) = RealizationDump::from_json(text) else { return };
    let verdict = dump.validate();
    let back = RealizationDump::from_json(&dump.to_json()).expect("re-encoded dump decodes");
    assert_eq!(back, dump);
    assert_eq!(back.validate(), verdict);
});
