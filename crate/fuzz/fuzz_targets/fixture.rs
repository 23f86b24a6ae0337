#![no_main]

use libfuzzer_sys::fuzz_target;
use obstakit::oracles::{format_fixture, parse_fixture};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(f) = parse_fixture(text) {
        assert_eq!(parse_fixture(&format_fixture(&f)).unwrap(), f);
    }
});
