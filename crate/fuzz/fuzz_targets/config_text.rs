#![no_main]

use libfuzzer_sys::fuzz_target;
use obstakit::config::{parse_config_text, Command, RunConfig};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(pairs) = parse_config_text(text) else { return };
    for cmd in Command::ALL {
        let _ = RunConfig::from_pairs(cmd, &pairs);
    }
});
