#![no_main]

use libfuzzer_sys::fuzz_target;
use obstakit::config::{parse_args, resolve};

// Input: NUL-separated argument list, optionally followed by `\x01` and
// the text of a config file.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let (args, file) = match text.split_once('\u{1}') {
        Some((a, f)) => (a, Some(f)),
        None => (text, None),
    };
    let args: Vec<&str> = args.split('\0').collect();
    if let Ok(inv) = parse_args(&args) {
        let _ = resolve(&inv, file);
    }
});
