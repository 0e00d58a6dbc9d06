#![no_main]

use collapse_cli::config::{parse_config, parse_override};
use libfuzzer_sys::fuzz_target;

const BASE: &str = "a = 0.3\nb = 0.5\nN = 4\nmu0 = [0.25, 0.75]\n";

fuzz_target!(|data: &[u8]| {
    let Ok(spec) = std::str::from_utf8(data) else {
        return;
    };
    if parse_override(spec).is_ok() {
        let _ = parse_config(BASE, &[spec.to_string()]);
    }
});
