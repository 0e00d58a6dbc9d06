#![no_main]

use collapse_cli::config::parse_config;
use libfuzzer_sys::fuzz_target;

// Any accepted config must survive canonicalization unchanged.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = parse_config(text, &[]) {
        let again = parse_config(&cfg.canonical_text(), &[]).expect("canonical text parses");
        assert_eq!(again, cfg);
        assert_eq!(again.digest(), cfg.digest());
    }
});
