#![no_main]

use collapse_cli::output::{parse_row_line, trajectory_jsonl};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(line) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(row) = parse_row_line(line) {
        let written = trajectory_jsonl(std::slice::from_ref(&row)).expect("row serializes");
        if row.mu.iter().chain(&row.theta).all(|x| x.is_finite()) {
            let back = parse_row_line(written.trim_end()).expect("written row parses");
            assert_eq!(back, row);
        }
    }
});
