//! Replays the checked-in fuzz seeds through the same assertions as the
//! fuzz targets.

use std::fs;
use std::path::PathBuf;

use collapse_cli::config::{parse_config, parse_override};
use collapse_cli::output::{parse_row_line, trajectory_jsonl};

fn seeds(target: &str) -> Vec<(PathBuf, String)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let path = e.unwrap().path();
            let text = fs::read_to_string(&path).unwrap();
            (path, text)
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

#[test]
fn config_seeds_round_trip() {
    let mut accepted = 0;
    for (path, text) in seeds("config_parse") {
        if let Ok(cfg) = parse_config(&text, &[]) {
            let again = parse_config(&cfg.canonical_text(), &[]).unwrap();
            assert_eq!(again, cfg, "{}", path.display());
            accepted += 1;
        }
    }
    assert!(accepted >= 3);
}

#[test]
fn override_seeds_parse() {
    for (path, spec) in seeds("override_parse") {
        parse_override(&spec).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    }
}

#[test]
fn row_seeds_round_trip() {
    let mut accepted = 0;
    for (_, line) in seeds("trajectory_row") {
        if let Ok(row) = parse_row_line(&line) {
            let written = trajectory_jsonl(std::slice::from_ref(&row)).unwrap();
            assert_eq!(parse_row_line(written.trim_end()).unwrap(), row);
            accepted += 1;
        }
    }
    assert_eq!(accepted, 2);
}
