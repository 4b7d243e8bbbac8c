//! Runs the fuzz-target invariants over the checked-in corpus seeds, so the
//! decoders are exercised on every `cargo test` without a fuzzing toolchain.

use std::fs;
use std::path::PathBuf;

use brite::harness::{aggregate, parse_metrics_csv, ranking, ExperimentConfig};
use brite::phantom::SequenceMeta;
use brite::tagseq::Container;

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

#[test]
fn tagseq_seeds() {
    let mut decoded = 0;
    for (name, bytes) in seeds("tagseq_decode") {
        if let Ok(c) = Container::decode(&bytes) {
            assert_eq!(c.encode().unwrap(), bytes, "{name}");
            decoded += 1;
        }
    }
    assert!(decoded >= 2);
    assert!(Container::decode(&seeds("tagseq_decode").iter().find(|s| s.0 == "truncated.tagseq").unwrap().1).is_err());
}

#[test]
fn meta_seeds() {
    let mut ok = 0;
    for (name, bytes) in seeds("meta_json") {
        let text = String::from_utf8(bytes).unwrap();
        match SequenceMeta::from_json(&text) {
            Ok(m) => {
                m.validate().unwrap();
                ok += 1;
            }
            Err(_) => assert!(name.starts_with("unsorted"), "{name} rejected"),
        }
    }
    assert_eq!(ok, 2);
}

#[test]
fn config_seeds() {
    for (name, bytes) in seeds("config_json") {
        let text = String::from_utf8(bytes).unwrap();
        match ExperimentConfig::from_json(&text) {
            Ok(cfg) => {
                let back = ExperimentConfig::from_json(&cfg.to_json().unwrap()).unwrap();
                assert_eq!(back, cfg, "{name}");
            }
            Err(_) => assert_eq!(name, "no_methods.json"),
        }
    }
}

#[test]
fn metrics_seeds() {
    for (name, bytes) in seeds("metrics_csv") {
        match parse_metrics_csv(&bytes) {
            Ok(records) => {
                let rows = aggregate(&records);
                let _ = ranking(&rows);
                if name == "grid.csv" {
                    assert!(!records.is_empty());
                }
            }
            Err(_) => assert_eq!(name, "wrong_header.csv"),
        }
    }
}
