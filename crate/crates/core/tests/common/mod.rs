#![allow(dead_code)]

use std::path::PathBuf;

use mebn::mapper::{parse_rules, prepare_rule_database, CausalRule};
use mebn::relational::{er_normalize, load_database, Database};

pub fn fixture_dir(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn load(name: &str) -> Database {
    let dir = fixture_dir(name);
    load_database(&dir.join("manifest.txt"), &dir).unwrap()
}

pub fn load_normalized(name: &str) -> Database {
    er_normalize(&load(name)).unwrap()
}

pub fn script(name: &str) -> String {
    std::fs::read_to_string(fixture_dir("scripts").join(name)).unwrap()
}

/// Normalized fixture database prepared for its rules file, plus the parsed rules.
pub fn with_rules(name: &str) -> (Database, Vec<CausalRule>) {
    let db = load_normalized(name);
    let text = std::fs::read_to_string(fixture_dir(name).join("rules.txt")).unwrap();
    let rules = parse_rules(&text, &db).unwrap();
    let db = prepare_rule_database(&db, &rules).unwrap();
    (db, rules)
}
pub mod oracles;
pub mod scripts;
pub mod joined;
