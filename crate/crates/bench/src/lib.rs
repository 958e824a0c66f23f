//! Shared fixtures for the benchmarks.

use std::path::{Path, PathBuf};

use gsf_core::io::{read_json, TableDocument};
use gsf_core::{CountTable, SimConfig};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data").join(name)
}

/// The three-wave party identification panel.
pub fn anes() -> CountTable {
    let doc: TableDocument = read_json(&data("anes.json")).expect("fixture present");
    doc.to_table().expect("fixture is valid")
}

/// A power-study scenario from the fixtures, `row` in 1..=8.
pub fn scenario(row: usize) -> SimConfig {
    read_json(&data(&format!("scenario{row}.json"))).expect("fixture present")
}
