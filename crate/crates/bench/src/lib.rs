//! Inputs shared by the benchmarks in `benches/`.

use std::path::PathBuf;

use roa_core::model::load_model_file;
use roa_core::SystemModel;

/// A model shipped with the command-line crate, by file name.
pub fn shipped_model(file: &str) -> SystemModel {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../cli/examples").join(file);
    load_model_file(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}
