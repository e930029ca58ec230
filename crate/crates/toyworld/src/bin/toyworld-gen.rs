//! Regenerates the bundled fixtures, gold schemas and corpus.
//!
//! Usage: toyworld-gen [DATA_DIR]   (default: crates/core/data)

use std::path::PathBuf;

fn main() {
    let dir = std::env::args_os()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/data"));
    if let Err(e) = toyworld::generate(&dir) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
    println!("wrote {}", dir.display());
}
