//! Configuration, the HTTP API and the REPL.

use std::path::{Path, PathBuf};

use crate::blade::fixture::{SyntheticBlade, DEFAULT_SEED};

pub mod api;
pub mod config;
pub mod repl;

pub use config::{AppConfig, ConfigError};

pub const FIXTURE_INSPECTION: &str = "Inspection_Aggregated.csv";
pub const FIXTURE_PATHING: &str = "pathing.csv";

/// Write the synthetic blade's inspection and pathing files into `dir`;
/// returns their paths.
pub fn write_fixture(dir: &Path) -> std::io::Result<[PathBuf; 2]> {
    std::fs::create_dir_all(dir)?;
    let blade = SyntheticBlade::generate(DEFAULT_SEED);
    let (i, p) = (dir.join(FIXTURE_INSPECTION), dir.join(FIXTURE_PATHING));
    std::fs::write(&i, blade.inspection.to_csv())?;
    std::fs::write(&p, blade.pathing.to_csv())?;
    Ok([i, p])
}
