//! Command orchestration: configuration, artifact files and the end-to-end
//! commands behind the `niche` binary.

mod artifacts;
mod commands;
mod config;

pub use artifacts::{
    file_sha256, header_line, read_csv_file, write_atomic, ArtifactDir, TOOL_VERSION,
};
pub use commands::*;
pub use config::{PipelineConfig, ENV_OVERRIDES, PATH_KEYS};
