use std::fs;
use std::path::Path;

use imos::fsutil::write_atomic;

use crate::config::{RunConfig, SNAPSHOT_FILE};
use crate::error::{io_error, CliError};

/// Files for one run, assembled in memory so that a failure leaves nothing behind.
#[derive(Default)]
pub(crate) struct Outputs {
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    pub(crate) fn add(&mut self, name: impl Into<String>, bytes: impl Into<Vec<u8>>) {
        self.files.push((name.into(), bytes.into()));
    }

    /// Writes every file plus the resolved configuration into `config.output`.
    pub(crate) fn commit(mut self, config: &RunConfig) -> Result<(), CliError> {
        self.add(SNAPSHOT_FILE, config.to_toml());
        let dir = &config.output;
        fs::create_dir_all(dir).map_err(io_error(dir))?;
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            if let Some(parent) = Path::new(name).parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(dir.join(parent)).map_err(io_error(dir.join(parent)))?;
            }
            write_atomic(&path, bytes).map_err(io_error(&path))?;
        }
        Ok(())
    }
}
