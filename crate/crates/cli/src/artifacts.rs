//! Output directory handling.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::CliError;

/// Writes run outputs and remembers their names for the manifest.
#[derive(Debug)]
pub struct Artifacts {
    dir: PathBuf,
    csv: bool,
    json: bool,
    files: Vec<String>,
}

impl Artifacts {
    pub fn create(dir: &Path, csv: bool, json: bool) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Write {
            path: dir.to_path_buf(),
            reason: e.to_string(),
        })?;
        Ok(Artifacts {
            dir: dir.to_path_buf(),
            csv,
            json,
            files: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Names written so far, in order.
    pub fn files(&self) -> &[String] {
        &self.files
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents).map_err(|e| CliError::Write {
            path,
            reason: e.to_string(),
        })?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn csv(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        if self.csv {
            self.write(name, contents)?;
        }
        Ok(())
    }

    /// Pretty JSON; floats keep full round-trip precision.
    pub fn json(&mut self, name: &str, value: &impl Serialize) -> Result<(), CliError> {
        if self.json {
            self.always_json(name, value)?;
        }
        Ok(())
    }

    /// JSON written whatever the configured formats (manifest, timing, errors).
    pub fn always_json(&mut self, name: &str, value: &impl Serialize) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Write {
            path: self.dir.join(name),
            reason: e.to_string(),
        })?;
        text.push('\n');
        self.write(name, &text)
    }
}
