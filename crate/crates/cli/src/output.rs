use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::CliError;

/// Environment variable that overrides the manifest's output directory.
pub const OUT_DIR_ENV: &str = "CAPABOOST_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "capaboost-out";

/// Flag, then environment, then manifest, then the default.
pub fn resolve_out_dir(flag: Option<&Path>, env: Option<&Path>, manifest: Option<&Path>) -> PathBuf {
    flag.or(env)
        .or(manifest)
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

/// Collects written files under one directory.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    written: Vec<PathBuf>,
}

impl OutputDir {
    pub fn create(root: PathBuf) -> Result<Self, CliError> {
        std::fs::create_dir_all(&root)?;
        Ok(Self {
            root,
            written: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    /// Writes `contents` to `root/rel` through a temporary file in the same
    /// directory and a rename, so readers never see a partial file.
    pub fn write(&mut self, rel: &str, contents: &str) -> Result<PathBuf, CliError> {
        let path = self.root.join(rel);
        let dir = path.parent().unwrap_or(&self.root).to_path_buf();
        std::fs::create_dir_all(&dir)?;
        let mut tmp = tempfile::NamedTempFile::new_in(&dir)?;
        tmp.write_all(contents.as_bytes())?;
        tmp.as_file().sync_all()?;
        tmp.persist(&path).map_err(|e| CliError::Io(e.error))?;
        self.written.push(path.clone());
        Ok(path)
    }

    pub fn write_json<T: serde::Serialize>(&mut self, rel: &str, value: &T) -> Result<PathBuf, CliError> {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| CliError::Numeric(format!("serialization failed: {e}")))?;
        text.push('\n');
        self.write(rel, &text)
    }
}
