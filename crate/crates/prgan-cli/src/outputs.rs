//! Tracks files and directories a command creates so they can be removed if
//! the command fails.

use std::fs;
use std::path::{Path, PathBuf};

#[derive(Default)]
pub struct Outputs {
    files: Vec<PathBuf>,
    dirs: Vec<PathBuf>,
    committed: bool,
}

impl Outputs {
    pub fn new() -> Self {
        Self::default()
    }

    /// Creates `dir` if missing; a directory created here is removed on failure.
    pub fn dir(&mut self, dir: &Path) -> std::io::Result<()> {
        if !dir.exists() {
            fs::create_dir_all(dir)?;
            self.dirs.push(dir.to_path_buf());
        }
        Ok(())
    }

    /// Registers `path` as an output unless it already existed.
    pub fn file<'a>(&mut self, path: &'a Path) -> &'a Path {
        if !path.exists() {
            self.files.push(path.to_path_buf());
        }
        path
    }

    pub fn commit(mut self) {
        self.committed = true;
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for f in &self.files {
            let _ = fs::remove_file(f);
        }
        for d in self.dirs.iter().rev() {
            let _ = fs::remove_dir_all(d);
        }
    }
}
