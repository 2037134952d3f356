//! All-or-nothing output files: everything is written beside its final
//! name and renamed into place only once every file is complete.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

pub struct StagedOutputs {
    dir: PathBuf,
    staged: Vec<(PathBuf, PathBuf)>,
    committed: bool,
}

impl StagedOutputs {
    pub fn new(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)
            .with_context(|| format!("creating output directory {}", dir.display()))?;
        Ok(Self {
            dir,
            staged: Vec::new(),
            committed: false,
        })
    }

    /// Temporary path for the output `name`.
    pub fn path(&mut self, name: &str) -> PathBuf {
        let tmp = self
            .dir
            .join(format!(".{name}.partial-{}", std::process::id()));
        self.staged.push((tmp.clone(), self.dir.join(name)));
        tmp
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let tmp = self.path(name);
        fs::write(&tmp, contents).with_context(|| format!("writing {}", tmp.display()))
    }

    /// Final paths in staging order.
    pub fn final_paths(&self) -> Vec<PathBuf> {
        self.staged.iter().map(|(_, f)| f.clone()).collect()
    }

    pub fn commit(mut self) -> Result<Vec<PathBuf>> {
        let mut done: Vec<PathBuf> = Vec::new();
        for (tmp, dest) in &self.staged {
            if let Err(e) = fs::rename(tmp, dest) {
                for d in &done {
                    let _ = fs::remove_file(d);
                }
                return Err(e).with_context(|| format!("moving output into {}", dest.display()));
            }
            done.push(dest.clone());
        }
        self.committed = true;
        Ok(done)
    }
}

impl Drop for StagedOutputs {
    fn drop(&mut self) {
        if !self.committed {
            for (tmp, _) in &self.staged {
                let _ = fs::remove_file(tmp);
            }
        }
    }
}
