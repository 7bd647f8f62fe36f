//! Output directory handling: an exclusive lock file and write-then-rename.

use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

pub const LOCK_FILE: &str = ".mixrec.lock";

/// Holds `LOCK_FILE` inside the output directory until dropped.
pub struct OutDir {
    root: PathBuf,
    lock: PathBuf,
}

impl OutDir {
    pub fn lock(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        let lock = root.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&lock) {
            Ok(_) => Ok(Self {
                root: root.to_path_buf(),
                lock,
            }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => bail!(
                "{} is locked by another mixrec process (delete {} if it is stale)",
                root.display(),
                lock.display()
            ),
            Err(e) => Err(e).with_context(|| format!("creating {}", lock.display())),
        }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Writes `contents` next to the target and renames it into place.
    pub fn write(&self, name: &str, contents: &str) -> Result<PathBuf> {
        let path = self.path(name);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        let tmp = path.with_extension("partial");
        fs::write(&tmp, contents).with_context(|| format!("writing {}", tmp.display()))?;
        fs::rename(&tmp, &path).with_context(|| format!("renaming into {}", path.display()))?;
        Ok(path)
    }

    /// Fills a fresh directory via `fill`, then swaps it in for `name`.
    pub fn write_dir(&self, name: &str, fill: impl FnOnce(&Path) -> Result<()>) -> Result<PathBuf> {
        let path = self.path(name);
        let tmp = self.path(&format!("{name}.partial"));
        if tmp.exists() {
            fs::remove_dir_all(&tmp)?;
        }
        fill(&tmp)?;
        if path.exists() {
            fs::remove_dir_all(&path).with_context(|| format!("replacing {}", path.display()))?;
        }
        fs::rename(&tmp, &path).with_context(|| format!("renaming into {}", path.display()))?;
        Ok(path)
    }
}

impl Drop for OutDir {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.lock);
    }
}
