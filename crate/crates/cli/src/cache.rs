//! On-disk kernel cache.
//!
//! Files are named by a SHA-256 of what determines their contents. The directory is taken from
//! `VLQ_CACHE_DIR`, falling back to `.vlq-cache` in the working directory.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use vlq_core::fredholm::FeedbackKernel;
use vlq_core::kernel_io::{read_factored, read_feedback, write_factored, write_feedback};
use vlq_core::volterra::FactoredKernel;

use crate::config::hex;
use crate::error::{io_err, Result};

pub const CACHE_ENV: &str = "VLQ_CACHE_DIR";

#[derive(Debug, Clone)]
pub struct KernelCache {
    dir: PathBuf,
}

pub fn cache_key(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update([0u8]);
    }
    hex(&h.finalize())
}

impl KernelCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn from_env() -> Self {
        Self::new(std::env::var_os(CACHE_ENV).map(PathBuf::from).unwrap_or_else(|| ".vlq-cache".into()))
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, prefix: &str, key: &str) -> PathBuf {
        self.dir.join(format!("{prefix}-{key}.txt"))
    }

    /// Unreadable entries are recomputed and overwritten.
    pub fn factored(
        &self,
        key: &str,
        compute: impl FnOnce() -> vlq_core::Result<FactoredKernel>,
    ) -> Result<FactoredKernel> {
        let path = self.path("factored", key);
        if let Ok(f) = File::open(&path) {
            match read_factored(BufReader::new(f)) {
                Ok(k) => {
                    log::debug!("cache hit {}", path.display());
                    return Ok(k);
                }
                Err(e) => log::warn!("ignoring damaged cache entry {}: {e}", path.display()),
            }
        }
        let k = compute()?;
        self.store(&path, |w| write_factored(&k, w))?;
        Ok(k)
    }

    pub fn feedback(
        &self,
        key: &str,
        compute: impl FnOnce() -> vlq_core::Result<FeedbackKernel>,
    ) -> Result<FeedbackKernel> {
        let path = self.path("feedback", key);
        if let Ok(f) = File::open(&path) {
            match read_feedback(BufReader::new(f)) {
                Ok(k) => {
                    log::debug!("cache hit {}", path.display());
                    return Ok(k);
                }
                Err(e) => log::warn!("ignoring damaged cache entry {}: {e}", path.display()),
            }
        }
        let k = compute()?;
        self.store(&path, |w| write_feedback(&k, w))?;
        Ok(k)
    }

    /// Writes to a temporary name first so a crash never leaves a truncated entry behind.
    fn store(
        &self,
        path: &Path,
        write: impl FnOnce(&mut BufWriter<File>) -> vlq_core::Result<()>,
    ) -> Result<()> {
        std::fs::create_dir_all(&self.dir).map_err(io_err(&self.dir))?;
        let tmp = path.with_extension("tmp");
        let file = File::create(&tmp).map_err(io_err(&tmp))?;
        let mut w = BufWriter::new(file);
        write(&mut w)?;
        drop(w);
        std::fs::rename(&tmp, path).map_err(io_err(path))?;
        Ok(())
    }

    /// Removes cached kernels; returns how many files went.
    pub fn clear(&self) -> Result<usize> {
        let entries = match std::fs::read_dir(&self.dir) {
            Ok(e) => e,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(0),
            Err(e) => return Err(io_err(&self.dir)(e)),
        };
        let mut removed = 0;
        for entry in entries {
            let path = entry.map_err(io_err(&self.dir))?.path();
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
            if name.starts_with("factored-") || name.starts_with("feedback-") {
                std::fs::remove_file(&path).map_err(io_err(&path))?;
                removed += 1;
            }
        }
        Ok(removed)
    }
}
