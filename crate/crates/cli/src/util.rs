//! Small filesystem and output helpers.

use std::path::{Path, PathBuf};

use anyhow::Context;

/// Writes through a temp file in the same directory, then renames, so
/// readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let tmp = tmp_path(path);
    std::fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

/// Runs a writer callback against a temp path, then renames the result in.
pub fn write_atomic_with(
    path: &Path,
    write: impl FnOnce(&Path) -> gridfuse::Result<()>,
) -> anyhow::Result<()> {
    let tmp = tmp_path(path);
    write(&tmp).with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

fn tmp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".tmp");
    path.with_file_name(name)
}

pub fn ensure_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(())
}

/// Builds the global rayon pool honoring `--jobs` (0 keeps the default).
pub fn init_threads(jobs: usize) -> anyhow::Result<()> {
    if jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .context("initializing worker threads")?;
    }
    Ok(())
}
