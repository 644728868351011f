use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

use crate::UsageError;

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    write_text(path, &(text + "\n"))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Builds a directory in a sibling temporary location and moves it to `out`
/// only once `fill` succeeds, so a failed run leaves nothing behind.
/// An existing empty `out` is replaced; a non-empty one is refused.
pub fn atomic_dir(out: &Path, fill: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    if out.exists() {
        let empty = fs::read_dir(out)
            .with_context(|| format!("inspecting {}", out.display()))?
            .next()
            .is_none();
        if !empty {
            return Err(UsageError(format!(
                "output directory {} already exists and is not empty",
                out.display()
            ))
            .into());
        }
    }
    let parent = match out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_owned(),
        _ => Path::new(".").to_owned(),
    };
    ensure_dir(&parent)?;
    let staging = tempfile::Builder::new()
        .prefix(".transa-staging-")
        .tempdir_in(&parent)
        .with_context(|| format!("creating staging directory in {}", parent.display()))?;
    fill(staging.path())?;
    if out.exists() {
        fs::remove_dir(out).with_context(|| format!("replacing {}", out.display()))?;
    }
    let staged = staging.keep();
    fs::rename(&staged, out).with_context(|| format!("moving output into {}", out.display()))?;
    Ok(())
}

/// Aligns tab-separated text into space-padded columns for the terminal.
pub fn align(tsv: &str) -> String {
    let rows: Vec<Vec<&str>> = tsv.lines().map(|l| l.split('\t').collect()).collect();
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| {
            rows.iter()
                .filter_map(|r| r.get(c))
                .map(|s| s.len())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for row in rows {
        let cells: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(i, cell)| format!("{cell:<w$}", w = widths[i]))
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn failed_fill_leaves_no_output() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        let err = atomic_dir(&out, |tmp| {
            write_text(&tmp.join("half.tsv"), "x")?;
            anyhow::bail!("boom")
        });
        assert!(err.is_err());
        assert!(!out.exists());
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
    }

    #[test]
    fn successful_fill_is_moved_into_place() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("nested").join("out");
        atomic_dir(&out, |tmp| write_text(&tmp.join("a.txt"), "hi")).unwrap();
        assert_eq!(fs::read_to_string(out.join("a.txt")).unwrap(), "hi");
        assert!(atomic_dir(&out, |_| Ok(())).is_err());
    }

    #[test]
    fn align_pads_columns() {
        assert_eq!(align("a\tbb\nccc\td\n"), "a    bb\nccc  d\n");
    }
}
