//! Artifact emission: atomic file writes and run manifests.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use tempfile::NamedTempFile;

use crate::CliError;

#[derive(Serialize)]
pub struct Manifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub seed: u64,
    /// Every knob the command read, after defaults.
    pub config: &'a Value,
    /// Proxy depths and tolerances actually used.
    pub proxy: &'a Value,
    pub artifact: Option<String>,
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    let mut tmp = NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

pub fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("serializable output");
    v.push(b'\n');
    v
}

/// The artifact goes to `out` (or stdout); the manifest goes next to it (or
/// to stderr).
pub fn emit(out: Option<&Path>, artifact: &[u8], manifest: &Manifest) -> Result<(), CliError> {
    match out {
        Some(path) => {
            write_atomic(path, artifact)?;
            write_atomic(&manifest_path(path), &json_bytes(manifest))?;
        }
        None => {
            let io = |e: std::io::Error| CliError::Io(format!("stdout: {e}"));
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(artifact).map_err(io)?;
            stdout.flush().map_err(io)?;
            let mut stderr = std::io::stderr().lock();
            stderr.write_all(&json_bytes(manifest)).map_err(io)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_sits_next_to_artifact() {
        assert_eq!(manifest_path(Path::new("a/fig2.csv")), PathBuf::from("a/fig2.csv.manifest.json"));
    }

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
