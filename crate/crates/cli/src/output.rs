//! Run manifests, schema-tagged CSV headers and atomic file output.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const TOOL: &str = "tsp-indep";

#[derive(Debug, Serialize)]
pub struct Manifest<'a, C: Serialize> {
    pub tool: &'a str,
    pub version: &'a str,
    pub command: &'a str,
    pub rng: &'a str,
    pub config: &'a C,
}

/// Compact manifest JSON and its SHA-256 in hex.
pub fn manifest<C: Serialize>(command: &str, config: &C) -> Result<(String, String)> {
    let m = Manifest {
        tool: TOOL,
        version: env!("CARGO_PKG_VERSION"),
        command,
        rng: tsp_indep::models::RNG_NAME,
        config,
    };
    let json = serde_json::to_string(&m)?;
    let digest = Sha256::digest(json.as_bytes());
    let hex = digest.iter().map(|b| format!("{b:02x}")).collect();
    Ok((json, hex))
}

/// First line of every CSV output.
pub fn schema_line(schema: &str, manifest_hash: &str) -> String {
    format!("# schema: {TOOL}/{schema}/v1 manifest: {manifest_hash}\n")
}

/// Writes through a sibling temp file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .with_context(|| format!("{} has no file name", path.display()))?;
    let mut tmp_name = name.to_os_string();
    tmp_name.push(format!(".tmp-{}", std::process::id()));
    let tmp: PathBuf = dir.join(tmp_name);
    {
        let mut f = fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

/// Prints to stdout, or writes atomically when a path is given.
pub fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => write_atomic(path, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_hash_is_stable() {
        let (a, ha) = manifest("sweep", &vec![1, 2, 3]).unwrap();
        let (b, hb) = manifest("sweep", &vec![1, 2, 3]).unwrap();
        assert_eq!((a, ha.clone()), (b, hb));
        assert_eq!(ha.len(), 64);
        let (_, hc) = manifest("sweep", &vec![1, 2, 4]).unwrap();
        assert_ne!(ha, hc);
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn schema_header() {
        assert_eq!(schema_line("curves", "ab"), "# schema: tsp-indep/curves/v1 manifest: ab\n");
    }
}
