use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::RunConfig;
use crate::error::{Error, Result};

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    }))
}

/// Writes `<artifact>.manifest`: command, resolved config and input hashes.
pub fn write_manifest(
    artifact: &Path,
    command: &str,
    cfg: &RunConfig,
    inputs: &[(&str, &Path)],
    upstream: &[(&str, u64)],
) -> Result<PathBuf> {
    let mut text = format!("# mixpinn manifest\ncommand = {command}\nartifact = {}\n", artifact.display());
    text.push_str("\n[config]\n");
    text.push_str(&cfg.dump());
    text.push_str("\n[inputs]\n");
    for (name, path) in inputs {
        let _ = writeln!(text, "{name} = {} sha256:{}", path.display(), file_sha256(path)?);
    }
    for (name, hash) in upstream {
        let _ = writeln!(text, "{name} = {hash:016x}");
    }
    let mut out = artifact.as_os_str().to_owned();
    out.push(".manifest");
    let out = PathBuf::from(out);
    std::fs::write(&out, text).map_err(|e| Error::io(&out, e))?;
    Ok(out)
}
