//! `manifest.txt`: `[block]` sections of `key = value` lines.
//!
//! `[timings]` always comes last so comparisons can cut it off.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST_NAME: &str = "manifest.txt";

#[derive(Debug, Clone, Default)]
pub struct Manifest {
    pub blocks: Vec<(String, Vec<(String, String)>)>,
    /// Output files relative to the run directory, with SHA-256 digests.
    pub files: Vec<(String, String)>,
    pub exit_code: i32,
    pub error: Option<String>,
    pub timings: Vec<(String, f64)>,
}

impl Manifest {
    pub fn block(&mut self, name: &str) -> &mut Vec<(String, String)> {
        if let Some(i) = self.blocks.iter().position(|(n, _)| n == name) {
            return &mut self.blocks[i].1;
        }
        self.blocks.push((name.to_string(), Vec::new()));
        &mut self.blocks.last_mut().unwrap().1
    }

    pub fn put(&mut self, block: &str, key: &str, value: impl ToString) {
        self.block(block).push((key.to_string(), value.to_string()));
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (name, entries) in &self.blocks {
            let _ = writeln!(s, "[{name}]");
            for (k, v) in entries {
                let _ = writeln!(s, "{k} = {v}");
            }
            s.push('\n');
        }
        s.push_str("[files]\n");
        for (f, h) in &self.files {
            let _ = writeln!(s, "{f} = sha256:{h}");
        }
        s.push_str("\n[status]\n");
        let _ = writeln!(s, "exit_code = {}", self.exit_code);
        let _ = writeln!(s, "error = {}", self.error.as_deref().unwrap_or("none").replace('\n', " "));
        s.push_str("\n[timings]\n");
        for (k, t) in &self.timings {
            let _ = writeln!(s, "{k} = {t:.3}");
        }
        s
    }

    /// Write through a temporary file and a rename.
    pub fn write_atomic(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(MANIFEST_NAME);
        let tmp = dir.join(format!(".{MANIFEST_NAME}.tmp"));
        fs::write(&tmp, self.to_text()).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

/// Manifest text with the `[timings]` block removed.
pub fn strip_timings(text: &str) -> &str {
    match text.find("[timings]") {
        Some(i) => &text[..i],
        None => text,
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Parse the `[files]` block back into `(name, digest)` pairs.
pub fn listed_files(text: &str) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let mut inside = false;
    for line in text.lines() {
        let line = line.trim();
        if line.starts_with('[') {
            inside = line == "[files]";
            continue;
        }
        if inside {
            if let Some((k, v)) = line.split_once(" = sha256:") {
                out.push((k.to_string(), v.to_string()));
            }
        }
    }
    out
}
