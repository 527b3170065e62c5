use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::Result;

pub fn hash_text(text: &str) -> String {
    format!("{:x}", Sha256::digest(text.as_bytes()))
}

pub fn num(x: f64) -> String {
    format!("{x}")
}

pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// Comment line, header, then one line per row. Cells are written as
/// given; callers only produce numbers and bare identifiers.
pub fn render(config_hash: &str, columns: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = String::new();
    writeln!(out, "# config_hash={config_hash} version={}", env!("CARGO_PKG_VERSION")).unwrap();
    writeln!(out, "{}", columns.join(",")).unwrap();
    for r in rows {
        debug_assert_eq!(r.len(), columns.len());
        writeln!(out, "{}", r.join(",")).unwrap();
    }
    out
}

pub fn write(path: &Path, config_hash: &str, columns: &[&str], rows: &[Vec<String>]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, render(config_hash, columns, rows))?;
    Ok(())
}
