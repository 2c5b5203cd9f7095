//! FTE1 embedding files: `"FTE1"`, `u32 N`, `u32 D`, then `N·D` little-endian
//! `f32`, with the row ids in a `<stem>.ids.json` sidecar.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"FTE1";
const HEADER: usize = 12;

/// Sidecar path: `emb.fte` → `emb.ids.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("ids.json")
}

pub fn write_fte(path: &Path, ids: &[String], rows: &[Vec<f32>]) -> Result<()> {
    if ids.len() != rows.len() {
        return Err(Error::validation(format!(
            "{} ids for {} embedding rows",
            ids.len(),
            rows.len()
        )));
    }
    let dim = rows.first().map_or(0, |r| r.len());
    if let Some(bad) = rows.iter().position(|r| r.len() != dim) {
        return Err(Error::validation(format!("embedding row {bad} has dimension {}, expected {dim}", rows[bad].len())));
    }
    if let Some(bad) = rows.iter().position(|r| r.iter().any(|v| !v.is_finite())) {
        return Err(Error::validation(format!("embedding row {bad} is not finite")));
    }
    let count = u32::try_from(rows.len()).map_err(|_| Error::validation("too many embeddings for FTE1"))?;
    let dim32 = u32::try_from(dim).map_err(|_| Error::validation("embedding dimension too large for FTE1"))?;
    let mut buf = Vec::with_capacity(HEADER + 4 * rows.len() * dim);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&count.to_le_bytes());
    buf.extend_from_slice(&dim32.to_le_bytes());
    for v in rows.iter().flatten() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))?;
    let side = sidecar_path(path);
    let json = serde_json::to_string(ids).expect("string list serializes");
    fs::write(&side, json + "\n").map_err(|e| Error::io(&side, e))
}

/// Reads an FTE1 file and its sidecar. Returns `(ids, rows)`.
pub fn read_fte(path: &Path) -> Result<(Vec<String>, Vec<Vec<f32>>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < HEADER || &bytes[..4] != MAGIC {
        return Err(Error::parse(path, 1, "missing FTE1 header"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes")) as usize;
    let (n, d) = (word(4), word(8));
    let expected = n
        .checked_mul(d)
        .and_then(|x| x.checked_mul(4))
        .and_then(|x| x.checked_add(HEADER))
        .ok_or_else(|| Error::parse(path, 1, "header sizes overflow"))?;
    if bytes.len() != expected {
        return Err(Error::parse(
            path,
            1,
            format!("header declares {n}x{d} values ({expected} bytes) but file has {} bytes", bytes.len()),
        ));
    }
    let mut rows = Vec::with_capacity(n);
    for r in 0..n {
        let row: Vec<f32> = (0..d)
            .map(|c| {
                let at = HEADER + 4 * (r * d + c);
                f32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
            })
            .collect();
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::parse(path, r + 1, format!("embedding row {r} is not finite")));
        }
        rows.push(row);
    }

    let side = sidecar_path(path);
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let ids: Vec<String> = serde_json::from_str(&text).map_err(|e| Error::parse(&side, e.line(), e.to_string()))?;
    if ids.len() != n {
        return Err(Error::parse(&side, 1, format!("{} ids for {n} embedding rows", ids.len())));
    }
    let mut seen = std::collections::HashSet::new();
    if let Some(dup) = ids.iter().find(|id| !seen.insert(id.as_str())) {
        return Err(Error::parse(&side, 1, format!("duplicate embedding id {dup:?}")));
    }
    Ok((ids, rows))
}
