//! Flat tar containers of named byte blobs.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{LabError, Result};

pub type Entries = BTreeMap<String, Vec<u8>>;

/// Write `entries` in order to a tar file at `path`.
pub fn write(path: &Path, entries: &[(String, Vec<u8>)]) -> Result<()> {
    let file = File::create(path).map_err(|e| LabError::io(path, e))?;
    let mut builder = tar::Builder::new(BufWriter::new(file));
    for (name, bytes) in entries {
        let mut header = tar::Header::new_gnu();
        header.set_size(bytes.len() as u64);
        header.set_mode(0o644);
        header.set_mtime(0);
        header.set_cksum();
        builder
            .append_data(&mut header, name, bytes.as_slice())
            .map_err(|e| LabError::io(path, e))?;
    }
    let mut inner = builder.into_inner().map_err(|e| LabError::io(path, e))?;
    inner.flush().map_err(|e| LabError::io(path, e))
}

pub fn read(path: &Path) -> Result<Entries> {
    let file = File::open(path).map_err(|e| LabError::io(path, e))?;
    let mut archive = tar::Archive::new(BufReader::new(file));
    let mut out = Entries::new();
    let bad = |e: std::io::Error| LabError::format(format!("{}: not a readable archive: {e}", path.display()));
    for entry in archive.entries().map_err(bad)? {
        let mut entry = entry.map_err(bad)?;
        let name = entry.path().map_err(bad)?.to_string_lossy().into_owned();
        let mut bytes = Vec::new();
        entry.read_to_end(&mut bytes).map_err(bad)?;
        out.insert(name, bytes);
    }
    Ok(out)
}

pub fn take(entries: &mut Entries, name: &str) -> Result<Vec<u8>> {
    entries
        .remove(name)
        .ok_or_else(|| LabError::format(format!("archive entry {name} is missing")))
}
