//! Newline-delimited JSON files: append, tail-read, atomic rewrite.
//!
//! A line only counts once its terminating `\n` is on disk. A trailing
//! fragment left by a crash mid-append is truncated away on open.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Read, Seek, SeekFrom, Write};
use std::path::PathBuf;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::StoreError;

pub(crate) struct NdjsonFile {
    path: PathBuf,
    sync: bool,
}

impl NdjsonFile {
    pub fn open(path: PathBuf, sync: bool) -> Result<Self, StoreError> {
        let file = NdjsonFile { path, sync };
        file.recover()?;
        Ok(file)
    }

    fn io(&self, source: io::Error) -> StoreError {
        StoreError::Io {
            path: self.path.clone(),
            source,
        }
    }

    fn recover(&self) -> Result<(), StoreError> {
        let mut file = match OpenOptions::new().read(true).write(true).open(&self.path) {
            Ok(f) => f,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                File::create(&self.path).map_err(|e| self.io(e))?;
                return Ok(());
            }
            Err(e) => return Err(self.io(e)),
        };
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes).map_err(|e| self.io(e))?;
        let keep = bytes.iter().rposition(|b| *b == b'\n').map_or(0, |i| i + 1);
        if keep < bytes.len() {
            tracing::warn!(path = %self.path.display(), dropped = bytes.len() - keep, "truncating partial trailing line");
            file.set_len(keep as u64).map_err(|e| self.io(e))?;
            file.sync_all().map_err(|e| self.io(e))?;
        }
        Ok(())
    }

    /// Opens for appending and takes an exclusive advisory lock, which other
    /// processes sharing the data directory also honor.
    pub fn lock_for_append(&self) -> Result<LockedAppend<'_>, StoreError> {
        let file = OpenOptions::new()
            .create(true)
            .read(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| self.io(e))?;
        file.lock().map_err(|e| self.io(e))?;
        Ok(LockedAppend { owner: self, file })
    }

    /// Reads complete lines starting at byte `offset`. Returns
    /// `(line_number, value)` pairs and the offset just past the last complete line.
    pub fn read_from<T: DeserializeOwned>(
        &self,
        offset: u64,
        first_line: usize,
    ) -> Result<(Vec<(usize, T)>, u64), StoreError> {
        let mut file = match File::open(&self.path) {
            Ok(f) => f,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok((Vec::new(), 0)),
            Err(e) => return Err(self.io(e)),
        };
        file.seek(SeekFrom::Start(offset)).map_err(|e| self.io(e))?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes).map_err(|e| self.io(e))?;
        let complete = bytes.iter().rposition(|b| *b == b'\n').map_or(0, |i| i + 1);
        let mut out = Vec::new();
        for (i, raw) in bytes[..complete].split(|b| *b == b'\n').enumerate() {
            if raw.is_empty() {
                continue;
            }
            let line = first_line + i;
            let value = serde_json::from_slice(raw).map_err(|e| StoreError::Corrupt {
                file: self.file_name(),
                line,
                message: e.to_string(),
            })?;
            out.push((line, value));
        }
        Ok((out, offset + complete as u64))
    }

    pub fn read_all<T: DeserializeOwned>(&self) -> Result<Vec<T>, StoreError> {
        Ok(self.read_from(0, 1)?.0.into_iter().map(|(_, v)| v).collect())
    }

    /// Replaces the whole file via write-to-temp and rename.
    pub fn rewrite<T: Serialize>(&self, items: impl IntoIterator<Item = T>) -> Result<(), StoreError> {
        let tmp = self.path.with_extension("ndjson.tmp");
        let mut buf = Vec::new();
        for item in items {
            serde_json::to_writer(&mut buf, &item).map_err(|e| self.io(e.into()))?;
            buf.push(b'\n');
        }
        let mut file = File::create(&tmp).map_err(|e| self.io(e))?;
        file.write_all(&buf).map_err(|e| self.io(e))?;
        if self.sync {
            file.sync_all().map_err(|e| self.io(e))?;
        }
        fs::rename(&tmp, &self.path).map_err(|e| self.io(e))?;
        Ok(())
    }

    pub fn len(&self) -> Result<u64, StoreError> {
        match fs::metadata(&self.path) {
            Ok(m) => Ok(m.len()),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(0),
            Err(e) => Err(self.io(e)),
        }
    }

    fn file_name(&self) -> String {
        self.path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default()
    }
}

pub(crate) struct LockedAppend<'a> {
    owner: &'a NdjsonFile,
    file: File,
}

impl LockedAppend<'_> {
    /// Writes one line with a single `write` call, then syncs if configured.
    pub fn append<T: Serialize>(&mut self, item: &T) -> Result<(), StoreError> {
        let mut line = serde_json::to_vec(item).map_err(|e| self.owner.io(e.into()))?;
        line.push(b'\n');
        self.file.write_all(&line).map_err(|e| self.owner.io(e))?;
        if self.owner.sync {
            self.file.sync_data().map_err(|e| self.owner.io(e))?;
        }
        Ok(())
    }
}

impl Drop for LockedAppend<'_> {
    fn drop(&mut self) {
        let _ = self.file.unlock();
    }
}
