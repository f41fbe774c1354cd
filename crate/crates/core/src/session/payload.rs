//! Content-addressed payload store: bytes keyed by their SHA-256 digest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::SessionError;
use crate::digest::sha256_hex;

#[derive(Debug, Clone)]
pub enum PayloadStore {
    Memory(BTreeMap<String, Vec<u8>>),
    /// Directory of digest-named files.
    Dir(PathBuf),
}

impl Default for PayloadStore {
    fn default() -> Self {
        Self::Memory(BTreeMap::new())
    }
}

impl PayloadStore {
    pub fn directory(root: impl AsRef<Path>) -> Result<Self, SessionError> {
        std::fs::create_dir_all(root.as_ref())?;
        Ok(Self::Dir(root.as_ref().to_path_buf()))
    }

    pub fn put(&mut self, bytes: &[u8]) -> Result<String, SessionError> {
        let digest = sha256_hex(bytes);
        match self {
            Self::Memory(map) => {
                map.entry(digest.clone()).or_insert_with(|| bytes.to_vec());
            }
            Self::Dir(root) => {
                let path = root.join(&digest);
                if !path.exists() {
                    // Write-then-rename so readers never see a partial file.
                    let tmp = root.join(format!(".{digest}.tmp"));
                    std::fs::write(&tmp, bytes)?;
                    std::fs::rename(tmp, path)?;
                }
            }
        }
        Ok(digest)
    }

    pub fn get(&self, digest: &str) -> Result<Option<Vec<u8>>, SessionError> {
        let bytes = match self {
            Self::Memory(map) => map.get(digest).cloned(),
            Self::Dir(root) => match std::fs::read(root.join(digest)) {
                Ok(b) => Some(b),
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
                Err(e) => return Err(e.into()),
            },
        };
        if let Some(b) = &bytes {
            if sha256_hex(b) != digest {
                return Err(SessionError::PayloadDigest(digest.to_string()));
            }
        }
        Ok(bytes)
    }

    pub fn contains(&self, digest: &str) -> bool {
        matches!(self.get(digest), Ok(Some(_)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn memory_round_trip() {
        let mut s = PayloadStore::default();
        let d = s.put(b"hello").unwrap();
        assert_eq!(s.get(&d).unwrap().unwrap(), b"hello");
        assert_eq!(s.get("00").unwrap(), None);
    }

    #[test]
    fn directory_round_trip_and_tamper_detection() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = PayloadStore::directory(dir.path()).unwrap();
        let d = s.put(b"payload").unwrap();
        assert!(dir.path().join(&d).exists());
        assert_eq!(s.get(&d).unwrap().unwrap(), b"payload");
        std::fs::write(dir.path().join(&d), b"tampered").unwrap();
        assert!(matches!(s.get(&d), Err(SessionError::PayloadDigest(_))));
    }
}
