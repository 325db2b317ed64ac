use std::collections::HashMap;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

/// Content-addressed store of raw completions.
///
/// On disk a response lives at `<root>/<endpoint>/<key[..2]>/<key>.txt` and
/// is written through a temporary file and a rename, so readers never see a
/// partial entry.
#[derive(Debug)]
pub enum ResponseCache {
    Memory(Mutex<HashMap<(String, String), String>>),
    Disk(PathBuf),
}

impl ResponseCache {
    pub fn memory() -> Self {
        Self::Memory(Mutex::new(HashMap::new()))
    }

    pub fn disk(root: impl Into<PathBuf>) -> Self {
        Self::Disk(root.into())
    }

    pub fn entry_path(root: &Path, endpoint_id: &str, key: &str) -> PathBuf {
        let shard = key.get(..2).unwrap_or("__");
        root.join(endpoint_id).join(shard).join(format!("{key}.txt"))
    }

    pub async fn get(&self, endpoint_id: &str, key: &str) -> std::io::Result<Option<String>> {
        match self {
            Self::Memory(m) => Ok(m
                .lock()
                .expect("poisoned")
                .get(&(endpoint_id.to_owned(), key.to_owned()))
                .cloned()),
            Self::Disk(root) => {
                match tokio::fs::read_to_string(Self::entry_path(root, endpoint_id, key)).await {
                    Ok(s) => Ok(Some(s)),
                    Err(e) if e.kind() == ErrorKind::NotFound => Ok(None),
                    Err(e) => Err(e),
                }
            }
        }
    }

    pub async fn put(&self, endpoint_id: &str, key: &str, value: &str) -> std::io::Result<()> {
        match self {
            Self::Memory(m) => {
                m.lock()
                    .expect("poisoned")
                    .insert((endpoint_id.to_owned(), key.to_owned()), value.to_owned());
                Ok(())
            }
            Self::Disk(root) => {
                let path = Self::entry_path(root, endpoint_id, key);
                let dir = path.parent().expect("entry has a parent").to_path_buf();
                let value = value.to_owned();
                tokio::task::spawn_blocking(move || -> std::io::Result<()> {
                    std::fs::create_dir_all(&dir)?;
                    let mut tmp = tempfile::NamedTempFile::new_in(&dir)?;
                    std::io::Write::write_all(&mut tmp, value.as_bytes())?;
                    tmp.persist(&path).map_err(|e| e.error)?;
                    Ok(())
                })
                .await
                .map_err(std::io::Error::other)?
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[tokio::test]
    async fn disk_layout() {
        let dir = tempfile::tempdir().unwrap();
        let c = ResponseCache::disk(dir.path());
        assert_eq!(c.get("ep", "abcdef").await.unwrap(), None);
        c.put("ep", "abcdef", "hello").await.unwrap();
        assert!(dir.path().join("ep/ab/abcdef.txt").is_file());
        assert_eq!(c.get("ep", "abcdef").await.unwrap().as_deref(), Some("hello"));
        c.put("ep", "abcdef", "again").await.unwrap();
        assert_eq!(c.get("ep", "abcdef").await.unwrap().as_deref(), Some("again"));
        let leftovers = std::fs::read_dir(dir.path().join("ep/ab")).unwrap().count();
        assert_eq!(leftovers, 1);
    }
}
