//! One JSON document per session, named `<uuid>.json`.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;
use uuid::Uuid;

use super::Session;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("session {0} not found")]
    NotFound(String),
    #[error("corrupt session document {path} at `{field}`: {detail}")]
    Corrupt {
        path: PathBuf,
        field: String,
        detail: String,
    },
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_owned(),
        source,
    }
}

/// Writes via a temporary sibling and a rename so readers never observe a
/// half-written document.
pub fn write_session_file(path: &Path, session: &Session) -> Result<(), StoreError> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let tmp = dir.join(format!(
        ".{}.{}.tmp",
        path.file_name()
            .and_then(|n| n.to_str())
            .unwrap_or("session"),
        Uuid::new_v4().simple()
    ));
    fs::write(&tmp, session.to_json()).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        StoreError::Io {
            path: path.to_owned(),
            source: e,
        }
    })
}

/// Reads and fully validates a session document.
pub fn read_session_file(path: &Path) -> Result<Session, StoreError> {
    let text = match fs::read_to_string(path) {
        Ok(text) => text,
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            return Err(StoreError::NotFound(path.display().to_string()))
        }
        Err(e) => return Err(io_err(path)(e)),
    };
    let de = &mut serde_json::Deserializer::from_str(&text);
    let session: Session =
        serde_path_to_error::deserialize(de).map_err(|e| StoreError::Corrupt {
            path: path.to_owned(),
            field: e.path().to_string(),
            detail: e.inner().to_string(),
        })?;
    session.check_integrity().map_err(|e| StoreError::Corrupt {
        path: path.to_owned(),
        field: "ideas".into(),
        detail: e.to_string(),
    })?;
    Ok(session)
}

#[derive(Debug, Clone)]
pub struct SessionStore {
    dir: PathBuf,
}

impl SessionStore {
    /// Opens (creating if needed) a sessions directory and checks it is writable.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let probe = dir.join(format!(".probe-{}", Uuid::new_v4().simple()));
        fs::write(&probe, b"").map_err(io_err(&dir))?;
        let _ = fs::remove_file(&probe);
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, id: Uuid) -> PathBuf {
        self.dir.join(format!("{id}.json"))
    }

    pub fn save(&self, session: &Session) -> Result<PathBuf, StoreError> {
        let path = self.path_for(session.id());
        write_session_file(&path, session)?;
        Ok(path)
    }

    pub fn load(&self, id: Uuid) -> Result<Session, StoreError> {
        let path = self.path_for(id);
        let session = read_session_file(&path).map_err(|e| match e {
            StoreError::NotFound(_) => StoreError::NotFound(id.to_string()),
            other => other,
        })?;
        if session.id() != id {
            return Err(StoreError::Corrupt {
                path,
                field: "id".into(),
                detail: format!("document holds session {} instead of {id}", session.id()),
            });
        }
        Ok(session)
    }

    pub fn exists(&self, id: Uuid) -> bool {
        self.path_for(id).is_file()
    }
}
