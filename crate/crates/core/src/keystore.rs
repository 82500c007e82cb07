//! File-backed signing keys.
//!
//! A counter value must never be used twice. [`FileSigner`] therefore
//! persists `c + 1` (write to a temporary file, fsync, rename, fsync the
//! directory) before any signature for `c` is computed, and refuses to sign
//! if that write fails. A crash between the two steps burns one counter
//! value; it never repeats one. Concurrent signers on the same key are
//! excluded with an advisory lock on a sidecar `.lock` file.

use std::fs::{self, File, OpenOptions, TryLockError};
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::group::OpCounter;
use crate::scheme::{Signature, SigningKey};

/// Replaces `path` with `bytes` so that readers see either the old or the
/// new contents, never a mix.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp_name = path.file_name().unwrap_or_default().to_os_string();
    tmp_name.push(".tmp");
    let tmp = dir.join(tmp_name);
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    // Directory fsync makes the rename itself durable.
    File::open(&dir)?.sync_all()?;
    Ok(())
}

fn lock_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".lock");
    path.with_file_name(name)
}

/// Exclusive handle on a key file.
#[derive(Debug)]
pub struct FileSigner {
    path: PathBuf,
    key: SigningKey,
    _lock: File,
}

impl FileSigner {
    /// Opens and locks a key file. Fails with [`Error::KeyBusy`] if another
    /// signer holds it.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let lock = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(lock_path(&path))?;
        match lock.try_lock() {
            Ok(()) => {}
            Err(TryLockError::WouldBlock) => return Err(Error::KeyBusy),
            Err(TryLockError::Error(e)) => return Err(e.into()),
        }
        let key = SigningKey::from_bytes(&fs::read(&path)?)?;
        Ok(FileSigner {
            path,
            key,
            _lock: lock,
        })
    }

    /// Writes a new key file. Refuses to overwrite unless `force` is set.
    pub fn create(path: impl AsRef<Path>, key: &SigningKey, force: bool) -> Result<()> {
        let path = path.as_ref();
        if path.exists() && !force {
            return Err(Error::Format(format!(
                "{} already exists",
                path.display()
            )));
        }
        write_atomic(path, &key.to_bytes())?;
        Ok(())
    }

    pub fn key(&self) -> &SigningKey {
        &self.key
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Durably advances the stored counter and returns the value now owned
    /// by the caller.
    pub fn reserve(&mut self) -> Result<u64> {
        let c = self.key.counter();
        let next = c
            .checked_add(1)
            .ok_or_else(|| Error::CounterPersistence("counter exhausted".into()))?;
        let mut updated = self.key.clone();
        updated.set_counter(next);
        write_atomic(&self.path, &updated.to_bytes())
            .map_err(|e| Error::CounterPersistence(e.to_string()))?;
        self.key = updated;
        Ok(c)
    }

    pub fn sign(&mut self, m: &[u8], ops: &mut OpCounter) -> Result<Signature> {
        self.sign_with_hook(m, ops, |_| {})
    }

    /// [`FileSigner::sign`] with a callback run after the counter is
    /// persisted and before the signature is computed. Used to inject
    /// crashes in tests.
    pub fn sign_with_hook(
        &mut self,
        m: &[u8],
        ops: &mut OpCounter,
        after_reserve: impl FnOnce(u64),
    ) -> Result<Signature> {
        let c = self.reserve()?;
        after_reserve(c);
        Ok(self.key.sign_at(c, m, ops))
    }
}
