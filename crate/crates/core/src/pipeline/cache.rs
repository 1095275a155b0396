//! Content-addressed completion cache.
//!
//! Each entry is one JSON file named by the SHA-256 of the prompt and its
//! token limit. Entries are written once and never rewritten; a damaged
//! entry is ignored (with a warning) and fetched again under a fresh name.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::backend::BackendError;
use crate::spoiler::CompletionBackend;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Digest of `(prompt, max_tokens)`, the cache key.
pub fn completion_key(prompt: &str, max_tokens: u32) -> String {
    let mut h = Sha256::new();
    h.update(max_tokens.to_le_bytes());
    h.update(prompt.as_bytes());
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Entry {
    key: String,
    max_tokens: u32,
    text: String,
    text_sha256: String,
}

#[derive(Debug)]
pub struct CompletionCache {
    dir: PathBuf,
}

impl CompletionCache {
    pub fn open(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(CompletionCache { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn entry_paths(&self, key: &str) -> impl Iterator<Item = PathBuf> + '_ {
        let key = key.to_string();
        (0..).map(move |i| {
            if i == 0 {
                self.dir.join(format!("{key}.json"))
            } else {
                self.dir.join(format!("{key}.{i}.json"))
            }
        })
    }

    fn read_entry(path: &Path, key: &str, max_tokens: u32) -> Result<String, String> {
        let raw = fs::read_to_string(path).map_err(|e| e.to_string())?;
        let entry: Entry = serde_json::from_str(&raw).map_err(|e| e.to_string())?;
        if entry.key != key || entry.max_tokens != max_tokens {
            return Err("key mismatch".into());
        }
        if sha256_hex(entry.text.as_bytes()) != entry.text_sha256 {
            return Err("text digest mismatch".into());
        }
        Ok(entry.text)
    }

    /// Newest intact entry for the key, if any.
    pub fn get(&self, prompt: &str, max_tokens: u32) -> Option<String> {
        let key = completion_key(prompt, max_tokens);
        let mut found = None;
        for path in self.entry_paths(&key) {
            if !path.exists() {
                break;
            }
            match Self::read_entry(&path, &key, max_tokens) {
                Ok(text) => found = Some(text),
                Err(why) => tracing::warn!(path = %path.display(), "ignoring corrupt cache entry: {why}"),
            }
        }
        found
    }

    /// Writes a new entry; existing files are never modified.
    pub fn put(&self, prompt: &str, max_tokens: u32, text: &str) -> io::Result<()> {
        let key = completion_key(prompt, max_tokens);
        let entry = Entry {
            key: key.clone(),
            max_tokens,
            text: text.to_string(),
            text_sha256: sha256_hex(text.as_bytes()),
        };
        let body = serde_json::to_vec(&entry).map_err(io::Error::other)?;
        for path in self.entry_paths(&key) {
            match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(mut f) => return f.write_all(&body),
                Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {
                    if Self::read_entry(&path, &key, max_tokens).as_deref() == Ok(text) {
                        return Ok(());
                    }
                }
                Err(e) => return Err(e),
            }
        }
        unreachable!("entry path sequence is unbounded")
    }
}

/// Wraps a backend so identical requests are answered from disk.
pub struct CachedBackend<B> {
    inner: B,
    cache: CompletionCache,
    hits: AtomicUsize,
    misses: AtomicUsize,
}

impl<B> CachedBackend<B> {
    pub fn new(inner: B, cache: CompletionCache) -> Self {
        CachedBackend {
            inner,
            cache,
            hits: AtomicUsize::new(0),
            misses: AtomicUsize::new(0),
        }
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }

    pub fn misses(&self) -> usize {
        self.misses.load(Ordering::SeqCst)
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }
}

impl<B: CompletionBackend> CompletionBackend for CachedBackend<B> {
    fn complete(&self, prompt: &str, max_tokens: u32) -> Result<String, BackendError> {
        if let Some(text) = self.cache.get(prompt, max_tokens) {
            self.hits.fetch_add(1, Ordering::SeqCst);
            return Ok(text);
        }
        self.misses.fetch_add(1, Ordering::SeqCst);
        let text = self.inner.complete(prompt, max_tokens)?;
        if let Err(e) = self.cache.put(prompt, max_tokens, &text) {
            tracing::warn!(dir = %self.cache.dir().display(), "could not write cache entry: {e}");
        }
        Ok(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Counting(AtomicUsize);

    impl CompletionBackend for Counting {
        fn complete(&self, prompt: &str, max_tokens: u32) -> Result<String, BackendError> {
            let n = self.0.fetch_add(1, Ordering::SeqCst);
            Ok(format!("{prompt}/{max_tokens}/{n}"))
        }
    }

    #[test]
    fn hit_miss_and_key_sensitivity() {
        let dir = tempfile::tempdir().unwrap();
        let b = CachedBackend::new(Counting(AtomicUsize::new(0)), CompletionCache::open(dir.path()).unwrap());
        assert_eq!(b.complete("p", 8).unwrap(), "p/8/0");
        assert_eq!(b.complete("p", 8).unwrap(), "p/8/0");
        assert_eq!(b.complete("p", 9).unwrap(), "p/9/1");
        assert_eq!((b.hits(), b.misses()), (1, 2));
        assert_eq!(b.inner().0.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn corrupt_entry_is_a_miss_and_is_not_overwritten() {
        let dir = tempfile::tempdir().unwrap();
        let cache = CompletionCache::open(dir.path()).unwrap();
        cache.put("p", 8, "hello").unwrap();
        let path = dir.path().join(format!("{}.json", completion_key("p", 8)));
        let tampered = fs::read_to_string(&path).unwrap().replace("hello", "HELLO");
        fs::write(&path, &tampered).unwrap();
        assert_eq!(cache.get("p", 8), None);

        let b = CachedBackend::new(Counting(AtomicUsize::new(0)), cache);
        assert_eq!(b.complete("p", 8).unwrap(), "p/8/0");
        assert_eq!(fs::read_to_string(&path).unwrap(), tampered);
        assert_eq!(b.complete("p", 8).unwrap(), "p/8/0");
        assert_eq!(b.hits(), 1);
    }

    #[test]
    fn key_depends_on_both_parts() {
        assert_ne!(completion_key("p", 1), completion_key("p", 2));
        assert_ne!(completion_key("p", 1), completion_key("q", 1));
        assert_eq!(completion_key("p", 1).len(), 64);
    }
}
