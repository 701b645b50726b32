//! On-disk caches for provider responses.
//!
//! Both caches are append-only JSON Lines files loaded fully at open.
//! Lookups take a read lock; inserts take the write lock and append one line.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};

use super::prompt::PromptBundle;
use super::provider::{sha256, Provider};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
struct EmbeddingLine {
    key: String,
    dim: usize,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CompletionLine {
    key: String,
    text: String,
}

struct Store<V> {
    map: RwLock<HashMap<String, V>>,
    sink: Option<Mutex<BufWriter<File>>>,
}

impl<V: Clone> Store<V> {
    fn open<L: for<'de> Deserialize<'de>>(
        path: Option<&Path>,
        decode: impl Fn(L) -> Result<(String, V)>,
    ) -> Result<Self> {
        let mut map = HashMap::new();
        let sink = match path {
            None => None,
            Some(path) => {
                if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                    std::fs::create_dir_all(parent)?;
                }
                if path.exists() {
                    let reader = BufReader::new(File::open(path)?);
                    for (i, line) in reader.lines().enumerate() {
                        let line = line?;
                        if line.trim().is_empty() {
                            continue;
                        }
                        let parsed: L = serde_json::from_str(&line).map_err(|e| Error::Parse {
                            source_name: path.display().to_string(),
                            line: i as u64 + 1,
                            msg: e.to_string(),
                        })?;
                        let (k, v) = decode(parsed)?;
                        map.insert(k, v);
                    }
                }
                let file = OpenOptions::new().create(true).append(true).open(path)?;
                Some(Mutex::new(BufWriter::new(file)))
            }
        };
        Ok(Self {
            map: RwLock::new(map),
            sink,
        })
    }

    fn get(&self, key: &str) -> Option<V> {
        self.map
            .read()
            .expect("cache lock poisoned")
            .get(key)
            .cloned()
    }

    fn insert(
        &self,
        key: String,
        value: V,
        line: impl FnOnce(&str, &V) -> Result<String>,
    ) -> Result<()> {
        let mut map = self.map.write().expect("cache lock poisoned");
        if map.contains_key(&key) {
            return Ok(());
        }
        if let Some(sink) = &self.sink {
            let text = line(&key, &value)?;
            let mut w = sink.lock().expect("cache sink poisoned");
            writeln!(w, "{text}")?;
            w.flush()?;
        }
        map.insert(key, value);
        Ok(())
    }

    fn len(&self) -> usize {
        self.map.read().expect("cache lock poisoned").len()
    }
}

/// Content-addressed embedding vectors.
pub struct EmbeddingCache {
    store: Store<Vec<f64>>,
}

impl EmbeddingCache {
    pub fn in_memory() -> Self {
        Self::open_impl(None).expect("in-memory cache cannot fail")
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        Self::open_impl(Some(path.as_ref()))
    }

    fn open_impl(path: Option<&Path>) -> Result<Self> {
        let store = Store::open(path, |l: EmbeddingLine| {
            if l.values.len() != l.dim {
                return Err(Error::DimMismatch {
                    expected: l.dim,
                    got: l.values.len(),
                });
            }
            Ok((l.key, l.values))
        })?;
        Ok(Self { store })
    }

    pub fn key(provider: &str, text: &str) -> String {
        hex::encode(sha256(&[
            b"embedding",
            provider.as_bytes(),
            text.as_bytes(),
        ]))
    }

    pub fn get(&self, key: &str) -> Option<Vec<f64>> {
        self.store.get(key)
    }

    pub fn insert(&self, key: String, values: Vec<f64>) -> Result<()> {
        self.store.insert(key, values, |k, v| {
            Ok(serde_json::to_string(&EmbeddingLine {
                key: k.to_string(),
                dim: v.len(),
                values: v.clone(),
            })?)
        })
    }

    pub fn len(&self) -> usize {
        self.store.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Content-addressed completion texts.
pub struct CompletionCache {
    store: Store<String>,
}

impl CompletionCache {
    pub fn in_memory() -> Self {
        Self::open_impl(None).expect("in-memory cache cannot fail")
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        Self::open_impl(Some(path.as_ref()))
    }

    fn open_impl(path: Option<&Path>) -> Result<Self> {
        let store = Store::open(path, |l: CompletionLine| Ok((l.key, l.text)))?;
        Ok(Self { store })
    }

    pub fn key(provider: &str, prompt: &PromptBundle, sample: u32) -> String {
        hex::encode(sha256(&[
            b"completion",
            provider.as_bytes(),
            &sample.to_le_bytes(),
            &prompt.canonical_bytes(),
        ]))
    }

    pub fn get(&self, key: &str) -> Option<String> {
        self.store.get(key)
    }

    pub fn insert(&self, key: String, text: String) -> Result<()> {
        self.store.insert(key, text, |k, v| {
            Ok(serde_json::to_string(&CompletionLine {
                key: k.to_string(),
                text: v.clone(),
            })?)
        })
    }

    pub fn len(&self) -> usize {
        self.store.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A provider behind both caches. Hits never reach the inner provider.
pub struct CachedProvider<P> {
    inner: P,
    embeddings: EmbeddingCache,
    completions: CompletionCache,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl<P: Provider> CachedProvider<P> {
    pub fn new(inner: P, embeddings: EmbeddingCache, completions: CompletionCache) -> Self {
        Self {
            inner,
            embeddings,
            completions,
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        }
    }

    pub fn in_memory(inner: P) -> Self {
        Self::new(
            inner,
            EmbeddingCache::in_memory(),
            CompletionCache::in_memory(),
        )
    }

    /// Opens `<dir>/embeddings.jsonl` and `<dir>/completions.jsonl`.
    pub fn open_dir(inner: P, dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        Ok(Self::new(
            inner,
            EmbeddingCache::open(Self::embedding_path(dir))?,
            CompletionCache::open(dir.join("completions.jsonl"))?,
        ))
    }

    pub fn embedding_path(dir: &Path) -> PathBuf {
        dir.join("embeddings.jsonl")
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::Relaxed)
    }

    fn hit(&self) {
        self.hits.fetch_add(1, Ordering::Relaxed);
    }

    fn miss(&self) {
        self.misses.fetch_add(1, Ordering::Relaxed);
    }
}

impl<P: Provider> Provider for CachedProvider<P> {
    fn name(&self) -> String {
        self.inner.name()
    }

    fn generate(&self, prompt: &PromptBundle, sample: u32) -> Result<String> {
        let key = CompletionCache::key(&self.inner.name(), prompt, sample);
        if let Some(text) = self.completions.get(&key) {
            self.hit();
            return Ok(text);
        }
        self.miss();
        let text = self.inner.generate(prompt, sample)?;
        self.completions.insert(key, text.clone())?;
        Ok(text)
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        super::provider::check_text(text)?;
        let key = EmbeddingCache::key(&self.inner.name(), text);
        if let Some(v) = self.embeddings.get(&key) {
            self.hit();
            return Ok(v);
        }
        self.miss();
        let v = self.inner.embed(text)?;
        self.embeddings.insert(key, v.clone())?;
        Ok(v)
    }

    fn embed_prompt(&self, prompt: &PromptBundle) -> Result<Option<Vec<f64>>> {
        let key = hex::encode(sha256(&[
            b"prompt-embedding",
            self.inner.name().as_bytes(),
            &prompt.canonical_bytes(),
        ]));
        if let Some(v) = self.embeddings.get(&key) {
            self.hit();
            return Ok(Some(v));
        }
        match self.inner.embed_prompt(prompt)? {
            Some(v) => {
                self.miss();
                self.embeddings.insert(key, v.clone())?;
                Ok(Some(v))
            }
            None => Ok(None),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semantic::prompt::build_item_prompt;
    use crate::semantic::provider::MockProvider;

    #[test]
    fn hits_skip_the_inner_provider() {
        let p = CachedProvider::in_memory(MockProvider::new(3, 8));
        let a = p.embed("abc").unwrap();
        let b = p.embed("abc").unwrap();
        assert_eq!(a, b);
        assert_eq!(p.inner().embed_calls(), 1);
        assert_eq!((p.hits(), p.misses()), (1, 1));

        let prompt = build_item_prompt(Some("t"), None, &[]);
        p.generate(&prompt, 0).unwrap();
        p.generate(&prompt, 0).unwrap();
        assert_eq!(p.inner().generate_calls(), 1);
    }

    #[test]
    fn persisted_cache_is_bitwise_transparent() {
        let dir = tempfile::tempdir().unwrap();
        let raw = MockProvider::new(5, 16);
        let expect = raw.embed("some text 0.1").unwrap();
        {
            let p = CachedProvider::open_dir(MockProvider::new(5, 16), dir.path()).unwrap();
            assert_eq!(p.embed("some text 0.1").unwrap(), expect);
        }
        let p = CachedProvider::open_dir(MockProvider::new(5, 16), dir.path()).unwrap();
        let got = p.embed("some text 0.1").unwrap();
        assert_eq!(p.inner().embed_calls(), 0);
        assert!(got
            .iter()
            .zip(&expect)
            .all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn corrupt_line_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.jsonl");
        std::fs::write(&path, "{\"key\":\"a\",\"dim\":2,\"values\":[1.0]}\n").unwrap();
        assert!(EmbeddingCache::open(&path).is_err());
        std::fs::write(&path, "not json\n").unwrap();
        assert!(matches!(
            EmbeddingCache::open(&path),
            Err(Error::Parse { line: 1, .. })
        ));
    }
}
