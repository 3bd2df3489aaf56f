use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{valid_checkpoint_name, Corpus, CorpusState, StoreError};
use crate::annotation::{read_labels_csv, write_labels_csv};
use crate::classifier::TensionModelParams;
use crate::codec::{Reader, Writer};
use crate::embed::{EmbeddingProvider, EmbeddingVector};
use crate::hashing::sha256_hex;
use crate::ingest::{Paragraph, ParagraphId, SessionRef};
use crate::topics::Topic;

pub const FORMAT_VERSION: u32 = 1;

const CURRENT: &str = "CURRENT";
const LOCK: &str = "LOCK";
const MANIFEST: &str = "manifest.json";
const LABELS: &str = "labels.csv";
const TOPICS: &str = "topics.jsonl";
const STATE: &str = "state.json";
const EMBED_MAGIC: &[u8; 8] = b"TNEMBD01";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionEntry {
    pub session: SessionRef,
    pub label: String,
    pub paragraphs: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub format_version: u32,
    pub sessions: Vec<SessionEntry>,
    pub providers: Vec<EmbeddingProvider>,
    /// Relative path -> checksum of every data file in the generation.
    pub files: BTreeMap<String, FileEntry>,
}

fn io_err(path: &Path, source: std::io::Error) -> StoreError {
    StoreError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn integrity(record: impl Into<String>, message: impl Into<String>) -> StoreError {
    StoreError::Integrity {
        record: record.into(),
        message: message.into(),
    }
}

/// Exclusive writer lock on a store directory, released on drop or when
/// the process exits.
#[derive(Debug)]
pub struct StoreLock {
    _file: File,
    root: PathBuf,
}

impl StoreLock {
    /// Creates the store directory if needed. Fails with
    /// [`StoreError::Locked`] when another writer holds the lock.
    pub fn acquire(root: &Path) -> Result<StoreLock, StoreError> {
        fs::create_dir_all(root).map_err(|e| io_err(root, e))?;
        let path = root.join(LOCK);
        let file = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&path)
            .map_err(|e| io_err(&path, e))?;
        match file.try_lock() {
            Ok(()) => Ok(StoreLock {
                _file: file,
                root: root.to_path_buf(),
            }),
            Err(fs::TryLockError::WouldBlock) => Err(StoreError::Locked),
            Err(fs::TryLockError::Error(e)) => Err(io_err(&path, e)),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn save(&self, corpus: &Corpus) -> Result<CorpusManifest, StoreError> {
        write_generation(&self.root, corpus, None)
    }

    /// Writes only the first `files` data files of a new generation and then
    /// fails, leaving the debris a crash would leave.
    #[doc(hidden)]
    pub fn save_interrupted(
        &self,
        corpus: &Corpus,
        files: usize,
    ) -> Result<CorpusManifest, StoreError> {
        write_generation(&self.root, corpus, Some(files))
    }
}

/// Takes the writer lock and saves a new generation.
pub fn save_corpus(corpus: &Corpus, root: &Path) -> Result<CorpusManifest, StoreError> {
    StoreLock::acquire(root)?.save(corpus)
}

fn generation_name(n: u64) -> String {
    format!("gen-{n:06}")
}

fn parse_generation(name: &str) -> Option<u64> {
    name.strip_prefix("gen-")?.parse().ok()
}

fn current_generation(root: &Path) -> Result<Option<String>, StoreError> {
    let path = root.join(CURRENT);
    match fs::read_to_string(&path) {
        Ok(s) => {
            let name = s.trim().to_owned();
            if parse_generation(&name).is_none() {
                return Err(integrity(CURRENT, format!("bad generation name `{name}`")));
            }
            Ok(Some(name))
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(io_err(&path, e)),
    }
}

fn provider_file(index: usize, id: &str) -> String {
    let safe: String = id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("embeddings/{index:03}-{safe}.bin")
}

fn jsonl<T: Serialize>(items: impl IntoIterator<Item = T>) -> Vec<u8> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, &item).expect("records serialize");
        out.push(b'\n');
    }
    out
}

fn encode_embeddings(
    provider: &EmbeddingProvider,
    entries: &[(&ParagraphId, &EmbeddingVector)],
) -> Vec<u8> {
    let mut w = Writer::new(EMBED_MAGIC, 1);
    w.str(&provider.id)
        .u64(provider.dimension as u64)
        .u64(entries.len() as u64);
    for (id, v) in entries {
        w.str(id.as_str()).f64s(v.values());
    }
    w.finish()
}

type DataFile = (String, Vec<u8>);
type DecodedEmbeddings = (String, usize, Vec<(ParagraphId, Vec<f64>)>);

/// Serializes the corpus into (relative path, bytes) pairs plus the session
/// table, in a deterministic order.
fn encode(corpus: &Corpus) -> Result<(Vec<DataFile>, Vec<SessionEntry>), StoreError> {
    let mut corpus = corpus.clone();
    corpus.canonicalize();
    corpus.validate()?;
    let mut files = Vec::new();
    let mut sessions: Vec<SessionEntry> = Vec::new();
    let mut by_session: BTreeMap<&SessionRef, Vec<&Paragraph>> = BTreeMap::new();
    for p in &corpus.paragraphs {
        by_session.entry(&p.session).or_default().push(p);
    }
    let mut labels_seen = BTreeMap::new();
    for (session, paragraphs) in by_session {
        let label = session.label();
        if let Some(other) = labels_seen.insert(label.clone(), session) {
            return Err(StoreError::Invalid(format!(
                "sessions {other:?} and {session:?} share label {label}"
            )));
        }
        files.push((format!("paragraphs/{label}.jsonl"), jsonl(&paragraphs)));
        sessions.push(SessionEntry {
            session: session.clone(),
            label,
            paragraphs: paragraphs.len(),
        });
    }
    let mut labels = Vec::new();
    write_labels_csv(&mut labels, &corpus.labels)
        .map_err(|e| StoreError::Invalid(e.to_string()))?;
    files.push((LABELS.to_owned(), labels));
    files.push((TOPICS.to_owned(), jsonl(&corpus.topics)));
    let mut state = serde_json::to_vec_pretty(&corpus.state).expect("state serializes");
    state.push(b'\n');
    files.push((STATE.to_owned(), state));
    for (i, provider) in corpus.providers.iter().enumerate() {
        let entries: Vec<(&ParagraphId, &EmbeddingVector)> = corpus
            .embeddings
            .iter()
            .filter(|(_, v)| v.provider_id() == provider.id)
            .collect();
        files.push((
            provider_file(i, &provider.id),
            encode_embeddings(provider, &entries),
        ));
    }
    for (name, params) in &corpus.checkpoints {
        files.push((format!("checkpoints/{name}.ckpt"), params.to_bytes()));
    }
    Ok((files, sessions))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let mut f = File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(bytes).map_err(|e| io_err(path, e))?;
    f.sync_all().map_err(|e| io_err(path, e))
}

fn write_generation(
    root: &Path,
    corpus: &Corpus,
    stop_after: Option<usize>,
) -> Result<CorpusManifest, StoreError> {
    let (files, sessions) = encode(corpus)?;
    let current = current_generation(root)?;
    let mut next = current.as_deref().and_then(parse_generation).unwrap_or(0) + 1;
    for entry in fs::read_dir(root).map_err(|e| io_err(root, e))? {
        let entry = entry.map_err(|e| io_err(root, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(n) = parse_generation(name.trim_end_matches(".tmp")) {
            next = next.max(n + 1);
        }
    }
    let name = generation_name(next);
    let tmp = root.join(format!("{name}.tmp"));
    fs::create_dir_all(tmp.join("paragraphs")).map_err(|e| io_err(&tmp, e))?;
    fs::create_dir_all(tmp.join("embeddings")).map_err(|e| io_err(&tmp, e))?;
    fs::create_dir_all(tmp.join("checkpoints")).map_err(|e| io_err(&tmp, e))?;

    let mut manifest = CorpusManifest {
        format_version: FORMAT_VERSION,
        sessions,
        providers: corpus.providers.clone(),
        files: BTreeMap::new(),
    };
    for (i, (rel, bytes)) in files.iter().enumerate() {
        if stop_after == Some(i) {
            return Err(io_err(&tmp.join(rel), std::io::Error::other("interrupted")));
        }
        write_file(&tmp.join(rel), bytes)?;
        manifest.files.insert(
            rel.clone(),
            FileEntry {
                sha256: sha256_hex(bytes),
                bytes: bytes.len() as u64,
            },
        );
    }
    let mut manifest_bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    manifest_bytes.push(b'\n');
    write_file(&tmp.join(MANIFEST), &manifest_bytes)?;

    let dest = root.join(&name);
    fs::rename(&tmp, &dest).map_err(|e| io_err(&dest, e))?;
    let pointer_tmp = root.join(format!("{CURRENT}.tmp"));
    write_file(&pointer_tmp, format!("{name}\n").as_bytes())?;
    let pointer = root.join(CURRENT);
    fs::rename(&pointer_tmp, &pointer).map_err(|e| io_err(&pointer, e))?;
    if let Ok(dir) = File::open(root) {
        let _ = dir.sync_all();
    }
    prune(root, &name, current.as_deref());
    Ok(manifest)
}

/// Removes generations other than the live one and its predecessor, and any
/// leftover temporary directories. Failures are ignored.
fn prune(root: &Path, live: &str, previous: Option<&str>) {
    let Ok(entries) = fs::read_dir(root) else {
        return;
    };
    for entry in entries.flatten() {
        let name = entry.file_name().to_string_lossy().into_owned();
        let is_gen = parse_generation(name.trim_end_matches(".tmp")).is_some();
        if is_gen && name != live && Some(name.as_str()) != previous {
            let _ = fs::remove_dir_all(entry.path());
        }
    }
}

fn read_verified(dir: &Path, rel: &str, entry: &FileEntry) -> Result<Vec<u8>, StoreError> {
    let path = dir.join(rel);
    let bytes = match fs::read(&path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(integrity(rel, "file listed in manifest is missing"))
        }
        Err(e) => return Err(io_err(&path, e)),
    };
    if bytes.len() as u64 != entry.bytes {
        return Err(integrity(
            rel,
            format!(
                "expected {} bytes, found {} (truncated or altered)",
                entry.bytes,
                bytes.len()
            ),
        ));
    }
    if sha256_hex(&bytes) != entry.sha256 {
        return Err(integrity(rel, "checksum mismatch"));
    }
    Ok(bytes)
}

fn parse_jsonl<T: for<'de> Deserialize<'de>>(
    rel: &str,
    bytes: &[u8],
) -> Result<Vec<T>, StoreError> {
    let text = std::str::from_utf8(bytes).map_err(|_| integrity(rel, "not UTF-8"))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| integrity(format!("{rel}:{}", i + 1), e.to_string()))
        })
        .collect()
}

fn decode_embeddings(rel: &str, bytes: &[u8]) -> Result<DecodedEmbeddings, StoreError> {
    let codec = |e: crate::codec::CodecError| integrity(rel, e.to_string());
    let mut r = Reader::open(rel, bytes, EMBED_MAGIC, 1).map_err(codec)?;
    let provider = r.str().map_err(codec)?;
    let dim = r.u64().map_err(codec)? as usize;
    let n = r.u64().map_err(codec)?;
    let mut out = Vec::new();
    for _ in 0..n {
        let id = ParagraphId::new(r.str().map_err(codec)?);
        let values = r.f64s().map_err(codec)?;
        out.push((id, values));
    }
    r.finish().map_err(codec)?;
    Ok((provider, dim, out))
}

/// Loads the live generation, verifying the format version and the checksum
/// of every file before parsing it.
pub fn load_corpus(root: &Path) -> Result<Corpus, StoreError> {
    let name =
        current_generation(root)?.ok_or_else(|| StoreError::Missing(root.display().to_string()))?;
    let dir = root.join(&name);
    let manifest_path = dir.join(MANIFEST);
    let manifest_bytes = match fs::read(&manifest_path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(integrity(format!("{name}/{MANIFEST}"), "missing"))
        }
        Err(e) => return Err(io_err(&manifest_path, e)),
    };
    let raw: serde_json::Value =
        serde_json::from_slice(&manifest_bytes).map_err(|e| integrity(MANIFEST, e.to_string()))?;
    let version = raw
        .get("format_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| integrity(MANIFEST, "missing format_version"))?;
    if version > u64::from(FORMAT_VERSION) || version == 0 {
        return Err(StoreError::Version {
            found: u32::try_from(version).unwrap_or(u32::MAX),
            supported: FORMAT_VERSION,
        });
    }
    let manifest: CorpusManifest =
        serde_json::from_value(raw).map_err(|e| integrity(MANIFEST, e.to_string()))?;

    let mut corpus = Corpus {
        providers: manifest.providers.clone(),
        ..Corpus::default()
    };
    for s in &manifest.sessions {
        let rel = format!("paragraphs/{}.jsonl", s.label);
        let entry = manifest
            .files
            .get(&rel)
            .ok_or_else(|| integrity(&rel, "session listed without a checksum"))?;
        let paragraphs: Vec<Paragraph> = parse_jsonl(&rel, &read_verified(&dir, &rel, entry)?)?;
        if paragraphs.len() != s.paragraphs {
            return Err(integrity(
                &rel,
                format!(
                    "expected {} paragraphs, found {}",
                    s.paragraphs,
                    paragraphs.len()
                ),
            ));
        }
        if let Some(p) = paragraphs.iter().find(|p| p.session != s.session) {
            return Err(integrity(
                &rel,
                format!("paragraph {} belongs to another session", p.id),
            ));
        }
        corpus.paragraphs.extend(paragraphs);
    }
    let file = |rel: &str| -> Result<Vec<u8>, StoreError> {
        let entry = manifest
            .files
            .get(rel)
            .ok_or_else(|| integrity(rel, "missing from manifest"))?;
        read_verified(&dir, rel, entry)
    };
    corpus.labels =
        read_labels_csv(&file(LABELS)?[..]).map_err(|e| integrity(LABELS, e.to_string()))?;
    corpus.topics = parse_jsonl::<Topic>(TOPICS, &file(TOPICS)?)?;
    corpus.state = serde_json::from_slice::<CorpusState>(&file(STATE)?)
        .map_err(|e| integrity(STATE, e.to_string()))?;
    for (i, provider) in manifest.providers.iter().enumerate() {
        let rel = provider_file(i, &provider.id);
        let (id, dim, entries) = decode_embeddings(&rel, &file(&rel)?)?;
        if id != provider.id || dim != provider.dimension {
            return Err(integrity(&rel, "provider header disagrees with manifest"));
        }
        for (pid, values) in entries {
            if values.len() != dim {
                return Err(integrity(
                    &rel,
                    format!("vector for {pid} has dimension {}", values.len()),
                ));
            }
            corpus
                .embeddings
                .insert(pid, EmbeddingVector::new(values, id.clone()));
        }
    }
    for rel in manifest.files.keys() {
        let Some(name) = rel
            .strip_prefix("checkpoints/")
            .and_then(|r| r.strip_suffix(".ckpt"))
        else {
            continue;
        };
        if !valid_checkpoint_name(name) {
            return Err(integrity(rel, "bad checkpoint name"));
        }
        let params = TensionModelParams::from_bytes(rel, &file(rel)?)
            .map_err(|e| integrity(rel, e.to_string()))?;
        corpus.checkpoints.insert(name.to_owned(), params);
    }
    corpus
        .validate()
        .map_err(|e| integrity(format!("{name}/{MANIFEST}"), e.to_string()))?;
    Ok(corpus)
}
