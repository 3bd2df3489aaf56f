use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tension_core::embed::{
    cosine, hash_embed, nearest_neighbors, EmbedError, EmbeddingCache, EmbeddingIndex,
    EmbeddingTransport, EmbeddingVector, ExternalProvider, HttpTransport, IdfTable,
};
use tension_core::preprocess::StemBag;
use tension_core::ParagraphId;

/// Encodes each text as `[len, first byte, dimension-2 zeros]` and counts calls.
struct FakeEncoder {
    dimension: usize,
    calls: AtomicUsize,
    seen: Mutex<Vec<Vec<String>>>,
    mangle: fn(Vec<Vec<f64>>) -> Vec<Vec<f64>>,
}

impl FakeEncoder {
    fn new(dimension: usize) -> Self {
        FakeEncoder {
            dimension,
            calls: AtomicUsize::new(0),
            seen: Mutex::new(Vec::new()),
            mangle: |rows| rows,
        }
    }
}

struct Shared(Arc<FakeEncoder>);

impl EmbeddingTransport for Shared {
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError> {
        let this = &self.0;
        this.calls.fetch_add(1, Ordering::SeqCst);
        this.seen.lock().unwrap().push(texts.to_vec());
        let rows = texts
            .iter()
            .map(|t| {
                let mut row = vec![0.0; this.dimension];
                row[0] = t.len() as f64;
                row[1] = f64::from(*t.as_bytes().first().unwrap_or(&0));
                row
            })
            .collect();
        Ok((this.mangle)(rows))
    }
}

fn provider(encoder: &Arc<FakeEncoder>) -> ExternalProvider {
    ExternalProvider::new(
        "fake-encoder",
        encoder.dimension,
        Box::new(Shared(Arc::clone(encoder))),
        Arc::new(EmbeddingCache::new()),
    )
    .unwrap()
}

fn texts(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

#[test]
fn results_follow_input_order() {
    let encoder = Arc::new(FakeEncoder::new(4));
    let p = provider(&encoder);
    let out = p.fetch_embeddings(&texts(&["a", "bbb", "cc"])).unwrap();
    let lens: Vec<f64> = out.iter().map(|v| v.values()[0]).collect();
    assert_eq!(lens, vec![1.0, 3.0, 2.0]);
    assert!(out.iter().all(|v| v.provider_id() == "fake-encoder"));
}

#[test]
fn cached_texts_skip_the_transport() {
    let encoder = Arc::new(FakeEncoder::new(4));
    let p = provider(&encoder);
    let first = p.fetch_embeddings(&texts(&["alpha", "beta"])).unwrap();
    assert_eq!(encoder.calls.load(Ordering::SeqCst), 1);
    let second = p.fetch_embeddings(&texts(&["alpha", "beta"])).unwrap();
    assert_eq!(encoder.calls.load(Ordering::SeqCst), 1);
    assert_eq!(first, second);
    for (a, b) in first.iter().zip(&second) {
        let bits_a: Vec<u64> = a.values().iter().map(|v| v.to_bits()).collect();
        let bits_b: Vec<u64> = b.values().iter().map(|v| v.to_bits()).collect();
        assert_eq!(bits_a, bits_b);
    }
    p.fetch_embeddings(&texts(&["beta", "gamma", "alpha"]))
        .unwrap();
    assert_eq!(encoder.calls.load(Ordering::SeqCst), 2);
    assert_eq!(encoder.seen.lock().unwrap()[1], texts(&["gamma"]));
}

#[test]
fn cache_survives_disk_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let encoder = Arc::new(FakeEncoder::new(3));
    let p = provider(&encoder);
    let before = p.fetch_embeddings(&texts(&["one", "two"])).unwrap();
    let path = dir.path().join("cache.bin");
    p.cache().save(&path).unwrap();
    let reloaded = Arc::new(EmbeddingCache::load(&path).unwrap());
    let fresh = Arc::new(FakeEncoder::new(3));
    let q = ExternalProvider::new(
        "fake-encoder",
        3,
        Box::new(Shared(Arc::clone(&fresh))),
        reloaded,
    )
    .unwrap();
    assert_eq!(q.fetch_embeddings(&texts(&["one", "two"])).unwrap(), before);
    assert_eq!(fresh.calls.load(Ordering::SeqCst), 0);

    let mut bytes = std::fs::read(&path).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 0xff;
    std::fs::write(&path, &bytes).unwrap();
    assert!(EmbeddingCache::load(&path).is_err());
}

#[test]
fn wrong_dimension_is_a_protocol_error() {
    let mut fake = FakeEncoder::new(4);
    fake.mangle = |rows| {
        rows.into_iter()
            .map(|mut r| {
                r.pop();
                r
            })
            .collect()
    };
    let encoder = Arc::new(fake);
    let p = provider(&encoder);
    let err = p.fetch_embeddings(&texts(&["x"])).unwrap_err();
    assert!(matches!(err, EmbedError::Protocol(_)), "{err:?}");
    assert!(!err.is_retryable());
    assert!(p.cache().is_empty());
}

#[test]
fn partial_response_is_a_protocol_error() {
    let mut fake = FakeEncoder::new(4);
    fake.mangle = |mut rows| {
        rows.pop();
        rows
    };
    let encoder = Arc::new(fake);
    let p = provider(&encoder);
    let err = p.fetch_embeddings(&texts(&["x", "y"])).unwrap_err();
    assert!(matches!(err, EmbedError::Protocol(_)), "{err:?}");
    assert!(p.cache().is_empty());
}

#[test]
fn empty_batch_is_rejected() {
    let encoder = Arc::new(FakeEncoder::new(4));
    assert!(matches!(
        provider(&encoder).fetch_embeddings(&[]),
        Err(EmbedError::EmptyBatch)
    ));
}

/// Serves `responses` in order, one per connection, and records request bodies.
fn serve(responses: Vec<(u16, String)>) -> (String, thread::JoinHandle<Vec<String>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/embed", listener.local_addr().unwrap());
    let handle = thread::spawn(move || {
        let mut bodies = Vec::new();
        for (status, body) in responses {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream);
            let mut length = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                if let Some((k, v)) = line.split_once(':') {
                    if k.eq_ignore_ascii_case("content-length") {
                        length = v.trim().parse().unwrap();
                    }
                }
            }
            let mut request = vec![0; length];
            reader.read_exact(&mut request).unwrap();
            bodies.push(String::from_utf8(request).unwrap());
            let mut stream = reader.into_inner();
            write!(
                stream,
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
        bodies
    });
    (url, handle)
}

#[test]
fn http_transport_speaks_the_json_contract() {
    let (url, server) = serve(vec![
        (200, "[[1.0,2.0],[3.0,4.5]]".into()),
        (503, "{}".into()),
        (400, "{}".into()),
        (200, "not json".into()),
    ]);
    let transport = HttpTransport::new(url, Duration::from_secs(5)).unwrap();
    let rows = transport.embed_batch(&texts(&["a", "b"])).unwrap();
    assert_eq!(rows, vec![vec![1.0, 2.0], vec![3.0, 4.5]]);
    let unavailable = transport.embed_batch(&texts(&["a"])).unwrap_err();
    assert!(unavailable.is_retryable(), "{unavailable:?}");
    assert!(matches!(
        transport.embed_batch(&texts(&["a"])),
        Err(EmbedError::Protocol(_))
    ));
    assert!(matches!(
        transport.embed_batch(&texts(&["a"])),
        Err(EmbedError::Protocol(_))
    ));
    let bodies = server.join().unwrap();
    let first: serde_json::Value = serde_json::from_str(&bodies[0]).unwrap();
    assert_eq!(first, serde_json::json!({"inputs": ["a", "b"]}));
}

#[test]
fn unreachable_service_is_retryable() {
    let port = TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let transport =
        HttpTransport::new(format!("http://127.0.0.1:{port}/"), Duration::from_secs(2)).unwrap();
    let err = transport.embed_batch(&texts(&["a"])).unwrap_err();
    assert!(matches!(err, EmbedError::Transport(_)));
}

fn id(n: usize) -> ParagraphId {
    ParagraphId::new(format!("WHC-35:{n:04}"))
}

fn random_index(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> EmbeddingIndex {
    (0..n)
        .map(|i| {
            let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            (id(i), EmbeddingVector::new(v, "p"))
        })
        .collect()
}

fn brute_force_knn(query: &ParagraphId, k: usize, pool: &EmbeddingIndex) -> Vec<ParagraphId> {
    let q = &pool[query];
    let mut best: Vec<(f64, ParagraphId)> = Vec::new();
    for (other, v) in pool {
        if other == query {
            continue;
        }
        let dot: f64 = q.values().iter().zip(v.values()).map(|(a, b)| a * b).sum();
        let norms = q.values().iter().map(|a| a * a).sum::<f64>().sqrt()
            * v.values().iter().map(|a| a * a).sum::<f64>().sqrt();
        best.push((dot / norms, other.clone()));
    }
    // selection by repeated maximum
    let mut out = Vec::new();
    while out.len() < k && !best.is_empty() {
        let mut top = 0;
        for i in 1..best.len() {
            let better =
                best[i].0 > best[top].0 || (best[i].0 == best[top].0 && best[i].1 < best[top].1);
            if better {
                top = i;
            }
        }
        out.push(best.remove(top).1);
    }
    out
}

#[test]
fn knn_matches_brute_force_on_five_vectors() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..50 {
        let pool = random_index(&mut rng, 5, 6);
        for q in pool.keys() {
            let got: Vec<ParagraphId> = nearest_neighbors(q, 2, &pool)
                .unwrap()
                .into_iter()
                .map(|(i, _)| i)
                .collect();
            assert_eq!(got, brute_force_knn(q, 2, &pool));
        }
    }
}

#[test]
fn knn_rejects_mixed_providers_and_unknown_ids() {
    let mut pool: EmbeddingIndex = BTreeMap::new();
    pool.insert(id(0), EmbeddingVector::new(vec![1.0, 0.0], "a"));
    pool.insert(id(1), EmbeddingVector::new(vec![0.0, 1.0], "b"));
    assert!(matches!(
        nearest_neighbors(&id(0), 1, &pool),
        Err(EmbedError::ProviderMismatch { .. })
    ));
    assert!(matches!(
        nearest_neighbors(&id(9), 1, &pool),
        Err(EmbedError::NotEmbedded(_))
    ));
}

fn bag_strategy() -> impl Strategy<Value = StemBag> {
    prop::collection::vec(("[a-z]{3,8}", 1u32..4), 0..12)
        .prop_map(|pairs| pairs.into_iter().collect())
}

proptest! {
    #[test]
    fn hash_embeddings_are_unit_or_zero(bags in prop::collection::vec(bag_strategy(), 1..6), dim in 2usize..64) {
        let idf = IdfTable::from_bags(&bags);
        for bag in &bags {
            let v = hash_embed(bag, dim, &idf);
            prop_assert_eq!(v.dimension(), dim);
            let n = v.norm();
            prop_assert!(n == 0.0 || (n - 1.0).abs() < 1e-12);
            prop_assert_eq!(&v, &hash_embed(bag, dim, &idf));
        }
    }

    #[test]
    fn cosine_is_symmetric_and_bounded(a in prop::collection::vec(-5.0f64..5.0, 4), b in prop::collection::vec(-5.0f64..5.0, 4)) {
        let (va, vb) = (EmbeddingVector::new(a, "p"), EmbeddingVector::new(b, "p"));
        let c = cosine(&va, &vb);
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&c));
        prop_assert_eq!(c, cosine(&vb, &va));
    }
}
