use std::sync::Arc;
use std::time::Duration;

use serde::Serialize;

use super::{
    CacheKey, EmbedError, EmbeddingCache, EmbeddingProvider, EmbeddingVector, ProviderKind,
};

/// Request body `{"inputs": [string, ...]}`, response body
/// `[[float, ...], ...]` with one row per input in order. Both use this type.
pub const EMBED_MEDIA_TYPE: &str = "application/json";

/// Sends one batch of texts to an encoder service and returns the raw rows.
pub trait EmbeddingTransport: Send + Sync {
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError>;
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    inputs: &'a [String],
}

pub struct HttpTransport {
    url: String,
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Result<Self, EmbedError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| EmbedError::Transport(e.to_string()))?;
        Ok(HttpTransport {
            url: url.into(),
            client,
        })
    }
}

impl EmbeddingTransport for HttpTransport {
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError> {
        let response = self
            .client
            .post(&self.url)
            .header(reqwest::header::CONTENT_TYPE, EMBED_MEDIA_TYPE)
            .header(reqwest::header::ACCEPT, EMBED_MEDIA_TYPE)
            .json(&EmbedRequest { inputs: texts })
            .send()
            .map_err(|e| EmbedError::Transport(e.to_string()))?;
        let status = response.status();
        if status.is_server_error() {
            return Err(EmbedError::Transport(format!("service returned {status}")));
        }
        if !status.is_success() {
            return Err(EmbedError::Protocol(format!("service returned {status}")));
        }
        response
            .json::<Vec<Vec<f64>>>()
            .map_err(|e| EmbedError::Protocol(format!("malformed response body: {e}")))
    }
}

/// An external encoder behind a transport, with a shared content cache.
pub struct ExternalProvider {
    provider: EmbeddingProvider,
    transport: Box<dyn EmbeddingTransport>,
    cache: Arc<EmbeddingCache>,
}

impl ExternalProvider {
    pub fn new(
        id: impl Into<String>,
        dimension: usize,
        transport: Box<dyn EmbeddingTransport>,
        cache: Arc<EmbeddingCache>,
    ) -> Result<Self, EmbedError> {
        Ok(ExternalProvider {
            provider: EmbeddingProvider::new(id, dimension, ProviderKind::ExternalService)?,
            transport,
            cache,
        })
    }

    pub fn provider(&self) -> &EmbeddingProvider {
        &self.provider
    }

    pub fn cache(&self) -> &Arc<EmbeddingCache> {
        &self.cache
    }

    /// One vector per text in input order. Cached texts are served locally;
    /// the rest go to the service in a single batch.
    pub fn fetch_embeddings(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        if texts.is_empty() {
            return Err(EmbedError::EmptyBatch);
        }
        let id = &self.provider.id;
        let mut out: Vec<Option<EmbeddingVector>> = texts
            .iter()
            .map(|t| self.cache.get(&CacheKey::new(id, t)))
            .collect();
        let missing: Vec<usize> = (0..texts.len()).filter(|&i| out[i].is_none()).collect();
        if !missing.is_empty() {
            let batch: Vec<String> = missing.iter().map(|&i| texts[i].clone()).collect();
            let rows = self.transport.embed_batch(&batch)?;
            if rows.len() != batch.len() {
                return Err(EmbedError::Protocol(format!(
                    "expected {} vectors, got {}",
                    batch.len(),
                    rows.len()
                )));
            }
            if let Some(bad) = rows.iter().find(|r| r.len() != self.provider.dimension) {
                return Err(EmbedError::Protocol(format!(
                    "expected dimension {}, got {}",
                    self.provider.dimension,
                    bad.len()
                )));
            }
            if rows.iter().flatten().any(|v| !v.is_finite()) {
                return Err(EmbedError::Protocol("non-finite value in response".into()));
            }
            for (&i, row) in missing.iter().zip(rows) {
                let v = EmbeddingVector::new(row, id.clone());
                self.cache.insert(CacheKey::new(id, &texts[i]), &v);
                out[i] = Some(v);
            }
        }
        Ok(out.into_iter().map(|v| v.expect("filled above")).collect())
    }
}
