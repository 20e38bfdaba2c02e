//! Image keyword resolution against a stock-image search API.
//!
//! The live transport is a Pexels-compatible `GET` with `query`,
//! `orientation`, `size` and `per_page` parameters and the API key in the
//! `Authorization` header. With `endpoint_url = "fixture"` results come from
//! the committed table in `fixtures/images.json` instead.
//!
//! Results are cached per `(name, modifier)` in memory and as JSON files
//! under `cache_dir`. Identical concurrent queries coalesce into one lookup.

mod cache;
mod fixture;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;
use tokio::sync::Mutex;
use tracing::{debug, warn};

use crate::design::KeywordQuery;

pub use cache::DiskCache;
pub use fixture::{fixture_table, FixtureEntry};

/// `endpoint_url` value selecting the offline fixture table.
pub const FIXTURE_ENDPOINT: &str = "fixture";

/// Environment variable read for the image API key unless configured.
pub const DEFAULT_CREDENTIALS_ENV_VAR: &str = "FD_IMAGE_API_KEY";

fn default_credentials_env_var() -> String {
    DEFAULT_CREDENTIALS_ENV_VAR.into()
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ImageError {
    #[error("image search unavailable: {0}")]
    SearchUnavailable(String),
    #[error("no images found for {0}")]
    NoResults(KeywordQuery),
    #[error("invalid image search config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageAsset {
    pub url: String,
    pub width_px: u32,
    pub height_px: u32,
    pub attribution: String,
    pub query_used: String,
}

impl ImageAsset {
    pub fn is_placeholder(&self) -> bool {
        is_placeholder_url(&self.url)
    }
}

/// `placeholder://...` and `placeholder-fixture://...` URLs.
pub fn is_placeholder_url(url: &str) -> bool {
    url.split_once("://")
        .is_some_and(|(scheme, _)| scheme == "placeholder" || scheme.starts_with("placeholder-"))
}

fn default_results_per_query() -> u32 {
    1
}
fn default_timeout_ms() -> u64 {
    10_000
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageSearchConfig {
    /// Search endpoint URL, or `"fixture"`.
    pub endpoint_url: String,
    #[serde(default = "default_credentials_env_var")]
    pub credentials_env_var: String,
    #[serde(default = "default_results_per_query")]
    pub results_per_query: u32,
    /// Where cached results are kept. No disk cache when absent.
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
}

impl Default for ImageSearchConfig {
    fn default() -> Self {
        Self::fixture()
    }
}

impl ImageSearchConfig {
    pub fn fixture() -> Self {
        Self {
            endpoint_url: FIXTURE_ENDPOINT.into(),
            credentials_env_var: default_credentials_env_var(),
            results_per_query: 1,
            cache_dir: None,
            timeout_ms: default_timeout_ms(),
        }
    }

    pub fn is_fixture(&self) -> bool {
        self.endpoint_url == FIXTURE_ENDPOINT
    }

    pub fn validate(&self) -> Result<(), ImageError> {
        if self.results_per_query < 1 {
            return Err(ImageError::InvalidConfig("results_per_query must be at least 1".into()));
        }
        if !self.is_fixture() {
            reqwest::Url::parse(&self.endpoint_url)
                .map_err(|e| ImageError::InvalidConfig(format!("endpoint_url: {e}")))?;
        }
        Ok(())
    }
}

/// The query string sent for a keyword, also recorded as `query_used`.
pub fn query_string(query: &KeywordQuery, per_page: u32) -> String {
    let mut pairs = vec![("query", query.name.clone())];
    if let Some(m) = query.modifier {
        if let Some(o) = m.orientation() {
            pairs.push(("orientation", o.to_string()));
        }
        if let Some(s) = m.size() {
            pairs.push(("size", s.to_string()));
        }
    }
    pairs.push(("per_page", per_page.to_string()));
    pairs
        .into_iter()
        .map(|(k, v)| format!("{k}={}", percent_encoding::utf8_percent_encode(&v, percent_encoding::NON_ALPHANUMERIC)))
        .collect::<Vec<_>>()
        .join("&")
}

/// Assets chosen for a set of queries, with degraded-mode warnings.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Resolution {
    pub assignments: HashMap<KeywordQuery, ImageAsset>,
    pub warnings: Vec<String>,
}

/// One in-flight or finished search, shared by concurrent callers.
type SearchSlot = Arc<Mutex<Option<Result<Vec<ImageAsset>, ImageError>>>>;

pub struct ImageClient {
    config: ImageSearchConfig,
    http: Option<reqwest::Client>,
    disk: Option<DiskCache>,
    memory: Mutex<HashMap<KeywordQuery, SearchSlot>>,
    network_calls: AtomicUsize,
}

impl ImageClient {
    pub fn new(config: ImageSearchConfig) -> Result<Self, ImageError> {
        config.validate()?;
        let http = if config.is_fixture() {
            None
        } else {
            Some(
                reqwest::Client::builder()
                    .timeout(Duration::from_millis(config.timeout_ms))
                    .build()
                    .map_err(|e| ImageError::InvalidConfig(e.to_string()))?,
            )
        };
        let disk = config.cache_dir.clone().map(DiskCache::new);
        Ok(Self { config, http, disk, memory: Mutex::new(HashMap::new()), network_calls: AtomicUsize::new(0) })
    }

    pub fn config(&self) -> &ImageSearchConfig {
        &self.config
    }

    /// Lookups that reached the search backend (live API or fixture table).
    pub fn network_calls(&self) -> usize {
        self.network_calls.load(Ordering::SeqCst)
    }

    /// Cached assets for `query`, without touching the backend.
    pub async fn cache_lookup(&self, query: &KeywordQuery) -> Option<Vec<ImageAsset>> {
        let slot = self.memory.lock().await.get(query).cloned();
        if let Some(slot) = slot {
            if let Some(Ok(assets)) = slot.lock().await.as_ref() {
                return Some(assets.clone());
            }
        }
        self.disk.as_ref().and_then(|d| d.load(query))
    }

    /// Search for `query`, answering from cache when possible.
    pub async fn search(&self, query: &KeywordQuery) -> Result<Vec<ImageAsset>, ImageError> {
        let slot = {
            let mut memory = self.memory.lock().await;
            memory.entry(query.clone()).or_default().clone()
        };
        // Holding the per-key slot makes concurrent identical searches wait
        // for the first one and then reuse its result.
        let mut slot = slot.lock().await;
        if let Some(done) = slot.as_ref() {
            if !matches!(done, Err(ImageError::SearchUnavailable(_))) {
                return done.clone();
            }
        }
        if let Some(assets) = self.disk.as_ref().and_then(|d| d.load(query)) {
            *slot = Some(Ok(assets.clone()));
            return Ok(assets);
        }
        let result = self.fetch(query).await;
        if let (Ok(assets), Some(disk)) = (&result, &self.disk) {
            if let Err(e) = disk.store(query, assets) {
                warn!("could not write image cache entry for {query}: {e}");
            }
        }
        *slot = Some(result.clone());
        result
    }

    async fn fetch(&self, query: &KeywordQuery) -> Result<Vec<ImageAsset>, ImageError> {
        self.network_calls.fetch_add(1, Ordering::SeqCst);
        let per_page = self.config.results_per_query;
        let query_used = query_string(query, per_page);
        let assets: Vec<ImageAsset> = match &self.http {
            None => fixture::lookup(query)
                .into_iter()
                .take(per_page as usize)
                .map(|e| e.to_asset(&query_used))
                .collect(),
            Some(http) => self.fetch_live(http, &query_used).await?,
        };
        debug!("image search {query}: {} result(s)", assets.len());
        if assets.is_empty() {
            return Err(ImageError::NoResults(query.clone()));
        }
        Ok(assets)
    }

    async fn fetch_live(
        &self,
        http: &reqwest::Client,
        query_used: &str,
    ) -> Result<Vec<ImageAsset>, ImageError> {
        let key = std::env::var(&self.config.credentials_env_var)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or_else(|| {
                ImageError::SearchUnavailable(format!("{} is not set", self.config.credentials_env_var))
            })?;
        let mut url = reqwest::Url::parse(&self.config.endpoint_url)
            .map_err(|e| ImageError::InvalidConfig(e.to_string()))?;
        url.set_query(Some(query_used));
        let response = http
            .get(url)
            .header(reqwest::header::AUTHORIZATION, key)
            .send()
            .await
            .map_err(|e| ImageError::SearchUnavailable(if e.is_timeout() { "timeout" } else { "transport error" }.into()))?;
        let status = response.status();
        if !status.is_success() {
            return Err(ImageError::SearchUnavailable(format!("HTTP {}", status.as_u16())));
        }
        let body: Value = response
            .json()
            .await
            .map_err(|_| ImageError::SearchUnavailable("malformed response body".into()))?;
        Ok(parse_photos(&body, query_used, self.config.results_per_query as usize))
    }

    /// Resolve each query to its first asset. Failures never abort: the
    /// query is left unassigned and a warning explains why.
    pub async fn resolve(&self, queries: &[KeywordQuery]) -> Resolution {
        let mut resolution = Resolution::default();
        for query in queries {
            match self.search(query).await {
                Ok(mut assets) => {
                    resolution.assignments.insert(query.clone(), assets.swap_remove(0));
                }
                Err(e) => {
                    warn!("{e}");
                    resolution.warnings.push(format!("image search for {query} failed: {e}"));
                }
            }
        }
        resolution
    }
}

/// Assets from a Pexels-shaped `{"photos": [...]}` body. Non-https sources
/// are skipped.
fn parse_photos(body: &Value, query_used: &str, limit: usize) -> Vec<ImageAsset> {
    let Some(photos) = body.get("photos").and_then(Value::as_array) else {
        return Vec::new();
    };
    photos
        .iter()
        .filter_map(|p| {
            let url = p.pointer("/src/original").or_else(|| p.get("url"))?.as_str()?;
            if !url.starts_with("https://") {
                return None;
            }
            let width_px = u32::try_from(p.get("width")?.as_u64()?).ok().filter(|w| *w > 0)?;
            let height_px = u32::try_from(p.get("height")?.as_u64()?).ok().filter(|h| *h > 0)?;
            let attribution = p
                .get("photographer")
                .and_then(Value::as_str)
                .map(|name| format!("Photo by {name}"))
                .unwrap_or_default();
            Some(ImageAsset { url: url.to_string(), width_px, height_px, attribution, query_used: query_used.to_string() })
        })
        .take(limit)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::ImageModifier;
    use serde_json::json;

    fn q(name: &str, m: Option<ImageModifier>) -> KeywordQuery {
        KeywordQuery::new(name, m)
    }

    #[tokio::test]
    async fn fixture_hero_landscape() {
        let client = ImageClient::new(ImageSearchConfig::fixture()).unwrap();
        let assets = client.search(&q("hero", Some(ImageModifier::Landscape))).await.unwrap();
        assert_eq!(assets.len(), 1);
        assert_eq!(assets[0].url, "placeholder-fixture://hero-landscape-0");
        assert_eq!((assets[0].width_px, assets[0].height_px), (1920, 1080));
        assert_eq!(assets[0].query_used, "query=hero&orientation=landscape&per_page=1");
    }

    #[tokio::test]
    async fn fixture_profile_large_records_size() {
        let client = ImageClient::new(ImageSearchConfig::fixture()).unwrap();
        let assets = client.search(&q("profile", Some(ImageModifier::Large))).await.unwrap();
        assert_eq!(assets[0].query_used, "query=profile&size=large&per_page=1");
    }

    #[tokio::test]
    async fn unknown_fixture_name_is_no_results() {
        let client = ImageClient::new(ImageSearchConfig::fixture()).unwrap();
        let query = q("zeppelin", Some(ImageModifier::Small));
        assert_eq!(client.search(&query).await, Err(ImageError::NoResults(query.clone())));
        let res = client.resolve(&[query]).await;
        assert!(res.assignments.is_empty());
        assert_eq!(res.warnings.len(), 1);
    }

    #[tokio::test]
    async fn results_per_query_limits_fixture_results() {
        let cfg = ImageSearchConfig { results_per_query: 5, ..ImageSearchConfig::fixture() };
        let client = ImageClient::new(cfg).unwrap();
        let assets = client.search(&q("gallery", None)).await.unwrap();
        assert_eq!(assets.len(), 2);
        assert!(ImageClient::new(ImageSearchConfig { results_per_query: 0, ..ImageSearchConfig::fixture() }).is_err());
    }

    #[tokio::test]
    async fn repeated_and_concurrent_queries_hit_backend_once() {
        let client = Arc::new(ImageClient::new(ImageSearchConfig::fixture()).unwrap());
        let query = q("hero", Some(ImageModifier::Landscape));
        let tasks: Vec<_> = (0..8)
            .map(|_| {
                let c = client.clone();
                let query = query.clone();
                tokio::spawn(async move { c.search(&query).await })
            })
            .collect();
        for t in tasks {
            t.await.unwrap().unwrap();
        }
        client.search(&query).await.unwrap();
        assert_eq!(client.network_calls(), 1);
        let missing = q("zeppelin", None);
        let _ = client.search(&missing).await;
        let _ = client.search(&missing).await;
        assert_eq!(client.network_calls(), 2);
    }

    #[tokio::test]
    async fn cache_lookup_before_and_after_search() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ImageSearchConfig { cache_dir: Some(dir.path().to_path_buf()), ..ImageSearchConfig::fixture() };
        let client = ImageClient::new(cfg.clone()).unwrap();
        let query = q("banner", Some(ImageModifier::Medium));
        assert_eq!(client.cache_lookup(&query).await, None);
        let searched = client.search(&query).await.unwrap();
        assert_eq!(client.cache_lookup(&query).await, Some(searched.clone()));
        // a fresh client answers from disk without a backend call
        let fresh = ImageClient::new(cfg).unwrap();
        assert_eq!(fresh.search(&query).await.unwrap(), searched);
        assert_eq!(fresh.network_calls(), 0);
    }

    #[tokio::test]
    async fn live_mode_without_credential_is_unavailable() {
        let cfg = ImageSearchConfig {
            endpoint_url: "http://127.0.0.1:9/v1/search".into(),
            credentials_env_var: "FD_TEST_IMAGE_KEY_NEVER_SET".into(),
            ..ImageSearchConfig::fixture()
        };
        let client = ImageClient::new(cfg).unwrap();
        let query = q("hero", None);
        assert!(matches!(client.search(&query).await, Err(ImageError::SearchUnavailable(_))));
        let res = client.resolve(&[query]).await;
        assert!(res.assignments.is_empty());
        assert_eq!(res.warnings.len(), 1);
    }

    #[test]
    fn parses_pexels_shape() {
        let body = json!({"photos": [
            {"width": 4000, "height": 3000, "photographer": "Ann", "src": {"original": "https://images.example/1.jpg"}},
            {"width": 10, "height": 10, "src": {"original": "http://insecure/2.jpg"}},
            {"width": 0, "height": 10, "src": {"original": "https://images.example/3.jpg"}},
            {"width": 800, "height": 600, "src": {"original": "https://images.example/4.jpg"}}
        ]});
        let assets = parse_photos(&body, "query=x", 5);
        assert_eq!(assets.len(), 2);
        assert_eq!(assets[0].attribution, "Photo by Ann");
        assert_eq!(assets[1].url, "https://images.example/4.jpg");
        assert_eq!(parse_photos(&body, "q", 1).len(), 1);
        assert!(parse_photos(&json!({}), "q", 1).is_empty());
    }

    #[test]
    fn placeholder_urls() {
        assert!(is_placeholder_url("placeholder://hero"));
        assert!(is_placeholder_url("placeholder-fixture://hero-landscape-0"));
        assert!(!is_placeholder_url("https://placeholder.example/x"));
        assert!(!is_placeholder_url("placeholderx://a"));
    }
}
