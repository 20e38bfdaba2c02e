use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use tracing::warn;

use super::ImageAsset;
use crate::design::KeywordQuery;

/// JSON files `<name>.<modifier|any>.json` under a directory.
#[derive(Debug, Clone)]
pub struct DiskCache {
    dir: PathBuf,
}

impl DiskCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn path_for(&self, query: &KeywordQuery) -> PathBuf {
        let modifier = query.modifier.map(|m| m.as_str()).unwrap_or("any");
        self.dir.join(format!("{}.{modifier}.json", query.name))
    }

    /// Stored assets, or `None` on a miss. Unreadable entries are evicted
    /// and reported as a miss.
    pub fn load(&self, query: &KeywordQuery) -> Option<Vec<ImageAsset>> {
        let path = self.path_for(query);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return None,
            Err(e) => {
                warn!("image cache entry {} unreadable: {e}", path.display());
                evict(&path);
                return None;
            }
        };
        match serde_json::from_slice::<Vec<ImageAsset>>(&bytes) {
            Ok(assets) if !assets.is_empty() => Some(assets),
            _ => {
                warn!("image cache entry {} is corrupt; evicting", path.display());
                evict(&path);
                None
            }
        }
    }

    pub fn store(&self, query: &KeywordQuery, assets: &[ImageAsset]) -> io::Result<()> {
        fs::create_dir_all(&self.dir)?;
        let path = self.path_for(query);
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, serde_json::to_vec_pretty(assets)?)?;
        fs::rename(tmp, path)
    }
}

fn evict(path: &Path) {
    if let Err(e) = fs::remove_file(path) {
        warn!("could not evict {}: {e}", path.display());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::ImageModifier;
    use crate::images::{ImageClient, ImageSearchConfig};

    #[tokio::test]
    async fn corrupt_entry_is_evicted_then_repopulated() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ImageSearchConfig { cache_dir: Some(dir.path().to_path_buf()), ..ImageSearchConfig::fixture() };
        let query = KeywordQuery::new("hero", Some(ImageModifier::Landscape));

        let first = ImageClient::new(cfg.clone()).unwrap();
        let assets = first.search(&query).await.unwrap();
        let cache = DiskCache::new(dir.path());
        let path = cache.path_for(&query);
        assert!(path.exists());

        fs::write(&path, b"{ not json").unwrap();
        let second = ImageClient::new(cfg).unwrap();
        assert_eq!(second.cache_lookup(&query).await, None);
        assert!(!path.exists(), "corrupt entry evicted");

        assert_eq!(second.search(&query).await.unwrap(), assets);
        assert_eq!(second.network_calls(), 1);
        assert_eq!(cache.load(&query), Some(assets));
    }

    #[test]
    fn names_with_dashes_do_not_collide() {
        let cache = DiskCache::new("/tmp/x");
        let a = cache.path_for(&KeywordQuery::new("hero-landscape", None));
        let b = cache.path_for(&KeywordQuery::new("hero", Some(ImageModifier::Landscape)));
        assert_ne!(a, b);
    }
}
