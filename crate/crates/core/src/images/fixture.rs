use std::sync::OnceLock;

use serde::Deserialize;

use super::ImageAsset;
use crate::design::{ImageModifier, KeywordQuery};

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct FixtureEntry {
    pub name: String,
    pub modifier: Option<ImageModifier>,
    pub url: String,
    pub width_px: u32,
    pub height_px: u32,
    pub attribution: String,
}

impl FixtureEntry {
    pub(super) fn to_asset(&self, query_used: &str) -> ImageAsset {
        ImageAsset {
            url: self.url.clone(),
            width_px: self.width_px,
            height_px: self.height_px,
            attribution: self.attribution.clone(),
            query_used: query_used.to_string(),
        }
    }
}

#[derive(Deserialize)]
struct FixtureFile {
    entries: Vec<FixtureEntry>,
}

/// The committed fixture table.
pub fn fixture_table() -> &'static [FixtureEntry] {
    static TABLE: OnceLock<Vec<FixtureEntry>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let file: FixtureFile = serde_json::from_str(include_str!("../../fixtures/images.json"))
            .expect("fixtures/images.json is valid");
        file.entries
    })
}

pub(super) fn lookup(query: &KeywordQuery) -> Vec<&'static FixtureEntry> {
    fixture_table()
        .iter()
        .filter(|e| e.name == query.name && e.modifier == query.modifier)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_is_well_formed() {
        let table = fixture_table();
        assert!(!table.is_empty());
        for e in table {
            assert!(super::super::is_placeholder_url(&e.url), "{}", e.url);
            assert!(e.width_px > 0 && e.height_px > 0);
        }
        let mut urls: Vec<_> = table.iter().map(|e| &e.url).collect();
        urls.sort();
        urls.dedup();
        assert_eq!(urls.len(), table.len());
    }
}
