use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::similarity::{edit_similarity, jaro_winkler, tfidf_cosine, CorpusStats};
use crate::ingest::{Listing, PropertyType};
use crate::quarter::Quarter;

pub const N_FEATURES: usize = 5;

/// Blocking key: listings can only be duplicates when all four agree.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BlockKey {
    pub zip: String,
    pub quarter: Quarter,
    pub property_type: PropertyType,
    pub price_chf: u64,
}

impl BlockKey {
    pub fn of(l: &Listing) -> Self {
        Self {
            zip: l.zip.clone(),
            quarter: l.listed_quarter,
            property_type: l.property_type,
            price_chf: l.price_chf,
        }
    }
}

/// Unordered pair of listing ids from one block, stored with `a < b`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CandidatePair {
    pub a: String,
    pub b: String,
    pub block: BlockKey,
}

impl CandidatePair {
    pub fn new(x: &str, y: &str, block: BlockKey) -> Self {
        let (a, b) = if x <= y { (x, y) } else { (y, x) };
        Self { a: a.to_string(), b: b.to_string(), block }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairFeatures {
    pub title_jaro_winkler: f64,
    pub title_edit_sim: f64,
    pub desc_tfidf_cosine: f64,
    pub rooms_equal: f64,
    pub space_rel_diff: f64,
}

impl PairFeatures {
    pub fn as_array(&self) -> [f64; N_FEATURES] {
        [
            self.title_jaro_winkler,
            self.title_edit_sim,
            self.desc_tfidf_cosine,
            self.rooms_equal,
            self.space_rel_diff,
        ]
    }

    pub fn from_array(x: [f64; N_FEATURES]) -> Self {
        Self {
            title_jaro_winkler: x[0],
            title_edit_sim: x[1],
            desc_tfidf_cosine: x[2],
            rooms_equal: x[3],
            space_rel_diff: x[4],
        }
    }
}

/// Groups listing indices by block, in key order.
pub fn blocks(listings: &[Listing]) -> BTreeMap<BlockKey, Vec<usize>> {
    let mut out: BTreeMap<BlockKey, Vec<usize>> = BTreeMap::new();
    for (i, l) in listings.iter().enumerate() {
        out.entry(BlockKey::of(l)).or_default().push(i);
    }
    for members in out.values_mut() {
        members.sort_by(|&x, &y| listings[x].id.cmp(&listings[y].id));
    }
    out
}

/// All unordered pairs agreeing on zip, quarter, property type and price.
pub fn block_pairs(listings: &[Listing]) -> Vec<CandidatePair> {
    let mut pairs = Vec::new();
    for (key, members) in blocks(listings) {
        for (i, &x) in members.iter().enumerate() {
            for &y in &members[i + 1..] {
                pairs.push(CandidatePair::new(&listings[x].id, &listings[y].id, key.clone()));
            }
        }
    }
    pairs
}

/// Similarity features of two listings; `stats` holds document frequencies
/// over the descriptions of their block.
pub fn extract_features(a: &Listing, b: &Listing, stats: &CorpusStats) -> PairFeatures {
    let max_space = a.living_space_m2.max(b.living_space_m2);
    let space_rel_diff = if max_space > 0.0 {
        ((a.living_space_m2 - b.living_space_m2).abs() / max_space).clamp(0.0, 1.0)
    } else {
        0.0
    };
    PairFeatures {
        title_jaro_winkler: jaro_winkler(&a.title, &b.title),
        title_edit_sim: edit_similarity(&a.title, &b.title),
        desc_tfidf_cosine: tfidf_cosine(&a.description, &b.description, stats),
        rooms_equal: if a.rooms == b.rooms { 1.0 } else { 0.0 },
        space_rel_diff,
    }
}

/// Same title, description, rooms and living space.
pub fn exact_copy(a: &Listing, b: &Listing) -> bool {
    a.title == b.title && a.description == b.description && a.rooms == b.rooms && a.living_space_m2 == b.living_space_m2
}
