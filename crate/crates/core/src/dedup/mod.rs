//! Duplicate-ad detection: blocking, similarity features, a linear
//! max-margin pair classifier and transitive clustering.

mod classifier;
mod features;
mod similarity;
mod union_find;

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use classifier::{train_classifier, Label, PairClassifier, TrainConfig};
pub use features::{
    block_pairs, blocks, exact_copy, extract_features, BlockKey, CandidatePair, PairFeatures, N_FEATURES,
};
pub use similarity::{edit_similarity, jaro, jaro_winkler, levenshtein, tfidf_cosine, tokenize, CorpusStats};
pub use union_find::DisjointSet;

use crate::ingest::Listing;

#[derive(Debug, thiserror::Error)]
pub enum DedupError {
    #[error("training set is empty")]
    EmptyTraining,
    #[error("training set contains a single class")]
    SingleClass,
    #[error("invalid training configuration: {0}")]
    BadTrainConfig(String),
    #[error("training pair references unknown listing {0:?}")]
    UnknownListing(String),
    #[error("training pairs line {line}: {msg}")]
    PairsFormat { line: u64, msg: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DuplicateCluster {
    /// Member ids, sorted.
    pub members: Vec<String>,
    /// Lexicographically smallest member id.
    pub representative: String,
}

/// Transitive closure of the duplicate pairs over `listings`; listings not
/// in any pair become singletons. Clusters are sorted by representative.
/// Pairs naming ids absent from `listings` are ignored.
pub fn cluster_duplicates<S: AsRef<str>>(pairs: &[(S, S)], listings: &[Listing]) -> Vec<DuplicateCluster> {
    let index: HashMap<&str, usize> = listings.iter().enumerate().map(|(i, l)| (l.id.as_str(), i)).collect();
    let mut ds = DisjointSet::new(listings.len());
    for (a, b) in pairs {
        if let (Some(&i), Some(&j)) = (index.get(a.as_ref()), index.get(b.as_ref())) {
            ds.union(i, j);
        }
    }
    let mut groups: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for i in 0..listings.len() {
        groups.entry(ds.find(i)).or_default().push(listings[i].id.clone());
    }
    let mut clusters: Vec<DuplicateCluster> = groups
        .into_values()
        .map(|mut members| {
            members.sort();
            members.dedup();
            DuplicateCluster { representative: members[0].clone(), members }
        })
        .collect();
    clusters.sort_by(|a, b| a.representative.cmp(&b.representative));
    clusters
}

/// A candidate pair with its features and verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct JudgedPair {
    pub pair: CandidatePair,
    /// `None` when the exact-copy rule decided without computing features.
    pub features: Option<PairFeatures>,
    pub duplicate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DedupOutcome {
    pub judged: Vec<JudgedPair>,
    pub clusters: Vec<DuplicateCluster>,
}

impl DedupOutcome {
    /// Representative listings, one per cluster, in cluster order.
    pub fn representatives<'a>(&self, listings: &'a [Listing]) -> Vec<&'a Listing> {
        let by_id: HashMap<&str, &Listing> = listings.iter().map(|l| (l.id.as_str(), l)).collect();
        self.clusters.iter().filter_map(|c| by_id.get(c.representative.as_str()).copied()).collect()
    }
}

/// Runs blocking, classification and clustering. Blocks are processed in
/// parallel; results are merged in block-key order.
pub fn deduplicate(listings: &[Listing], classifier: &PairClassifier) -> DedupOutcome {
    let blocks: Vec<(BlockKey, Vec<usize>)> = blocks(listings).into_iter().filter(|(_, m)| m.len() > 1).collect();
    let judged: Vec<JudgedPair> = blocks
        .par_iter()
        .map(|(key, members)| judge_block(key, members, listings, classifier))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    let dup_pairs: Vec<(&str, &str)> =
        judged.iter().filter(|j| j.duplicate).map(|j| (j.pair.a.as_str(), j.pair.b.as_str())).collect();
    let clusters = cluster_duplicates(&dup_pairs, listings);
    DedupOutcome { judged, clusters }
}

fn judge_block(key: &BlockKey, members: &[usize], listings: &[Listing], classifier: &PairClassifier) -> Vec<JudgedPair> {
    let stats = CorpusStats::from_docs(members.iter().map(|&i| listings[i].description.as_str()));
    let mut out = Vec::new();
    for (n, &i) in members.iter().enumerate() {
        for &j in &members[n + 1..] {
            let (a, b) = (&listings[i], &listings[j]);
            let pair = CandidatePair::new(&a.id, &b.id, key.clone());
            if exact_copy(a, b) {
                out.push(JudgedPair { pair, features: None, duplicate: true });
            } else {
                let f = extract_features(a, b, &stats);
                out.push(JudgedPair { pair, duplicate: classifier.is_duplicate(&f), features: Some(f) });
            }
        }
    }
    out
}

/// Document-frequency tables per block.
pub fn block_stats(listings: &[Listing]) -> HashMap<BlockKey, CorpusStats> {
    blocks(listings)
        .into_iter()
        .map(|(k, m)| (k, CorpusStats::from_docs(m.iter().map(|&i| listings[i].description.as_str()))))
        .collect()
}

/// Features for labelled id pairs. Pairs spanning two blocks use document
/// frequencies over just their two descriptions.
pub fn labelled_features(
    labelled: &[(String, String, Label)],
    listings: &[Listing],
) -> Result<Vec<(PairFeatures, Label)>, DedupError> {
    let by_id: HashMap<&str, &Listing> = listings.iter().map(|l| (l.id.as_str(), l)).collect();
    let stats = block_stats(listings);
    labelled
        .iter()
        .map(|(a, b, label)| {
            let la = by_id.get(a.as_str()).ok_or_else(|| DedupError::UnknownListing(a.clone()))?;
            let lb = by_id.get(b.as_str()).ok_or_else(|| DedupError::UnknownListing(b.clone()))?;
            let (ka, kb) = (BlockKey::of(la), BlockKey::of(lb));
            let f = if ka == kb {
                extract_features(la, lb, &stats[&ka])
            } else {
                let s = CorpusStats::from_docs([la.description.as_str(), lb.description.as_str()]);
                extract_features(la, lb, &s)
            };
            Ok((f, *label))
        })
        .collect()
}

/// Reads a training-pairs file with columns `id_a, id_b, label`.
pub fn read_training_pairs<R: Read>(r: R) -> Result<Vec<(String, String, Label)>, DedupError> {
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header != ["id_a", "id_b", "label"] {
        return Err(DedupError::PairsFormat { line: 1, msg: format!("expected header id_a,id_b,label, found {header:?}") });
    }
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let label = Label::parse(&rec[2]).ok_or_else(|| DedupError::PairsFormat { line, msg: format!("bad label {:?}", &rec[2]) })?;
        out.push((rec[0].trim().to_string(), rec[1].trim().to_string(), label));
    }
    Ok(out)
}

pub fn write_training_pairs<W: Write>(w: W, pairs: &[(String, String, Label)]) -> std::io::Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["id_a", "id_b", "label"])?;
    for (a, b, l) in pairs {
        csv.write_record([a.as_str(), b.as_str(), l.as_str()])?;
    }
    csv.flush()
}

/// Cluster report: one row per listing with its cluster id (the
/// representative's id) and a representative flag.
pub fn write_cluster_report<W: Write>(w: W, preamble: &[String], clusters: &[DuplicateCluster]) -> std::io::Result<()> {
    let mut w = w;
    for line in preamble {
        writeln!(w, "# {line}")?;
    }
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["listing_id", "cluster_id", "representative"])?;
    for c in clusters {
        for m in &c.members {
            let rep = if *m == c.representative { "true" } else { "false" };
            csv.write_record([m.as_str(), c.representative.as_str(), rep])?;
        }
    }
    csv.flush()
}

/// Reads a `listing_id, true_cluster_id` ground-truth file.
pub fn read_truth<R: Read>(r: R) -> Result<HashMap<String, String>, DedupError> {
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
    let mut out = HashMap::new();
    for rec in reader.records() {
        let rec = rec?;
        out.insert(rec[0].trim().to_string(), rec[1].trim().to_string());
    }
    Ok(out)
}

/// Pairwise precision, recall and F1 of `clusters` against a ground-truth
/// labelling. With no duplicate pairs on either side the scores are 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairwiseScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub true_positive_pairs: u64,
    pub predicted_pairs: u64,
    pub actual_pairs: u64,
}

pub fn pairwise_f1(clusters: &[DuplicateCluster], truth: &HashMap<String, String>) -> PairwiseScore {
    let choose2 = |n: u64| n * n.saturating_sub(1) / 2;
    let mut predicted = 0;
    let mut tp = 0;
    for c in clusters {
        predicted += choose2(c.members.len() as u64);
        let mut cells: HashMap<&str, u64> = HashMap::new();
        for m in &c.members {
            if let Some(t) = truth.get(m) {
                *cells.entry(t.as_str()).or_insert(0) += 1;
            }
        }
        tp += cells.values().map(|&n| choose2(n)).sum::<u64>();
    }
    let members: std::collections::HashSet<&str> = clusters.iter().flat_map(|c| c.members.iter().map(|m| m.as_str())).collect();
    let mut true_sizes: HashMap<&str, u64> = HashMap::new();
    for (id, t) in truth {
        if members.contains(id.as_str()) {
            *true_sizes.entry(t.as_str()).or_insert(0) += 1;
        }
    }
    let actual: u64 = true_sizes.values().map(|&n| choose2(n)).sum();
    let ratio = |num: u64, den: u64| if den == 0 { 1.0 } else { num as f64 / den as f64 };
    let precision = ratio(tp, predicted);
    let recall = ratio(tp, actual);
    let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    PairwiseScore { precision, recall, f1, true_positive_pairs: tp, predicted_pairs: predicted, actual_pairs: actual }
}
