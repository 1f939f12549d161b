//! String similarity measures, all bounded in `[0, 1]` and symmetric.

use std::collections::{BTreeMap, HashMap};

const WINKLER_PREFIX: usize = 4;
const WINKLER_SCALE: f64 = 0.1;
const WINKLER_THRESHOLD: f64 = 0.7;

/// Jaro similarity over Unicode scalar values.
pub fn jaro(s1: &str, s2: &str) -> f64 {
    let a: Vec<char> = s1.chars().collect();
    let b: Vec<char> = s2.chars().collect();
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    if a == b {
        return 1.0;
    }
    let window = (a.len().max(b.len()) / 2).saturating_sub(1);
    let mut a_hit = vec![false; a.len()];
    let mut b_hit = vec![false; b.len()];
    let mut matches = 0usize;
    for (i, &ca) in a.iter().enumerate() {
        let lo = i.saturating_sub(window);
        let hi = (i + window + 1).min(b.len());
        for j in lo..hi {
            if !b_hit[j] && b[j] == ca {
                a_hit[i] = true;
                b_hit[j] = true;
                matches += 1;
                break;
            }
        }
    }
    if matches == 0 {
        return 0.0;
    }
    let a_seq = a.iter().zip(&a_hit).filter(|(_, &h)| h).map(|(c, _)| c);
    let b_seq = b.iter().zip(&b_hit).filter(|(_, &h)| h).map(|(c, _)| c);
    let half_transpositions = a_seq.zip(b_seq).filter(|(x, y)| x != y).count();
    let m = matches as f64;
    let t = (half_transpositions / 2) as f64;
    (m / a.len() as f64 + m / b.len() as f64 + (m - t) / m) / 3.0
}

/// Jaro–Winkler similarity: Jaro boosted by the common prefix (up to four
/// characters, scale 0.1) when Jaro exceeds 0.7.
pub fn jaro_winkler(s1: &str, s2: &str) -> f64 {
    let j = jaro(s1, s2);
    if j <= WINKLER_THRESHOLD {
        return j;
    }
    let prefix = s1
        .chars()
        .zip(s2.chars())
        .take(WINKLER_PREFIX)
        .take_while(|(a, b)| a == b)
        .count();
    (j + prefix as f64 * WINKLER_SCALE * (1.0 - j)).min(1.0)
}

/// Levenshtein distance over Unicode scalar values.
pub fn levenshtein(s1: &str, s2: &str) -> usize {
    let a: Vec<char> = s1.chars().collect();
    let b: Vec<char> = s2.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `1 − levenshtein / max(|s1|, |s2|)`, and 1 for two empty strings.
pub fn edit_similarity(s1: &str, s2: &str) -> f64 {
    let longest = s1.chars().count().max(s2.chars().count());
    if longest == 0 {
        return 1.0;
    }
    1.0 - levenshtein(s1, s2) as f64 / longest as f64
}

/// Lowercased alphanumeric tokens.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(|t| t.to_lowercase())
}

/// Document frequencies over a set of documents.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorpusStats {
    n_docs: usize,
    df: HashMap<String, usize>,
}

impl CorpusStats {
    pub fn from_docs<'a, I: IntoIterator<Item = &'a str>>(docs: I) -> Self {
        let mut stats = Self::default();
        for d in docs {
            stats.add(d);
        }
        stats
    }

    pub fn add(&mut self, doc: &str) {
        self.n_docs += 1;
        let mut seen: Vec<String> = tokenize(doc).collect();
        seen.sort_unstable();
        seen.dedup();
        for t in seen {
            *self.df.entry(t).or_insert(0) += 1;
        }
    }

    /// Table with the given document frequency for every token.
    pub fn from_table(n_docs: usize, df: HashMap<String, usize>) -> Self {
        Self { n_docs, df }
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    /// Smoothed inverse document frequency `ln((1+N)/(1+df)) + 1`, or `None`
    /// for tokens outside the vocabulary.
    pub fn idf(&self, token: &str) -> Option<f64> {
        self.df
            .get(token)
            .map(|&df| ((1.0 + self.n_docs as f64) / (1.0 + df as f64)).ln() + 1.0)
    }

    fn vector(&self, doc: &str) -> BTreeMap<String, f64> {
        let mut counts: BTreeMap<String, f64> = BTreeMap::new();
        for t in tokenize(doc) {
            if self.df.contains_key(&t) {
                *counts.entry(t).or_insert(0.0) += 1.0;
            }
        }
        for (t, w) in counts.iter_mut() {
            *w *= self.idf(t).unwrap_or(0.0);
        }
        counts
    }
}

/// Cosine of the TF-IDF vectors of two documents; 0 when either has no
/// in-vocabulary token.
pub fn tfidf_cosine(d1: &str, d2: &str, stats: &CorpusStats) -> f64 {
    let v1 = stats.vector(d1);
    let v2 = stats.vector(d2);
    let n1 = v1.values().map(|w| w * w).sum::<f64>().sqrt();
    let n2 = v2.values().map(|w| w * w).sum::<f64>().sqrt();
    if n1 == 0.0 || n2 == 0.0 {
        return 0.0;
    }
    if v1 == v2 {
        return 1.0;
    }
    let dot: f64 = v1.iter().filter_map(|(t, w)| v2.get(t).map(|w2| w * w2)).sum();
    (dot / (n1 * n2)).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn jaro_winkler_examples() {
        assert_eq!(jaro_winkler("MARTHA", "MARTHA"), 1.0);
        assert_eq!(jaro_winkler("ABC", "XYZ"), 0.0);
        // hand computation: 6 matches, one transposition (TH/HT) gives
        // jaro = (1 + 1 + 5/6) / 3, prefix "MAR" adds 3 * 0.1 * (1 - jaro)
        let jaro_hand = (1.0 + 1.0 + 5.0 / 6.0) / 3.0;
        let expected = jaro_hand + 0.3 * (1.0 - jaro_hand);
        let got = jaro_winkler("MARTHA", "MARHTA");
        assert!((got - expected).abs() < 1e-12);
        assert!((got - 0.9611).abs() < 1e-4);
    }

    #[test]
    fn jaro_reference_pairs() {
        // DIXON/DICKSONX: matches D,I,O,N (window 3) -> (4/5 + 4/8 + 1) / 3
        assert!((jaro("DIXON", "DICKSONX") - (0.8 + 0.5 + 1.0) / 3.0).abs() < 1e-12);
        assert_eq!(jaro("", ""), 1.0);
        assert_eq!(jaro("a", ""), 0.0);
    }

    #[test]
    fn edit_similarity_examples() {
        assert_eq!(levenshtein("kitten", "sitting"), 3);
        assert!((edit_similarity("kitten", "sitting") - (1.0 - 3.0 / 7.0)).abs() < 1e-15);
        assert_eq!(edit_similarity("Zürich", "Zürich"), 1.0);
        assert_eq!(edit_similarity("", "abc"), 0.0);
        assert_eq!(edit_similarity("", ""), 1.0);
    }

    #[test]
    fn tfidf_examples() {
        let stats = CorpusStats::from_docs(["schöne wohnung mit balkon", "haus mit garten"]);
        assert_eq!(tfidf_cosine("Schöne Wohnung, mit Balkon!", "schöne wohnung mit balkon", &stats), 1.0);
        assert_eq!(tfidf_cosine("wohnung balkon", "haus garten", &stats), 0.0);
        assert_eq!(tfidf_cosine("unknown words", "haus", &stats), 0.0);

        let uniform = CorpusStats::from_table(3, [("a", 1), ("b", 1), ("c", 1)].map(|(t, n)| (t.to_string(), n)).into());
        // vectors (1,1,0) and (1,0,1) scaled by the same idf
        assert!((tfidf_cosine("a b", "a c", &uniform) - 0.5).abs() < 1e-12);
    }

    // dynamic-programming oracle over the full matrix
    fn lev_oracle(a: &str, b: &str) -> usize {
        let a: Vec<char> = a.chars().collect();
        let b: Vec<char> = b.chars().collect();
        let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
        for i in 0..=a.len() {
            d[i][0] = i;
        }
        for j in 0..=b.len() {
            d[0][j] = j;
        }
        for i in 1..=a.len() {
            for j in 1..=b.len() {
                let c = usize::from(a[i - 1] != b[j - 1]);
                d[i][j] = (d[i - 1][j] + 1).min(d[i][j - 1] + 1).min(d[i - 1][j - 1] + c);
            }
        }
        d[a.len()][b.len()]
    }

    proptest! {
        #[test]
        fn similarities_bounded_and_symmetric(a in "[a-cä ]{0,12}", b in "[a-cä ]{0,12}") {
            let stats = CorpusStats::from_docs([a.as_str(), b.as_str()]);
            for (x, y) in [
                (jaro_winkler(&a, &b), jaro_winkler(&b, &a)),
                (edit_similarity(&a, &b), edit_similarity(&b, &a)),
                (tfidf_cosine(&a, &b, &stats), tfidf_cosine(&b, &a, &stats)),
            ] {
                prop_assert!((0.0..=1.0).contains(&x));
                prop_assert!((x - y).abs() < 1e-12);
            }
            let d = levenshtein(&a, &b);
            prop_assert_eq!(d, lev_oracle(&a, &b));
            prop_assert!(d <= a.chars().count() + b.chars().count());
        }

        #[test]
        fn identical_nonempty_inputs_score_one(a in "[a-z]{1,5}( [a-z]{1,5}){0,4}") {
            let stats = CorpusStats::from_docs([a.as_str()]);
            prop_assert_eq!(jaro_winkler(&a, &a), 1.0);
            prop_assert_eq!(edit_similarity(&a, &a), 1.0);
            prop_assert_eq!(tfidf_cosine(&a, &a, &stats), 1.0);
        }

        #[test]
        fn jaro_winkler_one_only_when_equal(a in "[ab]{1,6}", b in "[ab]{1,6}") {
            prop_assert_eq!(jaro_winkler(&a, &b) == 1.0, a == b);
        }
    }
}
