//! Listing corpora with planted duplicate clusters.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dedup::{BlockKey, Label};
use crate::ingest::{Listing, PropertyType, Window};

const PORTALS: [&str; 4] = ["homegate", "immoscout", "newhome", "comparis"];

const ADJECTIVES: [&str; 16] = [
    "Bright", "Spacious", "Quiet", "Modern", "Charming", "Renovated", "Sunny", "Elegant", "Cosy", "Central",
    "Generous", "Stylish", "Attractive", "Comfortable", "Exclusive", "Friendly",
];

const PLACES: [&str; 24] = [
    "Oberdorf", "Seefeld", "Altstadt", "Hofmatt", "Riedhof", "Sonnenberg", "Lindenhof", "Bergli", "Mattenhof",
    "Rosenau", "Grünau", "Kirchbühl", "Eichholz", "Bachmatt", "Hinterdorf", "Weinberg", "Breite", "Feldegg",
    "Schönau", "Neuhaus", "Tannegg", "Steinhof", "Langmatt", "Moosbach",
];

const PHRASES: [&str; 40] = [
    "large balcony facing south",
    "walking distance to the station",
    "open kitchen with dishwasher",
    "parquet floors throughout",
    "own washing machine and dryer",
    "underground parking space available",
    "view of the lake and mountains",
    "quiet residential neighbourhood",
    "schools and shops nearby",
    "bathroom with bathtub and window",
    "separate guest toilet",
    "cellar compartment included",
    "lift to all floors",
    "pets welcome on request",
    "large garden with seating area",
    "bright living room with fireplace",
    "minergie standard building",
    "floor heating in all rooms",
    "fitted wardrobes in the bedrooms",
    "good connection to the motorway",
    "bus stop in front of the house",
    "family friendly surroundings",
    "play area for children",
    "storage room in the apartment",
    "covered terrace with awning",
    "high ceilings and large windows",
    "ideal for commuters",
    "close to the forest",
    "new kitchen with steamer",
    "visits on saturday possible",
    "available by arrangement",
    "heating costs included",
    "modern heat pump system",
    "individual laundry room",
    "wheelchair accessible entrance",
    "panorama windows in the living area",
    "hobby room in the basement",
    "sauna in the building",
    "bicycle room available",
    "garage box for rent",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub seed: u64,
    pub n_listings: usize,
    /// Share of listings that are planted duplicates of another listing.
    pub dup_rate: f64,
    /// Probability scale for text and space perturbations of duplicates;
    /// zero yields exact copies.
    pub perturbation_strength: f64,
    /// Share of non-duplicate listings placed in the same block as another
    /// listing with different text (a neighbouring unit at the same price).
    pub sibling_rate: f64,
    /// Number of labelled pairs to emit for classifier training.
    pub training_pairs: usize,
    pub window: Window,
    pub n_districts: usize,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            n_listings: 1000,
            dup_rate: 0.3,
            perturbation_strength: 0.2,
            sibling_rate: 0.1,
            training_pairs: 2000,
            window: Window::default(),
            n_districts: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    /// Listings in id order.
    pub listings: Vec<Listing>,
    /// `(listing_id, true_cluster_id)` in listing order.
    pub truth: Vec<(String, String)>,
    /// Clusters with at least one planted duplicate.
    pub planted_clusters: usize,
    pub planted_duplicates: usize,
    pub labelled: Vec<(String, String, Label)>,
}

impl SynthCorpus {
    pub fn truth_map(&self) -> std::collections::HashMap<String, String> {
        self.truth.iter().cloned().collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct District {
    pub id: String,
    pub canton: String,
    pub zips: Vec<String>,
}

pub(crate) fn districts(n: usize) -> Vec<District> {
    const CANTONS: [&str; 26] = [
        "ZH", "BE", "LU", "UR", "SZ", "OW", "NW", "GL", "ZG", "FR", "SO", "BS", "BL", "SH", "AR", "AI", "SG", "GR",
        "AG", "TG", "TI", "VD", "VS", "NE", "GE", "JU",
    ];
    (0..n)
        .map(|k| District {
            id: format!("D{:03}", k + 1),
            canton: CANTONS[(k / 3) % CANTONS.len()].to_string(),
            zips: (0..3).map(|z| format!("{}", 1000 + 30 * k + 10 * z)).collect(),
        })
        .collect()
}

/// A listing's content before an id is assigned.
#[derive(Debug, Clone)]
pub(crate) struct Draft {
    pub listing: Listing,
    /// Index of the draft this one duplicates, if any.
    pub copy_of: Option<usize>,
}

pub(crate) fn title_for<R: Rng>(rng: &mut R, ptype: PropertyType, rooms: f64, place: &str) -> String {
    let adj = ADJECTIVES.choose(rng).expect("nonempty");
    let noun = match ptype {
        PropertyType::House => "house",
        PropertyType::Apartment => "apartment",
    };
    if rng.random_bool(0.5) {
        format!("{adj} {rooms}-room {noun} in {place}")
    } else {
        let extra = PHRASES.choose(rng).expect("nonempty");
        format!("{adj} {rooms}-room {noun} in {place} with {extra}")
    }
}

pub(crate) fn description_for<R: Rng>(rng: &mut R, space: f64, place: &str) -> String {
    description_avoiding(rng, space, place, "")
}

/// A description whose stock phrases do not occur in `avoid`.
fn description_avoiding<R: Rng>(rng: &mut R, space: f64, place: &str, avoid: &str) -> String {
    let pool: Vec<&str> = PHRASES.iter().copied().filter(|p| !avoid.contains(p)).collect();
    let k = rng.random_range(4..8);
    let mut parts: Vec<String> = pool.choose_multiple(rng, k).map(|p| p.to_string()).collect();
    parts.push(format!("{space} m2 living space"));
    parts.push(format!("built in {}", rng.random_range(1950..2012)));
    parts.push(format!("located on floor {} in {place}", rng.random_range(0..8)));
    parts.shuffle(rng);
    parts.join(", ")
}

fn rooms_for<R: Rng>(rng: &mut R, ptype: PropertyType) -> f64 {
    let half_steps = match ptype {
        PropertyType::Apartment => rng.random_range(2..=13),
        PropertyType::House => rng.random_range(7..=18),
    };
    half_steps as f64 / 2.0
}

pub(crate) fn round_half(x: f64) -> f64 {
    (x * 2.0).round() / 2.0
}

fn base_listing<R: Rng>(rng: &mut R, districts: &[District], window: &Window) -> Listing {
    let d = districts.choose(rng).expect("at least one district");
    let ptype = if rng.random_bool(0.55) { PropertyType::Apartment } else { PropertyType::House };
    let rooms = rooms_for(rng, ptype);
    let space = round_half(rooms * rng.random_range(22.0..34.0));
    let per_m2 = rng.random_range(4000.0..11000.0);
    let price = ((space * per_m2 / 100.0).round() as u64).max(1) * 100;
    let place = PLACES.choose(rng).expect("nonempty");
    let span = (window.end.index() - window.start.index()) as i64;
    Listing {
        id: String::new(),
        source_portal: PORTALS.choose(rng).expect("nonempty").to_string(),
        zip: d.zips.choose(rng).expect("nonempty").clone(),
        district_id: d.id.clone(),
        canton: d.canton.clone(),
        property_type: ptype,
        rooms,
        price_chf: price,
        living_space_m2: space,
        title: title_for(rng, ptype, rooms, place),
        description: description_for(rng, space, place),
        listed_quarter: window.start.offset(rng.random_range(0..=span)),
    }
}

/// Another unit in the same block at the same price with its own text:
/// either a twin of identical size or a neighbouring unit whose living
/// space differs noticeably.
pub(crate) fn sibling_of<R: Rng>(rng: &mut R, base: &Listing) -> Listing {
    let place = base.title.rsplit(" in ").next().unwrap_or("").split(" with ").next().unwrap_or("").to_string();
    let (rooms, space) = if rng.random_bool(0.3) {
        (base.rooms, base.living_space_m2)
    } else {
        let rooms = if rng.random_bool(0.5) { base.rooms } else { (base.rooms + if rng.random_bool(0.5) { 0.5 } else { -0.5 }).max(1.0) };
        let factor = if rng.random_bool(0.5) { rng.random_range(0.7..0.88) } else { rng.random_range(1.12..1.35) };
        (rooms, round_half(base.living_space_m2 * factor).max(10.0))
    };
    Listing {
        source_portal: PORTALS.choose(rng).expect("nonempty").to_string(),
        rooms,
        living_space_m2: space,
        title: title_for(rng, base.property_type, rooms, &place),
        description: description_avoiding(rng, space, &place, &base.description),
        ..base.clone()
    }
}

fn typo<R: Rng>(rng: &mut R, word: &str) -> String {
    let mut chars: Vec<char> = word.chars().collect();
    if chars.len() < 2 {
        return word.to_string();
    }
    let i = rng.random_range(0..chars.len() - 1);
    match rng.random_range(0..4) {
        0 => chars.swap(i, i + 1),
        1 => {
            chars.remove(i);
        }
        2 => chars.insert(i, chars[i]),
        _ => chars[i] = (b'a' + rng.random_range(0..26u8)) as char,
    }
    chars.into_iter().collect()
}

/// Typos and neighbour swaps, each with probability `strength` per token.
pub(crate) fn perturb_text<R: Rng>(rng: &mut R, text: &str, strength: f64) -> String {
    if strength <= 0.0 {
        return text.to_string();
    }
    let p = strength.min(1.0);
    let mut words: Vec<String> = text.split(' ').map(|w| if rng.random_bool(p) { typo(rng, w) } else { w.to_string() }).collect();
    for i in 0..words.len().saturating_sub(1) {
        if rng.random_bool(p / 2.0) {
            words.swap(i, i + 1);
        }
    }
    words.join(" ")
}

/// A re-post of `base`: same price and block key, perturbed text and at
/// most a small change of living space.
pub(crate) fn duplicate_of<R: Rng>(rng: &mut R, base: &Listing, strength: f64) -> Listing {
    let p = strength.clamp(0.0, 1.0);
    let space = if p > 0.0 && rng.random_bool(p) {
        let delta = rng.random_range(-0.1 * p..=0.1 * p);
        round_half(base.living_space_m2 * (1.0 + delta)).max(0.5)
    } else {
        base.living_space_m2
    };
    Listing {
        source_portal: PORTALS.choose(rng).expect("nonempty").to_string(),
        living_space_m2: space,
        title: perturb_text(rng, &base.title, p),
        description: perturb_text(rng, &base.description, p),
        ..base.clone()
    }
}

/// Assigns shuffled ids, and derives truth and labelled pairs.
pub(crate) fn finish<R: Rng>(rng: &mut R, mut drafts: Vec<Draft>, id_prefix: &str, training_pairs: usize) -> SynthCorpus {
    let n = drafts.len();
    let width = n.to_string().len().max(5);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut ids = vec![String::new(); n];
    for (rank, &k) in order.iter().enumerate() {
        ids[k] = format!("{id_prefix}{:0width$}", rank + 1);
    }
    let root = |mut k: usize, drafts: &[Draft]| {
        while let Some(parent) = drafts[k].copy_of {
            k = parent;
        }
        k
    };
    let roots: Vec<usize> = (0..n).map(|k| root(k, &drafts)).collect();
    let mut cluster_size: BTreeMap<usize, usize> = BTreeMap::new();
    for &r in &roots {
        *cluster_size.entry(r).or_insert(0) += 1;
    }
    let planted_clusters = cluster_size.values().filter(|&&s| s > 1).count();
    let planted_duplicates = drafts.iter().filter(|d| d.copy_of.is_some()).count();

    let mut dup_pairs = Vec::new();
    let mut distinct_pairs = Vec::new();
    let mut by_block: BTreeMap<BlockKey, Vec<usize>> = BTreeMap::new();
    for (k, d) in drafts.iter().enumerate() {
        by_block.entry(BlockKey::of(&d.listing)).or_default().push(k);
    }
    for members in by_block.values() {
        for (i, &a) in members.iter().enumerate() {
            for &b in &members[i + 1..] {
                let pair = (ids[a].clone(), ids[b].clone());
                if roots[a] == roots[b] { dup_pairs.push(pair) } else { distinct_pairs.push(pair) }
            }
        }
    }
    dup_pairs.shuffle(rng);
    distinct_pairs.shuffle(rng);
    let half = training_pairs / 2;
    let mut labelled: Vec<(String, String, Label)> = Vec::with_capacity(training_pairs);
    labelled.extend(dup_pairs.into_iter().take(half).map(|(a, b)| (a, b, Label::Duplicate)));
    let in_block = (training_pairs - labelled.len()).min(distinct_pairs.len());
    labelled.extend(distinct_pairs.into_iter().take(in_block).map(|(a, b)| (a, b, Label::Distinct)));
    // Fill the rest with random cross-block pairs.
    let mut guard = 0;
    while labelled.len() < training_pairs && n >= 2 && guard < 100 * training_pairs {
        guard += 1;
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if roots[a] != roots[b] && BlockKey::of(&drafts[a].listing) != BlockKey::of(&drafts[b].listing) {
            labelled.push((ids[a].clone(), ids[b].clone(), Label::Distinct));
        }
    }

    let mut listings = Vec::with_capacity(n);
    let mut truth = Vec::with_capacity(n);
    for (k, d) in drafts.iter_mut().enumerate() {
        d.listing.id = ids[k].clone();
    }
    for &k in &order {
        listings.push(drafts[k].listing.clone());
        truth.push((ids[k].clone(), format!("C{}", ids[roots[k]])));
    }
    SynthCorpus { listings, truth, planted_clusters, planted_duplicates, labelled }
}

/// Appends `round(dup_rate · total)` duplicates of random non-duplicate drafts.
pub(crate) fn plant_duplicates<R: Rng>(rng: &mut R, drafts: &mut Vec<Draft>, n_dups: usize, strength: f64) {
    let originals = drafts.len();
    if originals == 0 {
        return;
    }
    for _ in 0..n_dups {
        let k = rng.random_range(0..originals);
        let copy = duplicate_of(rng, &drafts[k].listing, strength);
        drafts.push(Draft { listing: copy, copy_of: Some(k) });
    }
}

pub fn gen_listing_corpus(spec: &CorpusSpec) -> SynthCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let districts = districts(spec.n_districts.max(1));
    let n_dups = ((spec.dup_rate.clamp(0.0, 1.0) * spec.n_listings as f64).round() as usize).min(spec.n_listings.saturating_sub(1));
    let originals = spec.n_listings - n_dups;
    let n_siblings = ((spec.sibling_rate.clamp(0.0, 1.0) * originals as f64).round() as usize).min(originals.saturating_sub(1));
    let n_bases = originals - n_siblings;
    let mut drafts: Vec<Draft> =
        (0..n_bases).map(|_| Draft { listing: base_listing(&mut rng, &districts, &spec.window), copy_of: None }).collect();
    for _ in 0..n_siblings {
        let k = rng.random_range(0..n_bases);
        let s = sibling_of(&mut rng, &drafts[k].listing);
        drafts.push(Draft { listing: s, copy_of: None });
    }
    plant_duplicates(&mut rng, &mut drafts, n_dups, spec.perturbation_strength);
    finish(&mut rng, drafts, "L", spec.training_pairs)
}

/// Ground-truth sidecar with columns `listing_id, true_cluster_id`.
pub fn write_truth<W: Write>(w: W, truth: &[(String, String)]) -> std::io::Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["listing_id", "true_cluster_id"])?;
    for (id, c) in truth {
        csv.write_record([id, c])?;
    }
    csv.flush()
}
