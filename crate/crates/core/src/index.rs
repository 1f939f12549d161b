//! Size classification and quarterly median asking-price series.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ingest::{Listing, PropertyType};
use crate::quarter::Quarter;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SizeClass {
    Small,
    Medium,
    Large,
    All,
}

impl SizeClass {
    pub const SIZED: [SizeClass; 3] = [SizeClass::Small, SizeClass::Medium, SizeClass::Large];
    pub const EVERY: [SizeClass; 4] = [SizeClass::Small, SizeClass::Medium, SizeClass::Large, SizeClass::All];

    pub fn as_str(self) -> &'static str {
        match self {
            SizeClass::Small => "Small",
            SizeClass::Medium => "Medium",
            SizeClass::Large => "Large",
            SizeClass::All => "All",
        }
    }
}

impl fmt::Display for SizeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SizeClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "small" => Ok(SizeClass::Small),
            "medium" => Ok(SizeClass::Medium),
            "large" => Ok(SizeClass::Large),
            "all" => Ok(SizeClass::All),
            other => Err(format!("unknown size class {other:?}")),
        }
    }
}

/// Size class by room count. Houses: up to 4.5 small, 5 to 6.5 medium,
/// 7 and more large. Apartments: up to 3.5 small, 4 to 5.5 medium, 6 and
/// more large.
pub fn classify_size(property_type: PropertyType, rooms: f64) -> SizeClass {
    let (medium_from, large_from) = match property_type {
        PropertyType::House => (5.0, 7.0),
        PropertyType::Apartment => (4.0, 6.0),
    };
    if rooms >= large_from {
        SizeClass::Large
    } else if rooms >= medium_from {
        SizeClass::Medium
    } else {
        SizeClass::Small
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IndexError {
    #[error("median of an empty sample")]
    EmptySample,
    #[error("series has no point for {which} quarter {quarter}")]
    MissingEndpoint { which: &'static str, quarter: Quarter },
    #[error("series file: {0}")]
    Format(String),
}

/// Median; the mean of the two middle order statistics for even counts.
pub fn median<T: Scalar>(values: &[T]) -> Result<T, IndexError> {
    if values.is_empty() {
        return Err(IndexError::EmptySample);
    }
    let mut v = values.to_vec();
    let n = v.len();
    let cmp = |a: &T, b: &T| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal);
    let (lower, upper_mid, _) = v.select_nth_unstable_by(n / 2, cmp);
    let upper_mid = *upper_mid;
    if n % 2 == 1 {
        return Ok(upper_mid);
    }
    let lower_mid = lower.iter().copied().fold(T::neg_infinity(), T::max);
    Ok((lower_mid + upper_mid) / T::lit(2.0))
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct IndexCell {
    pub district_id: String,
    pub property_type: PropertyType,
    pub size: SizeClass,
}

impl IndexCell {
    pub fn new(district_id: impl Into<String>, property_type: PropertyType, size: SizeClass) -> Self {
        Self { district_id: district_id.into(), property_type, size }
    }

    pub fn key(&self) -> String {
        format!("{}/{}/{}", self.district_id, self.property_type, self.size)
    }

    fn admits(&self, l: &Listing) -> bool {
        l.property_type == self.property_type
            && (self.size == SizeClass::All || classify_size(l.property_type, l.rooms) == self.size)
    }
}

impl fmt::Display for IndexCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndexPoint {
    pub quarter: Quarter,
    /// Median price (houses) or median price per m² (apartments).
    pub value: f64,
    /// District listings in the quarter.
    pub count: usize,
    /// The cantonal median was substituted.
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexSeries {
    pub cell: IndexCell,
    pub points: Vec<IndexPoint>,
}

impl IndexSeries {
    pub fn point(&self, q: Quarter) -> Option<&IndexPoint> {
        self.points.binary_search_by(|p| p.quarter.cmp(&q)).ok().map(|i| &self.points[i])
    }

    /// `(time, value)` pairs, optionally dropping fallback points.
    pub fn observations(&self, include_fallback: bool) -> (Vec<f64>, Vec<f64>) {
        self.points
            .iter()
            .filter(|p| include_fallback || !p.fallback)
            .map(|p| (p.quarter.time(), p.value))
            .unzip()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IndexConfig {
    /// District listings needed before the cantonal median is substituted.
    pub min_ads: usize,
}

impl Default for IndexConfig {
    fn default() -> Self {
        Self { min_ads: 10 }
    }
}

/// The per-listing quantity aggregated for a property type.
pub fn listing_value(l: &Listing) -> f64 {
    match l.property_type {
        PropertyType::House => l.price_chf as f64,
        PropertyType::Apartment => l.price_per_m2(),
    }
}

/// Builds the quarterly series for one cell from deduplicated listings.
///
/// A quarter with fewer than `min_ads` district listings takes the cantonal
/// median over the same type, size and quarter, flagged as fallback; with
/// no cantonal listings either the quarter is omitted.
pub fn build_series<L: std::borrow::Borrow<Listing>>(listings: &[L], cell: &IndexCell, cfg: &IndexConfig) -> IndexSeries {
    let canton = listings
        .iter()
        .map(|l| l.borrow())
        .find(|l| l.district_id == cell.district_id)
        .map(|l| l.canton.clone());
    build_series_in(listings, cell, canton.as_deref(), cfg)
}

/// Like [`build_series`], with the district's canton given by the caller. Needed
/// when the district itself has no listings to read the canton from.
pub fn build_series_in<L: std::borrow::Borrow<Listing>>(
    listings: &[L],
    cell: &IndexCell,
    canton: Option<&str>,
    cfg: &IndexConfig,
) -> IndexSeries {
    let mut district: BTreeMap<Quarter, Vec<f64>> = BTreeMap::new();
    let mut cantonal: BTreeMap<Quarter, Vec<f64>> = BTreeMap::new();
    for l in listings.iter().map(|l| l.borrow()) {
        if !cell.admits(l) {
            continue;
        }
        let v = listing_value(l);
        if l.district_id == cell.district_id {
            district.entry(l.listed_quarter).or_default().push(v);
        }
        if canton == Some(l.canton.as_str()) {
            cantonal.entry(l.listed_quarter).or_default().push(v);
        }
    }
    let quarters: BTreeSet<Quarter> = district.keys().chain(cantonal.keys()).copied().collect();
    let points = quarters
        .into_iter()
        .filter_map(|q| {
            let own = district.get(&q).map(Vec::as_slice).unwrap_or(&[]);
            if own.len() >= cfg.min_ads.max(1) {
                return Some(IndexPoint { quarter: q, value: median(own).ok()?, count: own.len(), fallback: false });
            }
            let wide = cantonal.get(&q)?;
            Some(IndexPoint { quarter: q, value: median(wide).ok()?, count: own.len(), fallback: true })
        })
        .collect();
    IndexSeries { cell: cell.clone(), points }
}

/// Every cell present in the listings, in key order.
pub fn cells<L: std::borrow::Borrow<Listing>>(listings: &[L]) -> Vec<IndexCell> {
    let mut set = BTreeSet::new();
    for l in listings.iter().map(|l| l.borrow()) {
        set.insert(IndexCell::new(l.district_id.clone(), l.property_type, classify_size(l.property_type, l.rooms)));
        set.insert(IndexCell::new(l.district_id.clone(), l.property_type, SizeClass::All));
    }
    set.into_iter().collect()
}

/// Percentage change `100·(v_to − v_from)/v_from` between two quarters.
pub fn period_change(series: &IndexSeries, from: Quarter, to: Quarter) -> Result<f64, IndexError> {
    let a = series.point(from).ok_or(IndexError::MissingEndpoint { which: "start", quarter: from })?;
    let b = series.point(to).ok_or(IndexError::MissingEndpoint { which: "end", quarter: to })?;
    Ok(100.0 * (b.value - a.value) / a.value)
}

/// Heat-map band of a percentage change. Bands are closed above:
/// `(0, 25]` is "0–25", `(25, 50]` is "26–50", and so on.
pub fn bucket_change(pct: f64) -> &'static str {
    if pct <= 0.0 {
        "≤0"
    } else if pct <= 25.0 {
        "0–25"
    } else if pct <= 50.0 {
        "26–50"
    } else if pct <= 75.0 {
        "51–75"
    } else if pct <= 100.0 {
        "76–100"
    } else {
        ">100"
    }
}

pub const SERIES_COLUMNS: [&str; 8] =
    ["district_id", "property_type", "size", "year", "quarter", "value", "count", "fallback"];

pub fn write_series<W: Write>(w: W, preamble: &[String], series: &[IndexSeries]) -> std::io::Result<()> {
    let mut w = w;
    for line in preamble {
        writeln!(w, "# {line}")?;
    }
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(SERIES_COLUMNS)?;
    for s in series {
        for p in &s.points {
            csv.write_record([
                s.cell.district_id.clone(),
                s.cell.property_type.to_string(),
                s.cell.size.to_string(),
                p.quarter.year().to_string(),
                p.quarter.q().to_string(),
                p.value.to_string(),
                p.count.to_string(),
                p.fallback.to_string(),
            ])?;
        }
    }
    csv.flush()
}

/// Reads a series file back, grouping rows by cell (in key order).
pub fn read_series<R: Read>(r: R) -> Result<Vec<IndexSeries>, IndexError> {
    let bad = |line: u64, msg: &str| IndexError::Format(format!("line {line}: {msg}"));
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| IndexError::Format(e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if header != SERIES_COLUMNS {
        return Err(IndexError::Format(format!("expected header {SERIES_COLUMNS:?}, found {header:?}")));
    }
    let mut map: BTreeMap<IndexCell, Vec<IndexPoint>> = BTreeMap::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| IndexError::Format(e.to_string()))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let ptype: PropertyType = rec[1].parse().map_err(|e: String| bad(line, &e))?;
        let size: SizeClass = rec[2].parse().map_err(|e: String| bad(line, &e))?;
        let year: i32 = rec[3].trim().parse().map_err(|_| bad(line, "year"))?;
        let q: u8 = rec[4].trim().parse().map_err(|_| bad(line, "quarter"))?;
        let quarter = Quarter::new(year, q).map_err(|e| bad(line, &e.to_string()))?;
        let value: f64 = rec[5].trim().parse().map_err(|_| bad(line, "value"))?;
        let count: usize = rec[6].trim().parse().map_err(|_| bad(line, "count"))?;
        let fallback: bool = rec[7].trim().parse().map_err(|_| bad(line, "fallback"))?;
        map.entry(IndexCell::new(rec[0].trim(), ptype, size))
            .or_default()
            .push(IndexPoint { quarter, value, count, fallback });
    }
    Ok(map
        .into_iter()
        .map(|(cell, mut points)| {
            points.sort_by_key(|p| p.quarter);
            IndexSeries { cell, points }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn listing(id: usize, district: &str, canton: &str, ptype: PropertyType, rooms: f64, price: u64, space: f64, q: Quarter) -> Listing {
        Listing {
            id: format!("L{id}"),
            source_portal: "p".into(),
            zip: "8000".into(),
            district_id: district.into(),
            canton: canton.into(),
            property_type: ptype,
            rooms,
            price_chf: price,
            living_space_m2: space,
            title: String::new(),
            description: String::new(),
            listed_quarter: q,
        }
    }

    fn q() -> Quarter {
        Quarter::new(2012, 4).unwrap()
    }

    #[test]
    fn size_table_boundaries() {
        use PropertyType::*;
        assert_eq!(classify_size(Apartment, 3.5), SizeClass::Small);
        assert_eq!(classify_size(Apartment, 4.0), SizeClass::Medium);
        assert_eq!(classify_size(Apartment, 5.5), SizeClass::Medium);
        assert_eq!(classify_size(Apartment, 6.0), SizeClass::Large);
        assert_eq!(classify_size(House, 4.5), SizeClass::Small);
        assert_eq!(classify_size(House, 5.0), SizeClass::Medium);
        assert_eq!(classify_size(House, 6.5), SizeClass::Medium);
        assert_eq!(classify_size(House, 7.0), SizeClass::Large);
        assert_eq!(classify_size(House, 1.0), SizeClass::Small);
    }

    #[test]
    fn median_examples() {
        assert_eq!(median(&[100.0, 300.0, 200.0]).unwrap(), 200.0);
        assert_eq!(median(&[100.0, 200.0, 300.0, 400.0]).unwrap(), 250.0);
        assert_eq!(median::<f64>(&[]), Err(IndexError::EmptySample));
        assert_eq!(median(&[3.0f32, 1.0]).unwrap(), 2.0f32);
    }

    #[test]
    fn house_median_point() {
        let ls: Vec<Listing> = [500_000, 600_000, 700_000]
            .iter()
            .enumerate()
            .map(|(i, &p)| listing(i, "D1", "ZH", PropertyType::House, 5.5, p, 150.0, q()))
            .collect();
        let s = build_series(&ls, &IndexCell::new("D1", PropertyType::House, SizeClass::Medium), &IndexConfig { min_ads: 1 });
        assert_eq!(s.points.len(), 1);
        assert_eq!(s.points[0].value, 600_000.0);
        assert_eq!(s.points[0].count, 3);
        assert!(!s.points[0].fallback);
    }

    #[test]
    fn apartment_price_per_m2() {
        let ls = vec![listing(0, "D1", "ZH", PropertyType::Apartment, 3.0, 800_000, 100.0, q())];
        let s = build_series(&ls, &IndexCell::new("D1", PropertyType::Apartment, SizeClass::Small), &IndexConfig { min_ads: 1 });
        assert_eq!(s.points[0].value, 8000.0);
    }

    #[test]
    fn cantonal_fallback_below_min_ads() {
        let mut ls = Vec::new();
        for i in 0..5 {
            ls.push(listing(i, "D1", "ZH", PropertyType::Apartment, 4.5, 500_000, 100.0, q()));
        }
        for i in 5..40 {
            ls.push(listing(i, "D2", "ZH", PropertyType::Apartment, 4.5, 700_000 + i as u64, 100.0, q()));
        }
        // another canton must not leak in
        ls.push(listing(99, "D9", "BE", PropertyType::Apartment, 4.5, 1, 100.0, q()));
        let s = build_series(&ls, &IndexCell::new("D1", PropertyType::Apartment, SizeClass::Medium), &IndexConfig::default());
        let p = s.points[0];
        assert!(p.fallback);
        assert_eq!(p.count, 5);
        let canton_vals: Vec<f64> = ls.iter().filter(|l| l.canton == "ZH").map(listing_value).collect();
        assert_eq!(p.value, median(&canton_vals).unwrap());
    }

    #[test]
    fn district_without_listings_needs_explicit_canton() {
        let ls: Vec<Listing> =
            (0..12).map(|i| listing(i, "D2", "ZH", PropertyType::House, 5.0, 900_000 + i as u64, 150.0, q())).collect();
        let cell = IndexCell::new("D1", PropertyType::House, SizeClass::Medium);
        assert!(build_series(&ls, &cell, &IndexConfig::default()).points.is_empty());
        let s = build_series_in(&ls, &cell, Some("ZH"), &IndexConfig::default());
        assert_eq!(s.points.len(), 1);
        assert!(s.points[0].fallback);
        assert_eq!(s.points[0].count, 0);
    }

    #[test]
    fn period_change_and_buckets() {
        let cell = IndexCell::new("D", PropertyType::Apartment, SizeClass::All);
        let a = Quarter::new(2007, 1).unwrap();
        let pt = |quarter, value| IndexPoint { quarter, value, count: 10, fallback: false };
        let s = IndexSeries { cell, points: vec![pt(a, 4000.0), pt(q(), 5200.0)] };
        let c = period_change(&s, a, q()).unwrap();
        assert!((c - 30.0).abs() < 1e-12);
        assert_eq!(bucket_change(c), "26–50");
        assert_eq!(bucket_change(110.0), ">100");
        assert_eq!(bucket_change(-5.0), "≤0");
        assert_eq!(bucket_change(0.0), "≤0");
        assert_eq!(bucket_change(25.0), "0–25");
        assert_eq!(bucket_change(60.0), "51–75");
        assert_eq!(bucket_change(100.0), "76–100");
        let doubled = IndexSeries { points: vec![pt(a, 4000.0), pt(q(), 8400.0)], ..s.clone() };
        assert!((period_change(&doubled, a, q()).unwrap() - 110.0).abs() < 1e-9);
        let flat = IndexSeries { points: vec![pt(a, 4000.0), pt(q(), 4000.0)], ..s.clone() };
        assert_eq!(period_change(&flat, a, q()).unwrap(), 0.0);
        let missing = period_change(&s, Quarter::new(2008, 1).unwrap(), q());
        assert!(matches!(missing, Err(IndexError::MissingEndpoint { which: "start", .. })));
    }

    #[test]
    fn series_file_round_trip() {
        let ls: Vec<Listing> = (0..12)
            .map(|i| listing(i, "D1", "ZH", PropertyType::Apartment, 2.0 + (i % 5) as f64, 400_000 + 1000 * i as u64, 77.5, q()))
            .collect();
        let series: Vec<IndexSeries> = cells(&ls).iter().map(|c| build_series(&ls, c, &IndexConfig { min_ads: 2 })).collect();
        let mut buf = Vec::new();
        write_series(&mut buf, &["x=1".into()], &series).unwrap();
        assert_eq!(read_series(&buf[..]).unwrap(), series);
    }

    proptest! {
        #[test]
        fn median_matches_sort_and_is_bounded(mut v in proptest::collection::vec(-1e6f64..1e6, 1..60)) {
            let m = median(&v).unwrap();
            let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(m >= lo && m <= hi);
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let n = v.len();
            let oracle = if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 };
            prop_assert_eq!(m, oracle);
            v.reverse();
            prop_assert_eq!(median(&v).unwrap(), m);
        }

        #[test]
        fn house_median_shifts_by_constant(prices in proptest::collection::vec(100_000u64..2_000_000, 1..30), k in 0u64..100_000) {
            let mk = |shift: u64| -> Vec<Listing> {
                prices.iter().enumerate().map(|(i, &p)| listing(i, "D", "ZH", PropertyType::House, 5.0, p + shift, 100.0, q())).collect()
            };
            let cell = IndexCell::new("D", PropertyType::House, SizeClass::All);
            let cfg = IndexConfig { min_ads: 1 };
            let a = build_series(&mk(0), &cell, &cfg).points[0].value;
            let b = build_series(&mk(k), &cell, &cfg).points[0].value;
            prop_assert!((b - a - k as f64).abs() <= 1e-9 * b.abs());
        }

        #[test]
        fn all_size_count_is_sum_of_sizes(rooms in proptest::collection::vec(2u8..20, 1..40)) {
            let ls: Vec<Listing> = rooms.iter().enumerate().map(|(i, &r)| listing(i, "D", "ZH", PropertyType::Apartment, r as f64 / 2.0, 500_000, 90.0, q())).collect();
            let cfg = IndexConfig { min_ads: 1 };
            let count = |s: SizeClass| build_series(&ls, &IndexCell::new("D", PropertyType::Apartment, s), &cfg).points.first().map_or(0, |p| p.count);
            prop_assert_eq!(count(SizeClass::All), SizeClass::SIZED.iter().map(|&s| count(s)).sum::<usize>());
        }
    }
}
