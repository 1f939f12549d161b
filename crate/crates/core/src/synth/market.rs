//! District-level listing corpora whose medium apartments follow planted
//! price trends: LPPL bubbles, bubbles that already turned, or linear growth.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::corpus::{description_for, districts, finish, plant_duplicates, round_half, title_for, Draft, SynthCorpus};
use super::BubbleDraw;
use crate::ingest::{Listing, PropertyType, Window};
use crate::lppl::{regime_eval, LpplParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Trend {
    /// Price per m² is `exp` of the LPPL curve, levelling off after `tc`.
    Bubble { params: LpplParams<f64> },
    /// Price per m² grows by `slope` CHF every quarter from `base`.
    Linear { base: f64, slope: f64 },
}

impl Trend {
    /// Price per m² at quarter `k` of the window, time `t`.
    pub fn price_per_m2(&self, k: usize, t: f64) -> f64 {
        match self {
            Trend::Bubble { params } => regime_eval(params, t).exp(),
            Trend::Linear { base, slope } => base + slope * k as f64,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Trend::Bubble { .. } => "bubble",
            Trend::Linear { .. } => "linear",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketSpec {
    pub seed: u64,
    pub n_districts: usize,
    /// Districts with a future critical time.
    pub bubbles: usize,
    /// Districts whose critical time lies inside the window.
    pub bursts: usize,
    pub window: Window,
    /// Medium-apartment ads per district and quarter, inclusive range.
    pub ads_per_quarter: (usize, usize),
    /// Log-normal spread of individual asking prices around the trend.
    pub listing_noise: f64,
    /// Houses per district and quarter, priced off the district trend.
    pub houses_per_quarter: (usize, usize),
    pub bubble: BubbleDraw,
    pub burst_offset: (f64, f64),
    pub linear_base: (f64, f64),
    pub linear_slope: (f64, f64),
    pub dup_rate: f64,
    pub perturbation_strength: f64,
    pub training_pairs: usize,
}

impl Default for MarketSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            n_districts: 20,
            bubbles: 3,
            bursts: 0,
            window: Window::default(),
            ads_per_quarter: (20, 30),
            listing_noise: 0.03,
            houses_per_quarter: (2, 4),
            bubble: BubbleDraw { tc_offset: (0.25, 1.0), log_rise: (0.5, 0.8), ..BubbleDraw::default() },
            burst_offset: (-0.75, -0.4),
            linear_base: (3500.0, 6000.0),
            linear_slope: (100.0, 200.0),
            dup_rate: 0.1,
            perturbation_strength: 0.2,
            training_pairs: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedTrend {
    pub district_id: String,
    pub trend: Trend,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthMarket {
    pub corpus: SynthCorpus,
    /// One trend per district, in district order.
    pub trends: Vec<PlantedTrend>,
}

fn uniform<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo { rng.random_range(lo..hi) } else { lo }
}

fn count<R: Rng>(rng: &mut R, (lo, hi): (usize, usize)) -> usize {
    if hi > lo { rng.random_range(lo..=hi) } else { lo }
}

/// The first `bubbles` districts carry a future critical time, the next
/// `bursts` a past one, the rest grow linearly.
pub fn gen_market(spec: &MarketSpec) -> SynthMarket {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let districts = districts(spec.n_districts.max(1));
    let n_quarters = (spec.window.end.index() - spec.window.start.index() + 1).max(1) as usize;
    let noise = Normal::new(0.0, spec.listing_noise.max(0.0)).expect("finite spread");
    let mut trends = Vec::with_capacity(districts.len());
    let mut drafts = Vec::new();
    for (k, d) in districts.iter().enumerate() {
        let trend = if k < spec.bubbles {
            Trend::Bubble { params: spec.bubble.draw(&mut rng, spec.window.start, n_quarters) }
        } else if k < spec.bubbles + spec.bursts {
            let draw = BubbleDraw { tc_offset: spec.burst_offset, ..spec.bubble.clone() };
            Trend::Bubble { params: draw.draw(&mut rng, spec.window.start, n_quarters) }
        } else {
            Trend::Linear { base: uniform(&mut rng, spec.linear_base), slope: uniform(&mut rng, spec.linear_slope) }
        };
        for qk in 0..n_quarters {
            let quarter = spec.window.start.offset(qk as i64);
            let per_m2 = trend.price_per_m2(qk, quarter.time());
            let mut push = |rng: &mut ChaCha8Rng, ptype: PropertyType, rooms: f64| {
                let space = round_half(rooms * uniform(rng, (24.0, 32.0)));
                let value = per_m2 * space * noise.sample(rng).exp();
                let price = ((value / 1000.0).round() as u64).max(1) * 1000;
                let place = d.id.clone();
                let zip = d.zips[rng.random_range(0..d.zips.len())].clone();
                drafts.push(Draft {
                    listing: Listing {
                        id: String::new(),
                        source_portal: "synthetic".into(),
                        zip,
                        district_id: d.id.clone(),
                        canton: d.canton.clone(),
                        property_type: ptype,
                        rooms,
                        price_chf: price,
                        living_space_m2: space,
                        title: title_for(rng, ptype, rooms, &place),
                        description: description_for(rng, space, &place),
                        listed_quarter: quarter,
                    },
                    copy_of: None,
                });
            };
            for _ in 0..count(&mut rng, spec.ads_per_quarter) {
                let rooms = rng.random_range(8..=11) as f64 / 2.0;
                push(&mut rng, PropertyType::Apartment, rooms);
            }
            for _ in 0..count(&mut rng, spec.houses_per_quarter) {
                let rooms = rng.random_range(8..=14) as f64 / 2.0;
                push(&mut rng, PropertyType::House, rooms);
            }
        }
        trends.push(PlantedTrend { district_id: d.id.clone(), trend });
    }
    let originals = drafts.len();
    let n_dups = (spec.dup_rate.clamp(0.0, 0.9) / (1.0 - spec.dup_rate.clamp(0.0, 0.9)) * originals as f64).round() as usize;
    plant_duplicates(&mut rng, &mut drafts, n_dups, spec.perturbation_strength);
    let corpus = finish(&mut rng, drafts, "M", spec.training_pairs);
    SynthMarket { corpus, trends }
}

/// True-trend sidecar: one row per district.
pub fn write_trends<W: Write>(w: W, trends: &[PlantedTrend]) -> std::io::Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["district_id", "kind", "tc", "m", "omega", "a", "b", "c1", "c2", "base", "slope"])?;
    for t in trends {
        let row: Vec<String> = match t.trend {
            Trend::Bubble { params: p } => {
                let mut r = vec![t.district_id.clone(), "bubble".into()];
                r.extend([p.tc, p.m, p.omega, p.a, p.b, p.c1, p.c2].iter().map(f64::to_string));
                r.extend([String::new(), String::new()]);
                r
            }
            Trend::Linear { base, slope } => {
                let mut r = vec![t.district_id.clone(), "linear".into()];
                r.extend(std::iter::repeat_n(String::new(), 7));
                r.extend([base.to_string(), slope.to_string()]);
                r
            }
        };
        csv.write_record(row)?;
    }
    csv.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::{build_series, IndexCell, IndexConfig, SizeClass};

    #[test]
    fn deterministic_and_sized() {
        let spec = MarketSpec { n_districts: 4, bubbles: 1, ..MarketSpec::default() };
        let a = gen_market(&spec);
        assert_eq!(a, gen_market(&spec));
        assert_eq!(a.trends.len(), 4);
        assert!(matches!(a.trends[0].trend, Trend::Bubble { .. }));
        assert!(matches!(a.trends[3].trend, Trend::Linear { .. }));
    }

    #[test]
    fn medium_apartment_median_tracks_trend() {
        let spec = MarketSpec { n_districts: 2, bubbles: 1, dup_rate: 0.0, ..MarketSpec::default() };
        let m = gen_market(&spec);
        for pt in &m.trends {
            let cell = IndexCell::new(pt.district_id.clone(), PropertyType::Apartment, SizeClass::Medium);
            let s = build_series(&m.corpus.listings, &cell, &IndexConfig::default());
            assert_eq!(s.points.len(), 32);
            for (k, p) in s.points.iter().enumerate() {
                assert!(!p.fallback);
                let truth = pt.trend.price_per_m2(k, p.quarter.time());
                assert!((p.value / truth).ln().abs() < 0.05, "{} {k}: {} vs {truth}", pt.district_id, p.value);
            }
        }
    }
}
