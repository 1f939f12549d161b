//! District verdicts from qualified fits.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::index::{IndexCell, SizeClass};
use crate::ingest::PropertyType;
use crate::lppl::{bootstrap_tc, fit_lppl, Bootstrap, FitConfig, FitResult, LogSeries, LpplError, TcInterval};
use crate::quarter::Quarter;
use crate::scalar::Scalar;

/// Ordered by severity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Verdict {
    None,
    Burst,
    Critical,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::None => "None",
            Verdict::Burst => "Burst",
            Verdict::Critical => "Critical",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Verdict {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "None" => Ok(Verdict::None),
            "Burst" => Ok(Verdict::Burst),
            "Critical" => Ok(Verdict::Critical),
            other => Err(format!("unknown verdict {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuarterWindow {
    pub start: Quarter,
    pub end: Quarter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistrictDiagnosis {
    pub district_id: String,
    pub property_type: PropertyType,
    pub size: SizeClass,
    pub verdict: Verdict,
    /// Point estimate of the critical time for qualified fits.
    pub tc: Option<f64>,
    pub tc_interval: Option<TcInterval<f64>>,
    pub critical_window: Option<QuarterWindow>,
    /// Qualification failures, empty unless the verdict is `None`.
    pub rejections: Vec<String>,
}

impl DistrictDiagnosis {
    pub fn cell(&self) -> IndexCell {
        IndexCell::new(self.district_id.clone(), self.property_type, self.size)
    }
}

/// Verdict and reported window for one fitted series.
///
/// The critical-time point estimate decides between Critical (after
/// `t_last`) and Burst. The window covers the quarters spanned by the
/// interval (or by the point estimate when no interval is available),
/// clipped to the future horizon for Critical and to the look-back window
/// for Burst.
pub fn diagnose_series<T: Scalar>(
    cell: &IndexCell,
    fit: &FitResult<T>,
    interval: Option<&TcInterval<T>>,
    t_last: T,
    cfg: &FitConfig,
) -> DistrictDiagnosis {
    let mut d = DistrictDiagnosis {
        district_id: cell.district_id.clone(),
        property_type: cell.property_type,
        size: cell.size,
        verdict: Verdict::None,
        tc: None,
        tc_interval: None,
        critical_window: None,
        rejections: fit.rejections.iter().map(|r| r.code().to_string()).collect(),
    };
    if !fit.qualified() {
        return d;
    }
    let t_last = t_last.to_f64_lossy();
    let tc = fit.params.tc.to_f64_lossy();
    let iv = interval.map(|i| TcInterval { lo: i.lo.to_f64_lossy(), hi: i.hi.to_f64_lossy(), level: i.level });
    let (lo, hi) = iv.map_or((tc, tc), |i| (i.lo, i.hi));
    let last_q = Quarter::containing(t_last);
    let (verdict, floor, ceil) = if tc > t_last {
        (Verdict::Critical, last_q.succ(), Quarter::containing(t_last + cfg.tc_horizon_years))
    } else {
        (Verdict::Burst, Quarter::containing(t_last - cfg.burst_tolerance_years), last_q)
    };
    let start = Quarter::containing(lo).clamp(floor, ceil);
    let end = Quarter::containing(hi).clamp(start, ceil);
    d.verdict = verdict;
    d.tc = Some(tc);
    d.tc_interval = iv;
    d.critical_window = Some(QuarterWindow { start, end });
    d
}

/// Fit, bootstrap and verdict for one series.
#[derive(Debug, Clone)]
pub struct Assessment<T> {
    pub fit: FitResult<T>,
    pub bootstrap: Option<Bootstrap<T>>,
    /// Set when a qualified fit could not be bootstrapped.
    pub bootstrap_error: Option<LpplError>,
    pub diagnosis: DistrictDiagnosis,
}

pub fn assess_series<T: Scalar>(
    cell: &IndexCell,
    series: &LogSeries<T>,
    cfg: &FitConfig,
) -> Result<Assessment<T>, LpplError> {
    let fit = fit_lppl(series, cfg)?;
    let (bootstrap, bootstrap_error) = if fit.qualified() {
        match bootstrap_tc(series, &fit, cfg) {
            Ok(b) => (Some(b), None),
            Err(e) => (None, Some(e)),
        }
    } else {
        (None, None)
    };
    let diagnosis = diagnose_series(cell, &fit, bootstrap.as_ref().map(|b| &b.interval), series.t_last(), cfg);
    Ok(Assessment { fit, bootstrap, bootstrap_error, diagnosis })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportingCell {
    pub property_type: PropertyType,
    pub size: SizeClass,
    pub window: Option<QuarterWindow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistrictSummary {
    pub district_id: String,
    pub verdict: Verdict,
    /// Cells carrying the district's verdict.
    pub cells: Vec<SupportingCell>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictCounts {
    pub critical: usize,
    pub burst: usize,
    pub none: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisReport {
    pub critical: Vec<DistrictSummary>,
    /// Districts whose regime change already occurred.
    pub watch: Vec<DistrictSummary>,
    /// District counts by worst verdict.
    pub counts: VerdictCounts,
}

/// One entry per district at its worst verdict, in district order.
pub fn aggregate_report(diagnoses: &[DistrictDiagnosis]) -> DiagnosisReport {
    let mut by_district: BTreeMap<&str, Vec<&DistrictDiagnosis>> = BTreeMap::new();
    for d in diagnoses {
        by_district.entry(&d.district_id).or_default().push(d);
    }
    let mut report = DiagnosisReport { critical: Vec::new(), watch: Vec::new(), counts: VerdictCounts::default() };
    for (district, mut ds) in by_district {
        ds.sort_by(|a, b| a.cell().cmp(&b.cell()));
        let verdict = ds.iter().map(|d| d.verdict).max().unwrap_or(Verdict::None);
        let summary = DistrictSummary {
            district_id: district.to_string(),
            verdict,
            cells: ds
                .iter()
                .filter(|d| d.verdict == verdict)
                .map(|d| SupportingCell { property_type: d.property_type, size: d.size, window: d.critical_window })
                .collect(),
        };
        match verdict {
            Verdict::Critical => {
                report.counts.critical += 1;
                report.critical.push(summary);
            }
            Verdict::Burst => {
                report.counts.burst += 1;
                report.watch.push(summary);
            }
            Verdict::None => report.counts.none += 1,
        }
    }
    report
}

pub const DIAGNOSIS_COLUMNS: [&str; 11] = [
    "district_id",
    "property_type",
    "size",
    "verdict",
    "window_start",
    "window_end",
    "tc",
    "tc_lo",
    "tc_hi",
    "tc_level",
    "rejections",
];

pub fn write_diagnoses<W: Write>(w: W, preamble: &[String], diagnoses: &[DistrictDiagnosis]) -> std::io::Result<()> {
    let mut w = w;
    for line in preamble {
        writeln!(w, "# {line}")?;
    }
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(DIAGNOSIS_COLUMNS)?;
    for d in diagnoses {
        csv.write_record([
            d.district_id.clone(),
            d.property_type.to_string(),
            d.size.to_string(),
            d.verdict.to_string(),
            d.critical_window.map(|w| w.start.to_string()).unwrap_or_default(),
            d.critical_window.map(|w| w.end.to_string()).unwrap_or_default(),
            opt(d.tc),
            opt(d.tc_interval.map(|i| i.lo)),
            opt(d.tc_interval.map(|i| i.hi)),
            opt(d.tc_interval.map(|i| i.level)),
            d.rejections.join(";"),
        ])?;
    }
    csv.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lppl::{LpplParams, Rejection};

    fn fit(tc: f64, rejections: Vec<Rejection>) -> FitResult<f64> {
        FitResult {
            params: LpplParams { tc, m: 0.5, omega: 8.0, a: 9.0, b: -0.3, c1: 0.01, c2: 0.0 },
            sse: 0.0,
            n_points: 32,
            rejections,
            residuals: vec![0.0; 32],
            oscillations: 3.0,
            t_first: 2005.125,
            t_last: 2012.875,
            candidates: Vec::new(),
        }
    }

    fn cell(d: &str, size: SizeClass) -> IndexCell {
        IndexCell::new(d, PropertyType::Apartment, size)
    }

    fn q(y: i32, n: u8) -> Quarter {
        Quarter::new(y, n).unwrap()
    }

    #[test]
    fn future_tc_is_critical_with_future_window() {
        let cfg = FitConfig::default();
        let iv = TcInterval { lo: 2013.1, hi: 2014.1, level: 0.8 };
        let d = diagnose_series(&cell("D", SizeClass::Medium), &fit(2013.375, vec![]), Some(&iv), 2012.875, &cfg);
        assert_eq!(d.verdict, Verdict::Critical);
        assert_eq!(d.critical_window, Some(QuarterWindow { start: q(2013, 1), end: q(2014, 1) }));
    }

    #[test]
    fn window_is_clipped_to_horizon() {
        let cfg = FitConfig::default();
        let iv = TcInterval { lo: 2012.0, hi: 2020.0, level: 0.8 };
        let d = diagnose_series(&cell("D", SizeClass::Medium), &fit(2013.5, vec![]), Some(&iv), 2012.875, &cfg);
        assert_eq!(d.critical_window, Some(QuarterWindow { start: q(2013, 1), end: q(2014, 4) }));
    }

    #[test]
    fn past_tc_is_burst() {
        let cfg = FitConfig::default();
        let d = diagnose_series(&cell("D", SizeClass::Medium), &fit(2012.575, vec![]), None, 2012.875, &cfg);
        assert_eq!(d.verdict, Verdict::Burst);
        assert_eq!(d.critical_window, Some(QuarterWindow { start: q(2012, 3), end: q(2012, 3) }));
    }

    #[test]
    fn unqualified_is_none() {
        let cfg = FitConfig::default();
        let d = diagnose_series(&cell("D", SizeClass::All), &fit(2013.5, vec![Rejection::MOutOfRange]), None, 2012.875, &cfg);
        assert_eq!(d.verdict, Verdict::None);
        assert!(d.tc_interval.is_none() && d.critical_window.is_none());
        assert_eq!(d.rejections, vec![Rejection::MOutOfRange.code().to_string()]);
    }

    fn diag(d: &str, size: SizeClass, ptype: PropertyType, verdict: Verdict) -> DistrictDiagnosis {
        DistrictDiagnosis {
            district_id: d.into(),
            property_type: ptype,
            size,
            verdict,
            tc: None,
            tc_interval: None,
            critical_window: None,
            rejections: Vec::new(),
        }
    }

    #[test]
    fn aggregate_takes_worst_and_cites_cells() {
        let ds = vec![
            diag("X", SizeClass::All, PropertyType::House, Verdict::None),
            diag("X", SizeClass::Medium, PropertyType::Apartment, Verdict::Critical),
            diag("Y", SizeClass::Small, PropertyType::House, Verdict::Burst),
            diag("Z", SizeClass::Small, PropertyType::House, Verdict::None),
        ];
        let r = aggregate_report(&ds);
        assert_eq!(r.counts, VerdictCounts { critical: 1, burst: 1, none: 1 });
        assert_eq!(r.critical[0].district_id, "X");
        assert_eq!(r.critical[0].cells.len(), 1);
        assert_eq!(r.critical[0].cells[0].size, SizeClass::Medium);
        assert_eq!(r.watch[0].district_id, "Y");
    }

    #[test]
    fn aggregate_all_none() {
        let ds: Vec<_> = (0..4).map(|i| diag(&format!("D{i}"), SizeClass::All, PropertyType::House, Verdict::None)).collect();
        let r = aggregate_report(&ds);
        assert!(r.critical.is_empty() && r.watch.is_empty());
        assert_eq!(r.counts, VerdictCounts { critical: 0, burst: 0, none: 4 });
    }

    proptest::proptest! {
        #[test]
        fn aggregate_is_monotone(verdicts in proptest::collection::vec(0u8..3, 1..12), pick in 0usize..12) {
            let v = |k: u8| [Verdict::None, Verdict::Burst, Verdict::Critical][k as usize];
            let mk = |vs: &[u8]| -> Vec<DistrictDiagnosis> {
                vs.iter().enumerate().map(|(i, &k)| diag(&format!("D{}", i % 3), SizeClass::SIZED[i % 3], PropertyType::House, v(k))).collect()
            };
            let worst = |r: &DiagnosisReport, d: &str| {
                if r.critical.iter().any(|s| s.district_id == d) { Verdict::Critical }
                else if r.watch.iter().any(|s| s.district_id == d) { Verdict::Burst }
                else { Verdict::None }
            };
            let before = aggregate_report(&mk(&verdicts));
            let mut raised = verdicts.clone();
            let i = pick % raised.len();
            raised[i] = (raised[i] + 1).min(2);
            let after = aggregate_report(&mk(&raised));
            for d in ["D0", "D1", "D2"] {
                proptest::prop_assert!(worst(&after, d) >= worst(&before, d));
            }
            let districts = verdicts.len().min(3);
            proptest::prop_assert_eq!(before.counts.critical + before.counts.burst + before.counts.none, districts);
        }
    }
}
