//! Fit records, plot data and overview tables exchanged between stages.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::diagnose::{assess_series, diagnose_series, DistrictDiagnosis, Verdict};
use crate::index::{bucket_change, period_change, IndexCell, IndexSeries};
use crate::lppl::{scenario_paths, FitResult, LogSeries, LpplError, LpplParams, Rejection, TcInterval};
use crate::quarter::Quarter;
use crate::seed;

/// Rejection code for series too short to fit.
pub const INSUFFICIENT_DATA: &str = "insufficient_data";

/// Everything later stages need from one cell's calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFit {
    pub cell: IndexCell,
    pub n_points: usize,
    pub params: Option<LpplParams<f64>>,
    pub sse: Option<f64>,
    pub oscillations: Option<f64>,
    pub t_first: Option<f64>,
    pub t_last: Option<f64>,
    pub qualified: bool,
    pub rejections: Vec<String>,
    pub interval: Option<TcInterval<f64>>,
    pub bootstrap_ok: usize,
    pub bootstrap_failed: usize,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitsDocument {
    pub config: RunConfig,
    pub cells: Vec<CellFit>,
}

/// One row of the plot table.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotRow {
    pub cell: IndexCell,
    /// `observed`, `fallback`, `fitted` or `scenario`.
    pub series: &'static str,
    pub path: usize,
    pub t: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellOutcome {
    pub fit: CellFit,
    pub diagnosis: DistrictDiagnosis,
    pub plot: Vec<PlotRow>,
}

/// Calibrates one series: fit, bootstrap, verdict and plot data. The fit
/// seed is derived from the run seed and the cell key.
pub fn fit_cell(series: &IndexSeries, cfg: &RunConfig) -> Result<CellOutcome, LpplError> {
    let cell = series.cell.clone();
    let (times, values) = series.observations(cfg.index.use_fallback_in_fits);
    let mut plot: Vec<PlotRow> = series
        .points
        .iter()
        .map(|p| PlotRow {
            cell: cell.clone(),
            series: if p.fallback && !cfg.index.use_fallback_in_fits { "fallback" } else { "observed" },
            path: 0,
            t: p.quarter.time(),
            value: p.value,
        })
        .collect();
    let mut fit_cfg = cfg.fit.clone();
    fit_cfg.seed = seed::for_key(cfg.seed, &cell.key());
    if times.len() < fit_cfg.min_points.max(8) {
        let fit = CellFit {
            cell: cell.clone(),
            n_points: times.len(),
            params: None,
            sse: None,
            oscillations: None,
            t_first: times.first().copied(),
            t_last: times.last().copied(),
            qualified: false,
            rejections: vec![INSUFFICIENT_DATA.to_string()],
            interval: None,
            bootstrap_ok: 0,
            bootstrap_failed: 0,
            note: Some(format!("{} points, {} required", times.len(), fit_cfg.min_points)),
        };
        let diagnosis = diagnose_cell_fit(&fit, cfg);
        return Ok(CellOutcome { fit, diagnosis, plot });
    }
    let log_series = LogSeries::from_prices(times.clone(), &values)?;
    let a = assess_series(&cell, &log_series, &fit_cfg)?;
    let fitted = a.fit.fitted(&times);
    plot.extend(times.iter().zip(&fitted).map(|(&t, &v)| PlotRow { cell: cell.clone(), series: "fitted", path: 0, t, value: v.exp() }));
    if a.fit.qualified() {
        let replicates = a.bootstrap.as_ref().map(|b| &b.replicates[..b.replicates.len().min(cfg.diagnose.plot_scenarios)]).unwrap_or(&[]);
        for (k, path) in scenario_paths(&a.fit, replicates, cfg.diagnose.plot_horizon_quarters).into_iter().enumerate() {
            plot.extend(path.times.iter().zip(&path.log_values).map(|(&t, &v)| PlotRow {
                cell: cell.clone(),
                series: "scenario",
                path: k,
                t,
                value: v.exp(),
            }));
        }
    }
    let fit = CellFit {
        cell,
        n_points: a.fit.n_points,
        params: Some(a.fit.params),
        sse: Some(a.fit.sse),
        oscillations: Some(a.fit.oscillations),
        t_first: Some(a.fit.t_first),
        t_last: Some(a.fit.t_last),
        qualified: a.fit.qualified(),
        rejections: a.fit.rejections.iter().map(|r| r.code().to_string()).collect(),
        interval: a.bootstrap.as_ref().map(|b| b.interval),
        bootstrap_ok: a.bootstrap.as_ref().map_or(0, |b| b.replicates.len()),
        bootstrap_failed: a.bootstrap.as_ref().map_or(0, |b| b.failed),
        note: a.bootstrap_error.map(|e| e.to_string()),
    };
    Ok(CellOutcome { fit, diagnosis: a.diagnosis, plot })
}

/// Verdict for a stored fit record.
pub fn diagnose_cell_fit(f: &CellFit, cfg: &RunConfig) -> DistrictDiagnosis {
    let (Some(params), Some(t_last)) = (f.params, f.t_last) else {
        return DistrictDiagnosis {
            district_id: f.cell.district_id.clone(),
            property_type: f.cell.property_type,
            size: f.cell.size,
            verdict: Verdict::None,
            tc: None,
            tc_interval: None,
            critical_window: None,
            rejections: f.rejections.clone(),
        };
    };
    let mut rejections: Vec<Rejection> = f.rejections.iter().filter_map(|c| Rejection::from_code(c)).collect();
    if !f.qualified && rejections.is_empty() {
        rejections.push(Rejection::NoConvergence);
    }
    let fit = FitResult {
        params,
        sse: f.sse.unwrap_or(f64::NAN),
        n_points: f.n_points,
        rejections,
        residuals: Vec::new(),
        oscillations: f.oscillations.unwrap_or(f64::NAN),
        t_first: f.t_first.unwrap_or(f64::NAN),
        t_last,
        candidates: Vec::new(),
    };
    diagnose_series(&f.cell, &fit, f.interval.as_ref(), t_last, &cfg.fit)
}

fn preamble<W: Write>(w: &mut W, lines: &[String]) -> std::io::Result<()> {
    for line in lines {
        writeln!(w, "# {line}")?;
    }
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_fits_table<W: Write>(mut w: W, lines: &[String], fits: &[CellFit]) -> std::io::Result<()> {
    preamble(&mut w, lines)?;
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record([
        "district_id", "property_type", "size", "n_points", "qualified", "tc", "m", "omega", "a", "b", "c1", "c2", "sse",
        "oscillations", "tc_lo", "tc_hi", "bootstrap_ok", "bootstrap_failed", "rejections", "note",
    ])?;
    for f in fits {
        let p = f.params;
        csv.write_record([
            f.cell.district_id.clone(),
            f.cell.property_type.to_string(),
            f.cell.size.to_string(),
            f.n_points.to_string(),
            f.qualified.to_string(),
            opt(p.map(|p| p.tc)),
            opt(p.map(|p| p.m)),
            opt(p.map(|p| p.omega)),
            opt(p.map(|p| p.a)),
            opt(p.map(|p| p.b)),
            opt(p.map(|p| p.c1)),
            opt(p.map(|p| p.c2)),
            opt(f.sse),
            opt(f.oscillations),
            opt(f.interval.map(|i| i.lo)),
            opt(f.interval.map(|i| i.hi)),
            f.bootstrap_ok.to_string(),
            f.bootstrap_failed.to_string(),
            f.rejections.join(";"),
            f.note.clone().unwrap_or_default(),
        ])?;
    }
    csv.flush()
}

pub fn write_plot<W: Write>(mut w: W, lines: &[String], rows: &[PlotRow]) -> std::io::Result<()> {
    preamble(&mut w, lines)?;
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["district_id", "property_type", "size", "series", "path", "t", "quarter", "value"])?;
    for r in rows {
        csv.write_record([
            r.cell.district_id.clone(),
            r.cell.property_type.to_string(),
            r.cell.size.to_string(),
            r.series.to_string(),
            r.path.to_string(),
            r.t.to_string(),
            Quarter::containing(r.t).to_string(),
            r.value.to_string(),
        ])?;
    }
    csv.flush()
}

pub fn write_tc_bands<W: Write>(mut w: W, lines: &[String], fits: &[CellFit]) -> std::io::Result<()> {
    preamble(&mut w, lines)?;
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["district_id", "property_type", "size", "tc", "tc_lo", "tc_hi", "level"])?;
    for f in fits.iter().filter(|f| f.qualified) {
        csv.write_record([
            f.cell.district_id.clone(),
            f.cell.property_type.to_string(),
            f.cell.size.to_string(),
            opt(f.params.map(|p| p.tc)),
            opt(f.interval.map(|i| i.lo)),
            opt(f.interval.map(|i| i.hi)),
            opt(f.interval.map(|i| i.level)),
        ])?;
    }
    csv.flush()
}

/// Heat-map rows: percentage change between two quarters per cell, with
/// its band. Cells missing either endpoint are skipped.
pub fn heatmap_rows(series: &[IndexSeries], from: Quarter, to: Quarter) -> Vec<(IndexCell, String, f64, &'static str)> {
    series
        .iter()
        .filter_map(|s| {
            let pct = period_change(s, from, to).ok()?;
            let metric = format!("{}/{} change {from}-{to} %", s.cell.property_type, s.cell.size);
            Some((s.cell.clone(), metric, pct, bucket_change(pct)))
        })
        .collect()
}

pub fn write_heatmap<W: Write>(mut w: W, lines: &[String], rows: &[(IndexCell, String, f64, &'static str)]) -> std::io::Result<()> {
    preamble(&mut w, lines)?;
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["district_id", "metric", "value", "bucket"])?;
    for (cell, metric, value, bucket) in rows {
        csv.write_record([cell.district_id.as_str(), metric.as_str(), &value.to_string(), bucket])?;
    }
    csv.flush()
}

/// Latest index value per cell: the district-to-value map behind the
/// price-level overview.
pub fn write_district_values<W: Write>(mut w: W, lines: &[String], series: &[IndexSeries]) -> std::io::Result<()> {
    preamble(&mut w, lines)?;
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["district_id", "metric", "quarter", "value", "fallback"])?;
    for s in series {
        if let Some(p) = s.points.last() {
            let metric = format!("{}/{} median", s.cell.property_type, s.cell.size);
            csv.write_record([
                s.cell.district_id.clone(),
                metric,
                p.quarter.to_string(),
                p.value.to_string(),
                p.fallback.to_string(),
            ])?;
        }
    }
    csv.flush()
}
