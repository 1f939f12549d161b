//! Run configuration, loaded from TOML and embedded in every report.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dedup::TrainConfig;
use crate::index::{IndexConfig, SizeClass};
use crate::ingest::{PropertyType, Window};
use crate::lppl::FitConfig;
use crate::quarter::Quarter;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid config {path}: {source}")]
    Parse { path: String, source: toml::de::Error },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IndexSection {
    pub min_ads: usize,
    /// Let cantonal fallback points enter the fits.
    pub use_fallback_in_fits: bool,
    /// Endpoints of the period-change heat map.
    pub change_from: Quarter,
    pub change_to: Quarter,
}

impl Default for IndexSection {
    fn default() -> Self {
        Self {
            min_ads: IndexConfig::default().min_ads,
            use_fallback_in_fits: false,
            change_from: Quarter::new(2007, 1).expect("valid quarter"),
            change_to: Quarter::new(2012, 4).expect("valid quarter"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnoseSection {
    /// Cells to fit, by property type and size class.
    pub property_types: Vec<PropertyType>,
    pub sizes: Vec<SizeClass>,
    /// Quarters past the last observation covered by the plot data.
    pub plot_horizon_quarters: usize,
    /// Bootstrap scenario paths written per cell (0 keeps only the point fit).
    pub plot_scenarios: usize,
}

impl Default for DiagnoseSection {
    fn default() -> Self {
        Self {
            property_types: vec![PropertyType::House, PropertyType::Apartment],
            sizes: SizeClass::EVERY.to_vec(),
            plot_horizon_quarters: 8,
            plot_scenarios: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; classifier training and per-cell fits derive from it.
    pub seed: u64,
    pub window: Window,
    pub index: IndexSection,
    pub dedup: TrainConfig,
    pub fit: FitConfig,
    pub diagnose: DiagnoseSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        let mut c = Self {
            seed: 0,
            window: Window::default(),
            index: IndexSection::default(),
            dedup: TrainConfig::default(),
            fit: FitConfig::default(),
            diagnose: DiagnoseSection::default(),
        };
        c.propagate_seed();
        c
    }
}

impl RunConfig {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let mut c: RunConfig =
            toml::from_str(text).map_err(|source| ConfigError::Parse { path: origin.to_string(), source })?;
        c.propagate_seed();
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let shown = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: shown.clone(), source })?;
        Self::from_toml(&text, &shown)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.propagate_seed();
        self
    }

    fn propagate_seed(&mut self) {
        self.dedup.seed = self.seed;
        self.fit.seed = self.seed;
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.window.start > self.window.end {
            return bad(format!("window start {} after end {}", self.window.start, self.window.end));
        }
        let f = &self.fit;
        if !(f.m_min < f.m_max && f.omega_min < f.omega_max) {
            return bad("fit bounds must satisfy m_min < m_max and omega_min < omega_max".into());
        }
        if !(f.tc_horizon_years > 0.0 && f.burst_tolerance_years >= 0.0) {
            return bad("tc_horizon_years must be positive and burst_tolerance_years non-negative".into());
        }
        if !(0.0..=1.0).contains(&f.bootstrap_max_fail_frac) {
            return bad("bootstrap_max_fail_frac must lie in [0, 1]".into());
        }
        if f.min_points < 8 {
            return bad("min_points must be at least 8".into());
        }
        if !(self.dedup.lambda > 0.0) || self.dedup.epochs == 0 {
            return bad("dedup lambda must be positive and epochs nonzero".into());
        }
        Ok(())
    }

    pub fn index_config(&self) -> IndexConfig {
        IndexConfig { min_ads: self.index.min_ads }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Report header lines: tool version, stage and the resolved config.
    pub fn preamble(&self, stage: &str) -> Vec<String> {
        let mut lines = vec![format!("bubble-diag {} stage={stage}", env!("CARGO_PKG_VERSION"))];
        lines.extend(self.to_toml().lines().filter(|l| !l.is_empty()).map(str::to_string));
        lines
    }
}
