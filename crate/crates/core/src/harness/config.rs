use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::SplitCriterion;
use crate::error::{Error, Result};
use crate::fairness::{FairnessKind, FairnessSpec, Mode};
use crate::solver::DEFAULT_TIME_LIMIT;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exact,
    Greedy,
    IgcRelab,
    IgcPlusIgsRelab,
    IgcMinusIgsRelab,
}

impl Method {
    pub const ALL: [Method; 5] =
        [Method::Exact, Method::Greedy, Method::IgcRelab, Method::IgcPlusIgsRelab, Method::IgcMinusIgsRelab];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::Greedy => "greedy",
            Method::IgcRelab => "igc_relab",
            Method::IgcPlusIgsRelab => "igc_plus_igs_relab",
            Method::IgcMinusIgsRelab => "igc_minus_igs_relab",
        }
    }

    /// Split criterion of a relabeling baseline.
    pub fn criterion(&self) -> Option<SplitCriterion> {
        match self {
            Method::Exact | Method::Greedy => None,
            Method::IgcRelab => Some(SplitCriterion::Igc),
            Method::IgcPlusIgsRelab => Some(SplitCriterion::IgcPlusIgs),
            Method::IgcMinusIgsRelab => Some(SplitCriterion::IgcMinusIgs),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace('-', "_");
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == key)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    Absolute,
    OneSided,
}

/// 0.01, 0.02, ..., 0.55 and 1.0.
pub fn default_deltas() -> Vec<f64> {
    let mut grid: Vec<f64> = (1..=55).map(|k| k as f64 / 100.0).collect();
    grid.push(1.0);
    grid
}

fn default_methods() -> Vec<Method> {
    vec![Method::Exact]
}

fn default_depths() -> Vec<usize> {
    vec![2, 3]
}

fn default_seeds() -> Vec<u64> {
    (0..5).collect()
}

fn default_train_fraction() -> f64 {
    0.75
}

fn default_fit_fraction() -> f64 {
    2.0 / 3.0
}

fn default_time_limit() -> f64 {
    DEFAULT_TIME_LIMIT
}

fn default_greedy_start() -> usize {
    2
}

fn default_jobs() -> usize {
    1
}

fn default_true() -> bool {
    true
}

/// One experiment: data, methods, fairness notion and the run grid.
/// Relative paths in a config file resolve against the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Delimited data file.
    pub dataset: PathBuf,
    /// Binarization TOML for `dataset`.
    pub binarization: PathBuf,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    pub kind: FairnessKind,
    pub mode: ModeName,
    /// Dominant group for one-sided mode.
    #[serde(default)]
    pub dominant: Option<String>,
    /// Marginalized group for one-sided mode without collapsing.
    #[serde(default)]
    pub marginalized: Option<String>,
    /// In one-sided mode, merge all non-dominant groups into one.
    #[serde(default = "default_true")]
    pub collapse_groups: bool,
    #[serde(default = "default_deltas")]
    pub deltas: Vec<f64>,
    #[serde(default = "default_depths")]
    pub depths: Vec<usize>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Share of rows used for training; the rest is the test set.
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    /// Share of the training rows used for fitting during depth tuning; the rest validates.
    #[serde(default = "default_fit_fraction")]
    pub fit_fraction: f64,
    /// Draw this many rows (per seed) before splitting.
    #[serde(default)]
    pub subsample: Option<usize>,
    /// Seconds per solver run.
    #[serde(default = "default_time_limit")]
    pub time_limit: f64,
    /// Depth solved exactly before greedy extension.
    #[serde(default = "default_greedy_start")]
    pub greedy_start_depth: usize,
    /// Parallel branch-and-bound inside each solver run.
    #[serde(default)]
    pub parallel_solver: bool,
    /// Runs executed concurrently.
    #[serde(default = "default_jobs")]
    pub jobs: usize,
    /// Output directory.
    pub output: PathBuf,
}

impl ExperimentConfig {
    /// A config with every optional field at its default.
    pub fn new(dataset: PathBuf, binarization: PathBuf, kind: FairnessKind, output: PathBuf) -> Self {
        Self {
            dataset,
            binarization,
            methods: default_methods(),
            kind,
            mode: ModeName::Absolute,
            dominant: None,
            marginalized: None,
            collapse_groups: true,
            deltas: default_deltas(),
            depths: default_depths(),
            seeds: default_seeds(),
            train_fraction: default_train_fraction(),
            fit_fraction: default_fit_fraction(),
            subsample: None,
            time_limit: default_time_limit(),
            greedy_start_depth: default_greedy_start(),
            parallel_solver: false,
            jobs: default_jobs(),
            output,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut config.dataset, &mut config.binarization, &mut config.output] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if self.methods.is_empty() {
            return err("at least one method is required".into());
        }
        let mut sorted = self.methods.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.methods.len() {
            return err("methods must not repeat".into());
        }
        if self.deltas.is_empty() {
            return err("the delta grid is empty".into());
        }
        if let Some(d) = self.deltas.iter().find(|d| !(0.0..=1.0).contains(*d)) {
            return err(format!("delta {d} is outside [0, 1]"));
        }
        if self.seeds.is_empty() {
            return err("at least one seed is required".into());
        }
        if self.depths.is_empty() || self.depths.contains(&0) {
            return err("depths must be a nonempty list of positive integers".into());
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return err(format!("train fraction must be in (0, 1), got {}", self.train_fraction));
        }
        if !(self.fit_fraction > 0.0 && self.fit_fraction < 1.0) {
            return err(format!("fit fraction must be in (0, 1), got {}", self.fit_fraction));
        }
        if !(self.time_limit > 0.0) {
            return err(format!("time limit must be positive, got {}", self.time_limit));
        }
        if self.greedy_start_depth == 0 {
            return err("greedy start depth must be positive".into());
        }
        if self.jobs == 0 {
            return err("jobs must be positive".into());
        }
        if self.subsample == Some(0) {
            return err("subsample size must be positive".into());
        }
        match self.mode {
            ModeName::Absolute => {
                if self.dominant.is_some() || self.marginalized.is_some() {
                    return err("dominant/marginalized groups only apply to one-sided mode".into());
                }
                if let Some(m) = self.methods.iter().find(|m| m.criterion().is_some()) {
                    return err(format!("method {m} needs one-sided mode"));
                }
            }
            ModeName::OneSided => {
                if self.kind == FairnessKind::None {
                    return err("one-sided mode needs a fairness kind".into());
                }
                if self.dominant.is_none() {
                    return err("one-sided mode needs a dominant group".into());
                }
                if !self.collapse_groups && self.marginalized.is_none() {
                    return err("one-sided mode without collapsing needs a marginalized group".into());
                }
                if self.collapse_groups && self.marginalized.is_some() {
                    return err("the marginalized group is implied when groups are collapsed".into());
                }
            }
        }
        if self.kind != FairnessKind::StatisticalParity {
            if let Some(m) = self.methods.iter().find(|m| m.criterion().is_some()) {
                return err(format!("method {m} supports only statistical parity, not {}", self.kind));
            }
        }
        Ok(())
    }

    /// Fairness spec at bound `delta`, with group names as they appear after
    /// optional collapsing.
    pub fn spec(&self, delta: f64) -> Result<FairnessSpec> {
        if self.kind == FairnessKind::None {
            return Ok(FairnessSpec::none());
        }
        let mode = match self.mode {
            ModeName::Absolute => Mode::Absolute,
            ModeName::OneSided => {
                let dominant = self.dominant.clone().expect("validated");
                let marginalized = if self.collapse_groups {
                    format!("not {dominant}")
                } else {
                    self.marginalized.clone().expect("validated")
                };
                Mode::OneSided { dominant, marginalized }
            }
        };
        FairnessSpec::new(self.kind, delta, mode)
    }
}
