//! Binary-feature datasets with labels, protected groups and an optional
//! legitimate (conditioning) column.

mod binarize;

use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};

pub use binarize::{load_csv, load_reader, BinarizationConfig, NumericColumn};

/// Training or evaluation data: `len()` rows of `n_features()` binary features.
///
/// Group and stratum ids index into [`Dataset::group_names`] and
/// [`Dataset::legitimate_names`]. Subsets produced by [`Dataset::split`],
/// [`Dataset::subsample`] and [`Dataset::select`] keep the full name lists even
/// when some group ends up empty; [`Dataset::warnings`] reports those.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n_features: usize,
    features: Vec<u8>,
    labels: Vec<u8>,
    protected: Vec<usize>,
    group_names: Vec<String>,
    legitimate: Option<Vec<usize>>,
    legitimate_names: Vec<String>,
    feature_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum DataWarning {
    /// A protected group has no rows in this dataset.
    EmptyGroup { group: String },
}

impl fmt::Display for DataWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataWarning::EmptyGroup { group } => {
                write!(f, "protected group `{group}` has no rows; constraints over it are skipped")
            }
        }
    }
}

impl Dataset {
    /// Builds a dataset from rows of 0/1 features, 0/1 labels and group ids.
    /// Names default to `x0, x1, ...` and `g0, g1, ...`.
    pub fn new(rows: Vec<Vec<u8>>, labels: Vec<u8>, protected: Vec<usize>) -> Result<Self> {
        let n = labels.len();
        if rows.len() != n || protected.len() != n {
            return Err(Error::Dataset(format!(
                "length mismatch: {} feature rows, {} labels, {} protected values",
                rows.len(),
                n,
                protected.len()
            )));
        }
        let n_features = rows.first().map_or(0, Vec::len);
        let mut features = Vec::with_capacity(n * n_features);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n_features {
                return Err(Error::Dataset(format!("row {i} has {} features, expected {n_features}", row.len())));
            }
            features.extend_from_slice(row);
        }
        let n_groups = protected.iter().max().map_or(0, |&g| g + 1);
        let data = Self {
            n_features,
            features,
            labels,
            protected,
            group_names: (0..n_groups).map(|g| format!("g{g}")).collect(),
            legitimate: None,
            legitimate_names: Vec::new(),
            feature_names: (0..n_features).map(|f| format!("x{f}")).collect(),
        };
        data.check_invariants()?;
        Ok(data)
    }

    pub fn with_legitimate(mut self, legitimate: Vec<usize>) -> Result<Self> {
        if legitimate.len() != self.len() {
            return Err(Error::Dataset(format!(
                "legitimate column has {} values for {} rows",
                legitimate.len(),
                self.len()
            )));
        }
        let levels = legitimate.iter().max().map_or(0, |&l| l + 1);
        self.legitimate_names = (0..levels).map(|l| format!("l{l}")).collect();
        self.legitimate = Some(legitimate);
        Ok(self)
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.n_features {
            return Err(Error::Dataset(format!("{} feature names for {} features", names.len(), self.n_features)));
        }
        self.feature_names = names;
        Ok(self)
    }

    pub fn with_group_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() < self.group_names.len() {
            return Err(Error::Dataset(format!(
                "{} group names for {} group ids",
                names.len(),
                self.group_names.len()
            )));
        }
        self.group_names = names;
        Ok(self)
    }

    pub fn with_legitimate_names(mut self, names: Vec<String>) -> Result<Self> {
        if self.legitimate.is_none() || names.len() < self.legitimate_names.len() {
            return Err(Error::Dataset("legitimate names do not match the legitimate column".into()));
        }
        self.legitimate_names = names;
        Ok(self)
    }

    fn check_invariants(&self) -> Result<()> {
        if let Some(i) = self.features.iter().position(|&v| v > 1) {
            return Err(Error::Dataset(format!(
                "feature value {} at row {}, feature {} is not binary",
                self.features[i],
                i / self.n_features.max(1),
                i % self.n_features.max(1)
            )));
        }
        if let Some(i) = self.labels.iter().position(|&y| y > 1) {
            return Err(Error::Dataset(format!("label {} at row {i} is not binary", self.labels[i])));
        }
        let present = self.group_sizes().iter().filter(|&&s| s > 0).count();
        if present < 2 {
            return Err(Error::Dataset(format!("need at least 2 protected groups with rows, found {present}")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[u8] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn feature(&self, i: usize, f: usize) -> u8 {
        self.features[i * self.n_features + f]
    }

    pub fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn group(&self, i: usize) -> usize {
        self.protected[i]
    }

    pub fn protected(&self) -> &[usize] {
        &self.protected
    }

    pub fn n_groups(&self) -> usize {
        self.group_names.len()
    }

    pub fn group_names(&self) -> &[String] {
        &self.group_names
    }

    pub fn group_index(&self, name: &str) -> Option<usize> {
        self.group_names.iter().position(|g| g == name)
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.group_names.len()];
        for &g in &self.protected {
            sizes[g] += 1;
        }
        sizes
    }

    pub fn legitimate(&self) -> Option<&[usize]> {
        self.legitimate.as_deref()
    }

    pub fn n_strata(&self) -> usize {
        self.legitimate_names.len()
    }

    pub fn legitimate_names(&self) -> &[String] {
        &self.legitimate_names
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn warnings(&self) -> Vec<DataWarning> {
        self.group_sizes()
            .iter()
            .zip(&self.group_names)
            .filter(|(&size, _)| size == 0)
            .map(|(_, g)| DataWarning::EmptyGroup { group: g.clone() })
            .collect()
    }

    /// Rows at `indices`, in that order. Group and stratum names are kept.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.n_features);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        Dataset {
            n_features: self.n_features,
            features,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            protected: indices.iter().map(|&i| self.protected[i]).collect(),
            group_names: self.group_names.clone(),
            legitimate: self.legitimate.as_ref().map(|l| indices.iter().map(|&i| l[i]).collect()),
            legitimate_names: self.legitimate_names.clone(),
            feature_names: self.feature_names.clone(),
        }
    }

    /// Seeded disjoint partition into `(train, test)`. Rows keep their original order
    /// inside each part. Empty groups in a part are reported through `warnings()`.
    pub fn split(&self, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        let (train, test) = self.split_indices(train_fraction, seed)?;
        let out = (self.select(&train), self.select(&test));
        for w in out.0.warnings().iter().chain(out.1.warnings().iter()) {
            log::warn!("after split: {w}");
        }
        Ok(out)
    }

    /// Index form of [`Dataset::split`].
    pub fn split_indices(&self, train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::Argument(format!("train fraction must be in (0, 1), got {train_fraction}")));
        }
        let n = self.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let k = ((train_fraction * n as f64).round() as usize).min(n);
        let mut train = order[..k].to_vec();
        let mut test = order[k..].to_vec();
        train.sort_unstable();
        test.sort_unstable();
        Ok((train, test))
    }

    /// Uniform sample of `n` rows without replacement, in original row order.
    pub fn subsample(&self, n: usize, seed: u64) -> Result<Dataset> {
        if n == 0 || n > self.len() {
            return Err(Error::Argument(format!("subsample size must be in 1..={}, got {n}", self.len())));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = rand::seq::index::sample(&mut rng, self.len(), n).into_vec();
        idx.sort_unstable();
        let out = self.select(&idx);
        for w in out.warnings() {
            log::warn!("after subsample: {w}");
        }
        Ok(out)
    }

    /// Merges every group other than `dominant` into one group named `not <dominant>`.
    /// The result has group 0 = dominant, group 1 = the rest.
    pub fn collapse_protected(&self, dominant: &str) -> Result<Dataset> {
        let d = self
            .group_index(dominant)
            .ok_or_else(|| Error::Config(format!("dominant group `{dominant}` is not a protected group")))?;
        let mut out = self.clone();
        out.protected = self.protected.iter().map(|&g| usize::from(g != d)).collect();
        out.group_names = vec![dominant.to_string(), format!("not {dominant}")];
        Ok(out)
    }
}
