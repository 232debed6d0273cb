//! Config-driven binarization of delimited text.
//!
//! Categorical columns expand to one indicator per observed level (`col=level`,
//! levels sorted), numeric columns to one indicator per threshold (`col<=t`).
//! Sorting levels keeps the encoding independent of row order.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Read;
use std::path::Path;

use serde::Deserialize;

use super::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericColumn {
    pub name: String,
    /// Strictly increasing; each threshold `t` yields the feature `name<=t`.
    #[serde(default)]
    pub thresholds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinarizationConfig {
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    pub label_column: String,
    /// Raw value (after trimming) that maps to class 1; anything else is class 0.
    pub positive_label_value: String,
    pub protected_column: String,
    /// If non-empty the protected column is numeric and bucketed at these thresholds.
    #[serde(default)]
    pub protected_thresholds: Vec<f64>,
    #[serde(default)]
    pub include_protected_in_features: bool,
    #[serde(default)]
    pub legitimate_column: Option<String>,
    /// If non-empty the legitimate column is numeric and bucketed at these thresholds.
    #[serde(default)]
    pub legitimate_thresholds: Vec<f64>,
    #[serde(default)]
    pub categorical_columns: Vec<String>,
    #[serde(default)]
    pub numeric_columns: Vec<NumericColumn>,
    /// Per-column renaming of raw values, applied before any other processing,
    /// e.g. `value_map.race = { Asian = "Other" }`.
    #[serde(default)]
    pub value_map: BTreeMap<String, BTreeMap<String, String>>,
    /// Raw values treated as missing. Rows with a missing value in a used column are rejected.
    #[serde(default = "default_missing")]
    pub missing_values: Vec<String>,
}

fn default_delimiter() -> char {
    ','
}

fn default_missing() -> Vec<String> {
    vec![String::new(), "?".into()]
}

impl BinarizationConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: BinarizationConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("binarization config: {e}")))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    fn check(&self) -> Result<()> {
        let increasing = |name: &str, ts: &[f64]| {
            if ts.windows(2).all(|w| w[0] < w[1]) && ts.iter().all(|t| t.is_finite()) {
                Ok(())
            } else {
                Err(Error::Config(format!("thresholds for `{name}` must be finite and strictly increasing")))
            }
        };
        for col in &self.numeric_columns {
            increasing(&col.name, &col.thresholds)?;
        }
        increasing(&self.protected_column, &self.protected_thresholds)?;
        if let Some(l) = &self.legitimate_column {
            increasing(l, &self.legitimate_thresholds)?;
        }
        if !self.delimiter.is_ascii() {
            return Err(Error::Config("delimiter must be an ASCII character".into()));
        }
        Ok(())
    }
}

pub fn load_csv(path: impl AsRef<Path>, config: &BinarizationConfig) -> Result<Dataset> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    load_reader(file, config)
}

/// Same as [`load_csv`] for any reader.
pub fn load_reader(reader: impl Read, config: &BinarizationConfig) -> Result<Dataset> {
    config.check()?;
    let mut rdr = csv::ReaderBuilder::new().delimiter(config.delimiter as u8).trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let column = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Config(format!("column `{name}` not found in header")))
    };

    let label_col = column(&config.label_column)?;
    let protected_col = column(&config.protected_column)?;
    let legit_col = config.legitimate_column.as_deref().map(column).transpose()?;
    let cat_cols = config.categorical_columns.iter().map(|c| column(c)).collect::<Result<Vec<_>>>()?;
    let num_cols = config.numeric_columns.iter().map(|c| column(&c.name)).collect::<Result<Vec<_>>>()?;

    let mut used: BTreeSet<usize> = BTreeSet::new();
    used.extend([label_col, protected_col]);
    used.extend(legit_col);
    used.extend(&cat_cols);
    used.extend(&num_cols);

    let mut records: Vec<Vec<String>> = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = r + 1;
        let mut values = Vec::with_capacity(header.len());
        for (c, name) in header.iter().enumerate() {
            let raw = rec.get(c).unwrap_or("");
            if used.contains(&c) && config.missing_values.iter().any(|m| m == raw) {
                return Err(Error::Data { row, column: name.clone(), message: format!("missing value `{raw}`") });
            }
            let mapped = config.value_map.get(name).and_then(|m| m.get(raw)).map_or(raw, String::as_str);
            values.push(mapped.to_string());
        }
        records.push(values);
    }

    let numeric = |row: usize, col: usize| -> Result<f64> {
        let raw = &records[row][col];
        raw.parse::<f64>().map_err(|_| Error::Data {
            row: row + 1,
            column: header[col].clone(),
            message: format!("`{raw}` is not a number"),
        })
    };

    let n = records.len();
    let mut feature_names = Vec::new();
    let mut columns: Vec<Vec<u8>> = Vec::new();

    let push_categorical = |col: usize, columns: &mut Vec<Vec<u8>>, names: &mut Vec<String>| {
        let levels: BTreeSet<&str> = records.iter().map(|r| r[col].as_str()).collect();
        for level in levels {
            names.push(format!("{}={}", header[col], level));
            columns.push(records.iter().map(|r| u8::from(r[col] == level)).collect());
        }
    };
    for &col in &cat_cols {
        push_categorical(col, &mut columns, &mut feature_names);
    }
    for (spec, &col) in config.numeric_columns.iter().zip(&num_cols) {
        let values = (0..n).map(|r| numeric(r, col)).collect::<Result<Vec<_>>>()?;
        for &t in &spec.thresholds {
            feature_names.push(format!("{}<={}", spec.name, fmt_num(t)));
            columns.push(values.iter().map(|&v| u8::from(v <= t)).collect());
        }
    }
    if config.include_protected_in_features {
        if config.protected_thresholds.is_empty() {
            push_categorical(protected_col, &mut columns, &mut feature_names);
        } else {
            let values = (0..n).map(|r| numeric(r, protected_col)).collect::<Result<Vec<_>>>()?;
            for &t in &config.protected_thresholds {
                feature_names.push(format!("{}<={}", config.protected_column, fmt_num(t)));
                columns.push(values.iter().map(|&v| u8::from(v <= t)).collect());
            }
        }
    }

    let (protected, group_names) = levels_of(&records, protected_col, &config.protected_thresholds, &numeric)?;
    let legitimate = legit_col.map(|c| levels_of(&records, c, &config.legitimate_thresholds, &numeric)).transpose()?;

    let rows: Vec<Vec<u8>> = (0..n).map(|r| columns.iter().map(|c| c[r]).collect()).collect();
    let labels = records.iter().map(|r| u8::from(r[label_col] == config.positive_label_value)).collect();

    let mut data = Dataset::new(rows, labels, protected)
        .map_err(|e| match e {
            Error::Dataset(msg) => Error::Dataset(format!("{msg} (protected column `{}`)", config.protected_column)),
            other => other,
        })?
        .with_group_names(group_names)?;
    // Dataset::new sizes the feature list from the first row; an empty table has none.
    if n > 0 {
        data = data.with_feature_names(feature_names)?;
    }
    if let Some((ids, names)) = legitimate {
        data = data.with_legitimate(ids)?.with_legitimate_names(names)?;
    }
    Ok(data)
}

/// Ids and names for a grouping column: sorted categorical levels, or threshold buckets.
fn levels_of(
    records: &[Vec<String>],
    col: usize,
    thresholds: &[f64],
    numeric: &dyn Fn(usize, usize) -> Result<f64>,
) -> Result<(Vec<usize>, Vec<String>)> {
    if thresholds.is_empty() {
        let names: Vec<String> = records.iter().map(|r| r[col].clone()).collect::<BTreeSet<_>>().into_iter().collect();
        let ids = records.iter().map(|r| names.binary_search(&r[col]).expect("level collected above")).collect();
        Ok((ids, names))
    } else {
        let names = bucket_names(thresholds);
        let ids = (0..records.len())
            .map(|r| numeric(r, col).map(|v| thresholds.iter().take_while(|&&t| v > t).count()))
            .collect::<Result<Vec<_>>>()?;
        Ok((ids, names))
    }
}

fn bucket_names(thresholds: &[f64]) -> Vec<String> {
    let mut names = Vec::with_capacity(thresholds.len() + 1);
    names.push(format!("<={}", fmt_num(thresholds[0])));
    for w in thresholds.windows(2) {
        names.push(format!("({},{}]", fmt_num(w[0]), fmt_num(w[1])));
    }
    names.push(format!(">{}", fmt_num(thresholds[thresholds.len() - 1])));
    names
}

fn fmt_num(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}
