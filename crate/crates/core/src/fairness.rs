//! Group-fairness notions, their compilation into countable constraint instances,
//! and disparity evaluation of arbitrary predictions.
//!
//! Every notion reduces to comparing positive-prediction rates between two cells
//! of the data. A cell is a protected group, optionally restricted to one stratum
//! of the legitimate column and/or to one true label:
//!
//! | kind                            | cell restriction        |
//! |---------------------------------|-------------------------|
//! | statistical parity              | none                    |
//! | conditional statistical parity  | stratum `l`, each `l`   |
//! | predictive equality             | label 0 (false positives) |
//! | equal opportunity               | label 1 (true positives)  |
//! | equalized odds                  | label 0 and label 1     |

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// Slack used when comparing a rate difference against its bound. Rate differences
/// of distinct rationals with denominators below ~3e4 differ by more than this.
pub const DELTA_TOLERANCE: f64 = 1e-9;

/// `value <= delta`, up to [`DELTA_TOLERANCE`].
pub fn within_bound(value: f64, delta: f64) -> bool {
    value <= delta + DELTA_TOLERANCE
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FairnessKind {
    None,
    StatisticalParity,
    ConditionalStatisticalParity,
    PredictiveEquality,
    EqualOpportunity,
    EqualizedOdds,
}

impl FairnessKind {
    pub const ALL: [FairnessKind; 6] = [
        FairnessKind::None,
        FairnessKind::StatisticalParity,
        FairnessKind::ConditionalStatisticalParity,
        FairnessKind::PredictiveEquality,
        FairnessKind::EqualOpportunity,
        FairnessKind::EqualizedOdds,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            FairnessKind::None => "none",
            FairnessKind::StatisticalParity => "statistical_parity",
            FairnessKind::ConditionalStatisticalParity => "conditional_statistical_parity",
            FairnessKind::PredictiveEquality => "predictive_equality",
            FairnessKind::EqualOpportunity => "equal_opportunity",
            FairnessKind::EqualizedOdds => "equalized_odds",
        }
    }

    fn label_filters(&self) -> &'static [Option<u8>] {
        match self {
            FairnessKind::None => &[],
            FairnessKind::StatisticalParity | FairnessKind::ConditionalStatisticalParity => &[None],
            FairnessKind::PredictiveEquality => &[Some(0)],
            FairnessKind::EqualOpportunity => &[Some(1)],
            FairnessKind::EqualizedOdds => &[Some(0), Some(1)],
        }
    }
}

impl fmt::Display for FairnessKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FairnessKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "none" => FairnessKind::None,
            "sp" | "statistical_parity" => FairnessKind::StatisticalParity,
            "csp" | "conditional_statistical_parity" => FairnessKind::ConditionalStatisticalParity,
            "pe" | "predictive_equality" => FairnessKind::PredictiveEquality,
            "eo" | "equal_opportunity" => FairnessKind::EqualOpportunity,
            "eodds" | "equalized_odds" => FairnessKind::EqualizedOdds,
            other => return Err(Error::Config(format!("unknown fairness kind `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// `|rate(p) - rate(p')| <= delta` for every pair of groups.
    Absolute,
    /// `rate(dominant) - rate(marginalized) <= delta`; the marginalized group may fare better.
    OneSided { dominant: String, marginalized: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessSpec {
    pub kind: FairnessKind,
    pub delta: f64,
    pub mode: Mode,
}

impl FairnessSpec {
    pub fn new(kind: FairnessKind, delta: f64, mode: Mode) -> Result<Self> {
        if !(0.0..=1.0).contains(&delta) {
            return Err(Error::Config(format!("fairness bound must lie in [0, 1], got {delta}")));
        }
        if let Mode::OneSided { dominant, marginalized } = &mode {
            if dominant == marginalized {
                return Err(Error::Config("one-sided mode needs two distinct groups".into()));
            }
        }
        Ok(Self { kind, delta, mode })
    }

    pub fn none() -> Self {
        Self { kind: FairnessKind::None, delta: 1.0, mode: Mode::Absolute }
    }

    pub fn absolute(kind: FairnessKind, delta: f64) -> Result<Self> {
        Self::new(kind, delta, Mode::Absolute)
    }

    pub fn one_sided(kind: FairnessKind, delta: f64, dominant: &str, marginalized: &str) -> Result<Self> {
        Self::new(kind, delta, Mode::OneSided { dominant: dominant.into(), marginalized: marginalized.into() })
    }

    pub fn with_delta(&self, delta: f64) -> Result<Self> {
        Self::new(self.kind, delta, self.mode.clone())
    }

    pub fn is_one_sided(&self) -> bool {
        matches!(self.mode, Mode::OneSided { .. })
    }
}

/// A group, optionally restricted to one stratum and/or one true label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct CellSelector {
    pub group: usize,
    pub stratum: Option<usize>,
    pub label: Option<u8>,
}

impl CellSelector {
    pub fn matches(&self, data: &Dataset, i: usize) -> bool {
        data.group(i) == self.group
            && self.stratum.is_none_or(|s| data.legitimate().is_some_and(|l| l[i] == s))
            && self.label.is_none_or(|y| data.label(i) == y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    Absolute,
    OneSided,
}

/// One rate comparison between two cells. The compared quantity is
/// `#{lhs members predicted 1} / lhs_size - #{rhs members predicted 1} / rhs_size`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstraintInstance {
    pub lhs: CellSelector,
    pub rhs: CellSelector,
    pub lhs_members: Vec<usize>,
    pub rhs_members: Vec<usize>,
    pub sense: Sense,
}

impl ConstraintInstance {
    pub fn lhs_size(&self) -> usize {
        self.lhs_members.len()
    }

    pub fn rhs_size(&self) -> usize {
        self.rhs_members.len()
    }

    /// Signed difference of positive rates, lhs minus rhs.
    pub fn difference(&self, predictions: &[u8]) -> f64 {
        self.lhs_rate(predictions) - self.rhs_rate(predictions)
    }

    pub fn lhs_rate(&self, predictions: &[u8]) -> f64 {
        rate(&self.lhs_members, predictions)
    }

    pub fn rhs_rate(&self, predictions: &[u8]) -> f64 {
        rate(&self.rhs_members, predictions)
    }

    /// The quantity bounded by delta: absolute or signed difference.
    pub fn measure(&self, predictions: &[u8]) -> f64 {
        let d = self.difference(predictions);
        match self.sense {
            Sense::Absolute => d.abs(),
            Sense::OneSided => d,
        }
    }
}

fn rate(members: &[usize], predictions: &[u8]) -> f64 {
    members.iter().filter(|&&i| predictions[i] == 1).count() as f64 / members.len() as f64
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum FairnessWarning {
    /// A comparison was dropped because one of its cells has no rows.
    EmptyCell { cell: CellSelector },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Compiled {
    pub spec: FairnessSpec,
    pub instances: Vec<ConstraintInstance>,
    pub warnings: Vec<FairnessWarning>,
}

/// Turns `spec` into constraint instances over `data`.
///
/// Absolute mode yields one instance per unordered group pair (per stratum for
/// conditional parity, per label for equalized odds); one-sided mode yields the
/// single (dominant, marginalized) comparison per stratum/label. Instances whose
/// cells are empty are skipped and reported as warnings.
pub fn compile(spec: &FairnessSpec, data: &Dataset) -> Result<Compiled> {
    if spec.kind == FairnessKind::ConditionalStatisticalParity && data.legitimate().is_none() {
        return Err(Error::Config("conditional statistical parity needs a legitimate column".into()));
    }
    let pairs: Vec<(usize, usize)> = match &spec.mode {
        Mode::Absolute => {
            let g = data.n_groups();
            (0..g).flat_map(|a| (a + 1..g).map(move |b| (a, b))).collect()
        }
        Mode::OneSided { dominant, marginalized } => {
            let find = |name: &str| {
                data.group_index(name)
                    .ok_or_else(|| Error::Config(format!("group `{name}` is not a protected group of the data")))
            };
            vec![(find(dominant)?, find(marginalized)?)]
        }
    };
    let sense = if spec.is_one_sided() { Sense::OneSided } else { Sense::Absolute };
    let strata: Vec<Option<usize>> = if spec.kind == FairnessKind::ConditionalStatisticalParity {
        (0..data.n_strata()).map(Some).collect()
    } else {
        vec![None]
    };

    let mut members: std::collections::HashMap<CellSelector, Vec<usize>> = std::collections::HashMap::new();
    let mut cell = |sel: CellSelector| -> Vec<usize> {
        members.entry(sel).or_insert_with(|| (0..data.len()).filter(|&i| sel.matches(data, i)).collect()).clone()
    };

    let mut instances = Vec::new();
    let mut warnings = Vec::new();
    for &label in spec.kind.label_filters() {
        for &stratum in &strata {
            for &(a, b) in &pairs {
                let lhs = CellSelector { group: a, stratum, label };
                let rhs = CellSelector { group: b, stratum, label };
                let (lm, rm) = (cell(lhs), cell(rhs));
                let mut empty = false;
                for (sel, m) in [(lhs, &lm), (rhs, &rm)] {
                    if m.is_empty() {
                        empty = true;
                        let w = FairnessWarning::EmptyCell { cell: sel };
                        if !warnings.contains(&w) {
                            warnings.push(w);
                        }
                    }
                }
                if !empty {
                    instances.push(ConstraintInstance { lhs, rhs, lhs_members: lm, rhs_members: rm, sense });
                }
            }
        }
    }
    Ok(Compiled { spec: spec.clone(), instances, warnings })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstanceRow {
    pub lhs: CellSelector,
    pub rhs: CellSelector,
    pub lhs_size: usize,
    pub rhs_size: usize,
    pub lhs_rate: f64,
    pub rhs_rate: f64,
    pub difference: f64,
    pub measure: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Disparity {
    /// Largest measure over all instances; 0 when there are none. One-sided
    /// measures are signed, so this can be negative in one-sided mode.
    pub value: f64,
    /// Index of the instance attaining `value`.
    pub worst: Option<usize>,
    pub instances: Vec<InstanceRow>,
}

impl Compiled {
    pub fn disparity(&self, predictions: &[u8]) -> Disparity {
        let rows: Vec<InstanceRow> = self
            .instances
            .iter()
            .map(|inst| {
                let (l, r) = (inst.lhs_rate(predictions), inst.rhs_rate(predictions));
                InstanceRow {
                    lhs: inst.lhs,
                    rhs: inst.rhs,
                    lhs_size: inst.lhs_size(),
                    rhs_size: inst.rhs_size(),
                    lhs_rate: l,
                    rhs_rate: r,
                    difference: l - r,
                    measure: inst.measure(predictions),
                }
            })
            .collect();
        let mut worst = None;
        let mut value = 0.0;
        for (k, row) in rows.iter().enumerate() {
            if worst.is_none() || row.measure > value {
                worst = Some(k);
                value = row.measure;
            }
        }
        Disparity { value, worst, instances: rows }
    }
}

pub fn disparity(spec: &FairnessSpec, data: &Dataset, predictions: &[u8]) -> Result<Disparity> {
    check_len(data, predictions)?;
    Ok(compile(spec, data)?.disparity(predictions))
}

fn check_len(data: &Dataset, predictions: &[u8]) -> Result<()> {
    if predictions.len() != data.len() {
        return Err(Error::Argument(format!("{} predictions for {} rows", predictions.len(), data.len())));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FairnessReport {
    pub kind: FairnessKind,
    pub mode: Mode,
    pub delta: f64,
    pub satisfied: bool,
    pub value: f64,
    pub worst_instance: Option<usize>,
    pub instances: Vec<InstanceRow>,
    pub warnings: Vec<FairnessWarning>,
}

pub fn check(spec: &FairnessSpec, data: &Dataset, predictions: &[u8]) -> Result<FairnessReport> {
    check_len(data, predictions)?;
    let compiled = compile(spec, data)?;
    let d = compiled.disparity(predictions);
    Ok(FairnessReport {
        kind: spec.kind,
        mode: spec.mode.clone(),
        delta: spec.delta,
        satisfied: within_bound(d.value, spec.delta),
        value: d.value,
        worst_instance: d.worst,
        instances: d.instances,
        warnings: compiled.warnings,
    })
}

impl FairnessReport {
    /// Tab-separated table of every instance, preceded by a summary line.
    pub fn to_table(&self, data: &Dataset) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# metric={} mode={} delta={} value={:.6} satisfied={}",
            self.kind,
            match &self.mode {
                Mode::Absolute => "absolute".to_string(),
                Mode::OneSided { dominant, marginalized } => format!("one_sided({dominant}>{marginalized})"),
            },
            self.delta,
            self.value,
            self.satisfied
        );
        out.push_str("lhs_group\trhs_group\tstratum\tlabel\tlhs_size\trhs_size\tlhs_rate\trhs_rate\tdifference\n");
        let stratum = |s: Option<usize>| s.map_or("*".to_string(), |s| data.legitimate_names()[s].clone());
        for row in &self.instances {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}",
                data.group_names()[row.lhs.group],
                data.group_names()[row.rhs.group],
                stratum(row.lhs.stratum),
                row.lhs.label.map_or("*".to_string(), |y| y.to_string()),
                row.lhs_size,
                row.rhs_size,
                row.lhs_rate,
                row.rhs_rate,
                row.difference
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ab() -> Dataset {
        // A = rows 0,1 ; B = rows 2,3
        Dataset::new(vec![vec![0]; 4], vec![1, 0, 1, 0], vec![0, 0, 1, 1])
            .unwrap()
            .with_group_names(vec!["A".into(), "B".into()])
            .unwrap()
    }

    #[test]
    fn pair_counts() {
        let data = ab();
        let sp = FairnessSpec::absolute(FairnessKind::StatisticalParity, 0.1).unwrap();
        assert_eq!(compile(&sp, &data).unwrap().instances.len(), 1);

        let three = Dataset::new(vec![vec![0]; 6], vec![0, 1, 0, 1, 0, 1], vec![0, 0, 1, 1, 2, 2]).unwrap();
        let eodds = FairnessSpec::absolute(FairnessKind::EqualizedOdds, 0.1).unwrap();
        let c = compile(&eodds, &three).unwrap();
        assert_eq!(c.instances.len(), 6);
        let pe = compile(&FairnessSpec::absolute(FairnessKind::PredictiveEquality, 0.1).unwrap(), &three).unwrap();
        let eo = compile(&FairnessSpec::absolute(FairnessKind::EqualOpportunity, 0.1).unwrap(), &three).unwrap();
        let concat: Vec<_> = pe.instances.iter().chain(&eo.instances).cloned().collect();
        assert_eq!(c.instances, concat);
        assert!(compile(&FairnessSpec::none(), &three).unwrap().instances.is_empty());
    }

    #[test]
    fn rate_difference_example() {
        let data = ab();
        let sp = FairnessSpec::absolute(FairnessKind::StatisticalParity, 0.5).unwrap();
        let preds = [1, 1, 1, 0];
        let d = disparity(&sp, &data, &preds).unwrap();
        assert_eq!(d.value, 0.5);
        assert!(check(&sp, &data, &preds).unwrap().satisfied);
        let tight = sp.with_delta(0.49).unwrap();
        assert!(!check(&tight, &data, &preds).unwrap().satisfied);
        assert!(disparity(&sp, &data, &[1, 1]).is_err());
    }

    #[test]
    fn constant_predictors_have_zero_disparity() {
        let data = ab();
        for kind in [FairnessKind::StatisticalParity, FairnessKind::EqualizedOdds, FairnessKind::PredictiveEquality] {
            let spec = FairnessSpec::absolute(kind, 0.0).unwrap();
            for c in [0, 1] {
                assert_eq!(disparity(&spec, &data, &[c; 4]).unwrap().value, 0.0);
            }
        }
    }

    #[test]
    fn one_sided_allows_marginalized_advantage() {
        // dominant A: 2 of 10 positive; marginalized B: 5 of 10 positive
        let groups = [vec![0; 10], vec![1; 10]].concat();
        let data = Dataset::new(vec![vec![0]; 20], vec![0; 20], groups)
            .unwrap()
            .with_group_names(vec!["A".into(), "B".into()])
            .unwrap();
        let mut preds = vec![0u8; 20];
        preds[..2].fill(1);
        preds[10..15].fill(1);
        let spec = FairnessSpec::one_sided(FairnessKind::StatisticalParity, 0.1, "A", "B").unwrap();
        let report = check(&spec, &data, &preds).unwrap();
        assert!((report.value + 0.3).abs() < 1e-12);
        assert!(report.satisfied);
        let abs = FairnessSpec::absolute(FairnessKind::StatisticalParity, 0.1).unwrap();
        assert!(!check(&abs, &data, &preds).unwrap().satisfied);
    }

    #[test]
    fn configuration_errors() {
        let data = ab();
        let csp = FairnessSpec::absolute(FairnessKind::ConditionalStatisticalParity, 0.1).unwrap();
        assert!(matches!(compile(&csp, &data), Err(Error::Config(_))));
        let missing = FairnessSpec::one_sided(FairnessKind::StatisticalParity, 0.1, "A", "Z").unwrap();
        assert!(matches!(compile(&missing, &data), Err(Error::Config(_))));
        assert!(FairnessSpec::absolute(FairnessKind::StatisticalParity, 1.5).is_err());
        assert!(FairnessSpec::one_sided(FairnessKind::StatisticalParity, 0.1, "A", "A").is_err());
    }

    #[test]
    fn empty_cells_are_skipped_with_warning() {
        // group B has no label-1 rows
        let data = Dataset::new(vec![vec![0]; 4], vec![1, 0, 0, 0], vec![0, 0, 1, 1]).unwrap();
        let eo = FairnessSpec::absolute(FairnessKind::EqualOpportunity, 0.0).unwrap();
        let c = compile(&eo, &data).unwrap();
        assert!(c.instances.is_empty());
        assert_eq!(c.warnings.len(), 1);
        assert_eq!(c.disparity(&[1, 0, 1, 1]).value, 0.0);
    }

    #[test]
    fn parse_kinds() {
        for k in FairnessKind::ALL {
            assert_eq!(k.as_str().parse::<FairnessKind>().unwrap(), k);
        }
        assert_eq!("eodds".parse::<FairnessKind>().unwrap(), FairnessKind::EqualizedOdds);
        assert!("bogus".parse::<FairnessKind>().is_err());
    }
}
