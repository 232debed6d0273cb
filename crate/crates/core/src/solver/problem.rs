//! Bitset view of a dataset plus fairness rows in integer form.
//!
//! Datapoints are grouped into *types*: identical (label, group, stratum)
//! triples. Everything the solver needs about a set of datapoints (correct
//! counts per label, fairness contributions) is a linear function of its
//! per-type counts.
//!
//! A constraint instance comparing cells L and R is scaled by `|L|·|R|` so that
//! its left-hand side becomes the integer `|R|·pos(L) - |L|·pos(R)`.

use std::collections::BTreeMap;

use crate::dataset::Dataset;
use crate::error::Result;
use crate::fairness::{self, Compiled, FairnessSpec, Sense, DELTA_TOLERANCE};

pub(crate) type Bits = Vec<u64>;

#[derive(Debug, Clone)]
pub(crate) struct FairRow {
    /// Scaled contribution of one datapoint of each type when predicted 1.
    pub coef: Vec<i64>,
    /// Scaled bound including the comparison tolerance.
    pub limit: f64,
    pub two_sided: bool,
    /// `|L|·|R|`, converts scaled values back to rate differences.
    pub scale: f64,
}

impl FairRow {
    pub fn satisfied(&self, sum: i64) -> bool {
        let s = sum as f64;
        s <= self.limit && (!self.two_sided || -s <= self.limit)
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Problem {
    pub words: usize,
    pub n_features: usize,
    pub feature_masks: Vec<Bits>,
    pub type_masks: Vec<Bits>,
    pub type_label: Vec<u8>,
    pub rows: Vec<FairRow>,
    pub full: Bits,
}

/// Per-set summary used by the labeling search.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct LeafStats {
    pub zeros: i64,
    pub ones: i64,
    /// Scaled fairness contribution per row when the leaf predicts 1.
    pub contrib: Vec<i64>,
}

impl Problem {
    pub fn new(data: &Dataset, spec: &FairnessSpec) -> Result<Self> {
        let compiled = fairness::compile(spec, data)?;
        Ok(Self::from_compiled(data, &compiled))
    }

    pub fn from_compiled(data: &Dataset, compiled: &Compiled) -> Self {
        let n = data.len();
        let words = n.div_ceil(64).max(1);
        let uses_strata = compiled.instances.iter().any(|inst| inst.lhs.stratum.is_some());

        let mut keys: BTreeMap<(u8, usize, usize), usize> = BTreeMap::new();
        let key_of = |i: usize| {
            let stratum = if uses_strata { data.legitimate().map_or(0, |l| l[i]) } else { 0 };
            (data.label(i), data.group(i), stratum)
        };
        for i in 0..n {
            keys.entry(key_of(i)).or_insert(0);
        }
        for (idx, v) in keys.values_mut().enumerate() {
            *v = idx;
        }
        let n_types = keys.len();
        let mut type_masks = vec![vec![0u64; words]; n_types];
        let mut feature_masks = vec![vec![0u64; words]; data.n_features()];
        let mut full = vec![0u64; words];
        for i in 0..n {
            let (w, b) = (i / 64, 1u64 << (i % 64));
            full[w] |= b;
            type_masks[keys[&key_of(i)]][w] |= b;
            for (f, mask) in feature_masks.iter_mut().enumerate() {
                if data.feature(i, f) == 1 {
                    mask[w] |= b;
                }
            }
        }
        let type_keys: Vec<(u8, usize, usize)> = keys.keys().copied().collect();
        let type_label = type_keys.iter().map(|k| k.0).collect();

        let delta = compiled.spec.delta;
        let rows = compiled
            .instances
            .iter()
            .map(|inst| {
                let (ls, rs) = (inst.lhs_size() as i64, inst.rhs_size() as i64);
                let matches = |sel: &fairness::CellSelector, &(y, g, s): &(u8, usize, usize)| {
                    sel.group == g && sel.stratum.is_none_or(|t| t == s) && sel.label.is_none_or(|l| l == y)
                };
                let coef = type_keys
                    .iter()
                    .map(|k| {
                        if matches(&inst.lhs, k) {
                            rs
                        } else if matches(&inst.rhs, k) {
                            -ls
                        } else {
                            0
                        }
                    })
                    .collect();
                let scale = (ls * rs) as f64;
                FairRow {
                    coef,
                    limit: (delta + DELTA_TOLERANCE) * scale,
                    two_sided: inst.sense == Sense::Absolute,
                    scale,
                }
            })
            .collect();

        Problem { words, n_features: data.n_features(), feature_masks, type_masks, type_label, rows, full }
    }

    pub fn n_types(&self) -> usize {
        self.type_masks.len()
    }

    pub fn counts(&self, cell: &[u64]) -> Vec<i64> {
        self.type_masks.iter().map(|m| m.iter().zip(cell).map(|(a, b)| (a & b).count_ones() as i64).sum()).collect()
    }

    pub fn stats(&self, counts: &[i64]) -> LeafStats {
        let mut zeros = 0;
        let mut ones = 0;
        for (t, &c) in counts.iter().enumerate() {
            if self.type_label[t] == 0 {
                zeros += c;
            } else {
                ones += c;
            }
        }
        let contrib = self.rows.iter().map(|r| r.coef.iter().zip(counts).map(|(a, c)| a * c).sum()).collect();
        LeafStats { zeros, ones, contrib }
    }

    /// Splits `cell` on feature `f` into (value 0, value 1).
    pub fn split(&self, cell: &[u64], f: usize) -> (Bits, Bits) {
        let mask = &self.feature_masks[f];
        let left = cell.iter().zip(mask).map(|(c, m)| c & !m).collect();
        let right = cell.iter().zip(mask).map(|(c, m)| c & m).collect();
        (left, right)
    }

    pub fn cell_from_indices(&self, indices: &[usize]) -> Bits {
        let mut cell = vec![0u64; self.words];
        for &i in indices {
            cell[i / 64] |= 1 << (i % 64);
        }
        cell
    }
}

pub(crate) fn is_empty(cell: &[u64]) -> bool {
    cell.iter().all(|&w| w == 0)
}
