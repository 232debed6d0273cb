use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::tree::{DecisionTree, NodeKind, TreeTopology};

use super::model::{MipModel, VarKind};

/// Values further than this from 0 and 1 are rejected on import.
pub const INTEGRALITY_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct ImportedSolution {
    pub tree: DecisionTree,
    /// Objective stated in the file header, if any.
    pub objective: Option<f64>,
}

/// Renders values as `name value` lines with an objective header, the layout
/// most solvers use for `.sol` files.
pub fn write_solution(model: &MipModel, values: &[f64]) -> String {
    let mut out = format!("# Objective value = {}\n", model.objective_value(values));
    for (v, x) in model.variables.iter().zip(values) {
        out.push_str(&format!("{} {}\n", v.name, x));
    }
    out
}

fn parse_objective(line: &str) -> Option<f64> {
    let lower = line.to_ascii_lowercase();
    let at = lower.find("objective")?;
    let rest = &line[at + "objective".len()..];
    let rest = rest.trim_start_matches(|c: char| c.is_alphabetic() || c.is_whitespace() || c == '=' || c == ':');
    rest.split_whitespace().next()?.parse().ok()
}

/// Reads a solution file of `name value` pairs (whitespace or `=` separated,
/// `#` comments) into a tree on `topology`. Variables that are not `b`, `p` or
/// `w` are ignored, and omitted ones count as 0.
pub fn import_solution(text: &str, topology: TreeTopology) -> Result<ImportedSolution> {
    let mut objective = None;
    let mut branch: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut predict: BTreeMap<usize, bool> = BTreeMap::new();
    let mut class: BTreeMap<usize, Vec<u8>> = BTreeMap::new();
    for (k, raw) in text.lines().enumerate() {
        let ctx = || format!("solution line {}", k + 1);
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if objective.is_none() {
                objective = parse_objective(comment);
            }
            continue;
        }
        let parts: Vec<&str> = line.split(|c: char| c.is_whitespace() || c == '=').filter(|s| !s.is_empty()).collect();
        let [name, value] = parts.as_slice() else {
            return Err(Error::parse(ctx(), format!("expected `name value`, found `{line}`")));
        };
        let Some(kind) = VarKind::parse(name) else {
            continue;
        };
        if !matches!(kind, VarKind::Branch { .. } | VarKind::Predict { .. } | VarKind::Class { .. }) {
            continue;
        }
        let x: f64 =
            value.parse().map_err(|_| Error::parse(ctx(), format!("`{name}` has non-numeric value `{value}`")))?;
        let on = if x.abs() <= INTEGRALITY_TOLERANCE {
            false
        } else if (x - 1.0).abs() <= INTEGRALITY_TOLERANCE {
            true
        } else {
            return Err(Error::parse(ctx(), format!("`{name}` = {x} is not 0/1 within {INTEGRALITY_TOLERANCE}")));
        };
        let node = match kind {
            VarKind::Branch { node, .. } | VarKind::Predict { node } | VarKind::Class { node, .. } => node,
            _ => unreachable!(),
        };
        if !topology.contains(node) || (matches!(kind, VarKind::Branch { .. }) && topology.is_terminal(node)) {
            return Err(Error::parse(
                ctx(),
                format!("`{name}` refers to a node outside the depth-{} tree", topology.depth()),
            ));
        }
        if !on {
            continue;
        }
        match kind {
            VarKind::Branch { node, feature } => branch.entry(node).or_default().push(feature),
            VarKind::Predict { node } => {
                predict.insert(node, true);
            }
            VarKind::Class { node, class: c } => class.entry(node).or_default().push(c),
            _ => unreachable!(),
        }
    }

    let inconsistent =
        |name: String, why: &str| Error::parse("solution", format!("inconsistent assignment at `{name}`: {why}"));
    let mut tree = DecisionTree::empty(topology);
    for n in topology.nodes() {
        let bs = branch.get(&n).map(Vec::as_slice).unwrap_or(&[]);
        let ws = class.get(&n).map(Vec::as_slice).unwrap_or(&[]);
        let p = predict.contains_key(&n);
        if bs.len() > 1 {
            return Err(inconsistent(format!("b_{n}_{}", bs[1]), "node branches on two features"));
        }
        if p && !bs.is_empty() {
            return Err(inconsistent(format!("p_{n}"), "node both branches and predicts"));
        }
        if p && ws.len() != 1 {
            return Err(inconsistent(format!("p_{n}"), "prediction node needs exactly one class"));
        }
        if !p && !ws.is_empty() {
            return Err(inconsistent(format!("w_{n}_{}", ws[0]), "class assigned to a node that does not predict"));
        }
        if let Some(&f) = bs.first() {
            tree.set(n, NodeKind::Branch { feature: f })?;
        } else if p {
            tree.set(n, NodeKind::Predict { class: ws[0] })?;
        }
    }
    if let Some(v) = tree.validate().first() {
        let var = match tree.kind(v.node) {
            NodeKind::Branch { feature } => format!("b_{}_{feature}", v.node),
            _ => format!("p_{}", v.node),
        };
        return Err(inconsistent(var, &v.message));
    }
    Ok(ImportedSolution { tree, objective })
}

#[derive(Debug, Serialize)]
struct NameRecord<'a> {
    name: &'a str,
    kind: &'static str,
    node: Option<usize>,
    feature: Option<usize>,
    class: Option<u8>,
    datapoint: Option<usize>,
}

/// CSV map from variable names to what they index.
pub fn names_csv(model: &MipModel) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for v in &model.variables {
        let mut r =
            NameRecord { name: &v.name, kind: "other", node: None, feature: None, class: None, datapoint: None };
        match v.kind {
            Some(VarKind::Branch { node, feature }) => {
                r.kind = "branch";
                r.node = Some(node);
                r.feature = Some(feature);
            }
            Some(VarKind::Predict { node }) => {
                r.kind = "predict";
                r.node = Some(node);
            }
            Some(VarKind::Class { node, class }) => {
                r.kind = "class";
                r.node = Some(node);
                r.class = Some(class);
            }
            Some(VarKind::Source { point }) => {
                r.kind = "source_arc";
                r.node = Some(1);
                r.datapoint = Some(point);
            }
            Some(VarKind::Arc { point, node }) => {
                r.kind = "tree_arc";
                r.node = Some(node);
                r.datapoint = Some(point);
            }
            Some(VarKind::Sink { point, node, class }) => {
                r.kind = "sink_arc";
                r.node = Some(node);
                r.class = Some(class);
                r.datapoint = Some(point);
            }
            None => {}
        }
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::parse("names", e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_tree_from_hand_written_file() {
        let topo = TreeTopology::new(2).unwrap();
        let text = "# Objective value = 7\np_1 1\nw_1_1 1\nw_1_0 0\nb_1_0 0\nzs_0 1\n";
        let s = import_solution(text, topo).unwrap();
        assert_eq!(s.tree, DecisionTree::constant(topo, 1));
        assert_eq!(s.objective, Some(7.0));
    }

    #[test]
    fn rejects_fractional_values() {
        let topo = TreeTopology::new(1).unwrap();
        let err = import_solution("p_1 0.5\n", topo).unwrap_err().to_string();
        assert!(err.contains("p_1"), "{err}");
        assert!(import_solution("p_1 0.9999999\nw_1_0 1e-7\nw_1_1 1\n", topo).is_ok());
    }

    #[test]
    fn rejects_inconsistent_values() {
        let topo = TreeTopology::new(1).unwrap();
        let err = import_solution("p_1 1\nb_1_0 1\nw_1_0 1\n", topo).unwrap_err().to_string();
        assert!(err.contains("p_1"), "{err}");
        let err = import_solution("b_1_0 1\np_2 1\nw_2_0 1\n", topo).unwrap_err().to_string();
        assert!(err.contains("p_3") || err.contains("b_1"), "{err}");
    }
}
