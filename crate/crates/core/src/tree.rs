//! Perfect-binary-tree topology and decision-tree solutions.
//!
//! Nodes are numbered from 1 in breadth-first order, so the parent of `n` is
//! `n / 2` and its children are `2n` (taken when the branching feature is 0) and
//! `2n + 1` (feature is 1). Branching nodes are `1..2^d`, terminal nodes are
//! `2^d..2^(d+1)`.

use std::fmt;
use std::fmt::Write as _;
use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

pub type NodeId = usize;

/// Largest supported depth. Trees deeper than this are not interpretable anyway
/// and the node arrays would get large.
pub const MAX_DEPTH: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TreeTopology {
    depth: usize,
}

impl TreeTopology {
    pub fn new(depth: usize) -> Result<Self> {
        if depth == 0 || depth > MAX_DEPTH {
            return Err(Error::Argument(format!("tree depth must be in 1..={MAX_DEPTH}, got {depth}")));
        }
        Ok(Self { depth })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Total number of nodes, `2^(d+1) - 1`.
    pub fn num_nodes(&self) -> usize {
        (1 << (self.depth + 1)) - 1
    }

    pub fn nodes(&self) -> RangeInclusive<NodeId> {
        1..=self.num_nodes()
    }

    pub fn branch_nodes(&self) -> RangeInclusive<NodeId> {
        1..=(1 << self.depth) - 1
    }

    pub fn terminal_nodes(&self) -> RangeInclusive<NodeId> {
        (1 << self.depth)..=self.num_nodes()
    }

    pub fn contains(&self, n: NodeId) -> bool {
        n >= 1 && n <= self.num_nodes()
    }

    pub fn is_branch_node(&self, n: NodeId) -> bool {
        n >= 1 && n < (1 << self.depth)
    }

    pub fn is_terminal(&self, n: NodeId) -> bool {
        n >= (1 << self.depth) && n <= self.num_nodes()
    }

    pub fn parent(&self, n: NodeId) -> Option<NodeId> {
        (n > 1).then_some(n / 2)
    }

    pub fn left(&self, n: NodeId) -> NodeId {
        2 * n
    }

    pub fn right(&self, n: NodeId) -> NodeId {
        2 * n + 1
    }

    /// Distance from the root (the root is at level 0).
    pub fn level(&self, n: NodeId) -> usize {
        debug_assert!(n >= 1);
        (usize::BITS - 1 - n.leading_zeros()) as usize
    }

    /// Ancestors of `n`, from its parent up to the root.
    pub fn ancestors(&self, n: NodeId) -> Vec<NodeId> {
        let mut out = Vec::with_capacity(self.level(n));
        let mut m = n;
        while m > 1 {
            m /= 2;
            out.push(m);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum NodeKind {
    /// Tests a binary feature: value 0 goes left, value 1 goes right.
    Branch { feature: usize },
    /// Assigns `class` to every datapoint that reaches the node.
    Predict { class: u8 },
    /// Neither branches nor predicts; valid only below a prediction node.
    #[default]
    Pruned,
}

/// Structural constraint a tree can violate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StructuralConstraint {
    /// A branching-level node must branch, predict, or sit below a prediction node,
    /// and exactly one of these must hold.
    BranchOrPredict,
    /// A terminal node must predict or sit below a prediction node, exactly once.
    TerminalCovered,
    /// A prediction node carries exactly one class in {0, 1}.
    SingleClass,
}

impl fmt::Display for StructuralConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StructuralConstraint::BranchOrPredict => "branch-or-predict",
            StructuralConstraint::TerminalCovered => "terminal-covered",
            StructuralConstraint::SingleClass => "single-class",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub node: NodeId,
    pub constraint: StructuralConstraint,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "node {} [{}]: {}", self.node, self.constraint, self.message)
    }
}

/// A classification tree laid out on a fixed [`TreeTopology`].
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DecisionTree {
    topology: TreeTopology,
    // index 0 is unused so that node ids index directly
    nodes: Vec<NodeKind>,
}

impl DecisionTree {
    /// A tree with every node pruned. Not valid until nodes are assigned.
    pub fn empty(topology: TreeTopology) -> Self {
        Self { topology, nodes: vec![NodeKind::Pruned; topology.num_nodes() + 1] }
    }

    /// The tree whose root predicts `class` for everything.
    pub fn constant(topology: TreeTopology, class: u8) -> Self {
        let mut tree = Self::empty(topology);
        tree.nodes[1] = NodeKind::Predict { class };
        tree
    }

    pub fn topology(&self) -> TreeTopology {
        self.topology
    }

    pub fn depth(&self) -> usize {
        self.topology.depth
    }

    pub fn kind(&self, n: NodeId) -> NodeKind {
        self.nodes.get(n).copied().unwrap_or_default()
    }

    pub fn set(&mut self, n: NodeId, kind: NodeKind) -> Result<()> {
        if !self.topology.contains(n) {
            return Err(Error::Argument(format!("node {n} is outside a depth-{} tree", self.depth())));
        }
        self.nodes[n] = kind;
        Ok(())
    }

    pub fn with_branch(mut self, n: NodeId, feature: usize) -> Result<Self> {
        self.set(n, NodeKind::Branch { feature })?;
        Ok(self)
    }

    pub fn with_prediction(mut self, n: NodeId, class: u8) -> Result<Self> {
        self.set(n, NodeKind::Predict { class })?;
        Ok(self)
    }

    pub fn branch_feature(&self, n: NodeId) -> Option<usize> {
        match self.kind(n) {
            NodeKind::Branch { feature } => Some(feature),
            _ => None,
        }
    }

    pub fn is_prediction(&self, n: NodeId) -> bool {
        matches!(self.kind(n), NodeKind::Predict { .. })
    }

    pub fn predicted_class(&self, n: NodeId) -> Option<u8> {
        match self.kind(n) {
            NodeKind::Predict { class } => Some(class),
            _ => None,
        }
    }

    /// Prediction nodes in breadth-first order.
    pub fn prediction_nodes(&self) -> Vec<NodeId> {
        self.topology.nodes().filter(|&n| self.is_prediction(n)).collect()
    }

    /// Largest feature index used by a branching node, if any.
    pub fn max_feature(&self) -> Option<usize> {
        self.topology.nodes().filter_map(|n| self.branch_feature(n)).max()
    }

    /// Same structure with a different class at prediction node `n`.
    pub fn relabeled(&self, n: NodeId, class: u8) -> Result<Self> {
        if !self.is_prediction(n) {
            return Err(Error::Argument(format!("node {n} is not a prediction node")));
        }
        let mut out = self.clone();
        out.nodes[n] = NodeKind::Predict { class };
        Ok(out)
    }

    /// Lists every structural violation; an empty list means the tree is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let topo = self.topology;
        let mut out = Vec::new();
        // covered[n]: some ancestor of n is a prediction node
        let mut covered = vec![false; topo.num_nodes() + 1];
        for n in topo.nodes() {
            if let Some(p) = topo.parent(n) {
                covered[n] = covered[p] || self.is_prediction(p);
            }
            let kind = self.kind(n);
            let terminal = topo.is_terminal(n);
            let constraint =
                if terminal { StructuralConstraint::TerminalCovered } else { StructuralConstraint::BranchOrPredict };
            match kind {
                NodeKind::Branch { .. } if terminal => {
                    out.push(Violation { node: n, constraint, message: "terminal nodes cannot branch".into() })
                }
                NodeKind::Branch { .. } | NodeKind::Predict { .. } if covered[n] => out.push(Violation {
                    node: n,
                    constraint,
                    message: "node is active below a prediction node".into(),
                }),
                NodeKind::Pruned if !covered[n] => out.push(Violation {
                    node: n,
                    constraint,
                    message: "node neither branches nor predicts and no ancestor predicts".into(),
                }),
                _ => {}
            }
            if let NodeKind::Predict { class } = kind {
                if class > 1 {
                    out.push(Violation {
                        node: n,
                        constraint: StructuralConstraint::SingleClass,
                        message: format!("class {class} is not in {{0, 1}}"),
                    });
                }
            }
        }
        out
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_empty()
    }

    fn ensure_valid(&self) -> Result<()> {
        let violations = self.validate();
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidTree(violations))
        }
    }

    /// Prediction node reached by `x`.
    pub fn route(&self, x: &[u8]) -> Result<NodeId> {
        self.ensure_valid()?;
        self.route_unchecked(x)
    }

    pub fn predict(&self, x: &[u8]) -> Result<u8> {
        let n = self.route(x)?;
        Ok(self.predicted_class(n).expect("route ends at a prediction node"))
    }

    // Assumes a valid tree; still rejects bad inputs.
    fn route_unchecked(&self, x: &[u8]) -> Result<NodeId> {
        let mut n = 1;
        loop {
            match self.nodes[n] {
                NodeKind::Predict { .. } => return Ok(n),
                NodeKind::Branch { feature } => {
                    let v = *x.get(feature).ok_or_else(|| {
                        Error::Argument(format!("input has {} features, tree uses feature {feature}", x.len()))
                    })?;
                    if v > 1 {
                        return Err(Error::Argument(format!("feature {feature} has non-binary value {v}")));
                    }
                    n = 2 * n + v as usize;
                }
                NodeKind::Pruned => unreachable!("valid trees never route into pruned nodes"),
            }
        }
    }

    /// Leaf reached by every row of `data`.
    pub fn route_dataset(&self, data: &Dataset) -> Result<Vec<NodeId>> {
        self.ensure_valid()?;
        (0..data.len()).map(|i| self.route_unchecked(data.row(i))).collect()
    }

    pub fn predict_dataset(&self, data: &Dataset) -> Result<Vec<u8>> {
        Ok(self
            .route_dataset(data)?
            .into_iter()
            .map(|n| self.predicted_class(n).expect("route ends at a prediction node"))
            .collect())
    }

    /// Number of rows of `data` classified correctly.
    pub fn correct_count(&self, data: &Dataset) -> Result<usize> {
        let preds = self.predict_dataset(data)?;
        Ok(preds.iter().zip(data.labels()).filter(|(p, y)| p == y).count())
    }

    pub fn accuracy(&self, data: &Dataset) -> Result<f64> {
        if data.is_empty() {
            return Ok(0.0);
        }
        Ok(self.correct_count(data)? as f64 / data.len() as f64)
    }

    /// Renders the reachable part of the tree as a Graphviz digraph.
    pub fn to_dot(&self, feature_names: &[String]) -> Result<String> {
        if let Some(f) = self.max_feature() {
            if f >= feature_names.len() {
                return Err(Error::Argument(format!(
                    "{} feature names given but the tree branches on feature {f}",
                    feature_names.len()
                )));
            }
        }
        let mut out = String::from("digraph tree {\n  node [fontname=\"Helvetica\"];\n");
        let mut stack = vec![1];
        let mut edges = Vec::new();
        while let Some(n) = stack.pop() {
            match self.kind(n) {
                NodeKind::Branch { feature } => {
                    let _ = writeln!(out, "  n{n} [shape=box, label=\"{}\"];", escape(&feature_names[feature]));
                    edges.push((n, 2 * n, 0));
                    edges.push((n, 2 * n + 1, 1));
                    stack.push(2 * n + 1);
                    stack.push(2 * n);
                }
                NodeKind::Predict { class } => {
                    let _ = writeln!(out, "  n{n} [shape=ellipse, label=\"class {class}\"];");
                }
                NodeKind::Pruned => {}
            }
        }
        for (from, to, value) in edges {
            let _ = writeln!(out, "  n{from} -> n{to} [label=\"{value}\"];");
        }
        out.push_str("}\n");
        Ok(out)
    }

    /// JSON form, stable ordering by node id. Pruned nodes are omitted.
    pub fn to_json(&self, feature_names: Option<&[String]>) -> Result<String> {
        let nodes = self
            .topology
            .nodes()
            .filter_map(|n| match self.kind(n) {
                NodeKind::Branch { feature } => Some(SerializedNode {
                    id: n,
                    kind: SerializedKind::Branch,
                    feature: Some(feature),
                    feature_name: feature_names.and_then(|names| names.get(feature).cloned()),
                    class: None,
                }),
                NodeKind::Predict { class } => Some(SerializedNode {
                    id: n,
                    kind: SerializedKind::Predict,
                    feature: None,
                    feature_name: None,
                    class: Some(class),
                }),
                NodeKind::Pruned => None,
            })
            .collect();
        Ok(serde_json::to_string_pretty(&SerializedTree { depth: self.depth(), nodes })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let parsed: SerializedTree = serde_json::from_str(text)?;
        let mut tree = DecisionTree::empty(TreeTopology::new(parsed.depth)?);
        for node in parsed.nodes {
            let kind = match node.kind {
                SerializedKind::Branch => NodeKind::Branch {
                    feature: node
                        .feature
                        .ok_or_else(|| Error::parse("tree", format!("branch node {} has no feature", node.id)))?,
                },
                SerializedKind::Predict => NodeKind::Predict {
                    class: node
                        .class
                        .ok_or_else(|| Error::parse("tree", format!("prediction node {} has no class", node.id)))?,
                },
            };
            tree.set(node.id, kind)?;
        }
        Ok(tree)
    }
}

impl Serialize for DecisionTree {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let nodes = self
            .topology
            .nodes()
            .filter_map(|n| match self.kind(n) {
                NodeKind::Branch { feature } => Some(SerializedNode {
                    id: n,
                    kind: SerializedKind::Branch,
                    feature: Some(feature),
                    feature_name: None,
                    class: None,
                }),
                NodeKind::Predict { class } => Some(SerializedNode {
                    id: n,
                    kind: SerializedKind::Predict,
                    feature: None,
                    feature_name: None,
                    class: Some(class),
                }),
                NodeKind::Pruned => None,
            })
            .collect();
        SerializedTree { depth: self.depth(), nodes }.serialize(serializer)
    }
}

#[derive(Serialize, Deserialize)]
struct SerializedTree {
    depth: usize,
    nodes: Vec<SerializedNode>,
}

#[derive(Serialize, Deserialize)]
struct SerializedNode {
    id: NodeId,
    kind: SerializedKind,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    feature: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    feature_name: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    class: Option<u8>,
}

#[derive(Serialize, Deserialize, Clone, Copy)]
#[serde(rename_all = "lowercase")]
enum SerializedKind {
    Branch,
    Predict,
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn topo(d: usize) -> TreeTopology {
        TreeTopology::new(d).unwrap()
    }

    fn full_depth2() -> DecisionTree {
        DecisionTree::empty(topo(2))
            .with_branch(1, 0)
            .unwrap()
            .with_branch(2, 1)
            .unwrap()
            .with_branch(3, 2)
            .unwrap()
            .with_prediction(4, 0)
            .unwrap()
            .with_prediction(5, 1)
            .unwrap()
            .with_prediction(6, 1)
            .unwrap()
            .with_prediction(7, 0)
            .unwrap()
    }

    #[test]
    fn topology_index_maps() {
        let t = topo(3);
        assert_eq!(t.branch_nodes(), 1..=7);
        assert_eq!(t.terminal_nodes(), 8..=15);
        assert_eq!(t.parent(11), Some(5));
        assert_eq!(t.parent(1), None);
        assert_eq!((t.left(5), t.right(5)), (10, 11));
        assert_eq!(t.ancestors(11), vec![5, 2, 1]);
        assert_eq!(t.level(1), 0);
        assert_eq!(t.level(15), 3);
        assert!(TreeTopology::new(0).is_err());
    }

    #[test]
    fn single_branch_routes_right_on_one() {
        let tree = DecisionTree::empty(topo(1))
            .with_branch(1, 0)
            .unwrap()
            .with_prediction(2, 0)
            .unwrap()
            .with_prediction(3, 1)
            .unwrap();
        assert_eq!(tree.route(&[1, 0]).unwrap(), 3);
        assert_eq!(tree.route(&[0, 1]).unwrap(), 2);
        assert_eq!(tree.predict(&[1, 1]).unwrap(), 1);
    }

    #[test]
    fn constant_tree_always_root() {
        let tree = DecisionTree::constant(topo(3), 1);
        for x in [[0u8, 0], [0, 1], [1, 0], [1, 1]] {
            assert_eq!(tree.route(&x).unwrap(), 1);
            assert_eq!(tree.predict(&x).unwrap(), 1);
        }
        assert!(tree.validate().is_empty());
    }

    #[test]
    fn full_depth2_hand_simulation() {
        // node 1 tests x0, node 2 tests x1, node 3 tests x2
        let tree = full_depth2();
        assert_eq!(tree.route(&[0, 0, 1]).unwrap(), 4);
        assert_eq!(tree.route(&[0, 1, 0]).unwrap(), 5);
        assert_eq!(tree.route(&[1, 1, 0]).unwrap(), 6);
        assert_eq!(tree.route(&[1, 0, 1]).unwrap(), 7);
        assert_eq!(tree.predict(&[1, 0, 1]).unwrap(), 0);
    }

    #[test]
    fn branch_below_prediction_is_violation() {
        let tree = DecisionTree::constant(topo(2), 0).with_branch(2, 0).unwrap();
        let v = tree.validate();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].node, 2);
        assert_eq!(v[0].constraint, StructuralConstraint::BranchOrPredict);
        assert!(matches!(tree.route(&[0]), Err(Error::InvalidTree(_))));
    }

    #[test]
    fn uncovered_terminal_and_bad_class() {
        let tree = DecisionTree::empty(topo(1)).with_branch(1, 0).unwrap().with_prediction(2, 2).unwrap();
        let v = tree.validate();
        assert!(v.iter().any(|v| v.node == 3 && v.constraint == StructuralConstraint::TerminalCovered));
        assert!(v.iter().any(|v| v.node == 2 && v.constraint == StructuralConstraint::SingleClass));
        let terminal_branch = DecisionTree::empty(topo(1))
            .with_branch(1, 0)
            .unwrap()
            .with_prediction(2, 0)
            .unwrap()
            .with_branch(3, 0)
            .unwrap();
        assert_eq!(terminal_branch.validate()[0].constraint, StructuralConstraint::TerminalCovered);
    }

    #[test]
    fn route_rejects_short_or_nonbinary_input() {
        let tree = full_depth2();
        assert!(tree.route(&[0]).is_err());
        assert!(tree.route(&[2, 0, 0]).is_err());
    }

    #[test]
    fn dot_counts() {
        let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let constant = DecisionTree::constant(topo(2), 1).to_dot(&names).unwrap();
        assert_eq!(constant.matches("[shape=").count(), 1);
        assert_eq!(constant.matches("->").count(), 0);
        let full = full_depth2().to_dot(&names).unwrap();
        assert_eq!(full.matches("[shape=").count(), 7);
        assert_eq!(full.matches("->").count(), 6);
        assert!(full_depth2().to_dot(&names[..2]).is_err());
    }

    #[test]
    fn json_round_trip() {
        let tree = full_depth2();
        let text = tree.to_json(None).unwrap();
        assert_eq!(DecisionTree::from_json(&text).unwrap(), tree);
        let via_serde = serde_json::to_string(&tree).unwrap();
        assert_eq!(DecisionTree::from_json(&via_serde).unwrap(), tree);
    }
}
