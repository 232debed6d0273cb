use std::collections::HashMap;
use std::fmt;

use serde::Serialize;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::fairness::{self, FairnessSpec, Sense};
use crate::tree::{DecisionTree, NodeKind, TreeTopology};

pub(crate) const CLASSES: [u8; 2] = [0, 1];

/// What a model variable stands for. Features and datapoints are 0-based,
/// nodes 1-based in breadth-first order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VarKind {
    /// `b_<node>_<feature>`: node branches on the feature.
    Branch { node: usize, feature: usize },
    /// `p_<node>`: node is a prediction node.
    Predict { node: usize },
    /// `w_<node>_<class>`: node predicts the class.
    Class { node: usize, class: u8 },
    /// `zs_<point>`: flow from the source into the root.
    Source { point: usize },
    /// `z_<point>_<node>`: flow from the parent of `node` into `node` (node >= 2).
    Arc { point: usize, node: usize },
    /// `zt_<point>_<node>_<class>`: flow from `node` into the sink of `class`.
    Sink { point: usize, node: usize, class: u8 },
}

impl VarKind {
    pub fn name(&self) -> String {
        match *self {
            VarKind::Branch { node, feature } => format!("b_{node}_{feature}"),
            VarKind::Predict { node } => format!("p_{node}"),
            VarKind::Class { node, class } => format!("w_{node}_{class}"),
            VarKind::Source { point } => format!("zs_{point}"),
            VarKind::Arc { point, node } => format!("z_{point}_{node}"),
            VarKind::Sink { point, node, class } => format!("zt_{point}_{node}_{class}"),
        }
    }

    /// Inverse of [`VarKind::name`].
    pub fn parse(name: &str) -> Option<Self> {
        let (prefix, rest) = name.split_once('_')?;
        let nums: Vec<usize> = rest.split('_').map(|s| s.parse().ok()).collect::<Option<_>>()?;
        Some(match (prefix, nums.as_slice()) {
            ("b", &[node, feature]) => VarKind::Branch { node, feature },
            ("p", &[node]) => VarKind::Predict { node },
            ("w", &[node, class]) if class < 2 => VarKind::Class { node, class: class as u8 },
            ("zs", &[point]) => VarKind::Source { point },
            ("z", &[point, node]) => VarKind::Arc { point, node },
            ("zt", &[point, node, class]) if class < 2 => VarKind::Sink { point, node, class: class as u8 },
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RowSense {
    Le,
    Ge,
    Eq,
}

impl fmt::Display for RowSense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RowSense::Le => "<=",
            RowSense::Ge => ">=",
            RowSense::Eq => "=",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub name: String,
    pub terms: Vec<(usize, f64)>,
    pub sense: RowSense,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Variable {
    pub name: String,
    /// `None` for variables of a model read from text whose names are not ours.
    pub kind: Option<VarKind>,
    pub lower: f64,
    pub upper: f64,
    pub binary: bool,
}

/// A linear model over named variables, maximized unless `minimize` is set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MipModel {
    pub variables: Vec<Variable>,
    pub objective: Vec<(usize, f64)>,
    pub minimize: bool,
    pub rows: Vec<Row>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct ModelCounts {
    pub b: usize,
    pub p: usize,
    pub w: usize,
    pub z: usize,
    pub structural_rows: usize,
    pub fairness_rows: usize,
}

impl ModelCounts {
    pub fn variables(&self) -> usize {
        self.b + self.p + self.w + self.z
    }

    /// Closed-form sizes for `points` datapoints, `features` features, a
    /// depth-`depth` tree and `fairness_rows` linearized fairness rows.
    pub fn expected(points: usize, features: usize, depth: usize, fairness_rows: usize) -> Self {
        let branch = (1 << depth) - 1;
        let terminal = 1 << depth;
        let nodes = branch + terminal;
        let k = CLASSES.len();
        Self {
            b: branch * features,
            p: nodes,
            w: nodes * k,
            z: points * (nodes + nodes * k),
            structural_rows: branch
                + terminal
                + points * branch
                + points * terminal
                + points
                + 2 * points * branch
                + points * nodes * k
                + nodes,
            fairness_rows,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ExportOptions<'a> {
    /// Write the source rows as `zs_i <= 1` instead of `zs_i = 1`.
    pub literal_source: bool,
    /// Fix every `b`, `p` and `w` variable to this tree through bounds.
    pub fix_tree: Option<&'a DecisionTree>,
}

impl MipModel {
    pub fn new() -> Self {
        Self { variables: Vec::new(), objective: Vec::new(), minimize: false, rows: Vec::new(), index: HashMap::new() }
    }

    pub fn add_variable(&mut self, name: &str, binary: bool) -> Result<usize> {
        if self.index.contains_key(name) {
            return Err(Error::parse("model", format!("variable `{name}` declared twice")));
        }
        let id = self.variables.len();
        self.variables.push(Variable {
            name: name.to_string(),
            kind: VarKind::parse(name),
            lower: 0.0,
            upper: if binary { 1.0 } else { f64::INFINITY },
            binary,
        });
        self.index.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn var(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub(crate) fn var_or_add(&mut self, name: &str) -> usize {
        match self.var(name) {
            Some(id) => id,
            None => self.add_variable(name, false).expect("checked absent"),
        }
    }

    pub fn counts(&self) -> ModelCounts {
        let mut c = ModelCounts::default();
        for v in &self.variables {
            match v.kind {
                Some(VarKind::Branch { .. }) => c.b += 1,
                Some(VarKind::Predict { .. }) => c.p += 1,
                Some(VarKind::Class { .. }) => c.w += 1,
                Some(VarKind::Source { .. } | VarKind::Arc { .. } | VarKind::Sink { .. }) => c.z += 1,
                None => {}
            }
        }
        c.fairness_rows = self.rows.iter().filter(|r| r.name.starts_with("fair_")).count();
        c.structural_rows = self.rows.len() - c.fairness_rows;
        c
    }

    /// Objective value of a full assignment.
    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective.iter().map(|&(v, c)| c * values[v]).sum()
    }

    /// First row violated by `values` by more than `tol`, if any.
    pub fn violated_row(&self, values: &[f64], tol: f64) -> Option<&Row> {
        self.rows.iter().find(|r| {
            let lhs: f64 = r.terms.iter().map(|&(v, c)| c * values[v]).sum();
            match r.sense {
                RowSense::Le => lhs > r.rhs + tol,
                RowSense::Ge => lhs < r.rhs - tol,
                RowSense::Eq => (lhs - r.rhs).abs() > tol,
            }
        })
    }

    fn push_row(&mut self, name: String, terms: Vec<(usize, f64)>, sense: RowSense, rhs: f64) {
        self.rows.push(Row { name, terms, sense, rhs });
    }
}

impl Default for MipModel {
    fn default() -> Self {
        Self::new()
    }
}

/// Builds the flow model of a depth-`depth` tree on `data` with the fairness
/// rows of `spec`.
///
/// Each absolute constraint instance comparing cells L and R becomes the two rows
/// `±(|R|·Σ_{i∈L} flow_i(t_1) - |L|·Σ_{i∈R} flow_i(t_1)) <= δ·|L|·|R|`; a
/// one-sided instance keeps only the `+` row.
pub fn build(data: &Dataset, depth: usize, spec: &FairnessSpec, options: &ExportOptions<'_>) -> Result<MipModel> {
    let topo = TreeTopology::new(depth)?;
    let compiled = fairness::compile(spec, data)?;
    if let Some(tree) = options.fix_tree {
        if tree.depth() != depth {
            return Err(Error::Argument(format!("fixed tree has depth {}, model depth {depth}", tree.depth())));
        }
        if tree.max_feature().is_some_and(|f| f >= data.n_features()) {
            return Err(Error::Argument("fixed tree uses a feature the data does not have".into()));
        }
    }
    let mut m = MipModel::new();
    let n_feat = data.n_features();
    let branch: Vec<usize> = topo.branch_nodes().collect();
    let nodes: Vec<usize> = topo.nodes().collect();

    let mut b = HashMap::new();
    for &n in &branch {
        for f in 0..n_feat {
            b.insert((n, f), m.add_variable(&VarKind::Branch { node: n, feature: f }.name(), true)?);
        }
    }
    let mut p = HashMap::new();
    for &n in &nodes {
        p.insert(n, m.add_variable(&VarKind::Predict { node: n }.name(), true)?);
    }
    let mut w = HashMap::new();
    for &n in &nodes {
        for k in CLASSES {
            w.insert((n, k), m.add_variable(&VarKind::Class { node: n, class: k }.name(), true)?);
        }
    }
    // flow into node n for point i: zs_i for the root, z_i_n otherwise
    let mut inflow = HashMap::new();
    let mut sink = HashMap::new();
    for i in 0..data.len() {
        inflow.insert((i, 1), m.add_variable(&VarKind::Source { point: i }.name(), true)?);
        for &n in &nodes[1..] {
            inflow.insert((i, n), m.add_variable(&VarKind::Arc { point: i, node: n }.name(), true)?);
        }
        for &n in &nodes {
            for k in CLASSES {
                sink.insert((i, n, k), m.add_variable(&VarKind::Sink { point: i, node: n, class: k }.name(), true)?);
            }
        }
    }

    for i in 0..data.len() {
        for &n in &nodes {
            m.objective.push((sink[&(i, n, data.label(i))], 1.0));
        }
    }

    for &n in &branch {
        let mut terms: Vec<(usize, f64)> = (0..n_feat).map(|f| (b[&(n, f)], 1.0)).collect();
        terms.push((p[&n], 1.0));
        terms.extend(topo.ancestors(n).iter().map(|a| (p[a], 1.0)));
        m.push_row(format!("bp_{n}"), terms, RowSense::Eq, 1.0);
    }
    for n in topo.terminal_nodes() {
        let mut terms = vec![(p[&n], 1.0)];
        terms.extend(topo.ancestors(n).iter().map(|a| (p[a], 1.0)));
        m.push_row(format!("tl_{n}"), terms, RowSense::Eq, 1.0);
    }
    for i in 0..data.len() {
        for &n in &branch {
            let terms = vec![
                (inflow[&(i, n)], 1.0),
                (inflow[&(i, 2 * n)], -1.0),
                (inflow[&(i, 2 * n + 1)], -1.0),
                (sink[&(i, n, 0)], -1.0),
                (sink[&(i, n, 1)], -1.0),
            ];
            m.push_row(format!("ci_{i}_{n}"), terms, RowSense::Eq, 0.0);
        }
    }
    for i in 0..data.len() {
        for n in topo.terminal_nodes() {
            let terms = vec![(inflow[&(i, n)], 1.0), (sink[&(i, n, 0)], -1.0), (sink[&(i, n, 1)], -1.0)];
            m.push_row(format!("ct_{i}_{n}"), terms, RowSense::Eq, 0.0);
        }
    }
    let source_sense = if options.literal_source { RowSense::Le } else { RowSense::Eq };
    for i in 0..data.len() {
        m.push_row(format!("src_{i}"), vec![(inflow[&(i, 1)], 1.0)], source_sense, 1.0);
    }
    for i in 0..data.len() {
        for &n in &branch {
            for (side, child, value) in [("bl", 2 * n, 0u8), ("br", 2 * n + 1, 1u8)] {
                let mut terms = vec![(inflow[&(i, child)], 1.0)];
                terms.extend((0..n_feat).filter(|&f| data.feature(i, f) == value).map(|f| (b[&(n, f)], -1.0)));
                m.push_row(format!("{side}_{i}_{n}"), terms, RowSense::Le, 0.0);
            }
        }
    }
    for i in 0..data.len() {
        for &n in &nodes {
            for k in CLASSES {
                m.push_row(
                    format!("sk_{i}_{n}_{k}"),
                    vec![(sink[&(i, n, k)], 1.0), (w[&(n, k)], -1.0)],
                    RowSense::Le,
                    0.0,
                );
            }
        }
    }
    for &n in &nodes {
        m.push_row(format!("lp_{n}"), vec![(w[&(n, 0)], 1.0), (w[&(n, 1)], 1.0), (p[&n], -1.0)], RowSense::Eq, 0.0);
    }

    for (j, inst) in compiled.instances.iter().enumerate() {
        let (ls, rs) = (inst.lhs_size() as f64, inst.rhs_size() as f64);
        let mut terms = Vec::new();
        for (members, coef) in [(&inst.lhs_members, rs), (&inst.rhs_members, -ls)] {
            for &i in members {
                terms.extend(nodes.iter().map(|&n| (sink[&(i, n, 1)], coef)));
            }
        }
        let rhs = spec.delta * ls * rs;
        m.push_row(format!("fair_{j}_up"), terms.clone(), RowSense::Le, rhs);
        if inst.sense == Sense::Absolute {
            let neg = terms.into_iter().map(|(v, c)| (v, -c)).collect();
            m.push_row(format!("fair_{j}_lo"), neg, RowSense::Le, rhs);
        }
    }

    if let Some(tree) = options.fix_tree {
        let mut fix = |id: usize, on: bool| {
            let v = &mut m.variables[id];
            v.lower = f64::from(u8::from(on));
            v.upper = v.lower;
        };
        for &n in &nodes {
            let kind = tree.kind(n);
            if topo.is_branch_node(n) {
                for f in 0..n_feat {
                    fix(b[&(n, f)], kind == NodeKind::Branch { feature: f });
                }
            }
            fix(p[&n], matches!(kind, NodeKind::Predict { .. }));
            for k in CLASSES {
                fix(w[&(n, k)], kind == NodeKind::Predict { class: k });
            }
        }
    }
    Ok(m)
}
