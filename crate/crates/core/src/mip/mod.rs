//! Mixed-integer model export.
//!
//! [`build`] produces the flow formulation of a depth-bounded tree: branch
//! variables `b_<n>_<f>`, prediction variables `p_<n>`, class variables
//! `w_<n>_<k>`, and per datapoint `i` the source arc `zs_<i>`, tree arcs
//! `z_<i>_<n>` into node `n >= 2`, and sink arcs `zt_<i>_<n>_<k>`. Nodes are
//! numbered breadth-first from 1, features, classes and datapoints from 0.
//!
//! Row names: `bp_<n>`, `tl_<n>` (node roles), `ci_<i>_<n>`, `ct_<i>_<n>`
//! (flow conservation), `src_<i>`, `bl_<i>_<n>`, `br_<i>_<n>` (routing),
//! `sk_<i>_<n>_<k>` (sink arcs), `lp_<n>` (one class per prediction node)
//! and `fair_<j>_up`, `fair_<j>_lo` (fairness).

mod enumerate;
mod lp;
mod model;
mod solution;

use std::path::{Path, PathBuf};

pub use enumerate::{solve_binary, BinarySolution, EnumerationResult};
pub use lp::{read_lp, write_lp};
pub use model::{build, ExportOptions, MipModel, ModelCounts, Row, RowSense, VarKind, Variable};
pub use solution::{import_solution, names_csv, write_solution, ImportedSolution, INTEGRALITY_TOLERANCE};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::fairness::FairnessSpec;

/// Path of the name-map file written next to `model_path`.
pub fn names_path(model_path: &Path) -> PathBuf {
    let mut s = model_path.as_os_str().to_owned();
    s.push(".names.csv");
    PathBuf::from(s)
}

/// Builds the model, writes it as LP text to `path` and the name map to
/// [`names_path`]`(path)`.
pub fn export(
    data: &Dataset,
    depth: usize,
    spec: &FairnessSpec,
    path: &Path,
    options: &ExportOptions<'_>,
) -> Result<MipModel> {
    let model = build(data, depth, spec, options)?;
    let comment = format!(
        "depth {depth}, {} datapoints, {} features, fairness {} delta {}{}",
        data.len(),
        data.n_features(),
        spec.kind,
        spec.delta,
        if options.literal_source { ", source rows <= 1" } else { "" }
    );
    std::fs::write(path, write_lp(&model, &comment)).map_err(|e| Error::io(path, e))?;
    let names = names_path(path);
    std::fs::write(&names, names_csv(&model)?).map_err(|e| Error::io(&names, e))?;
    Ok(model)
}
