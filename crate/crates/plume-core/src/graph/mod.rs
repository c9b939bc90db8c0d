//! Graph samples: meshes, geomodels and simulator snapshots assembled into
//! the node/edge feature layout consumed by the surrogate model.

pub mod normalize;

pub use normalize::{detrend_fit, relperm_channel, ChannelStats, NormStats};

use crate::autodiff::Tensor;
use crate::geomodel::GeoModel;
use crate::mesh::{Mesh, TransmissibilityMap};
use crate::scalar::Scalar;
use crate::sim::{FluidProps, SimState};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of static node-feature channels: permeability, volume, centroid
/// x/y, and the 4-wide cell-type one-hot.
pub const N_STATIC: usize = 8;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("snapshots must be nonempty")]
    EmptySnapshots,
    #[error("degenerate statistics: {0}")]
    DegenerateStats(String),
}

/// Which physics-augmented inputs the surrogate sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureConfig {
    /// Distance-only edge features, state-only dynamic channel.
    Baseline,
    /// Adds static transmissibility as a fourth edge feature.
    Transmissibility,
    /// Adds the gas relative permeability of the previous state as a node
    /// feature channel.
    Relperm,
    /// Both augmentations.
    Both,
}

impl FeatureConfig {
    pub fn includes_transmissibility(self) -> bool {
        matches!(self, FeatureConfig::Transmissibility | FeatureConfig::Both)
    }

    pub fn includes_relperm(self) -> bool {
        matches!(self, FeatureConfig::Relperm | FeatureConfig::Both)
    }

    /// Edge feature width: dx, dy, |dx| and optionally T_ij.
    pub fn edge_width(self) -> usize {
        if self.includes_transmissibility() {
            4
        } else {
            3
        }
    }

    /// Node input width at the model boundary: statics + dynamic channel
    /// (+ relative permeability channel).
    pub fn node_input_width(self) -> usize {
        N_STATIC + 1 + usize::from(self.includes_relperm())
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureConfig::Baseline => "baseline",
            FeatureConfig::Transmissibility => "trans",
            FeatureConfig::Relperm => "relperm",
            FeatureConfig::Both => "both",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "baseline" => Some(FeatureConfig::Baseline),
            "trans" => Some(FeatureConfig::Transmissibility),
            "relperm" => Some(FeatureConfig::Relperm),
            "both" => Some(FeatureConfig::Both),
            _ => None,
        }
    }
}

/// The dynamic variable a model instance learns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DynVar {
    Saturation,
    Pressure,
}

impl DynVar {
    pub fn as_str(self) -> &'static str {
        match self {
            DynVar::Saturation => "saturation",
            DynVar::Pressure => "pressure",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "saturation" => Some(DynVar::Saturation),
            "pressure" => Some(DynVar::Pressure),
            _ => None,
        }
    }
}

/// One training or evaluation case: static graph structure and features plus
/// the snapshot sequence of the chosen dynamic variable (index 0 is the
/// initial state).
#[derive(Debug, Clone)]
pub struct GraphSample<T> {
    pub n_cells: usize,
    /// Directed edges; both orientations of every conducting face.
    pub edges: Vec<(usize, usize)>,
    /// `n_cells x 8` static features (k, V, x, y, one-hot type).
    pub node_static: Tensor<T>,
    /// `|edges| x n_E` edge features.
    pub edge_features: Tensor<T>,
    /// Physical snapshot values, `(n_T + 1) x n_cells`.
    pub states: Vec<Vec<T>>,
    pub variable: DynVar,
    pub feature_config: FeatureConfig,
    /// Fluid properties used for the relative-permeability channel.
    pub fluid: FluidProps<T>,
}

impl<T: Scalar> GraphSample<T> {
    /// Number of prediction steps (snapshots minus the initial state).
    pub fn n_t(&self) -> usize {
        self.states.len() - 1
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn state(&self, step: usize) -> &[T] {
        &self.states[step]
    }

    /// Truncates the snapshot sequence to `n_t` prediction steps.
    pub fn truncated(&self, n_t: usize) -> GraphSample<T> {
        assert!(n_t + 1 <= self.states.len(), "cannot extend a sample");
        let mut out = self.clone();
        out.states.truncate(n_t + 1);
        out
    }
}

/// Assembles a [`GraphSample`] from a mesh, its transmissibilities, a
/// geomodel and simulator snapshots.
///
/// Nodes are ordered by cell id. Every interior face with nonzero
/// transmissibility contributes two directed edges (left->right pushed
/// first); sealed fault faces contribute none.
pub fn mesh_to_graph<T: Scalar>(
    mesh: &Mesh<T>,
    trans: &TransmissibilityMap<T>,
    geo: &GeoModel<T>,
    snapshots: &[SimState<T>],
    variable: DynVar,
    config: FeatureConfig,
    fluid: FluidProps<T>,
) -> Result<GraphSample<T>, GraphError> {
    if snapshots.is_empty() {
        return Err(GraphError::EmptySnapshots);
    }
    if trans.values.len() != mesh.n_faces() {
        return Err(GraphError::InvalidConfig(format!(
            "transmissibility map has {} entries for {} faces",
            trans.values.len(),
            mesh.n_faces()
        )));
    }
    if config.includes_relperm() && variable != DynVar::Saturation {
        return Err(GraphError::InvalidConfig(
            "the relative-permeability channel applies only to the saturation variable".into(),
        ));
    }

    let n = mesh.n_cells();
    let mut edges = Vec::new();
    let mut edge_rows: Vec<Vec<T>> = Vec::new();
    let n_e = config.edge_width();
    for (fi, face) in mesh.faces.iter().enumerate() {
        let Some(right) = face.right else { continue };
        let t = trans.value(fi);
        if t == T::zero() {
            continue;
        }
        for (i, j) in [(face.left, right), (right, face.left)] {
            let d = mesh.cells[j].centroid - mesh.cells[i].centroid;
            let mut row = vec![d.x, d.y, d.norm()];
            if config.includes_transmissibility() {
                row.push(t);
            }
            edges.push((i, j));
            edge_rows.push(row);
        }
    }
    let edge_features = if edge_rows.is_empty() {
        Tensor::zeros(0, n_e)
    } else {
        Tensor::from_rows(&edge_rows)
    };

    let mut static_rows = Vec::with_capacity(n);
    for i in 0..n {
        let mut row = Vec::with_capacity(N_STATIC);
        row.push(geo.perm[i]);
        row.push(mesh.cells[i].volume);
        row.push(mesh.cells[i].centroid.x);
        row.push(mesh.cells[i].centroid.y);
        row.extend_from_slice(&geo.cell_types[i].one_hot::<T>());
        static_rows.push(row);
    }

    let states = snapshots
        .iter()
        .map(|s| match variable {
            DynVar::Saturation => s.sat_gas.clone(),
            DynVar::Pressure => s.pressure.clone(),
        })
        .collect();

    Ok(GraphSample {
        n_cells: n,
        edges,
        node_static: Tensor::from_rows(&static_rows),
        edge_features,
        states,
        variable,
        feature_config: config,
        fluid,
    })
}
