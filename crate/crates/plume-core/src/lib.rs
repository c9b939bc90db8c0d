//! Two-phase flow simulation and graph-network surrogate modeling on
//! faulted unstructured meshes.

pub mod autodiff;
pub mod geomodel;
pub mod graph;
pub mod linalg;
pub mod mesh;
pub mod metrics;
pub mod model;
pub mod scalar;
pub mod sim;

pub use scalar::Scalar;
