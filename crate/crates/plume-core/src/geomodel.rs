//! Random geological scenarios: correlated log-permeability fields, well
//! placement, and per-cell type labels.

use crate::linalg::{cholesky_in_place, lower_triangular_apply, LinalgError};
use crate::mesh::{Mesh, Vec2};
use crate::scalar::Scalar;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// 1 millidarcy in m^2.
pub const MILLIDARCY_M2: f64 = 9.869233e-16;

#[derive(Debug, Error)]
pub enum GeoError {
    #[error("covariance factorization failed: {0}")]
    FactorizationFailure(#[from] LinalgError),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("well cell {0} out of range ({1} cells)")]
    InvalidWellCell(usize, usize),
}

/// Role of a cell in the simulation, encoded as a one-hot node feature.
/// Priority when several apply: injector > fault-adjacent > boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[repr(u8)]
pub enum CellType {
    Interior = 0,
    Injector = 1,
    FaultAdjacent = 2,
    Boundary = 3,
}

impl CellType {
    pub fn one_hot<T: Scalar>(self) -> [T; 4] {
        let mut v = [T::zero(); 4];
        v[self as usize] = T::one();
        v
    }

    pub fn from_index(idx: u8) -> Option<Self> {
        match idx {
            0 => Some(CellType::Interior),
            1 => Some(CellType::Injector),
            2 => Some(CellType::FaultAdjacent),
            3 => Some(CellType::Boundary),
            _ => None,
        }
    }
}

/// One geological realization on a fixed mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct GeoModel<T> {
    /// Cell permeability in m^2.
    pub perm: Vec<T>,
    /// Cell porosity (dimensionless).
    pub porosity: Vec<T>,
    pub well_cell: usize,
    pub cell_types: Vec<CellType>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeoModelConfig {
    /// Mean of ln(k) with k in mD.
    pub mean_ln_md: f64,
    /// Standard deviation of ln(k) in ln(mD).
    pub std_ln_md: f64,
    /// Correlation length of the exponential covariance, in m.
    pub corr_len_m: f64,
    pub porosity: f64,
}

impl Default for GeoModelConfig {
    fn default() -> Self {
        GeoModelConfig { mean_ln_md: 3.912, std_ln_md: 0.5, corr_len_m: 200.0, porosity: 0.2 }
    }
}

/// Draws a log-Gaussian permeability field with exponential covariance
/// `std^2 * exp(-|dx| / corr_len)` over cell centroids. Returns permeability
/// in m^2. Deterministic given `seed`.
pub fn sample_log_perm_field<T: Scalar>(
    mesh: &Mesh<T>,
    mean_ln_md: T,
    std_ln_md: T,
    corr_len_m: T,
    seed: u64,
) -> Result<Vec<T>, GeoError> {
    if std_ln_md < T::zero() {
        return Err(GeoError::InvalidArgument("std_ln must be >= 0".into()));
    }
    if corr_len_m <= T::zero() {
        return Err(GeoError::InvalidArgument("corr_len must be > 0".into()));
    }
    let n = mesh.n_cells();
    if std_ln_md == T::zero() {
        let k = T::lit(MILLIDARCY_M2) * mean_ln_md.exp();
        return Ok(vec![k; n]);
    }

    let mut cov = covariance_matrix(mesh, std_ln_md, corr_len_m);
    cholesky_in_place(&mut cov, n)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z: Vec<T> = (0..n)
        .map(|_| T::lit(<StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)))
        .collect();
    let mut field = vec![T::zero(); n];
    lower_triangular_apply(&cov, n, &z, &mut field);
    Ok(field
        .into_iter()
        .map(|g| T::lit(MILLIDARCY_M2) * (mean_ln_md + g).exp())
        .collect())
}

/// Dense exponential covariance over cell centroids with the 1e-10 diagonal
/// jitter applied. Exposed for the statistical oracle in tests.
pub fn covariance_matrix<T: Scalar>(mesh: &Mesh<T>, std_ln: T, corr_len: T) -> Vec<T> {
    let n = mesh.n_cells();
    let var = std_ln * std_ln;
    let mut cov = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..n {
            let d = mesh.cells[i].centroid.dist(mesh.cells[j].centroid);
            cov[i * n + j] = var * (-d / corr_len).exp();
        }
        cov[i * n + i] = cov[i * n + i] + T::lit(1e-10);
    }
    cov
}

/// Uniform well location in the 200 m x 200 m box centered in the domain.
/// The domain must be at least 200 m on each side.
pub fn sample_well_location<T: Scalar>(lx: T, ly: T, seed: u64) -> Vec2<T> {
    let box_side = T::lit(200.0);
    assert!(
        lx >= box_side && ly >= box_side,
        "domain must be at least 200 m x 200 m"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u: f64 = rng.random();
    let v: f64 = rng.random();
    let half = T::lit(0.5);
    Vec2::new(
        lx * half + box_side * T::lit(u - 0.5),
        ly * half + box_side * T::lit(v - 0.5),
    )
}

/// Labels every cell. A cell adjacent to a sealed fault face that also sits
/// on the domain boundary is fault-adjacent; the injector label always wins.
pub fn assign_cell_types<T: Scalar>(mesh: &Mesh<T>, well_cell: usize) -> Result<Vec<CellType>, GeoError> {
    let n = mesh.n_cells();
    if well_cell >= n {
        return Err(GeoError::InvalidWellCell(well_cell, n));
    }
    let mut touches_fault = vec![false; n];
    let mut touches_boundary = vec![false; n];
    for f in &mesh.faces {
        if f.fault {
            touches_fault[f.left] = true;
            if let Some(r) = f.right {
                touches_fault[r] = true;
            }
        }
        if f.right.is_none() {
            touches_boundary[f.left] = true;
        }
    }
    Ok((0..n)
        .map(|i| {
            if i == well_cell {
                CellType::Injector
            } else if touches_fault[i] {
                CellType::FaultAdjacent
            } else if touches_boundary[i] {
                CellType::Boundary
            } else {
                CellType::Interior
            }
        })
        .collect())
}

/// Uniform random seed points in the open domain interior, for feeding the
/// Voronoi mesher. Deterministic given `seed`.
pub fn sample_seed_points<T: Scalar>(n: usize, lx: T, ly: T, seed: u64) -> Vec<Vec2<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let margin = 1e-3;
    (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            let v: f64 = rng.random();
            Vec2::new(
                lx * T::lit(margin + (1.0 - 2.0 * margin) * u),
                ly * T::lit(margin + (1.0 - 2.0 * margin) * v),
            )
        })
        .collect()
}

impl<T: Scalar> GeoModel<T> {
    /// Samples a full realization for `mesh`: permeability field, constant
    /// porosity, well cell containing `well`, and cell types.
    pub fn sample(
        mesh: &Mesh<T>,
        well: Vec2<T>,
        config: &GeoModelConfig,
        seed: u64,
    ) -> Result<Self, GeoError> {
        let perm = sample_log_perm_field(
            mesh,
            T::lit(config.mean_ln_md),
            T::lit(config.std_ln_md),
            T::lit(config.corr_len_m),
            seed,
        )?;
        let well_cell = mesh
            .find_cell(well)
            .ok_or_else(|| GeoError::InvalidArgument("well point not inside any cell".into()))?;
        let cell_types = assign_cell_types(mesh, well_cell)?;
        Ok(GeoModel {
            perm,
            porosity: vec![T::lit(config.porosity); mesh.n_cells()],
            well_cell,
            cell_types,
        })
    }

    pub fn validate(&self, mesh: &Mesh<T>) -> Result<(), GeoError> {
        let n = mesh.n_cells();
        if self.perm.len() != n || self.porosity.len() != n || self.cell_types.len() != n {
            return Err(GeoError::InvalidArgument("field lengths do not match mesh".into()));
        }
        if self.perm.iter().any(|&k| k <= T::zero()) {
            return Err(GeoError::InvalidArgument("permeability must be positive".into()));
        }
        if self.porosity.iter().any(|&p| p <= T::zero() || p >= T::one()) {
            return Err(GeoError::InvalidArgument("porosity must lie in (0, 1)".into()));
        }
        let injectors = self
            .cell_types
            .iter()
            .filter(|&&t| t == CellType::Injector)
            .count();
        if injectors != 1 {
            return Err(GeoError::InvalidArgument(format!("expected 1 injector, found {injectors}")));
        }
        Ok(())
    }
}
