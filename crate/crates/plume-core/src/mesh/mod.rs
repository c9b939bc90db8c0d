//! Unstructured polygonal meshes with fault-aware faces and TPFA
//! transmissibilities.
//!
//! Cells are convex polygons of unit thickness, so "volume" is the polygon
//! area times 1 m. Faces store the geometric quantities needed by a
//! two-point flux approximation; a face crossing a fault segment is flagged
//! and later sealed (zero transmissibility).

pub mod geom;
pub mod io;
mod voronoi;

pub use geom::{Segment, Vec2};
pub use voronoi::build_voronoi_mesh;

use crate::scalar::Scalar;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("invalid mesh dimensions: {0}")]
    InvalidArgument(String),
    #[error("meshing failure: {0}")]
    MeshingFailure(String),
    #[error("degenerate geometry at face {face}: {reason}")]
    DegenerateGeometry { face: usize, reason: String },
    #[error("permeability must be positive for every cell (cell {0})")]
    NonPositivePermeability(usize),
    #[error("mesh i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("mesh parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// One polygonal cell. The vertex loop is counter-clockwise.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell<T> {
    pub vertices: Vec<Vec2<T>>,
    pub centroid: Vec2<T>,
    pub volume: T,
}

/// A straight face between `left` and `right` cells (`right = None` on the
/// domain boundary). `normal` is the unit normal pointing from `left` toward
/// `right` (outward on the boundary); `area` is the face length times the
/// unit thickness.
#[derive(Debug, Clone, PartialEq)]
pub struct Face<T> {
    pub left: usize,
    pub right: Option<usize>,
    pub area: T,
    pub center: Vec2<T>,
    pub normal: Vec2<T>,
    pub fault: bool,
    pub segment: Segment<T>,
}

impl<T> Face<T> {
    pub fn is_interior(&self) -> bool {
        self.right.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh<T> {
    pub cells: Vec<Cell<T>>,
    pub faces: Vec<Face<T>>,
    pub fault_segments: Vec<Segment<T>>,
    /// Axis-aligned domain extent; the domain is `[0, extent.x] x [0, extent.y]`.
    pub extent: Vec2<T>,
}

impl<T: Scalar> Mesh<T> {
    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }

    /// Absolute length tolerance used for point identity on this mesh.
    pub fn tolerance(&self) -> T {
        T::lit(1e-9) * self.extent.x.max(self.extent.y)
    }

    pub fn total_volume(&self) -> T {
        let mut v = T::zero();
        for c in &self.cells {
            v = v + c.volume;
        }
        v
    }

    /// Face indices incident to each cell.
    pub fn cell_faces(&self) -> Vec<Vec<usize>> {
        let mut incidence = vec![Vec::new(); self.cells.len()];
        for (fi, f) in self.faces.iter().enumerate() {
            incidence[f.left].push(fi);
            if let Some(r) = f.right {
                incidence[r].push(fi);
            }
        }
        incidence
    }

    /// Index of the cell containing `p`, if any.
    pub fn find_cell(&self, p: Vec2<T>) -> Option<usize> {
        let eps = self.tolerance();
        self.cells
            .iter()
            .position(|c| geom::point_in_convex_polygon(&c.vertices, p, eps))
    }

    /// Checks the structural invariants; returns the first violation found.
    pub fn validate(&self) -> Result<(), MeshError> {
        let eps = self.tolerance();
        for (i, c) in self.cells.iter().enumerate() {
            if c.volume <= T::zero() {
                return Err(MeshError::MeshingFailure(format!("cell {i} has non-positive volume")));
            }
            if !geom::point_in_convex_polygon(&c.vertices, c.centroid, eps) {
                return Err(MeshError::MeshingFailure(format!("cell {i} centroid outside polygon")));
            }
        }
        for (fi, f) in self.faces.iter().enumerate() {
            if f.area <= T::zero() {
                return Err(MeshError::MeshingFailure(format!("face {fi} has non-positive area")));
            }
            if Some(f.left) == f.right {
                return Err(MeshError::MeshingFailure(format!("face {fi} references one cell twice")));
            }
            let should_flag = self
                .fault_segments
                .iter()
                .any(|s| geom::segments_intersect(&f.segment, s, eps));
            if should_flag != f.fault {
                return Err(MeshError::MeshingFailure(format!("face {fi} fault flag inconsistent")));
            }
        }
        Ok(())
    }
}

/// Geometric TPFA transmissibilities, one entry per mesh face. Interior
/// entries hold the harmonic half-transmissibility combination `k*A/d`
/// (in m^3); boundary-face entries are zero placeholders. Fault faces are
/// sealed to exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmissibilityMap<T> {
    pub values: Vec<T>,
}

impl<T: Scalar> TransmissibilityMap<T> {
    pub fn value(&self, face: usize) -> T {
        self.values[face]
    }
}

/// Builds an `nx x ny` rectangular-cell mesh over `[0, lx] x [0, ly]`.
pub fn build_cartesian_mesh<T: Scalar>(nx: usize, ny: usize, lx: T, ly: T) -> Result<Mesh<T>, MeshError> {
    if nx == 0 || ny == 0 {
        return Err(MeshError::InvalidArgument(format!("nx={nx}, ny={ny} must be >= 1")));
    }
    if lx <= T::zero() || ly <= T::zero() {
        return Err(MeshError::InvalidArgument(format!("lx={lx}, ly={ly} must be > 0")));
    }
    let dx = lx / T::from_usize(nx).unwrap();
    let dy = ly / T::from_usize(ny).unwrap();
    let half = T::lit(0.5);
    let cell_id = |ix: usize, iy: usize| iy * nx + ix;

    let mut cells = Vec::with_capacity(nx * ny);
    for iy in 0..ny {
        for ix in 0..nx {
            let x0 = dx * T::from_usize(ix).unwrap();
            let y0 = dy * T::from_usize(iy).unwrap();
            let vertices = vec![
                Vec2::new(x0, y0),
                Vec2::new(x0 + dx, y0),
                Vec2::new(x0 + dx, y0 + dy),
                Vec2::new(x0, y0 + dy),
            ];
            cells.push(Cell {
                centroid: Vec2::new(x0 + dx * half, y0 + dy * half),
                volume: dx * dy,
                vertices,
            });
        }
    }

    let mut faces = Vec::new();
    let mut push_face = |left: usize, right: Option<usize>, seg: Segment<T>, normal: Vec2<T>| {
        faces.push(Face {
            left,
            right,
            area: seg.length(),
            center: seg.midpoint(),
            normal,
            fault: false,
            segment: seg,
        });
    };

    for iy in 0..ny {
        for ix in 0..nx {
            let id = cell_id(ix, iy);
            let x0 = dx * T::from_usize(ix).unwrap();
            let y0 = dy * T::from_usize(iy).unwrap();
            let x1 = x0 + dx;
            let y1 = y0 + dy;
            // Vertical faces: right neighbor or right boundary; left boundary on ix == 0.
            let right_seg = Segment::new(Vec2::new(x1, y0), Vec2::new(x1, y1));
            if ix + 1 < nx {
                push_face(id, Some(cell_id(ix + 1, iy)), right_seg, Vec2::new(T::one(), T::zero()));
            } else {
                push_face(id, None, right_seg, Vec2::new(T::one(), T::zero()));
            }
            if ix == 0 {
                let seg = Segment::new(Vec2::new(x0, y0), Vec2::new(x0, y1));
                push_face(id, None, seg, Vec2::new(-T::one(), T::zero()));
            }
            // Horizontal faces: top neighbor or top boundary; bottom boundary on iy == 0.
            let top_seg = Segment::new(Vec2::new(x0, y1), Vec2::new(x1, y1));
            if iy + 1 < ny {
                push_face(id, Some(cell_id(ix, iy + 1)), top_seg, Vec2::new(T::zero(), T::one()));
            } else {
                push_face(id, None, top_seg, Vec2::new(T::zero(), T::one()));
            }
            if iy == 0 {
                let seg = Segment::new(Vec2::new(x0, y0), Vec2::new(x1, y0));
                push_face(id, None, seg, Vec2::new(T::zero(), -T::one()));
            }
        }
    }

    Ok(Mesh {
        cells,
        faces,
        fault_segments: Vec::new(),
        extent: Vec2::new(lx, ly),
    })
}

/// Computes TPFA transmissibilities from cell permeabilities (m^2).
///
/// Each half-transmissibility is `alpha_i = k_i * A_f * max(0, (c_f - x_i) . n_i)
/// / |c_f - x_i|^2` with the face normal oriented outward from cell `i`; the
/// face value is the harmonic combination `(1/alpha_i + 1/alpha_j)^-1`. Fault
/// faces are forced to zero.
pub fn compute_transmissibilities<T: Scalar>(
    mesh: &Mesh<T>,
    perm: &[T],
) -> Result<TransmissibilityMap<T>, MeshError> {
    assert_eq!(perm.len(), mesh.n_cells(), "one permeability per cell");
    if let Some(bad) = perm.iter().position(|&k| k <= T::zero()) {
        return Err(MeshError::NonPositivePermeability(bad));
    }
    let eps = mesh.tolerance();
    let mut values = vec![T::zero(); mesh.n_faces()];
    for (fi, face) in mesh.faces.iter().enumerate() {
        let Some(right) = face.right else { continue };
        if face.fault {
            continue; // sealed: stays exactly zero
        }
        let half = |cell: usize, outward: Vec2<T>| -> Result<T, MeshError> {
            let d = face.center - mesh.cells[cell].centroid;
            let dist2 = d.dot(d);
            if dist2.sqrt() <= eps {
                return Err(MeshError::DegenerateGeometry {
                    face: fi,
                    reason: "face center coincides with cell centroid".into(),
                });
            }
            let proj = d.dot(outward).max(T::zero());
            let alpha = perm[cell] * face.area * proj / dist2;
            if alpha <= T::zero() {
                return Err(MeshError::DegenerateGeometry {
                    face: fi,
                    reason: "non-positive half transmissibility".into(),
                });
            }
            Ok(alpha)
        };
        let alpha_l = half(face.left, face.normal)?;
        let alpha_r = half(right, -face.normal)?;
        values[fi] = T::one() / (T::one() / alpha_l + T::one() / alpha_r);
    }
    Ok(TransmissibilityMap { values })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cell_mesh() {
        let mesh = build_cartesian_mesh::<f64>(1, 1, 1.0, 1.0).unwrap();
        assert_eq!(mesh.n_cells(), 1);
        assert!((mesh.cells[0].volume - 1.0).abs() < 1e-15);
        let boundary = mesh.faces.iter().filter(|f| !f.is_interior()).count();
        assert_eq!(boundary, 4);
        assert_eq!(mesh.n_faces(), 4);
        mesh.validate().unwrap();
    }

    #[test]
    fn two_cell_mesh_shares_one_interior_face() {
        let mesh = build_cartesian_mesh::<f64>(2, 1, 2.0, 1.0).unwrap();
        assert_eq!(mesh.n_cells(), 2);
        let interior: Vec<_> = mesh.faces.iter().filter(|f| f.is_interior()).collect();
        assert_eq!(interior.len(), 1);
        assert!((interior[0].area - 1.0).abs() < 1e-15);
        let d = mesh.cells[0].centroid.dist(mesh.cells[1].centroid);
        assert!((d - 1.0).abs() < 1e-15);
        mesh.validate().unwrap();
    }

    #[test]
    fn hundred_cell_volumes() {
        let mesh = build_cartesian_mesh::<f64>(10, 10, 1000.0, 1000.0).unwrap();
        assert_eq!(mesh.n_cells(), 100);
        for c in &mesh.cells {
            assert!((c.volume - 10_000.0).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_dimension_rejected() {
        assert!(matches!(
            build_cartesian_mesh::<f64>(0, 1, 1.0, 1.0),
            Err(MeshError::InvalidArgument(_))
        ));
        assert!(matches!(
            build_cartesian_mesh::<f64>(1, 1, -1.0, 1.0),
            Err(MeshError::InvalidArgument(_))
        ));
    }

    #[test]
    fn transmissibility_harmonic_mean_uniform() {
        // Two unit cells, k = 1: alpha = 1*1*0.5/0.25 = 2 each, T = 1.
        let mesh = build_cartesian_mesh::<f64>(2, 1, 2.0, 1.0).unwrap();
        let trans = compute_transmissibilities(&mesh, &[1.0, 1.0]).unwrap();
        let fi = mesh.faces.iter().position(|f| f.is_interior()).unwrap();
        assert!((trans.value(fi) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn transmissibility_harmonic_mean_contrast() {
        let mesh = build_cartesian_mesh::<f64>(2, 1, 2.0, 1.0).unwrap();
        let trans = compute_transmissibilities(&mesh, &[1.0, 3.0]).unwrap();
        let fi = mesh.faces.iter().position(|f| f.is_interior()).unwrap();
        // alpha_0 = 2, alpha_1 = 6 -> T = 1/(1/2 + 1/6) = 1.5
        assert!((trans.value(fi) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn fault_face_sealed() {
        let mut mesh = build_cartesian_mesh::<f64>(2, 1, 2.0, 1.0).unwrap();
        let fi = mesh.faces.iter().position(|f| f.is_interior()).unwrap();
        mesh.faces[fi].fault = true;
        let trans = compute_transmissibilities(&mesh, &[1.0, 3.0]).unwrap();
        assert_eq!(trans.value(fi), 0.0);
    }

    #[test]
    fn transmissibility_scales_linearly_with_permeability() {
        let mesh = build_cartesian_mesh::<f64>(4, 3, 4.0, 3.0).unwrap();
        let k: Vec<f64> = (0..12).map(|i| 1.0 + 0.25 * i as f64).collect();
        let k_scaled: Vec<f64> = k.iter().map(|v| v * 7.5).collect();
        let t1 = compute_transmissibilities(&mesh, &k).unwrap();
        let t2 = compute_transmissibilities(&mesh, &k_scaled).unwrap();
        for (a, b) in t1.values.iter().zip(&t2.values) {
            assert!((b - a * 7.5).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn nonpositive_permeability_rejected() {
        let mesh = build_cartesian_mesh::<f64>(2, 1, 2.0, 1.0).unwrap();
        assert!(matches!(
            compute_transmissibilities(&mesh, &[1.0, 0.0]),
            Err(MeshError::NonPositivePermeability(1))
        ));
    }
}
