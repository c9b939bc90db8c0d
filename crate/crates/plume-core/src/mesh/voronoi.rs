//! Clipped Voronoi meshing with approximate fault conformance.
//!
//! Each cell is the intersection of the domain box with the half-planes
//! closer to its seed than to any other seed. Seeds near a fault are
//! mirrored across the fault line so that the shared bisector of each
//! mirror pair lies on the fault; the mesh builder flags (and the
//! transmissibility step seals) any residual face that still crosses a
//! fault segment. Seeds are added on a sunflower spiral around the well to
//! refine the mesh locally.

use super::geom::{self, Segment, Vec2};
use super::{Cell, Face, Mesh, MeshError};
use crate::scalar::Scalar;

/// Golden angle in radians, used for the well-refinement spiral.
const GOLDEN_ANGLE: f64 = 2.399_963_229_728_653;

#[derive(Debug, Clone, Copy, PartialEq)]
enum EdgeSource {
    /// Edge lies on a domain boundary side: 0 bottom, 1 right, 2 top, 3 left.
    Boundary(u8),
    /// Edge lies on the bisector with another seed.
    Neighbor(usize),
}

#[derive(Debug, Clone, Copy)]
struct ClipVertex<T> {
    pos: Vec2<T>,
    /// Source of the polygon edge that starts at this vertex.
    source: EdgeSource,
}

/// Builds a Voronoi mesh of the `[0, lx] x [0, ly]` box from the given seed
/// points, refined around `well` within `refine_radius` (target density
/// `refine_density` times the base density) and approximately conforming to
/// the fault segments.
pub fn build_voronoi_mesh<T: Scalar>(
    seeds: &[Vec2<T>],
    lx: T,
    ly: T,
    faults: &[Segment<T>],
    well: Vec2<T>,
    refine_radius: T,
    refine_density: f64,
) -> Result<Mesh<T>, MeshError> {
    if lx <= T::zero() || ly <= T::zero() {
        return Err(MeshError::InvalidArgument(format!("lx={lx}, ly={ly} must be > 0")));
    }
    if seeds.is_empty() {
        return Err(MeshError::InvalidArgument("at least one seed point required".into()));
    }
    let eps = T::lit(1e-9) * lx.max(ly);
    let inside = |p: Vec2<T>| p.x > eps && p.x < lx - eps && p.y > eps && p.y < ly - eps;
    for (i, s) in seeds.iter().enumerate() {
        if !inside(*s) {
            return Err(MeshError::InvalidArgument(format!(
                "seed {i} at ({}, {}) outside domain interior",
                s.x, s.y
            )));
        }
    }
    if !inside(well) {
        return Err(MeshError::InvalidArgument("well outside domain interior".into()));
    }
    for (i, a) in seeds.iter().enumerate() {
        for (j, b) in seeds.iter().enumerate().skip(i + 1) {
            if a.dist(*b) <= eps {
                return Err(MeshError::MeshingFailure(format!(
                    "duplicate seeds {i} and {j} at ({}, {})",
                    a.x, a.y
                )));
            }
        }
    }

    let mut all = seeds.to_vec();
    add_well_refinement(&mut all, lx, ly, well, refine_radius, refine_density, eps);
    add_fault_mirrors(&mut all, lx, ly, faults, seeds.len(), eps);

    let cells = clip_all_cells(&all, lx, ly, eps)?;
    let faces = collect_faces(&all, &cells, lx, ly, faults, eps);

    let mesh = Mesh {
        cells: cells
            .into_iter()
            .map(|poly| {
                let vertices: Vec<Vec2<T>> = poly.iter().map(|v| v.pos).collect();
                Cell {
                    centroid: geom::polygon_centroid(&vertices),
                    volume: geom::polygon_area(&vertices),
                    vertices,
                }
            })
            .collect(),
        faces,
        fault_segments: faults.to_vec(),
        extent: Vec2::new(lx, ly),
    };
    Ok(mesh)
}

fn add_well_refinement<T: Scalar>(
    all: &mut Vec<Vec2<T>>,
    lx: T,
    ly: T,
    well: Vec2<T>,
    radius: T,
    density: f64,
    eps: T,
) {
    if radius <= T::zero() || density <= 1.0 {
        return;
    }
    let base = all.len() as f64;
    let area = (lx * ly).to_f64().unwrap();
    let disk = std::f64::consts::PI * radius.to_f64().unwrap().powi(2);
    let n_extra = ((density - 1.0) * base * disk / area).ceil() as usize;
    if n_extra == 0 {
        return;
    }
    // Keep additions apart from existing seeds by a fraction of the local spacing.
    let spacing = T::lit((disk / (density * base * disk / area)).sqrt());
    let min_sep = (spacing * T::lit(0.3)).max(eps);
    for k in 0..n_extra {
        let frac = ((k as f64 + 0.5) / n_extra as f64).sqrt();
        let theta = k as f64 * GOLDEN_ANGLE;
        let p = Vec2::new(
            well.x + radius * T::lit(frac * theta.cos()),
            well.y + radius * T::lit(frac * theta.sin()),
        );
        if p.x <= eps || p.x >= lx - eps || p.y <= eps || p.y >= ly - eps {
            continue;
        }
        if all.iter().all(|s| s.dist(p) > min_sep) {
            all.push(p);
        }
    }
}

fn add_fault_mirrors<T: Scalar>(
    all: &mut Vec<Vec2<T>>,
    lx: T,
    ly: T,
    faults: &[Segment<T>],
    n_base: usize,
    eps: T,
) {
    if faults.is_empty() {
        return;
    }
    let band = T::lit((lx * ly).to_f64().unwrap().sqrt() / (n_base.max(1) as f64).sqrt());
    let snapshot = all.clone();
    for fault in faults {
        let len = fault.length();
        if len <= eps {
            continue;
        }
        let ext = band / len;
        for s in &snapshot {
            let (t, d) = fault.project(*s);
            if d <= eps || d >= band {
                continue;
            }
            if t < -ext || t > T::one() + ext {
                continue;
            }
            let m = fault.reflect(*s);
            if m.x <= eps || m.x >= lx - eps || m.y <= eps || m.y >= ly - eps {
                continue;
            }
            let min_sep = (band * T::lit(0.25)).max(eps);
            if all.iter().all(|q| q.dist(m) > min_sep) {
                all.push(m);
            }
        }
    }
}

fn clip_all_cells<T: Scalar>(
    seeds: &[Vec2<T>],
    lx: T,
    ly: T,
    eps: T,
) -> Result<Vec<Vec<ClipVertex<T>>>, MeshError> {
    let n = seeds.len();
    let mut cells = Vec::with_capacity(n);
    // Neighbor candidates sorted by distance, shared scratch.
    let mut order: Vec<usize> = Vec::with_capacity(n);
    for i in 0..n {
        order.clear();
        order.extend((0..n).filter(|&j| j != i));
        order.sort_by(|&a, &b| {
            seeds[i]
                .dist(seeds[a])
                .partial_cmp(&seeds[i].dist(seeds[b]))
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });

        let mut poly = vec![
            ClipVertex { pos: Vec2::new(T::zero(), T::zero()), source: EdgeSource::Boundary(0) },
            ClipVertex { pos: Vec2::new(lx, T::zero()), source: EdgeSource::Boundary(1) },
            ClipVertex { pos: Vec2::new(lx, ly), source: EdgeSource::Boundary(2) },
            ClipVertex { pos: Vec2::new(T::zero(), ly), source: EdgeSource::Boundary(3) },
        ];

        for &j in &order {
            let gap = seeds[i].dist(seeds[j]);
            if gap <= eps {
                return Err(MeshError::MeshingFailure(format!(
                    "seeds {i} and {j} coincide at ({}, {})",
                    seeds[i].x, seeds[i].y
                )));
            }
            // Any vertex farther than half the gap could be cut; once the whole
            // polygon is closer than gap/2, no remaining seed can clip it.
            let max_r = poly
                .iter()
                .map(|v| seeds[i].dist(v.pos))
                .fold(T::zero(), |a, b| a.max(b));
            if gap * T::lit(0.5) > max_r {
                break;
            }
            poly = clip_half_plane(&poly, seeds[i], seeds[j], j, eps);
            if poly.len() < 3 {
                return Err(MeshError::MeshingFailure(format!(
                    "cell of seed {i} vanished while clipping against seed {j}"
                )));
            }
        }
        cells.push(dedup_vertices(poly, eps));
    }
    Ok(cells)
}

/// Sutherland-Hodgman clip of `poly` against the half-plane of points closer
/// to `si` than to `sj`, tracking the source of every resulting edge.
fn clip_half_plane<T: Scalar>(
    poly: &[ClipVertex<T>],
    si: Vec2<T>,
    sj: Vec2<T>,
    j: usize,
    eps: T,
) -> Vec<ClipVertex<T>> {
    let mid = (si + sj).scaled(T::lit(0.5));
    let dir = (sj - si).normalized();
    let signed = |p: Vec2<T>| (p - mid).dot(dir);

    let mut out = Vec::with_capacity(poly.len() + 2);
    let n = poly.len();
    for k in 0..n {
        let v0 = poly[k];
        let v1 = poly[(k + 1) % n];
        let d0 = signed(v0.pos);
        let d1 = signed(v1.pos);
        let in0 = d0 <= eps;
        let in1 = d1 <= eps;
        if in0 {
            out.push(v0);
        }
        if in0 != in1 {
            let t = d0 / (d0 - d1);
            let p = v0.pos + (v1.pos - v0.pos).scaled(t);
            if in0 {
                // Leaving the half-plane: the new edge runs along the bisector.
                out.push(ClipVertex { pos: p, source: EdgeSource::Neighbor(j) });
            } else {
                // Entering: the remainder of the original edge survives.
                out.push(ClipVertex { pos: p, source: v0.source });
            }
        }
    }
    out
}

fn dedup_vertices<T: Scalar>(poly: Vec<ClipVertex<T>>, eps: T) -> Vec<ClipVertex<T>> {
    let mut out: Vec<ClipVertex<T>> = Vec::with_capacity(poly.len());
    for v in poly {
        if let Some(last) = out.last() {
            if last.pos.dist(v.pos) <= eps {
                continue;
            }
        }
        out.push(v);
    }
    while out.len() >= 2 && out[out.len() - 1].pos.dist(out[0].pos) <= eps {
        out.pop();
    }
    out
}

fn collect_faces<T: Scalar>(
    seeds: &[Vec2<T>],
    cells: &[Vec<ClipVertex<T>>],
    lx: T,
    ly: T,
    faults: &[Segment<T>],
    eps: T,
) -> Vec<Face<T>> {
    let mut faces = Vec::new();
    for (i, poly) in cells.iter().enumerate() {
        let n = poly.len();
        for k in 0..n {
            let v0 = poly[k].pos;
            let v1 = poly[(k + 1) % n].pos;
            let seg = Segment::new(v0, v1);
            if seg.length() <= eps {
                continue;
            }
            match poly[k].source {
                EdgeSource::Neighbor(j) => {
                    if i < j {
                        let normal = (seeds[j] - seeds[i]).normalized();
                        faces.push(make_face(i, Some(j), seg, normal, faults, eps));
                    }
                }
                EdgeSource::Boundary(side) => {
                    let normal = match side {
                        0 => Vec2::new(T::zero(), -T::one()),
                        1 => Vec2::new(T::one(), T::zero()),
                        2 => Vec2::new(T::zero(), T::one()),
                        _ => Vec2::new(-T::one(), T::zero()),
                    };
                    faces.push(make_face(i, None, seg, normal, faults, eps));
                }
            }
        }
    }
    let _ = (lx, ly);
    faces
}

fn make_face<T: Scalar>(
    left: usize,
    right: Option<usize>,
    seg: Segment<T>,
    normal: Vec2<T>,
    faults: &[Segment<T>],
    eps: T,
) -> Face<T> {
    let fault = faults.iter().any(|f| geom::segments_intersect(&seg, f, eps));
    Face {
        left,
        right,
        area: seg.length(),
        center: seg.midpoint(),
        normal,
        fault,
        segment: seg,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: f64, y: f64) -> Vec2<f64> {
        Vec2::new(x, y)
    }

    fn no_refine(seeds: &[Vec2<f64>], faults: &[Segment<f64>]) -> Mesh<f64> {
        build_voronoi_mesh(seeds, 1.0, 1.0, faults, v(0.5, 0.51), 0.0, 1.0).unwrap()
    }

    #[test]
    fn four_symmetric_seeds_make_equal_quarters() {
        let seeds = [v(0.25, 0.25), v(0.75, 0.25), v(0.25, 0.75), v(0.75, 0.75)];
        let mesh = no_refine(&seeds, &[]);
        assert_eq!(mesh.n_cells(), 4);
        for c in &mesh.cells {
            assert!((c.volume - 0.25).abs() < 1e-12);
        }
        assert!((mesh.total_volume() - 1.0).abs() < 1e-12);
        mesh.validate().unwrap();
    }

    #[test]
    fn volumes_tile_the_domain() {
        // Deterministic scattered seeds.
        let mut seeds = Vec::new();
        for i in 0..7 {
            for j in 0..5 {
                let x = (i as f64 + 0.5 + 0.21 * ((i * 5 + j) as f64).sin()) / 7.0;
                let y = (j as f64 + 0.5 + 0.17 * ((i * 3 + j) as f64).cos()) / 5.0;
                seeds.push(v(x, y));
            }
        }
        let mesh = no_refine(&seeds, &[]);
        assert_eq!(mesh.n_cells(), seeds.len());
        assert!((mesh.total_volume() - 1.0).abs() < 1e-9);
        mesh.validate().unwrap();
    }

    #[test]
    fn fault_crossing_box_flags_faces() {
        let seeds = [v(0.25, 0.25), v(0.75, 0.25), v(0.25, 0.75), v(0.75, 0.75)];
        let fault = Segment::new(v(-0.1, 0.5), v(1.1, 0.5));
        let mesh = build_voronoi_mesh(&seeds, 1.0, 1.0, &[fault], v(0.5, 0.25), 0.0, 1.0).unwrap();
        assert!(mesh.faces.iter().any(|f| f.fault));
        mesh.validate().unwrap();
    }

    #[test]
    fn duplicate_seeds_rejected_with_indices() {
        let seeds = [v(0.3, 0.3), v(0.3, 0.3), v(0.7, 0.7)];
        let err = build_voronoi_mesh(&seeds, 1.0, 1.0, &[], v(0.5, 0.5), 0.0, 1.0).unwrap_err();
        match err {
            MeshError::MeshingFailure(msg) => assert!(msg.contains("0") && msg.contains("1")),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn refinement_adds_cells_near_well() {
        let mut seeds = Vec::new();
        for i in 0..6 {
            for j in 0..6 {
                seeds.push(v((i as f64 + 0.5) / 6.0, (j as f64 + 0.5) / 6.0));
            }
        }
        let coarse = build_voronoi_mesh(&seeds, 1.0, 1.0, &[], v(0.5, 0.5), 0.0, 1.0).unwrap();
        let fine = build_voronoi_mesh(&seeds, 1.0, 1.0, &[], v(0.5, 0.5), 0.2, 4.0).unwrap();
        assert!(fine.n_cells() > coarse.n_cells());
        assert!((fine.total_volume() - 1.0).abs() < 1e-9);
        fine.validate().unwrap();
    }

    #[test]
    fn mirrored_seeds_align_faces_with_fault() {
        let mut seeds = Vec::new();
        for i in 0..8 {
            for j in 0..8 {
                let x = (i as f64 + 0.5 + 0.23 * ((3 * i + j) as f64).sin()) / 8.0;
                let y = (j as f64 + 0.5 + 0.19 * ((i + 2 * j) as f64).cos()) / 8.0;
                seeds.push(v(x, y));
            }
        }
        let fault = Segment::new(v(0.2, 0.2), v(0.8, 0.8));
        let mesh = build_voronoi_mesh(&seeds, 1.0, 1.0, &[fault], v(0.5, 0.25), 0.0, 1.0).unwrap();
        // Sealing invariant: at least one flagged face, and mirrored seeds keep
        // the tiling exact.
        assert!(mesh.faces.iter().any(|f| f.fault));
        assert!((mesh.total_volume() - 1.0).abs() < 1e-9);
        mesh.validate().unwrap();
        assert!(mesh.n_cells() > seeds.len(), "mirror seeds should add cells");
    }

    #[test]
    fn seed_outside_domain_rejected() {
        let seeds = [v(0.5, 0.5), v(1.5, 0.5)];
        assert!(matches!(
            build_voronoi_mesh(&seeds, 1.0, 1.0, &[], v(0.5, 0.5), 0.0, 1.0),
            Err(MeshError::InvalidArgument(_))
        ));
    }
}
