//! Mesh serialization: a plain-text interchange format and legacy-VTK export.
//!
//! # Text format
//!
//! ```text
//! plume-mesh 1
//! extent <lx> <ly>
//! faults <count>            # one "x1 y1 x2 y2" line per fault segment
//! vertices <count>          # one "x y" line per vertex
//! cells <count>             # one "n v0 v1 ... v{n-1}" ccw loop per cell
//! faces <count>             # one face per line:
//!                           # left right fault ax ay bx by nx ny
//!                           # right = -1 on the boundary, fault = 0|1
//! ```
//!
//! Floats are written with 17 significant digits so `f64` meshes round-trip
//! exactly. Cell centroids and volumes are recomputed on load.

use super::geom::{polygon_area, polygon_centroid, Segment, Vec2};
use super::{Cell, Face, Mesh, MeshError};
use crate::scalar::Scalar;
use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};

fn fmt<T: Scalar>(v: T) -> String {
    format!("{:.17e}", v.to_f64().unwrap())
}

/// Writes the mesh in the plain-text format.
pub fn write_mesh_text<T: Scalar, W: Write>(mesh: &Mesh<T>, out: &mut W) -> Result<(), MeshError> {
    // Deduplicated vertex table keyed on quantized coordinates.
    let eps = mesh.tolerance().to_f64().unwrap().max(f64::MIN_POSITIVE);
    let quant = |v: Vec2<T>| {
        (
            (v.x.to_f64().unwrap() / eps).round() as i64,
            (v.y.to_f64().unwrap() / eps).round() as i64,
        )
    };
    let mut table: HashMap<(i64, i64), usize> = HashMap::new();
    let mut vertices: Vec<Vec2<T>> = Vec::new();
    let mut loops: Vec<Vec<usize>> = Vec::with_capacity(mesh.cells.len());
    for cell in &mesh.cells {
        let mut ids = Vec::with_capacity(cell.vertices.len());
        for &v in &cell.vertices {
            let key = quant(v);
            let id = *table.entry(key).or_insert_with(|| {
                vertices.push(v);
                vertices.len() - 1
            });
            ids.push(id);
        }
        loops.push(ids);
    }

    writeln!(out, "plume-mesh 1")?;
    writeln!(out, "extent {} {}", fmt(mesh.extent.x), fmt(mesh.extent.y))?;
    writeln!(out, "faults {}", mesh.fault_segments.len())?;
    for s in &mesh.fault_segments {
        writeln!(out, "{} {} {} {}", fmt(s.a.x), fmt(s.a.y), fmt(s.b.x), fmt(s.b.y))?;
    }
    writeln!(out, "vertices {}", vertices.len())?;
    for v in &vertices {
        writeln!(out, "{} {}", fmt(v.x), fmt(v.y))?;
    }
    writeln!(out, "cells {}", mesh.cells.len())?;
    for ids in &loops {
        let mut line = format!("{}", ids.len());
        for id in ids {
            line.push_str(&format!(" {id}"));
        }
        writeln!(out, "{line}")?;
    }
    writeln!(out, "faces {}", mesh.faces.len())?;
    for f in &mesh.faces {
        let right = f.right.map(|r| r as i64).unwrap_or(-1);
        writeln!(
            out,
            "{} {} {} {} {} {} {} {} {}",
            f.left,
            right,
            u8::from(f.fault),
            fmt(f.segment.a.x),
            fmt(f.segment.a.y),
            fmt(f.segment.b.x),
            fmt(f.segment.b.y),
            fmt(f.normal.x),
            fmt(f.normal.y),
        )?;
    }
    Ok(())
}

struct LineReader<R> {
    inner: std::io::Lines<BufReader<R>>,
    line_no: usize,
}

impl<R: Read> LineReader<R> {
    fn next_line(&mut self) -> Result<String, MeshError> {
        loop {
            self.line_no += 1;
            match self.inner.next() {
                Some(Ok(line)) => {
                    let trimmed = line.split('#').next().unwrap_or("").trim().to_string();
                    if !trimmed.is_empty() {
                        return Ok(trimmed);
                    }
                }
                Some(Err(e)) => return Err(MeshError::Io(e)),
                None => {
                    return Err(MeshError::Parse { line: self.line_no, reason: "unexpected end of file".into() })
                }
            }
        }
    }

    fn err(&self, reason: impl Into<String>) -> MeshError {
        MeshError::Parse { line: self.line_no, reason: reason.into() }
    }
}

/// Reads a mesh from the plain-text format.
pub fn read_mesh_text<T: Scalar, R: Read>(input: R) -> Result<Mesh<T>, MeshError> {
    let mut rd = LineReader { inner: BufReader::new(input).lines(), line_no: 0 };

    let header = rd.next_line()?;
    if header != "plume-mesh 1" {
        return Err(rd.err(format!("bad header {header:?}")));
    }

    let parse_f = |rd: &LineReader<R>, tok: &str| -> Result<T, MeshError> {
        tok.parse::<f64>()
            .map(T::lit)
            .map_err(|e| rd.err(format!("bad float {tok:?}: {e}")))
    };
    let section = |rd: &mut LineReader<R>, name: &str| -> Result<usize, MeshError> {
        let line = rd.next_line()?;
        let mut it = line.split_whitespace();
        let key = it.next().unwrap_or("");
        if key != name {
            return Err(rd.err(format!("expected section {name:?}, found {key:?}")));
        }
        it.next()
            .ok_or_else(|| rd.err("missing count"))?
            .parse::<usize>()
            .map_err(|e| rd.err(format!("bad count: {e}")))
    };

    let extent_line = rd.next_line()?;
    let toks: Vec<&str> = extent_line.split_whitespace().collect();
    if toks.len() != 3 || toks[0] != "extent" {
        return Err(rd.err("expected `extent <lx> <ly>`"));
    }
    let extent = Vec2::new(parse_f(&rd, toks[1])?, parse_f(&rd, toks[2])?);

    let n_faults = section(&mut rd, "faults")?;
    let mut fault_segments = Vec::with_capacity(n_faults);
    for _ in 0..n_faults {
        let line = rd.next_line()?;
        let t: Vec<&str> = line.split_whitespace().collect();
        if t.len() != 4 {
            return Err(rd.err("fault line needs 4 floats"));
        }
        fault_segments.push(Segment::new(
            Vec2::new(parse_f(&rd, t[0])?, parse_f(&rd, t[1])?),
            Vec2::new(parse_f(&rd, t[2])?, parse_f(&rd, t[3])?),
        ));
    }

    let n_vertices = section(&mut rd, "vertices")?;
    let mut vertices = Vec::with_capacity(n_vertices);
    for _ in 0..n_vertices {
        let line = rd.next_line()?;
        let t: Vec<&str> = line.split_whitespace().collect();
        if t.len() != 2 {
            return Err(rd.err("vertex line needs 2 floats"));
        }
        vertices.push(Vec2::new(parse_f(&rd, t[0])?, parse_f(&rd, t[1])?));
    }

    let n_cells = section(&mut rd, "cells")?;
    let mut cells = Vec::with_capacity(n_cells);
    for _ in 0..n_cells {
        let line = rd.next_line()?;
        let mut it = line.split_whitespace();
        let n: usize = it
            .next()
            .ok_or_else(|| rd.err("missing vertex count"))?
            .parse()
            .map_err(|e| rd.err(format!("bad vertex count: {e}")))?;
        let mut loop_vertices = Vec::with_capacity(n);
        for _ in 0..n {
            let id: usize = it
                .next()
                .ok_or_else(|| rd.err("missing vertex id"))?
                .parse()
                .map_err(|e| rd.err(format!("bad vertex id: {e}")))?;
            if id >= vertices.len() {
                return Err(rd.err(format!("vertex id {id} out of range")));
            }
            loop_vertices.push(vertices[id]);
        }
        cells.push(Cell {
            centroid: polygon_centroid(&loop_vertices),
            volume: polygon_area(&loop_vertices),
            vertices: loop_vertices,
        });
    }

    let n_faces = section(&mut rd, "faces")?;
    let mut faces = Vec::with_capacity(n_faces);
    for _ in 0..n_faces {
        let line = rd.next_line()?;
        let t: Vec<&str> = line.split_whitespace().collect();
        if t.len() != 9 {
            return Err(rd.err("face line needs 9 fields"));
        }
        let left: usize = t[0].parse().map_err(|e| rd.err(format!("bad left cell: {e}")))?;
        let right_raw: i64 = t[1].parse().map_err(|e| rd.err(format!("bad right cell: {e}")))?;
        let right = if right_raw < 0 { None } else { Some(right_raw as usize) };
        let fault = match t[2] {
            "0" => false,
            "1" => true,
            other => return Err(rd.err(format!("bad fault flag {other:?}"))),
        };
        let seg = Segment::new(
            Vec2::new(parse_f(&rd, t[3])?, parse_f(&rd, t[4])?),
            Vec2::new(parse_f(&rd, t[5])?, parse_f(&rd, t[6])?),
        );
        let normal = Vec2::new(parse_f(&rd, t[7])?, parse_f(&rd, t[8])?);
        if left >= n_cells || right.map(|r| r >= n_cells).unwrap_or(false) {
            return Err(rd.err("face references missing cell"));
        }
        faces.push(Face {
            left,
            right,
            area: seg.length(),
            center: seg.midpoint(),
            normal,
            fault,
            segment: seg,
        });
    }

    Ok(Mesh { cells, faces, fault_segments, extent })
}

/// Writes the mesh and optional per-cell scalar fields as a legacy-VTK
/// unstructured grid (polygon cells), readable by ParaView and VisIt.
pub fn write_vtk<T: Scalar, W: Write>(
    mesh: &Mesh<T>,
    fields: &[(&str, &[T])],
    title: &str,
    out: &mut W,
) -> Result<(), MeshError> {
    let eps = mesh.tolerance().to_f64().unwrap().max(f64::MIN_POSITIVE);
    let quant = |v: Vec2<T>| {
        (
            (v.x.to_f64().unwrap() / eps).round() as i64,
            (v.y.to_f64().unwrap() / eps).round() as i64,
        )
    };
    let mut table: HashMap<(i64, i64), usize> = HashMap::new();
    let mut points: Vec<Vec2<T>> = Vec::new();
    let mut loops: Vec<Vec<usize>> = Vec::with_capacity(mesh.cells.len());
    for cell in &mesh.cells {
        let ids = cell
            .vertices
            .iter()
            .map(|&v| {
                *table.entry(quant(v)).or_insert_with(|| {
                    points.push(v);
                    points.len() - 1
                })
            })
            .collect();
        loops.push(ids);
    }

    writeln!(out, "# vtk DataFile Version 2.0")?;
    writeln!(out, "{title}")?;
    writeln!(out, "ASCII")?;
    writeln!(out, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(out, "POINTS {} double", points.len())?;
    for p in &points {
        writeln!(out, "{} {} 0.0", fmt(p.x), fmt(p.y))?;
    }
    let list_size: usize = loops.iter().map(|l| l.len() + 1).sum();
    writeln!(out, "CELLS {} {}", loops.len(), list_size)?;
    for ids in &loops {
        let mut line = format!("{}", ids.len());
        for id in ids {
            line.push_str(&format!(" {id}"));
        }
        writeln!(out, "{line}")?;
    }
    writeln!(out, "CELL_TYPES {}", loops.len())?;
    for _ in &loops {
        writeln!(out, "7")?; // VTK_POLYGON
    }
    if !fields.is_empty() {
        writeln!(out, "CELL_DATA {}", mesh.cells.len())?;
        for (name, values) in fields {
            assert_eq!(values.len(), mesh.cells.len(), "field {name} length mismatch");
            writeln!(out, "SCALARS {name} double 1")?;
            writeln!(out, "LOOKUP_TABLE default")?;
            for v in values.iter() {
                writeln!(out, "{}", fmt(*v))?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_cartesian_mesh, build_voronoi_mesh};

    #[test]
    fn text_round_trip_cartesian() {
        let mesh = build_cartesian_mesh::<f64>(3, 2, 3.0, 2.0).unwrap();
        let mut buf = Vec::new();
        write_mesh_text(&mesh, &mut buf).unwrap();
        let back: Mesh<f64> = read_mesh_text(&buf[..]).unwrap();
        assert_eq!(back.n_cells(), mesh.n_cells());
        assert_eq!(back.n_faces(), mesh.n_faces());
        for (a, b) in mesh.cells.iter().zip(&back.cells) {
            assert!((a.volume - b.volume).abs() < 1e-14);
            assert!(a.centroid.dist(b.centroid) < 1e-14);
        }
        for (a, b) in mesh.faces.iter().zip(&back.faces) {
            assert_eq!(a.left, b.left);
            assert_eq!(a.right, b.right);
            assert_eq!(a.fault, b.fault);
            assert!((a.area - b.area).abs() < 1e-14);
        }
    }

    #[test]
    fn text_round_trip_voronoi_with_fault() {
        let seeds = [
            Vec2::new(0.2, 0.3),
            Vec2::new(0.8, 0.2),
            Vec2::new(0.5, 0.7),
            Vec2::new(0.3, 0.9),
        ];
        let fault = Segment::new(Vec2::new(0.1, 0.1), Vec2::new(0.9, 0.9));
        let mesh =
            build_voronoi_mesh(&seeds, 1.0, 1.0, &[fault], Vec2::new(0.5, 0.4), 0.0, 1.0).unwrap();
        let mut buf = Vec::new();
        write_mesh_text(&mesh, &mut buf).unwrap();
        let back: Mesh<f64> = read_mesh_text(&buf[..]).unwrap();
        back.validate().unwrap();
        assert_eq!(back.fault_segments.len(), 1);
        assert_eq!(
            back.faces.iter().filter(|f| f.fault).count(),
            mesh.faces.iter().filter(|f| f.fault).count()
        );
    }

    #[test]
    fn vtk_export_has_expected_sections() {
        let mesh = build_cartesian_mesh::<f64>(2, 2, 1.0, 1.0).unwrap();
        let field: Vec<f64> = vec![0.0, 1.0, 2.0, 3.0];
        let mut buf = Vec::new();
        write_vtk(&mesh, &[("pressure", &field)], "test", &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("DATASET UNSTRUCTURED_GRID"));
        assert!(text.contains("CELLS 4"));
        assert!(text.contains("SCALARS pressure double 1"));
    }

    #[test]
    fn truncated_input_reports_line() {
        let text = "plume-mesh 1\nextent 1.0 1.0\nfaults 0\nvertices 1\n";
        let err = read_mesh_text::<f64, _>(text.as_bytes()).unwrap_err();
        assert!(matches!(err, MeshError::Parse { .. }));
    }
}
