//! Implicit pressure solve of the total-mobility TPFA system.

use super::{total_mobility, FluidProps, SimError};
use crate::linalg::{pcg, Csr};
use crate::mesh::{Mesh, TransmissibilityMap};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy)]
pub struct PressureOptions {
    /// Relative residual tolerance of the conjugate-gradient solve.
    pub tol: f64,
    /// Iteration cap as a multiple of the unknown count.
    pub max_iter_factor: usize,
}

impl Default for PressureOptions {
    fn default() -> Self {
        PressureOptions { tol: 1e-10, max_iter_factor: 40 }
    }
}

/// Solves `sum_j T_ij lambda_ij (p_i - p_j) = q_i` for cell pressures.
///
/// Face mobilities are upstream-weighted using `upwind_pressure` (previous
/// iterate or time level); exact ties average the two cell mobilities.
/// Dirichlet cells are eliminated, leaving a symmetric positive-definite
/// system solved by Jacobi-preconditioned conjugate gradients warm-started
/// from the upwind pressure field.
#[allow(clippy::too_many_arguments)]
pub fn solve_pressure<T: Scalar>(
    mesh: &Mesh<T>,
    trans: &TransmissibilityMap<T>,
    sat_gas: &[T],
    upwind_pressure: &[T],
    dirichlet: &[(usize, T)],
    well: Option<(usize, T)>,
    props: &FluidProps<T>,
    opts: &PressureOptions,
) -> Result<Vec<T>, SimError> {
    let n = mesh.n_cells();
    assert_eq!(sat_gas.len(), n);
    assert_eq!(upwind_pressure.len(), n);

    if dirichlet.is_empty() {
        let net: T = well.map(|(_, q)| q).unwrap_or(T::zero());
        return Err(SimError::IllPosed(if net == T::zero() {
            "no Dirichlet cells and zero net source: pressure defined only up to a constant".into()
        } else {
            "no Dirichlet cells: incompressible source has no outlet".into()
        }));
    }

    let mut fixed = vec![None; n];
    for &(cell, p) in dirichlet {
        assert!(cell < n, "Dirichlet cell out of range");
        fixed[cell] = Some(p);
    }
    // Unknown numbering skips Dirichlet cells.
    let mut index = vec![usize::MAX; n];
    let mut cells_of_unknown = Vec::new();
    for i in 0..n {
        if fixed[i].is_none() {
            index[i] = cells_of_unknown.len();
            cells_of_unknown.push(i);
        }
    }
    let m = cells_of_unknown.len();
    if m == 0 {
        return Ok((0..n).map(|i| fixed[i].unwrap()).collect());
    }

    let mut triplets: Vec<(usize, usize, T)> = Vec::new();
    let mut rhs = vec![T::zero(); m];
    for (fi, face) in mesh.faces.iter().enumerate() {
        let Some(right) = face.right else { continue };
        let t = trans.value(fi);
        if t == T::zero() {
            continue;
        }
        let (i, j) = (face.left, right);
        let lam = upwind_total_mobility(upwind_pressure, sat_gas, i, j, props);
        let w = t * lam;
        match (fixed[i], fixed[j]) {
            (None, None) => {
                let (ui, uj) = (index[i], index[j]);
                triplets.push((ui, ui, w));
                triplets.push((uj, uj, w));
                triplets.push((ui, uj, -w));
                triplets.push((uj, ui, -w));
            }
            (None, Some(pj)) => {
                let ui = index[i];
                triplets.push((ui, ui, w));
                rhs[ui] = rhs[ui] + w * pj;
            }
            (Some(pi), None) => {
                let uj = index[j];
                triplets.push((uj, uj, w));
                rhs[uj] = rhs[uj] + w * pi;
            }
            (Some(_), Some(_)) => {}
        }
    }
    if let Some((cell, q)) = well {
        assert!(cell < n, "well cell out of range");
        if fixed[cell].is_none() {
            rhs[index[cell]] = rhs[index[cell]] + q;
        }
    }

    let a = Csr::from_triplets(m, m, &triplets);
    let guess: Vec<T> = cells_of_unknown.iter().map(|&c| upwind_pressure[c]).collect();
    let sol = pcg(&a, &rhs, Some(&guess), opts.tol, opts.max_iter_factor * m + 100)?;

    let mut out = vec![T::zero(); n];
    for i in 0..n {
        out[i] = match fixed[i] {
            Some(p) => p,
            None => sol[index[i]],
        };
    }
    Ok(out)
}

fn upwind_total_mobility<T: Scalar>(
    pressure: &[T],
    sat_gas: &[T],
    i: usize,
    j: usize,
    props: &FluidProps<T>,
) -> T {
    if pressure[i] > pressure[j] {
        total_mobility(sat_gas[i], props)
    } else if pressure[j] > pressure[i] {
        total_mobility(sat_gas[j], props)
    } else {
        (total_mobility(sat_gas[i], props) + total_mobility(sat_gas[j], props)) * T::lit(0.5)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_cartesian_mesh, compute_transmissibilities};

    #[test]
    fn one_dimensional_dirichlet_profile_is_linear() {
        let n = 50;
        let mesh = build_cartesian_mesh::<f64>(n, 1, n as f64, 1.0).unwrap();
        let trans = compute_transmissibilities(&mesh, &vec![1.0; n]).unwrap();
        let props = FluidProps::default();
        let sat = vec![0.0; n];
        let p_prev = vec![0.0; n];
        let dirichlet = [(0usize, 1.0), (n - 1, 0.0)];
        let p = solve_pressure(
            &mesh,
            &trans,
            &sat,
            &p_prev,
            &dirichlet,
            None,
            &props,
            &PressureOptions::default(),
        )
        .unwrap();
        // Exact TPFA solution on a uniform chain with cell-centered Dirichlet
        // anchors: linear in the centroid coordinate between the end cells.
        let x0 = mesh.cells[0].centroid.x;
        let x1 = mesh.cells[n - 1].centroid.x;
        for i in 0..n {
            let xi = mesh.cells[i].centroid.x;
            let expect = 1.0 + (0.0 - 1.0) * (xi - x0) / (x1 - x0);
            assert!(
                (p[i] - expect).abs() <= 1e-10 * 1.0,
                "cell {i}: {} vs {expect}",
                p[i]
            );
        }
    }

    #[test]
    fn uniform_dirichlet_gives_constant_field() {
        let mesh = build_cartesian_mesh::<f64>(6, 6, 6.0, 6.0).unwrap();
        let trans = compute_transmissibilities(&mesh, &vec![1.0; 36]).unwrap();
        let props = FluidProps::default();
        let sat = vec![0.0; 36];
        let p_prev = vec![7.5; 36];
        let dirichlet: Vec<(usize, f64)> = (0..6).map(|i| (i, 7.5)).collect();
        let p = solve_pressure(
            &mesh,
            &trans,
            &sat,
            &p_prev,
            &dirichlet,
            None,
            &props,
            &PressureOptions::default(),
        )
        .unwrap();
        // Warm start at the exact constant solution keeps it bit-identical.
        assert!(p.iter().all(|&v| v == 7.5));
    }

    #[test]
    fn sealed_fault_decouples_subdomains() {
        // 4x1 chain with a sealing fault between cells 1 and 2; well on the
        // left side, Dirichlet anchor on the right side only.
        let mesh = build_cartesian_mesh::<f64>(4, 1, 4.0, 1.0).unwrap();
        let mut trans = compute_transmissibilities(&mesh, &vec![1.0; 4]).unwrap();
        let seal = mesh
            .faces
            .iter()
            .position(|f| f.is_interior() && f.left == 1 && f.right == Some(2))
            .unwrap();
        trans.values[seal] = 0.0;
        let props = FluidProps::default();
        let sat = vec![0.0; 4];
        let p_prev = vec![5.0; 4];
        // Left side has the well but also its own Dirichlet anchor at cell 0;
        // the right side is anchored at cell 3 with no source: it must stay
        // at its boundary value exactly.
        let dirichlet = [(0usize, 5.0), (3usize, 5.0)];
        let p = solve_pressure(
            &mesh,
            &trans,
            &sat,
            &p_prev,
            &dirichlet,
            Some((0, 0.0)),
            &props,
            &PressureOptions::default(),
        )
        .unwrap();
        assert_eq!(p[2], 5.0);
        assert_eq!(p[3], 5.0);
    }

    #[test]
    fn no_dirichlet_is_ill_posed() {
        let mesh = build_cartesian_mesh::<f64>(3, 1, 3.0, 1.0).unwrap();
        let trans = compute_transmissibilities(&mesh, &vec![1.0; 3]).unwrap();
        let props = FluidProps::default();
        let err = solve_pressure(
            &mesh,
            &trans,
            &[0.0; 3],
            &[0.0; 3],
            &[],
            None,
            &props,
            &PressureOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, SimError::IllPosed(_)));
    }
}
