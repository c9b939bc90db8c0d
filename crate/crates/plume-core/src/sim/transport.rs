//! Explicit upstream-weighted saturation transport with CFL sub-stepping.

use super::{relperm, FluidProps, Phase, SimError, SimState};
use crate::mesh::{Mesh, TransmissibilityMap};
use crate::scalar::Scalar;

/// Volume ledger of one report step, in m^3 of gas at reservoir conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BalanceReport<T> {
    /// `sum_i phi V_i (s_i^new - s_i^old)` over non-Dirichlet cells.
    pub storage_change: T,
    pub injected: T,
    pub boundary_outflux: T,
    /// Volume discarded by the safety clamp; zero on well-posed runs.
    pub clamped: T,
}

impl<T: Scalar> BalanceReport<T> {
    /// `|storage - (injected - outflux)|` relative to the step throughput.
    pub fn relative_error(&self) -> T {
        let rhs = self.injected - self.boundary_outflux;
        let denom = self.injected.abs().max(rhs.abs()).max(T::lit(1e-30));
        ((self.storage_change - rhs) / denom).abs()
    }
}

/// Advances gas saturation by `dt` seconds under the frozen pressure field in
/// `state`, sub-stepping at CFL number 0.5. Dirichlet cells keep `s_g = 0`;
/// gas entering them leaves the system as boundary outflux. Saturations are
/// clamped to `[0, s_gas_max]` as a safety net (the clamp stays inactive
/// under the CFL limit); any clamped volume is reported.
#[allow(clippy::too_many_arguments)]
pub fn advance_saturation<T: Scalar>(
    mesh: &Mesh<T>,
    trans: &TransmissibilityMap<T>,
    state: &SimState<T>,
    props: &FluidProps<T>,
    dt: T,
    well: Option<(usize, T)>,
    dirichlet: &[(usize, T)],
    porosity: &[T],
) -> Result<(Vec<T>, BalanceReport<T>), SimError> {
    let n = mesh.n_cells();
    assert_eq!(state.sat_gas.len(), n);
    assert_eq!(porosity.len(), n);
    let pressure = &state.pressure;

    let mut is_dirichlet = vec![false; n];
    for &(c, _) in dirichlet {
        is_dirichlet[c] = true;
    }

    // Conducting interior faces with their frozen pressure drops.
    let mut active: Vec<(usize, usize, usize, T)> = Vec::new(); // (face, i, j, t*dp)
    for (fi, face) in mesh.faces.iter().enumerate() {
        let Some(right) = face.right else { continue };
        let t = trans.value(fi);
        if t == T::zero() {
            continue;
        }
        let dp = pressure[face.left] - pressure[right];
        let tdp = t * dp;
        if !tdp.is_finite() {
            return Err(SimError::Blowup { face: fi });
        }
        active.push((fi, face.left, right, tdp));
    }

    let pore_volume: Vec<T> = (0..n).map(|i| porosity[i] * mesh.cells[i].volume).collect();

    // CFL bound from the gas-mobility derivative: d(k_rg)/ds <= 2 krg_end / s_gmax.
    let dlam_max = T::lit(2.0) * props.krg_end / (props.s_gas_max * props.mu_gas);
    let mut outflow_bound = vec![T::zero(); n];
    for &(_, i, j, tdp) in &active {
        let mag = tdp.abs() * dlam_max;
        outflow_bound[i] = outflow_bound[i] + mag;
        outflow_bound[j] = outflow_bound[j] + mag;
    }
    if let Some((cell, q)) = well {
        outflow_bound[cell] = outflow_bound[cell] + q.abs() / props.s_gas_max;
    }
    let mut dt_sub = dt;
    for i in 0..n {
        if outflow_bound[i] > T::zero() {
            dt_sub = dt_sub.min(T::lit(0.5) * pore_volume[i] / outflow_bound[i]);
        }
    }

    let mut sat = state.sat_gas.to_vec();
    let sat_start = sat.clone();
    let mut injected = T::zero();
    let mut outflux = T::zero();
    let mut clamped = T::zero();
    let mut net = vec![T::zero(); n];

    let mut remaining = dt;
    while remaining > T::zero() {
        let step = remaining.min(dt_sub);
        net.fill(T::zero());
        for &(fi, i, j, tdp) in &active {
            // Donor cell sits on the high-pressure side.
            let donor = if tdp >= T::zero() { i } else { j };
            let flux = tdp * relperm(Phase::Gas, sat[donor], props) / props.mu_gas;
            if !flux.is_finite() {
                return Err(SimError::Blowup { face: fi });
            }
            net[i] = net[i] - flux;
            net[j] = net[j] + flux;
        }
        if let Some((cell, q)) = well {
            net[cell] = net[cell] + q;
            injected = injected + q * step;
        }
        for i in 0..n {
            if is_dirichlet[i] {
                // Constant-pressure brine cells absorb incoming gas.
                outflux = outflux + net[i] * step;
                continue;
            }
            let ds = step * net[i] / pore_volume[i];
            let mut s_new = sat[i] + ds;
            if s_new < T::zero() {
                clamped = clamped + (T::zero() - s_new) * pore_volume[i];
                s_new = T::zero();
            } else if s_new > props.s_gas_max {
                clamped = clamped + (s_new - props.s_gas_max) * pore_volume[i];
                s_new = props.s_gas_max;
            }
            sat[i] = s_new;
        }
        remaining = remaining - step;
    }

    let mut storage = T::zero();
    for i in 0..n {
        if !is_dirichlet[i] {
            storage = storage + pore_volume[i] * (sat[i] - sat_start[i]);
        }
    }
    Ok((
        sat,
        BalanceReport { storage_change: storage, injected, boundary_outflux: outflux, clamped },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geomodel::assign_cell_types;
    use crate::geomodel::CellType;
    use crate::geomodel::GeoModel;
    use crate::mesh::{build_cartesian_mesh, compute_transmissibilities};
    use crate::sim::{run_simulation, Schedule};

    #[test]
    fn zero_gradient_leaves_saturation_unchanged() {
        let mesh = build_cartesian_mesh::<f64>(3, 1, 3.0, 1.0).unwrap();
        let trans = compute_transmissibilities(&mesh, &vec![1.0; 3]).unwrap();
        let props = FluidProps::default();
        let state = SimState { pressure: vec![4.0; 3], sat_gas: vec![0.3, 0.1, 0.0], time: 0.0 };
        let (sat, report) =
            advance_saturation(&mesh, &trans, &state, &props, 100.0, None, &[], &vec![0.2; 3])
                .unwrap();
        assert_eq!(sat, state.sat_gas);
        assert_eq!(report.storage_change, 0.0);
    }

    #[test]
    fn injection_bookkeeping_before_intercell_flow() {
        // Inject exactly 0.1 * phi * V of gas into cell 0 of a sealed 2-cell
        // mesh with a flat pressure field: s rises by 0.1 and the face stays
        // blocked because k_rg(0) = 0 on the neighbor side.
        let mesh = build_cartesian_mesh::<f64>(2, 1, 2.0, 1.0).unwrap();
        let trans = compute_transmissibilities(&mesh, &vec![1.0; 2]).unwrap();
        let props = FluidProps::default();
        let pv = 0.2 * mesh.cells[0].volume;
        let q = 1e-3;
        let dt = 0.1 * pv / q;
        let state = SimState { pressure: vec![1.0, 1.0], sat_gas: vec![0.0, 0.0], time: 0.0 };
        let (sat, report) = advance_saturation(
            &mesh,
            &trans,
            &state,
            &props,
            dt,
            Some((0, q)),
            &[],
            &vec![0.2; 2],
        )
        .unwrap();
        assert!((sat[0] - 0.1).abs() < 1e-13);
        assert_eq!(sat[1], 0.0);
        assert!(report.relative_error() < 1e-12);
        assert_eq!(report.clamped, 0.0);
    }

    #[test]
    fn volume_balance_on_2d_run() {
        let mesh = build_cartesian_mesh::<f64>(8, 8, 1000.0, 1000.0).unwrap();
        let n = mesh.n_cells();
        let well_cell = 27;
        let geo = GeoModel {
            perm: (0..n).map(|i| 5e-14 * (1.0 + 0.5 * ((i * 7 % 13) as f64 / 13.0))).collect(),
            porosity: vec![0.2; n],
            well_cell,
            cell_types: assign_cell_types(&mesh, well_cell).unwrap(),
        };
        let trans = compute_transmissibilities(&mesh, &geo.perm).unwrap();
        let schedule = Schedule { n_report_steps: 6, ..Schedule::default() };
        let run = run_simulation(&mesh, &trans, &geo, &FluidProps::default(), &schedule).unwrap();
        for report in &run.balance {
            assert!(report.relative_error() < 1e-10, "balance error {}", report.relative_error());
            assert_eq!(report.clamped, 0.0);
        }
        // Gas actually moved.
        let last = run.states.last().unwrap();
        assert!(last.sat_gas[well_cell] > 0.01);
        // Saturation bounds hold everywhere.
        for s in &run.states {
            assert!(s.sat_gas.iter().all(|&v| (0.0..=0.8).contains(&v)));
        }
    }

    #[test]
    fn sealed_fault_keeps_other_side_dry() {
        // Vertical fault sealing the mesh into left/right halves; the well
        // sits on the left, so the right half must stay at s_g = 0 exactly.
        let mesh = build_cartesian_mesh::<f64>(6, 4, 600.0, 400.0).unwrap();
        let n = mesh.n_cells();
        let mut trans = compute_transmissibilities(&mesh, &vec![5e-14; n]).unwrap();
        for (fi, face) in mesh.faces.iter().enumerate() {
            if let Some(right) = face.right {
                let li = face.left % 6;
                let ri = right % 6;
                if (li == 2 && ri == 3) || (li == 3 && ri == 2) {
                    trans.values[fi] = 0.0;
                }
            }
        }
        let well_cell = 1;
        let mut cell_types = assign_cell_types(&mesh, well_cell).unwrap();
        // Keep Dirichlet anchors on both sides so the pressure stays well-posed.
        for t in cell_types.iter_mut() {
            if *t == CellType::FaultAdjacent {
                *t = CellType::Interior;
            }
        }
        let geo = GeoModel {
            perm: vec![5e-14; n],
            porosity: vec![0.2; n],
            well_cell,
            cell_types,
        };
        let schedule = Schedule { n_report_steps: 5, ..Schedule::default() };
        let run = run_simulation(&mesh, &trans, &geo, &FluidProps::default(), &schedule).unwrap();
        for state in &run.states {
            for (i, &s) in state.sat_gas.iter().enumerate() {
                if i % 6 >= 3 {
                    assert_eq!(s, 0.0, "cell {i} across the fault got wet");
                }
            }
        }
    }
}
