//! Desk-scale immiscible two-phase incompressible flow solver.
//!
//! Sequential IMPES scheme on TPFA transmissibilities: one implicit pressure
//! solve per report step (total mobility, upstream-weighted), then explicit
//! single-point-upstream saturation transport with internal CFL sub-steps.
//! Gravity and capillarity are neglected. Boundary-type cells act as a
//! constant-pressure brine aquifer: their pressure and (zero) gas saturation
//! are held fixed, and gas flowing into them is tallied as boundary outflux.

mod pressure;
mod transport;

pub use pressure::{solve_pressure, PressureOptions};
pub use transport::{advance_saturation, BalanceReport};

use crate::geomodel::{CellType, GeoModel};
use crate::linalg::LinalgError;
use crate::mesh::{Mesh, TransmissibilityMap};
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SECONDS_PER_DAY: f64 = 86_400.0;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("ill-posed problem: {0}")]
    IllPosed(String),
    #[error("numerical blowup: non-finite flux at face {face}")]
    Blowup { face: usize },
    #[error("linear solver: {0}")]
    Linalg(#[from] LinalgError),
    #[error("invalid input: {0}")]
    Invalid(String),
}

/// Constant fluid properties of the gas and aqueous phases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluidProps<T> {
    /// Gas density, kg/m^3.
    pub rho_gas: T,
    /// Aqueous density, kg/m^3.
    pub rho_aq: T,
    /// Gas viscosity, Pa s.
    pub mu_gas: T,
    /// Aqueous viscosity, Pa s.
    pub mu_aq: T,
    /// Residual aqueous saturation.
    pub s_aq_min: T,
    /// Maximum gas saturation.
    pub s_gas_max: T,
    /// Gas relative permeability endpoint.
    pub krg_end: T,
}

impl<T: Scalar> Default for FluidProps<T> {
    fn default() -> Self {
        FluidProps {
            rho_gas: T::lit(700.0),
            rho_aq: T::lit(1000.0),
            mu_gas: T::lit(6e-5),
            mu_aq: T::lit(5e-4),
            s_aq_min: T::lit(0.2),
            s_gas_max: T::lit(0.8),
            krg_end: T::lit(0.95),
        }
    }
}

impl<T: Scalar> FluidProps<T> {
    pub fn validate(&self) -> Result<(), SimError> {
        let ok = self.rho_gas > T::zero()
            && self.rho_aq > T::zero()
            && self.mu_gas > T::zero()
            && self.mu_aq > T::zero()
            && self.s_aq_min >= T::zero()
            && self.s_aq_min < T::one()
            && self.s_gas_max > T::zero()
            && self.s_gas_max <= T::one() - self.s_aq_min;
        if ok {
            Ok(())
        } else {
            Err(SimError::Invalid("fluid properties violate invariants".into()))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Gas,
    Aqueous,
}

/// Brooks-Corey relative permeability. Out-of-range saturations are clamped
/// to the physical endpoints, so there is no error path.
pub fn relperm<T: Scalar>(phase: Phase, s_gas: T, props: &FluidProps<T>) -> T {
    match phase {
        Phase::Gas => {
            let s = s_gas.max(T::zero()).min(props.s_gas_max);
            let ratio = s / props.s_gas_max;
            props.krg_end * ratio * ratio
        }
        Phase::Aqueous => {
            let s_aq = (T::one() - s_gas).max(props.s_aq_min).min(T::one());
            let ratio = (s_aq - props.s_aq_min) / (T::one() - props.s_aq_min);
            ratio.powi(6)
        }
    }
}

/// Total mobility `k_rg / mu_g + k_ra / mu_a` at a given gas saturation.
pub fn total_mobility<T: Scalar>(s_gas: T, props: &FluidProps<T>) -> T {
    relperm(Phase::Gas, s_gas, props) / props.mu_gas
        + relperm(Phase::Aqueous, s_gas, props) / props.mu_aq
}

/// Per-cell pressure (Pa) and gas saturation at a time `t` (s).
#[derive(Debug, Clone, PartialEq)]
pub struct SimState<T> {
    pub pressure: Vec<T>,
    pub sat_gas: Vec<T>,
    pub time: T,
}

/// Injection and reporting controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule<T> {
    /// Gas injection mass rate, kg/s.
    pub rate_kg_s: T,
    /// Report interval, days.
    pub report_interval_days: T,
    /// Number of report steps (snapshots after the initial state).
    pub n_report_steps: usize,
    /// Dirichlet pressure on boundary-type cells; also the initial pressure.
    pub boundary_pressure: T,
}

impl<T: Scalar> Default for Schedule<T> {
    fn default() -> Self {
        Schedule {
            rate_kg_s: T::lit(0.058),
            report_interval_days: T::lit(50.0),
            n_report_steps: 19,
            boundary_pressure: T::lit(10e6),
        }
    }
}

impl<T: Scalar> Schedule<T> {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.rate_kg_s < T::zero() || self.report_interval_days <= T::zero() {
            return Err(SimError::Invalid("schedule rate must be >= 0 and interval > 0".into()));
        }
        Ok(())
    }
}

/// Snapshots (initial state first) plus the per-report-step volume ledger.
#[derive(Debug, Clone)]
pub struct SimulationRun<T> {
    pub states: Vec<SimState<T>>,
    pub balance: Vec<BalanceReport<T>>,
}

/// Runs the full IMPES simulation: pressure is re-solved once per report
/// step (with one upwind fixed-point refresh), then saturation advances over
/// the interval with CFL-limited sub-steps.
pub fn run_simulation<T: Scalar>(
    mesh: &Mesh<T>,
    trans: &TransmissibilityMap<T>,
    geo: &GeoModel<T>,
    props: &FluidProps<T>,
    schedule: &Schedule<T>,
) -> Result<SimulationRun<T>, SimError> {
    props.validate()?;
    schedule.validate()?;
    geo.validate(mesh).map_err(|e| SimError::Invalid(e.to_string()))?;

    let n = mesh.n_cells();
    let dirichlet: Vec<(usize, T)> = geo
        .cell_types
        .iter()
        .enumerate()
        .filter(|(_, &t)| t == CellType::Boundary)
        .map(|(i, _)| (i, schedule.boundary_pressure))
        .collect();
    let q_vol = schedule.rate_kg_s / props.rho_gas;
    let well = (geo.well_cell, q_vol);
    let dt = schedule.report_interval_days * T::lit(SECONDS_PER_DAY);
    let opts = PressureOptions::default();

    let mut state = SimState {
        pressure: vec![schedule.boundary_pressure; n],
        sat_gas: vec![T::zero(); n],
        time: T::zero(),
    };
    let mut states = vec![state.clone()];
    let mut balance = Vec::with_capacity(schedule.n_report_steps);

    for _ in 0..schedule.n_report_steps {
        // Upwind directions come from the previous pressure iterate; one
        // fixed-point refresh keeps donors consistent with the new field.
        let p1 = solve_pressure(mesh, trans, &state.sat_gas, &state.pressure, &dirichlet, Some(well), props, &opts)?;
        let p2 = solve_pressure(mesh, trans, &state.sat_gas, &p1, &dirichlet, Some(well), props, &opts)?;
        state.pressure = p2;

        let (sat, report) = advance_saturation(
            mesh,
            trans,
            &state,
            props,
            dt,
            Some(well),
            &dirichlet,
            &geo.porosity,
        )?;
        state.sat_gas = sat;
        state.time = state.time + dt;
        states.push(state.clone());
        balance.push(report);
    }
    Ok(SimulationRun { states, balance })
}
