//! Semi-implicit time stepping of the cell model.
//!
//! Diffusion operators are implicit (backward Euler on the finite-volume
//! system); interfacial fluxes, the electrolyte diffusivity and the plating
//! split are taken from the algebraic solve at the start of each substep.

use serde::{Deserialize, Serialize};

use crate::degradation::{advance_sei_layer, sei_parabolic_constant};
use crate::error::{Error, Result};
use crate::grid::SpatialGrid;
use crate::model::{
    axial_transmissibilities, check_bounds, electrolyte_source, radial_transmissibilities,
    solve_potentials, state_of_charge, surface_flux, CellOutputs, CellState, Potentials,
};
use crate::params::{CellParameters, Electrode, SECONDS_PER_HOUR};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StepConfig {
    /// Internal substep (s).
    pub dt: f64,
    pub max_substeps: usize,
    pub newton_tol: f64,
    pub max_newton_iters: usize,
}

impl Default for StepConfig {
    fn default() -> Self {
        Self {
            dt: 1.0,
            max_substeps: 100_000,
            newton_tol: 1e-10,
            max_newton_iters: 50,
        }
    }
}

impl StepConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::config("step.dt", format!("must be positive, got {}", self.dt)));
        }
        if !(self.newton_tol > 0.0) {
            return Err(Error::config("step.newton_tol", format!("must be positive, got {}", self.newton_tol)));
        }
        if self.max_substeps == 0 {
            return Err(Error::config("step.max_substeps", "must be at least 1"));
        }
        if self.max_newton_iters == 0 {
            return Err(Error::config("step.max_newton_iters", "must be at least 1"));
        }
        Ok(())
    }

    /// Number of equal substeps covering `dt`.
    pub fn substeps(&self, dt: f64) -> usize {
        ((dt / self.dt).ceil() as usize).clamp(1, self.max_substeps)
    }
}

/// Solves a tridiagonal system in place. `lower[0]` and `upper[n-1]` are ignored.
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &mut [f64]) {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut b = diag[0];
    c[0] = upper[0] / b;
    rhs[0] /= b;
    for i in 1..n {
        b = diag[i] - lower[i] * c[i - 1];
        if i + 1 < n {
            c[i] = upper[i] / b;
        }
        rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / b;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= c[i] * rhs[i + 1];
    }
}

/// Backward-Euler update of `volumes * dc/dt = Σ T (Δc) + source`.
fn implicit_diffusion(c: &mut [f64], volumes: &[f64], trans: &[f64], source: &[f64], h: f64) {
    let n = c.len();
    let mut lower = vec![0.0; n];
    let mut upper = vec![0.0; n];
    let mut diag = volumes.to_vec();
    for i in 0..n - 1 {
        let t = h * trans[i];
        diag[i] += t;
        diag[i + 1] += t;
        upper[i] = -t;
        lower[i + 1] = -t;
    }
    for i in 0..n {
        c[i] = volumes[i] * c[i] + h * source[i];
    }
    solve_tridiagonal(&lower, &diag, &upper, c);
}

fn solid_update(c: &mut [f64], e: Electrode, flux: f64, h: f64, params: &CellParameters, grid: &SpatialGrid) {
    let g = grid.radial(e);
    let trans = radial_transmissibilities(g, params.solid_diffusivity(e));
    let mut source = vec![0.0; c.len()];
    source[c.len() - 1] = g.radius * g.radius * flux;
    implicit_diffusion(c, &g.shell_volumes, &trans, &source, h);
}

fn electrolyte_update(c: &mut [f64], current: f64, h: f64, params: &CellParameters, grid: &SpatialGrid) {
    let x = &grid.x;
    let trans = axial_transmissibilities(c, params, grid);
    let volumes: Vec<f64> = (0..x.len()).map(|i| params.porosity(x.regions[i]) * x.widths[i]).collect();
    let source: Vec<f64> = (0..x.len())
        .map(|i| electrolyte_source(x.regions[i], current, params) * x.widths[i])
        .collect();
    implicit_diffusion(c, &volumes, &trans, &source, h);
}

fn substep(
    state: &CellState,
    pot: &Potentials,
    current: f64,
    h: f64,
    params: &CellParameters,
    grid: &SpatialGrid,
) -> CellState {
    let deg = &params.degradation;
    let mut next = state.clone();
    let a_n = params.a_neg();

    let mut j_sei = 0.0;
    let mut n_li = 0.0;
    if deg.enabled {
        let k = sei_parabolic_constant(params.temperature, params);
        next.l_inner = advance_sei_layer(state.l_inner, k, h);
        next.l_outer = advance_sei_layer(state.l_outer, k, h);
        let grown = (next.l_inner - state.l_inner) + (next.l_outer - state.l_outer);
        j_sei = deg.sei_li_ratio * grown / (deg.v_bar_sei * h);
        next.sei_lithium += j_sei * h * params.interfacial_area(Electrode::Negative);

        // stripping cannot return more lithium than is plated
        n_li = pot.n_li.min(state.c_li / (a_n * h));
        let gamma = deg.gamma(state.sei_thickness());
        next.c_li = ((state.c_li - h * a_n * n_li) / (1.0 + gamma * h)).max(0.0);
        next.c_dli = state.c_dli + h * gamma * next.c_li;
    }

    let j_int = pot.j_tot - j_sei + n_li;
    solid_update(&mut next.c_s_neg, Electrode::Negative, j_int, h, params, grid);
    let j_pos = surface_flux(current, Electrode::Positive, params);
    solid_update(&mut next.c_s_pos, Electrode::Positive, j_pos, h, params, grid);
    electrolyte_update(&mut next.c_e, current, h, params, grid);

    let ah = current.abs() * h / SECONDS_PER_HOUR;
    next.ah_throughput += ah;
    if current < 0.0 {
        next.ah_discharged += ah;
    }
    next.t_now += h;
    next
}

pub(crate) fn outputs_from(
    state: &CellState,
    pot: &Potentials,
    current: f64,
    params: &CellParameters,
    grid: &SpatialGrid,
) -> CellOutputs {
    CellOutputs {
        t: state.t_now,
        current,
        voltage: pot.voltage,
        ocv: pot.ocv,
        soc: state_of_charge(state, params, grid),
        soh: crate::degradation::state_of_health(&state.ledger),
        eta_side: pot.eta_side,
        eta_sei: pot.eta_sei,
        eta_neg: pot.eta_neg,
        eta_pos: pot.eta_pos,
        delta_phi_e: pot.delta_phi_e,
        c_ss_neg: pot.c_ss_neg,
        c_ss_pos: pot.c_ss_pos,
        phi_sn: pot.phi_sn,
        phi_en: pot.phi_en,
        plating_flux: pot.n_li,
        l_sei: state.sei_thickness(),
        c_dli: state.c_dli,
        overflow_clamped: pot.overflow_clamped,
    }
}

/// Advances `state` by `dt` seconds at constant `current` (A, positive charges).
pub fn step(
    state: &CellState,
    current: f64,
    dt: f64,
    params: &CellParameters,
    grid: &SpatialGrid,
    cfg: &StepConfig,
) -> Result<(CellState, CellOutputs)> {
    step_with_start(state, None, current, dt, params, grid, cfg).map(|(s, o, _)| (s, o))
}

/// [`step`] that can reuse an algebraic solution already computed for `state`
/// at the same current, and also returns the end-of-step solution.
pub(crate) fn step_with_start(
    state: &CellState,
    start: Option<Potentials>,
    current: f64,
    dt: f64,
    params: &CellParameters,
    grid: &SpatialGrid,
    cfg: &StepConfig,
) -> Result<(CellState, CellOutputs, Potentials)> {
    if !(dt > 0.0) {
        return Err(Error::config("dt", format!("step length must be positive, got {dt}")));
    }
    let n = cfg.substeps(dt);
    let h = dt / n as f64;
    let mut pot = match start {
        Some(p) => p,
        None => solve_potentials(state, current, params, grid, cfg)?,
    };
    let mut s = substep(state, &pot, current, h, params, grid);
    check_bounds(&s, params)?;
    for _ in 1..n {
        pot = solve_potentials(&s, current, params, grid, cfg)?;
        s = substep(&s, &pot, current, h, params, grid);
        check_bounds(&s, params)?;
    }
    let (sei, plating) = s.capacity_losses(params);
    s.ledger.record_losses(sei, plating);
    let end = solve_potentials(&s, current, params, grid, cfg)?;
    let out = outputs_from(&s, &end, current, params, grid);
    Ok((s, out, end))
}

/// Lithium conservation defect (mol) between two states separated by `dt`
/// seconds at `current`: the sum of the absolute defects of the negative
/// ledger (particles, metal, SEI), the positive particles and the dissolved salt.
pub fn check_mass_balance(
    before: &CellState,
    after: &CellState,
    current: f64,
    dt: f64,
    params: &CellParameters,
    grid: &SpatialGrid,
) -> f64 {
    let passed = current * dt / params.faraday;
    let neg = after.negative_inventory(params, grid) - before.negative_inventory(params, grid) - passed;
    let pos = after.solid_lithium(Electrode::Positive, params, grid)
        - before.solid_lithium(Electrode::Positive, params, grid)
        + passed;
    let salt = after.electrolyte_salt(params, grid) - before.electrolyte_salt(params, grid);
    neg.abs() + pos.abs() + salt.abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, GridResolution};

    #[test]
    fn thomas_matches_dense_solution() {
        let lower = [0.0, -1.0, -2.0, 0.5];
        let diag = [4.0, 5.0, 6.0, 3.0];
        let upper = [1.0, -1.0, 2.0, 0.0];
        let x = [1.0, -2.0, 0.5, 3.0];
        let mut rhs: Vec<f64> = (0..4)
            .map(|i| {
                let mut v = diag[i] * x[i];
                if i > 0 {
                    v += lower[i] * x[i - 1];
                }
                if i < 3 {
                    v += upper[i] * x[i + 1];
                }
                v
            })
            .collect();
        solve_tridiagonal(&lower, &diag, &upper, &mut rhs);
        for i in 0..4 {
            assert!((rhs[i] - x[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_current_uniform_state_is_fixed_point() {
        let p = CellParameters::lg_m50().without_degradation();
        let g = build_grid(&p, GridResolution::default()).unwrap();
        let s = CellState::fresh(&p, &g, 0.4);
        let (n, _) = step(&s, 0.0, 20.0, &p, &g, &StepConfig::default()).unwrap();
        for (a, b) in n.c_s_neg.iter().zip(&s.c_s_neg) {
            assert!((a - b).abs() <= 1e-12 * b);
        }
        for (a, b) in n.c_e.iter().zip(&s.c_e) {
            assert!((a - b).abs() <= 1e-12 * b);
        }
    }

    #[test]
    fn substep_count() {
        let c = StepConfig::default();
        assert_eq!(c.substeps(20.0), 20);
        assert_eq!(c.substeps(0.5), 1);
        assert_eq!(c.substeps(2.5), 3);
        assert!(StepConfig { dt: 0.0, ..c }.validate().is_err());
        assert!(StepConfig { newton_tol: 0.0, ..c }.validate().is_err());
    }

    #[test]
    fn charging_step_conserves_lithium() {
        let p = CellParameters::lg_m50().with_aging_factor(100.0);
        let g = build_grid(&p, GridResolution::default()).unwrap();
        let s = CellState::fresh(&p, &g, 0.3);
        let total = s.total_lithium(&p, &g);
        let (n, out) = step(&s, 10.0, 20.0, &p, &g, &StepConfig::default()).unwrap();
        let r = check_mass_balance(&s, &n, 10.0, 20.0, &p, &g);
        assert!(r < 1e-8 * total, "{r}");
        assert!(out.voltage > out.ocv);
        assert!(n.l_inner > s.l_inner);
    }
}
