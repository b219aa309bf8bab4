//! Single particle model with electrolyte: state, right-hand sides, kinetics,
//! potentials and terminal voltage.
//!
//! Positive current charges the cell. Fluxes into a particle are positive.

use crate::degradation::{
    self, irreversible_plating_guard, lithium_to_ah, side_reaction_overpotential, SohLedger,
};
use crate::error::{Error, Result};
use crate::grid::{RadialGrid, SpatialGrid};
use crate::numerics::StepConfig;
use crate::params::{CellParameters, Electrode, PlatingMode, Region};

/// Below this electrolyte concentration (mol/m3) the log terms are clamped and
/// the model is considered out of its range.
pub const ELECTROLYTE_FLOOR: f64 = 1.0;

/// Negative-electrode stoichiometries bounding 0 % and 100 % state of charge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SocWindow {
    pub x_empty: f64,
    pub x_full: f64,
}

impl SocWindow {
    pub fn nominal(params: &CellParameters) -> Self {
        Self {
            x_empty: params.x_0,
            x_full: params.x_100,
        }
    }

    pub fn capacity_ah(&self, params: &CellParameters) -> f64 {
        (self.x_full - self.x_empty) * params.negative_capacity_ah()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellState {
    pub c_s_neg: Vec<f64>,
    pub c_s_pos: Vec<f64>,
    pub c_e: Vec<f64>,
    pub l_inner: f64,
    pub l_outer: f64,
    /// Plated lithium per unit negative-electrode volume (mol/m3).
    pub c_li: f64,
    /// Dead lithium per unit negative-electrode volume (mol/m3).
    pub c_dli: f64,
    /// Lithium bound in SEI grown since the start of the simulation (mol).
    pub sei_lithium: f64,
    /// Cumulative |I| dt (Ah).
    pub ah_throughput: f64,
    /// Cumulative discharge throughput (Ah).
    pub ah_discharged: f64,
    pub t_now: f64,
    pub soc_window: SocWindow,
    pub ledger: SohLedger,
}

impl CellState {
    /// Uniform equilibrium state with the given stoichiometries.
    pub fn uniform(params: &CellParameters, grid: &SpatialGrid, x: f64, y: f64) -> Self {
        let window = SocWindow::nominal(params);
        Self {
            c_s_neg: vec![x * params.c_max_neg; grid.r_neg.len()],
            c_s_pos: vec![y * params.c_max_pos; grid.r_pos.len()],
            c_e: vec![params.c_e0; grid.x.len()],
            l_inner: params.degradation.l_inner_0,
            l_outer: params.degradation.l_outer_0,
            c_li: 0.0,
            c_dli: 0.0,
            sei_lithium: 0.0,
            ah_throughput: 0.0,
            ah_discharged: 0.0,
            t_now: 0.0,
            soc_window: window,
            ledger: SohLedger::new(window.capacity_ah(params)),
        }
    }

    /// Fresh cell at rest at the given state of charge, with its SoC window
    /// and reference capacity taken from the equilibrium capacity probe.
    pub fn fresh(params: &CellParameters, grid: &SpatialGrid, soc: f64) -> Self {
        let x = params.x_0 + soc * (params.x_100 - params.x_0);
        let y = params.y_0 + soc * (params.y_100 - params.y_0);
        let mut s = Self::uniform(params, grid, x, y);
        let window = equilibrium_window(&s, params, grid);
        s.soc_window = window;
        s.ledger = SohLedger::new(window.capacity_ah(params));
        s
    }

    pub fn mean_stoichiometry(&self, e: Electrode, params: &CellParameters, grid: &SpatialGrid) -> f64 {
        let field = match e {
            Electrode::Negative => &self.c_s_neg,
            Electrode::Positive => &self.c_s_pos,
        };
        grid.radial(e).average(field) / params.c_max(e)
    }

    /// Lithium held by the particles of one electrode (mol).
    pub fn solid_lithium(&self, e: Electrode, params: &CellParameters, grid: &SpatialGrid) -> f64 {
        self.mean_stoichiometry(e, params, grid) * params.c_max(e) * params.active_volume(e)
    }

    /// Plated plus dead lithium (mol).
    pub fn metallic_lithium(&self, params: &CellParameters) -> f64 {
        (self.c_li + self.c_dli) * params.l_neg * params.electrode_area
    }

    /// Everything on the negative side: particles, plated, dead and SEI-bound lithium (mol).
    pub fn negative_inventory(&self, params: &CellParameters, grid: &SpatialGrid) -> f64 {
        self.solid_lithium(Electrode::Negative, params, grid) + self.metallic_lithium(params) + self.sei_lithium
    }

    /// Dissolved salt (mol).
    pub fn electrolyte_salt(&self, params: &CellParameters, grid: &SpatialGrid) -> f64 {
        let s: f64 = (0..grid.x.len())
            .map(|i| params.porosity(grid.x.regions[i]) * grid.x.widths[i] * self.c_e[i])
            .sum();
        s * params.electrode_area
    }

    /// Total lithium in solids, metal, SEI and electrolyte (mol).
    pub fn total_lithium(&self, params: &CellParameters, grid: &SpatialGrid) -> f64 {
        self.negative_inventory(params, grid)
            + self.solid_lithium(Electrode::Positive, params, grid)
            + self.electrolyte_salt(params, grid)
    }

    pub fn sei_thickness(&self) -> f64 {
        self.l_inner + self.l_outer
    }

    /// Lithium-loss terms in Ah, split as (SEI, plating). Plated lithium counts
    /// as lost in irreversible mode, where it can never return to the particle.
    pub fn capacity_losses(&self, params: &CellParameters) -> (f64, f64) {
        let sei = lithium_to_ah(self.sei_lithium, params);
        let metal = match params.degradation.mode {
            PlatingMode::Irreversible => self.c_li + self.c_dli,
            PlatingMode::Reversible => self.c_dli,
        };
        (sei, degradation::plating_capacity_loss(metal, params))
    }

    pub fn validate(&self, params: &CellParameters, grid: &SpatialGrid) -> Result<()> {
        if self.c_s_neg.len() != grid.r_neg.len()
            || self.c_s_pos.len() != grid.r_pos.len()
            || self.c_e.len() != grid.x.len()
        {
            return Err(Error::param("state", "field lengths do not match the grid"));
        }
        check_bounds(self, params)
    }
}

pub(crate) fn check_bounds(s: &CellState, params: &CellParameters) -> Result<()> {
    let bad = |what, value| Err(Error::PhysicalBoundViolation { what, value });
    for &c in &s.c_s_neg {
        if !(c >= 0.0 && c <= params.c_max_neg) {
            return bad("negative particle concentration", c);
        }
    }
    for &c in &s.c_s_pos {
        if !(c >= 0.0 && c <= params.c_max_pos) {
            return bad("positive particle concentration", c);
        }
    }
    for &c in &s.c_e {
        if !(c >= ELECTROLYTE_FLOOR) {
            return bad("electrolyte concentration", c);
        }
    }
    if !(s.l_inner > 0.0 && s.l_outer > 0.0) {
        return bad("SEI thickness", s.l_inner.min(s.l_outer));
    }
    if !(s.c_li >= 0.0) {
        return bad("plated lithium", s.c_li);
    }
    if !(s.c_dli >= 0.0) {
        return bad("dead lithium", s.c_dli);
    }
    Ok(())
}

/// Measured quantities at the end of a step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CellOutputs {
    pub t: f64,
    pub current: f64,
    pub voltage: f64,
    pub ocv: f64,
    pub soc: f64,
    pub soh: f64,
    pub eta_side: f64,
    pub eta_sei: f64,
    pub eta_neg: f64,
    pub eta_pos: f64,
    pub delta_phi_e: f64,
    pub c_ss_neg: f64,
    pub c_ss_pos: f64,
    pub phi_sn: f64,
    pub phi_en: f64,
    /// Stripping flux (mol/(m2 s)); negative while plating.
    pub plating_flux: f64,
    pub l_sei: f64,
    pub c_dli: f64,
    pub overflow_clamped: bool,
}

impl CellOutputs {
    pub fn plating_favorable(&self) -> bool {
        self.eta_side < 0.0
    }
}

/// Applied current density (A/m2).
pub fn current_density(current: f64, params: &CellParameters) -> f64 {
    current / params.electrode_area
}

/// Molar flux into the particles of an electrode produced by `current` (A) of
/// intercalation current, in mol/(m2 s).
pub fn surface_flux(current: f64, e: Electrode, params: &CellParameters) -> f64 {
    let i = current_density(current, params);
    let per_area = params.faraday * params.surface_area_density(e) * params.thickness(e);
    match e {
        Electrode::Negative => i / per_area,
        Electrode::Positive => -i / per_area,
    }
}

/// Inverse of [`surface_flux`] for the negative electrode.
pub fn negative_flux_to_current(j: f64, params: &CellParameters) -> f64 {
    j * params.faraday * params.a_neg() * params.l_neg * params.electrode_area
}

/// `D r_face^2 / Δr` between neighbouring shells.
pub(crate) fn radial_transmissibilities(g: &RadialGrid, d: f64) -> Vec<f64> {
    (0..g.len() - 1)
        .map(|i| d * g.faces[i + 1].powi(2) / (g.centers[i + 1] - g.centers[i]))
        .collect()
}

/// Surface concentration extrapolated from the outer shell with the imposed flux.
pub fn surface_concentration(c_s: &[f64], flux: f64, g: &RadialGrid, d: f64) -> f64 {
    let n = c_s.len();
    c_s[n - 1] + flux * (g.radius - g.centers[n - 1]) / d
}

pub fn solid_diffusion_rhs(
    c_s: &[f64],
    e: Electrode,
    current: f64,
    params: &CellParameters,
    grid: &SpatialGrid,
) -> Vec<f64> {
    let g = grid.radial(e);
    let t = radial_transmissibilities(g, params.solid_diffusivity(e));
    let n = c_s.len();
    let mut net = vec![0.0; n];
    for i in 0..n - 1 {
        let q = t[i] * (c_s[i + 1] - c_s[i]);
        net[i] += q;
        net[i + 1] -= q;
    }
    net[n - 1] += g.radius.powi(2) * surface_flux(current, e, params);
    net.iter().zip(&g.shell_volumes).map(|(q, v)| q / v).collect()
}

/// Face transmissibilities `1 / (w_i/(2 D_i) + w_{i+1}/(2 D_{i+1}))` with the
/// effective diffusivity evaluated at the cell concentrations.
pub(crate) fn axial_transmissibilities(c_e: &[f64], params: &CellParameters, grid: &SpatialGrid) -> Vec<f64> {
    let x = &grid.x;
    let d: Vec<f64> = (0..x.len())
        .map(|i| params.d_e_eff(c_e[i].max(ELECTROLYTE_FLOOR), x.regions[i]))
        .collect();
    (0..x.len() - 1)
        .map(|i| 1.0 / (0.5 * x.widths[i] / d[i] + 0.5 * x.widths[i + 1] / d[i + 1]))
        .collect()
}

/// Salt source per unit electrode volume (mol/(m3 s)).
pub fn electrolyte_source(region: Region, current: f64, params: &CellParameters) -> f64 {
    let i = current_density(current, params);
    let s = (1.0 - params.t_c) * i / params.faraday;
    match region {
        Region::Negative => -s / params.l_neg,
        Region::Separator => 0.0,
        Region::Positive => s / params.l_pos,
    }
}

pub fn electrolyte_diffusion_rhs(
    c_e: &[f64],
    current: f64,
    params: &CellParameters,
    grid: &SpatialGrid,
) -> Vec<f64> {
    let x = &grid.x;
    let t = axial_transmissibilities(c_e, params, grid);
    let n = c_e.len();
    let mut net: Vec<f64> = (0..n)
        .map(|i| electrolyte_source(x.regions[i], current, params) * x.widths[i])
        .collect();
    for i in 0..n - 1 {
        let q = t[i] * (c_e[i + 1] - c_e[i]);
        net[i] += q;
        net[i + 1] -= q;
    }
    (0..n)
        .map(|i| net[i] / (params.porosity(x.regions[i]) * x.widths[i]))
        .collect()
}

/// Butler–Volmer overpotential of one electrode carrying `current` (A) of
/// intercalation current.
pub fn reaction_overpotential(current: f64, e: Electrode, i0: f64, params: &CellParameters) -> Result<f64> {
    if !(i0 > 0.0) {
        return Err(Error::NonPositiveExchangeCurrent(i0));
    }
    let i = current_density(current, params);
    let arg = i / (2.0 * params.surface_area_density(e) * params.thickness(e) * i0);
    let signed = match e {
        Electrode::Negative => -arg,
        Electrode::Positive => arg,
    };
    Ok(params.thermal_voltage() / params.alpha * signed.asinh())
}

pub fn exchange_current(c_ss: f64, c_e_local: f64, e: Electrode, params: &CellParameters) -> Result<f64> {
    let c_max = params.c_max(e);
    if !(c_ss > 0.0 && c_ss < c_max) {
        return Err(Error::BoundViolation { value: c_ss, max: c_max });
    }
    Ok(params.rate_constant(e) * c_e_local.max(0.0).sqrt() * c_ss.sqrt() * (c_max - c_ss).sqrt())
}

/// `φ_e(L) − φ_e(0)` (V).
pub fn electrolyte_potential_drop(
    c_e: &[f64],
    current: f64,
    params: &CellParameters,
    _grid: &SpatialGrid,
) -> Result<f64> {
    let (c0, cl) = (c_e[0], c_e[c_e.len() - 1]);
    for c in [c0, cl] {
        if !(c > ELECTROLYTE_FLOOR) {
            return Err(Error::ClampFloorHit(c));
        }
    }
    let ohmic = (params.l_neg + 2.0 * params.l_sep + params.l_pos) / (2.0 * params.kappa)
        * current_density(current, params);
    let diffusion = 2.0 * params.thermal_voltage() * (1.0 - params.t_c) * params.k_f * (cl.ln() - c0.ln());
    Ok(ohmic + diffusion)
}

fn region_mean(field: &[f64], r: Region, grid: &SpatialGrid) -> f64 {
    let range = grid.x.region_range(r);
    let w = &grid.x.widths[range.clone()];
    let s: f64 = field[range].iter().zip(w).map(|(c, w)| c * w).sum();
    s / w.iter().sum::<f64>()
}

/// Solution of the algebraic part of the model at one state and current.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Potentials {
    pub voltage: f64,
    pub ocv: f64,
    pub u_neg: f64,
    pub u_pos: f64,
    pub eta_neg: f64,
    pub eta_pos: f64,
    pub eta_sei: f64,
    pub delta_phi_e: f64,
    pub phi_sn: f64,
    pub phi_en: f64,
    pub eta_side: f64,
    pub eta_stripping: f64,
    pub c_ss_neg: f64,
    pub c_ss_pos: f64,
    /// Total interfacial flux of the negative electrode (mol/(m2 s)).
    pub j_tot: f64,
    /// Intercalation part of the negative flux.
    pub j_int: f64,
    /// Instantaneous SEI lithium flux (mol/(m2 s)).
    pub j_sei: f64,
    /// Guarded stripping flux (mol/(m2 s)).
    pub n_li: f64,
    pub overflow_clamped: bool,
    pub iterations: usize,
}

struct Frame<'a> {
    state: &'a CellState,
    params: &'a CellParameters,
    grid: &'a SpatialGrid,
    j_tot: f64,
    j_sei: f64,
    eta_sei: f64,
    c_e_neg: f64,
}

enum Trial {
    Value(f64, Potentials),
    /// Flux drove the surface concentration out of range; the sign says which side.
    OutOfRange(f64),
}

impl Frame<'_> {
    fn evaluate(&self, n_li: f64) -> Result<Trial> {
        let p = self.params;
        let j_int = self.j_tot - self.j_sei + n_li;
        let c_ss = surface_concentration(&self.state.c_s_neg, j_int, &self.grid.r_neg, p.d_s_neg);
        if c_ss <= 0.0 {
            return Ok(Trial::OutOfRange(-1.0));
        }
        if c_ss >= p.c_max_neg {
            return Ok(Trial::OutOfRange(1.0));
        }
        let i0 = exchange_current(c_ss, self.c_e_neg, Electrode::Negative, p)?;
        let eta_n = reaction_overpotential(negative_flux_to_current(j_int, p), Electrode::Negative, i0, p)?;
        let u_n = p.ocp(Electrode::Negative, c_ss / p.c_max_neg);
        let eta_strip = eta_n + u_n;
        let (n_bv, clamped) = if p.degradation.enabled {
            let f = degradation::stripping_flux(self.state.c_li, self.c_e_neg, eta_strip, p.temperature, p);
            (irreversible_plating_guard(f.value, p.degradation.mode), f.overflow_clamped)
        } else {
            (0.0, false)
        };
        let phi_en = 0.0;
        let phi_sn = phi_en + eta_n + u_n + self.eta_sei;
        let pot = Potentials {
            u_neg: u_n,
            eta_neg: eta_n,
            eta_sei: self.eta_sei,
            phi_sn,
            phi_en,
            eta_side: side_reaction_overpotential(phi_sn, phi_en, p),
            eta_stripping: eta_strip,
            c_ss_neg: c_ss,
            j_tot: self.j_tot,
            j_int,
            j_sei: self.j_sei,
            n_li,
            overflow_clamped: clamped,
            ..Default::default()
        };
        Ok(Trial::Value(n_li - n_bv, pot))
    }
}

/// Solves the coupled intercalation/plating split at the negative electrode
/// and assembles every potential. The plating flux is the root of
/// `g(N) = N − N_BV(η_stripping(N))`, which is strictly increasing in `N`.
pub fn solve_potentials(
    state: &CellState,
    current: f64,
    params: &CellParameters,
    grid: &SpatialGrid,
    cfg: &StepConfig,
) -> Result<Potentials> {
    let deg = &params.degradation;
    let c_e_neg = region_mean(&state.c_e, Region::Negative, grid);
    let c_e_pos = region_mean(&state.c_e, Region::Positive, grid);
    let j_tot = surface_flux(current, Electrode::Negative, params);
    let (j_sei, eta_sei) = if deg.enabled {
        let (a, b) = degradation::sei_growth_rate(state.l_inner, state.l_outer, params.temperature, params)?;
        let j_vol = -current_density(current, params) / params.l_neg;
        (
            deg.sei_li_ratio * (a + b) / deg.v_bar_sei,
            degradation::sei_overpotential(state.l_inner, state.l_outer, j_vol, params),
        )
    } else {
        (0.0, 0.0)
    };
    let frame = Frame {
        state,
        params,
        grid,
        j_tot,
        j_sei,
        eta_sei,
        c_e_neg,
    };

    let (mut pot, iterations) = if deg.enabled {
        solve_plating(&frame, cfg)?
    } else {
        match frame.evaluate(0.0)? {
            Trial::Value(_, p) => (p, 0),
            Trial::OutOfRange(_) => {
                return Err(Error::BoundViolation {
                    value: surface_concentration(&state.c_s_neg, j_tot, &grid.r_neg, params.d_s_neg),
                    max: params.c_max_neg,
                })
            }
        }
    };
    pot.iterations = iterations;

    let j_pos = surface_flux(current, Electrode::Positive, params);
    let c_ss_pos = surface_concentration(&state.c_s_pos, j_pos, &grid.r_pos, params.d_s_pos);
    let i0_p = exchange_current(c_ss_pos, c_e_pos, Electrode::Positive, params)?;
    let eta_p = reaction_overpotential(current, Electrode::Positive, i0_p, params)?;
    let u_p = params.ocp(Electrode::Positive, c_ss_pos / params.c_max_pos);
    let d_phi_e = electrolyte_potential_drop(&state.c_e, current, params, grid)?;
    let film_p = params.r_f_pos * current_density(current, params)
        / (params.a_pos() * params.l_pos);
    let phi_sp = pot.phi_en + d_phi_e + u_p + eta_p + film_p;

    pot.u_pos = u_p;
    pot.eta_pos = eta_p;
    pot.c_ss_pos = c_ss_pos;
    pot.delta_phi_e = d_phi_e;
    pot.ocv = u_p - pot.u_neg;
    pot.voltage = phi_sp - pot.phi_sn;
    Ok(pot)
}

fn solve_plating(frame: &Frame, cfg: &StepConfig) -> Result<(Potentials, usize)> {
    let p = frame.params;
    let scale = frame.j_tot.abs()
        + frame.j_sei.abs()
        + p.degradation.k_li_eff() * (frame.c_e_neg + frame.state.c_li)
        + f64::MIN_POSITIVE;
    let g = |n: f64| -> Result<(f64, Option<Potentials>)> {
        Ok(match frame.evaluate(n)? {
            Trial::Value(v, pot) => (v, Some(pot)),
            Trial::OutOfRange(s) => (s * f64::INFINITY, None),
        })
    };

    let (g0, pot0) = g(0.0)?;
    // the residual is judged against the flux magnitudes at the trial point
    let done_at = |v: f64, n: f64| v.abs() <= cfg.newton_tol * (scale + n.abs());
    let done = |v: f64| done_at(v, 0.0);
    if let (true, Some(pot)) = (done(g0), pot0) {
        return Ok((pot, 0));
    }

    // bracket the root by doubling away from zero
    let mut width = scale;
    let (mut lo, mut hi) = (0.0, 0.0);
    let mut found = false;
    for _ in 0..200 {
        let probe = if g0 < 0.0 { width } else { -width };
        let (gp, _) = g(probe)?;
        if (g0 < 0.0 && gp >= 0.0) || (g0 > 0.0 && gp <= 0.0) {
            if g0 < 0.0 {
                hi = probe;
            } else {
                lo = probe;
            }
            found = true;
            break;
        }
        if g0 < 0.0 {
            lo = probe;
        } else {
            hi = probe;
        }
        width *= 2.0;
    }
    if !found {
        return Err(Error::NonConvergence {
            iterations: 0,
            residual: g0 / scale,
        });
    }

    // safeguarded Newton: fall back to bisection when a step leaves the bracket
    let mut n = 0.0;
    let mut gn = g0;
    if !gn.is_finite() {
        n = 0.5 * (lo + hi);
        gn = g(n)?.0;
    }
    for it in 1..=cfg.max_newton_iters {
        if gn < 0.0 {
            lo = n;
        } else {
            hi = n;
        }
        let delta = 1e-7 * scale;
        let (g_d, _) = g(n + delta)?;
        let slope = (g_d - gn) / delta;
        let mut next = n - gn / slope;
        if !(slope.is_finite() && slope > 0.0 && next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        n = next;
        let (value, pot) = g(n)?;
        gn = value;
        if let (true, Some(p)) = (done_at(gn, n), pot) {
            return Ok((p, it));
        }
        if hi - lo <= 1e-15 * scale + 4.0 * f64::EPSILON * lo.abs().max(hi.abs()) {
            if let Some(p) = pot {
                return Ok((p, it));
            }
        }
    }
    Err(Error::NonConvergence {
        iterations: cfg.max_newton_iters,
        residual: gn / scale,
    })
}

pub fn terminal_voltage(state: &CellState, current: f64, params: &CellParameters, grid: &SpatialGrid) -> Result<f64> {
    Ok(solve_potentials(state, current, params, grid, &StepConfig::default())?.voltage)
}

/// State of charge from the mean negative stoichiometry and the state's window,
/// clipped to [0, 1].
pub fn state_of_charge(state: &CellState, params: &CellParameters, grid: &SpatialGrid) -> f64 {
    let x = state.mean_stoichiometry(Electrode::Negative, params, grid);
    let w = state.soc_window;
    ((x - w.x_empty) / (w.x_full - w.x_empty)).clamp(0.0, 1.0)
}

/// Open-circuit voltage when the cyclable lithium `n_li` (mol) sits in the
/// particles with the negative electrode at stoichiometry `x`.
fn equilibrium_ocv(x: f64, n_li: f64, params: &CellParameters) -> f64 {
    let q_n = params.c_max_neg * params.active_volume(Electrode::Negative);
    let q_p = params.c_max_pos * params.active_volume(Electrode::Positive);
    let y = (n_li - x * q_n) / q_p;
    params.ocp(Electrode::Positive, y) - params.ocp(Electrode::Negative, x)
}

/// Negative stoichiometry window between the voltage limits at equilibrium
/// for the lithium currently held by the particles. The window never extends
/// past the fresh-cell stoichiometry limits.
pub fn equilibrium_window(state: &CellState, params: &CellParameters, grid: &SpatialGrid) -> SocWindow {
    let n_li = state.solid_lithium(Electrode::Negative, params, grid)
        + state.solid_lithium(Electrode::Positive, params, grid);
    let solve = |v: f64| {
        // OCV increases with x at fixed inventory
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if equilibrium_ocv(mid, n_li, params) < v {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let x_full = solve(params.v_max).min(params.x_100);
    let x_empty = solve(params.v_min).max(params.x_0).min(x_full);
    SocWindow { x_empty, x_full }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, GridResolution};

    fn setup() -> (CellParameters, SpatialGrid) {
        let p = CellParameters::lg_m50();
        let g = build_grid(&p, GridResolution::default()).unwrap();
        (p, g)
    }

    #[test]
    fn solid_rhs_zero_at_rest_and_sign_of_surface_rate() {
        let (p, g) = setup();
        let s = CellState::fresh(&p, &g, 0.5);
        let r = solid_diffusion_rhs(&s.c_s_neg, Electrode::Negative, 0.0, &p, &g);
        assert!(r.iter().all(|v| *v == 0.0));
        // charging pushes lithium into the negative particle
        let r = solid_diffusion_rhs(&s.c_s_neg, Electrode::Negative, 5.0, &p, &g);
        assert!(r[r.len() - 1] > 0.0);
        assert!(r[..r.len() - 1].iter().all(|v| *v == 0.0));
        let r = solid_diffusion_rhs(&s.c_s_pos, Electrode::Positive, 5.0, &p, &g);
        assert!(r[r.len() - 1] < 0.0);
    }

    #[test]
    fn solid_rhs_matches_steady_quadratic_profile() {
        // c = A r^2 is the pseudo-steady profile under a constant surface flux
        // J = 2 D A R; every shell then gains lithium at the uniform rate 6 D A.
        let (p, g) = setup();
        let rg = &g.r_neg;
        let d = p.d_s_neg;
        let a = 1e12;
        let c: Vec<f64> = rg.centers.iter().map(|r| 20000.0 + a * r * r).collect();
        let j = 2.0 * d * a * rg.radius;
        let current = negative_flux_to_current(j, &p);
        let rates = solid_diffusion_rhs(&c, Electrode::Negative, current, &p, &g);
        let exact = 6.0 * d * a;
        for r in &rates {
            assert!((r - exact).abs() / exact < 0.05, "{r} vs {exact}");
        }
        let avg: f64 = rates.iter().zip(&rg.shell_volumes).map(|(r, v)| r * v).sum::<f64>() / rg.total_volume();
        assert!((avg - exact).abs() / exact < 1e-9);
    }

    #[test]
    fn electrolyte_rhs_conserves_salt() {
        let (p, g) = setup();
        let s = CellState::fresh(&p, &g, 0.3);
        assert!(electrolyte_diffusion_rhs(&s.c_e, 0.0, &p, &g).iter().all(|v| *v == 0.0));
        let c: Vec<f64> = (0..g.x.len()).map(|i| 900.0 + 11.0 * i as f64).collect();
        for current in [-7.0, 0.0, 3.0, 10.0] {
            let r = electrolyte_diffusion_rhs(&c, current, &p, &g);
            let total: f64 = (0..g.x.len())
                .map(|i| p.porosity(g.x.regions[i]) * g.x.widths[i] * r[i])
                .sum();
            let scale: f64 = (0..g.x.len()).map(|i| g.x.widths[i] * r[i].abs()).sum();
            assert!(total.abs() <= 1e-12 * scale.max(1e-30), "{total}");
        }
    }

    #[test]
    fn kinetics_identities() {
        let (p, _) = setup();
        for e in [Electrode::Negative, Electrode::Positive] {
            assert_eq!(reaction_overpotential(0.0, e, 1.0, &p).unwrap(), 0.0);
            for i in [0.3, 5.0, 17.0] {
                let a = reaction_overpotential(i, e, 0.7, &p).unwrap();
                let b = reaction_overpotential(-i, e, 0.7, &p).unwrap();
                assert!((a + b).abs() <= 1e-12);
            }
        }
        assert!(reaction_overpotential(5.0, Electrode::Negative, 2.0, &p).unwrap() < 0.0);
        assert!(matches!(
            reaction_overpotential(1.0, Electrode::Positive, 0.0, &p),
            Err(Error::NonPositiveExchangeCurrent(_))
        ));
    }

    #[test]
    fn overpotential_scalar_value() {
        let (mut p, _) = setup();
        p.alpha = 0.5;
        p.temperature = 298.15;
        let e = Electrode::Positive;
        // choose the current that makes the asinh argument exactly one
        let i0 = 1.3;
        let current = 2.0 * p.a_pos() * p.l_pos * i0 * p.electrode_area;
        let eta = reaction_overpotential(current, e, i0, &p).unwrap();
        // RT/(αF) asinh(1), asinh(1) = ln(1 + √2)
        let expected = 2.0 * 8.314462618 * 298.15 / 96485.33212 * (1.0 + 2f64.sqrt()).ln();
        assert!((eta - expected).abs() < 1e-12);
        assert!((eta - 0.04529).abs() < 5e-5);
    }

    #[test]
    fn exchange_current_forms() {
        let (p, _) = setup();
        let e = Electrode::Negative;
        let half = p.c_max_neg / 2.0;
        let i0 = exchange_current(half, p.c_e0, e, &p).unwrap();
        assert!((i0 - p.k_neg * p.c_e0.sqrt() * half).abs() < 1e-12 * i0);
        let i2 = exchange_current(half, 2.0 * p.c_e0, e, &p).unwrap();
        assert!((i2 / i0 - 2f64.sqrt()).abs() < 1e-12);
        assert!(exchange_current(1e-9, p.c_e0, e, &p).unwrap() < 1e-3 * i0);
        assert!(matches!(exchange_current(0.0, p.c_e0, e, &p), Err(Error::BoundViolation { .. })));
        assert!(exchange_current(p.c_max_neg, p.c_e0, e, &p).is_err());
    }

    #[test]
    fn electrolyte_potential_terms() {
        let (p, g) = setup();
        let flat = vec![1000.0; g.x.len()];
        assert_eq!(electrolyte_potential_drop(&flat, 0.0, &p, &g).unwrap(), 0.0);
        let mut c = flat.clone();
        let n = c.len();
        c[n - 1] = 1000.0 * std::f64::consts::E;
        let d = electrolyte_potential_drop(&c, 0.0, &p, &g).unwrap();
        let expected = 2.0 * p.thermal_voltage() * (1.0 - p.t_c) * p.k_f;
        assert!((d - expected).abs() < 1e-14);
        let one_c = p.one_c();
        let d = electrolyte_potential_drop(&flat, one_c, &p, &g).unwrap();
        let ohmic = (p.l_neg + 2.0 * p.l_sep + p.l_pos) * one_c / p.electrode_area / (2.0 * p.kappa);
        assert!((d - ohmic).abs() <= 1e-12 * ohmic);
        c[0] = 1.0;
        assert!(matches!(electrolyte_potential_drop(&c, 0.0, &p, &g), Err(Error::ClampFloorHit(_))));
    }

    #[test]
    fn equilibrium_voltage_is_ocv_difference() {
        let (p, g) = setup();
        let p = p.without_degradation();
        let s = CellState::fresh(&p, &g, 0.5);
        let v = terminal_voltage(&s, 0.0, &p, &g).unwrap();
        let x = s.c_s_neg[0] / p.c_max_neg;
        let y = s.c_s_pos[0] / p.c_max_pos;
        let ocv = p.ocp(Electrode::Positive, y) - p.ocp(Electrode::Negative, x);
        assert!((v - ocv).abs() < 1e-12);
        assert!(terminal_voltage(&s, 5.0, &p, &g).unwrap() > v);
        assert!(terminal_voltage(&s, -5.0, &p, &g).unwrap() < v);
    }

    #[test]
    fn soc_linear_map() {
        let (p, g) = setup();
        let mut s = CellState::uniform(&p, &g, p.x_0, p.y_0);
        assert!(state_of_charge(&s, &p, &g).abs() < 1e-12);
        s.c_s_neg.fill(p.x_100 * p.c_max_neg);
        assert!((state_of_charge(&s, &p, &g) - 1.0).abs() < 1e-12);
        s.c_s_neg.fill(0.5 * (p.x_0 + p.x_100) * p.c_max_neg);
        assert!((state_of_charge(&s, &p, &g) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn fresh_window_close_to_nominal() {
        let (p, g) = setup();
        let s = CellState::fresh(&p, &g, 0.5);
        assert!((s.soc_window.x_full - p.x_100).abs() < 5e-3);
        assert!((s.soc_window.x_empty - p.x_0).abs() < 5e-3);
        let soc = state_of_charge(&s, &p, &g);
        assert!((soc - 0.5).abs() < 0.01, "{soc}");
    }

    #[test]
    fn side_reaction_overpotential_falls_with_current() {
        let (p, g) = setup();
        let s = CellState::fresh(&p, &g, 0.5);
        let cfg = StepConfig::default();
        let mut prev = f64::INFINITY;
        for i in [0.0, 2.0, 5.0, 10.0] {
            let pot = solve_potentials(&s, i, &p, &g, &cfg).unwrap();
            assert!(pot.eta_side < prev);
            prev = pot.eta_side;
        }
    }
}
