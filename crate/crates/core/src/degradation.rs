//! SEI growth, lithium plating and stripping, dead-lithium conversion and
//! state-of-health bookkeeping.
//!
//! Plating fluxes follow the stripping sign: `N_Li > 0` strips plated lithium
//! back, `N_Li < 0` deposits it. The negative electrode loses `-N_Li` moles per
//! unit particle surface to the plated layer.

use crate::error::{Error, Result};
use crate::params::{CellParameters, PlatingMode, SECONDS_PER_HOUR};

/// Exponent arguments above this magnitude are clipped in the stripping flux.
pub const EXPONENT_CLIP: f64 = 50.0;

/// Growth rates of the inner and outer SEI layers (m/s).
pub fn sei_growth_rate(
    l_inner: f64,
    l_outer: f64,
    temperature: f64,
    params: &CellParameters,
) -> Result<(f64, f64)> {
    for l in [l_inner, l_outer] {
        if !(l > 0.0) {
            return Err(Error::ZeroThickness(l));
        }
    }
    let k = sei_parabolic_constant(temperature, params);
    Ok((k / l_inner, k / l_outer))
}

/// `c_sol,0 · D_sol(T) · V̄_SEI / 4`, so that `dL/dt = k / L` per layer (m2/s).
pub fn sei_parabolic_constant(temperature: f64, params: &CellParameters) -> f64 {
    let d = &params.degradation;
    d.c_sol_0 * d.d_sol(temperature, params.gas_constant) * d.v_bar_sei / 4.0
}

/// Exact solution of `dL/dt = k / L` over `dt`.
pub fn advance_sei_layer(l: f64, k: f64, dt: f64) -> f64 {
    (l * l + 2.0 * k * dt).sqrt()
}

/// Resistive drop across the SEI film (V). `j_tot` is the volumetric
/// interfacial current density of the negative electrode (A/m3); charging
/// makes it negative and the drop negative.
pub fn sei_overpotential(l_inner: f64, l_outer: f64, j_tot: f64, params: &CellParameters) -> f64 {
    params.degradation.rho_sei * (l_inner + l_outer) * j_tot / params.a_neg()
}

pub fn stripping_overpotential(phi_s: f64, phi_e: f64, eta_sei: f64) -> f64 {
    phi_s - phi_e - eta_sei
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrippingFlux {
    /// mol/(m2 s), positive strips.
    pub value: f64,
    pub overflow_clamped: bool,
}

/// Butler–Volmer stripping flux of plated lithium.
pub fn stripping_flux(
    c_li: f64,
    c_e_local: f64,
    eta_stripping: f64,
    temperature: f64,
    params: &CellParameters,
) -> StrippingFlux {
    let d = &params.degradation;
    let f_rt = params.faraday / (params.gas_constant * temperature);
    let mut clamped = false;
    let mut clip = |arg: f64| {
        if arg.abs() > EXPONENT_CLIP {
            clamped = true;
            arg.signum() * EXPONENT_CLIP
        } else {
            arg
        }
    };
    let anodic = clip(d.alpha_a_li * f_rt * eta_stripping).exp();
    let cathodic = clip(-d.alpha_c_li * f_rt * eta_stripping).exp();
    StrippingFlux {
        value: d.k_li_eff() * (c_li * anodic - c_e_local * cathodic),
        overflow_clamped: clamped,
    }
}

/// Derivative of the unclamped stripping flux with respect to the overpotential.
pub fn stripping_flux_slope(
    c_li: f64,
    c_e_local: f64,
    eta_stripping: f64,
    temperature: f64,
    params: &CellParameters,
) -> f64 {
    let d = &params.degradation;
    let f_rt = params.faraday / (params.gas_constant * temperature);
    let a = (d.alpha_a_li * f_rt * eta_stripping).clamp(-EXPONENT_CLIP, EXPONENT_CLIP);
    let c = (-d.alpha_c_li * f_rt * eta_stripping).clamp(-EXPONENT_CLIP, EXPONENT_CLIP);
    d.k_li_eff() * f_rt * (c_li * d.alpha_a_li * a.exp() + c_e_local * d.alpha_c_li * c.exp())
}

/// Rates of plated and dead lithium (mol/(m3 s)).
pub fn plating_rhs(
    c_li: f64,
    _c_dli: f64,
    l_sei_total: f64,
    n_li: f64,
    params: &CellParameters,
) -> (f64, f64) {
    let gamma = params.degradation.gamma(l_sei_total);
    let a = params.a_neg();
    (-a * n_li - gamma * c_li, gamma * c_li)
}

pub fn side_reaction_overpotential(phi_sn: f64, phi_en: f64, params: &CellParameters) -> f64 {
    phi_sn - phi_en - params.degradation.u_side
}

/// Irreversible plating never strips lithium back into the particle.
pub fn irreversible_plating_guard(n_li: f64, mode: PlatingMode) -> f64 {
    match mode {
        PlatingMode::Reversible => n_li,
        PlatingMode::Irreversible => n_li.min(0.0),
    }
}

/// Converts a dead-lithium concentration (mol per m3 of negative electrode)
/// into lost capacity (Ah).
pub fn plating_capacity_loss(c_dli: f64, params: &CellParameters) -> f64 {
    lithium_to_ah(c_dli * params.l_neg * params.electrode_area, params)
}

pub fn lithium_to_ah(moles: f64, params: &CellParameters) -> f64 {
    moles * params.faraday / SECONDS_PER_HOUR
}

/// Capacity bookkeeping between measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct SohLedger {
    pub q_initial: f64,
    pub q_latest: f64,
    pub q_loss_plating: f64,
    pub q_loss_sei: f64,
    losses_at_calibration: f64,
}

impl SohLedger {
    pub fn new(q_initial: f64) -> Self {
        Self {
            q_initial,
            q_latest: q_initial,
            q_loss_plating: 0.0,
            q_loss_sei: 0.0,
            losses_at_calibration: 0.0,
        }
    }

    /// Records cumulative loss terms; both are clamped to be non-decreasing.
    pub fn record_losses(&mut self, sei_ah: f64, plating_ah: f64) {
        self.q_loss_sei = self.q_loss_sei.max(sei_ah);
        self.q_loss_plating = self.q_loss_plating.max(plating_ah);
    }

    pub fn total_losses(&self) -> f64 {
        self.q_loss_sei + self.q_loss_plating
    }

    /// Replaces the estimate with a measured capacity.
    pub fn recalibrate(&mut self, q_measured: f64) {
        self.q_latest = q_measured.min(self.q_initial);
        self.losses_at_calibration = self.total_losses();
    }

    /// Latest measurement minus losses accrued since it was taken.
    pub fn estimated_capacity(&self) -> f64 {
        (self.q_latest - (self.total_losses() - self.losses_at_calibration)).min(self.q_initial)
    }
}

pub fn state_of_health(ledger: &SohLedger) -> f64 {
    ledger.estimated_capacity() / ledger.q_initial
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> CellParameters {
        CellParameters::lg_m50()
    }

    #[test]
    fn sei_rate_inverse_in_thickness() {
        let p = params();
        let (a, b) = sei_growth_rate(5e-9, 10e-9, p.temperature, &p).unwrap();
        assert!((a / b - 2.0).abs() < 1e-12);
        assert!(matches!(
            sei_growth_rate(0.0, 1e-9, p.temperature, &p),
            Err(Error::ZeroThickness(_))
        ));
    }

    #[test]
    fn sei_closed_form() {
        // L(t) = sqrt(L0^2 + 2 k t), L0 = 5 nm, k = 1.25e-22 m2/s, t = 1e5 s
        let l = advance_sei_layer(5e-9, 1.25e-22, 1e5);
        assert!((l - 50f64.sqrt() * 1e-9).abs() < 1e-15);
        assert!((l * 1e9 - 7.07).abs() < 5e-3);
    }

    #[test]
    fn solvent_diffusivity_from_configuration() {
        let p = params();
        let d = p.degradation.d_sol(p.degradation.t_ref, p.gas_constant);
        assert_eq!(d, 2.5e-22);
    }

    #[test]
    fn sei_overpotential_substitution() {
        let mut p = params();
        p.degradation.rho_sei = 2e5;
        // j_tot / a_neg = 1 A/m2
        let eta = sei_overpotential(1e-8, 1e-8, p.a_neg(), &p);
        assert!((eta - 4e-3).abs() < 1e-15);
        assert_eq!(sei_overpotential(1e-8, 1e-8, 0.0, &p), 0.0);
        let double = sei_overpotential(2e-8, 2e-8, p.a_neg(), &p);
        assert!((double - 2.0 * eta).abs() < 1e-15);
    }

    #[test]
    fn stripping_overpotential_cases() {
        assert!((stripping_overpotential(0.1, 0.02, 0.01) - 0.07).abs() < 1e-15);
        assert_eq!(stripping_overpotential(0.3, 0.1, 0.0), 0.3 - 0.1);
        let (a, b, c) = (0.21, -0.04, 0.013);
        assert!((stripping_overpotential(a, b, c) + stripping_overpotential(b, a, -c)).abs() < 1e-15);
    }

    #[test]
    fn stripping_flux_equilibrium_and_difference() {
        let p = params();
        let t = p.temperature;
        assert_eq!(stripping_flux(800.0, 800.0, 0.0, t, &p).value, 0.0);
        let f = stripping_flux(2000.0, 1000.0, 0.0, t, &p);
        assert!((f.value - p.degradation.k_li * 1000.0).abs() < 1e-20);
        assert!(!f.overflow_clamped);
        assert_eq!(p.degradation.k_li, 1e-11);
    }

    #[test]
    fn stripping_flux_clips_exponents() {
        let p = params();
        let f = stripping_flux(1.0, 1000.0, -10.0, p.temperature, &p);
        assert!(f.overflow_clamped);
        assert!(f.value.is_finite());
        let bound = p.degradation.k_li * 1000.0 * EXPONENT_CLIP.exp();
        assert!((f.value + bound).abs() < 1e-12 * bound);
    }

    #[test]
    fn stripping_slope_matches_difference_quotient() {
        let p = params();
        let t = p.temperature;
        for eta in [-0.1, -0.02, 0.0, 0.05] {
            let h = 1e-7;
            let fd = (stripping_flux(3.0, 1000.0, eta + h, t, &p).value
                - stripping_flux(3.0, 1000.0, eta - h, t, &p).value)
                / (2.0 * h);
            let an = stripping_flux_slope(3.0, 1000.0, eta, t, &p);
            assert!((fd - an).abs() <= 1e-6 * an.abs(), "{fd} {an}");
        }
    }

    #[test]
    fn plating_rates() {
        let p = params();
        let mut q = p.clone();
        q.degradation.gamma_0 = 0.0;
        assert_eq!(plating_rhs(5.0, 1.0, 5e-9, 0.0, &q), (0.0, 0.0));
        let l0 = p.degradation.l_inner_0 + p.degradation.l_outer_0;
        let (a, b) = plating_rhs(5.0, 1.0, l0, 0.0, &p);
        assert!((a + p.degradation.gamma_0 * 5.0).abs() < 1e-18);
        assert!((b - p.degradation.gamma_0 * 5.0).abs() < 1e-18);
    }

    #[test]
    fn dead_lithium_exponential_decay() {
        // with N_Li = 0 and constant gamma: c_Li = c0 exp(-gamma t), c_dLi = c0 (1 - exp(-gamma t))
        let p = params();
        let l0 = p.degradation.l_inner_0 + p.degradation.l_outer_0;
        let gamma = p.degradation.gamma(l0);
        let (mut c, mut d) = (10.0, 0.0);
        let h = 10.0;
        let steps = 100_000;
        for _ in 0..steps {
            // classical RK4
            let f = |c: f64| plating_rhs(c, 0.0, l0, 0.0, &p);
            let k1 = f(c);
            let k2 = f(c + 0.5 * h * k1.0);
            let k3 = f(c + 0.5 * h * k2.0);
            let k4 = f(c + h * k3.0);
            c += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
            d += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        }
        let t = h * steps as f64;
        let exact = 10.0 * (-gamma * t).exp();
        assert!((c - exact).abs() < 1e-9);
        assert!((d - (10.0 - exact)).abs() < 1e-9);
    }

    #[test]
    fn side_reaction_cases() {
        let p = params();
        assert!((side_reaction_overpotential(0.10, 0.02, &p) - 0.08).abs() < 1e-15);
        assert_eq!(side_reaction_overpotential(0.07, 0.07, &p), 0.0);
        assert!(side_reaction_overpotential(0.01, 0.05, &p) < 0.0);
    }

    #[test]
    fn guard_modes() {
        assert_eq!(irreversible_plating_guard(3e-9, PlatingMode::Irreversible), 0.0);
        assert_eq!(irreversible_plating_guard(-3e-9, PlatingMode::Irreversible), -3e-9);
        assert_eq!(irreversible_plating_guard(3e-9, PlatingMode::Reversible), 3e-9);
    }

    #[test]
    fn soh_ledger() {
        let mut l = SohLedger::new(5.0);
        assert_eq!(state_of_health(&l), 1.0);
        l.recalibrate(4.0);
        assert!((state_of_health(&l) - 0.8).abs() < 1e-15);
        let mut l = SohLedger::new(5.0);
        l.record_losses(0.3, 0.2);
        assert!((state_of_health(&l) - 0.9).abs() < 1e-15);
        // losses never decrease
        l.record_losses(0.1, 0.1);
        assert_eq!(l.total_losses(), 0.5);
    }

    #[test]
    fn plating_loss_conversion() {
        let p = params();
        assert_eq!(plating_capacity_loss(0.0, &p), 0.0);
        let one = plating_capacity_loss(1.0, &p);
        assert!((plating_capacity_loss(2.0, &p) - 2.0 * one).abs() < 1e-15);
        // one mole of lithium is F/3600 Ah
        assert!((lithium_to_ah(1.0, &p) - 26.8015).abs() < 1e-3);
        let moles = 1.0 / (p.l_neg * p.electrode_area);
        assert!((plating_capacity_loss(moles, &p) - 26.80148).abs() < 1e-4);
    }
}
