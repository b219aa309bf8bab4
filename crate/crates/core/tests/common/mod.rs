#![allow(dead_code)]

use fastcharge::params::Electrode;
use fastcharge::CellParameters;

/// Positive roots of tan(x) = x, from bisection on x cos x - sin x inside
/// (n pi, n pi + pi/2).
pub fn tan_roots(count: usize) -> Vec<f64> {
    let f = |x: f64| x * x.cos() - x.sin();
    (1..=count)
        .map(|n| {
            let mut lo = n as f64 * std::f64::consts::PI;
            let mut hi = lo + std::f64::consts::FRAC_PI_2 - 1e-12;
            let flo = f(lo);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if f(mid).signum() == flo.signum() {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        })
        .collect()
}

/// Surface concentration of a sphere under constant inward flux `j` from a
/// uniform start `c0`, from the eigenfunction series.
pub fn sphere_surface_series(c0: f64, j: f64, radius: f64, d: f64, t: f64, roots: &[f64]) -> f64 {
    let tau = d * t / (radius * radius);
    let tail: f64 = roots.iter().map(|l| (-l * l * tau).exp() / (l * l)).sum();
    c0 + j * radius / d * (3.0 * tau + 0.2 - 2.0 * tail)
}

pub fn radius_and_diffusivity(p: &CellParameters, e: Electrode) -> (f64, f64) {
    (p.particle_radius(e), p.solid_diffusivity(e))
}
