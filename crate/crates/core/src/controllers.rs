//! Benchmark charging strategies and the cut-off voltage / state-of-health map.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cell::Cell;
use crate::error::{Error, Result};

/// Setpoints shared by the rule-based controllers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerConfig {
    /// Constant-current stage current (A).
    pub i_cc: f64,
    /// Cut-off voltage of the constant-voltage stage (V).
    pub v_cut: f64,
    /// Constant-voltage stage ends below this current (A).
    pub i_taper_min: f64,
    /// Side-reaction overpotential reference of the COP stage (V).
    pub eta_ref: f64,
    /// Proportional gain (A/V).
    pub kp: f64,
    /// Integral gain (A/(V s)).
    pub ki: f64,
    /// Charger limit (A).
    pub i_max: f64,
    pub soc_target: f64,
    /// Voltage tolerance of the constant-voltage bisection (V).
    pub v_tolerance: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            i_cc: 10.0,
            v_cut: 4.2,
            i_taper_min: 0.25,
            eta_ref: COP_SLOW_ETA_REF,
            kp: 10.0,
            ki: 0.5,
            i_max: 10.0,
            soc_target: 0.8,
            v_tolerance: 1e-3,
        }
    }
}

pub const COP_SLOW_ETA_REF: f64 = 0.01;
pub const COP_FAST_ETA_REF: f64 = -0.05;

impl ControllerConfig {
    pub fn cop_slow() -> Self {
        Self::default()
    }

    pub fn cop_fast() -> Self {
        Self {
            eta_ref: COP_FAST_ETA_REF,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.i_max > 0.0) {
            return Err(Error::config("i_max", format!("must be positive, got {}", self.i_max)));
        }
        if !(self.i_cc > 0.0 && self.i_cc <= self.i_max) {
            return Err(Error::config("i_cc", format!("must lie in (0, i_max], got {}", self.i_cc)));
        }
        if !(self.i_taper_min > 0.0) {
            return Err(Error::config("i_taper_min", format!("must be positive, got {}", self.i_taper_min)));
        }
        if !(self.soc_target > 0.0 && self.soc_target <= 1.0) {
            return Err(Error::config("soc_target", format!("must lie in (0, 1], got {}", self.soc_target)));
        }
        if !(self.kp >= 0.0 && self.ki >= 0.0) {
            return Err(Error::config("kp", "gains must be non-negative"));
        }
        if !(self.v_tolerance > 0.0) {
            return Err(Error::config("v_tolerance", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Phase {
    #[default]
    ConstantCurrent,
    /// Constant voltage or constant overpotential.
    Hold,
    Done,
}

/// Per-charge controller memory.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PhaseState {
    pub phase: Phase,
    pub i_prev: f64,
    pub integral: f64,
    /// Cut-off voltage in force for this charge.
    pub v_cut: Option<f64>,
}

/// Largest current in [0, i_max] whose one-step-ahead voltage stays at or
/// below `v_cut`, found by bisection on a copy of the plant.
pub fn voltage_limited_current(plant: &Cell, v_cut: f64, i_max: f64, dt: f64, tol: f64) -> Result<f64> {
    if plant.preview(i_max, dt)?.voltage <= v_cut {
        return Ok(i_max);
    }
    let (mut lo, mut hi) = (0.0, i_max);
    if plant.preview(0.0, dt)?.voltage > v_cut {
        return Ok(0.0);
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let v = plant.preview(mid, dt)?.voltage;
        if v <= v_cut {
            lo = mid;
            if v_cut - v <= tol {
                break;
            }
        } else {
            hi = mid;
        }
        if hi - lo < 1e-6 {
            break;
        }
    }
    Ok(lo)
}

fn cv_current(plant: &Cell, cfg: &ControllerConfig, v_cut: f64, st: &mut PhaseState, dt: f64) -> Result<f64> {
    let meas = plant.outputs();
    if st.phase == Phase::Done || meas.soc >= cfg.soc_target {
        st.phase = Phase::Done;
        st.i_prev = 0.0;
        return Ok(0.0);
    }
    let i = if st.phase == Phase::ConstantCurrent && meas.voltage < v_cut {
        let limited = voltage_limited_current(plant, v_cut, cfg.i_cc, dt, cfg.v_tolerance)?;
        if limited < cfg.i_cc {
            st.phase = Phase::Hold;
        }
        limited
    } else {
        st.phase = Phase::Hold;
        voltage_limited_current(plant, v_cut, cfg.i_max, dt, cfg.v_tolerance)?
    };
    if st.phase == Phase::Hold && i < cfg.i_taper_min {
        st.phase = Phase::Done;
        st.i_prev = 0.0;
        return Ok(0.0);
    }
    st.i_prev = i;
    Ok(i)
}

/// Constant current, then constant voltage at `cfg.v_cut`.
pub fn cc_cv_step(plant: &Cell, cfg: &ControllerConfig, st: &mut PhaseState, dt: f64) -> Result<f64> {
    let v_cut = *st.v_cut.get_or_insert(cfg.v_cut);
    cv_current(plant, cfg, v_cut, st, dt)
}

/// CC-CV whose cut-off voltage is looked up from the map at the start of
/// each charge.
pub fn cc_cv_v_step(
    plant: &Cell,
    cfg: &ControllerConfig,
    map: &VoltageSohMap,
    st: &mut PhaseState,
    dt: f64,
) -> Result<f64> {
    let v_cut = match st.v_cut {
        Some(v) => v,
        None => {
            let v = lookup_vmax(map, plant.outputs().soh)?;
            st.v_cut = Some(v);
            v
        }
    };
    cv_current(plant, cfg, v_cut, st, dt)
}

/// Constant current until the side-reaction overpotential reaches
/// `cfg.eta_ref`, then PI regulation of the overpotential.
pub fn cc_cop_step(meas: &crate::model::CellOutputs, cfg: &ControllerConfig, st: &mut PhaseState, dt: f64) -> f64 {
    if st.phase == Phase::Done || meas.soc >= cfg.soc_target {
        st.phase = Phase::Done;
        st.i_prev = 0.0;
        return 0.0;
    }
    if st.phase == Phase::ConstantCurrent {
        if meas.eta_side > cfg.eta_ref {
            st.i_prev = cfg.i_max;
            return cfg.i_max;
        }
        st.phase = Phase::Hold;
        if st.i_prev == 0.0 {
            st.i_prev = cfg.i_max;
        }
    }
    let e = meas.eta_side - cfg.eta_ref;
    let integral = st.integral + e * dt;
    let raw = st.i_prev + cfg.kp * e + cfg.ki * integral;
    let i = raw.clamp(0.0, cfg.i_max);
    // integrate only while the output is not pushed further into saturation
    let saturated = (raw > cfg.i_max && e > 0.0) || (raw < 0.0 && e < 0.0);
    if !saturated {
        st.integral = integral;
    }
    st.i_prev = i;
    i
}

/// A charging strategy driven once per sampling period.
pub trait ChargeController: Send {
    fn name(&self) -> String;
    /// Called at the start of every charge.
    fn begin_charge(&mut self, plant: &Cell) -> Result<()>;
    /// Current (A) to apply for the next `dt` seconds.
    fn current(&mut self, plant: &Cell, dt: f64) -> Result<f64>;
}

#[derive(Debug, Clone)]
pub struct CcCv {
    pub cfg: ControllerConfig,
    state: PhaseState,
}

impl CcCv {
    pub fn new(cfg: ControllerConfig) -> Self {
        Self {
            cfg,
            state: PhaseState::default(),
        }
    }
}

impl ChargeController for CcCv {
    fn name(&self) -> String {
        "CC-CV".into()
    }

    fn begin_charge(&mut self, _plant: &Cell) -> Result<()> {
        self.state = PhaseState::default();
        Ok(())
    }

    fn current(&mut self, plant: &Cell, dt: f64) -> Result<f64> {
        cc_cv_step(plant, &self.cfg, &mut self.state, dt)
    }
}

#[derive(Debug, Clone)]
pub struct CcCvV {
    pub cfg: ControllerConfig,
    pub map: VoltageSohMap,
    state: PhaseState,
}

impl CcCvV {
    pub fn new(cfg: ControllerConfig, map: VoltageSohMap) -> Self {
        Self {
            cfg,
            map,
            state: PhaseState::default(),
        }
    }
}

impl ChargeController for CcCvV {
    fn name(&self) -> String {
        "CC-CV-V".into()
    }

    fn begin_charge(&mut self, _plant: &Cell) -> Result<()> {
        self.state = PhaseState::default();
        Ok(())
    }

    fn current(&mut self, plant: &Cell, dt: f64) -> Result<f64> {
        cc_cv_v_step(plant, &self.cfg, &self.map, &mut self.state, dt)
    }
}

#[derive(Debug, Clone)]
pub struct CcCop {
    pub cfg: ControllerConfig,
    label: String,
    state: PhaseState,
}

impl CcCop {
    pub fn new(cfg: ControllerConfig) -> Self {
        let label = if cfg.eta_ref == COP_SLOW_ETA_REF {
            "CC-COP-slow".to_string()
        } else if cfg.eta_ref == COP_FAST_ETA_REF {
            "CC-COP-fast".to_string()
        } else {
            format!("CC-COP({:+.3} V)", cfg.eta_ref)
        };
        Self {
            cfg,
            label,
            state: PhaseState::default(),
        }
    }
}

impl ChargeController for CcCop {
    fn name(&self) -> String {
        self.label.clone()
    }

    fn begin_charge(&mut self, _plant: &Cell) -> Result<()> {
        self.state = PhaseState::default();
        Ok(())
    }

    fn current(&mut self, plant: &Cell, dt: f64) -> Result<f64> {
        Ok(cc_cop_step(plant.outputs(), &self.cfg, &mut self.state, dt))
    }
}

/// Monotone table from state of health to charge cut-off voltage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoltageSohMap {
    /// (soh, v_cutoff), soh strictly decreasing.
    points: Vec<(f64, f64)>,
}

/// Voltages outside this band are rejected as unsafe.
pub const SAFE_VOLTAGE_BAND: (f64, f64) = (3.6, 4.4);

const MAP_HEADER: &str = "soh,v_cutoff_V";

impl VoltageSohMap {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyMap);
        }
        for w in points.windows(2) {
            if !(w[1].0 < w[0].0) {
                return Err(Error::InvalidMap(format!("soh not strictly decreasing at {}", w[1].0)));
            }
            if w[1].1 < w[0].1 {
                return Err(Error::InvalidMap(format!("cut-off voltage decreases at soh {}", w[1].0)));
            }
        }
        for &(s, v) in &points {
            if !(s.is_finite() && v >= SAFE_VOLTAGE_BAND.0 && v <= SAFE_VOLTAGE_BAND.1) {
                return Err(Error::InvalidMap(format!("point ({s}, {v}) outside the safe band")));
            }
        }
        Ok(Self { points })
    }

    /// A map that returns `v` for every state of health.
    pub fn constant(v: f64) -> Result<Self> {
        Self::new(vec![(1.0, v)])
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from(MAP_HEADER);
        s.push('\n');
        for &(soh, v) in &self.points {
            let _ = writeln!(s, "{},{}", format_significant(soh, 6), format_significant(v, 6));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == MAP_HEADER => {}
            other => return Err(Error::InvalidMap(format!("bad header {other:?}"))),
        }
        let mut points = Vec::new();
        for (n, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut it = line.split(',');
            let parse = |f: Option<&str>| -> Result<f64> {
                f.and_then(|v| v.trim().parse().ok())
                    .ok_or_else(|| Error::InvalidMap(format!("line {}: cannot parse `{line}`", n + 2)))
            };
            let soh = parse(it.next())?;
            let v = parse(it.next())?;
            points.push((soh, v));
        }
        Self::new(points)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

/// Formats `x` with `digits` significant digits in positional notation.
pub fn format_significant(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{:.*}", digits.saturating_sub(1), x);
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (digits as i32 - 1 - magnitude).max(0) as usize;
    format!("{:.*}", decimals, x)
}

/// Piecewise-linear interpolation of the map, clamped at its ends.
pub fn lookup_vmax(map: &VoltageSohMap, soh: f64) -> Result<f64> {
    let p = &map.points;
    if p.is_empty() {
        return Err(Error::EmptyMap);
    }
    if soh >= p[0].0 {
        if soh > p[0].0 {
            log::debug!("soh {soh} above the map, clamping to {}", p[0].0);
        }
        return Ok(p[0].1);
    }
    let last = p[p.len() - 1];
    if soh <= last.0 {
        if soh < last.0 {
            log::warn!("soh {soh} below the map, clamping to {}", last.0);
        }
        return Ok(last.1);
    }
    let i = p.partition_point(|&(s, _)| s > soh);
    let (s0, v0) = p[i - 1];
    let (s1, v1) = p[i];
    Ok(v0 + (v1 - v0) * (soh - s0) / (s1 - s0))
}

/// Pool-adjacent-violators fit of a non-decreasing sequence with weights.
pub fn isotonic_non_decreasing(values: &[f64], weights: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        blocks.push((v, w, 1));
        while blocks.len() > 1 {
            let n = blocks.len();
            let (v1, w1, c1) = blocks[n - 1];
            let (v0, w0, c0) = blocks[n - 2];
            if v0 <= v1 {
                break;
            }
            blocks.truncate(n - 2);
            blocks.push(((v0 * w0 + v1 * w1) / (w0 + w1), w0 + w1, c0 + c1));
        }
    }
    blocks
        .into_iter()
        .flat_map(|(v, _, c)| std::iter::repeat_n(v, c))
        .collect()
}

/// Bins (soh, max voltage) observations to 1 % of state of health, averages
/// each bin and enforces monotonicity by isotonic regression.
pub fn map_from_observations(observations: &[(f64, f64)]) -> Result<VoltageSohMap> {
    if observations.is_empty() {
        return Err(Error::EmptyMap);
    }
    let mut bins: std::collections::BTreeMap<i64, (f64, f64)> = std::collections::BTreeMap::new();
    for &(soh, v) in observations {
        let key = (soh * 100.0).round() as i64;
        let e = bins.entry(key).or_insert((0.0, 0.0));
        e.0 += v;
        e.1 += 1.0;
    }
    // descending state of health
    let rows: Vec<(f64, f64, f64)> = bins
        .into_iter()
        .rev()
        .map(|(k, (sum, n))| (k as f64 / 100.0, sum / n, n))
        .collect();
    let values: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let weights: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let fitted = isotonic_non_decreasing(&values, &weights);
    VoltageSohMap::new(rows.iter().zip(fitted).map(|(r, v)| (r.0, v)).collect())
}

/// Runs the life-cycle protocol under CC-COP on a fresh plant and turns the
/// per-cycle maximum charge voltage into a cut-off voltage map.
pub fn build_voltage_soh_map(
    plant_factory: &dyn Fn() -> Result<Cell>,
    cop_cfg: &ControllerConfig,
    protocol_cfg: &crate::lifecycle::ProtocolConfig,
) -> Result<VoltageSohMap> {
    let mut plant = plant_factory()?;
    let mut controller = CcCop::new(*cop_cfg);
    let run = crate::lifecycle::run_protocol(&mut controller, &mut plant, protocol_cfg)?;
    let obs: Vec<(f64, f64)> = run.cycles.iter().map(|c| (c.soh_at_cycle, c.max_voltage)).collect();
    map_from_observations(&obs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lookup_interpolates_and_clamps() {
        let map = VoltageSohMap::new(vec![(1.0, 4.14), (0.9, 4.155), (0.8, 4.17)]).unwrap();
        assert_eq!(lookup_vmax(&map, 0.9).unwrap(), 4.155);
        assert_eq!(lookup_vmax(&map, 1.05).unwrap(), 4.14);
        assert_eq!(lookup_vmax(&map, 0.5).unwrap(), 4.17);
        assert!((lookup_vmax(&map, 0.95).unwrap() - 4.1475).abs() < 1e-12);
    }

    #[test]
    fn map_invariants_enforced() {
        assert!(matches!(VoltageSohMap::new(vec![]), Err(Error::EmptyMap)));
        assert!(VoltageSohMap::new(vec![(0.9, 4.1), (1.0, 4.2)]).is_err());
        assert!(VoltageSohMap::new(vec![(1.0, 4.2), (0.9, 4.1)]).is_err());
        assert!(VoltageSohMap::new(vec![(1.0, 5.0)]).is_err());
    }

    #[test]
    fn map_text_round_trip() {
        let map = VoltageSohMap::new(vec![(1.0, 4.1412345), (0.95, 4.15), (0.8, 4.17)]).unwrap();
        let text = map.to_text();
        assert!(text.starts_with("soh,v_cutoff_V\n1.00000,4.14123\n"));
        let back = VoltageSohMap::from_text(&text).unwrap();
        assert_eq!(back.points()[0], (1.0, 4.14123));
        assert_eq!(back.points().len(), 3);
    }

    #[test]
    fn significant_digits() {
        assert_eq!(format_significant(4.1475, 6), "4.14750");
        assert_eq!(format_significant(0.95, 6), "0.950000");
        assert_eq!(format_significant(123.456789, 6), "123.457");
    }

    #[test]
    fn isotonic_pools_violators() {
        let fit = isotonic_non_decreasing(&[1.0, 3.0, 2.0, 4.0], &[1.0; 4]);
        assert_eq!(fit, vec![1.0, 2.5, 2.5, 4.0]);
        let fit = isotonic_non_decreasing(&[3.0, 2.0, 1.0], &[1.0, 1.0, 1.0]);
        assert_eq!(fit, vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn observations_binned_per_percent() {
        let obs = [(1.0, 4.14), (0.998, 4.142), (0.9, 4.16), (0.899, 4.15), (0.8, 4.17)];
        let map = map_from_observations(&obs).unwrap();
        assert_eq!(map.points().len(), 3);
        assert_eq!(map.points()[0].0, 1.0);
        assert!((map.points()[0].1 - 4.141).abs() < 1e-12);
        assert!((map.points()[1].1 - 4.155).abs() < 1e-12);
    }

    #[test]
    fn cop_phases() {
        let cfg = ControllerConfig::cop_slow();
        let mut st = PhaseState::default();
        let mut meas = crate::model::CellOutputs {
            eta_side: 0.1,
            soc: 0.3,
            ..Default::default()
        };
        assert_eq!(cc_cop_step(&meas, &cfg, &mut st, 20.0), cfg.i_max);
        meas.eta_side = 0.0;
        let i = cc_cop_step(&meas, &cfg, &mut st, 20.0);
        assert!(i < cfg.i_max && i >= 0.0);
        meas.soc = 0.8;
        assert_eq!(cc_cop_step(&meas, &cfg, &mut st, 20.0), 0.0);
    }
}
