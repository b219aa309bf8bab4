//! Life-cycle cycling harness, capacity measurement and strategy comparison.

use serde::{Deserialize, Serialize};

use crate::cell::Cell;
use crate::controllers::{CcCv, ChargeController, ControllerConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolConfig {
    pub soc_precharge: f64,
    pub soc_target: f64,
    pub rest_seconds: f64,
    /// Internal substep used during rests (s).
    pub rest_substep: f64,
    pub soh_end: f64,
    pub sample_seconds: f64,
    /// Low-rate constant current for the precharge (A).
    pub precharge_current: f64,
    /// Constant discharge current, entered as a positive magnitude (A).
    pub discharge_current: f64,
    /// Abort when the cell survives this many cycles.
    pub max_cycles: usize,
    /// Sampling periods allowed in any single charge or discharge.
    pub max_phase_steps: usize,
    /// Cycles whose strategy charge is kept as a full trace.
    pub snapshot_cycles: Vec<usize>,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            soc_precharge: 0.2,
            soc_target: 0.8,
            rest_seconds: 3600.0,
            rest_substep: 10.0,
            soh_end: 0.8,
            sample_seconds: 20.0,
            precharge_current: 5.0 / 3.0,
            discharge_current: 5.0,
            max_cycles: 5000,
            max_phase_steps: 2000,
            snapshot_cycles: vec![1, 200],
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, reason: String| Err(Error::config(key, reason));
        if !(self.soc_precharge > 0.0 && self.soc_precharge < self.soc_target && self.soc_target <= 1.0) {
            return bad(
                "soc_precharge",
                format!("need 0 < soc_precharge < soc_target <= 1, got {} and {}", self.soc_precharge, self.soc_target),
            );
        }
        if !(self.soh_end > 0.0 && self.soh_end < 1.0) {
            return bad("soh_end", format!("must lie in (0, 1), got {}", self.soh_end));
        }
        for (key, v) in [
            ("rest_seconds", self.rest_seconds),
            ("rest_substep", self.rest_substep),
            ("sample_seconds", self.sample_seconds),
            ("precharge_current", self.precharge_current),
            ("discharge_current", self.discharge_current),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(key, format!("must be positive, got {v}"));
            }
        }
        if self.max_cycles == 0 || self.max_phase_steps == 0 {
            return bad("max_cycles", "budgets must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleMetrics {
    pub cycle: usize,
    pub charge_minutes: f64,
    pub efc_cumulative: f64,
    /// State of health when the cycle started.
    pub soh_at_cycle: f64,
    /// State of health from the check that closes the cycle.
    pub soh_after: f64,
    pub capacity_loss_plating_ah: f64,
    pub capacity_loss_sei_ah: f64,
    pub max_voltage: f64,
    pub min_eta_side: f64,
    /// Diagnostic cost integral of the strategy charge (s).
    pub objective: f64,
}

/// One sample of a recorded trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub t: f64,
    pub current: f64,
    pub voltage: f64,
    pub soc: f64,
    pub soh: f64,
    pub eta_side: f64,
    pub l_sei: f64,
    pub c_dli: f64,
}

impl TracePoint {
    pub fn from_outputs(o: &crate::model::CellOutputs) -> Self {
        Self {
            t: o.t,
            current: o.current,
            voltage: o.voltage,
            soc: o.soc,
            soh: o.soh,
            eta_side: o.eta_side,
            l_sei: o.l_sei,
            c_dli: o.c_dli,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EndReason {
    EndOfLife,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolRun {
    pub strategy: String,
    pub q_initial: f64,
    pub cycles: Vec<CycleMetrics>,
    pub snapshots: Vec<(usize, Vec<TracePoint>)>,
    pub ah_discharged: f64,
}

impl ProtocolRun {
    pub fn max_efc(&self) -> f64 {
        self.cycles.last().map_or(0.0, |c| c.efc_cumulative)
    }

    pub fn average_charge_minutes(&self) -> f64 {
        if self.cycles.is_empty() {
            return 0.0;
        }
        self.cycles.iter().map(|c| c.charge_minutes).sum::<f64>() / self.cycles.len() as f64
    }

    pub fn plating_loss_ah(&self) -> f64 {
        self.cycles.last().map_or(0.0, |c| c.capacity_loss_plating_ah)
    }
}

pub fn compute_efc(ah_discharged: f64, q_nominal: f64) -> f64 {
    ah_discharged / q_nominal
}

/// Weights of the diagnostic cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObjectiveWeights {
    pub w_soc: f64,
    pub w_side: f64,
    pub soc_target: f64,
    pub eta_min: f64,
}

impl Default for ObjectiveWeights {
    fn default() -> Self {
        Self {
            w_soc: 1.0,
            w_side: 1.0,
            soc_target: 0.8,
            eta_min: -0.145,
        }
    }
}

/// Pointwise tracking plus overpotential cost along a trace.
pub fn objective_cost(trace: &[TracePoint], w: &ObjectiveWeights) -> Vec<f64> {
    trace
        .iter()
        .map(|p| w.w_soc * (w.soc_target - p.soc).abs() + w.w_side * (p.eta_side - w.eta_min).abs())
        .collect()
}

/// Time integral of the cost by the left rectangle rule.
pub fn objective_integral(trace: &[TracePoint], w: &ObjectiveWeights) -> f64 {
    let j = objective_cost(trace, w);
    trace.windows(2).zip(&j).map(|(p, j)| j * (p[1].t - p[0].t)).sum()
}

/// Time to move the state of charge by `dsoc` at `current`, from the window capacity.
fn time_to_soc(cell: &Cell, dsoc: f64, current: f64) -> f64 {
    let cap = cell.state().soc_window.capacity_ah(cell.params());
    dsoc.abs() * cap * 3600.0 / current.abs()
}

/// Constant current until the state of charge reaches `target`, shortening
/// the final sample so the target is met without overshoot. Discharges also
/// stop at the lower voltage limit.
pub fn constant_current_to(cell: &mut Cell, current: f64, target: f64, sample: f64, budget: usize, phase: &str) -> Result<f64> {
    let start = cell.outputs().t;
    let charging = current > 0.0;
    let v_min = cell.params().v_min;
    let reached = |c: &Cell| {
        if charging {
            c.soc() >= target
        } else {
            c.soc() <= target || c.outputs().voltage <= v_min
        }
    };
    let mut steps = 0;
    while !reached(cell) {
        if steps >= budget {
            return Err(Error::BudgetExceeded {
                phase: phase.to_string(),
                budget,
            });
        }
        let need = time_to_soc(cell, target - cell.soc(), current);
        let dt = sample.min(need * (1.0 + 1e-9) + 1e-6);
        cell.step(current, dt)?;
        steps += 1;
    }
    Ok(cell.outputs().t - start)
}

pub fn rest(cell: &mut Cell, seconds: f64, substep: f64) -> Result<()> {
    cell.step_with_substep(0.0, seconds, substep)?;
    Ok(())
}

pub struct ChargeResult {
    pub seconds: f64,
    pub max_voltage: f64,
    pub min_eta_side: f64,
    pub trace: Vec<TracePoint>,
}

/// Runs `controller` until the state of charge reaches `target`.
pub fn controlled_charge(
    cell: &mut Cell,
    controller: &mut dyn ChargeController,
    target: f64,
    sample: f64,
    budget: usize,
    keep_trace: bool,
) -> Result<ChargeResult> {
    controller.begin_charge(cell)?;
    let start = cell.outputs().t;
    let mut max_voltage = f64::NEG_INFINITY;
    let mut min_eta_side = f64::INFINITY;
    let mut trace = Vec::new();
    if keep_trace {
        trace.push(TracePoint::from_outputs(cell.outputs()));
    }
    let mut steps = 0;
    while cell.soc() < target {
        if steps >= budget {
            return Err(Error::BudgetExceeded {
                phase: format!("{} charge", controller.name()),
                budget,
            });
        }
        let i = controller.current(cell, sample)?;
        let dt = if i > 0.0 {
            sample.min(time_to_soc(cell, target - cell.soc(), i) * (1.0 + 1e-9) + 1e-6)
        } else {
            sample
        };
        let o = cell.step(i, dt)?;
        max_voltage = max_voltage.max(o.voltage);
        min_eta_side = min_eta_side.min(o.eta_side);
        if keep_trace {
            trace.push(TracePoint::from_outputs(&o));
        }
        steps += 1;
    }
    Ok(ChargeResult {
        seconds: cell.outputs().t - start,
        max_voltage,
        min_eta_side,
        trace,
    })
}

/// Full discharge, CC-CV charge to full and a second full discharge; returns
/// the Ah delivered by the last discharge.
pub fn measure_capacity(cell: &mut Cell, cfg: &ProtocolConfig) -> Result<f64> {
    let budget = cfg.max_phase_steps * 4;
    constant_current_to(cell, -cfg.discharge_current, 0.0, cfg.sample_seconds, budget, "capacity discharge")?;
    rest(cell, cfg.rest_seconds, cfg.rest_substep)?;
    let mut cccv = CcCv::new(ControllerConfig {
        i_cc: cfg.discharge_current,
        i_max: cfg.discharge_current,
        soc_target: 1.0,
        i_taper_min: cfg.discharge_current / 50.0,
        v_cut: cell.params().v_max,
        ..ControllerConfig::default()
    });
    cccv.begin_charge(cell)?;
    let mut steps = 0;
    loop {
        let i = cccv.current(cell, cfg.sample_seconds)?;
        if i == 0.0 {
            break;
        }
        if steps >= budget {
            return Err(Error::BudgetExceeded {
                phase: "capacity charge".into(),
                budget,
            });
        }
        let dt = cfg.sample_seconds.min(time_to_soc(cell, 1.0 - cell.soc(), i) * (1.0 + 1e-9) + 1e-6);
        cell.step(i, dt)?;
        steps += 1;
    }
    rest(cell, cfg.rest_seconds, cfg.rest_substep)?;
    let before = cell.state().ah_discharged;
    let v_min = cell.params().v_min;
    let mut steps = 0;
    while cell.soc() > 0.0 && cell.outputs().voltage > v_min {
        if steps >= budget {
            return Err(Error::BudgetExceeded {
                phase: "capacity discharge".into(),
                budget,
            });
        }
        let i = -cfg.discharge_current;
        let dt = cfg.sample_seconds.min(time_to_soc(cell, cell.soc(), i) * (1.0 + 1e-9) + 1e-6);
        cell.step(i, dt)?;
        steps += 1;
    }
    Ok(cell.state().ah_discharged - before)
}

/// Cycles the cell under `controller` until its state of health reaches
/// `cfg.soh_end`.
pub fn run_protocol(controller: &mut dyn ChargeController, cell: &mut Cell, cfg: &ProtocolConfig) -> Result<ProtocolRun> {
    cfg.validate()?;
    let q_nominal = cell.params().q_nominal;
    let weights = ObjectiveWeights {
        soc_target: cfg.soc_target,
        ..ObjectiveWeights::default()
    };
    let ah_start = cell.state().ah_discharged;
    let q_initial = cell.state().ledger.q_initial;
    let mut cycles = Vec::new();
    let mut snapshots = Vec::new();
    for cycle in 1..=cfg.max_cycles {
        let soh_at_cycle = cell.soh();
        if cell.soc() < cfg.soc_precharge {
            constant_current_to(
                cell,
                cfg.precharge_current,
                cfg.soc_precharge,
                cfg.sample_seconds,
                cfg.max_phase_steps,
                "precharge",
            )?;
        }
        rest(cell, cfg.rest_seconds, cfg.rest_substep)?;
        let keep = cfg.snapshot_cycles.contains(&cycle);
        let charge = controlled_charge(cell, controller, cfg.soc_target, cfg.sample_seconds, cfg.max_phase_steps, true)?;
        constant_current_to(
            cell,
            -cfg.discharge_current,
            0.0,
            cfg.sample_seconds,
            cfg.max_phase_steps,
            "discharge",
        )?;
        rest(cell, cfg.rest_seconds, cfg.rest_substep)?;
        let soh_after = cell.check_soh()?;
        let ledger = &cell.state().ledger;
        cycles.push(CycleMetrics {
            cycle,
            charge_minutes: charge.seconds / 60.0,
            efc_cumulative: compute_efc(cell.state().ah_discharged - ah_start, q_nominal),
            soh_at_cycle,
            soh_after,
            capacity_loss_plating_ah: ledger.q_loss_plating,
            capacity_loss_sei_ah: ledger.q_loss_sei,
            max_voltage: charge.max_voltage,
            min_eta_side: charge.min_eta_side,
            objective: objective_integral(&charge.trace, &weights),
        });
        if keep {
            snapshots.push((cycle, charge.trace));
        }
        log::debug!(
            "{} cycle {cycle}: {:.2} min, soh {:.4}",
            controller.name(),
            charge.seconds / 60.0,
            soh_after
        );
        if soh_after <= cfg.soh_end {
            return Ok(ProtocolRun {
                strategy: controller.name(),
                q_initial,
                cycles,
                snapshots,
                ah_discharged: cell.state().ah_discharged - ah_start,
            });
        }
    }
    Err(Error::BudgetExceeded {
        phase: format!("{} life cycle", controller.name()),
        budget: cfg.max_cycles,
    })
}

/// Result of one strategy in a comparison.
#[derive(Debug)]
pub struct StrategyOutcome {
    pub name: String,
    pub run: Result<ProtocolRun>,
}

pub struct ComparisonReport {
    pub outcomes: Vec<StrategyOutcome>,
    /// Name of the strategy plating losses are compared against.
    pub reference: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub strategy: String,
    pub max_efc: f64,
    pub average_charge_minutes: f64,
    pub cycles: usize,
    pub plating_loss_ah: f64,
    /// Plating loss relative to the reference strategy, (x - ref) / ref.
    pub plating_loss_vs_reference: Option<f64>,
    pub failed: Option<String>,
}

impl ComparisonReport {
    pub fn summary(&self) -> Vec<SummaryRow> {
        let reference = self.reference.as_ref().and_then(|r| {
            self.outcomes
                .iter()
                .find(|o| &o.name == r)
                .and_then(|o| o.run.as_ref().ok())
                .map(|run| run.plating_loss_ah())
        });
        self.outcomes
            .iter()
            .map(|o| match &o.run {
                Ok(run) => SummaryRow {
                    strategy: o.name.clone(),
                    max_efc: run.max_efc(),
                    average_charge_minutes: run.average_charge_minutes(),
                    cycles: run.cycles.len(),
                    plating_loss_ah: run.plating_loss_ah(),
                    plating_loss_vs_reference: reference
                        .filter(|r| *r > 0.0)
                        .map(|r| (run.plating_loss_ah() - r) / r),
                    failed: None,
                },
                Err(e) => SummaryRow {
                    strategy: o.name.clone(),
                    max_efc: f64::NAN,
                    average_charge_minutes: f64::NAN,
                    cycles: 0,
                    plating_loss_ah: f64::NAN,
                    plating_loss_vs_reference: None,
                    failed: Some(e.to_string()),
                },
            })
            .collect()
    }

    pub fn run(&self, name: &str) -> Option<&ProtocolRun> {
        self.outcomes.iter().find(|o| o.name == name).and_then(|o| o.run.as_ref().ok())
    }
}

/// Builds a controller for a fresh comparison run.
pub type StrategyFactory = Box<dyn Fn() -> Result<Box<dyn ChargeController>> + Send + Sync>;

/// Runs every strategy on its own fresh plant, one thread per strategy.
pub fn compare_strategies(
    strategies: &[(String, StrategyFactory)],
    plant_factory: &(dyn Fn() -> Result<Cell> + Sync),
    cfg: &ProtocolConfig,
    reference: Option<&str>,
) -> ComparisonReport {
    let outcomes = std::thread::scope(|scope| {
        let handles: Vec<_> = strategies
            .iter()
            .map(|(name, factory)| {
                let handle = scope.spawn(move || -> Result<ProtocolRun> {
                    let mut controller = factory()?;
                    let mut cell = plant_factory()?;
                    run_protocol(controller.as_mut(), &mut cell, cfg)
                });
                (name.clone(), handle)
            })
            .collect();
        handles
            .into_iter()
            .map(|(name, h)| StrategyOutcome {
                run: h
                    .join()
                    .unwrap_or_else(|_| Err(Error::Panicked(name.clone()))),
                name,
            })
            .collect()
    });
    ComparisonReport {
        outcomes,
        reference: reference.map(str::to_string),
    }
}
