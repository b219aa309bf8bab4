//! A simulated cell: parameters, grid, state and the latest outputs.

use std::sync::Arc;

use crate::error::Result;
use crate::grid::{build_grid, GridResolution, SpatialGrid};
use crate::model::{equilibrium_window, solve_potentials, CellOutputs, CellState, Potentials};
use crate::numerics::{outputs_from, step_with_start, StepConfig};
use crate::params::CellParameters;

#[derive(Debug, Clone)]
pub struct Cell {
    params: Arc<CellParameters>,
    grid: Arc<SpatialGrid>,
    cfg: StepConfig,
    state: CellState,
    outputs: CellOutputs,
    /// End-of-step algebraic solution and the current it was computed for.
    cached: Option<(f64, Potentials)>,
}

impl Cell {
    /// Fresh cell at rest at `soc`.
    pub fn new(params: CellParameters, resolution: GridResolution, cfg: StepConfig, soc: f64) -> Result<Self> {
        params.validate()?;
        cfg.validate()?;
        let grid = build_grid(&params, resolution)?;
        let state = CellState::fresh(&params, &grid, soc);
        Self::from_state(Arc::new(params), Arc::new(grid), cfg, state)
    }

    pub fn from_state(
        params: Arc<CellParameters>,
        grid: Arc<SpatialGrid>,
        cfg: StepConfig,
        state: CellState,
    ) -> Result<Self> {
        state.validate(&params, &grid)?;
        let pot = solve_potentials(&state, 0.0, &params, &grid, &cfg)?;
        let outputs = outputs_from(&state, &pot, 0.0, &params, &grid);
        Ok(Self {
            params,
            grid,
            cfg,
            state,
            outputs,
            cached: Some((0.0, pot)),
        })
    }

    pub fn params(&self) -> &CellParameters {
        &self.params
    }

    pub fn shared_params(&self) -> Arc<CellParameters> {
        Arc::clone(&self.params)
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn config(&self) -> &StepConfig {
        &self.cfg
    }

    pub fn state(&self) -> &CellState {
        &self.state
    }

    pub fn outputs(&self) -> &CellOutputs {
        &self.outputs
    }

    pub fn soc(&self) -> f64 {
        self.outputs.soc
    }

    pub fn soh(&self) -> f64 {
        self.outputs.soh
    }

    /// Advances by `dt` seconds at constant `current` with the configured substep.
    pub fn step(&mut self, current: f64, dt: f64) -> Result<CellOutputs> {
        let cfg = self.cfg;
        self.advance(current, dt, &cfg)
    }

    /// Advances with a different internal substep, e.g. a coarse one during rests.
    pub fn step_with_substep(&mut self, current: f64, dt: f64, substep: f64) -> Result<CellOutputs> {
        let cfg = StepConfig { dt: substep, ..self.cfg };
        self.advance(current, dt, &cfg)
    }

    fn advance(&mut self, current: f64, dt: f64, cfg: &StepConfig) -> Result<CellOutputs> {
        let start = match self.cached {
            Some((i, pot)) if i == current => Some(pot),
            _ => None,
        };
        let (state, outputs, end) = step_with_start(&self.state, start, current, dt, &self.params, &self.grid, cfg)?;
        self.state = state;
        self.outputs = outputs;
        self.cached = Some((current, end));
        Ok(outputs)
    }

    /// Outputs after a hypothetical step, leaving this cell untouched.
    pub fn preview(&self, current: f64, dt: f64) -> Result<CellOutputs> {
        let start = match self.cached {
            Some((i, pot)) if i == current => Some(pot),
            _ => None,
        };
        step_with_start(&self.state, start, current, dt, &self.params, &self.grid, &self.cfg).map(|(_, o, _)| o)
    }

    /// Equilibrium capacity (Ah) of the lithium currently in the particles.
    pub fn probe_capacity(&self) -> f64 {
        equilibrium_window(&self.state, &self.params, &self.grid).capacity_ah(&self.params)
    }

    /// Capacity check at rest: refreshes the SoC window and recalibrates the
    /// state-of-health ledger. Returns the new state of health.
    pub fn check_soh(&mut self) -> Result<f64> {
        let window = equilibrium_window(&self.state, &self.params, &self.grid);
        self.state.soc_window = window;
        self.state.ledger.recalibrate(window.capacity_ah(&self.params));
        let current = self.outputs.current;
        let pot = solve_potentials(&self.state, current, &self.params, &self.grid, &self.cfg)?;
        self.outputs = outputs_from(&self.state, &pot, current, &self.params, &self.grid);
        self.cached = Some((current, pot));
        Ok(self.outputs.soh)
    }

    /// Replaces the state, e.g. to inject lithium loss in tests.
    pub fn set_state(&mut self, state: CellState) -> Result<()> {
        state.validate(&self.params, &self.grid)?;
        let pot = solve_potentials(&state, 0.0, &self.params, &self.grid, &self.cfg)?;
        self.outputs = outputs_from(&state, &pot, 0.0, &self.params, &self.grid);
        self.state = state;
        self.cached = Some((0.0, pot));
        Ok(())
    }
}
