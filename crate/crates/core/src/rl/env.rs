//! Training environments: the charging task and a toy tracking task.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cell::Cell;
use crate::controllers::{lookup_vmax, VoltageSohMap};
use crate::error::{Error, Result};
use crate::lifecycle::{constant_current_to, rest, ProtocolConfig};

/// Per-step diagnostics reported alongside the reward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub voltage: f64,
    pub eta_side: f64,
    /// Time since the episode started (min).
    pub minutes: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvStep {
    pub state: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub timed_out: bool,
    pub info: StepInfo,
}

pub trait Environment {
    fn state_dim(&self) -> usize;
    fn action_bounds(&self) -> (f64, f64);
    fn reset(&mut self) -> Result<Vec<f64>>;
    fn step(&mut self, action: f64) -> Result<EnvStep>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardConfig {
    pub lambda_soc: f64,
    pub lambda_vol: f64,
    /// Weight on |a - a_prev| in A.
    pub lambda_smooth: f64,
    pub soc_target: f64,
    pub timeout_minutes: f64,
    pub timeout_penalty: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            lambda_soc: -2.0,
            lambda_vol: -10.0,
            lambda_smooth: -0.5,
            soc_target: 0.8,
            timeout_minutes: 480.0,
            timeout_penalty: -1000.0,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("lambda_soc", self.lambda_soc),
            ("lambda_vol", self.lambda_vol),
            ("lambda_smooth", self.lambda_smooth),
            ("timeout_penalty", self.timeout_penalty),
        ] {
            if !(v <= 0.0 && v.is_finite()) {
                return Err(Error::config(key, format!("penalty weights must be <= 0, got {v}")));
            }
        }
        if !(self.soc_target > 0.0 && self.soc_target <= 1.0) {
            return Err(Error::config("soc_target", format!("must lie in (0, 1], got {}", self.soc_target)));
        }
        if !(self.timeout_minutes > 0.0) {
            return Err(Error::config("timeout_minutes", "must be positive"));
        }
        Ok(())
    }
}

/// Reward split into its penalty terms; every term is <= 0.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RewardTerms {
    pub soc: f64,
    pub voltage: f64,
    pub smooth: f64,
    pub timeout: f64,
}

impl RewardTerms {
    pub fn total(&self) -> f64 {
        self.soc + self.voltage + self.smooth + self.timeout
    }
}

/// Step reward. `prev_action` is `None` on the first step of a charge, which
/// carries no smoothness term.
pub fn reward(soc: f64, voltage: f64, v_max: f64, action: f64, prev_action: Option<f64>, cfg: &RewardConfig) -> RewardTerms {
    RewardTerms {
        soc: cfg.lambda_soc * (cfg.soc_target - soc).abs(),
        voltage: if voltage > v_max { cfg.lambda_vol * (voltage - v_max) } else { 0.0 },
        smooth: prev_action.map_or(0.0, |p| cfg.lambda_smooth * (action - p).abs()),
        timeout: 0.0,
    }
}

/// Normalised observation of the charging task.
pub fn battery_observation(voltage: f64, soc: f64) -> Vec<f64> {
    vec![(voltage - 3.0) / 1.5, soc]
}

pub type PlantFactory = Arc<dyn Fn() -> Result<Cell> + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgingMode {
    /// The cell keeps its degradation across episodes and is replaced once it
    /// reaches end of life.
    Persistent,
    /// Every episode starts from a new cell.
    Fresh,
}

/// One episode is one charge from the precharge SoC to the target, preceded
/// by the protocol's discharge, precharge and rests.
#[derive(Clone)]
pub struct BatteryEnv {
    factory: PlantFactory,
    cell: Cell,
    protocol: ProtocolConfig,
    reward_cfg: RewardConfig,
    map: VoltageSohMap,
    i_max: f64,
    mode: AgingMode,
    started: bool,
    active: bool,
    v_max: f64,
    elapsed: f64,
    prev_action: Option<f64>,
    lives: usize,
}

impl BatteryEnv {
    pub fn new(
        factory: PlantFactory,
        protocol: ProtocolConfig,
        reward_cfg: RewardConfig,
        map: VoltageSohMap,
        i_max: f64,
        mode: AgingMode,
    ) -> Result<Self> {
        protocol.validate()?;
        reward_cfg.validate()?;
        if !(i_max > 0.0) {
            return Err(Error::config("i_max", format!("must be positive, got {i_max}")));
        }
        let cell = factory()?;
        Ok(Self {
            factory,
            cell,
            protocol,
            reward_cfg,
            map,
            i_max,
            mode,
            started: false,
            active: false,
            v_max: f64::NAN,
            elapsed: 0.0,
            prev_action: None,
            lives: 1,
        })
    }

    pub fn cell(&self) -> &Cell {
        &self.cell
    }

    /// Voltage limit used by the reward in the current episode.
    pub fn v_max(&self) -> f64 {
        self.v_max
    }

    /// Cells used so far, counting the current one.
    pub fn lives(&self) -> usize {
        self.lives
    }

    fn replace_cell(&mut self) -> Result<()> {
        self.cell = (self.factory)()?;
        self.lives += 1;
        Ok(())
    }
}

impl Environment for BatteryEnv {
    fn state_dim(&self) -> usize {
        2
    }

    fn action_bounds(&self) -> (f64, f64) {
        (0.0, self.i_max)
    }

    fn reset(&mut self) -> Result<Vec<f64>> {
        let p = self.protocol.clone();
        match self.mode {
            AgingMode::Fresh if self.started => self.replace_cell()?,
            AgingMode::Persistent if self.started => {
                constant_current_to(
                    &mut self.cell,
                    -p.discharge_current,
                    0.0,
                    p.sample_seconds,
                    p.max_phase_steps,
                    "discharge",
                )?;
                rest(&mut self.cell, p.rest_seconds, p.rest_substep)?;
                if self.cell.check_soh()? <= p.soh_end {
                    self.replace_cell()?;
                }
            }
            _ => {}
        }
        self.started = true;
        if self.cell.soc() < p.soc_precharge {
            constant_current_to(
                &mut self.cell,
                p.precharge_current,
                p.soc_precharge,
                p.sample_seconds,
                p.max_phase_steps,
                "precharge",
            )?;
        }
        rest(&mut self.cell, p.rest_seconds, p.rest_substep)?;
        self.v_max = lookup_vmax(&self.map, self.cell.soh())?;
        self.elapsed = 0.0;
        self.prev_action = None;
        self.active = true;
        let o = self.cell.outputs();
        Ok(battery_observation(o.voltage, o.soc))
    }

    fn step(&mut self, action: f64) -> Result<EnvStep> {
        if !self.active {
            return Err(Error::EpisodeOver);
        }
        let a = action.clamp(0.0, self.i_max);
        let target = self.reward_cfg.soc_target;
        let sample = self.protocol.sample_seconds;
        let dt = if a > 0.0 {
            let cap = self.cell.state().soc_window.capacity_ah(self.cell.params());
            let need = (target - self.cell.soc()).max(0.0) * cap * 3600.0 / a;
            sample.min(need * (1.0 + 1e-9) + 1e-6)
        } else {
            sample
        };
        let o = self.cell.step(a, dt)?;
        self.elapsed += dt;
        let mut terms = reward(o.soc, o.voltage, self.v_max, a, self.prev_action, &self.reward_cfg);
        self.prev_action = Some(a);
        let reached = o.soc >= target;
        let timed_out = !reached && self.elapsed >= self.reward_cfg.timeout_minutes * 60.0;
        if timed_out {
            terms.timeout = self.reward_cfg.timeout_penalty;
        }
        let done = reached || timed_out;
        self.active = !done;
        Ok(EnvStep {
            state: battery_observation(o.voltage, o.soc),
            reward: terms.total(),
            done,
            timed_out,
            info: StepInfo {
                voltage: o.voltage,
                eta_side: o.eta_side,
                minutes: self.elapsed / 60.0,
            },
        })
    }
}

/// Track a moving set-point g_k = 0.5 + 0.4 sin(phase + 0.6 k) with a
/// bounded action. The reward exp(-((a - g) / width)^2) is at most 1 and the
/// optimal policy a = g earns exactly `horizon` per episode.
#[derive(Debug, Clone)]
pub struct ToyTrackingEnv {
    pub horizon: usize,
    pub width: f64,
    rng: ChaCha8Rng,
    phase: f64,
    k: usize,
    active: bool,
}

impl ToyTrackingEnv {
    pub fn new(horizon: usize, width: f64, seed: u64) -> Self {
        Self {
            horizon,
            width,
            rng: ChaCha8Rng::seed_from_u64(seed),
            phase: 0.0,
            k: 0,
            active: false,
        }
    }

    pub fn optimal_return(&self) -> f64 {
        self.horizon as f64
    }

    fn setpoint(&self) -> f64 {
        0.5 + 0.4 * (self.phase + 0.6 * self.k as f64).sin()
    }

    fn observation(&self) -> Vec<f64> {
        vec![self.setpoint(), self.k as f64 / self.horizon as f64]
    }
}

impl Environment for ToyTrackingEnv {
    fn state_dim(&self) -> usize {
        2
    }

    fn action_bounds(&self) -> (f64, f64) {
        (0.0, 1.0)
    }

    fn reset(&mut self) -> Result<Vec<f64>> {
        self.phase = self.rng.random_range(0.0..std::f64::consts::TAU);
        self.k = 0;
        self.active = true;
        Ok(self.observation())
    }

    fn step(&mut self, action: f64) -> Result<EnvStep> {
        if !self.active {
            return Err(Error::EpisodeOver);
        }
        let err = (action.clamp(0.0, 1.0) - self.setpoint()) / self.width;
        let r = (-err * err).exp();
        self.k += 1;
        let done = self.k >= self.horizon;
        self.active = !done;
        Ok(EnvStep {
            state: self.observation(),
            reward: r,
            done,
            timed_out: false,
            info: StepInfo {
                voltage: f64::NAN,
                eta_side: f64::NAN,
                minutes: self.k as f64,
            },
        })
    }
}
