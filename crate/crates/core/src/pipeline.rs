//! End-to-end workflows shared by the command line and the acceptance tests.

use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cell::Cell;
use crate::controllers::{build_voltage_soh_map, CcCop, CcCv, CcCvV, ChargeController, VoltageSohMap};
use crate::error::Result;
use crate::io::RunConfig;
use crate::lifecycle::{compare_strategies, ComparisonReport, StrategyFactory};
use crate::params::CellParameters;
use crate::rl::env::{BatteryEnv, PlantFactory};
use crate::rl::mlp::Mlp;
use crate::rl::td3::Td3Agent;
use crate::rl::train::{train, EvalRecord, PolicyController, TrainingLog};

pub const PROPOSED: &str = "Proposed";

pub fn parameters(cfg: &RunConfig) -> Result<CellParameters> {
    let p = match &cfg.parameters {
        Some(path) => CellParameters::from_file(path)?,
        None => CellParameters::lg_m50(),
    };
    Ok(p.with_aging_factor(cfg.accel))
}

/// Fresh, empty cells built from the run configuration.
pub fn plant_factory(cfg: &RunConfig) -> Result<PlantFactory> {
    let params = parameters(cfg)?;
    params.validate()?;
    let (grid, step) = (cfg.grid, cfg.step);
    Ok(Arc::new(move || Cell::new(params.clone(), grid, step, 0.0)))
}

/// Builds the cut-off voltage map by cycling a plant under CC-COP-slow.
pub fn build_map(cfg: &RunConfig) -> Result<VoltageSohMap> {
    let factory = plant_factory(cfg)?;
    let protocol = crate::lifecycle::ProtocolConfig {
        snapshot_cycles: vec![],
        ..cfg.protocol.clone()
    };
    build_voltage_soh_map(&|| factory(), &cfg.cop_slow, &protocol)
}

/// Loads the map from `path` when given, otherwise builds it.
pub fn load_or_build_map(cfg: &RunConfig, path: Option<&Path>) -> Result<VoltageSohMap> {
    match path {
        Some(p) => VoltageSohMap::load(p),
        None => build_map(cfg),
    }
}

/// The benchmark strategies, plus the trained policy when one is given.
pub fn strategies(cfg: &RunConfig, map: &VoltageSohMap, policy: Option<&Mlp>) -> Vec<(String, StrategyFactory)> {
    let mut out: Vec<(String, StrategyFactory)> = Vec::new();
    let base = cfg.controller;
    out.push(("CC-CV".into(), Box::new(move || Ok(Box::new(CcCv::new(base)) as Box<dyn ChargeController>))));
    let m = map.clone();
    out.push((
        "CC-CV-V".into(),
        Box::new(move || Ok(Box::new(CcCvV::new(base, m.clone())) as Box<dyn ChargeController>)),
    ));
    for c in [cfg.cop_slow, cfg.cop_fast] {
        let name = CcCop::new(c).name();
        out.push((name, Box::new(move || Ok(Box::new(CcCop::new(c)) as Box<dyn ChargeController>))));
    }
    if let Some(actor) = policy {
        let actor = actor.clone();
        let i_max = cfg.controller.i_max;
        out.push((
            PROPOSED.into(),
            Box::new(move || Ok(Box::new(PolicyController::new(actor.clone(), i_max)) as Box<dyn ChargeController>)),
        ));
    }
    out
}

pub fn compare(cfg: &RunConfig, map: &VoltageSohMap, policy: Option<&Mlp>) -> Result<ComparisonReport> {
    let factory = plant_factory(cfg)?;
    let strategies = strategies(cfg, map, policy);
    Ok(compare_strategies(&strategies, &|| factory(), &cfg.protocol, Some("CC-CV")))
}

pub fn battery_env(cfg: &RunConfig, map: &VoltageSohMap) -> Result<BatteryEnv> {
    BatteryEnv::new(
        plant_factory(cfg)?,
        cfg.protocol.clone(),
        cfg.reward.clone(),
        map.clone(),
        cfg.controller.i_max,
        cfg.training.aging,
    )
}

/// Trains a fresh agent on the charging task.
pub fn train_agent(
    cfg: &RunConfig,
    map: &VoltageSohMap,
    checkpoint: Option<&Path>,
    on_eval: impl FnMut(&EvalRecord),
) -> Result<(Td3Agent, TrainingLog)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut env = battery_env(cfg, map)?;
    let mut agent = Td3Agent::new(cfg.td3.clone(), 2, 0.0, cfg.controller.i_max, &mut rng)?;
    let log = train(&mut env, &mut agent, &cfg.training, &mut rng, checkpoint, on_eval)?;
    Ok((agent, log))
}
