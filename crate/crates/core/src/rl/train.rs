//! Training loop, evaluation, checkpoints and the trained-policy controller.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::env::{battery_observation, AgingMode, Environment};
use super::mlp::Mlp;
use super::td3::{Td3Agent, Td3Config, Transition};
use crate::cell::Cell;
use crate::controllers::ChargeController;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub episodes: usize,
    pub eval_every: usize,
    /// Environment steps taken with uniform random actions before the policy
    /// is used.
    pub warmup_steps: usize,
    /// Stop early once an evaluation return reaches this value.
    pub stop_at_return: Option<f64>,
    pub aging: AgingMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            episodes: 300,
            eval_every: 20,
            warmup_steps: 1000,
            stop_at_return: None,
            aging: AgingMode::Persistent,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(Error::config("episodes", "must be at least 1"));
        }
        if self.eval_every == 0 {
            return Err(Error::config("eval_every", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub reward: f64,
    pub steps: usize,
    pub max_voltage: f64,
    pub min_eta_side: f64,
    pub charge_minutes: f64,
    pub timed_out: bool,
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub episode: usize,
    pub reward: f64,
    pub max_voltage: f64,
    pub min_eta_side: f64,
    pub charge_minutes: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TrainingLog {
    pub episode_rewards: Vec<f64>,
    pub evaluations: Vec<EvalRecord>,
    /// Best evaluation and the actor that produced it.
    pub best: Option<(EvalRecord, Mlp)>,
    /// First episode that started after the random-action warm-up.
    pub first_policy_episode: Option<usize>,
}

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("episode,reward,max_V,min_eta_side,charge_minutes\n");
        for e in &self.evaluations {
            let _ = writeln!(
                s,
                "{},{:.6},{:.6},{:.6},{:.6}",
                e.episode, e.reward, e.max_voltage, e.min_eta_side, e.charge_minutes
            );
        }
        s
    }
}

/// Runs one episode. With `rng` the agent explores with noise `sigma` and
/// learns from every step; without it the deterministic policy is rolled out.
pub fn run_episode<E: Environment>(
    env: &mut E,
    agent: &mut Td3Agent,
    mut learn: Option<(&mut ChaCha8Rng, f64, &mut usize, usize)>,
) -> Result<EpisodeSummary> {
    let mut s = env.reset()?;
    let mut summary = EpisodeSummary {
        reward: 0.0,
        steps: 0,
        max_voltage: f64::NEG_INFINITY,
        min_eta_side: f64::INFINITY,
        charge_minutes: 0.0,
        timed_out: false,
    };
    loop {
        let a = match learn.as_mut() {
            Some((rng, sigma, total_steps, warmup)) => {
                if **total_steps < *warmup {
                    rng.random_range(agent.action_lo..=agent.action_hi)
                } else {
                    agent.select_action(&s, *sigma, *rng)
                }
            }
            None => agent.policy(&s),
        };
        let st = env.step(a)?;
        summary.reward += st.reward;
        summary.steps += 1;
        summary.max_voltage = summary.max_voltage.max(st.info.voltage);
        summary.min_eta_side = summary.min_eta_side.min(st.info.eta_side);
        summary.charge_minutes = st.info.minutes;
        summary.timed_out = st.timed_out;
        if let Some((rng, _, total_steps, _)) = learn.as_mut() {
            // A timeout truncates the episode; the state is not terminal.
            agent.buffer.push(Transition {
                state: std::mem::take(&mut s),
                action: a,
                reward: st.reward,
                next_state: st.state.clone(),
                done: st.done && !st.timed_out,
            });
            **total_steps += 1;
            if agent.buffer.len() >= agent.cfg.minibatch {
                for _ in 0..agent.cfg.updates_per_step {
                    agent.update(rng)?;
                }
            }
        }
        s = st.state;
        if st.done {
            return Ok(summary);
        }
    }
}

/// Deterministic rollout on a copy of `env`, leaving the original untouched.
pub fn evaluate_policy<E: Environment + Clone>(env: &E, agent: &mut Td3Agent) -> Result<EpisodeSummary> {
    let mut copy = env.clone();
    run_episode(&mut copy, agent, None)
}

/// Trains `agent` on `env`, evaluating every `eval_every` episodes.
/// `on_eval` sees each evaluation as it is recorded. If a checkpoint path is
/// given the agent is saved there after every evaluation and when training
/// fails.
pub fn train<E: Environment + Clone>(
    env: &mut E,
    agent: &mut Td3Agent,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
    checkpoint: Option<&Path>,
    mut on_eval: impl FnMut(&EvalRecord),
) -> Result<TrainingLog> {
    cfg.validate()?;
    let mut log = TrainingLog::default();
    let mut total_steps = 0usize;
    for episode in 1..=cfg.episodes {
        let sigma = agent.cfg.exploration_sigma(episode - 1);
        if log.first_policy_episode.is_none() && total_steps >= cfg.warmup_steps {
            log.first_policy_episode = Some(episode);
        }
        let outcome = run_episode(env, agent, Some((rng, sigma, &mut total_steps, cfg.warmup_steps)));
        let summary = match outcome {
            Ok(s) => s,
            Err(e) => {
                if let Some(path) = checkpoint {
                    save_checkpoint(agent, path)?;
                }
                return Err(e);
            }
        };
        log.episode_rewards.push(summary.reward);
        if episode % cfg.eval_every == 0 || episode == cfg.episodes {
            let ev = evaluate_policy(env, agent)?;
            let rec = EvalRecord {
                episode,
                reward: ev.reward,
                max_voltage: ev.max_voltage,
                min_eta_side: ev.min_eta_side,
                charge_minutes: ev.charge_minutes,
            };
            on_eval(&rec);
            if log.best.as_ref().is_none_or(|(b, _)| rec.reward > b.reward) {
                log.best = Some((rec, agent.actor.clone()));
            }
            log.evaluations.push(rec);
            if let Some(path) = checkpoint {
                save_checkpoint(agent, path)?;
            }
            if cfg.stop_at_return.is_some_and(|target| rec.reward >= target) {
                break;
            }
        }
    }
    Ok(log)
}

const CHECKPOINT_MAGIC: &str = "fastcharge-td3-checkpoint";
const CHECKPOINT_VERSION: u32 = 1;

fn net_names(agent: &Td3Agent) -> [(&'static str, &Mlp); 6] {
    [
        ("actor", &agent.actor),
        ("actor_target", &agent.actor_target),
        ("critic1", &agent.critic1),
        ("critic2", &agent.critic2),
        ("critic1_target", &agent.critic1_target),
        ("critic2_target", &agent.critic2_target),
    ]
}

/// Text checkpoint: versioned header, the configuration echoed as TOML and
/// every network as a flat parameter array. Optimiser moments and the replay
/// buffer are not stored.
pub fn checkpoint_text(agent: &Td3Agent) -> String {
    let mut s = format!("{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}\n");
    let _ = writeln!(s, "state_dim {}", agent.state_dim);
    let _ = writeln!(s, "action_bounds {:e} {:e}", agent.action_lo, agent.action_hi);
    let cfg = toml::to_string(&agent.cfg).expect("config serialises");
    let _ = writeln!(s, "config {}", cfg.lines().count());
    s.push_str(&cfg);
    if !cfg.ends_with('\n') {
        s.push('\n');
    }
    for (name, net) in net_names(agent) {
        let flat = net.to_flat();
        let _ = writeln!(s, "network {name} {}", flat.len());
        let line: Vec<String> = flat.iter().map(|x| format!("{x:e}")).collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    s
}

pub fn save_checkpoint(agent: &Td3Agent, path: &Path) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, checkpoint_text(agent)).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn parse_checkpoint(text: &str) -> Result<Td3Agent> {
    let bad = |m: String| Error::Checkpoint(m);
    let mut lines = text.lines();
    let mut next = |what: &str| lines.next().ok_or_else(|| bad(format!("truncated before {what}")));
    let header = next("header")?;
    let version = header
        .strip_prefix(CHECKPOINT_MAGIC)
        .map(str::trim)
        .ok_or_else(|| bad(format!("not a checkpoint: {header:?}")))?;
    if version != CHECKPOINT_VERSION.to_string() {
        return Err(bad(format!("unsupported version {version}")));
    }
    let field = |line: &str, key: &str| -> Result<Vec<String>> {
        let mut parts = line.split_whitespace();
        if parts.next() != Some(key) {
            return Err(Error::Checkpoint(format!("expected `{key}`, found {line:?}")));
        }
        Ok(parts.map(String::from).collect())
    };
    let num = |s: &str| s.parse::<f64>().map_err(|e| Error::Checkpoint(format!("{s:?}: {e}")));
    let state_dim: usize = field(next("state_dim")?, "state_dim")?
        .first()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| bad("bad state_dim".into()))?;
    let bounds = field(next("action_bounds")?, "action_bounds")?;
    if bounds.len() != 2 {
        return Err(bad("action_bounds needs two values".into()));
    }
    let (lo, hi) = (num(&bounds[0])?, num(&bounds[1])?);
    let n_cfg: usize = field(next("config")?, "config")?
        .first()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| bad("bad config line count".into()))?;
    let mut cfg_text = String::new();
    for _ in 0..n_cfg {
        cfg_text.push_str(next("config body")?);
        cfg_text.push('\n');
    }
    let cfg: Td3Config = toml::from_str(&cfg_text).map_err(|e| bad(format!("config: {e}")))?;
    // Weights are overwritten below, so the seed is irrelevant.
    let mut rng = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
    let mut agent = Td3Agent::new(cfg, state_dim, lo, hi, &mut rng)?;
    let mut loaded = Vec::new();
    for _ in 0..6 {
        let head = field(next("network")?, "network")?;
        let (name, len) = match head.as_slice() {
            [name, len] => (name.clone(), len.parse::<usize>().map_err(|e| bad(e.to_string()))?),
            _ => return Err(bad("malformed network header".into())),
        };
        let values = next("network values")?
            .split_whitespace()
            .map(num)
            .collect::<Result<Vec<f64>>>()?;
        if values.len() != len {
            return Err(bad(format!("{name}: expected {len} values, found {}", values.len())));
        }
        loaded.push((name, values));
    }
    for (name, values) in loaded {
        let net = match name.as_str() {
            "actor" => &mut agent.actor,
            "actor_target" => &mut agent.actor_target,
            "critic1" => &mut agent.critic1,
            "critic2" => &mut agent.critic2,
            "critic1_target" => &mut agent.critic1_target,
            "critic2_target" => &mut agent.critic2_target,
            other => return Err(bad(format!("unknown network {other:?}"))),
        };
        if values.len() != net.parameter_count() {
            return Err(bad(format!(
                "{name}: {} values do not fit a network with {} parameters",
                values.len(),
                net.parameter_count()
            )));
        }
        net.set_flat(&values);
    }
    Ok(agent)
}

pub fn load_checkpoint(path: &Path) -> Result<Td3Agent> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_checkpoint(&text)
}

/// Charging controller that follows a trained actor.
#[derive(Debug, Clone)]
pub struct PolicyController {
    actor: Mlp,
    i_max: f64,
    label: String,
}

impl PolicyController {
    pub fn new(actor: Mlp, i_max: f64) -> Self {
        Self {
            actor,
            i_max,
            label: "Proposed".into(),
        }
    }

    pub fn from_checkpoint(path: &Path) -> Result<Self> {
        let agent = load_checkpoint(path)?;
        Ok(Self::new(agent.actor, agent.action_hi))
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }
}

impl ChargeController for PolicyController {
    fn name(&self) -> String {
        self.label.clone()
    }

    fn begin_charge(&mut self, _plant: &Cell) -> Result<()> {
        Ok(())
    }

    fn current(&mut self, plant: &Cell, _dt: f64) -> Result<f64> {
        let o = plant.outputs();
        let a = self.actor.forward_one(&battery_observation(o.voltage, o.soc))[0];
        Ok(a.clamp(0.0, self.i_max))
    }
}

/// Default file names written by a training run.
pub fn training_paths(dir: &Path) -> (PathBuf, PathBuf, PathBuf) {
    (dir.join("training_log.csv"), dir.join("checkpoint.txt"), dir.join("best_policy.txt"))
}
