//! Twin-delayed deep deterministic policy gradient.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::mlp::{soft_update, Adam, Mlp, OutputActivation};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Td3Config {
    pub hidden: Vec<usize>,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub gamma: f64,
    pub buffer_capacity: usize,
    pub minibatch: usize,
    pub tau: f64,
    /// Critic updates per actor and target update.
    pub policy_delay: usize,
    /// Exploration noise standard deviation at the first episode (action units).
    pub sigma_start: f64,
    pub sigma_end: f64,
    pub sigma_decay_episodes: usize,
    /// Target policy smoothing noise and its clip.
    pub target_sigma: f64,
    pub target_clip: f64,
    /// Gradient updates after every environment step once the buffer holds
    /// a minibatch.
    pub updates_per_step: usize,
}

impl Default for Td3Config {
    fn default() -> Self {
        Self {
            hidden: vec![200, 200],
            actor_lr: 1e-4,
            critic_lr: 1e-4,
            gamma: 0.99,
            buffer_capacity: 1_000_000,
            minibatch: 256,
            tau: 0.005,
            policy_delay: 1,
            sigma_start: 0.5,
            sigma_end: 0.05,
            sigma_decay_episodes: 500,
            target_sigma: 0.2,
            target_clip: 0.5,
            updates_per_step: 1,
        }
    }
}

impl Td3Config {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, reason: String| Err(Error::config(key, reason));
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden", format!("need at least one non-empty hidden layer, got {:?}", self.hidden));
        }
        for (key, v) in [("actor_lr", self.actor_lr), ("critic_lr", self.critic_lr)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(key, format!("must be positive, got {v}"));
            }
        }
        if !(self.gamma >= 0.0 && self.gamma < 1.0) {
            return bad("gamma", format!("must lie in [0, 1), got {}", self.gamma));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau", format!("must lie in (0, 1], got {}", self.tau));
        }
        if self.minibatch == 0 || self.minibatch > self.buffer_capacity {
            return bad(
                "minibatch",
                format!("must lie in 1..={}, got {}", self.buffer_capacity, self.minibatch),
            );
        }
        if self.policy_delay == 0 {
            return bad("policy_delay", "must be at least 1".into());
        }
        for (key, v) in [
            ("sigma_start", self.sigma_start),
            ("sigma_end", self.sigma_end),
            ("target_sigma", self.target_sigma),
            ("target_clip", self.target_clip),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(key, format!("must be non-negative, got {v}"));
            }
        }
        Ok(())
    }

    /// Linear decay from `sigma_start` to `sigma_end` over
    /// `sigma_decay_episodes`.
    pub fn exploration_sigma(&self, episode: usize) -> f64 {
        if self.sigma_decay_episodes == 0 {
            return self.sigma_end;
        }
        let f = (episode as f64 / self.sigma_decay_episodes as f64).min(1.0);
        self.sigma_start + f * (self.sigma_end - self.sigma_start)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: f64,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
}

/// Fixed-capacity ring buffer with uniform sampling with replacement.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
}

/// A sampled minibatch in row layout.
#[derive(Debug, Clone)]
pub struct Batch {
    pub states: Array2<f64>,
    pub actions: Array1<f64>,
    pub rewards: Array1<f64>,
    pub next_states: Array2<f64>,
    pub dones: Array1<f64>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            next: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn get(&self, k: usize) -> Option<&Transition> {
        self.items.get(k)
    }

    pub fn sample(&self, n: usize, rng: &mut impl Rng) -> Result<Batch> {
        if self.items.len() < n || n == 0 {
            return Err(Error::Underfilled {
                len: self.items.len(),
                requested: n,
            });
        }
        let dim = self.items[0].state.len();
        let mut b = Batch {
            states: Array2::zeros((n, dim)),
            actions: Array1::zeros(n),
            rewards: Array1::zeros(n),
            next_states: Array2::zeros((n, dim)),
            dones: Array1::zeros(n),
        };
        for row in 0..n {
            let t = &self.items[rng.random_range(0..self.items.len())];
            b.states.row_mut(row).assign(&ArrayView1::from(&t.state[..]));
            b.next_states.row_mut(row).assign(&ArrayView1::from(&t.next_state[..]));
            b.actions[row] = t.action;
            b.rewards[row] = t.reward;
            b.dones[row] = if t.done { 1.0 } else { 0.0 };
        }
        Ok(b)
    }
}

/// Draws from N(mean, sigma^2) restricted to [lo, hi].
pub fn truncated_normal(mean: f64, sigma: f64, lo: f64, hi: f64, rng: &mut impl Rng) -> f64 {
    let mean_c = mean.clamp(lo, hi);
    if sigma <= 0.0 || hi <= lo {
        return mean_c;
    }
    let normal = Normal::new(0.0, sigma).expect("positive sigma");
    for _ in 0..10_000 {
        let x = mean + normal.sample(rng);
        if (lo..=hi).contains(&x) {
            return x;
        }
    }
    // Only reachable when the mean lies many sigmas outside the window, where
    // the mass concentrates at the nearest bound.
    mean_c
}

/// y = r + gamma (1 - done) min(q1', q2')
pub fn td3_target(
    rewards: ArrayView1<f64>,
    dones: ArrayView1<f64>,
    q1_next: ArrayView1<f64>,
    q2_next: ArrayView1<f64>,
    gamma: f64,
) -> Array1<f64> {
    let mut y = Array1::zeros(rewards.len());
    for k in 0..y.len() {
        y[k] = rewards[k] + gamma * (1.0 - dones[k]) * q1_next[k].min(q2_next[k]);
    }
    y
}

/// Critic input rows: the state followed by the action.
pub fn critic_input(states: ArrayView2<f64>, actions: ArrayView1<f64>) -> Array2<f64> {
    let (n, d) = states.dim();
    let mut x = Array2::zeros((n, d + 1));
    x.slice_mut(s![.., ..d]).assign(&states);
    x.column_mut(d).assign(&actions);
    x
}

/// Mean-squared-error gradient step of `critic` toward `y`; returns the loss.
pub fn critic_update(critic: &mut Mlp, opt: &mut Adam, input: ArrayView2<f64>, y: ArrayView1<f64>) -> f64 {
    let cache = critic.forward_cached(input);
    let q = cache.output.column(0);
    let n = y.len() as f64;
    let diff = &q - &y;
    let loss = diff.mapv(|d| d * d).sum() / n;
    let d_out = (diff * (2.0 / n)).insert_axis(Axis(1));
    let (grads, _) = critic.backward(&cache, d_out.view());
    opt.step(critic, &grads);
    loss
}

/// Gradient of -mean Q(s, pi(s)) with respect to the actor parameters,
/// backpropagated through the critic. Returns the gradients and the loss.
pub fn actor_gradient(actor: &Mlp, critic: &Mlp, states: ArrayView2<f64>) -> (super::mlp::Grads, f64) {
    let a_cache = actor.forward_cached(states);
    let actions = a_cache.output.column(0).to_owned();
    let input = critic_input(states, actions.view());
    let c_cache = critic.forward_cached(input.view());
    let n = states.nrows() as f64;
    let loss = -c_cache.output.sum() / n;
    let d_q = Array2::from_elem((states.nrows(), 1), -1.0 / n);
    let (_, d_input) = critic.backward(&c_cache, d_q.view());
    let d_action = d_input.slice(s![.., states.ncols()..]).to_owned();
    let (grads, _) = actor.backward(&a_cache, d_action.view());
    (grads, loss)
}

/// Ascends Q1(s, pi(s)) when `step` is a multiple of `policy_delay`.
/// Returns whether an update was applied.
pub fn actor_update(
    actor: &mut Mlp,
    opt: &mut Adam,
    critic: &Mlp,
    states: ArrayView2<f64>,
    step: usize,
    policy_delay: usize,
) -> bool {
    if policy_delay == 0 || step % policy_delay != 0 {
        return false;
    }
    let (grads, _) = actor_gradient(actor, critic, states);
    opt.step(actor, &grads);
    true
}

/// Losses from one training iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats {
    pub critic1_loss: f64,
    pub critic2_loss: f64,
    pub actor_updated: bool,
}

#[derive(Debug, Clone)]
pub struct Td3Agent {
    pub cfg: Td3Config,
    pub state_dim: usize,
    pub action_lo: f64,
    pub action_hi: f64,
    pub actor: Mlp,
    pub actor_target: Mlp,
    pub critic1: Mlp,
    pub critic2: Mlp,
    pub critic1_target: Mlp,
    pub critic2_target: Mlp,
    actor_opt: Adam,
    critic1_opt: Adam,
    critic2_opt: Adam,
    pub buffer: ReplayBuffer,
    updates: usize,
}

impl Td3Agent {
    pub fn new(cfg: Td3Config, state_dim: usize, action_lo: f64, action_hi: f64, rng: &mut ChaCha8Rng) -> Result<Self> {
        cfg.validate()?;
        if !(action_hi > action_lo) {
            return Err(Error::config("action_bounds", format!("need lo < hi, got [{action_lo}, {action_hi}]")));
        }
        let mut actor_sizes = vec![state_dim];
        actor_sizes.extend(&cfg.hidden);
        actor_sizes.push(1);
        let mut critic_sizes = vec![state_dim + 1];
        critic_sizes.extend(&cfg.hidden);
        critic_sizes.push(1);
        let out = OutputActivation::ScaledSigmoid {
            lo: action_lo,
            hi: action_hi,
        };
        let actor = Mlp::new(&actor_sizes, out, 3e-3, rng);
        let critic1 = Mlp::new(&critic_sizes, OutputActivation::Identity, 3e-3, rng);
        let critic2 = Mlp::new(&critic_sizes, OutputActivation::Identity, 3e-3, rng);
        Ok(Self {
            actor_opt: Adam::new(&actor, cfg.actor_lr),
            critic1_opt: Adam::new(&critic1, cfg.critic_lr),
            critic2_opt: Adam::new(&critic2, cfg.critic_lr),
            actor_target: actor.clone(),
            critic1_target: critic1.clone(),
            critic2_target: critic2.clone(),
            actor,
            critic1,
            critic2,
            buffer: ReplayBuffer::new(cfg.buffer_capacity),
            updates: 0,
            state_dim,
            action_lo,
            action_hi,
            cfg,
        })
    }

    pub fn policy(&self, state: &[f64]) -> f64 {
        self.actor.forward_one(state)[0]
    }

    /// Deterministic action plus truncated Gaussian exploration noise.
    pub fn select_action(&self, state: &[f64], sigma: f64, rng: &mut impl Rng) -> f64 {
        truncated_normal(self.policy(state), sigma, self.action_lo, self.action_hi, rng)
    }

    pub fn updates(&self) -> usize {
        self.updates
    }

    /// Target actions with clipped smoothing noise, kept inside the bounds.
    fn smoothed_target_actions(&self, next_states: ArrayView2<f64>, rng: &mut impl Rng) -> Array1<f64> {
        let mut a = self.actor_target.forward(next_states).column(0).to_owned();
        if self.cfg.target_sigma > 0.0 {
            let normal = Normal::new(0.0, self.cfg.target_sigma).expect("positive sigma");
            let c = self.cfg.target_clip;
            a.mapv_inplace(|x| (x + normal.sample(rng).clamp(-c, c)).clamp(self.action_lo, self.action_hi));
        }
        a
    }

    pub fn update(&mut self, rng: &mut ChaCha8Rng) -> Result<UpdateStats> {
        let b = self.buffer.sample(self.cfg.minibatch, rng)?;
        let a_next = self.smoothed_target_actions(b.next_states.view(), rng);
        let next_in = critic_input(b.next_states.view(), a_next.view());
        let q1n = self.critic1_target.forward(next_in.view());
        let q2n = self.critic2_target.forward(next_in.view());
        let y = td3_target(b.rewards.view(), b.dones.view(), q1n.column(0), q2n.column(0), self.cfg.gamma);
        let input = critic_input(b.states.view(), b.actions.view());
        let l1 = critic_update(&mut self.critic1, &mut self.critic1_opt, input.view(), y.view());
        let l2 = critic_update(&mut self.critic2, &mut self.critic2_opt, input.view(), y.view());
        self.updates += 1;
        let updated = actor_update(
            &mut self.actor,
            &mut self.actor_opt,
            &self.critic1,
            b.states.view(),
            self.updates,
            self.cfg.policy_delay,
        );
        if updated {
            let tau = self.cfg.tau;
            soft_update(&mut self.actor_target, &self.actor, tau);
            soft_update(&mut self.critic1_target, &self.critic1, tau);
            soft_update(&mut self.critic2_target, &self.critic2, tau);
        }
        if !(l1.is_finite() && l2.is_finite()) {
            return Err(Error::Diverged(format!("critic loss ({l1}, {l2})")));
        }
        Ok(UpdateStats {
            critic1_loss: l1,
            critic2_loss: l2,
            actor_updated: updated,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;

    fn transition(k: usize) -> Transition {
        Transition {
            state: vec![k as f64, 0.0],
            action: 0.0,
            reward: k as f64,
            next_state: vec![0.0, 0.0],
            done: false,
        }
    }

    #[test]
    fn target_example() {
        let y = td3_target(
            array![1.0].view(),
            array![0.0].view(),
            array![2.0].view(),
            array![3.0].view(),
            0.99,
        );
        assert!((y[0] - 2.98).abs() < 1e-12);
        let y = td3_target(
            array![1.0].view(),
            array![1.0].view(),
            array![2.0].view(),
            array![3.0].view(),
            0.99,
        );
        assert_eq!(y[0], 1.0);
    }

    #[test]
    fn buffer_ring_and_underfill() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut b = ReplayBuffer::new(3);
        b.push(transition(0));
        assert!(matches!(b.sample(2, &mut rng), Err(Error::Underfilled { len: 1, requested: 2 })));
        for k in 1..5 {
            b.push(transition(k));
        }
        assert_eq!(b.len(), 3);
        let mut rewards: Vec<f64> = (0..3).map(|k| b.get(k).unwrap().reward).collect();
        rewards.sort_by(f64::total_cmp);
        assert_eq!(rewards, vec![2.0, 3.0, 4.0]);
        let batch = b.sample(3, &mut rng).unwrap();
        assert!(batch.rewards.iter().all(|r| (2.0..=4.0).contains(r)));
    }

    #[test]
    fn actor_follows_quadratic_critic() {
        // Critic Q(s, a) = -(a - 3)^2 built from ReLU units:
        // hidden h1 = relu(a), h2 = relu(-a) gives a = h1 - h2, but squaring
        // needs a nonlinearity, so fit the critic by regression instead.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut critic = Mlp::new(&[2, 64, 64, 1], OutputActivation::Identity, 0.1, &mut rng);
        let mut opt = Adam::new(&critic, 3e-3);
        for _ in 0..3000 {
            let a = Array1::from_shape_fn(128, |_| rng.random_range(0.0..10.0));
            let s = Array2::from_shape_fn((128, 1), |_| rng.random_range(0.0..1.0));
            let y = a.mapv(|a| -(a - 3.0) * (a - 3.0) / 10.0);
            let x = critic_input(s.view(), a.view());
            critic_update(&mut critic, &mut opt, x.view(), y.view());
        }
        let out = OutputActivation::ScaledSigmoid { lo: 0.0, hi: 10.0 };
        let mut actor = Mlp::new(&[1, 32, 1], out, 3e-3, &mut rng);
        let mut aopt = Adam::new(&actor, 1e-2);
        let states = Array2::from_shape_fn((64, 1), |(k, _)| k as f64 / 64.0);
        for step in 1..=1500 {
            actor_update(&mut actor, &mut aopt, &critic, states.view(), step, 1);
        }
        let a = actor.forward_one(&[0.5])[0];
        assert!((a - 3.0).abs() < 0.15, "actor settled at {a}");
    }

    #[test]
    fn delay_gates_actor() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = OutputActivation::ScaledSigmoid { lo: 0.0, hi: 1.0 };
        let mut actor = Mlp::new(&[1, 4, 1], out, 0.1, &mut rng);
        let critic = Mlp::new(&[2, 4, 1], OutputActivation::Identity, 0.1, &mut rng);
        let mut opt = Adam::new(&actor, 1e-2);
        let s = Array2::from_elem((4, 1), 0.5);
        assert!(!actor_update(&mut actor, &mut opt, &critic, s.view(), 1, 2));
        assert_eq!(opt.steps(), 0);
        assert!(actor_update(&mut actor, &mut opt, &critic, s.view(), 2, 2));
        assert_eq!(opt.steps(), 1);
    }

    #[test]
    fn sigma_schedule() {
        let c = Td3Config::default();
        assert_eq!(c.exploration_sigma(0), 0.5);
        assert!((c.exploration_sigma(250) - 0.275).abs() < 1e-12);
        assert!((c.exploration_sigma(5000) - 0.05).abs() < 1e-12);
    }

    #[test]
    fn config_ranges() {
        let c = Td3Config {
            tau: 1.5,
            ..Td3Config::default()
        };
        assert!(matches!(c.validate(), Err(Error::Config { key, .. }) if key == "tau"));
        assert!(Td3Config::default().validate().is_ok());
    }
}
