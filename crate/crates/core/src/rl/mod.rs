//! TD3 charging agent: networks, replay, updates, environments and training.

pub mod env;
pub mod mlp;
pub mod td3;
pub mod train;

pub use env::{AgingMode, BatteryEnv, Environment, RewardConfig, ToyTrackingEnv};
pub use mlp::{Adam, Mlp, OutputActivation};
pub use td3::{Td3Agent, Td3Config};
pub use train::{train, PolicyController, TrainConfig, TrainingLog};
