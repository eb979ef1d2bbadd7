//! Deterministic, seedable, two-timescale simulator of a UAV-assisted
//! mobile-edge-computing system.
//!
//! Fine-grained time slots carry channel realizations, task arrivals,
//! per-pair resource negotiation and many-to-one task/server matching;
//! coarse epochs carry device mobility and UAV trajectory optimization.
//! The crate ships the full negotiation/matching/trajectory pipeline,
//! five baseline strategies, and the four summary metrics.

pub mod bargaining;
pub mod channel;
pub mod config;
pub mod cost;
pub mod matching;
pub mod mobility;
pub mod model;
pub mod orchestrator;
pub mod trajectory;
pub mod utility;

pub use config::{ConfigError, ScenarioConfig};
pub use model::{MecServer, MobileDevice, Task, TaskStatus, TradeOutcome, WorldState};
pub use orchestrator::{MetricsAccumulator, MetricsReport, RunOutput, StrategyKind};
