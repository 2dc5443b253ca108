//! Control stack for an induction heating line, built desk-scale.
//!
//! The crate is organized around five subsystems:
//!
//! - [`twin`] — deterministic discrete-time digital twin of the 25 m furnace
//!   (movement, temperature, controller, warmholding and sensor managers).
//! - [`fabric`] — in-process message fabric: an ordered, replayable
//!   publish/subscribe bus, a typed tag server standing in for the plant
//!   gateway, and the storage services used by the pipeline.
//! - [`telemetry`] — the telemetry parser, state-snapshot builder, power
//!   updater, forge data retriever, connection check and latency reports.
//! - [`power`] — power-to-voltage conversion, decision managers with
//!   hot-swappable algorithm versions, sanity checks and the deployment
//!   model wrapper with its unified 23-in/20-out interface.
//! - [`drl`] — from-scratch MLP with analytic backpropagation, DQN and PPO
//!   agents, reward families, the environment contract and the training loop.
//!
//! [`pipeline`] wires fabric + telemetry + power into the end-to-end chain
//! used by the CLI and the benchmark harness.

pub mod clock;
pub mod drl;
pub mod fabric;
pub mod pipeline;
pub mod power;
pub mod telemetry;
pub mod twin;

pub use clock::Clock;
pub use twin::{FurnaceState, Mode, PowerAction, Rod, SensorMode, TwinConfig};

/// Number of induction zones in the furnace.
pub const ZONE_COUNT: usize = 5;
