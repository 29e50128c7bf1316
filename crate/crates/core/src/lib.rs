//! A discrete-event, cycle-level simulator of a hardware-managed DRAM cache
//! in front of a slower far memory.
//!
//! Demands from a traffic source enter the [`manager::CacheManager`], which
//! resolves each one to a request class and runs the access plan that the
//! active [`policy::PolicyKind`] prescribes against banked
//! [`device::Device`] models of the near and far memories. Everything is
//! driven by one [`engine::Engine`], so a seed fully determines a run.

pub mod config;
pub mod device;
pub mod engine;
pub mod error;
pub mod link;
pub mod manager;
pub mod policy;
pub mod scenario;
pub mod system;
pub mod telemetry;
pub mod traffic;
pub mod types;
pub mod validate;

pub use config::{ConfigDoc, RunConfig};
pub use error::{ConfigError, MetricError, SimError};
pub use policy::PolicyKind;
pub use system::{run_config, RunOutcome, System};
pub use types::{RequestClass, Tick};
