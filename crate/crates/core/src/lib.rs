//! Mesoscopic queueing-network simulation of a signalized grid with
//! vehicles and pedestrians, pedestrian-aware max-pressure control,
//! stable-region analysis and delay metrics.

pub mod config;
pub mod control;
pub mod dynamics;
pub mod engine;
pub mod error;
pub mod lp;
pub mod metrics;
pub mod net;
pub mod od;
pub mod par;
pub mod report;
pub mod stability;

pub use config::Config;
pub use control::{ControllerConfig, ControllerKind};
pub use engine::{run_once, RunSpec, RunSummary, Scenario};
pub use error::EngineError;
