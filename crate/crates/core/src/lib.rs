//! Discrete-event simulator of a radio access network in which periodic
//! URLLC flows and a distributed-learning workflow share bandwidth under
//! strict-priority QoS.
//!
//! The crate is organized by layer: [`engine`] provides the deterministic
//! event queue and seeded random streams, [`radio`] the abstract PHY,
//! [`mac`] per-TTI strict-priority scheduling with HARQ, [`rlc`] AM/UM link
//! control with segmentation and reassembly, [`traffic`] periodic URLLC
//! generation and deadline tracking, [`fl`] the n-sync learning protocol and
//! its interchangeable learner strategies, and [`metrics`] the availability
//! and training-delay KPIs. [`scenario`] wires one full run; [`sweep`] and
//! [`output`] drive experiment grids and CSV emission.

pub mod config;
pub mod engine;
pub mod fl;
pub mod mac;
pub mod metrics;
pub mod output;
pub mod radio;
pub mod rlc;
pub mod scenario;
pub mod sweep;
pub mod traffic;

pub use config::ScenarioConfig;
pub use scenario::{run_scenario, RunResult};

pub type DeviceId = u32;

/// Transmission direction of a bearer. FDD: the two directions ride
/// independent carriers and never interfere with each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    Ul,
    Dl,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::Ul, Direction::Dl];

    pub fn label(self) -> &'static str {
        match self {
            Direction::Ul => "ul",
            Direction::Dl => "dl",
        }
    }
}

/// Radio bearer class. URLLC outranks AI everywhere a choice exists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Bearer {
    Urllc,
    Ai,
}

impl Bearer {
    pub fn label(self) -> &'static str {
        match self {
            Bearer::Urllc => "urllc",
            Bearer::Ai => "ai",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] config::ConfigError),
    #[error(transparent)]
    Sim(#[from] scenario::SimError),
    #[error(transparent)]
    Output(#[from] output::OutputError),
}
