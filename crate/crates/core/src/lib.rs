//! Self-reconfiguration planning for lattice-modular spacecraft.
//!
//! The crate covers the whole pipeline: the lattice state and action model
//! ([`lattice`]), expert demonstrations ([`expert`]), adversarial imitation
//! ([`gail`]), the masked actor-critic sequence planner ([`planner`]), the
//! surface interface graph the assembly arm walks on ([`surface`]), A*
//! routing and approach waypoints ([`route`]), arm kinematics and trajectory
//! generation ([`kinematics`]) and the end-to-end pipeline with trace export
//! ([`orchestrator`]).

pub mod checkpoint;
pub mod expert;
pub mod gail;
pub mod kinematics;
pub mod lattice;
pub mod nn;
pub mod orchestrator;
pub mod planner;
pub mod route;
pub mod surface;

mod error;

pub use error::Error;

fn format_version() -> u32 {
    FORMAT_VERSION
}

/// Version tag written into every JSON artifact.
pub const FORMAT_VERSION: u32 = 1;
