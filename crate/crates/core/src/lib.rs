//! Blockchain-anchored SDN/IoT security simulator.
//!
//! A discrete-event model of a software-defined network whose controller
//! cluster versions flow rules on a proof-of-work chain, verifies switch
//! tables against it, and isolates tampered switches; plus an energy-aware
//! IoT clustering layer feeding traffic into the fabric.

pub mod control_plane;
pub mod data_plane;
pub mod digest;
pub mod engine;
pub mod iot;
pub mod ledger;
pub mod metrics;
pub mod rng;
pub mod time;
pub mod traffic;

pub use digest::Digest;
pub use time::SimTime;
