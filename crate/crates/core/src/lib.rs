//! Collision-tolerant scheduling of time-triggered flows over LEO satellite
//! constellations.
//!
//! Pipeline: [`constellation`] builds time-sliced topologies, [`traffic`]
//! samples flows, [`kpaths`] lists candidate routes, [`scheduler`] admits
//! flows and assigns per-hop residence times, [`oracle`] checks schedules,
//! [`simulator`] replays them under drifting clocks and [`harness`] runs
//! whole experiments.

pub mod constellation;
pub mod harness;
pub mod kpaths;
pub mod oracle;
pub mod scheduler;
pub mod simulator;
pub mod timing;
pub mod traffic;
