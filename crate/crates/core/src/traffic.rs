//! Periodic time-triggered flows and their deadlines.

use std::fs::File;
use std::path::Path as FsPath;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constellation::{NodeId, TopologySnapshot};
use crate::kpaths::{k_shortest_paths_on, Graph};
use crate::timing::transmission_time;

/// Attempts per flow before giving up on finding a usable pair.
const MAX_PAIR_RETRIES: usize = 10_000;

#[derive(Debug, Error)]
pub enum TrafficError {
    #[error("d_phy must be positive, got {0}")]
    NonPositiveDelay(f64),
    #[error("invalid deadline policy: {0}")]
    InvalidPolicy(&'static str),
    #[error("invalid flow parameter: {0}")]
    InvalidFlow(String),
    #[error("no usable source/destination pair after {0} attempts; snapshot too disconnected")]
    Disconnected(usize),
    #[error("flow file {path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("flow file {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// A periodic flow. `src` and `dst` are node indices into the snapshots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TtFlow {
    pub id: usize,
    pub period_s: f64,
    pub frame_bytes: u32,
    pub src: NodeId,
    pub dst: NodeId,
    pub deadline_s: f64,
}

impl TtFlow {
    pub fn validate(&self, min_bandwidth_bps: f64) -> Result<(), TrafficError> {
        let bad = |m: String| Err(TrafficError::InvalidFlow(m));
        if self.src == self.dst {
            return bad(format!("flow {} has src == dst", self.id));
        }
        if !(self.period_s > 0.0) || self.frame_bytes == 0 || !(self.deadline_s > 0.0) {
            return bad(format!("flow {} needs positive period, frame length and deadline", self.id));
        }
        let tx = transmission_time(self.frame_bytes, min_bandwidth_bps)
            .map_err(|e| TrafficError::InvalidFlow(e.to_string()))?;
        if tx >= self.period_s {
            return bad(format!("flow {} frame time {tx} s exceeds its period", self.id));
        }
        Ok(())
    }
}

/// `D = min(alpha * d_phy, d_phy + delta_buf, d_max)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeadlinePolicy {
    pub alpha: f64,
    pub delta_buf_s: f64,
    pub d_max_s: f64,
}

impl DeadlinePolicy {
    pub fn iridium() -> Self {
        Self { alpha: 1.5, delta_buf_s: 30e-3, d_max_s: 100e-3 }
    }

    pub fn starlink() -> Self {
        Self { alpha: 2.0, delta_buf_s: 80e-3, d_max_s: 500e-3 }
    }

    pub fn validate(&self) -> Result<(), TrafficError> {
        if !(self.alpha >= 1.0) {
            return Err(TrafficError::InvalidPolicy("alpha must be at least 1"));
        }
        if !(self.delta_buf_s >= 0.0) {
            return Err(TrafficError::InvalidPolicy("delta_buf must be non-negative"));
        }
        if !(self.d_max_s > 0.0) {
            return Err(TrafficError::InvalidPolicy("d_max must be positive"));
        }
        Ok(())
    }
}

pub fn compute_deadline(d_phy_s: f64, policy: &DeadlinePolicy) -> Result<f64, TrafficError> {
    if !(d_phy_s > 0.0) {
        return Err(TrafficError::NonPositiveDelay(d_phy_s));
    }
    Ok((policy.alpha * d_phy_s).min(d_phy_s + policy.delta_buf_s).min(policy.d_max_s))
}

/// Samples `n` flows over uniformly drawn ordered pairs of distinct nodes
/// (with replacement across flows). Pairs that are unreachable in
/// `snapshot0`, or whose shortest propagation delay exceeds `d_max`, are
/// redrawn so that every deadline is at least the pair's `d_phy`.
pub fn generate_flows(
    n: usize,
    snapshot0: &TopologySnapshot,
    policy: &DeadlinePolicy,
    frame_bytes: u32,
    period_s: f64,
    seed: u64,
) -> Result<Vec<TtFlow>, TrafficError> {
    policy.validate()?;
    if n == 0 {
        return Ok(Vec::new());
    }
    let nodes = snapshot0.num_nodes();
    if nodes < 2 {
        return Err(TrafficError::Disconnected(0));
    }
    let graph = Graph::new(snapshot0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut flows = Vec::with_capacity(n);
    for id in 0..n {
        let mut attempts = 0;
        let flow = loop {
            attempts += 1;
            if attempts > MAX_PAIR_RETRIES {
                return Err(TrafficError::Disconnected(MAX_PAIR_RETRIES));
            }
            let src = rng.random_range(0..nodes);
            let mut dst = rng.random_range(0..nodes - 1);
            if dst >= src {
                dst += 1;
            }
            let shortest = k_shortest_paths_on(&graph, snapshot0, src, dst, 1).unwrap_or_default();
            let Some(p) = shortest.first() else { continue };
            if p.prop_delay_s > policy.d_max_s {
                continue;
            }
            let deadline_s = compute_deadline(p.prop_delay_s, policy)?;
            break TtFlow { id, period_s, frame_bytes, src, dst, deadline_s };
        };
        flows.push(flow);
    }
    Ok(flows)
}

pub fn write_flows_csv(flows: &[TtFlow], path: &FsPath) -> Result<(), TrafficError> {
    let csv_err = |source| TrafficError::Csv { path: path.display().to_string(), source };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for f in flows {
        w.serialize(f).map_err(csv_err)?;
    }
    w.flush().map_err(|source| TrafficError::Io { path: path.display().to_string(), source })
}

pub fn read_flows_csv(path: &FsPath) -> Result<Vec<TtFlow>, TrafficError> {
    let file = File::open(path).map_err(|source| TrafficError::Io { path: path.display().to_string(), source })?;
    let mut r = csv::Reader::from_reader(file);
    r.deserialize()
        .collect::<Result<Vec<TtFlow>, _>>()
        .map_err(|source| TrafficError::Csv { path: path.display().to_string(), source })
}
