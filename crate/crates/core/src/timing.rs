//! Delay and jitter arithmetic: transmission and link delays, fixed path
//! delay, overlap degree bookkeeping and the worst-case collision delay bound
//! `(n_e - 1) * C_max`.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constellation::{NodeId, TopologySnapshot};
use crate::kpaths::Path;
use crate::traffic::TtFlow;

#[derive(Debug, Error, PartialEq)]
pub enum TimingError {
    #[error("bandwidth must be positive, got {0}")]
    ZeroBandwidth(f64),
    #[error("link ({0}, {1}) is not in the snapshot")]
    MissingLink(NodeId, NodeId),
    #[error("link ({0}, {1}) has non-positive propagation delay")]
    NonPositiveDelay(NodeId, NodeId),
    #[error("negative or non-finite argument: {0}")]
    InvalidArgument(&'static str),
}

/// Per-node constants: fixed processing delay and the longest a frame may be
/// held at one hop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeParams {
    pub d_proc_s: f64,
    pub t_buffer_max_s: f64,
}

impl Default for NodeParams {
    fn default() -> Self {
        Self { d_proc_s: 1e-3, t_buffer_max_s: 50e-3 }
    }
}

impl NodeParams {
    pub fn validate(&self) -> Result<(), TimingError> {
        if !(self.d_proc_s > 0.0) || !(self.t_buffer_max_s >= self.d_proc_s) {
            return Err(TimingError::InvalidArgument("need 0 < d_proc <= t_buffer_max"));
        }
        Ok(())
    }
}

/// `8 * frame_bytes / bandwidth_bps`, seconds.
pub fn transmission_time(frame_bytes: u32, bandwidth_bps: f64) -> Result<f64, TimingError> {
    if !(bandwidth_bps > 0.0) {
        return Err(TimingError::ZeroBandwidth(bandwidth_bps));
    }
    Ok(8.0 * frame_bytes as f64 / bandwidth_bps)
}

/// Propagation plus transmission delay of `flow`'s frame on link `(u, v)`.
pub fn link_delay(
    flow: &TtFlow,
    link: (NodeId, NodeId),
    snapshot: &TopologySnapshot,
) -> Result<f64, TimingError> {
    let attr = snapshot.link(link.0, link.1).ok_or(TimingError::MissingLink(link.0, link.1))?;
    if !(attr.prop_delay_s > 0.0) {
        return Err(TimingError::NonPositiveDelay(link.0, link.1));
    }
    Ok(attr.prop_delay_s + transmission_time(flow.frame_bytes, attr.bandwidth_bps)?)
}

/// Sum of link delays plus `d_proc` at each intermediate node.
pub fn path_fixed_delay(
    flow: &TtFlow,
    path: &Path,
    snapshot: &TopologySnapshot,
    node: &NodeParams,
) -> Result<f64, TimingError> {
    let mut total = 0.0;
    for link in path.links() {
        total += link_delay(flow, link, snapshot)?;
    }
    Ok(total + node.d_proc_s * path.intermediate_nodes().len() as f64)
}

/// Worst-case collision delay on a link shared by `overlap` distinct sources.
pub fn wcd_link(overlap: usize, c_max_s: f64) -> f64 {
    overlap.saturating_sub(1) as f64 * c_max_s
}

/// Exact interference bound: total transmission time of the interfering
/// frames. Dominated by [`wcd_link`] whenever every entry is at most `C_max`
/// and there are at most `n_e - 1` of them.
pub fn exact_interference(interferer_tx_times_s: &[f64]) -> f64 {
    interferer_tx_times_s.iter().sum()
}

/// Distinct-source occupancy of directed links, per slot.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LinkLoadState {
    src_on_link: BTreeMap<(usize, NodeId, NodeId), BTreeSet<NodeId>>,
}

impl LinkLoadState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records `src` on `link` in `slot`. Returns true if the overlap grew.
    pub fn add_source(&mut self, slot: usize, link: (NodeId, NodeId), src: NodeId) -> bool {
        self.src_on_link.entry((slot, link.0, link.1)).or_default().insert(src)
    }

    /// Adds every link of `path` for a flow originating at `src`.
    pub fn add_path(&mut self, slot: usize, path: &Path, src: NodeId) {
        for link in path.links() {
            self.add_source(slot, link, src);
        }
    }

    pub fn overlap(&self, slot: usize, link: (NodeId, NodeId)) -> usize {
        self.src_on_link.get(&(slot, link.0, link.1)).map_or(0, BTreeSet::len)
    }

    pub fn sources(&self, slot: usize, link: (NodeId, NodeId)) -> Option<&BTreeSet<NodeId>> {
        self.src_on_link.get(&(slot, link.0, link.1))
    }

    /// `((slot, u, v), n_e)` for every link with at least one source.
    pub fn iter(&self) -> impl Iterator<Item = ((usize, NodeId, NodeId), usize)> + '_ {
        self.src_on_link.iter().filter(|(_, s)| !s.is_empty()).map(|(&k, s)| (k, s.len()))
    }

    pub fn max_overlap(&self) -> usize {
        self.iter().map(|(_, n)| n).max().unwrap_or(0)
    }

    pub fn used_links(&self) -> usize {
        self.iter().count()
    }
}

/// Sum of [`wcd_link`] over the links of `path` in `slot`, with `C_max` taken
/// on each link's bandwidth for frames of `max_frame_bytes`.
pub fn path_wcd(
    path: &Path,
    slot: usize,
    load: &LinkLoadState,
    snapshot: &TopologySnapshot,
    max_frame_bytes: u32,
) -> Result<f64, TimingError> {
    let mut total = 0.0;
    for link in path.links() {
        let attr = snapshot.link(link.0, link.1).ok_or(TimingError::MissingLink(link.0, link.1))?;
        let c_max = transmission_time(max_frame_bytes, attr.bandwidth_bps)?;
        total += wcd_link(load.overlap(slot, link), c_max);
    }
    Ok(total)
}

/// When two equal-period flows with drifting clocks start contending.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CollisionTime {
    /// Transmission windows already overlap.
    Immediate,
    /// Seconds until the phase gap has shrunk to one frame time.
    After(f64),
    Never,
}

/// First time at which a phase gap shrinking at `drift_rate` seconds per
/// second leaves less than `frame_time_s` between the two frames.
pub fn drift_collision_time(
    phase_gap_s: f64,
    frame_time_s: f64,
    drift_rate: f64,
) -> Result<CollisionTime, TimingError> {
    if !(phase_gap_s >= 0.0) || !phase_gap_s.is_finite() {
        return Err(TimingError::InvalidArgument("phase gap"));
    }
    if !(frame_time_s > 0.0) || !frame_time_s.is_finite() {
        return Err(TimingError::InvalidArgument("frame time"));
    }
    if !(drift_rate >= 0.0) || !drift_rate.is_finite() {
        return Err(TimingError::InvalidArgument("drift rate"));
    }
    if phase_gap_s < frame_time_s {
        Ok(CollisionTime::Immediate)
    } else if drift_rate == 0.0 {
        Ok(CollisionTime::Never)
    } else {
        Ok(CollisionTime::After((phase_gap_s - frame_time_s) / drift_rate))
    }
}
