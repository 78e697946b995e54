//! Walker-style LEO shells on ideal circular orbits, +Grid inter-satellite
//! links and time-sliced topology snapshots.
//!
//! Positions are Earth-centred inertial (km). Earth is a sphere of radius
//! [`EARTH_RADIUS_KM`]; no perturbations are modelled. Each snapshot freezes
//! the geometry sampled at the start of its slot.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::fmt;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const EARTH_RADIUS_KM: f64 = 6371.0;
/// Earth gravitational parameter, km^3/s^2.
pub const GM_KM3_S2: f64 = 398_600.4418;
pub const SPEED_OF_LIGHT_M_S: f64 = 299_792_458.0;
pub const DEFAULT_ISL_BANDWIDTH_BPS: f64 = 100e6;

/// Dense node index used by every graph in the crate.
pub type NodeId = usize;

#[derive(Debug, Error, PartialEq)]
pub enum ConstellationError {
    #[error("invalid shell parameter: {0}")]
    InvalidParameter(String),
    #[error("unknown satellite {0}")]
    UnknownSatellite(SatelliteId),
    #[error("invalid perturbation config: {0}")]
    InvalidPerturbation(String),
}

/// How the right ascensions of the planes are spread.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WalkerPattern {
    /// Planes span 180 degrees; the first and last plane counter-rotate
    /// across the seam (Iridium-like polar shells).
    Star,
    /// Planes span 360 degrees (Starlink-like inclined shells).
    Delta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShellParams {
    pub planes: usize,
    pub sats_per_plane: usize,
    pub altitude_km: f64,
    pub inclination_deg: f64,
    /// Along-track shift between adjacent planes, as a fraction of the
    /// in-plane spacing.
    pub phasing_offset: f64,
    pub epoch_s: f64,
    pub pattern: WalkerPattern,
}

impl ShellParams {
    /// 6 planes x 11 satellites, 780 km, 86.4 deg.
    pub fn iridium() -> Self {
        Self {
            planes: 6,
            sats_per_plane: 11,
            altitude_km: 780.0,
            inclination_deg: 86.4,
            phasing_offset: 0.5,
            epoch_s: 0.0,
            pattern: WalkerPattern::Star,
        }
    }

    /// 72 planes x 22 satellites, 550 km, 53 deg.
    pub fn starlink() -> Self {
        Self {
            planes: 72,
            sats_per_plane: 22,
            altitude_km: 550.0,
            inclination_deg: 53.0,
            phasing_offset: 0.5,
            epoch_s: 0.0,
            pattern: WalkerPattern::Delta,
        }
    }

    pub fn validate(&self) -> Result<(), ConstellationError> {
        let bad = |m: &str| Err(ConstellationError::InvalidParameter(m.to_string()));
        if self.planes == 0 || self.sats_per_plane == 0 {
            return bad("planes and sats_per_plane must be at least 1");
        }
        if !(self.altitude_km > 0.0) || !self.altitude_km.is_finite() {
            return bad("altitude must be positive");
        }
        if !(0.0..=180.0).contains(&self.inclination_deg) {
            return bad("inclination must lie in [0, 180] degrees");
        }
        if !self.phasing_offset.is_finite() || !self.epoch_s.is_finite() {
            return bad("phasing offset and epoch must be finite");
        }
        Ok(())
    }

    pub fn total_satellites(&self) -> usize {
        self.planes * self.sats_per_plane
    }
}

/// Which links the +Grid rule creates and what they carry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IslConfig {
    /// Inter-plane links are dropped while either endpoint is above this
    /// absolute latitude (degrees). `None` keeps them everywhere.
    pub polar_cutoff_deg: Option<f64>,
    pub bandwidth_bps: f64,
}

impl Default for IslConfig {
    fn default() -> Self {
        Self { polar_cutoff_deg: Some(70.0), bandwidth_bps: DEFAULT_ISL_BANDWIDTH_BPS }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SatelliteId {
    pub plane: usize,
    pub index: usize,
}

impl fmt::Display for SatelliteId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P{}S{}", self.plane, self.index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkAttr {
    pub prop_delay_s: f64,
    pub bandwidth_bps: f64,
}

/// One static directed graph for a time slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologySnapshot {
    pub slot: usize,
    pub duration_s: f64,
    pub sample_time_s: f64,
    /// `nodes[i]` is the satellite behind node index `i`.
    pub nodes: Vec<SatelliteId>,
    /// Satellite positions at `sample_time_s` (km). Empty for hand-built graphs.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub positions_km: Vec<[f64; 3]>,
    #[serde(with = "link_list")]
    pub links: BTreeMap<(NodeId, NodeId), LinkAttr>,
}

impl TopologySnapshot {
    /// Builds a snapshot from an explicit directed edge list. Nodes are
    /// `0..num_nodes` and map to plane 0.
    pub fn from_edges(
        slot: usize,
        num_nodes: usize,
        edges: impl IntoIterator<Item = ((NodeId, NodeId), LinkAttr)>,
    ) -> Self {
        Self {
            slot,
            duration_s: 1.0,
            sample_time_s: 0.0,
            nodes: (0..num_nodes).map(|i| SatelliteId { plane: 0, index: i }).collect(),
            positions_km: Vec::new(),
            links: edges.into_iter().collect(),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn link(&self, u: NodeId, v: NodeId) -> Option<&LinkAttr> {
        self.links.get(&(u, v))
    }

    /// Undirected adjacencies, each reported once as `(min, max)`.
    pub fn physical_links(&self) -> Vec<(NodeId, NodeId)> {
        let set: BTreeSet<(NodeId, NodeId)> =
            self.links.keys().map(|&(u, v)| (u.min(v), u.max(v))).collect();
        set.into_iter().collect()
    }

    pub fn node_of(&self, sat: SatelliteId) -> Option<NodeId> {
        self.nodes.iter().position(|&s| s == sat)
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }
}

/// Directed links serialize as a list of `{from, to, prop_delay_s, bandwidth_bps}`.
mod link_list {
    use super::*;
    use serde::{Deserializer, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Entry {
        from: NodeId,
        to: NodeId,
        prop_delay_s: f64,
        bandwidth_bps: f64,
    }

    pub fn serialize<S: Serializer>(
        links: &BTreeMap<(NodeId, NodeId), LinkAttr>,
        s: S,
    ) -> Result<S::Ok, S::Error> {
        let entries: Vec<Entry> = links
            .iter()
            .map(|(&(from, to), a)| Entry {
                from,
                to,
                prop_delay_s: a.prop_delay_s,
                bandwidth_bps: a.bandwidth_bps,
            })
            .collect();
        entries.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> Result<BTreeMap<(NodeId, NodeId), LinkAttr>, D::Error> {
        let entries = Vec::<Entry>::deserialize(d)?;
        Ok(entries
            .into_iter()
            .map(|e| {
                ((e.from, e.to), LinkAttr { prop_delay_s: e.prop_delay_s, bandwidth_bps: e.bandwidth_bps })
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstellationModel {
    pub params: ShellParams,
    pub isl: IslConfig,
}

pub fn build_constellation(params: ShellParams) -> Result<ConstellationModel, ConstellationError> {
    build_constellation_with(params, IslConfig::default())
}

pub fn build_constellation_with(
    params: ShellParams,
    isl: IslConfig,
) -> Result<ConstellationModel, ConstellationError> {
    params.validate()?;
    if !(isl.bandwidth_bps > 0.0) {
        return Err(ConstellationError::InvalidParameter("ISL bandwidth must be positive".into()));
    }
    Ok(ConstellationModel { params, isl })
}

impl ConstellationModel {
    pub fn orbit_radius_km(&self) -> f64 {
        EARTH_RADIUS_KM + self.params.altitude_km
    }

    /// Angular rate, rad/s.
    pub fn mean_motion(&self) -> f64 {
        (GM_KM3_S2 / self.orbit_radius_km().powi(3)).sqrt()
    }

    pub fn orbital_period_s(&self) -> f64 {
        2.0 * PI / self.mean_motion()
    }

    pub fn satellites(&self) -> impl Iterator<Item = SatelliteId> + '_ {
        let n = self.params.sats_per_plane;
        (0..self.params.planes).flat_map(move |plane| (0..n).map(move |index| SatelliteId { plane, index }))
    }

    pub fn node_id(&self, sat: SatelliteId) -> Result<NodeId, ConstellationError> {
        if sat.plane >= self.params.planes || sat.index >= self.params.sats_per_plane {
            return Err(ConstellationError::UnknownSatellite(sat));
        }
        Ok(sat.plane * self.params.sats_per_plane + sat.index)
    }

    fn raan(&self, plane: usize) -> f64 {
        let spread = match self.params.pattern {
            WalkerPattern::Star => PI,
            WalkerPattern::Delta => 2.0 * PI,
        };
        spread * plane as f64 / self.params.planes as f64
    }

    /// Argument of latitude at `t` seconds after the epoch.
    fn arg_latitude(&self, sat: SatelliteId, t: f64) -> f64 {
        let n = self.params.sats_per_plane as f64;
        let slot_phase = 2.0 * PI * (sat.index as f64 + self.params.phasing_offset * sat.plane as f64) / n;
        slot_phase + self.mean_motion() * (t - self.params.epoch_s)
    }

    fn position_unchecked(&self, sat: SatelliteId, t: f64) -> [f64; 3] {
        let r = self.orbit_radius_km();
        let u = self.arg_latitude(sat, t);
        let raan = self.raan(sat.plane);
        let inc = self.params.inclination_deg.to_radians();
        let (su, cu) = u.sin_cos();
        let (so, co) = raan.sin_cos();
        let (si, ci) = inc.sin_cos();
        [r * (co * cu - so * su * ci), r * (so * cu + co * su * ci), r * su * si]
    }

    fn physical_adjacencies(&self) -> Vec<(SatelliteId, SatelliteId, bool)> {
        let p = &self.params;
        let mut out = BTreeSet::new();
        for sat in self.satellites() {
            if p.sats_per_plane > 1 {
                let next = SatelliteId { plane: sat.plane, index: (sat.index + 1) % p.sats_per_plane };
                out.insert((sat.min(next), sat.max(next), false));
            }
            let next_plane = sat.plane + 1;
            let wraps = next_plane == p.planes;
            if p.planes > 1 && !(wraps && p.pattern == WalkerPattern::Star) {
                let other = SatelliteId { plane: next_plane % p.planes, index: sat.index };
                if other != sat {
                    out.insert((sat.min(other), sat.max(other), true));
                }
            }
        }
        out.into_iter().collect()
    }

    fn snapshot_at(&self, slot: usize, duration_s: f64) -> TopologySnapshot {
        let t = self.params.epoch_s + slot as f64 * duration_s;
        let nodes: Vec<SatelliteId> = self.satellites().collect();
        let positions: Vec<[f64; 3]> = nodes.iter().map(|&s| self.position_unchecked(s, t)).collect();
        let r = self.orbit_radius_km();
        let latitude = |i: usize| (positions[i][2] / r).clamp(-1.0, 1.0).asin().to_degrees().abs();
        let mut links = BTreeMap::new();
        for (a, b, inter_plane) in self.physical_adjacencies() {
            let ia = self.node_id(a).expect("adjacency within shell");
            let ib = self.node_id(b).expect("adjacency within shell");
            if inter_plane {
                if let Some(cut) = self.isl.polar_cutoff_deg {
                    if latitude(ia) > cut || latitude(ib) > cut {
                        continue;
                    }
                }
            }
            let dist_m = distance_km(&positions[ia], &positions[ib]) * 1000.0;
            let attr = LinkAttr {
                prop_delay_s: dist_m / SPEED_OF_LIGHT_M_S,
                bandwidth_bps: self.isl.bandwidth_bps,
            };
            links.insert((ia, ib), attr);
            links.insert((ib, ia), attr);
        }
        TopologySnapshot { slot, duration_s, sample_time_s: t, nodes, positions_km: positions, links }
    }
}

pub fn distance_km(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

pub fn satellite_position(
    model: &ConstellationModel,
    sat: SatelliteId,
    t: f64,
) -> Result<[f64; 3], ConstellationError> {
    model.node_id(sat)?;
    Ok(model.position_unchecked(sat, t))
}

pub fn snapshot_sequence(
    model: &ConstellationModel,
    num_slots: usize,
    slot_duration_s: f64,
) -> Result<Vec<TopologySnapshot>, ConstellationError> {
    if num_slots == 0 {
        return Err(ConstellationError::InvalidParameter("num_slots must be at least 1".into()));
    }
    if !(slot_duration_s > 0.0) || !slot_duration_s.is_finite() {
        return Err(ConstellationError::InvalidParameter("slot duration must be positive".into()));
    }
    Ok((0..num_slots).map(|slot| model.snapshot_at(slot, slot_duration_s)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationConfig {
    pub link_fail_fraction: f64,
    pub delay_perturb_fraction: f64,
    /// Perturbed delays are scaled by a factor in `[1 - m, 1 + m]`.
    pub delay_perturb_magnitude: f64,
    pub rng_seed: u64,
}

impl PerturbationConfig {
    pub fn validate(&self) -> Result<(), ConstellationError> {
        let bad = |m: &str| Err(ConstellationError::InvalidPerturbation(m.to_string()));
        if !(0.0..=1.0).contains(&self.link_fail_fraction) {
            return bad("link_fail_fraction must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.delay_perturb_fraction) {
            return bad("delay_perturb_fraction must lie in [0, 1]");
        }
        // magnitude >= 1 could drive a delay to zero or below
        if !(0.0..1.0).contains(&self.delay_perturb_magnitude) {
            return bad("delay_perturb_magnitude must lie in [0, 1)");
        }
        Ok(())
    }
}

/// Removes a sampled fraction of physical links (both directions) and scales
/// the delay of a sampled fraction of the survivors. Pure in `(snapshot, cfg)`.
pub fn apply_perturbation(
    snapshot: &TopologySnapshot,
    cfg: &PerturbationConfig,
) -> Result<TopologySnapshot, ConstellationError> {
    cfg.validate()?;
    let mut out = snapshot.clone();
    let physical = snapshot.physical_links();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);

    let n_fail = (cfg.link_fail_fraction * physical.len() as f64).round() as usize;
    let mut failed: Vec<usize> = index::sample(&mut rng, physical.len(), n_fail).into_vec();
    failed.sort_unstable();
    for &i in &failed {
        let (u, v) = physical[i];
        out.links.remove(&(u, v));
        out.links.remove(&(v, u));
    }

    let survivors: Vec<(NodeId, NodeId)> = physical
        .iter()
        .enumerate()
        .filter(|(i, _)| failed.binary_search(i).is_err())
        .map(|(_, &l)| l)
        .collect();
    let n_perturb = (cfg.delay_perturb_fraction * survivors.len() as f64).round() as usize;
    let mut chosen: Vec<usize> = index::sample(&mut rng, survivors.len(), n_perturb).into_vec();
    chosen.sort_unstable();
    let m = cfg.delay_perturb_magnitude;
    for i in chosen {
        let factor = if m > 0.0 { rng.random_range(1.0 - m..=1.0 + m) } else { 1.0 };
        let (u, v) = survivors[i];
        for key in [(u, v), (v, u)] {
            if let Some(attr) = out.links.get_mut(&key) {
                attr.prop_delay_s *= factor;
            }
        }
    }
    Ok(out)
}
