//! Packet-level replay of a schedule under unsynchronized, drifting source
//! clocks.
//!
//! Sources emit one frame per period on their own clock. Every directed link
//! is a FIFO server at its bandwidth; a frame that finds the link busy waits.
//! Intermediate nodes hold a frame for its residence time after arrival and
//! then hand it to the next egress queue. A frame follows the path, delays and
//! residences of the slot in which it was emitted, even if it is still in
//! flight after the slot ends.
//!
//! Clocks decide emission instants only; residence holds are exact. Flows
//! that share a source get phases from a per-source emitter that keeps their
//! frames apart on every link they share.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashMap};
use std::path::Path as FsPath;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constellation::{NodeId, TopologySnapshot};
use crate::scheduler::Schedule;
use crate::timing::{drift_collision_time, transmission_time, CollisionTime};
use crate::traffic::TtFlow;

/// Resolution of the fallback phase search when no conflict-free phase exists.
const PHASE_GRID: usize = 4096;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("schedule has {entries} entries for {flows} flows")]
    EntryCount { entries: usize, flows: usize },
    #[error("flow {flow} slot {slot}: link {link:?} missing from the topology")]
    Mismatch { flow: usize, slot: usize, link: (NodeId, NodeId) },
    #[error("schedule covers {schedule} slots but {snapshots} snapshots were given")]
    SlotCount { schedule: usize, snapshots: usize },
    #[error("clock model covers {clocks} nodes, topology has {nodes}")]
    ClockCount { clocks: usize, nodes: usize },
    #[error("invalid simulation parameter: {0}")]
    InvalidParameter(String),
    #[error("flows {a} and {b} do not both use link {link:?} in slot {slot}")]
    NotShared { a: usize, b: usize, link: (NodeId, NodeId), slot: usize },
    #[error("packet file {path}: {source}")]
    Csv { path: String, source: csv::Error },
}

/// Per-node clocks: `local(t) = t * (1 + drift) + offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClockModel {
    pub offset_s: Vec<f64>,
    pub drift: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClockBounds {
    /// Offsets are drawn from `[0, max_offset_s]`.
    pub max_offset_s: f64,
    /// Drift rates are drawn from `[-max_drift, max_drift]`.
    pub max_drift: f64,
}

impl Default for ClockBounds {
    fn default() -> Self {
        Self { max_offset_s: 10e-3, max_drift: 20e-6 }
    }
}

impl ClockModel {
    pub fn ideal(num_nodes: usize) -> Self {
        Self { offset_s: vec![0.0; num_nodes], drift: vec![0.0; num_nodes] }
    }

    pub fn random(num_nodes: usize, bounds: &ClockBounds, seed: u64) -> Result<Self, SimError> {
        if !(bounds.max_offset_s >= 0.0) || !(0.0..=1e-3).contains(&bounds.max_drift) {
            return Err(SimError::InvalidParameter("clock bounds need max_offset >= 0 and max_drift in [0, 1e-3]".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut offset_s = Vec::with_capacity(num_nodes);
        let mut drift = Vec::with_capacity(num_nodes);
        for _ in 0..num_nodes {
            offset_s.push(rng.random_range(0.0..=bounds.max_offset_s));
            drift.push(rng.random_range(-bounds.max_drift..=bounds.max_drift));
        }
        Ok(Self { offset_s, drift })
    }

    pub fn local(&self, node: NodeId, t_global: f64) -> f64 {
        t_global * (1.0 + self.drift[node]) + self.offset_s[node]
    }

    pub fn global(&self, node: NodeId, t_local: f64) -> f64 {
        (t_local - self.offset_s[node]) / (1.0 + self.drift[node])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Frames are emitted while their emission time is below this (s).
    pub horizon_s: f64,
    pub seed: u64,
    /// Per-flow emission phases on the source clock, overriding the
    /// seeded draw and the per-source emitter. Indexed like the flow slice.
    #[serde(default)]
    pub phases_s: Option<Vec<f64>>,
    /// Bytes of a non-preemptible lower-priority frame that may delay each
    /// transmission (uniform share of its transmission time). Off by default.
    #[serde(default)]
    pub remnant_blocking_bytes: Option<u32>,
}

impl SimConfig {
    pub fn new(horizon_s: f64, seed: u64) -> Self {
        Self { horizon_s, seed, phases_s: None, remnant_blocking_bytes: None }
    }
}

/// One delivered frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PacketRecord {
    pub flow_id: usize,
    pub seq: u64,
    /// Slot whose path and residences the frame followed.
    pub slot: usize,
    pub emit_s: f64,
    /// Time the frame entered each egress queue along the path.
    pub release_s: Vec<f64>,
    /// Arrival time at each node after the source.
    pub arrival_s: Vec<f64>,
    pub delivered_s: f64,
    pub e2e_delay_s: f64,
    /// Wait at each egress queue along the path.
    pub queue_wait_s: Vec<f64>,
}

impl PacketRecord {
    pub fn total_queue_wait_s(&self) -> f64 {
        self.queue_wait_s.iter().sum()
    }
}

/// Per-slot forwarding data of one scheduled flow.
struct Route {
    nodes: Vec<NodeId>,
    /// Hold after arriving at `nodes[i]`, for `i >= 1`. The last entry is the
    /// destination hold.
    hold: Vec<f64>,
    tx: Vec<f64>,
    prop: Vec<f64>,
}

#[derive(Clone, Copy, PartialEq)]
struct Event {
    t: f64,
    seq: u64,
    frame: usize,
    hop: usize,
}

impl Eq for Event {}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        other.t.total_cmp(&self.t).then_with(|| other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Frame {
    flow: usize,
    seq: u64,
    slot: usize,
    emit: f64,
    release: Vec<f64>,
    arrival: Vec<f64>,
    wait: Vec<f64>,
}

fn slot_starts(snapshots: &[TopologySnapshot]) -> Vec<f64> {
    let mut starts = Vec::with_capacity(snapshots.len());
    let mut t = 0.0;
    for s in snapshots {
        starts.push(t);
        t += s.duration_s;
    }
    starts
}

fn slot_at(starts: &[f64], t: f64) -> usize {
    starts.partition_point(|&s| s <= t).saturating_sub(1)
}

fn build_routes(
    schedule: &Schedule,
    snapshots: &[TopologySnapshot],
    flows: &[TtFlow],
) -> Result<Vec<Option<Vec<Route>>>, SimError> {
    if schedule.entries.len() != flows.len() {
        return Err(SimError::EntryCount { entries: schedule.entries.len(), flows: flows.len() });
    }
    if schedule.num_slots != snapshots.len() {
        return Err(SimError::SlotCount { schedule: schedule.num_slots, snapshots: snapshots.len() });
    }
    let mut out = Vec::with_capacity(flows.len());
    for (e, flow) in schedule.entries.iter().zip(flows) {
        if !e.scheduled {
            out.push(None);
            continue;
        }
        let mut routes = Vec::with_capacity(e.paths.len());
        for (slot, nodes) in e.paths.iter().enumerate() {
            let mut tx = Vec::new();
            let mut prop = Vec::new();
            for w in nodes.windows(2) {
                let a = snapshots[slot]
                    .link(w[0], w[1])
                    .ok_or(SimError::Mismatch { flow: flow.id, slot, link: (w[0], w[1]) })?;
                tx.push(transmission_time(flow.frame_bytes, a.bandwidth_bps).map_err(|err| SimError::InvalidParameter(err.to_string()))?);
                prop.push(a.prop_delay_s);
            }
            let res: BTreeMap<NodeId, f64> = e.residence[slot].iter().copied().collect();
            let hold = nodes[1..].iter().map(|v| res.get(v).copied().unwrap_or(0.0)).collect();
            routes.push(Route { nodes: nodes.clone(), hold, tx, prop });
        }
        out.push(Some(routes));
    }
    Ok(out)
}

/// Release time at each link of a route, relative to emission, without
/// queueing.
fn release_offsets(r: &Route) -> Vec<f64> {
    let mut out = Vec::with_capacity(r.tx.len());
    let mut t = 0.0;
    for i in 0..r.tx.len() {
        out.push(t);
        t += r.tx[i] + r.prop[i] + r.hold[i];
    }
    out
}

fn circular_gap(a: f64, b: f64, period: f64) -> f64 {
    let d = (a - b).rem_euclid(period);
    d.min(period - d)
}

/// Phase ranges `[lo, hi)` within `[0, period)` that keep clear of every
/// `(centre, half_width)` exclusion, taken circularly.
fn free_ranges(exclusions: &[(f64, f64)], period: f64) -> Vec<(f64, f64)> {
    let mut blocked: Vec<(f64, f64)> = Vec::new();
    for &(c, w) in exclusions {
        if 2.0 * w >= period {
            return Vec::new();
        }
        let lo = (c - w).rem_euclid(period);
        let hi = lo + 2.0 * w;
        if hi > period {
            blocked.push((lo, period));
            blocked.push((0.0, hi - period));
        } else {
            blocked.push((lo, hi));
        }
    }
    blocked.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut free = Vec::new();
    let mut t = 0.0;
    for (lo, hi) in blocked {
        if lo > t {
            free.push((t, lo));
        }
        t = t.max(hi);
    }
    if t < period {
        free.push((t, period));
    }
    free
}

fn sample_ranges(rng: &mut ChaCha8Rng, free: &[(f64, f64)]) -> Option<f64> {
    let total: f64 = free.iter().map(|r| r.1 - r.0).sum();
    if !(total > 0.0) {
        return None;
    }
    let mut x = rng.random_range(0.0..total);
    for &(lo, hi) in free {
        if x < hi - lo {
            return Some(lo + x);
        }
        x -= hi - lo;
    }
    free.last().map(|r| r.0)
}

/// Seeded phases in `[0, T)`. Flows from one source are placed in id order;
/// each phase is drawn uniformly from the phases whose frames stay at least
/// `C + WCD_a + WCD_b` away from every earlier same-source flow on each
/// shared link and slot. If none remain the guard shrinks to `C`, and if
/// that fails too the phase farthest from any conflict is kept.
pub fn emitter_phases(schedule: &Schedule, snapshots: &[TopologySnapshot], flows: &[TtFlow], seed: u64) -> Result<Vec<f64>, SimError> {
    let routes = build_routes(schedule, snapshots, flows)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut phases = vec![0.0; flows.len()];
    // same-source flows placed so far
    let mut placed: BTreeMap<NodeId, Vec<usize>> = BTreeMap::new();
    let offsets: Vec<Option<Vec<Vec<f64>>>> =
        routes.iter().map(|r| r.as_ref().map(|rs| rs.iter().map(release_offsets).collect())).collect();
    for f in 0..flows.len() {
        let period = flows[f].period_s;
        let Some(rs) = &routes[f] else {
            phases[f] = rng.random_range(0.0..period);
            continue;
        };
        let peers = placed.entry(flows[f].src).or_default();
        // (centre, tx guard, wcd guard) per shared link occurrence
        let mut conflicts: Vec<(f64, f64, f64)> = Vec::new();
        for &g in peers.iter() {
            let rg = routes[g].as_ref().expect("placed flows are scheduled");
            for (slot, r) in rs.iter().enumerate() {
                for (i, w) in r.nodes.windows(2).enumerate() {
                    for (j, wg) in rg[slot].nodes.windows(2).enumerate() {
                        if w != wg {
                            continue;
                        }
                        let tx = r.tx[i].max(rg[slot].tx[j]);
                        let wcd = schedule.entries[f].wcd_total_s[slot] + schedule.entries[g].wcd_total_s[slot];
                        let b = phases[g] + offsets[g].as_ref().unwrap()[slot][j];
                        conflicts.push((b - offsets[f].as_ref().unwrap()[slot][i], tx, wcd));
                    }
                }
            }
        }
        let full: Vec<(f64, f64)> = conflicts.iter().map(|&(c, tx, wcd)| (c, tx + wcd)).collect();
        let bare: Vec<(f64, f64)> = conflicts.iter().map(|&(c, tx, _)| (c, tx)).collect();
        let phase = sample_ranges(&mut rng, &free_ranges(&full, period))
            .or_else(|| sample_ranges(&mut rng, &free_ranges(&bare, period)))
            .unwrap_or_else(|| {
                let score = |phi: f64| {
                    bare.iter().map(|&(c, w)| circular_gap(phi, c, period) - w).fold(f64::INFINITY, f64::min)
                };
                let mut best = (f64::NEG_INFINITY, 0.0);
                for k in 0..PHASE_GRID {
                    let phi = period * k as f64 / PHASE_GRID as f64;
                    let s = score(phi);
                    if s > best.0 {
                        best = (s, phi);
                    }
                }
                best.1
            });
        phases[f] = phase;
        peers.push(f);
    }
    Ok(phases)
}

/// Replays `schedule` for `cfg.horizon_s` seconds of emissions and returns
/// one record per delivered frame, ordered by delivery time.
pub fn simulate_run(
    schedule: &Schedule,
    snapshots: &[TopologySnapshot],
    flows: &[TtFlow],
    clocks: &ClockModel,
    cfg: &SimConfig,
) -> Result<Vec<PacketRecord>, SimError> {
    if !(cfg.horizon_s > 0.0) || !cfg.horizon_s.is_finite() {
        return Err(SimError::InvalidParameter("horizon must be positive".into()));
    }
    let nodes = snapshots.first().map_or(0, TopologySnapshot::num_nodes);
    if clocks.offset_s.len() < nodes || clocks.drift.len() < nodes {
        return Err(SimError::ClockCount { clocks: clocks.offset_s.len().min(clocks.drift.len()), nodes });
    }
    let routes = build_routes(schedule, snapshots, flows)?;
    let phases = match &cfg.phases_s {
        Some(p) if p.len() == flows.len() => p.clone(),
        Some(p) => return Err(SimError::InvalidParameter(format!("{} phases for {} flows", p.len(), flows.len()))),
        None => emitter_phases(schedule, snapshots, flows, cfg.seed)?,
    };
    let starts = slot_starts(snapshots);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let remnant = cfg.remnant_blocking_bytes;

    let mut heap = BinaryHeap::new();
    let mut frames: Vec<Frame> = Vec::new();
    let mut next_seq = 0u64;
    for (f, flow) in flows.iter().enumerate() {
        if routes[f].is_none() {
            continue;
        }
        let src = flow.src;
        let o = clocks.offset_s[src];
        let d = clocks.drift[src];
        let n0 = ((o - phases[f]) / flow.period_s).ceil().max(0.0) as u64;
        let mut n = n0;
        loop {
            let t = (phases[f] + n as f64 * flow.period_s - o) / (1.0 + d);
            if t >= cfg.horizon_s {
                break;
            }
            if t >= 0.0 {
                let slot = slot_at(&starts, t);
                let hops = routes[f].as_ref().unwrap()[slot].tx.len();
                frames.push(Frame {
                    flow: f,
                    seq: n - n0,
                    slot,
                    emit: t,
                    release: Vec::with_capacity(hops),
                    arrival: Vec::with_capacity(hops),
                    wait: Vec::with_capacity(hops),
                });
                heap.push(Event { t, seq: next_seq, frame: frames.len() - 1, hop: 0 });
                next_seq += 1;
            }
            n += 1;
        }
    }

    let mut free_at: HashMap<(NodeId, NodeId), f64> = HashMap::new();
    let mut records = Vec::with_capacity(frames.len());
    while let Some(ev) = heap.pop() {
        let fr = &mut frames[ev.frame];
        let route = &routes[fr.flow].as_ref().unwrap()[fr.slot];
        let link = (route.nodes[ev.hop], route.nodes[ev.hop + 1]);
        let free = free_at.entry(link).or_insert(f64::NEG_INFINITY);
        let mut start = ev.t.max(*free);
        if let Some(bytes) = remnant {
            let bw = 8.0 * flows[fr.flow].frame_bytes as f64 / route.tx[ev.hop];
            start += rng.random_range(0.0..=1.0) * 8.0 * bytes as f64 / bw;
        }
        fr.release.push(ev.t);
        fr.wait.push(start - ev.t);
        *free = start + route.tx[ev.hop];
        let arrive = start + route.tx[ev.hop] + route.prop[ev.hop];
        fr.arrival.push(arrive);
        let release = arrive + route.hold[ev.hop];
        if ev.hop + 2 == route.nodes.len() {
            records.push(PacketRecord {
                flow_id: flows[fr.flow].id,
                seq: fr.seq,
                slot: fr.slot,
                emit_s: fr.emit,
                release_s: std::mem::take(&mut fr.release),
                arrival_s: std::mem::take(&mut fr.arrival),
                delivered_s: release,
                e2e_delay_s: release - fr.emit,
                queue_wait_s: std::mem::take(&mut fr.wait),
            });
        } else {
            heap.push(Event { t: release, seq: next_seq, frame: ev.frame, hop: ev.hop + 1 });
            next_seq += 1;
        }
    }
    Ok(records)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JitterSummary {
    pub count: usize,
    pub min_s: f64,
    pub max_s: f64,
    pub spread_s: f64,
    pub p50_s: f64,
    pub p99_s: f64,
}

/// Nearest-rank percentile of sorted values.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// End-to-end delay statistics per flow id.
pub fn measure_jitter(records: &[PacketRecord]) -> BTreeMap<usize, JitterSummary> {
    let mut by_flow: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for r in records {
        by_flow.entry(r.flow_id).or_default().push(r.e2e_delay_s);
    }
    by_flow
        .into_iter()
        .map(|(id, mut d)| {
            d.sort_by(f64::total_cmp);
            let (min, max) = (d[0], d[d.len() - 1]);
            let s = JitterSummary {
                count: d.len(),
                min_s: min,
                max_s: max,
                spread_s: max - min,
                p50_s: percentile(&d, 50.0),
                p99_s: percentile(&d, 99.0),
            };
            (id, s)
        })
        .collect()
}

/// Closed-form first contention of two flows on a shared link, as a global
/// time, or `None` if their frames never come within one frame time.
///
/// Both flows must use `link` in `slot`. The reference instant is the first
/// release of a frame of `a` onto the link in that slot.
#[allow(clippy::too_many_arguments)]
pub fn predict_first_collision(
    schedule: &Schedule,
    snapshots: &[TopologySnapshot],
    flows: &[TtFlow],
    a: usize,
    b: usize,
    link: (NodeId, NodeId),
    slot: usize,
    clocks: &ClockModel,
    phases: &[f64],
) -> Result<Option<f64>, SimError> {
    let routes = build_routes(schedule, snapshots, flows)?;
    let not_shared = || SimError::NotShared { a: flows[a].id, b: flows[b].id, link, slot };
    let locate = |f: usize| -> Result<(f64, f64), SimError> {
        let r = &routes[f].as_ref().ok_or_else(not_shared)?[slot];
        let i = r.nodes.windows(2).position(|w| (w[0], w[1]) == link).ok_or_else(not_shared)?;
        Ok((release_offsets(r)[i], r.tx[i]))
    };
    let (off_a, tx_a) = locate(a)?;
    let (off_b, tx_b) = locate(b)?;
    let t_slot = slot_starts(snapshots)[slot];

    let first_emit = |f: usize| -> f64 {
        let src = flows[f].src;
        let (o, d, p) = (clocks.offset_s[src], clocks.drift[src], flows[f].period_s);
        let local_start = clocks.local(src, t_slot);
        let n = ((local_start - phases[f]) / p).ceil().max(0.0);
        (phases[f] + n * p - o) / (1.0 + d)
    };
    let ref_a = first_emit(a) + off_a;
    let da = clocks.drift[flows[a].src];
    let db = clocks.drift[flows[b].src];
    let period_b = flows[b].period_s / (1.0 + db);
    // first release of b at or after ref_a
    let mut rb = first_emit(b) + off_b;
    rb += ((ref_a - rb) / period_b).ceil() * period_b;
    let gap_ab = rb - ref_a;
    let gap_ba = period_b - gap_ab;

    // A frame that starts while another is on the wire waits; the frame
    // ahead is the one whose transmission time matters.
    if gap_ab < tx_a || gap_ba < tx_b {
        return Ok(Some(ref_a));
    }
    let rate_ab = (db - da) / (1.0 + db);
    let (gap, c, rate) = if rate_ab >= 0.0 { (gap_ab, tx_a, rate_ab) } else { (gap_ba, tx_b, (da - db) / (1.0 + da)) };
    match drift_collision_time(gap, c, rate).map_err(|e| SimError::InvalidParameter(e.to_string()))? {
        CollisionTime::Immediate => Ok(Some(ref_a)),
        CollisionTime::After(t) => Ok(Some(ref_a + t)),
        CollisionTime::Never => Ok(None),
    }
}

#[derive(Serialize, Deserialize)]
struct PacketRow {
    flow_id: usize,
    seq: u64,
    emit_s: f64,
    delivered_s: f64,
    e2e_delay_s: f64,
    total_queue_wait_s: f64,
}

pub fn write_packets_csv(records: &[PacketRecord], path: &FsPath) -> Result<(), SimError> {
    let err = |source| SimError::Csv { path: path.display().to_string(), source };
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    for r in records {
        w.serialize(PacketRow {
            flow_id: r.flow_id,
            seq: r.seq,
            emit_s: r.emit_s,
            delivered_s: r.delivered_s,
            e2e_delay_s: r.e2e_delay_s,
            total_queue_wait_s: r.total_queue_wait_s(),
        })
        .map_err(err)?;
    }
    w.flush().map_err(|e| SimError::Csv { path: path.display().to_string(), source: e.into() })
}

/// Rows of a packet CSV as `(flow_id, seq, emit, delivered, e2e, wait)`.
pub fn read_packets_csv(path: &FsPath) -> Result<Vec<(usize, u64, f64, f64, f64, f64)>, SimError> {
    let err = |source| SimError::Csv { path: path.display().to_string(), source };
    let mut r = csv::Reader::from_path(path).map_err(err)?;
    r.deserialize::<PacketRow>()
        .map(|row| row.map(|p| (p.flow_id, p.seq, p.emit_s, p.delivered_s, p.e2e_delay_s, p.total_queue_wait_s)))
        .collect::<Result<_, _>>()
        .map_err(err)
}
