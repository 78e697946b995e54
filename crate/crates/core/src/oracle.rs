//! Ground truth for small instances: an exhaustive lexicographic solver and
//! an independent schedule verifier.
//!
//! Neither uses the scheduler's incremental bookkeeping; both recompute
//! occupancy, delays and bounds from the paths alone.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::constellation::{NodeId, TopologySnapshot};
use crate::kpaths::{CandidateSet, Path};
use crate::scheduler::{Schedule, ScheduleEntry};
use crate::timing::{link_delay, path_fixed_delay, path_wcd, transmission_time, LinkLoadState, NodeParams};
use crate::traffic::TtFlow;

pub const MAX_ORACLE_FLOWS: usize = 6;
pub const MAX_ORACLE_K: usize = 3;
pub const MAX_ORACLE_SLOTS: usize = 2;

/// Tolerance for equality and bound checks in the verifier, seconds.
pub const VERIFY_TOL: f64 = 1e-9;
const EPS: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("instance too large for exhaustive search: {0}")]
    InstanceTooLarge(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    /// Most flows any feasible assignment schedules.
    pub j1_star: usize,
    /// Smallest achievable maximum overlap among assignments reaching `j1_star`.
    pub j2_star: usize,
    pub witness: Schedule,
}

/// Exhaustive lexicographic optimum: most scheduled flows, then smallest
/// maximum overlap degree.
///
/// Per slot a flow may take any of its candidates for that slot, or keep a
/// candidate of an earlier slot whose links are all still present (the
/// reuse a continuity-aware scheduler performs).
pub fn exact_lex_solve(
    snapshots: &[TopologySnapshot],
    flows: &[TtFlow],
    candidates: &CandidateSet,
    node: &NodeParams,
) -> Result<OracleResult, OracleError> {
    if flows.len() > MAX_ORACLE_FLOWS {
        return Err(OracleError::InstanceTooLarge(format!("{} flows > {MAX_ORACLE_FLOWS}", flows.len())));
    }
    if snapshots.len() > MAX_ORACLE_SLOTS {
        return Err(OracleError::InstanceTooLarge(format!("{} slots > {MAX_ORACLE_SLOTS}", snapshots.len())));
    }
    let too_many = (0..flows.len()).any(|f| (0..snapshots.len()).any(|s| candidates.get(f, s).len() > MAX_ORACLE_K));
    if candidates.k > MAX_ORACLE_K || too_many {
        return Err(OracleError::InstanceTooLarge(format!("K > {MAX_ORACLE_K}")));
    }
    let max_frame = flows.iter().map(|f| f.frame_bytes).max().unwrap_or(0);

    // Every per-flow option: one path per slot.
    let options: Vec<Vec<Vec<Path>>> = (0..flows.len())
        .map(|f| {
            let per_slot: Vec<Vec<Path>> = (0..snapshots.len())
                .map(|s| {
                    let mut opts: Vec<Path> = candidates.get(f, s).to_vec();
                    for earlier in 0..s {
                        for p in candidates.get(f, earlier) {
                            if !opts.iter().any(|q| q.nodes == p.nodes) {
                                if let Some(q) = Path::from_nodes(p.nodes.clone(), &snapshots[s]) {
                                    opts.push(q);
                                }
                            }
                        }
                    }
                    opts
                })
                .collect();
            cartesian(&per_slot)
        })
        .collect();

    let mut search = Search {
        snapshots,
        flows,
        node,
        max_frame,
        options: &options,
        choice: vec![None; flows.len()],
        best: None,
        best_choice: vec![None; flows.len()],
    };
    search.dfs(0, 0);
    let (j1_star, j2_star) = search.best.expect("the empty assignment is feasible");
    let witness = build_schedule(snapshots, flows, &search.paths(&search.best_choice), node, max_frame);
    Ok(OracleResult { j1_star, j2_star, witness })
}

fn cartesian(per_slot: &[Vec<Path>]) -> Vec<Vec<Path>> {
    let mut out: Vec<Vec<Path>> = vec![Vec::new()];
    for opts in per_slot {
        let mut next = Vec::new();
        for prefix in &out {
            for p in opts {
                let mut v = prefix.clone();
                v.push(p.clone());
                next.push(v);
            }
        }
        out = next;
    }
    if per_slot.is_empty() {
        Vec::new()
    } else {
        out
    }
}

struct Search<'a> {
    snapshots: &'a [TopologySnapshot],
    flows: &'a [TtFlow],
    node: &'a NodeParams,
    max_frame: u32,
    options: &'a [Vec<Vec<Path>>],
    choice: Vec<Option<usize>>,
    best: Option<(usize, usize)>,
    best_choice: Vec<Option<usize>>,
}

impl Search<'_> {
    fn paths(&self, choice: &[Option<usize>]) -> Vec<Option<Vec<Path>>> {
        choice.iter().enumerate().map(|(f, c)| c.map(|i| self.options[f][i].clone())).collect()
    }

    fn better(&self, j1: usize, j2: usize) -> bool {
        match self.best {
            None => true,
            Some((b1, b2)) => j1 > b1 || (j1 == b1 && j2 < b2),
        }
    }

    fn dfs(&mut self, f: usize, count: usize) {
        let current = feasible_assignment(self.snapshots, self.flows, &self.paths(&self.choice), self.node, self.max_frame);
        let Some(max_overlap) = current else { return };
        // Adding flows never lowers an overlap, so (count + remaining,
        // max_overlap) bounds every completion.
        if !self.better(count + self.flows.len() - f, max_overlap) {
            return;
        }
        if f == self.flows.len() {
            self.best = Some((count, max_overlap));
            self.best_choice = self.choice.clone();
            return;
        }
        for i in 0..self.options[f].len() {
            self.choice[f] = Some(i);
            self.dfs(f + 1, count + 1);
        }
        self.choice[f] = None;
        self.dfs(f + 1, count);
    }
}

/// Maximum overlap if the assignment satisfies every constraint.
fn feasible_assignment(
    snapshots: &[TopologySnapshot],
    flows: &[TtFlow],
    paths: &[Option<Vec<Path>>],
    node: &NodeParams,
    max_frame: u32,
) -> Option<usize> {
    let mut load = LinkLoadState::new();
    let mut rate: BTreeMap<(usize, NodeId, NodeId), f64> = BTreeMap::new();
    for (f, ps) in paths.iter().enumerate() {
        let Some(ps) = ps else { continue };
        for (slot, p) in ps.iter().enumerate() {
            for (u, v) in p.links() {
                load.add_source(slot, (u, v), flows[f].src);
                *rate.entry((slot, u, v)).or_default() += 8.0 * flows[f].frame_bytes as f64 / flows[f].period_s;
            }
        }
    }
    for (&(slot, u, v), &r) in &rate {
        if r > snapshots[slot].link(u, v)?.bandwidth_bps * (1.0 + EPS) {
            return None;
        }
    }
    for (f, ps) in paths.iter().enumerate() {
        let Some(ps) = ps else { continue };
        let flow = &flows[f];
        let d_fixed: Vec<f64> =
            ps.iter().enumerate().map(|(s, p)| path_fixed_delay(flow, p, &snapshots[s], node).ok()).collect::<Option<_>>()?;
        let d_target = d_fixed.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for (s, p) in ps.iter().enumerate() {
            let wcd = path_wcd(p, s, &load, &snapshots[s], max_frame).ok()?;
            if d_target + wcd > flow.deadline_s + EPS {
                return None;
            }
            let slack = d_target - d_fixed[s];
            let hops = p.intermediate_nodes().len();
            let per_hop = if hops == 0 { slack } else { node.d_proc_s + slack / hops as f64 };
            if per_hop > node.t_buffer_max_s + EPS {
                return None;
            }
        }
    }
    Some(load.max_overlap())
}

fn build_schedule(
    snapshots: &[TopologySnapshot],
    flows: &[TtFlow],
    chosen: &[Option<Vec<Path>>],
    node: &NodeParams,
    max_frame: u32,
) -> Schedule {
    let mut load = LinkLoadState::new();
    for (f, ps) in chosen.iter().enumerate() {
        for (slot, p) in ps.iter().flatten().enumerate() {
            load.add_path(slot, p, flows[f].src);
        }
    }
    let entries = flows
        .iter()
        .zip(chosen)
        .map(|(flow, ps)| {
            let Some(ps) = ps else {
                return ScheduleEntry {
                    flow_id: flow.id,
                    scheduled: false,
                    paths: Vec::new(),
                    d_target_s: 0.0,
                    residence: Vec::new(),
                    wcd_total_s: Vec::new(),
                    lost_at: None,
                };
            };
            let d_fixed: Vec<f64> = ps
                .iter()
                .enumerate()
                .map(|(s, p)| path_fixed_delay(flow, p, &snapshots[s], node).expect("feasible witness"))
                .collect();
            let d_target = d_fixed.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let residence = ps
                .iter()
                .zip(&d_fixed)
                .map(|(p, &df)| {
                    let hops = p.intermediate_nodes();
                    if hops.is_empty() {
                        vec![(p.dst(), d_target - df)]
                    } else {
                        let dt = node.d_proc_s + (d_target - df) / hops.len() as f64;
                        hops.iter().map(|&v| (v, dt)).collect()
                    }
                })
                .collect();
            let wcd_total_s = ps
                .iter()
                .enumerate()
                .map(|(s, p)| path_wcd(p, s, &load, &snapshots[s], max_frame).expect("feasible witness"))
                .collect();
            ScheduleEntry {
                flow_id: flow.id,
                scheduled: true,
                paths: ps.iter().map(|p| p.nodes.clone()).collect(),
                d_target_s: d_target,
                residence,
                wcd_total_s,
                lost_at: None,
            }
        })
        .collect();
    Schedule {
        algorithm: "exact".to_string(),
        num_slots: snapshots.len(),
        max_frame_bytes: max_frame,
        node_params: *node,
        entries,
    }
}

/// One failed check, with enough context to find it.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    EntryCount { entries: usize, flows: usize },
    FlowIdMismatch { position: usize, entry: usize, flow: usize },
    PathCount { flow: usize, paths: usize, slots: usize },
    PathEndpoints { flow: usize, slot: usize },
    PathNotSimple { flow: usize, slot: usize },
    MissingLink { flow: usize, slot: usize, link: (NodeId, NodeId) },
    Bandwidth { slot: usize, link: (NodeId, NodeId), load_bps: f64, capacity_bps: f64 },
    ResidenceShape { flow: usize, slot: usize },
    MinResidence { flow: usize, slot: usize, node: NodeId, delta_t_s: f64 },
    Buffer { flow: usize, slot: usize, node: NodeId, delta_t_s: f64 },
    TargetMismatch { flow: usize, slot: usize, realized_s: f64, d_target_s: f64 },
    DeadlineMargin { flow: usize, slot: usize, d_target_s: f64, wcd_s: f64, deadline_s: f64 },
    WcdMismatch { flow: usize, slot: usize, reported_s: f64, recomputed_s: f64 },
    MaxFrame { flow: usize, frame_bytes: u32, max_frame_bytes: u32 },
    UnscheduledWithPaths { flow: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            EntryCount { entries, flows } => write!(f, "{entries} schedule entries for {flows} flows"),
            FlowIdMismatch { position, entry, flow } => {
                write!(f, "entry {position} is for flow {entry} but flow {flow} is at that position")
            }
            PathCount { flow, paths, slots } => write!(f, "flow {flow}: {paths} paths for {slots} slots"),
            PathEndpoints { flow, slot } => write!(f, "flow {flow} slot {slot}: path does not join src to dst"),
            PathNotSimple { flow, slot } => write!(f, "flow {flow} slot {slot}: path repeats a vertex"),
            MissingLink { flow, slot, link } => {
                write!(f, "flow {flow} slot {slot}: link {link:?} does not exist in the topology")
            }
            Bandwidth { slot, link, load_bps, capacity_bps } => {
                write!(f, "slot {slot} link {link:?}: load {load_bps} bps exceeds {capacity_bps} bps")
            }
            ResidenceShape { flow, slot } => {
                write!(f, "flow {flow} slot {slot}: residence nodes do not match the path")
            }
            MinResidence { flow, slot, node, delta_t_s } => {
                write!(f, "flow {flow} slot {slot} node {node}: residence {delta_t_s} s below processing delay")
            }
            Buffer { flow, slot, node, delta_t_s } => {
                write!(f, "flow {flow} slot {slot} node {node}: residence {delta_t_s} s exceeds buffer bound")
            }
            TargetMismatch { flow, slot, realized_s, d_target_s } => {
                write!(f, "flow {flow} slot {slot}: link delays plus residences {realized_s} s != target {d_target_s} s")
            }
            DeadlineMargin { flow, slot, d_target_s, wcd_s, deadline_s } => write!(
                f,
                "flow {flow} slot {slot}: target {d_target_s} s + WCD {wcd_s} s exceeds deadline {deadline_s} s"
            ),
            WcdMismatch { flow, slot, reported_s, recomputed_s } => {
                write!(f, "flow {flow} slot {slot}: reported WCD {reported_s} s, recomputed {recomputed_s} s")
            }
            MaxFrame { flow, frame_bytes, max_frame_bytes } => {
                write!(f, "flow {flow}: frame {frame_bytes} B exceeds schedule max frame {max_frame_bytes} B")
            }
            UnscheduledWithPaths { flow } => write!(f, "flow {flow}: unscheduled but carries paths"),
        }
    }
}

/// Checks path uniqueness and validity, bandwidth, buffer, minimum
/// residence, deadline margin and the per-slot target equality. Empty means
/// valid.
pub fn verify_schedule(
    schedule: &Schedule,
    snapshots: &[TopologySnapshot],
    flows: &[TtFlow],
    node: &NodeParams,
) -> Vec<Violation> {
    let mut out = Vec::new();
    if schedule.entries.len() != flows.len() {
        out.push(Violation::EntryCount { entries: schedule.entries.len(), flows: flows.len() });
        return out;
    }
    let n_slots = snapshots.len();

    // Structure first; only structurally sound entries feed the load.
    let mut sound = vec![false; flows.len()];
    for (pos, (e, flow)) in schedule.entries.iter().zip(flows).enumerate() {
        if e.flow_id != flow.id {
            out.push(Violation::FlowIdMismatch { position: pos, entry: e.flow_id, flow: flow.id });
        }
        if !e.scheduled {
            if !e.paths.is_empty() {
                out.push(Violation::UnscheduledWithPaths { flow: flow.id });
            }
            continue;
        }
        if flow.frame_bytes > schedule.max_frame_bytes {
            out.push(Violation::MaxFrame {
                flow: flow.id,
                frame_bytes: flow.frame_bytes,
                max_frame_bytes: schedule.max_frame_bytes,
            });
        }
        if e.paths.len() != n_slots || e.residence.len() != n_slots || e.wcd_total_s.len() != n_slots {
            out.push(Violation::PathCount { flow: flow.id, paths: e.paths.len(), slots: n_slots });
            continue;
        }
        let mut ok = true;
        for (slot, nodes) in e.paths.iter().enumerate() {
            if nodes.len() < 2 || nodes[0] != flow.src || nodes[nodes.len() - 1] != flow.dst {
                out.push(Violation::PathEndpoints { flow: flow.id, slot });
                ok = false;
                continue;
            }
            let mut seen = nodes.clone();
            seen.sort_unstable();
            seen.dedup();
            if seen.len() != nodes.len() {
                out.push(Violation::PathNotSimple { flow: flow.id, slot });
                ok = false;
            }
            for w in nodes.windows(2) {
                if snapshots[slot].link(w[0], w[1]).is_none() {
                    out.push(Violation::MissingLink { flow: flow.id, slot, link: (w[0], w[1]) });
                    ok = false;
                }
            }
        }
        sound[pos] = ok;
    }

    let mut load = LinkLoadState::new();
    let mut rate: BTreeMap<(usize, NodeId, NodeId), f64> = BTreeMap::new();
    for (pos, (e, flow)) in schedule.entries.iter().zip(flows).enumerate() {
        if !sound[pos] {
            continue;
        }
        for (slot, nodes) in e.paths.iter().enumerate() {
            for w in nodes.windows(2) {
                load.add_source(slot, (w[0], w[1]), flow.src);
                *rate.entry((slot, w[0], w[1])).or_default() += 8.0 * flow.frame_bytes as f64 / flow.period_s;
            }
        }
    }
    for (&(slot, u, v), &r) in &rate {
        let cap = snapshots[slot].links[&(u, v)].bandwidth_bps;
        if r > cap * (1.0 + 1e-12) {
            out.push(Violation::Bandwidth { slot, link: (u, v), load_bps: r, capacity_bps: cap });
        }
    }

    for (pos, (e, flow)) in schedule.entries.iter().zip(flows).enumerate() {
        if !sound[pos] {
            continue;
        }
        for (slot, nodes) in e.paths.iter().enumerate() {
            let snap = &snapshots[slot];
            let inter = &nodes[1..nodes.len() - 1];
            let res = &e.residence[slot];
            let shape_ok = if inter.is_empty() {
                res.len() == 1 && res[0].0 == flow.dst
            } else {
                res.len() == inter.len() && res.iter().zip(inter).all(|(r, &v)| r.0 == v)
            };
            if !shape_ok {
                out.push(Violation::ResidenceShape { flow: flow.id, slot });
                continue;
            }
            for &(v, dt) in res {
                let floor = if inter.is_empty() { 0.0 } else { node.d_proc_s };
                if dt < floor - VERIFY_TOL {
                    out.push(Violation::MinResidence { flow: flow.id, slot, node: v, delta_t_s: dt });
                }
                if dt > node.t_buffer_max_s + VERIFY_TOL {
                    out.push(Violation::Buffer { flow: flow.id, slot, node: v, delta_t_s: dt });
                }
            }

            let mut realized = 0.0;
            for w in nodes.windows(2) {
                realized += link_delay(flow, (w[0], w[1]), snap).unwrap_or(f64::NAN);
            }
            realized += res.iter().map(|r| r.1).sum::<f64>();
            if !((realized - e.d_target_s).abs() <= VERIFY_TOL) {
                out.push(Violation::TargetMismatch { flow: flow.id, slot, realized_s: realized, d_target_s: e.d_target_s });
            }

            let mut wcd = 0.0;
            for w in nodes.windows(2) {
                let c_max = transmission_time(schedule.max_frame_bytes, snap.links[&(w[0], w[1])].bandwidth_bps)
                    .unwrap_or(f64::INFINITY);
                wcd += load.overlap(slot, (w[0], w[1])).saturating_sub(1) as f64 * c_max;
            }
            if !((wcd - e.wcd_total_s[slot]).abs() <= VERIFY_TOL) {
                out.push(Violation::WcdMismatch { flow: flow.id, slot, reported_s: e.wcd_total_s[slot], recomputed_s: wcd });
            }
            if e.d_target_s + wcd > flow.deadline_s + VERIFY_TOL {
                out.push(Violation::DeadlineMargin {
                    flow: flow.id,
                    slot,
                    d_target_s: e.d_target_s,
                    wcd_s: wcd,
                    deadline_s: flow.deadline_s,
                });
            }
        }
    }
    out
}
