//! Flow admission and routing across slots: the layered collision-tolerant
//! heuristic (CRT-Fast), residence-time allocation, and three baselines
//! (shortest path first, load-aware greedy, strict non-overlapping).
//!
//! All algorithms share [`SchedulingState`], which tracks per-slot link
//! occupancy at source granularity and the running delay budget of every
//! placed flow. Slots are scheduled in order; a flow admitted in slot 0 must
//! be placed again in every later slot or it is dropped ("lost") and its
//! reservations are released everywhere.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constellation::{LinkAttr, NodeId, TopologySnapshot};
use crate::kpaths::{CandidateSet, Path};
use crate::timing::{path_fixed_delay, path_wcd, transmission_time, wcd_link, LinkLoadState, NodeParams, TimingError};
use crate::traffic::TtFlow;

/// Absolute slack used by admission comparisons, seconds.
const EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    CrtFast,
    Spf,
    Lag,
    Strict,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::CrtFast, Algorithm::Spf, Algorithm::Lag, Algorithm::Strict];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::CrtFast => "crt_fast",
            Algorithm::Spf => "spf",
            Algorithm::Lag => "lag",
            Algorithm::Strict => "strict",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "crt_fast" | "crt" => Ok(Algorithm::CrtFast),
            "spf" => Ok(Algorithm::Spf),
            "lag" => Ok(Algorithm::Lag),
            "strict" | "strict_nonoverlap" => Ok(Algorithm::Strict),
            other => Err(format!("unknown algorithm `{other}` (expected crt_fast, spf, lag or strict)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedulerConfig {
    pub k: usize,
    pub node_params: NodeParams,
    pub enable_path_continuity: bool,
    /// Stop layering after this many layers per slot.
    pub layer_cap: Option<usize>,
    /// Frame size behind `C_max`; defaults to the largest frame in the flow set.
    pub max_frame_bytes: Option<u32>,
    /// Retry rejected and lost flows over all slots after layering.
    pub readmit: bool,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            k: 5,
            node_params: NodeParams::default(),
            enable_path_continuity: true,
            layer_cap: None,
            max_frame_bytes: None,
            readmit: true,
        }
    }
}

/// Per-flow outcome. Unscheduled flows carry empty per-slot vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub flow_id: usize,
    #[serde(rename = "y")]
    pub scheduled: bool,
    /// Vertex sequence per slot.
    pub paths: Vec<Vec<NodeId>>,
    pub d_target_s: f64,
    /// Per slot, `(node, delta_t)` for every intermediate node in path
    /// order. A path without intermediate nodes holds its slack at the
    /// destination instead, as a single `(dst, hold)` entry.
    #[serde(rename = "delta_t_s")]
    pub residence: Vec<Vec<(NodeId, f64)>>,
    pub wcd_total_s: Vec<f64>,
    /// First slot in which a previously admitted flow could not be placed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lost_at: Option<usize>,
}

impl ScheduleEntry {
    fn unscheduled(flow_id: usize, lost_at: Option<usize>) -> Self {
        Self {
            flow_id,
            scheduled: false,
            paths: Vec::new(),
            d_target_s: 0.0,
            residence: Vec::new(),
            wcd_total_s: Vec::new(),
            lost_at,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    /// Name of the algorithm that produced the schedule.
    pub algorithm: String,
    pub num_slots: usize,
    pub max_frame_bytes: u32,
    pub node_params: NodeParams,
    /// One entry per input flow, in input order.
    pub entries: Vec<ScheduleEntry>,
}

impl Schedule {
    pub fn scheduled_count(&self) -> usize {
        self.entries.iter().filter(|e| e.scheduled).count()
    }

    pub fn success_rate(&self) -> f64 {
        if self.entries.is_empty() {
            1.0
        } else {
            self.scheduled_count() as f64 / self.entries.len() as f64
        }
    }

    /// Source occupancy recomputed from the scheduled paths.
    pub fn link_load(&self, flows: &[TtFlow]) -> LinkLoadState {
        let mut load = LinkLoadState::new();
        for (e, f) in self.entries.iter().zip(flows) {
            if !e.scheduled {
                continue;
            }
            for (slot, nodes) in e.paths.iter().enumerate() {
                for w in nodes.windows(2) {
                    load.add_source(slot, (w[0], w[1]), f.src);
                }
            }
        }
        load
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchedulerOutput {
    pub schedule: Schedule,
    pub load: LinkLoadState,
    /// Layers committed per slot (CRT-Fast only; zero for baselines).
    pub layers_per_slot: Vec<usize>,
}

/// Result of distributing slack over the hops of each slot's path.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub d_target_s: f64,
    pub d_fixed_s: Vec<f64>,
    pub residence: Vec<Vec<(NodeId, f64)>>,
    pub wcd_total_s: Vec<f64>,
}

#[derive(Debug, Error, PartialEq)]
pub enum AllocationError {
    #[error("slot {slot}: target {d_target_s} s plus WCD {wcd_s} s exceeds deadline {deadline_s} s")]
    DeadlineMargin { slot: usize, d_target_s: f64, wcd_s: f64, deadline_s: f64 },
    #[error("slot {slot}: residence {delta_t_s} s at node {node} exceeds the buffer bound")]
    Buffer { slot: usize, node: NodeId, delta_t_s: f64 },
    #[error("no paths given")]
    NoSlots,
    #[error(transparent)]
    Timing(#[from] TimingError),
}

/// Common target delay `max_slot D_fixed` and per-hop residence times that
/// pad every slot's path up to it.
pub fn allocate_residence(
    flow: &TtFlow,
    paths: &[Path],
    snapshots: &[TopologySnapshot],
    load: &LinkLoadState,
    node: &NodeParams,
    max_frame_bytes: u32,
) -> Result<Allocation, AllocationError> {
    if paths.is_empty() {
        return Err(AllocationError::NoSlots);
    }
    let mut d_fixed = Vec::with_capacity(paths.len());
    let mut wcd = Vec::with_capacity(paths.len());
    for (slot, p) in paths.iter().enumerate() {
        d_fixed.push(path_fixed_delay(flow, p, &snapshots[slot], node)?);
        wcd.push(path_wcd(p, slot, load, &snapshots[slot], max_frame_bytes)?);
    }
    let d_target = d_fixed.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut residence = Vec::with_capacity(paths.len());
    for (slot, p) in paths.iter().enumerate() {
        if d_target + wcd[slot] > flow.deadline_s + EPS {
            return Err(AllocationError::DeadlineMargin {
                slot,
                d_target_s: d_target,
                wcd_s: wcd[slot],
                deadline_s: flow.deadline_s,
            });
        }
        let slack = d_target - d_fixed[slot];
        let hops = p.intermediate_nodes();
        let slot_res: Vec<(NodeId, f64)> = if hops.is_empty() {
            vec![(p.dst(), slack)]
        } else {
            let per_hop = node.d_proc_s + slack / hops.len() as f64;
            hops.iter().map(|&v| (v, per_hop)).collect()
        };
        for &(v, dt) in &slot_res {
            if dt > node.t_buffer_max_s + EPS {
                return Err(AllocationError::Buffer { slot, node: v, delta_t_s: dt });
            }
        }
        residence.push(slot_res);
    }
    Ok(Allocation { d_target_s: d_target, d_fixed_s: d_fixed, residence, wcd_total_s: wcd })
}

/// Directed links of one slot with dense ids in `(u, v)` order.
struct SlotLinks {
    offsets: Vec<usize>,
    targets: Vec<NodeId>,
    attrs: Vec<LinkAttr>,
}

impl SlotLinks {
    fn new(s: &TopologySnapshot) -> Self {
        let n = s.num_nodes();
        let mut offsets = vec![0usize; n + 1];
        for &(u, _) in s.links.keys() {
            offsets[u + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        Self {
            offsets,
            targets: s.links.keys().map(|&(_, v)| v).collect(),
            attrs: s.links.values().copied().collect(),
        }
    }

    fn id(&self, u: NodeId, v: NodeId) -> Option<u32> {
        if u + 1 >= self.offsets.len() {
            return None;
        }
        let (a, b) = (self.offsets[u], self.offsets[u + 1]);
        self.targets[a..b].binary_search(&v).ok().map(|i| (a + i) as u32)
    }

    fn len(&self) -> usize {
        self.targets.len()
    }
}

/// A path resolved against one slot's link ids, with its fixed delay.
#[derive(Debug, Clone, PartialEq)]
pub struct PlacedPath {
    pub path: Path,
    links: Vec<u32>,
    pub d_fixed_s: f64,
    n_intermediate: usize,
}

impl PlacedPath {
    pub fn shares_link_with(&self, other: &PlacedPath) -> bool {
        self.links.iter().any(|l| other.links.contains(l))
    }
}

#[derive(Debug, Clone)]
struct Placement {
    placed: PlacedPath,
    wcd_s: f64,
}

#[derive(Debug, Clone, Default)]
struct LinkLoad {
    /// `(source, number of placed flows from it)`.
    sources: Vec<(NodeId, u32)>,
    flows: Vec<u32>,
    rate_bps: f64,
}

impl LinkLoad {
    fn has_source(&self, src: NodeId) -> bool {
        self.sources.iter().any(|&(s, _)| s == src)
    }

    fn overlap(&self) -> usize {
        self.sources.len()
    }
}

/// Mutable occupancy and per-flow delay budgets shared by all algorithms.
pub struct SchedulingState<'a> {
    snapshots: &'a [TopologySnapshot],
    flows: &'a [TtFlow],
    node: NodeParams,
    max_frame_bytes: u32,
    links: Vec<SlotLinks>,
    c_max: Vec<Vec<f64>>,
    loads: Vec<Vec<LinkLoad>>,
    placed: Vec<Vec<Option<Placement>>>,
    /// Largest fixed delay over the slots placed so far.
    d_target_run: Vec<f64>,
    rate_bps: Vec<f64>,
    // scratch for feasibility checks
    inc_stamp: Vec<u32>,
    inc_val: Vec<f64>,
    touched: Vec<usize>,
    stamp: u32,
}

impl<'a> SchedulingState<'a> {
    pub fn new(snapshots: &'a [TopologySnapshot], flows: &'a [TtFlow], cfg: &SchedulerConfig) -> Self {
        let max_frame_bytes = cfg
            .max_frame_bytes
            .unwrap_or_else(|| flows.iter().map(|f| f.frame_bytes).max().unwrap_or(0));
        let links: Vec<SlotLinks> = snapshots.iter().map(SlotLinks::new).collect();
        let c_max = links
            .iter()
            .map(|l| {
                l.attrs
                    .iter()
                    .map(|a| transmission_time(max_frame_bytes, a.bandwidth_bps).unwrap_or(f64::INFINITY))
                    .collect()
            })
            .collect();
        let loads = links.iter().map(|l| vec![LinkLoad::default(); l.len()]).collect();
        Self {
            snapshots,
            flows,
            node: cfg.node_params,
            max_frame_bytes,
            links,
            c_max,
            loads,
            placed: vec![vec![None; snapshots.len()]; flows.len()],
            d_target_run: vec![f64::NEG_INFINITY; flows.len()],
            rate_bps: flows.iter().map(|f| 8.0 * f.frame_bytes as f64 / f.period_s).collect(),
            inc_stamp: vec![0; flows.len()],
            inc_val: vec![0.0; flows.len()],
            touched: Vec::new(),
            stamp: 0,
        }
    }

    pub fn num_slots(&self) -> usize {
        self.snapshots.len()
    }

    pub fn max_frame_bytes(&self) -> u32 {
        self.max_frame_bytes
    }

    /// Resolves `path` in `slot` for flow position `f`; `None` if a link is
    /// missing from that slot's topology.
    pub fn resolve(&self, f: usize, slot: usize, path: &Path) -> Option<PlacedPath> {
        let sl = &self.links[slot];
        let links = path.links().map(|(u, v)| sl.id(u, v)).collect::<Option<Vec<u32>>>()?;
        let d_fixed_s = path_fixed_delay(&self.flows[f], path, &self.snapshots[slot], &self.node).ok()?;
        let prop = links.iter().map(|&l| sl.attrs[l as usize].prop_delay_s).sum();
        Some(PlacedPath {
            path: Path { nodes: path.nodes.clone(), prop_delay_s: prop },
            links,
            d_fixed_s,
            n_intermediate: path.intermediate_nodes().len(),
        })
    }

    pub fn placed_path(&self, f: usize, slot: usize) -> Option<&PlacedPath> {
        self.placed[f][slot].as_ref().map(|p| &p.placed)
    }

    pub fn is_placed(&self, f: usize, slot: usize) -> bool {
        self.placed[f][slot].is_some()
    }

    pub fn overlap(&self, slot: usize, link: (NodeId, NodeId)) -> usize {
        self.links[slot].id(link.0, link.1).map_or(0, |l| self.loads[slot][l as usize].overlap())
    }

    /// Sum of current overlap degrees along `p`.
    pub fn congestion_cost(&self, slot: usize, p: &PlacedPath) -> usize {
        p.links.iter().map(|&l| self.loads[slot][l as usize].overlap()).sum()
    }

    /// True if no link of `p` carries a source other than `src`.
    pub fn is_exclusive(&self, slot: usize, p: &PlacedPath, src: NodeId) -> bool {
        p.links.iter().all(|&l| self.loads[slot][l as usize].sources.iter().all(|&(s, _)| s == src))
    }

    fn buffer_ok(&self, d_target: f64, d_fixed: f64, n_int: usize) -> bool {
        let slack = d_target - d_fixed;
        if n_int == 0 {
            slack <= self.node.t_buffer_max_s + EPS
        } else {
            self.node.d_proc_s + slack / n_int as f64 <= self.node.t_buffer_max_s + EPS
        }
    }

    /// Would placing `p` for flow `f` in `slot` keep every affected flow
    /// within its deadline margin and buffer bound, and every link within
    /// bandwidth? The state is left unchanged.
    pub fn check_global_feasibility(&mut self, f: usize, slot: usize, p: &PlacedPath) -> bool {
        let flow = &self.flows[f];
        let load = &self.loads[slot];
        let c_max = &self.c_max[slot];
        let attrs = &self.links[slot].attrs;

        let mut own_wcd = 0.0;
        for &l in &p.links {
            let ll = &load[l as usize];
            if ll.rate_bps + self.rate_bps[f] > attrs[l as usize].bandwidth_bps * (1.0 + EPS) {
                return false;
            }
            let n_after = ll.overlap() + usize::from(!ll.has_source(flow.src));
            own_wcd += wcd_link(n_after, c_max[l as usize]);
        }

        let d_target = self.d_target_run[f].max(p.d_fixed_s);
        if d_target + own_wcd > flow.deadline_s + EPS || !self.buffer_ok(d_target, p.d_fixed_s, p.n_intermediate) {
            return false;
        }
        if d_target > self.d_target_run[f] {
            for (s, pl) in self.placed[f].iter().enumerate() {
                if s == slot {
                    continue;
                }
                if let Some(pl) = pl {
                    if d_target + pl.wcd_s > flow.deadline_s + EPS
                        || !self.buffer_ok(d_target, pl.placed.d_fixed_s, pl.placed.n_intermediate)
                    {
                        return false;
                    }
                }
            }
        }

        // Links where this source is new raise the WCD of every flow on them.
        self.stamp = self.stamp.wrapping_add(1);
        if self.stamp == 0 {
            self.inc_stamp.iter_mut().for_each(|s| *s = 0);
            self.stamp = 1;
        }
        self.touched.clear();
        for &l in &p.links {
            let ll = &load[l as usize];
            if ll.has_source(flow.src) {
                continue;
            }
            for &j in &ll.flows {
                let j = j as usize;
                if self.inc_stamp[j] != self.stamp {
                    self.inc_stamp[j] = self.stamp;
                    self.inc_val[j] = 0.0;
                    self.touched.push(j);
                }
                self.inc_val[j] += c_max[l as usize];
            }
        }
        for &j in &self.touched {
            let pl = self.placed[j][slot].as_ref().expect("flow on link is placed");
            if self.d_target_run[j] + pl.wcd_s + self.inc_val[j] > self.flows[j].deadline_s + EPS {
                return false;
            }
        }
        true
    }

    pub fn commit(&mut self, f: usize, slot: usize, p: PlacedPath) {
        assert!(self.placed[f][slot].is_none(), "flow {f} already placed in slot {slot}");
        let src = self.flows[f].src;
        let rate = self.rate_bps[f];
        let mut own_wcd = 0.0;
        for &l in &p.links {
            let l = l as usize;
            let c = self.c_max[slot][l];
            let ll = &mut self.loads[slot][l];
            match ll.sources.iter_mut().find(|(s, _)| *s == src) {
                Some(entry) => entry.1 += 1,
                None => {
                    ll.sources.push((src, 1));
                    for &j in &ll.flows {
                        if let Some(pl) = self.placed[j as usize][slot].as_mut() {
                            pl.wcd_s += c;
                        }
                    }
                }
            }
            ll.flows.push(f as u32);
            ll.rate_bps += rate;
            own_wcd += wcd_link(ll.overlap(), c);
        }
        self.d_target_run[f] = self.d_target_run[f].max(p.d_fixed_s);
        self.placed[f][slot] = Some(Placement { placed: p, wcd_s: own_wcd });
    }

    pub fn release(&mut self, f: usize, slot: usize) {
        let Some(pl) = self.placed[f][slot].take() else { return };
        let src = self.flows[f].src;
        let rate = self.rate_bps[f];
        for &l in &pl.placed.links {
            let l = l as usize;
            let c = self.c_max[slot][l];
            let ll = &mut self.loads[slot][l];
            if let Some(i) = ll.flows.iter().position(|&j| j as usize == f) {
                ll.flows.swap_remove(i);
            }
            ll.rate_bps = if ll.flows.is_empty() { 0.0 } else { ll.rate_bps - rate };
            let i = ll.sources.iter().position(|&(s, _)| s == src).expect("source recorded");
            ll.sources[i].1 -= 1;
            if ll.sources[i].1 == 0 {
                ll.sources.swap_remove(i);
                for &j in &ll.flows {
                    if let Some(other) = self.placed[j as usize][slot].as_mut() {
                        other.wcd_s -= c;
                    }
                }
            }
        }
        self.d_target_run[f] = self.placed[f]
            .iter()
            .flatten()
            .map(|p| p.placed.d_fixed_s)
            .fold(f64::NEG_INFINITY, f64::max);
    }

    pub fn release_all(&mut self, f: usize) {
        for slot in 0..self.num_slots() {
            self.release(f, slot);
        }
    }

    /// Distinct-source occupancy of every link, for reporting.
    pub fn link_load_state(&self) -> LinkLoadState {
        let mut out = LinkLoadState::new();
        for (slot, loads) in self.loads.iter().enumerate() {
            let sl = &self.links[slot];
            for u in 0..sl.offsets.len() - 1 {
                for l in sl.offsets[u]..sl.offsets[u + 1] {
                    for &(src, _) in &loads[l].sources {
                        out.add_source(slot, (u, sl.targets[l]), src);
                    }
                }
            }
        }
        out
    }

    /// Resolved candidate paths of flow `f` in `slot`.
    fn resolve_candidates(&self, f: usize, slot: usize, candidates: &CandidateSet, k: usize) -> Vec<PlacedPath> {
        candidates
            .get(f, slot)
            .iter()
            .take(k)
            .filter_map(|p| self.resolve(f, slot, p))
            .collect()
    }

    /// One layer of the layered heuristic for `slot`.
    ///
    /// Flows are ordered by conflict degree (fewest shared candidate links
    /// at source granularity first, then earliest deadline, then position).
    /// Each flow tries its previous-slot path, then its least-conflicting
    /// candidate, then the remaining candidates; a path is taken only if it
    /// shares no directed link with paths already taken in this layer and
    /// passes [`check_global_feasibility`](Self::check_global_feasibility).
    /// Accepted paths are committed immediately so later checks in the same
    /// layer see them. Returns the flows placed.
    ///
    /// A flow whose previous path is still present and feasible but blocked
    /// only by the layer is deferred to a later layer rather than rerouted.
    pub fn find_max_feasible_layer(
        &mut self,
        slot: usize,
        unscheduled: &[usize],
        cands: &[Vec<PlacedPath>],
        continuity: bool,
    ) -> Vec<usize> {
        let n_links = self.links[slot].len();

        // Conflict degrees.
        let mut link_counts = vec![0u32; n_links];
        let mut last_src = vec![usize::MAX; n_links];
        let mut by_src: Vec<usize> = unscheduled.to_vec();
        by_src.sort_by_key(|&f| (self.flows[f].src, f));
        for &f in &by_src {
            let src = self.flows[f].src;
            for p in &cands[f] {
                for &l in &p.links {
                    let l = l as usize;
                    if last_src[l] != src {
                        last_src[l] = src;
                        link_counts[l] += 1;
                    }
                }
            }
        }
        let mut order: Vec<(u64, usize, Option<usize>)> = unscheduled
            .iter()
            .map(|&f| {
                let mut best: Option<(u64, usize)> = None;
                for (i, p) in cands[f].iter().enumerate() {
                    let pc: u64 = p.links.iter().map(|&l| u64::from(link_counts[l as usize] - 1)).sum();
                    if best.is_none_or(|(b, _)| pc < b) {
                        best = Some((pc, i));
                    }
                }
                (best.map_or(u64::MAX, |b| b.0), f, best.map(|b| b.1))
            })
            .collect();
        order.sort_by(|a, b| {
            a.0.cmp(&b.0)
                .then_with(|| self.flows[a.1].deadline_s.total_cmp(&self.flows[b.1].deadline_s))
                .then_with(|| a.1.cmp(&b.1))
        });

        // Greedy selection.
        let mut in_layer = vec![false; n_links];
        let mut layer = Vec::new();
        let disjoint = |p: &PlacedPath, in_layer: &[bool]| p.links.iter().all(|&l| !in_layer[l as usize]);
        for (_, f, star) in order {
            let mut chosen: Option<PlacedPath> = None;
            if continuity && slot > 0 {
                let prev = self.placed[f][slot - 1].as_ref().map(|p| p.placed.path.clone());
                if let Some(prev) = prev.and_then(|p| self.resolve(f, slot, &p)) {
                    if self.check_global_feasibility(f, slot, &prev) {
                        if !disjoint(&prev, &in_layer) {
                            continue;
                        }
                        chosen = Some(prev);
                    }
                }
            }
            if chosen.is_none() {
                if let Some(si) = star {
                    let p = &cands[f][si];
                    if disjoint(p, &in_layer) && self.check_global_feasibility(f, slot, p) {
                        chosen = Some(p.clone());
                    }
                }
            }
            if chosen.is_none() {
                for (i, p) in cands[f].iter().enumerate() {
                    if Some(i) == star || !disjoint(p, &in_layer) {
                        continue;
                    }
                    if self.check_global_feasibility(f, slot, p) {
                        chosen = Some(p.clone());
                        break;
                    }
                }
            }
            if let Some(p) = chosen {
                for &l in &p.links {
                    in_layer[l as usize] = true;
                }
                self.commit(f, slot, p);
                layer.push(f);
            }
        }
        layer
    }
}

/// Runs `algorithm` over all slots and allocates residence times.
pub fn schedule(
    algorithm: Algorithm,
    snapshots: &[TopologySnapshot],
    flows: &[TtFlow],
    candidates: &CandidateSet,
    cfg: &SchedulerConfig,
) -> SchedulerOutput {
    match algorithm {
        Algorithm::CrtFast => crt_fast(snapshots, flows, candidates, cfg),
        Algorithm::Spf => spf_schedule(snapshots, flows, candidates, cfg),
        Algorithm::Lag => lag_schedule(snapshots, flows, candidates, cfg),
        Algorithm::Strict => strict_nonoverlap_schedule(snapshots, flows, candidates, cfg),
    }
}

/// Flows placed in `slot - 1`, or every flow for slot 0.
fn active_flows(state: &SchedulingState, slot: usize) -> Vec<usize> {
    if slot == 0 {
        (0..state.flows.len()).collect()
    } else {
        (0..state.flows.len()).filter(|&f| state.is_placed(f, slot - 1)).collect()
    }
}

/// Drops admitted flows that found no path in `slot`.
fn drop_unplaced(state: &mut SchedulingState, slot: usize, active: &[usize], lost: &mut [Option<usize>]) {
    if slot == 0 {
        return;
    }
    for &f in active {
        if !state.is_placed(f, slot) {
            state.release_all(f);
            lost[f] = Some(slot);
        }
    }
}

/// Layered heuristic over all slots, followed by re-admission. When the
/// strict non-overlapping set alone admits more flows, the layering is
/// rerun on top of that set instead.
pub fn crt_fast(
    snapshots: &[TopologySnapshot],
    flows: &[TtFlow],
    candidates: &CandidateSet,
    cfg: &SchedulerConfig,
) -> SchedulerOutput {
    let out = crt_layered(snapshots, flows, candidates, cfg, false);
    let strict = strict_nonoverlap_schedule(snapshots, flows, candidates, cfg);
    if strict.schedule.scheduled_count() > out.schedule.scheduled_count() {
        crt_layered(snapshots, flows, candidates, cfg, true)
    } else {
        out
    }
}

fn crt_layered(
    snapshots: &[TopologySnapshot],
    flows: &[TtFlow],
    candidates: &CandidateSet,
    cfg: &SchedulerConfig,
    strict_base: bool,
) -> SchedulerOutput {
    let mut state = SchedulingState::new(snapshots, flows, cfg);
    let mut lost = vec![None; flows.len()];
    let mut layers_per_slot = Vec::with_capacity(snapshots.len());
    let base = if strict_base { strict_admit(&mut state, candidates, cfg.k) } else { vec![false; flows.len()] };
    let base_layers = usize::from(base.contains(&true));
    for slot in 0..snapshots.len() {
        let mut active = active_flows(&state, slot);
        active.retain(|&f| !base[f]);
        let mut cands = vec![Vec::new(); flows.len()];
        for &f in &active {
            cands[f] = state.resolve_candidates(f, slot, candidates, cfg.k);
        }
        let mut unscheduled = active.clone();
        let mut layers = base_layers;
        while !unscheduled.is_empty() && cfg.layer_cap.is_none_or(|cap| layers < cap) {
            let layer = state.find_max_feasible_layer(slot, &unscheduled, &cands, cfg.enable_path_continuity);
            if layer.is_empty() {
                break;
            }
            layers += 1;
            unscheduled.retain(|&f| !state.is_placed(f, slot));
        }
        layers_per_slot.push(layers);
        drop_unplaced(&mut state, slot, &active, &mut lost);
    }
    if cfg.readmit {
        readmit(&mut state, candidates, cfg.k, &mut lost);
    }
    finish(Algorithm::CrtFast, state, &lost, layers_per_slot)
}

/// Second chance for flows that were rejected or lost: each is retried over
/// all slots at once, earliest deadline first, against the finished
/// schedule. Per slot the previous path is tried first, then candidates by
/// current congestion.
fn readmit(state: &mut SchedulingState, candidates: &CandidateSet, k: usize, lost: &mut [Option<usize>]) {
    let n_slots = state.num_slots();
    let flows = state.flows;
    let mut pending: Vec<usize> =
        (0..flows.len()).filter(|&f| n_slots > 0 && !(0..n_slots).all(|s| state.is_placed(f, s))).collect();
    pending.sort_by(|&a, &b| flows[a].deadline_s.total_cmp(&flows[b].deadline_s).then(a.cmp(&b)));
    for f in pending {
        state.release_all(f);
        let mut ok = true;
        for slot in 0..n_slots {
            let mut cands = state.resolve_candidates(f, slot, candidates, k);
            let prev = (slot > 0).then(|| state.placed_path(f, slot - 1).map(|p| p.path.clone())).flatten();
            let mut ranked: Vec<(bool, usize, usize)> = cands
                .iter()
                .enumerate()
                .map(|(i, p)| (prev.as_ref().is_none_or(|q| q.nodes != p.path.nodes), state.congestion_cost(slot, p), i))
                .collect();
            ranked.sort();
            let pick = ranked.into_iter().map(|r| r.2).find(|&i| state.check_global_feasibility(f, slot, &cands[i]));
            match pick {
                Some(i) => state.commit(f, slot, cands.swap_remove(i)),
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            lost[f] = None;
        } else {
            state.release_all(f);
        }
    }
}

/// Every flow rides its shortest candidate in each slot.
pub fn spf_schedule(
    snapshots: &[TopologySnapshot],
    flows: &[TtFlow],
    candidates: &CandidateSet,
    cfg: &SchedulerConfig,
) -> SchedulerOutput {
    let mut state = SchedulingState::new(snapshots, flows, cfg);
    let mut lost = vec![None; flows.len()];
    for slot in 0..snapshots.len() {
        let active = active_flows(&state, slot);
        for &f in &active {
            let Some(p) = candidates.get(f, slot).first().and_then(|p| state.resolve(f, slot, p)) else {
                continue;
            };
            if state.check_global_feasibility(f, slot, &p) {
                state.commit(f, slot, p);
            }
        }
        drop_unplaced(&mut state, slot, &active, &mut lost);
    }
    finish(Algorithm::Spf, state, &lost, vec![0; snapshots.len()])
}

/// Flows in input order each take the feasible candidate with the smallest
/// sum of current overlap degrees (ties: shorter delay, then rank).
pub fn lag_schedule(
    snapshots: &[TopologySnapshot],
    flows: &[TtFlow],
    candidates: &CandidateSet,
    cfg: &SchedulerConfig,
) -> SchedulerOutput {
    let mut state = SchedulingState::new(snapshots, flows, cfg);
    let mut lost = vec![None; flows.len()];
    for slot in 0..snapshots.len() {
        let active = active_flows(&state, slot);
        for &f in &active {
            let cands = state.resolve_candidates(f, slot, candidates, cfg.k);
            let mut ranked: Vec<(usize, usize)> =
                cands.iter().enumerate().map(|(i, p)| (state.congestion_cost(slot, p), i)).collect();
            ranked.sort_by(|a, b| {
                a.0.cmp(&b.0)
                    .then_with(|| cands[a.1].path.prop_delay_s.total_cmp(&cands[b.1].path.prop_delay_s))
                    .then_with(|| a.1.cmp(&b.1))
            });
            for (_, i) in ranked {
                if state.check_global_feasibility(f, slot, &cands[i]) {
                    state.commit(f, slot, cands[i].clone());
                    break;
                }
            }
        }
        drop_unplaced(&mut state, slot, &active, &mut lost);
    }
    finish(Algorithm::Lag, state, &lost, vec![0; snapshots.len()])
}

/// Admits a flow only if, in every slot, some candidate avoids all links
/// used by other sources. Flows are processed in input order, all slots at
/// once.
pub fn strict_nonoverlap_schedule(
    snapshots: &[TopologySnapshot],
    flows: &[TtFlow],
    candidates: &CandidateSet,
    cfg: &SchedulerConfig,
) -> SchedulerOutput {
    let mut state = SchedulingState::new(snapshots, flows, cfg);
    strict_admit(&mut state, candidates, cfg.k);
    finish(Algorithm::Strict, state, &vec![None; flows.len()], vec![0; snapshots.len()])
}

/// Strict admission into `state`; returns which flows were placed in every slot.
fn strict_admit(state: &mut SchedulingState, candidates: &CandidateSet, k: usize) -> Vec<bool> {
    let flows = state.flows;
    let mut admitted = vec![false; flows.len()];
    for f in 0..flows.len() {
        let src = flows[f].src;
        let mut ok = true;
        for slot in 0..state.num_slots() {
            let cands = state.resolve_candidates(f, slot, candidates, k);
            let pick = cands
                .into_iter()
                .find(|p| state.is_exclusive(slot, p, src) && state.check_global_feasibility(f, slot, p));
            match pick {
                Some(p) => state.commit(f, slot, p),
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            admitted[f] = true;
        } else {
            state.release_all(f);
        }
    }
    admitted
}

/// Post-processing: residence allocation for every fully placed flow; flows
/// that fail it are released before the final entries are built.
fn finish(
    algorithm: Algorithm,
    mut state: SchedulingState,
    lost: &[Option<usize>],
    layers_per_slot: Vec<usize>,
) -> SchedulerOutput {
    let n_slots = state.num_slots();
    let flows = state.flows;
    let snapshots = state.snapshots;
    let node = state.node;
    let max_frame = state.max_frame_bytes;
    let complete: Vec<bool> =
        (0..flows.len()).map(|f| n_slots > 0 && (0..n_slots).all(|s| state.is_placed(f, s))).collect();
    for (f, &c) in complete.iter().enumerate() {
        if !c {
            state.release_all(f);
        }
    }

    let paths_of = |state: &SchedulingState, f: usize| -> Vec<Path> {
        (0..n_slots).map(|s| state.placed_path(f, s).expect("complete flow").path.clone()).collect()
    };
    let mut rejected: BTreeSet<usize> = BTreeSet::new();
    loop {
        let load = state.link_load_state();
        let mut newly = Vec::new();
        for f in 0..flows.len() {
            if complete[f] && !rejected.contains(&f) {
                let paths = paths_of(&state, f);
                if allocate_residence(&flows[f], &paths, snapshots, &load, &node, max_frame).is_err() {
                    newly.push(f);
                }
            }
        }
        if newly.is_empty() {
            break;
        }
        for f in newly {
            state.release_all(f);
            rejected.insert(f);
        }
    }

    let load = state.link_load_state();
    let entries = flows
        .iter()
        .enumerate()
        .map(|(f, flow)| {
            if !complete[f] || rejected.contains(&f) {
                return ScheduleEntry::unscheduled(flow.id, lost[f]);
            }
            let paths = paths_of(&state, f);
            let alloc = allocate_residence(flow, &paths, snapshots, &load, &node, max_frame)
                .expect("allocation re-checked above");
            ScheduleEntry {
                flow_id: flow.id,
                scheduled: true,
                paths: paths.into_iter().map(|p| p.nodes).collect(),
                d_target_s: alloc.d_target_s,
                residence: alloc.residence,
                wcd_total_s: alloc.wcd_total_s,
                lost_at: None,
            }
        })
        .collect();
    SchedulerOutput {
        schedule: Schedule { algorithm: algorithm.name().to_string(), num_slots: n_slots, max_frame_bytes: max_frame, node_params: node, entries },
        load,
        layers_per_slot,
    }
}
