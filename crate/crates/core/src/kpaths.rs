//! Loop-free K-shortest paths (Yen) over topology snapshots, weighted by
//! propagation delay.
//!
//! Ties between equal-weight paths are broken by the lexicographic order of
//! their vertex sequences, so results are reproducible across runs.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::fs;
use std::path::Path as FsPath;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::constellation::{distance_km, NodeId, TopologySnapshot, SPEED_OF_LIGHT_M_S};
use crate::traffic::TtFlow;

#[derive(Debug, Error)]
pub enum KPathsError {
    #[error("source and destination are both node {0}")]
    SameEndpoints(NodeId),
    #[error("k must be at least 1")]
    ZeroK,
    #[error("node {0} is not in the snapshot")]
    UnknownNode(NodeId),
    #[error("candidate cache I/O on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("candidate cache format: {0}")]
    Format(#[from] serde_json::Error),
}

/// A simple path given by its vertex sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub nodes: Vec<NodeId>,
    /// Sum of link propagation delays along the path, seconds.
    pub prop_delay_s: f64,
}

impl Path {
    /// Recomputes the weight from `snapshot`; `None` if a link is missing.
    pub fn from_nodes(nodes: Vec<NodeId>, snapshot: &TopologySnapshot) -> Option<Self> {
        let prop = path_weight(&nodes, snapshot)?;
        Some(Self { nodes, prop_delay_s: prop })
    }

    pub fn hop_count(&self) -> usize {
        self.nodes.len().saturating_sub(1)
    }

    pub fn src(&self) -> NodeId {
        self.nodes[0]
    }

    pub fn dst(&self) -> NodeId {
        *self.nodes.last().expect("non-empty path")
    }

    pub fn links(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.nodes.windows(2).map(|w| (w[0], w[1]))
    }

    /// `v_1 .. v_{n-1}`.
    pub fn intermediate_nodes(&self) -> &[NodeId] {
        if self.nodes.len() <= 2 {
            &[]
        } else {
            &self.nodes[1..self.nodes.len() - 1]
        }
    }

    pub fn is_simple(&self) -> bool {
        let set: BTreeSet<_> = self.nodes.iter().collect();
        set.len() == self.nodes.len()
    }

    /// True if every link exists in `snapshot`.
    pub fn is_valid_in(&self, snapshot: &TopologySnapshot) -> bool {
        self.links().all(|(u, v)| snapshot.links.contains_key(&(u, v)))
    }
}

/// Sums link delays in path order; summation order is fixed so the same
/// vertex sequence always yields the same bits.
pub fn path_weight(nodes: &[NodeId], snapshot: &TopologySnapshot) -> Option<f64> {
    let mut w = 0.0;
    for pair in nodes.windows(2) {
        w += snapshot.links.get(&(pair[0], pair[1]))?.prop_delay_s;
    }
    Some(w)
}

/// Compressed adjacency for repeated shortest-path queries.
#[derive(Debug, Clone)]
pub struct Graph {
    offsets: Vec<usize>,
    targets: Vec<NodeId>,
    weights: Vec<f64>,
    /// Lower bound on delay per km of straight-line distance, scaled down
    /// slightly. Zero disables the A* heuristic.
    heuristic_s_per_km: f64,
    positions: Vec<[f64; 3]>,
}

impl Graph {
    pub fn new(snapshot: &TopologySnapshot) -> Self {
        let n = snapshot.num_nodes();
        let mut offsets = vec![0usize; n + 1];
        for &(u, _) in snapshot.links.keys() {
            offsets[u + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        // BTreeMap iteration is sorted by (u, v), so targets come out sorted.
        let mut targets = Vec::with_capacity(snapshot.links.len());
        let mut weights = Vec::with_capacity(snapshot.links.len());
        for (&(_, v), a) in &snapshot.links {
            targets.push(v);
            weights.push(a.prop_delay_s);
        }

        let mut heuristic_s_per_km = 0.0;
        if snapshot.positions_km.len() == n && !snapshot.links.is_empty() {
            let mut ratio = f64::INFINITY;
            for (&(u, v), a) in &snapshot.links {
                let d = distance_km(&snapshot.positions_km[u], &snapshot.positions_km[v]);
                if d > 0.0 {
                    ratio = ratio.min(a.prop_delay_s / d);
                }
            }
            if ratio.is_finite() {
                // consistency must survive rounding
                heuristic_s_per_km = ratio.min(1000.0 / SPEED_OF_LIGHT_M_S) * (1.0 - 1e-9);
            }
        }
        Self { offsets, targets, weights, heuristic_s_per_km, positions: snapshot.positions_km.clone() }
    }

    pub fn num_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    fn edges(&self, u: NodeId) -> std::ops::Range<usize> {
        self.offsets[u]..self.offsets[u + 1]
    }

    fn heuristic(&self, u: NodeId, dst: NodeId) -> f64 {
        if self.heuristic_s_per_km == 0.0 {
            0.0
        } else {
            distance_km(&self.positions[u], &self.positions[dst]) * self.heuristic_s_per_km
        }
    }
}

#[derive(Clone, Copy, PartialEq)]
struct HeapItem {
    key: f64,
    node: NodeId,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on (key, node)
        other.key.total_cmp(&self.key).then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Reusable buffers for shortest-path searches on one graph.
struct Search {
    dist: Vec<f64>,
    prev: Vec<NodeId>,
    stamp: Vec<u32>,
    done: Vec<u32>,
    generation: u32,
    blocked_node: Vec<u32>,
    blocked_edge: Vec<u32>,
    heap: BinaryHeap<HeapItem>,
}

impl Search {
    fn new(graph: &Graph) -> Self {
        let n = graph.num_nodes();
        Self {
            dist: vec![0.0; n],
            prev: vec![usize::MAX; n],
            stamp: vec![0; n],
            done: vec![0; n],
            generation: 0,
            blocked_node: vec![0; n],
            blocked_edge: vec![0; graph.targets.len()],
            heap: BinaryHeap::new(),
        }
    }

    /// Shortest path from `src` to `dst` avoiding nodes/edges whose block
    /// marker equals `block`. Predecessors only change on strict improvement.
    fn shortest(&mut self, g: &Graph, src: NodeId, dst: NodeId, block: u32) -> Option<Vec<NodeId>> {
        self.generation += 1;
        let gen = self.generation;
        self.heap.clear();
        self.dist[src] = 0.0;
        self.prev[src] = usize::MAX;
        self.stamp[src] = gen;
        self.heap.push(HeapItem { key: g.heuristic(src, dst), node: src });
        while let Some(HeapItem { node: u, .. }) = self.heap.pop() {
            if self.done[u] == gen {
                continue;
            }
            self.done[u] = gen;
            if u == dst {
                let mut nodes = vec![dst];
                let mut cur = dst;
                while self.prev[cur] != usize::MAX {
                    cur = self.prev[cur];
                    nodes.push(cur);
                }
                nodes.reverse();
                return Some(nodes);
            }
            let du = self.dist[u];
            for e in g.edges(u) {
                if self.blocked_edge[e] == block {
                    continue;
                }
                let v = g.targets[e];
                if self.blocked_node[v] == block || self.done[v] == gen {
                    continue;
                }
                let nd = du + g.weights[e];
                if self.stamp[v] != gen || nd < self.dist[v] {
                    self.stamp[v] = gen;
                    self.dist[v] = nd;
                    self.prev[v] = u;
                    self.heap.push(HeapItem { key: nd + g.heuristic(v, dst), node: v });
                }
            }
        }
        None
    }
}

/// Candidate ordering: weight, then vertex sequence.
#[derive(Debug, Clone, PartialEq)]
struct Ranked(Path);

impl Eq for Ranked {}

impl Ord for Ranked {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0
            .prop_delay_s
            .total_cmp(&other.0.prop_delay_s)
            .then_with(|| self.0.nodes.cmp(&other.0.nodes))
    }
}

impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Up to `k` simple paths in nondecreasing weight. An empty result means
/// `dst` is unreachable.
pub fn k_shortest_paths(
    snapshot: &TopologySnapshot,
    src: NodeId,
    dst: NodeId,
    k: usize,
) -> Result<Vec<Path>, KPathsError> {
    let graph = Graph::new(snapshot);
    k_shortest_paths_on(&graph, snapshot, src, dst, k)
}

/// Same as [`k_shortest_paths`] with a prebuilt [`Graph`] for `snapshot`.
pub fn k_shortest_paths_on(
    graph: &Graph,
    snapshot: &TopologySnapshot,
    src: NodeId,
    dst: NodeId,
    k: usize,
) -> Result<Vec<Path>, KPathsError> {
    if k == 0 {
        return Err(KPathsError::ZeroK);
    }
    for n in [src, dst] {
        if n >= graph.num_nodes() {
            return Err(KPathsError::UnknownNode(n));
        }
    }
    if src == dst {
        return Err(KPathsError::SameEndpoints(src));
    }
    let mut search = Search::new(graph);
    let weigh = |nodes: Vec<NodeId>| Path::from_nodes(nodes, snapshot).expect("path over snapshot links");

    let first = match search.shortest(graph, src, dst, u32::MAX) {
        Some(nodes) => weigh(nodes),
        None => return Ok(Vec::new()),
    };
    let mut accepted = vec![first];
    let mut pending: BTreeSet<Ranked> = BTreeSet::new();
    let mut block = 0u32;

    while accepted.len() < k {
        let last = accepted.last().expect("non-empty").nodes.clone();
        for i in 0..last.len() - 1 {
            block += 1;
            let spur = last[i];
            let root = &last[..=i];
            for p in &accepted {
                if p.nodes.len() > i + 1 && &p.nodes[..=i] == root {
                    let (u, v) = (p.nodes[i], p.nodes[i + 1]);
                    if let Some(e) = graph.edges(u).find(|&e| graph.targets[e] == v) {
                        search.blocked_edge[e] = block;
                    }
                }
            }
            for &n in &root[..i] {
                search.blocked_node[n] = block;
            }
            if let Some(tail) = search.shortest(graph, spur, dst, block) {
                let mut nodes = root[..i].to_vec();
                nodes.extend(tail);
                let cand = Ranked(weigh(nodes));
                if !accepted.iter().any(|p| p.nodes == cand.0.nodes) {
                    pending.insert(cand);
                }
            }
        }
        match pending.pop_first() {
            Some(Ranked(p)) => accepted.push(p),
            None => break,
        }
    }
    // Shortest-path ties can surface out of lexicographic order.
    accepted.sort_by(|a, b| Ranked(a.clone()).cmp(&Ranked(b.clone())));
    Ok(accepted)
}

/// Candidate paths per flow and slot. `paths[f][slot]` lists up to `k` paths
/// for the flow at position `f` of the flow slice; an empty list means the
/// flow's endpoints are disconnected in that slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub k: usize,
    pub paths: Vec<Vec<Vec<Path>>>,
}

impl CandidateSet {
    pub fn get(&self, flow_pos: usize, slot: usize) -> &[Path] {
        &self.paths[flow_pos][slot]
    }

    pub fn num_slots(&self) -> usize {
        self.paths.first().map_or(0, Vec::len)
    }

    pub fn total_paths(&self) -> usize {
        self.paths.iter().flatten().map(Vec::len).sum()
    }
}

/// Runs [`k_shortest_paths`] for every (flow, slot). Flows sharing an
/// endpoint pair share one search per slot.
pub fn candidate_sets(snapshots: &[TopologySnapshot], flows: &[TtFlow], k: usize) -> CandidateSet {
    candidate_sets_cached(snapshots, flows, k, None)
}

pub fn candidate_sets_cached(
    snapshots: &[TopologySnapshot],
    flows: &[TtFlow],
    k: usize,
    mut cache: Option<&mut CandidateCache>,
) -> CandidateSet {
    let mut paths = vec![Vec::with_capacity(snapshots.len()); flows.len()];
    for snap in snapshots {
        let graph = Graph::new(snap);
        let hash = topology_hash(snap);
        let mut memo: BTreeMap<(NodeId, NodeId), Vec<Path>> = BTreeMap::new();
        for (pos, f) in flows.iter().enumerate() {
            let key = (f.src, f.dst);
            if !memo.contains_key(&key) {
                let cached = cache.as_deref().and_then(|c| c.get(&hash, f.src, f.dst, k).cloned());
                let found = match cached {
                    Some(p) => p,
                    None => {
                        let p = k_shortest_paths_on(&graph, snap, f.src, f.dst, k).unwrap_or_default();
                        if let Some(c) = cache.as_deref_mut() {
                            c.insert(&hash, f.src, f.dst, k, p.clone());
                        }
                        p
                    }
                };
                memo.insert(key, found);
            }
            paths[pos].push(memo[&key].clone());
        }
    }
    CandidateSet { k, paths }
}

/// SHA-256 over the snapshot's node count and directed links (delays and
/// bandwidths bit-exact), hex encoded.
pub fn topology_hash(snapshot: &TopologySnapshot) -> String {
    let mut h = Sha256::new();
    h.update((snapshot.num_nodes() as u64).to_le_bytes());
    for (&(u, v), a) in &snapshot.links {
        h.update((u as u64).to_le_bytes());
        h.update((v as u64).to_le_bytes());
        h.update(a.prop_delay_s.to_bits().to_le_bytes());
        h.update(a.bandwidth_bps.to_bits().to_le_bytes());
    }
    hex::encode(h.finalize())
}

/// On-disk memo of Yen results keyed by (topology hash, src, dst, K).
#[derive(Debug, Default, Clone, Serialize, Deserialize)]
pub struct CandidateCache {
    entries: BTreeMap<String, Vec<Path>>,
}

impl CandidateCache {
    fn key(hash: &str, src: NodeId, dst: NodeId, k: usize) -> String {
        format!("{hash}:{src}:{dst}:{k}")
    }

    pub fn get(&self, hash: &str, src: NodeId, dst: NodeId, k: usize) -> Option<&Vec<Path>> {
        self.entries.get(&Self::key(hash, src, dst, k))
    }

    pub fn insert(&mut self, hash: &str, src: NodeId, dst: NodeId, k: usize, paths: Vec<Path>) {
        self.entries.insert(Self::key(hash, src, dst, k), paths);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn load(path: &FsPath) -> Result<Self, KPathsError> {
        let text = fs::read_to_string(path)
            .map_err(|source| KPathsError::Io { path: path.display().to_string(), source })?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &FsPath) -> Result<(), KPathsError> {
        let text = serde_json::to_string(self)?;
        fs::write(path, text).map_err(|source| KPathsError::Io { path: path.display().to_string(), source })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constellation::LinkAttr;

    fn attr(ms: f64) -> LinkAttr {
        LinkAttr { prop_delay_s: ms * 1e-3, bandwidth_bps: 100e6 }
    }

    fn graph(n: usize, edges: &[(usize, usize, f64)]) -> TopologySnapshot {
        TopologySnapshot::from_edges(0, n, edges.iter().map(|&(u, v, w)| ((u, v), attr(w))))
    }

    /// Every simple path by DFS, sorted by (weight, vertex sequence).
    fn brute_force(s: &TopologySnapshot, src: usize, dst: usize) -> Vec<Path> {
        fn walk(s: &TopologySnapshot, cur: &mut Vec<usize>, dst: usize, out: &mut Vec<Vec<usize>>) {
            let u = *cur.last().unwrap();
            if u == dst {
                out.push(cur.clone());
                return;
            }
            let next: Vec<usize> = s.links.keys().filter(|k| k.0 == u).map(|k| k.1).collect();
            for v in next {
                if !cur.contains(&v) {
                    cur.push(v);
                    walk(s, cur, dst, out);
                    cur.pop();
                }
            }
        }
        let mut all = Vec::new();
        walk(s, &mut vec![src], dst, &mut all);
        let mut paths: Vec<Path> = all.into_iter().map(|n| Path::from_nodes(n, s).unwrap()).collect();
        paths.sort_by(|a, b| Ranked(a.clone()).cmp(&Ranked(b.clone())));
        paths
    }

    #[test]
    fn diamond_two_equal_paths() {
        let s = graph(4, &[(0, 1, 1.0), (0, 2, 1.0), (1, 3, 1.0), (2, 3, 1.0)]);
        let p = k_shortest_paths(&s, 0, 3, 2).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p[0].nodes, vec![0, 1, 3]);
        assert_eq!(p[1].nodes, vec![0, 2, 3]);
        assert!((p[0].prop_delay_s - 2e-3).abs() < 1e-15);
        assert_eq!(p[0].prop_delay_s, p[1].prop_delay_s);
    }

    #[test]
    fn line_graph_has_single_path() {
        let s = graph(3, &[(0, 1, 1.0), (1, 2, 1.0)]);
        assert_eq!(k_shortest_paths(&s, 0, 2, 5).unwrap().len(), 1);
    }

    #[test]
    fn unreachable_is_empty_and_errors() {
        let s = graph(3, &[(0, 1, 1.0)]);
        assert!(k_shortest_paths(&s, 0, 2, 3).unwrap().is_empty());
        assert!(matches!(k_shortest_paths(&s, 1, 1, 3), Err(KPathsError::SameEndpoints(1))));
        assert!(matches!(k_shortest_paths(&s, 0, 1, 0), Err(KPathsError::ZeroK)));
        assert!(matches!(k_shortest_paths(&s, 0, 7, 1), Err(KPathsError::UnknownNode(7))));
    }

    #[test]
    fn five_node_graph_matches_enumeration() {
        let mut edges = Vec::new();
        for &(u, v, w) in &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 3.0), (1, 3, 1.0), (2, 3, 1.0), (2, 4, 2.5), (3, 4, 1.7), (0, 3, 4.2)] {
            edges.push((u, v, w));
            edges.push((v, u, w));
        }
        let s = graph(5, &edges);
        let all = brute_force(&s, 0, 4);
        for k in 1..=all.len() + 2 {
            let got = k_shortest_paths(&s, 0, 4, k).unwrap();
            assert_eq!(got.len(), k.min(all.len()));
            for (g, b) in got.iter().zip(&all) {
                assert_eq!(g.nodes, b.nodes, "k={k}");
            }
        }
    }

    #[test]
    fn candidate_sets_match_single_calls_and_record_gaps() {
        let s0 = graph(4, &[(0, 1, 1.0), (1, 3, 1.0), (0, 2, 2.0), (2, 3, 1.0)]);
        let s1 = graph(4, &[(1, 3, 1.0), (2, 3, 1.0)]);
        let flow = TtFlow { id: 0, period_s: 0.01, frame_bytes: 1500, src: 0, dst: 3, deadline_s: 0.1 };
        let c = candidate_sets(&[s0.clone(), s1], &[flow], 3);
        assert_eq!(c.get(0, 0), k_shortest_paths(&s0, 0, 3, 3).unwrap().as_slice());
        assert!(c.get(0, 1).is_empty());
    }

    #[test]
    fn cache_round_trip() {
        let s = graph(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 5.0)]);
        let flow = TtFlow { id: 0, period_s: 0.01, frame_bytes: 1500, src: 0, dst: 2, deadline_s: 0.1 };
        let mut cache = CandidateCache::default();
        let a = candidate_sets_cached(&[s.clone()], &[flow.clone()], 2, Some(&mut cache));
        assert_eq!(cache.len(), 1);
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("cache.json");
        cache.save(&file).unwrap();
        let mut loaded = CandidateCache::load(&file).unwrap();
        let b = candidate_sets_cached(&[s], &[flow], 2, Some(&mut loaded));
        assert_eq!(a, b);
    }
}
