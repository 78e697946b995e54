//! Experiment runner: topology, flows, candidates, scheduling, verification,
//! simulation and metrics for every (sweep point, seed, algorithm) cell.
//!
//! Cells sharing a sweep point and seed share one instance (snapshots, flows,
//! candidate paths), so algorithms are compared on identical inputs.
//! Instances run in parallel; results are merged in cell-key order.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path as FsPath, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::constellation::{
    apply_perturbation, build_constellation_with, snapshot_sequence, IslConfig, PerturbationConfig, ShellParams,
    TopologySnapshot,
};
use crate::kpaths::candidate_sets;
use crate::oracle::verify_schedule;
use crate::scheduler::{schedule, Algorithm, Schedule, SchedulerConfig};
use crate::simulator::{measure_jitter, percentile, simulate_run, write_packets_csv, ClockBounds, ClockModel, SimConfig};
use crate::timing::{LinkLoadState, NodeParams};
use crate::traffic::{generate_flows, DeadlinePolicy, TtFlow};

pub const PRESETS: [&str; 4] = ["iridium-default", "starlink-default", "handover-400", "scalability"];

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 1,
            HarnessError::Io { .. } => 3,
        }
    }

    fn io(path: &FsPath, e: impl std::fmt::Display) -> Self {
        HarnessError::Io { path: path.display().to_string(), message: e.to_string() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    NFlows,
    /// Every flow gets this deadline (s) instead of the policy value.
    DeadlineS,
    SlotDurationS,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::NFlows => "n_flows",
            SweepParam::DeadlineS => "deadline_s",
            SweepParam::SlotDurationS => "slot_duration_s",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficConfig {
    pub n_flows: usize,
    #[serde(default = "default_frame_bytes")]
    pub frame_bytes: u32,
    #[serde(default = "default_period")]
    pub period_s: f64,
    pub deadline: DeadlinePolicy,
    /// Uniform deadline overriding the policy for every flow.
    #[serde(default)]
    pub deadline_s: Option<f64>,
}

fn default_frame_bytes() -> u32 {
    1500
}

fn default_period() -> f64 {
    0.01
}

fn default_true() -> bool {
    true
}

fn default_k() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    /// Emission horizon; defaults to the whole slot sequence.
    #[serde(default)]
    pub horizon_s: Option<f64>,
    #[serde(default)]
    pub clock: ClockBounds,
    #[serde(default)]
    pub export_packets: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub shell: ShellParams,
    #[serde(default)]
    pub isl: IslConfig,
    pub num_slots: usize,
    pub slot_duration_s: f64,
    pub traffic: TrafficConfig,
    #[serde(default)]
    pub sweep: Option<Sweep>,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub node_params: NodeParams,
    #[serde(default = "default_true")]
    pub enable_path_continuity: bool,
    pub algorithms: Vec<Algorithm>,
    /// Applied independently to every slot, reseeded per run seed and slot.
    #[serde(default)]
    pub perturbation: Option<PerturbationConfig>,
    #[serde(default)]
    pub simulation: Option<SimulationConfig>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub svg: bool,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.algorithms.is_empty() {
            return bad("at least one algorithm is required".into());
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if self.num_slots == 0 || !(self.slot_duration_s > 0.0) {
            return bad("need at least one slot of positive duration".into());
        }
        self.shell.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        self.traffic.deadline.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        self.node_params.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        if let Some(p) = &self.perturbation {
            p.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        }
        if let Some(s) = &self.sweep {
            if s.values.is_empty() {
                return bad("sweep needs at least one value".into());
            }
            if s.values.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                return bad("sweep values must be positive".into());
            }
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn load(path: &FsPath) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml(&text)
    }

    /// A config file path, or the name of a preset.
    pub fn resolve(arg: &str) -> Result<Self, HarnessError> {
        let p = FsPath::new(arg);
        if p.exists() {
            return Self::load(p);
        }
        preset(arg).ok_or_else(|| {
            HarnessError::Config(format!("`{arg}` is neither a config file nor a preset ({})", PRESETS.join(", ")))
        })
    }

    /// Sweep points as `(value, n_flows, deadline override, slot duration)`.
    fn points(&self) -> Vec<(Option<f64>, usize, Option<f64>, f64)> {
        let base = (None, self.traffic.n_flows, self.traffic.deadline_s, self.slot_duration_s);
        match &self.sweep {
            None => vec![base],
            Some(s) => s
                .values
                .iter()
                .map(|&v| match s.param {
                    SweepParam::NFlows => (Some(v), v.round() as usize, base.2, base.3),
                    SweepParam::DeadlineS => (Some(v), base.1, Some(v), base.3),
                    SweepParam::SlotDurationS => (Some(v), base.1, base.2, v),
                })
                .collect(),
        }
    }
}

fn base_config(name: &str, shell: ShellParams, deadline: DeadlinePolicy) -> ExperimentConfig {
    ExperimentConfig {
        name: name.to_string(),
        shell,
        isl: IslConfig::default(),
        num_slots: 10,
        slot_duration_s: 10.0,
        traffic: TrafficConfig { n_flows: 1000, frame_bytes: 1500, period_s: 0.01, deadline, deadline_s: None },
        sweep: None,
        k: 5,
        node_params: NodeParams::default(),
        enable_path_continuity: true,
        algorithms: Algorithm::ALL.to_vec(),
        perturbation: None,
        simulation: None,
        seeds: (0..5).collect(),
        output_dir: None,
        svg: true,
    }
}

pub fn preset(name: &str) -> Option<ExperimentConfig> {
    let cfg = match name {
        "iridium-default" => ExperimentConfig {
            sweep: Some(Sweep { param: SweepParam::NFlows, values: (1..=10).map(|i| 200.0 * i as f64).collect() }),
            ..base_config(name, ShellParams::iridium(), DeadlinePolicy::iridium())
        },
        "starlink-default" => base_config(name, ShellParams::starlink(), DeadlinePolicy::starlink()),
        "handover-400" => {
            let mut c = base_config(name, ShellParams::iridium(), DeadlinePolicy::iridium());
            c.num_slots = 11;
            c.traffic.n_flows = 400;
            c.algorithms = vec![Algorithm::CrtFast, Algorithm::Lag, Algorithm::Spf];
            c.perturbation = Some(PerturbationConfig {
                link_fail_fraction: 0.03,
                delay_perturb_fraction: 0.15,
                delay_perturb_magnitude: 0.1,
                rng_seed: 0,
            });
            c
        }
        "scalability" => {
            let mut c = base_config(name, ShellParams::starlink(), DeadlinePolicy::starlink());
            c.num_slots = 2;
            c.algorithms = vec![Algorithm::CrtFast];
            c.seeds = vec![0];
            c.sweep = Some(Sweep { param: SweepParam::NFlows, values: vec![1000.0, 2000.0, 4000.0, 10000.0] });
            c
        }
        _ => return None,
    };
    Some(cfg)
}

/// Slot-by-slot snapshots for one run seed, with the configured perturbation.
pub fn build_snapshots(cfg: &ExperimentConfig, slot_duration_s: f64, seed: u64) -> Result<Vec<TopologySnapshot>, HarnessError> {
    let model = build_constellation_with(cfg.shell.clone(), cfg.isl.clone()).map_err(|e| HarnessError::Config(e.to_string()))?;
    let snaps = snapshot_sequence(&model, cfg.num_slots, slot_duration_s).map_err(|e| HarnessError::Config(e.to_string()))?;
    let Some(p) = &cfg.perturbation else { return Ok(snaps) };
    snaps
        .iter()
        .enumerate()
        .map(|(slot, s)| {
            let pc = PerturbationConfig {
                rng_seed: p.rng_seed ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ (slot as u64 + 1).wrapping_mul(0xbf58_476d_1ce4_e5b9),
                ..p.clone()
            };
            apply_perturbation(s, &pc).map_err(|e| HarnessError::Config(e.to_string()))
        })
        .collect()
}

/// Flows of one run seed; a uniform deadline replaces the policy deadline.
pub fn build_flows(
    cfg: &ExperimentConfig,
    snapshot0: &TopologySnapshot,
    n_flows: usize,
    deadline_s: Option<f64>,
    seed: u64,
) -> Result<Vec<TtFlow>, HarnessError> {
    let t = &cfg.traffic;
    let mut flows = generate_flows(n_flows, snapshot0, &t.deadline, t.frame_bytes, t.period_s, seed)
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    if let Some(d) = deadline_s {
        for f in &mut flows {
            f.deadline_s = d;
        }
    }
    Ok(flows)
}

/// Snapshots and flows of sweep point `point` (ignored without a sweep) for
/// `seed`, exactly as a run builds them.
pub fn build_instance(
    cfg: &ExperimentConfig,
    point: usize,
    seed: u64,
) -> Result<(Vec<TopologySnapshot>, Vec<TtFlow>), HarnessError> {
    cfg.validate()?;
    let points = cfg.points();
    let &(_, n_flows, deadline, slot_dur) = points
        .get(if cfg.sweep.is_some() { point } else { 0 })
        .ok_or_else(|| HarnessError::Config(format!("sweep point {point} out of range ({} points)", points.len())))?;
    let snaps = build_snapshots(cfg, slot_dur, seed)?;
    let flows = build_flows(cfg, &snaps[0], n_flows, deadline, seed)?;
    Ok((snaps, flows))
}

/// Scheduled flows whose path changes between `slot - 1` and `slot`, plus
/// flows that became infeasible at `slot`.
pub fn rescheduling_count(schedule: &Schedule, slot: usize) -> Result<usize, HarnessError> {
    if slot == 0 || slot >= schedule.num_slots {
        return Err(HarnessError::Config(format!("slot {slot} outside 1..{}", schedule.num_slots)));
    }
    let changed = schedule.entries.iter().filter(|e| e.scheduled && e.paths[slot] != e.paths[slot - 1]).count();
    let lost = schedule.entries.iter().filter(|e| e.lost_at == Some(slot)).count();
    Ok(changed + lost)
}

/// `(n, fraction of used links with overlap <= n)` over all slots.
pub fn overlap_cdf(load: &LinkLoadState) -> Vec<(usize, f64)> {
    overlap_cdf_from_hist(&overlap_histogram(load))
}

pub fn overlap_histogram(load: &LinkLoadState) -> BTreeMap<usize, usize> {
    let mut hist = BTreeMap::new();
    for (_, n) in load.iter() {
        *hist.entry(n).or_insert(0) += 1;
    }
    hist
}

/// One row of `metrics.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub algo: String,
    pub seed: u64,
    /// Value of the swept parameter, empty without a sweep.
    pub sweep_param: Option<f64>,
    pub n_flows: usize,
    pub success_rate: f64,
    pub max_overlap: usize,
    /// Percentiles over flows of the per-flow delay spread; empty without
    /// simulation.
    pub p50_jitter_s: Option<f64>,
    pub p99_jitter_s: Option<f64>,
    pub resched_mean: f64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    pub row: MetricsRow,
    pub overlap_histogram: BTreeMap<usize, usize>,
    /// Fraction of used links with a single source.
    pub single_source_fraction: f64,
    pub rescheduled_per_slot: Vec<usize>,
    /// `d_target / D` per scheduled flow, by flow id.
    pub normalized_delay: BTreeMap<usize, f64>,
    pub layers_per_slot: Vec<usize>,
    pub delivered_frames: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub cell: String,
    pub violations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub name: String,
    pub sweep_param: Option<String>,
    pub cells: Vec<CellMetrics>,
    pub failures: Vec<CellFailure>,
}

impl MetricsReport {
    pub fn exit_code(&self) -> i32 {
        if self.failures.is_empty() {
            0
        } else {
            2
        }
    }

    pub fn rows(&self) -> Vec<MetricsRow> {
        self.cells.iter().map(|c| c.row.clone()).collect()
    }

    /// Mean success rate per algorithm and sweep value, in cell order.
    pub fn mean_success(&self) -> BTreeMap<(String, u64), (Option<f64>, f64)> {
        let mut acc: BTreeMap<(String, u64), (Option<f64>, f64, usize)> = BTreeMap::new();
        for c in &self.cells {
            let key = (c.row.algo.clone(), c.row.sweep_param.map_or(0, f64::to_bits));
            let e = acc.entry(key).or_insert((c.row.sweep_param, 0.0, 0));
            e.1 += c.row.success_rate;
            e.2 += 1;
        }
        acc.into_iter().map(|(k, (v, s, n))| (k, (v, s / n as f64))).collect()
    }
}

/// Files produced by one cell.
pub struct CellArtifacts {
    pub key: String,
    pub schedule: Schedule,
    pub packets: Option<Vec<crate::simulator::PacketRecord>>,
}

struct Instance {
    point: usize,
    seed: u64,
    value: Option<f64>,
    snapshots: Vec<TopologySnapshot>,
    flows: Vec<TtFlow>,
}

fn cell_key(algo: Algorithm, seed: u64, point: usize, swept: bool) -> String {
    if swept {
        format!("{}_seed{seed}_p{point}", algo.name())
    } else {
        format!("{}_seed{seed}", algo.name())
    }
}

fn run_cell(
    cfg: &ExperimentConfig,
    inst: &Instance,
    cands: &crate::kpaths::CandidateSet,
    algo: Algorithm,
) -> Result<(CellMetrics, CellArtifacts), CellFailure> {
    let key = cell_key(algo, inst.seed, inst.point, cfg.sweep.is_some());
    let scfg = SchedulerConfig {
        k: cfg.k,
        node_params: cfg.node_params,
        enable_path_continuity: cfg.enable_path_continuity,
        ..SchedulerConfig::default()
    };
    let t0 = Instant::now();
    let out = schedule(algo, &inst.snapshots, &inst.flows, cands, &scfg);
    let wall_time_s = t0.elapsed().as_secs_f64();
    let sched = out.schedule;

    let violations = verify_schedule(&sched, &inst.snapshots, &inst.flows, &cfg.node_params);
    if !violations.is_empty() {
        return Err(CellFailure { cell: key, violations: violations.iter().map(ToString::to_string).collect() });
    }

    let load = sched.link_load(&inst.flows);
    let hist = overlap_histogram(&load);
    let used: usize = hist.values().sum();
    let rescheduled_per_slot: Vec<usize> =
        (1..sched.num_slots).map(|t| rescheduling_count(&sched, t).expect("slot in range")).collect();
    let resched_mean = if rescheduled_per_slot.is_empty() {
        0.0
    } else {
        rescheduled_per_slot.iter().sum::<usize>() as f64 / rescheduled_per_slot.len() as f64
    };
    let normalized_delay = sched
        .entries
        .iter()
        .zip(&inst.flows)
        .filter(|(e, _)| e.scheduled)
        .map(|(e, f)| (f.id, e.d_target_s / f.deadline_s))
        .collect();

    let mut p50 = None;
    let mut p99 = None;
    let mut delivered = None;
    let mut packets = None;
    if let Some(sim) = &cfg.simulation {
        let horizon = sim.horizon_s.unwrap_or_else(|| inst.snapshots.iter().map(|s| s.duration_s).sum());
        let nodes = inst.snapshots[0].num_nodes();
        let fail = |m: String| CellFailure { cell: key.clone(), violations: vec![m] };
        let clocks = ClockModel::random(nodes, &sim.clock, inst.seed).map_err(|e| fail(e.to_string()))?;
        let recs = simulate_run(&sched, &inst.snapshots, &inst.flows, &clocks, &SimConfig::new(horizon, inst.seed))
            .map_err(|e| fail(e.to_string()))?;
        let mut spreads: Vec<f64> = measure_jitter(&recs).values().map(|j| j.spread_s).collect();
        spreads.sort_by(f64::total_cmp);
        if !spreads.is_empty() {
            p50 = Some(percentile(&spreads, 50.0));
            p99 = Some(percentile(&spreads, 99.0));
        }
        delivered = Some(recs.len());
        if sim.export_packets {
            packets = Some(recs);
        }
    }

    let metrics = CellMetrics {
        row: MetricsRow {
            algo: algo.name().to_string(),
            seed: inst.seed,
            sweep_param: inst.value,
            n_flows: inst.flows.len(),
            success_rate: sched.success_rate(),
            max_overlap: load.max_overlap(),
            p50_jitter_s: p50,
            p99_jitter_s: p99,
            resched_mean,
            wall_time_s,
        },
        single_source_fraction: if used == 0 { 1.0 } else { hist.get(&1).copied().unwrap_or(0) as f64 / used as f64 },
        overlap_histogram: hist,
        rescheduled_per_slot,
        normalized_delay,
        layers_per_slot: out.layers_per_slot,
        delivered_frames: delivered,
    };
    Ok((metrics, CellArtifacts { key, schedule: sched, packets }))
}

/// Runs every cell and returns metrics plus per-cell artifacts, in
/// (sweep point, seed, algorithm) order. Nothing is written to disk.
pub fn run_cells(cfg: &ExperimentConfig) -> Result<(MetricsReport, Vec<CellArtifacts>), HarnessError> {
    cfg.validate()?;
    let mut jobs = Vec::new();
    for (point, p) in cfg.points().into_iter().enumerate() {
        for &seed in &cfg.seeds {
            jobs.push((point, seed, p));
        }
    }
    let results: Vec<Result<Vec<Result<(CellMetrics, CellArtifacts), CellFailure>>, HarnessError>> = jobs
        .into_par_iter()
        .map(|(point, seed, (value, n_flows, deadline, slot_dur))| {
            let snapshots = build_snapshots(cfg, slot_dur, seed)?;
            let flows = build_flows(cfg, &snapshots[0], n_flows, deadline, seed)?;
            let cands = candidate_sets(&snapshots, &flows, cfg.k);
            let inst = Instance { point, seed, value, snapshots, flows };
            Ok(cfg.algorithms.iter().map(|&a| run_cell(cfg, &inst, &cands, a)).collect())
        })
        .collect();

    let mut report = MetricsReport {
        name: cfg.name.clone(),
        sweep_param: cfg.sweep.as_ref().map(|s| s.param.name().to_string()),
        cells: Vec::new(),
        failures: Vec::new(),
    };
    let mut artifacts = Vec::new();
    for r in results {
        for cell in r? {
            match cell {
                Ok((m, a)) => {
                    report.cells.push(m);
                    artifacts.push(a);
                }
                Err(f) => report.failures.push(f),
            }
        }
    }
    Ok((report, artifacts))
}

pub fn write_metrics_csv(rows: &[MetricsRow], path: &FsPath) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| HarnessError::io(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| HarnessError::io(path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn read_metrics_csv(path: &FsPath) -> Result<Vec<MetricsRow>, HarnessError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| HarnessError::io(path, e))?;
    r.deserialize().collect::<Result<_, _>>().map_err(|e| HarnessError::io(path, e))
}

pub fn write_report_json(report: &MetricsReport, path: &FsPath) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(report).map_err(|e| HarnessError::io(path, e))?;
    fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

pub fn read_report_json(path: &FsPath) -> Result<MetricsReport, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::io(path, e))
}

/// `metrics.csv` content with the wall-time column blanked, for comparing
/// runs.
pub fn metrics_without_wall_time(rows: &[MetricsRow]) -> Vec<MetricsRow> {
    rows.iter().map(|r| MetricsRow { wall_time_s: 0.0, ..r.clone() }).collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub crate_version: String,
    pub seeds: Vec<u64>,
    pub config: ExperimentConfig,
    /// sha256 of every artifact except `metrics.csv`, by relative path.
    pub artifacts: BTreeMap<String, String>,
    pub failures: Vec<CellFailure>,
}

/// Runs the experiment and writes `metrics.csv`, `report.json`,
/// `overlap_cdf.csv`, `schedules/*.json`, optional `packets_*.csv` and SVG
/// charts, and `manifest.json` into `out`.
pub fn run_experiment(cfg: &ExperimentConfig, out: &FsPath) -> Result<MetricsReport, HarnessError> {
    let (report, artifacts) = run_cells(cfg)?;
    let sched_dir = out.join("schedules");
    fs::create_dir_all(&sched_dir).map_err(|e| HarnessError::io(&sched_dir, e))?;
    let mut hashes = BTreeMap::new();
    let mut record = |rel: String, bytes: &[u8]| -> Result<(), HarnessError> {
        let p = out.join(&rel);
        fs::write(&p, bytes).map_err(|e| HarnessError::io(&p, e))?;
        hashes.insert(rel, sha256_hex(bytes));
        Ok(())
    };
    for a in &artifacts {
        let json = a.schedule.to_json().map_err(|e| HarnessError::io(&sched_dir, e))?;
        record(format!("schedules/{}.json", a.key), json.as_bytes())?;
        if let Some(p) = &a.packets {
            let path = out.join(format!("packets_{}.csv", a.key));
            write_packets_csv(p, &path).map_err(|e| HarnessError::io(&path, e))?;
            let bytes = fs::read(&path).map_err(|e| HarnessError::io(&path, e))?;
            record(format!("packets_{}.csv", a.key), &bytes)?;
        }
    }

    let mut cdf = String::from("algo,seed,sweep_param,n,cumulative_fraction\n");
    for c in &report.cells {
        let v = c.row.sweep_param.map(|v| v.to_string()).unwrap_or_default();
        for (n, frac) in overlap_cdf_from_hist(&c.overlap_histogram) {
            let _ = writeln!(cdf, "{},{},{},{},{}", c.row.algo, c.row.seed, v, n, frac);
        }
    }
    record("overlap_cdf.csv".into(), cdf.as_bytes())?;
    let report_json = serde_json::to_string_pretty(&MetricsReport {
        cells: report
            .cells
            .iter()
            .map(|c| CellMetrics { row: MetricsRow { wall_time_s: 0.0, ..c.row.clone() }, ..c.clone() })
            .collect(),
        ..report.clone()
    })
    .map_err(|e| HarnessError::io(out, e))?;
    record("report.json".into(), report_json.as_bytes())?;
    if cfg.svg {
        record("overlap_cdf.svg".into(), overlap_svg(&report).as_bytes())?;
        if cfg.sweep.is_some() {
            record("success_rate.svg".into(), success_svg(&report).as_bytes())?;
        }
    }
    write_metrics_csv(&report.rows(), &out.join("metrics.csv"))?;

    let manifest = Manifest {
        name: cfg.name.clone(),
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        seeds: cfg.seeds.clone(),
        config: cfg.clone(),
        artifacts: hashes,
        failures: report.failures.clone(),
    };
    let mpath = out.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| HarnessError::io(&mpath, e))?;
    fs::write(&mpath, text).map_err(|e| HarnessError::io(&mpath, e))?;
    Ok(report)
}

fn overlap_cdf_from_hist(hist: &BTreeMap<usize, usize>) -> Vec<(usize, f64)> {
    let total: usize = hist.values().sum();
    let mut acc = 0;
    hist.iter()
        .map(|(&n, &c)| {
            acc += c;
            (n, acc as f64 / total as f64)
        })
        .collect()
}

const SVG_W: f64 = 640.0;
const SVG_H: f64 = 400.0;
const MARGIN: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Minimal line chart; each series is drawn as a polyline over its points.
pub fn line_chart_svg(title: &str, x_label: &str, y_label: &str, series: &[(String, Vec<(f64, f64)>)], step: bool) -> String {
    let pts = series.iter().flat_map(|(_, p)| p.iter().copied());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64, f64::NEG_INFINITY);
    for (x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y1) = (0.0, 1.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (SVG_W - 2.0 * MARGIN);
    let sy = |y: f64| SVG_H - MARGIN - (y - y0) / (y1 - y0) * (SVG_H - 2.0 * MARGIN);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_W}" height="{SVG_H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{title}</text>"#, SVG_W / 2.0);
    let (bx, by) = (MARGIN, SVG_H - MARGIN);
    let _ = writeln!(s, r#"<line x1="{bx}" y1="{by}" x2="{}" y2="{by}" stroke="black"/>"#, SVG_W - MARGIN);
    let _ = writeln!(s, r#"<line x1="{bx}" y1="{by}" x2="{bx}" y2="{MARGIN}" stroke="black"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{x_label}</text>"#, SVG_W / 2.0, SVG_H - 12.0);
    let _ = writeln!(s, r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{y_label}</text>"#, SVG_H / 2.0, SVG_H / 2.0);
    for (v, anchor, x, y) in [(x0, "start", sx(x0), by + 15.0), (x1, "end", sx(x1), by + 15.0)] {
        let _ = writeln!(s, r#"<text x="{x}" y="{y}" text-anchor="{anchor}">{v:.3}</text>"#);
    }
    for v in [y0, y1] {
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{v:.3}</text>"#, bx - 4.0, sy(v) + 4.0);
    }
    for (i, (label, p)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut d = String::new();
        let mut prev: Option<(f64, f64)> = None;
        for &(x, y) in p {
            if let (true, Some((_, py))) = (step, prev) {
                let _ = write!(d, "{:.2},{:.2} ", sx(x), sy(py));
            }
            let _ = write!(d, "{:.2},{:.2} ", sx(x), sy(y));
            prev = Some((x, y));
        }
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, d.trim_end());
        let ly = MARGIN + 16.0 * i as f64;
        let _ = writeln!(s, r#"<text x="{}" y="{ly}" fill="{color}">{label}</text>"#, SVG_W - MARGIN - 100.0);
    }
    s.push_str("</svg>\n");
    s
}

fn overlap_svg(report: &MetricsReport) -> String {
    // overlap histograms pooled over seeds and sweep points, per algorithm
    let mut pooled: BTreeMap<&str, BTreeMap<usize, usize>> = BTreeMap::new();
    for c in &report.cells {
        let h = pooled.entry(&c.row.algo).or_default();
        for (&n, &k) in &c.overlap_histogram {
            *h.entry(n).or_insert(0) += k;
        }
    }
    let series: Vec<(String, Vec<(f64, f64)>)> = pooled
        .into_iter()
        .map(|(a, h)| (a.to_string(), overlap_cdf_from_hist(&h).into_iter().map(|(n, f)| (n as f64, f)).collect()))
        .collect();
    line_chart_svg("Link overlap CDF", "overlap degree", "fraction of used links", &series, true)
}

fn success_svg(report: &MetricsReport) -> String {
    let mut by_algo: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for ((algo, _), (v, mean)) in report.mean_success() {
        by_algo.entry(algo).or_default().push((v.unwrap_or(0.0), mean));
    }
    let series: Vec<(String, Vec<(f64, f64)>)> = by_algo
        .into_iter()
        .map(|(a, mut p)| {
            p.sort_by(|x, y| x.0.total_cmp(&y.0));
            (a, p)
        })
        .collect();
    let x = report.sweep_param.as_deref().unwrap_or("sweep value");
    line_chart_svg("Mean success rate", x, "success rate", &series, false)
}
