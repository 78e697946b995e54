//! Acceptance criteria, one test each. Every test writes a single
//! `criterion N ...: PASS|FAIL` line to stderr (bypassing output capture)
//! and then asserts the verdict. Tests hold a shared lock so the timed
//! criteria run alone.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::sync::{Mutex, MutexGuard};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crt::constellation::{build_constellation, snapshot_sequence, LinkAttr, ShellParams, TopologySnapshot};
use crt::harness::{
    build_instance, build_snapshots, preset, read_metrics_csv, run_cells, run_experiment, Manifest, SimulationConfig,
    Sweep, SweepParam,
};
use crt::kpaths::candidate_sets;
use crt::oracle::{exact_lex_solve, verify_schedule};
use crt::scheduler::{schedule, Algorithm, SchedulerConfig};
use crt::simulator::{measure_jitter, predict_first_collision, simulate_run, ClockBounds, ClockModel, PacketRecord, SimConfig};
use crt::timing::{transmission_time, NodeParams};
use crt::traffic::TtFlow;

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn verdict(n: usize, name: &str, pass: bool, detail: String) {
    let line = format!("criterion {n:>2} {name}: {} ({detail})\n", if pass { "PASS" } else { "FAIL" });
    let mut err = std::io::stderr().lock();
    let _ = err.write_all(line.as_bytes());
    let _ = err.flush();
    assert!(pass, "criterion {n} {name} failed: {detail}");
}

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.into_iter().collect();
    v.iter().sum::<f64>() / v.len() as f64
}

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

#[test]
fn c01_soundness_envelope() {
    let _g = serial();
    let t0 = Instant::now();
    let mut cfg = preset("iridium-default").unwrap();
    cfg.sweep = None;
    cfg.num_slots = 2;
    // topology sampled a minute apart, replayed as two 1 s slots
    cfg.slot_duration_s = 60.0;
    let runs: Vec<(u64, usize)> = (0..100u64).map(|i| (i, 50 + (i as usize % 8) * 50)).collect();
    // (frames, outside envelope, of which near a slot boundary, verifier violations)
    let results: Vec<(usize, usize, usize, usize)> = runs
        .par_iter()
        .map(|&(seed, n)| {
            let mut c = cfg.clone();
            c.traffic.n_flows = n;
            let (mut snaps, flows) = build_instance(&c, 0, seed).unwrap();
            for s in &mut snaps {
                s.duration_s = 1.0;
            }
            let cands = candidate_sets(&snaps, &flows, c.k);
            let algo = Algorithm::ALL[seed as usize % 4];
            let sched = schedule(algo, &snaps, &flows, &cands, &SchedulerConfig::default()).schedule;
            let bad_sched = verify_schedule(&sched, &snaps, &flows, &c.node_params).len();
            let clocks = ClockModel::random(snaps[0].num_nodes(), &ClockBounds::default(), seed).unwrap();
            let recs = simulate_run(&sched, &snaps, &flows, &clocks, &SimConfig::new(2.0, seed)).unwrap();
            // longest any frame can be in flight
            let reach = sched
                .entries
                .iter()
                .filter(|e| e.scheduled)
                .map(|e| e.d_target_s + e.wcd_total_s.iter().copied().fold(0.0, f64::max))
                .fold(0.0, f64::max);
            let outside: Vec<&PacketRecord> = recs
                .iter()
                .filter(|r| {
                    let e = &sched.entries[r.flow_id];
                    r.e2e_delay_s < e.d_target_s - 1e-9 || r.e2e_delay_s > e.d_target_s + e.wcd_total_s[r.slot] + 1e-9
                })
                .collect();
            let near_boundary = outside
                .iter()
                .filter(|r| (1..snaps.len()).any(|b| r.delivered_s > b as f64 - reach && r.emit_s < b as f64 + reach))
                .count();
            (recs.len(), outside.len(), near_boundary, bad_sched)
        })
        .collect();
    let secs = t0.elapsed().as_secs_f64();
    let frames: usize = results.iter().map(|r| r.0).sum();
    let outside: usize = results.iter().map(|r| r.1).sum();
    let near: usize = results.iter().map(|r| r.2).sum();
    let bad: usize = results.iter().map(|r| r.3).sum();
    verdict(
        1,
        "soundness envelope",
        outside == 0 && bad == 0 && frames > 0 && secs < 300.0,
        format!(
            "{} runs, {frames} frames, {outside} outside envelope ({near} in flight across a slot boundary, {} within a slot), {bad} verifier violations, {secs:.1} s",
            runs.len(),
            outside - near
        ),
    );
}

/// Directed links present in every snapshot, greedily one flow per link.
fn disjoint_one_hop_flows(snaps: &[TopologySnapshot], n: usize) -> Vec<TtFlow> {
    let common: Vec<(usize, usize)> =
        snaps[0].links.keys().copied().filter(|l| snaps.iter().all(|s| s.links.contains_key(l))).collect();
    assert!(common.len() >= n, "only {} persistent links", common.len());
    common
        .into_iter()
        .take(n)
        .enumerate()
        .map(|(id, (src, dst))| TtFlow { id, period_s: 0.01, frame_bytes: 1500, src, dst, deadline_s: 0.1 })
        .collect()
}

#[test]
fn c02_conflict_free_zero_jitter() {
    let _g = serial();
    let horizon = 20.0;
    let model = build_constellation(ShellParams::iridium()).unwrap();
    let fine = snapshot_sequence(&model, 4, 5.0).unwrap();
    let flows = disjoint_one_hop_flows(&fine, 200);
    let cfg = SchedulerConfig { k: 1, ..SchedulerConfig::default() };
    let mut pass = true;
    let mut parts = Vec::new();
    for slot_len in [5.0, 10.0, 20.0] {
        let snaps = snapshot_sequence(&model, (horizon / slot_len) as usize, slot_len).unwrap();
        let cands = candidate_sets(&snaps, &flows, 1);
        let out = schedule(Algorithm::CrtFast, &snaps, &flows, &cands, &cfg);
        let sched = out.schedule;
        let clean = verify_schedule(&sched, &snaps, &flows, &cfg.node_params).is_empty();
        let clocks = ClockModel::random(snaps[0].num_nodes(), &ClockBounds::default(), 7).unwrap();
        let recs = simulate_run(&sched, &snaps, &flows, &clocks, &SimConfig::new(horizon, 7)).unwrap();
        let jitter = measure_jitter(&recs);
        let spread = jitter.values().map(|j| j.spread_s).fold(0.0, f64::max);
        // what the same routes would show without residence padding
        let raw = flows
            .iter()
            .map(|f| {
                let d: Vec<f64> = snaps.iter().map(|s| s.links[&(f.src, f.dst)].prop_delay_s).collect();
                d.iter().copied().fold(f64::MIN, f64::max) - d.iter().copied().fold(f64::MAX, f64::min)
            })
            .fold(0.0, f64::max);
        let ok = clean
            && sched.scheduled_count() == flows.len()
            && out.load.max_overlap() == 1
            && jitter.len() == flows.len()
            && spread <= 1e-9;
        pass &= ok;
        parts.push(format!(
            "{slot_len} s: {} scheduled, max spread {spread:.1e} s vs {:.3} ms unpadded",
            sched.scheduled_count(),
            raw * 1e3
        ));
    }
    verdict(2, "conflict-free zero jitter", pass, parts.join("; "));
}

fn two_flow_topology() -> TopologySnapshot {
    let mut links = Vec::new();
    for (u, v, ms) in [(0, 2, 1.0), (1, 2, 1.5), (2, 3, 2.0)] {
        let a = LinkAttr { prop_delay_s: ms * 1e-3, bandwidth_bps: 100e6 };
        links.push(((u, v), a));
        links.push(((v, u), a));
    }
    TopologySnapshot::from_edges(0, 4, links)
}

#[test]
fn c03_drift_collision_prediction() {
    let _g = serial();
    const T: f64 = 0.01;
    let snaps = [two_flow_topology()];
    let flows: Vec<TtFlow> = (0..2)
        .map(|id| TtFlow { id, period_s: T, frame_bytes: 1500, src: id, dst: 3, deadline_s: 0.05 })
        .collect();
    let cands = candidate_sets(&snaps, &flows, 1);
    let sched = schedule(Algorithm::CrtFast, &snaps, &flows, &cands, &SchedulerConfig::default()).schedule;
    assert_eq!(sched.scheduled_count(), 2);

    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut cases = 0;
    let mut matched = 0;
    let mut worst: f64 = 0.0;
    let mut immediate = 0;
    while cases < 24 {
        let s = rng.random_range(1e-6..=100e-6) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let d_a = rng.random_range(-20e-6..20e-6);
        let mut clocks = ClockModel::ideal(4);
        clocks.drift[0] = d_a;
        clocks.drift[1] = d_a + s;
        clocks.offset_s[0] = rng.random_range(-5e-3..5e-3);
        clocks.offset_s[1] = rng.random_range(-5e-3..5e-3);
        let phases = vec![rng.random_range(0.0..T), rng.random_range(0.0..T)];
        let pred = predict_first_collision(&sched, &snaps, &flows, 0, 1, (2, 3), 0, &clocks, &phases).unwrap();
        // keep cases whose contention falls within a ten-minute replay
        let Some(p) = pred.filter(|&p| p < 600.0) else { continue };
        cases += 1;
        if p < 0.1 {
            immediate += 1;
        }
        let cfg = SimConfig { phases_s: Some(phases), ..SimConfig::new(p + 3.0 * T, 1) };
        let recs = simulate_run(&sched, &snaps, &flows, &clocks, &cfg).unwrap();
        let observed = recs
            .iter()
            .filter(|r| r.queue_wait_s.iter().any(|&w| w > 1e-12))
            .min_by(|a, b| a.release_s[1].total_cmp(&b.release_s[1]))
            .map(|r: &PacketRecord| r.release_s[1]);
        if let Some(o) = observed {
            worst = worst.max((o - p).abs());
            if (o - p).abs() <= T {
                matched += 1;
            }
        }
    }
    verdict(
        3,
        "drift collision prediction",
        matched == cases,
        format!("{matched}/{cases} cases within one period ({immediate} immediate), worst error {:.2} ms", worst * 1e3),
    );
}

/// Random undirected graph with a spanning tree, lowered bandwidth so
/// transmission times and capacity both bind, and a second slot with
/// shifted delays and possibly one link removed.
fn random_instance(rng: &mut ChaCha8Rng) -> (Vec<TopologySnapshot>, Vec<TtFlow>, usize) {
    let n = rng.random_range(4..=12);
    let mut edges: BTreeMap<(usize, usize), (f64, f64)> = BTreeMap::new();
    let mut add = |u: usize, v: usize, rng: &mut ChaCha8Rng| {
        let key = (u.min(v), u.max(v));
        let bw = if rng.random_bool(0.2) { 2.5e6 } else { 10e6 };
        edges.entry(key).or_insert((rng.random_range(1e-3..8e-3), bw));
    };
    for v in 1..n {
        let u = rng.random_range(0..v);
        add(u, v, rng);
    }
    for _ in 0..rng.random_range(0..=n) {
        let (u, v) = (rng.random_range(0..n), rng.random_range(0..n));
        if u != v {
            add(u, v, rng);
        }
    }
    let num_slots = rng.random_range(1..=2);
    let drop = if edges.len() > n - 1 && rng.random_bool(0.5) { Some(rng.random_range(0..edges.len())) } else { None };
    let snaps: Vec<TopologySnapshot> = (0..num_slots)
        .map(|slot| {
            let mut links = Vec::new();
            for (i, (&(u, v), &(d, bw))) in edges.iter().enumerate() {
                if slot == 1 && Some(i) == drop {
                    continue;
                }
                let d = if slot == 0 { d } else { d * rng.random_range(0.8..1.2) };
                let a = LinkAttr { prop_delay_s: d, bandwidth_bps: bw };
                links.push(((u, v), a));
                links.push(((v, u), a));
            }
            TopologySnapshot::from_edges(slot, n, links)
        })
        .collect();
    let k = rng.random_range(1..=3);
    let n_flows = rng.random_range(2..=6);
    let node = NodeParams::default();
    let tx = transmission_time(1500, 10e6).unwrap();
    let mut flows = Vec::new();
    while flows.len() < n_flows {
        let (src, dst) = (rng.random_range(0..n), rng.random_range(0..n));
        if src == dst {
            continue;
        }
        // shortest fixed delay in slot 0 plus room for a few interferers
        let probe = TtFlow { id: flows.len(), period_s: 0.01, frame_bytes: 1500, src, dst, deadline_s: 1.0 };
        let c = candidate_sets(&snaps[..1], std::slice::from_ref(&probe), 1);
        let Some(p) = c.get(0, 0).first() else { continue };
        let fixed = crt::timing::path_fixed_delay(&probe, p, &snaps[0], &node).unwrap();
        let deadline_s = fixed + rng.random_range(0.0..4.0) * tx + rng.random_range(0.0..3e-3);
        flows.push(TtFlow { deadline_s, ..probe });
    }
    (snaps, flows, k)
}

#[test]
fn c04_oracle_equivalence() {
    let _g = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let node = NodeParams::default();
    let instances = 60;
    let mut dirty = Vec::new();
    let mut above_opt = 0;
    let mut strict_above = 0;
    let mut attains = 0;
    for i in 0..instances {
        let (snaps, flows, k) = random_instance(&mut rng);
        let cands = candidate_sets(&snaps, &flows, k);
        let cfg = SchedulerConfig { k, ..SchedulerConfig::default() };
        let opt = exact_lex_solve(&snaps, &flows, &cands, &node).unwrap();
        let mut j1 = BTreeMap::new();
        for algo in Algorithm::ALL {
            let sched = schedule(algo, &snaps, &flows, &cands, &cfg).schedule;
            if !verify_schedule(&sched, &snaps, &flows, &node).is_empty() {
                dirty.push(format!("{algo}#{i}"));
            }
            j1.insert(algo, sched.scheduled_count());
        }
        let crt = j1[&Algorithm::CrtFast];
        above_opt += usize::from(crt > opt.j1_star);
        strict_above += usize::from(j1[&Algorithm::Strict] > crt);
        attains += usize::from(crt == opt.j1_star);
    }
    let share = attains as f64 / instances as f64;
    verdict(
        4,
        "oracle equivalence",
        dirty.is_empty() && above_opt == 0 && strict_above == 0 && share >= 0.6,
        format!(
            "{instances} instances, dirty {dirty:?}, CRT above J1* {above_opt}, Strict above CRT {strict_above}, CRT attains J1* on {:.0}%",
            share * 100.0
        ),
    );
}

#[test]
fn c05_deadline_sweep_trend() {
    let _g = serial();
    let mut cfg = preset("iridium-default").unwrap();
    let grid = [0.032, 0.064, 0.096, 0.128, 0.192, 0.256, 0.320];
    cfg.sweep = Some(Sweep { param: SweepParam::DeadlineS, values: grid.to_vec() });
    cfg.traffic.n_flows = 1000;
    cfg.algorithms = vec![Algorithm::CrtFast];
    cfg.seeds = SEEDS.to_vec();
    let (report, _) = run_cells(&cfg).unwrap();
    assert!(report.failures.is_empty(), "{:?}", report.failures);
    let means: Vec<f64> = grid
        .iter()
        .map(|&d| mean(report.cells.iter().filter(|c| c.row.sweep_param == Some(d)).map(|c| c.row.success_rate)))
        .collect();
    let monotone = means.windows(2).all(|w| w[1] >= w[0] - 0.01);
    let full = means[means.len() - 1] >= 1.0 - 1e-12;
    let shown: Vec<String> = grid.iter().zip(&means).map(|(d, m)| format!("{:.0}ms {:.1}%", d * 1e3, m * 100.0)).collect();
    verdict(5, "deadline sweep trend", monotone && full, shown.join(", "));
}

fn success_by_algo(cells: &[crt::harness::CellMetrics]) -> BTreeMap<String, f64> {
    let mut acc: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for c in cells {
        acc.entry(c.row.algo.clone()).or_default().push(c.row.success_rate);
    }
    acc.into_iter().map(|(a, v)| (a, mean(v))).collect()
}

#[test]
fn c06_load_sweep_ordering() {
    let _g = serial();
    let mut cfg = preset("iridium-default").unwrap();
    let heaviest = cfg.sweep.as_ref().unwrap().values.iter().copied().fold(0.0, f64::max);
    cfg.sweep = None;
    cfg.traffic.n_flows = heaviest as usize;
    cfg.seeds = SEEDS.to_vec();
    let (report, _) = run_cells(&cfg).unwrap();
    assert!(report.failures.is_empty(), "{:?}", report.failures);
    let m = success_by_algo(&report.cells);
    let (crt, lag, strict, spf) = (m["crt_fast"], m["lag"], m["strict"], m["spf"]);
    verdict(
        6,
        "load sweep ordering",
        crt >= lag && lag >= strict && crt >= spf,
        format!(
            "{heaviest} flows: crt_fast {:.1}%, lag {:.1}%, strict {:.1}%, spf {:.1}%",
            crt * 100.0,
            lag * 100.0,
            strict * 100.0,
            spf * 100.0
        ),
    );
}

#[test]
fn c07_overlap_suppression() {
    let _g = serial();
    let mut cfg = preset("iridium-default").unwrap();
    cfg.sweep = None;
    cfg.traffic.n_flows = 400;
    cfg.algorithms = vec![Algorithm::CrtFast, Algorithm::Spf, Algorithm::Lag];
    cfg.seeds = SEEDS.to_vec();
    let (report, _) = run_cells(&cfg).unwrap();
    assert!(report.failures.is_empty(), "{:?}", report.failures);
    let mut good = 0;
    let mut parts = Vec::new();
    for seed in SEEDS {
        let cell = |a: &str| report.cells.iter().find(|c| c.row.seed == seed && c.row.algo == a).unwrap();
        let (c, s, l) = (cell("crt_fast"), cell("spf"), cell("lag"));
        let ok = c.row.max_overlap <= s.row.max_overlap
            && c.row.max_overlap <= l.row.max_overlap
            && c.single_source_fraction >= s.single_source_fraction
            && c.single_source_fraction >= l.single_source_fraction;
        good += usize::from(ok);
        parts.push(format!(
            "seed {seed}: max {}/{}/{} n_e=1 {:.1}/{:.1}/{:.1}%",
            c.row.max_overlap,
            s.row.max_overlap,
            l.row.max_overlap,
            c.single_source_fraction * 100.0,
            s.single_source_fraction * 100.0,
            l.single_source_fraction * 100.0
        ));
    }
    verdict(
        7,
        "overlap suppression",
        good >= 4,
        format!("{good}/5 seeds hold (crt_fast/spf/lag) {}", parts.join("; ")),
    );
}

#[test]
fn c08_path_stability() {
    let _g = serial();
    let cfg = preset("handover-400").unwrap();
    assert_eq!((cfg.num_slots, cfg.traffic.n_flows), (11, 400));
    let (report, _) = run_cells(&cfg).unwrap();
    assert!(report.failures.is_empty(), "{:?}", report.failures);
    let mut resched: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for c in &report.cells {
        resched.entry(c.row.algo.clone()).or_default().push(c.row.resched_mean);
    }
    let m: BTreeMap<String, f64> = resched.into_iter().map(|(a, v)| (a, mean(v))).collect();
    let (crt, lag, spf) = (m["crt_fast"], m["lag"], m["spf"]);
    verdict(
        8,
        "path stability",
        crt <= 0.8 * lag && crt <= 0.6 * spf,
        format!(
            "rescheduled/slot crt_fast {crt:.1}, lag {lag:.1} (ratio {:.2}, need <= 0.8), spf {spf:.1} (ratio {:.2}, need <= 0.6)",
            crt / lag,
            crt / spf
        ),
    );
}

#[test]
fn c09_scalability() {
    let _g = serial();
    let base = preset("scalability").unwrap();
    let mut timings = Vec::new();
    let mut success = BTreeMap::new();
    for n in [1000usize, 2000, 4000, 10000] {
        let mut cfg = base.clone();
        cfg.sweep = None;
        cfg.traffic.n_flows = n;
        let t0 = Instant::now();
        let (report, _) = run_cells(&cfg).unwrap();
        let secs = t0.elapsed().as_secs_f64();
        assert!(report.failures.is_empty(), "{:?}", report.failures);
        success.insert(n, report.cells[0].row.success_rate);
        timings.push((n, secs));
    }
    // least-squares slope of log(time) against log(flows) over 1k, 2k, 4k
    let pts: Vec<(f64, f64)> = timings[..3].iter().map(|&(n, t)| ((n as f64).ln(), t.ln())).collect();
    let (mx, my) = (mean(pts.iter().map(|p| p.0)), mean(pts.iter().map(|p| p.1)));
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    let t1k = timings[0].1;
    let pass = t1k < 600.0 && success[&1000] >= 0.9 && slope <= 2.5;
    let shown: Vec<String> = timings.iter().map(|(n, t)| format!("{n}: {t:.1} s {:.1}%", success[n] * 100.0)).collect();
    verdict(9, "scalability", pass, format!("{}; slope {slope:.2}", shown.join(", ")));
}

fn determinism_config() -> crt::harness::ExperimentConfig {
    let mut cfg = preset("handover-400").unwrap();
    cfg.name = "determinism".into();
    cfg.num_slots = 3;
    cfg.algorithms = Algorithm::ALL.to_vec();
    cfg.seeds = vec![3, 8];
    cfg.sweep = Some(Sweep { param: SweepParam::NFlows, values: vec![60.0, 120.0] });
    cfg.simulation = Some(SimulationConfig { horizon_s: Some(0.5), clock: ClockBounds::default(), export_packets: true });
    cfg.svg = true;
    cfg
}

#[test]
fn c10_determinism() {
    let _g = serial();
    let cfg = determinism_config();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut manifests = Vec::new();
    let mut metrics = Vec::new();
    let mut stages = Vec::new();
    for d in &dirs {
        run_experiment(&cfg, d.path()).unwrap();
        let text = std::fs::read_to_string(d.path().join("manifest.json")).unwrap();
        manifests.push(serde_json::from_str::<Manifest>(&text).unwrap());
        metrics.push(crt::harness::metrics_without_wall_time(&read_metrics_csv(&d.path().join("metrics.csv")).unwrap()));
        // stage outputs built directly: snapshots, flows, candidate paths
        let mut h = BTreeSet::new();
        for &seed in &cfg.seeds {
            let snaps = build_snapshots(&cfg, cfg.slot_duration_s, seed).unwrap();
            let (_, flows) = build_instance(&cfg, 1, seed).unwrap();
            let cands = candidate_sets(&snaps, &flows, cfg.k);
            let mut bytes = Vec::new();
            for s in &snaps {
                bytes.extend(s.to_json().unwrap().into_bytes());
            }
            bytes.extend(serde_json::to_vec(&flows).unwrap());
            for f in 0..flows.len() {
                for s in 0..snaps.len() {
                    bytes.extend(serde_json::to_vec(cands.get(f, s)).unwrap());
                }
            }
            h.insert(crt::harness::sha256_hex(&bytes));
        }
        stages.push(h);
    }
    let (a, b) = (&manifests[0], &manifests[1]);
    let artifacts_equal = a.artifacts == b.artifacts && !a.artifacts.is_empty();
    let mut on_disk_equal = true;
    for rel in a.artifacts.keys() {
        let x = std::fs::read(dirs[0].path().join(rel)).unwrap();
        let y = std::fs::read(dirs[1].path().join(rel)).unwrap();
        on_disk_equal &= x == y && crt::harness::sha256_hex(&x) == a.artifacts[rel];
    }
    let metrics_equal = metrics[0] == metrics[1];
    let stages_equal = stages[0] == stages[1];
    verdict(
        10,
        "determinism",
        artifacts_equal && on_disk_equal && metrics_equal && stages_equal,
        format!(
            "{} hashed artifacts equal: {}, files match hashes: {on_disk_equal}, metrics (no wall time) equal: {metrics_equal}, stage hashes equal: {stages_equal}",
            a.artifacts.len(),
            artifacts_equal
        ),
    );
}
