//! Cross-module properties on random small networks and on the Iridium shell.

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crt::constellation::{build_constellation, snapshot_sequence, LinkAttr, ShellParams, TopologySnapshot};
use crt::harness::{preset, read_metrics_csv, run_experiment, Manifest, SimulationConfig};
use crt::kpaths::{candidate_sets, k_shortest_paths};
use crt::oracle::{exact_lex_solve, verify_schedule};
use crt::scheduler::{schedule, Algorithm, SchedulerConfig};
use crt::simulator::{simulate_run, ClockBounds, ClockModel, SimConfig};
use crt::timing::{path_fixed_delay, NodeParams};
use crt::traffic::TtFlow;

struct Instance {
    snaps: Vec<TopologySnapshot>,
    flows: Vec<TtFlow>,
    k: usize,
}

fn instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(4..=10);
    let mut edges: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for v in 1..n {
        edges.insert((rng.random_range(0..v), v), rng.random_range(1e-3..6e-3));
    }
    for _ in 0..n {
        let (u, v) = (rng.random_range(0..n), rng.random_range(0..n));
        if u != v {
            edges.entry((u.min(v), u.max(v))).or_insert(rng.random_range(1e-3..6e-3));
        }
    }
    let num_slots = rng.random_range(1..=2);
    let snaps: Vec<TopologySnapshot> = (0..num_slots)
        .map(|slot| {
            let mut links = Vec::new();
            for (&(u, v), &d) in &edges {
                let d = if slot == 0 { d } else { d * rng.random_range(0.85..1.15) };
                let a = LinkAttr { prop_delay_s: d, bandwidth_bps: 10e6 };
                links.push(((u, v), a));
                links.push(((v, u), a));
            }
            TopologySnapshot::from_edges(slot, n, links)
        })
        .collect();
    let node = NodeParams::default();
    let n_flows = rng.random_range(2..=5);
    let mut flows = Vec::new();
    while flows.len() < n_flows {
        let (src, dst) = (rng.random_range(0..n), rng.random_range(0..n));
        if src == dst {
            continue;
        }
        let probe = TtFlow { id: flows.len(), period_s: 0.01, frame_bytes: 1500, src, dst, deadline_s: 1.0 };
        let c = candidate_sets(&snaps[..1], std::slice::from_ref(&probe), 1);
        let fixed = path_fixed_delay(&probe, &c.get(0, 0)[0], &snaps[0], &node).unwrap();
        flows.push(TtFlow { deadline_s: fixed + rng.random_range(0.0..8e-3), ..probe });
    }
    Instance { snaps, flows, k: rng.random_range(1..=3) }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn schedulers_are_sound_and_ordered(seed in any::<u64>()) {
        let inst = instance(seed);
        let cands = candidate_sets(&inst.snaps, &inst.flows, inst.k);
        let cfg = SchedulerConfig { k: inst.k, ..SchedulerConfig::default() };
        let mut j1 = BTreeMap::new();
        for algo in Algorithm::ALL {
            let out = schedule(algo, &inst.snaps, &inst.flows, &cands, &cfg);
            let v = verify_schedule(&out.schedule, &inst.snaps, &inst.flows, &cfg.node_params);
            prop_assert!(v.is_empty(), "{algo}: {v:?}");
            if algo == Algorithm::Strict {
                prop_assert!(out.load.max_overlap() <= 1);
            }
            j1.insert(algo, out.schedule.scheduled_count());
        }
        prop_assert!(j1[&Algorithm::CrtFast] >= j1[&Algorithm::Strict], "{j1:?}");
        let opt = exact_lex_solve(&inst.snaps, &inst.flows, &cands, &cfg.node_params).unwrap();
        for (algo, &n) in &j1 {
            prop_assert!(n <= opt.j1_star, "{algo} {n} > {}", opt.j1_star);
        }
    }

    #[test]
    fn ideal_clock_replay_stays_in_envelope(seed in any::<u64>()) {
        let inst = instance(seed);
        let cands = candidate_sets(&inst.snaps, &inst.flows, inst.k);
        let cfg = SchedulerConfig { k: inst.k, ..SchedulerConfig::default() };
        let sched = schedule(Algorithm::CrtFast, &inst.snaps, &inst.flows, &cands, &cfg).schedule;
        let clocks = ClockModel::ideal(inst.snaps[0].num_nodes());
        // half a slot: every frame belongs to slot 0
        let recs = simulate_run(&sched, &inst.snaps, &inst.flows, &clocks, &SimConfig::new(0.5, seed)).unwrap();
        for r in &recs {
            let e = &sched.entries[r.flow_id];
            prop_assert!(r.e2e_delay_s >= e.d_target_s - 1e-12);
            prop_assert!(r.e2e_delay_s <= e.d_target_s + e.wcd_total_s[0] + 1e-12, "flow {} {:?}", r.flow_id, r);
        }
    }
}

#[test]
fn iridium_candidates_are_simple_and_sorted() {
    let model = build_constellation(ShellParams::iridium()).unwrap();
    let snaps = snapshot_sequence(&model, 2, 60.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for s in &snaps {
        for _ in 0..40 {
            let (src, dst) = (rng.random_range(0..66), rng.random_range(0..66));
            if src == dst {
                continue;
            }
            let paths = k_shortest_paths(s, src, dst, 5).unwrap();
            assert_eq!(paths.len(), 5, "{src}->{dst}");
            let distinct: BTreeSet<_> = paths.iter().map(|p| p.nodes.clone()).collect();
            assert_eq!(distinct.len(), paths.len());
            for w in paths.windows(2) {
                assert!(w[0].prop_delay_s <= w[1].prop_delay_s + 1e-15);
            }
            for p in &paths {
                assert!(p.is_simple() && p.is_valid_in(s));
                assert_eq!((p.src(), p.dst()), (src, dst));
            }
        }
    }
}

#[test]
fn small_experiment_end_to_end() {
    let mut cfg = preset("iridium-default").unwrap();
    cfg.num_slots = 2;
    cfg.traffic.n_flows = 40;
    cfg.seeds = vec![4];
    cfg.algorithms = Algorithm::ALL.to_vec();
    cfg.sweep = None;
    cfg.simulation = Some(SimulationConfig { horizon_s: Some(0.2), clock: ClockBounds::default(), export_packets: true });
    let dir = tempfile::tempdir().unwrap();
    let report = run_experiment(&cfg, dir.path()).unwrap();
    assert_eq!(report.exit_code(), 0, "{:?}", report.failures);
    assert_eq!(report.cells.len(), 4);
    let rows = read_metrics_csv(&dir.path().join("metrics.csv")).unwrap();
    assert_eq!(rows.len(), 4);
    for r in &rows {
        assert!((0.0..=1.0).contains(&r.success_rate));
    }
    let manifest: Manifest =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    for rel in manifest.artifacts.keys() {
        assert!(dir.path().join(rel).is_file(), "{rel}");
    }
}
