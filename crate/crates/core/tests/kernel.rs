use std::collections::{BTreeMap, BTreeSet, VecDeque};

use vtree_core::kernel::{
    run, Command, FailureAction, FailureEvent, RunOutput, Scenario, Strategy,
};
use vtree_core::topology::{build_topology, AdjacencySpec, HierarchyConfig, Scope};
use vtree_core::trace::{Component, EventName, LinkClass, TraceRecord};
use vtree_core::{ClusterId, MsgId, RegionId, SimTime, Topology, WorkerId};

fn config(wpc: u32, cpr: u32, rph: u32, hpd: u32, domains: u32) -> HierarchyConfig {
    HierarchyConfig {
        num_layers: 5,
        workers_per_cluster: wpc,
        clusters_per_region: cpr,
        regions_per_hub: rph,
        hubs_per_domain: hpd,
        domains,
        k: 1,
        t_min: 1,
    }
}

fn cmd(time: f64, origin: u32, scope: Scope) -> Command {
    Command {
        time,
        origin: ClusterId(origin),
        scope,
        targets: vec![],
        payload: vec![],
    }
}

fn fail_worker(time: f64, w: u32) -> FailureEvent {
    FailureEvent {
        time,
        action: FailureAction::Fail {
            worker: Some(WorkerId(w)),
            region: None,
        },
    }
}

fn events(out: &RunOutput, c: Component, e: EventName) -> impl Iterator<Item = &TraceRecord> {
    out.trace
        .iter()
        .filter(move |r| r.component == c && r.event == e)
}

/// Goal clusters reachable from the origin's region over the region graph.
fn bfs_regions(topo: &Topology, from: RegionId) -> BTreeSet<RegionId> {
    let mut seen = BTreeSet::from([from]);
    let mut queue = VecDeque::from([from]);
    while let Some(r) = queue.pop_front() {
        for n in topo.region_neighbors(r) {
            if seen.insert(*n) {
                queue.push_back(*n);
            }
        }
    }
    seen
}

fn delivered(out: &RunOutput) -> BTreeMap<MsgId, Vec<ClusterId>> {
    let mut map: BTreeMap<MsgId, Vec<ClusterId>> = BTreeMap::new();
    for r in out.trace.iter().filter(|r| r.event == EventName::Deliver) {
        map.entry(r.msg.unwrap())
            .or_default()
            .push(r.cluster.unwrap());
    }
    map
}

#[test]
fn empty_schedule_traces_only_maintenance() {
    let sc = Scenario {
        horizon: 5.0,
        ..Scenario::default()
    };
    let out = run(&sc).unwrap();
    assert!(!out.trace.is_empty());
    assert!(out
        .trace
        .iter()
        .all(|r| r.event == EventName::MaintenanceRound));
    // 4 regions, rounds 0..=5
    assert_eq!(out.trace.len(), 4 * 6);
    assert!(out.accounting.balanced());
}

#[test]
fn identical_scenarios_identical_traces() {
    let mut sc = Scenario {
        commands: vec![
            cmd(0.5, 0, Scope::Global),
            cmd(2.0, 7, Scope::Hub(vtree_core::HubId(1))),
        ],
        failures: vec![fail_worker(1.2, 5)],
        seed: 42,
        ..Scenario::default()
    };
    for strategy in [Strategy::Adjacent, Strategy::Hierarchical] {
        sc.strategy = strategy;
        let a = run(&sc).unwrap();
        let b = run(&sc).unwrap();
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.report, b.report);
    }
}

#[test]
fn own_cluster_command_delivers_once_at_hop_zero() {
    for strategy in [Strategy::Adjacent, Strategy::Hierarchical] {
        let sc = Scenario {
            strategy,
            commands: vec![cmd(1.0, 3, Scope::Cluster(ClusterId(3)))],
            horizon: 10.0,
            ..Scenario::default()
        };
        let out = run(&sc).unwrap();
        let delivers: Vec<_> = out
            .trace
            .iter()
            .filter(|r| r.event == EventName::Deliver)
            .collect();
        assert_eq!(delivers.len(), 1, "{strategy:?}");
        assert_eq!(delivers[0].hop, Some(0));
        assert_eq!(delivers[0].cluster, Some(ClusterId(3)));
        // Every worker of the cluster executes once under the cluster-level policy.
        let executed: BTreeSet<_> = events(&out, Component::Alg1, EventName::Execute)
            .map(|r| r.worker.unwrap())
            .collect();
        assert_eq!(executed, (12..16).map(WorkerId).collect());
        assert!(out.accounting.balanced());
        assert_eq!(out.accounting.in_flight, 0);
    }
}

#[test]
fn delay_formula_on_three_region_chain() {
    // Regions 0-1-2 in a line; one cluster per region, one region per hub,
    // so neighbouring clusters sit at hierarchy distance 2 or 3.
    let cfg = config(2, 1, 1, 3, 1);
    let topo = build_topology(&cfg, &AdjacencySpec::Grid { columns: Some(3) }, 0).unwrap();
    let mut sc = Scenario {
        config: cfg,
        adjacency: AdjacencySpec::Grid { columns: Some(3) },
        commands: vec![cmd(0.25, 0, Scope::Cluster(ClusterId(2)))],
        horizon: 50.0,
        ..Scenario::default()
    };
    sc.delays.alpha = 1.7;
    sc.delays.beta = 0.0;
    sc.delays.epsilon = 0.0;
    let out = run(&sc).unwrap();
    let receives: BTreeMap<ClusterId, SimTime> = events(&out, Component::Alg2, EventName::Receive)
        .map(|r| (r.cluster.unwrap(), r.time))
        .collect();
    let schedules: Vec<_> = events(&out, Component::Alg2, EventName::Schedule).collect();
    assert!(!schedules.is_empty());
    for s in schedules {
        let c = s.cluster.unwrap();
        let d = topo.hierarchy_distance(c, ClusterId(2)).unwrap();
        assert_eq!(s.aux.dist, Some(d));
        let expected = receives[&c] + SimTime::from_units(1.7 * d as f64);
        assert_eq!(s.aux.fire_at, Some(expected), "cluster {c}");
    }
    assert_eq!(
        delivered(&out)[&MsgId::new(ClusterId(0), 0)],
        vec![ClusterId(2)]
    );
}

#[test]
fn killed_leader_goes_silent_and_is_replaced() {
    let sc = Scenario {
        failures: vec![fail_worker(5.0, 4)],
        commands: vec![cmd(6.5, 0, Scope::Global)],
        horizon: 30.0,
        ..Scenario::default()
    };
    let out = run(&sc).unwrap();
    let w4 = Some(WorkerId(4));
    assert!(out
        .trace
        .iter()
        .filter(|r| r.time >= SimTime::from_units(5.0) && r.component != Component::Kernel)
        .all(|r| r.worker != w4 || r.event == EventName::WorkerFailed));
    let elected: Vec<_> = events(&out, Component::Alg4, EventName::RoleElected).collect();
    assert_eq!(elected.len(), 1);
    assert_eq!(elected[0].worker, Some(WorkerId(5)));
    assert_eq!(elected[0].time, SimTime::from_units(6.0));
    assert!(delivered(&out)
        .values()
        .next()
        .unwrap()
        .contains(&ClusterId(1)));
}

#[test]
fn region_kill_makes_region_dead() {
    let sc = Scenario {
        failures: vec![FailureEvent {
            time: 2.5,
            action: FailureAction::Fail {
                worker: None,
                region: Some(RegionId(1)),
            },
        }],
        horizon: 6.0,
        ..Scenario::default()
    };
    let out = run(&sc).unwrap();
    assert_eq!(out.region_live, vec![true, false, true, true]);
    assert_eq!(out.report.regions_live, 3);
    assert_eq!(out.report.containment_violations, 0);
    let samples = &out.report.recovery;
    assert_eq!(samples.len(), 1);
    assert_eq!(samples[0].region, RegionId(1));
    assert_eq!(samples[0].rounds, None);
}

#[test]
fn jammed_adjacent_links_stop_cross_region_delivery() {
    let sc = Scenario {
        failures: vec![FailureEvent {
            time: 0.0,
            action: FailureAction::Jam {
                link_class: LinkClass::Adjacent,
                drop: 1.0,
            },
        }],
        commands: vec![cmd(1.0, 0, Scope::Global)],
        horizon: 100.0,
        ..Scenario::default()
    };
    let out = run(&sc).unwrap();
    let clusters = delivered(&out).into_values().next().unwrap();
    assert_eq!(clusters.len(), 4);
    assert!(clusters.iter().all(|c| c.0 < 4));
    assert_eq!(out.report.region_crossings, 0);
    assert!(out.accounting.jammed > 0);
    assert!(out.accounting.balanced());
}

#[test]
fn failure_free_delivery_matches_bfs_oracle() {
    for (adj, seed) in [
        (AdjacencySpec::Grid { columns: None }, 1),
        (AdjacencySpec::RandomConnected { extra_edges: 2 }, 7),
        (
            AdjacencySpec::Explicit(vec![(RegionId(0), RegionId(1)), (RegionId(2), RegionId(3))]),
            3,
        ),
    ] {
        for strategy in [Strategy::Adjacent, Strategy::Hierarchical] {
            let sc = Scenario {
                adjacency: adj.clone(),
                strategy,
                seed,
                commands: vec![
                    cmd(0.0, 0, Scope::Global),
                    cmd(0.5, 5, Scope::Region(RegionId(3))),
                    cmd(1.0, 14, Scope::Cluster(ClusterId(2))),
                ],
                horizon: 200.0,
                ..Scenario::default()
            };
            let out = run(&sc).unwrap();
            let topo = build_topology(&sc.config, &adj, seed).unwrap();
            let got = delivered(&out);
            for (i, c) in sc.commands.iter().enumerate() {
                let id = MsgId::new(c.origin, 0);
                let goals = topo.goal_clusters_for_scope(c.scope).unwrap();
                let reach = bfs_regions(&topo, topo.region_of(c.origin));
                let expected: Vec<ClusterId> = goals
                    .into_iter()
                    .filter(|g| {
                        strategy == Strategy::Hierarchical || reach.contains(&topo.region_of(*g))
                    })
                    .collect();
                let mut actual = got.get(&id).cloned().unwrap_or_default();
                actual.sort();
                assert_eq!(actual, expected, "{strategy:?} {adj:?} command {i}");
            }
            assert!(out.accounting.balanced());
            assert_eq!(out.accounting.in_flight, 0);
            assert_eq!(out.accounting.parked, 0);
        }
    }
}

#[test]
fn tree_hops_bounded_by_depth() {
    let cfg = config(2, 2, 4, 2, 2);
    let sc = Scenario {
        config: cfg,
        adjacency: AdjacencySpec::Grid { columns: Some(16) },
        strategy: Strategy::Hierarchical,
        commands: (0..8)
            .map(|i| cmd(i as f64, i * 4, Scope::Global))
            .collect(),
        horizon: 100.0,
        ..Scenario::default()
    };
    let out = run(&sc).unwrap();
    assert!(out.report.max_hop_alg3 <= 8);
    assert_eq!(out.report.max_hop_alg3, 8);
    assert!(out.trace.iter().all(|r| r.aux.flag != Some(true)));
    assert_eq!(out.report.broadcasts, 0);
}

#[test]
fn recovery_case_one_and_two() {
    let cfg = HierarchyConfig {
        workers_per_cluster: 4,
        clusters_per_region: 2,
        k: 5,
        t_min: 3,
        ..HierarchyConfig::default()
    };
    // Initial roster is workers 0..5 of region 0 under a flat metric.
    let two = Scenario {
        config: cfg.clone(),
        failures: vec![fail_worker(1.5, 1), fail_worker(1.5, 3)],
        horizon: 5.0,
        ..Scenario::default()
    };
    let out = run(&two).unwrap();
    assert!(out.report.recovery.is_empty());

    let three = Scenario {
        failures: vec![
            fail_worker(1.5, 1),
            fail_worker(1.5, 2),
            fail_worker(1.5, 3),
        ],
        ..two.clone()
    };
    let out = run(&three).unwrap();
    assert_eq!(out.report.recovery.len(), 1);
    assert_eq!(out.report.recovery[0].rounds, Some(1));
    let round2 = events(&out, Component::Alg4, EventName::MaintenanceRound)
        .find(|r| r.region == Some(RegionId(0)) && r.aux.round == Some(2))
        .unwrap();
    assert_eq!(round2.aux.removed.len(), 3);
    assert_eq!(round2.aux.promoted.len(), 1);
    assert_eq!(round2.aux.alive, Some(3));
}

#[test]
fn single_promotion_takes_one_round_per_missing_coordinator() {
    let cfg = HierarchyConfig {
        workers_per_cluster: 4,
        clusters_per_region: 2,
        k: 5,
        t_min: 4,
        ..HierarchyConfig::default()
    };
    let mut sc = Scenario {
        config: cfg,
        failures: (0..3).map(|w| fail_worker(1.5, w)).collect(),
        horizon: 8.0,
        ..Scenario::default()
    };
    sc.coordinator.single_promotion = true;
    let out = run(&sc).unwrap();
    // 2 remain, T_min 4: two promotions, one per round.
    assert_eq!(out.report.recovery.len(), 1);
    assert_eq!(out.report.recovery[0].rounds, Some(2));
}

#[test]
fn tombstoned_copies_keep_accounting_balanced() {
    let sc = Scenario {
        commands: vec![cmd(0.0, 0, Scope::Global), cmd(0.0, 9, Scope::Global)],
        failures: (0..16)
            .map(|w| fail_worker(0.05 * w as f64 + 0.01, w * 3))
            .collect(),
        horizon: 40.0,
        seed: 9,
        ..Scenario::default()
    };
    for strategy in [Strategy::Adjacent, Strategy::Hierarchical] {
        let out = run(&Scenario {
            strategy,
            ..sc.clone()
        })
        .unwrap();
        let a = out.accounting;
        assert!(a.balanced(), "{a:?}");
        assert!(a.tombstoned + a.cancelled > 0 || strategy == Strategy::Hierarchical);
    }
}

#[test]
fn message_ids_follow_injection_order() {
    let sc = Scenario {
        commands: vec![
            cmd(3.0, 0, Scope::Cluster(ClusterId(1))),
            cmd(1.0, 0, Scope::Region(RegionId(0))),
            cmd(1.0, 0, Scope::Global),
        ],
        horizon: 20.0,
        ..Scenario::default()
    };
    let ids = sc.command_msg_ids();
    let id = |s| MsgId::new(ClusterId(0), s);
    assert_eq!(ids, vec![id(2), id(0), id(1)]);
    let out = run(&sc).unwrap();
    let goals: Vec<_> = events(&out, Component::Kernel, EventName::Command)
        .map(|r| (r.msg, r.aux.goals))
        .collect();
    let expected = [(id(0), 4), (id(1), 16), (id(2), 1)].map(|(m, g)| (Some(m), Some(g)));
    assert_eq!(goals, expected);
}
