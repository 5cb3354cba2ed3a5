//! Reference answer for failure-free scenarios by plain graph search.
//!
//! For each command the oracle computes which goal clusters a correct
//! dissemination must reach: with adjacent dissemination, those whose region
//! is connected to the origin's region in the region graph; with tree
//! dissemination, those connected to the origin through tree nodes that have
//! a holder. The simulated answer is the set of `deliver` records per message.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::Serialize;
use vtree_core::hier::{TreeLinks, TreeNode};
use vtree_core::kernel::{Scenario, Strategy};
use vtree_core::topology::Topology;
use vtree_core::trace::{EventName, TraceRecord};
use vtree_core::{ClusterId, MsgId, RegionId};

use crate::error::SimError;

/// Largest topology the oracle accepts.
pub const MAX_ORACLE_CLUSTERS: u32 = 64;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CommandCheck {
    pub msg: MsgId,
    pub expected: BTreeSet<ClusterId>,
    pub executed: BTreeSet<ClusterId>,
    /// Clusters that executed more than once.
    pub duplicated: BTreeSet<ClusterId>,
}

impl CommandCheck {
    pub fn missing(&self) -> Vec<ClusterId> {
        self.expected.difference(&self.executed).copied().collect()
    }

    pub fn unexpected(&self) -> Vec<ClusterId> {
        self.executed.difference(&self.expected).copied().collect()
    }

    pub fn ok(&self) -> bool {
        self.expected == self.executed && self.duplicated.is_empty()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct OracleReport {
    pub commands: Vec<CommandCheck>,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.commands.iter().all(CommandCheck::ok)
    }

    /// Human-readable list of the failing commands.
    pub fn describe_failures(&self) -> String {
        let fmt = |v: &[ClusterId]| {
            v.iter()
                .map(|c| c.0.to_string())
                .collect::<Vec<_>>()
                .join(" ")
        };
        self.commands
            .iter()
            .filter(|c| !c.ok())
            .map(|c| {
                let dup: Vec<_> = c.duplicated.iter().copied().collect();
                format!(
                    "msg {}: missing [{}] unexpected [{}] duplicated [{}]",
                    c.msg,
                    fmt(&c.missing()),
                    fmt(&c.unexpected()),
                    fmt(&dup)
                )
            })
            .collect::<Vec<_>>()
            .join("; ")
    }
}

/// Rejects scenarios the oracle cannot answer.
pub fn check_supported(sc: &Scenario) -> Result<Topology, SimError> {
    let topo = sc
        .validate()
        .map_err(|e| SimError::invalid(e.to_string()))?;
    if topo.num_clusters() > MAX_ORACLE_CLUSTERS {
        return Err(SimError::invalid(format!(
            "topology: oracle-check supports at most {MAX_ORACLE_CLUSTERS} clusters, got {}",
            topo.num_clusters()
        )));
    }
    if !sc.failures.is_empty() {
        return Err(SimError::invalid(
            "failures: oracle-check needs a failure-free scenario",
        ));
    }
    Ok(topo)
}

fn reachable_regions(topo: &Topology, from: RegionId) -> BTreeSet<RegionId> {
    let mut seen = BTreeSet::from([from]);
    let mut queue = VecDeque::from([from]);
    while let Some(r) = queue.pop_front() {
        for &n in topo.region_neighbors(r) {
            if seen.insert(n) {
                queue.push_back(n);
            }
        }
    }
    seen
}

fn reachable_tree_clusters(
    topo: &Topology,
    links: &TreeLinks,
    from: ClusterId,
) -> BTreeSet<ClusterId> {
    let usable = |n: TreeNode| matches!(n, TreeNode::Cluster(_)) || links.holder(topo, n).is_some();
    let start = TreeNode::Cluster(from);
    let mut seen = BTreeSet::from([start]);
    let mut queue = VecDeque::from([start]);
    let mut out = BTreeSet::new();
    while let Some(n) = queue.pop_front() {
        if let TreeNode::Cluster(c) = n {
            out.insert(c);
        }
        let mut next = links.children(topo, n);
        next.extend(links.parent(topo, n));
        for m in next {
            if usable(m) && seen.insert(m) {
                queue.push_back(m);
            }
        }
    }
    out
}

/// Goal clusters each command must reach, keyed by message ID.
pub fn expected_deliveries(sc: &Scenario, topo: &Topology) -> BTreeMap<MsgId, BTreeSet<ClusterId>> {
    let links = TreeLinks::new(topo);
    let mut out = BTreeMap::new();
    for (c, msg) in sc.commands.iter().zip(sc.command_msg_ids()) {
        let goals = topo.goal_clusters_for_scope(c.scope).unwrap_or_default();
        let expected = match sc.strategy {
            Strategy::Adjacent => {
                let regions = reachable_regions(topo, topo.region_of(c.origin));
                goals
                    .into_iter()
                    .filter(|g| regions.contains(&topo.region_of(*g)))
                    .collect()
            }
            Strategy::Hierarchical => {
                let reach = reachable_tree_clusters(topo, &links, c.origin);
                goals.into_iter().filter(|g| reach.contains(g)).collect()
            }
        };
        out.insert(msg, expected);
    }
    out
}

/// Compares a trace against the oracle.
pub fn compare(sc: &Scenario, topo: &Topology, trace: &[TraceRecord]) -> OracleReport {
    let mut executed: BTreeMap<MsgId, (BTreeSet<ClusterId>, BTreeSet<ClusterId>)> = BTreeMap::new();
    for r in trace.iter().filter(|r| r.event == EventName::Deliver) {
        if let (Some(m), Some(c)) = (r.msg, r.cluster) {
            let (seen, dup) = executed.entry(m).or_default();
            if !seen.insert(c) {
                dup.insert(c);
            }
        }
    }
    let commands = expected_deliveries(sc, topo)
        .into_iter()
        .map(|(msg, expected)| {
            let (executed, duplicated) = executed.remove(&msg).unwrap_or_default();
            CommandCheck {
                msg,
                expected,
                executed,
                duplicated,
            }
        })
        .collect();
    OracleReport { commands }
}

/// Runs the scenario (or reads `trace`) and compares against the oracle.
pub fn oracle_check(
    sc: &Scenario,
    trace: Option<&[TraceRecord]>,
) -> Result<OracleReport, SimError> {
    let topo = check_supported(sc)?;
    Ok(match trace {
        Some(t) => compare(sc, &topo, t),
        None => {
            let out = vtree_core::run(sc).map_err(|e| SimError::invalid(e.to_string()))?;
            compare(sc, &topo, &out.trace)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use vtree_core::kernel::Command;
    use vtree_core::topology::{AdjacencySpec, Scope};

    fn split_scenario(strategy: Strategy) -> Scenario {
        let mut sc = Scenario {
            adjacency: AdjacencySpec::Explicit(vec![
                (RegionId(0), RegionId(1)),
                (RegionId(2), RegionId(3)),
            ]),
            strategy,
            commands: vec![Command {
                time: 0.5,
                origin: ClusterId(0),
                scope: Scope::Global,
                targets: vec![],
                payload: vec![],
            }],
            horizon: 50.0,
            ..Scenario::default()
        };
        sc.coordinator.round_period = 20.0;
        sc
    }

    #[test]
    fn split_graph_limits_adjacent_dissemination() {
        let sc = split_scenario(Strategy::Adjacent);
        let topo = sc.validate().unwrap();
        let exp = expected_deliveries(&sc, &topo);
        let cpr = sc.config.clusters_per_region;
        assert_eq!(exp.values().next().unwrap().len() as u32, 2 * cpr);
        let report = oracle_check(&sc, None).unwrap();
        assert!(report.passed(), "{}", report.describe_failures());
    }

    #[test]
    fn tree_ignores_the_region_graph() {
        let sc = split_scenario(Strategy::Hierarchical);
        let topo = sc.validate().unwrap();
        let exp = expected_deliveries(&sc, &topo);
        assert_eq!(
            exp.values().next().unwrap().len() as u32,
            topo.num_clusters()
        );
        assert!(oracle_check(&sc, None).unwrap().passed());
    }

    #[test]
    fn tampered_trace_fails() {
        let sc = split_scenario(Strategy::Adjacent);
        let mut trace = vtree_core::run(&sc).unwrap().trace;
        let i = trace
            .iter()
            .position(|r| r.event == EventName::Deliver)
            .unwrap();
        let dup = trace[i].clone();
        trace.push(dup);
        let report = oracle_check(&sc, Some(&trace)).unwrap();
        assert!(!report.passed());
        assert!(report.describe_failures().contains("duplicated [0]"));
        trace.retain(|r| r.event != EventName::Deliver);
        let report = oracle_check(&sc, Some(&trace)).unwrap();
        assert!(report.describe_failures().contains("missing [0 1"));
    }

    #[test]
    fn rejects_failures_and_large_topologies() {
        let mut sc = split_scenario(Strategy::Adjacent);
        sc.config.regions_per_hub = 20;
        sc.adjacency = AdjacencySpec::default();
        assert!(matches!(
            oracle_check(&sc, None),
            Err(SimError::ScenarioInvalid(_))
        ));
    }
}
