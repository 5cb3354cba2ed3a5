//! Run inputs and their validation.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adjacent::DelayParams;
use crate::hier::RoutingMode;
use crate::ids::{ClusterId, MsgId, RegionId, WorkerId};
use crate::time::SimTime;
use crate::topology::{AdjacencySpec, HierarchyConfig, Scope, Topology, TopologyError};
use crate::trace::LinkClass;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScenarioError {
    #[error("{field}: {reason}")]
    Invalid { field: String, reason: String },
}

impl ScenarioError {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ScenarioError::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn field(&self) -> &str {
        match self {
            ScenarioError::Invalid { field, .. } => field,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[default]
    Adjacent,
    Hierarchical,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoutingParams {
    pub mode: RoutingMode,
    /// Retries of a parked copy before it counts as a delivery failure.
    pub max_retries: u32,
}

impl Default for RoutingParams {
    fn default() -> Self {
        Self {
            mode: RoutingMode::LcaPruned,
            max_retries: 3,
        }
    }
}

/// Per-class transmission latency in time units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkLatencies {
    pub intra_cluster: f64,
    pub intra_region: f64,
    pub adjacent: f64,
    /// Tree edge latency by the upper endpoint's level minus one (cluster to
    /// region is entry 0). The last entry applies to all higher edges.
    pub tree: Vec<f64>,
}

impl Default for LinkLatencies {
    fn default() -> Self {
        Self {
            intra_cluster: 0.1,
            intra_region: 0.2,
            adjacent: 0.5,
            tree: vec![1.0],
        }
    }
}

impl LinkLatencies {
    pub fn of(&self, class: LinkClass) -> f64 {
        match class {
            LinkClass::IntraCluster => self.intra_cluster,
            LinkClass::IntraRegion => self.intra_region,
            LinkClass::Adjacent => self.adjacent,
            LinkClass::Tree => self.tree_edge(1),
        }
    }

    /// Latency of a tree edge whose upper endpoint sits at `upper_level`.
    pub fn tree_edge(&self, upper_level: u8) -> f64 {
        let i = (upper_level.max(1) - 1) as usize;
        self.tree
            .get(i)
            .or(self.tree.last())
            .copied()
            .unwrap_or(1.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoordinatorParams {
    pub round_period: f64,
    /// Refill to `K` instead of `T_min` when re-selecting.
    pub eager_refill: bool,
    /// At most one promotion per region per round.
    pub single_promotion: bool,
}

impl Default for CoordinatorParams {
    fn default() -> Self {
        Self {
            round_period: 1.0,
            eager_refill: false,
            single_promotion: false,
        }
    }
}

/// A scheduled disturbance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case", deny_unknown_fields)]
pub enum FailureAction {
    /// Crash one worker or every worker of a region.
    Fail {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        worker: Option<WorkerId>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        region: Option<RegionId>,
    },
    /// Bring a worker (or every worker of a region) back without roles.
    Recover {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        worker: Option<WorkerId>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        region: Option<RegionId>,
    },
    /// Drop each transmission on `link_class` with probability `drop`.
    Jam {
        link_class: LinkClass,
        drop: f64,
    },
    Unjam {
        link_class: LinkClass,
    },
    LinkDown {
        regions: [RegionId; 2],
    },
    LinkUp {
        regions: [RegionId; 2],
    },
    SetEnergy {
        worker: WorkerId,
        value: f64,
    },
}

// `deny_unknown_fields` cannot be combined with `flatten`; unknown keys are
// rejected by `FailureAction` instead.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailureEvent {
    pub time: f64,
    #[serde(flatten)]
    pub action: FailureAction,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Command {
    pub time: f64,
    pub origin: ClusterId,
    pub scope: Scope,
    #[serde(default)]
    pub targets: Vec<WorkerId>,
    #[serde(default)]
    pub payload: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub config: HierarchyConfig,
    pub adjacency: AdjacencySpec,
    pub delays: DelayParams,
    pub strategy: Strategy,
    pub routing: RoutingParams,
    pub latencies: LinkLatencies,
    pub coordinator: CoordinatorParams,
    pub failures: Vec<FailureEvent>,
    pub commands: Vec<Command>,
    pub seed: u64,
    pub horizon: f64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            config: HierarchyConfig::default(),
            adjacency: AdjacencySpec::default(),
            delays: DelayParams::default(),
            strategy: Strategy::default(),
            routing: RoutingParams::default(),
            latencies: LinkLatencies::default(),
            coordinator: CoordinatorParams::default(),
            failures: Vec::new(),
            commands: Vec::new(),
            seed: 0,
            horizon: 100.0,
        }
    }
}

fn non_negative(field: &str, v: f64) -> Result<(), ScenarioError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(ScenarioError::invalid(
            field,
            "must be finite and non-negative",
        ))
    }
}

impl Scenario {
    /// Message ID each command receives, indexed like `commands`. Origins
    /// number their commands in injection order: by time, then by position in
    /// the list.
    pub fn command_msg_ids(&self) -> Vec<MsgId> {
        let mut order: Vec<usize> = (0..self.commands.len()).collect();
        order.sort_by_key(|&i| (SimTime::from_units(self.commands[i].time), i));
        let mut next: BTreeMap<ClusterId, u32> = BTreeMap::new();
        let mut ids = vec![MsgId::new(ClusterId(0), 0); self.commands.len()];
        for i in order {
            let origin = self.commands[i].origin;
            let seq = next.entry(origin).or_insert(0);
            ids[i] = MsgId::new(origin, *seq);
            *seq += 1;
        }
        ids
    }

    /// Builds the topology and checks every field; returns the topology on
    /// success so the caller does not build it twice.
    pub fn validate(&self) -> Result<Topology, ScenarioError> {
        let topo = crate::topology::build_topology(&self.config, &self.adjacency, self.seed)
            .map_err(|e| match e {
                TopologyError::InvalidConfig { field, reason } => {
                    ScenarioError::invalid(format!("topology.{field}"), reason)
                }
                other => ScenarioError::invalid("topology.adjacency", other.to_string()),
            })?;
        if let Some(f) = self.delays.invalid_field() {
            return Err(ScenarioError::invalid(
                format!("delays.{f}"),
                "must be finite and non-negative",
            ));
        }
        non_negative("latencies.intra_cluster", self.latencies.intra_cluster)?;
        non_negative("latencies.intra_region", self.latencies.intra_region)?;
        non_negative("latencies.adjacent", self.latencies.adjacent)?;
        if self.latencies.tree.is_empty() {
            return Err(ScenarioError::invalid(
                "latencies.tree",
                "must not be empty",
            ));
        }
        for (i, v) in self.latencies.tree.iter().enumerate() {
            non_negative(&format!("latencies.tree[{i}]"), *v)?;
        }
        non_negative("horizon", self.horizon)?;
        let period = self.coordinator.round_period;
        if !(period.is_finite() && period > 0.0) {
            return Err(ScenarioError::invalid(
                "coordinator.round_period",
                "must be finite and positive",
            ));
        }
        let in_horizon = |field: &str, t: f64| {
            if t.is_finite() && t >= 0.0 && t < self.horizon {
                Ok(())
            } else {
                Err(ScenarioError::invalid(field, "must lie in [0, horizon)"))
            }
        };
        for (i, f) in self.failures.iter().enumerate() {
            let at = |name: &str| format!("failures[{i}].{name}");
            in_horizon(&at("time"), f.time)?;
            let worker_ok = |w: WorkerId| topo.has_worker(w);
            match &f.action {
                FailureAction::Fail { worker, region }
                | FailureAction::Recover { worker, region } => match (worker, region) {
                    (Some(w), None) if !worker_ok(*w) => {
                        return Err(ScenarioError::invalid(at("worker"), "unknown worker"))
                    }
                    (None, Some(r)) if !topo.has_region(*r) => {
                        return Err(ScenarioError::invalid(at("region"), "unknown region"))
                    }
                    (Some(_), None) | (None, Some(_)) => {}
                    _ => {
                        return Err(ScenarioError::invalid(
                            at("action"),
                            "needs exactly one of worker or region",
                        ))
                    }
                },
                FailureAction::Jam { drop, .. } => {
                    if !(0.0..=1.0).contains(drop) {
                        return Err(ScenarioError::invalid(at("drop"), "must lie in [0, 1]"));
                    }
                }
                FailureAction::Unjam { .. } => {}
                FailureAction::LinkDown { regions } | FailureAction::LinkUp { regions } => {
                    let [a, b] = *regions;
                    if !topo.has_region(a) || !topo.has_region(b) || a == b {
                        return Err(ScenarioError::invalid(
                            at("regions"),
                            "needs two distinct known regions",
                        ));
                    }
                }
                FailureAction::SetEnergy { worker, value } => {
                    if !worker_ok(*worker) {
                        return Err(ScenarioError::invalid(at("worker"), "unknown worker"));
                    }
                    if !(0.0..=1.0).contains(value) {
                        return Err(ScenarioError::invalid(at("value"), "must lie in [0, 1]"));
                    }
                }
            }
        }
        for (i, c) in self.commands.iter().enumerate() {
            let at = |name: &str| format!("commands[{i}].{name}");
            in_horizon(&at("time"), c.time)?;
            if !topo.has_cluster(c.origin) {
                return Err(ScenarioError::invalid(at("origin"), "unknown cluster"));
            }
            let goals = topo
                .goal_clusters_for_scope(c.scope)
                .map_err(|_| ScenarioError::invalid(at("scope"), "unknown scope"))?;
            for w in &c.targets {
                if !topo.has_worker(*w) || goals.binary_search(&topo.cluster_of(*w)).is_err() {
                    return Err(ScenarioError::invalid(
                        at("targets"),
                        format!("worker {w} is not inside the command scope"),
                    ));
                }
            }
        }
        Ok(topo)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid() {
        assert!(Scenario::default().validate().is_ok());
    }

    #[test]
    fn errors_name_the_field() {
        let mut s = Scenario::default();
        s.config.t_min = 9;
        assert_eq!(s.validate().unwrap_err().field(), "topology.T_min");

        let mut s = Scenario::default();
        s.delays.beta = -1.0;
        assert_eq!(s.validate().unwrap_err().field(), "delays.beta");

        let mut s = Scenario::default();
        s.commands.push(Command {
            time: 200.0,
            origin: ClusterId(0),
            scope: Scope::Global,
            targets: vec![],
            payload: vec![],
        });
        assert_eq!(s.validate().unwrap_err().field(), "commands[0].time");

        let mut s = Scenario::default();
        s.failures.push(FailureEvent {
            time: 1.0,
            action: FailureAction::Fail {
                worker: Some(WorkerId(9999)),
                region: None,
            },
        });
        assert_eq!(s.validate().unwrap_err().field(), "failures[0].worker");

        let mut s = Scenario::default();
        s.commands.push(Command {
            time: 1.0,
            origin: ClusterId(0),
            scope: Scope::Cluster(ClusterId(1)),
            targets: vec![WorkerId(0)],
            payload: vec![],
        });
        assert_eq!(s.validate().unwrap_err().field(), "commands[0].targets");
    }

    #[test]
    fn tree_latency_table_clamps() {
        let l = LinkLatencies {
            tree: vec![1.0, 2.0],
            ..LinkLatencies::default()
        };
        assert_eq!(l.tree_edge(1), 1.0);
        assert_eq!(l.tree_edge(2), 2.0);
        assert_eq!(l.tree_edge(4), 2.0);
    }
}
