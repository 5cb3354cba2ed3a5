//! JSON scenario files.
//!
//! Every key is optional and defaults as documented on the fields; unknown
//! keys are rejected. `--set a.b.c=value` overrides are applied to the raw
//! JSON document before it is decoded, so they obey the same rules.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use vtree_core::adjacent::DelayParams;
use vtree_core::hier::RoutingMode;
use vtree_core::kernel::{
    Command, CoordinatorParams, FailureEvent, LinkLatencies, RoutingParams, Scenario, Strategy,
};
use vtree_core::topology::{AdjacencySpec, HierarchyConfig};

use crate::error::SimError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologySection {
    /// 2..=5; default 5.
    pub num_layers: u8,
    /// Default 4.
    pub workers_per_cluster: u32,
    /// Default 4.
    pub clusters_per_region: u32,
    /// Default 2.
    pub regions_per_hub: u32,
    /// Default 2.
    pub hubs_per_domain: u32,
    /// Default 1.
    pub domains: u32,
    /// Region graph; default a square-ish grid.
    pub adjacency: AdjacencySpec,
}

impl Default for TopologySection {
    fn default() -> Self {
        let c = HierarchyConfig::default();
        Self {
            num_layers: c.num_layers,
            workers_per_cluster: c.workers_per_cluster,
            clusters_per_region: c.clusters_per_region,
            regions_per_hub: c.regions_per_hub,
            hubs_per_domain: c.hubs_per_domain,
            domains: c.domains,
            adjacency: AdjacencySpec::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DelaySection {
    /// Time units per hierarchy-distance unit; default 1.0.
    pub alpha: f64,
    /// Time units per pending broadcast; default 0.1.
    pub beta: f64,
    /// Maximum jitter; default 0.05.
    pub epsilon: f64,
    /// Per-class link latencies.
    pub links: LinkLatencies,
}

impl Default for DelaySection {
    fn default() -> Self {
        let d = DelayParams::default();
        Self {
            alpha: d.alpha,
            beta: d.beta,
            epsilon: d.epsilon,
            links: LinkLatencies::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoordinatorSection {
    /// Active coordinators per region; default 5.
    #[serde(rename = "K")]
    pub k: u32,
    /// Re-selection threshold; default 3.
    #[serde(rename = "T_min")]
    pub t_min: u32,
    /// Default 1.0.
    pub round_period: f64,
    /// Refill to K instead of T_min; default false.
    pub eager_refill: bool,
    /// One promotion per round; default false.
    pub single_promotion: bool,
}

impl Default for CoordinatorSection {
    fn default() -> Self {
        let c = HierarchyConfig::default();
        let p = CoordinatorParams::default();
        Self {
            k: c.k,
            t_min: c.t_min,
            round_period: p.round_period,
            eager_refill: p.eager_refill,
            single_promotion: p.single_promotion,
        }
    }
}

/// `"adjacent"`, `"hierarchical"`, or an object with routing options.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StrategySection {
    Name(Strategy),
    Detailed(StrategyDetail),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyDetail {
    pub kind: Strategy,
    /// Tree routing: climb to the root instead of the lowest common ancestor.
    #[serde(default)]
    pub literal_root: bool,
    /// Retries of a parked tree copy; default 3.
    #[serde(default = "default_retries")]
    pub max_retries: u32,
}

fn default_retries() -> u32 {
    RoutingParams::default().max_retries
}

impl Default for StrategySection {
    fn default() -> Self {
        StrategySection::Name(Strategy::default())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioFile {
    pub topology: TopologySection,
    pub delays: DelaySection,
    pub strategy: StrategySection,
    pub failures: Vec<FailureEvent>,
    pub commands: Vec<Command>,
    /// Default 0.
    pub seed: u64,
    /// Default 100.0.
    pub horizon: f64,
    pub coordinator: CoordinatorSection,
}

impl Default for ScenarioFile {
    fn default() -> Self {
        Self::from_scenario(&Scenario::default())
    }
}

impl ScenarioFile {
    pub fn into_scenario(self) -> Scenario {
        let t = self.topology;
        let (strategy, routing) = match self.strategy {
            StrategySection::Name(s) => (s, RoutingParams::default()),
            StrategySection::Detailed(d) => (
                d.kind,
                RoutingParams {
                    mode: if d.literal_root {
                        RoutingMode::LiteralRoot
                    } else {
                        RoutingMode::LcaPruned
                    },
                    max_retries: d.max_retries,
                },
            ),
        };
        Scenario {
            config: HierarchyConfig {
                num_layers: t.num_layers,
                workers_per_cluster: t.workers_per_cluster,
                clusters_per_region: t.clusters_per_region,
                regions_per_hub: t.regions_per_hub,
                hubs_per_domain: t.hubs_per_domain,
                domains: t.domains,
                k: self.coordinator.k,
                t_min: self.coordinator.t_min,
            },
            adjacency: t.adjacency,
            delays: DelayParams {
                alpha: self.delays.alpha,
                beta: self.delays.beta,
                epsilon: self.delays.epsilon,
            },
            strategy,
            routing,
            latencies: self.delays.links,
            coordinator: CoordinatorParams {
                round_period: self.coordinator.round_period,
                eager_refill: self.coordinator.eager_refill,
                single_promotion: self.coordinator.single_promotion,
            },
            failures: self.failures,
            commands: self.commands,
            seed: self.seed,
            horizon: self.horizon,
        }
    }

    pub fn from_scenario(sc: &Scenario) -> Self {
        let c = &sc.config;
        let strategy = if sc.routing == RoutingParams::default() {
            StrategySection::Name(sc.strategy)
        } else {
            StrategySection::Detailed(StrategyDetail {
                kind: sc.strategy,
                literal_root: sc.routing.mode == RoutingMode::LiteralRoot,
                max_retries: sc.routing.max_retries,
            })
        };
        Self {
            topology: TopologySection {
                num_layers: c.num_layers,
                workers_per_cluster: c.workers_per_cluster,
                clusters_per_region: c.clusters_per_region,
                regions_per_hub: c.regions_per_hub,
                hubs_per_domain: c.hubs_per_domain,
                domains: c.domains,
                adjacency: sc.adjacency.clone(),
            },
            delays: DelaySection {
                alpha: sc.delays.alpha,
                beta: sc.delays.beta,
                epsilon: sc.delays.epsilon,
                links: sc.latencies.clone(),
            },
            strategy,
            failures: sc.failures.clone(),
            commands: sc.commands.clone(),
            seed: sc.seed,
            horizon: sc.horizon,
            coordinator: CoordinatorSection {
                k: c.k,
                t_min: c.t_min,
                round_period: sc.coordinator.round_period,
                eager_refill: sc.coordinator.eager_refill,
                single_promotion: sc.coordinator.single_promotion,
            },
        }
    }
}

/// Parses `key=value`; the value is read as JSON, falling back to a string.
pub fn parse_override(s: &str) -> Result<(String, Value), SimError> {
    let (key, raw) = s
        .split_once('=')
        .ok_or_else(|| SimError::invalid(format!("--set {s}: expected key=value")))?;
    if key.is_empty() {
        return Err(SimError::invalid(format!("--set {s}: empty key")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok((key.to_string(), value))
}

/// Sets `value` at dotted `path`, creating objects as needed. Numeric
/// segments index into arrays.
pub fn apply_override(doc: &mut Value, path: &str, value: Value) -> Result<(), SimError> {
    let mut cur = doc;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        if cur.is_null() {
            *cur = Value::Object(Default::default());
        }
        cur = match cur {
            Value::Object(map) => {
                if last {
                    map.insert(part.to_string(), value);
                    return Ok(());
                }
                map.entry(part.to_string()).or_insert(Value::Null)
            }
            Value::Array(items) => {
                let idx: usize = part.parse().map_err(|_| {
                    SimError::invalid(format!("--set {path}: '{part}' is not an index"))
                })?;
                let len = items.len();
                let slot = items.get_mut(idx).ok_or_else(|| {
                    SimError::invalid(format!("--set {path}: index {idx} out of range ({len})"))
                })?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => {
                return Err(SimError::invalid(format!(
                    "--set {path}: '{part}' does not name an object or array"
                )))
            }
        };
    }
    Ok(())
}

/// Decodes a scenario document after applying overrides.
pub fn from_value(mut doc: Value, overrides: &[(String, Value)]) -> Result<ScenarioFile, SimError> {
    for (k, v) in overrides {
        apply_override(&mut doc, k, v.clone())?;
    }
    serde_json::from_value(doc).map_err(|e| SimError::invalid(e.to_string()))
}

pub fn parse_str(text: &str, overrides: &[(String, Value)]) -> Result<ScenarioFile, SimError> {
    let doc: Value = serde_json::from_str(text).map_err(|e| SimError::invalid(e.to_string()))?;
    from_value(doc, overrides)
}

/// Reads, overrides, decodes and validates a scenario file.
pub fn load(path: &Path, overrides: &[(String, Value)]) -> Result<Scenario, SimError> {
    let text = std::fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
    let sc = parse_str(&text, overrides)?.into_scenario();
    sc.validate()
        .map_err(|e| SimError::invalid(e.to_string()))?;
    Ok(sc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;
    use vtree_core::kernel::FailureAction;
    use vtree_core::topology::Scope;
    use vtree_core::trace::LinkClass;
    use vtree_core::{ClusterId, RegionId, WorkerId};

    #[test]
    fn empty_document_is_default_scenario() {
        assert_eq!(
            parse_str("{}", &[]).unwrap().into_scenario(),
            Scenario::default()
        );
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = parse_str(r#"{"topolgy": {}}"#, &[]).unwrap_err();
        assert!(err.to_string().contains("topolgy"), "{err}");
        assert!(parse_str(r#"{"coordinator": {"k": 3}}"#, &[]).is_err());
        assert!(parse_str(
            r#"{"failures": [{"time": 1, "action": "fail", "worker": 1, "extra": 2}]}"#,
            &[]
        )
        .is_err());
    }

    #[test]
    fn full_document_round_trips() {
        let doc = json!({
            "topology": {"num_layers": 4, "workers_per_cluster": 3, "clusters_per_region": 2,
                         "regions_per_hub": 3, "hubs_per_domain": 1, "domains": 2,
                         "adjacency": {"explicit": [[0, 1], [1, 2]]}},
            "delays": {"alpha": 2.0, "beta": 0.0, "epsilon": 0.0,
                       "links": {"intra_cluster": 0.1, "intra_region": 0.3, "adjacent": 0.7, "tree": [1.0, 2.0]}},
            "strategy": {"kind": "hierarchical", "literal_root": true, "max_retries": 5},
            "failures": [
                {"time": 1.5, "action": "fail", "worker": 3},
                {"time": 2.0, "action": "fail", "region": 1},
                {"time": 2.5, "action": "jam", "link_class": "adjacent", "drop": 0.5},
                {"time": 3.0, "action": "unjam", "link_class": "adjacent"},
                {"time": 3.5, "action": "link_down", "regions": [0, 1]},
                {"time": 4.0, "action": "recover", "worker": 3},
                {"time": 4.5, "action": "set_energy", "worker": 2, "value": 0.25}
            ],
            "commands": [
                {"time": 0.5, "origin": 0, "scope": "global"},
                {"time": 1.0, "origin": 2, "scope": {"region": 3}, "targets": [], "payload": [1, 2]}
            ],
            "seed": 77,
            "horizon": 40.0,
            "coordinator": {"K": 4, "T_min": 2, "round_period": 2.0, "eager_refill": true, "single_promotion": true}
        });
        let file = from_value(doc, &[]).unwrap();
        let sc = file.clone().into_scenario();
        assert_eq!(sc.config.k, 4);
        assert_eq!(sc.routing.mode, RoutingMode::LiteralRoot);
        assert_eq!(sc.commands[1].scope, Scope::Region(RegionId(3)));
        assert_eq!(
            sc.failures[2].action,
            FailureAction::Jam {
                link_class: LinkClass::Adjacent,
                drop: 0.5
            }
        );
        assert_eq!(
            sc.failures[0].action,
            FailureAction::Fail {
                worker: Some(WorkerId(3)),
                region: None
            }
        );
        assert_eq!(ScenarioFile::from_scenario(&sc), file);
        let text = serde_json::to_string(&file).unwrap();
        assert_eq!(parse_str(&text, &[]).unwrap().into_scenario(), sc);
        assert!(sc.validate().is_ok());
        assert_eq!(sc.commands[0].origin, ClusterId(0));
    }

    #[test]
    fn overrides_edit_nested_paths() {
        let ov = [
            parse_override("coordinator.K=3").unwrap(),
            parse_override("strategy=hierarchical").unwrap(),
            parse_override("topology.adjacency.grid.columns=8").unwrap(),
        ];
        let sc = parse_str("{}", &ov).unwrap().into_scenario();
        assert_eq!(sc.config.k, 3);
        assert_eq!(sc.strategy, Strategy::Hierarchical);
        assert_eq!(sc.adjacency, AdjacencySpec::Grid { columns: Some(8) });

        let doc = r#"{"commands": [{"time": 1, "origin": 0, "scope": "global"}]}"#;
        let sc = parse_str(doc, &[parse_override("commands.0.time=2.5").unwrap()])
            .unwrap()
            .into_scenario();
        assert_eq!(sc.commands[0].time, 2.5);
        assert!(parse_str(doc, &[parse_override("commands.4.time=1").unwrap()]).is_err());
        assert!(parse_override("novalue").is_err());
    }
}
