//! Random scenarios for sweeps, soak tests and the acceptance suite.

use rand_chacha::ChaCha8Rng;
use vtree_core::kernel::{Command, FailureAction, FailureEvent, Scenario, Strategy};
use vtree_core::rng::{below, stream, unit_f64, StreamKind};
use vtree_core::topology::{AdjacencySpec, HierarchyConfig, Scope};
use vtree_core::trace::LinkClass;
use vtree_core::{ClusterId, DomainId, HubId, RegionId, WorkerId};

#[derive(Clone, Debug, PartialEq)]
pub struct GenOptions {
    /// Fixed strategy, or a coin flip per scenario.
    pub strategy: Option<Strategy>,
    /// Upper bound on the number of clusters.
    pub max_clusters: u32,
    /// Inclusive range of command counts.
    pub commands: (u32, u32),
    /// Up to this many single-worker failures (some later recovered).
    pub worker_failures: u32,
    pub region_kill: bool,
    pub jam: bool,
    pub round_period: f64,
    pub horizon: f64,
}

impl Default for GenOptions {
    fn default() -> Self {
        Self {
            strategy: None,
            max_clusters: 64,
            commands: (1, 4),
            worker_failures: 0,
            region_kill: false,
            jam: false,
            round_period: 1.0,
            horizon: 40.0,
        }
    }
}

fn pick(r: &mut ChaCha8Rng, lo: u32, hi: u32) -> u32 {
    lo + below(r, (hi - lo + 1) as u64) as u32
}

/// Deterministic in `seed`; always passes validation.
pub fn random_scenario(seed: u64, opts: &GenOptions) -> Scenario {
    let mut r = stream(seed, StreamKind::Topology, 0x9e4e);
    let num_layers = pick(&mut r, 2, 5) as u8;
    let mut config = HierarchyConfig {
        num_layers,
        workers_per_cluster: pick(&mut r, 1, 4),
        clusters_per_region: pick(&mut r, 1, 4),
        regions_per_hub: pick(&mut r, 1, 5),
        hubs_per_domain: if num_layers >= 4 {
            pick(&mut r, 1, 3)
        } else {
            1
        },
        domains: if num_layers >= 5 {
            pick(&mut r, 1, 2)
        } else {
            1
        },
        k: 1,
        t_min: 1,
    };
    while config.num_clusters() > opts.max_clusters.max(1) {
        if config.regions_per_hub > 1 {
            config.regions_per_hub -= 1;
        } else if config.hubs_per_domain > 1 {
            config.hubs_per_domain -= 1;
        } else if config.domains > 1 {
            config.domains -= 1;
        } else {
            config.clusters_per_region -= 1;
        }
    }
    let per_region = config.workers_per_cluster * config.clusters_per_region;
    config.k = pick(&mut r, 1, per_region.min(5));
    config.t_min = pick(&mut r, 1, config.k);

    let clusters = config.num_clusters();
    let workers = config.num_workers();
    let regions = config.num_regions();
    let strategy = opts.strategy.unwrap_or(if below(&mut r, 2) == 0 {
        Strategy::Adjacent
    } else {
        Strategy::Hierarchical
    });

    let n_cmd = pick(&mut r, opts.commands.0, opts.commands.1);
    let commands = (0..n_cmd)
        .map(|_| {
            let scope = match below(&mut r, 5) {
                0 => Scope::Cluster(ClusterId(pick(&mut r, 0, clusters - 1))),
                1 => Scope::Region(RegionId(pick(&mut r, 0, regions - 1))),
                2 => Scope::Hub(HubId(pick(&mut r, 0, config.num_hubs() - 1))),
                3 => Scope::Domain(DomainId(pick(&mut r, 0, config.domains - 1))),
                _ => Scope::Global,
            };
            Command {
                time: unit_f64(&mut r) * opts.horizon * 0.25,
                origin: ClusterId(pick(&mut r, 0, clusters - 1)),
                scope,
                targets: vec![],
                payload: vec![],
            }
        })
        .collect();

    let mut failures = Vec::new();
    let when = |r: &mut ChaCha8Rng| unit_f64(r) * opts.horizon * 0.5;
    for _ in 0..pick(&mut r, 0, opts.worker_failures) {
        let worker = Some(WorkerId(pick(&mut r, 0, workers - 1)));
        let time = when(&mut r);
        failures.push(FailureEvent {
            time,
            action: FailureAction::Fail {
                worker,
                region: None,
            },
        });
        if below(&mut r, 3) == 0 {
            let time = time + unit_f64(&mut r) * opts.horizon * 0.25;
            failures.push(FailureEvent {
                time,
                action: FailureAction::Recover {
                    worker,
                    region: None,
                },
            });
        }
    }
    if opts.region_kill {
        let region = Some(RegionId(pick(&mut r, 0, regions - 1)));
        let time = when(&mut r);
        failures.push(FailureEvent {
            time,
            action: FailureAction::Fail {
                worker: None,
                region,
            },
        });
    }
    if opts.jam {
        let link_class = LinkClass::ALL[below(&mut r, LinkClass::ALL.len() as u64) as usize];
        let drop = unit_f64(&mut r);
        let time = when(&mut r);
        failures.push(FailureEvent {
            time,
            action: FailureAction::Jam { link_class, drop },
        });
    }

    let mut sc = Scenario {
        config,
        adjacency: AdjacencySpec::RandomConnected {
            extra_edges: pick(&mut r, 0, 3),
        },
        strategy,
        commands,
        failures,
        seed,
        horizon: opts.horizon,
        ..Scenario::default()
    };
    sc.coordinator.round_period = opts.round_period;
    sc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generated_scenarios_validate() {
        let opts = GenOptions {
            worker_failures: 3,
            region_kill: true,
            jam: true,
            max_clusters: 20,
            ..GenOptions::default()
        };
        for seed in 0..300 {
            let sc = random_scenario(seed, &opts);
            assert!(sc.config.num_clusters() <= 20);
            sc.validate().unwrap();
        }
        assert_eq!(random_scenario(5, &opts), random_scenario(5, &opts));
    }
}
