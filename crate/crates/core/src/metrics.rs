//! Figures derived from a trace. Every function here is a pure function of the
//! records it is given.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::ids::{ClusterId, MsgId, RegionId};
use crate::time::SimTime;
use crate::trace::{Component, EventName, TraceRecord};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MsgStats {
    pub injected_at: SimTime,
    pub goals: u32,
    /// `(cluster, latency since injection)` in delivery order.
    pub delivered: Vec<(ClusterId, SimTime)>,
    pub max_hop: u32,
    pub route_failures: u64,
}

impl MsgStats {
    pub fn max_latency(&self) -> Option<SimTime> {
        self.delivered.iter().map(|(_, t)| *t).max()
    }
}

/// Rounds from a `T_min` breach to restoration; `None` if never restored.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecoverySample {
    pub region: RegionId,
    pub rounds: Option<u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub messages: BTreeMap<MsgId, MsgStats>,
    /// Leader-scheduled worker broadcasts that fired.
    pub broadcasts: u64,
    /// Tree forwards between distinct workers.
    pub tree_forwards: u64,
    /// Tree hops between roles held by the same worker.
    pub internal_tree_hops: u64,
    pub worker_relays: u64,
    pub reports: u64,
    /// Deferred-routing receptions whose sender cluster is in another region.
    pub region_crossings: u64,
    pub max_hop_alg2: u32,
    pub max_hop_alg3: u32,
    pub recovery: Vec<RecoverySample>,
    pub regions_total: u32,
    pub regions_live: u32,
    pub containment_violations: u64,
    pub probes: u64,
    pub evaluations: u64,
    pub jammed: u64,
    pub route_failures: u64,
    pub maintenance_rounds: u64,
}

impl MetricsReport {
    pub fn live_fraction(&self) -> f64 {
        if self.regions_total == 0 {
            return 1.0;
        }
        self.regions_live as f64 / self.regions_total as f64
    }

    pub fn delivered_clusters(&self, msg: MsgId) -> Vec<ClusterId> {
        let mut out: Vec<ClusterId> = self
            .messages
            .get(&msg)
            .map(|s| s.delivered.iter().map(|(c, _)| *c).collect())
            .unwrap_or_default();
        out.sort_unstable();
        out
    }
}

pub fn report(trace: &[TraceRecord]) -> MetricsReport {
    let mut r = MetricsReport::default();
    let mut live: BTreeMap<RegionId, bool> = BTreeMap::new();
    for rec in trace {
        let hop = rec.hop.unwrap_or(0);
        if let Some(m) = rec.msg {
            if rec.event == EventName::Command {
                let s = r.messages.entry(m).or_default();
                s.injected_at = rec.time;
                s.goals = rec.aux.goals.unwrap_or(0);
            } else if let Some(s) = r.messages.get_mut(&m) {
                s.max_hop = s.max_hop.max(hop);
                if rec.event == EventName::Deliver {
                    if let Some(c) = rec.cluster {
                        s.delivered
                            .push((c, rec.time.saturating_sub(s.injected_at)));
                    }
                }
                if rec.event == EventName::RouteFailed {
                    s.route_failures += 1;
                }
            }
        }
        match (rec.component, rec.event) {
            (Component::Alg2, EventName::Broadcast) => r.broadcasts += 1,
            (Component::Alg2, EventName::Receive) => {
                if rec.peer_region.is_some() && rec.peer_region != rec.region {
                    r.region_crossings += 1;
                }
            }
            (Component::Alg3, EventName::Forward) => {
                if rec.aux.internal == Some(true) {
                    r.internal_tree_hops += 1;
                } else {
                    r.tree_forwards += 1;
                }
            }
            (Component::Alg3, EventName::RouteFailed) => r.route_failures += 1,
            (Component::Alg1, EventName::Relay) => r.worker_relays += 1,
            (Component::Alg1, EventName::Report) => r.reports += 1,
            (Component::Alg4, EventName::MaintenanceRound) => {
                r.maintenance_rounds += 1;
                r.probes += rec.aux.probes.unwrap_or(0);
                r.evaluations += rec.aux.evaluations.unwrap_or(0);
                if let Some(region) = rec.region {
                    live.insert(region, rec.aux.live.unwrap_or(false));
                }
            }
            (Component::Kernel, EventName::Jammed) => r.jammed += 1,
            _ => {}
        }
        match rec.component {
            Component::Alg2 => r.max_hop_alg2 = r.max_hop_alg2.max(hop),
            Component::Alg3 => r.max_hop_alg3 = r.max_hop_alg3.max(hop),
            _ => {}
        }
    }
    r.regions_total = live.len() as u32;
    r.regions_live = live.values().filter(|l| **l).count() as u32;
    r.recovery = recovery_latency(trace);
    r.containment_violations = containment_check(trace);
    r
}

#[derive(Clone, Copy, Default)]
struct RegionTrack {
    last_round: u64,
    t_min: Option<u32>,
    breach_since: Option<u64>,
    dead: bool,
}

/// One sample per interval in which a region's alive coordinator count fell
/// below `T_min`: the number of maintenance rounds until it was back at or
/// above `T_min`, or `None` if the region died or the trace ended first.
pub fn recovery_latency(trace: &[TraceRecord]) -> Vec<RecoverySample> {
    let mut regions: BTreeMap<RegionId, RegionTrack> = BTreeMap::new();
    let mut out = Vec::new();
    for rec in trace {
        let Some(region) = rec.region else { continue };
        let round_rec =
            rec.component == Component::Alg4 && rec.event == EventName::MaintenanceRound;
        let coord_change = rec.component == Component::Kernel
            && matches!(
                rec.event,
                EventName::WorkerFailed | EventName::WorkerRecovered
            )
            && rec.aux.coordinator == Some(true);
        if !round_rec && !coord_change {
            continue;
        }
        let t = regions.entry(region).or_default();
        if t.dead {
            continue;
        }
        if round_rec {
            t.last_round = rec.aux.round.unwrap_or(t.last_round);
            t.t_min = rec.aux.t_min.or(t.t_min);
        }
        let Some(t_min) = t.t_min else { continue };
        let alive = rec.aux.alive.unwrap_or(0);
        if round_rec && rec.aux.live == Some(false) {
            t.dead = true;
            out.push(RecoverySample {
                region,
                rounds: None,
            });
            continue;
        }
        match t.breach_since {
            None if alive < t_min => t.breach_since = Some(t.last_round),
            Some(since) if round_rec && alive >= t_min => {
                out.push(RecoverySample {
                    region,
                    rounds: Some(t.last_round - since),
                });
                t.breach_since = None;
            }
            _ => {}
        }
    }
    for (region, t) in regions {
        if t.breach_since.is_some() && !t.dead {
            out.push(RecoverySample {
                region,
                rounds: None,
            });
        }
    }
    out
}

/// Coordinator-maintenance records whose source and destination regions
/// differ. Expected to be zero.
pub fn containment_check(trace: &[TraceRecord]) -> u64 {
    trace.iter().filter(|r| r.is_cross_region_alg4()).count() as u64
}

/// Live fraction over Monte-Carlo outcomes with a 3-sigma normal band.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LivenessEstimate {
    pub trials: u64,
    pub live: u64,
    pub fraction: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

pub fn liveness_estimate(live: u64, trials: u64) -> LivenessEstimate {
    assert!(trials > 0, "at least one trial");
    let f = live as f64 / trials as f64;
    let half = 3.0 * libm::sqrt(f * (1.0 - f) / trials as f64);
    LivenessEstimate {
        trials,
        live,
        fraction: f,
        ci_low: (f - half).max(0.0),
        ci_high: (f + half).min(1.0),
    }
}
