//! Monte-Carlo trials and parameter sweeps.
//!
//! A trial reruns the base scenario with seed `trial_seed(seed, i)` and, when
//! the failure probability `p` is positive, kills every worker independently
//! with probability `p` at half a round period. Trials run in parallel; their
//! outcomes are reduced in index order so results do not depend on the
//! thread count.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;
use vtree_core::coordinators::predicted_liveness;
use vtree_core::kernel::{Command, FailureAction, FailureEvent, Scenario, Strategy};
use vtree_core::metrics::liveness_estimate;
use vtree_core::rng::{stream, trial_seed, unit_f64, StreamKind};
use vtree_core::topology::Scope;
use vtree_core::{ClusterId, RegionId, WorkerId};

use crate::error::SimError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepParam {
    /// Per-worker failure probability.
    P,
    /// Coordinators per region; `T_min` is clamped to it.
    K,
    /// Regions, laid out as one hub in one domain.
    Regions,
    Strategy,
}

impl FromStr for SweepParam {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "p" => Ok(SweepParam::P),
            "K" | "k" => Ok(SweepParam::K),
            "regions" => Ok(SweepParam::Regions),
            "strategy" => Ok(SweepParam::Strategy),
            _ => Err(format!(
                "unknown sweep parameter '{s}' (expected p, K, regions or strategy)"
            )),
        }
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepParam::P => "p",
            SweepParam::K => "K",
            SweepParam::Regions => "regions",
            SweepParam::Strategy => "strategy",
        })
    }
}

/// Totals over a batch of trials.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct TrialTotals {
    pub trials: u64,
    pub regions: u64,
    pub regions_live: u64,
    pub goals: u64,
    pub delivered: u64,
    pub broadcasts: u64,
    pub tree_forwards: u64,
    pub region_crossings: u64,
    pub max_hop: u32,
    pub containment_violations: u64,
    pub recovery_breaches: u64,
    pub recovery_unrestored: u64,
}

impl TrialTotals {
    fn merge(mut self, o: TrialTotals) -> TrialTotals {
        self.trials += o.trials;
        self.regions += o.regions;
        self.regions_live += o.regions_live;
        self.goals += o.goals;
        self.delivered += o.delivered;
        self.broadcasts += o.broadcasts;
        self.tree_forwards += o.tree_forwards;
        self.region_crossings += o.region_crossings;
        self.max_hop = self.max_hop.max(o.max_hop);
        self.containment_violations += o.containment_violations;
        self.recovery_breaches += o.recovery_breaches;
        self.recovery_unrestored += o.recovery_unrestored;
        self
    }
}

/// Scenario for trial `index`: derived seed plus random worker failures.
pub fn trial_scenario(base: &Scenario, p: f64, index: u64) -> Scenario {
    let mut sc = base.clone();
    sc.seed = trial_seed(base.seed, index);
    if p > 0.0 {
        let mut rng = stream(sc.seed, StreamKind::Failures, 0);
        let time = 0.5 * sc.coordinator.round_period;
        for w in 0..sc.config.num_workers() {
            if unit_f64(&mut rng) < p {
                sc.failures.push(FailureEvent {
                    time,
                    action: FailureAction::Fail {
                        worker: Some(WorkerId(w)),
                        region: None,
                    },
                });
            }
        }
    }
    sc
}

pub fn run_trial(base: &Scenario, p: f64, index: u64) -> Result<TrialTotals, SimError> {
    let sc = trial_scenario(base, p, index);
    let out = vtree_core::run(&sc).map_err(|e| SimError::invalid(e.to_string()))?;
    let r = &out.report;
    Ok(TrialTotals {
        trials: 1,
        regions: out.region_live.len() as u64,
        regions_live: out.region_live.iter().filter(|l| **l).count() as u64,
        goals: r.messages.values().map(|m| m.goals as u64).sum(),
        delivered: r.messages.values().map(|m| m.delivered.len() as u64).sum(),
        broadcasts: r.broadcasts,
        tree_forwards: r.tree_forwards,
        region_crossings: r.region_crossings,
        max_hop: r.max_hop_alg2.max(r.max_hop_alg3),
        containment_violations: r.containment_violations,
        recovery_breaches: r.recovery.len() as u64,
        recovery_unrestored: r.recovery.iter().filter(|s| s.rounds.is_none()).count() as u64,
    })
}

/// Runs `trials` trials of `base` in parallel.
pub fn run_trials(base: &Scenario, p: f64, trials: u64) -> Result<TrialTotals, SimError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(SimError::invalid(format!("p: {p} is outside [0, 1]")));
    }
    base.validate()
        .map_err(|e| SimError::invalid(e.to_string()))?;
    let parts: Vec<TrialTotals> = (0..trials)
        .into_par_iter()
        .map(|i| run_trial(base, p, i))
        .collect::<Result<_, _>>()?;
    Ok(parts
        .into_iter()
        .fold(TrialTotals::default(), TrialTotals::merge))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub param: String,
    pub value: String,
    pub p: f64,
    pub k: u32,
    pub live_fraction: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// `1 - p^K`.
    pub predicted_liveness: f64,
    #[serde(flatten)]
    pub totals: TrialTotals,
}

impl SweepRow {
    pub const CSV_HEADER: &'static str = "param,value,p,K,trials,regions,regions_live,live_fraction,ci_low,ci_high,predicted_liveness,goals,delivered,broadcasts,tree_forwards,region_crossings,max_hop,containment_violations,recovery_breaches,recovery_unrestored";

    pub fn csv_line(&self) -> String {
        let t = &self.totals;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.param,
            self.value,
            self.p,
            self.k,
            t.trials,
            t.regions,
            t.regions_live,
            self.live_fraction,
            self.ci_low,
            self.ci_high,
            self.predicted_liveness,
            t.goals,
            t.delivered,
            t.broadcasts,
            t.tree_forwards,
            t.region_crossings,
            t.max_hop,
            t.containment_violations,
            t.recovery_breaches,
            t.recovery_unrestored
        )
    }
}

/// Default failure probability: 0.1 for `K` sweeps, 0 otherwise.
pub fn default_p(param: SweepParam) -> f64 {
    match param {
        SweepParam::K => 0.1,
        _ => 0.0,
    }
}

/// Base scenario and failure probability for one sweep value.
pub fn apply_value(
    base: &Scenario,
    param: SweepParam,
    value: &str,
    p: f64,
) -> Result<(Scenario, f64), SimError> {
    let bad = |what: &str| SimError::invalid(format!("sweep value '{value}': expected {what}"));
    let mut sc = base.clone();
    let mut p = p;
    match param {
        SweepParam::P => p = value.parse().map_err(|_| bad("a probability"))?,
        SweepParam::K => {
            let k: u32 = value.parse().map_err(|_| bad("a positive integer"))?;
            sc.config.k = k;
            sc.config.t_min = sc.config.t_min.min(k);
        }
        SweepParam::Regions => {
            let n: u32 = value.parse().map_err(|_| bad("a positive integer"))?;
            sc.config.regions_per_hub = n;
            sc.config.hubs_per_domain = 1;
            sc.config.domains = 1;
        }
        SweepParam::Strategy => {
            sc.strategy = match value {
                "adjacent" => Strategy::Adjacent,
                "hierarchical" => Strategy::Hierarchical,
                _ => return Err(bad("adjacent or hierarchical")),
            }
        }
    }
    if matches!(param, SweepParam::Regions | SweepParam::Strategy) && sc.commands.is_empty() {
        let last = RegionId(sc.config.num_regions().saturating_sub(1));
        sc.commands.push(Command {
            time: 0.5,
            origin: ClusterId(0),
            scope: Scope::Region(last),
            targets: vec![],
            payload: vec![],
        });
    }
    Ok((sc, p))
}

/// One row per value, in the given order.
pub fn sweep(
    base: &Scenario,
    param: SweepParam,
    values: &[String],
    trials: u64,
    p: Option<f64>,
) -> Result<Vec<SweepRow>, SimError> {
    if trials == 0 {
        return Err(SimError::invalid("trials: must be at least 1"));
    }
    if values.is_empty() {
        return Err(SimError::invalid("values: at least one value is required"));
    }
    let p = p.unwrap_or_else(|| default_p(param));
    values
        .iter()
        .map(|v| {
            let (sc, p) = apply_value(base, param, v, p)?;
            let totals = run_trials(&sc, p, trials)?;
            let est = liveness_estimate(totals.regions_live, totals.regions.max(1));
            Ok(SweepRow {
                param: param.to_string(),
                value: v.clone(),
                p,
                k: sc.config.k,
                live_fraction: est.fraction,
                ci_low: est.ci_low,
                ci_high: est.ci_high,
                predicted_liveness: predicted_liveness(p, sc.config.k)
                    .map_err(|e| SimError::invalid(e.to_string()))?,
                totals,
            })
        })
        .collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from(SweepRow::CSV_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.csv_line());
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use vtree_core::topology::HierarchyConfig;

    fn one_region(k: u32) -> Scenario {
        Scenario {
            config: HierarchyConfig {
                num_layers: 2,
                workers_per_cluster: 5,
                clusters_per_region: 1,
                regions_per_hub: 1,
                hubs_per_domain: 1,
                domains: 1,
                k,
                t_min: 1,
            },
            horizon: 1.0,
            ..Scenario::default()
        }
    }

    #[test]
    fn header_matches_line_width() {
        let rows = sweep(&one_region(1), SweepParam::P, &["0.5".into()], 10, None).unwrap();
        assert_eq!(
            SweepRow::CSV_HEADER.split(',').count(),
            rows[0].csv_line().split(',').count()
        );
    }

    #[test]
    fn extreme_probabilities() {
        let t = run_trials(&one_region(2), 0.0, 20).unwrap();
        assert_eq!(t.regions_live, 20);
        let t = run_trials(&one_region(2), 1.0, 20).unwrap();
        assert_eq!(t.regions_live, 0);
        assert!(run_trials(&one_region(2), 1.5, 1).is_err());
    }

    #[test]
    fn results_are_reproducible() {
        let a = run_trials(&one_region(2), 0.4, 200).unwrap();
        let b = run_trials(&one_region(2), 0.4, 200).unwrap();
        assert_eq!(a, b);
        assert!(a.regions_live > 100 && a.regions_live < 200);
    }

    #[test]
    fn parse_values() {
        assert!(apply_value(&one_region(1), SweepParam::K, "x", 0.1).is_err());
        assert!(apply_value(&one_region(1), SweepParam::Strategy, "tree", 0.1).is_err());
        let (sc, _) = apply_value(&one_region(3), SweepParam::Regions, "6", 0.0).unwrap();
        assert_eq!(sc.config.num_regions(), 6);
        assert_eq!(sc.commands[0].scope, Scope::Region(RegionId(5)));
        assert_eq!("K".parse::<SweepParam>(), Ok(SweepParam::K));
    }
}
