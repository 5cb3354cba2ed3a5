//! Region-scoped redundant active coordinators.
//!
//! Each region keeps a set `C` of up to `K` active coordinators drawn from its
//! own workers. Maintenance runs in discrete rounds: alive coordinators probe
//! each other, remove failed peers, and, if fewer than `T_min` remain,
//! promote the best-ranked candidates. Every observation and promotion stays
//! inside the region.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{RegionId, WorkerId};
use crate::topology::Topology;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoordError {
    #[error("region {0} has no alive coordinator")]
    RegionDead(RegionId),
    #[error("not enough candidates: promoted {promoted:?}")]
    InsufficientCandidates { promoted: Vec<WorkerId> },
    #[error("probability {0} outside [0, 1]")]
    DomainError(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Health {
    Healthy,
    Failed,
}

/// Per-candidate inputs to the coordination metric, each in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Observation {
    pub connectivity: f64,
    /// Already normalised against the region's maximum.
    pub load: f64,
    pub energy: f64,
}

/// `0.5 connectivity + 0.3 (1 - load) + 0.2 energy`.
pub fn coordination_metric(o: Observation) -> f64 {
    0.5 * o.connectivity + 0.3 * (1.0 - o.load) + 0.2 * o.energy
}

/// Probability that a region with `k` independent coordinators, each failing
/// with probability `p`, keeps at least one.
pub fn predicted_liveness(p: f64, k: u32) -> Result<f64, CoordError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(CoordError::DomainError(p));
    }
    Ok(1.0 - libm::pow(p, k as f64))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoordinatorSet {
    pub region: RegionId,
    pub active: BTreeSet<WorkerId>,
    pub k: u32,
    pub t_min: u32,
    pub health: BTreeMap<WorkerId, Health>,
    pub metric: BTreeMap<WorkerId, f64>,
    /// Set once every coordinator has failed; a dead region never recovers.
    pub dead: bool,
}

/// Outcome of one monitoring pass.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MonitorReport {
    pub removed: Vec<WorkerId>,
    /// Pairwise health probes issued by alive coordinators.
    pub probes: u64,
    /// Candidate metric evaluations.
    pub evaluations: u64,
}

impl CoordinatorSet {
    pub fn new(region: RegionId, k: u32, t_min: u32) -> Self {
        Self {
            region,
            active: BTreeSet::new(),
            k,
            t_min,
            health: BTreeMap::new(),
            metric: BTreeMap::new(),
            dead: false,
        }
    }

    pub fn alive_count(&self, topo: &Topology) -> u32 {
        self.active.iter().filter(|w| topo.is_alive(**w)).count() as u32
    }

    pub fn region_live(&self, topo: &Topology) -> bool {
        !self.dead && self.alive_count(topo) > 0
    }

    pub fn needs_reselection(&self, topo: &Topology) -> bool {
        self.alive_count(topo) < self.t_min
    }

    /// Alive region workers that are not active coordinators, ascending.
    pub fn candidates(&self, topo: &Topology) -> Vec<WorkerId> {
        topo.workers_in_region(self.region)
            .filter(|w| topo.is_alive(*w) && !self.active.contains(w))
            .collect()
    }

    fn refresh_metrics(
        &mut self,
        topo: &Topology,
        observe: &dyn Fn(WorkerId) -> Observation,
    ) -> u64 {
        self.metric.clear();
        let candidates = self.candidates(topo);
        for &w in &candidates {
            debug_assert_eq!(topo.region_of_worker(w), self.region);
            self.metric.insert(w, coordination_metric(observe(w)));
        }
        candidates.len() as u64
    }

    /// Fills an empty set with up to `K` workers using the selection rule.
    pub fn initialize(
        &mut self,
        topo: &Topology,
        observe: &dyn Fn(WorkerId) -> Observation,
    ) -> Vec<WorkerId> {
        self.refresh_metrics(topo, observe);
        let promoted = self.promote(self.k);
        if self.active.is_empty() {
            self.dead = true;
        }
        promoted
    }

    /// Probes peers, removes failed coordinators and refreshes candidate
    /// metrics. Health comes from `topo`'s liveness, observed only for this
    /// region's workers.
    pub fn monitor_round(
        &mut self,
        topo: &Topology,
        observe: &dyn Fn(WorkerId) -> Observation,
    ) -> Result<MonitorReport, CoordError> {
        let size = self.active.len() as u64;
        let alive: Vec<WorkerId> = self
            .active
            .iter()
            .copied()
            .filter(|w| topo.is_alive(*w))
            .collect();
        if self.dead || alive.is_empty() {
            self.dead = true;
            for w in &self.active {
                self.health.insert(*w, Health::Failed);
            }
            return Err(CoordError::RegionDead(self.region));
        }
        let removed: Vec<WorkerId> = self
            .active
            .iter()
            .copied()
            .filter(|w| !topo.is_alive(*w))
            .collect();
        for w in &removed {
            self.health.insert(*w, Health::Failed);
            self.active.remove(w);
        }
        let evaluated = self.refresh_metrics(topo, observe);
        Ok(MonitorReport {
            removed,
            probes: alive.len() as u64 * size.saturating_sub(1),
            evaluations: alive.len() as u64 * evaluated,
        })
    }

    /// Promotes candidates by descending metric (lowest ID on ties) until
    /// `target` coordinators are active.
    fn promote(&mut self, target: u32) -> Vec<WorkerId> {
        let mut ranked: Vec<(WorkerId, f64)> = self
            .metric
            .iter()
            .filter(|(w, _)| !self.active.contains(w))
            .map(|(w, m)| (*w, *m))
            .collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let need = (target as usize).saturating_sub(self.active.len());
        let promoted: Vec<WorkerId> = ranked.into_iter().take(need).map(|(w, _)| w).collect();
        for w in &promoted {
            self.active.insert(*w);
            self.health.insert(*w, Health::Healthy);
            self.metric.remove(w);
        }
        promoted
    }

    /// Re-selection after [`monitor_round`](Self::monitor_round). `limit`
    /// caps promotions this round (`None` = no cap); `eager` refills to `K`
    /// instead of `T_min`.
    pub fn select_replacements(
        &mut self,
        eager: bool,
        limit: Option<u32>,
    ) -> Result<Vec<WorkerId>, CoordError> {
        let goal = if eager { self.k } else { self.t_min };
        let mut target = goal;
        if let Some(l) = limit {
            target = target.min(self.active.len() as u32 + l);
        }
        let promoted = self.promote(target);
        if (self.active.len() as u32) < target {
            return Err(CoordError::InsufficientCandidates { promoted });
        }
        Ok(promoted)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{build_topology, AdjacencySpec, HierarchyConfig};
    use alloc::vec;

    fn region_topo(workers: u32) -> Topology {
        let cfg = HierarchyConfig {
            num_layers: 5,
            workers_per_cluster: workers,
            clusters_per_region: 1,
            regions_per_hub: 1,
            hubs_per_domain: 1,
            domains: 1,
            k: 1,
            t_min: 1,
        };
        build_topology(&cfg, &AdjacencySpec::default(), 0).unwrap()
    }

    fn flat(_: WorkerId) -> Observation {
        Observation {
            connectivity: 1.0,
            load: 0.0,
            energy: 1.0,
        }
    }

    fn ids(v: &[u32]) -> Vec<WorkerId> {
        v.iter().copied().map(WorkerId).collect()
    }

    fn initialized(topo: &Topology) -> CoordinatorSet {
        let mut cs = CoordinatorSet::new(RegionId(0), 5, 3);
        assert_eq!(cs.initialize(topo, &flat), ids(&[0, 1, 2, 3, 4]));
        cs
    }

    #[test]
    fn liveness_formula() {
        assert!((predicted_liveness(0.1, 3).unwrap() - 0.999).abs() < 1e-12);
        assert_eq!(predicted_liveness(0.0, 7).unwrap(), 1.0);
        assert_eq!(predicted_liveness(1.0, 5).unwrap(), 0.0);
        assert_eq!(
            predicted_liveness(1.5, 1),
            Err(CoordError::DomainError(1.5))
        );
    }

    #[test]
    fn one_crash_is_removed() {
        let mut t = region_topo(8);
        let mut cs = initialized(&t);
        t.kill(WorkerId(2)).unwrap();
        let r = cs.monitor_round(&t, &flat).unwrap();
        assert_eq!(r.removed, ids(&[2]));
        assert_eq!(cs.active.len(), 4);
        assert_eq!(cs.health[&WorkerId(2)], Health::Failed);
        assert!(!cs.needs_reselection(&t));
        assert_eq!(r.probes, 4 * 4);
        assert_eq!(r.evaluations, 4 * 3);
    }

    #[test]
    fn no_failures_only_refreshes_metrics() {
        let t = region_topo(8);
        let mut cs = initialized(&t);
        let before = cs.active.clone();
        let r = cs.monitor_round(&t, &flat).unwrap();
        assert!(r.removed.is_empty());
        assert_eq!(cs.active, before);
        assert_eq!(cs.metric.len(), 3);
    }

    #[test]
    fn all_crashed_is_region_dead() {
        let mut t = region_topo(8);
        let mut cs = initialized(&t);
        for w in 0..5 {
            t.kill(WorkerId(w)).unwrap();
        }
        assert!(!cs.region_live(&t));
        assert_eq!(
            cs.monitor_round(&t, &flat),
            Err(CoordError::RegionDead(RegionId(0)))
        );
        t.revive(WorkerId(0)).unwrap();
        assert!(!cs.region_live(&t));
    }

    #[test]
    fn threshold_boundaries() {
        let mut t = region_topo(8);
        let cs = initialized(&t);
        t.kill(WorkerId(0)).unwrap();
        t.kill(WorkerId(1)).unwrap();
        assert!(!cs.needs_reselection(&t));
        t.kill(WorkerId(3)).unwrap();
        assert!(cs.needs_reselection(&t));
        assert!(cs.region_live(&t));
    }

    #[test]
    fn three_failures_restore_to_t_min() {
        let mut t = region_topo(8);
        let mut cs = initialized(&t);
        for w in [0, 1, 2] {
            t.kill(WorkerId(w)).unwrap();
        }
        cs.monitor_round(&t, &flat).unwrap();
        let promoted = cs.select_replacements(false, None).unwrap();
        assert_eq!(promoted, ids(&[5]));
        assert_eq!(cs.alive_count(&t), 3);

        let mut t = region_topo(8);
        let mut eager = initialized(&t);
        for w in [0, 1, 2] {
            t.kill(WorkerId(w)).unwrap();
        }
        eager.monitor_round(&t, &flat).unwrap();
        assert_eq!(
            eager.select_replacements(true, None).unwrap(),
            ids(&[5, 6, 7])
        );
        assert_eq!(eager.active.len(), 5);
    }

    #[test]
    fn highest_metric_wins_then_lowest_id() {
        let t = region_topo(3);
        let mut cs = CoordinatorSet::new(RegionId(0), 1, 1);
        let conn = |w: WorkerId| Observation {
            connectivity: [0.2, 0.5, 0.9][w.index()],
            load: 0.0,
            energy: 0.0,
        };
        assert_eq!(cs.initialize(&t, &conn), ids(&[2]));
        let mut tie = CoordinatorSet::new(RegionId(0), 1, 1);
        assert_eq!(tie.initialize(&t, &flat), ids(&[0]));
    }

    #[test]
    fn no_candidates_is_insufficient() {
        let mut t = region_topo(5);
        let mut cs = initialized(&t);
        for w in [0, 1, 2] {
            t.kill(WorkerId(w)).unwrap();
        }
        cs.monitor_round(&t, &flat).unwrap();
        assert_eq!(
            cs.select_replacements(false, None),
            Err(CoordError::InsufficientCandidates { promoted: vec![] })
        );
    }

    #[test]
    fn single_promotion_caps_per_round() {
        let mut t = region_topo(8);
        let mut cs = initialized(&t);
        for w in [0, 1, 2, 3] {
            t.kill(WorkerId(w)).unwrap();
        }
        cs.monitor_round(&t, &flat).unwrap();
        assert_eq!(cs.select_replacements(false, Some(1)).unwrap(), ids(&[5]));
        cs.monitor_round(&t, &flat).unwrap();
        assert_eq!(cs.select_replacements(false, Some(1)).unwrap(), ids(&[6]));
        assert!(!cs.needs_reselection(&t));
    }

    #[test]
    fn active_stays_inside_region() {
        let cfg = HierarchyConfig {
            clusters_per_region: 2,
            ..HierarchyConfig::default()
        };
        let t = build_topology(&cfg, &AdjacencySpec::default(), 0).unwrap();
        for r in t.regions() {
            let mut cs = CoordinatorSet::new(r, cfg.k, cfg.t_min);
            cs.initialize(&t, &flat);
            assert!(cs.active.iter().all(|w| t.region_of_worker(*w) == r));
            assert!(cs.metric.keys().all(|w| t.region_of_worker(*w) == r));
        }
    }
}
