//! Infrastructure-free dissemination.
//!
//! Workers execute when targeted, report first receptions from a neighbouring
//! cluster to their leader, and relay a copy to every reachable worker only
//! when their own leader authorised it with `forward_flag`. Leaders record
//! visit/execution state and then defer a worker-level broadcast by
//! `alpha * dist + beta * local_load + U[0, epsilon)`, where `dist` is the
//! hierarchy distance to the nearest unexecuted goal.
//!
//! All functions here are pure state transitions; time and randomness are
//! passed in by the kernel.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use rand_core::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{ClusterId, MsgId, WorkerId};
use crate::messages::Message;
use crate::rng;
use crate::time::SimTime;
use crate::topology::Topology;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelayParams {
    /// Time units per hierarchy-distance unit.
    pub alpha: f64,
    /// Time units per pending broadcast at the leader.
    pub beta: f64,
    /// Upper bound of the uniform jitter.
    pub epsilon: f64,
}

impl Default for DelayParams {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 0.1,
            epsilon: 0.05,
        }
    }
}

impl DelayParams {
    /// Name of the first field that is negative or not finite.
    pub fn invalid_field(&self) -> Option<&'static str> {
        [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("epsilon", self.epsilon),
        ]
        .into_iter()
        .find(|(_, v)| !v.is_finite() || *v < 0.0)
        .map(|(name, _)| name)
    }
}

/// Routing state of one cluster's leader role.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LeaderState {
    pub cluster_id: ClusterId,
    pub processed_msgs: BTreeSet<MsgId>,
    pub pending_broadcasts: BTreeSet<(MsgId, SimTime)>,
}

impl LeaderState {
    pub fn new(cluster_id: ClusterId) -> Self {
        Self {
            cluster_id,
            ..Self::default()
        }
    }

    /// Number of broadcasts scheduled but not yet fired.
    pub fn local_load(&self) -> f64 {
        self.pending_broadcasts.len() as f64
    }

    /// Drops every pending broadcast, e.g. when the holder dies.
    pub fn cancel_pending(&mut self) -> usize {
        let n = self.pending_broadcasts.len();
        self.pending_broadcasts.clear();
        n
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum WorkerAction {
    ExecuteLocally,
    ReportToLeader,
    BroadcastToReachable,
}

/// Worker reaction to a received copy. The three rules fire independently.
/// Unknown workers yield no actions.
pub fn worker_on_receive(w: WorkerId, m: &Message, topo: &Topology) -> Vec<WorkerAction> {
    let mut actions = Vec::new();
    if !topo.has_worker(w) {
        return actions;
    }
    let own = topo.cluster_of(w);
    if m.target_worker_ids.contains(&w) {
        actions.push(WorkerAction::ExecuteLocally);
    }
    if !m.visited_cluster_ids.contains(&own) && m.last_sent_cluster_id != own {
        actions.push(WorkerAction::ReportToLeader);
    }
    if m.forward_flag && m.last_sent_cluster_id == own {
        actions.push(WorkerAction::BroadcastToReachable);
    }
    actions
}

/// Alive workers a worker reaches with one short-range broadcast: everyone in
/// its own region plus everyone in adjacent regions, excluding itself.
pub fn reachable_workers(w: WorkerId, topo: &Topology) -> Vec<WorkerId> {
    let mut out = Vec::new();
    if !topo.has_worker(w) {
        return out;
    }
    let region = topo.region_of_worker(w);
    let mut regions: Vec<_> = topo.region_neighbors(region).to_vec();
    regions.push(region);
    regions.sort_unstable();
    for r in regions {
        out.extend(
            topo.workers_in_region(r)
                .filter(|x| *x != w && topo.is_alive(*x)),
        );
    }
    out
}

/// Deferred-forwarding delay in time units.
pub fn compute_delay<R: RngCore + ?Sized>(
    dist: u8,
    local_load: f64,
    params: &DelayParams,
    rng: &mut R,
) -> f64 {
    let jitter = rng::unit_f64(rng) * params.epsilon;
    params.alpha * dist as f64 + params.beta * local_load + jitter
}

/// Workers a goal cluster delivers to: the explicit targets inside the cluster,
/// or every alive worker of the cluster when the command names no targets.
pub fn delivery_targets(m: &Message, c: ClusterId, topo: &Topology) -> Vec<WorkerId> {
    if m.target_worker_ids.is_empty() {
        topo.alive_workers_in_cluster(c).collect()
    } else {
        m.target_worker_ids
            .iter()
            .filter(|w| topo.has_worker(*w) && topo.cluster_of(*w) == c && topo.is_alive(*w))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DropReason {
    /// The copy's visited set already contains this cluster.
    Visited,
    /// This cluster already processed the message id.
    Duplicate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DeferredAction {
    Drop(DropReason),
    /// Not a goal and nothing left to forward.
    Stop,
    /// Delivered here; nothing left to forward.
    Deliver,
    Schedule {
        fire_at: SimTime,
    },
    DeliverAndSchedule {
        fire_at: SimTime,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeferredOutcome {
    pub action: DeferredAction,
    /// The copy after visit/execution bookkeeping (unchanged on drop).
    pub message: Message,
    pub deliver_to: Vec<WorkerId>,
    /// Minimum hierarchy distance to an unexecuted goal, when scheduling.
    pub dist: Option<u8>,
    pub delay: f64,
}

/// Leader processing of a received copy with deferred forwarding.
pub fn leader_on_receive_deferred<R: RngCore + ?Sized>(
    s: &mut LeaderState,
    m: &Message,
    topo: &Topology,
    params: &DelayParams,
    now: SimTime,
    rng: &mut R,
) -> DeferredOutcome {
    let c = s.cluster_id;
    let drop = |reason| DeferredOutcome {
        action: DeferredAction::Drop(reason),
        message: m.clone(),
        deliver_to: Vec::new(),
        dist: None,
        delay: 0.0,
    };
    if m.visited_cluster_ids.contains(&c) {
        return drop(DropReason::Visited);
    }
    if s.processed_msgs.contains(&m.msg_id) {
        return drop(DropReason::Duplicate);
    }
    s.processed_msgs.insert(m.msg_id);

    let mut msg = m.clone();
    msg.visited_cluster_ids.insert(c);
    let mut deliver_to = Vec::new();
    let delivered = msg.is_goal(c);
    if delivered {
        deliver_to = delivery_targets(&msg, c, topo);
        msg.executed_cluster_ids.insert(c);
    }

    let unexecuted = msg.unexecuted_goals();
    let Some(dist) = unexecuted
        .iter()
        .map(|g| topo.distance_unchecked(c, g))
        .min()
    else {
        let action = if delivered {
            DeferredAction::Deliver
        } else {
            DeferredAction::Stop
        };
        return DeferredOutcome {
            action,
            message: msg,
            deliver_to,
            dist: None,
            delay: 0.0,
        };
    };

    let delay = compute_delay(dist, s.local_load(), params, rng);
    let fire_at = now + SimTime::from_units(delay);
    s.pending_broadcasts.insert((msg.msg_id, fire_at));
    let action = if delivered {
        DeferredAction::DeliverAndSchedule { fire_at }
    } else {
        DeferredAction::Schedule { fire_at }
    };
    DeferredOutcome {
        action,
        message: msg,
        deliver_to,
        dist: Some(dist),
        delay,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum BroadcastError {
    #[error("leader died before the scheduled broadcast fired")]
    CancelledLeaderDead,
    #[error("no unexecuted goals remain at fire time")]
    Suppressed,
}

/// Fires a scheduled broadcast: the returned copy has one more hop, names this
/// cluster as last sender and authorises workers to relay it.
pub fn worker_broadcast(
    s: &mut LeaderState,
    m: &Message,
    fire_at: SimTime,
    leader_alive: bool,
) -> Result<Message, BroadcastError> {
    s.pending_broadcasts.remove(&(m.msg_id, fire_at));
    if !leader_alive {
        return Err(BroadcastError::CancelledLeaderDead);
    }
    if m.unexecuted_goals().is_empty() {
        return Err(BroadcastError::Suppressed);
    }
    Ok(m.forwarded(s.cluster_id, true))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, StreamKind};
    use crate::topology::{build_topology, AdjacencySpec, HierarchyConfig};
    use alloc::vec;

    fn topo(wpc: u32, cpr: u32, rph: u32, hpd: u32, adj: AdjacencySpec) -> Topology {
        let cfg = HierarchyConfig {
            num_layers: 5,
            workers_per_cluster: wpc,
            clusters_per_region: cpr,
            regions_per_hub: rph,
            hubs_per_domain: hpd,
            domains: 1,
            k: 1,
            t_min: 1,
        };
        build_topology(&cfg, &adj, 0).unwrap()
    }

    fn no_edges() -> AdjacencySpec {
        AdjacencySpec::Explicit(vec![])
    }

    fn cmd(origin: u32, goals: &[u32], targets: &[u32]) -> Message {
        Message::new_command(
            ClusterId(origin),
            0,
            goals.iter().copied().map(ClusterId),
            targets.iter().copied().map(WorkerId),
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn worker_rules() {
        let t = topo(2, 2, 2, 1, AdjacencySpec::default());
        // Worker 2 lives in cluster 1.
        let w = WorkerId(2);
        let mut m = cmd(0, &[1], &[2]);
        m.visited_cluster_ids.insert(ClusterId(1));
        assert_eq!(
            worker_on_receive(w, &m, &t),
            vec![WorkerAction::ExecuteLocally]
        );

        let mut m = cmd(0, &[1], &[]);
        m.last_sent_cluster_id = ClusterId(0);
        assert_eq!(
            worker_on_receive(w, &m, &t),
            vec![WorkerAction::ReportToLeader]
        );

        let mut m = cmd(0, &[3], &[]);
        m.visited_cluster_ids.insert(ClusterId(1));
        m.forward_flag = true;
        m.last_sent_cluster_id = ClusterId(1);
        assert_eq!(
            worker_on_receive(w, &m, &t),
            vec![WorkerAction::BroadcastToReachable]
        );

        // Unvisited own cluster but last sent by it: nothing to report.
        let mut m = cmd(1, &[3], &[]);
        m.last_sent_cluster_id = ClusterId(1);
        assert!(worker_on_receive(w, &m, &t).is_empty());
        assert!(worker_on_receive(WorkerId(999), &m, &t).is_empty());
    }

    #[test]
    fn reachable_sets() {
        let isolated = topo(2, 4, 2, 1, no_edges());
        assert_eq!(reachable_workers(WorkerId(0), &isolated).len(), 7);
        let pair = topo(
            2,
            4,
            2,
            1,
            AdjacencySpec::Explicit(vec![(0.into(), 1.into())]),
        );
        assert_eq!(reachable_workers(WorkerId(0), &pair).len(), 15);
        let mut dead = pair.clone();
        for w in 8..16 {
            dead.kill(WorkerId(w)).unwrap();
        }
        assert_eq!(reachable_workers(WorkerId(0), &dead).len(), 7);
    }

    #[test]
    fn delay_formula() {
        let mut r = stream(0, StreamKind::Jitter, 0);
        let zero = DelayParams {
            alpha: 0.0,
            beta: 0.0,
            epsilon: 0.0,
        };
        assert_eq!(compute_delay(0, 0.0, &zero, &mut r), 0.0);
        let p = DelayParams {
            alpha: 1.0,
            beta: 0.0,
            epsilon: 0.0,
        };
        assert_eq!(compute_delay(2, 0.0, &p, &mut r), 2.0);
        let p = DelayParams {
            alpha: 2.0,
            beta: 0.5,
            epsilon: 0.0,
        };
        assert_eq!(compute_delay(1, 4.0, &p, &mut r), 4.0);
        let p = DelayParams {
            alpha: 1.0,
            beta: 0.0,
            epsilon: 0.25,
        };
        for _ in 0..1000 {
            let d = compute_delay(1, 0.0, &p, &mut r);
            assert!((1.0..1.25).contains(&d));
        }
    }

    #[test]
    fn invalid_params_named() {
        let p = DelayParams {
            alpha: 1.0,
            beta: -0.1,
            epsilon: 0.0,
        };
        assert_eq!(p.invalid_field(), Some("beta"));
        let p = DelayParams {
            alpha: f64::INFINITY,
            beta: 0.0,
            epsilon: 0.0,
        };
        assert_eq!(p.invalid_field(), Some("alpha"));
        assert_eq!(DelayParams::default().invalid_field(), None);
    }

    #[test]
    fn leader_drops_visited_and_duplicates() {
        let t = topo(2, 2, 2, 1, AdjacencySpec::default());
        let mut r = stream(0, StreamKind::Jitter, 0);
        let mut s = LeaderState::new(ClusterId(1));
        let mut m = cmd(0, &[3], &[]);
        m.visited_cluster_ids.insert(ClusterId(1));
        let out = leader_on_receive_deferred(
            &mut s,
            &m,
            &t,
            &DelayParams::default(),
            SimTime::ZERO,
            &mut r,
        );
        assert_eq!(out.action, DeferredAction::Drop(DropReason::Visited));

        let m = cmd(0, &[3], &[]);
        let p = DelayParams::default();
        let first = leader_on_receive_deferred(&mut s, &m, &t, &p, SimTime::ZERO, &mut r);
        assert!(matches!(first.action, DeferredAction::Schedule { .. }));
        let again = leader_on_receive_deferred(&mut s, &m, &t, &p, SimTime::ZERO, &mut r);
        assert_eq!(again.action, DeferredAction::Drop(DropReason::Duplicate));
    }

    #[test]
    fn last_goal_delivers_then_stops() {
        let t = topo(2, 2, 2, 1, AdjacencySpec::default());
        let mut r = stream(0, StreamKind::Jitter, 0);
        let mut s = LeaderState::new(ClusterId(2));
        let mut m = cmd(0, &[0, 2], &[]);
        m.visited_cluster_ids.insert(ClusterId(0));
        m.executed_cluster_ids.insert(ClusterId(0));
        let out = leader_on_receive_deferred(
            &mut s,
            &m,
            &t,
            &DelayParams::default(),
            SimTime::ZERO,
            &mut r,
        );
        assert_eq!(out.action, DeferredAction::Deliver);
        assert_eq!(out.deliver_to, vec![WorkerId(4), WorkerId(5)]);
        assert!(out.message.executed_cluster_ids.contains(&ClusterId(2)));
        assert!(s.pending_broadcasts.is_empty());
    }

    #[test]
    fn non_goal_schedules_at_distance() {
        // Clusters 0,1 in region 0; 2,3 in region 1; same hub -> distance 2.
        let t = topo(2, 2, 2, 1, AdjacencySpec::default());
        let mut r = stream(0, StreamKind::Jitter, 0);
        let mut s = LeaderState::new(ClusterId(0));
        let p = DelayParams {
            alpha: 1.0,
            beta: 0.0,
            epsilon: 0.0,
        };
        let now = SimTime::from_units(3.0);
        let out = leader_on_receive_deferred(&mut s, &cmd(0, &[2], &[]), &t, &p, now, &mut r);
        assert_eq!(
            out.action,
            DeferredAction::Schedule {
                fire_at: SimTime::from_units(5.0)
            }
        );
        assert_eq!(out.dist, Some(2));
        assert_eq!(s.local_load(), 1.0);
    }

    #[test]
    fn load_feeds_delay() {
        let t = topo(1, 2, 1, 1, no_edges());
        let mut r = stream(0, StreamKind::Jitter, 0);
        let p = DelayParams {
            alpha: 2.0,
            beta: 0.5,
            epsilon: 0.0,
        };
        let mut s = LeaderState::new(ClusterId(0));
        for seq in 0..4 {
            let mut m = cmd(0, &[1], &[]);
            m.msg_id.seq = seq;
            leader_on_receive_deferred(&mut s, &m, &t, &p, SimTime::ZERO, &mut r);
        }
        let mut m = cmd(0, &[1], &[]);
        m.msg_id.seq = 9;
        let out = leader_on_receive_deferred(&mut s, &m, &t, &p, SimTime::ZERO, &mut r);
        assert_eq!(out.delay, 4.0);
    }

    #[test]
    fn broadcast_copy() {
        let mut s = LeaderState::new(ClusterId(4));
        let mut m = cmd(0, &[1], &[]);
        m.hop_count = 3;
        let at = SimTime::from_units(1.0);
        s.pending_broadcasts.insert((m.msg_id, at));
        let b = worker_broadcast(&mut s, &m, at, true).unwrap();
        assert_eq!(b.hop_count, 4);
        assert_eq!(b.last_sent_cluster_id, ClusterId(4));
        assert!(b.forward_flag);
        assert_eq!(s.local_load(), 0.0);

        s.pending_broadcasts.insert((m.msg_id, at));
        assert_eq!(
            worker_broadcast(&mut s, &m, at, false),
            Err(BroadcastError::CancelledLeaderDead)
        );
        assert_eq!(s.local_load(), 0.0);

        let mut done = cmd(0, &[1], &[]);
        done.executed_cluster_ids.insert(ClusterId(1));
        assert_eq!(
            worker_broadcast(&mut s, &done, at, true),
            Err(BroadcastError::Suppressed)
        );
    }

    #[test]
    fn closer_leader_fires_no_later() {
        // beta = epsilon = 0: delay is monotone in distance.
        let p = DelayParams {
            alpha: 0.7,
            beta: 0.0,
            epsilon: 0.0,
        };
        let mut r = stream(0, StreamKind::Jitter, 0);
        for near in 0..=4u8 {
            for far in near..=4u8 {
                let a = compute_delay(near, 3.0, &p, &mut r);
                let b = compute_delay(far, 0.0, &p, &mut r);
                assert!(SimTime::from_units(a) <= SimTime::from_units(b));
            }
        }
    }
}
