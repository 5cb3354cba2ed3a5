//! Deterministic discrete-event kernel.
//!
//! Events dequeue in `(time, seq)` order, `seq` being the insertion counter.
//! All maintenance rounds are enqueued first, then failures, then commands,
//! so at equal times a round runs before a failure and a failure before a
//! command. Events addressed to a worker carry the worker's epoch; a worker's
//! epoch changes whenever it dies or recovers, which tombstones whatever was
//! in flight towards it.

mod scenario;

pub use scenario::{
    Command, CoordinatorParams, FailureAction, FailureEvent, LinkLatencies, RoutingParams,
    Scenario, ScenarioError, Strategy,
};

use alloc::collections::{BTreeMap, BinaryHeap};
use alloc::rc::Rc;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::{Ordering, Reverse};

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adjacent::{
    self, leader_on_receive_deferred, worker_broadcast, BroadcastError, DeferredAction, DropReason,
    LeaderState, WorkerAction,
};
use crate::coordinators::{CoordError, CoordinatorSet, Observation};
use crate::hier::{self, Hop, ImmediateAction, RelayState, TreeLinks, TreeNode};
use crate::ids::{ClusterId, MsgId, RegionId, WorkerId};
use crate::messages::Message;
use crate::metrics::{self, MetricsReport};
use crate::rng::{self, StreamKind};
use crate::time::SimTime;
use crate::topology::{Role, Topology};
use crate::trace::{Component, EventName, LinkClass, Reason, TraceLog, TraceRecord};

/// Upper bound on pre-scheduled maintenance rounds.
pub const MAX_ROUNDS: u64 = 1_000_000;

/// Fate of every message copy the kernel created. A copy is one scheduled
/// transmission or one scheduled broadcast.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Accounting {
    pub created: u64,
    /// Reached a live receiver and was processed (including protocol drops).
    pub handled: u64,
    pub jammed: u64,
    /// Receiver died or recovered while the copy was in flight.
    pub tombstoned: u64,
    /// Broadcast whose leader died before it fired.
    pub cancelled: u64,
    pub suppressed: u64,
    /// Parked for lack of a role holder and later sent on.
    pub rerouted: u64,
    pub route_failed: u64,
    /// Still parked at the end of the run.
    pub parked: u64,
    /// Still queued when the run stopped.
    pub in_flight: u64,
}

impl Accounting {
    pub fn accounted(&self) -> u64 {
        self.handled
            + self.jammed
            + self.tombstoned
            + self.cancelled
            + self.suppressed
            + self.rerouted
            + self.route_failed
            + self.parked
            + self.in_flight
    }

    pub fn balanced(&self) -> bool {
        self.created == self.accounted()
    }
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub trace: Vec<TraceRecord>,
    pub report: MetricsReport,
    pub accounting: Accounting,
    /// Liveness of each region's coordinator set at the end of the run.
    pub region_live: Vec<bool>,
    /// Topology state at the end of the run.
    pub topology: Topology,
}

/// Runs a scenario to its horizon (or until the queue drains).
pub fn run(sc: &Scenario) -> Result<RunOutput, ScenarioError> {
    let topo = sc.validate()?;
    let rounds = libm::floor(sc.horizon / sc.coordinator.round_period) as u64 + 1;
    if rounds > MAX_ROUNDS {
        return Err(ScenarioError::invalid(
            "coordinator.round_period",
            "too many maintenance rounds before the horizon",
        ));
    }
    let mut k = Kernel::new(sc, topo);
    k.schedule_initial(rounds);
    k.run_loop();
    Ok(k.finish())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum CopyKind {
    /// Leader delivery: the worker executes on receipt.
    Execute,
    /// Worker-level broadcast or relay, handled by the worker rules.
    Relay,
}

#[derive(Clone, Debug)]
enum Ev {
    Maintenance {
        round: u64,
    },
    Failure(usize),
    Command(usize),
    ToWorker {
        w: WorkerId,
        epoch: u32,
        msg: Rc<Message>,
        kind: CopyKind,
    },
    ToLeader {
        c: ClusterId,
        holder: WorkerId,
        epoch: u32,
        msg: Rc<Message>,
    },
    ToNode {
        node: TreeNode,
        from: Option<TreeNode>,
        holder: WorkerId,
        epoch: u32,
        msg: Rc<Message>,
    },
    Broadcast {
        c: ClusterId,
        holder: WorkerId,
        epoch: u32,
        fire_at: SimTime,
        msg: Rc<Message>,
    },
}

impl Ev {
    fn is_copy(&self) -> bool {
        !matches!(
            self,
            Ev::Maintenance { .. } | Ev::Failure(_) | Ev::Command(_)
        )
    }
}

struct Queued {
    time: SimTime,
    seq: u64,
    ev: Ev,
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        (self.time, self.seq) == (other.time, other.seq)
    }
}

impl Eq for Queued {}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Queued {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.time, self.seq).cmp(&(other.time, other.seq))
    }
}

struct Parked {
    node: TreeNode,
    from: TreeNode,
    msg: Rc<Message>,
    retries: u32,
}

const SEEN_EXECUTED: u8 = 1;
const SEEN_REPORTED: u8 = 2;
const SEEN_RELAYED: u8 = 4;

struct Kernel<'a> {
    sc: &'a Scenario,
    topo: Topology,
    links: TreeLinks,
    leaders: Vec<LeaderState>,
    relays: BTreeMap<TreeNode, RelayState>,
    coords: Vec<CoordinatorSet>,
    epochs: Vec<u32>,
    energy: Vec<f64>,
    jam: [f64; 4],
    jitter_rngs: Vec<ChaCha8Rng>,
    jam_rngs: Vec<ChaCha8Rng>,
    /// Per message, per worker: which one-shot worker actions already ran.
    seen: BTreeMap<MsgId, Vec<u8>>,
    next_msg_seq: BTreeMap<ClusterId, u32>,
    parked: Vec<Parked>,
    queue: BinaryHeap<Reverse<Queued>>,
    next_seq: u64,
    now: SimTime,
    trace: TraceLog,
    acct: Accounting,
}

impl<'a> Kernel<'a> {
    fn new(sc: &'a Scenario, topo: Topology) -> Self {
        let regions = topo.num_regions() as u64;
        let workers = topo.num_workers() as usize;
        Self {
            sc,
            links: TreeLinks::new(&topo),
            leaders: topo.clusters().map(LeaderState::new).collect(),
            relays: BTreeMap::new(),
            coords: topo
                .regions()
                .map(|r| CoordinatorSet::new(r, sc.config.k, sc.config.t_min))
                .collect(),
            epochs: vec![0; workers],
            energy: vec![1.0; workers],
            jam: [0.0; 4],
            jitter_rngs: (0..regions)
                .map(|r| rng::stream(sc.seed, StreamKind::Jitter, r))
                .collect(),
            jam_rngs: (0..regions)
                .map(|r| rng::stream(sc.seed, StreamKind::Jam, r))
                .collect(),
            seen: BTreeMap::new(),
            next_msg_seq: BTreeMap::new(),
            parked: Vec::new(),
            queue: BinaryHeap::new(),
            next_seq: 0,
            now: SimTime::ZERO,
            trace: TraceLog::new(),
            acct: Accounting::default(),
            topo,
        }
    }

    fn push(&mut self, time: SimTime, ev: Ev) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Reverse(Queued { time, seq, ev }));
    }

    fn schedule_initial(&mut self, rounds: u64) {
        let period = self.sc.coordinator.round_period;
        for round in 0..rounds {
            self.push(
                SimTime::from_units(round as f64 * period),
                Ev::Maintenance { round },
            );
        }
        for (i, f) in self.sc.failures.iter().enumerate() {
            self.push(SimTime::from_units(f.time), Ev::Failure(i));
        }
        for (i, c) in self.sc.commands.iter().enumerate() {
            self.push(SimTime::from_units(c.time), Ev::Command(i));
        }
    }

    fn run_loop(&mut self) {
        let horizon = SimTime::from_units(self.sc.horizon);
        while let Some(Reverse(q)) = self.queue.pop() {
            if q.time > horizon {
                self.queue.push(Reverse(q));
                break;
            }
            self.now = q.time;
            self.handle(q.ev);
        }
    }

    fn finish(mut self) -> RunOutput {
        self.acct.in_flight = self.queue.iter().filter(|q| q.0.ev.is_copy()).count() as u64;
        self.acct.parked = self.parked.len() as u64;
        let region_live = self
            .coords
            .iter()
            .map(|cs| cs.region_live(&self.topo))
            .collect();
        let trace = self.trace.into_records();
        RunOutput {
            report: metrics::report(&trace),
            trace,
            accounting: self.acct,
            region_live,
            topology: self.topo,
        }
    }

    fn record(&mut self, component: Component, event: EventName) -> &mut TraceRecord {
        self.trace.push(self.now, component, event)
    }

    fn handle(&mut self, ev: Ev) {
        match ev {
            Ev::Maintenance { round } => self.maintenance(round),
            Ev::Failure(i) => self.failure(i),
            Ev::Command(i) => self.command(i),
            Ev::ToWorker {
                w,
                epoch,
                msg,
                kind,
            } => {
                if self.reachable(w, epoch) {
                    self.acct.handled += 1;
                    self.worker_receive(w, &msg, kind);
                } else {
                    self.acct.tombstoned += 1;
                }
            }
            Ev::ToLeader {
                c,
                holder,
                epoch,
                msg,
            } => {
                if self.reachable(holder, epoch) && self.topo.leader_of(c) == Some(holder) {
                    self.acct.handled += 1;
                    self.leader_deferred(c, holder, &msg);
                } else {
                    self.acct.tombstoned += 1;
                }
            }
            Ev::ToNode {
                node,
                from,
                holder,
                epoch,
                msg,
            } => {
                if self.reachable(holder, epoch)
                    && self.links.holder(&self.topo, node) == Some(holder)
                {
                    self.acct.handled += 1;
                    match node {
                        TreeNode::Cluster(c) => self.leader_immediate(c, holder, &msg, from),
                        _ => self.relay_immediate(node, holder, &msg, from),
                    }
                } else {
                    self.acct.tombstoned += 1;
                }
            }
            Ev::Broadcast {
                c,
                holder,
                epoch,
                fire_at,
                msg,
            } => self.broadcast(c, holder, epoch, fire_at, &msg),
        }
    }

    fn reachable(&self, w: WorkerId, epoch: u32) -> bool {
        self.topo.is_alive(w) && self.epochs[w.index()] == epoch
    }

    fn link_class(&self, a: WorkerId, b: WorkerId) -> LinkClass {
        let (ca, cb) = (self.topo.cluster_of(a), self.topo.cluster_of(b));
        if ca == cb {
            LinkClass::IntraCluster
        } else if self.topo.region_of(ca) == self.topo.region_of(cb) {
            LinkClass::IntraRegion
        } else {
            LinkClass::Adjacent
        }
    }

    /// Creates one copy on `class`, applying jamming at the sender. Returns
    /// false if the copy was lost.
    fn transmit(
        &mut self,
        class: LinkClass,
        latency: f64,
        sender_region: RegionId,
        msg: MsgId,
        ev: Ev,
    ) -> bool {
        self.acct.created += 1;
        let drop = self.jam[class.index()];
        if drop > 0.0 && rng::unit_f64(&mut self.jam_rngs[sender_region.index()]) < drop {
            self.acct.jammed += 1;
            let r = self.record(Component::Kernel, EventName::Jammed);
            r.region = Some(sender_region);
            r.msg = Some(msg);
            r.aux.link_class = Some(class);
            return false;
        }
        let at = self.now + SimTime::from_units(latency);
        self.push(at, ev);
        true
    }

    fn send_to_worker(&mut self, from: WorkerId, to: WorkerId, msg: &Rc<Message>, kind: CopyKind) {
        let class = self.link_class(from, to);
        let ev = Ev::ToWorker {
            w: to,
            epoch: self.epochs[to.index()],
            msg: msg.clone(),
            kind,
        };
        let region = self.topo.region_of_worker(from);
        self.transmit(class, self.sc.latencies.of(class), region, msg.msg_id, ev);
    }

    fn seen_flag(&mut self, msg: MsgId, w: WorkerId, flag: u8) -> bool {
        let n = self.topo.num_workers() as usize;
        let flags = self.seen.entry(msg).or_insert_with(|| vec![0; n]);
        let was = flags[w.index()] & flag != 0;
        flags[w.index()] |= flag;
        was
    }

    // ---- commands and workers ----

    fn command(&mut self, i: usize) {
        let cmd = &self.sc.commands[i];
        let goals = self
            .topo
            .goal_clusters_for_scope(cmd.scope)
            .expect("validated scope");
        let seq = self.next_msg_seq.entry(cmd.origin).or_insert(0);
        let msg = Message::new_command(
            cmd.origin,
            *seq,
            goals.iter().copied(),
            cmd.targets.iter().copied(),
            cmd.payload.clone(),
        )
        .expect("scopes are non-empty");
        *seq += 1;
        let origin = cmd.origin;
        let region = self.topo.region_of(origin);
        let holder = self.topo.leader_of(origin);
        let r = self.record(Component::Kernel, EventName::Command);
        r.cluster = Some(origin);
        r.region = Some(region);
        r.msg = Some(msg.msg_id);
        r.hop = Some(0);
        r.worker = holder;
        r.aux.goals = Some(goals.len() as u32);
        let Some(holder) = holder else {
            let r = self.record(Component::Kernel, EventName::NoLeader);
            r.cluster = Some(origin);
            r.region = Some(region);
            r.msg = Some(msg.msg_id);
            return;
        };
        match self.sc.strategy {
            Strategy::Adjacent => self.leader_deferred(origin, holder, &msg),
            Strategy::Hierarchical => self.leader_immediate(origin, holder, &msg, None),
        }
    }

    fn execute(&mut self, w: WorkerId, msg: &Message) {
        if self.seen_flag(msg.msg_id, w, SEEN_EXECUTED) {
            return;
        }
        let c = self.topo.cluster_of(w);
        let region = self.topo.region_of(c);
        let r = self.record(Component::Alg1, EventName::Execute);
        r.worker = Some(w);
        r.cluster = Some(c);
        r.region = Some(region);
        r.msg = Some(msg.msg_id);
        r.hop = Some(msg.hop_count);
    }

    fn worker_receive(&mut self, w: WorkerId, msg: &Rc<Message>, kind: CopyKind) {
        if kind == CopyKind::Execute {
            self.execute(w, msg);
            return;
        }
        for action in adjacent::worker_on_receive(w, msg, &self.topo) {
            match action {
                WorkerAction::ExecuteLocally => self.execute(w, msg),
                WorkerAction::ReportToLeader => self.report(w, msg),
                WorkerAction::BroadcastToReachable => self.relay(w, msg),
            }
        }
    }

    fn report(&mut self, w: WorkerId, msg: &Rc<Message>) {
        if self.seen_flag(msg.msg_id, w, SEEN_REPORTED) {
            return;
        }
        let c = self.topo.cluster_of(w);
        let region = self.topo.region_of(c);
        let holder = self.topo.leader_of(c);
        let peer = self.topo.region_of(msg.last_sent_cluster_id);
        let r = self.record(Component::Alg1, EventName::Report);
        r.worker = Some(w);
        r.cluster = Some(c);
        r.region = Some(region);
        r.peer_region = Some(peer);
        r.msg = Some(msg.msg_id);
        r.hop = Some(msg.hop_count);
        r.aux.to = holder;
        let Some(holder) = holder else {
            let r = self.record(Component::Kernel, EventName::NoLeader);
            r.cluster = Some(c);
            r.region = Some(region);
            r.msg = Some(msg.msg_id);
            return;
        };
        let class = self.link_class(w, holder);
        let ev = Ev::ToLeader {
            c,
            holder,
            epoch: self.epochs[holder.index()],
            msg: msg.clone(),
        };
        self.transmit(class, self.sc.latencies.of(class), region, msg.msg_id, ev);
    }

    fn relay(&mut self, w: WorkerId, msg: &Rc<Message>) {
        if self.seen_flag(msg.msg_id, w, SEEN_RELAYED) {
            return;
        }
        let targets = adjacent::reachable_workers(w, &self.topo);
        let c = self.topo.cluster_of(w);
        let region = self.topo.region_of(c);
        let r = self.record(Component::Alg1, EventName::Relay);
        r.worker = Some(w);
        r.cluster = Some(c);
        r.region = Some(region);
        r.msg = Some(msg.msg_id);
        r.hop = Some(msg.hop_count);
        r.aux.count = Some(targets.len() as u64);
        for t in targets {
            self.send_to_worker(w, t, msg, CopyKind::Relay);
        }
    }

    fn deliver_to(&mut self, holder: WorkerId, targets: &[WorkerId], msg: &Rc<Message>) {
        for &t in targets {
            self.send_to_worker(holder, t, msg, CopyKind::Execute);
        }
    }

    // ---- deferred routing ----

    fn leader_deferred(&mut self, c: ClusterId, holder: WorkerId, msg: &Message) {
        let region = self.topo.region_of(c);
        let out = leader_on_receive_deferred(
            &mut self.leaders[c.index()],
            msg,
            &self.topo,
            &self.sc.delays,
            self.now,
            &mut self.jitter_rngs[region.index()],
        );
        let peer = self.topo.region_of(msg.last_sent_cluster_id);
        let base = |r: &mut TraceRecord| {
            r.cluster = Some(c);
            r.region = Some(region);
            r.worker = Some(holder);
            r.msg = Some(msg.msg_id);
            r.hop = Some(msg.hop_count);
        };
        if let DeferredAction::Drop(reason) = out.action {
            let r = self.record(Component::Alg2, EventName::Drop);
            base(r);
            r.peer_region = Some(peer);
            r.aux.reason = Some(drop_reason(reason));
            return;
        }
        let r = self.record(Component::Alg2, EventName::Receive);
        base(r);
        r.peer_region = Some(peer);
        let message = Rc::new(out.message);
        if matches!(
            out.action,
            DeferredAction::Deliver | DeferredAction::DeliverAndSchedule { .. }
        ) {
            let r = self.record(Component::Alg2, EventName::Deliver);
            base(r);
            r.aux.count = Some(out.deliver_to.len() as u64);
            self.deliver_to(holder, &out.deliver_to, &message);
        }
        match out.action {
            DeferredAction::Schedule { fire_at }
            | DeferredAction::DeliverAndSchedule { fire_at } => {
                let r = self.record(Component::Alg2, EventName::Schedule);
                base(r);
                r.aux.fire_at = Some(fire_at);
                r.aux.dist = out.dist;
                self.acct.created += 1;
                let ev = Ev::Broadcast {
                    c,
                    holder,
                    epoch: self.epochs[holder.index()],
                    fire_at,
                    msg: message,
                };
                self.push(fire_at, ev);
            }
            DeferredAction::Stop => {
                base(self.record(Component::Alg2, EventName::Stop));
            }
            _ => {}
        }
    }

    fn broadcast(
        &mut self,
        c: ClusterId,
        holder: WorkerId,
        epoch: u32,
        fire_at: SimTime,
        msg: &Message,
    ) {
        let alive = self.reachable(holder, epoch) && self.topo.leader_of(c) == Some(holder);
        let result = worker_broadcast(&mut self.leaders[c.index()], msg, fire_at, alive);
        let region = self.topo.region_of(c);
        let (event, reason) = match &result {
            Ok(_) => (EventName::Broadcast, None),
            Err(BroadcastError::CancelledLeaderDead) => {
                (EventName::Cancelled, Some(Reason::LeaderDead))
            }
            Err(BroadcastError::Suppressed) => (EventName::Suppressed, Some(Reason::NoGoals)),
        };
        match &result {
            Ok(_) => self.acct.handled += 1,
            Err(BroadcastError::CancelledLeaderDead) => self.acct.cancelled += 1,
            Err(BroadcastError::Suppressed) => self.acct.suppressed += 1,
        }
        let receivers: Vec<WorkerId> = match &result {
            Ok(_) => self.topo.alive_workers_in_cluster(c).collect(),
            Err(_) => Vec::new(),
        };
        let r = self.record(Component::Alg2, event);
        r.cluster = Some(c);
        r.region = Some(region);
        r.worker = Some(holder);
        r.msg = Some(msg.msg_id);
        r.aux.reason = reason;
        match result {
            Ok(copy) => {
                r.hop = Some(copy.hop_count);
                r.aux.flag = Some(copy.forward_flag);
                r.aux.count = Some(receivers.len() as u64);
                let copy = Rc::new(copy);
                for w in receivers {
                    self.send_to_worker(holder, w, &copy, CopyKind::Relay);
                }
            }
            Err(_) => r.hop = Some(msg.hop_count),
        }
    }

    // ---- immediate (tree) routing ----

    fn leader_immediate(
        &mut self,
        c: ClusterId,
        holder: WorkerId,
        msg: &Message,
        from: Option<TreeNode>,
    ) {
        let region = self.topo.region_of(c);
        let out = hier::leader_on_receive_immediate(
            &mut self.leaders[c.index()],
            msg,
            &self.topo,
            &self.links,
            from,
            self.sc.routing.mode,
        );
        let peer = self.topo.region_of(msg.last_sent_cluster_id);
        let base = |r: &mut TraceRecord| {
            r.cluster = Some(c);
            r.region = Some(region);
            r.worker = Some(holder);
            r.msg = Some(msg.msg_id);
            r.hop = Some(msg.hop_count);
        };
        if let ImmediateAction::Drop(reason) = out.action {
            let r = self.record(Component::Alg3, EventName::Drop);
            base(r);
            r.peer_region = Some(peer);
            r.aux.reason = Some(drop_reason(reason));
            return;
        }
        let r = self.record(Component::Alg3, EventName::Receive);
        base(r);
        r.peer_region = Some(peer);
        r.aux.node = from;
        if out.delivered {
            let r = self.record(Component::Alg3, EventName::Deliver);
            base(r);
            r.aux.count = Some(out.deliver_to.len() as u64);
            let message = Rc::new(out.message.clone());
            self.deliver_to(holder, &out.deliver_to, &message);
        }
        if out.action == ImmediateAction::Stop {
            base(self.record(Component::Alg3, EventName::Stop));
        }
        self.dispatch_hops(TreeNode::Cluster(c), holder, out.hops);
    }

    fn relay_immediate(
        &mut self,
        node: TreeNode,
        holder: WorkerId,
        msg: &Message,
        from: Option<TreeNode>,
    ) {
        let hops = hier::relay_on_receive(
            self.relays.entry(node).or_default(),
            node,
            msg,
            &self.topo,
            &self.links,
            from,
            self.sc.routing.mode,
        );
        let region = self.topo.region_of_worker(holder);
        let event = if hops.is_some() {
            EventName::Relay
        } else {
            EventName::Drop
        };
        let r = self.record(Component::Alg3, event);
        r.worker = Some(holder);
        r.region = Some(region);
        r.msg = Some(msg.msg_id);
        r.hop = Some(msg.hop_count);
        r.aux.node = Some(node);
        if hops.is_none() {
            r.aux.reason = Some(Reason::Duplicate);
        }
        if let Some(hops) = hops {
            self.dispatch_hops(node, holder, hops);
        }
    }

    fn dispatch_hops(&mut self, at: TreeNode, at_holder: WorkerId, hops: Vec<Hop>) {
        let region = self.topo.region_of_worker(at_holder);
        for h in hops {
            let msg = Rc::new(h.message);
            let Some(to_holder) = h.holder else {
                self.acct.created += 1;
                let r = self.record(Component::Alg3, EventName::NoRoute);
                r.worker = Some(at_holder);
                r.region = Some(region);
                r.msg = Some(msg.msg_id);
                r.hop = Some(msg.hop_count);
                r.aux.node = Some(at);
                r.aux.next = Some(h.to);
                self.parked.push(Parked {
                    node: h.to,
                    from: at,
                    msg,
                    retries: 0,
                });
                continue;
            };
            let internal = to_holder == at_holder;
            let r = self.record(Component::Alg3, EventName::Forward);
            r.worker = Some(at_holder);
            r.region = Some(region);
            r.msg = Some(msg.msg_id);
            r.hop = Some(msg.hop_count);
            r.aux.node = Some(at);
            r.aux.next = Some(h.to);
            r.aux.to = Some(to_holder);
            r.aux.internal = Some(internal);
            r.aux.flag = Some(msg.forward_flag);
            let ev = Ev::ToNode {
                node: h.to,
                from: Some(at),
                holder: to_holder,
                epoch: self.epochs[to_holder.index()],
                msg: msg.clone(),
            };
            if internal {
                self.acct.created += 1;
                self.push(self.now, ev);
            } else {
                let level = self.links.level(at).max(self.links.level(h.to));
                let latency = self.sc.latencies.tree_edge(level);
                self.transmit(LinkClass::Tree, latency, region, msg.msg_id, ev);
            }
        }
    }

    fn retry_parked(&mut self) {
        let parked = core::mem::take(&mut self.parked);
        for mut p in parked {
            p.retries += 1;
            match self.links.holder(&self.topo, p.node) {
                Some(holder) => {
                    self.acct.rerouted += 1;
                    let region = self.topo.region_of_worker(holder);
                    let r = self.record(Component::Alg3, EventName::Retry);
                    r.worker = Some(holder);
                    r.region = Some(region);
                    r.msg = Some(p.msg.msg_id);
                    r.hop = Some(p.msg.hop_count);
                    r.aux.node = Some(p.from);
                    r.aux.next = Some(p.node);
                    r.aux.retries = Some(p.retries);
                    let level = self.links.level(p.from).max(self.links.level(p.node));
                    let latency = self.sc.latencies.tree_edge(level);
                    let ev = Ev::ToNode {
                        node: p.node,
                        from: Some(p.from),
                        holder,
                        epoch: self.epochs[holder.index()],
                        msg: p.msg.clone(),
                    };
                    self.transmit(LinkClass::Tree, latency, region, p.msg.msg_id, ev);
                }
                None if p.retries >= self.sc.routing.max_retries => {
                    self.acct.route_failed += 1;
                    let r = self.record(Component::Alg3, EventName::RouteFailed);
                    r.msg = Some(p.msg.msg_id);
                    r.hop = Some(p.msg.hop_count);
                    r.aux.node = Some(p.from);
                    r.aux.next = Some(p.node);
                    r.aux.retries = Some(p.retries);
                }
                None => self.parked.push(p),
            }
        }
    }

    // ---- failures ----

    fn coordinator_status(&self, w: WorkerId) -> (bool, u32) {
        let cs = &self.coords[self.topo.region_of_worker(w).index()];
        (cs.active.contains(&w), cs.alive_count(&self.topo))
    }

    fn kill(&mut self, w: WorkerId) {
        if !self.topo.is_alive(w) {
            return;
        }
        self.epochs[w.index()] += 1;
        let vacated = self.topo.kill(w).expect("validated worker");
        for role in vacated {
            if let Role::Leader(c) = role {
                self.leaders[c.index()].cancel_pending();
            }
        }
        let (coordinator, alive) = self.coordinator_status(w);
        let c = self.topo.cluster_of(w);
        let region = self.topo.region_of(c);
        let r = self.record(Component::Kernel, EventName::WorkerFailed);
        r.worker = Some(w);
        r.cluster = Some(c);
        r.region = Some(region);
        r.aux.coordinator = Some(coordinator);
        if coordinator {
            r.aux.alive = Some(alive);
        }
    }

    fn recover(&mut self, w: WorkerId) {
        if self.topo.is_alive(w) {
            return;
        }
        self.epochs[w.index()] += 1;
        self.topo.revive(w).expect("validated worker");
        let (coordinator, alive) = self.coordinator_status(w);
        let c = self.topo.cluster_of(w);
        let region = self.topo.region_of(c);
        let r = self.record(Component::Kernel, EventName::WorkerRecovered);
        r.worker = Some(w);
        r.cluster = Some(c);
        r.region = Some(region);
        r.aux.coordinator = Some(coordinator);
        if coordinator {
            r.aux.alive = Some(alive);
        }
    }

    fn failure(&mut self, i: usize) {
        let action = self.sc.failures[i].action.clone();
        match action {
            FailureAction::Fail {
                worker: Some(w), ..
            } => self.kill(w),
            FailureAction::Fail {
                region: Some(region),
                ..
            } => {
                self.record(Component::Kernel, EventName::RegionFailed)
                    .region = Some(region);
                let workers: Vec<WorkerId> = self.topo.workers_in_region(region).collect();
                for w in workers {
                    self.kill(w);
                }
            }
            FailureAction::Recover {
                worker: Some(w), ..
            } => self.recover(w),
            FailureAction::Recover {
                region: Some(region),
                ..
            } => {
                let workers: Vec<WorkerId> = self.topo.workers_in_region(region).collect();
                for w in workers {
                    self.recover(w);
                }
            }
            FailureAction::Fail { .. } | FailureAction::Recover { .. } => {
                unreachable!("validated to name a worker or a region")
            }
            FailureAction::Jam { link_class, drop } => {
                self.jam[link_class.index()] = drop;
                let r = self.record(Component::Kernel, EventName::Jam);
                r.aux.link_class = Some(link_class);
                r.aux.drop = Some(drop);
            }
            FailureAction::Unjam { link_class } => {
                self.jam[link_class.index()] = 0.0;
                self.record(Component::Kernel, EventName::Unjam)
                    .aux
                    .link_class = Some(link_class);
            }
            FailureAction::LinkDown { regions: [a, b] } => {
                self.topo.unlink_regions(a, b).expect("validated regions");
                let r = self.record(Component::Kernel, EventName::LinkDown);
                r.region = Some(a);
                r.peer_region = Some(b);
            }
            FailureAction::LinkUp { regions: [a, b] } => {
                self.topo.link_regions(a, b).expect("validated regions");
                let r = self.record(Component::Kernel, EventName::LinkUp);
                r.region = Some(a);
                r.peer_region = Some(b);
            }
            FailureAction::SetEnergy { worker, value } => {
                self.energy[worker.index()] = value;
                let region = self.topo.region_of_worker(worker);
                let r = self.record(Component::Kernel, EventName::SetEnergy);
                r.worker = Some(worker);
                r.region = Some(region);
                r.aux.value = Some(value);
            }
        }
    }

    // ---- coordinator maintenance ----

    fn maintenance(&mut self, round: u64) {
        let mut elected = false;
        for r in self.topo.regions().collect::<Vec<_>>() {
            elected |= self.maintain_region(r, round);
        }
        // Roles spanning several regions are re-elected after every region
        // has settled, so the outcome does not depend on region order.
        for role in self.topo.vacant_roles() {
            if role.layer() < 4 {
                continue;
            }
            if let Ok(w) = self.topo.reelect(role) {
                elected = true;
                let region = self.topo.region_of_worker(w);
                let r = self.record(Component::Kernel, EventName::RoleElected);
                r.worker = Some(w);
                r.region = Some(region);
                r.aux.role = Some(role);
            }
        }
        if elected && !self.parked.is_empty() {
            self.retry_parked();
        }
    }

    fn observation(&self, w: WorkerId, max_load: f64) -> Observation {
        let c = self.topo.cluster_of(w);
        let peers = self.topo.config.workers_per_cluster.saturating_sub(1);
        let connectivity = if peers == 0 {
            1.0
        } else {
            let alive = self
                .topo
                .alive_workers_in_cluster(c)
                .filter(|x| *x != w)
                .count();
            alive as f64 / peers as f64
        };
        let load = if self.topo.leader_of(c) == Some(w) && max_load > 0.0 {
            self.leaders[c.index()].local_load() / max_load
        } else {
            0.0
        };
        Observation {
            connectivity,
            load,
            energy: self.energy[w.index()].clamp(0.0, 1.0),
        }
    }

    /// One maintenance round for region `r`. Returns whether a role was
    /// re-elected.
    fn maintain_region(&mut self, r: RegionId, round: u64) -> bool {
        let max_load = self
            .topo
            .clusters_in_region(r)
            .map(|c| self.leaders[c.index()].local_load())
            .fold(0.0, f64::max);
        let mut cs = core::mem::replace(&mut self.coords[r.index()], CoordinatorSet::new(r, 0, 0));
        let observe = |w: WorkerId| self.observation(w, max_load);
        let before = cs.active.len() as u32;
        let mut removed = Vec::new();
        let mut promoted = Vec::new();
        let (mut probes, mut evaluations) = (0, 0);
        let mut degraded = false;
        if round == 0 {
            promoted = cs.initialize(&self.topo, &observe);
        } else if let Ok(report) = cs.monitor_round(&self.topo, &observe) {
            removed = report.removed;
            probes = report.probes;
            evaluations = report.evaluations;
            if cs.needs_reselection(&self.topo) {
                let limit = self.sc.coordinator.single_promotion.then_some(1);
                match cs.select_replacements(self.sc.coordinator.eager_refill, limit) {
                    Ok(p) => promoted = p,
                    Err(CoordError::InsufficientCandidates { promoted: p }) => {
                        promoted = p;
                        degraded = true;
                    }
                    Err(_) => {}
                }
            }
        }
        let live = cs.region_live(&self.topo);
        let alive = cs.alive_count(&self.topo);
        degraded |= live && alive < cs.t_min;
        let foreign = removed
            .iter()
            .chain(&promoted)
            .chain(&cs.active)
            .map(|w| self.topo.region_of_worker(*w))
            .find(|x| *x != r);
        let after = cs.active.len() as u32;
        let t_min = cs.t_min;
        self.coords[r.index()] = cs;

        let mut elected = false;
        if live {
            let mut roles: Vec<Role> = self.topo.clusters_in_region(r).map(Role::Leader).collect();
            if self.topo.num_layers() >= 3 {
                roles.push(Role::RegionalHub(r));
            }
            for role in roles {
                if self.topo.roles.holder(role).is_some() {
                    continue;
                }
                if let Ok(w) = self.topo.reelect(role) {
                    elected = true;
                    let holder_region = self.topo.region_of_worker(w);
                    let rec = self.record(Component::Alg4, EventName::RoleElected);
                    rec.worker = Some(w);
                    rec.region = Some(r);
                    rec.peer_region = Some(holder_region);
                    if let Role::Leader(c) = role {
                        rec.cluster = Some(c);
                    }
                    rec.aux.role = Some(role);
                    rec.aux.round = Some(round);
                }
            }
        }

        let rec = self.record(Component::Alg4, EventName::MaintenanceRound);
        rec.region = Some(r);
        rec.peer_region = Some(foreign.unwrap_or(r));
        rec.aux.round = Some(round);
        rec.aux.c_size_before = Some(before);
        rec.aux.c_size_after = Some(after);
        rec.aux.removed = removed;
        rec.aux.promoted = promoted;
        rec.aux.alive = Some(alive);
        rec.aux.t_min = Some(t_min);
        rec.aux.live = Some(live);
        rec.aux.probes = Some(probes);
        rec.aux.evaluations = Some(evaluations);
        rec.aux.degraded = Some(degraded);
        if !live {
            rec.aux.reason = Some(Reason::RegionDead);
        } else if degraded {
            rec.aux.reason = Some(Reason::InsufficientCandidates);
        }
        elected
    }
}

fn drop_reason(r: DropReason) -> Reason {
    match r {
        DropReason::Visited => Reason::Visited,
        DropReason::Duplicate => Reason::Duplicate,
    }
}
