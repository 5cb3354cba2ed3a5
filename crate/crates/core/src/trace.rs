//! Trace records emitted by the kernel.
//!
//! One record per observable protocol step. Records are appended in
//! `(time, seq)` order, where `seq` is the record's position in the log.
//! Silent steps (a worker receiving a copy it ignores, a tombstoned event)
//! are counted in the run's accounting but not traced.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::hier::TreeNode;
use crate::ids::{ClusterId, MsgId, RegionId, WorkerId};
use crate::time::SimTime;
use crate::topology::Role;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    /// Worker-mediated forwarding.
    Alg1,
    /// Leader deferred routing.
    Alg2,
    /// Leader immediate (tree) routing.
    Alg3,
    /// Regional coordinator maintenance.
    Alg4,
    Kernel,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventName {
    /// A command entered the system at its origin leader.
    Command,
    /// A command or report found no leader to process it.
    NoLeader,
    /// A leader or tree node accepted a copy for processing.
    Receive,
    Drop,
    /// The cluster executed the command.
    Deliver,
    Stop,
    Schedule,
    Broadcast,
    Cancelled,
    Suppressed,
    Execute,
    Report,
    Relay,
    Forward,
    NoRoute,
    Retry,
    RouteFailed,
    MaintenanceRound,
    RoleElected,
    WorkerFailed,
    WorkerRecovered,
    RegionFailed,
    Jam,
    Unjam,
    LinkDown,
    LinkUp,
    Jammed,
    SetEnergy,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reason {
    Visited,
    Duplicate,
    LeaderDead,
    NoGoals,
    InsufficientCandidates,
    RegionDead,
}

/// Transmission classes; each has its own latency and jamming state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkClass {
    IntraCluster,
    IntraRegion,
    Adjacent,
    Tree,
}

impl LinkClass {
    pub const ALL: [LinkClass; 4] = [
        LinkClass::IntraCluster,
        LinkClass::IntraRegion,
        LinkClass::Adjacent,
        LinkClass::Tree,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Event-specific fields. Absent values are omitted from serialized output.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Aux {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<Reason>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goals: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fire_at: Option<SimTime>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dist: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to: Option<WorkerId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node: Option<TreeNode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub next: Option<TreeNode>,
    /// Tree hop between two roles of the same worker.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub internal: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flag: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retries: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<Role>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub round: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_size_before: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_size_after: Option<u32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub removed: Vec<WorkerId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub promoted: Vec<WorkerId>,
    /// Alive active coordinators of the region after the step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alive: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_min: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub live: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degraded: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probes: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evaluations: Option<u64>,
    /// The failed or recovered worker was an active coordinator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coordinator: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub link_class: Option<LinkClass>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drop: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceRecord {
    pub time: SimTime,
    pub seq: u64,
    pub component: Component,
    pub event: EventName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<RegionId>,
    /// The other region involved, e.g. the sender's region on a receive.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub peer_region: Option<RegionId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster: Option<ClusterId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub worker: Option<WorkerId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub msg: Option<MsgId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hop: Option<u32>,
    #[serde(default, skip_serializing_if = "is_default")]
    pub aux: Aux,
}

fn is_default(a: &Aux) -> bool {
    *a == Aux::default()
}

impl TraceRecord {
    pub fn new(time: SimTime, seq: u64, component: Component, event: EventName) -> Self {
        Self {
            time,
            seq,
            component,
            event,
            region: None,
            peer_region: None,
            cluster: None,
            worker: None,
            msg: None,
            hop: None,
            aux: Aux::default(),
        }
    }

    /// Whether this is a coordinator-maintenance record that touched a region
    /// other than its own.
    pub fn is_cross_region_alg4(&self) -> bool {
        self.component == Component::Alg4
            && matches!((self.region, self.peer_region), (Some(a), Some(b)) if a != b)
    }
}

/// Append-only trace log.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TraceLog {
    records: Vec<TraceRecord>,
}

impl TraceLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a record stamped with the next sequence number and returns it
    /// for filling in.
    pub fn push(
        &mut self,
        time: SimTime,
        component: Component,
        event: EventName,
    ) -> &mut TraceRecord {
        let seq = self.records.len() as u64;
        self.records
            .push(TraceRecord::new(time, seq, component, event));
        self.records.last_mut().expect("just pushed")
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<TraceRecord> {
        self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

impl From<Vec<TraceRecord>> for TraceLog {
    fn from(records: Vec<TraceRecord>) -> Self {
        Self { records }
    }
}
