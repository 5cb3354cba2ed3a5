//! Infrastructure-assisted dissemination along virtual-tree links.
//!
//! The tree has one node per virtual role scope: clusters (leaders), regions
//! (regional hubs), hubs (local-global) and domains (global), truncated to the
//! configured layer count. When the top layer has more than one node a
//! synthetic [`TreeNode::Root`] joins them; it is held by the holder of the
//! lowest-ID top node, so the root co-locates with an existing role.
//!
//! A node receiving a copy forwards it immediately: down to every child whose
//! subtree still contains an unexecuted goal, and up to its parent. In
//! [`RoutingMode::LcaPruned`] (default) the upward copy is sent only while
//! some unexecuted goal lies outside the node's subtree; in
//! [`RoutingMode::LiteralRoot`] it always climbs to the root.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adjacent::{delivery_targets, DropReason, LeaderState};
use crate::ids::{ClusterId, DomainId, HubId, MsgId, RegionId, WorkerId};
use crate::messages::Message;
use crate::topology::{Role, Topology};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeNode {
    Cluster(ClusterId),
    Region(RegionId),
    Hub(HubId),
    Domain(DomainId),
    Root,
}

impl fmt::Display for TreeNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TreeNode::Cluster(c) => write!(f, "{c}"),
            TreeNode::Region(r) => write!(f, "{r}"),
            TreeNode::Hub(h) => write!(f, "{h}"),
            TreeNode::Domain(d) => write!(f, "{d}"),
            TreeNode::Root => f.write_str("root"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum HierError {
    #[error("{0} has no live holder on the tree path")]
    Disconnected(TreeNode),
    #[error("unknown cluster {0}")]
    UnknownCluster(ClusterId),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoutingMode {
    /// Climb only as far as the lowest common ancestor of the remaining goals.
    #[default]
    LcaPruned,
    /// Always climb to the root before descending.
    LiteralRoot,
}

/// Parent/child structure of the virtual tree. Holders are looked up in the
/// topology's role map at routing time.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TreeLinks {
    num_layers: u8,
    /// Level of the highest non-synthetic nodes (0 = clusters).
    top_level: u8,
    synthetic_root: bool,
}

impl TreeLinks {
    pub fn new(topo: &Topology) -> Self {
        let num_layers = topo.num_layers();
        let top_level = num_layers - 2;
        let top_count = match top_level {
            0 => topo.num_clusters(),
            1 => topo.num_regions(),
            2 => topo.num_hubs(),
            _ => topo.num_domains(),
        };
        Self {
            num_layers,
            top_level,
            synthetic_root: top_count > 1,
        }
    }

    pub fn num_layers(&self) -> u8 {
        self.num_layers
    }

    /// Longest possible tree path between two clusters.
    pub fn max_path_len(&self) -> u32 {
        2 * self.max_level() as u32
    }

    fn max_level(&self) -> u8 {
        if self.synthetic_root {
            self.top_level + 1
        } else {
            self.top_level
        }
    }

    pub fn level(&self, n: TreeNode) -> u8 {
        match n {
            TreeNode::Cluster(_) => 0,
            TreeNode::Region(_) => 1,
            TreeNode::Hub(_) => 2,
            TreeNode::Domain(_) => 3,
            TreeNode::Root => self.top_level + 1,
        }
    }

    /// The root of the tree: the synthetic root, or the single top node.
    pub fn root(&self) -> TreeNode {
        if self.synthetic_root {
            TreeNode::Root
        } else {
            self.first_top_node()
        }
    }

    /// Lowest-ID node of the top real level.
    fn first_top_node(&self) -> TreeNode {
        match self.top_level {
            0 => TreeNode::Cluster(ClusterId(0)),
            1 => TreeNode::Region(RegionId(0)),
            2 => TreeNode::Hub(HubId(0)),
            _ => TreeNode::Domain(DomainId(0)),
        }
    }

    /// Ancestor of cluster `c` at `level` (0 = the cluster itself).
    pub fn ancestor(&self, topo: &Topology, c: ClusterId, level: u8) -> TreeNode {
        if level > self.top_level {
            return TreeNode::Root;
        }
        match level {
            0 => TreeNode::Cluster(c),
            1 => TreeNode::Region(topo.region_of(c)),
            2 => TreeNode::Hub(topo.hub_of_cluster(c)),
            _ => TreeNode::Domain(topo.domain_of_cluster(c)),
        }
    }

    pub fn parent(&self, topo: &Topology, n: TreeNode) -> Option<TreeNode> {
        let level = self.level(n);
        if n == TreeNode::Root || level > self.top_level {
            return None;
        }
        if level == self.top_level {
            return self.synthetic_root.then_some(TreeNode::Root);
        }
        Some(match n {
            TreeNode::Cluster(c) => TreeNode::Region(topo.region_of(c)),
            TreeNode::Region(r) => TreeNode::Hub(topo.hub_of(r)),
            TreeNode::Hub(h) => TreeNode::Domain(topo.domain_of(h)),
            TreeNode::Domain(_) | TreeNode::Root => return None,
        })
    }

    pub fn children(&self, topo: &Topology, n: TreeNode) -> Vec<TreeNode> {
        match n {
            TreeNode::Cluster(_) => Vec::new(),
            TreeNode::Region(r) => topo.clusters_in_region(r).map(TreeNode::Cluster).collect(),
            TreeNode::Hub(h) => topo.regions_in_hub(h).map(TreeNode::Region).collect(),
            TreeNode::Domain(d) => topo.hubs_in_domain(d).map(TreeNode::Hub).collect(),
            TreeNode::Root => match self.top_level {
                0 => topo.clusters().map(TreeNode::Cluster).collect(),
                1 => topo.regions().map(TreeNode::Region).collect(),
                2 => (0..topo.num_hubs())
                    .map(|h| TreeNode::Hub(HubId(h)))
                    .collect(),
                _ => (0..topo.num_domains())
                    .map(|d| TreeNode::Domain(DomainId(d)))
                    .collect(),
            },
        }
    }

    /// Whether cluster `c` lies in the subtree of `n`.
    pub fn contains(&self, topo: &Topology, n: TreeNode, c: ClusterId) -> bool {
        match n {
            TreeNode::Root => true,
            other => self.ancestor(topo, c, self.level(other)) == other,
        }
    }

    /// Role backing a tree node; `None` for the synthetic root.
    pub fn role(&self, n: TreeNode) -> Option<Role> {
        match n {
            TreeNode::Cluster(c) => Some(Role::Leader(c)),
            TreeNode::Region(r) => Some(Role::RegionalHub(r)),
            TreeNode::Hub(h) => Some(Role::LocalGlobal(h)),
            TreeNode::Domain(d) => Some(Role::Global(d)),
            TreeNode::Root => None,
        }
    }

    /// Worker currently holding the node's role.
    pub fn holder(&self, topo: &Topology, n: TreeNode) -> Option<WorkerId> {
        let role = match n {
            TreeNode::Root => self
                .role(self.first_top_node())
                .expect("top node is a role"),
            other => self.role(other)?,
        };
        topo.roles.holder(role).filter(|w| topo.is_alive(*w))
    }

    /// Edge count of the tree path between the leaders of `a` and `b`.
    pub fn tree_path_length(
        &self,
        topo: &Topology,
        a: ClusterId,
        b: ClusterId,
    ) -> Result<u32, HierError> {
        for c in [a, b] {
            if !topo.has_cluster(c) {
                return Err(HierError::UnknownCluster(c));
            }
        }
        let lca_level = (0..=self.max_level())
            .find(|&k| self.ancestor(topo, a, k) == self.ancestor(topo, b, k))
            .unwrap_or(self.max_level());
        for c in [a, b] {
            for k in 0..=lca_level {
                let n = self.ancestor(topo, c, k);
                if self.holder(topo, n).is_none() {
                    return Err(HierError::Disconnected(n));
                }
            }
        }
        Ok(2 * lca_level as u32)
    }

    /// Next hops for a copy sitting at `at`, which arrived from `from`.
    /// `msg` must already carry this node's bookkeeping; every hop gets
    /// `hop_count + 1` and `last_sent_cluster_id = sender_cluster`.
    pub fn route(
        &self,
        topo: &Topology,
        at: TreeNode,
        from: Option<TreeNode>,
        msg: &Message,
        sender_cluster: ClusterId,
        mode: RoutingMode,
    ) -> Vec<Hop> {
        let unexecuted = msg.unexecuted_goals();
        if unexecuted.is_empty() {
            return Vec::new();
        }
        let level = self.level(at);
        let mut targets = BTreeSet::new();
        let mut outside = false;
        for g in unexecuted.iter() {
            if self.contains(topo, at, g) {
                if level > 0 {
                    let child = self.ancestor(topo, g, level - 1);
                    if Some(child) != from {
                        targets.insert(child);
                    }
                }
            } else {
                outside = true;
            }
        }
        if let Some(p) = self.parent(topo, at) {
            if Some(p) != from && (outside || mode == RoutingMode::LiteralRoot) {
                targets.insert(p);
            }
        }
        targets
            .into_iter()
            .map(|to| Hop {
                to,
                holder: self.holder(topo, to),
                message: msg.forwarded(sender_cluster, false),
            })
            .collect()
    }
}

/// One forwarded copy. `holder == None` means there is no live holder for the
/// next node (no route); the kernel parks such copies until a re-election.
#[derive(Clone, Debug, PartialEq)]
pub struct Hop {
    pub to: TreeNode,
    pub holder: Option<WorkerId>,
    pub message: Message,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ImmediateAction {
    Drop(DropReason),
    /// Delivered here and nothing left to forward.
    Deliver,
    /// Forward to the listed hops (possibly after delivering here).
    Forwards,
    /// Not a goal and nothing left to forward.
    Stop,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImmediateOutcome {
    pub action: ImmediateAction,
    pub message: Message,
    pub delivered: bool,
    pub deliver_to: Vec<WorkerId>,
    pub hops: Vec<Hop>,
}

/// Leader processing with immediate tree forwarding.
pub fn leader_on_receive_immediate(
    s: &mut LeaderState,
    m: &Message,
    topo: &Topology,
    links: &TreeLinks,
    from: Option<TreeNode>,
    mode: RoutingMode,
) -> ImmediateOutcome {
    let c = s.cluster_id;
    let reason = if m.visited_cluster_ids.contains(&c) {
        Some(DropReason::Visited)
    } else if s.processed_msgs.contains(&m.msg_id) {
        Some(DropReason::Duplicate)
    } else {
        None
    };
    if let Some(reason) = reason {
        return ImmediateOutcome {
            action: ImmediateAction::Drop(reason),
            message: m.clone(),
            delivered: false,
            deliver_to: Vec::new(),
            hops: Vec::new(),
        };
    }
    s.processed_msgs.insert(m.msg_id);
    let mut msg = m.clone();
    msg.visited_cluster_ids.insert(c);
    let delivered = msg.is_goal(c);
    let mut deliver_to = Vec::new();
    if delivered {
        deliver_to = delivery_targets(&msg, c, topo);
        msg.executed_cluster_ids.insert(c);
    }
    let hops = links.route(topo, TreeNode::Cluster(c), from, &msg, c, mode);
    let action = match (hops.is_empty(), delivered) {
        (false, _) => ImmediateAction::Forwards,
        (true, true) => ImmediateAction::Deliver,
        (true, false) => ImmediateAction::Stop,
    };
    ImmediateOutcome {
        action,
        message: msg,
        delivered,
        deliver_to,
        hops,
    }
}

/// Routing state of an upper (non-cluster) tree node.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RelayState {
    pub processed_msgs: BTreeSet<MsgId>,
}

/// Upper-node relay: forwards once per message id.
pub fn relay_on_receive(
    s: &mut RelayState,
    at: TreeNode,
    m: &Message,
    topo: &Topology,
    links: &TreeLinks,
    from: Option<TreeNode>,
    mode: RoutingMode,
) -> Option<Vec<Hop>> {
    if !s.processed_msgs.insert(m.msg_id) {
        return None;
    }
    let sender_cluster = links
        .holder(topo, at)
        .map(|w| topo.cluster_of(w))
        .unwrap_or(m.last_sent_cluster_id);
    Some(links.route(topo, at, from, m, sender_cluster, mode))
}
