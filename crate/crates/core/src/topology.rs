//! Worker population, its containment chain (cluster, region, hub, domain), the
//! region adjacency graph, and the mapping of virtual roles onto workers.
//!
//! IDs are dense and laid out in containment order: cluster `c` owns workers
//! `c * workers_per_cluster ..`, region `r` owns clusters
//! `r * clusters_per_region ..`, and so on up the chain.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{ClusterId, DomainId, HubId, RegionId, WorkerId};
use crate::rng::{self, StreamKind};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TopologyError {
    #[error("invalid config: {field}: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("unknown cluster {0}")]
    UnknownCluster(ClusterId),
    #[error("unknown worker {0}")]
    UnknownWorker(WorkerId),
    #[error("unknown scope {0}")]
    UnknownScope(Scope),
    #[error("invalid adjacency edge ({0}, {1})")]
    InvalidEdge(RegionId, RegionId),
    #[error("layer {0} is not a virtual layer of this hierarchy")]
    InvalidLayer(u8),
    #[error("no alive candidate for {0}")]
    NoCandidate(Role),
}

/// Shape of the hierarchy plus the per-region coordinator redundancy.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierarchyConfig {
    pub num_layers: u8,
    pub workers_per_cluster: u32,
    pub clusters_per_region: u32,
    pub regions_per_hub: u32,
    pub hubs_per_domain: u32,
    pub domains: u32,
    /// Active coordinators kept per region.
    #[serde(rename = "K")]
    pub k: u32,
    /// Minimum active coordinators before local re-selection kicks in.
    #[serde(rename = "T_min")]
    pub t_min: u32,
}

impl Default for HierarchyConfig {
    fn default() -> Self {
        Self {
            num_layers: 5,
            workers_per_cluster: 4,
            clusters_per_region: 4,
            regions_per_hub: 2,
            hubs_per_domain: 2,
            domains: 1,
            k: 5,
            t_min: 3,
        }
    }
}

impl HierarchyConfig {
    pub fn validate(&self) -> Result<(), TopologyError> {
        let invalid = |field, reason: &str| {
            Err(TopologyError::InvalidConfig {
                field,
                reason: reason.to_string(),
            })
        };
        if !(2..=5).contains(&self.num_layers) {
            return invalid("num_layers", "must be between 2 and 5");
        }
        for (field, v) in [
            ("workers_per_cluster", self.workers_per_cluster),
            ("clusters_per_region", self.clusters_per_region),
            ("regions_per_hub", self.regions_per_hub),
            ("hubs_per_domain", self.hubs_per_domain),
            ("domains", self.domains),
        ] {
            if v == 0 {
                return invalid(field, "must be at least 1");
            }
        }
        if self.num_workers_u64() > u32::MAX as u64 {
            return invalid("workers_per_cluster", "total worker count overflows u32");
        }
        if self.t_min == 0 {
            return invalid("T_min", "must be at least 1");
        }
        if self.t_min > self.k {
            return invalid("T_min", "must not exceed K");
        }
        if self.k as u64 > self.workers_per_cluster as u64 * self.clusters_per_region as u64 {
            return invalid("K", "must not exceed the number of workers in a region");
        }
        Ok(())
    }

    fn num_workers_u64(&self) -> u64 {
        self.workers_per_cluster as u64
            * self.clusters_per_region as u64
            * self.regions_per_hub as u64
            * self.hubs_per_domain as u64
            * self.domains as u64
    }

    pub fn num_hubs(&self) -> u32 {
        self.hubs_per_domain * self.domains
    }

    pub fn num_regions(&self) -> u32 {
        self.regions_per_hub * self.num_hubs()
    }

    pub fn num_clusters(&self) -> u32 {
        self.clusters_per_region * self.num_regions()
    }

    pub fn num_workers(&self) -> u32 {
        self.workers_per_cluster * self.num_clusters()
    }

    pub fn workers_per_region(&self) -> u32 {
        self.workers_per_cluster * self.clusters_per_region
    }
}

/// How the region adjacency graph is built.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdjacencySpec {
    /// Row-major 2-D grid with 4-neighbourhood. `columns` defaults to
    /// `ceil(sqrt(regions))`; `columns = regions` gives a line.
    Grid { columns: Option<u32> },
    /// Explicit undirected edge list.
    Explicit(Vec<(RegionId, RegionId)>),
    /// Random spanning tree plus `extra_edges` random chords, drawn from the seed.
    RandomConnected { extra_edges: u32 },
}

impl Default for AdjacencySpec {
    fn default() -> Self {
        AdjacencySpec::Grid { columns: None }
    }
}

/// Command scope; selects the goal clusters of a command.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    Cluster(ClusterId),
    Region(RegionId),
    Hub(HubId),
    Domain(DomainId),
    Global,
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scope::Cluster(c) => write!(f, "cluster {c}"),
            Scope::Region(r) => write!(f, "region {r}"),
            Scope::Hub(h) => write!(f, "hub {h}"),
            Scope::Domain(d) => write!(f, "domain {d}"),
            Scope::Global => f.write_str("global"),
        }
    }
}

/// A virtual role slot (layers 2-5).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Leader(ClusterId),
    RegionalHub(RegionId),
    LocalGlobal(HubId),
    Global(DomainId),
}

impl Role {
    pub fn layer(self) -> u8 {
        match self {
            Role::Leader(_) => 2,
            Role::RegionalHub(_) => 3,
            Role::LocalGlobal(_) => 4,
            Role::Global(_) => 5,
        }
    }

    pub fn scope_id(self) -> u32 {
        match self {
            Role::Leader(c) => c.0,
            Role::RegionalHub(r) => r.0,
            Role::LocalGlobal(h) => h.0,
            Role::Global(d) => d.0,
        }
    }

    pub fn from_layer(layer: u8, scope_id: u32) -> Option<Role> {
        Some(match layer {
            2 => Role::Leader(ClusterId(scope_id)),
            3 => Role::RegionalHub(RegionId(scope_id)),
            4 => Role::LocalGlobal(HubId(scope_id)),
            5 => Role::Global(DomainId(scope_id)),
            _ => return None,
        })
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Role::Leader(c) => write!(f, "leader of {c}"),
            Role::RegionalHub(r) => write!(f, "hub of {r}"),
            Role::LocalGlobal(h) => write!(f, "local-global of {h}"),
            Role::Global(d) => write!(f, "global of {d}"),
        }
    }
}

/// Current holder of every virtual role. `None` marks a vacant slot awaiting
/// re-election. Layers above `num_layers` have empty tables.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleMap {
    pub cluster_leader: Vec<Option<WorkerId>>,
    pub regional_hub: Vec<Option<WorkerId>>,
    pub local_global: Vec<Option<WorkerId>>,
    pub global: Vec<Option<WorkerId>>,
}

impl RoleMap {
    fn table(&self, layer: u8) -> &[Option<WorkerId>] {
        match layer {
            2 => &self.cluster_leader,
            3 => &self.regional_hub,
            4 => &self.local_global,
            5 => &self.global,
            _ => &[],
        }
    }

    fn table_mut(&mut self, layer: u8) -> Option<&mut Vec<Option<WorkerId>>> {
        match layer {
            2 => Some(&mut self.cluster_leader),
            3 => Some(&mut self.regional_hub),
            4 => Some(&mut self.local_global),
            5 => Some(&mut self.global),
            _ => None,
        }
    }

    pub fn holder(&self, role: Role) -> Option<WorkerId> {
        self.table(role.layer())
            .get(role.scope_id() as usize)
            .copied()
            .flatten()
    }

    /// All roles currently held by `w`, lowest layer first.
    pub fn roles_of(&self, w: WorkerId) -> Vec<Role> {
        let mut out = Vec::new();
        for layer in 2..=5u8 {
            for (i, h) in self.table(layer).iter().enumerate() {
                if *h == Some(w) {
                    out.extend(Role::from_layer(layer, i as u32));
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    pub config: HierarchyConfig,
    pub seed: u64,
    cluster_of: Vec<ClusterId>,
    region_of: Vec<RegionId>,
    hub_of: Vec<HubId>,
    domain_of: Vec<DomainId>,
    /// Sorted neighbour lists; symmetric and irreflexive.
    region_adjacency: Vec<Vec<RegionId>>,
    alive: Vec<bool>,
    pub roles: RoleMap,
}

/// Builds the topology. Deterministic in `(config, adjacency, seed)`; the seed
/// only matters for [`AdjacencySpec::RandomConnected`].
pub fn build_topology(
    config: &HierarchyConfig,
    adjacency: &AdjacencySpec,
    seed: u64,
) -> Result<Topology, TopologyError> {
    config.validate()?;
    let n_workers = config.num_workers();
    let n_clusters = config.num_clusters();
    let n_regions = config.num_regions();
    let n_hubs = config.num_hubs();

    let cluster_of = (0..n_workers)
        .map(|w| ClusterId(w / config.workers_per_cluster))
        .collect();
    let region_of = (0..n_clusters)
        .map(|c| RegionId(c / config.clusters_per_region))
        .collect();
    let hub_of = (0..n_regions)
        .map(|r| HubId(r / config.regions_per_hub))
        .collect();
    let domain_of = (0..n_hubs)
        .map(|h| DomainId(h / config.hubs_per_domain))
        .collect();

    let edges = adjacency_edges(adjacency, n_regions, seed)?;
    let mut region_adjacency = alloc::vec![Vec::new(); n_regions as usize];
    for (a, b) in edges {
        region_adjacency[a.index()].push(b);
        region_adjacency[b.index()].push(a);
    }
    for n in &mut region_adjacency {
        n.sort_unstable();
        n.dedup();
    }

    let mut topo = Topology {
        config: config.clone(),
        seed,
        cluster_of,
        region_of,
        hub_of,
        domain_of,
        region_adjacency,
        alive: alloc::vec![true; n_workers as usize],
        roles: RoleMap {
            cluster_leader: Vec::new(),
            regional_hub: Vec::new(),
            local_global: Vec::new(),
            global: Vec::new(),
        },
    };
    topo.assign_initial_roles();
    Ok(topo)
}

fn adjacency_edges(
    spec: &AdjacencySpec,
    n_regions: u32,
    seed: u64,
) -> Result<Vec<(RegionId, RegionId)>, TopologyError> {
    let mut edges = Vec::new();
    match spec {
        AdjacencySpec::Grid { columns } => {
            let cols = match columns {
                Some(0) => {
                    return Err(TopologyError::InvalidConfig {
                        field: "grid_columns",
                        reason: "must be at least 1".to_string(),
                    })
                }
                Some(c) => *c,
                None => ceil_sqrt(n_regions),
            };
            for i in 0..n_regions {
                if (i % cols) + 1 < cols && i + 1 < n_regions {
                    edges.push((RegionId(i), RegionId(i + 1)));
                }
                if i + cols < n_regions {
                    edges.push((RegionId(i), RegionId(i + cols)));
                }
            }
        }
        AdjacencySpec::Explicit(list) => {
            for &(a, b) in list {
                if a == b || a.0 >= n_regions || b.0 >= n_regions {
                    return Err(TopologyError::InvalidEdge(a, b));
                }
                edges.push((a, b));
            }
        }
        AdjacencySpec::RandomConnected { extra_edges } => {
            let mut r = rng::stream(seed, StreamKind::Topology, 0);
            let mut seen = BTreeSet::new();
            for i in 1..n_regions {
                let j = rng::below(&mut r, i as u64) as u32;
                seen.insert((j, i));
                edges.push((RegionId(j), RegionId(i)));
            }
            let max_edges = n_regions as u64 * (n_regions as u64).saturating_sub(1) / 2;
            let target = (seen.len() as u64 + *extra_edges as u64).min(max_edges);
            while (seen.len() as u64) < target {
                let a = rng::below(&mut r, n_regions as u64) as u32;
                let b = rng::below(&mut r, n_regions as u64) as u32;
                if a == b {
                    continue;
                }
                let key = (a.min(b), a.max(b));
                if seen.insert(key) {
                    edges.push((RegionId(key.0), RegionId(key.1)));
                }
            }
        }
    }
    Ok(edges)
}

fn ceil_sqrt(n: u32) -> u32 {
    let mut c = 1;
    while c * c < n {
        c += 1;
    }
    c
}

impl Topology {
    fn assign_initial_roles(&mut self) {
        let layers = self.config.num_layers;
        let wpc = self.config.workers_per_cluster;
        let cpr = self.config.clusters_per_region;
        let rph = self.config.regions_per_hub;
        let hpd = self.config.hubs_per_domain;
        // Lowest worker of each scope; it also holds every lower role of its
        // first sub-scope, so the "elected from the layer below" chain holds.
        self.roles.cluster_leader = (0..self.num_clusters())
            .map(|c| Some(WorkerId(c * wpc)))
            .collect();
        if layers >= 3 {
            self.roles.regional_hub = (0..self.num_regions())
                .map(|r| Some(WorkerId(r * cpr * wpc)))
                .collect();
        }
        if layers >= 4 {
            self.roles.local_global = (0..self.config.num_hubs())
                .map(|h| Some(WorkerId(h * rph * cpr * wpc)))
                .collect();
        }
        if layers >= 5 {
            self.roles.global = (0..self.config.domains)
                .map(|d| Some(WorkerId(d * hpd * rph * cpr * wpc)))
                .collect();
        }
    }

    pub fn num_workers(&self) -> u32 {
        self.cluster_of.len() as u32
    }

    pub fn num_clusters(&self) -> u32 {
        self.region_of.len() as u32
    }

    pub fn num_regions(&self) -> u32 {
        self.hub_of.len() as u32
    }

    pub fn num_hubs(&self) -> u32 {
        self.domain_of.len() as u32
    }

    pub fn num_domains(&self) -> u32 {
        self.config.domains
    }

    pub fn num_layers(&self) -> u8 {
        self.config.num_layers
    }

    pub fn has_worker(&self, w: WorkerId) -> bool {
        w.index() < self.cluster_of.len()
    }

    pub fn has_cluster(&self, c: ClusterId) -> bool {
        c.index() < self.region_of.len()
    }

    pub fn has_region(&self, r: RegionId) -> bool {
        r.index() < self.hub_of.len()
    }

    pub fn cluster_of(&self, w: WorkerId) -> ClusterId {
        self.cluster_of[w.index()]
    }

    pub fn region_of(&self, c: ClusterId) -> RegionId {
        self.region_of[c.index()]
    }

    pub fn hub_of(&self, r: RegionId) -> HubId {
        self.hub_of[r.index()]
    }

    pub fn domain_of(&self, h: HubId) -> DomainId {
        self.domain_of[h.index()]
    }

    pub fn region_of_worker(&self, w: WorkerId) -> RegionId {
        self.region_of(self.cluster_of(w))
    }

    pub fn hub_of_cluster(&self, c: ClusterId) -> HubId {
        self.hub_of(self.region_of(c))
    }

    pub fn domain_of_cluster(&self, c: ClusterId) -> DomainId {
        self.domain_of(self.hub_of_cluster(c))
    }

    pub fn workers(&self) -> impl Iterator<Item = WorkerId> {
        (0..self.num_workers()).map(WorkerId)
    }

    pub fn clusters(&self) -> impl Iterator<Item = ClusterId> {
        (0..self.num_clusters()).map(ClusterId)
    }

    pub fn regions(&self) -> impl Iterator<Item = RegionId> {
        (0..self.num_regions()).map(RegionId)
    }

    fn span(start: u32, len: u32) -> Range<u32> {
        start..start + len
    }

    pub fn workers_in_cluster(&self, c: ClusterId) -> impl Iterator<Item = WorkerId> {
        let wpc = self.config.workers_per_cluster;
        Self::span(c.0 * wpc, wpc).map(WorkerId)
    }

    pub fn workers_in_region(&self, r: RegionId) -> impl Iterator<Item = WorkerId> {
        let n = self.config.workers_per_region();
        Self::span(r.0 * n, n).map(WorkerId)
    }

    pub fn clusters_in_region(&self, r: RegionId) -> impl Iterator<Item = ClusterId> {
        let cpr = self.config.clusters_per_region;
        Self::span(r.0 * cpr, cpr).map(ClusterId)
    }

    pub fn regions_in_hub(&self, h: HubId) -> impl Iterator<Item = RegionId> {
        let rph = self.config.regions_per_hub;
        Self::span(h.0 * rph, rph).map(RegionId)
    }

    pub fn hubs_in_domain(&self, d: DomainId) -> impl Iterator<Item = HubId> {
        let hpd = self.config.hubs_per_domain;
        Self::span(d.0 * hpd, hpd).map(HubId)
    }

    pub fn region_neighbors(&self, r: RegionId) -> &[RegionId] {
        &self.region_adjacency[r.index()]
    }

    /// Undirected edges `(a, b)` with `a < b`, sorted.
    pub fn region_edges(&self) -> Vec<(RegionId, RegionId)> {
        let mut out = Vec::new();
        for (i, ns) in self.region_adjacency.iter().enumerate() {
            for &n in ns {
                if (i as u32) < n.0 {
                    out.push((RegionId(i as u32), n));
                }
            }
        }
        out
    }

    /// Adds an undirected region edge. Returns whether it was new.
    pub fn link_regions(&mut self, a: RegionId, b: RegionId) -> Result<bool, TopologyError> {
        if a == b || !self.has_region(a) || !self.has_region(b) {
            return Err(TopologyError::InvalidEdge(a, b));
        }
        let ns = &mut self.region_adjacency[a.index()];
        match ns.binary_search(&b) {
            Ok(_) => Ok(false),
            Err(pos) => {
                ns.insert(pos, b);
                let ns = &mut self.region_adjacency[b.index()];
                let pos = ns.binary_search(&a).unwrap_err();
                ns.insert(pos, a);
                Ok(true)
            }
        }
    }

    /// Removes an undirected region edge. Returns whether it existed.
    pub fn unlink_regions(&mut self, a: RegionId, b: RegionId) -> Result<bool, TopologyError> {
        if a == b || !self.has_region(a) || !self.has_region(b) {
            return Err(TopologyError::InvalidEdge(a, b));
        }
        let ns = &mut self.region_adjacency[a.index()];
        match ns.binary_search(&b) {
            Err(_) => Ok(false),
            Ok(pos) => {
                ns.remove(pos);
                let ns = &mut self.region_adjacency[b.index()];
                if let Ok(pos) = ns.binary_search(&a) {
                    ns.remove(pos);
                }
                Ok(true)
            }
        }
    }

    pub fn is_alive(&self, w: WorkerId) -> bool {
        self.alive.get(w.index()).copied().unwrap_or(false)
    }

    /// Marks `w` dead and vacates every role it held. Returns the vacated roles.
    pub fn kill(&mut self, w: WorkerId) -> Result<Vec<Role>, TopologyError> {
        if !self.has_worker(w) {
            return Err(TopologyError::UnknownWorker(w));
        }
        self.alive[w.index()] = false;
        let vacated = self.roles.roles_of(w);
        for role in &vacated {
            if let Some(table) = self.roles.table_mut(role.layer()) {
                table[role.scope_id() as usize] = None;
            }
        }
        Ok(vacated)
    }

    /// Brings `w` back as a plain worker without roles.
    pub fn revive(&mut self, w: WorkerId) -> Result<(), TopologyError> {
        if !self.has_worker(w) {
            return Err(TopologyError::UnknownWorker(w));
        }
        self.alive[w.index()] = true;
        Ok(())
    }

    pub fn alive_workers_in_cluster(&self, c: ClusterId) -> impl Iterator<Item = WorkerId> + '_ {
        self.workers_in_cluster(c).filter(|w| self.is_alive(*w))
    }

    pub fn leader_of(&self, c: ClusterId) -> Option<WorkerId> {
        self.roles.holder(Role::Leader(c))
    }

    /// Hierarchy distance: 0 same cluster, 1 same region, 2 same hub,
    /// 3 same domain, 4 otherwise.
    pub fn hierarchy_distance(&self, a: ClusterId, b: ClusterId) -> Result<u8, TopologyError> {
        for c in [a, b] {
            if !self.has_cluster(c) {
                return Err(TopologyError::UnknownCluster(c));
            }
        }
        Ok(self.distance_unchecked(a, b))
    }

    pub(crate) fn distance_unchecked(&self, a: ClusterId, b: ClusterId) -> u8 {
        if a == b {
            return 0;
        }
        let (ra, rb) = (self.region_of(a), self.region_of(b));
        if ra == rb {
            return 1;
        }
        let (ha, hb) = (self.hub_of(ra), self.hub_of(rb));
        if ha == hb {
            return 2;
        }
        if self.domain_of(ha) == self.domain_of(hb) {
            3
        } else {
            4
        }
    }

    /// Every cluster transitively under `scope`, ascending.
    pub fn goal_clusters_for_scope(&self, scope: Scope) -> Result<Vec<ClusterId>, TopologyError> {
        let unknown = || TopologyError::UnknownScope(scope);
        let cpr = self.config.clusters_per_region;
        let per_hub = cpr * self.config.regions_per_hub;
        let per_domain = per_hub * self.config.hubs_per_domain;
        let range = match scope {
            Scope::Cluster(c) if self.has_cluster(c) => c.0..c.0 + 1,
            Scope::Region(r) if self.has_region(r) => Self::span(r.0 * cpr, cpr),
            Scope::Hub(h) if h.0 < self.num_hubs() => Self::span(h.0 * per_hub, per_hub),
            Scope::Domain(d) if d.0 < self.num_domains() => {
                Self::span(d.0 * per_domain, per_domain)
            }
            Scope::Global => 0..self.num_clusters(),
            _ => return Err(unknown()),
        };
        Ok(range.map(ClusterId).collect())
    }

    /// Whether `scope` names an existing scope.
    pub fn has_scope(&self, scope: Scope) -> bool {
        self.goal_clusters_for_scope(scope).is_ok()
    }

    fn role_exists(&self, role: Role) -> bool {
        role.layer() <= self.num_layers()
            && (role.scope_id() as usize) < self.roles.table(role.layer()).len()
    }

    /// Alive holders of the layer below `role`, inside the scope `role` governs.
    /// For a cluster leader these are simply the alive workers of the cluster.
    pub fn candidates_for(&self, role: Role) -> Vec<WorkerId> {
        let mut out: Vec<WorkerId> = match role {
            Role::Leader(c) => self.alive_workers_in_cluster(c).collect(),
            Role::RegionalHub(r) => self
                .clusters_in_region(r)
                .filter_map(|c| self.roles.holder(Role::Leader(c)))
                .collect(),
            Role::LocalGlobal(h) => self
                .regions_in_hub(h)
                .filter_map(|r| self.roles.holder(Role::RegionalHub(r)))
                .collect(),
            Role::Global(d) => self
                .hubs_in_domain(d)
                .filter_map(|h| self.roles.holder(Role::LocalGlobal(h)))
                .collect(),
        };
        out.retain(|w| self.is_alive(*w));
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Re-elects `role` from the alive holders of the layer below within its
    /// scope, lowest worker ID first. Other bindings are untouched.
    pub fn reelect(&mut self, role: Role) -> Result<WorkerId, TopologyError> {
        if !self.role_exists(role) {
            return Err(TopologyError::InvalidLayer(role.layer()));
        }
        let winner = *self
            .candidates_for(role)
            .first()
            .ok_or(TopologyError::NoCandidate(role))?;
        if let Some(table) = self.roles.table_mut(role.layer()) {
            table[role.scope_id() as usize] = Some(winner);
        }
        Ok(winner)
    }

    /// Layer/scope form of [`Topology::reelect`]; returns the updated role map.
    pub fn reelect_role(&mut self, layer: u8, scope_id: u32) -> Result<&RoleMap, TopologyError> {
        let role = Role::from_layer(layer, scope_id).ok_or(TopologyError::InvalidLayer(layer))?;
        self.reelect(role)?;
        Ok(&self.roles)
    }

    /// Vacant roles, lowest layer first, then by scope.
    pub fn vacant_roles(&self) -> Vec<Role> {
        let mut out = Vec::new();
        for layer in 2..=self.num_layers() {
            for (i, h) in self.roles.table(layer).iter().enumerate() {
                if h.is_none() {
                    out.extend(Role::from_layer(layer, i as u32));
                }
            }
        }
        out
    }

    /// The scope a role governs, as a region set test.
    pub fn role_covers_region(&self, role: Role, r: RegionId) -> bool {
        match role {
            Role::Leader(c) => self.region_of(c) == r,
            Role::RegionalHub(x) => x == r,
            Role::LocalGlobal(h) => self.hub_of(r) == h,
            Role::Global(d) => self.domain_of(self.hub_of(r)) == d,
        }
    }

    /// Checks the role-map invariants: every holder is alive and inside the
    /// scope it governs, and tables match the configured layer count.
    pub fn check_roles(&self) -> Result<(), String> {
        let expect = [
            (2u8, self.num_clusters()),
            (
                3,
                if self.num_layers() >= 3 {
                    self.num_regions()
                } else {
                    0
                },
            ),
            (
                4,
                if self.num_layers() >= 4 {
                    self.num_hubs()
                } else {
                    0
                },
            ),
            (
                5,
                if self.num_layers() >= 5 {
                    self.num_domains()
                } else {
                    0
                },
            ),
        ];
        for (layer, n) in expect {
            if self.roles.table(layer).len() != n as usize {
                return Err(alloc::format!("layer {layer} table has wrong size"));
            }
            for (i, h) in self.roles.table(layer).iter().enumerate() {
                let Some(w) = *h else { continue };
                let role = Role::from_layer(layer, i as u32).expect("layer in 2..=5");
                if !self.is_alive(w) {
                    return Err(alloc::format!("{role} held by dead worker {w}"));
                }
                let c = self.cluster_of(w);
                let inside = match role {
                    Role::Leader(x) => c == x,
                    Role::RegionalHub(r) => self.region_of(c) == r,
                    Role::LocalGlobal(hb) => self.hub_of_cluster(c) == hb,
                    Role::Global(d) => self.domain_of_cluster(c) == d,
                };
                if !inside {
                    return Err(alloc::format!("{role} held by out-of-scope worker {w}"));
                }
            }
        }
        Ok(())
    }
}
