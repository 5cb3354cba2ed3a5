//! Virtual-tree swarm hierarchy: protocol state machines and a deterministic
//! discrete-event kernel.
//!
//! Only workers (layer 1) are physical. Cluster leaders, regional hubs,
//! local-global and global command nodes (layers 2-5) are virtual roles mapped
//! onto workers by a [`topology::RoleMap`]. Two dissemination strategies are
//! provided:
//!
//! - [`adjacent`]: infrastructure-free. Leaders defer a worker-level broadcast by
//!   `alpha * distance + beta * load + jitter`; workers relay across adjacent
//!   regions only when a leader authorised it.
//! - [`hier`]: infrastructure-assisted. Leaders and upper roles forward
//!   immediately along virtual-tree links.
//!
//! [`coordinators`] keeps `K` redundant active coordinators per region and
//! re-selects locally whenever fewer than `T_min` remain. [`kernel`] wires
//! everything into a single-threaded, seed-deterministic event loop and
//! [`metrics`] turns its trace into hop, latency, recovery and liveness
//! figures.
//!
//! The crate is `no_std` (with `alloc`). File formats, the CLI and Monte-Carlo
//! drivers live in the `vtree-sim` crate.

#![cfg_attr(not(any(feature = "std", test)), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod adjacent;
pub mod coordinators;
pub mod hier;
pub mod ids;
pub mod kernel;
pub mod messages;
pub mod metrics;
pub mod rng;
pub mod time;
pub mod topology;
pub mod trace;

pub use ids::{ClusterId, DomainId, HubId, MsgId, RegionId, WorkerId};
pub use kernel::{run, RunOutput, Scenario};
pub use messages::Message;
pub use time::SimTime;
pub use topology::{HierarchyConfig, Topology};
