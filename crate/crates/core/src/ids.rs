//! Dense integer identifiers for physical workers and the groupings above them.

use core::fmt;

use serde::{Deserialize, Serialize};

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident, $prefix:literal) => {
        $(#[$meta])*
        #[derive(
            Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
        )]
        #[serde(transparent)]
        pub struct $name(pub u32);

        impl $name {
            #[inline]
            pub const fn index(self) -> usize {
                self.0 as usize
            }
        }

        impl From<u32> for $name {
            fn from(v: u32) -> Self {
                Self(v)
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "{}"), self.0)
            }
        }
    };
}

id_type!(
    /// A physical node (layer 1).
    WorkerId,
    "w"
);
id_type!(
    /// A group of workers led by one cluster leader (layer 2 scope).
    ClusterId,
    "c"
);
id_type!(
    /// A group of clusters; the scope of coordinator redundancy (layer 3 scope).
    RegionId,
    "r"
);
id_type!(
    /// A group of regions overseen by one local-global node (layer 4 scope).
    HubId,
    "h"
);
id_type!(
    /// A group of hubs overseen by one global command node (layer 5 scope).
    DomainId,
    "d"
);

/// Identity of a command across every copy spawned while disseminating it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MsgId {
    pub origin: ClusterId,
    pub seq: u32,
}

impl MsgId {
    pub const fn new(origin: ClusterId, seq: u32) -> Self {
        Self { origin, seq }
    }
}

impl fmt::Display for MsgId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.origin.0, self.seq)
    }
}
