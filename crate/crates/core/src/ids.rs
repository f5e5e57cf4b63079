//! Identifier newtypes shared across the protocol, perception and simulator.

use serde::{Deserialize, Serialize};
use std::fmt;

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident($inner:ty), $prefix:literal) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub $inner);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "{}"), self.0)
            }
        }
    };
}

id_type!(
    /// A roadside multi-sensor pack.
    MsspId(u16), "mssp"
);
id_type!(
    /// An in-vehicle SmartConnect device. Equal to the host vehicle id.
    ScId(u32), "sc"
);
id_type!(
    /// A track maintained by some MSSP; unique across the corridor.
    TrackId(u32), "trk"
);
