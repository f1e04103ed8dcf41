//! Parallel peeling of random r-uniform hypergraphs to the k-core.
//!
//! * [`hypergraph`]: seeded generators for the uniform and partitioned models.
//! * [`peeler`]: serial, round-based and subtable (subround) peeling.
//! * [`recursion`]: branching-process predictions, thresholds and the
//!   contraction factor above threshold.
//! * [`iblt`]: an invertible Bloom lookup table whose recovery is peeling.
//! * [`harness`]: the experiments driven by the `peelkit` binary.

pub mod error;
pub mod harness;
pub mod hypergraph;
pub mod iblt;
pub mod peeler;
pub mod recursion;

pub use error::{Error, Result};
pub use hypergraph::{EdgeMode, Hypergraph, VertexId};
pub use iblt::{Iblt, KeyWidth, RecoveryResult};
pub use peeler::{PeelTrace, PeelVariant};
