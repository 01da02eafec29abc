//! Hitting-time PageRank optimization: instances with free edges, exact
//! evaluation, PageRank Iteration, stochastic shortest path models, the
//! reductions between them, brute-force oracles and random instance families.

// `!(x > 0.0)` is deliberate: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod experiments;
pub mod generators;
pub mod gpro;
pub mod hitting;
pub mod oracle;
pub mod pri;
pub mod reductions;
pub mod sparse;
pub mod ssp;
pub mod tolerance;

pub use error::{Error, Result};
pub use gpro::{Decision, DecisionKind, Digraph, Edge, EdgeId, GproInstance, NodeId, Policy, Zapping};
pub use hitting::{HittingTimes, PageRank, TransitionMatrix};
pub use pri::{PriTrace, Sense};
pub use ssp::{SspInstance, SspPolicy};
