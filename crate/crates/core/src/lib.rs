//! Type-independent resource theory of local operations and shared randomness.
//!
//! Resources are bipartite nonsignaling channels whose inputs and outputs may
//! be trivial, classical or quantum. The crate provides the channel calculus,
//! the type-encoding order, LOSR transformations, game-based comparison and
//! membership tests for the free set.

pub mod choi;
pub mod error;
pub mod games;
pub mod freeset;
pub mod linalg;
pub mod lp;
pub mod random;
pub mod resources;
pub mod seesaw;
pub mod transforms;
pub mod types;

pub use choi::ChoiOperator;
pub use error::{LosrError, Result};
pub use linalg::{CMatrix, C64};
pub use resources::{Assemblage, CorrelationTable, Party, PartySystems, PartyWiring, Resource};
pub use transforms::{LocalComb, LocalOp, LosrTransform};
pub use types::{GlobalType, PartitionType, SystemKind, SystemType};
