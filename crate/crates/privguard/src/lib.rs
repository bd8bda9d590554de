//! Static verification that a small kernel cannot be driven into privilege
//! escalation by its user tasks.
//!
//! The pipeline has three stages: type annotations are generated from layout
//! declarations ([`annot`]), a runtime invariant is computed by abstract
//! interpretation of the kernel ([`analyzer`]), and the boot code is run
//! concretely on a user image to check the invariant's precondition
//! ([`checker`]).

pub mod ir;
pub mod machine;
pub mod numdom;
pub mod typedom;
pub mod annot;
pub mod analyzer;
pub mod checker;
pub mod corpus;
