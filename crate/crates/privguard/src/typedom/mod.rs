//! Byte-level type domain: type tables with their subtype order, predicates
//! over integers, abstract value types and memory labelings.

mod label;
mod pred;
mod table;
mod vtype;

pub use label::{
    check_labeling, infer_labeling, interpret, interpret_byte, is_adjacency_closed, leaf_contains, vtype_contains,
    LabelViolation, Labeling, MemView,
};
pub use pred::{Env, PBinop, PCmp, PExpr, PredError, Predicate};
pub use table::{ArrayLen, ByteType, Field, TableError, TypeDef, TypeId, TypeTable, WORD};
pub use vtype::{ptr_arith, type_load, type_store, value_fits, TypeError, TypeStore, VType};
