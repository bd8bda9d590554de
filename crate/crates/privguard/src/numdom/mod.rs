//! Numeric abstract domain: reduced product of signed/unsigned intervals and
//! congruences, lifted to registers and fixed-address memory cells.

mod congruence;
mod interval;
mod store;
mod value;

pub use congruence::{Congruence, KnownBits, MODULUS_CAP};
pub use interval::IntervalSU;
pub use store::{Cell, ConstMemory, NumStore};
pub use value::{compare, refine_compare, NumAbstract, WidthMismatch};

/// Widening thresholds for width `w`: 0, 1, the extremes of both readings
/// and the caller's extra values (structure sizes, region boundaries).
pub fn thresholds(w: u8, extra: &[u64]) -> Vec<u64> {
    let m = crate::ir::mask(w);
    let mut v = vec![0, 1, m, m >> 1, (m >> 1) + 1];
    v.extend(extra.iter().map(|x| x & m));
    v.sort_unstable();
    v.dedup();
    v
}
