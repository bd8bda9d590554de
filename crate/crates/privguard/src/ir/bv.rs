//! Width-tagged machine integers and their operator semantics.

use serde::{Deserialize, Serialize};
use std::fmt;

/// Mask with the low `width` bits set.
pub fn mask(width: u8) -> u64 {
    debug_assert!((1..=64).contains(&width));
    if width >= 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

/// Reads `v` (already reduced to `width` bits) as a two's-complement integer.
pub fn to_signed(v: u64, width: u8) -> i64 {
    if width >= 64 {
        return v as i64;
    }
    let sign = 1u64 << (width - 1);
    if v & sign != 0 {
        (v | !mask(width)) as i64
    } else {
        v as i64
    }
}

pub fn from_signed(v: i64, width: u8) -> u64 {
    (v as u64) & mask(width)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Bv {
    width: u8,
    value: u64,
}

impl Bv {
    /// Builds a bitvector, reducing `value` modulo 2^width.
    pub fn new(value: u64, width: u8) -> Bv {
        assert!((1..=64).contains(&width), "bitvector width {width} out of range");
        Bv { width, value: value & mask(width) }
    }

    pub fn width(self) -> u8 {
        self.width
    }

    pub fn value(self) -> u64 {
        self.value
    }

    pub fn signed(self) -> i64 {
        to_signed(self.value, self.width)
    }

    pub fn bool(b: bool) -> Bv {
        Bv::new(b as u64, 1)
    }

    pub fn is_true(self) -> bool {
        self.value != 0
    }
}

impl fmt::Display for Bv {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.value < 10 {
            write!(f, "{}:{}", self.value, self.width)
        } else {
            write!(f, "{:#x}:{}", self.value, self.width)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Unop {
    Not,
    Neg,
    /// Zero-extend to the given width.
    Uext(u8),
    /// Sign-extend to the given width.
    Sext(u8),
    /// Inclusive bit range `lo..=hi`, bit 0 being the least significant.
    Extract(u8, u8),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Binop {
    Add,
    Sub,
    Mul,
    Udiv,
    Urem,
    Sdiv,
    Srem,
    And,
    Or,
    Xor,
    Shl,
    Shr,
    Sar,
    Eq,
    Ne,
    Ugt,
    Ult,
    Sgt,
    Slt,
    Concat,
}

impl Binop {
    pub const ALL: [Binop; 20] = [
        Binop::Add,
        Binop::Sub,
        Binop::Mul,
        Binop::Udiv,
        Binop::Urem,
        Binop::Sdiv,
        Binop::Srem,
        Binop::And,
        Binop::Or,
        Binop::Xor,
        Binop::Shl,
        Binop::Shr,
        Binop::Sar,
        Binop::Eq,
        Binop::Ne,
        Binop::Ugt,
        Binop::Ult,
        Binop::Sgt,
        Binop::Slt,
        Binop::Concat,
    ];

    pub fn is_cmp(self) -> bool {
        matches!(self, Binop::Eq | Binop::Ne | Binop::Ugt | Binop::Ult | Binop::Sgt | Binop::Slt)
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Binop::Add => "+",
            Binop::Sub => "-",
            Binop::Mul => "*",
            Binop::Udiv => "/u",
            Binop::Urem => "%u",
            Binop::Sdiv => "/s",
            Binop::Srem => "%s",
            Binop::And => "&",
            Binop::Or => "|",
            Binop::Xor => "^",
            Binop::Shl => "<<",
            Binop::Shr => ">>u",
            Binop::Sar => ">>s",
            Binop::Eq => "==",
            Binop::Ne => "!=",
            Binop::Ugt => ">u",
            Binop::Ult => "<u",
            Binop::Sgt => ">s",
            Binop::Slt => "<s",
            Binop::Concat => "::",
        }
    }

    /// Result width given the operand widths, or `None` when ill-typed.
    pub fn result_width(self, a: u8, b: u8) -> Option<u8> {
        match self {
            Binop::Concat => {
                let w = a as u16 + b as u16;
                (w <= 64).then_some(w as u8)
            }
            _ if a != b => None,
            op if op.is_cmp() => Some(1),
            _ => Some(a),
        }
    }
}

impl Unop {
    pub fn result_width(self, a: u8) -> Option<u8> {
        match self {
            Unop::Not | Unop::Neg => Some(a),
            Unop::Uext(w) | Unop::Sext(w) => (w >= a && w <= 64).then_some(w),
            Unop::Extract(lo, hi) => (lo <= hi && hi < a).then_some(hi - lo + 1),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
#[error("division by zero")]
pub struct DivByZero;

/// Applies `op` to two reduced operands of width `w` (concat: widths `w` and `wb`).
pub fn apply_binop(op: Binop, a: u64, b: u64, w: u8, wb: u8) -> Result<u64, DivByZero> {
    let m = mask(w);
    let r = match op {
        Binop::Add => a.wrapping_add(b) & m,
        Binop::Sub => a.wrapping_sub(b) & m,
        Binop::Mul => a.wrapping_mul(b) & m,
        Binop::Udiv => {
            if b == 0 {
                return Err(DivByZero);
            }
            a / b
        }
        Binop::Urem => {
            if b == 0 {
                return Err(DivByZero);
            }
            a % b
        }
        Binop::Sdiv => {
            if b == 0 {
                return Err(DivByZero);
            }
            let (x, y) = (to_signed(a, w), to_signed(b, w));
            from_signed(x.wrapping_div(y), w)
        }
        Binop::Srem => {
            if b == 0 {
                return Err(DivByZero);
            }
            let (x, y) = (to_signed(a, w), to_signed(b, w));
            from_signed(x.wrapping_rem(y), w)
        }
        Binop::And => a & b,
        Binop::Or => a | b,
        Binop::Xor => a ^ b,
        Binop::Shl => {
            if b >= w as u64 {
                0
            } else {
                (a << b) & m
            }
        }
        Binop::Shr => {
            if b >= w as u64 {
                0
            } else {
                a >> b
            }
        }
        Binop::Sar => {
            let x = to_signed(a, w);
            let sh = b.min(w as u64 - 1);
            from_signed(x >> sh, w)
        }
        Binop::Eq => (a == b) as u64,
        Binop::Ne => (a != b) as u64,
        Binop::Ugt => (a > b) as u64,
        Binop::Ult => (a < b) as u64,
        Binop::Sgt => (to_signed(a, w) > to_signed(b, w)) as u64,
        Binop::Slt => (to_signed(a, w) < to_signed(b, w)) as u64,
        Binop::Concat => {
            if wb >= 64 {
                b
            } else {
                (a << wb) | b
            }
        }
    };
    Ok(r)
}

pub fn apply_unop(op: Unop, a: u64, w: u8) -> u64 {
    match op {
        Unop::Not => !a & mask(w),
        Unop::Neg => a.wrapping_neg() & mask(w),
        Unop::Uext(_) => a,
        Unop::Sext(to) => from_signed(to_signed(a, w), to),
        Unop::Extract(lo, hi) => (a >> lo) & mask(hi - lo + 1),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modular_add_wraps() {
        assert_eq!(apply_binop(Binop::Add, 0xFE, 0x03, 8, 8), Ok(0x01));
    }

    #[test]
    fn extensions() {
        assert_eq!(apply_unop(Unop::Uext(16), 0xFF, 8), 0x00FF);
        assert_eq!(apply_unop(Unop::Sext(16), 0xFF, 8), 0xFFFF);
    }

    #[test]
    fn signed_division_overflow_wraps() {
        assert_eq!(apply_binop(Binop::Sdiv, 0x80, 0xFF, 8, 8), Ok(0x80));
        assert_eq!(apply_binop(Binop::Srem, 0x80, 0xFF, 8, 8), Ok(0x00));
        assert_eq!(apply_binop(Binop::Udiv, 1, 0, 8, 8), Err(DivByZero));
    }

    #[test]
    fn oversized_shifts() {
        assert_eq!(apply_binop(Binop::Shl, 1, 8, 8, 8), Ok(0));
        assert_eq!(apply_binop(Binop::Shr, 0x80, 9, 8, 8), Ok(0));
        assert_eq!(apply_binop(Binop::Sar, 0x80, 200, 8, 8), Ok(0xFF));
        assert_eq!(apply_binop(Binop::Sar, 0x40, 200, 8, 8), Ok(0));
    }

    #[test]
    fn extract_is_inclusive_little_endian() {
        assert_eq!(apply_unop(Unop::Extract(4, 7), 0xA5, 8), 0xA);
        assert_eq!(Unop::Extract(0, 7).result_width(32), Some(8));
        assert_eq!(Unop::Extract(3, 8).result_width(8), None);
    }

    #[test]
    fn concat_width_and_value() {
        assert_eq!(Binop::Concat.result_width(8, 16), Some(24));
        assert_eq!(apply_binop(Binop::Concat, 0xAB, 0x1234, 8, 16), Ok(0xAB1234));
    }
}
