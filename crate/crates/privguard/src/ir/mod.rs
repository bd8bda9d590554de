//! The kernel intermediate representation: bitvector expressions, a small
//! statement set, a fixed-width binary encoding and a textual assembly form.

mod asm;
mod bv;
mod encode;

pub use asm::{parse_program, print_program, ParseError};
pub use bv::{apply_binop, apply_unop, from_signed, mask, to_signed, Binop, Bv, DivByZero, Unop};
pub use encode::{decode_instruction, encode_instruction, DecodeFault, EncodeError};

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

/// Every instruction occupies exactly this many bytes of memory.
pub const INSTR_SIZE: u64 = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Reg {
    R0,
    R1,
    R2,
    R3,
    R4,
    R5,
    R6,
    R7,
    Sp,
    Pc,
    Flags,
    Mpu1,
    Mpu2,
    /// Banked stack pointer (`sp'`).
    SpB,
    /// Banked program counter (`pc'`).
    PcB,
    /// Banked flags (`flags'`).
    FlagsB,
}

impl Reg {
    pub const ALL: [Reg; 16] = [
        Reg::R0,
        Reg::R1,
        Reg::R2,
        Reg::R3,
        Reg::R4,
        Reg::R5,
        Reg::R6,
        Reg::R7,
        Reg::Sp,
        Reg::Pc,
        Reg::Flags,
        Reg::Mpu1,
        Reg::Mpu2,
        Reg::SpB,
        Reg::PcB,
        Reg::FlagsB,
    ];

    pub const USER: [Reg; 11] = [
        Reg::R0,
        Reg::R1,
        Reg::R2,
        Reg::R3,
        Reg::R4,
        Reg::R5,
        Reg::R6,
        Reg::R7,
        Reg::Sp,
        Reg::Pc,
        Reg::Flags,
    ];

    pub const SYSTEM: [Reg; 5] = [Reg::Mpu1, Reg::Mpu2, Reg::SpB, Reg::PcB, Reg::FlagsB];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Reg> {
        Reg::ALL.get(i).copied()
    }

    pub fn width(self) -> u8 {
        match self {
            Reg::Mpu1 | Reg::Mpu2 => 64,
            _ => 32,
        }
    }

    pub fn is_system(self) -> bool {
        Reg::SYSTEM.contains(&self)
    }

    pub fn name(self) -> &'static str {
        match self {
            Reg::R0 => "r0",
            Reg::R1 => "r1",
            Reg::R2 => "r2",
            Reg::R3 => "r3",
            Reg::R4 => "r4",
            Reg::R5 => "r5",
            Reg::R6 => "r6",
            Reg::R7 => "r7",
            Reg::Sp => "sp",
            Reg::Pc => "pc",
            Reg::Flags => "flags",
            Reg::Mpu1 => "mpu1",
            Reg::Mpu2 => "mpu2",
            Reg::SpB => "sp'",
            Reg::PcB => "pc'",
            Reg::FlagsB => "flags'",
        }
    }

    pub fn from_name(s: &str) -> Option<Reg> {
        Reg::ALL.iter().copied().find(|r| r.name() == s)
    }
}

impl fmt::Display for Reg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Expr {
    Const(Bv),
    Reg(Reg),
    /// Little-endian load of `size` bytes (1, 2, 4 or 8).
    Load(u8, Box<Expr>),
    Unop(Unop, Box<Expr>),
    Binop(Binop, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn cst(value: u64, width: u8) -> Expr {
        Expr::Const(Bv::new(value, width))
    }

    pub fn reg(r: Reg) -> Expr {
        Expr::Reg(r)
    }

    pub fn load(size: u8, addr: Expr) -> Expr {
        Expr::Load(size, Box::new(addr))
    }

    pub fn unop(op: Unop, e: Expr) -> Expr {
        Expr::Unop(op, Box::new(e))
    }

    pub fn binop(op: Binop, a: Expr, b: Expr) -> Expr {
        Expr::Binop(op, Box::new(a), Box::new(b))
    }

    /// Result width; assumes the expression is well formed.
    pub fn width(&self) -> u8 {
        match self {
            Expr::Const(b) => b.width(),
            Expr::Reg(r) => r.width(),
            Expr::Load(sz, _) => sz * 8,
            Expr::Unop(op, e) => op.result_width(e.width()).unwrap_or(0),
            Expr::Binop(op, a, b) => op.result_width(a.width(), b.width()).unwrap_or(0),
        }
    }

    /// Checks operand widths bottom-up; load addresses must have `addr_width`.
    pub fn check(&self, addr_width: u8) -> Result<u8, String> {
        match self {
            Expr::Const(b) => Ok(b.width()),
            Expr::Reg(r) => Ok(r.width()),
            Expr::Load(sz, a) => {
                if !matches!(sz, 1 | 2 | 4 | 8) {
                    return Err(format!("load size {sz} is not 1, 2, 4 or 8"));
                }
                let aw = a.check(addr_width)?;
                if aw != addr_width {
                    return Err(format!("load address has width {aw}, expected {addr_width}"));
                }
                Ok(sz * 8)
            }
            Expr::Unop(op, e) => {
                let w = e.check(addr_width)?;
                op.result_width(w).ok_or_else(|| format!("{op:?} not applicable to width {w}"))
            }
            Expr::Binop(op, a, b) => {
                let (wa, wb) = (a.check(addr_width)?, b.check(addr_width)?);
                op.result_width(wa, wb)
                    .ok_or_else(|| format!("operator {} applied to widths {wa} and {wb}", op.symbol()))
            }
        }
    }

    pub fn visit_loads<'a>(&'a self, f: &mut impl FnMut(u8, &'a Expr)) {
        match self {
            Expr::Const(_) | Expr::Reg(_) => {}
            Expr::Load(sz, a) => {
                a.visit_loads(f);
                f(*sz, a);
            }
            Expr::Unop(_, e) => e.visit_loads(f),
            Expr::Binop(_, a, b) => {
                a.visit_loads(f);
                b.visit_loads(f);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Instr {
    Assign(Reg, Expr),
    /// Stores `value` (1, 2, 4 or 8 bytes wide) at `addr`.
    Store { addr: Expr, value: Expr },
    Goto(Expr),
    /// Conditional goto: jumps `offset` instructions away when `cond` holds,
    /// otherwise falls through to the next instruction.
    Branch { cond: Expr, offset: i16 },
    /// Return from interrupt: swaps `sp`, `flags` and `pc` with their banked copies.
    Rfi,
    /// Software interrupt with the given number.
    Trap(u8),
}

impl Instr {
    pub fn check(&self, addr_width: u8) -> Result<(), String> {
        match self {
            Instr::Assign(r, e) => {
                let w = e.check(addr_width)?;
                if w != r.width() {
                    return Err(format!("assigning width {w} to {} of width {}", r, r.width()));
                }
            }
            Instr::Store { addr, value } => {
                let aw = addr.check(addr_width)?;
                if aw != addr_width {
                    return Err(format!("store address has width {aw}, expected {addr_width}"));
                }
                let vw = value.check(addr_width)?;
                if !matches!(vw, 8 | 16 | 32 | 64) {
                    return Err(format!("stored value width {vw} is not a whole number of bytes"));
                }
            }
            Instr::Goto(e) => {
                let w = e.check(addr_width)?;
                if w != addr_width {
                    return Err(format!("goto target has width {w}, expected {addr_width}"));
                }
            }
            Instr::Branch { cond, .. } => {
                let w = cond.check(addr_width)?;
                if w != 1 {
                    return Err(format!("branch condition has width {w}, expected 1"));
                }
            }
            Instr::Rfi | Instr::Trap(_) => {}
        }
        Ok(())
    }

    /// Absolute target of a branch located at `pc`.
    pub fn branch_target(offset: i16, pc: u64, addr_width: u8) -> u64 {
        pc.wrapping_add((offset as i64 * INSTR_SIZE as i64) as u64) & mask(addr_width)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SectionAttr {
    #[serde(rename = "code-ro")]
    CodeRo,
    #[serde(rename = "data-rw")]
    DataRw,
    #[serde(rename = "data-ro")]
    DataRo,
}

impl SectionAttr {
    pub fn name(self) -> &'static str {
        match self {
            SectionAttr::CodeRo => "code-ro",
            SectionAttr::DataRw => "data-rw",
            SectionAttr::DataRo => "data-ro",
        }
    }

    pub fn parse(s: &str) -> Option<SectionAttr> {
        match s {
            "code-ro" => Some(SectionAttr::CodeRo),
            "data-rw" => Some(SectionAttr::DataRw),
            "data-ro" => Some(SectionAttr::DataRo),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Section {
    pub name: String,
    pub base: u64,
    pub attr: SectionAttr,
    /// Initial bytes; for code sections these are the encoded instructions.
    pub bytes: Vec<u8>,
}

impl Section {
    pub fn end(&self) -> u64 {
        self.base + self.bytes.len() as u64
    }

    pub fn contains(&self, a: u64) -> bool {
        a >= self.base && a < self.end()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Hint {
    Call,
    Return,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Program {
    pub addr_width: u8,
    pub sections: Vec<Section>,
    pub instrs: BTreeMap<u64, Instr>,
    pub hints: BTreeMap<u64, Hint>,
    pub labels: BTreeMap<String, u64>,
    /// Reset (and interrupt) vector.
    pub entry: Option<u64>,
}

impl Program {
    pub fn instr_at(&self, a: u64) -> Option<&Instr> {
        self.instrs.get(&a)
    }

    pub fn label(&self, name: &str) -> Option<u64> {
        self.labels.get(name).copied()
    }

    pub fn section_of(&self, a: u64) -> Option<&Section> {
        self.sections.iter().find(|s| s.contains(a))
    }

    /// Initial byte at `a`, if it lies in some section.
    pub fn byte_at(&self, a: u64) -> Option<u8> {
        self.section_of(a).map(|s| s.bytes[(a - s.base) as usize])
    }

    pub fn instruction_count(&self) -> usize {
        self.instrs.len()
    }
}

/// Source of register and memory values for [`eval_expr`].
pub trait Reader {
    type Error: From<DivByZero>;
    fn reg(&mut self, r: Reg) -> u64;
    fn load(&mut self, addr: u64, size: u8) -> Result<u64, Self::Error>;
}

/// Concrete evaluation with modular two's-complement semantics.
pub fn eval_expr<R: Reader>(e: &Expr, rd: &mut R) -> Result<Bv, R::Error> {
    Ok(match e {
        Expr::Const(b) => *b,
        Expr::Reg(r) => Bv::new(rd.reg(*r), r.width()),
        Expr::Load(sz, a) => {
            let addr = eval_expr(a, rd)?;
            Bv::new(rd.load(addr.value(), *sz)?, sz * 8)
        }
        Expr::Unop(op, x) => {
            let v = eval_expr(x, rd)?;
            let w = op.result_width(v.width()).expect("ill-typed unop");
            Bv::new(apply_unop(*op, v.value(), v.width()), w)
        }
        Expr::Binop(op, a, b) => {
            let (x, y) = (eval_expr(a, rd)?, eval_expr(b, rd)?);
            let w = op.result_width(x.width(), y.width()).expect("ill-typed binop");
            Bv::new(apply_binop(*op, x.value(), y.value(), x.width(), y.width())?, w)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Regs([u64; 16]);

    impl Reader for Regs {
        type Error = DivByZero;
        fn reg(&mut self, r: Reg) -> u64 {
            self.0[r.index()]
        }
        fn load(&mut self, addr: u64, _size: u8) -> Result<u64, DivByZero> {
            Ok(addr ^ 0xFF)
        }
    }

    #[test]
    fn eval_nested() {
        let mut rd = Regs([0; 16]);
        rd.0[1] = 40;
        let e = Expr::binop(Binop::Add, Expr::reg(Reg::R1), Expr::cst(2, 32));
        assert_eq!(eval_expr(&e, &mut rd), Ok(Bv::new(42, 32)));
        let c = Expr::binop(Binop::Ult, Expr::reg(Reg::R1), Expr::cst(41, 32));
        assert_eq!(eval_expr(&c, &mut rd), Ok(Bv::bool(true)));
        let d = Expr::binop(Binop::Udiv, Expr::reg(Reg::R1), Expr::cst(0, 32));
        assert_eq!(eval_expr(&d, &mut rd), Err(DivByZero));
    }

    #[test]
    fn width_checks() {
        let bad = Expr::binop(Binop::Add, Expr::cst(1, 8), Expr::cst(1, 32));
        assert!(bad.check(32).is_err());
        let i = Instr::Assign(Reg::Mpu1, Expr::cst(0, 32));
        assert!(i.check(32).is_err());
        assert!(Instr::Goto(Expr::cst(0, 8)).check(8).is_ok());
    }

    #[test]
    fn register_partition() {
        for r in Reg::ALL {
            assert_eq!(Reg::USER.contains(&r), !r.is_system());
            assert_eq!(Reg::from_name(r.name()), Some(r));
        }
    }
}
