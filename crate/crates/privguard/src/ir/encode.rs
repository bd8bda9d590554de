//! Fixed-width binary encoding.
//!
//! Byte 0 is the opcode; operands follow as a self-delimiting prefix code
//! and the remainder of the 8-byte slot must be zero.
//!
//! | tag            | meaning                                              |
//! |----------------|------------------------------------------------------|
//! | `0x00..=0x0F`  | register by index                                    |
//! | `0x10..=0x3C`  | constant, `0x10 + 9*class + n`, `n` value bytes      |
//! | `0x3D`         | constant of any width: width, `n`, `n` value bytes   |
//! | `0x40..=0x43`  | load of 1/2/4/8 bytes, then address                  |
//! | `0x48..=0x4C`  | not, neg, uext(w), sext(w), extract(lo, hi)          |
//! | `0x50..=0x63`  | binary operator, then both operands                  |
//!
//! Width classes are 1, 8, 16, 32, 64 bits. Constant value bytes are
//! little-endian and minimal (no trailing zero byte).

use super::{Binop, Bv, Expr, Instr, Reg, Unop, INSTR_SIZE};

const OP_ASSIGN: u8 = 0x01;
const OP_STORE: u8 = 0x02;
const OP_GOTO: u8 = 0x03;
const OP_BRANCH: u8 = 0x04;
const OP_RFI: u8 = 0x05;
const OP_TRAP: u8 = 0x06;

const CONST_BASE: u8 = 0x10;
const CONST_ANY: u8 = 0x3D;
const LOAD_BASE: u8 = 0x40;
const UN_NOT: u8 = 0x48;
const UN_NEG: u8 = 0x49;
const UN_UEXT: u8 = 0x4A;
const UN_SEXT: u8 = 0x4B;
const UN_EXTRACT: u8 = 0x4C;
const BIN_BASE: u8 = 0x50;

const WIDTH_CLASSES: [u8; 5] = [1, 8, 16, 32, 64];

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum EncodeError {
    #[error("instruction needs {0} bytes, more than the 8-byte slot")]
    TooLarge(usize),
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("cannot decode instruction bytes {bytes:02x?}: {reason}")]
pub struct DecodeFault {
    pub bytes: [u8; 8],
    pub reason: String,
}

fn value_bytes(v: u64) -> Vec<u8> {
    let mut out = v.to_le_bytes().to_vec();
    while out.last() == Some(&0) {
        out.pop();
    }
    out
}

fn put_expr(e: &Expr, out: &mut Vec<u8>) {
    match e {
        Expr::Reg(r) => out.push(r.index() as u8),
        Expr::Const(b) => {
            let vb = value_bytes(b.value());
            match WIDTH_CLASSES.iter().position(|w| *w == b.width()) {
                Some(class) => out.push(CONST_BASE + 9 * class as u8 + vb.len() as u8),
                None => {
                    out.push(CONST_ANY);
                    out.push(b.width());
                    out.push(vb.len() as u8);
                }
            }
            out.extend(vb);
        }
        Expr::Load(sz, a) => {
            out.push(LOAD_BASE + sz.trailing_zeros() as u8);
            put_expr(a, out);
        }
        Expr::Unop(op, x) => {
            match *op {
                Unop::Not => out.push(UN_NOT),
                Unop::Neg => out.push(UN_NEG),
                Unop::Uext(w) => out.extend([UN_UEXT, w]),
                Unop::Sext(w) => out.extend([UN_SEXT, w]),
                Unop::Extract(lo, hi) => out.extend([UN_EXTRACT, lo, hi]),
            }
            put_expr(x, out);
        }
        Expr::Binop(op, a, b) => {
            let idx = Binop::ALL.iter().position(|o| o == op).unwrap() as u8;
            out.push(BIN_BASE + idx);
            put_expr(a, out);
            put_expr(b, out);
        }
    }
}

fn raw(i: &Instr) -> Vec<u8> {
    let mut out = Vec::with_capacity(8);
    match i {
        Instr::Assign(r, e) => {
            out.extend([OP_ASSIGN, r.index() as u8]);
            put_expr(e, &mut out);
        }
        Instr::Store { addr, value } => {
            out.push(OP_STORE);
            put_expr(addr, &mut out);
            put_expr(value, &mut out);
        }
        Instr::Goto(e) => {
            out.push(OP_GOTO);
            put_expr(e, &mut out);
        }
        Instr::Branch { cond, offset } => {
            out.push(OP_BRANCH);
            out.extend(offset.to_le_bytes());
            put_expr(cond, &mut out);
        }
        Instr::Rfi => out.push(OP_RFI),
        Instr::Trap(n) => out.extend([OP_TRAP, *n]),
    }
    out
}

pub fn encode_instruction(i: &Instr) -> Result<[u8; 8], EncodeError> {
    let v = raw(i);
    if v.len() > INSTR_SIZE as usize {
        return Err(EncodeError::TooLarge(v.len()));
    }
    let mut out = [0u8; 8];
    out[..v.len()].copy_from_slice(&v);
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8; 8],
    pos: usize,
}

impl Cursor<'_> {
    fn byte(&mut self) -> Result<u8, String> {
        let b = *self.bytes.get(self.pos).ok_or("operand runs past the slot")?;
        self.pos += 1;
        Ok(b)
    }

    fn expr(&mut self) -> Result<Expr, String> {
        let tag = self.byte()?;
        Ok(match tag {
            0x00..=0x0F => Expr::Reg(Reg::from_index(tag as usize).unwrap()),
            CONST_BASE..=0x3C | CONST_ANY => {
                let (width, n) = if tag == CONST_ANY {
                    let w = self.byte()?;
                    if !(1..=64).contains(&w) || WIDTH_CLASSES.contains(&w) {
                        return Err(format!("non-canonical constant width {w}"));
                    }
                    (w, self.byte()?)
                } else {
                    let k = tag - CONST_BASE;
                    (WIDTH_CLASSES[(k / 9) as usize], k % 9)
                };
                if n > 8 {
                    return Err("constant longer than 8 bytes".into());
                }
                let mut v = [0u8; 8];
                for slot in v.iter_mut().take(n as usize) {
                    *slot = self.byte()?;
                }
                if n > 0 && v[n as usize - 1] == 0 {
                    return Err("non-minimal constant".into());
                }
                let value = u64::from_le_bytes(v);
                if value != value & super::mask(width) {
                    return Err("constant exceeds its width".into());
                }
                Expr::Const(Bv::new(value, width))
            }
            0x40..=0x43 => Expr::load(1 << (tag - LOAD_BASE), self.expr()?),
            UN_NOT => Expr::unop(Unop::Not, self.expr()?),
            UN_NEG => Expr::unop(Unop::Neg, self.expr()?),
            UN_UEXT => {
                let w = self.byte()?;
                Expr::unop(Unop::Uext(w), self.expr()?)
            }
            UN_SEXT => {
                let w = self.byte()?;
                Expr::unop(Unop::Sext(w), self.expr()?)
            }
            UN_EXTRACT => {
                let (lo, hi) = (self.byte()?, self.byte()?);
                Expr::unop(Unop::Extract(lo, hi), self.expr()?)
            }
            t if (BIN_BASE..BIN_BASE + Binop::ALL.len() as u8).contains(&t) => {
                let op = Binop::ALL[(t - BIN_BASE) as usize];
                let a = self.expr()?;
                Expr::binop(op, a, self.expr()?)
            }
            t => return Err(format!("invalid operand tag {t:#04x}")),
        })
    }
}

/// Decodes one instruction slot. `addr_width` is used to type-check operands.
pub fn decode_instruction(bytes: &[u8; 8], addr_width: u8) -> Result<Instr, DecodeFault> {
    let fault = |reason: String| DecodeFault { bytes: *bytes, reason };
    let mut c = Cursor { bytes, pos: 0 };
    let op = c.byte().map_err(fault)?;
    let instr = match op {
        OP_ASSIGN => {
            let r = c.byte().map_err(fault)?;
            let r = Reg::from_index(r as usize).ok_or_else(|| fault(format!("bad register {r}")))?;
            Instr::Assign(r, c.expr().map_err(fault)?)
        }
        OP_STORE => {
            let addr = c.expr().map_err(fault)?;
            Instr::Store { addr, value: c.expr().map_err(fault)? }
        }
        OP_GOTO => Instr::Goto(c.expr().map_err(fault)?),
        OP_BRANCH => {
            let lo = c.byte().map_err(fault)?;
            let hi = c.byte().map_err(fault)?;
            Instr::Branch { offset: i16::from_le_bytes([lo, hi]), cond: c.expr().map_err(fault)? }
        }
        OP_RFI => Instr::Rfi,
        OP_TRAP => Instr::Trap(c.byte().map_err(fault)?),
        other => return Err(fault(format!("invalid opcode {other:#04x}"))),
    };
    if bytes[c.pos..].iter().any(|b| *b != 0) {
        return Err(fault("nonzero padding".into()));
    }
    instr.check(addr_width).map_err(fault)?;
    Ok(instr)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn opcode_ff_is_invalid() {
        let mut b = encode_instruction(&Instr::Rfi).unwrap();
        b[0] = 0xFF;
        assert!(decode_instruction(&b, 32).is_err());
        assert!(decode_instruction(&[0; 8], 32).is_err());
    }

    #[test]
    fn kernel_shaped_instructions_fit() {
        let i = Instr::Assign(
            Reg::Mpu1,
            Expr::load(8, Expr::binop(Binop::Add, Expr::reg(Reg::R1), Expr::cst(12, 32))),
        );
        let b = encode_instruction(&i).unwrap();
        assert_eq!(decode_instruction(&b, 32).unwrap(), i);
        let s = Instr::Store { addr: Expr::cst(0x20000, 32), value: Expr::reg(Reg::R1) };
        assert_eq!(decode_instruction(&encode_instruction(&s).unwrap(), 32).unwrap(), s);
    }

    #[test]
    fn oversized_rejected() {
        let big = Instr::Goto(Expr::binop(Binop::Add, Expr::cst(0x12345678, 32), Expr::cst(0x12345678, 32)));
        assert!(matches!(encode_instruction(&big), Err(EncodeError::TooLarge(_))));
    }

    #[test]
    fn odd_width_constant_round_trips() {
        let i = Instr::Assign(Reg::R0, Expr::unop(Unop::Uext(32), Expr::cst(5, 3)));
        let b = encode_instruction(&i).unwrap();
        assert_eq!(decode_instruction(&b, 32).unwrap(), i);
    }
}
