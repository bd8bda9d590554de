use super::value::{refine_compare, NumAbstract};
use crate::ir::{Binop, Expr, Reg, Unop};
use std::collections::BTreeMap;
use std::fmt;

/// A tracked memory chunk: `size` bytes starting at its key.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Cell {
    pub size: u8,
    pub val: NumAbstract,
}

/// Numeric abstract store over registers and fixed-address memory cells.
/// Bytes not covered by a cell are unknown.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct NumStore {
    bottom: bool,
    regs: [NumAbstract; 16],
    cells: BTreeMap<u64, Cell>,
}

/// Source of constant memory contents (read-only image sections).
pub trait ConstMemory {
    fn read_const(&self, addr: u64, size: u8) -> Option<u64>;
}

impl ConstMemory for () {
    fn read_const(&self, _: u64, _: u8) -> Option<u64> {
        None
    }
}

/// Loads from at most this many candidate addresses are evaluated one by one.
const LOAD_FANOUT: usize = 64;

impl NumStore {
    pub fn top() -> NumStore {
        NumStore { bottom: false, regs: Reg::ALL.map(|r| NumAbstract::top(r.width())), cells: BTreeMap::new() }
    }

    pub fn bottom() -> NumStore {
        NumStore { bottom: true, ..NumStore::top() }
    }

    pub fn is_bottom(&self) -> bool {
        self.bottom
    }

    pub fn reg(&self, r: Reg) -> NumAbstract {
        if self.bottom {
            return NumAbstract::bottom(r.width());
        }
        self.regs[r.index()]
    }

    pub fn set_reg(&mut self, r: Reg, v: NumAbstract) {
        assert_eq!(v.width(), r.width(), "register {} written with wrong width", r.name());
        if v.is_bottom() {
            *self = NumStore::bottom();
            return;
        }
        self.regs[r.index()] = v;
    }

    pub fn cells(&self) -> impl Iterator<Item = (u64, &Cell)> {
        self.cells.iter().map(|(a, c)| (*a, c))
    }

    pub fn cell(&self, addr: u64) -> Option<&Cell> {
        self.cells.get(&addr)
    }

    /// Declares a cell, e.g. from an annotation, replacing overlapping ones.
    pub fn declare_cell(&mut self, addr: u64, size: u8, val: NumAbstract) {
        self.strong_write(addr, size, val);
    }

    pub fn forget_cell(&mut self, addr: u64) {
        self.cells.remove(&addr);
    }

    fn overlapping(&self, lo: u64, hi: u64) -> Vec<u64> {
        // cells are at most 8 bytes, so only keys from lo-7 can overlap
        self.cells
            .range(lo.saturating_sub(7)..=hi)
            .filter(|(a, c)| **a + c.size as u64 > lo)
            .map(|(a, _)| *a)
            .collect()
    }

    fn strong_write(&mut self, addr: u64, size: u8, val: NumAbstract) {
        let end = addr + size as u64;
        for a in self.overlapping(addr, end - 1) {
            let c = self.cells.remove(&a).unwrap();
            // keep the bytes of the old cell that are not overwritten
            for i in 0..c.size as u64 {
                let b = a + i;
                if b < addr || b >= end {
                    let byte = NumAbstract::unop(Unop::Extract((8 * i) as u8, (8 * i + 7) as u8), &c.val);
                    if !byte.is_top() {
                        self.cells.insert(b, Cell { size: 1, val: byte });
                    }
                }
            }
        }
        if !val.is_top() {
            self.cells.insert(addr, Cell { size, val });
        }
    }

    /// Numeric value of the `size` bytes at the concrete address `addr`.
    pub fn read(&self, addr: u64, size: u8, konst: &dyn ConstMemory) -> NumAbstract {
        let w = size * 8;
        if self.bottom {
            return NumAbstract::bottom(w);
        }
        if let Some(v) = konst.read_const(addr, size) {
            return NumAbstract::constant(v, w);
        }
        if let Some(c) = self.cells.get(&addr) {
            if c.size == size {
                return c.val;
            }
            if c.size > size {
                return NumAbstract::unop(Unop::Extract(0, w - 1), &c.val);
            }
        }
        let end = addr + size as u64;
        // containing cell starting below addr
        for a in self.overlapping(addr, end - 1) {
            let c = &self.cells[&a];
            if a < addr && a + c.size as u64 >= end {
                let lo = (8 * (addr - a)) as u8;
                return NumAbstract::unop(Unop::Extract(lo, lo + w - 1), &c.val);
            }
        }
        // composition of cells covering the range exactly
        let mut pos = addr;
        let mut acc: Option<NumAbstract> = None;
        while pos < end {
            match self.cells.get(&pos) {
                Some(c) if pos + c.size as u64 <= end => {
                    acc = Some(match acc {
                        None => c.val,
                        Some(low) => NumAbstract::binop(Binop::Concat, &c.val, &low),
                    });
                    pos += c.size as u64;
                }
                _ => return NumAbstract::top(w),
            }
        }
        acc.unwrap_or_else(|| NumAbstract::top(w))
    }

    /// Writes `val` at every address in `addr`. The update is strong when the
    /// address is a singleton and `strong` is set, weak otherwise.
    pub fn store_to(&mut self, addr: &NumAbstract, size: u8, val: &NumAbstract, strong: bool) {
        if self.bottom {
            return;
        }
        if addr.is_bottom() || val.is_bottom() {
            *self = NumStore::bottom();
            return;
        }
        if let (Some(a), true) = (addr.as_const(), strong) {
            self.strong_write(a, size, *val);
            return;
        }
        let (lo, hi) = addr.urange().unwrap();
        let end = hi.saturating_add(size as u64 - 1);
        for a in self.overlapping(lo, end) {
            let c = self.cells[&a];
            if c.size == size && addr.contains(a) {
                let j = c.val.join(val);
                if j.is_top() {
                    self.cells.remove(&a);
                } else {
                    self.cells.insert(a, Cell { size, val: j });
                }
                continue;
            }
            let touched = (0..c.size as u64).any(|i| {
                let b = a + i;
                (b.saturating_sub(size as u64 - 1)..=b).any(|s| addr.contains(s))
            });
            if touched {
                self.cells.remove(&a);
            }
        }
    }

    pub fn leq(&self, o: &NumStore) -> bool {
        if self.bottom {
            return true;
        }
        if o.bottom {
            return false;
        }
        self.regs.iter().zip(o.regs.iter()).all(|(a, b)| a.leq(b))
            && o.cells.iter().all(|(a, c)| match self.cells.get(a) {
                Some(s) => s.size == c.size && s.val.leq(&c.val),
                None => c.val.is_top(),
            })
    }

    fn combine(&self, o: &NumStore, f: impl Fn(&NumAbstract, &NumAbstract) -> NumAbstract) -> NumStore {
        if self.bottom {
            return o.clone();
        }
        if o.bottom {
            return self.clone();
        }
        let mut regs = self.regs;
        for (i, r) in regs.iter_mut().enumerate() {
            *r = f(&self.regs[i], &o.regs[i]);
        }
        let mut cells = BTreeMap::new();
        for (a, c) in &self.cells {
            if let Some(d) = o.cells.get(a) {
                if d.size == c.size {
                    let v = f(&c.val, &d.val);
                    if !v.is_top() {
                        cells.insert(*a, Cell { size: c.size, val: v });
                    }
                }
            }
        }
        NumStore { bottom: false, regs, cells }
    }

    pub fn join(&self, o: &NumStore) -> NumStore {
        self.combine(o, |a, b| a.join(b))
    }

    pub fn widen(&self, o: &NumStore, thresholds: &[u64]) -> NumStore {
        self.combine(o, |a, b| a.widen(b, thresholds))
    }

    /// Abstract evaluation of `e`.
    pub fn eval(&self, e: &Expr, konst: &dyn ConstMemory) -> NumAbstract {
        if self.bottom {
            return NumAbstract::bottom(e.width());
        }
        match e {
            Expr::Const(b) => NumAbstract::constant(b.value(), b.width()),
            Expr::Reg(r) => self.regs[r.index()],
            Expr::Load(size, a) => {
                let addr = self.eval(a, konst);
                self.load(&addr, *size, konst)
            }
            Expr::Unop(op, x) => NumAbstract::unop(*op, &self.eval(x, konst)),
            Expr::Binop(op, a, b) => NumAbstract::binop(*op, &self.eval(a, konst), &self.eval(b, konst)),
        }
    }

    pub fn load(&self, addr: &NumAbstract, size: u8, konst: &dyn ConstMemory) -> NumAbstract {
        match addr.enumerate(LOAD_FANOUT) {
            Some(addrs) => addrs
                .into_iter()
                .fold(NumAbstract::bottom(size * 8), |acc, a| acc.join(&self.read(a, size, konst))),
            None => NumAbstract::top(size * 8),
        }
    }

    /// Refines the store with the knowledge that `e` (an l-value-like
    /// expression) evaluates within `v`.
    fn refine_expr(&mut self, e: &Expr, v: &NumAbstract, konst: &dyn ConstMemory) {
        if v.is_bottom() {
            *self = NumStore::bottom();
            return;
        }
        match e {
            Expr::Reg(r) => {
                let nv = self.regs[r.index()].meet(v);
                self.set_reg(*r, nv);
            }
            Expr::Load(size, a) => {
                if let Some(addr) = self.eval(a, konst).as_const() {
                    if konst.read_const(addr, *size).is_some() {
                        return;
                    }
                    let nv = self.read(addr, *size, konst).meet(v);
                    if nv.is_bottom() {
                        *self = NumStore::bottom();
                    } else {
                        self.strong_write(addr, *size, nv);
                    }
                }
            }
            Expr::Binop(op @ (Binop::Add | Binop::Sub), x, k) => {
                let kv = self.eval(k, konst);
                if kv.as_const().is_none() {
                    return;
                }
                let inv = if *op == Binop::Add { Binop::Sub } else { Binop::Add };
                let xv = NumAbstract::binop(inv, v, &kv);
                self.refine_expr(x, &xv, konst);
            }
            Expr::Unop(Unop::Uext(_), x) => {
                let w = x.width();
                let (lo, hi) = v.urange().unwrap();
                if lo > crate::ir::mask(w) {
                    *self = NumStore::bottom();
                    return;
                }
                let xv = NumAbstract::range(lo, hi.min(crate::ir::mask(w)), w);
                self.refine_expr(x, &xv, konst);
            }
            _ => {}
        }
    }

    /// Restricts the store to states where `cond` (of width 1) holds.
    pub fn assume(&self, cond: &Expr, konst: &dyn ConstMemory) -> NumStore {
        self.assume_bool(cond, true, konst)
    }

    pub fn assume_bool(&self, cond: &Expr, truth: bool, konst: &dyn ConstMemory) -> NumStore {
        if self.bottom {
            return self.clone();
        }
        let cv = self.eval(cond, konst);
        if !(if truth { cv.may_be_true() } else { cv.may_be_false() }) {
            return NumStore::bottom();
        }
        let mut st = self.clone();
        match cond {
            Expr::Const(_) => {}
            Expr::Unop(Unop::Not, c) if c.width() == 1 => return self.assume_bool(c, !truth, konst),
            Expr::Binop(Binop::And, a, b) if a.width() == 1 && truth => {
                return self.assume_bool(a, true, konst).assume_bool(b, true, konst);
            }
            Expr::Binop(Binop::Or, a, b) if a.width() == 1 && !truth => {
                return self.assume_bool(a, false, konst).assume_bool(b, false, konst);
            }
            Expr::Binop(Binop::And, a, b) if a.width() == 1 => {
                return self.assume_bool(a, false, konst).join(&self.assume_bool(b, false, konst));
            }
            Expr::Binop(Binop::Or, a, b) if a.width() == 1 => {
                return self.assume_bool(a, true, konst).join(&self.assume_bool(b, true, konst));
            }
            Expr::Binop(op @ (Binop::Eq | Binop::Ne), a, b) if a.width() == 1 => {
                // c == 1, c != 0 and friends
                if let Some(k) = self.eval(b, konst).as_const() {
                    let t = (k != 0) == ((*op == Binop::Eq) == truth);
                    return self.assume_bool(a, t, konst);
                }
            }
            Expr::Binop(op, a, b) if op.is_cmp() => {
                let (av, bv) = (st.eval(a, konst), st.eval(b, konst));
                let (na, nb) = refine_compare(*op, &av, &bv, truth);
                st.refine_expr(a, &na, konst);
                st.refine_expr(b, &nb, konst);
                st.refine_masked(*op, a, b, truth, konst);
            }
            e => {
                // a width-1 value used as a condition
                let v = if truth { NumAbstract::constant(1, 1) } else { NumAbstract::constant(0, 1) };
                st.refine_expr(e, &v, konst);
            }
        }
        st
    }

    /// `(x & (2^t - 1)) == k` fixes the low bits of `x`.
    fn refine_masked(&mut self, op: Binop, a: &Expr, b: &Expr, truth: bool, konst: &dyn ConstMemory) {
        if (op == Binop::Eq) != truth {
            return;
        }
        let Expr::Binop(Binop::And, x, m) = a else { return };
        let (Some(mv), Some(k)) = (self.eval(m, konst).as_const(), self.eval(b, konst).as_const()) else { return };
        if mv == 0 || (mv & (mv + 1)) != 0 {
            return;
        }
        let xv = self.eval(x, konst).with_congruence(super::Congruence::new(mv + 1, k));
        self.refine_expr(x, &xv, konst);
    }
}

impl fmt::Display for NumStore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.bottom {
            return f.write_str("⊥");
        }
        for r in Reg::ALL {
            let v = self.regs[r.index()];
            if !v.is_top() {
                writeln!(f, "{} = {v}", r.name())?;
            }
        }
        for (a, c) in &self.cells {
            writeln!(f, "[{a:#x}]{} = {}", c.size, c.val)?;
        }
        Ok(())
    }
}
