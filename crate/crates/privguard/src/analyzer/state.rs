use super::sink::Sinks;
use super::AlarmCategory;
use crate::annot::Merged;
use crate::ir::{decode_instruction, Binop, Expr, Instr, Program, Reg, INSTR_SIZE};
use crate::machine::{irq, ConcreteState, MachineConfig, RegionKind};
use crate::numdom::{compare, ConstMemory, NumAbstract, NumStore};
use crate::typedom::{ptr_arith, type_load, type_store, value_fits, TypeError, TypeId, TypeStore, TypeTable, VType};
use std::collections::BTreeMap;

/// Storage abstraction: numeric values and types of registers and fixed
/// cells. Numeric cells only ever describe `data-rw` memory.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AbsState {
    pub num: NumStore,
    pub ty: TypeStore,
}

impl AbsState {
    pub fn top() -> AbsState {
        AbsState { num: NumStore::top(), ty: TypeStore::default() }
    }

    pub fn bottom() -> AbsState {
        AbsState { num: NumStore::bottom(), ty: TypeStore::default() }
    }

    pub fn is_bottom(&self) -> bool {
        self.num.is_bottom()
    }

    pub fn join(&self, o: &AbsState, tt: &TypeTable) -> AbsState {
        if self.is_bottom() {
            return o.clone();
        }
        if o.is_bottom() {
            return self.clone();
        }
        AbsState { num: self.num.join(&o.num), ty: self.ty.join(&o.ty, tt) }
    }

    pub fn widen(&self, o: &AbsState, tt: &TypeTable, thresholds: &[u64]) -> AbsState {
        if self.is_bottom() {
            return o.clone();
        }
        if o.is_bottom() {
            return self.clone();
        }
        AbsState { num: self.num.widen(&o.num, thresholds), ty: self.ty.join(&o.ty, tt) }
    }

    pub fn leq(&self, o: &AbsState, tt: &TypeTable) -> bool {
        self.is_bottom() || (!o.is_bottom() && self.num.leq(&o.num) && self.ty.leq(&o.ty, tt))
    }

    /// The same state, about to execute the instruction at `pc`.
    pub fn at_pc(mut self, pc: u64) -> AbsState {
        if !self.is_bottom() {
            self.set(Reg::Pc, NumAbstract::constant(pc & 0xffff_ffff, 32), VType::Word);
        }
        self
    }

    fn reg(&self, r: Reg) -> (NumAbstract, VType) {
        (self.num.reg(r), self.ty.reg(r))
    }

    fn set(&mut self, r: Reg, v: NumAbstract, t: VType) {
        self.num.set_reg(r, v);
        self.ty.set_reg(r, t);
    }

    fn swap(&mut self, a: Reg, b: Reg) {
        let (va, ta) = self.reg(a);
        let (vb, tb) = self.reg(b);
        self.set(a, vb, tb);
        self.set(b, va, ta);
    }

    /// Numeric membership of a concrete state: every register except pc and
    /// every tracked cell.
    pub fn contains_numeric(&self, s: &ConcreteState, addr_mask: u64) -> Result<(), String> {
        if self.is_bottom() {
            return Err("state is unreachable in the abstraction".into());
        }
        for r in Reg::ALL {
            if r == Reg::Pc {
                continue;
            }
            let v = s.regs.get(r);
            if !self.num.reg(r).contains(v) {
                return Err(format!("{} = {v:#x} not in {}", r.name(), self.num.reg(r)));
            }
        }
        for (a, c) in self.num.cells() {
            let v = s.mem.read(a, c.size, addr_mask);
            if !c.val.contains(v) {
                return Err(format!("cell {a:#x} = {v:#x} not in {}", c.val));
            }
        }
        Ok(())
    }
}

/// Initial bytes of read-only memory, which the kernel cannot change.
pub struct ReadOnlyImage<'a> {
    pub prog: &'a Program,
    pub cfg: &'a MachineConfig,
}

impl ConstMemory for ReadOnlyImage<'_> {
    fn read_const(&self, addr: u64, size: u8) -> Option<u64> {
        let mut v = 0;
        for i in 0..size as u64 {
            let a = (addr + i) & self.cfg.addr_mask();
            if !self.cfg.kind_of(a).is_some_and(RegionKind::is_read_only) {
                return None;
            }
            v |= (self.prog.byte_at(a).unwrap_or(0) as u64) << (8 * i);
        }
        Some(v)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Target {
    Pc(u64),
    /// The kernel entry, reached through an interrupt.
    Entry,
}

#[derive(Debug, Default)]
pub struct Step {
    pub succs: Vec<(Target, AbsState)>,
    pub alarms: Vec<(AlarmCategory, String)>,
}

impl Step {
    fn alarm(&mut self, c: AlarmCategory, msg: impl Into<String>) {
        self.alarms.push((c, msg.into()));
    }

    fn type_alarm(&mut self, e: TypeError, what: &str) {
        let c = match e {
            TypeError::NullDeref => AlarmCategory::NullDeref,
            TypeError::OutOfBounds(_) => AlarmCategory::OutOfBounds,
            TypeError::Violation(_) => AlarmCategory::TypeViolation,
            TypeError::Predicate(_) => AlarmCategory::PredicateViolation,
        };
        self.alarm(c, format!("{what}: {e}"));
    }
}

/// Everything the transfer functions need besides the state.
pub struct Semantics<'a> {
    pub prog: &'a Program,
    pub cfg: &'a MachineConfig,
    pub tt: &'a TypeTable,
    pub konst: ReadOnlyImage<'a>,
    /// Annotated types of registers.
    pub registers: BTreeMap<Reg, TypeId>,
    pub globals: Vec<(u64, TypeId)>,
    pub sinks: Sinks,
    pub jump_cap: usize,
}

impl<'a> Semantics<'a> {
    pub fn new(prog: &'a Program, cfg: &'a MachineConfig, ann: &'a Merged, jump_cap: usize) -> Semantics<'a> {
        Semantics {
            prog,
            cfg,
            tt: &ann.table,
            konst: ReadOnlyImage { prog, cfg },
            registers: ann.registers.iter().copied().collect(),
            globals: ann.globals.iter().map(|(_, a, t)| (*a, *t)).collect(),
            sinks: Sinks::new(cfg),
            jump_cap,
        }
    }

    fn aw(&self) -> u8 {
        self.cfg.addr_width
    }

    fn cst(&self, v: u64, w: u8) -> NumAbstract {
        NumAbstract::constant(v & crate::ir::mask(w), w)
    }

    /// State at the kernel entry for the first time after boot, as far as
    /// the annotations describe it.
    pub fn precondition(&self) -> AbsState {
        let mut s = AbsState::top();
        let [lo, hi] = self.cfg.interrupts;
        s.num.set_reg(Reg::R0, NumAbstract::range(lo, hi, 32));
        s.num.set_reg(Reg::Flags, self.privileged_flags(&NumAbstract::top(32)));
        s.num.set_reg(Reg::Pc, self.cst(self.cfg.kernel_entry, 32));
        for (r, id) in &self.registers {
            s.ty.set_reg(*r, VType::of(*id, self.tt));
        }
        for (a, id) in &self.globals {
            if let Some(sz @ (1 | 2 | 4 | 8)) = self.tt.size(*id) {
                s.ty.set_cell(*a, sz as u8, VType::of(*id, self.tt));
            }
        }
        s
    }

    fn privileged_flags(&self, f: &NumAbstract) -> NumAbstract {
        NumAbstract::binop(Binop::And, f, &self.cst(!self.cfg.unpriv_mask(), 32))
    }

    /// `Some(true)` when the state is certainly privileged.
    pub fn privileged(&self, s: &AbsState) -> Option<bool> {
        let bit = NumAbstract::binop(Binop::And, &s.num.reg(Reg::Flags), &self.cst(self.cfg.unpriv_mask(), 32));
        compare(Binop::Eq, &bit, &self.cst(0, 32))
    }

    /// Hardware interrupt: bank swap, privileged mode, kernel entry.
    pub fn interrupt(&self, s: &AbsState, number: NumAbstract) -> AbsState {
        let mut t = s.clone();
        t.swap(Reg::Sp, Reg::SpB);
        t.swap(Reg::Flags, Reg::FlagsB);
        t.swap(Reg::Pc, Reg::PcB);
        let f = self.privileged_flags(&t.num.reg(Reg::Flags));
        t.set(Reg::Flags, f, VType::Word);
        t.set(Reg::Pc, self.cst(self.cfg.kernel_entry, 32), VType::Word);
        t.set(Reg::R0, number, VType::Word);
        t
    }

    fn runtime_interrupts(&self) -> NumAbstract {
        let [lo, hi] = self.cfg.interrupts;
        NumAbstract::range(lo, hi, 32)
    }

    /// User code runs after a kernel exit: it may set every user register.
    /// Unless the exit state keeps user code unprivileged and away from
    /// protected memory, nothing is known afterwards.
    pub fn attacker(&self, s: &AbsState, step: &mut Step) -> AbsState {
        let tt = self.tt;
        let problems = self.sinks.check_exit(&|r| s.reg(r), tt);
        let mut t = if problems.is_empty() {
            s.clone()
        } else {
            for p in problems {
                step.alarm(AlarmCategory::PrivilegeSinkViolation, format!("kernel exit: {p}"));
            }
            AbsState::top()
        };
        for r in Reg::USER {
            t.num.set_reg(r, NumAbstract::top(r.width()));
        }
        t.ty = t.ty.havoc_user();
        t
    }

    pub fn fetch(&self, pc: u64) -> Result<Instr, String> {
        let mut b = [0u8; 8];
        for (i, x) in b.iter_mut().enumerate() {
            let a = (pc + i as u64) & self.cfg.addr_mask();
            *x = self.konst.read_const(a, 1).ok_or_else(|| format!("{a:#x} is not read-only kernel memory"))? as u8;
        }
        decode_instruction(&b, self.aw()).map_err(|e| e.to_string())
    }

    fn num(&self, e: &Expr, s: &AbsState) -> NumAbstract {
        s.num.eval(e, &self.konst)
    }

    /// Type of `e`, raising alarms for unsafe dereferences and pointer
    /// arithmetic.
    fn ty(&self, e: &Expr, s: &AbsState, step: &mut Step) -> VType {
        let tt = self.tt;
        match e {
            Expr::Const(_) => VType::Word,
            Expr::Reg(r) => s.ty.reg(*r),
            Expr::Load(size, a) => {
                let ta = self.ty(a, s, step);
                if ta.is_ptr() {
                    return match type_load(&ta, &self.cst(0, self.aw()), *size as u32, tt) {
                        Ok(t) => t,
                        Err(err) => {
                            step.type_alarm(err, "load");
                            VType::Word
                        }
                    };
                }
                match self.num(a, s).as_const() {
                    Some(addr) => s.ty.cell(addr, *size),
                    None => VType::Word,
                }
            }
            Expr::Binop(op @ (Binop::Add | Binop::Sub), a, b) => {
                let (ta, tb) = (self.ty(a, s, step), self.ty(b, s, step));
                let (p, delta) = match (ta.is_ptr(), tb.is_ptr(), op) {
                    (true, false, Binop::Add) => (ta, self.num(b, s)),
                    (false, true, Binop::Add) => (tb, self.num(a, s)),
                    (true, false, Binop::Sub) => (ta, NumAbstract::unop(crate::ir::Unop::Neg, &self.num(b, s))),
                    _ => return VType::Word,
                };
                match ptr_arith(&p, &delta, tt) {
                    Ok(t) => t,
                    Err(err) => {
                        step.type_alarm(err, "pointer arithmetic");
                        VType::Word
                    }
                }
            }
            Expr::Binop(op, a, b) => {
                self.ty(a, s, step);
                self.ty(b, s, step);
                if matches!(op, Binop::Udiv | Binop::Sdiv | Binop::Urem | Binop::Srem) && self.num(b, s).contains(0) {
                    step.alarm(AlarmCategory::DivByZero, format!("divisor {} may be zero", self.num(b, s)));
                }
                VType::Word
            }
            Expr::Unop(_, x) => {
                self.ty(x, s, step);
                VType::Word
            }
        }
    }

    /// Keeps numeric cells inside `data-rw` memory away from MMIO.
    fn clean_cells(&self, s: &mut AbsState) {
        let stray: Vec<u64> = s
            .num
            .cells()
            .filter(|(a, c)| {
                (0..c.size as u64).any(|i| {
                    let b = a + i;
                    self.cfg.kind_of(b) != Some(RegionKind::DataRw) || self.cfg.mmio_at(b).is_some()
                })
            })
            .map(|(a, _)| a)
            .collect();
        for a in stray {
            s.num.forget_cell(a);
        }
    }

    fn assume(&self, s: &AbsState, cond: &Expr, truth: bool) -> AbsState {
        let mut t = AbsState { num: s.num.assume_bool(cond, truth, &self.konst), ty: s.ty.clone() };
        self.clean_cells(&mut t);
        t
    }

    /// Region kinds (with `None` for unmapped memory) touched by an access of
    /// `size` bytes at any address in `a`.
    fn touched(&self, a: &NumAbstract, size: u8) -> Vec<Option<RegionKind>> {
        let mut out = Vec::new();
        let mut add = |k: Option<RegionKind>| {
            if !out.contains(&k) {
                out.push(k);
            }
        };
        let mask = self.cfg.addr_mask();
        if let Some(addrs) = a.enumerate(256) {
            for x in addrs {
                for i in 0..size as u64 {
                    add(self.cfg.kind_of((x + i) & mask));
                }
            }
            return out;
        }
        let (lo, hi) = a.urange().unwrap();
        let hi = hi.saturating_add(size as u64 - 1);
        let mut covered = Vec::new();
        for r in &self.cfg.regions {
            if r.start <= hi && r.end >= lo {
                add(Some(r.kind));
                covered.push((r.start.max(lo), r.end.min(hi)));
            }
        }
        covered.sort();
        let mut next = lo;
        for (s, e) in covered {
            if s > next {
                break;
            }
            next = next.max(e.saturating_add(1));
        }
        if next <= hi || hi > mask {
            add(None);
        }
        out
    }

    fn store(&self, addr: &Expr, value: &Expr, s: &mut AbsState, step: &mut Step) {
        let tt = self.tt;
        let (ta, tv) = (self.ty(addr, s, step), self.ty(value, s, step));
        let (na, nv) = (self.num(addr, s), self.num(value, s));
        let size = value.width() / 8;
        if ta.is_ptr() {
            if let Err(e) = type_store(&ta, &self.cst(0, self.aw()), size as u32, &tv, &nv, tt) {
                step.type_alarm(e, &format!("store of {} through {}", tv.display(tt), ta.display(tt)));
            }
            return;
        }
        let kinds = self.touched(&na, size);
        for k in &kinds {
            match k {
                Some(RegionKind::CodeRo | RegionKind::DataRo) => {
                    step.alarm(AlarmCategory::StoreToReadOnly, format!("store to {na} may modify read-only memory"))
                }
                Some(RegionKind::Param) => step.alarm(
                    AlarmCategory::TypeViolation,
                    format!("untyped store to {na} may modify parameterized memory"),
                ),
                None => step.alarm(AlarmCategory::StoreOutsideWritable, format!("store to {na} may leave writable memory")),
                Some(RegionKind::DataRw | RegionKind::Unprotected) => {}
            }
        }
        if kinds.contains(&Some(RegionKind::DataRw)) {
            let exact = kinds.len() == 1 && na.as_const().is_some();
            s.num.store_to(&na, size, &nv, exact);
            match na.as_const() {
                Some(a) if exact => s.ty.set_cell(a, size, tv),
                _ => {
                    let (lo, hi) = na.urange().unwrap();
                    s.ty.weak_cells(lo, hi.saturating_add(size as u64 - 1), size, tv, tt);
                }
            }
            self.clean_cells(s);
        }
    }

    /// Successors of a computed jump to `v`.
    /// Candidate targets of a computed jump. A table load is resolved entry
    /// by entry rather than through the join of the entries.
    fn jump_targets(&self, e: &Expr, s: &AbsState) -> Result<Vec<u64>, NumAbstract> {
        if let Expr::Load(size, a) = e {
            if let Some(addrs) = self.num(a, s).enumerate(self.jump_cap) {
                let mut out = std::collections::BTreeSet::new();
                for a in addrs {
                    let v = self.num(&Expr::load(*size, Expr::cst(a, self.aw())), s);
                    out.extend(v.enumerate(self.jump_cap).ok_or(v)?);
                    if out.len() > self.jump_cap {
                        return Err(self.num(e, s));
                    }
                }
                return Ok(out.into_iter().collect());
            }
        }
        let v = self.num(e, s);
        v.enumerate(self.jump_cap).ok_or(v)
    }

    fn jump(&self, e: &Expr, s: &AbsState, step: &mut Step) {
        let targets = match self.jump_targets(e, s) {
            Ok(t) => t,
            Err(v) => {
                step.alarm(AlarmCategory::ComputedJumpImprecise, format!("jump target {v} is not a small set"));
                return;
            }
        };
        for t in targets {
            if self.cfg.in_kernel_code(t) {
                step.succs.push((Target::Pc(t), s.clone()));
            } else {
                step.alarm(AlarmCategory::ComputedJumpImprecise, format!("jump to {t:#x} outside kernel code"));
            }
        }
    }

    /// Abstract execution of the instruction at `pc`.
    pub fn transfer(&self, pc: u64, s: &AbsState) -> Step {
        let mut step = Step::default();
        if s.is_bottom() {
            return step;
        }
        let mut s = s.clone();
        s.set(Reg::Pc, self.cst(pc, 32), VType::Word);
        let privileged = self.privileged(&s);
        if privileged != Some(true) {
            // unprivileged code may fault on any instruction
            let faults = NumAbstract::range(irq::ACCESS_FAULT, irq::PRIVILEGE_FAULT, 32);
            step.succs.push((Target::Entry, self.interrupt(&s, faults)));
        }
        let instr = match self.fetch(pc) {
            Ok(i) => i,
            Err(e) => {
                step.alarm(AlarmCategory::DecodeFailure, e);
                return step;
            }
        };
        let next = (pc + INSTR_SIZE) & self.cfg.addr_mask();
        match &instr {
            Instr::Assign(r, e) => {
                let t = self.ty(e, &s, &mut step);
                if *r == Reg::Pc {
                    self.jump(e, &s, &mut step);
                    return step;
                }
                let v = self.num(e, &s);
                let mut t = t;
                if let Some(decl) = self.registers.get(r) {
                    if let Err(err) = value_fits(*decl, &t, &v, self.tt) {
                        step.alarm(AlarmCategory::PrivilegeSinkViolation, format!("assignment to {}: {err}", r.name()));
                        t = VType::of(*decl, self.tt);
                    }
                }
                s.set(*r, v, t);
                step.succs.push((Target::Pc(next), s));
            }
            Instr::Store { addr, value } => {
                self.store(addr, value, &mut s, &mut step);
                step.succs.push((Target::Pc(next), s));
            }
            Instr::Goto(e) => {
                self.ty(e, &s, &mut step);
                self.jump(e, &s, &mut step);
            }
            Instr::Branch { cond, offset } => {
                self.ty(cond, &s, &mut step);
                let taken = self.assume(&s, cond, true);
                let fall = self.assume(&s, cond, false);
                if !taken.is_bottom() {
                    let t = Instr::branch_target(*offset, pc, self.aw());
                    if self.cfg.in_kernel_code(t) {
                        step.succs.push((Target::Pc(t), taken));
                    } else {
                        step.alarm(AlarmCategory::ComputedJumpImprecise, format!("branch to {t:#x} outside kernel code"));
                    }
                }
                if !fall.is_bottom() {
                    step.succs.push((Target::Pc(next), fall));
                }
            }
            Instr::Rfi => {
                if privileged != Some(false) {
                    let mut t = s.clone();
                    t.swap(Reg::Sp, Reg::SpB);
                    t.swap(Reg::Flags, Reg::FlagsB);
                    let (pcb, _) = s.reg(Reg::PcB);
                    t.set(Reg::Pc, pcb, VType::Word);
                    t.set(Reg::PcB, self.cst(next, 32), VType::Word);
                    let after = self.attacker(&t, &mut step);
                    step.succs.push((Target::Entry, self.interrupt(&after, self.runtime_interrupts())));
                }
            }
            Instr::Trap(k) => {
                s.set(Reg::Pc, self.cst(next, 32), VType::Word);
                let n = self.cst(irq::SYSCALL_BASE + *k as u64, 32);
                step.succs.push((Target::Entry, self.interrupt(&s, n)));
            }
        }
        if instr_may_leave_code(&instr) && !self.cfg.in_kernel_code(next) {
            step.succs.retain(|(t, _)| *t != Target::Pc(next));
            step.alarm(AlarmCategory::ComputedJumpImprecise, format!("execution falls through to {next:#x} outside kernel code"));
        }
        step
    }
}

fn instr_may_leave_code(i: &Instr) -> bool {
    matches!(i, Instr::Assign(..) | Instr::Store { .. } | Instr::Branch { .. })
}
