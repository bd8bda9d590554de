//! Random small kernels with 8-bit addresses, and an exhaustive concrete
//! exploration of what they can reach under the empowered attacker. User
//! execution between a kernel exit and the next interrupt is replaced by a
//! havoc whose values range over a fixed grid. The memory fill byte
//! follows the register assignment rather than being crossed with it.

/// Default bound on explored states per kernel.
pub const DEFAULT_CAP: usize = 4000;

use crate::analyzer::{analyze_runtime, AnalysisOptions, AnalysisResult};
use crate::annot::Merged;
use crate::ir::{encode_instruction, Binop, Expr, Instr, Program, Reg, Section, SectionAttr, Unop, INSTR_SIZE};
use crate::machine::{
    accessible, privileged, step_interrupt, step_regular, AccessRights, ConcreteState, MachineConfig, Mmio, ParamValue,
    Region, RegionKind, StepOutcome,
};
use crate::typedom::TypeTable;
use rand::seq::SliceRandom;
use rand::Rng;
use std::collections::{BTreeMap, HashSet, VecDeque};

pub const MAX_INSTRS: usize = 20;
pub const DATA_LO: u64 = 0xa0;
pub const DATA_HI: u64 = 0xbf;
pub const USER_LO: u64 = 0xc0;
pub const USER_HI: u64 = 0xff;

/// Havoc grid for 32-bit registers; memory bytes use the low bytes.
pub const GRID: [u64; 4] = [0, 1, 0xa4, 0xffff_ffff];
pub const GRID64: [u64; 4] = [0, 1, (USER_LO << 32) | USER_HI | 3, u64::MAX];
pub const IRQ_GRID: [u64; 4] = [1, 2, 16, 271];

pub fn fuzz_config() -> MachineConfig {
    let region = |name: &str, start, end, kind| Region { name: name.into(), start, end, kind };
    let mut params = BTreeMap::new();
    params.insert("kernel_first_addr".into(), ParamValue::Exact(0));
    params.insert("kernel_last_addr".into(), ParamValue::Exact(DATA_HI));
    MachineConfig {
        addr_width: 8,
        kernel_entry: 0,
        unprivileged_bit: 0,
        mpu: Default::default(),
        regions: vec![
            region("text", 0, DATA_LO - 1, RegionKind::CodeRo),
            region("data", DATA_LO, DATA_HI, RegionKind::DataRw),
            region("user", USER_LO, USER_HI, RegionKind::Unprotected),
        ],
        boot: Vec::new(),
        mmio: Vec::<Mmio>::new(),
        interrupts: [1, crate::machine::irq::MAX],
        params,
    }
}

fn pick<T: Copy>(rng: &mut impl Rng, xs: &[T]) -> T {
    *xs.choose(rng).unwrap()
}

const REGS32: [Reg; 9] = [Reg::R0, Reg::R1, Reg::R2, Reg::R3, Reg::Sp, Reg::Flags, Reg::SpB, Reg::PcB, Reg::FlagsB];

fn addr8(rng: &mut impl Rng) -> Expr {
    if rng.gen_bool(0.6) {
        let a = match rng.gen_range(0..4) {
            0 => DATA_LO + 4 * rng.gen_range(0..8),
            1 => USER_LO + 4 * rng.gen_range(0..16),
            2 => rng.gen_range(0..256),
            _ => DATA_LO,
        };
        Expr::cst(a, 8)
    } else {
        Expr::unop(Unop::Extract(0, 7), Expr::reg(pick(rng, &[Reg::R1, Reg::R2, Reg::R3])))
    }
}

fn operand32(rng: &mut impl Rng) -> Expr {
    match rng.gen_range(0..10) {
        0..=3 => {
            let any = rng.gen_range(0..256);
            Expr::cst(pick(rng, &[0, 1, 2, 4, 8, DATA_LO, 0xa4, USER_LO, 0xffff_ffff, any]), 32)
        }
        4..=7 => Expr::reg(pick(rng, &REGS32[..5])),
        8 => Expr::reg(pick(rng, &REGS32[5..])),
        _ => Expr::load(4, addr8(rng)),
    }
}

const ARITH: [Binop; 11] = [
    Binop::Add,
    Binop::Sub,
    Binop::Mul,
    Binop::Udiv,
    Binop::Urem,
    Binop::And,
    Binop::Or,
    Binop::Xor,
    Binop::Shl,
    Binop::Shr,
    Binop::Sar,
];

fn expr32(rng: &mut impl Rng) -> Expr {
    if rng.gen_bool(0.5) {
        operand32(rng)
    } else {
        Expr::binop(pick(rng, &ARITH), operand32(rng), operand32(rng))
    }
}

fn cond(rng: &mut impl Rng) -> Expr {
    let op = pick(rng, &[Binop::Eq, Binop::Ne, Binop::Ult, Binop::Ugt, Binop::Slt, Binop::Sgt]);
    Expr::binop(op, operand32(rng), operand32(rng))
}

fn expr64(rng: &mut impl Rng) -> Expr {
    match rng.gen_range(0..3) {
        0 => Expr::cst(pick(rng, &GRID64), 64),
        1 => Expr::load(8, addr8(rng)),
        _ => Expr::unop(Unop::Uext(64), operand32(rng)),
    }
}

fn instr(rng: &mut impl Rng, at: usize, n: usize) -> Instr {
    match rng.gen_range(0..100) {
        0..=34 => Instr::Assign(pick(rng, &[Reg::R1, Reg::R2, Reg::R3, Reg::R0, Reg::Sp]), expr32(rng)),
        35..=49 => {
            let value = if rng.gen_bool(0.7) { operand32(rng) } else { Expr::unop(Unop::Extract(0, 7), operand32(rng)) };
            Instr::Store { addr: addr8(rng), value }
        }
        50..=64 => {
            let to = rng.gen_range(0..n) as i16;
            Instr::Branch { cond: cond(rng), offset: to - at as i16 }
        }
        65..=69 => {
            if rng.gen_bool(0.7) {
                Instr::Goto(Expr::cst(rng.gen_range(0..n) as u64 * INSTR_SIZE, 8))
            } else {
                Instr::Goto(Expr::load(1, addr8(rng)))
            }
        }
        70..=77 => Instr::Assign(pick(rng, &[Reg::Mpu1, Reg::Mpu2]), expr64(rng)),
        78..=87 => {
            let r = pick(rng, &[Reg::FlagsB, Reg::PcB, Reg::SpB, Reg::Flags]);
            let e = if r == Reg::FlagsB && rng.gen_bool(0.5) {
                Expr::binop(Binop::Or, operand32(rng), Expr::cst(1, 32))
            } else {
                expr32(rng)
            };
            Instr::Assign(r, e)
        }
        88..=97 => Instr::Rfi,
        _ => Instr::Trap(rng.gen_range(0..2)),
    }
}

/// A random kernel of at most `MAX_INSTRS` instructions starting at 0.
pub fn random_kernel(rng: &mut impl Rng) -> Program {
    let n = rng.gen_range(1..=MAX_INSTRS);
    let mut instrs = BTreeMap::new();
    let mut bytes = Vec::new();
    for at in 0..n {
        let i = loop {
            let i = if at == n - 1 && rng.gen_bool(0.7) { Instr::Rfi } else { instr(rng, at, n) };
            if i.check(8).is_ok() && encode_instruction(&i).is_ok() {
                break i;
            }
        };
        bytes.extend(encode_instruction(&i).unwrap());
        instrs.insert(at as u64 * INSTR_SIZE, i);
    }
    Program {
        addr_width: 8,
        sections: vec![
            Section { name: "text".into(), base: 0, attr: SectionAttr::CodeRo, bytes },
            Section { name: "data".into(), base: DATA_LO, attr: SectionAttr::DataRw, bytes: vec![0; 32] },
        ],
        instrs,
        hints: BTreeMap::new(),
        labels: BTreeMap::new(),
        entry: Some(0),
    }
}

/// One grid value for all registers, or the first grid value everywhere
/// except one register.
fn grid_assignments(regs: &[Reg]) -> Vec<Vec<(Reg, u64)>> {
    let val = |r: Reg, i: usize| if r.width() == 64 { GRID64[i] } else { GRID[i] };
    let mut out: Vec<Vec<(Reg, u64)>> = (0..4).map(|i| regs.iter().map(|r| (*r, val(*r, i))).collect()).collect();
    for (k, r) in regs.iter().enumerate() {
        for j in 1..4 {
            let mut a: Vec<(Reg, u64)> = regs.iter().map(|r| (*r, val(*r, 0))).collect();
            a[k] = (*r, val(*r, j));
            out.push(a);
        }
    }
    out
}

fn fill(s: &mut ConcreteState, lo: u64, hi: u64, byte: u8) {
    for a in lo..=hi {
        s.mem.write_byte(a, byte);
    }
}

/// Kernel-entry states covered by the precondition, on the grid.
pub fn initial_states(p: &Program, cfg: &MachineConfig) -> Vec<ConcreteState> {
    let regs: Vec<Reg> = Reg::ALL.iter().copied().filter(|r| !matches!(r, Reg::Pc | Reg::R0)).collect();
    let mut out = Vec::new();
    for (i, a) in grid_assignments(&regs).into_iter().enumerate() {
        let g = GRID[i % GRID.len()] as u8;
        for irq in IRQ_GRID {
            let mut s = ConcreteState::from_program(p);
            fill(&mut s, DATA_LO, DATA_HI, g);
            fill(&mut s, USER_LO, USER_HI, g);
            for (r, v) in &a {
                s.regs.set(*r, *v);
            }
            let f = s.regs.get(Reg::Flags) & !cfg.unpriv_mask();
            s.regs.set(Reg::Flags, f);
            s.regs.set(Reg::Pc, cfg.kernel_entry);
            s.regs.set(Reg::R0, irq);
            out.push(s);
        }
    }
    out
}

/// A kernel exit after which user code is still confined: unprivileged and
/// without write access to kernel memory.
fn exit_is_safe(s: &ConcreteState, cfg: &MachineConfig) -> bool {
    !privileged(s, cfg) && (0..=DATA_HI).all(|a| !accessible(s, a, cfg).contains(AccessRights::W))
}

/// Everything user code may do before the next interrupt, on the grid.
fn havoc(s: &ConcreteState, cfg: &MachineConfig) -> Vec<ConcreteState> {
    let regs = [Reg::R1, Reg::R2, Reg::R3, Reg::R4, Reg::R5, Reg::R6, Reg::R7, Reg::Sp, Reg::Pc, Reg::Flags];
    let mut out = Vec::new();
    for (i, a) in grid_assignments(&regs).into_iter().enumerate() {
        let mut t = s.clone();
        fill(&mut t, USER_LO, USER_HI, GRID[i % GRID.len()] as u8);
        for (r, v) in &a {
            t.regs.set(*r, *v);
        }
        let f = t.regs.get(Reg::Flags) | cfg.unpriv_mask();
        t.regs.set(Reg::Flags, f);
        for irq in IRQ_GRID {
            out.push(step_interrupt(&t, irq, cfg));
        }
    }
    out
}

/// Breadth-first exploration of kernel states from the precondition grid.
/// Returns the visited states and whether the `cap` stopped the search.
pub fn reachable(p: &Program, cfg: &MachineConfig, cap: usize) -> (Vec<ConcreteState>, bool) {
    let mut seen: HashSet<ConcreteState> = HashSet::new();
    let mut order = Vec::new();
    let mut work: VecDeque<ConcreteState> = initial_states(p, cfg).into();
    while let Some(s) = work.pop_front() {
        if seen.contains(&s) {
            continue;
        }
        if seen.len() >= cap {
            return (order, true);
        }
        seen.insert(s.clone());
        order.push(s.clone());
        let priv_now = privileged(&s, cfg);
        let was_exit = priv_now && matches!(p.instr_at(s.pc()), Some(Instr::Rfi)) && cfg.in_kernel_code(s.pc());
        let succ = match step_regular(&s, cfg) {
            Ok(StepOutcome::Next(v)) => v,
            Ok(StepOutcome::Trap { state, number }) => vec![step_interrupt(&state, number, cfg)],
            Err(_) if priv_now => continue,
            Err(f) => vec![step_interrupt(&s, f.interrupt_number(), cfg)],
        };
        for n in succ {
            if was_exit {
                if exit_is_safe(&n, cfg) {
                    work.extend(havoc(&n, cfg));
                }
            } else {
                work.push_back(n);
            }
        }
    }
    (order, false)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FuzzOutcome {
    /// The analysis raised an alarm after which it stops following some
    /// executions; containment is not expected.
    Excluded,
    Checked { states: usize, capped: bool, violations: Vec<String> },
}

/// Analyzes `p` and checks every concretely reachable kernel state against
/// the abstract state at its pc.
pub fn check_soundness(p: &Program, cfg: &MachineConfig, cap: usize) -> (FuzzOutcome, AnalysisResult) {
    let ann = Merged { table: empty_table(), globals: Vec::new(), registers: Vec::new() };
    let r = analyze_runtime(p, cfg, &ann, &AnalysisOptions::default()).expect("fuzz kernels have no calls");
    if r.alarms.iter().any(|a| a.category.cuts_paths()) {
        return (FuzzOutcome::Excluded, r);
    }
    let (states, capped) = reachable(p, cfg, cap);
    let mut by_pc: BTreeMap<u64, crate::analyzer::AbsState> = BTreeMap::new();
    for (l, s) in &r.states {
        let e = by_pc.entry(l.pc).or_insert_with(crate::analyzer::AbsState::bottom);
        *e = e.join(s, &ann.table);
    }
    let mut violations = Vec::new();
    for s in &states {
        let why = match by_pc.get(&s.pc()) {
            None => Some(format!("pc {:#x} never reached by the analysis", s.pc())),
            Some(a) => a.contains_numeric(s, cfg.addr_mask()).err(),
        };
        if let Some(w) = why {
            violations.push(format!("at {:#x}: {w}", s.pc()));
        }
    }
    (FuzzOutcome::Checked { states: states.len(), capped, violations }, r)
}

fn empty_table() -> TypeTable {
    let mut tt = TypeTable::new(1);
    tt.finish().expect("empty table");
    tt
}
