//! Concrete hardware model: privilege levels, banked registers, an MPU with
//! two region registers, regular and interrupt transitions, and a small
//! interpreter that accounts for nondeterministic instructions.

mod config;
mod state;

pub use config::{ConfigError, MachineConfig, Mmio, MpuLayout, ParamValue, Region, RegionKind};
pub use state::{ConcreteState, Memory, RegisterFile};

use crate::ir::{decode_instruction, eval_expr, DecodeFault, DivByZero, Instr, Reader, Reg, INSTR_SIZE};
use serde::Serialize;
use std::fmt;

/// Interrupt numbers delivered in `r0` at kernel entry.
pub mod irq {
    pub const RESET: u64 = 0;
    pub const TIMER: u64 = 1;
    pub const ACCESS_FAULT: u64 = 2;
    pub const DECODE_FAULT: u64 = 3;
    pub const EVAL_FAULT: u64 = 4;
    pub const PRIVILEGE_FAULT: u64 = 5;
    /// `trap n` raises interrupt `SYSCALL_BASE + n`.
    pub const SYSCALL_BASE: u64 = 16;
    pub const MAX: u64 = SYSCALL_BASE + 255;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize)]
pub struct AccessRights(u8);

impl AccessRights {
    pub const NONE: AccessRights = AccessRights(0);
    pub const R: AccessRights = AccessRights(1);
    pub const W: AccessRights = AccessRights(2);
    pub const X: AccessRights = AccessRights(4);
    pub const RWX: AccessRights = AccessRights(7);

    pub fn contains(self, o: AccessRights) -> bool {
        self.0 & o.0 == o.0
    }

    pub fn union(self, o: AccessRights) -> AccessRights {
        AccessRights(self.0 | o.0)
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Display for AccessRights {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (bit, c) in [(AccessRights::R, 'R'), (AccessRights::W, 'W'), (AccessRights::X, 'X')] {
            write!(f, "{}", if self.contains(bit) { c } else { '-' })?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum Fault {
    #[error("access fault at {addr:#x}: {need} required")]
    Access { addr: u64, need: AccessRights },
    #[error(transparent)]
    Decode(#[from] DecodeFault),
    #[error("evaluation fault: {0}")]
    Eval(#[from] DivByZero),
    #[error("privilege fault: {0}")]
    Privilege(&'static str),
}

impl Fault {
    pub fn interrupt_number(&self) -> u64 {
        match self {
            Fault::Access { .. } => irq::ACCESS_FAULT,
            Fault::Decode(_) => irq::DECODE_FAULT,
            Fault::Eval(_) => irq::EVAL_FAULT,
            Fault::Privilege(_) => irq::PRIVILEGE_FAULT,
        }
    }
}

pub fn privileged(s: &ConcreteState, cfg: &MachineConfig) -> bool {
    s.regs.get(Reg::Flags) & cfg.unpriv_mask() == 0
}

/// Rights granted by one MPU register value to address `a`.
pub fn mpu_rights(v: u64, a: u64, layout: &MpuLayout) -> AccessRights {
    let base = v >> layout.base_shift;
    let limit = v & layout.limit_mask;
    if a < base || a > limit {
        return AccessRights::NONE;
    }
    let mut r = AccessRights::NONE;
    for (bit, right) in [(layout.read, AccessRights::R), (layout.write, AccessRights::W), (layout.exec, AccessRights::X)] {
        if v & bit != 0 {
            r = r.union(right);
        }
    }
    r
}

pub fn accessible(s: &ConcreteState, a: u64, cfg: &MachineConfig) -> AccessRights {
    if privileged(s, cfg) {
        return AccessRights::RWX;
    }
    mpu_rights(s.regs.get(Reg::Mpu1), a, &cfg.mpu).union(mpu_rights(s.regs.get(Reg::Mpu2), a, &cfg.mpu))
}

fn require(s: &ConcreteState, a: u64, size: u64, need: AccessRights, cfg: &MachineConfig) -> Result<(), Fault> {
    if privileged(s, cfg) {
        return Ok(());
    }
    for i in 0..size {
        let addr = (a + i) & cfg.addr_mask();
        if !accessible(s, addr, cfg).contains(need) {
            return Err(Fault::Access { addr, need });
        }
    }
    Ok(())
}

/// Fetches and decodes the instruction at `pc`, checking R and X rights.
pub fn fetch(s: &ConcreteState, cfg: &MachineConfig) -> Result<Instr, Fault> {
    let pc = s.pc();
    require(s, pc, INSTR_SIZE, AccessRights::R.union(AccessRights::X), cfg)?;
    Ok(decode_instruction(&s.mem.read_slot(pc, cfg.addr_mask()), cfg.addr_width)?)
}

struct StepReader<'a> {
    s: &'a ConcreteState,
    cfg: &'a MachineConfig,
    choices: &'a [usize],
    points: Vec<usize>,
}

impl Reader for StepReader<'_> {
    type Error = Fault;

    fn reg(&mut self, r: Reg) -> u64 {
        self.s.regs.get(r)
    }

    fn load(&mut self, addr: u64, size: u8) -> Result<u64, Fault> {
        require(self.s, addr, size as u64, AccessRights::R, self.cfg)?;
        if let Some(m) = self.cfg.mmio_at(addr).filter(|m| m.size == size) {
            let k = self.points.len();
            self.points.push(m.values.len());
            let pick = self.choices.get(k).copied().unwrap_or(0);
            return Ok(m.values[pick] & crate::ir::mask(size * 8));
        }
        Ok(self.s.mem.read(addr, size, self.cfg.addr_mask()))
    }
}

/// Result of a regular step that did not fault.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StepOutcome {
    /// Successor states, one per combination of MMIO values read.
    Next(Vec<ConcreteState>),
    /// A software interrupt; `state` has its pc past the trap instruction.
    Trap { state: ConcreteState, number: u64 },
}

fn exec(instr: &Instr, s: &ConcreteState, cfg: &MachineConfig, choices: &[usize]) -> Result<(StepOutcome, Vec<usize>), Fault> {
    let mut rd = StepReader { s, cfg, choices, points: Vec::new() };
    let mut n = s.clone();
    let next_pc = (s.pc() + INSTR_SIZE) & cfg.addr_mask();
    n.regs.set(Reg::Pc, next_pc);
    let unpriv = !privileged(s, cfg);
    match instr {
        Instr::Assign(r, e) => {
            let v = eval_expr(e, &mut rd)?.value();
            if unpriv && r.is_system() {
                return Err(Fault::Privilege("unprivileged write to a system register"));
            }
            if unpriv && *r == Reg::Flags && v & cfg.unpriv_mask() == 0 {
                return Err(Fault::Privilege("unprivileged code cleared the UNPRIVILEGED bit"));
            }
            if *r == Reg::Pc {
                n.regs.set(Reg::Pc, v & cfg.addr_mask());
            } else {
                n.regs.set(*r, v);
            }
        }
        Instr::Store { addr, value } => {
            let a = eval_expr(addr, &mut rd)?.value();
            let v = eval_expr(value, &mut rd)?;
            let size = v.width() / 8;
            require(s, a, size as u64, AccessRights::W, cfg)?;
            n.mem.write(a, size, v.value(), cfg.addr_mask());
        }
        Instr::Goto(e) => {
            let t = eval_expr(e, &mut rd)?.value();
            n.regs.set(Reg::Pc, t);
        }
        Instr::Branch { cond, offset } => {
            if eval_expr(cond, &mut rd)?.is_true() {
                n.regs.set(Reg::Pc, Instr::branch_target(*offset, s.pc(), cfg.addr_width));
            }
        }
        Instr::Rfi => {
            if unpriv {
                return Err(Fault::Privilege("return from interrupt in unprivileged mode"));
            }
            n.regs.swap(Reg::Sp, Reg::SpB);
            n.regs.swap(Reg::Flags, Reg::FlagsB);
            n.regs.set(Reg::Pc, s.regs.get(Reg::PcB));
            n.regs.set(Reg::PcB, next_pc);
        }
        Instr::Trap(k) => {
            return Ok((StepOutcome::Trap { state: n, number: irq::SYSCALL_BASE + *k as u64 }, rd.points));
        }
    }
    Ok((StepOutcome::Next(vec![n]), rd.points))
}

/// Executes the instruction at pc. Every MMIO load multiplies the successor
/// set by the number of modeled values at that address.
pub fn step_regular(s: &ConcreteState, cfg: &MachineConfig) -> Result<StepOutcome, Fault> {
    let instr = fetch(s, cfg)?;
    let mut out = Vec::new();
    let mut stack: Vec<Vec<usize>> = vec![Vec::new()];
    while let Some(prefix) = stack.pop() {
        let (res, points) = exec(&instr, s, cfg, &prefix)?;
        if points.len() > prefix.len() {
            for v in (0..points[prefix.len()]).rev() {
                let mut p = prefix.clone();
                p.push(v);
                stack.push(p);
            }
            continue;
        }
        match res {
            StepOutcome::Next(v) => out.extend(v),
            trap @ StepOutcome::Trap { .. } => return Ok(trap),
        }
    }
    Ok(StepOutcome::Next(out))
}

/// Hardware interrupt transition: swaps the banked registers, enters
/// privileged mode at the kernel entry and delivers `n` in `r0`.
pub fn step_interrupt(s: &ConcreteState, n: u64, cfg: &MachineConfig) -> ConcreteState {
    let mut t = s.clone();
    t.regs.swap(Reg::Sp, Reg::SpB);
    t.regs.swap(Reg::Flags, Reg::FlagsB);
    t.regs.swap(Reg::Pc, Reg::PcB);
    let f = t.regs.get(Reg::Flags) & !cfg.unpriv_mask();
    t.regs.set(Reg::Flags, f);
    t.regs.set(Reg::Pc, cfg.kernel_entry);
    t.regs.set(Reg::R0, n);
    t
}

/// Machine state right after power-on: program loaded, RESET delivered.
pub fn boot_state(mem: Memory, cfg: &MachineConfig) -> ConcreteState {
    let s = ConcreteState { mem, regs: RegisterFile::default() };
    step_interrupt(&s, irq::RESET, cfg)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum TraceEvent {
    Interrupt { step: u64, number: u64, from_pc: u64 },
    KernelExit { step: u64, resume_pc: u64 },
    Fault { step: u64, pc: u64, fault: String, privileged: bool },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize)]
pub struct DeterminismStats {
    pub instructions: u64,
    pub deterministic: u64,
    pub mmio_loads: u64,
}

impl DeterminismStats {
    pub fn fraction(&self) -> f64 {
        if self.instructions == 0 {
            1.0
        } else {
            self.deterministic as f64 / self.instructions as f64
        }
    }

    pub fn merge(&mut self, o: &DeterminismStats) {
        self.instructions += o.instructions;
        self.deterministic += o.deterministic;
        self.mmio_loads += o.mmio_loads;
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunEnd {
    BudgetExhausted,
    /// Stopped in front of the first kernel exit (`rfi` in privileged mode).
    KernelExit,
    PrivilegedFault(String),
}

#[derive(Clone, Copy, Debug)]
pub struct RunOptions {
    pub budget: u64,
    pub stop_at_kernel_exit: bool,
    pub record_trace: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { budget: 10_000, stop_at_kernel_exit: false, record_trace: true }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub steps: u64,
    pub stats: DeterminismStats,
    pub end: RunEnd,
    pub trace: Vec<TraceEvent>,
    #[serde(skip)]
    pub final_state: ConcreteState,
}

impl RunReport {
    pub fn summary_text(&self) -> String {
        let mut out = format!(
            "steps {}\ninstructions {}\ndeterministic {}\nmmio_loads {}\nend {:?}\n",
            self.steps, self.stats.instructions, self.stats.deterministic, self.stats.mmio_loads, self.end
        );
        for e in &self.trace {
            match e {
                TraceEvent::Interrupt { step, number, from_pc } => {
                    out += &format!("{step} interrupt {number} from {from_pc:#x}\n")
                }
                TraceEvent::KernelExit { step, resume_pc } => out += &format!("{step} exit to {resume_pc:#x}\n"),
                TraceEvent::Fault { step, pc, fault, privileged } => {
                    out += &format!("{step} fault at {pc:#x} (privileged={privileged}): {fault}\n")
                }
            }
        }
        out
    }
}

/// Runs up to `opts.budget` regular steps. User-mode faults and traps enter
/// the kernel; a fault in privileged mode stops the machine. When a step has
/// several successors `choose` picks the one to follow.
pub fn run_concrete(
    s0: &ConcreteState,
    cfg: &MachineConfig,
    opts: RunOptions,
    choose: &mut dyn FnMut(usize) -> usize,
) -> RunReport {
    let mut s = s0.clone();
    let mut stats = DeterminismStats::default();
    let mut trace = Vec::new();
    let mut step = 0;
    let end = loop {
        if step >= opts.budget {
            break RunEnd::BudgetExhausted;
        }
        let priv_now = privileged(&s, cfg);
        let is_rfi = priv_now && matches!(fetch(&s, cfg), Ok(Instr::Rfi));
        if is_rfi && opts.stop_at_kernel_exit {
            break RunEnd::KernelExit;
        }
        step += 1;
        match step_regular(&s, cfg) {
            Ok(StepOutcome::Next(succ)) => {
                stats.instructions += 1;
                if succ.len() == 1 {
                    stats.deterministic += 1;
                } else {
                    stats.mmio_loads += 1;
                }
                let k = if succ.len() == 1 { 0 } else { choose(succ.len()).min(succ.len() - 1) };
                s = succ.into_iter().nth(k).unwrap();
                if is_rfi && opts.record_trace {
                    trace.push(TraceEvent::KernelExit { step, resume_pc: s.pc() });
                }
            }
            Ok(StepOutcome::Trap { state, number }) => {
                stats.instructions += 1;
                stats.deterministic += 1;
                if opts.record_trace {
                    trace.push(TraceEvent::Interrupt { step, number, from_pc: s.pc() });
                }
                s = step_interrupt(&state, number, cfg);
            }
            Err(f) => {
                stats.instructions += 1;
                stats.deterministic += 1;
                if opts.record_trace {
                    trace.push(TraceEvent::Fault { step, pc: s.pc(), fault: f.to_string(), privileged: priv_now });
                }
                if priv_now {
                    break RunEnd::PrivilegedFault(f.to_string());
                }
                let n = f.interrupt_number();
                if opts.record_trace {
                    trace.push(TraceEvent::Interrupt { step, number: n, from_pc: s.pc() });
                }
                s = step_interrupt(&s, n, cfg);
            }
        }
    };
    RunReport { steps: step, stats, end, trace, final_state: s }
}
