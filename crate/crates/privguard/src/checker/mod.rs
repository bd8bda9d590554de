//! Step 3 of the pipeline: run the boot code concretely on a user image and
//! test the resulting kernel-entry states against the runtime invariant.

use crate::analyzer::{Alarm, AnalysisResult, Invariant, LocationInvariant};
use crate::corpus::UserImage;
use crate::ir::{Instr, Reg};
use crate::machine::{
    fetch, irq, privileged, step_interrupt, step_regular, ConcreteState, DeterminismStats, MachineConfig, RegionKind,
    StepOutcome,
};
use crate::typedom::{infer_labeling, vtype_contains, TypeTable, VType};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Where boot ends and membership is tested.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    /// Let the first task run until it enters the kernel again.
    NextEntry,
    /// Deliver a timer interrupt right after the first kernel exit.
    FirstExit,
}

#[derive(Clone, Copy, Debug)]
pub struct CheckOptions {
    pub boundary: Boundary,
    /// Bound on the number of boot paths explored over MMIO values.
    pub max_paths: usize,
    /// Steps per path.
    pub budget: u64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions { boundary: Boundary::NextEntry, max_paths: 1024, budget: 1_000_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    /// Boot path index, in exploration order.
    pub path: usize,
    pub what: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ImageReport {
    pub pass: bool,
    /// Exploration was cut by the path bound; no conclusion.
    pub inconclusive: bool,
    pub paths: usize,
    pub violations: Vec<Violation>,
    /// Every boot instruction executed, shared prefixes counted once.
    pub determinism: DeterminismStats,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Membership {
    pub ok: bool,
    pub violations: Vec<String>,
    /// Addresses of protected memory that received a label.
    pub labeled: usize,
}

/// Whether a concrete state lies in the concretization of `inv`: numeric
/// bounds on every constrained register and cell, and a labeling of the
/// parameter regions under which every typed value is well typed.
pub fn membership(s: &ConcreteState, inv: &LocationInvariant, tt: &TypeTable, cfg: &MachineConfig) -> Membership {
    let mut violations = Vec::new();
    if inv.bottom {
        violations.push(format!("location {:#x} is unreachable in the invariant", inv.pc));
        return Membership { ok: false, violations, labeled: 0 };
    }
    let mask = cfg.addr_mask();
    let mut typed: Vec<(String, u64, VType)> = Vec::new();
    for (name, vi) in &inv.registers {
        let Some(r) = Reg::from_name(name) else {
            violations.push(format!("unknown register `{name}`"));
            continue;
        };
        let v = s.regs.get(r);
        if !vi.contains(v) {
            violations.push(format!("{name} = {v:#x} is outside {:?} (mod {} = {})", vi.unsigned, vi.modulus, vi.residue));
        }
        typed.push((name.clone(), v, vi.ty.to_vtype()));
    }
    for c in &inv.cells {
        let v = s.mem.read(c.addr, c.size, mask);
        if !c.value.contains(v) {
            violations.push(format!("cell {:#x} = {v:#x} is outside {:?}", c.addr, c.value.unsigned));
        }
        typed.push((format!("cell {:#x}", c.addr), v, c.value.ty.to_vtype()));
    }
    let roots: Vec<(u64, VType)> = typed.iter().filter(|t| t.2.is_ptr()).map(|t| (t.1, t.2.clone())).collect();
    let view = |a: u64, size: u8| s.mem.read(a, size, mask);
    let in_scope = |a: u64| cfg.kind_of(a) == Some(RegionKind::Param);
    let labeled = match infer_labeling(&view, &roots, tt, &in_scope) {
        Ok(l) => {
            for (what, v, t) in &typed {
                if let Err(e) = vtype_contains(t, *v, &l, tt) {
                    violations.push(format!("{what}: {e}"));
                }
            }
            l.len()
        }
        Err(errs) => {
            violations.extend(errs.iter().map(|e| format!("no labeling: {e}")));
            0
        }
    };
    Membership { ok: violations.is_empty(), violations, labeled }
}

fn placement(img: &UserImage, cfg: &MachineConfig) -> Vec<String> {
    let mut out = Vec::new();
    for c in &img.chunks {
        if c.bytes.is_empty() {
            continue;
        }
        let last = c.addr + c.bytes.len() as u64 - 1;
        let ok = cfg.regions.iter().any(|r| {
            matches!(r.kind, RegionKind::Param | RegionKind::Unprotected) && r.contains(c.addr) && r.contains(last)
        });
        if !ok {
            out.push(format!("chunk [{:#x}, {last:#x}] is not inside a parameter or user region", c.addr));
        }
    }
    out
}

enum PathEnd {
    Entry(ConcreteState),
    Fault(String),
    Budget,
}

/// Boot states branch on MMIO reads; every branch is followed until the
/// boundary.
fn explore(s0: ConcreteState, cfg: &MachineConfig, opts: &CheckOptions, stats: &mut DeterminismStats) -> (Vec<PathEnd>, bool) {
    let mut ends = Vec::new();
    // (state, steps so far, kernel exits so far)
    let mut stack = vec![(s0, 0u64, false)];
    while let Some((s, steps, exited)) = stack.pop() {
        if ends.len() + stack.len() + 1 > opts.max_paths {
            return (ends, true);
        }
        if steps >= opts.budget {
            ends.push(PathEnd::Budget);
            continue;
        }
        let priv_now = privileged(&s, cfg);
        let is_exit = priv_now && matches!(fetch(&s, cfg), Ok(Instr::Rfi));
        stats.instructions += 1;
        match step_regular(&s, cfg) {
            Ok(StepOutcome::Next(succ)) => {
                if succ.len() == 1 {
                    stats.deterministic += 1;
                } else {
                    stats.mmio_loads += 1;
                }
                for n in succ.into_iter().rev() {
                    if is_exit && opts.boundary == Boundary::FirstExit {
                        ends.push(PathEnd::Entry(step_interrupt(&n, irq::TIMER, cfg)));
                    } else {
                        stack.push((n, steps + 1, exited || is_exit));
                    }
                }
            }
            Ok(StepOutcome::Trap { state, number }) => {
                stats.deterministic += 1;
                let n = step_interrupt(&state, number, cfg);
                if exited {
                    ends.push(PathEnd::Entry(n));
                } else {
                    stack.push((n, steps + 1, exited));
                }
            }
            Err(f) => {
                stats.deterministic += 1;
                if priv_now {
                    ends.push(PathEnd::Fault(format!("privileged fault at {:#x}: {f}", s.pc())));
                    continue;
                }
                let n = step_interrupt(&s, f.interrupt_number(), cfg);
                if exited {
                    ends.push(PathEnd::Entry(n));
                } else {
                    stack.push((n, steps + 1, exited));
                }
            }
        }
    }
    (ends, false)
}

/// Loads kernel and image, interprets boot on every MMIO branch and tests
/// each resulting kernel-entry state against the invariant at the entry.
pub fn check_user_image(
    p: &crate::ir::Program,
    img: &UserImage,
    inv: &Invariant,
    tt: &TypeTable,
    cfg: &MachineConfig,
    opts: &CheckOptions,
) -> ImageReport {
    let mut report =
        ImageReport { pass: false, inconclusive: false, paths: 0, violations: Vec::new(), determinism: Default::default() };
    let bad = placement(img, cfg);
    if !bad.is_empty() {
        report.violations = bad.into_iter().map(|what| Violation { path: 0, what }).collect();
        return report;
    }
    let Some(at) = inv.entry() else {
        report.violations.push(Violation { path: 0, what: "invariant has no kernel-entry location".into() });
        return report;
    };
    let mut s = ConcreteState::from_program(p);
    img.load_into(&mut s.mem);
    let s0 = crate::machine::boot_state(s.mem, cfg);
    let (ends, cut) = explore(s0, cfg, opts, &mut report.determinism);
    report.paths = ends.len();
    report.inconclusive = cut;
    for (path, e) in ends.into_iter().enumerate() {
        let what = match e {
            PathEnd::Entry(s) => {
                let m = membership(&s, at, tt, cfg);
                report.violations.extend(m.violations.into_iter().map(|what| Violation { path, what }));
                continue;
            }
            PathEnd::Fault(f) => f,
            PathEnd::Budget => format!("boot did not reach the kernel within {} steps", opts.budget),
        };
        report.violations.push(Violation { path, what });
    }
    report.pass = !cut && report.violations.is_empty();
    report
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerdictKind {
    ApeProven,
    NotProven,
    ImageRejected,
}

#[derive(Clone, Debug, Serialize)]
pub struct Evidence {
    /// SHA-256 of the serialized invariant.
    pub invariant_hash: String,
    pub runtime_alarms: Vec<Alarm>,
    pub nontrivial: bool,
    pub image: Option<ImageReport>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Verdict {
    pub schema: u32,
    pub verdict: VerdictKind,
    pub reasons: Vec<String>,
    pub evidence: Evidence,
}

pub fn invariant_hash(inv: &Invariant) -> String {
    let bytes = serde_json::to_vec(inv).expect("invariant serializes");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// APE is proven when the analysis reached a fixpoint (it returned), raised
/// no runtime alarm, found a nontrivial invariant, and the image passed.
pub fn verdict(r: &AnalysisResult, inv: &Invariant, image: Option<ImageReport>) -> Verdict {
    let alarms: Vec<Alarm> = r.runtime_alarms().cloned().collect();
    let mut reasons = Vec::new();
    for a in &alarms {
        reasons.push(format!("alarm: {a}"));
    }
    if !r.nontrivial {
        reasons.push("the invariant is trivial".into());
    }
    let kind = if !reasons.is_empty() {
        VerdictKind::NotProven
    } else {
        match &image {
            None => {
                reasons.push("no user image was checked".into());
                VerdictKind::NotProven
            }
            Some(i) if i.inconclusive => {
                reasons.push(format!("boot exploration stopped after {} paths", i.paths));
                VerdictKind::NotProven
            }
            Some(i) if !i.pass => {
                reasons.extend(i.violations.iter().map(|v| format!("image (path {}): {}", v.path, v.what)));
                VerdictKind::ImageRejected
            }
            Some(_) => VerdictKind::ApeProven,
        }
    };
    Verdict {
        schema: crate::analyzer::SCHEMA_VERSION,
        verdict: kind,
        reasons,
        evidence: Evidence { invariant_hash: invariant_hash(inv), runtime_alarms: alarms, nontrivial: r.nontrivial, image },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analyzer::{CellInvariant, TypeRef, ValueInvariant};

    fn value(lo: u64, hi: u64) -> ValueInvariant {
        ValueInvariant { width: 32, unsigned: [lo, hi], signed: [i32::MIN as i64, i32::MAX as i64], modulus: 1, residue: 0, ty: TypeRef::Word }
    }

    fn cfg() -> MachineConfig {
        MachineConfig::from_toml("kernel_entry = 0x100\n").unwrap()
    }

    #[test]
    fn bottom_rejects_everything() {
        let inv = LocationInvariant { pc: 0x100, context: vec![], bottom: true, registers: Default::default(), cells: vec![] };
        let m = membership(&ConcreteState::default(), &inv, &TypeTable::new(4), &cfg());
        assert!(!m.ok);
    }

    #[test]
    fn numeric_bounds() {
        let mut inv = LocationInvariant { pc: 0x100, context: vec![], bottom: false, registers: Default::default(), cells: vec![] };
        inv.registers.insert("r0".into(), value(1, 271));
        inv.cells.push(CellInvariant { addr: 0x40, size: 4, value: value(0, 9) });
        let tt = TypeTable::new(4);
        let mut s = ConcreteState::default();
        s.regs.set(Reg::R0, 16);
        s.mem.write(0x40, 4, 9, u64::MAX);
        assert!(membership(&s, &inv, &tt, &cfg()).ok);
        s.mem.write(0x40, 4, 10, u64::MAX);
        assert!(!membership(&s, &inv, &tt, &cfg()).ok);
        s.mem.write(0x40, 4, 0, u64::MAX);
        s.regs.set(Reg::R0, 0);
        let m = membership(&s, &inv, &tt, &cfg());
        assert_eq!(m.violations.len(), 1);
        assert!(m.violations[0].starts_with("r0"));
    }
}
