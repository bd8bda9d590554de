//! Runtime analysis of the kernel: a worklist fixpoint over the system loop
//! kernel entry → kernel code → kernel exit → user code → interrupt → entry.
//!
//! Locations are instruction addresses with a bounded call string built from
//! `.hint call` / `.hint return`. The value at each location pairs a numeric
//! store with a type store; user code between an exit and the next entry is
//! a single havoc of everything user code can reach.

mod invariant;
mod sink;
mod state;

pub use invariant::{CellInvariant, Invariant, LocationInvariant, TypeRef, ValueInvariant, SCHEMA_VERSION};
pub use sink::Sinks;
pub use state::{AbsState, ReadOnlyImage, Semantics, Step, Target};

use crate::annot::Merged;
use crate::ir::{Hint, Program};
use crate::machine::MachineConfig;
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Location {
    pub pc: u64,
    /// Call sites, outermost first.
    pub context: Vec<u64>,
}

impl Location {
    pub fn new(pc: u64) -> Location {
        Location { pc, context: Vec::new() }
    }
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#x}", self.pc)?;
        for c in &self.context {
            write!(f, "<{c:#x}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum AlarmCategory {
    ComputedJumpImprecise,
    StoreToReadOnly,
    StoreOutsideWritable,
    TypeViolation,
    PredicateViolation,
    NullDeref,
    OutOfBounds,
    PrivilegeSinkViolation,
    DecodeFailure,
    DivByZero,
}

impl AlarmCategory {
    /// Alarms after which the analysis stops following some executions, so
    /// that the result no longer covers every reachable state.
    pub fn cuts_paths(self) -> bool {
        matches!(
            self,
            AlarmCategory::ComputedJumpImprecise | AlarmCategory::DecodeFailure | AlarmCategory::StoreToReadOnly
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Boot,
    Runtime,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Alarm {
    pub location: Location,
    pub category: AlarmCategory,
    pub phase: Phase,
    pub message: String,
}

impl fmt::Display for Alarm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} at {} ({:?}): {}", self.category, self.location, self.phase, self.message)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AnalysisOptions {
    /// Visits of a location joined before widening starts.
    pub unroll: u32,
    pub call_depth: usize,
    pub jump_cap: usize,
    /// Guard against non-termination: total location visits.
    pub max_visits: usize,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions { unroll: 64, call_depth: 8, jump_cap: 64, max_visits: 2_000_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum AnalysisError {
    #[error("kernel entry {0:#x} is not in kernel code")]
    BadEntry(u64),
    #[error("recursive call at {0:#x}")]
    Recursion(u64),
    #[error("no fixpoint after {0} visits")]
    NoFixpoint(usize),
}

#[derive(Clone, Debug)]
pub struct AnalysisResult {
    pub entry: Location,
    pub states: BTreeMap<Location, AbsState>,
    pub edges: BTreeSet<(Location, Location)>,
    pub alarms: Vec<Alarm>,
    pub visits: usize,
    pub nontrivial: bool,
}

impl AnalysisResult {
    pub fn runtime_alarms(&self) -> impl Iterator<Item = &Alarm> {
        self.alarms.iter().filter(|a| a.phase == Phase::Runtime)
    }

    pub fn entry_state(&self) -> &AbsState {
        &self.states[&self.entry]
    }

    /// Join of the states at `pc` over all call strings.
    pub fn state_at(&self, pc: u64, tt: &crate::typedom::TypeTable) -> Option<AbsState> {
        self.states.iter().filter(|(l, _)| l.pc == pc).map(|(_, s)| s.clone()).reduce(|a, b| a.join(&b, tt))
    }
}

struct Engine<'a> {
    sem: Semantics<'a>,
    hints: &'a BTreeMap<u64, Hint>,
    opts: AnalysisOptions,
    thresholds: Vec<u64>,
    states: BTreeMap<Location, AbsState>,
    visits: BTreeMap<Location, u32>,
    edges: BTreeSet<(Location, Location)>,
    work: BTreeSet<Location>,
}

impl Engine<'_> {
    fn successor(&self, from: &Location, t: &Target) -> Result<Location, AnalysisError> {
        let pc = match t {
            Target::Entry => return Ok(Location::new(self.sem.cfg.kernel_entry)),
            Target::Pc(pc) => *pc,
        };
        let mut context = from.context.clone();
        match self.hints.get(&from.pc) {
            Some(Hint::Call) => {
                if context.contains(&from.pc) {
                    return Err(AnalysisError::Recursion(from.pc));
                }
                context.push(from.pc);
                if context.len() > self.opts.call_depth {
                    context.remove(0);
                }
            }
            Some(Hint::Return) => {
                context.pop();
            }
            None => {}
        }
        Ok(Location { pc, context })
    }

    fn propagate(&mut self, to: Location, s: AbsState) {
        let tt = self.sem.tt;
        let n = self.visits.entry(to.clone()).or_insert(0);
        *n += 1;
        let new = match self.states.get(&to) {
            None => s,
            Some(old) if s.leq(old, tt) => return,
            Some(old) if *n <= self.opts.unroll => old.join(&s, tt),
            Some(old) => old.widen(&old.join(&s, tt), tt, &self.thresholds),
        };
        self.states.insert(to.clone(), new);
        self.work.insert(to);
    }

    fn run(&mut self) -> Result<usize, AnalysisError> {
        let mut count = 0;
        while let Some(loc) = self.work.pop_first() {
            count += 1;
            if count > self.opts.max_visits {
                return Err(AnalysisError::NoFixpoint(count));
            }
            let step = self.sem.transfer(loc.pc, &self.states[&loc]);
            for (t, s) in step.succs {
                if s.is_bottom() {
                    continue;
                }
                let to = self.successor(&loc, &t)?;
                self.edges.insert((loc.clone(), to.clone()));
                let s = s.at_pc(to.pc);
                self.propagate(to, s);
            }
        }
        Ok(count)
    }
}

/// Computes the runtime invariant of the kernel under the annotated
/// precondition.
pub fn analyze_runtime(
    p: &Program,
    cfg: &MachineConfig,
    ann: &Merged,
    opts: &AnalysisOptions,
) -> Result<AnalysisResult, AnalysisError> {
    if !cfg.in_kernel_code(cfg.kernel_entry) {
        return Err(AnalysisError::BadEntry(cfg.kernel_entry));
    }
    let sem = Semantics::new(p, cfg, ann, opts.jump_cap);
    let mut extra = cfg.boundaries();
    extra.extend(cfg.interrupts);
    let entry = Location::new(cfg.kernel_entry);
    let mut e = Engine {
        thresholds: crate::numdom::thresholds(32, &extra),
        hints: &p.hints,
        opts: *opts,
        states: BTreeMap::new(),
        visits: BTreeMap::new(),
        edges: BTreeSet::new(),
        work: BTreeSet::new(),
        sem,
    };
    e.states.insert(entry.clone(), e.sem.precondition());
    e.work.insert(entry.clone());
    let visits = e.run()?;

    // alarms are collected once, on the final states
    let mut alarms = BTreeSet::new();
    for (loc, s) in &e.states {
        let phase = if cfg.is_boot(loc.pc) { Phase::Boot } else { Phase::Runtime };
        for (category, message) in e.sem.transfer(loc.pc, s).alarms {
            alarms.insert(Alarm { location: loc.clone(), category, phase, message });
        }
    }
    let mut r = AnalysisResult {
        entry,
        states: e.states,
        edges: e.edges,
        alarms: alarms.into_iter().collect(),
        visits,
        nontrivial: false,
    };
    r.nontrivial = check_nontrivial(&r);
    Ok(r)
}

/// Whether some location excludes at least one concrete state.
pub fn check_nontrivial(r: &AnalysisResult) -> bool {
    r.states.values().any(|s| {
        s.is_bottom()
            || crate::ir::Reg::ALL.iter().any(|reg| !s.num.reg(*reg).is_top() || s.ty.reg(*reg) != crate::typedom::VType::Word)
            || s.num.cells().any(|(_, c)| !c.val.is_top())
            || s.ty.cells().next().is_some()
    })
}

/// Whether every successor state of the result is already covered, that is
/// one more round of the analysis would change nothing.
pub fn is_post_fixpoint(r: &AnalysisResult, p: &Program, cfg: &MachineConfig, ann: &Merged, opts: &AnalysisOptions) -> bool {
    let sem = Semantics::new(p, cfg, ann, opts.jump_cap);
    let e = Engine {
        sem,
        hints: &p.hints,
        opts: *opts,
        thresholds: Vec::new(),
        states: BTreeMap::new(),
        visits: BTreeMap::new(),
        edges: BTreeSet::new(),
        work: BTreeSet::new(),
    };
    let tt = &ann.table;
    r.states.iter().all(|(loc, s)| {
        e.sem.transfer(loc.pc, s).succs.iter().all(|(t, succ)| {
            succ.is_bottom()
                || e.successor(loc, t).ok().is_some_and(|to| {
                    r.states.get(&to).is_some_and(|have| succ.clone().at_pc(to.pc).leq(have, tt))
                })
        })
    })
}
