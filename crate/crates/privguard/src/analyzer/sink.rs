//! Conditions on the registers that decide what user code can do once the
//! kernel returns: the UNPRIVILEGED bit of `flags` and the write rights the
//! MPU registers grant over protected memory.
//!
//! Each condition is a set of atoms over `self`; any single atom is enough.
//! A value satisfies a condition when the atoms hold numerically, or when its
//! type carries a predicate whose disjuncts all appear among the atoms.

use crate::ir::Reg;
use crate::machine::MachineConfig;
use crate::numdom::NumAbstract;
use crate::typedom::{Env, PBinop, PCmp, PExpr, Predicate, TypeTable, VType};

#[derive(Clone, Debug)]
pub struct Sinks {
    flags: Vec<Predicate>,
    /// `None` when the configuration declares no protected memory.
    mpu: Option<Vec<Predicate>>,
}

fn c(v: u64) -> PExpr {
    PExpr::Const(v)
}

fn bin(op: PBinop, a: PExpr, b: PExpr) -> PExpr {
    PExpr::bin(op, a, b)
}

impl Sinks {
    pub fn new(cfg: &MachineConfig) -> Sinks {
        let u = cfg.unpriv_mask();
        let masked = bin(PBinop::And, PExpr::SelfVal, c(u));
        let flags = vec![Predicate::Cmp(PCmp::Ne, masked.clone(), c(0)), Predicate::Cmp(PCmp::Eq, masked, c(u))];
        let mpu = cfg.protected_range().map(|(first, last)| {
            let l = &cfg.mpu;
            let mut atoms = vec![
                Predicate::Cmp(PCmp::Eq, bin(PBinop::And, PExpr::SelfVal, c(l.write)), c(0)),
                Predicate::Cmp(PCmp::Ugt, bin(PBinop::Shr, PExpr::SelfVal, c(l.base_shift as u64)), c(last)),
                Predicate::Cmp(PCmp::Ult, bin(PBinop::And, PExpr::SelfVal, c(l.limit_mask)), c(first)),
            ];
            // the low part bounds the limit field when the mask sits below the base
            if l.base_shift > 0 && l.base_shift < 64 && l.limit_mask >> l.base_shift == 0 {
                let k = c(64 - l.base_shift as u64);
                let low = bin(PBinop::Shr, bin(PBinop::Shl, PExpr::SelfVal, k.clone()), k);
                atoms.push(Predicate::Cmp(PCmp::Ult, low, c(first)));
            }
            atoms
        });
        Sinks { flags, mpu }
    }

    /// Whether `v : t` certainly has the UNPRIVILEGED bit set.
    pub fn flags_ok(&self, v: &NumAbstract, t: &VType, tt: &TypeTable) -> bool {
        proves(&self.flags, v, t, tt)
    }

    /// Whether an MPU register holding `v : t` grants no write access to
    /// protected memory.
    pub fn mpu_ok(&self, v: &NumAbstract, t: &VType, tt: &TypeTable) -> bool {
        match &self.mpu {
            None => true,
            Some(atoms) => proves(atoms, v, t, tt),
        }
    }

    pub fn check_exit(&self, regs: &dyn Fn(Reg) -> (NumAbstract, VType), tt: &TypeTable) -> Vec<String> {
        let mut out = Vec::new();
        let (fv, ft) = regs(Reg::Flags);
        if !self.flags_ok(&fv, &ft, tt) {
            out.push(format!("flags {fv} of type {} may leave the UNPRIVILEGED bit clear", ft.display(tt)));
        }
        for r in [Reg::Mpu1, Reg::Mpu2] {
            let (v, t) = regs(r);
            if !self.mpu_ok(&v, &t, tt) {
                out.push(format!("{} = {v} of type {} may grant write access to protected memory", r.name(), t.display(tt)));
            }
        }
        out
    }
}

fn proves(atoms: &[Predicate], v: &NumAbstract, t: &VType, tt: &TypeTable) -> bool {
    let any = atoms.iter().cloned().reduce(Predicate::or).expect("no atoms");
    if any.eval_abs(v, &Env::new()) == Ok(Some(true)) {
        return true;
    }
    let VType::Int(id) = t else { return false };
    let (_, preds) = tt.predicates(*id);
    preds.iter().any(|p| {
        let mut ds = Vec::new();
        disjuncts(p, &tt.params, &mut ds);
        ds.iter().all(|d| atoms.contains(d))
    })
}

fn disjuncts(p: &Predicate, env: &Env, out: &mut Vec<Predicate>) {
    match p {
        Predicate::Or(a, b) => {
            disjuncts(a, env, out);
            disjuncts(b, env, out);
        }
        Predicate::Cmp(op, a, b) => out.push(Predicate::Cmp(*op, subst(a, env), subst(b, env))),
    }
}

/// Replaces variables that have a single value by that value.
fn subst(e: &PExpr, env: &Env) -> PExpr {
    match e {
        PExpr::Var(v) => match env.get(v) {
            Some((lo, hi)) if lo == hi => PExpr::Const(*lo),
            _ => e.clone(),
        },
        PExpr::Bin(op, a, b) => PExpr::bin(*op, subst(a, env), subst(b, env)),
        _ => e.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::typedom::TypeDef;

    fn cfg() -> MachineConfig {
        MachineConfig::from_toml(
            r#"
kernel_entry = 0x30000
[params]
kernel_first_addr = 0x10000
kernel_last_addr = 0x3ffff
"#,
        )
        .unwrap()
    }

    fn with_pred(tt: &mut TypeTable, bits: u32, p: Predicate) -> VType {
        let base = tt.int(bits);
        VType::Int(tt.add(None, TypeDef::Int { bits, pred: Some(p), base: Some(base) }).unwrap())
    }

    #[test]
    fn numeric_proofs() {
        let s = Sinks::new(&cfg());
        let tt = TypeTable::new(4);
        let top = NumAbstract::top(32);
        let or1 = NumAbstract::binop(crate::ir::Binop::Or, &top, &NumAbstract::constant(1, 32));
        assert!(s.flags_ok(&or1, &VType::Word, &tt));
        assert!(!s.flags_ok(&top, &VType::Word, &tt));
        // read-only segment over user memory
        let ro = (0x40000u64 << 32) | 0x4fff8 | 1;
        assert!(s.mpu_ok(&NumAbstract::constant(ro, 64), &VType::Word, &tt));
        let rw_kernel = (0x20000u64 << 32) | 0x20ff8 | 3;
        assert!(!s.mpu_ok(&NumAbstract::constant(rw_kernel, 64), &VType::Word, &tt));
        let rw_user = (0x40000u64 << 32) | 0x4fff8 | 3;
        assert!(s.mpu_ok(&NumAbstract::constant(rw_user, 64), &VType::Word, &tt));
        assert!(!s.mpu_ok(&NumAbstract::top(64), &VType::Word, &tt));
    }

    #[test]
    fn typed_proofs() {
        let s = Sinks::new(&cfg());
        let mut tt = TypeTable::new(4);
        tt.params.insert("UNPRIVILEGED".into(), (1, 1));
        let good = Predicate::Cmp(
            PCmp::Ne,
            PExpr::bin(PBinop::And, PExpr::SelfVal, PExpr::Var("UNPRIVILEGED".into())),
            PExpr::Const(0),
        );
        let t = with_pred(&mut tt, 32, good);
        let weak = Predicate::Cmp(PCmp::Ne, PExpr::SelfVal, PExpr::Const(0));
        let u = with_pred(&mut tt, 32, weak);
        tt.finish().unwrap();
        assert!(s.flags_ok(&NumAbstract::top(32), &t, &tt));
        assert!(!s.flags_ok(&NumAbstract::top(32), &u, &tt));
    }
}
