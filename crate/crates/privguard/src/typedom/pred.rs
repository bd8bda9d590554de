use crate::ir::{apply_binop, Binop};
use crate::numdom::NumAbstract;
use std::collections::BTreeMap;
use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PBinop {
    Add,
    Mul,
    Sub,
    Udiv,
    Sdiv,
    Shl,
    Shr,
    Sar,
    And,
    Or,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PCmp {
    Eq,
    Ne,
    Ult,
    Ule,
    Ugt,
    Uge,
    Slt,
    Sle,
    Sgt,
    Sge,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum PExpr {
    Const(u64),
    Var(String),
    SelfVal,
    Bin(PBinop, Box<PExpr>, Box<PExpr>),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Predicate {
    Cmp(PCmp, PExpr, PExpr),
    Or(Box<Predicate>, Box<Predicate>),
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum PredError {
    #[error("unbound variable `{0}`")]
    Unbound(String),
}

impl PBinop {
    pub const ALL: [PBinop; 10] = [
        PBinop::Add,
        PBinop::Mul,
        PBinop::Sub,
        PBinop::Udiv,
        PBinop::Sdiv,
        PBinop::Shl,
        PBinop::Shr,
        PBinop::Sar,
        PBinop::And,
        PBinop::Or,
    ];

    pub fn symbol(self) -> &'static str {
        self.to_ir().symbol()
    }

    pub fn to_ir(self) -> Binop {
        match self {
            PBinop::Add => Binop::Add,
            PBinop::Mul => Binop::Mul,
            PBinop::Sub => Binop::Sub,
            PBinop::Udiv => Binop::Udiv,
            PBinop::Sdiv => Binop::Sdiv,
            PBinop::Shl => Binop::Shl,
            PBinop::Shr => Binop::Shr,
            PBinop::Sar => Binop::Sar,
            PBinop::And => Binop::And,
            PBinop::Or => Binop::Or,
        }
    }

    pub fn precedence(self) -> u8 {
        match self {
            PBinop::Or => 1,
            PBinop::And => 2,
            PBinop::Shl | PBinop::Shr | PBinop::Sar => 3,
            PBinop::Add | PBinop::Sub => 4,
            PBinop::Mul | PBinop::Udiv | PBinop::Sdiv => 5,
        }
    }
}

impl PCmp {
    pub const ALL: [PCmp; 10] =
        [PCmp::Eq, PCmp::Ne, PCmp::Ult, PCmp::Ule, PCmp::Ugt, PCmp::Uge, PCmp::Slt, PCmp::Sle, PCmp::Sgt, PCmp::Sge];

    pub fn symbol(self) -> &'static str {
        match self {
            PCmp::Eq => "==",
            PCmp::Ne => "!=",
            PCmp::Ult => "<u",
            PCmp::Ule => "<=u",
            PCmp::Ugt => ">u",
            PCmp::Uge => ">=u",
            PCmp::Slt => "<s",
            PCmp::Sle => "<=s",
            PCmp::Sgt => ">s",
            PCmp::Sge => ">=s",
        }
    }

    /// The IR comparison and whether its result must be negated.
    fn to_ir(self) -> (Binop, bool) {
        match self {
            PCmp::Eq => (Binop::Eq, false),
            PCmp::Ne => (Binop::Ne, false),
            PCmp::Ult => (Binop::Ult, false),
            PCmp::Ule => (Binop::Ugt, true),
            PCmp::Ugt => (Binop::Ugt, false),
            PCmp::Uge => (Binop::Ult, true),
            PCmp::Slt => (Binop::Slt, false),
            PCmp::Sle => (Binop::Sgt, true),
            PCmp::Sgt => (Binop::Sgt, false),
            PCmp::Sge => (Binop::Slt, true),
        }
    }
}

/// Values of parameter variables: inclusive unsigned bounds.
pub type Env = BTreeMap<String, (u64, u64)>;

impl PExpr {
    pub fn bin(op: PBinop, a: PExpr, b: PExpr) -> PExpr {
        PExpr::Bin(op, Box::new(a), Box::new(b))
    }

    fn eval(&self, self_val: u64, w: u8, env: &Env) -> Result<Option<u64>, PredError> {
        Ok(match self {
            PExpr::Const(c) => Some(c & crate::ir::mask(w)),
            PExpr::SelfVal => Some(self_val),
            PExpr::Var(v) => {
                let (lo, hi) = *env.get(v).ok_or_else(|| PredError::Unbound(v.clone()))?;
                (lo == hi).then_some(lo & crate::ir::mask(w))
            }
            PExpr::Bin(op, a, b) => {
                let (Some(x), Some(y)) = (a.eval(self_val, w, env)?, b.eval(self_val, w, env)?) else {
                    return Ok(None);
                };
                // division by zero makes the atom false; report as unknown
                apply_binop(op.to_ir(), x, y, w, w).ok()
            }
        })
    }

    fn eval_abs(&self, self_val: &NumAbstract, env: &Env) -> Result<NumAbstract, PredError> {
        let w = self_val.width();
        Ok(match self {
            PExpr::Const(c) => NumAbstract::constant(*c, w),
            PExpr::SelfVal => *self_val,
            PExpr::Var(v) => {
                let (lo, hi) = *env.get(v).ok_or_else(|| PredError::Unbound(v.clone()))?;
                NumAbstract::range(lo, hi, w)
            }
            PExpr::Bin(op, a, b) => NumAbstract::binop(op.to_ir(), &a.eval_abs(self_val, env)?, &b.eval_abs(self_val, env)?),
        })
    }

    pub fn vars(&self, out: &mut Vec<String>) {
        match self {
            PExpr::Var(v) => out.push(v.clone()),
            PExpr::Bin(_, a, b) => {
                a.vars(out);
                b.vars(out);
            }
            _ => {}
        }
    }
}

impl Predicate {
    pub fn or(a: Predicate, b: Predicate) -> Predicate {
        Predicate::Or(Box::new(a), Box::new(b))
    }

    /// Concrete evaluation at width `w`. A variable with a range value is
    /// resolved by requiring the atom for every value of the range, which
    /// is only attempted for ranges of at most 256 values.
    pub fn eval(&self, self_val: u64, w: u8, env: &Env) -> Result<bool, PredError> {
        match self {
            Predicate::Or(a, b) => Ok(a.eval(self_val, w, env)? || b.eval(self_val, w, env)?),
            Predicate::Cmp(c, a, b) => {
                let mut vars = Vec::new();
                a.vars(&mut vars);
                b.vars(&mut vars);
                vars.sort();
                vars.dedup();
                let ranged: Vec<&String> =
                    vars.iter().filter(|v| env.get(*v).is_some_and(|(lo, hi)| lo != hi)).collect();
                if ranged.is_empty() {
                    return Ok(self.atom(*c, a, b, self_val, w, env)?.unwrap_or(false));
                }
                // a parameter known only by bounds: the atom must hold for all of them
                let mut envs = vec![env.clone()];
                for v in ranged {
                    let (lo, hi) = env[v];
                    if hi - lo > 255 {
                        return Ok(self.eval_abs(&NumAbstract::constant(self_val, w), env)? == Some(true));
                    }
                    envs = envs
                        .into_iter()
                        .flat_map(|e| {
                            (lo..=hi).map(move |x| {
                                let mut e2 = e.clone();
                                e2.insert(v.clone(), (x, x));
                                e2
                            })
                        })
                        .collect();
                }
                for e in &envs {
                    if self.atom(*c, a, b, self_val, w, e)? != Some(true) {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
        }
    }

    fn atom(&self, c: PCmp, a: &PExpr, b: &PExpr, s: u64, w: u8, env: &Env) -> Result<Option<bool>, PredError> {
        let (Some(x), Some(y)) = (a.eval(s, w, env)?, b.eval(s, w, env)?) else { return Ok(None) };
        let (op, neg) = c.to_ir();
        Ok(Some((apply_binop(op, x, y, w, w).unwrap() == 1) != neg))
    }

    /// Abstract evaluation: `Some(b)` when the predicate has truth value `b`
    /// for every member of `self_val`.
    pub fn eval_abs(&self, self_val: &NumAbstract, env: &Env) -> Result<Option<bool>, PredError> {
        if self_val.is_bottom() {
            return Ok(Some(true));
        }
        match self {
            Predicate::Or(a, b) => {
                let (x, y) = (a.eval_abs(self_val, env)?, b.eval_abs(self_val, env)?);
                Ok(match (x, y) {
                    (Some(true), _) | (_, Some(true)) => Some(true),
                    (Some(false), Some(false)) => Some(false),
                    _ => None,
                })
            }
            Predicate::Cmp(c, a, b) => {
                let (x, y) = (a.eval_abs(self_val, env)?, b.eval_abs(self_val, env)?);
                let (op, neg) = c.to_ir();
                Ok(crate::numdom::compare(op, &x, &y).map(|t| t != neg))
            }
        }
    }
}

fn fmt_expr(e: &PExpr, f: &mut fmt::Formatter<'_>, parent: u8) -> fmt::Result {
    match e {
        PExpr::Const(c) if *c < 10 => write!(f, "{c}"),
        PExpr::Const(c) => write!(f, "{c:#x}"),
        PExpr::Var(v) => f.write_str(v),
        PExpr::SelfVal => f.write_str("self"),
        PExpr::Bin(op, a, b) => {
            let p = op.precedence();
            let paren = p <= parent;
            if paren {
                f.write_str("(")?;
            }
            fmt_expr(a, f, p - 1)?;
            write!(f, " {} ", op.symbol())?;
            fmt_expr(b, f, p)?;
            if paren {
                f.write_str(")")?;
            }
            Ok(())
        }
    }
}

impl fmt::Display for PExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_expr(self, f, 0)
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Predicate::Cmp(c, a, b) => write!(f, "({a} {} {b})", c.symbol()),
            Predicate::Or(a, b) => write!(f, "{a} or {b}"),
        }
    }
}
