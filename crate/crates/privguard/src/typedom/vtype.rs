use super::table::{ArrayLen, ByteType, TypeDef, TypeId, TypeTable};
use crate::ir::Reg;
use crate::numdom::NumAbstract;
use std::collections::BTreeMap;
use std::fmt;

/// Type of a value held in a register or a fixed memory cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VType {
    Word,
    /// A scalar type from the table (possibly carrying a predicate).
    Int(TypeId),
    /// Pointer to byte type `target`. `base` marks a pointer to the first
    /// element of an array, which may be indexed.
    Ptr { target: ByteType, nullable: bool, base: bool },
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum TypeError {
    #[error("dereference of a possibly null pointer")]
    NullDeref,
    #[error("access possibly outside the bounds of `{0}`")]
    OutOfBounds(String),
    #[error("type violation: {0}")]
    Violation(String),
    #[error("predicate violation: {0}")]
    Predicate(String),
}

impl VType {
    /// The value type of a leaf type definition.
    pub fn of(id: TypeId, tt: &TypeTable) -> VType {
        match tt.def(id) {
            TypeDef::Word => VType::Word,
            TypeDef::Int { .. } => VType::Int(id),
            TypeDef::Ptr { target, nullable } => {
                let base = matches!(tt.def(target.ty), TypeDef::Array { .. });
                VType::Ptr { target: *target, nullable: *nullable, base }
            }
            _ => VType::Word,
        }
    }

    pub fn ptr(target: TypeId) -> VType {
        VType::Ptr { target: ByteType { ty: target, k: 0 }, nullable: false, base: false }
    }

    pub fn is_ptr(&self) -> bool {
        matches!(self, VType::Ptr { .. })
    }

    pub fn display(&self, tt: &TypeTable) -> String {
        match self {
            VType::Word => "word".into(),
            VType::Int(id) => tt.display(*id),
            VType::Ptr { target, nullable, base } => format!(
                "{}{}{}",
                tt.display_target(*target),
                if *base { "[]" } else { "" },
                if *nullable { "?" } else { "*" }
            ),
        }
    }

    pub fn leq(&self, o: &VType, tt: &TypeTable) -> bool {
        match (self, o) {
            (_, VType::Word) => true,
            (VType::Int(a), VType::Int(b)) => int_chain(*a, tt).contains(b),
            (VType::Ptr { target: t, nullable: n, base: b }, VType::Ptr { target: u, nullable: m, base: c }) => {
                (!n || *m) && (b == c || !c) && tt.leq(*t, *u)
            }
            _ => false,
        }
    }

    pub fn join(&self, o: &VType, tt: &TypeTable) -> VType {
        if self.leq(o, tt) {
            return *o;
        }
        if o.leq(self, tt) {
            return *self;
        }
        match (self, o) {
            (VType::Int(a), VType::Int(b)) => {
                let cb = int_chain(*b, tt);
                int_chain(*a, tt).into_iter().find(|x| cb.contains(x)).map_or(VType::Word, VType::Int)
            }
            (VType::Ptr { target: t, nullable: n, base: b }, VType::Ptr { target: u, nullable: m, base: c }) if t == u => {
                VType::Ptr { target: *t, nullable: *n || *m, base: *b && *c }
            }
            _ => VType::Word,
        }
    }
}

fn int_chain(id: TypeId, tt: &TypeTable) -> Vec<TypeId> {
    let mut out = vec![id];
    let mut cur = id;
    while let TypeDef::Int { base: Some(b), .. } = tt.def(cur) {
        out.push(*b);
        cur = *b;
    }
    out
}

fn array_len_min(len: &ArrayLen, tt: &TypeTable) -> Option<u64> {
    match len {
        ArrayLen::Const(n) => Some(*n),
        ArrayLen::Var(v) => tt.params.get(v).map(|(lo, _)| *lo),
        ArrayLen::Unknown => None,
    }
}

/// Pointer arithmetic `t + delta` on a pointer type.
pub fn ptr_arith(t: &VType, delta: &NumAbstract, tt: &TypeTable) -> Result<VType, TypeError> {
    let VType::Ptr { target, nullable, base } = *t else {
        return Ok(VType::Word);
    };
    if delta.is_bottom() {
        return Ok(*t);
    }
    let w = delta.width();
    let (slo, shi) = delta.srange().unwrap();
    let oob = || TypeError::OutOfBounds(tt.display(target.ty));
    if let TypeDef::Array { elem: _, len } = tt.def(target.ty) {
        let es = tt.span(target.ty) as i64;
        if base {
            let Some(n) = array_len_min(len, tt) else { return Err(oob()) };
            if slo < 0 || shi >= n as i64 * es {
                return Err(oob());
            }
            let residues: Vec<i64> = match delta.congruence().map(|c| (c.modulus(), c.residue())) {
                Some((0, r)) => vec![r as i64],
                Some((m, r)) if m as i64 % es == 0 => vec![r as i64],
                _ => delta.enumerate(256).map(|v| v.into_iter().map(|x| crate::ir::to_signed(x, w)).collect()).unwrap_or_default(),
            };
            let mut ks: Vec<i64> = residues.iter().map(|r| r.rem_euclid(es)).collect();
            ks.sort();
            ks.dedup();
            return Ok(match ks.as_slice() {
                [k] => VType::Ptr { target: ByteType { ty: target.ty, k: *k as u32 }, nullable, base: false },
                _ => VType::Word,
            });
        }
        let (lo, hi) = (target.k as i64 + slo, target.k as i64 + shi);
        if lo < 0 || hi >= es {
            return Err(oob());
        }
        return Ok(match delta.as_const() {
            Some(_) => VType::Ptr { target: ByteType { ty: target.ty, k: lo as u32 }, nullable, base: false },
            None => VType::Word,
        });
    }
    let size = tt.span(target.ty) as i64;
    let (lo, hi) = (target.k as i64 + slo, target.k as i64 + shi);
    if lo < 0 || hi >= size {
        if slo == 0 && shi == 0 {
            return Ok(*t);
        }
        return Err(oob());
    }
    Ok(if lo == hi { VType::Ptr { target: ByteType { ty: target.ty, k: lo as u32 }, nullable, base: false } } else { VType::Word })
}

/// Where an access of `size` bytes through `p + offset` lands.
fn access_target(p: &VType, offset: &NumAbstract, size: u32, tt: &TypeTable) -> Result<Option<(TypeId, u32)>, TypeError> {
    let VType::Ptr { nullable, .. } = p else {
        return Err(TypeError::Violation(format!("dereference of a non-pointer of type {}", p.display(tt))));
    };
    if *nullable {
        return Err(TypeError::NullDeref);
    }
    let q = ptr_arith(p, offset, tt)?;
    let VType::Ptr { target, base, .. } = q else { return Ok(None) };
    if base {
        return Ok(None);
    }
    if let TypeDef::Array { len: ArrayLen::Unknown, .. } = tt.def(target.ty) {
        return Ok(None);
    }
    Ok(tt.field_at(target.ty, target.k, size))
}

/// Type of the value loaded from `p + offset`.
pub fn type_load(p: &VType, offset: &NumAbstract, size: u32, tt: &TypeTable) -> Result<VType, TypeError> {
    Ok(match access_target(p, offset, size, tt)? {
        Some((leaf, 0)) if tt.size(leaf) == Some(size) => VType::of(leaf, tt),
        _ => VType::Word,
    })
}

/// Whether a value with type `tv` and numeric abstraction `num` belongs to
/// the leaf type `leaf`.
pub fn value_fits(leaf: TypeId, tv: &VType, num: &NumAbstract, tt: &TypeTable) -> Result<(), TypeError> {
    match tt.def(leaf) {
        TypeDef::Word => Ok(()),
        TypeDef::Int { .. } => {
            if tv.leq(&VType::Int(leaf), tt) {
                return Ok(());
            }
            let (_, preds) = tt.predicates(leaf);
            for p in preds {
                match p.eval_abs(num, &tt.params) {
                    Ok(Some(true)) => {}
                    _ => {
                        return Err(TypeError::Predicate(format!(
                            "value {} of type {} may not satisfy {} of `{}`",
                            num,
                            tv.display(tt),
                            p,
                            tt.display(leaf)
                        )))
                    }
                }
            }
            Ok(())
        }
        TypeDef::Ptr { nullable, .. } => {
            let want = VType::of(leaf, tt);
            if tv.leq(&want, tt) || (*nullable && num.as_const() == Some(0)) {
                Ok(())
            } else {
                Err(TypeError::Violation(format!(
                    "storing a value of type {} into an address of type {}",
                    tv.display(tt),
                    tt.display(leaf)
                )))
            }
        }
        _ => Err(TypeError::Violation("aggregate leaf".into())),
    }
}

/// Checks that storing a value through `p + offset` preserves the labeling.
pub fn type_store(
    p: &VType,
    offset: &NumAbstract,
    size: u32,
    tv: &VType,
    num: &NumAbstract,
    tt: &TypeTable,
) -> Result<(), TypeError> {
    if let VType::Ptr { target, .. } = p {
        if let TypeDef::Array { len: ArrayLen::Unknown, .. } = tt.def(target.ty) {
            return Err(TypeError::Violation(format!("store into `{}` of unknown length", tt.display(target.ty))));
        }
    }
    match access_target(p, offset, size, tt)? {
        Some((leaf, 0)) if tt.size(leaf) == Some(size) => value_fits(leaf, tv, num, tt),
        Some((leaf, _)) if matches!(tt.def(leaf), TypeDef::Int { pred: None, base: None, .. } | TypeDef::Word) => Ok(()),
        _ => Err(TypeError::Violation(format!("store of {size} bytes through {} with imprecise target", p.display(tt)))),
    }
}

/// T#: types of registers and fixed-address cells.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TypeStore {
    regs: [VType; 16],
    cells: BTreeMap<u64, (u8, VType)>,
}

impl Default for TypeStore {
    fn default() -> Self {
        TypeStore { regs: [VType::Word; 16], cells: BTreeMap::new() }
    }
}

impl TypeStore {
    pub fn reg(&self, r: Reg) -> VType {
        self.regs[r.index()]
    }

    pub fn set_reg(&mut self, r: Reg, t: VType) {
        self.regs[r.index()] = t;
    }

    pub fn cell(&self, addr: u64, size: u8) -> VType {
        match self.cells.get(&addr) {
            Some((s, t)) if *s == size => *t,
            _ => VType::Word,
        }
    }

    pub fn cells(&self) -> impl Iterator<Item = (u64, u8, VType)> + '_ {
        self.cells.iter().map(|(a, (s, t))| (*a, *s, *t))
    }

    /// Strong update; overlapping cells are forgotten.
    pub fn set_cell(&mut self, addr: u64, size: u8, t: VType) {
        self.forget_range(addr, addr + size as u64 - 1);
        if t != VType::Word {
            self.cells.insert(addr, (size, t));
        }
    }

    /// Weak update of every cell overlapping `[lo, hi]`.
    pub fn weak_cells(&mut self, lo: u64, hi: u64, size: u8, t: VType, tt: &TypeTable) {
        let keys: Vec<u64> = self.cells.range(lo.saturating_sub(7)..=hi).map(|(a, _)| *a).collect();
        for a in keys {
            let (s, old) = self.cells[&a];
            if a + s as u64 <= lo {
                continue;
            }
            let j = if s == size { old.join(&t, tt) } else { VType::Word };
            if j == VType::Word {
                self.cells.remove(&a);
            } else {
                self.cells.insert(a, (s, j));
            }
        }
    }

    fn forget_range(&mut self, lo: u64, hi: u64) {
        let keys: Vec<u64> = self
            .cells
            .range(lo.saturating_sub(7)..=hi)
            .filter(|(a, (s, _))| **a + *s as u64 > lo)
            .map(|(a, _)| *a)
            .collect();
        for a in keys {
            self.cells.remove(&a);
        }
    }

    pub fn join(&self, o: &TypeStore, tt: &TypeTable) -> TypeStore {
        let mut regs = self.regs;
        for (i, r) in regs.iter_mut().enumerate() {
            *r = self.regs[i].join(&o.regs[i], tt);
        }
        let mut cells = BTreeMap::new();
        for (a, (s, t)) in &self.cells {
            if let Some((s2, t2)) = o.cells.get(a) {
                if s == s2 {
                    let j = t.join(t2, tt);
                    if j != VType::Word {
                        cells.insert(*a, (*s, j));
                    }
                }
            }
        }
        TypeStore { regs, cells }
    }

    pub fn leq(&self, o: &TypeStore, tt: &TypeTable) -> bool {
        self.regs.iter().zip(o.regs.iter()).all(|(a, b)| a.leq(b, tt))
            && o.cells.iter().all(|(a, (s, t))| self.cells.get(a).is_some_and(|(s2, t2)| s2 == s && t2.leq(t, tt)))
    }

    /// The attacker may leave anything in the user registers.
    pub fn havoc_user(&self) -> TypeStore {
        let mut out = self.clone();
        for r in Reg::USER {
            out.regs[r.index()] = VType::Word;
        }
        out
    }
}

impl fmt::Display for TypeStore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in Reg::ALL {
            if self.regs[r.index()] != VType::Word {
                write!(f, "{}:{:?} ", r.name(), self.regs[r.index()])?;
            }
        }
        Ok(())
    }
}
