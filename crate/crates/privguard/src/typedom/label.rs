use super::table::{ByteType, TypeDef, TypeId, TypeTable};
use super::vtype::VType;
use std::collections::{BTreeMap, VecDeque};
use std::fmt;

/// Partial map from protected addresses to byte types.
pub type Labeling = BTreeMap<u64, ByteType>;

/// Read access to concrete memory for label checks.
pub trait MemView {
    fn read(&self, addr: u64, size: u8) -> u64;
}

impl<F: Fn(u64, u8) -> u64> MemView for F {
    fn read(&self, addr: u64, size: u8) -> u64 {
        self(addr, size)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelViolation {
    pub addr: u64,
    pub label: String,
    pub reason: String,
}

impl fmt::Display for LabelViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#x} ({}): {}", self.addr, self.label, self.reason)
    }
}

/// Whether `v` belongs to the value set of the leaf type `leaf` under `l`.
pub fn leaf_contains(leaf: TypeId, v: u64, l: &Labeling, tt: &TypeTable) -> Result<(), String> {
    match tt.def(leaf) {
        TypeDef::Word => Ok(()),
        TypeDef::Int { .. } => {
            let (bits, preds) = tt.predicates(leaf);
            for p in preds {
                match p.eval(v, bits as u8, &tt.params) {
                    Ok(true) => {}
                    Ok(false) => return Err(format!("value {v:#x} violates {p} of `{}`", tt.display(leaf))),
                    Err(e) => return Err(e.to_string()),
                }
            }
            Ok(())
        }
        TypeDef::Ptr { target, nullable } => {
            if *nullable && v == 0 {
                return Ok(());
            }
            match l.get(&v) {
                Some(lab) if tt.leq(*lab, *target) => Ok(()),
                Some(lab) => Err(format!(
                    "points to {v:#x} labeled {}, not below {}",
                    tt.display_byte(*lab),
                    tt.display_byte(*target)
                )),
                None => Err(format!("points to unlabeled address {v:#x}")),
            }
        }
        _ => Ok(()),
    }
}

/// Membership of a typed register or cell value.
pub fn vtype_contains(t: &VType, v: u64, l: &Labeling, tt: &TypeTable) -> Result<(), String> {
    match t {
        VType::Word => Ok(()),
        VType::Int(id) => leaf_contains(*id, v, l, tt),
        VType::Ptr { target, nullable, .. } => {
            if *nullable && v == 0 {
                return Ok(());
            }
            match l.get(&v) {
                Some(lab) if tt.leq(*lab, *target) => Ok(()),
                Some(lab) => Err(format!("{v:#x} is labeled {}, expected {}", tt.display_byte(*lab), tt.display_byte(*target))),
                None => Err(format!("{v:#x} is not a labeled address")),
            }
        }
    }
}

/// Checks `m[a] ∈ ⟦L(a)⟧_L` for every labeled address where a scalar starts.
pub fn check_labeling(m: &dyn MemView, l: &Labeling, tt: &TypeTable) -> Vec<LabelViolation> {
    let mut out = Vec::new();
    for (a, lab) in l {
        for leaf in tt.leaves_at(*lab) {
            let size = tt.size(leaf).unwrap_or(tt.ptr_size()) as u8;
            let v = m.read(*a, size);
            if let Err(reason) = leaf_contains(leaf, v, l, tt) {
                out.push(LabelViolation { addr: *a, label: tt.display_byte(*lab), reason });
            }
        }
    }
    out
}

/// Adjacency closure: neighbors inside the same object carry matching labels.
pub fn is_adjacency_closed(l: &Labeling, tt: &TypeTable) -> bool {
    l.iter().all(|(a, lab)| {
        let span = tt.span(lab.ty) as u64;
        (0..span).all(|j| {
            let b = (a + j).wrapping_sub(lab.k as u64);
            l.get(&b) == Some(&ByteType { ty: lab.ty, k: j as u32 })
                || l.get(&b).is_some_and(|x| tt.leq(*x, ByteType { ty: lab.ty, k: j as u32 }))
        })
    })
}

/// Builds a labeling by placing the objects reachable from typed roots.
/// Placement refines an existing label to a more specific one and fails on
/// incomparable labels. Addresses outside `in_scope` cannot be labeled.
pub fn infer_labeling(
    m: &dyn MemView,
    roots: &[(u64, VType)],
    tt: &TypeTable,
    in_scope: &dyn Fn(u64) -> bool,
) -> Result<Labeling, Vec<LabelViolation>> {
    let mut l = Labeling::new();
    let mut errs = Vec::new();
    // each object to place, with the labeled cell holding the pointer to it
    let mut work: VecDeque<(u64, ByteType, Option<(u64, ByteType)>)> = VecDeque::new();
    for (v, t) in roots {
        if let VType::Ptr { target, nullable, .. } = t {
            if *nullable && *v == 0 {
                continue;
            }
            work.push_back((*v, *target, None));
        }
    }
    let mut placed = std::collections::HashSet::new();
    'objects: while let Some((addr, target, from)) = work.pop_front() {
        let base = addr.wrapping_sub(target.k as u64);
        if !placed.insert((base, target.ty)) {
            continue;
        }
        let span = tt.span(target.ty);
        for j in 0..span {
            let a = base.wrapping_add(j as u64);
            let new = ByteType { ty: target.ty, k: j };
            if !in_scope(a) {
                let reason = match from {
                    Some((at, lab)) => {
                        format!("object lies outside the protected memory (pointer at {at:#x}, {})", tt.display_byte(lab))
                    }
                    None => "object lies outside the protected memory".into(),
                };
                errs.push(LabelViolation { addr: a, label: tt.display_byte(new), reason });
                continue 'objects;
            }
            match l.get(&a) {
                None => {
                    l.insert(a, new);
                }
                Some(old) if tt.leq(*old, new) => {}
                Some(old) if tt.leq(new, *old) => {
                    l.insert(a, new);
                }
                Some(old) => {
                    errs.push(LabelViolation {
                        addr: a,
                        label: tt.display_byte(*old),
                        reason: format!("conflicting label {}", tt.display_byte(new)),
                    });
                }
            }
        }
        // follow pointer fields of the placed object
        for j in 0..span {
            let bt = ByteType { ty: target.ty, k: j };
            for leaf in tt.leaves_at(bt) {
                if let TypeDef::Ptr { target: t2, nullable } = tt.def(leaf) {
                    let at = base.wrapping_add(j as u64);
                    let v = m.read(at, tt.ptr_size() as u8);
                    if *nullable && v == 0 {
                        continue;
                    }
                    work.push_back((v, *t2, Some((at, bt))));
                }
            }
        }
    }
    // labels may have been refined after a check; verify the final result
    if errs.is_empty() {
        let v = check_labeling(m, &l, tt);
        if v.is_empty() {
            return Ok(l);
        }
        errs = v;
    }
    Err(errs)
}

/// Enumerates `⟦t⟧_L` over values of `bytes` bytes (for small widths).
pub fn interpret(t: &VType, l: &Labeling, tt: &TypeTable, bytes: u8) -> Vec<u64> {
    assert!(bytes <= 2, "enumeration is limited to 16-bit values");
    (0..(1u64 << (8 * bytes as u32))).filter(|v| vtype_contains(t, *v, l, tt).is_ok()).collect()
}

/// `⟦s_k⟧_L`: intersection over the leaf supertypes of a byte type.
pub fn interpret_byte(b: ByteType, l: &Labeling, tt: &TypeTable, bytes: u8) -> Vec<u64> {
    let leaves = tt.leaves_at(b);
    (0..(1u64 << (8 * bytes as u32)))
        .filter(|v| leaves.iter().all(|leaf| leaf_contains(*leaf, *v, l, tt).is_ok()))
        .collect()
}
