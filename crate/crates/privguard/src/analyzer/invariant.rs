//! Serializable form of an analysis result, read back by the image checker.
//! The layout is described in `docs/invariant-format.md`.

use super::{AbsState, AnalysisResult, Location};
use crate::ir::{to_signed, Reg};
use crate::numdom::{Congruence, NumAbstract};
use crate::typedom::{ByteType, TypeTable, VType};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TypeRef {
    Word,
    Int { id: usize, name: String },
    Ptr { target: usize, k: u32, nullable: bool, base: bool, name: String },
}

impl TypeRef {
    pub fn of(t: &VType, tt: &TypeTable) -> TypeRef {
        match t {
            VType::Word => TypeRef::Word,
            VType::Int(id) => TypeRef::Int { id: *id, name: t.display(tt) },
            VType::Ptr { target, nullable, base } => TypeRef::Ptr {
                target: target.ty,
                k: target.k,
                nullable: *nullable,
                base: *base,
                name: t.display(tt),
            },
        }
    }

    pub fn to_vtype(&self) -> VType {
        match self {
            TypeRef::Word => VType::Word,
            TypeRef::Int { id, .. } => VType::Int(*id),
            TypeRef::Ptr { target, k, nullable, base, .. } => {
                VType::Ptr { target: ByteType { ty: *target, k: *k }, nullable: *nullable, base: *base }
            }
        }
    }
}

/// Bounds of one value: unsigned and signed intervals, a congruence
/// `residue mod modulus` (modulus 0 means equality) and a type.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValueInvariant {
    pub width: u8,
    pub unsigned: [u64; 2],
    pub signed: [i64; 2],
    pub modulus: u64,
    pub residue: u64,
    #[serde(rename = "type")]
    pub ty: TypeRef,
}

impl ValueInvariant {
    fn of(v: &NumAbstract, t: &VType, tt: &TypeTable) -> ValueInvariant {
        let w = v.width();
        let (ulo, uhi) = v.urange().unwrap_or((1, 0));
        let (slo, shi) = v.srange().unwrap_or((1, 0));
        let c = v.congruence().unwrap_or_else(|| Congruence::new(1, 0));
        ValueInvariant {
            width: w,
            unsigned: [ulo, uhi],
            signed: [slo, shi],
            modulus: c.modulus(),
            residue: c.residue(),
            ty: TypeRef::of(t, tt),
        }
    }

    /// Numeric membership only; types are checked against a labeling.
    pub fn contains(&self, v: u64) -> bool {
        let v = v & crate::ir::mask(self.width);
        let s = to_signed(v, self.width);
        v >= self.unsigned[0]
            && v <= self.unsigned[1]
            && s >= self.signed[0]
            && s <= self.signed[1]
            && Congruence::new(self.modulus, self.residue).contains(v)
    }

    fn is_trivial(&self) -> bool {
        self.ty == TypeRef::Word && NumAbstract::top(self.width).urange() == Some((self.unsigned[0], self.unsigned[1]))
            && NumAbstract::top(self.width).srange() == Some((self.signed[0], self.signed[1]))
            && self.modulus == 1
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellInvariant {
    pub addr: u64,
    pub size: u8,
    pub value: ValueInvariant,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocationInvariant {
    pub pc: u64,
    pub context: Vec<u64>,
    pub bottom: bool,
    /// Constrained registers only.
    pub registers: BTreeMap<String, ValueInvariant>,
    pub cells: Vec<CellInvariant>,
}

impl LocationInvariant {
    pub fn of(loc: &Location, s: &AbsState, tt: &TypeTable) -> LocationInvariant {
        let mut registers = BTreeMap::new();
        let mut cells = BTreeMap::new();
        if !s.is_bottom() {
            for r in Reg::ALL {
                let v = ValueInvariant::of(&s.num.reg(r), &s.ty.reg(r), tt);
                if !v.is_trivial() {
                    registers.insert(r.name().to_string(), v);
                }
            }
            for (a, c) in s.num.cells() {
                let v = ValueInvariant::of(&c.val, &s.ty.cell(a, c.size), tt);
                cells.insert(a, CellInvariant { addr: a, size: c.size, value: v });
            }
            for (a, size, t) in s.ty.cells() {
                cells.entry(a).or_insert_with(|| CellInvariant {
                    addr: a,
                    size,
                    value: ValueInvariant::of(&NumAbstract::top(size * 8), &t, tt),
                });
            }
        }
        LocationInvariant {
            pc: loc.pc,
            context: loc.context.clone(),
            bottom: s.is_bottom(),
            registers,
            cells: cells.into_values().filter(|c| !c.value.is_trivial()).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Invariant {
    pub schema: u32,
    pub kernel_entry: u64,
    pub locations: Vec<LocationInvariant>,
}

impl Invariant {
    pub fn of(r: &AnalysisResult, tt: &TypeTable) -> Invariant {
        Invariant {
            schema: SCHEMA_VERSION,
            kernel_entry: r.entry.pc,
            locations: r.states.iter().map(|(l, s)| LocationInvariant::of(l, s, tt)).collect(),
        }
    }

    pub fn at(&self, pc: u64, context: &[u64]) -> Option<&LocationInvariant> {
        self.locations.iter().find(|l| l.pc == pc && l.context == context)
    }

    pub fn entry(&self) -> Option<&LocationInvariant> {
        self.at(self.kernel_entry, &[])
    }
}
