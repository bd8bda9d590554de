use super::pred::{Env, Predicate};
use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;

pub type TypeId = usize;

/// The top type; always id 0.
pub const WORD: TypeId = 0;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum ArrayLen {
    Const(u64),
    Var(String),
    Unknown,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Field {
    pub name: Option<String>,
    pub offset: u32,
    pub ty: TypeId,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TypeDef {
    Word,
    /// Integer scalar. `base` is the type it refines (`flags` refines `int32`).
    Int { bits: u32, pred: Option<Predicate>, base: Option<TypeId> },
    Ptr { target: ByteType, nullable: bool },
    Struct { size: u32, fields: Vec<Field> },
    Array { elem: TypeId, len: ArrayLen },
}

/// Byte `k` of type `ty`. For arrays, `k` is the byte within an element.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ByteType {
    pub ty: TypeId,
    pub k: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum TableError {
    #[error("structure `{0}` contains itself")]
    Cyclic(String),
    #[error("unknown type `{0}`")]
    Unknown(String),
    #[error("type `{0}` defined twice")]
    Duplicate(String),
    #[error("bad layout for `{0}`: {1}")]
    Layout(String, String),
}

/// Type definitions together with the derived subtyping order on byte types.
#[derive(Clone, Debug)]
pub struct TypeTable {
    defs: Vec<(Option<String>, TypeDef)>,
    names: HashMap<String, TypeId>,
    ptr_size: u32,
    pub params: Env,
    /// Reflexive-transitive closure, indexed by node number.
    up: Vec<BTreeSet<usize>>,
    node_ix: HashMap<ByteType, usize>,
    nodes: Vec<ByteType>,
}

impl TypeTable {
    pub fn new(ptr_size: u32) -> TypeTable {
        let mut t = TypeTable {
            defs: Vec::new(),
            names: HashMap::new(),
            ptr_size,
            params: Env::new(),
            up: Vec::new(),
            node_ix: HashMap::new(),
            nodes: Vec::new(),
        };
        t.defs.push((Some("word".into()), TypeDef::Word));
        t.names.insert("word".into(), WORD);
        t
    }

    pub fn ptr_size(&self) -> u32 {
        self.ptr_size
    }

    pub fn add(&mut self, name: Option<&str>, def: TypeDef) -> Result<TypeId, TableError> {
        if let Some(n) = name {
            if self.names.contains_key(n) {
                return Err(TableError::Duplicate(n.into()));
            }
        }
        // structurally identical anonymous types are shared
        if name.is_none() {
            if let Some(id) = self.defs.iter().position(|(n, d)| n.is_none() && *d == def) {
                return Ok(id);
            }
        }
        let id = self.defs.len();
        self.defs.push((name.map(str::to_string), def));
        if let Some(n) = name {
            self.names.insert(n.into(), id);
        }
        Ok(id)
    }

    /// Reserves a name so that recursive structures can refer to it.
    pub fn declare(&mut self, name: &str) -> Result<TypeId, TableError> {
        self.add(Some(name), TypeDef::Struct { size: 0, fields: Vec::new() })
    }

    pub fn define(&mut self, id: TypeId, def: TypeDef) {
        self.defs[id].1 = def;
    }

    pub fn int(&mut self, bits: u32) -> TypeId {
        self.add(None, TypeDef::Int { bits, pred: None, base: None }).unwrap()
    }

    pub fn ptr(&mut self, target: TypeId, nullable: bool) -> TypeId {
        self.add(None, TypeDef::Ptr { target: ByteType { ty: target, k: 0 }, nullable }).unwrap()
    }

    /// The plain integer type of `bits` bits, if it is in the table.
    pub fn int_id(&self, bits: u32) -> Option<TypeId> {
        self.defs.iter().position(|(n, d)| n.is_none() && *d == TypeDef::Int { bits, pred: None, base: None })
    }

    pub fn lookup(&self, name: &str) -> Option<TypeId> {
        self.names.get(name).copied()
    }

    pub fn def(&self, id: TypeId) -> &TypeDef {
        &self.defs[id].1
    }

    pub fn name_of(&self, id: TypeId) -> Option<&str> {
        self.defs[id].0.as_deref()
    }

    pub fn ids(&self) -> impl Iterator<Item = TypeId> {
        0..self.defs.len()
    }

    pub fn display(&self, id: TypeId) -> String {
        if let Some(n) = self.name_of(id) {
            return n.into();
        }
        match self.def(id) {
            TypeDef::Word => "word".into(),
            TypeDef::Int { bits, .. } => format!("int{bits}"),
            TypeDef::Ptr { target, nullable } => {
                format!("{}{}", self.display_target(*target), if *nullable { "?" } else { "*" })
            }
            TypeDef::Struct { .. } => format!("struct#{id}"),
            TypeDef::Array { elem, len } => match len {
                ArrayLen::Const(n) => format!("{}[{n}]", self.display(*elem)),
                ArrayLen::Var(v) => format!("{}[{v}]", self.display(*elem)),
                ArrayLen::Unknown => format!("{}[unknown]", self.display(*elem)),
            },
        }
    }

    /// Pointer target: the type name for byte 0, `s_k` otherwise.
    pub fn display_target(&self, b: ByteType) -> String {
        if b.k == 0 {
            self.display(b.ty)
        } else {
            self.display_byte(b)
        }
    }

    /// `s_k` for aggregates, the scalar's name for byte 0 of a scalar.
    pub fn display_byte(&self, b: ByteType) -> String {
        match self.def(b.ty) {
            TypeDef::Struct { .. } | TypeDef::Array { .. } => format!("{}_{}", self.display(b.ty), b.k),
            _ if b.k == 0 => self.display(b.ty),
            _ => format!("({})_{}", self.display(b.ty), b.k),
        }
    }

    /// Size in bytes; `None` for arrays whose length is not a constant.
    pub fn size(&self, id: TypeId) -> Option<u32> {
        match self.def(id) {
            TypeDef::Word | TypeDef::Ptr { .. } => Some(self.ptr_size),
            TypeDef::Int { bits, .. } => Some(bits.div_ceil(8)),
            TypeDef::Struct { size, .. } => Some(*size),
            TypeDef::Array { elem, len: ArrayLen::Const(n) } => Some(self.size(*elem)? * *n as u32),
            TypeDef::Array { .. } => None,
        }
    }

    /// Bytes a node ranges over: the type's size, or the element size for arrays.
    pub fn span(&self, id: TypeId) -> u32 {
        match self.def(id) {
            TypeDef::Array { elem, .. } => self.size(*elem).unwrap_or(0),
            _ => self.size(id).unwrap_or(0),
        }
    }

    pub fn is_leaf(&self, id: TypeId) -> bool {
        matches!(self.def(id), TypeDef::Word | TypeDef::Int { .. } | TypeDef::Ptr { .. })
    }

    /// Checks layouts and computes the subtyping closure. Must be called
    /// after the last definition.
    pub fn finish(&mut self) -> Result<(), TableError> {
        for id in self.ids() {
            self.check_layout(id, &mut Vec::new())?;
        }
        self.nodes.clear();
        self.node_ix.clear();
        for id in self.ids() {
            let n = if id == WORD { 1 } else { self.span(id) };
            for k in 0..n {
                let b = ByteType { ty: id, k };
                self.node_ix.insert(b, self.nodes.len());
                self.nodes.push(b);
            }
        }
        let edges = self.generating_edges();
        let mut succ = vec![Vec::new(); self.nodes.len()];
        for (a, b) in edges {
            succ[self.node_ix[&a]].push(self.node_ix[&b]);
        }
        self.up = (0..self.nodes.len())
            .map(|s| {
                let mut seen = BTreeSet::from([s]);
                let mut q = VecDeque::from([s]);
                while let Some(x) = q.pop_front() {
                    for &y in &succ[x] {
                        if seen.insert(y) {
                            q.push_back(y);
                        }
                    }
                }
                seen
            })
            .collect();
        Ok(())
    }

    fn check_layout(&self, id: TypeId, stack: &mut Vec<TypeId>) -> Result<(), TableError> {
        let name = || self.display(id);
        if stack.contains(&id) {
            return Err(TableError::Cyclic(name()));
        }
        stack.push(id);
        match self.def(id) {
            TypeDef::Struct { size, fields } => {
                let mut end = 0;
                for f in fields {
                    if f.offset < end {
                        return Err(TableError::Layout(name(), format!("field at offset {} overlaps", f.offset)));
                    }
                    self.check_layout(f.ty, stack)?;
                    let fs = self
                        .size(f.ty)
                        .ok_or_else(|| TableError::Layout(name(), "field of unknown size".into()))?;
                    end = f.offset + fs;
                    if end > *size {
                        return Err(TableError::Layout(name(), format!("field at offset {} exceeds size {size}", f.offset)));
                    }
                }
            }
            TypeDef::Array { elem, .. } => self.check_layout(*elem, stack)?,
            TypeDef::Int { base: Some(b), bits, .. } => {
                if !matches!(self.def(*b), TypeDef::Int { bits: bb, .. } if bb == bits) {
                    return Err(TableError::Layout(name(), "refines a type of another size".into()));
                }
            }
            _ => {}
        }
        stack.pop();
        Ok(())
    }

    /// `s_{o+k} ⊑ t_k` for fields, element bytes below the element type,
    /// refinements below their base, `t* ⊑ t?` and everything else below word.
    pub fn generating_edges(&self) -> Vec<(ByteType, ByteType)> {
        let mut out = Vec::new();
        let top = ByteType { ty: WORD, k: 0 };
        for id in self.ids() {
            match self.def(id) {
                TypeDef::Word => {}
                TypeDef::Struct { fields, .. } => {
                    for f in fields {
                        let span = self.span(f.ty);
                        for k in 0..self.size(f.ty).unwrap_or(0) {
                            let tk = if f.ty == WORD || span == 0 { 0 } else { k % span };
                            out.push((ByteType { ty: id, k: f.offset + k }, ByteType { ty: f.ty, k: tk }));
                        }
                    }
                }
                TypeDef::Array { elem, .. } => {
                    for k in 0..self.span(id) {
                        out.push((ByteType { ty: id, k }, ByteType { ty: *elem, k }));
                    }
                }
                TypeDef::Int { base, .. } => {
                    for k in 0..self.span(id) {
                        out.push((ByteType { ty: id, k }, base.map_or(top, |b| ByteType { ty: b, k })));
                    }
                }
                TypeDef::Ptr { target, nullable } => {
                    let maybe = (!nullable)
                        .then(|| self.defs.iter().position(|(_, d)| *d == TypeDef::Ptr { target: *target, nullable: true }))
                        .flatten();
                    for k in 0..self.span(id) {
                        out.push((ByteType { ty: id, k }, maybe.map_or(top, |m| ByteType { ty: m, k })));
                    }
                }
            }
        }
        out
    }

    pub fn nodes(&self) -> &[ByteType] {
        &self.nodes
    }

    /// `a ⊑ b` in the derived order.
    pub fn leq(&self, a: ByteType, b: ByteType) -> bool {
        if a == b || b.ty == WORD {
            return true;
        }
        match (self.node_ix.get(&a), self.node_ix.get(&b)) {
            (Some(x), Some(y)) => self.up[*x].contains(y),
            _ => false,
        }
    }

    /// All supertypes of `a`, including `a`.
    pub fn supertypes(&self, a: ByteType) -> Vec<ByteType> {
        match self.node_ix.get(&a) {
            Some(x) => self.up[*x].iter().map(|i| self.nodes[*i]).collect(),
            None => vec![a, ByteType { ty: WORD, k: 0 }],
        }
    }

    pub fn may_alias(&self, a: ByteType, b: ByteType) -> bool {
        self.leq(a, b) || self.leq(b, a)
    }

    /// Covering pairs of the order (its Hasse diagram).
    pub fn hasse_edges(&self) -> Vec<(ByteType, ByteType)> {
        let mut out = Vec::new();
        for (i, ups) in self.up.iter().enumerate() {
            for &j in ups {
                if i == j {
                    continue;
                }
                let covered = ups.iter().any(|&c| c != i && c != j && self.up[c].contains(&j));
                if !covered {
                    out.push((self.nodes[i], self.nodes[j]));
                }
            }
        }
        out
    }

    /// The scalar leaf types starting at byte type `b`, from its upward closure.
    pub fn leaves_at(&self, b: ByteType) -> Vec<TypeId> {
        self.supertypes(b)
            .into_iter()
            .filter(|s| s.k == 0 && s.ty != WORD && self.is_leaf(s.ty))
            .map(|s| s.ty)
            .collect()
    }

    /// The innermost field type covering `[k, k+size)` of `ty`, with the
    /// offset of the access inside it. Descends into structures and arrays.
    pub fn field_at(&self, ty: TypeId, k: u32, size: u32) -> Option<(TypeId, u32)> {
        match self.def(ty) {
            TypeDef::Struct { fields, .. } => {
                for f in fields {
                    let fs = self.size(f.ty)?;
                    if k >= f.offset && k + size <= f.offset + fs {
                        return self.field_at(f.ty, k - f.offset, size);
                    }
                }
                None
            }
            TypeDef::Array { elem, .. } => {
                let es = self.size(*elem)?;
                if es == 0 {
                    return None;
                }
                let kk = k % es;
                if kk + size <= es {
                    self.field_at(*elem, kk, size)
                } else {
                    None
                }
            }
            _ => Some((ty, k)),
        }
    }

    /// Chain of predicates a value of scalar type `id` must satisfy, with the bit width.
    pub fn predicates(&self, id: TypeId) -> (u32, Vec<&Predicate>) {
        let mut out = Vec::new();
        let mut cur = Some(id);
        let mut bits = self.ptr_size * 8;
        while let Some(c) = cur {
            match self.def(c) {
                TypeDef::Int { bits: b, pred, base } => {
                    bits = *b;
                    out.extend(pred.iter());
                    cur = *base;
                }
                _ => cur = None,
            }
        }
        (bits, out)
    }

    /// Named types in definition order.
    pub fn named(&self) -> BTreeMap<TypeId, &str> {
        self.defs.iter().enumerate().filter_map(|(i, (n, _))| n.as_deref().map(|n| (i, n))).collect()
    }
}

impl fmt::Display for ByteType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}_{}", self.ty, self.k)
    }
}
