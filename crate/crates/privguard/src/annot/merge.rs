use super::{Annotations, Decl, LenAst, TypeExpr};
use crate::ir::Reg;
use crate::typedom::{ArrayLen, ByteType, Env, Field, Predicate, TableError, TypeDef, TypeId, TypeTable};
use std::collections::{BTreeMap, HashMap};

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum MergeError {
    #[error("unknown type `{0}`")]
    UnknownType(String),
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("`{0}` defined twice")]
    Duplicate(String),
    #[error("`{0}` embeds itself")]
    Cyclic(String),
    #[error("predicate on `{0}`, which is not an integer")]
    NotInteger(String),
    #[error("manual annotation changes the layout of `{0}`: {1}")]
    Conflict(String, String),
    #[error(transparent)]
    Table(#[from] TableError),
}

/// A type table together with the typed roots it declares.
#[derive(Clone, Debug)]
pub struct Merged {
    pub table: TypeTable,
    pub globals: Vec<(String, u64, TypeId)>,
    pub registers: Vec<(Reg, TypeId)>,
}

impl Merged {
    pub fn global(&self, name: &str) -> Option<(u64, TypeId)> {
        self.globals.iter().find(|g| g.0 == name).map(|g| (g.1, g.2))
    }
}

/// Combines generated annotations with a manual overlay. The overlay may
/// add predicates, nullability and array lengths, and may declare new
/// types, but a type declared by both must keep its layout.
pub fn merge(generated: &Annotations, manual: &Annotations, ptr_size: u32, params: &Env) -> Result<Merged, MergeError> {
    let base = build(&[generated], ptr_size, params)?;
    let merged = build(&[generated, manual], ptr_size, params)?;
    for (name, _) in generated.types() {
        if manual.types().any(|(n, _)| n == name) {
            let (g, m) = (base.table.lookup(name).unwrap(), merged.table.lookup(name).unwrap());
            refines(&base.table, g, &merged.table, m).map_err(|e| MergeError::Conflict(name.into(), e))?;
        }
    }
    for (name, addr, g) in &base.globals {
        let (maddr, m) = merged.global(name).unwrap();
        if maddr != *addr {
            return Err(MergeError::Conflict(name.clone(), format!("moved from {addr:#x} to {maddr:#x}")));
        }
        refines(&base.table, *g, &merged.table, m).map_err(|e| MergeError::Conflict(name.clone(), e))?;
    }
    Ok(merged)
}

/// Later layers override earlier ones.
fn build(layers: &[&Annotations], ptr_size: u32, params: &Env) -> Result<Merged, MergeError> {
    let mut env = params.clone();
    let mut types: Vec<(String, TypeExpr)> = Vec::new();
    let mut globals: Vec<(String, u64, TypeExpr)> = Vec::new();
    let mut regs: Vec<(Reg, TypeExpr)> = Vec::new();
    for layer in layers {
        let mut seen = Vec::new();
        for d in &layer.decls {
            let key = match d {
                Decl::Define(n, _) | Decl::Type(n, _) | Decl::Global { name: n, .. } => n.clone(),
                Decl::Register(r, _) => format!("register {}", r.name()),
            };
            if seen.contains(&key) {
                return Err(MergeError::Duplicate(key));
            }
            seen.push(key);
            match d {
                Decl::Define(n, v) => {
                    env.insert(n.clone(), (*v, *v));
                }
                Decl::Type(n, t) => upsert(&mut types, n.clone(), t.clone()),
                Decl::Global { name, addr, ty } => match globals.iter_mut().find(|g| g.0 == *name) {
                    Some(g) => *g = (name.clone(), *addr, ty.clone()),
                    None => globals.push((name.clone(), *addr, ty.clone())),
                },
                Decl::Register(r, t) => match regs.iter_mut().find(|x| x.0 == *r) {
                    Some(x) => x.1 = t.clone(),
                    None => regs.push((*r, t.clone())),
                },
            }
        }
    }
    let mut b = Builder { tt: TypeTable::new(ptr_size), env, decls: types.iter().cloned().collect(), state: HashMap::new() };
    for (n, _) in &types {
        b.tt.declare(n)?;
    }
    for (n, _) in &types {
        b.define_named(n)?;
    }
    let globals = globals
        .iter()
        .map(|(n, a, t)| Ok((n.clone(), *a, b.resolve(t)?)))
        .collect::<Result<Vec<_>, MergeError>>()?;
    let registers = regs.iter().map(|(r, t)| Ok((*r, b.resolve(t)?))).collect::<Result<Vec<_>, MergeError>>()?;
    b.tt.params = b.env.clone();
    b.tt.finish()?;
    Ok(Merged { table: b.tt, globals, registers })
}

fn upsert(v: &mut Vec<(String, TypeExpr)>, n: String, t: TypeExpr) {
    match v.iter_mut().find(|x| x.0 == n) {
        Some(x) => x.1 = t,
        None => v.push((n, t)),
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum State {
    Busy,
    Done,
}

struct Builder {
    tt: TypeTable,
    env: Env,
    decls: BTreeMap<String, TypeExpr>,
    state: HashMap<String, State>,
}

impl Builder {
    /// Defines a named type after the types it embeds.
    fn define_named(&mut self, name: &str) -> Result<TypeId, MergeError> {
        let id = self.tt.lookup(name).ok_or_else(|| MergeError::UnknownType(name.into()))?;
        match self.state.get(name) {
            Some(State::Done) => return Ok(id),
            Some(State::Busy) => return Err(MergeError::Cyclic(name.into())),
            None => {}
        }
        self.state.insert(name.into(), State::Busy);
        let e = self.decls[name].clone();
        let def = match &e {
            TypeExpr::With(..) | TypeExpr::Struct(_) | TypeExpr::Array(..) | TypeExpr::Ptr(_) | TypeExpr::Maybe(_) => {
                self.resolve_def(&e)?
            }
            // an alias refines the integer it names
            TypeExpr::Int(_) | TypeExpr::Named(_) => {
                let r = self.resolve(&e)?;
                match self.tt.def(r) {
                    TypeDef::Int { bits, .. } => TypeDef::Int { bits: *bits, pred: None, base: Some(r) },
                    d => d.clone(),
                }
            }
        };
        self.tt.define(id, def);
        self.state.insert(name.into(), State::Done);
        Ok(id)
    }

    fn resolve(&mut self, e: &TypeExpr) -> Result<TypeId, MergeError> {
        match e {
            TypeExpr::Named(n) if n == "word" => Ok(crate::typedom::WORD),
            TypeExpr::Named(n) => {
                if !self.decls.contains_key(n) {
                    return Err(MergeError::UnknownType(n.clone()));
                }
                self.define_named(n)
            }
            TypeExpr::Int(b) => Ok(self.tt.int(*b)),
            _ => {
                let d = self.resolve_def(e)?;
                Ok(self.tt.add(None, d)?)
            }
        }
    }

    fn target(&self, n: &str) -> Result<ByteType, MergeError> {
        let ty = self.tt.lookup(n).ok_or_else(|| MergeError::UnknownType(n.into()))?;
        Ok(ByteType { ty, k: 0 })
    }

    fn check_vars(&self, p: &Predicate) -> Result<(), MergeError> {
        let mut vars = Vec::new();
        fn collect(p: &Predicate, out: &mut Vec<String>) {
            match p {
                Predicate::Cmp(_, a, b) => {
                    a.vars(out);
                    b.vars(out);
                }
                Predicate::Or(a, b) => {
                    collect(a, out);
                    collect(b, out);
                }
            }
        }
        collect(p, &mut vars);
        match vars.into_iter().find(|v| !self.env.contains_key(v)) {
            Some(v) => Err(MergeError::UnknownVariable(v)),
            None => Ok(()),
        }
    }

    fn resolve_def(&mut self, e: &TypeExpr) -> Result<TypeDef, MergeError> {
        Ok(match e {
            TypeExpr::Int(b) => TypeDef::Int { bits: *b, pred: None, base: None },
            TypeExpr::Named(_) => {
                let id = self.resolve(e)?;
                self.tt.def(id).clone()
            }
            TypeExpr::Ptr(n) => TypeDef::Ptr { target: self.target(n)?, nullable: false },
            TypeExpr::Maybe(n) => TypeDef::Ptr { target: self.target(n)?, nullable: true },
            TypeExpr::Struct(fs) => {
                let mut fields = Vec::new();
                let mut off = 0;
                for f in fs {
                    let ty = self.resolve(f)?;
                    let sz = self.tt.size(ty).ok_or_else(|| {
                        MergeError::Table(TableError::Layout(f.to_string(), "field of unknown size".into()))
                    })?;
                    fields.push(Field { name: None, offset: off, ty });
                    off += sz;
                }
                TypeDef::Struct { size: off, fields }
            }
            TypeExpr::Array(t, len) => {
                let elem = self.resolve(t)?;
                let len = match len {
                    LenAst::Const(n) => ArrayLen::Const(*n),
                    LenAst::Unknown => ArrayLen::Unknown,
                    LenAst::Var(v) if self.env.contains_key(v) => ArrayLen::Var(v.clone()),
                    LenAst::Var(v) => return Err(MergeError::UnknownVariable(v.clone())),
                };
                TypeDef::Array { elem, len }
            }
            TypeExpr::With(t, p) => {
                self.check_vars(p)?;
                let base = self.resolve(t)?;
                match self.tt.def(base) {
                    TypeDef::Int { bits, .. } => TypeDef::Int { bits: *bits, pred: Some(p.clone()), base: Some(base) },
                    _ => return Err(MergeError::NotInteger(t.to_string())),
                }
            }
        })
    }
}

/// Whether `m` (in `mt`) keeps the layout of `g` (in `gt`).
fn refines(gt: &TypeTable, g: TypeId, mt: &TypeTable, m: TypeId) -> Result<(), String> {
    let (gd, md) = (gt.def(g), mt.def(m));
    let fail = |what: &str| Err(format!("{what}: `{}` became `{}`", gt.display(g), mt.display(m)));
    if gt.size(g) != mt.size(m) && !matches!(gd, TypeDef::Array { len: ArrayLen::Unknown, .. }) {
        return fail("size differs");
    }
    match (gd, md) {
        (TypeDef::Word, _) => Ok(()),
        (TypeDef::Int { bits: a, .. }, TypeDef::Int { bits: b, .. }) if a == b => Ok(()),
        (TypeDef::Ptr { target: a, .. }, TypeDef::Ptr { target: b, .. }) => {
            if gt.display(a.ty) == mt.display(b.ty) && a.k == b.k {
                Ok(())
            } else {
                fail("pointer target differs")
            }
        }
        (TypeDef::Struct { fields: a, .. }, TypeDef::Struct { fields: b, .. }) => {
            if a.len() != b.len() {
                return fail("field count differs");
            }
            for (x, y) in a.iter().zip(b) {
                if x.offset != y.offset {
                    return fail("field offset differs");
                }
                // named structures are compared where they are declared
                if gt.name_of(x.ty).is_some() && gt.name_of(x.ty) == mt.name_of(y.ty) {
                    continue;
                }
                refines(gt, x.ty, mt, y.ty)?;
            }
            Ok(())
        }
        (TypeDef::Array { elem: a, len: la }, TypeDef::Array { elem: b, len: lb }) => {
            if *la != ArrayLen::Unknown && la != lb {
                return fail("array length differs");
            }
            refines(gt, *a, mt, *b)
        }
        _ => fail("kind differs"),
    }
}
