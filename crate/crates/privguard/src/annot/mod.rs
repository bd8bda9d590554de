//! Annotation language: type declarations with integer predicates, pointer
//! labels and arrays; generation of baseline annotations from layout
//! declarations; merging of a manual overlay into a [`TypeTable`].
//!
//! ```text
//! annots   ::= (decl NEWLINE)*
//! decl     ::= "type" label "=" type
//!            | "#define" NAME constant
//!            | "global" NAME constant ":" type
//!            | "register" REG ":" type
//! type     ::= postfix ("with" predicate)*
//! postfix  ::= primary ("[" (constant | variable | "unknown") "]")*
//! primary  ::= "int" bits | label | label "*" | label "?"
//!            | "struct" "{" type* "}" | "(" type ")"
//! predicate::= atom ("or" atom)*
//! atom     ::= expr comp expr | "(" predicate ")"
//! ```
//!
//! Expression operators bind, loosest first: `|`, `&`, shifts
//! (`<< >>u >>s`), `+ -`, `* /u /s`. All are left associative.
//! Structure fields are laid out back to back without padding.

mod decls;
mod merge;
mod parse;

pub use decls::{generate_from_decls, parse_decls, DeclError, DeclField, DeclKind, DeclStruct, Generated, TypeDeclFile};
pub use merge::{merge, MergeError, Merged};
pub use parse::{parse_annotations, ParseError};

use crate::ir::Reg;
use crate::typedom::{Env, PredError, Predicate};
use std::fmt;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LenAst {
    Const(u64),
    Var(String),
    Unknown,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TypeExpr {
    Int(u32),
    Named(String),
    Ptr(String),
    Maybe(String),
    Struct(Vec<TypeExpr>),
    Array(Box<TypeExpr>, LenAst),
    With(Box<TypeExpr>, Predicate),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Decl {
    Define(String, u64),
    Type(String, TypeExpr),
    Global { name: String, addr: u64, ty: TypeExpr },
    Register(Reg, TypeExpr),
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Annotations {
    pub decls: Vec<Decl>,
}

impl Annotations {
    pub fn is_empty(&self) -> bool {
        self.decls.is_empty()
    }

    pub fn defines(&self) -> impl Iterator<Item = (&str, u64)> {
        self.decls.iter().filter_map(|d| match d {
            Decl::Define(n, v) => Some((n.as_str(), *v)),
            _ => None,
        })
    }

    pub fn types(&self) -> impl Iterator<Item = (&str, &TypeExpr)> {
        self.decls.iter().filter_map(|d| match d {
            Decl::Type(n, t) => Some((n.as_str(), t)),
            _ => None,
        })
    }
}

/// Evaluates `p` on `self_value` at `width` bits; variables come from `env`.
pub fn eval_predicate(p: &Predicate, self_value: u64, width: u8, env: &Env) -> Result<bool, PredError> {
    p.eval(self_value & crate::ir::mask(width), width, env)
}

fn hex_or_dec(v: u64) -> String {
    if v < 10 {
        v.to_string()
    } else {
        format!("{v:#x}")
    }
}

impl TypeExpr {
    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, top: bool) -> fmt::Result {
        match self {
            TypeExpr::Int(b) => write!(f, "int{b}"),
            TypeExpr::Named(n) => f.write_str(n),
            TypeExpr::Ptr(n) => write!(f, "{n}*"),
            TypeExpr::Maybe(n) => write!(f, "{n}?"),
            TypeExpr::Struct(fs) => {
                f.write_str("struct {")?;
                for t in fs {
                    f.write_str(" ")?;
                    t.fmt_prec(f, false)?;
                }
                f.write_str(" }")
            }
            TypeExpr::Array(t, len) => {
                t.fmt_prec(f, false)?;
                match len {
                    LenAst::Const(n) => write!(f, "[{n}]"),
                    LenAst::Var(v) => write!(f, "[{v}]"),
                    LenAst::Unknown => f.write_str("[unknown]"),
                }
            }
            TypeExpr::With(t, p) => {
                if !top {
                    f.write_str("(")?;
                }
                t.fmt_prec(f, true)?;
                write!(f, " with {p}")?;
                if !top {
                    f.write_str(")")?;
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for TypeExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, true)
    }
}

impl fmt::Display for Decl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Decl::Define(n, v) => write!(f, "#define {n} {}", hex_or_dec(*v)),
            Decl::Type(n, t) => write!(f, "type {n} = {t}"),
            Decl::Global { name, addr, ty } => write!(f, "global {name} {addr:#x} : {ty}"),
            Decl::Register(r, t) => write!(f, "register {} : {t}", r.name()),
        }
    }
}

impl fmt::Display for Annotations {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for d in &self.decls {
            writeln!(f, "{d}")?;
        }
        Ok(())
    }
}
