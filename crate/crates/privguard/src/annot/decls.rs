//! Layout declarations: the input for generated annotations.
//!
//! ```text
//! # comment
//! pointer 4
//! struct Task 32
//!   field pc 0 int32
//!   field next 28 ptr Task
//!   field stack 32 int8[256]
//! end
//! global cur 0x20000 ptr Task
//! ```
//!
//! A field kind is `intN`, `ptr NAME` or the name of another structure,
//! optionally followed by `[N]`.

use super::{Annotations, Decl, LenAst, TypeExpr};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DeclKind {
    Int(u32),
    Ptr(String),
    Struct(String),
    Array(Box<DeclKind>, u64),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DeclField {
    pub name: String,
    pub offset: u32,
    pub kind: DeclKind,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DeclStruct {
    pub name: String,
    pub size: u32,
    pub fields: Vec<DeclField>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TypeDeclFile {
    pub ptr_size: u32,
    pub structs: Vec<DeclStruct>,
    pub globals: Vec<(String, u64, DeclKind)>,
}

impl Default for TypeDeclFile {
    fn default() -> Self {
        TypeDeclFile { ptr_size: 4, structs: Vec::new(), globals: Vec::new() }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum DeclError {
    #[error("line {0}: {1}")]
    Syntax(usize, String),
    #[error("structure `{0}`: {1}")]
    Layout(String, String),
}

fn parse_num(s: &str) -> Option<u64> {
    match s.strip_prefix("0x") {
        Some(h) => u64::from_str_radix(h, 16).ok(),
        None => s.parse().ok(),
    }
}

fn parse_kind(words: &[&str]) -> Option<DeclKind> {
    let (is_ptr, word) = match words {
        ["ptr", name] => (true, *name),
        [k] => (false, *k),
        _ => return None,
    };
    let (base, arr) = match word.split_once('[') {
        Some((b, n)) => (b, Some(parse_num(n.strip_suffix(']')?)?)),
        None => (word, None),
    };
    let k = if is_ptr {
        DeclKind::Ptr(base.to_string())
    } else if let Some(bits) = base.strip_prefix("int").and_then(|b| b.parse::<u32>().ok()) {
        if bits == 0 || bits > 64 {
            return None;
        }
        DeclKind::Int(bits)
    } else {
        DeclKind::Struct(base.to_string())
    };
    Some(match arr {
        Some(n) => DeclKind::Array(Box::new(k), n),
        None => k,
    })
}

/// Parses the line format above.
pub fn parse_decls(text: &str) -> Result<TypeDeclFile, DeclError> {
    let mut f = TypeDeclFile::default();
    let mut cur: Option<DeclStruct> = None;
    for (i, line) in text.lines().enumerate() {
        let ln = i + 1;
        let words: Vec<&str> = line.split('#').next().unwrap().split_whitespace().collect();
        let bad = |m: &str| DeclError::Syntax(ln, m.to_string());
        match (words.as_slice(), cur.as_mut()) {
            ([], _) => {}
            (["pointer", n], None) => f.ptr_size = parse_num(n).ok_or_else(|| bad("bad pointer size"))? as u32,
            (["struct", name, size], None) => {
                let size = parse_num(size).ok_or_else(|| bad("bad structure size"))? as u32;
                cur = Some(DeclStruct { name: name.to_string(), size, fields: Vec::new() });
            }
            (["field", name, off, kind @ ..], Some(s)) => {
                let offset = parse_num(off).ok_or_else(|| bad("bad field offset"))? as u32;
                let kind = parse_kind(kind).ok_or_else(|| bad("bad field kind"))?;
                s.fields.push(DeclField { name: name.to_string(), offset, kind });
            }
            (["end"], Some(_)) => f.structs.push(cur.take().unwrap()),
            (["global", name, addr, kind @ ..], None) => {
                let addr = parse_num(addr).ok_or_else(|| bad("bad address"))?;
                f.globals.push((name.to_string(), addr, parse_kind(kind).ok_or_else(|| bad("bad global kind"))?));
            }
            _ => return Err(bad(&format!("unexpected `{}`", line.trim()))),
        }
    }
    if let Some(s) = cur {
        return Err(DeclError::Layout(s.name, "missing `end`".into()));
    }
    Ok(f)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Generated {
    pub annotations: Annotations,
    /// Number of lines of the printed annotations.
    pub lines: usize,
}

fn kind_size(k: &DeclKind, f: &TypeDeclFile) -> Option<u32> {
    match k {
        DeclKind::Int(b) => Some(b.div_ceil(8)),
        DeclKind::Ptr(_) => Some(f.ptr_size),
        DeclKind::Struct(n) => f.structs.iter().find(|s| &s.name == n).map(|s| s.size),
        DeclKind::Array(k, n) => Some(kind_size(k, f)? * *n as u32),
    }
}

fn kind_type(k: &DeclKind) -> TypeExpr {
    match k {
        DeclKind::Int(b) => TypeExpr::Int(*b),
        DeclKind::Ptr(n) => TypeExpr::Ptr(n.clone()),
        DeclKind::Struct(n) => TypeExpr::Named(n.clone()),
        DeclKind::Array(k, n) => TypeExpr::Array(Box::new(kind_type(k)), LenAst::Const(*n)),
    }
}

fn padding(n: u32) -> TypeExpr {
    if n == 1 {
        TypeExpr::Int(8)
    } else {
        TypeExpr::Array(Box::new(TypeExpr::Int(8)), LenAst::Const(n as u64))
    }
}

/// One structure declaration per layout, padding gaps with `int8` bytes.
/// Pointers are never null.
pub fn generate_from_decls(f: &TypeDeclFile) -> Result<Generated, DeclError> {
    let mut decls = Vec::new();
    for s in &f.structs {
        let lay = |m: String| DeclError::Layout(s.name.clone(), m);
        let mut fields = Vec::new();
        let mut end = 0u32;
        for fd in &s.fields {
            if fd.offset < end {
                return Err(lay(format!("field `{}` at offset {} is not after the previous field", fd.name, fd.offset)));
            }
            if fd.offset > end {
                fields.push(padding(fd.offset - end));
            }
            let sz = kind_size(&fd.kind, f).ok_or_else(|| lay(format!("field `{}` has an unknown type", fd.name)))?;
            if sz == 0 {
                return Err(lay(format!("field `{}` is empty", fd.name)));
            }
            end = fd.offset + sz;
            if end > s.size {
                return Err(lay(format!("field `{}` exceeds the size {}", fd.name, s.size)));
            }
            fields.push(kind_type(&fd.kind));
        }
        if end < s.size {
            fields.push(padding(s.size - end));
        }
        decls.push(Decl::Type(s.name.clone(), TypeExpr::Struct(fields)));
    }
    for (name, addr, k) in &f.globals {
        kind_size(k, f).ok_or_else(|| DeclError::Layout(name.clone(), "unknown type".into()))?;
        decls.push(Decl::Global { name: name.clone(), addr: *addr, ty: kind_type(k) });
    }
    let annotations = Annotations { decls };
    let lines = annotations.to_string().lines().count();
    Ok(Generated { annotations, lines })
}

#[cfg(test)]
mod tests {
    use super::*;

    const TASK: &str = "struct Task 32
  field pc 0 int32
  field sp 4 int32
  field flags 8 int32
  field code 12 int64
  field data 20 int64
  field next 28 ptr Task
end
global cur 0x20000 ptr Task
";

    #[test]
    fn task_layout() {
        let g = generate_from_decls(&parse_decls(TASK).unwrap()).unwrap();
        let text = g.annotations.to_string();
        assert_eq!(text, "type Task = struct { int32 int32 int32 int64 int64 Task* }\nglobal cur 0x20000 : Task*\n");
        assert_eq!(g.lines, 2);
    }

    #[test]
    fn empty_file() {
        let g = generate_from_decls(&parse_decls("").unwrap()).unwrap();
        assert!(g.annotations.is_empty());
        assert_eq!(g.lines, 0);
    }

    #[test]
    fn gaps_become_padding() {
        let f = parse_decls("struct s 8\n field a 2 int16\nend\n").unwrap();
        let g = generate_from_decls(&f).unwrap();
        assert_eq!(g.annotations.to_string(), "type s = struct { int8[2] int16 int8[4] }\n");
    }

    #[test]
    fn malformed_layouts() {
        let over = parse_decls("struct s 4\n field a 0 int32\n field b 2 int16\nend\n").unwrap();
        assert!(matches!(generate_from_decls(&over), Err(DeclError::Layout(..))));
        let big = parse_decls("struct s 2\n field a 0 int32\nend\n").unwrap();
        assert!(generate_from_decls(&big).is_err());
        assert!(matches!(parse_decls("struct s 2\n field a 0 int32\n"), Err(DeclError::Layout(..))));
        assert!(matches!(parse_decls("field a 0 int32\n"), Err(DeclError::Syntax(1, _))));
    }
}
