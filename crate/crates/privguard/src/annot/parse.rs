use super::{Annotations, Decl, LenAst, TypeExpr};
use crate::ir::Reg;
use crate::typedom::{PBinop, PCmp, PExpr, Predicate};

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("{line}:{col}: {msg}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub msg: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Num(u64),
    Define,
    Cmp(PCmp),
    Op(PBinop),
    // `*` is both multiplication and the pointer suffix
    Star,
    Punct(char),
}

#[derive(Clone, Debug)]
struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
}

const SYMBOLS: &[(&str, Option<PCmp>, Option<PBinop>)] = &[
    ("<=u", Some(PCmp::Ule), None),
    ("<=s", Some(PCmp::Sle), None),
    (">=u", Some(PCmp::Uge), None),
    (">=s", Some(PCmp::Sge), None),
    (">>u", None, Some(PBinop::Shr)),
    (">>s", None, Some(PBinop::Sar)),
    ("<<", None, Some(PBinop::Shl)),
    ("==", Some(PCmp::Eq), None),
    ("!=", Some(PCmp::Ne), None),
    ("<u", Some(PCmp::Ult), None),
    ("<s", Some(PCmp::Slt), None),
    (">u", Some(PCmp::Ugt), None),
    (">s", Some(PCmp::Sgt), None),
    ("/u", None, Some(PBinop::Udiv)),
    ("/s", None, Some(PBinop::Sdiv)),
    ("+", None, Some(PBinop::Add)),
    ("-", None, Some(PBinop::Sub)),
    ("&", None, Some(PBinop::And)),
    ("|", None, Some(PBinop::Or)),
];

fn lex(text: &str) -> Result<Vec<Spanned>, ParseError> {
    let mut out = Vec::new();
    for (li, line) in text.lines().enumerate() {
        let line_no = li + 1;
        let code = line.split("//").next().unwrap();
        let b = code.as_bytes();
        let mut i = 0;
        while i < b.len() {
            let c = b[i] as char;
            let col = i + 1;
            let err = |msg: String| ParseError { line: line_no, col, msg };
            if c.is_whitespace() {
                i += 1;
                continue;
            }
            let push = |out: &mut Vec<Spanned>, tok| out.push(Spanned { tok, line: line_no, col });
            if code[i..].starts_with("#define") {
                push(&mut out, Tok::Define);
                i += 7;
                continue;
            }
            if c.is_ascii_digit() {
                let start = i;
                while i < b.len() && (b[i] as char).is_ascii_alphanumeric() {
                    i += 1;
                }
                let s = &code[start..i];
                let v = if let Some(h) = s.strip_prefix("0x") {
                    u64::from_str_radix(h, 16)
                } else {
                    s.parse()
                }
                .map_err(|_| err(format!("bad number `{s}`")))?;
                push(&mut out, Tok::Num(v));
                continue;
            }
            if c.is_ascii_alphabetic() || c == '_' {
                let start = i;
                while i < b.len() && ((b[i] as char).is_ascii_alphanumeric() || b[i] == b'_' || b[i] == b'\'') {
                    i += 1;
                }
                push(&mut out, Tok::Ident(code[start..i].to_string()));
                continue;
            }
            if let Some((s, cmp, op)) = SYMBOLS.iter().find(|(s, ..)| code[i..].starts_with(s)) {
                push(&mut out, cmp.map(Tok::Cmp).or(op.map(Tok::Op)).unwrap());
                i += s.len();
                continue;
            }
            match c {
                '*' => push(&mut out, Tok::Star),
                '(' | ')' | '{' | '}' | '[' | ']' | '=' | ':' | '?' => push(&mut out, Tok::Punct(c)),
                _ => return Err(err(format!("unexpected character `{c}`"))),
            }
            i += 1;
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|s| &s.tok)
    }

    fn peek_at(&self, k: usize) -> Option<&Tok> {
        self.toks.get(self.pos + k).map(|s| &s.tok)
    }

    fn err<T>(&self, msg: impl Into<String>) -> PResult<T> {
        let (line, col) = match self.toks.get(self.pos).or(self.toks.last()) {
            Some(s) => (s.line, s.col),
            None => (1, 1),
        };
        Err(ParseError { line, col, msg: msg.into() })
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.peek().cloned();
        self.pos += 1;
        t
    }

    fn punct(&mut self, c: char) -> PResult<()> {
        if self.peek() == Some(&Tok::Punct(c)) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(format!("expected `{c}`"))
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => self.err("expected a name"),
        }
    }

    fn num(&mut self) -> PResult<u64> {
        match self.peek() {
            Some(Tok::Num(v)) => {
                let v = *v;
                self.pos += 1;
                Ok(v)
            }
            _ => self.err("expected a number"),
        }
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s == kw)
    }

    fn decl(&mut self) -> PResult<Decl> {
        match self.peek() {
            Some(Tok::Define) => {
                self.pos += 1;
                let n = self.ident()?;
                Ok(Decl::Define(n, self.num()?))
            }
            _ if self.is_kw("type") => {
                self.pos += 1;
                let n = self.ident()?;
                self.punct('=')?;
                Ok(Decl::Type(n, self.ty()?))
            }
            _ if self.is_kw("global") => {
                self.pos += 1;
                let name = self.ident()?;
                let addr = self.num()?;
                self.punct(':')?;
                Ok(Decl::Global { name, addr, ty: self.ty()? })
            }
            _ if self.is_kw("register") => {
                self.pos += 1;
                let r = self.ident()?;
                let Some(reg) = Reg::from_name(&r) else {
                    self.pos -= 1;
                    return self.err(format!("unknown register `{r}`"));
                };
                self.punct(':')?;
                Ok(Decl::Register(reg, self.ty()?))
            }
            _ => self.err("expected `type`, `#define`, `global` or `register`"),
        }
    }

    fn ty(&mut self) -> PResult<TypeExpr> {
        let mut t = self.postfix()?;
        while self.is_kw("with") {
            self.pos += 1;
            t = TypeExpr::With(Box::new(t), self.predicate()?);
        }
        Ok(t)
    }

    fn postfix(&mut self) -> PResult<TypeExpr> {
        let mut t = self.primary()?;
        while self.peek() == Some(&Tok::Punct('[')) {
            self.pos += 1;
            let len = match self.bump() {
                Some(Tok::Num(n)) => LenAst::Const(n),
                Some(Tok::Ident(s)) if s == "unknown" => LenAst::Unknown,
                Some(Tok::Ident(s)) => LenAst::Var(s),
                _ => {
                    self.pos -= 1;
                    return self.err("expected an array length");
                }
            };
            self.punct(']')?;
            t = TypeExpr::Array(Box::new(t), len);
        }
        Ok(t)
    }

    fn primary(&mut self) -> PResult<TypeExpr> {
        match self.peek().cloned() {
            Some(Tok::Punct('(')) => {
                self.pos += 1;
                let t = self.ty()?;
                self.punct(')')?;
                Ok(t)
            }
            Some(Tok::Ident(s)) if s == "struct" => {
                self.pos += 1;
                self.punct('{')?;
                let mut fields = Vec::new();
                while self.peek() != Some(&Tok::Punct('}')) {
                    if self.peek().is_none() {
                        return self.err("unterminated struct");
                    }
                    fields.push(self.ty()?);
                }
                self.pos += 1;
                Ok(TypeExpr::Struct(fields))
            }
            Some(Tok::Ident(s)) => {
                self.pos += 1;
                if let Some(bits) = s.strip_prefix("int").and_then(|b| b.parse::<u32>().ok()) {
                    if bits == 0 || bits > 64 {
                        self.pos -= 1;
                        return self.err(format!("unsupported integer size {bits}"));
                    }
                    return Ok(TypeExpr::Int(bits));
                }
                Ok(match self.peek() {
                    Some(Tok::Star) => {
                        self.pos += 1;
                        TypeExpr::Ptr(s)
                    }
                    Some(Tok::Punct('?')) => {
                        self.pos += 1;
                        TypeExpr::Maybe(s)
                    }
                    _ => TypeExpr::Named(s),
                })
            }
            _ => self.err("expected a type"),
        }
    }

    fn predicate(&mut self) -> PResult<Predicate> {
        let mut p = self.atom()?;
        while self.is_kw("or") {
            self.pos += 1;
            p = Predicate::or(p, self.atom()?);
        }
        Ok(p)
    }

    fn atom(&mut self) -> PResult<Predicate> {
        if self.peek() == Some(&Tok::Punct('(')) {
            // either a parenthesized predicate or an expression in parentheses
            let save = self.pos;
            self.pos += 1;
            if let Ok(p) = self.predicate() {
                if self.peek() == Some(&Tok::Punct(')')) {
                    self.pos += 1;
                    return Ok(p);
                }
            }
            self.pos = save;
        }
        let a = self.expr(0)?;
        let Some(Tok::Cmp(c)) = self.peek().cloned() else {
            return self.err("expected a comparison");
        };
        self.pos += 1;
        let b = self.expr(0)?;
        Ok(Predicate::Cmp(c, a, b))
    }

    fn binop(&self) -> Option<PBinop> {
        match self.peek() {
            Some(Tok::Op(o)) => Some(*o),
            // `*` followed by something that can start an operand
            Some(Tok::Star) => match self.peek_at(1) {
                Some(Tok::Num(_) | Tok::Punct('(')) => Some(PBinop::Mul),
                Some(Tok::Ident(s)) if !matches!(s.as_str(), "or" | "with" | "struct") && !is_type_start(s) => {
                    Some(PBinop::Mul)
                }
                _ => None,
            },
            _ => None,
        }
    }

    fn expr(&mut self, min: u8) -> PResult<PExpr> {
        let mut lhs = self.operand()?;
        while let Some(op) = self.binop() {
            let p = op.precedence();
            if p <= min {
                break;
            }
            self.pos += 1;
            let rhs = self.expr(p)?;
            lhs = PExpr::bin(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn operand(&mut self) -> PResult<PExpr> {
        match self.bump() {
            Some(Tok::Num(v)) => Ok(PExpr::Const(v)),
            Some(Tok::Ident(s)) if s == "self" => Ok(PExpr::SelfVal),
            Some(Tok::Ident(s)) if !matches!(s.as_str(), "or" | "with") => Ok(PExpr::Var(s)),
            Some(Tok::Punct('(')) => {
                let e = self.expr(0)?;
                self.punct(')')?;
                Ok(e)
            }
            _ => {
                self.pos -= 1;
                self.err("expected an expression")
            }
        }
    }
}

fn is_type_start(s: &str) -> bool {
    s.strip_prefix("int").is_some_and(|b| b.parse::<u32>().is_ok())
}

/// Parses an annotation file.
pub fn parse_annotations(text: &str) -> Result<Annotations, ParseError> {
    let mut p = Parser { toks: lex(text)?, pos: 0 };
    let mut decls = Vec::new();
    while p.peek().is_some() {
        decls.push(p.decl()?);
    }
    Ok(Annotations { decls })
}
