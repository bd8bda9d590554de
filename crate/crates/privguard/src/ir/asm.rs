//! Textual assembly: parser and printer. The grammar is in `docs/ir-grammar.md`.

use super::encode::{encode_instruction, EncodeError};
use super::{Binop, Expr, Hint, Instr, Program, Reg, Section, SectionAttr, Unop, INSTR_SIZE};
use std::collections::BTreeMap;
use std::fmt::Write as _;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("{line}:{col}: syntax error: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("{line}:{col}: undefined label `{name}`")]
    UndefinedLabel { line: usize, col: usize, name: String },
    #[error("{line}: width mismatch: {msg}")]
    WidthMismatch { line: usize, msg: String },
    #[error("sections `{0}` and `{1}` overlap")]
    OverlappingSections(String, String),
    #[error("{line}: {msg}")]
    Layout { line: usize, msg: String },
    #[error("{line}: {source}")]
    Encoding { line: usize, source: EncodeError },
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Int(u64),
    Str(String),
    Sym(&'static str),
}

const SYMS: [&str; 24] = [
    ">>u", ">>s", "::", "<<", "==", "!=", ">u", "<u", ">s", "<s", "/u", "/s", "%u", "%s", "+", "-", "*", "&",
    "|", "^", "~", ",", ":", "(",
];

fn tokenize(line: &str, ln: usize) -> Result<Vec<(usize, Tok)>, ParseError> {
    let b = line.as_bytes();
    let mut i = 0;
    let mut out = Vec::new();
    let err = |col: usize, msg: String| ParseError::Syntax { line: ln, col, msg };
    while i < b.len() {
        let c = b[i];
        let col = i + 1;
        if c == b';' {
            break;
        }
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if c == b')' {
            out.push((col, Tok::Sym(")")));
            i += 1;
            continue;
        }
        if c == b'"' {
            let mut s = String::new();
            i += 1;
            loop {
                match b.get(i) {
                    None => return Err(err(col, "unterminated string".into())),
                    Some(b'"') => break,
                    Some(b'\\') => {
                        match b.get(i + 1) {
                            Some(b'n') => s.push('\n'),
                            Some(b'0') => s.push('\0'),
                            Some(b'"') => s.push('"'),
                            Some(b'\\') => s.push('\\'),
                            _ => return Err(err(i + 1, "bad escape".into())),
                        }
                        i += 2;
                    }
                    Some(ch) => {
                        s.push(*ch as char);
                        i += 1;
                    }
                }
            }
            i += 1;
            out.push((col, Tok::Str(s)));
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < b.len() && (b[i].is_ascii_alphanumeric() || b[i] == b'_') {
                i += 1;
            }
            let text = line[start..i].replace('_', "");
            let v = if let Some(h) = text.strip_prefix("0x") {
                u64::from_str_radix(h, 16)
            } else if let Some(bn) = text.strip_prefix("0b") {
                u64::from_str_radix(bn, 2)
            } else {
                text.parse()
            }
            .map_err(|_| err(col, format!("bad integer `{text}`")))?;
            out.push((col, Tok::Int(v)));
            continue;
        }
        if c.is_ascii_alphabetic() || c == b'_' || c == b'.' {
            let start = i;
            while i < b.len() && (b[i].is_ascii_alphanumeric() || b[i] == b'_' || b[i] == b'.') {
                i += 1;
            }
            if i < b.len() && b[i] == b'\'' {
                i += 1;
            }
            out.push((col, Tok::Ident(line[start..i].to_string())));
            continue;
        }
        match SYMS.iter().find(|s| line[i..].starts_with(**s)) {
            Some(s) => {
                out.push((col, Tok::Sym(s)));
                i += s.len();
            }
            None => return Err(err(col, format!("unexpected character `{}`", c as char))),
        }
    }
    Ok(out)
}

const INSTR_KEYWORDS: [&str; 6] = ["assign", "store", "goto", "if", "rfi", "trap"];

struct Ctx<'a> {
    addr_width: u8,
    labels: &'a BTreeMap<String, u64>,
    equs: &'a BTreeMap<String, u64>,
}

struct Line<'a> {
    toks: &'a [(usize, Tok)],
    pos: usize,
    ln: usize,
    eol_col: usize,
}

impl<'a> Line<'a> {
    fn col(&self) -> usize {
        self.toks.get(self.pos).map(|t| t.0).unwrap_or(self.eol_col)
    }

    fn peek(&self) -> Option<&'a Tok> {
        self.toks.get(self.pos).map(|t| &t.1)
    }

    fn next(&mut self) -> Option<&'a Tok> {
        let t = self.toks.get(self.pos).map(|t| &t.1);
        self.pos += 1;
        t
    }

    fn syntax(&self, msg: impl Into<String>) -> ParseError {
        ParseError::Syntax { line: self.ln, col: self.col(), msg: msg.into() }
    }

    fn expect(&mut self, s: &str) -> Result<(), ParseError> {
        match self.peek() {
            Some(Tok::Sym(x)) if *x == s => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(self.syntax(format!("expected `{s}`"))),
        }
    }

    fn eat(&mut self, s: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Sym(x)) if *x == s) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn int(&mut self) -> Result<u64, ParseError> {
        match self.next() {
            Some(Tok::Int(v)) => Ok(*v),
            _ => {
                self.pos -= 1;
                Err(self.syntax("expected integer"))
            }
        }
    }

    fn ident(&mut self) -> Result<&'a str, ParseError> {
        match self.next() {
            Some(Tok::Ident(s)) => Ok(s),
            _ => {
                self.pos -= 1;
                Err(self.syntax("expected identifier"))
            }
        }
    }

    fn section_attr(&mut self) -> Result<SectionAttr, ParseError> {
        let head = self.ident()?.to_string();
        let full = if self.eat("-") { format!("{head}-{}", self.ident()?) } else { head };
        SectionAttr::parse(&full).ok_or_else(|| self.syntax("expected code-ro, data-rw or data-ro"))
    }

    fn end(&self) -> Result<(), ParseError> {
        if self.pos < self.toks.len() {
            Err(self.syntax("trailing tokens"))
        } else {
            Ok(())
        }
    }

    fn width(&mut self) -> Result<u8, ParseError> {
        let col = self.col();
        let w = self.int()?;
        if !(1..=64).contains(&w) {
            return Err(ParseError::Syntax { line: self.ln, col, msg: format!("width {w} out of range") });
        }
        Ok(w as u8)
    }

    /// Resolves a symbolic name to its value.
    fn symbol(&self, ctx: &Ctx, name: &str, col: usize) -> Result<u64, ParseError> {
        ctx.labels
            .get(name)
            .or_else(|| ctx.equs.get(name))
            .copied()
            .ok_or_else(|| ParseError::UndefinedLabel { line: self.ln, col, name: name.to_string() })
    }

    fn value_item(&mut self, ctx: &Ctx) -> Result<u64, ParseError> {
        let col = self.col();
        match self.next() {
            Some(Tok::Int(v)) => Ok(*v),
            Some(Tok::Ident(n)) => self.symbol(ctx, n, col),
            _ => {
                self.pos -= 1;
                Err(self.syntax("expected value"))
            }
        }
    }

    fn expr(&mut self, ctx: &Ctx) -> Result<Expr, ParseError> {
        self.binary(ctx, 0)
    }

    fn binary(&mut self, ctx: &Ctx, min_prec: u8) -> Result<Expr, ParseError> {
        let mut lhs = self.unary(ctx)?;
        loop {
            let Some(Tok::Sym(s)) = self.peek() else { break };
            let Some((op, prec)) = binop_of(s) else { break };
            if prec < min_prec {
                break;
            }
            self.pos += 1;
            let rhs = self.binary(ctx, prec + 1)?;
            lhs = Expr::binop(op, lhs, rhs);
            self.check_width(&lhs, ctx)?;
        }
        Ok(lhs)
    }

    fn check_width(&self, e: &Expr, ctx: &Ctx) -> Result<(), ParseError> {
        e.check(ctx.addr_width).map(|_| ()).map_err(|msg| ParseError::WidthMismatch { line: self.ln, msg })
    }

    fn unary(&mut self, ctx: &Ctx) -> Result<Expr, ParseError> {
        if self.eat("~") {
            return Ok(Expr::unop(Unop::Not, self.unary(ctx)?));
        }
        if self.eat("-") {
            return Ok(Expr::unop(Unop::Neg, self.unary(ctx)?));
        }
        self.primary(ctx)
    }

    fn primary(&mut self, ctx: &Ctx) -> Result<Expr, ParseError> {
        let col = self.col();
        match self.next() {
            Some(Tok::Sym("(")) => {
                let e = self.expr(ctx)?;
                self.expect(")")?;
                Ok(e)
            }
            Some(Tok::Int(v)) => {
                let v = *v;
                self.expect(":")?;
                let w = self.width()?;
                if w < 64 && v >> w != 0 {
                    return Err(ParseError::WidthMismatch {
                        line: self.ln,
                        msg: format!("constant {v:#x} does not fit in {w} bits"),
                    });
                }
                Ok(Expr::cst(v, w))
            }
            Some(Tok::Ident(name)) => {
                if let Some(r) = Reg::from_name(name) {
                    return Ok(Expr::Reg(r));
                }
                if let Some(e) = self.builtin(ctx, name)? {
                    return Ok(e);
                }
                let v = self.symbol(ctx, name, col)?;
                let w = if self.eat(":") { self.width()? } else { ctx.addr_width };
                if w < 64 && v >> w != 0 {
                    return Err(ParseError::WidthMismatch {
                        line: self.ln,
                        msg: format!("`{name}` = {v:#x} does not fit in {w} bits"),
                    });
                }
                Ok(Expr::cst(v, w))
            }
            _ => {
                self.pos -= 1;
                Err(self.syntax("expected expression"))
            }
        }
    }

    fn builtin(&mut self, ctx: &Ctx, name: &str) -> Result<Option<Expr>, ParseError> {
        let num = |p: &str| name.strip_prefix(p).and_then(|s| s.parse::<u8>().ok());
        let e = if let Some(sz) = num("load") {
            if !matches!(sz, 8 | 16 | 32 | 64) {
                return Err(self.syntax(format!("unsupported load width {sz}")));
            }
            self.expect("(")?;
            let a = self.expr(ctx)?;
            self.expect(")")?;
            Expr::load(sz / 8, a)
        } else if let Some(w) = num("uext").or_else(|| num("sext")) {
            let op = if name.starts_with('u') { Unop::Uext(w) } else { Unop::Sext(w) };
            self.expect("(")?;
            let a = self.expr(ctx)?;
            self.expect(")")?;
            Expr::unop(op, a)
        } else if name == "extract" {
            self.expect("(")?;
            let a = self.expr(ctx)?;
            self.expect(",")?;
            let lo = self.int()? as u8;
            self.expect(",")?;
            let hi = self.int()? as u8;
            self.expect(")")?;
            Expr::unop(Unop::Extract(lo, hi), a)
        } else {
            return Ok(None);
        };
        self.check_width(&e, ctx)?;
        Ok(Some(e))
    }
}

fn binop_of(s: &str) -> Option<(Binop, u8)> {
    let op = Binop::ALL.iter().copied().find(|o| o.symbol() == s)?;
    let prec = match op {
        Binop::Eq | Binop::Ne | Binop::Ugt | Binop::Ult | Binop::Sgt | Binop::Slt => 1,
        Binop::Or => 2,
        Binop::Xor => 3,
        Binop::And => 4,
        Binop::Shl | Binop::Shr | Binop::Sar => 5,
        Binop::Add | Binop::Sub => 6,
        Binop::Mul | Binop::Udiv | Binop::Sdiv | Binop::Urem | Binop::Srem => 7,
        Binop::Concat => 8,
    };
    Some((op, prec))
}

struct SectionBuild {
    name: String,
    base: u64,
    attr: SectionAttr,
    len: u64,
    line: usize,
}

/// Size in bytes a data directive occupies, computed without resolving names.
fn data_size(dir: &str, l: &mut Line) -> Result<u64, ParseError> {
    let unit = match dir {
        ".byte" => 1,
        ".word16" => 2,
        ".word32" => 4,
        ".word64" => 8,
        ".ascii" => {
            return match l.next() {
                Some(Tok::Str(s)) => Ok(s.len() as u64),
                _ => Err(l.syntax("expected string")),
            }
        }
        ".zero" => return l.int(),
        _ => return Err(l.syntax(format!("unknown directive `{dir}`"))),
    };
    let mut n = 1;
    while l.pos < l.toks.len() {
        if matches!(l.next(), Some(Tok::Sym(","))) {
            n += 1;
        }
    }
    Ok(n * unit)
}

/// Parses assembly text into a [`Program`] with labels resolved and code encoded.
pub fn parse_program(text: &str) -> Result<Program, ParseError> {
    let mut lines = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        lines.push((i + 1, raw.len() + 1, tokenize(raw, i + 1)?));
    }

    // Pass 1: layout, labels and constants.
    let mut addr_width = 32u8;
    let mut labels = BTreeMap::new();
    let mut equs = BTreeMap::new();
    let mut sections: Vec<SectionBuild> = Vec::new();
    for (ln, eol, toks) in &lines {
        let mut l = Line { toks, pos: 0, ln: *ln, eol_col: *eol };
        if let (Some(Tok::Ident(name)), Some(Tok::Sym(":"))) = (l.toks.first().map(|t| &t.1), l.toks.get(1).map(|t| &t.1)) {
            let sec = sections.last().ok_or_else(|| l.syntax("label outside any section"))?;
            if labels.insert(name.clone(), sec.base + sec.len).is_some() || Reg::from_name(name).is_some() {
                return Err(l.syntax(format!("label `{name}` redefined or reserved")));
            }
            l.pos = 2;
        }
        let Some(Tok::Ident(head)) = l.peek() else {
            if l.pos < l.toks.len() {
                return Err(l.syntax("expected directive or instruction"));
            }
            continue;
        };
        l.pos += 1;
        match head.as_str() {
            ".addr_width" => {
                if !sections.is_empty() {
                    return Err(l.syntax(".addr_width must precede all sections"));
                }
                let w = l.int()?;
                if !(8..=32).contains(&w) {
                    return Err(l.syntax("address width must be between 8 and 32"));
                }
                addr_width = w as u8;
            }
            ".section" => {
                let name = l.ident()?.to_string();
                let base = l.int()?;
                let attr = l.section_attr()?;
                sections.push(SectionBuild { name, base, attr, len: 0, line: *ln });
            }
            ".equ" => {
                let name = l.ident()?.to_string();
                l.expect(",")?;
                let v = l.int()?;
                equs.insert(name, v);
            }
            ".entry" | ".hint" => {}
            d if d.starts_with('.') => {
                let sz = data_size(d, &mut l)?;
                let sec = sections.last_mut().ok_or_else(|| l.syntax("data outside any section"))?;
                if sec.attr == SectionAttr::CodeRo {
                    return Err(ParseError::Layout { line: *ln, msg: "data directive in a code section".into() });
                }
                sec.len += sz;
            }
            k if INSTR_KEYWORDS.contains(&k) => {
                let sec = sections.last_mut().ok_or_else(|| l.syntax("instruction outside any section"))?;
                if sec.attr != SectionAttr::CodeRo {
                    return Err(ParseError::Layout { line: *ln, msg: format!("instruction in non-code section `{}`", sec.name) });
                }
                sec.len += INSTR_SIZE;
            }
            other => return Err(ParseError::Syntax { line: *ln, col: l.toks[l.pos - 1].0, msg: format!("unknown mnemonic `{other}`") }),
        }
    }
    let amax = if addr_width >= 64 { u64::MAX } else { 1u64 << addr_width };
    for (i, a) in sections.iter().enumerate() {
        if a.base + a.len > amax {
            return Err(ParseError::Layout { line: a.line, msg: format!("section `{}` exceeds the address space", a.name) });
        }
        for b in &sections[..i] {
            if a.base < b.base + b.len.max(1) && b.base < a.base + a.len.max(1) {
                return Err(ParseError::OverlappingSections(b.name.clone(), a.name.clone()));
            }
        }
    }

    // Pass 2: emit.
    let ctx = Ctx { addr_width, labels: &labels, equs: &equs };
    let mut prog = Program {
        addr_width,
        sections: Vec::new(),
        instrs: BTreeMap::new(),
        hints: BTreeMap::new(),
        labels: labels.clone(),
        entry: None,
    };
    let mut pending_hint = None;
    for (ln, eol, toks) in &lines {
        let mut l = Line { toks, pos: 0, ln: *ln, eol_col: *eol };
        if matches!(l.toks.get(1).map(|t| &t.1), Some(Tok::Sym(":"))) && matches!(l.toks.first().map(|t| &t.1), Some(Tok::Ident(_))) {
            l.pos = 2;
        }
        let Some(Tok::Ident(head)) = l.peek() else { continue };
        l.pos += 1;
        match head.as_str() {
            ".addr_width" | ".equ" => {}
            ".section" => {
                let name = l.ident()?.to_string();
                let base = l.int()?;
                let attr = l.section_attr()?;
                l.end()?;
                prog.sections.push(Section { name, base, attr, bytes: Vec::new() });
            }
            ".entry" => {
                let kind = l.ident()?;
                if kind != "reset" {
                    return Err(l.syntax("only `.entry reset` is supported"));
                }
                prog.entry = Some(l.value_item(&ctx)?);
                l.end()?;
            }
            ".hint" => {
                pending_hint = Some(match l.ident()? {
                    "call" => Hint::Call,
                    "return" => Hint::Return,
                    _ => return Err(l.syntax("expected `call` or `return`")),
                });
                l.end()?;
            }
            ".ascii" => {
                let Some(Tok::Str(s)) = l.next() else { unreachable!() };
                prog.sections.last_mut().unwrap().bytes.extend(s.bytes());
            }
            ".zero" => {
                let n = l.int()?;
                prog.sections.last_mut().unwrap().bytes.extend(std::iter::repeat(0).take(n as usize));
            }
            d @ (".byte" | ".word16" | ".word32" | ".word64") => {
                let unit = match d {
                    ".byte" => 1,
                    ".word16" => 2,
                    ".word32" => 4,
                    _ => 8,
                };
                loop {
                    let v = l.value_item(&ctx)?;
                    if unit < 8 && v >> (unit * 8) != 0 {
                        return Err(ParseError::WidthMismatch { line: *ln, msg: format!("{v:#x} does not fit in {unit} bytes") });
                    }
                    prog.sections.last_mut().unwrap().bytes.extend(&v.to_le_bytes()[..unit]);
                    if !l.eat(",") {
                        break;
                    }
                }
                l.end()?;
            }
            k => {
                let sec = prog.sections.last_mut().unwrap();
                let pc = sec.base + sec.bytes.len() as u64;
                let instr = match k {
                    "assign" => {
                        let col = l.col();
                        let r = Reg::from_name(l.ident()?)
                            .ok_or_else(|| ParseError::Syntax { line: *ln, col, msg: "expected register".into() })?;
                        l.expect(",")?;
                        Instr::Assign(r, l.expr(&ctx)?)
                    }
                    "store" => {
                        let addr = l.expr(&ctx)?;
                        l.expect(",")?;
                        Instr::Store { addr, value: l.expr(&ctx)? }
                    }
                    "goto" => Instr::Goto(l.expr(&ctx)?),
                    "if" => {
                        let cond = l.expr(&ctx)?;
                        if l.ident()? != "goto" {
                            return Err(l.syntax("expected `goto`"));
                        }
                        let target = l.value_item(&ctx)?;
                        let delta = target as i64 - pc as i64;
                        if delta % INSTR_SIZE as i64 != 0 {
                            return Err(ParseError::Layout { line: *ln, msg: "branch target is not instruction-aligned".into() });
                        }
                        let offset = i16::try_from(delta / INSTR_SIZE as i64)
                            .map_err(|_| ParseError::Layout { line: *ln, msg: "branch target out of range".into() })?;
                        Instr::Branch { cond, offset }
                    }
                    "rfi" => Instr::Rfi,
                    "trap" => {
                        let n = l.int()?;
                        Instr::Trap(u8::try_from(n).map_err(|_| l.syntax("trap number exceeds 255"))?)
                    }
                    _ => unreachable!(),
                };
                l.end()?;
                instr.check(addr_width).map_err(|msg| ParseError::WidthMismatch { line: *ln, msg })?;
                let bytes = encode_instruction(&instr).map_err(|source| ParseError::Encoding { line: *ln, source })?;
                sec.bytes.extend(bytes);
                if let Some(h) = pending_hint.take() {
                    prog.hints.insert(pc, h);
                }
                prog.instrs.insert(pc, instr);
            }
        }
    }
    if pending_hint.is_some() {
        return Err(ParseError::Layout { line: lines.len(), msg: "dangling .hint".into() });
    }
    Ok(prog)
}

fn fmt_expr(e: &Expr, out: &mut String) {
    match e {
        Expr::Const(b) => write!(out, "{b}").unwrap(),
        Expr::Reg(r) => out.push_str(r.name()),
        Expr::Load(sz, a) => {
            write!(out, "load{}(", sz * 8).unwrap();
            fmt_expr(a, out);
            out.push(')');
        }
        Expr::Unop(op, x) => {
            match op {
                Unop::Not | Unop::Neg => {
                    out.push(if *op == Unop::Not { '~' } else { '-' });
                    fmt_operand(x, out);
                    return;
                }
                Unop::Uext(w) => write!(out, "uext{w}(").unwrap(),
                Unop::Sext(w) => write!(out, "sext{w}(").unwrap(),
                Unop::Extract(..) => out.push_str("extract("),
            }
            fmt_expr(x, out);
            if let Unop::Extract(lo, hi) = op {
                write!(out, ", {lo}, {hi}").unwrap();
            }
            out.push(')');
        }
        Expr::Binop(op, a, b) => {
            fmt_operand(a, out);
            write!(out, " {} ", op.symbol()).unwrap();
            fmt_operand(b, out);
        }
    }
}

fn fmt_operand(e: &Expr, out: &mut String) {
    if matches!(e, Expr::Binop(..)) {
        out.push('(');
        fmt_expr(e, out);
        out.push(')');
    } else {
        fmt_expr(e, out);
    }
}

pub fn print_expr(e: &Expr) -> String {
    let mut s = String::new();
    fmt_expr(e, &mut s);
    s
}

pub fn print_instr(i: &Instr, pc: u64, addr_width: u8) -> String {
    match i {
        Instr::Assign(r, e) => format!("assign {r}, {}", print_expr(e)),
        Instr::Store { addr, value } => format!("store {}, {}", print_expr(addr), print_expr(value)),
        Instr::Goto(e) => format!("goto {}", print_expr(e)),
        Instr::Branch { cond, offset } => {
            format!("if {} goto {:#x}", print_expr(cond), Instr::branch_target(*offset, pc, addr_width))
        }
        Instr::Rfi => "rfi".into(),
        Instr::Trap(n) => format!("trap {n}"),
    }
}

/// Prints a program so that [`parse_program`] yields an equal value.
pub fn print_program(p: &Program) -> String {
    let mut out = String::new();
    writeln!(out, ".addr_width {}", p.addr_width).unwrap();
    let mut by_addr: BTreeMap<u64, Vec<&str>> = BTreeMap::new();
    for (name, a) in &p.labels {
        by_addr.entry(*a).or_default().push(name);
    }
    let mut printed = std::collections::BTreeSet::new();
    let mut emit_labels = |a: u64, out: &mut String| {
        if let Some(ns) = by_addr.get(&a) {
            for n in ns {
                if printed.insert(*n) {
                    writeln!(out, "{n}:").unwrap();
                }
            }
        }
    };
    for s in &p.sections {
        writeln!(out, ".section {} {:#x} {}", s.name, s.base, s.attr.name()).unwrap();
        if s.attr == SectionAttr::CodeRo {
            for (a, i) in p.instrs.range(s.base..s.end()) {
                emit_labels(*a, &mut out);
                match p.hints.get(a) {
                    Some(Hint::Call) => out.push_str("    .hint call\n"),
                    Some(Hint::Return) => out.push_str("    .hint return\n"),
                    None => {}
                }
                writeln!(out, "    {}", print_instr(i, *a, p.addr_width)).unwrap();
            }
        } else {
            let mut off = 0usize;
            while off < s.bytes.len() {
                emit_labels(s.base + off as u64, &mut out);
                let next_label = by_addr
                    .range(s.base + off as u64 + 1..s.end())
                    .next()
                    .map(|(a, _)| (*a - s.base) as usize)
                    .unwrap_or(s.bytes.len());
                let chunk_end = next_label.min(off + 16);
                let zeros = s.bytes[off..next_label].iter().take_while(|b| **b == 0).count();
                if zeros >= 16 {
                    writeln!(out, "    .zero {zeros}").unwrap();
                    off += zeros;
                    continue;
                }
                let items: Vec<String> = s.bytes[off..chunk_end].iter().map(|b| format!("{b:#04x}")).collect();
                writeln!(out, "    .byte {}", items.join(", ")).unwrap();
                off = chunk_end;
            }
        }
        emit_labels(s.end(), &mut out);
    }
    if let Some(e) = p.entry {
        writeln!(out, ".entry reset {e:#x}").unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_instruction() {
        let p = parse_program(".section text 0x1000 code-ro\nassign r0, 5:32\n").unwrap();
        assert_eq!(p.instruction_count(), 1);
        assert_eq!(p.instr_at(0x1000), Some(&Instr::Assign(Reg::R0, Expr::cst(5, 32))));
    }

    #[test]
    fn undefined_label() {
        let e = parse_program(".section text 0x1000 code-ro\ngoto undefined_label\n").unwrap_err();
        assert!(matches!(e, ParseError::UndefinedLabel { line: 2, col: 6, .. }), "{e}");
    }

    #[test]
    fn width_mismatch() {
        let e = parse_program(".section t 0 code-ro\nassign r0, 1:8 + 1:8\n").unwrap_err();
        assert!(matches!(e, ParseError::WidthMismatch { .. }), "{e}");
        let e = parse_program(".section t 0 code-ro\nassign r0, 1:8 + 1:32\n").unwrap_err();
        assert!(matches!(e, ParseError::WidthMismatch { .. }), "{e}");
    }

    #[test]
    fn overlapping_sections() {
        let src = ".section a 0x100 code-ro\nrfi\nrfi\n.section b 0x108 data-rw\n.byte 1\n";
        assert!(matches!(parse_program(src), Err(ParseError::OverlappingSections(..))));
    }

    #[test]
    fn syntax_error_has_position() {
        let e = parse_program(".section t 0 code-ro\nassign r0, (1:32\n").unwrap_err();
        assert!(matches!(e, ParseError::Syntax { line: 2, .. }), "{e}");
    }

    #[test]
    fn precedence_and_branches() {
        let src = "\
.section t 0x40 code-ro
top:
    if r0 + r1 == r2 goto top
    .hint call
    goto top
    rfi
.section d 0x80 data-ro
tbl:
    .word32 top, 0x48
    .ascii \"hi\"
.entry reset top
";
        let p = parse_program(src).unwrap();
        let Instr::Branch { cond, offset } = p.instr_at(0x40).unwrap() else { panic!() };
        assert_eq!(*offset, 0);
        let Expr::Binop(Binop::Eq, lhs, _) = cond else { panic!() };
        assert!(matches!(**lhs, Expr::Binop(Binop::Add, _, _)));
        assert_eq!(p.hints.get(&0x48), Some(&Hint::Call));
        assert_eq!(p.byte_at(0x80), Some(0x40));
        assert_eq!(p.byte_at(0x88), Some(b'h'));
        assert_eq!(p.entry, Some(0x40));
        let again = parse_program(&print_program(&p)).unwrap();
        assert_eq!(again, p);
    }
}
