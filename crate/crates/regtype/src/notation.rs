//! Textual grammar notation: `T -> [] | .(num,T)`.
//!
//! `any`, `num` and `$bot` are reserved words; non-terminal names are
//! capitalized identifiers. Parsing and printing round-trip up to
//! renaming.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::ParseError;
use crate::grammar::{Functor, GrammarBuilder, NtId, NtRef, RawRef, RawRhs, TypeGrammar};

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Arrow,
    Bar,
    Semi,
    LParen,
    RParen,
    Comma,
    Dot,
    Nil,
    Bot,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line: usize,
    col: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer { src: src.as_bytes(), pos: 0, line: 1, col: 1 }
    }

    fn err(&self, msg: impl Into<String>) -> ParseError {
        ParseError::Syntax {
            file: "<grammar>".into(),
            line: self.line,
            col: self.col,
            msg: msg.into(),
        }
    }

    fn bump(&mut self) -> Option<u8> {
        let c = *self.src.get(self.pos)?;
        self.pos += 1;
        if c == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn tokens(mut self) -> Result<Vec<(Tok, usize, usize)>, ParseError> {
        let mut out = Vec::new();
        while let Some(c) = self.peek() {
            let (line, col) = (self.line, self.col);
            match c {
                b' ' | b'\t' | b'\r' => {
                    self.bump();
                }
                // Newlines separate definitions like `;` does.
                b'\n' => {
                    self.bump();
                    if matches!(out.last(), Some((Tok::Semi, _, _)) | None) {
                        continue;
                    }
                    out.push((Tok::Semi, line, col));
                }
                b'%' => {
                    while let Some(c) = self.peek() {
                        if c == b'\n' {
                            break;
                        }
                        self.bump();
                    }
                }
                b'-' => {
                    self.bump();
                    if self.peek() == Some(b'>') {
                        self.bump();
                        out.push((Tok::Arrow, line, col));
                    } else {
                        return Err(self.err("expected '->'"));
                    }
                }
                b'|' => {
                    self.bump();
                    out.push((Tok::Bar, line, col));
                }
                b';' => {
                    self.bump();
                    out.push((Tok::Semi, line, col));
                }
                b'(' => {
                    self.bump();
                    out.push((Tok::LParen, line, col));
                }
                b')' => {
                    self.bump();
                    out.push((Tok::RParen, line, col));
                }
                b',' => {
                    self.bump();
                    out.push((Tok::Comma, line, col));
                }
                b'.' => {
                    self.bump();
                    out.push((Tok::Dot, line, col));
                }
                b'[' => {
                    self.bump();
                    if self.peek() == Some(b']') {
                        self.bump();
                        out.push((Tok::Nil, line, col));
                    } else {
                        return Err(self.err("expected ']'"));
                    }
                }
                b'$' => {
                    self.bump();
                    let w = self.ident();
                    if w == "bot" {
                        out.push((Tok::Bot, line, col));
                    } else {
                        return Err(self.err(format!("unknown reserved word ${w}")));
                    }
                }
                c if c.is_ascii_alphabetic() || c == b'_' => {
                    let w = self.ident();
                    out.push((Tok::Ident(w), line, col));
                }
                c => return Err(self.err(format!("unexpected character '{}'", c as char))),
            }
        }
        Ok(out)
    }

    fn ident(&mut self) -> String {
        let mut s = String::new();
        while let Some(c) = self.peek() {
            if c.is_ascii_alphanumeric() || c == b'_' {
                s.push(c as char);
                self.bump();
            } else {
                break;
            }
        }
        s
    }
}

fn is_nonterminal(name: &str) -> bool {
    name.starts_with(|c: char| c.is_ascii_uppercase())
}

struct Parser {
    toks: Vec<(Tok, usize, usize)>,
    pos: usize,
    builder: GrammarBuilder,
    names: BTreeMap<String, NtId>,
    defined: Vec<String>,
    referenced: Vec<(String, usize, usize)>,
}

impl Parser {
    fn err_at(&self, msg: impl Into<String>) -> ParseError {
        let (line, col) = self
            .toks
            .get(self.pos)
            .map(|(_, l, c)| (*l, *c))
            .unwrap_or((0, 0));
        ParseError::Syntax { file: "<grammar>".into(), line, col, msg: msg.into() }
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _, _)| t)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(t, _, _)| t.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, t: Tok) -> Result<(), ParseError> {
        if self.peek() == Some(&t) {
            self.bump();
            Ok(())
        } else {
            Err(self.err_at(format!("expected {t:?}")))
        }
    }

    fn node_of(&mut self, name: &str) -> NtId {
        if let Some(id) = self.names.get(name) {
            return *id;
        }
        let id = self.builder.fresh();
        self.names.insert(name.to_string(), id);
        id
    }

    /// One alternative of a definition, as a raw right hand side.
    fn alternative(&mut self) -> Result<RawRhs, ParseError> {
        let r = self.arg()?;
        Ok(RawRhs::Ref(r))
    }

    /// An argument position: leaf, non-terminal reference, or (possibly
    /// nested) functor term, desugared to an anonymous node.
    fn arg(&mut self) -> Result<RawRef, ParseError> {
        let (line, col) = self
            .toks
            .get(self.pos)
            .map(|(_, l, c)| (*l, *c))
            .unwrap_or((0, 0));
        match self.bump() {
            Some(Tok::Bot) => Ok(RawRef::Bottom),
            Some(Tok::Nil) => self.functor_ref("[]".to_string()),
            Some(Tok::Dot) => self.functor_ref(".".to_string()),
            Some(Tok::Ident(w)) if w == "any" => Ok(RawRef::Any),
            Some(Tok::Ident(w)) if w == "num" => Ok(RawRef::Num),
            Some(Tok::Ident(w)) if is_nonterminal(&w) => {
                self.referenced.push((w.clone(), line, col));
                Ok(RawRef::Node(self.node_of(&w)))
            }
            Some(Tok::Ident(w)) => self.functor_ref(w),
            _ => Err(self.err_at("expected a type expression")),
        }
    }

    /// A functor term whose name was just consumed; wraps it into an
    /// anonymous single-production node.
    fn functor_ref(&mut self, name: String) -> Result<RawRef, ParseError> {
        let mut args = Vec::new();
        if self.peek() == Some(&Tok::LParen) {
            self.bump();
            loop {
                args.push(self.arg()?);
                match self.bump() {
                    Some(Tok::Comma) => continue,
                    Some(Tok::RParen) => break,
                    _ => return Err(self.err_at("expected ',' or ')'")),
                }
            }
        }
        let f = Functor::new(name, args.len());
        let n = self.builder.fresh();
        self.builder
            .add(n, RawRhs::Comp(f, args))
            .map_err(|e| self.err_at(e.to_string()))?;
        Ok(RawRef::Node(n))
    }

    fn definition(&mut self) -> Result<(), ParseError> {
        let name = match self.bump() {
            Some(Tok::Ident(w)) if is_nonterminal(&w) => w,
            _ => return Err(self.err_at("expected a capitalized non-terminal name")),
        };
        self.expect(Tok::Arrow)?;
        let node = self.node_of(&name);
        self.defined.push(name);
        loop {
            let rhs = self.alternative()?;
            self.builder
                .add(node, rhs)
                .map_err(|e| self.err_at(e.to_string()))?;
            if self.peek() == Some(&Tok::Bar) {
                self.bump();
            } else {
                break;
            }
        }
        Ok(())
    }
}

/// Parse the textual grammar notation; the first defined non-terminal is
/// the root. The leaf forms `any`, `num` and `$bot` are accepted alone.
pub fn parse_grammar(src: &str) -> Result<TypeGrammar, ParseError> {
    let toks = Lexer::new(src).tokens()?;
    // Leaf grammars: a single reserved word.
    let non_semi: Vec<&Tok> = toks.iter().map(|(t, _, _)| t).filter(|t| **t != Tok::Semi).collect();
    match non_semi.as_slice() {
        [Tok::Bot] => return Ok(TypeGrammar::bottom()),
        [Tok::Ident(w)] if w == "any" => return Ok(TypeGrammar::any()),
        [Tok::Ident(w)] if w == "num" => return Ok(TypeGrammar::num()),
        [] => {
            return Err(ParseError::Syntax {
                file: "<grammar>".into(),
                line: 1,
                col: 1,
                msg: "empty grammar".into(),
            })
        }
        _ => {}
    }

    let mut p = Parser {
        toks,
        pos: 0,
        builder: GrammarBuilder::new(),
        names: BTreeMap::new(),
        defined: Vec::new(),
        referenced: Vec::new(),
    };
    loop {
        while p.peek() == Some(&Tok::Semi) {
            p.bump();
        }
        if p.peek().is_none() {
            break;
        }
        p.definition()?;
        match p.peek() {
            None => break,
            Some(Tok::Semi) => {
                p.bump();
            }
            _ => return Err(p.err_at("expected ';' or end of input")),
        }
    }
    for (name, line, col) in &p.referenced {
        if !p.defined.contains(name) {
            return Err(ParseError::Syntax {
                file: "<grammar>".into(),
                line: *line,
                col: *col,
                msg: format!("undefined non-terminal {name}"),
            });
        }
    }
    let root = match p.defined.first() {
        Some(name) => p.names[name],
        None => {
            return Err(ParseError::Syntax {
                file: "<grammar>".into(),
                line: 1,
                col: 1,
                msg: "no definitions".into(),
            })
        }
    };
    Ok(p.builder.build(RawRef::Node(root)))
}

/// Deterministic printer for the notation. Non-recursive single-production
/// non-terminals are inlined; the rest are named `T1`, `T2`, ... in
/// canonical order.
pub fn print_grammar(g: &TypeGrammar) -> String {
    print_grammar_named(g, "T")
}

/// Like [`print_grammar`] but with a caller-chosen name prefix.
pub fn print_grammar_named(g: &TypeGrammar, prefix: &str) -> String {
    print_grammar_offset(g, prefix, 1).0
}

/// Like [`print_grammar_named`] but numbering non-terminals from `start`.
/// Returns the rendered grammar and the number of names consumed. The root
/// always receives the first name, `{prefix}{start}`.
pub fn print_grammar_offset(g: &TypeGrammar, prefix: &str, start: usize) -> (String, usize) {
    let root = match g.root() {
        None => return ("$bot".to_string(), 0),
        Some(NtRef::Any) => return ("any".to_string(), 0),
        Some(NtRef::Num) => return ("num".to_string(), 0),
        Some(NtRef::Plain(id)) => id,
    };

    // Inline a node if it has exactly one alternative and is not
    // reachable from itself; the root always keeps its name.
    let self_reachable = |id: NtId| -> bool {
        let mut seen = std::collections::BTreeSet::new();
        let mut stack: Vec<NtId> = g.node(id)
            .alts
            .values()
            .flatten()
            .filter_map(|r| match r {
                NtRef::Plain(m) => Some(*m),
                _ => None,
            })
            .collect();
        while let Some(n) = stack.pop() {
            if n == id {
                return true;
            }
            if !seen.insert(n) {
                continue;
            }
            for r in g.node(n).alts.values().flatten() {
                if let NtRef::Plain(m) = r {
                    stack.push(*m);
                }
            }
        }
        false
    };

    let inlined: Vec<NtId> = g
        .prods()
        .keys()
        .filter(|id| {
            **id != root
                && !g.node(**id).has_num
                && g.node(**id).alts.len() == 1
                && !self_reachable(**id)
        })
        .copied()
        .collect();

    let mut names: BTreeMap<NtId, String> = BTreeMap::new();
    let mut n = 0usize;
    for id in g.prods().keys() {
        if !inlined.contains(id) {
            names.insert(*id, format!("{prefix}{}", start + n));
            n += 1;
        }
    }
    let used = n;

    fn render_ref(
        g: &TypeGrammar,
        r: NtRef,
        inlined: &[NtId],
        names: &BTreeMap<NtId, String>,
        out: &mut String,
    ) {
        match r {
            NtRef::Any => out.push_str("any"),
            NtRef::Num => out.push_str("num"),
            NtRef::Plain(id) => {
                if inlined.contains(&id) {
                    let (f, args) = g.node(id).alts.iter().next().unwrap();
                    render_comp(g, f, args, inlined, names, out);
                } else {
                    out.push_str(&names[&id]);
                }
            }
        }
    }

    fn render_comp(
        g: &TypeGrammar,
        f: &Functor,
        args: &[NtRef],
        inlined: &[NtId],
        names: &BTreeMap<NtId, String>,
        out: &mut String,
    ) {
        out.push_str(&f.name);
        if !args.is_empty() {
            out.push('(');
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                render_ref(g, *a, inlined, names, out);
            }
            out.push(')');
        }
    }

    let mut out = String::new();
    let mut first = true;
    for (id, p) in g.prods() {
        if inlined.contains(id) {
            continue;
        }
        if !first {
            out.push_str("; ");
        }
        first = false;
        write!(out, "{} -> ", names[id]).unwrap();
        // Alternative order: constants, then num, then compounds.
        let mut alt_strs: Vec<String> = Vec::new();
        for (f, args) in p.alts.iter().filter(|(f, _)| f.arity == 0) {
            let mut s = String::new();
            render_comp(g, f, args, &inlined, &names, &mut s);
            alt_strs.push(s);
        }
        if p.has_num {
            alt_strs.push("num".to_string());
        }
        for (f, args) in p.alts.iter().filter(|(f, _)| f.arity > 0) {
            let mut s = String::new();
            render_comp(g, f, args, &inlined, &names, &mut s);
            alt_strs.push(s);
        }
        out.push_str(&alt_strs.join(" | "));
    }
    (out, used)
}

impl std::fmt::Display for TypeGrammar {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", print_grammar(self))
    }
}
