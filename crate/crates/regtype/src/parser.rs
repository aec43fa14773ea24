//! Parser for the logic-program subset: facts, rules, list sugar,
//! atoms, numbers, variables, the builtins number/1, =</2, =/2, true/0,
//! and % line comments.

use std::collections::BTreeMap;

use crate::analyzer::{Clause, Literal, Program};
use crate::error::ParseError;
use crate::grammar::Term;

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Atom(String),
    Var(String),
    Int(i64),
    Float(f64),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Bar,
    Neck,   // :-
    Leq,    // =<
    Unify,  // =
    Dot,    // clause terminator
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line: usize,
    col: usize,
    file: String,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str, file: &str) -> Self {
        Lexer { src: src.as_bytes(), pos: 0, line: 1, col: 1, file: file.to_string() }
    }

    fn err(&self, msg: impl Into<String>) -> ParseError {
        ParseError::Syntax {
            file: self.file.clone(),
            line: self.line,
            col: self.col,
            msg: msg.into(),
        }
    }

    fn bump(&mut self) -> u8 {
        let c = self.src[self.pos];
        self.pos += 1;
        if c == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        c
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn peek2(&self) -> Option<u8> {
        self.src.get(self.pos + 1).copied()
    }

    fn skip_trivia(&mut self) {
        loop {
            match self.peek() {
                Some(c) if c.is_ascii_whitespace() => {
                    self.bump();
                }
                Some(b'%') => {
                    while let Some(c) = self.peek() {
                        self.bump();
                        if c == b'\n' {
                            break;
                        }
                    }
                }
                _ => break,
            }
        }
    }

    fn ident(&mut self) -> String {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_ascii_alphanumeric() || c == b'_' {
                self.bump();
            } else {
                break;
            }
        }
        String::from_utf8_lossy(&self.src[start..self.pos]).into_owned()
    }

    fn number(&mut self, neg: bool) -> Result<Tok, ParseError> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
            self.bump();
        }
        let mut float = false;
        if self.peek() == Some(b'.') && matches!(self.peek2(), Some(c) if c.is_ascii_digit()) {
            float = true;
            self.bump();
            while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                self.bump();
            }
        }
        let text = String::from_utf8_lossy(&self.src[start..self.pos]).into_owned();
        if float {
            let v: f64 = text.parse().map_err(|_| self.err("bad float literal"))?;
            Ok(Tok::Float(if neg { -v } else { v }))
        } else {
            let v: i64 = text.parse().map_err(|_| self.err("bad integer literal"))?;
            Ok(Tok::Int(if neg { -v } else { v }))
        }
    }

    /// Next token with its source position, or None at end of input.
    fn next(&mut self) -> Result<Option<(Tok, usize, usize)>, ParseError> {
        self.skip_trivia();
        let (line, col) = (self.line, self.col);
        let c = match self.peek() {
            None => return Ok(None),
            Some(c) => c,
        };
        let tok = match c {
            b'(' => {
                self.bump();
                Tok::LParen
            }
            b')' => {
                self.bump();
                Tok::RParen
            }
            b'[' => {
                self.bump();
                Tok::LBracket
            }
            b']' => {
                self.bump();
                Tok::RBracket
            }
            b',' => {
                self.bump();
                Tok::Comma
            }
            b'|' => {
                self.bump();
                Tok::Bar
            }
            b':' => {
                self.bump();
                if self.peek() == Some(b'-') {
                    self.bump();
                    Tok::Neck
                } else {
                    return Err(self.err("expected ':-'"));
                }
            }
            b'=' => {
                self.bump();
                if self.peek() == Some(b'<') {
                    self.bump();
                    Tok::Leq
                } else {
                    Tok::Unify
                }
            }
            b'.' => {
                self.bump();
                Tok::Dot
            }
            b'-' if matches!(self.peek2(), Some(d) if d.is_ascii_digit()) => {
                self.bump();
                self.number(true)?
            }
            c if c.is_ascii_digit() => self.number(false)?,
            c if c.is_ascii_lowercase() => Tok::Atom(self.ident()),
            c if c.is_ascii_uppercase() || c == b'_' => Tok::Var(self.ident()),
            other => return Err(self.err(format!("unexpected character '{}'", other as char))),
        };
        Ok(Some((tok, line, col)))
    }
}

struct Parser {
    toks: Vec<(Tok, usize, usize)>,
    pos: usize,
    file: String,
    end: (usize, usize),
    anon_counter: u64,
}

impl Parser {
    fn err_at(&self, line: usize, col: usize, msg: impl Into<String>) -> ParseError {
        ParseError::Syntax { file: self.file.clone(), line, col, msg: msg.into() }
    }

    fn err(&self, msg: impl Into<String>) -> ParseError {
        let (line, col) = self
            .toks
            .get(self.pos)
            .map(|(_, l, c)| (*l, *c))
            .unwrap_or(self.end);
        self.err_at(line, col, msg)
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

    fn expect(&mut self, t: &Tok, what: &str) -> Result<(), ParseError> {
        if self.peek() == Some(t) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(format!("expected {what}")))
        }
    }

    fn fresh_anon(&mut self) -> Term {
        self.anon_counter += 1;
        Term::var(format!("_G{}", self.anon_counter))
    }

    fn term(&mut self) -> Result<Term, ParseError> {
        match self.bump() {
            Some(Tok::Int(v)) => Ok(Term::int(v)),
            Some(Tok::Float(v)) => Ok(Term::Num(crate::grammar::Num::Float(v))),
            Some(Tok::Var(name)) => {
                if name == "_" {
                    Ok(self.fresh_anon())
                } else {
                    Ok(Term::var(name))
                }
            }
            Some(Tok::Atom(name)) => {
                if self.peek() == Some(&Tok::LParen) {
                    self.pos += 1;
                    let args = self.term_list()?;
                    self.expect(&Tok::RParen, "')'")?;
                    Ok(Term::comp(name, args))
                } else {
                    Ok(Term::atom(name))
                }
            }
            Some(Tok::LBracket) => self.list_tail(),
            _ => Err(self.err("expected a term")),
        }
    }

    fn term_list(&mut self) -> Result<Vec<Term>, ParseError> {
        let mut out = vec![self.term()?];
        while self.peek() == Some(&Tok::Comma) {
            self.pos += 1;
            out.push(self.term()?);
        }
        Ok(out)
    }

    fn list_tail(&mut self) -> Result<Term, ParseError> {
        if self.peek() == Some(&Tok::RBracket) {
            self.pos += 1;
            return Ok(Term::nil());
        }
        let mut items = vec![self.term()?];
        while self.peek() == Some(&Tok::Comma) {
            self.pos += 1;
            items.push(self.term()?);
        }
        let tail = if self.peek() == Some(&Tok::Bar) {
            self.pos += 1;
            self.term()?
        } else {
            Term::nil()
        };
        self.expect(&Tok::RBracket, "']'")?;
        Ok(items
            .into_iter()
            .rev()
            .fold(tail, |acc, item| Term::cons(item, acc)))
    }

    /// One body literal: a call, `true`, `number(X)`, `T1 =< T2`, or
    /// `T1 = T2`.
    fn literal(&mut self) -> Result<Literal, ParseError> {
        let lhs = self.term()?;
        match self.peek() {
            Some(Tok::Leq) => {
                self.pos += 1;
                let rhs = self.term()?;
                Ok(Literal::Builtin(Term::comp("=<", vec![lhs, rhs])))
            }
            Some(Tok::Unify) => {
                self.pos += 1;
                let rhs = self.term()?;
                Ok(Literal::Builtin(Term::comp("=", vec![lhs, rhs])))
            }
            _ => match &lhs {
                Term::Comp(f, _) if is_builtin(&f.name, f.arity) => Ok(Literal::Builtin(lhs)),
                Term::Comp(..) => Ok(Literal::Call(lhs)),
                _ => Err(self.err("expected a goal")),
            },
        }
    }

    fn clause(&mut self) -> Result<Clause, ParseError> {
        let head = self.term()?;
        match &head {
            Term::Comp(..) => {}
            _ => return Err(self.err("clause head must be an atom or compound")),
        }
        let mut body = Vec::new();
        if self.peek() == Some(&Tok::Neck) {
            self.pos += 1;
            body.push(self.literal()?);
            while self.peek() == Some(&Tok::Comma) {
                self.pos += 1;
                body.push(self.literal()?);
            }
        }
        self.expect(&Tok::Dot, "'.' at end of clause")?;
        Ok(Clause { head, body })
    }
}

/// The recognized builtins.
pub fn is_builtin(name: &str, arity: usize) -> bool {
    matches!((name, arity), ("number", 1) | ("=<", 2) | ("=", 2) | ("true", 0))
}

/// Parse a program; returns the program plus singleton-variable
/// warnings.
pub fn parse_program(src: &str, file: &str) -> Result<(Program, Vec<String>), ParseError> {
    let mut lx = Lexer::new(src, file);
    let mut toks = Vec::new();
    while let Some(t) = lx.next()? {
        toks.push(t);
    }
    let end = (lx.line, lx.col);
    let mut p = Parser { toks, pos: 0, file: file.to_string(), end, anon_counter: 0 };

    let mut preds: BTreeMap<(String, usize), Vec<Clause>> = BTreeMap::new();
    let mut order: Vec<(String, usize)> = Vec::new();
    let mut warnings = Vec::new();
    let mut clause_no = 0usize;
    while p.peek().is_some() {
        clause_no += 1;
        let clause = p.clause()?;
        // Singleton check: named variables occurring exactly once.
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for v in clause.var_occurrences() {
            *counts.entry(v).or_insert(0) += 1;
        }
        for (v, c) in &counts {
            if *c == 1 && !v.starts_with('_') {
                warnings.push(format!(
                    "{file}: singleton variable {v} in clause {clause_no}"
                ));
            }
        }
        let key = match &clause.head {
            Term::Comp(f, _) => (f.name.clone(), f.arity),
            _ => unreachable!("checked in clause()"),
        };
        if !preds.contains_key(&key) {
            order.push(key.clone());
        }
        preds.entry(key).or_default().push(clause);
    }
    Ok((Program { preds, order }, warnings))
}
