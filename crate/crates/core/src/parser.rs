//! Line-oriented concrete syntax for programs.
//!
//! ```text
//! # comment
//! l0: x := 1
//! l1: if x <= 10 then l3
//! l2: goto l0
//! l3: halt
//! l4: done
//! ```
//!
//! Precedence, tightest first: `*`; `+` and `-` (left associative);
//! `=` and `<=` (non-associative); `not`; `and`; `or`.

use std::fmt;

use crate::syntax::{AExp, ArithOp, BExp, CmpOp, Command, Label, Program, Var};

/// 1-based source position.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, serde::Serialize)]
pub struct SourceSpan {
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ParseErrorKind {
    Lexical,
    Syntax,
    WellFormedness(&'static str),
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("{span}: {message}")]
pub struct ParseError {
    pub span: SourceSpan,
    pub kind: ParseErrorKind,
    pub message: String,
}

const KEYWORDS: &[&str] = &[
    "skip", "if", "then", "goto", "halt", "done", "true", "false", "not", "and", "or",
];

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Int(i64),
    Kw(&'static str),
    Colon,
    Assign,
    Eq,
    Leq,
    Plus,
    Minus,
    Star,
    LParen,
    RParen,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Int(n) => write!(f, "`{n}`"),
            Tok::Kw(k) => write!(f, "`{k}`"),
            Tok::Colon => f.write_str("`:`"),
            Tok::Assign => f.write_str("`:=`"),
            Tok::Eq => f.write_str("`=`"),
            Tok::Leq => f.write_str("`<=`"),
            Tok::Plus => f.write_str("`+`"),
            Tok::Minus => f.write_str("`-`"),
            Tok::Star => f.write_str("`*`"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
        }
    }
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    span: SourceSpan,
}

fn lex_line(line: &str, lineno: usize) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = line.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let span = SourceSpan {
            line: lineno,
            column: i + 1,
        };
        let tok = match c {
            '#' => break,
            c if c.is_whitespace() => {
                i += 1;
                continue;
            }
            ':' if chars.get(i + 1) == Some(&'=') => {
                i += 2;
                Tok::Assign
            }
            ':' => {
                i += 1;
                Tok::Colon
            }
            '<' if chars.get(i + 1) == Some(&'=') => {
                i += 2;
                Tok::Leq
            }
            '=' => {
                i += 1;
                Tok::Eq
            }
            '+' => {
                i += 1;
                Tok::Plus
            }
            '-' => {
                i += 1;
                Tok::Minus
            }
            '*' => {
                i += 1;
                Tok::Star
            }
            '(' => {
                i += 1;
                Tok::LParen
            }
            ')' => {
                i += 1;
                Tok::RParen
            }
            c if c.is_ascii_digit() => {
                let start = i;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                let digits: String = chars[start..i].iter().collect();
                // Kept as a magnitude until the parser knows the sign, so that
                // i64::MIN is representable.
                match digits.parse::<u64>() {
                    Ok(n) if n <= i64::MAX as u64 + 1 => Tok::Int(n as i64),
                    _ => {
                        return Err(ParseError {
                            span,
                            kind: ParseErrorKind::Lexical,
                            message: format!("integer literal {digits} out of 64-bit range"),
                        })
                    }
                }
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                let word: String = chars[start..i].iter().collect();
                match KEYWORDS.iter().find(|k| **k == word) {
                    Some(k) => Tok::Kw(k),
                    None => Tok::Ident(word),
                }
            }
            other => {
                return Err(ParseError {
                    span,
                    kind: ParseErrorKind::Lexical,
                    message: format!("unexpected character {other:?}"),
                })
            }
        };
        out.push(Token { tok, span });
    }
    Ok(out)
}

struct LineParser<'a> {
    toks: &'a [Token],
    pos: usize,
    eol: SourceSpan,
}

type PResult<T> = Result<T, ParseError>;

impl<'a> LineParser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn span(&self) -> SourceSpan {
        self.toks.get(self.pos).map(|t| t.span).unwrap_or(self.eol)
    }

    fn error<T>(&self, message: String) -> PResult<T> {
        Err(ParseError {
            span: self.span(),
            kind: ParseErrorKind::Syntax,
            message,
        })
    }

    fn unexpected<T>(&self, wanted: &str) -> PResult<T> {
        match self.peek() {
            Some(t) => self.error(format!("expected {wanted}, found {t}")),
            None => self.error(format!("expected {wanted}, found end of line")),
        }
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == Some(t) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, t: &Tok, wanted: &str) -> PResult<()> {
        if self.eat(t) {
            Ok(())
        } else {
            self.unexpected(wanted)
        }
    }

    fn ident(&mut self, wanted: &str) -> PResult<String> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => self.unexpected(wanted),
        }
    }

    fn command(&mut self) -> PResult<Command> {
        let cmd = match self.peek() {
            Some(Tok::Kw("skip")) => {
                self.pos += 1;
                Command::Skip
            }
            Some(Tok::Kw("halt")) => {
                self.pos += 1;
                Command::Halt
            }
            Some(Tok::Kw("done")) => {
                self.pos += 1;
                Command::Done
            }
            Some(Tok::Kw("goto")) => {
                self.pos += 1;
                Command::Goto(Label::new(self.ident("a label")?))
            }
            Some(Tok::Kw("if")) => {
                self.pos += 1;
                let b = self.bexp()?;
                self.expect(&Tok::Kw("then"), "`then`")?;
                Command::Branch(b, Label::new(self.ident("a label")?))
            }
            Some(Tok::Ident(_)) => {
                let v = self.ident("a variable")?;
                self.expect(&Tok::Assign, "`:=`")?;
                Command::Assign(Var::new(v), self.aexp()?)
            }
            _ => return self.unexpected("a command"),
        };
        if self.peek().is_some() {
            return self.unexpected("end of line");
        }
        Ok(cmd)
    }

    fn aexp(&mut self) -> PResult<AExp> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Plus) => ArithOp::Add,
                Some(Tok::Minus) => ArithOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = AExp::bin(op, lhs, rhs);
        }
    }

    fn term(&mut self) -> PResult<AExp> {
        let mut lhs = self.atom()?;
        while self.eat(&Tok::Star) {
            let rhs = self.atom()?;
            lhs = AExp::mul(lhs, rhs);
        }
        Ok(lhs)
    }

    fn atom(&mut self) -> PResult<AExp> {
        let span = self.span();
        match self.peek().cloned() {
            Some(Tok::Int(n)) => {
                self.pos += 1;
                literal(n, false, span)
            }
            Some(Tok::Minus) if matches!(self.toks.get(self.pos + 1).map(|t| &t.tok), Some(Tok::Int(_))) => {
                let Some(Tok::Int(n)) = self.toks.get(self.pos + 1).map(|t| t.tok.clone()) else {
                    unreachable!()
                };
                self.pos += 2;
                literal(n, true, span)
            }
            Some(Tok::Plus) if matches!(self.toks.get(self.pos + 1).map(|t| &t.tok), Some(Tok::Int(_))) => {
                let Some(Tok::Int(n)) = self.toks.get(self.pos + 1).map(|t| t.tok.clone()) else {
                    unreachable!()
                };
                self.pos += 2;
                literal(n, false, span)
            }
            Some(Tok::Ident(v)) => {
                self.pos += 1;
                Ok(AExp::Var(Var::new(v)))
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let e = self.aexp()?;
                self.expect(&Tok::RParen, "`)`")?;
                Ok(e)
            }
            _ => self.unexpected("an arithmetic expression"),
        }
    }

    fn bexp(&mut self) -> PResult<BExp> {
        let mut lhs = self.conj()?;
        while self.eat(&Tok::Kw("or")) {
            let rhs = self.conj()?;
            lhs = BExp::or(lhs, rhs);
        }
        Ok(lhs)
    }

    fn conj(&mut self) -> PResult<BExp> {
        let mut lhs = self.negation()?;
        while self.eat(&Tok::Kw("and")) {
            let rhs = self.negation()?;
            lhs = BExp::and(lhs, rhs);
        }
        Ok(lhs)
    }

    fn negation(&mut self) -> PResult<BExp> {
        if self.eat(&Tok::Kw("not")) {
            Ok(BExp::not(self.negation()?))
        } else {
            self.batom()
        }
    }

    fn batom(&mut self) -> PResult<BExp> {
        if self.eat(&Tok::Kw("true")) {
            return Ok(BExp::True);
        }
        if self.eat(&Tok::Kw("false")) {
            return Ok(BExp::False);
        }
        // A leading parenthesis may open either an arithmetic operand of a
        // comparison or a nested boolean expression; try the comparison first.
        let start = self.pos;
        let cmp_err = match self.comparison() {
            Ok(b) => return Ok(b),
            Err(e) => e,
        };
        let cmp_end = self.pos;
        self.pos = start;
        if self.eat(&Tok::LParen) {
            let nested = self.bexp().and_then(|b| {
                self.expect(&Tok::RParen, "`)`")?;
                Ok(b)
            });
            match nested {
                Ok(b) => return Ok(b),
                Err(e) if e.span > cmp_err.span => return Err(e),
                Err(_) => {}
            }
        }
        self.pos = cmp_end;
        Err(cmp_err)
    }

    fn comparison(&mut self) -> PResult<BExp> {
        let lhs = self.aexp()?;
        let op = match self.peek() {
            Some(Tok::Eq) => CmpOp::Eq,
            Some(Tok::Leq) => CmpOp::Leq,
            _ => return self.unexpected("`=` or `<=`"),
        };
        self.pos += 1;
        let rhs = self.aexp()?;
        if matches!(self.peek(), Some(Tok::Eq | Tok::Leq)) {
            return self.error("comparisons are non-associative; add parentheses".into());
        }
        Ok(BExp::Cmp(op, lhs, rhs))
    }
}

fn literal(magnitude: i64, negative: bool, span: SourceSpan) -> PResult<AExp> {
    // The lexer stores magnitudes up to 2^63 as i64 bit patterns.
    let m = magnitude as u64;
    let value = if negative {
        if m == 1u64 << 63 {
            Some(i64::MIN)
        } else {
            (m as i64).checked_neg()
        }
    } else if m <= i64::MAX as u64 {
        Some(m as i64)
    } else {
        None
    };
    value.map(AExp::Num).ok_or_else(|| ParseError {
        span,
        kind: ParseErrorKind::Syntax,
        message: "integer literal out of 64-bit range".into(),
    })
}

/// Parses program text. On success the program passes
/// [`Program::validate`]; otherwise every error found is returned.
pub fn parse(text: &str) -> Result<Program, Vec<ParseError>> {
    let mut errors = Vec::new();
    let mut commands = Vec::new();
    let mut spans = Vec::new();
    for (idx, raw) in text.split('\n').enumerate() {
        let lineno = idx + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        let toks = match lex_line(line, lineno) {
            Ok(t) => t,
            Err(e) => {
                errors.push(e);
                continue;
            }
        };
        if toks.is_empty() {
            continue;
        }
        let eol = SourceSpan {
            line: lineno,
            column: line.chars().count() + 1,
        };
        let mut p = LineParser {
            toks: &toks,
            pos: 0,
            eol,
        };
        let parsed = p
            .ident("a label")
            .and_then(|l| p.expect(&Tok::Colon, "`:`").map(|_| l))
            .and_then(|l| p.command().map(|c| (l, c)));
        match parsed {
            Ok((l, c)) => {
                spans.push(toks[0].span);
                commands.push((Label::new(l), c));
            }
            Err(e) => errors.push(e),
        }
    }
    if !errors.is_empty() {
        return Err(errors);
    }
    let program = Program::new(commands);
    let wf = program.validate();
    if wf.is_empty() {
        return Ok(program);
    }
    let end = SourceSpan {
        line: text.split('\n').count(),
        column: 1,
    };
    Err(wf
        .into_iter()
        .map(|e| {
            let span = match &e {
                crate::syntax::WellFormednessError::DuplicateLabel(l) => program
                    .commands()
                    .iter()
                    .zip(&spans)
                    .filter(|((cl, _), _)| cl == l)
                    .nth(1)
                    .map(|(_, s)| *s),
                other => other
                    .label()
                    .and_then(|l| program.position(l))
                    .map(|i| spans[i]),
            }
            .unwrap_or(end);
            ParseError {
                span,
                kind: ParseErrorKind::WellFormedness(e.rule()),
                message: e.to_string(),
            }
        })
        .collect())
}

/// Canonical text: one `label: command` per line, LF terminated.
pub fn print(program: &Program) -> String {
    let mut out = String::new();
    for (l, c) in program.commands() {
        out.push_str(&format!("{l}: {c}\n"));
    }
    out
}

fn arith_prec(op: ArithOp) -> u8 {
    match op {
        ArithOp::Add | ArithOp::Sub => 1,
        ArithOp::Mul => 2,
    }
}

fn fmt_aexp(e: &AExp, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match e {
        AExp::Num(n) => write!(f, "{n}"),
        AExp::Var(v) => write!(f, "{v}"),
        AExp::Bin(op, l, r) => {
            let p = arith_prec(*op);
            // Left-associative: a left child of equal precedence needs no
            // parentheses, a right child does.
            let lp = matches!(&**l, AExp::Bin(lo, ..) if arith_prec(*lo) < p);
            let rp = matches!(&**r, AExp::Bin(ro, ..) if arith_prec(*ro) <= p);
            wrap(f, lp, |f| fmt_aexp(l, f))?;
            write!(f, " {} ", op.symbol())?;
            wrap(f, rp, |f| fmt_aexp(r, f))
        }
    }
}

fn wrap(
    f: &mut fmt::Formatter<'_>,
    parens: bool,
    inner: impl FnOnce(&mut fmt::Formatter<'_>) -> fmt::Result,
) -> fmt::Result {
    if parens {
        f.write_str("(")?;
        inner(f)?;
        f.write_str(")")
    } else {
        inner(f)
    }
}

fn bool_prec(b: &BExp) -> u8 {
    match b {
        BExp::Or(..) => 1,
        BExp::And(..) => 2,
        BExp::Not(_) => 3,
        BExp::True | BExp::False | BExp::Cmp(..) => 4,
    }
}

fn fmt_bexp(b: &BExp, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match b {
        BExp::True => f.write_str("true"),
        BExp::False => f.write_str("false"),
        BExp::Cmp(op, l, r) => write!(f, "{l} {} {r}", op.symbol()),
        BExp::Not(inner) => {
            f.write_str("not ")?;
            wrap(f, bool_prec(inner) < 3, |f| fmt_bexp(inner, f))
        }
        BExp::And(l, r) | BExp::Or(l, r) => {
            let p = bool_prec(b);
            let word = if p == 2 { "and" } else { "or" };
            wrap(f, bool_prec(l) < p, |f| fmt_bexp(l, f))?;
            write!(f, " {word} ")?;
            wrap(f, bool_prec(r) <= p, |f| fmt_bexp(r, f))
        }
    }
}

impl fmt::Display for AExp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_aexp(self, f)
    }
}

impl fmt::Debug for AExp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_aexp(self, f)
    }
}

impl fmt::Display for BExp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_bexp(self, f)
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Command::Skip => f.write_str("skip"),
            Command::Assign(v, e) => write!(f, "{v} := {e}"),
            Command::Branch(b, g) => write!(f, "if {b} then {g}"),
            Command::Goto(g) => write!(f, "goto {g}"),
            Command::Halt => f.write_str("halt"),
            Command::Done => f.write_str("done"),
        }
    }
}

impl serde::Serialize for AExp {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}
