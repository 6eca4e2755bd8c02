//! Hand-written lexer and recursive-descent parser for `.dl` files.
//!
//! ```text
//! % comment
//! source s(x).
//! view v1/1.
//! +s(X) :- v1(X), not s(X), 4 < X.
//! ```

use super::ast::*;
use super::error::DatalogError;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(i64),
    Str(String),
    Plus,
    Minus,
    LParen,
    RParen,
    Comma,
    Dot,
    Slash,
    Turnstile,
    Op(CmpOp),
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    column: usize,
}

fn syntax(line: usize, column: usize, message: impl Into<String>) -> DatalogError {
    DatalogError::Syntax {
        line,
        column,
        message: message.into(),
    }
}

struct Cursor {
    chars: Vec<char>,
    i: usize,
    line: usize,
    col: usize,
}

impl Cursor {
    fn peek(&self, k: usize) -> Option<char> {
        self.chars.get(self.i + k).copied()
    }

    fn advance(&mut self, n: usize) {
        for _ in 0..n {
            if self.chars[self.i] == '\n' {
                self.line += 1;
                self.col = 1;
            } else {
                self.col += 1;
            }
            self.i += 1;
        }
    }

    fn take_while(&mut self, pred: impl Fn(char) -> bool) -> String {
        let start = self.i;
        while self.peek(0).is_some_and(&pred) {
            self.advance(1);
        }
        self.chars[start..self.i].iter().collect()
    }
}

fn lex(text: &str) -> Result<(Vec<Spanned>, (usize, usize)), DatalogError> {
    let mut cur = Cursor {
        chars: text.chars().collect(),
        i: 0,
        line: 1,
        col: 1,
    };
    let mut out = Vec::new();
    while let Some(c) = cur.peek(0) {
        let (l0, c0) = (cur.line, cur.col);
        if c.is_whitespace() {
            cur.advance(1);
            continue;
        }
        if c == '%' {
            cur.take_while(|c| c != '\n');
            continue;
        }
        let next = cur.peek(1);
        let simple = |t: Tok, n: usize, cur: &mut Cursor| {
            cur.advance(n);
            t
        };
        let tok = match c {
            '(' => simple(Tok::LParen, 1, &mut cur),
            ')' => simple(Tok::RParen, 1, &mut cur),
            ',' => simple(Tok::Comma, 1, &mut cur),
            '.' => simple(Tok::Dot, 1, &mut cur),
            '/' => simple(Tok::Slash, 1, &mut cur),
            '+' => simple(Tok::Plus, 1, &mut cur),
            ':' if next == Some('-') => simple(Tok::Turnstile, 2, &mut cur),
            '<' if next == Some('=') => simple(Tok::Op(CmpOp::Le), 2, &mut cur),
            '<' if next == Some('>') => simple(Tok::Op(CmpOp::Ne), 2, &mut cur),
            '<' => simple(Tok::Op(CmpOp::Lt), 1, &mut cur),
            '>' if next == Some('=') => simple(Tok::Op(CmpOp::Ge), 2, &mut cur),
            '>' => simple(Tok::Op(CmpOp::Gt), 1, &mut cur),
            '=' => simple(Tok::Op(CmpOp::Eq), 1, &mut cur),
            '-' if next.is_some_and(|d| d.is_ascii_digit()) => {
                cur.advance(1);
                let digits = cur.take_while(|c| c.is_ascii_digit());
                let v: i64 = format!("-{digits}")
                    .parse()
                    .map_err(|_| syntax(l0, c0, "integer out of range"))?;
                Tok::Int(v)
            }
            '-' => simple(Tok::Minus, 1, &mut cur),
            '"' => {
                cur.advance(1);
                let mut s = String::new();
                loop {
                    match cur.peek(0) {
                        None => return Err(syntax(l0, c0, "unterminated string")),
                        Some('"') => {
                            cur.advance(1);
                            break;
                        }
                        Some('\\') => {
                            let ch = match cur.peek(1) {
                                Some('n') => '\n',
                                Some('"') => '"',
                                Some('\\') => '\\',
                                _ => return Err(syntax(cur.line, cur.col, "bad escape")),
                            };
                            s.push(ch);
                            cur.advance(2);
                        }
                        Some(ch) => {
                            s.push(ch);
                            cur.advance(1);
                        }
                    }
                }
                Tok::Str(s)
            }
            d if d.is_ascii_digit() => {
                let digits = cur.take_while(|c| c.is_ascii_digit());
                Tok::Int(
                    digits
                        .parse()
                        .map_err(|_| syntax(l0, c0, "integer out of range"))?,
                )
            }
            a if a.is_ascii_alphabetic() || a == '_' => {
                Tok::Ident(cur.take_while(|c| c.is_ascii_alphanumeric() || c == '_'))
            }
            other => return Err(syntax(l0, c0, format!("unexpected character `{other}`"))),
        };
        out.push(Spanned {
            tok,
            line: l0,
            column: c0,
        });
    }
    Ok((out, (cur.line, cur.col)))
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
    eof: (usize, usize),
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|s| &s.tok)
    }

    fn peek_at(&self, k: usize) -> Option<&Tok> {
        self.toks.get(self.pos + k).map(|s| &s.tok)
    }

    fn here(&self) -> (usize, usize) {
        self.toks
            .get(self.pos)
            .map(|s| (s.line, s.column))
            .unwrap_or(self.eof)
    }

    fn error(&self, message: impl Into<String>) -> DatalogError {
        let (l, c) = self.here();
        syntax(l, c, message)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|s| s.tok.clone());
        self.pos += 1;
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), DatalogError> {
        if self.peek() == Some(&want) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(format!("expected {what}")))
        }
    }

    fn program(&mut self) -> Result<(Vec<Declaration>, Vec<Rule>), DatalogError> {
        let mut decls = Vec::new();
        let mut rules = Vec::new();
        while self.peek().is_some() {
            match (self.peek(), self.peek_at(1)) {
                (Some(Tok::Ident(kw)), Some(Tok::Ident(_))) if kw == "source" || kw == "view" => {
                    decls.push(self.declaration()?)
                }
                _ => rules.push(self.rule()?),
            }
        }
        Ok((decls, rules))
    }

    fn declaration(&mut self) -> Result<Declaration, DatalogError> {
        let role = match self.bump() {
            Some(Tok::Ident(k)) if k == "source" => Role::Source,
            _ => Role::View,
        };
        let pred = self.predicate()?;
        let decl = match self.bump() {
            Some(Tok::Slash) => match self.bump() {
                Some(Tok::Int(n)) if n >= 0 => Declaration::new(role, pred, n as usize),
                _ => {
                    self.pos -= 1;
                    return Err(self.error("expected arity"));
                }
            },
            Some(Tok::LParen) => {
                let mut attrs = Vec::new();
                if self.peek() != Some(&Tok::RParen) {
                    loop {
                        match self.bump() {
                            Some(Tok::Ident(a)) if is_predicate_ident(&a) => attrs.push(a),
                            _ => {
                                self.pos -= 1;
                                return Err(self.error("expected attribute name"));
                            }
                        }
                        if self.peek() == Some(&Tok::Comma) {
                            self.pos += 1;
                        } else {
                            break;
                        }
                    }
                }
                self.expect(Tok::RParen, "`)`")?;
                Declaration::with_attributes(role, pred, attrs)
            }
            _ => {
                self.pos -= 1;
                return Err(self.error("expected `/arity` or attribute list"));
            }
        };
        self.expect(Tok::Dot, "`.` after declaration")?;
        Ok(decl)
    }

    fn predicate(&mut self) -> Result<PredicateRef, DatalogError> {
        let at = self.here();
        let sign = match self.peek() {
            Some(Tok::Plus) => {
                self.pos += 1;
                "+"
            }
            Some(Tok::Minus) => {
                self.pos += 1;
                "-"
            }
            _ => "",
        };
        match self.bump() {
            Some(Tok::Ident(name)) => {
                let surface = format!("{sign}{name}");
                PredicateRef::parse(&surface).ok_or_else(|| {
                    syntax(at.0, at.1, format!("invalid predicate name `{surface}`"))
                })
            }
            _ => {
                self.pos -= 1;
                Err(self.error("expected predicate name"))
            }
        }
    }

    fn atom(&mut self) -> Result<Atom, DatalogError> {
        let pred = self.predicate()?;
        self.expect(Tok::LParen, "`(`")?;
        let mut args = Vec::new();
        if self.peek() != Some(&Tok::RParen) {
            loop {
                args.push(self.term()?);
                if self.peek() == Some(&Tok::Comma) {
                    self.pos += 1;
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::RParen, "`)`")?;
        Ok(Atom::new(pred, args))
    }

    fn term(&mut self) -> Result<Term, DatalogError> {
        match self.bump() {
            Some(Tok::Int(i)) => Ok(Term::int(i)),
            Some(Tok::Str(s)) => Ok(Term::Const(Value::Str(s))),
            Some(Tok::Ident(v)) if is_variable_ident(&v) => Ok(Term::Var(v)),
            _ => {
                self.pos -= 1;
                Err(self.error("expected variable or constant"))
            }
        }
    }

    fn starts_term(&self) -> bool {
        match self.peek() {
            Some(Tok::Int(_)) | Some(Tok::Str(_)) => true,
            Some(Tok::Ident(v)) => is_variable_ident(v),
            _ => false,
        }
    }

    fn comparison(&mut self) -> Result<Comparison, DatalogError> {
        let left = self.term()?;
        let op = match self.bump() {
            Some(Tok::Op(op)) => op,
            _ => {
                self.pos -= 1;
                return Err(self.error("expected comparison operator"));
            }
        };
        let right = self.term()?;
        Ok(Comparison::new(left, op, right))
    }

    fn literal(&mut self) -> Result<Literal, DatalogError> {
        let positive = match self.peek() {
            Some(Tok::Ident(k)) if k == "not" => {
                self.pos += 1;
                false
            }
            _ => true,
        };
        let lit = if self.peek() == Some(&Tok::LParen) {
            self.pos += 1;
            let cmp = self.comparison()?;
            self.expect(Tok::RParen, "`)`")?;
            Literal::Cmp { cmp, positive }
        } else if self.starts_term() {
            Literal::Cmp {
                cmp: self.comparison()?,
                positive,
            }
        } else {
            Literal::Rel {
                atom: self.atom()?,
                positive,
            }
        };
        Ok(lit)
    }

    fn rule(&mut self) -> Result<Rule, DatalogError> {
        let head = self.atom()?;
        if self.peek() == Some(&Tok::Dot) {
            return Err(self.error("facts are not supported; rules need a body"));
        }
        self.expect(Tok::Turnstile, "`:-`")?;
        let mut body = vec![self.literal()?];
        while self.peek() == Some(&Tok::Comma) {
            self.pos += 1;
            body.push(self.literal()?);
        }
        self.expect(Tok::Dot, "`.` at end of rule")?;
        Ok(Rule::new(head, body))
    }
}

/// Parses and validates a whole `.dl` text.
pub fn parse_program(text: &str) -> Result<Program, DatalogError> {
    let (toks, eof) = lex(text)?;
    let mut p = Parser { toks, pos: 0, eof };
    let (decls, rules) = p.program()?;
    Program::new(decls, rules)
}

/// Parses a single rule, without program-level validation.
pub fn parse_rule(text: &str) -> Result<Rule, DatalogError> {
    let (toks, eof) = lex(text)?;
    let mut p = Parser { toks, pos: 0, eof };
    let r = p.rule()?;
    if p.peek().is_some() {
        return Err(p.error("trailing input after rule"));
    }
    Ok(r)
}
