//! Recursive-descent parser.
//!
//! Grammar, loosest binding first:
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' unary)?
//! primary := number | name | func '(' expr ')' | '(' expr ')'
//! ```

use super::{BinaryOp, Expr, Node, SymbolTable, UnaryOp};
use crate::error::{Error, Result};

const FUNCTIONS: [(&str, UnaryOp); 7] = [
    ("sin", UnaryOp::Sin),
    ("cos", UnaryOp::Cos),
    ("tan", UnaryOp::Tan),
    ("exp", UnaryOp::Exp),
    ("log", UnaryOp::Log),
    ("sqrt", UnaryOp::Sqrt),
    ("abs", UnaryOp::Abs),
];

pub(crate) fn is_function_name(name: &str) -> bool {
    FUNCTIONS.iter().any(|(f, _)| *f == name)
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
}

fn tokenize(src: &str) -> Result<Vec<(Tok, usize)>> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || (c == b'.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text = &src[start..i];
            let value: f64 = text.parse().map_err(|_| Error::Syntax {
                offset: start,
                message: format!("malformed number `{text}`"),
            })?;
            out.push((Tok::Num(value), start));
        } else if c.is_ascii_alphabetic() || c == b'_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((Tok::Ident(src[start..i].to_string()), start));
        } else {
            let tok = match c {
                b'+' | b'-' | b'*' | b'/' | b'^' => Tok::Op(c as char),
                b'(' => Tok::LParen,
                b')' => Tok::RParen,
                _ => {
                    let ch = src[i..].chars().next().unwrap_or('?');
                    return Err(Error::Syntax {
                        offset: i,
                        message: format!("unexpected character `{ch}`"),
                    });
                }
            };
            out.push((tok, i));
            i += 1;
        }
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    at: usize,
    symbols: &'a SymbolTable,
    // errors at end of input point at the last byte of the source
    end: usize,
}

/// Parses `source` against `symbols`.
pub fn parse(source: &str, symbols: &SymbolTable) -> Result<Expr> {
    let toks = tokenize(source)?;
    let mut p = Parser {
        toks,
        at: 0,
        symbols,
        end: source.len().saturating_sub(1),
    };
    let e = p.expr()?;
    if let Some((tok, pos)) = p.toks.get(p.at) {
        return Err(Error::Syntax {
            offset: *pos,
            message: format!("unexpected {}", describe(tok)),
        });
    }
    Ok(e)
}

fn describe(tok: &Tok) -> String {
    match tok {
        Tok::Num(v) => format!("number {v}"),
        Tok::Ident(s) => format!("identifier `{s}`"),
        Tok::Op(c) => format!("operator `{c}`"),
        Tok::LParen => "`(`".into(),
        Tok::RParen => "`)`".into(),
    }
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|(t, _)| t)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.at).map_or(self.end, |(_, p)| *p)
    }

    fn eof_error(&self, what: &str) -> Error {
        Error::Syntax {
            offset: self.end,
            message: format!("unexpected end of input, expected {what}"),
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        while let Some(Tok::Op(c @ ('+' | '-'))) = self.peek() {
            let op = if *c == '+' { BinaryOp::Add } else { BinaryOp::Sub };
            let pos = self.pos();
            self.at += 1;
            let rhs = self.term()?;
            lhs = Expr {
                node: Node::Binary(op, Box::new(lhs), Box::new(rhs)),
                pos,
            };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Op(c @ ('*' | '/'))) = self.peek() {
            let op = if *c == '*' { BinaryOp::Mul } else { BinaryOp::Div };
            let pos = self.pos();
            self.at += 1;
            let rhs = self.unary()?;
            lhs = Expr {
                node: Node::Binary(op, Box::new(lhs), Box::new(rhs)),
                pos,
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        if let Some(Tok::Op('-')) = self.peek() {
            let pos = self.pos();
            self.at += 1;
            let arg = self.unary()?;
            return Ok(Expr {
                node: Node::Unary(UnaryOp::Neg, Box::new(arg)),
                pos,
            });
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.primary()?;
        if let Some(Tok::Op('^')) = self.peek() {
            let pos = self.pos();
            self.at += 1;
            let exp = self.unary()?;
            return Ok(Expr {
                node: Node::Binary(BinaryOp::Pow, Box::new(base), Box::new(exp)),
                pos,
            });
        }
        Ok(base)
    }

    fn expect_rparen(&mut self) -> Result<()> {
        match self.toks.get(self.at) {
            Some((Tok::RParen, _)) => {
                self.at += 1;
                Ok(())
            }
            Some((tok, pos)) => Err(Error::Syntax {
                offset: *pos,
                message: format!("expected `)`, found {}", describe(tok)),
            }),
            None => Err(self.eof_error("`)`")),
        }
    }

    fn primary(&mut self) -> Result<Expr> {
        let Some((tok, pos)) = self.toks.get(self.at).cloned() else {
            return Err(self.eof_error("an operand"));
        };
        self.at += 1;
        match tok {
            Tok::Num(v) => Ok(Expr {
                node: Node::Const(v),
                pos,
            }),
            Tok::LParen => {
                let e = self.expr()?;
                self.expect_rparen()?;
                Ok(e)
            }
            Tok::Ident(name) => {
                if let Some(Tok::LParen) = self.peek() {
                    let Some(&(_, op)) = FUNCTIONS.iter().find(|(f, _)| *f == name) else {
                        return Err(Error::UnknownIdentifier { name, offset: pos });
                    };
                    self.at += 1;
                    let arg = self.expr()?;
                    self.expect_rparen()?;
                    return Ok(Expr {
                        node: Node::Unary(op, Box::new(arg)),
                        pos,
                    });
                }
                match self.symbols.lookup(&name) {
                    Some(slot) => Ok(Expr {
                        node: Node::Var(slot),
                        pos,
                    }),
                    None => Err(Error::UnknownIdentifier { name, offset: pos }),
                }
            }
            other => Err(Error::Syntax {
                offset: pos,
                message: format!("unexpected {}", describe(&other)),
            }),
        }
    }
}
