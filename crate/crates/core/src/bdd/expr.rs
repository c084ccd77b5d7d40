// SPDX-License-Identifier: Apache-2.0
//! Boolean expression trees and a small infix parser.
//!
//! Grammar, loosest binding first:
//!
//! ```text
//! or   := xor (('+' | '|') xor)*
//! xor  := and ('^' and)*
//! and  := not (('&' | '*' | '·') not)*
//! not  := ('!' | '~') not | atom
//! atom := ident | '0' | '1' | '(' or ')'
//! ```

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum BoolExpr {
    Const(bool),
    Var(String),
    Not(Box<BoolExpr>),
    And(Vec<BoolExpr>),
    Or(Vec<BoolExpr>),
    Xor(Box<BoolExpr>, Box<BoolExpr>),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("expression parse error at byte {pos}: {message}")]
pub struct ParseExprError {
    pub pos: usize,
    pub message: String,
}

impl BoolExpr {
    pub fn var(name: impl Into<String>) -> Self {
        BoolExpr::Var(name.into())
    }

    pub fn eval(&self, env: &dyn Fn(&str) -> bool) -> bool {
        match self {
            BoolExpr::Const(b) => *b,
            BoolExpr::Var(v) => env(v),
            BoolExpr::Not(e) => !e.eval(env),
            BoolExpr::And(es) => es.iter().all(|e| e.eval(env)),
            BoolExpr::Or(es) => es.iter().any(|e| e.eval(env)),
            BoolExpr::Xor(a, b) => a.eval(env) ^ b.eval(env),
        }
    }

    pub fn variables(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            BoolExpr::Const(_) => {}
            BoolExpr::Var(v) => {
                out.insert(v.clone());
            }
            BoolExpr::Not(e) => e.collect_vars(out),
            BoolExpr::And(es) | BoolExpr::Or(es) => es.iter().for_each(|e| e.collect_vars(out)),
            BoolExpr::Xor(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            BoolExpr::Or(_) => 1,
            BoolExpr::Xor(..) => 2,
            BoolExpr::And(_) => 3,
            _ => 4,
        }
    }

    fn fmt_child(&self, child: &BoolExpr, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if child.precedence() <= self.precedence() {
            write!(f, "({child})")
        } else {
            write!(f, "{child}")
        }
    }
}

impl fmt::Display for BoolExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoolExpr::Const(b) => write!(f, "{}", u8::from(*b)),
            BoolExpr::Var(v) => write!(f, "{v}"),
            BoolExpr::Not(e) => {
                f.write_str("!")?;
                self.fmt_child(e, f)
            }
            BoolExpr::And(es) | BoolExpr::Or(es) => {
                if es.is_empty() {
                    return write!(f, "{}", u8::from(matches!(self, BoolExpr::And(_))));
                }
                let sep = if matches!(self, BoolExpr::And(_)) { " & " } else { " + " };
                for (i, e) in es.iter().enumerate() {
                    if i > 0 {
                        f.write_str(sep)?;
                    }
                    self.fmt_child(e, f)?;
                }
                Ok(())
            }
            BoolExpr::Xor(a, b) => {
                self.fmt_child(a, f)?;
                f.write_str(" ^ ")?;
                self.fmt_child(b, f)
            }
        }
    }
}

impl FromStr for BoolExpr {
    type Err = ParseExprError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut p = ExprParser { src: s, pos: 0 };
        let e = p.or()?;
        p.skip_ws();
        if p.pos != s.len() {
            return Err(p.error("trailing input"));
        }
        Ok(e)
    }
}

struct ExprParser<'a> {
    src: &'a str,
    pos: usize,
}

impl ExprParser<'_> {
    fn error(&self, message: &str) -> ParseExprError {
        ParseExprError {
            pos: self.pos,
            message: message.into(),
        }
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if !c.is_whitespace() {
                break;
            }
            self.pos += c.len_utf8();
        }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn eat(&mut self, options: &[char]) -> bool {
        self.skip_ws();
        match self.peek() {
            Some(c) if options.contains(&c) => {
                self.pos += c.len_utf8();
                true
            }
            _ => false,
        }
    }

    fn or(&mut self) -> Result<BoolExpr, ParseExprError> {
        let mut terms = vec![self.xor()?];
        while self.eat(&['+', '|']) {
            terms.push(self.xor()?);
        }
        Ok(if terms.len() == 1 {
            terms.pop().unwrap()
        } else {
            BoolExpr::Or(terms)
        })
    }

    fn xor(&mut self) -> Result<BoolExpr, ParseExprError> {
        let mut acc = self.and()?;
        while self.eat(&['^', '⊕']) {
            let rhs = self.and()?;
            acc = BoolExpr::Xor(Box::new(acc), Box::new(rhs));
        }
        Ok(acc)
    }

    fn and(&mut self) -> Result<BoolExpr, ParseExprError> {
        let mut terms = vec![self.not()?];
        while self.eat(&['&', '*', '·']) {
            terms.push(self.not()?);
        }
        Ok(if terms.len() == 1 {
            terms.pop().unwrap()
        } else {
            BoolExpr::And(terms)
        })
    }

    fn not(&mut self) -> Result<BoolExpr, ParseExprError> {
        if self.eat(&['!', '~', '¬']) {
            return Ok(BoolExpr::Not(Box::new(self.not()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<BoolExpr, ParseExprError> {
        self.skip_ws();
        if self.eat(&['(']) {
            let e = self.or()?;
            if !self.eat(&[')']) {
                return Err(self.error("expected `)`"));
            }
            return Ok(e);
        }
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_ascii_alphanumeric() || c == '_' {
                self.pos += 1;
            } else {
                break;
            }
        }
        match &self.src[start..self.pos] {
            "" => Err(self.error("expected operand")),
            "0" => Ok(BoolExpr::Const(false)),
            "1" => Ok(BoolExpr::Const(true)),
            word if word.starts_with(|c: char| c.is_ascii_digit()) => {
                Err(self.error("identifiers cannot start with a digit"))
            }
            word => Ok(BoolExpr::Var(word.to_string())),
        }
    }
}
