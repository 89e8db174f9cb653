//! Arithmetic formulas over the perturbable base fields of a flow.
//!
//! Dataset specs declare derived features (bytes per second, packets per
//! second, ...) as small expressions over `duration`, `tot_bytes` and
//! `tot_packets`. The grammar is `+ - * /`, unary minus, parentheses,
//! numeric literals and those three identifiers. Division by zero evaluates
//! to 0, matching how flow exporters report rates for zero-duration flows.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::BaseFields;

#[derive(Debug, Error, PartialEq)]
pub enum ExprError {
    #[error("unknown identifier `{0}` (expected duration, tot_bytes or tot_packets)")]
    UnknownIdent(String),
    #[error("unexpected character `{0}` in formula")]
    UnexpectedChar(char),
    #[error("malformed number `{0}`")]
    BadNumber(String),
    #[error("unexpected end of formula")]
    UnexpectedEnd,
    #[error("expected `)` but found {0}")]
    UnbalancedParen(String),
    #[error("trailing input after expression: `{0}`")]
    TrailingInput(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BaseVar {
    Duration,
    TotBytes,
    TotPackets,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Expr {
    Num(f64),
    Var(BaseVar),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr, ExprError> {
        let tokens = lex(src)?;
        let mut p = Parser { tokens, pos: 0 };
        let e = p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(ExprError::TrailingInput(format!("{:?}", p.tokens[p.pos])));
        }
        Ok(e)
    }

    /// Whether evaluating this formula reads `var`.
    pub fn mentions(&self, var: BaseVar) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::Var(v) => *v == var,
            Expr::Neg(e) => e.mentions(var),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.mentions(var) || b.mentions(var)
            }
        }
    }

    pub fn eval(&self, base: &BaseFields) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Var(BaseVar::Duration) => base.duration,
            Expr::Var(BaseVar::TotBytes) => base.tot_bytes as f64,
            Expr::Var(BaseVar::TotPackets) => base.tot_packets as f64,
            Expr::Neg(e) => -e.eval(base),
            Expr::Add(a, b) => a.eval(base) + b.eval(base),
            Expr::Sub(a, b) => a.eval(base) - b.eval(base),
            Expr::Mul(a, b) => a.eval(base) * b.eval(base),
            Expr::Div(a, b) => {
                let d = b.eval(base);
                if d == 0.0 {
                    0.0
                } else {
                    a.eval(base) / d
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Var(BaseVar),
    Plus,
    Minus,
    Star,
    Slash,
    LParen,
    RParen,
}

fn lex(src: &str) -> Result<Vec<Token>, ExprError> {
    let mut out = Vec::new();
    let chars: Vec<char> = src.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            ' ' | '\t' => i += 1,
            '+' => {
                out.push(Token::Plus);
                i += 1;
            }
            '-' => {
                out.push(Token::Minus);
                i += 1;
            }
            '*' => {
                out.push(Token::Star);
                i += 1;
            }
            '/' => {
                out.push(Token::Slash);
                i += 1;
            }
            '(' => {
                out.push(Token::LParen);
                i += 1;
            }
            ')' => {
                out.push(Token::RParen);
                i += 1;
            }
            c if c.is_ascii_digit() || c == '.' => {
                let start = i;
                while i < chars.len()
                    && (chars[i].is_ascii_digit()
                        || chars[i] == '.'
                        || chars[i] == 'e'
                        || chars[i] == 'E'
                        || ((chars[i] == '+' || chars[i] == '-')
                            && matches!(chars[i - 1], 'e' | 'E')))
                {
                    i += 1;
                }
                let text: String = chars[start..i].iter().collect();
                let v = text.parse::<f64>().map_err(|_| ExprError::BadNumber(text))?;
                out.push(Token::Num(v));
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                let name: String = chars[start..i].iter().collect();
                let var = match name.as_str() {
                    "duration" => BaseVar::Duration,
                    "tot_bytes" => BaseVar::TotBytes,
                    "tot_packets" => BaseVar::TotPackets,
                    _ => return Err(ExprError::UnknownIdent(name)),
                };
                out.push(Token::Var(var));
            }
            c => return Err(ExprError::UnexpectedChar(c)),
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Result<Token, ExprError> {
        let t = self.tokens.get(self.pos).cloned().ok_or(ExprError::UnexpectedEnd)?;
        self.pos += 1;
        Ok(t)
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        while let Some(op) = self.peek() {
            match op {
                Token::Plus => {
                    self.pos += 1;
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Token::Minus => {
                    self.pos += 1;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => break,
            }
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.factor()?;
        while let Some(op) = self.peek() {
            match op {
                Token::Star => {
                    self.pos += 1;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.factor()?));
                }
                Token::Slash => {
                    self.pos += 1;
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.factor()?));
                }
                _ => break,
            }
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Expr, ExprError> {
        match self.next()? {
            Token::Num(v) => Ok(Expr::Num(v)),
            Token::Var(v) => Ok(Expr::Var(v)),
            Token::Minus => Ok(Expr::Neg(Box::new(self.factor()?))),
            Token::LParen => {
                let inner = self.expr()?;
                match self.next() {
                    Ok(Token::RParen) => Ok(inner),
                    Ok(t) => Err(ExprError::UnbalancedParen(format!("{t:?}"))),
                    Err(_) => Err(ExprError::UnbalancedParen("end of input".into())),
                }
            }
            t => Err(ExprError::TrailingInput(format!("{t:?}"))),
        }
    }
}

// Serialize formulas as their source text so spec snapshots stay readable.
impl std::fmt::Display for Expr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Var(BaseVar::Duration) => write!(f, "duration"),
            Expr::Var(BaseVar::TotBytes) => write!(f, "tot_bytes"),
            Expr::Var(BaseVar::TotPackets) => write!(f, "tot_packets"),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base(duration: f64, tot_bytes: u64, tot_packets: u64) -> BaseFields {
        BaseFields { duration, tot_bytes, tot_packets }
    }

    #[test]
    fn parses_and_evaluates_rates() {
        let e = Expr::parse("tot_bytes / duration").unwrap();
        assert_eq!(e.eval(&base(2.0, 1000, 10)), 500.0);
        let e = Expr::parse("tot_bytes / tot_packets").unwrap();
        assert_eq!(e.eval(&base(2.0, 1000, 10)), 100.0);
    }

    #[test]
    fn division_by_zero_is_zero() {
        let e = Expr::parse("tot_packets / duration").unwrap();
        assert_eq!(e.eval(&base(0.0, 0, 7)), 0.0);
    }

    #[test]
    fn precedence_and_parens() {
        let e = Expr::parse("1 + 2 * 3").unwrap();
        assert_eq!(e.eval(&base(0.0, 0, 0)), 7.0);
        let e = Expr::parse("(1 + 2) * 3").unwrap();
        assert_eq!(e.eval(&base(0.0, 0, 0)), 9.0);
        let e = Expr::parse("-duration + 1e2").unwrap();
        assert_eq!(e.eval(&base(25.0, 0, 0)), 75.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(Expr::parse("bytes / duration"), Err(ExprError::UnknownIdent("bytes".into())));
        assert!(matches!(Expr::parse("1 +"), Err(ExprError::UnexpectedEnd)));
        assert!(matches!(Expr::parse("(1 + 2"), Err(ExprError::UnbalancedParen(_))));
        assert!(matches!(Expr::parse("1 2"), Err(ExprError::TrailingInput(_))));
        assert!(matches!(Expr::parse("1 & 2"), Err(ExprError::UnexpectedChar('&'))));
    }

    #[test]
    fn display_round_trips_through_parse() {
        let src = "tot_bytes / (duration + 0.5) - 2 * tot_packets";
        let e = Expr::parse(src).unwrap();
        let re = Expr::parse(&e.to_string()).unwrap();
        let b = base(3.5, 4096, 12);
        assert_eq!(e.eval(&b), re.eval(&b));
    }
}
