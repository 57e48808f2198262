//! Text syntax for polynomials, e.g. `-0.5*x1^2*x2 + 1.0*x3` or `(d1 + 1)*x1*x2`.
//!
//! Whitespace is ignored. Supported: `+ - * ^`, parentheses, decimal or scientific
//! coefficients, and the variable names passed in by the caller. Exponents are
//! non-negative integers.

use super::Polynomial;
use crate::error::PolyError;

pub fn parse_polynomial(text: &str, names: &[String]) -> Result<Polynomial, PolyError> {
    let mut p = Parser {
        chars: text.char_indices().collect(),
        pos: 0,
        names,
        text,
    };
    p.skip_ws();
    if p.pos == p.chars.len() {
        return Err(p.error("empty polynomial"));
    }
    let out = p.expr()?;
    p.skip_ws();
    if p.pos < p.chars.len() {
        return Err(p.error(&format!("unexpected `{}`", p.chars[p.pos].1)));
    }
    Ok(out)
}

struct Parser<'a> {
    chars: Vec<(usize, char)>,
    pos: usize,
    names: &'a [String],
    text: &'a str,
}

impl Parser<'_> {
    fn error(&self, message: &str) -> PolyError {
        PolyError::Parse {
            column: self.pos.min(self.chars.len()) + 1,
            message: message.to_string(),
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).map(|c| c.1)
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Polynomial, PolyError> {
        let mut acc = self.term()?;
        loop {
            if self.eat('+') {
                acc = &acc + &self.term()?;
            } else if self.eat('-') {
                acc = &acc - &self.term()?;
            } else {
                return Ok(acc);
            }
        }
    }

    fn term(&mut self) -> Result<Polynomial, PolyError> {
        let mut acc = self.unary()?;
        while self.eat('*') {
            acc = &acc * &self.unary()?;
        }
        Ok(acc)
    }

    fn unary(&mut self) -> Result<Polynomial, PolyError> {
        if self.eat('-') {
            return Ok(-self.unary()?);
        }
        if self.eat('+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Polynomial, PolyError> {
        let base = self.atom()?;
        if self.eat('^') {
            self.skip_ws();
            let start = self.pos;
            while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                self.pos += 1;
            }
            if start == self.pos {
                return Err(self.error("expected a non-negative integer exponent"));
            }
            let s: String = self.chars[start..self.pos].iter().map(|c| c.1).collect();
            let k: u32 = s.parse().map_err(|_| self.error("exponent out of range"))?;
            return Ok(base.pow(k));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Polynomial, PolyError> {
        self.skip_ws();
        let nvars = self.names.len();
        match self.peek() {
            Some('(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(')') {
                    return Err(self.error("expected `)`"));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => {
                let start = self.pos;
                while self.peek().is_some_and(|c| c.is_ascii_digit() || c == '.') {
                    self.pos += 1;
                }
                if matches!(self.peek(), Some('e' | 'E')) {
                    let save = self.pos;
                    self.pos += 1;
                    if matches!(self.peek(), Some('+' | '-')) {
                        self.pos += 1;
                    }
                    if self.peek().is_some_and(|c| c.is_ascii_digit()) {
                        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                            self.pos += 1;
                        }
                    } else {
                        self.pos = save;
                    }
                }
                let s = self.slice(start, self.pos);
                let v: f64 = s.parse().map_err(|_| {
                    self.pos = start;
                    self.error(&format!("malformed number `{s}`"))
                })?;
                Ok(Polynomial::constant(nvars, v))
            }
            Some(c) if c.is_alphabetic() || c == '_' => {
                let start = self.pos;
                while self.peek().is_some_and(|c| c.is_alphanumeric() || c == '_') {
                    self.pos += 1;
                }
                let name = self.slice(start, self.pos);
                match self.names.iter().position(|n| *n == name) {
                    Some(i) => Ok(Polynomial::var(nvars, i)),
                    None => {
                        self.pos = start;
                        Err(self.error(&format!("unknown variable `{name}`")))
                    }
                }
            }
            Some(c) => Err(self.error(&format!("unexpected `{c}`"))),
            None => Err(self.error("unexpected end of input")),
        }
    }

    fn slice(&self, start: usize, end: usize) -> String {
        let a = self.chars[start].0;
        let b = self.chars.get(end).map(|c| c.0).unwrap_or(self.text.len());
        self.text[a..b].to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names() -> Vec<String> {
        ["x1", "x2", "d1"].iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn parses_predator_prey_map() {
        let n = names();
        let f2 = parse_polynomial("-0.5*x2 + (d1+1)*x1*x2", &n).unwrap();
        let x = Polynomial::var(3, 0);
        let y = Polynomial::var(3, 1);
        let d = Polynomial::var(3, 2);
        let want = y.scale(-0.5) + &(&d + &Polynomial::one(3)) * &(&x * &y);
        assert_eq!(f2, want);
    }

    #[test]
    fn scientific_and_whitespace() {
        let n = names();
        let p = parse_polynomial("  1e2 * x1 ^ 2+1.5E-1*x2", &n).unwrap();
        assert_eq!(p.eval(&[1.0, 2.0, 0.0]), 100.0 + 0.3);
        let q = parse_polynomial("-0.5*x1^2*x2 + 1.0*d1", &n).unwrap();
        assert_eq!(q.eval(&[2.0, 1.0, 3.0]), -2.0 + 3.0);
    }

    #[test]
    fn errors_carry_column() {
        let n = names();
        match parse_polynomial("x1 + y", &n) {
            Err(PolyError::Parse { column, .. }) => assert_eq!(column, 6),
            other => panic!("{other:?}"),
        }
        assert!(parse_polynomial("x1 +", &n).is_err());
        assert!(parse_polynomial("(x1", &n).is_err());
        assert!(parse_polynomial("x1^", &n).is_err());
        assert!(parse_polynomial("", &n).is_err());
    }
}
