//! Closed-form scalar expressions over node values.
//!
//! Mechanisms that are not plain linear maps are stored as expression trees:
//! sums, differences, products, integer powers, `exp`, `logistic` and
//! `indicator` (the step function `1{x > 0}`). Variables refer to nodes by
//! index into the full instance vector. Trees evaluate and differentiate
//! recursively; `indicator` carries derivative zero everywhere, including at
//! the kink.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    /// Node value by index into the instance vector.
    Var(usize),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    /// Integer power; negative exponents are rejected by the parser.
    Pow(Box<Expr>, u32),
    Neg(Box<Expr>),
    Exp(Box<Expr>),
    /// 1 / (1 + e^{-x})
    Logistic(Box<Expr>),
    /// 1 if x > 0 else 0.
    Indicator(Box<Expr>),
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Expr {
    pub fn eval(&self, values: &[f64]) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var(i) => values[*i],
            Expr::Add(a, b) => a.eval(values) + b.eval(values),
            Expr::Sub(a, b) => a.eval(values) - b.eval(values),
            Expr::Mul(a, b) => a.eval(values) * b.eval(values),
            Expr::Pow(a, n) => a.eval(values).powi(*n as i32),
            Expr::Neg(a) => -a.eval(values),
            Expr::Exp(a) => a.eval(values).exp(),
            Expr::Logistic(a) => logistic(a.eval(values)),
            Expr::Indicator(a) => {
                if a.eval(values) > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Partial derivative with respect to the node `var`, at `values`.
    pub fn partial(&self, var: usize, values: &[f64]) -> f64 {
        match self {
            Expr::Const(_) => 0.0,
            Expr::Var(i) => {
                if *i == var {
                    1.0
                } else {
                    0.0
                }
            }
            Expr::Add(a, b) => a.partial(var, values) + b.partial(var, values),
            Expr::Sub(a, b) => a.partial(var, values) - b.partial(var, values),
            Expr::Mul(a, b) => {
                a.partial(var, values) * b.eval(values) + a.eval(values) * b.partial(var, values)
            }
            Expr::Pow(a, n) => {
                if *n == 0 {
                    0.0
                } else {
                    (*n as f64) * a.eval(values).powi(*n as i32 - 1) * a.partial(var, values)
                }
            }
            Expr::Neg(a) => -a.partial(var, values),
            Expr::Exp(a) => a.eval(values).exp() * a.partial(var, values),
            Expr::Logistic(a) => {
                let s = logistic(a.eval(values));
                s * (1.0 - s) * a.partial(var, values)
            }
            // Subgradient zero at the kink; zero elsewhere too since the
            // step is flat on both sides.
            Expr::Indicator(_) => 0.0,
        }
    }

    /// Indices of all variables referenced by the expression.
    pub fn vars(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out.sort_unstable();
        out.dedup();
        out
    }

    fn collect_vars(&self, out: &mut Vec<usize>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(i) => out.push(*i),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Expr::Pow(a, _) | Expr::Neg(a) | Expr::Exp(a) | Expr::Logistic(a) | Expr::Indicator(a) => {
                a.collect_vars(out)
            }
        }
    }

    /// Renders the expression with the given variable names.
    pub fn render(&self, names: &[String]) -> String {
        match self {
            Expr::Const(c) => format!("{c}"),
            Expr::Var(i) => names[*i].clone(),
            Expr::Add(a, b) => format!("({} + {})", a.render(names), b.render(names)),
            Expr::Sub(a, b) => format!("({} - {})", a.render(names), b.render(names)),
            Expr::Mul(a, b) => format!("({} * {})", a.render(names), b.render(names)),
            Expr::Pow(a, n) => format!("{}^{}", a.render(names), n),
            Expr::Neg(a) => format!("(-{})", a.render(names)),
            Expr::Exp(a) => format!("exp({})", a.render(names)),
            Expr::Logistic(a) => format!("logistic({})", a.render(names)),
            Expr::Indicator(a) => format!("indicator({})", a.render(names)),
        }
    }

    /// Parses an expression; identifiers are resolved through `resolve`.
    pub fn parse(src: &str, resolve: &dyn Fn(&str) -> Option<usize>) -> Result<Expr> {
        let tokens = tokenize(src)?;
        let mut p = Parser { tokens, pos: 0, resolve };
        let e = p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(Error::ExprParse(format!(
                "trailing input at token {} in {src:?}",
                p.pos
            )));
        }
        Ok(e)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Caret,
    LParen,
    RParen,
}

fn tokenize(src: &str) -> Result<Vec<Tok>> {
    let mut out = Vec::new();
    let chars: Vec<char> = src.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            ' ' | '\t' | '\n' => i += 1,
            '+' => {
                out.push(Tok::Plus);
                i += 1;
            }
            '-' => {
                out.push(Tok::Minus);
                i += 1;
            }
            '*' => {
                out.push(Tok::Star);
                i += 1;
            }
            '^' => {
                out.push(Tok::Caret);
                i += 1;
            }
            '(' => {
                out.push(Tok::LParen);
                i += 1;
            }
            ')' => {
                out.push(Tok::RParen);
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
                            && i > start
                            && (chars[i - 1] == 'e' || chars[i - 1] == 'E')))
                {
                    i += 1;
                }
                let text: String = chars[start..i].iter().collect();
                let v: f64 = text
                    .parse()
                    .map_err(|_| Error::ExprParse(format!("bad number literal {text:?}")))?;
                out.push(Tok::Num(v));
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                out.push(Tok::Ident(chars[start..i].iter().collect()));
            }
            other => return Err(Error::ExprParse(format!("unexpected character {other:?}"))),
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<Tok>,
    pos: usize,
    resolve: &'a dyn Fn(&str) -> Option<usize>,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, t: Tok) -> Result<()> {
        match self.next() {
            Some(got) if got == t => Ok(()),
            got => Err(Error::ExprParse(format!("expected {t:?}, got {got:?}"))),
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.pos += 1;
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(Tok::Minus) => {
                    self.pos += 1;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while matches!(self.peek(), Some(Tok::Star)) {
            self.pos += 1;
            lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        if matches!(self.peek(), Some(Tok::Minus)) {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.primary()?;
        if matches!(self.peek(), Some(Tok::Caret)) {
            self.pos += 1;
            match self.next() {
                Some(Tok::Num(v)) if v >= 0.0 && v.fract() == 0.0 => {
                    Ok(Expr::Pow(Box::new(base), v as u32))
                }
                got => Err(Error::ExprParse(format!(
                    "exponent must be a nonnegative integer, got {got:?}"
                ))),
            }
        } else {
            Ok(base)
        }
    }

    fn primary(&mut self) -> Result<Expr> {
        match self.next() {
            Some(Tok::Num(v)) => Ok(Expr::Const(v)),
            Some(Tok::LParen) => {
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                if matches!(self.peek(), Some(Tok::LParen)) {
                    self.pos += 1;
                    let arg = self.expr()?;
                    self.expect(Tok::RParen)?;
                    match name.as_str() {
                        "exp" => Ok(Expr::Exp(Box::new(arg))),
                        "logistic" => Ok(Expr::Logistic(Box::new(arg))),
                        "indicator" => Ok(Expr::Indicator(Box::new(arg))),
                        other => Err(Error::ExprParse(format!("unknown function {other:?}"))),
                    }
                } else {
                    (self.resolve)(&name)
                        .map(Expr::Var)
                        .ok_or_else(|| Error::ExprParse(format!("unknown variable {name:?}")))
                }
            }
            got => Err(Error::ExprParse(format!("unexpected token {got:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn resolver<'a>(names: &'a [&'a str]) -> impl Fn(&str) -> Option<usize> + 'a {
        move |s: &str| names.iter().position(|n| *n == s)
    }

    #[test]
    fn parses_and_evaluates_polynomials() {
        let names = ["S", "X1"];
        let e = Expr::parse("2*S^2 + 1 - X1*(3 - S)", &resolver(&names)).unwrap();
        // S=2, X1=1 -> 8 + 1 - 1*1 = 8
        assert_relative_eq!(e.eval(&[2.0, 1.0]), 8.0);
    }

    #[test]
    fn unary_minus_binds_looser_than_power() {
        let names = ["x"];
        let e = Expr::parse("-x^2", &resolver(&names)).unwrap();
        assert_relative_eq!(e.eval(&[3.0]), -9.0);
    }

    #[test]
    fn functions_evaluate() {
        let names = ["x"];
        let e = Expr::parse("logistic(x) + indicator(x)*x + exp(0)", &resolver(&names)).unwrap();
        assert_relative_eq!(e.eval(&[0.0]), 0.5 + 0.0 + 1.0);
        assert_relative_eq!(e.eval(&[2.0]), logistic(2.0) + 2.0 + 1.0);
    }

    #[test]
    fn partials_match_finite_differences() {
        let names = ["a", "b"];
        let e = Expr::parse(
            "2*a^3 - a*b + logistic(a - b) + exp(b)*a + indicator(a)*a",
            &resolver(&names),
        )
        .unwrap();
        let at = [0.7, -0.3];
        let h = 1e-6;
        for var in 0..2 {
            let mut hi = at;
            let mut lo = at;
            hi[var] += h;
            lo[var] -= h;
            let fd = (e.eval(&hi) - e.eval(&lo)) / (2.0 * h);
            assert_relative_eq!(e.partial(var, &at), fd, max_relative = 1e-6, epsilon = 1e-8);
        }
    }

    #[test]
    fn indicator_has_zero_derivative_at_kink() {
        let names = ["x"];
        let e = Expr::parse("indicator(x)*x", &resolver(&names)).unwrap();
        // Product rule with indicator' = 0 leaves indicator(x) alone.
        assert_relative_eq!(e.partial(0, &[0.0]), 0.0);
        assert_relative_eq!(e.partial(0, &[1.0]), 1.0);
    }

    #[test]
    fn render_round_trips() {
        let names: Vec<String> = vec!["S".into(), "X1".into()];
        let e = Expr::parse("1 + 0.5*S - X1^2", &|s| {
            names.iter().position(|n| n == s)
        })
        .unwrap();
        let rendered = e.render(&names);
        let back = Expr::parse(&rendered, &|s| names.iter().position(|n| n == s)).unwrap();
        assert_relative_eq!(back.eval(&[1.0, 2.0]), e.eval(&[1.0, 2.0]));
    }

    #[test]
    fn rejects_unknown_symbols() {
        let names = ["x"];
        assert!(Expr::parse("y + 1", &resolver(&names)).is_err());
        assert!(Expr::parse("sin(x)", &resolver(&names)).is_err());
        assert!(Expr::parse("x^-2", &resolver(&names)).is_err());
    }
}
