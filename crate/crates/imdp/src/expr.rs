//! Arithmetic expressions in the action variables `a1..am`.
//!
//! Transition and reward bounds are scalar functions of the action. This
//! module parses them from infix text, evaluates them, and produces exact
//! first derivatives by forward-mode dual-number evaluation.
//!
//! Grammar (whitespace insignificant):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := '-' factor | power
//! power  := atom ('^' factor)?          // right associative
//! atom   := number | 'a'<index> | func '(' expr ')' | '(' expr ')'
//! func   := 'sqrt' | 'exp' | 'log'
//! ```
//!
//! Precedence is `^` over unary `-` over `*`,`/` over `+`,`-`; all binary
//! operators associate left except `^`. Exponents must be constant
//! subexpressions; they are folded to a number at parse time.

use std::fmt;
use thiserror::Error;

/// Errors from parsing or evaluating expressions.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    /// Malformed input text. `position` is a 0-based byte offset; for
    /// unexpected end of input it equals the text length.
    #[error("syntax error at position {position}: {message}")]
    Parse { position: usize, message: String },
    /// Evaluation produced a non-finite value or gradient.
    #[error("domain error in `{node}`: {message}")]
    Domain { node: String, message: String },
    /// Action vector length does not match the expression's dimension.
    #[error("action has {got} components, expected {expected}")]
    ActionDim { expected: usize, got: usize },
}

fn parse_err(position: usize, message: impl Into<String>) -> ExprError {
    ExprError::Parse { position, message: message.into() }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Const(f64),
    /// 0-based variable index; `a1` is `Var(0)`.
    Var(usize),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    /// Base raised to a constant exponent (folded at parse time).
    Pow(Box<Node>, f64),
    Sqrt(Box<Node>),
    Exp(Box<Node>),
    Log(Box<Node>),
}

/// Value and exact gradient of an expression at one action point.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub value: f64,
    /// Partial derivatives with respect to `a1..am`; always length `m`.
    pub gradient: Vec<f64>,
}

/// An immutable parsed expression over `action_dim` action variables.
///
/// Evaluation is pure: equal inputs give bit-identical outputs, and shared
/// read access from many threads is safe.
#[derive(Debug, Clone, PartialEq)]
pub struct Expression {
    root: Node,
    action_dim: usize,
}

impl Expression {
    /// Parses `text` over action variables `a1..a<action_dim>`.
    pub fn parse(text: &str, action_dim: usize) -> Result<Self, ExprError> {
        let mut parser = Parser::new(text, action_dim)?;
        let root = parser.expr()?;
        parser.expect_end()?;
        Ok(Expression { root, action_dim })
    }

    /// A constant expression (used for absent transition entries).
    pub fn constant(value: f64, action_dim: usize) -> Self {
        assert!(value.is_finite(), "constant expression must be finite");
        Expression { root: Node::Const(value), action_dim }
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    /// True if the expression is the literal constant zero.
    pub fn is_const_zero(&self) -> bool {
        matches!(self.root, Node::Const(c) if c == 0.0)
    }

    /// Evaluates the expression value only.
    pub fn value(&self, action: &[f64]) -> Result<f64, ExprError> {
        self.check_dim(action)?;
        value_of(&self.root, action)
    }

    /// Evaluates value and gradient by forward-mode dual numbers.
    pub fn eval(&self, action: &[f64]) -> Result<EvalResult, ExprError> {
        self.check_dim(action)?;
        let dual = dual_of(&self.root, action, self.action_dim)?;
        Ok(EvalResult { value: dual.value, gradient: dual.grad })
    }

    /// Canonical fully parenthesized rendering; `parse(render(e))` rebuilds
    /// an expression that evaluates bit-identically to `e`.
    pub fn render(&self) -> String {
        render_node(&self.root)
    }

    fn check_dim(&self, action: &[f64]) -> Result<(), ExprError> {
        if action.len() != self.action_dim {
            return Err(ExprError::ActionDim { expected: self.action_dim, got: action.len() });
        }
        Ok(())
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

// ---------------------------------------------------------------------------
// evaluation

fn domain_err(node: &Node, message: impl Into<String>) -> ExprError {
    ExprError::Domain { node: render_node(node), message: message.into() }
}

fn check_finite(node: &Node, v: f64) -> Result<f64, ExprError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(domain_err(node, format!("evaluates to {v}")))
    }
}

fn value_of(node: &Node, a: &[f64]) -> Result<f64, ExprError> {
    let v = match node {
        Node::Const(c) => *c,
        Node::Var(i) => a[*i],
        Node::Neg(x) => -value_of(x, a)?,
        Node::Add(l, r) => value_of(l, a)? + value_of(r, a)?,
        Node::Sub(l, r) => value_of(l, a)? - value_of(r, a)?,
        Node::Mul(l, r) => value_of(l, a)? * value_of(r, a)?,
        Node::Div(l, r) => {
            let d = value_of(r, a)?;
            if d == 0.0 {
                return Err(domain_err(node, "division by zero"));
            }
            value_of(l, a)? / d
        }
        Node::Pow(b, p) => pow_value(node, value_of(b, a)?, *p)?,
        Node::Sqrt(x) => {
            let v = value_of(x, a)?;
            if v < 0.0 {
                return Err(domain_err(node, format!("square root of negative value {v}")));
            }
            v.sqrt()
        }
        Node::Exp(x) => value_of(x, a)?.exp(),
        Node::Log(x) => {
            let v = value_of(x, a)?;
            if v <= 0.0 {
                return Err(domain_err(node, format!("logarithm of non-positive value {v}")));
            }
            v.ln()
        }
    };
    check_finite(node, v)
}

fn pow_value(node: &Node, base: f64, exp: f64) -> Result<f64, ExprError> {
    let integral = exp.fract() == 0.0;
    if base < 0.0 && !integral {
        return Err(domain_err(node, format!("negative base {base} with non-integer exponent {exp}")));
    }
    if base == 0.0 && exp < 0.0 {
        return Err(domain_err(node, "zero base with negative exponent"));
    }
    Ok(base.powf(exp))
}

struct Dual {
    value: f64,
    grad: Vec<f64>,
}

fn dual_of(node: &Node, a: &[f64], m: usize) -> Result<Dual, ExprError> {
    let out = match node {
        Node::Const(c) => Dual { value: *c, grad: vec![0.0; m] },
        Node::Var(i) => {
            let mut grad = vec![0.0; m];
            grad[*i] = 1.0;
            Dual { value: a[*i], grad }
        }
        Node::Neg(x) => {
            let mut d = dual_of(x, a, m)?;
            d.value = -d.value;
            for g in &mut d.grad {
                *g = -*g;
            }
            d
        }
        Node::Add(l, r) => {
            let mut l = dual_of(l, a, m)?;
            let r = dual_of(r, a, m)?;
            l.value += r.value;
            for (g, h) in l.grad.iter_mut().zip(&r.grad) {
                *g += h;
            }
            l
        }
        Node::Sub(l, r) => {
            let mut l = dual_of(l, a, m)?;
            let r = dual_of(r, a, m)?;
            l.value -= r.value;
            for (g, h) in l.grad.iter_mut().zip(&r.grad) {
                *g -= h;
            }
            l
        }
        Node::Mul(l, r) => {
            let l = dual_of(l, a, m)?;
            let r = dual_of(r, a, m)?;
            let grad = l
                .grad
                .iter()
                .zip(&r.grad)
                .map(|(gl, gr)| gl * r.value + l.value * gr)
                .collect();
            Dual { value: l.value * r.value, grad }
        }
        Node::Div(l, r) => {
            let l = dual_of(l, a, m)?;
            let r = dual_of(r, a, m)?;
            if r.value == 0.0 {
                return Err(domain_err(node, "division by zero"));
            }
            let grad = l
                .grad
                .iter()
                .zip(&r.grad)
                .map(|(gl, gr)| (gl * r.value - l.value * gr) / (r.value * r.value))
                .collect();
            Dual { value: l.value / r.value, grad }
        }
        Node::Pow(b, p) => {
            let b = dual_of(b, a, m)?;
            let value = pow_value(node, b.value, *p)?;
            // d/dx x^p = p x^(p-1); for p = 0 the expression is constant.
            let slope = if *p == 0.0 { 0.0 } else { p * pow_value(node, b.value, p - 1.0)? };
            let grad = b.grad.iter().map(|g| slope * g).collect();
            Dual { value, grad }
        }
        Node::Sqrt(x) => {
            let x = dual_of(x, a, m)?;
            if x.value < 0.0 {
                return Err(domain_err(node, format!("square root of negative value {}", x.value)));
            }
            let root = x.value.sqrt();
            let grad = x.grad.iter().map(|g| g / (2.0 * root)).collect();
            Dual { value: root, grad }
        }
        Node::Exp(x) => {
            let x = dual_of(x, a, m)?;
            let e = x.value.exp();
            let grad = x.grad.iter().map(|g| g * e).collect();
            Dual { value: e, grad }
        }
        Node::Log(x) => {
            let x = dual_of(x, a, m)?;
            if x.value <= 0.0 {
                return Err(domain_err(node, format!("logarithm of non-positive value {}", x.value)));
            }
            let grad = x.grad.iter().map(|g| g / x.value).collect();
            Dual { value: x.value.ln(), grad }
        }
    };
    check_finite(node, out.value)?;
    for g in &out.grad {
        if !g.is_finite() {
            return Err(domain_err(node, format!("derivative evaluates to {g}")));
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// rendering

fn render_node(node: &Node) -> String {
    match node {
        Node::Const(c) => format!("{c}"),
        Node::Var(i) => format!("a{}", i + 1),
        Node::Neg(x) => format!("(-{})", render_node(x)),
        Node::Add(l, r) => format!("({} + {})", render_node(l), render_node(r)),
        Node::Sub(l, r) => format!("({} - {})", render_node(l), render_node(r)),
        Node::Mul(l, r) => format!("({} * {})", render_node(l), render_node(r)),
        Node::Div(l, r) => format!("({} / {})", render_node(l), render_node(r)),
        Node::Pow(b, p) => {
            if *p < 0.0 {
                format!("({}^(-{}))", render_node(b), -p)
            } else {
                format!("({}^{})", render_node(b), p)
            }
        }
        Node::Sqrt(x) => format!("sqrt({})", render_node(x)),
        Node::Exp(x) => format!("exp({})", render_node(x)),
        Node::Log(x) => format!("log({})", render_node(x)),
    }
}

// ---------------------------------------------------------------------------
// lexer / parser

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    End,
}

fn lex(text: &str) -> Result<Vec<(Token, usize)>, ExprError> {
    let bytes = text.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        match c {
            b' ' | b'\t' | b'\r' | b'\n' => i += 1,
            b'+' => { tokens.push((Token::Plus, i)); i += 1; }
            b'-' => { tokens.push((Token::Minus, i)); i += 1; }
            b'*' => { tokens.push((Token::Star, i)); i += 1; }
            b'/' => { tokens.push((Token::Slash, i)); i += 1; }
            b'^' => { tokens.push((Token::Caret, i)); i += 1; }
            b'(' => { tokens.push((Token::LParen, i)); i += 1; }
            b')' => { tokens.push((Token::RParen, i)); i += 1; }
            b'0'..=b'9' | b'.' => {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                if i < bytes.len() && bytes[i] == b'.' {
                    i += 1;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        i = j;
                        while i < bytes.len() && bytes[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let lit = &text[start..i];
                let value: f64 = lit
                    .parse()
                    .map_err(|_| parse_err(start, format!("malformed number `{lit}`")))?;
                tokens.push((Token::Num(value), start));
            }
            b'a'..=b'z' | b'A'..=b'Z' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                tokens.push((Token::Ident(text[start..i].to_string()), start));
            }
            _ => {
                return Err(parse_err(i, format!("unexpected character `{}`", text[i..].chars().next().unwrap())));
            }
        }
    }
    tokens.push((Token::End, text.len()));
    Ok(tokens)
}

struct Parser {
    tokens: Vec<(Token, usize)>,
    pos: usize,
    action_dim: usize,
}

impl Parser {
    fn new(text: &str, action_dim: usize) -> Result<Self, ExprError> {
        Ok(Parser { tokens: lex(text)?, pos: 0, action_dim })
    }

    fn peek(&self) -> &Token {
        &self.tokens[self.pos].0
    }

    fn here(&self) -> usize {
        self.tokens[self.pos].1
    }

    fn advance(&mut self) -> Token {
        let t = self.tokens[self.pos].0.clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn expect_end(&mut self) -> Result<(), ExprError> {
        if *self.peek() != Token::End {
            return Err(parse_err(self.here(), "unexpected trailing input"));
        }
        Ok(())
    }

    fn expr(&mut self) -> Result<Node, ExprError> {
        let mut node = self.term()?;
        loop {
            match self.peek() {
                Token::Plus => {
                    self.advance();
                    node = Node::Add(Box::new(node), Box::new(self.term()?));
                }
                Token::Minus => {
                    self.advance();
                    node = Node::Sub(Box::new(node), Box::new(self.term()?));
                }
                _ => return Ok(node),
            }
        }
    }

    fn term(&mut self) -> Result<Node, ExprError> {
        let mut node = self.factor()?;
        loop {
            match self.peek() {
                Token::Star => {
                    self.advance();
                    node = Node::Mul(Box::new(node), Box::new(self.factor()?));
                }
                Token::Slash => {
                    self.advance();
                    node = Node::Div(Box::new(node), Box::new(self.factor()?));
                }
                _ => return Ok(node),
            }
        }
    }

    fn factor(&mut self) -> Result<Node, ExprError> {
        if *self.peek() == Token::Minus {
            self.advance();
            return Ok(Node::Neg(Box::new(self.factor()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node, ExprError> {
        let base = self.atom()?;
        if *self.peek() == Token::Caret {
            let caret_pos = self.here();
            self.advance();
            let exp_node = self.factor()?;
            if contains_var(&exp_node) {
                return Err(parse_err(caret_pos, "variable exponent (exponents must be constant)"));
            }
            let exp = value_of(&exp_node, &[])
                .map_err(|_| parse_err(caret_pos, "exponent does not evaluate to a finite constant"))?;
            return Ok(Node::Pow(Box::new(base), exp));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node, ExprError> {
        let pos = self.here();
        match self.advance() {
            Token::Num(v) => Ok(Node::Const(v)),
            Token::LParen => {
                let inner = self.expr()?;
                if self.advance() != Token::RParen {
                    return Err(parse_err(self.tokens[self.pos - 1].1, "expected `)`"));
                }
                Ok(inner)
            }
            Token::Ident(name) => match name.as_str() {
                "sqrt" | "exp" | "log" => {
                    if self.advance() != Token::LParen {
                        return Err(parse_err(self.tokens[self.pos - 1].1, format!("expected `(` after `{name}`")));
                    }
                    let arg = Box::new(self.expr()?);
                    if self.advance() != Token::RParen {
                        return Err(parse_err(self.tokens[self.pos - 1].1, "expected `)`"));
                    }
                    Ok(match name.as_str() {
                        "sqrt" => Node::Sqrt(arg),
                        "exp" => Node::Exp(arg),
                        _ => Node::Log(arg),
                    })
                }
                _ => self.variable(&name, pos),
            },
            Token::End => Err(parse_err(pos, "unexpected end of input")),
            other => Err(parse_err(pos, format!("unexpected token `{}`", token_text(&other)))),
        }
    }

    fn variable(&self, name: &str, pos: usize) -> Result<Node, ExprError> {
        let digits = name.strip_prefix('a').filter(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()));
        let Some(digits) = digits else {
            return Err(parse_err(pos, format!("unknown identifier `{name}`")));
        };
        let index: usize = digits
            .parse()
            .map_err(|_| parse_err(pos, format!("invalid action variable `{name}`")))?;
        if index == 0 {
            return Err(parse_err(pos, format!("invalid action variable `{name}` (indices start at a1)")));
        }
        if index > self.action_dim {
            return Err(parse_err(
                pos,
                format!("action variable `{name}` exceeds action dimension {}", self.action_dim),
            ));
        }
        Ok(Node::Var(index - 1))
    }
}

fn contains_var(node: &Node) -> bool {
    match node {
        Node::Const(_) => false,
        Node::Var(_) => true,
        Node::Neg(x) | Node::Sqrt(x) | Node::Exp(x) | Node::Log(x) => contains_var(x),
        Node::Add(l, r) | Node::Sub(l, r) | Node::Mul(l, r) | Node::Div(l, r) => {
            contains_var(l) || contains_var(r)
        }
        Node::Pow(b, _) => contains_var(b),
    }
}

fn token_text(t: &Token) -> String {
    match t {
        Token::Num(v) => format!("{v}"),
        Token::Ident(s) => s.clone(),
        Token::Plus => "+".into(),
        Token::Minus => "-".into(),
        Token::Star => "*".into(),
        Token::Slash => "/".into(),
        Token::Caret => "^".into(),
        Token::LParen => "(".into(),
        Token::RParen => ")".into(),
        Token::End => "end of input".into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(text: &str, m: usize) -> Expression {
        Expression::parse(text, m).unwrap()
    }

    #[test]
    fn parses_example_bounds() {
        assert_eq!(p("0.5*a1", 1).value(&[0.8]).unwrap(), 0.4);
        let e = p("1 + 4*a1*sqrt(a1) - a1^3", 1);
        assert!((e.value(&[1.0]).unwrap() - 4.0).abs() < 1e-15);
        assert!((e.value(&[0.25]).unwrap() - (1.0 + 4.0 * 0.25 * 0.5 - 0.015625)).abs() < 1e-15);
    }

    #[test]
    fn unbalanced_paren_position() {
        let err = Expression::parse("(a1", 1).unwrap_err();
        match err {
            ExprError::Parse { position, .. } => assert_eq!(position, 3),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn value_and_gradient_of_quartic() {
        let e = p("1+4*a1-a1^4", 1);
        assert_eq!(e.eval(&[1.0]).unwrap().value, 4.0);
        assert_eq!(e.eval(&[0.0]).unwrap().gradient, vec![4.0]);
        // d/da (1 + 4a - a^4) = 4 - 4a^3
        let g = e.eval(&[0.5]).unwrap().gradient[0];
        assert!((g - (4.0 - 4.0 * 0.125)).abs() < 1e-15);
    }

    #[test]
    fn sqrt_of_negative_is_domain_error() {
        let e = p("sqrt(a1)", 1);
        assert!(matches!(e.eval(&[-0.5]), Err(ExprError::Domain { .. })));
        assert!(matches!(e.value(&[-0.5]), Err(ExprError::Domain { .. })));
    }

    #[test]
    fn sqrt_gradient_at_zero_is_domain_error_but_value_is_fine() {
        let e = p("a1*sqrt(a1)", 1);
        assert_eq!(e.value(&[0.0]).unwrap(), 0.0);
        assert!(matches!(e.eval(&[0.0]), Err(ExprError::Domain { .. })));
    }

    #[test]
    fn variable_exponent_rejected() {
        let err = Expression::parse("a1^a1", 1).unwrap_err();
        assert!(err.to_string().contains("variable exponent"), "{err}");
        // constant subexpressions are allowed
        let e = p("a1^(1+1)", 1);
        assert_eq!(e.value(&[3.0]).unwrap(), 9.0);
    }

    #[test]
    fn unknown_identifier_and_bad_index() {
        assert!(Expression::parse("b2", 1).unwrap_err().to_string().contains("unknown identifier"));
        assert!(Expression::parse("a2", 1)
            .unwrap_err()
            .to_string()
            .contains("exceeds action dimension"));
        assert!(Expression::parse("a0", 1).unwrap_err().to_string().contains("indices start"));
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(p("-a1^2", 1).value(&[2.0]).unwrap(), -4.0);
        assert_eq!(p("2^3^2", 1).value(&[0.0]).unwrap(), 512.0);
        assert_eq!(p("1 - 2 - 3", 1).value(&[0.0]).unwrap(), -4.0);
        assert_eq!(p("6/3/2", 1).value(&[0.0]).unwrap(), 1.0);
        assert_eq!(p("2^-1", 1).value(&[0.0]).unwrap(), 0.5);
        assert_eq!(p("1+2*3", 1).value(&[0.0]).unwrap(), 7.0);
    }

    #[test]
    fn division_by_zero() {
        let e = p("1/a1", 1);
        assert!(matches!(e.value(&[0.0]), Err(ExprError::Domain { .. })));
    }

    #[test]
    fn negative_base_with_integer_exponent_ok_noninteger_rejected() {
        assert_eq!(p("a1^3", 1).value(&[-2.0]).unwrap(), -8.0);
        assert!(matches!(p("a1^1.5", 1).value(&[-2.0]), Err(ExprError::Domain { .. })));
    }

    #[test]
    fn log_domain() {
        assert!(matches!(p("log(a1)", 1).value(&[0.0]), Err(ExprError::Domain { .. })));
        assert!((p("log(exp(a1))", 1).value(&[2.5]).unwrap() - 2.5).abs() < 1e-15);
    }

    #[test]
    fn eval_is_pure() {
        let e = p("exp(a1)*log(a2+1)/sqrt(a1+a2)", 2);
        let r1 = e.eval(&[0.7, 1.3]).unwrap();
        let r2 = e.eval(&[0.7, 1.3]).unwrap();
        assert_eq!(r1.value.to_bits(), r2.value.to_bits());
        assert_eq!(r1.gradient[0].to_bits(), r2.gradient[0].to_bits());
        assert_eq!(r1.gradient[1].to_bits(), r2.gradient[1].to_bits());
    }

    #[test]
    fn render_round_trip_bit_identical() {
        let sources = [
            "0.5*a1",
            "1 + 4*a1*sqrt(a1) - a1^3",
            "5 - a1*sqrt(a1)",
            "exp(a1) * log(a2 + 2) - a1/a2",
            "-(a1 + a2)^2 + 3.5e-2",
            "a1^-2 + 2^0.5",
        ];
        for src in sources {
            let e = Expression::parse(src, 2).unwrap();
            let round = Expression::parse(&e.render(), 2).unwrap();
            for k in 0..20 {
                let a = [0.05 + 0.04 * k as f64, 0.1 + 0.03 * k as f64];
                let (x, y) = (e.value(&a), round.value(&a));
                match (x, y) {
                    (Ok(x), Ok(y)) => assert_eq!(x.to_bits(), y.to_bits(), "{src}"),
                    (Err(_), Err(_)) => {}
                    other => panic!("round-trip mismatch for {src}: {other:?}"),
                }
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let sources = [
            "1 + 4*a1*sqrt(a1) - a1^3",
            "5 - a1*sqrt(a1)",
            "exp(a1*a2) + log(1 + a1)",
            "(a1 - a2)^3 / (1 + a1*a1)",
            "sqrt(a1 + a2 + 0.5) * a2^2",
        ];
        let h = 1e-6;
        for src in sources {
            let e = Expression::parse(src, 2).unwrap();
            for k in 0..100 {
                // deterministic interior points
                let a = [0.05 + 0.009 * k as f64, 0.07 + 0.0085 * k as f64];
                let grad = e.eval(&a).unwrap().gradient;
                for dim in 0..2 {
                    let mut hi = a;
                    let mut lo = a;
                    hi[dim] += h;
                    lo[dim] -= h;
                    let fd = (e.value(&hi).unwrap() - e.value(&lo).unwrap()) / (2.0 * h);
                    let denom = grad[dim].abs().max(1.0);
                    assert!(
                        (grad[dim] - fd).abs() / denom <= 1e-5,
                        "{src} at {a:?} dim {dim}: ad={} fd={fd}",
                        grad[dim]
                    );
                }
            }
        }
    }

    #[test]
    fn action_dimension_checked() {
        let e = p("a1+a2", 2);
        assert!(matches!(e.value(&[1.0]), Err(ExprError::ActionDim { expected: 2, got: 1 })));
    }
}
