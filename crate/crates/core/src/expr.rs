//! Closed-form real observables of one variable.
//!
//! Formulas such as `(2 + sin(2*pi*x))/5` are parsed into an [`Expression`]
//! tree that can be evaluated, differentiated symbolically and printed back
//! as infix text. The grammar is deliberately small:
//!
//! ```text
//! sum     := product (('+' | '-') product)*
//! product := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := atom ('^' unary)?          (exponent must not contain x)
//! atom    := number | 'x' | 'pi' | func '(' sum ')' | '(' sum ')'
//! func    := sin | cos | exp | log | abs
//! ```

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("domain error: {0}")]
    Domain(&'static str),
    #[error("cannot differentiate {0}")]
    Unsupported(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Sin,
    Cos,
    Exp,
    Log,
    Abs,
    Neg,
}

impl UnaryOp {
    fn name(self) -> &'static str {
        match self {
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::Exp => "exp",
            UnaryOp::Log => "log",
            UnaryOp::Abs => "abs",
            UnaryOp::Neg => "-",
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => UnaryOp::Sin,
            "cos" => UnaryOp::Cos,
            "exp" => UnaryOp::Exp,
            "log" => UnaryOp::Log,
            "abs" => UnaryOp::Abs,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinaryOp {
    fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => " + ",
            BinaryOp::Sub => " - ",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Pow => "^",
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinaryOp::Add | BinaryOp::Sub => 1,
            BinaryOp::Mul | BinaryOp::Div => 2,
            BinaryOp::Pow => 4,
        }
    }
}

/// One node of an expression tree.
///
/// Constants are finite and nonnegative (a leading minus is a `Neg` node),
/// and the right operand of `Pow` never mentions `X`. Trees built by
/// [`Expression::parse`] and [`Expression::derivative`] respect both rules.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(f64),
    X,
    Pi,
    Unary(UnaryOp, Box<Node>),
    Binary(BinaryOp, Box<Node>, Box<Node>),
}

const NEG_PRECEDENCE: u8 = 3;
const ATOM_PRECEDENCE: u8 = 5;

impl Node {
    fn precedence(&self) -> u8 {
        match self {
            Node::Unary(UnaryOp::Neg, _) => NEG_PRECEDENCE,
            Node::Binary(op, _, _) => op.precedence(),
            _ => ATOM_PRECEDENCE,
        }
    }

    fn mentions_x(&self) -> bool {
        match self {
            Node::X => true,
            Node::Const(_) | Node::Pi => false,
            Node::Unary(_, a) => a.mentions_x(),
            Node::Binary(_, a, b) => a.mentions_x() || b.mentions_x(),
        }
    }

    fn eval(&self, x: f64) -> Result<f64, ExprError> {
        Ok(match self {
            Node::Const(c) => *c,
            Node::X => x,
            Node::Pi => std::f64::consts::PI,
            Node::Unary(op, a) => {
                let a = a.eval(x)?;
                match op {
                    UnaryOp::Sin => a.sin(),
                    UnaryOp::Cos => a.cos(),
                    UnaryOp::Exp => finite(a.exp(), "exp overflow")?,
                    UnaryOp::Log => {
                        if a <= 0.0 || a.is_nan() {
                            return Err(ExprError::Domain("log of a non-positive number"));
                        }
                        a.ln()
                    }
                    UnaryOp::Abs => a.abs(),
                    UnaryOp::Neg => -a,
                }
            }
            Node::Binary(op, a, b) => {
                let a = a.eval(x)?;
                let b = b.eval(x)?;
                match op {
                    BinaryOp::Add => a + b,
                    BinaryOp::Sub => a - b,
                    BinaryOp::Mul => a * b,
                    BinaryOp::Div => {
                        if b == 0.0 {
                            return Err(ExprError::Domain("division by zero"));
                        }
                        finite(a / b, "division overflow")?
                    }
                    BinaryOp::Pow => finite(pow(a, b), "power undefined")?,
                }
            }
        })
    }

    fn derivative(&self) -> Result<Node, ExprError> {
        Ok(match self {
            Node::Const(_) | Node::Pi => Node::Const(0.0),
            Node::X => Node::Const(1.0),
            Node::Unary(op, a) => {
                let da = a.derivative()?;
                let outer = match op {
                    UnaryOp::Neg => return Ok(neg(da)),
                    UnaryOp::Sin => unary(UnaryOp::Cos, (**a).clone()),
                    UnaryOp::Cos => neg(unary(UnaryOp::Sin, (**a).clone())),
                    UnaryOp::Exp => self.clone(),
                    UnaryOp::Log => return Ok(div(da, (**a).clone())),
                    UnaryOp::Abs => return Err(ExprError::Unsupported("abs")),
                };
                mul(outer, da)
            }
            Node::Binary(op, a, b) => match op {
                BinaryOp::Add => add(a.derivative()?, b.derivative()?),
                BinaryOp::Sub => sub(a.derivative()?, b.derivative()?),
                BinaryOp::Mul => add(
                    mul(a.derivative()?, (**b).clone()),
                    mul((**a).clone(), b.derivative()?),
                ),
                BinaryOp::Div => div(
                    sub(
                        mul(a.derivative()?, (**b).clone()),
                        mul((**a).clone(), b.derivative()?),
                    ),
                    pow_node((**b).clone(), Node::Const(2.0)),
                ),
                BinaryOp::Pow => {
                    // exponent is constant by construction
                    let lowered = sub((**b).clone(), Node::Const(1.0));
                    mul(
                        mul((**b).clone(), pow_node((**a).clone(), lowered)),
                        a.derivative()?,
                    )
                }
            },
        })
    }

    fn write(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Const(c) => write!(out, "{c}"),
            Node::X => out.write_str("x"),
            Node::Pi => out.write_str("pi"),
            Node::Unary(UnaryOp::Neg, a) => {
                out.write_str("-")?;
                a.write_wrapped(out, a.precedence() < NEG_PRECEDENCE)
            }
            Node::Unary(op, a) => {
                write!(out, "{}(", op.name())?;
                a.write(out)?;
                out.write_str(")")
            }
            Node::Binary(op, a, b) => {
                let p = op.precedence();
                let (left_paren, right_paren) = if *op == BinaryOp::Pow {
                    (a.precedence() <= p, b.precedence() < NEG_PRECEDENCE)
                } else {
                    (a.precedence() < p, b.precedence() <= p)
                };
                a.write_wrapped(out, left_paren)?;
                out.write_str(op.symbol())?;
                b.write_wrapped(out, right_paren)
            }
        }
    }

    fn write_wrapped(&self, out: &mut fmt::Formatter<'_>, paren: bool) -> fmt::Result {
        if paren {
            out.write_str("(")?;
            self.write(out)?;
            out.write_str(")")
        } else {
            self.write(out)
        }
    }
}

fn finite(v: f64, what: &'static str) -> Result<f64, ExprError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ExprError::Domain(what))
    }
}

fn pow(base: f64, exponent: f64) -> f64 {
    if exponent.fract() == 0.0 && exponent.abs() <= i32::MAX as f64 {
        base.powi(exponent as i32)
    } else {
        base.powf(exponent)
    }
}

fn constant(v: f64) -> Node {
    if v < 0.0 {
        Node::Unary(UnaryOp::Neg, Box::new(Node::Const(-v)))
    } else {
        Node::Const(v)
    }
}

fn as_const(n: &Node) -> Option<f64> {
    match n {
        Node::Const(c) => Some(*c),
        Node::Unary(UnaryOp::Neg, a) => match **a {
            Node::Const(c) => Some(-c),
            _ => None,
        },
        _ => None,
    }
}

// Constructors below fold only trivial cases (0, 1, constant pairs) so that
// derived trees stay small; they are not a simplifier.

fn unary(op: UnaryOp, a: Node) -> Node {
    Node::Unary(op, Box::new(a))
}

fn neg(a: Node) -> Node {
    match as_const(&a) {
        Some(c) => constant(-c),
        None => unary(UnaryOp::Neg, a),
    }
}

fn add(a: Node, b: Node) -> Node {
    match (as_const(&a), as_const(&b)) {
        (Some(x), Some(y)) => constant(x + y),
        (Some(0.0), _) => b,
        (_, Some(0.0)) => a,
        _ => Node::Binary(BinaryOp::Add, Box::new(a), Box::new(b)),
    }
}

fn sub(a: Node, b: Node) -> Node {
    match (as_const(&a), as_const(&b)) {
        (Some(x), Some(y)) => constant(x - y),
        (Some(0.0), _) => neg(b),
        (_, Some(0.0)) => a,
        _ => Node::Binary(BinaryOp::Sub, Box::new(a), Box::new(b)),
    }
}

fn mul(a: Node, b: Node) -> Node {
    match (as_const(&a), as_const(&b)) {
        (Some(x), Some(y)) => constant(x * y),
        (Some(0.0), _) | (_, Some(0.0)) => Node::Const(0.0),
        (Some(1.0), _) => b,
        (_, Some(1.0)) => a,
        _ => Node::Binary(BinaryOp::Mul, Box::new(a), Box::new(b)),
    }
}

fn div(a: Node, b: Node) -> Node {
    match (as_const(&a), as_const(&b)) {
        (Some(0.0), _) => Node::Const(0.0),
        (_, Some(1.0)) => a,
        _ => Node::Binary(BinaryOp::Div, Box::new(a), Box::new(b)),
    }
}

fn pow_node(a: Node, b: Node) -> Node {
    match as_const(&b) {
        Some(1.0) => a,
        Some(0.0) => Node::Const(1.0),
        _ => Node::Binary(BinaryOp::Pow, Box::new(a), Box::new(b)),
    }
}

/// A parsed formula in the single variable `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct Expression {
    root: Node,
}

impl Expression {
    pub fn parse(text: &str) -> Result<Self, ExprError> {
        let mut p = Parser { src: text, pos: 0 };
        p.skip_ws();
        if p.at_end() {
            return Err(ExprError::Syntax {
                offset: 0,
                message: "empty formula".into(),
            });
        }
        let root = p.sum()?;
        p.skip_ws();
        if !p.at_end() {
            return Err(p.error("unexpected trailing input"));
        }
        Ok(Expression { root })
    }

    pub fn constant(value: f64) -> Self {
        Expression {
            root: constant(value),
        }
    }

    pub fn from_node(root: Node) -> Self {
        Expression { root }
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn eval(&self, x: f64) -> Result<f64, ExprError> {
        self.root.eval(x)
    }

    /// Symbolic derivative with respect to `x`. Fails on `abs`.
    pub fn derivative(&self) -> Result<Expression, ExprError> {
        Ok(Expression {
            root: self.root.derivative()?,
        })
    }

    /// True when the formula does not depend on `x`.
    pub fn is_constant(&self) -> bool {
        !self.root.mentions_x()
    }

    /// `log(self)` as a new expression.
    pub fn ln(&self) -> Expression {
        Expression {
            root: unary(UnaryOp::Log, self.root.clone()),
        }
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.root.write(f)
    }
}

impl FromStr for Expression {
    type Err = ExprError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Expression::parse(s)
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, message: &str) -> ExprError {
        ExprError::Syntax {
            offset: self.pos,
            message: message.to_string(),
        }
    }

    fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    fn peek(&self) -> Option<u8> {
        self.src.as_bytes().get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(c) if c.is_ascii_whitespace()) {
            self.pos += 1;
        }
    }

    fn eat(&mut self, c: u8) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn sum(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.product()?;
        loop {
            let op = if self.eat(b'+') {
                BinaryOp::Add
            } else if self.eat(b'-') {
                BinaryOp::Sub
            } else {
                return Ok(lhs);
            };
            let rhs = self.product()?;
            lhs = Node::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn product(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.eat(b'*') {
                BinaryOp::Mul
            } else if self.eat(b'/') {
                BinaryOp::Div
            } else {
                return Ok(lhs);
            };
            let rhs = self.unary()?;
            lhs = Node::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Node, ExprError> {
        if self.eat(b'-') {
            Ok(unary(UnaryOp::Neg, self.unary()?))
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Node, ExprError> {
        let base = self.atom()?;
        self.skip_ws();
        let caret = self.pos;
        if !self.eat(b'^') {
            return Ok(base);
        }
        let exponent = self.unary()?;
        if exponent.mentions_x() {
            return Err(ExprError::Syntax {
                offset: caret,
                message: "exponent must be constant".into(),
            });
        }
        Ok(Node::Binary(
            BinaryOp::Pow,
            Box::new(base),
            Box::new(exponent),
        ))
    }

    fn atom(&mut self) -> Result<Node, ExprError> {
        self.skip_ws();
        let start = self.pos;
        match self.peek() {
            None => Err(self.error("unexpected end of formula")),
            Some(b'(') => {
                self.pos += 1;
                let inner = self.sum()?;
                if !self.eat(b')') {
                    return Err(self.error("expected `)`"));
                }
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => {
                while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric() || c == b'_') {
                    self.pos += 1;
                }
                let name = &self.src[start..self.pos];
                match name {
                    "x" => Ok(Node::X),
                    "pi" => Ok(Node::Pi),
                    _ => {
                        let Some(op) = UnaryOp::from_name(name) else {
                            return Err(ExprError::UnknownIdentifier {
                                name: name.to_string(),
                                offset: start,
                            });
                        };
                        if !self.eat(b'(') {
                            return Err(self.error("expected `(` after function name"));
                        }
                        let arg = self.sum()?;
                        if !self.eat(b')') {
                            return Err(self.error("expected `)`"));
                        }
                        Ok(unary(op, arg))
                    }
                }
            }
            Some(_) => Err(self.error("unexpected character")),
        }
    }

    fn number(&mut self) -> Result<Node, ExprError> {
        let start = self.pos;
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len()
            && (bytes[self.pos].is_ascii_digit() || bytes[self.pos] == b'.')
        {
            self.pos += 1;
        }
        if self.pos < bytes.len() && (bytes[self.pos] == b'e' || bytes[self.pos] == b'E') {
            let mut look = self.pos + 1;
            if look < bytes.len() && (bytes[look] == b'+' || bytes[look] == b'-') {
                look += 1;
            }
            if look < bytes.len() && bytes[look].is_ascii_digit() {
                self.pos = look;
                while self.pos < bytes.len() && bytes[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
            }
        }
        let text = &self.src[start..self.pos];
        match text.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Node::Const(v)),
            _ => Err(ExprError::Syntax {
                offset: start,
                message: format!("malformed number `{text}`"),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn e(s: &str) -> Expression {
        Expression::parse(s).unwrap()
    }

    #[test]
    fn paper_f_formula() {
        let f = e("(2 + sin(2*pi*x))/5");
        let expected = (2.0 + 3f64.sqrt() / 2.0) / 5.0;
        assert!((f.eval(1.0 / 3.0).unwrap() - expected).abs() < 1e-15);
        assert!((f.eval(1.0 / 3.0).unwrap() - 0.5732050808).abs() < 1e-10);
    }

    #[test]
    fn identity_and_cosine() {
        assert_eq!(e("x").eval(0.25).unwrap(), 0.25);
        assert!((e("4/5 + cos(2*pi*x)/4").eval(0.0).unwrap() - 1.05).abs() < 1e-15);
        assert!((e("4/5 + cos(2*pi*x)/4").eval(1.0 / 3.0).unwrap() - 0.675).abs() < 1e-15);
    }

    #[test]
    fn precedence() {
        assert_eq!(e("-2^2").eval(0.0).unwrap(), -4.0);
        assert_eq!(e("2^3^2").eval(0.0).unwrap(), 512.0);
        assert_eq!(e("8 - 3 - 2").eval(0.0).unwrap(), 3.0);
        assert_eq!(e("8/4/2").eval(0.0).unwrap(), 1.0);
        assert_eq!(e("1 + 2*3").eval(0.0).unwrap(), 7.0);
        assert_eq!(e("2^-1").eval(0.0).unwrap(), 0.5);
        assert_eq!(e("  x*  x ").eval(3.0).unwrap(), 9.0);
        assert_eq!(e("1e-3*x").eval(2.0).unwrap(), 2e-3);
    }

    #[test]
    fn errors() {
        assert!(matches!(e("log(x)").eval(0.0), Err(ExprError::Domain(_))));
        assert!(matches!(e("1/x").eval(0.0), Err(ExprError::Domain(_))));
        assert!(matches!(
            Expression::parse("tan(x)"),
            Err(ExprError::UnknownIdentifier { offset: 0, .. })
        ));
        assert!(matches!(
            Expression::parse("2*y"),
            Err(ExprError::UnknownIdentifier { offset: 2, .. })
        ));
        assert!(matches!(
            Expression::parse("(1 + x"),
            Err(ExprError::Syntax { offset: 6, .. })
        ));
        assert!(matches!(
            Expression::parse("x^x"),
            Err(ExprError::Syntax { offset: 1, .. })
        ));
        assert!(matches!(
            Expression::parse("   "),
            Err(ExprError::Syntax { .. })
        ));
        assert!(matches!(
            Expression::parse("1 +* 2"),
            Err(ExprError::Syntax { .. })
        ));
    }

    #[test]
    fn derivatives() {
        assert_eq!(e("3").derivative().unwrap().to_string(), "0");
        let d = e("2*x").derivative().unwrap();
        for i in 0..10 {
            assert_eq!(d.eval(i as f64 / 10.0).unwrap(), 2.0);
        }
        let d = e("sin(2*pi*x)").derivative().unwrap();
        let tau = 2.0 * std::f64::consts::PI;
        for i in 0..64 {
            let x = i as f64 / 64.0;
            let want = tau * (tau * x).cos();
            assert!((d.eval(x).unwrap() - want).abs() < 1e-12);
        }
        assert!(matches!(
            e("abs(x)").derivative(),
            Err(ExprError::Unsupported("abs"))
        ));
    }

    fn finite_difference(ex: &Expression, x: f64) -> Option<f64> {
        let h = 1e-6;
        Some((ex.eval(x + h).ok()? - ex.eval(x - h).ok()?) / (2.0 * h))
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let formulas = [
            "(2 + sin(2*pi*x))/5",
            "4/5 + cos(2*pi*x)/4",
            "exp(x^2) - log(1 + x)",
            "x^3/(1 + x^2)",
            "3*x + 0.1*sin(3*pi*x)",
            "(1 + x)^-0.5",
        ];
        for f in formulas {
            let ex = e(f);
            let d = ex.derivative().unwrap();
            for i in 1..64 {
                let x = i as f64 / 64.0;
                let fd = finite_difference(&ex, x).unwrap();
                let exact = d.eval(x).unwrap();
                assert!(
                    (fd - exact).abs() <= 1e-5 * exact.abs().max(1.0),
                    "{f} at {x}: {fd} vs {exact}"
                );
            }
        }
    }

    fn arb_node() -> impl Strategy<Value = Node> {
        let leaf = prop_oneof![
            (0.0f64..10.0).prop_map(Node::Const),
            Just(Node::X),
            Just(Node::Pi),
        ];
        leaf.prop_recursive(5, 48, 2, |inner| {
            let exponent = prop_oneof![
                (0u8..4).prop_map(|k| Node::Const(k as f64)),
                (0u8..4).prop_map(|k| unary(UnaryOp::Neg, Node::Const(k as f64))),
            ];
            prop_oneof![
                (
                    prop_oneof![
                        Just(UnaryOp::Sin),
                        Just(UnaryOp::Cos),
                        Just(UnaryOp::Neg),
                        Just(UnaryOp::Abs),
                    ],
                    inner.clone()
                )
                    .prop_map(|(op, a)| unary(op, a)),
                (
                    prop_oneof![
                        Just(BinaryOp::Add),
                        Just(BinaryOp::Sub),
                        Just(BinaryOp::Mul),
                        Just(BinaryOp::Div),
                    ],
                    inner.clone(),
                    inner.clone()
                )
                    .prop_map(|(op, a, b)| Node::Binary(
                        op,
                        Box::new(a),
                        Box::new(b)
                    )),
                (inner, exponent).prop_map(|(a, b)| Node::Binary(
                    BinaryOp::Pow,
                    Box::new(a),
                    Box::new(b)
                )),
            ]
        })
    }

    proptest! {
        #[test]
        fn print_then_parse_is_identity(node in arb_node()) {
            let original = Expression::from_node(node);
            let text = original.to_string();
            let reparsed = Expression::parse(&text).unwrap();
            prop_assert_eq!(&reparsed, &original, "text was {}", text);
            for i in 0..100 {
                let x = (i as f64 + 0.5) / 100.0;
                match (original.eval(x), reparsed.eval(x)) {
                    (Ok(a), Ok(b)) => prop_assert!(a == b || (a.is_nan() && b.is_nan())),
                    (Err(_), Err(_)) => {}
                    _ => prop_assert!(false, "evaluation outcome differs at {}", x),
                }
            }
        }

        #[test]
        fn evaluation_is_deterministic(node in arb_node(), x in 0.0f64..1.0) {
            let ex = Expression::from_node(node);
            prop_assert_eq!(format!("{:?}", ex.eval(x)), format!("{:?}", ex.eval(x)));
        }
    }
}
