//! Scalar expressions in the single variable `t`.
//!
//! Coefficients of an equation are supplied as text such as
//! `"-2*sqrt(3)/9*sin(t)^2"`. [`Expr::parse`] turns the text into an
//! immutable tree that can be evaluated from any number of threads.
//!
//! Grammar (lowest to highest precedence):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := ('-' | '+') unary | power
//! power   := primary ('^' unary)?          // right associative
//! primary := number | 't' | 'pi' | 'e' | func '(' expr (',' expr)* ')' | '(' expr ')'
//! ```
//!
//! Unary minus binds looser than `^`, so `-2^2` is `-4` and `2^3^2` is `512`.

mod parser;

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub use parser::{ParseError, ParseErrorKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    pub fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Ln,
    Sqrt,
    Abs,
    Min,
    Max,
}

impl Func {
    pub const ALL: [Func; 9] = [
        Func::Sin,
        Func::Cos,
        Func::Tan,
        Func::Exp,
        Func::Ln,
        Func::Sqrt,
        Func::Abs,
        Func::Min,
        Func::Max,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Min => "min",
            Func::Max => "max",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }

    /// `min` and `max` take two or more arguments, everything else exactly one.
    pub fn is_variadic(self) -> bool {
        matches!(self, Func::Min | Func::Max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Constant {
    Pi,
    E,
}

impl Constant {
    pub fn value(self) -> f64 {
        match self {
            Constant::Pi => std::f64::consts::PI,
            Constant::E => std::f64::consts::E,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Constant::Pi => "pi",
            Constant::E => "e",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Num(f64),
    Var,
    Const(Constant),
    Neg(Box<Node>),
    Binary(BinOp, Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

impl Node {
    pub fn binary(op: BinOp, lhs: Node, rhs: Node) -> Node {
        Node::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    fn has_var(&self) -> bool {
        match self {
            Node::Var => true,
            Node::Num(_) | Node::Const(_) => false,
            Node::Neg(x) => x.has_var(),
            Node::Binary(_, l, r) => l.has_var() || r.has_var(),
            Node::Call(_, args) => args.iter().any(Node::has_var),
        }
    }

    /// Fully parenthesized text that parses back to an equivalent tree.
    pub fn render(&self) -> String {
        let mut out = String::new();
        self.render_into(&mut out);
        out
    }

    fn render_into(&self, out: &mut String) {
        match self {
            Node::Num(v) => {
                if v.is_sign_negative() {
                    out.push_str(&format!("(-{:?})", -v));
                } else {
                    out.push_str(&format!("{v:?}"));
                }
            }
            Node::Var => out.push('t'),
            Node::Const(c) => out.push_str(c.name()),
            Node::Neg(x) => {
                out.push_str("(-");
                x.render_into(out);
                out.push(')');
            }
            Node::Binary(op, l, r) => {
                out.push('(');
                l.render_into(out);
                out.push(' ');
                out.push(op.symbol());
                out.push(' ');
                r.render_into(out);
                out.push(')');
            }
            Node::Call(f, args) => {
                out.push_str(f.name());
                out.push('(');
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    a.render_into(out);
                }
                out.push(')');
            }
        }
    }

    fn eval(&self, t: f64) -> Result<f64, EvalError> {
        let v = match self {
            Node::Num(v) => *v,
            Node::Var => t,
            Node::Const(c) => c.value(),
            Node::Neg(x) => -x.eval(t)?,
            Node::Binary(op, l, r) => {
                let (x, y) = (l.eval(t)?, r.eval(t)?);
                match op {
                    BinOp::Add => x + y,
                    BinOp::Sub => x - y,
                    BinOp::Mul => x * y,
                    BinOp::Div => {
                        if y == 0.0 {
                            return Err(self.domain(EvalErrorKind::DivisionByZero));
                        }
                        x / y
                    }
                    BinOp::Pow => {
                        if x < 0.0 && y.fract() != 0.0 {
                            return Err(self.domain(EvalErrorKind::FractionalPowerOfNegative));
                        }
                        if x == 0.0 && y < 0.0 {
                            return Err(self.domain(EvalErrorKind::DivisionByZero));
                        }
                        x.powf(y)
                    }
                }
            }
            Node::Call(f, args) => {
                let x = args[0].eval(t)?;
                match f {
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                    Func::Tan => x.tan(),
                    Func::Exp => x.exp(),
                    Func::Ln => {
                        if x <= 0.0 {
                            return Err(self.domain(EvalErrorKind::LogOfNonPositive));
                        }
                        x.ln()
                    }
                    Func::Sqrt => {
                        if x < 0.0 {
                            return Err(self.domain(EvalErrorKind::SqrtOfNegative));
                        }
                        x.sqrt()
                    }
                    Func::Abs => x.abs(),
                    Func::Min | Func::Max => {
                        let mut acc = x;
                        for a in &args[1..] {
                            let v = a.eval(t)?;
                            acc = if *f == Func::Min { acc.min(v) } else { acc.max(v) };
                        }
                        acc
                    }
                }
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(self.domain(EvalErrorKind::NonFinite))
        }
    }

    fn domain(&self, kind: EvalErrorKind) -> EvalError {
        EvalError {
            kind,
            subexpr: self.render(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalErrorKind {
    DivisionByZero,
    LogOfNonPositive,
    SqrtOfNegative,
    FractionalPowerOfNegative,
    NonFinite,
    /// A sampled curve was queried outside the span it covers.
    OutOfRange,
}

impl fmt::Display for EvalErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EvalErrorKind::DivisionByZero => "division by zero",
            EvalErrorKind::LogOfNonPositive => "ln of a non-positive value",
            EvalErrorKind::SqrtOfNegative => "sqrt of a negative value",
            EvalErrorKind::FractionalPowerOfNegative => "non-integer power of a negative base",
            EvalErrorKind::NonFinite => "non-finite value",
            EvalErrorKind::OutOfRange => "argument outside the sampled range",
        };
        f.write_str(s)
    }
}

/// Evaluation failure, carrying the offending subexpression.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{kind} in `{subexpr}`")]
pub struct EvalError {
    pub kind: EvalErrorKind,
    pub subexpr: String,
}

impl EvalError {
    pub fn new(kind: EvalErrorKind, subexpr: impl Into<String>) -> Self {
        Self {
            kind,
            subexpr: subexpr.into(),
        }
    }
}

/// A parsed expression together with its source text.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    root: Node,
    source: String,
}

impl Expr {
    pub fn parse(source: &str) -> Result<Expr, ParseError> {
        let root = parser::parse(source)?;
        Ok(Expr {
            root,
            source: source.to_string(),
        })
    }

    pub fn from_node(root: Node) -> Expr {
        let source = root.render();
        Expr { root, source }
    }

    pub fn constant(v: f64) -> Expr {
        Expr::from_node(Node::Num(v))
    }

    pub fn eval(&self, t: f64) -> Result<f64, EvalError> {
        if !t.is_finite() {
            return Err(EvalError::new(EvalErrorKind::NonFinite, "t"));
        }
        self.root.eval(t)
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn render(&self) -> String {
        self.root.render()
    }

    /// True when the expression does not mention `t`.
    pub fn is_constant(&self) -> bool {
        !self.root.has_var()
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl std::str::FromStr for Expr {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Expr::parse(s)
    }
}

impl Serialize for Expr {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.source)
    }
}

impl<'de> Deserialize<'de> for Expr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Expr::parse(&s).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn ev(src: &str, t: f64) -> f64 {
        Expr::parse(src).unwrap().eval(t).unwrap()
    }

    #[test]
    fn zero_literal() {
        let e = Expr::parse("0").unwrap();
        assert_eq!(e.root(), &Node::Num(0.0));
        assert!(e.is_constant());
    }

    #[test]
    fn scaled_sine_square_at_half_pi() {
        assert_eq!(ev("-0.3849*sin(t)^2", PI / 2.0), -0.3849);
        // the literal approximates 2*sqrt(3)/9
        assert!((ev("2*sqrt(3)/9", 0.0) - 0.3849).abs() < 1e-4);
    }

    #[test]
    fn power_is_right_associative() {
        assert_eq!(ev("2^3^2", 0.0), 512.0);
        assert_eq!(ev("(2^3)^2", 0.0), 64.0);
    }

    #[test]
    fn unary_minus_binds_below_power() {
        assert_eq!(ev("-2^2", 0.0), -4.0);
        assert_eq!(ev("2^-1", 0.0), 0.5);
        assert_eq!(ev("--3", 0.0), 3.0);
    }

    #[test]
    fn left_associative_arithmetic() {
        assert_eq!(ev("1-2-3", 0.0), -4.0);
        assert_eq!(ev("8/4/2", 0.0), 1.0);
        assert_eq!(ev("2+3*4", 0.0), 14.0);
    }

    #[test]
    fn eval_examples() {
        assert!(ev("sin(t)^2", PI).abs() < 1e-15);
        assert_eq!(ev("t*t - 1", 2.0), 3.0);
        assert!((ev("exp(ln(t))", 5.0) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn constants_and_scientific_literals() {
        assert_eq!(ev("pi", 0.0), PI);
        assert_eq!(ev("e", 0.0), std::f64::consts::E);
        assert_eq!(ev("1.5e3", 0.0), 1500.0);
        assert_eq!(ev("2E-2", 0.0), 0.02);
        assert_eq!(ev(".5", 0.0), 0.5);
        assert_eq!(ev("min(t, 1, -2)", 0.0), -2.0);
        assert_eq!(ev("max(t, 1)", 3.0), 3.0);
        assert_eq!(ev("abs(-t)", 2.0), 2.0);
    }

    #[test]
    fn domain_errors_name_the_subexpression() {
        let err = Expr::parse("1 + ln(t)").unwrap().eval(0.0).unwrap_err();
        assert_eq!(err.kind, EvalErrorKind::LogOfNonPositive);
        assert_eq!(err.subexpr, "ln(t)");

        let err = Expr::parse("1/(t-1)").unwrap().eval(1.0).unwrap_err();
        assert_eq!(err.kind, EvalErrorKind::DivisionByZero);

        let err = Expr::parse("sqrt(t)").unwrap().eval(-1.0).unwrap_err();
        assert_eq!(err.kind, EvalErrorKind::SqrtOfNegative);

        let err = Expr::parse("t^0.5").unwrap().eval(-4.0).unwrap_err();
        assert_eq!(err.kind, EvalErrorKind::FractionalPowerOfNegative);
        assert_eq!(ev("t^3", -2.0), -8.0);

        let err = Expr::parse("exp(t)").unwrap().eval(1000.0).unwrap_err();
        assert_eq!(err.kind, EvalErrorKind::NonFinite);

        assert!(Expr::parse("t").unwrap().eval(f64::NAN).is_err());
    }

    #[test]
    fn render_round_trip_is_bitwise() {
        for src in ["-0.3849*sin(t)^2", "2^3^2", "-t^2/3 + max(t, cos(t), 0.1)", "1e-7*t - e"] {
            let a = Expr::parse(src).unwrap();
            let b = Expr::parse(&a.render()).unwrap();
            for t in [-1.3, 0.0, 0.7, 2.9] {
                assert_eq!(a.eval(t).unwrap().to_bits(), b.eval(t).unwrap().to_bits(), "{src}");
            }
        }
    }

    #[test]
    fn serde_uses_source_text() {
        let e = Expr::parse("sin(t)").unwrap();
        let json = serde_json::to_string(&e).unwrap();
        assert_eq!(json, "\"sin(t)\"");
        let back: Expr = serde_json::from_str(&json).unwrap();
        assert_eq!(back, e);
        assert!(serde_json::from_str::<Expr>("\"sin(\"").is_err());
    }
}

#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    fn leaf() -> impl Strategy<Value = Node> {
        prop_oneof![
            (-50.0f64..50.0).prop_map(Node::Num),
            (0.0f64..1e-3).prop_map(Node::Num),
            Just(Node::Var),
            Just(Node::Const(Constant::Pi)),
            Just(Node::Const(Constant::E)),
        ]
    }

    fn tree() -> impl Strategy<Value = Node> {
        leaf().prop_recursive(5, 48, 3, |inner| {
            prop_oneof![
                inner.clone().prop_map(|x| Node::Neg(Box::new(x))),
                (inner.clone(), inner.clone(), 0usize..5).prop_map(|(l, r, k)| {
                    let op = [BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div, BinOp::Pow][k];
                    Node::binary(op, l, r)
                }),
                (inner.clone(), 0usize..7)
                    .prop_map(|(x, k)| Node::Call(Func::ALL[k], vec![x])),
                (inner.clone(), inner, any::<bool>()).prop_map(|(x, y, mn)| {
                    Node::Call(if mn { Func::Min } else { Func::Max }, vec![x, y])
                }),
            ]
        })
    }

    fn agree(a: &Result<f64, EvalError>, b: &Result<f64, EvalError>) -> bool {
        match (a, b) {
            (Ok(x), Ok(y)) => (x - y).abs() <= 1e-12 * x.abs().max(y.abs()).max(1e-300),
            (Err(x), Err(y)) => x.kind == y.kind,
            _ => false,
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn parenthesized_render_reparses_equivalently(
            node in tree(),
            ts in prop::collection::vec(-10.0f64..10.0, 10),
        ) {
            let original = Expr::from_node(node);
            let reparsed = Expr::parse(&original.render()).unwrap();
            for &t in &ts {
                let (a, b) = (original.eval(t), reparsed.eval(t));
                prop_assert!(agree(&a, &b), "t={t} {a:?} vs {b:?} for {}", original.render());
                // repeated evaluation is bitwise deterministic
                let again = original.eval(t);
                prop_assert_eq!(a.map(f64::to_bits), again.map(f64::to_bits));
            }
        }
    }
}
