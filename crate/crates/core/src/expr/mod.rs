//! Scalar arithmetic expressions in the chart variables `x1..xn`.
//!
//! Expressions describe metric components, weights, test fields and test
//! functions. They can be evaluated pointwise and differentiated exactly,
//! which gives every curvature routine an analytic oracle next to its
//! finite-difference path. The grammar is documented in
//! `docs/expression-grammar.md`.

mod diff;
mod parse;
mod print;
pub mod symbolic;

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

pub use parse::parse_expr;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("variable index out of range: x{index} at byte {offset} (dimension {dim})")]
    VariableOutOfRange {
        index: usize,
        dim: usize,
        offset: usize,
    },
    #[error("domain error in {op}: argument {value} in `{node}`")]
    Domain {
        op: &'static str,
        value: f64,
        node: String,
    },
    #[error("point has {got} coordinates but the expression uses x{needed}")]
    PointTooShort { got: usize, needed: usize },
    #[error("cannot differentiate a power with a variable exponent: `{node}`")]
    VariableExponent { node: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Abs,
    /// Strict Heaviside step, `1` for positive arguments and `0` otherwise.
    /// Produced by differentiating `max`/`min`.
    Step,
    /// Sign with `sgn(0) = 1`. Produced by differentiating `abs`.
    Sgn,
    /// Signum with `sign(0) = 0`.
    Sign,
}

impl UnaryOp {
    pub fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "-",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::Exp => "exp",
            UnaryOp::Log => "log",
            UnaryOp::Sqrt => "sqrt",
            UnaryOp::Abs => "abs",
            UnaryOp::Step => "step",
            UnaryOp::Sgn => "sgn",
            UnaryOp::Sign => "sign",
        }
    }

    pub(crate) fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => UnaryOp::Sin,
            "cos" => UnaryOp::Cos,
            "exp" => UnaryOp::Exp,
            "log" => UnaryOp::Log,
            "sqrt" => UnaryOp::Sqrt,
            "abs" => UnaryOp::Abs,
            "step" => UnaryOp::Step,
            "sgn" => UnaryOp::Sgn,
            "sign" => UnaryOp::Sign,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Max,
    Min,
}

/// Expression tree. Variables are stored zero-based: `Var(0)` is `x1`.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Unary(UnaryOp, Arc<Expr>),
    Binary(BinaryOp, Arc<Expr>, Arc<Expr>),
}

impl Expr {
    pub fn constant(c: f64) -> Expr {
        Expr::Const(c)
    }

    /// Variable `x{index+1}`.
    pub fn var(index: usize) -> Expr {
        Expr::Var(index)
    }

    pub fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_const() == Some(0.0)
    }

    /// Number of variables the expression needs (highest index + 1).
    pub fn arity(&self) -> usize {
        match self {
            Expr::Const(_) => 0,
            Expr::Var(i) => i + 1,
            Expr::Unary(_, a) => a.arity(),
            Expr::Binary(_, a, b) => a.arity().max(b.arity()),
        }
    }

    pub fn depends_on(&self, var: usize) -> bool {
        match self {
            Expr::Const(_) => false,
            Expr::Var(i) => *i == var,
            Expr::Unary(_, a) => a.depends_on(var),
            Expr::Binary(_, a, b) => a.depends_on(var) || b.depends_on(var),
        }
    }

    pub fn is_constant(&self) -> bool {
        self.arity() == 0
    }

    pub fn node_count(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Var(_) => 1,
            Expr::Unary(_, a) => 1 + a.node_count(),
            Expr::Binary(_, a, b) => 1 + a.node_count() + b.node_count(),
        }
    }

    /// Evaluates at `point`. Domain violations (log or sqrt of an invalid
    /// argument, division by zero, non-real powers) are reported with the
    /// offending subexpression.
    pub fn eval(&self, point: &[f64]) -> Result<f64, ExprError> {
        match self {
            Expr::Const(c) => Ok(*c),
            Expr::Var(i) => point.get(*i).copied().ok_or(ExprError::PointTooShort {
                got: point.len(),
                needed: i + 1,
            }),
            Expr::Unary(op, a) => {
                let v = a.eval(point)?;
                let out = match op {
                    UnaryOp::Neg => -v,
                    UnaryOp::Sin => v.sin(),
                    UnaryOp::Cos => v.cos(),
                    UnaryOp::Exp => v.exp(),
                    UnaryOp::Log => {
                        if v <= 0.0 {
                            return Err(self.domain("log", v));
                        }
                        v.ln()
                    }
                    UnaryOp::Sqrt => {
                        if v < 0.0 {
                            return Err(self.domain("sqrt", v));
                        }
                        v.sqrt()
                    }
                    UnaryOp::Abs => v.abs(),
                    UnaryOp::Step => {
                        if v > 0.0 {
                            1.0
                        } else {
                            0.0
                        }
                    }
                    UnaryOp::Sgn => {
                        if v >= 0.0 {
                            1.0
                        } else {
                            -1.0
                        }
                    }
                    UnaryOp::Sign => {
                        if v == 0.0 {
                            0.0
                        } else {
                            v.signum()
                        }
                    }
                };
                Ok(out)
            }
            Expr::Binary(op, a, b) => {
                let x = a.eval(point)?;
                let y = b.eval(point)?;
                let out = match op {
                    BinaryOp::Add => x + y,
                    BinaryOp::Sub => x - y,
                    BinaryOp::Mul => x * y,
                    BinaryOp::Div => {
                        if y == 0.0 {
                            return Err(self.domain("division", y));
                        }
                        x / y
                    }
                    BinaryOp::Pow => {
                        let r = x.powf(y);
                        if r.is_nan() || (x == 0.0 && y < 0.0) {
                            return Err(self.domain("pow", x));
                        }
                        r
                    }
                    BinaryOp::Max => x.max(y),
                    BinaryOp::Min => x.min(y),
                };
                Ok(out)
            }
        }
    }

    fn domain(&self, op: &'static str, value: f64) -> ExprError {
        ExprError::Domain {
            op,
            value,
            node: self.to_string(),
        }
    }

    /// Arguments whose zero set is a kink of the expression: `u` for every
    /// `abs(u)`, `a - b` for every `max(a, b)` / `min(a, b)`. Step and sign
    /// nodes count as well since they jump there.
    pub fn kink_arguments(&self) -> Vec<Expr> {
        let mut out = Vec::new();
        self.collect_kinks(&mut out);
        out
    }

    fn collect_kinks(&self, out: &mut Vec<Expr>) {
        match self {
            Expr::Const(_) | Expr::Var(_) => {}
            Expr::Unary(op, a) => {
                if matches!(
                    op,
                    UnaryOp::Abs | UnaryOp::Step | UnaryOp::Sgn | UnaryOp::Sign
                ) && !a.is_constant()
                {
                    out.push((**a).clone());
                }
                a.collect_kinks(out);
            }
            Expr::Binary(op, a, b) => {
                if matches!(op, BinaryOp::Max | BinaryOp::Min)
                    && !(a.is_constant() && b.is_constant())
                {
                    out.push(Expr::sub(a.as_ref().clone(), b.as_ref().clone()));
                }
                a.collect_kinks(out);
                b.collect_kinks(out);
            }
        }
    }

    /// Partial derivative with respect to `x{var+1}`.
    pub fn diff(&self, var: usize) -> Result<Expr, ExprError> {
        diff::diff(self, var)
    }

    // Smart constructors with constant folding and the trivial identities.

    pub fn unary(op: UnaryOp, a: Expr) -> Expr {
        if let Some(c) = a.as_const() {
            if let Ok(v) = Expr::Unary(op, Arc::new(Expr::Const(c))).eval(&[]) {
                return Expr::Const(v);
            }
        }
        if op == UnaryOp::Neg {
            if let Expr::Unary(UnaryOp::Neg, inner) = &a {
                return inner.as_ref().clone();
            }
        }
        Expr::Unary(op, Arc::new(a))
    }

    pub fn neg(a: Expr) -> Expr {
        Expr::unary(UnaryOp::Neg, a)
    }

    pub fn binary(op: BinaryOp, a: Expr, b: Expr) -> Expr {
        match op {
            BinaryOp::Add => Expr::add(a, b),
            BinaryOp::Sub => Expr::sub(a, b),
            BinaryOp::Mul => Expr::mul(a, b),
            BinaryOp::Div => Expr::div(a, b),
            BinaryOp::Pow => Expr::pow(a, b),
            _ => Expr::fold(op, a, b),
        }
    }

    fn fold(op: BinaryOp, a: Expr, b: Expr) -> Expr {
        if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
            let probe = Expr::Binary(op, Arc::new(Expr::Const(x)), Arc::new(Expr::Const(y)));
            if let Ok(v) = probe.eval(&[]) {
                return Expr::Const(v);
            }
        }
        Expr::Binary(op, Arc::new(a), Arc::new(b))
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        if a.is_zero() {
            return b;
        }
        if b.is_zero() {
            return a;
        }
        Expr::fold(BinaryOp::Add, a, b)
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        if b.is_zero() {
            return a;
        }
        if a.is_zero() {
            return Expr::neg(b);
        }
        Expr::fold(BinaryOp::Sub, a, b)
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        if a.is_zero() || b.is_zero() {
            return Expr::Const(0.0);
        }
        if a.as_const() == Some(1.0) {
            return b;
        }
        if b.as_const() == Some(1.0) {
            return a;
        }
        if a.as_const() == Some(-1.0) {
            return Expr::neg(b);
        }
        if b.as_const() == Some(-1.0) {
            return Expr::neg(a);
        }
        Expr::fold(BinaryOp::Mul, a, b)
    }

    pub fn div(a: Expr, b: Expr) -> Expr {
        if a.is_zero() && !b.is_zero() {
            return Expr::Const(0.0);
        }
        if b.as_const() == Some(1.0) {
            return a;
        }
        Expr::fold(BinaryOp::Div, a, b)
    }

    pub fn pow(a: Expr, b: Expr) -> Expr {
        match b.as_const() {
            Some(0.0) => return Expr::Const(1.0),
            Some(1.0) => return a,
            _ => {}
        }
        Expr::fold(BinaryOp::Pow, a, b)
    }

    pub fn max(a: Expr, b: Expr) -> Expr {
        Expr::fold(BinaryOp::Max, a, b)
    }

    pub fn min(a: Expr, b: Expr) -> Expr {
        Expr::fold(BinaryOp::Min, a, b)
    }

    pub fn sum<I: IntoIterator<Item = Expr>>(terms: I) -> Expr {
        terms
            .into_iter()
            .fold(Expr::Const(0.0), |acc, t| Expr::add(acc, t))
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        print::write_expr(self, f)
    }
}

impl std::str::FromStr for Expr {
    type Err = ExprError;

    /// Parses with the maximal supported dimension (9 variables).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_expr(s, 9)
    }
}
