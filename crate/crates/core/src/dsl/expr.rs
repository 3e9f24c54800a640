//! Expression trees for vector-field components.
//!
//! Trees are built either by the parser or by the smart constructors on
//! [`Expr`], which fold constants and drop additive/multiplicative
//! identities. Symbolic differentiation goes through the same constructors,
//! so derivative trees stay small without a general simplifier.

use std::fmt;

/// Elementary functions of one argument.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Exp,
    Tanh,
    Sqrt,
}

impl UnaryOp {
    /// Name used in source text; `None` for negation, which is written as a prefix `-`.
    pub fn function_name(self) -> Option<&'static str> {
        match self {
            UnaryOp::Neg => None,
            UnaryOp::Sin => Some("sin"),
            UnaryOp::Cos => Some("cos"),
            UnaryOp::Exp => Some("exp"),
            UnaryOp::Tanh => Some("tanh"),
            UnaryOp::Sqrt => Some("sqrt"),
        }
    }

    pub fn from_function_name(name: &str) -> Option<Self> {
        match name {
            "sin" => Some(UnaryOp::Sin),
            "cos" => Some(UnaryOp::Cos),
            "exp" => Some(UnaryOp::Exp),
            "tanh" => Some(UnaryOp::Tanh),
            "sqrt" => Some(UnaryOp::Sqrt),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinaryOp {
    fn symbol(self) -> char {
        match self {
            BinaryOp::Add => '+',
            BinaryOp::Sub => '-',
            BinaryOp::Mul => '*',
            BinaryOp::Div => '/',
        }
    }
}

/// One node of a component expression. Variables are zero-based internally
/// and written `x1`, `x2`, ... in source text.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
    /// Integer power with a literal, non-negative exponent.
    Pow(Box<Expr>, u32),
}

/// Why an expression could not be evaluated at a point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainFault {
    DivisionByZero,
    SqrtOfNegative,
    NonFinite,
}

impl fmt::Display for DomainFault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DomainFault::DivisionByZero => f.write_str("division by zero"),
            DomainFault::SqrtOfNegative => f.write_str("square root of a negative number"),
            DomainFault::NonFinite => f.write_str("non-finite value"),
        }
    }
}

/// Evaluation failure: the fault and the innermost sub-expression that raised it.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainViolation {
    pub fault: DomainFault,
    pub subexpression: String,
}

impl Expr {
    pub fn constant(value: f64) -> Expr {
        Expr::Const(value)
    }

    pub fn var(index: usize) -> Expr {
        Expr::Var(index)
    }

    pub fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Const(c) => Some(*c),
            _ => None,
        }
    }

    fn is_const(&self, value: f64) -> bool {
        self.as_const() == Some(value)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn neg(a: Expr) -> Expr {
        match a {
            Expr::Const(c) => Expr::Const(-c),
            Expr::Unary(UnaryOp::Neg, inner) => *inner,
            other => Expr::Unary(UnaryOp::Neg, Box::new(other)),
        }
    }

    pub fn unary(op: UnaryOp, a: Expr) -> Expr {
        if op == UnaryOp::Neg {
            return Expr::neg(a);
        }
        if let Some(c) = a.as_const() {
            if let Ok(v) = apply_unary(op, c) {
                return Expr::Const(v);
            }
        }
        Expr::Unary(op, Box::new(a))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn add(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::Const(x + y),
            (Some(0.0), _) => b,
            (_, Some(0.0)) => a,
            _ => Expr::Binary(BinaryOp::Add, Box::new(a), Box::new(b)),
        }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn sub(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::Const(x - y),
            (Some(0.0), _) => Expr::neg(b),
            (_, Some(0.0)) => a,
            _ => Expr::Binary(BinaryOp::Sub, Box::new(a), Box::new(b)),
        }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn mul(a: Expr, b: Expr) -> Expr {
        if a.is_const(0.0) || b.is_const(0.0) {
            return Expr::Const(0.0);
        }
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::Const(x * y),
            (Some(1.0), _) => b,
            (_, Some(1.0)) => a,
            (Some(-1.0), _) => Expr::neg(b),
            (_, Some(-1.0)) => Expr::neg(a),
            _ => Expr::Binary(BinaryOp::Mul, Box::new(a), Box::new(b)),
        }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn div(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) if y != 0.0 => Expr::Const(x / y),
            (Some(x), _) if x == 0.0 && !b.is_const(0.0) => Expr::Const(0.0),
            (_, Some(1.0)) => a,
            _ => Expr::Binary(BinaryOp::Div, Box::new(a), Box::new(b)),
        }
    }

    pub fn pow(a: Expr, exponent: u32) -> Expr {
        match exponent {
            0 => Expr::Const(1.0),
            1 => a,
            _ => match a.as_const() {
                Some(c) => Expr::Const(c.powi(exponent as i32)),
                None => Expr::Pow(Box::new(a), exponent),
            },
        }
    }

    /// Largest variable index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Const(_) => None,
            Expr::Var(i) => Some(*i),
            Expr::Unary(_, a) | Expr::Pow(a, _) => a.max_var(),
            Expr::Binary(_, a, b) => match (a.max_var(), b.max_var()) {
                (Some(x), Some(y)) => Some(x.max(y)),
                (x, y) => x.or(y),
            },
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Var(_) => 1,
            Expr::Unary(_, a) | Expr::Pow(a, _) => 1 + a.depth(),
            Expr::Binary(_, a, b) => 1 + a.depth().max(b.depth()),
        }
    }

    /// Evaluates the tree at `x`. Division by an exact zero, square roots
    /// of negatives and overflow to a non-finite value are all rejected.
    pub fn eval(&self, x: &[f64]) -> Result<f64, DomainViolation> {
        let fail = |fault| DomainViolation {
            fault,
            subexpression: self.to_string(),
        };
        let value = match self {
            Expr::Const(c) => *c,
            Expr::Var(i) => x[*i],
            Expr::Unary(op, a) => apply_unary(*op, a.eval(x)?).map_err(fail)?,
            Expr::Binary(op, a, b) => {
                let (u, v) = (a.eval(x)?, b.eval(x)?);
                match op {
                    BinaryOp::Add => u + v,
                    BinaryOp::Sub => u - v,
                    BinaryOp::Mul => u * v,
                    BinaryOp::Div => {
                        if v == 0.0 {
                            return Err(fail(DomainFault::DivisionByZero));
                        }
                        u / v
                    }
                }
            }
            Expr::Pow(a, p) => a.eval(x)?.powi(*p as i32),
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(fail(DomainFault::NonFinite))
        }
    }

    /// Symbolic partial derivative with respect to the zero-based variable `var`.
    pub fn derivative(&self, var: usize) -> Expr {
        match self {
            Expr::Const(_) => Expr::Const(0.0),
            Expr::Var(i) => Expr::Const(if *i == var { 1.0 } else { 0.0 }),
            Expr::Unary(op, a) => {
                let da = a.derivative(var);
                if da.is_const(0.0) {
                    return Expr::Const(0.0);
                }
                let a = (**a).clone();
                let outer = match op {
                    UnaryOp::Neg => return Expr::neg(da),
                    UnaryOp::Sin => Expr::unary(UnaryOp::Cos, a),
                    UnaryOp::Cos => Expr::neg(Expr::unary(UnaryOp::Sin, a)),
                    UnaryOp::Exp => Expr::unary(UnaryOp::Exp, a),
                    UnaryOp::Tanh => Expr::sub(
                        Expr::Const(1.0),
                        Expr::pow(Expr::unary(UnaryOp::Tanh, a), 2),
                    ),
                    UnaryOp::Sqrt => {
                        return Expr::div(
                            da,
                            Expr::mul(Expr::Const(2.0), Expr::unary(UnaryOp::Sqrt, a)),
                        )
                    }
                };
                Expr::mul(outer, da)
            }
            Expr::Binary(op, a, b) => {
                let (da, db) = (a.derivative(var), b.derivative(var));
                match op {
                    BinaryOp::Add => Expr::add(da, db),
                    BinaryOp::Sub => Expr::sub(da, db),
                    BinaryOp::Mul => {
                        Expr::add(Expr::mul(da, (**b).clone()), Expr::mul((**a).clone(), db))
                    }
                    BinaryOp::Div => Expr::div(
                        Expr::sub(Expr::mul(da, (**b).clone()), Expr::mul((**a).clone(), db)),
                        Expr::pow((**b).clone(), 2),
                    ),
                }
            }
            Expr::Pow(_, 0) => Expr::Const(0.0),
            Expr::Pow(a, p) => {
                let da = a.derivative(var);
                Expr::mul(
                    Expr::mul(Expr::Const(*p as f64), Expr::pow((**a).clone(), p - 1)),
                    da,
                )
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Binary(BinaryOp::Add | BinaryOp::Sub, ..) => 1,
            Expr::Binary(BinaryOp::Mul | BinaryOp::Div, ..) => 2,
            Expr::Unary(UnaryOp::Neg, _) => 3,
            Expr::Pow(..) => 4,
            Expr::Const(c) if c.is_sign_negative() => 3,
            _ => 5,
        }
    }
}

fn apply_unary(op: UnaryOp, v: f64) -> Result<f64, DomainFault> {
    let out = match op {
        UnaryOp::Neg => -v,
        UnaryOp::Sin => v.sin(),
        UnaryOp::Cos => v.cos(),
        UnaryOp::Exp => v.exp(),
        UnaryOp::Tanh => v.tanh(),
        UnaryOp::Sqrt => {
            if v < 0.0 {
                return Err(DomainFault::SqrtOfNegative);
            }
            v.sqrt()
        }
    };
    if out.is_finite() {
        Ok(out)
    } else {
        Err(DomainFault::NonFinite)
    }
}

fn write_operand(f: &mut fmt::Formatter<'_>, e: &Expr, min_prec: u8) -> fmt::Result {
    if e.precedence() < min_prec {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

/// Unparses with the minimum parentheses needed for the parser to rebuild
/// the same tree. Binary operators are left-associative, so right operands
/// of equal precedence are parenthesized.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var(i) => write!(f, "x{}", i + 1),
            Expr::Unary(op, a) => match op.function_name() {
                Some(name) => write!(f, "{name}({a})"),
                None => {
                    f.write_str("-")?;
                    write_operand(f, a, 3)
                }
            },
            Expr::Binary(op, a, b) => {
                let prec = self.precedence();
                write_operand(f, a, prec)?;
                write!(f, " {} ", op.symbol())?;
                write_operand(f, b, prec + 1)
            }
            Expr::Pow(a, p) => {
                write_operand(f, a, 5)?;
                write!(f, "^{p}")
            }
        }
    }
}
