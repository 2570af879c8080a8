//! A small expression language for coefficient functions and Lyapunov
//! candidates.
//!
//! Grammar (whitespace is insignificant):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := '-'? power
//! power  := atom ('^' power)?
//! atom   := number | ident | ident '(' args ')' | '(' expr ')'
//! args   := expr (',' expr)*
//! ```
//!
//! Variables are `x`, `y`, `t` and `u`; functions are `exp`, `sin`, `cos`,
//! `abs` (one argument) and `pow`, `min`, `max` (two arguments). `^` is
//! right-associative and binds tighter than unary minus, so `-x^2` is
//! `-(x^2)`.

mod eval;
mod parse;

use std::collections::BTreeSet;
use std::fmt;

pub use eval::{partial_derivative, Bindings, DerivativeOrder, EvalError, DEFAULT_STEP};
pub use parse::{parse_expr, ParseError};

/// Free variables an expression may reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Var {
    X,
    Y,
    T,
    U,
}

impl Var {
    pub const ALL: [Var; 4] = [Var::X, Var::Y, Var::T, Var::U];

    pub fn name(self) -> &'static str {
        match self {
            Var::X => "x",
            Var::Y => "y",
            Var::T => "t",
            Var::U => "u",
        }
    }

    pub fn from_name(name: &str) -> Option<Var> {
        Var::ALL.into_iter().find(|v| v.name() == name)
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Built-in functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Exp,
    Sin,
    Cos,
    Abs,
    Pow,
    Min,
    Max,
}

impl Func {
    const ALL: [Func; 7] = [
        Func::Exp,
        Func::Sin,
        Func::Cos,
        Func::Abs,
        Func::Pow,
        Func::Min,
        Func::Max,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Abs => "abs",
            Func::Pow => "pow",
            Func::Min => "min",
            Func::Max => "max",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Exp | Func::Sin | Func::Cos | Func::Abs => 1,
            Func::Pow | Func::Min | Func::Max => 2,
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }
}

/// Parsed expression tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

impl Expr {
    pub fn parse(text: &str) -> Result<Expr, ParseError> {
        parse_expr(text)
    }

    pub fn num(value: f64) -> Expr {
        Expr::Num(value)
    }

    pub fn var(var: Var) -> Expr {
        Expr::Var(var)
    }

    pub fn negate(inner: Expr) -> Expr {
        Expr::Neg(Box::new(inner))
    }

    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn call(func: Func, args: Vec<Expr>) -> Expr {
        Expr::Call(func, args)
    }

    /// Set of variables referenced anywhere in the tree.
    pub fn variables(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<Var>) {
        match self {
            Expr::Num(_) => {}
            Expr::Var(v) => {
                out.insert(*v);
            }
            Expr::Neg(inner) => inner.collect_vars(out),
            Expr::Binary(_, l, r) => {
                l.collect_vars(out);
                r.collect_vars(out);
            }
            Expr::Call(_, args) => args.iter().for_each(|a| a.collect_vars(out)),
        }
    }

    /// True when the expression has no variables and evaluates to exactly zero.
    pub fn is_identically_zero(&self) -> bool {
        self.variables().is_empty() && matches!(self.eval(&Bindings::new()), Ok(v) if v == 0.0)
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Num(_) | Expr::Var(_) | Expr::Call(..) => 5,
            Expr::Binary(BinOp::Pow, ..) => 4,
            Expr::Neg(_) => 3,
            Expr::Binary(BinOp::Mul | BinOp::Div, ..) => 2,
            Expr::Binary(BinOp::Add | BinOp::Sub, ..) => 1,
        }
    }
}

// Printer emits the minimal parentheses that make the output re-parse to the
// same tree. Operand requirements mirror the grammar: a power base must be an
// atom, an exponent a power, a negated operand a power, and right operands of
// left-associative operators one level tighter than the operator.
struct Operand<'a>(&'a Expr, u8);

impl fmt::Display for Operand<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.precedence() < self.1 {
            write!(f, "({})", self.0)
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Neg(inner) => write!(f, "-{}", Operand(inner, 4)),
            Expr::Binary(op @ BinOp::Pow, l, r) => {
                write!(f, "{}{}{}", Operand(l, 5), op.symbol(), Operand(r, 4))
            }
            Expr::Binary(op @ (BinOp::Mul | BinOp::Div), l, r) => {
                write!(f, "{} {} {}", Operand(l, 2), op.symbol(), Operand(r, 3))
            }
            Expr::Binary(op, l, r) => {
                write!(f, "{} {} {}", Operand(l, 1), op.symbol(), Operand(r, 2))
            }
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}
