//! Scalar expressions for coefficients supplied in configuration files.
//!
//! Grammar, lowest to highest precedence:
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := power (('*' | '/') power)*
//! power  := unary ('^' power)?          right associative
//! unary  := '-' unary | atom
//! atom   := number | ident | ident '(' args ')' | '(' expr ')'
//! ```
//!
//! Unary minus binds tighter than `^`, so `-2^2` is `(-2)^2 = 4`; write
//! `-(2^2)` for the other reading. The Unicode minus sign `−` is accepted
//! wherever `-` is.

mod parser;

use std::fmt;

use crate::error::{Error, Result};

pub use parser::parse;

/// Exponents this close to an integer are treated as integers, which allows
/// negative bases (`v^3` with `v < 0`).
pub const INTEGER_EXPONENT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> char {
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
pub enum Builtin {
    Exp,
    Log,
    Abs,
    Sqrt,
    Min,
    Max,
    Pow,
}

impl Builtin {
    pub const ALL: [Builtin; 7] = [
        Builtin::Exp,
        Builtin::Log,
        Builtin::Abs,
        Builtin::Sqrt,
        Builtin::Min,
        Builtin::Max,
        Builtin::Pow,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Builtin::Exp => "exp",
            Builtin::Log => "log",
            Builtin::Abs => "abs",
            Builtin::Sqrt => "sqrt",
            Builtin::Min => "min",
            Builtin::Max => "max",
            Builtin::Pow => "pow",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Builtin::Min | Builtin::Max | Builtin::Pow => 2,
            _ => 1,
        }
    }

    pub fn lookup(name: &str) -> Option<Builtin> {
        Self::ALL.into_iter().find(|b| b.name() == name)
    }
}

/// Expression tree. Variables carry the slot index they were resolved to at
/// parse time so evaluation does not need name lookups.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(f64),
    Var { name: String, slot: usize },
    Neg(Box<Node>),
    Binary(BinOp, Box<Node>, Box<Node>),
    Call(Builtin, Vec<Node>),
}

/// A parsed expression together with the ordered variable list it was
/// parsed against.
#[derive(Debug, Clone, PartialEq)]
pub struct Expression {
    root: Node,
    vars: Vec<String>,
}

impl Expression {
    pub fn new(root: Node, vars: Vec<String>) -> Self {
        Expression { root, vars }
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    /// Evaluate with named bindings. Every variable that occurs in the tree
    /// must be bound.
    pub fn eval(&self, bindings: &[(&str, f64)]) -> Result<f64> {
        let mut slots = vec![f64::NAN; self.vars.len()];
        let mut bound = vec![false; self.vars.len()];
        for (name, value) in bindings {
            if let Some(i) = self.vars.iter().position(|v| v == name) {
                slots[i] = *value;
                bound[i] = true;
            }
        }
        check_bound(&self.root, &bound)?;
        self.eval_slots(&slots)
    }

    /// Evaluate with values given in the order of [`Expression::vars`].
    pub fn eval_slots(&self, values: &[f64]) -> Result<f64> {
        let out = eval_node(&self.root, values)?;
        if out.is_nan() {
            return Err(Error::domain("expression evaluated to NaN"));
        }
        Ok(out)
    }
}

fn check_bound(node: &Node, bound: &[bool]) -> Result<()> {
    match node {
        Node::Const(_) => Ok(()),
        Node::Var { name, slot } => {
            if bound.get(*slot).copied().unwrap_or(false) {
                Ok(())
            } else {
                Err(Error::Unbound(name.clone()))
            }
        }
        Node::Neg(inner) => check_bound(inner, bound),
        Node::Binary(_, l, r) => {
            check_bound(l, bound)?;
            check_bound(r, bound)
        }
        Node::Call(_, args) => args.iter().try_for_each(|a| check_bound(a, bound)),
    }
}

fn eval_node(node: &Node, values: &[f64]) -> Result<f64> {
    match node {
        Node::Const(c) => Ok(*c),
        Node::Var { name, slot } => values
            .get(*slot)
            .copied()
            .ok_or_else(|| Error::Unbound(name.clone())),
        Node::Neg(inner) => Ok(-eval_node(inner, values)?),
        Node::Binary(op, l, r) => {
            let a = eval_node(l, values)?;
            let b = eval_node(r, values)?;
            match op {
                BinOp::Add => Ok(a + b),
                BinOp::Sub => Ok(a - b),
                BinOp::Mul => Ok(a * b),
                BinOp::Div => {
                    if b == 0.0 {
                        Err(Error::domain("division by zero"))
                    } else {
                        Ok(a / b)
                    }
                }
                BinOp::Pow => real_pow(a, b),
            }
        }
        Node::Call(f, args) => {
            let x = eval_node(&args[0], values)?;
            match f {
                Builtin::Exp => Ok(x.exp()),
                Builtin::Log => {
                    if x <= 0.0 {
                        Err(Error::domain(format!("log of non-positive value {x}")))
                    } else {
                        Ok(x.ln())
                    }
                }
                Builtin::Abs => Ok(x.abs()),
                Builtin::Sqrt => {
                    if x < 0.0 {
                        Err(Error::domain(format!("sqrt of negative value {x}")))
                    } else {
                        Ok(x.sqrt())
                    }
                }
                Builtin::Min => Ok(x.min(eval_node(&args[1], values)?)),
                Builtin::Max => Ok(x.max(eval_node(&args[1], values)?)),
                Builtin::Pow => real_pow(x, eval_node(&args[1], values)?),
            }
        }
    }
}

/// Real power. Negative bases need an integer exponent; `0^negative` is a
/// domain error rather than an infinity.
pub fn real_pow(base: f64, exponent: f64) -> Result<f64> {
    let rounded = exponent.round();
    let is_integer = (exponent - rounded).abs() <= INTEGER_EXPONENT_TOL;
    if base == 0.0 && exponent < 0.0 {
        return Err(Error::domain("zero raised to a negative power"));
    }
    if is_integer && rounded.abs() <= i32::MAX as f64 {
        return Ok(base.powi(rounded as i32));
    }
    if base < 0.0 {
        return Err(Error::domain(format!(
            "negative base {base} with non-integer exponent {exponent}"
        )));
    }
    Ok(base.powf(exponent))
}

impl fmt::Display for Node {
    /// Fully parenthesized so that printing and re-parsing gives back the
    /// same tree regardless of precedence.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Const(c) => write!(f, "{c:?}"),
            Node::Var { name, .. } => f.write_str(name),
            Node::Neg(inner) => write!(f, "(-{inner})"),
            Node::Binary(op, l, r) => write!(f, "({l} {} {r})", op.symbol()),
            Node::Call(b, args) => {
                write!(f, "{}(", b.name())?;
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

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.root.fmt(f)
    }
}
