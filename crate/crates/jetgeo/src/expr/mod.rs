//! Immutable symbolic expression trees: parsing, evaluation, differentiation.
//!
//! An [`Expr`] is a finite tree over named variables, `f64` constants, the
//! binary operators `+ - * / ^`, unary negation, and a fixed set of unary
//! functions (`sin`, `cos`, `tan`, `atan`, `exp`, `ln`, `sqrt`, `tanh`,
//! `abs`). Trees never mutate; every operation returns a new tree, so sharing
//! expressions across threads is safe.
//!
//! Differentiation is symbolic and closed: the derivative of an expression is
//! itself an expression, differentiable again to any order. [`Expr::simplify`]
//! performs constant folding and identity elimination only (`e+0`, `e*1`,
//! `e*0`, `e^1`, ...); no deeper rewriting is attempted, so equality of
//! derivatives is checked by evaluation, not by structure.

mod parser;

pub use parser::{ParseError, ParseErrorKind};

use std::collections::{BTreeSet, HashMap};
use std::fmt;

/// Binary operators, ordered by increasing precedence elsewhere.
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

/// Built-in unary functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Atan,
    Exp,
    Ln,
    Sqrt,
    Tanh,
    Abs,
}

impl Func {
    /// Function name as written in source expressions.
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Atan => "atan",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sqrt => "sqrt",
            Func::Tanh => "tanh",
            Func::Abs => "abs",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "atan" => Func::Atan,
            "exp" => Func::Exp,
            "ln" => Func::Ln,
            "sqrt" => Func::Sqrt,
            "tanh" => Func::Tanh,
            "abs" => Func::Abs,
            _ => return None,
        })
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
            Func::Tan => x.tan(),
            Func::Atan => x.atan(),
            Func::Exp => x.exp(),
            Func::Ln => x.ln(),
            Func::Sqrt => x.sqrt(),
            Func::Tanh => x.tanh(),
            Func::Abs => x.abs(),
        }
    }
}

/// An immutable scalar expression tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Constant(f64),
    Var(String),
    BinOp(BinOp, Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Call(Func, Box<Expr>),
}

/// Variable bindings for evaluation: identifier -> value.
#[derive(Debug, Clone, Default)]
pub struct Env {
    bindings: HashMap<String, f64>,
}

impl Env {
    pub fn new() -> Env {
        Env::default()
    }

    /// Builder-style binding.
    pub fn bind(mut self, name: impl Into<String>, value: f64) -> Env {
        self.bindings.insert(name.into(), value);
        self
    }

    /// Insert or overwrite a binding in place.
    pub fn set(&mut self, name: impl Into<String>, value: f64) {
        self.bindings.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.bindings.get(name).copied()
    }
}

impl<S: Into<String>> FromIterator<(S, f64)> for Env {
    fn from_iter<T: IntoIterator<Item = (S, f64)>>(iter: T) -> Env {
        Env {
            bindings: iter.into_iter().map(|(k, v)| (k.into(), v)).collect(),
        }
    }
}

/// Evaluation failure: a missing binding or a non-finite intermediate value.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
    #[error("non-finite result evaluating `{0}`")]
    NonFinite(String),
}

impl Expr {
    pub fn constant(value: f64) -> Expr {
        Expr::Constant(value)
    }

    /// A variable reference. Names are expected to match
    /// `[A-Za-z_][A-Za-z0-9_]*`; containers that accept expressions
    /// ([`crate::geometry::VectorField`], [`crate::riemann::MetricField`])
    /// validate this.
    pub fn var(name: impl Into<String>) -> Expr {
        Expr::Var(name.into())
    }

    /// Parse an expression from text.
    ///
    /// Standard precedence: `^` (right-associative) binds tightest, then
    /// unary minus, then `*` `/`, then `+` `-`. Parentheses and function
    /// calls `f(e)` as usual. Any tree returned by this parser prints (via
    /// `Display`) to a string that re-parses to a structurally equal tree.
    pub fn parse(text: &str) -> Result<Expr, ParseError> {
        parser::parse(text)
    }

    /// Evaluate at the given bindings in IEEE double precision.
    ///
    /// Non-finite intermediates (division by zero, `ln` of a non-positive
    /// value, `sqrt` of a negative value, `^` with negative base and
    /// non-integer exponent) are reported as errors rather than propagated
    /// as NaN or infinity.
    pub fn eval(&self, env: &Env) -> Result<f64, EvalError> {
        let value = match self {
            Expr::Constant(c) => *c,
            Expr::Var(name) => env
                .get(name)
                .ok_or_else(|| EvalError::UnboundVariable(name.clone()))?,
            Expr::BinOp(op, l, r) => {
                let a = l.eval(env)?;
                let b = r.eval(env)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                    BinOp::Pow => a.powf(b),
                }
            }
            Expr::Neg(e) => -e.eval(env)?,
            Expr::Call(f, a) => f.apply(a.eval(env)?),
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(EvalError::NonFinite(self.to_string()))
        }
    }

    /// Symbolic partial derivative with respect to `var`.
    ///
    /// Applies the product, quotient, chain and power rules; the result is a
    /// plain expression, differentiable again to any order. Output is locally
    /// simplified (constant folding and identity elimination) but otherwise
    /// uncanonicalized, so compare derivatives by evaluation.
    pub fn differentiate(&self, var: &str) -> Expr {
        match self {
            Expr::Constant(_) => Expr::Constant(0.0),
            Expr::Var(name) => {
                if name == var {
                    Expr::Constant(1.0)
                } else {
                    Expr::Constant(0.0)
                }
            }
            Expr::BinOp(op, l, r) => {
                let dl = l.differentiate(var);
                let dr = r.differentiate(var);
                match op {
                    BinOp::Add => s_add(dl, dr),
                    BinOp::Sub => s_sub(dl, dr),
                    // (f g)' = f' g + f g'
                    BinOp::Mul => s_add(
                        s_mul(dl, r.as_ref().clone()),
                        s_mul(l.as_ref().clone(), dr),
                    ),
                    // (f/g)' = (f' g - f g') / g^2
                    BinOp::Div => s_div(
                        s_sub(
                            s_mul(dl, r.as_ref().clone()),
                            s_mul(l.as_ref().clone(), dr),
                        ),
                        s_pow(r.as_ref().clone(), Expr::Constant(2.0)),
                    ),
                    BinOp::Pow => diff_pow(l, r, dl, dr),
                }
            }
            Expr::Neg(e) => s_neg(e.differentiate(var)),
            Expr::Call(f, a) => {
                let da = a.differentiate(var);
                let a = a.as_ref().clone();
                match f {
                    Func::Sin => s_mul(call(Func::Cos, a), da),
                    Func::Cos => s_neg(s_mul(call(Func::Sin, a), da)),
                    Func::Tan => s_div(da, s_pow(call(Func::Cos, a), Expr::Constant(2.0))),
                    Func::Atan => s_div(
                        da,
                        s_add(
                            Expr::Constant(1.0),
                            s_pow(a, Expr::Constant(2.0)),
                        ),
                    ),
                    Func::Exp => s_mul(call(Func::Exp, a), da),
                    Func::Ln => s_div(da, a),
                    Func::Sqrt => s_div(
                        da,
                        s_mul(Expr::Constant(2.0), call(Func::Sqrt, a)),
                    ),
                    Func::Tanh => s_mul(
                        s_sub(
                            Expr::Constant(1.0),
                            s_pow(call(Func::Tanh, a.clone()), Expr::Constant(2.0)),
                        ),
                        da,
                    ),
                    // d|a| = a/|a| * da; undefined at a = 0 and the
                    // evaluation error there is intentional
                    Func::Abs => s_mul(s_div(a.clone(), call(Func::Abs, a)), da),
                }
            }
        }
    }

    /// Constant folding plus identity elimination.
    ///
    /// Rewrites `e+0`, `0+e`, `e-0`, `0-e`, `e*1`, `1*e`, `e*0`, `0*e`,
    /// `e/1`, `0/e`, `e^1`, `e^0`, double negation, and folds operations on
    /// constants when the result is finite. Evaluation agrees with the
    /// original wherever both are defined.
    pub fn simplify(&self) -> Expr {
        match self {
            Expr::Constant(_) | Expr::Var(_) => self.clone(),
            Expr::BinOp(op, l, r) => {
                let l = l.simplify();
                let r = r.simplify();
                match op {
                    BinOp::Add => s_add(l, r),
                    BinOp::Sub => s_sub(l, r),
                    BinOp::Mul => s_mul(l, r),
                    BinOp::Div => s_div(l, r),
                    BinOp::Pow => s_pow(l, r),
                }
            }
            Expr::Neg(e) => s_neg(e.simplify()),
            Expr::Call(f, a) => s_call(*f, a.simplify()),
        }
    }

    /// The exact set of variable names occurring in the tree.
    pub fn free_variables(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Constant(_) => {}
            Expr::Var(name) => {
                out.insert(name.clone());
            }
            Expr::BinOp(_, l, r) => {
                l.collect_vars(out);
                r.collect_vars(out);
            }
            Expr::Neg(e) => e.collect_vars(out),
            Expr::Call(_, a) => a.collect_vars(out),
        }
    }

    /// Replace every occurrence of the variable `name` by `replacement`.
    pub fn substitute(&self, name: &str, replacement: &Expr) -> Expr {
        match self {
            Expr::Constant(_) => self.clone(),
            Expr::Var(v) => {
                if v == name {
                    replacement.clone()
                } else {
                    self.clone()
                }
            }
            Expr::BinOp(op, l, r) => Expr::BinOp(
                *op,
                Box::new(l.substitute(name, replacement)),
                Box::new(r.substitute(name, replacement)),
            ),
            Expr::Neg(e) => Expr::Neg(Box::new(e.substitute(name, replacement))),
            Expr::Call(f, a) => Expr::Call(*f, Box::new(a.substitute(name, replacement))),
        }
    }
}

/// d(l^r). Splits on constant exponent / constant base to avoid introducing
/// `ln` where the power rule suffices.
fn diff_pow(l: &Expr, r: &Expr, dl: Expr, dr: Expr) -> Expr {
    let base = l.clone();
    let exp = r.clone();
    if let Expr::Constant(c) = r {
        // r constant: c * l^(c-1) * l'
        return s_mul(
            s_mul(
                Expr::Constant(*c),
                s_pow(base, Expr::Constant(c - 1.0)),
            ),
            dl,
        );
    }
    if let Expr::Constant(c) = l {
        // l constant: l^r * ln(c) * r'
        return s_mul(
            s_mul(s_pow(base, exp), Expr::Constant(c.ln())),
            dr,
        );
    }
    // general: l^r * (r' ln l + r l'/l)
    s_mul(
        s_pow(base.clone(), exp.clone()),
        s_add(
            s_mul(dr, call(Func::Ln, base.clone())),
            s_mul(exp, s_div(dl, base)),
        ),
    )
}

fn is_zero(e: &Expr) -> bool {
    matches!(e, Expr::Constant(c) if *c == 0.0)
}

fn is_one(e: &Expr) -> bool {
    matches!(e, Expr::Constant(c) if *c == 1.0)
}

fn fold(raw: Expr, value: f64) -> Expr {
    if value.is_finite() {
        Expr::Constant(value)
    } else {
        raw
    }
}

fn s_add(l: Expr, r: Expr) -> Expr {
    if let (Expr::Constant(a), Expr::Constant(b)) = (&l, &r) {
        let v = a + b;
        return fold(Expr::BinOp(BinOp::Add, Box::new(l.clone()), Box::new(r.clone())), v);
    }
    if is_zero(&l) {
        return r;
    }
    if is_zero(&r) {
        return l;
    }
    Expr::BinOp(BinOp::Add, Box::new(l), Box::new(r))
}

fn s_sub(l: Expr, r: Expr) -> Expr {
    if let (Expr::Constant(a), Expr::Constant(b)) = (&l, &r) {
        let v = a - b;
        return fold(Expr::BinOp(BinOp::Sub, Box::new(l.clone()), Box::new(r.clone())), v);
    }
    if is_zero(&r) {
        return l;
    }
    if is_zero(&l) {
        return s_neg(r);
    }
    Expr::BinOp(BinOp::Sub, Box::new(l), Box::new(r))
}

fn s_mul(l: Expr, r: Expr) -> Expr {
    if let (Expr::Constant(a), Expr::Constant(b)) = (&l, &r) {
        let v = a * b;
        return fold(Expr::BinOp(BinOp::Mul, Box::new(l.clone()), Box::new(r.clone())), v);
    }
    if is_zero(&l) || is_zero(&r) {
        return Expr::Constant(0.0);
    }
    if is_one(&l) {
        return r;
    }
    if is_one(&r) {
        return l;
    }
    Expr::BinOp(BinOp::Mul, Box::new(l), Box::new(r))
}

fn s_div(l: Expr, r: Expr) -> Expr {
    if let (Expr::Constant(a), Expr::Constant(b)) = (&l, &r) {
        let v = a / b;
        return fold(Expr::BinOp(BinOp::Div, Box::new(l.clone()), Box::new(r.clone())), v);
    }
    if is_zero(&l) {
        return Expr::Constant(0.0);
    }
    if is_one(&r) {
        return l;
    }
    Expr::BinOp(BinOp::Div, Box::new(l), Box::new(r))
}

fn s_pow(l: Expr, r: Expr) -> Expr {
    if let (Expr::Constant(a), Expr::Constant(b)) = (&l, &r) {
        let v = a.powf(*b);
        return fold(Expr::BinOp(BinOp::Pow, Box::new(l.clone()), Box::new(r.clone())), v);
    }
    if is_one(&r) {
        return l;
    }
    if is_zero(&r) {
        return Expr::Constant(1.0);
    }
    Expr::BinOp(BinOp::Pow, Box::new(l), Box::new(r))
}

fn s_neg(e: Expr) -> Expr {
    match e {
        Expr::Constant(c) => Expr::Constant(-c),
        Expr::Neg(inner) => *inner,
        other => Expr::Neg(Box::new(other)),
    }
}

fn s_call(f: Func, a: Expr) -> Expr {
    if let Expr::Constant(c) = &a {
        let v = f.apply(*c);
        return fold(Expr::Call(f, Box::new(a.clone())), v);
    }
    call(f, a)
}

fn call(f: Func, a: Expr) -> Expr {
    Expr::Call(f, Box::new(a))
}

// Precedence levels used by the printer; mirror the grammar.
const PREC_ADD: u8 = 1;
const PREC_MUL: u8 = 2;
const PREC_NEG: u8 = 3;
const PREC_POW: u8 = 4;
const PREC_ATOM: u8 = 5;

fn precedence(e: &Expr) -> u8 {
    match e {
        // A negative literal prints with a leading minus, so it binds like
        // unary negation for parenthesization purposes.
        Expr::Constant(c) if c.is_sign_negative() => PREC_NEG,
        Expr::Constant(_) | Expr::Var(_) | Expr::Call(..) => PREC_ATOM,
        Expr::Neg(_) => PREC_NEG,
        Expr::BinOp(BinOp::Add | BinOp::Sub, ..) => PREC_ADD,
        Expr::BinOp(BinOp::Mul | BinOp::Div, ..) => PREC_MUL,
        Expr::BinOp(BinOp::Pow, ..) => PREC_POW,
    }
}

fn write_child(f: &mut fmt::Formatter<'_>, child: &Expr, needs_parens: bool) -> fmt::Result {
    if needs_parens {
        write!(f, "({child})")
    } else {
        write!(f, "{child}")
    }
}

impl fmt::Display for Expr {
    /// Prints with minimal-but-safe parentheses: any finite-valued tree
    /// re-parses to an evaluation-equivalent tree, and parser output
    /// re-parses to a structurally equal tree.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Constant(c) => write!(f, "{c:?}"),
            Expr::Var(name) => write!(f, "{name}"),
            Expr::Call(func, a) => write!(f, "{}({})", func.name(), a),
            Expr::Neg(e) => {
                write!(f, "-")?;
                write_child(f, e, precedence(e) < PREC_NEG || matches!(**e, Expr::Neg(_)))
            }
            Expr::BinOp(op, l, r) => {
                let prec = precedence(self);
                match op {
                    BinOp::Pow => {
                        // right-associative: parenthesize a left child at or
                        // below our level, a right child strictly below
                        write_child(f, l, precedence(l) <= prec)?;
                        write!(f, "^")?;
                        write_child(f, r, precedence(r) < prec)
                    }
                    _ => {
                        // left-associative: the right child needs parens even
                        // at equal precedence
                        write_child(f, l, precedence(l) < prec)?;
                        write!(f, " {} ", op.symbol())?;
                        write_child(f, r, precedence(r) <= prec)
                    }
                }
            }
        }
    }
}

impl std::ops::Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        Expr::BinOp(BinOp::Add, Box::new(self), Box::new(rhs))
    }
}

impl std::ops::Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        Expr::BinOp(BinOp::Sub, Box::new(self), Box::new(rhs))
    }
}

impl std::ops::Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        Expr::BinOp(BinOp::Mul, Box::new(self), Box::new(rhs))
    }
}

impl std::ops::Div for Expr {
    type Output = Expr;
    fn div(self, rhs: Expr) -> Expr {
        Expr::BinOp(BinOp::Div, Box::new(self), Box::new(rhs))
    }
}

impl std::ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::Neg(Box::new(self))
    }
}

impl From<f64> for Expr {
    fn from(value: f64) -> Expr {
        Expr::Constant(value)
    }
}

#[cfg(test)]
mod tests;
