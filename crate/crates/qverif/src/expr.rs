//! Symbolic real and complex terms, constraints, and their SMT-LIB2 text.
//!
//! Terms are immutable trees behind `Arc`, so cloning is cheap and sharing a
//! subterm between many constraints costs nothing.

use std::collections::BTreeSet;
use std::fmt::{self, Write as _};
use std::ops;
use std::sync::Arc;

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("undeclared variable `{0}`")]
    UndeclaredVariable(String),
    #[error("unbound variable `{0}` during evaluation")]
    Unbound(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Var(Arc<str>),
    Const(f64),
    Pi,
    Add(RealTerm, RealTerm),
    Sub(RealTerm, RealTerm),
    Mul(RealTerm, RealTerm),
    Neg(RealTerm),
    Div(RealTerm, RealTerm),
    Pow(RealTerm, RealTerm),
    Sin(RealTerm),
    Cos(RealTerm),
}

/// A real-valued term tree.
#[derive(Clone, PartialEq)]
pub struct RealTerm(Arc<Node>);

impl fmt::Debug for RealTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_smt())
    }
}

impl fmt::Display for RealTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_smt())
    }
}

impl RealTerm {
    pub fn from_node(node: Node) -> Self {
        RealTerm(Arc::new(node))
    }

    pub fn var(name: impl AsRef<str>) -> Self {
        Self::from_node(Node::Var(Arc::from(name.as_ref())))
    }

    pub fn constant(v: f64) -> Self {
        assert!(v.is_finite(), "non-finite constant {v}");
        Self::from_node(Node::Const(v))
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn one() -> Self {
        Self::constant(1.0)
    }

    pub fn pi() -> Self {
        Self::from_node(Node::Pi)
    }

    pub fn node(&self) -> &Node {
        &self.0
    }

    /// Division by a nonzero constant; the only division the encodings need.
    pub fn div_const(self, den: f64) -> Self {
        assert!(den != 0.0 && den.is_finite(), "division by {den}");
        Self::from_node(Node::Div(self, Self::constant(den)))
    }

    pub fn pow(self, exp: RealTerm) -> Self {
        Self::from_node(Node::Pow(self, exp))
    }

    pub fn sin(self) -> Self {
        Self::from_node(Node::Sin(self))
    }

    pub fn cos(self) -> Self {
        Self::from_node(Node::Cos(self))
    }

    pub fn as_const(&self) -> Option<f64> {
        match self.node() {
            Node::Const(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_var(&self) -> Option<&str> {
        match self.node() {
            Node::Var(v) => Some(v),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_const() == Some(0.0)
    }

    pub fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self.node() {
            Node::Var(v) => {
                out.insert(v.to_string());
            }
            Node::Const(_) | Node::Pi => {}
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) | Node::Pow(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Node::Neg(a) | Node::Sin(a) | Node::Cos(a) => a.collect_vars(out),
        }
    }

    pub fn vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    pub fn has_trig(&self) -> bool {
        match self.node() {
            Node::Sin(_) | Node::Cos(_) => true,
            Node::Var(_) | Node::Const(_) | Node::Pi => false,
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) | Node::Pow(a, b) => {
                a.has_trig() || b.has_trig()
            }
            Node::Neg(a) => a.has_trig(),
        }
    }

    pub fn count_trig(&self) -> usize {
        match self.node() {
            Node::Sin(a) | Node::Cos(a) => 1 + a.count_trig(),
            Node::Var(_) | Node::Const(_) | Node::Pi => 0,
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) | Node::Pow(a, b) => {
                a.count_trig() + b.count_trig()
            }
            Node::Neg(a) => a.count_trig(),
        }
    }

    pub fn eval(&self, env: &dyn Fn(&str) -> Option<f64>) -> Result<f64, ExprError> {
        Ok(match self.node() {
            Node::Var(v) => env(v).ok_or_else(|| ExprError::Unbound(v.to_string()))?,
            Node::Const(c) => *c,
            Node::Pi => std::f64::consts::PI,
            Node::Add(a, b) => a.eval(env)? + b.eval(env)?,
            Node::Sub(a, b) => a.eval(env)? - b.eval(env)?,
            Node::Mul(a, b) => a.eval(env)? * b.eval(env)?,
            Node::Neg(a) => -a.eval(env)?,
            Node::Div(a, b) => a.eval(env)? / b.eval(env)?,
            Node::Pow(a, b) => a.eval(env)?.powf(b.eval(env)?),
            Node::Sin(a) => a.eval(env)?.sin(),
            Node::Cos(a) => a.eval(env)?.cos(),
        })
    }

    /// Evaluate a closed term.
    pub fn eval_closed(&self) -> Result<f64, ExprError> {
        self.eval(&|_| None)
    }

    /// Replace variables by terms; unmapped variables are kept.
    pub fn substitute(&self, map: &dyn Fn(&str) -> Option<RealTerm>) -> RealTerm {
        match self.node() {
            Node::Var(v) => map(v).unwrap_or_else(|| self.clone()),
            Node::Const(_) | Node::Pi => self.clone(),
            Node::Add(a, b) => Self::from_node(Node::Add(a.substitute(map), b.substitute(map))),
            Node::Sub(a, b) => Self::from_node(Node::Sub(a.substitute(map), b.substitute(map))),
            Node::Mul(a, b) => Self::from_node(Node::Mul(a.substitute(map), b.substitute(map))),
            Node::Div(a, b) => Self::from_node(Node::Div(a.substitute(map), b.substitute(map))),
            Node::Pow(a, b) => Self::from_node(Node::Pow(a.substitute(map), b.substitute(map))),
            Node::Neg(a) => Self::from_node(Node::Neg(a.substitute(map))),
            Node::Sin(a) => Self::from_node(Node::Sin(a.substitute(map))),
            Node::Cos(a) => Self::from_node(Node::Cos(a.substitute(map))),
        }
    }

    pub fn to_smt(&self) -> String {
        let mut s = String::new();
        self.write_smt(&mut s);
        s
    }

    pub fn write_smt(&self, out: &mut String) {
        let bin = |out: &mut String, op: &str, a: &RealTerm, b: &RealTerm| {
            out.push('(');
            out.push_str(op);
            out.push(' ');
            a.write_smt(out);
            out.push(' ');
            b.write_smt(out);
            out.push(')');
        };
        let un = |out: &mut String, op: &str, a: &RealTerm| {
            out.push('(');
            out.push_str(op);
            out.push(' ');
            a.write_smt(out);
            out.push(')');
        };
        match self.node() {
            Node::Var(v) => out.push_str(v),
            Node::Const(c) => write_const(out, *c),
            Node::Pi => write_const(out, std::f64::consts::PI),
            Node::Add(a, b) => bin(out, "+", a, b),
            Node::Sub(a, b) => bin(out, "-", a, b),
            Node::Mul(a, b) => bin(out, "*", a, b),
            Node::Div(a, b) => bin(out, "/", a, b),
            Node::Pow(a, b) => bin(out, "^", a, b),
            Node::Neg(a) => un(out, "-", a),
            Node::Sin(a) => un(out, "sin", a),
            Node::Cos(a) => un(out, "cos", a),
        }
    }
}

fn write_const(out: &mut String, c: f64) {
    if c < 0.0 {
        out.push_str("(- ");
        out.push_str(&format_decimal(-c));
        out.push(')');
    } else {
        out.push_str(&format_decimal(c));
    }
}

/// Plain decimal with 17 significant digits, trailing zeros trimmed, always
/// carrying a fractional part (`1.0`, `0.5`, `0.70710678118654757`).
pub fn format_decimal(v: f64) -> String {
    assert!(v.is_finite() && v >= 0.0);
    if v == 0.0 {
        return "0.0".to_string();
    }
    let sci = format!("{:.16e}", v);
    let (mant, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    let digits: String = mant.chars().filter(|c| c.is_ascii_digit()).collect();
    // value = 0.d1d2...d17 * 10^(exp+1)
    let point = exp + 1;
    let (int_part, frac_part) = if point <= 0 {
        ("0".to_string(), format!("{}{}", "0".repeat((-point) as usize), digits))
    } else if point as usize >= digits.len() {
        (format!("{}{}", digits, "0".repeat(point as usize - digits.len())), String::new())
    } else {
        (digits[..point as usize].to_string(), digits[point as usize..].to_string())
    };
    let frac = frac_part.trim_end_matches('0');
    let int = int_part.trim_start_matches('0');
    let int = if int.is_empty() { "0" } else { int };
    if frac.is_empty() {
        format!("{int}.0")
    } else {
        format!("{int}.{frac}")
    }
}

impl ops::Add for RealTerm {
    type Output = RealTerm;
    fn add(self, rhs: RealTerm) -> RealTerm {
        RealTerm::from_node(Node::Add(self, rhs))
    }
}

impl ops::Sub for RealTerm {
    type Output = RealTerm;
    fn sub(self, rhs: RealTerm) -> RealTerm {
        RealTerm::from_node(Node::Sub(self, rhs))
    }
}

impl ops::Mul for RealTerm {
    type Output = RealTerm;
    fn mul(self, rhs: RealTerm) -> RealTerm {
        RealTerm::from_node(Node::Mul(self, rhs))
    }
}

impl ops::Neg for RealTerm {
    type Output = RealTerm;
    fn neg(self) -> RealTerm {
        RealTerm::from_node(Node::Neg(self))
    }
}

impl From<f64> for RealTerm {
    fn from(v: f64) -> Self {
        RealTerm::constant(v)
    }
}

/// Constant folding: evaluates closed arithmetic, applies the identities
/// 0·x = 0, 1·x = x, x+0 = x, and leaves sin/cos of non-special angles alone.
pub fn fold_constants(t: &RealTerm) -> RealTerm {
    use Node::*;
    let c = RealTerm::constant;
    match t.node() {
        Var(_) | Const(_) | Pi => t.clone(),
        Add(a, b) => {
            let (a, b) = (fold_constants(a), fold_constants(b));
            match (a.as_const(), b.as_const()) {
                (Some(x), Some(y)) => c(x + y),
                (Some(x), _) if x == 0.0 => b,
                (_, Some(y)) if y == 0.0 => a,
                _ => a + b,
            }
        }
        Sub(a, b) => {
            let (a, b) = (fold_constants(a), fold_constants(b));
            match (a.as_const(), b.as_const()) {
                (Some(x), Some(y)) => c(x - y),
                (_, Some(y)) if y == 0.0 => a,
                (Some(x), _) if x == 0.0 => fold_neg(b),
                _ => a - b,
            }
        }
        Mul(a, b) => {
            let (a, b) = (fold_constants(a), fold_constants(b));
            match (a.as_const(), b.as_const()) {
                (Some(x), Some(y)) => c(x * y),
                (Some(x), _) | (_, Some(x)) if x == 0.0 => c(0.0),
                (Some(x), _) if x == 1.0 => b,
                (_, Some(y)) if y == 1.0 => a,
                (Some(x), _) if x == -1.0 => fold_neg(b),
                (_, Some(y)) if y == -1.0 => fold_neg(a),
                _ => a * b,
            }
        }
        Neg(a) => fold_neg(fold_constants(a)),
        Div(a, b) => {
            let (a, b) = (fold_constants(a), fold_constants(b));
            match (a.as_const(), b.as_const()) {
                (Some(x), Some(y)) if y != 0.0 => c(x / y),
                (Some(x), _) if x == 0.0 => c(0.0),
                (_, Some(y)) if y == 1.0 => a,
                _ => RealTerm::from_node(Div(a, b)),
            }
        }
        Pow(a, b) => {
            let (a, b) = (fold_constants(a), fold_constants(b));
            match (a.as_const(), b.as_const()) {
                (Some(x), Some(y)) => c(x.powf(y)),
                (_, Some(y)) if y == 1.0 => a,
                (_, Some(y)) if y == 0.0 => c(1.0),
                _ => a.pow(b),
            }
        }
        Sin(a) => {
            let a = fold_constants(a);
            match a.as_const() {
                Some(x) if x == 0.0 => c(0.0),
                _ => a.sin(),
            }
        }
        Cos(a) => {
            let a = fold_constants(a);
            match a.as_const() {
                Some(x) if x == 0.0 => c(1.0),
                _ => a.cos(),
            }
        }
    }
}

fn fold_neg(a: RealTerm) -> RealTerm {
    match a.node() {
        Node::Const(x) => RealTerm::constant(-x),
        Node::Neg(inner) => inner.clone(),
        _ => -a,
    }
}

/// A complex number as a pair of real terms.
#[derive(Clone, PartialEq, Debug)]
pub struct ComplexTerm {
    pub re: RealTerm,
    pub im: RealTerm,
}

impl ComplexTerm {
    pub fn new(re: RealTerm, im: RealTerm) -> Self {
        ComplexTerm { re, im }
    }

    pub fn real(re: RealTerm) -> Self {
        ComplexTerm { re, im: RealTerm::zero() }
    }

    pub fn constant(c: Complex64) -> Self {
        ComplexTerm::new(RealTerm::constant(c.re), RealTerm::constant(c.im))
    }

    pub fn zero() -> Self {
        Self::constant(Complex64::new(0.0, 0.0))
    }

    pub fn one() -> Self {
        Self::constant(Complex64::new(1.0, 0.0))
    }

    /// e^{iφ} expanded to (cos φ, sin φ).
    pub fn expi(phi: RealTerm) -> Self {
        ComplexTerm::new(phi.clone().cos(), phi.sin())
    }

    pub fn scale(&self, k: RealTerm) -> Self {
        ComplexTerm::new(k.clone() * self.re.clone(), k * self.im.clone())
    }

    pub fn conj(&self) -> Self {
        ComplexTerm::new(self.re.clone(), -self.im.clone())
    }

    pub fn norm_sqr(&self) -> RealTerm {
        self.re.clone() * self.re.clone() + self.im.clone() * self.im.clone()
    }

    pub fn fold(&self) -> Self {
        ComplexTerm::new(fold_constants(&self.re), fold_constants(&self.im))
    }

    pub fn as_const(&self) -> Option<Complex64> {
        Some(Complex64::new(self.re.as_const()?, self.im.as_const()?))
    }

    pub fn eval(&self, env: &dyn Fn(&str) -> Option<f64>) -> Result<Complex64, ExprError> {
        Ok(Complex64::new(self.re.eval(env)?, self.im.eval(env)?))
    }
}

/// (a.re·b.re − a.im·b.im, a.im·b.re + a.re·b.im), built without evaluation.
/// The imaginary part keeps the term order of the hand-written product rows.
pub fn complex_mul(a: &ComplexTerm, b: &ComplexTerm) -> ComplexTerm {
    ComplexTerm::new(
        a.re.clone() * b.re.clone() - a.im.clone() * b.im.clone(),
        a.im.clone() * b.re.clone() + a.re.clone() * b.im.clone(),
    )
}

/// Like [`complex_mul`] but drops products with a literal zero factor, so the
/// emitted rows stay as short as the hand-written ones.
pub fn complex_mul_folded(a: &ComplexTerm, b: &ComplexTerm) -> ComplexTerm {
    complex_mul(a, b).fold()
}

impl ops::Add for ComplexTerm {
    type Output = ComplexTerm;
    fn add(self, rhs: ComplexTerm) -> ComplexTerm {
        ComplexTerm::new(self.re + rhs.re, self.im + rhs.im)
    }
}

impl ops::Sub for ComplexTerm {
    type Output = ComplexTerm;
    fn sub(self, rhs: ComplexTerm) -> ComplexTerm {
        ComplexTerm::new(self.re - rhs.re, self.im - rhs.im)
    }
}

impl ops::Neg for ComplexTerm {
    type Output = ComplexTerm;
    fn neg(self) -> ComplexTerm {
        ComplexTerm::new(-self.re, -self.im)
    }
}

impl ops::Mul for ComplexTerm {
    type Output = ComplexTerm;
    fn mul(self, rhs: ComplexTerm) -> ComplexTerm {
        complex_mul(&self, &rhs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum CmpOp {
    Eq,
    Le,
    Lt,
    Ge,
    Gt,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Le => "<=",
            CmpOp::Lt => "<",
            CmpOp::Ge => ">=",
            CmpOp::Gt => ">",
        }
    }

    pub fn holds(self, a: f64, b: f64) -> bool {
        match self {
            CmpOp::Eq => a == b,
            CmpOp::Le => a <= b,
            CmpOp::Lt => a < b,
            CmpOp::Ge => a >= b,
            CmpOp::Gt => a > b,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Constraint {
    True,
    False,
    Cmp(CmpOp, RealTerm, RealTerm),
    And(Vec<Constraint>),
    Or(Vec<Constraint>),
    Not(Box<Constraint>),
    Implies(Box<Constraint>, Box<Constraint>),
}

impl Constraint {
    pub fn eq(a: impl Into<RealTerm>, b: impl Into<RealTerm>) -> Self {
        Constraint::Cmp(CmpOp::Eq, a.into(), b.into())
    }
    pub fn le(a: impl Into<RealTerm>, b: impl Into<RealTerm>) -> Self {
        Constraint::Cmp(CmpOp::Le, a.into(), b.into())
    }
    pub fn lt(a: impl Into<RealTerm>, b: impl Into<RealTerm>) -> Self {
        Constraint::Cmp(CmpOp::Lt, a.into(), b.into())
    }
    pub fn ge(a: impl Into<RealTerm>, b: impl Into<RealTerm>) -> Self {
        Constraint::Cmp(CmpOp::Ge, a.into(), b.into())
    }
    pub fn gt(a: impl Into<RealTerm>, b: impl Into<RealTerm>) -> Self {
        Constraint::Cmp(CmpOp::Gt, a.into(), b.into())
    }
    pub fn not(c: Constraint) -> Self {
        Constraint::Not(Box::new(c))
    }
    pub fn implies(a: Constraint, b: Constraint) -> Self {
        Constraint::Implies(Box::new(a), Box::new(b))
    }

    /// Componentwise equality of two complex terms.
    pub fn complex_eq(a: &ComplexTerm, b: &ComplexTerm) -> Self {
        Constraint::And(vec![
            Constraint::eq(a.re.clone(), b.re.clone()),
            Constraint::eq(a.im.clone(), b.im.clone()),
        ])
    }

    /// Nested And/Or collapsed into single n-ary nodes.
    pub fn flatten(&self) -> Constraint {
        match self {
            Constraint::And(cs) => {
                let mut out = Vec::new();
                for c in cs {
                    match c.flatten() {
                        Constraint::And(inner) => out.extend(inner),
                        other => out.push(other),
                    }
                }
                Constraint::And(out)
            }
            Constraint::Or(cs) => {
                let mut out = Vec::new();
                for c in cs {
                    match c.flatten() {
                        Constraint::Or(inner) => out.extend(inner),
                        other => out.push(other),
                    }
                }
                Constraint::Or(out)
            }
            Constraint::Not(c) => Constraint::not(c.flatten()),
            Constraint::Implies(a, b) => Constraint::implies(a.flatten(), b.flatten()),
            other => other.clone(),
        }
    }

    pub fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Constraint::True | Constraint::False => {}
            Constraint::Cmp(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Constraint::And(cs) | Constraint::Or(cs) => cs.iter().for_each(|c| c.collect_vars(out)),
            Constraint::Not(c) => c.collect_vars(out),
            Constraint::Implies(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    pub fn vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    pub fn count_trig(&self) -> usize {
        match self {
            Constraint::True | Constraint::False => 0,
            Constraint::Cmp(_, a, b) => a.count_trig() + b.count_trig(),
            Constraint::And(cs) | Constraint::Or(cs) => cs.iter().map(|c| c.count_trig()).sum(),
            Constraint::Not(c) => c.count_trig(),
            Constraint::Implies(a, b) => a.count_trig() + b.count_trig(),
        }
    }

    /// Number of comparison atoms.
    pub fn atom_count(&self) -> usize {
        match self {
            Constraint::True | Constraint::False => 0,
            Constraint::Cmp(..) => 1,
            Constraint::And(cs) | Constraint::Or(cs) => cs.iter().map(|c| c.atom_count()).sum(),
            Constraint::Not(c) => c.atom_count(),
            Constraint::Implies(a, b) => a.atom_count() + b.atom_count(),
        }
    }

    /// Exact boolean evaluation at a point.
    pub fn holds(&self, env: &dyn Fn(&str) -> Option<f64>) -> Result<bool, ExprError> {
        Ok(match self {
            Constraint::True => true,
            Constraint::False => false,
            Constraint::Cmp(op, a, b) => op.holds(a.eval(env)?, b.eval(env)?),
            Constraint::And(cs) => {
                for c in cs {
                    if !c.holds(env)? {
                        return Ok(false);
                    }
                }
                true
            }
            Constraint::Or(cs) => {
                for c in cs {
                    if c.holds(env)? {
                        return Ok(true);
                    }
                }
                false
            }
            Constraint::Not(c) => !c.holds(env)?,
            Constraint::Implies(a, b) => !a.holds(env)? || b.holds(env)?,
        })
    }

    /// Quantitative satisfaction: positive when the constraint holds with
    /// room to spare, negative by how much it is violated. Equalities score
    /// `-|a-b|`.
    pub fn robustness(&self, env: &dyn Fn(&str) -> Option<f64>) -> Result<f64, ExprError> {
        Ok(match self {
            Constraint::True => f64::INFINITY,
            Constraint::False => f64::NEG_INFINITY,
            Constraint::Cmp(op, a, b) => {
                let (x, y) = (a.eval(env)?, b.eval(env)?);
                match op {
                    CmpOp::Eq => -(x - y).abs(),
                    CmpOp::Le | CmpOp::Lt => y - x,
                    CmpOp::Ge | CmpOp::Gt => x - y,
                }
            }
            Constraint::And(cs) => {
                let mut r = f64::INFINITY;
                for c in cs {
                    r = r.min(c.robustness(env)?);
                }
                r
            }
            Constraint::Or(cs) => {
                let mut r = f64::NEG_INFINITY;
                for c in cs {
                    r = r.max(c.robustness(env)?);
                }
                r
            }
            Constraint::Not(c) => -c.robustness(env)?,
            Constraint::Implies(a, b) => (-a.robustness(env)?).max(b.robustness(env)?),
        })
    }

    pub fn write_smt(&self, out: &mut String) {
        let nary = |out: &mut String, op: &str, cs: &[Constraint], empty: &str| {
            if cs.is_empty() {
                out.push_str(empty);
                return;
            }
            if cs.len() == 1 {
                cs[0].write_smt(out);
                return;
            }
            out.push('(');
            out.push_str(op);
            for c in cs {
                out.push(' ');
                c.write_smt(out);
            }
            out.push(')');
        };
        match self {
            Constraint::True => out.push_str("true"),
            Constraint::False => out.push_str("false"),
            Constraint::Cmp(op, a, b) => {
                out.push('(');
                out.push_str(op.symbol());
                out.push(' ');
                a.write_smt(out);
                out.push(' ');
                b.write_smt(out);
                out.push(')');
            }
            Constraint::And(cs) => nary(out, "and", cs, "true"),
            Constraint::Or(cs) => nary(out, "or", cs, "false"),
            Constraint::Not(c) => {
                out.push_str("(not ");
                c.write_smt(out);
                out.push(')');
            }
            Constraint::Implies(a, b) => {
                out.push_str("(=> ");
                a.write_smt(out);
                out.push(' ');
                b.write_smt(out);
                out.push(')');
            }
        }
    }

    pub fn to_smt(&self) -> String {
        let mut s = String::new();
        self.write_smt(&mut s);
        s
    }

    /// Top-level conjuncts after flattening; each becomes one `assert`.
    pub fn conjuncts(&self) -> Vec<Constraint> {
        match self.flatten() {
            Constraint::And(cs) => cs,
            other => vec![other],
        }
    }
}

/// Declarations plus one `(assert …)` per top-level conjunct.
pub fn to_smtlib<S: AsRef<str>>(c: &Constraint, decls: &[S]) -> Result<String, ExprError> {
    let declared: BTreeSet<&str> = decls.iter().map(|d| d.as_ref()).collect();
    if let Some(missing) = c.vars().into_iter().find(|v| !declared.contains(v.as_str())) {
        return Err(ExprError::UndeclaredVariable(missing));
    }
    let mut out = String::new();
    for d in decls {
        let _ = writeln!(out, "(declare-fun {} () Real)", d.as_ref());
    }
    for conj in c.conjuncts() {
        out.push_str("(assert ");
        conj.write_smt(&mut out);
        out.push_str(")\n");
    }
    if out.ends_with('\n') {
        out.pop();
    }
    Ok(out)
}
