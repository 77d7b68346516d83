//! Real terms and negation-normal-form formulas.

use crate::interval::Interval;

#[derive(Debug, Clone, PartialEq)]
pub enum Term {
    Var(usize),
    Const(Interval),
    Add(Vec<Term>),
    /// `a − b − c …`
    Sub(Vec<Term>),
    Neg(Box<Term>),
    Mul(Vec<Term>),
    Div(Box<Term>, Box<Term>),
    Pow(Box<Term>, Box<Term>),
    Sin(Box<Term>),
    Cos(Box<Term>),
}

impl Term {
    pub fn has_trig(&self) -> bool {
        match self {
            Term::Var(_) | Term::Const(_) => false,
            Term::Sin(_) | Term::Cos(_) => true,
            Term::Add(ts) | Term::Sub(ts) | Term::Mul(ts) => ts.iter().any(Term::has_trig),
            Term::Neg(a) => a.has_trig(),
            Term::Div(a, b) | Term::Pow(a, b) => a.has_trig() || b.has_trig(),
        }
    }

    pub fn collect_vars(&self, out: &mut Vec<usize>) {
        match self {
            Term::Var(v) => out.push(*v),
            Term::Const(_) => {}
            Term::Add(ts) | Term::Sub(ts) | Term::Mul(ts) => ts.iter().for_each(|t| t.collect_vars(out)),
            Term::Neg(a) | Term::Sin(a) | Term::Cos(a) => a.collect_vars(out),
            Term::Div(a, b) | Term::Pow(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    /// Interval evaluation with variables looked up in `env`.
    pub fn eval(&self, env: &dyn Fn(usize) -> Interval) -> Interval {
        match self {
            Term::Var(v) => env(*v),
            Term::Const(c) => *c,
            Term::Add(ts) => ts.iter().fold(Interval::point(0.0), |acc, t| acc.add(&t.eval(env))),
            Term::Sub(ts) => {
                let first = ts[0].eval(env);
                if ts.len() == 1 {
                    return first.neg();
                }
                ts[1..].iter().fold(first, |acc, t| acc.sub(&t.eval(env)))
            }
            Term::Neg(a) => a.eval(env).neg(),
            Term::Mul(ts) => ts.iter().fold(Interval::point(1.0), |acc, t| acc.mul(&t.eval(env))),
            Term::Div(a, b) => a.eval(env).div(&b.eval(env)),
            Term::Pow(a, b) => {
                let e = b.eval(env);
                match integer_exponent(&e) {
                    Some(n) => a.eval(env).powi(n),
                    None => Interval::ENTIRE,
                }
            }
            Term::Sin(a) => a.eval(env).sin(),
            Term::Cos(a) => a.eval(env).cos(),
        }
    }
}

pub fn integer_exponent(e: &Interval) -> Option<u32> {
    if e.is_point() && e.lo >= 0.0 && e.lo.fract() == 0.0 && e.lo <= 64.0 {
        Some(e.lo as u32)
    } else {
        None
    }
}

/// `lhs − rhs` compared against zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rel {
    Eq,
    Ge,
    Gt,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lit {
    pub lhs: Term,
    pub rhs: Term,
    pub rel: Rel,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Formula {
    True,
    False,
    Lit(Lit),
    And(Vec<Formula>),
    Or(Vec<Formula>),
}

impl Formula {
    pub fn lit(lhs: Term, rel: Rel, rhs: Term) -> Formula {
        Formula::Lit(Lit { lhs, rhs, rel })
    }

    pub fn and(parts: Vec<Formula>) -> Formula {
        let mut out = Vec::new();
        for p in parts {
            match p {
                Formula::True => {}
                Formula::False => return Formula::False,
                Formula::And(inner) => out.extend(inner),
                other => out.push(other),
            }
        }
        match out.len() {
            0 => Formula::True,
            1 => out.pop().unwrap(),
            _ => Formula::And(out),
        }
    }

    pub fn or(parts: Vec<Formula>) -> Formula {
        let mut out = Vec::new();
        for p in parts {
            match p {
                Formula::False => {}
                Formula::True => return Formula::True,
                Formula::Or(inner) => out.extend(inner),
                other => out.push(other),
            }
        }
        match out.len() {
            0 => Formula::False,
            1 => out.pop().unwrap(),
            _ => Formula::Or(out),
        }
    }

    /// Negation, pushed down to the literals. `¬(a = b)` becomes
    /// `a > b ∨ b > a`.
    pub fn negate(self) -> Formula {
        match self {
            Formula::True => Formula::False,
            Formula::False => Formula::True,
            Formula::Lit(Lit { lhs, rhs, rel }) => match rel {
                Rel::Eq => Formula::or(vec![
                    Formula::lit(lhs.clone(), Rel::Gt, rhs.clone()),
                    Formula::lit(rhs, Rel::Gt, lhs),
                ]),
                Rel::Ge => Formula::lit(rhs, Rel::Gt, lhs),
                Rel::Gt => Formula::lit(rhs, Rel::Ge, lhs),
            },
            Formula::And(fs) => Formula::or(fs.into_iter().map(Formula::negate).collect()),
            Formula::Or(fs) => Formula::and(fs.into_iter().map(Formula::negate).collect()),
        }
    }
}
