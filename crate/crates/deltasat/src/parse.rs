//! SMT-LIB2 front end: declarations and assertions over the reals.

use std::collections::HashMap;

use num::{BigInt, BigRational, ToPrimitive};
use smt2parser::concrete::{Command, Constant, QualIdentifier, SyntaxBuilder, Term as STerm};
use smt2parser::visitors::Identifier;
use smt2parser::CommandStream;

use crate::formula::{Formula, Rel, Term};
use crate::interval::Interval;
use crate::SolveError;

#[derive(Debug, Clone, Default)]
pub struct Problem {
    pub vars: Vec<String>,
    pub asserts: Vec<Formula>,
}

pub fn parse(text: &str) -> Result<Problem, SolveError> {
    let stream = CommandStream::new(text.as_bytes(), SyntaxBuilder, None);
    let mut p = Problem::default();
    let mut index: HashMap<String, usize> = HashMap::new();
    for cmd in stream {
        let cmd = cmd.map_err(|e| SolveError::Parse(e.to_string()))?;
        match cmd {
            Command::DeclareFun { symbol, parameters, sort } if parameters.is_empty() => {
                declare(&mut p, &mut index, symbol.0, &sort)?;
            }
            Command::DeclareConst { symbol, sort } => declare(&mut p, &mut index, symbol.0, &sort)?,
            Command::DeclareFun { symbol, .. } => {
                return Err(SolveError::Unsupported(format!("function symbol {}", symbol.0)));
            }
            Command::Assert { term } => {
                let f = formula(&term, true, &index)?;
                p.asserts.push(f);
            }
            Command::SetLogic { .. }
            | Command::SetInfo { .. }
            | Command::SetOption { .. }
            | Command::CheckSat
            | Command::GetModel
            | Command::Exit => {}
            other => return Err(SolveError::Unsupported(format!("command {other:?}"))),
        }
    }
    Ok(p)
}

fn declare(
    p: &mut Problem,
    index: &mut HashMap<String, usize>,
    name: String,
    sort: &smt2parser::concrete::Sort,
) -> Result<(), SolveError> {
    let sort_name = match sort {
        smt2parser::concrete::Sort::Simple { identifier: Identifier::Simple { symbol } } => symbol.0.as_str(),
        _ => "",
    };
    if sort_name != "Real" && sort_name != "Int" {
        return Err(SolveError::Unsupported(format!("sort of {name}")));
    }
    if index.contains_key(&name) {
        return Err(SolveError::Parse(format!("{name} declared twice")));
    }
    index.insert(name.clone(), p.vars.len());
    p.vars.push(name);
    Ok(())
}

fn head(q: &QualIdentifier) -> &str {
    match q {
        QualIdentifier::Simple { identifier } | QualIdentifier::Sorted { identifier, .. } => match identifier {
            Identifier::Simple { symbol } | Identifier::Indexed { symbol, .. } => symbol.0.as_str(),
        },
    }
}

/// Converts a Boolean term, negating it when `positive` is false.
fn formula(t: &STerm, positive: bool, index: &HashMap<String, usize>) -> Result<Formula, SolveError> {
    let pol = |f: Formula| if positive { f } else { f.negate() };
    match t {
        STerm::QualIdentifier(q) => match head(q) {
            "true" => Ok(pol(Formula::True)),
            "false" => Ok(pol(Formula::False)),
            other => Err(SolveError::Unsupported(format!("Boolean symbol {other}"))),
        },
        STerm::Attributes { term, .. } => formula(term, positive, index),
        STerm::Application { qual_identifier, arguments } => {
            let op = head(qual_identifier);
            let args = arguments;
            match op {
                "not" => {
                    arity(op, args, 1)?;
                    formula(&args[0], !positive, index)
                }
                "and" | "or" => {
                    let parts = args.iter().map(|a| formula(a, positive, index)).collect::<Result<Vec<_>, _>>()?;
                    Ok(if (op == "and") == positive { Formula::and(parts) } else { Formula::or(parts) })
                }
                "=>" => {
                    arity(op, args, 2)?;
                    let f = Formula::or(vec![formula(&args[0], false, index)?, formula(&args[1], true, index)?]);
                    Ok(pol(f))
                }
                "ite" => {
                    arity(op, args, 3)?;
                    let c = formula(&args[0], true, index)?;
                    let nc = formula(&args[0], false, index)?;
                    let a = formula(&args[1], positive, index)?;
                    let b = formula(&args[2], positive, index)?;
                    Ok(Formula::or(vec![Formula::and(vec![c, a]), Formula::and(vec![nc, b])]))
                }
                "=" | "<=" | "<" | ">=" | ">" | "distinct" => {
                    if args.len() < 2 {
                        return Err(SolveError::Parse(format!("{op} needs two arguments")));
                    }
                    let terms = args.iter().map(|a| term(a, index)).collect::<Result<Vec<_>, _>>()?;
                    let mut chain = Vec::new();
                    for w in terms.windows(2) {
                        let (a, b) = (w[0].clone(), w[1].clone());
                        chain.push(match op {
                            "=" => Formula::lit(a, Rel::Eq, b),
                            "distinct" => Formula::lit(a, Rel::Eq, b).negate(),
                            "<=" => Formula::lit(b, Rel::Ge, a),
                            "<" => Formula::lit(b, Rel::Gt, a),
                            ">=" => Formula::lit(a, Rel::Ge, b),
                            _ => Formula::lit(a, Rel::Gt, b),
                        });
                    }
                    Ok(pol(Formula::and(chain)))
                }
                other => Err(SolveError::Unsupported(format!("predicate {other}"))),
            }
        }
        other => Err(SolveError::Unsupported(format!("term {other:?}"))),
    }
}

fn arity(op: &str, args: &[STerm], n: usize) -> Result<(), SolveError> {
    if args.len() == n {
        Ok(())
    } else {
        Err(SolveError::Parse(format!("{op} expects {n} arguments, got {}", args.len())))
    }
}

fn term(t: &STerm, index: &HashMap<String, usize>) -> Result<Term, SolveError> {
    match t {
        STerm::Constant(c) => Ok(Term::Const(constant(c)?)),
        STerm::QualIdentifier(q) => {
            let name = head(q);
            if name == "pi" {
                let pi = std::f64::consts::PI;
                return Ok(Term::Const(Interval::new(pi, pi.next_up())));
            }
            if let Some(&v) = index.get(name) {
                return Ok(Term::Var(v));
            }
            match signed_decimal(name) {
                Some(r) => Ok(Term::Const(rational(&r)?)),
                None => Err(SolveError::UndeclaredVariable(name.to_string())),
            }
        }
        STerm::Attributes { term: inner, .. } => term(inner, index),
        STerm::Application { qual_identifier, arguments } => {
            let op = head(qual_identifier);
            let args = arguments.iter().map(|a| term(a, index)).collect::<Result<Vec<_>, _>>()?;
            let mut it = args.into_iter();
            let n = arguments.len();
            Ok(match (op, n) {
                ("+", _) if n >= 1 => Term::Add(it.collect()),
                ("-", 1) => Term::Neg(Box::new(it.next().unwrap())),
                ("-", _) if n >= 2 => Term::Sub(it.collect()),
                ("*", _) if n >= 1 => Term::Mul(it.collect()),
                ("/", _) if n >= 2 => {
                    let first = it.next().unwrap();
                    it.fold(first, |acc, d| Term::Div(Box::new(acc), Box::new(d)))
                }
                ("^" | "pow", 2) => Term::Pow(Box::new(it.next().unwrap()), Box::new(it.next().unwrap())),
                ("sin", 1) => Term::Sin(Box::new(it.next().unwrap())),
                ("cos", 1) => Term::Cos(Box::new(it.next().unwrap())),
                _ => return Err(SolveError::Unsupported(format!("function {op}/{n}"))),
            })
        }
        other => Err(SolveError::Unsupported(format!("term {other:?}"))),
    }
}

/// Tightest enclosure of a rational literal.
fn rational(r: &BigRational) -> Result<Interval, SolveError> {
    let f = r.to_f64().filter(|f| f.is_finite()).ok_or_else(|| SolveError::Parse(format!("literal {r} out of range")))?;
    if BigRational::from_float(f).as_ref() == Some(r) {
        return Ok(Interval::point(f));
    }
    let two_down = f.next_down().next_down();
    let two_up = f.next_up().next_up();
    Ok(Interval::new(two_down, two_up))
}

/// Negative literals such as `-0.5`, which the lexer reads as symbols.
fn signed_decimal(s: &str) -> Option<BigRational> {
    let body = s.strip_prefix('-')?;
    let (int, frac) = body.split_once('.').unwrap_or((body, ""));
    if int.is_empty() || !int.bytes().all(|b| b.is_ascii_digit()) || !frac.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let digits: BigInt = format!("{int}{frac}").parse().ok()?;
    let denom = num::pow(BigInt::from(10), frac.len());
    Some(-BigRational::new(digits, denom))
}

fn constant(c: &Constant) -> Result<Interval, SolveError> {
    match c {
        Constant::Numeral(n) => rational(&BigRational::from_integer(BigInt::from(n.clone()))),
        Constant::Decimal(d) => rational(d),
        other => Err(SolveError::Unsupported(format!("constant {other:?}"))),
    }
}
