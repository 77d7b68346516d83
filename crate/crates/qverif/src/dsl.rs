//! Text formats: `.qpm` circuits (one operation per line) and `.qspec`
//! specifications (s-expressions mirroring [`SpecFormula`]).
//!
//! ```text
//! # teleportation
//! qubits 3
//! init 1 2 bell
//! cx 0 1
//! h 0
//! measure 0 1
//! cx 1 2
//! cz 0 2
//! ```
//!
//! ```text
//! (assert (qubit= (q 5 2 *) (q 0 0)))
//! (rule forbid-joint-touch (0) (1 2) 2)
//! ```

use std::collections::BTreeSet;
use std::fmt::Write as _;

use lexpr::Value;
use num_complex::Complex64;
use thiserror::Error;

use crate::expr::{CmpOp, Node, RealTerm};
use crate::qpm::{build_program, GateKind, GateSpec, InitialValuation, ModelError, Param, ProgramModel, StateOp, Valuation};
use crate::spec::{BranchSel, QubitRef, QubitTarget, Role, SpecFormula, SpecTerm, StructuralRule, SymRef};

#[derive(Debug, Error)]
pub enum DslError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn err<T>(line: usize, msg: impl Into<String>) -> Result<T, DslError> {
    Err(DslError::Syntax { line, msg: msg.into() })
}

fn read_all(text: &str) -> Result<Vec<Value>, DslError> {
    let mut parser = lexpr::Parser::from_str(text);
    let mut out = Vec::new();
    loop {
        match parser.next_value() {
            Ok(Some(v)) => out.push(v),
            Ok(None) => return Ok(out),
            Err(e) => {
                let line = e.location().map_or(0, |l| l.line());
                return err(line, e.to_string());
            }
        }
    }
}

fn items(v: &Value) -> Option<Vec<&Value>> {
    v.list_iter().map(|it| it.collect())
}

fn head(v: &Value) -> Option<(&str, Vec<&Value>)> {
    let xs = items(v)?;
    let (h, rest) = xs.split_first()?;
    Some((h.as_symbol()?, rest.to_vec()))
}

fn index(v: &Value, line: usize) -> Result<usize, DslError> {
    match v.as_u64() {
        Some(n) => Ok(n as usize),
        None => err(line, format!("expected a non-negative integer, found {v}")),
    }
}

fn number(v: &Value, line: usize) -> Result<f64, DslError> {
    match v.as_f64() {
        Some(x) => Ok(x),
        None if v.as_symbol() == Some("pi") => Ok(std::f64::consts::PI),
        None => err(line, format!("expected a number, found {v}")),
    }
}

fn real_term(v: &Value, params: &BTreeSet<String>, line: usize) -> Result<RealTerm, DslError> {
    if let Some(x) = v.as_f64() {
        return Ok(RealTerm::constant(x));
    }
    if let Some(s) = v.as_symbol() {
        return if s == "pi" {
            Ok(RealTerm::pi())
        } else if params.contains(s) {
            Ok(RealTerm::var(s))
        } else {
            err(line, format!("unknown parameter `{s}`"))
        };
    }
    let Some((op, args)) = head(v) else { return err(line, format!("bad term {v}")) };
    let args = args.iter().map(|a| real_term(a, params, line)).collect::<Result<Vec<_>, _>>()?;
    let node = |n| RealTerm::from_node(n);
    Ok(match (op, args.as_slice()) {
        ("+", [_, ..]) => args.into_iter().reduce(|a, b| a + b).unwrap(),
        ("*", [_, ..]) => args.into_iter().reduce(|a, b| a * b).unwrap(),
        ("-", [a]) => -a.clone(),
        ("-", [_, _, ..]) => args.into_iter().reduce(|a, b| a - b).unwrap(),
        ("/", [a, b]) => node(Node::Div(a.clone(), b.clone())),
        ("^", [a, b]) => a.clone().pow(b.clone()),
        ("sin", [a]) => a.clone().sin(),
        ("cos", [a]) => a.clone().cos(),
        _ => return err(line, format!("bad term {v}")),
    })
}

fn write_real(t: &RealTerm, out: &mut String) {
    let nary = |op: &str, xs: &[&RealTerm], out: &mut String| {
        let _ = write!(out, "({op}");
        for x in xs {
            out.push(' ');
            write_real(x, out);
        }
        out.push(')');
    };
    match t.node() {
        Node::Var(v) => out.push_str(v),
        Node::Const(c) => {
            let _ = write!(out, "{c:?}");
        }
        Node::Pi => out.push_str("pi"),
        Node::Add(a, b) => nary("+", &[a, b], out),
        Node::Sub(a, b) => nary("-", &[a, b], out),
        Node::Mul(a, b) => nary("*", &[a, b], out),
        Node::Div(a, b) => nary("/", &[a, b], out),
        Node::Pow(a, b) => nary("^", &[a, b], out),
        Node::Neg(a) => nary("-", &[a], out),
        Node::Sin(a) => nary("sin", &[a], out),
        Node::Cos(a) => nary("cos", &[a], out),
    }
}

/// Parses a `.qpm` circuit.
///
/// Directives: `qubits N`, `param NAME [LO HI [open]]`,
/// `init Q.. free | basis B.. | state AR AI BR BI | bell | joint RE IM ..`.
/// Gates: `id x z h q`, `rx T q`, `rz T q`, `rk K q`, `swap a b`, `cx c t`,
/// `cz c t`, `ccx c c t`, `unitary Q.. matrix RE IM ..` (row-major), each
/// optionally followed by `ctrl C..`. Measurement: `measure Q..`. Terms are
/// numbers, `pi`, declared parameters, or s-expressions over
/// `+ - * / ^ sin cos`. `#` starts a comment.
pub fn parse_program(text: &str) -> Result<ProgramModel, DslError> {
    let mut n_qubits = None;
    let mut params: Vec<Param> = Vec::new();
    let mut names = BTreeSet::new();
    let mut init = Vec::new();
    let mut ops = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let parsed = read_all(&format!("({body})")).map_err(|e| match e {
            DslError::Syntax { msg, .. } => DslError::Syntax { line, msg },
            other => other,
        })?;
        let Some(form) = parsed.first() else { continue };
        let Some((word, args)) = head(form) else { return err(line, "expected a directive") };
        match word {
            "qubits" => {
                let [n] = args.as_slice() else { return err(line, "qubits takes one count") };
                n_qubits = Some(index(n, line)?);
            }
            "param" => {
                let Some(name) = args.first().and_then(|a| a.as_symbol()) else {
                    return err(line, "param needs a name");
                };
                let p = match &args[1..] {
                    [] => Param::free(name),
                    [lo, hi] => Param::bounded(name, number(lo, line)?, number(hi, line)?, false),
                    [lo, hi, o] if o.as_symbol() == Some("open") => {
                        Param::bounded(name, number(lo, line)?, number(hi, line)?, true)
                    }
                    _ => return err(line, "param NAME [LO HI [open]]"),
                };
                names.insert(name.to_string());
                params.push(p);
            }
            "init" => init.push(parse_init(&args, line)?),
            "measure" => {
                let qs = args.iter().map(|a| index(a, line)).collect::<Result<Vec<_>, _>>()?;
                ops.push(StateOp::Measure(qs));
            }
            _ => ops.push(StateOp::Gate(parse_gate(word, &args, &names, line)?)),
        }
    }
    let Some(n) = n_qubits else { return err(0, "missing `qubits N`") };
    Ok(build_program(n, ops, params, init)?)
}

fn parse_init(args: &[&Value], line: usize) -> Result<InitialValuation, DslError> {
    let split = args.iter().position(|a| a.as_u64().is_none()).unwrap_or(args.len());
    let qubits = args[..split].iter().map(|a| index(a, line)).collect::<Result<Vec<_>, _>>()?;
    let Some(kind) = args.get(split).and_then(|a| a.as_symbol()) else {
        return err(line, "init Q.. free|basis|state|bell|joint");
    };
    let nums = args[split + 1..].iter().map(|a| number(a, line)).collect::<Result<Vec<_>, _>>()?;
    let single = |v: Valuation| -> Result<InitialValuation, DslError> {
        match qubits.as_slice() {
            [q] => Ok(InitialValuation::single(*q, v)),
            _ => err(line, format!("{kind} applies to one qubit")),
        }
    };
    match kind {
        "free" => single(Valuation::FullHilbert),
        "basis" => {
            if nums.is_empty() || nums.iter().any(|b| *b != 0.0 && *b != 1.0) {
                return err(line, "basis takes bits 0 and/or 1");
            }
            single(Valuation::BasisSet(nums.iter().map(|b| *b as u8).collect()))
        }
        "state" => match nums.as_slice() {
            [ar, ai, br, bi] => single(Valuation::Concrete(Complex64::new(*ar, *ai), Complex64::new(*br, *bi))),
            _ => err(line, "state takes AR AI BR BI"),
        },
        "bell" => match qubits.as_slice() {
            [a, b] if nums.is_empty() => Ok(InitialValuation::bell(*a, *b)),
            _ => err(line, "bell applies to two qubits"),
        },
        "joint" => {
            if nums.len() != 2 << qubits.len() {
                return err(line, format!("joint on {} qubits takes {} numbers", qubits.len(), 2 << qubits.len()));
            }
            let amps = nums.chunks(2).map(|c| Complex64::new(c[0], c[1])).collect();
            Ok(InitialValuation::joint(qubits, amps))
        }
        other => err(line, format!("unknown valuation `{other}`")),
    }
}

fn parse_gate(word: &str, args: &[&Value], names: &BTreeSet<String>, line: usize) -> Result<GateSpec, DslError> {
    let ctrl = args.iter().position(|a| a.as_symbol() == Some("ctrl"));
    let (args, controls) = match ctrl {
        Some(k) => (&args[..k], args[k + 1..].iter().map(|a| index(a, line)).collect::<Result<Vec<_>, _>>()?),
        None => (args, Vec::new()),
    };
    let qs = |xs: &[&Value]| xs.iter().map(|a| index(a, line)).collect::<Result<Vec<_>, _>>();
    let one = |xs: &[&Value]| -> Result<usize, DslError> {
        match xs {
            [q] => index(q, line),
            _ => err(line, format!("{word} takes one qubit")),
        }
    };
    let angle = |f: fn(RealTerm, usize) -> GateSpec| -> Result<GateSpec, DslError> {
        match args {
            [t, q] => Ok(f(real_term(t, names, line)?, index(q, line)?)),
            _ => err(line, format!("{word} takes a term and one qubit")),
        }
    };
    let g = match word {
        "id" => GateSpec::id(one(args)?),
        "x" => GateSpec::x(one(args)?),
        "z" => GateSpec::z(one(args)?),
        "h" => GateSpec::h(one(args)?),
        "rx" => angle(GateSpec::rx)?,
        "rz" => angle(GateSpec::rz)?,
        "rk" => angle(GateSpec::rk)?,
        "swap" | "cx" | "cz" => {
            let v = qs(args)?;
            let [a, b] = v.as_slice() else { return err(line, format!("{word} takes two qubits")) };
            match word {
                "swap" => GateSpec::swap(*a, *b),
                "cx" => GateSpec::cx(*a, *b),
                _ => GateSpec::cz(*a, *b),
            }
        }
        "ccx" => {
            let v = qs(args)?;
            let [a, b, c] = v.as_slice() else { return err(line, "ccx takes three qubits") };
            GateSpec::ccx(*a, *b, *c)
        }
        "unitary" => {
            let Some(m) = args.iter().position(|a| a.as_symbol() == Some("matrix")) else {
                return err(line, "unitary Q.. matrix RE IM ..");
            };
            let targets = qs(&args[..m])?;
            let nums = args[m + 1..].iter().map(|a| number(a, line)).collect::<Result<Vec<_>, _>>()?;
            let dim = 1usize << targets.len();
            if nums.len() != 2 * dim * dim {
                return err(line, format!("a {dim}x{dim} matrix takes {} numbers", 2 * dim * dim));
            }
            let rows: Vec<Vec<Complex64>> = nums
                .chunks(2 * dim)
                .map(|row| row.chunks(2).map(|c| Complex64::new(c[0], c[1])).collect())
                .collect();
            GateSpec::custom_const(&rows, targets)
        }
        other => return err(line, format!("unknown operation `{other}`")),
    };
    Ok(if controls.is_empty() { g } else { g.controlled(controls) })
}

fn write_complex(out: &mut String, c: Complex64) {
    let _ = write!(out, " {:?} {:?}", c.re, c.im);
}

fn write_gate(g: &GateSpec, out: &mut String) {
    let t = &g.targets;
    let list = |xs: &[usize]| xs.iter().map(|q| q.to_string()).collect::<Vec<_>>().join(" ");
    let angle = |name: &str, a: &RealTerm, out: &mut String| {
        let _ = write!(out, "{name} ");
        write_real(a, out);
        let _ = write!(out, " {}", t[0]);
    };
    match &g.kind {
        GateKind::Identity => {
            let _ = write!(out, "id {}", t[0]);
        }
        GateKind::X => {
            let _ = write!(out, "x {}", t[0]);
        }
        GateKind::Z => {
            let _ = write!(out, "z {}", t[0]);
        }
        GateKind::H => {
            let _ = write!(out, "h {}", t[0]);
        }
        GateKind::RX(a) => angle("rx", a, out),
        GateKind::RZ(a) => angle("rz", a, out),
        GateKind::Rk(a) => angle("rk", a, out),
        GateKind::Swap => {
            let _ = write!(out, "swap {}", list(t));
        }
        GateKind::CX => {
            let _ = write!(out, "cx {}", list(t));
        }
        GateKind::CZ => {
            let _ = write!(out, "cz {}", list(t));
        }
        GateKind::CustomMatrix(m) => {
            let _ = write!(out, "unitary {} matrix", list(t));
            for row in m {
                for c in row {
                    let v = c.as_const().expect("only constant matrices have a text form");
                    write_complex(out, v);
                }
            }
        }
        GateKind::Controlled { base, controls } => {
            write_gate(base, out);
            let _ = write!(out, " ctrl {}", list(controls));
        }
    }
}

/// Renders a model in the `.qpm` syntax accepted by [`parse_program`].
pub fn write_program(p: &ProgramModel) -> String {
    let mut out = format!("qubits {}\n", p.n_qubits);
    for prm in &p.params {
        let _ = write!(out, "param {}", prm.name);
        if let (Some(lo), Some(hi)) = (prm.lo, prm.hi) {
            let _ = write!(out, " {lo:?} {hi:?}{}", if prm.hi_open { " open" } else { "" });
        }
        out.push('\n');
    }
    for iv in &p.initial {
        let qs = iv.qubits.iter().map(|q| q.to_string()).collect::<Vec<_>>().join(" ");
        let _ = write!(out, "init {qs} ");
        match &iv.valuation {
            Valuation::FullHilbert => out.push_str("free"),
            Valuation::BasisSet(bs) => {
                out.push_str("basis");
                for b in bs {
                    let _ = write!(out, " {b}");
                }
            }
            Valuation::Concrete(a, b) => {
                out.push_str("state");
                write_complex(&mut out, *a);
                write_complex(&mut out, *b);
            }
            Valuation::Joint(amps) => {
                out.push_str("joint");
                for a in amps {
                    write_complex(&mut out, *a);
                }
            }
        }
        out.push('\n');
    }
    for op in &p.ops {
        match op {
            StateOp::Gate(g) => write_gate(g, &mut out),
            StateOp::Measure(qs) => {
                let _ = write!(out, "measure {}", qs.iter().map(|q| q.to_string()).collect::<Vec<_>>().join(" "));
            }
        }
        out.push('\n');
    }
    out
}

/// A parsed `.qspec` file.
#[derive(Debug, Clone, PartialEq)]
pub struct SpecFile {
    pub formula: SpecFormula,
    pub rules: Vec<StructuralRule>,
}

/// Parses a `.qspec` file: `(assert F)` forms are conjoined; `(rule
/// forbid-joint-touch (A..) (B..) BEFORE)` adds a structural rule.
///
/// Formulas: `true false (and ..) (or ..) (not F) (=> F G) (ite C F G)`,
/// comparisons `= != < <= > >=` over terms, `(qubit= REF TARGET)` and
/// `(qubit!= REF TARGET)`. Terms: numbers, `pi`, parameter names,
/// `(ROLE STATE INDEX [BRANCH])` with ROLE one of `alpha beta_re beta_im
/// phi theta amp_re amp_im`, and `+ - * / sin cos`. A branch is a string of
/// bits such as `"01"` or `*` for every branch. REF is `(q STATE QUBIT
/// [BRANCH])`; TARGET is a REF, `(amps AR AI BR BI)`, or one of `zero one
/// plus minus`.
pub fn parse_spec(text: &str) -> Result<SpecFile, DslError> {
    let mut parts = Vec::new();
    let mut rules = Vec::new();
    for form in read_all(text)? {
        let Some((word, args)) = head(&form) else { return err(0, format!("expected (assert ..) or (rule ..), found {form}")) };
        match (word, args.as_slice()) {
            ("assert", [f]) => parts.push(formula(f)?),
            ("rule", [kind, a, b, before]) if kind.as_symbol() == Some("forbid-joint-touch") => {
                let list = |v: &Value| -> Result<Vec<usize>, DslError> {
                    items(v).ok_or(()).or_else(|_| err(0, format!("expected a qubit list, found {v}")))?.iter().map(|x| index(x, 0)).collect()
                };
                rules.push(StructuralRule::ForbidJointTouch { a: list(a)?, b: list(b)?, before: index(before, 0)? });
            }
            _ => return err(0, format!("unknown form {form}")),
        }
    }
    let formula = match parts.len() {
        0 => SpecFormula::True,
        1 => parts.pop().unwrap(),
        _ => SpecFormula::And(parts),
    };
    Ok(SpecFile { formula, rules })
}

fn branch(v: Option<&&Value>) -> Result<BranchSel, DslError> {
    match v {
        None => Ok(BranchSel::root()),
        Some(v) if v.as_symbol() == Some("*") => Ok(BranchSel::All),
        Some(v) => match v.as_str() {
            Some(s) if s.bytes().all(|b| b == b'0' || b == b'1') => Ok(BranchSel::Label(s.to_string())),
            _ => err(0, format!("expected a branch label like \"01\" or *, found {v}")),
        },
    }
}

fn qubit_ref(v: &Value) -> Result<QubitRef, DslError> {
    match head(v) {
        Some(("q", args)) if (2..=3).contains(&args.len()) => {
            Ok(QubitRef::new(index(args[0], 0)?, index(args[1], 0)?, branch(args.get(2))?))
        }
        _ => err(0, format!("expected (q STATE QUBIT [BRANCH]), found {v}")),
    }
}

fn target(v: &Value) -> Result<QubitTarget, DslError> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let c = |re: f64| Complex64::new(re, 0.0);
    if let Some(s) = v.as_symbol() {
        return Ok(match s {
            "zero" => QubitTarget::constant(c(1.0), c(0.0)),
            "one" => QubitTarget::constant(c(0.0), c(1.0)),
            "plus" => QubitTarget::constant(c(h), c(h)),
            "minus" => QubitTarget::constant(c(h), c(-h)),
            other => return err(0, format!("unknown qubit target `{other}`")),
        });
    }
    match head(v) {
        Some(("amps", args)) if args.len() == 4 => {
            let ts = args.iter().map(|a| spec_term(a)).collect::<Result<Vec<_>, _>>()?;
            Ok(QubitTarget::Amps(ts.try_into().expect("four terms")))
        }
        _ => Ok(QubitTarget::Qubit(qubit_ref(v)?)),
    }
}

fn spec_term(v: &Value) -> Result<SpecTerm, DslError> {
    if let Some(x) = v.as_f64() {
        return Ok(SpecTerm::Const(x));
    }
    if let Some(s) = v.as_symbol() {
        return Ok(if s == "pi" { SpecTerm::Pi } else { SpecTerm::Param(s.to_string()) });
    }
    let Some((op, args)) = head(v) else { return err(0, format!("bad term {v}")) };
    if let Some(role) = Role::parse(op) {
        if !(2..=3).contains(&args.len()) {
            return err(0, format!("({op} STATE INDEX [BRANCH]), found {v}"));
        }
        return Ok(SpecTerm::Ref(SymRef::new(index(args[0], 0)?, index(args[1], 0)?, branch(args.get(2))?, role)));
    }
    let ts = args.iter().map(|a| spec_term(a)).collect::<Result<Vec<_>, _>>()?;
    let b = Box::new;
    Ok(match (op, ts.as_slice()) {
        ("+", [_, ..]) => ts.into_iter().reduce(|a, b| a + b).unwrap(),
        ("*", [_, ..]) => ts.into_iter().reduce(|a, b| a * b).unwrap(),
        ("-", [a]) => SpecTerm::Neg(b(a.clone())),
        ("-", [_, _, ..]) => ts.into_iter().reduce(|a, b| a - b).unwrap(),
        ("/", [x, y]) => SpecTerm::Div(b(x.clone()), b(y.clone())),
        ("sin", [a]) => SpecTerm::Sin(b(a.clone())),
        ("cos", [a]) => SpecTerm::Cos(b(a.clone())),
        _ => return err(0, format!("bad term {v}")),
    })
}

fn formula(v: &Value) -> Result<SpecFormula, DslError> {
    match v.as_symbol() {
        Some("true") => return Ok(SpecFormula::True),
        Some("false") => return Ok(SpecFormula::False),
        _ => {}
    }
    let Some((op, args)) = head(v) else { return err(0, format!("bad formula {v}")) };
    let fs = || args.iter().map(|a| formula(a)).collect::<Result<Vec<_>, _>>();
    let cmp = |op: CmpOp| -> Result<SpecFormula, DslError> {
        match args.as_slice() {
            [a, b] => Ok(SpecFormula::Cmp(op, spec_term(a)?, spec_term(b)?)),
            _ => err(0, format!("comparison takes two terms: {v}")),
        }
    };
    Ok(match (op, args.len()) {
        ("and", _) => SpecFormula::And(fs()?),
        ("or", _) => SpecFormula::Or(fs()?),
        ("not", 1) => SpecFormula::Not(Box::new(formula(args[0])?)),
        ("=>", 2) => SpecFormula::implies(formula(args[0])?, formula(args[1])?),
        ("ite", 3) => SpecFormula::ite(formula(args[0])?, formula(args[1])?, formula(args[2])?),
        ("=", _) => cmp(CmpOp::Eq)?,
        ("<", _) => cmp(CmpOp::Lt)?,
        ("<=", _) => cmp(CmpOp::Le)?,
        (">", _) => cmp(CmpOp::Gt)?,
        (">=", _) => cmp(CmpOp::Ge)?,
        ("!=", 2) => SpecFormula::Ne(spec_term(args[0])?, spec_term(args[1])?),
        ("qubit=", 2) => SpecFormula::QubitEq(qubit_ref(args[0])?, target(args[1])?),
        ("qubit!=", 2) => SpecFormula::QubitNe(qubit_ref(args[0])?, target(args[1])?),
        _ => return err(0, format!("bad formula {v}")),
    })
}

fn write_branch(b: &BranchSel, out: &mut String) {
    match b {
        BranchSel::Label(l) if l.is_empty() => {}
        BranchSel::Label(l) => {
            let _ = write!(out, " \"{l}\"");
        }
        BranchSel::All => out.push_str(" *"),
    }
}

fn write_qubit_ref(r: &QubitRef, out: &mut String) {
    let _ = write!(out, "(q {} {}", r.state, r.qubit);
    write_branch(&r.branch, out);
    out.push(')');
}

fn write_term(t: &SpecTerm, out: &mut String) {
    let nary = |op: &str, xs: &[&SpecTerm], out: &mut String| {
        let _ = write!(out, "({op}");
        for x in xs {
            out.push(' ');
            write_term(x, out);
        }
        out.push(')');
    };
    match t {
        SpecTerm::Ref(r) => {
            let _ = write!(out, "({} {} {}", r.role.name(), r.state, r.index);
            write_branch(&r.branch, out);
            out.push(')');
        }
        SpecTerm::Const(c) => {
            let _ = write!(out, "{c:?}");
        }
        SpecTerm::Pi => out.push_str("pi"),
        SpecTerm::Param(p) => out.push_str(p),
        SpecTerm::Neg(a) => nary("-", &[a], out),
        SpecTerm::Add(a, b) => nary("+", &[a, b], out),
        SpecTerm::Sub(a, b) => nary("-", &[a, b], out),
        SpecTerm::Mul(a, b) => nary("*", &[a, b], out),
        SpecTerm::Div(a, b) => nary("/", &[a, b], out),
        SpecTerm::Sin(a) => nary("sin", &[a], out),
        SpecTerm::Cos(a) => nary("cos", &[a], out),
    }
}

fn write_formula(f: &SpecFormula, out: &mut String) {
    let list = |op: &str, fs: &[&SpecFormula], out: &mut String| {
        let _ = write!(out, "({op}");
        for x in fs {
            out.push(' ');
            write_formula(x, out);
        }
        out.push(')');
    };
    let qubit = |op: &str, r: &QubitRef, t: &QubitTarget, out: &mut String| {
        let _ = write!(out, "({op} ");
        write_qubit_ref(r, out);
        out.push(' ');
        match t {
            QubitTarget::Qubit(q) => write_qubit_ref(q, out),
            QubitTarget::Amps(ts) => {
                out.push_str("(amps");
                for t in ts {
                    out.push(' ');
                    write_term(t, out);
                }
                out.push(')');
            }
        }
        out.push(')');
    };
    let binary = |sym: &str, a: &SpecTerm, b: &SpecTerm, out: &mut String| {
        let _ = write!(out, "({sym} ");
        write_term(a, out);
        out.push(' ');
        write_term(b, out);
        out.push(')');
    };
    match f {
        SpecFormula::True => out.push_str("true"),
        SpecFormula::False => out.push_str("false"),
        SpecFormula::Cmp(op, a, b) => binary(op.symbol(), a, b, out),
        SpecFormula::Ne(a, b) => binary("!=", a, b, out),
        SpecFormula::QubitEq(r, t) => qubit("qubit=", r, t, out),
        SpecFormula::QubitNe(r, t) => qubit("qubit!=", r, t, out),
        SpecFormula::Not(a) => list("not", &[a], out),
        SpecFormula::And(fs) => list("and", &fs.iter().collect::<Vec<_>>(), out),
        SpecFormula::Or(fs) => list("or", &fs.iter().collect::<Vec<_>>(), out),
        SpecFormula::Implies(a, b) => list("=>", &[a, b], out),
        SpecFormula::Ite(c, a, b) => list("ite", &[c, a, b], out),
    }
}

/// Renders a specification in the syntax accepted by [`parse_spec`].
pub fn write_spec(f: &SpecFormula, rules: &[StructuralRule]) -> String {
    let mut out = String::from("(assert ");
    write_formula(f, &mut out);
    out.push_str(")\n");
    for r in rules {
        let StructuralRule::ForbidJointTouch { a, b, before } = r;
        let list = |xs: &[usize]| xs.iter().map(|q| q.to_string()).collect::<Vec<_>>().join(" ");
        let _ = writeln!(out, "(rule forbid-joint-touch ({}) ({}) {before})", list(a), list(b));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::{generate, BenchName, BenchmarkId};

    const TP: &str = "# teleportation\nqubits 3\ninit 1 2 bell\ncx 0 1\nh 0\nmeasure 0 1\ncx 1 2\ncz 0 2\n";

    #[test]
    fn teleportation_text() {
        let p = parse_program(TP).unwrap();
        let want = generate(BenchmarkId::new(BenchName::Tp, None), None).unwrap().model;
        assert_eq!(p.ops, want.ops);
        assert_eq!(p.n_qubits, 3);
        assert_eq!(p.n_states(), 6);
    }

    #[test]
    fn gates_with_terms_and_controls() {
        let p = parse_program("qubits 3\nparam t 0 1 open\nrz (* 2 pi t) 1\nrk 2 0 ctrl 1\nz 2 ctrl 0 1\n").unwrap();
        assert_eq!(p.params, vec![Param::bounded("t", 0.0, 1.0, true)]);
        let StateOp::Gate(g) = &p.ops[1] else { panic!() };
        assert_eq!(g.controls(), vec![1]);
        let StateOp::Gate(g) = &p.ops[2] else { panic!() };
        assert_eq!(g.controls(), vec![0, 1]);
    }

    #[test]
    fn program_errors_carry_lines() {
        let e = parse_program("qubits 2\nh 0\nfoo 1\n").unwrap_err();
        assert!(matches!(e, DslError::Syntax { line: 3, .. }), "{e}");
        let e = parse_program("qubits 2\nrz s 0\n").unwrap_err();
        assert!(e.to_string().contains("unknown parameter"));
        assert!(matches!(parse_program("qubits 2\nh 5\n"), Err(DslError::Model(_))));
        assert!(parse_program("h 0\n").is_err());
    }

    #[test]
    fn spec_forms() {
        let s = parse_spec("; tp\n(assert (qubit= (q 5 2 *) (q 0 0)))\n(rule forbid-joint-touch (0) (1 2) 2)\n").unwrap();
        assert_eq!(
            s.formula,
            SpecFormula::QubitEq(
                QubitRef::new(5, 2, BranchSel::All),
                QubitTarget::Qubit(QubitRef::new(0, 0, BranchSel::root()))
            )
        );
        assert_eq!(s.rules, vec![StructuralRule::ForbidJointTouch { a: vec![0], b: vec![1, 2], before: 2 }]);
        let s = parse_spec("(assert (>= (* (amp_re 3 1 \"01\") 2) (/ 4 (* pi pi))))").unwrap();
        let SpecFormula::Cmp(CmpOp::Ge, SpecTerm::Mul(a, _), _) = &s.formula else { panic!("{:?}", s.formula) };
        assert_eq!(**a, SpecTerm::Ref(SymRef::new(3, 1, BranchSel::Label("01".into()), Role::AmpRe)));
        assert!(parse_spec("(assert (qubit= (q 1) zero))").is_err());
        assert!(parse_spec("(assert (frob 1 2))").is_err());
    }

    #[test]
    fn benchmarks_round_trip() {
        for (name, n) in [
            (BenchName::Tp, None),
            (BenchName::Toffoli, None),
            (BenchName::Add, Some(2)),
            (BenchName::Qft, Some(3)),
            (BenchName::Qpe, Some(3)),
            (BenchName::Gdo, Some(4)),
        ] {
            let b = generate(BenchmarkId::new(name, n), None).unwrap();
            let text = write_program(&b.model);
            assert_eq!(parse_program(&text).unwrap(), b.model, "{text}");
            let spec = write_spec(&b.spec, &b.rules);
            let back = parse_spec(&spec).unwrap();
            assert_eq!(back.formula, b.spec, "{spec}");
            assert_eq!(back.rules, b.rules);
        }
    }
}
