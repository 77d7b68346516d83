//! Specifications: formulas over qubit blocks and state-vector entries,
//! their negation, structural pre-checks and the query assembly.

use std::collections::BTreeSet;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::{encode, EncodeError, EncodeOptions, Encoding, GroupRep, SymbolTable};
use crate::expr::{fold_constants, CmpOp, ComplexTerm, Constraint, RealTerm};
use crate::qpm::{touched_qubits, ProgramModel};

/// Default margin for strict atoms of a negated specification.
pub const DEFAULT_EPSILON: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpecError {
    #[error("unresolved symbol {0}")]
    UnresolvedSymRef(String),
    #[error("qubit {qubit} at state {state} is entangled; only whole-qubit or amplitude assertions apply")]
    EntangledRef { state: usize, qubit: usize },
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error("structural rule violated: {0}")]
    Structural(StructuralViolation),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Alpha,
    BetaRe,
    BetaIm,
    Phi,
    Theta,
    AmpRe,
    AmpIm,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::Alpha => "alpha",
            Role::BetaRe => "beta_re",
            Role::BetaIm => "beta_im",
            Role::Phi => "phi",
            Role::Theta => "theta",
            Role::AmpRe => "amp_re",
            Role::AmpIm => "amp_im",
        }
    }

    pub fn parse(s: &str) -> Option<Role> {
        Some(match s {
            "alpha" => Role::Alpha,
            "beta_re" => Role::BetaRe,
            "beta_im" => Role::BetaIm,
            "phi" => Role::Phi,
            "theta" => Role::Theta,
            "amp_re" => Role::AmpRe,
            "amp_im" => Role::AmpIm,
            _ => return None,
        })
    }

    pub fn is_amplitude(self) -> bool {
        matches!(self, Role::AmpRe | Role::AmpIm)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BranchSel {
    Label(String),
    All,
}

impl BranchSel {
    pub fn root() -> Self {
        BranchSel::Label(String::new())
    }
}

/// One real symbol: a qubit block component (index is a qubit) or a
/// register amplitude component (index is a basis index, qubit 0 first).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SymRef {
    pub state: usize,
    pub index: usize,
    pub branch: BranchSel,
    pub role: Role,
}

impl SymRef {
    pub fn new(state: usize, index: usize, branch: BranchSel, role: Role) -> Self {
        SymRef { state, index, branch, role }
    }

    fn label(&self) -> &str {
        match &self.branch {
            BranchSel::Label(l) => l,
            BranchSel::All => panic!("branch selector must be expanded first"),
        }
    }

    fn describe(&self) -> String {
        let b = match &self.branch {
            BranchSel::Label(l) if l.is_empty() => String::new(),
            BranchSel::Label(l) => format!("@{l}"),
            BranchSel::All => "@*".to_string(),
        };
        format!("{}[{}][{}]{}", self.role.name(), self.state, self.index, b)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct QubitRef {
    pub state: usize,
    pub qubit: usize,
    pub branch: BranchSel,
}

impl QubitRef {
    pub fn new(state: usize, qubit: usize, branch: BranchSel) -> Self {
        QubitRef { state, qubit, branch }
    }

    pub fn role(&self, role: Role) -> SpecTerm {
        SpecTerm::Ref(SymRef::new(self.state, self.qubit, self.branch.clone(), role))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SpecTerm {
    Ref(SymRef),
    Const(f64),
    Pi,
    Param(String),
    Neg(Box<SpecTerm>),
    Add(Box<SpecTerm>, Box<SpecTerm>),
    Sub(Box<SpecTerm>, Box<SpecTerm>),
    Mul(Box<SpecTerm>, Box<SpecTerm>),
    Div(Box<SpecTerm>, Box<SpecTerm>),
    Sin(Box<SpecTerm>),
    Cos(Box<SpecTerm>),
}

impl SpecTerm {
    pub fn r(state: usize, index: usize, branch: BranchSel, role: Role) -> Self {
        SpecTerm::Ref(SymRef::new(state, index, branch, role))
    }

    pub fn amp_re(state: usize, index: usize) -> Self {
        Self::r(state, index, BranchSel::root(), Role::AmpRe)
    }

    pub fn amp_im(state: usize, index: usize) -> Self {
        Self::r(state, index, BranchSel::root(), Role::AmpIm)
    }

    pub fn c(v: f64) -> Self {
        SpecTerm::Const(v)
    }

    pub fn sum(terms: Vec<SpecTerm>) -> Self {
        terms.into_iter().reduce(|a, b| a + b).unwrap_or(SpecTerm::Const(0.0))
    }

    fn visit_refs<'a>(&'a self, f: &mut dyn FnMut(&'a SymRef)) {
        match self {
            SpecTerm::Ref(r) => f(r),
            SpecTerm::Const(_) | SpecTerm::Pi | SpecTerm::Param(_) => {}
            SpecTerm::Neg(a) | SpecTerm::Sin(a) | SpecTerm::Cos(a) => a.visit_refs(f),
            SpecTerm::Add(a, b) | SpecTerm::Sub(a, b) | SpecTerm::Mul(a, b) | SpecTerm::Div(a, b) => {
                a.visit_refs(f);
                b.visit_refs(f);
            }
        }
    }

    fn map_refs(&self, f: &dyn Fn(&SymRef) -> SymRef) -> SpecTerm {
        let m = |t: &SpecTerm| Box::new(t.map_refs(f));
        match self {
            SpecTerm::Ref(r) => SpecTerm::Ref(f(r)),
            SpecTerm::Const(_) | SpecTerm::Pi | SpecTerm::Param(_) => self.clone(),
            SpecTerm::Neg(a) => SpecTerm::Neg(m(a)),
            SpecTerm::Sin(a) => SpecTerm::Sin(m(a)),
            SpecTerm::Cos(a) => SpecTerm::Cos(m(a)),
            SpecTerm::Add(a, b) => SpecTerm::Add(m(a), m(b)),
            SpecTerm::Sub(a, b) => SpecTerm::Sub(m(a), m(b)),
            SpecTerm::Mul(a, b) => SpecTerm::Mul(m(a), m(b)),
            SpecTerm::Div(a, b) => SpecTerm::Div(m(a), m(b)),
        }
    }

    fn lower(&self, res: &dyn Fn(&SymRef) -> Result<RealTerm, SpecError>) -> Result<RealTerm, SpecError> {
        Ok(match self {
            SpecTerm::Ref(r) => res(r)?,
            SpecTerm::Const(v) => RealTerm::constant(*v),
            SpecTerm::Pi => RealTerm::pi(),
            SpecTerm::Param(p) => RealTerm::var(p),
            SpecTerm::Neg(a) => -a.lower(res)?,
            SpecTerm::Add(a, b) => a.lower(res)? + b.lower(res)?,
            SpecTerm::Sub(a, b) => a.lower(res)? - b.lower(res)?,
            SpecTerm::Mul(a, b) => a.lower(res)? * b.lower(res)?,
            SpecTerm::Div(a, b) => {
                let den = b.lower(res)?;
                let den = fold_constants(&den).as_const().ok_or_else(|| {
                    SpecError::UnresolvedSymRef("division by a non-constant term".into())
                })?;
                a.lower(res)?.div_const(den)
            }
            SpecTerm::Sin(a) => a.lower(res)?.sin(),
            SpecTerm::Cos(a) => a.lower(res)?.cos(),
        })
    }

    fn value(&self, env: &dyn SpecEnv) -> Result<f64, SpecError> {
        Ok(match self {
            SpecTerm::Ref(r) => env.scalar(r)?,
            SpecTerm::Const(v) => *v,
            SpecTerm::Pi => std::f64::consts::PI,
            SpecTerm::Param(p) => env.param(p).ok_or_else(|| SpecError::UnknownParam(p.clone()))?,
            SpecTerm::Neg(a) => -a.value(env)?,
            SpecTerm::Add(a, b) => a.value(env)? + b.value(env)?,
            SpecTerm::Sub(a, b) => a.value(env)? - b.value(env)?,
            SpecTerm::Mul(a, b) => a.value(env)? * b.value(env)?,
            SpecTerm::Div(a, b) => a.value(env)? / b.value(env)?,
            SpecTerm::Sin(a) => a.value(env)?.sin(),
            SpecTerm::Cos(a) => a.value(env)?.cos(),
        })
    }
}

macro_rules! spec_binop {
    ($tr:ident, $m:ident, $v:ident) => {
        impl std::ops::$tr for SpecTerm {
            type Output = SpecTerm;
            fn $m(self, rhs: SpecTerm) -> SpecTerm {
                SpecTerm::$v(Box::new(self), Box::new(rhs))
            }
        }
    };
}
spec_binop!(Add, add, Add);
spec_binop!(Sub, sub, Sub);
spec_binop!(Mul, mul, Mul);
spec_binop!(Div, div, Div);

impl std::ops::Neg for SpecTerm {
    type Output = SpecTerm;
    fn neg(self) -> SpecTerm {
        SpecTerm::Neg(Box::new(self))
    }
}

/// Right-hand side of a whole-qubit equality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum QubitTarget {
    Qubit(QubitRef),
    /// α + β|1⟩ given as (α_re, α_im, β_re, β_im).
    Amps([SpecTerm; 4]),
}

impl QubitTarget {
    pub fn constant(alpha: Complex64, beta: Complex64) -> Self {
        QubitTarget::Amps([
            SpecTerm::Const(alpha.re),
            SpecTerm::Const(alpha.im),
            SpecTerm::Const(beta.re),
            SpecTerm::Const(beta.im),
        ])
    }

    fn visit_refs<'a>(&'a self, f: &mut dyn FnMut(&'a SymRef)) {
        match self {
            QubitTarget::Qubit(_) => {}
            QubitTarget::Amps(ts) => ts.iter().for_each(|t| t.visit_refs(f)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SpecFormula {
    True,
    False,
    Cmp(CmpOp, SpecTerm, SpecTerm),
    Ne(SpecTerm, SpecTerm),
    QubitEq(QubitRef, QubitTarget),
    QubitNe(QubitRef, QubitTarget),
    Not(Box<SpecFormula>),
    And(Vec<SpecFormula>),
    Or(Vec<SpecFormula>),
    Implies(Box<SpecFormula>, Box<SpecFormula>),
    Ite(Box<SpecFormula>, Box<SpecFormula>, Box<SpecFormula>),
}

impl SpecFormula {
    pub fn cmp(op: CmpOp, a: SpecTerm, b: SpecTerm) -> Self {
        SpecFormula::Cmp(op, a, b)
    }

    pub fn eq(a: SpecTerm, b: SpecTerm) -> Self {
        SpecFormula::Cmp(CmpOp::Eq, a, b)
    }

    pub fn le(a: SpecTerm, b: SpecTerm) -> Self {
        SpecFormula::Cmp(CmpOp::Le, a, b)
    }

    pub fn ge(a: SpecTerm, b: SpecTerm) -> Self {
        SpecFormula::Cmp(CmpOp::Ge, a, b)
    }

    pub fn implies(a: SpecFormula, b: SpecFormula) -> Self {
        SpecFormula::Implies(Box::new(a), Box::new(b))
    }

    pub fn ite(c: SpecFormula, a: SpecFormula, b: SpecFormula) -> Self {
        SpecFormula::Ite(Box::new(c), Box::new(a), Box::new(b))
    }

    pub fn qubit_eq(lhs: QubitRef, rhs: QubitTarget) -> Self {
        SpecFormula::QubitEq(lhs, rhs)
    }

    /// Deepest state referenced with an all-branches selector.
    fn all_branch_state(&self) -> Option<usize> {
        let mut deepest: Option<usize> = None;
        let mut note = |state: usize, b: &BranchSel| {
            if *b == BranchSel::All {
                deepest = Some(deepest.map_or(state, |d: usize| d.max(state)));
            }
        };
        match self {
            SpecFormula::Cmp(_, a, b) | SpecFormula::Ne(a, b) => {
                a.visit_refs(&mut |r| note(r.state, &r.branch));
                b.visit_refs(&mut |r| note(r.state, &r.branch));
            }
            SpecFormula::QubitEq(l, t) | SpecFormula::QubitNe(l, t) => {
                note(l.state, &l.branch);
                if let QubitTarget::Qubit(r) = t {
                    note(r.state, &r.branch);
                }
                t.visit_refs(&mut |r| note(r.state, &r.branch));
            }
            _ => {}
        }
        deepest
    }

    fn map_branches(&self, f: &dyn Fn(usize, &BranchSel) -> BranchSel) -> SpecFormula {
        let term = |t: &SpecTerm| {
            t.map_refs(&|r| SymRef { branch: f(r.state, &r.branch), ..r.clone() })
        };
        let qref = |q: &QubitRef| QubitRef { branch: f(q.state, &q.branch), ..q.clone() };
        let target = |t: &QubitTarget| match t {
            QubitTarget::Qubit(q) => QubitTarget::Qubit(qref(q)),
            QubitTarget::Amps(ts) => QubitTarget::Amps(ts.clone().map(|x| term(&x))),
        };
        match self {
            SpecFormula::Cmp(op, a, b) => SpecFormula::Cmp(*op, term(a), term(b)),
            SpecFormula::Ne(a, b) => SpecFormula::Ne(term(a), term(b)),
            SpecFormula::QubitEq(l, t) => SpecFormula::QubitEq(qref(l), target(t)),
            SpecFormula::QubitNe(l, t) => SpecFormula::QubitNe(qref(l), target(t)),
            other => other.clone(),
        }
    }

    /// Replaces every all-branches atom by the conjunction of its per-branch
    /// instances. Shallower references use the matching label prefix.
    pub fn expand_branches(&self, labels_at: &dyn Fn(usize) -> Vec<String>) -> SpecFormula {
        use SpecFormula::*;
        let rec = |f: &SpecFormula| f.expand_branches(labels_at);
        match self {
            True | False => self.clone(),
            Cmp(..) | Ne(..) | QubitEq(..) | QubitNe(..) => match self.all_branch_state() {
                None => self.clone(),
                Some(s) => And(labels_at(s)
                    .into_iter()
                    .map(|label| {
                        self.map_branches(&|state, b| match b {
                            BranchSel::All => {
                                let len = labels_at(state).first().map_or(0, |l| l.len());
                                BranchSel::Label(label[..len.min(label.len())].to_string())
                            }
                            other => other.clone(),
                        })
                    })
                    .collect()),
            },
            Not(a) => Not(Box::new(rec(a))),
            And(xs) => And(xs.iter().map(rec).collect()),
            Or(xs) => Or(xs.iter().map(rec).collect()),
            Implies(a, b) => Implies(Box::new(rec(a)), Box::new(rec(b))),
            Ite(c, a, b) => Ite(Box::new(rec(c)), Box::new(rec(a)), Box::new(rec(b))),
        }
    }

    pub fn refs(&self) -> BTreeSet<SymRef> {
        let mut out = BTreeSet::new();
        self.collect_refs(&mut out);
        out
    }

    fn collect_refs(&self, out: &mut BTreeSet<SymRef>) {
        use SpecFormula::*;
        match self {
            True | False => {}
            Cmp(_, a, b) | Ne(a, b) => {
                a.visit_refs(&mut |r| {
                    out.insert(r.clone());
                });
                b.visit_refs(&mut |r| {
                    out.insert(r.clone());
                });
            }
            QubitEq(l, t) | QubitNe(l, t) => {
                for role in [Role::Alpha, Role::BetaRe, Role::BetaIm] {
                    out.insert(SymRef::new(l.state, l.qubit, l.branch.clone(), role));
                    if let QubitTarget::Qubit(r) = t {
                        out.insert(SymRef::new(r.state, r.qubit, r.branch.clone(), role));
                    }
                }
                t.visit_refs(&mut |r| {
                    out.insert(r.clone());
                });
            }
            Not(a) => a.collect_refs(out),
            And(xs) | Or(xs) => xs.iter().for_each(|x| x.collect_refs(out)),
            Implies(a, b) => {
                a.collect_refs(out);
                b.collect_refs(out);
            }
            Ite(c, a, b) => {
                c.collect_refs(out);
                a.collect_refs(out);
                b.collect_refs(out);
            }
        }
    }
}

/// Negation normal form: negations only survive inside atoms.
pub fn nnf(f: &SpecFormula) -> SpecFormula {
    use SpecFormula::*;
    match f {
        Not(inner) => negate(inner),
        And(xs) => And(xs.iter().map(nnf).collect()),
        Or(xs) => Or(xs.iter().map(nnf).collect()),
        Implies(a, b) => Or(vec![negate(a), nnf(b)]),
        Ite(c, a, b) => Ite(Box::new(nnf(c)), Box::new(nnf(a)), Box::new(nnf(b))),
        other => other.clone(),
    }
}

/// ¬φ pushed to the atoms.
pub fn negate(f: &SpecFormula) -> SpecFormula {
    use SpecFormula::*;
    match f {
        True => False,
        False => True,
        Cmp(op, a, b) => match op {
            CmpOp::Eq => Ne(a.clone(), b.clone()),
            CmpOp::Le => Cmp(CmpOp::Gt, a.clone(), b.clone()),
            CmpOp::Lt => Cmp(CmpOp::Ge, a.clone(), b.clone()),
            CmpOp::Ge => Cmp(CmpOp::Lt, a.clone(), b.clone()),
            CmpOp::Gt => Cmp(CmpOp::Le, a.clone(), b.clone()),
        },
        Ne(a, b) => Cmp(CmpOp::Eq, a.clone(), b.clone()),
        QubitEq(l, t) => QubitNe(l.clone(), t.clone()),
        QubitNe(l, t) => QubitEq(l.clone(), t.clone()),
        Not(inner) => nnf(inner),
        And(xs) => Or(xs.iter().map(negate).collect()),
        Or(xs) => And(xs.iter().map(negate).collect()),
        Implies(a, b) => And(vec![nnf(a), negate(b)]),
        Ite(c, a, b) => Ite(Box::new(nnf(c)), Box::new(negate(a)), Box::new(negate(b))),
    }
}

/// A static check on the operation sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StructuralRule {
    /// No operation with index < `before` may touch a qubit of `a` and a
    /// qubit of `b` together.
    ForbidJointTouch { a: Vec<usize>, b: Vec<usize>, before: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuralViolation {
    pub rule: usize,
    pub op_index: usize,
    pub op: String,
}

impl std::fmt::Display for StructuralViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "rule {} at operation {} ({})", self.rule, self.op_index, self.op)
    }
}

pub fn check_structural(rules: &[StructuralRule], p: &ProgramModel) -> Result<(), StructuralViolation> {
    for (ri, rule) in rules.iter().enumerate() {
        match rule {
            StructuralRule::ForbidJointTouch { a, b, before } => {
                for (i, op) in p.ops.iter().enumerate().take(*before) {
                    let t = touched_qubits(op);
                    if a.iter().any(|q| t.contains(q)) && b.iter().any(|q| t.contains(q)) {
                        return Err(StructuralViolation { rule: ri, op_index: i, op: op.describe() });
                    }
                }
            }
        }
    }
    Ok(())
}

fn symbolic_scalar(table: &SymbolTable, r: &SymRef) -> Result<RealTerm, SpecError> {
    let label = r.label();
    let unresolved = || SpecError::UnresolvedSymRef(r.describe());
    if r.state >= table.n_states {
        return Err(unresolved());
    }
    if r.role.is_amplitude() {
        if r.index >= 1usize << table.n_qubits {
            return Err(unresolved());
        }
        // after a measurement the symbolic state is only known up to a
        // nonzero factor, so raw amplitudes are meaningless there
        if !label.is_empty() || table.labels_at(r.state).iter().any(|l| !l.is_empty()) {
            return Err(SpecError::UnresolvedSymRef(format!("{} (amplitude after a measurement)", r.describe())));
        }
        let a = table.amplitude(r.state, r.index, label).ok_or_else(unresolved)?;
        return Ok(if r.role == Role::AmpRe { a.re } else { a.im });
    }
    if r.index >= table.n_qubits {
        return Err(unresolved());
    }
    let block = match table.live_block(r.state, r.index, label) {
        Ok(Some(b)) => b,
        Ok(None) => return Err(unresolved()),
        Err(_) => return Err(SpecError::EntangledRef { state: r.state, qubit: r.index }),
    };
    Ok(RealTerm::var(match r.role {
        Role::Alpha => &block.alpha,
        Role::BetaRe => &block.beta_re,
        Role::BetaIm => &block.beta_im,
        Role::Phi => &block.phi,
        Role::Theta => &block.theta,
        _ => unreachable!(),
    }))
}

/// Positive-form equalities for |lhs⟩ = target. A block compares
/// componentwise; a qubit inside a joint vector must factor out as the
/// target ray, i.e. u[r,0]·β' = u[r,1]·α' for every assignment r of the
/// other qubits of its group.
fn qubit_equalities(
    table: &SymbolTable,
    lhs: &QubitRef,
    target: &QubitTarget,
) -> Result<Vec<(RealTerm, RealTerm)>, SpecError> {
    let res = |r: &SymRef| symbolic_scalar(table, r);
    let (alpha, beta) = match target {
        QubitTarget::Qubit(q) => {
            let a = res(&SymRef::new(q.state, q.qubit, q.branch.clone(), Role::Alpha))?;
            let br = res(&SymRef::new(q.state, q.qubit, q.branch.clone(), Role::BetaRe))?;
            let bi = res(&SymRef::new(q.state, q.qubit, q.branch.clone(), Role::BetaIm))?;
            (ComplexTerm::real(a), ComplexTerm::new(br, bi))
        }
        QubitTarget::Amps([ar, ai, br, bi]) => (
            ComplexTerm::new(ar.lower(&res)?, ai.lower(&res)?).fold(),
            ComplexTerm::new(br.lower(&res)?, bi.lower(&res)?).fold(),
        ),
    };
    let label = match &lhs.branch {
        BranchSel::Label(l) => l.as_str(),
        BranchSel::All => panic!("branch selector must be expanded first"),
    };
    let unresolved = || SpecError::UnresolvedSymRef(format!("q[{}][{}]@{}", lhs.state, lhs.qubit, label));
    if lhs.state >= table.n_states || lhs.qubit >= table.n_qubits {
        return Err(unresolved());
    }
    let group = table.group_of(lhs.state, lhs.qubit, label).ok_or_else(unresolved)?;
    let mut out = Vec::new();
    match &group.rep {
        GroupRep::Block { block, .. } => {
            out.push((RealTerm::var(&block.alpha), alpha.re.clone()));
            if !alpha.im.is_zero() {
                out.push((RealTerm::zero(), alpha.im.clone()));
            }
            out.push((RealTerm::var(&block.beta_re), beta.re.clone()));
            out.push((RealTerm::var(&block.beta_im), beta.im.clone()));
        }
        GroupRep::Vector { amps, .. } => {
            let n = group.qubits.len();
            let pos = group.qubits.iter().position(|q| *q == lhs.qubit).unwrap();
            let bit = 1usize << (n - 1 - pos);
            for i in 0..amps.len() {
                if i & bit != 0 {
                    continue;
                }
                let cross = (crate::expr::complex_mul(&amps[i], &beta)
                    - crate::expr::complex_mul(&amps[i | bit], &alpha))
                .fold();
                out.push((cross.re, RealTerm::zero()));
                out.push((cross.im, RealTerm::zero()));
            }
        }
    }
    Ok(out)
}

fn eq_atoms(pairs: Vec<(RealTerm, RealTerm)>) -> Constraint {
    simplify(Constraint::And(pairs.into_iter().map(|(a, b)| Constraint::eq(a, b)).collect()))
}

fn ne_atoms(pairs: Vec<(RealTerm, RealTerm)>, eps: f64) -> Constraint {
    simplify(Constraint::Or(pairs.into_iter().map(|(a, b)| ne(a, b, eps)).collect()))
}

fn ne(a: RealTerm, b: RealTerm, eps: f64) -> Constraint {
    Constraint::Or(vec![strict(CmpOp::Lt, a.clone(), b.clone(), eps), strict(CmpOp::Gt, a, b, eps)])
}

fn strict(op: CmpOp, a: RealTerm, b: RealTerm, eps: f64) -> Constraint {
    let b = fold_constants(&b);
    let shift = |b: RealTerm, d: f64| match b.as_const() {
        Some(v) => RealTerm::constant(v + d),
        None => b + RealTerm::constant(d),
    };
    match op {
        CmpOp::Lt if eps > 0.0 => Constraint::lt(a, shift(b, -eps)),
        CmpOp::Gt if eps > 0.0 => Constraint::gt(a, shift(b, eps)),
        _ => Constraint::Cmp(op, a, b),
    }
}

/// Folds closed atoms and trivial connectives.
pub fn simplify(c: Constraint) -> Constraint {
    match c {
        Constraint::Cmp(op, a, b) => {
            let (a, b) = (fold_constants(&a), fold_constants(&b));
            match (a.as_const(), b.as_const()) {
                (Some(x), Some(y)) => {
                    if op.holds(x, y) {
                        Constraint::True
                    } else {
                        Constraint::False
                    }
                }
                _ => Constraint::Cmp(op, a, b),
            }
        }
        Constraint::And(xs) => {
            let mut out = Vec::new();
            for x in xs.into_iter().map(simplify) {
                match x {
                    Constraint::True => {}
                    Constraint::False => return Constraint::False,
                    Constraint::And(ys) => out.extend(ys),
                    other => out.push(other),
                }
            }
            match out.len() {
                0 => Constraint::True,
                1 => out.pop().unwrap(),
                _ => Constraint::And(out),
            }
        }
        Constraint::Or(xs) => {
            let mut out = Vec::new();
            for x in xs.into_iter().map(simplify) {
                match x {
                    Constraint::False => {}
                    Constraint::True => return Constraint::True,
                    Constraint::Or(ys) => out.extend(ys),
                    other => out.push(other),
                }
            }
            match out.len() {
                0 => Constraint::False,
                1 => out.pop().unwrap(),
                _ => Constraint::Or(out),
            }
        }
        Constraint::Not(x) => match simplify(*x) {
            Constraint::True => Constraint::False,
            Constraint::False => Constraint::True,
            other => Constraint::Not(Box::new(other)),
        },
        Constraint::Implies(a, b) => simplify(Constraint::Or(vec![Constraint::Not(a), *b])),
        other => other,
    }
}

/// Lowers a formula whose branch selectors are expanded. Strict atoms get
/// the margin `eps`: a < b becomes a < b − ε and a > b becomes a > b + ε.
pub fn translate(f: &SpecFormula, table: &SymbolTable, eps: f64) -> Result<Constraint, SpecError> {
    use SpecFormula::*;
    let res = |r: &SymRef| symbolic_scalar(table, r);
    let c = match f {
        True => Constraint::True,
        False => Constraint::False,
        Cmp(op, a, b) => {
            let (a, b) = (a.lower(&res)?, b.lower(&res)?);
            match op {
                CmpOp::Lt | CmpOp::Gt => strict(*op, a, b, eps),
                _ => Constraint::Cmp(*op, a, b),
            }
        }
        Ne(a, b) => ne(a.lower(&res)?, b.lower(&res)?, eps),
        QubitEq(l, t) => eq_atoms(qubit_equalities(table, l, t)?),
        QubitNe(l, t) => ne_atoms(qubit_equalities(table, l, t)?, eps),
        Not(a) => translate(&negate(a), table, eps)?,
        And(xs) => Constraint::And(xs.iter().map(|x| translate(x, table, eps)).collect::<Result<_, _>>()?),
        Or(xs) => Constraint::Or(xs.iter().map(|x| translate(x, table, eps)).collect::<Result<_, _>>()?),
        Implies(a, b) => Constraint::Or(vec![translate(&negate(a), table, eps)?, translate(b, table, eps)?]),
        Ite(c, a, b) => Constraint::Or(vec![
            Constraint::And(vec![translate(c, table, eps)?, translate(a, table, eps)?]),
            Constraint::And(vec![translate(&negate(c), table, eps)?, translate(b, table, eps)?]),
        ]),
    };
    Ok(simplify(c))
}

/// M_Q ∧ ¬φ.
#[derive(Debug, Clone)]
pub struct Query {
    pub encoding: Encoding,
    pub negated_spec: Constraint,
    pub epsilon: f64,
}

impl Query {
    pub fn constraint(&self) -> Constraint {
        let mut all = self.encoding.constraint().conjuncts();
        all.extend(self.negated_spec.conjuncts());
        Constraint::And(all)
    }
}

pub fn assemble_query(
    p: &ProgramModel,
    spec: &SpecFormula,
    rules: &[StructuralRule],
    opts: &EncodeOptions,
    eps: f64,
) -> Result<Query, SpecError> {
    check_structural(rules, p).map_err(SpecError::Structural)?;
    let encoding = encode(p, opts)?;
    let expanded = spec.expand_branches(&|s| encoding.table.labels_at(s));
    let negated_spec = translate(&negate(&expanded), &encoding.table, eps)?;
    Ok(Query { encoding, negated_spec, epsilon: eps })
}

/// M_Q ∧ extra, for consistency checks that do not negate anything.
pub fn assemble_with(
    p: &ProgramModel,
    extra: &SpecFormula,
    opts: &EncodeOptions,
) -> Result<Query, SpecError> {
    let encoding = encode(p, opts)?;
    let expanded = extra.expand_branches(&|s| encoding.table.labels_at(s));
    let negated_spec = translate(&nnf(&expanded), &encoding.table, 0.0)?;
    Ok(Query { encoding, negated_spec, epsilon: 0.0 })
}

/// Numeric values for a specification, e.g. a simulated trace.
pub trait SpecEnv {
    fn labels_at(&self, state: usize) -> Vec<String>;
    /// `r.branch` is always a concrete label here.
    fn scalar(&self, r: &SymRef) -> Result<f64, SpecError>;
    /// Phase-normalized (α real ≥ 0) qubit, `None` if it is entangled.
    fn qubit(&self, q: &QubitRef) -> Result<Option<(Complex64, Complex64)>, SpecError>;
    fn param(&self, name: &str) -> Option<f64>;
}

/// Quantitative truth with every atom relaxed by `tol`: ≥ 0 iff the
/// formula holds up to `tol`.
pub fn robustness(f: &SpecFormula, env: &dyn SpecEnv, tol: f64) -> Result<f64, SpecError> {
    let expanded = f.expand_branches(&|s| env.labels_at(s));
    robust(&expanded, env, tol)
}

/// Like [`robustness`], but the premises of implications and the
/// conditions of `ite` are decided as Booleans first, so a violation is
/// measured on the obligation that fails rather than on how narrowly the
/// premise holds.
pub fn guarded_robustness(f: &SpecFormula, env: &dyn SpecEnv, tol: f64) -> Result<f64, SpecError> {
    let expanded = f.expand_branches(&|s| env.labels_at(s));
    guarded(&expanded, env, tol)
}

fn guarded(f: &SpecFormula, env: &dyn SpecEnv, tol: f64) -> Result<f64, SpecError> {
    use SpecFormula::*;
    let rec = |x: &SpecFormula| guarded(x, env, tol);
    Ok(match f {
        And(xs) => xs.iter().map(rec).try_fold(f64::INFINITY, |m, r| r.map(|r| m.min(r)))?,
        Or(xs) => xs.iter().map(rec).try_fold(f64::NEG_INFINITY, |m, r| r.map(|r| m.max(r)))?,
        Implies(a, b) => {
            let ra = robust(a, env, tol)?;
            if ra >= 0.0 {
                rec(b)?
            } else {
                -ra
            }
        }
        Ite(c, a, b) => {
            if robust(c, env, tol)? >= 0.0 {
                rec(a)?
            } else {
                rec(b)?
            }
        }
        other => robust(other, env, tol)?,
    })
}

fn robust(f: &SpecFormula, env: &dyn SpecEnv, tol: f64) -> Result<f64, SpecError> {
    use SpecFormula::*;
    let rec = |x: &SpecFormula| robust(x, env, tol);
    Ok(match f {
        True => f64::INFINITY,
        False => f64::NEG_INFINITY,
        Cmp(op, a, b) => {
            let (x, y) = (a.value(env)?, b.value(env)?);
            tol + match op {
                CmpOp::Eq => -(x - y).abs(),
                CmpOp::Le | CmpOp::Lt => y - x,
                CmpOp::Ge | CmpOp::Gt => x - y,
            }
        }
        Ne(a, b) => (a.value(env)? - b.value(env)?).abs() - tol,
        QubitEq(l, t) => tol - qubit_distance(l, t, env)?,
        QubitNe(l, t) => qubit_distance(l, t, env)? - tol,
        Not(a) => -rec(a)?,
        And(xs) => xs.iter().map(rec).try_fold(f64::INFINITY, |m, r| r.map(|r| m.min(r)))?,
        Or(xs) => xs.iter().map(rec).try_fold(f64::NEG_INFINITY, |m, r| r.map(|r| m.max(r)))?,
        Implies(a, b) => (-rec(a)?).max(rec(b)?),
        Ite(c, a, b) => {
            let rc = rec(c)?;
            rc.min(rec(a)?).max((-rc).min(rec(b)?))
        }
    })
}

fn qubit_distance(l: &QubitRef, t: &QubitTarget, env: &dyn SpecEnv) -> Result<f64, SpecError> {
    let Some((a, b)) = env.qubit(l)? else {
        return Ok(1.0);
    };
    let (ta, tb) = match t {
        QubitTarget::Qubit(q) => match env.qubit(q)? {
            Some(v) => v,
            None => return Ok(1.0),
        },
        QubitTarget::Amps([ar, ai, br, bi]) => (
            Complex64::new(ar.value(env)?, ai.value(env)?),
            Complex64::new(br.value(env)?, bi.value(env)?),
        ),
    };
    Ok((a.re - ta.re).abs().max((a.im - ta.im).abs()).max((b.re - tb.re).abs()).max((b.im - tb.im).abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qpm::{build_program, GateSpec, InitialValuation, StateOp};

    fn teleportation(extra: Option<(usize, StateOp)>) -> ProgramModel {
        let mut ops = vec![
            StateOp::Gate(GateSpec::cx(0, 1)),
            StateOp::Gate(GateSpec::h(0)),
            StateOp::Measure(vec![0, 1]),
            StateOp::Gate(GateSpec::cx(1, 2)),
            StateOp::Gate(GateSpec::cz(0, 2)),
        ];
        if let Some((i, op)) = extra {
            ops.insert(i, op);
        }
        build_program(3, ops, vec![], vec![InitialValuation::bell(1, 2)]).unwrap()
    }

    fn tp_rule() -> StructuralRule {
        StructuralRule::ForbidJointTouch { a: vec![0, 1], b: vec![2], before: 2 }
    }

    fn tp_spec() -> SpecFormula {
        SpecFormula::qubit_eq(
            QubitRef::new(5, 2, BranchSel::All),
            QubitTarget::Qubit(QubitRef::new(0, 0, BranchSel::root())),
        )
    }

    #[test]
    fn structural_rule_passes_on_teleportation() {
        assert_eq!(check_structural(&[tp_rule()], &teleportation(None)), Ok(()));
        assert_eq!(check_structural(&[], &teleportation(None)), Ok(()));
    }

    #[test]
    fn structural_rule_flags_inserted_cx() {
        let p = teleportation(Some((1, StateOp::Gate(GateSpec::cx(0, 2)))));
        let rule = StructuralRule::ForbidJointTouch { a: vec![0, 1], b: vec![2], before: 3 };
        let v = check_structural(&[rule], &p).unwrap_err();
        assert_eq!(v.op_index, 1);
    }

    #[test]
    fn negated_equality_is_strict_disjunction() {
        let a = SpecTerm::r(0, 0, BranchSel::root(), Role::Alpha);
        let n = negate(&SpecFormula::eq(a.clone(), SpecTerm::c(0.5)));
        assert_eq!(n, SpecFormula::Ne(a, SpecTerm::c(0.5)));
    }

    #[test]
    fn guarded_spec_negates_to_guard_and_violation() {
        let s = SpecTerm::amp_re(0, 0);
        let o = SpecTerm::amp_re(1, 0);
        let f = SpecFormula::ite(
            SpecFormula::le(s.clone(), SpecTerm::c(0.0)),
            SpecFormula::le(o.clone(), s.clone()),
            SpecFormula::True,
        );
        let n = negate(&f);
        assert_eq!(
            n,
            SpecFormula::ite(
                SpecFormula::le(s.clone(), SpecTerm::c(0.0)),
                SpecFormula::Cmp(CmpOp::Gt, o, s),
                SpecFormula::False
            )
        );
    }

    #[test]
    fn teleportation_spec_expands_to_four_branches() {
        let q = assemble_query(&teleportation(None), &tp_spec(), &[tp_rule()], &EncodeOptions::exact(), 1e-3).unwrap();
        let Constraint::Or(branches) = &q.negated_spec else { panic!("expected a disjunction") };
        // two ray cross terms per branch, each a strict pair
        assert_eq!(branches.len(), 16);
        let s = q.negated_spec.to_smt();
        for label in ["00", "01", "10", "11"] {
            assert!(s.contains(&format!("s_re_5_0_{label}_g2")));
        }
    }

    #[test]
    fn tautology_negates_to_false() {
        let f = SpecFormula::eq(SpecTerm::c(0.0), SpecTerm::c(0.0));
        let q = assemble_query(&teleportation(None), &f, &[], &EncodeOptions::boxed(), 1e-3).unwrap();
        assert_eq!(q.negated_spec, Constraint::False);
    }

    #[test]
    fn entangled_component_reference_is_rejected() {
        let f = SpecFormula::eq(SpecTerm::r(1, 2, BranchSel::root(), Role::Alpha), SpecTerm::c(1.0));
        let err = assemble_query(&teleportation(None), &f, &[], &EncodeOptions::exact(), 1e-3).unwrap_err();
        assert_eq!(err, SpecError::EntangledRef { state: 1, qubit: 2 });
    }

    #[test]
    fn unknown_state_is_unresolved() {
        let f = SpecFormula::eq(SpecTerm::amp_re(9, 0), SpecTerm::c(1.0));
        let err = assemble_query(&teleportation(None), &f, &[], &EncodeOptions::exact(), 1e-3).unwrap_err();
        assert!(matches!(err, SpecError::UnresolvedSymRef(_)));
    }

    #[test]
    fn strict_margin_is_applied() {
        let f = SpecFormula::le(SpecTerm::amp_re(0, 0), SpecTerm::c(0.25));
        let q = assemble_query(&teleportation(None), &f, &[], &EncodeOptions::exact(), 1e-3).unwrap();
        assert!(q.negated_spec.to_smt().contains("0.251"), "{}", q.negated_spec.to_smt());
    }
}
