//! The quantum program model: qubits, a sequence of state operations,
//! symbolic parameters, and initial valuations.

use std::collections::BTreeSet;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{ComplexTerm, RealTerm};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("qubit index {index} out of range for {n_qubits} qubits")]
    IndexOutOfRange { index: usize, n_qubits: usize },
    #[error("qubit {0} appears twice in one operation")]
    DuplicateTarget(usize),
    #[error("parameter `{0}` is not declared")]
    UnboundParameter(String),
    #[error("invalid gate: {0}")]
    InvalidGate(String),
    #[error("invalid initial valuation: {0}")]
    InvalidValuation(String),
    #[error("program needs at least one qubit")]
    NoQubits,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GateKind {
    Identity,
    X,
    Z,
    H,
    RX(RealTerm),
    RZ(RealTerm),
    Rk(RealTerm),
    Swap,
    CX,
    CZ,
    CustomMatrix(Vec<Vec<ComplexTerm>>),
    Controlled { base: Box<GateSpec>, controls: Vec<usize> },
}

/// A gate and the ordered qubits it acts on. For `CX`/`CZ` the first target
/// is the control; for `Controlled` the targets are the base gate's.
#[derive(Debug, Clone, PartialEq)]
pub struct GateSpec {
    pub kind: GateKind,
    pub targets: Vec<usize>,
}

impl GateSpec {
    pub fn new(kind: GateKind, targets: Vec<usize>) -> Self {
        GateSpec { kind, targets }
    }

    pub fn id(q: usize) -> Self {
        Self::new(GateKind::Identity, vec![q])
    }
    pub fn x(q: usize) -> Self {
        Self::new(GateKind::X, vec![q])
    }
    pub fn z(q: usize) -> Self {
        Self::new(GateKind::Z, vec![q])
    }
    pub fn h(q: usize) -> Self {
        Self::new(GateKind::H, vec![q])
    }
    pub fn rx(theta: RealTerm, q: usize) -> Self {
        Self::new(GateKind::RX(theta), vec![q])
    }
    pub fn rz(phi: RealTerm, q: usize) -> Self {
        Self::new(GateKind::RZ(phi), vec![q])
    }
    pub fn rk(k: RealTerm, q: usize) -> Self {
        Self::new(GateKind::Rk(k), vec![q])
    }
    pub fn swap(a: usize, b: usize) -> Self {
        Self::new(GateKind::Swap, vec![a, b])
    }
    pub fn cx(c: usize, t: usize) -> Self {
        Self::new(GateKind::CX, vec![c, t])
    }
    pub fn cz(c: usize, t: usize) -> Self {
        Self::new(GateKind::CZ, vec![c, t])
    }
    pub fn ccx(c0: usize, c1: usize, t: usize) -> Self {
        Self::x(t).controlled(vec![c0, c1])
    }
    pub fn custom(matrix: Vec<Vec<ComplexTerm>>, targets: Vec<usize>) -> Self {
        Self::new(GateKind::CustomMatrix(matrix), targets)
    }
    pub fn custom_const(matrix: &[Vec<Complex64>], targets: Vec<usize>) -> Self {
        let m = matrix
            .iter()
            .map(|row| row.iter().map(|c| ComplexTerm::constant(*c)).collect())
            .collect();
        Self::custom(m, targets)
    }

    /// Adds control qubits in front of this gate.
    pub fn controlled(self, controls: Vec<usize>) -> Self {
        let targets = self.targets.clone();
        GateSpec { kind: GateKind::Controlled { base: Box::new(self), controls }, targets }
    }

    pub fn controls(&self) -> Vec<usize> {
        match &self.kind {
            GateKind::CX | GateKind::CZ => vec![self.targets[0]],
            GateKind::Controlled { base, controls } => {
                let mut c = controls.clone();
                c.extend(base.controls());
                c
            }
            _ => Vec::new(),
        }
    }

    /// Qubits the gate acts on non-trivially besides its controls.
    pub fn acted_targets(&self) -> Vec<usize> {
        match &self.kind {
            GateKind::CX | GateKind::CZ => vec![self.targets[1]],
            GateKind::Controlled { base, .. } => base.acted_targets(),
            _ => self.targets.clone(),
        }
    }

    /// Controls followed by acted-on targets: the qubit order of `matrix_for`.
    pub fn qubit_order(&self) -> Vec<usize> {
        let mut q = self.controls();
        q.extend(self.acted_targets());
        q
    }

    pub fn params(&self, out: &mut BTreeSet<String>) {
        match &self.kind {
            GateKind::RX(t) | GateKind::RZ(t) | GateKind::Rk(t) => t.collect_vars(out),
            GateKind::CustomMatrix(m) => {
                for row in m {
                    for c in row {
                        c.re.collect_vars(out);
                        c.im.collect_vars(out);
                    }
                }
            }
            GateKind::Controlled { base, .. } => base.params(out),
            _ => {}
        }
    }

    pub fn name(&self) -> String {
        match &self.kind {
            GateKind::Identity => "I".into(),
            GateKind::X => "X".into(),
            GateKind::Z => "Z".into(),
            GateKind::H => "H".into(),
            GateKind::RX(t) => format!("RX({t})"),
            GateKind::RZ(t) => format!("RZ({t})"),
            GateKind::Rk(k) => format!("R_k({k})"),
            GateKind::Swap => "SWAP".into(),
            GateKind::CX => "CX".into(),
            GateKind::CZ => "CZ".into(),
            GateKind::CustomMatrix(_) => "U".into(),
            GateKind::Controlled { base, controls } => format!("C{}{}", controls.len(), base.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StateOp {
    Gate(GateSpec),
    Measure(Vec<usize>),
}

impl StateOp {
    pub fn describe(&self) -> String {
        match self {
            StateOp::Gate(g) => {
                let qs: Vec<String> = g.qubit_order().iter().map(|q| format!("q{q}")).collect();
                format!("{}({})", g.name(), qs.join(","))
            }
            StateOp::Measure(qs) => {
                let qs: Vec<String> = qs.iter().map(|q| format!("q{q}")).collect();
                format!("M({})", qs.join(","))
            }
        }
    }
}

/// Union of targets, controls, and measured indices.
pub fn touched_qubits(op: &StateOp) -> BTreeSet<usize> {
    match op {
        StateOp::Gate(g) => g.qubit_order().into_iter().collect(),
        StateOp::Measure(qs) => qs.iter().copied().collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    /// Upper bound excluded, as in a half-open turn `[0, 1)`.
    pub hi_open: bool,
}

impl Param {
    pub fn free(name: impl Into<String>) -> Self {
        Param { name: name.into(), lo: None, hi: None, hi_open: false }
    }

    pub fn bounded(name: impl Into<String>, lo: f64, hi: f64, hi_open: bool) -> Self {
        Param { name: name.into(), lo: Some(lo), hi: Some(hi), hi_open }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Valuation {
    /// Any single-qubit state; no assertion.
    FullHilbert,
    /// One of the listed basis states (each 0 or 1).
    BasisSet(Vec<u8>),
    /// A fixed single-qubit state (α, β).
    Concrete(Complex64, Complex64),
    /// A fixed joint state of contiguous qubits, 2^k amplitudes.
    Joint(Vec<Complex64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialValuation {
    pub qubits: Vec<usize>,
    pub valuation: Valuation,
}

impl InitialValuation {
    pub fn single(q: usize, valuation: Valuation) -> Self {
        InitialValuation { qubits: vec![q], valuation }
    }

    pub fn joint(qubits: Vec<usize>, amps: Vec<Complex64>) -> Self {
        InitialValuation { qubits, valuation: Valuation::Joint(amps) }
    }

    pub fn bell(q0: usize, q1: usize) -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let z = Complex64::new(0.0, 0.0);
        Self::joint(vec![q0, q1], vec![Complex64::new(h, 0.0), z, z, Complex64::new(h, 0.0)])
    }
}

/// Validated model. Per-qubit valuations are resolved: `valuation_of(q)`
/// returns the entry covering `q` (FullHilbert when none was given).
#[derive(Debug, Clone, PartialEq)]
pub struct ProgramModel {
    pub n_qubits: usize,
    pub ops: Vec<StateOp>,
    pub params: Vec<Param>,
    pub initial: Vec<InitialValuation>,
}

pub fn build_program(
    n_qubits: usize,
    ops: Vec<StateOp>,
    params: Vec<Param>,
    initial_valuations: Vec<InitialValuation>,
) -> Result<ProgramModel, ModelError> {
    if n_qubits == 0 {
        return Err(ModelError::NoQubits);
    }
    let check = |q: usize| {
        if q >= n_qubits {
            Err(ModelError::IndexOutOfRange { index: q, n_qubits })
        } else {
            Ok(())
        }
    };
    let declared: BTreeSet<&str> = params.iter().map(|p| p.name.as_str()).collect();
    for op in &ops {
        match op {
            StateOp::Gate(g) => {
                validate_gate(g, n_qubits)?;
                let mut used = BTreeSet::new();
                g.params(&mut used);
                if let Some(p) = used.iter().find(|p| !declared.contains(p.as_str())) {
                    return Err(ModelError::UnboundParameter(p.clone()));
                }
            }
            StateOp::Measure(qs) => {
                if qs.is_empty() {
                    return Err(ModelError::InvalidGate("empty measurement".into()));
                }
                let mut seen = BTreeSet::new();
                for &q in qs {
                    check(q)?;
                    if !seen.insert(q) {
                        return Err(ModelError::DuplicateTarget(q));
                    }
                }
            }
        }
    }
    let mut covered = BTreeSet::new();
    for iv in &initial_valuations {
        if iv.qubits.is_empty() {
            return Err(ModelError::InvalidValuation("empty qubit list".into()));
        }
        for &q in &iv.qubits {
            check(q)?;
            if !covered.insert(q) {
                return Err(ModelError::InvalidValuation(format!("qubit {q} initialised twice")));
            }
        }
        match &iv.valuation {
            Valuation::Joint(amps) => {
                let k = iv.qubits.len();
                if amps.len() != 1 << k {
                    return Err(ModelError::InvalidValuation(format!(
                        "joint state on {k} qubits needs {} amplitudes, got {}",
                        1 << k,
                        amps.len()
                    )));
                }
                if iv.qubits.windows(2).any(|w| w[1] != w[0] + 1) {
                    return Err(ModelError::InvalidValuation("joint state qubits must be contiguous".into()));
                }
                let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
                if (norm - 1.0).abs() > 1e-9 {
                    return Err(ModelError::InvalidValuation(format!("joint state norm {norm}")));
                }
            }
            other => {
                if iv.qubits.len() != 1 {
                    return Err(ModelError::InvalidValuation(
                        "only joint states may span several qubits".into(),
                    ));
                }
                match other {
                    Valuation::BasisSet(bits) => {
                        if bits.is_empty() || bits.iter().any(|b| *b > 1) {
                            return Err(ModelError::InvalidValuation(format!("basis set {bits:?}")));
                        }
                    }
                    Valuation::Concrete(a, b) => {
                        let norm = a.norm_sqr() + b.norm_sqr();
                        if (norm - 1.0).abs() > 1e-9 {
                            return Err(ModelError::InvalidValuation(format!("qubit norm {norm}")));
                        }
                        if a.im.abs() > 1e-12 || a.re < -1e-12 {
                            return Err(ModelError::InvalidValuation(
                                "concrete qubit needs a real non-negative alpha".into(),
                            ));
                        }
                    }
                    _ => {}
                }
            }
        }
    }
    Ok(ProgramModel { n_qubits, ops, params, initial: initial_valuations })
}

fn validate_gate(g: &GateSpec, n_qubits: usize) -> Result<(), ModelError> {
    let order = g.qubit_order();
    let mut seen = BTreeSet::new();
    for &q in &order {
        if q >= n_qubits {
            return Err(ModelError::IndexOutOfRange { index: q, n_qubits });
        }
        if !seen.insert(q) {
            return Err(ModelError::DuplicateTarget(q));
        }
    }
    let arity = match &g.kind {
        GateKind::Swap | GateKind::CX | GateKind::CZ => Some(2),
        GateKind::CustomMatrix(m) => {
            let k = g.targets.len();
            if m.len() != 1 << k || m.iter().any(|r| r.len() != 1 << k) {
                return Err(ModelError::InvalidGate(format!("custom matrix must be {0}x{0}", 1 << k)));
            }
            None
        }
        GateKind::Controlled { base, controls } => {
            if controls.is_empty() {
                return Err(ModelError::InvalidGate("controlled gate without controls".into()));
            }
            if base.targets != g.targets {
                return Err(ModelError::InvalidGate("controlled gate targets differ from base".into()));
            }
            validate_gate(base, n_qubits)?;
            None
        }
        _ => Some(1),
    };
    if let Some(a) = arity {
        if g.targets.len() != a {
            return Err(ModelError::InvalidGate(format!("{} expects {a} qubits", g.name())));
        }
    }
    Ok(())
}

impl ProgramModel {
    /// Number of symbolic states, one more than the number of operations.
    pub fn n_states(&self) -> usize {
        self.ops.len() + 1
    }

    pub fn valuation_of(&self, q: usize) -> (&[usize], &Valuation) {
        static FULL: Valuation = Valuation::FullHilbert;
        for iv in &self.initial {
            if iv.qubits.contains(&q) {
                return (&iv.qubits, &iv.valuation);
            }
        }
        (&[], &FULL)
    }

    /// Measured qubit count over the whole program.
    pub fn measured_count(&self) -> usize {
        self.ops
            .iter()
            .map(|op| match op {
                StateOp::Measure(qs) => qs.len(),
                _ => 0,
            })
            .sum()
    }

    /// Measured qubits before state `state` (i.e. among the first `state` ops).
    pub fn measured_before(&self, state: usize) -> usize {
        self.ops[..state]
            .iter()
            .map(|op| match op {
                StateOp::Measure(qs) => qs.len(),
                _ => 0,
            })
            .sum()
    }

    /// Branch labels that exist at a given state index.
    pub fn state_branches(&self, state: usize) -> Vec<String> {
        all_labels(self.measured_before(state))
    }

    pub fn param(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }
}

fn all_labels(k: usize) -> Vec<String> {
    if k == 0 {
        return vec![String::new()];
    }
    (0..1usize << k).map(|i| format!("{:0width$b}", i, width = k)).collect()
}

/// All outcome bit-strings at the end of the program, lexicographic.
pub fn branch_labels(p: &ProgramModel) -> Vec<String> {
    all_labels(p.measured_count())
}
