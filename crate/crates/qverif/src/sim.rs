//! Dense state-vector simulator, kept independent of the symbolic gate
//! catalog so it can serve as an oracle for the encoder.
//!
//! Qubit 0 is the most significant bit of an amplitude index.

use std::collections::HashMap;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use thiserror::Error;

use crate::expr::RealTerm;
use crate::qpm::{branch_labels, GateKind, GateSpec, ProgramModel, StateOp, Valuation};
use crate::spec::{guarded_robustness, robustness, BranchSel, QubitRef, Role, SpecEnv, SpecError, SpecFormula, SymRef};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("branch has probability {0:e}")]
    ZeroProbabilityBranch(f64),
    #[error("branch choice `{choice}` has length {got}, expected {expected}")]
    BranchLength { choice: String, got: usize, expected: usize },
    #[error("input state has {got} amplitudes, expected {expected}")]
    InputSize { got: usize, expected: usize },
    #[error("input state is not normalized (norm² = {0})")]
    NotNormalized(f64),
    #[error("parameter `{0}` has no value")]
    UnboundParameter(String),
}

type C = Complex64;

fn c(re: f64, im: f64) -> C {
    C::new(re, im)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseState {
    pub n_qubits: usize,
    pub amps: Vec<C>,
}

impl DenseState {
    pub fn zero(n_qubits: usize) -> Self {
        Self::basis(n_qubits, 0)
    }

    pub fn basis(n_qubits: usize, index: usize) -> Self {
        let mut amps = vec![c(0.0, 0.0); 1 << n_qubits];
        amps[index] = c(1.0, 0.0);
        DenseState { n_qubits, amps }
    }

    pub fn from_amps(amps: Vec<C>) -> Self {
        let n_qubits = amps.len().trailing_zeros() as usize;
        assert_eq!(1 << n_qubits, amps.len(), "amplitude count must be a power of two");
        DenseState { n_qubits, amps }
    }

    /// Tensor product of single-qubit states, qubit 0 first.
    pub fn product(qubits: &[(C, C)]) -> Self {
        let mut amps = vec![c(1.0, 0.0)];
        for (a, b) in qubits {
            let mut next = Vec::with_capacity(amps.len() * 2);
            for x in &amps {
                next.push(x * a);
                next.push(x * b);
            }
            amps = next;
        }
        Self::from_amps(amps)
    }

    pub fn tensor(&self, other: &DenseState) -> DenseState {
        let mut amps = Vec::with_capacity(self.amps.len() * other.amps.len());
        for a in &self.amps {
            for b in &other.amps {
                amps.push(a * b);
            }
        }
        Self::from_amps(amps)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    fn bit(&self, index: usize, q: usize) -> usize {
        (index >> (self.n_qubits - 1 - q)) & 1
    }

    /// Applies a 2^k matrix to the listed qubits (first listed = most
    /// significant bit of the matrix index).
    pub fn apply_matrix(&mut self, qubits: &[usize], m: &[Vec<C>]) {
        let k = qubits.len();
        assert_eq!(m.len(), 1 << k);
        let shifts: Vec<usize> = qubits.iter().map(|q| self.n_qubits - 1 - q).collect();
        let mask: usize = shifts.iter().map(|s| 1 << s).sum();
        let mut out = vec![c(0.0, 0.0); self.amps.len()];
        let mut sub = vec![c(0.0, 0.0); 1 << k];
        for base in 0..self.amps.len() {
            if base & mask != 0 {
                continue;
            }
            let idx = |local: usize| -> usize {
                let mut i = base;
                for (j, s) in shifts.iter().enumerate() {
                    if (local >> (k - 1 - j)) & 1 == 1 {
                        i |= 1 << s;
                    }
                }
                i
            };
            for (local, slot) in sub.iter_mut().enumerate() {
                *slot = self.amps[idx(local)];
            }
            for (row, mrow) in m.iter().enumerate() {
                let mut acc = c(0.0, 0.0);
                for (col, x) in sub.iter().enumerate() {
                    acc += mrow[col] * x;
                }
                out[idx(row)] = acc;
            }
        }
        self.amps = out;
    }

    /// Probability of seeing `bits` on `qubits`.
    pub fn outcome_probability(&self, qubits: &[usize], bits: &[u8]) -> f64 {
        self.amps
            .iter()
            .enumerate()
            .filter(|(i, _)| qubits.iter().zip(bits).all(|(q, b)| self.bit(*i, *q) as u8 == *b))
            .map(|(_, a)| a.norm_sqr())
            .sum()
    }

    /// Projects onto the outcome and renormalizes; returns its probability.
    pub fn measure(&mut self, qubits: &[usize], bits: &[u8]) -> Result<f64, SimError> {
        let p = self.outcome_probability(qubits, bits);
        if p < 1e-12 {
            return Err(SimError::ZeroProbabilityBranch(p));
        }
        let scale = 1.0 / p.sqrt();
        let n = self.n_qubits;
        for (i, a) in self.amps.iter_mut().enumerate() {
            let keep = qubits.iter().zip(bits).all(|(q, b)| ((i >> (n - 1 - q)) & 1) as u8 == *b);
            *a = if keep { *a * scale } else { c(0.0, 0.0) };
        }
        Ok(p)
    }

    /// The single-qubit state of `q` when the register factors as
    /// |q⟩ ⊗ rest; the phase is fixed so that α is real and non-negative
    /// (β real and positive when α vanishes).
    pub fn qubit(&self, q: usize, tol: f64) -> Option<(C, C)> {
        let shift = self.n_qubits - 1 - q;
        let (mut best, mut best_norm) = (0usize, -1.0);
        for i in 0..self.amps.len() {
            if (i >> shift) & 1 == 0 {
                let n = self.amps[i].norm_sqr() + self.amps[i | (1 << shift)].norm_sqr();
                if n > best_norm {
                    best_norm = n;
                    best = i;
                }
            }
        }
        if best_norm <= 0.0 {
            return None;
        }
        let (a, b) = (self.amps[best], self.amps[best | (1 << shift)]);
        let norm = (a.norm_sqr() + b.norm_sqr()).sqrt();
        let (mut a, mut b) = (a / norm, b / norm);
        // rest amplitude r_j = (a*·x0_j + b*·x1_j); check x ≈ (a,b) ⊗ r
        let total = self.norm_sqr().sqrt();
        for i in 0..self.amps.len() {
            if (i >> shift) & 1 == 0 {
                let (x0, x1) = (self.amps[i], self.amps[i | (1 << shift)]);
                let r = a.conj() * x0 + b.conj() * x1;
                if (x0 - a * r).norm() > tol * total || (x1 - b * r).norm() > tol * total {
                    return None;
                }
            }
        }
        let phase = if a.norm() > 1e-12 { a.conj() / a.norm() } else { b.conj() / b.norm() };
        a *= phase;
        b *= phase;
        Some((c(a.re, 0.0), b))
    }

    /// Largest componentwise distance to another state.
    pub fn distance(&self, other: &DenseState) -> f64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

fn eval_param(t: &RealTerm, params: &HashMap<String, f64>) -> Result<f64, SimError> {
    t.eval(&|n| params.get(n).copied()).map_err(|e| match e {
        crate::expr::ExprError::Unbound(n) | crate::expr::ExprError::UndeclaredVariable(n) => {
            SimError::UnboundParameter(n)
        }
    })
}

/// Numeric gate matrix in the gate's qubit order (controls first).
pub fn gate_matrix(g: &GateSpec, params: &HashMap<String, f64>) -> Result<Vec<Vec<C>>, SimError> {
    let (z, o, s) = (c(0.0, 0.0), c(1.0, 0.0), c(FRAC_1_SQRT_2, 0.0));
    Ok(match &g.kind {
        GateKind::Identity => vec![vec![o, z], vec![z, o]],
        GateKind::X => vec![vec![z, o], vec![o, z]],
        GateKind::Z => vec![vec![o, z], vec![z, -o]],
        GateKind::H => vec![vec![s, s], vec![s, -s]],
        GateKind::RX(t) => {
            let h = eval_param(t, params)? / 2.0;
            vec![vec![c(h.cos(), 0.0), c(0.0, -h.sin())], vec![c(0.0, -h.sin()), c(h.cos(), 0.0)]]
        }
        GateKind::RZ(p) => vec![vec![o, z], vec![z, C::from_polar(1.0, eval_param(p, params)?)]],
        GateKind::Rk(k) => {
            let k = eval_param(k, params)?;
            vec![vec![o, z], vec![z, C::from_polar(1.0, 2.0 * PI / 2f64.powf(k))]]
        }
        GateKind::Swap => vec![
            vec![o, z, z, z],
            vec![z, z, o, z],
            vec![z, o, z, z],
            vec![z, z, z, o],
        ],
        GateKind::CX => vec![
            vec![o, z, z, z],
            vec![z, o, z, z],
            vec![z, z, z, o],
            vec![z, z, o, z],
        ],
        GateKind::CZ => vec![
            vec![o, z, z, z],
            vec![z, o, z, z],
            vec![z, z, o, z],
            vec![z, z, z, -o],
        ],
        GateKind::CustomMatrix(m) => {
            let mut out = Vec::new();
            for row in m {
                let mut r = Vec::new();
                for e in row {
                    r.push(c(eval_param(&e.re, params)?, eval_param(&e.im, params)?));
                }
                out.push(r);
            }
            out
        }
        GateKind::Controlled { base, controls } => {
            let b = gate_matrix(base, params)?;
            let dim = b.len() << controls.len();
            let off = dim - b.len();
            let mut m = vec![vec![z; dim]; dim];
            for (i, row) in m.iter_mut().enumerate().take(off) {
                row[i] = o;
            }
            for i in 0..b.len() {
                for j in 0..b.len() {
                    m[off + i][off + j] = b[i][j];
                }
            }
            m
        }
    })
}

/// The per-state states along one full branch; `states[i]` is the state
/// after `i` operations, with `probability` the product of outcome
/// probabilities.
#[derive(Debug, Clone)]
pub struct SimTrace {
    pub states: Vec<DenseState>,
    pub probability: f64,
    /// Probability of the outcomes seen up to each state.
    pub cumulative: Vec<f64>,
    pub branch: String,
}

pub fn run_trace(
    p: &ProgramModel,
    input: &DenseState,
    branch_choice: &str,
    params: &HashMap<String, f64>,
) -> Result<SimTrace, SimError> {
    if input.n_qubits != p.n_qubits {
        return Err(SimError::InputSize { got: input.dim(), expected: 1 << p.n_qubits });
    }
    let norm = input.norm_sqr();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(SimError::NotNormalized(norm));
    }
    let expected = p.measured_count();
    if branch_choice.len() != expected {
        return Err(SimError::BranchLength {
            choice: branch_choice.to_string(),
            got: branch_choice.len(),
            expected,
        });
    }
    let bits: Vec<u8> = branch_choice.bytes().map(|b| b - b'0').collect();
    let mut consumed = 0;
    let mut prob = 1.0;
    let mut state = input.clone();
    let mut states = vec![state.clone()];
    let mut cumulative = vec![1.0];
    for op in &p.ops {
        match op {
            StateOp::Gate(g) => {
                let m = gate_matrix(g, params)?;
                state.apply_matrix(&g.qubit_order(), &m);
            }
            StateOp::Measure(qs) => {
                let b = &bits[consumed..consumed + qs.len()];
                consumed += qs.len();
                prob *= state.measure(qs, b)?;
            }
        }
        states.push(state.clone());
        cumulative.push(prob);
    }
    Ok(SimTrace { states, probability: prob, cumulative, branch: branch_choice.to_string() })
}

/// Final state and branch probability.
pub fn run_concrete(
    p: &ProgramModel,
    input: &DenseState,
    branch_choice: &str,
) -> Result<(DenseState, f64), SimError> {
    run_concrete_with(p, input, branch_choice, &HashMap::new())
}

pub fn run_concrete_with(
    p: &ProgramModel,
    input: &DenseState,
    branch_choice: &str,
    params: &HashMap<String, f64>,
) -> Result<(DenseState, f64), SimError> {
    let t = run_trace(p, input, branch_choice, params)?;
    Ok((t.states.last().cloned().expect("at least the input state"), t.probability))
}

/// Builds the input register from per-qubit values for the qubits whose
/// valuation is not fixed; fixed valuations (concrete, joint) are filled in
/// from the model. `free[q]` is used for FullHilbert qubits and for basis
/// sets with more than one element.
pub fn input_state(p: &ProgramModel, free: &dyn Fn(usize) -> (C, C)) -> DenseState {
    let mut state: Option<DenseState> = None;
    let mut q = 0;
    while q < p.n_qubits {
        let (group, val) = p.valuation_of(q);
        let part = match val {
            Valuation::Joint(amps) => {
                let part = DenseState::from_amps(amps.clone());
                q += group.len();
                part
            }
            Valuation::Concrete(a, b) => {
                q += 1;
                DenseState::product(&[(*a, *b)])
            }
            Valuation::BasisSet(bits) if bits.iter().all(|b| *b == bits[0]) => {
                q += 1;
                let v = if bits[0] == 0 { (c(1.0, 0.0), c(0.0, 0.0)) } else { (c(0.0, 0.0), c(1.0, 0.0)) };
                DenseState::product(&[v])
            }
            Valuation::FullHilbert | Valuation::BasisSet(_) => {
                let part = DenseState::product(&[free(q)]);
                q += 1;
                part
            }
        };
        state = Some(match state {
            None => part,
            Some(s) => s.tensor(&part),
        });
    }
    state.expect("at least one qubit")
}

/// Computational basis state as per-qubit bits, qubit 0 first.
pub fn index_bits(n: usize, index: usize) -> Vec<u8> {
    (0..n).map(|q| ((index >> (n - 1 - q)) & 1) as u8).collect()
}

/// A specification environment backed by simulated traces, one per
/// reachable branch of a single input.
pub struct TraceEnv<'a> {
    pub program: &'a ProgramModel,
    pub traces: Vec<SimTrace>,
    pub params: HashMap<String, f64>,
}

impl<'a> TraceEnv<'a> {
    /// Runs every branch; branches of probability zero are skipped.
    pub fn run(p: &'a ProgramModel, input: &DenseState, params: HashMap<String, f64>) -> Result<Self, SimError> {
        let mut traces = Vec::new();
        for label in branch_labels(p) {
            match run_trace(p, input, &label, &params) {
                Ok(t) => traces.push(t),
                Err(SimError::ZeroProbabilityBranch(_)) => {}
                Err(e) => return Err(e),
            }
        }
        Ok(TraceEnv { program: p, traces, params })
    }

    fn trace(&self, label: &str) -> Option<&SimTrace> {
        self.traces.iter().find(|t| t.branch.starts_with(label))
    }
}

impl SpecEnv for TraceEnv<'_> {
    fn labels_at(&self, state: usize) -> Vec<String> {
        let k = self.program.measured_before(state.min(self.program.ops.len()));
        let mut out: Vec<String> = self.traces.iter().map(|t| t.branch[..k].to_string()).collect();
        out.dedup();
        out
    }

    fn scalar(&self, r: &SymRef) -> Result<f64, SpecError> {
        let BranchSel::Label(label) = &r.branch else {
            return Err(SpecError::UnresolvedSymRef("unexpanded branch selector".into()));
        };
        let unresolved = || SpecError::UnresolvedSymRef(format!("{}[{}][{}]", r.role.name(), r.state, r.index));
        let t = self.trace(label).ok_or_else(unresolved)?;
        let state = t.states.get(r.state).ok_or_else(unresolved)?;
        if r.role.is_amplitude() {
            let a = *state.amps.get(r.index).ok_or_else(unresolved)?;
            return Ok(if r.role == Role::AmpRe { a.re } else { a.im });
        }
        if r.index >= state.n_qubits {
            return Err(unresolved());
        }
        let (a, b) = state
            .qubit(r.index, 1e-6)
            .ok_or(SpecError::EntangledRef { state: r.state, qubit: r.index })?;
        let theta = 2.0 * a.re.clamp(-1.0, 1.0).acos();
        let phi = if b.norm() < 1e-12 || a.re > 1.0 - 1e-12 { 0.0 } else { b.im.atan2(b.re).rem_euclid(2.0 * PI) };
        Ok(match r.role {
            Role::Alpha => a.re,
            Role::BetaRe => b.re,
            Role::BetaIm => b.im,
            Role::Phi => phi,
            Role::Theta => theta,
            _ => unreachable!(),
        })
    }

    fn qubit(&self, q: &QubitRef) -> Result<Option<(C, C)>, SpecError> {
        let BranchSel::Label(label) = &q.branch else {
            return Err(SpecError::UnresolvedSymRef("unexpanded branch selector".into()));
        };
        let unresolved = || SpecError::UnresolvedSymRef(format!("q[{}][{}]", q.state, q.qubit));
        let t = self.trace(label).ok_or_else(unresolved)?;
        let state = t.states.get(q.state).ok_or_else(unresolved)?;
        if q.qubit >= state.n_qubits {
            return Err(unresolved());
        }
        Ok(state.qubit(q.qubit, 1e-6))
    }

    fn param(&self, name: &str) -> Option<f64> {
        self.params.get(name).copied()
    }
}

/// Tolerance when evaluating a specification on simulated states.
pub const SPEC_TOLERANCE: f64 = 1e-7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CheckError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Spec(#[from] SpecError),
}

/// Robustness of `spec` for one input over all reachable branches,
/// relaxed by [`SPEC_TOLERANCE`]: negative means violated.
pub fn evaluate_input(
    p: &ProgramModel,
    spec: &SpecFormula,
    input: &DenseState,
    params: &HashMap<String, f64>,
) -> Result<f64, CheckError> {
    let env = TraceEnv::run(p, input, params.clone())?;
    Ok(robustness(spec, &env, SPEC_TOLERANCE)?)
}

/// Guarded robustness of the specification on one input: negative by how
/// much the failing obligation is missed.
pub fn violation_margin(
    p: &ProgramModel,
    spec: &SpecFormula,
    input: &DenseState,
    params: &HashMap<String, f64>,
) -> Result<f64, CheckError> {
    let env = TraceEnv::run(p, input, params.clone())?;
    Ok(guarded_robustness(spec, &env, SPEC_TOLERANCE)?)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Enumeration {
    Pass { inputs: usize },
    Fail { input: usize, robustness: f64 },
}

/// Runs every listed basis input (qubit 0 most significant; qubits with a
/// fixed valuation ignore their bit) and evaluates the specification.
pub fn enumerate_verify(
    p: &ProgramModel,
    spec: &SpecFormula,
    inputs: &[usize],
    params: &HashMap<String, f64>,
) -> Result<Enumeration, CheckError> {
    for &x in inputs {
        let bits = index_bits(p.n_qubits, x);
        let input = input_state(p, &|q| if bits[q] == 0 { (c(1.0, 0.0), c(0.0, 0.0)) } else { (c(0.0, 0.0), c(1.0, 0.0)) });
        let r = evaluate_input(p, spec, &input, params)?;
        if r < 0.0 {
            return Ok(Enumeration::Fail { input: x, robustness: r });
        }
    }
    Ok(Enumeration::Pass { inputs: inputs.len() })
}

/// Evaluates the specification on random inputs: free qubits uniform on
/// the Bloch sphere, basis-set qubits uniform over their set.
/// `Fail::input` is the sample number.
pub fn sample_verify(
    p: &ProgramModel,
    spec: &SpecFormula,
    params: &HashMap<String, f64>,
    samples: usize,
    seed: u64,
) -> Result<Enumeration, CheckError> {
    let mut rng = StdRng::seed_from_u64(seed);
    for k in 0..samples {
        let picks: Vec<(C, C)> = (0..p.n_qubits)
            .map(|q| match p.valuation_of(q).1 {
                Valuation::BasisSet(bits) => {
                    if bits[rng.gen_range(0..bits.len())] == 0 {
                        (c(1.0, 0.0), c(0.0, 0.0))
                    } else {
                        (c(0.0, 0.0), c(1.0, 0.0))
                    }
                }
                _ => {
                    let theta = (1.0 - 2.0 * rng.gen::<f64>()).acos();
                    let phi = rng.gen_range(0.0..2.0 * PI);
                    (c((theta / 2.0).cos(), 0.0), C::from_polar((theta / 2.0).sin(), phi))
                }
            })
            .collect();
        let input = input_state(p, &|q| picks[q]);
        let r = evaluate_input(p, spec, &input, params)?;
        if r < 0.0 {
            return Ok(Enumeration::Fail { input: k, robustness: r });
        }
    }
    Ok(Enumeration::Pass { inputs: samples })
}
