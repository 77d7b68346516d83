//! Gate catalog: direct mappings on qubit tuples and gate matrices.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;
use thiserror::Error;

use crate::expr::{fold_constants, ComplexTerm, ExprError, RealTerm};
use crate::qpm::{GateKind, GateSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GateError {
    #[error("gate {0} has no matrix form")]
    UnsupportedGate(String),
}

/// The amplitude view of one qubit, α and β as complex terms.
#[derive(Debug, Clone, PartialEq)]
pub struct QubitAmps {
    pub alpha: ComplexTerm,
    pub beta: ComplexTerm,
}

impl QubitAmps {
    pub fn new(alpha: ComplexTerm, beta: ComplexTerm) -> Self {
        QubitAmps { alpha, beta }
    }

    pub fn constant(alpha: Complex64, beta: Complex64) -> Self {
        QubitAmps::new(ComplexTerm::constant(alpha), ComplexTerm::constant(beta))
    }

    pub fn fold(&self) -> Self {
        QubitAmps::new(self.alpha.fold(), self.beta.fold())
    }

    pub fn eval(&self, env: &dyn Fn(&str) -> Option<f64>) -> Result<(Complex64, Complex64), ExprError> {
        Ok((self.alpha.eval(env)?, self.beta.eval(env)?))
    }
}

#[derive(Debug, Clone, PartialEq)]
enum MappingKind {
    Identity,
    X,
    Z,
    H,
    /// β ↦ e^{iφ}·β
    Phase(RealTerm),
    Swap,
    Controlled { base: Box<MappingKind>, n_controls: usize },
}

/// A gate as a bijection on qubit tuples.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectMapping {
    pub arity: usize,
    /// Valid only when every control qubit is a computational basis state.
    pub basis_control_only: bool,
    kind: MappingKind,
}

impl DirectMapping {
    /// Number of leading inputs that are controls.
    pub fn n_controls(&self) -> usize {
        match &self.kind {
            MappingKind::Controlled { n_controls, .. } => *n_controls,
            _ => 0,
        }
    }

    /// Whether the mapping keeps α of every output qubit equal to some
    /// input α (so a real non-negative α stays one).
    pub fn preserves_alpha(&self) -> bool {
        fn go(k: &MappingKind) -> bool {
            match k {
                MappingKind::Identity | MappingKind::Z | MappingKind::Phase(_) | MappingKind::Swap => true,
                MappingKind::X | MappingKind::H => false,
                MappingKind::Controlled { base, .. } => go(base),
            }
        }
        go(&self.kind)
    }

    /// Whether the base action permutes or sign-flips basis states only
    /// (X, Z, SWAP, identity and their controlled forms).
    pub fn is_classical(&self) -> bool {
        fn go(k: &MappingKind) -> bool {
            match k {
                MappingKind::Identity | MappingKind::X | MappingKind::Swap => true,
                MappingKind::Z | MappingKind::H | MappingKind::Phase(_) => false,
                MappingKind::Controlled { base, .. } => go(base),
            }
        }
        go(&self.kind)
    }

    /// The uncontrolled action on the target qubits.
    pub fn base(&self) -> DirectMapping {
        match &self.kind {
            MappingKind::Controlled { base, n_controls } => DirectMapping {
                arity: self.arity - n_controls,
                basis_control_only: false,
                kind: (**base).clone(),
            },
            _ => self.clone(),
        }
    }

    /// Controls are read through β_R, which is exactly the indicator of |1⟩
    /// for a basis-state control. The target update is t + c·(U(t) − t).
    pub fn apply(&self, inputs: &[QubitAmps]) -> Vec<QubitAmps> {
        assert_eq!(inputs.len(), self.arity, "mapping arity");
        apply_kind(&self.kind, inputs)
    }

    /// Apply with controls whose basis values are known: the result is the
    /// base action when all are 1, the identity otherwise.
    pub fn apply_known_controls(&self, controls: &[u8], targets: &[QubitAmps]) -> Vec<QubitAmps> {
        assert_eq!(controls.len(), self.n_controls());
        if controls.iter().all(|b| *b == 1) {
            self.base().apply(targets)
        } else {
            targets.to_vec()
        }
    }
}

fn apply_kind(kind: &MappingKind, inputs: &[QubitAmps]) -> Vec<QubitAmps> {
    let s = RealTerm::constant(FRAC_1_SQRT_2);
    match kind {
        MappingKind::Identity => inputs.to_vec(),
        MappingKind::X => vec![QubitAmps::new(inputs[0].beta.clone(), inputs[0].alpha.clone())],
        MappingKind::Z => vec![QubitAmps::new(inputs[0].alpha.clone(), -inputs[0].beta.clone())],
        MappingKind::H => {
            let (a, b) = (&inputs[0].alpha, &inputs[0].beta);
            vec![QubitAmps::new(
                (a.clone() + b.clone()).scale(s.clone()),
                (a.clone() - b.clone()).scale(s),
            )]
        }
        MappingKind::Phase(phi) => vec![QubitAmps::new(
            inputs[0].alpha.clone(),
            phase_factor(phi) * inputs[0].beta.clone(),
        )],
        MappingKind::Swap => vec![inputs[1].clone(), inputs[0].clone()],
        MappingKind::Controlled { base, n_controls } => {
            let (ctrl, tgt) = inputs.split_at(*n_controls);
            let c = ctrl
                .iter()
                .map(|q| q.beta.re.clone())
                .reduce(|a, b| a * b)
                .expect("at least one control");
            let moved = apply_kind(base, tgt);
            let mut out = ctrl.to_vec();
            for (t, m) in tgt.iter().zip(moved) {
                out.push(QubitAmps::new(
                    t.alpha.clone() + (m.alpha - t.alpha.clone()).scale(c.clone()),
                    t.beta.clone() + (m.beta - t.beta.clone()).scale(c.clone()),
                ));
            }
            out
        }
    }
}

/// e^{iφ}, folded to a numeric pair when φ is constant.
fn phase_factor(phi: &RealTerm) -> ComplexTerm {
    let phi = fold_constants(phi);
    match phi.as_const() {
        Some(p) => ComplexTerm::constant(Complex64::from_polar(1.0, p)),
        None => ComplexTerm::expi(phi),
    }
}

/// 2π/2^k, written as 2π·2^(−k) so that no division by a symbolic term
/// appears.
pub fn rk_angle(k: &RealTerm) -> RealTerm {
    let k = fold_constants(k);
    match k.as_const() {
        Some(kv) => RealTerm::constant(2.0 * PI / 2f64.powf(kv)),
        None => RealTerm::constant(2.0 * PI) * RealTerm::constant(2.0).pow(-k),
    }
}

pub fn mapping_for(g: &GateSpec) -> Option<DirectMapping> {
    fn kind_of(g: &GateSpec) -> Option<(MappingKind, usize, bool)> {
        Some(match &g.kind {
            GateKind::Identity => (MappingKind::Identity, 1, false),
            GateKind::X => (MappingKind::X, 1, false),
            GateKind::Z => (MappingKind::Z, 1, false),
            GateKind::H => (MappingKind::H, 1, false),
            GateKind::RZ(phi) => (MappingKind::Phase(phi.clone()), 1, false),
            GateKind::Rk(k) => (MappingKind::Phase(rk_angle(k)), 1, false),
            GateKind::Swap => (MappingKind::Swap, 2, false),
            GateKind::CX => (MappingKind::Controlled { base: Box::new(MappingKind::X), n_controls: 1 }, 2, true),
            GateKind::CZ => (MappingKind::Controlled { base: Box::new(MappingKind::Z), n_controls: 1 }, 2, true),
            GateKind::Controlled { base, controls } => {
                let (bk, ba, _) = kind_of(base)?;
                let (inner, inner_n) = match bk {
                    MappingKind::Controlled { base, n_controls } => (*base, n_controls),
                    other => (other, 0),
                };
                let n = controls.len() + inner_n;
                (MappingKind::Controlled { base: Box::new(inner), n_controls: n }, ba + controls.len(), true)
            }
            // The rotation acts on amplitudes, not as an angle shift.
            GateKind::RX(_) => return None,
            GateKind::CustomMatrix(_) => return None,
        })
    }
    let (kind, arity, basis_control_only) = kind_of(g)?;
    Some(DirectMapping { arity, basis_control_only, kind })
}

/// A 2^k × 2^k matrix of complex terms. Row/column index bit (k-1-j) is the
/// value of the j-th qubit of the gate's qubit order.
#[derive(Debug, Clone, PartialEq)]
pub struct GateMatrix {
    pub dim: usize,
    pub entries: Vec<Vec<ComplexTerm>>,
}

impl GateMatrix {
    pub fn from_const(m: &[Vec<Complex64>]) -> Self {
        GateMatrix {
            dim: m.len(),
            entries: m.iter().map(|r| r.iter().map(|c| ComplexTerm::constant(*c)).collect()).collect(),
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = vec![vec![Complex64::new(0.0, 0.0); dim]; dim];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = Complex64::new(1.0, 0.0);
        }
        Self::from_const(&m)
    }

    pub fn n_qubits(&self) -> usize {
        self.dim.trailing_zeros() as usize
    }

    pub fn eval(&self, env: &dyn Fn(&str) -> Option<f64>) -> Result<Vec<Vec<Complex64>>, ExprError> {
        self.entries.iter().map(|r| r.iter().map(|c| c.eval(env)).collect()).collect()
    }

    /// Numeric entries when every entry is closed.
    pub fn numeric(&self) -> Option<Vec<Vec<Complex64>>> {
        self.eval(&|_| None).ok()
    }

    /// U†U = I within `tol`; `None` for symbolic matrices.
    pub fn is_unitary(&self, tol: f64) -> Option<bool> {
        let m = self.numeric()?;
        Some(is_unitary(&m, tol))
    }
}

pub fn is_unitary(m: &[Vec<Complex64>], tol: f64) -> bool {
    let n = m.len();
    for i in 0..n {
        for j in 0..n {
            let mut s = Complex64::new(0.0, 0.0);
            for row in m {
                s += row[i].conj() * row[j];
            }
            let expect = if i == j { 1.0 } else { 0.0 };
            if (s - expect).norm() > tol {
                return false;
            }
        }
    }
    true
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn cterm(t: ComplexTerm) -> ComplexTerm {
    t.fold()
}

pub fn matrix_for(g: &GateSpec) -> Result<GateMatrix, GateError> {
    let z = c(0.0, 0.0);
    let o = c(1.0, 0.0);
    let s = c(FRAC_1_SQRT_2, 0.0);
    Ok(match &g.kind {
        GateKind::Identity => GateMatrix::identity(2),
        GateKind::X => GateMatrix::from_const(&[vec![z, o], vec![o, z]]),
        GateKind::Z => GateMatrix::from_const(&[vec![o, z], vec![z, -o]]),
        GateKind::H => GateMatrix::from_const(&[vec![s, s], vec![s, -s]]),
        GateKind::RX(theta) => {
            let half = fold_constants(&(RealTerm::constant(0.5) * theta.clone()));
            let (cs, sn) = match half.as_const() {
                Some(h) => (RealTerm::constant(h.cos()), RealTerm::constant(h.sin())),
                None => (half.clone().cos(), half.sin()),
            };
            GateMatrix {
                dim: 2,
                entries: vec![
                    vec![ComplexTerm::real(cs.clone()), cterm(ComplexTerm::new(RealTerm::zero(), -sn.clone()))],
                    vec![cterm(ComplexTerm::new(RealTerm::zero(), -sn)), ComplexTerm::real(cs)],
                ],
            }
        }
        GateKind::RZ(phi) => diag_phase(phi),
        GateKind::Rk(k) => diag_phase(&rk_angle(k)),
        GateKind::Swap => GateMatrix::from_const(&[
            vec![o, z, z, z],
            vec![z, z, o, z],
            vec![z, o, z, z],
            vec![z, z, z, o],
        ]),
        GateKind::CX => GateMatrix::from_const(&[
            vec![o, z, z, z],
            vec![z, o, z, z],
            vec![z, z, z, o],
            vec![z, z, o, z],
        ]),
        GateKind::CZ => GateMatrix::from_const(&[
            vec![o, z, z, z],
            vec![z, o, z, z],
            vec![z, z, o, z],
            vec![z, z, z, -o],
        ]),
        GateKind::CustomMatrix(m) => GateMatrix { dim: m.len(), entries: m.clone() },
        GateKind::Controlled { base, controls } => {
            let b = matrix_for(base)?;
            let dim = b.dim << controls.len();
            let mut m = GateMatrix::identity(dim);
            let off = dim - b.dim;
            for i in 0..b.dim {
                for j in 0..b.dim {
                    m.entries[off + i][off + j] = b.entries[i][j].clone();
                }
            }
            m
        }
    })
}

fn diag_phase(phi: &RealTerm) -> GateMatrix {
    let mut m = GateMatrix::identity(2);
    m.entries[1][1] = phase_factor(phi);
    m
}

/// M₀ = |0⟩⟨0|, M₁ = |1⟩⟨1|.
pub fn measurement_matrices() -> (GateMatrix, GateMatrix) {
    let z = c(0.0, 0.0);
    let o = c(1.0, 0.0);
    (
        GateMatrix::from_const(&[vec![o, z], vec![z, z]]),
        GateMatrix::from_const(&[vec![z, z], vec![z, o]]),
    )
}
