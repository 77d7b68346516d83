//! Benchmark programs with their specifications and fault-injected
//! variants.

use std::collections::HashMap;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{CmpOp, RealTerm};
use crate::qpm::{build_program, GateSpec, InitialValuation, ModelError, Param, ProgramModel, StateOp, Valuation};
use crate::sim::{enumerate_verify, sample_verify, CheckError, Enumeration};
use crate::spec::{BranchSel, QubitRef, QubitTarget, Role, SpecFormula, SpecTerm, StructuralRule};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BenchError {
    #[error("{name} does not support size {n} (allowed: {allowed})")]
    UnsupportedSize { name: &'static str, n: usize, allowed: &'static str },
    #[error("mutant {mutant} does not apply to {name}")]
    UnsupportedMutant { name: &'static str, mutant: String },
    #[error("unknown benchmark `{0}`")]
    UnknownBenchmark(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchName {
    Toffoli,
    Tp,
    Add,
    Qft,
    Qpe,
    Gdo,
}

impl BenchName {
    pub fn as_str(self) -> &'static str {
        match self {
            BenchName::Toffoli => "toffoli",
            BenchName::Tp => "tp",
            BenchName::Add => "add",
            BenchName::Qft => "qft",
            BenchName::Qpe => "qpe",
            BenchName::Gdo => "gdo",
        }
    }
}

impl std::str::FromStr for BenchName {
    type Err = BenchError;
    fn from_str(s: &str) -> Result<Self, BenchError> {
        Ok(match s {
            "toffoli" => BenchName::Toffoli,
            "tp" => BenchName::Tp,
            "add" => BenchName::Add,
            "qft" => BenchName::Qft,
            "qpe" => BenchName::Qpe,
            "gdo" => BenchName::Gdo,
            other => return Err(BenchError::UnknownBenchmark(other.to_string())),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkId {
    pub name: BenchName,
    pub n: Option<usize>,
}

impl BenchmarkId {
    pub fn new(name: BenchName, n: Option<usize>) -> Self {
        BenchmarkId { name, n }
    }

    pub fn label(&self) -> String {
        match self.n {
            Some(n) => format!("{}-{n}", self.name.as_str()),
            None => self.name.as_str().to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mutant {
    /// Teleportation without the final controlled-Z.
    DropCz,
    /// Teleportation without the CX correction.
    DropCx,
    /// Toffoli wrapper with the last X removed.
    DropX,
    /// Diffusion with diag(−1, 1) in place of Z on the multi-controlled gate.
    SignFlip,
}

impl Mutant {
    pub fn as_str(self) -> &'static str {
        match self {
            Mutant::DropCz => "drop-cz",
            Mutant::DropCx => "drop-cx",
            Mutant::DropX => "drop-x",
            Mutant::SignFlip => "sign-flip",
        }
    }
}

impl std::str::FromStr for Mutant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "drop-cz" => Mutant::DropCz,
            "drop-cx" => Mutant::DropCx,
            "drop-x" => Mutant::DropX,
            "sign-flip" => Mutant::SignFlip,
            other => return Err(format!("unknown mutant `{other}`")),
        })
    }
}

/// Inputs the simulator can enumerate for a self-consistency check.
#[derive(Debug, Clone, PartialEq)]
pub enum InputSpace {
    /// Basis indices over the whole register.
    Basis(Vec<usize>),
    /// Arbitrary states of the free qubits; checked by sampling.
    Continuous,
}

#[derive(Debug, Clone)]
pub struct Benchmark {
    pub id: BenchmarkId,
    pub mutant: Option<Mutant>,
    pub model: ProgramModel,
    pub spec: SpecFormula,
    pub rules: Vec<StructuralRule>,
    pub inputs: InputSpace,
    /// Parameter values used when simulating.
    pub sample_params: HashMap<String, f64>,
}

pub fn generate(id: BenchmarkId, mutant: Option<Mutant>) -> Result<Benchmark, BenchError> {
    let check = |lo: usize, hi: usize, default: usize, allowed: &'static str| -> Result<usize, BenchError> {
        let n = id.n.unwrap_or(default);
        if n < lo || n > hi {
            return Err(BenchError::UnsupportedSize { name: id.name.as_str(), n, allowed });
        }
        Ok(n)
    };
    let allowed_mutant = match (id.name, mutant) {
        (_, None) => true,
        (BenchName::Tp, Some(Mutant::DropCz | Mutant::DropCx)) => true,
        (BenchName::Toffoli, Some(Mutant::DropX)) => true,
        (BenchName::Gdo, Some(Mutant::SignFlip)) => true,
        _ => false,
    };
    if !allowed_mutant {
        return Err(BenchError::UnsupportedMutant {
            name: id.name.as_str(),
            mutant: mutant.map(|m| m.as_str()).unwrap_or_default().to_string(),
        });
    }
    let (mut b, n) = match id.name {
        BenchName::Tp => (teleportation(mutant)?, None),
        BenchName::Toffoli => (toffoli(mutant)?, None),
        BenchName::Add => {
            let n = check(1, 8, 8, "1–8")?;
            (adder(n)?, Some(n))
        }
        BenchName::Qft => {
            let n = check(2, 12, 3, "2–12")?;
            (qft(n)?, Some(n))
        }
        BenchName::Qpe => {
            let n = check(2, 5, 3, "2–5")?;
            (qpe(n, 1)?, Some(n))
        }
        BenchName::Gdo => {
            let n = check(2, 24, 3, "2–24")?;
            (diffusion(n, mutant)?, Some(n))
        }
    };
    b.id = BenchmarkId { name: id.name, n };
    b.mutant = mutant;
    Ok(b)
}

fn bench(model: ProgramModel, spec: SpecFormula, rules: Vec<StructuralRule>, inputs: InputSpace) -> Benchmark {
    Benchmark {
        id: BenchmarkId::new(BenchName::Tp, None),
        mutant: None,
        model,
        spec,
        rules,
        inputs,
        sample_params: HashMap::new(),
    }
}

fn root() -> BranchSel {
    BranchSel::root()
}

fn basis_target(bit: u8) -> QubitTarget {
    if bit == 0 {
        QubitTarget::constant(Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0))
    } else {
        QubitTarget::constant(Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0))
    }
}

/// β_R of an input qubit equals its bit (inputs are basis states).
fn input_is(bits: &[(usize, u8)]) -> SpecFormula {
    SpecFormula::And(
        bits.iter()
            .map(|(q, b)| SpecFormula::eq(SpecTerm::r(0, *q, root(), Role::BetaRe), SpecTerm::c(*b as f64)))
            .collect(),
    )
}

fn gates(gs: Vec<GateSpec>) -> Vec<StateOp> {
    gs.into_iter().map(StateOp::Gate).collect()
}

fn teleportation(mutant: Option<Mutant>) -> Result<Benchmark, BenchError> {
    let mut ops = vec![
        StateOp::Gate(GateSpec::cx(0, 1)),
        StateOp::Gate(GateSpec::h(0)),
        StateOp::Measure(vec![0, 1]),
        StateOp::Gate(GateSpec::cx(1, 2)),
        StateOp::Gate(GateSpec::cz(0, 2)),
    ];
    match mutant {
        Some(Mutant::DropCz) => ops[4] = StateOp::Gate(GateSpec::id(2)),
        Some(Mutant::DropCx) => ops[3] = StateOp::Gate(GateSpec::id(2)),
        _ => {}
    }
    let final_state = ops.len();
    let model = build_program(3, ops, vec![], vec![InitialValuation::bell(1, 2)])?;
    let spec = SpecFormula::qubit_eq(
        QubitRef::new(final_state, 2, BranchSel::All),
        QubitTarget::Qubit(QubitRef::new(0, 0, root())),
    );
    let rules = vec![StructuralRule::ForbidJointTouch { a: vec![0, 1], b: vec![2], before: 2 }];
    Ok(bench(model, spec, rules, InputSpace::Continuous))
}

/// X₀X₁·CCX·X₀X₁: flips the target exactly when both controls are 0.
fn toffoli(mutant: Option<Mutant>) -> Result<Benchmark, BenchError> {
    let mut gs = vec![GateSpec::x(0), GateSpec::x(1), GateSpec::ccx(0, 1, 2), GateSpec::x(0), GateSpec::x(1)];
    if mutant == Some(Mutant::DropX) {
        gs[4] = GateSpec::id(1);
    }
    let f = gs.len();
    let init = (0..3).map(|q| InitialValuation::single(q, Valuation::BasisSet(vec![0, 1]))).collect();
    let model = build_program(3, gates(gs), vec![], init)?;
    let mut cases = Vec::new();
    for x in 0..8usize {
        let bits = [(x >> 2) as u8 & 1, (x >> 1) as u8 & 1, x as u8 & 1];
        let out = [bits[0], bits[1], bits[2] ^ u8::from(bits[0] == 0 && bits[1] == 0)];
        let ins: Vec<(usize, u8)> = bits.iter().enumerate().map(|(q, b)| (q, *b)).collect();
        let outs = (0..3).map(|q| SpecFormula::qubit_eq(QubitRef::new(f, q, root()), basis_target(out[q]))).collect();
        cases.push(SpecFormula::implies(input_is(&ins), SpecFormula::And(outs)));
    }
    Ok(bench(model, SpecFormula::And(cases), vec![], InputSpace::Basis((0..8).collect())))
}

/// Qubit layout of the ripple-carry adder: c0, then b_i, a_i interleaved.
pub fn adder_layout(n: usize) -> (usize, Vec<usize>, Vec<usize>) {
    let b = (0..n).map(|i| 1 + 2 * i).collect();
    let a = (0..n).map(|i| 2 + 2 * i).collect();
    (0, b, a)
}

/// In-place ripple-carry adder b ← a + b mod 2ⁿ built from MAJ and UMA
/// blocks (three gates each, 6n gates in total).
fn adder(n: usize) -> Result<Benchmark, BenchError> {
    let (c0, b, a) = adder_layout(n);
    let maj = |x: usize, y: usize, z: usize| vec![GateSpec::cx(z, y), GateSpec::cx(z, x), GateSpec::ccx(x, y, z)];
    let uma = |x: usize, y: usize, z: usize| vec![GateSpec::ccx(x, y, z), GateSpec::cx(z, x), GateSpec::cx(x, y)];
    let carry_in = |i: usize| if i == 0 { c0 } else { a[i - 1] };
    let mut gs = Vec::new();
    for i in 0..n {
        gs.extend(maj(carry_in(i), b[i], a[i]));
    }
    for i in (0..n).rev() {
        gs.extend(uma(carry_in(i), b[i], a[i]));
    }
    let f = gs.len();
    let nq = 2 * n + 1;
    let mut init = vec![InitialValuation::single(c0, Valuation::BasisSet(vec![0]))];
    for q in 1..nq {
        init.push(InitialValuation::single(q, Valuation::BasisSet(vec![0, 1])));
    }
    let model = build_program(nq, gates(gs), vec![], init)?;
    let val = |state: usize, qs: &[usize]| {
        SpecTerm::sum(
            qs.iter()
                .enumerate()
                .map(|(i, q)| SpecTerm::c((1u64 << i) as f64) * SpecTerm::r(state, *q, root(), Role::BetaRe))
                .collect(),
        )
    };
    let sum = val(0, &a) + val(0, &b);
    let modulus = (1u64 << n) as f64;
    let mut parts = vec![SpecFormula::Or(vec![
        SpecFormula::eq(val(f, &b), sum.clone()),
        SpecFormula::eq(val(f, &b), sum - SpecTerm::c(modulus)),
    ])];
    for &q in a.iter().chain(std::iter::once(&c0)) {
        parts.push(SpecFormula::qubit_eq(QubitRef::new(f, q, root()), QubitTarget::Qubit(QubitRef::new(0, q, root()))));
    }
    // c0 (qubit 0, most significant) must be 0
    let inputs = (0..1usize << (nq - 1)).collect();
    Ok(bench(model, SpecFormula::And(parts), vec![], InputSpace::Basis(inputs)))
}

/// QFT without the final swaps: H on qubit i, then R_{j−i+1} controlled
/// by each later qubit j.
pub fn qft_gates(qs: &[usize]) -> Vec<GateSpec> {
    let n = qs.len();
    let mut gs = Vec::new();
    for i in 0..n {
        gs.push(GateSpec::h(qs[i]));
        for j in i + 1..n {
            let k = (j - i + 1) as f64;
            gs.push(GateSpec::rk(RealTerm::constant(k), qs[i]).controlled(vec![qs[j]]));
        }
    }
    gs
}

fn qft(n: usize) -> Result<Benchmark, BenchError> {
    let gs = qft_gates(&(0..n).collect::<Vec<_>>());
    let f = gs.len();
    let init = (0..n).map(|q| InitialValuation::single(q, Valuation::BasisSet(vec![0, 1]))).collect();
    let model = build_program(n, gates(gs), vec![], init)?;
    let mut cases = Vec::new();
    for x in 0..1usize << n {
        let bits: Vec<u8> = (0..n).map(|q| ((x >> (n - 1 - q)) & 1) as u8).collect();
        let ins: Vec<(usize, u8)> = bits.iter().enumerate().map(|(q, b)| (q, *b)).collect();
        let outs = (0..n)
            .map(|i| {
                // 0.x_i x_{i+1} … x_{n-1}
                let frac: f64 = (i..n).map(|j| bits[j] as f64 / (1u64 << (j - i + 1)) as f64).sum();
                let beta = Complex64::from_polar(FRAC_1_SQRT_2, 2.0 * PI * frac);
                SpecFormula::qubit_eq(
                    QubitRef::new(f, i, root()),
                    QubitTarget::constant(Complex64::new(FRAC_1_SQRT_2, 0.0), beta),
                )
            })
            .collect();
        cases.push(SpecFormula::implies(input_is(&ins), SpecFormula::And(outs)));
    }
    Ok(bench(model, SpecFormula::And(cases), vec![], InputSpace::Basis((0..1usize << n).collect())))
}

/// Phase estimation of U = diag(1, e^{2πiθ}) on its eigenvector |1⟩ with
/// n counting qubits; θ (in turns) ranges over the cell whose nearest
/// n-bit estimate is `a`.
fn qpe(n: usize, a: usize) -> Result<Benchmark, BenchError> {
    let eigen = n;
    let theta = RealTerm::var("theta");
    let mut gs: Vec<GateSpec> = (0..n).map(GateSpec::h).collect();
    for j in 0..n {
        let power = (1u64 << (n - 1 - j)) as f64;
        let angle = RealTerm::constant(2.0 * PI * power) * theta.clone();
        gs.push(GateSpec::rz(angle, eigen).controlled(vec![j]));
    }
    for i in 0..n / 2 {
        gs.push(GateSpec::swap(i, n - 1 - i));
    }
    for i in (0..n).rev() {
        for j in (i + 1..n).rev() {
            let angle = -2.0 * PI / (1u64 << (j - i + 1)) as f64;
            gs.push(GateSpec::rz(RealTerm::constant(angle), i).controlled(vec![j]));
        }
        gs.push(GateSpec::h(i));
    }
    let f = gs.len();
    let cells = (1u64 << n) as f64;
    let lo = (a as f64 - 0.5) / cells;
    let hi = (a as f64 + 0.5) / cells;
    let mut init: Vec<InitialValuation> =
        (0..n).map(|q| InitialValuation::single(q, Valuation::BasisSet(vec![0]))).collect();
    init.push(InitialValuation::single(eigen, Valuation::BasisSet(vec![1])));
    let model = build_program(n + 1, gates(gs), vec![Param::bounded("theta", lo, hi, true)], init)?;
    let index = (a << 1) | 1;
    let mag = SpecTerm::amp_re(f, index) * SpecTerm::amp_re(f, index) + SpecTerm::amp_im(f, index) * SpecTerm::amp_im(f, index);
    let spec = SpecFormula::cmp(CmpOp::Ge, mag, SpecTerm::c(4.0 / (PI * PI)));
    let mut b = bench(model, spec, vec![], InputSpace::Basis(vec![0]));
    b.sample_params.insert("theta".into(), (a as f64 + 0.3) / cells);
    Ok(b)
}

/// Diffusion operator H^n X^n C^{n−1}Z X^n H^n, i.e. I − 2|s⟩⟨s| which maps
/// every amplitude to in_i − 2·mean. Spec: whenever in_i ≤ 0 and the mean
/// is non-negative, the amplitude does not grow.
fn diffusion(n: usize, mutant: Option<Mutant>) -> Result<Benchmark, BenchError> {
    let mut gs: Vec<GateSpec> = (0..n).map(GateSpec::h).collect();
    gs.extend((0..n).map(GateSpec::x));
    let base = if mutant == Some(Mutant::SignFlip) {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        GateSpec::custom_const(&[vec![-one, zero], vec![zero, one]], vec![0])
    } else {
        GateSpec::z(0)
    };
    gs.push(if n == 1 { base } else { base.controlled((1..n).collect()) });
    gs.extend((0..n).map(GateSpec::x));
    gs.extend((0..n).map(GateSpec::h));
    let f = gs.len();
    let model = build_program(n, gates(gs), vec![], vec![])?;
    let dim = 1usize << n;
    let mean = SpecTerm::sum((0..dim).map(|j| SpecTerm::amp_re(0, j)).collect()) * SpecTerm::c(1.0 / dim as f64);
    let parts = (0..dim)
        .map(|i| {
            SpecFormula::ite(
                SpecFormula::And(vec![
                    SpecFormula::le(SpecTerm::amp_re(0, i), SpecTerm::c(0.0)),
                    SpecFormula::ge(mean.clone(), SpecTerm::c(0.0)),
                ]),
                SpecFormula::le(SpecTerm::amp_re(f, i), SpecTerm::amp_re(0, i)),
                SpecFormula::True,
            )
        })
        .collect();
    Ok(bench(model, SpecFormula::And(parts), vec![], InputSpace::Continuous))
}


/// Simulator self-check: every listed basis input, or `samples` random
/// inputs for continuous input spaces.
pub fn self_check(b: &Benchmark, samples: usize, seed: u64) -> Result<Enumeration, CheckError> {
    match &b.inputs {
        InputSpace::Basis(xs) => enumerate_verify(&b.model, &b.spec, xs, &b.sample_params),
        InputSpace::Continuous => sample_verify(&b.model, &b.spec, &b.sample_params, samples, seed),
    }
}
