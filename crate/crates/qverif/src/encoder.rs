//! Lowering of a program model to one constraint conjunction.
//!
//! Every qubit at every state (and branch) owns a block of five reals
//! (α, β_R, β_I, φ, θ). Qubits that are not entangled with anything are
//! tracked through their block and updated by direct mappings. Qubits that
//! share a joint state live in a vector group whose amplitudes are fresh
//! variables per state; their blocks are then unconstrained shadows.
//!
//! Controls that are known computational basis states never force a merge:
//! a control with a statically known bit selects the identity or the base
//! gate, and an unknown basis control `c` enters as t + β_R(c)·(U t − t).

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{complex_mul, fold_constants, ComplexTerm, Constraint, RealTerm};
use crate::gates::{mapping_for, matrix_for, GateError, GateMatrix, QubitAmps};
use crate::qpm::{GateKind, GateSpec, ProgramModel, StateOp, Valuation};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EncodeError {
    #[error(transparent)]
    Gate(#[from] GateError),
    #[error("qubit {0} is part of an entangled group; a block view is not available")]
    EntangledOperand(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Exact,
    Box,
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "exact" => Ok(Mode::Exact),
            "box" => Ok(Mode::Box),
            other => Err(format!("unknown mode `{other}` (expected exact or box)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncodeOptions {
    pub mode: Mode,
    /// Declare φ and θ in box mode too (always on in exact mode).
    pub emit_phase_vars: bool,
    /// Box mode keeps the amplitude/angle equalities and drops only the
    /// angle ranges.
    pub box_keep_eq1: bool,
}

impl EncodeOptions {
    pub fn exact() -> Self {
        EncodeOptions { mode: Mode::Exact, emit_phase_vars: true, box_keep_eq1: false }
    }

    pub fn boxed() -> Self {
        EncodeOptions { mode: Mode::Box, emit_phase_vars: false, box_keep_eq1: false }
    }

    pub fn with_mode(mode: Mode) -> Self {
        match mode {
            Mode::Exact => Self::exact(),
            Mode::Box => Self::boxed(),
        }
    }

    fn phase_vars(&self) -> bool {
        self.mode == Mode::Exact || self.emit_phase_vars || self.box_keep_eq1
    }
}

impl Default for EncodeOptions {
    fn default() -> Self {
        Self::exact()
    }
}

/// Variable names of one qubit block.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct QubitBlock {
    pub alpha: String,
    pub beta_re: String,
    pub beta_im: String,
    pub phi: String,
    pub theta: String,
    pub state_index: usize,
    pub qubit_index: usize,
    pub branch_label: String,
}

fn suffix(state: usize, idx: usize, branch: &str) -> String {
    if branch.is_empty() {
        format!("{state}_{idx}")
    } else {
        format!("{state}_{idx}_{branch}")
    }
}

impl QubitBlock {
    pub fn new(state: usize, qubit: usize, branch: &str) -> Self {
        let s = suffix(state, qubit, branch);
        QubitBlock {
            alpha: format!("alpha_{s}"),
            beta_re: format!("beta_re_{s}"),
            beta_im: format!("beta_im_{s}"),
            phi: format!("phi_{s}"),
            theta: format!("theta_{s}"),
            state_index: state,
            qubit_index: qubit,
            branch_label: branch.to_string(),
        }
    }

    pub fn amps(&self) -> QubitAmps {
        QubitAmps::new(
            ComplexTerm::real(RealTerm::var(&self.alpha)),
            ComplexTerm::new(RealTerm::var(&self.beta_re), RealTerm::var(&self.beta_im)),
        )
    }

    pub fn amp_vars(&self) -> [&str; 3] {
        [&self.alpha, &self.beta_re, &self.beta_im]
    }

    fn all_vars(&self, phase: bool) -> Vec<String> {
        let mut v = vec![self.alpha.clone(), self.beta_re.clone(), self.beta_im.clone()];
        if phase {
            v.push(self.phi.clone());
            v.push(self.theta.clone());
        }
        v
    }

    /// Pins the block to |bit⟩.
    pub fn pin_basis(&self, bit: u8) -> Constraint {
        let (a, b) = if bit == 0 { (1.0, 0.0) } else { (0.0, 1.0) };
        Constraint::And(vec![
            Constraint::eq(RealTerm::var(&self.alpha), a),
            Constraint::eq(RealTerm::var(&self.beta_re), b),
            Constraint::eq(RealTerm::var(&self.beta_im), 0.0),
        ])
    }
}

/// Static knowledge about a block's value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Kind {
    /// Pinned to |b⟩ on this branch.
    Known(u8),
    /// Some computational basis state.
    Basis,
    General,
}

impl Kind {
    fn join(self, other: Kind) -> Kind {
        match (self, other) {
            (Kind::Known(a), Kind::Known(b)) if a == b => Kind::Known(a),
            (Kind::General, _) | (_, Kind::General) => Kind::General,
            _ => Kind::Basis,
        }
    }

    fn is_basis(self) -> bool {
        !matches!(self, Kind::General)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GroupRep {
    Block { block: QubitBlock, kind: Kind },
    /// Amplitudes in the group's qubit order (first qubit most significant).
    Vector { amps: Vec<ComplexTerm>, collapsed: bool },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    pub qubits: Vec<usize>,
    pub rep: GroupRep,
}

impl Group {
    pub fn lead(&self) -> usize {
        *self.qubits.iter().min().expect("non-empty group")
    }

    /// Amplitude list, promoting a block to a one-qubit vector.
    pub fn amplitudes(&self) -> Vec<ComplexTerm> {
        match &self.rep {
            GroupRep::Block { block, .. } => {
                let a = block.amps();
                vec![a.alpha, a.beta]
            }
            GroupRep::Vector { amps, .. } => amps.clone(),
        }
    }
}

/// One symbolic vector, for the tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorInfo {
    pub state: usize,
    pub branch: String,
    pub qubits: Vec<usize>,
    pub re: Vec<String>,
    pub im: Vec<String>,
    pub tensor: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub name: String,
    pub constraints: Vec<Constraint>,
}

/// Where every symbol lives.
#[derive(Debug, Clone, Default)]
pub struct SymbolTable {
    pub n_qubits: usize,
    pub n_states: usize,
    pub blocks: BTreeMap<(usize, usize, String), QubitBlock>,
    pub snapshots: BTreeMap<(usize, String), Vec<Group>>,
    pub vectors: Vec<VectorInfo>,
    /// Branch weight p(x), for reporting only.
    pub probabilities: BTreeMap<String, RealTerm>,
    pub params: Vec<String>,
    pub final_labels: Vec<String>,
    /// How each operation was lowered, per state and branch.
    pub dispatch: BTreeMap<(usize, String), Dispatch>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dispatch {
    Mapping,
    Matrix,
    Identity,
    Measurement,
}

impl SymbolTable {
    pub fn block(&self, state: usize, qubit: usize, branch: &str) -> Option<&QubitBlock> {
        self.blocks.get(&(state, qubit, branch.to_string()))
    }

    pub fn labels_at(&self, state: usize) -> Vec<String> {
        self.snapshots.keys().filter(|(s, _)| *s == state).map(|(_, l)| l.clone()).collect()
    }

    pub fn groups(&self, state: usize, branch: &str) -> Option<&[Group]> {
        self.snapshots.get(&(state, branch.to_string())).map(|g| g.as_slice())
    }

    pub fn group_of(&self, state: usize, qubit: usize, branch: &str) -> Option<&Group> {
        self.groups(state, branch)?.iter().find(|g| g.qubits.contains(&qubit))
    }

    /// The block of a qubit that is tracked per-qubit at this state.
    pub fn live_block(&self, state: usize, qubit: usize, branch: &str) -> Result<Option<&QubitBlock>, EncodeError> {
        match self.group_of(state, qubit, branch) {
            None => Ok(None),
            Some(Group { rep: GroupRep::Block { block, .. }, .. }) => Ok(Some(block)),
            Some(_) => Err(EncodeError::EntangledOperand(qubit)),
        }
    }

    /// Full-register amplitude `index` (qubit 0 most significant) as the
    /// product of the group amplitudes.
    pub fn amplitude(&self, state: usize, index: usize, branch: &str) -> Option<ComplexTerm> {
        let groups = self.groups(state, branch)?;
        let n = self.n_qubits;
        let mut acc: Option<ComplexTerm> = None;
        for g in groups {
            let amps = g.amplitudes();
            let k = g.qubits.len();
            let mut local = 0;
            for (j, q) in g.qubits.iter().enumerate() {
                if (index >> (n - 1 - q)) & 1 == 1 {
                    local |= 1 << (k - 1 - j);
                }
            }
            let a = amps[local].clone();
            acc = Some(match acc {
                None => a,
                Some(x) => complex_mul(&x, &a).fold(),
            });
        }
        acc
    }
}

/// The lowered program.
#[derive(Debug, Clone)]
pub struct Encoding {
    pub decls: Vec<String>,
    pub sections: Vec<Section>,
    pub table: SymbolTable,
    pub options: EncodeOptions,
}

impl Encoding {
    pub fn constraint(&self) -> Constraint {
        Constraint::And(self.sections.iter().flat_map(|s| s.constraints.iter().cloned()).collect())
    }

    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }
}

/// Unit-sphere and Bloch-angle constraints in exact mode, the [−1, 1] box in box mode.
pub fn qubit_constraints(q: &QubitBlock, opts: &EncodeOptions) -> Constraint {
    let v = |n: &str| RealTerm::var(n);
    let half_theta = RealTerm::constant(0.5) * v(&q.theta);
    let eq1 = || {
        vec![
            Constraint::eq(v(&q.alpha), half_theta.clone().cos()),
            Constraint::eq(v(&q.beta_re), v(&q.phi).cos() * half_theta.clone().sin()),
            Constraint::eq(v(&q.beta_im), v(&q.phi).sin() * half_theta.clone().sin()),
        ]
    };
    match opts.mode {
        Mode::Exact => {
            let mut cs = eq1();
            cs.extend([
                Constraint::le(0.0, v(&q.theta)),
                Constraint::le(v(&q.theta), RealTerm::pi()),
                Constraint::le(0.0, v(&q.phi)),
                Constraint::lt(v(&q.phi), RealTerm::constant(2.0 * PI)),
                Constraint::implies(Constraint::eq(v(&q.theta), 0.0), Constraint::eq(v(&q.phi), 0.0)),
                Constraint::implies(
                    Constraint::eq(v(&q.theta), RealTerm::pi()),
                    Constraint::eq(v(&q.phi), 0.0),
                ),
            ]);
            Constraint::And(cs)
        }
        Mode::Box => {
            let mut cs = Vec::new();
            for name in q.amp_vars() {
                cs.push(Constraint::le(-1.0, v(name)));
                cs.push(Constraint::le(v(name), 1.0));
            }
            if opts.box_keep_eq1 {
                cs.extend(eq1());
            }
            Constraint::And(cs)
        }
    }
}

/// Tensor product a ⊗ b of amplitude lists.
pub fn tensor(a: &[ComplexTerm], b: &[ComplexTerm]) -> Vec<ComplexTerm> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for x in a {
        for y in b {
            out.push(complex_mul(x, y).fold());
        }
    }
    out
}

/// (I ⊗ … ⊗ U ⊗ … ⊗ I)·s where U acts on `gate_qubits` (in U's order) of
/// a vector over `group_qubits`. Targets need not be adjacent: the index
/// arithmetic relabels qubits, which is what swapping them next to each
/// other and back would achieve.
pub fn apply_matrix(
    u: &GateMatrix,
    amps: &[ComplexTerm],
    group_qubits: &[usize],
    gate_qubits: &[usize],
) -> Vec<ComplexTerm> {
    let n = group_qubits.len();
    let k = gate_qubits.len();
    assert_eq!(amps.len(), 1 << n);
    assert_eq!(u.dim, 1 << k);
    let shifts: Vec<usize> = gate_qubits
        .iter()
        .map(|q| {
            let pos = group_qubits.iter().position(|g| g == q).expect("gate qubit in group");
            n - 1 - pos
        })
        .collect();
    let local_of = |i: usize| -> usize {
        shifts.iter().fold(0, |acc, s| (acc << 1) | ((i >> s) & 1))
    };
    let with_local = |base: usize, local: usize| -> usize {
        let mut i = base;
        for (j, s) in shifts.iter().enumerate() {
            if (local >> (k - 1 - j)) & 1 == 1 {
                i |= 1 << s;
            }
        }
        i
    };
    let mask: usize = shifts.iter().map(|s| 1 << s).sum();
    let mut out = Vec::with_capacity(amps.len());
    for i in 0..amps.len() {
        let row = local_of(i);
        let base = i & !mask;
        let mut acc: Option<ComplexTerm> = None;
        for col in 0..u.dim {
            let e = u.entries[row][col].fold();
            if e.as_const() == Some(Complex64::new(0.0, 0.0)) {
                continue;
            }
            let x = &amps[with_local(base, col)];
            let term = if e.as_const() == Some(Complex64::new(1.0, 0.0)) {
                x.clone()
            } else {
                complex_mul(&e, x).fold()
            };
            acc = Some(match acc {
                None => term,
                Some(a) => (a + term).fold(),
            });
        }
        out.push(acc.unwrap_or_else(ComplexTerm::zero));
    }
    out
}

fn indicator_mix(old: &ComplexTerm, new: &ComplexTerm, c: &RealTerm) -> ComplexTerm {
    (old.clone() + (new.clone() - old.clone()).scale(c.clone())).fold()
}

/// Strips every control layer: CX → X, CZ → Z, Controlled{base} → base.
fn innermost(g: &GateSpec) -> GateSpec {
    match &g.kind {
        GateKind::CX => GateSpec::x(g.targets[1]),
        GateKind::CZ => GateSpec::z(g.targets[1]),
        GateKind::Controlled { base, .. } => innermost(base),
        _ => g.clone(),
    }
}

struct Path {
    label: String,
    groups: Vec<Group>,
    weight: RealTerm,
}

struct Builder<'a> {
    p: &'a ProgramModel,
    opts: EncodeOptions,
    decls_by_state: BTreeMap<usize, Vec<String>>,
    qubit_rows: Vec<Constraint>,
    init_rows: Vec<Constraint>,
    op_rows: Vec<Constraint>,
    table: SymbolTable,
}

/// Lowers the whole program.
pub fn encode(p: &ProgramModel, opts: &EncodeOptions) -> Result<Encoding, EncodeError> {
    let mut b = Builder {
        p,
        opts: *opts,
        decls_by_state: BTreeMap::new(),
        qubit_rows: Vec::new(),
        init_rows: Vec::new(),
        op_rows: Vec::new(),
        table: SymbolTable { n_qubits: p.n_qubits, n_states: p.n_states(), ..Default::default() },
    };
    b.declare_blocks();
    let mut paths = vec![b.initial_path()];
    b.snapshot(0, &paths);
    for (i, op) in p.ops.iter().enumerate() {
        let mut next = Vec::new();
        for path in paths {
            match op {
                StateOp::Gate(g) => next.push(b.gate_step(i, path, g)?),
                StateOp::Measure(qs) => next.extend(b.measure_step(i, path, qs)),
            }
        }
        paths = next;
        b.snapshot(i + 1, &paths);
    }
    for path in &paths {
        let mut w = path.weight.clone();
        for g in &path.groups {
            if let GroupRep::Vector { amps, collapsed: true } = &g.rep {
                let norm = amps
                    .iter()
                    .map(|a| a.norm_sqr())
                    .reduce(|x, y| x + y)
                    .unwrap_or_else(RealTerm::zero);
                w = w * norm;
            }
        }
        b.table.probabilities.insert(path.label.clone(), fold_constants(&w));
    }
    b.table.final_labels = paths.iter().map(|p| p.label.clone()).collect();

    let mut param_rows = Vec::new();
    for prm in &p.params {
        let v = RealTerm::var(&prm.name);
        if let Some(lo) = prm.lo {
            param_rows.push(Constraint::le(lo, v.clone()));
        }
        if let Some(hi) = prm.hi {
            param_rows.push(if prm.hi_open { Constraint::lt(v.clone(), hi) } else { Constraint::le(v.clone(), hi) });
        }
    }
    b.table.params = p.params.iter().map(|p| p.name.clone()).collect();
    let mut decls = b.table.params.clone();
    for (_, ds) in std::mem::take(&mut b.decls_by_state) {
        decls.extend(ds);
    }
    let sections = vec![
        Section { name: "states".into(), constraints: vec![] },
        Section { name: "qubit constraints".into(), constraints: b.qubit_rows },
        Section { name: "parameters".into(), constraints: param_rows },
        Section { name: "initial valuation".into(), constraints: b.init_rows },
        Section { name: "operations".into(), constraints: b.op_rows },
    ];
    Ok(Encoding { decls, sections, table: b.table, options: *opts })
}

impl Builder<'_> {
    fn declare(&mut self, state: usize, names: impl IntoIterator<Item = String>) {
        self.decls_by_state.entry(state).or_default().extend(names);
    }

    fn declare_blocks(&mut self) {
        let phase = self.opts.phase_vars();
        for state in 0..self.p.n_states() {
            for label in self.p.state_branches(state) {
                for q in 0..self.p.n_qubits {
                    let blk = QubitBlock::new(state, q, &label);
                    self.declare(state, blk.all_vars(phase));
                    self.qubit_rows.push(qubit_constraints(&blk, &self.opts));
                    self.table.blocks.insert((state, q, label.clone()), blk);
                }
            }
        }
    }

    fn snapshot(&mut self, state: usize, paths: &[Path]) {
        for p in paths {
            self.table.snapshots.insert((state, p.label.clone()), p.groups.clone());
        }
    }

    fn fresh_vector(&mut self, state: usize, lead: usize, label: &str, dim: usize, tensor: bool, qubits: &[usize]) -> Vec<ComplexTerm> {
        let prefix = if tensor { "t" } else { "s" };
        let mut re = Vec::new();
        let mut im = Vec::new();
        for k in 0..dim {
            let s = suffix(state, k, label);
            re.push(format!("{prefix}_re_{s}_g{lead}"));
            im.push(format!("{prefix}_im_{s}_g{lead}"));
        }
        let names: Vec<String> = re.iter().zip(&im).flat_map(|(a, b)| [a.clone(), b.clone()]).collect();
        self.declare(state, names);
        let amps = re.iter().zip(&im).map(|(r, i)| ComplexTerm::new(RealTerm::var(r), RealTerm::var(i))).collect();
        self.table.vectors.push(VectorInfo {
            state,
            branch: label.to_string(),
            qubits: qubits.to_vec(),
            re,
            im,
            tensor,
        });
        amps
    }

    fn initial_path(&mut self) -> Path {
        let mut groups = Vec::new();
        let mut q = 0;
        while q < self.p.n_qubits {
            let (members, val) = self.p.valuation_of(q);
            let block = self.table.blocks[&(0, q, String::new())].clone();
            match val {
                Valuation::FullHilbert => {
                    groups.push(Group { qubits: vec![q], rep: GroupRep::Block { block, kind: Kind::General } });
                    q += 1;
                }
                Valuation::BasisSet(bits) => {
                    let set: BTreeSet<u8> = bits.iter().copied().collect();
                    let kind = if set.len() == 1 { Kind::Known(*set.iter().next().unwrap()) } else { Kind::Basis };
                    let pins: Vec<Constraint> = set.iter().map(|b| block.pin_basis(*b)).collect();
                    self.init_rows.push(if pins.len() == 1 { pins.into_iter().next().unwrap() } else { Constraint::Or(pins) });
                    groups.push(Group { qubits: vec![q], rep: GroupRep::Block { block, kind } });
                    q += 1;
                }
                Valuation::Concrete(a, b) => {
                    self.init_rows.push(Constraint::And(vec![
                        Constraint::eq(RealTerm::var(&block.alpha), a.re),
                        Constraint::eq(RealTerm::var(&block.beta_re), b.re),
                        Constraint::eq(RealTerm::var(&block.beta_im), b.im),
                    ]));
                    let kind = if b.norm() < 1e-15 {
                        Kind::Known(0)
                    } else if a.norm() < 1e-15 && (b.re - 1.0).abs() < 1e-15 {
                        Kind::Known(1)
                    } else {
                        Kind::General
                    };
                    groups.push(Group { qubits: vec![q], rep: GroupRep::Block { block, kind } });
                    q += 1;
                }
                Valuation::Joint(values) => {
                    let members = members.to_vec();
                    let lead = members[0];
                    let amps = self.fresh_vector(0, lead, "", values.len(), false, &members);
                    for (a, v) in amps.iter().zip(values) {
                        self.init_rows.push(Constraint::eq(a.re.clone(), v.re));
                        self.init_rows.push(Constraint::eq(a.im.clone(), v.im));
                    }
                    q += members.len();
                    groups.push(Group { qubits: members, rep: GroupRep::Vector { amps, collapsed: false } });
                }
            }
        }
        Path { label: String::new(), groups, weight: RealTerm::one() }
    }

    /// Gives every group of `pending` fresh variables at `state` and emits
    /// the defining rows.
    fn materialize(&mut self, state: usize, label: &str, pending: Vec<(Vec<usize>, Pending)>) -> Vec<Group> {
        let mut out = Vec::new();
        for (qubits, p) in pending {
            match p {
                Pending::Block { amps, kind } => {
                    let q = qubits[0];
                    let block = self.table.blocks[&(state, q, label.to_string())].clone();
                    self.op_rows.push(Constraint::eq(RealTerm::var(&block.alpha), fold_constants(&amps.alpha.re)));
                    self.op_rows.push(Constraint::eq(RealTerm::var(&block.beta_re), fold_constants(&amps.beta.re)));
                    self.op_rows.push(Constraint::eq(RealTerm::var(&block.beta_im), fold_constants(&amps.beta.im)));
                    out.push(Group { qubits, rep: GroupRep::Block { block, kind } });
                }
                Pending::Pinned(bit) => {
                    let q = qubits[0];
                    let block = self.table.blocks[&(state, q, label.to_string())].clone();
                    self.op_rows.push(block.pin_basis(bit));
                    out.push(Group { qubits, rep: GroupRep::Block { block, kind: Kind::Known(bit) } });
                }
                Pending::Vector { amps: terms, collapsed } => {
                    let lead = *qubits.iter().min().unwrap();
                    let vars = self.fresh_vector(state, lead, label, terms.len(), false, &qubits);
                    for (v, t) in vars.iter().zip(&terms) {
                        self.op_rows.push(Constraint::eq(v.re.clone(), fold_constants(&t.re)));
                        self.op_rows.push(Constraint::eq(v.im.clone(), fold_constants(&t.im)));
                    }
                    out.push(Group { qubits, rep: GroupRep::Vector { amps: vars, collapsed } });
                }
            }
        }
        out.sort_by_key(|g| g.lead());
        out
    }

    fn carry(g: &Group) -> (Vec<usize>, Pending) {
        match &g.rep {
            GroupRep::Block { block, kind } => (g.qubits.clone(), Pending::Block { amps: block.amps(), kind: *kind }),
            GroupRep::Vector { amps, collapsed } => {
                (g.qubits.clone(), Pending::Vector { amps: amps.clone(), collapsed: *collapsed })
            }
        }
    }

    fn gate_step(&mut self, i: usize, path: Path, g: &GateSpec) -> Result<Path, EncodeError> {
        let label = path.label.clone();
        let kind_of = |q: usize| -> Option<Kind> {
            path.groups.iter().find(|gr| gr.qubits.contains(&q)).and_then(|gr| match &gr.rep {
                GroupRep::Block { kind, .. } => Some(*kind),
                GroupRep::Vector { .. } => None,
            })
        };
        let block_of = |q: usize| -> Option<QubitBlock> {
            path.groups.iter().find(|gr| gr.qubits.contains(&q)).and_then(|gr| match &gr.rep {
                GroupRep::Block { block, .. } => Some(block.clone()),
                GroupRep::Vector { .. } => None,
            })
        };

        let mut static_off = false;
        let mut indicator: Option<RealTerm> = None;
        let mut quantum_controls = Vec::new();
        for c in g.controls() {
            match kind_of(c) {
                Some(Kind::Known(b)) => static_off |= b == 0,
                Some(Kind::Basis) => {
                    let t = RealTerm::var(&block_of(c).unwrap().beta_re);
                    indicator = Some(match indicator {
                        None => t,
                        Some(x) => x * t,
                    });
                }
                _ => quantum_controls.push(c),
            }
        }
        let mut pending: Vec<(Vec<usize>, Pending)> = Vec::new();
        if static_off {
            for gr in &path.groups {
                pending.push(Self::carry(gr));
            }
            self.table.dispatch.insert((i + 1, label.clone()), Dispatch::Identity);
            let groups = self.materialize(i + 1, &label, pending);
            return Ok(Path { label, groups, weight: path.weight });
        }

        let base = innermost(g);
        let effective = if quantum_controls.is_empty() { base.clone() } else { base.clone().controlled(quantum_controls.clone()) };
        let targets = base.targets.clone();

        // Mapping path: no quantum controls, every target a block whose
        // kind keeps the result representable as a block.
        let mapping = if quantum_controls.is_empty() { mapping_for(&base) } else { None };
        if let Some(m) = mapping {
            let kinds: Vec<Option<Kind>> = targets.iter().map(|q| kind_of(*q)).collect();
            let all_blocks = kinds.iter().all(|k| k.is_some());
            let ok = all_blocks && (m.preserves_alpha() || kinds.iter().all(|k| k.unwrap().is_basis()));
            if ok {
                let ins: Vec<QubitAmps> = targets.iter().map(|q| block_of(*q).unwrap().amps()).collect();
                let outs = m.apply(&ins);
                let in_kinds: Vec<Kind> = kinds.iter().map(|k| k.unwrap()).collect();
                let out_kinds = mapped_kinds(&base, &in_kinds);
                for gr in &path.groups {
                    if let Some(pos) = targets.iter().position(|t| gr.qubits.contains(t)) {
                        let (amps, kind) = match &indicator {
                            None => (outs[pos].clone(), out_kinds[pos]),
                            Some(c) => (
                                QubitAmps::new(
                                    indicator_mix(&ins[pos].alpha, &outs[pos].alpha, c),
                                    indicator_mix(&ins[pos].beta, &outs[pos].beta, c),
                                ),
                                in_kinds[pos].join(out_kinds[pos]),
                            ),
                        };
                        pending.push((gr.qubits.clone(), Pending::Block { amps, kind }));
                    } else {
                        pending.push(Self::carry(gr));
                    }
                }
                self.table.dispatch.insert((i + 1, label.clone()), Dispatch::Mapping);
                let groups = self.materialize(i + 1, &label, pending);
                return Ok(Path { label, groups, weight: path.weight });
            }
        }

        // Matrix path: merge the groups of all acted-on qubits.
        let involved: BTreeSet<usize> = effective.qubit_order().into_iter().collect();
        let (merge, rest): (Vec<&Group>, Vec<&Group>) =
            path.groups.iter().partition(|gr| gr.qubits.iter().any(|q| involved.contains(q)));
        let mut qubits: Vec<usize> = Vec::new();
        let mut amps: Vec<ComplexTerm> = Vec::new();
        for gr in &merge {
            if qubits.is_empty() {
                amps = gr.amplitudes();
            } else {
                amps = tensor(&amps, &gr.amplitudes());
            }
            qubits.extend(gr.qubits.iter().copied());
        }
        let collapsed = merge.iter().any(|gr| matches!(gr.rep, GroupRep::Vector { collapsed: true, .. }));
        if merge.len() > 1 {
            let lead = *qubits.iter().min().unwrap();
            let vars = self.fresh_vector(i, lead, &label, amps.len(), true, &qubits);
            for (v, t) in vars.iter().zip(&amps) {
                self.op_rows.push(Constraint::eq(v.re.clone(), t.re.clone()));
                self.op_rows.push(Constraint::eq(v.im.clone(), t.im.clone()));
            }
            amps = vars;
        }
        let u = matrix_for(&effective)?;
        let moved = apply_matrix(&u, &amps, &qubits, &effective.qubit_order());
        let new_amps = match &indicator {
            None => moved,
            Some(c) => amps.iter().zip(&moved).map(|(o, n)| indicator_mix(o, n, c)).collect(),
        };
        pending.push((qubits, Pending::Vector { amps: new_amps, collapsed }));
        for gr in rest {
            pending.push(Self::carry(gr));
        }
        self.table.dispatch.insert((i + 1, label.clone()), Dispatch::Matrix);
        let groups = self.materialize(i + 1, &label, pending);
        Ok(Path { label, groups, weight: path.weight })
    }

    fn measure_step(&mut self, i: usize, path: Path, qs: &[usize]) -> Vec<Path> {
        let k = qs.len();
        let mut out = Vec::new();
        for outcome in 0..1usize << k {
            let bits: Vec<u8> = (0..k).map(|j| ((outcome >> (k - 1 - j)) & 1) as u8).collect();
            let bit_of = |q: usize| qs.iter().position(|m| *m == q).map(|j| bits[j]);
            let label = format!("{}{}", path.label, bits.iter().map(|b| b.to_string()).collect::<String>());
            let mut weight = path.weight.clone();
            let mut pending = Vec::new();
            for gr in &path.groups {
                let measured: Vec<usize> = gr.qubits.iter().copied().filter(|q| bit_of(*q).is_some()).collect();
                if measured.is_empty() {
                    pending.push(Self::carry(gr));
                    continue;
                }
                match &gr.rep {
                    GroupRep::Block { block, .. } => {
                        let b = bit_of(gr.qubits[0]).unwrap();
                        let a = block.amps();
                        weight = weight * if b == 0 { a.alpha.norm_sqr() } else { a.beta.norm_sqr() };
                        pending.push((gr.qubits.clone(), Pending::Pinned(b)));
                    }
                    GroupRep::Vector { amps, .. } => {
                        let n = gr.qubits.len();
                        let residual: Vec<usize> = gr.qubits.iter().copied().filter(|q| bit_of(*q).is_none()).collect();
                        let consistent: Vec<usize> = (0..amps.len())
                            .filter(|idx| {
                                gr.qubits.iter().enumerate().all(|(pos, q)| match bit_of(*q) {
                                    Some(b) => ((idx >> (n - 1 - pos)) & 1) as u8 == b,
                                    None => true,
                                })
                            })
                            .collect();
                        let kept: Vec<ComplexTerm> = consistent.iter().map(|&idx| amps[idx].clone()).collect();
                        if residual.is_empty() {
                            weight = weight * kept[0].norm_sqr();
                        } else {
                            pending.push((residual, Pending::Vector { amps: kept, collapsed: true }));
                        }
                        for q in measured {
                            pending.push((vec![q], Pending::Pinned(bit_of(q).unwrap())));
                        }
                    }
                }
            }
            self.table.dispatch.insert((i + 1, label.clone()), Dispatch::Measurement);
            let groups = self.materialize(i + 1, &label, pending);
            out.push(Path { label, groups, weight });
        }
        out
    }
}

enum Pending {
    Block { amps: QubitAmps, kind: Kind },
    Pinned(u8),
    Vector { amps: Vec<ComplexTerm>, collapsed: bool },
}

fn mapped_kinds(g: &GateSpec, ins: &[Kind]) -> Vec<Kind> {
    match &g.kind {
        GateKind::Identity => ins.to_vec(),
        GateKind::Swap => vec![ins[1], ins[0]],
        GateKind::X => vec![match ins[0] {
            Kind::Known(b) => Kind::Known(1 - b),
            k => k,
        }],
        GateKind::Z => vec![match ins[0] {
            Kind::Known(0) => Kind::Known(0),
            _ => Kind::General,
        }],
        GateKind::RZ(_) | GateKind::Rk(_) => vec![match ins[0] {
            Kind::Known(0) => Kind::Known(0),
            _ => Kind::General,
        }],
        _ => vec![Kind::General; ins.len()],
    }
}
