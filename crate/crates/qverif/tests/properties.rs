//! Algebraic properties of the gate catalog, the tensor product, branching
//! and specification negation, each checked on randomly drawn instances.

use std::collections::HashMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;
use qverif::encoder::{encode, tensor, EncodeOptions};
use qverif::expr::{CmpOp, ComplexTerm, RealTerm};
use qverif::gates::{is_unitary, mapping_for, matrix_for, QubitAmps};
use qverif::qpm::{branch_labels, build_program, GateSpec, StateOp};
use qverif::sim::{gate_matrix, run_trace, DenseState};
use qverif::spec::{
    negate, nnf, robustness, BranchSel, QubitRef, QubitTarget, Role, SpecEnv, SpecError, SpecFormula, SpecTerm,
    SymRef,
};

type C = Complex64;

const CASES: u32 = 128;

fn no_vars(_: &str) -> Option<f64> {
    None
}

fn bloch() -> impl Strategy<Value = (C, C)> {
    (0.0f64..PI, 0.0f64..2.0 * PI).prop_map(|(t, p)| (C::new((t / 2.0).cos(), 0.0), C::from_polar((t / 2.0).sin(), p)))
}

fn complex() -> impl Strategy<Value = C> {
    (-1.0f64..1.0, -1.0f64..1.0).prop_map(|(re, im)| C::new(re, im))
}

/// Gates with a direct mapping, on distinct qubits among 0..3.
fn mapped_gate() -> impl Strategy<Value = GateSpec> {
    let angle = -4.0f64..4.0;
    (0usize..12, angle, 1u32..6, Just([0usize, 1, 2]).prop_shuffle()).prop_map(|(k, t, rk, q)| match k {
        0 => GateSpec::id(q[0]),
        1 => GateSpec::x(q[0]),
        2 => GateSpec::z(q[0]),
        3 => GateSpec::h(q[0]),
        4 => GateSpec::rz(RealTerm::constant(t), q[0]),
        5 => GateSpec::rk(RealTerm::constant(rk as f64), q[0]),
        6 => GateSpec::swap(q[0], q[1]),
        7 => GateSpec::cx(q[0], q[1]),
        8 => GateSpec::cz(q[0], q[1]),
        9 => GateSpec::ccx(q[0], q[1], q[2]),
        10 => GateSpec::h(q[2]).controlled(vec![q[0], q[1]]),
        _ => GateSpec::rz(RealTerm::constant(t), q[1]).controlled(vec![q[0]]),
    })
}

/// Any catalog gate, including rotations about x and constant matrices.
fn any_gate() -> impl Strategy<Value = GateSpec> {
    prop_oneof![
        mapped_gate(),
        (-4.0f64..4.0, 0usize..3).prop_map(|(t, q)| GateSpec::rx(RealTerm::constant(t), q)),
        (-4.0f64..4.0, 0usize..2).prop_map(|(t, q)| GateSpec::rx(RealTerm::constant(t), q + 1).controlled(vec![0])),
        (0.0f64..2.0 * PI, 0.0f64..2.0 * PI, 0.0f64..PI).prop_map(|(a, b, t)| {
            let (c, s) = ((t / 2.0).cos(), (t / 2.0).sin());
            let m = vec![
                vec![C::new(c, 0.0), -C::from_polar(s, b)],
                vec![C::from_polar(s, a), C::from_polar(c, a + b)],
            ];
            GateSpec::custom_const(&m, vec![1])
        }),
    ]
}

fn product(qs: &[(C, C)]) -> Vec<C> {
    qs.iter().fold(vec![C::new(1.0, 0.0)], |acc, (a, b)| acc.iter().flat_map(|x| [x * a, x * b]).collect())
}

fn mat_vec(m: &[Vec<C>], v: &[C]) -> Vec<C> {
    m.iter().map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

fn close(a: &[C], b: &[C], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).norm() <= tol)
}

fn eval_vec(v: &[ComplexTerm]) -> Vec<C> {
    v.iter().map(|c| c.eval(&no_vars).unwrap()).collect()
}

fn constant_terms(v: &[C]) -> Vec<ComplexTerm> {
    v.iter().map(|c| ComplexTerm::constant(*c)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(CASES))]

    /// The direct mapping applied to unentangled qubits equals the gate
    /// matrix applied to their tensor product; basis-state controls where
    /// the mapping requires them.
    #[test]
    fn mapping_agrees_with_matrix(g in mapped_gate(), qs in prop::collection::vec(bloch(), 3), bits in prop::collection::vec(0u8..2, 3)) {
        let m = mapping_for(&g).expect("catalog gate has a mapping");
        let order = g.qubit_order();
        prop_assert_eq!(m.arity, order.len());
        let inputs: Vec<(C, C)> = order
            .iter()
            .enumerate()
            .map(|(i, &q)| {
                if m.basis_control_only && i < m.n_controls() {
                    if bits[q] == 1 { (C::new(0.0, 0.0), C::new(1.0, 0.0)) } else { (C::new(1.0, 0.0), C::new(0.0, 0.0)) }
                } else {
                    qs[q]
                }
            })
            .collect();
        let mapped = m.apply(&inputs.iter().map(|(a, b)| QubitAmps::constant(*a, *b)).collect::<Vec<_>>());
        let outs: Vec<(C, C)> = mapped.iter().map(|q| q.eval(&no_vars).unwrap()).collect();
        let matrix = matrix_for(&g).unwrap().eval(&no_vars).unwrap();
        prop_assert!(close(&product(&outs), &mat_vec(&matrix, &product(&inputs)), 1e-9));
    }

    /// The symbolic gate matrix and the simulator's independent matrix agree.
    #[test]
    fn catalog_matrix_agrees_with_simulator(g in any_gate()) {
        let symbolic = matrix_for(&g).unwrap().eval(&no_vars).unwrap();
        let dense = gate_matrix(&g, &HashMap::new()).unwrap();
        for (r1, r2) in symbolic.iter().zip(&dense) {
            prop_assert!(close(r1, r2, 1e-12));
        }
    }

    /// (a ⊗ b) ⊗ c = a ⊗ (b ⊗ c), and both equal the simulator's product.
    #[test]
    fn tensor_is_associative(
        a in prop::collection::vec(complex(), 1..=4),
        b in prop::collection::vec(complex(), 1..=4),
        c in prop::collection::vec(complex(), 1..=4),
    ) {
        let (ta, tb, tc) = (constant_terms(&a), constant_terms(&b), constant_terms(&c));
        let left = eval_vec(&tensor(&tensor(&ta, &tb), &tc));
        let right = eval_vec(&tensor(&ta, &tensor(&tb, &tc)));
        prop_assert!(close(&left, &right, 1e-12));
        let mut direct = Vec::new();
        for x in &a {
            for y in &b {
                for z in &c {
                    direct.push(x * y * z);
                }
            }
        }
        prop_assert!(close(&left, &direct, 1e-12));
        if [a.len(), b.len(), c.len()].iter().all(|n| n.is_power_of_two()) {
            let dense = DenseState::from_amps(a.clone())
                .tensor(&DenseState::from_amps(b.clone()))
                .tensor(&DenseState::from_amps(c.clone()));
            prop_assert!(close(&left, &dense.amps, 1e-12));
        }
    }

    /// Every catalog matrix is unitary, and so is a random circuit of them:
    /// the simulator preserves the norm.
    #[test]
    fn gates_are_unitary(gs in prop::collection::vec(any_gate(), 1..8), q in prop::collection::vec(bloch(), 3)) {
        for g in &gs {
            let m = matrix_for(g).unwrap().eval(&no_vars).unwrap();
            prop_assert!(is_unitary(&m, 1e-9), "{}", g.name());
        }
        let ops = gs.into_iter().map(StateOp::Gate).collect();
        let p = build_program(3, ops, vec![], vec![]).unwrap();
        let input = DenseState::product(&q);
        let t = run_trace(&p, &input, "", &HashMap::new()).unwrap();
        for s in &t.states {
            prop_assert!((s.norm_sqr() - 1.0).abs() < 1e-9);
        }
    }

    /// A program measuring K qubits has 2^K distinct, sorted branch labels;
    /// the encoder tracks exactly those at the final state, and the
    /// simulator's branch probabilities sum to one.
    #[test]
    fn branch_count_matches_measurements(
        ops in prop::collection::vec(prop_oneof![
            3 => mapped_gate().prop_map(StateOp::Gate),
            1 => Just([0usize, 1, 2]).prop_shuffle().prop_flat_map(|q| (1usize..=2).prop_map(move |k| StateOp::Measure(q[..k].to_vec()))),
        ], 0..6),
        q in prop::collection::vec(bloch(), 3),
    ) {
        let p = build_program(3, ops, vec![], vec![]).unwrap();
        let k: usize = p.ops.iter().map(|op| match op { StateOp::Measure(qs) => qs.len(), _ => 0 }).sum();
        let labels = branch_labels(&p);
        prop_assert_eq!(labels.len(), 1usize << k);
        prop_assert!(labels.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(labels.iter().all(|l| l.len() == k));
        let e = encode(&p, &EncodeOptions::exact()).unwrap();
        prop_assert_eq!(&e.table.final_labels, &labels);
        let input = DenseState::product(&q);
        let total: f64 = labels.iter().map(|l| run_trace(&p, &input, l, &HashMap::new()).map_or(0.0, |t| t.probability)).sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
    }
}

/// A specification environment with pseudo-random but fixed values.
struct Fixed {
    seed: u64,
}

impl Fixed {
    fn value(&self, key: u64) -> f64 {
        let mut x = self.seed ^ key.wrapping_mul(0x9e37_79b9_7f4a_7c15);
        x ^= x >> 33;
        x = x.wrapping_mul(0xff51_afd7_ed55_8ccd);
        x ^= x >> 33;
        (x >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    }
}

impl SpecEnv for Fixed {
    fn labels_at(&self, _: usize) -> Vec<String> {
        vec![String::new()]
    }

    fn scalar(&self, r: &SymRef) -> Result<f64, SpecError> {
        Ok(self.value((r.state * 97 + r.index * 13 + r.role as usize) as u64))
    }

    fn qubit(&self, q: &QubitRef) -> Result<Option<(C, C)>, SpecError> {
        let t = (self.value(1000 + q.qubit as u64) + 1.0) * PI / 2.0;
        let p = (self.value(2000 + q.qubit as u64) + 1.0) * PI;
        Ok(Some((C::new((t / 2.0).cos(), 0.0), C::from_polar((t / 2.0).sin(), p))))
    }

    fn param(&self, name: &str) -> Option<f64> {
        Some(self.value(5000 + name.len() as u64))
    }
}

fn spec_term() -> impl Strategy<Value = SpecTerm> {
    let role = prop_oneof![Just(Role::Alpha), Just(Role::BetaRe), Just(Role::Phi), Just(Role::AmpIm)];
    let leaf = prop_oneof![
        (-2.0f64..2.0).prop_map(SpecTerm::Const),
        (0usize..3, 0usize..3, role).prop_map(|(s, i, r)| SpecTerm::Ref(SymRef::new(s, i, BranchSel::root(), r))),
        Just(SpecTerm::Param("t".into())),
    ];
    leaf.prop_recursive(2, 6, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a + b),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a * b),
            inner.prop_map(|a| SpecTerm::Cos(Box::new(a))),
        ]
    })
}

fn spec_formula() -> impl Strategy<Value = SpecFormula> {
    let op = prop_oneof![Just(CmpOp::Eq), Just(CmpOp::Le), Just(CmpOp::Lt), Just(CmpOp::Ge), Just(CmpOp::Gt)];
    let leaf = prop_oneof![
        Just(SpecFormula::True),
        Just(SpecFormula::False),
        (op, spec_term(), spec_term()).prop_map(|(o, a, b)| SpecFormula::Cmp(o, a, b)),
        (spec_term(), spec_term()).prop_map(|(a, b)| SpecFormula::Ne(a, b)),
        (0usize..3, 0usize..3, any::<bool>()).prop_map(|(q, r, eq)| {
            let lhs = QubitRef::new(2, q, BranchSel::root());
            let rhs = QubitTarget::Qubit(QubitRef::new(0, r, BranchSel::root()));
            if eq { SpecFormula::QubitEq(lhs, rhs) } else { SpecFormula::QubitNe(lhs, rhs) }
        }),
    ];
    leaf.prop_recursive(4, 24, 3, |inner| {
        prop_oneof![
            inner.clone().prop_map(|f| SpecFormula::Not(Box::new(f))),
            prop::collection::vec(inner.clone(), 0..3).prop_map(SpecFormula::And),
            prop::collection::vec(inner.clone(), 0..3).prop_map(SpecFormula::Or),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| SpecFormula::implies(a, b)),
            (inner.clone(), inner.clone(), inner).prop_map(|(c, a, b)| SpecFormula::ite(c, a, b)),
        ]
    })
}

fn truth(f: &SpecFormula, env: &Fixed) -> Option<bool> {
    let r = robustness(f, env, 0.0).unwrap();
    (r.abs() > 1e-12).then_some(r > 0.0)
}

fn has_not(f: &SpecFormula) -> bool {
    match f {
        SpecFormula::Not(_) => true,
        SpecFormula::And(xs) | SpecFormula::Or(xs) => xs.iter().any(has_not),
        SpecFormula::Implies(a, b) => has_not(a) || has_not(b),
        SpecFormula::Ite(c, a, b) => has_not(c) || has_not(a) || has_not(b),
        _ => false,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(CASES))]

    /// ¬¬φ is φ in negation normal form, and ¬ flips the truth value.
    #[test]
    fn negation_is_an_involution(f in spec_formula(), seed in any::<u64>()) {
        let twice = negate(&negate(&f));
        prop_assert_eq!(&twice, &nnf(&f));
        prop_assert_eq!(negate(&negate(&twice)), twice.clone());
        prop_assert!(!has_not(&negate(&f)));
        let env = Fixed { seed };
        if let (Some(a), Some(b), Some(c)) = (truth(&f, &env), truth(&negate(&f), &env), truth(&twice, &env)) {
            prop_assert_eq!(b, !a);
            prop_assert_eq!(c, a);
        }
    }
}
