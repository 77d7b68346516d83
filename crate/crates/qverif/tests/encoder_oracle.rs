//! The encoding, evaluated forward from a concrete input, must reproduce
//! the dense simulator on every branch.

use std::collections::HashMap;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;
use proptest::prelude::*;
use qverif::encoder::{encode, EncodeOptions, Encoding, GroupRep, Kind};
use qverif::expr::{CmpOp, Constraint, RealTerm};
use qverif::qpm::{branch_labels, build_program, GateSpec, InitialValuation, ProgramModel, StateOp, Valuation};
use qverif::sim::{input_state, run_trace, SimError};

type C = Complex64;

#[derive(Debug, Clone)]
enum Init {
    Free,
    Basis(Vec<u8>),
}

fn gate_strategy(n: usize) -> BoxedStrategy<StateOp> {
    let q = 0..n;
    let angle = -3.0f64..3.0;
    let mut options: Vec<BoxedStrategy<StateOp>> = vec![
        q.clone().prop_map(|q| StateOp::Gate(GateSpec::x(q))).boxed(),
        q.clone().prop_map(|q| StateOp::Gate(GateSpec::z(q))).boxed(),
        q.clone().prop_map(|q| StateOp::Gate(GateSpec::h(q))).boxed(),
        (angle.clone(), q.clone()).prop_map(|(t, q)| StateOp::Gate(GateSpec::rx(RealTerm::constant(t), q))).boxed(),
        (angle.clone(), q.clone()).prop_map(|(t, q)| StateOp::Gate(GateSpec::rz(RealTerm::constant(t), q))).boxed(),
        (1u32..5, q.clone()).prop_map(|(k, q)| StateOp::Gate(GateSpec::rk(RealTerm::constant(k as f64), q))).boxed(),
        q.prop_map(|q| StateOp::Measure(vec![q])).boxed(),
    ];
    if n >= 2 {
        let pair = (0..n, 1..n).prop_map(move |(a, d)| (a, (a + d) % n));
        options.extend([
            pair.clone().prop_map(|(a, b)| StateOp::Gate(GateSpec::cx(a, b))).boxed(),
            pair.clone().prop_map(|(a, b)| StateOp::Gate(GateSpec::cz(a, b))).boxed(),
            pair.clone().prop_map(|(a, b)| StateOp::Gate(GateSpec::swap(a, b))).boxed(),
            pair.clone().prop_map(|(a, b)| StateOp::Gate(GateSpec::h(b).controlled(vec![a]))).boxed(),
            (angle, pair)
                .prop_map(|(t, (a, b))| StateOp::Gate(GateSpec::rz(RealTerm::constant(t), b).controlled(vec![a])))
                .boxed(),
            (0..n, 1..n).prop_map(move |(a, b)| StateOp::Measure(vec![a, (a + b) % n])).boxed(),
        ]);
    }
    if n >= 3 {
        options.push(
            (Just([0usize, 1, 2]).prop_shuffle())
                .prop_map(|v| StateOp::Gate(GateSpec::ccx(v[0], v[1], v[2])))
                .boxed(),
        );
    }
    prop::strategy::Union::new(options).boxed()
}

fn init_strategy() -> impl Strategy<Value = Init> {
    prop_oneof![
        Just(Init::Free),
        Just(Init::Basis(vec![0])),
        Just(Init::Basis(vec![1])),
        Just(Init::Basis(vec![0, 1])),
    ]
}

fn case_strategy() -> impl Strategy<Value = (usize, Vec<StateOp>, Vec<Init>, bool, Vec<(f64, f64)>, u64)> {
    (1usize..=3).prop_flat_map(|n| {
        (
            Just(n),
            prop::collection::vec(gate_strategy(n), 0..=6),
            prop::collection::vec(init_strategy(), n),
            any::<bool>(),
            prop::collection::vec((0.0f64..PI, 0.0f64..2.0 * PI), n),
            any::<u64>(),
        )
    })
}

fn build(n: usize, ops: Vec<StateOp>, inits: &[Init], bell: bool) -> ProgramModel {
    let mut init = Vec::new();
    let mut q = 0;
    while q < n {
        if bell && q + 1 < n && q == n - 2 {
            init.push(InitialValuation::bell(q, q + 1));
            q += 2;
            continue;
        }
        if let Init::Basis(bits) = &inits[q] {
            init.push(InitialValuation::single(q, Valuation::BasisSet(bits.clone())));
        }
        q += 1;
    }
    build_program(n, ops, vec![], init).unwrap()
}

/// Assigns the state-0 variables from per-qubit values, then evaluates
/// every definitional row `v = expr` in order.
fn forward(e: &Encoding, p: &ProgramModel, qubit: &dyn Fn(usize) -> (C, C)) -> HashMap<String, f64> {
    let mut env: HashMap<String, f64> = HashMap::new();
    for q in 0..p.n_qubits {
        let (a, b) = qubit(q);
        let blk = e.table.block(0, q, "").unwrap();
        env.insert(blk.alpha.clone(), a.re);
        env.insert(blk.beta_re.clone(), b.re);
        env.insert(blk.beta_im.clone(), b.im);
    }
    let mut rows: Vec<Constraint> = Vec::new();
    for c in e.section("initial valuation").unwrap().constraints.iter().chain(&e.section("operations").unwrap().constraints) {
        rows.extend(c.conjuncts());
    }
    for c in rows {
        if let Constraint::Cmp(CmpOp::Eq, lhs, rhs) = &c {
            if let Some(v) = lhs.as_var() {
                let val = rhs.eval(&|n| env.get(n).copied()).unwrap_or_else(|err| panic!("{err} in {}", c.to_smt()));
                env.insert(v.to_string(), val);
            }
        }
    }
    env
}

fn qubit_value(init: &Init, angles: (f64, f64), bit: u8) -> (C, C) {
    match init {
        Init::Free => {
            let (theta, phi) = angles;
            (C::new((theta / 2.0).cos(), 0.0), C::from_polar((theta / 2.0).sin(), phi))
        }
        Init::Basis(_) if bit == 0 => (C::new(1.0, 0.0), C::new(0.0, 0.0)),
        Init::Basis(_) => (C::new(0.0, 0.0), C::new(1.0, 0.0)),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn encoding_matches_simulator((n, ops, inits, bell, angles, seed) in case_strategy()) {
        let p = build(n, ops, &inits, bell);
        let free = |q: usize| {
            let bit = match &inits[q] {
                Init::Basis(bits) => bits[(seed as usize >> q) % bits.len()],
                Init::Free => 0,
            };
            qubit_value(&inits[q], angles[q], bit)
        };
        let input = input_state(&p, &free);
        let bell_pair: Vec<usize> = p.initial.iter().filter(|iv| iv.qubits.len() == 2).flat_map(|iv| iv.qubits.clone()).collect();
        for opts in [EncodeOptions::exact(), EncodeOptions::boxed()] {
            let e = encode(&p, &opts).unwrap();
            let env = forward(&e, &p, &|q| if bell_pair.contains(&q) { (C::new(1.0, 0.0), C::new(0.0, 0.0)) } else { free(q) });
            for label in branch_labels(&p) {
                let trace = match run_trace(&p, &input, &label, &HashMap::new()) {
                    Ok(t) => t,
                    Err(SimError::ZeroProbabilityBranch(_)) => continue,
                    Err(err) => panic!("{err}"),
                };
                for (s, dense) in trace.states.iter().enumerate() {
                    let k = p.measured_before(s);
                    let prefix = &label[..k];
                    let got: Vec<C> = (0..dense.dim())
                        .map(|idx| e.table.amplitude(s, idx, prefix).unwrap().eval(&|v| env.get(v).copied()).unwrap())
                        .collect();
                    // before any measurement the amplitudes agree exactly,
                    // afterwards up to a nonzero per-branch factor
                    let scale = if k == 0 {
                        C::new(1.0, 0.0)
                    } else {
                        let (i, w) = dense.amps.iter().enumerate().max_by(|a, b| a.1.norm().total_cmp(&b.1.norm())).unwrap();
                        let l = got[i] * w.conj() / w.norm_sqr();
                        prop_assert!(l.norm() > 1e-9, "zero scale at state {} branch {}", s, prefix);
                        l
                    };
                    for idx in 0..dense.dim() {
                        let want = dense.amps[idx] * scale;
                        prop_assert!((got[idx] - want).norm() < 1e-9, "state {} branch {} index {}: {} vs {}", s, prefix, idx, got[idx], want);
                    }
                    // live blocks are normalized with a real non-negative α
                    for g in e.table.groups(s, prefix).unwrap() {
                        if let GroupRep::Block { block, kind } = &g.rep {
                            let a = env[&block.alpha];
                            let (br, bi) = (env[&block.beta_re], env[&block.beta_im]);
                            prop_assert!(a > -1e-12);
                            prop_assert!((a * a + br * br + bi * bi - 1.0).abs() < 1e-9);
                            if let Kind::Known(b) = kind {
                                prop_assert!((br - f64::from(*b)).abs() < 1e-12);
                            }
                            if *kind == Kind::Basis {
                                prop_assert!(bi.abs() < 1e-12 && (br.abs() < 1e-12 || (br - 1.0).abs() < 1e-12));
                            }
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn hadamard_then_cx_builds_bell_pair() {
    let p = build_program(
        2,
        vec![StateOp::Gate(GateSpec::h(0)), StateOp::Gate(GateSpec::cx(0, 1))],
        vec![],
        vec![
            InitialValuation::single(0, Valuation::BasisSet(vec![0])),
            InitialValuation::single(1, Valuation::BasisSet(vec![0])),
        ],
    )
    .unwrap();
    let e = encode(&p, &EncodeOptions::exact()).unwrap();
    let zero = |_q: usize| (C::new(1.0, 0.0), C::new(0.0, 0.0));
    let env = forward(&e, &p, &zero);
    let amp = |i| e.table.amplitude(2, i, "").unwrap().eval(&|v| env.get(v).copied()).unwrap();
    assert!((amp(0) - C::new(FRAC_1_SQRT_2, 0.0)).norm() < 1e-15);
    assert!(amp(1).norm() < 1e-15 && amp(2).norm() < 1e-15);
    assert!((amp(3) - C::new(FRAC_1_SQRT_2, 0.0)).norm() < 1e-15);
}
