//! δ-complete interval constraint solver for quantifier-free nonlinear
//! real arithmetic with sine and cosine.
//!
//! Answers are `unsat` (a proof by interval reasoning, independent of δ)
//! or `delta-sat` with a witness of the δ-weakened formula, where
//! `e = 0` weakens to `|e| ≤ δ` and `e ≥ 0`, `e > 0` to `e ≥ −δ`, `e > −δ`.

pub mod formula;
pub mod interval;
pub mod normalize;
pub mod parse;
pub mod poly;
pub mod search;

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use interval::Interval;
use search::{ComponentResult, Limits, Search};

#[derive(Debug, thiserror::Error)]
pub enum SolveError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("undeclared variable {0}")]
    UndeclaredVariable(String),
}

#[derive(Debug, Clone)]
pub struct Config {
    pub delta: f64,
    pub timeout: Option<Duration>,
    pub max_nodes: u64,
    pub seed: u64,
}

impl Default for Config {
    fn default() -> Self {
        Config { delta: 1e-3, timeout: None, max_nodes: 2_000_000, seed: 0x5eed }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub names: Vec<String>,
    pub values: Vec<Interval>,
}

impl Model {
    pub fn get(&self, name: &str) -> Option<Interval> {
        self.names.iter().position(|n| n == name).map(|i| self.values[i])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Unsat,
    DeltaSat(Model),
    Unknown(String),
}

impl Outcome {
    /// `unsat`, `unknown`, or `delta-sat with delta = …` followed by one
    /// `name : [lo, hi]` line per declared variable.
    pub fn render(&self, delta: f64) -> String {
        match self {
            Outcome::Unsat => "unsat\n".to_string(),
            Outcome::Unknown(_) => "unknown\n".to_string(),
            Outcome::DeltaSat(m) => {
                let mut out = format!("delta-sat with delta = {delta:e}\n");
                for (n, v) in m.names.iter().zip(&m.values) {
                    let _ = writeln!(out, "{n} : [{:?}, {:?}]", v.lo, v.hi);
                }
                out
            }
        }
    }
}

pub fn solve(text: &str, cfg: &Config) -> Result<Outcome, SolveError> {
    let start = Instant::now();
    let problem = parse::parse(text)?;
    let norm = normalize::normalize(&problem)?;
    if norm.infeasible {
        return Ok(Outcome::Unsat);
    }
    let limits = Limits {
        delta: cfg.delta,
        deadline: cfg.timeout.map(|t| start + t),
        max_nodes: cfg.max_nodes,
        seed: cfg.seed,
    };
    let mut point: Vec<Interval> = norm.domain.iter().map(|d| Interval::point(d.mid())).collect();
    let mut comps: Vec<&normalize::Component> = norm.components.iter().collect();
    comps.sort_by_key(|c| c.vars.len());
    let mut unknown = None;
    for comp in comps {
        let mut search = Search::new(&norm, &limits);
        match search.solve(comp) {
            ComponentResult::Unsat => return Ok(Outcome::Unsat),
            ComponentResult::Sat(bx) => {
                for &v in &comp.vars {
                    point[v] = bx[v];
                }
            }
            ComponentResult::Unknown(why) => {
                unknown.get_or_insert(why);
            }
        }
    }
    if let Some(why) = unknown {
        return Ok(Outcome::Unknown(why));
    }
    let mut vals = vec![Interval::ENTIRE; norm.atoms.len()];
    let mut values = point.clone();
    for (v, def) in norm.defs.iter().enumerate() {
        if let Some(p) = def {
            let closure = norm.atoms.closure(p.atoms());
            norm.atoms.eval_into(&closure, &point, &mut vals);
            values[v] = p.eval(&vals);
        }
    }
    Ok(Outcome::DeltaSat(Model { names: norm.names.clone(), values }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(s: &str) -> Outcome {
        solve(s, &Config::default()).unwrap()
    }

    fn is_sat(o: &Outcome) -> bool {
        matches!(o, Outcome::DeltaSat(_))
    }

    #[test]
    fn circle_meets_line() {
        let o = run("(declare-fun x () Real)(declare-fun y () Real)
            (assert (= (+ (* x x) (* y y)) 1.0))(assert (= y (* 2.0 x)))(assert (> x 0.0))");
        let Outcome::DeltaSat(m) = &o else { panic!("{o:?}") };
        let (x, y) = (m.get("x").unwrap().mid(), m.get("y").unwrap().mid());
        assert!((x * x + y * y - 1.0).abs() < 1e-3 && (y - 2.0 * x).abs() < 1e-9);
    }

    #[test]
    fn circle_misses_line() {
        let o = run("(declare-fun x () Real)(declare-fun y () Real)
            (assert (= (+ (* x x) (* y y)) 1.0))(assert (= (+ x y) 2.0))");
        assert_eq!(o, Outcome::Unsat);
    }

    #[test]
    fn trig_identity_is_unsat() {
        let o = run("(declare-fun t () Real)(assert (<= 0.0 t))(assert (<= t 3.2))
            (assert (> (+ (* (sin t) (sin t)) (* (cos t) (cos t))) 1.001))");
        assert_eq!(o, Outcome::Unsat);
    }

    #[test]
    fn disjunction_picks_feasible_branch() {
        let o = run("(declare-fun x () Real)(assert (<= -1.0 x))(assert (<= x 1.0))
            (assert (or (> x 5.0) (= (* x x x) 0.125)))");
        let Outcome::DeltaSat(m) = &o else { panic!("{o:?}") };
        assert!((m.get("x").unwrap().mid() - 0.5).abs() < 1e-3);
    }

    #[test]
    fn linear_combination_refutes() {
        // a ≤ 0 ∧ m ≥ 0 ∧ (a − 2m) − a > 0.01 where the polynomials share monomials
        let o = run("(declare-fun x () Real)(declare-fun y () Real)
            (assert (<= -1.0 x))(assert (<= x 1.0))(assert (<= -1.0 y))(assert (<= y 1.0))
            (assert (>= (+ (* x y) (* y y)) 0.0))
            (assert (> (- (* -2.0 (* x y)) (* 2.0 (* y y))) 0.01))");
        assert_eq!(o, Outcome::Unsat);
    }

    #[test]
    fn witnesses_of_sat_trig_problems() {
        let o = run("(declare-fun t () Real)(declare-fun p () Real)
            (assert (<= 0.0 t))(assert (<= t 3.1415926535897931))(assert (<= 0.0 p))(assert (< p 6.2831853071795862))
            (assert (= (* (cos p) (sin (* 0.5 t))) 0.5))(assert (= (* (sin p) (sin (* 0.5 t))) -0.5))");
        assert!(is_sat(&o), "{o:?}");
    }

    #[test]
    fn render_format() {
        let m = Model { names: vec!["x".into()], values: vec![Interval::point(0.25)] };
        assert_eq!(Outcome::DeltaSat(m).render(1e-4), "delta-sat with delta = 1e-4\nx : [0.25, 0.25]\n");
        assert_eq!(Outcome::Unsat.render(1e-4), "unsat\n");
    }
}
