//! From parsed assertions to polynomial literals over a variable box.
//!
//! Top-level equalities `v = e` become definitions and are substituted
//! away (trig-free right-hand sides are preferred, cycles are refused).
//! Affine single-variable literals become domain bounds. The remaining
//! constraints are split into variable-disjoint components.

use crate::formula::{Formula, Lit, Rel, Term};
use crate::interval::Interval;
use crate::parse::Problem;
use crate::poly::{AtomDef, AtomId, Atoms, Poly};
use crate::SolveError;

#[derive(Debug, Clone)]
pub struct PLit {
    /// Constrains `poly rel 0`.
    pub poly: Poly,
    pub rel: Rel,
    pub closure: Vec<AtomId>,
    pub vars: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PF {
    Lit(usize),
    And(Vec<PF>),
    Or(Vec<PF>),
}

impl PF {
    pub fn lits(&self, out: &mut Vec<usize>) {
        match self {
            PF::Lit(l) => out.push(*l),
            PF::And(fs) | PF::Or(fs) => fs.iter().for_each(|f| f.lits(out)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Component {
    pub vars: Vec<usize>,
    pub constraints: Vec<PF>,
}

#[derive(Debug, Clone)]
pub struct Normalized {
    pub names: Vec<String>,
    pub atoms: Atoms,
    pub lits: Vec<PLit>,
    pub domain: Vec<Interval>,
    /// Defining polynomial of each substituted variable.
    pub defs: Vec<Option<Poly>>,
    pub components: Vec<Component>,
    /// A constraint folded to false or a bound emptied the domain.
    pub infeasible: bool,
}

enum Folded {
    True,
    False,
    F(PF),
}

/// Truth of a variable-free literal: `Some` when certain.
pub fn constant_truth(c: &Interval, rel: Rel) -> Option<bool> {
    match rel {
        Rel::Eq if c.lo > 0.0 || c.hi < 0.0 => Some(false),
        Rel::Eq if c.lo == 0.0 && c.hi == 0.0 => Some(true),
        Rel::Ge if c.hi < 0.0 => Some(false),
        Rel::Ge if c.lo >= 0.0 => Some(true),
        Rel::Gt if c.hi <= 0.0 => Some(false),
        Rel::Gt if c.lo > 0.0 => Some(true),
        _ => None,
    }
}

/// When full expansion is too large, definitions beyond this many terms
/// stay variables, tied to their expansion by an equality.
const CUT_TERMS: usize = 64;

struct Builder<'a> {
    cut_terms: usize,
    def_terms: &'a [Option<Term>],
    def_polys: Vec<Option<Poly>>,
    atoms: Atoms,
    cut: Vec<(usize, Poly)>,
}

impl Builder<'_> {
    /// Converts all definitions bottom-up without recursion on the chain.
    fn resolve_defs(&mut self) -> Result<(), SolveError> {
        let n = self.def_terms.len();
        let mut state = vec![0u8; n];
        for root in 0..n {
            if self.def_terms[root].is_none() || state[root] == 2 {
                continue;
            }
            let mut stack = vec![(root, false)];
            while let Some((v, expanded)) = stack.pop() {
                if state[v] == 2 {
                    continue;
                }
                if expanded {
                    let t = self.def_terms[v].as_ref().unwrap();
                    let p = self.poly(t)?;
                    if p.len() > self.cut_terms {
                        self.cut.push((v, p));
                    } else {
                        self.def_polys[v] = Some(p);
                    }
                    state[v] = 2;
                    continue;
                }
                state[v] = 1;
                stack.push((v, true));
                let mut deps = Vec::new();
                self.def_terms[v].as_ref().unwrap().collect_vars(&mut deps);
                for d in deps {
                    if self.def_terms[d].is_some() && state[d] == 0 {
                        stack.push((d, false));
                    }
                }
            }
        }
        Ok(())
    }

    fn poly(&mut self, t: &Term) -> Result<Poly, SolveError> {
        let too_large = |_| SolveError::Unsupported(TOO_LARGE.into());
        Ok(match t {
            Term::Var(v) => match &self.def_polys[*v] {
                Some(p) => p.clone(),
                None => Poly::atom(self.atoms.var(*v)),
            },
            Term::Const(c) => Poly::constant(*c),
            Term::Add(ts) => {
                let mut acc = Poly::zero();
                for t in ts {
                    acc = acc.add(&self.poly(t)?);
                }
                acc
            }
            Term::Sub(ts) => {
                let mut acc = self.poly(&ts[0])?;
                for t in &ts[1..] {
                    acc = acc.sub(&self.poly(t)?);
                }
                acc
            }
            Term::Neg(a) => self.poly(a)?.neg(),
            Term::Mul(ts) => {
                let mut acc = Poly::constant(Interval::point(1.0));
                for t in ts {
                    acc = acc.mul(&self.poly(t)?).map_err(too_large)?;
                }
                acc
            }
            Term::Div(a, b) => {
                let d = self.poly(b)?;
                let Some(c) = d.as_constant() else {
                    return Err(SolveError::Unsupported("division by a non-constant".into()));
                };
                if c.contains_zero() {
                    return Err(SolveError::Unsupported("division by zero".into()));
                }
                self.poly(a)?.scale(&Interval::point(1.0).div(&c))
            }
            Term::Pow(a, b) => {
                let e = self.poly(b)?.as_constant().and_then(|c| crate::formula::integer_exponent(&c));
                let Some(n) = e else {
                    return Err(SolveError::Unsupported("non-integer exponent".into()));
                };
                self.poly(a)?.powi(n).map_err(too_large)?
            }
            Term::Sin(a) | Term::Cos(a) => {
                let arg = self.poly(a)?;
                let cos = matches!(t, Term::Cos(_));
                match arg.as_constant() {
                    Some(c) => Poly::constant(if cos { c.cos() } else { c.sin() }),
                    None => Poly::atom(self.atoms.trig(cos, arg)),
                }
            }
        })
    }
}

/// `v` is reachable from `start` through the definition graph.
fn reaches(def_terms: &[Option<Term>], start: &[usize], v: usize) -> bool {
    let mut seen = std::collections::HashSet::new();
    let mut stack: Vec<usize> = start.to_vec();
    while let Some(u) = stack.pop() {
        if u == v {
            return true;
        }
        if !seen.insert(u) {
            continue;
        }
        if let Some(t) = &def_terms[u] {
            t.collect_vars(&mut stack);
        }
    }
    false
}

fn select_definitions(n_vars: usize, top: &[Formula]) -> (Vec<Option<Term>>, Vec<bool>) {
    let mut def_terms: Vec<Option<Term>> = vec![None; n_vars];
    let mut used = vec![false; top.len()];
    for allow_trig in [false, true] {
        for (i, f) in top.iter().enumerate() {
            if used[i] {
                continue;
            }
            let Formula::Lit(Lit { lhs, rhs, rel: Rel::Eq }) = f else { continue };
            for (var_side, other) in [(lhs, rhs), (rhs, lhs)] {
                let Term::Var(v) = var_side else { continue };
                if def_terms[*v].is_some() || (!allow_trig && other.has_trig()) {
                    continue;
                }
                let mut deps = Vec::new();
                other.collect_vars(&mut deps);
                if reaches(&def_terms, &deps, *v) {
                    continue;
                }
                def_terms[*v] = Some(other.clone());
                used[i] = true;
                break;
            }
        }
    }
    (def_terms, used)
}

pub fn normalize(p: &Problem) -> Result<Normalized, SolveError> {
    match normalize_with(p, usize::MAX) {
        Err(SolveError::Unsupported(m)) if m == TOO_LARGE => normalize_with(p, CUT_TERMS),
        other => other,
    }
}

const TOO_LARGE: &str = "polynomial expansion too large";

fn normalize_with(p: &Problem, cut_terms: usize) -> Result<Normalized, SolveError> {
    let n = p.vars.len();
    let mut top = Vec::new();
    for f in &p.asserts {
        match f.clone() {
            Formula::And(fs) => top.extend(fs),
            other => top.push(other),
        }
    }
    let (def_terms, used) = select_definitions(n, &top);
    let mut b = Builder { cut_terms, def_terms: &def_terms, def_polys: vec![None; n], atoms: Atoms::default(), cut: Vec::new() };
    b.resolve_defs()?;

    let mut lits: Vec<PLit> = Vec::new();
    let mut constraints: Vec<PF> = Vec::new();
    let mut domain = vec![Interval::ENTIRE; n];
    let mut infeasible = false;
    for (f, _) in top.iter().zip(&used).filter(|(_, u)| !**u) {
        match fold(f, &mut b, &mut lits)? {
            Folded::True => {}
            Folded::False => infeasible = true,
            Folded::F(PF::And(fs)) => constraints.extend(fs),
            Folded::F(pf) => constraints.push(pf),
        }
    }
    for (v, p) in std::mem::take(&mut b.cut) {
        let poly = Poly::atom(b.atoms.var(v)).sub(&p);
        lits.push(PLit { poly, rel: Rel::Eq, closure: Vec::new(), vars: Vec::new() });
        constraints.push(PF::Lit(lits.len() - 1));
    }
    let atoms = b.atoms;
    let defs = b.def_polys;

    // affine single-variable literals become bounds
    constraints.retain(|pf| {
        let PF::Lit(l) = pf else { return true };
        let lit = &lits[*l];
        let Some((a, c, d)) = lit.poly.as_affine_in_one_atom() else { return true };
        let AtomDef::Var(v) = atoms.defs[a as usize] else { return true };
        // c·x + d rel 0  ⇒  x rel' −d/c
        let q = d.neg().div(&c);
        let positive = c.lo > 0.0;
        let bound = match (lit.rel, positive) {
            (Rel::Eq, _) => q,
            (_, true) => Interval::new(q.lo, f64::INFINITY),
            (_, false) => Interval::new(f64::NEG_INFINITY, q.hi),
        };
        domain[v] = domain[v].intersect(&bound);
        false
    });
    if domain.iter().any(Interval::is_empty) {
        infeasible = true;
    }
    for lit in &mut lits {
        lit.closure = atoms.closure(lit.poly.atoms());
        lit.vars = atoms.vars_of(&lit.closure);
    }
    let components = split_components(n, &constraints, &lits);
    Ok(Normalized { names: p.vars.clone(), atoms, lits, domain, defs, components, infeasible })
}

fn fold(f: &Formula, b: &mut Builder<'_>, lits: &mut Vec<PLit>) -> Result<Folded, SolveError> {
    Ok(match f {
        Formula::True => Folded::True,
        Formula::False => Folded::False,
        Formula::Lit(Lit { lhs, rhs, rel }) => {
            let poly = b.poly(lhs)?.sub(&b.poly(rhs)?);
            if let Some(c) = poly.as_constant() {
                match constant_truth(&c, *rel) {
                    Some(true) => return Ok(Folded::True),
                    Some(false) => return Ok(Folded::False),
                    None => {}
                }
            }
            lits.push(PLit { poly, rel: *rel, closure: Vec::new(), vars: Vec::new() });
            Folded::F(PF::Lit(lits.len() - 1))
        }
        Formula::And(fs) => {
            let mut out = Vec::new();
            for f in fs {
                match fold(f, b, lits)? {
                    Folded::True => {}
                    Folded::False => return Ok(Folded::False),
                    Folded::F(PF::And(inner)) => out.extend(inner),
                    Folded::F(pf) => out.push(pf),
                }
            }
            match out.len() {
                0 => Folded::True,
                1 => Folded::F(out.pop().unwrap()),
                _ => Folded::F(PF::And(out)),
            }
        }
        Formula::Or(fs) => {
            let mut out = Vec::new();
            for f in fs {
                match fold(f, b, lits)? {
                    Folded::False => {}
                    Folded::True => return Ok(Folded::True),
                    Folded::F(PF::Or(inner)) => out.extend(inner),
                    Folded::F(pf) => out.push(pf),
                }
            }
            match out.len() {
                0 => Folded::False,
                1 => Folded::F(out.pop().unwrap()),
                _ => Folded::F(PF::Or(out)),
            }
        }
    })
}

fn split_components(n: usize, constraints: &[PF], lits: &[PLit]) -> Vec<Component> {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut cvars: Vec<Vec<usize>> = Vec::with_capacity(constraints.len());
    for pf in constraints {
        let mut ls = Vec::new();
        pf.lits(&mut ls);
        let mut vs: Vec<usize> = ls.iter().flat_map(|&l| lits[l].vars.iter().copied()).collect();
        vs.sort_unstable();
        vs.dedup();
        for w in vs.windows(2) {
            let (a, b) = (find(&mut parent, w[0]), find(&mut parent, w[1]));
            parent[a] = b;
        }
        cvars.push(vs);
    }
    let mut by_root: std::collections::BTreeMap<usize, Component> = std::collections::BTreeMap::new();
    let mut ground = Vec::new();
    for (pf, vs) in constraints.iter().zip(&cvars) {
        match vs.first() {
            Some(&v) => {
                let r = find(&mut parent, v);
                by_root.entry(r).or_insert_with(|| Component { vars: Vec::new(), constraints: Vec::new() }).constraints.push(pf.clone());
            }
            None => ground.push(pf.clone()),
        }
    }
    for v in 0..n {
        let r = find(&mut parent, v);
        if let Some(c) = by_root.get_mut(&r) {
            c.vars.push(v);
        }
    }
    let mut out: Vec<Component> = by_root.into_values().collect();
    if !ground.is_empty() {
        out.push(Component { vars: Vec::new(), constraints: ground });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse;

    fn norm(s: &str) -> Normalized {
        normalize(&parse(s).unwrap()).unwrap()
    }

    #[test]
    fn chains_are_substituted() {
        let n = norm(
            "(declare-fun a () Real)(declare-fun b () Real)(declare-fun c () Real)
             (assert (= b (* 2.0 a)))(assert (= c (+ b 1.0)))(assert (>= c 3.0))",
        );
        // c ≥ 3 becomes 2a + 1 − 3 ≥ 0, an affine bound on a
        assert!(n.components.is_empty());
        assert_eq!(n.domain[0], Interval::new(1.0, f64::INFINITY));
        assert!(n.defs[1].is_some() && n.defs[2].is_some() && n.defs[0].is_none());
    }

    #[test]
    fn trig_definitions_come_second() {
        let n = norm(
            "(declare-fun a () Real)(declare-fun t () Real)(declare-fun b () Real)
             (assert (= a (cos t)))(assert (= a (* b b)))(assert (<= 0.0 t))",
        );
        // a := b·b wins; cos t = b·b stays as a literal
        assert!(n.defs[0].is_some());
        assert_eq!(n.components.len(), 1);
        assert_eq!(n.components[0].constraints.len(), 1);
        assert_eq!(n.components[0].vars, vec![1, 2]);
    }

    #[test]
    fn cycles_are_refused() {
        let n = norm("(declare-fun x () Real)(declare-fun y () Real)(assert (= x (+ y 1.0)))(assert (= y (* x x)))");
        assert!(n.defs[0].is_some() && n.defs[1].is_none());
        assert_eq!(n.lits.len(), 1);
    }

    #[test]
    fn constant_conflict_is_infeasible() {
        let n = norm("(declare-fun x () Real)(assert (= x 0.5))(assert (= x 0.51))");
        assert!(n.infeasible);
    }

    #[test]
    fn components_are_disjoint() {
        let n = norm(
            "(declare-fun x () Real)(declare-fun y () Real)(declare-fun z () Real)
             (assert (>= (* x y) 1.0))(assert (or (> (* z z) 2.0) (< z 0.0)))",
        );
        assert_eq!(n.components.len(), 2);
    }
}
