//! Branch and prune over one component.
//!
//! Each node carries a box, the literals asserted in it and the
//! disjunctions still open. A node is closed by contraction, by a
//! disjunction whose disjuncts are all refuted, or by a linear
//! combination of its literals that is negative on the whole box. It is
//! answered δ-sat by a point whose δ-weakened constraints all hold under
//! rigorous evaluation, or by a box narrower than δ.

use std::time::Instant;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::formula::Rel;
use crate::interval::Interval;
use crate::normalize::{constant_truth, Component, Normalized, PF};
use crate::poly::{revise, Empty, Poly};

#[derive(Debug, Clone)]
pub struct Limits {
    pub delta: f64,
    pub deadline: Option<Instant>,
    pub max_nodes: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ComponentResult {
    Unsat,
    /// A box (usually a point) over all variables; only the component's
    /// variables are meaningful.
    Sat(Vec<Interval>),
    Unknown(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    False,
    Weak,
    Open,
}

#[derive(Debug, Clone)]
struct Node {
    bx: Vec<Interval>,
    lits: Vec<usize>,
    clauses: Vec<PF>,
    depth: u32,
}

enum Simplified {
    True,
    False,
    Keep(PF),
}

/// Disjunctions of at most this many open disjuncts are split before diving.
const SMALL_CLAUSE: usize = 4;
const HC4_ROUNDS: usize = 40;
const LC_MAX_LITS: usize = 64;
const LC_MAX_PARTNERS: usize = 24;

pub struct Search<'a> {
    n: &'a Normalized,
    limits: &'a Limits,
    vals: Vec<Interval>,
    rng: StdRng,
    pub nodes: u64,
}

fn classify(v: &Interval, rel: Rel, delta: f64) -> Status {
    if v.is_empty() {
        return Status::False;
    }
    match rel {
        Rel::Eq if v.lo > 0.0 || v.hi < 0.0 => Status::False,
        Rel::Eq if v.lo >= -delta && v.hi <= delta => Status::Weak,
        Rel::Ge if v.hi < 0.0 => Status::False,
        Rel::Ge if v.lo >= -delta => Status::Weak,
        Rel::Gt if v.hi <= 0.0 => Status::False,
        Rel::Gt if v.lo > -delta => Status::Weak,
        _ => Status::Open,
    }
}

/// Width below which a variable counts as fixed.
fn tol(delta: f64, x: &Interval) -> f64 {
    (delta * 1e-2).max(1e-12) * (1.0 + x.mid().abs())
}

fn target(rel: Rel) -> Interval {
    match rel {
        Rel::Eq => Interval::point(0.0),
        Rel::Ge | Rel::Gt => Interval::new(0.0, f64::INFINITY),
    }
}

fn arity(pf: &PF) -> usize {
    match pf {
        PF::Or(ds) => ds.len(),
        _ => 1,
    }
}

impl<'a> Search<'a> {
    pub fn new(n: &'a Normalized, limits: &'a Limits) -> Self {
        Search {
            n,
            limits,
            vals: vec![Interval::ENTIRE; n.atoms.len()],
            rng: StdRng::seed_from_u64(limits.seed),
            nodes: 0,
        }
    }

    fn lit_value(&mut self, l: usize, bx: &[Interval]) -> Interval {
        let lit = &self.n.lits[l];
        self.n.atoms.eval_into(&lit.closure, bx, &mut self.vals);
        lit.poly.eval(&self.vals)
    }

    fn lit_status(&mut self, l: usize, bx: &[Interval]) -> Status {
        let v = self.lit_value(l, bx);
        classify(&v, self.n.lits[l].rel, self.limits.delta)
    }

    fn simplify(&mut self, pf: &PF, bx: &[Interval]) -> Simplified {
        match pf {
            PF::Lit(l) => match self.lit_status(*l, bx) {
                Status::False => Simplified::False,
                Status::Weak => Simplified::True,
                Status::Open => Simplified::Keep(pf.clone()),
            },
            PF::And(fs) => {
                let mut out = Vec::new();
                for f in fs {
                    match self.simplify(f, bx) {
                        Simplified::False => return Simplified::False,
                        Simplified::True => {}
                        Simplified::Keep(PF::And(inner)) => out.extend(inner),
                        Simplified::Keep(k) => out.push(k),
                    }
                }
                match out.len() {
                    0 => Simplified::True,
                    1 => Simplified::Keep(out.pop().unwrap()),
                    _ => Simplified::Keep(PF::And(out)),
                }
            }
            PF::Or(ds) => {
                let mut out = Vec::new();
                for d in ds {
                    match self.simplify(d, bx) {
                        Simplified::True => return Simplified::True,
                        Simplified::False => {}
                        Simplified::Keep(PF::Or(inner)) => out.extend(inner),
                        Simplified::Keep(k) => out.push(k),
                    }
                }
                match out.len() {
                    0 => Simplified::False,
                    1 => Simplified::Keep(out.pop().unwrap()),
                    _ => Simplified::Keep(PF::Or(out)),
                }
            }
        }
    }

    /// δ-weak truth over the whole box.
    fn holds(&mut self, pf: &PF, bx: &[Interval]) -> bool {
        match pf {
            PF::Lit(l) => self.lit_status(*l, bx) == Status::Weak,
            PF::And(fs) => fs.iter().all(|f| self.holds(f, bx)),
            PF::Or(ds) => ds.iter().any(|d| self.holds(d, bx)),
        }
    }

    fn relevant_vars(&self, node: &Node) -> Vec<usize> {
        let mut ls = node.lits.clone();
        for c in &node.clauses {
            c.lits(&mut ls);
        }
        let mut vs: Vec<usize> = ls.iter().flat_map(|&l| self.n.lits[l].vars.iter().copied()).collect();
        vs.sort_unstable();
        vs.dedup();
        vs
    }

    fn hc4(&mut self, lits: &[usize], bx: &mut [Interval]) -> Result<(), Empty> {
        let mut vars: Vec<usize> = lits.iter().flat_map(|&l| self.n.lits[l].vars.iter().copied()).collect();
        vars.sort_unstable();
        vars.dedup();
        for _ in 0..HC4_ROUNDS {
            let before: Vec<Interval> = vars.iter().map(|&v| bx[v]).collect();
            for &l in lits {
                let lit = &self.n.lits[l];
                self.n.atoms.eval_into(&lit.closure, bx, &mut self.vals);
                revise(&lit.poly, target(lit.rel), &self.n.atoms, &mut self.vals, bx, 0)?;
            }
            let progress = vars.iter().zip(&before).any(|(&v, old)| {
                let new = bx[v];
                if !old.lo.is_finite() || !old.hi.is_finite() {
                    return new.lo != old.lo || new.hi != old.hi;
                }
                new.width() < 0.99 * old.width()
            });
            if !progress {
                break;
            }
        }
        Ok(())
    }

    fn add(node: &mut Node, pf: PF) {
        match pf {
            PF::Lit(l) => node.lits.push(l),
            PF::And(fs) => fs.into_iter().for_each(|f| Self::add(node, f)),
            or @ PF::Or(_) => node.clauses.push(or),
        }
    }

    fn propagate(&mut self, node: &mut Node) -> Result<(), Empty> {
        loop {
            self.hc4(&node.lits.clone(), &mut node.bx)?;
            let mut changed = false;
            for c in std::mem::take(&mut node.clauses) {
                match self.simplify(&c, &node.bx) {
                    Simplified::False => return Err(Empty),
                    Simplified::True => {}
                    Simplified::Keep(k @ PF::Or(_)) => node.clauses.push(k),
                    Simplified::Keep(k) => {
                        Self::add(node, k);
                        changed = true;
                    }
                }
            }
            // inequalities true on the whole box stay true in every sub-box
            let lits = std::mem::take(&mut node.lits);
            for l in lits {
                let v = self.lit_value(l, &node.bx);
                let rel = self.n.lits[l].rel;
                match constant_truth(&v, rel) {
                    Some(false) => return Err(Empty),
                    Some(true) if rel != Rel::Eq => {}
                    _ => node.lits.push(l),
                }
            }
            if !changed {
                return Ok(());
            }
        }
    }

    /// Looks for λ (non-negative on inequalities) such that
    /// `p_a + Σ λ_j p_j` is negative on the box although every literal
    /// forces it to be non-negative.
    fn lc_refutes(&mut self, node: &Node) -> bool {
        if node.lits.len() > LC_MAX_LITS || node.lits.len() < 2 {
            return false;
        }
        let lits = &self.n.lits;
        for &a in &node.lits {
            if lits[a].rel == Rel::Eq {
                continue;
            }
            let pa = &lits[a].poly;
            let shares = |p: &Poly| {
                p.terms.iter().any(|(m, _)| !m.is_empty() && pa.terms.binary_search_by(|(k, _)| k.cmp(m)).is_ok())
            };
            let partners: Vec<usize> =
                node.lits.iter().copied().filter(|&b| b != a && shares(&lits[b].poly)).take(LC_MAX_PARTNERS).collect();
            if partners.is_empty() {
                continue;
            }
            let Some(lambda) = least_squares(pa, &partners.iter().map(|&b| (&lits[b].poly, lits[b].rel)).collect::<Vec<_>>())
            else {
                continue;
            };
            let mut combo = pa.clone();
            let mut strict = lits[a].rel == Rel::Gt;
            for (&b, &l) in partners.iter().zip(&lambda) {
                if l == 0.0 {
                    continue;
                }
                combo = combo.add(&lits[b].poly.scale(&Interval::point(l)));
                strict |= lits[b].rel == Rel::Gt && l > 0.0;
            }
            let closure = self.n.atoms.closure(combo.atoms());
            self.n.atoms.eval_into(&closure, &node.bx, &mut self.vals);
            let r = combo.eval(&self.vals);
            if r.hi < 0.0 || (strict && r.hi <= 0.0) {
                return true;
            }
        }
        false
    }

    fn midpoint(&self, node: &Node, vars: &[usize]) -> Vec<Interval> {
        let mut pt = node.bx.clone();
        for &v in vars {
            pt[v] = Interval::point(node.bx[v].mid());
        }
        pt
    }

    fn certifies(&mut self, node: &Node, pt: &[Interval]) -> bool {
        let lits = node.lits.clone();
        if !lits.iter().all(|&l| self.lit_status(l, pt) == Status::Weak) {
            return false;
        }
        let clauses = node.clauses.clone();
        clauses.iter().all(|c| self.holds(c, pt))
    }

    fn tol(&self, x: &Interval) -> f64 {
        tol(self.limits.delta, x)
    }

    /// Greedy descent: each variable in turn is fixed to a random value
    /// (or halved towards one) with propagation after every step.
    fn dive(&mut self, node: &Node, vars: &[usize]) -> Option<Vec<Interval>> {
        let mut bx = node.bx.clone();
        let lits = node.lits.clone();
        for &v in vars {
            if bx[v].width() <= self.tol(&bx[v]) {
                continue;
            }
            let x = self.sample(&bx[v]);
            let saved = bx.clone();
            bx[v] = Interval::point(x);
            if self.hc4(&lits, &mut bx).is_ok() {
                continue;
            }
            bx = saved;
            loop {
                if bx[v].width() <= self.tol(&bx[v]) {
                    break;
                }
                let (l, r) = bx[v].bisect();
                let halves = if self.rng.gen::<bool>() { [l, r] } else { [r, l] };
                let saved = bx.clone();
                let mut ok = false;
                for h in halves {
                    bx[v] = h;
                    if self.hc4(&lits, &mut bx).is_ok() {
                        ok = true;
                        break;
                    }
                    bx = saved.clone();
                }
                if !ok {
                    return None;
                }
            }
        }
        let pt = self.midpoint(&Node { bx, lits: Vec::new(), clauses: Vec::new(), depth: 0 }, vars);
        self.certifies(node, &pt).then_some(pt)
    }

    fn sample(&mut self, x: &Interval) -> f64 {
        let lo = if x.lo.is_finite() { x.lo } else { x.hi.min(0.0) - 10.0 };
        let hi = if x.hi.is_finite() { x.hi } else { x.lo.max(0.0) + 10.0 };
        if lo >= hi {
            return lo;
        }
        self.rng.gen_range(lo..=hi)
    }

    fn out_of_budget(&self) -> Option<String> {
        if self.nodes > self.limits.max_nodes {
            return Some("node limit reached".into());
        }
        if let Some(d) = self.limits.deadline {
            if Instant::now() >= d {
                return Some("timeout".into());
            }
        }
        None
    }

    pub fn solve(&mut self, comp: &Component) -> ComponentResult {
        let mut root = Node { bx: self.n.domain.clone(), lits: Vec::new(), clauses: Vec::new(), depth: 0 };
        for c in &comp.constraints {
            Self::add(&mut root, c.clone());
        }
        let mut stack = vec![root];
        while let Some(mut node) = stack.pop() {
            self.nodes += 1;
            if let Some(why) = self.out_of_budget() {
                return ComponentResult::Unknown(why);
            }
            if self.propagate(&mut node).is_err() || self.lc_refutes(&node) {
                continue;
            }
            let vars = self.relevant_vars(&node);
            let pt = self.midpoint(&node, &vars);
            if self.certifies(&node, &pt) {
                return ComponentResult::Sat(pt);
            }
            let small = node
                .clauses
                .iter()
                .enumerate()
                .filter(|(_, c)| arity(c) <= SMALL_CLAUSE)
                .min_by_key(|(_, c)| arity(c))
                .map(|(i, _)| i);
            if small.is_none() {
                let tries = if node.depth == 0 { 4 } else { 1 };
                for _ in 0..tries {
                    if let Some(pt) = self.dive(&node, &vars) {
                        return ComponentResult::Sat(pt);
                    }
                }
            }
            match self.branch(node, small, &vars, &pt) {
                Some(children) => stack.extend(children.into_iter().rev()),
                None => return ComponentResult::Sat(pt),
            }
        }
        ComponentResult::Unsat
    }

    /// Children in exploration order; `None` when the box is already
    /// narrower than δ in every relevant direction.
    fn branch(&mut self, node: Node, small: Option<usize>, vars: &[usize], pt: &[Interval]) -> Option<Vec<Node>> {
        let violated_clause = || {
            let mut best: Option<usize> = None;
            for (i, c) in node.clauses.iter().enumerate() {
                if best.is_none_or(|b| arity(c) < arity(&node.clauses[b])) {
                    best = Some(i);
                }
            }
            best
        };
        if let Some(i) = small {
            return Some(self.split(node, i));
        }
        let delta = self.limits.delta;
        let wide = |v: &usize| node.bx[*v].width() > tol(delta, &node.bx[*v]);
        let violated_lits: Vec<usize> =
            node.lits.clone().into_iter().filter(|&l| self.lit_status(l, pt) != Status::Weak).collect();
        let mut cand: Vec<usize> =
            violated_lits.iter().flat_map(|&l| self.n.lits[l].vars.iter().copied()).filter(|v| wide(v)).collect();
        if cand.is_empty() {
            if let Some(i) = violated_clause() {
                return Some(self.split(node, i));
            }
            cand = vars.iter().copied().filter(|v| wide(v)).collect();
        }
        let v = cand.into_iter().max_by(|a, b| {
            let wa = node.bx[*a].width() / self.tol(&node.bx[*a]);
            let wb = node.bx[*b].width() / self.tol(&node.bx[*b]);
            wa.total_cmp(&wb)
        })?;
        let (l, r) = node.bx[v].bisect();
        let mut left = node.clone();
        left.bx[v] = l;
        left.depth += 1;
        let mut right = node;
        right.bx[v] = r;
        right.depth += 1;
        Some(vec![left, right])
    }

    fn split(&mut self, mut node: Node, i: usize) -> Vec<Node> {
        let PF::Or(ds) = node.clauses.remove(i) else { unreachable!("clauses are disjunctions") };
        node.depth += 1;
        ds.into_iter()
            .map(|d| {
                let mut child = node.clone();
                Self::add(&mut child, d);
                child
            })
            .collect()
    }
}

/// Minimizes ‖p_a + Σ λ_j p_j‖ over non-constant coefficients, with
/// λ_j ≥ 0 for inequalities (active-set on the normal equations).
fn least_squares(pa: &Poly, partners: &[(&Poly, Rel)]) -> Option<Vec<f64>> {
    use std::collections::HashMap;
    let mut cols: HashMap<&Vec<(u32, u32)>, usize> = HashMap::new();
    for p in std::iter::once(pa).chain(partners.iter().map(|(p, _)| *p)) {
        for (m, _) in &p.terms {
            if !m.is_empty() {
                let k = cols.len();
                cols.entry(m).or_insert(k);
            }
        }
    }
    let dense = |p: &Poly| {
        let mut v = vec![0.0; cols.len()];
        for (m, c) in &p.terms {
            if let Some(&k) = cols.get(m) {
                v[k] = c.mid();
            }
        }
        v
    };
    let a = dense(pa);
    let bs: Vec<Vec<f64>> = partners.iter().map(|(p, _)| dense(p)).collect();
    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>();
    let mut active: Vec<usize> = (0..partners.len()).collect();
    let mut lambda = vec![0.0; partners.len()];
    for _ in 0..=partners.len() {
        let k = active.len();
        if k == 0 {
            return None;
        }
        let mut g = vec![vec![0.0; k + 1]; k];
        for (r, &i) in active.iter().enumerate() {
            for (c, &j) in active.iter().enumerate() {
                g[r][c] = dot(&bs[i], &bs[j]);
            }
            g[r][r] += 1e-12 * (1.0 + g[r][r]);
            g[r][k] = -dot(&a, &bs[i]);
        }
        let sol = gauss(g)?;
        lambda.iter_mut().for_each(|l| *l = 0.0);
        for (r, &i) in active.iter().enumerate() {
            lambda[i] = sol[r];
        }
        let worst = active
            .iter()
            .enumerate()
            .filter(|(_, &i)| partners[i].1 != Rel::Eq && lambda[i] < 0.0)
            .min_by(|x, y| lambda[*x.1].total_cmp(&lambda[*y.1]))
            .map(|(r, _)| r);
        match worst {
            Some(r) => {
                active.remove(r);
            }
            None => return Some(lambda),
        }
    }
    None
}

/// Gaussian elimination with partial pivoting on an augmented matrix.
fn gauss(mut m: Vec<Vec<f64>>) -> Option<Vec<f64>> {
    let n = m.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        if m[piv][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, piv);
        for r in col + 1..n {
            let f = m[r][col] / m[col][col];
            if f != 0.0 {
                for c in col..=n {
                    m[r][c] -= f * m[col][c];
                }
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| m[r][c] * x[c]).sum();
        x[r] = (m[r][n] - s) / m[r][r];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_solves() {
        let x = gauss(vec![vec![2.0, 1.0, 3.0], vec![1.0, 3.0, 5.0]]).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-12 && (x[1] - 1.4).abs() < 1e-12);
    }

    #[test]
    fn classification_uses_the_weakening() {
        let d = 1e-3;
        assert_eq!(classify(&Interval::new(-1e-4, 1e-4), Rel::Eq, d), Status::Weak);
        assert_eq!(classify(&Interval::new(1e-4, 2e-4), Rel::Eq, d), Status::False);
        assert_eq!(classify(&Interval::new(-1e-4, 1.0), Rel::Gt, d), Status::Weak);
        assert_eq!(classify(&Interval::new(-1.0, 0.0), Rel::Gt, d), Status::False);
        assert_eq!(classify(&Interval::new(-1.0, 0.0), Rel::Ge, d), Status::Open);
    }
}
