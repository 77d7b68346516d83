//! Sparse polynomials with interval coefficients over hash-consed atoms.
//!
//! An atom is a variable or the sine/cosine of a polynomial, so every
//! term built from `+ − × ÷const ^n sin cos` normalizes to a `Poly`.

use std::collections::HashMap;

use crate::interval::Interval;

pub type AtomId = u32;
/// Sorted by atom, exponents ≥ 1.
pub type Monomial = Vec<(AtomId, u32)>;

/// Beyond this many terms a product is reported as too large.
pub const MAX_TERMS: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TooLarge;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Poly {
    /// Sorted by monomial; no coefficient is the point zero.
    pub terms: Vec<(Monomial, Interval)>,
}

fn is_zero(c: &Interval) -> bool {
    c.lo == 0.0 && c.hi == 0.0
}

fn mono_mul(a: &Monomial, b: &Monomial) -> Monomial {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                out.push((a[i].0, a[i].1 + b[j].1));
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

pub fn mono_eval(m: &Monomial, vals: &[Interval]) -> Interval {
    let mut acc = Interval::point(1.0);
    for &(a, e) in m {
        acc = acc.mul(&vals[a as usize].powi(e));
    }
    acc
}

impl Poly {
    pub fn zero() -> Poly {
        Poly { terms: Vec::new() }
    }

    pub fn constant(c: Interval) -> Poly {
        if is_zero(&c) {
            Poly::zero()
        } else {
            Poly { terms: vec![(Vec::new(), c)] }
        }
    }

    pub fn atom(a: AtomId) -> Poly {
        Poly { terms: vec![(vec![(a, 1)], Interval::point(1.0))] }
    }

    pub fn as_constant(&self) -> Option<Interval> {
        match self.terms.as_slice() {
            [] => Some(Interval::point(0.0)),
            [(m, c)] if m.is_empty() => Some(*c),
            _ => None,
        }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn add(&self, o: &Poly) -> Poly {
        let mut out = Vec::with_capacity(self.terms.len() + o.terms.len());
        let (a, b) = (&self.terms, &o.terms);
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Less => {
                    out.push(a[i].clone());
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    out.push(b[j].clone());
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    let c = a[i].1.add(&b[j].1);
                    if !is_zero(&c) {
                        out.push((a[i].0.clone(), c));
                    }
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&a[i..]);
        out.extend_from_slice(&b[j..]);
        Poly { terms: out }
    }

    pub fn neg(&self) -> Poly {
        Poly { terms: self.terms.iter().map(|(m, c)| (m.clone(), c.neg())).collect() }
    }

    pub fn sub(&self, o: &Poly) -> Poly {
        self.add(&o.neg())
    }

    pub fn scale(&self, k: &Interval) -> Poly {
        if is_zero(k) {
            return Poly::zero();
        }
        Poly { terms: self.terms.iter().map(|(m, c)| (m.clone(), c.mul(k))).filter(|(_, c)| !is_zero(c)).collect() }
    }

    pub fn mul(&self, o: &Poly) -> Result<Poly, TooLarge> {
        if let Some(c) = o.as_constant() {
            return Ok(self.scale(&c));
        }
        if let Some(c) = self.as_constant() {
            return Ok(o.scale(&c));
        }
        if self.terms.len().saturating_mul(o.terms.len()) > MAX_TERMS * 4 {
            return Err(TooLarge);
        }
        let mut acc: HashMap<Monomial, Interval> = HashMap::with_capacity(self.terms.len() * o.terms.len());
        for (ma, ca) in &self.terms {
            for (mb, cb) in &o.terms {
                let m = mono_mul(ma, mb);
                let c = ca.mul(cb);
                acc.entry(m).and_modify(|x| *x = x.add(&c)).or_insert(c);
            }
        }
        if acc.len() > MAX_TERMS {
            return Err(TooLarge);
        }
        let mut terms: Vec<_> = acc.into_iter().filter(|(_, c)| !is_zero(c)).collect();
        terms.sort_by(|a, b| a.0.cmp(&b.0));
        Ok(Poly { terms })
    }

    pub fn powi(&self, n: u32) -> Result<Poly, TooLarge> {
        let mut acc = Poly::constant(Interval::point(1.0));
        for _ in 0..n {
            acc = acc.mul(self)?;
        }
        Ok(acc)
    }

    pub fn eval(&self, vals: &[Interval]) -> Interval {
        let mut acc = Interval::point(0.0);
        for (m, c) in &self.terms {
            acc = acc.add(&c.mul(&mono_eval(m, vals)));
        }
        acc
    }

    pub fn atoms(&self) -> impl Iterator<Item = AtomId> + '_ {
        self.terms.iter().flat_map(|(m, _)| m.iter().map(|&(a, _)| a))
    }

    /// Degree-one single-variable form `c·a + d` with `c` excluding zero.
    pub fn as_affine_in_one_atom(&self) -> Option<(AtomId, Interval, Interval)> {
        let mut d = Interval::point(0.0);
        let mut lin = None;
        for (m, c) in &self.terms {
            match m.as_slice() {
                [] => d = *c,
                [(a, 1)] if lin.is_none() => lin = Some((*a, *c)),
                _ => return None,
            }
        }
        let (a, c) = lin?;
        if c.contains_zero() {
            return None;
        }
        Some((a, c, d))
    }

    fn key(&self) -> Vec<(Monomial, u64, u64)> {
        self.terms.iter().map(|(m, c)| (m.clone(), c.lo.to_bits(), c.hi.to_bits())).collect()
    }
}

#[derive(Debug, Clone)]
pub enum AtomDef {
    Var(usize),
    Sin(Poly),
    Cos(Poly),
}

#[derive(Debug, Clone, Default)]
pub struct Atoms {
    pub defs: Vec<AtomDef>,
    var_ids: HashMap<usize, AtomId>,
    trig_ids: HashMap<(bool, Vec<(Monomial, u64, u64)>), AtomId>,
}

impl Atoms {
    pub fn len(&self) -> usize {
        self.defs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.defs.is_empty()
    }

    pub fn var(&mut self, v: usize) -> AtomId {
        if let Some(&a) = self.var_ids.get(&v) {
            return a;
        }
        let id = self.defs.len() as AtomId;
        self.defs.push(AtomDef::Var(v));
        self.var_ids.insert(v, id);
        id
    }

    pub fn trig(&mut self, cos: bool, arg: Poly) -> AtomId {
        let key = (cos, arg.key());
        if let Some(&a) = self.trig_ids.get(&key) {
            return a;
        }
        let id = self.defs.len() as AtomId;
        self.defs.push(if cos { AtomDef::Cos(arg) } else { AtomDef::Sin(arg) });
        self.trig_ids.insert(key, id);
        id
    }

    /// The seeds plus every atom reachable through trig arguments, in
    /// increasing id order (arguments always precede their atom).
    pub fn closure(&self, seeds: impl IntoIterator<Item = AtomId>) -> Vec<AtomId> {
        let mut seen = vec![false; self.defs.len()];
        let mut stack: Vec<AtomId> = seeds.into_iter().collect();
        while let Some(a) = stack.pop() {
            if std::mem::replace(&mut seen[a as usize], true) {
                continue;
            }
            if let AtomDef::Sin(p) | AtomDef::Cos(p) = &self.defs[a as usize] {
                stack.extend(p.atoms());
            }
        }
        (0..self.defs.len() as AtomId).filter(|&a| seen[a as usize]).collect()
    }

    pub fn vars_of(&self, closure: &[AtomId]) -> Vec<usize> {
        closure
            .iter()
            .filter_map(|&a| match self.defs[a as usize] {
                AtomDef::Var(v) => Some(v),
                _ => None,
            })
            .collect()
    }

    /// Fills `vals` for the atoms of a closure from the variable box.
    pub fn eval_into(&self, closure: &[AtomId], bx: &[Interval], vals: &mut [Interval]) {
        for &a in closure {
            vals[a as usize] = match &self.defs[a as usize] {
                AtomDef::Var(v) => bx[*v],
                AtomDef::Sin(p) => p.eval(vals).sin(),
                AtomDef::Cos(p) => p.eval(vals).cos(),
            };
        }
    }
}

/// The box became empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Empty;

fn narrower(new: &Interval, old: &Interval) -> bool {
    new.lo > old.lo || new.hi < old.hi
}

/// HC4 revise of `p ∈ target`: forward evaluation, then backward
/// projection onto each term, monomial factor and atom. `vals` must hold
/// current values for the closure of `p`; narrowed variables are written
/// back to `bx`.
pub fn revise(
    p: &Poly,
    target: Interval,
    atoms: &Atoms,
    vals: &mut [Interval],
    bx: &mut [Interval],
    depth: u32,
) -> Result<(), Empty> {
    let n = p.terms.len();
    let mons: Vec<Interval> = p.terms.iter().map(|(m, _)| mono_eval(m, vals)).collect();
    let ts: Vec<Interval> = p.terms.iter().zip(&mons).map(|((_, c), m)| c.mul(m)).collect();
    let mut suf = vec![Interval::point(0.0); n + 1];
    for k in (0..n).rev() {
        suf[k] = ts[k].add(&suf[k + 1]);
    }
    if suf[0].intersect(&target).is_empty() {
        return Err(Empty);
    }
    let mut pre = Interval::point(0.0);
    for k in 0..n {
        let (m, c) = &p.terms[k];
        let others = pre.add(&suf[k + 1]);
        pre = pre.add(&ts[k]);
        if m.is_empty() {
            continue;
        }
        let tk = target.sub(&others).intersect(&ts[k]);
        if tk.is_empty() {
            return Err(Empty);
        }
        if !narrower(&tk, &ts[k]) || c.contains_zero() {
            continue;
        }
        let mk = tk.div(c).intersect(&mons[k]);
        if mk.is_empty() {
            return Err(Empty);
        }
        for (i, &(a, e)) in m.iter().enumerate() {
            let mut rest = Interval::point(1.0);
            for (j, &(b, f)) in m.iter().enumerate() {
                if j != i {
                    rest = rest.mul(&vals[b as usize].powi(f));
                }
            }
            if rest.contains_zero() {
                continue;
            }
            let f_target = mk.div(&rest);
            let old = vals[a as usize];
            let new = Interval::powi_rev(&f_target, &old, e);
            if new.is_empty() {
                return Err(Empty);
            }
            if narrower(&new, &old) {
                narrow_atom(a, new, atoms, vals, bx, depth)?;
            }
        }
    }
    Ok(())
}

fn narrow_atom(
    a: AtomId,
    new: Interval,
    atoms: &Atoms,
    vals: &mut [Interval],
    bx: &mut [Interval],
    depth: u32,
) -> Result<(), Empty> {
    vals[a as usize] = new;
    match &atoms.defs[a as usize] {
        AtomDef::Var(v) => {
            let nb = bx[*v].intersect(&new);
            if nb.is_empty() {
                return Err(Empty);
            }
            bx[*v] = nb;
        }
        AtomDef::Sin(arg) | AtomDef::Cos(arg) if depth < 4 => {
            let cur = arg.eval(vals);
            let t = match &atoms.defs[a as usize] {
                AtomDef::Sin(_) => Interval::sin_rev(&new, &cur),
                _ => Interval::cos_rev(&new, &cur),
            };
            if t.is_empty() {
                return Err(Empty);
            }
            if narrower(&t, &cur) {
                revise(arg, t, atoms, vals, bx, depth + 1)?;
            }
        }
        _ => {}
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn x(atoms: &mut Atoms, v: usize) -> Poly {
        Poly::atom(atoms.var(v))
    }

    #[test]
    fn cancellation_is_exact() {
        let mut at = Atoms::default();
        let (a, b) = (x(&mut at, 0), x(&mut at, 1));
        let sq = a.add(&b).powi(2).unwrap();
        let expanded = a.mul(&a).unwrap().add(&a.mul(&b).unwrap().scale(&Interval::point(2.0))).add(&b.mul(&b).unwrap());
        assert!(sq.sub(&expanded).is_empty());
    }

    #[test]
    fn trig_atoms_are_shared() {
        let mut at = Atoms::default();
        let t = x(&mut at, 0).scale(&Interval::point(0.5));
        let c1 = at.trig(true, t.clone());
        let c2 = at.trig(true, t.clone());
        let s = at.trig(false, t);
        assert_eq!(c1, c2);
        assert_ne!(c1, s);
        assert_eq!(at.closure([s]), vec![0, s]);
    }

    #[test]
    fn revise_linear() {
        // x + y = 1 with x ∈ [0, 10], y ∈ [0, 0.25] gives x ∈ [0.75, 1]
        let mut at = Atoms::default();
        let p = x(&mut at, 0).add(&x(&mut at, 1)).sub(&Poly::constant(Interval::point(1.0)));
        let mut bx = vec![Interval::new(0.0, 10.0), Interval::new(0.0, 0.25)];
        let mut vals = vec![Interval::ENTIRE; at.len()];
        at.eval_into(&at.closure(p.atoms()), &bx, &mut vals);
        revise(&p, Interval::point(0.0), &at, &mut vals, &mut bx, 0).unwrap();
        assert!((bx[0].lo - 0.75).abs() < 1e-15 && (bx[0].hi - 1.0).abs() < 1e-15);
    }

    #[test]
    fn revise_through_cosine() {
        // cos(θ/2) = 1 with θ ∈ [0, π] pins θ near zero
        let mut at = Atoms::default();
        let half = x(&mut at, 0).scale(&Interval::point(0.5));
        let c = at.trig(true, half);
        let p = Poly::atom(c).sub(&Poly::constant(Interval::point(1.0)));
        let mut bx = vec![Interval::new(0.0, std::f64::consts::PI)];
        let mut vals = vec![Interval::ENTIRE; at.len()];
        at.eval_into(&at.closure(p.atoms()), &bx, &mut vals);
        revise(&p, Interval::point(0.0), &at, &mut vals, &mut bx, 0).unwrap();
        assert!(bx[0].hi < 1e-9);
    }

    #[test]
    fn revise_detects_infeasible() {
        let mut at = Atoms::default();
        let p = x(&mut at, 0).mul(&x(&mut at, 0)).unwrap().add(&Poly::constant(Interval::point(1.0)));
        let mut bx = vec![Interval::new(-3.0, 3.0)];
        let mut vals = vec![Interval::ENTIRE; at.len()];
        at.eval_into(&at.closure(p.atoms()), &bx, &mut vals);
        assert_eq!(revise(&p, Interval::point(0.0), &at, &mut vals, &mut bx, 0), Err(Empty));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        /// Products evaluated at a point enclose the product of values.
        #[test]
        fn product_encloses_point_value(ca in prop::collection::vec(-3.0f64..3.0, 3), cb in prop::collection::vec(-3.0f64..3.0, 3), px in -2.0f64..2.0, py in -2.0f64..2.0) {
            let mut at = Atoms::default();
            let (xv, yv) = (x(&mut at, 0), x(&mut at, 1));
            let mk = |c: &[f64]| Poly::constant(Interval::point(c[0]))
                .add(&xv.scale(&Interval::point(c[1])))
                .add(&yv.mul(&xv).unwrap().scale(&Interval::point(c[2])));
            let (a, b) = (mk(&ca), mk(&cb));
            let prod = a.mul(&b).unwrap();
            let vals = [Interval::point(px), Interval::point(py)];
            let want = (ca[0] + ca[1] * px + ca[2] * px * py) * (cb[0] + cb[1] * px + cb[2] * px * py);
            let got = prod.eval(&vals);
            prop_assert!(got.lo - 1e-9 <= want && want <= got.hi + 1e-9);
        }

        /// Revise never removes a solution.
        #[test]
        fn revise_keeps_solutions(px in -2.0f64..2.0, py in -2.0f64..2.0, k in 0.1f64..3.0) {
            let mut at = Atoms::default();
            let (xv, yv) = (x(&mut at, 0), x(&mut at, 1));
            let s = at.trig(false, xv.scale(&Interval::point(k)));
            let p = Poly::atom(s).mul(&yv).unwrap().add(&xv.mul(&xv).unwrap());
            let value = (k * px).sin() * py + px * px;
            let mut bx = vec![Interval::new(-2.0, 2.0), Interval::new(-2.0, 2.0)];
            let mut vals = vec![Interval::ENTIRE; at.len()];
            at.eval_into(&at.closure(p.atoms()), &bx, &mut vals);
            let target = Interval::new(value - 1e-9, value + 1e-9);
            prop_assert!(revise(&p, target, &at, &mut vals, &mut bx, 0).is_ok());
            prop_assert!(bx[0].contains(px) && bx[1].contains(py));
        }
    }
}
