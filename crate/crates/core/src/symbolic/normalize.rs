//! Canonical form for expressions.
//!
//! A normalized expression is a Laurent polynomial over the rationals in
//! "atoms": symbols, floating literals, abstract function applications,
//! elementary functions of normalized arguments, and sums raised to negative
//! powers. Products of sums are expanded, like terms collected, and a few
//! identities applied (`sin^2 + cos^2 = 1`, `exp(a)exp(b) = exp(a+b)`,
//! `sqrt(a)^2 = a`, parity of `sin`/`cos`/`tan`, `exp`/`log` inverses).

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use super::expr::{ElemFn, Expr, Node};

/// Sorted atom/exponent list, no zero exponents.
pub(crate) type Monomial = Vec<(Expr, i64)>;

#[derive(Clone, Debug, Default, PartialEq)]
pub(crate) struct Poly {
    pub terms: BTreeMap<Monomial, BigRational>,
}

impl Poly {
    fn zero() -> Self {
        Poly::default()
    }

    fn constant(c: BigRational) -> Self {
        let mut p = Poly::zero();
        p.add_term(Vec::new(), c);
        p
    }

    fn atom(a: Expr, e: i64) -> Self {
        let mut p = Poly::zero();
        p.add_term(vec![(a, e)], BigRational::one());
        p
    }

    fn add_term(&mut self, m: Monomial, c: BigRational) {
        use std::collections::btree_map::Entry;
        if c.is_zero() {
            return;
        }
        match self.terms.entry(m) {
            Entry::Vacant(v) => {
                v.insert(c);
            }
            Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if o.get().is_zero() {
                    o.remove();
                }
            }
        }
    }

    fn add(&mut self, other: Poly) {
        for (m, c) in other.terms {
            self.add_term(m, c);
        }
    }

    fn scale(&self, c: &BigRational) -> Poly {
        let mut p = Poly::zero();
        for (m, v) in &self.terms {
            p.add_term(m.clone(), v * c);
        }
        p
    }

    fn mul(&self, other: &Poly) -> Poly {
        let mut p = Poly::zero();
        for (m1, c1) in &self.terms {
            for (m2, c2) in &other.terms {
                p.add_term(mono_mul(m1, m2), c1 * c2);
            }
        }
        p
    }

    fn pow(&self, n: u32) -> Poly {
        let mut acc = Poly::constant(BigRational::one());
        for _ in 0..n {
            acc = acc.mul(self);
        }
        acc
    }

    fn as_constant(&self) -> Option<BigRational> {
        match self.terms.len() {
            0 => Some(BigRational::zero()),
            1 => {
                let (m, c) = self.terms.iter().next().unwrap();
                m.is_empty().then(|| c.clone())
            }
            _ => None,
        }
    }

    fn single_term(&self) -> Option<(&Monomial, &BigRational)> {
        if self.terms.len() == 1 {
            self.terms.iter().next()
        } else {
            None
        }
    }
}

fn mono_mul(a: &Monomial, b: &Monomial) -> Monomial {
    let mut map: BTreeMap<Expr, i64> = BTreeMap::new();
    for (x, e) in a.iter().chain(b.iter()) {
        *map.entry(x.clone()).or_insert(0) += e;
    }
    map.into_iter().filter(|(_, e)| *e != 0).collect()
}

fn mono_pow(a: &Monomial, n: i64) -> Monomial {
    if n == 0 {
        return Vec::new();
    }
    a.iter().map(|(x, e)| (x.clone(), e * n)).collect()
}

/// Normalize with the built-in rules only.
pub fn normalize(e: &Expr) -> Expr {
    from_poly(norm_poly(e))
}

/// Canonical polynomial of an arbitrary expression.
fn norm_poly(e: &Expr) -> Poly {
    let p = raw_poly(e);
    finish(p)
}

/// Polynomial of `e` with children normalized, before the monomial rules.
fn raw_poly(e: &Expr) -> Poly {
    match e.node() {
        Node::Rational(r) => Poly::constant(r.clone()),
        Node::Float(_) | Node::Symbol(_) => Poly::atom(e.clone(), 1),
        Node::Func { name, order, arg } => Poly::atom(
            Expr::from_node(Node::Func {
                name: name.clone(),
                order: *order,
                arg: normalize(arg),
            }),
            1,
        ),
        Node::Elem(f, a) => elem_poly(*f, normalize(a)),
        Node::Atan2(y, x) => Poly::atom(Expr::atan2(normalize(y), normalize(x)), 1),
        Node::Add(ts) => {
            let mut p = Poly::zero();
            for t in ts {
                p.add(norm_poly(t));
            }
            p
        }
        Node::Mul(_) | Node::Pow(..) => product_poly(e),
    }
}

/// Base of a product: either a plain atom or a primitive sum (kept with its polynomial).
struct Factors {
    coef: BigRational,
    bases: BTreeMap<Expr, (i64, Option<Poly>)>,
}

impl Factors {
    fn push(&mut self, base: Expr, exp: i64, poly: Option<Poly>) {
        let entry = self.bases.entry(base).or_insert((0, poly));
        entry.0 += exp;
    }

    /// Returns false when the product is exactly zero.
    fn gather(&mut self, e: &Expr, exp: i64) -> bool {
        match e.node() {
            Node::Mul(fs) => fs.iter().all(|f| self.gather(f, exp)),
            Node::Pow(b, n) => self.gather(b, exp * n),
            _ => {
                let p = norm_poly(e);
                if let Some(c) = p.as_constant() {
                    if c.is_zero() {
                        if exp > 0 {
                            return false;
                        }
                        self.push(Expr::zero(), exp, None);
                    } else {
                        self.coef *= rational_pow(&c, exp);
                    }
                    return true;
                }
                if let Some((m, c)) = p.single_term() {
                    self.coef *= rational_pow(c, exp);
                    for (a, k) in m {
                        self.push(a.clone(), k * exp, None);
                    }
                    return true;
                }
                let (content, common, prim) = extract_content(&p);
                self.coef *= rational_pow(&content, exp);
                for (a, k) in common {
                    self.push(a, k * exp, None);
                }
                self.push(from_poly(prim.clone()), exp, Some(prim));
                true
            }
        }
    }
}

fn product_poly(e: &Expr) -> Poly {
    let mut fs = Factors {
        coef: BigRational::one(),
        bases: BTreeMap::new(),
    };
    if !fs.gather(e, 1) {
        return Poly::zero();
    }
    let mut mono: Monomial = Vec::new();
    let mut p = Poly::constant(BigRational::one());
    for (base, (exp, poly)) in fs.bases {
        if exp == 0 {
            continue;
        }
        match poly {
            Some(q) if exp > 0 => p = p.mul(&q.pow(exp as u32)),
            _ => mono.push((base, exp)),
        }
    }
    let mut m = Poly::zero();
    m.add_term(mono, fs.coef);
    p.mul(&m)
}

/// Integer power of a canonical polynomial.
fn poly_pow(base: Poly, n: i64) -> Poly {
    if n == 0 {
        return Poly::constant(BigRational::one());
    }
    if let Some(c) = base.as_constant() {
        if c.is_zero() {
            if n > 0 {
                return Poly::zero();
            }
            return Poly::atom(Expr::zero(), n);
        }
        return Poly::constant(rational_pow(&c, n));
    }
    if let Some((m, c)) = base.single_term() {
        let mut p = Poly::zero();
        p.add_term(mono_pow(m, n), rational_pow(c, n));
        return p;
    }
    if n > 0 {
        return base.pow(n as u32);
    }
    // Negative power of a genuine sum: pull out content and common monomial.
    let (content, common, primitive) = extract_content(&base);
    let mut p = Poly::zero();
    let mut m = mono_pow(&common, n);
    m = mono_mul(&m, &vec![(from_poly(primitive), n)]);
    p.add_term(m, rational_pow(&content, n));
    p
}

fn rational_pow(c: &BigRational, n: i64) -> BigRational {
    let mut acc = BigRational::one();
    let base = if n < 0 { c.recip() } else { c.clone() };
    for _ in 0..n.unsigned_abs() {
        acc *= &base;
    }
    acc
}

/// Write `p = content * common * primitive` where `primitive` has leading
/// coefficient 1 and no monomial factor shared by all terms.
fn extract_content(p: &Poly) -> (BigRational, Monomial, Poly) {
    let mut common: BTreeMap<Expr, i64> = BTreeMap::new();
    let mut first = true;
    for m in p.terms.keys() {
        let here: BTreeMap<Expr, i64> = m.iter().cloned().collect();
        if first {
            common = here;
            first = false;
            continue;
        }
        common = common
            .into_iter()
            .filter_map(|(a, e)| {
                let other = *here.get(&a)?;
                if e > 0 && other > 0 {
                    Some((a, e.min(other)))
                } else if e < 0 && other < 0 {
                    Some((a, e.max(other)))
                } else {
                    None
                }
            })
            .collect();
    }
    let common: Monomial = common.into_iter().collect();
    let inv_common = mono_pow(&common, -1);
    let mut divided = Poly::zero();
    for (m, c) in &p.terms {
        divided.add_term(mono_mul(m, &inv_common), c.clone());
    }
    // The leading coefficient is read after dividing out the common
    // monomial, since that division can reorder the terms.
    let lead = divided
        .terms
        .values()
        .next()
        .cloned()
        .unwrap_or_else(BigRational::one);
    let prim = divided.scale(&lead.recip());
    (lead, common, prim)
}

/// If `e` (normalized) has a negative leading coefficient, its negation.
pub(crate) fn negated_if_negative(e: &Expr) -> Option<Expr> {
    let neg = match e.node() {
        Node::Rational(r) => r.is_negative(),
        Node::Mul(fs) => fs
            .first()
            .and_then(|f| f.as_rational())
            .is_some_and(|r| r.is_negative()),
        Node::Add(ts) => ts.first().is_some_and(|t| negated_if_negative(t).is_some()),
        _ => false,
    };
    neg.then(|| normalize(&-e.clone()))
}

fn elem_poly(f: ElemFn, a: Expr) -> Poly {
    use ElemFn::*;
    if let Some(r) = a.as_rational() {
        if r.is_zero() {
            match f {
                Sin | Tan | Sqrt => return Poly::zero(),
                Cos | Exp => return Poly::constant(BigRational::one()),
                Log => {}
            }
        }
        if r.is_one() && f == Log {
            return Poly::zero();
        }
        if f == Sqrt && !r.is_negative() {
            if let (Some(n), Some(d)) = (exact_sqrt(r.numer()), exact_sqrt(r.denom())) {
                return Poly::constant(BigRational::new(n, d));
            }
        }
    }
    match (f, a.node()) {
        (Exp, Node::Elem(Log, inner)) => return norm_poly(inner),
        (Log, Node::Elem(Exp, inner)) => return norm_poly(inner),
        _ => {}
    }
    if matches!(f, Sin | Cos | Tan) {
        if let Some(pos) = negated_if_negative(&a) {
            let p = Poly::atom(Expr::elem(f, pos), 1);
            return if f == Cos {
                p
            } else {
                p.scale(&-BigRational::one())
            };
        }
    }
    Poly::atom(Expr::elem(f, a), 1)
}

fn exact_sqrt(n: &BigInt) -> Option<BigInt> {
    if n.is_negative() {
        return None;
    }
    let r = n.sqrt();
    (&r * &r == *n).then_some(r)
}

/// Apply monomial-level identities until nothing changes.
fn finish(mut p: Poly) -> Poly {
    for _ in 0..64 {
        let mut changed = false;
        let mut next = Poly::zero();
        for (m, c) in std::mem::take(&mut p.terms) {
            match rewrite_monomial(&m) {
                Some(q) => {
                    changed = true;
                    next.add(q.scale(&c));
                }
                None => next.add_term(m, c),
            }
        }
        p = next;
        if pythagoras(&mut p) {
            changed = true;
        }
        if !changed {
            break;
        }
    }
    p
}

/// Returns the replacement polynomial for a monomial that is not canonical.
fn rewrite_monomial(m: &Monomial) -> Option<Poly> {
    // exp atoms merge into one exp(sum) with exponent 1.
    let exps: Vec<&(Expr, i64)> = m
        .iter()
        .filter(|(a, _)| matches!(a.node(), Node::Elem(ElemFn::Exp, _)))
        .collect();
    if exps.len() > 1 || exps.first().is_some_and(|(_, e)| *e != 1) {
        let mut arg_terms = Vec::new();
        let mut rest = Poly::constant(BigRational::one());
        for (a, e) in m {
            match a.node() {
                Node::Elem(ElemFn::Exp, inner) => {
                    arg_terms.push(Expr::mul_all(vec![Expr::int(*e), inner.clone()]))
                }
                _ => rest = rest.mul(&Poly::atom(a.clone(), *e)),
            }
        }
        let arg = normalize(&Expr::add_all(arg_terms));
        return Some(rest.mul(&elem_poly(ElemFn::Exp, arg)));
    }
    // sqrt(a)^e with |e| >= 2.
    if let Some(pos) = m
        .iter()
        .position(|(a, e)| matches!(a.node(), Node::Elem(ElemFn::Sqrt, _)) && e.abs() >= 2)
    {
        let (a, e) = &m[pos];
        let Node::Elem(_, inner) = a.node() else {
            unreachable!()
        };
        let (q, r) = e.div_mod_floor(&2);
        let mut rest: Monomial = m.clone();
        rest.remove(pos);
        if r != 0 {
            rest = mono_mul(&rest, &vec![(a.clone(), r)]);
        }
        let mut base = Poly::zero();
        base.add_term(rest, BigRational::one());
        return Some(base.mul(&poly_pow(norm_poly(inner), q)));
    }
    None
}

/// `c*R*sin(a)^p*cos(a)^q + c*R*sin(a)^(p-2)*cos(a)^(q+2) -> c*R*sin(a)^(p-2)*cos(a)^q`.
fn pythagoras(p: &mut Poly) -> bool {
    let mut changed = false;
    loop {
        let mut hit = None;
        'outer: for (m, c) in &p.terms {
            for (atom, e) in m {
                let Node::Elem(ElemFn::Sin, arg) = atom.node() else {
                    continue;
                };
                if *e < 2 {
                    continue;
                }
                let cos = Expr::elem(ElemFn::Cos, arg.clone());
                let partner = mono_mul(m, &vec![(atom.clone(), -2), (cos.clone(), 2)]);
                if p.terms.get(&partner) == Some(c) {
                    let reduced = mono_mul(m, &vec![(atom.clone(), -2)]);
                    hit = Some((m.clone(), partner, reduced, c.clone()));
                    break 'outer;
                }
            }
        }
        match hit {
            Some((m, partner, reduced, c)) => {
                p.terms.remove(&m);
                p.terms.remove(&partner);
                p.add_term(reduced, c);
                changed = true;
            }
            None => return changed,
        }
    }
}

/// Build the canonical expression tree from a canonical polynomial.
fn from_poly(p: Poly) -> Expr {
    let mut terms = Vec::with_capacity(p.terms.len());
    for (m, c) in p.terms {
        let mut factors = Vec::with_capacity(m.len() + 1);
        if !c.is_one() || m.is_empty() {
            factors.push(Expr::rational(c));
        }
        for (a, e) in m {
            factors.push(if e == 1 {
                a
            } else {
                Expr::from_node(Node::Pow(a, e))
            });
        }
        terms.push(Expr::mul_all(factors));
    }
    Expr::add_all(terms)
}

/// Exact rational value of a normalized constant.
pub fn constant_value(e: &Expr) -> Option<f64> {
    e.as_rational().and_then(|r| r.to_f64())
}

/// Canonical polynomial access for pattern matching.
pub(crate) fn factors_of(e: &Expr) -> (BigRational, Monomial) {
    match e.node() {
        Node::Rational(r) => (r.clone(), Vec::new()),
        Node::Mul(fs) => {
            let mut c = BigRational::one();
            let mut m = Vec::new();
            for f in fs {
                match f.node() {
                    Node::Rational(r) => c *= r,
                    Node::Pow(b, n) => m.push((b.clone(), *n)),
                    _ => m.push((f.clone(), 1)),
                }
            }
            (c, m)
        }
        Node::Pow(b, n) => (BigRational::one(), vec![(b.clone(), *n)]),
        _ => (BigRational::one(), vec![(e.clone(), 1)]),
    }
}

/// Rebuild a normalized product from a coefficient and monomial.
pub(crate) fn product_of(c: BigRational, m: Monomial) -> Expr {
    let mut p = Poly::zero();
    p.add_term(m, c);
    from_poly(finish(p))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x() -> Expr {
        Expr::sym("x")
    }
    fn y() -> Expr {
        Expr::sym("y")
    }
    fn t() -> Expr {
        Expr::sym("t")
    }

    #[test]
    fn additive_identity() {
        assert_eq!(normalize(&(x() + Expr::zero())), x());
    }

    #[test]
    fn pythagorean_identity() {
        let e = t().sin().pow(2) + t().cos().pow(2);
        assert_eq!(normalize(&e), Expr::one());
        let h = Expr::func("h", 0, Expr::sym("u"));
        let e = h.clone() * t().sin().pow(2) + h.clone() * t().cos().pow(2);
        assert_eq!(normalize(&e), h);
    }

    #[test]
    fn collects_and_cancels() {
        let e = (x() + y()) * (x() - y()) - x().pow(2) + y().pow(2);
        assert_eq!(normalize(&e), Expr::zero());
        let e = x() / x();
        assert_eq!(normalize(&e), Expr::one());
    }

    #[test]
    fn exp_products_merge() {
        let e = x().exp() * (-x()).exp();
        assert_eq!(normalize(&e), Expr::one());
        let e = x().exp().pow(2);
        assert_eq!(normalize(&e), normalize(&(Expr::int(2) * x()).exp()));
    }

    #[test]
    fn sqrt_squares() {
        let e = (x() + Expr::one()).sqrt().pow(2);
        assert_eq!(normalize(&e), normalize(&(x() + Expr::one())));
        assert_eq!(normalize(&Expr::frac(9, 4).sqrt()), Expr::frac(3, 2));
    }

    #[test]
    fn parity_of_trig() {
        assert_eq!(normalize(&(-x()).sin()), normalize(&-x().sin()));
        assert_eq!(normalize(&(-x()).cos()), x().cos());
        assert_eq!(normalize(&(y() - x()).cos()), normalize(&(x() - y()).cos()));
    }

    #[test]
    fn denominators_are_primitive() {
        let e = Expr::one() / (Expr::int(2) * x() + Expr::int(2) * y());
        let f = Expr::frac(1, 2) / (x() + y());
        assert_eq!(normalize(&e), normalize(&f));
        let e = (x() + y()) / (x() + y());
        assert_eq!(normalize(&e), Expr::one());
    }

    #[test]
    fn idempotent_on_samples() {
        let h = Expr::func("h", 0, Expr::sym("u"));
        let samples = vec![
            (h.clone() * t().cos() + x()).pow(-2) * (x() + Expr::frac(1, 3)).pow(3),
            (x() - y()).sin() * (t() + x()).exp() / (Expr::int(2) * x() * y() + y()),
            (x().sqrt() + y()).pow(2) - (x() * y()).log(),
        ];
        for e in samples {
            let n1 = normalize(&e);
            assert_eq!(normalize(&n1), n1, "not idempotent for {e}");
        }
    }
}
