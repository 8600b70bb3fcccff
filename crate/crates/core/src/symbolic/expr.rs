use std::fmt;
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use ordered_float::OrderedFloat;

/// Elementary one-argument functions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ElemFn {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
}

impl ElemFn {
    pub fn name(self) -> &'static str {
        match self {
            ElemFn::Sin => "sin",
            ElemFn::Cos => "cos",
            ElemFn::Tan => "tan",
            ElemFn::Exp => "exp",
            ElemFn::Log => "log",
            ElemFn::Sqrt => "sqrt",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => ElemFn::Sin,
            "cos" => ElemFn::Cos,
            "tan" => ElemFn::Tan,
            "exp" => ElemFn::Exp,
            "log" => ElemFn::Log,
            "sqrt" => ElemFn::Sqrt,
            _ => return None,
        })
    }
}

/// Expression node. Variant order defines the canonical sort order.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Node {
    Rational(BigRational),
    Float(OrderedFloat<f64>),
    Symbol(Arc<str>),
    /// Abstract function `name` differentiated `order` times, applied to `arg`.
    Func {
        name: Arc<str>,
        order: u32,
        arg: Expr,
    },
    Elem(ElemFn, Expr),
    Atan2(Expr, Expr),
    Pow(Expr, i64),
    Mul(Vec<Expr>),
    Add(Vec<Expr>),
}

/// Immutable, cheaply clonable symbolic scalar expression.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Expr(Arc<Node>);

impl Expr {
    pub fn from_node(node: Node) -> Self {
        Expr(Arc::new(node))
    }

    pub fn node(&self) -> &Node {
        &self.0
    }

    pub fn rational(r: BigRational) -> Self {
        Expr::from_node(Node::Rational(r))
    }

    pub fn int(v: i64) -> Self {
        Expr::rational(BigRational::from_integer(BigInt::from(v)))
    }

    pub fn frac(num: i64, den: i64) -> Self {
        Expr::rational(BigRational::new(BigInt::from(num), BigInt::from(den)))
    }

    pub fn zero() -> Self {
        Expr::int(0)
    }

    pub fn one() -> Self {
        Expr::int(1)
    }

    /// Opaque floating literal. Only evaluation looks inside it.
    pub fn float(v: f64) -> Self {
        Expr::from_node(Node::Float(OrderedFloat(v)))
    }

    pub fn sym(name: &str) -> Self {
        Expr::from_node(Node::Symbol(Arc::from(name)))
    }

    pub fn func(name: &str, order: u32, arg: Expr) -> Self {
        Expr::from_node(Node::Func {
            name: Arc::from(name),
            order,
            arg,
        })
    }

    pub fn elem(f: ElemFn, arg: Expr) -> Self {
        Expr::from_node(Node::Elem(f, arg))
    }

    pub fn sin(self) -> Self {
        Expr::elem(ElemFn::Sin, self)
    }
    pub fn cos(self) -> Self {
        Expr::elem(ElemFn::Cos, self)
    }
    pub fn tan(self) -> Self {
        Expr::elem(ElemFn::Tan, self)
    }
    pub fn exp(self) -> Self {
        Expr::elem(ElemFn::Exp, self)
    }
    pub fn log(self) -> Self {
        Expr::elem(ElemFn::Log, self)
    }
    pub fn sqrt(self) -> Self {
        Expr::elem(ElemFn::Sqrt, self)
    }

    pub fn atan2(y: Expr, x: Expr) -> Self {
        Expr::from_node(Node::Atan2(y, x))
    }

    pub fn pow(self, n: i64) -> Self {
        Expr::from_node(Node::Pow(self, n))
    }

    pub fn add_all(terms: Vec<Expr>) -> Self {
        match terms.len() {
            0 => Expr::zero(),
            1 => terms.into_iter().next().unwrap(),
            _ => Expr::from_node(Node::Add(terms)),
        }
    }

    pub fn mul_all(factors: Vec<Expr>) -> Self {
        match factors.len() {
            0 => Expr::one(),
            1 => factors.into_iter().next().unwrap(),
            _ => Expr::from_node(Node::Mul(factors)),
        }
    }

    pub fn as_rational(&self) -> Option<&BigRational> {
        match self.node() {
            Node::Rational(r) => Some(r),
            _ => None,
        }
    }

    /// True for the exact constant zero.
    pub fn is_zero(&self) -> bool {
        self.as_rational().is_some_and(|r| r.is_zero())
    }

    pub fn is_one(&self) -> bool {
        self.as_rational().is_some_and(|r| r.is_one())
    }

    pub fn as_symbol(&self) -> Option<&str> {
        match self.node() {
            Node::Symbol(s) => Some(s),
            _ => None,
        }
    }

    /// Number of nodes in the tree.
    pub fn size(&self) -> usize {
        let mut n = 1;
        self.for_each_child(|c| n += c.size());
        n
    }

    pub fn for_each_child(&self, mut f: impl FnMut(&Expr)) {
        match self.node() {
            Node::Rational(_) | Node::Float(_) | Node::Symbol(_) => {}
            Node::Func { arg, .. } => f(arg),
            Node::Elem(_, a) => f(a),
            Node::Atan2(y, x) => {
                f(y);
                f(x);
            }
            Node::Pow(b, _) => f(b),
            Node::Mul(v) | Node::Add(v) => v.iter().for_each(f),
        }
    }

    /// Rebuild with each child mapped through `f`.
    pub fn map_children(&self, mut f: impl FnMut(&Expr) -> Expr) -> Expr {
        match self.node() {
            Node::Rational(_) | Node::Float(_) | Node::Symbol(_) => self.clone(),
            Node::Func { name, order, arg } => Expr::from_node(Node::Func {
                name: name.clone(),
                order: *order,
                arg: f(arg),
            }),
            Node::Elem(g, a) => Expr::elem(*g, f(a)),
            Node::Atan2(y, x) => Expr::atan2(f(y), f(x)),
            Node::Pow(b, n) => Expr::from_node(Node::Pow(f(b), *n)),
            Node::Mul(v) => Expr::from_node(Node::Mul(v.iter().map(f).collect())),
            Node::Add(v) => Expr::from_node(Node::Add(v.iter().map(f).collect())),
        }
    }

    /// Free symbols (not function names), sorted and deduplicated.
    pub fn symbols(&self) -> Vec<Arc<str>> {
        let mut out = Vec::new();
        self.collect_symbols(&mut out);
        out.sort();
        out.dedup();
        out
    }

    fn collect_symbols(&self, out: &mut Vec<Arc<str>>) {
        if let Node::Symbol(s) = self.node() {
            out.push(s.clone());
        }
        self.for_each_child(|c| c.collect_symbols(out));
    }

    /// Abstract function names with the highest derivative order used.
    pub fn functions(&self) -> Vec<(Arc<str>, u32)> {
        let mut out: Vec<(Arc<str>, u32)> = Vec::new();
        self.collect_functions(&mut out);
        out.sort();
        let mut merged: Vec<(Arc<str>, u32)> = Vec::new();
        for (n, o) in out {
            match merged.last_mut() {
                Some((m, mo)) if *m == n => *mo = (*mo).max(o),
                _ => merged.push((n, o)),
            }
        }
        merged
    }

    fn collect_functions(&self, out: &mut Vec<(Arc<str>, u32)>) {
        if let Node::Func { name, order, .. } = self.node() {
            out.push((name.clone(), *order));
        }
        self.for_each_child(|c| c.collect_functions(out));
    }

    /// Replace symbols by expressions (no normalization).
    pub fn substitute(&self, map: &dyn Fn(&str) -> Option<Expr>) -> Expr {
        if let Node::Symbol(s) = self.node() {
            if let Some(e) = map(s) {
                return e;
            }
            return self.clone();
        }
        self.map_children(|c| c.substitute(map))
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl From<i64> for Expr {
    fn from(v: i64) -> Self {
        Expr::int(v)
    }
}

// Unnormalized arithmetic. Call `normalize` on the result.
impl std::ops::Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        Expr::from_node(Node::Add(vec![self, rhs]))
    }
}

impl std::ops::Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        Expr::from_node(Node::Add(vec![self, -rhs]))
    }
}

impl std::ops::Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        Expr::from_node(Node::Mul(vec![self, rhs]))
    }
}

impl std::ops::Div for Expr {
    type Output = Expr;
    fn div(self, rhs: Expr) -> Expr {
        Expr::from_node(Node::Mul(vec![self, rhs.pow(-1)]))
    }
}

impl std::ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::from_node(Node::Mul(vec![Expr::int(-1), self]))
    }
}

// ---------------------------------------------------------------------------
// Printing. The output is valid problem-file expression syntax.

const PREC_ADD: u8 = 1;
const PREC_MUL: u8 = 2;
const PREC_UNARY: u8 = 3;
const PREC_POW: u8 = 4;
const PREC_ATOM: u8 = 5;

fn precedence(e: &Expr) -> u8 {
    match e.node() {
        Node::Add(_) => PREC_ADD,
        Node::Mul(_) => PREC_MUL,
        Node::Rational(r) if !r.is_integer() => PREC_MUL,
        Node::Rational(r) if r.is_negative() => PREC_UNARY,
        Node::Float(v) if v.0 < 0.0 => PREC_UNARY,
        Node::Pow(..) => PREC_POW,
        _ => PREC_ATOM,
    }
}

fn write_prec(f: &mut fmt::Formatter<'_>, e: &Expr, min: u8) -> fmt::Result {
    if precedence(e) < min {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

fn write_rational(f: &mut fmt::Formatter<'_>, r: &BigRational) -> fmt::Result {
    if r.is_integer() {
        write!(f, "{}", r.numer())
    } else {
        write!(f, "{}/{}", r.numer(), r.denom())
    }
}

/// Split a product into (sign-free coefficient, numerator factors, denominator factors, negative?).
fn split_product(factors: &[Expr]) -> (BigRational, Vec<Expr>, Vec<Expr>, bool) {
    let mut coef = BigRational::one();
    let mut num = Vec::new();
    let mut den = Vec::new();
    for fct in factors {
        match fct.node() {
            Node::Rational(r) => coef *= r,
            Node::Pow(b, n) if *n < 0 => {
                if *n == -1 {
                    den.push(b.clone());
                } else {
                    den.push(Expr::from_node(Node::Pow(b.clone(), -n)));
                }
            }
            _ => num.push(fct.clone()),
        }
    }
    let neg = coef.is_negative();
    (coef.abs(), num, den, neg)
}

fn write_product(
    f: &mut fmt::Formatter<'_>,
    coef: &BigRational,
    num: &[Expr],
    den: &[Expr],
) -> fmt::Result {
    let numer = coef.numer();
    let denom = coef.denom();
    let mut first = true;
    if !numer.is_one() || num.is_empty() {
        write!(f, "{numer}")?;
        first = false;
    }
    for x in num {
        if !first {
            write!(f, "*")?;
        }
        write_prec(f, x, PREC_POW)?;
        first = false;
    }
    let den_count = den.len() + usize::from(!denom.is_one());
    if den_count == 0 {
        return Ok(());
    }
    write!(f, "/")?;
    if den_count > 1 {
        write!(f, "(")?;
    }
    let mut first = true;
    if !denom.is_one() {
        write!(f, "{denom}")?;
        first = false;
    }
    for x in den {
        if !first {
            write!(f, "*")?;
        }
        write_prec(f, x, PREC_POW)?;
        first = false;
    }
    if den_count > 1 {
        write!(f, ")")?;
    }
    Ok(())
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.node() {
            Node::Rational(r) => write_rational(f, r),
            Node::Float(v) => write!(f, "{:?}", v.0),
            Node::Symbol(s) => write!(f, "{s}"),
            Node::Func { name, order, arg } => {
                write!(f, "{name}")?;
                for _ in 0..*order {
                    write!(f, "'")?;
                }
                write!(f, "({arg})")
            }
            Node::Elem(g, a) => write!(f, "{}({a})", g.name()),
            Node::Atan2(y, x) => write!(f, "atan2({y}, {x})"),
            Node::Pow(b, n) => {
                write_prec(f, b, PREC_ATOM)?;
                if *n < 0 {
                    write!(f, "^({n})")
                } else {
                    write!(f, "^{n}")
                }
            }
            Node::Mul(fs) => {
                let (coef, num, den, neg) = split_product(fs);
                if neg {
                    write!(f, "-")?;
                }
                write_product(f, &coef, &num, &den)
            }
            Node::Add(ts) => {
                for (i, t) in ts.iter().enumerate() {
                    let (neg, body) = negated_view(t);
                    match (i, neg) {
                        (0, true) => write!(f, "-")?,
                        (0, false) => {}
                        (_, true) => write!(f, " - ")?,
                        (_, false) => write!(f, " + ")?,
                    }
                    match body {
                        Some((coef, num, den)) => write_product(f, &coef, &num, &den)?,
                        None => write_prec(f, t, PREC_MUL)?,
                    }
                }
                Ok(())
            }
        }
    }
}

type ProductView = (BigRational, Vec<Expr>, Vec<Expr>);

/// For sum terms: whether the term carries a leading minus, and a product
/// view of its magnitude when it is a product or a constant.
fn negated_view(t: &Expr) -> (bool, Option<ProductView>) {
    match t.node() {
        Node::Mul(fs) => {
            let (coef, num, den, neg) = split_product(fs);
            (neg, Some((coef, num, den)))
        }
        Node::Rational(r) => (r.is_negative(), Some((r.abs(), Vec::new(), Vec::new()))),
        _ => (false, None),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prints_products_with_denominators() {
        let e = Expr::from_node(Node::Mul(vec![
            Expr::frac(-1, 2),
            Expr::func("h", 2, Expr::sym("u")),
            Expr::func("h", 0, Expr::sym("u")).pow(-1),
        ]));
        assert_eq!(e.to_string(), "-h''(u)/(2*h(u))");
    }

    #[test]
    fn prints_sums_with_minus() {
        let e = Expr::from_node(Node::Add(vec![
            Expr::sym("x"),
            Expr::from_node(Node::Mul(vec![Expr::int(-3), Expr::sym("y")])),
            Expr::int(-1),
        ]));
        assert_eq!(e.to_string(), "x - 3*y - 1");
    }

    #[test]
    fn collects_symbols_and_functions() {
        let e = Expr::func("h", 1, Expr::sym("u")) * Expr::sym("t").cos()
            + Expr::func("h", 3, Expr::sym("u"));
        assert_eq!(
            e.symbols()
                .iter()
                .map(|s| s.to_string())
                .collect::<Vec<_>>(),
            vec!["t", "u"]
        );
        assert_eq!(e.functions(), vec![(Arc::from("h"), 3)]);
    }
}
