use super::expr::{ElemFn, Expr, Node};
use super::normalize::normalize;

impl Expr {
    /// Partial derivative with respect to the symbol `var`, normalized.
    ///
    /// Abstract functions follow the chain rule: `h^(r)(g)` becomes
    /// `h^(r+1)(g) * g'`.
    pub fn diff(&self, var: &str) -> Expr {
        normalize(&raw_diff(self, var))
    }
}

fn raw_diff(e: &Expr, var: &str) -> Expr {
    match e.node() {
        Node::Rational(_) | Node::Float(_) => Expr::zero(),
        Node::Symbol(s) => {
            if &**s == var {
                Expr::one()
            } else {
                Expr::zero()
            }
        }
        Node::Func { name, order, arg } => {
            let da = raw_diff(arg, var);
            if is_structural_zero(&da) {
                return Expr::zero();
            }
            Expr::from_node(Node::Func {
                name: name.clone(),
                order: order + 1,
                arg: arg.clone(),
            }) * da
        }
        Node::Elem(f, a) => {
            let da = raw_diff(a, var);
            if is_structural_zero(&da) {
                return Expr::zero();
            }
            let outer = match f {
                ElemFn::Sin => a.clone().cos(),
                ElemFn::Cos => -a.clone().sin(),
                ElemFn::Tan => Expr::one() + a.clone().tan().pow(2),
                ElemFn::Exp => e.clone(),
                ElemFn::Log => a.clone().pow(-1),
                ElemFn::Sqrt => Expr::frac(1, 2) * e.clone().pow(-1),
            };
            outer * da
        }
        Node::Atan2(y, x) => {
            let dy = raw_diff(y, var);
            let dx = raw_diff(x, var);
            let den = x.clone().pow(2) + y.clone().pow(2);
            (x.clone() * dy - y.clone() * dx) * den.pow(-1)
        }
        Node::Pow(b, n) => {
            let db = raw_diff(b, var);
            if is_structural_zero(&db) {
                return Expr::zero();
            }
            Expr::int(*n) * b.clone().pow(n - 1) * db
        }
        Node::Add(ts) => Expr::add_all(ts.iter().map(|t| raw_diff(t, var)).collect()),
        Node::Mul(fs) => {
            let mut terms = Vec::new();
            for (i, f) in fs.iter().enumerate() {
                let df = raw_diff(f, var);
                if is_structural_zero(&df) {
                    continue;
                }
                let mut prod: Vec<Expr> = fs.clone();
                prod[i] = df;
                terms.push(Expr::mul_all(prod));
            }
            Expr::add_all(terms)
        }
    }
}

fn is_structural_zero(e: &Expr) -> bool {
    match e.node() {
        Node::Rational(_) => e.is_zero(),
        Node::Add(ts) => ts.iter().all(is_structural_zero),
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_and_chain_rule() {
        let h = Expr::func("h", 0, Expr::sym("u"));
        let e = h * Expr::sym("t").cos();
        let expected = normalize(&(Expr::func("h", 1, Expr::sym("u")) * Expr::sym("t").cos()));
        assert_eq!(e.diff("u"), expected);
    }

    #[test]
    fn simple_monomial() {
        let e = Expr::sym("x") * Expr::sym("y");
        assert_eq!(e.diff("x"), Expr::sym("y"));
        assert_eq!(e.diff("z"), Expr::zero());
    }

    #[test]
    fn nested_function_argument() {
        // d/dx h(x^2) = 2x h'(x^2)
        let e = Expr::func("h", 0, Expr::sym("x").pow(2));
        let expected =
            normalize(&(Expr::int(2) * Expr::sym("x") * Expr::func("h", 1, Expr::sym("x").pow(2))));
        assert_eq!(e.diff("x"), expected);
    }
}
