//! User-declared rewrite rules such as `J'(?k)*H(?k) -> -?k - J(?k)^2`.
//!
//! Symbols whose name starts with `?` are pattern variables. The left side
//! must normalize to a product of atoms (an optional rational coefficient
//! times atoms raised to integer powers); it matches any product containing
//! those factors, at any position in the tree.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use super::expr::{Expr, Node};
use super::normalize::{factors_of, normalize, product_of, Monomial};

/// Upper bound on full rewrite passes before reporting nontermination.
pub const MAX_REWRITE_PASSES: usize = 32;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RewriteError {
    #[error("rule left side `{0}` is not a product of atoms")]
    BadPattern(String),
    #[error("rule right side uses pattern variable `{var}` not bound by `{lhs}`")]
    UnboundPatternVariable { var: String, lhs: String },
    #[error("rewriting did not terminate within {passes} passes; last rule applied: `{rule}`")]
    NonTermination { rule: String, passes: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct RewriteRule {
    lhs: Expr,
    rhs: Expr,
}

fn is_pattern_var(s: &str) -> bool {
    s.starts_with('?')
}

impl RewriteRule {
    pub fn new(lhs: &Expr, rhs: &Expr) -> Result<Self, RewriteError> {
        let lhs = normalize(lhs);
        let rhs = normalize(rhs);
        let (_, m) = factors_of(&lhs);
        if m.is_empty() || matches!(lhs.node(), Node::Add(_)) {
            return Err(RewriteError::BadPattern(lhs.to_string()));
        }
        let bound = lhs.symbols();
        for v in rhs.symbols() {
            if is_pattern_var(&v) && !bound.contains(&v) {
                return Err(RewriteError::UnboundPatternVariable {
                    var: v.to_string(),
                    lhs: lhs.to_string(),
                });
            }
        }
        Ok(RewriteRule { lhs, rhs })
    }

    pub fn lhs(&self) -> &Expr {
        &self.lhs
    }

    pub fn rhs(&self) -> &Expr {
        &self.rhs
    }

    /// Try to rewrite the product `e` itself (not its children).
    fn apply_at(&self, e: &Expr) -> Option<Expr> {
        let (pc, pm) = factors_of(&self.lhs);
        let (c, m) = factors_of(e);
        if m.is_empty() {
            return None;
        }
        let mut used = vec![0i64; m.len()];
        let mut binds = Vec::new();
        if !match_factors(&pm, 0, &m, &mut used, &mut binds) {
            return None;
        }
        let rest: Monomial = m
            .iter()
            .zip(&used)
            .map(|((a, e), u)| (a.clone(), e - u))
            .filter(|(_, e)| *e != 0)
            .collect();
        let rhs = self.rhs.substitute(&|s: &str| {
            binds
                .iter()
                .find(|(n, _)| &**n == s)
                .map(|(_, v): &(Arc<str>, Expr)| v.clone())
        });
        Some(normalize(&(product_of(c / pc, rest) * rhs)))
    }
}

impl fmt::Display for RewriteRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} -> {}", self.lhs, self.rhs)
    }
}

fn match_factors(
    pat: &[(Expr, i64)],
    i: usize,
    m: &Monomial,
    used: &mut Vec<i64>,
    binds: &mut Vec<(Arc<str>, Expr)>,
) -> bool {
    if i == pat.len() {
        return true;
    }
    let (pa, pe) = &pat[i];
    for j in 0..m.len() {
        let (a, e) = &m[j];
        let avail = e - used[j];
        if avail.signum() != pe.signum() || avail.abs() < pe.abs() {
            continue;
        }
        let saved = binds.len();
        if match_expr(pa, a, binds) {
            used[j] += pe;
            if match_factors(pat, i + 1, m, used, binds) {
                return true;
            }
            used[j] -= pe;
        }
        binds.truncate(saved);
    }
    false
}

fn match_expr(p: &Expr, e: &Expr, binds: &mut Vec<(Arc<str>, Expr)>) -> bool {
    if let Node::Symbol(s) = p.node() {
        if is_pattern_var(s) {
            if let Some((_, v)) = binds.iter().find(|(n, _)| n == s) {
                return v == e;
            }
            binds.push((s.clone(), e.clone()));
            return true;
        }
    }
    match (p.node(), e.node()) {
        (
            Node::Func { name, order, arg },
            Node::Func {
                name: n2,
                order: o2,
                arg: a2,
            },
        ) => name == n2 && order == o2 && match_expr(arg, a2, binds),
        (Node::Elem(f, a), Node::Elem(g, b)) => f == g && match_expr(a, b, binds),
        (Node::Atan2(y, x), Node::Atan2(y2, x2)) => {
            match_expr(y, y2, binds) && match_expr(x, x2, binds)
        }
        (Node::Pow(b, n), Node::Pow(b2, n2)) => n == n2 && match_expr(b, b2, binds),
        (Node::Add(a), Node::Add(b)) | (Node::Mul(a), Node::Mul(b)) => {
            a.len() == b.len() && a.iter().zip(b).all(|(x, y)| match_expr(x, y, binds))
        }
        _ => p == e,
    }
}

/// An ordered set of rewrite rules.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RuleSet {
    rules: Vec<RewriteRule>,
}

impl RuleSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, r: RewriteRule) {
        self.rules.push(r);
    }

    pub fn rules(&self) -> &[RewriteRule] {
        &self.rules
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// One bottom-up pass. Returns the index of the last rule that fired.
    fn apply_once(&self, e: &Expr) -> (Expr, Option<usize>) {
        let mut fired = None;
        let mapped = e.map_children(|c| {
            let (n, f) = self.apply_once(c);
            if f.is_some() {
                fired = f;
            }
            n
        });
        let mut cur = mapped;
        for (i, r) in self.rules.iter().enumerate() {
            if let Some(n) = r.apply_at(&cur) {
                fired = Some(i);
                cur = n;
            }
        }
        (cur, fired)
    }

    /// Normalize, then apply the rules to a fixpoint.
    pub fn normalize(&self, e: &Expr) -> Result<Expr, RewriteError> {
        let mut cur = normalize(e);
        if self.rules.is_empty() {
            return Ok(cur);
        }
        let mut last = 0;
        for _ in 0..MAX_REWRITE_PASSES {
            let (next, fired) = self.apply_once(&cur);
            let Some(i) = fired else {
                return Ok(cur);
            };
            last = i;
            let next = normalize(&next);
            if next == cur {
                return Ok(cur);
            }
            cur = next;
        }
        Err(RewriteError::NonTermination {
            rule: self.rules[last].to_string(),
            passes: MAX_REWRITE_PASSES,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k() -> Expr {
        Expr::sym("k")
    }
    fn j(order: u32, a: Expr) -> Expr {
        Expr::func("J", order, a)
    }
    fn h(a: Expr) -> Expr {
        Expr::func("H", 0, a)
    }

    fn riccati() -> RuleSet {
        let p = Expr::sym("?k");
        let mut rs = RuleSet::new();
        rs.push(
            RewriteRule::new(
                &(j(1, p.clone()) * h(p.clone())),
                &(-p.clone() - j(0, p).pow(2)),
            )
            .unwrap(),
        );
        rs
    }

    #[test]
    fn riccati_relation_absorbs_the_linear_term() {
        let e = j(1, k()) * h(k()) + k();
        let out = riccati().normalize(&e).unwrap();
        assert_eq!(out, normalize(&-j(0, k()).pow(2)));
    }

    #[test]
    fn matches_inside_larger_products() {
        let e = Expr::int(3) * j(1, k()) * h(k()).pow(2) * Expr::sym("t").sin();
        let out = riccati().normalize(&e).unwrap();
        let expected =
            normalize(&(Expr::int(3) * h(k()) * Expr::sym("t").sin() * (-k() - j(0, k()).pow(2))));
        assert_eq!(out, expected);
    }

    #[test]
    fn bindings_must_agree() {
        let e = j(1, k()) * h(Expr::sym("z"));
        let out = riccati().normalize(&e).unwrap();
        assert_eq!(out, normalize(&e));
    }

    #[test]
    fn nonterminating_rule_is_reported() {
        let mut rs = RuleSet::new();
        rs.push(RewriteRule::new(&Expr::sym("x"), &(Expr::sym("x") * Expr::sym("y"))).unwrap());
        let err = rs.normalize(&Expr::sym("x")).unwrap_err();
        assert!(matches!(err, RewriteError::NonTermination { ref rule, .. } if rule.contains("x")));
    }

    #[test]
    fn rejects_bad_rules() {
        assert!(matches!(
            RewriteRule::new(&(Expr::sym("x") + Expr::sym("y")), &Expr::zero()),
            Err(RewriteError::BadPattern(_))
        ));
        assert!(matches!(
            RewriteRule::new(&Expr::sym("?a"), &Expr::sym("?b")),
            Err(RewriteError::UnboundPatternVariable { .. })
        ));
    }
}
