//! Numeric evaluation of expressions.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, RwLock};

use num_traits::{Float, ToPrimitive};
use thiserror::Error;

use super::expr::{ElemFn, Expr, Node};
use crate::scalar::Real;

/// Smallest magnitude accepted as a divisor.
pub const DIVISION_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("unbound symbol `{0}`")]
    UnboundSymbol(String),
    #[error("unbound function `{0}`")]
    UnboundFunction(String),
    #[error("domain error in `{expr}`: {reason}")]
    Domain { expr: String, reason: &'static str },
}

/// A numerically defined one-variable function that can report derivatives.
pub trait NumericFunction: Send + Sync + fmt::Debug {
    fn eval(&self, order: u32, x: f64) -> Result<f64, EvalError>;
}

/// Concrete meaning of an abstract function symbol.
#[derive(Clone, Debug)]
pub enum Binding {
    /// `name(param) = body`; derivatives are taken symbolically and cached.
    Symbolic(Arc<SymbolicBinding>),
    Numeric(Arc<dyn NumericFunction>),
}

#[derive(Debug)]
pub struct SymbolicBinding {
    pub param: Arc<str>,
    pub body: Expr,
    derivatives: RwLock<Vec<Expr>>,
}

impl SymbolicBinding {
    pub fn new(param: &str, body: Expr) -> Self {
        SymbolicBinding {
            param: Arc::from(param),
            derivatives: RwLock::new(vec![body.clone()]),
            body,
        }
    }

    /// The `order`-th derivative of the body with respect to the parameter.
    pub fn derivative(&self, order: u32) -> Expr {
        let order = order as usize;
        if let Some(e) = self.derivatives.read().unwrap().get(order) {
            return e.clone();
        }
        let mut cache = self.derivatives.write().unwrap();
        while cache.len() <= order {
            let next = cache.last().unwrap().diff(&self.param);
            cache.push(next);
        }
        cache[order].clone()
    }
}

impl Binding {
    pub fn symbolic(param: &str, body: Expr) -> Self {
        Binding::Symbolic(Arc::new(SymbolicBinding::new(param, body)))
    }
}

/// Function bindings keyed by name.
#[derive(Clone, Debug, Default)]
pub struct Bindings {
    map: BTreeMap<Arc<str>, Binding>,
}

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, b: Binding) {
        self.map.insert(Arc::from(name), b);
    }

    pub fn get(&self, name: &str) -> Option<&Binding> {
        self.map.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Arc<str>, &Binding)> {
        self.map.iter()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Union, entries of `self` winning on conflicts.
    pub fn merged(&self, other: &Bindings) -> Bindings {
        let mut map = other.map.clone();
        for (k, v) in &self.map {
            map.insert(k.clone(), v.clone());
        }
        Bindings { map }
    }
}

/// Values for symbols plus function bindings.
#[derive(Clone, Debug)]
pub struct Env<'a, T> {
    vars: Vec<(Arc<str>, T)>,
    funcs: &'a Bindings,
}

impl<'a, T: Real> Env<'a, T> {
    pub fn new(funcs: &'a Bindings) -> Self {
        Env {
            vars: Vec::new(),
            funcs,
        }
    }

    pub fn with(mut self, name: &str, v: T) -> Self {
        self.set(name, v);
        self
    }

    pub fn set(&mut self, name: &str, v: T) {
        match self.vars.iter_mut().find(|(n, _)| &**n == name) {
            Some(slot) => slot.1 = v,
            None => self.vars.push((Arc::from(name), v)),
        }
    }

    pub fn get(&self, name: &str) -> Option<T> {
        self.vars
            .iter()
            .find(|(n, _)| &**n == name)
            .map(|(_, v)| *v)
    }
}

fn domain(e: &Expr, reason: &'static str) -> EvalError {
    EvalError::Domain {
        expr: e.to_string(),
        reason,
    }
}

impl Expr {
    /// Evaluate in floating point.
    pub fn eval<T: Real>(&self, env: &Env<'_, T>) -> Result<T, EvalError> {
        let v = match self.node() {
            Node::Rational(r) => T::from_f64_lossy(r.to_f64().unwrap_or(f64::NAN)),
            Node::Float(f) => T::from_f64_lossy(f.0),
            Node::Symbol(s) => match env.get(s) {
                Some(v) => v,
                None if &**s == "pi" => T::PI(),
                None => return Err(EvalError::UnboundSymbol(s.to_string())),
            },
            Node::Func { name, order, arg } => {
                let x = arg.eval(env)?;
                let b = env
                    .funcs
                    .get(name)
                    .ok_or_else(|| EvalError::UnboundFunction(name.to_string()))?;
                match b {
                    Binding::Symbolic(sb) => {
                        let body = sb.derivative(*order);
                        let mut inner = env.clone();
                        inner.set(&sb.param, x);
                        body.eval(&inner)?
                    }
                    Binding::Numeric(nf) => T::from_f64_lossy(nf.eval(*order, x.to_f64_lossy())?),
                }
            }
            Node::Elem(f, a) => {
                let x = a.eval(env)?;
                match f {
                    ElemFn::Sin => Float::sin(x),
                    ElemFn::Cos => Float::cos(x),
                    ElemFn::Tan => Float::tan(x),
                    ElemFn::Exp => Float::exp(x),
                    ElemFn::Log => {
                        if x <= T::zero() {
                            return Err(domain(self, "log of a nonpositive value"));
                        }
                        Float::ln(x)
                    }
                    ElemFn::Sqrt => {
                        if x < T::zero() {
                            return Err(domain(self, "sqrt of a negative value"));
                        }
                        Float::sqrt(x)
                    }
                }
            }
            Node::Atan2(y, x) => Float::atan2(y.eval(env)?, x.eval(env)?),
            Node::Pow(b, n) => {
                let x = b.eval(env)?;
                if *n < 0 && Float::abs(x) < T::from_f64_lossy(DIVISION_FLOOR) {
                    return Err(domain(self, "division by a value below 1e-300"));
                }
                Float::powi(x, *n as i32)
            }
            Node::Add(ts) => {
                let mut acc = T::zero();
                for t in ts {
                    acc += t.eval(env)?;
                }
                acc
            }
            Node::Mul(fs) => {
                let mut acc = T::one();
                for f in fs {
                    acc *= f.eval(env)?;
                }
                acc
            }
        };
        Ok(v)
    }

    /// Evaluate in `f64` at a coordinate assignment.
    pub fn eval_at(
        &self,
        names: &[Arc<str>],
        point: &[f64],
        funcs: &Bindings,
    ) -> Result<f64, EvalError> {
        let mut env = Env::new(funcs);
        for (n, v) in names.iter().zip(point) {
            env.set(n, *v);
        }
        self.eval(&env)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbolic::normalize;

    #[test]
    fn sums_at_a_point() {
        let b = Bindings::new();
        let env = Env::new(&b).with("x", 1.0).with("y", 2.0);
        assert_eq!((Expr::sym("x") + Expr::sym("y")).eval(&env).unwrap(), 3.0);
    }

    #[test]
    fn curvature_of_the_round_profile() {
        // kappa = -h''/h with h = cos u is identically 1.
        let mut b = Bindings::new();
        b.insert("h", Binding::symbolic("s", Expr::sym("s").cos()));
        let u = Expr::sym("u");
        let kappa = normalize(&(-Expr::func("h", 2, u.clone()) / Expr::func("h", 0, u)));
        let env = Env::new(&b).with("u", 0.3);
        assert!((kappa.eval(&env).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn domain_errors_name_the_subexpression() {
        let b = Bindings::new();
        let env = Env::new(&b).with("x", -1.0);
        let err = Expr::sym("x").log().eval(&env).unwrap_err();
        assert!(matches!(err, EvalError::Domain { ref expr, .. } if expr == "log(x)"));
        let env = Env::new(&b).with("x", 0.0);
        assert!(Expr::sym("x").pow(-1).eval(&env).is_err());
        assert!(matches!(
            Expr::sym("q").eval(&env),
            Err(EvalError::UnboundSymbol(_))
        ));
    }

    #[test]
    fn works_in_single_precision() {
        let b = Bindings::new();
        let env = Env::new(&b).with("x", 0.5f32);
        let v: f32 = Expr::sym("x").exp().eval(&env).unwrap();
        assert!((v - 0.5f32.exp()).abs() < 1e-6);
    }
}
