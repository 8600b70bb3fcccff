//! Coordinate charts with sampling domains.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::eval::{Bindings, Env, EvalError};
use super::expr::Expr;
use super::rewrite::{RewriteError, RuleSet};

/// Rejection sampling gives up after this many draws per requested point.
const MAX_DRAWS_PER_POINT: usize = 2000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChartError {
    #[error("chart `{chart}`: duplicate coordinate `{coord}`")]
    DuplicateCoordinate { chart: String, coord: String },
    #[error("chart `{chart}`: empty sampling interval for `{coord}`")]
    EmptyInterval { chart: String, coord: String },
    #[error("chart `{chart}`: unknown coordinate `{coord}`")]
    UnknownCoordinate { chart: String, coord: String },
    #[error("chart `{chart}`: every sample point was rejected by the constraints")]
    SamplingExhausted { chart: String },
    #[error("chart `{chart}`: point {point:?} lies outside the domain")]
    OutsideDomain { chart: String, point: Vec<f64> },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Rewrite(#[from] RewriteError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Lt,
    Le,
    Gt,
    Ge,
    Ne,
}

impl Relation {
    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Lt => "<",
            Relation::Le => "<=",
            Relation::Gt => ">",
            Relation::Ge => ">=",
            Relation::Ne => "!=",
        }
    }

    fn holds(self, a: f64, b: f64) -> bool {
        match self {
            Relation::Lt => a < b,
            Relation::Le => a <= b,
            Relation::Gt => a > b,
            Relation::Ge => a >= b,
            Relation::Ne => (a - b).abs() > 1e-12 * (1.0 + a.abs().max(b.abs())),
        }
    }
}

/// `lhs rel rhs`, checked after binding substitution.
#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    pub lhs: Expr,
    pub rel: Relation,
    pub rhs: Expr,
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.lhs, self.rel.symbol(), self.rhs)
    }
}

/// A coordinate chart: ordered coordinates, an open sampling box, extra
/// constraints, constant parameters, function bindings and rewrite rules.
#[derive(Clone, Debug)]
pub struct Chart {
    name: Arc<str>,
    coords: Vec<Arc<str>>,
    intervals: Vec<(f64, f64)>,
    constraints: Vec<Constraint>,
    params: Vec<(Arc<str>, f64)>,
    bindings: Bindings,
    rules: RuleSet,
}

impl PartialEq for Chart {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.coords == other.coords
    }
}

impl Chart {
    pub fn new(name: &str, coords: &[(&str, f64, f64)]) -> Result<Self, ChartError> {
        let mut chart = Chart {
            name: Arc::from(name),
            coords: Vec::new(),
            intervals: Vec::new(),
            constraints: Vec::new(),
            params: Vec::new(),
            bindings: Bindings::new(),
            rules: RuleSet::new(),
        };
        for &(c, lo, hi) in coords {
            chart.push_coordinate(c, lo, hi)?;
        }
        Ok(chart)
    }

    pub fn push_coordinate(&mut self, coord: &str, lo: f64, hi: f64) -> Result<(), ChartError> {
        if self.coords.iter().any(|c| &**c == coord) {
            return Err(ChartError::DuplicateCoordinate {
                chart: self.name.to_string(),
                coord: coord.to_string(),
            });
        }
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(ChartError::EmptyInterval {
                chart: self.name.to_string(),
                coord: coord.to_string(),
            });
        }
        self.coords.push(Arc::from(coord));
        self.intervals.push((lo, hi));
        Ok(())
    }

    pub fn with_constraint(mut self, lhs: Expr, rel: Relation, rhs: Expr) -> Self {
        self.constraints.push(Constraint { lhs, rel, rhs });
        self
    }

    pub fn with_param(mut self, name: &str, value: f64) -> Self {
        self.set_param(name, value);
        self
    }

    pub fn set_param(&mut self, name: &str, value: f64) {
        match self.params.iter_mut().find(|(n, _)| &**n == name) {
            Some(slot) => slot.1 = value,
            None => self.params.push((Arc::from(name), value)),
        }
    }

    pub fn with_bindings(mut self, b: Bindings) -> Self {
        self.bindings = b.merged(&self.bindings);
        self
    }

    pub fn with_rules(mut self, rules: RuleSet) -> Self {
        self.rules = rules;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[Arc<str>] {
        &self.coords
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn params(&self) -> &[(Arc<str>, f64)] {
        &self.params
    }

    pub fn bindings(&self) -> &Bindings {
        &self.bindings
    }

    pub fn rules(&self) -> &RuleSet {
        &self.rules
    }

    pub fn coord_index(&self, coord: &str) -> Result<usize, ChartError> {
        self.coords
            .iter()
            .position(|c| &**c == coord)
            .ok_or_else(|| ChartError::UnknownCoordinate {
                chart: self.name.to_string(),
                coord: coord.to_string(),
            })
    }

    /// Coordinate symbols as expressions, in chart order.
    pub fn coord_exprs(&self) -> Vec<Expr> {
        self.coords.iter().map(|c| Expr::sym(c)).collect()
    }

    /// Normalize under the chart's rewrite rules.
    pub fn simplify(&self, e: &Expr) -> Result<Expr, ChartError> {
        Ok(self.rules.normalize(e)?)
    }

    /// Evaluation environment at a point, parameters included.
    pub fn env_at<'a>(&'a self, point: &[f64]) -> Env<'a, f64> {
        self.env_with(point, &self.bindings)
    }

    /// Like [`Chart::env_at`] with explicit function bindings.
    pub fn env_with<'a>(&self, point: &[f64], funcs: &'a Bindings) -> Env<'a, f64> {
        let mut env = Env::new(funcs);
        for (n, v) in &self.params {
            env.set(n, *v);
        }
        for (n, v) in self.coords.iter().zip(point) {
            env.set(n, *v);
        }
        env
    }

    /// Evaluation environment in any scalar type.
    pub fn env_in<T: crate::scalar::Real>(&self, point: &[T]) -> Env<'_, T> {
        let mut env = Env::new(&self.bindings);
        for (n, v) in &self.params {
            env.set(n, T::from_f64_lossy(*v));
        }
        for (n, v) in self.coords.iter().zip(point) {
            env.set(n, *v);
        }
        env
    }

    pub fn eval(&self, e: &Expr, point: &[f64]) -> Result<f64, EvalError> {
        e.eval(&self.env_at(point))
    }

    /// Inside the open box and satisfying every constraint.
    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.dim()
            && point
                .iter()
                .zip(&self.intervals)
                .all(|(x, (lo, hi))| *lo < *x && *x < *hi)
            && self.satisfies_constraints(point)
    }

    fn satisfies_constraints(&self, point: &[f64]) -> bool {
        let env = self.env_at(point);
        self.constraints
            .iter()
            .all(|c| match (c.lhs.eval(&env), c.rhs.eval(&env)) {
                (Ok(a), Ok(b)) => a.is_finite() && b.is_finite() && c.rel.holds(a, b),
                _ => false,
            })
    }

    /// Deterministic uniform samples from the domain.
    pub fn sample(&self, count: usize, seed: u64) -> Result<Vec<Vec<f64>>, ChartError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let boxes = self.intervals.clone();
        self.draw(count, &mut rng, &boxes)
    }

    /// Samples inside the domain within `radius` (per coordinate) of `center`.
    pub fn sample_near(
        &self,
        center: &[f64],
        radius: f64,
        count: usize,
        seed: u64,
    ) -> Result<Vec<Vec<f64>>, ChartError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let boxes: Vec<(f64, f64)> = self
            .intervals
            .iter()
            .zip(center)
            .map(|((lo, hi), c)| ((c - radius).max(*lo), (c + radius).min(*hi)))
            .collect();
        if boxes.iter().any(|(lo, hi)| !(lo < hi)) {
            return Err(ChartError::OutsideDomain {
                chart: self.name.to_string(),
                point: center.to_vec(),
            });
        }
        self.draw(count, &mut rng, &boxes)
    }

    fn draw(
        &self,
        count: usize,
        rng: &mut ChaCha8Rng,
        boxes: &[(f64, f64)],
    ) -> Result<Vec<Vec<f64>>, ChartError> {
        let mut out = Vec::with_capacity(count);
        let mut draws = 0;
        while out.len() < count {
            if draws >= MAX_DRAWS_PER_POINT * count.max(1) {
                return Err(ChartError::SamplingExhausted {
                    chart: self.name.to_string(),
                });
            }
            draws += 1;
            let p: Vec<f64> = boxes
                .iter()
                .map(|&(lo, hi)| {
                    let x = rng.gen_range(lo..hi);
                    if x == lo {
                        0.5 * (lo + hi)
                    } else {
                        x
                    }
                })
                .collect();
            if self.satisfies_constraints(&p) {
                out.push(p);
            }
        }
        Ok(out)
    }

    /// Resolve a named-coordinate assignment into chart order.
    pub fn point_from(&self, assignment: &[(String, f64)]) -> Result<Vec<f64>, ChartError> {
        let mut p = vec![f64::NAN; self.dim()];
        for (name, v) in assignment {
            p[self.coord_index(name)?] = *v;
        }
        if let Some(i) = p.iter().position(|x| x.is_nan()) {
            return Err(ChartError::UnknownCoordinate {
                chart: self.name.to_string(),
                coord: format!("missing value for `{}`", self.coords[i]),
            });
        }
        Ok(p)
    }

    pub fn require_inside(&self, point: &[f64]) -> Result<(), ChartError> {
        if self.contains(point) {
            Ok(())
        } else {
            Err(ChartError::OutsideDomain {
                chart: self.name.to_string(),
                point: point.to_vec(),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_duplicates_and_empty_boxes() {
        assert!(matches!(
            Chart::new("M", &[("x", 0.0, 1.0), ("x", 0.0, 1.0)]),
            Err(ChartError::DuplicateCoordinate { .. })
        ));
        assert!(matches!(
            Chart::new("M", &[("x", 1.0, 1.0)]),
            Err(ChartError::EmptyInterval { .. })
        ));
    }

    #[test]
    fn samples_respect_constraints_and_seed() {
        let r2 = Expr::sym("x").pow(2) + Expr::sym("y").pow(2);
        let c = Chart::new("A", &[("x", -2.0, 2.0), ("y", -2.0, 2.0)])
            .unwrap()
            .with_constraint(r2.clone(), Relation::Gt, Expr::frac(1, 4))
            .with_constraint(r2, Relation::Lt, Expr::int(4));
        let a = c.sample(50, 7).unwrap();
        let b = c.sample(50, 7).unwrap();
        assert_eq!(a, b);
        for p in &a {
            let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
            assert!(0.5 < r && r < 2.0);
        }
    }

    #[test]
    fn impossible_constraints_exhaust() {
        let c = Chart::new("M", &[("x", 0.0, 1.0)])
            .unwrap()
            .with_constraint(Expr::sym("x"), Relation::Gt, Expr::int(2));
        assert!(matches!(
            c.sample(1, 1),
            Err(ChartError::SamplingExhausted { .. })
        ));
    }
}
