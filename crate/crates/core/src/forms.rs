//! Differential forms and vector fields on a single chart, stored in the
//! coordinate basis.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::symbolic::{Chart, ChartError, Expr};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FormError {
    #[error("chart mismatch: `{left}` vs `{right}`")]
    ChartMismatch { left: String, right: String },
    #[error("degree {degree} exceeds chart dimension {dim}")]
    DegreeTooHigh { degree: usize, dim: usize },
    #[error("expected {expected} components, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("multi-index {0:?} is not strictly increasing within the chart")]
    BadIndex(Vec<usize>),
    #[error("coframe `{0}` is degenerate on the sample domain")]
    Degenerate(String),
    #[error(transparent)]
    Chart(#[from] ChartError),
}

/// Increasing multi-index over coordinates.
pub type MultiIndex = Vec<usize>;

/// Sign and merged index of `dx^I ^ dx^J`, or `None` if they overlap.
pub fn merge_indices(a: &[usize], b: &[usize]) -> Option<(i32, MultiIndex)> {
    let mut inversions = 0usize;
    for &i in a {
        for &j in b {
            if i == j {
                return None;
            }
            if i > j {
                inversions += 1;
            }
        }
    }
    let mut m: MultiIndex = a.iter().chain(b).copied().collect();
    m.sort_unstable();
    Some((if inversions.is_multiple_of(2) { 1 } else { -1 }, m))
}

/// All increasing multi-indices of length `k` over `0..n`.
pub fn multi_indices(n: usize, k: usize) -> Vec<MultiIndex> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<MultiIndex>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if k <= n {
        rec(0, n, k, &mut Vec::new(), &mut out);
    }
    out
}

pub(crate) fn same_chart(a: &Chart, b: &Chart) -> Result<(), FormError> {
    if a == b {
        Ok(())
    } else {
        Err(FormError::ChartMismatch {
            left: a.name().to_string(),
            right: b.name().to_string(),
        })
    }
}

#[derive(Clone, Debug)]
pub struct DifferentialForm {
    chart: Arc<Chart>,
    degree: usize,
    terms: BTreeMap<MultiIndex, Expr>,
}

impl PartialEq for DifferentialForm {
    fn eq(&self, other: &Self) -> bool {
        *self.chart == *other.chart && self.degree == other.degree && self.terms == other.terms
    }
}

impl DifferentialForm {
    pub fn zero(chart: Arc<Chart>, degree: usize) -> Result<Self, FormError> {
        if degree > chart.dim() {
            return Err(FormError::DegreeTooHigh {
                degree,
                dim: chart.dim(),
            });
        }
        Ok(DifferentialForm {
            chart,
            degree,
            terms: BTreeMap::new(),
        })
    }

    /// A 0-form.
    pub fn function(chart: Arc<Chart>, f: &Expr) -> Result<Self, FormError> {
        let mut w = Self::zero(chart, 0)?;
        w.add_term(Vec::new(), f)?;
        Ok(w)
    }

    /// `d[coord]`.
    pub fn differential(chart: Arc<Chart>, coord: &str) -> Result<Self, FormError> {
        let i = chart.coord_index(coord)?;
        let mut w = Self::zero(chart, 1)?;
        w.add_term(vec![i], &Expr::one())?;
        Ok(w)
    }

    /// `sum_a coeffs[a] d[x_a]`.
    pub fn one_form(chart: Arc<Chart>, coeffs: &[Expr]) -> Result<Self, FormError> {
        if coeffs.len() != chart.dim() {
            return Err(FormError::Dimension {
                expected: chart.dim(),
                found: coeffs.len(),
            });
        }
        let mut w = Self::zero(chart, 1)?;
        for (a, c) in coeffs.iter().enumerate() {
            w.add_term(vec![a], c)?;
        }
        Ok(w)
    }

    pub fn from_terms(
        chart: Arc<Chart>,
        degree: usize,
        terms: impl IntoIterator<Item = (MultiIndex, Expr)>,
    ) -> Result<Self, FormError> {
        let mut w = Self::zero(chart, degree)?;
        for (i, c) in terms {
            w.add_term(i, &c)?;
        }
        Ok(w)
    }

    fn add_term(&mut self, idx: MultiIndex, c: &Expr) -> Result<(), FormError> {
        if idx.len() != self.degree
            || idx.windows(2).any(|w| w[0] >= w[1])
            || idx.iter().any(|&i| i >= self.chart.dim())
        {
            return Err(FormError::BadIndex(idx));
        }
        let sum = match self.terms.get(&idx) {
            Some(old) => old.clone() + c.clone(),
            None => c.clone(),
        };
        let sum = self.chart.simplify(&sum)?;
        if sum.is_zero() {
            self.terms.remove(&idx);
        } else {
            self.terms.insert(idx, sum);
        }
        Ok(())
    }

    pub fn chart(&self) -> &Arc<Chart> {
        &self.chart
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, &Expr)> {
        self.terms.iter()
    }

    pub fn coefficient(&self, idx: &[usize]) -> Expr {
        self.terms.get(idx).cloned().unwrap_or_else(Expr::zero)
    }

    /// Structurally zero after normalization.
    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn add(&self, other: &Self) -> Result<Self, FormError> {
        same_chart(&self.chart, &other.chart)?;
        if self.degree != other.degree {
            return Err(FormError::Dimension {
                expected: self.degree,
                found: other.degree,
            });
        }
        let mut w = self.clone();
        for (i, c) in &other.terms {
            w.add_term(i.clone(), c)?;
        }
        Ok(w)
    }

    pub fn sub(&self, other: &Self) -> Result<Self, FormError> {
        self.add(&other.scale(&Expr::int(-1))?)
    }

    pub fn scale(&self, f: &Expr) -> Result<Self, FormError> {
        let mut w = Self::zero(self.chart.clone(), self.degree)?;
        for (i, c) in &self.terms {
            w.add_term(i.clone(), &(f.clone() * c.clone()))?;
        }
        Ok(w)
    }

    pub fn wedge(&self, other: &Self) -> Result<Self, FormError> {
        same_chart(&self.chart, &other.chart)?;
        let mut w = Self::zero(self.chart.clone(), self.degree + other.degree)?;
        for (i, a) in &self.terms {
            for (j, b) in &other.terms {
                if let Some((sign, m)) = merge_indices(i, j) {
                    w.add_term(m, &(Expr::int(sign as i64) * a.clone() * b.clone()))?;
                }
            }
        }
        Ok(w)
    }

    pub fn exterior_derivative(&self) -> Result<Self, FormError> {
        let mut w = Self::zero(self.chart.clone(), self.degree + 1)?;
        let coords = self.chart.coords().to_vec();
        for (idx, c) in &self.terms {
            for (a, x) in coords.iter().enumerate() {
                if idx.contains(&a) {
                    continue;
                }
                let dc = c.diff(x);
                if dc.is_zero() {
                    continue;
                }
                let (sign, m) = merge_indices(&[a], idx).expect("disjoint");
                w.add_term(m, &(Expr::int(sign as i64) * dc))?;
            }
        }
        Ok(w)
    }

    /// Evaluate all coefficients at a point, in `multi_indices` order.
    pub fn values_at(&self, point: &[f64]) -> Result<Vec<f64>, ChartError> {
        multi_indices(self.chart.dim(), self.degree)
            .iter()
            .map(|i| Ok(self.chart.eval(&self.coefficient(i), point)?))
            .collect()
    }
}

impl fmt::Display for DifferentialForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let coords = self.chart.coords();
        for (n, (idx, c)) in self.terms.iter().enumerate() {
            if n > 0 {
                write!(f, " + ")?;
            }
            let basis: Vec<String> = idx.iter().map(|&i| format!("d[{}]", coords[i])).collect();
            if idx.is_empty() {
                write!(f, "({c})")?;
            } else if c.is_one() {
                write!(f, "{}", basis.join("^^"))?;
            } else {
                write!(f, "({c})*{}", basis.join("^^"))?;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct VectorField {
    chart: Arc<Chart>,
    comps: Vec<Expr>,
}

impl PartialEq for VectorField {
    fn eq(&self, other: &Self) -> bool {
        *self.chart == *other.chart && self.comps == other.comps
    }
}

impl VectorField {
    pub fn new(chart: Arc<Chart>, comps: Vec<Expr>) -> Result<Self, FormError> {
        if comps.len() != chart.dim() {
            return Err(FormError::Dimension {
                expected: chart.dim(),
                found: comps.len(),
            });
        }
        let comps = comps
            .iter()
            .map(|c| chart.simplify(c))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(VectorField { chart, comps })
    }

    /// The coordinate field `d/d coord`.
    pub fn coordinate(chart: Arc<Chart>, coord: &str) -> Result<Self, FormError> {
        let i = chart.coord_index(coord)?;
        let comps = (0..chart.dim())
            .map(|a| if a == i { Expr::one() } else { Expr::zero() })
            .collect();
        Self::new(chart, comps)
    }

    pub fn chart(&self) -> &Arc<Chart> {
        &self.chart
    }

    pub fn components(&self) -> &[Expr] {
        &self.comps
    }

    pub fn is_zero(&self) -> bool {
        self.comps.iter().all(Expr::is_zero)
    }

    /// Directional derivative `v(f)`.
    pub fn apply(&self, f: &Expr) -> Result<Expr, FormError> {
        let terms: Vec<Expr> = self
            .chart
            .coords()
            .iter()
            .zip(&self.comps)
            .filter(|(_, c)| !c.is_zero())
            .map(|(x, c)| c.clone() * f.diff(x))
            .collect();
        Ok(self.chart.simplify(&Expr::add_all(terms))?)
    }

    pub fn lie_bracket(&self, other: &Self) -> Result<Self, FormError> {
        same_chart(&self.chart, &other.chart)?;
        let mut comps = Vec::with_capacity(self.comps.len());
        for (a, b) in self.comps.iter().zip(&other.comps) {
            comps.push(self.apply(b)? - other.apply(a)?);
        }
        Self::new(self.chart.clone(), comps)
    }

    pub fn add(&self, other: &Self) -> Result<Self, FormError> {
        same_chart(&self.chart, &other.chart)?;
        let comps = self
            .comps
            .iter()
            .zip(&other.comps)
            .map(|(a, b)| a.clone() + b.clone())
            .collect();
        Self::new(self.chart.clone(), comps)
    }

    pub fn scale(&self, f: &Expr) -> Result<Self, FormError> {
        let comps = self.comps.iter().map(|a| f.clone() * a.clone()).collect();
        Self::new(self.chart.clone(), comps)
    }

    /// Pairing with a 1-form.
    pub fn contract(&self, w: &DifferentialForm) -> Result<Expr, FormError> {
        same_chart(&self.chart, w.chart())?;
        if w.degree() != 1 {
            return Err(FormError::Dimension {
                expected: 1,
                found: w.degree(),
            });
        }
        let terms = (0..self.chart.dim())
            .map(|a| self.comps[a].clone() * w.coefficient(&[a]))
            .collect();
        Ok(self.chart.simplify(&Expr::add_all(terms))?)
    }
}
