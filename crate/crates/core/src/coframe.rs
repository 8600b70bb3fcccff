//! Coframes and what they determine: structure functions, coframe
//! derivatives, the invariant chain and Cartan realization data.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_rational::BigRational;
use thiserror::Error;

use crate::forms::{multi_indices, DifferentialForm, FormError};
use crate::linalg::{numeric_rank, RankTolerance};
use crate::symbolic::{close, probably_equal, Chart, ChartError, EvalError, Expr, Sampling};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoframeError {
    #[error(transparent)]
    Form(#[from] FormError),
    #[error(transparent)]
    Chart(#[from] ChartError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("`{name}` has {found} forms on a {dim}-dimensional chart")]
    WrongCount {
        name: String,
        found: usize,
        dim: usize,
    },
    #[error("form {index} of `{name}` has degree {degree}, expected 1")]
    NotOneForm {
        name: String,
        index: usize,
        degree: usize,
    },
    #[error("coframe `{name}` is degenerate near {point:?} (|det| = {det:e})")]
    Degenerate {
        name: String,
        point: Vec<f64>,
        det: f64,
    },
    #[error("coframe `{0}` has more than six forms; symbolic inversion is limited to n <= 6")]
    TooLarge(String),
    #[error("invariant chain did not stabilize by order {0}")]
    NotStabilized(usize),
    #[error("point {point:?} is not fully regular (rank {rank} there, {nearby:?} nearby)")]
    NotRegular {
        point: Vec<f64>,
        rank: usize,
        nearby: Vec<usize>,
    },
    #[error("level-set constancy violated: `{0}` is not a function of the selected invariants")]
    NotInvariant(String),
    #[error("closed form check failed for {0}")]
    ClosedFormMismatch(String),
    #[error("closed forms have {found} invariants but the chain has rank {rank}")]
    InvariantCount { found: usize, rank: usize },
}

/// `m` one-forms on a chart, not necessarily a coframe.
#[derive(Clone, Debug)]
pub struct FormSystem {
    name: Arc<str>,
    chart: Arc<Chart>,
    forms: Vec<DifferentialForm>,
    /// `matrix[k][a]` is the `d[x_a]` coefficient of form `k`.
    matrix: Vec<Vec<Expr>>,
}

impl FormSystem {
    pub fn new(
        name: &str,
        chart: Arc<Chart>,
        forms: Vec<DifferentialForm>,
    ) -> Result<Self, CoframeError> {
        let mut matrix = Vec::with_capacity(forms.len());
        for (k, w) in forms.iter().enumerate() {
            crate::forms::same_chart(&chart, w.chart())?;
            if w.degree() != 1 {
                return Err(CoframeError::NotOneForm {
                    name: name.to_string(),
                    index: k,
                    degree: w.degree(),
                });
            }
            matrix.push((0..chart.dim()).map(|a| w.coefficient(&[a])).collect());
        }
        Ok(FormSystem {
            name: Arc::from(name),
            chart,
            forms,
            matrix,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn chart(&self) -> &Arc<Chart> {
        &self.chart
    }

    pub fn forms(&self) -> &[DifferentialForm] {
        &self.forms
    }

    pub fn len(&self) -> usize {
        self.forms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forms.is_empty()
    }

    pub fn matrix(&self) -> &[Vec<Expr>] {
        &self.matrix
    }

    /// Coefficient matrix at a point, `m x dim`.
    pub fn matrix_at(&self, point: &[f64]) -> Result<DMatrix<f64>, EvalError> {
        let m = self.len();
        let n = self.chart.dim();
        let mut out = DMatrix::zeros(m, n);
        let env = self.chart.env_at(point);
        for k in 0..m {
            for a in 0..n {
                out[(k, a)] = self.matrix[k][a].eval(&env)?;
            }
        }
        Ok(out)
    }
}

/// `n` pointwise independent one-forms on an `n`-dimensional chart.
#[derive(Clone, Debug)]
pub struct Coframe {
    system: FormSystem,
    det: Expr,
    /// `inverse[a][k]`: `d[x_a] = sum_k inverse[a][k] theta^k`.
    inverse: Vec<Vec<Expr>>,
}

/// Antisymmetric table `C^k_ij`; stored entries have `i < j`.
#[derive(Clone, Debug, PartialEq)]
pub struct StructureTable {
    n: usize,
    entries: Vec<Vec<Vec<Expr>>>,
}

impl StructureTable {
    pub fn zero(n: usize) -> Self {
        StructureTable {
            n,
            entries: vec![vec![vec![Expr::zero(); n]; n]; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Set `T^k_ij` (and `T^k_ji = -T^k_ij`). Requires `i < j`.
    pub fn set(&mut self, k: usize, i: usize, j: usize, v: Expr) {
        assert!(i < j, "structure entries are stored for i < j");
        self.entries[k][j][i] = crate::symbolic::normalize(&-v.clone());
        self.entries[k][i][j] = v;
    }

    /// `T^k_ij` for any `i, j`.
    pub fn get(&self, k: usize, i: usize, j: usize) -> &Expr {
        &self.entries[k][i][j]
    }

    pub fn map(&self, f: impl Fn(&Expr) -> Expr) -> Self {
        let mut t = StructureTable::zero(self.n);
        for (k, i, j) in self.upper_indices() {
            t.set(k, i, j, f(self.get(k, i, j)));
        }
        t
    }

    /// `(k, i, j)` with `i < j`, in lexicographic order.
    pub fn upper_indices(&self) -> Vec<(usize, usize, usize)> {
        let mut v = Vec::new();
        for k in 0..self.n {
            for i in 0..self.n {
                for j in i + 1..self.n {
                    v.push((k, i, j));
                }
            }
        }
        v
    }

    /// Display name for an entry, 1-based: `C^1_23`.
    pub fn entry_name(&self, letter: &str, k: usize, i: usize, j: usize) -> String {
        if self.n < 10 {
            format!("{letter}^{}_{}{}", k + 1, i + 1, j + 1)
        } else {
            format!("{letter}^{}_{},{}", k + 1, i + 1, j + 1)
        }
    }
}

struct Minors<'a> {
    m: &'a [Vec<Expr>],
    memo: HashMap<(u64, u64), Expr>,
}

impl<'a> Minors<'a> {
    fn new(m: &'a [Vec<Expr>]) -> Self {
        Minors {
            m,
            memo: HashMap::new(),
        }
    }

    /// Determinant of the submatrix on the given rows and columns, by
    /// cofactor expansion along the first row with memoization.
    fn det(&mut self, rows: &[usize], cols: &[usize]) -> Expr {
        if rows.is_empty() {
            return Expr::one();
        }
        let key = (mask(rows), mask(cols));
        if let Some(e) = self.memo.get(&key) {
            return e.clone();
        }
        let r = rows[0];
        let mut terms = Vec::new();
        for (c_pos, &c) in cols.iter().enumerate() {
            let a = &self.m[r][c];
            if a.is_zero() {
                continue;
            }
            let sub_cols: Vec<usize> = cols.iter().copied().filter(|&x| x != c).collect();
            let minor = self.det(&rows[1..], &sub_cols);
            if minor.is_zero() {
                continue;
            }
            let sign = if c_pos % 2 == 0 { 1 } else { -1 };
            terms.push(Expr::int(sign) * a.clone() * minor);
        }
        let d = crate::symbolic::normalize(&Expr::add_all(terms));
        self.memo.insert(key, d.clone());
        d
    }
}

fn mask(ix: &[usize]) -> u64 {
    ix.iter().fold(0u64, |m, &i| m | (1 << i))
}

impl Coframe {
    /// Build and check pointwise independence on `sampling.trials` points.
    pub fn new(
        name: &str,
        chart: Arc<Chart>,
        forms: Vec<DifferentialForm>,
        sampling: &Sampling,
    ) -> Result<Self, CoframeError> {
        let system = FormSystem::new(name, chart.clone(), forms)?;
        Self::from_system(system, sampling)
    }

    pub fn from_system(system: FormSystem, sampling: &Sampling) -> Result<Self, CoframeError> {
        let n = system.chart.dim();
        if system.len() != n {
            return Err(CoframeError::WrongCount {
                name: system.name.to_string(),
                found: system.len(),
                dim: n,
            });
        }
        if n > 6 {
            return Err(CoframeError::TooLarge(system.name.to_string()));
        }
        let chart = system.chart.clone();
        let all: Vec<usize> = (0..n).collect();
        let mut minors = Minors::new(&system.matrix);
        let det = chart.simplify(&minors.det(&all, &all))?;
        let det_inv = det.clone().pow(-1);
        let mut inverse = vec![vec![Expr::zero(); n]; n];
        for (a, row) in inverse.iter_mut().enumerate() {
            for (k, slot) in row.iter_mut().enumerate() {
                // inverse[a][k] = cofactor(k, a) / det
                let rows: Vec<usize> = all.iter().copied().filter(|&r| r != k).collect();
                let cols: Vec<usize> = all.iter().copied().filter(|&c| c != a).collect();
                let minor = minors.det(&rows, &cols);
                let sign = if (k + a) % 2 == 0 { 1 } else { -1 };
                *slot = chart.simplify(&(Expr::int(sign) * minor * det_inv.clone()))?;
            }
        }
        let cf = Coframe {
            system,
            det,
            inverse,
        };
        cf.check_independent(sampling)?;
        Ok(cf)
    }

    fn check_independent(&self, sampling: &Sampling) -> Result<(), CoframeError> {
        let chart = &self.system.chart;
        for p in chart.sample(sampling.trials.min(32), sampling.seed)? {
            let m = self.system.matrix_at(&p)?;
            let det = self.det.eval(&chart.env_at(&p))?;
            let scale: f64 = m.row_iter().map(|r| r.norm()).product();
            if !(det.abs() > 1e-9 * scale) || !det.is_finite() {
                return Err(CoframeError::Degenerate {
                    name: self.system.name.to_string(),
                    point: p,
                    det,
                });
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        self.system.name()
    }

    pub fn chart(&self) -> &Arc<Chart> {
        self.system.chart()
    }

    pub fn dim(&self) -> usize {
        self.system.len()
    }

    pub fn system(&self) -> &FormSystem {
        &self.system
    }

    pub fn forms(&self) -> &[DifferentialForm] {
        self.system.forms()
    }

    pub fn determinant(&self) -> &Expr {
        &self.det
    }

    pub fn inverse(&self) -> &[Vec<Expr>] {
        &self.inverse
    }

    /// The dual frame: `X_k = sum_a inverse[a][k] d/dx_a`.
    pub fn dual_frame(&self) -> Result<Vec<crate::forms::VectorField>, CoframeError> {
        (0..self.dim())
            .map(|k| {
                let comps = (0..self.dim())
                    .map(|a| self.inverse[a][k].clone())
                    .collect();
                Ok(crate::forms::VectorField::new(self.chart().clone(), comps)?)
            })
            .collect()
    }

    /// Coefficients `c_I` with `a = sum_I c_I theta^I`, keyed like
    /// [`multi_indices`].
    pub fn expand(&self, a: &DifferentialForm) -> Result<Vec<(Vec<usize>, Expr)>, CoframeError> {
        crate::forms::same_chart(self.chart(), a.chart())?;
        let n = self.dim();
        let k = a.degree();
        let chart = self.chart().clone();
        let mut minors = Minors::new(&self.inverse);
        let mut out = Vec::new();
        for idx in multi_indices(n, k) {
            let mut terms = Vec::new();
            for (j, c) in a.terms() {
                let m = minors.det(j, &idx);
                if !m.is_zero() {
                    terms.push(c.clone() * m);
                }
            }
            out.push((idx, chart.simplify(&Expr::add_all(terms))?));
        }
        Ok(out)
    }

    /// Rebuild a form from coframe coefficients.
    pub fn recombine(
        &self,
        degree: usize,
        coeffs: &[(Vec<usize>, Expr)],
    ) -> Result<DifferentialForm, CoframeError> {
        let mut acc = DifferentialForm::zero(self.chart().clone(), degree)?;
        for (idx, c) in coeffs {
            let mut w = DifferentialForm::function(self.chart().clone(), c)?;
            for &i in idx {
                w = w.wedge(&self.forms()[i])?;
            }
            acc = acc.add(&w)?;
        }
        Ok(acc)
    }

    /// `C^k_ij` with `d theta^k = sum_{i<j} C^k_ij theta^i ^ theta^j`.
    pub fn structure_functions(&self) -> Result<StructureTable, CoframeError> {
        let mut t = StructureTable::zero(self.dim());
        if self.dim() < 2 {
            // no 2-forms, so every d theta vanishes
            return Ok(t);
        }
        for (k, w) in self.forms().iter().enumerate() {
            let dw = w.exterior_derivative()?;
            for (idx, c) in self.expand(&dw)? {
                t.set(k, idx[0], idx[1], c);
            }
        }
        Ok(t)
    }

    /// `df = sum_k (df/d theta^k) theta^k`.
    pub fn coframe_derivative(&self, f: &Expr) -> Result<Vec<Expr>, CoframeError> {
        let grad: Vec<Expr> = self.chart().coords().iter().map(|x| f.diff(x)).collect();
        self.coframe_derivative_from_gradient(&grad)
    }

    fn coframe_derivative_from_gradient(&self, grad: &[Expr]) -> Result<Vec<Expr>, CoframeError> {
        let n = self.dim();
        (0..n)
            .map(|k| {
                let terms = (0..n)
                    .filter(|&a| !grad[a].is_zero() && !self.inverse[a][k].is_zero())
                    .map(|a| grad[a].clone() * self.inverse[a][k].clone())
                    .collect();
                Ok(self.chart().simplify(&Expr::add_all(terms))?)
            })
            .collect()
    }
}

/// Options for building an invariant chain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChainOptions {
    pub max_order: usize,
    /// Points used for rank statistics and duplicate detection.
    pub samples: usize,
    pub rank: RankTolerance,
    pub seed: u64,
}

impl Default for ChainOptions {
    fn default() -> Self {
        ChainOptions {
            max_order: 4,
            samples: 16,
            rank: RankTolerance::default(),
            seed: crate::DEFAULT_SEED,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ChainMember {
    pub name: String,
    pub generation: usize,
    pub expr: Expr,
    /// Earlier member with the same values, if this one is a duplicate.
    pub alias_of: Option<usize>,
    gradient: Vec<Expr>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenerationStats {
    pub order: usize,
    /// Members of `F_order` (cumulative, aliases included).
    pub members: usize,
    /// Jacobian rank of `F_order` at each sample point.
    pub ranks: Vec<usize>,
}

/// `F_0 ⊂ F_1 ⊂ ...`: structure functions and their iterated coframe
/// derivatives. Members keep a canonical order and names (`C^k_ij`, then
/// `C^k_ij;m` for the derivative along `theta^m`, and so on) so that chains
/// of different coframes of the same dimension line up entry by entry.
#[derive(Clone, Debug)]
pub struct InvariantChain {
    coframe: Coframe,
    members: Vec<ChainMember>,
    generation_ends: Vec<usize>,
    stats: Vec<GenerationStats>,
    stabilized_at: Option<usize>,
    samples: Vec<Vec<f64>>,
    fingerprints: Vec<Vec<f64>>,
    options: ChainOptions,
}

impl InvariantChain {
    /// Build generations until the rank stabilizes or `max_order` is reached.
    pub fn build(coframe: &Coframe, options: ChainOptions) -> Result<Self, CoframeError> {
        let samples = coframe.chart().sample(options.samples, options.seed)?;
        let table = coframe.structure_functions()?;
        let mut chain = InvariantChain {
            coframe: coframe.clone(),
            members: Vec::new(),
            generation_ends: Vec::new(),
            stats: Vec::new(),
            stabilized_at: None,
            samples,
            fingerprints: Vec::new(),
            options,
        };
        for (k, i, j) in table.upper_indices() {
            let name = table.entry_name("C", k, i, j);
            chain.push_member(name, 0, table.get(k, i, j).clone(), None)?;
        }
        chain.close_generation()?;
        while chain.stabilized_at.is_none() && chain.order() < options.max_order {
            chain.grow()?;
        }
        Ok(chain)
    }

    /// Make sure generations up to `order` exist.
    pub fn extend_to(&mut self, order: usize) -> Result<(), CoframeError> {
        while self.order() < order {
            self.grow()?;
        }
        Ok(())
    }

    fn push_member(
        &mut self,
        name: String,
        generation: usize,
        expr: Expr,
        alias_hint: Option<usize>,
    ) -> Result<(), CoframeError> {
        let chart = self.coframe.chart().clone();
        if let Some(a) = alias_hint {
            self.members.push(ChainMember {
                name,
                generation,
                expr: self.members[a].expr.clone(),
                alias_of: Some(a),
                gradient: Vec::new(),
            });
            self.fingerprints.push(self.fingerprints[a].clone());
            return Ok(());
        }
        let fp = self
            .samples
            .iter()
            .map(|p| chart.eval(&expr, p))
            .collect::<Result<Vec<_>, _>>()?;
        let dup = self.members.iter().enumerate().position(|(q, m)| {
            m.alias_of.is_none()
                && self.fingerprints[q]
                    .iter()
                    .zip(&fp)
                    .all(|(a, b)| close(*a, *b, 1e-10))
        });
        let member = match dup {
            Some(q) => ChainMember {
                name,
                generation,
                expr: self.members[q].expr.clone(),
                alias_of: Some(q),
                gradient: Vec::new(),
            },
            None => {
                let gradient = chart.coords().iter().map(|x| expr.diff(x)).collect();
                ChainMember {
                    name,
                    generation,
                    expr,
                    alias_of: None,
                    gradient,
                }
            }
        };
        self.members.push(member);
        self.fingerprints.push(fp);
        Ok(())
    }

    fn close_generation(&mut self) -> Result<(), CoframeError> {
        self.generation_ends.push(self.members.len());
        let order = self.generation_ends.len() - 1;
        let ranks = self
            .samples
            .clone()
            .iter()
            .map(|p| self.rank_at(order, p))
            .collect::<Result<Vec<_>, _>>()?;
        if order > 0 && self.stabilized_at.is_none() && self.stats[order - 1].ranks == ranks {
            self.stabilized_at = Some(order - 1);
        }
        self.stats.push(GenerationStats {
            order,
            members: self.members.len(),
            ranks,
        });
        Ok(())
    }

    fn grow(&mut self) -> Result<(), CoframeError> {
        let order = self.order();
        let start = if order == 0 {
            0
        } else {
            self.generation_ends[order - 1]
        };
        let end = self.generation_ends[order];
        let n = self.coframe.dim();
        // Position of each new member, so aliases of parents can be followed.
        let mut derived: HashMap<(usize, usize), usize> = HashMap::new();
        for parent in start..end {
            let (root, derivs) = match self.members[parent].alias_of {
                Some(q) => (q, None),
                None => {
                    let g = self.members[parent].gradient.clone();
                    (
                        parent,
                        Some(self.coframe.coframe_derivative_from_gradient(&g)?),
                    )
                }
            };
            for m in 0..n {
                let name = format!("{};{}", self.members[parent].name, m + 1);
                let idx = self.members.len();
                match &derivs {
                    Some(ds) => self.push_member(name, order + 1, ds[m].clone(), None)?,
                    None => {
                        let target = derived
                            .get(&(root, m))
                            .copied()
                            .or_else(|| self.derivative_position(root, m));
                        match target {
                            Some(t) => self.push_member(name, order + 1, Expr::zero(), Some(t))?,
                            None => {
                                let g = self.members[root].gradient.clone();
                                let ds = self.coframe.coframe_derivative_from_gradient(&g)?;
                                self.push_member(name, order + 1, ds[m].clone(), None)?
                            }
                        }
                    }
                }
                derived.insert((parent, m), idx);
            }
        }
        self.close_generation()
    }

    /// Index of the derivative of member `q` along `theta^m`, if built.
    fn derivative_position(&self, q: usize, m: usize) -> Option<usize> {
        let gen = self.members[q].generation;
        if gen + 1 > self.order() {
            return None;
        }
        let start = if gen == 0 {
            0
        } else {
            self.generation_ends[gen - 1]
        };
        let next_start = self.generation_ends[gen];
        let offset = q - start;
        let pos = next_start + offset * self.coframe.dim() + m;
        (pos < self.members.len()).then_some(pos)
    }

    pub fn coframe(&self) -> &Coframe {
        &self.coframe
    }

    /// Highest generation built.
    pub fn order(&self) -> usize {
        self.generation_ends.len() - 1
    }

    pub fn stabilized_at(&self) -> Option<usize> {
        self.stabilized_at
    }

    pub fn stats(&self) -> &[GenerationStats] {
        &self.stats
    }

    pub fn members(&self) -> &[ChainMember] {
        &self.members
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    pub fn options(&self) -> &ChainOptions {
        &self.options
    }

    /// Members of `F_order`.
    pub fn generation(&self, order: usize) -> &[ChainMember] {
        &self.members[..self.generation_ends[order.min(self.order())]]
    }

    /// Rank of `F_r*` at the sample points (the stabilized rank).
    pub fn rank(&self) -> Option<usize> {
        let r = self.stabilized_at?;
        self.stats[r].ranks.iter().copied().max()
    }

    /// Jacobian of the distinct members of `F_order` at `p`, rows scaled to
    /// unit length so the relative singular-value cut is scale free.
    pub fn jacobian_at(&self, order: usize, p: &[f64]) -> Result<DMatrix<f64>, CoframeError> {
        let rows: Vec<&ChainMember> = self
            .generation(order)
            .iter()
            .filter(|m| m.alias_of.is_none())
            .collect();
        gradient_matrix(
            self.coframe.chart(),
            rows.iter().map(|m| &m.gradient[..]),
            p,
        )
    }

    pub fn rank_at(&self, order: usize, p: &[f64]) -> Result<usize, CoframeError> {
        Ok(numeric_rank(
            &self.jacobian_at(order, p)?,
            self.options.rank,
        ))
    }

    /// Values of every member of `F_order` at `p`, aliases included.
    pub fn signature_at(&self, order: usize, p: &[f64]) -> Result<Vec<f64>, CoframeError> {
        let chart = self.coframe.chart();
        chart.require_inside(p)?;
        let env = chart.env_at(p);
        let mut vals: Vec<f64> = Vec::new();
        for m in self.generation(order) {
            let v = match m.alias_of {
                Some(q) => vals[q],
                None => m.expr.eval(&env)?,
            };
            vals.push(v);
        }
        Ok(vals)
    }

    pub fn names(&self, order: usize) -> Vec<String> {
        self.generation(order)
            .iter()
            .map(|m| m.name.clone())
            .collect()
    }
}

pub(crate) fn gradient_matrix<'a>(
    chart: &Chart,
    rows: impl Iterator<Item = &'a [Expr]>,
    p: &[f64],
) -> Result<DMatrix<f64>, CoframeError> {
    let env = chart.env_at(p);
    let n = chart.dim();
    let mut data: Vec<Vec<f64>> = Vec::new();
    for g in rows {
        let mut row = Vec::with_capacity(n);
        for e in g {
            row.push(e.eval(&env)?);
        }
        let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 && norm.is_finite() {
            row.iter_mut().for_each(|x| *x /= norm);
        }
        data.push(row);
    }
    Ok(DMatrix::from_fn(data.len(), n, |i, j| data[i][j]))
}

/// Rank at requested points and whether it is locally constant there.
#[derive(Clone, Debug, PartialEq)]
pub struct Regularity {
    pub ranks: Vec<usize>,
    pub fully_regular: Vec<bool>,
}

/// How to probe the neighborhood of a point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighborhood {
    pub radius: f64,
    pub points: usize,
    pub seed: u64,
}

impl Default for Neighborhood {
    fn default() -> Self {
        Neighborhood {
            radius: 0.05,
            points: 24,
            seed: crate::DEFAULT_SEED,
        }
    }
}

/// Ranks use `F_r*`, the first generation at which the rank stabilized.
pub fn regularity_and_rank(
    chain: &InvariantChain,
    points: &[Vec<f64>],
    nbhd: Neighborhood,
) -> Result<Regularity, CoframeError> {
    let order = chain
        .stabilized_at()
        .ok_or(CoframeError::NotStabilized(chain.order()))?;
    let chart = chain.coframe().chart();
    let mut ranks = Vec::new();
    let mut regular = Vec::new();
    for p in points {
        chart.require_inside(p)?;
        let r = chain.rank_at(order, p)?;
        let cloud = chart.sample_near(p, nbhd.radius, nbhd.points, nbhd.seed)?;
        let nearby = cloud
            .iter()
            .map(|q| chain.rank_at(order, q))
            .collect::<Result<Vec<_>, _>>()?;
        ranks.push(r);
        regular.push(nearby.iter().all(|&x| x == r));
    }
    Ok(Regularity {
        ranks,
        fully_regular: regular,
    })
}

fn require_regular(
    chain: &InvariantChain,
    p: &[f64],
    nbhd: Neighborhood,
) -> Result<usize, CoframeError> {
    let reg = regularity_and_rank(chain, &[p.to_vec()], nbhd)?;
    if reg.fully_regular[0] {
        Ok(reg.ranks[0])
    } else {
        let order = chain.stabilized_at().unwrap_or(0);
        let chart = chain.coframe().chart();
        let nearby = chart
            .sample_near(p, nbhd.radius, 4, nbhd.seed)?
            .iter()
            .map(|q| chain.rank_at(order, q))
            .collect::<Result<Vec<_>, _>>()?;
        Err(CoframeError::NotRegular {
            point: p.to_vec(),
            rank: reg.ranks[0],
            nearby,
        })
    }
}

/// Greedy choice of `d` independent chain members at `p`: walk `F_r*` in
/// canonical order and keep a member when it raises the rank.
pub fn select_independent_invariants(
    chain: &InvariantChain,
    p: &[f64],
    nbhd: Neighborhood,
) -> Result<Vec<(String, Expr)>, CoframeError> {
    let d = require_regular(chain, p, nbhd)?;
    let order = chain.stabilized_at().expect("checked by regularity");
    let candidates: Vec<&ChainMember> = chain
        .generation(order)
        .iter()
        .filter(|m| m.alias_of.is_none())
        .collect();
    greedy_select(
        chain.coframe().chart(),
        candidates
            .iter()
            .map(|m| (m.name.as_str(), &m.expr, &m.gradient[..])),
        p,
        chain.options.rank,
        d,
    )
}

pub(crate) fn greedy_select<'a>(
    chart: &Chart,
    candidates: impl Iterator<Item = (&'a str, &'a Expr, &'a [Expr])>,
    p: &[f64],
    tol: RankTolerance,
    d: usize,
) -> Result<Vec<(String, Expr)>, CoframeError> {
    let mut kept: Vec<(String, Expr, Vec<Expr>)> = Vec::new();
    let mut rank = 0;
    for (name, e, g) in candidates {
        if rank == d {
            break;
        }
        let trial = gradient_matrix(
            chart,
            kept.iter().map(|k| &k.2[..]).chain(std::iter::once(g)),
            p,
        )?;
        let r = numeric_rank(&trial, tol);
        if r > rank {
            rank = r;
            kept.push((name.to_string(), e.clone(), g.to_vec()));
        }
    }
    Ok(kept.into_iter().map(|(n, e, _)| (n, e)).collect())
}

/// Where the functions `C(h)` and `F(h)` came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    DerivedFromCoframe,
    UserDeclared,
}

/// User-supplied closed forms: invariants `h_a` on the coframe's chart and
/// `C^k_ij`, `F_i^a` as functions on a base chart with coordinates `x_a`.
#[derive(Clone, Debug)]
pub struct ClosedForms {
    pub base: Arc<Chart>,
    pub invariants: Vec<Expr>,
    pub structure: StructureTable,
    /// `anchor[i][a] = F_i^a`.
    pub anchor: Vec<Vec<Expr>>,
}

/// Values of `h`, `C` and `F` at sample points, for inputs without closed forms.
#[derive(Clone, Debug, PartialEq)]
pub struct Tabulation {
    pub invariant_values: Vec<Vec<f64>>,
    /// Per point, `C^k_ij` for `i < j` in `upper_indices` order.
    pub structure_values: Vec<Vec<f64>>,
    /// Per point, `F_i^a` row-major in `i`.
    pub anchor_values: Vec<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub enum CartanFunctions {
    Closed {
        structure: StructureTable,
        anchor: Vec<Vec<Expr>>,
    },
    Tabulated(Tabulation),
}

/// `(n, X, C, F)`: the data of a Cartan realization problem.
#[derive(Clone, Debug)]
pub struct CartanData {
    pub n: usize,
    pub d: usize,
    pub base: Arc<Chart>,
    pub invariant_names: Vec<String>,
    /// The invariants as functions on the coframe's chart, when derived.
    pub invariants: Vec<Expr>,
    pub functions: CartanFunctions,
    pub provenance: Provenance,
}

impl CartanData {
    /// User-declared data with closed forms on `base`.
    pub fn declared(base: Arc<Chart>, structure: StructureTable, anchor: Vec<Vec<Expr>>) -> Self {
        CartanData {
            n: structure.dim(),
            d: base.dim(),
            invariant_names: base.coords().iter().map(|c| c.to_string()).collect(),
            base,
            invariants: Vec::new(),
            functions: CartanFunctions::Closed { structure, anchor },
            provenance: Provenance::UserDeclared,
        }
    }
}

/// Options for [`derive_cartan_data`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DeriveOptions {
    pub chain: ChainOptions,
    pub nbhd: Neighborhood,
    pub sampling: Sampling,
}

/// Nearest rational with denominator at most 64, if within `1e-9`.
pub fn recognize_rational(v: f64) -> Option<BigRational> {
    if !v.is_finite() {
        return None;
    }
    for den in 1..=64i64 {
        let num = (v * den as f64).round();
        if (num / den as f64 - v).abs() <= 1e-9 * (1.0 + v.abs()) && num.abs() < 1e15 {
            return Some(BigRational::new(
                BigInt::from(num as i64),
                BigInt::from(den),
            ));
        }
    }
    None
}

fn constant_expr(v: f64) -> Expr {
    match recognize_rational(v) {
        Some(r) => Expr::rational(r),
        None => Expr::float(v),
    }
}

/// Build the Cartan data of a coframe near a fully regular point `p`.
///
/// With closed forms, each supplied function is checked against the coframe
/// by sampling. Without them, constancy of `C` and `F` on the level sets of
/// the selected invariants is checked through Jacobian ranks and values are
/// tabulated; for `d = 0` the constants are returned exactly.
pub fn derive_cartan_data(
    coframe: &Coframe,
    p: &[f64],
    closed: Option<&ClosedForms>,
    opts: DeriveOptions,
) -> Result<CartanData, CoframeError> {
    let mut chain = InvariantChain::build(coframe, opts.chain)?;
    let order = chain
        .stabilized_at()
        .ok_or(CoframeError::NotStabilized(chain.order()))?;
    let d = require_regular(&chain, p, opts.nbhd)?;
    chain.extend_to(order + 1)?;
    let table = coframe.structure_functions()?;
    let chart = coframe.chart().clone();
    let n = coframe.dim();

    if let Some(cf) = closed {
        return verify_closed_forms(&chain, coframe, &table, cf, d, order, &opts);
    }

    let selected = select_independent_invariants(&chain, p, opts.nbhd)?;
    let names: Vec<String> = selected.iter().map(|s| s.0.clone()).collect();
    let hs: Vec<Expr> = selected.iter().map(|s| s.1.clone()).collect();
    let h_grads: Vec<Vec<Expr>> = hs
        .iter()
        .map(|h| chart.coords().iter().map(|x| h.diff(x)).collect())
        .collect();
    let anchor: Vec<Vec<Expr>> = {
        let per_h: Vec<Vec<Expr>> = hs
            .iter()
            .map(|h| coframe.coframe_derivative(h))
            .collect::<Result<_, _>>()?;
        (0..n)
            .map(|i| per_h.iter().map(|row| row[i].clone()).collect())
            .collect()
    };

    if d == 0 {
        let mut structure = StructureTable::zero(n);
        for (k, i, j) in table.upper_indices() {
            let v = chart.eval(table.get(k, i, j), p)?;
            structure.set(k, i, j, constant_expr(v));
        }
        let base = Arc::new(Chart::new("point", &[])?);
        return Ok(CartanData {
            n,
            d,
            base,
            invariant_names: names,
            invariants: hs,
            functions: CartanFunctions::Closed {
                structure,
                anchor: vec![Vec::new(); n],
            },
            provenance: Provenance::DerivedFromCoframe,
        });
    }

    let cloud = chart.sample_near(p, opts.nbhd.radius, opts.nbhd.points, opts.nbhd.seed)?;
    let check = |label: String, g: &Expr| -> Result<(), CoframeError> {
        let gg: Vec<Expr> = chart.coords().iter().map(|x| g.diff(x)).collect();
        for q in &cloud {
            let m = gradient_matrix(
                &chart,
                h_grads
                    .iter()
                    .map(|r| &r[..])
                    .chain(std::iter::once(&gg[..])),
                q,
            )?;
            if numeric_rank(&m, opts.chain.rank) > d {
                return Err(CoframeError::NotInvariant(label));
            }
        }
        Ok(())
    };
    for (k, i, j) in table.upper_indices() {
        check(table.entry_name("C", k, i, j), table.get(k, i, j))?;
    }
    for (i, row) in anchor.iter().enumerate() {
        for (a, f) in row.iter().enumerate() {
            check(format!("F_{}^{}", i + 1, a + 1), f)?;
        }
    }
    let mut tab = Tabulation {
        invariant_values: Vec::new(),
        structure_values: Vec::new(),
        anchor_values: Vec::new(),
    };
    for q in &cloud {
        let env = chart.env_at(q);
        tab.invariant_values
            .push(hs.iter().map(|h| h.eval(&env)).collect::<Result<_, _>>()?);
        tab.structure_values.push(
            table
                .upper_indices()
                .iter()
                .map(|&(k, i, j)| table.get(k, i, j).eval(&env))
                .collect::<Result<_, _>>()?,
        );
        tab.anchor_values.push(
            anchor
                .iter()
                .flatten()
                .map(|f| f.eval(&env))
                .collect::<Result<_, _>>()?,
        );
    }
    let mut base = Chart::new("X", &[])?;
    for (a, name) in names.iter().enumerate() {
        let vals: Vec<f64> = tab.invariant_values.iter().map(|v| v[a]).collect();
        let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let pad = 1e-9 * (1.0 + lo.abs().max(hi.abs()));
        base.push_coordinate(&format!("x{}", a + 1), lo - pad, hi + pad)
            .map_err(|_| CoframeError::NotInvariant(name.clone()))?;
    }
    Ok(CartanData {
        n,
        d,
        base: Arc::new(base),
        invariant_names: names,
        invariants: hs,
        functions: CartanFunctions::Tabulated(tab),
        provenance: Provenance::DerivedFromCoframe,
    })
}

/// Substitute base coordinates by invariant expressions.
pub fn compose(e: &Expr, base: &Chart, invariants: &[Expr]) -> Expr {
    let coords = base.coords();
    e.substitute(&|s: &str| {
        coords
            .iter()
            .position(|c| &**c == s)
            .map(|i| invariants[i].clone())
    })
}

/// The chart `m` with the functions and parameters of `base` visible. On a
/// name clash the definitions of `m` win.
pub fn chart_with_context(m: &Chart, base: &Chart) -> Chart {
    let mut c = m
        .clone()
        .with_bindings(m.bindings().merged(base.bindings()));
    for (name, v) in base.params() {
        if !m.params().iter().any(|(n, _)| n == name) {
            c.set_param(name, *v);
        }
    }
    c
}

fn verify_closed_forms(
    chain: &InvariantChain,
    coframe: &Coframe,
    table: &StructureTable,
    cf: &ClosedForms,
    d: usize,
    order: usize,
    opts: &DeriveOptions,
) -> Result<CartanData, CoframeError> {
    let n = coframe.dim();
    if cf.invariants.len() != d || cf.base.dim() != d {
        return Err(CoframeError::InvariantCount {
            found: cf.invariants.len(),
            rank: d,
        });
    }
    let chart = Arc::new(chart_with_context(coframe.chart(), &cf.base));
    let s = &opts.sampling;

    // The invariants must be functions of the chain and independent.
    let h_grads: Vec<Vec<Expr>> = cf
        .invariants
        .iter()
        .map(|h| chart.coords().iter().map(|x| h.diff(x)).collect())
        .collect();
    for q in chain.samples() {
        let hm = gradient_matrix(&chart, h_grads.iter().map(|r| &r[..]), q)?;
        if numeric_rank(&hm, opts.chain.rank) != d {
            return Err(CoframeError::ClosedFormMismatch(
                "independence of the declared invariants".into(),
            ));
        }
        let rows: Vec<&[Expr]> = chain
            .generation(order)
            .iter()
            .filter(|m| m.alias_of.is_none())
            .map(|m| &m.gradient[..])
            .chain(h_grads.iter().map(|r| &r[..]))
            .collect();
        let all = gradient_matrix(&chart, rows.into_iter(), q)?;
        if numeric_rank(&all, opts.chain.rank) != chain.rank_at(order, q)? {
            return Err(CoframeError::ClosedFormMismatch(
                "declared invariants are not functions of the invariant chain".into(),
            ));
        }
    }
    for (k, i, j) in table.upper_indices() {
        let composed = compose(cf.structure.get(k, i, j), &cf.base, &cf.invariants);
        if !probably_equal(table.get(k, i, j), &composed, &chart, s)? {
            return Err(CoframeError::ClosedFormMismatch(
                table.entry_name("C", k, i, j),
            ));
        }
    }
    for (a, h) in cf.invariants.iter().enumerate() {
        let dh = coframe.coframe_derivative(h)?;
        for (i, dhi) in dh.iter().enumerate() {
            let composed = compose(&cf.anchor[i][a], &cf.base, &cf.invariants);
            if !probably_equal(dhi, &composed, &chart, s)? {
                return Err(CoframeError::ClosedFormMismatch(format!(
                    "F_{}^{} (component `{}`)",
                    i + 1,
                    a + 1,
                    cf.base.coords()[a]
                )));
            }
        }
    }
    Ok(CartanData {
        n,
        d,
        base: cf.base.clone(),
        invariant_names: cf.base.coords().iter().map(|c| c.to_string()).collect(),
        invariants: cf.invariants.clone(),
        functions: CartanFunctions::Closed {
            structure: cf.structure.clone(),
            anchor: cf.anchor.clone(),
        },
        provenance: Provenance::DerivedFromCoframe,
    })
}

/// Values of all chain members of `F_order` at `p`.
pub fn signature(
    coframe: &Coframe,
    p: &[f64],
    order: usize,
    options: ChainOptions,
) -> Result<Vec<f64>, CoframeError> {
    let mut chain = InvariantChain::build(
        coframe,
        ChainOptions {
            max_order: order,
            ..options
        },
    )?;
    chain.extend_to(order)?;
    chain.signature_at(order, p)
}
