//! Trivialized Lie algebroids `X x R^n`: structure equations, orbits and
//! isotropy, the differential `d_A` and the modular cocycle.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::coframe::{CartanData, CartanFunctions, CoframeError, StructureTable};
use crate::forms::{multi_indices, FormError, MultiIndex, VectorField};
use crate::linalg::{kernel, numeric_rank, symmetric_eigenvalues, RankTolerance};
use crate::symbolic::{normalize, Chart, ChartError, EvalError, Expr, Sampling};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AlgebroidError {
    #[error(transparent)]
    Chart(#[from] ChartError),
    #[error(transparent)]
    Form(#[from] FormError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Coframe(#[from] CoframeError),
    #[error("anchor has {found} components per section, base has dimension {dim}")]
    AnchorShape { found: usize, dim: usize },
    #[error("expected {expected} sections, found {found}")]
    FiberDimension { expected: usize, found: usize },
    #[error(
        "structure equations fail: bracket residual {eq5:e}, Jacobi residual {eq6:e} (tol {tol:e})"
    )]
    AxiomViolation { eq5: f64, eq6: f64, tol: f64 },
    #[error("the bracket does not close on the anchor kernel (residual {0:e})")]
    IsotropyNotClosed(f64),
    #[error("isotropy classification needs dimension 3, got {0}")]
    NotThreeDimensional(usize),
    #[error("tabulated Cartan data with d = {0} needs closed forms to build an algebroid")]
    Tabulated(usize),
    #[error("form degree {degree} is out of range for fiber dimension {n}")]
    Degree { degree: usize, n: usize },
}

/// Base chart `X`, fiber `R^n`, bracket `[e_i, e_j] = sum_k B^k_ij e_k` and
/// anchor `e_i -> sum_a F_i^a d/dx_a`.
#[derive(Clone, Debug)]
pub struct TrivializedAlgebroid {
    name: Arc<str>,
    base: Arc<Chart>,
    bracket: StructureTable,
    anchor: Vec<Vec<Expr>>,
}

/// Residuals of the two structure equations over a sample set.
#[derive(Clone, Debug, PartialEq)]
pub struct StructureReport {
    /// `max |[F_i, F_j] - sum_k B^k_ij F_k|`.
    pub bracket_residual: f64,
    /// `max |F_j(B^i_kl) + cyc - sum_m (B^m_kl B^i_mj + cyc)|`.
    pub jacobi_residual: f64,
    pub tol: f64,
    pub samples: usize,
    pub pass: bool,
}

impl TrivializedAlgebroid {
    pub fn new(
        name: &str,
        base: Arc<Chart>,
        bracket: StructureTable,
        anchor: Vec<Vec<Expr>>,
    ) -> Result<Self, AlgebroidError> {
        let n = bracket.dim();
        if anchor.len() != n {
            return Err(AlgebroidError::FiberDimension {
                expected: n,
                found: anchor.len(),
            });
        }
        let mut simplified = Vec::with_capacity(n);
        for row in anchor {
            if row.len() != base.dim() {
                return Err(AlgebroidError::AnchorShape {
                    found: row.len(),
                    dim: base.dim(),
                });
            }
            simplified.push(
                row.iter()
                    .map(|e| base.simplify(e))
                    .collect::<Result<Vec<_>, _>>()?,
            );
        }
        let mut b = StructureTable::zero(n);
        for (k, i, j) in bracket.upper_indices() {
            b.set(k, i, j, base.simplify(bracket.get(k, i, j))?);
        }
        Ok(TrivializedAlgebroid {
            name: Arc::from(name),
            base,
            bracket: b,
            anchor: simplified,
        })
    }

    /// A Lie algebra: zero-dimensional base, zero anchor.
    pub fn lie_algebra(name: &str, bracket: StructureTable) -> Result<Self, AlgebroidError> {
        let n = bracket.dim();
        let base = Arc::new(Chart::new("point", &[])?);
        Self::new(name, base, bracket, vec![Vec::new(); n])
    }

    /// The classifying algebroid: `B = -C`, anchor `F`. Fails if the
    /// structure equations do not hold within `tol`.
    pub fn from_cartan_data(
        name: &str,
        cd: &CartanData,
        sampling: &Sampling,
        tol: f64,
    ) -> Result<(Self, StructureReport), AlgebroidError> {
        let (structure, anchor) = match &cd.functions {
            CartanFunctions::Closed { structure, anchor } => (structure, anchor),
            CartanFunctions::Tabulated(_) => return Err(AlgebroidError::Tabulated(cd.d)),
        };
        let bracket = structure.map(|c| normalize(&-c.clone()));
        let a = Self::new(name, cd.base.clone(), bracket, anchor.clone())?;
        let report = a.check_structure_equations(sampling, tol)?;
        if !report.pass {
            return Err(AlgebroidError::AxiomViolation {
                eq5: report.bracket_residual,
                eq6: report.jacobi_residual,
                tol,
            });
        }
        Ok((a, report))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn base(&self) -> &Arc<Chart> {
        &self.base
    }

    /// Fiber dimension `n`.
    pub fn rank(&self) -> usize {
        self.bracket.dim()
    }

    pub fn bracket(&self) -> &StructureTable {
        &self.bracket
    }

    pub fn anchor(&self) -> &[Vec<Expr>] {
        &self.anchor
    }

    /// Same data over a base with different bindings or parameters.
    pub fn with_base(&self, base: Arc<Chart>) -> Result<Self, AlgebroidError> {
        Self::new(&self.name, base, self.bracket.clone(), self.anchor.clone())
    }

    pub fn anchor_field(&self, i: usize) -> Result<VectorField, AlgebroidError> {
        Ok(VectorField::new(self.base.clone(), self.anchor[i].clone())?)
    }

    /// `F_i(f)`.
    pub fn apply_anchor(&self, i: usize, f: &Expr) -> Result<Expr, AlgebroidError> {
        Ok(self.anchor_field(i)?.apply(f)?)
    }

    /// Symbolic residuals of the bracket equation, one per `(i<j, a)`.
    pub fn bracket_equation_residuals(&self) -> Result<Vec<Expr>, AlgebroidError> {
        let n = self.rank();
        let fields = (0..n)
            .map(|i| self.anchor_field(i))
            .collect::<Result<Vec<_>, _>>()?;
        let mut out = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let br = fields[i].lie_bracket(&fields[j])?;
                for a in 0..self.base.dim() {
                    let mut terms = vec![br.components()[a].clone()];
                    for (k, f) in fields.iter().enumerate() {
                        let b = self.bracket.get(k, i, j);
                        if !b.is_zero() {
                            terms.push(-(b.clone() * f.components()[a].clone()));
                        }
                    }
                    out.push(self.base.simplify(&Expr::add_all(terms))?);
                }
            }
        }
        Ok(out)
    }

    /// Symbolic residuals of the Jacobi-type equation, one per `(i, j<k<l)`.
    pub fn jacobi_residuals(&self) -> Result<Vec<Expr>, AlgebroidError> {
        let n = self.rank();
        let b = |k: usize, i: usize, j: usize| self.bracket.get(k, i, j).clone();
        let mut out = Vec::new();
        for i in 0..n {
            for j in 0..n {
                for k in j + 1..n {
                    for l in k + 1..n {
                        let mut terms = vec![
                            self.apply_anchor(j, &b(i, k, l))?,
                            self.apply_anchor(k, &b(i, l, j))?,
                            self.apply_anchor(l, &b(i, j, k))?,
                        ];
                        for m in 0..n {
                            terms.push(-(b(m, k, l) * b(i, m, j)));
                            terms.push(-(b(m, l, j) * b(i, m, k)));
                            terms.push(-(b(m, j, k) * b(i, m, l)));
                        }
                        out.push(self.base.simplify(&Expr::add_all(terms))?);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Maximum residuals of both structure equations at sampled base points.
    pub fn check_structure_equations(
        &self,
        sampling: &Sampling,
        tol: f64,
    ) -> Result<StructureReport, AlgebroidError> {
        let points = self.base.sample(sampling.trials, sampling.seed)?;
        self.check_structure_equations_at(&points, tol)
    }

    pub fn check_structure_equations_at(
        &self,
        points: &[Vec<f64>],
        tol: f64,
    ) -> Result<StructureReport, AlgebroidError> {
        let eq5 = max_residual(&self.base, &self.bracket_equation_residuals()?, points)?;
        let eq6 = max_residual(&self.base, &self.jacobi_residuals()?, points)?;
        Ok(StructureReport {
            bracket_residual: eq5,
            jacobi_residual: eq6,
            tol,
            samples: points.len(),
            pass: eq5 <= tol && eq6 <= tol,
        })
    }

    /// `d x n` anchor matrix at a base point.
    pub fn anchor_matrix_at(&self, x: &[f64]) -> Result<DMatrix<f64>, AlgebroidError> {
        let env = self.base.env_at(x);
        let d = self.base.dim();
        let n = self.rank();
        let mut m = DMatrix::zeros(d, n);
        for i in 0..n {
            for a in 0..d {
                m[(a, i)] = self.anchor[i][a].eval(&env)?;
            }
        }
        Ok(m)
    }

    /// Bracket constants at a base point, `out[k][i][j]`.
    pub fn bracket_at(&self, x: &[f64]) -> Result<Vec<Vec<Vec<f64>>>, AlgebroidError> {
        let env = self.base.env_at(x);
        let n = self.rank();
        let mut out = vec![vec![vec![0.0; n]; n]; n];
        for (k, plane) in out.iter_mut().enumerate() {
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        plane[i][j] = self.bracket.get(k, i, j).eval(&env)?;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Orbit dimension (anchor rank) and isotropy algebra (anchor kernel).
    pub fn orbit_and_isotropy(
        &self,
        x: &[f64],
        tol: RankTolerance,
        closure_tol: f64,
    ) -> Result<Orbit, AlgebroidError> {
        self.base.require_inside(x)?;
        let n = self.rank();
        let f = self.anchor_matrix_at(x)?;
        let orbit_dim = if self.base.dim() == 0 {
            0
        } else {
            numeric_rank(&f, tol)
        };
        let basis = if self.base.dim() == 0 {
            DMatrix::identity(n, n)
        } else {
            kernel(&f, tol)
        };
        let b = self.bracket_at(x)?;
        let iso = IsotropyAlgebra::from_kernel(x.to_vec(), basis, &b);
        if iso.closure_residual > closure_tol {
            return Err(AlgebroidError::IsotropyNotClosed(iso.closure_residual));
        }
        Ok(Orbit {
            orbit_dim,
            symmetry_dim: n - orbit_dim,
            isotropy: iso,
        })
    }

    /// `d_A` with the Chevalley–Eilenberg sign convention:
    /// `dw(e_0..e_k) = sum_p (-1)^p F_p(w(..^p..)) + sum_{p<q} (-1)^{p+q} w([e_p,e_q], ..^p..^q..)`.
    pub fn differential(&self, w: &AlgebroidForm) -> Result<AlgebroidForm, AlgebroidError> {
        let n = self.rank();
        if w.n != n || w.degree >= n {
            return Err(AlgebroidError::Degree {
                degree: w.degree,
                n,
            });
        }
        let k = w.degree;
        let mut out = AlgebroidForm::zero(n, k + 1);
        for idx in multi_indices(n, k + 1) {
            let mut terms = Vec::new();
            for p in 0..=k {
                let rest: Vec<usize> = remove(&idx, &[p]);
                let v = w.value(&rest);
                if !v.is_zero() {
                    let t = self.apply_anchor(idx[p], &v)?;
                    terms.push(Expr::int(sign(p)) * t);
                }
            }
            for p in 0..=k {
                for q in p + 1..=k {
                    let rest = remove(&idx, &[p, q]);
                    for m in 0..n {
                        let b = self.bracket.get(m, idx[p], idx[q]);
                        if b.is_zero() {
                            continue;
                        }
                        let mut args = vec![m];
                        args.extend(&rest);
                        let v = w.value(&args);
                        if !v.is_zero() {
                            terms.push(Expr::int(sign(p + q)) * b.clone() * v);
                        }
                    }
                }
            }
            out.set(idx, self.base.simplify(&Expr::add_all(terms))?);
        }
        Ok(out)
    }

    /// The modular cocycle for `mu = (e_1 ^ .. ^ e_n) (x) (dx_1 ^ .. ^ dx_d)`:
    /// `c(e_i) = sum_k B^k_ik + div F_i`.
    pub fn modular_cocycle(&self) -> Result<AlgebroidForm, AlgebroidError> {
        self.modular_cocycle_with_density(&Expr::one())
    }

    /// The modular cocycle for `mu` rescaled by a positive function `f`,
    /// computed from the connection directly:
    /// `c(e_i) = sum_k B^k_ik + div(f F_i) / f`.
    pub fn modular_cocycle_with_density(&self, f: &Expr) -> Result<AlgebroidForm, AlgebroidError> {
        let n = self.rank();
        let mut c = AlgebroidForm::zero(n, 1);
        for i in 0..n {
            let mut terms: Vec<Expr> = (0..n).map(|k| self.bracket.get(k, i, k).clone()).collect();
            let coords = self.base.coords();
            let div: Vec<Expr> = coords
                .iter()
                .enumerate()
                .map(|(a, x)| (f.clone() * self.anchor[i][a].clone()).diff(x))
                .collect();
            terms.push(Expr::add_all(div) * f.clone().pow(-1));
            c.set(vec![i], self.base.simplify(&Expr::add_all(terms))?);
        }
        Ok(c)
    }

    /// `d_A log f`, i.e. `e_i -> F_i(f) / f`.
    pub fn log_differential(&self, f: &Expr) -> Result<AlgebroidForm, AlgebroidError> {
        let n = self.rank();
        let mut out = AlgebroidForm::zero(n, 1);
        for i in 0..n {
            let v = self.apply_anchor(i, f)? * f.clone().pow(-1);
            out.set(vec![i], self.base.simplify(&v)?);
        }
        Ok(out)
    }

    /// Largest coefficient of `w` over the given points.
    pub fn max_abs(&self, w: &AlgebroidForm, points: &[Vec<f64>]) -> Result<f64, AlgebroidError> {
        let exprs: Vec<Expr> = w.terms.values().cloned().collect();
        max_residual(&self.base, &exprs, points)
    }
}

fn sign(p: usize) -> i64 {
    if p.is_multiple_of(2) {
        1
    } else {
        -1
    }
}

fn remove(idx: &[usize], positions: &[usize]) -> Vec<usize> {
    idx.iter()
        .enumerate()
        .filter(|(p, _)| !positions.contains(p))
        .map(|(_, &i)| i)
        .collect()
}

fn max_residual(chart: &Chart, exprs: &[Expr], points: &[Vec<f64>]) -> Result<f64, AlgebroidError> {
    let live: Vec<&Expr> = exprs.iter().filter(|e| !e.is_zero()).collect();
    let mut m: f64 = 0.0;
    if live.is_empty() {
        return Ok(0.0);
    }
    for p in points {
        let env = chart.env_at(p);
        for e in &live {
            let v = e.eval(&env)?;
            if !v.is_finite() {
                return Ok(f64::INFINITY);
            }
            m = m.max(v.abs());
        }
    }
    Ok(m)
}

impl fmt::Display for TrivializedAlgebroid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "algebroid `{}` over `{}` of rank {}",
            self.name,
            self.base.name(),
            self.rank()
        )
    }
}

/// A degree-`k` form on the algebroid: coefficients on increasing fiber
/// multi-indices, functions on the base.
#[derive(Clone, Debug, PartialEq)]
pub struct AlgebroidForm {
    n: usize,
    degree: usize,
    terms: BTreeMap<MultiIndex, Expr>,
}

impl AlgebroidForm {
    pub fn zero(n: usize, degree: usize) -> Self {
        AlgebroidForm {
            n,
            degree,
            terms: BTreeMap::new(),
        }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn fiber_dim(&self) -> usize {
        self.n
    }

    /// Set the coefficient of `e^{i_1} ^ .. ^ e^{i_k}`, indices increasing.
    pub fn set(&mut self, idx: MultiIndex, v: Expr) {
        assert_eq!(idx.len(), self.degree);
        if v.is_zero() {
            self.terms.remove(&idx);
        } else {
            self.terms.insert(idx, v);
        }
    }

    pub fn coefficient(&self, idx: &[usize]) -> Expr {
        self.terms.get(idx).cloned().unwrap_or_else(Expr::zero)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, &Expr)> {
        self.terms.iter()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// `w(e_{args[0]}, ..)` for arbitrary (unsorted) arguments.
    pub fn value(&self, args: &[usize]) -> Expr {
        let mut v = args.to_vec();
        let mut swaps = 0;
        for i in 0..v.len() {
            for j in 0..v.len() - 1 - i {
                if v[j] == v[j + 1] {
                    return Expr::zero();
                }
                if v[j] > v[j + 1] {
                    v.swap(j, j + 1);
                    swaps += 1;
                }
            }
        }
        if v.windows(2).any(|w| w[0] == w[1]) {
            return Expr::zero();
        }
        let c = self.coefficient(&v);
        if swaps % 2 == 0 {
            c
        } else {
            -c
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (i, c) in &other.terms {
            let v = normalize(&(out.coefficient(i) - c.clone()));
            out.set(i.clone(), v);
        }
        out
    }
}

/// Anchor rank and the isotropy algebra at a base point.
#[derive(Clone, Debug)]
pub struct Orbit {
    pub orbit_dim: usize,
    /// `n - orbit_dim`.
    pub symmetry_dim: usize,
    pub isotropy: IsotropyAlgebra,
}

#[derive(Clone, Debug)]
pub struct IsotropyAlgebra {
    pub point: Vec<f64>,
    pub dim: usize,
    /// Orthonormal kernel basis as columns (`n x dim`).
    pub basis: DMatrix<f64>,
    /// `structure[c][a][b]`: `[v_a, v_b] = sum_c structure[c][a][b] v_c`.
    pub structure: Vec<Vec<Vec<f64>>>,
    pub killing: DMatrix<f64>,
    /// Distance of brackets of kernel vectors from the kernel.
    pub closure_residual: f64,
}

impl IsotropyAlgebra {
    fn from_kernel(point: Vec<f64>, basis: DMatrix<f64>, b: &[Vec<Vec<f64>>]) -> Self {
        let dim = basis.ncols();
        let n = basis.nrows();
        let mut structure = vec![vec![vec![0.0; dim]; dim]; dim];
        let mut closure: f64 = 0.0;
        for a in 0..dim {
            for c in 0..dim {
                let mut w = DVector::zeros(n);
                for k in 0..n {
                    let mut s = 0.0;
                    for i in 0..n {
                        for j in 0..n {
                            s += basis[(i, a)] * basis[(j, c)] * b[k][i][j];
                        }
                    }
                    w[k] = s;
                }
                let coeffs = basis.transpose() * &w;
                let resid = (&w - &basis * &coeffs).norm();
                closure = closure.max(resid);
                for (e, v) in coeffs.iter().enumerate() {
                    structure[e][a][c] = *v;
                }
            }
        }
        let killing = killing_form(&structure);
        IsotropyAlgebra {
            point,
            dim,
            basis,
            structure,
            killing,
            closure_residual: closure,
        }
    }

    /// Build directly from structure constants `structure[c][a][b]`.
    pub fn from_structure_constants(structure: Vec<Vec<Vec<f64>>>) -> Self {
        let dim = structure.len();
        let killing = killing_form(&structure);
        IsotropyAlgebra {
            point: Vec::new(),
            dim,
            basis: DMatrix::identity(dim, dim),
            structure,
            killing,
            closure_residual: 0.0,
        }
    }

    /// Largest Jacobi defect over all triples.
    pub fn jacobi_residual(&self) -> f64 {
        let s = &self.structure;
        let k = self.dim;
        let mut m: f64 = 0.0;
        for a in 0..k {
            for b in 0..k {
                for c in 0..k {
                    for e in 0..k {
                        let mut v = 0.0;
                        for d in 0..k {
                            v += s[d][a][b] * s[e][d][c]
                                + s[d][b][c] * s[e][d][a]
                                + s[d][c][a] * s[e][d][b];
                        }
                        m = m.max(v.abs());
                    }
                }
            }
        }
        m
    }
}

/// `K(a, b) = tr(ad_a ad_b)`.
fn killing_form(s: &[Vec<Vec<f64>>]) -> DMatrix<f64> {
    let k = s.len();
    let ad = |a: usize| DMatrix::from_fn(k, k, |c, b| s[c][a][b]);
    let ads: Vec<DMatrix<f64>> = (0..k).map(ad).collect();
    DMatrix::from_fn(k, k, |a, b| (&ads[a] * &ads[b]).trace())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IsotropyClass {
    So3,
    Sl2,
    Se2,
    Other,
}

impl IsotropyClass {
    pub fn tag(self) -> &'static str {
        match self {
            IsotropyClass::So3 => "so3",
            IsotropyClass::Sl2 => "sl2",
            IsotropyClass::Se2 => "se2",
            IsotropyClass::Other => "other",
        }
    }
}

impl fmt::Display for IsotropyClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Killing-form classification of a 3-dimensional real Lie algebra:
/// negative definite is `so3`, nondegenerate indefinite is `sl2`, and a
/// degenerate form with a 2-dimensional abelian derived algebra is `se2`.
pub fn classify_isotropy_3d(iso: &IsotropyAlgebra) -> Result<IsotropyClass, AlgebroidError> {
    if iso.dim != 3 {
        return Err(AlgebroidError::NotThreeDimensional(iso.dim));
    }
    let eig = symmetric_eigenvalues(&iso.killing);
    let scale = eig.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let cut = 1e-8 * scale.max(1e-300);
    let nondegenerate = scale > 1e-12 && eig.iter().all(|v| v.abs() > cut);
    if nondegenerate {
        return Ok(if eig.iter().all(|v| *v < 0.0) {
            IsotropyClass::So3
        } else {
            IsotropyClass::Sl2
        });
    }
    // Derived algebra: span of all brackets of basis vectors.
    let s = &iso.structure;
    let mut cols = Vec::new();
    for a in 0..3 {
        for b in a + 1..3 {
            cols.push(DVector::from_fn(3, |c, _| s[c][a][b]));
        }
    }
    let m = DMatrix::from_columns(&cols);
    let tol = RankTolerance::default();
    if numeric_rank(&m, tol) != 2 {
        return Ok(IsotropyClass::Other);
    }
    let svd = m.svd(true, false);
    let u = svd.u.expect("requested U");
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let x = u.column(order[0]).into_owned();
    let y = u.column(order[1]).into_owned();
    let mut br = DVector::zeros(3);
    for c in 0..3 {
        let mut v = 0.0;
        for a in 0..3 {
            for b in 0..3 {
                v += x[a] * y[b] * s[c][a][b];
            }
        }
        br[c] = v;
    }
    let bscale = cols.iter().map(|c| c.norm()).fold(0.0, f64::max);
    Ok(if br.norm() <= 1e-8 * bscale.max(1e-300) {
        IsotropyClass::Se2
    } else {
        IsotropyClass::Other
    })
}
