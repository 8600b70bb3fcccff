//! Realizations `(M, theta, h)` of a classifying algebroid, the generalized
//! Maurer–Cartan defect and local equivalence by signatures.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::algebroid::{AlgebroidError, TrivializedAlgebroid};
use crate::coframe::{
    chart_with_context, compose, regularity_and_rank, ChainOptions, ClosedForms, Coframe,
    CoframeError, InvariantChain, Neighborhood, StructureTable,
};
use crate::linalg::{numeric_rank, RankTolerance};
use crate::symbolic::{normalize, Chart, ChartError, EvalError, Expr, Sampling};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RealizationError {
    #[error(transparent)]
    Coframe(#[from] CoframeError),
    #[error(transparent)]
    Algebroid(#[from] AlgebroidError),
    #[error(transparent)]
    Chart(#[from] ChartError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("map has {found} components, target base has dimension {dim}")]
    MapDimension { found: usize, dim: usize },
    #[error("coframe has {found} forms, algebroid has rank {rank}")]
    RankMismatch { found: usize, rank: usize },
    #[error("the map leaves the target domain: h({point:?}) = {image:?}")]
    DomainViolation { point: Vec<f64>, image: Vec<f64> },
}

#[derive(Clone, Debug)]
pub struct Realization {
    name: Arc<str>,
    coframe: Coframe,
    map: Vec<Expr>,
}

impl Realization {
    pub fn new(name: &str, coframe: Coframe, map: Vec<Expr>) -> Self {
        Realization {
            name: Arc::from(name),
            coframe,
            map: map.iter().map(normalize).collect(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn coframe(&self) -> &Coframe {
        &self.coframe
    }

    pub fn map(&self) -> &[Expr] {
        &self.map
    }

    pub fn chart(&self) -> &Arc<Chart> {
        self.coframe.chart()
    }

    fn check_shape(&self, a: &TrivializedAlgebroid) -> Result<(), RealizationError> {
        if self.map.len() != a.base().dim() {
            return Err(RealizationError::MapDimension {
                found: self.map.len(),
                dim: a.base().dim(),
            });
        }
        if self.coframe.dim() != a.rank() {
            return Err(RealizationError::RankMismatch {
                found: self.coframe.dim(),
                rank: a.rank(),
            });
        }
        Ok(())
    }

    /// The closed forms this realization asserts: `h` and `C = -B`, `F`.
    pub fn closed_forms(&self, a: &TrivializedAlgebroid) -> Result<ClosedForms, RealizationError> {
        self.check_shape(a)?;
        let structure: StructureTable = a.bracket().map(|b| normalize(&-b.clone()));
        Ok(ClosedForms {
            base: a.base().clone(),
            invariants: self.map.clone(),
            structure,
            anchor: a.anchor().to_vec(),
        })
    }

    fn image(&self, chart: &Chart, p: &[f64]) -> Result<Vec<f64>, RealizationError> {
        let env = chart.env_at(p);
        Ok(self
            .map
            .iter()
            .map(|h| h.eval(&env))
            .collect::<Result<Vec<_>, _>>()?)
    }
}

impl fmt::Display for Realization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let comps: Vec<String> = self.map.iter().map(|e| e.to_string()).collect();
        write!(f, "realization `{}` via ({})", self.name, comps.join(", "))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RealizationReport {
    /// `max |C^k_ij - (C^k_ij o h)|` with `C = -B`.
    pub structure_residual: f64,
    /// `max |d h_a / d theta^i - F_i^a o h|`.
    pub anchor_residual: f64,
    pub tol: f64,
    pub samples: usize,
    pub pass: bool,
}

/// Sample points of the realization's chart, checking that `h` maps them
/// into the target base.
fn checked_samples(
    a: &TrivializedAlgebroid,
    r: &Realization,
    chart: &Chart,
    sampling: &Sampling,
) -> Result<Vec<Vec<f64>>, RealizationError> {
    let pts = chart.sample(sampling.trials, sampling.seed)?;
    for p in &pts {
        let img = r.image(chart, p)?;
        let inside = img
            .iter()
            .zip(a.base().intervals())
            .all(|(x, (lo, hi))| lo < x && x < hi);
        if !inside {
            return Err(RealizationError::DomainViolation {
                point: p.clone(),
                image: img,
            });
        }
    }
    Ok(pts)
}

fn max_over(
    chart: &Chart,
    pairs: &[(Expr, Expr)],
    pts: &[Vec<f64>],
) -> Result<f64, RealizationError> {
    let mut m: f64 = 0.0;
    for p in pts {
        let env = chart.env_at(p);
        for (x, y) in pairs {
            let v = (x.eval(&env)? - y.eval(&env)?).abs();
            if !v.is_finite() {
                return Ok(f64::INFINITY);
            }
            m = m.max(v);
        }
    }
    Ok(m)
}

/// Verify `d theta^k = sum (C^k_ij o h) theta^i ^ theta^j` and
/// `d h = sum (F_i o h) theta^i` at sampled points.
pub fn check_realization(
    a: &TrivializedAlgebroid,
    r: &Realization,
    sampling: &Sampling,
    tol: f64,
) -> Result<RealizationReport, RealizationError> {
    r.check_shape(a)?;
    let chart = chart_with_context(r.chart(), a.base());
    let pts = checked_samples(a, r, &chart, sampling)?;
    let table = r.coframe.structure_functions()?;
    let mut structure = Vec::new();
    for (k, i, j) in table.upper_indices() {
        let target = compose(&-a.bracket().get(k, i, j).clone(), a.base(), &r.map);
        structure.push((table.get(k, i, j).clone(), target));
    }
    let mut anchor = Vec::new();
    for (ax, h) in r.map.iter().enumerate() {
        let dh = r.coframe.coframe_derivative(h)?;
        for (i, d) in dh.into_iter().enumerate() {
            anchor.push((d, compose(&a.anchor()[i][ax], a.base(), &r.map)));
        }
    }
    let sr = max_over(&chart, &structure, &pts)?;
    let ar = max_over(&chart, &anchor, &pts)?;
    Ok(RealizationReport {
        structure_residual: sr,
        anchor_residual: ar,
        tol,
        samples: pts.len(),
        pass: sr <= tol && ar <= tol,
    })
}

/// Generalized Maurer–Cartan defect of the bundle map `theta` with the
/// trivial connection, evaluated on the dual frame `X_i`:
/// `(d theta + 1/2 [theta, theta])^k (X_i, X_j) = -theta^k([X_i, X_j]) + B^k_ij o h`,
/// together with the anchor compatibility `X_i(h) - F_i o h`.
pub fn mc_defect(
    a: &TrivializedAlgebroid,
    r: &Realization,
    sampling: &Sampling,
) -> Result<f64, RealizationError> {
    r.check_shape(a)?;
    let chart = Arc::new(chart_with_context(r.chart(), a.base()));
    let pts = checked_samples(a, r, &chart, sampling)?;
    let frame = r.coframe.dual_frame()?;
    let forms = r.coframe.forms();
    let n = r.coframe.dim();
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let br = frame[i]
                .lie_bracket(&frame[j])
                .map_err(CoframeError::from)?;
            for (k, w) in forms.iter().enumerate() {
                let lhs = br.contract(w).map_err(CoframeError::from)?;
                let rhs = compose(a.bracket().get(k, i, j), a.base(), &r.map);
                pairs.push((lhs, rhs));
            }
        }
    }
    for (i, x) in frame.iter().enumerate() {
        for (ax, h) in r.map.iter().enumerate() {
            let lhs = x.apply(h).map_err(CoframeError::from)?;
            pairs.push((lhs, compose(&a.anchor()[i][ax], a.base(), &r.map)));
        }
    }
    max_over(&chart, &pairs, &pts)
}

/// Rank of `dh` and the orbit dimension of the target at `h(p)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MapRank {
    pub point: Vec<f64>,
    pub rank: usize,
    pub orbit_dim: usize,
}

pub fn classifying_map_rank(
    a: &TrivializedAlgebroid,
    r: &Realization,
    points: &[Vec<f64>],
    tol: RankTolerance,
) -> Result<Vec<MapRank>, RealizationError> {
    r.check_shape(a)?;
    let chart = chart_with_context(r.chart(), a.base());
    let grads: Vec<Vec<Expr>> = r
        .map
        .iter()
        .map(|h| chart.coords().iter().map(|x| h.diff(x)).collect())
        .collect();
    let mut out = Vec::new();
    for p in points {
        let j = crate::coframe::gradient_matrix(&chart, grads.iter().map(|g| &g[..]), p)?;
        let rank = if r.map.is_empty() {
            0
        } else {
            numeric_rank(&j, tol)
        };
        let img = r.image(&chart, p)?;
        let orbit = a.orbit_and_isotropy(&img, tol, f64::INFINITY)?;
        out.push(MapRank {
            point: p.clone(),
            rank,
            orbit_dim: orbit.orbit_dim,
        });
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Equivalent,
    NotEquivalent,
    Undecided,
}

impl Verdict {
    pub fn tag(self) -> &'static str {
        match self {
            Verdict::Equivalent => "equivalent",
            Verdict::NotEquivalent => "not-equivalent",
            Verdict::Undecided => "undecided",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Equivalence {
    pub verdict: Verdict,
    /// Highest chain generation compared.
    pub order: Option<usize>,
    /// Largest signature difference.
    pub max_difference: f64,
    pub reason: String,
}

impl Equivalence {
    fn undecided(reason: String) -> Self {
        Equivalence {
            verdict: Verdict::Undecided,
            order: None,
            max_difference: f64::NAN,
            reason,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EquivalenceOptions {
    pub chain: ChainOptions,
    pub nbhd: Neighborhood,
    /// Absolute tolerance on signature entries.
    pub tol: f64,
}

impl Default for EquivalenceOptions {
    fn default() -> Self {
        EquivalenceOptions {
            chain: ChainOptions::default(),
            nbhd: Neighborhood::default(),
            tol: 1e-6,
        }
    }
}

/// Local equivalence of `(theta1, p)` and `(theta2, q)` by comparing the
/// invariant signatures through one generation past the later
/// stabilization order.
pub fn equivalence_test(
    theta1: &Coframe,
    p: &[f64],
    theta2: &Coframe,
    q: &[f64],
    opts: EquivalenceOptions,
) -> Result<Equivalence, RealizationError> {
    if theta1.dim() != theta2.dim() {
        return Ok(Equivalence {
            verdict: Verdict::NotEquivalent,
            order: None,
            max_difference: f64::INFINITY,
            reason: "coframes have different dimensions".into(),
        });
    }
    theta1.chart().require_inside(p)?;
    theta2.chart().require_inside(q)?;
    let mut c1 = InvariantChain::build(theta1, opts.chain)?;
    let mut c2 = InvariantChain::build(theta2, opts.chain)?;
    let (Some(r1), Some(r2)) = (c1.stabilized_at(), c2.stabilized_at()) else {
        return Ok(Equivalence::undecided(format!(
            "invariant chain did not stabilize by order {}",
            opts.chain.max_order
        )));
    };
    let reg1 = regularity_and_rank(&c1, &[p.to_vec()], opts.nbhd)?;
    let reg2 = regularity_and_rank(&c2, &[q.to_vec()], opts.nbhd)?;
    if !reg1.fully_regular[0] || !reg2.fully_regular[0] {
        return Ok(Equivalence::undecided(
            "a point is not fully regular".into(),
        ));
    }
    let order = r1.max(r2) + 1;
    c1.extend_to(order)?;
    c2.extend_to(order)?;
    let s1 = c1.signature_at(order, p)?;
    let s2 = c2.signature_at(order, q)?;
    let diff = s1
        .iter()
        .zip(&s2)
        .map(|(a, b)| (a - b).abs())
        .fold(
            0.0f64,
            |m, v| if v.is_nan() { f64::INFINITY } else { m.max(v) },
        );
    let rank_differs = reg1.ranks[0] != reg2.ranks[0];
    let same = !rank_differs && diff <= opts.tol;
    let reason = if rank_differs {
        format!(
            "invariant ranks differ ({} vs {})",
            reg1.ranks[0], reg2.ranks[0]
        )
    } else if same {
        format!("signatures agree through order {order}")
    } else {
        let names = c1.names(order);
        let worst = s1
            .iter()
            .zip(&s2)
            .position(|(a, b)| (a - b).abs() > opts.tol || (a - b).is_nan())
            .unwrap_or(0);
        format!(
            "signatures differ at `{}`: {} vs {}",
            names[worst], s1[worst], s2[worst]
        )
    };
    Ok(Equivalence {
        verdict: if same {
            Verdict::Equivalent
        } else {
            Verdict::NotEquivalent
        },
        order: Some(order),
        max_difference: diff,
        reason,
    })
}
