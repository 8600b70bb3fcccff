//! Path development, pullback residuals, loop monodromy, and numerically
//! integrated function bindings.
//!
//! Development transports a path `gamma` on the source chart into the target
//! chart by solving `phi' = Theta_tgt(phi)^-1 Theta_src(gamma) gamma'` with
//! fixed-step RK4. Everything numeric is generic over [`Real`].

use std::sync::{Arc, RwLock};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::coframe::{Coframe, CoframeError, FormSystem, StructureTable};
use crate::scalar::{abs, max, sqrt, Real};
use crate::symbolic::{Bindings, Chart, Env, EvalError, Expr, NumericFunction};

/// Default RK4 step count.
pub const DEFAULT_STEPS: usize = 2000;

/// Endpoints closer than this count as equal.
const ENDPOINT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlowError {
    #[error(transparent)]
    Coframe(#[from] CoframeError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("development needs {forms} source forms and a {target}-dimensional target")]
    DimensionMismatch { forms: usize, target: usize },
    #[error("path point has {found} coordinates, chart `{chart}` has {expected}")]
    PointDimension {
        chart: String,
        expected: usize,
        found: usize,
    },
    #[error("path leaves chart `{chart}` at parameter {param:.6}: {point:?}")]
    ExitsDomain {
        chart: String,
        param: f64,
        point: Vec<f64>,
    },
    #[error("target coframe matrix is singular at {point:?}")]
    SingularTarget { point: Vec<f64> },
    #[error("path has fewer than two waypoints")]
    TooFewWaypoints,
    #[error("at least 4 steps per segment are required, got {0}")]
    TooFewSteps(usize),
    #[error("loop is not closed: endpoints differ by {0:e}")]
    NotClosed(f64),
    #[error("paths do not share endpoints (gap {0:e})")]
    EndpointMismatch(f64),
    #[error("initial target point {point:?} lies outside chart `{chart}`")]
    BadInitialPoint { chart: String, point: Vec<f64> },
}

/// The geometric part of a path.
#[derive(Clone, Debug, PartialEq)]
pub enum PathShape {
    /// Piecewise linear through the points; each segment gets an equal share
    /// of the steps.
    Waypoints(Vec<Vec<f64>>),
    /// `s -> comps(s)` for `s` in `[0, 1]`.
    Curve { param: Arc<str>, comps: Vec<Expr> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct PathSpec {
    pub shape: PathShape,
    pub steps: usize,
}

impl PathSpec {
    pub fn waypoints(points: Vec<Vec<f64>>) -> Self {
        PathSpec {
            shape: PathShape::Waypoints(points),
            steps: DEFAULT_STEPS,
        }
    }

    pub fn segment(a: &[f64], b: &[f64]) -> Self {
        Self::waypoints(vec![a.to_vec(), b.to_vec()])
    }

    pub fn curve(param: &str, comps: Vec<Expr>) -> Self {
        PathSpec {
            shape: PathShape::Curve {
                param: Arc::from(param),
                comps,
            },
            steps: DEFAULT_STEPS,
        }
    }

    pub fn with_steps(mut self, steps: usize) -> Self {
        self.steps = steps;
        self
    }

    /// Pieces with their own local parameter in `[0, 1]`.
    fn pieces(&self, chart: &Chart) -> Result<Vec<Piece>, FlowError> {
        match &self.shape {
            PathShape::Waypoints(pts) => {
                if pts.len() < 2 {
                    return Err(FlowError::TooFewWaypoints);
                }
                for p in pts {
                    check_len(chart, p.len())?;
                }
                let segs = pts.len() - 1;
                let steps = self.steps.div_ceil(segs);
                if steps < 4 {
                    return Err(FlowError::TooFewSteps(steps));
                }
                Ok(pts
                    .windows(2)
                    .map(|w| Piece::Line {
                        a: w[0].clone(),
                        b: w[1].clone(),
                        steps,
                    })
                    .collect())
            }
            PathShape::Curve { param, comps } => {
                check_len(chart, comps.len())?;
                if self.steps < 4 {
                    return Err(FlowError::TooFewSteps(self.steps));
                }
                let velocity = comps.iter().map(|c| c.diff(param)).collect();
                Ok(vec![Piece::Curve {
                    param: param.clone(),
                    comps: comps.clone(),
                    velocity,
                    steps: self.steps,
                }])
            }
        }
    }

    /// Start and end point of the path.
    pub fn endpoints(&self, chart: &Chart) -> Result<(Vec<f64>, Vec<f64>), FlowError> {
        let pieces = self.pieces(chart)?;
        let first = pieces.first().expect("at least one piece");
        let last = pieces.last().expect("at least one piece");
        let a: Vec<f64> = first.point::<f64>(chart, 0.0)?;
        let b: Vec<f64> = last.point::<f64>(chart, 1.0)?;
        Ok((a, b))
    }
}

fn check_len(chart: &Chart, found: usize) -> Result<(), FlowError> {
    if found != chart.dim() {
        return Err(FlowError::PointDimension {
            chart: chart.name().to_string(),
            expected: chart.dim(),
            found,
        });
    }
    Ok(())
}

enum Piece {
    Line {
        a: Vec<f64>,
        b: Vec<f64>,
        steps: usize,
    },
    Curve {
        param: Arc<str>,
        comps: Vec<Expr>,
        velocity: Vec<Expr>,
        steps: usize,
    },
}

impl Piece {
    fn steps(&self) -> usize {
        match self {
            Piece::Line { steps, .. } | Piece::Curve { steps, .. } => *steps,
        }
    }

    fn point<T: Real>(&self, chart: &Chart, s: T) -> Result<Vec<T>, FlowError> {
        match self {
            Piece::Line { a, b, .. } => Ok(a
                .iter()
                .zip(b)
                .map(|(x, y)| {
                    let x = T::from_f64_lossy(*x);
                    x + s * (T::from_f64_lossy(*y) - x)
                })
                .collect()),
            Piece::Curve { param, comps, .. } => eval_curve(chart, param, comps, s),
        }
    }

    fn velocity<T: Real>(&self, chart: &Chart, s: T) -> Result<Vec<T>, FlowError> {
        match self {
            Piece::Line { a, b, .. } => Ok(a
                .iter()
                .zip(b)
                .map(|(x, y)| T::from_f64_lossy(y - x))
                .collect()),
            Piece::Curve {
                param, velocity, ..
            } => eval_curve(chart, param, velocity, s),
        }
    }
}

fn eval_curve<T: Real>(
    chart: &Chart,
    param: &str,
    comps: &[Expr],
    s: T,
) -> Result<Vec<T>, FlowError> {
    let env = chart.env_in::<T>(&[]).with(param, s);
    comps
        .iter()
        .map(|c| c.eval(&env).map_err(FlowError::from))
        .collect()
}

/// One developed piece of a path: nodes at `s = i h`.
#[derive(Clone, Debug, PartialEq)]
pub struct DevelopedSegment<T> {
    pub h: T,
    pub gamma: Vec<Vec<T>>,
    pub velocity: Vec<Vec<T>>,
    pub image: Vec<Vec<T>>,
}

/// Discrete image of a path under development.
#[derive(Clone, Debug, PartialEq)]
pub struct Development<T> {
    pub segments: Vec<DevelopedSegment<T>>,
    pub end: Vec<T>,
}

impl<T: Real> Development<T> {
    /// All image nodes in order, shared segment endpoints repeated.
    pub fn image(&self) -> impl Iterator<Item = &Vec<T>> {
        self.segments.iter().flat_map(|s| s.image.iter())
    }
}

fn matrix_in<T: Real>(
    chart: &Chart,
    rows: &[Vec<Expr>],
    point: &[T],
) -> Result<DMatrix<T>, EvalError> {
    let env = chart.env_in(point);
    let mut out = DMatrix::zeros(rows.len(), chart.dim());
    for (k, row) in rows.iter().enumerate() {
        for (a, e) in row.iter().enumerate() {
            out[(k, a)] = e.eval(&env)?;
        }
    }
    Ok(out)
}

fn to_f64<T: Real>(p: &[T]) -> Vec<f64> {
    p.iter().map(|x| x.to_f64_lossy()).collect()
}

fn norm<T: Real>(v: &[T]) -> T {
    sqrt(v.iter().fold(T::zero(), |acc, x| acc + *x * *x))
}

struct Developer<'a> {
    src: &'a FormSystem,
    tgt: &'a Coframe,
}

impl Developer<'_> {
    fn inside<T: Real>(&self, chart: &Chart, s: T, p: &[T]) -> Result<(), FlowError> {
        let q = to_f64(p);
        if chart.contains(&q) {
            Ok(())
        } else {
            Err(FlowError::ExitsDomain {
                chart: chart.name().to_string(),
                param: s.to_f64_lossy(),
                point: q,
            })
        }
    }

    /// `Theta_src(gamma) gamma'` at a local parameter.
    fn drive<T: Real>(&self, piece: &Piece, s: T) -> Result<DVector<T>, FlowError> {
        let chart = self.src.chart();
        let g = piece.point(chart, s)?;
        self.inside(chart, s, &g)?;
        let v = piece.velocity(chart, s)?;
        let m = matrix_in(chart, self.src.matrix(), &g)?;
        Ok(m * DVector::from_vec(v))
    }

    fn rhs<T: Real>(&self, piece: &Piece, s: T, phi: &[T]) -> Result<DVector<T>, FlowError> {
        let chart = self.tgt.chart();
        self.inside(chart, s, phi)?;
        let m = matrix_in(chart, self.tgt.system().matrix(), phi)?;
        let row_scale = (0..m.nrows()).fold(T::one(), |acc, r| acc * m.row(r).norm());
        let lu = m.lu();
        let det = lu.determinant();
        if !(abs(det) > T::from_f64_lossy(1e-12) * row_scale) {
            return Err(FlowError::SingularTarget { point: to_f64(phi) });
        }
        let b = self.drive(piece, s)?;
        lu.solve(&b)
            .ok_or_else(|| FlowError::SingularTarget { point: to_f64(phi) })
    }

    fn develop<T: Real>(&self, path: &PathSpec, q0: &[T]) -> Result<Development<T>, FlowError> {
        let src_chart = self.src.chart();
        let pieces = path.pieces(src_chart)?;
        let tgt_chart = self.tgt.chart();
        if !tgt_chart.contains(&to_f64(q0)) || q0.len() != tgt_chart.dim() {
            return Err(FlowError::BadInitialPoint {
                chart: tgt_chart.name().to_string(),
                point: to_f64(q0),
            });
        }
        let mut phi = DVector::from_column_slice(q0);
        let mut segments = Vec::with_capacity(pieces.len());
        let half = T::from_f64_lossy(0.5);
        let sixth = T::one() / T::from_f64_lossy(6.0);
        for piece in &pieces {
            let n = piece.steps();
            let h = T::one() / T::from_usize(n).expect("step count");
            let mut seg = DevelopedSegment {
                h,
                gamma: Vec::with_capacity(n + 1),
                velocity: Vec::with_capacity(n + 1),
                image: Vec::with_capacity(n + 1),
            };
            for i in 0..=n {
                let s = T::from_usize(i).expect("index") * h;
                let g = piece.point(src_chart, s)?;
                self.inside(src_chart, s, &g)?;
                seg.gamma.push(g);
                seg.velocity.push(piece.velocity(src_chart, s)?);
                seg.image.push(phi.iter().copied().collect());
                if i == n {
                    break;
                }
                let k1 = self.rhs(piece, s, phi.as_slice())?;
                let y2 = &phi + &k1 * (h * half);
                let k2 = self.rhs(piece, s + h * half, y2.as_slice())?;
                let y3 = &phi + &k2 * (h * half);
                let k3 = self.rhs(piece, s + h * half, y3.as_slice())?;
                let y4 = &phi + &k3 * h;
                let k4 = self.rhs(piece, s + h, y4.as_slice())?;
                phi += (k1 + k2 * T::from_f64_lossy(2.0) + k3 * T::from_f64_lossy(2.0) + k4)
                    * (h * sixth);
            }
            self.inside(tgt_chart, T::one(), phi.as_slice())?;
            segments.push(seg);
        }
        Ok(Development {
            segments,
            end: phi.iter().copied().collect(),
        })
    }
}

fn check_shapes(src: &FormSystem, tgt: &Coframe) -> Result<(), FlowError> {
    if src.len() != tgt.dim() {
        return Err(FlowError::DimensionMismatch {
            forms: src.len(),
            target: tgt.dim(),
        });
    }
    Ok(())
}

/// Develop `path` (starting at `p0 = path(0)`) from the source forms into
/// the target coframe starting at `q0`.
///
/// The source may be any system of `m` one-forms as long as the target is
/// `m`-dimensional; a full coframe on both sides is the equivalence case.
pub fn develop_along_path<T: Real>(
    src: &FormSystem,
    tgt: &Coframe,
    q0: &[T],
    path: &PathSpec,
) -> Result<Development<T>, FlowError> {
    check_shapes(src, tgt)?;
    Developer { src, tgt }.develop(path, q0)
}

/// Fourth-order derivative estimate at node `i` of equally spaced samples.
fn stencil<T: Real>(f: &[Vec<T>], i: usize, h: T) -> Vec<T> {
    let n = f.len() - 1;
    let c = |x: f64| T::from_f64_lossy(x);
    let (idx, w, sign): ([usize; 5], [f64; 5], T) = if i >= 2 && i + 2 <= n {
        (
            [i - 2, i - 1, i, i + 1, i + 2],
            [1.0, -8.0, 0.0, 8.0, -1.0],
            T::one(),
        )
    } else if i == 0 {
        ([0, 1, 2, 3, 4], [-25.0, 48.0, -36.0, 16.0, -3.0], T::one())
    } else if i == 1 {
        ([0, 1, 2, 3, 4], [-3.0, -10.0, 18.0, -6.0, 1.0], T::one())
    } else if i == n {
        (
            [n, n - 1, n - 2, n - 3, n - 4],
            [-25.0, 48.0, -36.0, 16.0, -3.0],
            -T::one(),
        )
    } else {
        (
            [n, n - 1, n - 2, n - 3, n - 4],
            [-3.0, -10.0, 18.0, -6.0, 1.0],
            -T::one(),
        )
    };
    let dim = f[0].len();
    let scale = sign / (c(12.0) * h);
    (0..dim)
        .map(|a| {
            idx.iter()
                .zip(w)
                .fold(T::zero(), |acc, (&j, wj)| acc + c(wj) * f[j][a])
                * scale
        })
        .collect()
}

/// `max ||Theta(gamma) gamma' - Theta_tgt(phi) phi'|| / ||gamma'||` over the
/// nodes, with `phi'` from fourth-order differences of the discrete image.
pub fn velocity_residual<T: Real>(
    src: &FormSystem,
    tgt: &Coframe,
    dev: &Development<T>,
) -> Result<T, FlowError> {
    check_shapes(src, tgt)?;
    let mut worst = T::zero();
    let floor = T::from_f64_lossy(1e-12);
    for seg in &dev.segments {
        for i in 0..seg.image.len() {
            let speed = norm(&seg.velocity[i]);
            if speed <= floor {
                continue;
            }
            let a = matrix_in(src.chart(), src.matrix(), &seg.gamma[i])?
                * DVector::from_column_slice(&seg.velocity[i]);
            let dphi = stencil(&seg.image, i, seg.h);
            let b = matrix_in(tgt.chart(), tgt.system().matrix(), &seg.image[i])?
                * DVector::from_vec(dphi);
            worst = max(worst, (a - b).norm() / speed);
        }
    }
    Ok(worst)
}

/// Largest difference between the structure functions of the two coframes
/// at corresponding nodes; zero along any genuine equivalence.
pub fn structure_transport_defect<T: Real>(
    src: &Coframe,
    tgt: &Coframe,
    dev: &Development<T>,
) -> Result<T, FlowError> {
    if src.dim() != tgt.dim() {
        return Err(FlowError::DimensionMismatch {
            forms: src.dim(),
            target: tgt.dim(),
        });
    }
    let c_src = src.structure_functions()?;
    let c_tgt = tgt.structure_functions()?;
    let mut worst = T::zero();
    for seg in &dev.segments {
        for (g, p) in seg.gamma.iter().zip(&seg.image) {
            let a = table_at(src.chart(), &c_src, g)?;
            let b = table_at(tgt.chart(), &c_tgt, p)?;
            for (x, y) in a.iter().zip(&b) {
                worst = max(worst, abs(*x - *y));
            }
        }
    }
    Ok(worst)
}

fn table_at<T: Real>(chart: &Chart, c: &StructureTable, p: &[T]) -> Result<Vec<T>, EvalError> {
    let env: Env<'_, T> = chart.env_in(p);
    c.upper_indices()
        .into_iter()
        .map(|(k, i, j)| c.get(k, i, j).eval(&env))
        .collect()
}

/// How far the developed map is from pulling the target coframe back to the
/// source: the velocity residual, or the structure-function mismatch when
/// that is larger. The velocity part vanishes by construction up to
/// discretization error; the structure part detects coframes that cannot be
/// equivalent at all.
pub fn pullback_residual<T: Real>(
    src: &Coframe,
    tgt: &Coframe,
    dev: &Development<T>,
) -> Result<T, FlowError> {
    let v = velocity_residual(src.system(), tgt, dev)?;
    let s = structure_transport_defect(src, tgt, dev)?;
    Ok(max(v, s))
}

/// Distance between the endpoints of two developments that start and end at
/// the same source points. Homotopy of the paths is assumed, not checked.
pub fn path_independence_defect<T: Real>(
    src: &FormSystem,
    tgt: &Coframe,
    q0: &[T],
    path1: &PathSpec,
    path2: &PathSpec,
) -> Result<T, FlowError> {
    let (a1, b1) = path1.endpoints(src.chart())?;
    let (a2, b2) = path2.endpoints(src.chart())?;
    let gap = dist(&a1, &a2).max(dist(&b1, &b2));
    if gap > ENDPOINT_TOL {
        return Err(FlowError::EndpointMismatch(gap));
    }
    let d1 = develop_along_path(src, tgt, q0, path1)?;
    let d2 = develop_along_path(src, tgt, q0, path2)?;
    let diff: Vec<T> = d1.end.iter().zip(&d2.end).map(|(x, y)| *x - *y).collect();
    Ok(norm(&diff))
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Distance between `q0` and the endpoint of the development of a closed loop.
pub fn monodromy_defect<T: Real>(
    src: &FormSystem,
    tgt: &Coframe,
    path: &PathSpec,
    q0: &[T],
) -> Result<T, FlowError> {
    let (a, b) = path.endpoints(src.chart())?;
    let gap = dist(&a, &b);
    if gap > ENDPOINT_TOL {
        return Err(FlowError::NotClosed(gap));
    }
    let dev = develop_along_path(src, tgt, q0, path)?;
    let diff: Vec<T> = dev.end.iter().zip(q0).map(|(x, y)| *x - *y).collect();
    Ok(norm(&diff))
}

/// One row of a step-refinement study.
#[derive(Clone, Debug, PartialEq)]
pub struct RefinementStep<T> {
    pub steps: usize,
    pub residual: T,
}

/// Pullback residual of the same development at each step count.
pub fn step_refinement<T: Real>(
    src: &Coframe,
    tgt: &Coframe,
    q0: &[T],
    path: &PathSpec,
    steps: &[usize],
) -> Result<Vec<RefinementStep<T>>, FlowError> {
    steps
        .iter()
        .map(|&n| {
            let p = path.clone().with_steps(n);
            let dev = develop_along_path(src.system(), tgt, q0, &p)?;
            Ok(RefinementStep {
                steps: n,
                residual: pullback_residual(src, tgt, &dev)?,
            })
        })
        .collect()
}

/// Ratios of consecutive residuals; about 16 per halving for a fourth-order
/// scheme.
pub fn convergence_ratios<T: Real>(study: &[RefinementStep<T>]) -> Vec<T> {
    study
        .windows(2)
        .map(|w| w[0].residual / w[1].residual)
        .collect()
}

/// A function of one variable defined as the solution of
/// `y' = rhs(x, y)` through `y(x0) = y0`, tabulated by RK4 over `[lo, hi]`.
///
/// Derivatives of any order come from the total derivative
/// `D_{r+1} = d_x D_r + d_y D_r * rhs`, evaluated on the solution. An offset
/// shifts the value (order 0) without touching derivatives, which is how a
/// deliberately perturbed solution is modelled.
#[derive(Debug)]
pub struct OdeFunction {
    name: Arc<str>,
    x: Arc<str>,
    y: Arc<str>,
    params: Vec<(Arc<str>, f64)>,
    bindings: Bindings,
    interval: (f64, f64),
    offset: f64,
    /// Sorted nodes `(x, y)`.
    table: Vec<(f64, f64)>,
    derivatives: RwLock<Vec<Expr>>,
}

/// Maximum RK4 step used for the table.
const ODE_STEP: f64 = 1e-3;

impl OdeFunction {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: &str,
        x: &str,
        y: &str,
        rhs: Expr,
        params: Vec<(Arc<str>, f64)>,
        bindings: Bindings,
        start: (f64, f64),
        interval: (f64, f64),
    ) -> Result<Self, EvalError> {
        let (lo, hi) = interval;
        if !(lo <= start.0 && start.0 <= hi) {
            return Err(EvalError::Domain {
                expr: name.to_string(),
                reason: "initial point outside the integration interval",
            });
        }
        let mut f = OdeFunction {
            name: Arc::from(name),
            x: Arc::from(x),
            y: Arc::from(y),
            params,
            bindings,
            interval,
            offset: 0.0,
            table: Vec::new(),
            derivatives: RwLock::new(vec![Expr::sym(y), rhs]),
        };
        let back = f.integrate(start, lo)?;
        let fwd = f.integrate(start, hi)?;
        let mut table: Vec<(f64, f64)> = back.into_iter().rev().collect();
        table.pop();
        table.extend(fwd);
        f.table = table;
        Ok(f)
    }

    pub fn with_offset(mut self, offset: f64) -> Self {
        self.offset = offset;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    fn env(&self, x: f64, y: f64) -> Env<'_, f64> {
        let mut env = Env::new(&self.bindings);
        for (n, v) in &self.params {
            env.set(n, *v);
        }
        env.set(&self.x, x);
        env.set(&self.y, y);
        env
    }

    fn slope(&self, x: f64, y: f64) -> Result<f64, EvalError> {
        let rhs = self.derivative_expr(1);
        let v = rhs.eval(&self.env(x, y))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::Domain {
                expr: self.name.to_string(),
                reason: "solution blew up",
            })
        }
    }

    fn step(&self, x: f64, y: f64, h: f64) -> Result<f64, EvalError> {
        let k1 = self.slope(x, y)?;
        let k2 = self.slope(x + 0.5 * h, y + 0.5 * h * k1)?;
        let k3 = self.slope(x + 0.5 * h, y + 0.5 * h * k2)?;
        let k4 = self.slope(x + h, y + h * k3)?;
        Ok(y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
    }

    fn integrate(&self, start: (f64, f64), to: f64) -> Result<Vec<(f64, f64)>, EvalError> {
        let span = to - start.0;
        let n = ((span.abs() / ODE_STEP).ceil() as usize).max(1);
        let h = span / n as f64;
        let mut out = Vec::with_capacity(n + 1);
        let (mut x, mut y) = start;
        out.push((x, y));
        for i in 0..n {
            y = self.step(x, y, h)?;
            x = start.0 + (i + 1) as f64 * h;
            out.push((x, y));
        }
        Ok(out)
    }

    fn derivative_expr(&self, order: usize) -> Expr {
        if let Some(e) = self.derivatives.read().unwrap().get(order) {
            return e.clone();
        }
        let mut cache = self.derivatives.write().unwrap();
        let rhs = cache[1].clone();
        while cache.len() <= order {
            let d = cache.last().unwrap();
            let next =
                crate::symbolic::normalize(&(d.diff(&self.x) + d.diff(&self.y) * rhs.clone()));
            cache.push(next);
        }
        cache[order].clone()
    }

    /// Solution value at `x`, without the offset.
    fn solution(&self, x: f64) -> Result<f64, EvalError> {
        let (lo, hi) = self.interval;
        if !(lo <= x && x <= hi) {
            return Err(EvalError::Domain {
                expr: format!("{}({x})", self.name),
                reason: "outside the integration interval",
            });
        }
        let i = match self.table.binary_search_by(|(t, _)| t.total_cmp(&x)) {
            Ok(i) => return Ok(self.table[i].1),
            Err(i) => i,
        };
        let (xn, yn) = if i == 0 {
            self.table[0]
        } else if i >= self.table.len() {
            self.table[self.table.len() - 1]
        } else if x - self.table[i - 1].0 <= self.table[i].0 - x {
            self.table[i - 1]
        } else {
            self.table[i]
        };
        self.step(xn, yn, x - xn)
    }
}

impl NumericFunction for OdeFunction {
    fn eval(&self, order: u32, x: f64) -> Result<f64, EvalError> {
        let y = self.solution(x)?;
        if order == 0 {
            return Ok(y + self.offset);
        }
        self.derivative_expr(order as usize).eval(&self.env(x, y))
    }
}
