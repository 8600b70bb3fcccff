//! Task preparation and execution.
//!
//! Preparation turns each `task` block into a typed specification and
//! rejects unknown keys, missing references and malformed expectations with
//! a positioned [`Diagnostic`]. Execution computes a set of named
//! observables per task and compares them with the expectations; a default
//! check is dropped when the task states its own expectation for that
//! observable.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value as Json};

use crate::algebroid::{classify_isotropy_3d, AlgebroidForm, TrivializedAlgebroid};
use crate::coframe::{
    chart_with_context, derive_cartan_data, regularity_and_rank, CartanFunctions, ChainOptions,
    Coframe, DeriveOptions, InvariantChain, Neighborhood,
};
use crate::dsl::ast::{Cmp, Ident, TaskDecl, TaskStmt, Value};
use crate::dsl::lexer::Span;
use crate::dsl::{Diagnostic, Problem};
use crate::flow::{
    convergence_ratios, develop_along_path, monodromy_defect, path_independence_defect,
    pullback_residual, step_refinement, structure_transport_defect, velocity_residual, PathSpec,
    DEFAULT_STEPS,
};
use crate::linalg::RankTolerance;
use crate::realization::{
    check_realization, classifying_map_rank, equivalence_test, mc_defect, EquivalenceOptions,
};
use crate::report::{number, Check, Report, TaskReport};
use crate::symbolic::{normalize, probably_equal, Bindings, Chart, Env, Expr, Sampling};

/// Reparameterizations of one loop must agree to this accuracy.
pub const REPARAM_TOL: f64 = 1e-6;

/// Accepted range for the residual ratio per step halving.
pub const RATIO_RANGE: (f64, f64) = (12.0, 20.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum TaskKind {
    Analyze,
    AlgebroidCheck,
    Isotropy,
    Modular,
    CheckRealization,
    Equiv,
    Develop,
    Monodromy,
}

impl TaskKind {
    pub const ALL: [TaskKind; 8] = [
        TaskKind::Analyze,
        TaskKind::AlgebroidCheck,
        TaskKind::Isotropy,
        TaskKind::Modular,
        TaskKind::CheckRealization,
        TaskKind::Equiv,
        TaskKind::Develop,
        TaskKind::Monodromy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Analyze => "analyze",
            TaskKind::AlgebroidCheck => "algebroid-check",
            TaskKind::Isotropy => "isotropy",
            TaskKind::Modular => "modular",
            TaskKind::CheckRealization => "check-realization",
            TaskKind::Equiv => "equiv",
            TaskKind::Develop => "develop",
            TaskKind::Monodromy => "monodromy",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    fn default_tol(self) -> f64 {
        match self {
            TaskKind::Analyze | TaskKind::Modular => 1e-9,
            TaskKind::AlgebroidCheck => 1e-7,
            TaskKind::Isotropy | TaskKind::CheckRealization => 1e-8,
            TaskKind::Equiv => 1e-6,
            TaskKind::Develop => 1e-5,
            TaskKind::Monodromy => 1e-7,
        }
    }

    fn default_trials(self) -> usize {
        match self {
            TaskKind::Analyze => 100,
            _ => 64,
        }
    }

    /// Observables a task of this kind may state expectations about.
    fn observables(self) -> &'static [(&'static str, usize, Ty)] {
        use Ty::*;
        match self {
            TaskKind::Analyze => &[
                ("C", 3, Sym),
                ("det", 0, Sym),
                ("rank", 0, Int),
                ("stabilized", 0, Int),
                ("ranks", 1, Int),
                ("regular", 0, Bool),
                ("local_rank", 0, Int),
                ("symmetry", 0, Int),
            ],
            TaskKind::AlgebroidCheck => &[
                ("bracket_residual", 0, Num),
                ("jacobi_residual", 0, Num),
                ("residual", 0, Num),
                ("pass", 0, Bool),
            ],
            TaskKind::Isotropy => &[
                ("orbit", 0, Int),
                ("symmetry", 0, Int),
                ("class", 0, Text),
                ("closure", 0, Num),
                ("map_rank", 0, Int),
                ("rank_formula", 0, Bool),
            ],
            TaskKind::Modular => &[
                ("c", 1, Sym),
                ("closed", 0, Num),
                ("rescaling", 0, Num),
                ("unimodular", 0, Bool),
            ],
            TaskKind::CheckRealization => &[
                ("structure_residual", 0, Num),
                ("anchor_residual", 0, Num),
                ("mc_defect", 0, Num),
                ("pass", 0, Bool),
                ("consistent", 0, Bool),
            ],
            TaskKind::Equiv => &[
                ("verdict", 0, Text),
                ("order", 0, Int),
                ("difference", 0, Num),
            ],
            TaskKind::Develop => &[
                ("residual", 0, Num),
                ("velocity", 0, Num),
                ("transport", 0, Num),
                ("ratio_min", 0, Num),
                ("ratio_max", 0, Num),
                ("independence", 0, Num),
                ("end", 0, Point),
            ],
            TaskKind::Monodromy => &[("defect", 0, Num), ("reparam", 0, Num)],
        }
    }
}

/// Run-wide settings; task-level keys take precedence.
#[derive(Clone, Debug, PartialEq)]
pub struct RunOptions {
    pub seed: u64,
    pub tol: Option<f64>,
    pub trials: Option<usize>,
    pub max_order: Option<usize>,
    pub filter: Option<TaskKind>,
    pub inputs: Vec<String>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            seed: crate::DEFAULT_SEED,
            tol: None,
            trials: None,
            max_order: None,
            filter: None,
            inputs: Vec::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Ty {
    Num,
    Int,
    Text,
    Bool,
    Sym,
    Point,
}

#[derive(Clone, Debug)]
enum Obs {
    Num(f64),
    Int(i64),
    Text(String),
    Bool(bool),
    Sym(Expr, Arc<Chart>),
    Point(Vec<f64>),
    Missing(String),
}

impl Obs {
    fn json(&self) -> Json {
        match self {
            Obs::Num(v) => number(*v),
            Obs::Int(v) => json!(v),
            Obs::Text(s) => json!(s),
            Obs::Bool(b) => json!(b),
            Obs::Sym(e, _) => json!(e.to_string()),
            Obs::Point(p) => Json::Array(p.iter().map(|v| number(*v)).collect()),
            Obs::Missing(why) => json!({ "unavailable": why }),
        }
    }
}

#[derive(Clone, Debug)]
enum Target {
    Num(f64),
    Int(i64),
    Text(String),
    Bool(bool),
    Sym(Expr),
    Point(Vec<f64>),
}

fn fmt_num(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-3 || v.abs() >= 1e6) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

impl Target {
    fn describe(&self) -> String {
        match self {
            Target::Num(v) => fmt_num(*v),
            Target::Int(v) => v.to_string(),
            Target::Text(s) => s.clone(),
            Target::Bool(b) => b.to_string(),
            Target::Sym(e) => e.to_string(),
            Target::Point(p) => format!(
                "({})",
                p.iter().map(|v| fmt_num(*v)).collect::<Vec<_>>().join(", ")
            ),
        }
    }
}

#[derive(Clone, Debug)]
struct Expectation {
    key: String,
    cmp: Cmp,
    target: Target,
}

#[derive(Clone, Copy, Debug)]
struct Common {
    tol: f64,
    trials: usize,
    seed: u64,
}

impl Common {
    fn sampling(&self) -> Sampling {
        Sampling {
            trials: self.trials,
            tol: self.tol,
            seed: self.seed,
        }
    }
}

#[derive(Clone, Debug)]
enum Points {
    Explicit(Vec<Vec<f64>>),
    Random(usize),
}

#[derive(Clone, Debug)]
enum IsoSource {
    Algebroid(String),
    Coframe(String),
    Realization(String),
}

#[derive(Clone, Debug)]
enum Spec {
    Analyze {
        coframe: String,
        point: Option<Vec<f64>>,
        max_order: usize,
        samples: usize,
    },
    AlgebroidCheck {
        algebroid: String,
    },
    Isotropy {
        source: IsoSource,
        points: Points,
    },
    Modular {
        algebroid: String,
        densities: usize,
        rescale_tol: f64,
    },
    CheckRealization {
        realization: String,
    },
    Equiv {
        source: String,
        at: Vec<f64>,
        target: String,
        to: Vec<f64>,
        max_order: usize,
    },
    Develop {
        source: String,
        target: String,
        start: Vec<f64>,
        path: PathSpec,
        path2: Option<PathSpec>,
        refine: Vec<usize>,
    },
    Monodromy {
        forms: String,
        target: String,
        start: Vec<f64>,
        lp: PathSpec,
        lp2: Option<PathSpec>,
    },
}

/// A validated task, ready to run.
#[derive(Clone, Debug)]
pub struct PreparedTask {
    kind: TaskKind,
    name: String,
    common: Common,
    spec: Spec,
    expects: Vec<Expectation>,
}

impl PreparedTask {
    pub fn kind(&self) -> TaskKind {
        self.kind
    }

    pub fn name(&self) -> &str {
        &self.name
    }
}

fn constant(e: &Expr, chart: Option<&Chart>, span: Span) -> Result<f64, Diagnostic> {
    let b = Bindings::new();
    let mut env: Env<'_, f64> = Env::new(&b);
    if let Some(c) = chart {
        for (n, v) in c.params() {
            env.set(n, *v);
        }
    }
    let v = e
        .eval(&env)
        .map_err(|err| span.error(format!("expected a constant: {err}")))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(span.error(format!("`{e}` is not finite")))
    }
}

/// Named coordinates in chart order.
fn point_on(chart: &Chart, comps: &[(Ident, Expr)], span: Span) -> Result<Vec<f64>, Diagnostic> {
    let mut out = vec![None; chart.dim()];
    for (name, e) in comps {
        let a = chart.coord_index(&name.name).map_err(|_| {
            name.span.error(format!(
                "`{}` is not a coordinate of chart `{}`",
                name.name,
                chart.name()
            ))
        })?;
        if out[a].is_some() {
            return Err(name.span.error(format!("`{}` given twice", name.name)));
        }
        out[a] = Some(constant(e, Some(chart), name.span)?);
    }
    out.into_iter()
        .zip(chart.coords())
        .map(|(v, c)| v.ok_or_else(|| span.error(format!("point is missing coordinate `{c}`"))))
        .collect()
}

fn curve_on(
    chart: &Chart,
    param: &Ident,
    comps: &[(Ident, Expr)],
    span: Span,
) -> Result<PathSpec, Diagnostic> {
    let mut out = vec![None; chart.dim()];
    for (name, e) in comps {
        let a = chart.coord_index(&name.name).map_err(|_| {
            name.span.error(format!(
                "`{}` is not a coordinate of chart `{}`",
                name.name,
                chart.name()
            ))
        })?;
        for s in e.symbols() {
            let ok =
                *s == *param.name || &*s == "pi" || chart.params().iter().any(|(p, _)| *p == s);
            if !ok {
                return Err(name.span.error(format!(
                    "curve component uses `{s}`; only the parameter `{}` and chart parameters are allowed",
                    param.name
                )));
            }
        }
        if !e.functions().is_empty() {
            return Err(name
                .span
                .error("curve components must use elementary functions only"));
        }
        if out[a].replace(e.clone()).is_some() {
            return Err(name.span.error(format!("`{}` given twice", name.name)));
        }
    }
    let comps = out
        .into_iter()
        .zip(chart.coords())
        .map(|(v, c)| v.ok_or_else(|| span.error(format!("curve is missing coordinate `{c}`"))))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PathSpec::curve(&param.name, comps))
}

struct Settings<'a> {
    map: BTreeMap<&'a str, &'a TaskStmt>,
    used: BTreeSet<&'a str>,
}

impl<'a> Settings<'a> {
    fn new(task: &'a TaskDecl) -> Result<Self, Diagnostic> {
        let mut map = BTreeMap::new();
        for s in task.stmts.iter().filter(|s| !s.expect) {
            if map.insert(s.key.name.as_str(), s).is_some() {
                return Err(s.key.span.error(format!("`{}` given twice", s.key.name)));
            }
        }
        Ok(Settings {
            map,
            used: BTreeSet::new(),
        })
    }

    fn get(&mut self, key: &'static str) -> Option<&'a Value> {
        self.used.insert(key);
        self.map.get(key).map(|s| &s.value)
    }

    fn finish(&self) -> Result<(), Diagnostic> {
        for (k, s) in &self.map {
            if !self.used.contains(k) {
                return Err(s
                    .key
                    .span
                    .error(format!("unknown setting `{k}` for this task")));
            }
        }
        Ok(())
    }

    fn name(&mut self, key: &'static str) -> Result<Option<(String, Span)>, Diagnostic> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .as_name()
                .map(|n| Some((n.to_string(), v.span())))
                .ok_or_else(|| v.span().error(format!("`{key}` expects a name"))),
        }
    }

    fn required_name(&mut self, key: &'static str, at: Span) -> Result<(String, Span), Diagnostic> {
        self.name(key)?
            .ok_or_else(|| at.error(format!("task needs `{key} = <name>;`")))
    }

    fn num(&mut self, key: &'static str) -> Result<Option<f64>, Diagnostic> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Expr(e, span)) => constant(e, None, *span).map(Some),
            Some(v) => Err(v.span().error(format!("`{key}` expects a number"))),
        }
    }

    fn count(&mut self, key: &'static str) -> Result<Option<usize>, Diagnostic> {
        let span = self.map.get(key).map(|s| s.value.span());
        match self.num(key)? {
            None => Ok(None),
            Some(v) if v >= 0.0 && v.fract() == 0.0 && v < 1e9 => Ok(Some(v as usize)),
            Some(_) => Err(span
                .unwrap_or_default()
                .error(format!("`{key}` expects a nonnegative integer"))),
        }
    }

    fn point(&mut self, key: &'static str, chart: &Chart) -> Result<Option<Vec<f64>>, Diagnostic> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Point(comps, span)) => point_on(chart, comps, *span).map(Some),
            Some(v) => Err(v
                .span()
                .error(format!("`{key}` expects a point such as `(x = 0, y = 1)`"))),
        }
    }

    fn required_point(
        &mut self,
        key: &'static str,
        chart: &Chart,
        at: Span,
    ) -> Result<Vec<f64>, Diagnostic> {
        self.point(key, chart)?
            .ok_or_else(|| at.error(format!("task needs `{key} = (...)`")))
    }

    fn path(
        &mut self,
        key: &'static str,
        chart: &Chart,
        steps: usize,
    ) -> Result<Option<PathSpec>, Diagnostic> {
        let p = match self.get(key) {
            None => return Ok(None),
            Some(Value::Curve { param, comps, span }) => curve_on(chart, param, comps, *span)?,
            Some(Value::List(items, span)) => {
                let mut pts = Vec::with_capacity(items.len());
                for it in items {
                    match it {
                        Value::Point(comps, s) => pts.push(point_on(chart, comps, *s)?),
                        other => {
                            return Err(other.span().error("waypoints must be points"));
                        }
                    }
                }
                if pts.len() < 2 {
                    return Err(span.error("a path needs at least two waypoints"));
                }
                PathSpec::waypoints(pts)
            }
            Some(v) => {
                return Err(v.span().error(format!(
                    "`{key}` expects waypoints `[(..), (..)]` or `curve(s)(..)`"
                )))
            }
        };
        Ok(Some(p.with_steps(steps)))
    }

    fn counts(&mut self, key: &'static str) -> Result<Vec<usize>, Diagnostic> {
        match self.get(key) {
            None => Ok(Vec::new()),
            Some(Value::List(items, _)) => items
                .iter()
                .map(|it| match it {
                    Value::Expr(e, span) => {
                        let v = constant(e, None, *span)?;
                        if v >= 4.0 && v.fract() == 0.0 {
                            Ok(v as usize)
                        } else {
                            Err(span.error("step counts must be integers of at least 4"))
                        }
                    }
                    other => Err(other.span().error("expected a step count")),
                })
                .collect(),
            Some(v) => Err(v
                .span()
                .error(format!("`{key}` expects a list such as `[25, 50, 100]`"))),
        }
    }
}

fn coframe_ref<'p>(p: &'p Problem, name: &(String, Span)) -> Result<&'p Coframe, Diagnostic> {
    p.coframes
        .get(&name.0)
        .ok_or_else(|| name.1.error(format!("unknown coframe `{}`", name.0)))
}

fn algebroid_ref<'p>(
    p: &'p Problem,
    name: &(String, Span),
) -> Result<&'p TrivializedAlgebroid, Diagnostic> {
    p.algebroids
        .get(&name.0)
        .ok_or_else(|| name.1.error(format!("unknown algebroid `{}`", name.0)))
}

/// What expectation values are checked against, per observable.
struct Context<'a> {
    sym_chart: Option<&'a Chart>,
    point_chart: Option<&'a Chart>,
    /// Upper bound of 1-based indices for `C` and `c`.
    n: usize,
    max_order: usize,
}

fn prepare_expectation(
    kind: TaskKind,
    s: &TaskStmt,
    ctx: &Context<'_>,
) -> Result<Expectation, Diagnostic> {
    let key = &s.key.name;
    let &(_, arity, ty) = kind
        .observables()
        .iter()
        .find(|(k, _, _)| k == key)
        .ok_or_else(|| {
            let names: Vec<&str> = kind.observables().iter().map(|o| o.0).collect();
            s.key.span.error(format!(
                "`{key}` is not an observable of `{}` tasks (expected one of: {})",
                kind.name(),
                names.join(", ")
            ))
        })?;
    if s.index.len() != arity {
        return Err(s.key.span.error(format!(
            "`{key}` takes {arity} index(es), {} given",
            s.index.len()
        )));
    }
    match key.as_str() {
        "C" => {
            let (k, i, j) = (s.index[0], s.index[1], s.index[2]);
            let n = ctx.n;
            if ![k, i, j].iter().all(|x| (1..=n).contains(x)) || i >= j {
                return Err(s.key.span.error(format!(
                    "structure function indices must satisfy 1 <= k <= {n} and 1 <= i < j <= {n}"
                )));
            }
        }
        "c" if !(1..=ctx.n).contains(&s.index[0]) => {
            return Err(s
                .key
                .span
                .error(format!("index must be between 1 and {}", ctx.n)));
        }
        "ranks" if s.index[0] > ctx.max_order => {
            return Err(s.key.span.error(format!(
                "chain order {} exceeds max_order {}",
                s.index[0], ctx.max_order
            )));
        }
        _ => {}
    }
    let span = s.value.span();
    if s.cmp != Cmp::Eq && !matches!(ty, Ty::Num | Ty::Int) {
        return Err(span.error(format!("`{key}` can only be compared with `=`")));
    }
    let target = match (ty, &s.value) {
        (Ty::Num, Value::Expr(e, sp)) => Target::Num(constant(e, None, *sp)?),
        (Ty::Int, Value::Expr(e, sp)) => {
            let v = constant(e, None, *sp)?;
            if v.fract() != 0.0 {
                return Err(sp.error(format!("`{key}` is an integer")));
            }
            Target::Int(v as i64)
        }
        (Ty::Text, v @ Value::Expr(..)) => Target::Text(
            v.as_name()
                .ok_or_else(|| span.error(format!("`{key}` expects a name")))?
                .to_string(),
        ),
        (Ty::Bool, v @ Value::Expr(..)) => match v.as_name() {
            Some("true") => Target::Bool(true),
            Some("false") => Target::Bool(false),
            _ => return Err(span.error(format!("`{key}` expects `true` or `false`"))),
        },
        (Ty::Sym, Value::Expr(e, sp)) => {
            if let Some(chart) = ctx.sym_chart {
                for sym in e.symbols() {
                    let ok = &*sym == "pi"
                        || chart.coords().iter().any(|c| *c == sym)
                        || chart.params().iter().any(|(p, _)| *p == sym);
                    if !ok {
                        return Err(sp.error(format!(
                            "unknown symbol `{sym}` on chart `{}`",
                            chart.name()
                        )));
                    }
                }
                for (f, _) in e.functions() {
                    if chart.bindings().get(&f).is_none() {
                        return Err(sp.error(format!(
                            "function `{f}` is not bound on chart `{}`",
                            chart.name()
                        )));
                    }
                }
            }
            Target::Sym(e.clone())
        }
        (Ty::Point, Value::Point(comps, sp)) => {
            let chart = ctx.point_chart.expect("point observables have a chart");
            Target::Point(point_on(chart, comps, *sp)?)
        }
        _ => return Err(span.error(format!("wrong kind of value for `{key}`"))),
    };
    let key = if s.index.is_empty() {
        key.clone()
    } else {
        format!(
            "{key}[{}]",
            s.index
                .iter()
                .map(|i| i.to_string())
                .collect::<Vec<_>>()
                .join(",")
        )
    };
    Ok(Expectation {
        key,
        cmp: s.cmp,
        target,
    })
}

/// Validate one task against the problem and the run options.
pub fn prepare(
    task: &TaskDecl,
    problem: &Problem,
    opts: &RunOptions,
) -> Result<PreparedTask, Diagnostic> {
    let kind = TaskKind::from_name(&task.kind.name).ok_or_else(|| {
        let names: Vec<&str> = TaskKind::ALL.iter().map(|k| k.name()).collect();
        task.kind.span.error(format!(
            "unknown task kind `{}` (expected one of: {})",
            task.kind.name,
            names.join(", ")
        ))
    })?;
    let at = task.name.span;
    let mut st = Settings::new(task)?;
    let tol = st.num("tol")?.or(opts.tol).unwrap_or(kind.default_tol());
    if !(tol > 0.0) {
        return Err(at.error("`tol` must be positive"));
    }
    let trials = st
        .count("trials")?
        .or(opts.trials)
        .unwrap_or(kind.default_trials())
        .max(1);
    let seed = match st.count("seed")? {
        Some(s) => s as u64,
        None => opts.seed,
    };
    let common = Common { tol, trials, seed };
    let default_order = opts.max_order.unwrap_or(ChainOptions::default().max_order);
    let steps = st.count("steps")?.unwrap_or(DEFAULT_STEPS);
    let mut ctx = Context {
        sym_chart: None,
        point_chart: None,
        n: 0,
        max_order: default_order,
    };
    let spec = match kind {
        TaskKind::Analyze => {
            let name = st.required_name("coframe", at)?;
            let c = coframe_ref(problem, &name)?;
            let point = st.point("point", c.chart())?;
            let max_order = st.count("max_order")?.unwrap_or(default_order);
            let samples = st
                .count("samples")?
                .unwrap_or(ChainOptions::default().samples);
            ctx.sym_chart = Some(c.chart());
            ctx.n = c.dim();
            ctx.max_order = max_order;
            Spec::Analyze {
                coframe: name.0,
                point,
                max_order,
                samples: samples.max(1),
            }
        }
        TaskKind::AlgebroidCheck => {
            let name = st.required_name("algebroid", at)?;
            algebroid_ref(problem, &name)?;
            Spec::AlgebroidCheck { algebroid: name.0 }
        }
        TaskKind::Isotropy => {
            let a = st.name("algebroid")?;
            let c = st.name("coframe")?;
            let r = st.name("realization")?;
            let (source, chart): (IsoSource, &Chart) = match (a, c, r) {
                (Some(a), None, None) => {
                    let alg = algebroid_ref(problem, &a)?;
                    (IsoSource::Algebroid(a.0), alg.base())
                }
                (None, Some(c), None) => {
                    let cf = coframe_ref(problem, &c)?;
                    (IsoSource::Coframe(c.0), cf.chart())
                }
                (None, None, Some(r)) => {
                    let entry = problem
                        .realizations
                        .get(&r.0)
                        .ok_or_else(|| r.1.error(format!("unknown realization `{}`", r.0)))?;
                    (IsoSource::Realization(r.0), entry.realization.chart())
                }
                _ => {
                    return Err(at.error(
                        "isotropy needs exactly one of `algebroid`, `coframe` or `realization`",
                    ))
                }
            };
            let point = st.point("point", chart)?;
            let samples = st.count("samples")?;
            let points = match (point, samples) {
                (Some(p), None) => Points::Explicit(vec![p]),
                (None, Some(k)) if k > 0 => Points::Random(k),
                (None, None) if chart.dim() == 0 => Points::Explicit(vec![Vec::new()]),
                _ => return Err(at.error("isotropy needs either `point = (...)` or `samples = N`")),
            };
            if matches!(source, IsoSource::Coframe(_)) && !matches!(points, Points::Explicit(_)) {
                return Err(at.error("coframe isotropy needs `point = (...)`"));
            }
            Spec::Isotropy { source, points }
        }
        TaskKind::Modular => {
            let name = st.required_name("algebroid", at)?;
            let a = algebroid_ref(problem, &name)?;
            ctx.sym_chart = Some(a.base());
            ctx.n = a.rank();
            let densities = st.count("densities")?.unwrap_or(0);
            let rescale_tol = st.num("rescale_tol")?.unwrap_or(1e-8);
            Spec::Modular {
                algebroid: name.0,
                densities,
                rescale_tol,
            }
        }
        TaskKind::CheckRealization => {
            let name = st.required_name("realization", at)?;
            if !problem.realizations.contains_key(&name.0) {
                return Err(name.1.error(format!("unknown realization `{}`", name.0)));
            }
            Spec::CheckRealization {
                realization: name.0,
            }
        }
        TaskKind::Equiv => {
            let s = st.required_name("source", at)?;
            let t = st.required_name("target", at)?;
            let cs = coframe_ref(problem, &s)?;
            let ct = coframe_ref(problem, &t)?;
            let p = st.required_point("at", cs.chart(), at)?;
            let q = st.required_point("to", ct.chart(), at)?;
            let max_order = st.count("max_order")?.unwrap_or(default_order);
            Spec::Equiv {
                source: s.0,
                at: p,
                target: t.0,
                to: q,
                max_order,
            }
        }
        TaskKind::Develop => {
            let s = st.required_name("source", at)?;
            let t = st.required_name("target", at)?;
            let cs = coframe_ref(problem, &s)?;
            let ct = coframe_ref(problem, &t)?;
            if cs.dim() != ct.dim() {
                return Err(at.error("source and target coframes have different dimensions"));
            }
            let start = st.required_point("start", ct.chart(), at)?;
            let path = st
                .path("path", cs.chart(), steps)?
                .ok_or_else(|| at.error("task needs `path = ...`"))?;
            let path2 = st.path("path2", cs.chart(), steps)?;
            let refine = st.counts("refine")?;
            ctx.point_chart = Some(ct.chart());
            Spec::Develop {
                source: s.0,
                target: t.0,
                start,
                path,
                path2,
                refine,
            }
        }
        TaskKind::Monodromy => {
            let f = st.required_name("forms", at)?;
            let sys = problem
                .system(&f.0)
                .ok_or_else(|| f.1.error(format!("unknown forms or coframe `{}`", f.0)))?;
            let t = st.required_name("target", at)?;
            let ct = coframe_ref(problem, &t)?;
            if sys.len() != ct.dim() {
                return Err(at.error(format!(
                    "`{}` has {} forms but the target is {}-dimensional",
                    f.0,
                    sys.len(),
                    ct.dim()
                )));
            }
            let start = st.required_point("start", ct.chart(), at)?;
            let lp = st
                .path("loop", sys.chart(), steps)?
                .ok_or_else(|| at.error("task needs `loop = ...`"))?;
            let lp2 = st.path("loop2", sys.chart(), steps)?;
            Spec::Monodromy {
                forms: f.0,
                target: t.0,
                start,
                lp,
                lp2,
            }
        }
    };
    st.finish()?;
    let expects = task
        .stmts
        .iter()
        .filter(|s| s.expect)
        .map(|s| prepare_expectation(kind, s, &ctx))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PreparedTask {
        kind,
        name: task.name.name.clone(),
        common,
        spec,
        expects,
    })
}

/// Validate every task (after the kind filter).
pub fn prepare_all(problem: &Problem, opts: &RunOptions) -> Result<Vec<PreparedTask>, Diagnostic> {
    let mut out = Vec::new();
    for t in &problem.tasks {
        let p = prepare(t, problem, opts)?;
        if opts.filter.is_none_or(|k| k == p.kind) {
            out.push(p);
        }
    }
    Ok(out)
}

struct Outcome {
    obs: BTreeMap<String, Obs>,
    defaults: Vec<Expectation>,
    details: BTreeMap<String, Json>,
}

impl Outcome {
    fn new() -> Self {
        Outcome {
            obs: BTreeMap::new(),
            defaults: Vec::new(),
            details: BTreeMap::new(),
        }
    }

    fn set(&mut self, key: &str, o: Obs) {
        self.obs.insert(key.to_string(), o);
    }

    fn default_check(&mut self, key: &str, cmp: Cmp, target: Target) {
        self.defaults.push(Expectation {
            key: key.to_string(),
            cmp,
            target,
        });
    }
}

type TaskResult = Result<Outcome, String>;

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// Integer when all values agree, otherwise a description of the spread.
fn uniform(values: &[usize]) -> Obs {
    match values.first() {
        Some(&v) if values.iter().all(|&x| x == v) => Obs::Int(v as i64),
        Some(_) => {
            let lo = values.iter().min().copied().unwrap_or(0);
            let hi = values.iter().max().copied().unwrap_or(0);
            Obs::Text(format!("varies {lo}..{hi}"))
        }
        None => Obs::Missing("no points".into()),
    }
}

fn run_analyze(
    p: &Problem,
    common: Common,
    coframe: &str,
    point: Option<&[f64]>,
    max_order: usize,
    samples: usize,
) -> TaskResult {
    let c = &p.coframes[coframe];
    let chart = c.chart().clone();
    let mut out = Outcome::new();
    let table = c.structure_functions().map_err(err)?;
    let mut nonzero = BTreeMap::new();
    for k in 0..c.dim() {
        for (i, j) in (0..c.dim()).flat_map(|i| (i + 1..c.dim()).map(move |j| (i, j))) {
            let e = table.get(k, i, j).clone();
            if !e.is_zero() {
                nonzero.insert(table.entry_name("C", k, i, j), json!(e.to_string()));
            }
            out.set(
                &format!("C[{},{},{}]", k + 1, i + 1, j + 1),
                Obs::Sym(e, chart.clone()),
            );
        }
    }
    out.details.insert(
        "structure".into(),
        Json::Object(nonzero.into_iter().collect()),
    );
    out.details
        .insert("determinant".into(), json!(c.determinant().to_string()));
    out.set("det", Obs::Sym(c.determinant().clone(), chart.clone()));
    let opts = ChainOptions {
        max_order,
        samples,
        seed: common.seed,
        ..ChainOptions::default()
    };
    let chain = InvariantChain::build(c, opts).map_err(err)?;
    let ranks: Vec<usize> = chain
        .stats()
        .iter()
        .map(|s| s.ranks.iter().copied().max().unwrap_or(0))
        .collect();
    for (r, v) in ranks.iter().enumerate() {
        out.set(&format!("ranks[{r}]"), Obs::Int(*v as i64));
    }
    out.details.insert("ranks".into(), json!(ranks));
    out.details.insert(
        "members".into(),
        json!(chain.stats().iter().map(|s| s.members).collect::<Vec<_>>()),
    );
    match (chain.stabilized_at(), chain.rank()) {
        (Some(r), Some(rank)) => {
            out.set("stabilized", Obs::Int(r as i64));
            out.set("rank", Obs::Int(rank as i64));
            out.details.insert("stabilized".into(), json!(r));
            out.details.insert("rank".into(), json!(rank));
        }
        _ => {
            let why = format!("chain did not stabilize by order {max_order}");
            out.set("stabilized", Obs::Missing(why.clone()));
            out.set("rank", Obs::Missing(why));
        }
    }
    out.default_check("stabilized", Cmp::Ge, Target::Int(0));
    if let Some(pt) = point {
        let nbhd = Neighborhood {
            seed: common.seed,
            ..Neighborhood::default()
        };
        match regularity_and_rank(&chain, &[pt.to_vec()], nbhd) {
            Ok(reg) => {
                out.set("regular", Obs::Bool(reg.fully_regular[0]));
                out.set("local_rank", Obs::Int(reg.ranks[0] as i64));
                out.set("symmetry", Obs::Int((c.dim() - reg.ranks[0]) as i64));
            }
            Err(e) => {
                for k in ["regular", "local_rank", "symmetry"] {
                    out.set(k, Obs::Missing(e.to_string()));
                }
            }
        }
        out.default_check("regular", Cmp::Eq, Target::Bool(true));
    }
    Ok(out)
}

fn run_algebroid_check(p: &Problem, common: Common, name: &str) -> TaskResult {
    let a = &p.algebroids[name];
    let r = a
        .check_structure_equations(&common.sampling(), common.tol)
        .map_err(err)?;
    let mut out = Outcome::new();
    out.set("bracket_residual", Obs::Num(r.bracket_residual));
    out.set("jacobi_residual", Obs::Num(r.jacobi_residual));
    out.set(
        "residual",
        Obs::Num(r.bracket_residual.max(r.jacobi_residual)),
    );
    out.set("pass", Obs::Bool(r.pass));
    out.details.insert("samples".into(), json!(r.samples));
    out.default_check("residual", Cmp::Le, Target::Num(common.tol));
    Ok(out)
}

fn run_isotropy(p: &Problem, common: Common, source: &IsoSource, points: &Points) -> TaskResult {
    let mut out = Outcome::new();
    let rank_tol = RankTolerance::default();
    let (alg, xs): (TrivializedAlgebroid, Vec<Vec<f64>>) = match source {
        IsoSource::Algebroid(name) => {
            let a = p.algebroids[name].clone();
            let xs = match points {
                Points::Explicit(v) => v.clone(),
                Points::Random(k) => a.base().sample(*k, common.seed).map_err(err)?,
            };
            (a, xs)
        }
        IsoSource::Coframe(name) => {
            let c = &p.coframes[name];
            let Points::Explicit(pts) = points else {
                unreachable!("checked in prepare")
            };
            let opts = DeriveOptions {
                chain: ChainOptions {
                    seed: common.seed,
                    ..ChainOptions::default()
                },
                sampling: common.sampling(),
                ..DeriveOptions::default()
            };
            let cd = derive_cartan_data(c, &pts[0], None, opts).map_err(err)?;
            if let CartanFunctions::Tabulated(_) = cd.functions {
                return Err(format!(
                    "the structure functions of `{name}` are not constant ({} invariants); declare the algebroid or use a realization",
                    cd.d
                ));
            }
            let (a, _) =
                TrivializedAlgebroid::from_cartan_data(name, &cd, &common.sampling(), common.tol)
                    .map_err(err)?;
            out.details.insert(
                "bracket".into(),
                json!(a
                    .bracket()
                    .upper_indices()
                    .into_iter()
                    .filter(|(k, i, j)| !a.bracket().get(*k, *i, *j).is_zero())
                    .map(|(k, i, j)| (
                        a.bracket().entry_name("B", k, i, j),
                        a.bracket().get(k, i, j).to_string()
                    ))
                    .collect::<BTreeMap<_, _>>()),
            );
            (a, vec![Vec::new(); pts.len()])
        }
        IsoSource::Realization(name) => {
            let entry = &p.realizations[name];
            let a = p.algebroids[&entry.algebroid].clone();
            let r = &entry.realization;
            let pts = match points {
                Points::Explicit(v) => v.clone(),
                Points::Random(k) => r.chart().sample(*k, common.seed).map_err(err)?,
            };
            let ctx = chart_with_context(r.chart(), a.base());
            let mut xs = Vec::with_capacity(pts.len());
            for pt in &pts {
                let env = ctx.env_at(pt);
                xs.push(
                    r.map()
                        .iter()
                        .map(|h| h.eval(&env))
                        .collect::<Result<Vec<_>, _>>()
                        .map_err(err)?,
                );
            }
            let ranks = classifying_map_rank(&a, r, &pts, rank_tol).map_err(err)?;
            let mr: Vec<usize> = ranks.iter().map(|m| m.rank).collect();
            out.set("map_rank", uniform(&mr));
            out.details.insert("map_rank".into(), json!(mr));
            (a, xs)
        }
    };
    let mut orbits = Vec::new();
    let mut syms = Vec::new();
    let mut classes = Vec::new();
    let mut closure: f64 = 0.0;
    for x in &xs {
        let o = alg
            .orbit_and_isotropy(x, rank_tol, common.tol)
            .map_err(err)?;
        closure = closure.max(o.isotropy.closure_residual);
        orbits.push(o.orbit_dim);
        syms.push(o.symmetry_dim);
        if o.symmetry_dim == 3 {
            classes.push(classify_isotropy_3d(&o.isotropy).map_err(err)?.tag());
        }
    }
    out.set("orbit", uniform(&orbits));
    out.set("symmetry", uniform(&syms));
    out.set("closure", Obs::Num(closure));
    let class = match classes.first() {
        Some(c) if classes.len() == xs.len() && classes.iter().all(|x| x == c) => {
            Obs::Text(c.to_string())
        }
        Some(_) if classes.len() == xs.len() => Obs::Text("mixed".into()),
        _ => Obs::Missing("isotropy is not 3-dimensional at every point".into()),
    };
    out.set("class", class);
    if let Some(Obs::Int(_)) | Some(Obs::Text(_)) = out.obs.get("map_rank") {
        let dim_m = p.realizations[match source {
            IsoSource::Realization(n) => n,
            _ => unreachable!(),
        }]
        .realization
        .coframe()
        .dim();
        let details: Vec<usize> = out
            .details
            .get("map_rank")
            .and_then(|v| serde_json::from_value(v.clone()).ok())
            .unwrap_or_default();
        let agree = details.iter().zip(&syms).all(|(r, s)| dim_m - r == *s);
        out.set("rank_formula", Obs::Bool(agree));
        out.default_check("rank_formula", Cmp::Eq, Target::Bool(true));
    }
    out.details.insert("orbit".into(), json!(orbits));
    out.details.insert("symmetry".into(), json!(syms));
    out.details.insert("points".into(), json!(xs.len()));
    out.default_check("closure", Cmp::Le, Target::Num(common.tol));
    Ok(out)
}

/// `exp(a0 + sum a_i x_i + b sin(sum c_i x_i))` with seeded coefficients.
fn random_density(base: &Chart, rng: &mut ChaCha8Rng) -> Expr {
    let mut dy = |lo: f64, hi: f64| Expr::frac((rng.gen_range(lo..hi) * 256.0).round() as i64, 256);
    let mut lin = vec![dy(-1.0, 1.0)];
    let mut inner = Vec::new();
    for c in base.coords() {
        lin.push(dy(-1.0, 1.0) * Expr::sym(c));
        inner.push(dy(-2.0, 2.0) * Expr::sym(c));
    }
    let wave = dy(-0.5, 0.5) * Expr::add_all(inner).sin();
    normalize(&(Expr::add_all(lin) + wave).exp())
}

fn run_modular(
    p: &Problem,
    common: Common,
    name: &str,
    densities: usize,
    rescale_tol: f64,
) -> TaskResult {
    let a = &p.algebroids[name];
    let base = a.base().clone();
    let mut out = Outcome::new();
    let pts = base.sample(common.trials, common.seed).map_err(err)?;
    let c = a.modular_cocycle().map_err(err)?;
    let mut comps = Vec::new();
    for i in 0..a.rank() {
        let e = c.coefficient(&[i]);
        comps.push(e.to_string());
        out.set(&format!("c[{}]", i + 1), Obs::Sym(e, base.clone()));
    }
    out.details.insert("cocycle".into(), json!(comps));
    let closed = if a.rank() >= 2 {
        let dc = a.differential(&c).map_err(err)?;
        a.max_abs(&dc, &pts).map_err(err)?
    } else {
        0.0
    };
    out.set("closed", Obs::Num(closed));
    out.set(
        "unimodular",
        Obs::Bool(a.max_abs(&c, &pts).map_err(err)? <= common.tol),
    );
    out.default_check("closed", Cmp::Le, Target::Num(common.tol));
    if densities > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(common.seed);
        let mut worst: f64 = 0.0;
        for _ in 0..densities {
            let f = random_density(&base, &mut rng);
            let cf = a.modular_cocycle_with_density(&f).map_err(err)?;
            let dlog = a.log_differential(&f).map_err(err)?;
            let diff: AlgebroidForm = cf.sub(&c).sub(&dlog);
            worst = worst.max(a.max_abs(&diff, &pts).map_err(err)?);
        }
        out.set("rescaling", Obs::Num(worst));
        out.details.insert("densities".into(), json!(densities));
        out.default_check("rescaling", Cmp::Le, Target::Num(rescale_tol));
    } else {
        out.set("rescaling", Obs::Missing("no densities requested".into()));
    }
    Ok(out)
}

fn run_check_realization(p: &Problem, common: Common, name: &str) -> TaskResult {
    let entry = &p.realizations[name];
    let a = &p.algebroids[&entry.algebroid];
    let r = &entry.realization;
    let rep = check_realization(a, r, &common.sampling(), common.tol).map_err(err)?;
    let mc = mc_defect(a, r, &common.sampling()).map_err(err)?;
    let mut out = Outcome::new();
    out.set("structure_residual", Obs::Num(rep.structure_residual));
    out.set("anchor_residual", Obs::Num(rep.anchor_residual));
    out.set("mc_defect", Obs::Num(mc));
    out.set("pass", Obs::Bool(rep.pass));
    out.set("consistent", Obs::Bool(rep.pass == (mc <= common.tol)));
    out.details.insert("samples".into(), json!(rep.samples));
    out.default_check("pass", Cmp::Eq, Target::Bool(true));
    out.default_check("consistent", Cmp::Eq, Target::Bool(true));
    Ok(out)
}

fn run_equiv(
    p: &Problem,
    common: Common,
    (source, at): (&str, &[f64]),
    (target, to): (&str, &[f64]),
    max_order: usize,
) -> TaskResult {
    let opts = EquivalenceOptions {
        chain: ChainOptions {
            max_order,
            seed: common.seed,
            ..ChainOptions::default()
        },
        nbhd: Neighborhood {
            seed: common.seed,
            ..Neighborhood::default()
        },
        tol: common.tol,
    };
    let e =
        equivalence_test(&p.coframes[source], at, &p.coframes[target], to, opts).map_err(err)?;
    let mut out = Outcome::new();
    out.set("verdict", Obs::Text(e.verdict.tag().into()));
    out.set(
        "order",
        match e.order {
            Some(o) => Obs::Int(o as i64),
            None => Obs::Missing(e.reason.clone()),
        },
    );
    out.set("difference", Obs::Num(e.max_difference));
    out.details.insert("reason".into(), json!(e.reason));
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn run_develop(
    p: &Problem,
    common: Common,
    source: &str,
    target: &str,
    start: &[f64],
    path: &PathSpec,
    path2: Option<&PathSpec>,
    refine: &[usize],
) -> TaskResult {
    let src = &p.coframes[source];
    let tgt = &p.coframes[target];
    let dev = develop_along_path(src.system(), tgt, start, path).map_err(err)?;
    let mut out = Outcome::new();
    out.set(
        "residual",
        Obs::Num(pullback_residual(src, tgt, &dev).map_err(err)?),
    );
    out.set(
        "velocity",
        Obs::Num(velocity_residual(src.system(), tgt, &dev).map_err(err)?),
    );
    out.set(
        "transport",
        Obs::Num(structure_transport_defect(src, tgt, &dev).map_err(err)?),
    );
    out.set("end", Obs::Point(dev.end.clone()));
    out.details.insert("steps".into(), json!(path.steps));
    out.default_check("residual", Cmp::Le, Target::Num(common.tol));
    if refine.len() >= 2 {
        let study = step_refinement(src, tgt, start, path, refine).map_err(err)?;
        let ratios = convergence_ratios(&study);
        let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        out.set("ratio_min", Obs::Num(lo));
        out.set("ratio_max", Obs::Num(hi));
        out.details.insert(
            "refinement".into(),
            json!(study
                .iter()
                .map(|s| json!({"steps": s.steps, "residual": number(s.residual)}))
                .collect::<Vec<_>>()),
        );
        out.details.insert(
            "ratios".into(),
            Json::Array(ratios.iter().map(|r| number(*r)).collect()),
        );
        out.default_check("ratio_min", Cmp::Ge, Target::Num(RATIO_RANGE.0));
        out.default_check("ratio_max", Cmp::Le, Target::Num(RATIO_RANGE.1));
    }
    if let Some(p2) = path2 {
        let d = path_independence_defect(src.system(), tgt, start, path, p2).map_err(err)?;
        out.set("independence", Obs::Num(d));
        out.default_check("independence", Cmp::Le, Target::Num(common.tol));
    }
    Ok(out)
}

fn run_monodromy(
    p: &Problem,
    common: Common,
    forms: &str,
    target: &str,
    start: &[f64],
    lp: &PathSpec,
    lp2: Option<&PathSpec>,
) -> TaskResult {
    let src = p.system(forms).expect("checked in prepare");
    let tgt = &p.coframes[target];
    let d = monodromy_defect(src, tgt, lp, start).map_err(err)?;
    let mut out = Outcome::new();
    out.set("defect", Obs::Num(d));
    out.details.insert("steps".into(), json!(lp.steps));
    out.default_check("defect", Cmp::Le, Target::Num(common.tol));
    if let Some(l2) = lp2 {
        let d2 = monodromy_defect(src, tgt, l2, start).map_err(err)?;
        out.set("reparam", Obs::Num((d - d2).abs()));
        out.default_check("reparam", Cmp::Le, Target::Num(REPARAM_TOL));
    }
    Ok(out)
}

fn compare(obs: &Obs, e: &Expectation, common: Common) -> Result<bool, String> {
    let ord = |a: f64, b: f64| match e.cmp {
        Cmp::Eq => (a - b).abs() <= common.tol,
        Cmp::Le => a <= b,
        Cmp::Ge => a >= b,
        Cmp::Lt => a < b,
        Cmp::Gt => a > b,
    };
    Ok(match (obs, &e.target) {
        (Obs::Num(v), Target::Num(t)) => v.is_finite() && ord(*v, *t),
        (Obs::Int(v), Target::Int(t)) => match e.cmp {
            Cmp::Eq => v == t,
            Cmp::Le => v <= t,
            Cmp::Ge => v >= t,
            Cmp::Lt => v < t,
            Cmp::Gt => v > t,
        },
        // `not_equivalent` in a file matches the tag `not-equivalent`
        (Obs::Text(v), Target::Text(t)) => v.replace('_', "-") == t.replace('_', "-"),
        (Obs::Bool(v), Target::Bool(t)) => v == t,
        (Obs::Sym(v, chart), Target::Sym(t)) => {
            probably_equal(v, t, chart, &common.sampling()).map_err(err)?
        }
        (Obs::Point(v), Target::Point(t)) => {
            v.len() == t.len()
                && v.iter()
                    .zip(t)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
                    <= common.tol
        }
        _ => false,
    })
}

fn tolerance_of(e: &Expectation, common: Common) -> Option<f64> {
    match (&e.target, e.cmp) {
        (Target::Num(_) | Target::Sym(_) | Target::Point(_), Cmp::Eq) => Some(common.tol),
        _ => None,
    }
}

/// Run one prepared task.
pub fn execute(problem: &Problem, t: &PreparedTask) -> TaskReport {
    let c = t.common;
    let result = match &t.spec {
        Spec::Analyze {
            coframe,
            point,
            max_order,
            samples,
        } => run_analyze(problem, c, coframe, point.as_deref(), *max_order, *samples),
        Spec::AlgebroidCheck { algebroid } => run_algebroid_check(problem, c, algebroid),
        Spec::Isotropy { source, points } => run_isotropy(problem, c, source, points),
        Spec::Modular {
            algebroid,
            densities,
            rescale_tol,
        } => run_modular(problem, c, algebroid, *densities, *rescale_tol),
        Spec::CheckRealization { realization } => run_check_realization(problem, c, realization),
        Spec::Equiv {
            source,
            at,
            target,
            to,
            max_order,
        } => run_equiv(problem, c, (source, at), (target, to), *max_order),
        Spec::Develop {
            source,
            target,
            start,
            path,
            path2,
            refine,
        } => run_develop(
            problem,
            c,
            source,
            target,
            start,
            path,
            path2.as_ref(),
            refine,
        ),
        Spec::Monodromy {
            forms,
            target,
            start,
            lp,
            lp2,
        } => run_monodromy(problem, c, forms, target, start, lp, lp2.as_ref()),
    };
    let mut report = TaskReport {
        kind: t.kind.name().to_string(),
        name: t.name.clone(),
        pass: false,
        error: None,
        checks: Vec::new(),
        details: BTreeMap::new(),
    };
    let out = match result {
        Ok(o) => o,
        Err(e) => {
            report.error = Some(e);
            return report;
        }
    };
    let stated: BTreeSet<&str> = t.expects.iter().map(|e| e.key.as_str()).collect();
    let checks = out
        .defaults
        .iter()
        .filter(|d| !stated.contains(d.key.as_str()))
        .chain(&t.expects);
    for e in checks {
        let (value, pass, note) = match out.obs.get(&e.key) {
            None => (
                Json::Null,
                false,
                Some("not computed by this task".to_string()),
            ),
            Some(Obs::Missing(why)) => (Json::Null, false, Some(why.clone())),
            Some(o) => match compare(o, e, c) {
                Ok(pass) => (o.json(), pass, None),
                Err(msg) => (o.json(), false, Some(msg)),
            },
        };
        let mut expected = format!("{} {}", e.cmp.symbol(), e.target.describe());
        if let Some(n) = note {
            expected.push_str(&format!(" ({n})"));
        }
        report.checks.push(Check {
            name: e.key.clone(),
            value,
            expected,
            tolerance: tolerance_of(e, c),
            seed: c.seed,
            pass,
        });
    }
    report.details = out.details;
    report.pass = report.checks.iter().all(|k| k.pass);
    report
}

/// Prepare, run concurrently, and collect reports in declaration order.
pub fn run(problem: &Problem, opts: &RunOptions) -> Result<Report, Diagnostic> {
    let prepared = prepare_all(problem, opts)?;
    let reports: Vec<TaskReport> = std::thread::scope(|s| {
        let handles: Vec<_> = prepared
            .iter()
            .map(|t| s.spawn(move || execute(problem, t)))
            .collect();
        handles
            .into_iter()
            .zip(&prepared)
            .map(|(h, t)| {
                h.join().unwrap_or_else(|_| TaskReport {
                    kind: t.kind.name().to_string(),
                    name: t.name.clone(),
                    pass: false,
                    error: Some("task panicked".into()),
                    checks: Vec::new(),
                    details: BTreeMap::new(),
                })
            })
            .collect()
    });
    Ok(Report::new(opts.seed, opts.inputs.clone(), reports))
}
