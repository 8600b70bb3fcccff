//! From syntax tree to charts, coframes, algebroids and realizations.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ast::*;
use super::lexer::Span;
use super::Diagnostic;
use crate::algebroid::TrivializedAlgebroid;
use crate::coframe::{Coframe, FormSystem, StructureTable};
use crate::flow::OdeFunction;
use crate::forms::DifferentialForm;
use crate::realization::Realization;
use crate::symbolic::{
    normalize, Binding, Bindings, Chart, Env, Expr, RewriteRule, RuleSet, Sampling,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LowerOptions {
    /// Seeds the surrogate bindings of abstract functions and the coframe
    /// independence check.
    pub seed: u64,
}

impl Default for LowerOptions {
    fn default() -> Self {
        LowerOptions {
            seed: crate::DEFAULT_SEED,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RealizationEntry {
    pub realization: Realization,
    pub algebroid: String,
}

/// Everything a problem file defines, by name.
#[derive(Clone, Debug, Default)]
pub struct Problem {
    pub charts: BTreeMap<String, Arc<Chart>>,
    pub coframes: BTreeMap<String, Coframe>,
    pub systems: BTreeMap<String, FormSystem>,
    pub algebroids: BTreeMap<String, TrivializedAlgebroid>,
    pub realizations: BTreeMap<String, RealizationEntry>,
    pub abstract_functions: Vec<String>,
    pub tasks: Vec<TaskDecl>,
}

impl Problem {
    /// A coframe's forms, or a declared form system.
    pub fn system(&self, name: &str) -> Option<&FormSystem> {
        self.coframes
            .get(name)
            .map(Coframe::system)
            .or_else(|| self.systems.get(name))
    }
}

/// Stable 64-bit hash of a name, so surrogates do not depend on declaration
/// order.
fn name_hash(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn dyadic(v: f64) -> Expr {
    Expr::frac((v * 1024.0).round() as i64, 1024)
}

/// `2 + sin(a s + b) + c s^2` with seeded coefficients: a smooth, positive,
/// non-polynomial stand-in used to evaluate identities in an abstract
/// function.
pub fn surrogate(name: &str, seed: u64) -> Binding {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ name_hash(name));
    let a = dyadic(rng.gen_range(0.5..1.5));
    let b = dyadic(rng.gen_range(0.0..6.0));
    let c = dyadic(rng.gen_range(0.1..0.5));
    let s = Expr::sym("s");
    let body = Expr::int(2) + (a * s.clone() + b).sin() + c * s.pow(2);
    Binding::symbolic("s", normalize(&body))
}

struct Lowerer {
    opts: LowerOptions,
    functions: Vec<Ident>,
    rules: Vec<RuleDecl>,
    out: Problem,
}

fn constant(e: &Expr, params: &[(String, f64)], span: Span) -> Result<f64, Diagnostic> {
    let b = Bindings::new();
    let mut env: Env<'_, f64> = Env::new(&b);
    for (n, v) in params {
        env.set(n, *v);
    }
    let v = e
        .eval(&env)
        .map_err(|err| span.error(format!("expected a constant: {err}")))?;
    if !v.is_finite() {
        return Err(span.error(format!("`{e}` is not finite")));
    }
    Ok(v)
}

/// Check that `e` only uses the allowed symbols and bound functions.
fn check_symbols(e: &Expr, chart: &Chart, extra: &[&str], span: Span) -> Result<(), Diagnostic> {
    for s in e.symbols() {
        let ok = &*s == "pi"
            || extra.contains(&&*s)
            || chart.coords().iter().any(|c| *c == s)
            || chart.params().iter().any(|(p, _)| *p == s);
        if !ok {
            return Err(span.error(format!("unknown symbol `{s}` on chart `{}`", chart.name())));
        }
    }
    for (f, _) in e.functions() {
        if chart.bindings().get(&f).is_none() {
            return Err(span.error(format!(
                "function `{f}` is neither declared with `function` nor bound on chart `{}`",
                chart.name()
            )));
        }
    }
    Ok(())
}

/// Coefficients of `e` with respect to the atoms `prefix[x]` for each chart
/// coordinate `x`; `e` must be linear in them with no remainder.
pub(crate) fn linear_coefficients(
    e: &Expr,
    chart: &Chart,
    prefix: &str,
    span: Span,
) -> Result<Vec<Expr>, Diagnostic> {
    let open = format!("{prefix}[");
    let atoms: Vec<String> = chart
        .coords()
        .iter()
        .map(|c| format!("{prefix}[{c}]"))
        .collect();
    for s in e.symbols() {
        if s.starts_with(&open) && !atoms.iter().any(|a| **a == *s) {
            return Err(span.error(format!(
                "`{s}` does not name a coordinate of chart `{}`",
                chart.name()
            )));
        }
    }
    let mut coeffs = Vec::with_capacity(atoms.len());
    let mut rest = e.clone();
    for a in &atoms {
        let c = normalize(&e.diff(a));
        if c.symbols().iter().any(|s| s.starts_with(&open)) {
            return Err(span.error(format!("`{e}` is not linear in the `{prefix}[..]` atoms")));
        }
        rest = rest - c.clone() * Expr::sym(a);
        coeffs.push(c);
    }
    let rest = normalize(&rest);
    if !rest.is_zero() {
        return Err(span.error(format!("term `{rest}` carries no `{prefix}[..]` atom")));
    }
    for c in &coeffs {
        check_symbols(c, chart, &[], span)?;
    }
    Ok(coeffs)
}

/// `e1`, `e2`, ... up to `n`, as a zero-based index.
fn basis_index(id: &Ident, n: usize) -> Result<usize, Diagnostic> {
    let k = id
        .name
        .strip_prefix('e')
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|k| (1..=n).contains(k))
        .ok_or_else(|| {
            id.span.error(format!(
                "expected a basis section `e1` .. `e{n}`, found `{}`",
                id.name
            ))
        })?;
    Ok(k - 1)
}

impl Lowerer {
    fn global_rules(&self) -> Result<RuleSet, Diagnostic> {
        let mut rs = RuleSet::new();
        for r in &self.rules {
            rs.push(RewriteRule::new(&r.lhs, &r.rhs).map_err(|e| r.span.error(e.to_string()))?);
        }
        Ok(rs)
    }

    fn chart(&mut self, c: &ChartDecl) -> Result<(), Diagnostic> {
        if self.out.charts.contains_key(&c.name.name) {
            return Err(c
                .name
                .span
                .error(format!("chart `{}` defined twice", c.name.name)));
        }
        let mut seen = BTreeSet::new();
        for coord in &c.coords {
            if !seen.insert(coord.name.as_str()) {
                return Err(coord
                    .span
                    .error(format!("duplicate coordinate `{}`", coord.name)));
            }
            if coord.name == "pi" {
                return Err(coord.span.error("`pi` is reserved"));
            }
        }
        let mut params: Vec<(String, f64)> = Vec::new();
        for s in &c.stmts {
            if let ChartStmt::Param { name, value } = s {
                let v = constant(value, &params, name.span)?;
                if params.iter().any(|(n, _)| *n == name.name) || seen.contains(name.name.as_str())
                {
                    return Err(name.span.error(format!("`{}` defined twice", name.name)));
                }
                params.push((name.name.clone(), v));
            }
        }
        let mut intervals: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
        for s in &c.stmts {
            if let ChartStmt::Interval { coord, lo, hi } = s {
                if !seen.contains(coord.name.as_str()) {
                    return Err(coord.span.error(format!(
                        "`{}` is not a coordinate of chart `{}`",
                        coord.name, c.name.name
                    )));
                }
                let lo = constant(lo, &params, coord.span)?;
                let hi = constant(hi, &params, coord.span)?;
                if !(lo < hi) {
                    return Err(coord.span.error(format!("empty interval ({lo}, {hi})")));
                }
                if intervals.insert(&coord.name, (lo, hi)).is_some() {
                    return Err(coord
                        .span
                        .error(format!("interval for `{}` given twice", coord.name)));
                }
            }
        }
        let mut spec = Vec::with_capacity(c.coords.len());
        for coord in &c.coords {
            let (lo, hi) = *intervals.get(coord.name.as_str()).ok_or_else(|| {
                coord.span.error(format!(
                    "coordinate `{}` needs `{} in (lo, hi);`",
                    coord.name, coord.name
                ))
            })?;
            spec.push((coord.name.as_str(), lo, hi));
        }
        let mut chart =
            Chart::new(&c.name.name, &spec).map_err(|e| c.name.span.error(e.to_string()))?;
        for (n, v) in &params {
            chart.set_param(n, *v);
        }
        let mut bindings = Bindings::new();
        for s in &c.stmts {
            if let ChartStmt::Bind { name, param, body } = s {
                if bindings.get(&name.name).is_some() {
                    return Err(name.span.error(format!("`{}` bound twice", name.name)));
                }
                bindings.insert(&name.name, Binding::symbolic(&param.name, body.clone()));
            }
        }
        for s in &c.stmts {
            if let ChartStmt::Solve(sv) = s {
                if bindings.get(&sv.name.name).is_some() {
                    return Err(sv
                        .name
                        .span
                        .error(format!("`{}` bound twice", sv.name.name)));
                }
                let f = self.solve(sv, &params, &bindings)?;
                bindings.insert(&sv.name.name, Binding::Numeric(Arc::new(f)));
            }
        }
        for f in &self.functions {
            if bindings.get(&f.name).is_none() {
                bindings.insert(&f.name, surrogate(&f.name, self.opts.seed));
            }
        }
        let mut rules = self.global_rules()?;
        for s in &c.stmts {
            if let ChartStmt::Rule(r) = s {
                rules.push(
                    RewriteRule::new(&r.lhs, &r.rhs).map_err(|e| r.span.error(e.to_string()))?,
                );
            }
        }
        chart = chart.with_bindings(bindings).with_rules(rules);
        // binding bodies may use parameters and other bound functions
        for s in &c.stmts {
            match s {
                ChartStmt::Bind { param, body, name } => {
                    check_symbols(body, &chart, &[param.name.as_str()], name.span)?
                }
                ChartStmt::Require {
                    lhs,
                    rel,
                    rhs,
                    span,
                } => {
                    check_symbols(lhs, &chart, &[], *span)?;
                    check_symbols(rhs, &chart, &[], *span)?;
                    chart = chart.with_constraint(lhs.clone(), *rel, rhs.clone());
                }
                _ => {}
            }
        }
        self.out.charts.insert(c.name.name.clone(), Arc::new(chart));
        Ok(())
    }

    fn solve(
        &self,
        s: &SolveStmt,
        params: &[(String, f64)],
        bindings: &Bindings,
    ) -> Result<OdeFunction, Diagnostic> {
        for sym in s.rhs.symbols() {
            let ok = &*sym == "pi"
                || *sym == *s.name.name
                || *sym == *s.var.name
                || params.iter().any(|(p, _)| *p == *sym);
            if !ok {
                return Err(s.span.error(format!(
                    "unknown symbol `{sym}` in the equation for `{}`",
                    s.name.name
                )));
            }
        }
        let x0 = constant(&s.x0, params, s.span)?;
        let y0 = constant(&s.y0, params, s.span)?;
        let lo = constant(&s.lo, params, s.span)?;
        let hi = constant(&s.hi, params, s.span)?;
        let offset = match &s.offset {
            Some(o) => constant(o, params, s.span)?,
            None => 0.0,
        };
        let ps = params
            .iter()
            .map(|(n, v)| (Arc::from(n.as_str()), *v))
            .collect();
        let f = OdeFunction::new(
            &s.name.name,
            &s.var.name,
            &s.name.name,
            s.rhs.clone(),
            ps,
            bindings.clone(),
            (x0, y0),
            (lo, hi),
        )
        .map_err(|e| {
            s.span
                .error(format!("cannot integrate `{}`: {e}", s.name.name))
        })?;
        Ok(f.with_offset(offset))
    }

    fn chart_ref(&self, id: &Ident) -> Result<Arc<Chart>, Diagnostic> {
        self.out
            .charts
            .get(&id.name)
            .cloned()
            .ok_or_else(|| id.span.error(format!("unknown chart `{}`", id.name)))
    }

    fn forms(&mut self, d: &FormsDecl) -> Result<(), Diagnostic> {
        let name = &d.name.name;
        if self.out.coframes.contains_key(name) || self.out.systems.contains_key(name) {
            return Err(d.name.span.error(format!("forms `{name}` defined twice")));
        }
        let chart = self.chart_ref(&d.chart)?;
        let mut forms = Vec::with_capacity(d.forms.len());
        for (label, e) in &d.forms {
            let coeffs = linear_coefficients(e, &chart, "d", label.span)?;
            forms.push(
                DifferentialForm::one_form(chart.clone(), &coeffs)
                    .map_err(|err| label.span.error(err.to_string()))?,
            );
        }
        match d.kind {
            FormsKind::Coframe => {
                let sampling = Sampling::default().with_seed(self.opts.seed);
                let c = Coframe::new(name, chart, forms, &sampling)
                    .map_err(|e| d.name.span.error(e.to_string()))?;
                self.out.coframes.insert(name.clone(), c);
            }
            FormsKind::Forms => {
                let s = FormSystem::new(name, chart, forms)
                    .map_err(|e| d.name.span.error(e.to_string()))?;
                self.out.systems.insert(name.clone(), s);
            }
        }
        Ok(())
    }

    fn algebroid(&mut self, a: &AlgebroidDecl) -> Result<(), Diagnostic> {
        let name = &a.name.name;
        if self.out.algebroids.contains_key(name) {
            return Err(a
                .name
                .span
                .error(format!("algebroid `{name}` defined twice")));
        }
        if a.rank == 0 {
            return Err(a.name.span.error("rank must be positive"));
        }
        let base = match &a.base {
            Some(b) => self.chart_ref(b)?,
            None => {
                Arc::new(Chart::new("point", &[]).map_err(|e| a.name.span.error(e.to_string()))?)
            }
        };
        let n = a.rank;
        let basis: Vec<Expr> = (1..=n).map(|k| Expr::sym(&format!("e{k}"))).collect();
        let mut bracket = StructureTable::zero(n);
        let mut anchor = vec![vec![Expr::zero(); base.dim()]; n];
        let mut seen_b = BTreeSet::new();
        let mut seen_a = BTreeSet::new();
        for s in &a.stmts {
            match s {
                AlgebroidStmt::Bracket { i, j, value } => {
                    let (bi, bj) = (basis_index(i, n)?, basis_index(j, n)?);
                    if bi >= bj {
                        return Err(i.span.error(format!(
                            "write brackets as `bracket e{} e{}`; the other order follows by antisymmetry",
                            bi.min(bj) + 1,
                            bi.max(bj) + 1
                        )));
                    }
                    if !seen_b.insert((bi, bj)) {
                        return Err(i.span.error(format!(
                            "bracket of e{} and e{} given twice",
                            bi + 1,
                            bj + 1
                        )));
                    }
                    for sym in value.symbols() {
                        let is_basis = basis.iter().any(|b| b.as_symbol() == Some(&*sym));
                        let known = &*sym == "pi"
                            || base.coords().iter().any(|c| *c == sym)
                            || base.params().iter().any(|(p, _)| *p == sym);
                        if !is_basis && !known {
                            return Err(i.span.error(format!("unknown symbol `{sym}` in bracket")));
                        }
                    }
                    let mut rest = value.clone();
                    for (k, b) in basis.iter().enumerate() {
                        let name = b.as_symbol().unwrap_or_default();
                        let c = normalize(&value.diff(name));
                        if c.symbols()
                            .iter()
                            .any(|s| basis.iter().any(|b| b.as_symbol() == Some(&**s)))
                        {
                            return Err(i.span.error("bracket value must be linear in e1 .. en"));
                        }
                        check_symbols(&c, &base, &[], i.span)?;
                        rest = rest - c.clone() * b.clone();
                        bracket.set(k, bi, bj, c);
                    }
                    if !normalize(&rest).is_zero() {
                        return Err(i
                            .span
                            .error("bracket value must be a combination of e1 .. en"));
                    }
                }
                AlgebroidStmt::Anchor { e, value } => {
                    let k = basis_index(e, n)?;
                    if !seen_a.insert(k) {
                        return Err(e.span.error(format!("anchor of e{} given twice", k + 1)));
                    }
                    anchor[k] = linear_coefficients(value, &base, "D", e.span)?;
                }
            }
        }
        let alg = TrivializedAlgebroid::new(name, base, bracket, anchor)
            .map_err(|err| a.name.span.error(err.to_string()))?;
        self.out.algebroids.insert(name.clone(), alg);
        Ok(())
    }

    fn realization(&mut self, r: &RealizationDecl) -> Result<(), Diagnostic> {
        let name = &r.name.name;
        if self.out.realizations.contains_key(name) {
            return Err(r
                .name
                .span
                .error(format!("realization `{name}` defined twice")));
        }
        let coframe = self
            .out
            .coframes
            .get(&r.coframe.name)
            .cloned()
            .ok_or_else(|| {
                r.coframe
                    .span
                    .error(format!("unknown coframe `{}`", r.coframe.name))
            })?;
        let alg = self.out.algebroids.get(&r.algebroid.name).ok_or_else(|| {
            r.algebroid
                .span
                .error(format!("unknown algebroid `{}`", r.algebroid.name))
        })?;
        let base = alg.base();
        let mut map = vec![None; base.dim()];
        for (coord, e) in &r.map {
            let a = base.coord_index(&coord.name).map_err(|_| {
                coord.span.error(format!(
                    "`{}` is not a coordinate of the base `{}`",
                    coord.name,
                    base.name()
                ))
            })?;
            if map[a].is_some() {
                return Err(coord
                    .span
                    .error(format!("map for `{}` given twice", coord.name)));
            }
            check_symbols(e, coframe.chart(), &[], coord.span)?;
            map[a] = Some(e.clone());
        }
        let map = map
            .into_iter()
            .zip(base.coords())
            .map(|(m, c)| {
                m.ok_or_else(|| {
                    r.name
                        .span
                        .error(format!("realization needs `map {c} = ...;`"))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        if coframe.dim() != alg.rank() {
            return Err(r.name.span.error(format!(
                "coframe `{}` has {} forms but algebroid `{}` has rank {}",
                r.coframe.name,
                coframe.dim(),
                r.algebroid.name,
                alg.rank()
            )));
        }
        self.out.realizations.insert(
            name.clone(),
            RealizationEntry {
                realization: Realization::new(name, coframe, map),
                algebroid: r.algebroid.name.clone(),
            },
        );
        Ok(())
    }
}

/// Build the named objects of a parsed file. Definitions must precede their
/// use; `function` declarations and top-level rules apply file-wide.
pub fn lower(file: &File, opts: LowerOptions) -> Result<Problem, Diagnostic> {
    let mut l = Lowerer {
        opts,
        functions: Vec::new(),
        rules: Vec::new(),
        out: Problem::default(),
    };
    for item in &file.items {
        match item {
            Item::Functions(names) => {
                for n in names {
                    if l.functions.iter().any(|f| f.name == n.name) {
                        return Err(n
                            .span
                            .error(format!("function `{}` declared twice", n.name)));
                    }
                    l.functions.push(n.clone());
                }
            }
            Item::Rule(r) => l.rules.push(r.clone()),
            _ => {}
        }
    }
    l.out.abstract_functions = l.functions.iter().map(|f| f.name.clone()).collect();
    let mut task_names = BTreeSet::new();
    for item in &file.items {
        match item {
            Item::Functions(_) | Item::Rule(_) => {}
            Item::Chart(c) => l.chart(c)?,
            Item::Forms(d) => l.forms(d)?,
            Item::Algebroid(a) => l.algebroid(a)?,
            Item::Realization(r) => l.realization(r)?,
            Item::Task(t) => {
                if !task_names.insert(t.name.name.clone()) {
                    return Err(t
                        .name
                        .span
                        .error(format!("task `{}` defined twice", t.name.name)));
                }
                l.out.tasks.push(t.clone());
            }
        }
    }
    Ok(l.out)
}
