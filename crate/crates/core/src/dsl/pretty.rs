//! Canonical text for a syntax tree. `parse(print(f)) == f` for every tree
//! produced by the parser.

use std::fmt::{self, Write};

use super::ast::*;

fn join<T>(items: &[T], f: impl Fn(&T) -> String) -> String {
    items.iter().map(f).collect::<Vec<_>>().join(", ")
}

fn point(comps: &[(Ident, crate::symbolic::Expr)]) -> String {
    format!("({})", join(comps, |(n, e)| format!("{} = {e}", n.name)))
}

fn value(v: &Value) -> String {
    match v {
        Value::Expr(e, _) => e.to_string(),
        Value::Point(comps, _) => point(comps),
        Value::List(items, _) => format!("[{}]", join(items, value)),
        Value::Curve { param, comps, .. } => format!("curve({}){}", param.name, point(comps)),
    }
}

impl fmt::Display for File {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, item) in self.items.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write_item(f, item)?;
        }
        Ok(())
    }
}

fn write_item(f: &mut impl Write, item: &Item) -> fmt::Result {
    match item {
        Item::Functions(names) => writeln!(f, "function {};", join(names, |n| n.name.clone())),
        Item::Rule(r) => writeln!(f, "rule {} -> {};", r.lhs, r.rhs),
        Item::Chart(c) => {
            writeln!(
                f,
                "chart {} ({}) {{",
                c.name.name,
                join(&c.coords, |n| n.name.clone())
            )?;
            for s in &c.stmts {
                match s {
                    ChartStmt::Interval { coord, lo, hi } => {
                        writeln!(f, "  {} in ({lo}, {hi});", coord.name)?
                    }
                    ChartStmt::Require { lhs, rel, rhs, .. } => {
                        writeln!(f, "  require {lhs} {} {rhs};", rel.symbol())?
                    }
                    ChartStmt::Param { name, value } => {
                        writeln!(f, "  param {} = {value};", name.name)?
                    }
                    ChartStmt::Bind { name, param, body } => {
                        writeln!(f, "  bind {}({}) = {body};", name.name, param.name)?
                    }
                    ChartStmt::Solve(s) => {
                        let n = &s.name.name;
                        write!(
                            f,
                            "  solve {n}({}) : {n}' = {} from {n}({}) = {} on ({}, {})",
                            s.var.name, s.rhs, s.x0, s.y0, s.lo, s.hi
                        )?;
                        if let Some(o) = &s.offset {
                            write!(f, " offset {o}")?;
                        }
                        writeln!(f, ";")?
                    }
                    ChartStmt::Rule(r) => writeln!(f, "  rule {} -> {};", r.lhs, r.rhs)?,
                }
            }
            writeln!(f, "}}")
        }
        Item::Forms(d) => {
            writeln!(
                f,
                "{} {} on {} {{",
                d.kind.keyword(),
                d.name.name,
                d.chart.name
            )?;
            for (label, e) in &d.forms {
                writeln!(f, "  {} = {e};", label.name)?;
            }
            writeln!(f, "}}")
        }
        Item::Algebroid(a) => {
            write!(f, "algebroid {}", a.name.name)?;
            if let Some(b) = &a.base {
                write!(f, " on {}", b.name)?;
            }
            writeln!(f, " (rank = {}) {{", a.rank)?;
            for s in &a.stmts {
                match s {
                    AlgebroidStmt::Bracket { i, j, value } => {
                        writeln!(f, "  bracket {} {} = {value};", i.name, j.name)?
                    }
                    AlgebroidStmt::Anchor { e, value } => {
                        writeln!(f, "  anchor {} = {value};", e.name)?
                    }
                }
            }
            writeln!(f, "}}")
        }
        Item::Realization(r) => {
            writeln!(f, "realization {} {{", r.name.name)?;
            writeln!(f, "  coframe = {};", r.coframe.name)?;
            writeln!(f, "  algebroid = {};", r.algebroid.name)?;
            for (c, e) in &r.map {
                writeln!(f, "  map {} = {e};", c.name)?;
            }
            writeln!(f, "}}")
        }
        Item::Task(t) => {
            writeln!(f, "task {} {} {{", t.kind.name, t.name.name)?;
            for s in &t.stmts {
                write!(f, "  ")?;
                if s.expect {
                    write!(f, "expect ")?;
                }
                write!(f, "{}", s.key.name)?;
                if !s.index.is_empty() {
                    write!(f, "[{}]", join(&s.index, |i| i.to_string()))?;
                }
                writeln!(f, " {} {};", s.cmp.symbol(), value(&s.value))?;
            }
            writeln!(f, "}}")
        }
    }
}
