//! Syntax tree of a problem file. Expressions are stored normalized.

use crate::symbolic::{Expr, Relation};

use super::lexer::Span;

#[derive(Clone, Debug, PartialEq)]
pub struct Ident {
    pub name: String,
    pub span: Span,
}

impl Ident {
    pub fn new(name: &str) -> Self {
        Ident {
            name: name.to_string(),
            span: Span::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct File {
    pub items: Vec<Item>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Item {
    /// `function h, H;` declares abstract functions.
    Functions(Vec<Ident>),
    /// Global rewrite rule, applied on every chart.
    Rule(RuleDecl),
    Chart(ChartDecl),
    Forms(FormsDecl),
    Algebroid(AlgebroidDecl),
    Realization(RealizationDecl),
    Task(TaskDecl),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RuleDecl {
    pub lhs: Expr,
    pub rhs: Expr,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChartDecl {
    pub name: Ident,
    pub coords: Vec<Ident>,
    pub stmts: Vec<ChartStmt>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ChartStmt {
    Interval {
        coord: Ident,
        lo: Expr,
        hi: Expr,
    },
    Require {
        lhs: Expr,
        rel: Relation,
        rhs: Expr,
        span: Span,
    },
    Param {
        name: Ident,
        value: Expr,
    },
    Bind {
        name: Ident,
        param: Ident,
        body: Expr,
    },
    /// `solve J(k) : J' = rhs from J(k0) = j0 on (lo, hi) [offset d];`
    Solve(SolveStmt),
    Rule(RuleDecl),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveStmt {
    pub name: Ident,
    pub var: Ident,
    pub rhs: Expr,
    pub x0: Expr,
    pub y0: Expr,
    pub lo: Expr,
    pub hi: Expr,
    pub offset: Option<Expr>,
    pub span: Span,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FormsKind {
    /// Square and independent.
    Coframe,
    /// Any number of one-forms.
    Forms,
}

impl FormsKind {
    pub fn keyword(self) -> &'static str {
        match self {
            FormsKind::Coframe => "coframe",
            FormsKind::Forms => "forms",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FormsDecl {
    pub kind: FormsKind,
    pub name: Ident,
    pub chart: Ident,
    /// `label = one-form in d[x] atoms`.
    pub forms: Vec<(Ident, Expr)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlgebroidDecl {
    pub name: Ident,
    /// `None` for a Lie algebra over a point.
    pub base: Option<Ident>,
    pub rank: usize,
    pub stmts: Vec<AlgebroidStmt>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum AlgebroidStmt {
    /// `bracket e1 e2 = -k*e3;`
    Bracket { i: Ident, j: Ident, value: Expr },
    /// `anchor e1 = H*sin(t)*D[k] + ...;`
    Anchor { e: Ident, value: Expr },
}

#[derive(Clone, Debug, PartialEq)]
pub struct RealizationDecl {
    pub name: Ident,
    pub coframe: Ident,
    pub algebroid: Ident,
    pub map: Vec<(Ident, Expr)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskDecl {
    pub kind: Ident,
    pub name: Ident,
    pub stmts: Vec<TaskStmt>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cmp {
    Eq,
    Le,
    Ge,
    Lt,
    Gt,
}

impl Cmp {
    pub fn symbol(self) -> &'static str {
        match self {
            Cmp::Eq => "=",
            Cmp::Le => "<=",
            Cmp::Ge => ">=",
            Cmp::Lt => "<",
            Cmp::Gt => ">",
        }
    }
}

/// `key = value;` or `expect key[1,2,3] <= value;`
#[derive(Clone, Debug, PartialEq)]
pub struct TaskStmt {
    pub expect: bool,
    pub key: Ident,
    pub index: Vec<usize>,
    pub cmp: Cmp,
    pub value: Value,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Expr(Expr, Span),
    /// `(u = 1, v = 0)`.
    Point(Vec<(Ident, Expr)>, Span),
    List(Vec<Value>, Span),
    /// `curve(s)(x = cos(s), y = sin(s))`.
    Curve {
        param: Ident,
        comps: Vec<(Ident, Expr)>,
        span: Span,
    },
}

impl Value {
    pub fn span(&self) -> Span {
        match self {
            Value::Expr(_, s) | Value::Point(_, s) | Value::List(_, s) => *s,
            Value::Curve { span, .. } => *span,
        }
    }

    /// A bare identifier.
    pub fn as_name(&self) -> Option<&str> {
        match self {
            Value::Expr(e, _) => e.as_symbol(),
            _ => None,
        }
    }
}
