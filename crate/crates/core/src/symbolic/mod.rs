//! Symbolic scalar expressions.

mod chart;
mod diff;
mod equality;
mod eval;
mod expr;
mod normalize;
mod rewrite;

pub use chart::{Chart, ChartError, Constraint, Relation};
pub use equality::{close, max_abs, probably_equal, probably_zero, Sampling};
pub use eval::{
    Binding, Bindings, Env, EvalError, NumericFunction, SymbolicBinding, DIVISION_FLOOR,
};
pub use expr::{ElemFn, Expr, Node};
pub use normalize::{constant_value, normalize};
pub use rewrite::{RewriteError, RewriteRule, RuleSet, MAX_REWRITE_PASSES};
