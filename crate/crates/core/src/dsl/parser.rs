//! Recursive-descent parser for problem files.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

use super::ast::*;
use super::lexer::{tokenize, Span, Tok, Token};
use super::Diagnostic;
use crate::symbolic::{normalize, ElemFn, Expr, Relation};

pub fn parse(src: &str) -> Result<File, Diagnostic> {
    let tokens = tokenize(src)?;
    let mut p = Parser { tokens, pos: 0 };
    let mut items = Vec::new();
    while !p.at(&Tok::Eof) {
        items.push(p.item()?);
    }
    Ok(File { items })
}

/// Parse a single expression, e.g. from a command line.
pub fn parse_expr(src: &str) -> Result<Expr, Diagnostic> {
    let tokens = tokenize(src)?;
    let mut p = Parser { tokens, pos: 0 };
    let e = p.expr()?;
    p.expect(&Tok::Eof)?;
    Ok(e)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

/// Convert a decimal literal to an exact rational.
fn literal(s: &str, span: Span) -> Result<BigRational, Diagnostic> {
    let (mantissa, exp) = match s.find(['e', 'E']) {
        Some(i) => (&s[..i], &s[i + 1..]),
        None => (s, "0"),
    };
    let exp: i64 = exp
        .parse()
        .map_err(|_| span.error(format!("malformed number `{s}`")))?;
    let (int, frac) = match mantissa.find('.') {
        Some(i) => (&mantissa[..i], &mantissa[i + 1..]),
        None => (mantissa, ""),
    };
    let digits = format!("{int}{frac}");
    let n: BigInt = if digits.is_empty() {
        BigInt::zero()
    } else {
        digits
            .parse()
            .map_err(|_| span.error(format!("malformed number `{s}`")))?
    };
    let shift = exp - frac.len() as i64;
    if shift.abs() > 400 {
        return Err(span.error(format!("exponent out of range in `{s}`")));
    }
    let ten = BigInt::from(10);
    let scale = num_traits::pow(ten, shift.unsigned_abs() as usize);
    Ok(if shift >= 0 {
        BigRational::from_integer(n * scale)
    } else {
        BigRational::new(n, scale)
    })
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        let i = (self.pos + k).min(self.tokens.len() - 1);
        &self.tokens[i].tok
    }

    fn span(&self) -> Span {
        self.tokens[self.pos].span
    }

    fn at(&self, t: &Tok) -> bool {
        self.peek() == t
    }

    fn at_word(&self, w: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == w)
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.at(t) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn unexpected(&self, what: &str) -> Diagnostic {
        self.span()
            .error(format!("expected {what}, found {}", self.peek()))
    }

    fn expect(&mut self, t: &Tok) -> Result<(), Diagnostic> {
        if self.eat(t) {
            Ok(())
        } else {
            Err(self.unexpected(&t.to_string()))
        }
    }

    fn keyword(&mut self, w: &str) -> Result<(), Diagnostic> {
        if self.at_word(w) {
            self.bump();
            Ok(())
        } else {
            Err(self.unexpected(&format!("`{w}`")))
        }
    }

    fn ident(&mut self) -> Result<Ident, Diagnostic> {
        match self.peek().clone() {
            Tok::Ident(name) => {
                let span = self.bump().span;
                Ok(Ident { name, span })
            }
            _ => Err(self.unexpected("an identifier")),
        }
    }

    fn item(&mut self) -> Result<Item, Diagnostic> {
        let word = match self.peek() {
            Tok::Ident(s) => s.clone(),
            _ => return Err(self.unexpected("an item")),
        };
        match word.as_str() {
            "function" => {
                self.bump();
                let mut names = vec![self.ident()?];
                while self.eat(&Tok::Comma) {
                    names.push(self.ident()?);
                }
                self.expect(&Tok::Semi)?;
                Ok(Item::Functions(names))
            }
            "rule" => Ok(Item::Rule(self.rule()?)),
            "chart" => Ok(Item::Chart(self.chart()?)),
            "coframe" => Ok(Item::Forms(self.forms(FormsKind::Coframe)?)),
            "forms" => Ok(Item::Forms(self.forms(FormsKind::Forms)?)),
            "algebroid" => Ok(Item::Algebroid(self.algebroid()?)),
            "realization" => Ok(Item::Realization(self.realization()?)),
            "task" => Ok(Item::Task(self.task()?)),
            _ => Err(self.span().error(format!(
                "expected an item (chart, function, rule, coframe, forms, algebroid, realization, task), found `{word}`"
            ))),
        }
    }

    fn rule(&mut self) -> Result<RuleDecl, Diagnostic> {
        let span = self.span();
        self.keyword("rule")?;
        let lhs = self.expr()?;
        self.expect(&Tok::Arrow)?;
        let rhs = self.expr()?;
        self.expect(&Tok::Semi)?;
        Ok(RuleDecl { lhs, rhs, span })
    }

    fn chart(&mut self) -> Result<ChartDecl, Diagnostic> {
        self.keyword("chart")?;
        let name = self.ident()?;
        self.expect(&Tok::LParen)?;
        let mut coords = Vec::new();
        if !self.at(&Tok::RParen) {
            coords.push(self.ident()?);
            while self.eat(&Tok::Comma) {
                coords.push(self.ident()?);
            }
        }
        self.expect(&Tok::RParen)?;
        self.expect(&Tok::LBrace)?;
        let mut stmts = Vec::new();
        while !self.eat(&Tok::RBrace) {
            stmts.push(self.chart_stmt()?);
        }
        Ok(ChartDecl {
            name,
            coords,
            stmts,
        })
    }

    fn chart_stmt(&mut self) -> Result<ChartStmt, Diagnostic> {
        let span = self.span();
        let word = match self.peek() {
            Tok::Ident(s) => s.clone(),
            _ => return Err(self.unexpected("a chart statement or `}`")),
        };
        if matches!(self.peek_at(1), Tok::Ident(s) if s == "in") {
            let coord = self.ident()?;
            self.bump();
            self.expect(&Tok::LParen)?;
            let lo = self.expr()?;
            self.expect(&Tok::Comma)?;
            let hi = self.expr()?;
            self.expect(&Tok::RParen)?;
            self.expect(&Tok::Semi)?;
            return Ok(ChartStmt::Interval { coord, lo, hi });
        }
        match word.as_str() {
            "require" => {
                self.bump();
                let lhs = self.expr()?;
                let rel = match self.peek() {
                    Tok::Lt => Relation::Lt,
                    Tok::Le => Relation::Le,
                    Tok::Gt => Relation::Gt,
                    Tok::Ge => Relation::Ge,
                    Tok::Ne => Relation::Ne,
                    _ => return Err(self.unexpected("one of `<`, `<=`, `>`, `>=`, `!=`")),
                };
                self.bump();
                let rhs = self.expr()?;
                self.expect(&Tok::Semi)?;
                Ok(ChartStmt::Require {
                    lhs,
                    rel,
                    rhs,
                    span,
                })
            }
            "param" => {
                self.bump();
                let name = self.ident()?;
                self.expect(&Tok::Eq)?;
                let value = self.expr()?;
                self.expect(&Tok::Semi)?;
                Ok(ChartStmt::Param { name, value })
            }
            "bind" => {
                self.bump();
                let name = self.ident()?;
                self.expect(&Tok::LParen)?;
                let param = self.ident()?;
                self.expect(&Tok::RParen)?;
                self.expect(&Tok::Eq)?;
                let body = self.expr()?;
                self.expect(&Tok::Semi)?;
                Ok(ChartStmt::Bind { name, param, body })
            }
            "solve" => self.solve(),
            "rule" => Ok(ChartStmt::Rule(self.rule()?)),
            _ => Err(span.error(format!(
                "expected `<coord> in (lo, hi)`, `require`, `param`, `bind`, `solve` or `rule`, found `{word}`"
            ))),
        }
    }

    fn same_name(&mut self, name: &Ident) -> Result<(), Diagnostic> {
        let other = self.ident()?;
        if other.name != name.name {
            return Err(other.span.error(format!(
                "expected `{}` (the function being solved for), found `{}`",
                name.name, other.name
            )));
        }
        Ok(())
    }

    fn solve(&mut self) -> Result<ChartStmt, Diagnostic> {
        let span = self.span();
        self.keyword("solve")?;
        let name = self.ident()?;
        self.expect(&Tok::LParen)?;
        let var = self.ident()?;
        self.expect(&Tok::RParen)?;
        self.expect(&Tok::Colon)?;
        self.same_name(&name)?;
        self.expect(&Tok::Prime)?;
        self.expect(&Tok::Eq)?;
        let rhs = self.expr()?;
        self.keyword("from")?;
        self.same_name(&name)?;
        self.expect(&Tok::LParen)?;
        let x0 = self.expr()?;
        self.expect(&Tok::RParen)?;
        self.expect(&Tok::Eq)?;
        let y0 = self.expr()?;
        self.keyword("on")?;
        self.expect(&Tok::LParen)?;
        let lo = self.expr()?;
        self.expect(&Tok::Comma)?;
        let hi = self.expr()?;
        self.expect(&Tok::RParen)?;
        let offset = if self.at_word("offset") {
            self.bump();
            Some(self.expr()?)
        } else {
            None
        };
        self.expect(&Tok::Semi)?;
        Ok(ChartStmt::Solve(SolveStmt {
            name,
            var,
            rhs,
            x0,
            y0,
            lo,
            hi,
            offset,
            span,
        }))
    }

    fn forms(&mut self, kind: FormsKind) -> Result<FormsDecl, Diagnostic> {
        self.keyword(kind.keyword())?;
        let name = self.ident()?;
        self.keyword("on")?;
        let chart = self.ident()?;
        self.expect(&Tok::LBrace)?;
        let mut forms = Vec::new();
        while !self.eat(&Tok::RBrace) {
            let label = self.ident()?;
            self.expect(&Tok::Eq)?;
            let e = self.expr()?;
            self.expect(&Tok::Semi)?;
            forms.push((label, e));
        }
        Ok(FormsDecl {
            kind,
            name,
            chart,
            forms,
        })
    }

    fn algebroid(&mut self) -> Result<AlgebroidDecl, Diagnostic> {
        self.keyword("algebroid")?;
        let name = self.ident()?;
        let base = if self.at_word("on") {
            self.bump();
            Some(self.ident()?)
        } else {
            None
        };
        self.expect(&Tok::LParen)?;
        self.keyword("rank")?;
        self.expect(&Tok::Eq)?;
        let rank = self.small_int()?;
        self.expect(&Tok::RParen)?;
        self.expect(&Tok::LBrace)?;
        let mut stmts = Vec::new();
        while !self.eat(&Tok::RBrace) {
            if self.at_word("bracket") {
                self.bump();
                let i = self.ident()?;
                let j = self.ident()?;
                self.expect(&Tok::Eq)?;
                let value = self.expr()?;
                self.expect(&Tok::Semi)?;
                stmts.push(AlgebroidStmt::Bracket { i, j, value });
            } else if self.at_word("anchor") {
                self.bump();
                let e = self.ident()?;
                self.expect(&Tok::Eq)?;
                let value = self.expr()?;
                self.expect(&Tok::Semi)?;
                stmts.push(AlgebroidStmt::Anchor { e, value });
            } else {
                return Err(self.unexpected("`bracket`, `anchor` or `}`"));
            }
        }
        Ok(AlgebroidDecl {
            name,
            base,
            rank,
            stmts,
        })
    }

    fn small_int(&mut self) -> Result<usize, Diagnostic> {
        let span = self.span();
        match self.peek().clone() {
            Tok::Number(s) => {
                self.bump();
                s.parse::<usize>()
                    .map_err(|_| span.error(format!("expected a nonnegative integer, found `{s}`")))
            }
            _ => Err(self.unexpected("an integer")),
        }
    }

    fn realization(&mut self) -> Result<RealizationDecl, Diagnostic> {
        self.keyword("realization")?;
        let name = self.ident()?;
        self.expect(&Tok::LBrace)?;
        let mut coframe = None;
        let mut algebroid = None;
        let mut map = Vec::new();
        while !self.eat(&Tok::RBrace) {
            let span = self.span();
            if self.at_word("map") {
                self.bump();
                let coord = self.ident()?;
                self.expect(&Tok::Eq)?;
                let e = self.expr()?;
                self.expect(&Tok::Semi)?;
                map.push((coord, e));
                continue;
            }
            let key = self.ident()?;
            self.expect(&Tok::Eq)?;
            let value = self.ident()?;
            self.expect(&Tok::Semi)?;
            let slot = match key.name.as_str() {
                "coframe" => &mut coframe,
                "algebroid" => &mut algebroid,
                other => {
                    return Err(span.error(format!(
                        "expected `coframe`, `algebroid` or `map`, found `{other}`"
                    )))
                }
            };
            if slot.is_some() {
                return Err(span.error(format!("`{}` given twice", key.name)));
            }
            *slot = Some(value);
        }
        let end = self.tokens[self.pos.saturating_sub(1)].span;
        let coframe = coframe.ok_or_else(|| end.error("realization needs `coframe = <name>;`"))?;
        let algebroid =
            algebroid.ok_or_else(|| end.error("realization needs `algebroid = <name>;`"))?;
        Ok(RealizationDecl {
            name,
            coframe,
            algebroid,
            map,
        })
    }

    /// A task kind or name: `analyze`, or hyphenated words written without
    /// spaces such as `algebroid-check`.
    fn hyphenated(&mut self) -> Result<Ident, Diagnostic> {
        let first = self.ident()?;
        let mut name = first.name.clone();
        loop {
            let prev_end = self.tokens[self.pos - 1].end;
            let minus = &self.tokens[self.pos];
            let next = &self.tokens[(self.pos + 1).min(self.tokens.len() - 1)];
            if minus.tok == Tok::Minus
                && minus.start == prev_end
                && next.start == minus.end
                && matches!(next.tok, Tok::Ident(_))
            {
                self.bump();
                let part = self.ident()?;
                name.push('-');
                name.push_str(&part.name);
            } else {
                break;
            }
        }
        Ok(Ident {
            name,
            span: first.span,
        })
    }

    fn task(&mut self) -> Result<TaskDecl, Diagnostic> {
        self.keyword("task")?;
        let kind = self.hyphenated()?;
        let name = self.hyphenated()?;
        self.expect(&Tok::LBrace)?;
        let mut stmts = Vec::new();
        while !self.eat(&Tok::RBrace) {
            stmts.push(self.task_stmt()?);
        }
        Ok(TaskDecl { kind, name, stmts })
    }

    fn task_stmt(&mut self) -> Result<TaskStmt, Diagnostic> {
        let expect = self.at_word("expect") && matches!(self.peek_at(1), Tok::Ident(_));
        if expect {
            self.bump();
        }
        let key = self.ident()?;
        let mut index = Vec::new();
        if expect && self.eat(&Tok::LBracket) {
            index.push(self.small_int()?);
            while self.eat(&Tok::Comma) {
                index.push(self.small_int()?);
            }
            self.expect(&Tok::RBracket)?;
        }
        let cmp = match self.peek() {
            Tok::Eq => Cmp::Eq,
            Tok::Le if expect => Cmp::Le,
            Tok::Ge if expect => Cmp::Ge,
            Tok::Lt if expect => Cmp::Lt,
            Tok::Gt if expect => Cmp::Gt,
            _ if expect => return Err(self.unexpected("one of `=`, `<=`, `>=`, `<`, `>`")),
            _ => return Err(self.unexpected("`=`")),
        };
        self.bump();
        let value = self.value()?;
        self.expect(&Tok::Semi)?;
        Ok(TaskStmt {
            expect,
            key,
            index,
            cmp,
            value,
        })
    }

    fn value(&mut self) -> Result<Value, Diagnostic> {
        let span = self.span();
        if self.eat(&Tok::LBracket) {
            let mut items = Vec::new();
            if !self.at(&Tok::RBracket) {
                items.push(self.value()?);
                while self.eat(&Tok::Comma) {
                    items.push(self.value()?);
                }
            }
            self.expect(&Tok::RBracket)?;
            return Ok(Value::List(items, span));
        }
        if self.at_word("curve") && self.peek_at(1) == &Tok::LParen {
            self.bump();
            self.bump();
            let param = self.ident()?;
            self.expect(&Tok::RParen)?;
            let comps = self.point_body()?;
            return Ok(Value::Curve { param, comps, span });
        }
        if self.at(&Tok::LParen)
            && matches!(self.peek_at(1), Tok::Ident(_))
            && self.peek_at(2) == &Tok::Eq
        {
            return Ok(Value::Point(self.point_body()?, span));
        }
        Ok(Value::Expr(self.expr()?, span))
    }

    fn point_body(&mut self) -> Result<Vec<(Ident, Expr)>, Diagnostic> {
        self.expect(&Tok::LParen)?;
        let mut out = Vec::new();
        loop {
            let name = self.ident()?;
            self.expect(&Tok::Eq)?;
            out.push((name, self.expr()?));
            if !self.eat(&Tok::Comma) {
                break;
            }
        }
        self.expect(&Tok::RParen)?;
        Ok(out)
    }

    /// A full expression, normalized.
    fn expr(&mut self) -> Result<Expr, Diagnostic> {
        Ok(normalize(&self.sum()?))
    }

    fn sum(&mut self) -> Result<Expr, Diagnostic> {
        let mut acc = self.product()?;
        loop {
            if self.eat(&Tok::Plus) {
                acc = acc + self.product()?;
            } else if self.eat(&Tok::Minus) {
                acc = acc - self.product()?;
            } else {
                return Ok(acc);
            }
        }
    }

    fn product(&mut self) -> Result<Expr, Diagnostic> {
        let mut acc = self.unary()?;
        loop {
            if self.eat(&Tok::Star) {
                acc = acc * self.unary()?;
            } else if self.eat(&Tok::Slash) {
                acc = acc / self.unary()?;
            } else {
                return Ok(acc);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, Diagnostic> {
        if self.eat(&Tok::Minus) {
            return Ok(-self.unary()?);
        }
        if self.eat(&Tok::Plus) {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, Diagnostic> {
        let base = self.atom()?;
        if !self.at(&Tok::Caret) {
            return Ok(base);
        }
        self.bump();
        let span = self.span();
        let exp = normalize(&self.unary()?);
        let r = exp
            .as_rational()
            .ok_or_else(|| span.error(format!("exponent `{exp}` must be a rational constant")))?;
        let two = BigInt::from(2);
        let to_i64 = |b: &BigInt| -> Result<i64, Diagnostic> {
            i64::try_from(b).map_err(|_| span.error("exponent out of range"))
        };
        if r.denom().is_one() {
            Ok(base.pow(to_i64(r.numer())?))
        } else if r.denom() == &two {
            Ok(base.sqrt().pow(to_i64(r.numer())?))
        } else {
            Err(span.error(format!(
                "exponent `{exp}` must be an integer or a half-integer"
            )))
        }
    }

    fn args(&mut self) -> Result<Vec<Expr>, Diagnostic> {
        self.expect(&Tok::LParen)?;
        let mut out = vec![self.sum()?];
        while self.eat(&Tok::Comma) {
            out.push(self.sum()?);
        }
        self.expect(&Tok::RParen)?;
        Ok(out)
    }

    fn atom(&mut self) -> Result<Expr, Diagnostic> {
        let span = self.span();
        match self.peek().clone() {
            Tok::Number(s) => {
                self.bump();
                Ok(Expr::rational(literal(&s, span)?))
            }
            Tok::PatVar(v) => {
                self.bump();
                Ok(Expr::sym(&format!("?{v}")))
            }
            Tok::LParen => {
                self.bump();
                let e = self.sum()?;
                self.expect(&Tok::RParen)?;
                Ok(e)
            }
            Tok::Ident(name) => {
                self.bump();
                if (name == "d" || name == "D") && self.at(&Tok::LBracket) {
                    self.bump();
                    let coord = self.ident()?;
                    self.expect(&Tok::RBracket)?;
                    return Ok(Expr::sym(&format!("{name}[{}]", coord.name)));
                }
                let mut order = 0u32;
                while self.at(&Tok::Prime) {
                    self.bump();
                    order += 1;
                }
                if !self.at(&Tok::LParen) {
                    if order > 0 {
                        return Err(self.unexpected("`(` after a derivative mark"));
                    }
                    return Ok(Expr::sym(&name));
                }
                let args = self.args()?;
                let arity = |n: usize| -> Result<(), Diagnostic> {
                    if args.len() != n {
                        Err(span.error(format!(
                            "`{name}` takes {n} argument(s), {} given",
                            args.len()
                        )))
                    } else {
                        Ok(())
                    }
                };
                if name == "atan2" {
                    arity(2)?;
                    if order > 0 {
                        return Err(span.error("derivative marks apply to declared functions only"));
                    }
                    return Ok(Expr::atan2(args[0].clone(), args[1].clone()));
                }
                arity(1)?;
                match ElemFn::from_name(&name) {
                    Some(f) if order == 0 => Ok(Expr::elem(f, args[0].clone())),
                    Some(_) => Err(span.error(format!(
                        "write derivatives of `{name}` explicitly; marks apply to declared functions only"
                    ))),
                    None => Ok(Expr::func(&name, order, args[0].clone())),
                }
            }
            _ => Err(self.unexpected("an expression")),
        }
    }
}
