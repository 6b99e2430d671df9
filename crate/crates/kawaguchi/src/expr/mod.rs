//! Expression DSL for scalar functions of coordinates and Plücker symbols.
//!
//! An [`Expression`] is a tree over constants, named parameters, coordinate symbols
//! `x0 … xN` and Plücker symbols `d[i,…,j]` (sorted index tuples of length n+1),
//! combined with `+ - * /`, integer powers, `sqrt` and `abs`. Trees are immutable and
//! cheaply shareable; evaluation is deterministic and reentrant.
//!
//! Gradients are exact (forward mode): one batched dual sweep over the coordinate and
//! Plücker symbols actually present in the tree, treating each sorted `d[I]` as an
//! independent real variable.

mod parse;
mod tape;

pub use parse::{ParseContext, ParseError};

use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};

use crate::multivector::{lex_rank, unrank, Dims, MultiIndex, PluckerVector};

/// Expression node. `Pow` exponents are integer constants; `Neg` of a constant is
/// folded into the constant so printed trees round-trip structurally.
#[derive(Clone, Debug, PartialEq)]
pub enum Ast {
    Const(f64),
    /// Named parameter, by slot into the expression's parameter table.
    Param(usize),
    /// Coordinate symbol `x^mu`.
    Coord(usize),
    /// Plücker symbol, by lexicographic rank of its sorted index tuple.
    Plucker(usize),
    Neg(Arc<Ast>),
    Add(Arc<Ast>, Arc<Ast>),
    Sub(Arc<Ast>, Arc<Ast>),
    Mul(Arc<Ast>, Arc<Ast>),
    Div(Arc<Ast>, Arc<Ast>),
    Pow(Arc<Ast>, i32),
    Sqrt(Arc<Ast>),
    Abs(Arc<Ast>),
}

/// Evaluation failure; carries enough to diagnose the offending sub-expression.
#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("sqrt of negative value {0}")]
    SqrtNegative(f64),
    #[error("sqrt derivative at 0")]
    SqrtZeroDerivative,
    #[error("0 raised to negative power {0}")]
    ZeroToNegativePower(i32),
    #[error("unbound parameter '{0}'")]
    UnboundParam(String),
    #[error("evaluation point mismatch: {0}")]
    PointMismatch(String),
}

/// A point at which expressions are evaluated: coordinates, Plücker components and
/// parameter values by name.
#[derive(Clone, Debug)]
pub struct EvalPoint<'a> {
    pub x: &'a [f64],
    pub dx: &'a PluckerVector,
    pub params: &'a BTreeMap<String, f64>,
}

/// Value plus exact first derivatives with respect to every coordinate and every
/// sorted Plücker symbol.
#[derive(Clone, Debug)]
pub struct Gradient {
    pub value: f64,
    pub grad_x: Vec<f64>,
    pub grad_dx: PluckerVector,
}

/// An immutable scalar expression over `(x, dx, params)` for fixed dimensions.
#[derive(Clone)]
pub struct Expression {
    dims: Dims,
    params: Arc<[String]>,
    ast: Arc<Ast>,
    tape: OnceLock<Arc<tape::Tape>>,
}

impl PartialEq for Expression {
    fn eq(&self, other: &Self) -> bool {
        self.dims == other.dims && self.params == other.params && self.ast == other.ast
    }
}

impl std::fmt::Debug for Expression {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Expression({self})")
    }
}

impl Expression {
    pub(crate) fn from_ast(dims: Dims, params: Arc<[String]>, ast: Arc<Ast>) -> Self {
        Expression {
            dims,
            params,
            ast,
            tape: OnceLock::new(),
        }
    }

    /// Parse `text` in the given context. See the crate docs for the grammar.
    pub fn parse(text: &str, ctx: &ParseContext) -> Result<Self, ParseError> {
        parse::parse(text, ctx)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn ast(&self) -> &Ast {
        &self.ast
    }

    pub fn param_names(&self) -> &[String] {
        &self.params
    }

    // ---- constructors ------------------------------------------------------

    pub fn constant(dims: Dims, v: f64) -> Self {
        assert!(v.is_finite(), "non-finite constant");
        Self::from_ast(dims, Arc::from(Vec::new()), Arc::new(Ast::Const(v)))
    }

    pub fn coord(dims: Dims, mu: usize) -> Self {
        assert!(mu < dims.coord_count, "coordinate x{mu} out of range");
        Self::from_ast(dims, Arc::from(Vec::new()), Arc::new(Ast::Coord(mu)))
    }

    /// Plücker symbol `d[I]` for a sorted index tuple.
    pub fn plucker(dims: Dims, indices: &[usize]) -> Self {
        assert_eq!(indices.len(), dims.degree, "tuple length must be n+1");
        let idx = MultiIndex::new(indices.to_vec());
        assert!(
            *idx.indices().last().unwrap() < dims.coord_count,
            "index out of range"
        );
        let rank = lex_rank(dims.coord_count, idx.indices());
        Self::from_ast(dims, Arc::from(Vec::new()), Arc::new(Ast::Plucker(rank)))
    }

    pub fn param(dims: Dims, names: &[&str], which: &str) -> Self {
        let slot = names
            .iter()
            .position(|n| *n == which)
            .expect("parameter not in table");
        let params: Vec<String> = names.iter().map(|s| s.to_string()).collect();
        Self::from_ast(dims, Arc::from(params), Arc::new(Ast::Param(slot)))
    }

    fn merge_params(&self, other: &Expression) -> Arc<[String]> {
        assert_eq!(self.dims, other.dims, "expression dims mismatch");
        if self.params.is_empty() {
            return other.params.clone();
        }
        if other.params.is_empty() || self.params == other.params {
            return self.params.clone();
        }
        panic!("cannot combine expressions with different parameter tables");
    }

    fn binary(&self, other: &Expression, ast: Arc<Ast>) -> Expression {
        let params = self.merge_params(other);
        Expression::from_ast(self.dims, params, ast)
    }

    // The combinators fold algebraic zeros and ones, so programmatically assembled
    // trees (lifts, currents, gauge generators) stay small. Identically-zero factors
    // short-circuit; parsing never folds.

    pub fn add(&self, other: &Expression) -> Expression {
        self.binary(other, s_add(self.ast.clone(), other.ast.clone()))
    }

    pub fn sub(&self, other: &Expression) -> Expression {
        self.binary(other, s_sub(self.ast.clone(), other.ast.clone()))
    }

    pub fn mul(&self, other: &Expression) -> Expression {
        self.binary(other, s_mul(self.ast.clone(), other.ast.clone()))
    }

    pub fn div(&self, other: &Expression) -> Expression {
        self.binary(other, s_div(self.ast.clone(), other.ast.clone()))
    }

    pub fn neg(&self) -> Expression {
        let ast = match &*self.ast {
            Ast::Const(c) => Ast::Const(-c),
            _ => Ast::Neg(self.ast.clone()),
        };
        Expression::from_ast(self.dims, self.params.clone(), Arc::new(ast))
    }

    pub fn powi(&self, k: i32) -> Expression {
        Expression::from_ast(
            self.dims,
            self.params.clone(),
            Arc::new(Ast::Pow(self.ast.clone(), k)),
        )
    }

    pub fn sqrt(&self) -> Expression {
        Expression::from_ast(
            self.dims,
            self.params.clone(),
            Arc::new(Ast::Sqrt(self.ast.clone())),
        )
    }

    pub fn abs(&self) -> Expression {
        Expression::from_ast(
            self.dims,
            self.params.clone(),
            Arc::new(Ast::Abs(self.ast.clone())),
        )
    }

    pub fn scale(&self, c: f64) -> Expression {
        self.mul(&Expression::constant(self.dims, c))
    }

    // ---- structure queries -------------------------------------------------

    /// Lexicographic ranks of the Plücker symbols present in the tree, sorted.
    pub fn active_pluckers(&self) -> Vec<usize> {
        let mut out = Vec::new();
        collect(&self.ast, &mut |a| {
            if let Ast::Plucker(r) = a {
                out.push(*r);
            }
        });
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Coordinates present in the tree, sorted.
    pub fn active_coords(&self) -> Vec<usize> {
        let mut out = Vec::new();
        collect(&self.ast, &mut |a| {
            if let Ast::Coord(m) = a {
                out.push(*m);
            }
        });
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn uses_plucker_symbols(&self) -> bool {
        !self.active_pluckers().is_empty()
    }

    // ---- evaluation ---------------------------------------------------------

    pub(crate) fn tape(&self) -> &Arc<tape::Tape> {
        self.tape
            .get_or_init(|| Arc::new(tape::Tape::compile(&self.ast, self.dims)))
    }

    fn check_point(&self, p: &EvalPoint) -> Result<(), EvalError> {
        if p.x.len() != self.dims.coord_count {
            return Err(EvalError::PointMismatch(format!(
                "{} coordinates supplied, expression has {}",
                p.x.len(),
                self.dims.coord_count
            )));
        }
        if p.dx.dims() != self.dims {
            return Err(EvalError::PointMismatch(
                "Plücker vector dimensions differ from expression".into(),
            ));
        }
        Ok(())
    }

    /// Parameter slots referenced by the tree (substitutions may leave table
    /// entries unused; only used slots need values).
    pub fn active_params(&self) -> Vec<usize> {
        let mut out = Vec::new();
        collect(&self.ast, &mut |a| {
            if let Ast::Param(s) = a {
                out.push(*s);
            }
        });
        out.sort_unstable();
        out.dedup();
        out
    }

    fn resolve_params(&self, map: &BTreeMap<String, f64>) -> Result<Vec<f64>, EvalError> {
        let used = self.active_params();
        self.params
            .iter()
            .enumerate()
            .map(|(slot, name)| match map.get(name) {
                Some(v) => Ok(*v),
                None if used.binary_search(&slot).is_err() => Ok(0.0),
                None => Err(EvalError::UnboundParam(name.clone())),
            })
            .collect()
    }

    pub fn eval(&self, p: &EvalPoint) -> Result<f64, EvalError> {
        self.check_point(p)?;
        let pv = self.resolve_params(p.params)?;
        self.tape().eval(p.x, p.dx.components(), &pv)
    }

    /// Value and exact gradient with respect to all coordinates and Plücker symbols.
    pub fn eval_with_gradient(&self, p: &EvalPoint) -> Result<Gradient, EvalError> {
        self.check_point(p)?;
        let pv = self.resolve_params(p.params)?;
        let mut grad_x = vec![0.0; self.dims.coord_count];
        let mut grad_dx = PluckerVector::zero(self.dims);
        let value = self.tape().eval_gradient(
            p.x,
            p.dx.components(),
            &pv,
            &mut grad_x,
            grad_dx.components_mut(),
        )?;
        Ok(Gradient {
            value,
            grad_x,
            grad_dx,
        })
    }

    /// Resolve parameters once for repeated evaluation in hot loops.
    pub fn prepare(&self, params: &BTreeMap<String, f64>) -> Result<PreparedExpr<'_>, EvalError> {
        let values = self.resolve_params(params)?;
        Ok(PreparedExpr {
            expr: self,
            param_values: values,
        })
    }

    // ---- rewriting -----------------------------------------------------------

    /// Replace parameter slots by sub-expressions (same dims; replacements must be
    /// parameter-free or share this expression's parameter table). Slots without a
    /// replacement stay parameters.
    pub fn substitute_params(&self, table: &BTreeMap<usize, Expression>) -> Expression {
        for e in table.values() {
            assert_eq!(e.dims, self.dims, "substitution dims mismatch");
            assert!(
                e.params.is_empty() || e.params == self.params,
                "substituted expressions must be parameter-free or share the table"
            );
        }
        fn walk(ast: &Arc<Ast>, table: &BTreeMap<usize, Expression>) -> Arc<Ast> {
            match &**ast {
                Ast::Param(slot) => match table.get(slot) {
                    Some(repl) => repl.ast.clone(),
                    None => ast.clone(),
                },
                Ast::Const(_) | Ast::Coord(_) | Ast::Plucker(_) => ast.clone(),
                Ast::Neg(a) => Arc::new(Ast::Neg(walk(a, table))),
                Ast::Add(a, b) => Arc::new(Ast::Add(walk(a, table), walk(b, table))),
                Ast::Sub(a, b) => Arc::new(Ast::Sub(walk(a, table), walk(b, table))),
                Ast::Mul(a, b) => Arc::new(Ast::Mul(walk(a, table), walk(b, table))),
                Ast::Div(a, b) => Arc::new(Ast::Div(walk(a, table), walk(b, table))),
                Ast::Pow(a, k) => Arc::new(Ast::Pow(walk(a, table), *k)),
                Ast::Sqrt(a) => Arc::new(Ast::Sqrt(walk(a, table))),
                Ast::Abs(a) => Arc::new(Ast::Abs(walk(a, table))),
            }
        }
        Expression::from_ast(self.dims, self.params.clone(), walk(&self.ast, table))
    }

    /// Exact symbolic partial derivative with respect to coordinate `x^mu`.
    /// `abs` is rejected (the builtin forms never differentiate through it).
    pub fn diff_coord(&self, mu: usize) -> Result<Expression, EvalError> {
        let d = diff(&self.ast, mu)?;
        Ok(Expression::from_ast(self.dims, self.params.clone(), d))
    }
}

/// Expression with parameter values resolved; evaluation needs only `(x, dx)`.
pub struct PreparedExpr<'a> {
    expr: &'a Expression,
    param_values: Vec<f64>,
}

impl PreparedExpr<'_> {
    pub fn eval(&self, x: &[f64], dx: &PluckerVector) -> Result<f64, EvalError> {
        self.expr
            .tape()
            .eval(x, dx.components(), &self.param_values)
    }

    /// Writes the coordinate gradient into `grad_x` (length `coord_count`) and the
    /// Plücker gradient into `grad_dx` (length `component_count`); returns the value.
    pub fn eval_gradient_into(
        &self,
        x: &[f64],
        dx: &PluckerVector,
        grad_x: &mut [f64],
        grad_dx: &mut [f64],
    ) -> Result<f64, EvalError> {
        self.expr
            .tape()
            .eval_gradient(x, dx.components(), &self.param_values, grad_x, grad_dx)
    }

    /// Coordinate gradient only, allocated fresh (the Plücker gradient is discarded).
    pub fn eval_gradient_x(&self, x: &[f64], dx: &PluckerVector) -> Result<Vec<f64>, EvalError> {
        let dims = self.expr.dims;
        let mut gx = vec![0.0; dims.coord_count];
        let mut gdx = vec![0.0; dims.component_count()];
        self.expr
            .tape()
            .eval_gradient(x, dx.components(), &self.param_values, &mut gx, &mut gdx)?;
        Ok(gx)
    }

    pub fn expr(&self) -> &Expression {
        self.expr
    }
}

fn collect(ast: &Ast, f: &mut impl FnMut(&Ast)) {
    f(ast);
    match ast {
        Ast::Const(_) | Ast::Param(_) | Ast::Coord(_) | Ast::Plucker(_) => {}
        Ast::Neg(a) | Ast::Pow(a, _) | Ast::Sqrt(a) | Ast::Abs(a) => collect(a, f),
        Ast::Add(a, b) | Ast::Sub(a, b) | Ast::Mul(a, b) | Ast::Div(a, b) => {
            collect(a, f);
            collect(b, f);
        }
    }
}

// Smart constructors used by symbolic differentiation; folding keeps derivative
// trees from ballooning.
fn is_zero(a: &Ast) -> bool {
    matches!(a, Ast::Const(c) if *c == 0.0)
}

fn is_one(a: &Ast) -> bool {
    matches!(a, Ast::Const(c) if *c == 1.0)
}

fn s_add(a: Arc<Ast>, b: Arc<Ast>) -> Arc<Ast> {
    if is_zero(&a) {
        return b;
    }
    if is_zero(&b) {
        return a;
    }
    Arc::new(Ast::Add(a, b))
}

fn s_sub(a: Arc<Ast>, b: Arc<Ast>) -> Arc<Ast> {
    if is_zero(&b) {
        return a;
    }
    if is_zero(&a) {
        return Arc::new(Ast::Neg(b));
    }
    Arc::new(Ast::Sub(a, b))
}

fn s_mul(a: Arc<Ast>, b: Arc<Ast>) -> Arc<Ast> {
    if is_zero(&a) || is_zero(&b) {
        return Arc::new(Ast::Const(0.0));
    }
    if is_one(&a) {
        return b;
    }
    if is_one(&b) {
        return a;
    }
    if let (Ast::Const(x), Ast::Const(y)) = (&*a, &*b) {
        return Arc::new(Ast::Const(x * y));
    }
    Arc::new(Ast::Mul(a, b))
}

fn s_div(a: Arc<Ast>, b: Arc<Ast>) -> Arc<Ast> {
    if is_zero(&a) {
        return a;
    }
    if is_one(&b) {
        return a;
    }
    Arc::new(Ast::Div(a, b))
}

fn diff(ast: &Arc<Ast>, mu: usize) -> Result<Arc<Ast>, EvalError> {
    let zero = || Arc::new(Ast::Const(0.0));
    Ok(match &**ast {
        Ast::Const(_) | Ast::Param(_) | Ast::Plucker(_) => zero(),
        Ast::Coord(m) => Arc::new(Ast::Const(if *m == mu { 1.0 } else { 0.0 })),
        Ast::Neg(a) => {
            let d = diff(a, mu)?;
            if is_zero(&d) {
                d
            } else {
                Arc::new(Ast::Neg(d))
            }
        }
        Ast::Add(a, b) => s_add(diff(a, mu)?, diff(b, mu)?),
        Ast::Sub(a, b) => s_sub(diff(a, mu)?, diff(b, mu)?),
        Ast::Mul(a, b) => s_add(
            s_mul(diff(a, mu)?, b.clone()),
            s_mul(a.clone(), diff(b, mu)?),
        ),
        Ast::Div(a, b) => {
            // (a/b)' = a'/b - a b'/b^2
            let da = diff(a, mu)?;
            let db = diff(b, mu)?;
            s_sub(
                s_div(da, b.clone()),
                s_div(
                    s_mul(a.clone(), db),
                    Arc::new(Ast::Pow(b.clone(), 2)),
                ),
            )
        }
        Ast::Pow(a, k) => {
            let da = diff(a, mu)?;
            if is_zero(&da) || *k == 0 {
                zero()
            } else {
                s_mul(
                    s_mul(
                        Arc::new(Ast::Const(*k as f64)),
                        Arc::new(Ast::Pow(a.clone(), k - 1)),
                    ),
                    da,
                )
            }
        }
        Ast::Sqrt(a) => {
            let da = diff(a, mu)?;
            if is_zero(&da) {
                zero()
            } else {
                s_div(
                    da,
                    s_mul(Arc::new(Ast::Const(2.0)), Arc::new(Ast::Sqrt(a.clone()))),
                )
            }
        }
        Ast::Abs(_) => {
            return Err(EvalError::PointMismatch(
                "abs is not symbolically differentiable".into(),
            ))
        }
    })
}

impl std::fmt::Display for Expression {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        fmt_ast(&self.ast, self.dims, &self.params, f)
    }
}

fn fmt_ast(
    ast: &Ast,
    dims: Dims,
    params: &[String],
    f: &mut std::fmt::Formatter<'_>,
) -> std::fmt::Result {
    match ast {
        Ast::Const(c) => {
            if *c < 0.0 || (*c == 0.0 && c.is_sign_negative()) {
                // negative literals re-lex as unary minus; parser folds them back
                write!(f, "-{}", -c)
            } else {
                write!(f, "{c}")
            }
        }
        Ast::Param(slot) => write!(f, "{}", params[*slot]),
        Ast::Coord(mu) => write!(f, "x{mu}"),
        Ast::Plucker(rank) => {
            let idx = unrank(dims.coord_count, dims.degree, *rank);
            let parts: Vec<String> = idx.indices().iter().map(|i| i.to_string()).collect();
            write!(f, "d[{}]", parts.join(","))
        }
        Ast::Neg(a) => {
            write!(f, "-(")?;
            fmt_ast(a, dims, params, f)?;
            write!(f, ")")
        }
        Ast::Add(a, b) => {
            write!(f, "(")?;
            fmt_ast(a, dims, params, f)?;
            write!(f, " + ")?;
            fmt_ast(b, dims, params, f)?;
            write!(f, ")")
        }
        Ast::Sub(a, b) => {
            write!(f, "(")?;
            fmt_ast(a, dims, params, f)?;
            write!(f, " - ")?;
            fmt_ast(b, dims, params, f)?;
            write!(f, ")")
        }
        Ast::Mul(a, b) => {
            write!(f, "(")?;
            fmt_ast(a, dims, params, f)?;
            write!(f, "*")?;
            fmt_ast(b, dims, params, f)?;
            write!(f, ")")
        }
        Ast::Div(a, b) => {
            write!(f, "(")?;
            fmt_ast(a, dims, params, f)?;
            write!(f, "/")?;
            fmt_ast(b, dims, params, f)?;
            write!(f, ")")
        }
        Ast::Pow(a, k) => {
            write!(f, "(")?;
            fmt_ast(a, dims, params, f)?;
            write!(f, ")^{k}")
        }
        Ast::Sqrt(a) => {
            write!(f, "sqrt(")?;
            fmt_ast(a, dims, params, f)?;
            write!(f, ")")
        }
        Ast::Abs(a) => {
            write!(f, "abs(")?;
            fmt_ast(a, dims, params, f)?;
            write!(f, ")")
        }
    }
}

#[cfg(test)]
mod tests;
