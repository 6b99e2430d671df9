//! The Kawaguchi form: an areal metric `K(x, dx)`, positively 1-homogeneous in the
//! Plücker components `dx`. Homogeneity and Euler-identity diagnostics, canonical
//! momenta, the Hilbert–Carathéodory contraction and the lift of a classical field
//! Lagrangian live here.

use std::collections::BTreeMap;

use rand::Rng;

use crate::expr::{EvalError, Expression, ParseContext, PreparedExpr};
use crate::multivector::{jacobian_multivector, Dims, PluckerVector};
use crate::{Error, Result};

/// A Kawaguchi (n+1)-form: dimensions, the defining expression and default
/// parameter values.
#[derive(Clone, Debug)]
pub struct KawaguchiForm {
    dims: Dims,
    k: Expression,
    params: BTreeMap<String, f64>,
}

impl KawaguchiForm {
    pub fn new(k: Expression, params: BTreeMap<String, f64>) -> Self {
        KawaguchiForm {
            dims: k.dims(),
            k,
            params,
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn expression(&self) -> &Expression {
        &self.k
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    /// Override default parameter values.
    pub fn with_params(mut self, overrides: &BTreeMap<String, f64>) -> Self {
        for (k, v) in overrides {
            self.params.insert(k.clone(), *v);
        }
        self
    }

    /// Parameter-resolved expression for repeated evaluation.
    pub fn prepared(&self) -> Result<PreparedExpr<'_>> {
        Ok(self.k.prepare(&self.params)?)
    }

    pub fn eval(&self, x: &[f64], dx: &PluckerVector) -> Result<f64> {
        Ok(self.prepared()?.eval(x, dx)?)
    }

    /// Canonical momenta `p_I = ∂K/∂d[I]` over sorted tuples.
    pub fn momenta(&self, x: &[f64], dx: &PluckerVector) -> Result<PluckerVector> {
        let prepared = self.prepared()?;
        let mut gx = vec![0.0; self.dims.coord_count];
        let mut p = PluckerVector::zero(self.dims);
        prepared.eval_gradient_into(x, dx, &mut gx, p.components_mut())?;
        Ok(p)
    }

    /// Value together with both gradients, in one sweep.
    pub fn eval_full(
        &self,
        x: &[f64],
        dx: &PluckerVector,
    ) -> Result<(f64, Vec<f64>, PluckerVector)> {
        let prepared = self.prepared()?;
        let mut gx = vec![0.0; self.dims.coord_count];
        let mut p = PluckerVector::zero(self.dims);
        let v = prepared.eval_gradient_into(x, dx, &mut gx, p.components_mut())?;
        Ok((v, gx, p))
    }

    /// `|K(x,dx) - Σ_I p_I dx^I|`: by 1-homogeneity the sorted-index contraction of
    /// the momenta reproduces K exactly.
    pub fn euler_identity_residual(&self, x: &[f64], dx: &PluckerVector) -> Result<f64> {
        let (value, _, p) = self.eval_full(x, dx)?;
        let contracted: f64 = p
            .components()
            .iter()
            .zip(dx.components())
            .map(|(pi, di)| pi * di)
            .sum();
        Ok((value - contracted).abs())
    }

    /// Hilbert–Carathéodory contraction: momenta frozen at `(x, y)` and contracted
    /// with a caller-supplied (n+1)-vector `w`. With `w = y` this returns `K(x, y)`.
    pub fn hilbert_theta(&self, x: &[f64], y: &PluckerVector, w: &PluckerVector) -> Result<f64> {
        let p = self.momenta(x, y)?;
        Ok(p.components()
            .iter()
            .zip(w.components())
            .map(|(pi, wi)| pi * wi)
            .sum())
    }

    /// Sampled check of the positive 1-homogeneity condition `K(x, λ dx) = λ K(x, dx)`.
    /// Singular draws (division by zero, negative sqrt, …) are redrawn, with a cap.
    pub fn homogeneity_report(
        &self,
        samples: usize,
        lambdas: &[f64],
        rng: &mut impl Rng,
    ) -> Result<HomogeneityReport> {
        assert!(lambdas.iter().all(|l| *l > 0.0), "lambdas must be positive");
        let prepared = self.prepared()?;
        let mut max_rel = 0.0f64;
        let mut redraws = 0usize;
        for _ in 0..samples {
            let (x, dx) = sample_nondegenerate(self, rng, &mut redraws)?;
            let base = prepared.eval(&x, &dx).expect("sampled point evaluates");
            for &lambda in lambdas {
                let scaled = dx.scale(lambda);
                let v = match prepared.eval(&x, &scaled) {
                    Ok(v) => v,
                    Err(_) => continue, // scaling crossed a singular locus; skip pair
                };
                let rel = (v - lambda * base).abs() / ((lambda * base).abs() + 1e-30);
                max_rel = max_rel.max(rel);
            }
        }
        Ok(HomogeneityReport {
            samples,
            lambdas: lambdas.to_vec(),
            max_rel_error: max_rel,
            tolerance: 1e-12,
            pass: max_rel < 1e-12,
            redraws,
        })
    }
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct HomogeneityReport {
    pub samples: usize,
    pub lambdas: Vec<f64>,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub redraws: usize,
}

/// Draw a random non-degenerate evaluation point: coordinates uniform in (-1,1) and a
/// decomposable `dx` from a random Jacobian (so Plücker relations hold), redrawing
/// until `K` and its gradient evaluate cleanly. Draws that land too close to a
/// singular locus (tiny multivector, or |K| / momenta beyond 1e2) are rejected so
/// absolute tolerances stay meaningful.
pub fn sample_nondegenerate(
    form: &KawaguchiForm,
    rng: &mut impl Rng,
    redraws: &mut usize,
) -> Result<(Vec<f64>, PluckerVector)> {
    let dims = form.dims();
    let prepared = form.prepared()?;
    let mut gx = vec![0.0; dims.coord_count];
    let mut gdx = PluckerVector::zero(dims);
    for _ in 0..10_000 {
        let x: Vec<f64> = (0..dims.coord_count)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let partials: Vec<f64> = (0..dims.coord_count * dims.degree)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let dx = jacobian_multivector(dims, &partials)?;
        if dx.max_abs() < 0.3 {
            *redraws += 1;
            continue;
        }
        match prepared.eval_gradient_into(&x, &dx, &mut gx, gdx.components_mut()) {
            Ok(v) if v.is_finite() && v.abs() <= 1e2 && gdx.max_abs() <= 1e2 => {
                return Ok((x, dx))
            }
            _ => *redraws += 1,
        }
    }
    Err(Error::BadParameter(
        "could not sample a non-degenerate point in 10000 draws".into(),
    ))
}

/// Symbol for the i-th field (1-based) in a Lagrangian expression.
pub fn field_symbol(i: usize) -> String {
    format!("f{i}")
}

/// Symbol for `∂φ_i/∂s^a` in a Lagrangian expression.
pub fn velocity_symbol(i: usize, a: usize) -> String {
    format!("f{i}_{a}")
}

/// Parse context for a first-order Lagrangian density of `d_fields` fields on an
/// (n+1)-dimensional base: base coordinates `x0..xn`, field symbols `f1..fD` and
/// velocity symbols `fi_a`, plus caller parameters.
pub fn lagrangian_context(n: usize, d_fields: usize, extra_params: &[String]) -> ParseContext {
    let dims = Dims::from_spec(n + d_fields, n);
    let mut params = Vec::new();
    for i in 1..=d_fields {
        params.push(field_symbol(i));
        for a in 0..=n {
            params.push(velocity_symbol(i, a));
        }
    }
    params.extend(extra_params.iter().cloned());
    ParseContext::new(dims).with_params(params)
}

/// Lift a field Lagrangian to a Kawaguchi form on the extended configuration space.
///
/// The field value `φ_i` becomes the coordinate `x^{n+i}`, each velocity `∂_a φ_i`
/// becomes the Plücker ratio `dx^{n+i}_a / dx^{01…n}` (the a-th base index replaced
/// by `n+i`, with the permutation sign), and the whole expression is multiplied by
/// `dx^{01…n}`. The pullback of the result along the graph of `φ` reproduces
/// `L ds^0∧…∧ds^n`.
pub fn lift_from_lagrangian(
    lagrangian: &Expression,
    n: usize,
    d_fields: usize,
    params: BTreeMap<String, f64>,
) -> Result<KawaguchiForm> {
    let dims = Dims::from_spec(n + d_fields, n);
    if lagrangian.dims() != dims {
        return Err(Error::Dimension(format!(
            "Lagrangian parsed for dims {:?}, lift expects {:?}",
            lagrangian.dims(),
            dims
        )));
    }
    let base: Vec<usize> = (0..=n).collect();
    let d_base = Expression::plucker(dims, &base);

    let mut table = BTreeMap::new();
    let names = lagrangian.param_names().to_vec();
    for i in 1..=d_fields {
        if let Some(slot) = names.iter().position(|p| *p == field_symbol(i)) {
            table.insert(slot, Expression::coord(dims, n + i));
        }
        for a in 0..=n {
            if let Some(slot) = names.iter().position(|p| *p == velocity_symbol(i, a)) {
                // dx^{n+i}_a = dx^{n+i} ∧ ι_{∂_a} dx^{0…n}: base tuple with the a-th
                // entry replaced by n+i; moving n+i to the end costs (n-a) swaps
                let mut tuple = base.clone();
                tuple.remove(a);
                tuple.push(n + i);
                let sign = if (n - a).is_multiple_of(2) { 1.0 } else { -1.0 };
                let num = Expression::plucker(dims, &tuple).scale(sign);
                table.insert(slot, num.div(&d_base));
            }
        }
    }
    let substituted = lagrangian.substitute_params(&table);
    let k = substituted.mul(&d_base);
    Ok(KawaguchiForm::new(k, params))
}

/// Short reason string for singular-cell error reports.
pub fn describe_eval_error(e: &EvalError) -> &'static str {
    match e {
        EvalError::DivisionByZero => "zero denominator",
        EvalError::SqrtNegative(_) => "negative sqrt argument",
        EvalError::SqrtZeroDerivative => "sqrt derivative at 0",
        EvalError::ZeroToNegativePower(_) => "zero denominator",
        EvalError::UnboundParam(_) => "unbound parameter",
        EvalError::PointMismatch(_) => "dimension mismatch",
    }
}
