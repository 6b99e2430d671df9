//! Lie derivatives of a Kawaguchi form, Killing checks, covariant Nöther currents
//! and on-shell conservation diagnostics.
//!
//! The Lie derivative uses the first prolongation of a vector field:
//! `L_v K = v^μ ∂K/∂x^μ + dv^μ ∧ dx^{μ'} ∂K/∂dx^{μμ'}` (sorted-index contraction).
//! For generalized vector fields (components depending on `dx`) the dx-dependence
//! enters only through the components themselves — there is no second prolongation.
//!
//! A vector field is Killing when `L_v K = dB` for an n-form `B` with x-dependent
//! coefficients; every catalog symmetry has `B = 0`. The covariant Nöther current of
//! a Killing pair `(v, B)` is `J = v^μ ∂K/∂dx^{μμ'} dx^{μ'} − B`, closed on shell.

use std::collections::BTreeMap;

use rand::Rng;
use serde::Serialize;

use crate::expr::Expression;
use crate::kform::{sample_nondegenerate, KawaguchiForm};
use crate::multivector::{Dims, MultiIndex, PluckerVector};
use crate::surface::{decompose, pairwise_sum, GridNForm, NFormField, Surface};
use crate::variational::IndexTables;
use crate::{Error, Result};

/// A vector field `v^μ(x)` (strict) or `v^μ(x, dx)` (generalized) on the extended
/// configuration space.
#[derive(Clone, Debug)]
pub struct VectorField {
    dims: Dims,
    comps: Vec<Expression>,
    params: BTreeMap<String, f64>,
    generalized: bool,
}

impl VectorField {
    /// Strict vector field: components may depend on coordinates only.
    pub fn strict(comps: Vec<Expression>, params: BTreeMap<String, f64>) -> Result<Self> {
        let dims = comps
            .first()
            .map(|e| e.dims())
            .ok_or_else(|| Error::BadParameter("empty component list".into()))?;
        if comps.len() != dims.coord_count {
            return Err(Error::Dimension(format!(
                "{} components for {} coordinates",
                comps.len(),
                dims.coord_count
            )));
        }
        for (mu, c) in comps.iter().enumerate() {
            if c.uses_plucker_symbols() {
                return Err(Error::BadParameter(format!(
                    "component {mu} of a strict vector field references d[...] symbols"
                )));
            }
        }
        Ok(VectorField {
            dims,
            comps,
            params,
            generalized: false,
        })
    }

    /// Generalized vector field: components may also depend on Plücker symbols and
    /// must be degree-0 homogeneous in them (see [`VectorField::degree0_deviation`]).
    pub fn generalized(comps: Vec<Expression>, params: BTreeMap<String, f64>) -> Result<Self> {
        let dims = comps
            .first()
            .map(|e| e.dims())
            .ok_or_else(|| Error::BadParameter("empty component list".into()))?;
        if comps.len() != dims.coord_count {
            return Err(Error::Dimension("component count mismatch".into()));
        }
        Ok(VectorField {
            dims,
            comps,
            params,
            generalized: true,
        })
    }

    /// Zero field.
    pub fn zero(dims: Dims) -> Self {
        let comps = (0..dims.coord_count)
            .map(|_| Expression::constant(dims, 0.0))
            .collect();
        VectorField {
            dims,
            comps,
            params: BTreeMap::new(),
            generalized: false,
        }
    }

    /// Constant translation generator `∂/∂x^mu`.
    pub fn translation(dims: Dims, mu: usize) -> Self {
        let comps = (0..dims.coord_count)
            .map(|m| Expression::constant(dims, if m == mu { 1.0 } else { 0.0 }))
            .collect();
        VectorField {
            dims,
            comps,
            params: BTreeMap::new(),
            generalized: false,
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn components(&self) -> &[Expression] {
        &self.comps
    }

    pub fn is_generalized(&self) -> bool {
        self.generalized
    }

    pub fn component_values(&self, x: &[f64], dx: &PluckerVector, out: &mut [f64]) -> Result<()> {
        for (mu, c) in self.comps.iter().enumerate() {
            out[mu] = c.prepare(&self.params)?.eval(x, dx)?;
        }
        Ok(())
    }

    /// Sampled degree-0 homogeneity deviation of the components under `dx → λ dx`.
    pub fn degree0_deviation(
        &self,
        form: &KawaguchiForm,
        samples: usize,
        rng: &mut impl Rng,
    ) -> Result<f64> {
        let mut worst = 0.0f64;
        let mut redraws = 0usize;
        let mut v0 = vec![0.0; self.dims.coord_count];
        let mut v1 = vec![0.0; self.dims.coord_count];
        for _ in 0..samples {
            let (x, dx) = sample_nondegenerate(form, rng, &mut redraws)?;
            self.component_values(&x, &dx, &mut v0)?;
            for lambda in [0.5, 2.0, 10.0] {
                if self.component_values(&x, &dx.scale(lambda), &mut v1).is_err() {
                    continue;
                }
                for (a, b) in v0.iter().zip(&v1) {
                    worst = worst.max((a - b).abs());
                }
            }
        }
        Ok(worst)
    }
}

/// n-form with x-dependent expression coefficients; `dB` enters the Killing
/// condition `L_v K = dB`.
#[derive(Clone, Debug)]
pub struct BTerm {
    dims: Dims,
    /// coefficient of `dx^J` by minor rank
    coeffs: Vec<Option<Expression>>,
    params: BTreeMap<String, f64>,
}

impl BTerm {
    pub fn zero(dims: Dims) -> Self {
        BTerm {
            dims,
            coeffs: (0..dims.minor_count()).map(|_| None).collect(),
            params: BTreeMap::new(),
        }
    }

    pub fn new(dims: Dims, params: BTreeMap<String, f64>) -> Self {
        BTerm {
            dims,
            coeffs: (0..dims.minor_count()).map(|_| None).collect(),
            params,
        }
    }

    pub fn set(&mut self, j: &MultiIndex, e: Expression) -> Result<()> {
        if e.uses_plucker_symbols() {
            return Err(Error::BadParameter(
                "B-term coefficients must depend on x only".into(),
            ));
        }
        let rank = crate::multivector::lex_rank(self.dims.coord_count, j.indices());
        self.coeffs[rank] = Some(e);
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_none())
    }

    /// `dB` evaluated at `(x, dx)`: `Σ_J Σ_ν ∂b_J/∂x^ν dx^{(ν,J)}`.
    pub fn d_eval(&self, tables: &IndexTables, x: &[f64], dx: &PluckerVector) -> Result<f64> {
        let mut acc = 0.0;
        for (j_rank, c) in self.coeffs.iter().enumerate() {
            let Some(e) = c else { continue };
            let g = e.prepare(&self.params)?.eval_gradient_x(x, dx)?;
            for (nu, gnu) in g.iter().enumerate() {
                if *gnu == 0.0 {
                    continue;
                }
                if let Some((rank, sign)) = tables.insert[j_rank][nu] {
                    acc += gnu * sign * dx.components()[rank];
                }
            }
        }
        Ok(acc)
    }

    /// Coefficient values at `x` (for the current's `− B` part).
    pub fn coeff_values(&self, x: &[f64], dx: &PluckerVector, out: &mut [f64]) -> Result<()> {
        out.fill(0.0);
        for (rank, c) in self.coeffs.iter().enumerate() {
            if let Some(e) = c {
                out[rank] = e.prepare(&self.params)?.eval(x, dx)?;
            }
        }
        Ok(())
    }
}

/// `L_v K` at a point, by the first prolongation.
pub fn lie_derivative(
    form: &KawaguchiForm,
    v: &VectorField,
    x: &[f64],
    dx: &PluckerVector,
) -> Result<f64> {
    if v.dims() != form.dims() {
        return Err(Error::Dimension("vector field dims differ from form".into()));
    }
    let dims = form.dims();
    let cc = dims.coord_count;
    let tables = IndexTables::new(dims);
    let (_, gx, p) = form.eval_full(x, dx)?;

    // component values and their x-gradients
    let mut vals = vec![0.0; cc];
    let mut grads = vec![vec![0.0; cc]; cc]; // [mu][nu]
    let mut gdx_scratch = PluckerVector::zero(dims);
    for mu in 0..cc {
        let prepared = v.comps[mu].prepare(&v.params)?;
        vals[mu] = prepared.eval_gradient_into(
            x,
            dx,
            &mut grads[mu],
            gdx_scratch.components_mut(),
        )?;
    }

    let mut acc = 0.0;
    for mu in 0..cc {
        if vals[mu] != 0.0 {
            acc += vals[mu] * gx[mu];
        }
    }
    // prolongation: Σ_J Σ_{μ∉J} sign(μ,J) p_{μ∪J} Σ_{ν∉J} ∂v^μ/∂x^ν sign(ν,J) dx^{ν∪J}
    for row in tables.insert.iter() {
        for (mu, slot_mu) in row.iter().enumerate() {
            let Some((p_rank, p_sign)) = slot_mu else { continue };
            let p_val = p.components()[*p_rank];
            if p_val == 0.0 {
                continue;
            }
            let dv = &grads[mu];
            let mut inner = 0.0;
            for (nu, slot_nu) in row.iter().enumerate() {
                if dv[nu] == 0.0 {
                    continue;
                }
                if let Some((d_rank, d_sign)) = slot_nu {
                    inner += dv[nu] * d_sign * dx.components()[*d_rank];
                }
            }
            acc += p_sign * p_val * inner;
        }
    }
    Ok(acc)
}

#[derive(Clone, Debug, Serialize)]
pub struct KillingReport {
    pub samples: usize,
    pub max_abs_err: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Sampled Killing check: `max |L_v K − dB|` over non-degenerate decomposable points.
pub fn killing_check(
    form: &KawaguchiForm,
    v: &VectorField,
    b: &BTerm,
    samples: usize,
    rng: &mut impl Rng,
) -> Result<KillingReport> {
    let tables = IndexTables::new(form.dims());
    let mut worst = 0.0f64;
    let mut redraws = 0usize;
    for _ in 0..samples {
        let (x, dx) = sample_nondegenerate(form, rng, &mut redraws)?;
        let lie = lie_derivative(form, v, &x, &dx)?;
        let db = if b.is_zero() {
            0.0
        } else {
            b.d_eval(&tables, &x, &dx)?
        };
        worst = worst.max((lie - db).abs());
    }
    Ok(KillingReport {
        samples,
        max_abs_err: worst,
        tolerance: 1e-10,
        pass: worst < 1e-10,
    })
}

/// The covariant Nöther current of a (Killing) pair `(v, B)`: an n-form field with
/// coefficients `f_J = Σ_{μ∉J} sign(μ,J) v^μ p_{sort(μ∪J)} − b_J`, evaluated through
/// the canonical momenta.
pub struct NoetherCurrent<'a> {
    form: &'a KawaguchiForm,
    v: &'a VectorField,
    b: &'a BTerm,
    tables: IndexTables,
}

impl<'a> NoetherCurrent<'a> {
    pub fn new(form: &'a KawaguchiForm, v: &'a VectorField, b: &'a BTerm) -> Result<Self> {
        if v.dims() != form.dims() {
            return Err(Error::Dimension("vector field dims differ from form".into()));
        }
        Ok(NoetherCurrent {
            form,
            v,
            b,
            tables: IndexTables::new(form.dims()),
        })
    }
}

impl NFormField for NoetherCurrent<'_> {
    fn dims(&self) -> Dims {
        self.form.dims()
    }

    fn coeffs(&self, x: &[f64], dx: &PluckerVector, out: &mut [f64]) -> Result<()> {
        let dims = self.form.dims();
        let p = self.form.momenta(x, dx)?;
        let mut vals = vec![0.0; dims.coord_count];
        self.v.component_values(x, dx, &mut vals)?;
        out.fill(0.0);
        for (j_rank, row) in self.tables.insert.iter().enumerate() {
            let mut acc = 0.0;
            for (mu, slot) in row.iter().enumerate() {
                if vals[mu] == 0.0 {
                    continue;
                }
                if let Some((rank, sign)) = slot {
                    acc += sign * vals[mu] * p.components()[*rank];
                }
            }
            out[j_rank] = acc;
        }
        if !self.b.is_zero() {
            let mut bvals = vec![0.0; dims.minor_count()];
            self.b.coeff_values(x, dx, &mut bvals)?;
            for (o, bv) in out.iter_mut().zip(&bvals) {
                *o -= bv;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DivergenceReport {
    pub interior_max: f64,
    pub interior_l2: f64,
    pub interior_cells: usize,
}

/// Pull a current back to the grid and apply the discrete exterior derivative.
/// Norms are over interior cells (where every face stencil is central).
pub fn conservation_divergence(
    current: &dyn NFormField,
    surface: &Surface,
) -> Result<(GridNForm, Vec<f64>, DivergenceReport)> {
    let pulled = surface.pullback_nform(current)?;
    let div = pulled.discrete_d();
    let cells = surface.cell_shape();
    let deg = cells.len();
    let mut idx = vec![0usize; deg];
    let mut interior_vals = Vec::new();
    for (lin, v) in div.iter().enumerate() {
        decompose(lin, &cells, &mut idx);
        let interior = idx
            .iter()
            .zip(&cells)
            .all(|(i, m)| *i >= 1 && *i + 2 <= *m);
        if interior {
            interior_vals.push(*v);
        }
    }
    let max = interior_vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let sq: Vec<f64> = interior_vals
        .iter()
        .map(|v| v * v * surface.cell_volume())
        .collect();
    let report = DivergenceReport {
        interior_max: max,
        interior_l2: pairwise_sum(&sq).sqrt(),
        interior_cells: interior_vals.len(),
    };
    Ok((pulled, div, report))
}

/// The generalized U(1) gauge generator of the Maxwell model:
/// `G̃^{4+a} = (dΛ̃ ∧ ι_{∂_a} dx^{0123}) / dx^{0123}`, with `Λ̃` an arbitrary function
/// of all eight coordinates (fiber dependence allowed). Expanding the wedge over
/// sorted tuples:
/// `G̃^{4+a} = Λ̃_{,a} − (−1)^a Σ_{ν≥4} Λ̃_{,ν} d[{0..3}∖{a} ∪ {ν}] / d[0,1,2,3]`.
pub fn maxwell_gauge_generator(lambda: &Expression) -> Result<VectorField> {
    let dims = lambda.dims();
    if dims != Dims::from_spec(7, 3) {
        return Err(Error::Dimension(
            "gauge generator needs the Maxwell dimensions (N=7, n=3)".into(),
        ));
    }
    let q = Expression::plucker(dims, &[0, 1, 2, 3]);
    let mut comps: Vec<Expression> = (0..4).map(|_| Expression::constant(dims, 0.0)).collect();
    for a in 0..4usize {
        let mut comp = lambda.diff_coord(a)?;
        let base: Vec<usize> = (0..4).filter(|b| *b != a).collect();
        for nu in 4..8usize {
            let dl = lambda.diff_coord(nu)?;
            let mut tuple = base.clone();
            tuple.push(nu);
            let sign = if a % 2 == 0 { -1.0 } else { 1.0 };
            let term = dl
                .mul(&Expression::plucker(dims, &tuple))
                .div(&q)
                .scale(sign);
            comp = comp.add(&term);
        }
        comps.push(comp);
    }
    VectorField::generalized(comps, BTreeMap::new())
}
