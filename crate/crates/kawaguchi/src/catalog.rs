//! Ready-made models: the free particle, the Nambu-Goto string, the (1+1)d complex
//! scalar field (realified) and free Maxwell theory, each with its Killing vectors,
//! closed-form reference currents where available, and exact test solutions.
//!
//! Conventions: Minkowski signature (−,+,+,…). The complex scalar is realified with
//! `φ = u + iv` on coordinates `(x0,x1,x2,x3) = (t,x,u,v)`; its potential `V` is an
//! expression in `rho = |φ|² = u² + v²`. The Maxwell model lives on ℝ⁸ with
//! coordinates `(x^0..x^3, A_0..A_3)`; its six field-strength combinations pull back
//! to `F_{0i}` and `F_{ij}` under the conventional parameterization.

use std::collections::BTreeMap;

use crate::expr::{Expression, ParseContext};
use crate::kform::{lagrangian_context, lift_from_lagrangian, KawaguchiForm};
use crate::multivector::{Dims, MultiIndex};
use crate::noether::{BTerm, VectorField};
use crate::surface::{ExprNForm, Surface};
use crate::{Error, Result};

/// A named Killing generator with its B term (always zero for the shipped models).
pub struct NamedKilling {
    pub name: String,
    pub field: VectorField,
    pub b: BTerm,
}

/// A closed-form reference current, tied to the Killing vector it belongs to.
pub struct NamedCurrent {
    pub name: String,
    pub killing: String,
    pub form: ExprNForm,
}

/// A catalog model: the form, its symmetries and reference currents.
pub struct ModelCatalogEntry {
    pub name: String,
    pub form: KawaguchiForm,
    pub killing: Vec<NamedKilling>,
    pub currents: Vec<NamedCurrent>,
}

impl ModelCatalogEntry {
    pub fn killing_by_name(&self, name: &str) -> Option<&NamedKilling> {
        self.killing.iter().find(|k| k.name == name)
    }

    pub fn current_by_name(&self, name: &str) -> Option<&NamedCurrent> {
        self.currents.iter().find(|c| c.name == name)
    }
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct ModelInfo {
    pub name: &'static str,
    pub args: &'static str,
    pub description: &'static str,
}

pub fn list_models() -> Vec<ModelInfo> {
    vec![
        ModelInfo {
            name: "free_particle",
            args: "",
            description: "Euclidean arc length on the plane; geodesics are straight lines (n=0)",
        },
        ModelInfo {
            name: "nambu_goto",
            args: "N=3",
            description: "free string: sqrt(-1/2 dX_IJ dX^IJ) on (N+1)-dim Minkowski space (n=1)",
        },
        ModelInfo {
            name: "scalar_1p1",
            args: "L=(f1_0^2 - f1_1^2)/2",
            description: "real scalar field in 1+1 dims lifted from a Lagrangian L(f1, f1_a)",
        },
        ModelInfo {
            name: "complex_scalar",
            args: "V=m^2*rho, m=1",
            description: "realified (1+1)d complex scalar with potential V(rho), rho = u²+v²",
        },
        ModelInfo {
            name: "maxwell",
            args: "",
            description: "free Maxwell field on R^8 = (spacetime, A_a) (n=3)",
        },
    ]
}

/// Build a catalog model. `args` maps argument names to numbers or expression text;
/// unknown names or malformed values error.
pub fn builtin(name: &str, args: &BTreeMap<String, String>) -> Result<ModelCatalogEntry> {
    match name {
        "free_particle" => free_particle(args),
        "nambu_goto" => nambu_goto(args),
        "scalar_1p1" => scalar_1p1(args),
        "complex_scalar" => complex_scalar(args),
        "maxwell" => maxwell(args),
        other => Err(Error::UnknownModel(other.to_string())),
    }
}

fn parse_f64(args: &BTreeMap<String, String>, key: &str, default: f64) -> Result<f64> {
    match args.get(key) {
        None => Ok(default),
        Some(text) => text
            .trim()
            .parse()
            .map_err(|_| Error::BadParameter(format!("{key} = '{text}' is not a number"))),
    }
}

fn reject_unknown(args: &BTreeMap<String, String>, known: &[&str]) -> Result<()> {
    for k in args.keys() {
        if !known.contains(&k.as_str()) {
            return Err(Error::BadParameter(format!("unknown argument '{k}'")));
        }
    }
    Ok(())
}

// ---- free particle ---------------------------------------------------------------

fn free_particle(args: &BTreeMap<String, String>) -> Result<ModelCatalogEntry> {
    reject_unknown(args, &[])?;
    let dims = Dims::from_spec(1, 0);
    let k = Expression::plucker(dims, &[0])
        .powi(2)
        .add(&Expression::plucker(dims, &[1]).powi(2))
        .sqrt();
    let form = KawaguchiForm::new(k, BTreeMap::new());
    let ctx = ParseContext::new(dims);
    let rot = VectorField::strict(
        vec![
            Expression::parse("-x1", &ctx).unwrap(),
            Expression::parse("x0", &ctx).unwrap(),
        ],
        BTreeMap::new(),
    )?;
    let killing = vec![
        NamedKilling {
            name: "v0".into(),
            field: VectorField::translation(dims, 0),
            b: BTerm::zero(dims),
        },
        NamedKilling {
            name: "v1".into(),
            field: VectorField::translation(dims, 1),
            b: BTerm::zero(dims),
        },
        NamedKilling {
            name: "rot".into(),
            field: rot,
            b: BTerm::zero(dims),
        },
    ];
    Ok(ModelCatalogEntry {
        name: "free_particle".into(),
        form,
        killing,
        currents: Vec::new(),
    })
}

// ---- Nambu-Goto string ------------------------------------------------------------

/// `K = sqrt(Σ_{j≥1} d[0,j]² − Σ_{1≤i<j} d[i,j]²)`: the expansion of
/// `sqrt(-1/2 dX_IJ dX^IJ)` over sorted pairs with η = diag(−1,+1,…,+1).
fn nambu_goto_form(n_upper: usize) -> KawaguchiForm {
    let dims = Dims::from_spec(n_upper, 1);
    let mut acc: Option<Expression> = None;
    for j in 1..=n_upper {
        let t = Expression::plucker(dims, &[0, j]).powi(2);
        acc = Some(match acc {
            None => t,
            Some(a) => a.add(&t),
        });
    }
    for i in 1..=n_upper {
        for j in i + 1..=n_upper {
            let t = Expression::plucker(dims, &[i, j]).powi(2);
            acc = Some(acc.unwrap().sub(&t));
        }
    }
    KawaguchiForm::new(acc.unwrap().sqrt(), BTreeMap::new())
}

fn minkowski_lower(mu: usize) -> f64 {
    if mu == 0 {
        -1.0
    } else {
        1.0
    }
}

fn nambu_goto(args: &BTreeMap<String, String>) -> Result<ModelCatalogEntry> {
    reject_unknown(args, &["N"])?;
    let n_upper = parse_f64(args, "N", 3.0)? as usize;
    if n_upper < 1 {
        return Err(Error::BadParameter("nambu_goto needs N >= 1".into()));
    }
    let dims = Dims::from_spec(n_upper, 1);
    let form = nambu_goto_form(n_upper);
    let mut killing = Vec::new();
    for mu in 0..=n_upper {
        killing.push(NamedKilling {
            name: format!("v{mu}"),
            field: VectorField::translation(dims, mu),
            b: BTerm::zero(dims),
        });
    }
    // Lorentz generators l_IJ = x_I ∂_J − x_J ∂_I
    for i in 0..=n_upper {
        for j in i + 1..=n_upper {
            let mut comps: Vec<Expression> = (0..dims.coord_count)
                .map(|_| Expression::constant(dims, 0.0))
                .collect();
            comps[j] = Expression::coord(dims, i).scale(minkowski_lower(i));
            comps[i] = Expression::coord(dims, j).scale(-minkowski_lower(j));
            killing.push(NamedKilling {
                name: format!("l_{i}{j}"),
                field: VectorField::strict(comps, BTreeMap::new())?,
                b: BTerm::zero(dims),
            });
        }
    }
    Ok(ModelCatalogEntry {
        name: "nambu_goto".into(),
        form,
        killing,
        currents: Vec::new(),
    })
}

// ---- real scalar in 1+1 dims -------------------------------------------------------

fn scalar_1p1(args: &BTreeMap<String, String>) -> Result<ModelCatalogEntry> {
    let default_l = "(f1_0^2 - f1_1^2)/2".to_string();
    let l_text = args.get("L").cloned().unwrap_or(default_l);
    let mut numeric: BTreeMap<String, f64> = BTreeMap::new();
    for (k, v) in args {
        if k != "L" {
            let value: f64 = v
                .parse()
                .map_err(|_| Error::BadParameter(format!("{k} = '{v}' is not a number")))?;
            numeric.insert(k.clone(), value);
        }
    }
    let names: Vec<String> = numeric.keys().cloned().collect();
    let ctx = lagrangian_context(1, 1, &names);
    let l = Expression::parse(&l_text, &ctx).map_err(Error::Parse)?;
    let form = lift_from_lagrangian(&l, 1, 1, numeric.clone())?;
    let dims = form.dims();
    // translations are symmetries when L carries no explicit base dependence
    let explicit_base = l.active_coords().iter().any(|mu| *mu <= 1);
    let mut killing = Vec::new();
    if !explicit_base {
        for mu in 0..=1 {
            killing.push(NamedKilling {
                name: format!("v{mu}"),
                field: VectorField::translation(dims, mu),
                b: BTerm::zero(dims),
            });
        }
    }
    Ok(ModelCatalogEntry {
        name: "scalar_1p1".into(),
        form,
        killing,
        currents: Vec::new(),
    })
}

// ---- realified complex scalar -------------------------------------------------------

fn complex_scalar(args: &BTreeMap<String, String>) -> Result<ModelCatalogEntry> {
    let v_text = args
        .get("V")
        .cloned()
        .unwrap_or_else(|| "m^2*rho".to_string());
    let mut numeric: BTreeMap<String, f64> = BTreeMap::new();
    numeric.insert("m".into(), parse_f64(args, "m", 1.0)?);
    for (k, v) in args {
        if k != "V" && k != "m" {
            numeric.insert(
                k.clone(),
                v.parse()
                    .map_err(|_| Error::BadParameter(format!("{k} = '{v}' is not a number")))?,
            );
        }
    }
    let mut extra: Vec<String> = numeric.keys().cloned().collect();
    extra.push("rho".into());

    // K by lifting L = ∂φ·∂φ̄ − V(|φ|²) realified: u_t²+v_t²−u_x²−v_x² − V(u²+v²)
    let lag_ctx = lagrangian_context(1, 2, &extra);
    let kinetic = Expression::parse("f1_0^2 + f2_0^2 - f1_1^2 - f2_1^2", &lag_ctx)
        .map_err(Error::Parse)?;
    let v_in_fields = {
        let v = Expression::parse(&v_text, &lag_ctx).map_err(Error::Parse)?;
        let rho_slot = lag_ctx
            .params
            .iter()
            .position(|p| p == "rho")
            .expect("rho in context");
        let rho_tree = Expression::parse("f1^2 + f2^2", &lag_ctx).map_err(Error::Parse)?;
        let mut table = BTreeMap::new();
        table.insert(rho_slot, rho_tree);
        v.substitute_params(&table)
    };
    let l = kinetic.sub(&v_in_fields);
    let form = lift_from_lagrangian(&l, 1, 2, numeric.clone())?;
    let dims = form.dims();

    // Killing vectors: spacetime translations and the realified phase rotation
    let ctx = ParseContext::new(dims);
    let w = VectorField::strict(
        vec![
            Expression::constant(dims, 0.0),
            Expression::constant(dims, 0.0),
            Expression::parse("-x3", &ctx).unwrap(),
            Expression::parse("x2", &ctx).unwrap(),
        ],
        BTreeMap::new(),
    )?;
    let killing = vec![
        NamedKilling {
            name: "v0".into(),
            field: VectorField::translation(dims, 0),
            b: BTerm::zero(dims),
        },
        NamedKilling {
            name: "v1".into(),
            field: VectorField::translation(dims, 1),
            b: BTerm::zero(dims),
        },
        NamedKilling {
            name: "w".into(),
            field: w,
            b: BTerm::zero(dims),
        },
    ];

    let currents = scalar_reference_currents(dims, &v_text, &numeric)?;
    Ok(ModelCatalogEntry {
        name: "complex_scalar".into(),
        form,
        killing,
        currents,
    })
}

/// Closed-form scalar currents. `T0`/`T1` carry the potential term demanded by the
/// defining current formula (the momentum `p_01` includes `−V`); the charge current
/// `J` carries the factors of two the realification produces.
fn scalar_reference_currents(
    dims: Dims,
    v_text: &str,
    numeric: &BTreeMap<String, f64>,
) -> Result<Vec<NamedCurrent>> {
    let mut extra: Vec<String> = numeric.keys().cloned().collect();
    extra.push("rho".into());
    let ctx = ParseContext::new(dims).with_params(extra);
    let parse = |t: &str| Expression::parse(t, &ctx).map_err(Error::Parse);

    // V as a function of x2, x3
    let v_x = {
        let v = parse(v_text)?;
        let rho_slot = ctx.params.iter().position(|p| p == "rho").unwrap();
        let rho_tree = parse("x2^2 + x3^2")?;
        let mut table = BTreeMap::new();
        table.insert(rho_slot, rho_tree);
        v.substitute_params(&table)
    };
    let kinetic_ratio = parse("(d[1,2]^2 + d[1,3]^2 - d[0,2]^2 - d[0,3]^2)/d[0,1]^2")?;
    let p01 = kinetic_ratio.neg().sub(&v_x); // ∂K/∂d[0,1]

    let j = |ix: &[usize]| MultiIndex::new(ix.to_vec());

    let mut t0 = ExprNForm::new(dims, numeric.clone());
    t0.set(&j(&[1]), p01.clone());
    t0.set(&j(&[2]), parse("-2*d[0,2]/d[0,1]")?);
    t0.set(&j(&[3]), parse("-2*d[0,3]/d[0,1]")?);

    let mut t1 = ExprNForm::new(dims, numeric.clone());
    t1.set(&j(&[0]), p01.neg());
    t1.set(&j(&[2]), parse("2*d[1,2]/d[0,1]")?);
    t1.set(&j(&[3]), parse("2*d[1,3]/d[0,1]")?);

    let mut jc = ExprNForm::new(dims, numeric.clone());
    jc.set(&j(&[0]), parse("2*(x2*d[0,3] - x3*d[0,2])/d[0,1]")?);
    jc.set(&j(&[1]), parse("-2*(x2*d[1,3] - x3*d[1,2])/d[0,1]")?);

    Ok(vec![
        NamedCurrent {
            name: "T0".into(),
            killing: "v0".into(),
            form: t0,
        },
        NamedCurrent {
            name: "T1".into(),
            killing: "v1".into(),
            form: t1,
        },
        NamedCurrent {
            name: "J".into(),
            killing: "w".into(),
            form: jc,
        },
    ])
}

// ---- Maxwell ------------------------------------------------------------------------

/// The six field-strength combinations of the Maxwell form over sorted symbols.
/// Under the conventional parameterization (`x^a = s^a`, `x^{4+b} = A_b`) they pull
/// back to `F_{01}, F_{02}, F_{03}` (electric) and `F_{12}, F_{13}, F_{23}` (magnetic).
struct MaxwellCombos {
    dims: Dims,
    g: [Expression; 3],
    h: [Expression; 3],
    q: Expression,
}

impl MaxwellCombos {
    fn new() -> Self {
        let dims = Dims::from_spec(7, 3);
        let p = |ix: &[usize]| Expression::plucker(dims, ix);
        // electric: dx^{5123}−dx^{0423}, dx^{6123}−dx^{0143}, dx^{7123}−dx^{0124}
        let g1 = p(&[1, 2, 3, 5]).neg().sub(&p(&[0, 2, 3, 4]));
        let g2 = p(&[1, 2, 3, 6]).neg().add(&p(&[0, 1, 3, 4]));
        let g3 = p(&[1, 2, 3, 7]).neg().sub(&p(&[0, 1, 2, 4]));
        // magnetic: dx^{0623}−dx^{0153}, dx^{0723}−dx^{0125}, dx^{0173}−dx^{0126}
        let h1 = p(&[0, 2, 3, 6]).add(&p(&[0, 1, 3, 5]));
        let h2 = p(&[0, 2, 3, 7]).sub(&p(&[0, 1, 2, 5]));
        let h3 = p(&[0, 1, 3, 7]).neg().sub(&p(&[0, 1, 2, 6]));
        MaxwellCombos {
            dims,
            g: [g1, g2, g3],
            h: [h1, h2, h3],
            q: p(&[0, 1, 2, 3]),
        }
    }

    fn form(&self) -> KawaguchiForm {
        let num = self.g[0]
            .powi(2)
            .add(&self.g[1].powi(2))
            .add(&self.g[2].powi(2))
            .sub(&self.h[0].powi(2))
            .sub(&self.h[1].powi(2))
            .sub(&self.h[2].powi(2));
        let k = num.div(&self.q.scale(2.0));
        KawaguchiForm::new(k, BTreeMap::new())
    }

    /// `K/q` as an expression (used by the reference currents).
    fn k_over_q(&self) -> Expression {
        self.g[0]
            .powi(2)
            .add(&self.g[1].powi(2))
            .add(&self.g[2].powi(2))
            .sub(&self.h[0].powi(2))
            .sub(&self.h[1].powi(2))
            .sub(&self.h[2].powi(2))
            .div(&self.q.powi(2).scale(2.0))
    }

    fn over_q(&self, e: &Expression) -> Expression {
        e.div(&self.q)
    }
}

fn maxwell(args: &BTreeMap<String, String>) -> Result<ModelCatalogEntry> {
    reject_unknown(args, &[])?;
    let combos = MaxwellCombos::new();
    let dims = combos.dims;
    let form = combos.form();

    let mut killing = Vec::new();
    for mu in 0..8usize {
        killing.push(NamedKilling {
            name: format!("v{mu}"),
            field: VectorField::translation(dims, mu),
            b: BTerm::zero(dims),
        });
    }
    // l_ab: spacetime rotation/boost plus the induced rotation of the covector fiber
    for a in 0..4usize {
        for b in a + 1..4usize {
            let mut comps: Vec<Expression> = (0..8)
                .map(|_| Expression::constant(dims, 0.0))
                .collect();
            comps[b] = Expression::coord(dims, a).scale(minkowski_lower(a));
            comps[a] = Expression::coord(dims, b).scale(-minkowski_lower(b));
            comps[4 + b] = Expression::coord(dims, 4 + a).scale(minkowski_lower(b));
            comps[4 + a] = Expression::coord(dims, 4 + b).scale(-minkowski_lower(a));
            killing.push(NamedKilling {
                name: format!("l_{a}{b}"),
                field: VectorField::strict(comps, BTreeMap::new())?,
                b: BTerm::zero(dims),
            });
        }
    }

    let currents = maxwell_reference_currents(&combos);
    Ok(ModelCatalogEntry {
        name: "maxwell".into(),
        form,
        killing,
        currents,
    })
}

/// Closed-form Maxwell currents, derived from the defining current formula with the
/// sorted-index contraction (conservation of each verified numerically on vacuum
/// waves). `T0`, `T4`, `T5` belong to translations, `L12` to the 1-2 rotation.
fn maxwell_reference_currents(c: &MaxwellCombos) -> Vec<NamedCurrent> {
    let dims = c.dims;
    let j = |ix: &[usize]| MultiIndex::new(ix.to_vec());
    let g = |i: usize| c.over_q(&c.g[i]);
    let h = |i: usize| c.over_q(&c.h[i]);
    let koq = c.k_over_q();

    // ω_0
    let mut t0 = ExprNForm::new(dims, BTreeMap::new());
    t0.set(&j(&[1, 2, 3]), koq.neg());
    t0.set(&j(&[2, 3, 4]), g(0).neg());
    t0.set(&j(&[1, 3, 4]), g(1));
    t0.set(&j(&[1, 2, 4]), g(2).neg());
    t0.set(&j(&[2, 3, 6]), h(0).neg());
    t0.set(&j(&[1, 3, 5]), h(0).neg());
    t0.set(&j(&[2, 3, 7]), h(1).neg());
    t0.set(&j(&[1, 2, 5]), h(1));
    t0.set(&j(&[1, 3, 7]), h(2));
    t0.set(&j(&[1, 2, 6]), h(2));

    // ω_4
    let mut t4 = ExprNForm::new(dims, BTreeMap::new());
    t4.set(&j(&[0, 2, 3]), g(0));
    t4.set(&j(&[0, 1, 3]), g(1).neg());
    t4.set(&j(&[0, 1, 2]), g(2));

    // ω_5
    let mut t5 = ExprNForm::new(dims, BTreeMap::new());
    t5.set(&j(&[1, 2, 3]), g(0));
    t5.set(&j(&[0, 1, 3]), h(0));
    t5.set(&j(&[0, 1, 2]), h(1).neg());

    // L12 = x1 ω_2 − x2 ω_1 + x5 ω_6 − x6 ω_5
    let x1 = Expression::coord(dims, 1);
    let x2 = Expression::coord(dims, 2);
    let x5 = Expression::coord(dims, 5);
    let x6 = Expression::coord(dims, 6);
    let mut l12 = ExprNForm::new(dims, BTreeMap::new());
    let mut add = |ix: &[usize], e: Expression| {
        let idx = j(ix);
        let rank = crate::multivector::lex_rank(dims.coord_count, idx.indices());
        let combined = match l12.coeff(rank) {
            Some(prev) => prev.add(&e),
            None => e,
        };
        l12.set(&idx, combined);
    };
    // x1 ω_2
    add(&[0, 1, 3], x1.mul(&koq).neg());
    add(&[1, 3, 5], x1.mul(&g(0)));
    add(&[0, 3, 4], x1.mul(&g(0)));
    add(&[1, 3, 6], x1.mul(&g(1)));
    add(&[1, 3, 7], x1.mul(&g(2)));
    add(&[0, 1, 4], x1.mul(&g(2)).neg());
    add(&[0, 3, 6], x1.mul(&h(0)));
    add(&[0, 3, 7], x1.mul(&h(1)));
    add(&[0, 1, 5], x1.mul(&h(1)));
    add(&[0, 1, 6], x1.mul(&h(2)));
    // − x2 ω_1
    add(&[0, 2, 3], x2.mul(&koq).neg());
    add(&[2, 3, 5], x2.mul(&g(0)));
    add(&[2, 3, 6], x2.mul(&g(1)));
    add(&[0, 3, 4], x2.mul(&g(1)));
    add(&[2, 3, 7], x2.mul(&g(2)));
    add(&[0, 2, 4], x2.mul(&g(2)).neg());
    add(&[0, 3, 5], x2.mul(&h(0)).neg());
    add(&[0, 2, 5], x2.mul(&h(1)));
    add(&[0, 3, 7], x2.mul(&h(2)));
    add(&[0, 2, 6], x2.mul(&h(2)));
    // + x5 ω_6
    add(&[1, 2, 3], x5.mul(&g(1)));
    add(&[0, 2, 3], x5.mul(&h(0)));
    add(&[0, 1, 2], x5.mul(&h(2)).neg());
    // − x6 ω_5
    add(&[1, 2, 3], x6.mul(&g(0)).neg());
    add(&[0, 1, 3], x6.mul(&h(0)).neg());
    add(&[0, 1, 2], x6.mul(&h(1)));

    vec![
        NamedCurrent {
            name: "T0".into(),
            killing: "v0".into(),
            form: t0,
        },
        NamedCurrent {
            name: "T4".into(),
            killing: "v4".into(),
            form: t4,
        },
        NamedCurrent {
            name: "T5".into(),
            killing: "v5".into(),
            form: t5,
        },
        NamedCurrent {
            name: "L12".into(),
            killing: "l_12".into(),
            form: l12,
        },
    ]
}

// ---- reference solutions ---------------------------------------------------------

#[derive(Clone, Debug, serde::Serialize)]
pub struct ReferenceSolutionInfo {
    pub name: &'static str,
    pub model: &'static str,
    pub expected_order: f64,
    pub description: &'static str,
}

pub fn list_reference_solutions() -> Vec<ReferenceSolutionInfo> {
    vec![
        ReferenceSolutionInfo {
            name: "ng_flat",
            model: "nambu_goto",
            expected_order: f64::INFINITY,
            description: "flat string sheet on [0,1]²; residual 0 to round-off on any grid",
        },
        ReferenceSolutionInfo {
            name: "scalar_wave",
            model: "complex_scalar",
            expected_order: 2.0,
            description: "massless plane wave u = cos k(x−t), v = sin k(x−t)",
        },
        ReferenceSolutionInfo {
            name: "scalar_static",
            model: "complex_scalar",
            expected_order: f64::INFINITY,
            description: "massive constant field u = v = 0 (exact)",
        },
        ReferenceSolutionInfo {
            name: "maxwell_wave",
            model: "maxwell",
            expected_order: 2.0,
            description: "vacuum wave A_2 = cos k(x0 − x1), Lorenz gauge",
        },
    ]
}

/// Build a reference solution surface (and its model). `shape` is nodes per axis:
/// length 2 for the n=1 models, length 4 for Maxwell. The wavenumber defaults to 2π.
pub fn reference_solution(
    name: &str,
    shape: &[usize],
    wavenumber: Option<f64>,
) -> Result<(ModelCatalogEntry, Surface)> {
    let k = wavenumber.unwrap_or(std::f64::consts::TAU);
    match name {
        "ng_flat" => {
            let model = builtin("nambu_goto", &BTreeMap::new())?;
            expect_shape(shape, 2)?;
            let h: Vec<f64> = shape.iter().map(|m| 1.0 / (*m as f64 - 1.0)).collect();
            let surf = Surface::conventional(
                model.form.dims(),
                shape,
                &h,
                &[0.0, 0.0],
                |_s, f| f.fill(0.0),
            );
            Ok((model, surf))
        }
        "scalar_wave" => {
            let mut args = BTreeMap::new();
            args.insert("m".to_string(), "0".to_string());
            let model = builtin("complex_scalar", &args)?;
            expect_shape(shape, 2)?;
            // an irrational box aspect keeps the massless Dirichlet problem nondegenerate
            let extents = [0.618_033_988_749_894_9_f64, 1.0];
            let h: Vec<f64> = shape
                .iter()
                .zip(extents)
                .map(|(m, e)| e / (*m as f64 - 1.0))
                .collect();
            let surf = Surface::conventional(
                model.form.dims(),
                shape,
                &h,
                &[0.0, 0.0],
                move |s, f| {
                    let phase = k * (s[1] - s[0]);
                    f[0] = phase.cos();
                    f[1] = phase.sin();
                },
            );
            Ok((model, surf))
        }
        "scalar_static" => {
            let model = builtin("complex_scalar", &BTreeMap::new())?;
            expect_shape(shape, 2)?;
            let h: Vec<f64> = shape.iter().map(|m| 1.0 / (*m as f64 - 1.0)).collect();
            let surf =
                Surface::conventional(model.form.dims(), shape, &h, &[0.0, 0.0], |_s, f| {
                    f.fill(0.0)
                });
            Ok((model, surf))
        }
        "maxwell_wave" => {
            let model = builtin("maxwell", &BTreeMap::new())?;
            expect_shape(shape, 4)?;
            let extents = [0.618_033_988_749_894_9_f64, 1.0, 0.3, 0.3];
            let h: Vec<f64> = shape
                .iter()
                .zip(extents)
                .map(|(m, e)| e / (*m as f64 - 1.0))
                .collect();
            let surf = Surface::conventional(
                model.form.dims(),
                shape,
                &h,
                &[0.0; 4],
                move |s, f| {
                    f.fill(0.0);
                    f[2] = (k * (s[0] - s[1])).cos(); // A_2 = x^6
                },
            );
            Ok((model, surf))
        }
        other => Err(Error::UnknownModel(format!("reference solution '{other}'"))),
    }
}

fn expect_shape(shape: &[usize], len: usize) -> Result<()> {
    if shape.len() != len {
        return Err(Error::Dimension(format!(
            "shape {shape:?} has {} axes, solution needs {len}",
            shape.len()
        )));
    }
    if shape.iter().any(|m| *m < 2) {
        return Err(Error::Dimension("need at least 2 nodes per axis".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multivector::{jacobian_multivector, PluckerVector};
    use crate::noether::killing_check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unknown_model_and_bad_args() {
        assert!(matches!(
            builtin("nosuch", &BTreeMap::new()),
            Err(Error::UnknownModel(_))
        ));
        let mut args = BTreeMap::new();
        args.insert("N".to_string(), "banana".to_string());
        assert!(builtin("nambu_goto", &args).is_err());
        let mut extra = BTreeMap::new();
        extra.insert("whatever".to_string(), "1".to_string());
        assert!(builtin("maxwell", &extra).is_err());
    }

    #[test]
    fn nambu_goto_momenta_on_flat_sheet() {
        // only dX^{01} = 1: K = 1 and p_01 = 1 with η = diag(−1, 1, …)
        let model = builtin("nambu_goto", &BTreeMap::new()).unwrap();
        let dims = model.form.dims();
        let mut dx = PluckerVector::zero(dims);
        dx.set(&MultiIndex::new(vec![0, 1]), 1.0);
        let x = vec![0.0; dims.coord_count];
        assert!((model.form.eval(&x, &dx).unwrap() - 1.0).abs() < 1e-15);
        let p = model.form.momenta(&x, &dx).unwrap();
        assert!((p.get(&MultiIndex::new(vec![0, 1])) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn complex_scalar_form_matches_spec_expression() {
        let model = builtin("complex_scalar", &BTreeMap::new()).unwrap();
        let dims = model.form.dims();
        // direct expression with V = m² ρ, m = 1
        let direct = Expression::parse(
            "(d[1,2]^2 + d[1,3]^2 - d[0,2]^2 - d[0,3]^2)/d[0,1] - (x2^2 + x3^2)*d[0,1]",
            &ParseContext::new(dims),
        )
        .unwrap();
        let mut dx = PluckerVector::zero(dims);
        dx.set(&MultiIndex::new(vec![0, 1]), 0.8);
        dx.set(&MultiIndex::new(vec![0, 2]), -0.3);
        dx.set(&MultiIndex::new(vec![0, 3]), 0.5);
        dx.set(&MultiIndex::new(vec![1, 2]), 1.1);
        dx.set(&MultiIndex::new(vec![1, 3]), -0.7);
        let x = [0.2, -0.4, 0.6, 0.9];
        let got = model.form.eval(&x, &dx).unwrap();
        let want = direct
            .eval(&crate::expr::EvalPoint {
                x: &x,
                dx: &dx,
                params: &BTreeMap::new(),
            })
            .unwrap();
        assert!((got - want).abs() < 1e-14, "{got} vs {want}");
    }

    #[test]
    fn complex_scalar_realification_matches_complex_evaluation() {
        // oracle: evaluate the complex form K = (dx^{12}dx^{13} − dx^{02}dx^{03})/dx^{01}
        //         − V dx^{01} with φ = u+iv, φ̄ = u−iv by complex arithmetic
        let model = builtin("complex_scalar", &BTreeMap::new()).unwrap();
        let dims = model.form.dims();
        // sample a decomposable dx from a conventional-like Jacobian
        let partials = [
            1.0, 0.0, // t
            0.0, 1.0, // x
            0.4, -0.9, // u
            -1.3, 0.2, // v
        ];
        let dx = jacobian_multivector(dims, &partials).unwrap();
        let x = [0.3, -0.1, 0.7, -0.5];
        let got = model.form.eval(&x, &dx).unwrap();

        // complex Plücker components: d0φ = d0u + i d0v etc.
        let c = |re: f64, im: f64| (re, im);
        let mul = |a: (f64, f64), b: (f64, f64)| (a.0 * b.0 - a.1 * b.1, a.0 * b.1 + a.1 * b.0);
        let sub = |a: (f64, f64), b: (f64, f64)| (a.0 - b.0, a.1 - b.1);
        let g = |i: &[usize]| dx.get(&MultiIndex::new(i.to_vec()));
        let d01 = c(g(&[0, 1]), 0.0);
        let d02 = c(g(&[0, 2]), g(&[0, 3])); // d0φ
        let d03 = c(g(&[0, 2]), -g(&[0, 3])); // d0φ̄
        let d12 = c(g(&[1, 2]), g(&[1, 3]));
        let d13 = c(g(&[1, 2]), -g(&[1, 3]));
        let num = sub(mul(d12, d13), mul(d02, d03));
        assert!(num.1.abs() < 1e-14, "imaginary part should cancel");
        let rho = x[2] * x[2] + x[3] * x[3];
        let want = num.0 / d01.0 - rho * d01.0;
        assert!((got - want).abs() < 1e-13, "{got} vs {want}");
    }

    #[test]
    fn maxwell_pullback_is_half_e2_minus_b2() {
        // conventional parameterization with A from smooth functions; compare K
        // against ½(E² − B²) with F_ab = ∂_a A_b − ∂_b A_a from the same partials
        let model = builtin("maxwell", &BTreeMap::new()).unwrap();
        let dims = model.form.dims();
        let a_funcs: [fn(&[f64]) -> f64; 4] = [
            |s| (s[1] * 1.1).sin() + s[2],
            |s| s[0] * s[3] - 0.3 * s[2],
            |s| (s[0] * 0.7).cos() * s[1],
            |s| s[1] * s[2] * 0.5,
        ];
        let grad = |f: fn(&[f64]) -> f64, s: &[f64]| {
            let mut g = [0.0; 4];
            let h = 1e-6;
            for a in 0..4 {
                let mut sp = s.to_vec();
                sp[a] += h;
                let mut sm = s.to_vec();
                sm[a] -= h;
                g[a] = (f(&sp) - f(&sm)) / (2.0 * h);
            }
            g
        };
        let s = [0.3, -0.2, 0.5, 0.1];
        let mut partials = vec![0.0; 8 * 4];
        for a in 0..4 {
            partials[a * 4 + a] = 1.0;
        }
        let mut da = [[0.0; 4]; 4];
        for (b, f) in a_funcs.iter().enumerate() {
            da[b] = grad(*f, &s);
            partials[(4 + b) * 4..(4 + b) * 4 + 4].copy_from_slice(&da[b]);
        }
        let dx = jacobian_multivector(dims, &partials).unwrap();
        let mut x = vec![0.0; 8];
        x[..4].copy_from_slice(&s);
        for (b, f) in a_funcs.iter().enumerate() {
            x[4 + b] = f(&s);
        }
        let got = model.form.eval(&x, &dx).unwrap();
        let f_ab = |a: usize, b: usize| da[b][a] - da[a][b];
        let want = 0.5
            * (f_ab(0, 1).powi(2) + f_ab(0, 2).powi(2) + f_ab(0, 3).powi(2)
                - f_ab(1, 2).powi(2)
                - f_ab(1, 3).powi(2)
                - f_ab(2, 3).powi(2));
        assert!((got - want).abs() < 1e-7, "{got} vs {want}");
    }

    #[test]
    fn every_catalog_killing_vector_passes() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for (name, args) in [
            ("free_particle", BTreeMap::new()),
            ("nambu_goto", BTreeMap::new()),
            ("scalar_1p1", BTreeMap::new()),
            ("complex_scalar", BTreeMap::new()),
        ] {
            let model = builtin(name, &args).unwrap();
            for k in &model.killing {
                let rep = killing_check(&model.form, &k.field, &k.b, 25, &mut rng).unwrap();
                assert!(
                    rep.pass,
                    "{name}/{}: max err {:.3e}",
                    k.name, rep.max_abs_err
                );
            }
        }
    }

    #[test]
    fn scalar_1p1_with_explicit_base_dependence_has_no_translations() {
        let mut args = BTreeMap::new();
        args.insert("L".to_string(), "(f1_0^2 - f1_1^2)/2 - x0*f1".to_string());
        let model = builtin("scalar_1p1", &args).unwrap();
        assert!(model.killing.is_empty());
    }

    #[test]
    fn reference_solutions_build() {
        let (_, s1) = reference_solution("ng_flat", &[9, 9], None).unwrap();
        assert_eq!(s1.shape(), &[9, 9]);
        let (_, s2) = reference_solution("scalar_wave", &[17, 17], None).unwrap();
        assert_eq!(s2.dims().coord_count, 4);
        let (_, s3) = reference_solution("maxwell_wave", &[7, 7, 4, 4], None).unwrap();
        assert_eq!(s3.dims().coord_count, 8);
        assert!(reference_solution("nope", &[5, 5], None).is_err());
        assert!(reference_solution("ng_flat", &[5], None).is_err());
    }
}
