//! Machine-readable reports and CSV writers shared by the CLI and the FFI layer.
//! Reports carry the tolerances and grid metadata they were produced with, so runs
//! are self-describing.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::kform::{sample_nondegenerate, HomogeneityReport, KawaguchiForm};
use crate::multivector::plucker_residual;
use crate::noether::{killing_check, BTerm, DivergenceReport, KillingReport, VectorField};
use crate::surface::{decompose, GridNForm, Surface};
use crate::variational::{ConvergenceReport, ELResidualField};

#[derive(Clone, Debug, Serialize)]
pub struct ScalarCheck {
    pub samples: usize,
    pub max_abs_err: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct KillingEntry {
    pub name: String,
    pub generalized: bool,
    #[serde(flatten)]
    pub report: KillingReport,
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckReport {
    pub model: String,
    pub seed: u64,
    pub homogeneity: HomogeneityReport,
    pub euler_identity: ScalarCheck,
    pub plucker: ScalarCheck,
    pub killing: Vec<KillingEntry>,
    pub pass: bool,
}

/// Run the standard model checks: homogeneity (λ ∈ {0.5, 2, 10}, tolerance 1e-12),
/// Euler identity (1e-12), Plücker relations of sampled decomposable multivectors
/// (1e-12, scaled), and every supplied Killing generator (1e-10).
pub fn run_model_checks(
    model_name: &str,
    form: &KawaguchiForm,
    killing_list: &[(String, VectorField, BTerm)],
    samples: usize,
    seed: u64,
) -> crate::Result<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let homogeneity = form.homogeneity_report(samples, &[0.5, 2.0, 10.0], &mut rng)?;

    let mut redraws = 0usize;
    let mut euler_worst = 0.0f64;
    let mut plucker_worst = 0.0f64;
    for _ in 0..samples {
        let (x, dx) = sample_nondegenerate(form, &mut rng, &mut redraws)?;
        euler_worst = euler_worst.max(form.euler_identity_residual(&x, &dx)?);
        let scale = dx.max_abs().powi(2).max(1.0);
        plucker_worst = plucker_worst.max(plucker_residual(&dx) / scale);
    }
    let euler_identity = ScalarCheck {
        samples,
        max_abs_err: euler_worst,
        tolerance: 1e-12,
        pass: euler_worst < 1e-12,
    };
    let plucker = ScalarCheck {
        samples,
        max_abs_err: plucker_worst,
        tolerance: 1e-12,
        pass: plucker_worst < 1e-12,
    };

    let mut killing = Vec::new();
    for (name, field, b) in killing_list {
        let report = killing_check(form, field, b, samples, &mut rng)?;
        killing.push(KillingEntry {
            name: name.clone(),
            generalized: field.is_generalized(),
            report,
        });
    }
    let pass = homogeneity.pass
        && euler_identity.pass
        && plucker.pass
        && killing.iter().all(|k| k.report.pass);
    Ok(CheckReport {
        model: model_name.to_string(),
        seed,
        homogeneity,
        euler_identity,
        plucker,
        killing,
        pass,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct GridMeta {
    pub shape: Vec<usize>,
    pub spacing: Vec<f64>,
    pub origin: Vec<f64>,
}

impl GridMeta {
    pub fn of(surface: &Surface) -> Self {
        GridMeta {
            shape: surface.shape().to_vec(),
            spacing: surface.spacing().to_vec(),
            origin: surface.origin().to_vec(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ActionReport {
    pub model: String,
    pub grid: GridMeta,
    pub action: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ResidualReport {
    pub model: String,
    pub grid: GridMeta,
    pub expanded: bool,
    pub max_norm: f64,
    pub l2_norm: f64,
    pub per_coord_max: Vec<f64>,
    pub interior_cells: usize,
}

impl ResidualReport {
    pub fn new(model: &str, surface: &Surface, field: &ELResidualField, expanded: bool) -> Self {
        ResidualReport {
            model: model.to_string(),
            grid: GridMeta::of(surface),
            expanded,
            max_norm: field.max_norm,
            l2_norm: field.l2_norm,
            per_coord_max: field.per_coord_max.clone(),
            interior_cells: field.shape.iter().product(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SolveReport {
    pub model: String,
    pub grid: GridMeta,
    pub free_coords: Vec<usize>,
    #[serde(flatten)]
    pub convergence: ConvergenceReport,
}

#[derive(Clone, Debug, Serialize)]
pub struct NoetherReport {
    pub model: String,
    pub vector: String,
    pub grid: GridMeta,
    #[serde(flatten)]
    pub divergence: DivergenceReport,
}

/// Residual components as CSV: one row per interior cell, `cell indices, EL_0..EL_N`.
pub fn write_residual_csv(field: &ELResidualField, w: &mut impl Write) -> std::io::Result<()> {
    let deg = field.shape.len();
    let cc = field.dims.coord_count;
    let mut header: Vec<String> = (0..deg).map(|a| format!("c{a}")).collect();
    header.extend((0..cc).map(|mu| format!("el{mu}")));
    writeln!(w, "{}", header.join(","))?;
    let mut rel = vec![0usize; deg];
    let total: usize = field.shape.iter().product();
    for lin in 0..total {
        decompose(lin, &field.shape, &mut rel);
        let mut row: Vec<String> = rel
            .iter()
            .zip(&field.offset)
            .map(|(r, o)| (r + o).to_string())
            .collect();
        row.extend(
            field.values[lin * cc..(lin + 1) * cc]
                .iter()
                .map(|v| format!("{v}")),
        );
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

/// Face coefficients of a pulled-back n-form as CSV:
/// `dir, face indices…, coeff` (face index along `dir` runs over node positions).
pub fn write_nform_csv(form: &GridNForm, w: &mut impl Write) -> std::io::Result<()> {
    let deg = form.degree();
    let mut header = vec!["dir".to_string()];
    header.extend((0..deg).map(|a| format!("f{a}")));
    header.push("coeff".to_string());
    writeln!(w, "{}", header.join(","))?;
    let mut idx = vec![0usize; deg];
    for a in 0..deg {
        let extent = form.face_extent(a);
        let total: usize = extent.iter().product();
        for lin in 0..total {
            decompose(lin, &extent, &mut idx);
            let mut row = vec![a.to_string()];
            row.extend(idx.iter().map(|i| i.to_string()));
            row.push(format!("{}", form.coeffs(a)[lin]));
            writeln!(w, "{}", row.join(","))?;
        }
    }
    Ok(())
}

/// Per-cell divergence values as CSV.
pub fn write_divergence_csv(
    cells: &[usize],
    values: &[f64],
    w: &mut impl Write,
) -> std::io::Result<()> {
    let deg = cells.len();
    let mut header: Vec<String> = (0..deg).map(|a| format!("c{a}")).collect();
    header.push("div".to_string());
    writeln!(w, "{}", header.join(","))?;
    let mut idx = vec![0usize; deg];
    for (lin, v) in values.iter().enumerate() {
        decompose(lin, cells, &mut idx);
        let mut row: Vec<String> = idx.iter().map(|i| i.to_string()).collect();
        row.push(format!("{v}"));
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}
