//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line
//! (run with `cargo test --test acceptance -- --nocapture` to see them all).
//!
//! Every tolerance is pinned here, in code. Convergence orders are measured over
//! three grids; quantities that are exact to round-off on every grid skip the order
//! measurement (there is nothing left to converge).

use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use kawaguchi::catalog::{builtin, reference_solution, ModelCatalogEntry};
use kawaguchi::expr::{EvalPoint, Expression};
use kawaguchi::kform::{
    lagrangian_context, lift_from_lagrangian, sample_nondegenerate, velocity_symbol,
};
use kawaguchi::multivector::{jacobian_multivector, Dims};
use kawaguchi::noether::{
    conservation_divergence, killing_check, lie_derivative, maxwell_gauge_generator, BTerm,
    NoetherCurrent,
};
use kawaguchi::surface::{decompose, NFormField, Surface};
use kawaguchi::variational::{
    action_gradient, el_residual, el_residual_expanded, solve_el, SolveOptions,
};

const ROUND_OFF_FLOOR: f64 = 1e-12;

fn criterion(number: u32, name: &str, pass: bool, details: &str) {
    println!(
        "ACCEPTANCE {number:>2} {name}: {} ({details})",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {number} {name}: {details}");
}

/// Observed orders between successive errors; entries below the round-off floor
/// count as converged.
fn orders_ok(errs: &[f64], want: f64) -> (bool, String) {
    let mut msgs = Vec::new();
    let mut ok = true;
    for w in errs.windows(2) {
        if w[0] <= ROUND_OFF_FLOOR && w[1] <= ROUND_OFF_FLOOR {
            msgs.push("exact".to_string());
            continue;
        }
        let order = (w[0] / w[1]).log2();
        msgs.push(format!("{order:.2}"));
        ok &= order >= want;
    }
    (
        ok,
        format!(
            "errors [{}], orders [{}]",
            errs.iter()
                .map(|e| format!("{e:.3e}"))
                .collect::<Vec<_>>()
                .join(", "),
            msgs.join(", ")
        ),
    )
}

fn all_models() -> Vec<ModelCatalogEntry> {
    vec![
        builtin("free_particle", &BTreeMap::new()).unwrap(),
        builtin("nambu_goto", &BTreeMap::new()).unwrap(),
        builtin("scalar_1p1", &BTreeMap::new()).unwrap(),
        builtin("complex_scalar", &BTreeMap::new()).unwrap(),
        builtin("maxwell", &BTreeMap::new()).unwrap(),
    ]
}

#[test]
fn criterion_01_homogeneity() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    let mut details = Vec::new();
    for model in all_models() {
        let rep = model
            .form
            .homogeneity_report(100, &[0.5, 2.0, 10.0], &mut rng)
            .unwrap();
        details.push(format!("{}={:.2e}", model.name, rep.max_rel_error));
        worst = worst.max(rep.max_rel_error);
    }
    criterion(
        1,
        "homogeneity",
        worst < 1e-12,
        &format!("max rel err {}", details.join(", ")),
    );
}

#[test]
fn criterion_02_euler_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut worst = 0.0f64;
    let mut redraws = 0usize;
    for model in all_models() {
        for _ in 0..100 {
            let (x, dx) = sample_nondegenerate(&model.form, &mut rng, &mut redraws).unwrap();
            worst = worst.max(model.form.euler_identity_residual(&x, &dx).unwrap());
        }
    }
    criterion(
        2,
        "euler-identity",
        worst < 1e-12,
        &format!("max abs err {worst:.3e} over 100 pts x 5 models"),
    );
}

/// Random polynomial Lagrangian of total degree ≤ 4 over base coords, fields and
/// velocities; returns the expression and the symbol pool.
fn random_lagrangian(
    rng: &mut ChaCha8Rng,
    n: usize,
    d_fields: usize,
) -> (Expression, Vec<String>) {
    let ctx = lagrangian_context(n, d_fields, &[]);
    let dims = ctx.dims;
    let mut symbols: Vec<Expression> = Vec::new();
    let mut names = Vec::new();
    for a in 0..=n {
        symbols.push(Expression::coord(dims, a));
        names.push(format!("x{a}"));
    }
    for p in &ctx.params {
        symbols.push(Expression::param(
            dims,
            &ctx.params.iter().map(|s| s.as_str()).collect::<Vec<_>>(),
            p,
        ));
        names.push(p.clone());
    }
    let n_terms = rng.gen_range(2..=5);
    let mut acc = Expression::constant(dims, 0.0);
    for _ in 0..n_terms {
        let coeff = (rng.gen_range(-2.0..2.0f64) * 8.0).round() / 8.0;
        let mut term = Expression::constant(dims, coeff);
        let degree = rng.gen_range(1..=4);
        for _ in 0..degree {
            let pick = rng.gen_range(0..symbols.len());
            term = term.mul(&symbols[pick]);
        }
        acc = acc.add(&term);
    }
    (acc, names)
}

#[test]
fn criterion_03_lagrangian_lift_fidelity() {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let mut worst = 0.0f64;
    for trial in 0..10 {
        let (n, d_fields) = [(0usize, 1usize), (1, 1), (1, 2)][trial % 3];
        let (lagrangian, _) = random_lagrangian(&mut rng, n, d_fields);
        let form = lift_from_lagrangian(&lagrangian, n, d_fields, BTreeMap::new()).unwrap();
        let dims = form.dims();

        // random quadratic fields with analytic partials
        let mut coeffs = vec![[0.0f64; 6]; d_fields]; // c0 + c1 s0 + c2 s1 + c3 s0² + c4 s0 s1 + c5 s1²
        for c in coeffs.iter_mut() {
            for v in c.iter_mut() {
                *v = (rng.gen_range(-1.0..1.0f64) * 8.0).round() / 8.0;
            }
        }
        let field = |i: usize, s: &[f64]| {
            let c = &coeffs[i];
            let s1 = if n >= 1 { s[1] } else { 0.0 };
            c[0] + c[1] * s[0] + c[2] * s1 + c[3] * s[0] * s[0] + c[4] * s[0] * s1 + c[5] * s1 * s1
        };
        let dfield = |i: usize, a: usize, s: &[f64]| {
            let c = &coeffs[i];
            let s1 = if n >= 1 { s[1] } else { 0.0 };
            match a {
                0 => c[1] + 2.0 * c[3] * s[0] + c[4] * s1,
                _ => c[2] + c[4] * s[0] + 2.0 * c[5] * s1,
            }
        };

        for _ in 0..8 {
            let s: Vec<f64> = (0..=n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            // conventional Jacobian: base rows identity, field rows analytic partials
            let mut partials = vec![0.0; dims.coord_count * dims.degree];
            for a in 0..=n {
                partials[a * dims.degree + a] = 1.0;
            }
            let mut x = vec![0.0; dims.coord_count];
            x[..=n].copy_from_slice(&s);
            let mut param_vals = BTreeMap::new();
            for i in 0..d_fields {
                x[n + 1 + i] = field(i, &s);
                param_vals.insert(format!("f{}", i + 1), field(i, &s));
                for a in 0..=n {
                    partials[(n + 1 + i) * dims.degree + a] = dfield(i, a, &s);
                    param_vals.insert(velocity_symbol(i + 1, a), dfield(i, a, &s));
                }
            }
            let dx = jacobian_multivector(dims, &partials).unwrap();
            let lifted = form.eval(&x, &dx).unwrap();
            let direct = lagrangian
                .eval(&EvalPoint {
                    x: &x,
                    dx: &dx,
                    params: &param_vals,
                })
                .unwrap();
            worst = worst.max((lifted - direct).abs());
        }
    }
    criterion(
        3,
        "lagrangian-lift-fidelity",
        worst < 1e-10,
        &format!("max |σ*K − L| = {worst:.3e} over 10 random Lagrangians"),
    );
}

/// Orientation-preserving reparameterization of [0,1]² fixing the boundary.
/// Strong enough that the two discretizations have clearly different h² error
/// coefficients (a weak warp makes the action difference a near-cancellation with
/// no clean Richardson behavior).
fn warp(sigma: &[f64]) -> [f64; 2] {
    let (a, b) = (0.4, 0.35);
    let u = sigma[0] + a * sigma[0] * (1.0 - sigma[0]) * (1.0 - 2.0 * sigma[1]);
    let v = sigma[1] + b * sigma[1] * (1.0 - sigma[1]) * (2.0 * sigma[0] - 1.0);
    [u, v]
}

#[test]
fn criterion_04_reparameterization_invariance() {
    // flat and curved Nambu-Goto sheets under a fixed smooth reparameterization
    let model = builtin("nambu_goto", &BTreeMap::new()).unwrap();
    let dims = model.form.dims();
    let half_pi = 0.5 * std::f64::consts::PI;
    let bump = move |u: f64, v: f64| 0.4 * (half_pi * u).sin() * (half_pi * v).sin();
    let mut all_ok = true;
    let mut detail = Vec::new();
    for curved in [false, true] {
        let mut errs = Vec::new();
        for m in [17usize, 33, 65] {
            let h = 1.0 / (m as f64 - 1.0);
            let direct = Surface::from_fn(dims, &[m, m], &[h, h], &[0.0, 0.0], |s, x| {
                x.fill(0.0);
                x[0] = s[0];
                x[1] = s[1];
                if curved {
                    x[2] = bump(s[0], s[1]);
                }
            });
            let warped = Surface::from_fn(dims, &[m, m], &[h, h], &[0.0, 0.0], |s, x| {
                let [u, v] = warp(s);
                x.fill(0.0);
                x[0] = u;
                x[1] = v;
                if curved {
                    x[2] = bump(u, v);
                }
            });
            let a1 = direct.discrete_action(&model.form).unwrap();
            let a2 = warped.discrete_action(&model.form).unwrap();
            errs.push((a1 - a2).abs());
        }
        let (ok, msg) = orders_ok(&errs, 1.9);
        detail.push(format!(
            "{}: {msg}",
            if curved { "curved" } else { "flat" }
        ));
        all_ok &= ok;
    }
    criterion(4, "reparameterization-invariance", all_ok, &detail.join("; "));
}

#[test]
fn criterion_05_covariant_el_correctness() {
    // scalar plane wave
    let mut scalar_errs = Vec::new();
    for m in [17usize, 33, 65] {
        let (model, surf) = reference_solution("scalar_wave", &[m, m], None).unwrap();
        scalar_errs.push(el_residual(&model.form, &surf).unwrap().max_norm);
    }
    let (ok_s, msg_s) = orders_ok(&scalar_errs, 1.9);

    // Maxwell plane wave (lower wavenumber: same resolved wavelengths, smaller grids)
    let mut maxwell_errs = Vec::new();
    for m in [9usize, 17, 33] {
        let (model, surf) =
            reference_solution("maxwell_wave", &[m, m, 4, 4], Some(std::f64::consts::PI))
                .unwrap();
        maxwell_errs.push(el_residual(&model.form, &surf).unwrap().max_norm);
    }
    let (ok_m, msg_m) = orders_ok(&maxwell_errs, 1.9);

    // flat Nambu-Goto sheet is residual-free on every grid
    let mut ng_worst = 0.0f64;
    for m in [9usize, 17, 33] {
        let (model, surf) = reference_solution("ng_flat", &[m, m], None).unwrap();
        ng_worst = ng_worst.max(el_residual(&model.form, &surf).unwrap().max_norm);
    }
    let ok_ng = ng_worst < 1e-12;

    criterion(
        5,
        "covariant-el-correctness",
        ok_s && ok_m && ok_ng,
        &format!("scalar {msg_s}; maxwell {msg_m}; ng flat max {ng_worst:.2e}"),
    );
}

/// Independent conventional-EL oracle for the realified complex scalar on a
/// conventional grid: cell-center values by corner averages, second derivatives by
/// differencing neighbor cell centers. EL components carry the factor −2 of the
/// realified Lagrangian (L = u_t²+v_t²−u_x²−v_x² − V).
fn scalar_conventional_oracle(surf: &Surface, m_sq: f64) -> Vec<f64> {
    let cells = surf.cell_shape();
    let cc = surf.dims().coord_count;
    let interior: Vec<usize> = cells.iter().map(|c| c - 2).collect();
    let h = surf.spacing();
    let cell_avg = |cell: &[usize], mu: usize| {
        let mut x = vec![0.0; cc];
        surf.cell_center_x(cell, &mut x);
        x[mu]
    };
    let total: usize = interior.iter().product();
    let mut out = vec![0.0; total * 2];
    let mut rel = vec![0usize; 2];
    for lin in 0..total {
        decompose(lin, &interior, &mut rel);
        let cell = [rel[0] + 1, rel[1] + 1];
        for (slot, mu) in [2usize, 3].iter().enumerate() {
            let c0 = cell_avg(&cell, *mu);
            let tt = (cell_avg(&[cell[0] + 1, cell[1]], *mu) - 2.0 * c0
                + cell_avg(&[cell[0] - 1, cell[1]], *mu))
                / (h[0] * h[0]);
            let xx = (cell_avg(&[cell[0], cell[1] + 1], *mu) - 2.0 * c0
                + cell_avg(&[cell[0], cell[1] - 1], *mu))
                / (h[1] * h[1]);
            out[lin * 2 + slot] = -2.0 * (tt - xx + m_sq * c0);
        }
    }
    out
}

#[test]
fn criterion_06_conventional_recovery() {
    let mut args = BTreeMap::new();
    args.insert("m".to_string(), "1".to_string());
    let model = builtin("complex_scalar", &args).unwrap();
    let dims = model.form.dims();
    let mut oracle_errs = Vec::new();
    let mut em_errs = Vec::new();
    let mut scale = 0.0f64;
    for m in [17usize, 33, 65] {
        let h = 1.0 / (m as f64 - 1.0);
        // smooth, decidedly off-shell fields
        let surf = Surface::conventional(dims, &[m, m], &[h, h], &[0.0, 0.0], |s, f| {
            f[0] = 0.8 * (2.1 * s[0] + 0.3).sin() * (1.7 * s[1]).cos();
            f[1] = 0.5 * (1.3 * s[0]).cos() * (2.9 * s[1] - 0.4).sin() + 0.2 * s[0] * s[1];
        });
        let res = el_residual(&model.form, &surf).unwrap();
        scale = scale.max(res.max_norm);
        let oracle = scalar_conventional_oracle(&surf, 1.0);
        let interior: Vec<usize> = surf.cell_shape().iter().map(|c| c - 2).collect();
        let total: usize = interior.iter().product();
        let mut worst = 0.0f64;
        let mut em_worst = 0.0f64;
        let mut rel = vec![0usize; 2];
        let mut partials = vec![0.0; dims.coord_count * dims.degree];
        for lin in 0..total {
            decompose(lin, &interior, &mut rel);
            let cell = [rel[0] + 1, rel[1] + 1];
            for (slot, mu) in [2usize, 3].iter().enumerate() {
                let a = res.component(&cell, *mu);
                let b = oracle[lin * 2 + slot];
                worst = worst.max((a - b).abs());
            }
            // base-index residuals are field-index residuals contracted with the
            // field gradients: EL_a + Σ_i ∂_a φ_i EL_{field i} = O(h²)
            surf.cell_partials(&cell, &mut partials);
            for a in 0..2usize {
                let mut combo = res.component(&cell, a);
                for mu in [2usize, 3] {
                    combo += partials[mu * dims.degree + a] * res.component(&cell, mu);
                }
                em_worst = em_worst.max(combo.abs());
            }
        }
        oracle_errs.push(worst);
        em_errs.push(em_worst);
    }
    // The two field-index discretizations coincide identically on conventional
    // grids (both are the same linear stencil), so agreement is round-off exact;
    // the floor scales with the residual magnitude and accumulated arithmetic.
    let floor = 1e-11 * scale.max(1.0);
    let oracle_ok = oracle_errs.iter().all(|e| *e <= floor) || {
        let (ok, _) = orders_ok(&oracle_errs, 1.9);
        ok
    };
    let (em_ok, em_msg) = orders_ok(&em_errs, 1.9);
    criterion(
        6,
        "conventional-recovery",
        oracle_ok && em_ok,
        &format!(
            "oracle diff {:?} (floor {floor:.1e}); energy-momentum identity {em_msg}",
            oracle_errs
                .iter()
                .map(|e| format!("{e:.2e}"))
                .collect::<Vec<_>>()
        ),
    );
}

#[test]
fn criterion_07_expanded_el_agreement() {
    // random smooth surfaces: expanded vs direct discrepancy decays at order ≥ 1.9
    let model = builtin("complex_scalar", &BTreeMap::new()).unwrap();
    let dims = model.form.dims();
    let mut errs = Vec::new();
    for m in [17usize, 33, 65] {
        let h = 1.0 / (m as f64 - 1.0);
        let surf = Surface::conventional(dims, &[m, m], &[h, h], &[0.0, 0.0], |s, f| {
            f[0] = 0.6 * (1.9 * s[0]).sin() + 0.3 * (2.3 * s[1]).cos();
            f[1] = 0.4 * (1.1 * s[0] + 0.7 * s[1]).sin();
        });
        let direct = el_residual(&model.form, &surf).unwrap();
        let expanded = el_residual_expanded(&model.form, &surf, 1e-6).unwrap();
        let worst = direct
            .values
            .iter()
            .zip(&expanded.values)
            .fold(0.0f64, |w, (a, b)| w.max((a - b).abs()));
        errs.push(worst);
    }
    let (ok_conv, msg) = orders_ok(&errs, 1.9);

    // exact 0 on linear embeddings: flat string sheet and constant-F Maxwell surface
    let (ng, ng_surf) = reference_solution("ng_flat", &[8, 8], None).unwrap();
    let ng_exp = el_residual_expanded(&ng.form, &ng_surf, 1e-6).unwrap();
    let maxwell = builtin("maxwell", &BTreeMap::new()).unwrap();
    let mdims = maxwell.form.dims();
    let lin_surf = Surface::conventional(
        mdims,
        &[5, 5, 4, 4],
        &[0.2, 0.2, 0.25, 0.25],
        &[0.0; 4],
        |s, f| {
            f[0] = 0.3 * s[1];
            f[1] = -0.2 * s[0] + 0.1 * s[3];
            f[2] = 0.5 * s[0];
            f[3] = 0.25 * s[2];
        },
    );
    let mx_exp = el_residual_expanded(&maxwell.form, &lin_surf, 1e-6).unwrap();
    let exact_ok = ng_exp.max_norm < 1e-12 && mx_exp.max_norm < 1e-12;

    criterion(
        7,
        "expanded-el-agreement",
        ok_conv && exact_ok,
        &format!(
            "{msg}; linear embeddings ng {:.2e}, maxwell {:.2e}",
            ng_exp.max_norm, mx_exp.max_norm
        ),
    );
}

#[test]
fn criterion_08_killing_catalog() {
    let mut rng = ChaCha8Rng::seed_from_u64(108);
    let mut worst = 0.0f64;
    let mut count = 0usize;

    let scalar = builtin("complex_scalar", &BTreeMap::new()).unwrap();
    for k in &scalar.killing {
        let rep = killing_check(&scalar.form, &k.field, &k.b, 100, &mut rng).unwrap();
        assert!(rep.pass, "scalar {}: {:.3e}", k.name, rep.max_abs_err);
        worst = worst.max(rep.max_abs_err);
        count += 1;
    }

    let maxwell = builtin("maxwell", &BTreeMap::new()).unwrap();
    assert_eq!(maxwell.killing.len(), 14); // 8 translations + 6 rotations/boosts
    for k in &maxwell.killing {
        let rep = killing_check(&maxwell.form, &k.field, &k.b, 100, &mut rng).unwrap();
        assert!(rep.pass, "maxwell {}: {:.3e}", k.name, rep.max_abs_err);
        worst = worst.max(rep.max_abs_err);
        count += 1;
    }

    // 5 random gauge functions, fiber dependence included
    let mdims = Dims::from_spec(7, 3);
    let ctx = kawaguchi::expr::ParseContext::new(mdims);
    for _ in 0..5 {
        let n_terms = rng.gen_range(1..=3);
        let mut lambda = Expression::constant(mdims, 0.0);
        for _ in 0..n_terms {
            let c = (rng.gen_range(-1.0..1.0f64) * 4.0).round() / 4.0;
            let mut term = Expression::constant(mdims, c);
            for _ in 0..rng.gen_range(1..=2) {
                let mu = rng.gen_range(0..8);
                term = term.mul(&Expression::coord(mdims, mu));
            }
            lambda = lambda.add(&term);
        }
        let _ = &ctx;
        let g = maxwell_gauge_generator(&lambda).unwrap();
        let dev = g.degree0_deviation(&maxwell.form, 20, &mut rng).unwrap();
        assert!(dev < 1e-12, "gauge generator not degree-0: {dev:.3e}");
        let rep = killing_check(&maxwell.form, &g, &BTerm::zero(mdims), 100, &mut rng).unwrap();
        assert!(
            rep.pass,
            "gauge Λ̃ = {}: {:.3e}",
            lambda, rep.max_abs_err
        );
        worst = worst.max(rep.max_abs_err);
        count += 1;
    }

    criterion(
        8,
        "killing-catalog",
        worst < 1e-10,
        &format!("{count} generators, max |L_v K − dB| = {worst:.3e}"),
    );
}

#[test]
fn criterion_09_noether_reproduction() {
    let mut rng = ChaCha8Rng::seed_from_u64(109);
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    let mut args = BTreeMap::new();
    args.insert("m".to_string(), "1".to_string());
    for (name, args) in [("complex_scalar", args), ("maxwell", BTreeMap::new())] {
        let model = builtin(name, &args).unwrap();
        let dims = model.form.dims();
        let mut redraws = 0usize;
        for cur in &model.currents {
            let k = model.killing_by_name(&cur.killing).expect("killing exists");
            let generic = NoetherCurrent::new(&model.form, &k.field, &k.b).unwrap();
            for _ in 0..100 {
                let (x, dx) =
                    sample_nondegenerate(&model.form, &mut rng, &mut redraws).unwrap();
                let mut a = vec![0.0; dims.minor_count()];
                let mut b = vec![0.0; dims.minor_count()];
                generic.coeffs(&x, &dx, &mut a).unwrap();
                cur.form.coeffs(&x, &dx, &mut b).unwrap();
                for (l, r) in a.iter().zip(&b) {
                    worst = worst.max((l - r).abs());
                }
            }
            checked += 1;
        }
    }
    assert_eq!(checked, 7); // scalar T0, T1, J + maxwell T0, T4, T5, L12
    criterion(
        9,
        "noether-reproduction",
        worst < 1e-10,
        &format!("7 closed-form currents, max coeff diff {worst:.3e}"),
    );
}

#[test]
fn criterion_10_conservation() {
    let mut ok = true;
    let mut details = Vec::new();

    // The circular-polarized reference wave has constant discrete energy, momentum
    // and charge densities, so its currents are conserved to round-off on every
    // grid: assert that directly (floor accounts for the 1/h amplification of the
    // staggered derivative at the finest grid).
    let mut circ_worst = 0.0f64;
    for m in [17usize, 33, 65] {
        let (model, surf) = reference_solution("scalar_wave", &[m, m], None).unwrap();
        for cur in &model.currents {
            let k = model.killing_by_name(&cur.killing).unwrap();
            let generic = NoetherCurrent::new(&model.form, &k.field, &k.b).unwrap();
            let (_, _, rep) = conservation_divergence(&generic, &surf).unwrap();
            circ_worst = circ_worst.max(rep.interior_max);
        }
    }
    ok &= circ_worst < 1e-9;
    details.push(format!("scalar circular wave exact: max |dJ| {circ_worst:.2e}"));

    // A massless superposition has genuinely varying densities; its divergences
    // decay at second order.
    let mut errs: Vec<Vec<f64>> = vec![Vec::new(); 3];
    for m in [17usize, 33, 65] {
        let mut args = BTreeMap::new();
        args.insert("m".to_string(), "0".to_string());
        let model = builtin("complex_scalar", &args).unwrap();
        let dims = model.form.dims();
        // the density products carry up to 3× this wavenumber; π keeps them
        // resolved on the coarsest grid
        let k_wave = std::f64::consts::PI;
        let extents = [0.618_033_988_749_894_9_f64, 1.0];
        let h: Vec<f64> = [m, m]
            .iter()
            .zip(extents)
            .map(|(mm, e)| e / (*mm as f64 - 1.0))
            .collect();
        let surf = Surface::conventional(dims, &[m, m], &h, &[0.0, 0.0], move |s, f| {
            let phase = k_wave * (s[1] - s[0]);
            f[0] = phase.cos();
            f[1] = 0.4 * (2.0 * phase).cos(); // still on shell, densities vary
        });
        for (i, cur) in model.currents.iter().enumerate() {
            let k = model.killing_by_name(&cur.killing).unwrap();
            let generic = NoetherCurrent::new(&model.form, &k.field, &k.b).unwrap();
            let (_, _, rep) = conservation_divergence(&generic, &surf).unwrap();
            errs[i].push(rep.interior_max);
        }
    }
    for (i, name) in ["T0", "T1", "J"].iter().enumerate() {
        let (o, msg) = orders_ok(&errs[i], 1.9);
        ok &= o;
        details.push(format!("scalar {name}: {msg}"));
    }

    // Maxwell wave: all four currents
    let mut merrs: Vec<Vec<f64>> = vec![Vec::new(); 4];
    for m in [9usize, 17, 33] {
        let (model, surf) =
            reference_solution("maxwell_wave", &[m, m, 4, 4], Some(std::f64::consts::PI))
                .unwrap();
        for (i, cur) in model.currents.iter().enumerate() {
            let k = model.killing_by_name(&cur.killing).unwrap();
            let generic = NoetherCurrent::new(&model.form, &k.field, &k.b).unwrap();
            let (_, _, rep) = conservation_divergence(&generic, &surf).unwrap();
            merrs[i].push(rep.interior_max);
        }
    }
    for (i, name) in ["T0", "T4", "T5", "L12"].iter().enumerate() {
        let (o, msg) = orders_ok(&merrs[i], 1.9);
        ok &= o;
        details.push(format!("maxwell {name}: {msg}"));
    }

    // charge constancy across time slices for the scalar wave (charge and energy)
    let mut spreads: Vec<Vec<f64>> = vec![Vec::new(); 2];
    for m in [17usize, 33, 65] {
        let (model, surf) = reference_solution("scalar_wave", &[m, m], None).unwrap();
        for (slot, cname) in [(0usize, "J"), (1usize, "T0")] {
            let cur = model.current_by_name(cname).unwrap();
            let k = model.killing_by_name(&cur.killing).unwrap();
            let generic = NoetherCurrent::new(&model.form, &k.field, &k.b).unwrap();
            let pulled = surf.pullback_nform(&generic).unwrap();
            let slices = surf.shape()[0];
            let charges: Vec<f64> = (1..slices - 1)
                .map(|k| pulled.slice_charge(0, k))
                .collect();
            let mean = charges.iter().sum::<f64>() / charges.len() as f64;
            let spread = charges
                .iter()
                .fold(0.0f64, |w, q| w.max((q - mean).abs()));
            spreads[slot].push(spread);
        }
    }
    for (slot, cname) in [(0usize, "J"), (1usize, "T0")] {
        let (o, msg) = orders_ok(&spreads[slot], 1.9);
        ok &= o;
        details.push(format!("charge {cname}: {msg}"));
    }

    criterion(10, "conservation", ok, &details.join("; "));
}

#[test]
fn criterion_11_solver() {
    let mut ok = true;
    let mut details = Vec::new();
    let mut errors = Vec::new();
    let mut final_time = 0.0;
    for m in [33usize, 65] {
        let (model, exact) = reference_solution("scalar_wave", &[m, m], None).unwrap();
        let dims = model.form.dims();
        let cc = dims.coord_count;
        // noisy interior start, exact boundary data
        let mut noisy = exact.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(111);
        let shape = noisy.shape().to_vec();
        for node in 0..noisy.node_count() {
            let mut idx = vec![0usize; 2];
            decompose(node, &shape, &mut idx);
            if idx.iter().zip(&shape) .all(|(i, m)| *i >= 1 && i + 1 < *m) {
                for mu in [2usize, 3] {
                    noisy.values_mut()[node * cc + mu] += 0.1 * rng.gen_range(-1.0..1.0);
                }
            }
        }
        let opts = SolveOptions {
            tolerance: 1e-9,
            max_iterations: 20,
            linear_max_iters: 4000,
            linear_restart: 200,
            ..Default::default()
        };
        let t0 = Instant::now();
        let (solved, report) = solve_el(&model.form, &noisy, &[2, 3], &opts).unwrap();
        let dt = t0.elapsed().as_secs_f64();
        let mut err = 0.0f64;
        for (a, b) in solved.values().iter().zip(exact.values()) {
            err = err.max((a - b).abs());
        }
        details.push(format!(
            "{m}x{m}: err {err:.3e}, {} newton / {} gmres iters, {dt:.1} s",
            report.iterations, report.gmres_iterations
        ));
        errors.push(err);
        final_time = dt;
        ok &= report.converged;
    }
    let o = (errors[0] / errors[1]).log2();
    ok &= o >= 1.7;
    ok &= errors[1] < 0.02; // far below the 0.1 noise floor
    ok &= final_time < 60.0;
    criterion(
        11,
        "solver",
        ok,
        &format!("{}; order {o:.2}", details.join("; ")),
    );
}

#[test]
fn criterion_12_gradient_consistency() {
    let mut worst_rel = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(112);

    // curved string sheet and a random scalar surface
    let ng = builtin("nambu_goto", &BTreeMap::new()).unwrap();
    let ngd = ng.form.dims();
    let s1 = Surface::conventional(ngd, &[6, 6], &[0.2, 0.2], &[0.0, 0.0], |s, f| {
        f.fill(0.0);
        f[0] = 0.25 * (2.0 * s[0]).sin() * (1.5 * s[1] + 0.2).cos();
    });
    let scalar = builtin("complex_scalar", &BTreeMap::new()).unwrap();
    let sd = scalar.form.dims();
    let noise: Vec<f64> = (0..2 * 36).map(|_| rng.gen_range(-0.5..0.5)).collect();
    let s2 = Surface::conventional(sd, &[6, 6], &[0.15, 0.15], &[0.0, 0.0], |s, f| {
        let i = ((s[0] / 0.15).round() as usize) * 6 + (s[1] / 0.15).round() as usize;
        f[0] = 0.4 * (1.1 * s[0]).sin() + noise[2 * i] * 0.1;
        f[1] = 0.3 * (0.9 * s[1]).cos() + noise[2 * i + 1] * 0.1;
    });

    for (form, surf) in [(&ng.form, &s1), (&scalar.form, &s2)] {
        let g = action_gradient(form, surf).unwrap();
        let cc = form.dims().coord_count;
        let shape = surf.shape().to_vec();
        let fd_step = 1e-6;
        for node in 0..surf.node_count() {
            let mut idx = vec![0usize; 2];
            decompose(node, &shape, &mut idx);
            if !surf.node_is_interior(&idx) {
                continue;
            }
            for mu in 0..cc {
                let mut sp = surf.clone();
                sp.values_mut()[node * cc + mu] += fd_step;
                let mut sm = surf.clone();
                sm.values_mut()[node * cc + mu] -= fd_step;
                let fd = (sp.discrete_action(form).unwrap() - sm.discrete_action(form).unwrap())
                    / (2.0 * fd_step);
                let exact = g[node * cc + mu];
                let rel = (fd - exact).abs() / (1.0 + exact.abs());
                worst_rel = worst_rel.max(rel);
            }
        }
    }
    criterion(
        12,
        "gradient-consistency",
        worst_rel < 1e-6,
        &format!("max relative deviation {worst_rel:.3e}"),
    );
}

/// The lie_derivative example from the symmetry checks: kept here because it pins
/// the catalog rotation generator through the same code path the criteria use.
#[test]
fn scalar_rotation_lie_derivative_vanishes() {
    let model = builtin("complex_scalar", &BTreeMap::new()).unwrap();
    let w = &model.killing_by_name("w").unwrap().field;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut redraws = 0;
    for _ in 0..20 {
        let (x, dx) = sample_nondegenerate(&model.form, &mut rng, &mut redraws).unwrap();
        let lv = lie_derivative(&model.form, w, &x, &dx).unwrap();
        assert!(lv.abs() < 1e-12, "{lv}");
    }
}
