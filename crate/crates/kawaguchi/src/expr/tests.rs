use std::collections::BTreeMap;
use std::sync::Arc;

use proptest::prelude::*;

use super::*;
use crate::multivector::{Dims, MultiIndex, PluckerVector};

fn dims21() -> Dims {
    Dims::from_spec(2, 1) // coordinates x0..x2, pairs d[i,j]
}

fn ctx(dims: Dims) -> ParseContext {
    ParseContext::new(dims).with_params(["q", "m"])
}

fn point<'a>(
    x: &'a [f64],
    dx: &'a PluckerVector,
    params: &'a BTreeMap<String, f64>,
) -> EvalPoint<'a> {
    EvalPoint { x, dx, params }
}

#[test]
fn parse_single_plucker_symbol() {
    let e = Expression::parse("d[0,1]", &ctx(dims21())).unwrap();
    assert!(matches!(e.ast(), Ast::Plucker(_)));
    assert_eq!(e.active_pluckers().len(), 1);
}

#[test]
fn parse_nested_tree_with_param() {
    let e = Expression::parse("sqrt(-(1/2)*q)", &ctx(dims21())).unwrap();
    assert!(matches!(e.ast(), Ast::Sqrt(_)));
    let mut params = BTreeMap::new();
    params.insert("q".to_string(), -8.0);
    params.insert("m".to_string(), 0.0);
    let dx = PluckerVector::zero(dims21());
    let v = e.eval(&point(&[0.0, 0.0, 0.0], &dx, &params)).unwrap();
    assert!((v - 2.0).abs() < 1e-15);
}

#[test]
fn parse_rejects_unsorted_tuple() {
    let err = Expression::parse("d[1,0]", &ctx(dims21())).unwrap_err();
    assert!(err.message.contains("strictly increasing"), "{err}");
}

#[test]
fn parse_rejects_unknown_symbol_and_bad_index() {
    assert!(Expression::parse("foo + 1", &ctx(dims21())).is_err());
    assert!(Expression::parse("d[0,7]", &ctx(dims21())).is_err());
    assert!(Expression::parse("d[0,0]", &ctx(dims21())).is_err());
    assert!(Expression::parse("x9", &ctx(dims21())).is_err());
    assert!(Expression::parse("d[0]", &ctx(dims21())).is_err());
}

#[test]
fn parse_error_carries_position() {
    let err = Expression::parse("1 +\n zz", &ctx(dims21())).unwrap_err();
    assert_eq!(err.line, 2);
    assert!(err.col >= 2);
}

#[test]
fn eval_plucker_symbol_gradient() {
    let dims = dims21();
    let e = Expression::parse("d[0,1]", &ctx(dims)).unwrap();
    let mut dx = PluckerVector::zero(dims);
    dx.set(&MultiIndex::new(vec![0, 1]), 2.0);
    let mut params = BTreeMap::new();
    params.insert("q".into(), 0.0);
    params.insert("m".into(), 0.0);
    let g = e
        .eval_with_gradient(&point(&[0.0; 3], &dx, &params))
        .unwrap();
    assert_eq!(g.value, 2.0);
    assert_eq!(g.grad_dx.get(&MultiIndex::new(vec![0, 1])), 1.0);
    assert_eq!(g.grad_dx.get(&MultiIndex::new(vec![0, 2])), 0.0);
    assert_eq!(g.grad_x, vec![0.0; 3]);
}

#[test]
fn eval_ratio_gradient_hand_values() {
    // (d[0,2])^2 / d[0,1] at d01=2, d02=3 → 4.5, ∂d01 = -2.25, ∂d02 = 3
    let dims = dims21();
    let e = Expression::parse("d[0,2]^2/d[0,1]", &ctx(dims)).unwrap();
    let mut dx = PluckerVector::zero(dims);
    dx.set(&MultiIndex::new(vec![0, 1]), 2.0);
    dx.set(&MultiIndex::new(vec![0, 2]), 3.0);
    let mut params = BTreeMap::new();
    params.insert("q".into(), 0.0);
    params.insert("m".into(), 0.0);
    let g = e.eval_with_gradient(&point(&[0.0; 3], &dx, &params)).unwrap();
    assert!((g.value - 4.5).abs() < 1e-15);
    assert!((g.grad_dx.get(&MultiIndex::new(vec![0, 1])) + 2.25).abs() < 1e-15);
    assert!((g.grad_dx.get(&MultiIndex::new(vec![0, 2])) - 3.0).abs() < 1e-15);

    // cross-check by central finite differences at step 1e-6
    for rank in 0..dims.component_count() {
        let h = 1e-6;
        let mut plus = dx.clone();
        plus.components_mut()[rank] += h;
        let mut minus = dx.clone();
        minus.components_mut()[rank] -= h;
        let fp = e.eval(&point(&[0.0; 3], &plus, &params)).unwrap();
        let fm = e.eval(&point(&[0.0; 3], &minus, &params)).unwrap();
        let fd = (fp - fm) / (2.0 * h);
        assert!(
            (fd - g.grad_dx.components()[rank]).abs() < 1e-8,
            "rank {rank}"
        );
    }
}

#[test]
fn eval_mixed_coord_plucker() {
    // x0 * d[0,1] at x0=5, d01=2 → 10, ∂x0 = 2, ∂d01 = 5
    let dims = dims21();
    let e = Expression::parse("x0*d[0,1]", &ctx(dims)).unwrap();
    let mut dx = PluckerVector::zero(dims);
    dx.set(&MultiIndex::new(vec![0, 1]), 2.0);
    let mut params = BTreeMap::new();
    params.insert("q".into(), 0.0);
    params.insert("m".into(), 0.0);
    let g = e
        .eval_with_gradient(&point(&[5.0, 0.0, 0.0], &dx, &params))
        .unwrap();
    assert_eq!(g.value, 10.0);
    assert_eq!(g.grad_x[0], 2.0);
    assert_eq!(g.grad_dx.get(&MultiIndex::new(vec![0, 1])), 5.0);
}

#[test]
fn eval_errors() {
    let dims = dims21();
    let params = BTreeMap::new();
    let dx = PluckerVector::zero(dims);
    let div = Expression::parse("1/d[0,1]", &ParseContext::new(dims)).unwrap();
    assert_eq!(
        div.eval(&point(&[0.0; 3], &dx, &params)).unwrap_err(),
        EvalError::DivisionByZero
    );
    let sq = Expression::parse("sqrt(x0)", &ParseContext::new(dims)).unwrap();
    assert!(matches!(
        sq.eval(&point(&[-1.0, 0.0, 0.0], &dx, &params)).unwrap_err(),
        EvalError::SqrtNegative(_)
    ));
    let unbound = Expression::parse("m", &ctx(dims)).unwrap();
    assert!(matches!(
        unbound.eval(&point(&[0.0; 3], &dx, &params)).unwrap_err(),
        EvalError::UnboundParam(_)
    ));
}

#[test]
fn abs_derivative_zero_at_zero() {
    let dims = dims21();
    let e = Expression::parse("abs(x0)", &ParseContext::new(dims)).unwrap();
    let dx = PluckerVector::zero(dims);
    let params = BTreeMap::new();
    let g = e
        .eval_with_gradient(&point(&[0.0, 0.0, 0.0], &dx, &params))
        .unwrap();
    assert_eq!(g.grad_x[0], 0.0);
    let g = e
        .eval_with_gradient(&point(&[-2.0, 0.0, 0.0], &dx, &params))
        .unwrap();
    assert_eq!(g.grad_x[0], -1.0);
}

#[test]
fn gradient_matches_finite_differences_at_order_two() {
    // observed order >= 1.8 between steps 1e-4 and 1e-5 for a generic expression
    let dims = dims21();
    let e = Expression::parse(
        "sqrt(d[0,1]^2 + d[0,2]^2) + x1*d[1,2]^3/d[0,1] - x0^2",
        &ParseContext::new(dims),
    )
    .unwrap();
    let x = [0.3, -1.2, 0.8];
    let mut dx = PluckerVector::zero(dims);
    dx.set(&MultiIndex::new(vec![0, 1]), 1.4);
    dx.set(&MultiIndex::new(vec![0, 2]), -0.6);
    dx.set(&MultiIndex::new(vec![1, 2]), 0.9);
    let params = BTreeMap::new();
    let g = e.eval_with_gradient(&point(&x, &dx, &params)).unwrap();

    let check = |set: &dyn Fn(f64) -> (Vec<f64>, PluckerVector), exact: f64| {
        let fd = |h: f64| {
            let (xp, dxp) = set(h);
            let (xm, dxm) = set(-h);
            let fp = e.eval(&point(&xp, &dxp, &params)).unwrap();
            let fm = e.eval(&point(&xm, &dxm, &params)).unwrap();
            (fp - fm) / (2.0 * h)
        };
        let e4 = (fd(1e-4) - exact).abs();
        let e5 = (fd(1e-5) - exact).abs();
        if e4 < 1e-12 * (1.0 + exact.abs()) {
            return; // derivative is exact to round-off; no order to measure
        }
        let order = (e4 / e5).log10();
        assert!(order >= 1.8, "observed order {order} (e4={e4:.3e}, e5={e5:.3e})");
    };

    for mu in 0..3 {
        let xc = x;
        let dxc = dx.clone();
        check(
            &move |h| {
                let mut xx = xc;
                xx[mu] += h;
                (xx.to_vec(), dxc.clone())
            },
            g.grad_x[mu],
        );
    }
    for rank in 0..dims.component_count() {
        let xc = x;
        let dxc = dx.clone();
        check(
            &move |h| {
                let mut d = dxc.clone();
                d.components_mut()[rank] += h;
                (xc.to_vec(), d)
            },
            g.grad_dx.components()[rank],
        );
    }
}

#[test]
fn homogeneity_comparison_needs_no_special_casing() {
    let dims = dims21();
    let e = Expression::parse("d[0,2]^2/d[0,1]", &ParseContext::new(dims)).unwrap();
    let params = BTreeMap::new();
    let mut dx = PluckerVector::zero(dims);
    dx.set(&MultiIndex::new(vec![0, 1]), 0.7);
    dx.set(&MultiIndex::new(vec![0, 2]), -1.1);
    let v = e.eval(&point(&[0.0; 3], &dx, &params)).unwrap();
    for lambda in [0.5, 2.0, 10.0] {
        let scaled = dx.scale(lambda);
        let vs = e.eval(&point(&[0.0; 3], &scaled, &params)).unwrap();
        assert!((vs - lambda * v).abs() <= 1e-12 * vs.abs().max(1.0));
    }
}

#[test]
fn symbolic_coordinate_derivative() {
    let dims = dims21();
    let e = Expression::parse("x0^3*d[0,1] + x1/x0", &ParseContext::new(dims)).unwrap();
    let d0 = e.diff_coord(0).unwrap();
    let mut dx = PluckerVector::zero(dims);
    dx.set(&MultiIndex::new(vec![0, 1]), 2.0);
    let params = BTreeMap::new();
    let x = [1.3, 0.4, 0.0];
    let got = d0.eval(&point(&x, &dx, &params)).unwrap();
    let expect = 3.0 * 1.3f64.powi(2) * 2.0 - 0.4 / (1.3f64 * 1.3);
    assert!((got - expect).abs() < 1e-14);
}

fn arb_expression(dims: Dims) -> impl Strategy<Value = Expression> {
    let leaf = prop_oneof![
        (-4.0f64..4.0).prop_map(move |c| Expression::constant(dims, (c * 100.0).round() / 100.0)),
        (0usize..dims.coord_count).prop_map(move |mu| Expression::coord(dims, mu)),
        (0usize..dims.component_count()).prop_map(move |rank| {
            let idx = crate::multivector::unrank(dims.coord_count, dims.degree, rank);
            Expression::plucker(dims, idx.indices())
        }),
    ];
    leaf.prop_recursive(4, 48, 3, move |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a.add(&b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a.sub(&b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a.mul(&b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a.div(&b)),
            (inner.clone(), -3i32..4).prop_map(|(a, k)| a.powi(k)),
            inner.clone().prop_map(|a| a.neg()),
            inner.clone().prop_map(|a| a.sqrt()),
            inner.clone().prop_map(|a| a.abs()),
        ]
    })
}

proptest! {
    #[test]
    fn print_parse_round_trip(e in arb_expression(Dims::from_spec(2, 1))) {
        let text = e.to_string();
        let back = Expression::parse(&text, &ParseContext::new(e.dims()))
            .unwrap_or_else(|err| panic!("reparse of '{text}' failed: {err}"));
        prop_assert_eq!(back.ast(), e.ast());
    }

    #[test]
    fn eval_is_deterministic(e in arb_expression(Dims::from_spec(2, 1)), seed in 0u64..1000) {
        let dims = e.dims();
        let mut dx = PluckerVector::zero(dims);
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        let x: Vec<f64> = (0..dims.coord_count).map(|_| next()).collect();
        for c in dx.components_mut() { *c = next(); }
        let params = BTreeMap::new();
        let p = EvalPoint { x: &x, dx: &dx, params: &params };
        let a = e.eval(&p);
        let b = e.eval(&p);
        match (a, b) {
            (Ok(va), Ok(vb)) => prop_assert!(va.to_bits() == vb.to_bits()),
            (Err(_), Err(_)) => {}
            other => prop_assert!(false, "non-deterministic outcome {other:?}"),
        }
    }
}

#[test]
fn display_negative_constant_round_trips() {
    let dims = dims21();
    let e = Expression::constant(dims, -1.5).mul(&Expression::coord(dims, 0));
    let text = e.to_string();
    let back = Expression::parse(&text, &ParseContext::new(dims)).unwrap();
    assert_eq!(back.ast(), e.ast());
}

#[test]
fn substitute_params_splices_trees() {
    let dims = dims21();
    let ctx = ParseContext::new(dims).with_params(["v"]);
    let l = Expression::parse("v^2/2", &ctx).unwrap();
    let ratio = Expression::parse("d[0,2]/d[0,1]", &ParseContext::new(dims)).unwrap();
    let mut table = BTreeMap::new();
    table.insert(0usize, ratio);
    let k = l.substitute_params(&table);
    let mut dx = PluckerVector::zero(dims);
    dx.set(&MultiIndex::new(vec![0, 1]), 2.0);
    dx.set(&MultiIndex::new(vec![0, 2]), 3.0);
    let params = BTreeMap::new();
    let v = k.eval(&point(&[0.0; 3], &dx, &params)).unwrap();
    assert!((v - 1.125).abs() < 1e-15); // (3/2)^2 / 2
}

#[test]
fn tree_constructors_match_parser() {
    let dims = dims21();
    let built = Expression::plucker(dims, &[0, 2])
        .powi(2)
        .div(&Expression::plucker(dims, &[0, 1]));
    let parsed = Expression::parse("d[0,2]^2/d[0,1]", &ParseContext::new(dims)).unwrap();
    assert_eq!(built.ast(), parsed.ast());
}

#[test]
fn shared_subtrees_are_cheap() {
    // Arc-shared sub-trees keep clones O(1); sanity-check equality semantics
    let dims = dims21();
    let a = Expression::parse("x0 + x1", &ParseContext::new(dims)).unwrap();
    let b = a.clone();
    assert_eq!(a, b);
    assert!(!Arc::ptr_eq(
        &Arc::new(a.ast().clone()),
        &Arc::new(b.ast().clone())
    )); // distinct wrappers, equal structure
}
