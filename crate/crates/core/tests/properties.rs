use std::sync::Arc;

use fracop_core::autodiff::{AxisKernel, Tape};
use fracop_core::ctensor::cgelu;
use fracop_core::frft::FrftPlan;
use fracop_core::*;
use proptest::prelude::*;

fn complex_vec(len: usize) -> impl Strategy<Value = Vec<C64>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), len)
        .prop_map(|v| v.into_iter().map(|(re, im)| C64::new(re, im)).collect())
}

fn tensor(shape: Vec<usize>) -> impl Strategy<Value = CTensor> {
    let len = shape.iter().product();
    complex_vec(len).prop_map(move |d| CTensor::new(shape.clone(), d).unwrap())
}

fn sized_vector() -> impl Strategy<Value = (usize, CTensor)> {
    prop::sample::select(vec![2usize, 5, 8, 13, 16, 31, 64])
        .prop_flat_map(|n| (Just(n), tensor(vec![n, 1])))
}

fn nontrivial(x: &CTensor) -> bool {
    x.l2_norm() > 1e-6
}

fn inner(a: &CTensor, b: &CTensor) -> C64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x.conj() * y).sum()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn matmul_identity_is_exact(m in tensor(vec![4, 6])) {
        prop_assert_eq!(m.matmul(&CTensor::eye(6)).unwrap(), m.clone());
        prop_assert_eq!(CTensor::eye(4).matmul(&m).unwrap(), m);
    }

    #[test]
    fn axis_apply_composes(t in tensor(vec![3, 5, 2]), a in tensor(vec![4, 6]), b in tensor(vec![6, 5])) {
        let ab = a.matmul(&b).unwrap();
        let direct = t.axis_apply(1, &ab).unwrap();
        let staged = t.axis_apply(1, &b).unwrap().axis_apply(1, &a).unwrap();
        prop_assert!(direct.rel_diff(&staged).unwrap() < 1e-12);
    }

    #[test]
    fn cgelu_is_deterministic(z in complex_vec(16)) {
        let a: Vec<C64> = z.iter().map(|&v| cgelu(v)).collect();
        let b: Vec<C64> = z.iter().map(|&v| cgelu(v)).collect();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn frft_index_additivity((n, x) in sized_vector(), a in -2.0..2.0f64, b in -2.0..2.0f64) {
        prop_assume!(nontrivial(&x));
        let plan = FrftPlan::new(n).unwrap();
        let fb = x.axis_apply(0, &plan.fractional_matrix(FracOrder(b))).unwrap();
        let fab = fb.axis_apply(0, &plan.fractional_matrix(FracOrder(a))).unwrap();
        let direct = x.axis_apply(0, &plan.fractional_matrix(FracOrder(a + b))).unwrap();
        prop_assert!(fab.sub(&direct).unwrap().l2_norm() / x.l2_norm() < 1e-10);
    }

    #[test]
    fn frft_unitarity_and_period((n, x) in sized_vector(), a in -4.0..4.0f64) {
        let plan = FrftPlan::new(n).unwrap();
        let m = plan.fractional_matrix(FracOrder(a));
        let y = x.axis_apply(0, &m).unwrap();
        prop_assert!((y.l2_norm() - x.l2_norm()).abs() < 1e-10);
        let shifted = plan.fractional_matrix(FracOrder(a + 4.0));
        prop_assert!(shifted.max_abs_diff(&m).unwrap() < 1e-8);
    }

    #[test]
    fn frft_adjoint_is_inverse((n, x) in sized_vector(), y in complex_vec(64), a in -2.0..2.0f64) {
        let plan = FrftPlan::new(n).unwrap();
        let y = CTensor::new(vec![n, 1], y[..n].to_vec()).unwrap();
        let fx = x.axis_apply(0, &plan.fractional_matrix(FracOrder(a))).unwrap();
        let finv_y = y.axis_apply(0, &plan.fractional_matrix(FracOrder(-a))).unwrap();
        prop_assert!((inner(&fx, &y) - inner(&x, &finv_y)).norm() < 1e-10);
    }

    #[test]
    fn rel_l2_scale_awareness(t in tensor(vec![2, 9]), c in prop_oneof![-1e3..-1e-3f64, 1e-3..1e3f64]) {
        prop_assume!(t.data()[..9].iter().any(|z| z.norm() > 1e-3) && t.data()[9..].iter().any(|z| z.norm() > 1e-3));
        let got = rel_l2(&t.scale(C64::new(c, 0.0)), &t).unwrap();
        prop_assert!((got - (c - 1.0).abs()).abs() < 1e-12 * (1.0 + c.abs()));
    }

    #[test]
    fn gradient_accumulation_is_order_independent(w in tensor(vec![3, 3]), x in tensor(vec![4, 3]), c in complex_vec(1)) {
        let kernel = Arc::new(AxisKernel { matrix: x.adjoint().unwrap().matmul(&x).unwrap(), dmatrix: None });
        let run = |flip: bool| {
            let mut t = Tape::new();
            let wv = t.param(w.clone(), 0, false);
            let xv = t.constant(x.clone());
            let h = t.matmul(xv, wv).unwrap();
            let a = t.cgelu(h).unwrap();
            let b = t.scale(h, c[0]).unwrap();
            let k = t.axis_linear(wv, 0, kernel.clone(), None).unwrap();
            let k = t.matmul(xv, k).unwrap();
            let terms = if flip { [k, b, a] } else { [a, b, k] };
            let s = t.add(terms[0], terms[1]).unwrap();
            let s = t.add(s, terms[2]).unwrap();
            let loss = t.sq_norm(s).unwrap();
            t.backward(loss).unwrap().get(0).unwrap().clone()
        };
        let (g1, g2) = (run(false), run(true));
        prop_assert!(g1.rel_diff(&g2).unwrap() < 1e-12);
    }
}
