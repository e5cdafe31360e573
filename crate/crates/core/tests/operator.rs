use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

use lagflow::linalg::{rotation_2d, SymMatrix};
use lagflow::operator::{Negated, Shifted};
use lagflow::{Branch, Error, OperatorTau, SpectralOperator, Spectrum};
use proptest::prelude::*;

fn tau() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.0), Just(FRAC_PI_4), Just(FRAC_PI_2), 0.0..FRAC_PI_2,]
}

fn spectrum(n: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..50.0, n)
}

proptest! {
    #[test]
    fn value_is_symmetric(tau in tau(), mut l in spectrum(2..=6)) {
        let op = OperatorTau::new(tau).unwrap();
        let v = op.value(&l);
        l.reverse();
        prop_assert!((op.value(&l) - v).abs() <= 1e-12 * (1.0 + v.abs()));
        l.rotate_left(1);
        prop_assert!((op.value(&l) - v).abs() <= 1e-12 * (1.0 + v.abs()));
    }

    #[test]
    fn increasing_and_concave_on_the_cone(tau in tau(), l in spectrum(1..=6)) {
        let op = OperatorTau::new(tau).unwrap();
        let s = Spectrum::new(l).unwrap();
        prop_assert!(op.grad_spectrum(&s).iter().all(|&g| g > 0.0));
        prop_assert!(op.hess_spectrum_diag(&s).iter().all(|&h| h < 0.0));
        let sum: f64 = op.grad_spectrum(&s).iter().sum();
        prop_assert!((op.derivative_sum(s.values()) - sum).abs() <= 1e-12 * sum);
    }

    #[test]
    fn matrix_evaluation_is_rotation_invariant(
        tau in tau(),
        l1 in 0.05f64..20.0,
        l2 in 0.05f64..20.0,
        angle in -3.2f64..3.2,
    ) {
        let op = OperatorTau::new(tau).unwrap();
        let a = SymMatrix::diagonal(&[l1, l2]).congruent(&rotation_2d(angle));
        let v = op.eval_matrix(&a).unwrap();
        let expected = op.value(&[l1, l2]);
        prop_assert!((v - expected).abs() <= 1e-9 * (1.0 + expected.abs()));
        let d = op.df_da(&a).unwrap();
        prop_assert!((d.trace() - op.derivative_sum(&[l1, l2])).abs() <= 1e-9);
    }

    #[test]
    fn envelope_matches_constant_spectra(tau in tau(), t in 0.01f64..50.0, n in 1usize..6) {
        let op = OperatorTau::new(tau).unwrap();
        let v = op.value(&vec![t; n]);
        prop_assert!((op.envelope(t, n) - v).abs() <= 1e-12 * (1.0 + v.abs()));
    }

    #[test]
    fn dual_reverses_reciprocals(tau in tau(), l in spectrum(2..=5)) {
        let op = OperatorTau::new(tau).unwrap();
        let s = Spectrum::new(l).unwrap();
        let expected = -op.value(s.reciprocal().values());
        prop_assert!((op.dual_eval(&s) - expected).abs() <= 1e-10 * (1.0 + expected.abs()));
    }

    #[test]
    fn wrappers(tau in tau(), l in spectrum(2..=4), c in -5.0f64..5.0) {
        let op = OperatorTau::new(tau).unwrap();
        let shifted = Shifted { inner: op, shift: c };
        prop_assert_eq!(shifted.gradient(&l), op.gradient(&l));
        prop_assert!((shifted.value(&l) - op.value(&l) - c).abs() <= 1e-12 * (1.0 + op.value(&l).abs()));
        let negated = Negated(op);
        prop_assert_eq!(negated.value(&l), -op.value(&l));
        prop_assert!(negated.gradient(&l).iter().all(|&g| g < 0.0));
    }
}

#[test]
fn branches_cover_the_range() {
    let cases = [
        (0.0, Branch::Log),
        (0.2, Branch::TauLog),
        (FRAC_PI_4, Branch::Harmonic),
        (1.0, Branch::TauArctan),
        (FRAC_PI_2, Branch::Arctan),
    ];
    for (tau, branch) in cases {
        assert_eq!(OperatorTau::new(tau).unwrap().branch(), branch, "tau {tau}");
    }
}

#[test]
fn angles_outside_the_range_are_rejected() {
    for tau in [-1e-12, FRAC_PI_2 + 1e-12, 2.0, f64::NAN] {
        assert!(
            matches!(OperatorTau::new(tau), Err(Error::AngleOutOfRange { .. })),
            "tau {tau}"
        );
    }
}

#[test]
fn spectra_must_lie_in_the_cone() {
    assert!(Spectrum::new(vec![1.0, 0.0]).is_err());
    assert!(Spectrum::new(vec![-1.0, 2.0]).is_err());
    assert!(Spectrum::new(vec![]).is_err());
    assert_eq!(Spectrum::new(vec![3.0, 1.0]).unwrap().values(), &[1.0, 3.0]);
}

#[test]
fn continuity_across_branch_boundaries() {
    let l = [0.7, 2.5];
    let near = |a: f64, b: f64| {
        let (x, y) = (OperatorTau::new(a).unwrap(), OperatorTau::new(b).unwrap());
        (
            x.gradient(&l)[0] / x.gradient(&l)[1],
            y.gradient(&l)[0] / y.gradient(&l)[1],
        )
    };
    // Normalized gradients vary continuously even though the branch formulas
    // switch.
    for (a, b) in [
        (FRAC_PI_4 - 1e-7, FRAC_PI_4),
        (FRAC_PI_4, FRAC_PI_4 + 1e-7),
        (1e-9, 0.0),
    ] {
        let (x, y) = near(a, b);
        assert!((x - y).abs() < 1e-4, "{a} vs {b}: {x} {y}");
    }
}
