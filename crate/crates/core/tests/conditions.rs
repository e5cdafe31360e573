use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

use lagflow::conditions::{sample_rng, verify_all, ConditionsReport, ConeRegion};
use lagflow::operator::{Negated, Shifted};
use lagflow::OperatorTau;
use proptest::prelude::*;

fn region(n: usize) -> ConeRegion {
    ConeRegion::new(1.0, 2.0, n, 100.0).unwrap()
}

#[test]
fn family_passes_on_a_small_budget() {
    for tau in [0.0, 0.4, FRAC_PI_4, 1.2, FRAC_PI_2] {
        let op = OperatorTau::new(tau).unwrap();
        for n in [2, 4] {
            let r = verify_all(&op, &region(n), 500, 4, 7);
            assert!(r.passed, "tau {tau} n {n}: {r:?}");
            assert_eq!(r.samples, 500);
            assert!(r.symmetry.witnesses.is_empty());
        }
    }
}

#[test]
fn negated_operator_fails_with_witnesses() {
    let r = verify_all(&Negated(OperatorTau::new(FRAC_PI_4).unwrap()), &region(3), 500, 4, 7);
    assert!(!r.passed);
    assert!(!r.monotonicity.passed && !r.monotonicity.witnesses.is_empty());
    assert!(!r.concavity.passed && !r.concavity.witnesses.is_empty());
    assert_eq!(r.operator.modifier.as_deref(), Some("negated"));
}

#[test]
fn shifts_do_not_change_the_structure_checks() {
    let op = Shifted {
        inner: OperatorTau::new(1.0).unwrap(),
        shift: 3.0,
    };
    let r = verify_all(&op, &region(2), 500, 4, 7);
    assert!(r.symmetry.passed && r.monotonicity.passed && r.concavity.passed);
}

#[test]
fn reports_are_reproducible_and_serializable() {
    let op = OperatorTau::new(0.3).unwrap();
    let a = verify_all(&op, &region(3), 300, 3, 42);
    let b = verify_all(&op, &region(3), 300, 3, 42);
    assert_eq!(a, b);
    let json = serde_json::to_string(&a).unwrap();
    let back: ConditionsReport = serde_json::from_str(&json).unwrap();
    assert_eq!(serde_json::to_string(&back).unwrap(), json);
}

#[test]
fn region_preconditions() {
    assert!(ConeRegion::new(0.0, 2.0, 2, 100.0).is_err());
    assert!(ConeRegion::new(1.0, 2.0, 0, 100.0).is_err());
    assert!(ConeRegion::new(1.0, 2.0, 2, 1.5).is_err());
}

proptest! {
    #[test]
    fn samples_lie_in_the_region(seed in any::<u64>(), index in 0usize..1000, n in 1usize..6) {
        let r = region(n);
        let s = r.sample(&mut sample_rng(seed, index));
        prop_assert!(r.contains(&s) || n == 1, "{:?}", s);
        prop_assert!(s.iter().all(|&l| l > 0.0 && l <= 100.0));
    }
}
