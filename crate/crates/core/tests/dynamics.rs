#[path = "common/checks.rs"]
mod checks;

use approx::assert_relative_eq;
use hds_core::autodiff::Tape;
use hds_core::data::TruthSpec;
use hds_core::dynamics::whitebox::{C, N_STATES};
use hds_core::dynamics::{binding_fractions, response, whitebox_rhs, Kinetics, WhiteBoxParams};
use hds_core::solver::{simulate, TimeGrid};
use proptest::prelude::*;

fn truth_params() -> WhiteBoxParams<f64> {
    let t = TruthSpec::default();
    WhiteBoxParams::try_from_fn(|n| {
        t.population.get(n).or_else(|| t.individual.get(n)).copied().or(match n {
            "a_R" => Some(t.a_r["R33"]),
            "a_S" => Some(t.a_s["S34"]),
            _ => None,
        })
    })
    .unwrap()
}

#[test]
fn formulas_match_oracle() {
    let err = checks::formula_oracle_error(1000, 17);
    assert!(err <= 1e-12, "{err:e}");
    assert!(checks::formula_boundaries_exact());
}

#[test]
fn documented_values() {
    let (b, _) = binding_fractions(1.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0);
    assert_eq!(b, 0.5);
    let (b, _) = binding_fractions(1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 2.0, 2.0);
    assert_relative_eq!(b, 2.0 / 9.0, max_relative = 1e-15);
    // K_GR R^2 B_R = 1 with R = 1, B_R = 1
    assert_relative_eq!(response(1.0, 0.0, 1.0, 0.0, 1.0, 5.0, 0.1), 0.55, max_relative = 1e-15);
    assert!(response(1e4, 0.0, 1.0, 0.0, 1e4, 1.0, 0.1) > 1.0 - 1e-12);
}

#[test]
fn tape_and_scalar_rhs_agree() {
    let p = truth_params();
    let x: Vec<f64> = (0..N_STATES).map(|i| 0.1 + 0.2 * i as f64).collect();
    let plain = whitebox_rhs(&x, 3.0, &p, [5.0, 50.0]);
    let tape = Tape::new();
    let xv: Vec<_> = x.iter().map(|&v| tape.scalar_var(v)).collect();
    let pv = WhiteBoxParams::try_from_fn(|n| p.get(n).map(|v| tape.scalar_var(v))).unwrap();
    let u = [tape.scalar_const(5.0), tape.scalar_const(50.0)];
    let on_tape = whitebox_rhs(&xv, 3.0, &pv, u);
    for (a, b) in plain.iter().zip(&on_tape) {
        assert_eq!(*a, b.item());
    }
}

proptest! {
    #[test]
    fn binding_in_unit_interval(
        c6 in 0.0f64..5000.0, c12 in 0.0f64..5000.0,
        k6 in 1e-4f64..1.0, k12 in 1e-4f64..1.0, n in 1.0f64..4.0,
    ) {
        let (b, _) = binding_fractions(c6, c12, k6, k12, 1.0, 1.0, n, 1.0);
        prop_assert!((0.0..=1.0).contains(&b), "{}", b);
    }

    #[test]
    fn response_bounded_and_monotone(
        r in 0.0f64..10.0, s in 0.0f64..10.0, b_r in 0.0f64..1.0, b_s in 0.0f64..1.0,
        kgr in 1e-3f64..10.0, kgs in 1e-3f64..10.0, eps in 0.001f64..0.999, db in 0.0f64..0.5,
    ) {
        let f = response(r, s, b_r, b_s, kgr, kgs, eps);
        prop_assert!(f >= eps - 1e-15 && f <= 1.0, "{}", f);
        prop_assert!(response(r, s, b_r + db, b_s, kgr, kgs, eps) >= f - 1e-15);
        prop_assert!(response(r, s, b_r, b_s + db, kgr, kgs, eps) >= f - 1e-15);
    }

    // Non-negative initial states stay non-negative and cell density stays below K.
    #[test]
    fn whitebox_states_stay_physical(c6 in 0.0f64..5000.0, c12 in 0.0f64..5000.0, c0 in 0.001f64..0.05) {
        let p = truth_params();
        let kin = Kinetics::new(p, c6, c12);
        let grid = TimeGrid::equispaced(0.0, 24.0, 25, 4).unwrap();
        let mut x0 = vec![0.0; N_STATES];
        x0[C] = c0;
        let tr = simulate(|t, x: &[f64]| kin.rhs(t, x), x0, &grid).unwrap();
        for x in &tr.states {
            prop_assert!(x.iter().all(|&v| v >= 0.0), "{:?}", x);
            prop_assert!(x[C] <= p.k * (1.0 + 1e-9));
        }
    }
}
