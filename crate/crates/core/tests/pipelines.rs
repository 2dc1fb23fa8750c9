use std::f64::consts::FRAC_1_SQRT_2;

use instrasim::analytic::{dual_feasible_point, v_deph_highd_bound, v_worst_qubit};
use instrasim::conic::SolverSettings;
use instrasim::instruments::*;
use instrasim::matcore::{CMat, HermOp};
use instrasim::random::{prng, random_pi_description};
use instrasim::simulability::*;

fn luders(d: usize, g: f64) -> ChoiInstrument {
    kraus_to_choi(&luders_unsharp(d, g).unwrap()).unwrap()
}

fn dephasing(d: usize) -> ChoiInstrument {
    noise_instrument(&NoiseModel::Dephasing, d, d, d).unwrap()
}

#[test]
fn qubit_membership_examples() {
    assert!(qubit_pi_feasible(&luders(2, 1.0)).unwrap().is_feasible());
    assert_eq!(
        qubit_pi_feasible(&luders(2, FRAC_1_SQRT_2)).unwrap().status,
        SimStatus::Infeasible
    );
    let identity = KrausInstrument::new(2, 2, vec![vec![CMat::identity(2, 2)]]).unwrap();
    assert!(qubit_pi_feasible(&kraus_to_choi(&identity).unwrap())
        .unwrap()
        .is_feasible());
}

#[test]
fn qubit_visibility_result_satisfies_its_constraints() {
    let (c, n) = (luders(2, FRAC_1_SQRT_2), dephasing(2));
    let r = qubit_critical_visibility(&c, &n).unwrap();
    let v = r.visibility.unwrap();
    assert!((v - FRAC_1_SQRT_2).abs() < 1e-6);
    let target = target_instrument(&c, &n, v).unwrap();
    assert!(r.reconstruction_error(&target) < 1e-7);
    assert!(r.constraint_error() < 1e-7);
    assert!(r.prior_error() < 1e-7);
    assert!(r.priors.values().all(|&q| q >= -1e-9));
    assert!(
        (qubit_critical_visibility(&luders(2, 1.0), &n)
            .unwrap()
            .visibility
            .unwrap()
            - 1.0)
            .abs()
            < 1e-7
    );
}

#[test]
fn bisection_agrees_with_direct_maximization() {
    let (c, n) = (luders(2, 0.4), dephasing(2));
    let direct = qubit_critical_visibility(&c, &n)
        .unwrap()
        .visibility
        .unwrap();
    let bisected = bisect_visibility(
        &c,
        &Noise::Fixed(&n),
        SchmidtTest::Ppt,
        1e-7,
        &SolverSettings::default(),
    )
    .unwrap();
    assert!((direct - bisected).abs() < 1e-6, "{direct} vs {bisected}");
}

#[test]
fn extracted_model_reproduces_the_instrument() {
    let mut rng = prng(3);
    for _ in 0..5 {
        let p = random_pi_description(2, 2, 2, 2, 1, &mut rng);
        let c = p.to_choi();
        let r = qubit_pi_feasible(&c).unwrap();
        assert!(r.is_feasible());
        let extracted = extract_qubit_pi(&r).unwrap();
        let target = target_instrument(
            &c,
            &noise_instrument(&NoiseModel::White, 2, 2, 2).unwrap(),
            r.visibility.unwrap(),
        )
        .unwrap();
        assert!(extracted.to_choi().max_abs_diff(&target) < 1e-6);
    }
}

#[test]
fn relaxation_certifies_non_projective_instruments() {
    assert_eq!(
        relaxed_pi_feasible(&luders(3, 0.9)).unwrap().status,
        SimStatus::Infeasible
    );
    assert_eq!(
        relaxed_pi_feasible(&luders(2, FRAC_1_SQRT_2))
            .unwrap()
            .status,
        SimStatus::Infeasible
    );
    let mut rng = prng(5);
    for _ in 0..3 {
        let p = random_pi_description(3, 3, 3, 2, 1, &mut rng);
        assert!(relaxed_pi_feasible(&p.to_choi()).unwrap().is_feasible());
    }
}

#[test]
fn relaxed_and_exact_agree_for_qubits() {
    let n = dephasing(2);
    for g in [0.2, 0.5, 0.8] {
        let c = luders(2, g);
        let exact = qubit_critical_visibility(&c, &n)
            .unwrap()
            .visibility
            .unwrap();
        let relaxed = relaxed_critical_visibility(&c, &n)
            .unwrap()
            .visibility
            .unwrap();
        assert!(
            (exact - relaxed).abs() < 1e-5,
            "gamma {g}: {exact} vs {relaxed}"
        );
    }
}

#[test]
fn qutrit_relaxation_meets_the_bound() {
    let v = relaxed_critical_visibility(&luders(3, 0.8), &dephasing(3))
        .unwrap()
        .visibility
        .unwrap();
    let bound = v_deph_highd_bound(3, 0.8).unwrap();
    assert!((bound - 0.6727682).abs() < 1e-5);
    assert!((v - bound).abs() < 1e-5, "{v} vs {bound}");
}

#[test]
fn worst_case_examples() {
    let r = worst_case_visibility(&luders(2, 0.3)).unwrap();
    assert!((r.visibility.unwrap() - v_worst_qubit(0.3).unwrap()).abs() < 1e-5);
    assert!(r.noise.is_some());
    assert!(
        (worst_case_visibility(&luders(2, 1.0))
            .unwrap()
            .visibility
            .unwrap()
            - 1.0)
            .abs()
            < 1e-6
    );
}

#[test]
fn povm_examples() {
    let z: Vec<HermOp> = induced_povm(&luders(2, 1.0));
    assert!(
        (povm_critical_visibility(&z, &z)
            .unwrap()
            .visibility
            .unwrap()
            - 1.0)
            .abs()
            < 1e-6
    );
    let unsharp = induced_povm(&luders(2, 0.37));
    let flat = vec![HermOp::identity(2).scale(0.5); 2];
    assert!(
        (povm_critical_visibility(&unsharp, &flat)
            .unwrap()
            .visibility
            .unwrap()
            - 1.0)
            .abs()
            < 1e-6
    );
    let sic: Vec<HermOp> = sic_states().iter().map(|s| s.scale(0.5)).collect();
    let quarter = vec![HermOp::identity(2).scale(0.25); 4];
    let v = povm_critical_visibility(&sic, &quarter)
        .unwrap()
        .visibility
        .unwrap();
    assert!((v - (2.0f64 / 3.0).sqrt()).abs() < 1e-5);
}

#[test]
fn dual_certificates_accept_and_reject() {
    let (c, n) = (luders(3, 0.8), dephasing(3));
    let cert = dual_feasible_point(3, 0.8).unwrap();
    let (ok, bound) = verify_dual_certificate(&cert, &c, &n).unwrap();
    assert!(ok && (bound - 0.6727682).abs() < 1e-5);
    let mut bad = cert.clone();
    bad.w.iter_mut().for_each(|w| *w = w.scale(1.5));
    assert!(!verify_dual_certificate(&bad, &c, &n).unwrap().0);
    let primal = relaxed_critical_visibility(&c, &n)
        .unwrap()
        .visibility
        .unwrap();
    assert!((primal - bound).abs() < 1e-5);
}

#[test]
fn result_serializes_to_json() {
    let r = qubit_critical_visibility(&luders(2, 0.6), &dephasing(2)).unwrap();
    let j = r.to_json_value(false);
    for key in ["status", "visibility", "q_r", "residuals"] {
        assert!(!j[key].is_null(), "{key}");
    }
}
