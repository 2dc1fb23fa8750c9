use proptest::prelude::*;
use rand::Rng;

use instrasim::analytic::*;
use instrasim::applications::hemisphere::{hemisphere_tradeoff, pi_tradeoff_curves};
use instrasim::applications::seesaw::{
    chsh_ab, chsh_ac, seesaw_single, SeesawSettings, SeesawStatus,
};
use instrasim::instruments::*;
use instrasim::matcore::*;
use instrasim::random::*;
use instrasim::simulability::*;

fn cheap() -> ProptestConfig {
    ProptestConfig {
        cases: 64,
        ..ProptestConfig::default()
    }
}

fn costly(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(cheap())]

    #[test]
    fn partial_trace_of_product(seed: u64, da in 1usize..4, db in 1usize..4) {
        let mut rng = prng(seed);
        let a = random_hermitian(da, &mut rng);
        let b = random_hermitian(db, &mut rng);
        let m = BipartiteOp::new(tensor(&a, &b), da, db).unwrap();
        prop_assert!(m.partial_trace(Side::A).max_abs_diff(&a.scale(b.trace())) < 1e-10);
        prop_assert!(m.partial_trace(Side::APrime).max_abs_diff(&b.scale(a.trace())) < 1e-10);
    }

    #[test]
    fn partial_transpose_is_trace_preserving_involution(seed: u64, da in 1usize..4, db in 1usize..4) {
        let mut rng = prng(seed);
        let m = BipartiteOp::new(random_hermitian(da * db, &mut rng), da, db).unwrap();
        for side in [Side::A, Side::APrime] {
            let t = m.partial_transpose(side);
            prop_assert!((t.trace() - m.trace()).abs() < 1e-12);
            prop_assert!(t.partial_transpose(side).op().max_abs_diff(m.op()) < 1e-14);
        }
    }

    #[test]
    fn separable_operators_pass_ppt_and_reduction(seed: u64, da in 2usize..4, db in 2usize..4, k in 1usize..6) {
        let mut rng = prng(seed);
        let mut acc = HermOp::zeros(da * db);
        for _ in 0..k {
            let w: f64 = rng.random();
            acc = &acc + &tensor(&haar_pure_state(da, &mut rng), &haar_pure_state(db, &mut rng)).scale(w);
        }
        let m = BipartiteOp::new(acc, da, db).unwrap();
        prop_assert!(m.partial_transpose(Side::A).op().min_eigenvalue() > -1e-9);
        prop_assert!(reduction_map(1, &m).unwrap().op().min_eigenvalue() > -1e-9);
    }

    #[test]
    fn real_embedding_keeps_spectrum(seed: u64, d in 1usize..6) {
        let m = random_hermitian(d, &mut prng(seed));
        let e = nalgebra::SymmetricEigen::new(real_embedding(&m)).eigenvalues.min();
        prop_assert!((e - m.min_eigenvalue()).abs() < 1e-10);
    }

    #[test]
    fn choi_action_matches_kraus_action(seed: u64, d_in in 1usize..4, d_out in 1usize..4, n in 1usize..4, nk in 1usize..3) {
        prop_assume!(d_out * n * nk >= d_in);
        let mut rng = prng(seed);
        let k = random_instrument(d_in, d_out, n, nk, &mut rng);
        let rho = random_density(d_in, &mut rng);
        let direct = k.apply(&rho);
        let via = choi_apply(&kraus_to_choi(&k).unwrap(), &rho).unwrap();
        for (o, out) in via.iter().zip(&direct) {
            let recon = o.state.as_ref().map_or(HermOp::zeros(d_out), |s| s.scale(o.prob));
            prop_assert!(recon.max_abs_diff(out) < 1e-9);
        }
    }

    #[test]
    fn induced_povm_is_complete(seed: u64, d_in in 1usize..4, d_out in 1usize..4, n in 1usize..5) {
        prop_assume!(d_out * n * 2 >= d_in);
        let c = kraus_to_choi(&random_instrument(d_in, d_out, n, 2, &mut prng(seed))).unwrap();
        let total = induced_povm(&c).iter().fold(HermOp::zeros(d_in), |acc, m| &acc + m);
        prop_assert!(total.max_abs_diff(&HermOp::identity(d_in)) < 1e-9);
    }

    #[test]
    fn canonicalization_preserves_choi(seed: u64, d in 2usize..4, n in 1usize..4, np in 1usize..4, nb in 1usize..4) {
        let p = random_pi_description(d, d, n, np, nb, &mut prng(seed));
        let c = canonicalize_pi(&p).unwrap();
        prop_assert!(c.is_canonical());
        prop_assert!(c.to_choi().max_abs_diff(&p.to_choi()) < 1e-9);
    }

    #[test]
    fn qubit_visibilities_bounded(g in 0.0f64..=1.0) {
        let a = v_deph_qubit(g).unwrap();
        let b = v_worst_qubit(g).unwrap();
        prop_assert!((0.5..=1.0 + 1e-15).contains(&a) && (0.5..=1.0 + 1e-15).contains(&b));
        prop_assert!(a >= v_deph_qubit(std::f64::consts::FRAC_1_SQRT_2).unwrap() - 1e-15);
    }

    #[test]
    fn dephasing_model_identity(d in 2usize..7, g in 0.0f64..=1.0) {
        let (p, mu) = dephasing_pi_model(d, g).unwrap();
        let boundary = (d as f64 - 2.0) / d as f64;
        if (g - boundary).abs() > 1e-12 {
            prop_assert_eq!(p.valid, g >= boundary);
        }
        if p.valid {
            let luders = kraus_to_choi(&luders_unsharp(d, g).unwrap()).unwrap();
            let noise = noise_instrument(&NoiseModel::Dephasing, d, d, d).unwrap();
            prop_assert!(mu.max_abs_diff(&mix(&luders, &noise, p.v).unwrap()) < 1e-9);
        }
    }

    #[test]
    fn worst_case_model_identity(d in 2usize..9, g in 0.0f64..=1.0) {
        let (p, mu, noise) = worst_case_pi_model(d, g).unwrap();
        let luders = kraus_to_choi(&luders_unsharp(d, g).unwrap()).unwrap();
        prop_assert!(mu.max_abs_diff(&mix(&luders, &noise, p.v).unwrap()) < 1e-9);
    }

    #[test]
    fn char_poly_sign_pattern(seed: u64, d in 2usize..9) {
        let ranks = rank_vectors(d, d);
        let mut rng = prng(seed);
        let r = &ranks[rng.random_range(0..ranks.len())];
        let a = (0..d).find(|&a| r.ranks()[a] > 0).unwrap();
        let coeffs = char_poly_coeffs_exact(d, a, r).unwrap();
        prop_assert_eq!(coeffs[0], 0);
        prop_assert!(descartes_signs_ok(d, &coeffs));
    }

    #[test]
    fn quantum_tradeoff_is_outer_bound(seed: u64, nk in 1usize..4) {
        let c = kraus_to_choi(&random_instrument(2, 2, 2, nk, &mut prng(seed))).unwrap();
        let t = hemisphere_tradeoff(&c).unwrap();
        prop_assert!(t.p_win > 0.25 - 1e-9 && t.p_win < 0.75 + 1e-9);
        // The curve is stated on [1/2, 3/4]; outcome relabeling maps p_win < 1/2 there.
        let p = t.p_win.max(1.0 - t.p_win).clamp(0.5, 0.75);
        let (_, f_q) = pi_tradeoff_curves(p).unwrap();
        prop_assert!(t.fidelity <= f_q + 1e-7, "p={} F={} F_Q={}", t.p_win, t.fidelity, f_q);
    }
}

proptest! {
    #![proptest_config(costly(10))]

    #[test]
    fn random_pi_models_are_feasible(seed: u64, d in 2usize..4, np in 1usize..4, nb in 1usize..3) {
        let c = random_pi_description(d, d, 2, np, nb, &mut prng(seed)).to_choi();
        prop_assert!(relaxed_pi_feasible(&c).unwrap().is_feasible());
        if d == 2 {
            prop_assert!(qubit_pi_feasible(&c).unwrap().is_feasible());
            let t = hemisphere_tradeoff(&c).unwrap();
            let p = t.p_win.max(1.0 - t.p_win).clamp(0.5, 0.75);
            prop_assert!(t.fidelity <= pi_tradeoff_curves(p).unwrap().0 + 1e-6);
        }
    }

    #[test]
    fn visibility_invariant_under_local_unitaries(seed: u64, g in 0.05f64..0.95) {
        let mut rng = prng(seed);
        let (v, u) = (haar_unitary(2, &mut rng), haar_unitary(2, &mut rng));
        let c = kraus_to_choi(&luders_unsharp(2, g).unwrap()).unwrap();
        let n = noise_instrument(&NoiseModel::Dephasing, 2, 2, 2).unwrap();
        let a = qubit_critical_visibility(&c, &n).unwrap().visibility.unwrap();
        let b = qubit_critical_visibility(&c.conjugate(&v, &u), &n.conjugate(&v, &u)).unwrap().visibility.unwrap();
        prop_assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }

    #[test]
    fn feasibility_is_monotone_in_visibility(g in 0.1f64..0.9, frac in 0.0f64..0.999) {
        let c = kraus_to_choi(&luders_unsharp(2, g).unwrap()).unwrap();
        let n = noise_instrument(&NoiseModel::Dephasing, 2, 2, 2).unwrap();
        let v = qubit_critical_visibility(&c, &n).unwrap().visibility.unwrap();
        let below = feasible_at(&c, &Noise::Fixed(&n), SchmidtTest::Ppt, frac * v, &Default::default()).unwrap();
        prop_assert!(below.is_feasible());
    }
}

proptest! {
    #![proptest_config(costly(3))]

    #[test]
    fn seesaw_monotone_and_self_consistent(seed: u64, floor in 2.0f64..2.2) {
        let s = SeesawSettings { restarts: 1, max_rounds: 20, tol: 1e-6 };
        let st = seesaw_single(floor, &s, seed, 0);
        prop_assert_ne!(st.status, SeesawStatus::FloorNotReached);
        prop_assert!(st.s_ab >= floor);
        for w in st.trace.windows(2) {
            prop_assert!(w[1].s_ac >= w[0].s_ac - 1e-7);
        }
        prop_assert!((chsh_ab(&st.assemblage, &st.bob) - st.s_ab).abs() < 1e-7);
        prop_assert!((chsh_ac(&st.assemblage, &st.bob, &st.charlie) - st.s_ac).abs() < 1e-7);
        for c in &st.charlie {
            prop_assert!(max_abs_diff(&(c.matrix() * c.matrix()), &CMat::identity(2, 2)) < 1e-8);
        }
        prop_assert!(st.assemblage.violation() < 1e-6);
    }
}
