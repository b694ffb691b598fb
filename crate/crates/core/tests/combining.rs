mod common;

use common::*;
use noma_mimo::code_domain::{build_z, effective_channel};
use noma_mimo::linalg::{self, CMat, CVec};
use noma_mimo::receiver_se::{
    evaluate_trial, instantaneous_sinr, max_sinr, mmse_combiner, mr_combiner, stream_rng, NomaVariantKind,
    PreparedScenario,
};
use noma_mimo::spatial_channel::{realize_channel, CorrelationMatrix};
use proptest::prelude::*;
use rand::Rng;

#[test]
fn mmse_dominates_mr_and_matches_closed_form() {
    let mut g = rng(31);
    for _ in 0..40 {
        let noise = 0.2 + g.random::<f64>();
        let s = small_scenario(&mut g, 2, 4, 4, 2, noise);
        let inst = instance(&s, &mut g, 0);
        for target in 0..4 {
            let v = mmse_combiner(&inst.g_hat, &inst.z, &s.powers, target).unwrap();
            let at_v = instantaneous_sinr(&v.v, &inst.g_hat, &inst.z, &s.powers, target).unwrap();
            let closed = max_sinr(&inst.g_hat, &inst.z, &s.powers, target).unwrap();
            assert!(rel(at_v, closed) < 1e-9);
            let mr = mr_combiner(&inst.g_hat[target]);
            let at_mr = instantaneous_sinr(&mr.v, &inst.g_hat, &inst.z, &s.powers, target).unwrap();
            assert!(at_v >= at_mr * (1.0 - 1e-12));
        }
    }
}

#[test]
fn mmse_combiner_solves_its_system() {
    let mut g = rng(32);
    let s = small_scenario(&mut g, 2, 4, 3, 2, 0.4);
    let inst = instance(&s, &mut g, 1);
    let mut b = inst.z.clone();
    for (ue, x) in inst.g_hat.iter().enumerate() {
        b += x * x.adjoint() * linalg::real(s.powers[ue]);
    }
    for target in 4..8 {
        let v = mmse_combiner(&inst.g_hat, &inst.z, &s.powers, target).unwrap().v;
        let rhs = &inst.g_hat[target] * linalg::real(s.powers[target]);
        assert!(vec_rel(&(&b * &v), &rhs) < 1e-9);
    }
}

#[test]
fn white_noise_single_user_gives_matched_filter_snr() {
    let mut g = rng(33);
    let h = random_vec(&mut g, 6);
    let z = CMat::identity(6, 6) * linalg::real(0.3);
    let powers = [2.0];
    let v = mmse_combiner(std::slice::from_ref(&h), &z, &powers, 0).unwrap().v;
    // v ∝ ĥ
    let ratio = v[0] / h[0];
    assert!(vec_rel(&v, &(&h * ratio)) < 1e-12);
    let gamma = instantaneous_sinr(&v, std::slice::from_ref(&h), &z, &powers, 0).unwrap();
    assert!(rel(gamma, 2.0 * h.norm_squared() / 0.3) < 1e-12);

    let scalar = CVec::from_element(1, linalg::C64::new(0.6, -0.8));
    let gamma = instantaneous_sinr(&scalar, std::slice::from_ref(&scalar), &CMat::identity(1, 1), &[1.0], 0).unwrap();
    assert!(rel(gamma, 1.0) < 1e-15);
}

#[test]
fn orthogonal_and_zero_combiners() {
    let mut g = rng(34);
    let s = small_scenario(&mut g, 1, 2, 2, 1, 0.5);
    let inst = instance(&s, &mut g, 0);
    let x = &inst.g_hat[0];
    let v = CVec::from_vec(vec![-x[1].conj(), x[0].conj()]);
    let gamma = instantaneous_sinr(&v, &inst.g_hat, &inst.z, &s.powers, 0).unwrap();
    assert!(gamma.abs() < 1e-15);
    assert!(instantaneous_sinr(&CVec::zeros(2), &inst.g_hat, &inst.z, &s.powers, 0).is_err());
}

#[test]
fn sinr_denominator_matches_symbol_level_simulation() {
    let mut g = rng(35);
    let s = small_scenario(&mut g, 2, 4, 4, 2, 0.5);
    let inst = instance(&s, &mut g, 0);
    let target = 1;
    let mn = 8;
    let v = mmse_combiner(&inst.g_hat, &inst.z, &s.powers, target).unwrap().v;
    let gamma = instantaneous_sinr(&v, &inst.g_hat, &inst.z, &s.powers, target).unwrap();
    let signal = s.powers[target] * v.dotc(&inst.g_hat[target]).norm_sqr();
    let denominator = signal / gamma;

    let errors: Vec<CorrelationMatrix> = inst.errors.iter().map(|c| CorrelationMatrix::from_matrix(c.clone()).unwrap()).collect();
    let noise_std = s.noise_power.sqrt();
    let draws = 100_000;
    let mut power = 0.0;
    for _ in 0..draws {
        // y = Σ √p (ĝ + g̃) x + n with g̃ = u ⊗ h̃, h̃ ~ CN(0, C)
        let mut y = linalg::complex_normal_vec(&mut g, mn) * linalg::real(noise_std);
        for ue in 0..s.total_ues() {
            let symbol = linalg::complex_normal(&mut g) * s.powers[ue].sqrt();
            let err = effective_channel(s.spreading.code_of(ue), &realize_channel(&errors[ue], &mut g).h);
            let g_ue = &inst.g_hat[ue] + err;
            if ue == target {
                // Keep only the part not explained by the known estimate.
                y += (g_ue - &inst.g_hat[target]) * symbol;
            } else {
                y += g_ue * symbol;
            }
        }
        power += v.dotc(&y).norm_sqr();
    }
    let simulated = power / draws as f64;
    assert!(rel(simulated, denominator) < 0.02, "simulated {simulated} vs {denominator}");
}

#[test]
fn removing_an_interferer_never_lowers_mmse_sinr() {
    let mut g = rng(36);
    for _ in 0..20 {
        let s = small_scenario(&mut g, 2, 4, 3, 2, 0.3);
        let inst = instance(&s, &mut g, 0);
        for target in 0..4 {
            let full = max_sinr(&inst.g_hat, &inst.z, &s.powers, target).unwrap();
            for gone in (0..8).filter(|&ue| ue != target) {
                let mut powers = s.powers.clone();
                powers[gone] = 0.0;
                let z = build_z(&s.spreading, &powers, &inst.errors, s.noise_power).unwrap();
                let fewer = max_sinr(&inst.g_hat, &z, &powers, target).unwrap();
                assert!(fewer >= full * (1.0 - 1e-12), "{fewer} < {full}");
            }
        }
    }
}

#[test]
fn orthogonal_codes_cancel_intra_cell_interference_under_perfect_csi() {
    let mut g = rng(37);
    // L = 1, K = N = 2: every UE has its own code.
    let s = small_scenario(&mut g, 1, 2, 4, 2, 0.05);
    let h: Vec<CVec> = (0..2).map(|ue| realize_channel(s.correlation(ue, 0), &mut g).h).collect();
    let g_eff: Vec<CVec> = (0..2).map(|ue| effective_channel(s.spreading.code_of(ue), &h[ue])).collect();
    let zero_errors = vec![CMat::zeros(4, 4); 2];
    let z = build_z(&s.spreading, &s.powers, &zero_errors, s.noise_power).unwrap();
    assert!((&z - CMat::identity(8, 8) * linalg::real(s.noise_power)).norm() == 0.0);
    for target in 0..2 {
        let noise_only = s.powers[target] * g_eff[target].norm_squared() / s.noise_power;
        let mr = instantaneous_sinr(&g_eff[target], &g_eff, &z, &s.powers, target).unwrap();
        let best = max_sinr(&g_eff, &z, &s.powers, target).unwrap();
        assert!(rel(mr, noise_only) < 1e-12);
        assert!(rel(best, noise_only) < 1e-12);
    }
}

fn se(gamma: f64) -> f64 {
    (1.0 + gamma).log2()
}

#[test]
fn trivial_spreading_reproduces_classical_processing() {
    let mut g = rng(38);
    let s = small_scenario(&mut g, 2, 3, 4, 1, 0.3);
    let ues = s.total_ues();
    let spreading = trivial_spreading(ues);
    let prepared = PreparedScenario::with_kinds(
        s,
        &[spreading.clone(), spreading],
        &[NomaVariantKind::CodeBlocks, NomaVariantKind::Full],
    )
    .unwrap();
    for trial in 0..100 {
        let out = evaluate_trial(&prepared, &mut stream_rng(38, trial)).unwrap();
        for (mr, mmse) in &out.noma {
            for ue in 0..ues {
                assert!(rel(se(mr[ue]), se(out.classical_mr[ue])) < 1e-9);
                assert!(rel(se(mmse[ue]), se(out.classical_mmse[ue])) < 1e-9);
            }
        }
    }
}

#[test]
fn code_block_receiver_equals_full_receiver() {
    let mut g = rng(39);
    for n in [2, 4] {
        let s = small_scenario(&mut g, 2, 4, 3, n, 0.3);
        let spreading = s.spreading.clone();
        let prepared = PreparedScenario::with_kinds(
            s,
            &[spreading.clone(), spreading],
            &[NomaVariantKind::CodeBlocks, NomaVariantKind::Full],
        )
        .unwrap();
        for trial in 0..20 {
            let out = evaluate_trial(&prepared, &mut stream_rng(39, trial)).unwrap();
            let (blocks, full) = (&out.noma[0], &out.noma[1]);
            for ue in 0..8 {
                assert!(rel(blocks.0[ue], full.0[ue]) < 1e-9);
                assert!(rel(blocks.1[ue], full.1[ue]) < 1e-9);
            }
        }
    }
}

#[test]
fn engine_matches_function_level_sinr() {
    let mut g = rng(40);
    let s = small_scenario(&mut g, 2, 4, 3, 2, 0.3);
    let prepared = PreparedScenario::new(s.clone(), &[s.spreading.clone()]).unwrap();
    let out = evaluate_trial(&prepared, &mut stream_rng(40, 0)).unwrap();
    let replay = stream_rng(40, 0);
    for bs in 0..2 {
        // The instance helper draws channels and pilots in the engine's order.
        let mut r = replay.clone();
        let inst = instance(&s, &mut r, bs);
        for ue in bs * 4..(bs + 1) * 4 {
            let mr = instantaneous_sinr(&inst.g_hat[ue], &inst.g_hat, &inst.z, &s.powers, ue).unwrap();
            let best = max_sinr(&inst.g_hat, &inst.z, &s.powers, ue).unwrap();
            assert!(rel(out.noma[0].0[ue], mr) < 1e-9);
            assert!(rel(out.noma[0].1[ue], best) < 1e-9);
            let classical = CMat::identity(3, 3) * linalg::real(s.noise_power)
                + inst.errors.iter().zip(&s.powers).fold(CMat::zeros(3, 3), |acc, (c, p)| acc + c * linalg::real(*p));
            let best = max_sinr(&inst.h_hat, &classical, &s.powers, ue).unwrap();
            assert!(rel(out.classical_mmse[ue], best) < 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn sinr_is_scale_invariant(seed: u64, re in -5.0f64..5.0, im in -5.0f64..5.0) {
        prop_assume!(re.abs() + im.abs() > 1e-3);
        let mut g = rng(seed);
        let s = small_scenario(&mut g, 1, 4, 3, 2, 0.5);
        let inst = instance(&s, &mut g, 0);
        let v = random_vec(&mut g, 6);
        let a = instantaneous_sinr(&v, &inst.g_hat, &inst.z, &s.powers, 2).unwrap();
        let b = instantaneous_sinr(&(&v * linalg::C64::new(re, im)), &inst.g_hat, &inst.z, &s.powers, 2).unwrap();
        prop_assert!(rel(b, a) < 1e-12);
    }

    #[test]
    fn mmse_beats_random_combiners(seed: u64) {
        let mut g = rng(seed);
        let s = small_scenario(&mut g, 2, 2, 3, 2, 0.5);
        let inst = instance(&s, &mut g, 1);
        let best = max_sinr(&inst.g_hat, &inst.z, &s.powers, 3).unwrap();
        for _ in 0..20 {
            let v = random_vec(&mut g, 6);
            let gamma = instantaneous_sinr(&v, &inst.g_hat, &inst.z, &s.powers, 3).unwrap();
            prop_assert!(gamma <= best * (1.0 + 1e-12));
        }
    }
}
