use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use jpais::adaptive_gpc::{cg_solve, CgAllocator, JointChannelEstimator, RlsFilter};
use jpais::adaptive_ipc::{RlsAllocator, UserChannelEstimator, UserFilters};
use jpais::channel::ChannelSet;
use jpais::feedback::{bsc_transmit, dequantize, quantize, QuantMode};
use jpais::linalg::{gemm_nh, CMatrix, CVector, HermitianFactor, C64};
use jpais::metrics::normalized_throughput;
use jpais::mmse::{solve_allocation, LambdaPolicy, Mode, PowerAllocation};
use jpais::sigmodel::{build_signatures, complex_gaussian, random_qpsk, PacketSource, SystemConfig};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gaussian_vec(r: &mut ChaCha8Rng, n: usize) -> CVector {
    (0..n).map(|_| complex_gaussian(r, 1.0)).collect()
}

fn spd(r: &mut ChaCha8Rng, n: usize) -> CMatrix {
    let g = CMatrix::from_fn(n, n + 2, |_, _| complex_gaussian(r, 1.0));
    gemm_nh(&g, &g).unwrap()
}

fn violation(a: &CVector, p: f64) -> f64 {
    (a.norm_sqr() - p).abs() / p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn allocation_solutions_meet_the_budget(seed in any::<u64>(), n in 1usize..16, p in 0.01f64..1e4, lam in 0.0f64..1.0) {
        let mut r = rng(seed);
        let ra = spd(&mut r, n);
        let pa = gaussian_vec(&mut r, n);
        for policy in [LambdaPolicy::Fixed(lam), LambdaPolicy::MatchConstraint] {
            let s = solve_allocation(&ra, &pa, policy, p).unwrap();
            prop_assert!(violation(&s.a, p) <= 1e-12);
        }
    }

    #[test]
    fn recursive_allocators_meet_the_budget_every_symbol(seed in any::<u64>(), n in 2usize..10, p in 0.1f64..100.0, real: bool) {
        let mut r = rng(seed);
        let mut cg = CgAllocator::new(gaussian_vec(&mut r, n), 0.998, 0.025, p, 1, false).unwrap().real_amplitudes(real);
        let mut rls = RlsAllocator::new(gaussian_vec(&mut r, n), 1e3, 0.998, p).unwrap().real_amplitudes(real);
        for _ in 0..40 {
            let u = CMatrix::from_fn(n, 3, |_, _| complex_gaussian(&mut r, 1.0));
            let b: CVector = (0..3).map(|_| random_qpsk(&mut r).1).collect();
            cg.update(&u, &b).unwrap();
            prop_assert!(violation(&cg.a, p) <= 1e-12);
            rls.update(&gaussian_vec(&mut r, n), b[0]).unwrap();
            prop_assert!(violation(&rls.a, p) <= 1e-12);
        }
    }

    #[test]
    fn delivered_feedback_meets_the_budget(seed in any::<u64>(), users in 1usize..5, hops in 1usize..4, pe in 0.0f64..0.5, gpc: bool, mag: bool) {
        let mut r = rng(seed);
        let powers: Vec<f64> = (0..users).map(|k| 0.5 + k as f64).collect();
        let mode = if gpc { Mode::Gpc } else { Mode::Ipc };
        let quant = if mag { QuantMode::Magnitude } else { QuantMode::RealImag };
        let alloc = PowerAllocation::random(&powers, hops, mode, &mut r).unwrap();
        let pkts = quantize(&alloc, 4, quant).unwrap();
        let noisy: Vec<_> = pkts.iter().map(|p| bsc_transmit(p, pe, &mut r).unwrap()).collect();
        if let Ok(back) = dequantize(&noisy, hops) {
            prop_assert!(back.constraint_error() <= 1e-12);
        }
    }

    #[test]
    fn rls_filters_match_normal_equations(seed in any::<u64>(), dim in 2usize..24, cols in 1usize..5) {
        let mut r = rng(seed);
        let delta = 1e-2;
        let w0 = CMatrix::from_fn(dim, cols, |_, _| complex_gaussian(&mut r, 1.0));
        let mut joint = RlsFilter::new(w0.clone(), delta, 1.0).unwrap();
        let mut users = UserFilters::new(w0.clone(), delta, 1.0, false).unwrap();
        let mut corr = CMatrix::scaled_identity(dim, delta);
        let mut cross = w0.scale(C64::new(delta, 0.0));
        for _ in 0..3 * dim {
            let x = gaussian_vec(&mut r, dim);
            let b: CVector = (0..cols).map(|_| random_qpsk(&mut r).1).collect();
            joint.update(&x, &b).unwrap();
            users.update(&x, &b).unwrap();
            corr.rank1_update(C64::new(1.0, 0.0), &x, &x);
            cross.rank1_update(C64::new(1.0, 0.0), &x, &b);
        }
        let direct = HermitianFactor::new(&corr).unwrap().solve_mat(&cross).unwrap();
        let scale = direct.norm_fro();
        prop_assert!(joint.w().sub(&direct).unwrap().norm_fro() <= 1e-6 * scale);
        let per_user = CMatrix::from_columns(&(0..cols).map(|c| users.w(c)).collect::<Vec<_>>()).unwrap();
        prop_assert!(per_user.sub(&direct).unwrap().norm_fro() <= 1e-6 * scale);
    }

    #[test]
    fn cg_reaches_the_direct_solution(seed in any::<u64>(), n in 1usize..24, lam in 0.0f64..0.1) {
        let mut r = rng(seed);
        let a = spd(&mut r, n);
        let b = gaussian_vec(&mut r, n);
        let (x, _) = cg_solve(&a, lam, &b, &CVector::zeros(n), 20 * n, false).unwrap();
        let mut shifted = a.clone();
        shifted.add_diag(lam);
        let direct = HermitianFactor::new(&shifted).unwrap().solve_vec(&b).unwrap();
        prop_assert!(x.sub(&direct).unwrap().norm2() <= 1e-8 * direct.norm2());
    }

    #[test]
    fn noiseless_channel_estimates_converge(seed in 0u64..10_000, relays in 0usize..3) {
        let cfg = SystemConfig { users: 1, relays, paths: 1, noise_var: 0.0, ..SystemConfig::default() };
        let np = cfg.phases();
        let mut r = rng(seed);
        let sigs = build_signatures(&cfg, &mut r).unwrap();
        let ch = ChannelSet::draw_static(&cfg, &mut r);
        let a = CVector::from_real(&vec![(1.0 / np as f64).sqrt(); np]);
        let mut src = PacketSource::new(&cfg, &sigs, &ch, &[1.0], 50, rng(seed ^ 0x5eed)).unwrap();
        let mut joint = JointChannelEstimator::new(1, np, cfg.window_len(), 1, 1.0, 1e-3);
        let mut user = UserChannelEstimator::new(np, cfg.window_len(), 1, 1.0, 1e-3);
        for i in 0..50 {
            let rv = src.receive(i, &a).unwrap().r;
            let u: CVector = a.iter().map(|&x| x * src.frame(i).b[0]).collect();
            joint.update(&sigs, &rv, &u).unwrap();
            user.update(&sigs, 0, &rv, &u).unwrap();
        }
        for j in 0..np {
            let h = src.taps(0).dest[0][j][0];
            prop_assert!((joint.taps[0][j][0] - h).norm() <= 1e-3);
            prop_assert!((user.taps[j][0] - h).norm() <= 1e-3);
        }
    }

    #[test]
    fn throughput_is_monotone_and_bounded(b1 in 0.0f64..0.1, b2 in 0.0f64..0.1, rate in 0.1f64..4.0, packet in 1usize..3000) {
        let (lo, hi) = if b1 <= b2 { (b1, b2) } else { (b2, b1) };
        let (t_lo, t_hi) = (normalized_throughput(lo, rate, packet, 4), normalized_throughput(hi, rate, packet, 4));
        prop_assert!(t_hi <= t_lo);
        prop_assert!((0.0..=rate).contains(&t_hi));
        prop_assert_eq!(normalized_throughput(0.0, rate, packet, 4), rate);
    }
}

#[test]
fn throughput_spot_value() {
    let nt = normalized_throughput(1e-4, 1.0, 1500, 4);
    assert!((nt - (1.0f64 - 1e-4).powi(3000)).abs() <= 1e-12);
}
