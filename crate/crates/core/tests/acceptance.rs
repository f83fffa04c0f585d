//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! `cargo test --release --test acceptance` runs all twelve; numeric
//! arguments after `--` select a subset.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use jpais::adaptive_gpc::{cg_solve, AdaptiveOptions, GpcState, JointChannelEstimator, RlsFilter};
use jpais::adaptive_ipc::{IpcState, UserChannelEstimator, UserFilters};
use jpais::channel::ChannelSet;
use jpais::diagnostics::{convexity_bound, init_invariance_test, scale_powers, Scenario as DiagScenario};
use jpais::feedback::{bsc_transmit, dequantize, quantize, QuantMode};
use jpais::harness::{
    paired_difference, run_experiment, run_feedback_experiment, ExperimentResult, ExperimentSpec, RunMode, Scenario,
    Scheme,
};
use jpais::linalg::{CMatrix, CVector, C64};
use jpais::metrics::{
    complexity_count, mult_overhead, normalized_throughput, ops_alloc_global, ops_alloc_user, ops_channel_global,
    ops_channel_user, ops_filter_matrix, ops_filter_user, Algorithm, Dims, OpCount,
};
use jpais::mmse::{alternate, Constraint, LambdaPolicy, LinkModel, Mode, PowerAllocation};
use jpais::sigmodel::{
    build_signatures, complex_gaussian, draw_user_powers, qpsk_decide, random_qpsk, PacketSource, SystemConfig,
};

type Check = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn reference(src: &PacketSource<'_>, i: usize, training: usize, y: &CVector) -> CVector {
    if i < training {
        src.frame(i).b.clone()
    } else {
        y.iter().map(|&v| qpsk_decide(v)).collect()
    }
}

fn small_config() -> SystemConfig {
    SystemConfig {
        users: 4,
        processing_gain: 8,
        paths: 2,
        relays: 2,
        packet_len: 400,
        training_len: 100,
        ..SystemConfig::default()
    }
    .with_snr_db(10.0)
}

fn constraint_exactness() -> Outcome {
    const TOL: f64 = 1e-12;
    let mut worst: f64 = 0.0;
    let mut updates = 0usize;
    let mut track = |e: f64| {
        worst = worst.max(e);
        updates += 1;
    };
    for seed in 0..4u64 {
        let cfg = small_config();
        let mut r = rng(100 + seed);
        let sigs = build_signatures(&cfg, &mut r).unwrap();
        let ch = ChannelSet::draw_static(&cfg, &mut r);
        let powers = draw_user_powers(&cfg, &mut r);
        let np = cfg.phases();
        let p_t: f64 = powers.iter().sum();
        let src = PacketSource::new(&cfg, &sigs, &ch, &powers, cfg.packet_len, rng(200 + seed)).unwrap();

        let opts = AdaptiveOptions::default();
        let mut s = src.clone();
        let mut st = GpcState::new(&cfg, &sigs, &powers, &opts).unwrap();
        for i in 0..s.len() {
            let a = st.allocation().clone();
            let rv = s.receive(i, &a).unwrap().r;
            let y = st.filter.output(&rv).unwrap();
            let b = reference(&s, i, cfg.training_len, &y);
            st.filter_update(&rv, &b).unwrap();
            st.alloc_update(&b).unwrap();
            track((st.allocation().norm_sqr() - p_t).abs() / p_t);
            st.channel_update(&sigs, &rv, &b, &a).unwrap();
        }

        let users: Vec<usize> = (0..cfg.users).collect();
        for real in [false, true] {
            let opts = AdaptiveOptions {
                real_amplitudes: real,
                ..AdaptiveOptions::default()
            };
            let mut s = src.clone();
            let mut st = IpcState::new(&cfg, &sigs, &powers, &users, true, &opts).unwrap();
            for i in 0..s.len() {
                let a = st.allocation().clone();
                let rv = s.receive(i, &a).unwrap().r;
                let y = st.filters.output(&rv).unwrap();
                let b = reference(&s, i, cfg.training_len, &y);
                st.filters.update(&rv, &b).unwrap();
                st.alloc_update(&b).unwrap();
                let alloc =
                    PowerAllocation::from_vec(st.allocation().clone(), Constraint::Individual(powers.clone()), np)
                        .unwrap();
                track(alloc.constraint_error());
                st.channel_update(&sigs, &rv, &b, &a).unwrap();
            }
        }

        let model = LinkModel::new(&cfg, &sigs, &ch.taps, &powers).unwrap();
        for mode in [Mode::Gpc, Mode::Ipc] {
            for policy in [LambdaPolicy::Fixed(cfg.lambda), LambdaPolicy::MatchConstraint] {
                let init = PowerAllocation::random(&powers, np, mode, &mut r).unwrap();
                let alt = alternate(&model, mode, 5, &init, policy).unwrap();
                for a in &alt.allocations {
                    track(a.constraint_error());
                }
            }
        }

        for mode in [Mode::Gpc, Mode::Ipc] {
            for quant in [QuantMode::Magnitude, QuantMode::RealImag] {
                let alloc = PowerAllocation::random(&powers, np, mode, &mut r).unwrap();
                let pkts = quantize(&alloc, 4, quant).unwrap();
                let noisy: Vec<_> = pkts.iter().map(|p| bsc_transmit(p, 0.3, &mut r).unwrap()).collect();
                if let Ok(back) = dequantize(&noisy, np) {
                    track(back.constraint_error());
                }
            }
        }
    }
    outcome(
        worst <= TOL,
        format!("max relative violation {worst:.2e} over {updates} updates (tol {TOL:.0e})"),
    )
}

fn rls_matches_normal_equations() -> Outcome {
    const TOL: f64 = 1e-6;
    let delta = 1e-3;
    let mut worst: f64 = 0.0;
    for (seed, dim, cols) in [(1u64, 16usize, 4usize), (2, 36, 8), (3, 54, 8)] {
        let n = 3 * dim;
        let mut r = rng(seed);
        let w0 = CMatrix::from_fn(dim, cols, |_, _| complex_gaussian(&mut r, 1.0));
        let mut gpc = RlsFilter::new(w0.clone(), delta, 1.0).unwrap();
        let mut ipc = [
            UserFilters::new(w0.clone(), delta, 1.0, true).unwrap(),
            UserFilters::new(w0.clone(), delta, 1.0, false).unwrap(),
        ];
        let mut corr = CMatrix::scaled_identity(dim, delta);
        let mut cross = w0.scale(C64::new(delta, 0.0));
        for _ in 0..n {
            let x: CVector = (0..dim).map(|_| complex_gaussian(&mut r, 1.0)).collect();
            let b: CVector = (0..cols).map(|_| random_qpsk(&mut r).1).collect();
            gpc.update(&x, &b).unwrap();
            for f in &mut ipc {
                f.update(&x, &b).unwrap();
            }
            corr.rank1_update(C64::new(1.0, 0.0), &x, &x);
            cross.rank1_update(C64::new(1.0, 0.0), &x, &b);
        }
        let direct =
            CMatrix::from_columns(&(0..cols).map(|c| gauss_solve(&corr, &cross.col(c))).collect::<Vec<_>>()).unwrap();
        let rel = |w: &CMatrix| w.sub(&direct).unwrap().norm_fro() / direct.norm_fro();
        worst = worst.max(rel(gpc.w()));
        for f in &ipc {
            let w = CMatrix::from_columns(&(0..cols).map(|c| f.w(c)).collect::<Vec<_>>()).unwrap();
            worst = worst.max(rel(&w));
        }
    }
    outcome(
        worst <= TOL,
        format!("max relative Frobenius error {worst:.2e} (tol {TOL:.0e})"),
    )
}

/// Gaussian elimination with partial pivoting.
fn gauss_solve(a: &CMatrix, b: &CVector) -> CVector {
    let n = a.rows();
    let mut m: Vec<Vec<C64>> = (0..n)
        .map(|i| {
            let mut row = a.row(i).to_vec();
            row.push(b[i]);
            row
        })
        .collect();
    for c in 0..n {
        let p = (c..n)
            .max_by(|&x, &y| m[x][c].norm().total_cmp(&m[y][c].norm()))
            .unwrap();
        m.swap(c, p);
        for i in c + 1..n {
            let f = m[i][c] / m[c][c];
            let pivot = m[c].clone();
            for (x, v) in m[i].iter_mut().zip(&pivot).skip(c) {
                *x -= f * v;
            }
        }
    }
    let mut x = vec![C64::new(0.0, 0.0); n];
    for i in (0..n).rev() {
        let mut s = m[i][n];
        for j in i + 1..n {
            s -= m[i][j] * x[j];
        }
        x[i] = s / m[i][i];
    }
    CVector::from_vec(x)
}

fn cg_matches_elimination() -> Outcome {
    const TOL: f64 = 1e-8;
    let mut worst: f64 = 0.0;
    for seed in 0..3u64 {
        let cfg = SystemConfig::default().with_snr_db(12.0);
        let mut r = rng(300 + seed);
        let sigs = build_signatures(&cfg, &mut r).unwrap();
        let ch = ChannelSet::draw_static(&cfg, &mut r);
        let powers = draw_user_powers(&cfg, &mut r);
        let model = LinkModel::new(&cfg, &sigs, &ch.taps, &powers).unwrap();
        let init = PowerAllocation::equal(&powers, cfg.phases(), Mode::Gpc);
        let (r_a, p_a) = model.gpc_stats(&model.filter(&init.a).unwrap().w).unwrap();

        let mut src = PacketSource::new(&cfg, &sigs, &ch, &powers, 300, rng(400 + seed)).unwrap();
        let mut st = GpcState::new(&cfg, &sigs, &powers, &AdaptiveOptions::default()).unwrap();
        for i in 0..src.len() {
            let a = st.allocation().clone();
            let rv = src.receive(i, &a).unwrap().r;
            let b = src.frame(i).b.clone();
            st.filter_update(&rv, &b).unwrap();
            st.alloc_update(&b).unwrap();
            st.channel_update(&sigs, &rv, &b, &a).unwrap();
        }

        for (ra, pa) in [(&r_a, &p_a), (&st.alloc.r_a, &st.alloc.p_a)] {
            let n = pa.len();
            let (x, _) = cg_solve(ra, cfg.lambda, pa, &CVector::zeros(n), 20 * n, false).unwrap();
            let mut shifted = ra.clone();
            shifted.add_diag(cfg.lambda);
            let direct = gauss_solve(&shifted, pa);
            worst = worst.max(x.sub(&direct).unwrap().norm2() / direct.norm2());
        }
    }
    outcome(worst <= TOL, format!("max relative error {worst:.2e} (tol {TOL:.0e})"))
}

fn channel_estimation_noiseless() -> Outcome {
    const TOL: f64 = 1e-3;
    let cfg = SystemConfig {
        users: 1,
        relays: 1,
        paths: 1,
        noise_var: 0.0,
        ..SystemConfig::default()
    };
    let np = cfg.phases();
    let mut worst: f64 = 0.0;
    for seed in 0..5u64 {
        let mut r = rng(500 + seed);
        let sigs = build_signatures(&cfg, &mut r).unwrap();
        let ch = ChannelSet::draw_static(&cfg, &mut r);
        let powers = [1.0];
        let a = CVector::from_real(&vec![(1.0 / np as f64).sqrt(); np]);
        let mut src = PacketSource::new(&cfg, &sigs, &ch, &powers, 50, rng(600 + seed)).unwrap();
        let mut joint = JointChannelEstimator::new(1, np, cfg.window_len(), cfg.paths, 1.0, 1e-3);
        let mut user = UserChannelEstimator::new(np, cfg.window_len(), cfg.paths, 1.0, 1e-3);
        for i in 0..50 {
            let rv = src.receive(i, &a).unwrap().r;
            let b = src.frame(i).b[0];
            let u: CVector = a.iter().map(|&x| x * b).collect();
            joint.update(&sigs, &rv, &u).unwrap();
            user.update(&sigs, 0, &rv, &u).unwrap();
        }
        let truth = &src.taps(0).dest[0];
        for (j, h) in truth.iter().enumerate() {
            for (l, &t) in h.iter().enumerate() {
                worst = worst.max((joint.taps[0][j][l] - t).norm());
                worst = worst.max((user.taps[j][l] - t).norm());
            }
        }
    }
    outcome(
        worst <= TOL,
        format!("max per-tap error {worst:.2e} after 50 symbols (tol {TOL:.0e})"),
    )
}

fn show(res: &ExperimentResult, s: Scheme, pred: impl Fn(&jpais::harness::GridPoint) -> bool) -> (f64, f64) {
    res.get(s, pred).unwrap().ber_ci()
}

fn ber_ordering() -> Outcome {
    let spec = ExperimentSpec {
        runs: 200,
        ..ExperimentSpec::default()
    };
    let res = run_experiment(&spec).unwrap();
    let order = [Scheme::JpaisGpc, Scheme::JpaisIpc, Scheme::Cis, Scheme::Ncis];
    let stats: Vec<(f64, f64)> = order.iter().map(|&s| show(&res, s, |_| true)).collect();
    let mut pass = true;
    let mut detail = vec![];
    for (s, (m, c)) in order.iter().zip(&stats) {
        detail.push(format!("{}={m:.3e}±{c:.1e}", s.name()));
    }
    for w in stats.windows(2) {
        let ((m0, c0), (m1, c1)) = (w[0], w[1]);
        if m0 + c0 >= m1 - c1 {
            pass = false;
        }
    }
    outcome(pass, detail.join(" "))
}

/// SNR at which a decreasing BER curve crosses `target`, log-linear in BER.
fn crossing(snr: &[f64], ber: &[f64], target: f64) -> Option<f64> {
    for i in 1..snr.len() {
        if ber[i - 1] > target && ber[i] <= target && ber[i] > 0.0 {
            let (y0, y1) = (ber[i - 1].log10(), ber[i].log10());
            let t = (y0 - target.log10()) / (y0 - y1);
            return Some(snr[i - 1] + t * (snr[i] - snr[i - 1]));
        }
    }
    None
}

fn snr_gain() -> Outcome {
    let snr = vec![6.0, 8.0, 10.0, 12.0, 14.0];
    let spec = ExperimentSpec {
        snr_db: snr.clone(),
        algorithms: vec!["CIS".into(), "JPAIS-GPC".into(), "JPAIS-IPC".into()],
        runs: 200,
        ..ExperimentSpec::default()
    };
    let res = run_experiment(&spec).unwrap();
    let at = |s: Scheme| -> Option<f64> {
        let ber: Vec<f64> = snr
            .iter()
            .map(|&x| res.get(s, |p| p.snr_db == x).unwrap().mean_ber())
            .collect();
        crossing(&snr, &ber, 1e-2)
    };
    let (cis, gpc, ipc) = (at(Scheme::Cis), at(Scheme::JpaisGpc), at(Scheme::JpaisIpc));
    let fmt = |v: Option<f64>| v.map_or("none".into(), |x| format!("{x:.2} dB"));
    let best = match (gpc, ipc) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    };
    let gain = cis.zip(best).map(|(c, b)| c - b);
    outcome(
        gain.is_some_and(|g| g >= 1.0),
        format!(
            "BER 1e-2 at CIS {} GPC {} IPC {}; gain {}",
            fmt(cis),
            fmt(gpc),
            fmt(ipc),
            gain.map_or("undefined".into(), |g| format!("{g:.2} dB"))
        ),
    )
}

fn adaptive_tracks_mmse() -> Outcome {
    let base = ExperimentSpec {
        snr_db: vec![12.0],
        algorithms: vec!["JPAIS-GPC".into(), "JPAIS-IPC".into()],
        runs: 100,
        ..ExperimentSpec::default()
    };
    let adaptive = run_experiment(&ExperimentSpec {
        mode: RunMode::Adaptive,
        ..base.clone()
    })
    .unwrap();
    let mmse = run_experiment(&base).unwrap();
    let (from, to) = (1000, 1500);
    let mut pass = true;
    let mut detail = vec![];
    for s in [Scheme::JpaisGpc, Scheme::JpaisIpc] {
        let a = adaptive.get(s, |_| true).unwrap().window_ber(from, to);
        let m = mmse.get(s, |_| true).unwrap().window_ber(from, to);
        let ratio = a / m;
        pass &= ratio <= 2.0;
        detail.push(format!("{} adaptive {a:.3e} mmse {m:.3e} ratio {ratio:.2}", s.name()));
    }
    outcome(pass, format!("symbols {from}..{to}: {}", detail.join("; ")))
}

fn doppler_gain_shrinks() -> Outcome {
    let fdt = [1e-5, 1e-4, 1e-3, 1e-2];
    let spec = ExperimentSpec {
        doppler: fdt.to_vec(),
        algorithms: vec!["CIS".into(), "JPAIS-GPC".into()],
        runs: 100,
        ..ExperimentSpec::default()
    };
    let res = run_experiment(&spec).unwrap();
    let gains: Vec<(f64, f64)> = fdt
        .iter()
        .map(|&f| {
            let at = |s| res.get(s, |p| p.doppler == f).unwrap();
            paired_difference(at(Scheme::Cis), at(Scheme::JpaisGpc)).unwrap()
        })
        .collect();
    let monotone = gains.windows(2).all(|w| w[1].0 < w[0].0);
    let (last, ci) = gains[gains.len() - 1];
    let vanishes = last.abs() <= ci;
    let detail: Vec<String> = fdt
        .iter()
        .zip(&gains)
        .map(|(f, (m, c))| format!("{f:.0e}: {m:.2e}±{c:.1e}"))
        .collect();
    outcome(monotone && vanishes, format!("BER gain CIS-GPC {}", detail.join(", ")))
}

fn feedback_crossover() -> Outcome {
    let spec = ExperimentSpec {
        p_e: vec![1e-4, 1e-1],
        algorithms: vec!["CIS".into(), "JPAIS-GPC".into(), "JPAIS-IPC".into()],
        runs: 200,
        ..ExperimentSpec::default()
    };
    let res = run_feedback_experiment(&spec).unwrap();
    let mut pass = true;
    let mut detail = vec![];
    for s in [Scheme::JpaisGpc, Scheme::JpaisIpc] {
        for (pe, better) in [(1e-4, true), (1e-1, false)] {
            let at = |x| res.get(x, |p| p.p_e == pe).unwrap();
            let (m, c) = paired_difference(at(Scheme::Cis), at(s)).unwrap();
            pass &= if better { m - c > 0.0 } else { m + c < 0.0 };
            detail.push(format!("{} p_e {pe:.0e}: CIS-JPAIS {m:.2e}±{c:.1e}", s.name()));
        }
    }
    outcome(pass, detail.join("; "))
}

fn throughput() -> Outcome {
    let r = 1.0;
    let at_zero = normalized_throughput(0.0, r, 1500, 4);
    let grid: Vec<f64> = (0..=600).map(|i| 10f64.powf(-7.0 + i as f64 * 6.0 / 600.0)).collect();
    let monotone = grid
        .windows(2)
        .all(|w| normalized_throughput(w[1], r, 1500, 4) < normalized_throughput(w[0], r, 1500, 4));
    let spot = normalized_throughput(1e-4, r, 1500, 4);
    let expected = (1.0f64 - 1e-4).powi(3000);
    let spot_err = (spot - expected).abs();
    outcome(
        at_zero == r && monotone && spot_err <= 1e-12,
        format!("NT(0)={at_zero}, monotone={monotone}, NT(1e-4)={spot:.12} error {spot_err:.1e}"),
    )
}

fn complexity() -> Outcome {
    let mut pass = true;
    for (k, n, l, nr) in [(8u64, 16u64, 3u64, 2u64), (4, 32, 2, 1), (16, 64, 5, 3)] {
        let (m, p) = (n + l - 1, nr + 1);
        let d = Dims::new(k as usize, n as usize, l as usize, nr as usize);
        let expect = [
            (
                ops_filter_matrix(d),
                2 * p * p * m * m + 2 * k * p * m - p * m + 1,
                3 * p * p * m * m + 2 * k * p * m + 3 * p * m + 1,
            ),
            (
                ops_alloc_global(d),
                4 * k * k * p + k * p * l - k * p + k * m * p + 6 * k * k * p * p + 3 * k * p + nr + 2,
                k * k * p + 3 * k * k * p * p + k * k * k * p * p + l * k * k * p * p + k * m * p * l + nr,
            ),
            (
                ops_channel_global(d),
                5 * k * k * p * p * l * l + 5 * k * p * l + 3,
                5 * k * k * p * p + 6 * k * p * l + 1,
            ),
            (
                ops_filter_user(d),
                2 * p * p * m * m + p * m + 1,
                3 * p * p * m * m + 5 * p * m + 1,
            ),
            (
                ops_alloc_user(d),
                2 * p * p + 3 * p + m * p * l + p * l - 3,
                3 * p * p + 7 * p + m * p * l + p * l + 3,
            ),
            (
                ops_channel_user(d),
                2 * p * p * l * l + 5 * m * p * l - 5 * p + 3,
                6 * p * p * l * l + m * p * l + 4 * p + 1,
            ),
        ];
        for (got, adds, mults) in expect {
            pass &= got == OpCount { adds, mults };
        }
        let gpc = complexity_count(Algorithm::JpaisGpc, d);
        pass &= gpc == expect[0].0 + expect[1].0 + expect[2].0;
    }
    let polynomials = pass;
    let mut detail = vec![];
    for nr in 1..=4 {
        let d = Dims::new(8, 16, 3, nr);
        let g = mult_overhead(Algorithm::JpaisGpc, Algorithm::CisUplink, d);
        let i = mult_overhead(Algorithm::JpaisIpc, Algorithm::CisDownlink, d);
        pass &= (0.10..=0.35).contains(&g) && (0.10..=0.35).contains(&i);
        detail.push(format!("n_r={nr} GPC {:.1}% IPC {:.1}%", 100.0 * g, 100.0 * i));
    }
    outcome(
        pass,
        format!("polynomials match={polynomials}; overhead {}", detail.join(", ")),
    )
}

fn init_invariance() -> Outcome {
    const TOL: f64 = 1e-6;
    let cfg = SystemConfig::default().with_snr_db(12.0);
    let sc = Scenario::draw(&cfg, 1, 0).unwrap();
    let mut pass = true;
    let mut detail = vec![];
    for mode in [Mode::Gpc, Mode::Ipc] {
        let mut r = rng(700);
        let view = DiagScenario {
            cfg: &cfg,
            sigs: &sc.sigs,
            channel: &sc.channel,
            powers: &sc.powers,
        };
        let bound = convexity_bound(mode, view, 20, 1000, &mut r).unwrap().bound;
        let total: f64 = sc.powers.iter().sum();
        let powers = scale_powers(&sc.powers, total.max(1.1 * bound));
        let p_t: f64 = powers.iter().sum();
        let model = LinkModel::new(&cfg, &sc.sigs, &sc.channel.taps, &powers).unwrap();
        let rep = init_invariance_test(mode, &model, &powers, 5, 1e-12, 3000, &mut r).unwrap();
        let mean = rep.costs.iter().sum::<f64>() / rep.costs.len() as f64;
        pass &= p_t > bound && rep.cost_spread <= TOL;
        detail.push(format!(
            "{mode:?} bound {bound:.2e} P_T {p_t:.2e} spread {:.2e} (mean cost {mean:.2e})",
            rep.cost_spread
        ));
    }
    outcome(pass, detail.join("; "))
}

fn main() {
    let criteria: [Check; 12] = [
        ("constraint exactness", constraint_exactness),
        ("RLS vs normal equations", rls_matches_normal_equations),
        ("CG vs elimination", cg_matches_elimination),
        ("noiseless channel estimate", channel_estimation_noiseless),
        ("BER ordering", ber_ordering),
        ("SNR gain at BER 1e-2", snr_gain),
        ("adaptive vs MMSE", adaptive_tracks_mmse),
        ("gain vs fdT", doppler_gain_shrinks),
        ("feedback crossover", feedback_crossover),
        ("normalized throughput", throughput),
        ("complexity", complexity),
        ("initialization invariance", init_invariance),
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let t = Instant::now();
        let o = std::panic::catch_unwind(check).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        if !o.pass {
            failed += 1;
        }
        println!(
            "criterion {n:>2} {:<28} {}  {} [{:.1}s]",
            name,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            t.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
