//! Per-user recursive estimation under individual power constraints: one
//! receive filter, one allocation vector and one channel estimate per user.

use rand::Rng;

use crate::adaptive_gpc::{
    initial_allocation, magnitudes, matched_filter_init, reference, score, AdaptiveOptions, RlsFilter,
};
use crate::error::{dim_err, Error, Result};
use crate::feedback::FeedbackLink;
use crate::linalg::{CMatrix, CVector, C64, ZERO};
use crate::metrics::PacketResult;
use crate::mmse::{normalize_power, Constraint, PowerAllocation};
use crate::sigmodel::{PacketSource, SignatureSet, SystemConfig};

/// Receive filters of the selected users, either sharing one inverse
/// correlation matrix or each keeping its own.
#[derive(Clone, Debug)]
pub enum UserFilters {
    Shared(RlsFilter),
    PerUser(Vec<RlsFilter>),
}

impl UserFilters {
    pub fn new(w0: CMatrix, delta: f64, alpha: f64, shared: bool) -> Result<Self> {
        if shared {
            return Ok(UserFilters::Shared(RlsFilter::new(w0, delta, alpha)?));
        }
        let per = (0..w0.cols())
            .map(|c| RlsFilter::new(CMatrix::from_columns(&[w0.col(c)])?, delta, alpha))
            .collect::<Result<Vec<_>>>()?;
        Ok(UserFilters::PerUser(per))
    }

    pub fn users(&self) -> usize {
        match self {
            UserFilters::Shared(f) => f.w().cols(),
            UserFilters::PerUser(v) => v.len(),
        }
    }

    /// Filter of the `c`-th selected user.
    pub fn w(&self, c: usize) -> CVector {
        match self {
            UserFilters::Shared(f) => f.w().col(c),
            UserFilters::PerUser(v) => v[c].w().col(0),
        }
    }

    pub fn output(&self, r: &CVector) -> Result<CVector> {
        match self {
            UserFilters::Shared(f) => f.output(r),
            UserFilters::PerUser(v) => v.iter().map(|f| f.output(r).map(|y| y[0])).collect(),
        }
    }

    /// A breakdown restarts the affected recursion and is not reported.
    pub fn update(&mut self, r: &CVector, b: &CVector) -> Result<()> {
        let keep = |res: Result<CVector>| match res {
            Ok(_) | Err(Error::Breakdown(_)) => Ok(()),
            Err(e) => Err(e),
        };
        match self {
            UserFilters::Shared(f) => keep(f.update(r, b)),
            UserFilters::PerUser(v) => {
                if b.len() != v.len() {
                    return Err(dim_err("per-user references", v.len(), b.len()));
                }
                for (c, f) in v.iter_mut().enumerate() {
                    keep(f.update(r, &CVector::from_vec(vec![b[c]])))?;
                }
                Ok(())
            }
        }
    }
}

/// RLS estimate of one user's allocation from `b* ≈ aᴴ x`, renormalized to
/// the user's budget after every step.
#[derive(Clone, Debug)]
pub struct RlsAllocator {
    pub a: CVector,
    phi: CMatrix,
    alpha: f64,
    delta: f64,
    power: f64,
    real: bool,
}

impl RlsAllocator {
    pub fn new(a0: CVector, delta: f64, alpha: f64, power: f64) -> Result<Self> {
        let n = a0.len();
        Ok(RlsAllocator {
            a: normalize_power(&a0, power)?,
            phi: CMatrix::scaled_identity(n, 1.0 / delta),
            alpha,
            delta,
            power,
            real: false,
        })
    }

    /// Keep amplitudes real and non-negative by taking magnitudes before
    /// each normalization.
    pub fn real_amplitudes(mut self, on: bool) -> Self {
        self.real = on;
        self
    }

    pub fn update(&mut self, x: &CVector, b: C64) -> Result<()> {
        if x.len() != self.a.len() {
            return Err(dim_err("allocation regressor", self.a.len(), x.len()));
        }
        if x.norm_sqr() == 0.0 {
            return Ok(());
        }
        let pi = self.phi.mul_vec(x)?;
        let denom = self.alpha + x.dot(&pi).re;
        if !(denom > 0.0) || !denom.is_finite() {
            self.phi = CMatrix::scaled_identity(self.a.len(), 1.0 / self.delta);
            return Ok(());
        }
        let k = pi.scale(C64::new(1.0 / denom, 0.0));
        let xi = b.conj() - self.a.dot(x);
        let mut a = self.a.clone();
        a.axpy(xi.conj(), &k);
        self.phi.rank1_update(C64::new(-1.0, 0.0), &k, &pi);
        self.phi.scale_mut(C64::new(1.0 / self.alpha, 0.0));
        self.phi.symmetrize();
        if self.real {
            a = magnitudes(&a);
        }
        if let Ok(a) = normalize_power(&a, self.power) {
            self.a = a;
        }
        Ok(())
    }
}

/// Scalar-regression estimate of one user's effective signature on each
/// segment, `r_j ≈ g_{k,j} u_{k,j}`, projected onto the user's code.
#[derive(Clone, Debug)]
pub struct UserChannelEstimator {
    cross: Vec<CVector>,
    energy: Vec<f64>,
    alpha: f64,
    /// `ĥ[j]`
    pub taps: Vec<CVector>,
    /// `D_k ĥ[j]`
    pub signatures: Vec<CVector>,
}

impl UserChannelEstimator {
    pub fn new(phases: usize, window: usize, paths: usize, alpha: f64, delta: f64) -> Self {
        UserChannelEstimator {
            cross: vec![CVector::zeros(window); phases],
            energy: vec![delta; phases],
            alpha,
            taps: vec![CVector::zeros(paths); phases],
            signatures: vec![CVector::zeros(window); phases],
        }
    }

    /// `u[j] = a_{k,j} β_{k,j}`.
    pub fn update(&mut self, sigs: &SignatureSet, k: usize, r: &CVector, u: &CVector) -> Result<()> {
        let np = self.cross.len();
        let m = self.cross[0].len();
        if u.len() != np || r.len() != np * m {
            return Err(dim_err("user channel estimator input", np, u.len()));
        }
        for j in 0..np {
            if u[j] == ZERO {
                continue;
            }
            let rj: CVector = r.as_slice()[j * m..(j + 1) * m].iter().copied().collect();
            let cross = &mut self.cross[j];
            cross.scale_mut(C64::new(self.alpha, 0.0));
            cross.axpy(u[j].conj(), &rj);
            self.energy[j] = self.alpha * self.energy[j] + u[j].norm_sqr();
            let g = cross.scale(C64::new(1.0 / self.energy[j], 0.0));
            let h = sigs.project_taps(k, &g)?;
            if h.is_finite() {
                self.signatures[j] = sigs.signature(k, &h);
                self.taps[j] = h;
            }
        }
        Ok(())
    }
}

/// Receiver state of the individual-constraint scheme for a subset of users.
#[derive(Clone, Debug)]
pub struct IpcState {
    pub users: Vec<usize>,
    pub filters: UserFilters,
    pub allocs: Vec<RlsAllocator>,
    pub channels: Vec<UserChannelEstimator>,
    /// Allocation of every user in `a_T` order; unselected users stay fixed.
    full: CVector,
    phases: usize,
    window: usize,
}

impl IpcState {
    pub fn new(
        cfg: &SystemConfig,
        sigs: &SignatureSet,
        powers: &[f64],
        users: &[usize],
        shared_phi: bool,
        opts: &AdaptiveOptions,
    ) -> Result<Self> {
        if users.is_empty() || users.iter().any(|&k| k >= cfg.users) {
            return Err(Error::InvalidConfig("user selection out of range".into()));
        }
        let np = cfg.phases();
        let full = initial_allocation(cfg, powers, opts)?;
        let w_all = matched_filter_init(sigs, np);
        let cols: Vec<CVector> = users.iter().map(|&k| w_all.col(k)).collect();
        let allocs = users
            .iter()
            .map(|&k| {
                let ak: CVector = full.as_slice()[k * np..(k + 1) * np].iter().copied().collect();
                RlsAllocator::new(ak, opts.alloc_delta, cfg.forgetting, powers[k])
                    .map(|a| a.real_amplitudes(opts.real_amplitudes))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut full = full;
        for (c, &k) in users.iter().enumerate() {
            for j in 0..np {
                full[k * np + j] = allocs[c].a[j];
            }
        }
        Ok(IpcState {
            users: users.to_vec(),
            filters: UserFilters::new(CMatrix::from_columns(&cols)?, opts.delta, cfg.forgetting, shared_phi)?,
            allocs,
            channels: users
                .iter()
                .map(|_| UserChannelEstimator::new(np, cfg.window_len(), cfg.paths, cfg.forgetting, opts.channel_delta))
                .collect(),
            full,
            phases: np,
            window: cfg.window_len(),
        })
    }

    pub fn allocation(&self) -> &CVector {
        &self.full
    }

    /// `x[j] = β*_{k,j} ŝ_{k,j}ᴴ w_{k,j}` for the `c`-th selected user.
    pub fn regressor(&self, c: usize, b: C64) -> CVector {
        let w = self.filters.w(c);
        let m = self.window;
        (0..self.phases)
            .map(|j| {
                let s = &self.channels[c].signatures[j];
                let mut acc = ZERO;
                for t in 0..m {
                    acc += s[t].conj() * w[j * m + t];
                }
                b.conj() * acc
            })
            .collect()
    }

    /// `b_ref` holds one reference per selected user.
    pub fn alloc_update(&mut self, b_ref: &CVector) -> Result<()> {
        let np = self.phases;
        for c in 0..self.users.len() {
            let x = self.regressor(c, b_ref[c]);
            self.allocs[c].update(&x, b_ref[c])?;
            let k = self.users[c];
            for j in 0..np {
                self.full[k * np + j] = self.allocs[c].a[j];
            }
        }
        Ok(())
    }

    pub fn channel_update(
        &mut self,
        sigs: &SignatureSet,
        r: &CVector,
        b_ref: &CVector,
        applied: &CVector,
    ) -> Result<()> {
        let np = self.phases;
        for (c, &k) in self.users.iter().enumerate() {
            let u: CVector = (0..np).map(|j| applied[k * np + j] * b_ref[c]).collect();
            self.channels[c].update(sigs, k, r, &u)?;
        }
        Ok(())
    }
}

/// One packet of the individual-constraint scheme over the selected users.
pub fn run_packet(
    cfg: &SystemConfig,
    sigs: &SignatureSet,
    src: &mut PacketSource<'_>,
    powers: &[f64],
    users: &[usize],
    shared_phi: bool,
    opts: &AdaptiveOptions,
) -> Result<PacketResult> {
    run_with(cfg, sigs, src, powers, users, shared_phi, opts, |a| {
        Ok((a.clone(), a.clone()))
    })
}

/// As [`run_packet`], with every allocation update sent to the transmitters
/// over `link`.
#[allow(clippy::too_many_arguments)]
pub fn run_packet_with_feedback<R: Rng>(
    cfg: &SystemConfig,
    sigs: &SignatureSet,
    src: &mut PacketSource<'_>,
    powers: &[f64],
    users: &[usize],
    shared_phi: bool,
    opts: &AdaptiveOptions,
    link: &mut FeedbackLink<R>,
) -> Result<PacketResult> {
    let constraint = Constraint::Individual(powers.to_vec());
    run_with(cfg, sigs, src, powers, users, shared_phi, opts, |a| {
        let alloc = PowerAllocation::from_vec(a.clone(), constraint.clone(), cfg.phases())?;
        let d = link.deliver(&alloc)?;
        Ok((d.belief.a, d.applied.a))
    })
}

#[allow(clippy::too_many_arguments)]
fn run_with(
    cfg: &SystemConfig,
    sigs: &SignatureSet,
    src: &mut PacketSource<'_>,
    powers: &[f64],
    users: &[usize],
    shared_phi: bool,
    opts: &AdaptiveOptions,
    mut deliver: impl FnMut(&CVector) -> Result<(CVector, CVector)>,
) -> Result<PacketResult> {
    let mut st = IpcState::new(cfg, sigs, powers, users, shared_phi, opts)?;
    let n = src.len();
    let mut result = PacketResult::new(n, 2 * users.len(), cfg.training_len.min(n), cfg.users);
    let mut y_full = CVector::zeros(cfg.users);
    for i in 0..n {
        let (applied, sent) = deliver(st.allocation())?;
        let r = src.receive(i, &sent)?.r;
        let y = st.filters.output(&r)?;
        for (c, &k) in users.iter().enumerate() {
            y_full[k] = y[c];
        }
        score(&mut result, src, i, &y_full, users);
        let full_ref = reference(src, i, cfg.training_len, &y_full);
        let b_ref: CVector = users.iter().map(|&k| full_ref[k]).collect();
        st.filters.update(&r, &b_ref)?;
        if opts.freeze_allocation {
            continue;
        }
        st.alloc_update(&b_ref)?;
        st.channel_update(sigs, &r, &b_ref, &applied)?;
    }
    result.sinr = users.iter().map(|&k| result.sinr[k]).collect();
    result.allocation = st.allocation().clone();
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{ChannelSet, LinkTaps};
    use crate::linalg::HermitianFactor;
    use crate::sigmodel::{build_signatures, complex_gaussian, draw_user_powers, random_qpsk};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(s: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(s)
    }

    #[test]
    fn shared_and_per_user_filters_agree() {
        let mut r = rng(1);
        let w0 = CMatrix::from_fn(10, 3, |_, _| complex_gaussian(&mut r, 1.0));
        let mut shared = UserFilters::new(w0.clone(), 1e-2, 0.99, true).unwrap();
        let mut per = UserFilters::new(w0, 1e-2, 0.99, false).unwrap();
        for _ in 0..80 {
            let x: CVector = (0..10).map(|_| complex_gaussian(&mut r, 1.0)).collect();
            let b: CVector = (0..3).map(|_| random_qpsk(&mut r).1).collect();
            shared.update(&x, &b).unwrap();
            per.update(&x, &b).unwrap();
        }
        for c in 0..3 {
            assert!(shared.w(c).sub(&per.w(c)).unwrap().norm2() <= 1e-9 * shared.w(c).norm2());
        }
    }

    #[test]
    fn per_user_filter_matches_normal_equations() {
        let (dim, n, delta) = (9, 40, 1e-3);
        let mut r = rng(2);
        let w0 = CMatrix::zeros(dim, 1);
        let mut f = UserFilters::new(w0, delta, 1.0, false).unwrap();
        let mut corr = CMatrix::scaled_identity(dim, delta);
        let mut cross = CVector::zeros(dim);
        for _ in 0..n {
            let x: CVector = (0..dim).map(|_| complex_gaussian(&mut r, 1.0)).collect();
            let b = random_qpsk(&mut r).1;
            f.update(&x, &CVector::from_vec(vec![b])).unwrap();
            corr.rank1_update(C64::new(1.0, 0.0), &x, &x);
            cross.axpy(b.conj(), &x);
        }
        let direct = HermitianFactor::new(&corr).unwrap().solve_vec(&cross).unwrap();
        assert!(f.w(0).sub(&direct).unwrap().norm2() / direct.norm2() <= 1e-6);
    }

    #[test]
    fn allocator_tracks_noiseless_target() {
        let target = normalize_power(
            &CVector::from_vec(vec![C64::new(0.9, 0.1), C64::new(0.3, -0.2), C64::new(0.2, 0.0)]),
            1.0,
        )
        .unwrap();
        let mut alloc = RlsAllocator::new(CVector::from_real(&[1.0, 1.0, 1.0]), 1e-3, 1.0, 1.0).unwrap();
        let mut r = rng(3);
        for _ in 0..400 {
            let x: CVector = (0..3).map(|_| complex_gaussian(&mut r, 1.0)).collect();
            let b = target.dot(&x).conj();
            alloc.update(&x, b).unwrap();
            assert!((alloc.a.norm_sqr() - 1.0).abs() <= 1e-12);
        }
        assert!(
            alloc.a.sub(&target).unwrap().norm2() < 1e-3,
            "{:?} {:?}",
            alloc.a,
            target
        );
    }

    #[test]
    fn user_channel_estimator_recovers_taps() {
        let cfg = SystemConfig {
            users: 1,
            relays: 1,
            paths: 1,
            noise_var: 0.0,
            ..SystemConfig::default()
        };
        let mut r = rng(4);
        let sigs = build_signatures(&cfg, &mut r).unwrap();
        let h0 = CVector::from_vec(vec![C64::new(0.8, 0.1)]);
        let h1 = CVector::from_vec(vec![C64::new(0.2, -0.7)]);
        let relay = CVector::from_vec(vec![C64::new(1.0, 0.0)]);
        let ch = ChannelSet::from_taps(LinkTaps {
            dest: vec![vec![h0.clone(), h1.clone()]],
            relay_in: vec![vec![relay]],
        });
        let a = CVector::from_real(&[0.8, 0.6]);
        let mut src = PacketSource::new(&cfg, &sigs, &ch, &[1.0], 50, rng(5)).unwrap();
        let mut est = UserChannelEstimator::new(2, cfg.window_len(), 1, 1.0, 1e-3);
        for i in 0..50 {
            let rv = src.receive(i, &a).unwrap();
            let f = src.frame(i);
            let u: CVector = (0..2).map(|j| a[j] * f.hop_symbol(0, j)).collect();
            est.update(&sigs, 0, &rv.r, &u).unwrap();
        }
        for (est_h, h) in est.taps.iter().zip([&h0, &h1]) {
            assert!((est_h[0] - h[0]).norm() <= 1e-3, "{:?} vs {:?}", est_h, h);
        }
    }

    #[test]
    fn individual_constraints_hold_every_symbol() {
        let cfg = SystemConfig::default().with_snr_db(12.0);
        let mut r = rng(6);
        let sigs = build_signatures(&cfg, &mut r).unwrap();
        let ch = ChannelSet::draw_static(&cfg, &mut r);
        let powers = draw_user_powers(&cfg, &mut r);
        let mut src = PacketSource::new(&cfg, &sigs, &ch, &powers, 400, rng(7)).unwrap();
        let users: Vec<usize> = (0..cfg.users).collect();
        let mut st = IpcState::new(&cfg, &sigs, &powers, &users, true, &AdaptiveOptions::default()).unwrap();
        let np = cfg.phases();
        for i in 0..400 {
            let applied = st.allocation().clone();
            let rv = src.receive(i, &applied).unwrap().r;
            let b = src.frame(i).b.clone();
            st.filters.update(&rv, &b).unwrap();
            st.alloc_update(&b).unwrap();
            st.channel_update(&sigs, &rv, &b, &applied).unwrap();
            for (k, &pk) in powers.iter().enumerate() {
                let e: f64 = (0..np).map(|j| st.allocation()[k * np + j].norm_sqr()).sum();
                assert!((e - pk).abs() <= 1e-12 * pk);
            }
        }
    }

    #[test]
    fn single_user_selection_runs() {
        let cfg = SystemConfig {
            packet_len: 300,
            ..SystemConfig::default()
        };
        let mut r = rng(8);
        let sigs = build_signatures(&cfg, &mut r).unwrap();
        let ch = ChannelSet::draw_static(&cfg, &mut r);
        let powers = draw_user_powers(&cfg, &mut r);
        let mut src = PacketSource::new(&cfg, &sigs, &ch, &powers, 300, rng(9)).unwrap();
        let res = run_packet(&cfg, &sigs, &mut src, &powers, &[3], false, &AdaptiveOptions::default()).unwrap();
        assert_eq!(res.bits_per_symbol, 2);
        assert_eq!(res.sinr.len(), 1);
        assert!(res.ber() < 0.2);
    }
}
