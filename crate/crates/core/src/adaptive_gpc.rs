//! Recursive joint estimation under a global power constraint: RLS receive
//! filter matrix, conjugate-gradient power allocation with normalization,
//! and RLS channel estimation for all users at once.

use rand::Rng;

use crate::error::{dim_err, Error, Result};
use crate::feedback::FeedbackLink;
use crate::linalg::{CMatrix, CVector, C64, ZERO};
use crate::metrics::PacketResult;
use crate::mmse::{normalize_power, Constraint, PowerAllocation};
use crate::sigmodel::{qpsk_bits, qpsk_decide, PacketSource, SignatureSet, SystemConfig};

/// Exponentially weighted RLS estimate of a filter matrix `W` minimizing
/// `Σ α^{i-l} ‖b[l] − Wᴴ r[l]‖²`, with `Φ = R̂⁻¹` kept by the inversion lemma.
#[derive(Clone, Debug)]
pub struct RlsFilter {
    phi: CMatrix,
    w: CMatrix,
    alpha: f64,
    delta: f64,
    restarts: usize,
}

impl RlsFilter {
    /// `Φ[0] = δ⁻¹ I`, `W[0] = w0`.
    pub fn new(w0: CMatrix, delta: f64, alpha: f64) -> Result<Self> {
        if !(delta > 0.0) || !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidConfig("RLS needs delta > 0 and alpha in (0, 1]".into()));
        }
        Ok(RlsFilter {
            phi: CMatrix::scaled_identity(w0.rows(), 1.0 / delta),
            w: w0,
            alpha,
            delta,
            restarts: 0,
        })
    }

    pub fn w(&self) -> &CMatrix {
        &self.w
    }

    pub fn phi(&self) -> &CMatrix {
        &self.phi
    }

    pub fn restarts(&self) -> usize {
        self.restarts
    }

    /// `Wᴴ r`.
    pub fn output(&self, r: &CVector) -> Result<CVector> {
        self.w.herm_mul_vec(r)
    }

    /// One update with reference `b` (training or decisions). Returns the
    /// a-priori error `ξ = b − Wᴴ[i−1] r`. A zero observation is ignored.
    pub fn update(&mut self, r: &CVector, b: &CVector) -> Result<CVector> {
        if r.len() != self.w.rows() {
            return Err(dim_err("rls observation", self.w.rows(), r.len()));
        }
        if b.len() != self.w.cols() {
            return Err(dim_err("rls reference", self.w.cols(), b.len()));
        }
        let xi = b.sub(&self.w.herm_mul_vec(r)?)?;
        if r.norm_sqr() == 0.0 {
            return Ok(xi);
        }
        let pi = self.phi.mul_vec(r)?;
        let denom = self.alpha + r.dot(&pi).re;
        if !(denom > 0.0) || !denom.is_finite() {
            self.restart();
            return Err(Error::Breakdown("RLS gain denominator"));
        }
        let k = pi.scale(C64::new(1.0 / denom, 0.0));
        self.phi.rank1_update(C64::new(-1.0, 0.0), &k, &pi);
        self.phi.scale_mut(C64::new(1.0 / self.alpha, 0.0));
        self.phi.symmetrize();
        self.w.rank1_update(C64::new(1.0, 0.0), &k, &xi);
        if !self.phi.is_finite() || !self.w.is_finite() {
            self.restart();
            return Err(Error::Breakdown("RLS state became non-finite"));
        }
        Ok(xi)
    }

    /// Resets `Φ` to `δ⁻¹ I`, keeping the current filter.
    pub fn restart(&mut self) {
        self.phi = CMatrix::scaled_identity(self.w.rows(), 1.0 / self.delta);
        if !self.w.is_finite() {
            self.w = CMatrix::zeros(self.w.rows(), self.w.cols());
        }
        self.restarts += 1;
    }
}

/// Matched-filter start: every segment of column `k` holds user `k`'s code.
pub fn matched_filter_init(sigs: &SignatureSet, phases: usize) -> CMatrix {
    let (m, k_users) = (sigs.window_len(), sigs.users());
    let scale = C64::new(1.0 / (phases as f64).sqrt(), 0.0);
    let mut w = CMatrix::zeros(phases * m, k_users);
    for k in 0..k_users {
        for j in 0..phases {
            for (c, &d) in sigs.codes[k].iter().enumerate() {
                w[(j * m + c, k)] = d * scale;
            }
        }
    }
    w
}

/// `(A + λI) x` without forming the shifted matrix.
fn shifted_mul(a: &CMatrix, lambda: f64, x: &CVector) -> Result<CVector> {
    let mut y = a.mul_vec(x)?;
    y.axpy(C64::new(lambda, 0.0), x);
    Ok(y)
}

pub(crate) fn magnitudes(a: &CVector) -> CVector {
    a.iter().map(|v| C64::new(v.norm(), 0.0)).collect()
}

/// Conjugate gradient on `(A + λI) x = b` from `x0`. `along_ad` moves the
/// iterate along `(A+λI)d` instead of `d`.
pub fn cg_solve(
    a: &CMatrix,
    lambda: f64,
    b: &CVector,
    x0: &CVector,
    iters: usize,
    along_ad: bool,
) -> Result<(CVector, Vec<f64>)> {
    if !a.is_square() || a.rows() != b.len() || b.len() != x0.len() {
        return Err(dim_err("conjugate gradient", a.rows(), b.len()));
    }
    let mut x = x0.clone();
    let mut v = b.sub(&shifted_mul(a, lambda, &x)?)?;
    let mut d = v.clone();
    let mut vv = v.norm_sqr();
    let mut history = vec![vv.sqrt()];
    for _ in 0..iters {
        if vv == 0.0 {
            break;
        }
        let ad = shifted_mul(a, lambda, &d)?;
        let dad = d.dot(&ad).re;
        if !(dad > 0.0) {
            break;
        }
        let step = C64::new(vv / dad, 0.0);
        if along_ad {
            x.axpy(step, &ad);
        } else {
            x.axpy(step, &d);
        }
        v.axpy(-step, &ad);
        let vv_next = v.norm_sqr();
        let beta = C64::new(vv_next / vv, 0.0);
        d = v.add(&d.scale(beta))?;
        vv = vv_next;
        history.push(vv.sqrt());
    }
    Ok((x, history))
}

/// Allocation normal equations `R̂_a a = p̂_a` tracked over symbols, solved
/// by conjugate gradient and rescaled onto `‖a‖² = P`.
#[derive(Clone, Debug)]
pub struct CgAllocator {
    pub r_a: CMatrix,
    pub p_a: CVector,
    pub a: CVector,
    alpha: f64,
    lambda: f64,
    power: f64,
    inner_iters: usize,
    along_ad: bool,
    real: bool,
}

impl CgAllocator {
    pub fn new(a0: CVector, alpha: f64, lambda: f64, power: f64, inner_iters: usize, along_ad: bool) -> Result<Self> {
        let n = a0.len();
        Ok(CgAllocator {
            r_a: CMatrix::zeros(n, n),
            p_a: CVector::zeros(n),
            a: normalize_power(&a0, power)?,
            alpha,
            lambda,
            power,
            inner_iters,
            along_ad,
            real: false,
        })
    }

    /// Keep amplitudes real and non-negative by taking magnitudes before
    /// each normalization.
    pub fn real_amplitudes(mut self, on: bool) -> Self {
        self.real = on;
        self
    }

    /// Accumulates `U b` and `U Uᴴ`, runs the inner CG iterations and
    /// normalizes. With no information accumulated yet, `a` is left as is.
    pub fn update(&mut self, u: &CMatrix, b: &CVector) -> Result<()> {
        if u.rows() != self.a.len() || u.cols() != b.len() {
            return Err(dim_err("allocation regressor", self.a.len(), u.rows()));
        }
        self.r_a.scale_mut(C64::new(self.alpha, 0.0));
        self.p_a.scale_mut(C64::new(self.alpha, 0.0));
        for c in 0..u.cols() {
            let uc = u.col(c);
            self.r_a.rank1_update(C64::new(1.0, 0.0), &uc, &uc);
            self.p_a.axpy(b[c], &uc);
        }
        if self.p_a.norm_sqr() == 0.0 {
            return Ok(());
        }
        let (mut x, _) = cg_solve(
            &self.r_a,
            self.lambda,
            &self.p_a,
            &self.a,
            self.inner_iters,
            self.along_ad,
        )?;
        if self.real {
            x = magnitudes(&x);
        }
        if let Ok(a) = normalize_power(&x, self.power) {
            self.a = a;
        }
        Ok(())
    }
}

/// Per-segment RLS estimate of the effective signatures `g_{k,j} = D_k h_{k,j}`
/// from `r_j ≈ G_j u_j`, with `u_j[k] = a_{k,j} β_{k,j}`; taps follow by
/// least squares onto the range of `D_k`.
#[derive(Clone, Debug)]
pub struct JointChannelEstimator {
    cross: Vec<CMatrix>,
    inv: Vec<CMatrix>,
    alpha: f64,
    delta: f64,
    /// `ĥ[k][j]`
    pub taps: Vec<Vec<CVector>>,
    /// `D_k ĥ[k][j]`, indexed like `a_T`.
    pub signatures: Vec<CVector>,
}

impl JointChannelEstimator {
    pub fn new(users: usize, phases: usize, window: usize, paths: usize, alpha: f64, delta: f64) -> Self {
        JointChannelEstimator {
            cross: vec![CMatrix::zeros(window, users); phases],
            inv: vec![CMatrix::scaled_identity(users, 1.0 / delta); phases],
            alpha,
            delta,
            taps: vec![vec![CVector::zeros(paths); phases]; users],
            signatures: vec![CVector::zeros(window); users * phases],
        }
    }

    /// `u` is `B_T a_T` in `a_T` order; `r` is the stacked observation.
    pub fn update(&mut self, sigs: &SignatureSet, r: &CVector, u: &CVector) -> Result<()> {
        let (k_users, np) = (self.taps.len(), self.cross.len());
        let m = self.cross[0].rows();
        if u.len() != k_users * np || r.len() != np * m {
            return Err(dim_err("channel estimator input", k_users * np, u.len()));
        }
        for j in 0..np {
            let uj: CVector = (0..k_users).map(|k| u[k * np + j]).collect();
            if uj.norm_sqr() == 0.0 {
                continue;
            }
            let rj: CVector = r.as_slice()[j * m..(j + 1) * m].iter().copied().collect();
            let inv = &mut self.inv[j];
            let pi = inv.mul_vec(&uj)?;
            let denom = self.alpha + uj.dot(&pi).re;
            if !(denom > 0.0) || !denom.is_finite() {
                *inv = CMatrix::scaled_identity(k_users, 1.0 / self.delta);
                self.cross[j] = CMatrix::zeros(m, k_users);
                continue;
            }
            inv.rank1_update(C64::new(-1.0 / denom, 0.0), &pi, &pi);
            inv.scale_mut(C64::new(1.0 / self.alpha, 0.0));
            inv.symmetrize();
            let cross = &mut self.cross[j];
            cross.scale_mut(C64::new(self.alpha, 0.0));
            cross.rank1_update(C64::new(1.0, 0.0), &rj, &uj);
            let g = crate::linalg::gemm(cross, inv)?;
            for k in 0..k_users {
                let h = sigs.project_taps(k, &g.col(k))?;
                if !h.is_finite() {
                    continue;
                }
                self.signatures[k * np + j] = sigs.signature(k, &h);
                self.taps[k][j] = h;
            }
        }
        Ok(())
    }
}

/// Knobs of the adaptive receivers.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct AdaptiveOptions {
    /// RLS regularization `δ` of the filter recursion.
    pub delta: f64,
    /// Regularization of the channel recursions.
    pub channel_delta: f64,
    /// Regularization of the per-user allocation recursion.
    pub alloc_delta: f64,
    /// Conjugate-gradient iterations per symbol.
    pub cg_iters: usize,
    /// Move the allocation along `R̂_a d` rather than `d`.
    pub cg_along_rd: bool,
    /// Keep the allocation fixed (CIS and NCIS baselines, one-shot feedback).
    pub freeze_allocation: bool,
    /// Transmit `|â_k|` rather than the complex per-user estimate.
    pub real_amplitudes: bool,
    /// Starting allocation in `a_T` order; equal split per user when absent.
    #[serde(skip)]
    pub initial: Option<CVector>,
}

impl Default for AdaptiveOptions {
    fn default() -> Self {
        AdaptiveOptions {
            delta: 1e-3,
            channel_delta: 1e-3,
            alloc_delta: 1e3,
            cg_iters: 1,
            cg_along_rd: false,
            freeze_allocation: false,
            real_amplitudes: true,
            initial: None,
        }
    }
}

pub(crate) fn initial_allocation(cfg: &SystemConfig, powers: &[f64], opts: &AdaptiveOptions) -> Result<CVector> {
    match &opts.initial {
        Some(a) if a.len() == cfg.links() => Ok(a.clone()),
        Some(a) => Err(dim_err("initial allocation", cfg.links(), a.len())),
        None => Ok(crate::sigmodel::equal_allocation(cfg, powers)),
    }
}

/// Full receiver state of the global-constraint scheme.
#[derive(Clone, Debug)]
pub struct GpcState {
    pub filter: RlsFilter,
    pub alloc: CgAllocator,
    pub channel: JointChannelEstimator,
    phases: usize,
    window: usize,
}

impl GpcState {
    pub fn new(cfg: &SystemConfig, sigs: &SignatureSet, powers: &[f64], opts: &AdaptiveOptions) -> Result<Self> {
        let np = cfg.phases();
        let a0 = initial_allocation(cfg, powers, opts)?;
        let p_t = a0.norm_sqr();
        Ok(GpcState {
            filter: RlsFilter::new(matched_filter_init(sigs, np), opts.delta, cfg.forgetting)?,
            alloc: CgAllocator::new(a0, cfg.forgetting, cfg.lambda, p_t, opts.cg_iters, opts.cg_along_rd)?,
            channel: JointChannelEstimator::new(
                cfg.users,
                np,
                cfg.window_len(),
                cfg.paths,
                cfg.forgetting,
                opts.channel_delta,
            ),
            phases: np,
            window: cfg.window_len(),
        })
    }

    pub fn allocation(&self) -> &CVector {
        &self.alloc.a
    }

    /// Filter recursion; a breakdown restarts `Φ` and is not an error here.
    pub fn filter_update(&mut self, r: &CVector, b_ref: &CVector) -> Result<()> {
        match self.filter.update(r, b_ref) {
            Ok(_) | Err(Error::Breakdown(_)) => Ok(()),
            Err(e) => Err(e),
        }
    }

    /// `U_T = B_Tᴴ Ĥ_Tᴴ C_Tᴴ Ŵ`, with the reference symbols standing in for
    /// every hop's symbol.
    pub fn regressor(&self, b_ref: &CVector) -> Result<CMatrix> {
        let (np, m) = (self.phases, self.window);
        let w = self.filter.w();
        let links = self.channel.signatures.len();
        let mut u = CMatrix::zeros(links, w.cols());
        for e in 0..links {
            let s = &self.channel.signatures[e];
            let seg = (e % np) * m;
            let beta = b_ref[e / np].conj();
            for c in 0..w.cols() {
                let mut acc = ZERO;
                for t in 0..m {
                    acc += s[t].conj() * w[(seg + t, c)];
                }
                u[(e, c)] = beta * acc;
            }
        }
        Ok(u)
    }

    pub fn alloc_update(&mut self, b_ref: &CVector) -> Result<()> {
        let u = self.regressor(b_ref)?;
        self.alloc.update(&u, b_ref)
    }

    /// `u = B_T a_T` for the allocation that was on the air.
    pub fn channel_update(
        &mut self,
        sigs: &SignatureSet,
        r: &CVector,
        b_ref: &CVector,
        applied: &CVector,
    ) -> Result<()> {
        let np = self.phases;
        let u: CVector = (0..applied.len()).map(|e| applied[e] * b_ref[e / np]).collect();
        self.channel.update(sigs, r, &u)
    }
}

/// Hard decisions during data, training symbols during the preamble.
pub(crate) fn reference(src: &PacketSource<'_>, i: usize, training: usize, y: &CVector) -> CVector {
    if i < training {
        src.frame(i).b.clone()
    } else {
        y.iter().map(|&v| qpsk_decide(v)).collect()
    }
}

pub(crate) fn score(result: &mut PacketResult, src: &PacketSource<'_>, i: usize, y: &CVector, users: &[usize]) {
    let bits = src.bits(i);
    let b = &src.frame(i).b;
    let mut errs = 0u32;
    for &k in users {
        let d = qpsk_bits(y[k]);
        errs += (d[0] != bits[k][0]) as u32 + (d[1] != bits[k][1]) as u32;
        if i >= result.skip {
            result.sinr[k].push(b[k], y[k]);
        }
    }
    result.errors[i] = errs;
}

/// One packet of the global-constraint scheme (training preamble then
/// decision-directed). The transmitter applies the receiver's current
/// allocation every symbol.
pub fn run_packet(
    cfg: &SystemConfig,
    sigs: &SignatureSet,
    src: &mut PacketSource<'_>,
    powers: &[f64],
    opts: &AdaptiveOptions,
) -> Result<PacketResult> {
    run_with(cfg, sigs, src, powers, opts, |a| Ok((a.clone(), a.clone())))
}

/// As [`run_packet`], with every allocation update sent to the transmitter
/// over `link`.
pub fn run_packet_with_feedback<R: Rng>(
    cfg: &SystemConfig,
    sigs: &SignatureSet,
    src: &mut PacketSource<'_>,
    powers: &[f64],
    opts: &AdaptiveOptions,
    link: &mut FeedbackLink<R>,
) -> Result<PacketResult> {
    let constraint = Constraint::Global(powers.iter().sum());
    run_with(cfg, sigs, src, powers, opts, |a| {
        let alloc = PowerAllocation::from_vec(a.clone(), constraint.clone(), cfg.phases())?;
        let d = link.deliver(&alloc)?;
        Ok((d.belief.a, d.applied.a))
    })
}

fn run_with(
    cfg: &SystemConfig,
    sigs: &SignatureSet,
    src: &mut PacketSource<'_>,
    powers: &[f64],
    opts: &AdaptiveOptions,
    mut deliver: impl FnMut(&CVector) -> Result<(CVector, CVector)>,
) -> Result<PacketResult> {
    let mut st = GpcState::new(cfg, sigs, powers, opts)?;
    let n = src.len();
    let users: Vec<usize> = (0..cfg.users).collect();
    let mut result = PacketResult::new(n, 2 * cfg.users, cfg.training_len.min(n), cfg.users);
    for i in 0..n {
        let (applied, sent) = deliver(st.allocation())?;
        let r = src.receive(i, &sent)?.r;
        let y = st.filter.output(&r)?;
        score(&mut result, src, i, &y, &users);
        let b_ref = reference(src, i, cfg.training_len, &y);
        st.filter_update(&r, &b_ref)?;
        if opts.freeze_allocation {
            continue;
        }
        st.alloc_update(&b_ref)?;
        st.channel_update(sigs, &r, &b_ref, &applied)?;
    }
    result.allocation = st.allocation().clone();
    Ok(result)
}
