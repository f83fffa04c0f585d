//! Clairvoyant constrained MMSE designs of the receive filters and the power
//! allocation, computed from exact second-order statistics.
//!
//! Every random quantity seen at the destination is a linear function of a
//! vector `z` of unit-variance, mutually uncorrelated variables: the source
//! symbols `b_k[i+d]` for `d ∈ -2..=2` and the relay input noise
//! `ν_j[i+d]` for `d ∈ -1..=1`. Link `e` contributes `a_e G_e z` to its
//! segment, so `r = G(a) z + n` and
//!
//! ```text
//! R        = G(a) G(a)ᴴ + σ² I
//! P        = G(a) Sᴴ
//! E‖b − Wᴴr‖² = ‖S − Wᴴ G(a)‖²_F + σ² ‖W‖²_F
//! ```
//!
//! where `S` selects `b[i]` from `z`. Relayed symbols therefore carry their
//! residual MAI, ISI and amplified noise exactly.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::channel::LinkTaps;
use crate::error::{dim_err, Error, Result};
use crate::linalg::{gemm_hn, CMatrix, CVector, HermitianFactor, C64, ZERO};
use crate::sigmodel::{isi_from_next, isi_from_prev, RelayBank, SignatureSet, SystemConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Mode {
    /// One constraint on the whole stacked allocation.
    Gpc,
    /// One constraint per user.
    Ipc,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Constraint {
    Global(f64),
    Individual(Vec<f64>),
}

/// Stacked amplitudes `a_T` (user-major, hop-minor) with their constraint.
#[derive(Clone, Debug, PartialEq)]
pub struct PowerAllocation {
    pub a: CVector,
    pub constraint: Constraint,
    phases: usize,
}

impl PowerAllocation {
    /// Each user's budget split evenly over its hops. Meets both forms of
    /// the constraint when `P_T = Σ_k P_A,k`.
    pub fn equal(powers: &[f64], phases: usize, mode: Mode) -> Self {
        let a = powers
            .iter()
            .flat_map(|&p| std::iter::repeat_n(C64::new((p / phases as f64).sqrt(), 0.0), phases))
            .collect();
        PowerAllocation {
            a,
            constraint: Self::constraint_for(powers, mode),
            phases,
        }
    }

    /// Circularly symmetric random direction projected onto the constraint.
    pub fn random<R: Rng + ?Sized>(powers: &[f64], phases: usize, mode: Mode, rng: &mut R) -> Result<Self> {
        let a = (0..powers.len() * phases)
            .map(|_| {
                let re: f64 = StandardNormal.sample(rng);
                let im: f64 = StandardNormal.sample(rng);
                C64::new(re, im)
            })
            .collect();
        PowerAllocation {
            a,
            constraint: Self::constraint_for(powers, mode),
            phases,
        }
        .normalized()
    }

    pub fn from_vec(a: CVector, constraint: Constraint, phases: usize) -> Result<Self> {
        let expected = match &constraint {
            Constraint::Global(_) => a.len(),
            Constraint::Individual(p) => p.len() * phases,
        };
        if a.len() != expected || phases == 0 || !a.len().is_multiple_of(phases) {
            return Err(dim_err("allocation", expected, a.len()));
        }
        Ok(PowerAllocation { a, constraint, phases })
    }

    fn constraint_for(powers: &[f64], mode: Mode) -> Constraint {
        match mode {
            Mode::Gpc => Constraint::Global(powers.iter().sum()),
            Mode::Ipc => Constraint::Individual(powers.to_vec()),
        }
    }

    pub fn phases(&self) -> usize {
        self.phases
    }

    pub fn users(&self) -> usize {
        self.a.len() / self.phases
    }

    pub fn user(&self, k: usize) -> &[C64] {
        &self.a.as_slice()[k * self.phases..(k + 1) * self.phases]
    }

    pub fn set_user(&mut self, k: usize, ak: &CVector) {
        let np = self.phases;
        self.a.as_mut_slice()[k * np..(k + 1) * np].copy_from_slice(ak.as_slice());
    }

    /// Rescales onto the constraint surface.
    pub fn normalized(mut self) -> Result<Self> {
        match &self.constraint {
            Constraint::Global(p) => self.a = normalize_power(&self.a, *p)?,
            Constraint::Individual(ps) => {
                for (k, &p) in ps.clone().iter().enumerate() {
                    let ak: CVector = self.user(k).iter().copied().collect();
                    self.set_user(k, &normalize_power(&ak, p)?);
                }
            }
        }
        Ok(self)
    }

    /// Largest relative violation `|‖a‖² − P| / P` over the constraint(s).
    pub fn constraint_error(&self) -> f64 {
        match &self.constraint {
            Constraint::Global(p) => (self.a.norm_sqr() - p).abs() / p,
            Constraint::Individual(ps) => ps
                .iter()
                .enumerate()
                .map(|(k, p)| {
                    let e: f64 = self.user(k).iter().map(|z| z.norm_sqr()).sum();
                    (e - p).abs() / p
                })
                .fold(0.0, f64::max),
        }
    }
}

/// `a · √P / ‖a‖`.
pub fn normalize_power(a: &CVector, power: f64) -> Result<CVector> {
    let n = a.norm2();
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::ZeroPower("allocation vector has no energy"));
    }
    Ok(a.scale(C64::new(power.sqrt() / n, 0.0)))
}

/// Receive filters and the MSE each achieves.
#[derive(Clone, Debug, PartialEq)]
pub struct ReceiverState {
    /// `W`, `(n_r+1)M × K`.
    pub w: CMatrix,
    pub mse: Vec<f64>,
}

/// Exact second-order description of the destination observation.
#[derive(Clone, Debug)]
pub struct LinkModel {
    users: usize,
    phases: usize,
    window: usize,
    dim: usize,
    noise_var: f64,
    /// `G_e`, `M × dim`, one per link in `a_T` order.
    blocks: Vec<CMatrix>,
}

impl LinkModel {
    /// Designs the relays' MMSE filters for `taps` and builds the model.
    pub fn new(cfg: &SystemConfig, sigs: &SignatureSet, taps: &LinkTaps, powers: &[f64]) -> Result<Self> {
        let bank = if cfg.relays > 0 {
            RelayBank::design(cfg, sigs, taps, powers)?
        } else {
            RelayBank { filters: vec![] }
        };
        Self::with_relays(cfg, sigs, taps, powers, &bank)
    }

    pub fn with_relays(
        cfg: &SystemConfig,
        sigs: &SignatureSet,
        taps: &LinkTaps,
        powers: &[f64],
        bank: &RelayBank,
    ) -> Result<Self> {
        let (k_users, nr, m, n) = (cfg.users, cfg.relays, cfg.window_len(), cfg.processing_gain);
        if powers.len() != k_users {
            return Err(dim_err("user powers", k_users, powers.len()));
        }
        if taps.users() != k_users || taps.phases() != nr + 1 {
            return Err(dim_err(
                "link model channels",
                format!("{k_users} users x {} hops", nr + 1),
                format!("{} users x {} hops", taps.users(), taps.phases()),
            ));
        }
        if bank.filters.len() != nr {
            return Err(dim_err("relay bank", nr, bank.filters.len()));
        }
        let dim = 5 * k_users + 3 * nr * m;
        let sym = |k: usize, d: isize| ((d + 2) as usize) * k_users + k;
        let noise = |j: usize, d: isize| 5 * k_users + (j * 3 + (d + 1) as usize) * m;
        let sigma = cfg.noise_var.sqrt();

        // Relay inputs are built from the same three waveform shapes per user.
        let relay_waves: Vec<Vec<[CVector; 3]>> = (0..nr)
            .map(|j| {
                (0..k_users)
                    .map(|l| {
                        let s = sigs.signature(l, &taps.relay_in[l][j]);
                        [isi_from_prev(&s, n), s.clone(), isi_from_next(&s, n)]
                    })
                    .collect()
            })
            .collect();

        let mut blocks = Vec::with_capacity(k_users * (nr + 1));
        for k in 0..k_users {
            for j in 0..=nr {
                let s = sigs.signature(k, &taps.dest[k][j]);
                let waves = [isi_from_prev(&s, n), s.clone(), isi_from_next(&s, n)];
                let mut g = CMatrix::zeros(m, dim);
                for (tau, v) in (-1isize..=1).zip(waves.iter()) {
                    // Row vector over z of the symbol carried at time i+τ.
                    let mut row = vec![ZERO; dim];
                    if j == 0 {
                        row[sym(k, tau)] = C64::new(1.0, 0.0);
                    } else {
                        let f = &bank.filters[j - 1][k];
                        if !(f.expected_power > 0.0) {
                            return Err(Error::ZeroPower("relay output has no expected power"));
                        }
                        let gain = 1.0 / f.expected_power.sqrt();
                        for (l, rw) in relay_waves[j - 1].iter().enumerate() {
                            let amp = gain * powers[l].sqrt();
                            for (delta, wave) in (-1isize..=1).zip(rw.iter()) {
                                row[sym(l, tau + delta)] += f.w.dot(wave) * amp;
                            }
                        }
                        let base = noise(j - 1, tau);
                        for c in 0..m {
                            row[base + c] = f.w[c].conj() * (gain * sigma);
                        }
                    }
                    let nz: Vec<(usize, C64)> = row
                        .iter()
                        .enumerate()
                        .filter(|(_, x)| **x != ZERO)
                        .map(|(c, &x)| (c, x))
                        .collect();
                    for r in 0..m {
                        if v[r] == ZERO {
                            continue;
                        }
                        let gr = g.row_mut(r);
                        for &(c, x) in &nz {
                            gr[c] += v[r] * x;
                        }
                    }
                }
                blocks.push(g);
            }
        }
        Ok(LinkModel {
            users: k_users,
            phases: nr + 1,
            window: m,
            dim,
            noise_var: cfg.noise_var,
            blocks,
        })
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn phases(&self) -> usize {
        self.phases
    }

    pub fn links(&self) -> usize {
        self.blocks.len()
    }

    pub fn received_len(&self) -> usize {
        self.phases * self.window
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    /// Dimension of the latent vector `z`.
    pub fn latent_dim(&self) -> usize {
        self.dim
    }

    /// Column of `z` holding `b_k[i]`.
    pub fn desired_index(&self, k: usize) -> usize {
        2 * self.users + k
    }

    pub fn block(&self, e: usize) -> &CMatrix {
        &self.blocks[e]
    }

    /// `S`, `K × dim`.
    pub fn target(&self) -> CMatrix {
        CMatrix::from_fn(self.users, self.dim, |k, c| {
            if c == self.desired_index(k) {
                C64::new(1.0, 0.0)
            } else {
                ZERO
            }
        })
    }

    fn check_alloc(&self, a: &CVector) -> Result<()> {
        if a.len() != self.links() {
            return Err(dim_err("allocation", self.links(), a.len()));
        }
        Ok(())
    }

    fn check_filter(&self, w: &CMatrix) -> Result<()> {
        if w.rows() != self.received_len() {
            return Err(dim_err("receive filter rows", self.received_len(), w.rows()));
        }
        Ok(())
    }

    /// `G(a)`, `(n_r+1)M × dim`.
    pub fn mixing(&self, a: &CVector) -> Result<CMatrix> {
        self.check_alloc(a)?;
        let m = self.window;
        let mut g = CMatrix::zeros(self.received_len(), self.dim);
        for (e, blk) in self.blocks.iter().enumerate() {
            if a[e] == ZERO {
                continue;
            }
            let seg = (e % self.phases) * m;
            for r in 0..m {
                let dst = g.row_mut(seg + r);
                for (d, &s) in dst.iter_mut().zip(blk.row(r)) {
                    *d += a[e] * s;
                }
            }
        }
        Ok(g)
    }

    /// `R = E[r rᴴ]`.
    pub fn covariance(&self, a: &CVector) -> Result<CMatrix> {
        let g = self.mixing(a)?;
        Ok(self.covariance_of(&g))
    }

    fn covariance_of(&self, g: &CMatrix) -> CMatrix {
        let n = g.rows();
        let mut r = CMatrix::zeros(n, n);
        for i in 0..n {
            let gi = g.row(i);
            for j in i..n {
                let v = gi.iter().zip(g.row(j)).fold(ZERO, |acc, (x, y)| acc + x * y.conj());
                r[(i, j)] = v;
                r[(j, i)] = v.conj();
            }
            r[(i, i)] = C64::new(r[(i, i)].re + self.noise_var, 0.0);
        }
        r
    }

    /// MMSE filters `R⁻¹P` for `a`, without the MSE bookkeeping of
    /// [`LinkModel::filter`].
    pub fn receiver(&self, a: &CVector) -> Result<CMatrix> {
        let g = self.mixing(a)?;
        let mut r = self.covariance_of(&g);
        if self.noise_var == 0.0 {
            let load = 1e-12 * r.trace().re.max(1e-300) / r.rows() as f64;
            r.add_diag(load);
        }
        let p = CMatrix::from_fn(g.rows(), self.users, |i, k| g[(i, self.desired_index(k))]);
        mmse_filter_gpc(&r, &p)
    }

    /// `P = E[r bᴴ]`, `(n_r+1)M × K`.
    pub fn cross(&self, a: &CVector) -> Result<CMatrix> {
        let g = self.mixing(a)?;
        Ok(CMatrix::from_fn(g.rows(), self.users, |r, k| {
            g[(r, self.desired_index(k))]
        }))
    }

    /// Per-user `E|b_k − w_kᴴ r|²`.
    pub fn user_mse(&self, w: &CMatrix, a: &CVector) -> Result<Vec<f64>> {
        self.check_filter(w)?;
        if w.cols() != self.users {
            return Err(dim_err("receive filter columns", self.users, w.cols()));
        }
        let out = gemm_hn(w, &self.mixing(a)?)?;
        Ok((0..self.users)
            .map(|k| {
                let resid: f64 = out
                    .row(k)
                    .iter()
                    .enumerate()
                    .map(|(c, &v)| {
                        let t = if c == self.desired_index(k) { 1.0 } else { 0.0 };
                        (C64::new(t, 0.0) - v).norm_sqr()
                    })
                    .sum();
                resid + self.noise_var * w.col(k).norm_sqr()
            })
            .collect())
    }

    /// `E‖b − Wᴴr‖²`.
    pub fn cost(&self, w: &CMatrix, a: &CVector) -> Result<f64> {
        Ok(self.user_mse(w, a)?.iter().sum())
    }

    /// Output SINR of filter `w` for user `k`.
    pub fn sinr(&self, w: &CVector, a: &CVector, k: usize) -> Result<f64> {
        let g = self.mixing(a)?;
        let y = g.herm_mul_vec(w)?;
        let signal = y[self.desired_index(k)].norm_sqr();
        let total = y.norm_sqr() + self.noise_var * w.norm_sqr();
        let rest = total - signal;
        Ok(if rest > 0.0 { signal / rest } else { f64::INFINITY })
    }

    /// Filtered contribution per link, `F_e = W_segᴴ G_e` (`cols(W) × dim`).
    pub fn link_outputs(&self, w: &CMatrix) -> Result<Vec<CMatrix>> {
        self.check_filter(w)?;
        let m = self.window;
        (0..self.links())
            .map(|e| {
                let seg = e % self.phases;
                let ws = w.block(seg * m, 0, m, w.cols());
                gemm_hn(&ws, &self.blocks[e])
            })
            .collect()
    }

    /// `(R_a, p_a)` of the global-constraint allocation problem for fixed `W`.
    pub fn gpc_stats(&self, w: &CMatrix) -> Result<(CMatrix, CVector)> {
        if w.cols() != self.users {
            return Err(dim_err("receive filter columns", self.users, w.cols()));
        }
        let f = self.link_outputs(w)?;
        let e_n = f.len();
        let inner = |x: &CMatrix, y: &CMatrix| -> C64 {
            x.as_slice().iter().zip(y.as_slice()).map(|(a, b)| a.conj() * b).sum()
        };
        let mut r_a = CMatrix::zeros(e_n, e_n);
        for p in 0..e_n {
            for q in p..e_n {
                let v = inner(&f[p], &f[q]);
                r_a[(p, q)] = v;
                r_a[(q, p)] = v.conj();
            }
        }
        let p_a = (0..e_n)
            .map(|e| (0..self.users).map(|k| f[e][(k, self.desired_index(k))].conj()).sum())
            .collect();
        Ok((r_a, p_a))
    }

    /// `(R_a_k, p_a_k)` of user `k`'s allocation problem for fixed `w_k`,
    /// holding the other users' amplitudes in `a` fixed.
    pub fn ipc_stats(&self, w_k: &CVector, k: usize, a: &CVector) -> Result<(CMatrix, CVector)> {
        self.check_alloc(a)?;
        let wm = CMatrix::from_columns(std::slice::from_ref(w_k))?;
        let f = self.link_outputs(&wm)?;
        let np = self.phases;
        let own = k * np..(k + 1) * np;
        let mut target = vec![ZERO; self.dim];
        target[self.desired_index(k)] = C64::new(1.0, 0.0);
        for (e, fe) in f.iter().enumerate() {
            if own.contains(&e) || a[e] == ZERO {
                continue;
            }
            for (t, &v) in target.iter_mut().zip(fe.row(0)) {
                *t -= a[e] * v;
            }
        }
        let mut r_a = CMatrix::zeros(np, np);
        let mut p_a = CVector::zeros(np);
        for p in 0..np {
            let fp = f[own.start + p].row(0);
            for q in 0..np {
                let fq = f[own.start + q].row(0);
                r_a[(p, q)] = fp.iter().zip(fq).map(|(x, y)| x.conj() * y).sum();
            }
            p_a[p] = fp.iter().zip(&target).map(|(x, y)| x.conj() * y).sum();
        }
        Ok((r_a, p_a))
    }

    /// Exact MMSE filters `W = R⁻¹P` for allocation `a`.
    pub fn filter(&self, a: &CVector) -> Result<ReceiverState> {
        let mut r = self.covariance(a)?;
        if self.noise_var == 0.0 {
            let load = 1e-12 * r.trace().re.max(1e-300) / r.rows() as f64;
            r.add_diag(load);
        }
        let w = mmse_filter_gpc(&r, &self.cross(a)?)?;
        let mse = self.user_mse(&w, a)?;
        Ok(ReceiverState { w, mse })
    }
}

/// `W = R⁻¹ P`.
pub fn mmse_filter_gpc(r: &CMatrix, p: &CMatrix) -> Result<CMatrix> {
    if p.rows() != r.rows() {
        return Err(dim_err("mmse filter", r.rows(), p.rows()));
    }
    HermitianFactor::new(r)?.solve_mat(p)
}

/// `w_k = R⁻¹ p_k`.
pub fn mmse_filter_ipc(r: &CMatrix, p: &CVector) -> Result<CVector> {
    if p.len() != r.rows() {
        return Err(dim_err("mmse filter", r.rows(), p.len()));
    }
    HermitianFactor::new(r)?.solve_vec(p)
}

/// How the multiplier of the power constraint is chosen.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum LambdaPolicy {
    /// Fixed regularizer followed by rescaling onto the constraint.
    Fixed(f64),
    /// Search for the multiplier whose solution meets the constraint, so the
    /// result is a stationary point of the constrained problem.
    MatchConstraint,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AllocationSolution {
    pub a: CVector,
    pub lambda: f64,
}

fn regularized_solve(r_a: &CMatrix, p_a: &CVector, lambda: f64) -> Option<CVector> {
    let mut m = r_a.clone();
    m.add_diag(lambda);
    HermitianFactor::new(&m).ok()?.solve_vec(p_a).ok()
}

/// Solves `(R_a + λI) a = p_a` and rescales onto `‖a‖² = power`.
pub fn solve_allocation(r_a: &CMatrix, p_a: &CVector, policy: LambdaPolicy, power: f64) -> Result<AllocationSolution> {
    if !r_a.is_square() || r_a.rows() != p_a.len() {
        return Err(dim_err("allocation normal equations", r_a.rows(), p_a.len()));
    }
    if p_a.norm_sqr() == 0.0 {
        return Err(Error::ZeroPower("allocation cross-correlation vanishes"));
    }
    match policy {
        LambdaPolicy::Fixed(lambda) => {
            if lambda < 0.0 {
                return Err(Error::InvalidConfig("lambda must be non-negative".into()));
            }
            let mut m = r_a.clone();
            m.add_diag(lambda);
            let a = crate::linalg::solve_hermitian(&m, p_a)?;
            Ok(AllocationSolution {
                a: normalize_power(&a, power)?,
                lambda,
            })
        }
        LambdaPolicy::MatchConstraint => {
            // ‖(R_a + λI)⁻¹ p‖² decreases in λ on the positive definite range;
            // treat indefinite shifts as +∞ and bisect.
            let excess = |lam: f64| regularized_solve(r_a, p_a, lam).map(|a| (a.norm_sqr() - power, a));
            let scale = r_a.trace().re.abs() + p_a.norm2() / power.sqrt() + 1.0;
            let mut hi = scale;
            let mut best = loop {
                match excess(hi) {
                    Some((f, a)) if f < 0.0 => break a,
                    _ => hi *= 2.0,
                }
                if !hi.is_finite() {
                    return Err(Error::Breakdown("multiplier search"));
                }
            };
            let mut lo = -scale;
            for _ in 0..400 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                match excess(mid) {
                    Some((f, a)) if f < 0.0 => {
                        hi = mid;
                        best = a;
                    }
                    Some((0.0, a)) => {
                        hi = mid;
                        best = a;
                        break;
                    }
                    _ => lo = mid,
                }
            }
            Ok(AllocationSolution {
                a: normalize_power(&best, power)?,
                lambda: hi,
            })
        }
    }
}

/// Global-constraint allocation with a fixed regularizer.
pub fn mmse_alloc_gpc(r_a: &CMatrix, p_a: &CVector, lambda: f64, p_t: f64) -> Result<CVector> {
    Ok(solve_allocation(r_a, p_a, LambdaPolicy::Fixed(lambda), p_t)?.a)
}

/// Per-user allocation with a fixed regularizer.
pub fn mmse_alloc_ipc(r_ak: &CMatrix, p_ak: &CVector, lambda: f64, p_a: f64) -> Result<CVector> {
    Ok(solve_allocation(r_ak, p_ak, LambdaPolicy::Fixed(lambda), p_a)?.a)
}

/// One allocation step for fixed filters.
pub fn allocation_step(
    model: &LinkModel,
    w: &CMatrix,
    current: &PowerAllocation,
    mode: Mode,
    policy: LambdaPolicy,
) -> Result<PowerAllocation> {
    let mut next = current.clone();
    match (mode, &current.constraint) {
        (Mode::Gpc, Constraint::Global(p_t)) => {
            let (r_a, p_a) = model.gpc_stats(w)?;
            next.a = solve_allocation(&r_a, &p_a, policy, *p_t)?.a;
        }
        (Mode::Ipc, Constraint::Individual(ps)) => {
            for (k, &p) in ps.iter().enumerate() {
                let (r_a, p_a) = model.ipc_stats(&w.col(k), k, &current.a)?;
                next.set_user(k, &solve_allocation(&r_a, &p_a, policy, p)?.a);
            }
        }
        _ => {
            return Err(Error::InvalidConfig(
                "allocation constraint does not match the optimization mode".into(),
            ))
        }
    }
    Ok(next)
}

#[derive(Clone, Debug)]
pub struct Alternation {
    /// Filters after every filter step; the first is designed for `init`.
    pub filters: Vec<CMatrix>,
    /// Allocations after every allocation step.
    pub allocations: Vec<PowerAllocation>,
    /// Cost after every filter step.
    pub costs: Vec<f64>,
    pub receiver: ReceiverState,
    pub allocation: PowerAllocation,
}

/// `iters` rounds of filter step then allocation step, closed by a filter
/// step for the final allocation.
pub fn alternate(
    model: &LinkModel,
    mode: Mode,
    iters: usize,
    init: &PowerAllocation,
    policy: LambdaPolicy,
) -> Result<Alternation> {
    if iters == 0 {
        return Err(Error::InvalidConfig("at least one iteration is required".into()));
    }
    let mut alloc = init.clone();
    let mut filters = Vec::with_capacity(iters + 1);
    let mut allocations = Vec::with_capacity(iters);
    let mut costs = Vec::with_capacity(iters + 1);
    for _ in 0..iters {
        let rx = model.filter(&alloc.a)?;
        costs.push(rx.mse.iter().sum());
        alloc = allocation_step(model, &rx.w, &alloc, mode, policy)?;
        filters.push(rx.w);
        allocations.push(alloc.clone());
    }
    let receiver = model.filter(&alloc.a)?;
    costs.push(receiver.mse.iter().sum());
    filters.push(receiver.w.clone());
    Ok(Alternation {
        filters,
        allocations,
        costs,
        receiver,
        allocation: alloc,
    })
}

/// Alternates until the cost changes by less than `tol` (relative) or
/// `max_iters` rounds have run.
pub fn alternate_to_convergence(
    model: &LinkModel,
    mode: Mode,
    init: &PowerAllocation,
    policy: LambdaPolicy,
    tol: f64,
    max_iters: usize,
) -> Result<(ReceiverState, PowerAllocation, usize)> {
    let mut alloc = init.clone();
    let mut rx = model.filter(&alloc.a)?;
    let mut cost: f64 = rx.mse.iter().sum();
    for it in 1..=max_iters {
        alloc = allocation_step(model, &rx.w, &alloc, mode, policy)?;
        rx = model.filter(&alloc.a)?;
        let next: f64 = rx.mse.iter().sum();
        let done = (cost - next).abs() <= tol * next.abs().max(1e-300);
        cost = next;
        if done {
            return Ok((rx, alloc, it));
        }
    }
    Ok((rx, alloc, max_iters))
}

/// Exact MMSE receiver for the frozen equal-power allocation, in a form
/// directly comparable with the optimized schemes.
pub fn equal_power_receiver(model: &LinkModel, powers: &[f64]) -> Result<(ReceiverState, PowerAllocation)> {
    let alloc = PowerAllocation::equal(powers, model.phases(), Mode::Ipc);
    Ok((model.filter(&alloc.a)?, alloc))
}

/// `Wᴴ r` decisions are invariant to a common phase on `(W, a)`; this helper
/// aligns `b` to `a` by the least-squares phase, for comparisons.
pub fn phase_align(a: &CVector, b: &CVector) -> CVector {
    let c = b.dot(a);
    if c.norm() == 0.0 {
        return b.clone();
    }
    b.scale(c / c.norm())
}
