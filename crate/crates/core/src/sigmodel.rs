//! DS-CDMA transmission structures and multi-hop amplify-and-forward
//! transmission.
//!
//! The destination observes `n_r + 1` segments of `M = N + L - 1` chips for
//! every symbol index `i`: segment 0 from the sources, segment `j` from relay
//! `j`. Links are indexed `e = k·(n_r+1) + j`, which is also the ordering of
//! the stacked allocation vector `a_T` and of the diagonal of `B_T`.
//!
//! QPSK labeling: bits `(b0, b1)` map to `((1-2·b0) + j(1-2·b1))/√2`.

use std::f64::consts::FRAC_1_SQRT_2;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelSet, LinkTaps};
use crate::error::{dim_err, Error, Result};
use crate::linalg::{CMatrix, CVector, HermitianFactor, C64, ZERO};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SystemConfig {
    /// K
    pub users: usize,
    /// N, chips per symbol.
    pub processing_gain: usize,
    /// L, chip-spaced multipath taps per link.
    pub paths: usize,
    /// n_r
    pub relays: usize,
    /// P_A,k of the reference user (linear). Interferers are log-normal around it.
    pub user_power: f64,
    /// σ², total complex noise variance per chip.
    pub noise_var: f64,
    /// α, forgetting factor of every recursion.
    pub forgetting: f64,
    /// λ_T = λ_k, allocation regularizer.
    pub lambda: f64,
    /// f_d·T in cycles per symbol.
    pub doppler: f64,
    /// P, symbols per packet.
    pub packet_len: usize,
    /// N_tr, training symbols at the head of each packet.
    pub training_len: usize,
    pub seed: u64,
    /// Standard deviation (dB) of the interferers' log-normal power spread.
    pub interferer_std_db: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            users: 8,
            processing_gain: 16,
            paths: 3,
            relays: 2,
            user_power: 1.0,
            noise_var: 10f64.powf(-1.5),
            forgetting: 0.998,
            lambda: 0.025,
            doppler: 0.0,
            packet_len: 1500,
            training_len: 200,
            seed: 1,
            interferer_std_db: 3.0,
        }
    }
}

impl SystemConfig {
    /// M = N + L − 1
    pub fn window_len(&self) -> usize {
        self.processing_gain + self.paths - 1
    }

    /// n_p = n_r + 1
    pub fn phases(&self) -> usize {
        self.relays + 1
    }

    /// K(n_r+1), the length of `a_T`.
    pub fn links(&self) -> usize {
        self.users * self.phases()
    }

    /// (n_r+1)M, the length of `r[i]`.
    pub fn received_len(&self) -> usize {
        self.phases() * self.window_len()
    }

    pub fn link_index(&self, user: usize, hop: usize) -> usize {
        user * self.phases() + hop
    }

    pub fn snr_db(&self) -> f64 {
        10.0 * (self.user_power / self.noise_var).log10()
    }

    pub fn with_snr_db(mut self, snr_db: f64) -> Self {
        self.noise_var = self.user_power / 10f64.powf(snr_db / 10.0);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.users == 0 {
            return bad("at least one user is required");
        }
        if self.processing_gain < 2 {
            return bad("processing gain must be at least 2");
        }
        if self.paths == 0 || self.paths >= self.processing_gain {
            return bad("path count must satisfy 1 <= L < N");
        }
        if !(self.forgetting > 0.0 && self.forgetting <= 1.0) {
            return bad("forgetting factor must lie in (0, 1]");
        }
        if self.user_power <= 0.0 || self.noise_var < 0.0 || self.lambda < 0.0 {
            return bad("powers, noise variance and lambda must be non-negative");
        }
        if self.doppler < 0.0 {
            return bad("normalized Doppler must be non-negative");
        }
        if self.training_len > self.packet_len {
            return bad("training longer than the packet");
        }
        Ok(())
    }
}

/// Per-user power budgets `P_A,k`: user 0 is the reference, the others are
/// log-normally spread around it.
pub fn draw_user_powers<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> Vec<f64> {
    let spread = Normal::new(0.0, cfg.interferer_std_db.max(0.0)).expect("finite std");
    (0..cfg.users)
        .map(|k| {
            if k == 0 || cfg.interferer_std_db == 0.0 {
                cfg.user_power
            } else {
                cfg.user_power * 10f64.powf(spread.sample(rng) / 10.0)
            }
        })
        .collect()
}

pub fn qpsk_map(b0: u8, b1: u8) -> C64 {
    C64::new(1.0 - 2.0 * b0 as f64, 1.0 - 2.0 * b1 as f64) * FRAC_1_SQRT_2
}

pub fn qpsk_bits(y: C64) -> [u8; 2] {
    [(y.re < 0.0) as u8, (y.im < 0.0) as u8]
}

/// Minimum-distance QPSK decision.
pub fn qpsk_decide(y: C64) -> C64 {
    let [b0, b1] = qpsk_bits(y);
    qpsk_map(b0, b1)
}

pub fn random_qpsk<R: Rng + ?Sized>(rng: &mut R) -> ([u8; 2], C64) {
    let bits = [rng.random_range(0..2u8), rng.random_range(0..2u8)];
    (bits, qpsk_map(bits[0], bits[1]))
}

pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, var: f64) -> C64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re * s, im * s)
}

/// `M × L` convolution matrix: column `l` is the code delayed by `l` chips.
pub fn conv_matrix(code: &CVector, paths: usize) -> CMatrix {
    let n = code.len();
    let mut d = CMatrix::zeros(n + paths - 1, paths);
    for l in 0..paths {
        for c in 0..n {
            d[(c + l, l)] = code[c];
        }
    }
    d
}

#[derive(Clone, Debug)]
pub struct SignatureSet {
    pub codes: Vec<CVector>,
    /// `D_k`, `M × L`.
    pub conv: Vec<CMatrix>,
    relays: usize,
    gram: Vec<HermitianFactor>,
}

impl SignatureSet {
    pub fn from_codes(codes: Vec<CVector>, paths: usize, relays: usize) -> Result<Self> {
        let conv: Vec<CMatrix> = codes.iter().map(|c| conv_matrix(c, paths)).collect();
        let gram = conv
            .iter()
            .map(|d| HermitianFactor::new(&crate::linalg::gemm_hn(d, d)?))
            .collect::<Result<_>>()?;
        Ok(SignatureSet {
            codes,
            conv,
            relays,
            gram,
        })
    }

    pub fn users(&self) -> usize {
        self.codes.len()
    }

    pub fn processing_gain(&self) -> usize {
        self.codes.first().map_or(0, CVector::len)
    }

    pub fn paths(&self) -> usize {
        self.conv.first().map_or(0, CMatrix::cols)
    }

    pub fn window_len(&self) -> usize {
        self.conv.first().map_or(0, CMatrix::rows)
    }

    pub fn phases(&self) -> usize {
        self.relays + 1
    }

    /// `D_k h`, the effective `M`-chip signature of one link.
    pub fn signature(&self, k: usize, h: &CVector) -> CVector {
        let code = &self.codes[k];
        let mut s = CVector::zeros(self.window_len());
        for (l, &g) in h.iter().enumerate() {
            if g == ZERO {
                continue;
            }
            for (c, &d) in code.iter().enumerate() {
                s[c + l] += d * g;
            }
        }
        s
    }

    /// Least-squares taps `(D_kᴴ D_k)⁻¹ D_kᴴ g` explaining an `M`-chip vector.
    pub fn project_taps(&self, k: usize, g: &CVector) -> Result<CVector> {
        self.gram[k].solve_vec(&self.conv[k].herm_mul_vec(g)?)
    }

    /// `C_k`: `D_k` repeated down the block diagonal, `(n_r+1)M × (n_r+1)L`.
    pub fn block(&self, k: usize) -> CMatrix {
        let (np, m, l) = (self.phases(), self.window_len(), self.paths());
        let mut c = CMatrix::zeros(np * m, np * l);
        for j in 0..np {
            c.set_block(j * m, j * l, &self.conv[k]);
        }
        c
    }

    /// `C_T = [C_1 … C_K]`.
    pub fn stacked(&self) -> CMatrix {
        let (np, m, l) = (self.phases(), self.window_len(), self.paths());
        let mut c = CMatrix::zeros(np * m, self.users() * np * l);
        for k in 0..self.users() {
            c.set_block(0, k * np * l, &self.block(k));
        }
        c
    }
}

/// Random ±1/√N spreading codes, pairwise distinct.
pub fn build_signatures<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> Result<SignatureSet> {
    let n = cfg.processing_gain;
    if n < 2 || cfg.users == 0 {
        return Err(Error::InvalidConfig("need N >= 2 and K >= 1".into()));
    }
    if n < 64 && (cfg.users as u128) > (1u128 << n) {
        return Err(Error::InvalidConfig("more users than distinct codes".into()));
    }
    let amp = 1.0 / (n as f64).sqrt();
    let mut chips: Vec<Vec<bool>> = Vec::with_capacity(cfg.users);
    while chips.len() < cfg.users {
        let c: Vec<bool> = (0..n).map(|_| rng.random::<bool>()).collect();
        if !chips.contains(&c) {
            chips.push(c);
        }
    }
    let codes = chips
        .into_iter()
        .map(|c| {
            c.into_iter()
                .map(|b| C64::new(if b { amp } else { -amp }, 0.0))
                .collect()
        })
        .collect();
    SignatureSet::from_codes(codes, cfg.paths, cfg.relays)
}

/// Tail of the previous symbol's waveform that lands in the current window.
pub fn isi_from_prev(s: &CVector, n: usize) -> CVector {
    let m = s.len();
    (0..m).map(|c| if c + n < m { s[c + n] } else { ZERO }).collect()
}

/// Head of the next symbol's waveform that lands in the current window.
pub fn isi_from_next(s: &CVector, n: usize) -> CVector {
    (0..s.len()).map(|c| if c >= n { s[c - n] } else { ZERO }).collect()
}

/// Symbols on the air at one symbol index.
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolFrame {
    /// `b_k[i]`
    pub b: CVector,
    /// `b̃_k^{r_j d}[i]`, `K × n_r`.
    pub relayed: CMatrix,
}

impl SymbolFrame {
    pub fn users(&self) -> usize {
        self.b.len()
    }

    pub fn phases(&self) -> usize {
        self.relayed.cols() + 1
    }

    /// Symbol carried on hop `j` of user `k`.
    pub fn hop_symbol(&self, k: usize, j: usize) -> C64 {
        if j == 0 {
            self.b[k]
        } else {
            self.relayed[(k, j - 1)]
        }
    }

    /// `B_k[i]`
    pub fn bk(&self, k: usize) -> CMatrix {
        CMatrix::diag(&(0..self.phases()).map(|j| self.hop_symbol(k, j)).collect())
    }

    /// Diagonal of `B_T[i]` in `a_T` order.
    pub fn bt_diag(&self) -> CVector {
        let np = self.phases();
        (0..self.users() * np)
            .map(|e| self.hop_symbol(e / np, e % np))
            .collect()
    }

    pub fn bt(&self) -> CMatrix {
        CMatrix::diag(&self.bt_diag())
    }
}

/// Destination observation `r[i]` and its ingredients.
#[derive(Clone, Debug, PartialEq)]
pub struct ReceivedVector {
    pub r: CVector,
    pub signal: CVector,
    pub isi: CVector,
    pub noise: CVector,
}

impl ReceivedVector {
    pub fn segment(&self, j: usize, m: usize) -> &[C64] {
        &self.r.as_slice()[j * m..(j + 1) * m]
    }
}

/// Three consecutive time instants, previous / current / next.
#[derive(Debug)]
pub struct Window<'a, T> {
    pub prev: &'a T,
    pub cur: &'a T,
    pub next: &'a T,
}

impl<T> Clone for Window<'_, T> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<T> Copy for Window<'_, T> {}

impl<'a, T> Window<'a, T> {
    pub fn constant(x: &'a T) -> Self {
        Window {
            prev: x,
            cur: x,
            next: x,
        }
    }
}

/// Receive filter of one relay for one user's stream.
#[derive(Clone, Debug, PartialEq)]
pub struct RelayFilter {
    pub w: CVector,
    /// `E|wᴴ r|²` at the relay input.
    pub expected_power: f64,
}

impl RelayFilter {
    /// MMSE filter `w = R⁻¹ p` for the relay's input covariance `R` and the
    /// user's cross-correlation `p`.
    pub fn mmse(cov: &CMatrix, cross: &CVector) -> Result<Self> {
        let w = crate::linalg::solve_hermitian(cov, cross)?;
        let expected_power = cross.dot(&w).re;
        Ok(RelayFilter { w, expected_power })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GainPolicy {
    /// Scale so the relayed symbol has unit expected power.
    UnitOutputPower {
        expected_power: f64,
    },
    Fixed(f64),
}

impl GainPolicy {
    pub fn gain(&self) -> Result<f64> {
        match *self {
            GainPolicy::UnitOutputPower { expected_power } => {
                if !(expected_power > 0.0) {
                    return Err(Error::ZeroPower("relay output has no expected power"));
                }
                Ok(1.0 / expected_power.sqrt())
            }
            GainPolicy::Fixed(g) => Ok(g),
        }
    }
}

/// Amplify-and-forward processing at a relay: `b̃ = g · wᴴ r_{s r_j}`.
/// Residual noise and interference are carried along with the symbol.
pub fn relay_process(received: &CVector, filter: &CVector, policy: GainPolicy) -> Result<C64> {
    if received.len() != filter.len() {
        return Err(dim_err("relay_process", filter.len(), received.len()));
    }
    if filter.norm_sqr() == 0.0 {
        return Err(Error::ZeroPower("relay filter is zero"));
    }
    Ok(filter.dot(received) * policy.gain()?)
}

/// Relay receive filters, `filters[j-1][k]` for relay `j` and user `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct RelayBank {
    pub filters: Vec<Vec<RelayFilter>>,
}

/// Input covariance of relay `j` (0-based) including ISI and noise.
pub fn relay_covariance(
    cfg: &SystemConfig,
    sigs: &SignatureSet,
    taps: &LinkTaps,
    powers: &[f64],
    relay: usize,
) -> CMatrix {
    let (m, n) = (cfg.window_len(), cfg.processing_gain);
    let mut cov = CMatrix::zeros(m, m);
    for (k, &pk) in powers.iter().enumerate() {
        let s = sigs.signature(k, &taps.relay_in[k][relay]);
        let p = C64::new(pk, 0.0);
        cov.rank1_update(p, &s, &s);
        let sp = isi_from_prev(&s, n);
        cov.rank1_update(p, &sp, &sp);
        let sn = isi_from_next(&s, n);
        cov.rank1_update(p, &sn, &sn);
    }
    let loading = if cfg.noise_var > 0.0 {
        cfg.noise_var
    } else {
        1e-12 * cov.trace().re.max(1e-300) / m as f64
    };
    cov.add_diag(loading);
    cov
}

impl RelayBank {
    pub fn design(cfg: &SystemConfig, sigs: &SignatureSet, taps: &LinkTaps, powers: &[f64]) -> Result<Self> {
        let filters = (0..cfg.relays)
            .map(|j| {
                let cov = relay_covariance(cfg, sigs, taps, powers, j);
                let factor = HermitianFactor::new(&cov)?;
                (0..cfg.users)
                    .map(|k| {
                        let p = sigs
                            .signature(k, &taps.relay_in[k][j])
                            .scale(C64::new(powers[k].sqrt(), 0.0));
                        let w = factor.solve_vec(&p)?;
                        let expected_power = p.dot(&w).re;
                        Ok(RelayFilter { w, expected_power })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        Ok(RelayBank { filters })
    }
}

/// Source→relay observation of relay `j` (0-based) at one symbol index.
pub fn relay_receive<R: Rng + ?Sized>(
    cfg: &SystemConfig,
    sigs: &SignatureSet,
    taps: Window<'_, LinkTaps>,
    symbols: Window<'_, CVector>,
    powers: &[f64],
    relay: usize,
    rng: &mut R,
) -> CVector {
    let (m, n) = (cfg.window_len(), cfg.processing_gain);
    let mut r = CVector::zeros(m);
    for (k, &pk) in powers.iter().enumerate() {
        let amp = C64::new(pk.sqrt(), 0.0);
        let s = sigs.signature(k, &taps.cur.relay_in[k][relay]);
        r.axpy(amp * symbols.cur[k], &s);
        let sp = isi_from_prev(&sigs.signature(k, &taps.prev.relay_in[k][relay]), n);
        r.axpy(amp * symbols.prev[k], &sp);
        let sn = isi_from_next(&sigs.signature(k, &taps.next.relay_in[k][relay]), n);
        r.axpy(amp * symbols.next[k], &sn);
    }
    if cfg.noise_var > 0.0 {
        for z in r.as_mut_slice() {
            *z += complex_gaussian(rng, cfg.noise_var);
        }
    }
    r
}

/// Builds the destination observation for one symbol index.
///
/// `alloc` is `a_T`; the ISI of neighbouring symbols on each link is scaled
/// by the same amplitude as the current symbol.
pub fn transmit_frame<R: Rng + ?Sized>(
    cfg: &SystemConfig,
    sigs: &SignatureSet,
    taps: Window<'_, LinkTaps>,
    frames: Window<'_, SymbolFrame>,
    alloc: &CVector,
    rng: &mut R,
) -> Result<ReceivedVector> {
    let (k_users, np, m, n) = (cfg.users, cfg.phases(), cfg.window_len(), cfg.processing_gain);
    if alloc.len() != cfg.links() {
        return Err(dim_err("transmit_frame allocation", cfg.links(), alloc.len()));
    }
    for f in [frames.prev, frames.cur, frames.next] {
        if f.users() != k_users || f.phases() != np {
            return Err(dim_err(
                "transmit_frame symbols",
                format!("{k_users} users x {np} hops"),
                format!("{} users x {} hops", f.users(), f.phases()),
            ));
        }
    }
    for t in [taps.prev, taps.cur, taps.next] {
        if t.users() != k_users || t.phases() != np {
            return Err(dim_err(
                "transmit_frame channels",
                format!("{k_users} users x {np} hops"),
                format!("{} users x {} hops", t.users(), t.phases()),
            ));
        }
    }
    let len = np * m;
    let mut signal = CVector::zeros(len);
    let mut isi = CVector::zeros(len);
    for k in 0..k_users {
        for j in 0..np {
            let a = alloc[cfg.link_index(k, j)];
            if a == ZERO {
                continue;
            }
            let s = sigs.signature(k, &taps.cur.dest[k][j]);
            let sp = isi_from_prev(&sigs.signature(k, &taps.prev.dest[k][j]), n);
            let sn = isi_from_next(&sigs.signature(k, &taps.next.dest[k][j]), n);
            let (bc, bp, bn) = (
                frames.cur.hop_symbol(k, j),
                frames.prev.hop_symbol(k, j),
                frames.next.hop_symbol(k, j),
            );
            let seg = j * m;
            for c in 0..m {
                signal[seg + c] += a * bc * s[c];
                isi[seg + c] += a * (bp * sp[c] + bn * sn[c]);
            }
        }
    }
    let noise: CVector = if cfg.noise_var > 0.0 {
        (0..len).map(|_| complex_gaussian(rng, cfg.noise_var)).collect()
    } else {
        CVector::zeros(len)
    };
    let r = signal.add(&isi)?.add(&noise)?;
    Ok(ReceivedVector { r, signal, isi, noise })
}

/// A packet's worth of source symbols, relay outputs and channel states,
/// ready to be observed at the destination under any allocation.
///
/// Symbol indices run over `0..len`; one guard symbol on each side supplies
/// ISI so that every index sees a stationary neighbourhood.
#[derive(Clone)]
pub struct PacketSource<'a> {
    cfg: SystemConfig,
    sigs: &'a SignatureSet,
    /// Frames for `t = -1 ..= len`.
    frames: Vec<SymbolFrame>,
    bits: Vec<Vec<[u8; 2]>>,
    /// Channel taps for `t = -1 ..= len`; a single entry when static.
    taps: Vec<LinkTaps>,
    len: usize,
    rng: ChaCha8Rng,
}

impl<'a> PacketSource<'a> {
    /// `channel` is the state at the packet's first guard symbol; it is
    /// advanced with `cfg.doppler` across the packet when fading.
    pub fn new(
        cfg: &SystemConfig,
        sigs: &'a SignatureSet,
        channel: &ChannelSet,
        powers: &[f64],
        len: usize,
        mut rng: ChaCha8Rng,
    ) -> Result<Self> {
        if powers.len() != cfg.users {
            return Err(dim_err("user powers", cfg.users, powers.len()));
        }
        let fading = channel.is_fading() && cfg.doppler > 0.0;
        // Symbols for t = -2 ..= len + 1.
        let total = len + 4;
        let mut bits = Vec::with_capacity(total);
        let mut symbols = Vec::with_capacity(total);
        for _ in 0..total {
            let (b, s): (Vec<[u8; 2]>, Vec<C64>) = (0..cfg.users).map(|_| random_qpsk(&mut rng)).unzip();
            bits.push(b);
            symbols.push(CVector::from_vec(s));
        }
        // Channel states for t = -2 ..= len + 1.
        let all_taps: Vec<LinkTaps> = if fading {
            let mut ch = channel.clone();
            let mut v = Vec::with_capacity(total);
            for _ in 0..total {
                v.push(ch.taps.clone());
                ch.step(cfg.doppler);
            }
            v
        } else {
            vec![channel.taps.clone()]
        };
        let tap_at = |t: usize| -> &LinkTaps {
            if fading {
                &all_taps[t]
            } else {
                &all_taps[0]
            }
        };
        let static_bank = if fading || cfg.relays == 0 {
            None
        } else {
            Some(RelayBank::design(cfg, sigs, &all_taps[0], powers)?)
        };
        let mut frames = Vec::with_capacity(len + 2);
        for t in 1..=len + 2 {
            let mut relayed = CMatrix::zeros(cfg.users, cfg.relays);
            if cfg.relays > 0 {
                let owned;
                let bank = match &static_bank {
                    Some(b) => b,
                    None => {
                        owned = RelayBank::design(cfg, sigs, tap_at(t), powers)?;
                        &owned
                    }
                };
                let tw = Window {
                    prev: tap_at(t - 1),
                    cur: tap_at(t),
                    next: tap_at(t + 1),
                };
                let sw = Window {
                    prev: &symbols[t - 1],
                    cur: &symbols[t],
                    next: &symbols[t + 1],
                };
                for j in 0..cfg.relays {
                    let rin = relay_receive(cfg, sigs, tw, sw, powers, j, &mut rng);
                    for k in 0..cfg.users {
                        let f = &bank.filters[j][k];
                        relayed[(k, j)] = relay_process(
                            &rin,
                            &f.w,
                            GainPolicy::UnitOutputPower {
                                expected_power: f.expected_power,
                            },
                        )?;
                    }
                }
            }
            frames.push(SymbolFrame {
                b: symbols[t].clone(),
                relayed,
            });
        }
        let (taps, bits) = if fading {
            (all_taps[1..=len + 2].to_vec(), bits[1..=len + 2].to_vec())
        } else {
            (all_taps, bits[1..=len + 2].to_vec())
        };
        Ok(PacketSource {
            cfg: cfg.clone(),
            sigs,
            frames,
            bits,
            taps,
            len,
            rng,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn config(&self) -> &SystemConfig {
        &self.cfg
    }

    pub fn frame(&self, i: usize) -> &SymbolFrame {
        &self.frames[i + 1]
    }

    pub fn bits(&self, i: usize) -> &[[u8; 2]] {
        &self.bits[i + 1]
    }

    /// Channel taps in force at symbol `i`.
    pub fn taps(&self, i: usize) -> &LinkTaps {
        if self.taps.len() == 1 {
            &self.taps[0]
        } else {
            &self.taps[i + 1]
        }
    }

    /// Destination observation at symbol `i` under allocation `alloc`.
    pub fn receive(&mut self, i: usize, alloc: &CVector) -> Result<ReceivedVector> {
        assert!(i < self.len, "symbol index {i} outside packet of {}", self.len);
        let at = |t: usize| if self.taps.len() == 1 { 0 } else { t };
        let taps = Window {
            prev: &self.taps[at(i)],
            cur: &self.taps[at(i + 1)],
            next: &self.taps[at(i + 2)],
        };
        let frames = Window {
            prev: &self.frames[i],
            cur: &self.frames[i + 1],
            next: &self.frames[i + 2],
        };
        transmit_frame(&self.cfg, self.sigs, taps, frames, alloc, &mut self.rng)
    }
}

/// Equal split of each user's budget over its hops (the cooperative
/// baseline's allocation).
pub fn equal_allocation(cfg: &SystemConfig, powers: &[f64]) -> CVector {
    let np = cfg.phases();
    (0..cfg.links())
        .map(|e| C64::new((powers[e / np] / np as f64).sqrt(), 0.0))
        .collect()
}
