//! Multipath link gains for every hop, static or Clarke-fading.
//!
//! Links are indexed per user `k` and hop `j`: hop 0 is source→destination,
//! hop `j ≥ 1` is relay `j`→destination. Source→relay links are kept apart
//! because they never appear in the destination's structured matrices.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::{CMatrix, CVector, C64};
use crate::sigmodel::SystemConfig;

/// Sinusoids per tap in the Clarke realization.
pub const OSCILLATORS_PER_TAP: usize = 32;

/// Tap vectors for one time instant.
#[derive(Clone, Debug, PartialEq)]
pub struct LinkTaps {
    /// `dest[k][j]`: user `k`, hop `j` towards the destination.
    pub dest: Vec<Vec<CVector>>,
    /// `relay_in[k][j-1]`: user `k` source → relay `j`.
    pub relay_in: Vec<Vec<CVector>>,
}

impl LinkTaps {
    pub fn zeros(users: usize, relays: usize, paths: usize) -> Self {
        LinkTaps {
            dest: vec![vec![CVector::zeros(paths); relays + 1]; users],
            relay_in: vec![vec![CVector::zeros(paths); relays]; users],
        }
    }

    pub fn users(&self) -> usize {
        self.dest.len()
    }

    pub fn phases(&self) -> usize {
        self.dest.first().map_or(0, Vec::len)
    }

    pub fn paths(&self) -> usize {
        self.dest.first().and_then(|v| v.first()).map_or(0, CVector::len)
    }

    fn for_each_mut(&mut self, mut f: impl FnMut(&mut CVector)) {
        self.dest.iter_mut().flatten().for_each(&mut f);
        self.relay_in.iter_mut().flatten().for_each(&mut f);
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Oscillator {
    /// Current phasor, including the random initial phase.
    phasor: C64,
    /// Normalized Doppler shift `cos θ` of this arrival angle.
    doppler_cos: f64,
}

/// Sum-of-sinusoids state for one tap.
#[derive(Clone, Debug, PartialEq)]
struct TapProcess {
    amplitude: f64,
    oscillators: Vec<Oscillator>,
}

impl TapProcess {
    fn draw<R: Rng + ?Sized>(amplitude: f64, rng: &mut R) -> Self {
        let oscillators = (0..OSCILLATORS_PER_TAP)
            .map(|_| {
                let theta = rng.random_range(0.0..2.0 * PI);
                let phase = rng.random_range(0.0..2.0 * PI);
                Oscillator {
                    phasor: C64::from_polar(1.0, phase),
                    doppler_cos: theta.cos(),
                }
            })
            .collect();
        TapProcess { amplitude, oscillators }
    }

    fn value(&self) -> C64 {
        let s: C64 = self.oscillators.iter().map(|o| o.phasor).sum();
        s * (self.amplitude / (self.oscillators.len() as f64).sqrt())
    }

    fn step(&mut self, fd_t: f64) {
        for o in &mut self.oscillators {
            o.phasor *= C64::from_polar(1.0, 2.0 * PI * fd_t * o.doppler_cos);
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
struct FadingBank {
    dest: Vec<Vec<Vec<TapProcess>>>,
    relay_in: Vec<Vec<Vec<TapProcess>>>,
}

impl FadingBank {
    fn taps(&self) -> LinkTaps {
        let eval = |procs: &Vec<TapProcess>| procs.iter().map(TapProcess::value).collect();
        LinkTaps {
            dest: self.dest.iter().map(|u| u.iter().map(eval).collect()).collect(),
            relay_in: self.relay_in.iter().map(|u| u.iter().map(eval).collect()).collect(),
        }
    }

    fn step(&mut self, fd_t: f64) {
        self.dest
            .iter_mut()
            .chain(self.relay_in.iter_mut())
            .flatten()
            .flatten()
            .for_each(|p| p.step(fd_t));
    }
}

/// Channel state for every link of the network.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelSet {
    pub taps: LinkTaps,
    bank: Option<FadingBank>,
    time: u64,
}

/// Random power-delay profile: exponential decay with a uniform random
/// decay constant in [0, 1], normalized to unit sum.
fn power_delay_profile<R: Rng + ?Sized>(paths: usize, rng: &mut R) -> Vec<f64> {
    let decay: f64 = rng.random_range(0.0..1.0);
    let raw: Vec<f64> = (0..paths).map(|l| (-decay * l as f64).exp()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|p| p / total).collect()
}

fn cn01<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

fn static_link<R: Rng + ?Sized>(paths: usize, rng: &mut R) -> CVector {
    let profile = power_delay_profile(paths, rng);
    let mut h: CVector = profile.iter().map(|p| cn01(rng) * p.sqrt()).collect();
    let n = h.norm2();
    if n > 0.0 {
        h.scale_mut(C64::new(1.0 / n, 0.0));
    }
    h
}

impl ChannelSet {
    /// Time-invariant channels: complex Gaussian taps shaped by a random
    /// power-delay profile, each link normalized to unit energy.
    pub fn draw_static<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> Self {
        let (k, nr, l) = (cfg.users, cfg.relays, cfg.paths);
        let dest = (0..k)
            .map(|_| (0..=nr).map(|_| static_link(l, rng)).collect())
            .collect();
        let relay_in = (0..k).map(|_| (0..nr).map(|_| static_link(l, rng)).collect()).collect();
        ChannelSet {
            taps: LinkTaps { dest, relay_in },
            bank: None,
            time: 0,
        }
    }

    /// Time-varying channels under Clarke's model. Every tap is an
    /// independent sum of [`OSCILLATORS_PER_TAP`] sinusoids with uniform
    /// arrival angles and phases; tap powers follow a random power-delay
    /// profile so each link has unit average energy.
    pub fn draw_fading<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> Self {
        let (k, nr, l) = (cfg.users, cfg.relays, cfg.paths);
        let link = |rng: &mut R| -> Vec<TapProcess> {
            power_delay_profile(l, rng)
                .into_iter()
                .map(|p| TapProcess::draw(p.sqrt(), rng))
                .collect()
        };
        let dest = (0..k).map(|_| (0..=nr).map(|_| link(rng)).collect()).collect();
        let relay_in = (0..k).map(|_| (0..nr).map(|_| link(rng)).collect()).collect();
        let bank = FadingBank { dest, relay_in };
        ChannelSet {
            taps: bank.taps(),
            bank: Some(bank),
            time: 0,
        }
    }

    pub fn from_taps(taps: LinkTaps) -> Self {
        ChannelSet {
            taps,
            bank: None,
            time: 0,
        }
    }

    pub fn is_fading(&self) -> bool {
        self.bank.is_some()
    }

    pub fn time(&self) -> u64 {
        self.time
    }

    pub fn users(&self) -> usize {
        self.taps.users()
    }

    pub fn phases(&self) -> usize {
        self.taps.phases()
    }

    pub fn paths(&self) -> usize {
        self.taps.paths()
    }

    /// One symbol interval later. Static channels and `fd_t = 0` leave the
    /// taps untouched.
    pub fn advance(&self, fd_t: f64) -> ChannelSet {
        let mut next = self.clone();
        next.step(fd_t);
        next
    }

    pub fn step(&mut self, fd_t: f64) {
        self.time += 1;
        if fd_t == 0.0 {
            return;
        }
        if let Some(bank) = &mut self.bank {
            bank.step(fd_t);
            self.taps = bank.taps();
        }
    }

    /// The same network with every relay removed: only the direct links
    /// remain, with their fading processes.
    pub fn direct_only(&self) -> ChannelSet {
        let direct = |dest: &Vec<Vec<CVector>>| dest.iter().map(|u| vec![u[0].clone()]).collect();
        let mut out = self.clone();
        out.taps = LinkTaps {
            dest: direct(&self.taps.dest),
            relay_in: vec![vec![]; self.users()],
        };
        if let Some(bank) = &mut out.bank {
            bank.dest.iter_mut().for_each(|u| u.truncate(1));
            bank.relay_in.iter_mut().for_each(Vec::clear);
        }
        out
    }

    /// Scales every tap by `s`; used to build degenerate test channels.
    pub fn scaled(&self, s: f64) -> ChannelSet {
        let mut out = self.clone();
        out.taps.for_each_mut(|h| h.scale_mut(C64::new(s, 0.0)));
        out.bank = None;
        out
    }

    /// `(n_r+1)L × (n_r+1)` matrix with hop `j`'s taps in column `j`.
    pub fn pack_hk(&self, k: usize) -> CMatrix {
        let (np, l) = (self.phases(), self.paths());
        let mut h = CMatrix::zeros(np * l, np);
        for (j, taps) in self.taps.dest[k].iter().enumerate() {
            for p in 0..l {
                h[(j * l + p, j)] = taps[p];
            }
        }
        h
    }

    /// `K(n_r+1)L × K(n_r+1)` block-diagonal stack of the per-user `H_k`.
    pub fn pack_ht(&self) -> CMatrix {
        let (k, np, l) = (self.users(), self.phases(), self.paths());
        let mut h = CMatrix::zeros(k * np * l, k * np);
        for u in 0..k {
            h.set_block(u * np * l, u * np, &self.pack_hk(u));
        }
        h
    }
}

pub fn draw_static<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> ChannelSet {
    ChannelSet::draw_static(cfg, rng)
}

pub fn advance(ch: &ChannelSet, fd_t: f64) -> ChannelSet {
    ch.advance(fd_t)
}

pub fn pack_ht(ch: &ChannelSet) -> CMatrix {
    ch.pack_ht()
}
