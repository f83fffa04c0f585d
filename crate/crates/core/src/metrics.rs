//! Error counting, throughput and information metrics, and per-symbol
//! operation counts of the recursions.

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Result};
use crate::linalg::{CVector, C64};

/// Fraction of differing bits after skipping the first `skip` entries.
pub fn count_ber(tx: &[u8], rx: &[u8], skip: usize) -> Result<f64> {
    if tx.len() != rx.len() {
        return Err(dim_err("count_ber", tx.len(), rx.len()));
    }
    if skip >= tx.len() {
        return Ok(0.0);
    }
    let errors = tx[skip..].iter().zip(&rx[skip..]).filter(|(a, b)| a != b).count();
    Ok(errors as f64 / (tx.len() - skip) as f64)
}

/// `NT = R (1 − BER)^{P log₂ M}` in bits per time slot.
pub fn normalized_throughput(ber: f64, rate: f64, packet: usize, constellation: usize) -> f64 {
    let bits = packet as f64 * (constellation as f64).log2();
    rate * (1.0 - ber.clamp(0.0, 1.0)).powf(bits)
}

/// `log₂(1 + SINR) / n_p` bits/Hz.
pub fn mutual_information(sinr: f64, phases: usize) -> f64 {
    (1.0 + sinr.max(0.0)).log2() / phases.max(1) as f64
}

/// Output SINR estimated from `(b, y)` pairs of a unit-power symbol stream:
/// signal `|E[b* y]|²`, interference-plus-noise `E|y|² − signal`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SinrEstimator {
    pub count: u64,
    pub cross_re: f64,
    pub cross_im: f64,
    pub power: f64,
}

impl SinrEstimator {
    pub fn push(&mut self, b: C64, y: C64) {
        let c = b.conj() * y;
        self.count += 1;
        self.cross_re += c.re;
        self.cross_im += c.im;
        self.power += y.norm_sqr();
    }

    pub fn merge(&mut self, other: &SinrEstimator) {
        self.count += other.count;
        self.cross_re += other.cross_re;
        self.cross_im += other.cross_im;
        self.power += other.power;
    }

    pub fn sinr(&self) -> f64 {
        if self.count == 0 {
            return 0.0;
        }
        let n = self.count as f64;
        let signal = (self.cross_re * self.cross_re + self.cross_im * self.cross_im) / (n * n);
        let rest = self.power / n - signal;
        if rest <= 0.0 {
            f64::INFINITY
        } else {
            signal / rest
        }
    }
}

/// Outcome of one simulated packet.
#[derive(Clone, Debug, PartialEq)]
pub struct PacketResult {
    /// Bit errors over all evaluated users at each symbol index.
    pub errors: Vec<u32>,
    /// Bits evaluated per symbol index.
    pub bits_per_symbol: usize,
    /// Symbols excluded from the BER (training).
    pub skip: usize,
    pub sinr: Vec<SinrEstimator>,
    /// Allocation in force at the end of the packet, in `a_T` order.
    pub allocation: CVector,
}

impl PacketResult {
    pub fn new(len: usize, bits_per_symbol: usize, skip: usize, users: usize) -> Self {
        PacketResult {
            errors: vec![0; len],
            bits_per_symbol,
            skip,
            sinr: vec![SinrEstimator::default(); users],
            allocation: CVector::zeros(0),
        }
    }

    pub fn error_count(&self) -> u64 {
        self.errors.iter().skip(self.skip).map(|&e| e as u64).sum()
    }

    pub fn bit_count(&self) -> u64 {
        (self.errors.len().saturating_sub(self.skip) * self.bits_per_symbol) as u64
    }

    pub fn ber(&self) -> f64 {
        let bits = self.bit_count();
        if bits == 0 {
            0.0
        } else {
            self.error_count() as f64 / bits as f64
        }
    }

    /// Mean mutual information over users.
    pub fn mutual_information(&self, phases: usize) -> f64 {
        if self.sinr.is_empty() {
            return 0.0;
        }
        let total: f64 = self.sinr.iter().map(|s| mutual_information(s.sinr(), phases)).sum();
        total / self.sinr.len() as f64
    }
}

/// Sample mean and half-width of the normal-approximation 95% interval.
pub fn mean_ci95(samples: &[f64]) -> (f64, f64) {
    let n = samples.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, 1.96 * (var / n as f64).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    JpaisGpc,
    JpaisIpc,
    CisUplink,
    CisDownlink,
    NcisUplink,
    NcisDownlink,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCount {
    pub adds: u64,
    pub mults: u64,
}

impl std::ops::Add for OpCount {
    type Output = OpCount;
    fn add(self, o: OpCount) -> OpCount {
        OpCount {
            adds: self.adds + o.adds,
            mults: self.mults + o.mults,
        }
    }
}

/// Dimensions the operation counts depend on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dims {
    pub users: u64,
    pub window: u64,
    pub paths: u64,
    pub relays: u64,
}

impl Dims {
    pub fn new(users: usize, processing_gain: usize, paths: usize, relays: usize) -> Self {
        Dims {
            users: users as u64,
            window: (processing_gain + paths - 1) as u64,
            paths: paths as u64,
            relays: relays as u64,
        }
    }

    fn with_relays(self, relays: u64) -> Self {
        Dims { relays, ..self }
    }
}

fn signed(v: i64) -> u64 {
    v.max(0) as u64
}

/// Joint filter matrix recursion `Ŵ[i]`.
pub fn ops_filter_matrix(d: Dims) -> OpCount {
    let (k, q) = (d.users as i64, ((d.relays + 1) * d.window) as i64);
    OpCount {
        adds: signed(2 * q * q + 2 * k * q - q + 1),
        mults: signed(3 * q * q + 2 * k * q + 3 * q + 1),
    }
}

/// Global allocation recursion `â_T[i]`.
pub fn ops_alloc_global(d: Dims) -> OpCount {
    let (k, m, l, nr) = (d.users as i64, d.window as i64, d.paths as i64, d.relays as i64);
    let p = nr + 1;
    let e = k * p;
    OpCount {
        adds: signed(3 * k * e + e * (l - 1) + k * m * p + k * e + 6 * e * e + 3 * e + nr + 2),
        mults: signed(k * e + 4 * e * e + (k + l) * e * e - e * e + k * m * p * l + nr),
    }
}

/// Joint channel recursion `Ĥ_T[i]`.
pub fn ops_channel_global(d: Dims) -> OpCount {
    let (k, l, p) = (d.users as i64, d.paths as i64, (d.relays + 1) as i64);
    let e = k * p;
    OpCount {
        adds: signed(5 * (e * l) * (e * l) + 5 * e * l + 3),
        mults: signed(5 * e * e + 6 * e * l + 1),
    }
}

/// Per-user filter recursion `ŵ_k[i]`.
pub fn ops_filter_user(d: Dims) -> OpCount {
    let q = ((d.relays + 1) * d.window) as i64;
    OpCount {
        adds: signed(2 * q * q + q + 1),
        mults: signed(3 * q * q + 5 * q + 1),
    }
}

/// Per-user allocation recursion `â_k[i]`.
pub fn ops_alloc_user(d: Dims) -> OpCount {
    let (m, l, p) = (d.window as i64, d.paths as i64, (d.relays + 1) as i64);
    OpCount {
        adds: signed(2 * p * p + 3 * p + m * p * l + p * l - 3),
        mults: signed(3 * p * p + 7 * p + m * p * l + p * l + 3),
    }
}

/// Per-user channel recursion `Ĥ_k[i]`.
pub fn ops_channel_user(d: Dims) -> OpCount {
    let (m, l, p) = (d.window as i64, d.paths as i64, (d.relays + 1) as i64);
    OpCount {
        adds: signed(2 * (p * l) * (p * l) + 5 * m * p * l - 5 * p + 3),
        mults: signed(6 * (p * l) * (p * l) + m * p * l + 4 * p + 1),
    }
}

/// Operations per symbol of each algorithm, assembled from the recursions
/// it runs. Downlink variants are counted per user.
pub fn complexity_count(alg: Algorithm, d: Dims) -> OpCount {
    match alg {
        Algorithm::JpaisGpc => ops_filter_matrix(d) + ops_alloc_global(d) + ops_channel_global(d),
        Algorithm::JpaisIpc => ops_filter_user(d) + ops_alloc_user(d) + ops_channel_user(d),
        Algorithm::CisUplink => ops_filter_matrix(d),
        Algorithm::CisDownlink => ops_filter_user(d),
        Algorithm::NcisUplink => ops_filter_matrix(d.with_relays(0)),
        Algorithm::NcisDownlink => ops_filter_user(d.with_relays(0)),
    }
}

/// Relative multiplication overhead of `alg` over `baseline`.
pub fn mult_overhead(alg: Algorithm, baseline: Algorithm, d: Dims) -> f64 {
    let a = complexity_count(alg, d).mults as f64;
    let b = complexity_count(baseline, d).mults as f64;
    a / b - 1.0
}
