//! Limited feedback of power allocations: scalar quantization, a binary
//! symmetric feedback channel and reconstruction at the transmitter.
//!
//! Bit layout: coefficients in `a_T` order (user-major, hop-minor), each
//! written as an `n_b`-bit unsigned codeword, most significant bit first.
//! In [`QuantMode::RealImag`] every coefficient contributes its real
//! codeword followed by its imaginary codeword.

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{CVector, C64};
use crate::mmse::{normalize_power, Constraint, Mode, PowerAllocation};

/// Default bits per coefficient.
pub const DEFAULT_BITS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantMode {
    /// `|a|` uniformly over `[0, √P]`; the phase is left to the receiver.
    #[default]
    Magnitude,
    /// Real and imaginary parts separately, each uniform over `[−√P, √P]`.
    RealImag,
}

/// Who a packet describes and the power bound that sets its range.
#[derive(Clone, Debug, PartialEq)]
pub enum Scope {
    /// The whole `a_T` under `‖a_T‖² = P_T`.
    Global { power: f64 },
    /// User `k`'s `a_k` under `‖a_k‖² = P_A,k`.
    User { user: usize, power: f64 },
}

impl Scope {
    pub fn power(&self) -> f64 {
        match self {
            Scope::Global { power } | Scope::User { power, .. } => *power,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeedbackPacket {
    pub bits: Vec<u8>,
    pub n_b: usize,
    pub mode: QuantMode,
    pub scope: Scope,
    /// Number of coefficients carried.
    pub coefficients: usize,
}

impl FeedbackPacket {
    fn words_per_coefficient(&self) -> usize {
        match self.mode {
            QuantMode::Magnitude => 1,
            QuantMode::RealImag => 2,
        }
    }

    pub fn expected_len(&self) -> usize {
        self.coefficients * self.words_per_coefficient() * self.n_b
    }
}

fn levels(n_b: usize) -> u32 {
    1u32 << n_b
}

/// Codeword of `x` on a uniform quantizer over `[lo, hi]` with `2^n_b` cells.
pub fn encode_scalar(x: f64, lo: f64, hi: f64, n_b: usize) -> u32 {
    let l = levels(n_b);
    if !(hi > lo) || !x.is_finite() {
        return 0;
    }
    let t = ((x - lo) / (hi - lo) * l as f64).floor();
    t.clamp(0.0, (l - 1) as f64) as u32
}

/// Midpoint of cell `code`.
pub fn decode_scalar(code: u32, lo: f64, hi: f64, n_b: usize) -> f64 {
    lo + (code as f64 + 0.5) * (hi - lo) / levels(n_b) as f64
}

fn push_word(bits: &mut Vec<u8>, code: u32, n_b: usize) {
    for b in (0..n_b).rev() {
        bits.push(((code >> b) & 1) as u8);
    }
}

fn read_word(bits: &[u8]) -> u32 {
    bits.iter().fold(0, |acc, &b| (acc << 1) | (b & 1) as u32)
}

/// Quantizes one coefficient vector against the bound `√power`.
pub fn quantize_vector(a: &[C64], scope: Scope, n_b: usize, mode: QuantMode) -> Result<FeedbackPacket> {
    if n_b == 0 || n_b > 16 {
        return Err(Error::InvalidConfig("bits per coefficient must lie in 1..=16".into()));
    }
    let s = scope.power().sqrt();
    let mut bits = Vec::new();
    for &v in a {
        match mode {
            QuantMode::Magnitude => push_word(&mut bits, encode_scalar(v.norm(), 0.0, s, n_b), n_b),
            QuantMode::RealImag => {
                push_word(&mut bits, encode_scalar(v.re, -s, s, n_b), n_b);
                push_word(&mut bits, encode_scalar(v.im, -s, s, n_b), n_b);
            }
        }
    }
    Ok(FeedbackPacket {
        bits,
        n_b,
        mode,
        scope,
        coefficients: a.len(),
    })
}

/// One packet for a global constraint, one per user for individual ones.
pub fn quantize(alloc: &PowerAllocation, n_b: usize, mode: QuantMode) -> Result<Vec<FeedbackPacket>> {
    match &alloc.constraint {
        Constraint::Global(p) => Ok(vec![quantize_vector(
            alloc.a.as_slice(),
            Scope::Global { power: *p },
            n_b,
            mode,
        )?]),
        Constraint::Individual(ps) => ps
            .iter()
            .enumerate()
            .map(|(k, &p)| quantize_vector(alloc.user(k), Scope::User { user: k, power: p }, n_b, mode))
            .collect(),
    }
}

/// Flips every bit independently with probability `p_e`.
pub fn bsc_transmit<R: Rng + ?Sized>(pkt: &FeedbackPacket, p_e: f64, rng: &mut R) -> Result<FeedbackPacket> {
    if !(0.0..=1.0).contains(&p_e) {
        return Err(Error::InvalidConfig(format!(
            "bit error probability {p_e} outside [0, 1]"
        )));
    }
    let mut out = pkt.clone();
    if p_e > 0.0 {
        for b in &mut out.bits {
            if rng.random_bool(p_e) {
                *b ^= 1;
            }
        }
    }
    Ok(out)
}

/// Midpoint reconstruction without renormalization.
pub fn reconstruct(pkt: &FeedbackPacket) -> Result<CVector> {
    if pkt.bits.len() != pkt.expected_len() {
        return Err(Error::MalformedPacket {
            expected: pkt.expected_len(),
            found: pkt.bits.len(),
        });
    }
    let (n_b, s) = (pkt.n_b, pkt.scope.power().sqrt());
    let words: Vec<u32> = pkt.bits.chunks(n_b).map(read_word).collect();
    Ok(match pkt.mode {
        QuantMode::Magnitude => words
            .iter()
            .map(|&c| C64::new(decode_scalar(c, 0.0, s, n_b), 0.0))
            .collect(),
        QuantMode::RealImag => words
            .chunks(2)
            .map(|w| C64::new(decode_scalar(w[0], -s, s, n_b), decode_scalar(w[1], -s, s, n_b)))
            .collect(),
    })
}

/// Rebuilds the allocation the transmitter will use, rescaled onto its
/// constraint(s).
pub fn dequantize(packets: &[FeedbackPacket], phases: usize) -> Result<PowerAllocation> {
    match packets {
        [FeedbackPacket {
            scope: Scope::Global { power },
            ..
        }] => {
            let a = reconstruct(&packets[0])?;
            PowerAllocation::from_vec(normalize_power(&a, *power)?, Constraint::Global(*power), phases)
        }
        _ => {
            let mut powers = vec![0.0; packets.len()];
            let mut a = CVector::zeros(packets.len() * phases);
            for pkt in packets {
                let Scope::User { user, power } = pkt.scope else {
                    return Err(Error::InvalidConfig("mixed feedback scopes".into()));
                };
                if user >= packets.len() || pkt.coefficients != phases {
                    return Err(Error::MalformedPacket {
                        expected: phases,
                        found: pkt.coefficients,
                    });
                }
                let ak = normalize_power(&reconstruct(pkt)?, power)?;
                for j in 0..phases {
                    a[user * phases + j] = ak[j];
                }
                powers[user] = power;
            }
            PowerAllocation::from_vec(a, Constraint::Individual(powers), phases)
        }
    }
}

/// Quantize, send over the BSC and reconstruct.
pub fn feedback_round_trip<R: Rng + ?Sized>(
    alloc: &PowerAllocation,
    n_b: usize,
    mode: QuantMode,
    p_e: f64,
    rng: &mut R,
) -> Result<PowerAllocation> {
    let sent = quantize(alloc, n_b, mode)?
        .iter()
        .map(|p| bsc_transmit(p, p_e, rng))
        .collect::<Result<Vec<_>>>()?;
    dequantize(&sent, alloc.phases())
}

/// A feedback path used once per allocation update. The receiver keeps the
/// error-free quantized allocation as its belief; the transmitter applies
/// whatever survives the BSC.
#[derive(Clone, Debug)]
pub struct FeedbackLink<R> {
    pub n_b: usize,
    pub mode: QuantMode,
    pub p_e: f64,
    pub rng: R,
}

/// Allocation as seen on both ends of the feedback path.
#[derive(Clone, Debug, PartialEq)]
pub struct Delivered {
    pub belief: PowerAllocation,
    pub applied: PowerAllocation,
}

impl<R: Rng> FeedbackLink<R> {
    pub fn new(n_b: usize, mode: QuantMode, p_e: f64, rng: R) -> Self {
        FeedbackLink { n_b, mode, p_e, rng }
    }

    pub fn deliver(&mut self, alloc: &PowerAllocation) -> Result<Delivered> {
        let packets = quantize(alloc, self.n_b, self.mode)?;
        let belief = dequantize(&packets, alloc.phases())?;
        let sent = packets
            .iter()
            .map(|p| bsc_transmit(p, self.p_e, &mut self.rng))
            .collect::<Result<Vec<_>>>()?;
        let applied = dequantize(&sent, alloc.phases())?;
        Ok(Delivered { belief, applied })
    }
}

/// Feedback bits per packet: `K(n_r+1)n_b` for the global scheme, and
/// `(n_r+1)n_b` per user for the individual scheme. Doubled for
/// [`QuantMode::RealImag`].
pub fn feedback_bits(mode: Mode, users: usize, relays: usize, n_b: usize, quant: QuantMode) -> usize {
    let words = match quant {
        QuantMode::Magnitude => 1,
        QuantMode::RealImag => 2,
    };
    let per_user = (relays + 1) * n_b * words;
    match mode {
        Mode::Gpc => users * per_user,
        Mode::Ipc => per_user,
    }
}

/// Averages full-vector estimates reported by several receivers and
/// rescales the result onto `‖a‖² = power`.
pub fn fuse_average(estimates: &[CVector], power: f64) -> Result<CVector> {
    let first = estimates.first().ok_or(Error::ZeroPower("no estimates to fuse"))?;
    let mut sum = CVector::zeros(first.len());
    for e in estimates {
        if e.len() != first.len() {
            return Err(crate::error::dim_err("fused estimate", first.len(), e.len()));
        }
        sum.axpy(C64::new(1.0, 0.0), e);
    }
    normalize_power(&sum, power)
}
