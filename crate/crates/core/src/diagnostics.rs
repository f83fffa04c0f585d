//! Numerical checks of the convexity conditions on the power budget and of
//! the initialization invariance of the alternating MMSE design.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::{ChannelSet, LinkTaps};
use crate::error::{dim_err, Error, Result};
use crate::linalg::{CMatrix, CVector, C64};
use crate::mmse::{alternate_to_convergence, phase_align, LambdaPolicy, LinkModel, Mode, PowerAllocation};
use crate::sigmodel::{complex_gaussian, PacketSource, SignatureSet, SymbolFrame, SystemConfig};

/// A static network snapshot on which the diagnostics operate.
#[derive(Clone, Copy)]
pub struct Scenario<'a> {
    pub cfg: &'a SystemConfig,
    pub sigs: &'a SignatureSet,
    pub channel: &'a ChannelSet,
    pub powers: &'a [f64],
}

/// `ℜ = C_T H_T B_T`, `(n_r+1)M × K(n_r+1)`: column `e` is link `e`'s
/// effective signature times the symbol it carries, in its own segment.
pub fn link_matrix(cfg: &SystemConfig, sigs: &SignatureSet, taps: &LinkTaps, frame: &SymbolFrame) -> CMatrix {
    let (np, m) = (cfg.phases(), cfg.window_len());
    let mut re = CMatrix::zeros(np * m, cfg.links());
    for k in 0..cfg.users {
        for j in 0..np {
            let e = cfg.link_index(k, j);
            let s = sigs.signature(k, &taps.dest[k][j]);
            let beta = frame.hop_symbol(k, j);
            for c in 0..m {
                re[(j * m + c, e)] = beta * s[c];
            }
        }
    }
    re
}

/// Square block matrix over `q = [w; a*]`: `ℜ` in the filter-rows ×
/// allocation-columns block and `t` in the first column.
pub fn structured_block(re: &CMatrix, t: &CVector) -> Result<CMatrix> {
    if t.len() != re.rows() {
        return Err(dim_err("structured block", re.rows(), t.len()));
    }
    let (rows, n) = (re.rows(), re.rows() + re.cols());
    let mut u = CMatrix::zeros(n, n);
    u.set_block(0, rows, re);
    for r in 0..rows {
        u[(r, 0)] += t[r];
    }
    Ok(u)
}

/// One draw of the quantities entering the convexity condition for a
/// single user.
#[derive(Clone, Debug)]
pub struct ConvexityProbe {
    /// `[w_k; a*]`
    pub q: CVector,
    /// Signal part of the block matrix.
    pub u_s: CMatrix,
    /// Noise and interference part.
    pub u_i: CMatrix,
    /// `(a aᴴ)† a`
    pub beta: CVector,
}

impl ConvexityProbe {
    pub fn u_t(&self) -> Result<CMatrix> {
        self.u_s.add(&self.u_i)
    }
}

/// `(a aᴴ)† a = a / ‖a‖²`.
pub fn pinv_rank_one(a: &CVector) -> CVector {
    let p = a.norm_sqr();
    if p == 0.0 {
        return CVector::zeros(a.len());
    }
    a.scale(C64::new(1.0 / p, 0.0))
}

fn hermitian_part(a: &CMatrix) -> CMatrix {
    let mut h = a.add(&a.hermitian()).expect("square");
    h.scale_mut(C64::new(0.5, 0.0));
    h
}

/// The two Hermitian forms whose ratio bounds the power budget.
#[derive(Clone, Debug)]
pub struct ConvexityForms {
    pub numerator: CMatrix,
    pub denominator: CMatrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundEstimate {
    pub bound: f64,
    /// Share of probe directions dropped for a non-positive denominator.
    pub excluded_fraction: f64,
    pub probes: usize,
}

fn unit_direction<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CVector {
    let v: CVector = (0..n).map(|_| complex_gaussian(rng, 1.0)).collect();
    let s = 1.0 / v.norm2();
    v.scale(C64::new(s, 0.0))
}

fn ratio(f: &ConvexityForms, m: &CVector) -> Option<f64> {
    let d = f.denominator.quad_form(m).ok()?;
    if d > 0.0 {
        Some(f.numerator.quad_form(m).ok()? / d)
    } else {
        None
    }
}

/// Supremum of `mᴴNm / mᴴDm` over sampled unit directions with `mᴴDm > 0`,
/// refined by projected ascent from the best sample.
pub fn bound_from_forms<R: Rng + ?Sized>(
    forms: &ConvexityForms,
    n_probes: usize,
    rng: &mut R,
) -> Result<BoundEstimate> {
    let n = forms.numerator.rows();
    if forms.denominator.rows() != n || !forms.numerator.is_square() {
        return Err(dim_err("convexity forms", n, forms.denominator.rows()));
    }
    if n_probes == 0 {
        return Err(Error::InvalidConfig("at least one probe direction is required".into()));
    }
    let mut best: Option<(f64, CVector)> = None;
    let mut excluded = 0usize;
    for _ in 0..n_probes {
        let m = unit_direction(n, rng);
        match ratio(forms, &m) {
            Some(v) if best.as_ref().is_none_or(|(b, _)| v > *b) => best = Some((v, m)),
            Some(_) => {}
            None => excluded += 1,
        }
    }
    let Some((mut value, mut m)) = best else {
        return Err(Error::BoundUndefined);
    };
    let scale = forms.numerator.norm_fro().max(forms.denominator.norm_fro()).max(1e-300);
    let unit = ConvexityForms {
        numerator: forms.numerator.scale(C64::new(1.0 / scale, 0.0)),
        denominator: forms.denominator.scale(C64::new(1.0 / scale, 0.0)),
    };
    let mut step = 0.1;
    for _ in 0..200 {
        let g = unit
            .numerator
            .mul_vec(&m)?
            .sub(&unit.denominator.mul_vec(&m)?.scale(C64::new(value, 0.0)))?;
        let mut cand = m.clone();
        cand.axpy(C64::new(step, 0.0), &g);
        let nrm = cand.norm2();
        if !(nrm > 0.0) {
            break;
        }
        cand.scale_mut(C64::new(1.0 / nrm, 0.0));
        match ratio(&unit, &cand) {
            Some(v) if v > value && v.is_finite() => {
                value = v;
                m = cand;
                step *= 1.5;
            }
            _ => step *= 0.5,
        }
        if step < 1e-12 {
            break;
        }
    }
    Ok(BoundEstimate {
        bound: value,
        excluded_fraction: excluded as f64 / n_probes as f64,
        probes: n_probes,
    })
}

/// Receiver and allocation at which the conditions are evaluated.
#[derive(Clone, Debug)]
pub struct OperatingPoint {
    pub w: CMatrix,
    pub a: CVector,
}

/// Monte Carlo estimate of the forms for user `k` at `op`.
pub fn convexity_forms(
    mode: Mode,
    sc: Scenario<'_>,
    op: &OperatingPoint,
    k: usize,
    n_mc: usize,
    seed: u64,
) -> Result<ConvexityForms> {
    let cfg = sc.cfg;
    let (np, m) = (cfg.phases(), cfg.window_len());
    if k >= cfg.users || op.a.len() != cfg.links() || op.w.rows() != np * m {
        return Err(dim_err("convexity operating point", cfg.links(), op.a.len()));
    }
    let mut src = PacketSource::new(
        cfg,
        sc.sigs,
        sc.channel,
        sc.powers,
        n_mc,
        ChaCha8Rng::seed_from_u64(seed),
    )?;
    let w = op.w.col(k);
    let (cols, own): (usize, std::ops::Range<usize>) = match mode {
        Mode::Gpc => (cfg.links(), 0..cfg.links()),
        Mode::Ipc => (np, k * np..(k + 1) * np),
    };
    let a_sel: CVector = op.a.as_slice()[own.clone()].iter().copied().collect();
    let beta = pinv_rank_one(&a_sel);
    let mut num_re = CMatrix::zeros(np * m, cols);
    let mut num_t = CVector::zeros(np * m);
    let mut den_re = CMatrix::zeros(np * m, cols);
    let mut den_t = CVector::zeros(np * m);
    for i in 0..n_mc {
        let rv = src.receive(i, &op.a)?;
        let frame = src.frame(i);
        let full = link_matrix(cfg, sc.sigs, src.taps(i), frame);
        let re = full.block(0, own.start, np * m, cols);
        let mut t = rv.isi.add(&rv.noise)?;
        if mode == Mode::Ipc {
            let own_sig = re.mul_vec(&a_sel)?;
            t = t.add(&rv.signal.sub(&own_sig)?)?;
        }
        let c_num = frame.b[k].conj() - w.dot(&t);
        let c_den = w.dot(&re.mul_vec(&beta)?);
        num_re.add_scaled(c_num, &re)?;
        num_t.axpy(c_num, &t);
        den_re.add_scaled(c_den, &re)?;
        den_t.axpy(c_den, &t);
    }
    let inv = C64::new(1.0 / n_mc.max(1) as f64, 0.0);
    num_re.scale_mut(inv);
    den_re.scale_mut(inv);
    num_t.scale_mut(inv);
    den_t.scale_mut(inv);
    Ok(ConvexityForms {
        numerator: hermitian_part(&structured_block(&num_re, &num_t)?),
        denominator: hermitian_part(&structured_block(&den_re, &den_t)?),
    })
}

/// Single-draw probe for user `k`, exposing the literal block structure.
pub fn probe(mode: Mode, sc: Scenario<'_>, op: &OperatingPoint, k: usize, seed: u64) -> Result<ConvexityProbe> {
    let cfg = sc.cfg;
    let np = cfg.phases();
    let mut src = PacketSource::new(cfg, sc.sigs, sc.channel, sc.powers, 1, ChaCha8Rng::seed_from_u64(seed))?;
    let rv = src.receive(0, &op.a)?;
    let full = link_matrix(cfg, sc.sigs, src.taps(0), src.frame(0));
    let own = match mode {
        Mode::Gpc => 0..cfg.links(),
        Mode::Ipc => k * np..(k + 1) * np,
    };
    let a_sel: CVector = op.a.as_slice()[own.clone()].iter().copied().collect();
    let re = full.block(0, own.start, full.rows(), own.len());
    let mut t = rv.isi.add(&rv.noise)?;
    if mode == Mode::Ipc {
        t = t.add(&rv.signal.sub(&re.mul_vec(&a_sel)?)?)?;
    }
    let w = op.w.col(k);
    let q: CVector = w.iter().copied().chain(a_sel.conj().iter().copied()).collect();
    Ok(ConvexityProbe {
        q,
        u_s: structured_block(&re, &CVector::zeros(re.rows()))?,
        u_i: structured_block(&CMatrix::zeros(re.rows(), re.cols()), &t)?,
        beta: pinv_rank_one(&a_sel),
    })
}

/// Power floor above which the convexity conditions hold, taken as the
/// largest per-user estimate at the equal-power MMSE operating point.
pub fn convexity_bound<R: Rng + ?Sized>(
    mode: Mode,
    sc: Scenario<'_>,
    n_probes: usize,
    n_mc: usize,
    rng: &mut R,
) -> Result<BoundEstimate> {
    if n_probes < 10 || n_mc < 1000 {
        return Err(Error::InvalidConfig(
            "need at least 10 probes and 1000 Monte Carlo draws".into(),
        ));
    }
    let model = LinkModel::new(sc.cfg, sc.sigs, &sc.channel.taps, sc.powers)?;
    let alloc = PowerAllocation::equal(sc.powers, sc.cfg.phases(), mode);
    let rx = model.filter(&alloc.a)?;
    let op = OperatingPoint { w: rx.w, a: alloc.a };
    let mut worst: Option<BoundEstimate> = None;
    let mut excluded = 0.0;
    let mut defined = 0usize;
    for k in 0..sc.cfg.users {
        let forms = convexity_forms(mode, sc, &op, k, n_mc, rng.random())?;
        match bound_from_forms(&forms, n_probes, rng) {
            Ok(b) => {
                excluded += b.excluded_fraction;
                defined += 1;
                if worst.as_ref().is_none_or(|w| b.bound > w.bound) {
                    worst = Some(b);
                }
            }
            Err(Error::BoundUndefined) => excluded += 1.0,
            Err(e) => return Err(e),
        }
    }
    let mut out = worst.ok_or(Error::BoundUndefined)?;
    out.excluded_fraction = excluded / sc.cfg.users as f64;
    out.probes = n_probes * defined;
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct InvarianceReport {
    pub costs: Vec<f64>,
    pub iterations: Vec<usize>,
    /// Largest pairwise difference of final costs.
    pub cost_spread: f64,
    /// Largest pairwise allocation distance after removing a common phase.
    pub allocation_spread: f64,
}

/// Runs the alternating design to convergence from `n_inits` random points
/// on the constraint sphere.
pub fn init_invariance_test<R: Rng + ?Sized>(
    mode: Mode,
    model: &LinkModel,
    powers: &[f64],
    n_inits: usize,
    tol: f64,
    max_iters: usize,
    rng: &mut R,
) -> Result<InvarianceReport> {
    let inits = (0..n_inits)
        .map(|_| PowerAllocation::random(powers, model.phases(), mode, rng))
        .collect::<Result<Vec<_>>>()?;
    invariance_from(mode, model, &inits, tol, max_iters)
}

/// As [`init_invariance_test`] with caller-chosen starting points.
pub fn invariance_from(
    mode: Mode,
    model: &LinkModel,
    inits: &[PowerAllocation],
    tol: f64,
    max_iters: usize,
) -> Result<InvarianceReport> {
    if inits.len() < 2 {
        return Err(Error::InvalidConfig("need at least two initializations".into()));
    }
    let mut costs = Vec::new();
    let mut iterations = Vec::new();
    let mut finals = Vec::new();
    for init in inits {
        let (rx, alloc, it) =
            alternate_to_convergence(model, mode, init, LambdaPolicy::MatchConstraint, tol, max_iters)?;
        costs.push(rx.mse.iter().sum::<f64>());
        iterations.push(it);
        finals.push(alloc.a);
    }
    let mut cost_spread: f64 = 0.0;
    let mut allocation_spread: f64 = 0.0;
    for i in 0..finals.len() {
        for j in i + 1..finals.len() {
            cost_spread = cost_spread.max((costs[i] - costs[j]).abs());
            let aligned = phase_align(&finals[i], &finals[j]);
            allocation_spread = allocation_spread.max(finals[i].sub(&aligned)?.norm2());
        }
    }
    Ok(InvarianceReport {
        costs,
        iterations,
        cost_spread,
        allocation_spread,
    })
}

/// Scales every budget so that the total reaches `target`, leaving the
/// relative spread between users unchanged.
pub fn scale_powers(powers: &[f64], target: f64) -> Vec<f64> {
    let total: f64 = powers.iter().sum();
    if total <= 0.0 {
        return powers.to_vec();
    }
    powers.iter().map(|p| p * target / total).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sigmodel::{build_signatures, draw_user_powers, SignatureSet};

    fn rng(s: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(s)
    }

    fn toy() -> (SystemConfig, SignatureSet, ChannelSet) {
        let cfg = SystemConfig {
            users: 1,
            processing_gain: 4,
            paths: 1,
            relays: 1,
            noise_var: 0.0,
            ..SystemConfig::default()
        };
        let code = CVector::from_real(&[0.5, 0.5, 0.5, 0.5]);
        let sigs = SignatureSet::from_codes(vec![code], 1, 1).unwrap();
        let one = CVector::from_real(&[1.0]);
        let ch = ChannelSet::from_taps(LinkTaps {
            dest: vec![vec![one.clone(), CVector::from_real(&[0.8])]],
            relay_in: vec![vec![one]],
        });
        (cfg, sigs, ch)
    }

    #[test]
    fn link_matrix_reproduces_signal() {
        let cfg = SystemConfig::default();
        let mut r = rng(1);
        let sigs = build_signatures(&cfg, &mut r).unwrap();
        let ch = ChannelSet::draw_static(&cfg, &mut r);
        let powers = draw_user_powers(&cfg, &mut r);
        let a = crate::sigmodel::equal_allocation(&cfg, &powers);
        let mut src = PacketSource::new(&cfg, &sigs, &ch, &powers, 3, rng(2)).unwrap();
        for i in 0..3 {
            let rv = src.receive(i, &a).unwrap();
            let re = link_matrix(&cfg, &sigs, src.taps(i), src.frame(i));
            assert!(re.mul_vec(&a).unwrap().sub(&rv.signal).unwrap().norm2() < 1e-12);
        }
    }

    #[test]
    fn block_shapes_and_quadratic_form() {
        let cfg = SystemConfig::default();
        let mut r = rng(3);
        let sigs = build_signatures(&cfg, &mut r).unwrap();
        let ch = ChannelSet::draw_static(&cfg, &mut r);
        let powers = draw_user_powers(&cfg, &mut r);
        let model = LinkModel::new(&cfg, &sigs, &ch.taps, &powers).unwrap();
        let alloc = PowerAllocation::equal(&powers, 3, Mode::Gpc);
        let op = OperatingPoint {
            w: model.filter(&alloc.a).unwrap().w,
            a: alloc.a,
        };
        let sc = Scenario {
            cfg: &cfg,
            sigs: &sigs,
            channel: &ch,
            powers: &powers,
        };
        let p = probe(Mode::Gpc, sc, &op, 2, 9).unwrap();
        let n = cfg.phases() * (cfg.window_len() + cfg.users);
        assert_eq!(p.u_s.shape(), (n, n));
        assert_eq!(p.u_i.shape(), (n, n));
        assert_eq!(p.q.len(), n);
        let pi = probe(Mode::Ipc, sc, &op, 2, 9).unwrap();
        let ni = cfg.phases() * (cfg.window_len() + 1);
        assert_eq!(pi.u_s.shape(), (ni, ni));
        // With q = [w; a*] the signal block gives wᴴ ℜ a*.
        let u = p.u_s.mul_vec(&p.q).unwrap();
        let direct = p.q.dot(&u);
        let w = op.w.col(2);
        let re = p.u_s.block(0, 54, 54, 24);
        let expect = w.dot(&re.mul_vec(&op.a.conj()).unwrap());
        assert!((direct - expect).norm() < 1e-10);
        assert!((pinv_rank_one(&op.a).dot(&op.a).re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bound_is_scale_invariant() {
        let mut r = rng(4);
        let n = 6;
        let g = CMatrix::from_fn(n, n, |_, _| complex_gaussian(&mut r, 1.0));
        let h = CMatrix::from_fn(n, n, |_, _| complex_gaussian(&mut r, 1.0));
        let mut d = crate::linalg::gemm_nh(&h, &h).unwrap();
        d.add_diag(0.1);
        let forms = ConvexityForms {
            numerator: hermitian_part(&g),
            denominator: d,
        };
        let scaled = ConvexityForms {
            numerator: forms.numerator.scale(C64::new(3.7, 0.0)),
            denominator: forms.denominator.scale(C64::new(3.7, 0.0)),
        };
        let a = bound_from_forms(&forms, 50, &mut rng(5)).unwrap();
        let b = bound_from_forms(&scaled, 50, &mut rng(5)).unwrap();
        assert!((a.bound - b.bound).abs() <= 1e-9 * a.bound.abs().max(1.0));
        assert_eq!(a.excluded_fraction, b.excluded_fraction);
    }

    #[test]
    fn negative_definite_denominator_is_undefined() {
        let forms = ConvexityForms {
            numerator: CMatrix::identity(4),
            denominator: CMatrix::scaled_identity(4, -1.0),
        };
        assert!(matches!(
            bound_from_forms(&forms, 20, &mut rng(6)),
            Err(Error::BoundUndefined)
        ));
    }

    #[test]
    fn definite_forms_reach_generalized_eigenvalue() {
        let n = 2;
        let forms = ConvexityForms {
            numerator: CMatrix::diag(&CVector::from_real(&[3.0, 1.0])),
            denominator: CMatrix::identity(n),
        };
        let b = bound_from_forms(&forms, 10, &mut rng(7)).unwrap();
        assert!((b.bound - 3.0).abs() < 1e-6, "{}", b.bound);
        assert_eq!(b.excluded_fraction, 0.0);
    }

    #[test]
    fn toy_bound_exists_and_inits_agree() {
        let (cfg, sigs, ch) = toy();
        let powers = [1.0];
        let sc = Scenario {
            cfg: &cfg,
            sigs: &sigs,
            channel: &ch,
            powers: &powers,
        };
        let est = convexity_bound(Mode::Gpc, sc, 20, 1000, &mut rng(8)).unwrap();
        assert!(est.bound.is_finite());
        let p = scale_powers(&powers, est.bound.max(1.0) * 1.1);
        let cfg_p = SystemConfig {
            noise_var: 1e-2,
            ..cfg.clone()
        };
        let model = LinkModel::new(&cfg_p, &sigs, &ch.taps, &p).unwrap();
        let rep = init_invariance_test(Mode::Gpc, &model, &p, 5, 1e-13, 500, &mut rng(9)).unwrap();
        assert!(rep.cost_spread <= 1e-6, "{rep:?}");
    }

    #[test]
    fn identical_inits_have_zero_spread() {
        let (cfg, sigs, ch) = toy();
        let cfg = SystemConfig { noise_var: 0.1, ..cfg };
        let model = LinkModel::new(&cfg, &sigs, &ch.taps, &[1.0]).unwrap();
        let init = PowerAllocation::random(&[1.0], 2, Mode::Ipc, &mut rng(10)).unwrap();
        let rep = invariance_from(Mode::Ipc, &model, &[init.clone(), init], 1e-12, 100).unwrap();
        assert_eq!(rep.cost_spread, 0.0);
        assert_eq!(rep.allocation_spread, 0.0);
    }

    #[test]
    fn bound_estimate_is_deterministic() {
        let (cfg, sigs, ch) = toy();
        let sc = Scenario {
            cfg: &cfg,
            sigs: &sigs,
            channel: &ch,
            powers: &[1.0],
        };
        let a = convexity_bound(Mode::Ipc, sc, 10, 1000, &mut rng(11)).unwrap();
        let b = convexity_bound(Mode::Ipc, sc, 10, 1000, &mut rng(11)).unwrap();
        assert_eq!(a, b);
    }
}
