//! Monte Carlo experiments over a scenario grid, CSV output and charts.

mod plot;

use std::fmt;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use plot::{emit_plot, render_svg, PlotKind, Table};

use crate::adaptive_gpc::{self, score, AdaptiveOptions};
use crate::adaptive_ipc;
use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::feedback::{FeedbackLink, QuantMode, DEFAULT_BITS};
use crate::linalg::CVector;
use crate::metrics::{complexity_count, mean_ci95, normalized_throughput, Algorithm, Dims, OpCount, PacketResult};
use crate::mmse::{alternate, LambdaPolicy, LinkModel, Mode, PowerAllocation};
use crate::sigmodel::{build_signatures, draw_user_powers, equal_allocation, PacketSource, SignatureSet, SystemConfig};

/// The four compared schemes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    /// Direct links only, equal power.
    Ncis,
    /// Relays with the budget split equally over the hops.
    Cis,
    JpaisGpc,
    JpaisIpc,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::Ncis, Scheme::Cis, Scheme::JpaisGpc, Scheme::JpaisIpc];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Ncis => "NCIS",
            Scheme::Cis => "CIS",
            Scheme::JpaisGpc => "JPAIS-GPC",
            Scheme::JpaisIpc => "JPAIS-IPC",
        }
    }

    pub fn parse(s: &str) -> Result<Scheme> {
        let key: String = s
            .trim()
            .to_ascii_lowercase()
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect();
        match key.as_str() {
            "ncis" => Ok(Scheme::Ncis),
            "cis" => Ok(Scheme::Cis),
            "jpaisgpc" | "gpc" => Ok(Scheme::JpaisGpc),
            "jpaisipc" | "ipc" => Ok(Scheme::JpaisIpc),
            _ => Err(Error::UnknownAlgorithm(s.to_string())),
        }
    }

    /// Recursions counted in the complexity columns.
    pub fn algorithm(self) -> Algorithm {
        match self {
            Scheme::Ncis => Algorithm::NcisUplink,
            Scheme::Cis => Algorithm::CisUplink,
            Scheme::JpaisGpc => Algorithm::JpaisGpc,
            Scheme::JpaisIpc => Algorithm::JpaisIpc,
        }
    }

    fn optimizes(self) -> Option<Mode> {
        match self {
            Scheme::JpaisGpc => Some(Mode::Gpc),
            Scheme::JpaisIpc => Some(Mode::Ipc),
            _ => None,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    /// Receivers and allocations from the exact second-order statistics.
    #[default]
    Mmse,
    /// Recursive estimation from training and decisions.
    Adaptive,
}

impl std::str::FromStr for RunMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mmse" => Ok(RunMode::Mmse),
            "adaptive" => Ok(RunMode::Adaptive),
            _ => Err(Error::InvalidConfig(format!(
                "unknown mode `{s}` (expected mmse or adaptive)"
            ))),
        }
    }
}

/// A scenario grid, the schemes to run on it and the Monte Carlo settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    /// Parameters not swept by the grid.
    pub system: SystemConfig,
    pub snr_db: Vec<f64>,
    pub users: Vec<usize>,
    pub relays: Vec<usize>,
    pub doppler: Vec<f64>,
    /// Feedback bit error probabilities; only read by feedback experiments.
    pub p_e: Vec<f64>,
    pub algorithms: Vec<String>,
    pub mode: RunMode,
    pub runs: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Alternation rounds of the MMSE schemes.
    pub mmse_iters: usize,
    pub feedback_bits: usize,
    pub quantization: QuantMode,
    /// First symbol counted in the BER; the training length when absent.
    pub ber_start: Option<usize>,
    /// Under fading, MMSE receivers are recomputed whenever the channel has
    /// advanced by this many Doppler cycles (at least once per symbol).
    pub refresh_cycles: f64,
    /// Symbols per bin of the convergence output.
    pub convergence_bin: usize,
    pub ipc_shared_filter: bool,
    pub adaptive: AdaptiveOptions,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            name: "experiment".into(),
            system: SystemConfig::default(),
            snr_db: vec![15.0],
            users: vec![8],
            relays: vec![2],
            doppler: vec![0.0],
            p_e: vec![0.0],
            algorithms: Scheme::ALL.iter().map(|s| s.name().to_string()).collect(),
            mode: RunMode::Mmse,
            runs: 200,
            seed: 1,
            output_dir: PathBuf::from("results"),
            mmse_iters: 2,
            feedback_bits: DEFAULT_BITS,
            quantization: QuantMode::Magnitude,
            ber_start: None,
            refresh_cycles: 2e-3,
            convergence_bin: 50,
            ipc_shared_filter: true,
            adaptive: AdaptiveOptions::default(),
        }
    }
}

pub const PRESETS: [&str; 5] = ["fig5", "fig3", "fig6-fdt", "fig-newfig", "fig7"];

/// Runs used by `--paper-scale`.
pub const PAPER_RUNS: usize = 1000;

impl ExperimentSpec {
    pub fn preset(name: &str) -> Result<Self> {
        let base = ExperimentSpec {
            name: name.to_string(),
            ..ExperimentSpec::default()
        };
        let spec = match name {
            "fig5" => ExperimentSpec {
                users: vec![2, 4, 6, 8, 10, 12, 14, 16],
                relays: vec![1, 2],
                snr_db: vec![15.0],
                ..base
            },
            "fig3" => ExperimentSpec {
                mode: RunMode::Adaptive,
                snr_db: vec![12.0],
                ..base
            },
            "fig6-fdt" => ExperimentSpec {
                doppler: vec![1e-5, 1e-4, 1e-3, 1e-2],
                relays: vec![2, 4],
                algorithms: vec!["CIS".into(), "JPAIS-GPC".into(), "JPAIS-IPC".into()],
                ..base
            },
            "fig-newfig" => ExperimentSpec {
                snr_db: (0..=10).map(|i| 2.0 * i as f64).collect(),
                relays: vec![1, 2],
                ..base
            },
            "fig7" => ExperimentSpec {
                p_e: vec![0.0, 1e-4, 1e-3, 1e-2, 1e-1],
                algorithms: vec!["CIS".into(), "JPAIS-GPC".into(), "JPAIS-IPC".into()],
                ..base
            },
            _ => {
                return Err(Error::InvalidConfig(format!(
                    "unknown preset `{name}` (known: {})",
                    PRESETS.join(", ")
                )))
            }
        };
        Ok(spec)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn schemes(&self) -> Result<Vec<Scheme>> {
        let mut out = Vec::new();
        for name in &self.algorithms {
            let s = Scheme::parse(name)?;
            if !out.contains(&s) {
                out.push(s);
            }
        }
        Ok(out)
    }

    /// Checks everything that can be checked before simulating.
    pub fn validate(&self) -> Result<()> {
        let schemes = self.schemes()?;
        let empty = |what: &str| Err(Error::EmptyGrid(format!("no {what} values")));
        if schemes.is_empty() {
            return empty("algorithm");
        }
        if self.snr_db.is_empty() {
            return empty("SNR");
        }
        if self.users.is_empty() {
            return empty("user-count");
        }
        if self.relays.is_empty() {
            return empty("relay-count");
        }
        if self.doppler.is_empty() {
            return empty("fdT");
        }
        if self.p_e.is_empty() {
            return empty("p_e");
        }
        if self.runs == 0 {
            return Err(Error::InvalidConfig("at least one run is required".into()));
        }
        if self.mmse_iters == 0 {
            return Err(Error::InvalidConfig("at least one MMSE iteration is required".into()));
        }
        if !(self.refresh_cycles > 0.0) {
            return Err(Error::InvalidConfig("refresh_cycles must be positive".into()));
        }
        if let Some(&p) = self.p_e.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidConfig(format!(
                "bit error probability {p} outside [0, 1]"
            )));
        }
        if !(1..=16).contains(&self.feedback_bits) {
            return Err(Error::InvalidConfig("bits per coefficient must lie in 1..=16".into()));
        }
        for p in self.grid(true) {
            p.config(self).validate()?;
        }
        Ok(())
    }

    /// Grid points in output order. Without `feedback` the `p_e` axis is
    /// collapsed to error-free feedback.
    pub fn grid(&self, feedback: bool) -> Vec<GridPoint> {
        let pes = if feedback { self.p_e.clone() } else { vec![0.0] };
        let mut out = Vec::new();
        for &users in &self.users {
            for &relays in &self.relays {
                for &snr_db in &self.snr_db {
                    for &doppler in &self.doppler {
                        for &p_e in &pes {
                            out.push(GridPoint {
                                users,
                                relays,
                                snr_db,
                                doppler,
                                p_e,
                            });
                        }
                    }
                }
            }
        }
        out
    }

    fn ber_start(&self, cfg: &SystemConfig) -> usize {
        self.ber_start.unwrap_or(cfg.training_len).min(cfg.packet_len)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridPoint {
    pub users: usize,
    pub relays: usize,
    pub snr_db: f64,
    pub doppler: f64,
    pub p_e: f64,
}

impl GridPoint {
    pub fn config(&self, spec: &ExperimentSpec) -> SystemConfig {
        SystemConfig {
            users: self.users,
            relays: self.relays,
            doppler: self.doppler,
            seed: spec.seed,
            ..spec.system.clone()
        }
        .with_snr_db(self.snr_db)
    }
}

/// Per-run metrics of one scheme at one grid point.
#[derive(Clone, Debug, PartialEq)]
pub struct RunOutcome {
    pub ber: f64,
    pub mi: f64,
    pub mi_unscaled: f64,
    pub nt: f64,
    pub errors: Vec<u32>,
    pub bits_per_symbol: usize,
}

impl RunOutcome {
    fn from_packet(res: &PacketResult, phases: usize, packet_len: usize) -> Self {
        let ber = res.ber();
        RunOutcome {
            ber,
            mi: res.mutual_information(phases),
            mi_unscaled: res.mutual_information(1),
            nt: normalized_throughput(ber, 1.0, packet_len, 4),
            errors: res.errors.clone(),
            bits_per_symbol: res.bits_per_symbol,
        }
    }
}

/// All runs of one scheme at one grid point.
#[derive(Clone, Debug, PartialEq)]
pub struct PointResult {
    pub point: GridPoint,
    pub scheme: Scheme,
    pub seed: u64,
    pub ber: Vec<f64>,
    pub mi: Vec<f64>,
    pub mi_unscaled: Vec<f64>,
    pub nt: Vec<f64>,
    /// Bit errors per symbol index summed over runs.
    pub symbol_errors: Vec<u64>,
    pub bits_per_symbol: usize,
    pub ops: OpCount,
}

impl PointResult {
    pub fn runs(&self) -> usize {
        self.ber.len()
    }

    pub fn ber_ci(&self) -> (f64, f64) {
        mean_ci95(&self.ber)
    }

    pub fn mean_ber(&self) -> f64 {
        self.ber_ci().0
    }

    /// BER over symbols `from..to`, pooled over runs.
    pub fn window_ber(&self, from: usize, to: usize) -> f64 {
        let to = to.min(self.symbol_errors.len());
        if from >= to {
            return 0.0;
        }
        let errs: u64 = self.symbol_errors[from..to].iter().sum();
        errs as f64 / ((to - from) * self.bits_per_symbol * self.runs()) as f64
    }

    fn row(&self) -> CsvRow {
        let (ber, ber_ci95) = self.ber_ci();
        CsvRow {
            algorithm: self.scheme.name().to_string(),
            users: self.point.users,
            n_r: self.point.relays,
            snr_db: self.point.snr_db,
            doppler: self.point.doppler,
            p_e: self.point.p_e,
            seed_block: format!("{}+{}", self.seed, self.runs()),
            ber,
            ber_ci95,
            mi: mean_ci95(&self.mi).0,
            mi_unscaled: mean_ci95(&self.mi_unscaled).0,
            nt: mean_ci95(&self.nt).0,
            adds: self.ops.adds,
            mults: self.ops.mults,
        }
    }
}

/// Paired per-run differences `a − b` with their mean and 95% half-width.
pub fn paired_difference(a: &PointResult, b: &PointResult) -> Result<(f64, f64)> {
    if a.runs() != b.runs() {
        return Err(crate::error::dim_err("paired runs", a.runs(), b.runs()));
    }
    let d: Vec<f64> = a.ber.iter().zip(&b.ber).map(|(x, y)| x - y).collect();
    Ok(mean_ci95(&d))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub algorithm: String,
    #[serde(rename = "K")]
    pub users: usize,
    pub n_r: usize,
    #[serde(rename = "SNR")]
    pub snr_db: f64,
    #[serde(rename = "fdT")]
    pub doppler: f64,
    pub p_e: f64,
    /// `seed+runs`: the base seed and the number of consecutive runs drawn
    /// from it.
    pub seed_block: String,
    pub ber: f64,
    pub ber_ci95: f64,
    /// Mean mutual information with the `1/n_p` slot penalty.
    pub mi: f64,
    pub mi_unscaled: f64,
    pub nt: f64,
    pub adds: u64,
    pub mults: u64,
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub spec: ExperimentSpec,
    pub points: Vec<PointResult>,
}

impl ExperimentResult {
    pub fn get(&self, scheme: Scheme, pred: impl Fn(&GridPoint) -> bool) -> Option<&PointResult> {
        self.points.iter().find(|p| p.scheme == scheme && pred(&p.point))
    }

    pub fn rows(&self) -> Vec<CsvRow> {
        self.points.iter().map(PointResult::row).collect()
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in self.rows() {
            w.serialize(row)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Per-bin BER against symbol index, pooled over runs.
    pub fn convergence_csv(&self) -> Result<String> {
        let bin = self.spec.convergence_bin.max(1);
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["algorithm", "K", "n_r", "SNR", "fdT", "p_e", "symbol", "ber"])?;
        for p in &self.points {
            let n = p.symbol_errors.len();
            for start in (0..n).step_by(bin) {
                let end = (start + bin).min(n);
                w.write_record([
                    p.scheme.name().to_string(),
                    p.point.users.to_string(),
                    p.point.relays.to_string(),
                    p.point.snr_db.to_string(),
                    p.point.doppler.to_string(),
                    p.point.p_e.to_string(),
                    end.to_string(),
                    p.window_ber(start, end).to_string(),
                ])?;
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Writes `<name>.csv` (and the convergence table for adaptive runs)
    /// into the output directory.
    pub fn write(&self) -> Result<Vec<PathBuf>> {
        let dir = &self.spec.output_dir;
        std::fs::create_dir_all(dir)?;
        let main = dir.join(format!("{}.csv", self.spec.name));
        std::fs::write(&main, self.to_csv()?)?;
        let mut out = vec![main];
        if self.spec.mode == RunMode::Adaptive {
            let conv = dir.join(format!("{}_convergence.csv", self.spec.name));
            std::fs::write(&conv, self.convergence_csv()?)?;
            out.push(conv);
        }
        Ok(out)
    }
}

/// Independent stream for `(seed, run, purpose)`.
pub fn stream(seed: u64, run: u64, purpose: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&run.to_le_bytes());
    key[16..24].copy_from_slice(&purpose.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

const SCENARIO: u64 = 0;
const SYMBOLS: u64 = 1;
const FEEDBACK: u64 = 2;

/// Codes, channels and budgets of one run, with the relay-free view used by
/// the non-cooperative scheme.
pub struct Scenario {
    pub cfg: SystemConfig,
    pub sigs: SignatureSet,
    pub channel: ChannelSet,
    pub powers: Vec<f64>,
    pub direct_cfg: SystemConfig,
    pub direct_sigs: SignatureSet,
    pub direct_channel: ChannelSet,
}

impl Scenario {
    pub fn draw(cfg: &SystemConfig, seed: u64, run: u64) -> Result<Self> {
        let mut rng = stream(seed, run, SCENARIO);
        let sigs = build_signatures(cfg, &mut rng)?;
        let channel = if cfg.doppler > 0.0 {
            ChannelSet::draw_fading(cfg, &mut rng)
        } else {
            ChannelSet::draw_static(cfg, &mut rng)
        };
        let powers = draw_user_powers(cfg, &mut rng);
        let direct_cfg = SystemConfig {
            relays: 0,
            ..cfg.clone()
        };
        let direct_sigs = SignatureSet::from_codes(sigs.codes.clone(), cfg.paths, 0)?;
        let direct_channel = channel.direct_only();
        Ok(Scenario {
            cfg: cfg.clone(),
            sigs,
            channel,
            powers,
            direct_cfg,
            direct_sigs,
            direct_channel,
        })
    }

    fn source(&self, direct: bool, seed: u64, run: u64) -> Result<PacketSource<'_>> {
        let rng = stream(seed, run, SYMBOLS);
        if direct {
            PacketSource::new(
                &self.direct_cfg,
                &self.direct_sigs,
                &self.direct_channel,
                &self.powers,
                self.cfg.packet_len,
                rng,
            )
        } else {
            PacketSource::new(
                &self.cfg,
                &self.sigs,
                &self.channel,
                &self.powers,
                self.cfg.packet_len,
                rng,
            )
        }
    }
}

/// Plays a packet through fixed transmit amplitudes `sent` and MMSE
/// receivers designed for `belief`. Under fading the receivers follow the
/// channel; the amplitudes do not.
#[allow(clippy::too_many_arguments)]
fn play_mmse(
    cfg: &SystemConfig,
    sigs: &SignatureSet,
    src: &mut PacketSource<'_>,
    powers: &[f64],
    belief: &CVector,
    sent: &CVector,
    refresh: usize,
    skip: usize,
) -> Result<PacketResult> {
    let n = src.len();
    let users: Vec<usize> = (0..cfg.users).collect();
    let mut result = PacketResult::new(n, 2 * cfg.users, skip, cfg.users);
    let mut w = LinkModel::new(cfg, sigs, src.taps(0), powers)?.receiver(belief)?;
    let fading = cfg.doppler > 0.0;
    for i in 0..n {
        if fading && i > 0 && i % refresh == 0 {
            w = LinkModel::new(cfg, sigs, src.taps(i), powers)?.receiver(belief)?;
        }
        let r = src.receive(i, sent)?.r;
        let y = w.herm_mul_vec(&r)?;
        score(&mut result, src, i, &y, &users);
    }
    Ok(result)
}

fn refresh_interval(spec: &ExperimentSpec, cfg: &SystemConfig) -> usize {
    if cfg.doppler > 0.0 {
        ((spec.refresh_cycles / cfg.doppler).floor() as usize).max(1)
    } else {
        usize::MAX
    }
}

/// One run of every scheme at one grid point, in `schemes` order.
pub fn simulate_run(
    spec: &ExperimentSpec,
    point: &GridPoint,
    schemes: &[Scheme],
    feedback: bool,
    run: u64,
) -> Result<Vec<RunOutcome>> {
    let cfg = point.config(spec);
    let sc = Scenario::draw(&cfg, spec.seed, run)?;
    let skip = spec.ber_start(&cfg);
    let refresh = refresh_interval(spec, &cfg);
    let link = |scheme: Scheme| {
        FeedbackLink::new(
            spec.feedback_bits,
            spec.quantization,
            point.p_e,
            stream(spec.seed, run, FEEDBACK + scheme as u64),
        )
    };
    let model = || LinkModel::new(&cfg, &sc.sigs, &sc.channel.taps, &sc.powers);
    let mut out = Vec::with_capacity(schemes.len());
    for &scheme in schemes {
        let direct = scheme == Scheme::Ncis;
        let (rcfg, rsigs, phases) = if direct {
            (&sc.direct_cfg, &sc.direct_sigs, 1)
        } else {
            (&sc.cfg, &sc.sigs, cfg.phases())
        };
        let mut src = sc.source(direct, spec.seed, run)?;
        let mut res = match spec.mode {
            RunMode::Mmse => {
                let (belief, sent) = match scheme.optimizes() {
                    None => {
                        let a = equal_allocation(rcfg, &sc.powers);
                        (a.clone(), a)
                    }
                    Some(mode) => {
                        let init = PowerAllocation::equal(&sc.powers, cfg.phases(), mode);
                        let alt = alternate(&model()?, mode, spec.mmse_iters, &init, LambdaPolicy::Fixed(cfg.lambda))?;
                        if feedback {
                            let d = link(scheme).deliver(&alt.allocation)?;
                            (d.belief.a, d.applied.a)
                        } else {
                            (alt.allocation.a.clone(), alt.allocation.a)
                        }
                    }
                };
                play_mmse(rcfg, rsigs, &mut src, &sc.powers, &belief, &sent, refresh, skip)?
            }
            RunMode::Adaptive => {
                let frozen = AdaptiveOptions {
                    freeze_allocation: true,
                    ..spec.adaptive.clone()
                };
                let all: Vec<usize> = (0..cfg.users).collect();
                match (scheme, feedback) {
                    (Scheme::Ncis | Scheme::Cis, _) => {
                        adaptive_gpc::run_packet(rcfg, rsigs, &mut src, &sc.powers, &frozen)?
                    }
                    (Scheme::JpaisGpc, false) => {
                        adaptive_gpc::run_packet(rcfg, rsigs, &mut src, &sc.powers, &spec.adaptive)?
                    }
                    (Scheme::JpaisGpc, true) => adaptive_gpc::run_packet_with_feedback(
                        rcfg,
                        rsigs,
                        &mut src,
                        &sc.powers,
                        &spec.adaptive,
                        &mut link(scheme),
                    )?,
                    (Scheme::JpaisIpc, false) => adaptive_ipc::run_packet(
                        rcfg,
                        rsigs,
                        &mut src,
                        &sc.powers,
                        &all,
                        spec.ipc_shared_filter,
                        &spec.adaptive,
                    )?,
                    (Scheme::JpaisIpc, true) => adaptive_ipc::run_packet_with_feedback(
                        rcfg,
                        rsigs,
                        &mut src,
                        &sc.powers,
                        &all,
                        spec.ipc_shared_filter,
                        &spec.adaptive,
                        &mut link(scheme),
                    )?,
                }
            }
        };
        res.skip = skip;
        out.push(RunOutcome::from_packet(&res, phases, cfg.packet_len));
    }
    Ok(out)
}

fn run_grid(spec: &ExperimentSpec, feedback: bool) -> Result<ExperimentResult> {
    spec.validate()?;
    let schemes = spec.schemes()?;
    let mut points = Vec::new();
    for point in spec.grid(feedback) {
        let runs: Vec<Vec<RunOutcome>> = (0..spec.runs as u64)
            .into_par_iter()
            .map(|run| simulate_run(spec, &point, &schemes, feedback, run))
            .collect::<Result<_>>()?;
        for (c, &scheme) in schemes.iter().enumerate() {
            let col: Vec<&RunOutcome> = runs.iter().map(|r| &r[c]).collect();
            let len = col[0].errors.len();
            let mut symbol_errors = vec![0u64; len];
            for o in &col {
                for (acc, &e) in symbol_errors.iter_mut().zip(&o.errors) {
                    *acc += e as u64;
                }
            }
            points.push(PointResult {
                point,
                scheme,
                seed: spec.seed,
                ber: col.iter().map(|o| o.ber).collect(),
                mi: col.iter().map(|o| o.mi).collect(),
                mi_unscaled: col.iter().map(|o| o.mi_unscaled).collect(),
                nt: col.iter().map(|o| o.nt).collect(),
                symbol_errors,
                bits_per_symbol: col[0].bits_per_symbol,
                ops: complexity_count(
                    scheme.algorithm(),
                    Dims::new(
                        point.users,
                        spec.system.processing_gain,
                        spec.system.paths,
                        point.relays,
                    ),
                ),
            });
        }
    }
    Ok(ExperimentResult {
        spec: spec.clone(),
        points,
    })
}

/// Every scheme over the grid with error-free allocation feedback.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    run_grid(spec, false)
}

/// As [`run_experiment`], with each optimized allocation quantized and
/// sent over a BSC for every `p_e` of the grid before the transmitters use
/// it.
pub fn run_feedback_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    run_grid(spec, true)
}

/// Operation counts per symbol for every scheme and `n_r` in `relays`.
pub fn complexity_csv(users: usize, processing_gain: usize, paths: usize, relays: &[usize]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "algorithm",
        "K",
        "N",
        "L",
        "n_r",
        "adds",
        "mults",
        "mult_overhead_vs_CIS",
    ])?;
    for &nr in relays {
        let d = Dims::new(users, processing_gain, paths, nr);
        let cis = complexity_count(Algorithm::CisUplink, d).mults as f64;
        for alg in [
            Algorithm::NcisUplink,
            Algorithm::NcisDownlink,
            Algorithm::CisUplink,
            Algorithm::CisDownlink,
            Algorithm::JpaisGpc,
            Algorithm::JpaisIpc,
        ] {
            let ops = complexity_count(alg, d);
            let base = match alg {
                Algorithm::JpaisIpc | Algorithm::CisDownlink | Algorithm::NcisDownlink => {
                    complexity_count(Algorithm::CisDownlink, d).mults as f64
                }
                _ => cis,
            };
            w.write_record([
                format!("{alg:?}"),
                users.to_string(),
                processing_gain.to_string(),
                paths.to_string(),
                nr.to_string(),
                ops.adds.to_string(),
                ops.mults.to_string(),
                (ops.mults as f64 / base - 1.0).to_string(),
            ])?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
}
