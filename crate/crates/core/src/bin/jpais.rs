use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use jpais::diagnostics::{convexity_bound, init_invariance_test, scale_powers, Scenario as DiagScenario};
use jpais::harness::{
    complexity_csv, emit_plot, run_experiment, run_feedback_experiment, ExperimentSpec, PlotKind, RunMode, Scenario,
    PAPER_RUNS,
};
use jpais::mmse::{LinkModel, Mode};
use jpais::sigmodel::SystemConfig;
use jpais::{Error, Result};

#[derive(Parser)]
#[command(
    name = "jpais",
    version,
    about = "Cooperative DS-CDMA power allocation and interference suppression experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo BER/MI/NT over a scenario grid.
    Run(RunArgs),
    /// As `run`, with allocations sent over a noisy feedback channel.
    Feedback(RunArgs),
    /// Render SVG charts from a result CSV.
    Plot(PlotArgs),
    /// Convexity bound and initialization-invariance check for one scenario.
    Diag(DiagArgs),
    /// Per-symbol operation counts of every algorithm.
    Complexity(ComplexityArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Named experiment: fig5, fig3, fig6-fdt, fig-newfig or fig7.
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// TOML experiment file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    snr: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    users: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    relays: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    fdt: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pe: Option<Vec<f64>>,
    /// Comma-separated subset of NCIS, CIS, JPAIS-GPC, JPAIS-IPC.
    #[arg(long, value_delimiter = ',')]
    algorithms: Option<Vec<String>>,
    /// mmse or adaptive.
    #[arg(long)]
    mode: Option<RunMode>,
    #[arg(long)]
    runs: Option<usize>,
    /// Use the paper's run count.
    #[arg(long, conflicts_with = "runs")]
    paper_scale: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    name: Option<String>,
    /// Also render every chart that applies.
    #[arg(long)]
    plot: bool,
    /// Print the resolved experiment as TOML and exit.
    #[arg(long)]
    print_config: bool,
}

impl RunArgs {
    fn spec(&self) -> Result<ExperimentSpec> {
        let mut spec = match (&self.preset, &self.config) {
            (Some(p), _) => ExperimentSpec::preset(p)?,
            (None, Some(path)) => ExperimentSpec::load(path)?,
            (None, None) => ExperimentSpec::default(),
        };
        if let Some(v) = &self.snr {
            spec.snr_db = v.clone();
        }
        if let Some(v) = &self.users {
            spec.users = v.clone();
        }
        if let Some(v) = &self.relays {
            spec.relays = v.clone();
        }
        if let Some(v) = &self.fdt {
            spec.doppler = v.clone();
        }
        if let Some(v) = &self.pe {
            spec.p_e = v.clone();
        }
        if let Some(v) = &self.algorithms {
            spec.algorithms = v.clone();
        }
        if let Some(m) = self.mode {
            spec.mode = m;
        }
        if let Some(r) = self.runs {
            spec.runs = r;
        }
        if self.paper_scale {
            spec.runs = PAPER_RUNS;
        }
        if let Some(s) = self.seed {
            spec.seed = s;
        }
        if let Some(o) = &self.out {
            spec.output_dir = o.clone();
        }
        if let Some(n) = &self.name {
            spec.name = n.clone();
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Args)]
struct PlotArgs {
    /// Result CSV.
    csv: PathBuf,
    /// Chart kinds; every kind the table supports when omitted.
    #[arg(long, value_delimiter = ',')]
    kind: Vec<String>,
    /// Output directory; the CSV's directory by default.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DiagArgs {
    #[arg(long, default_value_t = 8)]
    users: usize,
    #[arg(long, default_value_t = 2)]
    relays: usize,
    #[arg(long, default_value_t = 12.0)]
    snr: f64,
    /// gpc or ipc.
    #[arg(long, default_value = "gpc")]
    mode: String,
    #[arg(long, default_value_t = 20)]
    probes: usize,
    #[arg(long, default_value_t = 1000)]
    mc: usize,
    /// Random initializations of the invariance check; 0 skips it.
    #[arg(long, default_value_t = 5)]
    inits: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct ComplexityArgs {
    #[arg(long, default_value_t = 8)]
    users: usize,
    #[arg(long, default_value_t = 16)]
    processing_gain: usize,
    #[arg(long, default_value_t = 3)]
    paths: usize,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4")]
    relays: Vec<usize>,
    /// Write the table here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn plot_kinds(spec: &ExperimentSpec, feedback: bool) -> Vec<PlotKind> {
    let mut kinds = vec![];
    if spec.snr_db.len() > 1 {
        kinds.extend([PlotKind::BerSnr, PlotKind::NtSnr, PlotKind::MiSnr]);
    }
    if spec.users.len() > 1 {
        kinds.push(PlotKind::BerUsers);
    }
    if spec.doppler.len() > 1 {
        kinds.push(PlotKind::BerFdt);
    }
    if feedback && spec.p_e.len() > 1 {
        kinds.push(PlotKind::BerPe);
    }
    kinds
}

fn run(args: &RunArgs, feedback: bool) -> Result<()> {
    let spec = args.spec()?;
    if args.print_config {
        print!("{}", spec.to_toml()?);
        return Ok(());
    }
    let res = if feedback {
        run_feedback_experiment(&spec)?
    } else {
        run_experiment(&spec)?
    };
    for path in res.write()? {
        println!("{}", path.display());
    }
    if args.plot {
        let csv = spec.output_dir.join(format!("{}.csv", spec.name));
        for kind in plot_kinds(&spec, feedback) {
            println!("{}", emit_plot(&csv, kind, &spec.output_dir)?.display());
        }
    }
    Ok(())
}

fn plot(args: &PlotArgs) -> Result<()> {
    let out = args
        .out
        .clone()
        .or_else(|| args.csv.parent().map(PathBuf::from))
        .unwrap_or_default();
    if args.kind.is_empty() {
        let mut any = false;
        for kind in PlotKind::ALL {
            match emit_plot(&args.csv, kind, &out) {
                Ok(p) => {
                    any = true;
                    println!("{}", p.display());
                }
                Err(Error::MissingColumn(_)) => {}
                Err(e) => return Err(e),
            }
        }
        if !any {
            return Err(Error::EmptyGrid("no chart kind applies to this table".into()));
        }
        return Ok(());
    }
    for k in &args.kind {
        println!("{}", emit_plot(&args.csv, PlotKind::parse(k)?, &out)?.display());
    }
    Ok(())
}

fn diag(args: &DiagArgs) -> Result<()> {
    let mode = match args.mode.to_ascii_lowercase().as_str() {
        "gpc" => Mode::Gpc,
        "ipc" => Mode::Ipc,
        m => {
            return Err(Error::InvalidConfig(format!(
                "unknown mode `{m}` (expected gpc or ipc)"
            )))
        }
    };
    let cfg = SystemConfig {
        users: args.users,
        relays: args.relays,
        ..SystemConfig::default()
    }
    .with_snr_db(args.snr);
    cfg.validate()?;
    let sc = Scenario::draw(&cfg, args.seed, 0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let view = DiagScenario {
        cfg: &cfg,
        sigs: &sc.sigs,
        channel: &sc.channel,
        powers: &sc.powers,
    };
    let est = convexity_bound(mode, view, args.probes, args.mc, &mut rng)?;
    let total: f64 = sc.powers.iter().sum();
    println!("mode = {mode:?}");
    println!("total power = {total:.6e}");
    println!("estimated bound = {:.6e}", est.bound);
    println!("excluded probe fraction = {:.3}", est.excluded_fraction);
    if args.inits > 0 {
        let powers = if est.bound > total {
            scale_powers(&sc.powers, 1.1 * est.bound)
        } else {
            sc.powers.clone()
        };
        let model = LinkModel::new(&cfg, &sc.sigs, &sc.channel.taps, &powers)?;
        let rep = init_invariance_test(mode, &model, &powers, args.inits, 1e-12, 3000, &mut rng)?;
        println!("invariance power = {:.6e}", powers.iter().sum::<f64>());
        println!("final costs = {:?}", rep.costs);
        println!("cost spread = {:.3e}", rep.cost_spread);
        println!("allocation spread = {:.3e}", rep.allocation_spread);
    }
    Ok(())
}

fn complexity(args: &ComplexityArgs) -> Result<()> {
    let text = complexity_csv(args.users, args.processing_gain, args.paths, &args.relays)?;
    match &args.out {
        Some(path) => {
            if let Some(dir) = path.parent() {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(path, text)?;
            println!("{}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Run(a) => run(a, false),
        Command::Feedback(a) => run(a, true),
        Command::Plot(a) => plot(a),
        Command::Diag(a) => diag(a),
        Command::Complexity(a) => complexity(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
