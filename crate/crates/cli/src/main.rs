//! Command-line front end: simulation runs, key-rate reports, optimized
//! rate-vs-distance curves, and analysis of measured count datasets.
//!
//! Exit codes are a stable contract: 0 success, 2 input error (bad
//! flags, unreadable or malformed files), 3 infeasible key (l = 0).
//! Reference checks (`analyze --against-table1`) exit 1 on mismatch.

mod config;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use qss_core::channel::ChannelParams;
use qss_core::experiment::{self, reference, ExperimentConfig};
use qss_core::montecarlo::{self, DoubleClickPolicy, SimConfig, SimMode};
use qss_core::optimizer::{self, Interval, Objective, Optimum, PxChoice, SearchSpace};
use qss_core::security::{self, KeyResult, ObservedStats, PhaseErrorChain, SecurityEpsilons};

use config::Settings;

const EXIT_OK: u8 = 0;
const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(
    name = "qss",
    version,
    about = "Three-party phase-encoded coherent-state secret sharing: \
             simulation, finite-key analysis and rate optimization"
)]
struct Cli {
    /// Master seed for all stochastic steps.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Write output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// `key = value` config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate N emission rounds and write a counts CSV.
    Simulate(SimulateArgs),
    /// Finite-key report from channel parameters or an observed-stats file.
    Keyrate(KeyrateArgs),
    /// Optimized key rate over a distance grid (CSV rows).
    Curve(CurveArgs),
    /// Optimize the key rate at a single distance.
    Optimize(OptimizeArgs),
    /// Analyze a measured counts CSV against an experiment config.
    Analyze(AnalyzeArgs),
}

/// Channel and source parameters shared by most subcommands.
#[derive(Args, Debug)]
struct ChannelArgs {
    /// Mean photon number per pulse.
    #[arg(long)]
    mu: Option<f64>,
    /// Total channel loss in dB (alpha * length).
    #[arg(long, conflicts_with = "length_km")]
    loss_db: Option<f64>,
    /// Total fiber length between the players in km.
    #[arg(long)]
    length_km: Option<f64>,
    /// Detector efficiency [default 0.56].
    #[arg(long)]
    eta_d: Option<f64>,
    /// Dark count probability per gate [default 1e-8].
    #[arg(long)]
    pd: Option<f64>,
    /// Misalignment error rate [default 0.02].
    #[arg(long)]
    ed: Option<f64>,
    /// Fiber attenuation in dB/km [default 0.167].
    #[arg(long)]
    alpha: Option<f64>,
    /// X-basis probability [default 0.8].
    #[arg(long)]
    px: Option<f64>,
}

impl ChannelArgs {
    /// Resolves to full channel parameters. `need_distance` demands a
    /// --loss-db/--length-km; otherwise length falls back to 0.
    fn resolve(&self, cfg: &Settings, need_distance: bool) -> Result<ChannelParams> {
        let alpha = cfg.f64(self.alpha, "alpha", Some(0.167))?;
        let length_km = if let Some(loss) = self.loss_db {
            if alpha <= 0.0 {
                bail!("--loss-db requires a positive --alpha");
            }
            loss / alpha
        } else if let Some(l) = self.length_km {
            l
        } else if let Some(raw) = cfg.get("loss-db") {
            let loss: f64 = raw
                .parse()
                .with_context(|| format!("config key `loss-db`: invalid number `{raw}`"))?;
            if alpha <= 0.0 {
                bail!("`loss-db` requires a positive alpha");
            }
            loss / alpha
        } else if let Some(raw) = cfg.get("length-km") {
            raw.parse()
                .with_context(|| format!("config key `length-km`: invalid number `{raw}`"))?
        } else if need_distance {
            bail!("missing required distance: pass --loss-db or --length-km");
        } else {
            0.0
        };
        let params = ChannelParams {
            mu: cfg.f64(self.mu, "mu", None)?,
            eta_d: cfg.f64(self.eta_d, "eta-d", Some(0.56))?,
            p_d: cfg.f64(self.pd, "pd", Some(1e-8))?,
            e_d: cfg.f64(self.ed, "ed", Some(0.02))?,
            alpha_db_per_km: alpha,
            length_km,
            p_x: cfg.f64(self.px, "px", Some(0.8))?,
        };
        params.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
        Ok(params)
    }
}

/// Security-parameter flags.
#[derive(Args, Debug)]
struct SecurityArgs {
    /// Uniform value for all four failure probabilities [default 1e-10].
    #[arg(long)]
    eps: Option<f64>,
    /// Correctness failure probability (overrides --eps).
    #[arg(long)]
    eps_c: Option<f64>,
    /// Privacy-amplification failure probability (overrides --eps).
    #[arg(long)]
    eps_pa: Option<f64>,
    /// Phase-error-estimation failure probability (overrides --eps).
    #[arg(long)]
    eps_e: Option<f64>,
    /// Per-application concentration failure probability (overrides --eps).
    #[arg(long)]
    eps_a: Option<f64>,
    /// Error-correction efficiency [default 1.16].
    #[arg(long)]
    fe: Option<f64>,
}

impl SecurityArgs {
    fn epsilons(&self, cfg: &Settings) -> Result<SecurityEpsilons> {
        let uniform = cfg.f64(self.eps, "eps", Some(1e-10))?;
        let eps = SecurityEpsilons {
            eps_c: cfg.f64(self.eps_c, "eps-c", Some(uniform))?,
            eps_pa: cfg.f64(self.eps_pa, "eps-pa", Some(uniform))?,
            eps: cfg.f64(self.eps_e, "eps-e", Some(uniform))?,
            eps_a: cfg.f64(self.eps_a, "eps-a", Some(uniform))?,
        };
        eps.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
        Ok(eps)
    }

    fn fe(&self, cfg: &Settings) -> Result<f64> {
        let fe = cfg.f64(self.fe, "fe", Some(1.16))?;
        if fe < 1.0 {
            bail!("error-correction efficiency must be >= 1, got {fe}");
        }
        Ok(fe)
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Batched,
    PerRound,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    channel: ChannelArgs,
    /// Number of emitted rounds (accepts scientific notation).
    #[arg(long)]
    n: Option<String>,
    /// Sampling mode [default batched].
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
}

#[derive(Args)]
struct KeyrateArgs {
    #[command(flatten)]
    channel: ChannelArgs,
    #[command(flatten)]
    security: SecurityArgs,
    /// Number of emitted rounds (accepts scientific notation).
    #[arg(long)]
    n: Option<String>,
    /// Observed-statistics file (`key = value`: n_x, n_y, m_x, m_y).
    #[arg(long)]
    stats: Option<PathBuf>,
    /// Use this phase-error bound directly instead of the estimation chain.
    #[arg(long)]
    ep: Option<f64>,
}

#[derive(Args)]
struct CurveArgs {
    #[command(flatten)]
    channel: ChannelArgs,
    #[command(flatten)]
    security: SecurityArgs,
    /// Number of emitted rounds per point [default 1e10].
    #[arg(long)]
    n: Option<String>,
    /// First distance in km.
    #[arg(long)]
    from: Option<f64>,
    /// Last distance in km.
    #[arg(long)]
    to: Option<f64>,
    /// Distance step in km.
    #[arg(long)]
    step: Option<f64>,
    /// Lower end of the intensity search range [default 1e-6].
    #[arg(long)]
    mu_min: Option<f64>,
    /// Upper end of the intensity search range [default 0.5].
    #[arg(long)]
    mu_max: Option<f64>,
}

#[derive(Args)]
struct OptimizeArgs {
    #[command(flatten)]
    channel: ChannelArgs,
    #[command(flatten)]
    security: SecurityArgs,
    /// Number of emitted rounds [default 1e10].
    #[arg(long)]
    n: Option<String>,
    /// Lower end of the intensity search range [default 1e-6].
    #[arg(long)]
    mu_min: Option<f64>,
    /// Upper end of the intensity search range [default 0.5].
    #[arg(long)]
    mu_max: Option<f64>,
    /// Maximize the asymptotic rate instead of the finite one.
    #[arg(long)]
    asymptotic: bool,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Counts CSV file to analyze.
    #[arg(long)]
    counts: PathBuf,
    /// Assert the published reference values for this dataset's loss.
    #[arg(long)]
    against_table1: bool,
    #[command(flatten)]
    security: SecurityArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(EXIT_INPUT)
        }
    }
}

fn run(cli: Cli) -> Result<u8> {
    let cfg = match &cli.config {
        Some(path) => Settings::load(path)?,
        None => Settings::default(),
    };
    let seed = cfg.u64_value(cli.seed, "seed", 0)?;
    let mut out = open_output(&cli.out)?;
    let code = match &cli.command {
        Command::Simulate(args) => cmd_simulate(args, &cfg, seed, &mut out)?,
        Command::Keyrate(args) => cmd_keyrate(args, &cfg, &mut out)?,
        Command::Curve(args) => cmd_curve(args, &cfg, seed, &mut out)?,
        Command::Optimize(args) => cmd_optimize(args, &cfg, seed, &mut out)?,
        Command::Analyze(args) => cmd_analyze(args, &cfg, &cli.config, seed, &mut out)?,
    };
    out.flush()?;
    Ok(code)
}

fn open_output(out: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(path) => Box::new(BufWriter::new(File::create(path).with_context(
            || format!("cannot create output file {}", path.display()),
        )?)),
        None => Box::new(BufWriter::new(std::io::stdout())),
    })
}

/// `#`-prefixed header recording the full parameter set, so re-running
/// with these values reproduces the file.
fn write_header(
    out: &mut dyn Write,
    command: &str,
    params: &[(&str, String)],
) -> std::io::Result<()> {
    writeln!(out, "# qss {command} v{VERSION}")?;
    for (key, value) in params {
        writeln!(out, "# {key} = {value}")?;
    }
    Ok(())
}

fn channel_header(params: &ChannelParams) -> Vec<(&'static str, String)> {
    vec![
        ("mu", format!("{:e}", params.mu)),
        ("eta-d", params.eta_d.to_string()),
        ("pd", format!("{:e}", params.p_d)),
        ("ed", params.e_d.to_string()),
        ("alpha", params.alpha_db_per_km.to_string()),
        ("length-km", params.length_km.to_string()),
        ("loss-db", params.loss_db().to_string()),
        ("px", params.p_x.to_string()),
    ]
}

fn security_header(eps: &SecurityEpsilons, fe: f64) -> Vec<(&'static str, String)> {
    vec![
        ("eps-c", format!("{:e}", eps.eps_c)),
        ("eps-pa", format!("{:e}", eps.eps_pa)),
        ("eps-e", format!("{:e}", eps.eps)),
        ("eps-a", format!("{:e}", eps.eps_a)),
        ("fe", fe.to_string()),
    ]
}

// ---------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------

fn cmd_simulate(
    args: &SimulateArgs,
    cfg: &Settings,
    seed: u64,
    out: &mut dyn Write,
) -> Result<u8> {
    let params = args.channel.resolve(cfg, true)?;
    let n_rounds = cfg.count(args.n.clone(), "n", None)?;
    let mode = match args.mode {
        Some(ModeArg::Batched) => SimMode::Batched,
        Some(ModeArg::PerRound) => SimMode::PerRound,
        None => match cfg.get("mode") {
            Some("batched") => SimMode::Batched,
            Some("per-round") => SimMode::PerRound,
            Some(other) => bail!("config key `mode`: unknown mode `{other}`"),
            None => SimMode::Batched,
        },
    };
    let config = SimConfig {
        n_rounds,
        seed,
        mode,
        double_click_policy: DoubleClickPolicy::RandomBit,
    };
    let tally = montecarlo::simulate(&params, &config).map_err(|e| anyhow::anyhow!("{e}"))?;

    let mut header = channel_header(&params);
    header.push(("n", n_rounds.to_string()));
    header.push(("seed", seed.to_string()));
    header.push((
        "mode",
        match mode {
            SimMode::Batched => "batched".into(),
            SimMode::PerRound => "per-round".into(),
        },
    ));
    write_header(out, "simulate", &header)?;
    experiment::write_counts_csv(&tally, out)?;
    Ok(EXIT_OK)
}

// ---------------------------------------------------------------------
// keyrate
// ---------------------------------------------------------------------

fn read_stats_file(path: &PathBuf) -> Result<ObservedStats> {
    let settings = Settings::load(path)?;
    let field = |key: &str| -> Result<u64> {
        settings
            .get(key)
            .with_context(|| format!("stats file {} is missing `{key}`", path.display()))?
            .parse::<u64>()
            .with_context(|| format!("stats file {}: invalid `{key}`", path.display()))
    };
    let stats = ObservedStats {
        n_x: field("n_x")?,
        n_y: field("n_y")?,
        m_x: field("m_x")?,
        m_y: field("m_y")?,
    };
    stats.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
    Ok(stats)
}

fn cmd_keyrate(args: &KeyrateArgs, cfg: &Settings, out: &mut dyn Write) -> Result<u8> {
    let eps = args.security.epsilons(cfg)?;
    let fe = args.security.fe(cfg)?;
    let n_total = cfg.count(args.n.clone(), "n", None)?;

    // observed stats either from a file or as the channel-model expectation
    let (stats, q_mu, mu, mut header) = if let Some(path) = &args.stats {
        let stats = read_stats_file(path)?;
        let px = cfg.f64(args.channel.px, "px", Some(0.8))?;
        let p_key = px * px * px + px * (1.0 - px) * (1.0 - px);
        let q_mu = stats.n_x as f64 / (n_total as f64 * p_key);
        let mu = cfg.f64(
            args.channel.mu,
            "mu",
            if args.ep.is_some() { Some(0.0) } else { None },
        )?;
        let header = vec![
            ("stats", path.display().to_string()),
            ("mu", format!("{mu:e}")),
            ("px", px.to_string()),
        ];
        (stats, q_mu, mu, header)
    } else {
        let params = args.channel.resolve(cfg, true)?;
        let stats = optimizer::expected_stats(&params, n_total);
        let eta = qss_core::channel::transmittance(&params);
        let q_mu = qss_core::channel::gain(params.mu, eta, params.p_d);
        (stats, q_mu, params.mu, channel_header(&params))
    };
    header.push(("n", n_total.to_string()));
    header.extend(security_header(&eps, fe));
    if let Some(ep) = args.ep {
        header.push(("ep", ep.to_string()));
    }
    write_header(out, "keyrate", &header)?;

    if stats.n_x == 0 {
        writeln!(out, "n_x = 0")?;
        writeln!(out, "l = 0")?;
        writeln!(out, "rate_per_pulse = 0")?;
        return Ok(EXIT_INFEASIBLE);
    }
    let ebx = stats.ebx().unwrap_or(0.0);

    let (chain, ep_bar) = match args.ep {
        Some(ep) => {
            if !(0.0..=0.5).contains(&ep) {
                bail!("--ep must lie in [0, 0.5], got {ep}");
            }
            (None, ep)
        }
        None => {
            let chain = security::phase_error_upper_bound(&stats, mu, q_mu, &eps)
                .map_err(|e| anyhow::anyhow!("{e}"))?;
            let ep_bar = chain.ep_bar;
            (Some(chain), ep_bar)
        }
    };
    let key = security::finite_key_length(stats.n_x, ep_bar, ebx, fe, &eps, n_total);
    write_report(out, &stats, q_mu, chain.as_ref(), ep_bar, &key, &eps)?;
    Ok(if key.key_length_bits == 0 {
        EXIT_INFEASIBLE
    } else {
        EXIT_OK
    })
}

/// The full chain report: every intermediate, one `name = value` line each.
fn write_report(
    out: &mut dyn Write,
    stats: &ObservedStats,
    q_mu: f64,
    chain: Option<&PhaseErrorChain>,
    ep_bar: f64,
    key: &KeyResult,
    eps: &SecurityEpsilons,
) -> std::io::Result<()> {
    writeln!(out, "n_x = {}", stats.n_x)?;
    writeln!(out, "n_y = {}", stats.n_y)?;
    writeln!(out, "m_x = {}", stats.m_x)?;
    writeln!(out, "m_y = {}", stats.m_y)?;
    if let Some(ebx) = stats.ebx() {
        writeln!(out, "ebx_observed = {ebx:.6e}")?;
    }
    if let Some(eby) = stats.eby() {
        writeln!(out, "eby_observed = {eby:.6e}")?;
    }
    writeln!(out, "q_mu = {q_mu:.6e}")?;
    match chain {
        Some(chain) => {
            writeln!(out, "delta = {:.6e}", chain.delta)?;
            writeln!(out, "delta_c_y = {:.6}", chain.delta_c_y)?;
            writeln!(out, "m_y_prime = {:.6}", chain.m_y_prime)?;
            writeln!(out, "eby_prime = {:.6e}", chain.eby_prime)?;
            writeln!(out, "ep_prime = {:.6e}", chain.ep_prime)?;
            writeln!(out, "mp_prime = {:.6}", chain.mp_prime)?;
            writeln!(out, "delta_c_x = {:.6}", chain.delta_c_x)?;
            writeln!(out, "mp_bar = {:.6}", chain.mp_bar)?;
            writeln!(out, "ep_bar = {:.6e}", chain.ep_bar)?;
        }
        None => writeln!(out, "ep_bar = {ep_bar:.6e} (override)")?,
    }
    writeln!(out, "leak_ec = {:.6e}", key.leak_ec_fraction)?;
    writeln!(out, "eps_s = {:.6e}", eps.secrecy())?;
    writeln!(out, "l = {}", key.key_length_bits)?;
    writeln!(out, "rate_per_pulse = {:.6e}", key.rate_per_pulse)?;
    Ok(())
}

// ---------------------------------------------------------------------
// curve / optimize
// ---------------------------------------------------------------------

fn search_space(
    px_flag: Option<f64>,
    cfg: &Settings,
    mu_min: Option<f64>,
    mu_max: Option<f64>,
    objective: Objective,
) -> Result<SearchSpace> {
    let mu_lo = cfg.f64(mu_min, "mu-min", Some(1e-6))?;
    let mu_hi = cfg.f64(mu_max, "mu-max", Some(0.5))?;
    // an explicit px (flag or config) pins the basis probability;
    // otherwise it is optimized over [0.5, 0.99]
    let px = match (px_flag, cfg.get("px")) {
        (Some(v), _) => PxChoice::Fixed(v),
        (None, Some(raw)) => PxChoice::Fixed(
            raw.parse()
                .with_context(|| format!("config key `px`: invalid number `{raw}`"))?,
        ),
        (None, None) => PxChoice::Range(Interval::new(0.5, 0.99)),
    };
    Ok(SearchSpace {
        mu: Interval::new(mu_lo, mu_hi),
        px,
        objective,
    })
}

fn cmd_curve(args: &CurveArgs, cfg: &Settings, seed: u64, out: &mut dyn Write) -> Result<u8> {
    let eps = args.security.epsilons(cfg)?;
    let fe = args.security.fe(cfg)?;
    let n_total = cfg.count(args.n.clone(), "n", Some(10_000_000_000))?;
    let from = cfg.f64(args.from, "from", None)?;
    let to = cfg.f64(args.to, "to", None)?;
    let step = cfg.f64(args.step, "step", None)?;
    if step <= 0.0 || from > to {
        bail!("empty distance grid: need from <= to and step > 0");
    }
    let mut distances = Vec::new();
    let mut d = from;
    while d <= to + 1e-9 {
        distances.push(d);
        d += step;
    }

    // mu is a search variable here; the base params carry a placeholder
    let base = ChannelArgs {
        mu: Some(1e-3),
        ..clone_channel(&args.channel)
    }
    .resolve(cfg, false)?;
    let space = search_space(
        args.channel.px,
        cfg,
        args.mu_min,
        args.mu_max,
        Objective::FiniteRate { n_total },
    )?;

    let mut header = vec![
        ("n", n_total.to_string()),
        ("from", from.to_string()),
        ("to", to.to_string()),
        ("step", step.to_string()),
        ("eta-d", base.eta_d.to_string()),
        ("pd", format!("{:e}", base.p_d)),
        ("ed", base.e_d.to_string()),
        ("alpha", base.alpha_db_per_km.to_string()),
        ("mu-min", format!("{:e}", space.mu.lo)),
        ("mu-max", format!("{:e}", space.mu.hi)),
        (
            "px",
            match space.px {
                PxChoice::Fixed(v) => v.to_string(),
                PxChoice::Range(r) => format!("optimized[{},{}]", r.lo, r.hi),
            },
        ),
        ("seed", seed.to_string()),
    ];
    header.extend(security_header(&eps, fe));
    write_header(out, "curve", &header)?;
    writeln!(
        out,
        "distance_km,loss_db,mu_opt,px_opt,key_rate_per_pulse,key_bits"
    )?;

    for d in distances {
        let params = ChannelParams {
            length_km: d,
            ..base
        };
        let opt =
            optimizer::optimize(&space, &params, fe, &eps).map_err(|e| anyhow::anyhow!("{e}"))?;
        write_curve_row(out, d, params.alpha_db_per_km * d, &opt, n_total)?;
    }
    Ok(EXIT_OK)
}

fn write_curve_row(
    out: &mut dyn Write,
    distance_km: f64,
    loss_db: f64,
    opt: &Optimum,
    n_total: u64,
) -> std::io::Result<()> {
    let key_bits = (opt.rate_star * n_total as f64).round() as u64;
    writeln!(
        out,
        "{distance_km},{loss_db:.4},{:.6e},{:.6},{:.6e},{key_bits}",
        opt.mu_star, opt.px_star, opt.rate_star
    )
}

/// Copies flag values (clap arg structs are not Clone).
fn clone_channel(args: &ChannelArgs) -> ChannelArgs {
    ChannelArgs {
        mu: args.mu,
        loss_db: args.loss_db,
        length_km: args.length_km,
        eta_d: args.eta_d,
        pd: args.pd,
        ed: args.ed,
        alpha: args.alpha,
        px: args.px,
    }
}

fn cmd_optimize(
    args: &OptimizeArgs,
    cfg: &Settings,
    seed: u64,
    out: &mut dyn Write,
) -> Result<u8> {
    let eps = args.security.epsilons(cfg)?;
    let fe = args.security.fe(cfg)?;
    let n_total = cfg.count(args.n.clone(), "n", Some(10_000_000_000))?;
    let base = ChannelArgs {
        mu: Some(1e-3),
        ..clone_channel(&args.channel)
    }
    .resolve(cfg, true)?;
    let objective = if args.asymptotic {
        Objective::AsymptoticRate
    } else {
        Objective::FiniteRate { n_total }
    };
    let space = search_space(args.channel.px, cfg, args.mu_min, args.mu_max, objective)?;
    let opt = optimizer::optimize(&space, &base, fe, &eps).map_err(|e| anyhow::anyhow!("{e}"))?;

    let mut header = channel_header(&base);
    header.retain(|(k, _)| *k != "mu");
    header.push(("n", n_total.to_string()));
    header.push(("seed", seed.to_string()));
    header.extend(security_header(&eps, fe));
    write_header(out, "optimize", &header)?;
    writeln!(out, "mu_star = {:.6e}", opt.mu_star)?;
    writeln!(out, "px_star = {:.6}", opt.px_star)?;
    writeln!(out, "rate_star = {:.6e}", opt.rate_star)?;
    writeln!(
        out,
        "key_bits = {}",
        (opt.rate_star * n_total as f64).round() as u64
    )?;
    Ok(if opt.is_feasible() {
        EXIT_OK
    } else {
        EXIT_INFEASIBLE
    })
}

// ---------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------

fn cmd_analyze(
    args: &AnalyzeArgs,
    cfg: &Settings,
    config_path: &Option<PathBuf>,
    seed: u64,
    out: &mut dyn Write,
) -> Result<u8> {
    if config_path.is_none() {
        bail!("analyze requires --config with the experiment parameters (n, mu, px, fe, loss-db)");
    }
    let eps = args.security.epsilons(cfg)?;
    let experiment_cfg = ExperimentConfig {
        n_total: cfg.count(None, "n", None)?,
        mu: cfg.f64(None, "mu", None)?,
        p_x: cfg.f64(None, "px", Some(0.8))?,
        epsilons: eps,
        f_e: args.security.fe(cfg)?,
        loss_db: cfg.f64(None, "loss-db", None)?,
    };

    let file = File::open(&args.counts)
        .with_context(|| format!("cannot open counts file {}", args.counts.display()))?;
    let tally = experiment::parse_counts_csv(BufReader::new(file))
        .map_err(|e| anyhow::anyhow!("{}: {e}", args.counts.display()))?;
    let report = experiment::analyze(&tally, &experiment_cfg, seed)
        .map_err(|e| anyhow::anyhow!("{}: {e}", args.counts.display()))?;

    let mut header = vec![
        ("counts", args.counts.display().to_string()),
        ("n", experiment_cfg.n_total.to_string()),
        ("mu", format!("{:e}", experiment_cfg.mu)),
        ("px", experiment_cfg.p_x.to_string()),
        ("loss-db", experiment_cfg.loss_db.to_string()),
        ("seed", seed.to_string()),
    ];
    header.extend(security_header(&eps, experiment_cfg.f_e));
    write_header(out, "analyze", &header)?;
    write_report(
        out,
        &report.stats,
        report.q_mu_observed,
        Some(&report.chain),
        report.chain.ep_bar,
        &report.key,
        &eps,
    )?;
    writeln!(
        out,
        "ebx_percent = {:.2}",
        experiment::percent_two_decimals(report.ebx_observed)
    )?;
    writeln!(
        out,
        "eby_percent = {:.2}",
        experiment::percent_two_decimals(report.eby_observed)
    )?;

    if args.against_table1 {
        let ok = check_against_reference(&experiment_cfg, &report, out)?;
        if !ok {
            return Ok(EXIT_CHECK_FAILED);
        }
    }
    Ok(if report.key.key_length_bits == 0 {
        EXIT_INFEASIBLE
    } else {
        EXIT_OK
    })
}

/// Asserts the reproduction criteria for one bundled dataset: exact
/// sifted counts, error rates equal after percent rounding, and a key
/// rate within a factor of five of the published value.
fn check_against_reference(
    cfg: &ExperimentConfig,
    report: &qss_core::ExperimentReport,
    out: &mut dyn Write,
) -> Result<bool> {
    let Some(reference) = reference::find(cfg.loss_db) else {
        bail!(
            "no reference results for loss {} dB (known: 20, 30, 35)",
            cfg.loss_db
        );
    };
    let mut ok = true;
    let mut check = |name: &str, pass: bool, detail: String| {
        ok &= pass;
        let status = if pass { "ok" } else { "FAILED" };
        writeln!(out, "check {name}: {status} ({detail})")
    };
    check(
        "n_x",
        report.stats.n_x == reference.n_x,
        format!("{} vs {}", report.stats.n_x, reference.n_x),
    )?;
    check(
        "n_y",
        report.stats.n_y == reference.n_y,
        format!("{} vs {}", report.stats.n_y, reference.n_y),
    )?;
    let ebx_pct = experiment::percent_two_decimals(report.ebx_observed);
    check(
        "ebx_percent",
        (ebx_pct - reference.ebx_percent).abs() < 1e-9,
        format!("{ebx_pct} vs {}", reference.ebx_percent),
    )?;
    let eby_pct = experiment::percent_two_decimals(report.eby_observed);
    check(
        "eby_percent",
        (eby_pct - reference.eby_percent).abs() < 1e-9,
        format!("{eby_pct} vs {}", reference.eby_percent),
    )?;
    let rate = report.key.rate_per_pulse;
    check(
        "key_rate_within_5x",
        rate > reference.key_rate / 5.0 && rate < reference.key_rate * 5.0,
        format!("{rate:.4e} vs {:.4e}", reference.key_rate),
    )?;
    Ok(ok)
}
