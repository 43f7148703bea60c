mod config;
mod error;
mod manifest;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ftn_core::admmse::{default_rho, AdmmParams};
use ftn_core::channel::{CorrelatedChannel, ModelKind};
use ftn_core::error::FtnError;
use ftn_core::harness::{
    min_tau_search, run_ber_sweep, whitened_model, write_ber_csv, write_se_csv, write_taps_csv, DetectorKind,
    SweepConfig, TauSearchConfig,
};
use ftn_core::pulse::{autocorr_taps, TapConfig};
use ftn_core::selftest::{check_names, run_selftest, SelftestConfig};

use config::{parse_grid, resolve_seed, ConfigFile, Resolver};
use error::CliError;
use manifest::RunManifest;

/// Faster-than-Nyquist QAM simulation: BER sweeps, minimum-tau search and
/// self-tests.
///
/// Settings come from flags, then a `--config` file of `key=value` lines
/// (keys are the long flag names), then `FTN_SEED` for the seed, then the
/// defaults. Exit status: 0 success, 1 configuration error, 2 runtime error
/// or failed self-test.
#[derive(Debug, Parser)]
#[command(name = "ftn", version)]
struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Flat key=value settings file; flags override it. A run manifest works.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// BER against Eb/N0 for one (M, alpha, tau).
    Ber(BerArgs),
    /// Smallest tau keeping the Nyquist BER, and the resulting spectral efficiency, per alpha.
    Se(SeArgs),
    /// Oracle-equivalence and structural invariant checks.
    Selftest(SelftestArgs),
    /// ISI taps g(k) and, for the whitened model, the causal factor v(k).
    Taps(TapsArgs),
}

#[derive(Debug, Args)]
struct AdmmArgs {
    /// ADMM penalty [default: published value for M = 4 and 16; required otherwise]
    #[arg(long)]
    rho: Option<f64>,
    /// ADMM iterations per restart [default: 200]
    #[arg(long)]
    iters: Option<usize>,
    /// Random restarts [default: 50]
    #[arg(long)]
    restarts: Option<usize>,
    /// Solve [Q + rho I] in step 1 instead of [2Q + rho I]
    #[arg(long)]
    paper_linear_system: bool,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Block cap per point [default: 100000]
    #[arg(long)]
    blocks: Option<u64>,
    /// Bit errors to collect per point; 0 runs to the block cap [default: 200]
    #[arg(long)]
    errors: Option<u64>,
    /// Bits to simulate per point before the error target may stop it [default: 0]
    #[arg(long)]
    min_bits: Option<u64>,
    /// Symbols per block [default: 150]
    #[arg(long)]
    block_len: Option<usize>,
    /// Base seed [default: $FTN_SEED, else 1]
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct BerArgs {
    /// Modulation order M [default: 4]
    #[arg(long = "mod")]
    order: Option<usize>,
    /// Roll-off factor [default: 0.3]
    #[arg(long)]
    alpha: Option<f64>,
    /// Acceleration factor [default: 1.0]
    #[arg(long)]
    tau: Option<f64>,
    /// Eb/N0 grid in dB: start:step:stop or a comma list [default: 0:2:10]
    #[arg(long)]
    ebn0: Option<String>,
    /// admmse, nyquist or mlse [default: nyquist at tau = 1, else admmse]
    #[arg(long)]
    detector: Option<DetectorKind>,
    /// correlated or whitened [default: correlated unless its ISI matrix is ill-conditioned]
    #[arg(long)]
    model: Option<ModelKind>,
    #[command(flatten)]
    run: RunArgs,
    #[command(flatten)]
    admm: AdmmArgs,
    /// Output CSV; a manifest is written next to it [default: stdout]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SeArgs {
    /// Modulation order M [default: 4]
    #[arg(long = "mod")]
    order: Option<usize>,
    /// Roll-off grid: start:step:stop or a comma list [default: 0:0.1:1]
    #[arg(long)]
    alpha: Option<String>,
    /// BER the Nyquist reference point is set to [default: 1e-4]
    #[arg(long)]
    target_ber: Option<f64>,
    /// Tau step of the downward scan [default: 0.01]
    #[arg(long)]
    resolution: Option<f64>,
    /// Smallest tau tried [default: 0.3]
    #[arg(long)]
    tau_floor: Option<f64>,
    #[command(flatten)]
    run: RunArgs,
    #[command(flatten)]
    admm: AdmmArgs,
    /// Output CSV; a manifest is written next to it [default: stdout]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SelftestArgs {
    /// Smaller sample sizes (well under a minute)
    #[arg(long)]
    quick: bool,
    /// Multiplier on every tolerance [default: 1]
    #[arg(long)]
    tolerance_scale: Option<f64>,
    /// Run only this check; repeatable
    #[arg(long = "check", value_name = "NAME")]
    checks: Vec<String>,
    /// Seed [default: $FTN_SEED, else 1]
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct TapsArgs {
    /// Roll-off factor [default: 0.3]
    #[arg(long)]
    alpha: Option<f64>,
    /// Acceleration factor [default: 0.8]
    #[arg(long)]
    tau: Option<f64>,
    /// Also compute the causal factor v
    #[arg(long)]
    whitened: bool,
    /// Output CSV [default: stdout]
    #[arg(long)]
    out: Option<PathBuf>,
}

const RUN_KEYS: [&str; 10] = [
    "blocks", "errors", "min-bits", "block-len", "seed", "rho", "iters", "restarts", "paper-linear-system", "threads",
];

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ftn: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = cli.config.as_deref().map(ConfigFile::load).transpose()?;
    match cli.command {
        Command::Ber(a) => cmd_ber(a, file, cli.threads),
        Command::Se(a) => cmd_se(a, file, cli.threads),
        Command::Selftest(a) => cmd_selftest(a, file, cli.threads),
        Command::Taps(a) => cmd_taps(a, file),
    }
}

fn keys(extra: &[&'static str]) -> Vec<&'static str> {
    RUN_KEYS.iter().chain(extra).copied().collect()
}

/// Correlated when its ISI matrix is usable, whitened otherwise.
fn usable_model(alpha: f64, tau: f64, n: usize) -> Result<ModelKind, CliError> {
    let isi = autocorr_taps(alpha, tau, &TapConfig::default())?;
    match CorrelatedChannel::new(&isi, n) {
        Ok(_) => Ok(ModelKind::Correlated),
        Err(FtnError::IllConditioned(_)) => Ok(ModelKind::Whitened),
        Err(e) => Err(e.into()),
    }
}

/// Shared run/ADMM settings onto a sweep config.
fn apply_run(r: &mut Resolver, cfg: &mut SweepConfig, run: RunArgs, threads: Option<usize>) -> Result<(), CliError> {
    cfg.max_blocks = r.get("blocks", run.blocks, || cfg.max_blocks)?;
    cfg.target_errors = r.get("errors", run.errors, || cfg.target_errors)?;
    cfg.min_bits = r.get("min-bits", run.min_bits, || cfg.min_bits)?;
    cfg.block_len = r.get("block-len", run.block_len, || cfg.block_len)?;
    cfg.base_seed = resolve_seed(r, run.seed)?;
    cfg.threads = r.get_opt("threads", threads)?;
    Ok(())
}

fn resolve_admm(r: &mut Resolver, a: AdmmArgs, fallback_rho: Option<f64>, needed: bool, seed: u64) -> Result<AdmmParams, CliError> {
    let rho = match r.get_opt("rho", a.rho)? {
        Some(v) => v,
        None => match fallback_rho {
            Some(v) => {
                r.record("rho", &v);
                v
            }
            None if needed => {
                return Err(CliError::Config(
                    "no published rho for this order; pass --rho (tune it on 0.05..1)".into(),
                ))
            }
            None => 0.5,
        },
    };
    let mut p = AdmmParams::with_rho(rho);
    p.iterations = r.get("iters", a.iters, || p.iterations)?;
    p.restarts = r.get("restarts", a.restarts, || p.restarts)?;
    p.match_paper_linear_system = r.switch("paper-linear-system", a.paper_linear_system)?;
    p.seed = seed;
    p.validate()?;
    Ok(p)
}

fn write_output(
    out: Option<&Path>,
    manifest: RunManifest,
    body: impl FnOnce(&mut dyn Write) -> ftn_core::error::Result<()>,
) -> Result<(), CliError> {
    match out {
        Some(path) => {
            let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
            body(&mut f)?;
            f.flush()?;
            let m = manifest.write_beside(path)?;
            eprintln!("wrote {} and {}", path.display(), m.display());
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            body(&mut lock)?;
        }
    }
    Ok(())
}

fn cmd_ber(a: BerArgs, file: Option<ConfigFile>, threads: Option<usize>) -> Result<(), CliError> {
    let mut r = Resolver::new(file, "ber", &keys(&["mod", "alpha", "tau", "ebn0", "detector", "model", "out"]))?;
    let order = r.get("mod", a.order, || 4)?;
    let alpha = r.get("alpha", a.alpha, || 0.3)?;
    let tau = r.get("tau", a.tau, || 1.0)?;
    let grid_spec = r.get("ebn0", a.ebn0, || "0:2:10".to_string())?;
    let grid = parse_grid(&grid_spec)?;
    let nyquist = (tau - 1.0).abs() < 1e-12;
    let detector = r.get("detector", a.detector, || {
        if nyquist {
            DetectorKind::Nyquist
        } else {
            DetectorKind::Admmse
        }
    })?;
    let explicit_model = r.get_opt("model", a.model)?;
    let mut cfg = SweepConfig::new(order, alpha, tau, grid, AdmmParams::with_rho(0.5));
    cfg.detector = detector;
    apply_run(&mut r, &mut cfg, a.run, threads)?;
    cfg.model = match explicit_model {
        Some(m) => m,
        None => {
            let m = usable_model(alpha, tau, cfg.block_len)?;
            if m == ModelKind::Whitened {
                eprintln!("note: ISI matrix is ill-conditioned at alpha={alpha}, tau={tau}; using the whitened model");
            }
            r.record("model", &m);
            m
        }
    };
    let needs_rho = detector == DetectorKind::Admmse;
    cfg.admm = resolve_admm(&mut r, a.admm, default_rho(order, tau, alpha), needs_rho, cfg.base_seed)?;
    let out = r.get_opt("out", a.out.map(|p| p.display().to_string()))?;
    cfg.validate()?;

    let result = run_ber_sweep(&cfg)?;
    for p in &result.points {
        eprintln!(
            "{} M={} tau={} {:>6.2} dB: ber {:.3e} ({} / {} bits, {} blocks{})",
            p.detector,
            p.order,
            p.tau,
            p.ebn0_db,
            p.ber,
            p.bit_errors,
            p.bits,
            p.blocks,
            if p.censored { ", censored" } else { "" }
        );
    }
    let manifest = RunManifest::new("ber", r.snapshot(), cfg.base_seed);
    write_output(out.as_deref().map(Path::new), manifest, |w| write_ber_csv(w, &result.points))
}

fn cmd_se(a: SeArgs, file: Option<ConfigFile>, threads: Option<usize>) -> Result<(), CliError> {
    let mut r = Resolver::new(file, "se", &keys(&["mod", "alpha", "target-ber", "resolution", "tau-floor", "out"]))?;
    let order = r.get("mod", a.order, || 4)?;
    let alpha_spec = r.get("alpha", a.alpha, || "0:0.1:1".to_string())?;
    let alphas = parse_grid(&alpha_spec)?;
    let mut base = SweepConfig::new(order, alphas[0], 1.0, vec![0.0], AdmmParams::with_rho(0.5));
    apply_run(&mut r, &mut base, a.run, threads)?;
    base.admm = resolve_admm(&mut r, a.admm, default_rho(order, 1.0, alphas[0]), true, base.base_seed)?;
    let mut search = TauSearchConfig::new(base);
    search.target_ber = r.get("target-ber", a.target_ber, || search.target_ber)?;
    search.resolution = r.get("resolution", a.resolution, || search.resolution)?;
    search.tau_floor = r.get("tau-floor", a.tau_floor, || search.tau_floor)?;
    if !(search.target_ber > 0.0 && search.target_ber < 0.5) {
        return Err(CliError::Config(format!("target BER {} outside (0, 0.5)", search.target_ber)));
    }
    if !(search.tau_floor > 0.0 && search.tau_floor < 1.0) {
        return Err(CliError::Config(format!("tau floor {} outside (0, 1)", search.tau_floor)));
    }
    let out = r.get_opt("out", a.out.map(|p| p.display().to_string()))?;
    search.sweep.validate()?;

    let mut records = Vec::new();
    for alpha in alphas {
        let mut s = search.clone();
        s.sweep.alpha = alpha;
        s.sweep.validate()?;
        let res = min_tau_search(&s)?;
        for (p, kind, ok) in &res.trace {
            eprintln!(
                "alpha={alpha} tau={:.2} ({kind}) ber {:.3e} over {} bits: {}",
                p.tau,
                p.ber,
                p.bits,
                if *ok { "ok" } else { "degraded" }
            );
        }
        eprintln!(
            "alpha={alpha}: tau_min {} at {:.3} dB, SE {:.4}, gain {:.1}%",
            res.record.tau_min, res.ebn0_db, res.record.se, res.record.se_gain_percent
        );
        records.push(res.record);
    }
    let manifest = RunManifest::new("se", r.snapshot(), search.sweep.base_seed);
    write_output(out.as_deref().map(Path::new), manifest, |w| write_se_csv(w, &records))
}

fn cmd_selftest(a: SelftestArgs, file: Option<ConfigFile>, threads: Option<usize>) -> Result<(), CliError> {
    let mut r = Resolver::new(file, "selftest", &["quick", "tolerance-scale", "seed", "threads"])?;
    let cfg = SelftestConfig {
        quick: r.switch("quick", a.quick)?,
        tolerance_scale: r.get("tolerance-scale", a.tolerance_scale, || 1.0)?,
        seed: resolve_seed(&mut r, a.seed)?,
        threads: r.get_opt("threads", threads)?,
    };
    let only: Vec<&str> = a.checks.iter().map(String::as_str).collect();
    if let Some(bad) = only.iter().find(|c| !check_names().contains(c)) {
        return Err(CliError::Config(format!(
            "unknown check '{bad}'; available: {}",
            check_names().join(", ")
        )));
    }
    let outcomes = run_selftest(&cfg, &only)?;
    for o in &outcomes {
        println!("{o}");
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    println!("{} passed, {} failed", outcomes.len() - failed, failed);
    if failed > 0 {
        return Err(CliError::Runtime(format!("{failed} self-test check(s) failed")));
    }
    Ok(())
}

fn cmd_taps(a: TapsArgs, file: Option<ConfigFile>) -> Result<(), CliError> {
    let mut r = Resolver::new(file, "taps", &["alpha", "tau", "whitened", "out"])?;
    let alpha = r.get("alpha", a.alpha, || 0.3)?;
    let tau = r.get("tau", a.tau, || 0.8)?;
    let whitened = r.switch("whitened", a.whitened)?;
    let out = r.get_opt("out", a.out.map(|p| p.display().to_string()))?;
    let mut isi = autocorr_taps(alpha, tau, &TapConfig::default())?;
    if whitened {
        isi = whitened_model(isi)?;
    }
    if isi.truncation_warning() {
        eprintln!("warning: taps truncated before decaying below the threshold");
    }
    let manifest = RunManifest::new("taps", r.snapshot(), 0);
    write_output(out.as_deref().map(Path::new), manifest, |w| write_taps_csv(w, &isi))
}
