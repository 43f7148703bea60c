//! Built-in validation suite: oracle equivalence and structural invariants.
//!
//! Every check compares the toolkit against an independent reference (brute
//! force, a dense reconstruction or a closed form) and reports a pass/fail
//! line. Tolerances are multiplied by [`SelftestConfig::tolerance_scale`], so
//! a scale of zero turns every approximate check into an exact one.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::admmse::{admm_step, assemble_problem, precondition, AdmmDetector, AdmmParams, AdmmState};
use crate::channel::{ebn0_to_sigma2, CorrelatedChannel, ModelKind};
use crate::constellation::Constellation;
use crate::error::{FtnError, Result};
use crate::harness::{block_seed, run_ber_sweep, whitened_model, DetectorKind, Link, SweepConfig};
use crate::numerics::{cholesky_lower, ldl_factorize, BandedSymmetricMatrix};
use crate::oracle::{mlse_bruteforce, nyquist_ber, OracleLimits};
use crate::pulse::{autocorr_taps, reconstruction_error, TapConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelftestConfig {
    /// Smaller sample sizes; the whole suite finishes in well under a minute.
    pub quick: bool,
    pub tolerance_scale: f64,
    pub seed: u64,
    pub threads: Option<usize>,
}

impl Default for SelftestConfig {
    fn default() -> Self {
        Self {
            quick: false,
            tolerance_scale: 1.0,
            seed: 1,
            threads: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl std::fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "[{}] {:<24} {} ({:.1}s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail,
            self.elapsed.as_secs_f64()
        )
    }
}

type Check = fn(&SelftestConfig) -> Result<(bool, String)>;

const CHECKS: [(&str, Check); 9] = [
    ("projection", projection),
    ("ldl_reconstruction", ldl_reconstruction),
    ("cholesky_reconstruction", cholesky_reconstruction),
    ("whitening_identity", whitening_identity),
    ("noise_covariance", noise_covariance),
    ("objective_monotone", objective_monotone),
    ("precondition_argmin", precondition_argmin),
    ("oracle_equivalence", oracle_equivalence),
    ("nyquist_ber", nyquist_ber_check),
];

/// Names of all checks, in run order.
pub fn check_names() -> Vec<&'static str> {
    CHECKS.iter().map(|(n, _)| *n).collect()
}

/// Runs the checks whose names are in `only` (all of them when empty).
/// A check that errors is reported as failed with the error text.
pub fn run_selftest(cfg: &SelftestConfig, only: &[&str]) -> Result<Vec<CheckOutcome>> {
    if !(cfg.tolerance_scale >= 0.0) || !cfg.tolerance_scale.is_finite() {
        return Err(FtnError::InvalidParameter(format!(
            "tolerance scale {} must be finite and nonnegative",
            cfg.tolerance_scale
        )));
    }
    if let Some(bad) = only.iter().find(|n| !CHECKS.iter().any(|(c, _)| c == *n)) {
        return Err(FtnError::InvalidParameter(format!("unknown check '{bad}'")));
    }
    let mut out = Vec::new();
    for (name, check) in CHECKS {
        if !only.is_empty() && !only.contains(&name) {
            continue;
        }
        let start = Instant::now();
        let (passed, detail) = match check(cfg) {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        out.push(CheckOutcome {
            name,
            passed,
            detail,
            elapsed: start.elapsed(),
        });
    }
    Ok(out)
}

fn sized(cfg: &SelftestConfig, quick: usize, full: usize) -> usize {
    if cfg.quick {
        quick
    } else {
        full
    }
}

/// Binary search projection against a linear scan over the levels.
fn projection(cfg: &SelftestConfig) -> Result<(bool, String)> {
    let draws = sized(cfg, 2_000, 20_000);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut mismatches = 0;
    for bits in (2..=16).step_by(2) {
        let c = Constellation::new(1 << bits)?;
        let (lo, hi) = c.hull();
        let x: Vec<f64> = (0..draws).map(|_| rng.random_range(1.5 * lo..1.5 * hi)).collect();
        let fast = c.project(&x)?;
        for (v, p) in x.iter().zip(&fast) {
            let scan = c
                .levels()
                .iter()
                .copied()
                .min_by(|a, b| (v - a).abs().total_cmp(&(v - b).abs()))
                .unwrap_or(f64::NAN);
            mismatches += usize::from(scan != *p);
        }
    }
    Ok((mismatches == 0, format!("{mismatches} mismatches over 8 orders x {draws} draws")))
}

fn isi_cases() -> Vec<(f64, f64)> {
    vec![(0.3, 0.8), (0.3, 0.85), (0.3, 0.9), (0.5, 0.7), (0.5, 0.8), (0.5, 0.9), (0.3, 1.0)]
}

fn rel_dense_error(a: &[Vec<f64>], b: &BandedSymmetricMatrix) -> f64 {
    let d = b.to_dense();
    let err = a
        .iter()
        .zip(&d)
        .flat_map(|(r, s)| r.iter().zip(s).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max);
    err / b.norm_inf()
}

fn ldl_reconstruction(cfg: &SelftestConfig) -> Result<(bool, String)> {
    let tol = 1e-9 * cfg.tolerance_scale;
    let mut worst = 0.0f64;
    for (alpha, tau) in isi_cases() {
        let g = autocorr_taps(alpha, tau, &TapConfig::default())?.isi_matrix(150)?;
        let mut step = g.scaled(2.0);
        step.add_to_diagonal(0.5);
        for m in [g, step] {
            worst = worst.max(rel_dense_error(&ldl_factorize(&m)?.reconstruct(), &m));
        }
    }
    Ok((worst <= tol, format!("max relative error {worst:.2e} (tol {tol:.0e})")))
}

fn cholesky_reconstruction(cfg: &SelftestConfig) -> Result<(bool, String)> {
    let tol = 1e-9 * cfg.tolerance_scale;
    let mut worst = 0.0f64;
    for (alpha, tau) in isi_cases() {
        let g = autocorr_taps(alpha, tau, &TapConfig::default())?.isi_matrix(150)?;
        let l = cholesky_lower(&g)?.to_dense();
        let n = l.len();
        let llt: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| (0..n).map(|p| l[i][p] * l[j][p]).sum()).collect())
            .collect();
        worst = worst.max(rel_dense_error(&llt, &g));
    }
    Ok((worst <= tol, format!("max relative error {worst:.2e} (tol {tol:.0e})")))
}

fn whitening_identity(cfg: &SelftestConfig) -> Result<(bool, String)> {
    let tol = 1e-6 * cfg.tolerance_scale;
    let mut worst = 0.0f64;
    for alpha in [0.3, 0.5] {
        for tau in [0.7, 0.75, 0.8, 0.85, 0.9, 1.0] {
            let m = whitened_model(autocorr_taps(alpha, tau, &TapConfig::default())?)?;
            let v = m.factor().ok_or(FtnError::MissingFactor)?;
            worst = worst.max(reconstruction_error(v, m.taps()));
        }
    }
    Ok((worst <= tol, format!("max |v*rev(v) - g| {worst:.2e} (tol {tol:.0e})")))
}

/// Sample covariance of the matched-filter noise against `sigma2 G` on the
/// main band.
fn noise_covariance(cfg: &SelftestConfig) -> Result<(bool, String)> {
    // cheap enough that quick runs keep the full sample
    let draws = 100_000;
    let n = 12;
    let sigma2 = 0.8;
    let isi = autocorr_taps(0.3, 0.8, &TapConfig::default())?;
    let ch = CorrelatedChannel::new(&isi, n)?;
    let g = ch.isi_matrix();
    let k = g.bandwidth();
    let mut acc = vec![vec![0.0; n]; n];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for _ in 0..draws {
        let w = ch.sample_noise(sigma2, &mut rng);
        for i in 0..n {
            for j in i.saturating_sub(k)..=i {
                // complex second moment E[w_i w_j^*], real part
                acc[i][j] += w[i] * w[j] + w[n + i] * w[n + j];
            }
        }
    }
    // relative 5% where the entry is large; absolute 0.02 sigma2 near zeros
    let rel = 0.05 * cfg.tolerance_scale;
    let abs = 0.02 * sigma2 * cfg.tolerance_scale;
    let mut bad = 0;
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i.saturating_sub(k)..=i {
            let want = sigma2 * g.get(i, j);
            let got = acc[i][j] / draws as f64;
            let err = (got - want).abs();
            let ok = if want.abs() >= 0.1 * sigma2 { err <= rel * want.abs() } else { err <= abs };
            bad += usize::from(!ok);
            if want.abs() >= 0.1 * sigma2 {
                worst = worst.max(err / want.abs());
            }
        }
    }
    Ok((bad == 0, format!("{bad} band entries out of tolerance, worst relative {worst:.3} at {draws} draws")))
}

/// Logs `best_objective` after every step of full runs and checks it never
/// increases and ends at the recomputed objective of the returned point.
fn objective_monotone(cfg: &SelftestConfig) -> Result<(bool, String)> {
    let runs = sized(cfg, 3, 12);
    let tol = 1e-12 * cfg.tolerance_scale;
    let mut violations = 0;
    let mut steps = 0;
    for r in 0..runs {
        let order = [4, 16, 64][r % 3];
        let link = Link::new(order, 0.3, 0.8, 40, ModelKind::Correlated, &TapConfig::default())?;
        let mut rng = ChaCha8Rng::seed_from_u64(block_seed(cfg.seed, r as u64));
        let words: Vec<u32> = (0..40).map(|_| rng.random_range(0..order as u32)).collect();
        let rx = link.transmit(&words, 0.8f64.sqrt(), 0.05, &mut rng)?;
        let p = link.template().assemble(&rx)?;
        let params = AdmmParams {
            restarts: 1,
            ..AdmmParams::with_rho(0.5)
        };
        let det = AdmmDetector::new(&p, params)?;
        let (lo, hi) = p.lattice().hull();
        let x0: Vec<f64> = (0..p.dim()).map(|_| rng.random_range(lo..=hi)).collect();
        let mut state = AdmmState::start(x0);
        let mut last = f64::INFINITY;
        for _ in 0..params.iterations {
            admm_step(&p, &params, det.factor(), &mut state)?;
            violations += usize::from(state.best_objective > last);
            last = state.best_objective;
            steps += 1;
        }
        let recomputed = p.objective(&state.best_x);
        if (recomputed - state.best_objective).abs() > tol * recomputed.abs().max(1.0) {
            violations += 1;
        }
    }
    Ok((violations == 0, format!("{violations} violations over {runs} runs / {steps} logged steps")))
}

/// Brute-force argmin of the raw and the preconditioned problem coincide.
fn precondition_argmin(cfg: &SelftestConfig) -> Result<(bool, String)> {
    let per = sized(cfg, 2, 8);
    let limits = OracleLimits::default();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (mut instances, mut mismatches) = (0, 0);
    for order in [4, 16] {
        let c = Constellation::new(order)?;
        for n in 1..=3 {
            for &(alpha, tau) in &[(0.3, 0.8), (0.5, 0.7), (0.3, 1.0)] {
                let isi = autocorr_taps(alpha, tau, &TapConfig::default())?;
                let ch = CorrelatedChannel::new(&isi, n)?;
                for _ in 0..per {
                    let a: Vec<_> = (0..n).map(|_| c.point(rng.random_range(0..order as u32))).collect();
                    let rx = ch.transmit(&a, 1.0, 0.3, &mut rng)?;
                    let raw = assemble_problem(&rx, &isi, &c)?;
                    let pre = precondition(&raw)?;
                    let x = mlse_bruteforce(&raw, &limits)?.stacked;
                    let y = mlse_bruteforce(&pre, &limits)?.stacked;
                    instances += 1;
                    mismatches += usize::from(x != y);
                }
            }
        }
    }
    Ok((mismatches == 0, format!("{mismatches} argmin mismatches over {instances} instances")))
}

/// ADMMSE against exhaustive MLSE on N = 6 QPSK blocks at 8 dB.
fn oracle_equivalence(cfg: &SelftestConfig) -> Result<(bool, String)> {
    let trials = sized(cfg, 100, 1000);
    let report = admm_vs_mlse(trials, cfg.seed, AdmmParams::with_rho(0.5))?;
    let rate = report.agree as f64 / trials as f64;
    // the 99% floor has no tolerance to scale; a zero scale demands 100%
    let floor = if cfg.tolerance_scale == 0.0 { 1.0 } else { 0.99 };
    let passed = rate >= floor && report.below_oracle == 0;
    Ok((
        passed,
        format!(
            "{}/{} agree ({:.1}%), {} below oracle",
            report.agree,
            trials,
            100.0 * rate,
            report.below_oracle
        ),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EquivalenceReport {
    pub trials: usize,
    pub agree: usize,
    /// Trials where ADMMSE reported an objective below the exhaustive minimum.
    pub below_oracle: usize,
}

/// Paired ADMMSE/MLSE runs on `N = 6`, QPSK, `tau = 0.8`, `alpha = 0.3`,
/// 8 dB blocks.
pub fn admm_vs_mlse(trials: usize, seed: u64, params: AdmmParams) -> Result<EquivalenceReport> {
    let (n, order, tau) = (6, 4, 0.8);
    let link = Link::new(order, 0.3, tau, n, ModelKind::Correlated, &TapConfig::default())?;
    let det = AdmmDetector::for_block(link.template().shared_block().clone(), params)?;
    let sigma2 = ebn0_to_sigma2(8.0, tau, 1.0, order);
    let limits = OracleLimits::default();
    let mut report = EquivalenceReport {
        trials,
        agree: 0,
        below_oracle: 0,
    };
    for t in 0..trials {
        let s = block_seed(seed, t as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let words: Vec<u32> = (0..n).map(|_| rng.random_range(0..order as u32)).collect();
        let rx = link.transmit(&words, tau.sqrt(), sigma2, &mut rng)?;
        let p = link.template().assemble(&rx)?;
        let got = det.detect(&p, s)?;
        let best = mlse_bruteforce(&p, &limits)?;
        report.agree += usize::from(got.stacked == best.stacked);
        let slack = 1e-12 * best.objective.abs().max(1.0);
        report.below_oracle += usize::from(got.report.best_objective < best.objective - slack);
    }
    Ok(report)
}

/// Monte-Carlo QPSK BER at tau = 1 against the closed form, 3 sigma bands.
fn nyquist_ber_check(cfg: &SelftestConfig) -> Result<(bool, String)> {
    let bits = sized(cfg, 1_000_000, 10_000_000) as u64;
    let mut sweep = SweepConfig::new(4, 0.3, 1.0, vec![4.0, 6.0, 8.0], AdmmParams::with_rho(0.5));
    sweep.detector = DetectorKind::Nyquist;
    sweep.target_errors = 0;
    sweep.max_blocks = bits.div_ceil(2 * sweep.block_len as u64);
    sweep.batch = 256;
    sweep.base_seed = cfg.seed;
    sweep.threads = cfg.threads;
    let result = run_ber_sweep(&sweep)?;
    let mut passed = true;
    let mut parts = Vec::new();
    for p in &result.points {
        let want = nyquist_ber(4, p.ebn0_db)?;
        let band = 3.0 * cfg.tolerance_scale * (want * (1.0 - want) / p.bits as f64).sqrt();
        let ok = (p.ber - want).abs() <= band;
        passed &= ok;
        parts.push(format!("{} dB {:.3e} vs {:.3e}", p.ebn0_db, p.ber, want));
    }
    Ok((passed, parts.join("; ")))
}
