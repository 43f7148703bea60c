//! Monte-Carlo BER sweeps, spectral efficiency, minimum-`tau` search and
//! detection timing.
//!
//! Blocks are processed in fixed-size batches on a rayon pool and the stop
//! rule is only checked between batches, so results do not depend on the
//! number of worker threads.

use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::admmse::{AdmmDetector, AdmmParams, ProblemTemplate, RHO_GRID};
use crate::channel::{ebn0_to_sigma2, CorrelatedChannel, ModelKind, ReceivedBlock, WhitenedChannel};
use crate::constellation::Constellation;
use crate::error::{FtnError, Result};
use crate::oracle::{mlse_bruteforce, nyquist_detect, nyquist_ebn0_for_ber, OracleLimits};
use crate::pulse::{autocorr_taps, IsiModel, TapConfig};

pub const BER_CSV_HEADER: &str = "detector,M,alpha,tau,ebn0_db,blocks,bits,bit_errors,ber,symbol_errors,avg_cpu_ms";
pub const SE_CSV_HEADER: &str = "M,alpha,tau_min,se,se_gain_percent";

/// Spectrum floor used when the whitened model needs diagonal loading.
pub const WHITENING_FLOOR: f64 = 1e-3;
/// Reconstruction tolerance for spectral factorization.
pub const WHITENING_TOL: f64 = 1e-6;

/// One-sided 95% normal quantile.
const Z95: f64 = 1.6448536269514722;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DetectorKind {
    Admmse,
    Nyquist,
    Mlse,
}

impl std::fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DetectorKind::Admmse => "admmse",
            DetectorKind::Nyquist => "nyquist",
            DetectorKind::Mlse => "mlse",
        })
    }
}

impl std::str::FromStr for DetectorKind {
    type Err = FtnError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "admmse" => Ok(DetectorKind::Admmse),
            "nyquist" => Ok(DetectorKind::Nyquist),
            "mlse" => Ok(DetectorKind::Mlse),
            other => Err(FtnError::InvalidParameter(format!("unknown detector '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub order: usize,
    pub alpha: f64,
    pub tau: f64,
    pub ebn0_db: Vec<f64>,
    /// Symbols per block.
    pub block_len: usize,
    pub es: f64,
    /// Stop once this many bit errors are seen (and `min_bits` reached).
    /// Zero runs every point to `max_blocks`.
    pub target_errors: u64,
    pub min_bits: u64,
    pub max_blocks: u64,
    pub detector: DetectorKind,
    pub model: ModelKind,
    pub admm: AdmmParams,
    pub base_seed: u64,
    /// Blocks per parallel batch.
    pub batch: usize,
    pub threads: Option<usize>,
    pub taps: TapConfig,
    pub oracle: OracleLimits,
}

impl SweepConfig {
    pub fn new(order: usize, alpha: f64, tau: f64, ebn0_db: Vec<f64>, admm: AdmmParams) -> Self {
        Self {
            order,
            alpha,
            tau,
            ebn0_db,
            block_len: 150,
            es: 1.0,
            target_errors: 200,
            min_bits: 0,
            max_blocks: 100_000,
            detector: DetectorKind::Admmse,
            model: ModelKind::Correlated,
            admm,
            base_seed: 1,
            batch: 16,
            threads: None,
            taps: TapConfig::default(),
            oracle: OracleLimits::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        Constellation::new(self.order)?;
        if self.ebn0_db.is_empty() {
            return Err(FtnError::InvalidParameter("Eb/N0 grid is empty".into()));
        }
        if let Some(i) = self.ebn0_db.iter().position(|v| !v.is_finite()) {
            return Err(FtnError::NonFinite(i));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(FtnError::InvalidParameter(format!("tau {} outside (0, 1]", self.tau)));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(FtnError::InvalidParameter(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if self.block_len == 0 || self.batch == 0 || self.max_blocks == 0 {
            return Err(FtnError::InvalidParameter(
                "block length, batch and block cap must be positive".into(),
            ));
        }
        if !(self.es > 0.0) {
            return Err(FtnError::InvalidParameter(format!("Es {} must be positive", self.es)));
        }
        match self.detector {
            DetectorKind::Admmse => self.admm.validate()?,
            DetectorKind::Nyquist => {
                if (self.tau - 1.0).abs() > 1e-12 {
                    return Err(FtnError::NotNyquist(self.tau));
                }
            }
            DetectorKind::Mlse => {
                let side = Constellation::new(self.order)?.side();
                self.oracle.check(side, 2 * self.block_len)?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointRecord {
    pub detector: DetectorKind,
    pub order: usize,
    pub alpha: f64,
    pub tau: f64,
    pub ebn0_db: f64,
    pub blocks: u64,
    pub bits: u64,
    pub bit_errors: u64,
    pub ber: f64,
    pub symbol_errors: u64,
    pub avg_cpu_ms: f64,
    /// The block cap stopped the point before the error target was met.
    pub censored: bool,
}

impl PointRecord {
    /// Upper 95% normal-approximation bound on the BER.
    pub fn ber_upper95(&self) -> f64 {
        let p = self.ber.max(1.0 / self.bits.max(1) as f64);
        self.ber + Z95 * (p * (1.0 - p) / self.bits.max(1) as f64).sqrt()
    }

    fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.detector,
            self.order,
            self.alpha,
            self.tau,
            self.ebn0_db,
            self.blocks,
            self.bits,
            self.bit_errors,
            self.ber,
            self.symbol_errors,
            self.avg_cpu_ms
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeRecord {
    pub order: usize,
    pub alpha: f64,
    pub tau_min: f64,
    pub se: f64,
    pub se_gain_percent: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepResult {
    pub points: Vec<PointRecord>,
    pub se: Vec<SeRecord>,
}

/// The channel and detection plumbing for one `(M, alpha, tau, N, model)`.
#[derive(Debug, Clone)]
pub struct Link {
    pub lattice: Arc<Constellation>,
    pub isi: IsiModel,
    pub kind: ModelKind,
    correlated: Option<CorrelatedChannel>,
    whitened: Option<WhitenedChannel>,
    template: ProblemTemplate,
}

impl Link {
    pub fn new(order: usize, alpha: f64, tau: f64, n: usize, kind: ModelKind, taps: &TapConfig) -> Result<Self> {
        let lattice = Arc::new(Constellation::new(order)?);
        let raw = autocorr_taps(alpha, tau, taps)?;
        let (isi, correlated, whitened) = match kind {
            ModelKind::Correlated => {
                let ch = CorrelatedChannel::new(&raw, n)?;
                (raw, Some(ch), None)
            }
            ModelKind::Whitened => {
                let isi = whitened_model(raw)?;
                let ch = WhitenedChannel::new(&isi, n)?;
                (isi, None, Some(ch))
            }
        };
        let template = ProblemTemplate::new(kind, &isi, n, lattice.clone(), true)?;
        Ok(Self {
            lattice,
            isi,
            kind,
            correlated,
            whitened,
            template,
        })
    }

    /// Correlated model when the ISI matrix is usable, whitened otherwise.
    pub fn best_available(order: usize, alpha: f64, tau: f64, n: usize, taps: &TapConfig) -> Result<Self> {
        match Self::new(order, alpha, tau, n, ModelKind::Correlated, taps) {
            Err(FtnError::IllConditioned(_)) => Self::new(order, alpha, tau, n, ModelKind::Whitened, taps),
            other => other,
        }
    }

    pub fn template(&self) -> &ProblemTemplate {
        &self.template
    }

    pub fn symbols(&self) -> usize {
        self.template.symbols()
    }

    pub fn transmit<R: Rng + ?Sized>(
        &self,
        words: &[u32],
        amplitude: f64,
        sigma2: f64,
        rng: &mut R,
    ) -> Result<ReceivedBlock> {
        let symbols: Vec<_> = words.iter().map(|&w| self.lattice.point(w)).collect();
        match (&self.correlated, &self.whitened) {
            (Some(ch), _) => ch.transmit(&symbols, amplitude, sigma2, rng),
            (_, Some(ch)) => ch.transmit(&symbols, amplitude, sigma2, rng),
            _ => unreachable!("link always holds one channel"),
        }
    }
}

/// Causal factor of the taps, with minimal diagonal loading when the folded
/// spectrum has (near-)zeros.
pub fn whitened_model(raw: IsiModel) -> Result<IsiModel> {
    match raw.clone().factorized(WHITENING_TOL, WHITENING_FLOOR) {
        Ok(m) => Ok(m),
        Err(FtnError::SpectralZeros { .. }) => raw.regularized(WHITENING_FLOOR, WHITENING_TOL),
        Err(e) => Err(e),
    }
}

/// Seed of block `index`, shared across Eb/N0 points so curves use common
/// random numbers.
pub fn block_seed(base: u64, index: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = base.wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, Default)]
struct BlockOutcome {
    bits: u64,
    bit_errors: u64,
    symbol_errors: u64,
    nanos: u128,
}

enum Engine {
    Admm(AdmmDetector),
    Nyquist,
    Mlse(OracleLimits),
}

fn run_block(link: &Link, engine: &Engine, amplitude: f64, sigma2: f64, base_seed: u64, index: u64) -> Result<BlockOutcome> {
    let seed = block_seed(base_seed, index);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let order = link.lattice.order() as u32;
    let words: Vec<u32> = (0..link.symbols()).map(|_| rng.random_range(0..order)).collect();
    let rx = link.transmit(&words, amplitude, sigma2, &mut rng)?;
    let start = Instant::now();
    let decided = match engine {
        Engine::Admm(det) => {
            let p = link.template.assemble(&rx)?;
            det.detect(&p, seed)?.symbols
        }
        Engine::Nyquist => nyquist_detect(&rx, &link.isi, &link.lattice)?,
        Engine::Mlse(limits) => {
            let p = link.template.assemble(&rx)?;
            mlse_bruteforce(&p, limits)?.symbols
        }
    };
    let nanos = start.elapsed().as_nanos();
    let c = &link.lattice;
    let mut out = BlockOutcome {
        bits: (words.len() * c.bits_per_symbol()) as u64,
        nanos,
        ..Default::default()
    };
    for (w, s) in words.iter().zip(&decided) {
        let (i, q) = (c.exact_level_index(s.re), c.exact_level_index(s.im));
        let (Some(i), Some(q)) = (i, q) else {
            return Err(FtnError::NotAConstellationPoint {
                index: 0,
                re: s.re,
                im: s.im,
            });
        };
        let diff = (w ^ c.word_of(i, q)).count_ones() as u64;
        out.bit_errors += diff;
        out.symbol_errors += u64::from(diff > 0);
    }
    Ok(out)
}

fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t.max(1))
                .build()
                .map_err(|e| FtnError::InvalidParameter(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Runs one Eb/N0 point on an existing link.
pub fn run_point(cfg: &SweepConfig, link: &Link, ebn0_db: f64) -> Result<PointRecord> {
    let engine = match cfg.detector {
        DetectorKind::Admmse => Engine::Admm(AdmmDetector::for_block(
            link.template.shared_block().clone(),
            cfg.admm,
        )?),
        DetectorKind::Nyquist => Engine::Nyquist,
        DetectorKind::Mlse => Engine::Mlse(cfg.oracle),
    };
    let sigma2 = ebn0_to_sigma2(ebn0_db, cfg.tau, cfg.es, cfg.order);
    let amplitude = (cfg.tau * cfg.es).sqrt();
    let mut total = BlockOutcome::default();
    let mut blocks = 0u64;
    let done = |t: &BlockOutcome| cfg.target_errors > 0 && t.bit_errors >= cfg.target_errors && t.bits >= cfg.min_bits;
    while blocks < cfg.max_blocks && !done(&total) {
        let count = (cfg.batch as u64).min(cfg.max_blocks - blocks);
        let batch: Vec<Result<BlockOutcome>> = (blocks..blocks + count)
            .into_par_iter()
            .map(|i| run_block(link, &engine, amplitude, sigma2, cfg.base_seed, i))
            .collect();
        for r in batch {
            let r = r?;
            total.bits += r.bits;
            total.bit_errors += r.bit_errors;
            total.symbol_errors += r.symbol_errors;
            total.nanos += r.nanos;
        }
        blocks += count;
    }
    Ok(PointRecord {
        detector: cfg.detector,
        order: cfg.order,
        alpha: cfg.alpha,
        tau: cfg.tau,
        ebn0_db,
        blocks,
        bits: total.bits,
        bit_errors: total.bit_errors,
        ber: total.bit_errors as f64 / total.bits as f64,
        symbol_errors: total.symbol_errors,
        avg_cpu_ms: total.nanos as f64 / 1e6 / blocks as f64,
        censored: cfg.target_errors > 0 && !done(&total),
    })
}

/// BER at every point of the grid.
pub fn run_ber_sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let link = Link::new(cfg.order, cfg.alpha, cfg.tau, cfg.block_len, cfg.model, &cfg.taps)?;
    with_pool(cfg.threads, || {
        let points = cfg
            .ebn0_db
            .iter()
            .map(|&db| run_point(cfg, &link, db))
            .collect::<Result<Vec<_>>>()?;
        Ok(SweepResult { points, se: Vec::new() })
    })?
}

/// `log2 M / ((1 + alpha) tau)` in bits/s/Hz.
pub fn spectral_efficiency(order: usize, alpha: f64, tau: f64) -> f64 {
    (order as f64).log2() / ((1.0 + alpha) * tau)
}

/// SE gain of `tau_min` over Nyquist signaling at the same roll-off.
pub fn se_gain_percent(tau_min: f64) -> f64 {
    100.0 * (1.0 / tau_min - 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TauSearchConfig {
    pub sweep: SweepConfig,
    pub target_ber: f64,
    pub resolution: f64,
    /// Smallest `tau` tried.
    pub tau_floor: f64,
}

impl TauSearchConfig {
    pub fn new(sweep: SweepConfig) -> Self {
        Self {
            sweep,
            target_ber: 1e-4,
            resolution: 0.01,
            tau_floor: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TauSearchResult {
    pub record: SeRecord,
    /// Reference Eb/N0 at which Nyquist signaling meets the target.
    pub ebn0_db: f64,
    /// Every simulated `tau` with its measurement and verdict.
    pub trace: Vec<(PointRecord, ModelKind, bool)>,
}

/// Whether a measured BER is consistent with `target`: it may exceed the
/// target by at most the one-sided 95% sampling band of a true rate `target`.
pub fn meets_target(point: &PointRecord, target: f64) -> bool {
    let band = Z95 * (target * (1.0 - target) / point.bits.max(1) as f64).sqrt();
    point.ber <= target + band
}

/// Scans `tau` down from 1 in `resolution` steps at the Eb/N0 where Nyquist
/// signaling reaches `target_ber`, and stops at the first `tau` whose BER is
/// degraded. Uses the correlated model, or the whitened one where the ISI
/// matrix is too ill-conditioned.
pub fn min_tau_search(cfg: &TauSearchConfig) -> Result<TauSearchResult> {
    let s = &cfg.sweep;
    if !(cfg.resolution > 0.0 && cfg.resolution < 1.0) {
        return Err(FtnError::InvalidParameter(format!("resolution {} outside (0, 1)", cfg.resolution)));
    }
    let ebn0 = nyquist_ebn0_for_ber(s.order, cfg.target_ber)?;
    let mut tau_min = 1.0;
    let mut trace = Vec::new();
    let steps = ((1.0 - cfg.tau_floor) / cfg.resolution + 1e-9).floor() as usize;
    with_pool(s.threads, || -> Result<()> {
        for k in 1..=steps {
            let tau = ((1.0 - k as f64 * cfg.resolution) * 1e9).round() / 1e9;
            let mut point_cfg = s.clone();
            point_cfg.tau = tau;
            point_cfg.detector = DetectorKind::Admmse;
            point_cfg.ebn0_db = vec![ebn0];
            point_cfg.validate()?;
            let link = Link::best_available(s.order, s.alpha, tau, s.block_len, &s.taps)?;
            let point = run_point(&point_cfg, &link, ebn0)?;
            let ok = meets_target(&point, cfg.target_ber);
            trace.push((point, link.kind, ok));
            if !ok {
                break;
            }
            tau_min = tau;
        }
        Ok(())
    })??;
    Ok(TauSearchResult {
        record: SeRecord {
            order: s.order,
            alpha: s.alpha,
            tau_min,
            se: spectral_efficiency(s.order, s.alpha, tau_min),
            se_gain_percent: se_gain_percent(tau_min),
        },
        ebn0_db: ebn0,
        trace,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingRecord {
    pub order: usize,
    pub block_len: usize,
    pub avg_ms: f64,
    /// Relative to the first record of the run.
    pub ratio: f64,
}

/// Average ADMMSE detection time per block (assembly plus ADMM loop) for each
/// order, on the calling thread. The factorization is built once per order
/// and not timed.
pub fn timing_benchmark(
    orders: &[usize],
    block_len: usize,
    alpha: f64,
    tau: f64,
    ebn0_db: f64,
    admm: AdmmParams,
    blocks: u64,
    seed: u64,
) -> Result<Vec<TimingRecord>> {
    let mut out: Vec<TimingRecord> = Vec::new();
    for &order in orders {
        let link = Link::best_available(order, alpha, tau, block_len, &TapConfig::default())?;
        let det = AdmmDetector::for_block(link.template.shared_block().clone(), admm)?;
        let engine = Engine::Admm(det);
        let sigma2 = ebn0_to_sigma2(ebn0_db, tau, 1.0, order);
        let amplitude = tau.sqrt();
        // one untimed warm-up block
        run_block(&link, &engine, amplitude, sigma2, seed, u64::MAX)?;
        let mut nanos = 0u128;
        for b in 0..blocks {
            nanos += run_block(&link, &engine, amplitude, sigma2, seed, b)?.nanos;
        }
        let avg_ms = nanos as f64 / 1e6 / blocks.max(1) as f64;
        let base = out.first().map_or(avg_ms, |r| r.avg_ms);
        out.push(TimingRecord {
            order,
            block_len,
            avg_ms,
            ratio: avg_ms / base,
        });
    }
    Ok(out)
}

/// Least-squares slope of `log t` against `log n`.
pub fn fit_power_law(ns: &[f64], times: &[f64]) -> f64 {
    let xs: Vec<f64> = ns.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = times.iter().map(|v| v.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// BER of each `rho` on the coarse grid at one Eb/N0; returns the
/// measurements and the best `rho` (smallest BER, ties to the smaller `rho`).
pub fn tune_rho(cfg: &SweepConfig, ebn0_db: f64, grid: Option<&[f64]>) -> Result<(Vec<(f64, PointRecord)>, f64)> {
    let grid = grid.unwrap_or(&RHO_GRID);
    if grid.is_empty() {
        return Err(FtnError::InvalidParameter("rho grid is empty".into()));
    }
    let link = Link::new(cfg.order, cfg.alpha, cfg.tau, cfg.block_len, cfg.model, &cfg.taps)?;
    let mut results = Vec::new();
    with_pool(cfg.threads, || -> Result<()> {
        for &rho in grid {
            let mut c = cfg.clone();
            c.detector = DetectorKind::Admmse;
            c.admm.rho = rho;
            c.ebn0_db = vec![ebn0_db];
            c.validate()?;
            results.push((rho, run_point(&c, &link, ebn0_db)?));
        }
        Ok(())
    })??;
    let best = results
        .iter()
        .fold((f64::INFINITY, f64::NAN), |acc, (rho, p)| if p.ber < acc.0 { (p.ber, *rho) } else { acc })
        .1;
    Ok((results, best))
}

pub fn write_ber_csv<W: Write>(mut w: W, points: &[PointRecord]) -> Result<()> {
    writeln!(w, "{BER_CSV_HEADER}")?;
    for p in points {
        writeln!(w, "{}", p.csv_row())?;
    }
    Ok(())
}

pub fn write_se_csv<W: Write>(mut w: W, records: &[SeRecord]) -> Result<()> {
    writeln!(w, "{SE_CSV_HEADER}")?;
    for r in records {
        writeln!(w, "{},{},{},{},{}", r.order, r.alpha, r.tau_min, r.se, r.se_gain_percent)?;
    }
    Ok(())
}

/// `k,g,v` rows for `k = 0..=K`; `v` is empty without a causal factor.
pub fn write_taps_csv<W: Write>(mut w: W, isi: &IsiModel) -> Result<()> {
    writeln!(w, "k,g,v")?;
    let len = isi.taps().len().max(isi.factor().map_or(0, <[f64]>::len));
    for k in 0..len {
        let g = isi.taps().get(k).map_or(String::new(), |v| v.to_string());
        let v = isi.factor().and_then(|f| f.get(k)).map_or(String::new(), |v| v.to_string());
        writeln!(w, "{k},{g},{v}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::nyquist_ber;

    fn quick(order: usize, tau: f64, det: DetectorKind) -> SweepConfig {
        let mut c = SweepConfig::new(
            order,
            0.3,
            tau,
            vec![4.0, 6.0],
            AdmmParams {
                iterations: 30,
                restarts: 4,
                ..AdmmParams::with_rho(0.5)
            },
        );
        c.block_len = 40;
        c.detector = det;
        c.max_blocks = 40;
        c.target_errors = 0;
        c
    }

    #[test]
    fn se_formula() {
        assert!((spectral_efficiency(4, 0.3, 0.8) - 1.9230769230769231).abs() < 1e-12);
        assert!((spectral_efficiency(4, 0.5, 0.65) - 2.0512820512820513).abs() < 1e-12);
        assert!((spectral_efficiency(16, 0.3, 0.7) - 4.395604395604396).abs() < 1e-12);
        assert_eq!(se_gain_percent(1.0), 0.0);
        assert!((se_gain_percent(0.8) - 25.0).abs() < 1e-12);
    }

    #[test]
    fn block_seeds_distinct() {
        let s: std::collections::HashSet<u64> = (0..10_000).map(|i| block_seed(7, i)).collect();
        assert_eq!(s.len(), 10_000);
        assert_ne!(block_seed(1, 0), block_seed(2, 0));
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let mut c = quick(16, 0.8, DetectorKind::Admmse);
        c.threads = Some(1);
        let a = run_ber_sweep(&c).unwrap();
        c.threads = Some(3);
        let b = run_ber_sweep(&c).unwrap();
        for (x, y) in a.points.iter().zip(&b.points) {
            assert_eq!((x.bits, x.bit_errors, x.symbol_errors, x.blocks), (y.bits, y.bit_errors, y.symbol_errors, y.blocks));
        }
    }

    #[test]
    fn ber_is_ratio() {
        let r = run_ber_sweep(&quick(4, 1.0, DetectorKind::Nyquist)).unwrap();
        for p in &r.points {
            assert_eq!(p.ber, p.bit_errors as f64 / p.bits as f64);
            assert_eq!(p.bits, p.blocks * 40 * 2);
            assert!(!p.censored);
        }
    }

    #[test]
    fn nyquist_sweep_tracks_closed_form() {
        let mut c = quick(16, 1.0, DetectorKind::Nyquist);
        c.ebn0_db = vec![6.0];
        c.max_blocks = 2000;
        let p = &run_ber_sweep(&c).unwrap().points[0];
        let truth = nyquist_ber(16, 6.0).unwrap();
        let sd = (truth * (1.0 - truth) / p.bits as f64).sqrt();
        // neighbouring bits are correlated within a symbol, so allow a wider band
        assert!((p.ber - truth).abs() < 5.0 * sd, "{} vs {truth}", p.ber);
    }

    #[test]
    fn stop_rule_and_censoring() {
        let mut c = quick(4, 1.0, DetectorKind::Nyquist);
        c.ebn0_db = vec![0.0, 20.0];
        c.target_errors = 50;
        c.max_blocks = 64;
        c.batch = 8;
        let r = run_ber_sweep(&c).unwrap();
        let low = &r.points[0];
        assert!(low.bit_errors >= 50 && !low.censored);
        assert!(low.blocks < 64 && low.blocks % 8 == 0);
        let high = &r.points[1];
        assert!(high.censored);
        assert_eq!(high.blocks, 64);
    }

    #[test]
    fn config_errors() {
        let mut c = quick(4, 0.8, DetectorKind::Nyquist);
        assert_eq!(c.validate().unwrap_err(), FtnError::NotNyquist(0.8));
        c.detector = DetectorKind::Mlse;
        assert!(matches!(c.validate(), Err(FtnError::SearchSpaceTooLarge { .. })));
        c.block_len = 4;
        assert!(c.validate().is_ok());
        c.ebn0_db.clear();
        assert!(c.validate().is_err());
        let mut c = quick(12, 0.8, DetectorKind::Admmse);
        assert!(c.validate().is_err());
        c.order = 4;
        c.admm.rho = -1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn mlse_sweep_runs() {
        let mut c = quick(4, 0.8, DetectorKind::Mlse);
        c.block_len = 4;
        c.max_blocks = 8;
        let r = run_ber_sweep(&c).unwrap();
        assert_eq!(r.points[0].bits, 8 * 4 * 2);
    }

    #[test]
    fn whitened_fallback_for_spectral_zeros() {
        let link = Link::best_available(4, 0.3, 0.7, 150, &TapConfig::default()).unwrap();
        assert_eq!(link.kind, ModelKind::Whitened);
        let link = Link::best_available(4, 0.3, 0.8, 30, &TapConfig::default()).unwrap();
        assert_eq!(link.kind, ModelKind::Correlated);
    }

    #[test]
    fn target_band() {
        let mk = |bits: u64, errs: u64| PointRecord {
            detector: DetectorKind::Admmse,
            order: 4,
            alpha: 0.3,
            tau: 0.9,
            ebn0_db: 8.0,
            blocks: 1,
            bits,
            bit_errors: errs,
            ber: errs as f64 / bits as f64,
            symbol_errors: errs,
            avg_cpu_ms: 0.0,
            censored: false,
        };
        assert!(meets_target(&mk(1_000_000, 100), 1e-4));
        assert!(meets_target(&mk(1_000_000, 115), 1e-4));
        assert!(!meets_target(&mk(1_000_000, 130), 1e-4));
    }

    #[test]
    fn tau_search_scans_down() {
        let mut s = quick(4, 1.0, DetectorKind::Admmse);
        s.max_blocks = 20;
        let cfg = TauSearchConfig {
            sweep: s,
            target_ber: 1e-2,
            resolution: 0.05,
            tau_floor: 0.5,
        };
        let r = min_tau_search(&cfg).unwrap();
        assert!(r.record.tau_min <= 1.0);
        assert!(!r.trace.is_empty());
        // everything before the last trace entry qualified
        let n = r.trace.len();
        assert!(r.trace[..n - 1].iter().all(|t| t.2));
        assert!((r.record.se - spectral_efficiency(4, 0.3, r.record.tau_min)).abs() < 1e-12);
        assert!((r.record.se_gain_percent - 100.0 * (1.0 / r.record.tau_min - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn csv_headers_exact() {
        let mut buf = Vec::new();
        write_ber_csv(&mut buf, &[]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), format!("{BER_CSV_HEADER}\n"));
        let mut buf = Vec::new();
        write_se_csv(
            &mut buf,
            &[SeRecord {
                order: 4,
                alpha: 0.3,
                tau_min: 0.8,
                se: 1.5,
                se_gain_percent: 25.0,
            }],
        )
        .unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "M,alpha,tau_min,se,se_gain_percent\n4,0.3,0.8,1.5,25\n");
    }

    #[test]
    fn power_law_fit() {
        let ns = [50.0, 150.0, 300.0];
        let t: Vec<f64> = ns.iter().map(|n: &f64| 3.0 * n.powf(1.5)).collect();
        assert!((fit_power_law(&ns, &t) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn timing_ratios_relative_to_first() {
        let r = timing_benchmark(
            &[4, 16],
            30,
            0.3,
            0.8,
            8.0,
            AdmmParams {
                iterations: 10,
                restarts: 2,
                ..AdmmParams::with_rho(0.5)
            },
            3,
            0,
        )
        .unwrap();
        assert_eq!(r[0].ratio, 1.0);
        assert_eq!(r.len(), 2);
    }

    #[test]
    fn rho_tuning_picks_grid_value() {
        let mut c = quick(16, 0.8, DetectorKind::Admmse);
        c.max_blocks = 4;
        let (all, best) = tune_rho(&c, 8.0, Some(&[0.2, 0.5])).unwrap();
        assert_eq!(all.len(), 2);
        assert!(best == 0.2 || best == 0.5);
    }

    #[test]
    fn taps_csv() {
        let isi = IsiModel::from_taps(0.3, 1.0, vec![1.0]).unwrap().factorized(1e-9, 1e-6).unwrap();
        let mut buf = Vec::new();
        write_taps_csv(&mut buf, &isi).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "k,g,v\n0,1,1\n");
    }
}
