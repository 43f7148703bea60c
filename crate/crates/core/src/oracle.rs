//! Reference detectors and the exact Nyquist error rate.

use num_complex::Complex64;
use statrs::function::erf::erfc;

use crate::admmse::DetectionProblem;
use crate::channel::{unstack_real, ReceivedBlock};
use crate::constellation::Constellation;
use crate::error::{FtnError, Result};
use crate::pulse::IsiModel;

/// Default cap on the number of lattice vectors enumerated.
pub const DEFAULT_MAX_SEARCH: u128 = 1 << 20;

/// Exact objective recomputation interval during enumeration.
const RESYNC_EVERY: u64 = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleLimits {
    pub max_search_size: u128,
}

impl Default for OracleLimits {
    fn default() -> Self {
        Self {
            max_search_size: DEFAULT_MAX_SEARCH,
        }
    }
}

impl OracleLimits {
    /// Enumeration size `m^(2N)`, or an error above the cap.
    pub fn check(&self, side: usize, dim: usize) -> Result<u128> {
        let mut size: u128 = 1;
        for _ in 0..dim {
            size = size.saturating_mul(side as u128);
            if size > self.max_search_size {
                return Err(FtnError::SearchSpaceTooLarge {
                    size: (side as u128).saturating_pow(dim as u32),
                    cap: self.max_search_size,
                });
            }
        }
        Ok(size)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlseSolution {
    pub symbols: Vec<Complex64>,
    pub stacked: Vec<f64>,
    /// Objective at the problem's scale.
    pub objective: f64,
    pub visited: u128,
}

fn lex_less(a: &[usize], b: &[usize]) -> bool {
    a.iter().zip(b).find(|(x, y)| x != y).is_some_and(|(x, y)| x < y)
}

/// Exhaustive minimizer of the quadratic over the lattice.
///
/// Lattice vectors are visited in reflected Gray order, so consecutive
/// vectors differ in one coordinate by one level and the objective is updated
/// in `O(k)`. Objectives within `1e-12` (relative) count as ties and go to the
/// lexicographically smaller level-index vector.
pub fn mlse_bruteforce(p: &DetectionProblem, limits: &OracleLimits) -> Result<MlseSolution> {
    let lattice = p.lattice();
    let m = lattice.side();
    let dim = p.dim();
    let n = p.symbols();
    limits.check(m, dim)?;
    let levels = lattice.levels();
    let block = p.block();
    let k = block.bandwidth();

    let mut idx = vec![0usize; dim];
    let mut dir = vec![1isize; dim];
    let mut x: Vec<f64> = vec![levels[0]; dim];
    // g = Q x, kept in step with x
    let mut g = vec![0.0; dim];
    let refresh = |x: &[f64], g: &mut [f64]| {
        let (gr, gi) = g.split_at_mut(n);
        crate::numerics::SymmetricOperator::apply(block, &x[..n], gr);
        crate::numerics::SymmetricOperator::apply(block, &x[n..], gi);
    };
    refresh(&x, &mut g);
    let mut f = p.objective(&x);
    let mut best_f = f;
    let mut best_idx = idx.clone();
    let mut visited: u128 = 1;

    loop {
        let mut j = 0;
        while j < dim {
            let next = idx[j] as isize + dir[j];
            if next < 0 || next >= m as isize {
                dir[j] = -dir[j];
                j += 1;
            } else {
                break;
            }
        }
        if j == dim {
            break;
        }
        let old = x[j];
        idx[j] = (idx[j] as isize + dir[j]) as usize;
        let new = levels[idx[j]];
        let d = new - old;
        let (half, local) = if j < n { (0, j) } else { (n, j - n) };
        let qjj = block.get(local, local);
        f += d * (2.0 * g[j] + qjj * d) + p.q()[j] * d;
        x[j] = new;
        let lo = local.saturating_sub(k);
        let hi = (local + k).min(n - 1);
        for c in lo..=hi {
            g[half + c] += block.get(c, local) * d;
        }
        visited += 1;
        if visited as u64 % RESYNC_EVERY == 0 {
            refresh(&x, &mut g);
            f = p.objective(&x);
        }
        let tol = 1e-12 * (1.0 + best_f.abs());
        if f < best_f - tol || (f <= best_f + tol && lex_less(&idx, &best_idx)) {
            best_f = f;
            best_idx.clone_from(&idx);
        }
    }
    let stacked: Vec<f64> = best_idx.iter().map(|&i| levels[i]).collect();
    Ok(MlseSolution {
        symbols: unstack_real(&stacked)?,
        objective: p.objective(&stacked),
        stacked,
        visited,
    })
}

/// Symbol-by-symbol rounding of a `tau = 1` block.
pub fn nyquist_detect(
    rx: &ReceivedBlock,
    isi: &IsiModel,
    lattice: &Constellation,
) -> Result<Vec<Complex64>> {
    if (isi.tau() - 1.0).abs() > 1e-12 {
        return Err(FtnError::NotNyquist(isi.tau()));
    }
    if !(rx.amplitude > 0.0) {
        return Err(FtnError::InvalidParameter(format!(
            "received amplitude {} must be positive",
            rx.amplitude
        )));
    }
    let scaled: Vec<f64> = rx.observation.iter().map(|v| v / rx.amplitude).collect();
    let decided = lattice.project(&scaled)?;
    unstack_real(&decided)
}

/// Gaussian tail `Q(x) = P(N(0,1) > x)`.
pub fn q_function(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// Exact Gray-mapped bit error rate of square `M`-QAM on AWGN at `Eb/N0`
/// (dB), with symbol-by-symbol decisions.
///
/// Each axis is an `m`-PAM with Gray labels; the rate is the expected Hamming
/// distance between sent and decided labels over all level pairs.
pub fn nyquist_ber(order: usize, ebn0_db: f64) -> Result<f64> {
    let (c, std) = axis_setup(order, ebn0_db)?;
    let levels = c.levels();
    let m = levels.len();
    let bpa = c.bits_per_axis();
    if bpa == 0 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (k, &lk) in levels.iter().enumerate() {
        let sent = c.axis_label(k);
        for j in 0..m {
            if j == k {
                continue;
            }
            let hd = (sent ^ c.axis_label(j)).count_ones() as f64;
            total += hd * decision_probability(levels, j, lk, std);
        }
    }
    Ok(total / (m as f64 * bpa as f64))
}

/// Exact symbol error rate of square `M`-QAM on AWGN at `Eb/N0` (dB).
pub fn nyquist_ser(order: usize, ebn0_db: f64) -> Result<f64> {
    let (c, std) = axis_setup(order, ebn0_db)?;
    let levels = c.levels();
    let m = levels.len() as f64;
    let h = c.scale();
    // per-axis symbol error: inner levels err on both sides, outer on one
    let p = q_function(h / std);
    let axis = 2.0 * (m - 1.0) / m * p;
    Ok(1.0 - (1.0 - axis).powi(2))
}

/// `Eb/N0` (dB) at which [`nyquist_ber`] equals `target`, by bisection.
pub fn nyquist_ebn0_for_ber(order: usize, target: f64) -> Result<f64> {
    if !(target > 0.0 && target < 0.5) {
        return Err(FtnError::InvalidParameter(format!("target BER {target} outside (0, 0.5)")));
    }
    let (mut lo, mut hi) = (-20.0f64, 80.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if nyquist_ber(order, mid)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn axis_setup(order: usize, ebn0_db: f64) -> Result<(Constellation, f64)> {
    let c = Constellation::new(order)?;
    let bits = c.bits_per_symbol() as f64;
    // unit Es, tau = 1: N0 = Es / (log2 M * Eb/N0); per-axis variance N0 / 2
    let n0 = 1.0 / (bits * 10f64.powf(ebn0_db / 10.0));
    Ok((c, (0.5 * n0).sqrt()))
}

/// `P(decide level j | sent level at l)` under `N(0, std^2)` per-axis noise.
fn decision_probability(levels: &[f64], j: usize, l: f64, std: f64) -> f64 {
    let m = levels.len();
    let lower = if j == 0 { f64::NEG_INFINITY } else { 0.5 * (levels[j - 1] + levels[j]) };
    let upper = if j + 1 == m { f64::INFINITY } else { 0.5 * (levels[j] + levels[j + 1]) };
    // evaluate on the tail side to keep precision for far intervals
    if lower >= l {
        q_function((lower - l) / std) - q_function((upper - l) / std)
    } else {
        q_function((l - upper) / std) - q_function((l - lower) / std)
    }
}
