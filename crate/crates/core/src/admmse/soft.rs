use super::detector::Candidate;
use super::{AdmmDetector, AdmmParams, Detection, DetectionProblem};
use crate::constellation::Constellation;
use crate::error::Result;

/// Max-log LLRs plus the hard decision they came with.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftOutput {
    /// One value per bit in transmission order; positive favours bit 0.
    pub llrs: Vec<f64>,
    pub detection: Detection,
    /// Distinct candidates the LLRs were computed from.
    pub list_size: usize,
}

impl AdmmDetector {
    /// Soft output from the list of per-restart best points.
    pub fn detect_soft(&self, p: &DetectionProblem, seed: u64) -> Result<SoftOutput> {
        let (detection, mut candidates) = self.run(p, seed, true)?;
        dedup(&mut candidates);
        let llrs = list_llrs(p, &candidates, self.params().llr_clamp);
        Ok(SoftOutput {
            llrs,
            detection,
            list_size: candidates.len(),
        })
    }
}

/// One-shot soft detection: factorizes, then runs [`AdmmDetector::detect_soft`].
pub fn detect_soft(p: &DetectionProblem, params: &AdmmParams) -> Result<SoftOutput> {
    AdmmDetector::new(p, *params)?.detect_soft(p, params.seed)
}

fn dedup(list: &mut Vec<Candidate>) {
    let mut seen: Vec<Candidate> = Vec::with_capacity(list.len());
    for c in list.drain(..) {
        if !seen.iter().any(|s| s.x == c.x) {
            seen.push(c);
        }
    }
    *list = seen;
}

fn bits_of(lattice: &Constellation, x: &[f64]) -> Vec<u8> {
    let n = x.len() / 2;
    let bpa = lattice.bits_per_axis();
    let mut bits = Vec::with_capacity(2 * n * bpa);
    for i in 0..n {
        for axis in [x[i], x[n + i]] {
            let label = lattice.axis_label(lattice.nearest_index(axis));
            for b in (0..bpa).rev() {
                bits.push(((label >> b) & 1) as u8);
            }
        }
    }
    bits
}

/// `LLR_b = (min f over candidates with b = 1 - min f over b = 0) / sigma2`,
/// with `f` the raw objective. A bit on which the list is unanimous gets
/// `+-clamp`.
pub(crate) fn list_llrs(p: &DetectionProblem, candidates: &[Candidate], clamp: f64) -> Vec<f64> {
    let lattice = p.lattice();
    let nbits = p.symbols() * lattice.bits_per_symbol();
    let mut best0 = vec![f64::INFINITY; nbits];
    let mut best1 = vec![f64::INFINITY; nbits];
    for c in candidates {
        let f = c.objective * p.scale_applied();
        for (k, b) in bits_of(lattice, &c.x).into_iter().enumerate() {
            let slot = if b == 0 { &mut best0[k] } else { &mut best1[k] };
            if f < *slot {
                *slot = f;
            }
        }
    }
    let sigma2 = p.noise_variance();
    best0
        .iter()
        .zip(&best1)
        .map(|(&f0, &f1)| match (f0.is_finite(), f1.is_finite()) {
            (true, true) => (f1 - f0) / sigma2,
            (true, false) => clamp,
            (false, true) => -clamp,
            (false, false) => 0.0,
        })
        .collect()
}
