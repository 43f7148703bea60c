//! Square M-QAM alphabets with per-axis Gray labelling.
//!
//! A symbol of order `M` carries `log2(M)` bits. The first half of the word
//! (most significant bit first) selects the in-phase level through a binary
//! reflected Gray code, the second half selects the quadrature level the same
//! way. Levels are the odd integers `-(m-1), ..., -1, 1, ..., m-1` with
//! `m = sqrt(M)`, scaled so that the mean symbol energy is one.

use std::hint::select_unpredictable;

use num_complex::Complex64;

use crate::error::{FtnError, Result};

/// Largest supported order (64K-QAM).
pub const MAX_ORDER: usize = 65_536;

/// Components projected together by [`Constellation::project_in_place`].
const LANES: usize = 8;

/// Relative slack accepted by [`Constellation::demap_symbols`] when matching a
/// value to a level.
const LEVEL_MATCH_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    order: usize,
    bits_per_axis: u32,
    levels: Vec<f64>,
    /// Decision cuts between consecutive levels (`m - 1` entries): a value
    /// moves up past cut `i` when it is strictly greater. Negative midpoints
    /// are stored one ulp lower so that a value exactly on them goes up,
    /// toward the smaller magnitude.
    thresholds: Vec<f64>,
    scale: f64,
}

#[inline]
fn gray_encode(i: u32) -> u32 {
    i ^ (i >> 1)
}

#[inline]
fn gray_decode(mut g: u32) -> u32 {
    let mut shift = 1;
    while shift < 32 {
        g ^= g >> shift;
        shift <<= 1;
    }
    g
}

impl Constellation {
    /// Builds the square `M`-QAM alphabet.
    pub fn new(order: usize) -> Result<Self> {
        if !(4..=MAX_ORDER).contains(&order) || !order.is_power_of_two() {
            return Err(FtnError::UnsupportedOrder(order));
        }
        let bits = order.trailing_zeros();
        if bits % 2 != 0 {
            return Err(FtnError::UnsupportedOrder(order));
        }
        let bits_per_axis = bits / 2;
        let side = 1usize << bits_per_axis;
        // Mean energy of the unscaled lattice is 2 (M - 1) / 3.
        let scale = (3.0 / (2.0 * (order as f64 - 1.0))).sqrt();
        let levels: Vec<f64> = (0..side)
            .map(|i| (2.0 * i as f64 - (side as f64 - 1.0)) * scale)
            .collect();
        let thresholds = levels
            .windows(2)
            .map(|w| {
                let t: f64 = 0.5 * (w[0] + w[1]);
                if t < 0.0 {
                    f64::from_bits(t.to_bits() + 1)
                } else {
                    t
                }
            })
            .collect();
        Ok(Self {
            order,
            bits_per_axis,
            levels,
            thresholds,
            scale,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of levels per axis, `m = sqrt(M)`.
    pub fn side(&self) -> usize {
        self.levels.len()
    }

    pub fn bits_per_axis(&self) -> usize {
        self.bits_per_axis as usize
    }

    pub fn bits_per_symbol(&self) -> usize {
        2 * self.bits_per_axis as usize
    }

    /// Normalization factor applied to the odd-integer lattice.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Per-axis levels in increasing order.
    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    /// Smallest and largest per-axis level (the convex hull of one axis).
    pub fn hull(&self) -> (f64, f64) {
        (self.levels[0], self.levels[self.levels.len() - 1])
    }

    /// Comparisons spent by the projection per real component, `ceil(log2 m)`.
    pub fn comparisons_per_component(&self) -> u32 {
        self.bits_per_axis
    }

    /// Gray label of a per-axis level index.
    pub fn axis_label(&self, index: usize) -> u32 {
        gray_encode(index as u32)
    }

    /// Per-axis level index carrying the given Gray label.
    pub fn axis_index(&self, label: u32) -> usize {
        gray_decode(label) as usize
    }

    /// The point carrying `word` (in-phase label in the high bits).
    pub fn point(&self, word: u32) -> Complex64 {
        let mask = (1u32 << self.bits_per_axis) - 1;
        let i = self.axis_index(word >> self.bits_per_axis);
        let q = self.axis_index(word & mask);
        Complex64::new(self.levels[i], self.levels[q])
    }

    /// All `M` points indexed by their bit word.
    pub fn points(&self) -> Vec<Complex64> {
        (0..self.order as u32).map(|w| self.point(w)).collect()
    }

    pub fn mean_energy(&self) -> f64 {
        let side = self.side() as f64;
        let axis: f64 = self.levels.iter().map(|l| l * l).sum::<f64>() / side;
        2.0 * axis
    }

    /// Maps a bit sequence (values 0/1) onto symbols.
    pub fn map_bits(&self, bits: &[u8]) -> Result<Vec<Complex64>> {
        let bps = self.bits_per_symbol();
        if bits.len() % bps != 0 {
            return Err(FtnError::BitLength {
                len: bits.len(),
                bits_per_symbol: bps,
            });
        }
        Ok(bits
            .chunks_exact(bps)
            .map(|word| {
                let w = word.iter().fold(0u32, |acc, &b| (acc << 1) | u32::from(b & 1));
                self.point(w)
            })
            .collect())
    }

    /// Inverse of [`map_bits`](Self::map_bits). Every symbol must lie on the
    /// lattice; project noisy values first.
    pub fn demap_symbols(&self, symbols: &[Complex64]) -> Result<Vec<u8>> {
        let mut bits = Vec::with_capacity(symbols.len() * self.bits_per_symbol());
        for (n, s) in symbols.iter().enumerate() {
            let err = || FtnError::NotAConstellationPoint {
                index: n,
                re: s.re,
                im: s.im,
            };
            let i = self.exact_level_index(s.re).ok_or_else(err)?;
            let q = self.exact_level_index(s.im).ok_or_else(err)?;
            self.push_axis_bits(i, &mut bits);
            self.push_axis_bits(q, &mut bits);
        }
        Ok(bits)
    }

    /// Bit word of a point given its per-axis level indices.
    pub fn word_of(&self, i_index: usize, q_index: usize) -> u32 {
        (self.axis_label(i_index) << self.bits_per_axis) | self.axis_label(q_index)
    }

    fn push_axis_bits(&self, index: usize, out: &mut Vec<u8>) {
        let label = self.axis_label(index);
        for b in (0..self.bits_per_axis).rev() {
            out.push(((label >> b) & 1) as u8);
        }
    }

    /// Index of the level equal to `x`, if any.
    pub fn exact_level_index(&self, x: f64) -> Option<usize> {
        if !x.is_finite() {
            return None;
        }
        let idx = self.nearest_index(x);
        let tol = LEVEL_MATCH_TOL * self.scale.max(x.abs());
        ((x - self.levels[idx]).abs() <= tol).then_some(idx)
    }

    /// Index of the level nearest to `x` by binary search over the decision
    /// thresholds. Exact midpoints go to the smaller-magnitude level; the
    /// midpoint at zero goes to the negative level.
    #[inline]
    pub fn nearest_index(&self, x: f64) -> usize {
        // The level count is a power of two, so every search takes exactly
        // `bits_per_axis` halvings; the step is selected without a branch
        // so a random input does not cost a misprediction per comparison.
        let mut lo = 0usize;
        let mut half = self.levels.len() >> 1;
        while half > 0 {
            let t = self.thresholds[lo + half - 1];
            lo = select_unpredictable(x > t, lo + half, lo);
            half >>= 1;
        }
        lo
    }

    /// Nearest level together with the number of comparisons spent.
    pub fn nearest_level_counted(&self, x: f64) -> (f64, u32) {
        let mut lo = 0usize;
        let mut hi = self.levels.len();
        let mut comparisons = 0;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            let t = self.thresholds[mid - 1];
            comparisons += 1;
            if x > t {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (self.levels[lo], comparisons)
    }

    /// Componentwise nearest-level projection onto the lattice.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(FtnError::NonFinite(i));
        }
        let mut out = x.to_vec();
        self.project_in_place(&mut out);
        Ok(out)
    }

    /// Unchecked in-place projection used on hot paths. Inputs must be finite.
    #[inline]
    pub fn project_in_place(&self, x: &mut [f64]) {
        // Several searches advance in lockstep so their load-compare chains
        // overlap instead of running back to back.
        let mut chunks = x.chunks_exact_mut(LANES);
        for c in &mut chunks {
            let mut lo = [0usize; LANES];
            let mut half = self.levels.len() >> 1;
            while half > 0 {
                for (l, v) in lo.iter_mut().zip(c.iter()) {
                    let t = self.thresholds[*l + half - 1];
                    *l = select_unpredictable(*v > t, *l + half, *l);
                }
                half >>= 1;
            }
            for (v, l) in c.iter_mut().zip(lo) {
                debug_assert!(v.is_finite());
                *v = self.levels[l];
            }
        }
        for v in chunks.into_remainder() {
            *v = self.levels[self.nearest_index(*v)];
        }
    }

    /// Nearest point for each (possibly noisy) complex value.
    pub fn slice_symbols(&self, symbols: &[Complex64]) -> Vec<Complex64> {
        symbols
            .iter()
            .map(|s| {
                Complex64::new(
                    self.levels[self.nearest_index(s.re)],
                    self.levels[self.nearest_index(s.im)],
                )
            })
            .collect()
    }
}
