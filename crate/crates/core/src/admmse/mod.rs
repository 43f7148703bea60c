//! ADMM-based sequence estimation.
//!
//! Detection minimizes `f(a) = a^T Q a + q^T a + r` over the QAM lattice by a
//! nonconvex ADMM heuristic: a banded linear solve, a per-coordinate rounding
//! onto the lattice and a scaled dual update, repeated from several random
//! starts while the best feasible point is kept.
//!
//! Observations are divided by the received amplitude before assembly, so the
//! lattice is always the unit-energy constellation.

mod detector;
mod problem;
mod soft;

pub use detector::{admm_step, detect, AdmmDetector, AdmmState, Detection, DetectionReport};
pub use problem::{assemble_problem, precondition, DetectionProblem, ProblemTemplate};
pub use soft::{detect_soft, SoftOutput};

use crate::error::{FtnError, Result};

/// Default number of ADMM iterations per restart.
pub const DEFAULT_ITERATIONS: usize = 200;
/// Default number of random restarts.
pub const DEFAULT_RESTARTS: usize = 50;
/// Magnitude reported for bits on which every candidate agrees.
pub const DEFAULT_LLR_CLAMP: f64 = 50.0;

/// Coarse grid searched when tuning `rho`.
pub const RHO_GRID: [f64; 7] = [0.05, 0.1, 0.2, 0.35, 0.5, 0.75, 1.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmmParams {
    pub rho: f64,
    pub iterations: usize,
    pub restarts: usize,
    pub seed: u64,
    /// Solve `[Q + rho I] a = c` instead of the gradient-exact `[2Q + rho I] a = c`.
    pub match_paper_linear_system: bool,
    pub llr_clamp: f64,
    /// Stop as soon as the best objective falls to this value. Off by default.
    pub early_exit_floor: Option<f64>,
}

impl AdmmParams {
    pub fn with_rho(rho: f64) -> Self {
        Self {
            rho,
            iterations: DEFAULT_ITERATIONS,
            restarts: DEFAULT_RESTARTS,
            seed: 0,
            match_paper_linear_system: false,
            llr_clamp: DEFAULT_LLR_CLAMP,
            early_exit_floor: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0) || !self.rho.is_finite() {
            return Err(FtnError::InvalidParameter(format!("rho {} must be positive", self.rho)));
        }
        if self.iterations == 0 {
            return Err(FtnError::InvalidParameter("iterations must be >= 1".into()));
        }
        if self.restarts == 0 {
            return Err(FtnError::InvalidParameter("restarts must be >= 1".into()));
        }
        if !(self.llr_clamp > 0.0) {
            return Err(FtnError::InvalidParameter(format!(
                "llr clamp {} must be positive",
                self.llr_clamp
            )));
        }
        Ok(())
    }

    /// Factor on `Q` in the step-1 coefficient matrix.
    pub fn q_coefficient(&self) -> f64 {
        if self.match_paper_linear_system {
            1.0
        } else {
            2.0
        }
    }
}

/// Published penalty values. `None` means the order needs an explicit `rho`.
pub fn default_rho(order: usize, tau: f64, alpha: f64) -> Option<f64> {
    let near = |a: f64, b: f64| (a - b).abs() < 1e-9;
    match order {
        4 => Some(0.5),
        16 if near(tau, 0.7) && near(alpha, 0.5) => Some(0.35),
        16 if near(tau, 0.7) && near(alpha, 0.3) => Some(0.2),
        16 => Some(0.5),
        _ => None,
    }
}
