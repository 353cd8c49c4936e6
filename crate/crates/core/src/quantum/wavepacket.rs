use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::grid::GridState;
use crate::error::{ensure_finite, ensure_positive, CatcherError, Result};

/// Reduced Planck constant (J s).
pub const HBAR: f64 = 1.054_571_817e-34;
/// Mass of a rubidium atom as used in the stopping examples (kg).
pub const RUBIDIUM_MASS: f64 = 14.19226e-26;

/// Initial Gaussian wave packet with prescribed position and velocity
/// moments, not necessarily of minimum uncertainty.
///
/// The packet is a minimum-uncertainty Gaussian that has been spreading
/// freely for a time `delta`; `beta = x0 - delta v0` is where its centre was
/// at that earlier instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WavepacketSpec {
    pub x0: f64,
    pub dx_spread: f64,
    pub v0: f64,
    pub dv_spread: f64,
    pub mass: f64,
    mu: f64,
    delta: f64,
    beta: f64,
}

impl WavepacketSpec {
    pub fn new(x0: f64, dx_spread: f64, v0: f64, dv_spread: f64, mass: f64) -> Result<Self> {
        ensure_finite("x0", x0)?;
        ensure_positive("dx", dx_spread)?;
        ensure_finite("v0", v0)?;
        ensure_positive("dv", dv_spread)?;
        ensure_positive("mass", mass)?;
        let mu = mass / HBAR;
        let product = dx_spread * dv_spread;
        let bound = 1.0 / (2.0 * mu);
        // s = 2 dx dv mu >= 1 is the uncertainty relation
        let s = 2.0 * product * mu;
        // tolerate rounding when a minimum-uncertainty packet is built from
        // dv = 1/(2 mu dx)
        if s < 1.0 - 1e-12 {
            return Err(CatcherError::UncertaintyViolation { product, bound });
        }
        let s = s.max(1.0);
        // sqrt(4 dx^2 - 1/(dv mu)^2) / (2 dv), factored so that near-minimal
        // packets do not lose their digits to cancellation
        let delta = ((s - 1.0) * (s + 1.0)).sqrt() / (2.0 * dv_spread * dv_spread * mu);
        Ok(Self {
            x0,
            dx_spread,
            v0,
            dv_spread,
            mass,
            mu,
            delta,
            beta: x0 - delta * v0,
        })
    }

    /// `m / hbar` (s/m^2).
    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// Position-velocity correlation time (s).
    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Free-particle position spread at time `t`.
    pub fn free_position_spread(&self, t: f64) -> f64 {
        let dv = self.dv_spread;
        (self.dx_spread * self.dx_spread + 2.0 * self.delta * dv * dv * t + dv * dv * t * t).sqrt()
    }

    /// Exponent of the unnormalized initial wave function at `x`.
    pub fn log_amplitude(&self, x: f64) -> Complex64 {
        let i = Complex64::i();
        let a = 2.0 * self.dv_spread * self.dv_spread * self.mu;
        let pref = -self.mu / (2.0 * (1.0 + i * a * self.delta));
        let y = x - self.beta;
        let bracket = i * self.v0 * (self.delta * self.v0 - 2.0 * x)
            + a * (y * y + 2.0 * self.delta * self.v0 * self.beta);
        pref * bracket
    }
}

/// Samples the normalized initial wave function on `grid`, which must cover
/// `x0 +- 8 dx`.
pub fn build_initial_wavefunction(spec: &WavepacketSpec, grid: &GridState) -> Result<GridState> {
    let lo = spec.x0 - 8.0 * spec.dx_spread;
    let hi = spec.x0 + 8.0 * spec.dx_spread;
    if grid.x_min() > lo || grid.x_max() < hi {
        return Err(CatcherError::GridTooSmall(format!(
            "grid [{:.4e}, {:.4e}] m does not contain x0 +- 8 dx = [{lo:.4e}, {hi:.4e}] m",
            grid.x_min(),
            grid.x_max()
        )));
    }
    let exponents: Vec<Complex64> = (0..grid.n_points())
        .map(|j| spec.log_amplitude(grid.x(j)))
        .collect();
    let shift = exponents
        .iter()
        .map(|e| e.re)
        .fold(f64::NEG_INFINITY, f64::max);
    let psi: Vec<Complex64> = exponents
        .iter()
        .map(|&e| (e - shift).exp())
        .collect();
    let mut state = GridState::new(grid.x_min(), grid.x_max(), psi, grid.t)?;
    state.normalize();
    Ok(state)
}
