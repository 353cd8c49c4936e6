use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, CatcherError, Result};
use crate::protocol::StoppingProtocol;

/// Gaussian walls are treated as exactly zero beyond this many widths.
pub const GAUSSIAN_SUPPORT_WIDTHS: f64 = 12.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WallKind {
    /// Quasi-infinite step `V_inf` for `y >= 0`.
    Ideal,
    /// `V0 exp(-y^2 / (2 dx_V^2))`.
    Gaussian,
    /// No wall; free propagation.
    None,
}

/// Shape of the moving wall, as a function of the distance
/// `y = x - x_m(t)` from the mirror. Heights are energies divided by hbar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WallSpec {
    pub kind: WallKind,
    pub v0_over_hbar: f64,
    pub dx_v: f64,
    pub v_inf_over_hbar: f64,
    /// Width over which the ideal step rises smoothly from 0 to `V_inf`.
    /// Zero gives a sharp step.
    pub ramp_width: f64,
}

impl WallSpec {
    pub fn gaussian(v0_over_hbar: f64, dx_v: f64) -> Result<Self> {
        ensure_positive("v0_over_hbar", v0_over_hbar)?;
        ensure_positive("dx_v", dx_v)?;
        Ok(Self {
            kind: WallKind::Gaussian,
            v0_over_hbar,
            dx_v,
            v_inf_over_hbar: 0.0,
            ramp_width: 0.0,
        })
    }

    pub fn ideal(v_inf_over_hbar: f64, ramp_width: f64) -> Result<Self> {
        ensure_positive("v_inf_over_hbar", v_inf_over_hbar)?;
        if !(ramp_width >= 0.0) || !ramp_width.is_finite() {
            return Err(CatcherError::param(
                "ramp_width",
                format!("must be >= 0, got {ramp_width}"),
            ));
        }
        Ok(Self {
            kind: WallKind::Ideal,
            v0_over_hbar: 0.0,
            dx_v: 0.0,
            v_inf_over_hbar,
            ramp_width,
        })
    }

    pub fn none() -> Self {
        Self {
            kind: WallKind::None,
            v0_over_hbar: 0.0,
            dx_v: 0.0,
            v_inf_over_hbar: 0.0,
            ramp_width: 0.0,
        }
    }

    /// Smallest admissible ideal-wall height for velocities up to `v_max`:
    /// 100 times the largest kinetic energy, over hbar.
    pub fn min_ideal_height(mu: f64, v_max: f64) -> f64 {
        100.0 * 0.5 * mu * v_max * v_max
    }

    /// Wall profile at distance `y` from the mirror.
    pub fn shape(&self, y: f64) -> f64 {
        match self.kind {
            WallKind::None => 0.0,
            WallKind::Gaussian => {
                if y.abs() > GAUSSIAN_SUPPORT_WIDTHS * self.dx_v {
                    0.0
                } else {
                    self.v0_over_hbar * (-y * y / (2.0 * self.dx_v * self.dx_v)).exp()
                }
            }
            WallKind::Ideal => {
                if y < 0.0 {
                    0.0
                } else if y >= self.ramp_width {
                    self.v_inf_over_hbar
                } else {
                    let u = y / self.ramp_width;
                    self.v_inf_over_hbar * u * u * (3.0 - 2.0 * u)
                }
            }
        }
    }

    /// Interval of `y` outside which the profile vanishes; `None` for no wall.
    /// The ideal wall extends to `+inf`.
    pub fn support(&self) -> Option<(f64, f64)> {
        match self.kind {
            WallKind::None => None,
            WallKind::Gaussian => {
                let r = GAUSSIAN_SUPPORT_WIDTHS * self.dx_v;
                Some((-r, r))
            }
            WallKind::Ideal => Some((0.0, f64::INFINITY)),
        }
    }

    /// Length scale of the wall edge, used to size the domain behind it.
    pub fn edge_width(&self) -> f64 {
        match self.kind {
            WallKind::None => 0.0,
            WallKind::Gaussian => self.dx_v,
            WallKind::Ideal => self.ramp_width,
        }
    }
}

/// Moving-wall potential (1/s) at position `x` and time `t`.
pub fn potential(x: f64, t: f64, wall: &WallSpec, p: &StoppingProtocol) -> Result<f64> {
    if wall.kind == WallKind::None {
        return Ok(0.0);
    }
    if t > p.t_f() {
        return Err(CatcherError::Domain(format!(
            "potential needs t <= t_f = {}, got {t}",
            p.t_f()
        )));
    }
    Ok(wall.shape(x - p.mirror_position(t)?))
}
