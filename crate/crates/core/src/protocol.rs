//! Mirror trajectory `x_m(t) = d sqrt(t / t_f)`, the dimensionless scaling
//! built on it, and the worst-case protocol design search.
//!
//! Everything dimensional is in SI base units.

use serde::{Deserialize, Serialize};

use crate::classical_map::forward_map;
use crate::error::{ensure_finite, ensure_positive, CatcherError, Result};

/// Design parameters of the moving mirror.
///
/// Only `d` and `t_f` are stored; the boundary velocity `v_b = d / t_f` and
/// the trajectory prefactor `alpha = d / sqrt(t_f)` are always derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoppingProtocol {
    d: f64,
    t_f: f64,
}

impl StoppingProtocol {
    pub fn new(d: f64, t_f: f64) -> Result<Self> {
        ensure_positive("d", d)?;
        ensure_positive("t_f", t_f)?;
        Ok(Self { d, t_f })
    }

    /// Protocol with wall displacement `d` and boundary velocity `v_b`.
    pub fn with_boundary_velocity(d: f64, v_b: f64) -> Result<Self> {
        ensure_positive("v_b", v_b)?;
        Self::new(d, d / v_b)
    }

    /// Wall displacement at `t_f` (m).
    pub fn d(&self) -> f64 {
        self.d
    }

    /// Final time (s).
    pub fn t_f(&self) -> f64 {
        self.t_f
    }

    /// Boundary velocity `d / t_f`: the slowest speed from the origin that
    /// still reaches the wall before `t_f`.
    pub fn v_b(&self) -> f64 {
        self.d / self.t_f
    }

    pub fn alpha(&self) -> f64 {
        self.d / self.t_f.sqrt()
    }

    pub fn mirror_position(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(CatcherError::Domain(format!(
                "mirror position needs t >= 0, got {t}"
            )));
        }
        Ok(self.d * (t / self.t_f).sqrt())
    }

    /// Mirror velocity `d / (2 sqrt(t t_f))`; singular at `t = 0`.
    pub fn mirror_velocity(&self, t: f64) -> Result<f64> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(CatcherError::Domain(format!(
                "mirror velocity needs t > 0, got {t}"
            )));
        }
        Ok(self.d / (2.0 * (t * self.t_f).sqrt()))
    }

    pub fn to_dimensionless(&self, x: f64, v: f64) -> PhaseSpacePoint {
        PhaseSpacePoint::new(x / self.d, v / self.v_b())
    }

    /// Inverse of [`to_dimensionless`](Self::to_dimensionless): `(x, v)` in SI.
    pub fn from_dimensionless(&self, p: PhaseSpacePoint) -> (f64, f64) {
        (p.chi * self.d, p.nu * self.v_b())
    }

    pub fn to_dimensionless_time(&self, t: f64) -> f64 {
        t / self.t_f
    }
}

/// Dimensionless phase-space coordinates `chi = x / d`, `nu = v / v_b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpacePoint {
    pub chi: f64,
    pub nu: f64,
}

impl PhaseSpacePoint {
    pub const fn new(chi: f64, nu: f64) -> Self {
        Self { chi, nu }
    }

    pub fn checked(chi: f64, nu: f64) -> Result<Self> {
        ensure_finite("chi", chi)?;
        ensure_finite("nu", nu)?;
        Ok(Self { chi, nu })
    }

    pub fn is_finite(&self) -> bool {
        self.chi.is_finite() && self.nu.is_finite()
    }
}

/// One candidate wall displacement visited by the design search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignStep {
    pub d: f64,
    pub t_f: f64,
    /// Final velocity of the worst-case particle (m/s), signed.
    pub final_velocity: f64,
    pub collides: bool,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub protocol: StoppingProtocol,
    pub final_velocity: f64,
    pub steps: Vec<DesignStep>,
}

/// Geometric search over the wall displacement with `v_b` held fixed.
#[derive(Debug, Clone, Copy)]
pub struct DesignSearch {
    /// First candidate; `None` picks `-10 x_s` or 1 mm when `x_s = 0`.
    pub initial_d: Option<f64>,
    pub growth: f64,
    pub max_steps: usize,
}

impl Default for DesignSearch {
    fn default() -> Self {
        Self {
            initial_d: None,
            growth: 2.0,
            max_steps: 128,
        }
    }
}

impl DesignSearch {
    pub fn run(
        &self,
        x_s_worst: f64,
        v_s_min: f64,
        v_f_target: f64,
        v_b: f64,
    ) -> Result<Design> {
        ensure_finite("x_s_worst", x_s_worst)?;
        if x_s_worst > 0.0 {
            return Err(CatcherError::param(
                "x_s_worst",
                format!("must be <= 0, got {x_s_worst}"),
            ));
        }
        ensure_positive("v_s_min", v_s_min)?;
        ensure_positive("v_f_target", v_f_target)?;
        ensure_positive("v_b", v_b)?;
        if !(self.growth > 1.0) {
            return Err(CatcherError::param("growth", "must be > 1"));
        }
        if v_b >= v_s_min {
            return Err(CatcherError::Infeasible(format!(
                "boundary velocity {v_b} m/s is not below the slowest initial velocity {v_s_min} m/s"
            )));
        }

        let mut d = match self.initial_d {
            Some(d0) => {
                ensure_positive("initial_d", d0)?;
                d0
            }
            None if x_s_worst < 0.0 => -10.0 * x_s_worst,
            None => 1e-3,
        };

        let mut steps = Vec::new();
        for _ in 0..self.max_steps {
            let protocol = StoppingProtocol::with_boundary_velocity(d, v_b)?;
            let collides = v_b * (1.0 - x_s_worst / d) < v_s_min;
            let start = protocol.to_dimensionless(x_s_worst, v_s_min);
            let end = forward_map(start)?;
            let final_velocity = end.point.nu * v_b;
            let accepted = collides && final_velocity.abs() <= v_f_target;
            steps.push(DesignStep {
                d,
                t_f: protocol.t_f(),
                final_velocity,
                collides,
                accepted,
            });
            if accepted {
                return Ok(Design {
                    protocol,
                    final_velocity,
                    steps,
                });
            }
            d *= self.growth;
        }
        Err(CatcherError::Infeasible(format!(
            "no wall displacement up to {:.3e} m reaches |v_f| <= {v_f_target} m/s",
            d / self.growth
        )))
    }
}

/// Smallest wall displacement on the doubling grid that stops the worst-case
/// particle `(x_s_worst, v_s_min)` to within `v_f_target`, keeping `v_b` fixed.
pub fn design_protocol(
    x_s_worst: f64,
    v_s_min: f64,
    v_f_target: f64,
    v_b: f64,
) -> Result<StoppingProtocol> {
    DesignSearch::default()
        .run(x_s_worst, v_s_min, v_f_target, v_b)
        .map(|design| design.protocol)
}
