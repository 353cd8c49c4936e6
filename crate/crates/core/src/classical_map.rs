//! Exact phase-space map of a point particle reflected once by the `sqrt(t)`
//! mirror, in dimensionless variables (`chi = x/d`, `nu = v/v_b`,
//! `tau = t/t_f`), plus a brute-force trajectory integrator used as an oracle.
//!
//! Particles start at `tau = 0` with `chi_s <= 0`. The wall sits at
//! `sqrt(tau)`; a particle collides before `tau = 1` iff `nu_s > 1 - chi_s`.
//! The collision happens at `tau_c = eta^2` where `eta` is the positive root of
//! `nu_s eta^2 - eta + chi_s = 0`.

use serde::{Deserialize, Serialize};

use crate::error::{CatcherError, Result};
use crate::protocol::PhaseSpacePoint;

/// State at `tau = 1` together with how it was reached.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapResult {
    pub point: PhaseSpacePoint,
    pub collided: bool,
    /// `eta = sqrt(tau_c)` when a collision happened.
    pub collision_root: Option<f64>,
}

fn check_start(s: PhaseSpacePoint) -> Result<()> {
    if !s.is_finite() {
        return Err(CatcherError::Domain(format!("non-finite start point {s:?}")));
    }
    if s.chi > 0.0 {
        return Err(CatcherError::Domain(format!(
            "start position chi_s = {} lies ahead of the wall (chi_s must be <= 0)",
            s.chi
        )));
    }
    Ok(())
}

/// True iff the particle reaches the wall strictly before `tau = 1`.
///
/// Grazing contact at `tau = 1` (`nu_s = 1 - chi_s`) counts as free motion.
pub fn has_collision(s: PhaseSpacePoint) -> Result<bool> {
    check_start(s)?;
    Ok(s.nu > 1.0 - s.chi)
}

fn discriminant(s: PhaseSpacePoint) -> f64 {
    1.0 - 4.0 * s.chi * s.nu
}

/// Collision root `eta = (1 + sqrt(1 - 4 chi_s nu_s)) / (2 nu_s)`.
pub fn eta(s: PhaseSpacePoint) -> Result<f64> {
    check_start(s)?;
    if !(s.nu > 0.0) {
        return Err(CatcherError::Domain(format!(
            "collision root needs nu_s > 0, got {}",
            s.nu
        )));
    }
    if s.chi == 0.0 {
        return Ok(1.0 / s.nu);
    }
    Ok((1.0 + discriminant(s).sqrt()) / (2.0 * s.nu))
}

pub fn forward_map(s: PhaseSpacePoint) -> Result<MapResult> {
    if !has_collision(s)? {
        return Ok(MapResult {
            point: PhaseSpacePoint::new(s.chi + s.nu, s.nu),
            collided: false,
            collision_root: None,
        });
    }
    let root = eta(s)?;
    // 1/eta written without the subtraction, so chi_s = 0 gives nu_f = 0 exactly
    let inv_eta = 2.0 * s.nu / (1.0 + discriminant(s).sqrt());
    let nu_f = inv_eta - s.nu;
    let chi_f = s.chi + nu_f + 2.0 * s.nu * root * root - root;
    Ok(MapResult {
        point: PhaseSpacePoint::new(chi_f, nu_f),
        collided: true,
        collision_root: Some(root),
    })
}

fn is_reflected_image(f: PhaseSpacePoint) -> bool {
    f.chi > f.nu && f.nu <= 0.0
}

/// `lambda = (1 + sqrt(1 - 4 nu_f (chi_f - nu_f))) / (2 (chi_f - nu_f))`, the
/// reciprocal collision root recovered from a reflected final state.
pub fn lambda_inv(f: PhaseSpacePoint) -> Result<f64> {
    if !f.is_finite() || !is_reflected_image(f) {
        return Err(CatcherError::Domain(format!(
            "lambda needs chi_f > nu_f and nu_f <= 0, got {f:?}"
        )));
    }
    let gap = f.chi - f.nu;
    Ok((1.0 + (1.0 - 4.0 * f.nu * gap).sqrt()) / (2.0 * gap))
}

/// Initial state that ends at `f` at `tau = 1`.
///
/// The result may have `chi_s > 0` when `f` is not an image of the physical
/// domain; callers that need a density must treat that as zero weight.
pub fn inverse_map(f: PhaseSpacePoint) -> Result<PhaseSpacePoint> {
    if !f.is_finite() {
        return Err(CatcherError::Domain(format!("non-finite final point {f:?}")));
    }
    if f.chi >= 1.0 {
        return Err(CatcherError::Domain(format!(
            "final position chi_f = {} is not below the wall (chi_f must be < 1)",
            f.chi
        )));
    }
    if is_reflected_image(f) {
        let lambda = lambda_inv(f)?;
        let nu_s = lambda - f.nu;
        let chi_s = f.chi - f.nu + 2.0 / (lambda * lambda) * (f.nu - lambda / 2.0);
        Ok(PhaseSpacePoint::new(chi_s, nu_s))
    } else {
        Ok(PhaseSpacePoint::new(f.chi - f.nu, f.nu))
    }
}

fn require_collision(s: PhaseSpacePoint) -> Result<()> {
    if !(s.nu > 0.0) || !has_collision(s)? {
        return Err(CatcherError::Domain(format!(
            "{s:?} is on the free branch; the derivatives there are 1 and 0"
        )));
    }
    Ok(())
}

/// `d nu_f / d nu_s = -1 + 1/sqrt(1 - 4 nu_s chi_s)` on the collision branch.
pub fn dnu_f_dnu_s(s: PhaseSpacePoint) -> Result<f64> {
    require_collision(s)?;
    Ok(1.0 / discriminant(s).sqrt() - 1.0)
}

/// `d nu_f / d chi_s` on the collision branch.
///
/// Evaluated as `4 nu^2 / ((1 + sqrt D)^2 sqrt D)`, which equals the
/// `(1 - sqrt D)^2 / (4 chi^2 sqrt D)` form but stays finite at `chi_s = 0`.
pub fn dnu_f_dchi_s(s: PhaseSpacePoint) -> Result<f64> {
    require_collision(s)?;
    let sq = discriminant(s).sqrt();
    let a = 1.0 + sq;
    Ok(4.0 * s.nu * s.nu / (a * a * sq))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleResult {
    pub result: MapResult,
    pub bounces: u32,
}

/// Relative width at which the crossing-time bisection stops.
const CROSSING_TOLERANCE: f64 = 1e-12;

/// Time-stepped bounce simulation used to check [`forward_map`].
///
/// Free flight between steps is exact; after each step the particle is
/// tested against the wall at `sqrt(tau)`, and a crossing is located by
/// bisection before applying `nu -> 2 v_wall - nu`. Stepping starts at
/// `tau_0 = min(1, 1/nu^2)`, before which `chi_s + nu tau < sqrt(tau)` holds
/// for every `chi_s <= 0`.
pub fn trajectory_oracle(s: PhaseSpacePoint, dt: f64) -> Result<OracleResult> {
    check_start(s)?;
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(CatcherError::param("dt", format!("must be > 0, got {dt}")));
    }

    // trajectory is chi(tau) = anchor_chi + nu (tau - anchor_tau)
    let mut anchor_chi = s.chi;
    let mut anchor_tau = 0.0;
    let mut nu = s.nu;
    let mut bounces = 0u32;
    let mut root = None;

    let gap = |anchor_chi: f64, anchor_tau: f64, nu: f64, tau: f64| {
        anchor_chi + nu * (tau - anchor_tau) - tau.sqrt()
    };

    let mut tau = if nu > 0.0 { (1.0 / (nu * nu)).min(1.0) } else { 1.0 };
    while tau < 1.0 {
        let next = (tau + dt).min(1.0);
        if gap(anchor_chi, anchor_tau, nu, next) > 0.0 {
            let (mut lo, mut hi) = (tau, next);
            if gap(anchor_chi, anchor_tau, nu, lo) > 0.0 {
                hi = lo;
            } else {
                while hi - lo > CROSSING_TOLERANCE * hi {
                    let mid = 0.5 * (lo + hi);
                    if gap(anchor_chi, anchor_tau, nu, mid) > 0.0 {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
            }
            let tau_c = 0.5 * (lo + hi);
            let wall = tau_c.sqrt();
            anchor_chi = wall;
            anchor_tau = tau_c;
            nu = 1.0 / wall - nu;
            bounces += 1;
            root.get_or_insert(wall);
            tau = tau_c;
            continue;
        }
        tau = next;
    }

    Ok(OracleResult {
        result: MapResult {
            point: PhaseSpacePoint::new(anchor_chi + nu * (1.0 - anchor_tau), nu),
            collided: bounces > 0,
            collision_root: root,
        },
        bounces,
    })
}
