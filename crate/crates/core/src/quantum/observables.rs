use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::Serialize;

use super::grid::GridState;
use super::potential::{WallKind, WallSpec};
use super::HBAR;
use crate::ensemble::trapezoid;
use crate::error::Result;
use crate::protocol::StoppingProtocol;

/// Velocity density `p_v = mu |phi(k)|^2` on `v = k / mu`, in ascending
/// order.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityDensity {
    pub v: Vec<f64>,
    pub density: Vec<f64>,
    pub dv: f64,
}

impl VelocityDensity {
    /// Rectangle sum, the form in which Parseval's identity is exact.
    pub fn total(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.dv
    }

    pub fn mean_std(&self) -> (f64, f64) {
        let total = self.total();
        let mean = self
            .v
            .iter()
            .zip(&self.density)
            .map(|(v, p)| v * p)
            .sum::<f64>()
            * self.dv
            / total;
        let var = self
            .v
            .iter()
            .zip(&self.density)
            .map(|(v, p)| (v - mean) * (v - mean) * p)
            .sum::<f64>()
            * self.dv
            / total;
        (mean, var.sqrt())
    }

    /// Probability of `|v| < threshold`.
    pub fn probability_below(&self, threshold: f64) -> f64 {
        self.v
            .iter()
            .zip(&self.density)
            .filter(|(v, _)| v.abs() < threshold)
            .map(|(_, p)| p)
            .sum::<f64>()
            * self.dv
    }
}

/// Velocity density of `state` by FFT. The wave function is zero-padded to a
/// power of two, which refines the velocity grid without changing the
/// density it samples.
pub fn velocity_density(state: &GridState, mass: f64) -> VelocityDensity {
    let mu = mass / HBAR;
    let n = state.n_points();
    let m = n.next_power_of_two();
    let dx = state.dx();
    let mut buf = vec![Complex64::new(0.0, 0.0); m];
    buf[..n].copy_from_slice(&state.psi);
    FftPlanner::new().plan_fft_forward(m).process(&mut buf);

    let dk = 2.0 * std::f64::consts::PI / (m as f64 * dx);
    // phi(k) = dx / sqrt(2 pi) sum_j psi_j exp(-i k x_j)
    let scale = mu * dx * dx / (2.0 * std::f64::consts::PI);
    let half = m / 2;
    let mut v = Vec::with_capacity(m);
    let mut density = Vec::with_capacity(m);
    for s in 0..m {
        let idx = (s + half) % m;
        let k = (s as f64 - half as f64) * dk;
        v.push(k / mu);
        density.push(scale * buf[idx].norm_sqr());
    }
    VelocityDensity {
        v,
        density,
        dv: dk / mu,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Observables {
    pub t: f64,
    pub norm: f64,
    pub mean_x: f64,
    pub std_x: f64,
    pub mean_v: f64,
    pub std_v: f64,
    pub stopped_prob: f64,
    pub transmitted_prob: f64,
}

/// Moments and stopping summary of `state`. The transmitted probability is
/// the weight beyond the mirror for a Gaussian wall; an ideal wall transmits
/// nothing by construction, and without a wall it is reported as zero.
pub fn observables(
    state: &GridState,
    mass: f64,
    v_threshold: f64,
    wall: &WallSpec,
    p: &StoppingProtocol,
) -> Result<Observables> {
    let pv = velocity_density(state, mass);
    observables_with(state, &pv, v_threshold, wall, p)
}

/// As [`observables`], reusing an already computed velocity density.
pub fn observables_with(
    state: &GridState,
    pv: &VelocityDensity,
    v_threshold: f64,
    wall: &WallSpec,
    p: &StoppingProtocol,
) -> Result<Observables> {
    let dx = state.dx();
    let rho = state.density();
    let norm = trapezoid(&rho, dx);
    let xs: Vec<f64> = (0..rho.len()).map(|j| state.x(j)).collect();
    let weighted: Vec<f64> = xs.iter().zip(&rho).map(|(x, r)| x * r).collect();
    let mean_x = trapezoid(&weighted, dx) / norm;
    let spread: Vec<f64> = xs
        .iter()
        .zip(&rho)
        .map(|(x, r)| (x - mean_x) * (x - mean_x) * r)
        .collect();
    let std_x = (trapezoid(&spread, dx) / norm).sqrt();
    let (mean_v, std_v) = pv.mean_std();
    let transmitted_prob = match wall.kind {
        WallKind::Gaussian => {
            let xm = p.mirror_position(state.t)?;
            xs.iter()
                .zip(&rho)
                .filter(|(x, _)| **x > xm)
                .map(|(_, r)| r)
                .sum::<f64>()
                * dx
        }
        WallKind::Ideal | WallKind::None => 0.0,
    };
    Ok(Observables {
        t: state.t,
        norm,
        mean_x,
        std_x,
        mean_v,
        std_v,
        stopped_prob: pv.probability_below(v_threshold),
        transmitted_prob,
    })
}
