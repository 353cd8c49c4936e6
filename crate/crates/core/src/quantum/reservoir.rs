//! Far field: content that can no longer reach the wall evolves freely, and
//! under the same discretization that evolution is diagonal in Fourier space.
//!
//! On a periodic box with the grid spacing, the compact Laplacian and every
//! Cayley substep are diagonal in the plane waves `exp(i theta b)`. A full
//! step multiplies mode `theta` by `exp(-i Phi(theta))` with
//! `Phi = sum_w 2 atan(w h lambda / 2)` and
//! `lambda = kappa (2 - 2 cos theta) / ((10 + 2 cos theta) / 12)`,
//! so content handed over at step `n` is reproduced at any later step exactly
//! as the grid stepper would produce it on an unbounded line.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub(crate) struct Reservoir {
    n: usize,
    /// Box index of grid node 0; the box is padded on both sides.
    offset: usize,
    /// Spectrum referred back to step 0.
    spectrum: Vec<Complex64>,
    phase: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    empty: bool,
}

impl Reservoir {
    pub(crate) fn new(n: usize, kappa: f64, h: f64, weights: &[f64]) -> Self {
        let m = (2 * n).next_power_of_two();
        let mut planner = FftPlanner::new();
        let phase = (0..m)
            .map(|q| {
                let theta = 2.0 * std::f64::consts::PI * q as f64 / m as f64;
                let s = (0.5 * theta).sin();
                let lambda = kappa * 4.0 * s * s * 12.0 / (10.0 + 2.0 * theta.cos());
                weights.iter().map(|w| 2.0 * (0.5 * w * h * lambda).atan()).sum()
            })
            .collect();
        Self {
            n,
            offset: (m - n) / 2,
            spectrum: vec![Complex64::new(0.0, 0.0); m],
            phase,
            forward: planner.plan_fft_forward(m),
            inverse: planner.plan_fft_inverse(m),
            empty: true,
        }
    }

    pub(crate) fn is_empty(&self) -> bool {
        self.empty
    }

    /// Takes over `values`, the wave function on nodes `first..`, at `step`.
    pub(crate) fn deposit(&mut self, first: usize, values: &[Complex64], step: u64) {
        let m = self.spectrum.len();
        let mut buf = vec![Complex64::new(0.0, 0.0); m];
        let start = self.offset + first;
        buf[start..start + values.len()].copy_from_slice(values);
        self.forward.process(&mut buf);
        let n = step as f64;
        for ((s, b), phi) in self.spectrum.iter_mut().zip(&buf).zip(&self.phase) {
            *s += b * Complex64::cis(n * phi);
        }
        self.empty = false;
    }

    /// Adds the far field at `step` to `psi` (the whole grid) and returns the
    /// largest amplitude found in the left and right padding, i.e. content
    /// that has left the grid.
    pub(crate) fn add_to(&self, psi: &mut [Complex64], step: u64) -> (f64, f64) {
        debug_assert_eq!(psi.len(), self.n);
        if self.empty {
            return (0.0, 0.0);
        }
        let m = self.spectrum.len();
        let n = step as f64;
        let scale = 1.0 / m as f64;
        let mut buf: Vec<Complex64> = self
            .spectrum
            .iter()
            .zip(&self.phase)
            .map(|(s, phi)| s * Complex64::cis(-n * phi) * scale)
            .collect();
        self.inverse.process(&mut buf);
        for (p, b) in psi.iter_mut().zip(&buf[self.offset..self.offset + self.n]) {
            *p += b;
        }
        let pad_max = |r: &[Complex64]| r.iter().map(|z| z.norm()).fold(0.0, f64::max);
        (
            pad_max(&buf[..self.offset]),
            pad_max(&buf[self.offset + self.n..]),
        )
    }
}
