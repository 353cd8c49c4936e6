use num_complex::Complex64;

use crate::error::{ensure_finite, CatcherError, Result};

/// Wave function sampled on the uniform grid `x_j = x_min + j dx`,
/// `j = 0..n_points`, at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridState {
    x_min: f64,
    x_max: f64,
    pub psi: Vec<Complex64>,
    pub t: f64,
}

impl GridState {
    pub fn new(x_min: f64, x_max: f64, psi: Vec<Complex64>, t: f64) -> Result<Self> {
        ensure_finite("x_min", x_min)?;
        ensure_finite("x_max", x_max)?;
        ensure_finite("t", t)?;
        if !(x_max > x_min) || psi.len() < 3 {
            return Err(CatcherError::param(
                "grid",
                format!(
                    "need x_min < x_max and at least 3 points, got [{x_min}, {x_max}] with {}",
                    psi.len()
                ),
            ));
        }
        Ok(Self { x_min, x_max, psi, t })
    }

    pub fn zeros(x_min: f64, x_max: f64, n_points: usize, t: f64) -> Result<Self> {
        Self::new(x_min, x_max, vec![Complex64::new(0.0, 0.0); n_points], t)
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn n_points(&self) -> usize {
        self.psi.len()
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.psi.len() - 1) as f64
    }

    pub fn x(&self, j: usize) -> f64 {
        self.x_min + j as f64 * self.dx()
    }

    /// Index of the node nearest to `x`, clamped to the grid.
    pub fn index_of(&self, x: f64) -> usize {
        let k = ((x - self.x_min) / self.dx()).round();
        if k <= 0.0 {
            0
        } else {
            (k as usize).min(self.psi.len() - 1)
        }
    }

    pub fn density(&self) -> Vec<f64> {
        self.psi.iter().map(|z| z.norm_sqr()).collect()
    }

    /// Trapezoidal `int |psi|^2 dx`.
    pub fn norm(&self) -> f64 {
        crate::ensemble::trapezoid(&self.density(), self.dx())
    }

    pub fn normalize(&mut self) {
        let scale = 1.0 / self.norm().sqrt();
        for z in &mut self.psi {
            *z *= scale;
        }
    }

    pub fn peak_amplitude(&self) -> f64 {
        self.psi.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}
