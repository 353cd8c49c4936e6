//! Transport of a truncated-Gaussian phase-space density through the mirror
//! map, evaluated two ways: exactly on a grid by pulling final points back
//! through [`inverse_map`], and by Monte Carlo.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classical_map::{forward_map, inverse_map, MapResult};
use crate::error::{ensure_finite, ensure_positive, CatcherError, Result};
use crate::protocol::{PhaseSpacePoint, StoppingProtocol};

/// Samples per independently seeded random stream.
const STREAM_CHUNK: usize = 1 << 16;
/// Nodes per axis of the normalization quadrature.
const NORMALIZATION_NODES: usize = (1 << 16) + 1;
/// Half-width of the normalization box, in standard deviations.
const NORMALIZATION_SIGMAS: f64 = 8.0;

/// Initial density `exp(-(v-v0)^2/2dv^2 - (x-x0)^2/2dx^2) / N` for `x < 0`,
/// zero for `x >= 0`. All fields in SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    x0: f64,
    dx: f64,
    v0: f64,
    dv: f64,
    normalization: f64,
}

impl EnsembleSpec {
    pub fn new(x0: f64, dx: f64, v0: f64, dv: f64) -> Result<Self> {
        ensure_finite("x0", x0)?;
        if x0 >= 0.0 {
            return Err(CatcherError::param("x0", format!("must be < 0, got {x0}")));
        }
        ensure_positive("dx", dx)?;
        ensure_finite("v0", v0)?;
        ensure_positive("dv", dv)?;
        let mut spec = Self {
            x0,
            dx,
            v0,
            dv,
            normalization: 1.0,
        };
        spec.normalization = spec.quadrature_normalization();
        Ok(spec)
    }

    /// Spec from dimensionless parameters (`x0/d`, `dx/d`, `v0/v_b`, `dv/v_b`).
    pub fn from_dimensionless(
        p: &StoppingProtocol,
        chi0: f64,
        dchi: f64,
        nu0: f64,
        dnu: f64,
    ) -> Result<Self> {
        Self::new(chi0 * p.d(), dchi * p.d(), nu0 * p.v_b(), dnu * p.v_b())
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }
    pub fn dx(&self) -> f64 {
        self.dx
    }
    pub fn v0(&self) -> f64 {
        self.v0
    }
    pub fn dv(&self) -> f64 {
        self.dv
    }
    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    fn unnormalized(&self, x: f64, v: f64) -> f64 {
        let a = (v - self.v0) / self.dv;
        let b = (x - self.x0) / self.dx;
        (-0.5 * (a * a + b * b)).exp()
    }

    // The integrand is separable, so the tensor-product trapezoidal rule over
    // the (+-8 sigma box) x (x < 0) factorizes into two 1-D rules.
    fn quadrature_normalization(&self) -> f64 {
        let gauss = |u: f64| (-0.5 * u * u).exp();
        let x_lo = self.x0 - NORMALIZATION_SIGMAS * self.dx;
        let x_hi = (self.x0 + NORMALIZATION_SIGMAS * self.dx).min(0.0);
        let nx = trapezoid_fn(x_lo, x_hi, NORMALIZATION_NODES, |x| {
            gauss((x - self.x0) / self.dx)
        });
        let v_lo = self.v0 - NORMALIZATION_SIGMAS * self.dv;
        let v_hi = self.v0 + NORMALIZATION_SIGMAS * self.dv;
        let nv = trapezoid_fn(v_lo, v_hi, NORMALIZATION_NODES, |v| {
            gauss((v - self.v0) / self.dv)
        });
        nx * nv
    }
}

fn trapezoid_fn(lo: f64, hi: f64, nodes: usize, f: impl Fn(f64) -> f64) -> f64 {
    let h = (hi - lo) / (nodes - 1) as f64;
    let mut sum = 0.5 * (f(lo) + f(hi));
    for k in 1..nodes - 1 {
        sum += f(lo + k as f64 * h);
    }
    sum * h
}

/// Trapezoidal integral of samples on a uniform axis.
pub fn trapezoid(values: &[f64], step: f64) -> f64 {
    match values {
        [] | [_] => 0.0,
        [first, inner @ .., last] => step * (0.5 * (first + last) + inner.iter().sum::<f64>()),
    }
}

/// Initial density at `(x, v)` in SI units (per m per m/s).
pub fn initial_density(e: &EnsembleSpec, x: f64, v: f64) -> f64 {
    if x >= 0.0 {
        return 0.0;
    }
    e.unnormalized(x, v) / e.normalization
}

/// Final density at the dimensionless point `f`, in SI units.
///
/// Pulls `f` back through the inverse map; the map preserves phase-space
/// volume so no Jacobian factor appears.
pub fn final_density(e: &EnsembleSpec, p: &StoppingProtocol, f: PhaseSpacePoint) -> Result<f64> {
    let s = inverse_map(f)?;
    let (x, v) = p.from_dimensionless(s);
    Ok(initial_density(e, x, v))
}

/// Uniform axis `lo, lo + h, ..., hi` with `n` nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self> {
        ensure_finite("axis lo", lo)?;
        ensure_finite("axis hi", hi)?;
        if !(hi > lo) || n < 2 {
            return Err(CatcherError::param(
                "axis",
                format!("need lo < hi and n >= 2, got [{lo}, {hi}] with {n} nodes"),
            ));
        }
        Ok(Self { lo, hi, n })
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.n - 1) as f64
    }

    pub fn value(&self, k: usize) -> f64 {
        if k + 1 == self.n {
            self.hi
        } else {
            self.lo + k as f64 * self.step()
        }
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.n).map(|k| self.value(k)).collect()
    }
}

/// Dimensionless density sampled on a `chi x nu` grid, `values[i * n_nu + j]`
/// at `(chi_i, nu_j)`, per unit `chi` per unit `nu`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    pub chi_axis: Axis,
    pub nu_axis: Axis,
    pub values: Vec<f64>,
}

impl DensityGrid {
    pub fn zeros(chi_axis: Axis, nu_axis: Axis) -> Self {
        Self {
            chi_axis,
            nu_axis,
            values: vec![0.0; chi_axis.n * nu_axis.n],
        }
    }

    pub fn get(&self, i_chi: usize, j_nu: usize) -> f64 {
        self.values[i_chi * self.nu_axis.n + j_nu]
    }

    /// 2-D trapezoidal integral.
    pub fn integral(&self) -> f64 {
        let (p_x, _) = marginals(self);
        trapezoid(&p_x, self.chi_axis.step())
    }

    /// Default axes: `chi` over `[min(-1, chi0 - 8 dchi), 1]`, `nu` over
    /// `[nu0 - 8 dnu, nu0 + 8 dnu]` merged with `[-2, 0]`.
    pub fn default_axes(e: &EnsembleSpec, p: &StoppingProtocol, n: usize) -> Result<(Axis, Axis)> {
        let chi0 = e.x0 / p.d();
        let dchi = e.dx / p.d();
        let nu0 = e.v0 / p.v_b();
        let dnu = e.dv / p.v_b();
        let chi_axis = Axis::new((chi0 - 8.0 * dchi).min(-1.0), 1.0, n)?;
        let nu_axis = Axis::new((nu0 - 8.0 * dnu).min(-2.0), (nu0 + 8.0 * dnu).max(0.0), n)?;
        Ok((chi_axis, nu_axis))
    }

    /// Axes covering the final density: the bounding box of the images of
    /// the `+-8 sigma` initial box, widened by 2% on each side and capped at
    /// `chi = 1`.
    pub fn final_axes(e: &EnsembleSpec, p: &StoppingProtocol, n: usize) -> Result<(Axis, Axis)> {
        const NODES: usize = 257;
        let (source_chi, source_nu) = source_box(e, p, NODES)?;
        let (mut chi_lo, mut chi_hi) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut nu_lo, mut nu_hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..NODES {
            for j in 0..NODES {
                let f = forward_map(PhaseSpacePoint::new(source_chi.value(i), source_nu.value(j)))?.point;
                chi_lo = chi_lo.min(f.chi);
                chi_hi = chi_hi.max(f.chi);
                nu_lo = nu_lo.min(f.nu);
                nu_hi = nu_hi.max(f.nu);
            }
        }
        let pad_chi = 0.02 * (chi_hi - chi_lo);
        let pad_nu = 0.02 * (nu_hi - nu_lo);
        Ok((
            Axis::new(chi_lo - pad_chi, (chi_hi + pad_chi).min(1.0), n)?,
            Axis::new(nu_lo - pad_nu, nu_hi + pad_nu, n)?,
        ))
    }
}

/// Lattice nodes per tile side in [`transported_marginals`].
const TILE: usize = 64;
/// Row blocks summed independently by [`transported_marginals`]; fixed so
/// the result does not depend on the thread count.
const MARGINAL_BLOCKS: usize = 64;
/// Sweep points per tile side used to find the tiles the image reaches.
const SWEEP_PER_TILE: usize = 4;

/// The `+-8 sigma` box of the initial density in dimensionless units,
/// truncated at `chi = 0`, with `nodes` nodes per axis.
fn source_box(e: &EnsembleSpec, p: &StoppingProtocol, nodes: usize) -> Result<(Axis, Axis)> {
    let chi0 = e.x0 / p.d();
    let dchi = e.dx / p.d();
    let nu0 = e.v0 / p.v_b();
    let dnu = e.dv / p.v_b();
    Ok((
        Axis::new(chi0 - 8.0 * dchi, (chi0 + 8.0 * dchi).min(0.0), nodes)?,
        Axis::new(nu0 - 8.0 * dnu, nu0 + 8.0 * dnu, nodes)?,
    ))
}

/// Marginals `(p_x, p_v)` of a density `f(chi, nu)` supported on the image of
/// the `source` box, by the trapezoidal rule on the full `chi_axis x nu_axis`
/// lattice.
///
/// The lattice is split into tiles of `TILE x TILE` cells and `f` is only
/// evaluated on tiles that a dense sweep of `image(source)` reaches, plus one
/// tile of margin; elsewhere the density is below `exp(-32)` of its peak.
/// This keeps fine lattices affordable when the density is a thin ridge.
pub fn transported_marginals(
    chi_axis: Axis,
    nu_axis: Axis,
    source: (Axis, Axis),
    image: impl Fn(PhaseSpacePoint) -> Option<PhaseSpacePoint> + Sync,
    f: impl Fn(f64, f64) -> f64 + Sync,
) -> (Vec<f64>, Vec<f64>) {
    let tiles_chi = (chi_axis.n - 1).div_ceil(TILE);
    let tiles_nu = (nu_axis.n - 1).div_ceil(TILE);
    let tile_of = |axis: Axis, tiles: usize, u: f64| -> Option<usize> {
        let k = ((u - axis.lo) / axis.step() / TILE as f64).floor();
        (k >= -1.0 && k <= tiles as f64).then(|| (k.max(0.0) as usize).min(tiles - 1))
    };
    let sweep = SWEEP_PER_TILE * tiles_chi.max(tiles_nu) + 1;
    let (src_chi, src_nu) = (
        Axis { n: sweep, ..source.0 },
        Axis { n: sweep, ..source.1 },
    );
    let hits: Vec<Vec<usize>> = (0..sweep)
        .into_par_iter()
        .map(|i| {
            (0..sweep)
                .filter_map(|j| {
                    let q = image(PhaseSpacePoint::new(src_chi.value(i), src_nu.value(j)))?;
                    Some(tile_of(chi_axis, tiles_chi, q.chi)? * tiles_nu + tile_of(nu_axis, tiles_nu, q.nu)?)
                })
                .collect()
        })
        .collect();
    let mut marked = vec![false; tiles_chi * tiles_nu];
    for t in hits.into_iter().flatten() {
        let (a, b) = (t / tiles_nu, t % tiles_nu);
        for da in a.saturating_sub(1)..=(a + 1).min(tiles_chi - 1) {
            for db in b.saturating_sub(1)..=(b + 1).min(tiles_nu - 1) {
                marked[da * tiles_nu + db] = true;
            }
        }
    }

    // runs of marked nu tiles per chi tile, as inclusive node ranges
    let runs: Vec<Vec<(usize, usize)>> = (0..tiles_chi)
        .map(|a| {
            let mut out: Vec<(usize, usize)> = Vec::new();
            for b in (0..tiles_nu).filter(|&b| marked[a * tiles_nu + b]) {
                let (lo, hi) = (b * TILE, ((b + 1) * TILE).min(nu_axis.n - 1));
                match out.last_mut() {
                    Some(last) if last.1 == lo => last.1 = hi,
                    _ => out.push((lo, hi)),
                }
            }
            out
        })
        .collect();
    let row_runs = |i: usize| -> Vec<(usize, usize)> {
        let a = (i / TILE).min(tiles_chi - 1);
        let mut spans = runs[a].clone();
        if i % TILE == 0 && i > 0 && a == i / TILE {
            spans.extend(&runs[a - 1]);
            spans.sort_unstable();
            let mut merged: Vec<(usize, usize)> = Vec::new();
            for (lo, hi) in spans {
                match merged.last_mut() {
                    Some(last) if last.1 >= lo => last.1 = last.1.max(hi),
                    _ => merged.push((lo, hi)),
                }
            }
            return merged;
        }
        spans
    };

    let h_chi = chi_axis.step();
    let h_nu = nu_axis.step();
    let weight = |k: usize, n: usize, h: f64| if k == 0 || k + 1 == n { 0.5 * h } else { h };
    let rows_per_block = chi_axis.n.div_ceil(MARGINAL_BLOCKS);
    let blocks: Vec<(Vec<f64>, Vec<f64>)> = (0..MARGINAL_BLOCKS)
        .into_par_iter()
        .map(|b| {
            let rows = (b * rows_per_block).min(chi_axis.n)..((b + 1) * rows_per_block).min(chi_axis.n);
            let mut p_x = Vec::with_capacity(rows.len());
            let mut p_v = vec![0.0; nu_axis.n];
            for i in rows {
                let chi = chi_axis.value(i);
                let w_chi = weight(i, chi_axis.n, h_chi);
                let mut total = 0.0;
                for (lo, hi) in row_runs(i) {
                    for j in lo..=hi {
                        let val = f(chi, nu_axis.value(j));
                        total += weight(j, nu_axis.n, h_nu) * val;
                        p_v[j] += w_chi * val;
                    }
                }
                p_x.push(total);
            }
            (p_x, p_v)
        })
        .collect();
    let mut p_x = Vec::with_capacity(chi_axis.n);
    let mut p_v = vec![0.0; nu_axis.n];
    for (bx, bv) in blocks {
        p_x.extend(bx);
        for (acc, v) in p_v.iter_mut().zip(bv) {
            *acc += v;
        }
    }
    (p_x, p_v)
}

/// Marginals of the initial density, per unit `chi` and per unit `nu`.
pub fn initial_marginals(
    e: &EnsembleSpec,
    p: &StoppingProtocol,
    chi_axis: Axis,
    nu_axis: Axis,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let scale = p.d() * p.v_b();
    Ok(transported_marginals(chi_axis, nu_axis, source_box(e, p, 2)?, Some, |chi, nu| {
        let (x, v) = p.from_dimensionless(PhaseSpacePoint::new(chi, nu));
        initial_density(e, x, v) * scale
    }))
}

/// Marginals of the final density at `tau = 1`, per unit `chi` and per unit
/// `nu`, evaluated through the inverse map.
pub fn final_marginals(
    e: &EnsembleSpec,
    p: &StoppingProtocol,
    chi_axis: Axis,
    nu_axis: Axis,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let scale = p.d() * p.v_b();
    Ok(transported_marginals(
        chi_axis,
        nu_axis,
        source_box(e, p, 2)?,
        |s| forward_map(s).ok().map(|r| r.point),
        |chi, nu| {
            if chi >= 1.0 {
                return 0.0;
            }
            final_density(e, p, PhaseSpacePoint::new(chi, nu)).unwrap_or(0.0) * scale
        },
    ))
}

fn fill_grid(chi_axis: Axis, nu_axis: Axis, f: impl Fn(f64, f64) -> f64 + Sync) -> DensityGrid {
    let mut grid = DensityGrid::zeros(chi_axis, nu_axis);
    grid.values
        .par_chunks_mut(nu_axis.n)
        .enumerate()
        .for_each(|(i, row)| {
            let chi = chi_axis.value(i);
            for (j, out) in row.iter_mut().enumerate() {
                *out = f(chi, nu_axis.value(j));
            }
        });
    grid
}

/// Initial density on the grid, per unit `chi` per unit `nu`.
pub fn initial_density_grid(
    e: &EnsembleSpec,
    p: &StoppingProtocol,
    chi_axis: Axis,
    nu_axis: Axis,
) -> DensityGrid {
    let scale = p.d() * p.v_b();
    fill_grid(chi_axis, nu_axis, |chi, nu| {
        let (x, v) = p.from_dimensionless(PhaseSpacePoint::new(chi, nu));
        initial_density(e, x, v) * scale
    })
}

/// Final density at `tau = 1` on the grid, per unit `chi` per unit `nu`.
/// Nodes with `chi >= 1` are unreachable and hold zero.
pub fn final_density_grid(
    e: &EnsembleSpec,
    p: &StoppingProtocol,
    chi_axis: Axis,
    nu_axis: Axis,
) -> DensityGrid {
    let scale = p.d() * p.v_b();
    fill_grid(chi_axis, nu_axis, |chi, nu| {
        if chi >= 1.0 {
            return 0.0;
        }
        final_density(e, p, PhaseSpacePoint::new(chi, nu)).unwrap_or(0.0) * scale
    })
}

/// Position and velocity marginals `(p_x(chi_i), p_v(nu_j))` by trapezoidal
/// integration along the other axis.
pub fn marginals(g: &DensityGrid) -> (Vec<f64>, Vec<f64>) {
    let n_chi = g.chi_axis.n;
    let n_nu = g.nu_axis.n;
    let h_chi = g.chi_axis.step();
    let h_nu = g.nu_axis.step();

    let p_x: Vec<f64> = g
        .values
        .chunks(n_nu)
        .map(|row| trapezoid(row, h_nu))
        .collect();

    let mut p_v = vec![0.0; n_nu];
    for (i, row) in g.values.chunks(n_nu).enumerate() {
        let w = if i == 0 || i + 1 == n_chi { 0.5 * h_chi } else { h_chi };
        for (acc, &val) in p_v.iter_mut().zip(row) {
            *acc += w * val;
        }
    }
    (p_x, p_v)
}

/// Draws `n` dimensionless samples from the truncated Gaussian.
///
/// Samples are generated in chunks of `2^16`, each from its own ChaCha8
/// stream keyed by `(seed, chunk index)`, so the output depends only on
/// `seed` and `n`.
pub fn sample_ensemble(
    e: &EnsembleSpec,
    p: &StoppingProtocol,
    n: usize,
    seed: u64,
) -> Result<Vec<PhaseSpacePoint>> {
    if n == 0 {
        return Err(CatcherError::param("n", "need at least one sample"));
    }
    let chunks = n.div_ceil(STREAM_CHUNK);
    let parts: Result<Vec<Vec<PhaseSpacePoint>>> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(chunk as u64);
            let count = STREAM_CHUNK.min(n - chunk * STREAM_CHUNK);
            let mut out = Vec::with_capacity(count);
            for _ in 0..count {
                let x = sample_negative_position(e, &mut rng)?;
                let z: f64 = rng.sample(StandardNormal);
                out.push(p.to_dimensionless(x, e.v0 + e.dv * z));
            }
            Ok(out)
        })
        .collect();
    Ok(parts?.into_iter().flatten().collect())
}

fn sample_negative_position(e: &EnsembleSpec, rng: &mut ChaCha8Rng) -> Result<f64> {
    // x0 < 0 keeps the acceptance rate above one half
    const MAX_ATTEMPTS: usize = 1 << 20;
    for _ in 0..MAX_ATTEMPTS {
        let z: f64 = rng.sample(StandardNormal);
        let x = e.x0 + e.dx * z;
        if x < 0.0 {
            return Ok(x);
        }
    }
    Err(CatcherError::Domain(
        "rejection sampler for x < 0 did not terminate".into(),
    ))
}

/// Applies [`forward_map`] to every sample.
pub fn push_forward(samples: &[PhaseSpacePoint]) -> Result<Vec<MapResult>> {
    samples.par_iter().map(|&s| forward_map(s)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
    /// `counts / (total * width)`: sums to the in-range fraction times `1/width`.
    pub density: Vec<f64>,
    pub total: usize,
}

impl Histogram {
    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.counts.len() as f64
    }

    pub fn center(&self, k: usize) -> f64 {
        self.lo + (k as f64 + 0.5) * self.width()
    }
}

/// Histogram over `[lo, hi)` normalized by the total number of values, so
/// `sum(density) * width` is the fraction of values that fell in range.
pub fn histogram(values: &[f64], bins: usize, range: (f64, f64)) -> Result<Histogram> {
    let (lo, hi) = range;
    if bins == 0 || !(hi > lo) {
        return Err(CatcherError::param(
            "histogram",
            format!("need bins > 0 and lo < hi, got {bins} bins over [{lo}, {hi})"),
        ));
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0u64; bins];
    for &v in values {
        if v >= lo && v < hi {
            let k = (((v - lo) / width) as usize).min(bins - 1);
            counts[k] += 1;
        }
    }
    let total = values.len();
    let norm = if total == 0 { 0.0 } else { 1.0 / (total as f64 * width) };
    let density = counts.iter().map(|&c| c as f64 * norm).collect();
    Ok(Histogram {
        lo,
        hi,
        counts,
        density,
        total,
    })
}

/// Fraction of final velocities with `|nu| < threshold`.
pub fn stopped_fraction(final_nu: &[f64], threshold: f64) -> Result<f64> {
    ensure_positive("threshold", threshold)?;
    if final_nu.is_empty() {
        return Ok(0.0);
    }
    let stopped = final_nu.iter().filter(|v| v.abs() < threshold).count();
    Ok(stopped as f64 / final_nu.len() as f64)
}

/// Probability weight of a velocity marginal with `|nu| < threshold`: the
/// exact integral of its piecewise-linear interpolant over the window.
pub fn stopped_probability(nu_axis: Axis, p_v: &[f64], threshold: f64) -> Result<f64> {
    ensure_positive("threshold", threshold)?;
    let mut total = 0.0;
    for j in 0..nu_axis.n - 1 {
        let (a, b) = (nu_axis.value(j), nu_axis.value(j + 1));
        let lo = a.max(-threshold);
        let hi = b.min(threshold);
        if hi <= lo {
            continue;
        }
        let at = |v: f64| p_v[j] + (p_v[j + 1] - p_v[j]) * (v - a) / (b - a);
        total += 0.5 * (at(lo) + at(hi)) * (hi - lo);
    }
    Ok(total)
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use statrs::distribution::{Continuous, ContinuousCDF, Normal};

    fn fig4() -> (EnsembleSpec, StoppingProtocol) {
        let p = StoppingProtocol::new(50e-6, 8e-3).unwrap();
        (EnsembleSpec::from_dimensionless(&p, -0.04, 0.008, 5.0, 2.0).unwrap(), p)
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(EnsembleSpec::new(0.0, 1e-6, 0.0, 1.0).is_err());
        assert!(EnsembleSpec::new(-1e-6, 0.0, 0.0, 1.0).is_err());
        assert!(EnsembleSpec::new(-1e-6, 1e-6, 0.0, -1.0).is_err());
    }

    #[test]
    fn normalization_matches_erf_closed_form() {
        let std = Normal::standard();
        for &(x0, dx) in &[(-2e-6, 0.4e-6), (-1e-6, 1e-6), (-3e-6, 0.3e-6), (-1e-7, 1e-6)] {
            let e = EnsembleSpec::new(x0, dx, 0.03, 0.01).unwrap();
            let exact = 2.0 * std::f64::consts::PI * dx * 0.01 * std.cdf(-x0 / dx);
            assert_abs_diff_eq!(e.normalization() / exact, 1.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn density_is_truncated_and_peaks_at_center() {
        let (e, _) = fig4();
        assert_eq!(initial_density(&e, 1e-9, e.v0()), 0.0);
        assert_eq!(initial_density(&e, 0.0, e.v0()), 0.0);
        assert_eq!(initial_density(&e, e.x0(), e.v0()), 1.0 / e.normalization());
    }

    #[test]
    fn density_integrates_to_one() {
        // independent 2-D trapezoid on a coarser, differently placed grid
        let (e, _) = fig4();
        let (nx, nv) = (3001, 3001);
        let (xl, xh) = (e.x0() - 8.0 * e.dx(), 0.0);
        let (vl, vh) = (e.v0() - 8.0 * e.dv(), e.v0() + 8.0 * e.dv());
        let hx = (xh - xl) / (nx - 1) as f64;
        let hv = (vh - vl) / (nv - 1) as f64;
        let mut total = 0.0;
        for i in 0..nx {
            let x = (xl + i as f64 * hx).min(-1e-300);
            let wi = if i == 0 || i == nx - 1 { 0.5 } else { 1.0 };
            for j in 0..nv {
                let wj = if j == 0 || j == nv - 1 { 0.5 } else { 1.0 };
                total += wi * wj * initial_density(&e, x, vl + j as f64 * hv);
            }
        }
        assert_abs_diff_eq!(total * hx * hv, 1.0, epsilon = 1e-8);
    }

    #[test]
    fn final_density_examples() {
        let (e, p) = fig4();
        // free region: pure shear
        let f = PhaseSpacePoint::new(0.3, 0.5);
        let (x, v) = p.from_dimensionless(PhaseSpacePoint::new(f.chi - f.nu, f.nu));
        assert_eq!(final_density(&e, &p, f).unwrap(), initial_density(&e, x, v));

        // image of the peak carries the peak value
        let peak = p.to_dimensionless(e.x0(), e.v0());
        let image = forward_map(peak).unwrap().point;
        assert_abs_diff_eq!(
            final_density(&e, &p, image).unwrap() * e.normalization(),
            1.0,
            epsilon = 1e-9
        );

        // pre-image ahead of the wall
        assert_eq!(final_density(&e, &p, PhaseSpacePoint::new(0.9, 0.5)).unwrap(), 0.0);
        assert!(final_density(&e, &p, PhaseSpacePoint::new(1.0, 0.5)).is_err());
    }

    #[test]
    fn marginals_of_zero_grid() {
        let a = Axis::new(-1.0, 1.0, 11).unwrap();
        let g = DensityGrid::zeros(a, a);
        let (px, pv) = marginals(&g);
        assert!(px.iter().chain(&pv).all(|&v| v == 0.0));
    }

    #[test]
    fn marginals_of_separable_gaussian() {
        let (sx, sv) = (0.3, 0.7);
        let chi = Axis::new(-4.0, 4.0, 401).unwrap();
        let nu = Axis::new(-6.0, 6.0, 601).unwrap();
        let norm = 1.0 / (2.0 * std::f64::consts::PI * sx * sv);
        let g = fill_grid(chi, nu, |c, n| {
            norm * (-0.5 * (c * c / (sx * sx) + n * n / (sv * sv))).exp()
        });
        let (px, pv) = marginals(&g);
        let gx = Normal::new(0.0, sx).unwrap();
        let gv = Normal::new(0.0, sv).unwrap();
        for (k, &val) in px.iter().enumerate() {
            assert_abs_diff_eq!(val, gx.pdf(chi.value(k)), epsilon = 1e-9);
        }
        for (k, &val) in pv.iter().enumerate() {
            assert_abs_diff_eq!(val, gv.pdf(nu.value(k)), epsilon = 1e-9);
        }
        let total = g.integral();
        assert_abs_diff_eq!(trapezoid(&px, chi.step()), total, epsilon = 1e-8);
        assert_abs_diff_eq!(trapezoid(&pv, nu.step()), total, epsilon = 1e-8);
    }

    #[test]
    fn fig4_final_velocity_marginal_has_free_remnant() {
        let (e, p) = fig4();
        let (chi, nu) = DensityGrid::default_axes(&e, &p, 512).unwrap();
        let g = final_density_grid(&e, &p, chi, nu);
        let (_, pv) = marginals(&g);
        // no reflected particle ends with nu > 0, so the weight on (0, 1) is
        // the remnant that never reached the wall
        let remnant: f64 = (0..nu.n)
            .filter(|&j| nu.value(j) > 0.05 && nu.value(j) < 0.95)
            .map(|j| pv[j])
            .sum::<f64>()
            * nu.step();
        assert!(remnant > 1e-3, "remnant weight {remnant}");
        assert!(g.values.iter().all(|&v| v >= 0.0));
        assert!(g.integral() <= 1.0 + 1e-6);
    }

    #[test]
    fn tiled_marginals_match_the_full_lattice() {
        // a thin tilted ridge; skipping tiles must not change the trapezoid sums
        let (c0, w) = (0.2, 0.01);
        let f = |c: f64, n: f64| (-0.5 * ((c - c0 - 0.3 * n) / w).powi(2) - 0.5 * n * n).exp();
        let chi = Axis::new(-2.0, 2.0, 1025).unwrap();
        let nu = Axis::new(-8.0, 8.0, 1025).unwrap();
        let source = (Axis::new(-8.0 * w, 8.0 * w, 2).unwrap(), Axis::new(-8.0, 8.0, 2).unwrap());
        let image = |s: PhaseSpacePoint| Some(PhaseSpacePoint::new(s.chi + c0 + 0.3 * s.nu, s.nu));
        let (px, pv) = transported_marginals(chi, nu, source, image, f);
        let full = fill_grid(chi, nu, f);
        let (qx, qv) = marginals(&full);
        for (a, b) in px.iter().zip(&qx).chain(pv.iter().zip(&qv)) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn final_axes_contain_the_image() {
        let (e, p) = fig4();
        let (chi, nu) = DensityGrid::final_axes(&e, &p, 64).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            let c: f64 = rng.random_range(-0.04 - 6.0 * 0.008..0.0);
            let n: f64 = rng.random_range(5.0 - 6.0 * 2.0..5.0 + 6.0 * 2.0);
            let f = forward_map(PhaseSpacePoint::new(c, n)).unwrap().point;
            assert!(chi.lo <= f.chi && f.chi <= chi.hi && nu.lo <= f.nu && f.nu <= nu.hi, "{f:?}");
        }
    }

    #[test]
    fn final_marginals_conserve_probability() {
        let (e4, p4) = fig4();
        let p5 = StoppingProtocol::new(1e-3, 1.0).unwrap();
        let e5 = EnsembleSpec::from_dimensionless(&p5, -0.003, 0.0003, 3.0, 1.24).unwrap();
        for (e, p) in [(e4, p4), (e5, p5)] {
            let (chi, nu) = DensityGrid::final_axes(&e, &p, 2).unwrap();
            let (chi, nu) = (Axis { n: 65537, ..chi }, Axis { n: 65537, ..nu });
            let (px, pv) = final_marginals(&e, &p, chi, nu).unwrap();
            assert_abs_diff_eq!(trapezoid(&px, chi.step()), 1.0, epsilon = 1e-4);
            assert_abs_diff_eq!(trapezoid(&pv, nu.step()), 1.0, epsilon = 1e-4);
            assert!(stopped_probability(nu, &pv, 1.0).unwrap() <= 1.0);
        }
    }

    #[test]
    fn stopped_probability_integrates_the_interpolant() {
        // p(nu) = 2 + nu is linear, so the window integral is exact: 2 * 2 * 0.7
        let nu = Axis::new(-1.3, 1.7, 4).unwrap();
        let pv: Vec<f64> = nu.values().iter().map(|v| 2.0 + v).collect();
        assert_abs_diff_eq!(stopped_probability(nu, &pv, 0.7).unwrap(), 2.8, epsilon = 1e-12);
        assert!(stopped_probability(nu, &pv, 0.0).is_err());
    }

    #[test]
    fn sampling_is_deterministic_and_truncated() {
        let (e, p) = fig4();
        let a = sample_ensemble(&e, &p, 100_000, 7).unwrap();
        let b = sample_ensemble(&e, &p, 100_000, 7).unwrap();
        assert_eq!(a, b);
        let c = sample_ensemble(&e, &p, 100_000, 8).unwrap();
        assert_ne!(a, c);
        assert!(a.iter().all(|s| s.chi < 0.0));
        let one = sample_ensemble(&e, &p, 1, 3).unwrap();
        assert_eq!(one.len(), 1);
        assert!(one[0].chi < 0.0);
        assert!(sample_ensemble(&e, &p, 0, 3).is_err());
    }

    #[test]
    fn sample_mean_matches_truncated_normal() {
        let (e, p) = fig4();
        let n = 1_000_000;
        let samples = sample_ensemble(&e, &p, n, 42).unwrap();
        let xs: Vec<f64> = samples.iter().map(|s| s.chi * p.d()).collect();
        let (mean, _) = mean_std(&xs);
        // upper truncation at 0: mean = x0 - dx phi(b) / Phi(b), b = -x0/dx
        let std = Normal::standard();
        let b = -e.x0() / e.dx();
        let exact_mean = e.x0() - e.dx() * std.pdf(b) / std.cdf(b);
        let var = e.dx() * e.dx() * (1.0 - b * std.pdf(b) / std.cdf(b)
            - (std.pdf(b) / std.cdf(b)).powi(2));
        let se = (var / n as f64).sqrt();
        assert!((mean - exact_mean).abs() < 5.0 * se, "{mean} vs {exact_mean} (se {se})");
    }

    #[test]
    fn point_ensemble_at_origin_is_fully_stopped() {
        let samples = vec![PhaseSpacePoint::new(0.0, 2.0); 1000];
        let out = push_forward(&samples).unwrap();
        assert!(out.iter().all(|r| r.point == PhaseSpacePoint::new(0.5, 0.0)));
        let nus: Vec<f64> = out.iter().map(|r| r.point.nu).collect();
        assert_eq!(stopped_fraction(&nus, 1e-12).unwrap(), 1.0);
        assert_eq!(stopped_fraction(&[0.0; 10], 0.1).unwrap(), 1.0);
        assert!(stopped_fraction(&nus, 0.0).is_err());
    }

    #[test]
    fn histogram_normalization() {
        let values = [0.1, 0.2, 0.25, 0.9, 1.5, -3.0];
        let h = histogram(&values, 4, (0.0, 1.0)).unwrap();
        assert_eq!(h.counts, vec![2, 1, 0, 1]);
        let mass: f64 = h.density.iter().sum::<f64>() * h.width();
        assert_abs_diff_eq!(mass, 4.0 / 6.0, epsilon = 1e-15);
        assert!(histogram(&values, 0, (0.0, 1.0)).is_err());
        assert!(histogram(&values, 3, (1.0, 1.0)).is_err());
    }

    #[test]
    fn fig5_stopping_narrows_velocities() {
        let p = StoppingProtocol::new(1e-3, 1.0).unwrap();
        let e = EnsembleSpec::from_dimensionless(&p, -0.003, 0.0003, 3.0, 1.24).unwrap();
        let samples = sample_ensemble(&e, &p, 200_000, 1).unwrap();
        let out = push_forward(&samples).unwrap();
        let nus: Vec<f64> = out.iter().map(|r| r.point.nu).collect();
        let (_, std_f) = mean_std(&nus);
        assert!(std_f < 0.2 * 1.24, "final spread {std_f}");
    }
}
