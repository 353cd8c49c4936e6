//! Unitary propagation of `i psi_t = H psi` with `H = -psi_xx / (2 mu) + V`.
//!
//! Space: the compact fourth-order (Numerov) Laplacian, `psi_xx ~ M^-1 D2 psi`
//! with `M = tridiag(1, 10, 1) / 12`. Multiplying through by `M` keeps every
//! linear system tridiagonal, and because `M` and `D2` commute the discrete
//! Hamiltonian `M^-1 K + V` is Hermitian. Each implicit-midpoint substep is
//! then a Cayley transform and conserves the discrete norm exactly.
//!
//! Time: implicit midpoint with the potential frozen at the substep midpoint,
//! either alone (second order) or as the symmetric triple jump (fourth order).
//!
//! Only a window `[lo, hi]` of the grid is stepped; it grows whenever the
//! wave function becomes non-negligible near one of its ends, and everything
//! outside it is zero. Content that has moved far enough from the wall that
//! it can no longer reach it is split off with a smooth erfc mask and handed
//! to the far field (see `reservoir`), which evolves it exactly.
//!
//! The mask width is `w = sqrt(T / mu)` for the remaining time `T`, so it
//! tightens as the run proceeds, and the mask sits `CUT_GAP w` beyond the
//! wall's reach. Mode mixing by the mask is then
//! of order `exp(-(CUT_GAP/2)^2)`, so no split-off component is fast enough
//! to cross the gap before the run ends.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::grid::GridState;
use super::potential::{WallKind, WallSpec};
use super::reservoir::Reservoir;
use crate::error::{ensure_positive, CatcherError, Result};
use crate::protocol::StoppingProtocol;

/// Nodes inspected at each window end after every step.
const BAND: usize = 64;
/// Nodes added to the window when it grows.
const GROWTH: usize = 512;
/// `|psi|^2` below this fraction of the initial peak counts as zero.
const NEGLIGIBLE: f64 = 1e-24;
/// `|psi|` at a grid edge above this fraction of the peak is leakage.
const LEAKAGE: f64 = 1e-6;
/// Distance from the wall's reach to the far-field mask, in mask widths.
const CUT_GAP: f64 = 10.0;
/// Half-extent of the mask transition in widths (`erfc(6) ~ 2e-17`).
const CUT_TAIL: f64 = 6.0;
/// Nodes the window may extend past a mask before content is handed over.
const EXTRACT_SLACK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeOrder {
    Second,
    Fourth,
}

impl TimeOrder {
    /// Substep fractions of one full step.
    fn weights(self) -> Vec<f64> {
        match self {
            TimeOrder::Second => vec![1.0],
            TimeOrder::Fourth => {
                let w1 = 1.0 / (2.0 - 2f64.cbrt());
                vec![w1, 1.0 - 2.0 * w1, w1]
            }
        }
    }

    /// Kinetic phase per step `dt mu v_max^2 / 2` above which accuracy
    /// degrades noticeably.
    pub fn phase_limit(self) -> f64 {
        match self {
            TimeOrder::Second => 0.1,
            TimeOrder::Fourth => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub mass: f64,
    /// Largest velocity that must be resolved, `|v0| + 5 dv`.
    pub v_max: f64,
    pub dt: f64,
    pub order: TimeOrder,
    /// End of the run; the far-field masks are placed for this horizon.
    pub t_end: f64,
    /// Hand content that has left the wall's reach to the far field.
    pub far_field: bool,
}

/// de Broglie wavelength `2 pi / (mu v)`.
pub fn de_broglie_wavelength(mu: f64, v: f64) -> f64 {
    2.0 * std::f64::consts::PI / (mu * v)
}

/// Thomas factorization of the potential-free rows for one substep size,
/// indexed by offset from the window start. It is the same for every step,
/// and after a few dozen rows it settles to a fixed point, which is stored
/// once instead of per row.
///
/// With `inv_k = 1 / (b - a cp_{k-1})`, row `k` of the fused sweep is
/// `d_k = alpha_k psi_k + beta_k (psi_{k-1} + psi_{k+1}) - cp_k d_{k-1}`.
struct FreeFactor {
    b: Complex64,
    alpha: Vec<Complex64>,
    beta: Vec<Complex64>,
    cp: Vec<Complex64>,
    /// `(alpha, beta, cp)` for every row past the stored ones.
    limit: (Complex64, Complex64, Complex64),
    /// `(-cp)^(j+1)` for the limit `cp`, down to negligible size.
    powers: Vec<Complex64>,
}

impl FreeFactor {
    fn new(h: f64, kappa: f64) -> Self {
        let half = Complex64::new(0.0, 0.5 * h);
        let a = Complex64::new(1.0 / 12.0, 0.0) - half * kappa;
        let b = Complex64::new(10.0 / 12.0, 0.0) + half * (2.0 * kappa);
        let (mut alpha, mut beta, mut cp) = (Vec::new(), Vec::new(), Vec::new());
        let mut prev = Complex64::new(0.0, 0.0);
        loop {
            let inv = 1.0 / (b - a * prev);
            let next = a * inv;
            alpha.push(b.conj() * inv);
            beta.push(a.conj() * inv);
            cp.push(next);
            if (next - prev).norm() <= 1e-17 * next.norm() || cp.len() >= 1 << 16 {
                break;
            }
            prev = next;
        }
        let limit = (*alpha.last().unwrap(), *beta.last().unwrap(), *cp.last().unwrap());
        let mut powers = Vec::new();
        let mut p = -limit.2;
        while p.norm() > 1e-18 && powers.len() < 1 << 12 {
            powers.push(p);
            p *= -limit.2;
        }
        Self { b, alpha, beta, cp, limit, powers }
    }

    fn row(&self, k: usize) -> (Complex64, Complex64, Complex64) {
        if k < self.cp.len() {
            (self.alpha[k], self.beta[k], self.cp[k])
        } else {
            self.limit
        }
    }

    fn cp(&self, k: usize) -> Complex64 {
        if k < self.cp.len() {
            self.cp[k]
        } else {
            self.limit.2
        }
    }
}

/// Potential samples on the nodes `first..first + values.len()`; zero elsewhere.
struct PotentialSamples {
    first: usize,
    values: Vec<f64>,
}

impl PotentialSamples {
    fn at(&self, j: usize) -> f64 {
        if j >= self.first && j - self.first < self.values.len() {
            self.values[j - self.first]
        } else {
            0.0
        }
    }
}

/// Boundary of the region the wall can still affect, beyond which content
/// is handed to the far field. `anchor` is the wall's reach on that side;
/// `sign` is -1 on the left and +1 on the right.
#[derive(Debug, Clone, Copy)]
struct Cut {
    anchor: f64,
    sign: f64,
}

impl Cut {
    /// Mask `(centre, width)` for a remaining time `span`; the far field
    /// takes `erfc(sign (centre - x) / width) / 2` of the wave function.
    fn mask(&self, span: f64, mu: f64, dx: f64) -> (f64, f64) {
        let width = (span.max(0.0) / mu).sqrt().max(8.0 * dx);
        (self.anchor + self.sign * (CUT_GAP + CUT_TAIL) * width, width)
    }
}

pub struct Propagator {
    state: GridState,
    wall: WallSpec,
    protocol: StoppingProtocol,
    h: f64,
    kappa: f64,
    weights: Vec<f64>,
    factors: Vec<FreeFactor>,
    lo: usize,
    hi: usize,
    threshold: f64,
    steps: u64,
    t_start: f64,
    pot: PotentialSamples,
    cp: Vec<Complex64>,
    reservoir: Option<Reservoir>,
    left_cut: Option<Cut>,
    right_cut: Option<Cut>,
    /// False once everything lives in the far field.
    active: bool,
    mu: f64,
    t_end: f64,
    extract_slack: usize,
}

impl Propagator {
    pub fn new(
        mut state: GridState,
        wall: WallSpec,
        protocol: StoppingProtocol,
        opts: SolverOptions,
    ) -> Result<Self> {
        ensure_positive("dt", opts.dt)?;
        ensure_positive("mass", opts.mass)?;
        ensure_positive("v_max", opts.v_max)?;
        let mu = opts.mass / super::HBAR;
        let dx = state.dx();
        let lambda = de_broglie_wavelength(mu, opts.v_max);
        if dx > lambda / 10.0 {
            return Err(CatcherError::UnderResolved(format!(
                "dx = {dx:.4e} m exceeds lambda_dB(v_max)/10 = {:.4e} m",
                lambda / 10.0
            )));
        }
        let phase = opts.dt * 0.5 * mu * opts.v_max * opts.v_max;
        if phase > opts.order.phase_limit() {
            log::warn!(
                "dt = {:.3e} s advances the fastest phase by {phase:.3} rad per step \
                 (limit {} for {:?} order); results may be inaccurate",
                opts.dt,
                opts.order.phase_limit(),
                opts.order
            );
        }
        let kappa = 1.0 / (2.0 * mu * dx * dx);
        let weights = opts.order.weights();
        let mut factors: Vec<FreeFactor> = Vec::new();
        for &w in &weights {
            if !factors.iter().any(|f| f.h_matches(w * opts.dt, kappa)) {
                factors.push(FreeFactor::new(w * opts.dt, kappa));
            }
        }

        let density = state.density();
        let peak2 = density.iter().cloned().fold(0.0, f64::max);
        if !(peak2 > 0.0) {
            return Err(CatcherError::param("psi", "wave function is identically zero"));
        }
        let threshold = NEGLIGIBLE * peak2;
        let n = state.n_points();
        let first = density.iter().position(|&p| p > threshold).unwrap();
        let last = density.iter().rposition(|&p| p > threshold).unwrap();
        let lo = first.saturating_sub(GROWTH);
        let hi = (last + GROWTH).min(n - 1);
        let zero = Complex64::new(0.0, 0.0);
        state.psi[..lo].fill(zero);
        state.psi[hi + 1..].fill(zero);
        let t_start = state.t;

        let (mut reservoir, mut left_cut, mut right_cut, mut active) = (None, None, None, true);
        let span = opts.t_end - t_start;
        if opts.far_field && span > 0.0 {
            let mut res = Reservoir::new(n, kappa, opts.dt, &weights);
            match wall.support() {
                None => {
                    res.deposit(0, &state.psi, 0);
                    state.psi.fill(zero);
                    active = false;
                }
                Some((y_lo, y_hi)) => {
                    // the wall only moves right, so its reach on the left is
                    // smallest now and on the right largest at the end
                    let xm0 = protocol.mirror_position(t_start.min(protocol.t_f()))?;
                    let xm1 = protocol.mirror_position(opts.t_end.min(protocol.t_f()))?;
                    left_cut = Some(Cut {
                        anchor: state.x(first).min(xm0 + y_lo),
                        sign: -1.0,
                    });
                    if y_hi.is_finite() {
                        right_cut = Some(Cut {
                            anchor: state.x(last).max(xm1 + y_hi),
                            sign: 1.0,
                        });
                    }
                }
            }
            reservoir = Some(res);
        }
        let prop = Self {
            state,
            wall,
            protocol,
            h: opts.dt,
            kappa,
            weights,
            factors,
            lo,
            hi,
            threshold,
            steps: 0,
            t_start,
            pot: PotentialSamples { first: 0, values: Vec::new() },
            cp: Vec::new(),
            reservoir,
            left_cut,
            right_cut,
            active,
            mu,
            t_end: opts.t_end,
            extract_slack: EXTRACT_SLACK,
        };
        prop.check_leakage()?;
        Ok(prop)
    }

    /// The full wave function, near field plus far field.
    pub fn state(&self) -> Result<GridState> {
        let mut out = self.state.clone();
        if let Some(res) = self.reservoir.as_ref().filter(|r| !r.is_empty()) {
            let (left, right) = res.add_to(&mut out.psi, self.steps);
            let peak = out.peak_amplitude();
            for (pad, edge) in [(left, "left"), (right, "right")] {
                if pad > LEAKAGE * peak {
                    return Err(CatcherError::Leakage {
                        t: out.t,
                        edge,
                        ratio: pad / peak,
                    });
                }
            }
        }
        Ok(out)
    }

    /// The stepped near field alone.
    pub fn near_field(&self) -> &GridState {
        &self.state
    }

    pub fn into_state(self) -> Result<GridState> {
        self.state()
    }

    /// Current active window `[lo, hi]` (node indices, inclusive).
    pub fn window(&self) -> (usize, usize) {
        (self.lo, self.hi)
    }

    pub fn dt(&self) -> f64 {
        self.h
    }

    /// Takes `n` full steps.
    pub fn advance(&mut self, n: u64) -> Result<()> {
        if !self.active {
            self.steps += n;
            self.state.t = self.t_start + self.steps as f64 * self.h;
            return Ok(());
        }
        for _ in 0..n {
            let t0 = self.state.t;
            let mut offset = 0.0;
            for k in 0..self.weights.len() {
                let h = self.weights[k] * self.h;
                self.substep(t0 + (offset + 0.5 * self.weights[k]) * self.h, h)?;
                offset += self.weights[k];
            }
            self.steps += 1;
            self.state.t = self.t_start + self.steps as f64 * self.h;
            self.grow_window();
            self.extract();
            self.check_leakage()?;
        }
        Ok(())
    }

    /// Hands content beyond a far-field mask over to the reservoir once the
    /// window has grown `extract_slack` nodes past it.
    fn extract(&mut self) {
        let Some(res) = self.reservoir.as_mut() else {
            return;
        };
        let dx = self.state.dx();
        let x_min = self.state.x_min();
        let node = |x: f64| (x - x_min) / dx;
        let span = self.t_end - self.state.t;
        if let Some(cut) = self.left_cut {
            let (centre, width) = cut.mask(span, self.mu, dx);
            let inner = node(centre - CUT_TAIL * width).floor();
            if inner > (self.lo + self.extract_slack) as f64 && inner < self.hi as f64 {
                let inner = inner as usize;
                let outer = (node(centre + CUT_TAIL * width).ceil() as usize).min(self.hi);
                let lo = self.lo;
                let part: Vec<Complex64> = (lo..=outer)
                    .map(|j| {
                        let r = 0.5 * libm::erfc((self.state.x(j) - centre) / width);
                        self.state.psi[j] * r
                    })
                    .collect();
                for (j, p) in (lo..=outer).zip(&part) {
                    self.state.psi[j] -= p;
                }
                self.state.psi[lo..inner].fill(Complex64::new(0.0, 0.0));
                res.deposit(lo, &part, self.steps);
                self.lo = inner;
            }
        }
        if let Some(cut) = self.right_cut {
            let (centre, width) = cut.mask(span, self.mu, dx);
            let inner = node(centre + CUT_TAIL * width).ceil();
            if inner + (self.extract_slack as f64) < self.hi as f64 && inner > self.lo as f64 {
                let inner = inner as usize;
                let outer = (node(centre - CUT_TAIL * width).floor().max(0.0) as usize)
                    .max(self.lo);
                let hi = self.hi;
                let part: Vec<Complex64> = (outer..=hi)
                    .map(|j| {
                        let r = 0.5 * libm::erfc((centre - self.state.x(j)) / width);
                        self.state.psi[j] * r
                    })
                    .collect();
                for (j, p) in (outer..=hi).zip(&part) {
                    self.state.psi[j] -= p;
                }
                self.state.psi[inner + 1..=hi].fill(Complex64::new(0.0, 0.0));
                res.deposit(outer, &part, self.steps);
                self.hi = inner;
            }
        }
    }

    fn sample_potential(&mut self, t_mid: f64) -> Result<()> {
        self.pot.values.clear();
        let Some((y_lo, y_hi)) = self.wall.support() else {
            return Ok(());
        };
        let xm = self.protocol.mirror_position(t_mid)?;
        let dx = self.state.dx();
        let x_min = self.state.x_min();
        let first = ((xm + y_lo - x_min) / dx).ceil().max(self.lo as f64);
        let last = ((xm + y_hi - x_min) / dx).floor().min(self.hi as f64);
        if first > last {
            return Ok(());
        }
        let (first, last) = (first as usize, last as usize);
        self.pot.first = first;
        for j in first..=last {
            self.pot
                .values
                .push(self.wall.shape(self.state.x(j) - xm));
        }
        Ok(())
    }

    /// One implicit-midpoint substep of length `h` (possibly negative) with
    /// the potential evaluated at `t_mid`.
    fn substep(&mut self, t_mid: f64, h: f64) -> Result<()> {
        if self.wall.kind != WallKind::None && t_mid > self.protocol.t_f() {
            return Err(CatcherError::Domain(format!(
                "cannot propagate past t_f = {} with a moving wall",
                self.protocol.t_f()
            )));
        }
        self.sample_potential(t_mid)?;
        let (lo, hi) = (self.lo, self.hi);
        let m = hi - lo + 1;
        // rows below `split` see no potential and use the cached factorization
        let split = if self.pot.values.is_empty() {
            hi + 1
        } else {
            self.pot.first.saturating_sub(1).max(lo)
        };
        let fi = self
            .factors
            .iter()
            .position(|f| f.h_matches(h, self.kappa))
            .expect("factor for every substep weight");
        let free = &self.factors[fi];

        let zero = Complex64::new(0.0, 0.0);
        let half = Complex64::new(0.0, 0.5 * h);
        let kappa = self.kappa;
        let pot = &self.pot;
        let row = |i: usize| -> (Complex64, Complex64, Complex64) {
            let vm = if i > 0 { pot.at(i - 1) } else { 0.0 };
            (
                Complex64::new(1.0 / 12.0, 0.0) + half * (-kappa + vm / 12.0),
                Complex64::new(10.0 / 12.0, 0.0) + half * (2.0 * kappa + 10.0 * pot.at(i) / 12.0),
                Complex64::new(1.0 / 12.0, 0.0) + half * (-kappa + pot.at(i + 1) / 12.0),
            )
        };

        // Forward sweep fused with the right-hand side (M - i h/2 H') psi,
        // whose coefficients are the conjugates of the left-hand ones. Nodes
        // outside the window are zero, and the eliminated values overwrite
        // psi in place.
        let w = &mut self.state.psi[lo..=hi];
        let s = split - lo;
        let stored = free.cp.len().min(s);
        let mut d_prev = zero;
        let mut left = zero;
        for k in 0..stored {
            let centre = w[k];
            let right = if k + 1 < m { w[k + 1] } else { zero };
            d_prev = free.alpha[k] * centre + free.beta[k] * (left + right) - free.cp[k] * d_prev;
            w[k] = d_prev;
            left = centre;
        }
        let cp = free.limit.2;
        let bulk_end = s.min(m - 1);
        if stored < bulk_end {
            (d_prev, left) = forward_bulk(w, stored, bulk_end, left, d_prev, free.limit, &free.powers);
        }
        for k in bulk_end.max(stored)..s {
            let centre = w[k];
            let (al, be, c) = free.row(k);
            d_prev = al * centre + be * left - c * d_prev;
            w[k] = d_prev;
            left = centre;
        }
        self.cp.clear();
        let mut cp_prev = if s > 0 { free.cp(s - 1) } else { zero };
        for k in s..m {
            let (ai, bi, ci) = row(lo + k);
            let centre = w[k];
            let right = if k + 1 < m { w[k + 1] } else { zero };
            let r = bi.conj() * centre + ai.conj() * left + ci.conj() * right;
            let inv = 1.0 / (bi - ai * cp_prev);
            cp_prev = ci * inv;
            self.cp.push(cp_prev);
            d_prev = (r - ai * d_prev) * inv;
            w[k] = d_prev;
            left = centre;
        }

        // back substitution
        let mut next = zero;
        for k in (s..m).rev() {
            next = w[k] - self.cp[k - s] * next;
            w[k] = next;
        }
        if stored < s {
            next = backward_bulk(w, stored, s, next, cp, &free.powers);
        }
        for k in (0..stored).rev() {
            next = w[k] - free.cp[k] * next;
            w[k] = next;
        }
        Ok(())
    }

    fn band_max(&self, from: usize, to: usize) -> f64 {
        self.state.psi[from..=to]
            .iter()
            .map(|z| z.norm_sqr())
            .fold(0.0, f64::max)
    }

    fn grow_window(&mut self) {
        let n = self.state.n_points();
        let band = BAND.min(self.hi - self.lo + 1);
        if self.lo > 0 && self.band_max(self.lo, self.lo + band - 1) > self.threshold {
            self.lo = self.lo.saturating_sub(GROWTH);
        }
        if self.hi < n - 1 && self.band_max(self.hi + 1 - band, self.hi) > self.threshold {
            self.hi = (self.hi + GROWTH).min(n - 1);
        }
    }

    fn check_leakage(&self) -> Result<()> {
        let n = self.state.n_points();
        let edges = [(0usize, self.lo == 0, "left"), (n - 1, self.hi == n - 1, "right")];
        // the peak is at least 1/sqrt(L) for a normalized state
        let floor = LEAKAGE / (self.state.x_max() - self.state.x_min()).sqrt();
        for (j, touching, name) in edges {
            if !touching {
                continue;
            }
            let edge = self.state.psi[j].norm();
            if edge <= floor {
                continue;
            }
            let peak = self.state.peak_amplitude();
            if edge > LEAKAGE * peak {
                return Err(CatcherError::Leakage {
                    t: self.state.t,
                    edge: name,
                    ratio: edge / peak,
                });
            }
        }
        Ok(())
    }
}

/// Independent chains run side by side in the constant-coefficient sweeps.
const LANES: usize = 4;

/// Forward elimination `d_k = alpha w_k + beta (w_{k-1} + w_{k+1}) - cp d_{k-1}`
/// over `w[from..to]` in place, given the old `w_{from-1}` as `left` and
/// `d_{from-1}`; `w[to]` is read but not written. Returns the last `d` and
/// the old `w_{to-1}`.
///
/// The recurrence is latency-bound, so the range is cut into `LANES`
/// segments swept together. All segments but the first start from zero;
/// the recurrence forgets its start as `(-cp)^j`, and adding
/// `(-cp)^(j+1) d_in` over the first nodes of each segment restores the
/// sequential result.
fn forward_bulk(
    w: &mut [Complex64],
    from: usize,
    to: usize,
    left: Complex64,
    d_in: Complex64,
    (alpha, beta, cp): (Complex64, Complex64, Complex64),
    powers: &[Complex64],
) -> (Complex64, Complex64) {
    let seg = (to - from) / LANES;
    let (mut d, mut left) = (d_in, left);
    let mut start = from;
    if seg > 2 * powers.len() + 2 {
        let zero = Complex64::new(0.0, 0.0);
        let base: [usize; LANES] = std::array::from_fn(|b| from + b * seg);
        let mut dl = [zero; LANES];
        dl[0] = d_in;
        let mut ll: [Complex64; LANES] =
            std::array::from_fn(|b| if b == 0 { left } else { w[base[b] - 1] });
        let ends: [Complex64; LANES] = std::array::from_fn(|b| w[base[b] + seg]);
        for i in 0..seg - 1 {
            for b in 0..LANES {
                let k = base[b] + i;
                let c = w[k];
                dl[b] = alpha * c + beta * (ll[b] + w[k + 1]) - cp * dl[b];
                w[k] = dl[b];
                ll[b] = c;
            }
        }
        for b in 0..LANES {
            let k = base[b] + seg - 1;
            let c = w[k];
            dl[b] = alpha * c + beta * (ll[b] + ends[b]) - cp * dl[b];
            w[k] = dl[b];
            ll[b] = c;
        }
        for b in 1..LANES {
            let incoming = dl[b - 1];
            for (j, p) in powers.iter().enumerate() {
                w[base[b] + j] += p * incoming;
            }
        }
        d = dl[LANES - 1];
        left = ll[LANES - 1];
        start = from + LANES * seg;
    }
    for k in start..to {
        let c = w[k];
        d = alpha * c + beta * (left + w[k + 1]) - cp * d;
        w[k] = d;
        left = c;
    }
    (d, left)
}

/// Back substitution `x_k = w_k - cp x_{k+1}` over `w[from..to]` in place,
/// given `x_to`; returns `x_from`. Laned as in [`forward_bulk`].
fn backward_bulk(
    w: &mut [Complex64],
    from: usize,
    to: usize,
    x_in: Complex64,
    cp: Complex64,
    powers: &[Complex64],
) -> Complex64 {
    let seg = (to - from) / LANES;
    let mut x = x_in;
    let mut end = to;
    if seg > 2 * powers.len() + 2 {
        let zero = Complex64::new(0.0, 0.0);
        let base: [usize; LANES] = std::array::from_fn(|b| to - (LANES - b) * seg);
        let mut xl = [zero; LANES];
        xl[LANES - 1] = x_in;
        for i in 1..=seg {
            for b in 0..LANES {
                let k = base[b] + seg - i;
                xl[b] = w[k] - cp * xl[b];
                w[k] = xl[b];
            }
        }
        for b in 0..LANES - 1 {
            let incoming = xl[b + 1];
            for (j, p) in powers.iter().enumerate() {
                w[base[b] + seg - 1 - j] += p * incoming;
            }
        }
        x = xl[0];
        end = base[0];
    }
    for k in (from..end).rev() {
        x = w[k] - cp * x;
        w[k] = x;
    }
    x
}

impl FreeFactor {
    fn h_matches(&self, h: f64, kappa: f64) -> bool {
        let expected = Complex64::new(10.0 / 12.0, h * kappa);
        (self.b - expected).norm() <= 1e-14 * expected.norm()
    }
}

/// Propagates `state` to `t_end` in equal steps no longer than `opts.dt`.
pub fn propagate(
    state: GridState,
    wall: &WallSpec,
    p: &StoppingProtocol,
    t_end: f64,
    opts: &SolverOptions,
) -> Result<GridState> {
    let span = t_end - state.t;
    if !(span >= 0.0) {
        return Err(CatcherError::param(
            "t_end",
            format!("must not precede the state time {}, got {t_end}", state.t),
        ));
    }
    if span == 0.0 {
        return Ok(state);
    }
    let n = (span / opts.dt).ceil().max(1.0);
    let opts = SolverOptions { dt: span / n, ..*opts };
    let opts = SolverOptions { t_end, ..opts };
    let mut prop = Propagator::new(state, *wall, *p, opts)?;
    prop.advance(n as u64)?;
    let mut out = prop.into_state()?;
    out.t = t_end;
    Ok(out)
}
