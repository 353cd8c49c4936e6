//! Default numerics and the snapshot-emitting driver for a full run.

use serde::{Deserialize, Serialize};

use super::grid::GridState;
use super::observables::{observables_with, velocity_density, Observables, VelocityDensity};
use super::potential::{WallKind, WallSpec};
use super::solver::{de_broglie_wavelength, Propagator, SolverOptions, TimeOrder};
use super::wavepacket::{build_initial_wavefunction, WavepacketSpec};
use crate::error::{ensure_positive, CatcherError, Result};
use crate::protocol::StoppingProtocol;

/// Default grid spacing as a fraction of `lambda_dB(v_max)`.
pub const DX_PER_WAVELENGTH: f64 = 1.0 / 12.0;
/// Default ideal-wall ramp width as a fraction of `lambda_dB(v_max)`.
pub const RAMP_PER_WAVELENGTH: f64 = 2.0;
/// Width of the taper that clears the initial state out of an ideal wall,
/// in units of `lambda_dB(v_max)`.
pub const TAPER_PER_WAVELENGTH: f64 = 1.0;
/// Velocity spreads beyond `v0` covered by the default domain for content
/// that moves right past a Gaussian wall.
const REACH_SPREADS: f64 = 10.0;
/// Left-moving speed, in units of `v_max`, covered by the default domain when
/// a wall is present.
const REACH_SPEEDS: f64 = 4.0;
/// Default kinetic phase `dt mu v_max^2 / 2` per step, by time order.
pub fn default_phase_per_step(order: TimeOrder) -> f64 {
    match order {
        TimeOrder::Second => 0.05,
        TimeOrder::Fourth => 0.5,
    }
}

/// Numerical settings of a quantum run; unset values take the defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantumNumerics {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dx: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_max: Option<f64>,
    #[serde(default = "default_order")]
    pub time_order: TimeOrder,
    /// Intermediate snapshots between `t = 0` and `t_end`.
    #[serde(default = "default_snapshots")]
    pub snapshots: usize,
    /// Speed below which probability counts as stopped; defaults to `v_b`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_threshold: Option<f64>,
    /// Hand content out of the wall's reach to the exact far field.
    #[serde(default = "default_far_field")]
    pub far_field: bool,
}

fn default_far_field() -> bool {
    true
}

fn default_order() -> TimeOrder {
    TimeOrder::Fourth
}

fn default_snapshots() -> usize {
    8
}

impl Default for QuantumNumerics {
    fn default() -> Self {
        Self {
            dx: None,
            dt: None,
            t_end: None,
            x_min: None,
            x_max: None,
            time_order: default_order(),
            snapshots: default_snapshots(),
            v_threshold: None,
            far_field: true,
        }
    }
}

/// Fully resolved run parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumSetup {
    pub packet: WavepacketSpec,
    pub wall: WallSpec,
    pub protocol: StoppingProtocol,
    pub x_min: f64,
    pub x_max: f64,
    pub n_points: usize,
    pub t_end: f64,
    pub n_steps: u64,
    pub snapshots: usize,
    pub v_threshold: f64,
    pub solver: SolverOptions,
}

impl QuantumSetup {
    /// Resolves defaults. `wall` is taken as given except that an ideal wall
    /// with a zero ramp width receives the default ramp.
    pub fn new(
        packet: WavepacketSpec,
        mut wall: WallSpec,
        protocol: StoppingProtocol,
        numerics: &QuantumNumerics,
    ) -> Result<Self> {
        let mu = packet.mu();
        let v_max = packet.v0.abs() + 5.0 * packet.dv_spread;
        let lambda = de_broglie_wavelength(mu, v_max);
        if wall.kind == WallKind::Ideal {
            let min = WallSpec::min_ideal_height(mu, v_max);
            if wall.v_inf_over_hbar < min * (1.0 - 1e-12) {
                return Err(CatcherError::param(
                    "v_inf_over_hbar",
                    format!(
                        "ideal wall must be at least 100 mu v_max^2 / 2 = {min:.4e} 1/s, got {:.4e}",
                        wall.v_inf_over_hbar
                    ),
                ));
            }
            if wall.ramp_width == 0.0 {
                wall.ramp_width = RAMP_PER_WAVELENGTH * lambda;
            }
        }
        let t_end = numerics.t_end.unwrap_or(protocol.t_f());
        ensure_positive("t_end", t_end)?;
        if wall.kind != WallKind::None && t_end > protocol.t_f() {
            return Err(CatcherError::param(
                "t_end",
                format!("must not exceed t_f = {} with a wall, got {t_end}", protocol.t_f()),
            ));
        }
        let dx = numerics.dx.unwrap_or(DX_PER_WAVELENGTH * lambda);
        ensure_positive("dx", dx)?;
        let (x0, sx, v0, sv) = (packet.x0, packet.dx_spread, packet.v0, packet.dv_spread);
        // Content reflected while the wall is still fast leaves with up to
        // about twice v_max; the margin keeps its faint tail off the edge.
        let fastest = REACH_SPEEDS * v_max;
        let x_min = numerics.x_min.unwrap_or_else(|| {
            let spread = x0 - 10.0 * packet.free_position_spread(t_end);
            match wall.kind {
                WallKind::None => spread,
                _ => spread.min(x0 - 10.0 * sx - fastest * t_end),
            }
        });
        // Content that passes the wall or never meets it keeps moving right;
        // only the ideal wall confines everything behind it.
        let free_reach = x0 + 10.0 * sx + (v0 + REACH_SPREADS * sv).max(0.0) * t_end;
        let x_max = numerics.x_max.unwrap_or_else(|| match wall.kind {
            WallKind::None => free_reach,
            _ => {
                let reach = protocol.d() * (t_end / protocol.t_f()).sqrt() + 20.0 * wall.edge_width();
                let reach = reach.max(x0 + 10.0 * sx);
                if wall.kind == WallKind::Gaussian {
                    reach.max(free_reach)
                } else {
                    reach
                }
            }
        });
        if !(x_max > x_min) {
            return Err(CatcherError::param(
                "x_max",
                format!("must exceed x_min = {x_min}, got {x_max}"),
            ));
        }
        let n_points = ((x_max - x_min) / dx).ceil() as usize + 1;
        let x_max = x_min + (n_points - 1) as f64 * dx;

        let order = numerics.time_order;
        let dt = numerics
            .dt
            .unwrap_or(default_phase_per_step(order) / (0.5 * mu * v_max * v_max));
        ensure_positive("dt", dt)?;
        let n_steps = (t_end / dt).ceil().max(1.0) as u64;
        let v_threshold = numerics.v_threshold.unwrap_or(protocol.v_b());
        ensure_positive("v_threshold", v_threshold)?;
        Ok(Self {
            packet,
            wall,
            protocol,
            x_min,
            x_max,
            n_points,
            t_end,
            n_steps,
            snapshots: numerics.snapshots,
            v_threshold,
            solver: SolverOptions {
                mass: packet.mass,
                v_max,
                dt: t_end / n_steps as f64,
                order,
                t_end,
                far_field: numerics.far_field,
            },
        })
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.n_points - 1) as f64
    }

    /// Step counts at which snapshots are taken, starting with 0 and ending
    /// with `n_steps`.
    pub fn snapshot_steps(&self) -> Vec<u64> {
        let segments = self.snapshots as u64 + 1;
        let mut steps: Vec<u64> = (0..=segments)
            .map(|k| (k as u128 * self.n_steps as u128 / segments as u128) as u64)
            .collect();
        steps.dedup();
        steps
    }

    /// The initial wave packet. With an ideal wall the Gaussian tail that
    /// starts inside the wall is removed: it is tapered smoothly to zero over
    /// `TAPER_PER_WAVELENGTH * lambda_dB(v_max)` in front of the wall face,
    /// and the state is renormalized.
    pub fn initial_state(&self) -> Result<GridState> {
        let grid = GridState::zeros(self.x_min, self.x_max, self.n_points, 0.0)?;
        let mut state = build_initial_wavefunction(&self.packet, &grid)?;
        if self.wall.kind == WallKind::Ideal {
            let face = self.protocol.mirror_position(0.0)?;
            let width = TAPER_PER_WAVELENGTH * de_broglie_wavelength(self.packet.mu(), self.solver.v_max);
            for j in 0..state.n_points() {
                let u = (state.x(j) - (face - width)) / width;
                if u >= 1.0 {
                    state.psi[j] = Default::default();
                } else if u > 0.0 {
                    let keep = 1.0 - u * u * (3.0 - 2.0 * u);
                    state.psi[j] *= keep;
                }
            }
            state.normalize();
        }
        Ok(state)
    }
}

pub struct Snapshot<'a> {
    pub index: usize,
    pub state: &'a GridState,
    pub velocity: &'a VelocityDensity,
    pub observables: &'a Observables,
}

#[derive(Debug, Clone)]
pub struct QuantumRun {
    pub observables: Vec<Observables>,
    pub final_state: GridState,
    /// Active window at the end, as node indices.
    pub window: (usize, usize),
}

impl QuantumRun {
    pub fn last(&self) -> &Observables {
        self.observables.last().expect("a run has at least two snapshots")
    }
}

/// Runs the setup, calling `on_snapshot` at `t = 0`, at the intermediate
/// snapshot times and at `t_end`.
pub fn run_quantum<F>(setup: &QuantumSetup, mut on_snapshot: F) -> Result<QuantumRun>
where
    F: FnMut(&Snapshot<'_>) -> Result<()>,
{
    let state = setup.initial_state()?;
    let mut prop = Propagator::new(state, setup.wall, setup.protocol, setup.solver)?;
    let mut done = 0u64;
    let mut observables = Vec::new();
    for (index, &step) in setup.snapshot_steps().iter().enumerate() {
        prop.advance(step - done)?;
        done = step;
        let state = prop.state()?;
        let velocity = velocity_density(&state, setup.packet.mass);
        let obs = observables_with(&state, &velocity, setup.v_threshold, &setup.wall, &setup.protocol)?;
        log::info!(
            "t = {:.4e} s: norm {:.10}, <x> {:.4e} m, <v> {:.4e} m/s, window {:?}",
            obs.t,
            obs.norm,
            obs.mean_x,
            obs.mean_v,
            prop.window()
        );
        on_snapshot(&Snapshot {
            index,
            state: &state,
            velocity: &velocity,
            observables: &obs,
        })?;
        observables.push(obs);
    }
    let window = prop.window();
    Ok(QuantumRun {
        observables,
        final_state: prop.into_state()?,
        window,
    })
}
