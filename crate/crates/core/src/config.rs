//! TOML run configuration.
//!
//! ```toml
//! mode = "quantum"            # optional; the CLI subcommand takes precedence
//! output_dir = "out/example1"
//!
//! [protocol]
//! d = 50e-6
//! t_f = 8e-3
//!
//! [wavepacket]
//! x0 = -2e-6
//! dx = 0.4e-6
//! v0 = 3.125e-2
//! dv = 1.25e-2
//!
//! [wall]
//! kind = "gaussian"
//! v0_over_hbar = 3.75e6
//! dx_v = 0.4e-6
//!
//! [numerics]
//! snapshots = 8
//! ```
//!
//! Every section that is present is validated when the file is parsed,
//! whatever the mode; sections a mode needs but that are missing are
//! reported by [`RunConfig::validate_for`].

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ensemble::EnsembleSpec;
use crate::error::{CatcherError, Result};
use crate::protocol::{DesignSearch, PhaseSpacePoint, StoppingProtocol};
use crate::quantum::{
    QuantumNumerics, QuantumSetup, TimeOrder, WallKind, WallSpec, WavepacketSpec, RUBIDIUM_MASS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Map,
    Ensemble,
    Quantum,
    Design,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Map => "map",
            Mode::Ensemble => "ensemble",
            Mode::Quantum => "quantum",
            Mode::Design => "design",
        })
    }
}

impl FromStr for Mode {
    type Err = CatcherError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "map" => Ok(Mode::Map),
            "ensemble" => Ok(Mode::Ensemble),
            "quantum" => Ok(Mode::Quantum),
            "design" => Ok(Mode::Design),
            other => Err(CatcherError::Config(format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    pub d: f64,
    pub t_f: f64,
}

/// Initial phase-space density, either in SI units (`x0`, `dx`, `v0`, `dv`)
/// or scaled by the protocol (`chi0`, `dchi`, `nu0`, `dnu`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EnsembleConfig {
    Dimensional(DimensionalEnsemble),
    Dimensionless(DimensionlessEnsemble),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimensionalEnsemble {
    pub x0: f64,
    pub dx: f64,
    pub v0: f64,
    pub dv: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimensionlessEnsemble {
    pub chi0: f64,
    pub dchi: f64,
    pub nu0: f64,
    pub dnu: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WavepacketConfig {
    pub x0: f64,
    pub dx: f64,
    pub v0: f64,
    pub dv: f64,
    #[serde(default = "default_mass")]
    pub mass: f64,
}

fn default_mass() -> f64 {
    RUBIDIUM_MASS
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WallConfig {
    pub kind: WallKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v0_over_hbar: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dx_v: Option<f64>,
    /// Ideal-wall height; defaults to the smallest admissible value,
    /// `100 mu v_max^2 / 2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_inf_over_hbar: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ramp_width: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapConfig {
    /// Dimensionless initial points `[chi_s, nu_s]`.
    pub points: Vec<[f64; 2]>,
    /// Step of the brute-force trajectory check; omitted means no check.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_dt: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    pub x_s_worst: f64,
    pub v_s_min: f64,
    pub v_f_target: f64,
    pub v_b: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_d: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub growth: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericsConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Monte Carlo samples (ensemble mode).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_samples: Option<usize>,
    /// Nodes per axis of the phase-space density grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_points: Option<usize>,
    /// Nodes per axis of the lattice the marginals are integrated on.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub marginal_points: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub histogram_bins: Option<usize>,
    /// Dimensionless speed below which a classical particle counts as stopped.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stopped_threshold: Option<f64>,
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
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_order: Option<TimeOrder>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshots: Option<usize>,
    /// Speed (m/s) below which quantum probability counts as stopped.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_threshold: Option<f64>,
    /// Hand content out of the wall's reach to the exact far field.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub far_field: Option<bool>,
    /// Write every n-th row of the wave-function and velocity snapshots.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_stride: Option<usize>,
}

pub const DEFAULT_SEED: u64 = 20_240_101;
pub const DEFAULT_SAMPLES: usize = 1_000_000;
pub const DEFAULT_GRID_POINTS: usize = 512;
/// Default nodes per axis of the lattice the marginals are integrated on.
pub const DEFAULT_MARGINAL_POINTS: usize = 1024 * 64 + 1;
pub const DEFAULT_HISTOGRAM_BINS: usize = 256;
pub const DEFAULT_STOPPED_THRESHOLD: f64 = 1.0;

impl NumericsConfig {
    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples.unwrap_or(DEFAULT_SAMPLES)
    }

    pub fn grid_points(&self) -> usize {
        self.grid_points.unwrap_or(DEFAULT_GRID_POINTS)
    }

    pub fn marginal_points(&self) -> usize {
        self.marginal_points.unwrap_or(DEFAULT_MARGINAL_POINTS)
    }

    pub fn histogram_bins(&self) -> usize {
        self.histogram_bins.unwrap_or(DEFAULT_HISTOGRAM_BINS)
    }

    pub fn stopped_threshold(&self) -> f64 {
        self.stopped_threshold.unwrap_or(DEFAULT_STOPPED_THRESHOLD)
    }

    pub fn output_stride(&self) -> usize {
        self.output_stride.unwrap_or(1)
    }

    pub fn quantum(&self) -> QuantumNumerics {
        let d = QuantumNumerics::default();
        QuantumNumerics {
            dx: self.dx,
            dt: self.dt,
            t_end: self.t_end,
            x_min: self.x_min,
            x_max: self.x_max,
            time_order: self.time_order.unwrap_or(d.time_order),
            snapshots: self.snapshots.unwrap_or(d.snapshots),
            v_threshold: self.v_threshold,
            far_field: self.far_field.unwrap_or(true),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protocol: Option<ProtocolConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<EnsembleConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wavepacket: Option<WavepacketConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall: Option<WallConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map: Option<MapConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design: Option<DesignConfig>,
    #[serde(default)]
    pub numerics: NumericsConfig,
}

impl RunConfig {
    /// Parses and validates every section present.
    pub fn parse(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| CatcherError::Config(e.to_string()))?;
        config.validate()?;
        if let Some(mode) = config.mode {
            config.validate_for(mode)?;
        }
        Ok(config)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| match e {
            CatcherError::Config(msg) => CatcherError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| CatcherError::Config(e.to_string()))
    }

    fn validate(&self) -> Result<()> {
        if self.protocol.is_some() {
            self.protocol()?;
        }
        if self.ensemble.is_some() {
            self.ensemble_spec()?;
        }
        if self.wavepacket.is_some() {
            self.wavepacket_spec()?;
        }
        if self.wall.is_some() {
            self.wall_spec()?;
        }
        if let Some(map) = &self.map {
            for &[chi, nu] in &map.points {
                let p = PhaseSpacePoint::checked(chi, nu)?;
                if p.chi > 0.0 {
                    return Err(CatcherError::param("map.points", format!("chi_s must be <= 0, got {chi}")));
                }
            }
            if let Some(dt) = map.oracle_dt {
                crate::error::ensure_positive("map.oracle_dt", dt)?;
            }
        }
        if self.design.is_some() {
            self.design_search()?;
        }
        let n = &self.numerics;
        for (name, value) in [
            ("numerics.n_samples", n.n_samples),
            ("numerics.grid_points", n.grid_points),
            ("numerics.histogram_bins", n.histogram_bins),
            ("numerics.output_stride", n.output_stride),
        ] {
            if value == Some(0) {
                return Err(CatcherError::param(name, "must be at least 1"));
            }
        }
        for (name, value) in [("numerics.grid_points", n.grid_points), ("numerics.marginal_points", n.marginal_points)] {
            if matches!(value, Some(0 | 1)) {
                return Err(CatcherError::param(name, "must be at least 2"));
            }
        }
        for (name, value) in [
            ("numerics.stopped_threshold", n.stopped_threshold),
            ("numerics.dx", n.dx),
            ("numerics.dt", n.dt),
            ("numerics.t_end", n.t_end),
            ("numerics.v_threshold", n.v_threshold),
        ] {
            if let Some(v) = value {
                crate::error::ensure_positive(name, v)?;
            }
        }
        Ok(())
    }

    /// Checks that the sections `mode` needs are present and consistent.
    pub fn validate_for(&self, mode: Mode) -> Result<()> {
        match mode {
            Mode::Map => {
                self.require("map", self.map.is_some())?;
            }
            Mode::Ensemble => {
                self.require("protocol", self.protocol.is_some())?;
                self.require("ensemble", self.ensemble.is_some())?;
            }
            Mode::Quantum => {
                self.require("protocol", self.protocol.is_some())?;
                self.require("wavepacket", self.wavepacket.is_some())?;
                self.require("wall", self.wall.is_some())?;
                self.quantum_setup()?;
            }
            Mode::Design => {
                self.require("design", self.design.is_some())?;
            }
        }
        Ok(())
    }

    fn require(&self, section: &str, present: bool) -> Result<()> {
        if present {
            Ok(())
        } else {
            Err(CatcherError::Config(format!("missing [{section}] section")))
        }
    }

    fn missing(section: &str) -> CatcherError {
        CatcherError::Config(format!("missing [{section}] section"))
    }

    pub fn protocol(&self) -> Result<StoppingProtocol> {
        let p = self.protocol.ok_or_else(|| Self::missing("protocol"))?;
        StoppingProtocol::new(p.d, p.t_f)
    }

    pub fn ensemble_spec(&self) -> Result<EnsembleSpec> {
        match self.ensemble.ok_or_else(|| Self::missing("ensemble"))? {
            EnsembleConfig::Dimensional(e) => EnsembleSpec::new(e.x0, e.dx, e.v0, e.dv),
            EnsembleConfig::Dimensionless(e) => {
                EnsembleSpec::from_dimensionless(&self.protocol()?, e.chi0, e.dchi, e.nu0, e.dnu)
            }
        }
    }

    pub fn wavepacket_spec(&self) -> Result<WavepacketSpec> {
        let w = self.wavepacket.ok_or_else(|| Self::missing("wavepacket"))?;
        WavepacketSpec::new(w.x0, w.dx, w.v0, w.dv, w.mass)
    }

    /// The wall; an ideal wall without an explicit height gets the smallest
    /// admissible one, which needs the wave packet.
    pub fn wall_spec(&self) -> Result<WallSpec> {
        let w = self.wall.ok_or_else(|| Self::missing("wall"))?;
        let need = |name: &'static str, v: Option<f64>| {
            v.ok_or_else(|| CatcherError::param(name, "required for this wall kind"))
        };
        match w.kind {
            WallKind::None => Ok(WallSpec::none()),
            WallKind::Gaussian => WallSpec::gaussian(need("wall.v0_over_hbar", w.v0_over_hbar)?, need("wall.dx_v", w.dx_v)?),
            WallKind::Ideal => {
                let height = match w.v_inf_over_hbar {
                    Some(h) => h,
                    None => {
                        let packet = self.wavepacket_spec()?;
                        let v_max = packet.v0.abs() + 5.0 * packet.dv_spread;
                        WallSpec::min_ideal_height(packet.mu(), v_max)
                    }
                };
                WallSpec::ideal(height, w.ramp_width.unwrap_or(0.0))
            }
        }
    }

    pub fn quantum_setup(&self) -> Result<QuantumSetup> {
        QuantumSetup::new(
            self.wavepacket_spec()?,
            self.wall_spec()?,
            self.protocol()?,
            &self.numerics.quantum(),
        )
    }

    pub fn design_search(&self) -> Result<(DesignSearch, DesignConfig)> {
        let d = self.design.ok_or_else(|| Self::missing("design"))?;
        let mut search = DesignSearch::default();
        if let Some(initial) = d.initial_d {
            crate::error::ensure_positive("design.initial_d", initial)?;
            search.initial_d = Some(initial);
        }
        if let Some(growth) = d.growth {
            if !(growth > 1.0) || !growth.is_finite() {
                return Err(CatcherError::param("design.growth", format!("must be > 1, got {growth}")));
            }
            search.growth = growth;
        }
        if let Some(steps) = d.max_steps {
            if steps == 0 {
                return Err(CatcherError::param("design.max_steps", "must be at least 1"));
            }
            search.max_steps = steps;
        }
        if !(d.x_s_worst <= 0.0) {
            return Err(CatcherError::param("design.x_s_worst", format!("must be <= 0, got {}", d.x_s_worst)));
        }
        crate::error::ensure_positive("design.v_s_min", d.v_s_min)?;
        crate::error::ensure_positive("design.v_f_target", d.v_f_target)?;
        crate::error::ensure_positive("design.v_b", d.v_b)?;
        Ok((search, d))
    }
}
