//! Dispatch of a [`RunConfig`] to the modules and CSV emission.
//!
//! Every number is written with 17 significant digits so that files
//! round-trip exactly and identical runs give identical bytes. The only
//! run-dependent content is the wall-clock row of `manifest.csv`.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use sha2::{Digest, Sha256};

use crate::classical_map::{forward_map, has_collision, trajectory_oracle};
use crate::config::{Mode, RunConfig};
use crate::ensemble::{
    final_density_grid, final_marginals, histogram, initial_density_grid, initial_marginals,
    mean_std, push_forward, sample_ensemble, stopped_fraction, stopped_probability, trapezoid, Axis,
    DensityGrid,
};
use crate::error::Result;
use crate::protocol::PhaseSpacePoint;
use crate::quantum::{run_quantum, Snapshot};

/// What a run produced.
#[derive(Debug, Clone, Default)]
pub struct RunReport {
    pub files: Vec<PathBuf>,
    /// Human-readable results, one line each.
    pub messages: Vec<String>,
}

/// Formats a float with 17 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

struct Output {
    dir: PathBuf,
    report: RunReport,
}

impl Output {
    fn csv(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
        let path = self.dir.join(name);
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(header)?;
        for row in rows {
            w.write_record(&row)?;
        }
        w.flush()?;
        self.report.files.push(path);
        Ok(())
    }

    fn say(&mut self, line: String) {
        self.report.messages.push(line);
    }
}

/// Runs `mode` and writes its files into `out_dir`, which is created if
/// needed. `seed` overrides the configured seed.
pub fn run(config: &RunConfig, mode: Mode, out_dir: &Path, seed: Option<u64>) -> Result<RunReport> {
    config.validate_for(mode)?;
    let mut config = config.clone();
    config.mode = Some(mode);
    if let Some(seed) = seed {
        config.numerics.seed = Some(seed);
    }
    fs::create_dir_all(out_dir)?;
    let mut out = Output {
        dir: out_dir.to_path_buf(),
        report: RunReport::default(),
    };
    let start = Instant::now();
    match mode {
        Mode::Map => run_map(&config, &mut out)?,
        Mode::Ensemble => run_ensemble(&config, &mut out)?,
        Mode::Quantum => run_quantum_mode(&config, &mut out)?,
        Mode::Design => run_design(&config, &mut out)?,
    }
    let elapsed = start.elapsed().as_secs_f64();

    let canonical = config.to_toml()?;
    let hash = hex::encode(Sha256::digest(canonical.as_bytes()));
    let mut rows = vec![
        vec!["mode".to_string(), mode.to_string()],
        vec!["config_sha256".to_string(), hash],
        vec!["seed".to_string(), config.numerics.seed().to_string()],
        vec!["version".to_string(), env!("CARGO_PKG_VERSION").to_string()],
    ];
    for path in &out.report.files {
        let bytes = fs::read(path)?;
        let name = path.file_name().unwrap_or_default().to_string_lossy();
        rows.push(vec![format!("sha256:{name}"), hex::encode(Sha256::digest(&bytes))]);
    }
    rows.push(vec!["wall_clock_s".to_string(), format!("{elapsed:.3}")]);
    out.csv("manifest.csv", &["key", "value"], rows)?;
    Ok(out.report)
}

fn run_map(config: &RunConfig, out: &mut Output) -> Result<()> {
    let map = config.map.as_ref().expect("validated");
    let mut rows = Vec::with_capacity(map.points.len());
    for &[chi, nu] in &map.points {
        let s = PhaseSpacePoint::checked(chi, nu)?;
        let r = forward_map(s)?;
        out.say(format!(
            "chi_s = {chi}, nu_s = {nu} -> chi_f = {}, nu_f = {}{}",
            r.point.chi,
            r.point.nu,
            if r.collided { "" } else { " (no collision)" }
        ));
        let mut row = vec![
            num(chi),
            num(nu),
            num(r.point.chi),
            num(r.point.nu),
            (r.collided as u8).to_string(),
            num(r.collision_root.unwrap_or(f64::NAN)),
        ];
        if let Some(dt) = map.oracle_dt {
            let o = trajectory_oracle(s, dt)?;
            row.extend([num(o.result.point.chi), num(o.result.point.nu), o.bounces.to_string()]);
        }
        rows.push(row);
    }
    let mut header = vec!["chi_s", "nu_s", "chi_f", "nu_f", "collided", "eta"];
    if map.oracle_dt.is_some() {
        header.extend(["oracle_chi_f", "oracle_nu_f", "bounces"]);
    }
    out.csv("map.csv", &header, rows)
}

fn grid_moments(axis: Axis, p: &[f64]) -> (f64, f64) {
    let h = axis.step();
    let nu = axis.values();
    let total = trapezoid(p, h);
    let first: Vec<f64> = nu.iter().zip(p).map(|(v, q)| v * q).collect();
    let mean = trapezoid(&first, h) / total;
    let second: Vec<f64> = nu.iter().zip(p).map(|(v, q)| (v - mean) * (v - mean) * q).collect();
    (mean, (trapezoid(&second, h) / total).sqrt())
}

fn run_ensemble(config: &RunConfig, out: &mut Output) -> Result<()> {
    let p = config.protocol()?;
    let e = config.ensemble_spec()?;
    let n = &config.numerics;
    let threshold = n.stopped_threshold();

    let (chi0_axis, nu0_axis) = DensityGrid::default_axes(&e, &p, n.grid_points())?;
    let (chi1_axis, nu1_axis) = DensityGrid::final_axes(&e, &p, n.grid_points())?;
    let initial = initial_density_grid(&e, &p, chi0_axis, nu0_axis);
    let fin = final_density_grid(&e, &p, chi1_axis, nu1_axis);
    let mut rows = Vec::with_capacity(2 * initial.values.len());
    for (stage, g) in [("initial", &initial), ("final", &fin)] {
        for i in 0..g.chi_axis.n {
            for j in 0..g.nu_axis.n {
                rows.push(vec![
                    stage.to_string(),
                    num(g.chi_axis.value(i)),
                    num(g.nu_axis.value(j)),
                    num(g.get(i, j)),
                ]);
            }
        }
    }
    out.csv("phase_density.csv", &["stage", "chi", "nu", "p"], rows)?;

    // the final density is a thin ridge, so the marginals use a much finer lattice
    let m = n.marginal_points();
    let fine = |a: Axis| Axis::new(a.lo, a.hi, m);
    let (chi0_fine, nu0_fine) = (fine(chi0_axis)?, fine(nu0_axis)?);
    let (chi1_fine, nu1_fine) = (fine(chi1_axis)?, fine(nu1_axis)?);
    let (px0, pv0) = initial_marginals(&e, &p, chi0_fine, nu0_fine)?;
    let (px1, pv1) = final_marginals(&e, &p, chi1_fine, nu1_fine)?;
    let long = |parts: [(&str, Axis, &Vec<f64>); 2]| -> Vec<Vec<String>> {
        parts
            .iter()
            .flat_map(|(stage, axis, values)| {
                values
                    .iter()
                    .enumerate()
                    .map(move |(k, v)| vec![stage.to_string(), num(axis.value(k)), num(*v)])
            })
            .collect()
    };
    out.csv(
        "marginal_x.csv",
        &["stage", "chi", "p"],
        long([("initial", chi0_fine, &px0), ("final", chi1_fine, &px1)]),
    )?;
    out.csv(
        "marginal_v.csv",
        &["stage", "nu", "p"],
        long([("initial", nu0_fine, &pv0), ("final", nu1_fine, &pv1)]),
    )?;

    let samples = sample_ensemble(&e, &p, n.n_samples(), n.seed())?;
    let finals = push_forward(&samples)?;
    let nu_s: Vec<f64> = samples.iter().map(|s| s.nu).collect();
    let nu_f: Vec<f64> = finals.iter().map(|r| r.point.nu).collect();
    let collided: Vec<f64> = finals.iter().filter(|r| r.collided).map(|r| r.point.nu).collect();
    let free: Vec<f64> = finals.iter().filter(|r| !r.collided).map(|r| r.point.nu).collect();

    let range = (nu0_axis.lo.min(nu1_axis.lo), nu0_axis.hi.max(nu1_axis.hi));
    let h0 = histogram(&nu_s, n.histogram_bins(), range)?;
    let h1 = histogram(&nu_f, n.histogram_bins(), range)?;
    let rows = (0..h0.counts.len())
        .map(|k| vec![num(h0.center(k)), num(h0.density[k]), num(h1.density[k])])
        .collect::<Vec<_>>();
    out.csv("histogram_v.csv", &["nu", "p_initial", "p_final"], rows)?;

    let total = samples.len() as f64;
    let mut rows = Vec::new();
    for (stage, values) in [("initial", &nu_s), ("final", &nu_f), ("final_collided", &collided), ("final_free", &free)] {
        let (mean, std) = mean_std(values);
        rows.push(vec![
            stage.to_string(),
            "monte_carlo".to_string(),
            num(values.len() as f64 / total),
            num(stopped_fraction(values, threshold)?),
            num(mean),
            num(std),
        ]);
    }
    for (stage, axis, pv) in [("initial", nu0_fine, &pv0), ("final", nu1_fine, &pv1)] {
        let (mean, std) = grid_moments(axis, pv);
        rows.push(vec![
            stage.to_string(),
            "grid".to_string(),
            num(trapezoid(pv, axis.step())),
            num(stopped_probability(axis, pv, threshold)?),
            num(mean),
            num(std),
        ]);
    }
    out.csv(
        "summary.csv",
        &["stage", "source", "weight", "stopped_fraction", "mean_nu", "std_nu"],
        rows,
    )?;

    let will_collide = samples
        .iter()
        .map(|&s| has_collision(s))
        .collect::<Result<Vec<_>>>()?
        .iter()
        .filter(|&&c| c)
        .count();
    out.say(format!(
        "{} samples: stopped fraction {:.6} -> {:.6}, collided {:.6}",
        samples.len(),
        stopped_fraction(&nu_s, threshold)?,
        stopped_fraction(&nu_f, threshold)?,
        will_collide as f64 / total
    ));
    Ok(())
}

fn run_quantum_mode(config: &RunConfig, out: &mut Output) -> Result<()> {
    let setup = config.quantum_setup()?;
    let stride = config.numerics.output_stride();
    let v_limit = 2.0 * setup.solver.v_max;
    let dir = out.dir.clone();
    let mut files = Vec::new();
    let run = run_quantum(&setup, |snap: &Snapshot<'_>| {
        let state = snap.state;
        let path = dir.join(format!("psi_t{}.csv", snap.index));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["x", "re", "im", "abs2"])?;
        for j in (0..state.n_points()).step_by(stride) {
            let z = state.psi[j];
            w.write_record([num(state.x(j)), num(z.re), num(z.im), num(z.norm_sqr())])?;
        }
        w.flush()?;
        files.push(path);

        let path = dir.join(format!("pv_t{}.csv", snap.index));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["v", "p_v"])?;
        let pv = snap.velocity;
        let inside: Vec<usize> = (0..pv.v.len()).filter(|&k| pv.v[k].abs() <= v_limit).collect();
        for &k in inside.iter().step_by(stride) {
            w.write_record([num(pv.v[k]), num(pv.density[k])])?;
        }
        w.flush()?;
        files.push(path);
        Ok(())
    })?;
    out.report.files.extend(files);
    let rows = run.observables.iter().map(|o| {
        vec![
            num(o.t),
            num(o.norm),
            num(o.mean_x),
            num(o.std_x),
            num(o.mean_v),
            num(o.std_v),
            num(o.stopped_prob),
            num(o.transmitted_prob),
        ]
    });
    out.csv(
        "observables.csv",
        &["t", "norm", "mean_x", "std_x", "mean_v", "std_v", "stopped_prob", "transmitted_prob"],
        rows.collect::<Vec<_>>(),
    )?;
    let last = run.last();
    out.say(format!(
        "t = {:.6e} s: norm {:.12}, <v> {:.6e} m/s, std v {:.6e} m/s, stopped {:.6}, transmitted {:.3e}",
        last.t, last.norm, last.mean_v, last.std_v, last.stopped_prob, last.transmitted_prob
    ));
    Ok(())
}

fn run_design(config: &RunConfig, out: &mut Output) -> Result<()> {
    let (search, d) = config.design_search()?;
    let design = search.run(d.x_s_worst, d.v_s_min, d.v_f_target, d.v_b)?;
    let rows = design.steps.iter().map(|s| {
        vec![
            num(s.d),
            num(s.t_f),
            num(s.final_velocity),
            (s.collides as u8).to_string(),
            (s.accepted as u8).to_string(),
        ]
    });
    out.csv(
        "design.csv",
        &["d", "t_f", "final_velocity", "collides", "accepted"],
        rows.collect::<Vec<_>>(),
    )?;
    out.say(format!(
        "d = {:.6e} m, t_f = {:.6e} s, v_b = {:.6e} m/s, worst-case v_f = {:.6e} m/s",
        design.protocol.d(),
        design.protocol.t_f(),
        design.protocol.v_b(),
        design.final_velocity
    ));
    Ok(())
}
