//! Convergence study for the quantum examples: runs one case at a given
//! grid refinement and prints the final observables.
//!
//! cargo run --release --example convergence -- <ex1|ex1g|ex2|ex2g|free1> [refine] [phase] [order] [t_end] [ramp]
//!
//! `refine` divides both dx and dt; `phase` is the kinetic phase per step at
//! refine 1 and `ramp` the ideal-wall ramp in wavelengths. Environment:
//! `XMIN` overrides the left edge, `NO_FAR_FIELD` keeps everything on the
//! grid, and `LOCATE=<v>` reports where content faster than `v` sits at the
//! end (`XSCALE` stretches the position bins).

use std::time::Instant;

use catcher_core::quantum::{
    run_quantum, QuantumNumerics, QuantumSetup, TimeOrder, WallSpec, WavepacketSpec, RUBIDIUM_MASS,
};
use catcher_core::StoppingProtocol;

fn main() -> catcher_core::Result<()> {
    env_logger::init();
    let args: Vec<String> = std::env::args().collect();
    let case = args.get(1).map(String::as_str).unwrap_or("ex1");
    let refine: f64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(1.0);
    let phase: f64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(0.5);
    let t_end: Option<f64> = args.get(5).map(|s| s.parse().unwrap());
    let ramp: Option<f64> = args.get(6).map(|s| s.parse().unwrap());
    let order = match args.get(4).map(String::as_str) {
        Some("2") => TimeOrder::Second,
        _ => TimeOrder::Fourth,
    };
    let (packet, protocol, wall) = match case {
        "ex1" | "ex1g" | "free1" => {
            let packet = WavepacketSpec::new(-2e-6, 0.4e-6, 3.125e-2, 1.25e-2, RUBIDIUM_MASS)?;
            let p = StoppingProtocol::new(50e-6, 8e-3)?;
            let wall = match case {
                "ex1g" => WallSpec::gaussian(3.75e6, 0.4e-6)?,
                "free1" => WallSpec::none(),
                _ => WallSpec::ideal(WallSpec::min_ideal_height(packet.mu(), 3.125e-2 + 5.0 * 1.25e-2), 0.0)?,
            };
            (packet, p, wall)
        }
        _ => {
            let packet = WavepacketSpec::new(-3e-6, 0.3e-6, 3e-3, 1.24e-3, RUBIDIUM_MASS)?;
            let p = StoppingProtocol::new(1e-3, 1.0)?;
            let wall = match case {
                "ex2g" => WallSpec::gaussian(3e4, 0.8e-6)?,
                _ => WallSpec::ideal(WallSpec::min_ideal_height(packet.mu(), 3e-3 + 5.0 * 1.24e-3), 0.0)?,
            };
            (packet, p, wall)
        }
    };
    let mu = packet.mu();
    let v_max = packet.v0.abs() + 5.0 * packet.dv_spread;
    let lambda = catcher_core::quantum::de_broglie_wavelength(mu, v_max);
    let numerics = QuantumNumerics {
        dx: Some(lambda / 12.0 / refine),
        dt: Some(phase / (0.5 * mu * v_max * v_max) / refine),
        time_order: order,
        t_end,
        far_field: std::env::var("NO_FAR_FIELD").is_err(),
        x_min: std::env::var("XMIN").ok().map(|s| s.parse().unwrap()),
        snapshots: 7,
        ..QuantumNumerics::default()
    };
    let mut wall = wall;
    if let Some(r) = ramp {
        wall.ramp_width = r * lambda;
    }
    let setup = QuantumSetup::new(packet, wall, protocol, &numerics)?;
    println!(
        "{case}: n_points {} n_steps {} dx {:.3e} dt {:.3e}",
        setup.n_points,
        setup.n_steps,
        setup.dx(),
        setup.solver.dt
    );
    let start = Instant::now();
    let run = run_quantum(&setup, |snap| {
        let pv = snap.velocity;
        let tail: f64 = pv
            .v
            .iter()
            .zip(&pv.density)
            .filter(|(v, _)| v.abs() > 0.04)
            .map(|(_, p)| p * pv.dv)
            .sum();
        let band = |cut: f64| -> f64 {
            pv.v.iter().zip(&pv.density).filter(|(v, _)| v.abs() > cut).map(|(_, p)| p * pv.dv).sum()
        };
        println!(
            "t {:.3e} mean_v {:.6e} tail(|v|>4cm/s) {tail:.4e} >10cm/s {:.3e} >50cm/s {:.3e} >2m/s {:.3e}",
            snap.observables.t,
            snap.observables.mean_v,
            band(0.1),
            band(0.5),
            band(2.0)
        );
        Ok(())
    })?;
    let o = run.last();
    println!(
        "elapsed {:.1} s window {:?}\nnorm {:.12} mean_x {:.10e} std_x {:.10e} mean_v {:.10e} std_v {:.10e} stopped {:.6} transmitted {:.3e}",
        start.elapsed().as_secs_f64(),
        run.window,
        o.norm,
        o.mean_x,
        o.std_x,
        o.mean_v,
        o.std_v,
        o.stopped_prob,
        o.transmitted_prob
    );
    let pv = catcher_core::quantum::velocity_density(&run.final_state, packet.mass);
    let mut acc = 0.0;
    let mut marks = vec![0.01, 0.05, 0.25, 0.5, 0.75, 0.95, 0.99];
    let mut quant = Vec::new();
    for (v, p) in pv.v.iter().zip(&pv.density) {
        acc += p * pv.dv;
        while !marks.is_empty() && acc >= marks[0] {
            quant.push((marks.remove(0), *v));
        }
    }
    println!("velocity quantiles {quant:?}");
    for cut in [0.01, 0.02, 0.04, 0.08] {
        let tail: f64 = pv
            .v
            .iter()
            .zip(&pv.density)
            .filter(|(v, _)| v.abs() > cut)
            .map(|(_, p)| p * pv.dv)
            .sum();
        println!("weight |v| > {cut}: {tail:.4e}");
    }
    println!("free spread {:.10e}", packet.free_position_spread(setup.t_end));
    if std::env::var("LOCATE").is_ok() {
        use num_complex::Complex64;
        use rustfft::FftPlanner;
        let st = &run.final_state;
        let n = st.n_points();
        let mut buf = st.psi.clone();
        let mut planner = FftPlanner::new();
        planner.plan_fft_forward(n).process(&mut buf);
        let dk = 2.0 * std::f64::consts::PI / (n as f64 * st.dx());
        let cut: f64 = std::env::var("LOCATE").unwrap().parse().unwrap();
        for (q, b) in buf.iter_mut().enumerate() {
            let k = if q <= n / 2 { q as f64 } else { q as f64 - n as f64 } * dk;
            if (k / mu).abs() < cut {
                *b = Complex64::new(0.0, 0.0);
            }
        }
        planner.plan_fft_inverse(n).process(&mut buf);
        let xm = protocol.mirror_position(setup.t_end)?;
        let scale = std::env::var("XSCALE").map(|s| s.parse().unwrap()).unwrap_or(1.0);
        let edges = [f64::NEG_INFINITY, -3e-3 * scale, -2e-3 * scale, -1.5e-3 * scale, -1e-3 * scale, -2e-4 * scale, xm - 1e-5, xm - 1e-6, xm, f64::INFINITY];
        for w in edges.windows(2) {
            let weight: f64 = (0..n)
                .filter(|&j| st.x(j) >= w[0] && st.x(j) < w[1])
                .map(|j| buf[j].norm_sqr() / (n as f64 * n as f64) * st.dx())
                .sum();
            println!("|v| > {cut}: x in [{:.3e}, {:.3e}) weight {weight:.3e}", w[0], w[1]);
        }
    }
    Ok(())
}
