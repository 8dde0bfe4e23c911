// Scratch probe runs used while calibrating test tolerances. Not part of the
// test suite.

use qlyap::classical::{benettin_lyapunov, evolve_classical, ClassicalState};
use qlyap::grid::{build_grid, gaussian_packet, potential_minima, DuffingParams, SystemParams};
use qlyap::lyapunov::{
    ensemble_lyapunov, quantum_lyapunov_trajectory, DirectionPolicy, LyapunovConfig,
};
use qlyap::noise::NoiseStream;
use qlyap::propagator::{MeasurementConfig, PropagatorConfig};

fn classical_lambda() {
    let params = DuffingParams::standard(1.0);
    let dt = params.period() / 2000.0;
    let (_, xm) = potential_minima(&params).unwrap();
    let s0 = ClassicalState { x: xm, p: 0.0, t: 0.0 };
    let warmed = evolve_classical(&s0, &params, dt, 100.0 * params.period(), None);
    let t0 = std::time::Instant::now();
    let ft = benettin_lyapunov(&warmed, &params, dt, 5000.0 * params.period(), params.period() / 4.0, None).unwrap();
    println!(
        "classical lambda = {:.4}  ({} s)",
        ft.final_lambda().unwrap(),
        t0.elapsed().as_secs_f32()
    );
}

fn quantum_k0_decay() {
    let hbar = 16.0;
    let params = DuffingParams::standard(hbar);
    let system = SystemParams::from(&params);
    let grid = build_grid(-15.0, 15.0, 512, hbar).unwrap();
    let (_, xm) = potential_minima(&params).unwrap();
    let omega0 = (4.0 * params.a / params.mass).sqrt();
    let sigma = (hbar / (2.0 * params.mass * omega0)).sqrt();
    let psi = gaussian_packet(&grid, xm, 0.0, sigma).unwrap();
    let period = params.period();
    let pcfg = PropagatorConfig::new(period / 2000.0);
    let lcfg = LyapunovConfig {
        t_max: 110.0 * period,
        ..LyapunovConfig::standard(&params, 110.0 * period)
    };
    let mut noise = NoiseStream::new(42, 0, pcfg.dt);
    let t0 = std::time::Instant::now();
    let (ft, div) = quantum_lyapunov_trajectory(
        &psi,
        &system,
        &MeasurementConfig::off(),
        &pcfg,
        &lcfg,
        &mut noise,
    )
    .unwrap();
    println!("k=0 run took {} s, reseeds {}", t0.elapsed().as_secs_f32(), div.underflow_reseeds);
    // finite-time exponent of the ABSOLUTE divergence: ln Δ(t) / t where
    // ln Δ(t) = λ(t)·t + ln delta0; log-log fit of |·| over t in [10T, 100T]
    let delta0 = 1e-6f64;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (i, &t) in ft.times.iter().enumerate() {
        if t >= 10.0 * period && t <= 100.0 * period {
            let lambda_abs = (ft.lambda_t[i] * t + delta0.ln()) / t;
            xs.push(t.ln());
            ys.push(lambda_abs.abs().ln());
        }
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    println!(
        "k=0: slope = {:.3} over {} points (used {} of {})",
        sxy / sxx,
        xs.len(),
        xs.len(),
        ft.times.len()
    );
    for (i, &t) in ft.times.iter().enumerate().step_by(40) {
        println!("  t/T = {:6.1}  lambda = {:+.5e}  acc = {:+.4}", t / period, ft.lambda_t[i], ft.lambda_t[i] * t);
    }
}

fn quantum_lambda(hbar: f64, k: f64, n_traj: u64, periods: f64, verbose: bool) {
    let params = DuffingParams::standard(hbar);
    let system = SystemParams::from(&params);
    let grid = build_grid(-20.0, 20.0, 1024, hbar).unwrap();
    let (_, xm) = potential_minima(&params).unwrap();
    let omega0 = (4.0 * params.a / params.mass).sqrt();
    let sigma = (hbar / (2.0 * params.mass * omega0)).sqrt();
    let psi = gaussian_packet(&grid, xm, 0.0, sigma).unwrap();
    let period = params.period();
    let pcfg = PropagatorConfig::new(period / 2000.0);
    let lcfg = LyapunovConfig::standard(&params, periods * period);
    let meas = MeasurementConfig::new(k).unwrap();
    let t0 = std::time::Instant::now();
    if verbose {
        let mut noise = NoiseStream::new(20260810, 0, pcfg.dt);
        let (ft, div) =
            quantum_lyapunov_trajectory(&psi, &system, &meas, &pcfg, &lcfg, &mut noise).unwrap();
        for (i, &t) in ft.times.iter().enumerate() {
            if (i + 1) % 100 == 0 {
                println!(
                    "  t/T = {:6.1}  lambda = {:+.4}  acc = {:+.3}  dx = {:.3e}",
                    t / period,
                    ft.lambda_t[i],
                    ft.lambda_t[i] * t,
                    div.delta_values[i]
                );
            }
        }
        println!("reseeds = {}", div.underflow_reseeds);
        return;
    }
    let est = ensemble_lyapunov(&psi, &system, &meas, &pcfg, &lcfg, 20260810, n_traj).unwrap();
    println!(
        "hbar={hbar} k={k}: lambda = {:.4} +- {:.4} (n={n_traj}, {periods}T) in {} s",
        est.final_mean().unwrap(),
        est.final_std().unwrap(),
        t0.elapsed().as_secs_f32()
    );
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    match args.get(1).map(|s| s.as_str()) {
        Some("classical") => classical_lambda(),
        Some("k0") => quantum_k0_decay(),
        Some("lam") => {
            let hbar: f64 = args[2].parse().unwrap();
            let k: f64 = args[3].parse().unwrap();
            let n: u64 = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(8);
            let p: f64 = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(500.0);
            let verbose = args.get(6).map(|s| s == "v").unwrap_or(false);
            quantum_lambda(hbar, k, n, p, verbose);
        }
        _ => eprintln!("usage: probe classical|k0|lam <hbar> <k> [n] [periods] [v]"),
    }
}
