// Manual pair-divergence probe without renormalization (k = 0 diagnostics).
use num_complex::Complex64;
use qlyap::grid::{build_grid, gaussian_packet, potential_minima, DuffingParams, SystemParams};
use qlyap::propagator::{PropagatorConfig, Stepper};
use qlyap::displace;

fn main() {
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
    let mut stepper = Stepper::new(&grid, &system, &pcfg).unwrap();

    // warmup fiducial 20T
    let mut fid = psi.clone();
    let spp = 2000u64;
    for n in 0..20 * spp {
        stepper.step(&mut fid.amplitudes, n, 0.0, 0.0);
    }
    let delta0 = 1e-6;
    let mut pert = displace(&fid, delta0, 0.0).unwrap();
    let pscale = params.mass * params.omega;

    let mut max_d: f64 = 0.0;
    for i in 0..(100 * spp) {
        let n = 20 * spp + i;
        stepper.step(&mut fid.amplitudes, n, 0.0, 0.0);
        stepper.step(&mut pert.amplitudes, n, 0.0, 0.0);
        if (i + 1) % (spp / 4) == 0 {
            let (fx, fp) = stepper.phase_space_mean(&fid.amplitudes);
            let (px, pp) = stepper.phase_space_mean(&pert.amplitudes);
            let d = (px - fx).hypot((pp - fp) / pscale);
            max_d = max_d.max(d);
            let t = (i + 1) as f64 * pcfg.dt;
            if (i + 1) % (10 * spp) == 0 {
                let lam = (d / delta0).ln() / t;
                println!(
                    "t/T = {:6.2}  d/delta0 = {:9.4}  max_d/delta0 = {:9.4}  lambda = {:+.4e}",
                    t / period, d / delta0, max_d / delta0, lam
                );
            }
        }
    }
    let _ = Complex64::new(0.0, 0.0);
}
