// Hilbert-norm growth diagnostic: Benettin on the gauge-projected pair
// difference, rescaled every sample, tracking Σ ln(η_i/η_ref) directly.
use num_complex::Complex64;
use qlyap::displace;
use qlyap::grid::{build_grid, gaussian_packet, potential_minima, DuffingParams, SystemParams};
use qlyap::noise::NoiseStream;
use qlyap::propagator::{PropagatorConfig, Stepper};

fn gauge_diff(fid: &[Complex64], pert: &[Complex64], dx: f64) -> (Vec<Complex64>, f64) {
    let mut delta: Vec<Complex64> = fid.iter().zip(pert).map(|(f, p)| p - f).collect();
    let overlap: Complex64 =
        fid.iter().zip(&delta).map(|(f, d)| f.conj() * d).sum::<Complex64>() * dx;
    for (d, f) in delta.iter_mut().zip(fid) {
        *d -= overlap * f;
    }
    let eta = (delta.iter().map(|d| d.norm_sqr()).sum::<f64>() * dx).sqrt();
    (delta, eta)
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let hbar: f64 = args[1].parse().unwrap();
    let k: f64 = args[2].parse().unwrap();
    let periods: f64 = args[3].parse().unwrap();
    let spp: u64 = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(2000);

    let params = DuffingParams::standard(hbar);
    let system = SystemParams::from(&params);
    let grid = build_grid(-20.0, 20.0, 1024, hbar).unwrap();
    let (_, xm) = potential_minima(&params).unwrap();
    let omega0 = (4.0 * params.a / params.mass).sqrt();
    let sigma = (hbar / (2.0 * params.mass * omega0)).sqrt();
    let psi = gaussian_packet(&grid, xm, 0.0, sigma).unwrap();
    let period = params.period();
    let dt = period / spp as f64;
    let pcfg = PropagatorConfig::new(dt);
    let mut stepper = Stepper::new(&grid, &system, &pcfg).unwrap();
    let mut noise = NoiseStream::new(777, 0, dt);

    // warmup 20T
    let mut fid = psi.clone();
    for n in 0..20 * spp {
        let dw = if k > 0.0 { noise.wiener_increment() } else { 0.0 };
        stepper.step(&mut fid.amplitudes, n, k, dw);
    }
    let mut pert = displace(&fid, 1e-6, 0.0).unwrap();
    let (_, eta_ref) = gauge_diff(&fid.amplitudes, &pert.amplitudes, grid.dx);

    let sample_every = spp / 4;
    let n_steps = (periods * spp as f64).round() as u64;
    let mut acc = 0.0;
    for i in 0..n_steps {
        let n = 20 * spp + i;
        let dw = if k > 0.0 { noise.wiener_increment() } else { 0.0 };
        stepper.step(&mut fid.amplitudes, n, k, dw);
        stepper.step(&mut pert.amplitudes, n, k, dw);
        if (i + 1) % sample_every == 0 {
            let (delta_perp, eta) = gauge_diff(&fid.amplitudes, &pert.amplitudes, grid.dx);
            acc += (eta / eta_ref).ln();
            // rescale difference back to eta_ref, direction preserved
            let s = eta_ref / eta;
            for ((p, f), d) in pert
                .amplitudes
                .iter_mut()
                .zip(&fid.amplitudes)
                .zip(&delta_perp)
            {
                *p = f + s * d;
            }
            let norm = pert.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>() * grid.dx;
            let sc = 1.0 / norm.sqrt();
            for a in pert.amplitudes.iter_mut() {
                *a *= sc;
            }
            let t = (i + 1) as f64 * dt;
            if (i + 1) % (50 * spp) == 0 {
                println!(
                    "  t/T = {:6.1}  lambda_H = {:+.4}  acc_eta = {:+.3}",
                    t / period,
                    acc / t,
                    acc
                );
            }
        }
    }
}
