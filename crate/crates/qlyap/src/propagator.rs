//! Time stepping for the norm-preserving stochastic Schrödinger equation of a
//! continuously position-measured particle.
//!
//! One step is a Strang split: half kinetic step in momentum space, full
//! potential phase (drive evaluated at the midpoint) together with the
//! stochastic measurement update in position space, half kinetic step. The
//! deterministic part is second order in `dt`.
//!
//! The measurement update multiplies the amplitudes pointwise by
//!
//! ```text
//! exp[ -2k (x - <x>)² dt + √(2k) (x - <x>) dW ]
//! ```
//!
//! and renormalizes. This is the exponential solution of the linear record
//! equation (up to scalars, `exp[-2k x² dt + 4k x dy]`); its Itô expansion is
//! the norm-preserving stochastic Schrödinger equation
//! `dψ = [-k(x-<x>)² dt + √(2k)(x-<x>) dW] ψ`, so trajectory averages
//! reproduce the master-equation backaction term `-k[x,[x,ρ]]dt` as `dt → 0`.
//! Note the `2k` in the exponent: exponentiating the Itô drift coefficient
//! directly would drop the `½(√(2k)(x-<x>))²dt` Itô correction and bias the
//! ensemble at O(1).
//!
//! The record increment is `dy = <x> dt + dW/√(8k)` with `<x>` taken before
//! the step (Itô convention); replay must use the same convention.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{Expectations, GridSpec, SystemParams, Wavefunction, BOUNDARY_RUNTIME_LIMIT};
use crate::noise::NoiseStream;
use crate::spectral::Spectral;

/// Substep ordering of the split scheme. The measurement update rides inside
/// the kinetic half steps alongside the potential phase so the deterministic
/// part stays Strang-symmetric.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum SubstepOrder {
    #[default]
    KineticMeasureKinetic,
}

/// Time-step configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagatorConfig {
    pub dt: f64,
    pub substep_order: SubstepOrder,
    /// Evaluate the drive at `t + dt/2` (default) instead of `t`.
    pub midpoint_drive: bool,
}

impl PropagatorConfig {
    pub fn new(dt: f64) -> Self {
        PropagatorConfig {
            dt,
            substep_order: SubstepOrder::KineticMeasureKinetic,
            midpoint_drive: true,
        }
    }

    /// `dt > 0`, and `dt <= T/100` when the potential is driven.
    pub fn validate(&self, system: &SystemParams) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::config("dt", format!("must be > 0, got {}", self.dt)));
        }
        if let crate::grid::Potential::Duffing { omega, .. } = system.potential {
            let period = 2.0 * std::f64::consts::PI / omega;
            if self.dt > period / 100.0 {
                return Err(Error::config(
                    "dt",
                    format!(
                        "must be <= T/100 = {:.6} for the driven system, got {}",
                        period / 100.0,
                        self.dt
                    ),
                ));
            }
        }
        Ok(())
    }
}

/// Measurement strength `k >= 0` (`k = 0` switches the measurement off).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementConfig {
    pub k: f64,
}

impl MeasurementConfig {
    pub fn new(k: f64) -> Result<Self> {
        if k < 0.0 || !k.is_finite() {
            return Err(Error::NegativeMeasurementStrength(k));
        }
        Ok(MeasurementConfig { k })
    }

    pub fn off() -> Self {
        MeasurementConfig { k: 0.0 }
    }
}

/// Outcome of one composite step.
#[derive(Debug, Clone, Copy)]
pub struct StepOutput {
    /// `<x>` of the state the step started from.
    pub mean_x_pre: f64,
    /// Record increment; `None` when `k = 0`.
    pub dy: Option<f64>,
}

/// Reusable stepping engine: planned FFTs and cached phase tables for one
/// `(grid, system, dt)` triple. Long loops should hold one of these rather
/// than calling the free functions, which plan on every call.
pub struct Stepper {
    grid: GridSpec,
    system: SystemParams,
    dt: f64,
    midpoint_drive: bool,
    positions: Vec<f64>,
    v_static: Vec<f64>,
    /// exp(-i p² dt / (4 m ħ)), with the inverse-FFT 1/N folded in.
    kinetic_half: Vec<Complex64>,
    spectral: Spectral,
    moment_scratch: Vec<Complex64>,
}

impl Stepper {
    pub fn new(grid: &GridSpec, system: &SystemParams, cfg: &PropagatorConfig) -> Result<Self> {
        cfg.validate(system)?;
        if system.hbar != grid.hbar {
            return Err(Error::config(
                "hbar",
                format!(
                    "system hbar {} does not match grid hbar {}",
                    system.hbar, grid.hbar
                ),
            ));
        }
        let n = grid.n_points;
        let positions: Vec<f64> = (0..n).map(|j| grid.position(j)).collect();
        let v_static: Vec<f64> = positions.iter().map(|&x| system.potential_static(x)).collect();
        let inv_n = 1.0 / n as f64;
        let kinetic_half: Vec<Complex64> = (0..n)
            .map(|m| {
                let p = grid.momentum(m);
                let phase = if system.mass.is_finite() {
                    -p * p * cfg.dt / (4.0 * system.mass * grid.hbar)
                } else {
                    0.0
                };
                Complex64::from_polar(inv_n, phase)
            })
            .collect();
        Ok(Stepper {
            grid: *grid,
            system: *system,
            dt: cfg.dt,
            midpoint_drive: cfg.midpoint_drive,
            positions,
            v_static,
            kinetic_half,
            spectral: Spectral::new(n),
            moment_scratch: Vec::with_capacity(n),
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn system(&self) -> &SystemParams {
        &self.system
    }

    /// `<x>` of raw amplitudes (normalization-independent).
    pub fn mean_x(&self, amps: &[Complex64]) -> f64 {
        let mut w_sum = 0.0;
        let mut x_sum = 0.0;
        for (a, &x) in amps.iter().zip(&self.positions) {
            let w = a.norm_sqr();
            w_sum += w;
            x_sum += w * x;
        }
        x_sum / w_sum
    }

    /// `(<x>, <p>)` of raw amplitudes; costs one transform into scratch.
    pub fn phase_space_mean(&mut self, amps: &[Complex64]) -> (f64, f64) {
        let mean_x = self.mean_x(amps);
        self.moment_scratch.clear();
        self.moment_scratch.extend_from_slice(amps);
        self.spectral.to_momentum(&mut self.moment_scratch);
        let (mean_p, _) = crate::spectral::momentum_moments(&self.grid, &self.moment_scratch);
        (mean_x, mean_p)
    }

    fn kinetic_half_step(&mut self, amps: &mut [Complex64]) {
        self.spectral.to_momentum(amps);
        for (a, k) in amps.iter_mut().zip(&self.kinetic_half) {
            *a *= k;
        }
        self.spectral.to_position_unscaled(amps);
    }

    fn potential_phase(&mut self, amps: &mut [Complex64], drive_coeff: f64) {
        let scale = -self.dt / self.grid.hbar;
        for ((a, &v), &x) in amps.iter_mut().zip(&self.v_static).zip(&self.positions) {
            let theta = (v + drive_coeff * x) * scale;
            *a *= Complex64::from_polar(1.0, theta);
        }
    }

    fn measurement_update(&mut self, amps: &mut [Complex64], k: f64, dw: f64) {
        let mean = self.mean_x(amps);
        let drift = -2.0 * k * self.dt;
        let kick = (2.0 * k).sqrt() * dw;
        for (a, &x) in amps.iter_mut().zip(&self.positions) {
            let dev = x - mean;
            *a *= (drift * dev * dev + kick * dev).exp();
        }
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>() * self.grid.dx;
        let scale = 1.0 / norm.sqrt();
        for a in amps.iter_mut() {
            *a *= scale;
        }
    }

    /// One composite step. `step_index` is the global index on the `dt`
    /// lattice (drive phases are computed from it so that split runs compose
    /// bit-exactly); `dw` is ignored when `k = 0`.
    pub fn step(&mut self, amps: &mut [Complex64], step_index: u64, k: f64, dw: f64) -> StepOutput {
        let mean_x_pre = self.mean_x(amps);
        let dy = if k > 0.0 {
            Some(mean_x_pre * self.dt + dw / (8.0 * k).sqrt())
        } else {
            None
        };

        let t_drive = if self.midpoint_drive {
            (step_index as f64 + 0.5) * self.dt
        } else {
            step_index as f64 * self.dt
        };
        let drive_coeff = self.system.drive_coefficient(t_drive);

        self.kinetic_half_step(amps);
        self.potential_phase(amps, drive_coeff);
        if k > 0.0 {
            self.measurement_update(amps, k, dw);
        }
        self.kinetic_half_step(amps);

        StepOutput { mean_x_pre, dy }
    }

    /// Probability mass in the outermost cells.
    pub fn edge_mass(&self, amps: &[Complex64]) -> f64 {
        (amps[0].norm_sqr() + amps[amps.len() - 1].norm_sqr()) * self.grid.dx
    }
}

/// One Strang-split unitary step under `H(t)`; norm is preserved to
/// round-off.
pub fn unitary_step(
    psi: &Wavefunction,
    system: &SystemParams,
    cfg: &PropagatorConfig,
    t: f64,
) -> Result<Wavefunction> {
    let (out, _) = sse_step(psi, system, &MeasurementConfig::off(), cfg, t, 0.0)?;
    Ok(out)
}

/// Stochastic measurement update alone: pointwise multiplication by the
/// measurement exponential, then renormalization. `k = 0` returns the input
/// unchanged.
pub fn measurement_substep(psi: &Wavefunction, k: f64, dt: f64, dw: f64) -> Result<Wavefunction> {
    if k < 0.0 || !k.is_finite() {
        return Err(Error::NegativeMeasurementStrength(k));
    }
    let mut out = psi.clone();
    if k == 0.0 {
        return Ok(out);
    }
    let mean = out.mean_x();
    let drift = -2.0 * k * dt;
    let kick = (2.0 * k).sqrt() * dw;
    for (j, a) in out.amplitudes.iter_mut().enumerate() {
        let dev = out.grid.position(j) - mean;
        *a *= (drift * dev * dev + kick * dev).exp();
    }
    out.normalize();
    Ok(out)
}

/// One full step of the stochastic Schrödinger equation.
///
/// Returns the new state and the record increment `dy = <x> dt + dW/√(8k)`
/// with `<x>` evaluated before the step; `dy` is `None` when `k = 0`, in
/// which case the result is bit-identical to [`unitary_step`].
pub fn sse_step(
    psi: &Wavefunction,
    system: &SystemParams,
    meas: &MeasurementConfig,
    cfg: &PropagatorConfig,
    t: f64,
    dw: f64,
) -> Result<(Wavefunction, Option<f64>)> {
    if meas.k < 0.0 {
        return Err(Error::NegativeMeasurementStrength(meas.k));
    }
    let mut stepper = Stepper::new(&psi.grid, system, cfg)?;
    let n0 = step_index_for(t, cfg.dt)?;
    let mut out = psi.clone();
    let result = stepper.step(&mut out.amplitudes, n0, meas.k, dw);
    out.time = (n0 + 1) as f64 * cfg.dt;
    Ok((out, result.dy))
}

/// Maps a time onto the global step lattice `t = n·dt`.
pub(crate) fn step_index_for(t: f64, dt: f64) -> Result<u64> {
    let n = (t / dt).round();
    if n < 0.0 || (t - n * dt).abs() > 1e-9 * dt.max(1e-300) {
        return Err(Error::config(
            "t",
            format!("time {t} does not lie on the dt = {dt} step lattice"),
        ));
    }
    Ok(n as u64)
}

/// Per-step observation handed to the `evolve` callback.
#[derive(Debug, Clone, Copy)]
pub struct StepObservation {
    pub expectations: Expectations,
    pub dy: Option<f64>,
    pub step_index: u64,
}

/// Integrates from `t0` to `t1`, invoking `observer` after every step with
/// the fresh expectation values and the record increment. Aborts with a
/// diagnostic if probability mass reaches the grid edge.
pub fn evolve(
    psi: &Wavefunction,
    system: &SystemParams,
    meas: &MeasurementConfig,
    cfg: &PropagatorConfig,
    t0: f64,
    t1: f64,
    noise: &mut NoiseStream,
    mut observer: impl FnMut(&StepObservation),
) -> Result<Wavefunction> {
    if t1 < t0 {
        return Err(Error::config("t1", format!("t1 = {t1} < t0 = {t0}")));
    }
    let n0 = step_index_for(t0, cfg.dt)?;
    let n_steps = ((t1 - t0) / cfg.dt).round() as u64;
    let mut stepper = Stepper::new(&psi.grid, system, cfg)?;
    let mut out = psi.clone();
    for i in 0..n_steps {
        let n = n0 + i;
        let dw = if meas.k > 0.0 {
            noise.wiener_increment()
        } else {
            0.0
        };
        let result = stepper.step(&mut out.amplitudes, n, meas.k, dw);
        out.time = (n + 1) as f64 * cfg.dt;

        let edge = stepper.edge_mass(&out.amplitudes);
        if edge > BOUNDARY_RUNTIME_LIMIT {
            return Err(Error::BoundaryViolation {
                t: out.time,
                density: edge,
                limit: BOUNDARY_RUNTIME_LIMIT,
            });
        }
        let expectations = Expectations::compute(&out, system, out.time);
        observer(&StepObservation {
            expectations,
            dy: result.dy,
            step_index: n + 1,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, gaussian_packet, DuffingParams, SystemParams};
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn harmonic_setup(hbar: f64, omega0: f64) -> (Wavefunction, SystemParams) {
        let grid = build_grid(-12.0, 12.0, 256, hbar).unwrap();
        let sigma = (hbar / (2.0 * omega0)).sqrt();
        let psi = gaussian_packet(&grid, 1.0, 0.5, sigma).unwrap();
        (psi, SystemParams::harmonic(1.0, hbar, omega0))
    }

    #[test]
    fn undriven_energy_is_conserved() {
        let params = DuffingParams {
            drive_amp: 0.0,
            ..DuffingParams::standard(1.0)
        };
        let system = SystemParams::from(&params);
        let grid = build_grid(-15.0, 15.0, 512, 1.0).unwrap();
        let x0 = (params.a / (2.0 * params.b)).sqrt();
        let psi0 = gaussian_packet(&grid, x0, 0.0, 0.35).unwrap();
        let cfg = PropagatorConfig::new(params.period() / 2000.0);

        let e0 = Expectations::compute(&psi0, &system, 0.0).energy;
        let mut stepper = Stepper::new(&grid, &system, &cfg).unwrap();
        let mut psi = psi0.clone();
        for n in 0..1000u64 {
            stepper.step(&mut psi.amplitudes, n, 0.0, 0.0);
        }
        let e1 = Expectations::compute(&psi, &system, 1000.0 * cfg.dt).energy;
        assert!(
            ((e1 - e0) / e0).abs() < 1e-6,
            "relative energy drift {:.3e}",
            ((e1 - e0) / e0).abs()
        );
    }

    #[test]
    fn harmonic_ehrenfest_over_one_period() {
        let hbar = 1.0;
        let omega0 = 2.0;
        let (psi0, system) = harmonic_setup(hbar, omega0);
        let period = 2.0 * std::f64::consts::PI / omega0;
        let n_steps = 8000u64;
        let cfg = PropagatorConfig::new(period / n_steps as f64);
        let mut stepper = Stepper::new(&psi0.grid, &system, &cfg).unwrap();
        let mut psi = psi0.clone();
        for n in 0..n_steps {
            stepper.step(&mut psi.amplitudes, n, 0.0, 0.0);
        }
        let e = Expectations::compute(&psi, &system, period);
        // closed-form Ehrenfest solution for the quadratic Hamiltonian
        let x_expect = 1.0 * (omega0 * period).cos() + 0.5 / omega0 * (omega0 * period).sin();
        let p_expect = -1.0 * omega0 * (omega0 * period).sin() + 0.5 * (omega0 * period).cos();
        assert_abs_diff_eq!(e.mean_x, x_expect, epsilon = 1e-6);
        assert_abs_diff_eq!(e.mean_p, p_expect, epsilon = 1e-6);
    }

    #[test]
    fn deterministic_part_is_second_order() {
        let params = DuffingParams::standard(16.0);
        let system = SystemParams::from(&params);
        let grid = build_grid(-15.0, 15.0, 512, 16.0).unwrap();
        let x0 = (params.a / (2.0 * params.b)).sqrt();
        let psi0 = gaussian_packet(&grid, x0, 0.0, (16.0 / (2.0 * (4.0 * params.a).sqrt())).sqrt())
            .unwrap();
        let horizon = params.period();

        let run = |steps: u64| {
            let cfg = PropagatorConfig::new(horizon / steps as f64);
            let mut stepper = Stepper::new(&grid, &system, &cfg).unwrap();
            let mut psi = psi0.clone();
            for n in 0..steps {
                stepper.step(&mut psi.amplitudes, n, 0.0, 0.0);
            }
            Expectations::compute(&psi, &system, horizon).mean_x
        };
        let x1 = run(400);
        let x2 = run(800);
        let x3 = run(1600);
        let ratio = (x1 - x2).abs() / (x2 - x3).abs();
        assert!(
            (3.0..5.0).contains(&ratio),
            "Richardson ratio {ratio:.2}, expected ~4"
        );
    }

    #[test]
    fn measurement_substep_identity_at_k_zero() {
        let grid = build_grid(-10.0, 10.0, 128, 1.0).unwrap();
        let psi = gaussian_packet(&grid, 0.3, -0.2, 0.9).unwrap();
        let out = measurement_substep(&psi, 0.0, 1e-3, 0.42).unwrap();
        assert_eq!(psi.amplitudes, out.amplitudes);
        assert!(measurement_substep(&psi, -1.0, 1e-3, 0.0).is_err());
    }

    #[test]
    fn measurement_substep_pulls_mean_along_innovation() {
        let hbar = 1.0;
        let grid = build_grid(-10.0, 10.0, 256, hbar).unwrap();
        let sigma = 0.8;
        let psi = gaussian_packet(&grid, 0.0, 0.0, sigma).unwrap();
        let k = 2.0;
        let dt = 1e-3;
        let dw = 0.05;
        let out = measurement_substep(&psi, k, dt, dw).unwrap();
        let sys = SystemParams::free(1.0, hbar);
        let e = Expectations::compute(&out, &sys, 0.0);
        // exact Gaussian update: Δμ = √(2k) Vx dW / (2(1/(4Vx) + 2k dt) Vx)
        let vx = sigma * sigma;
        let a_new = 1.0 / (4.0 * vx) + 2.0 * k * dt;
        let expected = (2.0 * k).sqrt() * dw / (2.0 * a_new);
        assert!(e.mean_x > 0.0);
        assert_relative_eq!(e.mean_x, expected, max_relative = 1e-5);
        assert_abs_diff_eq!(e.norm, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn sse_step_reduces_to_unitary_at_k_zero() {
        let params = DuffingParams::standard(16.0);
        let system = SystemParams::from(&params);
        let grid = build_grid(-15.0, 15.0, 256, 16.0).unwrap();
        let psi = gaussian_packet(&grid, 3.0, 0.0, 1.1).unwrap();
        let cfg = PropagatorConfig::new(params.period() / 2000.0);

        let (a, dy) = sse_step(&psi, &system, &MeasurementConfig::off(), &cfg, 0.0, 0.123).unwrap();
        let b = unitary_step(&psi, &system, &cfg, 0.0).unwrap();
        assert!(dy.is_none());
        assert_eq!(a.amplitudes, b.amplitudes);
    }

    #[test]
    fn sse_step_is_deterministic_and_norm_preserving() {
        let params = DuffingParams::standard(16.0);
        let system = SystemParams::from(&params);
        let grid = build_grid(-15.0, 15.0, 256, 16.0).unwrap();
        let psi = gaussian_packet(&grid, 3.0, 0.0, 1.1).unwrap();
        let cfg = PropagatorConfig::new(params.period() / 2000.0);
        let meas = MeasurementConfig::new(0.5).unwrap();

        let run = || {
            let mut noise = NoiseStream::new(11, 0, cfg.dt);
            let mut out = psi.clone();
            let mut dys = Vec::new();
            for n in 0..200u64 {
                let dw = noise.wiener_increment();
                let (next, dy) =
                    sse_step(&out, &system, &meas, &cfg, n as f64 * cfg.dt, dw).unwrap();
                out = next;
                dys.push(dy.unwrap());
            }
            (out, dys)
        };
        let (a, dys_a) = run();
        let (b, dys_b) = run();
        assert_eq!(a.amplitudes, b.amplitudes);
        assert_eq!(dys_a, dys_b);
        assert_abs_diff_eq!(a.norm_sqr(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn evolve_composes_exactly() {
        let params = DuffingParams::standard(16.0);
        let system = SystemParams::from(&params);
        let grid = build_grid(-15.0, 15.0, 256, 16.0).unwrap();
        let psi = gaussian_packet(&grid, 3.0, 0.0, 1.1).unwrap();
        let cfg = PropagatorConfig::new(params.period() / 200.0);
        let meas = MeasurementConfig::new(1.0).unwrap();
        let t_half = 100.0 * cfg.dt;
        let t_end = 200.0 * cfg.dt;

        let mut noise1 = NoiseStream::new(3, 0, cfg.dt);
        let single = evolve(&psi, &system, &meas, &cfg, 0.0, t_end, &mut noise1, |_| {}).unwrap();

        let mut noise2 = NoiseStream::new(3, 0, cfg.dt);
        let mid = evolve(&psi, &system, &meas, &cfg, 0.0, t_half, &mut noise2, |_| {}).unwrap();
        let split = evolve(&mid, &system, &meas, &cfg, t_half, t_end, &mut noise2, |_| {}).unwrap();

        assert_eq!(single.amplitudes, split.amplitudes);
        assert_eq!(single.time.to_bits(), split.time.to_bits());

        // zero steps returns the input
        let mut noise3 = NoiseStream::new(3, 0, cfg.dt);
        let same = evolve(&psi, &system, &meas, &cfg, 0.0, 0.0, &mut noise3, |_| {}).unwrap();
        assert_eq!(same.amplitudes, psi.amplitudes);
    }

    #[test]
    fn strong_measurement_localizes() {
        // time-averaged Var(x) at k=10 must sit below the k=0.01 run; the
        // wide grid absorbs the k=10 backaction heating (D_p = ħ²k = 2560)
        let params = DuffingParams::standard(16.0);
        let system = SystemParams::from(&params);
        let grid = build_grid(-30.0, 30.0, 2048, 16.0).unwrap();
        let x0 = (params.a / (2.0 * params.b)).sqrt();
        let sigma = (16.0 / (2.0 * (4.0 * params.a / 1.0).sqrt())).sqrt();
        let psi = gaussian_packet(&grid, x0, 0.0, sigma).unwrap();
        let cfg = PropagatorConfig::new(params.period() / 1000.0);

        let mean_var = |k: f64| {
            let meas = MeasurementConfig::new(k).unwrap();
            let mut noise = NoiseStream::new(21, 0, cfg.dt);
            let mut sum = 0.0;
            let mut count = 0u64;
            evolve(
                &psi,
                &system,
                &meas,
                &cfg,
                0.0,
                10.0 * params.period(),
                &mut noise,
                |obs| {
                    sum += obs.expectations.var_x;
                    count += 1;
                },
            )
            .unwrap();
            sum / count as f64
        };
        let weak = mean_var(0.01);
        let strong = mean_var(10.0);
        assert!(
            strong < weak,
            "expected localization: var_x(k=10) = {strong:.3} !< var_x(k=0.01) = {weak:.3}"
        );
    }
}
