//! Observation-conditioned Lyapunov exponents.
//!
//! The estimator follows the classical two-trajectory scheme generalized to
//! quantum trajectories: a fiducial state and a perturbed copy displaced by an
//! infinitesimal phase-space offset `delta0` evolve under the *identical*
//! Wiener increment sequence (sensitivity to the initial condition, not to the
//! noise). Every `renorm_interval` the separation
//! `d = hypot(Δ<x>, Δ<p>/p_scale)` is sampled and the finite-time exponent
//! `λ(t) = [Σ ln(d_i/delta0) + ln(d/delta0)] / t` is recorded, with `t`
//! counted from the end of the warmup window; the pure-x divergence `|Δ<x>|`
//! is recorded alongside so the position-only projection stays inspectable.
//!
//! Renormalization must not change the *direction* of the separation, only
//! its size: the perturbed state is reset to
//! `normalize(ψ_fid + s·δψ_⊥)`, where `δψ_⊥` is the pair difference with its
//! norm/phase gauge component projected out and `s` rescales its Hilbert norm
//! back to the size the initial `delta0` displacement had. This is
//! finite-difference Benettin bookkeeping in Hilbert space: the banked logs
//! telescope because the grown direction — which in the deep quantum regime
//! lives mostly in wavefunction-shape deformations, not in the displacement
//! mode — is carried across resets. Resetting to a *displaced copy* of the
//! fiducial instead (re-projecting onto the displacement mode) measurably
//! destroys the growing direction: conditioned trajectories synchronize and
//! the estimator reports a spurious negative exponent. Rescaling is
//! growth-gated (`renorm_threshold`), so it stays rare and the pair stays
//! deep in the tangent regime; for `k = 0` the difference norm is invariant
//! under the unitary flow and no reset ever fires, which reproduces the
//! bounded divergence unitarity dictates.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{displace, SystemParams, Wavefunction, BOUNDARY_RUNTIME_LIMIT};
use crate::noise::NoiseStream;
use crate::propagator::{step_index_for, MeasurementConfig, PropagatorConfig, Stepper};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Threshold below which the separation direction is considered lost.
pub const SEPARATION_UNDERFLOW: f64 = 1e-14;

/// Projection in which the divergence `d` is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DirectionPolicy {
    /// `d = |Δ<x>|` (the position-only projection; vanishes spuriously at
    /// x-crossings).
    XOnly,
    /// `d = hypot(Δ<x>, Δ<p>/p_scale)` (default).
    #[default]
    PhaseSpace,
}

/// Settings of the two-trajectory estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovConfig {
    /// Initial and renormalized phase-space separation (position units).
    pub delta0: f64,
    /// Time between separation samples (and renormalization checks).
    pub renorm_interval: f64,
    /// Accumulation horizon, counted after the warmup.
    pub t_max: f64,
    /// Transient excluded before the perturbed trajectory is created.
    pub warmup: f64,
    pub direction_policy: DirectionPolicy,
    /// Momentum weight: `Δ<p>/p_scale` enters the norm in position units.
    pub p_scale: f64,
    /// Rescale the pair difference once its Hilbert norm has grown or shrunk
    /// by this factor relative to the initial displacement.
    pub renorm_threshold: f64,
}

impl LyapunovConfig {
    /// Defaults for the driven double well: `delta0 = 1e-6`, `τ = T/4`,
    /// `warmup = 20 T`, momentum scaled by `m ω`.
    pub fn standard(params: &crate::grid::DuffingParams, t_max: f64) -> Self {
        let period = params.period();
        LyapunovConfig {
            delta0: 1e-6,
            renorm_interval: period / 4.0,
            t_max,
            warmup: 20.0 * period,
            direction_policy: DirectionPolicy::PhaseSpace,
            p_scale: params.mass * params.omega,
            renorm_threshold: 10.0,
        }
    }

    pub fn validate(&self, dt: f64) -> Result<()> {
        if !(self.delta0 > 0.0 && self.delta0 < 0.1) {
            return Err(Error::config(
                "delta0",
                format!("must be in (0, 0.1), got {}", self.delta0),
            ));
        }
        if self.renorm_interval < dt {
            return Err(Error::config(
                "renorm_interval",
                format!("must be >= dt = {dt}, got {}", self.renorm_interval),
            ));
        }
        if !(self.t_max > self.renorm_interval) {
            return Err(Error::config(
                "t_max",
                format!(
                    "must exceed renorm_interval = {}, got {}",
                    self.renorm_interval, self.t_max
                ),
            ));
        }
        if self.warmup < 0.0 {
            return Err(Error::config("warmup", "must be >= 0".to_string()));
        }
        if !(self.p_scale > 0.0) {
            return Err(Error::config("p_scale", "must be > 0".to_string()));
        }
        if !(self.renorm_threshold > 1.0) {
            return Err(Error::config(
                "renorm_threshold",
                format!("must be > 1, got {}", self.renorm_threshold),
            ));
        }
        Ok(())
    }
}

/// Separation history of one trajectory pair: the pure-x divergence
/// `|Δ<x>|(t)` at the renormalization times plus the accumulated log of the
/// projected separation.
#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceSeries {
    pub times: Vec<f64>,
    pub delta_values: Vec<f64>,
    pub accumulated_log: f64,
    /// Renormalizations where the direction underflowed and was re-seeded
    /// along +x.
    pub underflow_reseeds: u32,
}

/// Finite-time exponent series `λ(t)` for one noise realization. Times are
/// counted from the end of the warmup window.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteTimeExponent {
    pub times: Vec<f64>,
    pub lambda_t: Vec<f64>,
    pub trajectory_id: u64,
}

impl FiniteTimeExponent {
    pub fn final_lambda(&self) -> Option<f64> {
        self.lambda_t.last().copied()
    }
}

/// Time-resolved ensemble mean and standard deviation of `λ(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleEstimate {
    pub times: Vec<f64>,
    pub mean_lambda: Vec<f64>,
    pub std_lambda: Vec<f64>,
    pub n_trajectories: usize,
}

impl EnsembleEstimate {
    pub fn final_mean(&self) -> Option<f64> {
        self.mean_lambda.last().copied()
    }

    pub fn final_std(&self) -> Option<f64> {
        self.std_lambda.last().copied()
    }
}

/// One pair run: the exponent series and the divergence record.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRun {
    pub exponent: FiniteTimeExponent,
    pub divergence: DivergenceSeries,
}

/// Resumable state of a fiducial/perturbed pair mid-run.
#[derive(Debug, Clone)]
pub(crate) struct PairState {
    pub fid: Wavefunction,
    pub pert: Option<Wavefunction>,
    /// Global step index on the dt lattice (includes warmup steps).
    pub step: u64,
    pub acc_log: f64,
    /// Hilbert norm of the gauge-projected difference right after the initial
    /// displacement; rescaling targets this size.
    pub eta_ref: f64,
    pub underflow_reseeds: u32,
    pub samples: Vec<Sample>,
    pub noise: NoiseStream,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Sample {
    pub t: f64,
    pub lambda: f64,
    pub delta_x: f64,
}

/// Step counts and cached stepping machinery for a pair run.
pub(crate) struct PairRunner {
    stepper: Stepper,
    k: f64,
    cfg: LyapunovConfig,
    pub start_step: u64,
    pub warmup_steps: u64,
    pub total_steps: u64,
    pub renorm_every: u64,
    separation_margin: f64,
}

impl PairRunner {
    pub fn new(
        psi0: &Wavefunction,
        system: &SystemParams,
        meas: &MeasurementConfig,
        pcfg: &PropagatorConfig,
        lcfg: &LyapunovConfig,
    ) -> Result<Self> {
        lcfg.validate(pcfg.dt)?;
        if meas.k < 0.0 {
            return Err(Error::NegativeMeasurementStrength(meas.k));
        }
        let stepper = Stepper::new(&psi0.grid, system, pcfg)?;
        let start_step = step_index_for(psi0.time, pcfg.dt)?;
        let warmup_steps = (lcfg.warmup / pcfg.dt).round() as u64;
        let accum_steps = (lcfg.t_max / pcfg.dt).round() as u64;
        let renorm_every = (lcfg.renorm_interval / pcfg.dt).round().max(1.0) as u64;
        let separation_margin = (psi0.grid.x_max - psi0.grid.x_min) / 20.0;
        Ok(PairRunner {
            stepper,
            k: meas.k,
            cfg: *lcfg,
            start_step,
            warmup_steps,
            total_steps: warmup_steps + accum_steps,
            renorm_every,
            separation_margin,
        })
    }

    pub fn initial_state(&self, psi0: &Wavefunction, noise: NoiseStream) -> PairState {
        PairState {
            fid: psi0.clone(),
            pert: None,
            step: self.start_step,
            acc_log: 0.0,
            eta_ref: 0.0,
            underflow_reseeds: 0,
            samples: Vec::new(),
            noise,
        }
    }

    pub fn end_step(&self) -> u64 {
        self.start_step + self.total_steps
    }

    fn separation(&self, dx: f64, dp: f64) -> f64 {
        match self.cfg.direction_policy {
            DirectionPolicy::XOnly => dx.abs(),
            DirectionPolicy::PhaseSpace => dx.hypot(dp / self.cfg.p_scale),
        }
    }

    /// Advances the pair up to `until_step` (global index), sampling at every
    /// renormalization boundary.
    pub fn run_until(&mut self, state: &mut PairState, until_step: u64) -> Result<()> {
        let dt = self.stepper.dt();
        let until = until_step.min(self.end_step());
        while state.step < until {
            if state.step == self.start_step + self.warmup_steps && state.pert.is_none() {
                let pert = displace(&state.fid, self.cfg.delta0, 0.0)?;
                let (_, eta) =
                    gauge_projected_difference(&state.fid.amplitudes, &pert.amplitudes, state.fid.grid.dx);
                state.eta_ref = eta;
                state.pert = Some(pert);
            }
            let dw = if self.k > 0.0 {
                state.noise.wiener_increment()
            } else {
                0.0
            };
            self.stepper.step(&mut state.fid.amplitudes, state.step, self.k, dw);
            if let Some(pert) = state.pert.as_mut() {
                self.stepper.step(&mut pert.amplitudes, state.step, self.k, dw);
            }
            state.step += 1;
            let t = state.step as f64 * dt;
            state.fid.time = t;
            if let Some(pert) = state.pert.as_mut() {
                pert.time = t;
            }

            let edge = self.stepper.edge_mass(&state.fid.amplitudes);
            if edge > BOUNDARY_RUNTIME_LIMIT {
                return Err(Error::BoundaryViolation {
                    t,
                    density: edge,
                    limit: BOUNDARY_RUNTIME_LIMIT,
                });
            }

            let accum_step = state.step - self.start_step;
            if accum_step > self.warmup_steps
                && (accum_step - self.warmup_steps) % self.renorm_every == 0
            {
                self.sample(state, accum_step)?;
            }
        }
        Ok(())
    }

    fn sample(&mut self, state: &mut PairState, accum_step: u64) -> Result<()> {
        let dt = self.stepper.dt();
        let pert = state.pert.as_ref().expect("perturbed state exists after warmup");
        let (fx, fp) = self.stepper.phase_space_mean(&state.fid.amplitudes);
        let (px, pp) = self.stepper.phase_space_mean(&pert.amplitudes);
        let dx = px - fx;
        let dp = pp - fp;
        let d = self.separation(dx, dp);
        let t_acc = (accum_step - self.warmup_steps) as f64 * dt;

        if d > self.separation_margin {
            return Err(Error::SeparationOverflow {
                d,
                margin: self.separation_margin,
                t: state.fid.time,
            });
        }
        let d_clamped = if d < SEPARATION_UNDERFLOW {
            // projection lost in round-off; clamp the log and flag it
            state.underflow_reseeds += 1;
            SEPARATION_UNDERFLOW
        } else {
            d
        };

        let partial = (d_clamped / self.cfg.delta0).ln();
        state.samples.push(Sample {
            t: t_acc,
            lambda: (state.acc_log + partial) / t_acc,
            delta_x: dx.abs(),
        });

        // growth-gated rescale of the pair difference, direction preserved
        let grid_dx = state.fid.grid.dx;
        let (mut delta_perp, eta) =
            gauge_projected_difference(&state.fid.amplitudes, &pert.amplitudes, grid_dx);
        let gate = self.cfg.renorm_threshold;
        if eta > 0.0 && (eta > gate * state.eta_ref || eta * gate < state.eta_ref) {
            let s = state.eta_ref / eta;
            let mut rescaled = state.fid.clone();
            for ((r, f), dlt) in rescaled
                .amplitudes
                .iter_mut()
                .zip(&state.fid.amplitudes)
                .zip(delta_perp.iter_mut())
            {
                *r = f + s * *dlt;
            }
            rescaled.normalize();
            let (rx, rp) = self.stepper.phase_space_mean(&rescaled.amplitudes);
            let d_after = self
                .separation(rx - fx, rp - fp)
                .max(SEPARATION_UNDERFLOW);
            // bank the log so the virtual (un-rescaled) divergence stays
            // continuous across the reset
            state.acc_log += (d_clamped / d_after).ln();
            state.pert = Some(rescaled);
        }
        Ok(())
    }

    pub fn finish(&self, state: &PairState, trajectory_id: u64) -> TrajectoryRun {
        let times: Vec<f64> = state.samples.iter().map(|s| s.t).collect();
        // effective accumulated log at the last sample (banked + open interval)
        let accumulated_log = state
            .samples
            .last()
            .map(|s| s.lambda * s.t)
            .unwrap_or(state.acc_log);
        TrajectoryRun {
            exponent: FiniteTimeExponent {
                times: times.clone(),
                lambda_t: state.samples.iter().map(|s| s.lambda).collect(),
                trajectory_id,
            },
            divergence: DivergenceSeries {
                times,
                delta_values: state.samples.iter().map(|s| s.delta_x).collect(),
                accumulated_log,
                underflow_reseeds: state.underflow_reseeds,
            },
        }
    }
}

/// `δψ = pert − fid` with its norm/phase gauge component along `fid`
/// projected out, plus its Hilbert norm.
pub(crate) fn gauge_projected_difference(
    fid: &[Complex64],
    pert: &[Complex64],
    dx: f64,
) -> (Vec<Complex64>, f64) {
    let mut delta: Vec<Complex64> = fid.iter().zip(pert).map(|(f, p)| p - f).collect();
    let overlap: Complex64 =
        fid.iter().zip(&delta).map(|(f, d)| f.conj() * d).sum::<Complex64>() * dx;
    for (d, f) in delta.iter_mut().zip(fid) {
        *d -= overlap * f;
    }
    let eta = (delta.iter().map(|d| d.norm_sqr()).sum::<f64>() * dx).sqrt();
    (delta, eta)
}

/// Runs one fiducial/perturbed pair under a fixed noise realization and
/// returns the finite-time exponent and divergence series.
pub fn quantum_lyapunov_trajectory(
    psi0: &Wavefunction,
    system: &SystemParams,
    meas: &MeasurementConfig,
    pcfg: &PropagatorConfig,
    lcfg: &LyapunovConfig,
    noise: &mut NoiseStream,
) -> Result<(FiniteTimeExponent, DivergenceSeries)> {
    let mut runner = PairRunner::new(psi0, system, meas, pcfg, lcfg)?;
    let mut state = runner.initial_state(psi0, noise.clone());
    runner.run_until(&mut state, runner.end_step())?;
    *noise = state.noise.clone();
    let run = runner.finish(&state, noise.trajectory_id());
    Ok((run.exponent, run.divergence))
}

/// Runs `n_traj` independent pairs (trajectory ids `0..n_traj`) and returns
/// `(id, result)` per pair, in id order regardless of scheduling.
pub fn run_trajectories(
    psi0: &Wavefunction,
    system: &SystemParams,
    meas: &MeasurementConfig,
    pcfg: &PropagatorConfig,
    lcfg: &LyapunovConfig,
    master_seed: u64,
    n_traj: u64,
) -> Vec<(u64, Result<TrajectoryRun>)> {
    let ids: Vec<u64> = (0..n_traj).collect();
    let run_one = |&id: &u64| -> (u64, Result<TrajectoryRun>) {
        let mut noise = NoiseStream::new(master_seed, id, pcfg.dt);
        let result = quantum_lyapunov_trajectory(psi0, system, meas, pcfg, lcfg, &mut noise)
            .map(|(exponent, divergence)| TrajectoryRun {
                exponent,
                divergence,
            })
            .map_err(|e| Error::Trajectory {
                id,
                source: Box::new(e),
            });
        (id, result)
    };
    #[cfg(feature = "parallel")]
    {
        ids.par_iter().map(run_one).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        ids.iter().map(run_one).collect()
    }
}

/// Sequential twin of [`run_trajectories`], kept callable when the `parallel`
/// feature is on so the two scheduling paths can be compared.
pub fn run_trajectories_sequential(
    psi0: &Wavefunction,
    system: &SystemParams,
    meas: &MeasurementConfig,
    pcfg: &PropagatorConfig,
    lcfg: &LyapunovConfig,
    master_seed: u64,
    n_traj: u64,
) -> Vec<(u64, Result<TrajectoryRun>)> {
    (0..n_traj)
        .map(|id| {
            let mut noise = NoiseStream::new(master_seed, id, pcfg.dt);
            let result = quantum_lyapunov_trajectory(psi0, system, meas, pcfg, lcfg, &mut noise)
                .map(|(exponent, divergence)| TrajectoryRun {
                    exponent,
                    divergence,
                })
                .map_err(|e| Error::Trajectory {
                    id,
                    source: Box::new(e),
                });
            (id, result)
        })
        .collect()
}

/// Time-resolved mean and (sample) standard deviation over trajectory runs.
pub fn aggregate(runs: &[&TrajectoryRun]) -> Result<EnsembleEstimate> {
    if runs.len() < 2 {
        return Err(Error::config(
            "n_trajectories",
            format!("ensemble needs >= 2 trajectories, got {}", runs.len()),
        ));
    }
    let times = runs[0].exponent.times.clone();
    for run in runs {
        if run.exponent.times != times {
            return Err(Error::config(
                "ensemble",
                "trajectories have mismatched sampling times".to_string(),
            ));
        }
    }
    let n = runs.len();
    let mut mean = vec![0.0; times.len()];
    let mut std = vec![0.0; times.len()];
    for (i, m) in mean.iter_mut().enumerate() {
        *m = runs.iter().map(|r| r.exponent.lambda_t[i]).sum::<f64>() / n as f64;
    }
    for (i, s) in std.iter_mut().enumerate() {
        let m = mean[i];
        let ss: f64 = runs
            .iter()
            .map(|r| {
                let d = r.exponent.lambda_t[i] - m;
                d * d
            })
            .sum();
        *s = (ss / (n - 1) as f64).sqrt();
    }
    Ok(EnsembleEstimate {
        times,
        mean_lambda: mean,
        std_lambda: std,
        n_trajectories: n,
    })
}

/// Runs an ensemble and aggregates it; any trajectory failure aborts with its
/// id attached.
pub fn ensemble_lyapunov(
    psi0: &Wavefunction,
    system: &SystemParams,
    meas: &MeasurementConfig,
    pcfg: &PropagatorConfig,
    lcfg: &LyapunovConfig,
    master_seed: u64,
    n_traj: u64,
) -> Result<EnsembleEstimate> {
    let results = run_trajectories(psi0, system, meas, pcfg, lcfg, master_seed, n_traj);
    let mut runs = Vec::with_capacity(results.len());
    for (_, r) in results {
        runs.push(r?);
    }
    aggregate(&runs.iter().collect::<Vec<_>>())
}
