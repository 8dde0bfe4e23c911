//! Classical Duffing baseline: deterministic and noise-kicked trajectories,
//! tangent-space linearization, Benettin Lyapunov exponents, and stroboscopic
//! maps.
//!
//! The deterministic part advances with classic RK4; the tangent vector is
//! advanced through the variational equations with the *same* stage values as
//! the base trajectory, so the linearization is exact for the integrator, not
//! just for the flow. Momentum noise (emulating measurement backaction with
//! diffusion coefficient `D_p`) is an additive Euler–Maruyama kick after the
//! deterministic substep; additive noise has zero tangent derivative, so the
//! tangent equations are untouched by it.

use crate::error::{Error, Result};
use crate::grid::DuffingParams;
use crate::lyapunov::FiniteTimeExponent;
use crate::noise::NoiseStream;

/// Classical phase-space point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassicalState {
    pub x: f64,
    pub p: f64,
    pub t: f64,
}

/// Infinitesimal phase-space displacement evolved by the linearized flow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TangentVector {
    pub dx: f64,
    pub dp: f64,
}

impl TangentVector {
    /// Norm with momentum weighted by `1/p_scale` so both components carry
    /// position units.
    pub fn scaled_norm(&self, p_scale: f64) -> f64 {
        (self.dx).hypot(self.dp / p_scale)
    }
}

/// External momentum diffusion injected into the classical system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassicalNoiseConfig {
    /// Momentum diffusion coefficient; `Var(p)` grows as `2 D_p t`.
    pub d_p: f64,
}

impl ClassicalNoiseConfig {
    pub fn new(d_p: f64) -> Result<Self> {
        if d_p < 0.0 {
            return Err(Error::config("d_p", format!("must be >= 0, got {d_p}")));
        }
        Ok(ClassicalNoiseConfig { d_p })
    }
}

#[inline]
fn deriv(params: &DuffingParams, x: f64, p: f64, dx: f64, dp: f64, t: f64) -> (f64, f64, f64, f64) {
    (
        p / params.mass,
        params.force(x, t),
        dp / params.mass,
        -params.curvature(x) * dx,
    )
}

/// One RK4 step of base + tangent with shared staging.
fn rk4_combined(
    params: &DuffingParams,
    x: f64,
    p: f64,
    dx: f64,
    dp: f64,
    t: f64,
    dt: f64,
) -> (f64, f64, f64, f64) {
    let (k1x, k1p, k1dx, k1dp) = deriv(params, x, p, dx, dp, t);
    let h = 0.5 * dt;
    let (k2x, k2p, k2dx, k2dp) = deriv(
        params,
        x + h * k1x,
        p + h * k1p,
        dx + h * k1dx,
        dp + h * k1dp,
        t + h,
    );
    let (k3x, k3p, k3dx, k3dp) = deriv(
        params,
        x + h * k2x,
        p + h * k2p,
        dx + h * k2dx,
        dp + h * k2dp,
        t + h,
    );
    let (k4x, k4p, k4dx, k4dp) = deriv(
        params,
        x + dt * k3x,
        p + dt * k3p,
        dx + dt * k3dx,
        dp + dt * k3dp,
        t + dt,
    );
    let w = dt / 6.0;
    (
        x + w * (k1x + 2.0 * k2x + 2.0 * k3x + k4x),
        p + w * (k1p + 2.0 * k2p + 2.0 * k3p + k4p),
        dx + w * (k1dx + 2.0 * k2dx + 2.0 * k3dx + k4dx),
        dp + w * (k1dp + 2.0 * k2dp + 2.0 * k3dp + k4dp),
    )
}

/// Advances the state by one step: RK4 for the deterministic part, then a
/// momentum kick `√(2 D_p)·dW` when noise is configured.
pub fn classical_step(
    state: &ClassicalState,
    params: &DuffingParams,
    dt: f64,
    noise: Option<(&ClassicalNoiseConfig, &mut NoiseStream)>,
) -> ClassicalState {
    let (x, p, _, _) = rk4_combined(params, state.x, state.p, 0.0, 0.0, state.t, dt);
    let mut p = p;
    if let Some((cfg, stream)) = noise {
        if cfg.d_p > 0.0 {
            p += (2.0 * cfg.d_p).sqrt() * stream.wiener_increment();
        }
    }
    ClassicalState {
        x,
        p,
        t: state.t + dt,
    }
}

/// Advances a tangent vector along the base trajectory with matched RK4
/// staging (`δẋ = δp/m`, `δṗ = −V''(x)·δx`). Exactly linear in `(dx, dp)`.
pub fn tangent_step(
    state: &ClassicalState,
    tangent: &TangentVector,
    params: &DuffingParams,
    dt: f64,
) -> TangentVector {
    let (_, _, dx, dp) = rk4_combined(
        params, state.x, state.p, tangent.dx, tangent.dp, state.t, dt,
    );
    TangentVector { dx, dp }
}

/// Evolves the state for `duration` (a whole number of steps).
pub fn evolve_classical(
    state: &ClassicalState,
    params: &DuffingParams,
    dt: f64,
    duration: f64,
    mut noise: Option<(&ClassicalNoiseConfig, &mut NoiseStream)>,
) -> ClassicalState {
    let n = (duration / dt).round() as u64;
    let mut s = *state;
    for _ in 0..n {
        s = classical_step(&s, params, dt, noise.as_mut().map(|(c, s)| (*c, &mut **s)));
    }
    s
}

/// Benettin estimate of the maximal Lyapunov exponent from tangent-space
/// growth, renormalized every `renorm_interval`.
///
/// Returns the finite-time series `λ(t) = Σ ln‖v‖ / t` sampled at the
/// renormalization times, in inverse model-time units.
pub fn benettin_lyapunov(
    state0: &ClassicalState,
    params: &DuffingParams,
    dt: f64,
    t_max: f64,
    renorm_interval: f64,
    mut noise: Option<(&ClassicalNoiseConfig, &mut NoiseStream)>,
) -> Result<FiniteTimeExponent> {
    let renorm_every = (renorm_interval / dt).round().max(1.0) as u64;
    let n_steps = (t_max / dt).round() as u64;
    let p_scale = params.mass * params.omega;

    let mut s = *state0;
    let mut v = TangentVector { dx: 1.0, dp: 0.0 };
    let mut acc = 0.0;
    let mut times = Vec::new();
    let mut lambda = Vec::new();
    for i in 0..n_steps {
        v = tangent_step(&s, &v, params, dt);
        s = classical_step(&s, params, dt, noise.as_mut().map(|(c, s)| (*c, &mut **s)));
        if (i + 1) % renorm_every == 0 {
            let g = v.scaled_norm(p_scale);
            if !g.is_finite() || g == 0.0 {
                return Err(Error::TangentOverflow { t: s.t });
            }
            acc += g.ln();
            v = TangentVector {
                dx: v.dx / g,
                dp: v.dp / g,
            };
            let t = (i + 1) as f64 * dt;
            times.push(t);
            lambda.push(acc / t);
        }
    }
    Ok(FiniteTimeExponent {
        times,
        lambda_t: lambda,
        trajectory_id: 0,
    })
}

/// Two-trajectory finite-difference cross-check of [`benettin_lyapunov`]:
/// a full second trajectory displaced by `delta0`, renormalized back onto the
/// base trajectory along the current separation direction.
pub fn divergence_lyapunov(
    state0: &ClassicalState,
    params: &DuffingParams,
    dt: f64,
    t_max: f64,
    renorm_interval: f64,
    delta0: f64,
) -> Result<FiniteTimeExponent> {
    let renorm_every = (renorm_interval / dt).round().max(1.0) as u64;
    let n_steps = (t_max / dt).round() as u64;
    let p_scale = params.mass * params.omega;

    let mut fid = *state0;
    let mut pert = ClassicalState {
        x: state0.x + delta0,
        ..*state0
    };
    let mut acc = 0.0;
    let mut times = Vec::new();
    let mut lambda = Vec::new();
    for i in 0..n_steps {
        fid = classical_step(&fid, params, dt, None);
        pert = classical_step(&pert, params, dt, None);
        if (i + 1) % renorm_every == 0 {
            let sep_x = pert.x - fid.x;
            let sep_p = pert.p - fid.p;
            let d = sep_x.hypot(sep_p / p_scale);
            if !d.is_finite() || d == 0.0 {
                return Err(Error::TangentOverflow { t: fid.t });
            }
            acc += (d / delta0).ln();
            let scale = delta0 / d;
            pert = ClassicalState {
                x: fid.x + sep_x * scale,
                p: fid.p + sep_p * scale,
                t: fid.t,
            };
            let t = (i + 1) as f64 * dt;
            times.push(t);
            lambda.push(acc / t);
        }
    }
    Ok(FiniteTimeExponent {
        times,
        lambda_t: lambda,
        trajectory_id: 0,
    })
}

/// Samples `(x, p)` once per drive period for `n_periods` periods.
pub fn classical_strobe(
    state0: &ClassicalState,
    params: &DuffingParams,
    dt: f64,
    n_periods: u64,
    mut noise: Option<(&ClassicalNoiseConfig, &mut NoiseStream)>,
) -> Vec<(f64, f64)> {
    let spp = (params.period() / dt).round() as u64;
    let mut s = *state0;
    let mut points = Vec::with_capacity(n_periods as usize);
    for _ in 0..n_periods {
        for _ in 0..spp {
            s = classical_step(&s, params, dt, noise.as_mut().map(|(c, s)| (*c, &mut **s)));
        }
        points.push((s.x, s.p));
    }
    points
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn undriven(hbar: f64) -> DuffingParams {
        DuffingParams {
            drive_amp: 0.0,
            ..DuffingParams::standard(hbar)
        }
    }

    #[test]
    fn equilibrium_stays_fixed() {
        let params = undriven(1.0);
        let x0 = (params.a / (2.0 * params.b)).sqrt();
        let mut s = ClassicalState { x: x0, p: 0.0, t: 0.0 };
        let dt = params.period() / 2000.0;
        for _ in 0..1000 {
            s = classical_step(&s, &params, dt, None);
        }
        assert_abs_diff_eq!(s.x, x0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.p, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn undriven_energy_is_conserved() {
        let params = undriven(1.0);
        let dt = params.period() / 2000.0;
        let mut s = ClassicalState { x: 1.0, p: 3.0, t: 0.0 };
        let energy =
            |s: &ClassicalState| s.p * s.p / (2.0 * params.mass) + params.potential_static(s.x);
        let e0 = energy(&s);
        for _ in 0..10_000 {
            s = classical_step(&s, &params, dt, None);
        }
        assert!(((energy(&s) - e0) / e0).abs() < 1e-8);
    }

    #[test]
    fn momentum_diffusion_heats_as_2dpt() {
        let params = undriven(1.0);
        let x0 = (params.a / (2.0 * params.b)).sqrt();
        let d_p = 1e-4;
        let cfg = ClassicalNoiseConfig::new(d_p).unwrap();
        let dt = params.period() / 2000.0;
        // short horizon so the well curvature has little effect on Var(p)
        let t_end = 0.05;
        let n = (t_end / dt).round() as u64;
        let n_traj = 4000;
        let mut sum_p2 = 0.0;
        for id in 0..n_traj {
            let mut stream = NoiseStream::new(500, id, dt);
            let mut s = ClassicalState { x: x0, p: 0.0, t: 0.0 };
            for _ in 0..n {
                s = classical_step(&s, &params, dt, Some((&cfg, &mut stream)));
            }
            sum_p2 += s.p * s.p;
        }
        let var_p = sum_p2 / n_traj as f64;
        let expected = 2.0 * d_p * n as f64 * dt;
        assert_relative_eq!(var_p, expected, max_relative = 0.1);
    }

    #[test]
    fn tangent_linearization_signs() {
        let params = DuffingParams::standard(1.0);
        // at x = 0 the local linearization is an inverted oscillator: δṗ = +2A·δx
        assert_relative_eq!(-params.curvature(0.0), 2.0 * params.a, max_relative = 1e-12);
        // at the well minimum it is stable with V'' = 4A
        let xm = (params.a / (2.0 * params.b)).sqrt();
        assert_relative_eq!(params.curvature(xm), 4.0 * params.a, max_relative = 1e-12);
    }

    #[test]
    fn tangent_step_is_linear() {
        let params = DuffingParams::standard(1.0);
        let s = ClassicalState { x: 0.7, p: -2.0, t: 0.3 };
        let dt = 1e-3;
        let v1 = TangentVector { dx: 0.2, dp: -0.1 };
        let v2 = TangentVector { dx: -0.05, dp: 0.4 };
        let a = 3.0;
        let lhs = tangent_step(
            &s,
            &TangentVector {
                dx: a * v1.dx + v2.dx,
                dp: a * v1.dp + v2.dp,
            },
            &params,
            dt,
        );
        let r1 = tangent_step(&s, &v1, &params, dt);
        let r2 = tangent_step(&s, &v2, &params, dt);
        assert_abs_diff_eq!(lhs.dx, a * r1.dx + r2.dx, epsilon = 1e-15);
        assert_abs_diff_eq!(lhs.dp, a * r1.dp + r2.dp, epsilon = 1e-15);

        let zero = tangent_step(&s, &TangentVector { dx: 0.0, dp: 0.0 }, &params, dt);
        assert_eq!((zero.dx, zero.dp), (0.0, 0.0));
    }

    #[test]
    fn regular_motion_has_nonpositive_exponent() {
        // undriven, small oscillation inside one well
        let params = undriven(1.0);
        let xm = (params.a / (2.0 * params.b)).sqrt();
        let s = ClassicalState { x: xm + 0.1, p: 0.0, t: 0.0 };
        let dt = params.period() / 2000.0;
        let ft = benettin_lyapunov(&s, &params, dt, 200.0, 0.25, None).unwrap();
        let lambda = *ft.lambda_t.last().unwrap();
        assert!(lambda <= 0.02, "regular orbit gave lambda = {lambda}");
    }

    #[test]
    fn strobe_counts_and_bounds() {
        let params = DuffingParams::standard(1.0);
        let dt = params.period() / 500.0;
        let s = ClassicalState { x: 1.0, p: 0.0, t: 0.0 };
        assert!(classical_strobe(&s, &params, dt, 0, None).is_empty());
        let pts = classical_strobe(&s, &params, dt, 300, None);
        assert_eq!(pts.len(), 300);
        for &(x, p) in &pts {
            assert!(x.abs() < 10.0 && p.abs() < 40.0, "({x}, {p}) out of bounds");
        }
    }

    #[test]
    fn regular_strobe_stays_on_a_curve() {
        // undriven libration inside one well: strobe points stay on a closed
        // curve, so their spread is bounded well below the well size
        let params = undriven(1.0);
        let xm = (params.a / (2.0 * params.b)).sqrt();
        let s = ClassicalState { x: xm + 0.05, p: 0.0, t: 0.0 };
        let dt = params.period() / 1000.0;
        let pts = classical_strobe(&s, &params, dt, 200, None);
        let (mut xlo, mut xhi) = (f64::MAX, f64::MIN);
        for &(x, _) in &pts {
            xlo = xlo.min(x);
            xhi = xhi.max(x);
        }
        assert!(xhi - xlo < 0.2, "spread {}", xhi - xlo);
        assert!(xlo > xm - 0.2 && xhi < xm + 0.2);
    }
}
