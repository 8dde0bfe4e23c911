//! Position-space representation of the quantum state: the uniform grid, the
//! wavefunction, the oscillator parameters, and expectation-value functionals.
//!
//! The grid is periodic (the kinetic step is spectral), so every state handled
//! here must keep its probability mass away from the edges; constructors and
//! dynamics both enforce that with an edge-mass check.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{momentum_at, momentum_moments, Spectral};

/// Probability mass allowed in the outermost cells when constructing a packet.
pub const BOUNDARY_TRUNCATION_LIMIT: f64 = 1e-12;
/// Probability mass allowed in the outermost cells during evolution.
pub const BOUNDARY_RUNTIME_LIMIT: f64 = 1e-10;

/// Uniform position grid with the matching momentum spacing.
///
/// Invariant: `dx * dp * n_points = 2π ħ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub n_points: usize,
    pub dx: f64,
    pub dp: f64,
    pub hbar: f64,
}

/// Builds a grid over `[x_min, x_max)` with `n_points` cells.
///
/// `n_points` must be a power of two (>= 16) so the spectral steps can use
/// radix-2 transforms throughout.
pub fn build_grid(x_min: f64, x_max: f64, n_points: usize, hbar: f64) -> Result<GridSpec> {
    if n_points < 16 || !n_points.is_power_of_two() {
        return Err(Error::NonPowerOfTwoGrid(n_points));
    }
    if !(x_max > x_min) {
        return Err(Error::DegenerateInterval { x_min, x_max });
    }
    if !(hbar > 0.0) {
        return Err(Error::config("hbar", format!("must be > 0, got {hbar}")));
    }
    let dx = (x_max - x_min) / n_points as f64;
    let dp = 2.0 * std::f64::consts::PI * hbar / (n_points as f64 * dx);
    Ok(GridSpec {
        x_min,
        x_max,
        n_points,
        dx,
        dp,
        hbar,
    })
}

impl GridSpec {
    /// Position of cell `j`.
    pub fn position(&self, j: usize) -> f64 {
        self.x_min + j as f64 * self.dx
    }

    /// Signed momentum of FFT bin `m`.
    pub fn momentum(&self, m: usize) -> f64 {
        momentum_at(self, m)
    }

    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Parameters of the driven double-well oscillator
/// `H = p²/2m + B x⁴ − A x² + Λ x cos(ω t)` plus the effective ħ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DuffingParams {
    /// Particle mass `m`.
    pub mass: f64,
    /// Quadratic well coefficient `A` (positive for a double well).
    pub a: f64,
    /// Quartic confinement coefficient `B`.
    pub b: f64,
    /// Drive amplitude `Λ`.
    pub drive_amp: f64,
    /// Drive angular frequency `ω`.
    pub omega: f64,
    /// Effective Planck constant.
    pub hbar: f64,
}

impl DuffingParams {
    /// The standard parameter set `m=1, A=10, B=0.5, Λ=10, ω=6.07` at the given ħ.
    pub fn standard(hbar: f64) -> Self {
        DuffingParams {
            mass: 1.0,
            a: 10.0,
            b: 0.5,
            drive_amp: 10.0,
            omega: 6.07,
            hbar,
        }
    }

    /// Drive period `T = 2π/ω`.
    pub fn period(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.omega
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0) {
            return Err(Error::config("mass", format!("must be > 0, got {}", self.mass)));
        }
        if !(self.b > 0.0) {
            return Err(Error::config("b", format!("must be > 0, got {}", self.b)));
        }
        if !(self.omega > 0.0) {
            return Err(Error::config("omega", format!("must be > 0, got {}", self.omega)));
        }
        if !(self.hbar > 0.0) {
            return Err(Error::config("hbar", format!("must be > 0, got {}", self.hbar)));
        }
        Ok(())
    }

    /// Static part of the potential, `B x⁴ − A x²`.
    pub fn potential_static(&self, x: f64) -> f64 {
        self.b * x.powi(4) - self.a * x * x
    }

    /// Full potential including the drive at time `t`.
    pub fn potential(&self, x: f64, t: f64) -> f64 {
        self.potential_static(x) + self.drive_amp * x * (self.omega * t).cos()
    }

    /// Classical force `−∂V/∂x = −4Bx³ + 2Ax − Λcos(ωt)`.
    pub fn force(&self, x: f64, t: f64) -> f64 {
        -4.0 * self.b * x.powi(3) + 2.0 * self.a * x - self.drive_amp * (self.omega * t).cos()
    }

    /// Curvature `V''(x) = 12Bx² − 2A` (drive-independent).
    pub fn curvature(&self, x: f64) -> f64 {
        12.0 * self.b * x * x - 2.0 * self.a
    }
}

/// Stationary points `±sqrt(A/2B)` of the undriven double well.
///
/// Returns `(left, right)`. Errors when `A <= 0` (single well).
pub fn potential_minima(params: &DuffingParams) -> Result<(f64, f64)> {
    if params.a <= 0.0 {
        return Err(Error::SingleWell(params.a));
    }
    let xm = (params.a / (2.0 * params.b)).sqrt();
    Ok((-xm, xm))
}

/// Potential shapes the propagator understands. The Duffing form is the
/// production system; the others exist for analytically solvable checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Potential {
    /// `B x⁴ − A x² + Λ x cos(ω t)`.
    Duffing {
        a: f64,
        b: f64,
        drive_amp: f64,
        omega: f64,
    },
    /// `½ m ω₀² x²`.
    Harmonic { omega0: f64 },
    /// Free particle.
    Free,
}

/// Hamiltonian data for the propagator: mass, ħ, and the potential.
///
/// `mass = f64::INFINITY` switches the kinetic term off (useful together with
/// [`Potential::Free`] for a zero Hamiltonian).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    pub mass: f64,
    pub hbar: f64,
    pub potential: Potential,
}

impl SystemParams {
    pub fn harmonic(mass: f64, hbar: f64, omega0: f64) -> Self {
        SystemParams {
            mass,
            hbar,
            potential: Potential::Harmonic { omega0 },
        }
    }

    pub fn free(mass: f64, hbar: f64) -> Self {
        SystemParams {
            mass,
            hbar,
            potential: Potential::Free,
        }
    }

    /// `H = 0`: no kinetic term, no potential.
    pub fn zero_hamiltonian(hbar: f64) -> Self {
        SystemParams {
            mass: f64::INFINITY,
            hbar,
            potential: Potential::Free,
        }
    }

    /// Time-independent part of the potential.
    pub fn potential_static(&self, x: f64) -> f64 {
        match self.potential {
            Potential::Duffing { a, b, .. } => b * x.powi(4) - a * x * x,
            Potential::Harmonic { omega0 } => 0.5 * self.mass * omega0 * omega0 * x * x,
            Potential::Free => 0.0,
        }
    }

    /// Coefficient `c(t)` of the linear drive term `c(t)·x`.
    pub fn drive_coefficient(&self, t: f64) -> f64 {
        match self.potential {
            Potential::Duffing {
                drive_amp, omega, ..
            } => drive_amp * (omega * t).cos(),
            _ => 0.0,
        }
    }

    pub fn potential_at(&self, x: f64, t: f64) -> f64 {
        self.potential_static(x) + self.drive_coefficient(t) * x
    }
}

impl From<&DuffingParams> for SystemParams {
    fn from(p: &DuffingParams) -> Self {
        SystemParams {
            mass: p.mass,
            hbar: p.hbar,
            potential: Potential::Duffing {
                a: p.a,
                b: p.b,
                drive_amp: p.drive_amp,
                omega: p.omega,
            },
        }
    }
}

/// Complex amplitudes on a [`GridSpec`] at a moment of model time.
///
/// Normalization `Σ|ψ_j|² dx = 1` is established by the constructors and
/// maintained by every public operation.
#[derive(Debug, Clone, PartialEq)]
pub struct Wavefunction {
    pub grid: GridSpec,
    pub amplitudes: Vec<Complex64>,
    pub time: f64,
}

/// Normalized Gaussian packet `exp(−(x−x0)²/4σ² + i p0 (x−x0)/ħ)`.
///
/// Errors when the tails carry more than [`BOUNDARY_TRUNCATION_LIMIT`]
/// probability mass in the outermost grid cells.
pub fn gaussian_packet(grid: &GridSpec, x0: f64, p0: f64, sigma_x: f64) -> Result<Wavefunction> {
    if !(sigma_x > 0.0) {
        return Err(Error::config(
            "sigma_x",
            format!("must be > 0, got {sigma_x}"),
        ));
    }
    let mut amplitudes = Vec::with_capacity(grid.n_points);
    for j in 0..grid.n_points {
        let z = grid.position(j) - x0;
        let envelope = (-z * z / (4.0 * sigma_x * sigma_x)).exp();
        let phase = p0 * z / grid.hbar;
        amplitudes.push(Complex64::from_polar(envelope, phase));
    }
    let mut psi = Wavefunction {
        grid: *grid,
        amplitudes,
        time: 0.0,
    };
    psi.normalize();
    let edge = psi.edge_mass();
    if edge > BOUNDARY_TRUNCATION_LIMIT {
        return Err(Error::BoundaryTruncation {
            density: edge,
            limit: BOUNDARY_TRUNCATION_LIMIT,
        });
    }
    Ok(psi)
}

impl Wavefunction {
    /// `Σ|ψ_j|² dx`.
    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>() * self.grid.dx
    }

    /// Rescales to unit norm in place.
    pub fn normalize(&mut self) {
        let scale = 1.0 / self.norm_sqr().sqrt();
        for a in &mut self.amplitudes {
            *a *= scale;
        }
    }

    /// Position expectation value.
    pub fn mean_x(&self) -> f64 {
        let mut w_sum = 0.0;
        let mut x_sum = 0.0;
        for (j, a) in self.amplitudes.iter().enumerate() {
            let w = a.norm_sqr();
            w_sum += w;
            x_sum += w * self.grid.position(j);
        }
        x_sum / w_sum
    }

    /// Probability mass in the outermost cell on each side.
    pub fn edge_mass(&self) -> f64 {
        let n = self.amplitudes.len();
        (self.amplitudes[0].norm_sqr() + self.amplitudes[n - 1].norm_sqr()) * self.grid.dx
    }

    /// Overlap magnitude `|⟨self|other⟩|`.
    pub fn fidelity(&self, other: &Wavefunction) -> f64 {
        let s: Complex64 = self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum();
        (s * self.grid.dx).norm()
    }
}

/// Phase-space displacement: boost by `dp0` (multiply by `e^{i dp0 x/ħ}`),
/// then translate by `dx0` through a spectral shift.
///
/// Shifts `⟨x⟩` by exactly `dx0` and `⟨p⟩` by exactly `dp0`, preserving the
/// norm. Zero displacements return the input unchanged. Errors when the
/// displaced state reaches the grid boundary (spectral translation wraps).
pub fn displace(psi: &Wavefunction, dx0: f64, dp0: f64) -> Result<Wavefunction> {
    let mut out = psi.clone();
    if dp0 != 0.0 {
        for (j, a) in out.amplitudes.iter_mut().enumerate() {
            let phase = dp0 * out.grid.position(j) / out.grid.hbar;
            *a *= Complex64::from_polar(1.0, phase);
        }
    }
    if dx0 != 0.0 {
        let mut spectral = Spectral::new(out.grid.n_points);
        spectral.to_momentum(&mut out.amplitudes);
        for (m, a) in out.amplitudes.iter_mut().enumerate() {
            let p = momentum_at(&out.grid, m);
            *a *= Complex64::from_polar(1.0, -p * dx0 / out.grid.hbar);
        }
        spectral.to_position(&mut out.amplitudes);
    }
    let edge = out.edge_mass();
    if edge > BOUNDARY_RUNTIME_LIMIT {
        return Err(Error::BoundaryViolation {
            t: out.time,
            density: edge,
            limit: BOUNDARY_RUNTIME_LIMIT,
        });
    }
    Ok(out)
}

/// First and second moments of position and momentum plus norm and energy at
/// one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Expectations {
    pub time: f64,
    pub mean_x: f64,
    pub mean_p: f64,
    pub var_x: f64,
    pub var_p: f64,
    pub norm: f64,
    pub energy: f64,
}

impl Expectations {
    /// Computes all moments. Position moments are direct sums; momentum
    /// moments use momentum-space weighting (exact on the grid, no aliasing
    /// noise from double differentiation).
    pub fn compute(psi: &Wavefunction, system: &SystemParams, t: f64) -> Expectations {
        let grid = &psi.grid;
        let mut w_sum = 0.0;
        let mut x_sum = 0.0;
        let mut x2_sum = 0.0;
        let mut v_sum = 0.0;
        let drive = system.drive_coefficient(t);
        for (j, a) in psi.amplitudes.iter().enumerate() {
            let w = a.norm_sqr();
            let x = grid.position(j);
            w_sum += w;
            x_sum += w * x;
            x2_sum += w * x * x;
            v_sum += w * (system.potential_static(x) + drive * x);
        }
        let norm = w_sum * grid.dx;
        let mean_x = x_sum / w_sum;
        let var_x = (x2_sum / w_sum - mean_x * mean_x).max(0.0);
        let mean_v = v_sum / w_sum;

        let mut mom = psi.amplitudes.clone();
        let mut spectral = Spectral::new(grid.n_points);
        spectral.to_momentum(&mut mom);
        let (mean_p, p2) = momentum_moments(grid, &mom);
        let var_p = (p2 - mean_p * mean_p).max(0.0);

        let kinetic = if system.mass.is_finite() {
            p2 / (2.0 * system.mass)
        } else {
            0.0
        };
        Expectations {
            time: t,
            mean_x,
            mean_p,
            var_x,
            var_p,
            norm,
            energy: kinetic + mean_v,
        }
    }
}

/// Expectation values for the Duffing system at time `t`.
pub fn expectations(psi: &Wavefunction, params: &DuffingParams, t: f64) -> Expectations {
    Expectations::compute(psi, &SystemParams::from(params), t)
}
