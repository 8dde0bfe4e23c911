//! Quantum-trajectory simulator for a continuously observed driven Duffing
//! oscillator.
//!
//! The crate integrates the norm-preserving stochastic Schrödinger equation
//! for ideal continuous position measurement on a periodic position grid
//! (split-operator FFT propagation plus a pointwise stochastic measurement
//! update), and measures chaos through observation-conditioned Lyapunov
//! exponents: two trajectories driven by the *same* noise realization,
//! separated by an infinitesimal phase-space displacement and periodically
//! renormalized, Benettin style. A classical baseline (RK4 + tangent-space
//! Benettin) and stroboscopic/histogram analysis tools round out the toolkit.
//!
//! Ensembles of trajectories run data-parallel over trajectory ids (rayon,
//! behind the default `parallel` feature) with per-trajectory counter-based
//! noise streams, so results are independent of the worker count and runs
//! are reproducible bit for bit from `(master_seed, trajectory_id)`.

pub mod analysis;
pub mod classical;
pub mod config;
pub mod error;
pub mod grid;
pub mod lyapunov;
pub mod noise;
pub mod output;
pub mod propagator;
pub mod runner;
pub mod snapshot;
mod spectral;

pub use error::{Error, Result};
pub use grid::{
    build_grid, displace, expectations, gaussian_packet, potential_minima, DuffingParams,
    Expectations, GridSpec, Potential, SystemParams, Wavefunction,
};
pub use noise::{
    increment_from_record, record_append, wiener_increment, MeasurementRecord, NoiseStream,
    RecordOrigin,
};
pub use propagator::{
    evolve, measurement_substep, sse_step, unitary_step, MeasurementConfig, PropagatorConfig,
    StepObservation, Stepper,
};
