//! Identical-frequency Kuramoto–Sakaguchi dynamics on a coupling matrix.
//!
//! ```text
//! dθ_i/dt = ω - (1/N) Σ_j C_ij sin(θ_i - θ_j + α)
//! ```
//!
//! The self term `j = i` is part of the sum. Integration is explicit Euler on unwrapped
//! phases; velocity statistics are taken from the right-hand side evaluated once per
//! measurement step.

use std::f64::consts::{FRAC_PI_2, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::market_data::CouplingMatrix;

/// Default phase lag `π/2 - 0.1`.
pub const DEFAULT_ALPHA: f64 = FRAC_PI_2 - 0.10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimParams {
    pub omega: f64,
    pub alpha: f64,
    pub dt: f64,
    pub transient_steps: usize,
    pub measure_steps: usize,
    pub seed: u64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            omega: 0.0,
            alpha: DEFAULT_ALPHA,
            dt: 0.01,
            transient_steps: 10_000,
            measure_steps: 1_000,
            seed: 0,
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {}", self.dt)));
        }
        if self.measure_steps < 2 {
            return Err(Error::InvalidArgument(format!(
                "measure_steps must be at least 2, got {}",
                self.measure_steps
            )));
        }
        if !self.omega.is_finite() || !self.alpha.is_finite() {
            return Err(Error::InvalidArgument("omega and alpha must be finite".into()));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseState {
    /// Unwrapped phases in radians.
    pub phases: Vec<f64>,
    pub time: f64,
}

impl PhaseState {
    pub fn new(phases: Vec<f64>) -> Self {
        Self { phases, time: 0.0 }
    }

    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }
}

/// Velocity statistics of one simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSummary {
    pub mean_velocity: Vec<f64>,
    /// Population standard deviation of the instantaneous velocity.
    pub velocity_std: Vec<f64>,
    /// Last state wrapped to `[0, 2π)`.
    pub final_phases: Vec<f64>,
    pub window_index: usize,
}

impl SimulationSummary {
    pub fn len(&self) -> usize {
        self.velocity_std.len()
    }

    pub fn is_empty(&self) -> bool {
        self.velocity_std.is_empty()
    }
}

/// Mixes a master seed with a window index into an independent sub-seed (splitmix64).
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// I.i.d. uniform phases on `[0, 2π)`.
pub fn initial_phases(n: usize, seed: u64) -> Result<PhaseState> {
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one oscillator".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phases = (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            // guard against u * 2π rounding up to 2π
            let p = u * TAU;
            if p >= TAU { 0.0 } else { p }
        })
        .collect();
    Ok(PhaseState::new(phases))
}

/// Reusable buffers for repeated right-hand-side evaluations.
struct Workspace {
    shifted_sin: Vec<f64>,
    shifted_cos: Vec<f64>,
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        Self {
            shifted_sin: vec![0.0; n],
            shifted_cos: vec![0.0; n],
            cos: vec![0.0; n],
            sin: vec![0.0; n],
        }
    }

    /// Writes the right-hand side into `out`.
    ///
    /// Uses `sin(θi - θj + α) = sin(θi + α) cos θj - cos(θi + α) sin θj`, which turns the
    /// double sum into two matrix-vector products.
    fn velocity(
        &mut self,
        phases: &[f64],
        coupling: &CouplingMatrix,
        omega: f64,
        alpha: f64,
        out: &mut [f64],
    ) {
        let n = phases.len();
        for (j, &theta) in phases.iter().enumerate() {
            let (s, c) = theta.sin_cos();
            self.sin[j] = s;
            self.cos[j] = c;
            let (ss, sc) = (theta + alpha).sin_cos();
            self.shifted_sin[j] = ss;
            self.shifted_cos[j] = sc;
        }
        let inv_n = 1.0 / n as f64;
        let values = coupling.values();
        for (i, row) in values.outer_iter().enumerate() {
            let row = row.as_slice().expect("coupling rows are contiguous");
            let mut c_cos = 0.0;
            let mut c_sin = 0.0;
            for ((c, cj), sj) in row.iter().zip(&self.cos).zip(&self.sin) {
                c_cos += c * cj;
                c_sin += c * sj;
            }
            out[i] = omega - inv_n * (self.shifted_sin[i] * c_cos - self.shifted_cos[i] * c_sin);
        }
    }
}

fn check_dims(state: &PhaseState, coupling: &CouplingMatrix) -> Result<()> {
    if state.len() != coupling.n() {
        return Err(Error::Dimension(format!(
            "{} phases for a {}×{} coupling matrix",
            state.len(),
            coupling.n(),
            coupling.n()
        )));
    }
    Ok(())
}

/// Instantaneous phase velocities at `state`.
pub fn phase_velocity(
    state: &PhaseState,
    coupling: &CouplingMatrix,
    params: &SimParams,
) -> Result<Vec<f64>> {
    check_dims(state, coupling)?;
    let mut out = vec![0.0; state.len()];
    Workspace::new(state.len()).velocity(&state.phases, coupling, params.omega, params.alpha, &mut out);
    Ok(out)
}

/// One explicit Euler step.
pub fn step(state: &PhaseState, coupling: &CouplingMatrix, params: &SimParams) -> Result<PhaseState> {
    let v = phase_velocity(state, coupling, params)?;
    let phases = state
        .phases
        .iter()
        .zip(&v)
        .map(|(theta, vel)| theta + params.dt * vel)
        .collect();
    Ok(PhaseState {
        phases,
        time: state.time + params.dt,
    })
}

/// Runs the transient, then the measurement phase, from seeded uniform initial phases.
pub fn simulate(coupling: &CouplingMatrix, params: &SimParams) -> Result<SimulationSummary> {
    let state = initial_phases(coupling.n(), params.seed)?;
    simulate_from(state, coupling, params)
}

/// As [`simulate`], from a caller-supplied initial state.
pub fn simulate_from(
    mut state: PhaseState,
    coupling: &CouplingMatrix,
    params: &SimParams,
) -> Result<SimulationSummary> {
    params.validate()?;
    check_dims(&state, coupling)?;
    let n = state.len();
    let mut ws = Workspace::new(n);
    let mut v = vec![0.0; n];
    let mut mean = vec![0.0; n];
    let mut m2 = vec![0.0; n];

    let total = params.transient_steps + params.measure_steps;
    for k in 0..total {
        ws.velocity(&state.phases, coupling, params.omega, params.alpha, &mut v);
        if k >= params.transient_steps {
            // Welford update
            let count = (k - params.transient_steps + 1) as f64;
            for i in 0..n {
                let delta = v[i] - mean[i];
                mean[i] += delta / count;
                m2[i] += delta * (v[i] - mean[i]);
            }
        }
        for (theta, vel) in state.phases.iter_mut().zip(&v) {
            *theta += params.dt * vel;
        }
        state.time += params.dt;
        if let Some(index) = state.phases.iter().position(|p| !p.is_finite()) {
            return Err(Error::NonFinitePhase { step: k + 1, index });
        }
    }

    let samples = params.measure_steps as f64;
    Ok(SimulationSummary {
        mean_velocity: mean,
        velocity_std: m2.iter().map(|s| (s.max(0.0) / samples).sqrt()).collect(),
        final_phases: state.phases.iter().map(|p| wrap_phase(*p)).collect(),
        window_index: coupling.window_index(),
    })
}

fn wrap_phase(p: f64) -> f64 {
    let w = p.rem_euclid(TAU);
    if w >= TAU { 0.0 } else { w }
}
