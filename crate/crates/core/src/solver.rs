//! Splitting integrator for the coupled two-phase transport system.
//!
//! Space is discretized by a uniform cell-centered grid on `[0, m]`. Each
//! step composes two explicit substeps in the product-formula order
//! (reaction first, then transport):
//!
//! - reaction/birth: per-cell explicit Euler for the zero-order terms, with
//!   the birth integral evaluated by the midpoint rule on the same grid;
//! - transport: conservative first-order donor-cell upwind for each phase
//!   (growth speeds are strictly positive, so the donor is always the left
//!   neighbor), zero influx at `s = 0` and pure outflow at `s = m`.
//!
//! Both substeps preserve nonnegativity under their step-size guards, so
//! the discrete evolution inherits the positivity of the continuous
//! semigroup exactly rather than approximately.

use crate::coeffs::ModelParams;
use crate::error::{Error, Result};

/// Uniform cell-centered grid on `[0, m]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    m: f64,
    n_cells: usize,
    cell_width: f64,
    centers: Vec<f64>,
}

impl Grid {
    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn cell_width(&self) -> f64 {
        self.cell_width
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    /// Coordinate of face `i` for `i in 0..=n_cells`.
    pub fn face(&self, i: usize) -> f64 {
        if i == self.n_cells {
            self.m
        } else {
            self.m * (i as f64) / (self.n_cells as f64)
        }
    }
}

/// Build a uniform grid with `centers[i] = (i + 1/2) * cell_width`.
pub fn build_grid(m: f64, n_cells: usize) -> Result<Grid> {
    if !m.is_finite() || m <= 0.0 {
        return Err(Error::InvalidGrid(format!(
            "maximal size m must be positive and finite, got {m}"
        )));
    }
    if n_cells < 2 {
        return Err(Error::InvalidGrid(format!(
            "n_cells must be at least 2, got {n_cells}"
        )));
    }
    let cell_width = m / n_cells as f64;
    let centers = (0..n_cells)
        .map(|i| (i as f64 + 0.5) * cell_width)
        .collect();
    Ok(Grid {
        m,
        n_cells,
        cell_width,
        centers,
    })
}

/// Grid-sampled densities of both phases at one time point.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationState {
    pub t: f64,
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
}

impl PopulationState {
    pub fn new(t: f64, u1: Vec<f64>, u2: Vec<f64>) -> Self {
        Self { t, u1, u2 }
    }

    pub fn zeros(grid: &Grid) -> Self {
        Self::new(0.0, vec![0.0; grid.n_cells()], vec![0.0; grid.n_cells()])
    }

    /// Sample initial densities at cell centers.
    pub fn from_profiles(
        grid: &Grid,
        u1: impl Fn(f64) -> f64,
        u2: impl Fn(f64) -> f64,
    ) -> Self {
        Self::new(
            0.0,
            grid.centers().iter().map(|&s| u1(s)).collect(),
            grid.centers().iter().map(|&s| u2(s)).collect(),
        )
    }

    pub fn mass1(&self, grid: &Grid) -> f64 {
        grid.cell_width() * self.u1.iter().sum::<f64>()
    }

    pub fn mass2(&self, grid: &Grid) -> f64 {
        grid.cell_width() * self.u2.iter().sum::<f64>()
    }

    pub fn total_mass(&self, grid: &Grid) -> f64 {
        self.mass1(grid) + self.mass2(grid)
    }

    pub fn min_density(&self) -> f64 {
        self.u1
            .iter()
            .chain(self.u2.iter())
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn is_nonnegative(&self) -> bool {
        self.min_density() >= 0.0
    }
}

/// One observable record: masses per phase and total.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub t: f64,
    pub mass1: f64,
    pub mass2: f64,
    pub total: f64,
}

/// Snapshots at requested output times plus per-step observables.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<PopulationState>,
    pub observables: Vec<Observation>,
}

impl Trajectory {
    pub fn final_state(&self) -> &PopulationState {
        self.states.last().expect("trajectory holds >= 1 state")
    }
}

/// CFL time step `safety * cell_width / max(sup gamma1, sup gamma2)`.
pub fn cfl_dt(params: &ModelParams, grid: &Grid, safety: f64) -> f64 {
    let speed = params.gamma1.sup_norm().max(params.gamma2.sup_norm());
    safety * grid.cell_width() / speed
}

/// Cached per-grid samples of the model coefficients. Building one of these
/// once per simulation keeps the per-step cost at O(n) transport plus O(n^2)
/// birth instead of re-evaluating coefficient forms every step. The free
/// functions below wrap it for one-off steps.
pub struct Stepper {
    n: usize,
    cell_width: f64,
    /// Face speeds, `n + 1` entries per phase.
    face1: Vec<f64>,
    face2: Vec<f64>,
    mu_c: Vec<f64>,
    c1_c: Vec<f64>,
    c2_c: Vec<f64>,
    /// `cell_width * beta(s_i, s_j)`, row-major over (offspring i, parent j).
    birth: Vec<f64>,
    /// CFL limit `cell_width / max(sup gamma1, sup gamma2)`.
    cfl_limit: f64,
    /// Max of `mu + c1` (resp. `c2`) over cell centers; positivity guards.
    max_loss1: f64,
    max_loss2: f64,
}

impl Stepper {
    pub fn new(params: &ModelParams, grid: &Grid) -> Result<Self> {
        let n = grid.n_cells();
        let mut face1 = Vec::with_capacity(n + 1);
        let mut face2 = Vec::with_capacity(n + 1);
        for i in 0..=n {
            let s = grid.face(i);
            face1.push(params.gamma1.eval(s)?);
            face2.push(params.gamma2.eval(s)?);
        }
        let mut mu_c = Vec::with_capacity(n);
        let mut c1_c = Vec::with_capacity(n);
        let mut c2_c = Vec::with_capacity(n);
        for &s in grid.centers() {
            mu_c.push(params.mu.eval(s)?);
            c1_c.push(params.c1.eval(s)?);
            c2_c.push(params.c2.eval(s)?);
        }
        let mut birth = vec![0.0; n * n];
        if !params.beta.is_trivial() {
            for (i, &s) in grid.centers().iter().enumerate() {
                for (j, &y) in grid.centers().iter().enumerate() {
                    birth[i * n + j] = grid.cell_width() * params.beta.eval(s, y)?;
                }
            }
        }
        let max_loss1 = mu_c
            .iter()
            .zip(&c1_c)
            .map(|(m, c)| m + c)
            .fold(0.0, f64::max);
        let max_loss2 = c2_c.iter().copied().fold(0.0, f64::max);
        Ok(Self {
            n,
            cell_width: grid.cell_width(),
            face1,
            face2,
            mu_c,
            c1_c,
            c2_c,
            birth,
            cfl_limit: cfl_dt(params, grid, 1.0),
            max_loss1,
            max_loss2,
        })
    }

    /// Largest dt satisfying both the CFL constraint (scaled by `safety`)
    /// and the reaction positivity guards (scaled by 0.9).
    pub fn stable_dt(&self, safety: f64) -> f64 {
        let mut dt = safety * self.cfl_limit;
        if self.max_loss1 > 0.0 {
            dt = dt.min(0.9 / self.max_loss1);
        }
        if self.max_loss2 > 0.0 {
            dt = dt.min(0.9 / self.max_loss2);
        }
        dt
    }

    /// Donor-cell upwind flux rate leaving the domain at `s = m`.
    pub fn boundary_outflow_rate(&self, state: &PopulationState) -> f64 {
        self.face1[self.n] * state.u1[self.n - 1] + self.face2[self.n] * state.u2[self.n - 1]
    }

    fn advect(&self, u: &[f64], faces: &[f64], dt: f64) -> Vec<f64> {
        let r = dt / self.cell_width;
        let mut out = Vec::with_capacity(self.n);
        for i in 0..self.n {
            let inflow = if i == 0 { 0.0 } else { faces[i] * u[i - 1] };
            let outflow = faces[i + 1] * u[i];
            out.push(u[i] + r * (inflow - outflow));
        }
        out
    }

    /// Conservative upwind transport of both phases.
    pub fn transport_step(&self, state: &PopulationState, dt: f64) -> Result<PopulationState> {
        if !(dt >= 0.0) || dt > self.cfl_limit * (1.0 + 1e-12) {
            return Err(Error::Step(format!(
                "transport dt = {dt} violates the CFL limit {}",
                self.cfl_limit
            )));
        }
        Ok(PopulationState::new(
            state.t + dt,
            self.advect(&state.u1, &self.face1, dt),
            self.advect(&state.u2, &self.face2, dt),
        ))
    }

    /// Explicit Euler for mortality, transfer and birth.
    pub fn reaction_birth_step(&self, state: &PopulationState, dt: f64) -> Result<PopulationState> {
        if !(dt > 0.0) {
            return Err(Error::Step(format!("reaction dt must be positive, got {dt}")));
        }
        if dt * self.max_loss1 >= 1.0 || dt * self.max_loss2 >= 1.0 {
            return Err(Error::Step(format!(
                "reaction dt = {dt} too large for positivity: needs dt*sup(mu+c1) < 1 \
                 (sup = {}) and dt*sup(c2) < 1 (sup = {})",
                self.max_loss1, self.max_loss2
            )));
        }
        let n = self.n;
        let mut u1 = Vec::with_capacity(n);
        let mut u2 = Vec::with_capacity(n);
        for i in 0..n {
            let birth = if self.birth.is_empty() {
                0.0
            } else {
                let row = &self.birth[i * n..(i + 1) * n];
                row.iter().zip(&state.u1).map(|(b, u)| b * u).sum()
            };
            let transfer = self.c1_c[i] * state.u1[i] - self.c2_c[i] * state.u2[i];
            u1.push(state.u1[i] + dt * (-self.mu_c[i] * state.u1[i] - transfer + birth));
            u2.push(state.u2[i] + dt * transfer);
        }
        Ok(PopulationState::new(state.t + dt, u1, u2))
    }

    /// One splitting step: reaction first, then transport, mirroring the
    /// product `T(t/n) S(t/n)` of the underlying semigroup factorization.
    pub fn lie_step(&self, state: &PopulationState, dt: f64) -> Result<PopulationState> {
        self.transport_step(&self.reaction_birth_step(state, dt)?, dt)
    }

    pub(crate) fn face_speeds(&self) -> (&[f64], &[f64]) {
        (&self.face1, &self.face2)
    }

    pub(crate) fn cell_rates(&self) -> (&[f64], &[f64], &[f64]) {
        (&self.mu_c, &self.c1_c, &self.c2_c)
    }

    pub(crate) fn birth_weights(&self) -> &[f64] {
        &self.birth
    }
}

/// One-off transport step (builds the coefficient cache each call; use
/// [`Stepper`] directly inside loops).
pub fn transport_step(
    state: &PopulationState,
    params: &ModelParams,
    grid: &Grid,
    dt: f64,
) -> Result<PopulationState> {
    Stepper::new(params, grid)?.transport_step(state, dt)
}

/// One-off reaction/birth step.
pub fn reaction_birth_step(
    state: &PopulationState,
    params: &ModelParams,
    grid: &Grid,
    dt: f64,
) -> Result<PopulationState> {
    Stepper::new(params, grid)?.reaction_birth_step(state, dt)
}

/// One-off splitting step.
pub fn lie_step(
    state: &PopulationState,
    params: &ModelParams,
    grid: &Grid,
    dt: f64,
) -> Result<PopulationState> {
    Stepper::new(params, grid)?.lie_step(state, dt)
}

/// Advance from a nonnegative initial state to `t_end`, recording snapshots
/// at the requested output times (the initial state is always the first
/// snapshot) and observables after every step.
pub fn simulate(
    params: &ModelParams,
    grid: &Grid,
    initial: &PopulationState,
    t_end: f64,
    output_times: &[f64],
) -> Result<Trajectory> {
    simulate_with_safety(params, grid, initial, t_end, output_times, 0.9)
}

/// [`simulate`] with an explicit CFL safety factor in (0, 1].
pub fn simulate_with_safety(
    params: &ModelParams,
    grid: &Grid,
    initial: &PopulationState,
    t_end: f64,
    output_times: &[f64],
    safety: f64,
) -> Result<Trajectory> {
    if initial.u1.len() != grid.n_cells() || initial.u2.len() != grid.n_cells() {
        return Err(Error::InvalidState(format!(
            "initial state has {}/{} cells, grid has {}",
            initial.u1.len(),
            initial.u2.len(),
            grid.n_cells()
        )));
    }
    if !initial.is_nonnegative() {
        return Err(Error::InvalidState(
            "initial densities must be nonnegative".into(),
        ));
    }
    if !t_end.is_finite() || t_end < 0.0 {
        return Err(Error::InvalidState(format!(
            "t_end must be nonnegative and finite, got {t_end}"
        )));
    }
    if !(safety > 0.0 && safety <= 1.0) {
        return Err(Error::Config(format!(
            "safety factor must lie in (0, 1], got {safety}"
        )));
    }
    if output_times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config(
            "output times must be strictly increasing".into(),
        ));
    }
    if output_times.iter().any(|&t| !t.is_finite() || t <= 0.0 || t > t_end) {
        return Err(Error::Config(format!(
            "output times must lie in (0, t_end = {t_end}]"
        )));
    }

    let stepper = Stepper::new(params, grid)?;
    let mut state = PopulationState::new(0.0, initial.u1.clone(), initial.u2.clone());
    let mut states = vec![state.clone()];
    let mut observables = vec![observe(&state, grid)];
    if t_end == 0.0 {
        return Ok(Trajectory {
            states,
            observables,
        });
    }

    let dt_base = stepper.stable_dt(safety);
    let mut next_output = 0usize;
    let mut t = 0.0;
    while t < t_end {
        let stop = output_times.get(next_output).copied().unwrap_or(t_end);
        let gap = stop - t;
        let (dt, t_next, hit) = if gap <= dt_base * (1.0 + 1e-9) {
            (gap, stop, true)
        } else {
            (dt_base, t + dt_base, false)
        };
        state = stepper.lie_step(&state, dt)?;
        state.t = t_next;
        let obs = observe(&state, grid);
        if !obs.total.is_finite() {
            return Err(Error::BlowUp { t: t_next });
        }
        observables.push(obs);
        if hit && next_output < output_times.len() {
            states.push(state.clone());
            next_output += 1;
        }
        t = t_next;
    }
    Ok(Trajectory {
        states,
        observables,
    })
}

fn observe(state: &PopulationState, grid: &Grid) -> Observation {
    let mass1 = state.mass1(grid);
    let mass2 = state.mass2(grid);
    Observation {
        t: state.t,
        mass1,
        mass2,
        total: mass1 + mass2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::{BirthKernel, CoefficientFn};

    fn c(v: f64) -> CoefficientFn {
        CoefficientFn::constant(v, 1.0).unwrap()
    }

    fn params(mu: f64, c1: f64, c2: f64, b: f64) -> ModelParams {
        let beta = BirthKernel::separable_rank1(c(b), c(1.0)).unwrap();
        ModelParams::new(c(1.0), c(1.0), c(mu), c(c1), c(c2), beta, 1.0).unwrap()
    }

    #[test]
    fn grid_construction() {
        let g = build_grid(1.0, 4).unwrap();
        assert_eq!(g.centers(), &[0.125, 0.375, 0.625, 0.875]);
        assert_eq!(build_grid(2.0, 2).unwrap().cell_width(), 1.0);
        assert!(build_grid(1.0, 1).is_err());
        assert!(build_grid(0.0, 4).is_err());
    }

    #[test]
    fn cfl_formula() {
        let g = build_grid(1.0, 100).unwrap();
        let p = params(0.0, 0.0, 0.0, 0.0);
        assert!((cfl_dt(&p, &g, 0.9) - 0.009).abs() < 1e-15);

        let g = build_grid(1.0, 10).unwrap();
        let beta = BirthKernel::separable_rank1(c(0.0), c(0.0)).unwrap();
        let p2 = ModelParams::new(c(2.0), c(1.0), c(0.0), c(0.0), c(0.0), beta.clone(), 1.0).unwrap();
        assert!((cfl_dt(&p2, &g, 1.0) - 0.05).abs() < 1e-15);

        let p3 = ModelParams::new(
            CoefficientFn::linear(1.0, 1.0, 1.0).unwrap(),
            c(1.0),
            c(0.0),
            c(0.0),
            c(0.0),
            beta,
            1.0,
        )
        .unwrap();
        assert!((cfl_dt(&p3, &g, 0.5) - 0.025).abs() < 1e-15);
    }

    #[test]
    fn transport_keeps_zero_state() {
        let g = build_grid(1.0, 16).unwrap();
        let p = params(0.3, 0.2, 0.1, 1.0);
        let z = PopulationState::zeros(&g);
        let out = transport_step(&z, &p, &g, 0.01).unwrap();
        assert!(out.u1.iter().chain(out.u2.iter()).all(|&v| v == 0.0));
    }

    #[test]
    fn transport_rejects_cfl_violation() {
        let g = build_grid(1.0, 10).unwrap();
        let p = params(0.0, 0.0, 0.0, 0.0);
        assert!(matches!(
            transport_step(&PopulationState::zeros(&g), &p, &g, 0.2),
            Err(Error::Step(_))
        ));
    }

    #[test]
    fn transport_advects_bump_along_characteristics() {
        // gamma = 1: exact solution is the initial profile shifted by t
        let g = build_grid(1.0, 200).unwrap();
        let p = params(0.0, 0.0, 0.0, 0.0);
        let bump = |center: f64| {
            move |s: f64| {
                let z = (s - center) / 0.05;
                (2.0 * std::f64::consts::PI).sqrt().recip() / 0.05 * (-0.5 * z * z).exp()
            }
        };
        let initial = PopulationState::from_profiles(&g, bump(0.25), |_| 0.0);
        let traj = simulate(&p, &g, &initial, 0.5, &[0.5]).unwrap();
        let exact = bump(0.75);
        let err: f64 = g
            .centers()
            .iter()
            .zip(&traj.final_state().u1)
            .map(|(&s, &u)| (u - exact(s)).abs() * g.cell_width())
            .sum();
        assert!(err <= 0.05, "L1 error {err} too large");
    }

    #[test]
    fn transport_conserves_mass_before_outflow() {
        let g = build_grid(1.0, 100).unwrap();
        let p = params(0.0, 0.0, 0.0, 0.0);
        let stepper = Stepper::new(&p, &g).unwrap();
        let mut state = PopulationState::from_profiles(
            &g,
            |s| if (0.1..0.2).contains(&s) { 10.0 } else { 0.0 },
            |_| 0.0,
        );
        let m0 = state.total_mass(&g);
        let dt = stepper.stable_dt(0.9);
        for _ in 0..40 {
            state = stepper.transport_step(&state, dt).unwrap();
            assert_eq!(*state.u1.last().unwrap(), 0.0, "mass reached the last cell");
            let m = state.total_mass(&g);
            assert!((m - m0).abs() <= 1e-13 * m0, "mass drifted to {m}");
        }
    }

    #[test]
    fn reaction_zero_rates_identity() {
        let g = build_grid(1.0, 8).unwrap();
        let p = params(0.0, 0.0, 0.0, 0.0);
        let state = PopulationState::from_profiles(&g, |s| 1.0 + s, |s| 2.0 - s);
        let out = reaction_birth_step(&state, &p, &g, 0.1).unwrap();
        assert_eq!(out.u1, state.u1);
        assert_eq!(out.u2, state.u2);
    }

    #[test]
    fn reaction_euler_decay() {
        let g = build_grid(1.0, 8).unwrap();
        let p = params(0.5, 0.0, 0.0, 0.0);
        let state = PopulationState::from_profiles(&g, |_| 1.0, |_| 0.0);
        let out = reaction_birth_step(&state, &p, &g, 0.1).unwrap();
        assert!(out.u1.iter().all(|&v| (v - 0.95).abs() < 1e-15));
    }

    #[test]
    fn reaction_transfer_conserves_mass() {
        let g = build_grid(1.0, 8).unwrap();
        let p = params(0.0, 1.0, 1.0, 0.0);
        let state = PopulationState::from_profiles(&g, |_| 1.0, |_| 0.0);
        let out = reaction_birth_step(&state, &p, &g, 0.1).unwrap();
        assert!(out.u1.iter().all(|&v| (v - 0.9).abs() < 1e-15));
        assert!(out.u2.iter().all(|&v| (v - 0.1).abs() < 1e-15));
        assert!((out.total_mass(&g) - state.total_mass(&g)).abs() < 1e-14);
    }

    #[test]
    fn reaction_rejects_positivity_violation() {
        let g = build_grid(1.0, 8).unwrap();
        let p = params(5.0, 6.0, 0.0, 0.0);
        let state = PopulationState::from_profiles(&g, |_| 1.0, |_| 0.0);
        assert!(matches!(
            reaction_birth_step(&state, &p, &g, 0.1),
            Err(Error::Step(_))
        ));
    }

    #[test]
    fn lie_step_zero_state_and_identity_factor() {
        let g = build_grid(1.0, 16).unwrap();
        let p = params(0.0, 0.0, 0.0, 0.0);
        let z = PopulationState::zeros(&g);
        let out = lie_step(&z, &p, &g, 0.01).unwrap();
        assert!(out.u1.iter().chain(out.u2.iter()).all(|&v| v == 0.0));

        // all rates zero: the reaction factor is the identity bitwise
        let state = PopulationState::from_profiles(&g, |s| s * (1.0 - s), |s| s);
        let via_lie = lie_step(&state, &p, &g, 0.01).unwrap();
        let via_transport = transport_step(&state, &p, &g, 0.01).unwrap();
        assert_eq!(via_lie.u1, via_transport.u1);
        assert_eq!(via_lie.u2, via_transport.u2);
    }

    #[test]
    fn splitting_order_swap_is_second_order() {
        // (I + dt T)(I + dt R) - (I + dt R)(I + dt T) = dt^2 (TR - RT), so
        // halving dt quarters the difference exactly up to roundoff.
        let g = build_grid(1.0, 100).unwrap();
        let p = params(0.4, 0.6, 0.5, 1.5);
        let stepper = Stepper::new(&p, &g).unwrap();
        let state = PopulationState::from_profiles(
            &g,
            |s| (-(s - 0.4_f64).powi(2) / 0.02).exp(),
            |s| (-(s - 0.6_f64).powi(2) / 0.02).exp(),
        );
        let diff_norm = |dt: f64| -> f64 {
            let ab = stepper
                .transport_step(&stepper.reaction_birth_step(&state, dt).unwrap(), dt)
                .unwrap();
            let ba = stepper
                .reaction_birth_step(&stepper.transport_step(&state, dt).unwrap(), dt)
                .unwrap();
            ab.u1
                .iter()
                .zip(&ba.u1)
                .chain(ab.u2.iter().zip(&ba.u2))
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>()
                * g.cell_width()
        };
        let d: Vec<f64> = [1e-2, 5e-3, 2.5e-3].iter().map(|&dt| diff_norm(dt)).collect();
        let r1 = d[0] / d[1];
        let r2 = d[1] / d[2];
        assert!((3.8..4.2).contains(&r1), "first halving ratio {r1} not ~4");
        assert!((3.8..4.2).contains(&r2), "second halving ratio {r2} not ~4");
        // constant C = diff / dt^2 stays bounded
        let c_est = d[0] / 1e-4;
        assert!(d[2] <= 1.1 * c_est * 2.5e-3 * 2.5e-3);
    }

    #[test]
    fn simulate_zero_horizon_returns_initial_only() {
        let g = build_grid(1.0, 8).unwrap();
        let p = params(0.1, 0.2, 0.3, 0.5);
        let initial = PopulationState::from_profiles(&g, |_| 1.0, |_| 0.5);
        let traj = simulate(&p, &g, &initial, 0.0, &[]).unwrap();
        assert_eq!(traj.states.len(), 1);
        assert_eq!(traj.observables.len(), 1);
        assert_eq!(traj.final_state().u1, initial.u1);
    }

    #[test]
    fn simulate_rejects_negative_initial() {
        let g = build_grid(1.0, 8).unwrap();
        let p = params(0.0, 0.0, 0.0, 0.0);
        let mut initial = PopulationState::zeros(&g);
        initial.u1[3] = -1.0;
        assert!(matches!(
            simulate(&p, &g, &initial, 1.0, &[]),
            Err(Error::InvalidState(_))
        ));
    }

    #[test]
    fn simulate_mass_fully_exits_by_double_the_domain_time() {
        let g = build_grid(1.0, 200).unwrap();
        let p = params(0.0, 0.0, 0.0, 0.0);
        let initial = PopulationState::from_profiles(&g, |_| 1.0, |_| 1.0);
        let traj = simulate(&p, &g, &initial, 2.0, &[2.0]).unwrap();
        let m0 = traj.observables[0].total;
        let m_end = traj.observables.last().unwrap().total;
        assert!(m_end <= 1e-8 * m0, "residual mass {m_end}");
    }

    #[test]
    fn simulate_hits_output_times_exactly() {
        let g = build_grid(1.0, 50).unwrap();
        let p = params(0.2, 0.1, 0.3, 0.4);
        let initial = PopulationState::from_profiles(&g, |_| 1.0, |_| 0.0);
        let times = [0.1, 0.25, 0.5];
        let traj = simulate(&p, &g, &initial, 0.5, &times).unwrap();
        let ts: Vec<f64> = traj.states.iter().map(|s| s.t).collect();
        assert_eq!(ts, vec![0.0, 0.1, 0.25, 0.5]);
        assert!(traj.states.windows(2).all(|w| w[0].t < w[1].t));
    }

    #[test]
    fn simulate_positivity_and_quasicontractivity() {
        let g = build_grid(1.0, 50).unwrap();
        let p = params(0.3, 0.5, 0.4, 1.2);
        let initial = PopulationState::from_profiles(&g, |s| s, |s| 1.0 - s);
        let traj = simulate(&p, &g, &initial, 1.0, &[0.5, 1.0]).unwrap();
        for s in &traj.states {
            assert!(s.min_density() >= -1e-14);
        }
        let omega = p.m * p.birth_sup() + p.transfer_sup();
        for w in traj.observables.windows(2) {
            let dt = w[1].t - w[0].t;
            assert!(w[1].total <= w[0].total * (omega * dt).exp() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn grid_convergence_first_order() {
        // pure advection L1 error halves when the grid is refined 2x
        let p = params(0.0, 0.0, 0.0, 0.0);
        let err_at = |n: usize| -> f64 {
            let g = build_grid(1.0, n).unwrap();
            let bump = |center: f64| {
                move |s: f64| (-0.5 * ((s - center) / 0.05_f64).powi(2)).exp() / (0.05 * (2.0 * std::f64::consts::PI).sqrt())
            };
            let initial = PopulationState::from_profiles(&g, bump(0.25), |_| 0.0);
            let traj = simulate(&p, &g, &initial, 0.5, &[0.5]).unwrap();
            let exact = bump(0.75);
            g.centers()
                .iter()
                .zip(&traj.final_state().u1)
                .map(|(&s, &u)| (u - exact(s)).abs() * g.cell_width())
                .sum()
        };
        let ratio = err_at(100) / err_at(200);
        assert!((1.6..=2.4).contains(&ratio), "convergence ratio {ratio}");
    }

    #[test]
    fn outflow_accounting_matches_mass_loss() {
        let g = build_grid(1.0, 100).unwrap();
        let p = params(0.0, 0.7, 0.4, 0.0);
        let stepper = Stepper::new(&p, &g).unwrap();
        let mut state = PopulationState::from_profiles(&g, |_| 1.0, |_| 0.5);
        let m0 = state.total_mass(&g);
        let dt = stepper.stable_dt(0.9);
        let mut out_acc = 0.0;
        for _ in 0..400 {
            // transport acts on the post-reaction state, so account there
            let reacted = stepper.reaction_birth_step(&state, dt).unwrap();
            out_acc += dt * stepper.boundary_outflow_rate(&reacted);
            state = stepper.transport_step(&reacted, dt).unwrap();
        }
        let m_end = state.total_mass(&g);
        assert!(
            ((m0 - m_end) - out_acc).abs() <= 1e-12 * m0,
            "mass loss {} vs accumulated outflow {out_acc}",
            m0 - m_end
        );
    }
}
