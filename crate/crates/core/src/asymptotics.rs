//! Long-time behavior extraction and qualitative condition checks.
//!
//! The model is linear, so solutions grow or decay exponentially and, under
//! irreducibility conditions on the birth and transfer supports, the
//! normalized size profile forgets the initial condition (asynchronous
//! exponential growth). This module fits Malthusian rates from trajectories,
//! compares profiles across initial conditions, computes the nilpotency time
//! `tau(s) = \int_0^s dr / min(gamma1, gamma2)`, and evaluates the
//! sufficient extinction inequality `m B + C < min(inf(mu + c1), inf c2)`
//! together with the support conditions used for irreducibility.

use crate::coeffs::ModelParams;
use crate::error::{Error, Result};
use crate::solver::{simulate, Grid, PopulationState, Trajectory};

/// Points for the trapezoid rule in [`tau`].
const TAU_POINTS: usize = 1000;
/// Dense sample counts for support and infimum queries.
const SUPPORT_SAMPLES: usize = 100;
const INF_SAMPLES: usize = 1000;
/// Trailing window fraction used by [`aeg_check`] rate fits.
const AEG_WINDOW_FRACTION: f64 = 0.25;

/// Fitted exponential growth with the limiting profile.
#[derive(Debug, Clone)]
pub struct GrowthEstimate {
    /// Malthusian rate: slope of `log(total mass)` over the fit window.
    pub rate: f64,
    pub window: (f64, f64),
    pub r_squared: f64,
    /// Final snapshot normalized to unit L1 mass across both phases.
    pub profile_u1: Vec<f64>,
    pub profile_u2: Vec<f64>,
}

/// Upper bound on the time needed to grow from size 0 to `s`:
/// trapezoid integral of `1 / min(gamma1, gamma2)` on [`TAU_POINTS`] points.
pub fn tau(params: &ModelParams, s: f64) -> Result<f64> {
    if !s.is_finite() || s < 0.0 || s > params.m * (1.0 + 1e-12) {
        return Err(Error::Domain {
            what: "size s",
            value: s,
            max: params.m,
        });
    }
    let s = s.min(params.m);
    if s == 0.0 {
        return Ok(0.0);
    }
    let n = TAU_POINTS - 1;
    let h = s / n as f64;
    let f = |x: f64| -> Result<f64> { Ok(1.0 / params.gamma_min(x)?) };
    let mut acc = 0.5 * (f(0.0)? + f(s)?);
    for i in 1..n {
        acc += f(h * i as f64)?;
    }
    Ok(acc * h)
}

/// Least-squares fit of `log(total mass)` against `t` over the trailing
/// `window_fraction` of the trajectory's time range. The profile comes from
/// the final snapshot, L1-normalized over both phases.
pub fn growth_rate(
    trajectory: &Trajectory,
    grid: &Grid,
    window_fraction: f64,
) -> Result<GrowthEstimate> {
    if trajectory.observables.len() < 10 {
        return Err(Error::InsufficientData(format!(
            "growth fit needs at least 10 observable rows, got {}",
            trajectory.observables.len()
        )));
    }
    if !(window_fraction > 0.0 && window_fraction <= 1.0) {
        return Err(Error::Config(format!(
            "window fraction must lie in (0, 1], got {window_fraction}"
        )));
    }
    let t_first = trajectory.observables.first().unwrap().t;
    let t_last = trajectory.observables.last().unwrap().t;
    let t_start = t_last - window_fraction * (t_last - t_first);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for obs in &trajectory.observables {
        if obs.t < t_start {
            continue;
        }
        if obs.total <= 0.0 {
            return Err(Error::ExtinctSignal { t: obs.t });
        }
        xs.push(obs.t);
        ys.push(obs.total.ln());
    }
    if xs.len() < 2 {
        return Err(Error::InsufficientData(
            "growth fit window contains fewer than 2 samples".into(),
        ));
    }
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mean_x).powi(2)).sum();
    let sxy: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - mean_x) * (y - mean_y))
        .sum();
    let slope = sxy / sxx;
    let ss_tot: f64 = ys.iter().map(|y| (y - mean_y).powi(2)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - (mean_y + slope * (x - mean_x))).powi(2))
        .sum();
    let r_squared = if ss_tot <= 1e-30 {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    };

    let last = trajectory.final_state();
    let (profile_u1, profile_u2) = normalized_profile(last, grid)?;
    Ok(GrowthEstimate {
        rate: slope,
        window: (t_start, t_last),
        r_squared,
        profile_u1,
        profile_u2,
    })
}

fn normalized_profile(state: &PopulationState, grid: &Grid) -> Result<(Vec<f64>, Vec<f64>)> {
    let total = state.total_mass(grid);
    if total <= 0.0 {
        return Err(Error::ExtinctSignal { t: state.t });
    }
    Ok((
        state.u1.iter().map(|u| u / total).collect(),
        state.u2.iter().map(|u| u / total).collect(),
    ))
}

/// L1 distance between two normalized profiles over both phases.
pub fn profile_l1_distance(a: (&[f64], &[f64]), b: (&[f64], &[f64]), cell_width: f64) -> f64 {
    let d1: f64 = a.0.iter().zip(b.0).map(|(x, y)| (x - y).abs()).sum();
    let d2: f64 = a.1.iter().zip(b.1).map(|(x, y)| (x - y).abs()).sum();
    cell_width * (d1 + d2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AegVerdict {
    Consistent,
    Inconclusive,
}

impl std::fmt::Display for AegVerdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AegVerdict::Consistent => "AEG-consistent",
            AegVerdict::Inconclusive => "inconclusive",
        })
    }
}

/// Outcome of the two-initial-condition comparison.
#[derive(Debug, Clone)]
pub struct AegReport {
    pub rate_a: f64,
    pub rate_b: f64,
    /// L1 distance between the two final normalized profiles.
    pub profile_distance: f64,
    /// Per-run L1 distance between the normalized profiles at `t_end / 2`
    /// and `t_end`.
    pub self_distance_a: f64,
    pub self_distance_b: f64,
    pub verdict: AegVerdict,
}

/// Simulate two nonnegative, nonzero initial conditions to `t_end` and
/// compare growth rates and normalized profiles. The verdict is
/// "AEG-consistent" when every profile distance and the rate difference
/// fall below `tol`; this is a numerical consistency check, not a proof.
pub fn aeg_check(
    params: &ModelParams,
    grid: &Grid,
    initial_a: &PopulationState,
    initial_b: &PopulationState,
    t_end: f64,
    tol: f64,
) -> Result<AegReport> {
    if !(t_end > 0.0) {
        return Err(Error::Config(format!(
            "aeg check needs t_end > 0, got {t_end}"
        )));
    }
    for (name, state) in [("initial_a", initial_a), ("initial_b", initial_b)] {
        if !state.is_nonnegative() || state.total_mass(grid) <= 0.0 {
            return Err(Error::InvalidState(format!(
                "{name} must be nonnegative with positive mass"
            )));
        }
    }
    let times = [0.5 * t_end, t_end];
    let traj_a = simulate(params, grid, initial_a, t_end, &times)?;
    let traj_b = simulate(params, grid, initial_b, t_end, &times)?;
    aeg_from_trajectories(grid, &traj_a, &traj_b, tol)
}

/// The comparison half of [`aeg_check`], for callers that already hold the
/// two trajectories (each must carry snapshots at `t_end / 2` and `t_end`).
pub fn aeg_from_trajectories(
    grid: &Grid,
    traj_a: &Trajectory,
    traj_b: &Trajectory,
    tol: f64,
) -> Result<AegReport> {
    if !(tol > 0.0) {
        return Err(Error::Config(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let eval = |traj: &Trajectory| -> Result<(GrowthEstimate, f64)> {
        if traj.states.len() < 2 {
            return Err(Error::InsufficientData(
                "aeg comparison needs snapshots at t_end/2 and t_end".into(),
            ));
        }
        let est = growth_rate(traj, grid, AEG_WINDOW_FRACTION)?;
        let mid = &traj.states[traj.states.len() - 2];
        let mid_profile = normalized_profile(mid, grid)?;
        let self_dist = profile_l1_distance(
            (&mid_profile.0, &mid_profile.1),
            (&est.profile_u1, &est.profile_u2),
            grid.cell_width(),
        );
        Ok((est, self_dist))
    };
    let (est_a, self_a) = eval(traj_a)?;
    let (est_b, self_b) = eval(traj_b)?;
    let profile_distance = profile_l1_distance(
        (&est_a.profile_u1, &est_a.profile_u2),
        (&est_b.profile_u1, &est_b.profile_u2),
        grid.cell_width(),
    );
    let consistent = profile_distance < tol
        && self_a < tol
        && self_b < tol
        && (est_a.rate - est_b.rate).abs() < tol;
    Ok(AegReport {
        rate_a: est_a.rate,
        rate_b: est_b.rate,
        profile_distance,
        self_distance_a: self_a,
        self_distance_b: self_b,
        verdict: if consistent {
            AegVerdict::Consistent
        } else {
            AegVerdict::Inconclusive
        },
    })
}

/// Verdict of the sufficient extinction condition
/// `m B + C < min(inf(mu + c1), inf c2)` (strict inequality, implemented
/// verbatim; with `C = max(sup c1, sup c2)` and constant `c2` the condition
/// cannot hold, which the check faithfully reports).
#[derive(Debug, Clone, Copy)]
pub struct ExtinctionCheck {
    pub holds: bool,
    /// `m B + C`.
    pub lhs: f64,
    /// `min(inf(mu + c1), inf c2)`.
    pub rhs: f64,
}

pub fn extinction_sufficient(params: &ModelParams) -> ExtinctionCheck {
    let lhs = params.m * params.birth_sup() + params.transfer_sup();
    let m = params.m;
    let inf_mu_c1 = (0..=INF_SAMPLES)
        .map(|i| {
            let s = m * (i as f64) / (INF_SAMPLES as f64);
            params.mu.value_at(s) + params.c1.value_at(s)
        })
        .fold(f64::INFINITY, f64::min);
    let rhs = inf_mu_c1.min(params.c2.inf_value());
    ExtinctionCheck {
        holds: lhs < rhs,
        lhs,
        rhs,
    }
}

/// Support conditions under which the semigroup is irreducible: births reach
/// the (small offspring, large parent) corner, transfer out starts at size 0
/// and transfer back extends to size m. Each flag is checked at the scales
/// `epsilon`, `epsilon/2`, `epsilon/4` and holds only if all three pass.
#[derive(Debug, Clone, Copy)]
pub struct IrreducibilityFlags {
    pub birth_corner_ok: bool,
    pub c1_at_zero_ok: bool,
    pub c2_at_m_ok: bool,
}

pub fn irreducibility_conditions(
    params: &ModelParams,
    epsilon: f64,
) -> Result<IrreducibilityFlags> {
    let m = params.m;
    if !(epsilon > 0.0 && epsilon <= 0.5 * m) {
        return Err(Error::Config(format!(
            "epsilon must lie in (0, m/2], got {epsilon}"
        )));
    }
    let scales = [epsilon, 0.5 * epsilon, 0.25 * epsilon];

    // midpoint quadrature of beta over [0, eps] x [m - eps, m]
    let corner_integral = |eps: f64| -> f64 {
        let n = SUPPORT_SAMPLES;
        let h = eps / n as f64;
        let mut acc = 0.0;
        for i in 0..n {
            let s = (i as f64 + 0.5) * h;
            for j in 0..n {
                let y = m - eps + (j as f64 + 0.5) * h;
                acc += params.beta.value_at(s, y);
            }
        }
        acc * h * h
    };
    let sup_on = |f: &crate::coeffs::CoefficientFn, lo: f64, hi: f64| -> f64 {
        (0..=SUPPORT_SAMPLES)
            .map(|i| {
                let s = lo + (hi - lo) * (i as f64) / (SUPPORT_SAMPLES as f64);
                f.value_at(s)
            })
            .fold(f64::NEG_INFINITY, f64::max)
    };

    Ok(IrreducibilityFlags {
        birth_corner_ok: scales.iter().all(|&e| corner_integral(e) > 0.0),
        c1_at_zero_ok: scales.iter().all(|&e| sup_on(&params.c1, 0.0, e) > 0.0),
        c2_at_m_ok: scales.iter().all(|&e| sup_on(&params.c2, m - e, m) > 0.0),
    })
}
