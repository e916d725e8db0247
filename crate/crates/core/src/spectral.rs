//! Dominant-eigenvalue machinery for the active phase and the full system.
//!
//! For a rank-1 separable kernel `beta(s, y) = beta1(s) beta2(y)` the
//! eigenvalue problem of the active-phase operator reduces to the scalar
//! characteristic equation `K(lambda) = 1` with
//!
//! ```text
//! K(lambda) = \int_0^m beta2(s) \int_0^s beta1(y)/gamma1(y)
//!             * exp{ -\int_y^s (lambda + mu + c1 + gamma1') / gamma1 dr } dy ds.
//! ```
//!
//! `K` is strictly decreasing in `lambda`, so the unique real root is found
//! by bracket expansion and bisection. For a rank-n sum
//! `beta = sum_k b1_k(s) b2_k(y)` the same reduction yields an n x n matrix
//! `M(lambda)` with entries
//!
//! ```text
//! M_jk(lambda) = \int_0^m b2_j(s) \int_0^s b1_k(y)/gamma1(y) e^{-(E(s)-E(y))} dy ds
//! ```
//!
//! (write the eigenfunction ODE, set `a_k = \int b2_k u1`, solve the linear
//! ODE by an integrating factor and close the system: a nontrivial `a`
//! exists iff `det(I - M(lambda)) = 0`; for n = 1 this is exactly
//! `K(lambda) = 1`). The largest real root of the determinant is located by
//! a downward scan and bisection.
//!
//! Independently of both, [`generator_matrix`] assembles the discretized
//! generator of the full two-phase system (transport + reaction + birth) and
//! [`dominant_eigenpair`] extracts its dominant eigenvalue by shifted power
//! iteration; the matrix is Metzler, so the dominant eigenvalue is real with
//! a nonnegative eigenvector.
//!
//! Quadrature: composite 4-point Gauss-Legendre with a fixed panel count per
//! dimension (panel boundaries are refined at table/steps breakpoints so
//! piecewise-constant envelope factors integrate cleanly), with the exponent
//! integral precomputed as a cumulative trapezoid antiderivative on a fine
//! grid. Writing `E(s) = lambda*T(s) + H(s)` with `T = \int 1/gamma1` and
//! `H = \int (mu + c1 + gamma1')/gamma1` makes re-evaluations along a root
//! search cheap.

use nalgebra::{DMatrix, DVector};

use crate::coeffs::{CoefficientFn, ModelParams};
use crate::error::{Error, Result};
use crate::solver::{Grid, Stepper};

/// Gauss-Legendre panels per integration dimension.
const QUAD_PANELS: usize = 64;
/// Fine-grid refinement factor for the exponent antiderivative.
const FINE_FACTOR: usize = 10;
/// Power-iteration cap.
const MAX_POWER_ITERS: usize = 100_000;
/// How far below its starting point the determinant scan walks before
/// declaring that no root exists.
const SCAN_SPAN: f64 = 256.0;
/// Determinant scan step.
const SCAN_STEP: f64 = 0.5;

const GL4_NODES: [f64; 4] = [
    -0.861_136_311_594_052_6,
    -0.339_981_043_584_856_3,
    0.339_981_043_584_856_3,
    0.861_136_311_594_052_6,
];
const GL4_WEIGHTS: [f64; 4] = [
    0.347_854_845_137_453_85,
    0.652_145_154_862_546_1,
    0.652_145_154_862_546_1,
    0.347_854_845_137_453_85,
];

/// How a spectral estimate was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectralMethod {
    ClosedForm,
    QuadratureBisection,
    RankNDeterminant,
    GeneratorPowerIteration,
}

impl SpectralMethod {
    pub fn tag(&self) -> &'static str {
        match self {
            SpectralMethod::ClosedForm => "closed_form",
            SpectralMethod::QuadratureBisection => "quadrature_bisection",
            SpectralMethod::RankNDeterminant => "rank_n_determinant",
            SpectralMethod::GeneratorPowerIteration => "generator_power_iteration",
        }
    }
}

/// Root solve outcome: the dominant eigenvalue with diagnostics.
#[derive(Debug, Clone)]
pub struct SpectralResult {
    pub lambda_star: f64,
    /// Net reproduction rate of the active phase: `K(0)` for rank-1 kernels,
    /// the Perron root of `M(0)` for rank-n.
    pub k_at_zero: f64,
    /// Final bracket containing the root.
    pub bracket: (f64, f64),
    pub method: SpectralMethod,
    /// Number of characteristic-function evaluations.
    pub iterations: usize,
}

/// Composite 4-point Gauss-Legendre rule on `[0, hi]` with `panels` panels,
/// refined so panel boundaries include every breakpoint in `(0, hi)`.
fn composite_gl(hi: f64, breakpoints: &[f64], panels: usize, out: &mut Vec<(f64, f64)>) {
    out.clear();
    if hi <= 0.0 {
        return;
    }
    let mut bounds = Vec::with_capacity(breakpoints.len() + 2);
    bounds.push(0.0);
    for &b in breakpoints {
        let last = *bounds.last().unwrap();
        if b > last + hi * 1e-14 && b < hi * (1.0 - 1e-14) {
            bounds.push(b);
        }
    }
    bounds.push(hi);
    for w in bounds.windows(2) {
        let (a, b) = (w[0], w[1]);
        let len = b - a;
        let n_p = ((panels as f64 * len / hi).ceil() as usize).max(1);
        for k in 0..n_p {
            let pa = a + len * (k as f64) / (n_p as f64);
            let pb = a + len * ((k + 1) as f64) / (n_p as f64);
            let half = 0.5 * (pb - pa);
            let mid = 0.5 * (pa + pb);
            for q in 0..4 {
                out.push((mid + half * GL4_NODES[q], half * GL4_WEIGHTS[q]));
            }
        }
    }
}

/// Lambda-independent pieces of the active-phase exponent
/// `E(s) = lambda*T(s) + H(s)`, tabulated as cumulative trapezoid sums on a
/// fine grid with a partial-interval correction for off-grid queries.
struct ActivePhase<'a> {
    params: &'a ModelParams,
    step: f64,
    inv_g: Vec<f64>,
    hval: Vec<f64>,
    t_cum: Vec<f64>,
    h_cum: Vec<f64>,
}

impl<'a> ActivePhase<'a> {
    fn new(params: &'a ModelParams) -> Self {
        let n = FINE_FACTOR * QUAD_PANELS;
        let m = params.m;
        let step = m / n as f64;
        let mut inv_g = Vec::with_capacity(n + 1);
        let mut hval = Vec::with_capacity(n + 1);
        for i in 0..=n {
            let x = if i == n { m } else { step * i as f64 };
            let (ig, hv) = Self::integrands(params, x);
            inv_g.push(ig);
            hval.push(hv);
        }
        let mut t_cum = vec![0.0; n + 1];
        let mut h_cum = vec![0.0; n + 1];
        for i in 0..n {
            t_cum[i + 1] = t_cum[i] + 0.5 * step * (inv_g[i] + inv_g[i + 1]);
            h_cum[i + 1] = h_cum[i] + 0.5 * step * (hval[i] + hval[i + 1]);
        }
        Self {
            params,
            step,
            inv_g,
            hval,
            t_cum,
            h_cum,
        }
    }

    fn integrands(params: &ModelParams, x: f64) -> (f64, f64) {
        let g = params.gamma1.value_at(x);
        let num = params.mu.value_at(x) + params.c1.value_at(x) + params.gamma1.derivative_at(x);
        (1.0 / g, num / g)
    }

    /// `(T(x), H(x))` by cumulative trapezoid plus a partial last interval.
    fn exponent_pieces(&self, x: f64) -> (f64, f64) {
        let i = ((x / self.step) as usize).min(self.inv_g.len() - 2);
        let xi = self.step * i as f64;
        let dx = x - xi;
        let (ig, hv) = Self::integrands(self.params, x);
        (
            self.t_cum[i] + 0.5 * dx * (self.inv_g[i] + ig),
            self.h_cum[i] + 0.5 * dx * (self.hval[i] + hv),
        )
    }

    /// Assemble `M_jk(lambda)` for the given separable terms. Entries may be
    /// infinite for very negative `lambda`; callers decide how to react.
    fn char_matrix(&self, terms: &[(CoefficientFn, CoefficientFn)], lambda: f64) -> DMatrix<f64> {
        let nr = terms.len();
        let mut mat = DMatrix::zeros(nr, nr);
        if nr == 0 {
            return mat;
        }
        let m = self.params.m;
        let mut outer_breaks: Vec<f64> = terms
            .iter()
            .flat_map(|(_, b2)| b2.breakpoints().iter().copied())
            .collect();
        outer_breaks.sort_by(f64::total_cmp);
        let mut middle_breaks: Vec<f64> = terms
            .iter()
            .flat_map(|(b1, _)| b1.breakpoints().iter().copied())
            .collect();
        middle_breaks.sort_by(f64::total_cmp);

        let mut outer = Vec::new();
        composite_gl(m, &outer_breaks, QUAD_PANELS, &mut outer);
        let mut middle = Vec::new();
        let mut b2v = vec![0.0; nr];
        let mut b1v = vec![0.0; nr];
        let mut inner = vec![0.0; nr];
        for &(s, ws) in &outer {
            for (j, (_, b2)) in terms.iter().enumerate() {
                b2v[j] = b2.value_at(s);
            }
            if b2v.iter().all(|&v| v == 0.0) {
                continue;
            }
            let (ts, hs) = self.exponent_pieces(s);
            let es = lambda * ts + hs;
            composite_gl(s, &middle_breaks, QUAD_PANELS, &mut middle);
            inner.fill(0.0);
            for &(y, wy) in &middle {
                for (k, (b1, _)) in terms.iter().enumerate() {
                    b1v[k] = b1.value_at(y);
                }
                if b1v.iter().all(|&v| v == 0.0) {
                    continue;
                }
                let (ty, hy) = self.exponent_pieces(y);
                let ey = lambda * ty + hy;
                let common = wy * (-(es - ey)).exp() / self.params.gamma1.value_at(y);
                for k in 0..nr {
                    inner[k] += common * b1v[k];
                }
            }
            for j in 0..nr {
                if b2v[j] == 0.0 {
                    continue;
                }
                let wj = ws * b2v[j];
                for k in 0..nr {
                    mat[(j, k)] += wj * inner[k];
                }
            }
        }
        mat
    }
}

fn separable_terms(params: &ModelParams) -> Result<&[(CoefficientFn, CoefficientFn)]> {
    params.beta.separable_terms().ok_or_else(|| {
        Error::MethodMismatch(
            "characteristic equation needs a separable kernel; bound general kernels \
             with separable_envelope first"
                .into(),
        )
    })
}

fn rank1_terms(params: &ModelParams) -> Result<&[(CoefficientFn, CoefficientFn)]> {
    let terms = separable_terms(params)?;
    if terms.len() != 1 {
        return Err(Error::MethodMismatch(format!(
            "K(lambda) is defined for rank-1 separable kernels; this kernel has rank {} \
             (use the rank-n determinant path)",
            terms.len()
        )));
    }
    Ok(terms)
}

/// Evaluate the scalar characteristic function `K(lambda)` for a rank-1
/// separable kernel.
pub fn k_of_lambda(params: &ModelParams, lambda: f64) -> Result<f64> {
    let terms = rank1_terms(params)?;
    let phase = ActivePhase::new(params);
    let k = phase.char_matrix(terms, lambda)[(0, 0)];
    if !k.is_finite() {
        return Err(Error::NonFinite("K(lambda) quadrature"));
    }
    Ok(k)
}

/// Entries `M_jk(lambda)` of the rank-n characteristic matrix.
pub fn rank_n_char_matrix(params: &ModelParams, lambda: f64) -> Result<DMatrix<f64>> {
    let terms = separable_terms(params)?;
    let phase = ActivePhase::new(params);
    let mat = phase.char_matrix(terms, lambda);
    if mat.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("rank-n characteristic matrix"));
    }
    Ok(mat)
}

/// Solve `K(lambda) = 1` by bracket expansion (doubling from `[-1, 1]`,
/// capped at `|lambda| = 1e6`) followed by bisection to width `tol`.
pub fn solve_lambda_star(params: &ModelParams, tol: f64) -> Result<SpectralResult> {
    if !(tol > 0.0) {
        return Err(Error::Config(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let terms = rank1_terms(params)?;
    if params.beta.is_trivial() {
        return Err(Error::NoRoot(
            "birth kernel is trivial, K(lambda) = 0 has no root".into(),
        ));
    }
    let phase = ActivePhase::new(params);
    let mut evals = 0usize;
    let mut k = |lam: f64| {
        evals += 1;
        phase.char_matrix(terms, lam)[(0, 0)]
    };

    let k_at_zero = k(0.0);
    if !k_at_zero.is_finite() {
        return Err(Error::NonFinite("K(0) quadrature"));
    }
    // K is strictly decreasing: expand to K(lo) > 1 > K(hi). Overflow of K
    // far to the left counts as "> 1".
    let (mut lo, mut hi) = (-1.0, 1.0);
    while !(k(lo) > 1.0) {
        lo *= 2.0;
        if lo < -1e6 {
            return Err(Error::NoRoot(format!(
                "K never exceeds 1 down to lambda = {lo} (kernel effectively zero)"
            )));
        }
    }
    while !(k(hi) < 1.0) {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::NoRoot(format!(
                "K never drops below 1 up to lambda = {hi}"
            )));
        }
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if k(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(SpectralResult {
        lambda_star: 0.5 * (lo + hi),
        k_at_zero,
        bracket: (lo, hi),
        method: SpectralMethod::QuadratureBisection,
        iterations: evals,
    })
}

fn max_abs_row_sum(m: &DMatrix<f64>) -> f64 {
    (0..m.nrows())
        .map(|i| m.row(i).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn determinant_i_minus(m: &DMatrix<f64>) -> Result<f64> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("rank-n characteristic matrix"));
    }
    let n = m.nrows();
    let a = DMatrix::identity(n, n) - m;
    Ok(a.lu().determinant())
}

/// Largest real root of `det(I - M(lambda)) = 0` for a rank-n separable
/// kernel: start above every root (row sums of `M` below 1/2 put the Perron
/// root of `M`, which decreases in lambda, below 1), scan downward in steps
/// of 0.5 until the determinant changes sign, then bisect. Scanning from
/// above targets the dominant root; a tangency without sign change would be
/// missed, which is the documented limitation of this heuristic.
pub fn solve_rank_n_root(params: &ModelParams, tol: f64) -> Result<SpectralResult> {
    if !(tol > 0.0) {
        return Err(Error::Config(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let terms = separable_terms(params)?;
    if params.beta.is_trivial() {
        return Err(Error::NoRoot(
            "birth kernel is trivial, det(I - M) = 1 for every lambda".into(),
        ));
    }
    let phase = ActivePhase::new(params);
    let mut evals = 0usize;

    let k_at_zero = {
        let m0 = phase.char_matrix(terms, 0.0);
        if m0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("rank-n characteristic matrix at 0"));
        }
        dominant_eigenpair(&m0, 1e-12)?.0
    };

    let mut hi = 1.0;
    let mut m_hi = phase.char_matrix(terms, hi);
    evals += 1;
    while !(max_abs_row_sum(&m_hi) < 0.5) {
        hi *= 2.0;
        if hi > 1e9 {
            return Err(Error::NoRoot(
                "characteristic matrix does not decay for large lambda".into(),
            ));
        }
        m_hi = phase.char_matrix(terms, hi);
        evals += 1;
    }
    let start = hi;
    let floor = start - SCAN_SPAN;
    let mut f_hi = determinant_i_minus(&m_hi)?;
    debug_assert!(f_hi > 0.0);
    let mut lo = hi;
    let mut f_lo = f_hi;
    while f_lo > 0.0 {
        hi = lo;
        f_hi = f_lo;
        lo -= SCAN_STEP;
        if lo < floor {
            return Err(Error::NoRoot(format!(
                "no sign change of det(I - M(lambda)) in [{floor:.1}, {start:.1}]"
            )));
        }
        f_lo = determinant_i_minus(&phase.char_matrix(terms, lo))?;
        evals += 1;
    }
    let _ = f_hi;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let fm = determinant_i_minus(&phase.char_matrix(terms, mid))?;
        evals += 1;
        if fm > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(SpectralResult {
        lambda_star: 0.5 * (lo + hi),
        k_at_zero,
        bracket: (lo, hi),
        method: SpectralMethod::RankNDeterminant,
        iterations: evals,
    })
}

/// Assemble the discretized generator of the full system: the linear map
/// whose action on stacked densities `(u1, u2)` is the combined right-hand
/// side used by the splitting solver (upwind flux differences plus per-cell
/// reaction and midpoint birth), without time stepping.
pub fn generator_matrix(params: &ModelParams, grid: &Grid) -> Result<DMatrix<f64>> {
    let stepper = Stepper::new(params, grid)?;
    let n = grid.n_cells();
    let ds = grid.cell_width();
    let (f1, f2) = stepper.face_speeds();
    let (mu, c1, c2) = stepper.cell_rates();
    let birth = stepper.birth_weights();
    let mut a = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        a[(i, i)] = -f1[i + 1] / ds - mu[i] - c1[i];
        if i > 0 {
            a[(i, i - 1)] = f1[i] / ds;
        }
        a[(i, n + i)] = c2[i];
        if !birth.is_empty() {
            for j in 0..n {
                a[(i, j)] += birth[i * n + j];
            }
        }
        a[(n + i, n + i)] = -f2[i + 1] / ds - c2[i];
        if i > 0 {
            a[(n + i, n + i - 1)] = f2[i] / ds;
        }
        a[(n + i, i)] = c1[i];
    }
    Ok(a)
}

/// Dominant eigenpair of a Metzler matrix by power iteration on
/// `M + sigma I` with `sigma = |min diagonal| + 1` (making the iteration
/// matrix nonnegative, so its spectral radius is the shifted dominant
/// eigenvalue). Converged when successive eigenvalue estimates differ by
/// less than `tol` and the L1 residual drops below `tol * ||v||_1`.
pub fn dominant_eigenpair(matrix: &DMatrix<f64>, tol: f64) -> Result<(f64, Vec<f64>)> {
    let n = matrix.nrows();
    if n == 0 || matrix.ncols() != n {
        return Err(Error::MethodMismatch(format!(
            "power iteration needs a square nonempty matrix, got {}x{}",
            matrix.nrows(),
            matrix.ncols()
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::Config(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let min_diag = matrix
        .diagonal()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let sigma = min_diag.abs() + 1.0;
    let mut v = DVector::from_element(n, 1.0 / n as f64);
    let mut prev = f64::NAN;
    for _ in 0..MAX_POWER_ITERS {
        let mut w = matrix * &v;
        w.axpy(sigma, &v, 1.0);
        let rho = w.iter().map(|x| x.abs()).sum::<f64>();
        if rho == 0.0 {
            // (M + sigma I) v = 0: v is an exact eigenvector for -sigma.
            return Ok((-sigma, v.iter().copied().collect()));
        }
        if !rho.is_finite() {
            return Err(Error::NonFinite("power iteration"));
        }
        let resid: f64 = w
            .iter()
            .zip(v.iter())
            .map(|(wi, vi)| (wi - rho * vi).abs())
            .sum();
        let converged = (rho - prev).abs() < tol && resid < tol;
        v = w / rho;
        if converged {
            return Ok((rho - sigma, v.iter().copied().collect()));
        }
        prev = rho;
    }
    Err(Error::NoConvergence {
        iterations: MAX_POWER_ITERS,
    })
}
