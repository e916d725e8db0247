//! Coefficient functions and birth kernels on the size interval `[0, m]`.
//!
//! Houses the model ingredients: growth speeds `gamma1, gamma2` (strictly
//! positive), rates `mu, c1, c2` (nonnegative), and the fertility kernel
//! `beta(s, y)` giving the rate at which a parent of size `y` produces
//! offspring of size `s`. Kernels are either tabulated bivariate functions
//! with bilinear interpolation or sums of separable products
//! `sum_k b1_k(s) b2_k(y)`; the latter includes the piecewise-constant
//! envelopes used to bound a general kernel from below or above.

use crate::error::{Error, Result};

/// Relative slack on domain checks so face coordinates computed as
/// `i * m / n` stay inside `[0, m]` despite rounding.
const DOMAIN_SLACK: f64 = 1e-12;

/// Sample count for the sampled supremum/infimum of a Gaussian bump.
const GAUSSIAN_EXTREMUM_SAMPLES: usize = 10_000;

/// Sample count per axis when locating cell extrema of a kernel.
const ENVELOPE_CELL_SAMPLES: usize = 21;

/// Functional form of a scalar coefficient on `[0, m]`.
#[derive(Debug, Clone, PartialEq)]
pub enum Form {
    Constant {
        value: f64,
    },
    /// `a + b * s`.
    Linear {
        a: f64,
        b: f64,
    },
    /// `height * exp(-(s - center)^2 / (2 width^2))`.
    GaussianBump {
        center: f64,
        width: f64,
        height: f64,
    },
    /// Piecewise-linear interpolation of `values` at ascending `knots`
    /// spanning `[0, m]` exactly.
    Table {
        knots: Vec<f64>,
        values: Vec<f64>,
    },
    /// Piecewise-constant: `values[i]` on `[edges[i], edges[i+1])`, with the
    /// last segment closed at `m`. Used for indicator factors of envelopes.
    Steps {
        edges: Vec<f64>,
        values: Vec<f64>,
    },
}

/// Role a coefficient plays in the model, deciding its sign constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    /// Growth speeds must be strictly positive on `[0, m]`.
    GrowthRate,
    /// Mortality/transition rates and initial densities must be nonnegative.
    Rate,
}

/// A scalar function of size on `[0, m]` with evaluation, derivative and
/// extremum queries.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientFn {
    form: Form,
    domain_max: f64,
}

fn require_finite(x: f64, what: &str) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidCoefficient(format!("{what} must be finite")))
    }
}

impl CoefficientFn {
    pub fn constant(value: f64, domain_max: f64) -> Result<Self> {
        require_finite(value, "constant value")?;
        Self::new(Form::Constant { value }, domain_max)
    }

    pub fn linear(a: f64, b: f64, domain_max: f64) -> Result<Self> {
        require_finite(a, "linear coefficient a")?;
        require_finite(b, "linear coefficient b")?;
        Self::new(Form::Linear { a, b }, domain_max)
    }

    pub fn gaussian_bump(center: f64, width: f64, height: f64, domain_max: f64) -> Result<Self> {
        require_finite(center, "bump center")?;
        require_finite(width, "bump width")?;
        require_finite(height, "bump height")?;
        if width <= 0.0 {
            return Err(Error::InvalidCoefficient(
                "gaussian bump width must be positive".into(),
            ));
        }
        Self::new(
            Form::GaussianBump {
                center,
                width,
                height,
            },
            domain_max,
        )
    }

    /// Table with ascending knots spanning `[0, m]`; `m` is taken from the
    /// last knot.
    pub fn table(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if knots.len() < 2 || knots.len() != values.len() {
            return Err(Error::InvalidCoefficient(format!(
                "table needs matching knots/values with at least 2 entries, got {}/{}",
                knots.len(),
                values.len()
            )));
        }
        for (k, v) in knots.iter().zip(values.iter()) {
            require_finite(*k, "table knot")?;
            require_finite(*v, "table value")?;
        }
        if knots[0] != 0.0 {
            return Err(Error::InvalidCoefficient(
                "table knots must start at 0 (span [0, m] exactly)".into(),
            ));
        }
        if knots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidCoefficient(
                "table knots must be strictly ascending".into(),
            ));
        }
        let domain_max = *knots.last().unwrap();
        Self::new(Form::Table { knots, values }, domain_max)
    }

    /// Piecewise-constant steps with ascending edges spanning `[0, m]`;
    /// one value per segment.
    pub fn steps(edges: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if edges.len() < 2 || values.len() + 1 != edges.len() {
            return Err(Error::InvalidCoefficient(format!(
                "steps need one value per segment, got {} edges and {} values",
                edges.len(),
                values.len()
            )));
        }
        for e in &edges {
            require_finite(*e, "steps edge")?;
        }
        for v in &values {
            require_finite(*v, "steps value")?;
        }
        if edges[0] != 0.0 {
            return Err(Error::InvalidCoefficient(
                "steps edges must start at 0 (span [0, m] exactly)".into(),
            ));
        }
        if edges.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidCoefficient(
                "steps edges must be strictly ascending".into(),
            ));
        }
        let domain_max = *edges.last().unwrap();
        Self::new(Form::Steps { edges, values }, domain_max)
    }

    fn new(form: Form, domain_max: f64) -> Result<Self> {
        if !domain_max.is_finite() || domain_max <= 0.0 {
            return Err(Error::InvalidCoefficient(format!(
                "domain maximum m must be positive and finite, got {domain_max}"
            )));
        }
        Ok(Self { form, domain_max })
    }

    pub fn form(&self) -> &Form {
        &self.form
    }

    pub fn domain_max(&self) -> f64 {
        self.domain_max
    }

    fn check_domain(&self, s: f64, what: &'static str) -> Result<f64> {
        let m = self.domain_max;
        let slack = m * DOMAIN_SLACK;
        if !s.is_finite() || s < -slack || s > m + slack {
            return Err(Error::Domain {
                what,
                value: s,
                max: m,
            });
        }
        Ok(s.clamp(0.0, m))
    }

    /// Evaluate at `s in [0, m]`.
    pub fn eval(&self, s: f64) -> Result<f64> {
        let s = self.check_domain(s, "size s")?;
        Ok(self.value_at(s))
    }

    /// Evaluation without the domain check; `s` must already lie in `[0, m]`.
    pub(crate) fn value_at(&self, s: f64) -> f64 {
        match &self.form {
            Form::Constant { value } => *value,
            Form::Linear { a, b } => a + b * s,
            Form::GaussianBump {
                center,
                width,
                height,
            } => {
                let z = (s - center) / width;
                height * (-0.5 * z * z).exp()
            }
            Form::Table { knots, values } => {
                let i = segment_index(knots, s);
                let (k0, k1) = (knots[i], knots[i + 1]);
                let t = (s - k0) / (k1 - k0);
                values[i] + t * (values[i + 1] - values[i])
            }
            Form::Steps { edges, values } => {
                let i = segment_index(edges, s);
                values[i]
            }
        }
    }

    /// Derivative at `s`. Analytic for smooth forms; the slope of the
    /// containing segment for tables (left-segment convention at interior
    /// knots), and zero a.e. for steps.
    pub fn derivative(&self, s: f64) -> Result<f64> {
        let s = self.check_domain(s, "size s")?;
        Ok(self.derivative_at(s))
    }

    pub(crate) fn derivative_at(&self, s: f64) -> f64 {
        match &self.form {
            Form::Constant { .. } => 0.0,
            Form::Linear { b, .. } => *b,
            Form::GaussianBump {
                center,
                width,
                height,
            } => {
                let z = (s - center) / width;
                -height * z / width * (-0.5 * z * z).exp()
            }
            Form::Table { knots, values } => {
                // Left-segment convention: at an interior knot take the slope
                // of the segment ending there.
                let i = left_segment_index(knots, s);
                (values[i + 1] - values[i]) / (knots[i + 1] - knots[i])
            }
            Form::Steps { .. } => 0.0,
        }
    }

    /// Supremum over `[0, m]`: exact for constant/linear/table/steps forms,
    /// a dense-sample approximation for Gaussian bumps.
    pub fn sup_norm(&self) -> f64 {
        self.extremum(true)
    }

    /// Infimum over `[0, m]`; same exactness caveats as [`sup_norm`].
    ///
    /// [`sup_norm`]: CoefficientFn::sup_norm
    pub fn inf_value(&self) -> f64 {
        self.extremum(false)
    }

    fn extremum(&self, want_max: bool) -> f64 {
        let fold = |acc: f64, x: f64| if want_max { acc.max(x) } else { acc.min(x) };
        match &self.form {
            Form::Constant { value } => *value,
            Form::Linear { a, b } => fold(*a, a + b * self.domain_max),
            Form::GaussianBump { .. } => {
                let n = GAUSSIAN_EXTREMUM_SAMPLES;
                let mut acc = self.value_at(0.0);
                for i in 1..=n {
                    let s = self.domain_max * (i as f64) / (n as f64);
                    acc = fold(acc, self.value_at(s));
                }
                acc
            }
            Form::Table { values, .. } | Form::Steps { values, .. } => {
                values.iter().copied().fold(values[0], fold)
            }
        }
    }

    /// Validate the sign constraint of the given role.
    pub fn validate_role(&self, role: Role, name: &str) -> Result<()> {
        match role {
            Role::GrowthRate => {
                if self.inf_value() <= 0.0 {
                    return Err(Error::InvalidCoefficient(format!(
                        "{name} must be strictly positive on [0, m]"
                    )));
                }
            }
            Role::Rate => {
                if self.inf_value() < 0.0 {
                    return Err(Error::InvalidCoefficient(format!(
                        "{name} must be nonnegative on [0, m]"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Interior discontinuity/kink locations, used to align quadrature panels.
    pub(crate) fn breakpoints(&self) -> &[f64] {
        match &self.form {
            Form::Table { knots, .. } => &knots[1..knots.len() - 1],
            Form::Steps { edges, .. } => &edges[1..edges.len() - 1],
            _ => &[],
        }
    }
}

/// Index of the segment containing `s`: largest `i` with `grid[i] <= s`,
/// capped at the last segment.
fn segment_index(grid: &[f64], s: f64) -> usize {
    let i = grid.partition_point(|&k| k <= s);
    i.saturating_sub(1).min(grid.len() - 2)
}

/// Largest `i` with `grid[i] < s` (left-segment convention), clamped to a
/// valid segment; `s <= grid[0]` selects the first segment.
fn left_segment_index(grid: &[f64], s: f64) -> usize {
    let i = grid.partition_point(|&k| k < s);
    i.saturating_sub(1).min(grid.len() - 2)
}

/// Which side a separable envelope bounds the kernel from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvelopeSide {
    Lower,
    Upper,
}

/// Fertility kernel `beta(s, y)` on `[0, m]^2`.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelVariant {
    /// Values on a tensor grid, `values[i][j] = beta(s_knots[i], y_knots[j])`,
    /// interpolated bilinearly.
    General {
        s_knots: Vec<f64>,
        y_knots: Vec<f64>,
        values: Vec<Vec<f64>>,
    },
    /// `sum_k b1_k(s) * b2_k(y)` with nonnegative factors.
    SeparableSum {
        terms: Vec<(CoefficientFn, CoefficientFn)>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BirthKernel {
    variant: KernelVariant,
    domain_max: f64,
}

impl BirthKernel {
    pub fn general(s_knots: Vec<f64>, y_knots: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        let check_axis = |knots: &[f64], axis: &str| -> Result<f64> {
            if knots.len() < 2 {
                return Err(Error::InvalidKernel(format!(
                    "{axis} grid needs at least 2 knots"
                )));
            }
            if knots.iter().any(|k| !k.is_finite()) {
                return Err(Error::InvalidKernel(format!("{axis} knots must be finite")));
            }
            if knots[0] != 0.0 || knots.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::InvalidKernel(format!(
                    "{axis} knots must ascend strictly from 0"
                )));
            }
            Ok(*knots.last().unwrap())
        };
        let ms = check_axis(&s_knots, "s")?;
        let my = check_axis(&y_knots, "y")?;
        if ms != my {
            return Err(Error::InvalidKernel(format!(
                "kernel grid must span the same [0, m] on both axes, got {ms} vs {my}"
            )));
        }
        if values.len() != s_knots.len() || values.iter().any(|row| row.len() != y_knots.len()) {
            return Err(Error::InvalidKernel(
                "kernel values must form an (s_knots x y_knots) grid".into(),
            ));
        }
        for row in &values {
            for v in row {
                if !v.is_finite() || *v < 0.0 {
                    return Err(Error::InvalidKernel(
                        "beta must be finite and nonnegative everywhere".into(),
                    ));
                }
            }
        }
        Ok(Self {
            variant: KernelVariant::General {
                s_knots,
                y_knots,
                values,
            },
            domain_max: ms,
        })
    }

    /// Rank-n separable sum; factors must be nonnegative and share `m`.
    pub fn separable(terms: Vec<(CoefficientFn, CoefficientFn)>, domain_max: f64) -> Result<Self> {
        if !domain_max.is_finite() || domain_max <= 0.0 {
            return Err(Error::InvalidKernel(format!(
                "domain maximum m must be positive and finite, got {domain_max}"
            )));
        }
        for (k, (b1, b2)) in terms.iter().enumerate() {
            if b1.domain_max() != domain_max || b2.domain_max() != domain_max {
                return Err(Error::InvalidKernel(format!(
                    "separable term {k} does not span [0, {domain_max}]"
                )));
            }
            b1.validate_role(Role::Rate, &format!("separable factor b1[{k}]"))?;
            b2.validate_role(Role::Rate, &format!("separable factor b2[{k}]"))?;
        }
        Ok(Self {
            variant: KernelVariant::SeparableSum { terms },
            domain_max,
        })
    }

    /// Convenience: rank-1 kernel `b1(s) * b2(y)`.
    pub fn separable_rank1(b1: CoefficientFn, b2: CoefficientFn) -> Result<Self> {
        let m = b1.domain_max();
        Self::separable(vec![(b1, b2)], m)
    }

    pub fn variant(&self) -> &KernelVariant {
        &self.variant
    }

    pub fn domain_max(&self) -> f64 {
        self.domain_max
    }

    /// Separable factors when the kernel is a separable sum.
    pub fn separable_terms(&self) -> Option<&[(CoefficientFn, CoefficientFn)]> {
        match &self.variant {
            KernelVariant::SeparableSum { terms } => Some(terms),
            KernelVariant::General { .. } => None,
        }
    }

    /// Evaluate `beta(s, y)` for `(s, y) in [0, m]^2`.
    pub fn eval(&self, s: f64, y: f64) -> Result<f64> {
        let m = self.domain_max;
        let slack = m * DOMAIN_SLACK;
        let inside = |x: f64| x.is_finite() && x >= -slack && x <= m + slack;
        if !inside(s) {
            return Err(Error::Domain {
                what: "offspring size s",
                value: s,
                max: m,
            });
        }
        if !inside(y) {
            return Err(Error::Domain {
                what: "parent size y",
                value: y,
                max: m,
            });
        }
        Ok(self.value_at(s.clamp(0.0, m), y.clamp(0.0, m)))
    }

    pub(crate) fn value_at(&self, s: f64, y: f64) -> f64 {
        match &self.variant {
            KernelVariant::General {
                s_knots,
                y_knots,
                values,
            } => {
                let i = segment_index(s_knots, s);
                let j = segment_index(y_knots, y);
                let ts = (s - s_knots[i]) / (s_knots[i + 1] - s_knots[i]);
                let ty = (y - y_knots[j]) / (y_knots[j + 1] - y_knots[j]);
                let v00 = values[i][j];
                let v01 = values[i][j + 1];
                let v10 = values[i + 1][j];
                let v11 = values[i + 1][j + 1];
                v00 * (1.0 - ts) * (1.0 - ty)
                    + v10 * ts * (1.0 - ty)
                    + v01 * (1.0 - ts) * ty
                    + v11 * ts * ty
            }
            KernelVariant::SeparableSum { terms } => terms
                .iter()
                .map(|(b1, b2)| b1.value_at(s) * b2.value_at(y))
                .sum(),
        }
    }

    /// Upper bound for `B = sup beta`: exact grid maximum for tabulated
    /// kernels (bilinear extrema sit at nodes), factor-wise bound
    /// `sum_k sup(b1_k) sup(b2_k)` for separable sums.
    pub fn sup_bound(&self) -> f64 {
        match &self.variant {
            KernelVariant::General { values, .. } => values
                .iter()
                .flat_map(|row| row.iter().copied())
                .fold(0.0, f64::max),
            KernelVariant::SeparableSum { terms } => terms
                .iter()
                .map(|(b1, b2)| b1.sup_norm() * b2.sup_norm())
                .sum(),
        }
    }

    /// True when the kernel vanishes identically.
    pub fn is_trivial(&self) -> bool {
        self.sup_bound() == 0.0
    }

    /// Bound the kernel from below or above by a rank-`n^2` separable sum of
    /// indicator products, piecewise constant on an `n x n` partition of
    /// `[0, m]^2`. Cell extrema are located by dense sampling (inclusive of
    /// cell corners); cells with value zero are dropped.
    pub fn separable_envelope(&self, n: usize, side: EnvelopeSide) -> Result<BirthKernel> {
        if n == 0 {
            return Err(Error::InvalidKernel(
                "envelope partition count must be at least 1".into(),
            ));
        }
        let m = self.domain_max;
        let edges: Vec<f64> = (0..=n).map(|i| m * (i as f64) / (n as f64)).collect();
        let g = ENVELOPE_CELL_SAMPLES;
        let mut terms = Vec::new();
        for p in 0..n {
            for q in 0..n {
                let mut ext = f64::NAN;
                for a in 0..g {
                    let s = edges[p] + (edges[p + 1] - edges[p]) * (a as f64) / ((g - 1) as f64);
                    for b in 0..g {
                        let y =
                            edges[q] + (edges[q + 1] - edges[q]) * (b as f64) / ((g - 1) as f64);
                        let v = self.value_at(s, y);
                        ext = match side {
                            _ if ext.is_nan() => v,
                            EnvelopeSide::Lower => ext.min(v),
                            EnvelopeSide::Upper => ext.max(v),
                        };
                    }
                }
                if ext > 0.0 {
                    terms.push((
                        indicator_steps(&edges, p, ext)?,
                        indicator_steps(&edges, q, 1.0)?,
                    ));
                }
            }
        }
        BirthKernel::separable(terms, m)
    }
}

/// Steps function equal to `value` on `[edges[cell], edges[cell + 1])` and
/// zero elsewhere.
fn indicator_steps(edges: &[f64], cell: usize, value: f64) -> Result<CoefficientFn> {
    let mut e = vec![edges[0]];
    let mut v = Vec::new();
    if cell > 0 {
        e.push(edges[cell]);
        v.push(0.0);
    }
    e.push(edges[cell + 1]);
    v.push(value);
    if cell + 1 < edges.len() - 1 {
        e.push(*edges.last().unwrap());
        v.push(0.0);
    }
    CoefficientFn::steps(e, v)
}

/// Full validated parameter bundle of the model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub gamma1: CoefficientFn,
    pub gamma2: CoefficientFn,
    pub mu: CoefficientFn,
    pub c1: CoefficientFn,
    pub c2: CoefficientFn,
    pub beta: BirthKernel,
    pub m: f64,
}

impl ModelParams {
    /// Validates every component and that all domains agree on `m`.
    ///
    /// The kernel may be identically zero: transport-only scenarios
    /// (conservation, nilpotency) need it, and the spectral solvers report
    /// a no-root condition for trivial kernels instead.
    pub fn new(
        gamma1: CoefficientFn,
        gamma2: CoefficientFn,
        mu: CoefficientFn,
        c1: CoefficientFn,
        c2: CoefficientFn,
        beta: BirthKernel,
        m: f64,
    ) -> Result<Self> {
        if !m.is_finite() || m <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "maximal size m must be positive and finite, got {m}"
            )));
        }
        for (name, f) in [
            ("gamma1", &gamma1),
            ("gamma2", &gamma2),
            ("mu", &mu),
            ("c1", &c1),
            ("c2", &c2),
        ] {
            if f.domain_max() != m {
                return Err(Error::InvalidParams(format!(
                    "{name} is defined on [0, {}] but m = {m}",
                    f.domain_max()
                )));
            }
        }
        if beta.domain_max() != m {
            return Err(Error::InvalidParams(format!(
                "beta is defined on [0, {}]^2 but m = {m}",
                beta.domain_max()
            )));
        }
        gamma1.validate_role(Role::GrowthRate, "gamma1")?;
        gamma2.validate_role(Role::GrowthRate, "gamma2")?;
        mu.validate_role(Role::Rate, "mu")?;
        c1.validate_role(Role::Rate, "c1")?;
        c2.validate_role(Role::Rate, "c2")?;
        Ok(Self {
            gamma1,
            gamma2,
            mu,
            c1,
            c2,
            beta,
            m,
        })
    }

    /// `gamma(s) = min(gamma1(s), gamma2(s))`.
    pub fn gamma_min(&self, s: f64) -> Result<f64> {
        Ok(self.gamma1.eval(s)?.min(self.gamma2.eval(s)?))
    }

    /// `B = sup beta` (upper bound for separable sums; see
    /// [`BirthKernel::sup_bound`]).
    pub fn birth_sup(&self) -> f64 {
        self.beta.sup_bound()
    }

    /// `C = max(sup c1, sup c2)`.
    pub fn transfer_sup(&self) -> f64 {
        self.c1.sup_norm().max(self.c2.sup_norm())
    }
}
