//! The free-boundary flux law `G(b, nu)`, two-plane solutions, the comparison
//! functions deployed by the viscosity arguments, and discrete maximum
//! principle checks.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{dot, norm, Grid2D, Point, ScalarField2D};
use crate::operators::{apply_operator, EllipticOperator, SmoothedNonlinearity};

const UNIT_TOL: f64 = 1e-9;

fn check_unit(nu: Point) -> Result<()> {
    if (norm(nu) - 1.0).abs() > UNIT_TOL {
        return Err(Error::NonUnitNormal { x: nu[0], y: nu[1] });
    }
    Ok(())
}

/// User-supplied flux law with sampled certification.
#[derive(Clone)]
pub struct CustomFluxLaw {
    pub eval: Arc<dyn Fn(f64, Point) -> f64 + Send + Sync>,
}

impl std::fmt::Debug for CustomFluxLaw {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("CustomFluxLaw {{ .. }}")
    }
}

/// The jump relation `u_nu^+ = G(u_nu^-, nu)` between inward normal slopes.
///
/// `BellmanReduced` is the law of the reduced operator pair:
/// `G(b, nu) = (1 + (m-1) nu2^2) b`.
#[derive(Debug, Clone)]
pub enum FluxLaw {
    BellmanReduced { m: f64 },
    Custom(CustomFluxLaw),
}

impl FluxLaw {
    pub fn reduced(m: f64) -> Result<Self> {
        if !(m.is_finite() && m >= 1.0) {
            return Err(Error::InvalidAnisotropy { m });
        }
        Ok(FluxLaw::BellmanReduced { m })
    }

    pub fn custom<F: Fn(f64, Point) -> f64 + Send + Sync + 'static>(f: F) -> Self {
        FluxLaw::Custom(CustomFluxLaw { eval: Arc::new(f) })
    }

    /// `G(b, nu)`.
    pub fn eval(&self, b: f64, nu: Point) -> Result<f64> {
        check_unit(nu)?;
        if !(b.is_finite() && b >= 0.0) {
            return Err(Error::NegativeSlope { b });
        }
        Ok(match self {
            FluxLaw::BellmanReduced { m } => (1.0 + (m - 1.0) * nu[1] * nu[1]) * b,
            FluxLaw::Custom(c) => (c.eval)(b, nu),
        })
    }

    /// `dG/db`.
    pub fn g1(&self, b: f64, nu: Point) -> Result<f64> {
        check_unit(nu)?;
        Ok(match self {
            FluxLaw::BellmanReduced { m } => 1.0 + (m - 1.0) * nu[1] * nu[1],
            FluxLaw::Custom(c) => {
                let d = (1e-6 * b.abs()).max(1e-8);
                ((c.eval)(b + d, nu) - (c.eval)((b - d).max(0.0), nu)) / (d + d.min(b))
            }
        })
    }

    /// Gradient of `G` in the direction argument.
    pub fn g_nu(&self, b: f64, nu: Point) -> Result<Point> {
        check_unit(nu)?;
        Ok(match self {
            FluxLaw::BellmanReduced { m } => [0.0, 2.0 * (m - 1.0) * b * nu[1]],
            FluxLaw::Custom(c) => {
                let d = 1e-7;
                let gx = ((c.eval)(b, [nu[0] + d, nu[1]]) - (c.eval)(b, [nu[0] - d, nu[1]]))
                    / (2.0 * d);
                let gy = ((c.eval)(b, [nu[0], nu[1] + d]) - (c.eval)(b, [nu[0], nu[1] - d]))
                    / (2.0 * d);
                [gx, gy]
            }
        })
    }

    /// Coercivity floor `omega(b) = min over directions of G(b, nu)`.
    pub fn omega_floor(&self, b: f64) -> Result<f64> {
        match self {
            FluxLaw::BellmanReduced { .. } => Ok(b),
            FluxLaw::Custom(c) => {
                let mut lo = f64::INFINITY;
                for k in 0..64 {
                    let t = 2.0 * std::f64::consts::PI * k as f64 / 64.0;
                    lo = lo.min((c.eval)(b, [t.cos(), t.sin()]));
                }
                Ok(lo)
            }
        }
    }

    /// Solve `G(b, nu) = a` for `b >= 0` (monotone bisection for custom laws).
    pub fn invert(&self, a: f64, nu: Point) -> Result<f64> {
        check_unit(nu)?;
        match self {
            FluxLaw::BellmanReduced { m } => Ok(a / (1.0 + (m - 1.0) * nu[1] * nu[1])),
            FluxLaw::Custom(c) => {
                let mut hi = 1.0_f64.max(a);
                let mut guard = 0;
                while (c.eval)(hi, nu) < a {
                    hi *= 2.0;
                    guard += 1;
                    if guard > 200 {
                        return Err(Error::FluxLawRejected {
                            reason: format!("could not bracket G(b, nu) = {a}"),
                        });
                    }
                }
                let mut lo = 0.0_f64;
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if (c.eval)(mid, nu) < a {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                Ok(0.5 * (lo + hi))
            }
        }
    }

    /// Sampled certification of strict monotonicity in `b` and of the
    /// coercivity witness (`omega` nondecreasing and growing without bound on
    /// the sampled range): 1024 slopes x 64 directions.
    pub fn certify(&self, b_max: f64) -> Result<FluxCertificate> {
        let slopes = 1024;
        let dirs = 64;
        let mut omega = vec![f64::INFINITY; slopes];
        for d in 0..dirs {
            let t = 2.0 * std::f64::consts::PI * d as f64 / dirs as f64;
            let nu = [t.cos(), t.sin()];
            let mut prev = f64::NEG_INFINITY;
            for k in 0..slopes {
                let b = b_max * (k as f64 + 1.0) / slopes as f64;
                let g = self.eval(b, nu)?;
                if g <= prev {
                    return Err(Error::FluxLawRejected {
                        reason: format!("not strictly increasing in b at b = {b}, nu = {nu:?}"),
                    });
                }
                prev = g;
                omega[k] = omega[k].min(g);
            }
        }
        for w in omega.windows(2) {
            if w[1] < w[0] {
                return Err(Error::FluxLawRejected {
                    reason: "coercivity floor is not nondecreasing".to_string(),
                });
            }
        }
        let (first, last) = (omega[0], omega[slopes - 1]);
        if !(last > first && last > 0.0) {
            return Err(Error::FluxLawRejected {
                reason: "coercivity floor does not grow on the sampled range".to_string(),
            });
        }
        Ok(FluxCertificate { b_max, omega_first: first, omega_last: last })
    }
}

/// Witness of a passed flux-law certification.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct FluxCertificate {
    pub b_max: f64,
    pub omega_first: f64,
    pub omega_last: f64,
}

/// The exact profile `a ((x - x0) . nu)^+ - b ((x - x0) . nu)^-` with
/// `a = G(b, nu)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct TwoPlaneSolution {
    pub x0: Point,
    pub nu: Point,
    pub a: f64,
    pub b: f64,
}

impl TwoPlaneSolution {
    /// Build from the negative-phase slope; `a` comes from the law.
    pub fn from_law(law: &FluxLaw, x0: Point, nu: Point, b: f64) -> Result<Self> {
        check_unit(nu)?;
        if !(b > 0.0) {
            return Err(Error::NegativeSlope { b });
        }
        let a = law.eval(b, nu)?;
        Ok(Self { x0, nu, a, b })
    }

    pub fn eval(&self, x: Point) -> f64 {
        let s = dot([x[0] - self.x0[0], x[1] - self.x0[1]], self.nu);
        self.a * s.max(0.0) - self.b * (-s).max(0.0)
    }

    /// Translation along the normal: `p_t(x) = p(x + t nu)` is again a
    /// two-plane solution and is pointwise nondecreasing in `t`.
    pub fn shifted(&self, t: f64) -> Self {
        Self {
            x0: [self.x0[0] - t * self.nu[0], self.x0[1] - t * self.nu[1]],
            ..*self
        }
    }
}

/// Tangent two-plane solution at `(y, u(y))`: the unique member of the family
/// with matching value and gradient. Returns `None` in the degenerate cases
/// (`grad u(y) = 0`, or `u(y) > 0` with `|grad u(y)| <= G(0, nu)`).
pub fn tangent_two_plane(
    u: &ScalarField2D,
    y: (usize, usize),
    law: &FluxLaw,
) -> Result<Option<TwoPlaneSolution>> {
    let grid = u.grid();
    let (i, j) = y;
    if !grid.is_interior(i, j) {
        return Err(Error::TangentOnBoundary);
    }
    let value = u.at(i, j);
    if value == 0.0 {
        return Err(Error::TangentAtZero);
    }
    let grad = match u.gradient(i, j) {
        Some(g) => g,
        None => return Err(Error::TangentOnBoundary),
    };
    let mag = norm(grad);
    if mag == 0.0 {
        return Ok(None);
    }
    let nu = [grad[0] / mag, grad[1] / mag];
    let point = grid.node(i, j);
    if value > 0.0 {
        if mag <= law.eval(0.0, nu)? {
            return Ok(None);
        }
        let a = mag;
        let b = law.invert(a, nu)?;
        if !(b > 0.0) {
            return Ok(None);
        }
        let shift = value / a;
        let x0 = [point[0] - shift * nu[0], point[1] - shift * nu[1]];
        Ok(Some(TwoPlaneSolution { x0, nu, a, b }))
    } else {
        let b = mag;
        let a = law.eval(b, nu)?;
        if !(a > 0.0) {
            return Ok(None);
        }
        let shift = value / b;
        let x0 = [point[0] - shift * nu[0], point[1] - shift * nu[1]];
        Ok(Some(TwoPlaneSolution { x0, nu, a, b }))
    }
}

/// The comparison families used by the verification suites.
#[derive(Debug, Clone)]
pub enum ComparisonFunction {
    /// `phi(x) = x2 - x1^2 + C (x2 - x1^2)^2`, valid where `|x2 - x1^2| <= 1/(4C)`.
    PhiParabolic { c: f64 },
    /// `Psi = a_plus phi^+ - gamma phi^-` with `a_plus = omega(gamma)`.
    PsiTwoPhase { a_plus: f64, gamma: f64, c: f64 },
    /// `l_s(x) = (1 + s) x2 - 2 s`.
    LineFamily { s: f64 },
    /// One-dimensional marched profile composed with a signed distance.
    GProfile(GProfile),
}

fn phi_parabolic(c: f64, x: Point) -> f64 {
    let w = x[1] - x[0] * x[0];
    w + c * w * w
}

impl ComparisonFunction {
    pub fn eval(&self, x: Point) -> f64 {
        match self {
            ComparisonFunction::PhiParabolic { c } => phi_parabolic(*c, x),
            ComparisonFunction::PsiTwoPhase { a_plus, gamma, c } => {
                let phi = phi_parabolic(*c, x);
                a_plus * phi.max(0.0) - gamma * (-phi).max(0.0)
            }
            ComparisonFunction::LineFamily { s } => (1.0 + s) * x[1] - 2.0 * s,
            ComparisonFunction::GProfile(g) => g.eval(x),
        }
    }
}

/// A value of C(lambda, Lambda) large enough that phi is a subsolution for
/// every admissible operator on the window `|x2 - x1^2| <= 1/(4C)`:
/// minimizing L_A phi symbolically gives L_A phi >= -3 Lambda + 2 C lambda^2 / Lambda,
/// so C = 3 Lambda^2 / lambda^2 leaves margin 3 Lambda.
pub fn phi_sufficient_c(lambda: f64, big_lambda: f64) -> f64 {
    3.0 * big_lambda * big_lambda / (lambda * lambda)
}

/// Margins from a discrete subsolution check.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SubsolutionReport {
    /// Min of the discrete L1 over the checked nodes.
    pub min_margin_op1: f64,
    /// Min of the discrete L2 over the checked nodes.
    pub min_margin_op2: f64,
    /// For two-phase comparisons: min of G(gamma, nu) - a_plus along the
    /// zero crossing inside the window.
    pub slope_margin: Option<f64>,
    /// Nodes participating in the operator margins.
    pub checked_nodes: usize,
    pub pass: bool,
}

/// Verify discretely that the comparison function is a subsolution for both
/// operators on the window, and (for two-phase comparisons) that the slope
/// inequality `a_plus <= G(gamma, nu)` holds on the zero crossing.
///
/// `tol` absorbs the stencil truncation error on non-polynomial comparisons.
pub fn subsolution_check(
    comparison: &ComparisonFunction,
    ops: (&EllipticOperator, &EllipticOperator),
    window: Grid2D,
    law: &FluxLaw,
    tol: f64,
) -> Result<SubsolutionReport> {
    let field = crate::grid::sample(|p| comparison.eval(p), window)?;
    let l1 = apply_operator(ops.0, &field)?;
    let l2 = apply_operator(ops.1, &field)?;

    // Restrict phi-based margins to the validity neighborhood of phi.
    let in_validity = |p: Point| -> bool {
        match comparison {
            ComparisonFunction::PhiParabolic { c } | ComparisonFunction::PsiTwoPhase { c, .. } => {
                if *c <= 0.0 {
                    true
                } else {
                    (p[1] - p[0] * p[0]).abs() <= 1.0 / (4.0 * c)
                }
            }
            _ => true,
        }
    };
    // Two-phase comparisons are checked per phase.
    let phase_of = |v: f64| -> u8 {
        match comparison {
            ComparisonFunction::PsiTwoPhase { .. } | ComparisonFunction::GProfile(_) => {
                if v > 0.0 {
                    1
                } else {
                    2
                }
            }
            _ => 0,
        }
    };

    let n = window.n();
    let mut m1 = f64::INFINITY;
    let mut m2 = f64::INFINITY;
    let mut checked = 0usize;
    for j in 1..n - 1 {
        for i in 1..n - 1 {
            let p = window.node(i, j);
            if !in_validity(p) {
                continue;
            }
            checked += 1;
            match phase_of(field.at(i, j)) {
                0 => {
                    m1 = m1.min(l1.at(i, j));
                    m2 = m2.min(l2.at(i, j));
                }
                1 => m1 = m1.min(l1.at(i, j)),
                _ => m2 = m2.min(l2.at(i, j)),
            }
        }
    }
    if checked == 0 {
        return Err(Error::EmptyWindow);
    }
    if !m1.is_finite() {
        m1 = 0.0;
    }
    if !m2.is_finite() {
        m2 = 0.0;
    }

    // Slope inequality along the zero crossing for two-phase comparisons.
    let slope_margin = match comparison {
        ComparisonFunction::PsiTwoPhase { a_plus, gamma, c } => {
            let mut margin = f64::INFINITY;
            let cx = window.center();
            let hw = window.half_width();
            for k in 0..129 {
                let x1 = cx[0] - hw + 2.0 * hw * k as f64 / 128.0;
                let x2 = x1 * x1;
                let p = [x1, x2];
                if (p[0] - cx[0]).abs() > hw || (p[1] - cx[1]).abs() > hw || !in_validity(p) {
                    continue;
                }
                // grad phi = (-2 x1 (1 + 2 C w), 1 + 2 C w) with w = 0 here.
                let g = [-2.0 * x1, 1.0];
                let mag = norm(g);
                let nu = [g[0] / mag, g[1] / mag];
                margin = margin.min(law.eval(*gamma, nu)? - a_plus);
                let _ = c;
            }
            if margin.is_finite() {
                Some(margin)
            } else {
                None
            }
        }
        ComparisonFunction::GProfile(g) => {
            // One-sided profile slopes at the crossing against the law.
            let (bp, bm) = g.crossing_slopes();
            Some(law.eval(bm, g.nu)? - bp)
        }
        _ => None,
    };

    let pass = m1 >= -tol && m2 >= -tol && slope_margin.map_or(true, |s| s >= -tol);
    Ok(SubsolutionReport {
        min_margin_op1: m1,
        min_margin_op2: m2,
        slope_margin,
        checked_nodes: checked,
        pass,
    })
}

/// Marched solution of `[nu1^2 + (nu2^2 + delta) h_eps'(g)] g' = 1 + delta t`
/// with `g(0) = 0`, on `t_range`, by Heun steps of size at most 1e-4 of the
/// range.
#[derive(Debug, Clone)]
pub struct GProfile {
    pub m: f64,
    pub nu2_sq: f64,
    pub delta: f64,
    pub eps: f64,
    /// Interface normal used when the profile is composed with a distance.
    pub nu: Point,
    pub t_min: f64,
    pub t_max: f64,
    step: f64,
    /// Samples on the uniform t lattice from t_min to t_max.
    values: Vec<f64>,
}

pub fn g_profile_solve(
    m: f64,
    nu2_sq: f64,
    delta: f64,
    eps: f64,
    t_range: (f64, f64),
) -> Result<GProfile> {
    if !(m.is_finite() && m >= 1.0) {
        return Err(Error::InvalidAnisotropy { m });
    }
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::InvalidSmoothingWidth { eps });
    }
    let (t_min, t_max) = t_range;
    let span = t_max - t_min;
    if !(span.is_finite() && span > 0.0 && t_min <= 0.0 && t_max >= 0.0) {
        return Err(Error::StepUnderflow { span });
    }
    let step = span * 1e-4;
    if !(step > 0.0 && step.is_normal()) {
        return Err(Error::StepUnderflow { span });
    }
    let nl = SmoothedNonlinearity::new(m, eps)?;
    let nu1_sq = 1.0 - nu2_sq;
    let slope = |t: f64, g: f64| -> f64 {
        (1.0 + delta * t) / (nu1_sq + (nu2_sq + delta) * nl.h_eval(g, 1))
    };

    // March from 0 to both ends on a uniform lattice containing t = 0.
    let below = ((-t_min) / step).ceil() as usize;
    let above = (t_max / step).ceil() as usize;
    let total = below + above + 1;
    let mut values = vec![0.0; total];
    // Forward from 0.
    let mut g = 0.0;
    for k in 0..above {
        let t = k as f64 * step;
        let k1 = slope(t, g);
        let k2 = slope(t + step, g + step * k1);
        g += 0.5 * step * (k1 + k2);
        values[below + k + 1] = g;
    }
    // Backward from 0.
    g = 0.0;
    for k in 0..below {
        let t = -(k as f64) * step;
        let k1 = slope(t, g);
        let k2 = slope(t - step, g - step * k1);
        g -= 0.5 * step * (k1 + k2);
        values[below - k - 1] = g;
    }

    let nu = [(1.0 - nu2_sq).max(0.0).sqrt() * -1.0, nu2_sq.sqrt()];
    Ok(GProfile {
        m,
        nu2_sq,
        delta,
        eps,
        nu,
        t_min: -(below as f64) * step,
        t_max: above as f64 * step,
        step,
        values,
    })
}

impl GProfile {
    /// g(t) by linear interpolation on the marched lattice.
    pub fn g(&self, t: f64) -> f64 {
        let ft = ((t - self.t_min) / self.step).clamp(0.0, (self.values.len() - 1) as f64);
        let k = (ft.floor() as usize).min(self.values.len() - 2);
        let frac = ft - k as f64;
        self.values[k] * (1.0 - frac) + self.values[k + 1] * frac
    }

    /// Compose with the signed distance to the comparison surface: the plane
    /// `x . nu = 0` for delta = 0, otherwise the sphere of radius delta^-3
    /// through the origin with inner normal nu.
    pub fn eval(&self, x: Point) -> f64 {
        if self.delta == 0.0 {
            self.g(dot(x, self.nu))
        } else {
            let r = self.delta.powi(-3);
            let center = [r * self.nu[0], r * self.nu[1]];
            let d = r - norm([x[0] - center[0], x[1] - center[1]]);
            self.g(d)
        }
    }

    /// Least-squares slopes of g on the two constant-slope regions
    /// (|t| in [10%, 50%] of the half-range, where h' is exactly constant).
    pub fn outer_slopes(&self) -> (f64, f64) {
        let fit = |lo: f64, hi: f64| -> f64 {
            let mut sx = 0.0;
            let mut sy = 0.0;
            let mut sxx = 0.0;
            let mut sxy = 0.0;
            let mut count = 0.0;
            let steps = 400;
            for k in 0..=steps {
                let t = lo + (hi - lo) * k as f64 / steps as f64;
                let v = self.g(t);
                sx += t;
                sy += v;
                sxx += t * t;
                sxy += t * v;
                count += 1.0;
            }
            (count * sxy - sx * sy) / (count * sxx - sx * sx)
        };
        let plus = fit(0.1 * self.t_max, 0.5 * self.t_max);
        let minus = fit(0.5 * self.t_min, 0.1 * self.t_min);
        (plus, minus)
    }

    /// g'(0+)/g'(0-) from the outer least-squares slopes. For delta = 0 and
    /// eps -> 0 this tends to `nu1^2 + m nu2^2`.
    pub fn slope_ratio(&self) -> f64 {
        let (plus, minus) = self.outer_slopes();
        plus / minus
    }

    /// One-sided slopes `(g'(0+), g'(0-))` at the crossing.
    pub fn crossing_slopes(&self) -> (f64, f64) {
        self.outer_slopes()
    }

    /// Min of the discrete second difference of g over the range, using the
    /// given stride. Positive for delta > 0 (discrete convexity margin).
    pub fn min_discrete_convexity(&self, stride: f64) -> f64 {
        let mut t = self.t_min + stride;
        let mut worst = f64::INFINITY;
        while t + stride <= self.t_max {
            let dd = (self.g(t + stride) - 2.0 * self.g(t) + self.g(t - stride)) / (stride * stride);
            worst = worst.min(dd);
            t += stride;
        }
        worst
    }

    /// Max of g' on the lattice (finite differences).
    pub fn max_slope(&self) -> f64 {
        self.values
            .windows(2)
            .map(|w| (w[1] - w[0]) / self.step)
            .fold(0.0_f64, f64::max)
    }
}

/// Index-rectangle window on a grid: nodes `i in [i0, i1]`, `j in [j0, j1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridWindow {
    pub i0: usize,
    pub i1: usize,
    pub j0: usize,
    pub j1: usize,
}

impl GridWindow {
    pub fn new(i0: usize, i1: usize, j0: usize, j1: usize) -> Self {
        assert!(i0 < i1 && j0 < j1, "window must be nondegenerate");
        Self { i0, i1, j0, j1 }
    }

    pub fn is_boundary(&self, i: usize, j: usize) -> bool {
        i == self.i0 || i == self.i1 || j == self.j0 || j == self.j1
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        (self.i0..=self.i1).contains(&i) && (self.j0..=self.j1).contains(&j)
    }
}

/// First node where the comparison failed.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct ComparisonViolation {
    pub i: usize,
    pub j: usize,
    pub excess: f64,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct MaxPrincipleOutcome {
    pub holds: bool,
    /// Direction of the hypothesis: true when `u <= p` on the window boundary.
    pub from_below: bool,
    pub violation: Option<ComparisonViolation>,
}

/// Discrete maximum principle against a two-plane solution: if `u <= p` (or
/// `u >= p`) on the window's boundary nodes, check the same ordering up to
/// `tol_comparison` on all window nodes. Errors when neither side dominates
/// on the boundary.
pub fn maximum_principle_check(
    u: &ScalarField2D,
    p: &TwoPlaneSolution,
    region: GridWindow,
    tol_comparison: f64,
) -> Result<MaxPrincipleOutcome> {
    let grid = u.grid();
    let mut below = true;
    let mut above = true;
    for j in region.j0..=region.j1 {
        for i in region.i0..=region.i1 {
            if !region.is_boundary(i, j) {
                continue;
            }
            let diff = u.at(i, j) - p.eval(grid.node(i, j));
            if diff > 0.0 {
                below = false;
            }
            if diff < 0.0 {
                above = false;
            }
        }
    }
    if !below && !above {
        return Err(Error::NoBoundaryDomination);
    }
    let from_below = below;
    let mut violation: Option<ComparisonViolation> = None;
    'outer: for j in region.j0..=region.j1 {
        for i in region.i0..=region.i1 {
            let diff = u.at(i, j) - p.eval(grid.node(i, j));
            let excess = if from_below { diff } else { -diff };
            if excess > tol_comparison {
                violation = Some(ComparisonViolation { i, j, excess });
                break 'outer;
            }
        }
    }
    Ok(MaxPrincipleOutcome { holds: violation.is_none(), from_below, violation })
}

/// Default comparison tolerance for discrete maximum-principle tests:
/// discrete solutions satisfy comparison only up to consistency error.
pub fn default_tol_comparison(residual_max: f64, h: f64) -> f64 {
    5.0 * (residual_max + h * h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::sample;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn grid(n: usize) -> Grid2D {
        Grid2D::new([0.0, 0.0], 1.0, n).unwrap()
    }

    #[test]
    fn flux_eval_reduced_values() {
        let law = FluxLaw::reduced(2.0).unwrap();
        assert_abs_diff_eq!(law.eval(1.0, [0.0, 1.0]).unwrap(), 2.0);
        assert_abs_diff_eq!(law.eval(0.7, [1.0, 0.0]).unwrap(), 0.7);
        let law3 = FluxLaw::reduced(3.0).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert_abs_diff_eq!(law3.eval(3.0, [r, r]).unwrap(), 6.0, epsilon = 1e-12);
    }

    #[test]
    fn flux_eval_rejects_non_unit() {
        let law = FluxLaw::reduced(2.0).unwrap();
        assert!(matches!(law.eval(1.0, [0.5, 0.5]), Err(Error::NonUnitNormal { .. })));
    }

    #[test]
    fn reduced_law_certifies() {
        let law = FluxLaw::reduced(4.0).unwrap();
        let cert = law.certify(10.0).unwrap();
        assert!(cert.omega_last > cert.omega_first);
    }

    #[test]
    fn custom_law_certification_catches_non_monotone() {
        let law = FluxLaw::custom(|b, _nu| (b - 2.0) * (b - 2.0));
        assert!(matches!(law.certify(10.0), Err(Error::FluxLawRejected { .. })));
    }

    #[test]
    fn two_plane_eval_examples() {
        let law = FluxLaw::reduced(2.0).unwrap();
        let p = TwoPlaneSolution::from_law(&law, [0.0, 0.0], [0.0, 1.0], 1.0).unwrap();
        assert_abs_diff_eq!(p.a, 2.0);
        assert_abs_diff_eq!(p.eval([0.7, 0.0]), 0.0);
        assert_abs_diff_eq!(p.eval([0.0, 0.5]), 1.0);
        assert_abs_diff_eq!(p.eval([0.3, -0.5]), -0.5);
    }

    #[test]
    fn tangent_two_plane_recovers_the_profile() {
        let g = grid(33);
        let law = FluxLaw::reduced(2.0).unwrap();
        let p0 = TwoPlaneSolution::from_law(&law, [0.0, 0.0], [0.0, 1.0], 1.0).unwrap();
        let u = sample(|x| p0.eval(x), g).unwrap();
        // Node at (0, -0.25): negative phase.
        let j_neg = g.n() / 2 - g.n() / 8;
        let i_mid = g.n() / 2;
        let found = tangent_two_plane(&u, (i_mid, j_neg), &law).unwrap().unwrap();
        assert_abs_diff_eq!(found.a, 2.0, epsilon = 1e-10);
        assert_abs_diff_eq!(found.b, 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(found.nu[1], 1.0, epsilon = 1e-10);
        // x0 recovered up to a shift along nu: the plane through x0 is x2 = 0.
        assert_abs_diff_eq!(found.x0[1], 0.0, epsilon = 1e-10);
        // Positive phase likewise, and evaluation matches the field at nodes.
        let j_pos = g.n() / 2 + g.n() / 8;
        let found_pos = tangent_two_plane(&u, (i_mid, j_pos), &law).unwrap().unwrap();
        for j in 0..g.n() {
            for i in 0..g.n() {
                assert_abs_diff_eq!(found_pos.eval(g.node(i, j)), u.at(i, j), epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn tangent_two_plane_degenerate_cases() {
        let g = grid(33);
        let law = FluxLaw::reduced(2.0).unwrap();
        // Constant gradient zero.
        let u = sample(|_| 1.0, g).unwrap();
        assert!(tangent_two_plane(&u, (16, 16), &law).unwrap().is_none());
        // Boundary ring rejected.
        assert!(matches!(
            tangent_two_plane(&u, (0, 5), &law),
            Err(Error::TangentOnBoundary)
        ));
    }

    #[test]
    fn comparison_eval_examples() {
        let phi = ComparisonFunction::PhiParabolic { c: 10.0 };
        assert_abs_diff_eq!(phi.eval([0.0, 0.0]), 0.0);
        assert_abs_diff_eq!(phi.eval([0.0, 0.1]), 0.2);
        let line = ComparisonFunction::LineFamily { s: 1.0 };
        assert_abs_diff_eq!(line.eval([0.0, 1.0]), 0.0);
    }

    #[test]
    fn phi_with_computed_c_is_a_subsolution() {
        let (lambda, big_lambda) = (1.0, 2.0);
        let c = phi_sufficient_c(lambda, big_lambda);
        let phi = ComparisonFunction::PhiParabolic { c };
        let op1 = EllipticOperator::laplacian();
        let op2 = EllipticOperator::reduced_second(2.0).unwrap();
        // Window around the origin inside the validity neighborhood.
        let window = Grid2D::new([0.0, 0.0], 0.12, 65).unwrap();
        let law = FluxLaw::reduced(2.0).unwrap();
        let report = subsolution_check(&phi, (&op1, &op2), window, &law, 1e-6).unwrap();
        assert!(report.pass, "margins {:?}", report);
        assert!(report.min_margin_op1 >= 0.0);
    }

    #[test]
    fn phi_with_zero_c_fails() {
        // L1 (x2 - x1^2) = -2 < 0.
        let phi = ComparisonFunction::PhiParabolic { c: 0.0 };
        let op1 = EllipticOperator::laplacian();
        let op2 = EllipticOperator::reduced_second(2.0).unwrap();
        let window = Grid2D::new([0.0, 0.0], 0.12, 65).unwrap();
        let law = FluxLaw::reduced(2.0).unwrap();
        let report = subsolution_check(&phi, (&op1, &op2), window, &law, 1e-6).unwrap();
        assert!(!report.pass);
        assert_abs_diff_eq!(report.min_margin_op1, -2.0, epsilon = 1e-8);
    }

    #[test]
    fn psi_slope_check_passes_when_below_the_law() {
        let law = FluxLaw::reduced(2.0).unwrap();
        let gamma = 1.0;
        // a_plus = omega(gamma) = gamma for the reduced law; G(gamma, nu) >= gamma.
        let a_plus = law.omega_floor(gamma).unwrap();
        let psi = ComparisonFunction::PsiTwoPhase {
            a_plus,
            gamma,
            c: phi_sufficient_c(1.0, 2.0),
        };
        let op1 = EllipticOperator::laplacian();
        let op2 = EllipticOperator::reduced_second(2.0).unwrap();
        let window = Grid2D::new([0.0, 0.0], 0.1, 65).unwrap();
        let report = subsolution_check(&psi, (&op1, &op2), window, &law, 1e-6).unwrap();
        let slope = report.slope_margin.unwrap();
        assert!(slope >= 0.0, "slope margin {slope}");
    }

    #[test]
    fn g_profile_linear_when_m_is_one() {
        // h' = 1 identically, so g' = 1 / (nu1^2 + nu2^2) = 1 and g(t) = t.
        let g = g_profile_solve(1.0, 0.4, 0.0, 1e-3, (-1.0, 1.0)).unwrap();
        for &t in &[-0.9, -0.3, 0.2, 0.8] {
            assert_abs_diff_eq!(g.g(t), t, epsilon = 1e-6);
        }
    }

    #[test]
    fn g_profile_slope_ratio_matches_the_jump_factor() {
        for (m, nu2_sq) in [(2.0, 0.5), (4.0, 0.3), (1.5, 0.9)] {
            let expected = 1.0 - nu2_sq + m * nu2_sq;
            let mut prev_err = f64::INFINITY;
            for eps in [1e-3, 1e-4] {
                let g = g_profile_solve(m, nu2_sq, 0.0, eps, (-1.0, 1.0)).unwrap();
                let err = (g.slope_ratio() - expected).abs() / expected;
                assert!(err < 0.01, "m={m} nu2sq={nu2_sq} eps={eps}: err {err}");
                // Richardson-style check: the error shrinks with eps.
                assert!(err <= prev_err + 1e-9);
                prev_err = err;
            }
        }
    }

    #[test]
    fn g_profile_positive_delta_is_convex_with_bounded_slope() {
        let (m, nu2_sq, delta) = (2.0, 0.5, 0.1);
        let g = g_profile_solve(m, nu2_sq, delta, 1e-2, (-1.0, 1.0)).unwrap();
        // g'' >= delta / (nu1^2 + (nu2^2 + delta) m) > 0 on smooth regions;
        // the kink only adds positive curvature.
        let c_delta = delta / (1.0 + (nu2_sq + delta) * m);
        let margin = g.min_discrete_convexity(0.02);
        assert!(margin >= 0.5 * c_delta, "margin {margin} vs c delta {c_delta}");
        assert!(g.max_slope() <= 1.0 + delta + 1e-6);
    }

    #[test]
    fn max_principle_on_dominated_two_plane() {
        let g = grid(33);
        let law = FluxLaw::reduced(2.0).unwrap();
        let p = TwoPlaneSolution::from_law(&law, [0.0, 0.0], [0.0, 1.0], 1.0).unwrap();
        // u = p shifted down by a constant: dominated, zero margin violation.
        let u = sample(|x| p.eval(x) - 0.05, g).unwrap();
        let region = GridWindow::new(4, 28, 4, 28);
        let out = maximum_principle_check(&u, &p, region, 1e-12).unwrap();
        assert!(out.holds && out.from_below);
    }

    #[test]
    fn max_principle_detects_interior_bump() {
        let g = grid(33);
        let law = FluxLaw::reduced(2.0).unwrap();
        let p = TwoPlaneSolution::from_law(&law, [0.0, 0.0], [0.0, 1.0], 1.0).unwrap();
        // Interior-only bump above p: boundary dominated, interior violated.
        let u = sample(
            |x| {
                let r2 = x[0] * x[0] + x[1] * x[1];
                p.eval(x) - 0.01 + 0.5 * (1.0 - 4.0 * r2).max(0.0)
            },
            g,
        )
        .unwrap();
        let region = GridWindow::new(4, 28, 4, 28);
        let out = maximum_principle_check(&u, &p, region, 1e-9).unwrap();
        assert!(!out.holds);
        assert!(out.violation.is_some());
    }

    #[test]
    fn max_principle_requires_domination() {
        let g = grid(33);
        let law = FluxLaw::reduced(2.0).unwrap();
        let p = TwoPlaneSolution::from_law(&law, [0.0, 0.0], [0.0, 1.0], 1.0).unwrap();
        let u = sample(|x| 0.3 * (7.0 * x[0]).sin() + p.eval(x), g).unwrap();
        let region = GridWindow::new(2, 30, 2, 30);
        assert!(matches!(
            maximum_principle_check(&u, &p, region, 1e-9),
            Err(Error::NoBoundaryDomination)
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        /// Homogeneity of the reduced law: G(t b, nu) = t G(b, nu), and the
        /// anisotropy range 1 <= G(b, nu)/b <= m.
        #[test]
        fn flux_homogeneity_and_range(
            m in 1.0..6.0f64, b in 1e-3..10.0f64, t in 0.0..8.0f64, angle in 0.0..std::f64::consts::TAU
        ) {
            let law = FluxLaw::reduced(m).unwrap();
            let nu = [angle.cos(), angle.sin()];
            let g = law.eval(b, nu).unwrap();
            let gt = law.eval(t * b, nu).unwrap();
            prop_assert!((gt - t * g).abs() <= 1e-10 * (1.0 + gt.abs()));
            let ratio = g / b;
            prop_assert!(ratio >= 1.0 - 1e-12 && ratio <= m + 1e-12);
        }

        /// Two-plane translation along the normal is pointwise nondecreasing.
        #[test]
        fn shifted_two_plane_is_monotone(
            b in 0.1..3.0f64, t in 0.0..2.0f64, angle in 0.0..std::f64::consts::TAU,
            px in -1.0..1.0f64, py in -1.0..1.0f64,
        ) {
            let law = FluxLaw::reduced(2.0).unwrap();
            let nu = [angle.cos(), angle.sin()];
            let p = TwoPlaneSolution::from_law(&law, [0.0, 0.0], nu, b).unwrap();
            prop_assert!(p.shifted(t).eval([px, py]) >= p.eval([px, py]) - 1e-12);
        }
    }
}
