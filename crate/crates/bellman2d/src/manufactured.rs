//! Closed-form exact solutions of `Min{L1 v, L2 v} = 0` for the reduced pair
//! `(Laplacian, d11 + m d22)`, with symbolic derivatives up to third order.
//! These are the ground truth behind every convergence and jump test, and the
//! oracle below re-verifies each catalog entry from its closed-form Hessian
//! before any entry is trusted.
//!
//! The glued cubic with interface normal `nu = (-sin t, cos t)` is
//! `v = q + k ((x . nu)^+)^3` where `q` is the global cubic
//! `b [nu2 x2^3/6 + nu1 x1 x2^2/2 - m nu1 x1^3/6 - m nu2 x1^2 x2/2]` and
//! `k = (m-1) b / 6`. It is C^2 across the interface, solves the reduced
//! problem exactly for every angle, and its second derivative
//! `u = v_22 = a s^+ - b s^-` carries the anisotropic slope ratio
//! `a / b = 1 + (m-1) nu2^2`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{dot, Point};
use crate::operators::BellmanProblem;

/// Third derivatives of a scalar function of two variables.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ThirdDerivatives {
    pub v111: f64,
    pub v112: f64,
    pub v122: f64,
    pub v222: f64,
}

impl ThirdDerivatives {
    fn add(self, o: ThirdDerivatives) -> Self {
        Self {
            v111: self.v111 + o.v111,
            v112: self.v112 + o.v112,
            v122: self.v122 + o.v122,
            v222: self.v222 + o.v222,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.v111
            .abs()
            .max(self.v112.abs())
            .max(self.v122.abs())
            .max(self.v222.abs())
    }
}

/// Polynomial in two variables stored as terms `(p, q, c)` meaning
/// `c * x1^p * x2^q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Poly2 {
    pub terms: Vec<(u32, u32, f64)>,
}

fn falling(p: u32, k: u32) -> f64 {
    (0..k).map(|r| (p - r) as f64).product()
}

fn mono_deriv(p: u32, q: u32, c: f64, dx: u32, dy: u32, x: Point) -> f64 {
    if dx > p || dy > q {
        return 0.0;
    }
    c * falling(p, dx) * falling(q, dy) * x[0].powi((p - dx) as i32) * x[1].powi((q - dy) as i32)
}

impl Poly2 {
    pub fn new(terms: Vec<(u32, u32, f64)>) -> Self {
        Self { terms }
    }

    pub fn deriv(&self, dx: u32, dy: u32, x: Point) -> f64 {
        self.terms
            .iter()
            .map(|&(p, q, c)| mono_deriv(p, q, c, dx, dy, x))
            .sum()
    }

    pub fn value(&self, x: Point) -> f64 {
        self.deriv(0, 0, x)
    }

    pub fn gradient(&self, x: Point) -> Point {
        [self.deriv(1, 0, x), self.deriv(0, 1, x)]
    }

    pub fn hessian(&self, x: Point) -> [[f64; 2]; 2] {
        let h12 = self.deriv(1, 1, x);
        [[self.deriv(2, 0, x), h12], [h12, self.deriv(0, 2, x)]]
    }

    pub fn third(&self, x: Point) -> ThirdDerivatives {
        ThirdDerivatives {
            v111: self.deriv(3, 0, x),
            v112: self.deriv(2, 1, x),
            v122: self.deriv(1, 2, x),
            v222: self.deriv(0, 3, x),
        }
    }
}

/// A catalog entry with closed-form evaluators per phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ExactSolution {
    /// Two-phase glued cubic: interface normal rotated by `angle_deg` from e2,
    /// operators kept as the reduced pair.
    GluedCubic { m: f64, b: f64, angle_deg: f64 },
    /// `v = x2^2 - x1^2`; one-phase (L1 v = 0 everywhere, L2 v = 2(m-1) >= 0).
    QuadraticSaddle { m: f64 },
    /// `v = x1 x2`; both operators vanish identically.
    Bilinear { m: f64 },
    /// Arbitrary polynomial data (not itself a solution; used for traces).
    CustomPolynomial { m: f64, poly: Poly2 },
}

/// Which derivative a closed-form evaluation should return.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivativeOrder {
    Value,
    Gradient,
    Hessian,
    Third,
}

/// One-sided third derivatives: on the interface both sides are reported.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OneSidedThird {
    pub minus: ThirdDerivatives,
    pub plus: ThirdDerivatives,
}

impl ExactSolution {
    pub fn name(&self) -> String {
        match self {
            ExactSolution::GluedCubic { m, b, angle_deg } => {
                format!("glued_cubic(m={m}, b={b}, angle={angle_deg}deg)")
            }
            ExactSolution::QuadraticSaddle { m } => format!("quadratic_saddle(m={m})"),
            ExactSolution::Bilinear { m } => format!("bilinear(m={m})"),
            ExactSolution::CustomPolynomial { m, .. } => format!("custom_polynomial(m={m})"),
        }
    }

    pub fn m(&self) -> f64 {
        match self {
            ExactSolution::GluedCubic { m, .. }
            | ExactSolution::QuadraticSaddle { m }
            | ExactSolution::Bilinear { m }
            | ExactSolution::CustomPolynomial { m, .. } => *m,
        }
    }

    /// The Bellman pair this entry is a solution of (reduced pair).
    pub fn problem(&self) -> Result<BellmanProblem> {
        BellmanProblem::reduced(self.m())
    }

    /// Interface normal for the glued cubic.
    pub fn normal(&self) -> Option<Point> {
        match self {
            ExactSolution::GluedCubic { angle_deg, .. } => {
                let t = angle_deg.to_radians();
                Some([-t.sin(), t.cos()])
            }
            _ => None,
        }
    }

    /// One-sided `u = v_22` slopes `(a, b)` along the interface normal:
    /// `a = (1 + (m-1) nu2^2) b`.
    pub fn interface_slopes(&self) -> Option<(f64, f64)> {
        match self {
            ExactSolution::GluedCubic { m, b, .. } => {
                let nu = self.normal().expect("glued cubic has a normal");
                Some(((1.0 + (m - 1.0) * nu[1] * nu[1]) * b, *b))
            }
            _ => None,
        }
    }

    fn glued_parts(&self) -> Option<(f64, f64, Point, f64)> {
        match self {
            ExactSolution::GluedCubic { m, b, .. } => {
                let nu = self.normal().expect("glued cubic has a normal");
                let kappa = (m - 1.0) * b / 6.0;
                Some((*m, *b, nu, kappa))
            }
            _ => None,
        }
    }

    /// The global cubic that coincides with the negative phase.
    fn minus_phase_poly(m: f64, b: f64, nu: Point) -> Poly2 {
        Poly2::new(vec![
            (0, 3, b * nu[1] / 6.0),
            (1, 2, b * nu[0] / 2.0),
            (3, 0, -m * b * nu[0] / 6.0),
            (2, 1, -m * b * nu[1] / 2.0),
        ])
    }

    pub fn value(&self, x: Point) -> f64 {
        match self {
            ExactSolution::GluedCubic { .. } => {
                let (m, b, nu, kappa) = self.glued_parts().expect("glued");
                let s = dot(x, nu);
                let q = Self::minus_phase_poly(m, b, nu).value(x);
                q + kappa * s.max(0.0).powi(3)
            }
            ExactSolution::QuadraticSaddle { .. } => x[1] * x[1] - x[0] * x[0],
            ExactSolution::Bilinear { .. } => x[0] * x[1],
            ExactSolution::CustomPolynomial { poly, .. } => poly.value(x),
        }
    }

    pub fn gradient(&self, x: Point) -> Point {
        match self {
            ExactSolution::GluedCubic { .. } => {
                let (m, b, nu, kappa) = self.glued_parts().expect("glued");
                let s = dot(x, nu);
                let g = Self::minus_phase_poly(m, b, nu).gradient(x);
                let sp = s.max(0.0);
                [g[0] + 3.0 * kappa * sp * sp * nu[0], g[1] + 3.0 * kappa * sp * sp * nu[1]]
            }
            ExactSolution::QuadraticSaddle { .. } => [-2.0 * x[0], 2.0 * x[1]],
            ExactSolution::Bilinear { .. } => [x[1], x[0]],
            ExactSolution::CustomPolynomial { poly, .. } => poly.gradient(x),
        }
    }

    /// Hessian; continuous across the glued-cubic interface.
    pub fn hessian(&self, x: Point) -> [[f64; 2]; 2] {
        match self {
            ExactSolution::GluedCubic { .. } => {
                let (m, b, nu, kappa) = self.glued_parts().expect("glued");
                let s = dot(x, nu);
                let mut h = Self::minus_phase_poly(m, b, nu).hessian(x);
                let sp = s.max(0.0);
                for r in 0..2 {
                    for c in 0..2 {
                        h[r][c] += 6.0 * kappa * sp * nu[r] * nu[c];
                    }
                }
                h
            }
            ExactSolution::QuadraticSaddle { .. } => [[-2.0, 0.0], [0.0, 2.0]],
            ExactSolution::Bilinear { .. } => [[0.0, 1.0], [1.0, 0.0]],
            ExactSolution::CustomPolynomial { poly, .. } => poly.hessian(x),
        }
    }

    /// One-sided third derivatives; both limits are reported on the interface.
    pub fn third(&self, x: Point) -> OneSidedThird {
        match self {
            ExactSolution::GluedCubic { .. } => {
                let (m, b, nu, kappa) = self.glued_parts().expect("glued");
                let s = dot(x, nu);
                let base = Self::minus_phase_poly(m, b, nu).third(x);
                let bump = ThirdDerivatives {
                    v111: 6.0 * kappa * nu[0] * nu[0] * nu[0],
                    v112: 6.0 * kappa * nu[0] * nu[0] * nu[1],
                    v122: 6.0 * kappa * nu[0] * nu[1] * nu[1],
                    v222: 6.0 * kappa * nu[1] * nu[1] * nu[1],
                };
                if s > 0.0 {
                    let p = base.add(bump);
                    OneSidedThird { minus: p, plus: p }
                } else if s < 0.0 {
                    OneSidedThird { minus: base, plus: base }
                } else {
                    OneSidedThird { minus: base, plus: base.add(bump) }
                }
            }
            _ => {
                let t = match self {
                    ExactSolution::CustomPolynomial { poly, .. } => poly.third(x),
                    _ => ThirdDerivatives::default(),
                };
                OneSidedThird { minus: t, plus: t }
            }
        }
    }

    /// The two-phase state `u = v_22` in closed form.
    pub fn u_value(&self, x: Point) -> f64 {
        match self {
            ExactSolution::GluedCubic { .. } => {
                let (a, b) = self.interface_slopes().expect("glued");
                let nu = self.normal().expect("glued");
                let s = dot(x, nu);
                a * s.max(0.0) - b * (-s).max(0.0)
            }
            _ => self.hessian(x)[1][1],
        }
    }

    /// Whether the entry is an exact solution of its Bellman problem (custom
    /// polynomials are boundary data only).
    pub fn is_solution(&self) -> bool {
        !matches!(self, ExactSolution::CustomPolynomial { .. })
    }
}

/// Result of re-verifying a catalog entry from its closed forms.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct OracleReport {
    /// Max of |min(L1 v, L2 v)| over the sample, from closed-form Hessians.
    pub max_residual: f64,
    /// Max mismatch of the two phase formulas on the interface: value.
    pub interface_value_defect: f64,
    /// ... gradient components.
    pub interface_gradient_defect: f64,
    /// ... Hessian components.
    pub interface_hessian_defect: f64,
    /// Max of |u_value - hessian[1][1]| over the sample: the claimed two-plane
    /// slopes (a, b) against the differentiated closed form.
    pub state_defect: f64,
    pub samples: usize,
}

impl OracleReport {
    pub fn worst(&self) -> f64 {
        self.max_residual
            .max(self.interface_value_defect)
            .max(self.interface_gradient_defect)
            .max(self.interface_hessian_defect)
            .max(self.state_defect)
    }
}

/// Evaluate both operators from closed-form Hessians on a dense deterministic
/// lattice over [-1, 1]^2 and report the worst Bellman residual together with
/// the C^2 matching defects of the two phase formulas along the interface.
pub fn oracle_check(
    sol: &ExactSolution,
    problem: &BellmanProblem,
    sample_count: usize,
) -> Result<OracleReport> {
    let side = (sample_count as f64).sqrt().ceil() as usize;
    let side = side.max(101);
    let mut max_residual = 0.0_f64;
    let mut state_defect = 0.0_f64;
    for jj in 0..side {
        for ii in 0..side {
            let x = [
                -1.0 + 2.0 * ii as f64 / (side - 1) as f64,
                -1.0 + 2.0 * jj as f64 / (side - 1) as f64,
            ];
            let h = sol.hessian(x);
            let r = problem.op1().apply_hessian(h).min(problem.op2().apply_hessian(h));
            max_residual = max_residual.max(r.abs());
            state_defect = state_defect.max((sol.u_value(x) - h[1][1]).abs());
        }
    }

    // Interface matching defects between the independent phase formulas.
    let (mut dv, mut dg, mut dh) = (0.0_f64, 0.0_f64, 0.0_f64);
    if let Some((m, b, nu, kappa)) = sol.glued_parts() {
        let tau = [nu[1], -nu[0]];
        let q = ExactSolution::minus_phase_poly(m, b, nu);
        let samples = 257;
        for k in 0..samples {
            let t = -1.0 + 2.0 * k as f64 / (samples - 1) as f64;
            let x = [t * tau[0], t * tau[1]];
            // Plus-phase formula evaluated at s = 0 versus the minus cubic.
            let s = dot(x, nu);
            let sp = s.max(0.0);
            let plus_v = q.value(x) + kappa * sp.powi(3);
            dv = dv.max((plus_v - q.value(x)).abs());
            let gq = q.gradient(x);
            let gp = [
                gq[0] + 3.0 * kappa * sp * sp * nu[0],
                gq[1] + 3.0 * kappa * sp * sp * nu[1],
            ];
            dg = dg.max((gp[0] - gq[0]).abs().max((gp[1] - gq[1]).abs()));
            let hq = q.hessian(x);
            for r in 0..2 {
                for c in 0..2 {
                    let hp = hq[r][c] + 6.0 * kappa * sp * nu[r] * nu[c];
                    dh = dh.max((hp - hq[r][c]).abs());
                }
            }
        }
    }

    Ok(OracleReport {
        max_residual,
        interface_value_defect: dv,
        interface_gradient_defect: dg,
        interface_hessian_defect: dh,
        state_defect,
        samples: side * side,
    })
}

/// The tolerance below which a catalog entry is accepted as ground truth.
pub const ORACLE_TOLERANCE: f64 = 1e-12;

/// The default catalog: every entry used by the verification suites.
pub fn catalog() -> Vec<ExactSolution> {
    let mut entries = Vec::new();
    for &m in &[1.5, 2.0, 4.0] {
        for &angle in &[0.0, 15.0] {
            entries.push(ExactSolution::GluedCubic { m, b: 1.0, angle_deg: angle });
        }
    }
    entries.push(ExactSolution::GluedCubic { m: 3.0, b: 0.5, angle_deg: 15.0 });
    entries.push(ExactSolution::QuadraticSaddle { m: 2.0 });
    entries.push(ExactSolution::QuadraticSaddle { m: 1.0 });
    entries.push(ExactSolution::Bilinear { m: 2.0 });
    entries
}

/// Run the oracle over the whole catalog, rejecting any entry whose residual
/// or interface defect exceeds [`ORACLE_TOLERANCE`].
pub fn verify_catalog() -> Result<Vec<(ExactSolution, OracleReport)>> {
    let mut out = Vec::new();
    for sol in catalog() {
        let problem = sol.problem()?;
        let report = oracle_check(&sol, &problem, 10_000)?;
        if report.worst() > ORACLE_TOLERANCE {
            return Err(Error::OracleRejected {
                name: sol.name(),
                reason: format!(
                    "residual {:.3e}, interface defects ({:.3e}, {:.3e}, {:.3e})",
                    report.max_residual,
                    report.interface_value_defect,
                    report.interface_gradient_defect,
                    report.interface_hessian_defect
                ),
            });
        }
        out.push((sol, report));
    }
    Ok(out)
}
