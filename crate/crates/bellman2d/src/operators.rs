//! Constant-coefficient elliptic operators `L = tr(A D^2 v)`, their monotone
//! nine-point discretizations, the Bellman residual `min(L1 v, L2 v)`, and the
//! smoothed scalar nonlinearity `h_eps` used by the regularized solver.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{second_difference, DiffDirection, ScalarField2D};

/// Symmetric 2x2 coefficient matrix with ellipticity bounds
/// `lambda I <= A <= Lambda I` and monotone-stencil admissibility
/// `a11 >= |a12|`, `a22 >= |a12|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipticOperator {
    a11: f64,
    a12: f64,
    a22: f64,
    lambda: f64,
    big_lambda: f64,
}

impl EllipticOperator {
    pub fn new(a11: f64, a12: f64, a22: f64, lambda: f64, big_lambda: f64) -> Result<Self> {
        let a12_abs = a12.abs();
        if !(a11 >= a12_abs && a22 >= a12_abs) {
            return Err(Error::NonMonotoneStencil { a11, a22, a12_abs });
        }
        // Eigenvalues of a symmetric 2x2 matrix.
        let mean = 0.5 * (a11 + a22);
        let disc = (0.5 * (a11 - a22)).hypot(a12);
        let (eig_min, eig_max) = (mean - disc, mean + disc);
        let slack = 1e-12 * big_lambda.abs().max(1.0);
        if !(lambda > 0.0 && eig_min >= lambda - slack && eig_max <= big_lambda + slack) {
            return Err(Error::EllipticityViolated { eig_min, eig_max, lambda, big_lambda });
        }
        Ok(Self { a11, a12, a22, lambda, big_lambda })
    }

    /// The Laplacian, A = I.
    pub fn laplacian() -> Self {
        Self { a11: 1.0, a12: 0.0, a22: 1.0, lambda: 1.0, big_lambda: 1.0 }
    }

    /// A = diag(1, m) with the shared reduced-pair bounds (1, m).
    pub fn reduced_second(m: f64) -> Result<Self> {
        if !(m.is_finite() && m >= 1.0) {
            return Err(Error::InvalidAnisotropy { m });
        }
        Ok(Self { a11: 1.0, a12: 0.0, a22: m, lambda: 1.0, big_lambda: m })
    }

    pub fn matrix(&self) -> [[f64; 2]; 2] {
        [[self.a11, self.a12], [self.a12, self.a22]]
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn big_lambda(&self) -> f64 {
        self.big_lambda
    }

    /// Exact value of `tr(A H)` for a symmetric Hessian H.
    pub fn apply_hessian(&self, h: [[f64; 2]; 2]) -> f64 {
        self.a11 * h[0][0] + 2.0 * self.a12 * h[0][1] + self.a22 * h[1][1]
    }

    /// Monotone nine-point stencil weights, as multiples of 1/h^2.
    ///
    /// The cross derivative uses the diagonal second difference whose sign
    /// matches a12, so every off-center weight is >= 0 and the center weight
    /// is <= 0.
    pub fn stencil(&self) -> Stencil {
        let c = self.a12.abs();
        let axis1 = self.a11 - c;
        let axis2 = self.a22 - c;
        let (diag_plus, diag_minus) = if self.a12 >= 0.0 { (c, 0.0) } else { (0.0, c) };
        Stencil {
            axis1,
            axis2,
            diag_plus,
            diag_minus,
            center: -2.0 * (self.a11 + self.a22 - c),
        }
    }
}

/// Nine-point stencil weights (per 1/h^2). `axis1` multiplies the east/west
/// neighbors, `axis2` north/south, `diag_plus` the NE/SW corners and
/// `diag_minus` the NW/SE corners.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stencil {
    pub axis1: f64,
    pub axis2: f64,
    pub diag_plus: f64,
    pub diag_minus: f64,
    pub center: f64,
}

impl Stencil {
    pub fn uses_diagonals(&self) -> bool {
        self.diag_plus != 0.0 || self.diag_minus != 0.0
    }

    /// Apply the stencil at an interior node of `f`, returning L f (i, j).
    #[inline]
    pub fn apply_at(&self, f: &ScalarField2D, i: usize, j: usize) -> f64 {
        let h_sq = f.grid().h() * f.grid().h();
        let mut acc = self.axis1 * (f.at(i + 1, j) + f.at(i - 1, j))
            + self.axis2 * (f.at(i, j + 1) + f.at(i, j - 1))
            + self.center * f.at(i, j);
        if self.diag_plus != 0.0 {
            acc += self.diag_plus * (f.at(i + 1, j + 1) + f.at(i - 1, j - 1));
        }
        if self.diag_minus != 0.0 {
            acc += self.diag_minus * (f.at(i + 1, j - 1) + f.at(i - 1, j + 1));
        }
        acc / h_sq
    }

    /// Sum of neighbor contributions only (no center term), per 1/h^2.
    #[inline]
    pub fn neighbor_sum(&self, values: &[f64], n: usize, i: usize, j: usize) -> f64 {
        let idx = |i: usize, j: usize| j * n + i;
        let mut acc = self.axis1 * (values[idx(i + 1, j)] + values[idx(i - 1, j)])
            + self.axis2 * (values[idx(i, j + 1)] + values[idx(i, j - 1)]);
        if self.diag_plus != 0.0 {
            acc += self.diag_plus * (values[idx(i + 1, j + 1)] + values[idx(i - 1, j - 1)]);
        }
        if self.diag_minus != 0.0 {
            acc += self.diag_minus * (values[idx(i + 1, j - 1)] + values[idx(i - 1, j + 1)]);
        }
        acc
    }
}

/// The two-operator problem `Min{L1 v, L2 v} = 0`. In reduced form
/// `L1 = Laplacian`, `L2 = d11 + m d22` for some m >= 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BellmanProblem {
    op1: EllipticOperator,
    op2: EllipticOperator,
    m: Option<f64>,
}

impl BellmanProblem {
    /// The reduced pair (Laplacian, d11 + m d22) with shared bounds (1, m).
    pub fn reduced(m: f64) -> Result<Self> {
        if !(m.is_finite() && m >= 1.0) {
            return Err(Error::InvalidAnisotropy { m });
        }
        let mut op1 = EllipticOperator::laplacian();
        op1.big_lambda = m;
        let op2 = EllipticOperator::reduced_second(m)?;
        Ok(Self { op1, op2, m: Some(m) })
    }

    /// A general admissible pair; the shared (lambda, Lambda) envelope is the
    /// union of the two operators' bounds.
    pub fn general(mut op1: EllipticOperator, mut op2: EllipticOperator) -> Self {
        let lambda = op1.lambda.min(op2.lambda);
        let big_lambda = op1.big_lambda.max(op2.big_lambda);
        op1.lambda = lambda;
        op1.big_lambda = big_lambda;
        op2.lambda = lambda;
        op2.big_lambda = big_lambda;
        Self { op1, op2, m: None }
    }

    pub fn op1(&self) -> &EllipticOperator {
        &self.op1
    }

    pub fn op2(&self) -> &EllipticOperator {
        &self.op2
    }

    /// Anisotropy ratio when in reduced form.
    pub fn m(&self) -> Option<f64> {
        self.m
    }

    pub fn lambda(&self) -> f64 {
        self.op1.lambda
    }

    pub fn big_lambda(&self) -> f64 {
        self.op1.big_lambda
    }
}

/// Discrete `L f = tr(A D^2_h f)` with the sign-adapted diagonal stencil for
/// the cross term; exact on all polynomials of degree <= 3. NaN ring.
pub fn apply_operator(op: &EllipticOperator, f: &ScalarField2D) -> Result<ScalarField2D> {
    let d11 = second_difference(f, DiffDirection::E1)?;
    let d22 = second_difference(f, DiffDirection::E2)?;
    let c = op.a12;
    let mut out = d11.scale(op.a11 - c.abs()).add(&d22.scale(op.a22 - c.abs()));
    if c != 0.0 {
        let dir = if c >= 0.0 { DiffDirection::DiagPlus } else { DiffDirection::DiagMinus };
        let dd = second_difference(f, dir)?;
        out = out.add(&dd.scale(2.0 * c.abs()));
    }
    Ok(out)
}

/// Pointwise `min(L1 v, L2 v)` at interior nodes. NaN ring.
pub fn bellman_residual(problem: &BellmanProblem, v: &ScalarField2D) -> Result<ScalarField2D> {
    let l1 = apply_operator(&problem.op1, v)?;
    let l2 = apply_operator(&problem.op2, v)?;
    Ok(l1.pointwise_min(&l2))
}

/// Concave C^{1,1} smoothing of `h0(s) = s^+ - m s^-`: identity for s >= eps,
/// slope m for s <= -eps, and on [-eps, eps] the derivative interpolates
/// linearly from m to 1. Then h(0) = -(m-1) eps / 4 and
/// sup |h_eps - h0| = (m-1) eps / 4.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothedNonlinearity {
    m: f64,
    eps: f64,
}

impl SmoothedNonlinearity {
    pub fn new(m: f64, eps: f64) -> Result<Self> {
        if !(m.is_finite() && m >= 1.0) {
            return Err(Error::InvalidAnisotropy { m });
        }
        if !(eps.is_finite() && eps > 0.0) {
            return Err(Error::InvalidSmoothingWidth { eps });
        }
        Ok(Self { m, eps })
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// `h_eps(s)` (order 0) or `h_eps'(s)` (order 1).
    pub fn h_eval(&self, s: f64, order: u8) -> f64 {
        assert!(order <= 1, "h_eval supports orders 0 and 1");
        let (m, eps) = (self.m, self.eps);
        match order {
            0 => {
                if s >= eps {
                    s
                } else if s <= -eps {
                    m * s
                } else {
                    // Integral of the interpolated derivative, anchored at
                    // h(-eps) = -m eps.
                    -m * eps + 0.5 * (m + 1.0) * (s + eps) - (m - 1.0) * (s * s - eps * eps) / (4.0 * eps)
                }
            }
            _ => {
                if s >= eps {
                    1.0
                } else if s <= -eps {
                    m
                } else {
                    0.5 * (m + 1.0) - (m - 1.0) * s / (2.0 * eps)
                }
            }
        }
    }
}

/// `D11 v + h_eps(D22 v)` at interior nodes. NaN ring.
pub fn smoothed_residual(nl: &SmoothedNonlinearity, v: &ScalarField2D) -> Result<ScalarField2D> {
    let d11 = second_difference(v, DiffDirection::E1)?;
    let d22 = second_difference(v, DiffDirection::E2)?;
    Ok(d11.add(&d22.map(|s| if s.is_finite() { nl.h_eval(s, 0) } else { f64::NAN })))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{sample, Grid2D};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn grid(n: usize) -> Grid2D {
        Grid2D::new([0.0, 0.0], 1.0, n).unwrap()
    }

    fn interior_max_abs(f: &ScalarField2D) -> f64 {
        f.max_abs()
    }

    #[test]
    fn rejects_inadmissible_matrix() {
        assert!(matches!(
            EllipticOperator::new(1.0, 1.5, 2.0, 0.5, 3.0),
            Err(Error::NonMonotoneStencil { .. })
        ));
    }

    #[test]
    fn rejects_bad_ellipticity_bounds() {
        assert!(matches!(
            EllipticOperator::new(1.0, 0.0, 5.0, 1.0, 2.0),
            Err(Error::EllipticityViolated { .. })
        ));
    }

    #[test]
    fn stencil_weights_are_monotone() {
        for (a11, a12, a22) in [(1.0, 0.0, 1.0), (2.0, 1.0, 2.0), (2.0, -0.9, 1.5), (1.0, 0.0, 4.0)] {
            let op = EllipticOperator::new(a11, a12, a22, 0.05, 6.0).unwrap();
            let s = op.stencil();
            assert!(s.axis1 >= 0.0 && s.axis2 >= 0.0 && s.diag_plus >= 0.0 && s.diag_minus >= 0.0);
            assert!(s.center <= 0.0);
            // Weights are conservative: they sum to zero (constants in kernel).
            let total = 2.0 * (s.axis1 + s.axis2 + s.diag_plus + s.diag_minus) + s.center;
            assert_abs_diff_eq!(total, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn laplacian_annihilates_harmonic_cubic() {
        // Symbolic check: f = x2^3 - 3 x1^2 x2 has f11 = -6 x2, f22 = 6 x2.
        let g = grid(33);
        let f = sample(|p| p[1].powi(3) - 3.0 * p[0] * p[0] * p[1], g).unwrap();
        let lf = apply_operator(&EllipticOperator::laplacian(), &f).unwrap();
        assert!(interior_max_abs(&lf) < 1e-10);
    }

    #[test]
    fn reduced_operator_on_square_is_2m() {
        let g = grid(33);
        let f = sample(|p| p[1] * p[1], g).unwrap();
        let m = 3.0;
        let lf = apply_operator(&EllipticOperator::reduced_second(m).unwrap(), &f).unwrap();
        for j in 1..g.n() - 1 {
            for i in 1..g.n() - 1 {
                assert_abs_diff_eq!(lf.at(i, j), 2.0 * m, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn cross_term_operator_on_bilinear() {
        // tr(A D^2 f) with A = [[2,1],[1,2]] and D^2 f = [[0,1],[1,0]] is 2.
        let g = grid(33);
        let f = sample(|p| p[0] * p[1], g).unwrap();
        let op = EllipticOperator::new(2.0, 1.0, 2.0, 1.0, 3.0).unwrap();
        let lf = apply_operator(&op, &f).unwrap();
        for j in 1..g.n() - 1 {
            for i in 1..g.n() - 1 {
                assert_abs_diff_eq!(lf.at(i, j), 2.0, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn bellman_residual_on_saddle_vanishes() {
        // L1 v = 0 and L2 v = 2(m - 1) >= 0, so the min is 0.
        let g = grid(33);
        let v = sample(|p| p[1] * p[1] - p[0] * p[0], g).unwrap();
        for m in [1.0, 2.0, 4.0] {
            let problem = BellmanProblem::reduced(m).unwrap();
            let r = bellman_residual(&problem, &v).unwrap();
            assert!(interior_max_abs(&r) < 1e-10, "m = {m}");
        }
    }

    #[test]
    fn bellman_residual_on_bilinear_vanishes() {
        let g = grid(33);
        let v = sample(|p| p[0] * p[1], g).unwrap();
        let problem = BellmanProblem::reduced(2.0).unwrap();
        let r = bellman_residual(&problem, &v).unwrap();
        assert!(interior_max_abs(&r) < 1e-10);
    }

    #[test]
    fn h_eval_matches_h0_outside_the_layer() {
        let nl = SmoothedNonlinearity::new(2.0, 0.1).unwrap();
        assert_abs_diff_eq!(nl.h_eval(1.0, 0), 1.0);
        assert_abs_diff_eq!(nl.h_eval(-1.0, 0), -2.0);
        assert_abs_diff_eq!(nl.h_eval(0.0, 1), 1.5);
        assert_abs_diff_eq!(nl.h_eval(0.0, 0), -(2.0 - 1.0) * 0.1 / 4.0);
        assert_abs_diff_eq!(nl.h_eval(-0.1, 0), -0.2);
        assert_abs_diff_eq!(nl.h_eval(0.1, 0), 0.1);
    }

    #[test]
    fn smoothed_residual_examples() {
        let g = grid(33);
        // v = x2^2 - x1^2 with eps < 2: D22 v = 2 >= eps so h(2) = 2 and the
        // residual is -2 + 2 = 0.
        let v = sample(|p| p[1] * p[1] - p[0] * p[0], g).unwrap();
        let nl = SmoothedNonlinearity::new(3.0, 0.5).unwrap();
        let r = smoothed_residual(&nl, &v).unwrap();
        assert!(interior_max_abs(&r) < 1e-10);

        // v = 0: residual is h(0) = -(m-1) eps / 4 everywhere.
        let z = ScalarField2D::zeros(g);
        let rz = smoothed_residual(&nl, &z).unwrap();
        for j in 1..g.n() - 1 {
            for i in 1..g.n() - 1 {
                assert_abs_diff_eq!(rz.at(i, j), -(3.0 - 1.0) * 0.5 / 4.0, epsilon = 1e-14);
            }
        }

        // m = 1: the operator degenerates to the Laplacian.
        let nl1 = SmoothedNonlinearity::new(1.0, 0.25).unwrap();
        let w = sample(|p| p[1].powi(3) - 3.0 * p[0] * p[0] * p[1], g).unwrap();
        let rw = smoothed_residual(&nl1, &w).unwrap();
        assert!(interior_max_abs(&rw) < 1e-10);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        /// h_eps is nondecreasing, concave (nonincreasing slope), and stays
        /// within (m-1) eps of h0 on a dense sample.
        #[test]
        fn h_eps_properties(m in 1.0..6.0f64, eps in 1e-4..0.5f64, scale in 0.1..5.0f64) {
            let nl = SmoothedNonlinearity::new(m, eps).unwrap();
            let h0 = |s: f64| if s >= 0.0 { s } else { m * s };
            let mut prev_val = f64::NEG_INFINITY;
            let mut prev_slope = f64::INFINITY;
            let steps = 4001;
            for k in 0..steps {
                let s = scale * (2.0 * k as f64 / (steps - 1) as f64 - 1.0);
                let v = nl.h_eval(s, 0);
                let d = nl.h_eval(s, 1);
                prop_assert!(v + 1e-12 >= prev_val);
                prop_assert!(d <= prev_slope + 1e-12);
                prop_assert!((v - h0(s)).abs() <= (m - 1.0) * eps + 1e-12);
                prop_assert!((1.0..=m + 1e-12).contains(&d));
                prev_val = v;
                prev_slope = d;
            }
        }

        /// The Bellman residual is pointwise below both operator fields.
        #[test]
        fn residual_below_each_operator(m in 1.0..4.0f64, a in -1.0..1.0f64, b in -1.0..1.0f64) {
            let g = grid(17);
            let problem = BellmanProblem::reduced(m).unwrap();
            let v = sample(|p| a * p[1].powi(3) + b * p[0] * p[0] + p[0] * p[1], g).unwrap();
            let l1 = apply_operator(problem.op1(), &v).unwrap();
            let l2 = apply_operator(problem.op2(), &v).unwrap();
            let r = bellman_residual(&problem, &v).unwrap();
            for j in 1..g.n() - 1 {
                for i in 1..g.n() - 1 {
                    prop_assert!(r.at(i, j) <= l1.at(i, j) + 1e-12);
                    prop_assert!(r.at(i, j) <= l2.at(i, j) + 1e-12);
                }
            }
        }

        /// Smoothed residual converges to the Bellman residual as eps -> 0,
        /// with error at most (m-1) eps.
        #[test]
        fn smoothed_tends_to_bellman(m in 1.0..4.0f64, c in -2.0..2.0f64) {
            let g = grid(17);
            let problem = BellmanProblem::reduced(m).unwrap();
            let v = sample(|p| c * p[1] * p[1] + 0.3 * p[0] * p[0] * p[1], g).unwrap();
            let exact = bellman_residual(&problem, &v).unwrap();
            for eps in [1e-1, 1e-2, 1e-3] {
                let nl = SmoothedNonlinearity::new(m, eps).unwrap();
                let sm = smoothed_residual(&nl, &v).unwrap();
                prop_assert!(sm.max_abs_diff(&exact) <= (m - 1.0) * eps + 1e-12);
            }
        }
    }
}
