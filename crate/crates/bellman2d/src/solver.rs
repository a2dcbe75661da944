//! Discrete Dirichlet solves for `Min{L1 v, L2 v} = 0`: Howard policy
//! iteration over monotone stencils, with a damped nonlinear relaxation solver
//! for the smoothed operator `D11 v + h_eps(D22 v)` as an independent
//! cross-check.
//!
//! Relaxation sweeps are multicolored (red-black for five-point stencils, four
//! colors when a stencil uses diagonals) so that every node in a color class
//! reads only other-color values; color passes run in parallel and the result
//! is bitwise deterministic.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{interpolate, ScalarField2D};
use crate::grid::{second_difference, DiffDirection, Grid2D};
use crate::operators::{
    bellman_residual, BellmanProblem, EllipticOperator, SmoothedNonlinearity, Stencil,
};

/// Node-wise operator choice: 1 or 2 at interior nodes, 0 on the boundary ring.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyField {
    grid: Grid2D,
    choice: Vec<u8>,
}

impl PolicyField {
    /// Policy identically equal to `c` at interior nodes.
    pub fn uniform(grid: Grid2D, c: u8) -> Self {
        assert!(c == 1 || c == 2, "policy choices are 1 or 2");
        let n = grid.n();
        let mut choice = vec![0u8; n * n];
        for j in 1..n - 1 {
            for i in 1..n - 1 {
                choice[grid.idx(i, j)] = c;
            }
        }
        Self { grid, choice }
    }

    pub fn grid(&self) -> Grid2D {
        self.grid
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> u8 {
        self.choice[self.grid.idx(i, j)]
    }

    fn set(&mut self, i: usize, j: usize, c: u8) {
        let idx = self.grid.idx(i, j);
        self.choice[idx] = c;
    }

    /// Count of interior nodes assigned to operator 2.
    pub fn count_second(&self) -> usize {
        self.choice.iter().filter(|&&c| c == 2).count()
    }

    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        use std::fmt::Write as _;
        let n = self.grid.n();
        let mut out = String::with_capacity(n * n * 24);
        out.push_str("x,y,choice\n");
        for j in 0..n {
            for i in 0..n {
                let p = self.grid.node(i, j);
                writeln!(out, "{:.16e},{:.16e},{}", p[0], p[1], self.at(i, j))
                    .expect("string write cannot fail");
            }
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

/// Result of a Bellman solve.
#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub v: ScalarField2D,
    pub policy: PolicyField,
    /// Max interior |min(L1 v, L2 v)| at return.
    pub residual_max: f64,
    pub policy_updates: usize,
    /// Total relaxation sweeps across all linear solves.
    pub linear_iterations: usize,
}

/// Either a single operator everywhere or the policy-mixed operator.
#[derive(Clone, Copy)]
pub enum MixedOperator<'a> {
    Single(&'a EllipticOperator),
    Mixed {
        op1: &'a EllipticOperator,
        op2: &'a EllipticOperator,
        policy: &'a PolicyField,
    },
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SolveOptions {
    /// Target for max interior |residual|.
    pub tol: f64,
    /// Linear sub-solve tolerance; defaults to tol / 5.
    pub tol_lin: Option<f64>,
    pub max_policy_updates: usize,
    pub max_sweeps: usize,
    /// SOR relaxation factor; `None` picks 2 / (1 + sin(pi / (n - 1))).
    pub omega: Option<f64>,
}

impl SolveOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, tol_lin: None, max_policy_updates: 50, max_sweeps: 60_000, omega: None }
    }
}

fn default_omega(n: usize) -> f64 {
    2.0 / (1.0 + (std::f64::consts::PI / (n as f64 - 1.0)).sin())
}

struct ColorPlan {
    colors: usize,
}

impl ColorPlan {
    fn for_stencils(s1: &Stencil, s2: Option<&Stencil>) -> Self {
        let diag = s1.uses_diagonals() || s2.map_or(false, |s| s.uses_diagonals());
        Self { colors: if diag { 4 } else { 2 } }
    }

    #[inline]
    fn color_of(&self, i: usize, j: usize) -> usize {
        if self.colors == 2 {
            (i + j) % 2
        } else {
            (i % 2) + 2 * (j % 2)
        }
    }
}

/// One SOR sweep over all colors. Within a color pass every update reads the
/// pass-start snapshot, which holds the current values of all *other* colors;
/// the coloring guarantees no stencil neighbor shares the node's color.
fn sor_sweep(
    values: &mut Vec<f64>,
    n: usize,
    stencil_at: &(dyn Fn(usize, usize) -> Stencil + Sync),
    plan: &ColorPlan,
    omega: f64,
) {
    for color in 0..plan.colors {
        let snapshot = values.clone();
        values
            .par_chunks_mut(n)
            .enumerate()
            .skip(1)
            .take(n - 2)
            .for_each(|(j, row)| {
                for i in 1..n - 1 {
                    if plan.color_of(i, j) != color {
                        continue;
                    }
                    let st = stencil_at(i, j);
                    let nb = st.neighbor_sum(&snapshot, n, i, j);
                    let target = -nb / st.center;
                    row[i] = (1.0 - omega) * row[i] + omega * target;
                }
            });
    }
}

fn residual_max_of(
    values: &[f64],
    n: usize,
    h: f64,
    stencil_at: &(dyn Fn(usize, usize) -> Stencil + Sync),
) -> f64 {
    let h_sq = h * h;
    (1..n - 1)
        .into_par_iter()
        .map(|j| {
            let mut m = 0.0_f64;
            for i in 1..n - 1 {
                let st = stencil_at(i, j);
                let r = (st.neighbor_sum(values, n, i, j) + st.center * values[j * n + i]) / h_sq;
                m = m.max(r.abs());
            }
            m
        })
        .reduce(|| 0.0, f64::max)
}

/// Outcome of a single Dirichlet relaxation solve.
#[derive(Debug, Clone)]
pub struct LinearSolveOutcome {
    pub field: ScalarField2D,
    pub sweeps: usize,
    pub residual_max: f64,
}

/// Solve `L v = 0` with the boundary trace of `boundary` by multicolor SOR.
///
/// Interior values of `boundary` (or `initial`, when given) seed the
/// iteration; the fixed point does not depend on the seed. Deterministic.
pub fn linear_solve(
    op: MixedOperator,
    boundary: &ScalarField2D,
    tol_lin: f64,
    opts: &SolveOptions,
    initial: Option<&ScalarField2D>,
) -> Result<LinearSolveOutcome> {
    if !(tol_lin.is_finite() && tol_lin > 0.0) {
        return Err(Error::InvalidTolerance { tol: tol_lin });
    }
    let grid = boundary.grid();
    let n = grid.n();

    let (s1, s2, plan, policy) = match op {
        MixedOperator::Single(o) => {
            let s = o.stencil();
            (s, s, ColorPlan::for_stencils(&s, None), None)
        }
        MixedOperator::Mixed { op1, op2, policy } => {
            if policy.grid() != grid {
                return Err(Error::GridMismatch);
            }
            let a = op1.stencil();
            let b = op2.stencil();
            (a, b, ColorPlan::for_stencils(&a, Some(&b)), Some(policy))
        }
    };
    let stencil_at = move |i: usize, j: usize| -> Stencil {
        match policy {
            None => s1,
            Some(p) => {
                if p.at(i, j) == 2 {
                    s2
                } else {
                    s1
                }
            }
        }
    };

    let mut values = match initial {
        Some(f) => {
            if f.grid() != grid {
                return Err(Error::GridMismatch);
            }
            f.values().to_vec()
        }
        None => boundary.values().to_vec(),
    };
    // Boundary ring always comes from the trace.
    for j in 0..n {
        for i in 0..n {
            if !grid.is_interior(i, j) {
                values[grid.idx(i, j)] = boundary.at(i, j);
            }
        }
    }

    let mut omega = opts.omega.unwrap_or_else(|| default_omega(n));
    let initial_residual = residual_max_of(&values, n, grid.h(), &stencil_at);
    if initial_residual <= tol_lin {
        return Ok(LinearSolveOutcome {
            field: ScalarField2D::from_raw(grid, values),
            sweeps: 0,
            residual_max: initial_residual,
        });
    }

    let check_every = 8;
    let mut sweeps = 0;
    let mut residual = initial_residual;
    let mut restarted = false;
    while sweeps < opts.max_sweeps {
        for _ in 0..check_every {
            sor_sweep(&mut values, n, &stencil_at, &plan, omega);
            sweeps += 1;
        }
        residual = residual_max_of(&values, n, grid.h(), &stencil_at);
        if residual <= tol_lin {
            return Ok(LinearSolveOutcome {
                field: ScalarField2D::from_raw(grid, values),
                sweeps,
                residual_max: residual,
            });
        }
        if !residual.is_finite() || residual > 1e6 * initial_residual.max(1.0) {
            if restarted {
                break;
            }
            // Over-relaxation diverged on this stencil; fall back to plain
            // Gauss-Seidel, which converges for every monotone stencil here.
            restarted = true;
            omega = 1.0;
            values = boundary.values().to_vec();
        }
    }
    Err(Error::IterationCapExceeded { tol: tol_lin, sweeps, residual })
}

/// Howard iteration: alternate policy-mixed Dirichlet solves with pointwise
/// argmin updates (ties keep the previous choice). Stops when the policy is
/// stable or the Bellman residual drops below `tol`.
pub fn solve_policy_iteration(
    problem: &BellmanProblem,
    boundary: &ScalarField2D,
    tol: f64,
    max_policy_updates: usize,
) -> Result<SolveOutcome> {
    let mut opts = SolveOptions::with_tol(tol);
    opts.max_policy_updates = max_policy_updates;
    solve_policy_iteration_with(problem, boundary, &opts, None)
}

/// Policy iteration with explicit options and an optional warm start
/// (interpolated coarse solution and policy).
pub fn solve_policy_iteration_with(
    problem: &BellmanProblem,
    boundary: &ScalarField2D,
    opts: &SolveOptions,
    warm: Option<(&ScalarField2D, &PolicyField)>,
) -> Result<SolveOutcome> {
    if !(opts.tol.is_finite() && opts.tol > 0.0) {
        return Err(Error::InvalidTolerance { tol: opts.tol });
    }
    let grid = boundary.grid();
    let tol_lin = opts.tol_lin.unwrap_or(opts.tol / 5.0);

    let mut policy = match warm {
        Some((_, p)) if p.grid() == grid => p.clone(),
        _ => PolicyField::uniform(grid, 1),
    };
    let mut v: Option<ScalarField2D> = warm
        .map(|(f, _)| f.clone())
        .filter(|f| f.grid() == grid);
    let mut total_sweeps = 0usize;
    let mut residual_max = f64::INFINITY;

    for update in 0..opts.max_policy_updates {
        let solve = linear_solve(
            MixedOperator::Mixed { op1: problem.op1(), op2: problem.op2(), policy: &policy },
            boundary,
            tol_lin,
            opts,
            v.as_ref(),
        )?;
        total_sweeps += solve.sweeps;
        let field = solve.field;

        let l1 = crate::operators::apply_operator(problem.op1(), &field)?;
        let l2 = crate::operators::apply_operator(problem.op2(), &field)?;
        let n = grid.n();
        let mut new_policy = policy.clone();
        let mut changed = false;
        let mut res = 0.0_f64;
        for j in 1..n - 1 {
            for i in 1..n - 1 {
                let (a, b) = (l1.at(i, j), l2.at(i, j));
                res = res.max(a.min(b).abs());
                let current = policy.at(i, j);
                // Strict improvement only: ties keep the previous choice.
                let best = match current {
                    1 if b < a => 2,
                    2 if a < b => 1,
                    c => c,
                };
                if best != current {
                    new_policy.set(i, j, best);
                    changed = true;
                }
            }
        }
        residual_max = res;
        v = Some(field);

        if !changed || residual_max <= opts.tol {
            return Ok(SolveOutcome {
                v: v.expect("solved at least once"),
                policy: if changed { new_policy } else { policy },
                residual_max,
                policy_updates: update + 1,
                linear_iterations: total_sweeps,
            });
        }
        policy = new_policy;
    }
    Err(Error::PolicyCapExceeded {
        max_updates: opts.max_policy_updates,
        residual: residual_max,
    })
}

/// Solve `D11 v + h_eps(D22 v) = 0` with the given boundary trace by damped
/// nonlinear point relaxation. Each node update solves its scalar equation
/// exactly: the two outer branches of `h_eps` are linear in the node value and
/// the middle branch is found by bisection (the equation is strictly
/// decreasing in the node value, so the root is unique).
pub fn solve_smoothed(
    nl: &SmoothedNonlinearity,
    boundary: &ScalarField2D,
    tol: f64,
) -> Result<ScalarField2D> {
    solve_smoothed_with(nl, boundary, tol, 200_000).map(|(f, _)| f)
}

pub fn solve_smoothed_with(
    nl: &SmoothedNonlinearity,
    boundary: &ScalarField2D,
    tol: f64,
    max_sweeps: usize,
) -> Result<(ScalarField2D, usize)> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::InvalidTolerance { tol });
    }
    let grid = boundary.grid();
    let n = grid.n();
    let h_sq = grid.h() * grid.h();
    let (m, eps) = (nl.m(), nl.eps());

    let node_solve = move |s1: f64, s2: f64| -> f64 {
        // Outer branch h(s) = s.
        let z1 = 0.25 * (s1 + s2);
        if (s2 - 2.0 * z1) / h_sq >= eps {
            return z1;
        }
        // Outer branch h(s) = m s.
        let z2 = (s1 + m * s2) / (2.0 * (1.0 + m));
        if (s2 - 2.0 * z2) / h_sq <= -eps {
            return z2;
        }
        // Middle branch: root of F(s) = (s1 - s2)/h^2 + s + h_eps(s) on
        // [-eps, eps]; F is strictly increasing and brackets the root here.
        let c = (s1 - s2) / h_sq;
        let (mut lo, mut hi) = (-eps, eps);
        for _ in 0..64 {
            let mid = 0.5 * (lo + hi);
            if c + mid + nl.h_eval(mid, 0) >= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let s = 0.5 * (lo + hi);
        0.5 * (s2 - s * h_sq)
    };

    let mut values = boundary.values().to_vec();
    let plan = ColorPlan { colors: 2 };
    let residual_of = |values: &[f64]| -> f64 {
        (1..n - 1)
            .into_par_iter()
            .map(|j| {
                let mut worst = 0.0_f64;
                for i in 1..n - 1 {
                    let idx = j * n + i;
                    let s1 = values[idx - 1] + values[idx + 1];
                    let s2 = values[idx - n] + values[idx + n];
                    let d11 = (s1 - 2.0 * values[idx]) / h_sq;
                    let d22 = (s2 - 2.0 * values[idx]) / h_sq;
                    worst = worst.max((d11 + nl.h_eval(d22, 0)).abs());
                }
                worst
            })
            .reduce(|| 0.0, f64::max)
    };

    let check_every = 16;
    let mut sweeps = 0;
    let mut residual = residual_of(&values);
    if residual <= tol {
        return Ok((ScalarField2D::from_raw(grid, values), 0));
    }
    while sweeps < max_sweeps {
        for _ in 0..check_every {
            for color in 0..plan.colors {
                let snapshot = values.clone();
                values
                    .par_chunks_mut(n)
                    .enumerate()
                    .skip(1)
                    .take(n - 2)
                    .for_each(|(j, row)| {
                        for i in 1..n - 1 {
                            if plan.color_of(i, j) != color {
                                continue;
                            }
                            let idx = j * n + i;
                            let s1 = snapshot[idx - 1] + snapshot[idx + 1];
                            let s2 = snapshot[idx - n] + snapshot[idx + n];
                            row[i] = node_solve(s1, s2);
                        }
                    });
            }
            sweeps += 1;
        }
        residual = residual_of(&values);
        if residual <= tol {
            return Ok((ScalarField2D::from_raw(grid, values), sweeps));
        }
    }
    Err(Error::IterationCapExceeded { tol, sweeps, residual })
}

/// The two-phase state `u = D22 v` (NaN ring).
pub fn second_derivative_field(v: &ScalarField2D) -> Result<ScalarField2D> {
    second_difference(v, DiffDirection::E2)
}

/// Bilinear prolongation of a coarse solution onto a finer grid over the same
/// square. Used to warm-start fine solves in convergence studies.
pub fn prolong_to(coarse: &ScalarField2D, fine: Grid2D) -> Result<ScalarField2D> {
    let n = fine.n();
    let mut values = vec![0.0; n * n];
    for j in 0..n {
        for i in 0..n {
            values[fine.idx(i, j)] = interpolate(coarse, fine.node(i, j))?;
        }
    }
    Ok(ScalarField2D::from_raw(fine, values))
}

/// Recompute the Bellman residual max for a returned solution.
pub fn recomputed_residual(problem: &BellmanProblem, v: &ScalarField2D) -> Result<f64> {
    Ok(bellman_residual(problem, v)?.max_abs())
}
