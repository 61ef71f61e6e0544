//! Feasible-start log-barrier solver for smooth concave maximization over
//! convex quadratic and linear constraints, plus the `ℂⁿ → ℝ²ⁿ` lift.
//!
//! Constraints act on a subset of the variables (their *support*), which
//! keeps Hessian assembly proportional to the block sizes of the code
//! update rather than to the full problem dimension.

use nalgebra::Cholesky;
use thiserror::Error;

use crate::linalg::{CMatrix, CVector, HERMITIAN_TOL};
use crate::merit::{RMatrix, RVector, SmoothOracle};

pub const DEFAULT_TOL: f64 = 1e-7;
const ARMIJO_C: f64 = 0.01;
const SHRINK: f64 = 0.5;
const T_GROWTH: f64 = 10.0;
const MAX_NEWTON_PER_STAGE: usize = 80;
const MAX_BACKTRACKS: usize = 60;
const NEWTON_DECREMENT_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("start point violates constraint `{label}` (value {value:e})")]
    InfeasibleStart { label: String, value: f64 },
    #[error("objective is not finite at the start point")]
    ObjectiveDomain,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("constraint `{label}` is not convex (min eigenvalue {min_eig:e})")]
    NotConvex { label: String, min_eig: f64 },
    #[error("no strictly feasible point found (best margin {best:e})")]
    NoInterior { best: f64 },
    #[error("matrix is not Hermitian")]
    NotHermitian,
}

#[derive(Debug, Clone, PartialEq)]
pub enum QuadTerm {
    Dense(RMatrix),
    ScaledIdentity(f64),
}

/// `yᵀQy + 2qᵀy + c ≤ 0` with `y = x[support]`; linear when `quad` is `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub label: String,
    pub support: Vec<usize>,
    pub quad: Option<QuadTerm>,
    pub q: RVector,
    pub c: f64,
}

impl Constraint {
    pub fn quadratic(label: impl Into<String>, support: Vec<usize>, quad: QuadTerm, q: RVector, c: f64) -> Self {
        debug_assert_eq!(support.len(), q.len());
        Self {
            label: label.into(),
            support,
            quad: Some(quad),
            q,
            c,
        }
    }

    /// `aᵀy + b ≤ 0`.
    pub fn linear(label: impl Into<String>, support: Vec<usize>, a: RVector, b: f64) -> Self {
        debug_assert_eq!(support.len(), a.len());
        Self {
            label: label.into(),
            support,
            quad: None,
            q: a * 0.5,
            c: b,
        }
    }

    fn gather(&self, x: &RVector) -> RVector {
        RVector::from_iterator(self.support.len(), self.support.iter().map(|&i| x[i]))
    }

    fn q_times(&self, y: &RVector) -> Option<RVector> {
        match &self.quad {
            None => None,
            Some(QuadTerm::Dense(q)) => Some(q * y),
            Some(QuadTerm::ScaledIdentity(a)) => Some(y * *a),
        }
    }

    pub fn value(&self, x: &RVector) -> f64 {
        let y = self.gather(x);
        let quad = self.q_times(&y).map_or(0.0, |qy| y.dot(&qy));
        quad + 2.0 * self.q.dot(&y) + self.c
    }

    /// Value and gradient with respect to the support variables.
    fn value_grad(&self, x: &RVector) -> (f64, RVector) {
        let y = self.gather(x);
        match self.q_times(&y) {
            Some(qy) => (y.dot(&qy) + 2.0 * self.q.dot(&y) + self.c, (qy + &self.q) * 2.0),
            None => (2.0 * self.q.dot(&y) + self.c, &self.q * 2.0),
        }
    }

    /// Smallest eigenvalue of `Q` (0 for linear constraints).
    pub fn min_eigenvalue(&self) -> f64 {
        match &self.quad {
            None => 0.0,
            Some(QuadTerm::ScaledIdentity(a)) => *a,
            Some(QuadTerm::Dense(q)) => q.clone().symmetric_eigenvalues().min(),
        }
    }

    fn scale(&self) -> f64 {
        match &self.quad {
            None => 0.0,
            Some(QuadTerm::ScaledIdentity(a)) => a.abs(),
            Some(QuadTerm::Dense(q)) => q.norm(),
        }
    }
}

/// Linear objective `cᵀx`.
#[derive(Debug, Clone)]
pub struct LinearObjective(pub RVector);

impl SmoothOracle for LinearObjective {
    fn dim(&self) -> usize {
        self.0.len()
    }
    fn value(&self, x: &RVector) -> f64 {
        self.0.dot(x)
    }
    fn gradient(&self, _x: &RVector) -> RVector {
        self.0.clone()
    }
    fn hessian(&self, _x: &RVector) -> RMatrix {
        RMatrix::zeros(self.0.len(), self.0.len())
    }
}

/// An oracle over a few variables, embedded in `ℝⁿ` and scaled:
/// `x ↦ scale · inner(x[indices] ⊙ weights)`.
pub struct Embedded<'a> {
    pub inner: &'a dyn SmoothOracle,
    pub indices: Vec<usize>,
    /// Per-index multipliers applied before evaluating `inner`.
    pub weights: Vec<f64>,
    pub scale: f64,
    pub n: usize,
}

impl Embedded<'_> {
    fn local(&self, x: &RVector) -> RVector {
        RVector::from_iterator(
            self.indices.len(),
            self.indices.iter().zip(&self.weights).map(|(&i, w)| x[i] * w),
        )
    }
}

impl SmoothOracle for Embedded<'_> {
    fn dim(&self) -> usize {
        self.n
    }
    fn value(&self, x: &RVector) -> f64 {
        self.scale * self.inner.value(&self.local(x))
    }
    fn gradient(&self, x: &RVector) -> RVector {
        let g = self.inner.gradient(&self.local(x));
        let mut out = RVector::zeros(self.n);
        for (a, &i) in self.indices.iter().enumerate() {
            out[i] = self.scale * self.weights[a] * g[a];
        }
        out
    }
    fn hessian(&self, x: &RVector) -> RMatrix {
        let h = self.inner.hessian(&self.local(x));
        let mut out = RMatrix::zeros(self.n, self.n);
        for (a, &i) in self.indices.iter().enumerate() {
            for (b, &j) in self.indices.iter().enumerate() {
                out[(i, j)] = self.scale * self.weights[a] * self.weights[b] * h[(a, b)];
            }
        }
        out
    }
}

/// Maximize a concave objective subject to convex constraints and pins.
pub struct ConvexProgram<'a> {
    pub n: usize,
    pub objective: &'a dyn SmoothOracle,
    pub constraints: Vec<Constraint>,
    /// `x_i = v`, removed by elimination before solving.
    pub pins: Vec<(usize, f64)>,
    pub start: RVector,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Target for the duality-gap proxy `m/t`.
    pub tol: f64,
    pub t0: f64,
    /// Verify `Q ⪰ 0` for every constraint before solving.
    pub check_convexity: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            t0: 1.0,
            check_convexity: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub solution: RVector,
    pub objective: f64,
    pub outer_iterations: usize,
    pub newton_steps: usize,
    /// Largest positive constraint value at the solution (0 if none).
    pub max_violation: f64,
    /// `m/t` at exit.
    pub gap: f64,
    pub stalled: bool,
    /// Objective after each barrier stage.
    pub stage_objectives: Vec<f64>,
}

/// Reduced problem after pin elimination: maps free variables back to `ℝⁿ`.
struct Reduced<'a> {
    full: &'a dyn SmoothOracle,
    free: Vec<usize>,
    base: RVector,
}

impl Reduced<'_> {
    fn expand(&self, z: &RVector) -> RVector {
        let mut x = self.base.clone();
        for (a, &i) in self.free.iter().enumerate() {
            x[i] = z[a];
        }
        x
    }
}

impl SmoothOracle for Reduced<'_> {
    fn dim(&self) -> usize {
        self.free.len()
    }
    fn value(&self, z: &RVector) -> f64 {
        self.full.value(&self.expand(z))
    }
    fn gradient(&self, z: &RVector) -> RVector {
        let g = self.full.gradient(&self.expand(z));
        RVector::from_iterator(self.free.len(), self.free.iter().map(|&i| g[i]))
    }
    fn hessian(&self, z: &RVector) -> RMatrix {
        let h = self.full.hessian(&self.expand(z));
        let f = &self.free;
        RMatrix::from_fn(f.len(), f.len(), |a, b| h[(f[a], f[b])])
    }
}

fn reduce_constraint(c: &Constraint, position: &[Option<usize>], base: &RVector) -> Constraint {
    // Split the support into free (kept, renumbered) and pinned (folded).
    let keep: Vec<usize> = (0..c.support.len())
        .filter(|&a| position[c.support[a]].is_some())
        .collect();
    let fixed: Vec<usize> = (0..c.support.len())
        .filter(|&a| position[c.support[a]].is_none())
        .collect();
    let support = keep.iter().map(|&a| position[c.support[a]].unwrap()).collect();
    let yp = RVector::from_iterator(fixed.len(), fixed.iter().map(|&a| base[c.support[a]]));
    let mut q = RVector::from_iterator(keep.len(), keep.iter().map(|&a| c.q[a]));
    let mut constant = c.c + 2.0 * fixed.iter().zip(yp.iter()).map(|(&a, v)| c.q[a] * v).sum::<f64>();
    let quad = match &c.quad {
        None => None,
        Some(QuadTerm::ScaledIdentity(s)) => {
            constant += s * yp.norm_squared();
            Some(QuadTerm::ScaledIdentity(*s))
        }
        Some(QuadTerm::Dense(m)) => {
            let qff = RMatrix::from_fn(keep.len(), keep.len(), |i, j| m[(keep[i], keep[j])]);
            let qfp = RMatrix::from_fn(keep.len(), fixed.len(), |i, j| m[(keep[i], fixed[j])]);
            let qpp = RMatrix::from_fn(fixed.len(), fixed.len(), |i, j| m[(fixed[i], fixed[j])]);
            q += qfp * &yp;
            constant += yp.dot(&(qpp * &yp));
            Some(QuadTerm::Dense(qff))
        }
    };
    Constraint {
        label: c.label.clone(),
        support,
        quad,
        q,
        c: constant,
    }
}

/// Solves `p` from its strictly feasible start.
pub fn solve(p: &ConvexProgram<'_>, opts: &SolverOptions) -> Result<SolveReport, SolveError> {
    solve_until(p, opts, &|_| false)
}

/// Like [`solve`], but returns early once `stop(x)` holds at a centered point
/// or an accepted Newton iterate.
pub fn solve_until(
    p: &ConvexProgram<'_>,
    opts: &SolverOptions,
    stop: &dyn Fn(&RVector) -> bool,
) -> Result<SolveReport, SolveError> {
    if p.start.len() != p.n {
        return Err(SolveError::DimensionMismatch {
            expected: p.n,
            found: p.start.len(),
        });
    }
    if p.objective.dim() != p.n {
        return Err(SolveError::DimensionMismatch {
            expected: p.n,
            found: p.objective.dim(),
        });
    }
    if opts.check_convexity {
        for c in &p.constraints {
            let e = c.min_eigenvalue();
            if e < -HERMITIAN_TOL * c.scale().max(1.0) {
                return Err(SolveError::NotConvex {
                    label: c.label.clone(),
                    min_eig: e,
                });
            }
        }
    }
    let mut base = p.start.clone();
    let mut position = vec![None; p.n];
    let mut pinned = vec![false; p.n];
    for &(i, v) in &p.pins {
        base[i] = v;
        pinned[i] = true;
    }
    let free: Vec<usize> = (0..p.n).filter(|&i| !pinned[i]).collect();
    for (a, &i) in free.iter().enumerate() {
        position[i] = Some(a);
    }
    let constraints: Vec<Constraint> = p
        .constraints
        .iter()
        .map(|c| reduce_constraint(c, &position, &base))
        .collect();
    let obj = Reduced {
        full: p.objective,
        free: free.clone(),
        base: base.clone(),
    };
    let z0 = RVector::from_iterator(free.len(), free.iter().map(|&i| base[i]));
    for c in &constraints {
        let v = c.value(&z0);
        if !(v < 0.0) {
            return Err(SolveError::InfeasibleStart {
                label: c.label.clone(),
                value: v,
            });
        }
    }
    let f0 = obj.value(&z0);
    if !f0.is_finite() {
        return Err(SolveError::ObjectiveDomain);
    }
    let stop_reduced = |z: &RVector| stop(&obj.expand(z));
    let mut rep = barrier(&obj, &constraints, z0, opts, &stop_reduced);
    rep.solution = obj.expand(&rep.solution);
    Ok(rep)
}

fn barrier(
    obj: &dyn SmoothOracle,
    cons: &[Constraint],
    mut z: RVector,
    opts: &SolverOptions,
    stop: &dyn Fn(&RVector) -> bool,
) -> SolveReport {
    let n = z.len();
    let m = cons.len();
    let mut t = opts.t0;
    let mut newton_steps = 0;
    let mut outer = 0;
    let mut stalled = false;
    let mut stages = Vec::new();
    let mut best = (obj.value(&z), z.clone());

    'outer: loop {
        outer += 1;
        let mut stage_done = false;
        for _ in 0..MAX_NEWTON_PER_STAGE {
            let (grad, hess) = barrier_derivatives(obj, cons, &z, t);
            let Some(dir) = newton_direction(hess, &grad) else {
                stalled = true;
                break 'outer;
            };
            let slope = grad.dot(&dir);
            if -slope / 2.0 <= NEWTON_DECREMENT_TOL {
                stage_done = true;
                break;
            }
            let psi0 = centering_value(obj, cons, &z, t).expect("iterate is interior");
            let mut s = 1.0;
            let mut accepted = None;
            for _ in 0..MAX_BACKTRACKS {
                let trial = &z + &dir * s;
                if let Some(psi) = centering_value(obj, cons, &trial, t) {
                    if psi <= psi0 + ARMIJO_C * s * slope {
                        accepted = Some(trial);
                        break;
                    }
                }
                s *= SHRINK;
            }
            newton_steps += 1;
            match accepted {
                Some(next) => {
                    z = next;
                    let f = obj.value(&z);
                    if f >= best.0 {
                        best = (f, z.clone());
                    }
                    if stop(&z) {
                        break 'outer;
                    }
                }
                None => {
                    // No decrease along the Newton direction: numerically centered.
                    stage_done = true;
                    break;
                }
            }
        }
        if !stage_done {
            stalled = true;
        }
        stages.push(obj.value(&z));
        if stop(&z) || m == 0 || m as f64 / t <= opts.tol {
            break;
        }
        if stalled {
            break;
        }
        t *= T_GROWTH;
    }

    // A stalled run returns its best feasible iterate.
    if stalled && best.0 > obj.value(&z) {
        z = best.1;
    }
    let max_violation = cons.iter().map(|c| c.value(&z)).fold(0.0, f64::max);
    SolveReport {
        objective: obj.value(&z),
        solution: z,
        outer_iterations: outer,
        newton_steps,
        max_violation,
        gap: if m == 0 { 0.0 } else { m as f64 / t },
        stalled,
        stage_objectives: stages,
    }
    .with_dim(n)
}

impl SolveReport {
    fn with_dim(self, n: usize) -> Self {
        debug_assert_eq!(self.solution.len(), n);
        self
    }
}

/// `ψ = −t f − Σ ln(−g_i)`, or `None` outside the domain.
fn centering_value(obj: &dyn SmoothOracle, cons: &[Constraint], z: &RVector, t: f64) -> Option<f64> {
    let f = obj.value(z);
    if !f.is_finite() {
        return None;
    }
    let mut psi = -t * f;
    for c in cons {
        let v = c.value(z);
        if !(v < 0.0) {
            return None;
        }
        psi -= (-v).ln();
    }
    Some(psi)
}

fn barrier_derivatives(obj: &dyn SmoothOracle, cons: &[Constraint], z: &RVector, t: f64) -> (RVector, RMatrix) {
    let mut grad = obj.gradient(z) * (-t);
    let mut hess = obj.hessian(z) * (-t);
    for c in cons {
        let (v, g) = c.value_grad(z);
        let inv = -1.0 / v;
        for (a, &i) in c.support.iter().enumerate() {
            grad[i] += inv * g[a];
        }
        let inv2 = inv * inv;
        for (b, &j) in c.support.iter().enumerate() {
            let gb = g[b] * inv2;
            for (a, &i) in c.support.iter().enumerate() {
                hess[(i, j)] += g[a] * gb;
            }
        }
        match &c.quad {
            None => {}
            Some(QuadTerm::ScaledIdentity(s)) => {
                for &i in &c.support {
                    hess[(i, i)] += 2.0 * s * inv;
                }
            }
            Some(QuadTerm::Dense(q)) => {
                for (b, &j) in c.support.iter().enumerate() {
                    for (a, &i) in c.support.iter().enumerate() {
                        hess[(i, j)] += 2.0 * q[(a, b)] * inv;
                    }
                }
            }
        }
    }
    (grad, hess)
}

/// Solves `H d = −g`, regularizing `H` with a growing multiple of the
/// identity when the factorization fails.
fn newton_direction(hess: RMatrix, grad: &RVector) -> Option<RVector> {
    let n = grad.len();
    if n == 0 {
        return Some(RVector::zeros(0));
    }
    if let Some(ch) = Cholesky::new(hess.clone()) {
        return Some(-ch.solve(grad));
    }
    let scale = (hess.trace().abs() / n as f64).max(f64::MIN_POSITIVE);
    let mut lambda = 1e-10 * scale;
    for _ in 0..40 {
        let mut h = hess.clone();
        for i in 0..n {
            h[(i, i)] += lambda;
        }
        if let Some(ch) = Cholesky::new(h) {
            return Some(-ch.solve(grad));
        }
        lambda *= 10.0;
    }
    None
}

/// Finds a point strictly inside every constraint (pins held fixed) by
/// minimizing a common slack `s` with `g_i(x) ≤ s`, `s ≥ −1`.
///
/// Returns as soon as `s ≤ −margin`, or the most interior point found when
/// the best achievable slack is negative but above `−margin`.
pub fn phase_one(
    n: usize,
    constraints: &[Constraint],
    pins: &[(usize, f64)],
    start: &RVector,
    margin: f64,
) -> Result<RVector, SolveError> {
    let mut x0 = start.clone();
    for &(i, v) in pins {
        x0[i] = v;
    }
    let worst = constraints.iter().map(|c| c.value(&x0)).fold(f64::NEG_INFINITY, f64::max);
    if worst < -margin || constraints.is_empty() {
        return Ok(x0);
    }
    let si = n;
    let mut cons: Vec<Constraint> = constraints
        .iter()
        .map(|c| {
            let mut c2 = c.clone();
            c2.support.push(si);
            if let Some(QuadTerm::Dense(q)) = &c.quad {
                let k = q.nrows();
                let mut q2 = RMatrix::zeros(k + 1, k + 1);
                q2.view_mut((0, 0), (k, k)).copy_from(q);
                c2.quad = Some(QuadTerm::Dense(q2));
            } else if let Some(QuadTerm::ScaledIdentity(a)) = &c.quad {
                // Expand so the slack has no quadratic term.
                let k = c.support.len();
                let mut q2 = RMatrix::zeros(k + 1, k + 1);
                for i in 0..k {
                    q2[(i, i)] = *a;
                }
                c2.quad = Some(QuadTerm::Dense(q2));
            }
            c2.q = RVector::from_iterator(c.q.len() + 1, c.q.iter().copied().chain([-0.5]));
            c2
        })
        .collect();
    cons.push(Constraint::linear("slack floor", vec![si], RVector::from_element(1, -1.0), -1.0));
    let mut z0 = x0.clone().insert_row(n, 0.0);
    z0[si] = worst.max(-1.0 + margin) + 1.0;
    let mut c = RVector::zeros(n + 1);
    c[si] = -1.0;
    let obj = LinearObjective(c);
    let prog = ConvexProgram {
        n: n + 1,
        objective: &obj,
        constraints: cons,
        pins: pins.to_vec(),
        start: z0,
    };
    let opts = SolverOptions {
        tol: 1e-9,
        ..SolverOptions::default()
    };
    let rep = solve_until(&prog, &opts, &|z| z[si] <= -margin)?;
    let x = rep.solution.rows(0, n).into_owned();
    let best = constraints.iter().map(|c| c.value(&x)).fold(f64::NEG_INFINITY, f64::max);
    if best < 0.0 {
        Ok(x)
    } else {
        Err(SolveError::NoInterior { best })
    }
}

/// `[[Re A, −Im A], [Im A, Re A]]`, so that `uᴴAu = ũᵀÃũ` with
/// `ũ = lift_vector(u)`.
pub fn lift_hermitian(a: &CMatrix) -> Result<RMatrix, SolveError> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(SolveError::NotHermitian);
    }
    let scale = a.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    for i in 0..n {
        for j in 0..=i {
            if (a[(i, j)] - a[(j, i)].conj()).norm() > HERMITIAN_TOL * scale {
                return Err(SolveError::NotHermitian);
            }
        }
    }
    Ok(lift_matrix(a))
}

/// The real embedding of any complex matrix (no Hermitian check).
pub fn lift_matrix(a: &CMatrix) -> RMatrix {
    let (r, c) = a.shape();
    RMatrix::from_fn(2 * r, 2 * c, |i, j| {
        let z = a[(i % r, j % c)];
        match (i < r, j < c) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    })
}

/// `[Re u; Im u]`; `Re{cᴴu} = lift(c)ᵀ lift(u)`.
pub fn lift_vector(u: &CVector) -> RVector {
    let n = u.len();
    RVector::from_fn(2 * n, |i, _| if i < n { u[i].re } else { u[i - n].im })
}

pub fn unlift_vector(x: &RVector) -> CVector {
    let n = x.len() / 2;
    CVector::from_fn(n, |i, _| num_complex::Complex64::new(x[i], x[i + n]))
}
