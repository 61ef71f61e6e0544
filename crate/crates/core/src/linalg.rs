//! Dense complex linear algebra used throughout the design loop.
//!
//! Problem sizes are small (a few hundred complex entries at most), so
//! everything is stored densely in `nalgebra` containers.

use nalgebra::{Cholesky, DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

pub type CVector = DVector<Complex64>;
pub type CMatrix = DMatrix<Complex64>;

/// Relative asymmetry accepted by [`HermitianMatrix::new`].
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Iteration cap for [`max_eigpair`].
pub const EIG_MAX_ITERATIONS: usize = 10_000;
/// Default residual tolerance for [`max_eigpair`], relative to `‖H‖_F`.
pub const EIG_DEFAULT_TOL: f64 = 1e-12;
/// Default relative rank threshold for [`projector_complement`].
pub const RANK_TOL: f64 = 1e-10;

const EIG_START_SEED: u64 = 0x00d1_f7c0_0e1a_6e11;
// The iteration runs on H^(2^SQUARINGS) to shorten slow spectral gaps.
const SQUARINGS: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not Hermitian: max |A - A^H| = {asymmetry:e}, max |A| = {scale:e}")]
    NotHermitian { asymmetry: f64, scale: f64 },
    #[error("power iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

/// A complex square matrix that is Hermitian up to [`HERMITIAN_TOL`].
///
/// Construction symmetrizes the input, so downstream code can rely on exact
/// symmetry of the stored entries.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix(CMatrix);

impl HermitianMatrix {
    pub fn new(m: CMatrix) -> Result<Self, LinalgError> {
        if !m.is_square() {
            return Err(LinalgError::NotSquare {
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        let scale = max_abs(&m);
        let asymmetry = max_abs(&(&m - m.adjoint()));
        if asymmetry > HERMITIAN_TOL * scale {
            return Err(LinalgError::NotHermitian { asymmetry, scale });
        }
        Ok(Self::symmetrized(m))
    }

    /// Wraps a matrix that is Hermitian by construction (sums of outer
    /// products, projectors), removing rounding asymmetry.
    pub fn symmetrized(m: CMatrix) -> Self {
        assert!(m.is_square(), "Hermitian matrix must be square");
        let sym = (&m + m.adjoint()).unscale(2.0);
        Self(sym)
    }

    pub fn zeros(n: usize) -> Self {
        Self(CMatrix::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        Self(CMatrix::identity(n, n))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_inner(self) -> CMatrix {
        self.0
    }

    /// `uᴴ A u`, which is real for Hermitian `A`.
    pub fn quad_form(&self, u: &CVector) -> f64 {
        u.dotc(&(&self.0 * u)).re
    }

    /// `A += scale · v vᴴ`.
    pub fn add_outer(&mut self, v: &CVector, scale: f64) {
        let n = self.dim();
        for j in 0..n {
            let vj = v[j].conj() * scale;
            for i in 0..n {
                self.0[(i, j)] += v[i] * vj;
            }
        }
    }

    pub fn add_scaled(&mut self, other: &HermitianMatrix, scale: f64) {
        self.0 += other.0.scale(scale);
    }

    pub fn scaled(&self, scale: f64) -> Self {
        Self(self.0.scale(scale))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    /// `P A P` for a Hermitian `P`.
    pub fn congruence(&self, p: &HermitianMatrix) -> Self {
        Self::symmetrized(&p.0 * &self.0 * &p.0)
    }
}

fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = CMatrix::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[(i, j)];
            if aij == Complex64::new(0.0, 0.0) {
                continue;
            }
            for k in 0..br {
                for l in 0..bc {
                    out[(i * br + k, j * bc + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}

/// `I_n ⊗ a`.
pub fn block_diag_repeat(a: &CMatrix, n: usize) -> CMatrix {
    kron(&CMatrix::identity(n, n), a)
}

/// Largest eigenvalue of a Hermitian matrix and a unit-norm eigenvector.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub value: f64,
    pub vector: CVector,
}

/// Top eigenpair by power iteration from a fixed seeded start.
///
/// Converged when `‖H v − λ v‖ ≤ tol · ‖H‖_F`, with `λ` the Rayleigh
/// quotient. The zero matrix returns `(0, e₁)`.
pub fn max_eigpair(h: &HermitianMatrix, tol: f64) -> Result<EigenPair, LinalgError> {
    let n = h.dim();
    let a = h.as_matrix();
    let scale = a.norm();
    if n == 0 {
        return Err(LinalgError::DimensionMismatch {
            expected: 1,
            found: 0,
        });
    }
    if scale == 0.0 {
        let mut e1 = CVector::zeros(n);
        e1[0] = Complex64::new(1.0, 0.0);
        return Ok(EigenPair {
            value: 0.0,
            vector: e1,
        });
    }

    // Iterate with (H/‖H‖)^(2^SQUARINGS); same eigenvectors, larger gaps.
    let mut step = a.unscale(scale);
    for _ in 0..SQUARINGS {
        step = &step * &step;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(EIG_START_SEED);
    let mut v = CVector::from_fn(n, |_, _| {
        Complex64::new(
            StandardNormal.sample(&mut rng),
            StandardNormal.sample(&mut rng),
        )
    });
    v.unscale_mut(v.norm());

    let mut residual = f64::INFINITY;
    for _ in 0..EIG_MAX_ITERATIONS {
        let hv = a * &v;
        let lambda = v.dotc(&hv).re;
        residual = (&hv - v.scale(lambda)).norm();
        if residual <= tol * scale {
            return Ok(EigenPair {
                value: lambda,
                vector: v,
            });
        }
        let next = &step * &v;
        let norm = next.norm();
        if norm == 0.0 || !norm.is_finite() {
            // Start vector fell into the numerical null space of the
            // squared operator; restart from H v.
            let nv = hv.norm();
            if nv == 0.0 {
                break;
            }
            v = hv.unscale(nv);
            continue;
        }
        v = next.unscale(norm);
    }
    Err(LinalgError::NoConvergence {
        iterations: EIG_MAX_ITERATIONS,
        residual,
    })
}

/// Smallest eigenvalue, computed as `λmax(H) − λmax(λmax(H) I − H)`.
pub fn min_eigenvalue(h: &HermitianMatrix, tol: f64) -> Result<f64, LinalgError> {
    let top = max_eigpair(h, tol)?.value;
    let n = h.dim();
    let shifted = HermitianMatrix::symmetrized(CMatrix::identity(n, n).scale(top) - h.as_matrix());
    Ok(top - max_eigpair(&shifted, tol)?.value)
}

/// Solves `A x = b` for Hermitian positive definite `A` by Cholesky.
pub fn solve_hpd(a: &HermitianMatrix, b: &CVector) -> Result<CVector, LinalgError> {
    if b.len() != a.dim() {
        return Err(LinalgError::DimensionMismatch {
            expected: a.dim(),
            found: b.len(),
        });
    }
    let chol = Cholesky::new(a.as_matrix().clone()).ok_or(LinalgError::NotPositiveDefinite)?;
    // Complex square roots never fail, so a negative pivot shows up as a
    // non-real diagonal entry of the factor instead of an error.
    let pivots_ok = chol
        .l_dirty()
        .diagonal()
        .iter()
        .all(|d| d.re > 0.0 && d.im.abs() <= 1e-12 * d.re);
    if !pivots_ok {
        return Err(LinalgError::NotPositiveDefinite);
    }
    Ok(chol.solve(b))
}

/// Projector onto the orthogonal complement of `span(vectors)` in `C^dim`.
///
/// The basis is built by modified Gram–Schmidt; a residual column is kept
/// when its norm exceeds `rank_tol` times the largest input norm. An empty
/// list yields the identity.
pub fn projector_complement(
    dim: usize,
    vectors: &[CVector],
    rank_tol: f64,
) -> Result<HermitianMatrix, LinalgError> {
    let basis = orthonormal_basis(dim, vectors, rank_tol)?;
    let mut proj = HermitianMatrix::identity(dim);
    for b in &basis {
        proj.add_outer(b, -1.0);
    }
    Ok(proj)
}

/// Orthonormal basis of `span(vectors)` by modified Gram–Schmidt (two passes).
pub fn orthonormal_basis(
    dim: usize,
    vectors: &[CVector],
    rank_tol: f64,
) -> Result<Vec<CVector>, LinalgError> {
    let largest = vectors.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let threshold = rank_tol * largest;
    let mut basis: Vec<CVector> = Vec::new();
    for v in vectors {
        if v.len() != dim {
            return Err(LinalgError::DimensionMismatch {
                expected: dim,
                found: v.len(),
            });
        }
        let mut w = v.clone();
        for _ in 0..2 {
            for b in &basis {
                let c = b.dotc(&w);
                w -= b * c;
            }
        }
        let norm = w.norm();
        if largest > 0.0 && norm > threshold {
            basis.push(w.unscale(norm));
        }
    }
    Ok(basis)
}

/// Numerical rank of the column set, using the same threshold rule as
/// [`projector_complement`].
pub fn numerical_rank(vectors: &[CVector], rank_tol: f64) -> usize {
    match vectors.first() {
        Some(v) => orthonormal_basis(v.len(), vectors, rank_tol)
            .map(|b| b.len())
            .unwrap_or(0),
        None => 0,
    }
}

/// Columns of a matrix as owned vectors.
pub fn columns(m: &CMatrix) -> Vec<CVector> {
    (0..m.ncols()).map(|j| m.column(j).into_owned()).collect()
}

/// `vec(U)` column stacking back to an `rows × cols` matrix.
pub fn unvec(u: &CVector, rows: usize, cols: usize) -> CMatrix {
    assert_eq!(u.len(), rows * cols, "vector length must equal rows*cols");
    CMatrix::from_column_slice(rows, cols, u.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, cols: usize) -> CMatrix {
        CMatrix::from_fn(r, cols, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> CVector {
        CVector::from_fn(n, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    #[test]
    fn kron_identity_and_swap() {
        let i2 = CMatrix::identity(2, 2);
        assert_eq!(kron(&i2, &i2), CMatrix::identity(4, 4));

        let swap = CMatrix::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)]);
        let k = kron(&swap, &i2);
        let mut expected = CMatrix::zeros(4, 4);
        expected[(0, 2)] = c(1., 0.);
        expected[(1, 3)] = c(1., 0.);
        expected[(2, 0)] = c(1., 0.);
        expected[(3, 1)] = c(1., 0.);
        assert_eq!(k, expected);
    }

    #[test]
    fn kron_matches_index_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_matrix(&mut rng, 2, 2);
        let b = random_matrix(&mut rng, 3, 3);
        let k = kron(&a, &b);
        assert_eq!(k.shape(), (6, 6));
        for i in 0..2 {
            for j in 0..2 {
                for p in 0..3 {
                    for q in 0..3 {
                        assert_eq!(k[(3 * i + p, 3 * j + q)], a[(i, j)] * b[(p, q)]);
                    }
                }
            }
        }
    }

    #[test]
    fn kron_is_bilinear() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let a = random_matrix(&mut rng, 2, 3);
            let b = random_matrix(&mut rng, 3, 2);
            let alpha = c(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let lhs = kron(&(&a * alpha), &b);
            let rhs = kron(&a, &b) * alpha;
            assert!((lhs - rhs).norm() < 1e-12);
        }
    }

    #[test]
    fn hermitian_rejects_asymmetric() {
        let m = CMatrix::from_row_slice(2, 2, &[c(1., 0.), c(1., 0.), c(0., 0.), c(1., 0.)]);
        assert!(matches!(
            HermitianMatrix::new(m),
            Err(LinalgError::NotHermitian { .. })
        ));
        let rect = CMatrix::zeros(2, 3);
        assert!(matches!(
            HermitianMatrix::new(rect),
            Err(LinalgError::NotSquare { .. })
        ));
    }

    #[test]
    fn eig_identity() {
        let pair = max_eigpair(&HermitianMatrix::identity(3), EIG_DEFAULT_TOL).unwrap();
        assert!((pair.value - 1.0).abs() < 1e-12);
        assert!((pair.vector.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eig_diagonal() {
        let d = CMatrix::from_diagonal(&CVector::from_vec(vec![c(1., 0.), c(3., 0.), c(2., 0.)]));
        let pair = max_eigpair(&HermitianMatrix::new(d).unwrap(), EIG_DEFAULT_TOL).unwrap();
        assert!((pair.value - 3.0).abs() < 1e-12);
        assert!((pair.vector[1].norm() - 1.0).abs() < 1e-9);
        assert!(pair.vector[0].norm() < 1e-6 && pair.vector[2].norm() < 1e-6);
    }

    #[test]
    fn eig_zero_matrix() {
        let pair = max_eigpair(&HermitianMatrix::zeros(3), EIG_DEFAULT_TOL).unwrap();
        assert_eq!(pair.value, 0.0);
        assert_eq!(pair.vector.norm(), 1.0);
    }

    /// Characteristic-polynomial oracle: Faddeev–LeVerrier coefficients, then
    /// the largest real root isolated on a dense grid and refined by bisection.
    fn largest_char_root(h: &CMatrix) -> f64 {
        let n = h.nrows();
        let mut coeffs = vec![c(1.0, 0.0)];
        let mut m = CMatrix::zeros(n, n);
        let id = CMatrix::identity(n, n);
        for k in 1..=n {
            m = h * &m + id.scale(1.0) * coeffs[k - 1];
            let ck = -(h * &m).trace() / (k as f64);
            coeffs.push(ck);
        }
        let poly = |x: f64| coeffs.iter().fold(0.0, |acc, a| acc * x + a.re);
        let bound = 1.0 + h.iter().map(|z| z.norm()).sum::<f64>();
        let steps = 200_000;
        let dx = 2.0 * bound / steps as f64;
        let mut hi = bound;
        let mut best = None;
        for i in (0..steps).rev() {
            let lo = -bound + i as f64 * dx;
            if poly(lo).signum() != poly(hi).signum() || poly(lo) == 0.0 {
                best = Some((lo, hi));
                break;
            }
            hi = lo;
        }
        let (mut lo, mut hi) = best.expect("a root must exist");
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if poly(mid).signum() == poly(hi).signum() {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn eig_matches_characteristic_polynomial() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let m = random_matrix(&mut rng, 4, 4);
            let h = HermitianMatrix::symmetrized(m.adjoint() * &m);
            let pair = max_eigpair(&h, EIG_DEFAULT_TOL).unwrap();
            let oracle = largest_char_root(h.as_matrix());
            assert!(
                (pair.value - oracle).abs() <= 1e-8 * oracle.abs().max(1.0),
                "{} vs {}",
                pair.value,
                oracle
            );
            let res = (h.as_matrix() * &pair.vector - pair.vector.scale(pair.value)).norm();
            assert!(res <= EIG_DEFAULT_TOL * h.frobenius_norm() * 1.0001);
        }
    }

    #[test]
    fn eig_rayleigh_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = random_matrix(&mut rng, 5, 5);
        let h = HermitianMatrix::symmetrized(m.adjoint() * &m);
        let pair = max_eigpair(&h, EIG_DEFAULT_TOL).unwrap();
        for _ in 0..100 {
            let mut x = random_vector(&mut rng, 5);
            x.unscale_mut(x.norm());
            assert!(h.quad_form(&x) <= pair.value + 1e-9);
        }
    }

    #[test]
    fn min_eigenvalue_of_diagonal() {
        let d = CMatrix::from_diagonal(&CVector::from_vec(vec![c(4., 0.), c(0.5, 0.), c(2., 0.)]));
        let h = HermitianMatrix::new(d).unwrap();
        assert!((min_eigenvalue(&h, EIG_DEFAULT_TOL).unwrap() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn solve_trivial_cases() {
        let b = CVector::from_vec(vec![c(1., 2.), c(-3., 0.5)]);
        let x = solve_hpd(&HermitianMatrix::identity(2), &b).unwrap();
        assert!((x - &b).norm() < 1e-15);
        let two = HermitianMatrix::identity(2).scaled(2.0);
        let x = solve_hpd(&two, &b).unwrap();
        assert!((x - b.unscale(2.0)).norm() < 1e-15);
    }

    #[test]
    fn solve_residual_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let m = random_matrix(&mut rng, 6, 6);
            let a = HermitianMatrix::symmetrized(m.adjoint() * &m + CMatrix::identity(6, 6));
            let b = random_vector(&mut rng, 6);
            let x = solve_hpd(&a, &b).unwrap();
            assert!((a.as_matrix() * x - &b).norm() <= 1e-8 * b.norm());
        }
    }

    #[test]
    fn solve_rejects_indefinite() {
        let d = CMatrix::from_diagonal(&CVector::from_vec(vec![c(1., 0.), c(-1., 0.)]));
        let a = HermitianMatrix::new(d).unwrap();
        let b = CVector::from_element(2, c(1., 0.));
        assert_eq!(solve_hpd(&a, &b), Err(LinalgError::NotPositiveDefinite));
    }

    #[test]
    fn projector_conventions() {
        assert_eq!(
            projector_complement(3, &[], RANK_TOL).unwrap(),
            HermitianMatrix::identity(3)
        );
        let e1 = CVector::from_vec(vec![c(1., 0.), c(0., 0.)]);
        let p = projector_complement(2, &[e1], RANK_TOL).unwrap();
        let expected = CMatrix::from_diagonal(&CVector::from_vec(vec![c(0., 0.), c(1., 0.)]));
        assert!((p.as_matrix() - expected).norm() < 1e-15);
    }

    #[test]
    fn projector_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let vs = vec![random_vector(&mut rng, 4), random_vector(&mut rng, 4)];
            let p = projector_complement(4, &vs, RANK_TOL).unwrap();
            let pm = p.as_matrix();
            assert!((pm - pm.adjoint()).norm() < 1e-14);
            assert!((pm * pm - pm).norm() < 1e-8);
            for v in &vs {
                assert!((pm * v).norm() < 1e-10 * v.norm());
            }
            // rank of the complement is 2
            assert!((pm.trace().re - 2.0).abs() < 1e-10);
        }
    }

    #[test]
    fn projector_handles_dependent_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let v = random_vector(&mut rng, 3);
        let vs = vec![v.clone(), v.scale(2.0)];
        let p = projector_complement(3, &vs, RANK_TOL).unwrap();
        assert!((p.as_matrix().trace().re - 2.0).abs() < 1e-10);
        assert_eq!(numerical_rank(&vs, RANK_TOL), 1);
    }

    #[test]
    fn unvec_roundtrip_layout() {
        let u = CVector::from_vec((0..6).map(|i| c(i as f64, 0.)).collect());
        let m = unvec(&u, 3, 2);
        assert_eq!(m[(0, 1)], c(3., 0.));
        assert_eq!(m[(2, 0)], c(2., 0.));
    }
}
