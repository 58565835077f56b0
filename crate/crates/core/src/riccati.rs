//! Cheap-control Riccati equation for the augmented `(x, ξ)` system, where
//! `ξ = u + w` obeys `ξ⁺ = D ξ + ū` and the cost is `Σ |x|² + |ξ|²` with no
//! weight on `ū`.
//!
//! With zero input weight the usual DARE inner matrix reduces to
//! `B̃ᵀ X B̃ = X₂₂`, which stays `⪰ I` along the value iteration started at
//! `X = I`, so the equation can be iterated directly at zero weight.

use nalgebra::{Complex, DMatrix};

use crate::linalg::max_abs;
use crate::plant::Plant;
use crate::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_ITER: usize = 100_000;

/// `Ã = [[A, B], [0, D]]`, `B̃ = [[0], [I]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedSystem {
    pub n: usize,
    pub a_tilde: DMatrix<f64>,
    pub b_tilde: DMatrix<f64>,
}

pub fn augment(p: &Plant) -> AugmentedSystem {
    let n = p.n();
    let mut a_tilde = DMatrix::zeros(2 * n, 2 * n);
    a_tilde.view_mut((0, 0), (n, n)).copy_from(&p.a);
    a_tilde.view_mut((0, n), (n, n)).copy_from(&p.b());
    a_tilde.view_mut((n, n), (n, n)).copy_from(&p.d());
    let mut b_tilde = DMatrix::zeros(2 * n, n);
    b_tilde.view_mut((n, 0), (n, n)).fill_with_identity();
    AugmentedSystem { n, a_tilde, b_tilde }
}

impl AugmentedSystem {
    /// Popov-Belevitch-Hautus test: `[Ã - λI, B̃]` has full row rank at every
    /// eigenvalue `λ` of `Ã`.
    pub fn pbh_controllable(&self) -> bool {
        let m = 2 * self.n;
        let eigs = self.a_tilde.complex_eigenvalues();
        eigs.iter().all(|&lambda| {
            let pencil = DMatrix::from_fn(m, m + self.n, |i, j| {
                if j < m {
                    let v = Complex::new(self.a_tilde[(i, j)], 0.0);
                    if i == j {
                        v - lambda
                    } else {
                        v
                    }
                } else {
                    Complex::new(self.b_tilde[(i, j - m)], 0.0)
                }
            });
            let sv = pencil.singular_values();
            let smax = sv.max();
            let tol = smax.max(1.0) * (m + self.n) as f64 * f64::EPSILON * 16.0;
            sv.iter().filter(|&&s| s > tol).count() == m
        })
    }
}

/// Fixed point of the cheap-control Riccati recursion and the resulting
/// feedback `ū = G₁ x + G₂ ξ`.
#[derive(Debug, Clone, PartialEq)]
pub struct DareSolution {
    pub x: DMatrix<f64>,
    pub g1: DMatrix<f64>,
    pub g2: DMatrix<f64>,
    pub iterations: usize,
    pub residual: f64,
}

impl DareSolution {
    fn n(&self) -> usize {
        self.g1.nrows()
    }

    pub fn x11(&self) -> DMatrix<f64> {
        let n = self.n();
        self.x.view((0, 0), (n, n)).into_owned()
    }

    pub fn x12(&self) -> DMatrix<f64> {
        let n = self.n();
        self.x.view((0, n), (n, n)).into_owned()
    }

    pub fn x22(&self) -> DMatrix<f64> {
        let n = self.n();
        self.x.view((n, n), (n, n)).into_owned()
    }
}

fn inner_inverse(sys: &AugmentedSystem, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let s = sys.b_tilde.transpose() * x * &sys.b_tilde;
    let s = (&s + s.transpose()) * 0.5;
    s.cholesky()
        .map(|c| c.inverse())
        .ok_or(Error::SingularInnerMatrix)
}

/// One value-iteration step
/// `X ← ÃᵀXÃ − ÃᵀXB̃ (B̃ᵀXB̃)⁻¹ B̃ᵀXÃ + I`, symmetrized.
pub fn riccati_step(sys: &AugmentedSystem, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let s_inv = inner_inverse(sys, x)?;
    let m = sys.b_tilde.transpose() * x * &sys.a_tilde;
    let next = sys.a_tilde.transpose() * x * &sys.a_tilde - m.transpose() * s_inv * &m
        + DMatrix::identity(2 * sys.n, 2 * sys.n);
    Ok((&next + next.transpose()) * 0.5)
}

/// Iterates [`riccati_step`] from `X = I` until the largest entry change
/// drops below `tol · max(1, max|X|)`.
pub fn solve_singular_dare(sys: &AugmentedSystem, tol: f64, max_iter: usize) -> Result<DareSolution> {
    let mut x = DMatrix::identity(2 * sys.n, 2 * sys.n);
    let mut last_change = f64::INFINITY;
    for k in 1..=max_iter {
        let next = riccati_step(sys, &x)?;
        last_change = max_abs(&(&next - &x));
        x = next;
        if last_change < tol * max_abs(&x).max(1.0) {
            return finish(sys, x, k);
        }
    }
    let residual = dare_residual(&x, sys).unwrap_or(f64::NAN);
    Err(Error::NoConvergence { max_iter, last_change, residual })
}

pub fn solve_plant(p: &Plant) -> Result<DareSolution> {
    solve_singular_dare(&augment(p), DEFAULT_TOL, DEFAULT_MAX_ITER)
}

fn finish(sys: &AugmentedSystem, x: DMatrix<f64>, iterations: usize) -> Result<DareSolution> {
    let n = sys.n;
    let s_inv = inner_inverse(sys, &x)?;
    let g = -(s_inv * sys.b_tilde.transpose() * &x * &sys.a_tilde);
    let residual = dare_residual(&x, sys)?;
    Ok(DareSolution {
        g1: g.view((0, 0), (n, n)).into_owned(),
        g2: g.view((0, n), (n, n)).into_owned(),
        x,
        iterations,
        residual,
    })
}

/// Largest entry of `ÃᵀXB̃ (B̃ᵀXB̃)⁻¹ B̃ᵀXÃ − ÃᵀXÃ + X − I`.
pub fn dare_residual(x: &DMatrix<f64>, sys: &AugmentedSystem) -> Result<f64> {
    let s_inv = inner_inverse(sys, x)?;
    let m = sys.b_tilde.transpose() * x * &sys.a_tilde;
    let defect = m.transpose() * s_inv * &m - sys.a_tilde.transpose() * x * &sys.a_tilde + x
        - DMatrix::identity(2 * sys.n, 2 * sys.n);
    Ok(max_abs(&defect))
}

/// `W = Aᵀ (I + B²)⁻¹ A + I`.
pub fn w_matrix(p: &Plant) -> DMatrix<f64> {
    let n = p.n();
    let scale = DMatrix::from_diagonal(&p.b_diag.map(|b| 1.0 / (1.0 + b * b)));
    p.a.transpose() * scale * &p.a + DMatrix::identity(n, n)
}

/// `[[AᵀWA + I, AᵀWB], [BWA, BWB + I]]`, a matrix lower bound on `X`.
pub fn value_lower_bound(p: &Plant) -> DMatrix<f64> {
    let n = p.n();
    let w = w_matrix(p);
    let b = p.b();
    let id = DMatrix::identity(n, n);
    let mut out = DMatrix::zeros(2 * n, 2 * n);
    out.view_mut((0, 0), (n, n)).copy_from(&(p.a.transpose() * &w * &p.a + &id));
    out.view_mut((0, n), (n, n)).copy_from(&(p.a.transpose() * &w * &b));
    out.view_mut((n, 0), (n, n)).copy_from(&(&b * &w * &p.a));
    out.view_mut((n, n), (n, n)).copy_from(&(&b * &w * &b + &id));
    out
}

/// Closed-form Riccati solution for the adversarial family `A = r e_j e_iᵀ`,
/// `B = ε I`, `D = I`:
/// `X = [[AᵀA, εAᵀ], [εA, ε²/(1+ε²) AᵀA + ε² I]] + I`.
pub fn family_solution(a: &DMatrix<f64>, eps_b: f64) -> DMatrix<f64> {
    let n = a.nrows();
    let e2 = eps_b * eps_b;
    let ata = a.transpose() * a;
    let id = DMatrix::identity(n, n);
    let mut x = DMatrix::identity(2 * n, 2 * n);
    x.view_mut((0, 0), (n, n)).add_assign(&ata);
    x.view_mut((0, n), (n, n)).add_assign(&(a.transpose() * eps_b));
    x.view_mut((n, 0), (n, n)).add_assign(&(a * eps_b));
    x.view_mut((n, n), (n, n)).add_assign(&(&ata * (e2 / (1.0 + e2)) + id * e2));
    x
}

trait AddAssignView {
    fn add_assign(&mut self, rhs: &DMatrix<f64>);
}

impl AddAssignView for nalgebra::DMatrixViewMut<'_, f64> {
    fn add_assign(&mut self, rhs: &DMatrix<f64>) {
        for (dst, src) in self.iter_mut().zip(rhs.iter()) {
            *dst += src;
        }
    }
}
