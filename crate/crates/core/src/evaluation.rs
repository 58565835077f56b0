//! Closed-loop costs `J = Σ_k |x(k)|² + |u(k) + w(k)|²`, by simulation and in
//! closed form. All costs are in identity-weight coordinates; apply
//! [`crate::plant::normalize`] first for other diagonal weights.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::plant::Plant;
use crate::riccati::{w_matrix, DareSolution};
use crate::synthesis::Controller;
use crate::{Error, Result};

/// Combined closed loop over the stacked state `(x, w, x_K)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoop {
    pub n: usize,
    pub m: usize,
    /// One-step map of `(x, w, x_K)`.
    pub transition: DMatrix<f64>,
    /// Maps `(x, w, x_K)` to the cost output `(x, u + w)`.
    pub output: DMatrix<f64>,
}

impl ClosedLoop {
    pub fn initial_state(&self, p: &Plant) -> DVector<f64> {
        let mut s = DVector::zeros(2 * self.n + self.m);
        s.rows_mut(0, self.n).copy_from(&p.x0);
        s.rows_mut(self.n, self.n).copy_from(&p.w0);
        s
    }
}

pub fn closed_loop(p: &Plant, k: &Controller) -> Result<ClosedLoop> {
    let n = p.n();
    let m = k.m();
    let shapes = [
        ("A_K", k.a_k.shape(), (m, m)),
        ("B_K", k.b_k.shape(), (m, n)),
        ("C_K", k.c_k.shape(), (n, m)),
        ("D_K", k.d_k.shape(), (n, n)),
    ];
    for (name, got, want) in shapes {
        if got != want {
            return Err(Error::DimensionMismatch(format!(
                "{name} is {}x{}, expected {}x{}",
                got.0, got.1, want.0, want.1
            )));
        }
    }
    let b = p.b();
    let dim = 2 * n + m;
    let mut t = DMatrix::zeros(dim, dim);
    t.view_mut((0, 0), (n, n)).copy_from(&(&p.a + &b * &k.d_k));
    t.view_mut((0, n), (n, n)).copy_from(&b);
    t.view_mut((0, 2 * n), (n, m)).copy_from(&(&b * &k.c_k));
    t.view_mut((n, n), (n, n)).copy_from(&p.d());
    t.view_mut((2 * n, 0), (m, n)).copy_from(&k.b_k);
    t.view_mut((2 * n, 2 * n), (m, m)).copy_from(&k.a_k);

    let mut out = DMatrix::zeros(2 * n, dim);
    out.view_mut((0, 0), (n, n)).fill_with_identity();
    out.view_mut((n, 0), (n, n)).copy_from(&k.d_k);
    out.view_mut((n, n), (n, n)).fill_with_identity();
    out.view_mut((n, 2 * n), (n, m)).copy_from(&k.c_k);
    Ok(ClosedLoop { n, m, transition: t, output: out })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub tol_abs: f64,
    pub quiet_steps: usize,
    pub max_steps: usize,
    pub divergence_cap: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            tol_abs: 1e-12,
            quiet_steps: 10,
            max_steps: 10_000,
            divergence_cap: 1e12,
        }
    }
}

/// Outcome of a cost simulation. When neither `converged` nor `diverged` is
/// set the step budget ran out and `total` is a lower estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    #[serde(serialize_with = "ser_finite_or_null", deserialize_with = "de_null_as_inf")]
    pub total: f64,
    pub steps_used: usize,
    pub converged: bool,
    pub diverged: bool,
    #[serde(serialize_with = "ser_finite_or_null", deserialize_with = "de_null_as_inf")]
    pub tail_estimate: f64,
}

impl CostReport {
    pub fn is_lower_estimate(&self) -> bool {
        !self.converged && !self.diverged
    }
}

// JSON has no infinity; a diverged total is written as null.
fn ser_finite_or_null<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_none()
    }
}

fn de_null_as_inf<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
}

pub fn simulate_cost(p: &Plant, k: &Controller, opts: &SimOptions) -> Result<CostReport> {
    let cl = closed_loop(p, k)?;
    let mut state = cl.initial_state(p);
    let mut total = 0.0;
    let mut quiet = 0;
    let mut window_max: f64 = 0.0;
    let mut last = 0.0;
    for step in 0..opts.max_steps {
        let y = &cl.output * &state;
        let c = y.norm_squared();
        total += c;
        last = c;
        if !total.is_finite() || total > opts.divergence_cap {
            return Ok(CostReport {
                total: f64::INFINITY,
                steps_used: step + 1,
                converged: false,
                diverged: true,
                tail_estimate: f64::INFINITY,
            });
        }
        if c < opts.tol_abs {
            quiet += 1;
            window_max = window_max.max(c);
            if quiet >= opts.quiet_steps {
                return Ok(CostReport {
                    total,
                    steps_used: step + 1,
                    converged: true,
                    diverged: false,
                    tail_estimate: window_max,
                });
            }
        } else {
            quiet = 0;
            window_max = 0.0;
        }
        state = &cl.transition * &state;
    }
    Ok(CostReport {
        total,
        steps_used: opts.max_steps,
        converged: false,
        diverged: false,
        tail_estimate: last,
    })
}

/// State and `u + w` sequences for `steps` steps.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub x: Vec<DVector<f64>>,
    pub input_plus_disturbance: Vec<DVector<f64>>,
}

pub fn simulate_trajectory(p: &Plant, k: &Controller, steps: usize) -> Result<Trajectory> {
    let cl = closed_loop(p, k)?;
    let n = cl.n;
    let mut state = cl.initial_state(p);
    let mut x = Vec::with_capacity(steps);
    let mut mu = Vec::with_capacity(steps);
    for _ in 0..steps {
        let y = &cl.output * &state;
        x.push(y.rows(0, n).into_owned());
        mu.push(y.rows(n, n).into_owned());
        state = &cl.transition * &state;
    }
    Ok(Trajectory { x, input_plus_disturbance: mu })
}

fn stack(top: &DVector<f64>, bottom: &DVector<f64>) -> DVector<f64> {
    let n = top.len();
    DVector::from_fn(n + bottom.len(), |i, _| if i < n { top[i] } else { bottom[i - n] })
}

fn blocks(b11: DMatrix<f64>, b12: DMatrix<f64>, b22: DMatrix<f64>) -> DMatrix<f64> {
    let n = b11.nrows();
    let mut out = DMatrix::zeros(2 * n, 2 * n);
    out.view_mut((n, 0), (n, n)).copy_from(&b12.transpose());
    out.view_mut((0, 0), (n, n)).copy_from(&b11);
    out.view_mut((0, n), (n, n)).copy_from(&b12);
    out.view_mut((n, n), (n, n)).copy_from(&b22);
    out
}

/// `[[Q₁₁, Q₁₂], [Q₁₂ᵀ, Q₂₂]]` with `J(deadbeat) = zᵀ Q z`, `z = (x₀, B w₀)`.
pub fn deadbeat_cost_matrix(p: &Plant) -> DMatrix<f64> {
    let n = p.n();
    let id = DMatrix::identity(n, n);
    let a = &p.a;
    let at = a.transpose();
    let d = p.d();
    let bm2 = DMatrix::from_diagonal(&p.b_diag.map(|b| 1.0 / (b * b)));
    let at_bm2_a = &at * &bm2 * a;
    let q11 = &id + &d * &d * (&id + &bm2) + &at_bm2_a + &d * &at_bm2_a * &d + &at * &bm2 * &d + &d * &bm2 * a;
    let q12 = -&d - &at * &bm2 - &d * &bm2 - &d * &at_bm2_a;
    let q22 = &at_bm2_a + &bm2 + &id;
    blocks(q11, q12, q22)
}

pub fn deadbeat_cost_closed_form(p: &Plant) -> f64 {
    let z = stack(&p.x0, &p.b_diag.component_mul(&p.w0));
    (z.transpose() * deadbeat_cost_matrix(p) * &z)[(0, 0)]
}

/// `[[V₁₁, V₁₂], [V₁₂ᵀ, V₂₂]]` with `V₁₁ = W + D²B⁻² + DWD`,
/// `V₁₂ = −D(W + B⁻²)`, `V₂₂ = W + B⁻²`.
pub fn lower_bound_matrix(p: &Plant) -> DMatrix<f64> {
    let w = w_matrix(p);
    let d = p.d();
    let bm2 = DMatrix::from_diagonal(&p.b_diag.map(|b| 1.0 / (b * b)));
    let v11 = &w + &d * &d * &bm2 + &d * &w * &d;
    let v12 = -(&d * (&w + &bm2));
    let v22 = &w + &bm2;
    blocks(v11, v12, v22)
}

/// Quadratic lower bound on the centralized optimum's cost.
pub fn centralized_lower_bound(p: &Plant) -> f64 {
    let z = stack(&p.x0, &p.b_diag.component_mul(&p.w0));
    (z.transpose() * lower_bound_matrix(p) * &z)[(0, 0)]
}

/// `(x₀, ξ₀)ᵀ X (x₀, ξ₀)` with `ξ₀ = G₂ B⁻¹ x₀ + w₀`, the cost of the
/// controller built from `sol`.
pub fn centralized_cost_closed_form(p: &Plant, sol: &DareSolution) -> f64 {
    let xi0 = &sol.g2 * p.x0.component_div(&p.b_diag) + &p.w0;
    let v = stack(&p.x0, &xi0);
    (v.transpose() * &sol.x * &v)[(0, 0)]
}
