//! Controller constructions. Every controller has the form
//!
//! ```text
//! x_K⁺ = A_K x_K + B_K x,   x_K(0) = 0
//! u    = C_K x_K + D_K x
//! ```
//!
//! with one scalar controller state per subsystem (`A_K`, `C_K` diagonal).

use std::fmt;
use std::str::FromStr;

use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};

use crate::graphs::DirectedGraph;
use crate::linalg::{self, max_abs};
use crate::plant::{nilpotency_defect, is_nilpotent_deg2, Plant};
use crate::riccati::{self, DareSolution};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Controller {
    #[serde(rename = "A_K", with = "linalg::rows")]
    pub a_k: DMatrix<f64>,
    #[serde(rename = "B_K", with = "linalg::rows")]
    pub b_k: DMatrix<f64>,
    #[serde(rename = "C_K", with = "linalg::rows")]
    pub c_k: DMatrix<f64>,
    #[serde(rename = "D_K", with = "linalg::rows")]
    pub d_k: DMatrix<f64>,
}

impl Controller {
    pub fn zero(n: usize) -> Self {
        Self {
            a_k: DMatrix::zeros(n, n),
            b_k: DMatrix::zeros(n, n),
            c_k: DMatrix::zeros(n, n),
            d_k: DMatrix::zeros(n, n),
        }
    }

    /// Number of plant states the controller reads.
    pub fn n(&self) -> usize {
        self.d_k.ncols()
    }

    /// Controller state dimension.
    pub fn m(&self) -> usize {
        self.a_k.nrows()
    }

    /// Subcontrollers share no state: `A_K` and `C_K` are diagonal.
    pub fn is_state_separated(&self) -> bool {
        let off_diag_zero = |m: &DMatrix<f64>| {
            (0..m.nrows()).all(|i| (0..m.ncols()).all(|j| i == j || m[(i, j)] == 0.0))
        };
        off_diag_zero(&self.a_k) && off_diag_zero(&self.c_k)
    }

    /// Bitwise comparison of subcontroller `i` (row `i` of all four matrices).
    pub(crate) fn row_bits_equal(&self, other: &Controller, i: usize) -> bool {
        [
            (&self.a_k, &other.a_k),
            (&self.b_k, &other.b_k),
            (&self.c_k, &other.c_k),
            (&self.d_k, &other.d_k),
        ]
        .iter()
        .all(|(x, y)| {
            x.ncols() == y.ncols()
                && (0..x.ncols()).all(|j| x[(i, j)].to_bits() == y[(i, j)].to_bits())
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Centralized,
    Deadbeat,
    Theta,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Centralized, Strategy::Deadbeat, Strategy::Theta];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Centralized => "centralized",
            Strategy::Deadbeat => "deadbeat",
            Strategy::Theta => "theta",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| format!("unknown strategy '{s}' (expected centralized, deadbeat or theta)"))
    }
}

pub fn synthesize(strategy: Strategy, p: &Plant, g_p: &DirectedGraph) -> Result<Controller> {
    match strategy {
        Strategy::Centralized => centralized_optimal(p),
        Strategy::Deadbeat => Ok(deadbeat(p)),
        Strategy::Theta => theta(p, g_p),
    }
}

/// Full-information optimum built from the Riccati gains:
/// `A_K = D`, `B_K = G₁ + D G₂ B⁻¹ − G₂ B⁻¹ A`, `C_K = I`, `D_K = G₂ B⁻¹`.
pub fn centralized_optimal(p: &Plant) -> Result<Controller> {
    Ok(centralized_with_solution(p)?.0)
}

pub fn centralized_with_solution(p: &Plant) -> Result<(Controller, DareSolution)> {
    let sol = riccati::solve_plant(p)?;
    Ok((centralized_from_solution(p, &sol), sol))
}

pub fn centralized_from_solution(p: &Plant, sol: &DareSolution) -> Controller {
    let n = p.n();
    let g2_binv = &sol.g2 * p.b_inv();
    let d = p.d();
    Controller {
        a_k: d.clone(),
        b_k: &sol.g1 + &d * &g2_binv - &g2_binv * &p.a,
        c_k: DMatrix::identity(n, n),
        d_k: g2_binv,
    }
}

/// Closed form of the centralized optimum when `A² = 0`:
/// `B_K = D(I+B²)⁻¹B⁻¹A − B⁻¹D²`, `D_K = −(I+B²)⁻¹BA − B⁻¹D`.
pub fn nilpotent_centralized(p: &Plant) -> Result<Controller> {
    if !is_nilpotent_deg2(&p.a) {
        return Err(Error::NotNilpotent(nilpotency_defect(&p.a)));
    }
    let n = p.n();
    let mut b_k = DMatrix::zeros(n, n);
    let mut d_k = DMatrix::zeros(n, n);
    for i in 0..n {
        let (b, d) = (p.b_diag[i], p.d_diag[i]);
        let s = 1.0 + b * b;
        for j in 0..n {
            let a = p.a[(i, j)];
            let diag = if i == j { 1.0 } else { 0.0 };
            b_k[(i, j)] = canon(d * a / (s * b) - diag * d * d / b);
            d_k[(i, j)] = canon(-b * a / s - diag * d / b);
        }
    }
    Ok(Controller {
        a_k: p.d(),
        b_k,
        c_k: DMatrix::identity(n, n),
        d_k,
    })
}

/// Two-step deadbeat: `A_K = D`, `B_K = −B⁻¹D²`, `C_K = I`,
/// `D_K = −B⁻¹(A + D)`.
pub fn deadbeat(p: &Plant) -> Controller {
    row_local(p, &vec![0.0; p.n()])
}

/// Decoupled scalar LQ closed-loop factor for `x⁺ = a x + b μ` with cost
/// `x² + μ²`: the optimal loop is `x⁺ = f · a x`.
pub fn f_gain(a: f64, b: f64) -> Result<f64> {
    if b == 0.0 {
        return Err(Error::ZeroGain);
    }
    let (a2, b2) = (a * a, b * b);
    let disc = (a2 + b2).powi(2) + 2.0 * (b2 - a2) + 1.0;
    Ok(2.0 / (b2 + a2 + 1.0 + disc.sqrt()))
}

/// Deadbeat on non-sink subsystems, scalar-optimal gain on sinks of `g_p`:
/// `B_K = B⁻¹DFA − B⁻¹D²`, `D_K = B⁻¹(F − I)A − B⁻¹D` with
/// `F = diag(f(a_ii, b_ii))` on sinks and zero elsewhere.
pub fn theta(p: &Plant, g_p: &DirectedGraph) -> Result<Controller> {
    let n = p.n();
    if g_p.n() != n {
        return Err(Error::DimensionMismatch(format!(
            "plant has n = {n} but the plant graph has {} vertices",
            g_p.n()
        )));
    }
    let mut f = vec![0.0; n];
    for i in g_p.sinks() {
        f[i] = f_gain(p.a[(i, i)], p.b_diag[i])?;
    }
    Ok(row_local(p, &f))
}

// Normalizes -0.0 to +0.0 so that equal controllers serialize identically.
fn canon(x: f64) -> f64 {
    x + 0.0
}

/// Builds the controller row by row; row `i` reads only `A_i`, `b_ii`,
/// `d_ii` and the sink gain `f[i]`.
fn row_local(p: &Plant, f: &[f64]) -> Controller {
    let n = p.n();
    let mut b_k = DMatrix::zeros(n, n);
    let mut d_k = DMatrix::zeros(n, n);
    for i in 0..n {
        let (b, d, fi) = (p.b_diag[i], p.d_diag[i], f[i]);
        for j in 0..n {
            let a = p.a[(i, j)];
            let coupling = if fi == 0.0 { 0.0 } else { d * fi * a };
            if i == j {
                b_k[(i, j)] = canon((coupling - d * d) / b);
                d_k[(i, j)] = canon(((fi - 1.0) * a - d) / b);
            } else {
                b_k[(i, j)] = canon(coupling / b);
                d_k[(i, j)] = canon((fi - 1.0) * a / b);
            }
        }
    }
    Controller {
        a_k: p.d(),
        b_k,
        c_k: DMatrix::identity(n, n),
        d_k,
    }
}

/// `C_K (zI − A_K)⁻¹ B_K + D_K`.
pub fn transfer_eval(k: &Controller, z: Complex<f64>) -> Result<DMatrix<Complex<f64>>> {
    let m = k.m();
    let to_c = |x: &DMatrix<f64>| x.map(|v| Complex::new(v, 0.0));
    let resolvent = DMatrix::from_fn(m, m, |i, j| {
        let v = Complex::new(-k.a_k[(i, j)], 0.0);
        if i == j {
            v + z
        } else {
            v
        }
    });
    let lu = resolvent.lu();
    let scale = 1.0 + z.norm() + max_abs(&k.a_k);
    let singular = (0..m).any(|i| lu.u()[(i, i)].norm() <= 1e-13 * scale);
    let solved = if singular { None } else { lu.solve(&to_c(&k.b_k)) };
    let solved = solved.ok_or(Error::SingularResolvent { re: z.re, im: z.im })?;
    Ok(to_c(&k.c_k) * solved + to_c(&k.d_k))
}

pub const PROBE_RADIUS: f64 = 3.0;
pub const FALLBACK_RADIUS: f64 = 17.0;
pub const PROBE_COUNT: usize = 8;
pub const SPARSITY_TOL: f64 = 1e-9;

/// Probe points `radius · exp(iπ(2k + 1)/8)`, `k = 0..8`, which avoid the
/// real axis.
pub fn probe_points(radius: f64) -> Vec<Complex<f64>> {
    (0..PROBE_COUNT)
        .map(|k| {
            let theta = std::f64::consts::PI * (2 * k + 1) as f64 / PROBE_COUNT as f64;
            Complex::from_polar(radius, theta)
        })
        .collect()
}

/// Entry `(i, j)` is 1 iff the transfer function entry is nonzero at some
/// probe point (modulus ≥ `tol`).
pub fn sparsity_pattern(k: &Controller, tol: f64) -> DMatrix<u8> {
    let mut radius = PROBE_RADIUS;
    let mut fallback = FALLBACK_RADIUS;
    loop {
        let values: Result<Vec<_>> = probe_points(radius).into_iter().map(|z| transfer_eval(k, z)).collect();
        if let Ok(values) = values {
            let (rows, cols) = (k.c_k.nrows(), k.n());
            return DMatrix::from_fn(rows, cols, |i, j| {
                u8::from(values.iter().any(|v| v[(i, j)].norm() >= tol))
            });
        }
        // Finitely many eigenvalues, so this terminates.
        radius = fallback;
        fallback *= 2.0;
    }
}

/// New model data for one subsystem: its row of `A`, `b_ii` and `d_ii`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowPerturbation {
    pub a_row: Vec<f64>,
    pub b: f64,
    pub d: f64,
}

pub fn apply_perturbation(
    p: &Plant,
    g_p: &DirectedGraph,
    row: usize,
    perturbation: &RowPerturbation,
) -> Result<Plant> {
    let n = p.n();
    let bad = |msg: String| Err(Error::InvalidPerturbation(msg));
    if row >= n {
        return bad(format!("row {} out of range for n = {n}", row + 1));
    }
    if perturbation.a_row.len() != n {
        return bad(format!("a_row has {} entries, expected {n}", perturbation.a_row.len()));
    }
    if let Some(j) = (0..n).find(|&j| perturbation.a_row[j] != 0.0 && !g_p.mask(row, j)) {
        return bad(format!("a_{}{} is outside the plant graph", row + 1, j + 1));
    }
    let values = perturbation.a_row.iter().chain([&perturbation.b, &perturbation.d]);
    if values.clone().any(|v| !v.is_finite()) || perturbation.b == 0.0 {
        return bad("entries must be finite and b must be nonzero".into());
    }
    let mut out = p.clone();
    for j in 0..n {
        out.a[(row, j)] = perturbation.a_row[j];
    }
    out.b_diag[row] = perturbation.b;
    out.d_diag[row] = perturbation.d;
    Ok(out)
}

/// True iff every subcontroller other than `row` is bit-identical before and
/// after replacing subsystem `row`'s model data. The plant graph itself is
/// public, so `theta` may use it on every row.
pub fn limited_info_check(
    strategy: Strategy,
    p: &Plant,
    g_p: &DirectedGraph,
    row: usize,
    perturbation: &RowPerturbation,
) -> Result<bool> {
    let perturbed = apply_perturbation(p, g_p, row, perturbation)?;
    let before = synthesize(strategy, p, g_p)?;
    let after = synthesize(strategy, &perturbed, g_p)?;
    Ok((0..p.n()).filter(|&i| i != row).all(|i| before.row_bits_equal(&after, i)))
}
