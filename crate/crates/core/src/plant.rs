//! Plant data model: `x⁺ = A x + B (u + w)`, `w⁺ = D w` with diagonal `B`
//! and `D`, structural membership checks, weight normalization, seeded
//! ensembles and the adversarial nilpotent family.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::graphs::DirectedGraph;
use crate::linalg::{self, max_abs};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PlantJson", into = "PlantJson")]
pub struct Plant {
    pub a: DMatrix<f64>,
    pub b_diag: DVector<f64>,
    pub d_diag: DVector<f64>,
    pub x0: DVector<f64>,
    pub w0: DVector<f64>,
}

impl Plant {
    pub fn new(
        a: DMatrix<f64>,
        b_diag: DVector<f64>,
        d_diag: DVector<f64>,
        x0: DVector<f64>,
        w0: DVector<f64>,
    ) -> Result<Self> {
        let p = Self { a, b_diag, d_diag, x0, w0 };
        p.check_dims()?;
        Ok(p)
    }

    /// Scalar plant `x⁺ = a x + b (u + w)`, `w⁺ = d w`.
    pub fn scalar(a: f64, b: f64, d: f64, x0: f64, w0: f64) -> Self {
        Self {
            a: DMatrix::from_element(1, 1, a),
            b_diag: DVector::from_element(1, b),
            d_diag: DVector::from_element(1, d),
            x0: DVector::from_element(1, x0),
            w0: DVector::from_element(1, w0),
        }
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    fn check_dims(&self) -> Result<()> {
        let n = self.a.nrows();
        if n == 0 || self.a.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "A must be square and nonempty, got {}x{}",
                self.a.nrows(),
                self.a.ncols()
            )));
        }
        for (name, len) in [
            ("B_diag", self.b_diag.len()),
            ("D_diag", self.d_diag.len()),
            ("x0", self.x0.len()),
            ("w0", self.w0.len()),
        ] {
            if len != n {
                return Err(Error::DimensionMismatch(format!("{name} has length {len}, expected {n}")));
            }
        }
        Ok(())
    }

    pub fn b(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.b_diag)
    }

    pub fn d(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.d_diag)
    }

    pub fn b_inv(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.b_diag.map(|b| 1.0 / b))
    }

    /// Same model with different initial conditions.
    pub fn with_initial(&self, x0: DVector<f64>, w0: DVector<f64>) -> Self {
        Self { x0, w0, ..self.clone() }
    }
}

/// The structured set an entry failed to belong to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StructureSet {
    #[serde(rename = "A(S_P)")]
    A,
    #[serde(rename = "B(eps_b)")]
    B,
    #[serde(rename = "D")]
    D,
}

impl fmt::Display for StructureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StructureSet::A => "A(S_P)",
            StructureSet::B => "B(eps_b)",
            StructureSet::D => "D",
        })
    }
}

/// One failed membership condition. `entry` is 1-based `(row, col)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub set: StructureSet,
    pub entry: Option<[usize; 2]>,
    pub value: f64,
    pub detail: String,
}

/// Checks `A ∈ A(S_P)`, `B ∈ B(eps_b)` and `D ∈ D`. An empty list means the
/// plant is admissible.
pub fn validate(p: &Plant, g_p: &DirectedGraph, eps_b: f64) -> Result<Vec<Violation>> {
    p.check_dims()?;
    let n = p.n();
    if g_p.n() != n {
        return Err(Error::DimensionMismatch(format!(
            "plant has n = {n} but the plant graph has {} vertices",
            g_p.n()
        )));
    }
    let mut out = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let v = p.a[(i, j)];
            if !v.is_finite() {
                out.push(Violation {
                    set: StructureSet::A,
                    entry: Some([i + 1, j + 1]),
                    value: v,
                    detail: "entry is not finite".into(),
                });
            } else if v != 0.0 && !g_p.mask(i, j) {
                out.push(Violation {
                    set: StructureSet::A,
                    entry: Some([i + 1, j + 1]),
                    value: v,
                    detail: format!("nonzero a_{}{} but the plant graph has no edge {} -> {}", i + 1, j + 1, j + 1, i + 1),
                });
            }
        }
    }
    for (i, &b) in p.b_diag.iter().enumerate() {
        if !b.is_finite() || b.abs() < eps_b {
            out.push(Violation {
                set: StructureSet::B,
                entry: Some([i + 1, i + 1]),
                value: b,
                detail: format!("|b_{0}{0}| = {1} is below eps_b = {eps_b}", i + 1, b.abs()),
            });
        }
    }
    for (i, &d) in p.d_diag.iter().enumerate() {
        if !d.is_finite() {
            out.push(Violation {
                set: StructureSet::D,
                entry: Some([i + 1, i + 1]),
                value: d,
                detail: "entry is not finite".into(),
            });
        }
    }
    Ok(out)
}

/// Non-fatal conditions worth reporting. Disturbance modes with `|d_ii| > 1`
/// are admissible, but the deadbeat cancellation then subtracts two
/// exponentially growing signals and loses precision in floating point.
pub fn precision_warnings(p: &Plant) -> Vec<String> {
    p.d_diag
        .iter()
        .enumerate()
        .filter(|(_, d)| d.abs() > 1.0)
        .map(|(i, d)| {
            format!(
                "|d_{0}{0}| = {1} > 1: disturbance grows geometrically; simulated costs lose precision",
                i + 1,
                d.abs()
            )
        })
        .collect()
}

/// Change of variables `x̄ = Q^{1/2} x`, `ū = R^{1/2} u`, `w̄ = R^{1/2} w` for
/// diagonal weights, so that the identity-weight cost of the result equals
/// the `(Q, R)`-weighted cost of `p`.
pub fn normalize(p: &Plant, q_diag: &[f64], r_diag: &[f64]) -> Result<Plant> {
    let n = p.n();
    for (name, w) in [("q", q_diag), ("r", r_diag)] {
        if w.len() != n {
            return Err(Error::DimensionMismatch(format!("{name} has length {}, expected {n}", w.len())));
        }
        if let Some((index, &value)) = w.iter().enumerate().find(|(_, &v)| !(v > 0.0 && v.is_finite())) {
            return Err(Error::NonPositiveWeight { index, value });
        }
    }
    let qs: Vec<f64> = q_diag.iter().map(|v| v.sqrt()).collect();
    let rs: Vec<f64> = r_diag.iter().map(|v| v.sqrt()).collect();
    Ok(Plant {
        a: DMatrix::from_fn(n, n, |i, j| qs[i] * p.a[(i, j)] / qs[j]),
        b_diag: DVector::from_fn(n, |i, _| qs[i] * p.b_diag[i] / rs[i]),
        d_diag: p.d_diag.clone(),
        x0: DVector::from_fn(n, |i, _| qs[i] * p.x0[i]),
        w0: DVector::from_fn(n, |i, _| rs[i] * p.w0[i]),
    })
}

fn default_a_range() -> [f64; 2] {
    [-2.0, 2.0]
}

fn default_b_extra_range() -> [f64; 2] {
    [0.0, 2.0]
}

fn default_d_range() -> [f64; 2] {
    [-1.0, 1.0]
}

/// A seeded family of random plants on a fixed plant graph.
///
/// Plant `k` is drawn from `ChaCha8Rng::seed_from_u64(seed + k)` (wrapping),
/// so any single plant can be regenerated without the others.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub n: usize,
    pub plant_graph: DirectedGraph,
    pub eps_b: f64,
    #[serde(default = "default_a_range")]
    pub a_range: [f64; 2],
    #[serde(default = "default_b_extra_range")]
    pub b_extra_range: [f64; 2],
    #[serde(default = "default_d_range")]
    pub d_range: [f64; 2],
    pub seed: u64,
    pub count: usize,
}

impl EnsembleSpec {
    /// Spec with the default ranges.
    pub fn new(plant_graph: DirectedGraph, eps_b: f64, seed: u64, count: usize) -> Self {
        Self {
            n: plant_graph.n(),
            plant_graph,
            eps_b,
            a_range: default_a_range(),
            b_extra_range: default_b_extra_range(),
            d_range: default_d_range(),
            seed,
            count,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        if self.n == 0 {
            return bad("n must be positive".into());
        }
        if self.plant_graph.n() != self.n {
            return bad(format!("plant_graph has {} vertices, expected n = {}", self.plant_graph.n(), self.n));
        }
        if !(self.eps_b > 0.0 && self.eps_b.is_finite()) {
            return bad(format!("eps_b must be positive and finite, got {}", self.eps_b));
        }
        for (name, [lo, hi]) in [
            ("a_range", self.a_range),
            ("b_extra_range", self.b_extra_range),
            ("d_range", self.d_range),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return bad(format!("{name} = [{lo}, {hi}] is not a nonempty finite interval"));
            }
        }
        if self.b_extra_range[0] < 0.0 {
            return bad("b_extra_range must lie in [0, inf)".into());
        }
        Ok(())
    }
}

fn uniform(rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2]) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// Plant number `index` of the ensemble.
pub fn sample_plant(spec: &EnsembleSpec, index: usize) -> Plant {
    let n = spec.n;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(index as u64));
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if spec.plant_graph.mask(i, j) {
                a[(i, j)] = uniform(&mut rng, spec.a_range);
            }
        }
    }
    let b_diag = DVector::from_fn(n, |_, _| {
        let mag = spec.eps_b + uniform(&mut rng, spec.b_extra_range);
        if rng.random::<bool>() {
            mag
        } else {
            -mag
        }
    });
    let d_diag = DVector::from_fn(n, |_, _| uniform(&mut rng, spec.d_range));
    let x0 = DVector::from_fn(n, |_, _| rng.sample(StandardNormal));
    let w0 = DVector::from_fn(n, |_, _| rng.sample(StandardNormal));
    Plant { a, b_diag, d_diag, x0, w0 }
}

pub fn sample_ensemble(spec: &EnsembleSpec) -> Result<Vec<Plant>> {
    spec.validate()?;
    Ok((0..spec.count).map(|k| sample_plant(spec, k)).collect())
}

/// Adversarial plant: `A = r e_j e_iᵀ` (single edge `i → j`), `B = eps_b I`,
/// `D = I`, with initial conditions that make every limited-information
/// strategy pay the worst-case ratio as `r → ∞`.
pub fn worst_case_family(i: usize, j: usize, r: f64, eps_b: f64, n: usize) -> Result<Plant> {
    for v in [i, j] {
        if v >= n {
            return Err(Error::VertexOutOfRange { vertex: v, n });
        }
    }
    if i == j {
        return Err(Error::SameIndex(i));
    }
    if r == 0.0 {
        return Err(Error::ZeroParameter);
    }
    if !(eps_b > 0.0) {
        return Err(Error::NonPositiveEpsilon(eps_b));
    }
    let e2 = eps_b * eps_b;
    let c = (e2 + 1.0) * ((4.0 * e2 + 1.0).sqrt() + 1.0);
    let mut a = DMatrix::zeros(n, n);
    a[(j, i)] = r;
    let mut x0 = DVector::zeros(n);
    x0[i] = c / (2.0 * eps_b * r);
    let mut w0 = DVector::zeros(n);
    w0[i] = c / (2.0 * e2 * r);
    w0[j] = -1.0;
    Ok(Plant {
        a,
        b_diag: DVector::from_element(n, eps_b),
        d_diag: DVector::from_element(n, 1.0),
        x0,
        w0,
    })
}

/// `A² = 0` up to `1e-12 · (1 + max|A|²)`.
pub fn is_nilpotent_deg2(a: &DMatrix<f64>) -> bool {
    nilpotency_defect(a) <= 1e-12 * (1.0 + max_abs(a).powi(2))
}

/// `max |A²|`.
pub fn nilpotency_defect(a: &DMatrix<f64>) -> f64 {
    max_abs(&(a * a))
}

#[derive(Serialize, Deserialize)]
struct PlantJson {
    n: usize,
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    #[serde(rename = "B_diag")]
    b_diag: Vec<f64>,
    #[serde(rename = "D_diag")]
    d_diag: Vec<f64>,
    x0: Vec<f64>,
    w0: Vec<f64>,
}

impl TryFrom<PlantJson> for Plant {
    type Error = Error;

    fn try_from(j: PlantJson) -> Result<Self> {
        let a = linalg::from_rows(&j.a, "A")?;
        if a.nrows() != j.n {
            return Err(Error::DimensionMismatch(format!("A has {} rows but n = {}", a.nrows(), j.n)));
        }
        Plant::new(
            a,
            DVector::from_vec(j.b_diag),
            DVector::from_vec(j.d_diag),
            DVector::from_vec(j.x0),
            DVector::from_vec(j.w0),
        )
    }
}

impl From<Plant> for PlantJson {
    fn from(p: Plant) -> Self {
        PlantJson {
            n: p.n(),
            a: linalg::to_rows(&p.a),
            b_diag: p.b_diag.as_slice().to_vec(),
            d_diag: p.d_diag.as_slice().to_vec(),
            x0: p.x0.as_slice().to_vec(),
            w0: p.w0.as_slice().to_vec(),
        }
    }
}
