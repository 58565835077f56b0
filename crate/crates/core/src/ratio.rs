//! Competitive ratios of the limited-information strategies against the
//! centralized optimum, the adversarial r-sweep and domination experiments.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::evaluation::{centralized_cost_closed_form, simulate_cost, SimOptions};
use crate::graphs::{is_diagonal_mask, is_zero_mask, DirectedGraph};
use crate::plant::{sample_plant, worst_case_family, EnsembleSpec, Plant};
use crate::riccati::solve_plant;
use crate::synthesis::{synthesize, Strategy};
use crate::{Error, Result};

/// Attached to every report: the denominator is the centralized optimum.
pub const DENOMINATOR_CAVEAT: &str = "denominator is the full-information optimum J(K*_C), which \
    never exceeds the structured optimum; each ratio is an upper bound on the structured per-plant \
    ratio and is exact when A is nilpotent of degree two. Ensemble maxima are lower estimates of \
    the supremum.";

/// Absolute cost slack used by domination comparisons.
pub const DOMINATION_TOL: f64 = 1e-9;

/// Upper bound on the deadbeat competitive ratio over plants with
/// `min |b_ii| ≥ eps_b`.
pub fn ratio_bound(eps_b: f64) -> Result<f64> {
    if !(eps_b > 0.0) {
        return Err(Error::NonPositiveEpsilon(eps_b));
    }
    let e2 = eps_b * eps_b;
    Ok((2.0 * e2 + 1.0 + (4.0 * e2 + 1.0).sqrt()) / (2.0 * e2))
}

/// One row of a ratio report. Infinite costs serialize as null.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioEntry {
    pub plant_id: usize,
    pub r_param: Option<f64>,
    #[serde(rename = "J_strategy")]
    pub j_strategy: Option<f64>,
    #[serde(rename = "J_centralized")]
    pub j_centralized: f64,
    pub ratio: Option<f64>,
}

/// Parameters of an adversarial sweep; vertices are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyParams {
    pub i: usize,
    pub j: usize,
    pub eps_b: f64,
    pub r_grid: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioReport {
    pub strategy: Strategy,
    pub per_plant: Vec<RatioEntry>,
    /// Max of the finite per-plant ratios, `None` for an empty report.
    pub sup_estimate: Option<f64>,
    pub analytic_bound: f64,
    pub family_params: Option<FamilyParams>,
    pub caveat: String,
}

impl RatioReport {
    fn assemble(
        strategy: Strategy,
        per_plant: Vec<RatioEntry>,
        analytic_bound: f64,
        family_params: Option<FamilyParams>,
    ) -> Self {
        let sup_estimate = per_plant
            .iter()
            .filter_map(|e| e.ratio)
            .filter(|r| r.is_finite())
            .fold(None, |acc: Option<f64>, r| Some(acc.map_or(r, |m| m.max(r))));
        Self {
            strategy,
            per_plant,
            sup_estimate,
            analytic_bound,
            family_params,
            caveat: DENOMINATOR_CAVEAT.to_string(),
        }
    }

    /// Ids of plants whose ratio is below one by more than `1e-9`.
    pub fn below_one(&self) -> Vec<usize> {
        self.per_plant
            .iter()
            .filter(|e| e.ratio.is_some_and(|r| r < 1.0 - 1e-9))
            .map(|e| e.plant_id)
            .collect()
    }

    /// CSV with header `plant_id,r_param,J_strategy,J_centralized,ratio,bound`,
    /// one row per plant and a final `bound` row. Numbers use the shortest
    /// round-trip form; missing values are empty, infinite ones `inf`.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let num = |v: f64| v.to_string();
        let opt = |v: Option<f64>| v.map_or_else(|| "inf".to_string(), num);
        w.write_record(["plant_id", "r_param", "J_strategy", "J_centralized", "ratio", "bound"])
            .expect("in-memory write");
        for e in &self.per_plant {
            w.write_record([
                e.plant_id.to_string(),
                e.r_param.map_or_else(String::new, num),
                opt(e.j_strategy),
                num(e.j_centralized),
                opt(e.ratio),
                num(self.analytic_bound),
            ])
            .expect("in-memory write");
        }
        w.write_record(["bound", "", "", "", "", &num(self.analytic_bound)])
            .expect("in-memory write");
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
    }
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// Numerator, denominator and ratio for one plant.
pub fn ratio_entry(
    p: &Plant,
    strategy: Strategy,
    g_p: &DirectedGraph,
    plant_id: usize,
    r_param: Option<f64>,
) -> Result<RatioEntry> {
    let ctrl = synthesize(strategy, p, g_p)?;
    let numerator = simulate_cost(p, &ctrl, &SimOptions::default())?.total;
    let denominator = centralized_cost_closed_form(p, &solve_plant(p)?);
    let ratio = if denominator == 0.0 {
        if numerator == 0.0 {
            1.0
        } else {
            return Err(Error::IndeterminateRatio { numerator });
        }
    } else {
        numerator / denominator
    };
    Ok(RatioEntry {
        plant_id,
        r_param,
        j_strategy: finite(numerator),
        j_centralized: denominator,
        ratio: finite(ratio),
    })
}

/// `J(strategy) / J(K*_C)` with `0/0 = 1`; infinite for a destabilizing
/// strategy.
pub fn per_plant_ratio(p: &Plant, strategy: Strategy, g_p: &DirectedGraph) -> Result<f64> {
    Ok(ratio_entry(p, strategy, g_p, 0, None)?.ratio.unwrap_or(f64::INFINITY))
}

/// Deadbeat ratios on `worst_case_family(i, j, r, eps_b, n)` for each `r`.
pub fn ratio_sweep(i: usize, j: usize, eps_b: f64, r_grid: &[f64], n: usize) -> Result<RatioReport> {
    if r_grid.is_empty() {
        return Err(Error::InvalidSpec("r grid is empty".into()));
    }
    let bound = ratio_bound(eps_b)?;
    let plants = r_grid
        .iter()
        .map(|&r| worst_case_family(i, j, r, eps_b, n))
        .collect::<Result<Vec<_>>>()?;
    let g_p = DirectedGraph::empty(n).with_edge(i, j);
    let per_plant = plants
        .par_iter()
        .zip(r_grid.par_iter())
        .enumerate()
        .map(|(k, (p, &r))| ratio_entry(p, Strategy::Deadbeat, &g_p, k, Some(r)))
        .collect::<Result<Vec<_>>>()?;
    let params = FamilyParams { i: i + 1, j: j + 1, eps_b, r_grid: r_grid.to_vec() };
    Ok(RatioReport::assemble(Strategy::Deadbeat, per_plant, bound, Some(params)))
}

/// Ratios of `strategy` over a seeded ensemble, in plant order.
pub fn ensemble_ratios(spec: &EnsembleSpec, strategy: Strategy) -> Result<RatioReport> {
    spec.validate()?;
    let bound = ratio_bound(spec.eps_b)?;
    let per_plant = (0..spec.count)
        .into_par_iter()
        .map(|k| ratio_entry(&sample_plant(spec, k), strategy, &spec.plant_graph, k, None))
        .collect::<Result<Vec<_>>>()?;
    Ok(RatioReport::assemble(strategy, per_plant, bound, None))
}

/// Two-term closed form for the optimal cost on the adversarial family.
/// Shares its `r → ∞` limit with [`worst_case_optimal_cost_exact`] but
/// undershoots it at finite `r`.
pub fn worst_case_optimal_cost(eps_b: f64, r: f64) -> Result<f64> {
    if r == 0.0 {
        return Err(Error::ZeroParameter);
    }
    if !(eps_b > 0.0) {
        return Err(Error::NonPositiveEpsilon(eps_b));
    }
    let e2 = eps_b * eps_b;
    let s = (4.0 * e2 + 1.0).sqrt();
    let limit = (e2 * s + 5.0 * e2 + 4.0 * e2 * e2 + s + 1.0) / (2.0 * e2);
    Ok(limit + (2.0 * e2 + s + 1.0) * s / (2.0 * e2 * r * r))
}

/// Exact optimal cost on the adversarial family, from the explicit Riccati
/// solution.
pub fn worst_case_optimal_cost_exact(eps_b: f64, r: f64) -> Result<f64> {
    if r == 0.0 {
        return Err(Error::ZeroParameter);
    }
    if !(eps_b > 0.0) {
        return Err(Error::NonPositiveEpsilon(eps_b));
    }
    let e2 = eps_b * eps_b;
    let s = (4.0 * e2 + 1.0).sqrt();
    let r2 = r * r;
    let num = e2 * r2 * (4.0 * e2 + s + 5.0)
        + e2 * (2.0 * e2 * e2 + e2 * s + 5.0 * e2 + 2.0 * s + 4.0)
        + r2 * (s + 1.0)
        + s
        + 1.0;
    Ok(num / (2.0 * e2 * r2))
}

/// Per-plant costs of two strategies on one ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominationReport {
    pub strategy_a: Strategy,
    pub strategy_b: Strategy,
    /// `(J_a, J_b)` per plant; null for infinite costs.
    pub costs: Vec<(Option<f64>, Option<f64>)>,
    pub a_never_worse: bool,
    pub a_strictly_better_somewhere: bool,
    /// Index of the plant where `a` is worse by the largest margin.
    pub worst_plant: Option<usize>,
    /// `max_k J_a − J_b`.
    pub max_excess: f64,
}

impl DominationReport {
    /// Sample evidence only; never a proof over the whole plant class.
    pub fn a_dominates_on_sample(&self) -> bool {
        self.a_never_worse && self.a_strictly_better_somewhere
    }
}

pub fn domination_check(
    strategy_a: Strategy,
    strategy_b: Strategy,
    ensemble: &EnsembleSpec,
    g_p: &DirectedGraph,
) -> Result<DominationReport> {
    ensemble.validate()?;
    let opts = SimOptions::default();
    let costs = (0..ensemble.count)
        .into_par_iter()
        .map(|k| {
            let p = sample_plant(ensemble, k);
            let ja = simulate_cost(&p, &synthesize(strategy_a, &p, g_p)?, &opts)?.total;
            let jb = simulate_cost(&p, &synthesize(strategy_b, &p, g_p)?, &opts)?.total;
            Ok((ja, jb))
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let excess = |(a, b): (f64, f64)| if a == b { 0.0 } else { a - b };
    let mut max_excess = f64::NEG_INFINITY;
    let mut worst_plant = None;
    for (k, &c) in costs.iter().enumerate() {
        let e = excess(c);
        if e > max_excess || e.is_nan() {
            max_excess = e;
            worst_plant = Some(k);
        }
    }
    Ok(DominationReport {
        strategy_a,
        strategy_b,
        a_never_worse: costs.iter().all(|&(a, b)| a <= b + DOMINATION_TOL || a == b),
        a_strictly_better_somewhere: costs.iter().any(|&(a, b)| a < b - DOMINATION_TOL),
        costs: costs.iter().map(|&(a, b)| (finite(a), finite(b))).collect(),
        worst_plant,
        max_excess: if costs.is_empty() { 0.0 } else { max_excess },
    })
}

/// `min_x x² + (a + b x)² = a² / (1 + b²)`.
pub fn scalar_quadratic_bound(a: f64, b: f64) -> f64 {
    a * a / (1.0 + b * b)
}

/// What is known analytically about the sink-aware strategy's ratio on a
/// plant graph.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "case", rename_all = "snake_case")]
pub enum ThetaCase {
    /// Non-sink block has a cross edge: same bound as deadbeat.
    BoundCase { ratio: f64 },
    /// Only non-sink to sink edges: the strategy is optimal.
    ExactOneCase,
    OpenCase,
}

pub fn theta_ratio_case(g_p: &DirectedGraph, eps_b: f64) -> Result<ThetaCase> {
    let isolated = g_p.isolated_nodes();
    if !isolated.is_empty() {
        return Err(Error::IsolatedNodes(isolated.into_iter().collect()));
    }
    let part = g_p.sink_partition();
    if !is_diagonal_mask(&part.s11) {
        Ok(ThetaCase::BoundCase { ratio: ratio_bound(eps_b)? })
    } else if is_zero_mask(&part.s11) && is_zero_mask(&part.s22) {
        Ok(ThetaCase::ExactOneCase)
    } else {
        Ok(ThetaCase::OpenCase)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthesis::centralized_optimal;
    use approx::assert_relative_eq;

    #[test]
    fn bound_values() {
        assert_relative_eq!(ratio_bound(1.0).unwrap(), 2.618033988749895, max_relative = 1e-15);
        assert_relative_eq!(ratio_bound(0.5).unwrap(), 5.82842712474619, max_relative = 1e-14);
        // 1 + 1/eps + O(1/eps²), so the approach to one is slow.
        assert_relative_eq!(ratio_bound(1e3).unwrap(), 1.001000500125, max_relative = 1e-14);
        assert!(ratio_bound(1e8).unwrap() - 1.0 < 1.1e-8);
        assert_eq!(ratio_bound(0.0), Err(Error::NonPositiveEpsilon(0.0)));
        assert!(ratio_bound(-1.0).is_err());
    }

    #[test]
    fn zero_over_zero_is_one() {
        let p = Plant::scalar(0.7, 1.2, 0.5, 0.0, 0.0);
        let g = DirectedGraph::self_loops(1);
        for s in Strategy::ALL {
            assert_eq!(per_plant_ratio(&p, s, &g).unwrap(), 1.0);
        }
    }

    #[test]
    fn centralized_self_ratio() {
        let spec = EnsembleSpec::new(DirectedGraph::complete(3), 1.0, 12, 30);
        let rep = ensemble_ratios(&spec, Strategy::Centralized).unwrap();
        for e in &rep.per_plant {
            assert!((e.ratio.unwrap() - 1.0).abs() <= 1e-9, "{e:?}");
        }
    }

    #[test]
    fn deadbeat_ratio_under_bound() {
        let spec = EnsembleSpec::new(DirectedGraph::complete(3), 1.0, 5, 60);
        let rep = ensemble_ratios(&spec, Strategy::Deadbeat).unwrap();
        assert!(rep.sup_estimate.unwrap() <= 2.6180340 + 1e-6);
        assert_eq!(rep.per_plant.len(), 60);
        assert!(rep.per_plant.iter().enumerate().all(|(k, e)| e.plant_id == k));
    }

    #[test]
    fn sweep_approaches_bound() {
        let grid = [1.0, 10.0, 100.0, 1000.0];
        let rep = ratio_sweep(0, 1, 1.0, &grid, 2).unwrap();
        let ratios: Vec<f64> = rep.per_plant.iter().map(|e| e.ratio.unwrap()).collect();
        assert!(ratios.iter().all(|r| r.is_finite()));
        let last = *ratios.last().unwrap();
        assert!(ratios.iter().all(|&r| r <= last));
        assert!((last / 2.6180340 - 1.0).abs() < 0.01);
        assert_eq!(rep.sup_estimate, Some(last));
        assert_eq!(rep.family_params.as_ref().unwrap().i, 1);
    }

    #[test]
    fn sweep_rejects_bad_input() {
        assert!(matches!(ratio_sweep(0, 1, 1.0, &[], 2), Err(Error::InvalidSpec(_))));
        assert_eq!(ratio_sweep(1, 1, 1.0, &[1.0], 2).unwrap_err(), Error::SameIndex(1));
        assert_eq!(ratio_sweep(0, 1, 1.0, &[0.0], 2).unwrap_err(), Error::ZeroParameter);
    }

    #[test]
    fn stated_family_cost_values() {
        assert_relative_eq!(worst_case_optimal_cost(1.0, 1e9).unwrap(), 5.0 + 5f64.sqrt(), max_relative = 1e-12);
        assert_relative_eq!(worst_case_optimal_cost(1.0, 10.0).unwrap(), 7.2946090, max_relative = 1e-7);
        assert_relative_eq!(worst_case_optimal_cost(1.0, 1.0).unwrap(), 13.0901699, max_relative = 1e-8);
        assert_eq!(worst_case_optimal_cost(1.0, 0.0), Err(Error::ZeroParameter));
    }

    #[test]
    fn exact_family_cost_matches_simulation() {
        for (eps, r) in [(1.0, 10.0), (1.0, 1.0), (0.5, 3.0), (2.0, 0.7)] {
            let p = worst_case_family(0, 1, r, eps, 2).unwrap();
            let sim = simulate_cost(&p, &centralized_optimal(&p).unwrap(), &SimOptions::default())
                .unwrap()
                .total;
            assert_relative_eq!(worst_case_optimal_cost_exact(eps, r).unwrap(), sim, max_relative = 1e-9);
        }
        assert_relative_eq!(worst_case_optimal_cost_exact(1.0, 10.0).unwrap(), 7.340789337, max_relative = 1e-9);
    }

    #[test]
    fn stated_and_exact_family_costs_share_the_limit() {
        let a = worst_case_optimal_cost(1.0, 1e8).unwrap();
        let b = worst_case_optimal_cost_exact(1.0, 1e8).unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-14);
    }

    #[test]
    fn self_domination() {
        let spec = EnsembleSpec::new(DirectedGraph::chain(3, true), 1.0, 8, 20);
        let r = domination_check(Strategy::Deadbeat, Strategy::Deadbeat, &spec, &spec.plant_graph).unwrap();
        assert!(r.a_never_worse);
        assert!(!r.a_strictly_better_somewhere);
        assert!(!r.a_dominates_on_sample());
    }

    #[test]
    fn no_sink_strategies_coincide() {
        let g = DirectedGraph::from_edges(3, &[(0, 1), (1, 2), (2, 0), (0, 0)]).unwrap();
        let spec = EnsembleSpec::new(g.clone(), 1.0, 3, 20);
        let r = domination_check(Strategy::Deadbeat, Strategy::Theta, &spec, &g).unwrap();
        assert!(r.costs.iter().all(|(a, b)| a == b));
        assert!(r.a_never_worse && !r.a_strictly_better_somewhere);
        assert_eq!(r.max_excess, 0.0);
    }

    #[test]
    fn theta_never_worse_from_rest() {
        let g = DirectedGraph::chain(4, true);
        let mut spec = EnsembleSpec::new(g.clone(), 1.0, 21, 40);
        spec.count = 40;
        let all: Vec<Plant> = (0..40).map(|k| sample_plant(&spec, k)).collect();
        for p in all {
            let p = p.with_initial(p.x0.map(|_| 0.0), p.w0.clone());
            let opts = SimOptions::default();
            let jt = simulate_cost(&p, &synthesize(Strategy::Theta, &p, &g).unwrap(), &opts).unwrap().total;
            let jd = simulate_cost(&p, &synthesize(Strategy::Deadbeat, &p, &g).unwrap(), &opts).unwrap().total;
            assert!(jt <= jd + DOMINATION_TOL, "{jt} > {jd}");
        }
    }

    #[test]
    fn theta_can_lose_with_nonzero_initial_state() {
        let p = Plant::scalar(0.5, 1.0, 0.3, 1.0, 0.5);
        let g = DirectedGraph::self_loops(1);
        let opts = SimOptions::default();
        let jt = simulate_cost(&p, &synthesize(Strategy::Theta, &p, &g).unwrap(), &opts).unwrap().total;
        let jd = simulate_cost(&p, &synthesize(Strategy::Deadbeat, &p, &g).unwrap(), &opts).unwrap().total;
        assert_relative_eq!(jd, 1.14, max_relative = 1e-9);
        assert!(jt > jd + 0.05);
    }

    #[test]
    fn centralized_can_lose_with_nonzero_initial_state() {
        let p = Plant::scalar(1.147, -2.831, 0.3406, -0.9088, 0.4384);
        let g = DirectedGraph::self_loops(1);
        assert!(per_plant_ratio(&p, Strategy::Deadbeat, &g).unwrap() < 1.0);
    }

    #[test]
    fn quadratic_bound_examples() {
        assert_eq!(scalar_quadratic_bound(1.0, 0.0), 1.0);
        assert_eq!(scalar_quadratic_bound(2.0, 1.0), 2.0);
        assert_eq!(scalar_quadratic_bound(0.0, 7.0), 0.0);
        let x = -1.0;
        assert_eq!(x * x + (2.0 + x) * (2.0 + x), 2.0);
    }

    #[test]
    fn theta_case_examples() {
        let chain = DirectedGraph::chain(3, false);
        assert!(matches!(theta_ratio_case(&chain, 1.0).unwrap(), ThetaCase::BoundCase { ratio } if (ratio - 2.6180340).abs() < 1e-7));
        let star = DirectedGraph::from_edges(3, &[(0, 1), (0, 2)]).unwrap();
        assert_eq!(theta_ratio_case(&star, 1.0).unwrap(), ThetaCase::ExactOneCase);
        let looped = star.clone().with_edge(0, 0);
        assert_eq!(theta_ratio_case(&looped, 1.0).unwrap(), ThetaCase::OpenCase);
        let isolated = DirectedGraph::from_edges(3, &[(0, 1)]).unwrap();
        assert_eq!(theta_ratio_case(&isolated, 1.0), Err(Error::IsolatedNodes(vec![2])));
    }

    #[test]
    fn csv_layout() {
        let rep = ratio_sweep(0, 1, 0.5, &[1.0], 2).unwrap();
        let csv = rep.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], "plant_id,r_param,J_strategy,J_centralized,ratio,bound");
        assert!(lines[1].starts_with("0,1,"));
        let bound: f64 = lines[2].strip_prefix("bound,,,,,").unwrap().parse().unwrap();
        assert_relative_eq!(bound, 5.8284271, max_relative = 1e-7);
    }

    #[test]
    fn json_round_trip() {
        let rep = ratio_sweep(0, 1, 1.0, &[1.0, 2.0], 2).unwrap();
        let json = serde_json::to_string(&rep).unwrap();
        let back: RatioReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, rep);
        assert!(json.contains("\"caveat\""));
    }
}
