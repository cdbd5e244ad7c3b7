//! Best policies per narrative, the best-response correspondence over
//! narrative-policy pairs, the fixed-point equilibrium solver in the action
//! frequency, and the closed-form bound oracles for three-variable models.

use serde::{Deserialize, Serialize};

use crate::belief::{factorize, net_utility, Belief, CostFunction};
use crate::dag::CausalDag;
use crate::error::{Error, Result};
use crate::prob::{ConditionalFamily, JointDistribution};

/// A proposed action frequency, constrained to `[epsilon, 1 - epsilon]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Policy {
    pub d: f64,
}

impl Policy {
    pub fn new(d: f64, epsilon: f64) -> Result<Self> {
        if !(epsilon..=1.0 - epsilon).contains(&d) {
            return Err(Error::Domain(format!(
                "policy d={d} outside [{epsilon}, {}]",
                1.0 - epsilon
            )));
        }
        Ok(Policy { d })
    }
}

/// Index of a narrative inside a scenario: which conditional family and
/// which causal model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NarrativeId {
    pub q: usize,
    pub dag: usize,
}

/// Solver tolerances and scan resolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverParams {
    /// Number of grid points in the initial scan over the action frequency.
    pub scan_points: usize,
    /// Bisection terminates when the bracketing interval is this narrow.
    pub alpha_tol: f64,
    /// Two utilities within this tolerance count as tied.
    pub tie_tol: f64,
    /// A pure candidate is accepted when `|d - alpha|` ends up below this.
    pub pure_tol: f64,
    /// Scenario counts as rational-expectations-only when no narrative's
    /// belief slope exceeds this anywhere on the scan grid.
    pub re_tol: f64,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            scan_points: 1024,
            alpha_tol: 1e-12,
            tie_tol: 1e-9,
            pure_tol: 1e-8,
            re_tol: 1e-9,
        }
    }
}

/// A fully instantiated model: regularized conditional families, causal
/// models, cost, and solver settings.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub n: usize,
    pub mu: f64,
    pub d_star: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub cost: CostFunction,
    pub families: Vec<ConditionalFamily>,
    pub dags: Vec<CausalDag>,
    pub params: SolverParams,
}

impl Scenario {
    pub fn narrative_count(&self) -> usize {
        self.families.len() * self.dags.len()
    }

    /// Belief of one narrative at a given historical action frequency.
    pub fn belief(&self, alpha: f64, id: NarrativeId) -> Result<Belief> {
        let p = JointDistribution::build(alpha, self.mu, &self.families[id.q])?;
        factorize(&p, &self.dags[id.dag])
    }

    /// Beliefs of every narrative at a given action frequency, indexed
    /// `[q][dag]`.
    pub fn beliefs_at(&self, alpha: f64) -> Result<Vec<Vec<Belief>>> {
        let mut out = Vec::with_capacity(self.families.len());
        for q in &self.families {
            let p = JointDistribution::build(alpha, self.mu, q)?;
            let mut row = Vec::with_capacity(self.dags.len());
            for dag in &self.dags {
                row.push(factorize(&p, dag)?);
            }
            out.push(row);
        }
        Ok(out)
    }
}

/// Unique maximizer of net anticipatory utility over the policy interval.
/// Quadratic costs admit the closed form `d* + slope / (2k)`, clamped.
pub fn best_policy(
    belief: &Belief,
    cost: &CostFunction,
    d_star: f64,
    epsilon: f64,
) -> Result<(f64, f64)> {
    let slope = belief.slope();
    let d = match cost {
        CostFunction::Quadratic { k } => (d_star + slope / (2.0 * k)).clamp(epsilon, 1.0 - epsilon),
    };
    let u = net_utility(belief, d, cost, d_star)?;
    Ok((d, u))
}

/// Derivative-bisection maximizer for any symmetric convex cost; the net
/// utility is strictly concave in the policy, so the sign of
/// `slope - C'(d - d*)` brackets the optimum. Kept as an independent route
/// against the closed form.
pub fn best_policy_bisect(
    belief: &Belief,
    cost: &CostFunction,
    d_star: f64,
    epsilon: f64,
) -> Result<(f64, f64)> {
    let slope = belief.slope();
    let g = |d: f64| slope - cost.derivative(d - d_star);
    let (mut lo, mut hi) = (epsilon, 1.0 - epsilon);
    let d = if g(lo) <= 0.0 {
        lo
    } else if g(hi) >= 0.0 {
        hi
    } else {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-14 {
                break;
            }
        }
        0.5 * (lo + hi)
    };
    let u = net_utility(belief, d, cost, d_star)?;
    Ok((d, u))
}

fn restricted_best(
    belief: &Belief,
    cost: &CostFunction,
    d_star: f64,
    lo: f64,
    hi: f64,
) -> Result<(f64, f64)> {
    let slope = belief.slope();
    let d = match cost {
        CostFunction::Quadratic { k } => (d_star + slope / (2.0 * k)).clamp(lo, hi),
    };
    let u = net_utility(belief, d, cost, d_star)?;
    Ok((d, u))
}

/// Best policy/utility on one side of the current action frequency,
/// together with every narrative tied at that optimum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SideBest {
    pub policy: f64,
    pub utility: f64,
    pub ties: Vec<NarrativeId>,
}

/// The best-response correspondence at one action frequency.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BestResponse {
    /// Global maximum of net anticipatory utility.
    pub value: f64,
    /// Every narrative-policy pair attaining the maximum within the tie
    /// tolerance, canonical order.
    pub maximizers: Vec<(NarrativeId, f64)>,
    /// Best over policies weakly right of the action frequency.
    pub right: SideBest,
    /// Best over policies weakly left of the action frequency.
    pub left: SideBest,
    /// Largest absolute belief slope across narratives (for the
    /// rational-expectations test).
    pub max_abs_slope: f64,
}

/// Evaluate the best response at a given action frequency: the best policy
/// for every narrative, global maximizers with ties, and the side-restricted
/// optima used by the mixed-equilibrium construction.
pub fn best_response(alpha: f64, scenario: &Scenario) -> Result<BestResponse> {
    if scenario.families.is_empty() || scenario.dags.is_empty() {
        return Err(Error::Domain(
            "scenario needs at least one conditional family and one DAG".to_string(),
        ));
    }
    let eps = scenario.epsilon;
    if !(eps..=1.0 - eps).contains(&alpha) {
        return Err(Error::Domain(format!(
            "action frequency alpha={alpha} outside [{eps}, {}]",
            1.0 - eps
        )));
    }
    let beliefs = scenario.beliefs_at(alpha)?;
    let tie = scenario.params.tie_tol;

    let mut value = f64::NEG_INFINITY;
    let mut entries: Vec<(NarrativeId, f64, f64)> = Vec::new();
    let mut right: Vec<(NarrativeId, f64, f64)> = Vec::new();
    let mut left: Vec<(NarrativeId, f64, f64)> = Vec::new();
    let mut max_abs_slope: f64 = 0.0;
    for (qi, row) in beliefs.iter().enumerate() {
        for (di, belief) in row.iter().enumerate() {
            let id = NarrativeId { q: qi, dag: di };
            max_abs_slope = max_abs_slope.max(belief.slope().abs());
            let (d, u) = best_policy(belief, &scenario.cost, scenario.d_star, eps)?;
            entries.push((id, d, u));
            value = value.max(u);
            let (dr, ur) = restricted_best(belief, &scenario.cost, scenario.d_star, alpha, 1.0 - eps)?;
            right.push((id, dr, ur));
            let (dl, ul) = restricted_best(belief, &scenario.cost, scenario.d_star, eps, alpha)?;
            left.push((id, dl, ul));
        }
    }

    let maximizers: Vec<(NarrativeId, f64)> = entries
        .iter()
        .filter(|(_, _, u)| *u >= value - tie)
        .map(|(id, d, _)| (*id, *d))
        .collect();

    let side = |list: &[(NarrativeId, f64, f64)]| -> SideBest {
        let best = list.iter().cloned().fold(f64::NEG_INFINITY, |m, (_, _, u)| m.max(u));
        let near: Vec<&(NarrativeId, f64, f64)> =
            list.iter().filter(|(_, _, u)| *u >= best - tie).collect();
        let policy = near[0].1;
        let ties: Vec<NarrativeId> = near
            .iter()
            .filter(|(_, d, _)| (d - policy).abs() <= tie)
            .map(|(id, _, _)| *id)
            .collect();
        SideBest {
            policy,
            utility: best,
            ties,
        }
    };

    Ok(BestResponse {
        value,
        maximizers,
        right: side(&right),
        left: side(&left),
        max_abs_slope,
    })
}

/// How an equilibrium resolves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EquilibriumKind {
    Pure,
    Mixed,
    RationalExpectations,
}

/// One element of the equilibrium support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportPoint {
    pub narrative: NarrativeId,
    pub policy: Policy,
    pub weight: f64,
}

/// An equilibrium: an action frequency plus a weighted support of
/// narrative-policy pairs maximizing net anticipatory utility at that
/// frequency, whose average policy reproduces the frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumSolution {
    pub alpha: f64,
    pub support: Vec<SupportPoint>,
    pub u_star: f64,
    pub kind: EquilibriumKind,
}

impl EquilibriumSolution {
    /// Support weights grouped by (near-equal) policy value, ascending.
    pub fn policies(&self) -> Vec<(f64, f64)> {
        let mut groups: Vec<(f64, f64)> = Vec::new();
        let mut points: Vec<(f64, f64)> =
            self.support.iter().map(|s| (s.policy.d, s.weight)).collect();
        points.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        for (d, w) in points {
            match groups.last_mut() {
                Some((gd, gw)) if (d - *gd).abs() <= 1e-7 => *gw += w,
                _ => groups.push((d, w)),
            }
        }
        groups
    }
}

/// One row of the scan over candidate action frequencies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub alpha: f64,
    pub u_right: f64,
    pub u_left: f64,
    /// `u_right - u_left`; mixed equilibria sit at its sign changes.
    pub gap: f64,
    /// Policy of the first global maximizer.
    pub best_policy: f64,
}

/// Every equilibrium the scan-and-bisect search found, plus the scan itself
/// (attached to diagnostics when the list is empty).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub solutions: Vec<EquilibriumSolution>,
    pub scan: Vec<ScanPoint>,
}

fn uniform_support(ids: &[NarrativeId], d: f64, weight: f64, epsilon: f64) -> Result<Vec<SupportPoint>> {
    let w = weight / ids.len() as f64;
    ids.iter()
        .map(|&narrative| {
            Ok(SupportPoint {
                narrative,
                policy: Policy::new(d, epsilon)?,
                weight: w,
            })
        })
        .collect()
}

/// Find every equilibrium of the scenario.
///
/// Search order: (a) if no narrative can tilt the belief anywhere, the
/// rational-expectations outcome `(d*, weight 1)` is returned; (b) pure
/// candidates where the globally best policy crosses the action frequency
/// itself; (c) mixed candidates at sign changes of the right/left utility
/// gap, with the two-point support weighted to reproduce the frequency.
pub fn solve_all(scenario: &Scenario) -> Result<SolveReport> {
    let eps = scenario.epsilon;
    let p = &scenario.params;
    if p.scan_points < 8 {
        return Err(Error::Domain("scan_points must be at least 8".to_string()));
    }
    let lo = eps;
    let hi = 1.0 - eps;
    let step = (hi - lo) / (p.scan_points - 1) as f64;

    let mut scan = Vec::with_capacity(p.scan_points);
    let mut responses = Vec::with_capacity(p.scan_points);
    let mut max_abs_slope: f64 = 0.0;
    for i in 0..p.scan_points {
        let alpha = if i + 1 == p.scan_points { hi } else { lo + step * i as f64 };
        let br = best_response(alpha, scenario)?;
        max_abs_slope = max_abs_slope.max(br.max_abs_slope);
        scan.push(ScanPoint {
            alpha,
            u_right: br.right.utility,
            u_left: br.left.utility,
            gap: br.right.utility - br.left.utility,
            best_policy: br.maximizers[0].1,
        });
        responses.push(br);
    }

    // (a) Rational-expectations scenario: every narrative is flat, so the
    // ideal policy prevails and every narrative ties.
    if max_abs_slope <= p.re_tol {
        let ids: Vec<NarrativeId> = (0..scenario.families.len())
            .flat_map(|q| (0..scenario.dags.len()).map(move |dag| NarrativeId { q, dag }))
            .collect();
        let support = uniform_support(&ids, scenario.d_star, 1.0, eps)?;
        return Ok(SolveReport {
            solutions: vec![EquilibriumSolution {
                alpha: scenario.d_star,
                support,
                u_star: scenario.mu,
                kind: EquilibriumKind::RationalExpectations,
            }],
            scan,
        });
    }

    let mut solutions: Vec<EquilibriumSolution> = Vec::new();

    // (b) Pure candidates: the globally best policy equals the frequency.
    let h = |br: &BestResponse, alpha: f64| br.maximizers[0].1 - alpha;
    for i in 1..scan.len() {
        let h0 = h(&responses[i - 1], scan[i - 1].alpha);
        let h1 = h(&responses[i], scan[i].alpha);
        if h0 == 0.0 || h0 * h1 > 0.0 {
            if h0 == 0.0 && h1 != 0.0 {
                // exact zero on a grid point; fall through to refinement
            } else {
                continue;
            }
        }
        let (mut a0, mut a1) = (scan[i - 1].alpha, scan[i].alpha);
        let mut s0 = h0;
        for _ in 0..200 {
            if a1 - a0 < p.alpha_tol {
                break;
            }
            let mid = 0.5 * (a0 + a1);
            let bm = best_response(mid, scenario)?;
            let hm = h(&bm, mid);
            if (hm >= 0.0) == (s0 >= 0.0) {
                a0 = mid;
                s0 = hm;
            } else {
                a1 = mid;
            }
        }
        let alpha = 0.5 * (a0 + a1);
        let br = best_response(alpha, scenario)?;
        let d = br.maximizers[0].1;
        if (d - alpha).abs() <= p.pure_tol {
            let ids: Vec<NarrativeId> = br
                .maximizers
                .iter()
                .filter(|(_, dj)| (dj - d).abs() <= p.tie_tol)
                .map(|(id, _)| *id)
                .collect();
            solutions.push(EquilibriumSolution {
                alpha,
                support: uniform_support(&ids, d, 1.0, eps)?,
                u_star: br.value,
                kind: EquilibriumKind::Pure,
            });
        }
    }

    // (c) Mixed candidates: sign changes of the right/left utility gap.
    for i in 1..scan.len() {
        let g0 = scan[i - 1].gap;
        let g1 = scan[i].gap;
        if !(g0 == 0.0 && g1 != 0.0) && g0 * g1 > 0.0 {
            continue;
        }
        if g0 != 0.0 && g1 == 0.0 {
            continue; // the next interval starts at this zero
        }
        let (mut a0, mut a1) = (scan[i - 1].alpha, scan[i].alpha);
        let mut s0 = g0;
        for _ in 0..200 {
            if a1 - a0 < p.alpha_tol {
                break;
            }
            let mid = 0.5 * (a0 + a1);
            let bm = best_response(mid, scenario)?;
            let gm = bm.right.utility - bm.left.utility;
            if (gm >= 0.0) == (s0 >= 0.0) {
                a0 = mid;
                s0 = gm;
            } else {
                a1 = mid;
            }
        }
        let alpha = 0.5 * (a0 + a1);
        let br = best_response(alpha, scenario)?;
        let (d_r, d_l) = (br.right.policy, br.left.policy);
        // Near a pure crossing the gap is quadratic in the distance to the
        // root, so its sign localizes the root only to about sqrt(f64 eps);
        // side policies closer than this collapse to a pure point.
        const DEGENERATE_TOL: f64 = 1e-6;
        if (d_r - d_l).abs() <= DEGENERATE_TOL {
            let mut ids = br.right.ties.clone();
            for id in &br.left.ties {
                if !ids.contains(id) {
                    ids.push(*id);
                }
            }
            solutions.push(EquilibriumSolution {
                alpha,
                support: uniform_support(&ids, alpha, 1.0, eps)?,
                u_star: br.value,
                kind: EquilibriumKind::Pure,
            });
            continue;
        }
        let sigma_r = (alpha - d_l) / (d_r - d_l);
        if !(-1e-9..=1.0 + 1e-9).contains(&sigma_r) {
            continue;
        }
        let sigma_r = sigma_r.clamp(0.0, 1.0);
        let mut support = uniform_support(&br.right.ties, d_r, sigma_r, eps)?;
        support.extend(uniform_support(&br.left.ties, d_l, 1.0 - sigma_r, eps)?);
        solutions.push(EquilibriumSolution {
            alpha,
            support,
            u_star: 0.5 * (br.right.utility + br.left.utility),
            kind: EquilibriumKind::Mixed,
        });
    }

    // Merge near-identical roots; the pure and mixed searches can land on
    // the same crossing, in which case the pure classification wins.
    solutions.sort_by(|a, b| a.alpha.partial_cmp(&b.alpha).unwrap());
    let mut merged: Vec<EquilibriumSolution> = Vec::new();
    for sol in solutions {
        match merged.last_mut() {
            Some(prev) if (prev.alpha - sol.alpha).abs() <= 1e-7 => {
                if prev.kind == EquilibriumKind::Mixed && sol.kind == EquilibriumKind::Pure {
                    *prev = sol;
                }
            }
            _ => merged.push(sol),
        }
    }
    Ok(SolveReport {
        solutions: merged,
        scan,
    })
}

/// First equilibrium in canonical order, or a solver diagnostic when the
/// full scan produced none.
pub fn solve(scenario: &Scenario) -> Result<EquilibriumSolution> {
    let report = solve_all(scenario)?;
    report.solutions.into_iter().next().ok_or_else(|| {
        Error::Solver("no equilibrium found at the requested tolerances".to_string())
    })
}

/// Independent re-verification of both equilibrium conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub alpha: f64,
    /// `|1 - sum of weights|`.
    pub weight_sum_error: f64,
    /// `|alpha - sum_i weight_i * d_i|`.
    pub consistency_residual: f64,
    /// Reference best-response value recomputed from scratch (closed form
    /// cross-checked against a dense policy grid).
    pub reference_value: f64,
    /// Largest shortfall of a support element against the reference value.
    pub max_optimality_gap: f64,
    pub flagged: bool,
}

/// Re-derive both equilibrium conditions for a proposed solution: weights
/// form a distribution, the weighted policy average reproduces the
/// frequency, and every support element attains the best-response value.
/// The reference value is recomputed independently of the solver path via
/// a dense grid over policies.
pub fn consistency_check(
    solution: &EquilibriumSolution,
    scenario: &Scenario,
) -> Result<ConsistencyReport> {
    let alpha = solution.alpha;
    let weight_sum: f64 = solution.support.iter().map(|s| s.weight).sum();
    let avg_policy: f64 = solution.support.iter().map(|s| s.weight * s.policy.d).sum();
    let beliefs = scenario.beliefs_at(alpha)?;

    // Dense-grid reference: 4097 policy points per narrative.
    let eps = scenario.epsilon;
    let mut reference = f64::NEG_INFINITY;
    let grid = 4096usize;
    for row in &beliefs {
        for belief in row {
            let (d_cf, u_cf) = best_policy(belief, &scenario.cost, scenario.d_star, eps)?;
            let (d_bi, u_bi) = best_policy_bisect(belief, &scenario.cost, scenario.d_star, eps)?;
            debug_assert!((d_cf - d_bi).abs() < 1e-9);
            reference = reference.max(u_cf).max(u_bi);
            for i in 0..=grid {
                let d = eps + (1.0 - 2.0 * eps) * i as f64 / grid as f64;
                reference = reference.max(net_utility(belief, d, &scenario.cost, scenario.d_star)?);
            }
        }
    }

    let mut max_gap = f64::NEG_INFINITY;
    for s in &solution.support {
        let u = net_utility(
            &beliefs[s.narrative.q][s.narrative.dag],
            s.policy.d,
            &scenario.cost,
            scenario.d_star,
        )?;
        max_gap = max_gap.max(reference - u);
    }
    let weight_sum_error = (1.0 - weight_sum).abs();
    let consistency_residual = (alpha - avg_policy).abs();
    let flagged =
        weight_sum_error > 1e-9 || consistency_residual > 1e-8 || max_gap > 1e-8;
    Ok(ConsistencyReport {
        alpha,
        weight_sum_error,
        consistency_residual,
        reference_value: reference,
        max_optimality_gap: max_gap,
        flagged,
    })
}

/// Which three-variable causal model to search over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchDagKind {
    /// Chain `1 → 2 → 3`.
    Lever,
    /// Collider `1 → 3 ← 2`.
    Collider,
}

impl SearchDagKind {
    pub fn dag(&self) -> CausalDag {
        match self {
            SearchDagKind::Lever => CausalDag::new(vec![1, 2, 3], vec![(1, 2), (2, 3)]),
            SearchDagKind::Collider => CausalDag::new(vec![1, 2, 3], vec![(1, 3), (2, 3)]),
        }
    }
}

/// Settings for [`optimal_narrative_search`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchParams {
    /// Regularization applied to every candidate family before evaluation.
    pub delta: f64,
    /// Coarse grid step over the four conditional probabilities.
    pub grid: f64,
    /// Local refinement step around the coarse optimum.
    pub refine: f64,
}

impl Default for SearchParams {
    fn default() -> Self {
        Self {
            delta: 1e-8,
            grid: 0.05,
            refine: 0.01,
        }
    }
}

/// Result of maximizing the believed good-outcome probability over
/// conditional families.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchResult {
    /// Overall argmax, as the four probabilities `p(x_2=1|a,y)` in row
    /// order `(0,0),(0,1),(1,0),(1,1)`.
    pub q_star: [f64; 4],
    pub value: f64,
    /// Best corner (entries in {0,1}) and its value.
    pub corner_q: [f64; 4],
    pub corner_value: f64,
    /// Best grid point (coarse plus local refinement) and its value.
    pub grid_q: [f64; 4],
    pub grid_value: f64,
    /// Human-readable label when the optimum is a corner.
    pub pattern: Option<String>,
}

/// Name for a deterministic family `p(x_2 = 1 | a, y) ∈ {0,1}`.
pub fn corner_pattern_label(bits: [u8; 4]) -> String {
    match bits {
        [0, 1, 1, 1] => "y + a(1-y)".to_string(),
        [1, 1, 0, 1] => "y + (1-a)(1-y)".to_string(),
        [0, 0, 1, 0] => "a(1-y)".to_string(),
        [1, 0, 0, 0] => "(1-a)(1-y)".to_string(),
        [0, 0, 0, 1] => "ay".to_string(),
        [1, 1, 1, 0] => "1 - ay".to_string(),
        [0, 1, 0, 0] => "(1-a)y".to_string(),
        [1, 0, 1, 1] => "1 - (1-a)y".to_string(),
        _ => format!("corner[{},{},{},{}]", bits[0], bits[1], bits[2], bits[3]),
    }
}

/// Maximize `p_R(y = 1 | a = target)` over three-variable conditional
/// families by corner enumeration plus grid refinement. Corner and grid
/// routes are both reported so they can check each other.
pub fn optimal_narrative_search(
    kind: SearchDagKind,
    alpha: f64,
    mu: f64,
    target: u8,
    params: &SearchParams,
) -> Result<SearchResult> {
    if !(alpha > 0.0 && alpha < 1.0 && mu > 0.0 && mu < 1.0) {
        return Err(Error::Domain(
            "alpha and mu must lie strictly in (0,1)".to_string(),
        ));
    }
    if target > 1 {
        return Err(Error::Domain("target action must be 0 or 1".to_string()));
    }
    if !(params.grid > 0.0 && params.grid <= 0.5) {
        return Err(Error::Domain(format!(
            "grid step {} outside (0, 0.5]",
            params.grid
        )));
    }
    let dag = kind.dag();
    let eval = |q4: [f64; 4]| -> Result<f64> {
        let family = ConditionalFamily::from_x2_probs(q4)?.perturb_full_support(params.delta)?;
        let p = JointDistribution::build(alpha, mu, &family)?;
        Ok(factorize(&p, &dag)?.p_good_outcome(target))
    };

    // Relabeling the auxiliary variable (complementing every row) leaves
    // the belief unchanged, so corner optima come at least in pairs, and
    // knife-edge parameter points can tie further corners. Canonical
    // representative: among near-ties, prefer the labeling in which the
    // auxiliary variable reads 1 whenever the outcome is good
    // (p01 = p11 = 1), then the largest bit pattern.
    let mut corner_evals: Vec<([f64; 4], usize, f64)> = Vec::with_capacity(16);
    for bits in 0..16usize {
        let q4 = [
            (bits & 1) as f64,
            (bits >> 1 & 1) as f64,
            (bits >> 2 & 1) as f64,
            (bits >> 3 & 1) as f64,
        ];
        corner_evals.push((q4, bits, eval(q4)?));
    }
    let best = corner_evals
        .iter()
        .map(|e| e.2)
        .fold(f64::NEG_INFINITY, f64::max);
    let (corner_q, _, corner_value) = corner_evals
        .iter()
        .filter(|e| e.2 >= best - 1e-12)
        .max_by_key(|(_, bits, _)| {
            let success_aligned = bits & 0b1010 == 0b1010;
            (success_aligned, *bits)
        })
        .cloned()
        .unwrap();

    let steps = (1.0 / params.grid).round() as usize;
    let mut grid_q = [0.0; 4];
    let mut grid_value = f64::NEG_INFINITY;
    let clamp01 = |x: f64| x.clamp(0.0, 1.0);
    for i0 in 0..=steps {
        for i1 in 0..=steps {
            for i2 in 0..=steps {
                for i3 in 0..=steps {
                    let q4 = [
                        clamp01(i0 as f64 * params.grid),
                        clamp01(i1 as f64 * params.grid),
                        clamp01(i2 as f64 * params.grid),
                        clamp01(i3 as f64 * params.grid),
                    ];
                    let v = eval(q4)?;
                    if v > grid_value {
                        grid_value = v;
                        grid_q = q4;
                    }
                }
            }
        }
    }
    // Local refinement in a one-step window around the coarse optimum.
    let refine_steps = (2.0 * params.grid / params.refine).round() as usize;
    let base = grid_q;
    for i0 in 0..=refine_steps {
        for i1 in 0..=refine_steps {
            for i2 in 0..=refine_steps {
                for i3 in 0..=refine_steps {
                    let q4 = [
                        clamp01(base[0] - params.grid + i0 as f64 * params.refine),
                        clamp01(base[1] - params.grid + i1 as f64 * params.refine),
                        clamp01(base[2] - params.grid + i2 as f64 * params.refine),
                        clamp01(base[3] - params.grid + i3 as f64 * params.refine),
                    ];
                    let v = eval(q4)?;
                    if v > grid_value {
                        grid_value = v;
                        grid_q = q4;
                    }
                }
            }
        }
    }

    let (q_star, value) = if corner_value >= grid_value {
        (corner_q, corner_value)
    } else {
        (grid_q, grid_value)
    };
    let pattern = if corner_value >= value - 1e-9 {
        let bits = [
            corner_q[0] as u8,
            corner_q[1] as u8,
            corner_q[2] as u8,
            corner_q[3] as u8,
        ];
        Some(corner_pattern_label(bits))
    } else {
        None
    };
    Ok(SearchResult {
        q_star,
        value,
        corner_q,
        corner_value,
        grid_q,
        grid_value,
        pattern,
    })
}

/// Believed `P(y=1|a=1)` of the `y + a(1-y)` lever family:
/// `mu / (mu + alpha (1 - mu))`. This is the largest value any lever
/// narrative attains on part of the parameter space; for large action
/// frequencies the `ay` family exceeds it (see the corner search).
pub fn lever_bound(alpha: f64, mu: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0 && mu > 0.0 && mu < 1.0) {
        return Err(Error::Domain(
            "alpha and mu must lie strictly in (0,1)".to_string(),
        ));
    }
    Ok(mu / (mu + alpha * (1.0 - mu)))
}

/// Largest believed `P(y=1|a=1)` an opportunity narrative can attain:
/// `1 - alpha (1 - mu)`.
pub fn opportunity_bound(alpha: f64, mu: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0 && mu > 0.0 && mu < 1.0) {
        return Err(Error::Domain(
            "alpha and mu must lie strictly in (0,1)".to_string(),
        ));
    }
    Ok(1.0 - alpha * (1.0 - mu))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{builtin_config, instantiate, BuiltinOverrides};
    use crate::testutil::*;

    fn claim1_scenario() -> Scenario {
        let config = builtin_config("claim1", &BuiltinOverrides::default()).unwrap();
        instantiate(&config).unwrap()
    }

    fn short_narratives_scenario() -> Scenario {
        let config = builtin_config("short-narratives", &BuiltinOverrides::default()).unwrap();
        instantiate(&config).unwrap()
    }

    #[test]
    fn best_policy_closed_form_and_clamping() {
        let scn = claim1_scenario();
        let alpha = 0.5;
        // Opportunity narrative: d = 1/2 + (2 - alpha)/(8k).
        let collider_idx = scn.dags.iter().position(|d| d == &collider3()).unwrap();
        let belief = scn.belief(alpha, NarrativeId { q: 0, dag: collider_idx }).unwrap();
        let (d, _) = best_policy(&belief, &scn.cost, scn.d_star, scn.epsilon).unwrap();
        assert!((d - (0.5 + (2.0 - alpha) / 8.0)).abs() < 1e-6);
        // Flat belief stays at the ideal point.
        let flat_idx = scn
            .dags
            .iter()
            .position(|d| d.edges() == [(1usize, 3usize)])
            .unwrap();
        let flat = scn.belief(alpha, NarrativeId { q: 0, dag: flat_idx }).unwrap();
        let (d, _) = best_policy(&flat, &scn.cost, scn.d_star, scn.epsilon).unwrap();
        assert!((d - scn.d_star).abs() < 1e-9);
        // A tiny k forces the clamp to the interval edge.
        let cheap = CostFunction::quadratic(0.01).unwrap();
        let (d, _) = best_policy(&belief, &cheap, scn.d_star, scn.epsilon).unwrap();
        assert!((d - (1.0 - scn.epsilon)).abs() < 1e-12);
    }

    #[test]
    fn best_policy_matches_bisection() {
        let scn = claim1_scenario();
        for alpha in [0.2, 0.5, 0.8] {
            for di in 0..scn.dags.len() {
                let belief = scn.belief(alpha, NarrativeId { q: 0, dag: di }).unwrap();
                let (d1, u1) = best_policy(&belief, &scn.cost, scn.d_star, scn.epsilon).unwrap();
                let (d2, u2) =
                    best_policy_bisect(&belief, &scn.cost, scn.d_star, scn.epsilon).unwrap();
                assert!((d1 - d2).abs() < 1e-9, "closed form {d1} vs bisect {d2}");
                assert!((u1 - u2).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn best_response_claim1_structure() {
        let scn = claim1_scenario();
        let br = best_response(0.5, &scn).unwrap();
        // The opportunity narrative dominates at alpha = 1/2 with d > 1/2.
        let collider_idx = scn.dags.iter().position(|d| d == &collider3()).unwrap();
        assert!(br
            .maximizers
            .iter()
            .any(|(id, d)| id.dag == collider_idx && *d > 0.5));
        assert!(br.right.utility > br.left.utility);
    }

    #[test]
    fn solve_claim1_reproduces_closed_form() {
        let scn = claim1_scenario();
        let sol = solve(&scn).unwrap();
        let expected_alpha = 2.0 - 2.0_f64.sqrt();
        assert!(
            (sol.alpha - expected_alpha).abs() < 1e-3,
            "alpha = {}, expected ~{expected_alpha}",
            sol.alpha
        );
        assert_eq!(sol.kind, EquilibriumKind::Mixed);
        let policies = sol.policies();
        assert_eq!(policies.len(), 2);
        let d_l = 0.5 - 2.0_f64.sqrt() / 8.0;
        let d_r = 0.5 + 2.0_f64.sqrt() / 8.0;
        assert!((policies[0].0 - d_l).abs() < 1e-3);
        assert!((policies[1].0 - d_r).abs() < 1e-3);
        let sigma_r = (expected_alpha - d_l) / (d_r - d_l);
        assert!((policies[1].1 - sigma_r).abs() < 1e-3);
        // Hawkish side is the opportunity model, dovish side the lever.
        let collider_idx = scn.dags.iter().position(|d| d == &collider3()).unwrap();
        let lever_idx = scn.dags.iter().position(|d| d == &chain3()).unwrap();
        for s in &sol.support {
            if s.policy.d > 0.5 {
                assert_eq!(s.narrative.dag, collider_idx);
            } else {
                assert_eq!(s.narrative.dag, lever_idx);
            }
        }
        let check = consistency_check(&sol, &scn).unwrap();
        assert!(!check.flagged, "{check:?}");
    }

    #[test]
    fn solve_single_narrative_pure_fixed_point() {
        // Only the opportunity model available: the fixed point solves
        // alpha = 1/2 + (2 - alpha) / (8k), i.e. alpha = 2/3 at k = 1.
        let mut scn = claim1_scenario();
        scn.dags = vec![collider3()];
        let sol = solve(&scn).unwrap();
        assert_eq!(sol.kind, EquilibriumKind::Pure);
        assert!((sol.alpha - 2.0 / 3.0).abs() < 1e-4, "alpha = {}", sol.alpha);
        assert!((sol.support[0].policy.d - sol.alpha).abs() < 1e-7);
        let check = consistency_check(&sol, &scn).unwrap();
        assert!(!check.flagged);
    }

    #[test]
    fn solve_rational_expectations_scenario() {
        // Keep only models with no action-outcome channel.
        let mut scn = claim1_scenario();
        scn.dags = vec![
            CausalDag::new(vec![1, 3], vec![]),
            CausalDag::new(vec![1, 2, 3], vec![(3, 2)]),
            CausalDag::new(vec![1, 2, 3], vec![(1, 2), (1, 3), (2, 3)]),
        ];
        let sol = solve(&scn).unwrap();
        assert_eq!(sol.kind, EquilibriumKind::RationalExpectations);
        assert!((sol.alpha - scn.d_star).abs() < 1e-12);
        assert!((sol.u_star - scn.mu).abs() < 1e-12);
        let total: f64 = sol.support.iter().map(|s| s.weight).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn right_branch_maximizes_believed_success() {
        // With perfect models, which narrative wins on the d > alpha side
        // depends only on the ordinal ranking: it maximizes P(y=1|a=1).
        let scn = short_narratives_scenario();
        let alpha = 0.45;
        let beliefs = scn.beliefs_at(alpha).unwrap();
        let br = best_response(alpha, &scn).unwrap();
        let best_p1 = beliefs
            .iter()
            .flatten()
            .map(|b| b.p_good_outcome(1))
            .fold(f64::NEG_INFINITY, f64::max);
        for id in &br.right.ties {
            let b = &beliefs[id.q][id.dag];
            assert!((b.p_good_outcome(1) - best_p1).abs() < 1e-9);
        }
        // And the winner set is the same at any two policies right of alpha.
        let rank = |d: f64| -> Vec<usize> {
            let mut us: Vec<(usize, f64)> = beliefs
                .iter()
                .flatten()
                .enumerate()
                .map(|(i, b)| {
                    (i, net_utility(b, d, &scn.cost, scn.d_star).unwrap())
                })
                .collect();
            let best = us.iter().map(|x| x.1).fold(f64::NEG_INFINITY, f64::max);
            us.retain(|x| x.1 >= best - 1e-9);
            us.into_iter().map(|x| x.0).collect()
        };
        assert_eq!(rank(alpha + 0.1), rank(alpha + 0.2));
    }

    #[test]
    fn diminishing_returns_on_short_narratives() {
        let scn = short_narratives_scenario();
        let mut prev: Option<(f64, f64)> = None;
        for i in 0..64 {
            let alpha = 0.2 + 0.6 * i as f64 / 63.0;
            let br = best_response(alpha, &scn).unwrap();
            if let Some((ur, ul)) = prev {
                assert!(br.right.utility < ur + 1e-12, "U_r not decreasing at {alpha}");
                assert!(br.left.utility > ul - 1e-12, "U_l not increasing at {alpha}");
            }
            prev = Some((br.right.utility, br.left.utility));
        }
    }

    #[test]
    fn consistency_check_flags_bad_solutions() {
        let scn = claim1_scenario();
        let sol = solve(&scn).unwrap();
        // Violated consistency identity.
        let mut broken = sol.clone();
        broken.alpha = 0.9;
        let check = consistency_check(&broken, &scn).unwrap();
        assert!(check.flagged);
        assert!(check.consistency_residual > 0.1);
        // Suboptimal support narrative.
        let mut sub = sol.clone();
        let flat_idx = scn
            .dags
            .iter()
            .position(|d| d.edges() == [(1usize, 3usize)])
            .unwrap();
        for s in sub.support.iter_mut() {
            s.narrative = NarrativeId { q: 0, dag: flat_idx };
        }
        let check = consistency_check(&sub, &scn).unwrap();
        assert!(check.flagged);
        assert!(check.max_optimality_gap > 1e-3);
    }

    #[test]
    fn narrative_search_lever_corner() {
        let params = SearchParams {
            grid: 0.25,
            ..SearchParams::default()
        };
        let r = optimal_narrative_search(SearchDagKind::Lever, 0.5, 0.5, 1, &params).unwrap();
        assert_eq!(r.pattern.as_deref(), Some("y + a(1-y)"));
        assert!((r.value - 2.0 / 3.0).abs() < 1e-4);
        assert!((r.corner_value - lever_bound(0.5, 0.5).unwrap()).abs() < 1e-4);
        // Corner and dense-grid routes agree on the optimum.
        assert!((r.corner_value - r.grid_value).abs() < 1e-6);
        // Mirrored corner for the other action.
        let r0 = optimal_narrative_search(SearchDagKind::Lever, 0.5, 0.5, 0, &params).unwrap();
        assert_eq!(r0.pattern.as_deref(), Some("y + (1-a)(1-y)"));
        assert!((r0.value - 0.5 / (0.5 + 0.5 * 0.5)).abs() < 1e-4);
    }

    #[test]
    fn narrative_search_collider_corner() {
        let params = SearchParams {
            grid: 0.25,
            ..SearchParams::default()
        };
        let r = optimal_narrative_search(SearchDagKind::Collider, 0.5, 0.5, 1, &params).unwrap();
        assert_eq!(r.pattern.as_deref(), Some("y + (1-a)(1-y)"));
        assert!((r.value - 0.75).abs() < 1e-4);
        assert!((r.corner_value - opportunity_bound(0.5, 0.5).unwrap()).abs() < 1e-4);
    }

    #[test]
    fn bounds_and_domains() {
        assert!((lever_bound(0.5, 0.5).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((opportunity_bound(0.5, 0.5).unwrap() - 0.75).abs() < 1e-15);
        assert!(lever_bound(0.0, 0.5).is_err());
        assert!(opportunity_bound(0.5, 1.0).is_err());
        // mu -> 1 drives both bounds to 1.
        assert!(lever_bound(0.5, 1.0 - 1e-12).unwrap() > 1.0 - 1e-9);
        assert!(opportunity_bound(0.5, 1.0 - 1e-12).unwrap() > 1.0 - 1e-9);
        // The opportunity bound strictly dominates on a grid.
        for ai in 1..19 {
            for mi in 1..19 {
                let a = ai as f64 * 0.05;
                let m = mi as f64 * 0.05;
                assert!(opportunity_bound(a, m).unwrap() > lever_bound(a, m).unwrap());
            }
        }
    }

    #[test]
    fn policy_bounds_enforced() {
        assert!(Policy::new(0.5, 1e-3).is_ok());
        assert!(Policy::new(1e-4, 1e-3).is_err());
        assert!(Policy::new(0.9999, 1e-3).is_err());
    }
}
