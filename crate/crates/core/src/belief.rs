//! Belief formation from a narrative: Bayesian-network factorization of the
//! objective distribution according to a causal model, the induced
//! action-outcome conditional, anticipatory utilities, and the structural
//! property checks (correct marginals, status-quo distortion,
//! rational-expectations detection, refutation analysis).

use serde::{Deserialize, Serialize};

use crate::dag::{self, CausalDag};
use crate::error::{Error, Result};
use crate::prob::{marginalize_mask, ConditionalFamily, JointDistribution};

/// Absolute tolerance for classifying a belief as rational expectations.
pub const RE_TOL: f64 = 1e-9;

/// A narrative: a conditional family (which, with `(alpha, mu)`, pins the
/// objective distribution) together with a causal model.
#[derive(Debug, Clone, PartialEq)]
pub struct Narrative {
    pub q: ConditionalFamily,
    pub dag: CausalDag,
}

impl Narrative {
    pub fn new(q: ConditionalFamily, dag: CausalDag) -> Self {
        Self { q, dag }
    }

    /// The objective distribution this narrative selects at a given action
    /// frequency and outcome rate.
    pub fn objective(&self, alpha: f64, mu: f64) -> Result<JointDistribution> {
        JointDistribution::build(alpha, mu, &self.q)
    }

    /// The subjective belief the narrative induces at `(alpha, mu)`.
    pub fn belief(&self, alpha: f64, mu: f64) -> Result<Belief> {
        factorize(&self.objective(alpha, mu)?, &self.dag)
    }
}

/// A subjective belief over the narrative's variables.
#[derive(Debug, Clone, PartialEq)]
pub struct Belief {
    nodes: Vec<usize>,
    table: Vec<f64>,
    /// `outcome_conditional[a][y]` = subjective P(outcome = y | action = a).
    outcome_conditional: [[f64; 2]; 2],
}

impl Belief {
    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    /// The 2x2 subjective action-outcome conditional.
    pub fn outcome_conditional(&self) -> [[f64; 2]; 2] {
        self.outcome_conditional
    }

    /// Subjective P(outcome = 1 | action = a).
    pub fn p_good_outcome(&self, a: u8) -> f64 {
        self.outcome_conditional[a as usize][1]
    }

    /// Slope of gross anticipatory utility in the policy:
    /// `P(y=1|a=1) - P(y=1|a=0)`.
    pub fn slope(&self) -> f64 {
        self.p_good_outcome(1) - self.p_good_outcome(0)
    }

    /// Subjective marginal P(x_i = 1) for a node of the belief.
    pub fn marginal_one(&self, node: usize) -> Result<f64> {
        let pos = self
            .nodes
            .iter()
            .position(|&v| v == node)
            .ok_or_else(|| Error::Domain(format!("node {node} not in belief")))?;
        Ok(self
            .table
            .iter()
            .enumerate()
            .filter(|(idx, _)| idx >> pos & 1 == 1)
            .map(|(_, &v)| v)
            .sum())
    }

    pub(crate) fn from_table(nodes: Vec<usize>, table: Vec<f64>) -> Self {
        let outcome_conditional = outcome_from_table(&nodes, &table);
        Self {
            nodes,
            table,
            outcome_conditional,
        }
    }
}

fn outcome_from_table(nodes: &[usize], table: &[f64]) -> [[f64; 2]; 2] {
    // Node 1 is always the first position, the outcome the last.
    let k = nodes.len();
    let mut joint = [[0.0f64; 2]; 2];
    for (idx, &v) in table.iter().enumerate() {
        let a = idx & 1;
        let y = idx >> (k - 1) & 1;
        joint[a][y] += v;
    }
    let mut out = [[0.0f64; 2]; 2];
    for a in 0..2 {
        let mass = joint[a][0] + joint[a][1];
        for y in 0..2 {
            out[a][y] = joint[a][y] / mass;
        }
    }
    out
}

/// The agent's policy-deviation cost `C`, symmetric and convex with
/// `C(0) = C'(0) = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CostFunction {
    Quadratic { k: f64 },
}

impl CostFunction {
    pub fn quadratic(k: f64) -> Result<Self> {
        if !(k > 0.0) || !k.is_finite() {
            return Err(Error::Domain(format!("cost coefficient k={k} must be positive")));
        }
        Ok(CostFunction::Quadratic { k })
    }

    pub fn value(&self, delta: f64) -> f64 {
        match self {
            CostFunction::Quadratic { k } => k * delta * delta,
        }
    }

    pub fn derivative(&self, delta: f64) -> f64 {
        match self {
            CostFunction::Quadratic { k } => 2.0 * k * delta,
        }
    }
}

/// Fit the causal model to the objective distribution: the belief table is
/// the product of the objective conditionals of each node given its modeled
/// parents. Requires a valid DAG and enough support in `p` for every
/// conditioning event (full support always suffices).
pub fn factorize(p: &JointDistribution, dag: &CausalDag) -> Result<Belief> {
    let violations = dag.validate(p.n());
    if !violations.is_empty() {
        let list: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        return Err(Error::Validation(format!("invalid DAG: {}", list.join("; "))));
    }
    let nodes = dag.nodes().to_vec();
    let k = nodes.len();

    // Per node: the conditional of the node given its parents as a flat
    // row-normalized table, plus the belief-index positions of the parents.
    struct Factor {
        own_pos: usize,
        parent_pos: Vec<usize>,
        /// `cpt[g * 2 + own]` = P(node = own | parents = g).
        cpt: Vec<f64>,
    }
    let mut factors = Vec::with_capacity(k);
    for (pos, &node) in nodes.iter().enumerate() {
        let mut parents = dag.parents(node);
        parents.sort_unstable();
        let mut set = parents.clone();
        set.push(node);
        set.sort_unstable();
        let mask = set.iter().fold(0usize, |m, v| m | (1 << (v - 1)));
        let m = marginalize_mask(p.table(), p.n(), mask);
        let own_rank = set.iter().position(|&v| v == node).unwrap();
        let parent_ranks: Vec<usize> = parents
            .iter()
            .map(|pv| set.iter().position(|v| v == pv).unwrap())
            .collect();
        let rows = 1usize << parents.len();
        let mut cpt = vec![0.0; rows * 2];
        for (mi, &v) in m.iter().enumerate() {
            let own = mi >> own_rank & 1;
            let mut g = 0usize;
            for (j, &pr) in parent_ranks.iter().enumerate() {
                g |= (mi >> pr & 1) << j;
            }
            cpt[g * 2 + own] += v;
        }
        for g in 0..rows {
            let mass = cpt[g * 2] + cpt[g * 2 + 1];
            if mass <= 0.0 {
                return Err(Error::Domain(format!(
                    "zero-probability conditioning event for node {node} (parents assignment {g})"
                )));
            }
            cpt[g * 2] /= mass;
            cpt[g * 2 + 1] /= mass;
        }
        let parent_pos: Vec<usize> = parents
            .iter()
            .map(|pv| nodes.iter().position(|v| v == pv).unwrap())
            .collect();
        factors.push(Factor {
            own_pos: pos,
            parent_pos,
            cpt,
        });
    }

    let mut table = vec![0.0f64; 1 << k];
    for (idx, slot) in table.iter_mut().enumerate() {
        let mut v = 1.0;
        for f in &factors {
            let own = idx >> f.own_pos & 1;
            let mut g = 0usize;
            for (rank, &pp) in f.parent_pos.iter().enumerate() {
                g |= (idx >> pp & 1) << rank;
            }
            v *= f.cpt[g * 2 + own];
        }
        *slot = v;
    }
    Ok(Belief::from_table(nodes, table))
}

/// The subjective action-outcome conditional of a belief.
pub fn outcome_conditional(belief: &Belief) -> [[f64; 2]; 2] {
    belief.outcome_conditional()
}

/// Gross anticipatory utility of proposing action frequency `d` under a
/// belief: `d * P(y=1|a=1) + (1-d) * P(y=1|a=0)`.
pub fn gross_utility(belief: &Belief, d: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&d) {
        return Err(Error::Domain(format!("policy d={d} outside [0,1]")));
    }
    Ok(d * belief.p_good_outcome(1) + (1.0 - d) * belief.p_good_outcome(0))
}

/// Net anticipatory utility: gross utility minus the deviation cost from
/// the ideal policy.
pub fn net_utility(belief: &Belief, d: f64, cost: &CostFunction, d_star: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&d_star) {
        return Err(Error::Domain(format!("ideal policy d*={d_star} outside [0,1]")));
    }
    Ok(gross_utility(belief, d)? - cost.value(d - d_star))
}

/// Status-quo distortion of a narrative at the historical frequency carried
/// by `p`: `|V(s, alpha | alpha) - mu|`. Zero for every perfect DAG.
pub fn nsqd_deviation(p: &JointDistribution, dag: &CausalDag) -> Result<f64> {
    let belief = factorize(p, dag)?;
    let v = gross_utility(&belief, p.alpha())?;
    Ok((v - p.mu()).abs())
}

/// Largest distortion of a single-variable marginal:
/// `max_i |p_R(x_i = 1) - p(x_i = 1)|`. Zero for every perfect DAG.
pub fn marginal_distortion(p: &JointDistribution, dag: &CausalDag) -> Result<f64> {
    let belief = factorize(p, dag)?;
    let mut worst: f64 = 0.0;
    for &node in belief.nodes() {
        let subjective = belief.marginal_one(node)?;
        let objective = p.marginal_one(node)?;
        worst = worst.max((subjective - objective).abs());
    }
    Ok(worst)
}

/// Does the belief coincide with rational expectations, i.e. is the
/// subjective outcome conditional flat at `mu` for both actions?
pub fn is_rational_expectations(belief: &Belief, mu: f64) -> bool {
    (belief.p_good_outcome(0) - mu).abs() <= RE_TOL && (belief.p_good_outcome(1) - mu).abs() <= RE_TOL
}

/// One conditional independence asserted by a causal model but violated by
/// the objective distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CiViolation {
    pub lhs: usize,
    pub rhs: usize,
    pub given: Vec<usize>,
    /// Largest absolute gap `|p(i,j|z) - p(i|z) p(j|z)|` over assignments.
    pub deviation: f64,
}

/// Check every pairwise conditional independence the model implies via
/// d-separation against the objective distribution, reporting the
/// statements whose deviation exceeds `tol`. This is the data with which
/// one narrative refutes another.
pub fn ci_violations(p: &JointDistribution, dag: &CausalDag, tol: f64) -> Result<Vec<CiViolation>> {
    let mut out = Vec::new();
    for (i, j, z) in dag::implied_independencies(dag) {
        let deviation = independence_deviation(p, i, j, &z)?;
        if deviation > tol {
            out.push(CiViolation {
                lhs: i,
                rhs: j,
                given: z,
                deviation,
            });
        }
    }
    Ok(out)
}

fn independence_deviation(p: &JointDistribution, i: usize, j: usize, z: &[usize]) -> Result<f64> {
    let mut all = vec![i, j];
    all.extend_from_slice(z);
    all.sort_unstable();
    let mask = all.iter().fold(0usize, |m, v| m | (1 << (v - 1)));
    let joint = marginalize_mask(p.table(), p.n(), mask);
    let pos = |v: usize| all.iter().position(|&x| x == v).unwrap();
    let (pi, pj) = (pos(i), pos(j));
    let z_pos: Vec<usize> = z.iter().map(|&v| pos(v)).collect();

    let mut worst: f64 = 0.0;
    for zm in 0..(1usize << z.len()) {
        let matches_z = |idx: usize| {
            z_pos
                .iter()
                .enumerate()
                .all(|(r, &pp)| idx >> pp & 1 == zm >> r & 1)
        };
        let mut pz = 0.0;
        let mut pij = [[0.0f64; 2]; 2];
        for (idx, &v) in joint.iter().enumerate() {
            if matches_z(idx) {
                pz += v;
                pij[idx >> pi & 1][idx >> pj & 1] += v;
            }
        }
        if pz <= 0.0 {
            return Err(Error::Domain(format!(
                "zero-probability conditioning event over {z:?}"
            )));
        }
        for bi in 0..2 {
            for bj in 0..2 {
                let cond_ij = pij[bi][bj] / pz;
                let cond_i = (pij[bi][0] + pij[bi][1]) / pz;
                let cond_j = (pij[0][bj] + pij[1][bj]) / pz;
                worst = worst.max((cond_ij - cond_i * cond_j).abs());
            }
        }
    }
    Ok(worst)
}
