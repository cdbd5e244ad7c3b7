//! Reduction of perfect-DAG narratives to linear chains.
//!
//! Three steps: (1) the belief of a perfect DAG equals the product of the
//! objective clique marginals divided by the separator marginals of a
//! junction tree; (2) along the clique path from the action's clique to the
//! outcome's clique, the separator variables form a Markov chain under the
//! belief whose kernels are objective conditionals, so the action-outcome
//! conditional is reproduced by a linear model over (generally multi-valued)
//! separator variables; (3) each separator variable can be collapsed to a
//! binary indicator of one distinguished value, giving a joint over binary
//! variables and a linear DAG whose belief is compared against the original.
//!
//! Steps 1 and 2 are exact identities and are tested at 1e-12; step 3 is a
//! literal construction whose deviation is measured, not assumed. When
//! consecutive separators share variables, some indicator combinations can
//! be jointly impossible, in which case the binarized joint loses full
//! support; this is surfaced through the usual validity report.

use serde::{Deserialize, Serialize};

use crate::belief::{factorize, Belief};
use crate::dag::{junction_tree, CausalDag, JunctionTree};
use crate::error::{Error, Result};
use crate::prob::{bit, marginalize_mask, JointDistribution};

/// A separator variable `z_k = x_{C_k ∩ C_{k-1}}` of the clique path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedVar {
    /// The original variables the value ranges over (ascending).
    pub vars: Vec<usize>,
    /// Number of values: `2^|vars|`.
    pub arity: usize,
}

/// How the clique path degenerated, if it did.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainKind {
    /// One clique contains both the action and the outcome; the chain is
    /// the degenerate link `1 → n` with the objective conditional.
    SharedClique,
    /// Action and outcome cliques lie in different components; the chain is
    /// `1 → n` carrying the outcome marginal.
    Disconnected,
    /// A proper clique path with at least one separator variable.
    Path,
}

/// The linear model extracted from a perfect-DAG narrative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainReduction {
    pub kind: ChainKind,
    /// Cliques `C_1..C_m` from the action's clique to the outcome's clique.
    pub path_cliques: Vec<Vec<usize>>,
    /// Separator variables `z_2..z_m`; empty for degenerate chains.
    pub derived_vars: Vec<DerivedVar>,
    /// Interior path-clique nodes that appear in exactly one path clique;
    /// they are summed out and never enter a separator.
    pub pruned: Vec<usize>,
    /// Chain kernels: `kernels[0]` maps the action to `z_2` (2 rows), each
    /// middle kernel maps `z_k` to `z_{k+1}`, and the last maps `z_m` to the
    /// outcome (2 columns). Degenerate chains hold a single 2x2 kernel.
    pub kernels: Vec<Vec<Vec<f64>>>,
    /// Default distinguished value per derived variable: the most probable
    /// value of `z_k` under the objective distribution.
    pub z_star: Vec<usize>,
}

impl ChainReduction {
    /// Evaluate the chain: the action-outcome conditional it induces.
    pub fn outcome_given_action(&self) -> [[f64; 2]; 2] {
        let mut m: Vec<Vec<f64>> = self.kernels[0].clone();
        for kernel in &self.kernels[1..] {
            let cols = kernel[0].len();
            let mut next = vec![vec![0.0; cols]; m.len()];
            for (r, row) in m.iter().enumerate() {
                for (mid, &w) in row.iter().enumerate() {
                    for c in 0..cols {
                        next[r][c] += w * kernel[mid][c];
                    }
                }
            }
            m = next;
        }
        [[m[0][0], m[0][1]], [m[1][0], m[1][1]]]
    }

    /// Node count of the linear model, interior variables plus endpoints.
    pub fn chain_node_count(&self) -> usize {
        self.derived_vars.len() + 2
    }

    /// The linear DAG over the chain's (renumbered) variables.
    pub fn linear_dag(&self) -> CausalDag {
        let count = self.chain_node_count();
        let edges = (1..count).map(|i| (i, i + 1)).collect();
        CausalDag::new((1..=count).collect(), edges)
    }
}

fn gather(idx: usize, vars: &[usize]) -> usize {
    vars.iter()
        .enumerate()
        .fold(0usize, |acc, (rank, &v)| acc | ((bit(idx, v) as usize) << rank))
}

/// Row-normalized kernel `P(right = c | left = r)` computed from the joint
/// marginal over `left ∪ right`; overlapping variable sets are handled
/// naturally (inconsistent combinations simply never occur).
fn transition_kernel(
    p: &JointDistribution,
    left: &[usize],
    right: &[usize],
) -> Result<Vec<Vec<f64>>> {
    let mut union: Vec<usize> = left.iter().chain(right).cloned().collect();
    union.sort_unstable();
    union.dedup();
    let mask = union.iter().fold(0usize, |m, v| m | (1 << (v - 1)));
    let mu = marginalize_mask(p.table(), p.n(), mask);
    let rank_of = |vars: &[usize]| -> Vec<usize> {
        vars.iter()
            .map(|v| union.iter().position(|u| u == v).unwrap())
            .collect()
    };
    let l_ranks = rank_of(left);
    let r_ranks = rank_of(right);
    let pick = |ui: usize, ranks: &[usize]| -> usize {
        ranks
            .iter()
            .enumerate()
            .fold(0usize, |acc, (j, &r)| acc | ((ui >> r & 1) << j))
    };

    let rows = 1usize << left.len();
    let cols = 1usize << right.len();
    let mut k = vec![vec![0.0; cols]; rows];
    let mut mass = vec![0.0; rows];
    for (ui, &v) in mu.iter().enumerate() {
        let r = pick(ui, &l_ranks);
        mass[r] += v;
        k[r][pick(ui, &r_ranks)] += v;
    }
    for (r, row) in k.iter_mut().enumerate() {
        if mass[r] <= 0.0 {
            return Err(Error::Domain(format!(
                "zero-probability separator assignment over {left:?}"
            )));
        }
        for c in row.iter_mut() {
            *c /= mass[r];
        }
    }
    Ok(k)
}

/// Belief of a perfect DAG via the clique factorization
/// `prod_C p(x_C) / prod_S p(x_S)`; equals [`factorize`] entrywise.
pub fn clique_factor_belief(p: &JointDistribution, dag: &CausalDag) -> Result<Belief> {
    let violations = dag.validate(p.n());
    if !violations.is_empty() {
        let list: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        return Err(Error::Validation(format!("invalid DAG: {}", list.join("; "))));
    }
    let jt = junction_tree(dag)?;
    clique_factor_belief_with(p, dag.nodes(), &jt)
}

/// Clique-factorization belief with a precomputed junction tree; useful when
/// sweeping many distributions over one causal model.
pub fn clique_factor_belief_with(
    p: &JointDistribution,
    dag_nodes: &[usize],
    jt: &JunctionTree,
) -> Result<Belief> {
    let nodes = dag_nodes.to_vec();
    let k = nodes.len();

    let tables: Vec<(Vec<usize>, Vec<f64>)> = jt
        .cliques
        .iter()
        .map(|c| (c.clone(), p.marginal(c).map(|m| m.probs).unwrap()))
        .collect();
    // Separator marginals are stored as reciprocals; the factorization
    // divides by them once per table entry.
    let mut sep_tables: Vec<(Vec<usize>, Vec<f64>)> = jt
        .separators
        .iter()
        .map(|s| (s.clone(), p.marginal(s).map(|m| m.probs).unwrap()))
        .collect();
    for (s, t) in sep_tables.iter_mut() {
        if t.iter().any(|&v| v <= 0.0) {
            return Err(Error::Domain(format!(
                "separator {s:?} has a zero-probability assignment; full support required"
            )));
        }
        for v in t.iter_mut() {
            *v = 1.0 / *v;
        }
    }

    // Positions inside the belief index for each clique/separator variable.
    let pos_of = |v: usize| nodes.iter().position(|&x| x == v).unwrap();
    let to_positions =
        |vars: &[usize]| -> Vec<usize> { vars.iter().map(|&v| pos_of(v)).collect() };
    let clique_pos: Vec<Vec<usize>> = tables.iter().map(|(c, _)| to_positions(c)).collect();
    let sep_pos: Vec<Vec<usize>> = sep_tables.iter().map(|(s, _)| to_positions(s)).collect();

    let mut table = vec![0.0f64; 1 << k];
    for (idx, slot) in table.iter_mut().enumerate() {
        let sub = |positions: &[usize]| -> usize {
            positions
                .iter()
                .enumerate()
                .fold(0usize, |acc, (rank, &ppos)| acc | ((idx >> ppos & 1) << rank))
        };
        let mut v = 1.0;
        for (ci, (_, probs)) in tables.iter().enumerate() {
            v *= probs[sub(&clique_pos[ci])];
        }
        for (si, (_, recip)) in sep_tables.iter().enumerate() {
            v *= recip[sub(&sep_pos[si])];
        }
        *slot = v;
    }
    Ok(Belief::from_table(nodes, table))
}

/// The distribution-independent part of a chain reduction: the clique path
/// from the action's clique to the outcome's clique and its separator
/// variables. Build once per causal model and reuse across distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainStructure {
    pub kind: ChainKind,
    pub path_cliques: Vec<Vec<usize>>,
    pub separators: Vec<Vec<usize>>,
    pub derived_vars: Vec<DerivedVar>,
    pub pruned: Vec<usize>,
}

/// Extract the clique path of a junction tree for the model whose outcome
/// variable is `n`, choosing the minimally distant pair of endpoint cliques
/// (canonical tie-break on clique indices).
pub fn chain_structure(n: usize, jt: &JunctionTree) -> ChainStructure {
    let with_1: Vec<usize> = (0..jt.cliques.len())
        .filter(|&i| jt.cliques[i].contains(&1))
        .collect();
    let with_n: Vec<usize> = (0..jt.cliques.len())
        .filter(|&i| jt.cliques[i].contains(&n))
        .collect();

    let mut best: Option<(usize, usize, usize, Vec<usize>)> = None;
    for &i in &with_1 {
        for &j in &with_n {
            if let Some(path) = jt.path_between(i, j) {
                let len = path.len();
                let better = match &best {
                    None => true,
                    Some((blen, bi, bj, _)) => (len, i, j) < (*blen, *bi, *bj),
                };
                if better {
                    best = Some((len, i, j, path));
                }
            }
        }
    }

    let Some((_, _, _, path)) = best else {
        return ChainStructure {
            kind: ChainKind::Disconnected,
            path_cliques: vec![],
            separators: vec![],
            derived_vars: vec![],
            pruned: vec![],
        };
    };

    if path.len() == 1 {
        return ChainStructure {
            kind: ChainKind::SharedClique,
            path_cliques: vec![jt.cliques[path[0]].clone()],
            separators: vec![],
            derived_vars: vec![],
            pruned: vec![],
        };
    }

    let path_cliques: Vec<Vec<usize>> = path.iter().map(|&c| jt.cliques[c].clone()).collect();
    let mut separators: Vec<Vec<usize>> = Vec::new();
    for w in path_cliques.windows(2) {
        let s: Vec<usize> = w[0].iter().filter(|v| w[1].contains(v)).cloned().collect();
        separators.push(s);
    }
    let derived_vars: Vec<DerivedVar> = separators
        .iter()
        .map(|s| DerivedVar {
            vars: s.clone(),
            arity: 1 << s.len(),
        })
        .collect();

    // Interior nodes touched by exactly one path clique never enter a
    // separator; they are marginalized away by the kernel construction.
    let mut pruned = Vec::new();
    let mut all_nodes: Vec<usize> = path_cliques.iter().flatten().cloned().collect();
    all_nodes.sort_unstable();
    all_nodes.dedup();
    for v in all_nodes {
        if v == 1 || v == n {
            continue;
        }
        let occurrences = path_cliques.iter().filter(|c| c.contains(&v)).count();
        if occurrences == 1 {
            pruned.push(v);
        }
    }

    ChainStructure {
        kind: ChainKind::Path,
        path_cliques,
        separators,
        derived_vars,
        pruned,
    }
}

/// Fill a chain structure with the objective conditionals of a particular
/// distribution.
pub fn reduce_with_structure(
    p: &JointDistribution,
    structure: &ChainStructure,
) -> Result<ChainReduction> {
    let n = p.n();
    match structure.kind {
        ChainKind::Disconnected => {
            // No junction-tree path: the belief makes the outcome
            // independent of the action, so the degenerate link carries the
            // outcome marginal.
            let my = p.marginal(&[n])?.probs;
            Ok(ChainReduction {
                kind: ChainKind::Disconnected,
                path_cliques: vec![],
                derived_vars: vec![],
                pruned: vec![],
                kernels: vec![vec![my.clone(), my]],
                z_star: vec![],
            })
        }
        ChainKind::SharedClique => {
            // A single clique contains both endpoints; perfect DAGs do not
            // distort clique marginals, so the objective conditional is
            // exact.
            let cond = p.conditional(&[n], &[1])?;
            Ok(ChainReduction {
                kind: ChainKind::SharedClique,
                path_cliques: structure.path_cliques.clone(),
                derived_vars: vec![],
                pruned: vec![],
                kernels: vec![cond.rows],
                z_star: vec![],
            })
        }
        ChainKind::Path => {
            let separators = &structure.separators;
            let mut kernels = Vec::with_capacity(separators.len() + 1);
            kernels.push(transition_kernel(p, &[1], &separators[0])?);
            for w in separators.windows(2) {
                kernels.push(transition_kernel(p, &w[0], &w[1])?);
            }
            kernels.push(transition_kernel(p, separators.last().unwrap(), &[n])?);

            let z_star = separators
                .iter()
                .map(|s| {
                    let probs = p.marginal(s).map(|m| m.probs).unwrap();
                    probs
                        .iter()
                        .enumerate()
                        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(b.0.cmp(&a.0)))
                        .map(|(i, _)| i)
                        .unwrap()
                })
                .collect();

            Ok(ChainReduction {
                kind: ChainKind::Path,
                path_cliques: structure.path_cliques.clone(),
                derived_vars: structure.derived_vars.clone(),
                pruned: structure.pruned.clone(),
                kernels,
                z_star,
            })
        }
    }
}

/// Reduce a perfect-DAG narrative to a linear model over the clique-path
/// separator variables. The chain reproduces the narrative's action-outcome
/// conditional exactly (up to float noise).
pub fn reduce_to_chain(p: &JointDistribution, dag: &CausalDag) -> Result<ChainReduction> {
    let jt = junction_tree(dag)?;
    reduce_with_structure(p, &chain_structure(p.n(), &jt))
}

/// Result of collapsing the chain's separator variables to binary
/// indicators.
#[derive(Debug, Clone, PartialEq)]
pub struct Binarization {
    pub joint: JointDistribution,
    pub dag: CausalDag,
    pub z_star: Vec<usize>,
    /// `max_{a,y} |p'_{R'}(y|a) - p_R(y|a)|` against the exact chain value.
    pub deviation: f64,
}

/// Push the objective distribution forward through the indicator map
/// `(a, 1{z_2 = z*_2}, ..., 1{z_m = z*_m}, y)` and measure how far the
/// linear-DAG belief of the result is from the original conditional.
pub fn binarize_chain(
    p: &JointDistribution,
    reduction: &ChainReduction,
    z_star: Option<&[usize]>,
) -> Result<Binarization> {
    let stars: Vec<usize> = match z_star {
        Some(s) => {
            if s.len() != reduction.derived_vars.len() {
                return Err(Error::Domain(format!(
                    "expected {} distinguished values, got {}",
                    reduction.derived_vars.len(),
                    s.len()
                )));
            }
            s.to_vec()
        }
        None => reduction.z_star.clone(),
    };
    for (k, (&star, dv)) in stars.iter().zip(&reduction.derived_vars).enumerate() {
        if star >= dv.arity {
            return Err(Error::Domain(format!(
                "z*_{} = {star} outside 0..{}",
                k + 2,
                dv.arity
            )));
        }
        let probs = p.marginal(&dv.vars)?.probs;
        if probs[star] <= 0.0 {
            return Err(Error::Domain(format!(
                "distinguished value z*_{} has zero probability",
                k + 2
            )));
        }
    }

    let n = p.n();
    let m = stars.len();
    let new_n = m + 2;
    let mut table = vec![0.0f64; 1 << new_n];
    for (idx, &v) in p.table().iter().enumerate() {
        let mut new_idx = bit(idx, 1) as usize;
        for (k, dv) in reduction.derived_vars.iter().enumerate() {
            let hit = (gather(idx, &dv.vars) == stars[k]) as usize;
            new_idx |= hit << (k + 1);
        }
        new_idx |= (bit(idx, n) as usize) << (m + 1);
        table[new_idx] += v;
    }
    let joint = JointDistribution::from_parts(new_n, table, p.alpha(), p.mu())?;
    let dag = reduction.linear_dag();
    let belief = factorize(&joint, &dag)?;
    let reference = reduction.outcome_given_action();
    let mut deviation: f64 = 0.0;
    for a in 0..2 {
        for y in 0..2 {
            deviation = deviation.max((belief.outcome_conditional()[a][y] - reference[a][y]).abs());
        }
    }
    Ok(Binarization {
        joint,
        dag,
        z_star: stars,
        deviation,
    })
}

/// Try every combination of distinguished values and return the binarization
/// with the smallest deviation, plus whether an (effectively) exact one was
/// found.
pub fn binarize_chain_exhaustive(
    p: &JointDistribution,
    reduction: &ChainReduction,
) -> Result<(Binarization, bool)> {
    let arities: Vec<usize> = reduction.derived_vars.iter().map(|d| d.arity).collect();
    let combos: usize = arities.iter().product::<usize>().max(1);
    let mut best: Option<Binarization> = None;
    for c in 0..combos {
        let mut rem = c;
        let stars: Vec<usize> = arities
            .iter()
            .map(|&a| {
                let v = rem % a;
                rem /= a;
                v
            })
            .collect();
        // Skip zero-probability distinguished values instead of failing.
        match binarize_chain(p, reduction, Some(&stars)) {
            Ok(b) => {
                if best.as_ref().map_or(true, |cur| b.deviation < cur.deviation) {
                    best = Some(b);
                }
            }
            Err(Error::Domain(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    let best = best.ok_or_else(|| {
        Error::Domain("no feasible distinguished-value combination".to_string())
    })?;
    let exact = best.deviation <= 1e-12;
    Ok((best, exact))
}
