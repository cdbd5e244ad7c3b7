//! Exact tabular probability machinery over `n` binary variables.
//!
//! Everything here works on full probability tables indexed by assignment.
//! The indexing convention is fixed once for the whole crate: variable
//! `x_1` (the action) is the least significant bit of the table index and
//! `x_n` (the outcome) the most significant. All operations are exact
//! summations over these tables; there is no sampling anywhere.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hard cap on the variable count; tables have `2^n` entries.
pub const MAX_VARS: usize = 12;

/// Tolerance used when checking that stored tables are normalized.
pub const NORM_TOL: f64 = 1e-12;

/// Encode an assignment `(x_1, ..., x_n)` as a table index, `x_1` least
/// significant.
pub fn encode(bits: &[u8]) -> usize {
    bits.iter()
        .enumerate()
        .fold(0usize, |acc, (i, &b)| acc | ((b as usize & 1) << i))
}

/// Decode a table index back into the assignment `(x_1, ..., x_n)`.
pub fn decode(index: usize, n: usize) -> Vec<u8> {
    (0..n).map(|i| ((index >> i) & 1) as u8).collect()
}

/// Value of variable `var` (1-based) in the assignment behind `index`.
#[inline]
pub fn bit(index: usize, var: usize) -> u8 {
    ((index >> (var - 1)) & 1) as u8
}

/// Sum a table over everything except the variables in `keep_mask`.
///
/// `keep_mask` is a bitmask over the table's own bit positions (0-based).
/// The result is indexed by the kept bits, compressed in ascending
/// position order. Dropped axes are folded highest-first, which keeps the
/// index layout dense and costs at most `2^(width+1)` additions in total.
pub(crate) fn marginalize_mask(table: &[f64], width: usize, keep_mask: usize) -> Vec<f64> {
    let mut cur = table.to_vec();
    let w = marginalize_in_place(&mut cur, width, keep_mask);
    cur.truncate(1 << w);
    cur
}

/// In-place variant of [`marginalize_mask`]: folds the dropped axes into
/// the front of `table` and returns the remaining width. The write index
/// never exceeds the read indices, so the fold is safe in place.
pub(crate) fn marginalize_in_place(table: &mut [f64], width: usize, keep_mask: usize) -> usize {
    let mut w = width;
    for b in (0..width).rev() {
        if keep_mask >> b & 1 == 1 {
            continue;
        }
        let half = 1usize << (w - 1);
        let stride = 1usize << b;
        for i in 0..half {
            let low = (i & (stride - 1)) | ((i >> b) << (b + 1));
            table[i] = table[low] + table[low + stride];
        }
        w -= 1;
    }
    w
}

fn check_prob_open(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v < 1.0) || !v.is_finite() {
        return Err(Error::Domain(format!("{name}={v} must lie strictly in (0,1)")));
    }
    Ok(())
}

/// One conditional family `q(x_2..x_{n-1} | a, y)`: for each of the four
/// `(a, y)` pairs a probability vector over the middle-variable assignments,
/// `x_2` least significant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalFamily {
    n: usize,
    /// Rows in `(a,y)` order `(0,0), (0,1), (1,0), (1,1)`.
    rows: [Vec<f64>; 4],
}

impl ConditionalFamily {
    /// Row index for a given `(a, y)` pair.
    #[inline]
    pub fn row_index(a: u8, y: u8) -> usize {
        (a as usize) * 2 + y as usize
    }

    /// Build a family from four rows in `(a,y)` order `(0,0),(0,1),(1,0),(1,1)`.
    /// Rows must be nonnegative and sum to one; they are renormalized to
    /// remove float noise from textual inputs.
    pub fn new(n: usize, rows: [Vec<f64>; 4]) -> Result<Self> {
        if !(2 < n && n <= MAX_VARS) {
            return Err(Error::Validation(format!(
                "variable count n={n} must satisfy 2 < n <= {MAX_VARS}"
            )));
        }
        let width = 1usize << (n - 2);
        let mut rows = rows;
        for (r, row) in rows.iter_mut().enumerate() {
            if row.len() != width {
                return Err(Error::Validation(format!(
                    "row {r} has {} entries, expected 2^(n-2) = {width}",
                    row.len()
                )));
            }
            let mut sum = 0.0;
            for &v in row.iter() {
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(Error::Validation(format!(
                        "row {r} contains a negative or non-finite entry {v}"
                    )));
                }
                sum += v;
            }
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Validation(format!(
                    "row {r} sums to {sum}, expected 1"
                )));
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        Ok(Self { n, rows })
    }

    /// Convenience constructor for `n = 3`: the family is determined by the
    /// four numbers `p(x_2 = 1 | a, y)` in `(a,y)` order `(0,0),(0,1),(1,0),(1,1)`.
    pub fn from_x2_probs(p: [f64; 4]) -> Result<Self> {
        let rows = [
            vec![1.0 - p[0], p[0]],
            vec![1.0 - p[1], p[1]],
            vec![1.0 - p[2], p[2]],
            vec![1.0 - p[3], p[3]],
        ];
        for (i, &v) in p.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Validation(format!(
                    "p(x2=1|row {i}) = {v} outside [0,1]"
                )));
            }
        }
        Self::new(3, rows)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rows(&self) -> &[Vec<f64>; 4] {
        &self.rows
    }

    /// Row for a given `(a, y)` pair.
    pub fn row(&self, a: u8, y: u8) -> &[f64] {
        &self.rows[Self::row_index(a, y)]
    }

    /// True when every entry is strictly positive.
    pub fn is_full_support(&self) -> bool {
        self.rows.iter().all(|r| r.iter().all(|&v| v > 0.0))
    }

    /// Mix each row with the uniform distribution over middle assignments:
    /// `(1 - delta) q + delta * uniform`. Row sums are unchanged and every
    /// entry ends up at least `delta / 2^(n-2)`.
    pub fn perturb_full_support(&self, delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 0.1) {
            return Err(Error::Domain(format!(
                "perturbation delta={delta} must lie in (0, 0.1)"
            )));
        }
        let width = self.rows[0].len() as f64;
        let uniform = delta / width;
        let rows = self
            .rows
            .clone()
            .map(|row| row.into_iter().map(|v| (1.0 - delta) * v + uniform).collect());
        Ok(Self { n: self.n, rows })
    }

    /// Flip the action argument: the `(a, y)` row becomes the `(1-a, y)` row.
    /// Applying `mirror` twice returns the original family.
    pub fn mirror(&self) -> Self {
        let [r00, r01, r10, r11] = self.rows.clone();
        Self {
            n: self.n,
            rows: [r10, r11, r00, r01],
        }
    }
}

/// A marginal table over a subset of variables, first (smallest) variable
/// least significant.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalTable {
    pub vars: Vec<usize>,
    pub probs: Vec<f64>,
}

/// A conditional table: one distribution over target assignments per
/// assignment of the given variables. Both index sets use the crate-wide
/// ascending/LSB-first convention.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalTable {
    pub targets: Vec<usize>,
    pub givens: Vec<usize>,
    /// `rows[g][t]` = P(targets = t | givens = g).
    pub rows: Vec<Vec<f64>>,
}

/// Full joint distribution over `n` binary variables, a member of the
/// family with action marginal `alpha` and outcome conditional `mu`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDistribution {
    n: usize,
    table: Vec<f64>,
    alpha: f64,
    mu: f64,
}

impl JointDistribution {
    /// Build `p(x) = p(a) p(y|a) q(x_2..x_{n-1} | a, y)` with
    /// `p(a=1) = alpha` and `p(y=1|a) = mu` for both actions.
    pub fn build(alpha: f64, mu: f64, q: &ConditionalFamily) -> Result<Self> {
        check_prob_open("alpha", alpha)?;
        check_prob_open("mu", mu)?;
        let n = q.n();
        let size = 1usize << n;
        let mid_mask = (1usize << (n - 2)) - 1;
        let mut table = vec![0.0; size];
        for (idx, slot) in table.iter_mut().enumerate() {
            let a = bit(idx, 1);
            let y = bit(idx, n);
            let mid = (idx >> 1) & mid_mask;
            let pa = if a == 1 { alpha } else { 1.0 - alpha };
            let py = if y == 1 { mu } else { 1.0 - mu };
            *slot = pa * py * q.row(a, y)[mid];
        }
        Ok(Self { n, table, alpha, mu })
    }

    /// Assemble a joint from a raw table with known action/outcome
    /// parameters; used for derived joints (e.g. binarized chains).
    pub(crate) fn from_parts(n: usize, table: Vec<f64>, alpha: f64, mu: f64) -> Result<Self> {
        if n < 2 || n > MAX_VARS {
            return Err(Error::Validation(format!(
                "variable count n={n} must satisfy 2 <= n <= {MAX_VARS}"
            )));
        }
        if table.len() != 1 << n {
            return Err(Error::Validation(format!(
                "table has {} entries, expected 2^{n}",
                table.len()
            )));
        }
        let sum: f64 = table.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Validation(format!("table sums to {sum}, expected 1")));
        }
        Ok(Self { n, table, alpha, mu })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn prob(&self, index: usize) -> f64 {
        self.table[index]
    }

    pub fn min_entry(&self) -> f64 {
        self.table.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn is_full_support(&self) -> bool {
        self.min_entry() > 0.0
    }

    /// `P(x_i = 1)` for a single variable.
    pub fn marginal_one(&self, var: usize) -> Result<f64> {
        self.check_vars(&[var])?;
        Ok(self
            .table
            .iter()
            .enumerate()
            .filter(|(idx, _)| bit(*idx, var) == 1)
            .map(|(_, &v)| v)
            .sum())
    }

    /// Marginal distribution over a nonempty subset of variables.
    pub fn marginal(&self, subset: &[usize]) -> Result<MarginalTable> {
        let vars = self.check_vars(subset)?;
        let mask = vars.iter().fold(0usize, |m, v| m | (1 << (v - 1)));
        let probs = marginalize_mask(&self.table, self.n, mask);
        Ok(MarginalTable { vars, probs })
    }

    /// Conditional distribution of `targets` given `givens`; one row per
    /// given-assignment, each row summing to one. `givens` may be empty,
    /// in which case the single row is the marginal over `targets`.
    pub fn conditional(&self, targets: &[usize], givens: &[usize]) -> Result<ConditionalTable> {
        let targets_v = self.check_vars(targets)?;
        let givens_v = if givens.is_empty() {
            Vec::new()
        } else {
            self.check_vars(givens)?
        };
        if targets_v.iter().any(|t| givens_v.contains(t)) {
            return Err(Error::Domain(
                "targets and givens must be disjoint".to_string(),
            ));
        }
        // Joint over targets ∪ givens, then split the index into the two parts.
        let mut all = targets_v.clone();
        all.extend_from_slice(&givens_v);
        all.sort_unstable();
        let mask = all.iter().fold(0usize, |m, v| m | (1 << (v - 1)));
        let joint = marginalize_mask(&self.table, self.n, mask);

        // Positions of target/given vars inside the compressed index.
        let t_pos: Vec<usize> = targets_v
            .iter()
            .map(|t| all.iter().position(|v| v == t).unwrap())
            .collect();
        let g_pos: Vec<usize> = givens_v
            .iter()
            .map(|g| all.iter().position(|v| v == g).unwrap())
            .collect();

        let n_rows = 1usize << givens_v.len();
        let n_cols = 1usize << targets_v.len();
        let mut rows = vec![vec![0.0; n_cols]; n_rows];
        let mut row_mass = vec![0.0; n_rows];
        for (idx, &v) in joint.iter().enumerate() {
            let g: usize = g_pos
                .iter()
                .enumerate()
                .map(|(j, &p)| ((idx >> p) & 1) << j)
                .sum();
            let t: usize = t_pos
                .iter()
                .enumerate()
                .map(|(j, &p)| ((idx >> p) & 1) << j)
                .sum();
            rows[g][t] += v;
            row_mass[g] += v;
        }
        for (g, row) in rows.iter_mut().enumerate() {
            if row_mass[g] <= 0.0 {
                return Err(Error::Domain(format!(
                    "zero-probability conditioning event (givens assignment {g})"
                )));
            }
            for v in row.iter_mut() {
                *v /= row_mass[g];
            }
        }
        Ok(ConditionalTable {
            targets: targets_v,
            givens: givens_v,
            rows,
        })
    }

    /// Check the three structural invariants: normalization, full support,
    /// and the `(alpha, mu)` marginal constraints. Returns a description of
    /// each violated invariant.
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        let sum: f64 = self.table.iter().sum();
        if (sum - 1.0).abs() > NORM_TOL {
            out.push(format!("table sums to {sum}, expected 1 within {NORM_TOL}"));
        }
        if !self.is_full_support() {
            out.push(format!(
                "table has a non-positive entry (min = {})",
                self.min_entry()
            ));
        }
        let a1: f64 = self
            .table
            .iter()
            .enumerate()
            .filter(|(i, _)| bit(*i, 1) == 1)
            .map(|(_, &v)| v)
            .sum();
        if (a1 - self.alpha).abs() > NORM_TOL {
            out.push(format!(
                "P(x_1=1) = {a1} differs from alpha = {}",
                self.alpha
            ));
        }
        for a in 0..2u8 {
            let mass: f64 = self
                .table
                .iter()
                .enumerate()
                .filter(|(i, _)| bit(*i, 1) == a)
                .map(|(_, &v)| v)
                .sum();
            let joint: f64 = self
                .table
                .iter()
                .enumerate()
                .filter(|(i, _)| bit(*i, 1) == a && bit(*i, self.n) == 1)
                .map(|(_, &v)| v)
                .sum();
            if mass > 0.0 && (joint / mass - self.mu).abs() > NORM_TOL {
                out.push(format!(
                    "P(x_n=1|x_1={a}) = {} differs from mu = {}",
                    joint / mass,
                    self.mu
                ));
            }
        }
        out
    }

    fn check_vars(&self, vars: &[usize]) -> Result<Vec<usize>> {
        if vars.is_empty() {
            return Err(Error::Domain("variable subset must be nonempty".to_string()));
        }
        let mut v: Vec<usize> = vars.to_vec();
        v.sort_unstable();
        v.dedup();
        if v.len() != vars.len() {
            return Err(Error::Domain("variable subset contains duplicates".to_string()));
        }
        if v.iter().any(|&x| x < 1 || x > self.n) {
            return Err(Error::Domain(format!(
                "variable subset {v:?} outside 1..={}",
                self.n
            )));
        }
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// The foreign-policy family `x_2 = a(1-y)` as exact corner rows.
    fn corner_a_and_not_y() -> ConditionalFamily {
        ConditionalFamily::from_x2_probs([0.0, 0.0, 1.0, 0.0]).unwrap()
    }

    #[test]
    fn encode_decode_roundtrip_small() {
        for n in 1..=6 {
            for idx in 0..(1usize << n) {
                assert_eq!(encode(&decode(idx, n)), idx);
            }
        }
    }

    #[test]
    fn build_corner_family_product() {
        // p(a=1, y=0, x2=1) = 0.5 * 0.5 * 1 = 0.25 for the exact corner family.
        let p = JointDistribution::build(0.5, 0.5, &corner_a_and_not_y()).unwrap();
        let idx = encode(&[1, 1, 0]);
        assert!((p.prob(idx) - 0.25).abs() < 1e-15);
        let total: f64 = p.table().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn x2_zero_marginal_matches_alpha_mu_identity() {
        // P(x_2 = 0) = alpha*mu + 1 - alpha for the foreign-policy family.
        let alpha = 0.5858;
        let q = corner_a_and_not_y().perturb_full_support(1e-9).unwrap();
        let p = JointDistribution::build(alpha, 0.5, &q).unwrap();
        let m = p.marginal(&[2]).unwrap();
        assert!((m.probs[0] - (alpha * 0.5 + 1.0 - alpha)).abs() < 1e-8);
    }

    #[test]
    fn marginals_recover_alpha_and_mu() {
        let q = corner_a_and_not_y().perturb_full_support(1e-6).unwrap();
        let p = JointDistribution::build(0.37, 0.62, &q).unwrap();
        let ma = p.marginal(&[1]).unwrap();
        assert!((ma.probs[0] - 0.63).abs() < 1e-12);
        assert!((ma.probs[1] - 0.37).abs() < 1e-12);
        let my = p.marginal(&[3]).unwrap();
        assert!((my.probs[1] - 0.62).abs() < 1e-12);
        // Marginal over everything is the table itself.
        let all = p.marginal(&[1, 2, 3]).unwrap();
        for (a, b) in all.probs.iter().zip(p.table()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn conditional_outcome_given_action_is_mu() {
        let q = corner_a_and_not_y().perturb_full_support(1e-6).unwrap();
        let p = JointDistribution::build(0.41, 0.58, &q).unwrap();
        let c = p.conditional(&[3], &[1]).unwrap();
        for row in &c.rows {
            assert!((row[1] - 0.58).abs() < 1e-12);
        }
    }

    #[test]
    fn conditional_x2_given_action() {
        // For x_2 = a(1-y) with mu = 1/2: p(x2=1|a=1) = 1 - mu = 0.5.
        let q = corner_a_and_not_y().perturb_full_support(1e-9).unwrap();
        let p = JointDistribution::build(0.5, 0.5, &q).unwrap();
        let c = p.conditional(&[2], &[1]).unwrap();
        assert!((c.rows[1][1] - 0.5).abs() < 1e-8);
        assert!(c.rows[0][1] < 1e-8);
    }

    #[test]
    fn conditional_recovers_family() {
        let q = corner_a_and_not_y().perturb_full_support(1e-4).unwrap();
        let p = JointDistribution::build(0.3, 0.7, &q).unwrap();
        let c = p.conditional(&[2], &[1, 3]).unwrap();
        // Row order over (x1, x3) with x1 least significant: (0,0),(1,0),(0,1),(1,1).
        let expect = [q.row(0, 0), q.row(1, 0), q.row(0, 1), q.row(1, 1)];
        for (row, exp) in c.rows.iter().zip(expect) {
            for (v, e) in row.iter().zip(exp) {
                assert!((v - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn conditional_rejects_overlap_and_zero_mass() {
        let q = corner_a_and_not_y().perturb_full_support(1e-6).unwrap();
        let p = JointDistribution::build(0.5, 0.5, &q).unwrap();
        assert!(matches!(
            p.conditional(&[1, 2], &[2]),
            Err(Error::Domain(_))
        ));
        // Exact corner: conditioning on (a=0, x2=1) has zero mass.
        let p0 = JointDistribution::build(0.5, 0.5, &corner_a_and_not_y()).unwrap();
        assert!(matches!(p0.conditional(&[3], &[1, 2]), Err(Error::Domain(_))));
    }

    #[test]
    fn perturb_example_values() {
        let q = corner_a_and_not_y().perturb_full_support(1e-6).unwrap();
        // Row (a=1, y=0): 1 -> (1 - 1e-6) + 1e-6/2 = 1 - 5e-7.
        assert!((q.row(1, 0)[1] - (1.0 - 5e-7)).abs() < 1e-15);
        // Uniform family is a fixed point of the mixture.
        let u = ConditionalFamily::from_x2_probs([0.5; 4]).unwrap();
        let u2 = u.perturb_full_support(0.05).unwrap();
        assert_eq!(u, u2);
        assert!(matches!(
            corner_a_and_not_y().perturb_full_support(0.5),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn mirror_swaps_action_argument() {
        let q = corner_a_and_not_y();
        let m = q.mirror();
        // x_2 = a(1-y) becomes x_2 = (1-a)(1-y).
        assert!((m.row(0, 0)[1] - 1.0).abs() < 1e-15);
        assert!(m.row(1, 0)[1].abs() < 1e-15);
        assert_eq!(m.mirror(), q);
        // A family symmetric in the action is unchanged.
        let s = ConditionalFamily::from_x2_probs([0.3, 0.8, 0.3, 0.8]).unwrap();
        assert_eq!(s.mirror(), s);
    }

    #[test]
    fn build_rejects_bad_parameters() {
        let q = corner_a_and_not_y();
        assert!(matches!(
            JointDistribution::build(0.0, 0.5, &q),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            JointDistribution::build(0.5, 1.0, &q),
            Err(Error::Domain(_))
        ));
        assert!(ConditionalFamily::new(3, [vec![0.5, 0.6], vec![0.5, 0.5], vec![0.5, 0.5], vec![0.5, 0.5]]).is_err());
    }

    #[test]
    fn validate_flags_missing_support() {
        let p = JointDistribution::build(0.5, 0.5, &corner_a_and_not_y()).unwrap();
        let violations = p.validate();
        assert!(violations.iter().any(|v| v.contains("non-positive")));
        let q = corner_a_and_not_y().perturb_full_support(1e-6).unwrap();
        let p = JointDistribution::build(0.5, 0.5, &q).unwrap();
        assert!(p.validate().is_empty());
    }

    fn arb_family(n: usize) -> impl Strategy<Value = ConditionalFamily> {
        let width = 1usize << (n - 2);
        proptest::collection::vec(0.05f64..1.0, 4 * width).prop_map(move |raw| {
            let mut rows: [Vec<f64>; 4] = [vec![], vec![], vec![], vec![]];
            for (r, chunk) in raw.chunks(width).enumerate() {
                let sum: f64 = chunk.iter().sum();
                rows[r] = chunk.iter().map(|v| v / sum).collect();
            }
            ConditionalFamily::new(n, rows).unwrap()
        })
    }

    proptest! {
        #[test]
        fn prop_encode_decode(idx in 0usize..4096, n in 1usize..=12) {
            let idx = idx & ((1 << n) - 1);
            prop_assert_eq!(encode(&decode(idx, n)), idx);
        }

        #[test]
        fn prop_joint_normalized(q in arb_family(4), alpha in 0.05f64..0.95, mu in 0.05f64..0.95) {
            let p = JointDistribution::build(alpha, mu, &q).unwrap();
            let sum: f64 = p.table().iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            prop_assert!(p.validate().is_empty());
        }

        #[test]
        fn prop_conditional_reconstructs_joint(q in arb_family(4), alpha in 0.05f64..0.95, mu in 0.05f64..0.95) {
            let p = JointDistribution::build(alpha, mu, &q).unwrap();
            let c = p.conditional(&[2, 3], &[1, 4]).unwrap();
            let mg = p.marginal(&[1, 4]).unwrap();
            let joint = p.marginal(&[1, 2, 3, 4]).unwrap();
            // Reassemble p(t, g) = p(t|g) p(g) and compare entrywise.
            for idx in 0..joint.probs.len() {
                let g = (idx & 1) | ((idx >> 3) & 1) << 1;
                let t = (idx >> 1) & 3;
                let recon = c.rows[g][t] * mg.probs[g];
                prop_assert!((recon - joint.probs[idx]).abs() < 1e-12);
            }
        }

        #[test]
        fn prop_perturb_rows_sum_and_monotone(q in arb_family(3), d1 in 1e-6f64..0.04, d2 in 0.04f64..0.09) {
            let q1 = q.perturb_full_support(d1).unwrap();
            let q2 = q.perturb_full_support(d2).unwrap();
            for r in 0..4 {
                let s1: f64 = q1.rows()[r].iter().sum();
                prop_assert!((s1 - 1.0).abs() < 1e-12);
                let width = q.rows()[r].len() as f64;
                for (v1, v2) in q1.rows()[r].iter().zip(q2.rows()[r].iter()) {
                    // Larger delta moves entries weakly closer to uniform.
                    prop_assert!((v2 - 1.0 / width).abs() <= (v1 - 1.0 / width).abs() + 1e-15);
                }
            }
        }

        #[test]
        fn prop_mirror_involution(q in arb_family(4)) {
            let m = q.mirror().mirror();
            for r in 0..4 {
                for (a, b) in m.rows()[r].iter().zip(q.rows()[r].iter()) {
                    prop_assert!((a - b).abs() < 1e-15);
                }
            }
        }
    }
}
