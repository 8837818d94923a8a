//! Exact optimal transport between pmfs on sorted 1-D supports.
//!
//! For a cost `|x - y|^p` with `p >= 1` the monotone (north-west corner)
//! coupling of two sorted pmfs is optimal, so the production solver runs in
//! linear time. A dense transportation-simplex solver is kept as an
//! independent reference for small instances.

use std::collections::VecDeque;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::density::{DiscreteDistribution, InterpolatedSupport, MASS_TOLERANCE};
use crate::error::{Error, Result};

/// Largest grid the reference solver accepts.
pub const ORACLE_MAX_STATES: usize = 64;

/// Ground cost `|x - y|^p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostSpec {
    p: u32,
}

impl CostSpec {
    pub fn new(p: u32) -> Result<Self> {
        if p == 0 {
            return Err(Error::Config("cost exponent must be at least 1".into()));
        }
        Ok(Self { p })
    }

    pub fn squared() -> Self {
        Self { p: 2 }
    }

    pub fn exponent(self) -> u32 {
        self.p
    }

    #[inline]
    pub fn eval(self, x: f64, y: f64) -> f64 {
        let d = (x - y).abs();
        match self.p {
            1 => d,
            2 => d * d,
            p => d.powi(p as i32),
        }
    }
}

impl Default for CostSpec {
    fn default() -> Self {
        Self::squared()
    }
}

/// One nonzero cell of a plan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub row: usize,
    pub col: usize,
    pub mass: f64,
}

/// A coupling between a source pmf (rows) and a target pmf (columns), stored
/// as its nonzero cells sorted by `(row, col)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    source: Arc<InterpolatedSupport>,
    target: Arc<InterpolatedSupport>,
    entries: Vec<PlanEntry>,
}

impl TransportPlan {
    /// Builds a plan from arbitrary cells. Cells are sorted and zero cells
    /// dropped; negative or non-finite masses are rejected.
    pub fn from_entries(
        source: Arc<InterpolatedSupport>,
        target: Arc<InterpolatedSupport>,
        mut entries: Vec<PlanEntry>,
    ) -> Result<Self> {
        for e in &entries {
            if e.row >= source.len() || e.col >= target.len() {
                return Err(Error::InvalidMass(format!("cell ({}, {}) outside the plan", e.row, e.col)));
            }
            if !(e.mass.is_finite() && e.mass >= 0.0) {
                return Err(Error::InvalidMass(format!(
                    "cell ({}, {}) has mass {}",
                    e.row, e.col, e.mass
                )));
            }
        }
        entries.retain(|e| e.mass > 0.0);
        entries.sort_by_key(|e| (e.row, e.col));
        Ok(Self {
            source,
            target,
            entries,
        })
    }

    pub fn source_support(&self) -> &Arc<InterpolatedSupport> {
        &self.source
    }

    pub fn target_support(&self) -> &Arc<InterpolatedSupport> {
        &self.target
    }

    pub fn entries(&self) -> &[PlanEntry] {
        &self.entries
    }

    pub fn n_rows(&self) -> usize {
        self.source.len()
    }

    pub fn n_cols(&self) -> usize {
        self.target.len()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.n_rows()];
        for e in &self.entries {
            sums[e.row] += e.mass;
        }
        sums
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.n_cols()];
        for e in &self.entries {
            sums[e.col] += e.mass;
        }
        sums
    }

    pub fn total_mass(&self) -> f64 {
        self.entries.iter().map(|e| e.mass).sum()
    }

    /// Row-major dense matrix.
    pub fn dense(&self) -> Vec<Vec<f64>> {
        let mut m = vec![vec![0.0; self.n_cols()]; self.n_rows()];
        for e in &self.entries {
            m[e.row][e.col] += e.mass;
        }
        m
    }

    /// Largest absolute deviation of the row and column sums from the given
    /// marginals.
    pub fn marginal_error(&self, source: &[f64], target: &[f64]) -> f64 {
        let rows = self.row_sums();
        let cols = self.col_sums();
        rows.iter()
            .zip(source)
            .chain(cols.iter().zip(target))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// True when no two support cells cross, i.e. `(i, j)` and `(i', j')`
    /// with `i < i'` and `j > j'`.
    pub fn is_monotone(&self) -> bool {
        // With entries sorted by (row, col), a crossing pair exists iff the
        // column sequence decreases somewhere.
        self.entries.windows(2).all(|w| w[0].col <= w[1].col)
    }
}

/// North-west corner coupling of two mass vectors with (approximately) equal
/// totals. Zero-mass states are skipped, so each emitted cell is positive.
pub(crate) fn north_west_corner(source: &[f64], target: &[f64]) -> Vec<PlanEntry> {
    let mut entries = Vec::with_capacity(source.len() + target.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut a = source.first().copied().unwrap_or(0.0);
    let mut b = target.first().copied().unwrap_or(0.0);
    while i < source.len() && j < target.len() {
        let m = a.min(b);
        if m > 0.0 {
            entries.push(PlanEntry { row: i, col: j, mass: m });
        }
        a -= m;
        b -= m;
        let advance_row = a <= 0.0;
        let advance_col = b <= 0.0;
        if advance_row {
            i += 1;
            a = source.get(i).copied().unwrap_or(0.0);
        }
        if advance_col {
            j += 1;
            b = target.get(j).copied().unwrap_or(0.0);
        }
    }
    entries
}

fn check_mass_balance(mu: &DiscreteDistribution, nu: &DiscreteDistribution) -> Result<()> {
    let source_mass: f64 = mu.mass().iter().sum();
    let target_mass: f64 = nu.mass().iter().sum();
    if (source_mass - target_mass).abs() > MASS_TOLERANCE {
        return Err(Error::MassMismatch {
            source_mass,
            target_mass,
        });
    }
    Ok(())
}

/// The monotone (CDF-matching) optimal plan from `mu` to `nu`.
///
/// The cost only affects optimality, not the plan: the monotone coupling is
/// optimal for every `|x - y|^p` with `p >= 1` on sorted supports.
pub fn monotone_plan(
    mu: &DiscreteDistribution,
    nu: &DiscreteDistribution,
    _cost: CostSpec,
) -> Result<TransportPlan> {
    check_mass_balance(mu, nu)?;
    Ok(TransportPlan {
        source: Arc::clone(mu.support()),
        target: Arc::clone(nu.support()),
        entries: north_west_corner(mu.mass(), nu.mass()),
    })
}

/// Expected cost `sum_ij C(x_i, y_j) pi_ij` of a plan.
pub fn transport_cost(plan: &TransportPlan, cost: CostSpec) -> f64 {
    let xs = plan.source.states();
    let ys = plan.target.states();
    plan.entries
        .iter()
        .map(|e| cost.eval(xs[e.row], ys[e.col]) * e.mass)
        .sum()
}

/// p-Wasserstein distance between two pmfs on sorted supports.
pub fn wasserstein_p(mu: &DiscreteDistribution, nu: &DiscreteDistribution, p: u32) -> Result<f64> {
    let cost = CostSpec::new(p)?;
    let plan = monotone_plan(mu, nu, cost)?;
    let c = transport_cost(&plan, cost).max(0.0);
    Ok(match p {
        1 => c,
        2 => c.sqrt(),
        p => c.powf(1.0 / p as f64),
    })
}

/// Relative distance to a grid state below which an interpolated atom is
/// treated as lying on that state.
const SNAP: f64 = 1e-9;

/// The point at parameter `t` on the W2 geodesic from `mu0` to `mu1`.
///
/// The two quantile functions are merged level by level; each level
/// interval becomes an atom at `(1-t) F0^-1 + t F1^-1`, which is then split
/// linearly between its two neighbouring grid states.
pub fn barycenter(
    mu0: &DiscreteDistribution,
    mu1: &DiscreteDistribution,
    t: f64,
) -> Result<DiscreteDistribution> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidT(t));
    }
    if !mu0.same_support(mu1) {
        return Err(Error::SupportMismatch);
    }
    check_mass_balance(mu0, mu1)?;
    let support = mu0.support();
    let states = support.states();
    let n = states.len();
    let mut mass = vec![0.0; n];
    for e in north_west_corner(mu0.mass(), mu1.mass()) {
        let x = (1.0 - t) * states[e.row] + t * states[e.col];
        let q = support.round_down(x);
        if q + 1 == n {
            mass[q] += e.mass;
            continue;
        }
        let mut tau = (x - states[q]) / (states[q + 1] - states[q]);
        if tau < SNAP {
            tau = 0.0;
        } else if tau > 1.0 - SNAP {
            tau = 1.0;
        }
        mass[q] += (1.0 - tau) * e.mass;
        mass[q + 1] += tau * e.mass;
    }
    DiscreteDistribution::new(Arc::clone(support), mass)
}

/// Optimal plan from a dense transportation simplex (least-cost start,
/// MODI pivoting on a spanning-tree basis). Exact up to floating point;
/// limited to [`ORACLE_MAX_STATES`] states per side.
pub fn lp_oracle_plan(
    mu: &DiscreteDistribution,
    nu: &DiscreteDistribution,
    cost: CostSpec,
) -> Result<TransportPlan> {
    let n = mu.len().max(nu.len());
    if n > ORACLE_MAX_STATES {
        return Err(Error::OracleTooLarge(n));
    }
    check_mass_balance(mu, nu)?;
    let xs = mu.support().states();
    let ys = nu.support().states();
    let costs: Vec<Vec<f64>> = xs
        .iter()
        .map(|&x| ys.iter().map(|&y| cost.eval(x, y)).collect())
        .collect();
    let flow = transportation_simplex(mu.mass(), nu.mass(), &costs);
    let mut entries = Vec::new();
    for (row, r) in flow.iter().enumerate() {
        for (col, &mass) in r.iter().enumerate() {
            if mass > 0.0 {
                entries.push(PlanEntry { row, col, mass });
            }
        }
    }
    TransportPlan::from_entries(Arc::clone(mu.support()), Arc::clone(nu.support()), entries)
}

fn transportation_simplex(supply: &[f64], demand: &[f64], cost: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let m = supply.len();
    let n = demand.len();
    let mut flow = vec![vec![0.0; n]; m];
    let mut basic = vec![vec![false; n]; m];

    // Least-cost initial basis: every allocation retires exactly one line, so
    // the m + n - 1 basic cells form a spanning tree (degenerate zeros kept).
    let mut s = supply.to_vec();
    let mut d = demand.to_vec();
    let mut row_live = vec![true; m];
    let mut col_live = vec![true; n];
    let (mut rows_left, mut cols_left) = (m, n);
    for step in 0..(m + n - 1) {
        let mut best: Option<(usize, usize)> = None;
        for i in (0..m).filter(|&i| row_live[i]) {
            for j in (0..n).filter(|&j| col_live[j]) {
                if best.is_none_or(|(bi, bj)| cost[i][j] < cost[bi][bj]) {
                    best = Some((i, j));
                }
            }
        }
        let (i, j) = best.expect("a live row and column remain");
        let q = s[i].min(d[j]).max(0.0);
        flow[i][j] = q;
        basic[i][j] = true;
        s[i] -= q;
        d[j] -= q;
        if step + 1 == m + n - 1 {
            break;
        }
        if (s[i] <= d[j] && rows_left > 1) || cols_left == 1 {
            row_live[i] = false;
            rows_left -= 1;
        } else {
            col_live[j] = false;
            cols_left -= 1;
        }
    }

    let scale = cost
        .iter()
        .flatten()
        .fold(0.0f64, |acc, c| acc.max(c.abs()))
        .max(1.0);
    let tol = 1e-12 * scale;
    let max_iter = 50 * m * n + 100;
    let nodes = m + n;

    for _ in 0..max_iter {
        // Adjacency of the basis tree; rows are nodes 0..m, columns m..m+n.
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); nodes];
        for i in 0..m {
            for j in 0..n {
                if basic[i][j] {
                    adj[i].push(m + j);
                    adj[m + j].push(i);
                }
            }
        }
        // Dual potentials with u_0 = 0.
        let mut pot = vec![f64::NAN; nodes];
        let mut queue = VecDeque::new();
        for root in 0..nodes {
            if !pot[root].is_nan() {
                continue;
            }
            pot[root] = 0.0;
            queue.push_back(root);
            while let Some(a) = queue.pop_front() {
                for &b in &adj[a] {
                    if pot[b].is_nan() {
                        let (i, j) = if a < m { (a, b - m) } else { (b, a - m) };
                        pot[b] = cost[i][j] - pot[a];
                        queue.push_back(b);
                    }
                }
            }
        }
        let mut entering: Option<(usize, usize, f64)> = None;
        for i in 0..m {
            for j in 0..n {
                if basic[i][j] {
                    continue;
                }
                let r = cost[i][j] - pot[i] - pot[m + j];
                if r < -tol && entering.is_none_or(|(_, _, best)| r < best) {
                    entering = Some((i, j, r));
                }
            }
        }
        let Some((ei, ej, _)) = entering else {
            break;
        };

        // Tree path from column node ej back to row node ei.
        let mut parent = vec![usize::MAX; nodes];
        parent[ei] = ei;
        queue.clear();
        queue.push_back(ei);
        while let Some(a) = queue.pop_front() {
            if a == m + ej {
                break;
            }
            for &b in &adj[a] {
                if parent[b] == usize::MAX {
                    parent[b] = a;
                    queue.push_back(b);
                }
            }
        }
        let mut cycle = Vec::new();
        let mut node = m + ej;
        while node != ei {
            let p = parent[node];
            let (i, j) = if p < m { (p, node - m) } else { (node, p - m) };
            cycle.push((i, j));
            node = p;
        }
        // Cells alternate -, +, -, ... starting next to the entering cell.
        let mut theta = f64::INFINITY;
        let mut leaving = None;
        for (idx, &(i, j)) in cycle.iter().enumerate() {
            if idx % 2 == 0 && flow[i][j] < theta {
                theta = flow[i][j];
                leaving = Some((i, j));
            }
        }
        let (li, lj) = leaving.expect("cycle has a decreasing cell");
        for (idx, &(i, j)) in cycle.iter().enumerate() {
            if idx % 2 == 0 {
                flow[i][j] -= theta;
            } else {
                flow[i][j] += theta;
            }
        }
        flow[ei][ej] += theta;
        flow[li][lj] = 0.0;
        basic[li][lj] = false;
        basic[ei][ej] = true;
    }
    for row in &mut flow {
        for f in row.iter_mut() {
            if *f < 0.0 {
                *f = 0.0;
            }
        }
    }
    flow
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(lo: f64, hi: f64, n: usize) -> Arc<InterpolatedSupport> {
        Arc::new(InterpolatedSupport::uniform(lo, hi, n).unwrap())
    }

    fn pmf(support: &Arc<InterpolatedSupport>, mass: &[f64]) -> DiscreteDistribution {
        DiscreteDistribution::new(Arc::clone(support), mass.to_vec()).unwrap()
    }

    #[test]
    fn identity_coupling() {
        let g = grid(0.0, 1.0, 2);
        let mu = pmf(&g, &[0.5, 0.5]);
        let plan = monotone_plan(&mu, &mu, CostSpec::squared()).unwrap();
        assert_eq!(plan.dense(), vec![vec![0.5, 0.0], vec![0.0, 0.5]]);
        assert_eq!(transport_cost(&plan, CostSpec::squared()), 0.0);
    }

    #[test]
    fn single_path() {
        let g = grid(0.0, 1.0, 2);
        let plan = monotone_plan(&pmf(&g, &[1.0, 0.0]), &pmf(&g, &[0.0, 1.0]), CostSpec::squared()).unwrap();
        assert_eq!(plan.entries(), &[PlanEntry { row: 0, col: 1, mass: 1.0 }]);
        assert_eq!(transport_cost(&plan, CostSpec::squared()), 1.0);
    }

    #[test]
    fn two_by_two_split() {
        let g = grid(0.0, 1.0, 2);
        let plan = monotone_plan(&pmf(&g, &[0.3, 0.7]), &pmf(&g, &[0.6, 0.4]), CostSpec::squared()).unwrap();
        let d = plan.dense();
        assert!((d[0][0] - 0.3).abs() < 1e-15 && d[0][1] == 0.0);
        assert!((d[1][0] - 0.3).abs() < 1e-15 && (d[1][1] - 0.4).abs() < 1e-15);
        assert!((transport_cost(&plan, CostSpec::squared()) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn mass_mismatch_rejected() {
        let g = grid(0.0, 1.0, 2);
        let mu = pmf(&g, &[0.5, 0.5]);
        let bad = DiscreteDistribution::new(Arc::clone(&g), vec![0.5, 0.5]).unwrap();
        // Construct an unbalanced target by bypassing normalisation.
        let unbalanced = DiscreteDistribution {
            support: bad.support().clone(),
            mass: vec![0.5, 0.6],
        };
        assert!(matches!(
            monotone_plan(&mu, &unbalanced, CostSpec::squared()),
            Err(Error::MassMismatch { .. })
        ));
    }

    #[test]
    fn barycenter_midpoint_of_point_masses() {
        let g = grid(-1.0, 2.0, 4);
        let mu0 = DiscreteDistribution::point_mass(Arc::clone(&g), 1).unwrap();
        let mu1 = DiscreteDistribution::point_mass(Arc::clone(&g), 3).unwrap();
        let nu = barycenter(&mu0, &mu1, 0.5).unwrap();
        assert_eq!(nu.mass(), &[0.0, 0.0, 1.0, 0.0]);
        let a = wasserstein_p(&mu0, &nu, 2).unwrap();
        let b = wasserstein_p(&mu1, &nu, 2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn barycenter_endpoints_and_fixed_point() {
        let g = grid(0.0, 3.0, 7);
        let mu0 = pmf(&g, &[0.1, 0.2, 0.0, 0.3, 0.1, 0.2, 0.1]);
        let mu1 = pmf(&g, &[0.0, 0.05, 0.4, 0.05, 0.1, 0.1, 0.3]);
        assert_eq!(barycenter(&mu0, &mu1, 0.0).unwrap().mass(), mu0.mass());
        let end = barycenter(&mu0, &mu1, 1.0).unwrap();
        for (a, b) in end.mass().iter().zip(mu1.mass()) {
            assert!((a - b).abs() < 1e-15);
        }
        for t in [0.0, 0.3, 0.5, 1.0] {
            assert_eq!(barycenter(&mu0, &mu0, t).unwrap().mass(), mu0.mass());
        }
    }

    #[test]
    fn barycenter_rejects_bad_input() {
        let g = grid(0.0, 1.0, 3);
        let h = grid(0.0, 2.0, 3);
        let mu = pmf(&g, &[0.2, 0.3, 0.5]);
        let other = pmf(&h, &[0.2, 0.3, 0.5]);
        assert!(matches!(barycenter(&mu, &other, 0.5), Err(Error::SupportMismatch)));
        assert!(matches!(barycenter(&mu, &mu, 1.5), Err(Error::InvalidT(_))));
    }

    #[test]
    fn oracle_limits() {
        let g = grid(0.0, 1.0, 65);
        let mu = DiscreteDistribution::point_mass(Arc::clone(&g), 0).unwrap();
        assert!(matches!(
            lp_oracle_plan(&mu, &mu, CostSpec::squared()),
            Err(Error::OracleTooLarge(65))
        ));
    }

    #[test]
    fn monotone_detection() {
        let g = grid(0.0, 1.0, 2);
        let crossing = TransportPlan::from_entries(
            Arc::clone(&g),
            Arc::clone(&g),
            vec![
                PlanEntry { row: 0, col: 1, mass: 0.5 },
                PlanEntry { row: 1, col: 0, mass: 0.5 },
            ],
        )
        .unwrap();
        assert!(!crossing.is_monotone());
        let stair = TransportPlan::from_entries(
            Arc::clone(&g),
            Arc::clone(&g),
            vec![
                PlanEntry { row: 0, col: 0, mass: 0.3 },
                PlanEntry { row: 1, col: 0, mass: 0.3 },
                PlanEntry { row: 1, col: 1, mass: 0.4 },
            ],
        )
        .unwrap();
        assert!(stair.is_monotone());
    }

    #[test]
    fn nw_corner_skips_zero_states() {
        let e = north_west_corner(&[0.0, 0.5, 0.0, 0.5], &[0.5, 0.0, 0.5]);
        assert_eq!(
            e,
            vec![
                PlanEntry { row: 1, col: 0, mass: 0.5 },
                PlanEntry { row: 3, col: 2, mass: 0.5 },
            ]
        );
    }
}
