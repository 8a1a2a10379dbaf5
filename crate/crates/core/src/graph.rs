//! Directed communication graphs and the stochastic weights built on them.
//!
//! Agents are indexed from zero internally. The edge-list text format is
//! one-based to match how topologies are usually written down by hand:
//!
//! ```text
//! # five agents
//! 5
//! 2 1   # agent 1 sends to agent 2
//! ```
//!
//! An edge `(to, from)` means `from` can send messages to `to`. The pull
//! matrix `R` uses it as "`to` pulls from `from`", the push matrix `C~` as
//! "`from` pushes to `to`".

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::{Error, Result};

pub const POWER_ITERATION_CAP: usize = 100_000;
pub const POWER_ITERATION_TOL: f64 = 1e-13;
pub const EIGEN_RESIDUAL_TOL: f64 = 1e-12;
/// Row/column sums of injected matrices may deviate from one by this much.
pub const STOCHASTIC_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NetworkTopology {
    n: usize,
    /// `(to, from)`, zero-based.
    edges: BTreeSet<(usize, usize)>,
}

impl NetworkTopology {
    /// Builds a topology from zero-based `(to, from)` pairs.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::Topology("agent count must be positive".into()));
        }
        let mut set = BTreeSet::new();
        for (to, from) in edges {
            if to >= n || from >= n {
                return Err(Error::Topology(format!(
                    "edge ({}, {}) references an agent outside 1..={n}",
                    to + 1,
                    from + 1
                )));
            }
            if to == from {
                return Err(Error::Topology(format!("self-loop on agent {}", to + 1)));
            }
            set.insert((to, from));
        }
        Ok(Self { n, edges: set })
    }

    pub fn empty(n: usize) -> Result<Self> {
        Self::new(n, std::iter::empty())
    }

    /// `0 -> 1 -> ... -> n-1 -> 0`.
    pub fn directed_ring(n: usize) -> Result<Self> {
        if n == 1 {
            return Self::empty(1);
        }
        Self::new(n, (0..n).map(|i| ((i + 1) % n, i)))
    }

    /// Five agents on a directed ring plus the chords 1 -> 3 and 4 -> 2
    /// (one-based). The default five-agent network.
    pub fn ring_with_chords() -> Self {
        let mut edges: Vec<(usize, usize)> = (0..5).map(|i| ((i + 1) % 5, i)).collect();
        edges.push((2, 0));
        edges.push((1, 3));
        Self::new(5, edges).expect("static topology is valid")
    }

    /// Parses the one-based edge-list format: first non-comment line is `n`,
    /// every further line is `j i` meaning agent `i` sends to agent `j`.
    pub fn from_edge_list(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(no, l)| (no + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());

        let (no, first) = lines
            .next()
            .ok_or_else(|| Error::Topology("empty edge list".into()))?;
        let n: usize = first
            .parse()
            .map_err(|_| Error::Topology(format!("line {no}: expected agent count, got `{first}`")))?;

        let mut edges = Vec::new();
        for (no, line) in lines {
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [j, i] = fields[..] else {
                return Err(Error::Topology(format!(
                    "line {no}: expected two agent indices, got `{line}`"
                )));
            };
            let parse = |s: &str| -> Result<usize> {
                let v: usize = s
                    .parse()
                    .map_err(|_| Error::Topology(format!("line {no}: bad agent index `{s}`")))?;
                if v == 0 || v > n {
                    return Err(Error::Topology(format!(
                        "line {no}: agent {v} outside 1..={n}"
                    )));
                }
                Ok(v - 1)
            };
            edges.push((parse(j)?, parse(i)?));
        }
        Self::new(n, edges)
    }

    pub fn to_edge_list(&self) -> String {
        let mut out = format!("{}\n", self.n);
        for (to, from) in &self.edges {
            let _ = writeln!(out, "{} {}", to + 1, from + 1);
        }
        out
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Zero-based `(to, from)` pairs.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn in_neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges
            .iter()
            .filter(move |(to, _)| *to == i)
            .map(|(_, from)| *from)
    }

    pub fn out_neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges
            .iter()
            .filter(move |(_, from)| *from == i)
            .map(|(to, _)| *to)
    }
}

/// `R_ij = 1 / (|N_in(i)| + c_R)` on in-neighbours, remainder on the diagonal.
pub fn build_pull_matrix(topology: &NetworkTopology, c_r: f64) -> Result<DMatrix<f64>> {
    if !(c_r > 0.0) || !c_r.is_finite() {
        return Err(Error::param("c_R", format!("must be positive, got {c_r}")));
    }
    let n = topology.n();
    let mut r = DMatrix::zeros(n, n);
    for i in 0..n {
        let nbrs: Vec<usize> = topology.in_neighbors(i).collect();
        let w = 1.0 / (nbrs.len() as f64 + c_r);
        for &j in &nbrs {
            r[(i, j)] = w;
        }
        r[(i, i)] = 1.0 - nbrs.iter().map(|&j| r[(i, j)]).sum::<f64>();
    }
    Ok(r)
}

/// Push-side weights: the shared-state mixing matrix `C~` and the
/// decomposition weights `alpha`, `beta`.
#[derive(Debug, Clone, PartialEq)]
pub struct PushWeights {
    pub ctilde: DMatrix<f64>,
    pub alpha: DVector<f64>,
    pub beta: DVector<f64>,
}

fn check_open_unit(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(Error::param(name, format!("must lie in (0, 1), got {value}")))
    }
}

/// `alpha_i = zeta`, `C~_li = (1 - zeta) / (|N_out(i)| + c_C)` on out-neighbours,
/// `C~_ii = 1 - zeta - sum_l C~_li`.
pub fn build_push_system(
    topology: &NetworkTopology,
    zeta: f64,
    c_c: f64,
    beta: &[f64],
) -> Result<PushWeights> {
    check_open_unit("zeta", zeta)?;
    if !(c_c > 0.0) || !c_c.is_finite() {
        return Err(Error::param("c_C", format!("must be positive, got {c_c}")));
    }
    let n = topology.n();
    if beta.len() != n {
        return Err(Error::DimensionMismatch {
            what: "beta",
            expected: n.to_string(),
            found: beta.len().to_string(),
        });
    }
    for &b in beta {
        check_open_unit("beta", b)?;
    }
    Ok(PushWeights {
        ctilde: column_push_matrix(topology, 1.0 - zeta, c_c),
        alpha: DVector::from_element(n, zeta),
        beta: DVector::from_column_slice(beta),
    })
}

/// Column-stochastic push matrix without decomposition, for the plain
/// push-pull baseline.
pub fn build_plain_push_matrix(topology: &NetworkTopology, c_c: f64) -> Result<DMatrix<f64>> {
    if !(c_c > 0.0) || !c_c.is_finite() {
        return Err(Error::param("c_C", format!("must be positive, got {c_c}")));
    }
    Ok(column_push_matrix(topology, 1.0, c_c))
}

fn column_push_matrix(topology: &NetworkTopology, mass: f64, c_c: f64) -> DMatrix<f64> {
    let n = topology.n();
    let mut c = DMatrix::zeros(n, n);
    for i in 0..n {
        let nbrs: Vec<usize> = topology.out_neighbors(i).collect();
        let w = mass / (nbrs.len() as f64 + c_c);
        for &l in &nbrs {
            c[(l, i)] = w;
        }
        c[(i, i)] = mass - nbrs.iter().map(|&l| c[(l, i)]).sum::<f64>();
    }
    c
}

/// `[[C~, I - diag(beta)], [diag(alpha), diag(beta)]]`.
pub fn assemble_c(ctilde: &DMatrix<f64>, alpha: &DVector<f64>, beta: &DVector<f64>) -> Result<DMatrix<f64>> {
    let n = ctilde.nrows();
    if !ctilde.is_square() {
        return Err(Error::DimensionMismatch {
            what: "C~",
            expected: format!("{n}x{n}"),
            found: format!("{}x{}", ctilde.nrows(), ctilde.ncols()),
        });
    }
    for (what, vec) in [("alpha", alpha), ("beta", beta)] {
        if vec.len() != n {
            return Err(Error::DimensionMismatch {
                what,
                expected: n.to_string(),
                found: vec.len().to_string(),
            });
        }
    }
    let mut c = DMatrix::zeros(2 * n, 2 * n);
    c.view_mut((0, 0), (n, n)).copy_from(ctilde);
    for i in 0..n {
        c[(i, n + i)] = 1.0 - beta[i];
        c[(n + i, i)] = alpha[i];
        c[(n + i, n + i)] = beta[i];
    }
    Ok(c)
}

/// Outcome of the spanning-tree check on `G_R` and `G_{C^T}`.
///
/// A root of `G_R` is an agent whose state reaches every other agent through
/// pulls; a root of `G_{C^T}` is an agent that every other agent reaches
/// through pushes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SpanningTreeReport {
    pub pull_roots: Vec<usize>,
    pub push_roots: Vec<usize>,
    pub common_roots: Vec<usize>,
}

impl SpanningTreeReport {
    pub fn pull_has_tree(&self) -> bool {
        !self.pull_roots.is_empty()
    }

    pub fn push_has_tree(&self) -> bool {
        !self.push_roots.is_empty()
    }

    pub fn passes(&self) -> bool {
        !self.common_roots.is_empty()
    }

    pub fn into_result(self) -> Result<Self> {
        if self.passes() {
            return Ok(self);
        }
        let detail = match (self.pull_has_tree(), self.push_has_tree()) {
            (false, false) => "neither the pull nor the push graph has a spanning tree",
            (false, true) => "the pull graph has no spanning tree",
            (true, false) => "the push graph has no spanning tree",
            (true, true) => "the two spanning-tree root sets are disjoint",
        };
        Err(Error::SpanningTree {
            detail: detail.into(),
            pull_roots: self.pull_roots,
            push_roots: self.push_roots,
        })
    }
}

/// Nodes from which every node is reachable. `adj[a]` lists heads of `a -> b`.
fn spanning_roots(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let mut roots = Vec::new();
    let mut seen = vec![false; n];
    let mut queue = VecDeque::new();
    for root in 0..n {
        seen.iter_mut().for_each(|s| *s = false);
        seen[root] = true;
        queue.clear();
        queue.push_back(root);
        let mut count = 1;
        while let Some(a) = queue.pop_front() {
            for &b in &adj[a] {
                if !seen[b] {
                    seen[b] = true;
                    count += 1;
                    queue.push_back(b);
                }
            }
        }
        if count == n {
            roots.push(root);
        }
    }
    roots
}

/// Checks both induced graphs for spanning trees and a common root.
///
/// `G_R` has an edge `j -> i` whenever `R_ij > 0`. `G_{C^T}` has an edge
/// `j -> i` whenever `C~_ji > 0`, i.e. the push graph reversed. The private
/// sub-states only link to their own agent, so the agent-level `C~`
/// determines the reachability of the full `2n` graph.
pub fn check_spanning_trees(r: &DMatrix<f64>, ctilde: &DMatrix<f64>) -> SpanningTreeReport {
    let n = r.nrows();
    let mut pull = vec![Vec::new(); n];
    let mut push = vec![Vec::new(); n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            if r[(i, j)] > 0.0 {
                pull[j].push(i);
            }
            if ctilde[(j, i)] > 0.0 {
                push[j].push(i);
            }
        }
    }
    let pull_roots = spanning_roots(&pull);
    let push_roots = spanning_roots(&push);
    let common_roots = pull_roots
        .iter()
        .copied()
        .filter(|r| push_roots.contains(r))
        .collect();
    SpanningTreeReport {
        pull_roots,
        push_roots,
        common_roots,
    }
}

fn perron_vector(
    what: &'static str,
    apply: impl Fn(&DVector<f64>) -> DVector<f64>,
    init: DVector<f64>,
    total: f64,
) -> Result<DVector<f64>> {
    let normalize = |mut x: DVector<f64>| -> Result<DVector<f64>> {
        let s = x.sum();
        if !(s.abs() > 0.0) || !s.is_finite() {
            return Err(Error::param(what, "iterate has zero or non-finite mass"));
        }
        x *= total / s;
        Ok(x)
    };
    let mut x = normalize(init)?;
    let mut change = f64::INFINITY;
    for _ in 0..POWER_ITERATION_CAP {
        let next = normalize(apply(&x))?;
        change = (&next - &x).amax();
        x = next;
        if change <= POWER_ITERATION_TOL * x.amax().max(1.0) {
            let residual = (apply(&x) - &x).amax();
            if residual <= EIGEN_RESIDUAL_TOL {
                return Ok(x);
            }
        }
    }
    Err(Error::NoConvergence {
        what,
        iterations: POWER_ITERATION_CAP,
        last_change: change,
    })
}

/// Left Perron vector of `R`, normalised so `u^T 1 = n`.
pub fn left_eigenvector_u(r: &DMatrix<f64>) -> Result<DVector<f64>> {
    left_eigenvector_u_from(r, DVector::from_element(r.nrows(), 1.0))
}

pub fn left_eigenvector_u_from(r: &DMatrix<f64>, init: DVector<f64>) -> Result<DVector<f64>> {
    let n = r.nrows();
    let rt = r.transpose();
    perron_vector("left eigenvector u", |x| &rt * x, init, n as f64)
}

/// Right Perron vector of `C`, normalised so `1^T v = n` (half the dimension).
pub fn right_eigenvector_v(c: &DMatrix<f64>) -> Result<DVector<f64>> {
    right_eigenvector_v_from(c, DVector::from_element(c.nrows(), 1.0))
}

pub fn right_eigenvector_v_from(c: &DMatrix<f64>, init: DVector<f64>) -> Result<DVector<f64>> {
    let n = c.nrows() / 2;
    perron_vector("right eigenvector v", |x| c * x, init, n as f64)
}

/// Right Perron vector of any column-stochastic matrix, entries summing to `total`.
pub fn right_perron_vector(c: &DMatrix<f64>, total: f64) -> Result<DVector<f64>> {
    perron_vector(
        "right Perron vector",
        |x| c * x,
        DVector::from_element(c.nrows(), 1.0),
        total,
    )
}

/// Construction parameters for the published weight recipes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightParams {
    pub c_r: f64,
    pub zeta: f64,
    pub c_c: f64,
    pub beta: Vec<f64>,
}

impl WeightParams {
    pub fn uniform(n: usize, c_r: f64, zeta: f64, c_c: f64, beta: f64) -> Self {
        Self {
            c_r,
            zeta,
            c_c,
            beta: vec![beta; n],
        }
    }
}

/// Validated weights plus everything derived from them. Immutable once built.
#[derive(Debug, Clone)]
pub struct WeightSystem {
    pub r: DMatrix<f64>,
    pub ctilde: DMatrix<f64>,
    pub alpha: DVector<f64>,
    pub beta: DVector<f64>,
    /// `2n x 2n`.
    pub c: DMatrix<f64>,
    /// `[I_n, 0_n]`.
    pub t: DMatrix<f64>,
    pub u: DVector<f64>,
    pub v: DVector<f64>,
    pub roots: SpanningTreeReport,
}

impl WeightSystem {
    pub fn from_topology(topology: &NetworkTopology, params: &WeightParams) -> Result<Self> {
        let r = build_pull_matrix(topology, params.c_r)?;
        let push = build_push_system(topology, params.zeta, params.c_c, &params.beta)?;
        Self::new(r, push.ctilde, push.alpha, push.beta)
    }

    /// Validates injected matrices and derives `C`, `T`, `u`, `v`. Refuses
    /// weights whose graphs lack a common spanning-tree root.
    pub fn new(
        r: DMatrix<f64>,
        ctilde: DMatrix<f64>,
        alpha: DVector<f64>,
        beta: DVector<f64>,
    ) -> Result<Self> {
        let n = r.nrows();
        if n == 0 || !r.is_square() {
            return Err(Error::DimensionMismatch {
                what: "R",
                expected: "non-empty square".into(),
                found: format!("{}x{}", r.nrows(), r.ncols()),
            });
        }
        if ctilde.shape() != (n, n) {
            return Err(Error::DimensionMismatch {
                what: "C~",
                expected: format!("{n}x{n}"),
                found: format!("{}x{}", ctilde.nrows(), ctilde.ncols()),
            });
        }
        for &a in alpha.iter() {
            check_open_unit("alpha", a)?;
        }
        for &b in beta.iter() {
            check_open_unit("beta", b)?;
        }
        let c = assemble_c(&ctilde, &alpha, &beta)?;

        if r.iter().chain(ctilde.iter()).any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::Weights("entries must be finite and nonnegative".into()));
        }
        for i in 0..n {
            let row = r.row(i).sum();
            if (row - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::Weights(format!(
                    "R is not row-stochastic: row {} sums to {row}",
                    i + 1
                )));
            }
            if !(r[(i, i)] > 0.0) {
                return Err(Error::Weights(format!("R_{0}{0} must be positive", i + 1)));
            }
            if !(ctilde[(i, i)] > 0.0) {
                return Err(Error::Weights(format!("C~_{0}{0} must be positive", i + 1)));
            }
        }
        for j in 0..2 * n {
            let col = c.column(j).sum();
            if (col - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::Weights(format!(
                    "C is not column-stochastic: column {} sums to {col}",
                    j + 1
                )));
            }
        }

        let roots = check_spanning_trees(&r, &ctilde).into_result()?;
        let u = left_eigenvector_u(&r)?;
        let v = right_eigenvector_v(&c)?;
        let mut t = DMatrix::zeros(n, 2 * n);
        t.view_mut((0, 0), (n, n)).fill_with_identity();

        Ok(Self {
            r,
            ctilde,
            alpha,
            beta,
            c,
            t,
            u,
            v,
            roots,
        })
    }

    pub fn n(&self) -> usize {
        self.r.nrows()
    }

    /// `u^T T v`.
    pub fn u_t_v(&self) -> f64 {
        let n = self.n();
        self.u.dot(&self.v.rows(0, n))
    }

    pub fn max_row_sum_error(&self) -> f64 {
        (0..self.n())
            .map(|i| (self.r.row(i).sum() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_column_sum_error(&self) -> f64 {
        (0..2 * self.n())
            .map(|j| (self.c.column(j).sum() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// `||u^T R - u^T||_inf`.
    pub fn u_residual(&self) -> f64 {
        (self.r.tr_mul(&self.u) - &self.u).amax()
    }

    /// `||C v - v||_inf`.
    pub fn v_residual(&self) -> f64 {
        (&self.c * &self.v - &self.v).amax()
    }

    /// `R - 1 u^T / n`.
    pub fn r_deviation(&self) -> DMatrix<f64> {
        let n = self.n();
        &self.r - DMatrix::from_element(n, 1, 1.0) * self.u.transpose() / n as f64
    }

    /// `C - v 1^T / n`.
    pub fn c_deviation(&self) -> DMatrix<f64> {
        let n = self.n();
        &self.c - &self.v * DMatrix::from_element(1, 2 * n, 1.0) / n as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> bool {
        a.shape() == b.shape() && (a - b).amax() <= tol
    }

    #[test]
    fn pull_matrix_of_empty_topology_is_identity() {
        for c_r in [0.1, 1.0, 7.0] {
            let r = build_pull_matrix(&NetworkTopology::empty(4).unwrap(), c_r).unwrap();
            assert_eq!(r, DMatrix::identity(4, 4));
        }
    }

    #[test]
    fn pull_matrix_two_agents() {
        // agent 1 sends to agent 2
        let topo = NetworkTopology::new(2, [(1, 0)]).unwrap();
        let r = build_pull_matrix(&topo, 1.0).unwrap();
        assert!(close(&r, &DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.5, 0.5]), 0.0));
    }

    #[test]
    fn pull_matrix_directed_ring() {
        let r = build_pull_matrix(&NetworkTopology::directed_ring(3).unwrap(), 1.0).unwrap();
        for i in 0..3 {
            assert_eq!(r[(i, i)], 0.5);
            assert_eq!(r[(i, (i + 2) % 3)], 0.5);
            assert_eq!(r[(i, (i + 1) % 3)], 0.0);
        }
    }

    #[test]
    fn push_system_single_agent() {
        let topo = NetworkTopology::empty(1).unwrap();
        let push = build_push_system(&topo, 0.01, 1.0, &[0.5]).unwrap();
        let c = assemble_c(&push.ctilde, &push.alpha, &push.beta).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[0.99, 0.5, 0.01, 0.5]);
        assert!(close(&c, &expected, 1e-15));
        for j in 0..2 {
            assert!((c.column(j).sum() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn push_system_empty_topology() {
        let push = build_push_system(&NetworkTopology::empty(3).unwrap(), 0.5, 1.0, &[0.5; 3]).unwrap();
        assert!(close(&push.ctilde, &(DMatrix::identity(3, 3) * 0.5), 0.0));
    }

    #[test]
    fn push_system_two_agents() {
        let topo = NetworkTopology::new(2, [(1, 0)]).unwrap();
        let push = build_push_system(&topo, 0.01, 1.0, &[0.5, 0.5]).unwrap();
        assert!((push.ctilde[(1, 0)] - 0.495).abs() < 1e-15);
        assert!((push.ctilde[(0, 0)] - 0.495).abs() < 1e-15);
        assert!((push.ctilde[(1, 1)] - 0.99).abs() < 1e-15);
        assert_eq!(push.ctilde[(0, 1)], 0.0);
    }

    #[test]
    fn push_system_rejects_out_of_range_weights() {
        let topo = NetworkTopology::directed_ring(3).unwrap();
        for zeta in [0.0, 1.0, -0.1, 1.5] {
            assert!(build_push_system(&topo, zeta, 1.0, &[0.5; 3]).is_err());
        }
        assert!(build_push_system(&topo, 0.1, 1.0, &[0.5, 1.0, 0.5]).is_err());
        assert!(build_push_system(&topo, 0.1, 1.0, &[0.5, 0.0, 0.5]).is_err());
        assert!(build_push_system(&topo, 0.1, 0.0, &[0.5; 3]).is_err());
        assert!(build_push_system(&topo, 0.1, 1.0, &[0.5; 2]).is_err());
    }

    #[test]
    fn assembled_columns_sum_to_one() {
        let topo = NetworkTopology::ring_with_chords();
        let push = build_push_system(&topo, 0.2, 0.7, &[0.1, 0.3, 0.5, 0.7, 0.9]).unwrap();
        let c = assemble_c(&push.ctilde, &push.alpha, &push.beta).unwrap();
        for j in 0..10 {
            assert!((c.column(j).sum() - 1.0).abs() <= 1e-15);
        }
    }

    #[test]
    fn assemble_rejects_dimension_mismatch() {
        let ct = DMatrix::identity(2, 2) * 0.5;
        let a = DVector::from_element(3, 0.5);
        let b = DVector::from_element(2, 0.5);
        assert!(matches!(
            assemble_c(&ct, &a, &b),
            Err(Error::DimensionMismatch { what: "alpha", .. })
        ));
    }

    #[test]
    fn spanning_tree_strongly_connected() {
        let topo = NetworkTopology::ring_with_chords();
        let r = build_pull_matrix(&topo, 1.0).unwrap();
        let ct = build_push_system(&topo, 0.01, 1.0, &[0.5; 5]).unwrap().ctilde;
        let rep = check_spanning_trees(&r, &ct);
        assert!(rep.passes());
        assert_eq!(rep.common_roots, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn spanning_tree_disconnected() {
        let topo = NetworkTopology::new(4, [(1, 0), (0, 1), (3, 2), (2, 3)]).unwrap();
        let r = build_pull_matrix(&topo, 1.0).unwrap();
        let ct = build_push_system(&topo, 0.01, 1.0, &[0.5; 4]).unwrap().ctilde;
        let rep = check_spanning_trees(&r, &ct);
        assert!(!rep.passes());
        assert!(rep.common_roots.is_empty());
        assert!(matches!(rep.into_result(), Err(Error::SpanningTree { .. })));
    }

    #[test]
    fn spanning_tree_star_root() {
        // Agent 1 is pulled from by everyone; everyone pushes to agent 1.
        let pull_topo = NetworkTopology::new(4, (1..4).map(|l| (l, 0))).unwrap();
        let push_topo = NetworkTopology::new(4, (1..4).map(|l| (0, l))).unwrap();
        let r = build_pull_matrix(&pull_topo, 1.0).unwrap();
        let ct = build_push_system(&push_topo, 0.01, 1.0, &[0.5; 4]).unwrap().ctilde;
        let rep = check_spanning_trees(&r, &ct);
        assert_eq!(rep.pull_roots, vec![0]);
        assert_eq!(rep.push_roots, vec![0]);
        assert_eq!(rep.common_roots, vec![0]);

        // Same star used for both pulls and pushes: agent 1 never receives
        // anyone's gradient information.
        let ct_same = build_push_system(&pull_topo, 0.01, 1.0, &[0.5; 4]).unwrap().ctilde;
        assert!(!check_spanning_trees(&r, &ct_same).passes());
    }

    #[test]
    fn left_eigenvector_of_triangular_pull_matrix() {
        let r = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.5, 0.5]);
        let u = left_eigenvector_u(&r).unwrap();
        assert!((u[0] - 2.0).abs() < 1e-12);
        assert!(u[1].abs() < 1e-12);
    }

    #[test]
    fn right_eigenvector_single_agent() {
        let c = DMatrix::from_row_slice(2, 2, &[0.99, 0.5, 0.01, 0.5]);
        let v = right_eigenvector_v(&c).unwrap();
        assert!((v[0] - 1.0 / 1.02).abs() < 1e-12);
        assert!((v[1] - 0.02 / 1.02).abs() < 1e-12);
    }

    #[test]
    fn doubly_stochastic_has_uniform_u() {
        let r = DMatrix::from_row_slice(3, 3, &[0.5, 0.25, 0.25, 0.25, 0.5, 0.25, 0.25, 0.25, 0.5]);
        let u = left_eigenvector_u(&r).unwrap();
        assert!((u - DVector::from_element(3, 1.0)).amax() < 1e-12);
    }

    #[test]
    fn weight_system_single_agent() {
        let ws = WeightSystem::from_topology(
            &NetworkTopology::empty(1).unwrap(),
            &WeightParams::uniform(1, 1.0, 0.01, 1.0, 0.5),
        )
        .unwrap();
        assert_eq!(ws.c.shape(), (2, 2));
        assert_eq!(ws.t, DMatrix::from_row_slice(1, 2, &[1.0, 0.0]));
        assert!((ws.u[0] - 1.0).abs() < 1e-15);
        assert!((ws.u_t_v() - 1.0 / 1.02).abs() < 1e-12);
    }

    #[test]
    fn weight_system_rejects_non_stochastic_injection() {
        let r = DMatrix::from_row_slice(2, 2, &[0.9, 0.0, 0.5, 0.5]);
        let ct = DMatrix::from_row_slice(2, 2, &[0.5, 0.25, 0.49, 0.74]);
        let a = DVector::from_element(2, 0.01);
        let b = DVector::from_element(2, 0.5);
        assert!(matches!(WeightSystem::new(r, ct, a, b), Err(Error::Weights(_))));
    }

    #[test]
    fn weight_system_rejects_zero_diagonal() {
        let r = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let ct = DMatrix::from_row_slice(2, 2, &[0.5, 0.25, 0.49, 0.74]);
        let a = DVector::from_element(2, 0.01);
        let b = DVector::from_element(2, 0.5);
        assert!(WeightSystem::new(r, ct, a, b).is_err());
    }

    #[test]
    fn edge_list_roundtrip_and_errors() {
        let text = "# demo\n3\n2 1\n3 2 # chain\n\n1 3\n";
        let topo = NetworkTopology::from_edge_list(text).unwrap();
        assert_eq!(topo, NetworkTopology::directed_ring(3).unwrap());
        assert_eq!(NetworkTopology::from_edge_list(&topo.to_edge_list()).unwrap(), topo);

        assert!(NetworkTopology::from_edge_list("").is_err());
        assert!(NetworkTopology::from_edge_list("3\n1 4\n").is_err());
        assert!(NetworkTopology::from_edge_list("3\n0 1\n").is_err());
        assert!(NetworkTopology::from_edge_list("3\n2 2\n").is_err());
        assert!(NetworkTopology::from_edge_list("3\n2\n").is_err());
        assert!(NetworkTopology::from_edge_list("x\n").is_err());
    }
}
