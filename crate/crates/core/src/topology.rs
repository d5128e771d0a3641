//! Gossip matrices: construction, validation and spectral analysis.
//!
//! A gossip matrix `P` is symmetric, entrywise in `[0, 1]` and doubly
//! stochastic. Its mixing rate is summarized by
//!
//! ```text
//! lambda = max(|lambda_2(P)|, |lambda_m(P)|)
//! ```
//!
//! over the spectrum sorted in descending order. Named graph kinds are
//! weighted with the Metropolis-Hastings rule
//! `P_ij = 1 / (1 + max(deg_i, deg_j))` on edges, with the residual mass on
//! the diagonal.
//!
//! Time-varying communication is described by a [`TopologySchedule`], which
//! also supplies the matrix-product chains `P^{T:t} = P^T P^{T-1} ... P^t`
//! and the shifted variants used by the local-model bounds.

use std::collections::BTreeSet;
use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Row sums must match 1 to this tolerance.
pub const ROW_SUM_TOL: f64 = 1e-12;
/// A matrix with `lambda >= 1 - CONNECTIVITY_TOL` is rejected as disconnected.
pub const CONNECTIVITY_TOL: f64 = 1e-12;
/// Convergence tolerance handed to the symmetric eigensolver.
pub const EIGEN_TOL: f64 = 1e-13;
/// Products of gossip matrices are checked to be doubly stochastic to this tolerance.
pub const CHAIN_TOL: f64 = 1e-10;

const EIGEN_MAX_ITER: usize = 10_000;
const RANDOM_REGULAR_ATTEMPTS: usize = 1_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("invalid gossip matrix: {}", .0.join("; "))]
    Validation(Vec<String>),
    #[error("gossip matrix is not connected (lambda = {lambda:.3e} >= 1 - {CONNECTIVITY_TOL:e})")]
    Connectivity { lambda: f64 },
    #[error("index out of range: {0}")]
    Range(String),
    #[error("shifted matrix has negative entries: eta*mu/2 = {shift} exceeds min diagonal {min_diagonal}; stepsize too large for this topology")]
    Shift { shift: f64, min_diagonal: f64 },
    #[error("cannot build {kind} topology: {reason}")]
    Construction { kind: String, reason: String },
    #[error("eigendecomposition did not converge")]
    Eigen,
}

/// Named graph families and explicit matrices accepted by [`build_topology`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TopologyKind {
    Complete,
    Ring,
    Path,
    /// Two-dimensional torus. The grid shape is `rows x (m / rows)`; when
    /// `rows` is omitted the most square factorization of `m` is used.
    Torus2d {
        #[serde(default)]
        rows: Option<usize>,
    },
    RandomRegular { degree: usize, seed: u64 },
    /// Row-major explicit matrix.
    Explicit { matrix: Vec<Vec<f64>> },
}

impl fmt::Display for TopologyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TopologyKind::Complete => write!(f, "complete"),
            TopologyKind::Ring => write!(f, "ring"),
            TopologyKind::Path => write!(f, "path"),
            TopologyKind::Torus2d { rows: Some(r) } => write!(f, "torus2d(rows={r})"),
            TopologyKind::Torus2d { rows: None } => write!(f, "torus2d"),
            TopologyKind::RandomRegular { degree, seed } => {
                write!(f, "random-regular(degree={degree},seed={seed})")
            }
            TopologyKind::Explicit { .. } => write!(f, "explicit"),
        }
    }
}

/// A validated symmetric doubly stochastic mixing matrix with its cached
/// spectral quantity.
#[derive(Debug, Clone, PartialEq)]
pub struct GossipMatrix {
    entries: DMatrix<f64>,
    lambda: f64,
}

impl GossipMatrix {
    /// Validates `entries` and computes `lambda`.
    pub fn new(entries: DMatrix<f64>) -> Result<Self, TopologyError> {
        let violations = validate_entries(&entries);
        if !violations.is_empty() {
            return Err(TopologyError::Validation(violations));
        }
        let lambda = compute_lambda(&entries)?;
        if lambda >= 1.0 - CONNECTIVITY_TOL {
            return Err(TopologyError::Connectivity { lambda });
        }
        Ok(Self { entries, lambda })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, TopologyError> {
        let m = rows.len();
        if m == 0 {
            return Err(TopologyError::Validation(vec!["matrix has no rows".into()]));
        }
        let mut bad = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != m {
                bad.push(format!("row {i} has {} entries, expected {m}", row.len()));
            }
        }
        if !bad.is_empty() {
            return Err(TopologyError::Validation(bad));
        }
        Self::new(DMatrix::from_fn(m, m, |i, j| rows[i][j]))
    }

    pub fn m(&self) -> usize {
        self.entries.nrows()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn min_diagonal(&self) -> f64 {
        self.entries.diagonal().min()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.m())
            .map(|i| (0..self.m()).map(|j| self.entries[(i, j)]).collect())
            .collect()
    }
}

fn validate_entries(p: &DMatrix<f64>) -> Vec<String> {
    let mut violations = Vec::new();
    let m = p.nrows();
    if m == 0 || p.ncols() != m {
        violations.push(format!("matrix must be square and non-empty, got {}x{}", p.nrows(), p.ncols()));
        return violations;
    }
    if p.iter().any(|v| !v.is_finite()) {
        violations.push("entries must be finite".into());
        return violations;
    }
    let asym: Vec<_> = (0..m)
        .flat_map(|i| (i + 1..m).map(move |j| (i, j)))
        .filter(|&(i, j)| p[(i, j)] != p[(j, i)])
        .collect();
    if let Some(&(i, j)) = asym.first() {
        violations.push(format!(
            "not symmetric: {} asymmetric pairs, first at ({i},{j}): {} vs {}",
            asym.len(),
            p[(i, j)],
            p[(j, i)]
        ));
    }
    let out_of_range = p.iter().filter(|v| !(0.0..=1.0).contains(*v)).count();
    if out_of_range > 0 {
        violations.push(format!("{out_of_range} entries outside [0, 1]"));
    }
    for i in 0..m {
        let s: f64 = p.row(i).iter().sum();
        if (s - 1.0).abs() > ROW_SUM_TOL {
            violations.push(format!("row {i} sums to {s}, expected 1"));
        }
    }
    violations
}

/// Eigenvalues of a symmetric matrix, sorted descending.
pub fn symmetric_eigenvalues(p: &DMatrix<f64>) -> Result<Vec<f64>, TopologyError> {
    let eig = SymmetricEigen::try_new(p.clone(), EIGEN_TOL, EIGEN_MAX_ITER).ok_or(TopologyError::Eigen)?;
    let mut values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    values.sort_by(|a, b| b.total_cmp(a));
    Ok(values)
}

fn compute_lambda(p: &DMatrix<f64>) -> Result<f64, TopologyError> {
    if p.nrows() == 1 {
        return Ok(0.0);
    }
    // J/m has spectrum {1, 0, ..., 0}; the eigensolver only gets within an ulp of 0.
    // Diagonals built as 1 - sum(off-diagonal) can differ from 1/m in the last bit.
    let uniform = 1.0 / p.nrows() as f64;
    if p.iter().all(|v| (v - uniform).abs() <= 4.0 * f64::EPSILON) {
        return Ok(0.0);
    }
    let values = symmetric_eigenvalues(p)?;
    let second = values[1].abs();
    let last = values[values.len() - 1].abs();
    Ok(second.max(last))
}

/// `max(|lambda_2|, |lambda_m|)` of a validated gossip matrix; 0 when `m == 1`.
pub fn spectral_gap(p: &GossipMatrix) -> f64 {
    p.lambda
}

/// Builds a validated gossip matrix on `m` nodes.
pub fn build_topology(kind: &TopologyKind, m: usize) -> Result<GossipMatrix, TopologyError> {
    if m == 0 {
        return Err(TopologyError::Construction {
            kind: kind.to_string(),
            reason: "m must be at least 1".into(),
        });
    }
    let adjacency = match kind {
        TopologyKind::Explicit { matrix } => {
            if matrix.len() != m {
                return Err(TopologyError::Validation(vec![format!(
                    "explicit matrix has {} rows, expected m = {m}",
                    matrix.len()
                )]));
            }
            return GossipMatrix::from_rows(matrix);
        }
        TopologyKind::Complete => complete_edges(m),
        TopologyKind::Ring => ring_edges(m),
        TopologyKind::Path => (1..m).map(|i| (i - 1, i)).collect(),
        TopologyKind::Torus2d { rows } => torus_edges(m, *rows)?,
        TopologyKind::RandomRegular { degree, seed } => random_regular_edges(m, *degree, *seed)?,
    };
    GossipMatrix::new(metropolis_hastings(m, &adjacency))
}

fn complete_edges(m: usize) -> BTreeSet<(usize, usize)> {
    (0..m).flat_map(|i| (i + 1..m).map(move |j| (i, j))).collect()
}

fn ring_edges(m: usize) -> BTreeSet<(usize, usize)> {
    let mut edges = BTreeSet::new();
    for i in 0..m {
        let j = (i + 1) % m;
        if i != j {
            edges.insert((i.min(j), i.max(j)));
        }
    }
    edges
}

fn torus_edges(m: usize, rows: Option<usize>) -> Result<BTreeSet<(usize, usize)>, TopologyError> {
    let rows = match rows {
        Some(r) => {
            if r == 0 || !m.is_multiple_of(r) {
                return Err(TopologyError::Construction {
                    kind: "torus2d".into(),
                    reason: format!("rows = {r} does not divide m = {m}"),
                });
            }
            r
        }
        None => (1..=m).take_while(|r| r * r <= m).filter(|r| m.is_multiple_of(*r)).last().unwrap_or(1),
    };
    let cols = m / rows;
    let id = |r: usize, c: usize| r * cols + c;
    let mut edges = BTreeSet::new();
    for r in 0..rows {
        for c in 0..cols {
            let here = id(r, c);
            for there in [id((r + 1) % rows, c), id(r, (c + 1) % cols)] {
                if here != there {
                    edges.insert((here.min(there), here.max(there)));
                }
            }
        }
    }
    Ok(edges)
}

/// Random `degree`-regular simple connected graph via the pairing model,
/// retried until a simple connected pairing is found.
fn random_regular_edges(m: usize, degree: usize, seed: u64) -> Result<BTreeSet<(usize, usize)>, TopologyError> {
    let fail = |reason: String| TopologyError::Construction {
        kind: format!("random-regular(degree={degree})"),
        reason,
    };
    if m == 1 {
        return if degree == 0 { Ok(BTreeSet::new()) } else { Err(fail("degree must be 0 when m = 1".into())) };
    }
    if degree == 0 || degree >= m {
        return Err(fail(format!("degree must lie in [1, {}]", m - 1)));
    }
    if !(m * degree).is_multiple_of(2) {
        return Err(fail("m * degree must be even".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stubs: Vec<usize> = (0..m).flat_map(|i| std::iter::repeat_n(i, degree)).collect();
    'attempt: for _ in 0..RANDOM_REGULAR_ATTEMPTS {
        stubs.shuffle(&mut rng);
        let mut edges = BTreeSet::new();
        for pair in stubs.chunks_exact(2) {
            let (a, b) = (pair[0].min(pair[1]), pair[0].max(pair[1]));
            if a == b || !edges.insert((a, b)) {
                continue 'attempt;
            }
        }
        if is_connected(m, &edges) {
            return Ok(edges);
        }
    }
    Err(fail(format!("no simple connected pairing after {RANDOM_REGULAR_ATTEMPTS} attempts")))
}

fn is_connected(m: usize, edges: &BTreeSet<(usize, usize)>) -> bool {
    let mut adj = vec![Vec::new(); m];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut seen = vec![false; m];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(v) = stack.pop() {
        for &u in &adj[v] {
            if !seen[u] {
                seen[u] = true;
                stack.push(u);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Metropolis-Hastings weights for an undirected simple graph given as `(i, j)` pairs with `i < j`.
pub fn metropolis_hastings(m: usize, edges: &BTreeSet<(usize, usize)>) -> DMatrix<f64> {
    let mut degree = vec![0usize; m];
    for &(a, b) in edges {
        degree[a] += 1;
        degree[b] += 1;
    }
    let mut p = DMatrix::zeros(m, m);
    for &(a, b) in edges {
        let w = 1.0 / (1.0 + degree[a].max(degree[b]) as f64);
        p[(a, b)] = w;
        p[(b, a)] = w;
    }
    for i in 0..m {
        let off: f64 = (0..m).filter(|&j| j != i).map(|j| p[(i, j)]).sum();
        p[(i, i)] = 1.0 - off;
    }
    p
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    Static,
    PeriodicCycle,
    ExplicitList,
}

/// Sequence of gossip matrices indexed by step `t >= 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct TopologySchedule {
    kind: ScheduleKind,
    matrices: Vec<GossipMatrix>,
}

impl TopologySchedule {
    pub fn fixed(p: GossipMatrix) -> Self {
        Self { kind: ScheduleKind::Static, matrices: vec![p] }
    }

    /// Cycles through `matrices`: step `t` uses `matrices[(t - 1) % len]`.
    pub fn periodic(matrices: Vec<GossipMatrix>) -> Result<Self, TopologyError> {
        Self::checked(ScheduleKind::PeriodicCycle, matrices)
    }

    /// Step `t` uses `matrices[t - 1]`; steps past the end are out of range.
    pub fn explicit(matrices: Vec<GossipMatrix>) -> Result<Self, TopologyError> {
        Self::checked(ScheduleKind::ExplicitList, matrices)
    }

    fn checked(kind: ScheduleKind, matrices: Vec<GossipMatrix>) -> Result<Self, TopologyError> {
        let Some(first) = matrices.first() else {
            return Err(TopologyError::Validation(vec!["schedule has no matrices".into()]));
        };
        let m = first.m();
        if let Some(bad) = matrices.iter().position(|p| p.m() != m) {
            return Err(TopologyError::Validation(vec![format!(
                "matrix {bad} has m = {}, schedule has m = {m}",
                matrices[bad].m()
            )]));
        }
        Ok(Self { kind, matrices })
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn m(&self) -> usize {
        self.matrices[0].m()
    }

    pub fn matrices(&self) -> &[GossipMatrix] {
        &self.matrices
    }

    /// Number of steps covered, `None` when the schedule is unbounded.
    pub fn horizon(&self) -> Option<usize> {
        match self.kind {
            ScheduleKind::ExplicitList => Some(self.matrices.len()),
            _ => None,
        }
    }

    pub fn is_static(&self) -> bool {
        self.matrices.len() == 1 && self.kind != ScheduleKind::ExplicitList
    }

    /// Gossip matrix used at step `t` (1-based).
    pub fn at(&self, t: usize) -> Result<&GossipMatrix, TopologyError> {
        if t == 0 {
            return Err(TopologyError::Range("steps are numbered from 1".into()));
        }
        match self.kind {
            ScheduleKind::Static => Ok(&self.matrices[0]),
            ScheduleKind::PeriodicCycle => Ok(&self.matrices[(t - 1) % self.matrices.len()]),
            ScheduleKind::ExplicitList => self
                .matrices
                .get(t - 1)
                .ok_or_else(|| TopologyError::Range(format!("step {t} beyond horizon {}", self.matrices.len()))),
        }
    }

    /// Worst-case `lambda` over the matrices of the schedule.
    pub fn max_lambda(&self) -> f64 {
        self.matrices.iter().map(GossipMatrix::lambda).fold(0.0, f64::max)
    }
}

/// `P^T P^{T-1} ... P^t` for `1 <= t <= T`.
pub fn product_chain(schedule: &TopologySchedule, t: usize, big_t: usize) -> Result<DMatrix<f64>, TopologyError> {
    if t == 0 || t > big_t {
        return Err(TopologyError::Range(format!("need 1 <= t <= T, got t = {t}, T = {big_t}")));
    }
    let mut acc = schedule.at(t)?.entries().clone();
    for s in t + 1..=big_t {
        acc = schedule.at(s)?.entries() * acc;
    }
    check_doubly_stochastic(&acc)?;
    Ok(acc)
}

fn check_doubly_stochastic(p: &DMatrix<f64>) -> Result<(), TopologyError> {
    let mut bad = Vec::new();
    for i in 0..p.nrows() {
        let row: f64 = p.row(i).iter().sum();
        let col: f64 = p.column(i).iter().sum();
        if (row - 1.0).abs() > CHAIN_TOL || (col - 1.0).abs() > CHAIN_TOL {
            bad.push(format!("line {i}: row sum {row}, column sum {col}"));
        }
    }
    if bad.is_empty() {
        Ok(())
    } else {
        Err(TopologyError::Validation(bad))
    }
}

/// `P - (eta * mu / 2) I`, the contraction-shifted matrix of the strongly
/// convex local-model recursion.
pub fn shifted_strongly_convex(p: &GossipMatrix, eta: f64, mu: f64) -> Result<DMatrix<f64>, TopologyError> {
    let shift = eta * mu / 2.0;
    let min_diagonal = p.min_diagonal();
    if shift > min_diagonal {
        return Err(TopologyError::Shift { shift, min_diagonal });
    }
    let mut out = p.entries().clone();
    for i in 0..p.m() {
        out[(i, i)] -= shift;
    }
    Ok(out)
}

/// `P + eta * beta * E_{m/r}`: adds `eta * beta` to every diagonal entry
/// except row `r` (0-based), the expansion matrix of the nonconvex local recursion.
pub fn shifted_nonconvex(p: &GossipMatrix, eta: f64, beta: f64, r: usize) -> Result<DMatrix<f64>, TopologyError> {
    if r >= p.m() {
        return Err(TopologyError::Range(format!("node {r} out of range for m = {}", p.m())));
    }
    let mut out = p.entries().clone();
    for i in (0..p.m()).filter(|&i| i != r) {
        out[(i, i)] += eta * beta;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn complete_three_is_uniform() {
        let p = build_topology(&TopologyKind::Complete, 3).unwrap();
        for v in p.entries().iter() {
            assert_abs_diff_eq!(*v, 1.0 / 3.0, epsilon = 1e-15);
        }
        assert!(p.lambda() < 1e-12);
    }

    #[test]
    fn ring_four_weights() {
        let p = build_topology(&TopologyKind::Ring, 4).unwrap();
        assert_abs_diff_eq!(p.get(0, 0), 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.get(0, 1), 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.get(0, 3), 1.0 / 3.0, epsilon = 1e-15);
        assert_eq!(p.get(0, 2), 0.0);
        assert_abs_diff_eq!(p.lambda(), 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn identity_is_disconnected() {
        let err = build_topology(
            &TopologyKind::Explicit { matrix: vec![vec![1.0, 0.0], vec![0.0, 1.0]] },
            2,
        )
        .unwrap_err();
        assert!(matches!(err, TopologyError::Connectivity { .. }));
    }

    #[test]
    fn explicit_validation_lists_every_violation() {
        let err = GossipMatrix::from_rows(&[vec![0.5, 0.6], vec![0.4, 1.5]]).unwrap_err();
        let TopologyError::Validation(v) = err else { panic!("expected validation error") };
        assert!(v.iter().any(|s| s.contains("symmetric")));
        assert!(v.iter().any(|s| s.contains("outside [0, 1]")));
        assert!(v.iter().any(|s| s.contains("row 1")));
    }

    #[test]
    fn single_node_has_zero_lambda() {
        for kind in [TopologyKind::Complete, TopologyKind::Ring, TopologyKind::Path] {
            let p = build_topology(&kind, 1).unwrap();
            assert_eq!(p.lambda(), 0.0);
            assert_eq!(p.get(0, 0), 1.0);
        }
    }

    #[test]
    fn complete_two_chain_is_idempotent() {
        let s = TopologySchedule::fixed(build_topology(&TopologyKind::Complete, 2).unwrap());
        for (t, big_t) in [(1, 1), (1, 5), (3, 9)] {
            let c = product_chain(&s, t, big_t).unwrap();
            for v in c.iter() {
                assert_abs_diff_eq!(*v, 0.5, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn single_factor_chain() {
        let ring = build_topology(&TopologyKind::Ring, 4).unwrap();
        let complete = build_topology(&TopologyKind::Complete, 4).unwrap();
        let s = TopologySchedule::periodic(vec![ring.clone(), complete]).unwrap();
        assert_eq!(&product_chain(&s, 1, 1).unwrap(), ring.entries());
    }

    #[test]
    fn chain_range_errors() {
        let s = TopologySchedule::explicit(vec![build_topology(&TopologyKind::Ring, 4).unwrap()]).unwrap();
        assert!(matches!(product_chain(&s, 2, 1), Err(TopologyError::Range(_))));
        assert!(matches!(product_chain(&s, 1, 2), Err(TopologyError::Range(_))));
        assert!(matches!(product_chain(&s, 0, 1), Err(TopologyError::Range(_))));
    }

    #[test]
    fn strongly_convex_shift() {
        let p = build_topology(&TopologyKind::Complete, 2).unwrap();
        let s = shifted_strongly_convex(&p, 0.1, 1.0).unwrap();
        assert_abs_diff_eq!(s[(0, 0)], 0.45, epsilon = 1e-15);
        assert_abs_diff_eq!(s[(0, 1)], 0.5, epsilon = 1e-15);
        assert_eq!(&shifted_strongly_convex(&p, 0.1, 0.0).unwrap(), p.entries());
        let ring = build_topology(&TopologyKind::Ring, 4).unwrap();
        assert!(matches!(
            shifted_strongly_convex(&ring, 2.5, 1.0),
            Err(TopologyError::Shift { .. })
        ));
    }

    #[test]
    fn nonconvex_shift() {
        let p = build_topology(&TopologyKind::Complete, 2).unwrap();
        let s = shifted_nonconvex(&p, 0.1, 1.0, 0).unwrap();
        assert_abs_diff_eq!(s[(0, 0)], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(s[(1, 1)], 0.6, epsilon = 1e-15);
        assert_eq!(&shifted_nonconvex(&p, 0.0, 1.0, 0).unwrap(), p.entries());
        let one = build_topology(&TopologyKind::Complete, 1).unwrap();
        assert_eq!(&shifted_nonconvex(&one, 0.1, 1.0, 0).unwrap(), one.entries());
        assert!(matches!(shifted_nonconvex(&p, 0.1, 1.0, 2), Err(TopologyError::Range(_))));
    }

    #[test]
    fn torus_picks_square_grid() {
        let p = build_topology(&TopologyKind::Torus2d { rows: None }, 16).unwrap();
        for i in 0..16 {
            let degree = (0..16).filter(|&j| j != i && p.get(i, j) > 0.0).count();
            assert_eq!(degree, 4);
        }
    }

    #[test]
    fn random_regular_rejects_bad_degree() {
        assert!(build_topology(&TopologyKind::RandomRegular { degree: 3, seed: 1 }, 5).is_err());
        assert!(build_topology(&TopologyKind::RandomRegular { degree: 4, seed: 1 }, 4).is_err());
    }
}
