//! Executable verifiers for the identifiability conditions: the graphical
//! criteria on action/temporal connectivity, numeric sufficient-variability
//! rank checks, the minimal-statistic characterization, linear/permutation
//! equivalence detection, and randomized no-counterexample verifiers for the
//! sparsity lemmas.
//!
//! Everything here works in mean-parameter space: for the Gaussian fixed
//! variance family used throughout (`k = 1`, `T(z) = z`), natural parameters
//! are a positive multiple of the transition mean, and every check below is
//! invariant to positive rescaling (rank thresholds are relative).

use crate::bipartite::BipartiteGraph;
use crate::error::{CoreError, Result};
use crate::linalg::{least_squares, numeric_rank, singular_values};
use crate::rng::Rng;
use crate::synth::GroundTruthProcess;
use crate::tensor::Tensor;
use serde::Serialize;
use std::path::Path;

/// Relative singular-value cutoff for all numeric ranks.
pub const RANK_REL_TOL: f64 = 1e-6;
/// Probe batches drawn before a rank target is declared unreachable.
pub const RANK_RETRIES: usize = 5;
/// Entry threshold that defines a sparsity pattern numerically.
pub const PATTERN_TOL: f64 = 1e-9;
/// Dominance threshold in the permutation verdict of `detect_equivalence`.
pub const PERMUTATION_DOMINANCE: f64 = 0.9;

// ── Graphical criteria ───────────────────────────────────────────────

#[derive(Clone, Debug, Serialize)]
pub struct LatentWitness {
    pub latent: usize,
    pub satisfied: bool,
    /// Action columns (action criterion) whose child sets are intersected.
    pub columns: Vec<usize>,
    /// Latent rows (temporal criterion) whose parent sets are intersected.
    pub rows: Vec<usize>,
    /// The resulting minimal intersection.
    pub intersection: Vec<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CriterionReport {
    pub satisfied: bool,
    pub witnesses: Vec<LatentWitness>,
}

fn intersect_all(universe: usize, sets: &[Vec<usize>]) -> Vec<usize> {
    let mut in_all = vec![true; universe];
    for s in sets {
        let mut marked = vec![false; universe];
        for &v in s {
            marked[v] = true;
        }
        for v in 0..universe {
            in_all[v] &= marked[v];
        }
    }
    (0..universe).filter(|&v| in_all[v]).collect()
}

/// Action criterion: each latent `i` must be isolable as an intersection of
/// child sets of actions. Intersecting over all actions that contain `i`
/// yields the minimal achievable set, so testing it against `{i}` is exact.
pub fn check_action_criterion(g: &BipartiteGraph) -> CriterionReport {
    let d_z = g.rows;
    let mut witnesses = Vec::with_capacity(d_z);
    for i in 0..d_z {
        let columns = g.parents(i);
        let (satisfied, intersection) = if columns.is_empty() {
            (false, (0..d_z).collect::<Vec<_>>())
        } else {
            let sets: Vec<Vec<usize>> = columns.iter().map(|&l| g.children(l)).collect();
            let inter = intersect_all(d_z, &sets);
            (inter == vec![i], inter)
        };
        witnesses.push(LatentWitness { latent: i, satisfied, columns, rows: vec![], intersection });
    }
    CriterionReport { satisfied: witnesses.iter().all(|w| w.satisfied), witnesses }
}

/// Temporal criterion: each latent `p` must be isolable by intersecting
/// parent sets of its children with child sets of its parents.
pub fn check_temporal_criterion(g: &BipartiteGraph) -> CriterionReport {
    let d_z = g.rows;
    let mut witnesses = Vec::with_capacity(d_z);
    for p in 0..d_z {
        let rows = g.children(p);
        let columns = g.parents(p);
        let (satisfied, intersection) = if rows.is_empty() && columns.is_empty() {
            (d_z == 1, (0..d_z).collect::<Vec<_>>())
        } else {
            let mut sets: Vec<Vec<usize>> = rows.iter().map(|&i| g.parents(i)).collect();
            sets.extend(columns.iter().map(|&j| g.children(j)));
            let inter = intersect_all(d_z, &sets);
            (inter == vec![p], inter)
        };
        witnesses.push(LatentWitness { latent: p, satisfied, columns, rows, intersection });
    }
    CriterionReport { satisfied: witnesses.iter().all(|w| w.satisfied), witnesses }
}

// ── Sufficient-variability rank checks ───────────────────────────────

#[derive(Clone, Debug, Serialize)]
pub struct RankEntry {
    pub target: usize,
    pub rank: usize,
    pub required: usize,
    pub satisfied: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct RankReport {
    pub satisfied: bool,
    pub entries: Vec<RankEntry>,
}

/// Transition-mean interface used by the rank checks.
pub trait TransitionMean {
    fn d_z(&self) -> usize;
    fn d_a(&self) -> usize;
    fn mu(&self, z: &[f64], a: &[f64]) -> Result<Vec<f64>>;
}

impl TransitionMean for GroundTruthProcess {
    fn d_z(&self) -> usize {
        self.d_z
    }
    fn d_a(&self) -> usize {
        self.d_a
    }
    fn mu(&self, z: &[f64], a: &[f64]) -> Result<Vec<f64>> {
        self.transition_mean(z, a)
    }
}

fn sample_probe(process: &dyn TransitionMean, rng: &mut Rng) -> (Vec<f64>, Vec<f64>) {
    let z: Vec<f64> = (0..process.d_z()).map(|_| 1.5 * rng.normal()).collect();
    let a: Vec<f64> = (0..process.d_a()).map(|_| rng.uniform_in(-2.0, 2.0)).collect();
    (z, a)
}

/// Partial-difference rank for one action coordinate: stack
/// `mu(z, a + eps e_l) - mu(z, a)` restricted to the children of `l` and
/// take the numeric rank. The rank condition is existential, so the best
/// batch over the retries counts.
pub fn check_action_variability(
    process: &dyn TransitionMean,
    graph_a: &BipartiteGraph,
    l: usize,
    n_probes: usize,
    rng: &mut Rng,
) -> Result<RankEntry> {
    let children = graph_a.children(l);
    let required = children.len();
    let mut best = 0usize;
    for _ in 0..RANK_RETRIES {
        let mut rows = Tensor::zeros(&[n_probes.max(required.max(1)), required.max(1)]);
        for p in 0..rows.shape()[0] {
            let (z, mut a) = sample_probe(process, rng);
            let eps = rng.uniform_in(0.25, 1.75) * if rng.uniform() < 0.5 { -1.0 } else { 1.0 };
            let base = process.mu(&z, &a)?;
            a[l] += eps;
            let shifted = process.mu(&z, &a)?;
            for (c, &coord) in children.iter().enumerate() {
                rows.set(p, c, shifted[coord] - base[coord]);
            }
        }
        if required == 0 {
            break;
        }
        best = best.max(numeric_rank(&rows, RANK_REL_TOL)?);
        if best == required {
            break;
        }
    }
    Ok(RankEntry { target: l, rank: best, required, satisfied: best == required })
}

pub fn check_action_variability_all(
    process: &dyn TransitionMean,
    graph_a: &BipartiteGraph,
    n_probes: usize,
    rng: &mut Rng,
) -> Result<RankReport> {
    let mut entries = Vec::new();
    for l in 0..graph_a.cols {
        entries.push(check_action_variability(process, graph_a, l, n_probes, rng)?);
    }
    Ok(RankReport { satisfied: entries.iter().all(|e| e.satisfied), entries })
}

fn jacobian_z(process: &dyn TransitionMean, z: &[f64], a: &[f64]) -> Result<Tensor> {
    let d_z = process.d_z();
    let h = 1e-5;
    let mut jac = Tensor::zeros(&[d_z, d_z]);
    let mut zp = z.to_vec();
    for j in 0..d_z {
        zp[j] = z[j] + h;
        let plus = process.mu(&zp, a)?;
        zp[j] = z[j] - h;
        let minus = process.mu(&zp, a)?;
        zp[j] = z[j];
        for i in 0..d_z {
            jac.set(i, j, (plus[i] - minus[i]) / (2.0 * h));
        }
    }
    Ok(jac)
}

/// Jacobian-span rank over the edge set: vectorize `D_z mu` at probe points
/// restricted to the edges of `graph_z` and compare the numeric rank to
/// `|E|`. For the Gaussian `k = 1` family `D T` is the identity, so the
/// Jacobians are used as they are.
pub fn check_temporal_variability(
    process: &dyn TransitionMean,
    graph_z: &BipartiteGraph,
    n_probes: usize,
    rng: &mut Rng,
) -> Result<RankReport> {
    let edges = graph_z.edges();
    let required = edges.len();
    let mut best = 0usize;
    for _ in 0..RANK_RETRIES {
        let rows_n = n_probes.max(required.max(1));
        let mut rows = Tensor::zeros(&[rows_n, required.max(1)]);
        for p in 0..rows_n {
            let (z, a) = sample_probe(process, rng);
            let jac = jacobian_z(process, &z, &a)?;
            for (c, &(i, j)) in edges.iter().enumerate() {
                rows.set(p, c, jac.at(i, j));
            }
        }
        if required == 0 {
            break;
        }
        best = best.max(numeric_rank(&rows, RANK_REL_TOL)?);
        if best == required {
            break;
        }
    }
    let entry = RankEntry { target: 0, rank: best, required, satisfied: best == required };
    Ok(RankReport { satisfied: entry.satisfied, entries: vec![entry] })
}

// ── Minimal sufficient statistic ─────────────────────────────────────

#[derive(Clone, Copy, Debug)]
pub enum Support {
    RealLine,
    Interval(f64, f64),
}

impl Support {
    fn sample(&self, rng: &mut Rng) -> f64 {
        match self {
            Support::RealLine => rng.normal(),
            Support::Interval(lo, hi) => rng.uniform_in(*lo, *hi),
        }
    }
}

/// One scalar latent's exponential-family description: the sufficient
/// statistic `T_i`, its dimension `k`, the support, and a label for the
/// base measure (not used numerically).
pub struct ExponentialFamilySpec {
    pub k: usize,
    pub statistic: Box<dyn Fn(f64) -> Vec<f64>>,
    pub support: Support,
    pub base_measure: String,
}

impl ExponentialFamilySpec {
    /// The family used by every dataset here: `k = 1`, `T(z) = z`.
    pub fn gaussian_fixed_variance() -> Self {
        ExponentialFamilySpec {
            k: 1,
            statistic: Box::new(|z| vec![z]),
            support: Support::RealLine,
            base_measure: "gaussian".into(),
        }
    }
}

/// Minimality check: `T` is minimal iff some probe batch `z^(0..k)` makes
/// the differences `T(z^(i)) - T(z^(0))` linearly independent.
pub fn check_minimal_statistic(
    spec: &ExponentialFamilySpec,
    n_batches: usize,
    rng: &mut Rng,
) -> Result<bool> {
    let k = spec.k;
    for _ in 0..n_batches.max(1) {
        let z0 = spec.support.sample(rng);
        let t0 = (spec.statistic)(z0);
        if t0.len() != k {
            return Err(CoreError::Contract(format!(
                "statistic returned {} values, expected k={k}",
                t0.len()
            )));
        }
        let mut diffs = Tensor::zeros(&[k, k]);
        for r in 0..k {
            let z = spec.support.sample(rng);
            let t = (spec.statistic)(z);
            for c in 0..k {
                diffs.set(r, c, t[c] - t0[c]);
            }
        }
        if numeric_rank(&diffs, RANK_REL_TOL)? == k {
            return Ok(true);
        }
    }
    Ok(false)
}

// ── Equivalence detection ────────────────────────────────────────────

#[derive(Clone, Debug, Serialize)]
pub struct LinearEquivalence {
    /// Fitted matrix in `truth ~ L . learned + b`.
    pub l: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    /// Natural-parameter offset of the second equivalence condition; not
    /// fitted from representations alone.
    pub c: Option<Vec<f64>>,
    pub residual_rmse: f64,
    pub condition_number: f64,
    pub invertible: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct EquivalenceVerdict {
    pub equivalence: LinearEquivalence,
    /// True iff the column-normalized `|L|` is one-dominant per row and column.
    pub permutation: bool,
}

/// Fit `truth ~ L . learned + b` by least squares and decide whether `L` is
/// a permutation-scaling matrix up to the dominance threshold.
pub fn detect_equivalence(learned: &Tensor, truth: &Tensor) -> Result<EquivalenceVerdict> {
    let (n, d) = (learned.shape()[0], learned.shape()[1]);
    if truth.shape() != [n, d] {
        return Err(CoreError::shape(
            "detect_equivalence",
            format!("{:?} vs {:?}", learned.shape(), truth.shape()),
        ));
    }
    if n < 4 * d {
        return Err(CoreError::Contract(format!(
            "detect_equivalence wants n >> d_z, got n={n}, d={d}"
        )));
    }
    let mut design = Tensor::zeros(&[n, d + 1]);
    for i in 0..n {
        for j in 0..d {
            design.set(i, j, learned.at(i, j));
        }
        design.set(i, d, 1.0);
    }
    let (coef, _) = least_squares(&design, truth, 1e-8)?;
    let mut l = vec![vec![0.0; d]; d];
    let mut b = vec![0.0; d];
    for q in 0..d {
        for j in 0..d {
            l[q][j] = coef.at(j, q);
        }
        b[q] = coef.at(d, q);
    }
    let pred = design.matmul(&coef)?;
    let mut sq = 0.0;
    for i in 0..n {
        for q in 0..d {
            let e = truth.at(i, q) - pred.at(i, q);
            sq += e * e;
        }
    }
    let rmse = (sq / (n * d) as f64).sqrt();
    let l_tensor = Tensor::matrix(d, d, l.iter().flatten().copied().collect())?;
    let sv = singular_values(&l_tensor)?;
    let smax = sv.first().copied().unwrap_or(0.0);
    let smin = sv.last().copied().unwrap_or(0.0);
    let invertible = smax > 0.0 && smin / smax > RANK_REL_TOL;
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    let permutation = invertible && column_dominant(&l, PERMUTATION_DOMINANCE);
    Ok(EquivalenceVerdict {
        equivalence: LinearEquivalence {
            l,
            b,
            c: None,
            residual_rmse: rmse,
            condition_number: cond,
            invertible,
        },
        permutation,
    })
}

/// Column-normalized |L| has exactly one entry above `threshold` per row and
/// per column.
fn column_dominant(l: &[Vec<f64>], threshold: f64) -> bool {
    let d = l.len();
    let mut norm = vec![vec![0.0; d]; d];
    for j in 0..d {
        let col_norm: f64 = (0..d).map(|i| l[i][j] * l[i][j]).sum::<f64>().sqrt();
        if col_norm == 0.0 {
            return false;
        }
        for (i, row) in norm.iter_mut().enumerate() {
            row[j] = l[i][j].abs() / col_norm;
        }
    }
    let mut row_hits = vec![0usize; d];
    let mut col_hits = vec![0usize; d];
    for (i, row) in norm.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if v > threshold {
                row_hits[i] += 1;
                col_hits[j] += 1;
            }
        }
    }
    row_hits.iter().all(|&h| h == 1) && col_hits.iter().all(|&h| h == 1)
}

/// Exactly one entry above `tol` in magnitude per row and per column.
pub fn is_permutation_scaling(l: &Tensor, tol: f64) -> bool {
    let d = l.shape()[0];
    if l.shape() != [d, d] {
        return false;
    }
    let mut row_hits = vec![0usize; d];
    let mut col_hits = vec![0usize; d];
    for i in 0..d {
        for j in 0..d {
            if l.at(i, j).abs() > tol {
                row_hits[i] += 1;
                col_hits[j] += 1;
            }
        }
    }
    row_hits.iter().all(|&h| h == 1) && col_hits.iter().all(|&h| h == 1)
}

// ── Sparsity-lemma verifiers ─────────────────────────────────────────

#[derive(Clone, Debug, Serialize)]
pub struct LemmaReport {
    pub trials: usize,
    /// Candidate transforms whose image pattern was no denser than `S`.
    pub sparsity_preserving_seen: usize,
    pub counterexamples: usize,
    pub first_counterexample: Option<Vec<Vec<f64>>>,
}

impl LemmaReport {
    pub fn passed(&self) -> bool {
        self.counterexamples == 0
    }
}

fn random_pattern_matrix(pattern: &BipartiteGraph, rng: &mut Rng) -> Tensor {
    Tensor::from_fn(&[pattern.rows, pattern.cols], |idx| {
        let (i, j) = (idx / pattern.cols, idx % pattern.cols);
        if pattern.adj[i][j] == 1 {
            // bounded away from zero so supports are unambiguous
            let v = rng.uniform_in(0.5, 1.5);
            if rng.uniform() < 0.5 {
                -v
            } else {
                v
            }
        } else {
            0.0
        }
    })
}

fn random_perm_scaling(m: usize, rng: &mut Rng) -> Tensor {
    let mut perm: Vec<usize> = (0..m).collect();
    rng.shuffle(&mut perm);
    let mut l = Tensor::zeros(&[m, m]);
    for (i, &p) in perm.iter().enumerate() {
        let s = rng.uniform_in(0.5, 2.0) * if rng.uniform() < 0.5 { -1.0 } else { 1.0 };
        l.set(i, p, s);
    }
    l
}

fn candidate_transforms(m: usize, rng: &mut Rng) -> Vec<Tensor> {
    let mut out = Vec::new();
    // permutation-scaling candidates keep |S~| = |S| and must pass
    out.push(random_perm_scaling(m, rng));
    // dense invertible candidates
    out.push(Tensor::from_fn(&[m, m], |_| rng.normal()));
    // near-sparse candidates: identity plus one off-diagonal entry
    if m >= 2 {
        let mut l = Tensor::zeros(&[m, m]);
        for i in 0..m {
            l.set(i, i, 1.0);
        }
        let i = rng.below(m);
        let mut j = rng.below(m);
        while j == i {
            j = rng.below(m);
        }
        l.set(i, j, rng.uniform_in(0.5, 1.5));
        out.push(l);
    }
    out
}

fn pattern_size(union: &[Vec<bool>]) -> usize {
    union.iter().flatten().filter(|&&b| b).count()
}

/// Randomized no-counterexample search for the action-sparsity lemma: for
/// invertible `L`, if the pattern of `L . Lambda` over samples spanning the
/// per-column subspaces of `S` is no denser than `S`, then `L` must be a
/// permutation-scaling matrix.
pub fn verify_lemma_action(
    pattern: &BipartiteGraph,
    trials: usize,
    rng: &mut Rng,
) -> Result<LemmaReport> {
    let report = check_action_criterion(pattern);
    if !report.satisfied {
        return Err(CoreError::Contract(
            "lemma precondition: pattern violates the action graphical criterion".into(),
        ));
    }
    let (m, n) = (pattern.rows, pattern.cols);
    let s_size = pattern.edge_count();
    let mut out = LemmaReport {
        trials: 0,
        sparsity_preserving_seen: 0,
        counterexamples: 0,
        first_counterexample: None,
    };
    for _ in 0..trials {
        out.trials += 1;
        // samples spanning each column subspace R^m_{S_{.,j}}
        let samples: Vec<Tensor> = (0..m.max(2)).map(|_| random_pattern_matrix(pattern, rng)).collect();
        for l in candidate_transforms(m, rng) {
            if singular_values(&l)?.last().copied().unwrap_or(0.0) < 1e-8 {
                continue;
            }
            let mut union = vec![vec![false; n]; m];
            for s in &samples {
                let prod = l.matmul(s)?;
                for i in 0..m {
                    for j in 0..n {
                        if prod.at(i, j).abs() > PATTERN_TOL {
                            union[i][j] = true;
                        }
                    }
                }
            }
            if pattern_size(&union) <= s_size {
                out.sparsity_preserving_seen += 1;
                if !is_permutation_scaling(&l, PATTERN_TOL) {
                    out.counterexamples += 1;
                    if out.first_counterexample.is_none() {
                        out.first_counterexample = Some(tensor_rows(&l));
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Same scheme for the temporal-sparsity lemma with the two-sided transform
/// `L^T Lambda L` and samples spanning `R^{m x m}_S`.
pub fn verify_lemma_temporal(
    pattern: &BipartiteGraph,
    trials: usize,
    rng: &mut Rng,
) -> Result<LemmaReport> {
    let report = check_temporal_criterion(pattern);
    if !report.satisfied {
        return Err(CoreError::Contract(
            "lemma precondition: pattern violates the temporal graphical criterion".into(),
        ));
    }
    let m = pattern.rows;
    let s_size = pattern.edge_count();
    let mut out = LemmaReport {
        trials: 0,
        sparsity_preserving_seen: 0,
        counterexamples: 0,
        first_counterexample: None,
    };
    for _ in 0..trials {
        out.trials += 1;
        let samples: Vec<Tensor> =
            (0..s_size + 2).map(|_| random_pattern_matrix(pattern, rng)).collect();
        for l in candidate_transforms(m, rng) {
            if singular_values(&l)?.last().copied().unwrap_or(0.0) < 1e-8 {
                continue;
            }
            let mut union = vec![vec![false; m]; m];
            for s in &samples {
                let lt_s = crate::tensor::gemm(&l, true, s, false)?;
                let prod = lt_s.matmul(&l)?;
                for i in 0..m {
                    for j in 0..m {
                        if prod.at(i, j).abs() > PATTERN_TOL {
                            union[i][j] = true;
                        }
                    }
                }
            }
            if pattern_size(&union) <= s_size {
                out.sparsity_preserving_seen += 1;
                if !is_permutation_scaling(&l, PATTERN_TOL) {
                    out.counterexamples += 1;
                    if out.first_counterexample.is_none() {
                        out.first_counterexample = Some(tensor_rows(&l));
                    }
                }
            }
        }
    }
    Ok(out)
}

fn tensor_rows(t: &Tensor) -> Vec<Vec<f64>> {
    (0..t.shape()[0]).map(|i| (0..t.shape()[1]).map(|j| t.at(i, j)).collect()).collect()
}

/// Load a graph from the CLI JSON format
/// `{"rows": .., "cols": .., "adj": [[0,1,..], ..]}`.
pub fn load_graph(path: &Path) -> Result<BipartiteGraph> {
    let raw = std::fs::read_to_string(path)
        .map_err(|e| CoreError::io(path.display().to_string(), e))?;
    let g: BipartiteGraph = serde_json::from_str(&raw)
        .map_err(|e| CoreError::format(path.display().to_string(), e.to_string()))?;
    let validated = BipartiteGraph::new(g.adj.clone())
        .map_err(|e| CoreError::format(path.display().to_string(), e.to_string()))?;
    if validated.rows != g.rows || validated.cols != g.cols {
        return Err(CoreError::format(
            path.display().to_string(),
            format!(
                "declared {}x{} but adjacency is {}x{}",
                g.rows, g.cols, validated.rows, validated.cols
            ),
        ));
    }
    Ok(validated)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{adjacency, Variant};

    #[test]
    fn action_criterion_figure2_left() {
        let (ma, _) = adjacency(Variant::NonTrivialAction, 3, 3).unwrap();
        let report = check_action_criterion(&ma);
        assert!(report.satisfied);
        // Ch_0 ∩ Ch_1 = {0}, Ch_0 ∩ Ch_2 = {1}, Ch_1 ∩ Ch_2 = {2}
        assert_eq!(report.witnesses[0].intersection, vec![0]);
        assert_eq!(report.witnesses[0].columns, vec![0, 2]);
        assert_eq!(report.witnesses[1].intersection, vec![1]);
        assert_eq!(report.witnesses[2].intersection, vec![2]);
    }

    #[test]
    fn action_criterion_diagonal_trivial() {
        let g = BipartiteGraph::identity(4);
        let report = check_action_criterion(&g);
        assert!(report.satisfied);
        for w in &report.witnesses {
            assert_eq!(w.intersection, vec![w.latent]);
            assert_eq!(w.columns, vec![w.latent]);
        }
    }

    #[test]
    fn action_criterion_duplicated_parents_fails() {
        // latents 0 and 1 share the exact same parent set
        let g = BipartiteGraph::new(vec![vec![1, 1, 0], vec![1, 1, 0], vec![0, 0, 1]]).unwrap();
        let report = check_action_criterion(&g);
        assert!(!report.satisfied);
        assert!(!report.witnesses[0].satisfied);
        assert!(!report.witnesses[1].satisfied);
        assert!(report.witnesses[2].satisfied);
        // exhaustive confirmation on this small case: no subset of columns
        // isolates latent 0
        for subset in 1u8..8 {
            let cols: Vec<usize> = (0..3).filter(|&c| subset & (1 << c) != 0).collect();
            let sets: Vec<Vec<usize>> = cols.iter().map(|&c| g.children(c)).collect();
            let inter = intersect_all(3, &sets);
            assert_ne!(inter, vec![0], "subset {cols:?} isolates latent 0");
        }
    }

    #[test]
    fn action_criterion_empty_row_fails() {
        let g = BipartiteGraph::new(vec![vec![0, 0], vec![1, 1]]).unwrap();
        let report = check_action_criterion(&g);
        assert!(!report.satisfied);
        assert!(!report.witnesses[0].satisfied);
    }

    #[test]
    fn temporal_criterion_ntt_appendix_matrix() {
        let (_, mz) = adjacency(Variant::NonTrivialTemporal, 3, 3).unwrap();
        let report = check_temporal_criterion(&mz);
        assert!(report.satisfied, "{report:?}");
        assert_eq!(report.witnesses[0].intersection, vec![0]);
        assert_eq!(report.witnesses[1].intersection, vec![1]);
        assert_eq!(report.witnesses[2].intersection, vec![2]);
    }

    #[test]
    fn temporal_criterion_identity_and_complete() {
        assert!(check_temporal_criterion(&BipartiteGraph::identity(5)).satisfied);
        let complete = BipartiteGraph::complete(3, 3);
        let report = check_temporal_criterion(&complete);
        assert!(!report.satisfied);
        for w in &report.witnesses {
            assert!(!w.satisfied);
            assert_eq!(w.intersection, vec![0, 1, 2]);
        }
    }

    #[test]
    fn exhaustive_subset_check_matches_shortcut_small_dims() {
        // the minimal-intersection shortcut equals exhaustive subset search
        let mut rng = Rng::new(40);
        for _ in 0..60 {
            let d = 2 + rng.below(3); // 2..4
            let g = BipartiteGraph::new(
                (0..d)
                    .map(|_| (0..d).map(|_| (rng.uniform() < 0.5) as u8).collect())
                    .collect(),
            )
            .unwrap();
            let shortcut = check_action_criterion(&g);
            for i in 0..d {
                let mut found = false;
                for subset in 1u32..(1 << d) {
                    let cols: Vec<usize> = (0..d).filter(|&c| subset & (1 << c) != 0).collect();
                    let sets: Vec<Vec<usize>> = cols.iter().map(|&c| g.children(c)).collect();
                    if intersect_all(d, &sets) == vec![i] {
                        found = true;
                        break;
                    }
                }
                assert_eq!(shortcut.witnesses[i].satisfied, found, "graph {:?} latent {i}", g.adj);
            }
        }
    }

    #[test]
    fn minimal_statistic_examples() {
        let mut rng = Rng::new(50);
        let identity = ExponentialFamilySpec::gaussian_fixed_variance();
        assert!(check_minimal_statistic(&identity, RANK_RETRIES, &mut rng).unwrap());

        let constant = ExponentialFamilySpec {
            k: 1,
            statistic: Box::new(|_| vec![3.0]),
            support: Support::RealLine,
            base_measure: "degenerate".into(),
        };
        assert!(!check_minimal_statistic(&constant, RANK_RETRIES, &mut rng).unwrap());

        let quad = ExponentialFamilySpec {
            k: 2,
            statistic: Box::new(|z| vec![z, z * z]),
            support: Support::RealLine,
            base_measure: "gaussian".into(),
        };
        assert!(check_minimal_statistic(&quad, RANK_RETRIES, &mut rng).unwrap());
    }

    #[test]
    fn permutation_scaling_predicate() {
        let id = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert!(is_permutation_scaling(&id, 1e-9));
        let anti = Tensor::matrix(2, 2, vec![0.0, 2.0, -3.0, 0.0]).unwrap();
        assert!(is_permutation_scaling(&anti, 1e-9));
        let tri = Tensor::matrix(2, 2, vec![1.0, 1.0, 0.0, 1.0]).unwrap();
        assert!(!is_permutation_scaling(&tri, 1e-9));
    }

    #[test]
    fn detect_equivalence_identity_and_permutation() {
        let mut rng = Rng::new(60);
        let truth = Tensor::from_fn(&[200, 3], |_| rng.normal());
        let v = detect_equivalence(&truth, &truth).unwrap();
        assert!(v.permutation);
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((v.equivalence.l[i][j] - expect).abs() < 1e-8);
            }
        }
        assert!(v.equivalence.residual_rmse < 1e-10);

        // scaled permutation of the truth
        let learned = Tensor::from_fn(&[200, 3], |idx| {
            let (i, j) = (idx / 3, idx % 3);
            match j {
                0 => 2.0 * truth.at(i, 1),
                1 => -0.5 * truth.at(i, 2),
                _ => 3.0 * truth.at(i, 0),
            }
        });
        let v2 = detect_equivalence(&learned, &truth).unwrap();
        assert!(v2.permutation);
        assert!(v2.equivalence.residual_rmse < 1e-10);
    }

    #[test]
    fn detect_equivalence_rotation_is_linear_not_permutation() {
        let mut rng = Rng::new(61);
        let truth = Tensor::from_fn(&[300, 2], |_| rng.normal());
        let c = std::f64::consts::FRAC_PI_4.cos();
        let s = std::f64::consts::FRAC_PI_4.sin();
        let learned = Tensor::from_fn(&[300, 2], |idx| {
            let (i, j) = (idx / 2, idx % 2);
            if j == 0 {
                c * truth.at(i, 0) - s * truth.at(i, 1)
            } else {
                s * truth.at(i, 0) + c * truth.at(i, 1)
            }
        });
        let v = detect_equivalence(&learned, &truth).unwrap();
        assert!(v.equivalence.residual_rmse < 1e-10);
        assert!(v.equivalence.invertible);
        assert!(!v.permutation);
    }

    #[test]
    fn lemma_action_small_run_no_counterexamples() {
        let (ma, _) = adjacency(Variant::NonTrivialAction, 3, 3).unwrap();
        let mut rng = Rng::new(70);
        let report = verify_lemma_action(&ma, 50, &mut rng).unwrap();
        assert!(report.passed(), "{report:?}");
        assert!(report.sparsity_preserving_seen >= 50, "perm candidates must register");
    }

    #[test]
    fn lemma_temporal_small_run_no_counterexamples() {
        let (_, mz) = adjacency(Variant::NonTrivialTemporal, 3, 3).unwrap();
        let mut rng = Rng::new(71);
        let report = verify_lemma_temporal(&mz, 50, &mut rng).unwrap();
        assert!(report.passed(), "{report:?}");
        assert!(report.sparsity_preserving_seen >= 50);
    }

    #[test]
    fn lemma_rejects_invalid_pattern() {
        let complete = BipartiteGraph::complete(3, 3);
        let mut rng = Rng::new(72);
        assert!(verify_lemma_action(&complete, 5, &mut rng).is_err());
        assert!(verify_lemma_temporal(&complete, 5, &mut rng).is_err());
    }
}
