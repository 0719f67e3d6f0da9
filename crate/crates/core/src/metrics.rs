//! Disentanglement and graph-recovery metrics.
//!
//! MCC matches learned latent coordinates to ground-truth ones by maximizing
//! the mean absolute Pearson correlation over one-to-one assignments; the
//! linear score is the average R^2 of regressing the true latents on the
//! learned ones; SHD counts adjacency mismatches after aligning latent
//! indices by the MCC permutation.

use crate::bipartite::BipartiteGraph;
use crate::error::{CoreError, Result};
use crate::linalg::least_squares;
use crate::model::{encode, MaskSample, ModelParams};
use crate::rng::Rng;
use crate::synth::{DatasetMeta, SequenceBatch};
use crate::tensor::Tensor;
use crate::train::{elbo, split_indices, train_supervised, TrainConfig};
use serde::Serialize;

pub const REPORT_FORMAT_VERSION: u32 = 1;

fn column(t: &Tensor, j: usize) -> Vec<f64> {
    (0..t.shape()[0]).map(|i| t.at(i, j)).collect()
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    cov / (va.sqrt() * vb.sqrt())
}

/// Minimum-cost perfect assignment on a square cost matrix; returns the
/// column assigned to each row. Potential-based augmenting paths, O(n^3).
fn hungarian_min(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        if p[j] != 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Mean correlation coefficient.
///
/// Returns `(score, perm)` where `perm[i]` is the truth column matched to
/// learned column `i` and the score is the mean of matched `|rho|`.
pub fn mcc(learned: &Tensor, truth: &Tensor) -> Result<(f64, Vec<usize>)> {
    if learned.shape() != truth.shape() || learned.rank() != 2 {
        return Err(CoreError::shape(
            "mcc",
            format!("{:?} vs {:?}", learned.shape(), truth.shape()),
        ));
    }
    let (n, d) = (learned.shape()[0], learned.shape()[1]);
    if n < 3 {
        return Err(CoreError::Metric(format!("mcc needs at least 3 rows, got {n}")));
    }
    let var_ok = |t: &Tensor, name: &str| -> Result<()> {
        for j in 0..d {
            let col = column(t, j);
            let mean = col.iter().sum::<f64>() / n as f64;
            if col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() == 0.0 {
                return Err(CoreError::Metric(format!("{name} column {j} has zero variance")));
            }
        }
        Ok(())
    };
    var_ok(learned, "learned")?;
    var_ok(truth, "truth")?;
    let mut abs_corr = vec![vec![0.0; d]; d];
    for i in 0..d {
        let li = column(learned, i);
        for j in 0..d {
            abs_corr[i][j] = pearson(&li, &column(truth, j)).abs();
        }
    }
    let cost: Vec<Vec<f64>> = abs_corr.iter().map(|r| r.iter().map(|&w| 1.0 - w).collect()).collect();
    let perm = hungarian_min(&cost);
    let score = (0..d).map(|i| abs_corr[i][perm[i]]).sum::<f64>() / d as f64;
    Ok((score, perm))
}

/// Average R^2 of an ordinary least squares fit of `truth` on `learned`
/// (with intercept). Rank-deficient designs fall back to a small ridge.
pub fn linear_score(learned: &Tensor, truth: &Tensor) -> Result<f64> {
    let (n, d) = (learned.shape()[0], learned.shape()[1]);
    if truth.shape()[0] != n {
        return Err(CoreError::shape(
            "linear_score",
            format!("{:?} vs {:?}", learned.shape(), truth.shape()),
        ));
    }
    if n <= d + 1 {
        return Err(CoreError::Metric(format!("linear_score needs n > d+1, got n={n}, d={d}")));
    }
    let mut design = Tensor::zeros(&[n, d + 1]);
    for i in 0..n {
        for j in 0..d {
            design.set(i, j, learned.at(i, j));
        }
        design.set(i, d, 1.0);
    }
    let (coef, ridged) = least_squares(&design, truth, 1e-8)?;
    if ridged {
        eprintln!("linear_score: rank-deficient design, ridge 1e-8 applied");
    }
    let pred = design.matmul(&coef)?;
    let q = truth.shape()[1];
    let mut r2_sum = 0.0;
    for j in 0..q {
        let tj = column(truth, j);
        let mean = tj.iter().sum::<f64>() / n as f64;
        let ss_tot: f64 = tj.iter().map(|v| (v - mean) * (v - mean)).sum();
        let ss_res: f64 = (0..n).map(|i| {
            let e = truth.at(i, j) - pred.at(i, j);
            e * e
        })
        .sum();
        r2_sum += 1.0 - ss_res / ss_tot;
    }
    Ok(r2_sum / q as f64)
}

/// Hamming distance between a learned mask and the true adjacency after
/// aligning latent indices with `perm` (`perm[i]` = truth latent for learned
/// latent `i`). For latent-to-latent graphs, set `permute_cols` so parent
/// indices are aligned too.
pub fn graph_shd(
    learned: &BipartiteGraph,
    truth: &BipartiteGraph,
    perm: &[usize],
    permute_cols: bool,
) -> Result<usize> {
    if learned.rows != truth.rows || learned.cols != truth.cols {
        return Err(CoreError::shape(
            "graph_shd",
            format!("{}x{} vs {}x{}", learned.rows, learned.cols, truth.rows, truth.cols),
        ));
    }
    let mut shd = 0usize;
    for i in 0..learned.rows {
        for j in 0..learned.cols {
            let tj = if permute_cols { perm[j] } else { j };
            if learned.adj[i][j] != truth.adj[perm[i]][tj] {
                shd += 1;
            }
        }
    }
    Ok(shd)
}

/// Evaluation artifact written as `report.json`.
#[derive(Clone, Debug, Serialize)]
pub struct EvalReport {
    pub format_version: u32,
    pub mcc: f64,
    pub permutation: Vec<usize>,
    pub linear_score: f64,
    pub shd_a: usize,
    pub shd_z: usize,
    pub elbo_test: f64,
    pub masks_a: Vec<Vec<u8>>,
    pub masks_z: Vec<Vec<u8>>,
    pub seed: u64,
    pub config: serde_json::Value,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Encoder means over all timesteps of the selected sequences, pooled, plus
/// the matching ground-truth latents.
pub fn pooled_representations(
    data: &SequenceBatch,
    params: &ModelParams,
    seqs: &[usize],
) -> Result<(Tensor, Tensor)> {
    let z_truth = data
        .z
        .as_ref()
        .ok_or_else(|| CoreError::Contract("evaluation needs ground-truth latents".into()))?;
    let t_len = data.t_len();
    let d_z = params.dims.d_z;
    let n = seqs.len() * t_len;
    let mut learned = Tensor::zeros(&[n, d_z]);
    let mut truth = Tensor::zeros(&[n, d_z]);
    let mut row = 0usize;
    for t in 0..t_len {
        let x = data.x.gather_t(seqs, t);
        let (mean, _) = encode(params, &x)?;
        let zt = z_truth.gather_t(seqs, t);
        for r in 0..seqs.len() {
            for j in 0..d_z {
                learned.set(row, j, mean.at(r, j));
                truth.set(row, j, zt.at(r, j));
            }
            row += 1;
        }
    }
    Ok((learned, truth))
}

/// Full evaluation on the held-out split: MCC, linear score, SHD of the
/// hardened masks against the dataset graphs, and the test ELBO.
pub fn evaluate(
    data: &SequenceBatch,
    meta: &DatasetMeta,
    params: &ModelParams,
    config: &TrainConfig,
) -> Result<EvalReport> {
    let (_, test) = split_indices(data.n_seq(), config.holdout_frac);
    let (learned, truth) = pooled_representations(data, params, &test)?;
    let (score, perm) = mcc(&learned, &truth)?;
    let lin = linear_score(&learned, &truth)?;
    let (hard_z, hard_a) = params.hard_masks();
    let to_graph = |t: &Tensor| {
        BipartiteGraph::new(
            (0..t.shape()[0])
                .map(|i| (0..t.shape()[1]).map(|j| t.at(i, j) as u8).collect())
                .collect(),
        )
        .expect("binary masks")
    };
    let learned_a = to_graph(&hard_a);
    let learned_z = to_graph(&hard_z);
    let shd_a = graph_shd(&learned_a, &meta.graph_a()?, &perm, false)?;
    let shd_z = graph_shd(&learned_z, &meta.graph_z()?, &perm, true)?;
    // deterministic eval noise stream, decoupled from the training stream
    let mut rng = Rng::new(config.seed ^ 0x5eed_e7a1);
    let masks = MaskSample {
        m_z: hard_z.clone(),
        m_a: hard_a.clone(),
        relaxed_z: hard_z.clone(),
        relaxed_a: hard_a.clone(),
    };
    let parts = elbo(data, &test, params, &masks, 0.0, 0.0, &mut rng)?;
    Ok(EvalReport {
        format_version: REPORT_FORMAT_VERSION,
        mcc: score,
        permutation: perm,
        linear_score: lin,
        shd_a,
        shd_z,
        elbo_test: parts.elbo,
        masks_a: learned_a.adj,
        masks_z: learned_z.adj,
        seed: config.seed,
        config: config.echo_json(),
    })
}

/// Train the encoder against the true latents and report its test MCC.
pub fn supervised_baseline(
    data: &SequenceBatch,
    sigma: f64,
    config: &TrainConfig,
) -> Result<(f64, ModelParams)> {
    let params = train_supervised(data, sigma, config)?;
    let (_, test) = split_indices(data.n_seq(), config.holdout_frac);
    let (learned, truth) = pooled_representations(data, params_ref(&params), &test)?;
    let (score, _) = mcc(&learned, &truth)?;
    Ok((score, params))
}

fn params_ref(p: &ModelParams) -> &ModelParams {
    p
}

/// Test MCC of a freshly initialized encoder.
pub fn random_baseline(data: &SequenceBatch, sigma: f64, config: &TrainConfig) -> Result<f64> {
    let params = crate::train::random_model(data, sigma, config)?;
    let (_, test) = split_indices(data.n_seq(), config.holdout_frac);
    let (learned, truth) = pooled_representations(data, &params, &test)?;
    let (score, _) = mcc(&learned, &truth)?;
    Ok(score)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_matrix(rng: &mut Rng, n: usize, d: usize) -> Tensor {
        Tensor::from_fn(&[n, d], |_| rng.normal())
    }

    #[test]
    fn mcc_identity_is_one() {
        let mut rng = Rng::new(0);
        let t = random_matrix(&mut rng, 50, 4);
        let (score, perm) = mcc(&t, &t).unwrap();
        assert!((score - 1.0).abs() < 1e-12);
        assert_eq!(perm, vec![0, 1, 2, 3]);
    }

    #[test]
    fn mcc_absorbs_permutation_and_sign() {
        let mut rng = Rng::new(1);
        let truth = random_matrix(&mut rng, 60, 3);
        // learned = columns (2, 0, 1) of truth with signs (-, +, -)
        let learned = Tensor::from_fn(&[60, 3], |idx| {
            let (i, j) = (idx / 3, idx % 3);
            match j {
                0 => -truth.at(i, 2),
                1 => truth.at(i, 0),
                _ => -truth.at(i, 1),
            }
        });
        let (score, perm) = mcc(&learned, &truth).unwrap();
        assert!((score - 1.0).abs() < 1e-12);
        assert_eq!(perm, vec![2, 0, 1]);
    }

    #[test]
    fn mcc_matches_brute_force_on_small_instances() {
        let mut rng = Rng::new(2);
        for _ in 0..20 {
            let learned = random_matrix(&mut rng, 20, 3);
            let truth = random_matrix(&mut rng, 20, 3);
            let (score, _) = mcc(&learned, &truth).unwrap();
            // exhaustive search over all 6 permutations
            let mut best = f64::NEG_INFINITY;
            let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
            for p in perms {
                let mean: f64 = (0..3)
                    .map(|i| {
                        pearson(&column(&learned, i), &column(&truth, p[i])).abs()
                    })
                    .sum::<f64>()
                    / 3.0;
                best = best.max(mean);
            }
            assert!((score - best).abs() < 1e-12, "{score} vs {best}");
        }
    }

    #[test]
    fn mcc_rejects_zero_variance() {
        let mut rng = Rng::new(3);
        let truth = random_matrix(&mut rng, 10, 2);
        let mut learned = truth.clone();
        for i in 0..10 {
            learned.set(i, 1, 7.0);
        }
        match mcc(&learned, &truth) {
            Err(CoreError::Metric(msg)) => assert!(msg.contains("column 1"), "{msg}"),
            other => panic!("expected metric error, got {other:?}"),
        }
    }

    #[test]
    fn mcc_symmetric_in_arguments() {
        let mut rng = Rng::new(4);
        let a = random_matrix(&mut rng, 40, 4);
        let b = random_matrix(&mut rng, 40, 4);
        let (s1, _) = mcc(&a, &b).unwrap();
        let (s2, _) = mcc(&b, &a).unwrap();
        assert!((s1 - s2).abs() < 1e-12);
    }

    #[test]
    fn linear_score_identity_and_linear_maps() {
        let mut rng = Rng::new(5);
        let truth = random_matrix(&mut rng, 200, 3);
        assert!((linear_score(&truth, &truth).unwrap() - 1.0).abs() < 1e-10);
        // invertible mix of the truth still scores 1
        let mix = Tensor::matrix(3, 3, vec![1.0, 0.4, -0.2, 0.0, 2.0, 0.3, 0.5, -1.0, 1.0]).unwrap();
        let learned = truth.matmul(&mix).unwrap();
        assert!((linear_score(&learned, &truth).unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn linear_score_independent_noise_near_zero() {
        let mut rng = Rng::new(6);
        let truth = random_matrix(&mut rng, 10_000, 5);
        let learned = random_matrix(&mut rng, 10_000, 5);
        let r2 = linear_score(&learned, &truth).unwrap();
        assert!(r2 < 0.01, "r2 {r2}");
    }

    #[test]
    fn shd_examples() {
        let id = BipartiteGraph::identity(2);
        let perm = vec![0, 1];
        assert_eq!(graph_shd(&id, &id, &perm, true).unwrap(), 0);
        let complement = BipartiteGraph::new(vec![vec![0, 1], vec![1, 0]]).unwrap();
        assert_eq!(graph_shd(&complement, &id, &perm, true).unwrap(), 4);
        // permuted-identical graphs align to zero under the right permutation
        let g = BipartiteGraph::new(vec![vec![1, 1, 0], vec![0, 1, 0], vec![1, 0, 1]]).unwrap();
        let swap = vec![1, 0, 2];
        let permuted = BipartiteGraph::new(
            (0..3).map(|i| (0..3).map(|j| g.adj[swap[i]][swap[j]]).collect()).collect(),
        )
        .unwrap();
        assert_eq!(graph_shd(&permuted, &g, &swap, true).unwrap(), 0);
    }

    #[test]
    fn hungarian_prefers_clear_diagonal() {
        let cost = vec![
            vec![0.0, 5.0, 5.0],
            vec![5.0, 0.0, 5.0],
            vec![5.0, 5.0, 0.0],
        ];
        assert_eq!(hungarian_min(&cost), vec![0, 1, 2]);
        let cost2 = vec![
            vec![5.0, 0.0],
            vec![0.0, 5.0],
        ];
        assert_eq!(hungarian_min(&cost2), vec![1, 0]);
    }
}
