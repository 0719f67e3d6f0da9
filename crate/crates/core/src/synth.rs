//! Ground-truth sequential generators with known latent causal structure.
//!
//! Four variants: trivial/non-trivial action sparsity (`t-a`, `nt-a`) where
//! latents are driven by observed actions, and trivial/non-trivial temporal
//! sparsity (`t-t`, `nt-t`) where they are driven by their own past. Latents
//! are mixed into observations by a random three-hidden-layer leaky-ReLU
//! network with orthonormalized weight columns, plus small Gaussian noise.

use crate::bipartite::BipartiteGraph;
use crate::error::{CoreError, Result};
use crate::linalg::{jacobi_eigh, orthonormal_columns};
use crate::rng::Rng;
use crate::tensor::{gemm, Tensor};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

pub const OBS_NOISE_STD: f64 = 1e-2;
/// Transition noise std; not pinned by the generative story, recorded in metadata.
pub const TRANSITION_NOISE_STD: f64 = 0.1;
pub const MIXING_LEAKY_SLOPE: f64 = 0.2;
pub const DATASET_FORMAT_VERSION: u32 = 1;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "t-a")]
    TrivialAction,
    #[serde(rename = "nt-a")]
    NonTrivialAction,
    #[serde(rename = "t-t")]
    TrivialTemporal,
    #[serde(rename = "nt-t")]
    NonTrivialTemporal,
}

impl Variant {
    pub fn uses_actions(self) -> bool {
        matches!(self, Variant::TrivialAction | Variant::NonTrivialAction)
    }

    pub const ALL: [Variant; 4] = [
        Variant::TrivialAction,
        Variant::NonTrivialAction,
        Variant::TrivialTemporal,
        Variant::NonTrivialTemporal,
    ];
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Variant::TrivialAction => "t-a",
            Variant::NonTrivialAction => "nt-a",
            Variant::TrivialTemporal => "t-t",
            Variant::NonTrivialTemporal => "nt-t",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Variant {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "t-a" | "ta" => Ok(Variant::TrivialAction),
            "nt-a" | "nta" => Ok(Variant::NonTrivialAction),
            "t-t" | "tt" => Ok(Variant::TrivialTemporal),
            "nt-t" | "ntt" => Ok(Variant::NonTrivialTemporal),
            other => Err(CoreError::Contract(format!(
                "unknown variant '{other}' (expected t-a, nt-a, t-t or nt-t)"
            ))),
        }
    }
}

/// Random injective mixing network: three hidden layers of `d_x` units,
/// leaky-ReLU slope 0.2, no biases. Weight matrices are stored `(out, in)`.
#[derive(Clone, Debug)]
pub struct MixingFn {
    pub weights: Vec<Tensor>,
    pub slope: f64,
}

impl MixingFn {
    pub fn forward_vec(&self, z: &[f64]) -> Vec<f64> {
        let mut h = Tensor::vector(z.to_vec());
        let last = self.weights.len() - 1;
        for (k, w) in self.weights.iter().enumerate() {
            h = w.matmul(&h).expect("mixing dims");
            if k < last {
                h = h.map(|v| if v > 0.0 { v } else { self.slope * v });
            }
        }
        h.into_data()
    }

    /// Rows of `z` are samples.
    pub fn forward_batch(&self, z: &Tensor) -> Tensor {
        let mut h = z.clone();
        let last = self.weights.len() - 1;
        for (k, w) in self.weights.iter().enumerate() {
            h = gemm(&h, false, w, true).expect("mixing dims");
            if k < last {
                h = h.map(|v| if v > 0.0 { v } else { self.slope * v });
            }
        }
        h
    }

    /// Identity map, for tests that need `x == z`.
    pub fn identity(d: usize) -> Self {
        let mut w = Tensor::zeros(&[d, d]);
        for i in 0..d {
            w.set(i, i, 1.0);
        }
        MixingFn { weights: vec![w], slope: MIXING_LEAKY_SLOPE }
    }
}

/// Sample one mixing weight matrix: 0-1 Gaussian entries, orthonormalized
/// columns, rescaled by the leaky-ReLU gain `sqrt(2/(1+slope^2))`.
///
/// Orthonormal columns make each layer an isometry, so the gain alone keeps
/// activations at unit scale through the leaky-ReLU stack. Adding a fan-based
/// factor on top (as for Gaussian-entry init) would shrink the signal by
/// ~1/sqrt(d) per layer and bury it under the observation noise.
fn mixing_weight(rng: &mut Rng, d_out: usize, d_in: usize) -> Result<Tensor> {
    let raw = Tensor::from_fn(&[d_out, d_in], |_| rng.normal());
    let q = orthonormal_columns(&raw)?;
    let scale = (2.0 / (1.0 + MIXING_LEAKY_SLOPE * MIXING_LEAKY_SLOPE)).sqrt();
    Ok(q.map(|v| v * scale))
}

pub fn make_mixing_fn(d_z: usize, d_x: usize, rng: &mut Rng) -> Result<MixingFn> {
    if d_z > d_x {
        return Err(CoreError::Contract(format!(
            "mixing needs d_z <= d_x for injectivity, got d_z={d_z}, d_x={d_x}"
        )));
    }
    let mut weights = Vec::with_capacity(4);
    weights.push(mixing_weight(rng, d_x, d_z)?);
    for _ in 0..3 {
        weights.push(mixing_weight(rng, d_x, d_x)?);
    }
    Ok(MixingFn { weights, slope: MIXING_LEAKY_SLOPE })
}

/// Sample a stable matrix: orthonormalize a Gaussian matrix, then shift every
/// eigenvalue's real part to its negated absolute value while keeping the
/// imaginary part.
///
/// The orthonormalized matrix `Q` is normal, so it splits into rotation
/// planes and fixed directions, which we extract from the symmetric part
/// `(Q + Q^T)/2` and reassemble with the transformed eigenvalues. The result
/// stays real throughout.
pub fn make_stable_matrix(d_z: usize, rng: &mut Rng) -> Result<Tensor> {
    let raw = Tensor::from_fn(&[d_z, d_z], |_| rng.normal());
    let q = orthonormal_columns(&raw)?;
    stabilize_orthogonal(&q)
}

/// Eigenvalue transform `re + i*im -> -|re| + i*im` applied to an orthogonal
/// matrix, reconstructed in real arithmetic.
pub fn stabilize_orthogonal(q: &Tensor) -> Result<Tensor> {
    let d_z = q.shape()[0];
    let sym = q.zip_map(&q.transpose(), |a, b| 0.5 * (a + b))?;
    let (_vals, vecs) = jacobi_eigh(&sym)?;

    // Columns of `vecs` form an orthonormal basis compatible with Q's
    // invariant subspaces. Peel off rotation planes / fixed directions.
    let n = d_z;
    let mut pool: Vec<Vec<f64>> = (0..n).map(|j| (0..n).map(|i| vecs.at(i, j)).collect()).collect();
    let mut w = Tensor::zeros(&[n, n]);
    let qv = |v: &[f64]| -> Vec<f64> {
        (0..n).map(|i| (0..n).map(|j| q.at(i, j) * v[j]).sum()).collect()
    };
    while let Some(u) = pool.pop() {
        let qu = qv(&u);
        let c: f64 = u.iter().zip(&qu).map(|(a, b)| a * b).sum();
        let resid: Vec<f64> = qu.iter().zip(&u).map(|(a, b)| a - c * b).collect();
        let s = resid.iter().map(|v| v * v).sum::<f64>().sqrt();
        if s < 1e-7 {
            // fixed direction, eigenvalue +-1 -> transformed to -1
            for i in 0..n {
                for j in 0..n {
                    w.set(i, j, w.at(i, j) - u[i] * u[j]);
                }
            }
        } else {
            let wv: Vec<f64> = resid.iter().map(|v| v / s).collect();
            // block [[-|c|, -s], [s, -|c|]] on the (u, wv) plane
            let d = -c.abs();
            for i in 0..n {
                for j in 0..n {
                    let add = d * (u[i] * u[j] + wv[i] * wv[j]) + s * (wv[i] * u[j] - u[i] * wv[j]);
                    w.set(i, j, w.at(i, j) + add);
                }
            }
            // remove the wv direction from the remaining pool
            for v in pool.iter_mut() {
                let d1: f64 = v.iter().zip(&u).map(|(a, b)| a * b).sum();
                let d2: f64 = v.iter().zip(&wv).map(|(a, b)| a * b).sum();
                for i in 0..n {
                    v[i] -= d1 * u[i] + d2 * wv[i];
                }
            }
            // re-orthonormalize and drop the collapsed vector
            let mut cleaned: Vec<Vec<f64>> = Vec::with_capacity(pool.len().saturating_sub(1));
            for v in pool.drain(..) {
                let mut v = v;
                for c in &cleaned {
                    let d: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
                    for i in 0..n {
                        v[i] -= d * c[i];
                    }
                }
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > 1e-7 {
                    for x in v.iter_mut() {
                        *x /= norm;
                    }
                    cleaned.push(v);
                }
            }
            pool = cleaned;
        }
    }
    Ok(w)
}

/// Ground-truth adjacency matrices `(M^a, M^z)` for a variant.
///
/// * `t-a`: actions hit their own latent (`M^a = I`); the dense stable drift
///   couples every past latent to every present one (`M^z` complete).
/// * `nt-a`: the circulant band `M^a` with entries `(i,i)`, `(i,i-1)` and
///   `(1,d_a)`; `M^z` complete as in `t-a`.
/// * `t-t`: `M^z = I`, no actions.
/// * `nt-t`: `M^z` with a full first row, the diagonal, and a full last
///   column; no actions.
pub fn adjacency(variant: Variant, d_z: usize, d_a: usize) -> Result<(BipartiteGraph, BipartiteGraph)> {
    match variant {
        Variant::TrivialAction => {
            if d_z != d_a {
                return Err(CoreError::Contract(format!("t-a needs d_z = d_a, got {d_z}/{d_a}")));
            }
            Ok((BipartiteGraph::identity(d_z), BipartiteGraph::complete(d_z, d_z)))
        }
        Variant::NonTrivialAction => {
            if d_z != d_a {
                return Err(CoreError::Contract(format!("nt-a needs d_z = d_a, got {d_z}/{d_a}")));
            }
            let mut m = BipartiteGraph::zeros(d_z, d_a);
            for i in 0..d_z {
                m.adj[i][i] = 1;
                if i > 0 {
                    m.adj[i][i - 1] = 1;
                } else {
                    m.adj[0][d_a - 1] = 1;
                }
            }
            Ok((m, BipartiteGraph::complete(d_z, d_z)))
        }
        Variant::TrivialTemporal => {
            Ok((BipartiteGraph::zeros(d_z, d_a), BipartiteGraph::identity(d_z)))
        }
        Variant::NonTrivialTemporal => {
            let mut m = BipartiteGraph::zeros(d_z, d_z);
            for j in 0..d_z {
                m.adj[0][j] = 1;
                m.adj[j][j] = 1;
                m.adj[j][d_z - 1] = 1;
            }
            Ok((BipartiteGraph::zeros(d_z, d_a), m))
        }
    }
}

/// Everything needed to simulate one ground-truth process.
#[derive(Clone, Debug)]
pub struct GroundTruthProcess {
    pub variant: Variant,
    pub d_z: usize,
    pub d_x: usize,
    pub d_a: usize,
    pub mixing: MixingFn,
    /// Stable drift matrix, present for the action variants.
    pub stable: Option<Tensor>,
    pub graph_a: BipartiteGraph,
    pub graph_z: BipartiteGraph,
    pub sigma: f64,
    pub sigma_z: f64,
}

impl GroundTruthProcess {
    /// Build the full process from a seed; pure function of its arguments.
    pub fn generate(variant: Variant, d_z: usize, d_x: usize, seed: u64) -> Result<Self> {
        let d_a = d_z;
        let mut rng = Rng::new(seed);
        let mixing = make_mixing_fn(d_z, d_x, &mut rng)?;
        let stable = if variant.uses_actions() {
            Some(make_stable_matrix(d_z, &mut rng)?)
        } else {
            None
        };
        let (graph_a, graph_z) = adjacency(variant, d_z, d_a)?;
        Ok(GroundTruthProcess {
            variant,
            d_z,
            d_x,
            d_a,
            mixing,
            stable,
            graph_a,
            graph_z,
            sigma: OBS_NOISE_STD,
            sigma_z: TRANSITION_NOISE_STD,
        })
    }

    /// Transition mean `mu(z_prev, a_prev)` for this variant.
    pub fn transition_mean(&self, z_prev: &[f64], a_prev: &[f64]) -> Result<Vec<f64>> {
        if z_prev.len() != self.d_z || a_prev.len() != self.d_a {
            return Err(CoreError::shape(
                "transition_mean",
                format!("z {} a {} vs dims {}/{}", z_prev.len(), a_prev.len(), self.d_z, self.d_a),
            ));
        }
        let d_z = self.d_z;
        match self.variant {
            Variant::TrivialAction => {
                let w = self.stable.as_ref().expect("t-a has stable matrix");
                let wz = w.matmul(&Tensor::vector(z_prev.to_vec()))?;
                Ok((0..d_z)
                    .map(|i| z_prev[i] + 0.1 * (wz.data()[i] + a_prev[i].sin()))
                    .collect())
            }
            Variant::NonTrivialAction => {
                let w = self.stable.as_ref().expect("nt-a has stable matrix");
                let wz = w.matmul(&Tensor::vector(z_prev.to_vec()))?;
                Ok((0..d_z)
                    .map(|i| {
                        let freq = (i + 1) as f64 / d_z as f64;
                        let dot: f64 = (0..self.d_a)
                            .map(|j| self.graph_a.adj[i][j] as f64 * (freq * a_prev[j]).sin())
                            .sum();
                        z_prev[i] + 0.1 * (wz.data()[i] + dot)
                    })
                    .collect())
            }
            Variant::TrivialTemporal => {
                Ok(z_prev.iter().map(|&z| z + 0.5 * z.sin()).collect())
            }
            Variant::NonTrivialTemporal => Ok((0..d_z)
                .map(|i| {
                    let freq = (i + 1) as f64 / d_z as f64;
                    let dot: f64 = (0..d_z)
                        .map(|j| self.graph_z.adj[i][j] as f64 * (freq * z_prev[j]).sin())
                        .sum();
                    z_prev[i] + 0.5 * dot
                })
                .collect()),
        }
    }
}

/// `(n_seq, t_len, dim)` array stored flat row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SeqArray {
    pub n_seq: usize,
    pub t_len: usize,
    pub dim: usize,
    data: Vec<f64>,
}

impl SeqArray {
    pub fn zeros(n_seq: usize, t_len: usize, dim: usize) -> Self {
        SeqArray { n_seq, t_len, dim, data: vec![0.0; n_seq * t_len * dim] }
    }

    pub fn from_data(n_seq: usize, t_len: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n_seq * t_len * dim {
            return Err(CoreError::shape(
                "SeqArray",
                format!("{} values for ({n_seq},{t_len},{dim})", data.len()),
            ));
        }
        Ok(SeqArray { n_seq, t_len, dim, data })
    }

    pub fn at(&self, seq: usize, t: usize) -> &[f64] {
        let off = (seq * self.t_len + t) * self.dim;
        &self.data[off..off + self.dim]
    }

    pub fn at_mut(&mut self, seq: usize, t: usize) -> &mut [f64] {
        let off = (seq * self.t_len + t) * self.dim;
        &mut self.data[off..off + self.dim]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Rows = timestep `t` of the selected sequences.
    pub fn gather_t(&self, seqs: &[usize], t: usize) -> Tensor {
        let mut out = Tensor::zeros(&[seqs.len(), self.dim]);
        for (r, &s) in seqs.iter().enumerate() {
            let src = self.at(s, t);
            let dst = &mut out.data_mut()[r * self.dim..(r + 1) * self.dim];
            dst.copy_from_slice(src);
        }
        out
    }
}

/// Observed sequences plus (for synthetic data) the generating latents.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceBatch {
    pub x: SeqArray,
    pub a: SeqArray,
    pub z: Option<SeqArray>,
}

impl SequenceBatch {
    pub fn n_seq(&self) -> usize {
        self.x.n_seq
    }

    pub fn t_len(&self) -> usize {
        self.x.t_len
    }
}

/// Roll out `n_seq` sequences of length `t_len`.
///
/// `z^1 ~ N(0, I)`; actions are iid uniform on `[-2, 2]` for the action
/// variants and zero otherwise; `z^t ~ N(mu(z^{t-1}, a^{t-1}), sigma_z^2 I)`;
/// `x^t = f(z^t) + N(0, sigma^2 I)`. `a[s][t]` is the action applied before
/// `z[s][t+1]`; the last action of each sequence is sampled but unused.
pub fn sample_sequences(
    process: &GroundTruthProcess,
    n_seq: usize,
    t_len: usize,
    rng: &mut Rng,
) -> Result<SequenceBatch> {
    if n_seq == 0 || t_len < 2 {
        return Err(CoreError::Contract(format!(
            "sample_sequences needs n_seq >= 1 and t_len >= 2, got {n_seq}/{t_len}"
        )));
    }
    let (d_z, d_x, d_a) = (process.d_z, process.d_x, process.d_a);
    let mut z = SeqArray::zeros(n_seq, t_len, d_z);
    let mut a = SeqArray::zeros(n_seq, t_len, d_a);
    let mut x = SeqArray::zeros(n_seq, t_len, d_x);
    for s in 0..n_seq {
        for t in 0..t_len {
            if process.variant.uses_actions() {
                for v in a.at_mut(s, t) {
                    *v = rng.uniform_in(-2.0, 2.0);
                }
            }
            if t == 0 {
                for v in z.at_mut(s, 0) {
                    *v = rng.normal();
                }
            } else {
                let mu = process.transition_mean(
                    &z.at(s, t - 1).to_vec(),
                    &a.at(s, t - 1).to_vec(),
                )?;
                for (k, v) in z.at_mut(s, t).iter_mut().enumerate() {
                    *v = mu[k] + process.sigma_z * rng.normal();
                }
            }
            let clean = process.mixing.forward_vec(z.at(s, t));
            for (k, v) in x.at_mut(s, t).iter_mut().enumerate() {
                *v = clean[k] + process.sigma * rng.normal();
            }
        }
    }
    Ok(SequenceBatch { x, a, z: Some(z) })
}

// ── Dataset persistence ──────────────────────────────────────────────

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct DatasetMeta {
    pub format_version: u32,
    pub variant: Variant,
    pub d_z: usize,
    pub d_x: usize,
    pub d_a: usize,
    pub n_seq: usize,
    pub t: usize,
    pub seed: u64,
    pub sigma: f64,
    pub sigma_z: f64,
    pub m_a: Vec<Vec<u8>>,
    pub m_z: Vec<Vec<u8>>,
}

impl DatasetMeta {
    pub fn graph_a(&self) -> Result<BipartiteGraph> {
        BipartiteGraph::new(self.m_a.clone())
    }

    pub fn graph_z(&self) -> Result<BipartiteGraph> {
        BipartiteGraph::new(self.m_z.clone())
    }
}

fn write_bin(path: &Path, data: &[f64]) -> Result<()> {
    let mut bytes = Vec::with_capacity(data.len() * 8);
    for v in data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = std::fs::File::create(path).map_err(|e| CoreError::io(path.display().to_string(), e))?;
    f.write_all(&bytes).map_err(|e| CoreError::io(path.display().to_string(), e))
}

fn read_bin(path: &Path, expect_len: usize) -> Result<Vec<f64>> {
    let mut f = std::fs::File::open(path).map_err(|e| CoreError::io(path.display().to_string(), e))?;
    let mut bytes = Vec::new();
    f.read_to_end(&mut bytes).map_err(|e| CoreError::io(path.display().to_string(), e))?;
    if bytes.len() != expect_len * 8 {
        return Err(CoreError::format(
            path.display().to_string(),
            format!("expected {} bytes, found {}", expect_len * 8, bytes.len()),
        ));
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

/// Write `meta.json`, `x.bin`, `a.bin`, `z.bin` into `dir` (created if absent).
pub fn save_dataset(batch: &SequenceBatch, meta: &DatasetMeta, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CoreError::io(dir.display().to_string(), e))?;
    let meta_json = serde_json::to_string_pretty(meta)
        .map_err(|e| CoreError::format("meta.json", e.to_string()))?;
    std::fs::write(dir.join("meta.json"), meta_json)
        .map_err(|e| CoreError::io(dir.join("meta.json").display().to_string(), e))?;
    write_bin(&dir.join("x.bin"), batch.x.data())?;
    write_bin(&dir.join("a.bin"), batch.a.data())?;
    if let Some(z) = &batch.z {
        write_bin(&dir.join("z.bin"), z.data())?;
    }
    Ok(())
}

pub fn load_dataset(dir: &Path) -> Result<(SequenceBatch, DatasetMeta)> {
    let meta_path = dir.join("meta.json");
    let raw = std::fs::read_to_string(&meta_path)
        .map_err(|e| CoreError::io(meta_path.display().to_string(), e))?;
    let meta: DatasetMeta = serde_json::from_str(&raw)
        .map_err(|e| CoreError::format(meta_path.display().to_string(), e.to_string()))?;
    if meta.format_version != DATASET_FORMAT_VERSION {
        return Err(CoreError::format(
            meta_path.display().to_string(),
            format!("format_version {} unsupported", meta.format_version),
        ));
    }
    let n = meta.n_seq * meta.t;
    let x = SeqArray::from_data(meta.n_seq, meta.t, meta.d_x, read_bin(&dir.join("x.bin"), n * meta.d_x)?)?;
    let a = SeqArray::from_data(meta.n_seq, meta.t, meta.d_a, read_bin(&dir.join("a.bin"), n * meta.d_a)?)?;
    let z_path = dir.join("z.bin");
    let z = if z_path.exists() {
        Some(SeqArray::from_data(meta.n_seq, meta.t, meta.d_z, read_bin(&z_path, n * meta.d_z)?)?)
    } else {
        None
    };
    Ok((SequenceBatch { x, a, z }, meta))
}

/// Generate-and-describe in one step; the pure entry point used by the CLI.
pub fn generate_dataset(
    variant: Variant,
    d_z: usize,
    d_x: usize,
    n_seq: usize,
    t_len: usize,
    seed: u64,
) -> Result<(SequenceBatch, DatasetMeta, GroundTruthProcess)> {
    let process = GroundTruthProcess::generate(variant, d_z, d_x, seed)?;
    let mut rng = Rng::new(seed.wrapping_add(1));
    let batch = sample_sequences(&process, n_seq, t_len, &mut rng)?;
    let meta = DatasetMeta {
        format_version: DATASET_FORMAT_VERSION,
        variant,
        d_z,
        d_x,
        d_a: process.d_a,
        n_seq,
        t: t_len,
        seed,
        sigma: process.sigma,
        sigma_z: process.sigma_z,
        m_a: process.graph_a.adj.clone(),
        m_z: process.graph_z.adj.clone(),
    };
    Ok((batch, meta, process))
}
