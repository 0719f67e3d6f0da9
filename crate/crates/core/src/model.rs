//! The learnable sequential VAE: Gaussian encoder per timestep, decoder,
//! per-latent masked transition priors, and the Bernoulli mask machinery.
//!
//! Masks `M^z` (past latents -> latents) and `M^a` (actions -> latents) are
//! Bernoulli with success probability `sigmoid(gamma)`. During training a
//! fresh sample is drawn per minibatch through the Gumbel-Softmax relaxation;
//! the forward pass uses the hard 0/1 values while gradients flow through the
//! relaxed ones (straight-through). At evaluation time masks are hardened
//! deterministically as `sigmoid(gamma) > 0.5`.

use crate::error::{CoreError, Result};
use crate::rng::Rng;
use crate::tape::{Gradients, Graph, NodeId};
use crate::tensor::{gemm, Tensor};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

pub const LOGVAR_CLAMP: f64 = 10.0;
pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub d_x: usize,
    pub d_z: usize,
    pub d_a: usize,
}

/// Network sizes and initialization constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub enc_hidden: usize,
    pub enc_layers: usize,
    pub trans_hidden: usize,
    pub trans_layers: usize,
    pub slope: f64,
    pub gamma_init: f64,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            enc_hidden: 128,
            enc_layers: 3,
            trans_hidden: 64,
            trans_layers: 3,
            slope: 0.2,
            gamma_init: 2.0,
        }
    }
}

/// Fully-connected net with leaky-ReLU hidden activations and linear output.
/// Weights are `(out, in)`; forward maps batches row-wise.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub weights: Vec<Tensor>,
    pub biases: Vec<Tensor>,
    pub slope: f64,
}

impl Mlp {
    /// Fan-averaged Gaussian init: `w ~ N(0, 2 / (fan_in + fan_out))`.
    pub fn init(sizes: &[usize], slope: f64, rng: &mut Rng) -> Self {
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for win in sizes.windows(2) {
            let (d_in, d_out) = (win[0], win[1]);
            let std = (2.0 / (d_in + d_out) as f64).sqrt();
            weights.push(Tensor::from_fn(&[d_out, d_in], |_| std * rng.normal()));
            biases.push(Tensor::zeros(&[d_out]));
        }
        Mlp { weights, biases, slope }
    }

    pub fn zeros(sizes: &[usize], slope: f64) -> Self {
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for win in sizes.windows(2) {
            weights.push(Tensor::zeros(&[win[1], win[0]]));
            biases.push(Tensor::zeros(&[win[1]]));
        }
        Mlp { weights, biases, slope }
    }

    /// Plain batched forward; rows of `x` are samples.
    pub fn forward(&self, x: &Tensor) -> Tensor {
        let mut h = x.clone();
        let last = self.weights.len() - 1;
        for (k, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut pre = gemm(&h, false, w, true).expect("mlp dims");
            let cols = pre.shape()[1];
            for (i, v) in pre.data_mut().iter_mut().enumerate() {
                *v += b.data()[i % cols];
            }
            h = if k < last {
                pre.map(|v| if v > 0.0 { v } else { self.slope * v })
            } else {
                pre
            };
        }
        h
    }
}

/// Parameter node ids for one MLP inside a graph. Weight nodes hold the
/// transposed `(in, out)` layout so batched forwards are a plain matmul.
#[derive(Clone, Debug)]
pub struct BoundMlp {
    pub w: Vec<NodeId>,
    pub b: Vec<NodeId>,
    pub slope: f64,
}

/// Graph forward through a bound MLP: each layer is `x . w + b`.
pub fn mlp_graph_forward(g: &mut Graph, net: &BoundMlp, x: NodeId) -> Result<NodeId> {
    let mut h = x;
    let last = net.w.len() - 1;
    for (k, (&w, &b)) in net.w.iter().zip(&net.b).enumerate() {
        let pre = g.matmul(h, w)?;
        let withb = g.add(pre, b)?;
        h = if k < last { g.leaky_relu(withb, net.slope)? } else { withb };
    }
    Ok(h)
}

/// All learnable parameters plus the fixed observation noise.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub dims: ModelDims,
    pub arch: Architecture,
    pub encoder: Mlp,
    pub decoder: Mlp,
    /// One network per latent; input is the masked `(z_prev, a_prev)` pair.
    pub trans: Vec<Mlp>,
    /// Learned input-independent per-latent prior log-variance.
    pub prior_logvar: Tensor,
    pub gamma_z: Tensor,
    pub gamma_a: Tensor,
    /// Fixed observation noise std of the decoder likelihood.
    pub sigma: f64,
}

fn layer_sizes(d_in: usize, hidden: usize, layers: usize, d_out: usize) -> Vec<usize> {
    let mut s = vec![d_in];
    s.extend(std::iter::repeat(hidden).take(layers));
    s.push(d_out);
    s
}

impl ModelParams {
    pub fn init(dims: ModelDims, arch: Architecture, sigma: f64, rng: &mut Rng) -> Self {
        let enc_sizes = layer_sizes(dims.d_x, arch.enc_hidden, arch.enc_layers, 2 * dims.d_z);
        let dec_sizes = layer_sizes(dims.d_z, arch.enc_hidden, arch.enc_layers, dims.d_x);
        let trans_sizes =
            layer_sizes(dims.d_z + dims.d_a, arch.trans_hidden, arch.trans_layers, 1);
        let mut encoder = Mlp::init(&enc_sizes, arch.slope, rng);
        // start the posterior narrow: the observation noise is small, so a
        // unit-variance initial posterior drowns early reconstruction
        // gradients in sampling noise
        if let Some(last_bias) = encoder.biases.last_mut() {
            for j in dims.d_z..2 * dims.d_z {
                last_bias.data_mut()[j] = -4.0;
            }
        }
        let decoder = Mlp::init(&dec_sizes, arch.slope, rng);
        let trans = (0..dims.d_z).map(|_| Mlp::init(&trans_sizes, arch.slope, rng)).collect();
        ModelParams {
            dims,
            encoder,
            decoder,
            trans,
            prior_logvar: Tensor::full(&[dims.d_z], -2.0),
            gamma_z: Tensor::full(&[dims.d_z, dims.d_z], arch.gamma_init),
            gamma_a: Tensor::full(&[dims.d_z, dims.d_a], arch.gamma_init),
            sigma,
            arch,
        }
    }

    /// Canonical flat order of every learnable tensor; the Adam state and
    /// graph binding both follow it.
    pub fn param_tensors(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for mlp in std::iter::once(&self.encoder)
            .chain(std::iter::once(&self.decoder))
            .chain(self.trans.iter())
        {
            for (w, b) in mlp.weights.iter().zip(&mlp.biases) {
                out.push(w);
                out.push(b);
            }
        }
        out.push(&self.prior_logvar);
        out.push(&self.gamma_z);
        out.push(&self.gamma_a);
        out
    }

    pub fn param_tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::new();
        for mlp in std::iter::once(&mut self.encoder)
            .chain(std::iter::once(&mut self.decoder))
            .chain(self.trans.iter_mut())
        {
            for (w, b) in mlp.weights.iter_mut().zip(mlp.biases.iter_mut()) {
                out.push(w);
                out.push(b);
            }
        }
        out.push(&mut self.prior_logvar);
        out.push(&mut self.gamma_z);
        out.push(&mut self.gamma_a);
        out
    }

    /// Deterministic eval-time masks: `sigmoid(gamma) > 0.5`.
    pub fn hard_masks(&self) -> (Tensor, Tensor) {
        let hard = |t: &Tensor| t.map(|g| if g > 0.0 { 1.0 } else { 0.0 });
        (hard(&self.gamma_z), hard(&self.gamma_a))
    }

    /// Expected mask densities `(mean sigmoid(gamma_a), mean sigmoid(gamma_z))`.
    pub fn mask_densities(&self) -> (f64, f64) {
        let dens = |t: &Tensor| {
            t.data().iter().map(|g| 1.0 / (1.0 + (-g).exp())).sum::<f64>() / t.len() as f64
        };
        (dens(&self.gamma_a), dens(&self.gamma_z))
    }
}

/// Node ids for every parameter of a bound model, in canonical order.
/// The flag records which nodes hold transposed copies of their tensor.
pub struct BoundModel {
    pub encoder: BoundMlp,
    pub decoder: BoundMlp,
    pub trans: Vec<BoundMlp>,
    pub prior_logvar: NodeId,
    pub gamma_z: NodeId,
    pub gamma_a: NodeId,
    order: Vec<(NodeId, bool)>,
}

/// Bind every parameter as a graph leaf. Weight matrices are bound
/// transposed so batched forward passes are a plain `x . w`.
pub fn bind_model(g: &mut Graph, p: &ModelParams) -> BoundModel {
    let bind_t = |g: &mut Graph, mlp: &Mlp| BoundMlp {
        w: mlp.weights.iter().map(|t| g.param(t.transpose())).collect(),
        b: mlp.biases.iter().map(|t| g.param(t.clone())).collect(),
        slope: mlp.slope,
    };
    let encoder = bind_t(g, &p.encoder);
    let decoder = bind_t(g, &p.decoder);
    let trans: Vec<BoundMlp> = p.trans.iter().map(|m| bind_t(g, m)).collect();
    let prior_logvar = g.param(p.prior_logvar.clone());
    let gamma_z = g.param(p.gamma_z.clone());
    let gamma_a = g.param(p.gamma_a.clone());
    let mut order = Vec::new();
    for net in std::iter::once(&encoder).chain(std::iter::once(&decoder)).chain(trans.iter()) {
        for (&w, &b) in net.w.iter().zip(&net.b) {
            order.push((w, true));
            order.push((b, false));
        }
    }
    order.push((prior_logvar, false));
    order.push((gamma_z, false));
    order.push((gamma_a, false));
    BoundModel { encoder, decoder, trans, prior_logvar, gamma_z, gamma_a, order }
}

impl BoundModel {
    /// Extract gradients in canonical parameter order, un-transposing weight
    /// gradients back to storage layout. Parameters off the loss path come
    /// back as zeros.
    pub fn collect_grads(&self, grads: &mut Gradients, p: &ModelParams) -> Vec<Tensor> {
        let tensors = p.param_tensors();
        let mut out = Vec::with_capacity(tensors.len());
        for (&(id, transposed), stored) in self.order.iter().zip(&tensors) {
            match grads.take(id) {
                Some(t) => out.push(if transposed { t.transpose() } else { t }),
                None => out.push(Tensor::zeros(stored.shape())),
            }
        }
        out
    }
}

/// `clamp(x, lo, hi)` composed from the primitive set:
/// `lo + relu(x - lo) - relu(x - hi)`.
pub fn clamp_graph(g: &mut Graph, x: NodeId, lo: f64, hi: f64) -> Result<NodeId> {
    let lo_c = g.constant_scalar(lo);
    let hi_c = g.constant_scalar(hi);
    let above_lo = g.sub(x, lo_c)?;
    let r1 = g.relu(above_lo)?;
    let shifted = g.add(r1, lo_c)?;
    let above_hi = g.sub(x, hi_c)?;
    let r2 = g.relu(above_hi)?;
    g.sub(shifted, r2)
}

/// Encoder graph pass: rows of `x` -> (mean, clamped log-variance).
pub fn encode_graph(
    g: &mut Graph,
    model: &BoundModel,
    x: NodeId,
    d_z: usize,
) -> Result<(NodeId, NodeId)> {
    let out = mlp_graph_forward(g, &model.encoder, x)?;
    let mean = g.slice_cols(out, 0, d_z)?;
    let raw_lv = g.slice_cols(out, d_z, 2 * d_z)?;
    let lv = clamp_graph(g, raw_lv, -LOGVAR_CLAMP, LOGVAR_CLAMP)?;
    Ok((mean, lv))
}

pub fn decode_graph(g: &mut Graph, model: &BoundModel, z: NodeId) -> Result<NodeId> {
    mlp_graph_forward(g, &model.decoder, z)
}

/// Plain encoder pass returning `(means, logvars)` for metric evaluation.
pub fn encode(p: &ModelParams, x: &Tensor) -> Result<(Tensor, Tensor)> {
    let out = p.encoder.forward(x);
    if !out.all_finite() {
        return Err(CoreError::Numeric("encoder produced non-finite output".into()));
    }
    let (b, d_z) = (out.shape()[0], p.dims.d_z);
    let mut mean = Tensor::zeros(&[b, d_z]);
    let mut lv = Tensor::zeros(&[b, d_z]);
    for i in 0..b {
        for j in 0..d_z {
            mean.set(i, j, out.at(i, j));
            lv.set(i, j, out.at(i, j + d_z).clamp(-LOGVAR_CLAMP, LOGVAR_CLAMP));
        }
    }
    Ok((mean, lv))
}

pub fn decode(p: &ModelParams, z: &Tensor) -> Result<Tensor> {
    let out = p.decoder.forward(z);
    if !out.all_finite() {
        return Err(CoreError::Numeric("decoder produced non-finite output".into()));
    }
    Ok(out)
}

/// One Bernoulli mask draw (hard values plus the relaxed probabilities).
#[derive(Clone, Debug)]
pub struct MaskSample {
    pub m_z: Tensor,
    pub m_a: Tensor,
    pub relaxed_z: Tensor,
    pub relaxed_a: Tensor,
}

/// Gumbel difference noise `g1 - g0` used by the relaxation.
pub fn gumbel_diff(shape: &[usize], rng: &mut Rng) -> Tensor {
    Tensor::from_fn(shape, |_| {
        let g1 = rng.gumbel();
        let g0 = rng.gumbel();
        g1 - g0
    })
}

fn relax(gamma: &Tensor, noise: &Tensor, temperature: f64) -> Tensor {
    gamma
        .zip_map(noise, |g, n| {
            let t = (g + n) / temperature;
            1.0 / (1.0 + (-t).exp())
        })
        .expect("gamma/noise shapes")
}

/// Sample hard masks via the Gumbel-Softmax relaxation:
/// `relaxed = sigmoid((gamma + g1 - g0)/tau)`, hard = `relaxed > 0.5`.
pub fn sample_masks(
    gamma_z: &Tensor,
    gamma_a: &Tensor,
    temperature: f64,
    rng: &mut Rng,
) -> MaskSample {
    assert!(temperature > 0.0, "temperature must be positive");
    let noise_z = gumbel_diff(gamma_z.shape(), rng);
    let noise_a = gumbel_diff(gamma_a.shape(), rng);
    let relaxed_z = relax(gamma_z, &noise_z, temperature);
    let relaxed_a = relax(gamma_a, &noise_a, temperature);
    let hard = |t: &Tensor| t.map(|r| if r > 0.5 { 1.0 } else { 0.0 });
    MaskSample { m_z: hard(&relaxed_z), m_a: hard(&relaxed_a), relaxed_z, relaxed_a }
}

/// Graph version of the relaxation; hard thresholding happens inside
/// `mask_mul` wherever these relaxed nodes are consumed.
pub fn mask_nodes(
    g: &mut Graph,
    model: &BoundModel,
    noise_z: &Tensor,
    noise_a: &Tensor,
    temperature: f64,
) -> Result<(NodeId, NodeId)> {
    let tau = g.constant_scalar(temperature);
    let nz = g.constant(noise_z.clone());
    let na = g.constant(noise_a.clone());
    let sum_z = g.add(model.gamma_z, nz)?;
    let scaled_z = g.div(sum_z, tau)?;
    let relaxed_z = g.sigmoid(scaled_z)?;
    let sum_a = g.add(model.gamma_a, na)?;
    let scaled_a = g.div(sum_a, tau)?;
    let relaxed_a = g.sigmoid(scaled_a)?;
    Ok((relaxed_z, relaxed_a))
}

/// Masked per-latent transition prior.
///
/// Returns `(mean, logvar)` where column `i` of the mean comes from
/// `NN_i(M^z_i * z_prev, M^a_i * a_prev)` and the log-variance is the
/// learned input-independent per-latent vector.
pub fn prior_params_graph(
    g: &mut Graph,
    model: &BoundModel,
    z_prev: NodeId,
    a_prev: NodeId,
    relaxed_z: NodeId,
    relaxed_a: NodeId,
) -> Result<(NodeId, NodeId)> {
    let mut cols = Vec::with_capacity(model.trans.len());
    for (i, net) in model.trans.iter().enumerate() {
        let row_z = g.row(relaxed_z, i)?;
        let row_a = g.row(relaxed_a, i)?;
        let masked_z = g.mask_mul(z_prev, row_z)?;
        let masked_a = g.mask_mul(a_prev, row_a)?;
        let input = g.concat_cols(&[masked_z, masked_a])?;
        cols.push(mlp_graph_forward(g, net, input)?);
    }
    let mean = g.concat_cols(&cols)?;
    Ok((mean, model.prior_logvar))
}

/// Plain-tensor version of the prior mean, given fixed hard masks.
pub fn prior_mean(p: &ModelParams, z_prev: &Tensor, a_prev: &Tensor, masks: &MaskSample) -> Tensor {
    let b = z_prev.shape()[0];
    let (d_z, d_a) = (p.dims.d_z, p.dims.d_a);
    let mut mean = Tensor::zeros(&[b, d_z]);
    for i in 0..d_z {
        let mut input = Tensor::zeros(&[b, d_z + d_a]);
        for r in 0..b {
            for j in 0..d_z {
                input.set(r, j, z_prev.at(r, j) * masks.m_z.at(i, j));
            }
            for j in 0..d_a {
                input.set(r, d_z + j, a_prev.at(r, j) * masks.m_a.at(i, j));
            }
        }
        let out = p.trans[i].forward(&input);
        for r in 0..b {
            mean.set(r, i, out.at(r, 0));
        }
    }
    mean
}

/// Standard-normal parameters for the first timestep.
pub fn initial_prior(b: usize, d_z: usize) -> (Tensor, Tensor) {
    (Tensor::zeros(&[b, d_z]), Tensor::zeros(&[d_z]))
}

/// Reparameterized draw `z = mean + exp(logvar/2) * eps`.
pub fn reparam_graph(
    g: &mut Graph,
    mean: NodeId,
    logvar: NodeId,
    eps: &Tensor,
) -> Result<NodeId> {
    let half = g.constant_scalar(0.5);
    let half_lv = g.mul(logvar, half)?;
    let std = g.exp(half_lv)?;
    let e = g.constant(eps.clone());
    let scaled = g.mul(std, e)?;
    g.add(mean, scaled)
}

/// Closed-form KL between diagonal Gaussians, summed over dimensions.
pub fn kl_diag_gaussians(qm: &[f64], qlv: &[f64], pm: &[f64], plv: &[f64]) -> f64 {
    assert_eq!(qm.len(), qlv.len());
    assert_eq!(qm.len(), pm.len());
    assert_eq!(qm.len(), plv.len());
    let mut total = 0.0;
    for i in 0..qm.len() {
        let diff = qm[i] - pm[i];
        total += 0.5 * (plv[i] - qlv[i] + (qlv[i].exp() + diff * diff) / plv[i].exp() - 1.0);
    }
    total
}

/// Graph KL elements `(B, d_z)`; `p_logvar` may be a `(d_z,)` row vector.
pub fn kl_graph(
    g: &mut Graph,
    q_mean: NodeId,
    q_logvar: NodeId,
    p_mean: NodeId,
    p_logvar: NodeId,
) -> Result<NodeId> {
    let neg_qlv = g.neg(q_logvar)?;
    let lv_term = g.add(neg_qlv, p_logvar)?;
    let diff = g.sub(q_mean, p_mean)?;
    let diff_sq = g.mul(diff, diff)?;
    let var_q = g.exp(q_logvar)?;
    let num = g.add(var_q, diff_sq)?;
    let var_p = g.exp(p_logvar)?;
    let ratio = g.div(num, var_p)?;
    let sum = g.add(lv_term, ratio)?;
    let one = g.constant_scalar(1.0);
    let centered = g.sub(sum, one)?;
    let half = g.constant_scalar(0.5);
    g.mul(centered, half)
}

// ── Checkpoints ──────────────────────────────────────────────────────

#[derive(Serialize, Deserialize)]
struct StoredTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub dims: ModelDims,
    pub arch: Architecture,
    pub sigma: f64,
    components: BTreeMap<String, StoredTensor>,
    /// Echo of the training configuration that produced the checkpoint.
    pub config: serde_json::Value,
}

fn component_names(p: &ModelParams) -> Vec<String> {
    let mut names = Vec::new();
    let mlp_names = |prefix: &str, mlp: &Mlp, names: &mut Vec<String>| {
        for k in 0..mlp.weights.len() {
            names.push(format!("{prefix}.w{k}"));
            names.push(format!("{prefix}.b{k}"));
        }
    };
    mlp_names("encoder", &p.encoder, &mut names);
    mlp_names("decoder", &p.decoder, &mut names);
    for (i, t) in p.trans.iter().enumerate() {
        mlp_names(&format!("trans{i}"), t, &mut names);
    }
    names.push("prior_logvar".into());
    names.push("gamma_z".into());
    names.push("gamma_a".into());
    names
}

impl Checkpoint {
    pub fn from_params(p: &ModelParams, config: serde_json::Value) -> Self {
        let names = component_names(p);
        let tensors = p.param_tensors();
        debug_assert_eq!(names.len(), tensors.len());
        let components = names
            .into_iter()
            .zip(tensors)
            .map(|(n, t)| (n, StoredTensor { shape: t.shape().to_vec(), data: t.data().to_vec() }))
            .collect();
        Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            dims: p.dims,
            arch: p.arch.clone(),
            sigma: p.sigma,
            components,
            config,
        }
    }

    pub fn into_params(self) -> Result<ModelParams> {
        let mut rng = Rng::new(0);
        let mut p = ModelParams::init(self.dims, self.arch.clone(), self.sigma, &mut rng);
        let names = component_names(&p);
        let mut tensors = p.param_tensors_mut();
        for (name, slot) in names.iter().zip(tensors.iter_mut()) {
            let stored = self.components.get(name).ok_or_else(|| {
                CoreError::format("checkpoint", format!("missing component {name}"))
            })?;
            if stored.shape != slot.shape() {
                return Err(CoreError::format(
                    "checkpoint",
                    format!("component {name}: shape {:?} vs {:?}", stored.shape, slot.shape()),
                ));
            }
            **slot = Tensor::new(stored.shape.clone(), stored.data.clone())?;
        }
        Ok(p)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self)
            .map_err(|e| CoreError::format(path.display().to_string(), e.to_string()))?;
        std::fs::write(path, json).map_err(|e| CoreError::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| CoreError::io(path.display().to_string(), e))?;
        let ckpt: Checkpoint = serde_json::from_str(&raw)
            .map_err(|e| CoreError::format(path.display().to_string(), e.to_string()))?;
        if ckpt.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(CoreError::format(
                path.display().to_string(),
                format!("format_version {} unsupported", ckpt.format_version),
            ));
        }
        Ok(ckpt)
    }
}
