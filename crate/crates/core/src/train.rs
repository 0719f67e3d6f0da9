//! Regularized ELBO objective and the training loop.
//!
//! The objective maximized per minibatch of whole sequences is
//!
//! ```text
//! mean_seq [ sum_t log p(x^t|z^t) - sum_t KL(q(z^t|x^t) || p(z^t|z^{t-1}, a^{t-1})) ]
//!   - alpha_a * ||M^a||_1 - alpha_z * ||M^z||_1
//! ```
//!
//! with single-sample reparameterized estimates of both expectations, the
//! `t = 1` KL taken against a standard-normal prior, and hard mask samples
//! whose gradients flow straight-through to the logits.

use crate::adam::{AdamConfig, AdamState};
use crate::error::{CoreError, Result};
use crate::model::{
    bind_model, decode_graph, encode_graph, initial_prior, kl_graph, mask_nodes,
    prior_params_graph, reparam_graph, Architecture, Checkpoint, MaskSample, ModelDims,
    ModelParams,
};
use crate::rng::Rng;
use crate::synth::SequenceBatch;
use crate::tape::Graph;
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::time::Instant;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainConfig {
    pub alpha_a: f64,
    pub alpha_z: f64,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub temperature: f64,
    pub log_every: usize,
    /// Checkpoint every N epochs in addition to the end; 0 disables.
    pub checkpoint_every: usize,
    /// Fraction of sequences held out for evaluation.
    pub holdout_frac: f64,
    pub arch: Architecture,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            alpha_a: 0.0,
            alpha_z: 0.0,
            lr: 0.0005,
            epochs: 100,
            batch_size: 256,
            seed: 0,
            temperature: 1.0,
            log_every: 1,
            checkpoint_every: 0,
            holdout_frac: 0.1,
            arch: Architecture::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alpha_a < 0.0 || self.alpha_z < 0.0 {
            return Err(CoreError::Contract("alpha coefficients must be nonnegative".into()));
        }
        if self.lr <= 0.0 || self.batch_size == 0 {
            return Err(CoreError::Contract("lr and batch size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.holdout_frac) {
            return Err(CoreError::Contract("holdout_frac must be in [0, 1)".into()));
        }
        if self.temperature <= 0.0 {
            return Err(CoreError::Contract("temperature must be positive".into()));
        }
        Ok(())
    }

    pub fn echo_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

/// Deterministic split: the trailing fraction of sequences is held out.
pub fn split_indices(n_seq: usize, holdout_frac: f64) -> (Vec<usize>, Vec<usize>) {
    let n_test = ((n_seq as f64 * holdout_frac).round() as usize).min(n_seq.saturating_sub(1));
    let n_train = n_seq - n_test;
    ((0..n_train).collect(), (n_train..n_seq).collect())
}

#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct ElboParts {
    /// Per-sequence ELBO (reconstruction minus KL).
    pub elbo: f64,
    pub recon: f64,
    pub kl: f64,
    /// `alpha_a * ||M^a||_1 + alpha_z * ||M^z||_1` for the masks in force.
    pub penalty: f64,
    /// `elbo - penalty`, the quantity being maximized.
    pub objective: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct LogRow {
    pub epoch: usize,
    pub elbo: f64,
    pub recon: f64,
    pub kl: f64,
    pub penalty: f64,
    pub mask_density_a: f64,
    pub mask_density_z: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct TrainLog {
    pub rows: Vec<LogRow>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("epoch,elbo,recon,kl,penalty,mask_density_a,mask_density_z,seconds\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{:.3}\n",
                r.epoch, r.elbo, r.recon, r.kl, r.penalty, r.mask_density_a, r.mask_density_z,
                r.seconds
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| CoreError::io(path.display().to_string(), e))
    }
}

/// Gaussian log-density constant for one observation vector.
fn log_norm_const(d_x: usize, sigma: f64) -> f64 {
    -(d_x as f64) * 0.5 * (2.0 * std::f64::consts::PI * sigma * sigma).ln()
}

enum MaskMode<'a> {
    /// Sample inside the graph from the logits (training path).
    Sampled { noise_z: Tensor, noise_a: Tensor, temperature: f64 },
    /// Fixed hard masks as constants (evaluation path).
    Fixed(&'a MaskSample),
}

struct BatchObjective {
    elbo: f64,
    recon: f64,
    kl: f64,
    penalty: f64,
}

/// Build the per-batch objective graph and return the node to maximize plus
/// its decomposition. `xs`/`as_` hold one `(B, dim)` tensor per timestep.
fn build_objective(
    g: &mut Graph,
    params: &ModelParams,
    xs: &[Tensor],
    as_: &[Tensor],
    eps: &[Tensor],
    mask_mode: MaskMode,
    alpha_a: f64,
    alpha_z: f64,
) -> Result<(crate::tape::NodeId, BatchObjective, crate::tape::NodeId, super::model::BoundModel)>
{
    let t_len = xs.len();
    let b = xs[0].shape()[0];
    let d_z = params.dims.d_z;
    let model = bind_model(g, params);

    let (relaxed_z, relaxed_a) = match mask_mode {
        MaskMode::Sampled { ref noise_z, ref noise_a, temperature } => {
            mask_nodes(g, &model, noise_z, noise_a, temperature)?
        }
        MaskMode::Fixed(masks) => {
            // hard values stand in for the relaxed ones; mask_mul thresholds
            // them back to the same hard values, and no logit gradient flows
            (g.constant(masks.m_z.clone()), g.constant(masks.m_a.clone()))
        }
    };

    let mut recon_nodes = Vec::with_capacity(t_len);
    let mut kl_nodes = Vec::with_capacity(t_len);
    let mut q_means = Vec::with_capacity(t_len);
    let mut q_logvars = Vec::with_capacity(t_len);
    let mut z_samples = Vec::with_capacity(t_len);

    for t in 0..t_len {
        let x = g.constant(xs[t].clone());
        let (qm, qlv) = encode_graph(g, &model, x, d_z)?;
        let z = reparam_graph(g, qm, qlv, &eps[t])?;
        q_means.push(qm);
        q_logvars.push(qlv);
        z_samples.push(z);

        let xhat = decode_graph(g, &model, z)?;
        let resid = g.sub(x, xhat)?;
        let sq = g.mul(resid, resid)?;
        let ssq = g.sum(sq)?;
        let scale = g.constant_scalar(-1.0 / (2.0 * params.sigma * params.sigma));
        let quad = g.mul(ssq, scale)?;
        let offset = g.constant_scalar(b as f64 * log_norm_const(params.dims.d_x, params.sigma));
        recon_nodes.push(g.add(quad, offset)?);

        if t == 0 {
            let (pm0, plv0) = initial_prior(b, d_z);
            let pm = g.constant(pm0);
            let plv = g.constant(plv0);
            let elems = kl_graph(g, qm, qlv, pm, plv)?;
            kl_nodes.push(g.sum(elems)?);
        } else {
            let a_prev = g.constant(as_[t - 1].clone());
            let (pmean, plogvar) =
                prior_params_graph(g, &model, z_samples[t - 1], a_prev, relaxed_z, relaxed_a)?;
            let elems = kl_graph(g, qm, qlv, pmean, plogvar)?;
            kl_nodes.push(g.sum(elems)?);
        }
    }

    let mut recon_total = recon_nodes[0];
    for &r in &recon_nodes[1..] {
        recon_total = g.add(recon_total, r)?;
    }
    let mut kl_total = kl_nodes[0];
    for &k in &kl_nodes[1..] {
        kl_total = g.add(kl_total, k)?;
    }
    let elbo_sum = g.sub(recon_total, kl_total)?;
    let inv_b = g.constant_scalar(1.0 / b as f64);
    let elbo_mean = g.mul(elbo_sum, inv_b)?;

    // straight-through L1 penalties on the hard masks
    let ones_z = g.constant(Tensor::full(&[d_z, d_z], 1.0));
    let ones_a = g.constant(Tensor::full(&[d_z, params.dims.d_a], 1.0));
    let hard_z = g.mask_mul(ones_z, relaxed_z)?;
    let hard_a = g.mask_mul(ones_a, relaxed_a)?;
    let norm_z = g.sum(hard_z)?;
    let norm_a = g.sum(hard_a)?;
    let ca = g.constant_scalar(alpha_a);
    let cz = g.constant_scalar(alpha_z);
    let pen_a = g.mul(norm_a, ca)?;
    let pen_z = g.mul(norm_z, cz)?;
    let penalty = g.add(pen_a, pen_z)?;
    let objective = g.sub(elbo_mean, penalty)?;

    let parts = BatchObjective {
        elbo: g.value(elbo_mean).item(),
        recon: g.value(recon_total).item() / b as f64,
        kl: g.value(kl_total).item() / b as f64,
        penalty: g.value(penalty).item(),
    };
    Ok((objective, parts, elbo_mean, model))
}

fn batch_tensors(data: &SequenceBatch, seqs: &[usize]) -> (Vec<Tensor>, Vec<Tensor>) {
    let t_len = data.t_len();
    let xs: Vec<Tensor> = (0..t_len).map(|t| data.x.gather_t(seqs, t)).collect();
    let as_: Vec<Tensor> = (0..t_len).map(|t| data.a.gather_t(seqs, t)).collect();
    (xs, as_)
}

fn draw_eps(b: usize, d_z: usize, t_len: usize, rng: &mut Rng) -> Vec<Tensor> {
    (0..t_len).map(|_| Tensor::from_fn(&[b, d_z], |_| rng.normal())).collect()
}

/// Single-sample ELBO estimate over the given sequences with fixed masks,
/// averaged per sequence. The evaluation analogue of the training objective.
pub fn elbo(
    data: &SequenceBatch,
    seqs: &[usize],
    params: &ModelParams,
    masks: &MaskSample,
    alpha_a: f64,
    alpha_z: f64,
    rng: &mut Rng,
) -> Result<ElboParts> {
    let chunk = 512;
    let mut acc = ElboParts::default();
    let mut seen = 0usize;
    for chunk_seqs in seqs.chunks(chunk) {
        let (xs, as_) = batch_tensors(data, chunk_seqs);
        let eps = draw_eps(chunk_seqs.len(), params.dims.d_z, data.t_len(), rng);
        let mut g = Graph::new();
        let (_obj, parts, _elbo, _model) = build_objective(
            &mut g,
            params,
            &xs,
            &as_,
            &eps,
            MaskMode::Fixed(masks),
            alpha_a,
            alpha_z,
        )?;
        let w = chunk_seqs.len() as f64;
        acc.elbo += parts.elbo * w;
        acc.recon += parts.recon * w;
        acc.kl += parts.kl * w;
        acc.penalty = parts.penalty;
        seen += chunk_seqs.len();
    }
    let n = seen as f64;
    acc.elbo /= n;
    acc.recon /= n;
    acc.kl /= n;
    acc.objective = acc.elbo - acc.penalty;
    Ok(acc)
}

/// Externally supplied noise for one objective evaluation, so the same
/// stochastic objective can be recomputed under parameter perturbations.
pub struct FixedNoise {
    pub eps: Vec<Tensor>,
    pub noise_z: Tensor,
    pub noise_a: Tensor,
}

impl FixedNoise {
    pub fn draw(b: usize, d_z: usize, d_a: usize, t_len: usize, rng: &mut Rng) -> Self {
        FixedNoise {
            eps: draw_eps(b, d_z, t_len, rng),
            noise_z: crate::model::gumbel_diff(&[d_z, d_z], rng),
            noise_a: crate::model::gumbel_diff(&[d_z, d_a], rng),
        }
    }
}

/// One deterministic objective evaluation with gradients, given fixed noise.
/// Gradients come back in canonical parameter order. Mask logits receive
/// straight-through gradients, which by construction have no
/// finite-difference counterpart.
pub fn objective_with_fixed_noise(
    data: &SequenceBatch,
    seqs: &[usize],
    params: &ModelParams,
    noise: &FixedNoise,
    alpha_a: f64,
    alpha_z: f64,
    temperature: f64,
) -> Result<(f64, Vec<Tensor>)> {
    let (xs, as_) = batch_tensors(data, seqs);
    let mut g = Graph::new();
    let (objective, _parts, _elbo, model) = build_objective(
        &mut g,
        params,
        &xs,
        &as_,
        &noise.eps,
        MaskMode::Sampled {
            noise_z: noise.noise_z.clone(),
            noise_a: noise.noise_a.clone(),
            temperature,
        },
        alpha_a,
        alpha_z,
    )?;
    let value = g.value(objective).item();
    let mut grads = g.backward(objective)?;
    Ok((value, model.collect_grads(&mut grads, params)))
}

pub struct TrainOutcome {
    pub params: ModelParams,
    pub log: TrainLog,
}

/// Train the masked sequential VAE. Deterministic given `(data, config)`.
///
/// If `checkpoint_dir` is set, a checkpoint is written at the configured
/// cadence and at the end; on a numeric failure the last good parameters are
/// saved there before the error is returned.
pub fn train(
    data: &SequenceBatch,
    sigma: f64,
    config: &TrainConfig,
    checkpoint_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    config.validate()?;
    let dims = ModelDims { d_x: data.x.dim, d_z: infer_d_z(data, config), d_a: data.a.dim };
    let mut rng = Rng::new(config.seed);
    let mut params = ModelParams::init(dims, config.arch.clone(), sigma, &mut rng);
    let mut adam = AdamState::new(&params.param_tensors(), AdamConfig::with_lr(config.lr));
    let (train_seqs, _) = split_indices(data.n_seq(), config.holdout_frac);
    let mut log = TrainLog::default();
    let started = Instant::now();

    let save_ckpt = |params: &ModelParams, dir: Option<&Path>| -> Result<()> {
        if let Some(dir) = dir {
            std::fs::create_dir_all(dir).map_err(|e| CoreError::io(dir.display().to_string(), e))?;
            Checkpoint::from_params(params, config.echo_json()).save(&dir.join("checkpoint.json"))?;
        }
        Ok(())
    };

    for epoch in 0..config.epochs {
        let mut order = train_seqs.clone();
        rng.shuffle(&mut order);
        let mut epoch_parts = ElboParts::default();
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let (xs, as_) = batch_tensors(data, chunk);
            let eps = draw_eps(chunk.len(), dims.d_z, data.t_len(), &mut rng);
            let noise_z = crate::model::gumbel_diff(&[dims.d_z, dims.d_z], &mut rng);
            let noise_a = crate::model::gumbel_diff(&[dims.d_z, dims.d_a], &mut rng);
            let step = (|| -> Result<BatchObjective> {
                let mut g = Graph::new();
                let (objective, parts, _elbo, model) = build_objective(
                    &mut g,
                    &params,
                    &xs,
                    &as_,
                    &eps,
                    MaskMode::Sampled {
                        noise_z,
                        noise_a,
                        temperature: config.temperature,
                    },
                    config.alpha_a,
                    config.alpha_z,
                )?;
                let mut grads = g.backward(objective)?;
                let mut grad_vec = model.collect_grads(&mut grads, &params);
                // ascent on the objective
                for t in grad_vec.iter_mut() {
                    for v in t.data_mut() {
                        *v = -*v;
                    }
                }
                adam.step(&mut params.param_tensors_mut(), &grad_vec)?;
                Ok(parts)
            })();
            match step {
                Ok(parts) => {
                    epoch_parts.elbo += parts.elbo;
                    epoch_parts.recon += parts.recon;
                    epoch_parts.kl += parts.kl;
                    epoch_parts.penalty += parts.penalty;
                    batches += 1;
                }
                Err(e) => {
                    // params were not corrupted (updates abort before mutation)
                    save_ckpt(&params, checkpoint_dir)?;
                    return Err(e);
                }
            }
        }
        let inv = 1.0 / batches.max(1) as f64;
        let (dens_a, dens_z) = params.mask_densities();
        if config.log_every > 0 && (epoch + 1) % config.log_every == 0 {
            log.rows.push(LogRow {
                epoch: epoch + 1,
                elbo: epoch_parts.elbo * inv,
                recon: epoch_parts.recon * inv,
                kl: epoch_parts.kl * inv,
                penalty: epoch_parts.penalty * inv,
                mask_density_a: dens_a,
                mask_density_z: dens_z,
                seconds: started.elapsed().as_secs_f64(),
            });
        }
        if config.checkpoint_every > 0 && (epoch + 1) % config.checkpoint_every == 0 {
            save_ckpt(&params, checkpoint_dir)?;
        }
    }
    save_ckpt(&params, checkpoint_dir)?;
    Ok(TrainOutcome { params, log })
}

fn infer_d_z(data: &SequenceBatch, _config: &TrainConfig) -> usize {
    // the learned latent dimension always matches the ground truth
    data.z.as_ref().map(|z| z.dim).unwrap_or(data.a.dim)
}

/// Train the encoder alone with mean-squared error against the true latents.
pub fn train_supervised(
    data: &SequenceBatch,
    sigma: f64,
    config: &TrainConfig,
) -> Result<ModelParams> {
    config.validate()?;
    let z_truth = data
        .z
        .as_ref()
        .ok_or_else(|| CoreError::Contract("supervised baseline needs ground-truth z".into()))?;
    let dims = ModelDims { d_x: data.x.dim, d_z: z_truth.dim, d_a: data.a.dim };
    let mut rng = Rng::new(config.seed);
    let mut params = ModelParams::init(dims, config.arch.clone(), sigma, &mut rng);
    let mut adam = AdamState::new(&params.param_tensors(), AdamConfig::with_lr(config.lr));
    let (train_seqs, _) = split_indices(data.n_seq(), config.holdout_frac);
    for _epoch in 0..config.epochs {
        let mut order = train_seqs.clone();
        rng.shuffle(&mut order);
        for chunk in order.chunks(config.batch_size) {
            let mut g = Graph::new();
            let model = bind_model(&mut g, &params);
            let mut loss_total = None;
            for t in 0..data.t_len() {
                let x = g.constant(data.x.gather_t(chunk, t));
                let zt = g.constant(z_truth.gather_t(chunk, t));
                let (qm, _qlv) = encode_graph(&mut g, &model, x, dims.d_z)?;
                let diff = g.sub(qm, zt)?;
                let sq = g.mul(diff, diff)?;
                let m = g.mean(sq)?;
                loss_total = Some(match loss_total {
                    None => m,
                    Some(prev) => g.add(prev, m)?,
                });
            }
            let loss = loss_total.expect("at least one timestep");
            let mut grads = g.backward(loss)?;
            let grad_vec = model.collect_grads(&mut grads, &params);
            adam.step(&mut params.param_tensors_mut(), &grad_vec)?;
        }
    }
    Ok(params)
}

/// An untrained encoder with the same architecture.
pub fn random_model(data: &SequenceBatch, sigma: f64, config: &TrainConfig) -> Result<ModelParams> {
    let d_z = data
        .z
        .as_ref()
        .map(|z| z.dim)
        .ok_or_else(|| CoreError::Contract("random baseline needs ground-truth z dims".into()))?;
    let dims = ModelDims { d_x: data.x.dim, d_z, d_a: data.a.dim };
    let mut rng = Rng::new(config.seed);
    Ok(ModelParams::init(dims, config.arch.clone(), sigma, &mut rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::sample_masks;
    use crate::synth::{generate_dataset, Variant};

    fn small_config() -> TrainConfig {
        TrainConfig {
            epochs: 2,
            batch_size: 8,
            arch: Architecture {
                enc_hidden: 16,
                enc_layers: 2,
                trans_hidden: 8,
                trans_layers: 2,
                slope: 0.2,
                gamma_init: 2.0,
            },
            ..TrainConfig::default()
        }
    }

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let (train, test) = split_indices(100, 0.1);
        assert_eq!(train.len(), 90);
        assert_eq!(test.len(), 10);
        assert_eq!(test[0], 90);
        let (t2, _) = split_indices(100, 0.1);
        assert_eq!(train, t2);
    }

    #[test]
    fn zero_alpha_objective_equals_elbo() {
        let (data, meta, _) = generate_dataset(Variant::TrivialAction, 2, 4, 30, 2, 1).unwrap();
        let cfg = small_config();
        let mut rng = Rng::new(5);
        let params = random_model(&data, meta.sigma, &cfg).unwrap();
        let masks = sample_masks(&params.gamma_z, &params.gamma_a, 1.0, &mut rng);
        let seqs: Vec<usize> = (0..10).collect();
        let parts = elbo(&data, &seqs, &params, &masks, 0.0, 0.0, &mut Rng::new(7)).unwrap();
        assert_eq!(parts.penalty, 0.0);
        assert_eq!(parts.objective, parts.elbo);
    }

    #[test]
    fn all_ones_masks_penalty_counts_edges() {
        let (data, meta, _) = generate_dataset(Variant::TrivialAction, 5, 10, 20, 2, 2).unwrap();
        let cfg = TrainConfig { arch: small_config().arch, ..TrainConfig::default() };
        let params = random_model(&data, meta.sigma, &cfg).unwrap();
        let masks = MaskSample {
            m_z: Tensor::full(&[5, 5], 1.0),
            m_a: Tensor::full(&[5, 5], 1.0),
            relaxed_z: Tensor::full(&[5, 5], 0.9),
            relaxed_a: Tensor::full(&[5, 5], 0.9),
        };
        let seqs: Vec<usize> = (0..8).collect();
        let parts = elbo(&data, &seqs, &params, &masks, 1.0, 0.0, &mut Rng::new(3)).unwrap();
        assert_eq!(parts.penalty, 25.0);
    }

    #[test]
    fn decomposition_sums_to_total() {
        let (data, meta, _) = generate_dataset(Variant::NonTrivialAction, 3, 6, 16, 2, 4).unwrap();
        let cfg = small_config();
        let params = random_model(&data, meta.sigma, &cfg).unwrap();
        let mut rng = Rng::new(9);
        let masks = sample_masks(&params.gamma_z, &params.gamma_a, 1.0, &mut rng);
        let seqs: Vec<usize> = (0..16).collect();
        let parts = elbo(&data, &seqs, &params, &masks, 0.01, 0.02, &mut rng).unwrap();
        assert!((parts.elbo - (parts.recon - parts.kl)).abs() < 1e-12);
        assert!((parts.objective - (parts.elbo - parts.penalty)).abs() < 1e-12);
    }

    #[test]
    fn matched_prior_toy_has_zero_kl() {
        // d_z = d_x = 1, identity encoder mean with logvar matching the
        // prior logvar, all-zero masks so the prior mean is constant zero
        let mut rng = Rng::new(11);
        let dims = ModelDims { d_x: 1, d_z: 1, d_a: 1 };
        let arch = Architecture {
            enc_hidden: 2,
            enc_layers: 1,
            trans_hidden: 2,
            trans_layers: 1,
            slope: 0.2,
            gamma_init: -5.0,
        };
        let mut params = ModelParams::init(dims, arch, 0.1, &mut rng);
        // zero encoder: q = N(0, 1) for every x
        for w in params.encoder.weights.iter_mut() {
            *w = Tensor::zeros(w.shape());
        }
        for b in params.encoder.biases.iter_mut() {
            *b = Tensor::zeros(b.shape());
        }
        // zero transition nets and prior logvar: prior = N(0, 1) everywhere
        for net in params.trans.iter_mut() {
            for w in net.weights.iter_mut() {
                *w = Tensor::zeros(w.shape());
            }
            for b in net.biases.iter_mut() {
                *b = Tensor::zeros(b.shape());
            }
        }
        params.prior_logvar = Tensor::zeros(&[1]);
        let masks = MaskSample {
            m_z: Tensor::zeros(&[1, 1]),
            m_a: Tensor::zeros(&[1, 1]),
            relaxed_z: Tensor::zeros(&[1, 1]),
            relaxed_a: Tensor::zeros(&[1, 1]),
        };
        let (data, _, _) = generate_dataset(Variant::TrivialTemporal, 1, 1, 12, 2, 13).unwrap();
        let parts = elbo(&data, &[0, 1, 2, 3], &params, &masks, 0.0, 0.0, &mut rng).unwrap();
        assert!(parts.kl.abs() < 1e-12, "kl {}", parts.kl);
        assert!((parts.elbo - parts.recon).abs() < 1e-12);
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let (data, meta, _) = generate_dataset(Variant::TrivialAction, 2, 4, 16, 2, 6).unwrap();
        let mut cfg = small_config();
        cfg.epochs = 0;
        let out = train(&data, meta.sigma, &cfg, None).unwrap();
        let mut rng = Rng::new(cfg.seed);
        let dims = ModelDims { d_x: 4, d_z: 2, d_a: 2 };
        let fresh = ModelParams::init(dims, cfg.arch.clone(), meta.sigma, &mut rng);
        for (a, b) in out.params.param_tensors().iter().zip(fresh.param_tensors()) {
            assert_eq!(a.data(), b.data());
        }
        assert!(out.log.rows.is_empty());
    }

    #[test]
    fn training_is_bit_deterministic() {
        let (data, meta, _) = generate_dataset(Variant::TrivialAction, 2, 4, 24, 2, 7).unwrap();
        let cfg = small_config();
        let out1 = train(&data, meta.sigma, &cfg, None).unwrap();
        let out2 = train(&data, meta.sigma, &cfg, None).unwrap();
        for (a, b) in out1.params.param_tensors().iter().zip(out2.params.param_tensors()) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn penalty_gradient_pushes_density_down() {
        // with a huge alpha and no data signal, mask densities must drop
        let (data, meta, _) = generate_dataset(Variant::TrivialAction, 2, 4, 24, 2, 8).unwrap();
        let mut cfg = small_config();
        cfg.alpha_a = 5.0;
        cfg.alpha_z = 5.0;
        cfg.epochs = 10;
        cfg.lr = 0.05;
        let out = train(&data, meta.sigma, &cfg, None).unwrap();
        let (dens_a, dens_z) = out.params.mask_densities();
        let init = 1.0 / (1.0 + (-2.0_f64).exp());
        assert!(dens_a < init - 0.2, "density_a {dens_a}");
        assert!(dens_z < init - 0.2, "density_z {dens_z}");
    }

    #[test]
    fn elbo_improves_on_small_run() {
        for seed in [0, 1, 2] {
            let (data, meta, _) =
                generate_dataset(Variant::TrivialAction, 2, 4, 64, 2, 100 + seed).unwrap();
            let mut cfg = small_config();
            cfg.epochs = 30;
            cfg.seed = seed;
            cfg.lr = 0.003;
            let out = train(&data, meta.sigma, &cfg, None).unwrap();
            let first = out.log.rows.first().unwrap().elbo;
            let last = out.log.rows.last().unwrap().elbo;
            assert!(last > first, "seed {seed}: {first} -> {last}");
        }
    }
}
