use crate::config::{ensure_dir, Resolver};
use crate::{TrainArgs, EXIT_OK};
use mechdis_core::error::{CoreError, Result};
use mechdis_core::metrics::evaluate;
use mechdis_core::model::{Architecture, Checkpoint, ModelParams};
use mechdis_core::synth::load_dataset;
use mechdis_core::train::{train, train_supervised, TrainConfig, TrainLog};
use std::path::Path;

pub fn resolve_train_config(cfg: &Resolver, args: &TrainArgs) -> TrainConfig {
    let defaults = TrainConfig::default();
    let arch_defaults = Architecture::default();
    TrainConfig {
        alpha_a: cfg.get(args.alpha_a, "alpha-a", defaults.alpha_a),
        alpha_z: cfg.get(args.alpha_z, "alpha-z", defaults.alpha_z),
        lr: cfg.get(args.lr, "lr", defaults.lr),
        epochs: cfg.get(args.epochs, "epochs", defaults.epochs),
        batch_size: cfg.get(args.batch_size, "batch-size", defaults.batch_size),
        seed: cfg.seed(args.seed, defaults.seed),
        temperature: cfg.get(args.temperature, "temperature", defaults.temperature),
        log_every: cfg.get(args.log_every, "log-every", defaults.log_every),
        checkpoint_every: cfg.get(args.checkpoint_every, "checkpoint-every", defaults.checkpoint_every),
        holdout_frac: cfg.get(args.holdout, "holdout", defaults.holdout_frac),
        arch: Architecture {
            enc_hidden: cfg.get(args.enc_hidden, "enc-hidden", arch_defaults.enc_hidden),
            enc_layers: cfg.get(args.enc_layers, "enc-layers", arch_defaults.enc_layers),
            trans_hidden: cfg.get(args.trans_hidden, "trans-hidden", arch_defaults.trans_hidden),
            trans_layers: cfg.get(args.trans_layers, "trans-layers", arch_defaults.trans_layers),
            ..arch_defaults
        },
    }
}

pub fn write_run_outputs(
    out: &Path,
    params: &ModelParams,
    log: &TrainLog,
    data: &mechdis_core::synth::SequenceBatch,
    meta: &mechdis_core::synth::DatasetMeta,
    config: &TrainConfig,
) -> Result<()> {
    ensure_dir(out)?;
    Checkpoint::from_params(params, config.echo_json()).save(&out.join("checkpoint.json"))?;
    log.write_csv(&out.join("log.csv"))?;
    let report = evaluate(data, meta, params, config)?;
    std::fs::write(out.join("report.json"), report.to_json())
        .map_err(|e| CoreError::io(out.join("report.json").display().to_string(), e))?;
    Ok(())
}

pub fn run(args: TrainArgs) -> Result<u8> {
    let cfg = Resolver::load(args.config.as_ref())?;
    let data_dir = cfg.path(args.data.clone(), "data")?;
    let out = cfg.path(args.out.clone(), "out")?;
    let supervised = args.supervised;
    let config = resolve_train_config(&cfg, &args);
    config.validate()?;
    let (data, meta) = load_dataset(&data_dir)?;

    if supervised {
        let params = train_supervised(&data, meta.sigma, &config)?;
        write_run_outputs(&out, &params, &TrainLog::default(), &data, &meta, &config)?;
    } else {
        ensure_dir(&out)?;
        let outcome = train(&data, meta.sigma, &config, Some(&out))?;
        write_run_outputs(&out, &outcome.params, &outcome.log, &data, &meta, &config)?;
    }
    println!("run complete: {}", out.display());
    Ok(EXIT_OK)
}
