use crate::config::Resolver;
use crate::{EvalArgs, EXIT_OK};
use mechdis_core::error::{CoreError, Result};
use mechdis_core::metrics::evaluate;
use mechdis_core::model::Checkpoint;
use mechdis_core::synth::load_dataset;
use mechdis_core::train::TrainConfig;

pub fn run(args: EvalArgs) -> Result<u8> {
    let cfg = Resolver::load(args.config.as_ref())?;
    let ckpt_path = cfg.path(args.checkpoint, "checkpoint")?;
    let data_dir = cfg.path(args.data, "data")?;
    let ckpt = Checkpoint::load(&ckpt_path)?;
    let (data, meta) = load_dataset(&data_dir)?;

    if ckpt.dims.d_x != meta.d_x || ckpt.dims.d_z != meta.d_z || ckpt.dims.d_a != meta.d_a {
        return Err(CoreError::Contract(format!(
            "checkpoint dims (d_x={}, d_z={}, d_a={}) do not match dataset (d_x={}, d_z={}, d_a={})",
            ckpt.dims.d_x, ckpt.dims.d_z, ckpt.dims.d_a, meta.d_x, meta.d_z, meta.d_a
        )));
    }

    // evaluation knobs default to the training config echoed in the checkpoint
    let mut eval_config: TrainConfig =
        serde_json::from_value(ckpt.config.clone()).unwrap_or_default();
    if let Some(h) = args.holdout {
        eval_config.holdout_frac = h;
    }
    if let Some(s) = args.seed {
        eval_config.seed = s;
    }
    let params = ckpt.into_params()?;
    let report = evaluate(&data, &meta, &params, &eval_config)?;
    let json = report.to_json();
    match args.out {
        Some(path) => {
            std::fs::write(&path, json)
                .map_err(|e| CoreError::io(path.display().to_string(), e))?;
            println!("wrote {}", path.display());
        }
        None => println!("{json}"),
    }
    Ok(EXIT_OK)
}
