use crate::config::Resolver;
use crate::{CheckArgs, EXIT_OK};
use mechdis_core::error::{CoreError, Result};
use mechdis_core::rng::Rng;
use mechdis_core::synth::{GroundTruthProcess, Variant};
use mechdis_core::theory::{
    check_action_criterion, check_action_variability_all, check_temporal_criterion,
    check_temporal_variability, load_graph,
};

pub fn run(args: CheckArgs) -> Result<u8> {
    let cfg = Resolver::load(args.config.as_ref())?;
    let probes = cfg.get(args.probes, "probes", 60);
    let verdict = match (&args.variant, &args.graph) {
        (Some(_), Some(_)) => {
            return Err(CoreError::Contract("use either --variant or --graph, not both".into()))
        }
        (Some(v), None) => {
            let variant: Variant = cfg.get(Some(v.clone()), "variant", v.clone()).parse()?;
            let d_z = cfg.get(args.dz, "dz", 5);
            let seed = cfg.seed(args.seed, 0);
            let process = GroundTruthProcess::generate(variant, d_z, 2 * d_z, seed)?;
            let mut rng = Rng::new(seed.wrapping_add(1));
            if variant.uses_actions() {
                let criterion = check_action_criterion(&process.graph_a);
                let variability =
                    check_action_variability_all(&process, &process.graph_a, probes, &mut rng)?;
                serde_json::json!({
                    "mode": "action",
                    "variant": variant.to_string(),
                    "d_z": d_z,
                    "satisfied": criterion.satisfied && variability.satisfied,
                    "criterion": criterion,
                    "variability": variability,
                })
            } else {
                let criterion = check_temporal_criterion(&process.graph_z);
                let variability =
                    check_temporal_variability(&process, &process.graph_z, probes, &mut rng)?;
                serde_json::json!({
                    "mode": "temporal",
                    "variant": variant.to_string(),
                    "d_z": d_z,
                    "satisfied": criterion.satisfied && variability.satisfied,
                    "criterion": criterion,
                    "variability": variability,
                })
            }
        }
        (None, Some(path)) => {
            let mode = cfg.require(args.mode, "mode")?;
            let graph = load_graph(path)?;
            match mode.as_str() {
                "action" => {
                    let criterion = check_action_criterion(&graph);
                    serde_json::json!({
                        "mode": "action",
                        "graph": path.display().to_string(),
                        "satisfied": criterion.satisfied,
                        "criterion": criterion,
                        "variability": null,
                    })
                }
                "temporal" => {
                    let criterion = check_temporal_criterion(&graph);
                    serde_json::json!({
                        "mode": "temporal",
                        "graph": path.display().to_string(),
                        "satisfied": criterion.satisfied,
                        "criterion": criterion,
                        "variability": null,
                    })
                }
                other => {
                    return Err(CoreError::Contract(format!(
                        "--mode must be action or temporal, got '{other}'"
                    )))
                }
            }
        }
        (None, None) => {
            return Err(CoreError::Contract("check needs --variant or --graph".into()))
        }
    };
    println!("{}", serde_json::to_string_pretty(&verdict).expect("verdict serializes"));
    Ok(EXIT_OK)
}
