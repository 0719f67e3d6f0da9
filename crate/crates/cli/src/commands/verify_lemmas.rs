use crate::config::Resolver;
use crate::{VerifyLemmasArgs, EXIT_COUNTEREXAMPLE, EXIT_OK};
use mechdis_core::bipartite::BipartiteGraph;
use mechdis_core::error::Result;
use mechdis_core::rng::Rng;
use mechdis_core::synth::{adjacency, Variant};
use mechdis_core::theory::{verify_lemma_action, verify_lemma_temporal};

pub fn run(args: VerifyLemmasArgs) -> Result<u8> {
    let cfg = Resolver::load(args.config.as_ref())?;
    let dim = cfg.get(args.dim, "dim", 3);
    let trials = cfg.get(args.trials, "trials", 200);
    let seed = cfg.seed(args.seed, 0);

    // action patterns: the diagonal always satisfies the criterion; the
    // circulant band needs dim >= 3 (at dim 2 it degenerates to complete)
    let mut action_patterns: Vec<(&str, BipartiteGraph)> =
        vec![("diagonal", BipartiteGraph::identity(dim))];
    if dim >= 3 {
        let (band, _) = adjacency(Variant::NonTrivialAction, dim, dim)?;
        action_patterns.push(("circulant-band", band));
    }
    let mut temporal_patterns: Vec<(&str, BipartiteGraph)> =
        vec![("diagonal", BipartiteGraph::identity(dim))];
    if dim >= 2 {
        let (_, band) = adjacency(Variant::NonTrivialTemporal, dim, dim)?;
        temporal_patterns.push(("upper-band", band));
    }

    let mut rng = Rng::new(seed);
    let mut any_counterexample = false;
    let mut summaries = Vec::new();
    for (name, pattern) in &action_patterns {
        let report = verify_lemma_action(pattern, trials, &mut rng)?;
        any_counterexample |= !report.passed();
        summaries.push(serde_json::json!({
            "lemma": "action",
            "pattern": name,
            "dim": dim,
            "trials": report.trials,
            "sparsity_preserving_seen": report.sparsity_preserving_seen,
            "counterexamples": report.counterexamples,
            "first_counterexample": report.first_counterexample,
        }));
    }
    for (name, pattern) in &temporal_patterns {
        let report = verify_lemma_temporal(pattern, trials, &mut rng)?;
        any_counterexample |= !report.passed();
        summaries.push(serde_json::json!({
            "lemma": "temporal",
            "pattern": name,
            "dim": dim,
            "trials": report.trials,
            "sparsity_preserving_seen": report.sparsity_preserving_seen,
            "counterexamples": report.counterexamples,
            "first_counterexample": report.first_counterexample,
        }));
    }
    println!(
        "{}",
        serde_json::to_string_pretty(&serde_json::json!({
            "dim": dim,
            "trials": trials,
            "seed": seed,
            "passed": !any_counterexample,
            "lemmas": summaries,
        }))
        .expect("summary serializes")
    );
    Ok(if any_counterexample { EXIT_COUNTEREXAMPLE } else { EXIT_OK })
}
