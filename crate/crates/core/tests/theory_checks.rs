//! Variability rank checks against the actual generative processes, plus
//! scale invariance and the degenerate counterexamples.

use mechdis_core::bipartite::BipartiteGraph;
use mechdis_core::error::Result;
use mechdis_core::rng::Rng;
use mechdis_core::synth::{GroundTruthProcess, Variant};
use mechdis_core::theory::{
    check_action_criterion, check_action_variability, check_action_variability_all,
    check_temporal_criterion, check_temporal_variability, TransitionMean,
};

const PROBES: usize = 60;

#[test]
fn nt_a_has_full_action_variability() {
    let p = GroundTruthProcess::generate(Variant::NonTrivialAction, 5, 10, 0).unwrap();
    let mut rng = Rng::new(1);
    let report = check_action_variability_all(&p, &p.graph_a, PROBES, &mut rng).unwrap();
    assert!(report.satisfied, "{report:?}");
    for e in &report.entries {
        assert_eq!(e.rank, e.required);
        assert_eq!(e.required, 2, "each nt-a action has two children");
    }
}

#[test]
fn t_a_action_variability_rank_one_per_action() {
    let p = GroundTruthProcess::generate(Variant::TrivialAction, 4, 8, 2).unwrap();
    let mut rng = Rng::new(3);
    for l in 0..4 {
        let entry = check_action_variability(&p, &p.graph_a, l, PROBES, &mut rng).unwrap();
        assert!(entry.satisfied);
        assert_eq!(entry.rank, 1);
        assert_eq!(entry.required, 1);
    }
}

#[test]
fn nt_t_temporal_variability_spans_all_edges() {
    let p = GroundTruthProcess::generate(Variant::NonTrivialTemporal, 3, 6, 4).unwrap();
    assert_eq!(p.graph_z.edge_count(), 6);
    let mut rng = Rng::new(5);
    let report = check_temporal_variability(&p, &p.graph_z, PROBES, &mut rng).unwrap();
    assert!(report.satisfied, "{report:?}");
    assert_eq!(report.entries[0].rank, 6);
}

#[test]
fn t_t_temporal_variability_rank_d() {
    let p = GroundTruthProcess::generate(Variant::TrivialTemporal, 5, 10, 6).unwrap();
    let mut rng = Rng::new(7);
    let report = check_temporal_variability(&p, &p.graph_z, PROBES, &mut rng).unwrap();
    assert!(report.satisfied);
    assert_eq!(report.entries[0].rank, 5);
}

struct ConstantMu {
    d: usize,
}

impl TransitionMean for ConstantMu {
    fn d_z(&self) -> usize {
        self.d
    }
    fn d_a(&self) -> usize {
        self.d
    }
    fn mu(&self, z: &[f64], _a: &[f64]) -> Result<Vec<f64>> {
        Ok(z.to_vec())
    }
}

#[test]
fn action_insensitive_mean_has_rank_zero() {
    let m = ConstantMu { d: 3 };
    let graph = BipartiteGraph::identity(3);
    let mut rng = Rng::new(8);
    for l in 0..3 {
        let entry = check_action_variability(&m, &graph, l, PROBES, &mut rng).unwrap();
        assert_eq!(entry.rank, 0);
        assert!(!entry.satisfied);
    }
}

struct LinearMu {
    w: Vec<Vec<f64>>,
}

impl TransitionMean for LinearMu {
    fn d_z(&self) -> usize {
        self.w.len()
    }
    fn d_a(&self) -> usize {
        self.w.len()
    }
    fn mu(&self, z: &[f64], _a: &[f64]) -> Result<Vec<f64>> {
        Ok(self
            .w
            .iter()
            .map(|row| row.iter().zip(z).map(|(w, zj)| w * zj).sum())
            .collect())
    }
}

#[test]
fn linear_transition_spans_one_jacobian_direction() {
    // constant Jacobian: rank 1 regardless of probes; fails whenever |E| > 1
    let m = LinearMu { w: vec![vec![0.5, 0.2], vec![-0.3, 0.9]] };
    let full = BipartiteGraph::complete(2, 2);
    let mut rng = Rng::new(9);
    let report = check_temporal_variability(&m, &full, PROBES, &mut rng).unwrap();
    assert_eq!(report.entries[0].rank, 1);
    assert!(!report.satisfied);
}

struct Scaled<'a> {
    inner: &'a GroundTruthProcess,
    factor: f64,
}

impl TransitionMean for Scaled<'_> {
    fn d_z(&self) -> usize {
        self.inner.d_z
    }
    fn d_a(&self) -> usize {
        self.inner.d_a
    }
    fn mu(&self, z: &[f64], a: &[f64]) -> Result<Vec<f64>> {
        Ok(self.inner.transition_mean(z, a)?.into_iter().map(|v| v * self.factor).collect())
    }
}

#[test]
fn rank_verdicts_are_scale_invariant() {
    let p = GroundTruthProcess::generate(Variant::NonTrivialAction, 5, 10, 10).unwrap();
    for factor in [1e-4, 1.0, 1e4] {
        let scaled = Scaled { inner: &p, factor };
        let mut rng = Rng::new(11);
        let report = check_action_variability_all(&scaled, &p.graph_a, PROBES, &mut rng).unwrap();
        assert!(report.satisfied, "factor {factor}");
    }
    let t = GroundTruthProcess::generate(Variant::NonTrivialTemporal, 3, 6, 12).unwrap();
    for factor in [1e-4, 1.0, 1e4] {
        let scaled = Scaled { inner: &t, factor };
        let mut rng = Rng::new(13);
        let report = check_temporal_variability(&scaled, &t.graph_z, PROBES, &mut rng).unwrap();
        assert!(report.satisfied, "factor {factor}");
    }
}

#[test]
fn criteria_and_variability_hold_for_all_variants_and_dims() {
    for &d in &[3usize, 5] {
        for variant in Variant::ALL {
            let p = GroundTruthProcess::generate(variant, d, 2 * d, 20 + d as u64).unwrap();
            let mut rng = Rng::new(100 + d as u64);
            if variant.uses_actions() {
                let crit = check_action_criterion(&p.graph_a);
                assert!(crit.satisfied, "{variant} d={d} criterion");
                let rank = check_action_variability_all(&p, &p.graph_a, PROBES, &mut rng).unwrap();
                assert!(rank.satisfied, "{variant} d={d} variability: {rank:?}");
            } else {
                let crit = check_temporal_criterion(&p.graph_z);
                assert!(crit.satisfied, "{variant} d={d} criterion");
                let rank = check_temporal_variability(&p, &p.graph_z, PROBES, &mut rng).unwrap();
                assert!(rank.satisfied, "{variant} d={d} variability: {rank:?}");
            }
        }
    }
}

#[test]
fn criterion_verdicts_are_deterministic() {
    let (ma, _) = mechdis_core::synth::adjacency(Variant::NonTrivialAction, 5, 5).unwrap();
    let a = check_action_criterion(&ma);
    let b = check_action_criterion(&ma);
    assert_eq!(
        serde_json::to_string(&a).unwrap(),
        serde_json::to_string(&b).unwrap()
    );
}
