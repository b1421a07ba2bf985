//! Prune-retrain schedules: iterative multi-layer, layer-sequential and one-shot.

mod run;
mod trace;

pub use run::{evaluate, run, run_layer_sequential, run_oneshot, run_setup_a, ScheduleData};
pub use trace::{ScheduleTrace, TraceStep};

use serde::{Deserialize, Serialize};

use crate::saliency::{Metric, SaliencyConfig, SaliencyError};
use crate::surgeon::SurgeonError;
use crate::tensorcore::{TensorError, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "setup-a", alias = "iterative-multi-layer")]
    IterativeMultiLayer,
    #[serde(rename = "setup-b-seq", alias = "layer-sequential")]
    LayerSequential,
    #[serde(rename = "setup-b-greedy", alias = "one-shot")]
    OneShot,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::IterativeMultiLayer, Strategy::LayerSequential, Strategy::OneShot];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::IterativeMultiLayer => "setup-a",
            Strategy::LayerSequential => "setup-b-seq",
            Strategy::OneShot => "setup-b-greedy",
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Strategy {
    type Err = ScheduleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "setup-a" | "iterative-multi-layer" => Ok(Strategy::IterativeMultiLayer),
            "setup-b-seq" | "layer-sequential" => Ok(Strategy::LayerSequential),
            "setup-b-greedy" | "one-shot" | "oneshot" => Ok(Strategy::OneShot),
            _ => Err(ScheduleError::InvalidConfig(format!("unknown strategy {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleConfig {
    pub strategy: Strategy,
    pub metric: Metric,
    /// Per-layer pruning percentage.
    pub target_pct: f64,
    /// Upper bound on prune-retrain steps.
    pub max_iters: usize,
    /// Most filters removed per step by the layer-sequential schedule.
    pub step_cap: usize,
    /// Conv layer ids in the order the layer-sequential schedule visits them.
    pub layer_order: Option<Vec<usize>>,
    pub retrain_epochs_low: usize,
    pub retrain_epochs_high: usize,
    pub epoch_threshold_pct: f64,
    /// Batch size, learning rate and seed for retraining; `epochs` is ignored.
    pub retrain: TrainConfig,
    pub saliency: SaliencyConfig,
    /// Number of validation examples fed to APoZ; `None` uses all of them.
    pub apoz_samples: Option<usize>,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            strategy: Strategy::IterativeMultiLayer,
            metric: Metric::L1Norm,
            target_pct: 15.0,
            max_iters: 1000,
            step_cap: 1,
            layer_order: None,
            retrain_epochs_low: 10,
            retrain_epochs_high: 30,
            epoch_threshold_pct: 50.0,
            retrain: TrainConfig::default(),
            saliency: SaliencyConfig::default(),
            apoz_samples: None,
        }
    }
}

impl ScheduleConfig {
    pub fn validate(&self) -> Result<(), ScheduleError> {
        let bad = |m: String| Err(ScheduleError::InvalidConfig(m));
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1".into());
        }
        if !(0.0..100.0).contains(&self.target_pct) {
            return bad(format!("target_pct {} is outside [0, 100)", self.target_pct));
        }
        if self.step_cap == 0 {
            return bad("step_cap must be at least 1".into());
        }
        if self.retrain_epochs_low == 0 || self.retrain_epochs_high == 0 {
            return bad("retrain epochs must be at least 1".into());
        }
        if self.apoz_samples == Some(0) {
            return bad("apoz_samples must be at least 1".into());
        }
        let probe = TrainConfig { epochs: 1, ..self.retrain.clone() };
        probe.validate()?;
        Ok(())
    }

    /// Retraining epochs after each prune step: low below the threshold, high at or above it.
    pub fn retrain_epochs(&self) -> usize {
        if self.target_pct < self.epoch_threshold_pct {
            self.retrain_epochs_low
        } else {
            self.retrain_epochs_high
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ScheduleError {
    #[error("invalid schedule config: {0}")]
    InvalidConfig(String),
    #[error("pruning targets not reached within {max_iters} steps")]
    TargetUnreachable { max_iters: usize, trace: Box<ScheduleTrace> },
    #[error(transparent)]
    Saliency(#[from] SaliencyError),
    #[error(transparent)]
    Surgeon(#[from] SurgeonError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[cfg(test)]
pub(crate) mod tests {
    use std::collections::BTreeMap;

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::saliency::{score, select_counts};
    use crate::surgeon::apply_prune;
    use crate::tensorcore::{build, io, train, DenseLayer, Example, FeatureMap, Layer, LayerSpec, NetworkGraph, Padding, Shape};

    /// Two convs with 6 and 10 filters on 1x8x8 inputs.
    pub(crate) fn toy_net(seed: u64) -> NetworkGraph {
        let specs = [
            LayerSpec::Conv { filters: 6, kernel: 3, stride: 1, padding: Padding::Same },
            LayerSpec::Relu,
            LayerSpec::MaxPool { window: 2, stride: 2 },
            LayerSpec::Conv { filters: 10, kernel: 3, stride: 1, padding: Padding::Same },
            LayerSpec::Relu,
            LayerSpec::MaxPool { window: 2, stride: 2 },
            LayerSpec::Flatten,
            LayerSpec::Dense { units: 2 },
            LayerSpec::Softmax,
        ];
        build(Shape::new(1, 8, 8), &specs, seed).unwrap()
    }

    /// Class 0 lights the top half, class 1 the bottom half.
    pub(crate) fn halves(n: usize, seed: u64) -> Vec<Example> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let label = i % 2;
                let input = FeatureMap::from_fn(Shape::new(1, 8, 8), |_, y, _| {
                    let lit = (y < 4) == (label == 0);
                    (if lit { 1.0 } else { 0.0 }) + rng.random_range(-0.2..0.2)
                });
                Example { input, label }
            })
            .collect()
    }

    struct Fixture {
        model: NetworkGraph,
        train: Vec<Example>,
        val: Vec<Example>,
        test: Vec<Example>,
    }

    impl Fixture {
        fn new() -> Self {
            let mut model = toy_net(1);
            let train_set = halves(24, 2);
            train(&mut model, &train_set, &TrainConfig { epochs: 5, batch_size: 4, learning_rate: 0.05, seed: 0 }).unwrap();
            Fixture { model, train: train_set, val: halves(8, 3), test: halves(10, 4) }
        }

        fn data(&self) -> ScheduleData<'_> {
            ScheduleData { train: &self.train, val: &self.val, test: &self.test }
        }
    }

    fn cfg(strategy: Strategy, metric: Metric, p: f64) -> ScheduleConfig {
        ScheduleConfig {
            strategy,
            metric,
            target_pct: p,
            retrain: TrainConfig { epochs: 1, batch_size: 4, learning_rate: 0.02, seed: 9 },
            ..ScheduleConfig::default()
        }
    }

    fn deltas(t: &ScheduleTrace) -> Vec<usize> {
        t.steps.iter().map(|s| s.delta).collect()
    }

    #[test]
    fn setup_a_matches_hand_simulation() {
        let fx = Fixture::new();
        for metric in Metric::ALL {
            let c = cfg(Strategy::IterativeMultiLayer, metric, 50.0);
            let (pruned, trace) = run_setup_a(&fx.model, fx.data(), &c).unwrap();
            assert_eq!(trace.targets, BTreeMap::from([(0, 3), (3, 5)]));
            assert_eq!(deltas(&trace), vec![3, 2]);
            assert_eq!(trace.steps.iter().map(|s| s.retrain_epochs).collect::<Vec<_>>(), vec![30, 30]);

            // Hand-simulated loop: score the current model, cut δ per unfinished layer, retrain.
            let batch: Vec<FeatureMap> = fx.val.iter().map(|e| e.input.clone()).collect();
            let mut m = fx.model.clone();
            let mut hashes = vec![io::fingerprint(&m)];
            for (i, counts) in [BTreeMap::from([(0, 3), (3, 3)]), BTreeMap::from([(3, 2)])].into_iter().enumerate() {
                let table = score(metric, &m, &batch, &c.saliency).unwrap();
                let plan = select_counts(&table, &counts).unwrap();
                assert_eq!(plan.per_layer, trace.steps[i].plan.per_layer, "{metric} step {i}");
                m = apply_prune(&m, &plan).unwrap();
                train(&mut m, &fx.train, &TrainConfig { epochs: 30, seed: 9 + i as u64, ..c.retrain.clone() }).unwrap();
                hashes.push(io::fingerprint(&m));
            }
            assert_eq!(io::model_to_bytes(&pruned), io::model_to_bytes(&m));
            for (i, step) in trace.steps.iter().enumerate() {
                assert_eq!(step.saliency_source, hashes[i], "saliency of step {i} must come from the previous retrained model");
                assert_eq!(step.model_after, hashes[i + 1]);
            }
            assert_eq!(trace.baseline, hashes[0]);
        }
    }

    #[test]
    fn setup_a_single_step_when_every_layer_marks_one() {
        let fx = Fixture::new();
        // floor(0.17 * 6) = 1 and floor(0.17 * 10) = 1.
        let (_, trace) = run_setup_a(&fx.model, fx.data(), &cfg(Strategy::IterativeMultiLayer, Metric::L1Norm, 17.0)).unwrap();
        assert_eq!(deltas(&trace), vec![1]);
        assert_eq!((trace.prune_events(), trace.retrain_events()), (1, 1));
        assert_eq!(trace.steps[0].retrain_epochs, 10);
    }

    #[test]
    fn setup_a_reports_unreachable_targets() {
        let fx = Fixture::new();
        let c = ScheduleConfig { max_iters: 1, ..cfg(Strategy::IterativeMultiLayer, Metric::L1Norm, 50.0) };
        match run_setup_a(&fx.model, fx.data(), &c) {
            Err(ScheduleError::TargetUnreachable { max_iters: 1, trace }) => assert_eq!(deltas(&trace), vec![3]),
            other => panic!("expected TargetUnreachable, got {other:?}"),
        }
    }

    #[test]
    fn layer_sequential_step_counts() {
        let fx = Fixture::new();
        let c = cfg(Strategy::LayerSequential, Metric::Apoz, 30.0);
        let (seq, trace) = run_layer_sequential(&fx.model, fx.data(), &c).unwrap();
        // Targets 1 and 3 with Δ = 1: one step on layer 0, then three on layer 3.
        let layers: Vec<Vec<usize>> = trace.steps.iter().map(|s| s.plan.per_layer.keys().copied().collect()).collect();
        assert_eq!(layers, vec![vec![0], vec![3], vec![3], vec![3]]);
        assert_eq!(deltas(&trace), vec![1; 4]);

        let wide = ScheduleConfig { step_cap: 10, ..c.clone() };
        let (_, t) = run_layer_sequential(&fx.model, fx.data(), &wide).unwrap();
        assert_eq!(deltas(&t), vec![1, 3]);

        let reversed = ScheduleConfig { layer_order: Some(vec![3, 0]), ..c.clone() };
        let (rev, t) = run_layer_sequential(&fx.model, fx.data(), &reversed).unwrap();
        assert_eq!(t.steps[0].plan.per_layer.keys().copied().collect::<Vec<_>>(), vec![3]);
        assert_ne!(t.steps, trace.steps);
        assert_eq!(rev.shapes().unwrap(), seq.shapes().unwrap());

        let bad = ScheduleConfig { layer_order: Some(vec![0]), ..c };
        assert!(matches!(run_layer_sequential(&fx.model, fx.data(), &bad), Err(ScheduleError::InvalidConfig(_))));
    }

    #[test]
    fn oneshot_single_event_and_shared_shape() {
        let fx = Fixture::new();
        for p in [30.0, 50.0, 70.0] {
            let (one, t1) = run_oneshot(&fx.model, fx.data(), &cfg(Strategy::OneShot, Metric::KMeansDist, p)).unwrap();
            assert_eq!((t1.prune_events(), t1.retrain_events()), (1, 1));
            assert_eq!(t1.steps[0].saliency_source, t1.baseline);
            let (multi, ta) = run_setup_a(&fx.model, fx.data(), &cfg(Strategy::IterativeMultiLayer, Metric::KMeansDist, p)).unwrap();
            let (seq, _) = run_layer_sequential(&fx.model, fx.data(), &cfg(Strategy::LayerSequential, Metric::KMeansDist, p)).unwrap();
            assert_eq!(one.shapes().unwrap(), multi.shapes().unwrap());
            assert_eq!(one.shapes().unwrap(), seq.shapes().unwrap());
            assert_eq!(t1.steps[0].params, ta.steps.last().unwrap().params);
            for (&l, &t) in &ta.targets {
                assert_eq!(multi.conv(l).unwrap().num_filters(), fx.model.conv(l).unwrap().num_filters() - t);
            }
        }
    }

    #[test]
    fn zero_percent_is_a_no_op() {
        let fx = Fixture::new();
        for strategy in Strategy::ALL {
            let (m, t) = run(&fx.model, fx.data(), &cfg(strategy, Metric::L1Norm, 0.0)).unwrap();
            assert_eq!(io::model_to_bytes(&m), io::model_to_bytes(&fx.model));
            assert!(t.steps.is_empty());
            assert_eq!(t.final_accuracy(), evaluate(&fx.model, &fx.test).unwrap());
        }
    }

    #[test]
    fn traces_shrink_monotonically() {
        let fx = Fixture::new();
        for strategy in Strategy::ALL {
            let (_, t) = run(&fx.model, fx.data(), &cfg(strategy, Metric::Apoz, 70.0)).unwrap();
            let mut last = t.baseline_params;
            for s in &t.steps {
                assert!(s.params < last, "{strategy}: {} -> {}", last, s.params);
                assert_eq!(s.retrain_epochs, 30);
                last = s.params;
            }
        }
    }

    #[test]
    fn config_validation() {
        let base = cfg(Strategy::OneShot, Metric::L1Norm, 10.0);
        assert!(ScheduleConfig { max_iters: 0, ..base.clone() }.validate().is_err());
        assert!(ScheduleConfig { target_pct: 100.0, ..base.clone() }.validate().is_err());
        assert!(ScheduleConfig { step_cap: 0, ..base.clone() }.validate().is_err());
        let fx = Fixture::new();
        assert!(matches!(run_setup_a(&fx.model, fx.data(), &base), Err(ScheduleError::InvalidConfig(_))));
        assert_eq!(ScheduleConfig { target_pct: 49.9, ..base.clone() }.retrain_epochs(), 10);
        assert_eq!(ScheduleConfig { target_pct: 50.0, ..base }.retrain_epochs(), 30);
        assert_eq!("setup-b-greedy".parse::<Strategy>().unwrap(), Strategy::OneShot);
        let parsed: ScheduleConfig = toml::from_str("strategy = \"setup-b-seq\"\nmetric = \"apoz\"\ntarget_pct = 30.0").unwrap();
        assert_eq!((parsed.strategy, parsed.metric, parsed.retrain_epochs_high), (Strategy::LayerSequential, Metric::Apoz, 30));
    }

    #[test]
    fn evaluate_reference_cases() {
        // Zero weights with a bias favouring class 0 always predict 0.
        let mut dense = DenseLayer::zeros(4, 6);
        dense.bias_mut()[0] = 1.0;
        let model = NetworkGraph::new(Shape::new(1, 2, 2), vec![Layer::Flatten, Layer::Dense(dense), Layer::Softmax]).unwrap();
        let split: Vec<Example> = (0..12).map(|i| Example { input: FeatureMap::filled(Shape::new(1, 2, 2), i as f32), label: i % 6 }).collect();
        assert_eq!(evaluate(&model, &split).unwrap(), 1.0 / 6.0);
        assert!(evaluate(&model, &[]).is_err());

        let mut net = toy_net(3);
        let memo = halves(10, 5);
        train(&mut net, &memo, &TrainConfig { epochs: 60, batch_size: 2, learning_rate: 0.05, seed: 1 }).unwrap();
        let a = evaluate(&net, &memo).unwrap();
        assert_eq!(a, 1.0);
        assert_eq!(evaluate(&net, &memo).unwrap(), a);
    }

    #[test]
    fn trace_round_trips() {
        let fx = Fixture::new();
        let (_, t) = run_oneshot(&fx.model, fx.data(), &cfg(Strategy::OneShot, Metric::L1Norm, 50.0)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.json");
        t.save(&path).unwrap();
        assert_eq!(ScheduleTrace::load(&path).unwrap(), t);
    }
}
