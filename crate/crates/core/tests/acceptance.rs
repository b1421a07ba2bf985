//! Acceptance suite. Runs every criterion at its stated tolerance and prints
//! one PASS/FAIL line per criterion; exits non-zero if any fails.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use filterprune::harness::{cmd_generate, cmd_prune, cmd_run_matrix, cmd_train_baseline, load_baseline, trace_path, ExperimentSpec};
use filterprune::saliency::{apoz_table, l1_score, score, select_counts, Metric, SaliencyConfig};
use filterprune::schedules::{run_layer_sequential, run_oneshot, run_setup_a, ScheduleConfig, ScheduleData, ScheduleTrace, Strategy};
use filterprune::surgeon::{apply_prune, compression_report, conv_layer_flops, model_flops, model_params, PrunePlan};
use filterprune::tensorcore::{
    build, conv_forward_direct, gradient_check_by_layer, io, train, ConvLayer, DenseLayer, Example, FeatureMap, FilterTensor, Layer, LayerSpec,
    NetworkGraph, Padding, Preset, Shape, TrainConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

struct Report {
    failures: usize,
}

impl Report {
    fn record(&mut self, id: &str, name: &str, limit: Option<Duration>, f: impl FnOnce() -> Outcome) {
        let start = Instant::now();
        let mut outcome = f();
        let elapsed = start.elapsed();
        if let (Ok(detail), Some(limit)) = (&outcome, limit) {
            if elapsed > limit {
                outcome = Err(format!("{detail}; runtime {elapsed:.1?} exceeds {limit:?}"));
            }
        }
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                self.failures += 1;
                ("FAIL", d)
            }
        };
        println!("[{tag}] {id} {name} ({elapsed:.1?}): {detail}");
    }
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_input(shape: Shape, rng: &mut ChaCha8Rng) -> FeatureMap {
    FeatureMap::from_fn(shape, |_, _, _| rng.random_range(-1.0..1.0))
}

fn c1_flops_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let shapes = 40;
    for i in 0..shapes {
        let (f, d, k, s) = (rng.random_range(1..9), rng.random_range(1..6), rng.random_range(1..6), rng.random_range(1..4));
        let (h, w) = (rng.random_range(k..k + 12), rng.random_range(k..k + 12));
        let pad = if rng.random_bool(0.5) { Padding::Same } else { Padding::Valid };
        let conv = ConvLayer::<f32>::zeros(f, d, k, k, s, pad);
        let input = random_input(Shape::new(d, h, w), &mut rng);
        let mut macs = 0;
        conv_forward_direct(&input, &conv, &mut macs).map_err(|e| e.to_string())?;
        let flops = conv_layer_flops(&conv, input.shape()).map_err(|e| e.to_string())?;
        check(flops == macs, || format!("shape {i}: {f} filters {d}x{k}x{k} stride {s} {pad:?} on {h}x{w}: {flops} vs counted {macs}"))?;
    }
    Ok(format!("{shapes} random shapes, formula == counted multiply-accumulates"))
}

fn c2_gradient_check() -> Outcome {
    let specs = [
        LayerSpec::Conv { filters: 3, kernel: 3, stride: 1, padding: Padding::Same },
        LayerSpec::Relu,
        LayerSpec::MaxPool { window: 2, stride: 2 },
        LayerSpec::Conv { filters: 4, kernel: 2, stride: 2, padding: Padding::Valid },
        LayerSpec::Relu,
        LayerSpec::Flatten,
        LayerSpec::Dense { units: 5 },
        LayerSpec::Relu,
        LayerSpec::Dense { units: 3 },
        LayerSpec::Softmax,
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: BTreeMap<String, f64> = BTreeMap::new();
    for trial in 0..4u64 {
        let model = build(Shape::new(2, 8, 8), &specs, trial).map_err(|e| e.to_string())?.cast::<f64>();
        let mut model = model;
        // Nudge biases off zero so every ReLU sees both signs.
        for l in model.layers_mut() {
            if let Layer::Conv(c) = l {
                c.bias_mut().iter_mut().for_each(|b| *b = rng.random_range(-0.1..0.1));
            }
        }
        let x = random_input(Shape::new(2, 8, 8), &mut rng).cast::<f64>();
        for r in gradient_check_by_layer(&model, &x, trial as usize % 3, 1e-4).map_err(|e| e.to_string())? {
            let e = worst.entry(format!("{}@{}", r.kind, r.layer_id)).or_insert(0.0);
            *e = e.max(r.max_relative_error);
        }
    }
    let max = worst.values().copied().fold(0.0, f64::max);
    check(worst.len() == 4 && max < 1e-3, || format!("max relative error {max:e} per layer {worst:?}"))?;
    Ok(format!("conv/relu/pool/flatten/dense/softmax chain, max relative error {max:.2e} < 1e-3 at eps 1e-4"))
}

fn two_conv_net(seed: u64) -> NetworkGraph {
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

fn c3_forward_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let inputs: Vec<FeatureMap> = (0..100).map(|_| random_input(Shape::new(1, 8, 8), &mut rng)).collect();
    let mut cases = 0;
    for (layer, j) in [(0usize, 2usize), (3, 7)] {
        let mut model = two_conv_net(10 + j as u64);
        match layer {
            0 => {
                let c = model.conv_mut(3).unwrap();
                for f in 0..c.num_filters() {
                    c.filter_weights_mut(f)[j * 9..(j + 1) * 9].fill(0.0);
                }
            }
            _ => {
                let Layer::Dense(d) = &mut model.layers_mut()[7] else { unreachable!() };
                let outs = d.outputs();
                d.weights_mut()[j * 4 * outs..(j + 1) * 4 * outs].fill(0.0);
            }
        }
        let mut plan = PrunePlan::default();
        plan.insert(layer, j);
        let pruned = apply_prune(&model, &plan).map_err(|e| e.to_string())?;
        for (i, x) in inputs.iter().enumerate() {
            check(pruned.forward(x).unwrap() == model.forward(x).unwrap(), || format!("layer {layer} filter {j}: input {i} differs"))?;
            cases += 1;
        }
    }
    Ok(format!("{cases} forward passes bit-identical after pruning a conv->conv and a conv->dense filter"))
}

fn c4_unit_suites() -> Outcome {
    let a = FilterTensor::new(1, 3, 3, vec![0.01, 0.005, 0.01, 0.01, 0.8, 0.01, 0.03, 0.001, 0.002], 0.0).unwrap();
    let b = FilterTensor::new(1, 3, 3, vec![0.5f64; 9], 0.0).unwrap();
    let (la, lb) = (l1_score(&a), l1_score(&b));
    check((la - 0.878).abs() <= 1e-12 && (lb - 4.5).abs() <= 1e-12 && la < lb, || format!("L1 A={la} B={lb}"))?;

    // 1x1 conv filters: pass-through, always negative, always positive.
    let filters = [(1.0, 0.0), (0.0, -1.0), (1.0, 3.0)].map(|(w, b)| FilterTensor::new(1, 1, 1, vec![w], b).unwrap());
    let conv = ConvLayer::from_filters(filters.to_vec(), 1, Padding::Valid).unwrap();
    let model = NetworkGraph::new(
        Shape::new(1, 2, 2),
        vec![Layer::Conv(conv), Layer::Relu, Layer::Flatten, Layer::Dense(DenseLayer::zeros(12, 2)), Layer::Softmax],
    )
    .unwrap();
    let batch = vec![FeatureMap::new(1, 2, 2, vec![-1.0, 0.2, -0.3, 0.4]).unwrap(), FeatureMap::new(1, 2, 2, vec![0.1, -2.0, 0.3, -0.25]).unwrap()];
    let t = apoz_table(&model, &batch).map_err(|e| e.to_string())?;
    let got = t.scores(0).unwrap().to_vec();
    let want = [0.5, 1.0, 0.0];
    check(got.iter().zip(&want).all(|(g, w)| (g - w).abs() <= 1e-12), || format!("APoZ {got:?}, expected {want:?}"))?;
    Ok(format!("L1 A = {la:.3}, B = {lb:.1}; APoZ = {got:?}"))
}

fn halves(n: usize, seed: u64) -> Vec<Example> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let label = i % 2;
            let input = FeatureMap::from_fn(Shape::new(1, 8, 8), |_, y, _| ((y < 4) == (label == 0)) as u8 as f32 + rng.random_range(-0.2..0.2));
            Example { input, label }
        })
        .collect()
}

fn c5_schedule_conformance() -> Outcome {
    let mut model = two_conv_net(1);
    let (tr, val, test) = (halves(24, 2), halves(8, 3), halves(10, 4));
    train(&mut model, &tr, &TrainConfig { epochs: 5, batch_size: 4, learning_rate: 0.05, seed: 0 }).map_err(|e| e.to_string())?;
    let data = ScheduleData { train: &tr, val: &val, test: &test };
    let retrain = TrainConfig { epochs: 1, batch_size: 4, learning_rate: 0.02, seed: 9 };
    let cfg = |strategy, p| ScheduleConfig { strategy, metric: Metric::Apoz, target_pct: p, retrain: retrain.clone(), ..ScheduleConfig::default() };
    let batch: Vec<FeatureMap> = val.iter().map(|e| e.input.clone()).collect();
    let mut notes = Vec::new();

    for (p, epochs) in [(30.0, 10), (50.0, 30)] {
        let (pruned, trace) = run_setup_a(&model, data, &cfg(Strategy::IterativeMultiLayer, p)).map_err(|e| e.to_string())?;
        // Hand simulation: targets from the floor rule, δ = smallest remaining target,
        // saliency recomputed from the latest retrained model before every step.
        let mut remaining: BTreeMap<usize, usize> = [(0, 6), (3, 10)].into_iter().map(|(l, n)| (l, (p as usize * n) / 100)).collect();
        let mut m = model.clone();
        let mut step = 0;
        let mut deltas = Vec::new();
        while let Some(&delta) = remaining.values().filter(|&&r| r > 0).min() {
            let counts: BTreeMap<usize, usize> = remaining.iter().filter(|(_, &r)| r > 0).map(|(&l, _)| (l, delta)).collect();
            let source = io::fingerprint(&m);
            let table = score(Metric::Apoz, &m, &batch, &SaliencyConfig::default()).unwrap();
            let plan = select_counts(&table, &counts).unwrap();
            let s = trace.steps.get(step).ok_or(format!("p={p}: trace ends after {step} steps"))?;
            check(s.plan.per_layer == plan.per_layer && s.delta == delta && s.saliency_source == source, || format!("p={p}: step {step} differs"))?;
            check(s.retrain_epochs == epochs, || format!("p={p}: step {step} retrained {} epochs, rule says {epochs}", s.retrain_epochs))?;
            m = apply_prune(&m, &plan).unwrap();
            train(&mut m, &tr, &TrainConfig { epochs, seed: 9 + step as u64, ..retrain.clone() }).unwrap();
            counts.keys().for_each(|l| *remaining.get_mut(l).unwrap() -= delta);
            deltas.push(delta);
            step += 1;
        }
        check(trace.steps.len() == step && io::model_to_bytes(&pruned) == io::model_to_bytes(&m), || format!("p={p}: final model differs"))?;
        notes.push(format!("setup A p={p}: deltas {deltas:?}, {epochs} epochs"));
    }

    let (_, seq) = run_layer_sequential(&model, data, &cfg(Strategy::LayerSequential, 50.0)).map_err(|e| e.to_string())?;
    let mut per_layer: BTreeMap<usize, usize> = BTreeMap::new();
    for s in &seq.steps {
        check(s.delta == 1 && s.plan.total() == 1 && s.retrain_epochs == 30, || "layer-sequential step is not a single filter".into())?;
        *per_layer.entry(*s.plan.per_layer.keys().next().unwrap()).or_default() += 1;
    }
    check(per_layer == seq.targets, || format!("layer-sequential steps {per_layer:?} vs targets {:?}", seq.targets))?;
    let layer_seq: Vec<usize> = seq.steps.iter().map(|s| *s.plan.per_layer.keys().next().unwrap()).collect();
    check(layer_seq.windows(2).all(|w| w[0] <= w[1]), || "layer-sequential revisited an earlier layer".into())?;
    notes.push(format!("sequential steps per layer {per_layer:?}"));

    let (_, one) = run_oneshot(&model, data, &cfg(Strategy::OneShot, 50.0)).map_err(|e| e.to_string())?;
    check(one.prune_events() == 1 && one.retrain_events() == 1, || format!("one-shot: {} prunes, {} retrains", one.prune_events(), one.retrain_events()))?;
    notes.push("one-shot 1 prune + 1 retrain".into());
    Ok(notes.join("; "))
}

const GRID: [f64; 6] = [5.0, 15.0, 30.0, 50.0, 70.0, 95.0];
const REFERENCE_COMPRESSION: [f64; 6] = [9.465, 27.47, 50.78, 74.98, 90.93, 99.74];

fn floor_plan(model: &NetworkGraph, p: f64) -> PrunePlan {
    let mut plan = PrunePlan::new(p);
    for id in model.conv_layer_ids() {
        for j in 0..(p as usize * model.conv(id).unwrap().num_filters()) / 100 {
            plan.insert(id, j);
        }
    }
    plan
}

fn c6_compression_algebra() -> Outcome {
    let model = build(filterprune::radarsynth::TF_SHAPE, &Preset::DeskVgg.layers(6), 0).map_err(|e| e.to_string())?;
    let mut last = -1.0;
    let mut values = Vec::new();
    for (&p, &reference) in GRID.iter().zip(&REFERENCE_COMPRESSION) {
        let pruned = apply_prune(&model, &floor_plan(&model, p)).map_err(|e| e.to_string())?;
        let r = compression_report(&model, &pruned, 0.0, p).map_err(|e| e.to_string())?;
        check(r.compression_pct > last, || format!("p={p}: {} not above {last}", r.compression_pct))?;
        check((r.compression_pct - reference).abs() <= 5.0, || format!("p={p}: {:.3}% vs reference {reference}%", r.compression_pct))?;
        let expected = (1.0 - p / 100.0).powi(2);
        for id in model.conv_layer_ids().into_iter().skip(1) {
            let ratio = pruned.conv(id).unwrap().weights().len() as f64 / model.conv(id).unwrap().weights().len() as f64;
            check((ratio - expected).abs() * 100.0 <= 0.1, || format!("p={p}: layer {id} kept {ratio:.4}, expected {expected:.4}"))?;
        }
        last = r.compression_pct;
        values.push(format!("{p}->{:.2}", r.compression_pct));
    }
    Ok(format!("whole-model compression {} (each within 5 pp of reference)", values.join(", ")))
}

fn desk_spec(dir: &std::path::Path, per_class: usize) -> ExperimentSpec {
    let mut spec = ExperimentSpec { output_dir: dir.to_path_buf(), ..ExperimentSpec::default() };
    spec.dataset.per_class = per_class;
    spec.dataset.snr_set = vec![20.0];
    spec.dataset.seed = 2024;
    spec.architecture.preset = Preset::DeskVgg;
    spec.architecture.seed = 7;
    spec.train = TrainConfig { epochs: 10, batch_size: 16, learning_rate: 0.05, seed: 11 };
    spec.schedule.retrain = TrainConfig { epochs: 1, batch_size: 16, learning_rate: 0.05, seed: 13 };
    spec
}

fn c8_end_to_end(report: &mut Report) {
    let dir = tempfile::tempdir().unwrap();
    let spec = desk_spec(dir.path(), 200);
    let start = Instant::now();
    let setup = cmd_generate(&spec).and_then(|_| cmd_train_baseline(&spec));
    let baseline = match setup {
        Ok(b) => b,
        Err(e) => {
            for id in ["8a", "8b", "8c"] {
                report.record(id, "end-to-end", None, || Err(format!("setup failed: {e}")));
            }
            return;
        }
    };
    let base = baseline.test_accuracy;
    report.record("8a", "baseline accuracy >= 0.85", None, || {
        check(base >= 0.85, || format!("test accuracy {base:.4}"))?;
        Ok(format!("test accuracy {base:.4} on {} examples per class at 20 dB", spec.dataset.per_class))
    });
    let cell = |strategy, p| cmd_prune(&spec, Metric::Apoz, strategy, p).map_err(|e| e.to_string());
    report.record("8b", "APoZ setup A at p=15 within 3 pp of baseline", None, || {
        let row = cell(Strategy::IterativeMultiLayer, 15.0)?;
        let gap = 100.0 * (base - row.top1_acc);
        check(gap <= 3.0, || format!("accuracy {:.4} is {gap:.2} pp below baseline", row.top1_acc))?;
        Ok(format!("accuracy {:.4} vs baseline {base:.4} at {:.2}% compression", row.top1_acc, row.model_compression_pct))
    });
    report.record("8c", "APoZ one-shot at p=95 >= 5 pp below setup A", None, || {
        let a = cell(Strategy::IterativeMultiLayer, 95.0)?;
        let one = cell(Strategy::OneShot, 95.0)?;
        let gap = 100.0 * (a.top1_acc - one.top1_acc);
        let steps = ScheduleTrace::load(trace_path(&spec, Metric::Apoz, Strategy::IterativeMultiLayer, 95.0)).map(|t| t.steps.len()).unwrap_or(0);
        let detail = format!("setup A {:.4} ({steps} steps) vs one-shot {:.4}: gap {gap:.2} pp", a.top1_acc, one.top1_acc);
        check(gap >= 5.0, || detail.clone())?;
        Ok(detail)
    });
    let total = start.elapsed();
    report.record("8", "end-to-end runtime < 30 min", None, || {
        check(total < Duration::from_secs(30 * 60), || format!("{total:.0?}"))?;
        Ok(format!("{total:.0?}"))
    });
    let _ = load_baseline(&spec);
}

fn c7_c9_matrix(report: &mut Report) {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = desk_spec(dir.path(), 30);
    spec.train.epochs = 4;
    spec.schedule.retrain_epochs_low = 1;
    spec.schedule.retrain_epochs_high = 1;
    let run = cmd_generate(&spec).and_then(|_| cmd_train_baseline(&spec)).and_then(|b| cmd_run_matrix(&spec).map(|m| (b, m)));
    let (baseline, matrix) = match run {
        Ok(x) => x,
        Err(e) => {
            report.record("7", "speedup identity", None, || Err(format!("matrix failed: {e}")));
            report.record("9", "36-cell matrix", None, || Err(format!("matrix failed: {e}")));
            return;
        }
    };
    let rows = matrix.rows();
    report.record("7", "speedup identity", None, || {
        for r in std::iter::once(&baseline.row()).chain(&rows) {
            let product = r.speedup * r.flops as f64;
            check((product - baseline.flops as f64).abs() <= f64::EPSILON * baseline.flops as f64, || format!("{}: {product} vs {}", r.approach, baseline.flops))?;
        }
        let ratios: [(f64, f64); 2] = [(29.32 / 26.65, 1.1), (29.32 / 0.077, 381.52)];
        for (ratio, printed) in ratios {
            check((ratio / printed - 1.0).abs() <= 0.005, || format!("ratio {ratio:.3} vs printed {printed}"))?;
        }
        Ok(format!("{} rows satisfy speedup x flops == base flops; reference ratios 1.100 and 380.8 within 0.5% of 1.1 and 381.52", rows.len() + 1))
    });
    report.record("9", "36-cell matrix", None, || {
        check(matrix.cells.len() == 36 && rows.len() == 36, || format!("{} cells, {} rows, {} failed", matrix.cells.len(), rows.len(), matrix.failed()))?;
        for &p in &GRID {
            let at: Vec<_> = rows.iter().filter(|r| r.layer_pruning_pct == p).collect();
            check(at.len() == 6, || format!("p={p}: {} rows", at.len()))?;
            let key = |r: &&filterprune::surgeon::ReportRow| (r.flops, r.trainable_params, r.model_compression_pct.to_bits(), r.speedup.to_bits());
            check(at.iter().all(|r| key(r) == key(&at[0])), || format!("p={p}: cost columns differ across approaches"))?;
        }
        let (model, _) = load_baseline(&spec).map_err(|e| e.to_string())?;
        check(model_params(&model) == baseline.params && model_flops(&model).unwrap() == baseline.flops, || "baseline record mismatch".into())?;
        Ok("36 rows, FLOPs/params/compression/speedup identical across metrics and strategies at each p".into())
    });
}

fn main() {
    let mut report = Report { failures: 0 };
    report.record("1", "FLOPs oracle equivalence", Some(Duration::from_secs(10)), c1_flops_oracle);
    report.record("2", "gradient check", Some(Duration::from_secs(30)), c2_gradient_check);
    report.record("3", "pruning forward-equivalence", Some(Duration::from_secs(5)), c3_forward_equivalence);
    report.record("4", "L1 / APoZ unit suites", None, c4_unit_suites);
    report.record("5", "schedule conformance", Some(Duration::from_secs(120)), c5_schedule_conformance);
    report.record("6", "compression algebra", Some(Duration::from_secs(1)), c6_compression_algebra);
    c7_c9_matrix(&mut report);
    c8_end_to_end(&mut report);
    println!("acceptance: {} failed", report.failures);
    if report.failures > 0 {
        std::process::exit(1);
    }
}
