use std::collections::BTreeMap;

use rayon::prelude::*;

use super::{ScheduleConfig, ScheduleError, ScheduleTrace, Strategy, TraceStep};
use crate::saliency::{prune_count, score, select_counts, SaliencyTable};
use crate::surgeon::{apply_prune, model_flops, model_params, PrunePlan};
use crate::tensorcore::{io::fingerprint, train, Example, FeatureMap, NetworkGraph, TensorError, TrainConfig};

/// Splits a schedule reads: `train` for retraining, `val` for APoZ, `test` for accuracy.
#[derive(Clone, Copy, Debug)]
pub struct ScheduleData<'a> {
    pub train: &'a [Example],
    pub val: &'a [Example],
    pub test: &'a [Example],
}

/// Top-1 accuracy.
pub fn evaluate(model: &NetworkGraph, split: &[Example]) -> Result<f64, TensorError> {
    if split.is_empty() {
        return Err(TensorError::EmptyBatch);
    }
    let correct = split
        .par_iter()
        .map(|ex| model.predict(&ex.input).map(|p| usize::from(p == ex.label)))
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    Ok(correct as f64 / split.len() as f64)
}

pub fn run(model: &NetworkGraph, data: ScheduleData<'_>, cfg: &ScheduleConfig) -> Result<(NetworkGraph, ScheduleTrace), ScheduleError> {
    match cfg.strategy {
        Strategy::IterativeMultiLayer => run_setup_a(model, data, cfg),
        Strategy::LayerSequential => run_layer_sequential(model, data, cfg),
        Strategy::OneShot => run_oneshot(model, data, cfg),
    }
}

struct Runner<'a> {
    cfg: &'a ScheduleConfig,
    data: ScheduleData<'a>,
    apoz_batch: Vec<FeatureMap>,
    model: NetworkGraph,
    trace: ScheduleTrace,
}

impl<'a> Runner<'a> {
    fn new(model: &NetworkGraph, data: ScheduleData<'a>, cfg: &'a ScheduleConfig, expected: super::Strategy) -> Result<Self, ScheduleError> {
        cfg.validate()?;
        if cfg.strategy != expected {
            return Err(ScheduleError::InvalidConfig(format!("strategy is {}, expected {}", cfg.strategy, expected)));
        }
        let mut targets = BTreeMap::new();
        for id in model.conv_layer_ids() {
            targets.insert(id, prune_count(cfg.target_pct, model.conv(id).expect("conv id").num_filters())?);
        }
        let take = cfg.apoz_samples.unwrap_or(data.val.len()).min(data.val.len());
        let apoz_batch = data.val[..take].iter().map(|e| e.input.clone()).collect();
        let trace = ScheduleTrace {
            strategy: cfg.strategy,
            metric: cfg.metric,
            target_pct: cfg.target_pct,
            targets,
            baseline: fingerprint(model),
            baseline_params: model_params(model),
            baseline_flops: model_flops(model)?,
            baseline_accuracy: evaluate(model, data.test)?,
            steps: Vec::new(),
        };
        Ok(Runner { cfg, data, apoz_batch, model: model.clone(), trace })
    }

    fn saliency(&self) -> Result<SaliencyTable, ScheduleError> {
        Ok(score(self.cfg.metric, &self.model, &self.apoz_batch, &self.cfg.saliency)?)
    }

    fn removed(&self, layer: usize) -> usize {
        self.trace.steps.iter().map(|s| s.plan.removed(layer)).sum()
    }

    fn remaining(&self) -> BTreeMap<usize, usize> {
        self.trace.targets.iter().map(|(&l, &t)| (l, t - self.removed(l))).filter(|&(_, r)| r > 0).collect()
    }

    fn check_budget(&self) -> Result<(), ScheduleError> {
        if self.trace.steps.len() >= self.cfg.max_iters {
            return Err(ScheduleError::TargetUnreachable { max_iters: self.cfg.max_iters, trace: Box::new(self.trace.clone()) });
        }
        Ok(())
    }

    /// Prunes `plan` from the current model, retrains and records the step.
    fn step(&mut self, mut plan: PrunePlan, delta: usize, saliency_source: String) -> Result<(), ScheduleError> {
        plan.pruning_percentage = self.cfg.target_pct;
        plan.step_size = Some(delta);
        if self.cfg.strategy == Strategy::LayerSequential {
            plan.step_cap = Some(self.cfg.step_cap);
        }
        self.model = apply_prune(&self.model, &plan)?;
        let epochs = self.cfg.retrain_epochs();
        let iteration = self.trace.steps.len();
        let retrain = TrainConfig { epochs, seed: self.cfg.retrain.seed.wrapping_add(iteration as u64), ..self.cfg.retrain.clone() };
        train(&mut self.model, self.data.train, &retrain)?;
        let filters = self.model.conv_layer_ids().into_iter().map(|id| (id, self.model.conv(id).expect("conv id").num_filters())).collect();
        self.trace.steps.push(TraceStep {
            iteration,
            plan,
            delta,
            saliency_source,
            model_after: fingerprint(&self.model),
            retrain_epochs: epochs,
            filters,
            params: model_params(&self.model),
            flops: model_flops(&self.model)?,
            accuracy: evaluate(&self.model, self.data.test)?,
        });
        Ok(())
    }

    fn finish(self) -> (NetworkGraph, ScheduleTrace) {
        (self.model, self.trace)
    }
}

/// Iterative multi-layer pruning. Each step scores the current model, removes
/// `δ = min` remaining count from every unfinished layer, then retrains.
pub fn run_setup_a(model: &NetworkGraph, data: ScheduleData<'_>, cfg: &ScheduleConfig) -> Result<(NetworkGraph, ScheduleTrace), ScheduleError> {
    let mut r = Runner::new(model, data, cfg, Strategy::IterativeMultiLayer)?;
    loop {
        let remaining = r.remaining();
        let Some(&delta) = remaining.values().min() else { break };
        r.check_budget()?;
        let source = fingerprint(&r.model);
        let table = r.saliency()?;
        let counts = remaining.keys().map(|&l| (l, delta)).collect();
        let plan = select_counts(&table, &counts)?;
        r.step(plan, delta, source)?;
    }
    Ok(r.finish())
}

/// Layer-by-layer pruning in graph order (or `cfg.layer_order`): up to
/// `step_cap` filters per step, retraining after each, until the layer is done.
pub fn run_layer_sequential(
    model: &NetworkGraph,
    data: ScheduleData<'_>,
    cfg: &ScheduleConfig,
) -> Result<(NetworkGraph, ScheduleTrace), ScheduleError> {
    let mut r = Runner::new(model, data, cfg, Strategy::LayerSequential)?;
    let order = match &cfg.layer_order {
        Some(order) => {
            let mut sorted = order.clone();
            sorted.sort_unstable();
            if sorted != model.conv_layer_ids() {
                return Err(ScheduleError::InvalidConfig(format!("layer_order {order:?} is not a permutation of the conv layers")));
            }
            order.clone()
        }
        None => model.conv_layer_ids(),
    };
    for layer in order {
        while let Some(&left) = r.remaining().get(&layer) {
            r.check_budget()?;
            let delta = left.min(cfg.step_cap);
            let source = fingerprint(&r.model);
            let table = r.saliency()?;
            let plan = select_counts(&table, &BTreeMap::from([(layer, delta)]))?;
            r.step(plan, delta, source)?;
        }
    }
    Ok(r.finish())
}

/// Scores the baseline once, removes every target filter, retrains once.
pub fn run_oneshot(model: &NetworkGraph, data: ScheduleData<'_>, cfg: &ScheduleConfig) -> Result<(NetworkGraph, ScheduleTrace), ScheduleError> {
    let mut r = Runner::new(model, data, cfg, Strategy::OneShot)?;
    let remaining = r.remaining();
    if !remaining.is_empty() {
        let source = fingerprint(&r.model);
        let table = r.saliency()?;
        let plan = select_counts(&table, &remaining)?;
        let delta = remaining.values().copied().max().unwrap_or(0);
        r.step(plan, delta, source)?;
    }
    Ok(r.finish())
}
