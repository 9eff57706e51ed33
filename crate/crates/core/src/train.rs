//! Training loops and evaluation metrics.
//!
//! Four modes solve the same robust objective at different fidelities:
//!
//! - `normal` — plain loss on the original string;
//! - `augment` — loss on one uniform sample from `S(x)` per step;
//! - `worst_of_k` — loss on the worst of k samples (documented stand-in
//!   for gradient-guided flipping, not the real thing);
//! - `certified` — `(1−κ)·loss(x) + κ·softplus(margin upper bound)`, with
//!   gradients flowing through the interval computation and the budgets
//!   ramping in linearly over the warm-up epochs.
//!
//! The optimizer is plain SGD with a fixed learning rate. Everything is
//! deterministic for a given seed: shuffling, sampling, and
//! initialization draw from independent derived streams, so e.g. augment
//! with zero budgets replays the normal trajectory bit for bit.

use crate::cert::{self, Verdict};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{forward_rnn, AttnMode, LiftedParams, ModelConfig, ModelParams};
use crate::numerics::{softplus, Num, Tape, Var};
use crate::perturb::{enumerate_space, PerturbationSpace};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum TrainMode {
    Normal,
    Augment,
    WorstOfK,
    Certified,
}

impl TrainMode {
    pub fn parse(s: &str) -> Option<TrainMode> {
        match s {
            "normal" => Some(TrainMode::Normal),
            "augment" => Some(TrainMode::Augment),
            "worst_of_k" | "worst-of-k" => Some(TrainMode::WorstOfK),
            "certified" => Some(TrainMode::Certified),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    /// Certified-loss mixing weight in [0, 1].
    pub kappa: f64,
    /// Epochs over which budgets ramp linearly from 0 to full; must end
    /// before the final epoch.
    pub warm_epochs: usize,
    /// Draws for worst-of-k.
    pub k: usize,
    pub enum_cap: usize,
}

impl TrainConfig {
    pub fn new(mode: TrainMode) -> Self {
        let epochs = 10;
        TrainConfig {
            mode,
            epochs,
            batch_size: 1,
            lr: 0.1,
            seed: 0,
            kappa: 0.75,
            warm_epochs: epochs / 2,
            k: 8,
            enum_cap: 1_000_000,
        }
    }

    pub fn with_epochs(mut self, epochs: usize) -> Self {
        self.epochs = epochs;
        self.warm_epochs = epochs / 2;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.k == 0 {
            return Err(Error::InvalidConfig("zero epochs/batch/k".into()));
        }
        if !(0.0..=1.0).contains(&self.kappa) {
            return Err(Error::InvalidConfig(format!("kappa {}", self.kappa)));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::InvalidConfig(format!("lr {}", self.lr)));
        }
        if self.warm_epochs >= self.epochs {
            return Err(Error::InvalidConfig(
                "budget ramp must reach 1.0 before the final epoch".into(),
            ));
        }
        Ok(())
    }

    /// Fraction of the budgets active at `epoch` (0-based).
    fn ramp(&self, epoch: usize) -> f64 {
        if self.mode != TrainMode::Certified || self.warm_epochs == 0 {
            return 1.0;
        }
        (epoch as f64 / self.warm_epochs as f64).min(1.0)
    }
}

/// `max_{c≠y}(logit_c − logit_y)`: negative iff the prediction is correct;
/// a tie counts as not-robust.
pub fn margin<S: Num>(logits: &[S], label: usize) -> S {
    let truth = &logits[label];
    let mut worst: Option<S> = None;
    for (c, l) in logits.iter().enumerate() {
        if c == label {
            continue;
        }
        let m = l.sub(truth);
        worst = Some(match worst {
            None => m,
            Some(w) => w.max(&m),
        });
    }
    worst.expect("at least two classes")
}

pub fn loss_margin(logits: &[f64], label: usize) -> f64 {
    margin(logits, label)
}

fn argmax_first(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

fn check_finite_loss(v: f64, step: usize) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Diverged(step))
    }
}

/// Parameters beyond this leave the numeric envelope the stable forms are
/// guaranteed on; treat as divergence even while the loss is still finite
/// (softplus absorbs an infinite margin into an exact 0).
const PARAM_BOUND: f64 = 1e6;

fn apply_sgd(params: &mut ModelParams, grads: &[f64], lr: f64, step: usize) -> Result<()> {
    let mut cursor = 0;
    let mut in_bounds = true;
    for t in params.tensors_mut() {
        for v in t.data_mut() {
            *v -= lr * grads[cursor];
            in_bounds &= v.abs() <= PARAM_BOUND;
            cursor += 1;
        }
    }
    debug_assert_eq!(cursor, grads.len());
    if !in_bounds {
        return Err(Error::Diverged(step));
    }
    Ok(())
}

/// Train a fresh model; see the module docs for the mode semantics.
pub fn train(
    data: &Dataset,
    space: &PerturbationSpace,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<ModelParams> {
    cfg.validate()?;
    model_cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset("training split".into()));
    }
    data.check_labels(model_cfg.n_classes)?;
    if data.vocab.size() > model_cfg.vocab_size {
        return Err(Error::InvalidConfig(format!(
            "vocabulary has {} entries but the model embeds {}",
            data.vocab.size(),
            model_cfg.vocab_size
        )));
    }
    let needed = data.max_len()
        + if cfg.mode == TrainMode::Normal {
            0
        } else {
            space.max_growth(data.max_len())
        };
    if model_cfg.max_positions < needed {
        return Err(Error::PositionOverflow {
            needed,
            available: model_cfg.max_positions,
        });
    }

    let mut params = ModelParams::init(model_cfg.clone(), cfg.seed)?;
    let mut shuffle_rng = Rng::derive(cfg.seed, 0x7368_7566);
    let mut sample_rng = Rng::derive(cfg.seed, 0x7361_6d70);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut grad_acc = vec![0.0; params.param_count()];
    let mut step = 0usize;

    for epoch in 0..cfg.epochs {
        shuffle_rng.shuffle(&mut order);
        let ramped = space.scaled(cfg.ramp(epoch));
        let mut in_batch = 0usize;
        for &idx in &order {
            let ex = &data.examples[idx];
            let tape = Tape::new();
            let lifted = LiftedParams::lift(&tape, &params);
            let slices = lifted.slices();

            let loss: Var = match cfg.mode {
                TrainMode::Normal => {
                    let logits = forward_rnn(model_cfg, &slices, &ex.ids)?;
                    softplus(&margin(&logits, ex.label))
                }
                TrainMode::Augment => {
                    let members = enumerate_space(space, &ex.words, cfg.enum_cap)?;
                    let pick = sample_rng.below(members.len());
                    let ids = data.vocab.encode(&members[pick].tokens);
                    let logits = forward_rnn(model_cfg, &slices, &ids)?;
                    softplus(&margin(&logits, ex.label))
                }
                TrainMode::WorstOfK => {
                    let members = enumerate_space(space, &ex.words, cfg.enum_cap)?;
                    let mut worst_idx = 0usize;
                    let mut worst = f64::NEG_INFINITY;
                    for _ in 0..cfg.k {
                        let pick = sample_rng.below(members.len());
                        let ids = data.vocab.encode(&members[pick].tokens);
                        let logits = params.forward_concrete(&ids, AttnMode::Rnn)?;
                        let m = loss_margin(&logits, ex.label);
                        if m > worst {
                            worst = m;
                            worst_idx = pick;
                        }
                    }
                    let ids = data.vocab.encode(&members[worst_idx].tokens);
                    let logits = forward_rnn(model_cfg, &slices, &ids)?;
                    softplus(&margin(&logits, ex.label))
                }
                TrainMode::Certified => {
                    let logits = forward_rnn(model_cfg, &slices, &ex.ids)?;
                    let clean = softplus(&margin(&logits, ex.label));
                    let (upper, _) = cert::margin_upper_bound(
                        model_cfg,
                        &slices,
                        &data.vocab,
                        &ramped,
                        &ex.words,
                        ex.label,
                    )?;
                    let robust = softplus(&upper);
                    clean
                        .mul_const(1.0 - cfg.kappa)
                        .add(&robust.mul_const(cfg.kappa))
                }
            };

            check_finite_loss(loss.val(), step)?;
            let grads = tape.backward(&loss);
            let adj = grads.leaf_range(lifted.first(), lifted.count);
            for (a, g) in grad_acc.iter_mut().zip(adj) {
                *a += g;
            }
            in_batch += 1;
            step += 1;
            if in_batch == cfg.batch_size {
                apply_sgd(&mut params, &grad_acc, cfg.lr / in_batch as f64, step)?;
                grad_acc.fill(0.0);
                in_batch = 0;
            }
        }
        if in_batch > 0 {
            apply_sgd(&mut params, &grad_acc, cfg.lr / in_batch as f64, step)?;
            grad_acc.fill(0.0);
        }
    }
    Ok(params)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    Normal,
    Certified,
    Exhaustive,
}

impl MetricKind {
    pub fn parse(s: &str) -> Option<MetricKind> {
        match s {
            "normal" => Some(MetricKind::Normal),
            "certified" => Some(MetricKind::Certified),
            "exhaustive" => Some(MetricKind::Exhaustive),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MetricResult {
    pub kind: MetricKind,
    pub correct: usize,
    pub total: usize,
    /// Enumeration-cap or capacity failures; the strict policy counted
    /// each as incorrect.
    pub failures: usize,
}

impl MetricResult {
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }
}

/// All three metrics on the same data/space; the soundness ordering
/// `certified ≤ exhaustive ≤ normal` holds by construction.
#[derive(Debug, Clone)]
pub struct Metrics {
    pub normal_acc: f64,
    pub certified_acc: f64,
    pub exhaustive_acc: f64,
    pub total: usize,
    pub normal_correct: usize,
    pub certified_correct: usize,
    pub exhaustive_correct: usize,
    pub failures: usize,
}

impl Metrics {
    pub fn ordering_holds(&self) -> bool {
        self.certified_correct <= self.exhaustive_correct
            && self.exhaustive_correct <= self.normal_correct
    }
}

pub fn evaluate(
    data: &Dataset,
    space: &PerturbationSpace,
    params: &ModelParams,
    kind: MetricKind,
    enum_cap: usize,
) -> Result<MetricResult> {
    data.check_labels(params.config.n_classes)?;
    if data.vocab.size() > params.config.vocab_size {
        return Err(Error::InvalidConfig(format!(
            "vocabulary has {} entries but the model embeds {}",
            data.vocab.size(),
            params.config.vocab_size
        )));
    }
    let mut correct = 0usize;
    let mut failures = 0usize;
    for ex in &data.examples {
        match kind {
            MetricKind::Normal => {
                let logits = params.forward_concrete(&ex.ids, AttnMode::Rnn)?;
                if argmax_first(&logits) == ex.label {
                    correct += 1;
                }
            }
            MetricKind::Certified => {
                match cert::certify(params, &data.vocab, space, &ex.words, ex.label) {
                    Ok(res) => {
                        if res.verdict == Verdict::Certified {
                            correct += 1;
                        }
                    }
                    Err(Error::PositionOverflow { .. }) => failures += 1,
                    Err(e) => return Err(e),
                }
            }
            MetricKind::Exhaustive => {
                match enumerate_space(space, &ex.words, enum_cap) {
                    Ok(members) => {
                        let mut all_ok = true;
                        for m in &members {
                            let ids = data.vocab.encode(&m.tokens);
                            let logits = match params.forward_concrete(&ids, AttnMode::Rnn) {
                                Ok(l) => l,
                                Err(Error::PositionOverflow { .. }) => {
                                    all_ok = false;
                                    failures += 1;
                                    break;
                                }
                                Err(e) => return Err(e),
                            };
                            if argmax_first(&logits) != ex.label {
                                all_ok = false;
                                break;
                            }
                        }
                        if all_ok {
                            correct += 1;
                        }
                    }
                    // strict policy: unenumerable examples count incorrect
                    Err(Error::SpaceTooLarge { .. }) => failures += 1,
                    Err(e) => return Err(e),
                }
            }
        }
    }
    Ok(MetricResult {
        kind,
        correct,
        total: data.len(),
        failures,
    })
}

pub fn evaluate_all(
    data: &Dataset,
    space: &PerturbationSpace,
    params: &ModelParams,
    enum_cap: usize,
) -> Result<Metrics> {
    let normal = evaluate(data, space, params, MetricKind::Normal, enum_cap)?;
    let certified = evaluate(data, space, params, MetricKind::Certified, enum_cap)?;
    let exhaustive = evaluate(data, space, params, MetricKind::Exhaustive, enum_cap)?;
    Ok(Metrics {
        normal_acc: normal.accuracy(),
        certified_acc: certified.accuracy(),
        exhaustive_acc: exhaustive.accuracy(),
        total: data.len(),
        normal_correct: normal.correct,
        certified_correct: certified.correct,
        exhaustive_correct: exhaustive.correct,
        failures: certified.failures + exhaustive.failures,
    })
}
