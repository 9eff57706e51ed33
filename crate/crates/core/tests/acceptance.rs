//! Acceptance suite: one test per criterion, each printing a PASS/FAIL
//! line (visible with `cargo test --test acceptance -- --nocapture`).
//! Tolerances are pinned in the assertions.

use std::collections::BTreeMap;
use std::time::Instant;

use textcert::attention::{
    attend_recurrence, attend_softmax, recurrence_combine, recurrence_trace, MeetStats,
};
use textcert::cert::{self, Verdict};
use textcert::data::{Dataset, Vocab};
use textcert::model::{
    forward_abstract, forward_rnn, slices_from_flat, AttnMode, ModelConfig, ModelParams,
};
use textcert::numerics::{finite_diff_check, softplus, Num, ScalarFn};
use textcert::perturb::{enumerate_space, parse_space_spec, PerturbationSpace, Transformation};
use textcert::rng::Rng;
use textcert::synth;
use textcert::train::{self, evaluate_all, margin, TrainConfig, TrainMode};

fn report(criterion: &str, passed: bool, detail: &str) {
    println!(
        "criterion {criterion}: {} ({detail})",
        if passed { "PASS" } else { "FAIL" }
    );
    assert!(passed, "criterion {criterion}: {detail}");
}

fn vocab_from(words: &[&str]) -> Vocab {
    Vocab::from_words(words.iter().map(|s| s.to_string()).collect())
}

/// The tiny random world shared by criteria 4 and 6: models, inputs, and
/// a (Dup,1)+(SubSyn,1) space, all seeded.
struct TinyWorld {
    vocab: Vocab,
    space: PerturbationSpace,
}

impl TinyWorld {
    fn new() -> Self {
        let vocab = vocab_from(&["a", "b", "c", "d", "z", "w", "v"]);
        let table: BTreeMap<String, Vec<String>> =
            [("a", vec!["z", "v"]), ("b", vec!["w"]), ("c", vec!["z"])]
                .into_iter()
                .map(|(k, alts)| {
                    (
                        k.to_string(),
                        alts.into_iter().map(str::to_string).collect(),
                    )
                })
                .collect();
        let space = PerturbationSpace::new(vec![
            (Transformation::duplicate("Dup"), 1),
            (Transformation::substitute("SubSyn", table).unwrap(), 1),
        ])
        .unwrap();
        TinyWorld { vocab, space }
    }

    fn model(&self, trial: u64, rng: &mut Rng) -> ModelParams {
        let d_model = [8, 12, 16][rng.below(3)];
        let cfg = ModelConfig::new(self.vocab.size(), d_model, 12);
        ModelParams::init(cfg, 0xace0 + trial).unwrap()
    }

    fn input(&self, rng: &mut Rng) -> Vec<String> {
        let n = 1 + rng.below(8);
        (0..n)
            .map(|_| ["a", "b", "c", "d"][rng.below(4)].to_string())
            .collect()
    }
}

#[test]
fn criterion_01_recurrence_equivalence() {
    let t0 = Instant::now();
    let mut rng = Rng::new(101);
    let mut max_gap = 0.0f64;
    for _ in 0..1000 {
        let n = 1 + rng.below(16);
        let d = 1 + rng.below(8);
        let q: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let keys: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.normal()).collect())
            .collect();
        let values: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.normal()).collect())
            .collect();
        let softmax_form = attend_softmax(&q, &keys, &values).unwrap();
        let recurrence_form = attend_recurrence(&q, &keys, &values).unwrap();
        for (a, b) in softmax_form.iter().zip(&recurrence_form) {
            max_gap = max_gap.max((a - b).abs());
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    report(
        "01 recurrence-equivalence",
        max_gap <= 1e-5 && secs < 5.0,
        &format!("max inf-norm gap {max_gap:.2e} over 1000 instances in {secs:.2}s"),
    );
}

#[test]
fn criterion_02_stability_with_negative_control() {
    // independent oracle: explicit max-subtracted softmax, written here
    fn stable_softmax_oracle(scores: &[f64], values: &[Vec<f64>]) -> Vec<f64> {
        let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
        let z: f64 = w.iter().sum();
        let d = values[0].len();
        let mut out = vec![0.0; d];
        for (wi, v) in w.iter().zip(values) {
            for (o, x) in out.iter_mut().zip(v) {
                *o += wi * x / z;
            }
        }
        out
    }
    // negative control: the recurrence with the naive log(e^a + e^b);
    // returns whether the log-denominator overflowed out of the finite
    // range (after which the gates freeze and the state goes wrong)
    fn naive_recurrence_overflows(scores: &[f64]) -> bool {
        let mut g = scores[0];
        let mut overflowed = false;
        for s in &scores[1..] {
            g = (g.exp() + s.exp()).ln();
            overflowed |= !g.is_finite();
        }
        overflowed
    }

    let mut rng = Rng::new(202);
    let mut worst_rel = 0.0f64;
    let mut stable_always_finite = true;
    let mut naive_overflows = 0usize;
    let cases = 100;
    for _ in 0..cases {
        let n = 2 + rng.below(8);
        let scores: Vec<f64> = (0..n).map(|_| rng.range(-1e4, 1e4)).collect();
        let values: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..3).map(|_| rng.normal()).collect())
            .collect();
        let stable = recurrence_combine(&scores, &values).unwrap();
        stable_always_finite &= stable.iter().all(|x| x.is_finite());
        let oracle = stable_softmax_oracle(&scores, &values);
        let norm = oracle.iter().map(|x| x.abs()).fold(1e-12, f64::max);
        for (a, b) in stable.iter().zip(&oracle) {
            worst_rel = worst_rel.max((a - b).abs() / norm);
        }
        if naive_recurrence_overflows(&scores) {
            naive_overflows += 1;
        }
    }
    let naive_scalar = (9000.0f64.exp() + 8000.0f64.exp()).ln();
    report(
        "02 stability",
        stable_always_finite
            && worst_rel <= 1e-6
            && naive_overflows > cases / 2
            && !naive_scalar.is_finite(),
        &format!(
            "stable form finite with rel gap {worst_rel:.2e} vs max-subtracted softmax; naive log(e^a+e^b) overflowed on {naive_overflows}/{cases} instances"
        ),
    );
}

#[test]
fn criterion_03_log_denominator_invariant() {
    let mut rng = Rng::new(303);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = 2 + rng.below(15);
        let scores: Vec<f64> = (0..n).map(|_| rng.normal() * 4.0).collect();
        let values: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..2).map(|_| rng.normal()).collect())
            .collect();
        let trace = recurrence_trace(&scores, &values).unwrap();
        let mut partial = 0.0;
        for (i, (_, g)) in trace.iter().enumerate() {
            partial += scores[i].exp();
            worst = worst.max((g.exp() - partial).abs() / partial);
        }
    }
    report(
        "03 log-denominator-invariant",
        worst <= 1e-9,
        &format!("max per-step rel err {worst:.2e} over 100 instances"),
    );
}

fn run_tiny_world_soundness() -> (usize, usize, usize, MeetStats, f64) {
    let world = TinyWorld::new();
    let mut rng = Rng::new(404);
    let mut members_checked = 0usize;
    let mut certificates = 0usize;
    let mut violations = 0usize;
    let mut meet = MeetStats::default();
    let t0 = Instant::now();
    for trial in 0..200 {
        let params = world.model(trial, &mut rng);
        let words = world.input(&mut rng);
        let members = enumerate_space(&world.space, &words, 200).unwrap();
        assert!(members.len() <= 200);

        let ids = world.vocab.encode(&words);
        let logits = params.forward_concrete(&ids, AttnMode::Rnn).unwrap();
        let label = if logits[1] > logits[0] { 1 } else { 0 };
        let res = cert::certify(&params, &world.vocab, &world.space, &words, label).unwrap();
        for b in &res.branches {
            meet.merge(&b.meet);
        }
        if res.verdict == Verdict::Certified {
            certificates += 1;
        }

        // every member's concrete logits sit inside its branch's logit box
        let mut boxes: BTreeMap<usize, textcert::interval::IvBox> = BTreeMap::new();
        for m in &members {
            let ell = m.tokens.len();
            if let std::collections::btree_map::Entry::Vacant(e) = boxes.entry(ell) {
                let (terminal, _) =
                    cert::propagate(&params, &world.vocab, &world.space, &words, ell).unwrap();
                let logit_box =
                    forward_abstract(&params.config, &params.slices(), &terminal).unwrap();
                e.insert(logit_box);
            }
            let zl = params
                .forward_concrete(&world.vocab.encode(&m.tokens), AttnMode::Rnn)
                .unwrap();
            members_checked += 1;
            if !boxes[&ell].contains(&zl) {
                violations += 1;
            }
            let pred = if zl[1] > zl[0] { 1 } else { 0 };
            if res.verdict == Verdict::Certified && pred != label {
                violations += 1;
            }
        }
    }
    (
        members_checked,
        certificates,
        violations,
        meet,
        t0.elapsed().as_secs_f64(),
    )
}

#[test]
fn criterion_04_soundness_no_false_certificates() {
    let (members, certificates, violations, _, secs) = run_tiny_world_soundness();
    report(
        "04 soundness",
        violations == 0 && secs < 120.0,
        &format!(
            "200 models, {members} members inside branch boxes, {certificates} certificates, {violations} violations, {secs:.1}s"
        ),
    );
}

#[test]
fn criterion_05_degenerate_exactness() {
    let vocab = vocab_from(&["a", "b", "c", "d"]);
    let mut rng = Rng::new(505);
    let mut worst = 0.0f64;
    for trial in 0..100 {
        let cfg = ModelConfig::new(vocab.size(), 8, 10);
        let params = ModelParams::init(cfg, 9000 + trial).unwrap();
        let n = 1 + rng.below(8);
        let words: Vec<String> = (0..n)
            .map(|_| ["a", "b", "c", "d"][rng.below(4)].to_string())
            .collect();
        let label = rng.below(2);
        let res =
            cert::certify(&params, &vocab, &PerturbationSpace::empty(), &words, label).unwrap();
        let logits = params
            .forward_concrete(&vocab.encode(&words), AttnMode::Rnn)
            .unwrap();
        let concrete = logits
            .iter()
            .enumerate()
            .filter(|(c, _)| *c != label)
            .map(|(_, l)| l - logits[label])
            .fold(f64::NEG_INFINITY, f64::max);
        worst = worst.max((res.worst_margin_upper - concrete).abs());
    }
    report(
        "05 degenerate-exactness",
        worst <= 1e-12,
        &format!("max |bound - concrete margin| {worst:.2e} over 100 empty-space cases"),
    );
}

#[test]
fn criterion_06_meet_improvement() {
    let (_, _, _, meet, _) = run_tiny_world_soundness();
    let frac = meet.strict_step_fraction();
    report(
        "06 meet-improvement",
        meet.max_excess <= 1e-8 && frac >= 0.01 && meet.steps > 0,
        &format!(
            "{} abstract steps: met width never above either rewriting (max normalized excess {:.1e}), strictly smaller on {:.1}% of steps",
            meet.steps,
            meet.max_excess,
            100.0 * frac
        ),
    );
}

#[test]
fn criterion_07_gradient_correctness() {
    struct CertLoss {
        cfg: ModelConfig,
        vocab: Vocab,
        space: PerturbationSpace,
        words: Vec<String>,
        label: usize,
    }
    impl ScalarFn for CertLoss {
        fn eval<S: Num>(&self, xs: &[S]) -> S {
            let p = slices_from_flat(&self.cfg, xs);
            let ids: Vec<u32> = self.words.iter().map(|w| self.vocab.id(w)).collect();
            let logits = forward_rnn(&self.cfg, &p, &ids).unwrap();
            let clean = softplus(&margin(&logits, self.label));
            let (upper, _) = cert::margin_upper_bound(
                &self.cfg,
                &p,
                &self.vocab,
                &self.space,
                &self.words,
                self.label,
            )
            .unwrap();
            clean.mul_const(0.25).add(&softplus(&upper).mul_const(0.75))
        }
    }

    let world = TinyWorld::new();
    let mut rng = Rng::new(707);
    let mut worst = 0.0f64;
    for trial in 0..10 {
        let cfg = ModelConfig::new(world.vocab.size(), 4, 8);
        let params = ModelParams::init(cfg.clone(), 7700 + trial).unwrap();
        let words: Vec<String> = (0..4)
            .map(|_| ["a", "b", "c", "d"][rng.below(4)].to_string())
            .collect();
        let f = CertLoss {
            cfg,
            vocab: world.vocab.clone(),
            space: world.space.clone(),
            words,
            label: rng.below(2),
        };
        worst = worst.max(finite_diff_check(&f, &params.flat(), 1e-5));
    }
    report(
        "07 gradient-correctness",
        worst <= 1e-4,
        &format!("max rel err {worst:.2e} vs central differences on 10 examples"),
    );
}

#[test]
fn criterion_08_metric_ordering() {
    let dir = std::env::temp_dir().join("textcert-acceptance-c8");
    let files = synth::write_corpus(&dir, 60, 40, 8).unwrap();
    let data = Dataset::load_train(&files.train, 20_000).unwrap();
    let eval = Dataset::load_with_vocab(&files.eval, &data.vocab).unwrap();
    let space = parse_space_spec("Dup():1,SubSyn(syn.tsv):1", &dir).unwrap();
    let max_len = data.max_len().max(eval.max_len());

    let mut configs = 0usize;
    let mut all_ordered = true;
    // untrained models at several widths, plus one briefly trained model
    for (d_model, seed) in [(8usize, 1u64), (12, 2), (16, 3)] {
        let cfg = ModelConfig::new(
            data.vocab.size(),
            d_model,
            max_len + space.max_growth(max_len),
        );
        let params = ModelParams::init(cfg, seed).unwrap();
        let m = evaluate_all(&eval, &space, &params, 5_000).unwrap();
        all_ordered &= m.ordering_holds();
        configs += 1;
    }
    let cfg = ModelConfig::new(data.vocab.size(), 8, max_len + space.max_growth(max_len));
    let tcfg = TrainConfig {
        lr: 0.05,
        ..TrainConfig::new(TrainMode::Normal).with_epochs(3)
    };
    let params = train::train(&data, &space, &cfg, &tcfg).unwrap();
    let m = evaluate_all(&eval, &space, &params, 5_000).unwrap();
    all_ordered &= m.ordering_holds();
    configs += 1;

    report(
        "08 metric-ordering",
        all_ordered,
        &format!("certified <= exhaustive <= normal on all {configs} evaluated configurations"),
    );
}

#[test]
fn criterion_09_certified_training_advantage() {
    let t0 = Instant::now();
    let dir = std::env::temp_dir().join("textcert-acceptance-c9");
    let files = synth::write_corpus(&dir, 2000, 300, 42).unwrap();
    let data = Dataset::load_train(&files.train, 20_000).unwrap();
    let eval_full = Dataset::load_with_vocab(&files.eval, &data.vocab).unwrap();
    let space = parse_space_spec("Dup():2,SubSyn(syn.tsv):2", &dir).unwrap();

    // restrict to |S(x)| <= 1000 (the generator stays under this anyway)
    let eval_examples: Vec<_> = eval_full
        .examples
        .iter()
        .filter(|ex| {
            enumerate_space(&space, &ex.words, 1000)
                .map(|m| m.len() <= 1000)
                .unwrap_or(false)
        })
        .cloned()
        .collect();
    let eval = Dataset {
        examples: eval_examples,
        vocab: eval_full.vocab.clone(),
    };
    assert!(eval.len() >= 200, "too few in-cap eval examples");

    let max_len = data.max_len().max(eval.max_len());
    let mut mcfg = ModelConfig::new(data.vocab.size(), 16, max_len + space.max_growth(max_len));
    mcfg.n_heads = 2;

    let mut seeds_passing_gap = 0usize;
    let mut seeds_passing_exh = 0usize;
    let mut lines = Vec::new();
    for seed in 0..3u64 {
        let mut by_mode = BTreeMap::new();
        for mode in [TrainMode::Normal, TrainMode::Augment, TrainMode::Certified] {
            let tcfg = TrainConfig {
                mode,
                lr: 0.05,
                seed,
                warm_epochs: 3,
                ..TrainConfig::new(mode).with_epochs(6)
            };
            let params = train::train(&data, &space, &mcfg, &tcfg).unwrap();
            let m = evaluate_all(&eval, &space, &params, 2000).unwrap();
            assert!(m.ordering_holds(), "metric ordering violated: {m:?}");
            by_mode.insert(mode, m);
        }
        let certified = &by_mode[&TrainMode::Certified];
        let augment = &by_mode[&TrainMode::Augment];
        let normal = &by_mode[&TrainMode::Normal];
        let gap = certified.certified_acc - augment.certified_acc;
        let exh_ok = certified.exhaustive_acc >= normal.exhaustive_acc - 0.05;
        if gap >= 0.20 {
            seeds_passing_gap += 1;
        }
        if exh_ok {
            seeds_passing_exh += 1;
        }
        lines.push(format!(
            "seed {seed}: certified CF {:.2} vs augment CF {:.2} (gap {:.2}); certified EX {:.2} vs normal EX {:.2}",
            certified.certified_acc, augment.certified_acc, gap,
            certified.exhaustive_acc, normal.exhaustive_acc
        ));
    }
    let secs = t0.elapsed().as_secs_f64();
    for l in &lines {
        println!("  {l}");
    }
    report(
        "09 certified-training-advantage",
        seeds_passing_gap >= 2 && seeds_passing_exh >= 2 && secs < 1800.0,
        &format!(
            "gap >= 20 points on {seeds_passing_gap}/3 seeds, exhaustive within 5 points of normal-trained on {seeds_passing_exh}/3 seeds, {secs:.0}s"
        ),
    );
}

#[test]
fn criterion_10_memory_structure() {
    let vocab = vocab_from(&["a", "b"]);
    let cfg = ModelConfig::new(vocab.size(), 8, 44);
    let params = ModelParams::init(cfg.clone(), 10_000).unwrap();
    let table: BTreeMap<String, Vec<String>> = [("a".to_string(), vec!["b".to_string()])]
        .into_iter()
        .collect();
    let space = PerturbationSpace::new(vec![
        (Transformation::duplicate("Dup"), 1),
        (Transformation::substitute("SubSyn", table).unwrap(), 1),
    ])
    .unwrap();

    let expected = cfg.n_heads * (2 * cfg.d_head() + 2);
    let mut per_key_sizes = std::collections::BTreeSet::new();
    for n in [2usize, 8, 20, 40] {
        let words: Vec<String> = (0..n)
            .map(|i| if i % 2 == 0 { "a" } else { "b" }.to_string())
            .collect();
        let (terminal, _) = cert::propagate(&params, &vocab, &space, &words, n).unwrap();
        let scalars: usize = terminal.iter().map(|h| h.scalar_count()).sum();
        per_key_sizes.insert(scalars);

        let ids = vocab.encode(&words);
        let logits = params.forward_concrete(&ids, AttnMode::Rnn).unwrap();
        let label = if logits[1] > logits[0] { 1 } else { 0 };
        let res = cert::certify(&params, &vocab, &space, &words, label).unwrap();
        per_key_sizes.insert(res.state_scalars_per_key);
    }
    report(
        "10 memory-structure",
        per_key_sizes.len() == 1 && per_key_sizes.contains(&expected),
        &format!(
            "state is {expected} scalars per DP key at lengths 2, 8, 20, 40 (no per-position storage)"
        ),
    );
}
