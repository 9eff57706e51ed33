//! Central-finite-difference validation of the reverse-mode tape, up to
//! and including the full certified loss: the same generic code runs on
//! plain f64 for the difference quotients and on tape scalars for the
//! analytic gradient.
//!
//! Run: `cargo run --release -p textcert --example gradient_check`

use textcert::cert::margin_upper_bound;
use textcert::data::Vocab;
use textcert::model::{forward_rnn, slices_from_flat, ModelConfig, ModelParams};
use textcert::numerics::{finite_diff_check, softplus, Num, ScalarFn};
use textcert::perturb::{PerturbationSpace, Transformation};
use textcert::train::margin;

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
        let (upper, _) = margin_upper_bound(
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

fn main() {
    let vocab = Vocab::from_words(
        ["good", "bad", "fine", "movie", "plot"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
    );
    let table = [("good", "fine")]
        .iter()
        .map(|(w, a)| (w.to_string(), vec![a.to_string()]))
        .collect();
    let space = PerturbationSpace::new(vec![
        (Transformation::duplicate("Dup"), 1),
        (Transformation::substitute("SubSyn", table).unwrap(), 1),
    ])
    .unwrap();

    for (trial, words) in [
        vec!["good", "movie"],
        vec!["bad", "plot", "bad"],
        vec!["good", "movie", "good", "plot"],
    ]
    .into_iter()
    .enumerate()
    {
        let cfg = ModelConfig::new(vocab.size(), 8, 8);
        let params = ModelParams::init(cfg.clone(), 40 + trial as u64).unwrap();
        let f = CertLoss {
            cfg,
            vocab: vocab.clone(),
            space: space.clone(),
            words: words.iter().map(|s| s.to_string()).collect(),
            label: trial % 2,
        };
        let n_params = params.param_count();
        let err = finite_diff_check(&f, &params.flat(), 1e-5);
        println!(
            "certified loss on {:?} ({n_params} parameters): max rel err vs central differences = {err:.2e}",
            words.join(" ")
        );
    }
}
