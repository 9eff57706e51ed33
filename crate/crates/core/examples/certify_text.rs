//! Train a small classifier, then certify individual inputs against a
//! duplication + synonym space and inspect the verdicts and diagnostics.
//!
//! Run: `cargo run --release -p textcert --example certify_text`

use textcert::cert::certify;
use textcert::data::Dataset;
use textcert::model::ModelConfig;
use textcert::perturb::parse_space_spec;
use textcert::synth;
use textcert::train::{train, TrainConfig, TrainMode};

fn main() {
    let dir = std::env::temp_dir().join("textcert-example-certify");
    let files = synth::write_corpus(&dir, 600, 40, 11).unwrap();
    let data = Dataset::load_train(&files.train, 20_000).unwrap();
    let eval = Dataset::load_with_vocab(&files.eval, &data.vocab).unwrap();
    let space = parse_space_spec("Dup():2,SubSyn(syn.tsv):2", &dir).unwrap();

    let max_len = data.max_len().max(eval.max_len());
    let mcfg = ModelConfig::new(data.vocab.size(), 16, max_len + space.max_growth(max_len));
    let tcfg = TrainConfig {
        lr: 0.05,
        warm_epochs: 3,
        ..TrainConfig::new(TrainMode::Certified).with_epochs(6)
    };
    println!("training a certified model on {} sentences...", data.len());
    let params = train(&data, &space, &mcfg, &tcfg).unwrap();

    println!("\ncertifying the first 8 eval sentences against Dup():2,SubSyn(syn.tsv):2\n");
    for ex in eval.examples.iter().take(8) {
        let res = certify(&params, &eval.vocab, &space, &ex.words, ex.label).unwrap();
        println!(
            "{:<40} label={} verdict={:?} margin_upper={:+.4}",
            ex.words.join(" "),
            ex.label,
            res.verdict,
            res.worst_margin_upper
        );
        for b in &res.branches {
            println!(
                "    final_len={} keys={} final_candidates={} max_f_width={:.3e} margin_upper={:+.4}",
                b.final_len, b.key_count, b.final_candidates, b.max_f_width, b.margin_upper
            );
        }
    }
}
