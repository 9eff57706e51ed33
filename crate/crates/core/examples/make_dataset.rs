//! Materialize the synthetic sentiment corpus (train/eval TSVs plus the
//! synonym table and stopword list) for use with the CLI.
//!
//! Run: `cargo run -p textcert --example make_dataset -- [DIR] [N_TRAIN] [N_EVAL] [SEED]`
//!
//! Then, for instance:
//!
//! ```text
//! textcert train --data DIR/train.tsv --space "Dup():2,SubSyn(syn.tsv):2" \
//!     --mode certified --epochs 6 --lr 0.05 --d-model 16 \
//!     --data-dir DIR --out model.tcm
//! textcert eval --model model.tcm --data DIR/eval.tsv \
//!     --space "Dup():2,SubSyn(syn.tsv):2" --metric certified --data-dir DIR
//! ```

use std::path::PathBuf;

use textcert::synth;

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let dir = PathBuf::from(args.first().map(String::as_str).unwrap_or("synth-data"));
    let n_train: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(2000);
    let n_eval: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(300);
    let seed: u64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(42);

    let files = synth::write_corpus(&dir, n_train, n_eval, seed).unwrap();
    println!("wrote {}", files.train.display());
    println!("wrote {}", files.eval.display());
    println!("wrote {}", files.synonyms.display());
    println!("wrote {}", files.stopwords.display());
}
