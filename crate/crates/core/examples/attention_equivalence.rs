//! Causal attention computed two ways: the softmax form and the two-layer
//! recurrence. They are the same function — the recurrence just arrives at
//! the final state one position at a time, carrying a running value vector
//! `f` and log-denominator `g` instead of all keys and values.
//!
//! Run: `cargo run --release -p textcert --example attention_equivalence`

use textcert::attention::{attend_recurrence, attend_softmax, recurrence_trace};
use textcert::numerics::dot_slice;
use textcert::rng::Rng;

fn main() {
    let mut rng = Rng::new(7);

    // one small instance, spelled out
    let d = 3;
    let n = 5;
    let q: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
    let keys: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| rng.normal()).collect())
        .collect();
    let values: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| rng.normal()).collect())
        .collect();

    let softmax_form = attend_softmax(&q, &keys, &values).unwrap();
    let recurrence_form = attend_recurrence(&q, &keys, &values).unwrap();
    println!("softmax form:    {softmax_form:>8.5?}");
    println!("recurrence form: {recurrence_form:>8.5?}");

    // the recurrence state after step i already equals attention over the
    // first i positions, and e^g is the partial softmax denominator
    let scores: Vec<f64> = keys.iter().map(|k| dot_slice(&q, k)).collect();
    println!("\nstep-by-step state (f_i = attention over prefix, e^g_i = partial denominator):");
    let mut partial = 0.0;
    for (i, (f, g)) in recurrence_trace(&scores, &values)
        .unwrap()
        .iter()
        .enumerate()
    {
        partial += scores[i].exp();
        println!(
            "  i={} f={:>8.5?} e^g={:.6} (direct sum {:.6})",
            i + 1,
            f,
            g.exp(),
            partial
        );
    }

    // and at scale: 1000 random instances
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
        let a = attend_softmax(&q, &keys, &values).unwrap();
        let b = attend_recurrence(&q, &keys, &values).unwrap();
        for (x, y) in a.iter().zip(&b) {
            max_gap = max_gap.max((x - y).abs());
        }
    }
    println!("\n1000 random instances (n <= 16, d <= 8): max gap {max_gap:.2e}");
}
