//! The perturbation-space DSL: budgeted string transformations and their
//! exhaustive enumeration with index mappings.
//!
//! Uses the shipped resources in `crates/core/data/`: a two-word stopword
//! list and a one-line substitution table.
//!
//! Run: `cargo run -p textcert --example enumerate_space`

use std::path::Path;

use textcert::data::tokenize;
use textcert::perturb::{enumerate_space, parse_space_spec};

fn main() {
    let data_dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    let spec = "Del(stop.txt):1,Sub(movie.tsv):1";
    let space = parse_space_spec(spec, &data_dir).unwrap();
    let x = tokenize("to the movie");

    println!("space: {spec}");
    println!("input: {:?}\n", x.join(" "));
    let members = enumerate_space(&space, &x, 1_000_000).unwrap();
    println!("members of S(x), with index mapping back into x:");
    for m in &members {
        println!("  {:<16} mapping {:?}", m.tokens.join(" "), m.mapping);
    }
    println!("count={}", members.len());

    // budgets are "up to": growing one never removes members
    let grown = parse_space_spec("Del(stop.txt):2,Sub(movie.tsv):1", &data_dir).unwrap();
    let grown_members = enumerate_space(&grown, &x, 1_000_000).unwrap();
    println!(
        "\nwith Del budget 2 instead of 1: {} members (superset)",
        grown_members.len()
    );
}
