//! Deterministic SST2-style sentence synthesis.
//!
//! Short binary-sentiment sentences built from templated filler words plus
//! sentiment words drawn from synonym-closed groups: every synonym of a
//! positive word is positive, so substitution and duplication never flip a
//! label and exhaustive robustness is achievable. The matching synonym
//! table and a stopword list ship alongside the sentences; everything is a
//! pure function of (count, seed).

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::rng::Rng;

const POS_GROUPS: &[&[&str]] = &[
    &["good", "great", "fine"],
    &["lovely", "charming", "sweet"],
    &["brilliant", "clever", "smart"],
    &["funny", "witty", "amusing"],
    &["strong", "solid", "sturdy"],
    &["fresh", "lively", "crisp"],
    &["moving", "touching", "stirring"],
    &["bold", "daring", "brave"],
];

const NEG_GROUPS: &[&[&str]] = &[
    &["bad", "awful", "poor"],
    &["dull", "boring", "tedious"],
    &["weak", "flimsy", "frail"],
    &["messy", "sloppy", "untidy"],
    &["bland", "stale", "flat"],
    &["slow", "sluggish", "draggy"],
    &["shallow", "hollow", "vacant"],
    &["clumsy", "awkward", "stiff"],
];

const NOUN_GROUPS: &[&[&str]] = &[&["movie", "film"], &["story", "tale"]];

const INTENSIFIERS: &[&str] = &["very", "quite", "rather", "truly"];

/// TSV mapping each group member to the rest of its group.
pub fn synonym_table_tsv() -> String {
    let mut out = String::new();
    for group in POS_GROUPS.iter().chain(NEG_GROUPS).chain(NOUN_GROUPS) {
        for (i, w) in group.iter().enumerate() {
            out.push_str(w);
            for (j, alt) in group.iter().enumerate() {
                if i != j {
                    out.push('\t');
                    out.push_str(alt);
                }
            }
            out.push('\n');
        }
    }
    out
}

pub fn stopword_list() -> String {
    "the\na\nthis\nthat\nto\n".to_string()
}

fn pick<'a>(rng: &mut Rng, xs: &[&'a str]) -> &'a str {
    xs[rng.below(xs.len())]
}

fn pick_group<'a>(rng: &mut Rng, groups: &[&[&'a str]]) -> &'a str {
    let g = groups[rng.below(groups.len())];
    g[rng.below(g.len())]
}

/// One sentence of the requested sentiment, 4–8 tokens.
fn sentence(rng: &mut Rng, label: usize) -> Vec<String> {
    let groups = if label == 1 { POS_GROUPS } else { NEG_GROUPS };
    let s1 = pick_group(rng, groups);
    let s2 = pick_group(rng, groups);
    let noun = pick_group(rng, NOUN_GROUPS);
    let intens = pick(rng, INTENSIFIERS);
    let toks: Vec<&str> = match rng.below(8) {
        0 => vec!["the", noun, "was", s1],
        1 => vec!["the", noun, "was", intens, s1],
        2 => vec!["this", noun, "felt", s1, "and", s2],
        3 => vec!["a", s1, noun, "with", s2, "acting"],
        4 => vec!["the", "plot", "seemed", s1],
        5 => vec![s1, "acting", "and", "a", s2, "script"],
        6 => vec!["it", "was", "a", intens, s1, noun],
        _ => vec!["the", "cast", "seemed", s1, "and", intens, s2],
    };
    toks.into_iter().map(str::to_string).collect()
}

/// `n` labeled token sequences, balanced and seeded.
pub fn generate_tokens(n: usize, seed: u64) -> Vec<(Vec<String>, usize)> {
    let mut rng = Rng::derive(seed, 0x0073_796e_7468);
    (0..n).map(|i| (sentence(&mut rng, i % 2), i % 2)).collect()
}

/// The same sentences as TSV lines `label<TAB>text`.
pub fn generate_tsv(n: usize, seed: u64) -> String {
    let mut out = String::new();
    for (tokens, label) in generate_tokens(n, seed) {
        out.push_str(&label.to_string());
        out.push('\t');
        out.push_str(&tokens.join(" "));
        out.push('\n');
    }
    out
}

pub struct SynthFiles {
    pub train: PathBuf,
    pub eval: PathBuf,
    pub synonyms: PathBuf,
    pub stopwords: PathBuf,
}

/// Write a train/eval split plus the synonym and stopword resources.
pub fn write_corpus(dir: &Path, n_train: usize, n_eval: usize, seed: u64) -> Result<SynthFiles> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let write = |name: &str, content: String| -> Result<PathBuf> {
        let path = dir.join(name);
        std::fs::write(&path, content).map_err(|e| Error::io(path.display().to_string(), e))?;
        Ok(path)
    };
    Ok(SynthFiles {
        train: write("train.tsv", generate_tsv(n_train, seed))?,
        eval: write("eval.tsv", generate_tsv(n_eval, seed.wrapping_add(1)))?,
        synonyms: write("syn.tsv", synonym_table_tsv())?,
        stopwords: write("stop.txt", stopword_list())?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perturb::{enumerate_space, parse_space_spec};

    #[test]
    fn deterministic_and_balanced() {
        let a = generate_tokens(100, 7);
        let b = generate_tokens(100, 7);
        assert_eq!(a, b);
        let pos = a.iter().filter(|(_, l)| *l == 1).count();
        assert_eq!(pos, 50);
        for (tokens, _) in &a {
            assert!((4..=8).contains(&tokens.len()), "{tokens:?}");
        }
    }

    #[test]
    fn synonyms_never_flip_labels() {
        // every substitution alternative of a sentiment word stays in the
        // same sentiment class
        let pos: std::collections::BTreeSet<&str> =
            POS_GROUPS.iter().flat_map(|g| g.iter().copied()).collect();
        let neg: std::collections::BTreeSet<&str> =
            NEG_GROUPS.iter().flat_map(|g| g.iter().copied()).collect();
        assert!(pos.is_disjoint(&neg));
        for line in synonym_table_tsv().lines() {
            let fields: Vec<&str> = line.split('\t').collect();
            let word_pos = pos.contains(fields[0]);
            let word_neg = neg.contains(fields[0]);
            for alt in &fields[1..] {
                assert_eq!(pos.contains(alt), word_pos, "{line}");
                assert_eq!(neg.contains(alt), word_neg, "{line}");
            }
        }
    }

    #[test]
    fn spaces_stay_enumerable() {
        let dir = std::env::temp_dir().join("textcert-synth-tests");
        std::fs::create_dir_all(&dir).unwrap();
        std::fs::write(dir.join("syn.tsv"), synonym_table_tsv()).unwrap();
        let space = parse_space_spec("Dup():2,SubSyn(syn.tsv):2", &dir).unwrap();
        let mut max = 0usize;
        for (tokens, _) in generate_tokens(200, 3) {
            let members = enumerate_space(&space, &tokens, 5_000).unwrap();
            max = max.max(members.len());
        }
        assert!(max <= 1000, "space blew past the criterion cap: {max}");
    }
}
