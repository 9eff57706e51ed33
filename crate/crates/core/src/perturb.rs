//! Programmable string perturbation spaces: budgeted match/replace rewrites
//! over whitespace tokens, their exhaustive enumeration with index
//! mappings, and the little spec grammar that names them on the CLI.
//!
//! A transformation is a match predicate over a single token plus a replace
//! function to a finite set of token sequences (empty = deletion, length
//! two = duplication). A space pairs each transformation with a budget: up
//! to that many applications, at disjoint positions, at most one
//! transformation per original position. Applying zero rewrites is always
//! allowed, so the original string is a member of its own space.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// How one application rewrites a matched token.
#[derive(Debug, Clone)]
pub enum TransformKind {
    /// Match tokens in the set; replace with the empty sequence.
    Delete { stopwords: BTreeSet<String> },
    /// Match keys of the table; replace with one single-token alternative.
    Substitute {
        table: BTreeMap<String, Vec<String>>,
    },
    /// Match any token; replace with the token twice.
    Duplicate,
}

#[derive(Debug, Clone)]
pub struct Transformation {
    pub name: String,
    pub kind: TransformKind,
}

impl Transformation {
    pub fn delete(name: impl Into<String>, stopwords: BTreeSet<String>) -> Result<Self> {
        let name = name.into();
        if stopwords.is_empty() {
            return Err(Error::EmptyResource(name));
        }
        Ok(Transformation {
            name,
            kind: TransformKind::Delete { stopwords },
        })
    }

    pub fn substitute(
        name: impl Into<String>,
        table: BTreeMap<String, Vec<String>>,
    ) -> Result<Self> {
        let name = name.into();
        if table.is_empty() {
            return Err(Error::EmptyResource(name));
        }
        // a transformation must be able to change something
        for (word, alts) in &table {
            if alts.is_empty() || alts.iter().all(|a| a == word) {
                return Err(Error::BadResource {
                    path: name.clone(),
                    line: 0,
                    msg: format!("{word:?} maps only to itself"),
                });
            }
        }
        Ok(Transformation {
            name,
            kind: TransformKind::Substitute { table },
        })
    }

    pub fn duplicate(name: impl Into<String>) -> Self {
        Transformation {
            name: name.into(),
            kind: TransformKind::Duplicate,
        }
    }

    /// The match predicate φ.
    pub fn matches(&self, token: &str) -> bool {
        match &self.kind {
            TransformKind::Delete { stopwords } => stopwords.contains(token),
            TransformKind::Substitute { table } => table.contains_key(token),
            TransformKind::Duplicate => true,
        }
    }

    /// The replace function f: matched token → set of replacement sequences.
    pub fn replacements(&self, token: &str) -> Vec<Vec<String>> {
        match &self.kind {
            TransformKind::Delete { stopwords } => {
                if stopwords.contains(token) {
                    vec![vec![]]
                } else {
                    vec![]
                }
            }
            TransformKind::Substitute { table } => table
                .get(token)
                .map(|alts| {
                    alts.iter()
                        .filter(|a| a.as_str() != token)
                        .map(|a| vec![a.clone()])
                        .collect()
                })
                .unwrap_or_default(),
            TransformKind::Duplicate => vec![vec![token.to_string(), token.to_string()]],
        }
    }
}

/// Budgeted composition of transformations.
#[derive(Debug, Clone, Default)]
pub struct PerturbationSpace {
    pub items: Vec<(Transformation, u32)>,
}

impl PerturbationSpace {
    pub fn new(items: Vec<(Transformation, u32)>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for (t, _) in &items {
            if !seen.insert(t.name.clone()) {
                return Err(Error::InvalidConfig(format!(
                    "duplicate transformation name {:?}",
                    t.name
                )));
            }
        }
        Ok(PerturbationSpace { items })
    }

    pub fn empty() -> Self {
        PerturbationSpace::default()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty() || self.items.iter().all(|(_, b)| *b == 0)
    }

    /// Copy of this space with every budget scaled by `frac` (rounded
    /// down); the training ramp uses this.
    pub fn scaled(&self, frac: f64) -> PerturbationSpace {
        PerturbationSpace {
            items: self
                .items
                .iter()
                .map(|(t, b)| (t.clone(), (f64::from(*b) * frac).floor() as u32))
                .collect(),
        }
    }

    /// Total number of insertions the space can add to a string of length
    /// `len` (duplications), used to size the position table.
    pub fn max_growth(&self, len: usize) -> usize {
        self.items
            .iter()
            .map(|(t, b)| match t.kind {
                TransformKind::Duplicate => (*b as usize).min(len),
                _ => 0,
            })
            .sum()
    }
}

/// A member of `S(x)` together with its index mapping back into `x`
/// (1-based; duplicated tokens map to their source, substituted tokens to
/// the substituted position).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PerturbedString {
    pub tokens: Vec<String>,
    pub mapping: Vec<usize>,
}

/// All distinct strings reachable from `x` within the budgets, each with
/// its index mapping, the original string included. Deduplicated by token
/// sequence, first derivation wins. Errors out once more than `cap`
/// members accumulate.
pub fn enumerate_space(
    space: &PerturbationSpace,
    x: &[String],
    cap: usize,
) -> Result<Vec<PerturbedString>> {
    if x.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut out = Vec::new();
    let mut seen: HashSet<Vec<String>> = HashSet::new();
    let mut budgets: Vec<u32> = space.items.iter().map(|(_, b)| *b).collect();
    let mut tokens: Vec<String> = Vec::with_capacity(x.len() + 2);
    let mut mapping: Vec<usize> = Vec::with_capacity(x.len() + 2);
    walk(
        space,
        x,
        0,
        &mut budgets,
        &mut tokens,
        &mut mapping,
        &mut seen,
        &mut out,
        cap,
    )?;
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn walk(
    space: &PerturbationSpace,
    x: &[String],
    j: usize,
    budgets: &mut [u32],
    tokens: &mut Vec<String>,
    mapping: &mut Vec<usize>,
    seen: &mut HashSet<Vec<String>>,
    out: &mut Vec<PerturbedString>,
    cap: usize,
) -> Result<()> {
    if j == x.len() {
        if !tokens.is_empty() && seen.insert(tokens.clone()) {
            if out.len() >= cap {
                return Err(Error::SpaceTooLarge { cap });
            }
            out.push(PerturbedString {
                tokens: tokens.clone(),
                mapping: mapping.clone(),
            });
        }
        return Ok(());
    }
    let word = &x[j];

    // copy
    tokens.push(word.clone());
    mapping.push(j + 1);
    walk(space, x, j + 1, budgets, tokens, mapping, seen, out, cap)?;
    tokens.pop();
    mapping.pop();

    // apply one transformation at this position
    for (ti, (t, _)) in space.items.iter().enumerate() {
        if budgets[ti] == 0 || !t.matches(word) {
            continue;
        }
        budgets[ti] -= 1;
        for replacement in t.replacements(word) {
            let pushed = replacement.len();
            for r in replacement {
                tokens.push(r);
                mapping.push(j + 1);
            }
            walk(space, x, j + 1, budgets, tokens, mapping, seen, out, cap)?;
            for _ in 0..pushed {
                tokens.pop();
                mapping.pop();
            }
        }
        budgets[ti] += 1;
    }
    Ok(())
}

// --- resources and the spec grammar -------------------------------------

/// One word per line, lowercased.
pub fn load_stopwords(path: &Path) -> Result<BTreeSet<String>> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let set: BTreeSet<String> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_lowercase)
        .collect();
    if set.is_empty() {
        return Err(Error::EmptyResource(path.display().to_string()));
    }
    Ok(set)
}

/// UTF-8 TSV, one line per word: `word<TAB>alt1<TAB>alt2...`. Fields must
/// be single tokens (no embedded whitespace).
pub fn load_synonyms(path: &Path) -> Result<BTreeMap<String, Vec<String>>> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut table = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split('\t').map(str::trim);
        let word = fields.next().unwrap_or("").to_lowercase();
        let alts: Vec<String> = fields
            .filter(|f| !f.is_empty())
            .map(str::to_lowercase)
            .collect();
        if word.is_empty() || alts.is_empty() {
            return Err(Error::BadResource {
                path: path.display().to_string(),
                line: i + 1,
                msg: "need `word<TAB>alt...`".into(),
            });
        }
        for f in std::iter::once(&word).chain(&alts) {
            if f.split_whitespace().count() != 1 {
                return Err(Error::BadResource {
                    path: path.display().to_string(),
                    line: i + 1,
                    msg: format!("field {f:?} is not a single token"),
                });
            }
        }
        table.insert(word, alts);
    }
    if table.is_empty() {
        return Err(Error::EmptyResource(path.display().to_string()));
    }
    Ok(table)
}

/// Construct a built-in transformation by name: `Del` (needs a stopword
/// file), `Sub`/`SubSyn` (need a word→alternatives TSV), `Dup` (no
/// resource).
pub fn builtin(name: &str, resource: Option<&Path>, data_dir: &Path) -> Result<Transformation> {
    let resolve = |p: &Path| -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            data_dir.join(p)
        }
    };
    match name {
        "Del" => {
            let path = resource.ok_or_else(|| Error::EmptyResource("Del needs a file".into()))?;
            Transformation::delete(name, load_stopwords(&resolve(path))?)
        }
        "Sub" | "SubSyn" => {
            let path =
                resource.ok_or_else(|| Error::EmptyResource(format!("{name} needs a file")))?;
            Transformation::substitute(name, load_synonyms(&resolve(path))?)
        }
        "Dup" => Ok(Transformation::duplicate(name)),
        other => Err(Error::UnknownTransformation(other.to_string())),
    }
}

/// Parse `item ("," item)*` where `item := NAME "(" [FILE] ")" ":" INT`;
/// the empty string parses to the identity-only space. Resource paths
/// resolve relative to `data_dir`.
pub fn parse_space_spec(text: &str, data_dir: &Path) -> Result<PerturbationSpace> {
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return Ok(PerturbationSpace::empty());
    }
    let mut items = Vec::new();
    let mut offset = 0usize;
    for part in text.split(',') {
        let item = part.trim();
        let pos = offset + (part.len() - part.trim_start().len());
        offset += part.len() + 1;
        if item.is_empty() {
            return Err(Error::SpaceSyntax {
                pos,
                msg: "empty item".into(),
            });
        }
        let open = item.find('(').ok_or(Error::SpaceSyntax {
            pos,
            msg: "expected '('".into(),
        })?;
        let close = item.find(')').ok_or(Error::SpaceSyntax {
            pos,
            msg: "expected ')'".into(),
        })?;
        if close < open {
            return Err(Error::SpaceSyntax {
                pos,
                msg: "')' before '('".into(),
            });
        }
        let name = &item[..open];
        let arg = item[open + 1..close].trim();
        let rest = &item[close + 1..];
        let budget_str = rest.strip_prefix(':').ok_or(Error::SpaceSyntax {
            pos: pos + close,
            msg: "expected ':' budget".into(),
        })?;
        let budget: u32 = budget_str.trim().parse().map_err(|_| Error::SpaceSyntax {
            pos: pos + close + 1,
            msg: format!("bad budget {budget_str:?}"),
        })?;
        let resource = if arg.is_empty() {
            None
        } else {
            Some(PathBuf::from(arg))
        };
        let t = builtin(name, resource.as_deref(), data_dir)?;
        items.push((t, budget));
    }
    PerturbationSpace::new(items)
}
