//! The certification engine: a dynamic program over perturbed prefixes
//! carrying abstract recurrence states.
//!
//! A DP key is `(i, j, b)` — `i` perturbed tokens emitted, `j` original
//! tokens consumed, `b` the vector of remaining budgets — and the run is
//! branched per achievable final length `ℓ`. Every edge consumes one
//! original token:
//!
//! - copy: emit the original token at position `i+1`;
//! - substitute: emit one replacement token at `i+1`, spending budget;
//! - delete: emit nothing, spending budget;
//! - duplicate: emit the token at `i+1` and `i+2` atomically, spending
//!   budget.
//!
//! Each emission pushes the per-head abstract state through one recurrence
//! step with the score interval `q·k` taken against the branch's
//! final-query hull; states arriving at the same key merge by join, and
//! keys that cannot reach `(ℓ, len(x))` are pruned by a boolean
//! reachability pass run beforehand. The same pass yields the set of
//! tokens that can occupy the final position, whose embeddings give the
//! query hull — sound because the true final query of every length-`ℓ`
//! member lies inside it.
//!
//! One abstract state stores `n_heads · (2·d_head + 2)` scalars no matter
//! how long the prefix is; nothing per-position is ever retained.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::attention::{abstract_step, AbstractHeadState, MeetStats};
use crate::data::Vocab;
use crate::error::{Error, Result};
use crate::interval::{Interval, IvBox};
use crate::model::{embed_token, forward_abstract, ModelConfig, ModelParams, ParamSlices};
use crate::numerics::matvec_slice;
use crate::numerics::Num;
use crate::perturb::{PerturbationSpace, TransformKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Certified,
    Unknown,
}

/// Per-final-length diagnostics.
#[derive(Debug, Clone)]
pub struct BranchDiag {
    pub final_len: usize,
    /// DP keys that carried a state across the whole branch.
    pub key_count: usize,
    /// Widest f-interval seen in any state.
    pub max_f_width: f64,
    /// Tokens that can occupy the final position.
    pub final_candidates: usize,
    pub meet: MeetStats,
    /// Upper bound of (max wrong logit − true logit) over this branch.
    pub margin_upper: f64,
}

#[derive(Debug, Clone)]
pub struct CertResult {
    pub verdict: Verdict,
    /// Upper bound of the adversarial margin over the whole space;
    /// negative iff certifiably robust.
    pub worst_margin_upper: f64,
    pub branches: Vec<BranchDiag>,
    /// Scalars stored per DP key: `n_heads · (2·d_head + 2)`, independent
    /// of sequence length.
    pub state_scalars_per_key: usize,
}

/// `e_{i,j} = t_j + p_i`: embedding of `token` relocated to (1-based)
/// position `pos` of the perturbed string.
pub fn embed_pair(params: &ModelParams, pos: usize, token: u32) -> Result<Vec<f64>> {
    embed_token(&params.config, &params.slices(), token, pos)
}

// --- compiled spaces ------------------------------------------------------

#[derive(Debug, Clone)]
enum CompiledEdit {
    Delete,
    /// Deduplicated replacement token ids.
    Substitute(Vec<u32>),
    Duplicate,
}

#[derive(Debug, Clone)]
struct EditOp {
    t_idx: usize,
    kind: CompiledEdit,
}

/// A perturbation space bound to one input string and a vocabulary.
struct Compiled {
    n: usize,
    tokens: Vec<u32>,
    /// Applicable edits per original position.
    edits: Vec<Vec<EditOp>>,
    /// Budget vector radix: δ_i + 1 per transformation.
    radix: Vec<usize>,
    ncodes: usize,
    full_code: usize,
}

impl Compiled {
    fn build(space: &PerturbationSpace, vocab: &Vocab, words: &[String]) -> Result<Compiled> {
        if words.is_empty() {
            return Err(Error::EmptyInput);
        }
        let tokens = vocab.encode(words);
        let edits = words
            .iter()
            .map(|w| {
                space
                    .items
                    .iter()
                    .enumerate()
                    .filter(|(_, (t, b))| *b > 0 && t.matches(w))
                    .map(|(t_idx, (t, _))| {
                        let kind = match &t.kind {
                            TransformKind::Delete { .. } => CompiledEdit::Delete,
                            TransformKind::Duplicate => CompiledEdit::Duplicate,
                            TransformKind::Substitute { .. } => {
                                let mut ids = BTreeSet::new();
                                for rep in t.replacements(w) {
                                    debug_assert_eq!(rep.len(), 1);
                                    ids.insert(vocab.id(&rep[0]));
                                }
                                CompiledEdit::Substitute(ids.into_iter().collect())
                            }
                        };
                        EditOp { t_idx, kind }
                    })
                    .collect()
            })
            .collect();
        let radix: Vec<usize> = space.items.iter().map(|(_, b)| *b as usize + 1).collect();
        let ncodes = radix.iter().product::<usize>().max(1);
        Ok(Compiled {
            n: words.len(),
            tokens,
            edits,
            radix,
            ncodes,
            full_code: ncodes - 1,
        })
    }

    /// Stride of transformation `t` in the mixed-radix budget code.
    fn stride(&self, t_idx: usize) -> usize {
        self.radix[..t_idx].iter().product()
    }

    /// Budget code after spending one application of `t`, if any remain.
    fn spend(&self, code: usize, t_idx: usize) -> Option<usize> {
        let stride = self.stride(t_idx);
        if !(code / stride).is_multiple_of(self.radix[t_idx]) {
            Some(code - stride)
        } else {
            None
        }
    }
}

// --- reachability ----------------------------------------------------------

/// Boolean tables over `(j, i, code)`; `i` capped at `i_max`.
struct Reach {
    ncodes: usize,
    /// Indexed `[j][i * ncodes + code]`.
    table: Vec<Vec<bool>>,
}

impl Reach {
    fn at(&self, j: usize, i: usize, code: usize) -> bool {
        self.table[j][i * self.ncodes + code]
    }
}

/// Keys reachable from the start `(0, 0, δ)`.
fn forward_reach(comp: &Compiled, i_max: usize) -> Reach {
    let ncodes = comp.ncodes;
    let mut table = vec![vec![false; (i_max + 1) * ncodes]; comp.n + 1];
    table[0][comp.full_code] = true;
    for j in 0..comp.n {
        for i in 0..=i_max {
            for code in 0..ncodes {
                if !table[j][i * ncodes + code] {
                    continue;
                }
                if i < i_max {
                    table[j + 1][(i + 1) * ncodes + code] = true;
                }
                for edit in &comp.edits[j] {
                    let Some(spent) = comp.spend(code, edit.t_idx) else {
                        continue;
                    };
                    match edit.kind {
                        CompiledEdit::Delete => table[j + 1][i * ncodes + spent] = true,
                        CompiledEdit::Substitute(_) => {
                            if i < i_max {
                                table[j + 1][(i + 1) * ncodes + spent] = true;
                            }
                        }
                        CompiledEdit::Duplicate => {
                            if i + 2 <= i_max {
                                table[j + 1][(i + 2) * ncodes + spent] = true;
                            }
                        }
                    }
                }
            }
        }
    }
    Reach { ncodes, table }
}

/// Keys from which some terminal `(ℓ, n, ·)` is reachable.
fn finish_reach(comp: &Compiled, ell: usize) -> Reach {
    let ncodes = comp.ncodes;
    let mut table = vec![vec![false; (ell + 1) * ncodes]; comp.n + 1];
    for code in 0..ncodes {
        table[comp.n][ell * ncodes + code] = true;
    }
    for j in (0..comp.n).rev() {
        for i in 0..=ell {
            for code in 0..ncodes {
                let mut ok = i < ell && table[j + 1][(i + 1) * ncodes + code];
                if !ok {
                    for edit in &comp.edits[j] {
                        let Some(spent) = comp.spend(code, edit.t_idx) else {
                            continue;
                        };
                        let hit = match edit.kind {
                            CompiledEdit::Delete => table[j + 1][i * ncodes + spent],
                            CompiledEdit::Substitute(_) => {
                                i < ell && table[j + 1][(i + 1) * ncodes + spent]
                            }
                            CompiledEdit::Duplicate => {
                                i + 2 <= ell && table[j + 1][(i + 2) * ncodes + spent]
                            }
                        };
                        if hit {
                            ok = true;
                            break;
                        }
                    }
                }
                table[j][i * ncodes + code] = ok;
            }
        }
    }
    Reach { ncodes, table }
}

/// All achievable lengths of members of `S(x)` (empty results excluded),
/// by exact boolean reachability over the same transition relation.
pub fn final_length_range(space: &PerturbationSpace, words: &[String]) -> Result<BTreeSet<usize>> {
    let vocab = Vocab::from_words(vec![]); // ids are irrelevant for lengths
    let comp = Compiled::build(space, &vocab, words)?;
    let i_max = comp.n + space.max_growth(comp.n);
    let fwd = forward_reach(&comp, i_max);
    let mut lengths = BTreeSet::new();
    for i in 1..=i_max {
        for code in 0..comp.ncodes {
            if fwd.at(comp.n, i, code) {
                lengths.insert(i);
                break;
            }
        }
    }
    Ok(lengths)
}

/// Token ids that can occupy the final position `ℓ` of a length-`ℓ`
/// member, from feasible edges of the DP graph.
fn final_token_candidates(comp: &Compiled, fwd: &Reach, fin: &Reach, ell: usize) -> Vec<u32> {
    let mut out = BTreeSet::new();
    for j in 0..comp.n {
        for i in 0..=ell {
            for code in 0..comp.ncodes {
                if !fwd.at(j, i, code) {
                    continue;
                }
                if i + 1 == ell && fin.at(j + 1, ell, code) {
                    out.insert(comp.tokens[j]);
                }
                for edit in &comp.edits[j] {
                    let Some(spent) = comp.spend(code, edit.t_idx) else {
                        continue;
                    };
                    match &edit.kind {
                        CompiledEdit::Substitute(ids) => {
                            if i + 1 == ell && fin.at(j + 1, ell, spent) {
                                out.extend(ids.iter().copied());
                            }
                        }
                        CompiledEdit::Duplicate => {
                            if i + 2 == ell && fin.at(j + 1, ell, spent) {
                                out.insert(comp.tokens[j]);
                            }
                        }
                        CompiledEdit::Delete => {}
                    }
                }
            }
        }
    }
    out.into_iter().collect()
}

// --- the abstract DP -------------------------------------------------------

/// Per-head cached `(score interval, value vector)` of one emission.
struct CachedEmission<S> {
    scores: Vec<Interval<S>>,
    values: Vec<Vec<S>>,
}

struct BranchCtx<'a, S: Num> {
    cfg: &'a ModelConfig,
    p: &'a ParamSlices<'a, S>,
    /// Per-head interval hull of the final query.
    hull: Vec<IvBox<S>>,
    cache: HashMap<(u32, usize), CachedEmission<S>>,
    stats: MeetStats,
    max_f_width: f64,
    key_count: usize,
}

/// Prefix state at a DP key: heads are absent until the first emission.
enum PrefixState<S> {
    Empty,
    Heads(Vec<AbstractHeadState<S>>),
}

impl<'a, S: Num> BranchCtx<'a, S> {
    fn emission(&mut self, token: u32, pos: usize) -> Result<&CachedEmission<S>> {
        let cfg = self.cfg;
        let d = cfg.d_model;
        let dh = cfg.d_head();
        let scale = cfg.score_scale();
        if !self.cache.contains_key(&(token, pos)) {
            let e = embed_token(cfg, self.p, token, pos)?;
            let mut scores = Vec::with_capacity(cfg.n_heads);
            let mut values = Vec::with_capacity(cfg.n_heads);
            for (h, head) in self.p.heads.iter().enumerate() {
                let k = matvec_slice(head.wk, dh, d, &e);
                let v = matvec_slice(head.wv, dh, d, &e);
                let score = self.hull[h].dot_point(&k).mul_const(scale);
                scores.push(score);
                values.push(v);
            }
            self.cache
                .insert((token, pos), CachedEmission { scores, values });
        }
        Ok(&self.cache[&(token, pos)])
    }

    /// Advance all heads through one emission.
    fn step(
        &mut self,
        state: &PrefixState<S>,
        token: u32,
        pos: usize,
    ) -> Result<Vec<AbstractHeadState<S>>> {
        let n_heads = self.cfg.n_heads;
        // split borrows: compute emission first, then step heads
        self.emission(token, pos)?;
        let emission = &self.cache[&(token, pos)];
        let mut out = Vec::with_capacity(n_heads);
        let mut stats = MeetStats::default();
        match state {
            PrefixState::Empty => {
                for h in 0..n_heads {
                    out.push(AbstractHeadState::init(
                        emission.scores[h].clone(),
                        IvBox::point(&emission.values[h]),
                    ));
                }
            }
            PrefixState::Heads(heads) => {
                for (h, head_state) in heads.iter().enumerate() {
                    out.push(abstract_step(
                        head_state,
                        &emission.scores[h],
                        &IvBox::point(&emission.values[h]),
                        &mut stats,
                    )?);
                }
            }
        }
        self.stats.merge(&stats);
        for s in &out {
            let w = s.f.max_width();
            if w > self.max_f_width {
                self.max_f_width = w;
            }
        }
        Ok(out)
    }
}

fn join_states<S: Num>(a: PrefixState<S>, b: PrefixState<S>) -> PrefixState<S> {
    match (a, b) {
        (PrefixState::Empty, PrefixState::Empty) => PrefixState::Empty,
        (PrefixState::Heads(x), PrefixState::Heads(y)) => {
            PrefixState::Heads(x.iter().zip(&y).map(|(sa, sb)| sa.join(sb)).collect())
        }
        _ => unreachable!("states at one key share the emission count"),
    }
}

fn insert_joined<S: Num>(
    layer: &mut BTreeMap<(usize, usize), PrefixState<S>>,
    key: (usize, usize),
    state: PrefixState<S>,
) {
    match layer.remove(&key) {
        None => {
            layer.insert(key, state);
        }
        Some(existing) => {
            layer.insert(key, join_states(existing, state));
        }
    }
}

/// Per-head hull of `W_q·(t + p_ℓ)` over the candidate final tokens.
fn query_hull_of<S: Num>(
    cfg: &ModelConfig,
    p: &ParamSlices<'_, S>,
    candidates: &[u32],
    ell: usize,
) -> Result<Vec<IvBox<S>>> {
    let d = cfg.d_model;
    let dh = cfg.d_head();
    let mut hull = Vec::with_capacity(cfg.n_heads);
    for head in &p.heads {
        let mut acc: Option<IvBox<S>> = None;
        for &tok in candidates {
            let e = embed_token(cfg, p, tok, ell)?;
            let q = matvec_slice(head.wq, dh, d, &e);
            let point = IvBox::point(&q);
            acc = Some(match acc {
                None => point,
                Some(prev) => prev.join(&point),
            });
        }
        hull.push(acc.expect("candidates non-empty"));
    }
    Ok(hull)
}

/// Interval hull of the final query, per head: encloses `W_q·(t + p_ℓ)`
/// for every token `t` that can occupy the last position of a length-`ℓ`
/// member of the space.
pub fn final_query_hull(
    params: &ModelParams,
    vocab: &Vocab,
    space: &PerturbationSpace,
    words: &[String],
    ell: usize,
) -> Result<Vec<IvBox<f64>>> {
    let cfg = &params.config;
    if ell == 0 || ell > cfg.max_positions {
        return Err(Error::PositionOverflow {
            needed: ell,
            available: cfg.max_positions,
        });
    }
    let comp = Compiled::build(space, vocab, words)?;
    let fwd = forward_reach(&comp, ell);
    let fin = finish_reach(&comp, ell);
    let candidates = final_token_candidates(&comp, &fwd, &fin, ell);
    if candidates.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "final length {ell} is not achievable"
        )));
    }
    query_hull_of(cfg, &params.slices(), &candidates, ell)
}

/// Run the branch DP and return the terminal state (join over admissible
/// terminal budget vectors) plus diagnostics.
fn propagate_branch<S: Num>(
    cfg: &ModelConfig,
    p: &ParamSlices<'_, S>,
    comp: &Compiled,
    ell: usize,
) -> Result<(Vec<AbstractHeadState<S>>, BranchDiag)> {
    if ell == 0 {
        return Err(Error::EmptyInput);
    }
    if ell > cfg.max_positions {
        return Err(Error::PositionOverflow {
            needed: ell,
            available: cfg.max_positions,
        });
    }
    let fwd = forward_reach(comp, ell);
    let fin = finish_reach(comp, ell);
    let candidates = final_token_candidates(comp, &fwd, &fin, ell);
    debug_assert!(!candidates.is_empty(), "feasible branch without finals");
    let hull = query_hull_of(cfg, p, &candidates, ell)?;

    let mut ctx = BranchCtx {
        cfg,
        p,
        hull,
        cache: HashMap::new(),
        stats: MeetStats::default(),
        max_f_width: 0.0,
        key_count: 0,
    };

    let mut layer: BTreeMap<(usize, usize), PrefixState<S>> = BTreeMap::new();
    layer.insert((0, comp.full_code), PrefixState::Empty);
    for j in 0..comp.n {
        let mut next: BTreeMap<(usize, usize), PrefixState<S>> = BTreeMap::new();
        for ((i, code), state) in &layer {
            let (i, code) = (*i, *code);
            // copy
            if i < ell && fin.at(j + 1, i + 1, code) {
                let s = ctx.step(state, comp.tokens[j], i + 1)?;
                insert_joined(&mut next, (i + 1, code), PrefixState::Heads(s));
            }
            for edit in &comp.edits[j] {
                let Some(spent) = comp.spend(code, edit.t_idx) else {
                    continue;
                };
                match &edit.kind {
                    CompiledEdit::Delete => {
                        if fin.at(j + 1, i, spent) {
                            let s = match state {
                                PrefixState::Empty => PrefixState::Empty,
                                PrefixState::Heads(h) => PrefixState::Heads(h.clone()),
                            };
                            insert_joined(&mut next, (i, spent), s);
                        }
                    }
                    CompiledEdit::Substitute(ids) => {
                        if i < ell && fin.at(j + 1, i + 1, spent) {
                            for &tok in ids {
                                let s = ctx.step(state, tok, i + 1)?;
                                insert_joined(&mut next, (i + 1, spent), PrefixState::Heads(s));
                            }
                        }
                    }
                    CompiledEdit::Duplicate => {
                        if i + 2 <= ell && fin.at(j + 1, i + 2, spent) {
                            // two abstract steps, atomically; the midway
                            // state never merges into other keys
                            let mid = ctx.step(state, comp.tokens[j], i + 1)?;
                            let s = ctx.step(&PrefixState::Heads(mid), comp.tokens[j], i + 2)?;
                            insert_joined(&mut next, (i + 2, spent), PrefixState::Heads(s));
                        }
                    }
                }
            }
        }
        ctx.key_count += next.len();
        layer = next;
    }

    let mut terminal: Option<Vec<AbstractHeadState<S>>> = None;
    for ((i, _), state) in layer {
        if i != ell {
            continue;
        }
        if let PrefixState::Heads(h) = state {
            terminal = Some(match terminal {
                None => h,
                Some(prev) => prev.iter().zip(&h).map(|(a, b)| a.join(b)).collect(),
            });
        }
    }
    let terminal = terminal
        .ok_or_else(|| Error::InvalidConfig(format!("no terminal state for final length {ell}")))?;

    let diag = BranchDiag {
        final_len: ell,
        key_count: ctx.key_count,
        max_f_width: ctx.max_f_width,
        final_candidates: candidates.len(),
        meet: ctx.stats,
        margin_upper: f64::NAN, // filled by the caller
    };
    Ok((terminal, diag))
}

/// Terminal abstract state for one final-length branch (f64 path).
pub fn propagate(
    params: &ModelParams,
    vocab: &Vocab,
    space: &PerturbationSpace,
    words: &[String],
    ell: usize,
) -> Result<(Vec<AbstractHeadState<f64>>, BranchDiag)> {
    let comp = Compiled::build(space, vocab, words)?;
    propagate_branch(&params.config, &params.slices(), &comp, ell)
}

/// Upper bound of `max_{c≠y} logit_c − logit_y` over one logit box.
fn margin_upper_from_box<S: Num>(logits: &IvBox<S>, label: usize) -> S {
    let lo_true = &logits.dims[label].lo;
    let mut worst: Option<S> = None;
    for (c, iv) in logits.dims.iter().enumerate() {
        if c == label {
            continue;
        }
        let m = iv.hi.sub(lo_true);
        worst = Some(match worst {
            None => m,
            Some(w) => w.max(&m),
        });
    }
    worst.expect("at least two classes")
}

/// Differentiable certification: the worst-case margin upper bound over
/// all final-length branches, plus per-branch diagnostics. Instantiated
/// with tape scalars this is the certified-training loss core.
pub fn margin_upper_bound<S: Num>(
    cfg: &ModelConfig,
    p: &ParamSlices<'_, S>,
    vocab: &Vocab,
    space: &PerturbationSpace,
    words: &[String],
    label: usize,
) -> Result<(S, Vec<BranchDiag>)> {
    if label >= cfg.n_classes {
        return Err(Error::BadLabel {
            label,
            classes: cfg.n_classes,
        });
    }
    if vocab.size() > cfg.vocab_size {
        return Err(Error::InvalidConfig(format!(
            "vocabulary has {} entries but the model embeds {}",
            vocab.size(),
            cfg.vocab_size
        )));
    }
    let comp = Compiled::build(space, vocab, words)?;
    let lengths = final_length_range(space, words)?;
    let mut worst: Option<S> = None;
    let mut branches = Vec::with_capacity(lengths.len());
    for &ell in &lengths {
        let (terminal, mut diag) = propagate_branch(cfg, p, &comp, ell)?;
        let logit_box = forward_abstract(cfg, p, &terminal)?;
        let margin = margin_upper_from_box(&logit_box, label);
        diag.margin_upper = margin.val();
        branches.push(diag);
        worst = Some(match worst {
            None => margin,
            Some(w) => w.max(&margin),
        });
    }
    let worst = worst.ok_or(Error::EmptyInput)?;
    Ok((worst, branches))
}

/// Certify that the model predicts `label` on every member of `S(x)`.
/// `Certified` is sound: the margin upper bound is negative only if no
/// member can flip the prediction.
pub fn certify(
    params: &ModelParams,
    vocab: &Vocab,
    space: &PerturbationSpace,
    words: &[String],
    label: usize,
) -> Result<CertResult> {
    let cfg = &params.config;
    let (worst, branches) = margin_upper_bound(cfg, &params.slices(), vocab, space, words, label)?;
    let worst_margin_upper = worst.val();
    let verdict = if worst_margin_upper < 0.0 {
        Verdict::Certified
    } else {
        Verdict::Unknown
    };
    Ok(CertResult {
        verdict,
        worst_margin_upper,
        branches,
        state_scalars_per_key: cfg.n_heads * (2 * cfg.d_head() + 2),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::AttnMode;
    use crate::numerics::dot_slice;
    use crate::perturb::{enumerate_space, Transformation};
    use crate::rng::Rng;

    fn vocab_from(words: &[&str]) -> Vocab {
        Vocab::from_words(words.iter().map(|s| s.to_string()).collect())
    }

    fn tokens(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn syn_space(table: &[(&str, &[&str])], dup: u32, syn: u32) -> PerturbationSpace {
        let map = table
            .iter()
            .map(|(w, alts)| {
                (
                    w.to_string(),
                    alts.iter().map(|a| a.to_string()).collect::<Vec<_>>(),
                )
            })
            .collect();
        let items = vec![
            (Transformation::duplicate("Dup"), dup),
            (Transformation::substitute("SubSyn", map).unwrap(), syn),
        ];
        PerturbationSpace::new(items).unwrap()
    }

    #[test]
    fn embed_pair_relocates_token() {
        // deleting "to" moves "the" to position 1: e_{1,2} = t(the) + p_1
        let vocab = vocab_from(&["to", "the"]);
        let cfg = ModelConfig::new(vocab.size(), 8, 6);
        let params = ModelParams::init(cfg, 3).unwrap();
        let the = vocab.id("the");
        let e = embed_pair(&params, 1, the).unwrap();
        for (d, v) in e.iter().enumerate() {
            let want = params.token_table.row(the as usize)[d] + params.pos_table.row(0)[d];
            assert_eq!(*v, want);
        }
    }

    #[test]
    fn embed_pair_conventional_when_unperturbed() {
        let vocab = vocab_from(&["a", "b", "c"]);
        let cfg = ModelConfig::new(vocab.size(), 8, 6);
        let params = ModelParams::init(cfg, 5).unwrap();
        for (i, w) in ["a", "b", "c"].iter().enumerate() {
            let id = vocab.id(w);
            let e = embed_pair(&params, i + 1, id).unwrap();
            for (d, v) in e.iter().enumerate() {
                let want = params.token_table.row(id as usize)[d] + params.pos_table.row(i)[d];
                assert_eq!(*v, want);
            }
        }
    }

    #[test]
    fn embed_pair_position_overflow() {
        let vocab = vocab_from(&["a"]);
        let cfg = ModelConfig::new(vocab.size(), 4, 3);
        let params = ModelParams::init(cfg, 1).unwrap();
        assert!(matches!(
            embed_pair(&params, 5, 0),
            Err(Error::PositionOverflow { .. })
        ));
    }

    #[test]
    fn final_lengths_for_dup_and_syn() {
        let space = syn_space(&[("b", &["z"])], 2, 2);
        let lengths = final_length_range(&space, &tokens("a b c d e")).unwrap();
        assert_eq!(lengths, [5, 6, 7].into_iter().collect());
    }

    #[test]
    fn final_lengths_empty_space() {
        let lengths = final_length_range(&PerturbationSpace::empty(), &tokens("a b c")).unwrap();
        assert_eq!(lengths, [3].into_iter().collect());
    }

    #[test]
    fn final_lengths_match_enumeration() {
        let mut rng = Rng::new(40);
        let words = ["a", "b", "c", "the", "to"];
        for _ in 0..30 {
            let n = 1 + rng.below(6);
            let x: Vec<String> = (0..n)
                .map(|_| words[rng.below(words.len())].to_string())
                .collect();
            let del = Transformation::delete(
                "Del",
                ["the", "to"].iter().map(|s| s.to_string()).collect(),
            )
            .unwrap();
            let space = PerturbationSpace::new(vec![
                (del, rng.below(3) as u32),
                (Transformation::duplicate("Dup"), rng.below(3) as u32),
            ])
            .unwrap();
            let enumerated = enumerate_space(&space, &x, 100_000).unwrap();
            let observed: BTreeSet<usize> = enumerated.iter().map(|m| m.tokens.len()).collect();
            let computed = final_length_range(&space, &x).unwrap();
            assert_eq!(observed, computed, "x = {x:?}");
        }
    }

    #[test]
    fn query_hull_is_point_for_empty_space() {
        let vocab = vocab_from(&["a", "b", "c"]);
        let cfg = ModelConfig::new(vocab.size(), 8, 6);
        let params = ModelParams::init(cfg, 7).unwrap();
        let x = tokens("a b c");
        let space = PerturbationSpace::empty();
        // propagate end-to-end must equal the concrete rnn forward
        let (terminal, diag) = propagate(&params, &vocab, &space, &x, 3).unwrap();
        assert_eq!(diag.final_candidates, 1);
        let concrete = params
            .attention_final_states(&vocab.encode(&x), AttnMode::Rnn)
            .unwrap();
        for (head, conc) in terminal.iter().zip(&concrete) {
            for (iv, &c) in head.f.dims.iter().zip(conc) {
                assert!((iv.lo - c).abs() <= 1e-12, "{} vs {c}", iv.lo);
                assert!(iv.width() <= 1e-12);
            }
        }
    }

    #[test]
    fn query_hull_covers_enumerated_finals() {
        let vocab = vocab_from(&["a", "b", "z", "c"]);
        let cfg = ModelConfig::new(vocab.size(), 8, 8);
        let params = ModelParams::init(cfg, 9).unwrap();
        let x = tokens("a b c");
        let space = syn_space(&[("b", &["z"]), ("c", &["a"])], 1, 1);
        let members = enumerate_space(&space, &x, 10_000).unwrap();
        for &ell in final_length_range(&space, &x).unwrap().iter() {
            let comp = Compiled::build(&space, &vocab, &x).unwrap();
            let fwd = forward_reach(&comp, ell);
            let fin = finish_reach(&comp, ell);
            let cands = final_token_candidates(&comp, &fwd, &fin, ell);
            let p = params.slices();
            for m in members.iter().filter(|m| m.tokens.len() == ell) {
                let last_id = vocab.id(m.tokens.last().unwrap());
                assert!(
                    cands.contains(&last_id),
                    "len {ell}: {:?} final not in candidates",
                    m.tokens
                );
                // and the hull contains its query vector
                for (h, head) in p.heads.iter().enumerate() {
                    let _ = h;
                    let e = embed_token(&params.config, &p, last_id, ell).unwrap();
                    let q =
                        matvec_slice(head.wq, params.config.d_head(), params.config.d_model, &e);
                    let mut acc: Option<IvBox<f64>> = None;
                    for &tok in &cands {
                        let ce = embed_token(&params.config, &p, tok, ell).unwrap();
                        let cq = matvec_slice(
                            head.wq,
                            params.config.d_head(),
                            params.config.d_model,
                            &ce,
                        );
                        let pt = IvBox::point(&cq);
                        acc = Some(match acc {
                            None => pt,
                            Some(prev) => prev.join(&pt),
                        });
                    }
                    assert!(acc.unwrap().contains(&q));
                }
            }
        }
    }

    /// Enumeration + sampling oracle: for every member `z` of the space,
    /// the concrete recurrence final state computed with its true query
    /// lies inside the branch's terminal boxes.
    #[test]
    fn propagate_terminal_contains_all_members() {
        let mut rng = Rng::new(99);
        for trial in 0..20 {
            let vocab = vocab_from(&["a", "b", "c", "z", "w"]);
            let cfg = ModelConfig::new(vocab.size(), 8, 10);
            let params = ModelParams::init(cfg, 1000 + trial).unwrap();
            let base = ["a", "b", "c"];
            let n = 2 + rng.below(3);
            let x: Vec<String> = (0..n)
                .map(|_| base[rng.below(base.len())].to_string())
                .collect();
            let space = syn_space(&[("a", &["z"]), ("b", &["w"])], 1, 1);
            let members = enumerate_space(&space, &x, 10_000).unwrap();
            for &ell in final_length_range(&space, &x).unwrap().iter() {
                let (terminal, _) = propagate(&params, &vocab, &space, &x, ell).unwrap();
                let hull = final_query_hull(&params, &vocab, &space, &x, ell).unwrap();
                let p = params.slices();
                for m in members.iter().filter(|m| m.tokens.len() == ell) {
                    let ids = vocab.encode(&m.tokens);
                    let pcfg = &params.config;
                    let e_last = embed_token(pcfg, &p, *ids.last().unwrap(), ids.len()).unwrap();
                    for (h, head) in terminal.iter().enumerate() {
                        // the true final query, plus queries sampled from
                        // the hull: all must land inside the terminal state
                        let true_q =
                            matvec_slice(p.heads[h].wq, pcfg.d_head(), pcfg.d_model, &e_last);
                        let mut queries = vec![true_q];
                        for _ in 0..3 {
                            queries.push(
                                hull[h]
                                    .dims
                                    .iter()
                                    .map(|iv| rng.range(iv.lo, iv.hi + f64::MIN_POSITIVE))
                                    .collect(),
                            );
                        }
                        for q in &queries {
                            let mut keys = Vec::new();
                            let mut values = Vec::new();
                            for (pos, &tok) in ids.iter().enumerate() {
                                let e = embed_token(pcfg, &p, tok, pos + 1).unwrap();
                                keys.push(matvec_slice(
                                    p.heads[h].wk,
                                    pcfg.d_head(),
                                    pcfg.d_model,
                                    &e,
                                ));
                                values.push(matvec_slice(
                                    p.heads[h].wv,
                                    pcfg.d_head(),
                                    pcfg.d_model,
                                    &e,
                                ));
                            }
                            let scores: Vec<f64> = keys
                                .iter()
                                .map(|k| dot_slice(q, k) * pcfg.score_scale())
                                .collect();
                            let f = crate::attention::recurrence_combine(&scores, &values).unwrap();
                            for (iv, &c) in head.f.dims.iter().zip(&f) {
                                assert!(
                                    iv.contains(c),
                                    "trial {trial} len {ell} head {h}: {c} outside [{}, {}] for {:?}",
                                    iv.lo,
                                    iv.hi,
                                    m.tokens
                                );
                            }
                            let mut g = scores[0];
                            for s in &scores[1..] {
                                g = crate::attention::logaddexp(&g, s);
                            }
                            assert!(
                                terminal[h].g.contains(g),
                                "g {g} outside [{}, {}]",
                                terminal[h].g.lo,
                                terminal[h].g.hi
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn certify_empty_space_equals_concrete_margin() {
        let mut rng = Rng::new(55);
        for trial in 0..50 {
            let vocab = vocab_from(&["a", "b", "c", "d"]);
            let cfg = ModelConfig::new(vocab.size(), 8, 8);
            let params = ModelParams::init(cfg, 2000 + trial).unwrap();
            let n = 1 + rng.below(6);
            let x: Vec<String> = (0..n)
                .map(|_| ["a", "b", "c", "d"][rng.below(4)].to_string())
                .collect();
            let label = rng.below(2);
            let res = certify(&params, &vocab, &PerturbationSpace::empty(), &x, label).unwrap();
            let logits = params
                .forward_concrete(&vocab.encode(&x), AttnMode::Rnn)
                .unwrap();
            let concrete_margin = logits
                .iter()
                .enumerate()
                .filter(|(c, _)| *c != label)
                .map(|(_, l)| l - logits[label])
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(
                (res.worst_margin_upper - concrete_margin).abs() <= 1e-12,
                "bound {} vs concrete {concrete_margin}",
                res.worst_margin_upper
            );
            let want = if concrete_margin < 0.0 {
                Verdict::Certified
            } else {
                Verdict::Unknown
            };
            assert_eq!(res.verdict, want);
        }
    }

    #[test]
    fn misclassified_input_is_never_certified() {
        let mut rng = Rng::new(66);
        let vocab = vocab_from(&["a", "b", "c"]);
        let cfg = ModelConfig::new(vocab.size(), 8, 8);
        let mut tried = 0;
        for trial in 0..200 {
            let params = ModelParams::init(cfg.clone(), 3000 + trial).unwrap();
            let n = 1 + rng.below(4);
            let x: Vec<String> = (0..n)
                .map(|_| ["a", "b", "c"][rng.below(3)].to_string())
                .collect();
            let ids = vocab.encode(&x);
            let logits = params.forward_concrete(&ids, AttnMode::Rnn).unwrap();
            let argmax = if logits[1] > logits[0] { 1 } else { 0 };
            let wrong = 1 - argmax;
            let space = syn_space(&[("a", &["b"])], 1, 1);
            let res = certify(&params, &vocab, &space, &x, wrong).unwrap();
            assert_eq!(res.verdict, Verdict::Unknown);
            assert!(res.worst_margin_upper >= 0.0);
            tried += 1;
            if tried > 30 {
                break;
            }
        }
    }

    #[test]
    fn certified_implies_no_enumerated_counterexample() {
        let mut rng = Rng::new(77);
        let mut certified_seen = 0;
        for trial in 0..100 {
            let vocab = vocab_from(&["a", "b", "c", "z", "w"]);
            let cfg = ModelConfig::new(vocab.size(), 8, 10);
            let params = ModelParams::init(cfg, 4000 + trial).unwrap();
            let n = 1 + rng.below(4);
            let x: Vec<String> = (0..n)
                .map(|_| ["a", "b", "c"][rng.below(3)].to_string())
                .collect();
            let space = syn_space(&[("a", &["z"]), ("c", &["w"])], 1, 1);
            let ids = vocab.encode(&x);
            let logits = params.forward_concrete(&ids, AttnMode::Rnn).unwrap();
            let label = if logits[1] > logits[0] { 1 } else { 0 };
            let res = certify(&params, &vocab, &space, &x, label).unwrap();
            if res.verdict == Verdict::Certified {
                certified_seen += 1;
                for m in enumerate_space(&space, &x, 10_000).unwrap() {
                    let zl = params
                        .forward_concrete(&vocab.encode(&m.tokens), AttnMode::Rnn)
                        .unwrap();
                    let pred = if zl[1] > zl[0] { 1 } else { 0 };
                    assert_eq!(pred, label, "counterexample {:?}", m.tokens);
                }
            }
        }
        assert!(certified_seen > 0, "no certificates issued at all");
    }

    #[test]
    fn budget_growth_never_flips_unknown_to_certified() {
        let mut rng = Rng::new(88);
        for trial in 0..30 {
            let vocab = vocab_from(&["a", "b", "z"]);
            let cfg = ModelConfig::new(vocab.size(), 8, 10);
            let params = ModelParams::init(cfg, 5000 + trial).unwrap();
            let n = 2 + rng.below(3);
            let x: Vec<String> = (0..n)
                .map(|_| ["a", "b"][rng.below(2)].to_string())
                .collect();
            let ids = vocab.encode(&x);
            let logits = params.forward_concrete(&ids, AttnMode::Rnn).unwrap();
            let label = if logits[1] > logits[0] { 1 } else { 0 };
            let small = syn_space(&[("a", &["z"])], 1, 1);
            let large = syn_space(&[("a", &["z"])], 2, 2);
            let r_small = certify(&params, &vocab, &small, &x, label).unwrap();
            let r_large = certify(&params, &vocab, &large, &x, label).unwrap();
            assert!(
                r_large.worst_margin_upper >= r_small.worst_margin_upper - 1e-9,
                "bound shrank: {} -> {}",
                r_small.worst_margin_upper,
                r_large.worst_margin_upper
            );
            if r_small.verdict == Verdict::Unknown {
                assert_eq!(r_large.verdict, Verdict::Unknown);
            }
            // terminal boxes never shrink in any dimension either
            for &ell in final_length_range(&small, &x).unwrap().iter() {
                let (t_small, _) = propagate(&params, &vocab, &small, &x, ell).unwrap();
                let (t_large, _) = propagate(&params, &vocab, &large, &x, ell).unwrap();
                for (hs, hl) in t_small.iter().zip(&t_large) {
                    for (ivs, ivl) in hs.f.dims.iter().zip(&hl.f.dims) {
                        assert!(ivl.width() >= ivs.width() - 1e-12);
                    }
                    assert!(hl.g.width() >= hs.g.width() - 1e-12);
                }
            }
        }
    }

    #[test]
    fn query_hull_single_candidate_is_point() {
        // only the final original token can end a length-n member when the
        // substitution table misses it
        let vocab = vocab_from(&["a", "b", "z"]);
        let cfg = ModelConfig::new(vocab.size(), 8, 8);
        let params = ModelParams::init(cfg, 31).unwrap();
        let x = tokens("a b");
        let space = syn_space(&[("a", &["z"])], 0, 1);
        let hull = final_query_hull(&params, &vocab, &space, &x, 2).unwrap();
        for head in &hull {
            assert!(head.max_width() == 0.0);
        }
    }

    #[test]
    fn state_size_is_independent_of_sequence_length() {
        let vocab = vocab_from(&["a", "b"]);
        let cfg = ModelConfig::new(vocab.size(), 8, 40);
        let params = ModelParams::init(cfg, 6000).unwrap();
        let space = syn_space(&[("a", &["b"])], 1, 1);
        let mut sizes = BTreeSet::new();
        for n in [2usize, 8, 20] {
            let x: Vec<String> = (0..n)
                .map(|i| if i % 2 == 0 { "a" } else { "b" }.to_string())
                .collect();
            let (terminal, _) = propagate(&params, &vocab, &space, &x, n).unwrap();
            let scalars: usize = terminal.iter().map(|h| h.scalar_count()).sum();
            sizes.insert(scalars);
        }
        assert_eq!(sizes.len(), 1, "state size varies with length: {sizes:?}");
    }
}
