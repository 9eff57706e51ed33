//! The evaluated architecture: token + position embeddings, one decoder-only
//! attention layer (two heads by default), final-position readout, and a
//! two-layer MLP head producing class logits.
//!
//! There is no layer normalization and no residual path; the readout is the
//! raw attention output at the final position, merged across heads by an
//! output projection. Score scaling by 1/sqrt(d_head) is available behind a
//! config flag and defaults to off.
//!
//! Forward passes are written once against [`Num`] and instantiated with
//! `f64` (inference, certification) or tape [`Var`]s (training).

use std::fmt::Write as _;
use std::path::Path;

use crate::attention::{self, AbstractHeadState};
use crate::data::Vocab;
use crate::error::{Error, Result};
use crate::interval::IvBox;
use crate::numerics::{dot_slice, matvec_slice, Num, Tape, Tensor, Var};
use crate::rng::Rng;

pub const MODEL_MAGIC: &str = "textcert-model v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttnMode {
    Softmax,
    Rnn,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub max_positions: usize,
    pub n_classes: usize,
    /// Scale attention scores by 1/sqrt(d_head). Off by default.
    pub attention_scaling: bool,
}

impl ModelConfig {
    pub fn new(vocab_size: usize, d_model: usize, max_positions: usize) -> Self {
        ModelConfig {
            vocab_size,
            d_model,
            n_heads: 2,
            max_positions,
            n_classes: 2,
            attention_scaling: false,
        }
    }

    pub fn d_head(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn score_scale(&self) -> f64 {
        if self.attention_scaling {
            1.0 / (self.d_head() as f64).sqrt()
        } else {
            1.0
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size == 0
            || self.d_model == 0
            || self.n_heads == 0
            || self.max_positions == 0
            || self.n_classes < 2
        {
            return Err(Error::InvalidConfig(format!("{self:?}")));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::ShapeMismatch(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct HeadProjections {
    pub wq: Tensor,
    pub wk: Tensor,
    pub wv: Tensor,
}

#[derive(Debug, Clone)]
pub struct ModelParams {
    pub config: ModelConfig,
    /// token embeddings, vocab × d_model
    pub token_table: Tensor,
    /// position encodings, max_positions × d_model
    pub pos_table: Tensor,
    pub heads: Vec<HeadProjections>,
    /// merges heads: d_model × (n_heads · d_head)
    pub w_o: Tensor,
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

/// Borrowed views of every parameter, generic in the scalar.
pub struct HeadSlices<'a, S> {
    pub wq: &'a [S],
    pub wk: &'a [S],
    pub wv: &'a [S],
}

pub struct ParamSlices<'a, S> {
    pub token_table: &'a [S],
    pub pos_table: &'a [S],
    pub heads: Vec<HeadSlices<'a, S>>,
    pub w_o: &'a [S],
    pub w1: &'a [S],
    pub b1: &'a [S],
    pub w2: &'a [S],
    pub b2: &'a [S],
}

fn glorot(rng: &mut Rng, rows: usize, cols: usize) -> Tensor {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.range(-limit, limit)).collect();
    Tensor::new(vec![rows, cols], data).expect("init shape")
}

impl ModelParams {
    /// Seeded initialization: uniform ±sqrt(6/(fan_in+fan_out)) per tensor,
    /// biases zero.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = Rng::derive(seed, 0x6d6f_6465_6c00);
        let d = config.d_model;
        let dh = config.d_head();
        let token_table = glorot(&mut rng, config.vocab_size, d);
        let pos_table = glorot(&mut rng, config.max_positions, d);
        let heads = (0..config.n_heads)
            .map(|_| HeadProjections {
                wq: glorot(&mut rng, dh, d),
                wk: glorot(&mut rng, dh, d),
                wv: glorot(&mut rng, dh, d),
            })
            .collect();
        Ok(ModelParams {
            token_table,
            pos_table,
            heads,
            w_o: glorot(&mut rng, d, config.n_heads * dh),
            w1: glorot(&mut rng, d, d),
            b1: Tensor::zeros(vec![d]),
            w2: glorot(&mut rng, config.n_classes, d),
            b2: Tensor::zeros(vec![config.n_classes]),
            config,
        })
    }

    /// Tensors in canonical order. Lifting, saving, and SGD updates all
    /// walk this order, so the adjoint layout matches automatically.
    pub fn tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = vec![
            ("token_table".to_string(), &self.token_table),
            ("pos_table".to_string(), &self.pos_table),
        ];
        for (h, proj) in self.heads.iter().enumerate() {
            out.push((format!("head{h}.wq"), &proj.wq));
            out.push((format!("head{h}.wk"), &proj.wk));
            out.push((format!("head{h}.wv"), &proj.wv));
        }
        out.push(("w_o".to_string(), &self.w_o));
        out.push(("w1".to_string(), &self.w1));
        out.push(("b1".to_string(), &self.b1));
        out.push(("w2".to_string(), &self.w2));
        out.push(("b2".to_string(), &self.b2));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = vec![&mut self.token_table, &mut self.pos_table];
        for proj in &mut self.heads {
            out.push(&mut proj.wq);
            out.push(&mut proj.wk);
            out.push(&mut proj.wv);
        }
        out.push(&mut self.w_o);
        out.push(&mut self.w1);
        out.push(&mut self.b1);
        out.push(&mut self.w2);
        out.push(&mut self.b2);
        out
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn slices(&self) -> ParamSlices<'_, f64> {
        ParamSlices {
            token_table: self.token_table.data(),
            pos_table: self.pos_table.data(),
            heads: self
                .heads
                .iter()
                .map(|h| HeadSlices {
                    wq: h.wq.data(),
                    wk: h.wk.data(),
                    wv: h.wv.data(),
                })
                .collect(),
            w_o: self.w_o.data(),
            w1: self.w1.data(),
            b1: self.b1.data(),
            w2: self.w2.data(),
            b2: self.b2.data(),
        }
    }

    fn expected_shapes(config: &ModelConfig) -> Vec<(String, Vec<usize>)> {
        let d = config.d_model;
        let dh = config.d_head();
        let mut out = vec![
            ("token_table".to_string(), vec![config.vocab_size, d]),
            ("pos_table".to_string(), vec![config.max_positions, d]),
        ];
        for h in 0..config.n_heads {
            out.push((format!("head{h}.wq"), vec![dh, d]));
            out.push((format!("head{h}.wk"), vec![dh, d]));
            out.push((format!("head{h}.wv"), vec![dh, d]));
        }
        out.push(("w_o".to_string(), vec![d, config.n_heads * dh]));
        out.push(("w1".to_string(), vec![d, d]));
        out.push(("b1".to_string(), vec![d]));
        out.push(("w2".to_string(), vec![config.n_classes, d]));
        out.push(("b2".to_string(), vec![config.n_classes]));
        out
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if self.heads.len() != self.config.n_heads {
            return Err(Error::ShapeMismatch(format!(
                "{} head projections for {} heads",
                self.heads.len(),
                self.config.n_heads
            )));
        }
        for ((name, tensor), (_, want)) in self
            .tensors()
            .iter()
            .zip(Self::expected_shapes(&self.config))
        {
            if tensor.shape() != want.as_slice() {
                return Err(Error::ShapeMismatch(format!(
                    "{name}: {:?}, expected {:?}",
                    tensor.shape(),
                    want
                )));
            }
        }
        Ok(())
    }

    /// Concrete forward pass; both modes agree within 1e-5.
    pub fn forward_concrete(&self, tokens: &[u32], mode: AttnMode) -> Result<Vec<f64>> {
        let p = self.slices();
        let embeds = embed_sequence(&self.config, &p, tokens)?;
        let states = match mode {
            AttnMode::Rnn => head_states_rnn(&self.config, &p, &embeds)?,
            AttnMode::Softmax => head_states_softmax(&self.config, &p, &embeds)?,
        };
        Ok(mlp_head(&self.config, &p, states))
    }

    /// Per-head attention state at the final position (diagnostics/tests).
    pub fn attention_final_states(&self, tokens: &[u32], mode: AttnMode) -> Result<Vec<Vec<f64>>> {
        let p = self.slices();
        let embeds = embed_sequence(&self.config, &p, tokens)?;
        match mode {
            AttnMode::Rnn => head_states_rnn(&self.config, &p, &embeds),
            AttnMode::Softmax => head_states_softmax(&self.config, &p, &embeds),
        }
    }
}

/// Embedding of the token at (1-based) position `pos`: token row plus
/// position row.
pub fn embed_token<S: Num>(
    cfg: &ModelConfig,
    p: &ParamSlices<'_, S>,
    token: u32,
    pos: usize,
) -> Result<Vec<S>> {
    if pos == 0 || pos > cfg.max_positions {
        return Err(Error::PositionOverflow {
            needed: pos,
            available: cfg.max_positions,
        });
    }
    let d = cfg.d_model;
    let t = &p.token_table[token as usize * d..(token as usize + 1) * d];
    let pe = &p.pos_table[(pos - 1) * d..pos * d];
    Ok(t.iter().zip(pe).map(|(a, b)| a.add(b)).collect())
}

fn embed_sequence<S: Num>(
    cfg: &ModelConfig,
    p: &ParamSlices<'_, S>,
    tokens: &[u32],
) -> Result<Vec<Vec<S>>> {
    if tokens.is_empty() {
        return Err(Error::EmptyInput);
    }
    if tokens.len() > cfg.max_positions {
        return Err(Error::PositionOverflow {
            needed: tokens.len(),
            available: cfg.max_positions,
        });
    }
    tokens
        .iter()
        .enumerate()
        .map(|(i, &t)| embed_token(cfg, p, t, i + 1))
        .collect()
}

fn head_states_rnn<S: Num>(
    cfg: &ModelConfig,
    p: &ParamSlices<'_, S>,
    embeds: &[Vec<S>],
) -> Result<Vec<Vec<S>>> {
    let d = cfg.d_model;
    let dh = cfg.d_head();
    let scale = cfg.score_scale();
    let last = embeds.last().ok_or(Error::EmptyInput)?;
    let mut states = Vec::with_capacity(cfg.n_heads);
    for head in &p.heads {
        let q: Vec<S> = matvec_slice(head.wq, dh, d, last);
        let keys: Vec<Vec<S>> = embeds
            .iter()
            .map(|e| matvec_slice(head.wk, dh, d, e))
            .collect();
        let values: Vec<Vec<S>> = embeds
            .iter()
            .map(|e| matvec_slice(head.wv, dh, d, e))
            .collect();
        let scores: Vec<S> = keys
            .iter()
            .map(|k| dot_slice(&q, k).mul_const(scale))
            .collect();
        states.push(attention::recurrence_combine(&scores, &values)?);
    }
    Ok(states)
}

fn head_states_softmax(
    cfg: &ModelConfig,
    p: &ParamSlices<'_, f64>,
    embeds: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    let d = cfg.d_model;
    let dh = cfg.d_head();
    let scale = cfg.score_scale();
    let last = embeds.last().ok_or(Error::EmptyInput)?;
    let mut states = Vec::with_capacity(cfg.n_heads);
    for head in &p.heads {
        let q: Vec<f64> = matvec_slice(head.wq, dh, d, last);
        let keys: Vec<Vec<f64>> = embeds
            .iter()
            .map(|e| matvec_slice(head.wk, dh, d, e))
            .collect();
        let values: Vec<Vec<f64>> = embeds
            .iter()
            .map(|e| matvec_slice(head.wv, dh, d, e))
            .collect();
        let scores: Vec<f64> = keys.iter().map(|k| dot_slice(&q, k) * scale).collect();
        states.push(attention::softmax_combine(&scores, &values)?);
    }
    Ok(states)
}

fn mlp_head<S: Num>(cfg: &ModelConfig, p: &ParamSlices<'_, S>, states: Vec<Vec<S>>) -> Vec<S> {
    let d = cfg.d_model;
    let concat: Vec<S> = states.into_iter().flatten().collect();
    let merged = matvec_slice(p.w_o, d, concat.len(), &concat);
    let mut h1 = matvec_slice(p.w1, d, d, &merged);
    for (h, b) in h1.iter_mut().zip(p.b1) {
        *h = h.add(b).relu();
    }
    let mut logits = matvec_slice(p.w2, cfg.n_classes, d, &h1);
    for (l, b) in logits.iter_mut().zip(p.b2) {
        *l = l.add(b);
    }
    logits
}

/// Forward pass in recurrence mode, on any scalar kind.
pub fn forward_rnn<S: Num>(
    cfg: &ModelConfig,
    p: &ParamSlices<'_, S>,
    tokens: &[u32],
) -> Result<Vec<S>> {
    let embeds = embed_sequence(cfg, p, tokens)?;
    let states = head_states_rnn(cfg, p, &embeds)?;
    Ok(mlp_head(cfg, p, states))
}

/// Sound logit box from per-head abstract final states: concatenate the
/// f-boxes, merge through W_o, then the MLP head with monotone relu.
pub fn forward_abstract<S: Num>(
    cfg: &ModelConfig,
    p: &ParamSlices<'_, S>,
    states: &[AbstractHeadState<S>],
) -> Result<IvBox<S>> {
    let d = cfg.d_model;
    let concat = IvBox::new(
        states
            .iter()
            .flat_map(|s| s.f.dims.iter().cloned())
            .collect(),
    );
    let width = concat.len();
    let merged = concat.affine(p.w_o, None, d, width)?;
    let h1 = merged.affine(p.w1, Some(p.b1), d, d)?.relu();
    h1.affine(p.w2, Some(p.b2), cfg.n_classes, d)
}

/// Split one flat parameter vector (in [`ModelParams::tensors`] order)
/// into per-tensor slices. Lets gradient checks treat the whole model as a
/// single coordinate vector.
pub fn slices_from_flat<'a, S>(cfg: &ModelConfig, flat: &'a [S]) -> ParamSlices<'a, S> {
    let mut cursor = 0usize;
    let mut take = |len: usize| -> &'a [S] {
        let s = &flat[cursor..cursor + len];
        cursor += len;
        s
    };
    let d = cfg.d_model;
    let dh = cfg.d_head();
    let token_table = take(cfg.vocab_size * d);
    let pos_table = take(cfg.max_positions * d);
    let heads = (0..cfg.n_heads)
        .map(|_| HeadSlices {
            wq: take(dh * d),
            wk: take(dh * d),
            wv: take(dh * d),
        })
        .collect();
    ParamSlices {
        token_table,
        pos_table,
        heads,
        w_o: take(d * cfg.n_heads * dh),
        w1: take(d * d),
        b1: take(d),
        w2: take(cfg.n_classes * d),
        b2: take(cfg.n_classes),
    }
}

impl ModelParams {
    /// All parameters as one flat vector, [`ModelParams::tensors`] order.
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for (_, t) in self.tensors() {
            out.extend_from_slice(t.data());
        }
        out
    }
}

/// Parameters lifted onto a tape as leaves, in [`ModelParams::tensors`]
/// order, so adjoints can be read back as one contiguous slice.
pub struct LiftedParams {
    pub token_table: Vec<Var>,
    pub pos_table: Vec<Var>,
    pub heads: Vec<(Vec<Var>, Vec<Var>, Vec<Var>)>,
    pub w_o: Vec<Var>,
    pub w1: Vec<Var>,
    pub b1: Vec<Var>,
    pub w2: Vec<Var>,
    pub b2: Vec<Var>,
    pub count: usize,
}

impl LiftedParams {
    pub fn lift(tape: &Tape, params: &ModelParams) -> Self {
        let lift_t = |t: &Tensor| -> Vec<Var> { t.data().iter().map(|&v| tape.leaf(v)).collect() };
        let token_table = lift_t(&params.token_table);
        let pos_table = lift_t(&params.pos_table);
        let heads = params
            .heads
            .iter()
            .map(|h| (lift_t(&h.wq), lift_t(&h.wk), lift_t(&h.wv)))
            .collect();
        LiftedParams {
            token_table,
            pos_table,
            heads,
            w_o: lift_t(&params.w_o),
            w1: lift_t(&params.w1),
            b1: lift_t(&params.b1),
            w2: lift_t(&params.w2),
            b2: lift_t(&params.b2),
            count: params.param_count(),
        }
    }

    /// First leaf; the whole parameter block is contiguous after it.
    pub fn first(&self) -> &Var {
        &self.token_table[0]
    }

    pub fn slices(&self) -> ParamSlices<'_, Var> {
        ParamSlices {
            token_table: &self.token_table,
            pos_table: &self.pos_table,
            heads: self
                .heads
                .iter()
                .map(|(wq, wk, wv)| HeadSlices { wq, wk, wv })
                .collect(),
            w_o: &self.w_o,
            w1: &self.w1,
            b1: &self.b1,
            w2: &self.w2,
            b2: &self.b2,
        }
    }
}

// --- serialization -----------------------------------------------------
//
// Self-describing textual container: version line, config block, vocab
// block (ids 1.., id 0 is the implicit unknown token), then one `tensor`
// block per parameter with its shape and rows of base-16 encoded f64 bits.
// Round-trips are bit-exact.

pub fn save(params: &ModelParams, vocab: &Vocab, path: &Path) -> Result<()> {
    params.validate()?;
    let mut out = String::new();
    out.push_str(MODEL_MAGIC);
    out.push('\n');
    let c = &params.config;
    let _ = writeln!(out, "config vocab_size {}", c.vocab_size);
    let _ = writeln!(out, "config d_model {}", c.d_model);
    let _ = writeln!(out, "config n_heads {}", c.n_heads);
    let _ = writeln!(out, "config max_positions {}", c.max_positions);
    let _ = writeln!(out, "config n_classes {}", c.n_classes);
    let _ = writeln!(
        out,
        "config attention_scaling {}",
        u8::from(c.attention_scaling)
    );
    let words = vocab.words();
    let _ = writeln!(out, "vocab {}", words.len());
    for w in words {
        out.push_str(w);
        out.push('\n');
    }
    for (name, tensor) in params.tensors() {
        let _ = write!(out, "tensor {name}");
        for d in tensor.shape() {
            let _ = write!(out, " {d}");
        }
        out.push('\n');
        let cols = *tensor.shape().last().unwrap_or(&1);
        for (i, v) in tensor.data().iter().enumerate() {
            let _ = write!(out, "{:016x}", v.to_bits());
            if (i + 1) % cols == 0 {
                out.push('\n');
            } else {
                out.push(' ');
            }
        }
    }
    out.push_str("end\n");
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load(path: &Path) -> Result<(ModelParams, Vocab)> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut lines = text.lines();
    let first = lines.next().unwrap_or("");
    if first != MODEL_MAGIC {
        return Err(Error::VersionMismatch(first.to_string()));
    }

    let mut fields = std::collections::BTreeMap::new();
    let mut vocab_words: Vec<String> = Vec::new();
    let mut line = lines.next();
    while let Some(l) = line {
        if let Some(rest) = l.strip_prefix("config ") {
            let mut it = rest.split_whitespace();
            let key = it.next().ok_or_else(|| bad("config key"))?;
            let value: usize = it
                .next()
                .ok_or_else(|| bad("config value"))?
                .parse()
                .map_err(|_| bad("config value"))?;
            fields.insert(key.to_string(), value);
            line = lines.next();
        } else if let Some(rest) = l.strip_prefix("vocab ") {
            let n: usize = rest.trim().parse().map_err(|_| bad("vocab count"))?;
            for _ in 0..n {
                let w = lines.next().ok_or_else(|| bad("truncated vocab"))?;
                vocab_words.push(w.to_string());
            }
            line = lines.next();
        } else {
            break;
        }
    }

    let get = |k: &str| -> Result<usize> {
        fields
            .get(k)
            .copied()
            .ok_or_else(|| bad(&format!("missing config {k}")))
    };
    let config = ModelConfig {
        vocab_size: get("vocab_size")?,
        d_model: get("d_model")?,
        n_heads: get("n_heads")?,
        max_positions: get("max_positions")?,
        n_classes: get("n_classes")?,
        attention_scaling: get("attention_scaling")? != 0,
    };
    config.validate()?;

    let mut tensors = Vec::new();
    for (name, shape) in ModelParams::expected_shapes(&config) {
        let header = line.ok_or_else(|| bad("truncated before tensor header"))?;
        let mut it = header.split_whitespace();
        if it.next() != Some("tensor") {
            return Err(bad(&format!("expected tensor header, got {header:?}")));
        }
        let found_name = it.next().ok_or_else(|| bad("tensor name"))?;
        if found_name != name {
            return Err(Error::ShapeMismatch(format!(
                "tensor order: found {found_name}, expected {name}"
            )));
        }
        let found_shape: Vec<usize> = it
            .map(|s| s.parse().map_err(|_| bad("tensor shape")))
            .collect::<Result<_>>()?;
        if found_shape != shape {
            return Err(Error::ShapeMismatch(format!(
                "{name}: {found_shape:?}, expected {shape:?}"
            )));
        }
        let total: usize = shape.iter().product();
        let mut data = Vec::with_capacity(total);
        while data.len() < total {
            let row = lines.next().ok_or_else(|| bad("truncated tensor data"))?;
            for word in row.split_whitespace() {
                let bits = u64::from_str_radix(word, 16).map_err(|_| bad("bad hex float"))?;
                data.push(f64::from_bits(bits));
            }
        }
        if data.len() != total {
            return Err(bad(&format!("{name}: row overrun")));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(bad(&format!("{name}: non-finite value")));
        }
        tensors.push(Tensor::new(shape, data)?);
        line = lines.next();
    }
    if line != Some("end") {
        return Err(bad("missing end marker"));
    }

    let mut it = tensors.into_iter();
    let token_table = it.next().unwrap();
    let pos_table = it.next().unwrap();
    let mut heads = Vec::with_capacity(config.n_heads);
    for _ in 0..config.n_heads {
        heads.push(HeadProjections {
            wq: it.next().unwrap(),
            wk: it.next().unwrap(),
            wv: it.next().unwrap(),
        });
    }
    let params = ModelParams {
        token_table,
        pos_table,
        heads,
        w_o: it.next().unwrap(),
        w1: it.next().unwrap(),
        b1: it.next().unwrap(),
        w2: it.next().unwrap(),
        b2: it.next().unwrap(),
        config,
    };
    params.validate()?;
    let vocab = Vocab::from_words(vocab_words);
    Ok((params, vocab))
}

fn bad(msg: &str) -> Error {
    Error::MalformedFile(msg.to_string())
}
