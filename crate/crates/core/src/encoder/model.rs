use crate::error::{Error, Result};
use crate::fusion::{self, embed_on_tape, FusionVars, InputFeatures};
use crate::glyph::GLYPH_INPUT;
use crate::numerics::{ParamStore, ParamVars, Tape, Tensor, Var};
use crate::pinyin::{ALPHABET_SIZE, CONV_WIDTH};
use crate::rng::{hash_str, CounterRng};

use super::config::EncoderConfig;

pub const LN_EPS: f64 = 1e-12;

pub const MLM_DENSE_WEIGHT: &str = "mlm.dense.weight";
pub const MLM_DENSE_BIAS: &str = "mlm.dense.bias";
pub const MLM_NORM_GAIN: &str = "mlm.norm.gain";
pub const MLM_NORM_BIAS: &str = "mlm.norm.bias";
pub const MLM_OUTPUT_WEIGHT: &str = "mlm.output.weight";
pub const MLM_OUTPUT_BIAS: &str = "mlm.output.bias";
pub const CLASSIFY_WEIGHT: &str = "head.classify.weight";
pub const CLASSIFY_BIAS: &str = "head.classify.bias";
pub const TAG_WEIGHT: &str = "head.tag.weight";
pub const TAG_BIAS: &str = "head.tag.bias";

pub fn layer_param(layer: usize, name: &str) -> String {
    format!("layer.{layer}.{name}")
}

/// Names and shapes of every tensor a model with `config` owns, in sorted
/// order.
pub fn expected_shapes(config: &EncoderConfig) -> Vec<(String, Vec<usize>)> {
    let d = config.hidden;
    let ff = 4 * d;
    let sources = config.sources();
    let mut out: Vec<(String, Vec<usize>)> = vec![
        (fusion::CHAR_TABLE.into(), vec![config.vocab_size, d]),
        (fusion::POSITION_TABLE.into(), vec![config.max_len, d]),
    ];
    if sources.glyph {
        out.push((fusion::GLYPH_WEIGHT.into(), vec![GLYPH_INPUT, d]));
        out.push((fusion::GLYPH_BIAS.into(), vec![d]));
    }
    if sources.pinyin {
        out.push((fusion::PINYIN_SYMBOLS.into(), vec![ALPHABET_SIZE, config.pinyin_dim]));
        out.push((fusion::PINYIN_FILTERS.into(), vec![d, CONV_WIDTH * config.pinyin_dim]));
        out.push((fusion::PINYIN_BIAS.into(), vec![d]));
    }
    if sources.fused() {
        out.push((fusion::FUSION_WEIGHT.into(), vec![sources.slots() * d, d]));
        out.push((fusion::FUSION_BIAS.into(), vec![d]));
    }
    for i in 0..config.layers {
        for p in ["query", "key", "value", "output"] {
            out.push((layer_param(i, &format!("attn.{p}.weight")), vec![d, d]));
            // a key bias shifts every score in a softmax row equally, so it
            // never affects the output and is omitted
            if p != "key" {
                out.push((layer_param(i, &format!("attn.{p}.bias")), vec![d]));
            }
        }
        out.push((layer_param(i, "attn.norm.gain"), vec![d]));
        out.push((layer_param(i, "attn.norm.bias"), vec![d]));
        out.push((layer_param(i, "ffn.inner.weight"), vec![d, ff]));
        out.push((layer_param(i, "ffn.inner.bias"), vec![ff]));
        out.push((layer_param(i, "ffn.outer.weight"), vec![ff, d]));
        out.push((layer_param(i, "ffn.outer.bias"), vec![d]));
        out.push((layer_param(i, "ffn.norm.gain"), vec![d]));
        out.push((layer_param(i, "ffn.norm.bias"), vec![d]));
    }
    out.push((MLM_DENSE_WEIGHT.into(), vec![d, d]));
    out.push((MLM_DENSE_BIAS.into(), vec![d]));
    out.push((MLM_NORM_GAIN.into(), vec![d]));
    out.push((MLM_NORM_BIAS.into(), vec![d]));
    out.push((MLM_OUTPUT_WEIGHT.into(), vec![d, config.vocab_size]));
    out.push((MLM_OUTPUT_BIAS.into(), vec![config.vocab_size]));
    if config.num_classes > 0 {
        out.push((CLASSIFY_WEIGHT.into(), vec![d, config.num_classes]));
        out.push((CLASSIFY_BIAS.into(), vec![config.num_classes]));
    }
    if config.num_tags > 0 {
        out.push((TAG_WEIGHT.into(), vec![d, config.num_tags]));
        out.push((TAG_BIAS.into(), vec![config.num_tags]));
    }
    out.sort();
    out
}

/// Biases, norm gains and norm biases are initialized to constants and
/// excluded from weight decay.
pub fn is_bias_or_gain(name: &str) -> bool {
    name.ends_with(".bias") || name.ends_with(".gain")
}

/// Deterministic initial value of one named tensor. Each name draws from its
/// own stream, so a tensor's initial value does not depend on which other
/// tensors exist.
pub fn init_tensor(name: &str, shape: &[usize], std: f64, seed: u64) -> Tensor {
    if name.ends_with(".gain") {
        return Tensor::full(shape, 1.0);
    }
    if name.ends_with(".bias") {
        return Tensor::zeros(shape);
    }
    let mut rng = CounterRng::derive(seed, &[hash_str("init"), hash_str(name)]);
    let n: usize = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| std * rng.normal()).collect()).expect("shape product matches data")
}

/// Inverted dropout driven by a counter RNG. Masks are drawn in call order,
/// so a fixed stream gives a fixed sequence of masks.
#[derive(Debug, Clone)]
pub struct Dropout {
    pub rate: f64,
    pub rng: CounterRng,
}

impl Dropout {
    pub fn new(rate: f64, rng: CounterRng) -> Self {
        Dropout { rate, rng }
    }

    pub fn apply(&mut self, tape: &mut Tape, x: Var) -> Result<Var> {
        if self.rate <= 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - self.rate);
        let mask =
            (0..tape.value(x).numel()).map(|_| if self.rng.next_f64() < self.rate { 0.0 } else { keep }).collect();
        tape.dropout(x, mask)
    }
}

pub(crate) fn apply_dropout(tape: &mut Tape, dropout: &mut Option<&mut Dropout>, x: Var) -> Result<Var> {
    match dropout {
        Some(d) => d.apply(tape, x),
        None => Ok(x),
    }
}

/// Encoder output. `attention[l][h]` is the `[T × T]` probability matrix of
/// head `h` in layer `l`.
#[derive(Debug, Clone)]
pub struct Forward {
    pub hidden: Var,
    pub attention: Vec<Vec<Var>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub config: EncoderConfig,
    pub params: ParamStore,
}

impl Encoder {
    pub fn init(config: EncoderConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        for (name, shape) in expected_shapes(&config) {
            let t = init_tensor(&name, &shape, config.init_std, seed);
            params.insert(name, t);
        }
        Ok(Encoder { config, params })
    }

    /// Wraps existing parameters after checking every name and shape.
    pub fn from_params(config: EncoderConfig, params: ParamStore) -> Result<Self> {
        config.validate()?;
        check_shapes(&config, &params)?;
        Ok(Encoder { config, params })
    }

    pub fn param_count(&self) -> usize {
        self.params.count()
    }

    /// Switches the task heads to `num_classes` and `num_tags`, keeping
    /// every shared tensor. New head tensors are freshly initialized.
    pub fn attach_heads(mut self, num_classes: usize, num_tags: usize, seed: u64) -> Result<Self> {
        self.config.num_classes = num_classes;
        self.config.num_tags = num_tags;
        self.config.validate()?;
        let expected = expected_shapes(&self.config);
        let stale: Vec<String> =
            self.params.names().filter(|n| !expected.iter().any(|(e, _)| e == n)).map(str::to_string).collect();
        for name in stale {
            self.params.remove(&name);
        }
        for (name, shape) in expected {
            if !self.params.contains(&name) {
                let t = init_tensor(&name, &shape, self.config.init_std, seed);
                self.params.insert(name, t);
            }
        }
        check_shapes(&self.config, &self.params)?;
        Ok(self)
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        vars: &ParamVars,
        features: &InputFeatures,
        keep: &[bool],
        mut dropout: Option<&mut Dropout>,
    ) -> Result<Forward> {
        let fv = FusionVars::from_params(vars, self.config.sources())?;
        let x = embed_on_tape(tape, &fv, features)?;
        let x = apply_dropout(tape, &mut dropout, x)?;
        encode_layers(tape, vars, &self.config, x, keep, dropout)
    }
}

fn check_shapes(config: &EncoderConfig, params: &ParamStore) -> Result<()> {
    let expected = expected_shapes(config);
    for (name, shape) in &expected {
        match params.get(name) {
            Ok(t) if t.shape() == shape.as_slice() => {}
            Ok(t) => {
                return Err(Error::Checkpoint {
                    tensor: name.clone(),
                    msg: format!("shape {:?}, config expects {:?}", t.shape(), shape),
                })
            }
            Err(_) => return Err(Error::Checkpoint { tensor: name.clone(), msg: "missing".into() }),
        }
    }
    if let Some(extra) = params.names().find(|n| !expected.iter().any(|(e, _)| e == n)) {
        return Err(Error::Checkpoint { tensor: extra.to_string(), msg: "not part of this configuration".into() });
    }
    Ok(())
}

fn dense(tape: &mut Tape, vars: &ParamVars, x: Var, weight: &str, bias: &str) -> Result<Var> {
    let h = tape.matmul(x, vars.get(weight)?)?;
    tape.add_bias(h, vars.get(bias)?)
}

fn norm(tape: &mut Tape, vars: &ParamVars, x: Var, prefix: &str) -> Result<Var> {
    let g = vars.get(&format!("{prefix}.gain"))?;
    let b = vars.get(&format!("{prefix}.bias"))?;
    tape.layer_norm(x, g, b, LN_EPS)
}

/// The post-norm transformer stack applied to embeddings `x: [T × D]`.
/// `keep[t] == false` excludes key `t` from every attention row.
pub fn encode_layers(
    tape: &mut Tape,
    vars: &ParamVars,
    config: &EncoderConfig,
    mut x: Var,
    keep: &[bool],
    mut dropout: Option<&mut Dropout>,
) -> Result<Forward> {
    let t = tape.shape(x)[0];
    if keep.len() != t {
        return Err(Error::dim("attention mask", &[t], &[keep.len()]));
    }
    let dh = config.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();
    let mut attention = Vec::with_capacity(config.layers);
    for l in 0..config.layers {
        let p = |s: &str| layer_param(l, s);
        let q = dense(tape, vars, x, &p("attn.query.weight"), &p("attn.query.bias"))?;
        let k = tape.matmul(x, vars.get(&p("attn.key.weight"))?)?;
        let v = dense(tape, vars, x, &p("attn.value.weight"), &p("attn.value.bias"))?;
        let mut heads = Vec::with_capacity(config.heads);
        let mut probs = Vec::with_capacity(config.heads);
        for h in 0..config.heads {
            let (a, b) = (h * dh, (h + 1) * dh);
            let qh = tape.slice_cols(q, a, b)?;
            let kh = tape.slice_cols(k, a, b)?;
            let vh = tape.slice_cols(v, a, b)?;
            let kt = tape.transpose(kh)?;
            let scores = tape.matmul(qh, kt)?;
            let scores = tape.scale(scores, scale)?;
            let pr = tape.masked_softmax(scores, Some(keep))?;
            probs.push(pr);
            let pr = apply_dropout(tape, &mut dropout, pr)?;
            heads.push(tape.matmul(pr, vh)?);
        }
        attention.push(probs);
        let ctx = tape.concat_cols(&heads)?;
        let out = dense(tape, vars, ctx, &p("attn.output.weight"), &p("attn.output.bias"))?;
        let out = apply_dropout(tape, &mut dropout, out)?;
        let res = tape.add(x, out)?;
        x = norm(tape, vars, res, &p("attn.norm"))?;

        let inner = dense(tape, vars, x, &p("ffn.inner.weight"), &p("ffn.inner.bias"))?;
        let inner = tape.gelu(inner)?;
        let outer = dense(tape, vars, inner, &p("ffn.outer.weight"), &p("ffn.outer.bias"))?;
        let outer = apply_dropout(tape, &mut dropout, outer)?;
        let res = tape.add(x, outer)?;
        x = norm(tape, vars, res, &p("ffn.norm"))?;
    }
    Ok(Forward { hidden: x, attention })
}

/// `[T × V]` vocabulary logits: dense, gelu, norm, output projection.
pub fn mlm_head(tape: &mut Tape, vars: &ParamVars, hidden: Var) -> Result<Var> {
    let h = dense(tape, vars, hidden, MLM_DENSE_WEIGHT, MLM_DENSE_BIAS)?;
    let h = tape.gelu(h)?;
    let h = norm(tape, vars, h, "mlm.norm")?;
    dense(tape, vars, h, MLM_OUTPUT_WEIGHT, MLM_OUTPUT_BIAS)
}

/// `[1 × C]` class logits from the first ([CLS]) row.
pub fn classify_head(tape: &mut Tape, vars: &ParamVars, hidden: Var) -> Result<Var> {
    let cls = tape.slice_rows(hidden, 0, 1)?;
    dense(tape, vars, cls, CLASSIFY_WEIGHT, CLASSIFY_BIAS)
}

/// `[T × K]` per-position tag logits.
pub fn tag_head(tape: &mut Tape, vars: &ParamVars, hidden: Var) -> Result<Var> {
    dense(tape, vars, hidden, TAG_WEIGHT, TAG_BIAS)
}

/// Row-wise argmax; ties go to the lowest index.
pub fn argmax_rows(t: &Tensor) -> Vec<usize> {
    (0..t.rows())
        .map(|r| {
            let row = t.row(r);
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Registers `params` on a fresh tape, shared by callers that only need
/// values.
pub fn value_tape(params: &ParamStore) -> (Tape, ParamVars) {
    let mut tape = Tape::new();
    let vars = params.register(&mut tape);
    (tape, vars)
}
