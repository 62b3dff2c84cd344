use std::collections::BTreeMap;

use crate::corpus::{apply_masking, masking_rng, Branch, Example, MaskedBatch, MaskingPolicy, Vocab};
use crate::error::{Error, Result};
use crate::fusion::InputFeatures;
use crate::glyph::GlyphAtlas;
use crate::numerics::{ParamVars, Tape, Tensor, Var, IGNORE_ID};
use crate::pinyin::PinyinLexicon;
use crate::rng::{hash_str, CounterRng};

use super::config::TrainConfig;
use super::model::{argmax_rows, mlm_head, value_tape, Dropout, Encoder};
use super::optim::Adam;

/// Lookup tables shared by every forward pass.
#[derive(Debug, Clone)]
pub struct Resources {
    pub vocab: Vocab,
    pub atlas: GlyphAtlas,
    pub lexicon: PinyinLexicon,
}

impl Resources {
    pub fn features(&self, ids: &[u32], chars: &[Option<char>]) -> Result<InputFeatures> {
        InputFeatures::build(ids, chars, &self.atlas, &self.lexicon)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLog {
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
}

/// Owns the model and optimizer state across updates.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub encoder: Encoder,
    pub train: TrainConfig,
    pub adam: Adam,
    pub step: usize,
}

impl Trainer {
    pub fn new(encoder: Encoder, train: TrainConfig) -> Result<Self> {
        train.validate()?;
        let adam = Adam::new(train.weight_decay);
        Ok(Trainer { encoder, train, adam, step: 0 })
    }

    /// One optimizer update. `loss(encoder, tape, vars, micro, dropout)` builds
    /// the loss of micro-batch `micro`; gradients are averaged over
    /// `grad_accum` micro-batches in index order.
    pub fn update<F>(&mut self, mut loss: F) -> Result<StepLog>
    where
        F: FnMut(&Encoder, &mut Tape, &ParamVars, usize, &mut Dropout) -> Result<Var>,
    {
        let step = self.step + 1;
        let lr = self.train.lr_at(step);
        let micro = self.train.grad_accum;
        let mut total: BTreeMap<String, Tensor> = BTreeMap::new();
        let mut loss_sum = 0.0;
        for i in 0..micro {
            let (mut tape, vars) = value_tape(&self.encoder.params);
            let rng = CounterRng::derive(self.train.seed, &[hash_str("dropout"), step as u64, i as u64]);
            let mut dropout = Dropout::new(self.encoder.config.dropout, rng);
            let l = loss(&self.encoder, &mut tape, &vars, i, &mut dropout).map_err(|e| self.diagnose(step, e))?;
            let value = tape.value(l).data()[0];
            if !value.is_finite() {
                return Err(self.diagnose(step, Error::NonFinite { op: "loss".into() }));
            }
            tape.backward(l).map_err(|e| self.diagnose(step, e))?;
            loss_sum += value;
            for (name, g) in vars.grads(&tape) {
                match total.get_mut(&name) {
                    Some(acc) => acc.data_mut().iter_mut().zip(g.data()).for_each(|(a, b)| *a += b),
                    None => {
                        total.insert(name, g);
                    }
                }
            }
        }
        if micro > 1 {
            let inv = 1.0 / micro as f64;
            for g in total.values_mut() {
                g.data_mut().iter_mut().for_each(|v| *v *= inv);
            }
        }
        if let Some((name, _)) = total.iter().find(|(_, g)| !g.is_finite()) {
            return Err(Error::NonFiniteLoss { step, params: vec![format!("{name} (gradient)")] });
        }
        self.adam.step(&mut self.encoder.params, &total, lr)?;
        self.step = step;
        Ok(StepLog { step, lr, loss: loss_sum / micro as f64 })
    }

    /// Converts numerical failures into a report naming suspicious
    /// parameters: non-finite ones first, otherwise the largest in magnitude.
    fn diagnose(&self, step: usize, e: Error) -> Error {
        if !e.is_numerical() {
            return e;
        }
        let params = &self.encoder.params;
        let mut bad: Vec<String> =
            params.iter().filter(|(_, t)| !t.is_finite()).map(|(n, _)| format!("{n} (non-finite values)")).collect();
        if bad.is_empty() {
            let mut by_size: Vec<(f64, &str)> =
                params.iter().map(|(n, t)| (t.data().iter().fold(0.0f64, |m, v| m.max(v.abs())), n)).collect();
            by_size.sort_by(|a, b| b.0.total_cmp(&a.0));
            bad = by_size.iter().take(3).map(|(m, n)| format!("{n} (max |w| {m:.3e})")).collect();
        }
        Error::NonFiniteLoss { step, params: bad }
    }
}

/// MLM logits `[N × V]` for the `N` labeled positions of `batches`, with
/// their labels. Only labeled rows go through the MLM head.
pub fn mlm_logits(
    encoder: &Encoder,
    tape: &mut Tape,
    vars: &ParamVars,
    batches: &[MaskedBatch],
    res: &Resources,
    mut dropout: Option<&mut Dropout>,
) -> Result<(Var, Vec<i64>)> {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for b in batches {
        let positions: Vec<usize> = (0..b.len()).filter(|&t| b.labels[t] != IGNORE_ID).collect();
        if positions.is_empty() {
            continue;
        }
        let features = res.features(&b.input_ids, &b.input_chars)?;
        let h = encoder.forward(tape, vars, &features, &b.attention_mask, dropout.as_deref_mut())?.hidden;
        rows.push(tape.gather_rows(h, &positions)?);
        labels.extend(positions.iter().map(|&t| b.labels[t]));
    }
    if rows.is_empty() {
        return Err(Error::EmptyLoss);
    }
    let h = tape.concat_rows(&rows)?;
    Ok((mlm_head(tape, vars, h)?, labels))
}

/// Mean cross-entropy over the labeled positions of `batches`.
pub fn mlm_loss(
    encoder: &Encoder,
    tape: &mut Tape,
    vars: &ParamVars,
    batches: &[MaskedBatch],
    res: &Resources,
    dropout: Option<&mut Dropout>,
) -> Result<Var> {
    let (logits, labels) = mlm_logits(encoder, tape, vars, batches, res, dropout)?;
    tape.cross_entropy_masked(logits, &labels, IGNORE_ID)
}

/// Argmax predictions at the labeled positions of one masked example:
/// `(position, predicted id, label)`.
pub fn mlm_predictions(encoder: &Encoder, batch: &MaskedBatch, res: &Resources) -> Result<Vec<(usize, u32, u32)>> {
    let positions: Vec<usize> = (0..batch.len()).filter(|&t| batch.labels[t] != IGNORE_ID).collect();
    if positions.is_empty() {
        return Ok(Vec::new());
    }
    let (mut tape, vars) = value_tape(&encoder.params);
    let features = res.features(&batch.input_ids, &batch.input_chars)?;
    let h = encoder.forward(&mut tape, &vars, &features, &batch.attention_mask, None)?.hidden;
    let rows = tape.gather_rows(h, &positions)?;
    let logits = mlm_head(&mut tape, &vars, rows)?;
    let pred = argmax_rows(tape.value(logits));
    Ok(positions.iter().zip(pred).map(|(&t, p)| (t, p as u32, batch.labels[t] as u32)).collect())
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Recovery {
    pub correct: usize,
    pub total: usize,
    /// Counts restricted to positions replaced by [MASK].
    pub masked_correct: usize,
    pub masked_total: usize,
}

impl Recovery {
    pub fn accuracy(&self) -> f64 {
        ratio(self.correct, self.total)
    }

    pub fn masked_accuracy(&self) -> f64 {
        ratio(self.masked_correct, self.masked_total)
    }
}

pub(crate) fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Masked-character recovery over `rounds` fresh maskings of every example,
/// drawn from streams disjoint from training.
pub fn mlm_recovery(
    encoder: &Encoder,
    examples: &[Example],
    policy: &MaskingPolicy,
    res: &Resources,
    seed: u64,
    rounds: u64,
) -> Result<Recovery> {
    let eval_seed = CounterRng::derive(seed, &[hash_str("eval")]).next_u64();
    let mut r = Recovery::default();
    for round in 0..rounds {
        for (i, ex) in examples.iter().enumerate() {
            let mut rng = masking_rng(eval_seed, round, i as u64);
            let b = apply_masking(ex, policy, &res.vocab, &mut rng);
            let masked: Vec<bool> = {
                let mut m = vec![false; b.len()];
                for u in b.selected.iter().filter(|u| u.branch == Branch::Mask) {
                    m[u.start..u.end].iter_mut().for_each(|x| *x = true);
                }
                m
            };
            for (t, pred, label) in mlm_predictions(encoder, &b, res)? {
                let ok = pred == label;
                r.total += 1;
                r.correct += usize::from(ok);
                if masked[t] {
                    r.masked_total += 1;
                    r.masked_correct += usize::from(ok);
                }
            }
        }
    }
    Ok(r)
}

/// Endless stream of dynamically masked examples. Each epoch visits the
/// examples in a seed-derived order and masks example `i` with the stream
/// for `(seed, epoch, i)`.
#[derive(Debug, Clone)]
pub struct MlmStream<'a> {
    examples: &'a [Example],
    policy: &'a MaskingPolicy,
    vocab: &'a Vocab,
    seed: u64,
    epoch: u64,
    order: Vec<usize>,
    cursor: usize,
}

impl<'a> MlmStream<'a> {
    pub fn new(examples: &'a [Example], policy: &'a MaskingPolicy, vocab: &'a Vocab, seed: u64) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::Config("pretraining corpus produced no examples".into()));
        }
        let mut s = MlmStream { examples, policy, vocab, seed, epoch: 0, order: Vec::new(), cursor: 0 };
        s.shuffle();
        Ok(s)
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    fn shuffle(&mut self) {
        self.order = (0..self.examples.len()).collect();
        CounterRng::derive(self.seed, &[hash_str("order"), self.epoch]).shuffle(&mut self.order);
        self.cursor = 0;
    }

    fn next_example(&mut self) -> MaskedBatch {
        if self.cursor == self.order.len() {
            self.epoch += 1;
            self.shuffle();
        }
        let i = self.order[self.cursor];
        self.cursor += 1;
        let mut rng = masking_rng(self.seed, self.epoch, i as u64);
        let mut b = apply_masking(&self.examples[i], self.policy, self.vocab, &mut rng);
        b.stream = (self.seed, self.epoch, i as u64);
        b
    }

    /// The next `size` examples. A batch with no labeled position at all is
    /// discarded and the following one taken instead.
    pub fn next_batch(&mut self, size: usize) -> Vec<MaskedBatch> {
        loop {
            let batch: Vec<MaskedBatch> = (0..size).map(|_| self.next_example()).collect();
            if batch.iter().any(|b| b.labeled() > 0) {
                return batch;
            }
        }
    }
}

/// Runs `steps` MLM updates, calling `on_step` after each.
pub fn pretrain(
    trainer: &mut Trainer,
    stream: &mut MlmStream<'_>,
    res: &Resources,
    steps: usize,
    mut on_step: impl FnMut(&StepLog) -> Result<()>,
) -> Result<Vec<StepLog>> {
    let mut logs = Vec::with_capacity(steps);
    for _ in 0..steps {
        let batches: Vec<Vec<MaskedBatch>> =
            (0..trainer.train.grad_accum).map(|_| stream.next_batch(trainer.train.batch_size)).collect();
        let log = trainer
            .update(|enc, tape, vars, micro, dropout| mlm_loss(enc, tape, vars, &batches[micro], res, Some(dropout)))?;
        on_step(&log)?;
        logs.push(log);
    }
    Ok(logs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_examples, packing_rng, segment, WordLexicon};
    use crate::encoder::EncoderConfig;
    use crate::glyph::synth_glyph;

    fn setup() -> (Resources, Vec<Example>) {
        let lines = ["我喜欢音乐", "他们很快乐", "小猫爱吃鱼", "我们去紫禁城"];
        let vocab = Vocab::from_corpus(&lines, None);
        let words = WordLexicon::new(["喜欢", "音乐", "快乐", "小猫", "紫禁城", "我们", "他们"]);
        let mut atlas = GlyphAtlas::default();
        for &c in vocab.chars() {
            atlas.insert(c as u32, synth_glyph(c as u32));
        }
        let sentences: Vec<_> = lines.iter().map(|l| segment(l, &words, &vocab)).collect();
        let policy = MaskingPolicy::default();
        let examples = build_examples(&sentences, &policy, &mut packing_rng(1));
        (Resources { vocab, atlas, lexicon: PinyinLexicon::default() }, examples)
    }

    fn trainer(res: &Resources, accum: usize) -> Trainer {
        let mut cfg = EncoderConfig::toy(res.vocab.len());
        cfg.pinyin_dim = 4;
        cfg.max_len = 32;
        let enc = Encoder::init(cfg, 1).unwrap();
        let mut t = TrainConfig::preset(crate::encoder::Preset::Toy, 40);
        t.warmup_steps = 5;
        t.batch_size = 2;
        t.grad_accum = accum;
        Trainer::new(enc, t).unwrap()
    }

    #[test]
    fn loss_decreases_on_tiny_corpus() {
        let (res, examples) = setup();
        let policy = MaskingPolicy { select_prob: 0.3, ..MaskingPolicy::default() };
        let mut tr = trainer(&res, 1);
        let mut stream = MlmStream::new(&examples, &policy, &res.vocab, 1).unwrap();
        let logs = pretrain(&mut tr, &mut stream, &res, 40, |_| Ok(())).unwrap();
        let head: f64 = logs[..5].iter().map(|l| l.loss).sum::<f64>() / 5.0;
        let tail: f64 = logs[35..].iter().map(|l| l.loss).sum::<f64>() / 5.0;
        assert!(tail < head, "{head} -> {tail}");
        assert_eq!(logs[4].lr, tr.train.max_lr);
    }

    #[test]
    fn runs_are_bit_identical() {
        let (res, examples) = setup();
        let policy = MaskingPolicy::default();
        let run = || {
            let mut tr = trainer(&res, 2);
            let mut stream = MlmStream::new(&examples, &policy, &res.vocab, 7).unwrap();
            let logs = pretrain(&mut tr, &mut stream, &res, 6, |_| Ok(())).unwrap();
            (logs, tr.encoder.params)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn stream_skips_unlabeled_batches() {
        let (res, examples) = setup();
        let policy = MaskingPolicy::default();
        let mut stream = MlmStream::new(&examples, &policy, &res.vocab, 3).unwrap();
        for _ in 0..50 {
            assert!(stream.next_batch(1)[0].labeled() > 0);
        }
    }

    #[test]
    fn nan_parameters_are_named() {
        let (res, examples) = setup();
        let policy = MaskingPolicy::default();
        let mut tr = trainer(&res, 1);
        tr.encoder.params.get_mut("mlm.dense.weight").unwrap().data_mut()[0] = f64::NAN;
        let mut stream = MlmStream::new(&examples, &policy, &res.vocab, 3).unwrap();
        let err = pretrain(&mut tr, &mut stream, &res, 1, |_| Ok(())).unwrap_err();
        match err {
            Error::NonFiniteLoss { step, params } => {
                assert_eq!(step, 1);
                assert!(params[0].starts_with("mlm.dense.weight"), "{params:?}");
            }
            e => panic!("unexpected {e}"),
        }
    }
}
