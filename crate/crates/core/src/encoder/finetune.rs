//! Sequence classification and per-character tagging on top of the encoder.

use crate::corpus::{Vocab, CLS_ID, SEP_ID};
use crate::error::{Error, Result};
use crate::numerics::{ParamVars, Tape, Var, IGNORE_ID};
use crate::rng::{hash_str, CounterRng};

use super::model::{argmax_rows, classify_head, tag_head, value_tape, Dropout, Encoder};
use super::train::{ratio, Resources, StepLog, Trainer};

/// Word segmentation tags: begin, middle, end, single.
pub const BMES: [&str; 4] = ["B", "M", "E", "S"];
pub const TAG_B: usize = 0;
pub const TAG_M: usize = 1;
pub const TAG_E: usize = 2;
pub const TAG_S: usize = 3;

/// Model input for one text: `[CLS] chars [SEP]`, truncated to `max_len`.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    pub ids: Vec<u32>,
    pub chars: Vec<Option<char>>,
}

impl Encoded {
    pub fn new(text: &[char], vocab: &Vocab, max_len: usize) -> Self {
        let body = text.len().min(max_len.saturating_sub(2));
        let mut ids = vec![CLS_ID];
        let mut chars = vec![None];
        for &c in &text[..body] {
            ids.push(vocab.id(c));
            chars.push(Some(c));
        }
        ids.push(SEP_ID);
        chars.push(None);
        Encoded { ids, chars }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifyExample {
    pub text: Vec<char>,
    pub label: usize,
}

/// Labeled texts plus the label names, indexed in sorted order.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifyData {
    pub labels: Vec<String>,
    pub examples: Vec<ClassifyExample>,
}

impl ClassifyData {
    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self> {
        let mut labels: Vec<String> = pairs.iter().map(|(l, _)| l.clone()).collect();
        labels.sort();
        labels.dedup();
        if labels.len() < 2 {
            return Err(Error::Config(format!("classification needs two labels, found {labels:?}")));
        }
        let examples = pairs
            .iter()
            .map(|(l, t)| ClassifyExample {
                text: t.chars().collect(),
                label: labels.binary_search(l).expect("label collected above"),
            })
            .collect();
        Ok(ClassifyData { labels, examples })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TagExample {
    pub text: Vec<char>,
    pub tags: Vec<usize>,
}

impl TagExample {
    /// BMES tags for a space-separated line of words.
    pub fn from_segmented(line: &str) -> Self {
        let mut text = Vec::new();
        let mut tags = Vec::new();
        for word in line.split_whitespace() {
            let n = word.chars().count();
            text.extend(word.chars());
            if n == 1 {
                tags.push(TAG_S);
            } else {
                tags.push(TAG_B);
                tags.extend(std::iter::repeat_n(TAG_M, n - 2));
                tags.push(TAG_E);
            }
        }
        TagExample { text, tags }
    }
}

pub fn parse_segmented(text: &str) -> Vec<TagExample> {
    text.lines().filter(|l| !l.trim().is_empty()).map(TagExample::from_segmented).collect()
}

/// Word spans `[start, end)` decoded from BMES tags. `B` and `S` open a
/// word, `E` and `S` close one; a stray `M` or `E` opens a word too.
pub fn spans_from_tags(tags: &[usize]) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start: Option<usize> = None;
    for (i, &t) in tags.iter().enumerate() {
        if t == TAG_B || t == TAG_S {
            if let Some(s) = start.take() {
                spans.push((s, i));
            }
        }
        let s = *start.get_or_insert(i);
        if t == TAG_E || t == TAG_S {
            spans.push((s, i + 1));
            start = None;
        }
    }
    if let Some(s) = start {
        spans.push((s, tags.len()));
    }
    spans
}

/// Cross-entropy of the class logits over a batch of texts.
pub fn classify_loss(
    encoder: &Encoder,
    tape: &mut Tape,
    vars: &ParamVars,
    batch: &[&ClassifyExample],
    res: &Resources,
    mut dropout: Option<&mut Dropout>,
) -> Result<Var> {
    let mut rows = Vec::with_capacity(batch.len());
    let mut labels = Vec::with_capacity(batch.len());
    for ex in batch {
        let h = hidden(encoder, tape, vars, &ex.text, res, dropout.as_deref_mut())?;
        rows.push(classify_head(tape, vars, h)?);
        labels.push(ex.label as i64);
    }
    let logits = tape.concat_rows(&rows)?;
    tape.cross_entropy_masked(logits, &labels, IGNORE_ID)
}

/// Cross-entropy of the tag logits over every character of a batch; the
/// [CLS] and [SEP] rows carry no label.
pub fn tag_loss(
    encoder: &Encoder,
    tape: &mut Tape,
    vars: &ParamVars,
    batch: &[&TagExample],
    res: &Resources,
    mut dropout: Option<&mut Dropout>,
) -> Result<Var> {
    let mut rows = Vec::with_capacity(batch.len());
    let mut labels = Vec::new();
    for ex in batch {
        let h = hidden(encoder, tape, vars, &ex.text, res, dropout.as_deref_mut())?;
        let t = tape.shape(h)[0];
        rows.push(tag_head(tape, vars, h)?);
        labels.extend(tag_labels(&ex.tags, t));
    }
    let logits = tape.concat_rows(&rows)?;
    tape.cross_entropy_masked(logits, &labels, IGNORE_ID)
}

/// Per-row labels for an encoded sequence of length `t`.
fn tag_labels(tags: &[usize], t: usize) -> Vec<i64> {
    let mut labels = vec![IGNORE_ID; t];
    for (l, &tag) in labels[1..t - 1].iter_mut().zip(tags) {
        *l = tag as i64;
    }
    labels
}

fn hidden(
    encoder: &Encoder,
    tape: &mut Tape,
    vars: &ParamVars,
    text: &[char],
    res: &Resources,
    dropout: Option<&mut Dropout>,
) -> Result<Var> {
    let e = Encoded::new(text, &res.vocab, encoder.config.max_len);
    let features = res.features(&e.ids, &e.chars)?;
    let keep = vec![true; e.len()];
    Ok(encoder.forward(tape, vars, &features, &keep, dropout)?.hidden)
}

pub fn predict_class(encoder: &Encoder, text: &[char], res: &Resources) -> Result<usize> {
    let (mut tape, vars) = value_tape(&encoder.params);
    let h = hidden(encoder, &mut tape, &vars, text, res, None)?;
    let logits = classify_head(&mut tape, &vars, h)?;
    Ok(argmax_rows(tape.value(logits))[0])
}

/// One tag per character that fit in the model; longer texts are cut.
pub fn predict_tags(encoder: &Encoder, text: &[char], res: &Resources) -> Result<Vec<usize>> {
    let (mut tape, vars) = value_tape(&encoder.params);
    let h = hidden(encoder, &mut tape, &vars, text, res, None)?;
    let t = tape.shape(h)[0];
    let logits = tag_head(&mut tape, &vars, h)?;
    let pred = argmax_rows(tape.value(logits));
    Ok(pred[1..t - 1].to_vec())
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SpanScores {
    pub matched: usize,
    pub predicted: usize,
    pub gold: usize,
}

impl SpanScores {
    pub fn precision(&self) -> f64 {
        ratio(self.matched, self.predicted)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.matched, self.gold)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    pub fn add(&mut self, predicted: &[(usize, usize)], gold: &[(usize, usize)]) {
        self.predicted += predicted.len();
        self.gold += gold.len();
        self.matched += predicted.iter().filter(|s| gold.contains(s)).count();
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TagMetrics {
    pub correct: usize,
    pub total: usize,
    pub spans: SpanScores,
}

impl TagMetrics {
    pub fn accuracy(&self) -> f64 {
        ratio(self.correct, self.total)
    }
}

/// `(correct, total)` over `examples`.
pub fn evaluate_classify(encoder: &Encoder, examples: &[ClassifyExample], res: &Resources) -> Result<(usize, usize)> {
    let mut correct = 0;
    for ex in examples {
        correct += usize::from(predict_class(encoder, &ex.text, res)? == ex.label);
    }
    Ok((correct, examples.len()))
}

/// Tag accuracy over characters and word-span P/R/F1. Characters cut by
/// `max_len` count as wrong.
pub fn evaluate_tags(encoder: &Encoder, examples: &[TagExample], res: &Resources) -> Result<TagMetrics> {
    let mut m = TagMetrics::default();
    for ex in examples {
        let pred = predict_tags(encoder, &ex.text, res)?;
        m.total += ex.tags.len();
        m.correct += pred.iter().zip(&ex.tags).filter(|(p, g)| p == g).count();
        m.spans.add(&spans_from_tags(&pred), &spans_from_tags(&ex.tags));
    }
    Ok(m)
}

/// Runs `steps` updates over `data` in seed-shuffled epochs, `batch_size`
/// items per micro-batch.
pub fn finetune<T, F>(
    trainer: &mut Trainer,
    data: &[T],
    steps: usize,
    mut loss: F,
    mut on_step: impl FnMut(&StepLog) -> Result<()>,
) -> Result<Vec<StepLog>>
where
    F: FnMut(&Encoder, &mut Tape, &ParamVars, &[&T], &mut Dropout) -> Result<Var>,
{
    if data.is_empty() {
        return Err(Error::Config("finetuning dataset is empty".into()));
    }
    let seed = trainer.train.seed;
    let size = trainer.train.batch_size.min(data.len());
    let mut order: Vec<usize> = Vec::new();
    let mut epoch = 0u64;
    let mut next = move || {
        if order.is_empty() {
            order = (0..data.len()).collect();
            CounterRng::derive(seed, &[hash_str("finetune"), epoch]).shuffle(&mut order);
            order.reverse();
            epoch += 1;
        }
        order.pop().expect("refilled above")
    };
    let mut logs = Vec::with_capacity(steps);
    for _ in 0..steps {
        let micro: Vec<Vec<&T>> =
            (0..trainer.train.grad_accum).map(|_| (0..size).map(|_| &data[next()]).collect()).collect();
        let log = trainer.update(|enc, tape, vars, i, dropout| loss(enc, tape, vars, &micro[i], dropout))?;
        on_step(&log)?;
        logs.push(log);
    }
    Ok(logs)
}
