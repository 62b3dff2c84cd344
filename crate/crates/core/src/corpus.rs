//! Character vocabulary, max-match word segmentation, packed/single example
//! construction, and whole-word / char masking.

use std::collections::{BTreeMap, HashSet};

use crate::error::{Error, Result};
use crate::numerics::IGNORE_ID;
use crate::rng::{hash_str, CounterRng};

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const CLS_ID: u32 = 2;
pub const SEP_ID: u32 = 3;
pub const MASK_ID: u32 = 4;
pub const NUM_SPECIALS: u32 = 5;
pub const SPECIAL_NAMES: [&str; 5] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"];

/// Fixed special ids followed by one id per character.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    chars: Vec<char>,
    ids: BTreeMap<char, u32>,
}

impl Vocab {
    pub fn from_chars(chars: impl IntoIterator<Item = char>) -> Self {
        let mut v = Vocab { chars: Vec::new(), ids: BTreeMap::new() };
        for c in chars {
            if !v.ids.contains_key(&c) {
                v.ids.insert(c, NUM_SPECIALS + v.chars.len() as u32);
                v.chars.push(c);
            }
        }
        v
    }

    /// Characters by descending frequency (ties by codepoint), keeping at
    /// most `max_size` ids in total when given.
    pub fn from_corpus<S: AsRef<str>>(lines: &[S], max_size: Option<usize>) -> Self {
        let mut freq: BTreeMap<char, usize> = BTreeMap::new();
        for line in lines {
            for c in line.as_ref().chars() {
                *freq.entry(c).or_default() += 1;
            }
        }
        let mut by_freq: Vec<(char, usize)> = freq.into_iter().collect();
        by_freq.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let keep = max_size.map_or(usize::MAX, |m| m.saturating_sub(NUM_SPECIALS as usize));
        Vocab::from_chars(by_freq.into_iter().take(keep).map(|(c, _)| c))
    }

    pub fn len(&self) -> usize {
        NUM_SPECIALS as usize + self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, c: char) -> u32 {
        self.ids.get(&c).copied().unwrap_or(UNK_ID)
    }

    pub fn contains(&self, c: char) -> bool {
        self.ids.contains_key(&c)
    }

    /// The character for a non-special id.
    pub fn char_of(&self, id: u32) -> Option<char> {
        id.checked_sub(NUM_SPECIALS).and_then(|i| self.chars.get(i as usize)).copied()
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn is_special(id: u32) -> bool {
        id < NUM_SPECIALS
    }

    /// `7D2B,7981,...`, the form stored in checkpoint config blocks.
    pub fn to_config_value(&self) -> String {
        self.chars.iter().map(|c| format!("{:04X}", *c as u32)).collect::<Vec<_>>().join(",")
    }

    pub fn from_config_value(s: &str) -> Result<Self> {
        let mut chars = Vec::new();
        for part in s.split(',').filter(|p| !p.is_empty()) {
            let c = u32::from_str_radix(part, 16)
                .ok()
                .and_then(char::from_u32)
                .ok_or_else(|| Error::Config(format!("bad vocab entry {part:?}")))?;
            chars.push(c);
        }
        Ok(Vocab::from_chars(chars))
    }
}

/// Word lexicon for greedy forward maximum matching.
#[derive(Debug, Clone, Default)]
pub struct WordLexicon {
    words: HashSet<Vec<char>>,
    max_len: usize,
}

impl WordLexicon {
    pub fn new<S: AsRef<str>>(words: impl IntoIterator<Item = S>) -> Self {
        let mut lex = WordLexicon::default();
        for w in words {
            let w: Vec<char> = w.as_ref().trim().chars().collect();
            if w.len() > 1 {
                lex.max_len = lex.max_len.max(w.len());
                lex.words.insert(w);
            }
        }
        lex
    }

    /// One word per line; blank lines skipped.
    pub fn parse(text: &str) -> Self {
        Self::new(text.lines().filter(|l| !l.trim().is_empty()))
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Characters with ids and half-open word spans tiling `[0, len)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentedSentence {
    pub chars: Vec<char>,
    pub ids: Vec<u32>,
    pub spans: Vec<(usize, usize)>,
}

impl SegmentedSentence {
    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    pub fn words(&self) -> Vec<String> {
        self.spans.iter().map(|&(s, e)| self.chars[s..e].iter().collect()).collect()
    }
}

/// Longest lexicon match at each position; unmatched characters become
/// singleton spans.
pub fn segment(text: &str, words: &WordLexicon, vocab: &Vocab) -> SegmentedSentence {
    let chars: Vec<char> = text.chars().collect();
    let mut spans = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let longest = (2..=words.max_len.min(chars.len() - i))
            .rev()
            .find(|&l| words.words.contains(&chars[i..i + l]))
            .unwrap_or(1);
        spans.push((i, i + longest));
        i += longest;
    }
    let ids = chars.iter().map(|&c| vocab.id(c)).collect();
    SegmentedSentence { chars, ids, spans }
}

/// Masking and packing hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskingPolicy {
    pub wwm_prob: f64,
    pub select_prob: f64,
    pub mask_frac: f64,
    pub random_frac: f64,
    pub keep_frac: f64,
    pub packed_prob: f64,
    pub max_len: usize,
}

impl Default for MaskingPolicy {
    fn default() -> Self {
        MaskingPolicy {
            wwm_prob: 0.9,
            select_prob: 0.15,
            mask_frac: 0.8,
            random_frac: 0.1,
            keep_frac: 0.1,
            packed_prob: 0.9,
            max_len: 512,
        }
    }
}

impl MaskingPolicy {
    pub fn validate(&self) -> Result<()> {
        let total = self.mask_frac + self.random_frac + self.keep_frac;
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("mask/random/keep fractions sum to {total}, not 1")));
        }
        for (name, p) in [
            ("wwm_prob", self.wwm_prob),
            ("select_prob", self.select_prob),
            ("packed_prob", self.packed_prob),
            ("mask_frac", self.mask_frac),
            ("random_frac", self.random_frac),
            ("keep_frac", self.keep_frac),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} = {p} is not a probability")));
            }
        }
        if self.max_len < 3 {
            return Err(Error::Config("max_len must leave room for [CLS] x [SEP]".into()));
        }
        Ok(())
    }
}

/// A `[CLS] … [SEP]` wrapped token sequence. `chars[t]` is `None` for
/// specials; `spans` index into the wrapped sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub ids: Vec<u32>,
    pub chars: Vec<Option<char>>,
    pub spans: Vec<(usize, usize)>,
    pub packed: bool,
}

impl Example {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Wraps one or more sentences without inner separators.
    pub fn wrap(parts: &[&SegmentedSentence], packed: bool) -> Self {
        let mut ex = Example { ids: vec![CLS_ID], chars: vec![None], spans: Vec::new(), packed };
        for s in parts {
            let base = ex.ids.len();
            ex.ids.extend_from_slice(&s.ids);
            ex.chars.extend(s.chars.iter().map(|&c| Some(c)));
            ex.spans.extend(s.spans.iter().map(|&(a, b)| (a + base, b + base)));
        }
        ex.ids.push(SEP_ID);
        ex.chars.push(None);
        ex
    }
}

/// Splits a sentence into pieces of at most `max` characters, cutting any
/// word span that straddles a boundary.
fn split_sentence(s: &SegmentedSentence, max: usize) -> Vec<SegmentedSentence> {
    if s.len() <= max {
        return vec![s.clone()];
    }
    let mut out = Vec::new();
    let mut start = 0;
    while start < s.len() {
        let end = (start + max).min(s.len());
        let spans = s
            .spans
            .iter()
            .filter(|&&(a, b)| b > start && a < end)
            .map(|&(a, b)| (a.max(start) - start, b.min(end) - start))
            .collect();
        out.push(SegmentedSentence { chars: s.chars[start..end].to_vec(), ids: s.ids[start..end].to_vec(), spans });
        start = end;
    }
    out
}

/// Packs consecutive sentences with probability `packed_prob` (greedily,
/// while `[CLS]` + content + `[SEP]` fits in `max_len`), otherwise emits a
/// single sentence. Oversized sentences are first split at `max_len − 2`.
pub fn build_examples(sentences: &[SegmentedSentence], policy: &MaskingPolicy, rng: &mut CounterRng) -> Vec<Example> {
    let room = policy.max_len.saturating_sub(2).max(1);
    let pieces: Vec<SegmentedSentence> =
        sentences.iter().filter(|s| !s.is_empty()).flat_map(|s| split_sentence(s, room)).collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < pieces.len() {
        let packed = rng.next_f64() < policy.packed_prob;
        let mut take = 1;
        if packed {
            let mut used = pieces[i].len();
            while i + take < pieces.len() && used + pieces[i + take].len() <= room {
                used += pieces[i + take].len();
                take += 1;
            }
        }
        let parts: Vec<&SegmentedSentence> = pieces[i..i + take].iter().collect();
        out.push(Example::wrap(&parts, packed));
        i += take;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    WholeWord,
    Char,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    Mask,
    Random,
    Keep,
}

/// One selected word (WWM) or character (CM) and the branch it took.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SelectedUnit {
    pub start: usize,
    pub end: usize,
    pub branch: Branch,
}

/// A corrupted example ready for the model. `labels[t]` holds the original
/// id at selected positions and [`IGNORE_ID`] (−100) elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedBatch {
    pub input_ids: Vec<u32>,
    pub input_chars: Vec<Option<char>>,
    pub labels: Vec<i64>,
    pub attention_mask: Vec<bool>,
    pub strategy: Strategy,
    /// Number of maskable units considered (words for WWM, chars for CM).
    pub units: usize,
    pub selected: Vec<SelectedUnit>,
    pub stream: (u64, u64, u64),
}

impl MaskedBatch {
    pub fn len(&self) -> usize {
        self.input_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.input_ids.is_empty()
    }

    pub fn labeled(&self) -> usize {
        self.labels.iter().filter(|&&l| l != IGNORE_ID).count()
    }
}

/// Corrupts `example` for masked language modeling.
///
/// One draw picks WWM (probability `wwm_prob`) or CM. Each unit (word span
/// or character) is selected with probability `select_prob`; a selected unit
/// takes one mask/random/keep draw shared by all its characters, and in the
/// random branch each character is replaced independently by a uniform
/// non-special vocabulary id. Special positions are never selected.
pub fn apply_masking(example: &Example, policy: &MaskingPolicy, vocab: &Vocab, rng: &mut CounterRng) -> MaskedBatch {
    let strategy = if rng.next_f64() < policy.wwm_prob { Strategy::WholeWord } else { Strategy::Char };
    let units: Vec<(usize, usize)> = match strategy {
        Strategy::WholeWord => example.spans.clone(),
        Strategy::Char => example.spans.iter().flat_map(|&(a, b)| (a..b).map(|t| (t, t + 1))).collect(),
    };
    let mut input_ids = example.ids.clone();
    let mut input_chars = example.chars.clone();
    let mut labels = vec![IGNORE_ID; example.len()];
    let mut selected = Vec::new();
    let n_chars = vocab.chars().len();
    for &(start, end) in &units {
        if rng.next_f64() >= policy.select_prob {
            continue;
        }
        let u = rng.next_f64();
        let branch = if u < policy.mask_frac {
            Branch::Mask
        } else if u < policy.mask_frac + policy.random_frac {
            Branch::Random
        } else {
            Branch::Keep
        };
        for t in start..end {
            labels[t] = i64::from(example.ids[t]);
            match branch {
                Branch::Mask => {
                    input_ids[t] = MASK_ID;
                    input_chars[t] = None;
                }
                Branch::Random if n_chars > 0 => {
                    let id = NUM_SPECIALS + rng.below(n_chars) as u32;
                    input_ids[t] = id;
                    input_chars[t] = vocab.char_of(id);
                }
                Branch::Random | Branch::Keep => {}
            }
        }
        selected.push(SelectedUnit { start, end, branch });
    }
    MaskedBatch {
        input_ids,
        input_chars,
        labels,
        attention_mask: vec![true; example.len()],
        strategy,
        units: units.len(),
        selected,
        stream: (0, 0, 0),
    }
}

const MASK_TAG: u64 = 0x6D61_736B;

/// The masking stream for one `(seed, epoch, example index)` triple.
pub fn masking_rng(seed: u64, epoch: u64, index: u64) -> CounterRng {
    CounterRng::derive(seed, &[MASK_TAG, epoch, index])
}

/// Fresh masking of every example for one epoch, in index order.
pub fn dynamic_epoch_stream<'a>(
    examples: &'a [Example],
    policy: &'a MaskingPolicy,
    vocab: &'a Vocab,
    seed: u64,
    epoch: u64,
) -> impl Iterator<Item = MaskedBatch> + 'a {
    examples.iter().enumerate().map(move |(i, ex)| {
        let mut rng = masking_rng(seed, epoch, i as u64);
        let mut b = apply_masking(ex, policy, vocab, &mut rng);
        b.stream = (seed, epoch, i as u64);
        b
    })
}

/// Stream used for packing decisions.
pub fn packing_rng(seed: u64) -> CounterRng {
    CounterRng::derive(seed, &[hash_str("packing")])
}

/// Non-empty trimmed lines.
pub fn read_lines(text: &str) -> Vec<String> {
    text.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_string).collect()
}

#[cfg(test)]
mod tests {
    use super::Strategy;
    use super::*;
    use proptest::prelude::*;

    fn vocab() -> Vocab {
        Vocab::from_chars("我喜欢逛紫禁城".chars())
    }

    fn sentence(text: &str, words: &[&str]) -> SegmentedSentence {
        segment(text, &WordLexicon::new(words), &vocab())
    }

    fn fake_sentence(len: usize) -> SegmentedSentence {
        SegmentedSentence { chars: vec!['紫'; len], ids: vec![9; len], spans: (0..len).map(|i| (i, i + 1)).collect() }
    }

    #[test]
    fn special_ids() {
        let v = vocab();
        assert_eq!(v.len(), 12);
        assert_eq!(v.id('我'), 5);
        assert_eq!(v.id('x'), UNK_ID);
        assert_eq!(v.char_of(5), Some('我'));
        assert_eq!(v.char_of(MASK_ID), None);
        assert_eq!(Vocab::from_config_value(&v.to_config_value()).unwrap(), v);
    }

    #[test]
    fn vocab_from_corpus_caps_size() {
        let v = Vocab::from_corpus(&["aab", "abc"], Some(7));
        assert_eq!(v.len(), 7);
        assert_eq!(v.chars(), &['a', 'b']);
    }

    #[test]
    fn segment_forbidden_city() {
        let s = sentence("紫禁城", &["紫禁城"]);
        assert_eq!(s.spans, vec![(0, 3)]);
        let s = sentence("我喜欢逛紫禁城", &["喜欢", "紫禁城", "紫禁"]);
        assert_eq!(s.words(), vec!["我", "喜欢", "逛", "紫禁城"]);
    }

    #[test]
    fn segment_without_lexicon_is_singletons() {
        let s = sentence("紫禁城", &[]);
        assert_eq!(s.spans, vec![(0, 1), (1, 2), (2, 3)]);
        let s = sentence("abc", &[]);
        assert_eq!(s.spans.len(), 3);
        assert!(s.ids.iter().all(|&i| i == UNK_ID));
    }

    #[test]
    fn packing_length_arithmetic() {
        let sents = vec![fake_sentence(200), fake_sentence(200), fake_sentence(200)];
        let policy = MaskingPolicy { packed_prob: 1.0, ..Default::default() };
        let ex = build_examples(&sents, &policy, &mut CounterRng::new(0));
        assert_eq!(ex.len(), 2);
        assert_eq!(ex[0].len(), 402);
        assert_eq!(ex[1].len(), 202);
        assert!(ex.iter().all(|e| e.packed));
    }

    #[test]
    fn single_inputs_when_packing_disabled() {
        let sents: Vec<_> = (1..6).map(fake_sentence).collect();
        let policy = MaskingPolicy { packed_prob: 0.0, ..Default::default() };
        let ex = build_examples(&sents, &policy, &mut CounterRng::new(0));
        assert_eq!(ex.len(), 5);
        for (e, s) in ex.iter().zip(&sents) {
            assert_eq!(e.len(), s.len() + 2);
            assert!(!e.packed);
        }
    }

    #[test]
    fn empty_corpus_gives_no_examples() {
        assert!(build_examples(&[], &MaskingPolicy::default(), &mut CounterRng::new(0)).is_empty());
    }

    #[test]
    fn oversized_sentence_is_split_with_cut_spans() {
        let mut s = fake_sentence(7);
        s.spans = vec![(0, 3), (3, 7)];
        let policy = MaskingPolicy { max_len: 7, packed_prob: 0.0, ..Default::default() };
        let ex = build_examples(&[s], &policy, &mut CounterRng::new(0));
        assert_eq!(ex.len(), 2);
        assert_eq!(ex[0].spans, vec![(1, 4), (4, 6)]);
        assert_eq!(ex[1].spans, vec![(1, 3)]);
        assert!(ex.iter().all(|e| e.len() <= 7));
    }

    #[test]
    fn wwm_masks_whole_word() {
        let s = sentence("我喜欢逛紫禁城", &["喜欢", "紫禁城"]);
        let ex = Example::wrap(&[&s], false);
        let policy = MaskingPolicy {
            wwm_prob: 1.0,
            select_prob: 1.0,
            mask_frac: 1.0,
            random_frac: 0.0,
            keep_frac: 0.0,
            ..Default::default()
        };
        let b = apply_masking(&ex, &policy, &vocab(), &mut CounterRng::new(3));
        assert_eq!(b.strategy, Strategy::WholeWord);
        // 紫禁城 sits at wrapped positions 5..8
        assert_eq!(&b.input_ids[5..8], &[MASK_ID; 3]);
        let v = vocab();
        let want: Vec<i64> = "紫禁城".chars().map(|c| i64::from(v.id(c))).collect();
        assert_eq!(&b.labels[5..8], want.as_slice());
        assert_eq!(b.labels[0], IGNORE_ID);
        assert_eq!(*b.labels.last().unwrap(), IGNORE_ID);
        assert_eq!(b.input_ids[0], CLS_ID);
    }

    #[test]
    fn zero_select_prob_leaves_input_alone() {
        let s = sentence("我喜欢逛紫禁城", &["喜欢"]);
        let ex = Example::wrap(&[&s], false);
        let policy = MaskingPolicy { select_prob: 0.0, ..Default::default() };
        for seed in 0..20 {
            let b = apply_masking(&ex, &policy, &vocab(), &mut CounterRng::new(seed));
            assert_eq!(b.input_ids, ex.ids);
            assert!(b.labels.iter().all(|&l| l == IGNORE_ID));
        }
    }

    #[test]
    fn epoch_stream_determinism() {
        let s = sentence("我喜欢逛紫禁城我喜欢逛紫禁城", &["喜欢", "紫禁城"]);
        let examples: Vec<Example> = (0..100).map(|_| Example::wrap(&[&s], false)).collect();
        let policy = MaskingPolicy::default();
        let v = vocab();
        let a: Vec<_> = dynamic_epoch_stream(&examples, &policy, &v, 11, 0).collect();
        let b: Vec<_> = dynamic_epoch_stream(&examples, &policy, &v, 11, 0).collect();
        assert_eq!(a, b);
        let c: Vec<_> = dynamic_epoch_stream(&examples, &policy, &v, 11, 1).collect();
        assert_ne!(a.iter().map(|x| &x.labels).collect::<Vec<_>>(), c.iter().map(|x| &x.labels).collect::<Vec<_>>());
        assert_eq!(dynamic_epoch_stream(&[], &policy, &v, 11, 0).count(), 0);
    }

    #[test]
    fn policy_validation() {
        assert!(MaskingPolicy::default().validate().is_ok());
        let bad = MaskingPolicy { keep_frac: 0.2, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn spans_tile_and_masking_is_consistent(
            text in "[我喜欢逛紫禁城ab]{1,30}",
            seed in any::<u64>(),
            wwm in any::<bool>(),
        ) {
            let s = sentence(&text, &["喜欢", "紫禁城", "紫禁", "我喜"]);
            let mut next = 0;
            for &(a, b) in &s.spans {
                prop_assert_eq!(a, next);
                prop_assert!(b > a);
                next = b;
            }
            prop_assert_eq!(next, s.len());

            let ex = Example::wrap(&[&s], false);
            let policy = MaskingPolicy { wwm_prob: if wwm { 1.0 } else { 0.0 }, select_prob: 0.4, ..Default::default() };
            let b = apply_masking(&ex, &policy, &vocab(), &mut CounterRng::new(seed));
            prop_assert_eq!(b.labels[0], IGNORE_ID);
            prop_assert_eq!(*b.labels.last().unwrap(), IGNORE_ID);
            let from_units: usize = b.selected.iter().map(|u| u.end - u.start).sum();
            prop_assert_eq!(b.labeled(), from_units);
            for u in &b.selected {
                if wwm {
                    prop_assert!(ex.spans.contains(&(u.start, u.end)));
                }
                for t in u.start..u.end {
                    prop_assert_eq!(b.labels[t], i64::from(ex.ids[t]));
                    match u.branch {
                        Branch::Mask => prop_assert_eq!(b.input_ids[t], MASK_ID),
                        Branch::Keep => prop_assert_eq!(b.input_ids[t], ex.ids[t]),
                        Branch::Random => prop_assert!(b.input_ids[t] >= NUM_SPECIALS),
                    }
                }
            }
        }
    }
}
