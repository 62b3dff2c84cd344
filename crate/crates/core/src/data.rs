//! Small bundled datasets for the toy configuration and the examples.

use crate::corpus::{read_lines, segment, SegmentedSentence, Vocab, WordLexicon};
use crate::encoder::Resources;
use crate::error::Result;
use crate::glyph::{synth_glyph, GlyphAtlas};
use crate::pinyin::PinyinLexicon;

/// 200 sentences over 45 characters, one per line.
pub const CORPUS: &str = include_str!("../data/corpus.txt");
/// Multi-character words for whole-word masking, one per line.
pub const WORDS: &str = include_str!("../data/words.txt");
pub const PINYIN: &str = include_str!("../data/pinyin.tsv");
/// 20 space-segmented sentences for word segmentation tagging.
pub const CWS: &str = include_str!("../data/cws.txt");
/// `label<TAB>text` lines; the label is `pos` exactly when the text
/// contains 快乐.
pub const CLASSIFY: &str = include_str!("../data/classify.tsv");
/// Every corpus character as `U+XXXX`, one per line.
pub const CHARSET: &str = include_str!("../data/charset.txt");
pub const TOY_CONFIG: &str = include_str!("../data/toy.conf");

pub fn corpus_lines() -> Vec<String> {
    read_lines(CORPUS)
}

pub fn word_lexicon() -> WordLexicon {
    WordLexicon::parse(WORDS)
}

pub fn pinyin_lexicon() -> PinyinLexicon {
    PinyinLexicon::parse(PINYIN, "bundled pinyin.tsv").expect("bundled lexicon parses")
}

pub fn vocab() -> Vocab {
    Vocab::from_corpus(&corpus_lines(), None)
}

/// Synthesized glyph stacks for every character of `vocab`.
pub fn synth_atlas(vocab: &Vocab) -> GlyphAtlas {
    let mut atlas = GlyphAtlas::default();
    for &c in vocab.chars() {
        atlas.insert(c as u32, synth_glyph(c as u32));
    }
    atlas
}

pub fn resources() -> Resources {
    let vocab = vocab();
    Resources { atlas: synth_atlas(&vocab), lexicon: pinyin_lexicon(), vocab }
}

pub fn segmented_corpus(vocab: &Vocab) -> Vec<SegmentedSentence> {
    let words = word_lexicon();
    corpus_lines().iter().map(|l| segment(l, &words, vocab)).collect()
}

/// Parses `label<TAB>text` lines.
pub fn parse_labeled(text: &str, origin: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (label, body) = line.split_once('\t').ok_or_else(|| crate::Error::Parse {
            path: origin.to_string(),
            line: n + 1,
            msg: "expected label<TAB>text".into(),
        })?;
        out.push((label.trim().to_string(), body.trim().to_string()));
    }
    Ok(out)
}
