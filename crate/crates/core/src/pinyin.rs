//! Pinyin readings, their fixed-length symbol encoding, and the width-2
//! convolution + max-pool pinyin embedding.
//!
//! Lexicon file format, one entry per line:
//!
//! ```text
//! U+4E50    le4
//! #rule    音乐    1    U+4E50    yue4
//! # free-form comment
//! ```
//!
//! A rule `(context, offset, codepoint, reading)` fires for the character at
//! index `i` when that character is `codepoint` and `context` occurs in the
//! text starting at `i - offset`. Rules are tried in file order before the
//! default reading.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor, Var};

/// Letters a–z (with `v` standing for ü), tones 1–5, and the pad `-`.
pub const ALPHABET: &str = "-abcdefghijklmnopqrstuvwxyz12345";
pub const ALPHABET_SIZE: usize = 32;
pub const SEQ_LEN: usize = 8;
pub const CONV_WIDTH: usize = 2;
pub const PAD: u8 = b'-';
const MAX_LETTERS: usize = SEQ_LEN - 1;

/// Validates `letters + tone digit`, e.g. `"zhuang4"`.
pub fn validate_reading(reading: &str) -> Result<()> {
    let bad = |reason| Error::Reading { reading: reading.to_string(), reason };
    let bytes = reading.as_bytes();
    let Some((&tone, letters)) = bytes.split_last() else {
        return Err(bad("empty"));
    };
    if !(b'1'..=b'5').contains(&tone) {
        return Err(bad("must end with a tone digit 1-5"));
    }
    if letters.is_empty() {
        return Err(bad("no letters before the tone"));
    }
    if !letters.iter().all(u8::is_ascii_lowercase) {
        return Err(bad("letters must be lowercase a-z (v for ü)"));
    }
    if letters.len() > MAX_LETTERS {
        return Err(bad("more than 7 letters"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextRule {
    pub context: Vec<char>,
    pub offset: usize,
    pub codepoint: char,
    pub reading: String,
}

impl ContextRule {
    fn matches(&self, text: &[char], index: usize) -> bool {
        if text[index] != self.codepoint || index < self.offset {
            return false;
        }
        let start = index - self.offset;
        text.get(start..start + self.context.len()) == Some(self.context.as_slice())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PinyinLexicon {
    defaults: BTreeMap<char, String>,
    rules: Vec<ContextRule>,
}

impl PinyinLexicon {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert_default(&mut self, c: char, reading: &str) -> Result<()> {
        validate_reading(reading)?;
        self.defaults.insert(c, reading.to_string());
        Ok(())
    }

    pub fn push_rule(&mut self, context: &str, offset: usize, codepoint: char, reading: &str) -> Result<()> {
        validate_reading(reading)?;
        let context: Vec<char> = context.chars().collect();
        if context.get(offset) != Some(&codepoint) {
            return Err(Error::Config(format!(
                "rule context {:?} does not hold {codepoint:?} at offset {offset}",
                context.iter().collect::<String>()
            )));
        }
        self.rules.push(ContextRule { context, offset, codepoint, reading: reading.to_string() });
        Ok(())
    }

    pub fn default_reading(&self, c: char) -> Option<&str> {
        self.defaults.get(&c).map(String::as_str)
    }

    pub fn rules(&self) -> &[ContextRule] {
        &self.rules
    }

    pub fn defaults(&self) -> impl Iterator<Item = (char, &str)> {
        self.defaults.iter().map(|(c, r)| (*c, r.as_str()))
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut lex = PinyinLexicon::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            let err = |msg: String| Error::Parse { path: origin.to_string(), line: n + 1, msg };
            if line.trim().is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("#rule\t") {
                let f: Vec<&str> = rest.split('\t').collect();
                let [context, offset, cp, reading] = f[..] else {
                    return Err(err(format!("rule needs 4 tab-separated fields, got {}", f.len())));
                };
                let offset = offset.parse().map_err(|_| err(format!("bad offset {offset:?}")))?;
                let cp = parse_codepoint(cp).ok_or_else(|| err(format!("bad codepoint {cp:?}")))?;
                lex.push_rule(context, offset, cp, reading).map_err(|e| err(e.to_string()))?;
            } else if line.starts_with('#') {
                continue;
            } else {
                let Some((cp, reading)) = line.split_once('\t') else {
                    return Err(err("expected U+XXXX<TAB>reading".into()));
                };
                let cp = parse_codepoint(cp).ok_or_else(|| err(format!("bad codepoint {cp:?}")))?;
                lex.insert_default(cp, reading.trim()).map_err(|e| err(e.to_string()))?;
            }
        }
        Ok(lex)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }
}

/// Parses `U+XXXX`.
pub fn parse_codepoint(s: &str) -> Option<char> {
    let hex = s.trim().strip_prefix("U+")?;
    char::from_u32(u32::from_str_radix(hex, 16).ok()?)
}

/// Reading of `text[index]`: first matching context rule, else the default,
/// else `None`.
pub fn resolve_reading<'a>(text: &[char], index: usize, lexicon: &'a PinyinLexicon) -> Option<&'a str> {
    lexicon
        .rules
        .iter()
        .find(|r| r.matches(text, index))
        .map(|r| r.reading.as_str())
        .or_else(|| lexicon.default_reading(text[index]))
}

/// Eight symbols: letters, one tone digit, then `-` pads. All pads when the
/// character has no reading.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PinyinSequence([u8; SEQ_LEN]);

impl PinyinSequence {
    pub const EMPTY: PinyinSequence = PinyinSequence([PAD; SEQ_LEN]);

    pub fn symbols(&self) -> &[u8; SEQ_LEN] {
        &self.0
    }

    /// Row of each symbol in the symbol table.
    pub fn indices(&self) -> [usize; SEQ_LEN] {
        self.0.map(symbol_index)
    }
}

impl fmt::Display for PinyinSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(std::str::from_utf8(&self.0).unwrap_or("?"))
    }
}

pub fn symbol_index(b: u8) -> usize {
    ALPHABET.bytes().position(|a| a == b).expect("symbol in alphabet")
}

pub fn to_symbol_sequence(reading: Option<&str>) -> Result<PinyinSequence> {
    let Some(reading) = reading else {
        return Ok(PinyinSequence::EMPTY);
    };
    if reading.len() > SEQ_LEN {
        return Err(Error::Length { what: "pinyin reading", len: reading.len(), max: SEQ_LEN });
    }
    validate_reading(reading)?;
    let mut out = [PAD; SEQ_LEN];
    out[..reading.len()].copy_from_slice(reading.as_bytes());
    Ok(PinyinSequence(out))
}

/// Symbol table plus width-2 filters producing a `D`-wide vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PinyinEncoder {
    /// `[32 × E_p]`
    pub symbol_table: Tensor,
    /// `[D × 2·E_p]`
    pub filters: Tensor,
    /// `[D]`
    pub bias: Tensor,
}

impl PinyinEncoder {
    pub fn new(symbol_table: Tensor, filters: Tensor, bias: Tensor) -> Result<Self> {
        let ep = symbol_table.last_dim();
        if symbol_table.shape() != [ALPHABET_SIZE, ep]
            || filters.shape() != [bias.numel(), CONV_WIDTH * ep]
            || bias.rank() != 1
        {
            return Err(Error::dim("pinyin_encoder", symbol_table.shape(), filters.shape()));
        }
        Ok(PinyinEncoder { symbol_table, filters, bias })
    }
}

/// Pinyin rows `[n × D]` for `n` sequences.
pub fn pinyin_forward(tape: &mut Tape, seqs: &[PinyinSequence], symbols: Var, filters: Var, bias: Var) -> Result<Var> {
    let ids: Vec<usize> = seqs.iter().flat_map(|s| s.indices()).collect();
    let embedded = tape.gather_rows(symbols, &ids)?;
    tape.conv1d_maxpool(embedded, filters, bias, CONV_WIDTH, SEQ_LEN)
}

pub fn pinyin_embed(encoder: &PinyinEncoder, seq: &PinyinSequence) -> Result<Tensor> {
    let mut tape = Tape::new();
    let s = tape.constant(encoder.symbol_table.clone());
    let f = tape.constant(encoder.filters.clone());
    let b = tape.constant(encoder.bias.clone());
    let y = pinyin_forward(&mut tape, std::slice::from_ref(seq), s, f, b)?;
    Ok(Tensor::vector(tape.value(y).data().to_vec()))
}
