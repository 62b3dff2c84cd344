//! Char, glyph, and pinyin embeddings fused by a fully-connected layer, plus
//! learned absolute positions.
//!
//! The three sources are concatenated in the order char ‖ glyph ‖ pinyin.
//! Disabling a source removes its slot and the matching rows of the fusion
//! weight; disabling both skips the fusion layer entirely, leaving the
//! char-only embedding.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::glyph::{flatten_batch, glyph_forward, GlyphAtlas, GlyphEmbedder, GlyphImage};
use crate::numerics::{ParamVars, Tape, Tensor, Var};
use crate::pinyin::{
    pinyin_forward, resolve_reading, to_symbol_sequence, PinyinEncoder, PinyinLexicon, PinyinSequence,
};

pub const CHAR_TABLE: &str = "embed.char";
pub const POSITION_TABLE: &str = "embed.position";
pub const GLYPH_WEIGHT: &str = "glyph.weight";
pub const GLYPH_BIAS: &str = "glyph.bias";
pub const PINYIN_SYMBOLS: &str = "pinyin.symbols";
pub const PINYIN_FILTERS: &str = "pinyin.filters";
pub const PINYIN_BIAS: &str = "pinyin.bias";
pub const FUSION_WEIGHT: &str = "fusion.weight";
pub const FUSION_BIAS: &str = "fusion.bias";

/// Which sources feed the fusion layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Sources {
    pub glyph: bool,
    pub pinyin: bool,
}

impl Sources {
    pub const ALL: Sources = Sources { glyph: true, pinyin: true };
    pub const CHAR_ONLY: Sources = Sources { glyph: false, pinyin: false };

    /// Number of `D`-wide slots entering the fusion layer.
    pub fn slots(self) -> usize {
        1 + usize::from(self.glyph) + usize::from(self.pinyin)
    }

    pub fn fused(self) -> bool {
        self.glyph || self.pinyin
    }
}

/// Value-level fusion parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionParams {
    /// `[V × D]`
    pub char_table: Tensor,
    /// `[slots·D × D]`, absent for the char-only configuration.
    pub fusion_weight: Option<Tensor>,
    pub fusion_bias: Option<Tensor>,
    /// `[L_max × D]`
    pub position_table: Tensor,
    pub use_glyph: bool,
    pub use_pinyin: bool,
}

impl FusionParams {
    pub fn sources(&self) -> Sources {
        Sources { glyph: self.use_glyph, pinyin: self.use_pinyin }
    }

    pub fn dim(&self) -> usize {
        self.char_table.last_dim()
    }
}

/// Concatenates the enabled sources and applies `x · W_F + b`.
pub fn fuse(char_vec: &Tensor, glyph_vec: &Tensor, pinyin_vec: &Tensor, params: &FusionParams) -> Result<Tensor> {
    let d = params.dim();
    for v in [char_vec, glyph_vec, pinyin_vec] {
        if v.shape() != [d] {
            return Err(Error::dim("fuse", v.shape(), &[d]));
        }
    }
    let sources = params.sources();
    if !sources.fused() {
        return Ok(char_vec.clone());
    }
    let mut tape = Tape::new();
    let mut parts = vec![tape.constant(char_vec.reshape(&[1, d])?)];
    if sources.glyph {
        parts.push(tape.constant(glyph_vec.reshape(&[1, d])?));
    }
    if sources.pinyin {
        parts.push(tape.constant(pinyin_vec.reshape(&[1, d])?));
    }
    let (w, b) = match (&params.fusion_weight, &params.fusion_bias) {
        (Some(w), Some(b)) => (tape.constant(w.clone()), tape.constant(b.clone())),
        _ => return Err(Error::MissingParam(FUSION_WEIGHT.into())),
    };
    let y = fusion_layer(&mut tape, &parts, w, b)?;
    Ok(Tensor::vector(tape.value(y).data().to_vec()))
}

fn fusion_layer(tape: &mut Tape, parts: &[Var], weight: Var, bias: Var) -> Result<Var> {
    let x = tape.concat_cols(parts)?;
    let h = tape.matmul(x, weight)?;
    tape.add_bias(h, bias)
}

/// Per-position model inputs derived from ids and visible characters.
#[derive(Debug, Clone, PartialEq)]
pub struct InputFeatures {
    pub ids: Vec<usize>,
    /// Distinct flattened glyph stacks `[U × 2352]`; row 0 is the blank stack.
    pub glyph_images: Tensor,
    /// Row of `glyph_images` for each position.
    pub glyph_rows: Vec<usize>,
    pub pinyin: Vec<PinyinSequence>,
}

impl InputFeatures {
    /// `chars[t]` is the character visible at `t` (`None` for specials and
    /// `[MASK]`). Readings are resolved against the visible text, so context
    /// rules see exactly what the model sees.
    pub fn build(ids: &[u32], chars: &[Option<char>], atlas: &GlyphAtlas, lexicon: &PinyinLexicon) -> Result<Self> {
        if ids.len() != chars.len() {
            return Err(Error::dim("input_features", &[ids.len()], &[chars.len()]));
        }
        let text: Vec<char> = chars.iter().map(|c| c.unwrap_or('\u{FFFD}')).collect();
        let mut unique: BTreeMap<u32, usize> = BTreeMap::new();
        let mut images: Vec<&GlyphImage> = vec![GlyphAtlas::blank()];
        let mut glyph_rows = Vec::with_capacity(ids.len());
        let mut pinyin = Vec::with_capacity(ids.len());
        for (t, c) in chars.iter().enumerate() {
            match c {
                Some(c) if atlas.contains(*c as u32) => {
                    let next = images.len();
                    let row = *unique.entry(*c as u32).or_insert(next);
                    if row == next {
                        images.push(atlas.lookup(*c as u32));
                    }
                    glyph_rows.push(row);
                }
                _ => glyph_rows.push(0),
            }
            let reading = c.and_then(|_| resolve_reading(&text, t, lexicon));
            pinyin.push(to_symbol_sequence(reading)?);
        }
        Ok(InputFeatures {
            ids: ids.iter().map(|&i| i as usize).collect(),
            glyph_images: flatten_batch(images)?,
            glyph_rows,
            pinyin,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Tape handles for the embedding parameters.
#[derive(Debug, Clone, Copy)]
pub struct FusionVars {
    pub char_table: Var,
    pub position_table: Var,
    pub glyph: Option<(Var, Var)>,
    pub pinyin: Option<(Var, Var, Var)>,
    pub fusion: Option<(Var, Var)>,
}

impl FusionVars {
    pub fn from_params(vars: &ParamVars, sources: Sources) -> Result<Self> {
        Ok(FusionVars {
            char_table: vars.get(CHAR_TABLE)?,
            position_table: vars.get(POSITION_TABLE)?,
            glyph: if sources.glyph { Some((vars.get(GLYPH_WEIGHT)?, vars.get(GLYPH_BIAS)?)) } else { None },
            pinyin: if sources.pinyin {
                Some((vars.get(PINYIN_SYMBOLS)?, vars.get(PINYIN_FILTERS)?, vars.get(PINYIN_BIAS)?))
            } else {
                None
            },
            fusion: if sources.fused() { Some((vars.get(FUSION_WEIGHT)?, vars.get(FUSION_BIAS)?)) } else { None },
        })
    }
}

/// Fusion embedding of every position plus `position_table[t]`: `[T × D]`.
pub fn embed_on_tape(tape: &mut Tape, vars: &FusionVars, features: &InputFeatures) -> Result<Var> {
    let t = features.len();
    let (max_len, _) = matrix(tape, vars.position_table)?;
    if t > max_len {
        return Err(Error::Length { what: "sequence", len: t, max: max_len });
    }
    let (v, _) = matrix(tape, vars.char_table)?;
    if let Some(&bad) = features.ids.iter().find(|&&id| id >= v) {
        return Err(Error::Vocab { id: bad, size: v });
    }
    let chars = tape.gather_rows(vars.char_table, &features.ids)?;
    let mut parts = vec![chars];
    if let Some((w, b)) = vars.glyph {
        let images = tape.constant(features.glyph_images.clone());
        let table = glyph_forward(tape, images, w, b)?;
        parts.push(tape.gather_rows(table, &features.glyph_rows)?);
    }
    if let Some((s, f, b)) = vars.pinyin {
        parts.push(pinyin_forward(tape, &features.pinyin, s, f, b)?);
    }
    let fused = match vars.fusion {
        Some((w, b)) => fusion_layer(tape, &parts, w, b)?,
        None => chars,
    };
    let positions = tape.slice_rows(vars.position_table, 0, t)?;
    tape.add(fused, positions)
}

fn matrix(tape: &Tape, v: Var) -> Result<(usize, usize)> {
    match *tape.shape(v) {
        [r, c] => Ok((r, c)),
        ref s => Err(Error::dim("embedding table", s, &[])),
    }
}

/// Value-level sequence embedding; `tokens` pairs each id with its visible
/// character.
pub fn embed_sequence(
    tokens: &[(u32, Option<char>)],
    atlas: &GlyphAtlas,
    lexicon: &PinyinLexicon,
    params: &FusionParams,
    glyph: Option<&GlyphEmbedder>,
    pinyin: Option<&PinyinEncoder>,
) -> Result<Tensor> {
    let ids: Vec<u32> = tokens.iter().map(|t| t.0).collect();
    let chars: Vec<Option<char>> = tokens.iter().map(|t| t.1).collect();
    let features = InputFeatures::build(&ids, &chars, atlas, lexicon)?;
    let mut tape = Tape::new();
    let mut c = |t: &Tensor| tape.constant(t.clone());
    let char_table = c(&params.char_table);
    let position_table = c(&params.position_table);
    let glyph = match (params.use_glyph, glyph) {
        (true, Some(g)) => Some((c(&g.weight), c(&g.bias))),
        (true, None) => return Err(Error::MissingParam(GLYPH_WEIGHT.into())),
        (false, _) => None,
    };
    let pinyin = match (params.use_pinyin, pinyin) {
        (true, Some(p)) => Some((c(&p.symbol_table), c(&p.filters), c(&p.bias))),
        (true, None) => return Err(Error::MissingParam(PINYIN_SYMBOLS.into())),
        (false, _) => None,
    };
    let fusion = match (&params.fusion_weight, &params.fusion_bias) {
        (Some(w), Some(b)) if params.sources().fused() => Some((c(w), c(b))),
        _ if params.sources().fused() => return Err(Error::MissingParam(FUSION_WEIGHT.into())),
        _ => None,
    };
    let vars = FusionVars { char_table, position_table, glyph, pinyin, fusion };
    let y = embed_on_tape(&mut tape, &vars, &features)?;
    Ok(tape.value(y).clone())
}
