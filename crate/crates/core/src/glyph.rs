//! Three-font glyph bitmaps and the flatten + fully-connected glyph embedding.
//!
//! Atlas file layout (little-endian):
//!
//! ```text
//! "CBGA"  u16 version = 1  u32 count
//! count × { u32 codepoint, 1728 bytes image }
//! ```
//!
//! Images are font-major (FangSong, XingKai, LiShu), row-major within a font,
//! and entries are sorted by codepoint.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor, Var};
use crate::rng::{mix64, CounterRng};

pub const GLYPH_SIZE: usize = 24;
pub const FONTS: usize = 3;
pub const FONT_NAMES: [&str; FONTS] = ["FangSong", "XingKai", "LiShu"];
/// Bytes per image stack, 3·24·24.
pub const IMAGE_BYTES: usize = FONTS * GLYPH_SIZE * GLYPH_SIZE;
/// Flattened input width of the glyph FC layer. The 1728 pixel values fill
/// the front; the remaining 624 slots are always zero.
pub const GLYPH_INPUT: usize = 2352;

const MAGIC: &[u8; 4] = b"CBGA";
const VERSION: u16 = 1;
const HEADER_BYTES: usize = 4 + 2 + 4;
const ENTRY_BYTES: usize = 4 + IMAGE_BYTES;

pub type GlyphImage = [u8; IMAGE_BYTES];

static BLANK: GlyphImage = [0; IMAGE_BYTES];

/// Codepoint → three-font image stack.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GlyphAtlas {
    entries: BTreeMap<u32, Box<GlyphImage>>,
}

impl GlyphAtlas {
    pub fn new() -> Self {
        Self::default()
    }

    /// Atlas of [`synth_glyph`] images for every listed character.
    pub fn synthesize(chars: impl IntoIterator<Item = char>) -> Self {
        let mut atlas = GlyphAtlas::new();
        for c in chars {
            atlas.insert(c as u32, synth_glyph(c as u32));
        }
        atlas
    }

    pub fn insert(&mut self, codepoint: u32, image: GlyphImage) {
        self.entries.insert(codepoint, Box::new(image));
    }

    /// The stored stack, or the all-zero stack for absent codepoints.
    pub fn lookup(&self, codepoint: u32) -> &GlyphImage {
        self.entries.get(&codepoint).map_or(&BLANK, |b| b.as_ref())
    }

    pub fn contains(&self, codepoint: u32) -> bool {
        self.entries.contains_key(&codepoint)
    }

    pub fn blank() -> &'static GlyphImage {
        &BLANK
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn codepoints(&self) -> impl Iterator<Item = u32> + '_ {
        self.entries.keys().copied()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_BYTES + self.entries.len() * ENTRY_BYTES);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (cp, img) in &self.entries {
            out.extend_from_slice(&cp.to_le_bytes());
            out.extend_from_slice(img.as_ref());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let fmt = |offset: usize, msg: &str| Error::Format { offset, msg: msg.to_string() };
        if bytes.len() < HEADER_BYTES {
            return Err(fmt(bytes.len(), "truncated header"));
        }
        if &bytes[..4] != MAGIC {
            return Err(fmt(0, "bad magic, expected \"CBGA\""));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(fmt(4, &format!("unsupported version {version}")));
        }
        let count = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
        let mut atlas = GlyphAtlas::new();
        let mut pos = HEADER_BYTES;
        let mut prev: Option<u32> = None;
        for i in 0..count {
            if bytes.len() < pos + ENTRY_BYTES {
                return Err(fmt(bytes.len(), &format!("truncated entry {i} of {count}")));
            }
            let cp = u32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap());
            if prev.is_some_and(|p| p >= cp) {
                return Err(fmt(pos, "entries not sorted by codepoint"));
            }
            prev = Some(cp);
            let mut img = [0u8; IMAGE_BYTES];
            img.copy_from_slice(&bytes[pos + 4..pos + ENTRY_BYTES]);
            atlas.insert(cp, img);
            pos += ENTRY_BYTES;
        }
        if pos != bytes.len() {
            return Err(fmt(pos, "trailing bytes after last entry"));
        }
        Ok(atlas)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }
}

pub fn load_atlas(path: impl AsRef<Path>) -> Result<GlyphAtlas> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    GlyphAtlas::from_bytes(&bytes)
}

pub fn write_atlas(atlas: &GlyphAtlas, path: impl AsRef<Path>) -> Result<()> {
    atlas.write(path)
}

/// Deterministic stand-in for rendered glyphs: pixel `i` of font `f` is the
/// low byte of a 64-bit hash of `(codepoint, f, i)`.
pub fn synth_glyph(codepoint: u32) -> GlyphImage {
    let mut img = [0u8; IMAGE_BYTES];
    let base = CounterRng::derive(u64::from(codepoint), &[0x6C79_7068]);
    for font in 0..FONTS {
        let mut stream = base.fork(font as u64);
        for px in &mut img[font * GLYPH_SIZE * GLYPH_SIZE..(font + 1) * GLYPH_SIZE * GLYPH_SIZE] {
            *px = (mix64(stream.next_u64()) >> 56) as u8;
        }
    }
    img
}

/// Flattens font-major, then row, then column, scaling bytes into `[0, 1]`.
pub fn flatten_normalize(image: &[u8]) -> Result<Tensor> {
    if image.len() != IMAGE_BYTES {
        return Err(Error::Size { expected: IMAGE_BYTES, actual: image.len() });
    }
    let mut data = vec![0.0; GLYPH_INPUT];
    for (d, &b) in data.iter_mut().zip(image) {
        *d = f64::from(b) / 255.0;
    }
    Tensor::new(&[GLYPH_INPUT], data)
}

/// Stacks flattened images into `[n × 2352]`.
pub fn flatten_batch<'a>(images: impl IntoIterator<Item = &'a GlyphImage>) -> Result<Tensor> {
    let mut data = Vec::new();
    let mut n = 0;
    for img in images {
        data.extend(img.iter().map(|&b| f64::from(b) / 255.0));
        data.resize(data.len() + GLYPH_INPUT - IMAGE_BYTES, 0.0);
        n += 1;
    }
    Tensor::new(&[n, GLYPH_INPUT], data)
}

/// FC layer from a flattened glyph stack to the model width.
#[derive(Debug, Clone, PartialEq)]
pub struct GlyphEmbedder {
    /// `[2352 × D]`
    pub weight: Tensor,
    /// `[D]`
    pub bias: Tensor,
}

impl GlyphEmbedder {
    pub fn new(weight: Tensor, bias: Tensor) -> Result<Self> {
        if weight.rank() != 2 || weight.shape()[0] != GLYPH_INPUT || bias.shape() != [weight.shape()[1]] {
            return Err(Error::dim("glyph_embedder", weight.shape(), bias.shape()));
        }
        Ok(GlyphEmbedder { weight, bias })
    }

    pub fn dim(&self) -> usize {
        self.bias.numel()
    }
}

/// Glyph rows for flattened images `inputs[n × 2352]`: `inputs · weight + bias`.
pub fn glyph_forward(tape: &mut Tape, inputs: Var, weight: Var, bias: Var) -> Result<Var> {
    if tape.shape(inputs).get(1) != Some(&GLYPH_INPUT) {
        return Err(Error::dim("glyph_forward", tape.shape(inputs), &[GLYPH_INPUT]));
    }
    let h = tape.matmul(inputs, weight)?;
    tape.add_bias(h, bias)
}

/// `weightᵀ · flatten_normalize(image) + bias`.
pub fn glyph_embed(embedder: &GlyphEmbedder, image: &[u8]) -> Result<Tensor> {
    let x = flatten_normalize(image)?.reshape(&[1, GLYPH_INPUT])?;
    let mut tape = Tape::new();
    let x = tape.constant(x);
    let w = tape.constant(embedder.weight.clone());
    let b = tape.constant(embedder.bias.clone());
    let y = glyph_forward(&mut tape, x, w, b)?;
    Ok(Tensor::vector(tape.value(y).data().to_vec()))
}
