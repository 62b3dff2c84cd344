//! Builds a glyph atlas, writes it to disk, reads it back and prints one
//! glyph stack as ASCII art.
//!
//! cargo run --example glyph_atlas [character]

use glyphpin::glyph::{flatten_normalize, load_atlas, write_atlas, GlyphAtlas, FONT_NAMES, GLYPH_INPUT, GLYPH_SIZE};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let c = std::env::args().nth(1).and_then(|s| s.chars().next()).unwrap_or('乐');
    let atlas = GlyphAtlas::synthesize("我喜欢音乐快".chars().chain([c]));

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("atlas.bin");
    write_atlas(&atlas, &path)?;
    let back = load_atlas(&path)?;
    assert_eq!(back, atlas);
    println!("{} glyph stacks, {} bytes on disk", back.len(), std::fs::metadata(&path)?.len());

    let image = back.lookup(c as u32);
    for (f, font) in FONT_NAMES.iter().enumerate() {
        println!("{c} in the {font} slot:");
        for row in 0..GLYPH_SIZE {
            let line: String = (0..GLYPH_SIZE)
                .map(|col| match image[f * GLYPH_SIZE * GLYPH_SIZE + row * GLYPH_SIZE + col] {
                    0..=63 => ' ',
                    64..=127 => '.',
                    128..=191 => '+',
                    _ => '#',
                })
                .collect();
            println!("  {line}");
        }
    }

    let x = flatten_normalize(image)?;
    let mean = x.data().iter().sum::<f64>() / x.numel() as f64;
    println!("flattened to {} inputs ({GLYPH_INPUT} expected), mean {mean:.4}", x.numel());
    println!("missing characters map to the blank stack: {}", back.lookup('龘' as u32) == GlyphAtlas::blank());
    Ok(())
}
