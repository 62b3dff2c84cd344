//! Parameter budgets of the four embedding variants, and how each one
//! embeds the same character.
//!
//! cargo run --example fusion_ablation

use glyphpin::baseline::CharShape;
use glyphpin::cli::{char_vectors, ABLATIONS};
use glyphpin::data;
use glyphpin::encoder::{expected_shapes, Encoder, EncoderConfig};

fn main() -> glyphpin::Result<()> {
    let res = data::resources();
    let context: Vec<char> = "我们喜欢音乐".chars().collect();
    for (name, use_glyph, use_pinyin) in ABLATIONS {
        let mut cfg = EncoderConfig::toy(res.vocab.len());
        cfg.use_glyph = use_glyph;
        cfg.use_pinyin = use_pinyin;
        cfg.init_std = 0.1;
        let enc = Encoder::init(cfg.clone(), 7)?;
        let embedding: usize = expected_shapes(&cfg)
            .iter()
            .filter(|(n, _)| !n.starts_with("layer.") && !n.starts_with("mlm."))
            .map(|(_, s)| s.iter().product::<usize>())
            .sum();
        let v = char_vectors(&enc.params, &res, &context, 5, use_glyph, use_pinyin)?;
        let head: Vec<String> = v.fused.data()[..4].iter().map(|x| format!("{x:+.3}")).collect();
        println!(
            "{name:8} {:6} params ({embedding:6} in embeddings)  乐 -> [{} ...]",
            enc.param_count(),
            head.join(" ")
        );
    }
    let plain = CharShape { layers: 2, hidden: 16, heads: 2, vocab: res.vocab.len(), max_len: 32 };
    println!("a plain character encoder of the same shape has {} parameters", plain.param_count());
    Ok(())
}
