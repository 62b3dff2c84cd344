//! Shows whole-word and character masking on a few corpus sentences.
//!
//! cargo run --example whole_word_masking

use glyphpin::corpus::{apply_masking, build_examples, masking_rng, packing_rng, Branch, MaskingPolicy, MASK_ID};
use glyphpin::data;

fn main() {
    let vocab = data::vocab();
    let sentences = data::segmented_corpus(&vocab);
    for s in &sentences[..3] {
        println!("segmented: {}", s.words().join(" / "));
    }
    let policy = MaskingPolicy { max_len: 32, select_prob: 0.3, ..MaskingPolicy::default() };
    let examples = build_examples(&sentences, &policy, &mut packing_rng(3));
    println!("{} sentences packed into {} examples", sentences.len(), examples.len());

    for (i, ex) in examples.iter().take(4).enumerate() {
        let b = apply_masking(ex, &policy, &vocab, &mut masking_rng(3, 0, i as u64));
        let show = |ids: &[u32]| -> String {
            ids.iter()
                .map(|&id| match (id, vocab.char_of(id)) {
                    (MASK_ID, _) => '_',
                    (_, Some(c)) => c,
                    _ => '|',
                })
                .collect()
        };
        println!("\n{:?}, {} of {} units selected", b.strategy, b.selected.len(), b.units);
        println!("  original {}", show(&ex.ids));
        println!("  input    {}", show(&b.input_ids));
        for u in &b.selected {
            let word: String = ex.chars[u.start..u.end].iter().flatten().collect();
            let how = match u.branch {
                Branch::Mask => "masked",
                Branch::Random => "randomized",
                Branch::Keep => "kept",
            };
            println!("  {word} at {}..{} {how}", u.start, u.end);
        }
    }
}
