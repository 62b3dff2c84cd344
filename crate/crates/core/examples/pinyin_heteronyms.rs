//! Context-dependent readings and their fixed-length symbol sequences.
//!
//! cargo run --example pinyin_heteronyms

use glyphpin::data;
use glyphpin::pinyin::{resolve_reading, to_symbol_sequence};

fn main() -> glyphpin::Result<()> {
    let lexicon = data::pinyin_lexicon();
    for rule in lexicon.rules() {
        let context: String = rule.context.iter().collect();
        println!("rule: {} in {context} reads {}", rule.codepoint, rule.reading);
    }
    for (text, target) in [("我们喜欢音乐", '乐'), ("他们很快乐", '乐'), ("我去还书", '还'), ("他还在看书", '还')]
    {
        let chars: Vec<char> = text.chars().collect();
        let i = chars.iter().position(|&c| c == target).unwrap();
        let reading = resolve_reading(&chars, i, &lexicon);
        let seq = to_symbol_sequence(reading)?;
        println!(
            "{text:10} {target} -> {:6} {}  indices {:?}",
            reading.unwrap_or("-"),
            String::from_utf8_lossy(seq.symbols()),
            seq.indices()
        );
    }
    // characters without a reading get an all-padding sequence
    let none = to_symbol_sequence(None)?;
    println!("no reading      -> {}", String::from_utf8_lossy(none.symbols()));
    Ok(())
}
