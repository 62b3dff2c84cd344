//! Saves an encoder checkpoint, reloads it and confirms nothing changed.
//!
//! cargo run --example checkpoint_roundtrip

use glyphpin::data;
use glyphpin::encoder::{load_checkpoint, read_checkpoint, save_checkpoint, Encoder, EncoderConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let vocab = data::vocab();
    let mut cfg = EncoderConfig::toy(vocab.len());
    cfg.num_classes = 3;
    let encoder = Encoder::init(cfg, 42)?;

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("model.ckpt");
    let extra = vec![("vocab".to_string(), vocab.to_config_value()), ("note".to_string(), "example".to_string())];
    save_checkpoint(&path, &encoder, &extra)?;
    let bytes = std::fs::read(&path)?;
    println!("{} tensors, {} parameters, {} bytes", encoder.params.len(), encoder.param_count(), bytes.len());

    let raw = read_checkpoint(&path)?;
    for (k, v) in &raw.config {
        let shown: String = v.chars().take(40).collect();
        println!("  {k} = {shown}");
    }
    assert_eq!(raw.to_bytes()?, bytes);

    // values are stored as f32, so reloaded weights match to single precision
    let (back, _) = load_checkpoint(&path)?;
    let worst =
        encoder.params.iter().map(|(name, t)| t.max_abs_diff(back.params.get(name).unwrap())).fold(0.0, f64::max);
    println!("reloaded config equal: {}, max weight change {worst:.2e}", back.config == encoder.config);
    Ok(())
}
