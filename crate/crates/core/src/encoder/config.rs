use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::fusion::Sources;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Toy,
    Base,
    Large,
}

impl Preset {
    /// `(layers, hidden, heads)`
    pub fn shape(self) -> (usize, usize, usize) {
        match self {
            Preset::Toy => (2, 16, 2),
            Preset::Base => (12, 768, 12),
            Preset::Large => (24, 1024, 16),
        }
    }

    pub fn max_lr(self) -> f64 {
        match self {
            Preset::Toy => 1e-2,
            Preset::Base => 1e-4,
            Preset::Large => 3e-4,
        }
    }

    /// Warmup length for a run of `total` steps. Toy runs warm up over the
    /// first tenth.
    pub fn warmup_steps(self, total: usize) -> usize {
        match self {
            Preset::Toy => total / 10,
            Preset::Base => 20_000.min(total),
            Preset::Large => 90_000.min(total),
        }
    }

    pub fn max_len(self) -> usize {
        match self {
            Preset::Toy => 32,
            Preset::Base | Preset::Large => 512,
        }
    }

    pub fn batch_size(self) -> usize {
        match self {
            Preset::Toy => 64,
            Preset::Base | Preset::Large => 256,
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "toy" => Ok(Preset::Toy),
            "base" => Ok(Preset::Base),
            "large" => Ok(Preset::Large),
            _ => Err(Error::Config(format!("unknown preset {s:?} (toy, base, large)"))),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Toy => "toy",
            Preset::Base => "base",
            Preset::Large => "large",
        })
    }
}

/// Architecture of the encoder and its heads.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderConfig {
    pub layers: usize,
    pub hidden: usize,
    pub heads: usize,
    pub max_len: usize,
    pub vocab_size: usize,
    pub pinyin_dim: usize,
    pub dropout: f64,
    pub use_glyph: bool,
    pub use_pinyin: bool,
    pub init_std: f64,
    /// Sequence classification classes; 0 for no head.
    pub num_classes: usize,
    /// Per-character tag labels; 0 for no head.
    pub num_tags: usize,
}

impl EncoderConfig {
    pub fn preset(preset: Preset, vocab_size: usize) -> Self {
        let (layers, hidden, heads) = preset.shape();
        EncoderConfig {
            layers,
            hidden,
            heads,
            max_len: preset.max_len(),
            vocab_size,
            pinyin_dim: if preset == Preset::Toy { 8 } else { 32 },
            dropout: if preset == Preset::Toy { 0.0 } else { 0.1 },
            use_glyph: true,
            use_pinyin: true,
            init_std: 0.02,
            num_classes: 0,
            num_tags: 0,
        }
    }

    pub fn toy(vocab_size: usize) -> Self {
        Self::preset(Preset::Toy, vocab_size)
    }

    pub fn sources(&self) -> Sources {
        Sources { glyph: self.use_glyph, pinyin: self.use_pinyin }
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.hidden < 2 || self.heads == 0 || !self.hidden.is_multiple_of(self.heads) {
            return bad(format!("hidden {} must be ≥ 2 and divisible by heads {}", self.hidden, self.heads));
        }
        if self.vocab_size <= crate::corpus::NUM_SPECIALS as usize {
            return bad(format!("vocab_size {} leaves no room for characters", self.vocab_size));
        }
        if self.max_len < 3 || self.pinyin_dim == 0 {
            return bad("max_len must be ≥ 3 and pinyin_dim ≥ 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if self.num_classes == 1 || self.num_tags == 1 {
            return bad("heads need at least two labels".into());
        }
        Ok(())
    }

    /// Key/value pairs stored in checkpoints.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        [
            ("layers", self.layers.to_string()),
            ("hidden", self.hidden.to_string()),
            ("heads", self.heads.to_string()),
            ("max_len", self.max_len.to_string()),
            ("vocab_size", self.vocab_size.to_string()),
            ("pinyin_dim", self.pinyin_dim.to_string()),
            ("dropout", self.dropout.to_string()),
            ("use_glyph", self.use_glyph.to_string()),
            ("use_pinyin", self.use_pinyin.to_string()),
            ("init_std", self.init_std.to_string()),
            ("num_classes", self.num_classes.to_string()),
            ("num_tags", self.num_tags.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self> {
        let get = |k: &str| -> Result<&str> {
            pairs
                .iter()
                .find(|(key, _)| key == k)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| Error::Config(format!("missing key {k:?}")))
        };
        fn num<T: FromStr>(k: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::Config(format!("bad value {v:?} for {k}")))
        }
        let cfg = EncoderConfig {
            layers: num("layers", get("layers")?)?,
            hidden: num("hidden", get("hidden")?)?,
            heads: num("heads", get("heads")?)?,
            max_len: num("max_len", get("max_len")?)?,
            vocab_size: num("vocab_size", get("vocab_size")?)?,
            pinyin_dim: num("pinyin_dim", get("pinyin_dim")?)?,
            dropout: num("dropout", get("dropout")?)?,
            use_glyph: num("use_glyph", get("use_glyph")?)?,
            use_pinyin: num("use_pinyin", get("use_pinyin")?)?,
            init_std: num("init_std", get("init_std")?)?,
            num_classes: num("num_classes", get("num_classes")?)?,
            num_tags: num("num_tags", get("num_tags")?)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Optimization schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub max_lr: f64,
    pub warmup_steps: usize,
    pub total_steps: usize,
    pub batch_size: usize,
    /// Micro-batches averaged into one update.
    pub grad_accum: usize,
    pub weight_decay: f64,
    pub seed: u64,
}

impl TrainConfig {
    pub fn preset(preset: Preset, total_steps: usize) -> Self {
        TrainConfig {
            max_lr: preset.max_lr(),
            warmup_steps: preset.warmup_steps(total_steps),
            total_steps,
            batch_size: preset.batch_size(),
            grad_accum: 1,
            weight_decay: 0.01,
            seed: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.warmup_steps > self.total_steps {
            return Err(Error::Config(format!(
                "warmup_steps {} exceeds total_steps {}",
                self.warmup_steps, self.total_steps
            )));
        }
        if self.max_lr < 0.0 || self.batch_size == 0 || self.grad_accum == 0 {
            return Err(Error::Config("max_lr must be ≥ 0, batch_size and grad_accum ≥ 1".into()));
        }
        Ok(())
    }

    /// Linear warmup to `max_lr` at `warmup_steps`, then linear decay to 0 at
    /// `total_steps`.
    pub fn lr_at(&self, step: usize) -> f64 {
        let s = step as f64;
        let up = if self.warmup_steps == 0 { f64::INFINITY } else { s / self.warmup_steps as f64 };
        let down = if self.total_steps == self.warmup_steps {
            f64::INFINITY
        } else {
            (self.total_steps as f64 - s) / (self.total_steps - self.warmup_steps) as f64
        };
        let f = up.min(down);
        if f.is_infinite() {
            return self.max_lr;
        }
        (self.max_lr * f).clamp(0.0, self.max_lr)
    }
}
