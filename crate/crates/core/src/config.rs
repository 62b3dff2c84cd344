//! Run configuration: flat `key=value` files plus command-line overrides.
//!
//! Values are applied in order: built-in defaults, the preset's defaults,
//! the config file, `--seed`, then each `--set key=value`. Unknown keys are
//! errors. `warmup_steps` left unset follows the preset rule for the final
//! `total_steps`.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::encoder::{EncoderConfig, Preset, TrainConfig};
use crate::error::{Error, Result};

/// Every accepted key, in the order the effective config is written.
pub const KEYS: &[&str] = &[
    "preset",
    "layers",
    "hidden",
    "heads",
    "max_len",
    "pinyin_dim",
    "dropout",
    "init_std",
    "use_glyph",
    "use_pinyin",
    "seed",
    "max_lr",
    "warmup_steps",
    "total_steps",
    "batch_size",
    "grad_accum",
    "weight_decay",
    "corpus",
    "words",
    "lexicon",
    "atlas",
    "data",
    "init_checkpoint",
    "out_dir",
    "eval_rounds",
    "finetune_steps",
    "finetune_lr",
    "finetune_batch_size",
    "gradcheck_epsilon",
    "gradcheck_init_std",
    "gradcheck_fault",
];

/// Input and output locations. An empty input path selects the bundled
/// data (or, for the atlas, glyphs synthesized for the vocabulary).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub words: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub atlas: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub init_checkpoint: Option<PathBuf>,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinetuneSettings {
    pub steps: usize,
    pub max_lr: f64,
    pub batch_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckSettings {
    pub epsilon: f64,
    pub init_std: f64,
    /// Parameter whose analytic gradient is deliberately scaled, to exercise
    /// the failure path.
    pub fault: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub preset: Preset,
    /// `vocab_size` is filled in once the vocabulary is known.
    pub model: EncoderConfig,
    pub train: TrainConfig,
    warmup_explicit: bool,
    pub paths: Paths,
    pub eval_rounds: u64,
    pub finetune: FinetuneSettings,
    pub gradcheck: GradcheckSettings,
}

/// Where an override came from, for error messages.
#[derive(Debug, Clone, PartialEq)]
pub struct Setting {
    pub key: String,
    pub value: String,
    pub origin: String,
}

impl RunConfig {
    pub fn defaults(preset: Preset) -> Self {
        let steps = 500;
        RunConfig {
            preset,
            model: EncoderConfig::preset(preset, 0),
            train: TrainConfig::preset(preset, steps),
            warmup_explicit: false,
            paths: Paths { out_dir: PathBuf::from("."), ..Paths::default() },
            eval_rounds: 5,
            finetune: FinetuneSettings { steps: 600, max_lr: 3e-4, batch_size: 8 },
            gradcheck: GradcheckSettings { epsilon: 5e-5, init_std: 0.1, fault: None },
        }
    }

    /// Applies `settings` in order on top of the defaults of the preset they
    /// select (toy unless a `preset` key says otherwise).
    pub fn resolve(settings: &[Setting]) -> Result<Self> {
        for s in settings {
            if !KEYS.contains(&s.key.as_str()) {
                return Err(Error::Config(format!("{}: unknown key {:?}", s.origin, s.key)));
            }
        }
        let preset = match settings.iter().rev().find(|s| s.key == "preset") {
            Some(s) => s.value.parse()?,
            None => Preset::Toy,
        };
        let mut cfg = RunConfig::defaults(preset);
        for s in settings {
            cfg.set(&s.key, &s.value).map_err(|e| Error::Config(format!("{}: {e}", s.origin)))?;
        }
        if !cfg.warmup_explicit {
            cfg.train.warmup_steps = preset.warmup_steps(cfg.train.total_steps);
        }
        cfg.train.validate()?;
        if cfg.finetune.batch_size == 0 {
            return Err(Error::Config("finetune_batch_size must be ≥ 1".into()));
        }
        Ok(cfg)
    }

    /// Collects settings from an optional file, `--seed` and `--set` pairs.
    pub fn from_sources(file: Option<&Path>, seed: Option<u64>, sets: &[String]) -> Result<Self> {
        let mut settings = Vec::new();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            settings.extend(parse_file(&text, &path.display().to_string())?);
        }
        if let Some(seed) = seed {
            settings.push(Setting { key: "seed".into(), value: seed.to_string(), origin: "--seed".into() });
        }
        for s in sets {
            let (k, v) = s.split_once('=').ok_or_else(|| Error::Config(format!("--set {s:?}: expected key=value")))?;
            settings.push(Setting {
                key: k.trim().to_string(),
                value: v.trim().to_string(),
                origin: format!("--set {s}"),
            });
        }
        RunConfig::resolve(&settings)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::Config(format!("bad value {v:?} for {key}")))
        }
        let path = |v: &str| (!v.is_empty()).then(|| PathBuf::from(v));
        match key {
            "preset" => self.preset = value.parse()?,
            "layers" => self.model.layers = num(key, value)?,
            "hidden" => self.model.hidden = num(key, value)?,
            "heads" => self.model.heads = num(key, value)?,
            "max_len" => self.model.max_len = num(key, value)?,
            "pinyin_dim" => self.model.pinyin_dim = num(key, value)?,
            "dropout" => self.model.dropout = num(key, value)?,
            "init_std" => self.model.init_std = num(key, value)?,
            "use_glyph" => self.model.use_glyph = num(key, value)?,
            "use_pinyin" => self.model.use_pinyin = num(key, value)?,
            "seed" => self.train.seed = num(key, value)?,
            "max_lr" => self.train.max_lr = num(key, value)?,
            "warmup_steps" => {
                self.train.warmup_steps = num(key, value)?;
                self.warmup_explicit = true;
            }
            "total_steps" => self.train.total_steps = num(key, value)?,
            "batch_size" => self.train.batch_size = num(key, value)?,
            "grad_accum" => self.train.grad_accum = num(key, value)?,
            "weight_decay" => self.train.weight_decay = num(key, value)?,
            "corpus" => self.paths.corpus = path(value),
            "words" => self.paths.words = path(value),
            "lexicon" => self.paths.lexicon = path(value),
            "atlas" => self.paths.atlas = path(value),
            "data" => self.paths.data = path(value),
            "init_checkpoint" => self.paths.init_checkpoint = path(value),
            "out_dir" => self.paths.out_dir = PathBuf::from(if value.is_empty() { "." } else { value }),
            "eval_rounds" => self.eval_rounds = num(key, value)?,
            "finetune_steps" => self.finetune.steps = num(key, value)?,
            "finetune_lr" => self.finetune.max_lr = num(key, value)?,
            "finetune_batch_size" => self.finetune.batch_size = num(key, value)?,
            "gradcheck_epsilon" => self.gradcheck.epsilon = num(key, value)?,
            "gradcheck_init_std" => self.gradcheck.init_std = num(key, value)?,
            "gradcheck_fault" => self.gradcheck.fault = (!value.is_empty()).then(|| value.to_string()),
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Model configuration for a vocabulary of `vocab_size` entries.
    pub fn encoder_config(&self, vocab_size: usize) -> Result<EncoderConfig> {
        let mut cfg = self.model.clone();
        cfg.vocab_size = vocab_size;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Finetuning schedule: the pretraining settings with the finetune
    /// step count, learning rate and batch size, warming up over a tenth.
    pub fn finetune_train(&self) -> TrainConfig {
        TrainConfig {
            max_lr: self.finetune.max_lr,
            warmup_steps: self.finetune.steps / 10,
            total_steps: self.finetune.steps,
            batch_size: self.finetune.batch_size,
            ..self.train.clone()
        }
    }

    /// Adopts the architecture of a loaded model so the echoed config
    /// describes what actually ran.
    pub fn adopt_model(&mut self, model: &EncoderConfig) {
        self.model = model.clone();
    }

    /// The effective configuration, one pair per key in [`KEYS`] order.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        KEYS.iter()
            .map(|&k| {
                let v = match k {
                    "preset" => self.preset.to_string(),
                    "layers" => self.model.layers.to_string(),
                    "hidden" => self.model.hidden.to_string(),
                    "heads" => self.model.heads.to_string(),
                    "max_len" => self.model.max_len.to_string(),
                    "pinyin_dim" => self.model.pinyin_dim.to_string(),
                    "dropout" => self.model.dropout.to_string(),
                    "init_std" => self.model.init_std.to_string(),
                    "use_glyph" => self.model.use_glyph.to_string(),
                    "use_pinyin" => self.model.use_pinyin.to_string(),
                    "seed" => self.train.seed.to_string(),
                    "max_lr" => self.train.max_lr.to_string(),
                    "warmup_steps" => self.train.warmup_steps.to_string(),
                    "total_steps" => self.train.total_steps.to_string(),
                    "batch_size" => self.train.batch_size.to_string(),
                    "grad_accum" => self.train.grad_accum.to_string(),
                    "weight_decay" => self.train.weight_decay.to_string(),
                    "corpus" => path(&self.paths.corpus),
                    "words" => path(&self.paths.words),
                    "lexicon" => path(&self.paths.lexicon),
                    "atlas" => path(&self.paths.atlas),
                    "data" => path(&self.paths.data),
                    "init_checkpoint" => path(&self.paths.init_checkpoint),
                    "out_dir" => self.paths.out_dir.display().to_string(),
                    "eval_rounds" => self.eval_rounds.to_string(),
                    "finetune_steps" => self.finetune.steps.to_string(),
                    "finetune_lr" => self.finetune.max_lr.to_string(),
                    "finetune_batch_size" => self.finetune.batch_size.to_string(),
                    "gradcheck_epsilon" => self.gradcheck.epsilon.to_string(),
                    "gradcheck_init_std" => self.gradcheck.init_std.to_string(),
                    "gradcheck_fault" => self.gradcheck.fault.clone().unwrap_or_default(),
                    _ => unreachable!("every key is listed"),
                };
                (k.to_string(), v)
            })
            .collect()
    }
}

/// Parses `key = value` lines; blank lines and `#` comments are skipped.
pub fn parse_file(text: &str, origin: &str) -> Result<Vec<Setting>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            path: origin.to_string(),
            line: n + 1,
            msg: format!("expected key=value, got {line:?}"),
        })?;
        let key = k.trim();
        if !KEYS.contains(&key) {
            return Err(Error::Parse { path: origin.to_string(), line: n + 1, msg: format!("unknown key {key:?}") });
        }
        out.push(Setting { key: key.to_string(), value: v.trim().to_string(), origin: format!("{origin}:{}", n + 1) });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(k: &str, v: &str) -> Setting {
        Setting { key: k.into(), value: v.into(), origin: "test".into() }
    }

    #[test]
    fn toy_defaults() {
        let cfg = RunConfig::resolve(&[]).unwrap();
        assert_eq!(cfg.preset, Preset::Toy);
        assert_eq!((cfg.model.layers, cfg.model.hidden, cfg.model.heads), (2, 16, 2));
        assert_eq!(cfg.model.pinyin_dim, 8);
        assert_eq!(cfg.train.warmup_steps, 50);
        assert_eq!(cfg.train.seed, 1);
    }

    #[test]
    fn later_settings_win_and_warmup_follows_total() {
        let cfg = RunConfig::resolve(&[set("seed", "4"), set("total_steps", "2000"), set("seed", "9")]).unwrap();
        assert_eq!(cfg.train.seed, 9);
        assert_eq!(cfg.train.warmup_steps, 200);
        let cfg = RunConfig::resolve(&[set("warmup_steps", "7"), set("total_steps", "2000")]).unwrap();
        assert_eq!(cfg.train.warmup_steps, 7);
    }

    #[test]
    fn preset_selects_defaults_regardless_of_position() {
        let cfg = RunConfig::resolve(&[set("hidden", "32"), set("preset", "base")]).unwrap();
        assert_eq!((cfg.model.layers, cfg.model.hidden), (12, 32));
        assert_eq!(cfg.train.max_lr, 1e-4);
    }

    #[test]
    fn unknown_and_malformed_are_errors() {
        assert!(RunConfig::resolve(&[set("hiden", "3")]).is_err());
        assert!(RunConfig::resolve(&[set("hidden", "x")]).is_err());
        assert!(RunConfig::resolve(&[set("warmup_steps", "900")]).is_err());
        assert!(matches!(parse_file("seed=1\nbogus=2\n", "f.conf"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_file("seed 1", "f.conf"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn file_parsing_skips_comments() {
        let s = parse_file("# toy\n\n hidden = 8 \nout_dir=\n", "f").unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!((s[0].key.as_str(), s[0].value.as_str()), ("hidden", "8"));
        let cfg = RunConfig::resolve(&s).unwrap();
        assert_eq!(cfg.paths.out_dir, PathBuf::from("."));
    }

    #[test]
    fn echoed_pairs_reproduce_the_config() {
        let cfg = RunConfig::resolve(&[
            set("use_pinyin", "false"),
            set("gradcheck_fault", "embed.char"),
            set("data", "x.tsv"),
        ])
        .unwrap();
        let pairs = cfg.to_pairs();
        assert_eq!(pairs.len(), KEYS.len());
        let again: Vec<Setting> = pairs.iter().map(|(k, v)| set(k, v)).collect();
        assert_eq!(RunConfig::resolve(&again).unwrap(), RunConfig { warmup_explicit: true, ..cfg });
    }

    #[test]
    fn bundled_toy_config_parses() {
        let s = parse_file(crate::data::TOY_CONFIG, "toy.conf").unwrap();
        let cfg = RunConfig::resolve(&s).unwrap();
        assert_eq!(cfg, RunConfig::resolve(&[]).unwrap());
    }
}
