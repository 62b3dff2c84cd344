use std::path::Path;
use std::process::{Command, Output};

use glyphpin::encoder::{expected_shapes, load_checkpoint, EncoderConfig};
use glyphpin::glyph::load_atlas;
use tempfile::TempDir;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_glyphpin")).current_dir(dir).args(args).output().unwrap()
}

fn text(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn metric(out: &str, name: &str) -> f64 {
    out.lines()
        .find_map(|l| l.strip_prefix(&format!("{name}\t")))
        .and_then(|r| r.split('\t').next()?.parse().ok())
        .unwrap_or_else(|| panic!("no {name} in\n{out}"))
}

#[test]
fn zero_step_pretrain_writes_init_checkpoint_and_header_only_log() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), &["--set", "total_steps=0", "--set", "out_dir=o", "pretrain"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let log = std::fs::read_to_string(dir.path().join("o/pretrain.tsv")).unwrap();
    let body: Vec<&str> = log.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(body, ["step\tlr\tloss"]);
    assert!(log.contains("# seed=1\n"));
    let (enc, config) = load_checkpoint(&dir.path().join("o/pretrain.ckpt")).unwrap();
    assert_eq!(enc.param_count(), 47_954);
    assert!(config.iter().any(|(k, _)| k == "vocab"));
}

#[test]
fn seed_flag_is_overridden_by_set() {
    let dir = TempDir::new().unwrap();
    std::fs::write(dir.path().join("run.conf"), "seed = 3\ntotal_steps = 0\n").unwrap();
    let out = run(dir.path(), &["--config", "run.conf", "--seed", "4", "--set", "seed=5", "pretrain"]);
    assert!(out.status.success());
    let log = std::fs::read_to_string(dir.path().join("pretrain.tsv")).unwrap();
    assert!(log.contains("# seed=5\n"), "{log}");
}

#[test]
fn synth_atlas_is_deterministic_and_accepts_empty_charsets() {
    let dir = TempDir::new().unwrap();
    std::fs::write(dir.path().join("empty.txt"), "").unwrap();
    std::fs::write(dir.path().join("some.txt"), "U+4E50\n音\n# comment\n").unwrap();
    assert!(run(dir.path(), &["synth-atlas", "empty.txt", "e.bin"]).status.success());
    assert_eq!(load_atlas(dir.path().join("e.bin")).unwrap().len(), 0);

    assert!(run(dir.path(), &["synth-atlas", "some.txt", "a.bin"]).status.success());
    assert!(run(dir.path(), &["synth-atlas", "some.txt", "b.bin"]).status.success());
    let a = std::fs::read(dir.path().join("a.bin")).unwrap();
    assert_eq!(a, std::fs::read(dir.path().join("b.bin")).unwrap());
    let atlas = load_atlas(dir.path().join("a.bin")).unwrap();
    assert_eq!(atlas.codepoints().collect::<Vec<_>>(), [0x4E50, 0x97F3]);
}

#[test]
fn input_problems_exit_2() {
    let dir = TempDir::new().unwrap();
    std::fs::write(dir.path().join("bad.conf"), "layers = two\n").unwrap();
    std::fs::write(dir.path().join("bad.txt"), "U+ZZZZ\n").unwrap();
    for args in [
        &["bogus"][..],
        &["--set", "nope=1", "pretrain"],
        &["--set", "hidden=10", "--set", "heads=3", "pretrain"],
        &["--config", "missing.conf", "pretrain"],
        &["--config", "bad.conf", "pretrain"],
        &["eval"],
        &["synth-atlas", "bad.txt", "x.bin"],
        &["--set", "corpus=missing.txt", "pretrain"],
        &["--set", "init_checkpoint=missing.ckpt", "eval"],
        &["--set", "layers=12", "--set", "hidden=768", "--set", "heads=12", "gradcheck"],
    ] {
        let out = run(dir.path(), args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn corrupt_checkpoint_is_an_input_error() {
    let dir = TempDir::new().unwrap();
    std::fs::write(dir.path().join("x.ckpt"), b"CBRT\x01\x00garbage").unwrap();
    let out = run(dir.path(), &["--set", "init_checkpoint=x.ckpt", "eval"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn char_only_gradcheck_reports_only_char_parameters() {
    let dir = TempDir::new().unwrap();
    let args = [
        "--set",
        "layers=1",
        "--set",
        "hidden=8",
        "--set",
        "use_glyph=false",
        "--set",
        "use_pinyin=false",
        "gradcheck",
    ];
    let out = run(dir.path(), &args);
    assert_eq!(out.status.code(), Some(0));
    let stdout = text(&out);
    let names: Vec<&str> = stdout
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("param\t") && !l.starts_with("max\t"))
        .map(|l| l.split('\t').next().unwrap())
        .collect();
    let mut cfg = EncoderConfig::toy(50);
    (cfg.layers, cfg.hidden, cfg.use_glyph, cfg.use_pinyin) = (1, 8, false, false);
    let want: Vec<String> = expected_shapes(&cfg).into_iter().map(|(n, _)| n).collect();
    let mut sorted = want.clone();
    sorted.sort();
    assert_eq!(names, sorted);
    assert!(!names.iter().any(|n| n.starts_with("glyph") || n.starts_with("pinyin") || n.starts_with("fusion")));
    assert!(metric(&stdout, "max").is_finite());
}

#[test]
fn injected_gradient_fault_exits_3_and_names_the_parameter() {
    let dir = TempDir::new().unwrap();
    let args = ["--set", "layers=1", "--set", "hidden=8", "--set", "gradcheck_fault=mlm.dense.weight", "gradcheck"];
    let out = run(dir.path(), &args);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mlm.dense.weight"));
    let row = text(&out).lines().find(|l| l.starts_with("mlm.dense.weight\t")).unwrap().to_string();
    assert!(row.ends_with("FAIL"), "{row}");
}

#[test]
fn finetuning_reaches_useful_accuracy() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), &["--set", "out_dir=o", "finetune", "classify"]);
    assert!(out.status.success());
    assert_eq!(metric(&text(&out), "classify_accuracy"), 1.0);

    let out = run(dir.path(), &["--set", "out_dir=o", "finetune", "tag"]);
    assert!(out.status.success());
    let stdout = text(&out);
    assert!(metric(&stdout, "tag_accuracy") >= 0.95, "{stdout}");
    assert!(metric(&stdout, "span_f1") >= 0.95, "{stdout}");

    // eval on the saved checkpoint reproduces the finetune numbers
    let out = run(dir.path(), &["--set", "init_checkpoint=o/finetune-tag.ckpt", "eval"]);
    assert!(out.status.success());
    let again = text(&out);
    assert_eq!(metric(&again, "span_f1"), metric(&stdout, "span_f1"));
    let log = std::fs::read_to_string(dir.path().join("o/finetune-tag.tsv")).unwrap();
    assert_eq!(log.lines().filter(|l| !l.starts_with('#')).count(), 601);
}

#[test]
fn ablate_writes_a_four_row_table() {
    let dir = TempDir::new().unwrap();
    let args = ["--set", "total_steps=0", "--set", "finetune_steps=20", "--set", "out_dir=a", "ablate"];
    let out = run(dir.path(), &args);
    assert!(out.status.success());
    let table = std::fs::read_to_string(dir.path().join("a/ablate.tsv")).unwrap();
    let rows: Vec<Vec<&str>> = table.lines().map(|l| l.split('\t').collect()).collect();
    assert_eq!(rows[0], ["variant", "params", "precision", "recall", "f1"]);
    let variants: Vec<&str> = rows[1..].iter().map(|r| r[0]).collect();
    assert_eq!(variants, ["full", "-glyph", "-pinyin", "-both"]);
    let params: Vec<usize> = rows[1..].iter().map(|r| r[1].parse().unwrap()).collect();
    assert_eq!(params, [48_022, 10_118, 47_238, 9_062]);
    for r in &rows[1..] {
        for v in &r[2..] {
            let x: f64 = v.parse().unwrap();
            assert!((0.0..=1.0).contains(&x));
        }
    }
    for v in ["full", "-glyph", "-pinyin", "-both"] {
        assert!(dir.path().join(format!("a/ablate{v}.ckpt")).exists());
    }
}

#[test]
fn inspect_resolves_heteronyms_from_context() {
    let dir = TempDir::new().unwrap();
    let a = text(&run(dir.path(), &["inspect", "乐", "--context", "音乐"]));
    let b = text(&run(dir.path(), &["inspect", "U+4E50", "--context", "快乐"]));
    assert!(a.contains("reading\tyue4\tyue4----"), "{a}");
    assert!(b.contains("reading\tle4\tle4-----"), "{b}");
    let line = |s: &str, k: &str| s.lines().find(|l| l.starts_with(k)).unwrap().to_string();
    assert_eq!(line(&a, "glyph_vec"), line(&b, "glyph_vec"));
    assert_ne!(line(&a, "pinyin_vec"), line(&b, "pinyin_vec"));
    assert_eq!(line(&a, "fusion_vec").split('\t').count(), 17);
}

#[test]
fn bundled_lexicon_passes_its_check() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), &["build-lexicon-check"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(text(&out).contains("missing\t0"));

    std::fs::write(dir.path().join("lex.tsv"), "U+4E50\tyue4\n#rule\t快乐\t1\tU+4E50\tle4\n").unwrap();
    let out = run(dir.path(), &["build-lexicon-check", "lex.tsv"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn help_lists_every_subcommand() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), &["--help"]);
    assert!(out.status.success());
    let help = text(&out);
    for cmd in ["synth-atlas", "build-lexicon-check", "pretrain", "finetune", "eval", "gradcheck", "ablate", "inspect"]
    {
        assert!(help.contains(cmd), "{cmd}");
    }
}
