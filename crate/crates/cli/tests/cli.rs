use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &[&str] = &[
    "--set",
    "data.n_train=30",
    "--set",
    "data.n_heldout=2",
    "--set",
    "data.n_rl=8",
    "--set",
    "interpreter.context=8",
    "--set",
    "interpreter.embed=3",
    "--set",
    "interpreter.hidden=8",
    "--set",
    "reasoner.context=8",
    "--set",
    "reasoner.embed=3",
    "--set",
    "reasoner.hidden=8",
    "--set",
    "sft_interpreter.epochs=1",
    "--set",
    "sft_reasoner.epochs=1",
    "--set",
    "stage2.epochs=1",
    "--set",
    "stage3.epochs=1",
    "--set",
    "stage2.max_output_len=12",
    "--set",
    "stage3.max_output_len=12",
];

fn tandem(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tandem"))
        .arg("--out")
        .arg(out)
        .args(TINY)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn stages_chain_and_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    for args in [
        &["gen-data"][..],
        &["sft"],
        &["rl-stage2"],
        &["rl-stage3"],
        &["rl-stage3", "--on-sft"],
        &["eval", "--setting", "sft"],
        &["eval", "--setting", "sft+s2+s3"],
    ] {
        let o = tandem(&out, args);
        assert_eq!(code(&o), 0, "{args:?}: {}", stderr(&o));
    }
    let eval = tandem(&out, &["eval", "--setting", "sft+s3"]);
    let text = String::from_utf8(eval.stdout).unwrap();
    assert!(
        text.starts_with("variant,correct,total,accuracy\nTextDominant,"),
        "{text}"
    );
    assert!(text.contains("\noverall,"));

    let ckpt = out.join("ckpt/interpreter-s2.ckpt");
    let before = fs::read(&ckpt).unwrap();
    assert_eq!(code(&tandem(&out, &["rl-stage2"])), 0);
    assert_eq!(fs::read(&ckpt).unwrap(), before);
}

#[test]
fn full_run_twice_gives_identical_trees() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = tandem(out, &["--seed", "3", "full-run"]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let mut n = 0;
    for sub in ["data", "ckpt", "logs", "reports"] {
        for e in fs::read_dir(a.join(sub)).unwrap() {
            let name = e.unwrap().file_name();
            assert_eq!(
                fs::read(a.join(sub).join(&name)).unwrap(),
                fs::read(b.join(sub).join(&name)).unwrap(),
                "{name:?}"
            );
            n += 1;
        }
    }
    assert!(n >= 15, "{n} files");
    let summary = fs::read_to_string(a.join("reports/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 5);
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["--preset", "huge", "gen-data"][..],
        &["--set", "stage2.clip_epsilon=1.5", "gen-data"],
        &["--set", "stage2.bogus=1", "gen-data"],
        &["eval", "--setting", "sft+s9"],
    ] {
        let o = tandem(dir.path(), args);
        assert_eq!(code(&o), 2, "{args:?}: {}", stderr(&o));
    }
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[stage3]\ngroup_size = 1\n").unwrap();
    let o = tandem(dir.path(), &["--config", cfg.to_str().unwrap(), "gen-data"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn missing_prerequisites_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("empty");
    for args in [&["sft"][..], &["rl-stage2"], &["rl-stage3"], &["eval"]] {
        let o = tandem(&out, args);
        assert_eq!(code(&o), 3, "{args:?}: {}", stderr(&o));
        assert!(
            stderr(&o).contains("missing prerequisite"),
            "{}",
            stderr(&o)
        );
    }
    assert_eq!(code(&tandem(&out, &["gen-data"])), 0);
    let o = tandem(&out, &["rl-stage2"]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("sft"), "{}", stderr(&o));
}

#[test]
fn gradcheck_passes_and_sabotage_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let o = tandem(dir.path(), &["gradcheck", "--instances", "3"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = tandem(dir.path(), &["gradcheck", "--instances", "3", "--sabotage"]);
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
}

#[test]
fn damaged_inputs_exit_5() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    assert_eq!(code(&tandem(&out, &["gen-data"])), 0);
    let train = out.join("data/train.tsv");
    let mut text = fs::read_to_string(&train).unwrap();
    text.push_str("TextLite\tnot a record\n");
    fs::write(&train, text).unwrap();
    let o = tandem(&out, &["sft"]);
    assert_eq!(code(&o), 5, "{}", stderr(&o));
    assert!(
        stderr(&o).contains("31"),
        "line number reported: {}",
        stderr(&o)
    );

    assert_eq!(code(&tandem(&out, &["gen-data"])), 0);
    assert_eq!(code(&tandem(&out, &["sft"])), 0);
    let ckpt = out.join("ckpt/reasoner-sft.ckpt");
    let bytes = fs::read(&ckpt).unwrap();
    fs::write(&ckpt, &bytes[..bytes.len() / 2]).unwrap();
    let o = tandem(&out, &["rl-stage2"]);
    assert_eq!(code(&o), 5, "{}", stderr(&o));
}
