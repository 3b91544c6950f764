use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL_MODEL: &[&str] = &["--model.epochs", "2", "--model.embed_dim", "8", "--model.hidden_dim", "8"];

fn selfmix(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_selfmix")).args(args).output().expect("spawn selfmix")
}

fn ok(args: &[&str]) -> String {
    let out = selfmix(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    selfmix(args).status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Stage {
    dir: tempfile::TempDir,
}

impl Stage {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    /// Scenes, teacher corpus and a trained model.
    fn build() -> Stage {
        let stage = Stage { dir: tempfile::tempdir().unwrap() };
        let scenes = stage.path("scenes.jsonl");
        let human = stage.path("human.jsonl");
        let model = stage.path("model.ckpt");
        ok(&["gen-scenes", "--n", "60", "--seed", "3", "--out", s(&scenes)]);
        ok(&["collect-human", "--scenes", s(&scenes), "--seed", "3", "--out", s(&human)]);
        let mut train = vec!["train", "--data", s(&human), "--scenes", s(&scenes), "--out", s(&model)];
        train.extend_from_slice(SMALL_MODEL);
        ok(&train);
        stage
    }
}

fn lines(path: &Path) -> usize {
    std::fs::read_to_string(path).unwrap().lines().count()
}

#[test]
fn pipeline_round_trip() {
    let st = Stage::build();
    let (scenes, human, model) = (st.path("scenes.jsonl"), st.path("human.jsonl"), st.path("model.ckpt"));
    assert_eq!(lines(&scenes), 60);
    let n_human = lines(&human);
    assert!(n_human > 0 && n_human <= 60);

    let fixed = st.path("fixed.jsonl");
    let variable = st.path("variable.jsonl");
    ok(&["selfplay", "--model", s(&model), "--scenes", s(&scenes), "--turns", "3", "--out", s(&fixed)]);
    ok(&["selfplay", "--model", s(&model), "--scenes", s(&scenes), "--match-human", s(&human), "--out", s(&variable)]);
    assert_eq!(lines(&fixed), 60);
    assert_eq!(lines(&variable), n_human);

    let mixed = st.path("mixed.jsonl");
    ok(&[
        "mix", "--human", s(&human), "--generated", s(&fixed), "--pct-human", "50", "--length", "fixed", "--out", s(&mixed),
    ]);
    assert_eq!(lines(&mixed), n_human);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(st.path("mixed.jsonl.manifest.json")).unwrap()).unwrap();
    assert!(manifest.is_object());

    let stats = ok(&["stats", s(&mixed), "--header"]);
    let mut stat_lines = stats.lines();
    assert_eq!(stat_lines.next(), Some("pct_human,pct_generated,length_mode,voc_size,mo,grq"));
    assert!(stat_lines.next().unwrap().starts_with("50,50,fixed,"));

    let report = st.path("report.csv");
    let row = ok(&[
        "evaluate", "--model", s(&model), "--scenes", s(&scenes), "--training", s(&human), "--turns", "5", "--header",
    ]);
    assert!(row.starts_with("pct_human,pct_generated,length_mode,acc,grq,mo,nq,gr\n100,0,-,"));
    std::fs::write(&report, &row).unwrap();
    let md = ok(&["report", s(&report)]);
    assert!(md.contains("ACC"));
    assert!(md.contains("100/0"));
}

#[test]
fn commands_are_deterministic() {
    let a = Stage::build();
    let b = Stage::build();
    for name in ["scenes.jsonl", "human.jsonl", "model.ckpt"] {
        assert_eq!(std::fs::read(a.path(name)).unwrap(), std::fs::read(b.path(name)).unwrap(), "{name}");
    }
}

#[test]
fn validation_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.jsonl");
    assert_eq!(code(&["gen-scenes", "--n", "5", "--out", s(&out), "--scene.bogus", "1"]), 1);
    assert_eq!(code(&["gen-scenes", "--n", "5", "--out", s(&out), "--scene.max_objects", "1"]), 1);
    assert_eq!(code(&["stats", s(&dir.path().join("missing.jsonl"))]), 1);
    assert_eq!(code(&["no-such-command"]), 1);
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "{not json\n").unwrap();
    assert_eq!(code(&["stats", s(&bad)]), 1);
}

#[test]
fn stage_failures_exit_with_two() {
    let st = Stage::build();
    let (human, model) = (st.path("human.jsonl"), st.path("model.ckpt"));
    // Generated corpus covering only some of the human games.
    let few = st.path("few.jsonl");
    let partial = st.path("partial.jsonl");
    ok(&["gen-scenes", "--n", "1", "--start", "1000", "--out", s(&few)]);
    ok(&["selfplay", "--model", s(&model), "--scenes", s(&few), "--turns", "2", "--out", s(&partial)]);
    let out = st.path("mixed.jsonl");
    assert_eq!(
        code(&[
            "mix", "--human", s(&human), "--generated", s(&partial), "--pct-human", "50", "--length", "fixed", "--out",
            s(&out),
        ]),
        2
    );
    // Training dialogues whose scenes are absent.
    let mut train = vec!["train", "--data", s(&human), "--scenes", s(&few), "--out", s(&out)];
    train.extend_from_slice(SMALL_MODEL);
    assert_eq!(code(&train), 2);
}
