use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn memseg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_memseg"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn synth_segment_eval_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("scene");
    let out = tmp.path().join("out");
    let o = memseg(&["synth", "--out", p(&scene), "--frames", "8"]);
    assert!(o.status.success(), "{}", stderr(&o));

    let o = memseg(&[
        "segment",
        "--scene",
        p(&scene),
        "--out",
        p(&out),
        "--k",
        "2",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("frames=8 "));
    assert_eq!(fs::read_dir(out.join("masks")).unwrap().count(), 8);
    assert!(out.join("timing.csv").is_file());

    let report = tmp.path().join("report.csv");
    let o = memseg(&[
        "eval",
        "--pred",
        p(&out.join("masks")),
        "--gt",
        p(&scene.join("gt")),
        "--out",
        p(&report),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("map="));
    assert!(fs::read_to_string(&report)
        .unwrap()
        .starts_with("level,id,map,recall,miou,macc\n"));

    let o = memseg(&[
        "eval",
        "--pred",
        p(&scene.join("gt")),
        "--gt",
        p(&scene.join("gt")),
        "--out",
        p(&report),
        "--binary-ap",
    ]);
    assert!(o.status.success());
    assert_eq!(
        stdout(&o).trim(),
        "map=1.0000 recall=1.0000 miou=1.0000 macc=1.0000"
    );
}

#[test]
fn config_file_and_flag_override() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("scene");
    assert!(memseg(&["synth", "--out", p(&scene), "--frames", "3"])
        .status
        .success());
    let cfg = tmp.path().join("run.cfg");
    fs::write(
        &cfg,
        format!(
            "# test run\nscene = {}\noutput = {}\nk = 0\n",
            p(&scene),
            p(&tmp.path().join("o"))
        ),
    )
    .unwrap();
    let o = memseg(&["segment", "--config", p(&cfg)]);
    assert!(!o.status.success());
    assert!(stderr(&o).starts_with("error kind=invalid_config "));
    let o = memseg(&["segment", "--config", p(&cfg), "--k", "1"]);
    // the file itself is rejected before flags apply
    assert!(!o.status.success());
    fs::write(
        &cfg,
        format!(
            "scene = {}\noutput = {}\nk = 2\n",
            p(&scene),
            p(&tmp.path().join("o"))
        ),
    )
    .unwrap();
    let o = memseg(&["segment", "--config", p(&cfg), "--k", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("seeds=[0]"));
}

#[test]
fn errors_are_one_line() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope");
    let o = memseg(&[
        "segment",
        "--scene",
        p(&missing),
        "--out",
        p(&tmp.path().join("o")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert_eq!(err.lines().count(), 1);
    assert!(err.starts_with("error kind=io msg="));

    let o = memseg(&["segment", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr(&o).lines().count(), 1);
    assert!(stderr(&o).starts_with("error kind=usage "));

    let o = memseg(&["segment", "--scene", p(tmp.path())]);
    assert!(stderr(&o).starts_with("error kind=invalid_config "));
}

#[test]
fn keyframes_lists_first_of_duplicates() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("scene");
    assert!(memseg(&["synth", "--out", p(&scene), "--frames", "20"])
        .status
        .success());
    let o = memseg(&["keyframes", "--scene", p(&scene)]);
    assert!(o.status.success());
    let text = stdout(&o);
    let first = text.lines().next().unwrap();
    assert!(first.starts_with("0000 "));
    assert_eq!(first.len(), "0000 ".len() + 16);
    let all = memseg(&[
        "keyframes",
        "--scene",
        p(&scene),
        "--hamming-threshold",
        "0",
    ]);
    assert!(stdout(&all).lines().count() >= text.lines().count());
}

#[test]
fn weights_init_train_and_use() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("scene");
    assert!(
        memseg(&["synth", "--out", p(&scene), "--frames", "4", "--seed", "3"])
            .status
            .success()
    );
    let init = tmp.path().join("init.bin");
    let o = memseg(&[
        "weights-init",
        "--out",
        p(&init),
        "--embed-dim",
        "16",
        "--heads",
        "2",
        "--layers",
        "1",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(fs::read(&init).unwrap().starts_with(b"MEMSEG1\n"));

    let trained = tmp.path().join("trained.bin");
    let o = memseg(&[
        "train",
        "--scene",
        p(&scene),
        "--weights",
        p(&trained),
        "--iters",
        "10",
        "--init",
        p(&init),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o)
        .lines()
        .last()
        .unwrap()
        .starts_with("iter=10 loss="));
    assert_eq!(
        fs::metadata(&trained).unwrap().len(),
        fs::metadata(&init).unwrap().len()
    );

    let out = tmp.path().join("out");
    let o = memseg(&[
        "segment",
        "--scene",
        p(&scene),
        "--out",
        p(&out),
        "--weights",
        p(&trained),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = memseg(&[
        "segment",
        "--scene",
        p(&scene),
        "--out",
        p(&out),
        "--weights",
        p(&trained),
        "--patch-size",
        "4",
    ]);
    assert!(stderr(&o).starts_with("error kind=config_mismatch "));

    fs::write(&init, b"NOTMEMSEG").unwrap();
    let o = memseg(&[
        "segment",
        "--scene",
        p(&scene),
        "--out",
        p(&out),
        "--weights",
        p(&init),
    ]);
    assert!(stderr(&o).starts_with("error kind="));
    assert!(!o.status.success());
}
