use std::ffi::OsStr;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn corpus(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../privguard/corpus").join(rel)
}

fn privguard<I: IntoIterator<Item = S>, S: AsRef<OsStr>>(args: I) -> Output {
    Command::new(env!("CARGO_BIN_EXE_privguard")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&privguard::<_, &str>([])), 2);
    assert_eq!(code(&privguard(&["verify", "--unroll", "many"])), 2);
    let o = privguard(&["verify", "/nonexistent/run.toml"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/run.toml"));
    let o = privguard(&["verify", s(&corpus("runs/secure.toml")), "--jump-cap", "0"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn gen_annot_without_a_config_prints_the_baseline() {
    let o = privguard(&["gen-annot", "--typedecls", s(&corpus("toy.typedecls"))]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("Task"));
}

#[test]
fn build_image_reproduces_the_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.img");
    let o = privguard(&["build-image", "--tasks", "2", "--corrupt", "privileged", "--out", s(&out)]);
    assert_eq!(code(&o), 0);
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(corpus("images/tasks2-privileged.img")).unwrap());
}

#[test]
fn analyze_then_check() {
    let dir = tempfile::tempdir().unwrap();
    let kernel: Vec<PathBuf> = [
        "--kernel",
        "kernels/secure.s",
        "--config",
        "toy.toml",
        "--typedecls",
        "toy.typedecls",
        "--annot",
        "toy.annot",
    ]
    .iter()
    .map(|a| if a.starts_with("--") { PathBuf::from(a) } else { corpus(a) })
    .collect();
    let mut args: Vec<PathBuf> = vec!["analyze".into(), "--out-dir".into(), dir.path().into()];
    args.extend(kernel.iter().cloned());
    let o = privguard(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let inv = dir.path().join("invariant.json");
    assert!(inv.exists() && dir.path().join("alarms.json").exists());

    let check = |invariant: &Path, image: &str| {
        let mut args: Vec<PathBuf> = vec!["check".into(), "--invariant".into(), invariant.into()];
        args.extend(kernel.iter().cloned());
        args.extend(["--image".into(), corpus(image)]);
        code(&privguard(&args))
    };
    assert_eq!(check(&inv, "images/tasks2.img"), 0);
    assert_eq!(check(&inv, "images/tasks2-privileged.img"), 1);

    let text = std::fs::read_to_string(&inv).unwrap().replacen("\"schema\": 1", "\"schema\": 99", 1);
    assert!(text.contains("\"schema\": 99"));
    let future = dir.path().join("future.json");
    std::fs::write(&future, text).unwrap();
    assert_eq!(check(&future, "images/tasks2.img"), 2);
}

#[test]
fn simulate_two_tasks() {
    let o = privguard(&[
        "simulate",
        "--kernel",
        s(&corpus("kernels/secure.s")),
        "--config",
        s(&corpus("toy.toml")),
        "--image",
        s(&corpus("images/tasks2.img")),
        "--steps",
        "2000",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
}
