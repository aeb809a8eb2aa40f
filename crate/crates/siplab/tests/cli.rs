use std::path::Path;
use std::process::{Command, Output};

fn siplab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_siplab"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn tiny_pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let common = ["--preset", "tiny", "--out", "run", "--seed", "2"];
    let with = |extra: &[&str]| -> Vec<String> {
        let mut v: Vec<String> = extra.iter().map(|s| s.to_string()).collect();
        v.extend(common.iter().map(|s| s.to_string()));
        v
    };
    let run = |extra: &[&str]| {
        let args = with(extra);
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        let o = siplab(d, &refs);
        assert_eq!(code(&o), 0, "{extra:?}: {}", String::from_utf8_lossy(&o.stderr));
        String::from_utf8(o.stdout).unwrap()
    };

    run(&["gen-data"]);
    assert!(d.join("run/dataset.sipds").exists());
    let out = run(&["train", "--data", "run/dataset.sipds"]);
    assert!(out.contains("trained 2 epochs"), "{out}");
    for f in ["metrics.csv", "best.sipckpt", "last.sipckpt"] {
        assert!(d.join("run").join(f).exists(), "{f}");
    }
    let metrics = std::fs::read_to_string(d.join("run/metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 3);

    let out = run(&[
        "eval-sweep",
        "--data",
        "run/dataset.sipds",
        "--casip",
        "run/best.sipckpt",
        "--sipce",
        "run/best.sipckpt",
    ]);
    assert!(out.contains("CaSIP") && out.contains("TP"), "{out}");
    for f in ["sweep.csv", "nmse.svg", "mse_ser.svg"] {
        assert!(d.join("run").join(f).exists(), "{f}");
    }
    let first = std::fs::read(d.join("run/sweep.csv")).unwrap();

    let out = run(&["pdp-report", "--ckpt", "run/best.sipckpt"]);
    assert!(out.contains("whole"), "{out}");
    assert!(d.join("run/pdp_heatmap.svg").exists());

    let out = run(&["inspect-ckpt", "run/last.sipckpt"]);
    assert!(out.contains("tiny"), "{out}");

    std::fs::rename(d.join("run/sweep.csv"), d.join("sweep.csv")).unwrap();
    std::fs::remove_file(d.join("run/nmse.svg")).unwrap();
    run(&["plot", "sweep.csv"]);
    assert!(d.join("run/nmse.svg").exists());

    // same seed, same bytes
    run(&[
        "eval-sweep",
        "--data",
        "run/dataset.sipds",
        "--casip",
        "run/best.sipckpt",
        "--sipce",
        "run/best.sipckpt",
    ]);
    assert_eq!(std::fs::read(d.join("run/sweep.csv")).unwrap(), first);
}

#[test]
fn configuration_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("bad.cfg"), "preset = tiny\nlearning_rate = 1\n").unwrap();
    let o = siplab(d, &["--config", "bad.cfg", "gen-data"]);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 2") && err.contains("learning_rate"), "{err}");

    assert_eq!(code(&siplab(d, &["--preset", "huge", "gen-data"])), 2);
    std::fs::write(d.join("zero.cfg"), "preset = tiny\nepochs = 0\n").unwrap();
    assert_eq!(code(&siplab(d, &["--config", "zero.cfg", "train"])), 2);
    // clap usage errors
    assert_eq!(code(&siplab(d, &["no-such-command"])), 2);
}

#[test]
fn data_errors_exit_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&siplab(d, &["inspect-ckpt", "missing.sipckpt"])), 3);
    std::fs::write(d.join("garbage.sipckpt"), b"garbage").unwrap();
    assert_eq!(code(&siplab(d, &["inspect-ckpt", "garbage.sipckpt"])), 3);
    std::fs::write(d.join("t.csv"), "scheme,snr_db\nTP,1\n").unwrap();
    assert_eq!(code(&siplab(d, &["plot", "t.csv"])), 3);
}

#[test]
fn grad_check_exit_code_follows_the_tolerance() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = siplab(d, &["grad-check", "--preset", "tiny", "--coords", "4"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let out = String::from_utf8(o.stdout).unwrap();
    assert_eq!(out.lines().filter(|l| l.ends_with("ok")).count(), 3, "{out}");
    let o = siplab(d, &["grad-check", "--preset", "tiny", "--coords", "4", "--tol", "0"]);
    assert_eq!(code(&o), 1);
}
