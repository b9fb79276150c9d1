use std::path::Path;
use std::process::{Command, Output};

fn neuralmep(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_neuralmep"))
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

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    assert_eq!(code(&neuralmep(&["solve", "--no-such-flag", "1"])), 1);
    assert_eq!(code(&neuralmep(&["frobnicate"])), 1);
    assert_eq!(
        code(&neuralmep(&[
            "solve",
            "--potential",
            "nope",
            "--out",
            s(&out)
        ])),
        1
    );
    assert_eq!(
        code(&neuralmep(&[
            "solve",
            "--method",
            "magic",
            "--out",
            s(&out)
        ])),
        1
    );
    assert_eq!(
        code(&neuralmep(&["solve", "--lr", "fast", "--out", s(&out)])),
        1
    );
    assert_eq!(
        code(&neuralmep(&[
            "solve",
            "--param",
            "leps.zz=1",
            "--out",
            s(&out)
        ])),
        1
    );

    let cfg = dir.path().join("c.txt");
    std::fs::write(&cfg, "colour=blue\n").unwrap();
    let o = neuralmep(&["solve", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("colour"), "{}", stderr(&o));
}

#[test]
fn help_exits_cleanly() {
    assert_eq!(code(&neuralmep(&["--help"])), 0);
    assert_eq!(code(&neuralmep(&["generalize", "eval", "--help"])), 0);
}

#[test]
fn solve_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("leps");
    let o = neuralmep(&[
        "solve",
        "--potential",
        "leps",
        "--n-iters",
        "60",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in [
        "manifest.txt",
        "runlog.csv",
        "snapshots.csv",
        "path.csv",
        "grid.csv",
        "ts.csv",
        "model.txt",
        "profile.svg",
        "path.svg",
    ] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let path = read(&out, "path.csv");
    assert_eq!(path.lines().count(), 202);
    assert!(read(&out, "ts.csv").starts_with("method,t,x,y,energy,barrier,refined_x"));
    let manifest = read(&out, "manifest.txt");
    assert!(manifest.starts_with("command=solve\n"));
    assert!(manifest.contains("\nseed=0\n"));
    assert!(manifest.contains("\nsampling=uniform\n"));
}

#[test]
fn plots_do_not_change_numeric_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let with = dir.path().join("with");
    let without = dir.path().join("without");
    let args = [
        "solve",
        "--potential",
        "mb",
        "--n-iters",
        "40",
        "--early-stop",
        "false",
    ];
    let o = neuralmep(&[&args[..], &["--out", s(&with)]].concat());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = neuralmep(&[&args[..], &["--plots", "false", "--out", s(&without)]].concat());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(!without.join("path.svg").exists());
    for f in [
        "runlog.csv",
        "snapshots.csv",
        "path.csv",
        "grid.csv",
        "ts.csv",
        "model.txt",
    ] {
        assert_eq!(read(&with, f), read(&without, f), "{f}");
    }

    let o = neuralmep(&["plot", "--input", s(&without)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(read(&with, "path.svg"), read(&without, "path.svg"));
    assert_eq!(read(&with, "profile.svg"), read(&without, "profile.svg"));
}

#[test]
fn plot_without_csvs_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&neuralmep(&["plot", "--input", s(dir.path())])), 1);
}

#[test]
fn neb_out_of_budget_exits_three_with_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("neb");
    let o = neuralmep(&[
        "neb",
        "--potential",
        "mb",
        "--n-iters",
        "5",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    let ts = read(&out, "ts.csv");
    assert!(ts.lines().nth(1).unwrap().ends_with(",false"), "{ts}");
    assert!(out.join("images.csv").exists());
    assert!(out.join("path.csv").exists());
}

#[test]
fn neb_subcommand_matches_solve_method_neb() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let o = neuralmep(&["neb", "--n-iters", "1000", "--out", s(&a)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = neuralmep(&[
        "solve",
        "--method",
        "neb",
        "--n-iters",
        "1000",
        "--out",
        s(&b),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(read(&a, "ts.csv"), read(&b, "ts.csv"));
    assert_eq!(read(&a, "images.csv"), read(&b, "images.csv"));
}

#[test]
fn manifest_rerun_reproduces_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    let o = neuralmep(&[
        "solve",
        "--potential",
        "sine",
        "--sine-n",
        "2",
        "--method",
        "inr-gs",
        "--n-iters",
        "30",
        "--seed",
        "3",
        "--out",
        s(&first),
    ]);
    assert!(matches!(code(&o), 0 | 2), "{}", stderr(&o));
    let manifest = first.join("manifest.txt");
    let o = neuralmep(&["solve", "--config", s(&manifest), "--out", s(&second)]);
    assert!(matches!(code(&o), 0 | 2), "{}", stderr(&o));
    for f in [
        "manifest.txt",
        "runlog.csv",
        "snapshots.csv",
        "path.csv",
        "grid.csv",
        "ts.csv",
        "model.txt",
    ] {
        assert_eq!(read(&first, f), read(&second, f), "{f}");
    }
    assert_eq!(
        code(&neuralmep(&[
            "neb",
            "--config",
            s(&manifest),
            "--out",
            s(&second)
        ])),
        1,
        "a solve manifest is not a neb config"
    );
}

#[test]
fn sweep_header_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    let o = neuralmep(&[
        "sweep",
        "--loss-kinds",
        "mean,stop_gradient",
        "--lambda-s",
        "0",
        "--lambda-cl",
        "0,1",
        "--n-iters",
        "10",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = read(&out, "sweep.csv");
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("loss_kind,lambda_s,lambda_cl,max_sep_pct,ts_error")
    );
    assert_eq!(lines.count(), 4);
    assert!(out.join("reference.csv").exists());
}

#[test]
fn generalize_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("wells");
    let again = dir.path().join("again");

    let o = neuralmep(&["generalize", "train", "--data", s(&data)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("systems.csv"), "{}", stderr(&o));

    for d in [&data, &again] {
        let o = neuralmep(&[
            "generalize",
            "gen-data",
            "--n-train",
            "32",
            "--n-test",
            "100",
            "--seed",
            "7",
            "--out",
            s(d),
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    assert_eq!(read(&data, "systems.csv"), read(&again, "systems.csv"));
    assert_eq!(read(&data, "rejected.csv"), read(&again, "rejected.csv"));
    for k in [0, 31] {
        let f = format!("paths/train_{k:03}.csv");
        assert_eq!(read(&data, &f), read(&again, &f));
    }
    assert_eq!(read(&data, "systems.csv").lines().count(), 133);

    let o = neuralmep(&["generalize", "eval", "--data", s(&data)]);
    assert_eq!(code(&o), 1, "inr needs a trained model");
    assert!(stderr(&o).contains("model.txt"), "{}", stderr(&o));

    let o = neuralmep(&[
        "generalize",
        "eval",
        "--data",
        s(&data),
        "--predictor",
        "reference",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(
        read(&data.join("eval"), "eval.csv"),
        "predictor,mean_ts_error\nreference,0\n"
    );

    let o = neuralmep(&[
        "generalize",
        "train",
        "--data",
        s(&data),
        "--epochs",
        "2",
        "--width",
        "32",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let errors = read(&data.join("train"), "errors_inr.csv");
    assert!(errors.starts_with("epoch,mean_ts_error\n"));
    assert_eq!(errors.lines().count(), 4);

    let o = neuralmep(&["generalize", "eval", "--data", s(&data)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let eval = read(&data.join("eval"), "eval.csv");
    let names: Vec<&str> = eval
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(names, ["inr", "nn", "linear"]);
    for p in ["inr", "nn", "linear"] {
        assert!(data.join("eval").join(format!("errors_{p}.csv")).exists());
    }
    let o = neuralmep(&["plot", "--input", s(&data.join("eval"))]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(data.join("eval").join("errors.svg").exists());
}
