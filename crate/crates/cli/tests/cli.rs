use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn pacbayes(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pacbayes"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const SMALL: &[&str] = &[
    "--n",
    "60",
    "--repeats",
    "2",
    "--epochs",
    "15",
    "--width",
    "8",
];

fn with(base: &[&str], extra: &[&str]) -> Vec<String> {
    base.iter().chain(extra).map(|s| s.to_string()).collect()
}

fn run(args: &[String]) -> Output {
    pacbayes(&args.iter().map(String::as_str).collect::<Vec<_>>())
}

#[test]
fn exit_codes() {
    assert_eq!(pacbayes(&["nonsense"]).status.code(), Some(2));
    assert_eq!(pacbayes(&["bound", "--depth", "1"]).status.code(), Some(2));
    assert_eq!(
        pacbayes(&["bound", "--set", "no_such_key=1"]).status.code(),
        Some(2)
    );
    assert_eq!(
        pacbayes(&["bound", "--synthetic", "3,4"]).status.code(),
        Some(2)
    );
    assert_eq!(
        pacbayes(&["conc-check", "--trials", "0"]).status.code(),
        Some(2)
    );

    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("img");
    let lab = dir.path().join("lab");
    fs::write(&img, [0u8; 16]).unwrap();
    fs::write(&lab, [0u8; 8]).unwrap();
    let o = pacbayes(&[
        "bound",
        "--mnist-images",
        img.to_str().unwrap(),
        "--mnist-labels",
        lab.to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let o = pacbayes(&[
        "bound",
        "--mnist-images",
        "/does/not/exist",
        "--mnist-labels",
        "/nor/this",
    ]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn train_then_bound_from_checkpoint_matches_direct_bound() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("net.ckpt");
    let mut train = vec!["train".to_string()];
    train.extend(with(SMALL, &["--checkpoint", ckpt.to_str().unwrap()]));
    let o = run(&train);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(ckpt.exists());

    let mut direct = vec!["bound".to_string()];
    direct.extend(with(SMALL, &[]));
    let mut from_ckpt = direct.clone();
    from_ckpt.extend(["--checkpoint".to_string(), ckpt.display().to_string()]);
    let a = run(&direct);
    let b = run(&from_ckpt);
    assert!(a.status.success() && b.status.success());
    assert_eq!(stdout(&a), stdout(&b));
    assert!(stdout(&a).lines().any(|l| l.starts_with("total ")));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(
        &cfg,
        "# small run\nn = 45\ntrain.epochs = 10\nwidth = 6\nbound.gamma = 2\n",
    )
    .unwrap();
    let o = pacbayes(&["bound", "--config", cfg.to_str().unwrap(), "--gamma", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    let field = |k: &str| {
        out.lines()
            .find_map(|l| l.strip_prefix(k).map(|v| v.trim().to_string()))
            .unwrap()
    };
    assert_eq!(field("n "), "45");
    assert_eq!(field("gamma "), "3");
}

#[test]
fn sweep_plot_and_norms_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ss");
    let mut args = vec!["sweep-sample-size".to_string()];
    args.extend(with(
        &[
            "--n",
            "40,80",
            "--repeats",
            "2",
            "--epochs",
            "10",
            "--width",
            "6",
        ],
        &["--out", out.to_str().unwrap()],
    ));
    let o = run(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in [
        "sample_size.csv",
        "sample_size_summary.csv",
        "norms.csv",
        "config.txt",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }

    let results = out.join("sample_size.csv");
    let o = pacbayes(&["compare-norms", "--results", results.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(
        stdout(&o)
            .lines()
            .filter(|l| l.starts_with("40,") || l.starts_with("80,"))
            .count(),
        4
    );
    assert!(stdout(&o).contains("growth n=40 -> 80"));

    let svg = dir.path().join("ss.svg");
    let o = pacbayes(&[
        "plot",
        "--input",
        results.to_str().unwrap(),
        "--kind",
        "sample-size",
        "--output",
        svg.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert!(fs::read_to_string(&svg).unwrap().contains("<svg"));
    let bad = pacbayes(&[
        "plot",
        "--input",
        results.to_str().unwrap(),
        "--kind",
        "pie",
        "--output",
        "x.svg",
    ]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(!Path::new("x.svg").exists());
}

#[test]
fn sigma_sweep_reports_argmin() {
    let mut args = vec!["sweep-sigma".to_string()];
    args.extend(with(SMALL, &["--sigma2-grid", "0.1,1,10"]));
    let o = run(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("argmin sigma2"));
    assert_eq!(
        stdout(&o).lines().filter(|l| l.ends_with(",true")).count(),
        1
    );
}

#[test]
fn conc_check_writes_one_csv_per_check() {
    let dir = tempfile::tempdir().unwrap();
    let o = pacbayes(&[
        "conc-check",
        "--trials",
        "4096",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 6);
    assert!(stdout(&o).contains("checks hold at every grid point"));
}
