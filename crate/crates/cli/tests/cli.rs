use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn dcop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dcop"))
        .args(args)
        .output()
        .unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn generate_then_solve_agrees_with_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("g.dcop");
    let out = dcop(&[
        "gen",
        "random",
        "--n",
        "9",
        "--density",
        "0.4",
        "--seed",
        "3",
        "--out",
        path(&file),
    ]);
    assert!(out.status.success());
    let oracle = dcop(&["oracle", "--input", path(&file)]);
    let first = String::from_utf8(oracle.stdout)
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string();
    for algo in [
        &["--algo", "dpop"][..],
        &["--algo", "mb-dpop", "--k", "2"],
        &["--algo", "rmb-dpop", "--k", "2", "--no-ism"],
    ] {
        let mut args = vec!["solve", "--input", path(&file)];
        args.extend_from_slice(algo);
        let out = dcop(&args);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        assert!(String::from_utf8(out.stdout).unwrap().starts_with(&first));
    }
}

#[test]
fn scale_free_generation_is_stable() {
    let a = dcop(&[
        "gen",
        "scalefree",
        "--n",
        "12",
        "--m0",
        "4",
        "--m1",
        "2",
        "--seed",
        "5",
    ]);
    let b = dcop(&[
        "gen",
        "scalefree",
        "--n",
        "12",
        "--m0",
        "4",
        "--m1",
        "2",
        "--seed",
        "5",
    ]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert!(a
        .stdout
        .starts_with(b"DCOP 1\nname scalefree_n12_m4_2_s5\n"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.dcop");
    fs::write(&bad, "DCOP 2\n").unwrap();
    assert_eq!(
        dcop(&["solve", "--algo", "dpop", "--input", path(&bad)])
            .status
            .code(),
        Some(3)
    );
    assert_eq!(
        dcop(&["gen", "random", "--n", "20", "--density", "0.01"])
            .status
            .code(),
        Some(3)
    );
    assert_eq!(
        dcop(&["solve", "--algo", "dpop", "--k", "5", "--fixture"])
            .status
            .code(),
        Some(4)
    );
    assert_eq!(
        dcop(&["solve", "--algo", "mb-dpop", "--fixture"])
            .status
            .code(),
        Some(3)
    );
    let slow = dcop(&[
        "solve",
        "--algo",
        "mb-dpop",
        "--k",
        "1",
        "--fixture",
        "--timeout",
        "0",
    ]);
    assert_eq!(slow.status.code(), Some(2));
}

#[test]
fn tree_and_label_dumps() {
    let tree = String::from_utf8(dcop(&["tree", "--fixture"]).stdout).unwrap();
    assert_eq!(tree.lines().count(), 14);
    assert!(tree.contains("node 7 parent 6 sep 0,1,3,4,5,6 depth 7"));
    let label =
        String::from_utf8(dcop(&["label", "--fixture", "--k", "2", "--method", "highest"]).stdout)
            .unwrap();
    assert!(label.starts_with("cc 2 0,1,2,3,4,8\n"));
}

#[test]
fn bench_writes_rows_and_medians() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("sweep.toml");
    let csv = dir.path().join("out.csv");
    fs::write(
        &config,
        "instances = 2\n[generator]\nkind = \"scalefree\"\nn = [9]\nm0 = 4\nm1 = [1, 2]\n\
         [[algorithms]]\nalgo = \"dpop\"\n[[algorithms]]\nalgo = \"rmb-dpop\"\nk = 2\n",
    )
    .unwrap();
    let out = dcop(&[
        "bench",
        "--config",
        path(&config),
        "--out",
        path(&csv),
        "--no-timing",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1 + 8 + 4);
    assert!(lines[0].starts_with("point,algo,k,toggles,seed,status,cost,msg_total"));
    assert!(
        lines
            .iter()
            .filter(|l| l.contains(",median,ok=2/2,"))
            .count()
            == 4
    );
}
