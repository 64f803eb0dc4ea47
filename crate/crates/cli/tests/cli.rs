use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn smoothnet(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smoothnet"))
        .args(args)
        .current_dir(cwd)
        .env_remove("SMOOTHNET_CONFIG")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Two small synthetic pairs in `dir`, returning the manifest path.
fn synth(dir: &Path, pairs: &str) {
    let o = smoothnet(
        &["synth", "--out-dir", "data", "--pairs", pairs, "--points", "3000", "--overlap", "0.8", "--seed", "5"],
        dir,
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&smoothnet(&["frobnicate"], dir.path())), 2);
    assert_eq!(code(&smoothnet(&["keypoints", "--bogus"], dir.path())), 2);
    let o = smoothnet(&["evaluate", "--manifest", "m.txt", "--out", "r.json"], dir.path());
    assert_eq!(code(&o), 2, "evaluate needs --weights or --oracle");
    assert_eq!(code(&smoothnet(&["--help"], dir.path())), 0);
}

#[test]
fn bad_config_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.cfg"), "voxels_per_axis = 1\n").unwrap();
    let o = smoothnet(&["--config", "bad.cfg", "synth", "--out-dir", "x"], dir.path());
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("invariant"), "{}", stderr(&o));
    let o = smoothnet(&["--set", "no_such_key=3", "synth", "--out-dir", "x"], dir.path());
    assert_eq!(code(&o), 1);
}

#[test]
fn config_path_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("env.cfg"), "tau2 = 0\n").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_smoothnet"))
        .args(["synth", "--out-dir", "x"])
        .current_dir(dir.path())
        .env("SMOOTHNET_CONFIG", "env.cfg")
        .output()
        .unwrap();
    assert_eq!(code(&o), 1, "tau2 = 0 must be rejected: {}", stderr(&o));
}

#[test]
fn oracle_evaluation_has_full_recall() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "2");
    let o = smoothnet(
        &["evaluate", "--manifest", "data/manifest.txt", "--oracle", "--keypoints", "300", "--out", "report.json"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["recall"], 1.0);
    assert_eq!(report["pairs"].as_array().unwrap().len(), 2);
    let csv = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert!(csv.starts_with("scene,frag_a,frag_b,n_corr,n_inlier,ratio,pass\n"));
    assert_eq!(csv.lines().count(), 3);

    let o = smoothnet(&["sweep", "--report", "report.json", "--tau2", "0.05,0.5,1", "--out", "sweep.csv"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let sweep = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(sweep.lines().next(), Some("tau2,recall"));
    assert_eq!(sweep.lines().count(), 4);
}

#[test]
fn register_with_too_few_correspondences_fails() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "1");
    fs::write(dir.path().join("c.csv"), "p,q,distance\n0,0,0.1\n1,1,0.2\n").unwrap();
    let o = smoothnet(
        &[
            "register", "--cloud-a", "data/pair000_a.ply", "--cloud-b", "data/pair000_b.ply",
            "--correspondences", "c.csv", "--out", "t.txt",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("too few correspondences"), "{}", stderr(&o));
    assert!(!dir.path().join("t.txt").exists());
}

/// keypoints -> describe -> match -> register with untrained weights, twice;
/// every artifact must be byte-identical across runs.
#[test]
fn pipeline_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, "1");
    let cfg = "descriptor_dim = 16\narchitecture = compact\nbatch_size = 8\nmax_iterations = 3\nanchors_per_pair = 16\n";
    fs::write(d.join("run.cfg"), cfg).unwrap();
    let run = |tag: &str| {
        let step = |args: Vec<String>| {
            let mut full = vec!["--config".to_string(), "run.cfg".to_string()];
            full.extend(args);
            let refs: Vec<&str> = full.iter().map(String::as_str).collect();
            let o = smoothnet(&refs, d);
            assert_eq!(code(&o), 0, "{:?}: {}", refs, stderr(&o));
        };
        let s = |x: &str| x.to_string();
        step(vec![s("train"), s("--manifest"), s("data/manifest.txt"), s("--seed"), s("1"), s("--out-dir"), format!("train_{tag}")]);
        for f in ["a", "b"] {
            step(vec![s("keypoints"), s("--cloud"), format!("data/pair000_{f}.ply"), s("--count"), s("200"), s("--seed"), s("3"), s("--out"), format!("kp_{f}_{tag}.txt")]);
            step(vec![
                s("describe"), s("--cloud"), format!("data/pair000_{f}.ply"), s("--keypoints"), format!("kp_{f}_{tag}.txt"),
                s("--weights"), format!("train_{tag}/weights.bin"), s("--out"), format!("d_{f}_{tag}.sdvd"),
            ]);
        }
        step(vec![
            s("match"), s("--keypoints-a"), format!("kp_a_{tag}.txt"), s("--descriptors-a"), format!("d_a_{tag}.sdvd"),
            s("--keypoints-b"), format!("kp_b_{tag}.txt"), s("--descriptors-b"), format!("d_b_{tag}.sdvd"), s("--out"), format!("c_{tag}.csv"),
        ]);
        step(vec![
            s("register"), s("--cloud-a"), s("data/pair000_a.ply"), s("--cloud-b"), s("data/pair000_b.ply"),
            s("--correspondences"), format!("c_{tag}.csv"), s("--seed"), s("9"), s("--out"), format!("t_{tag}.txt"),
        ]);
    };
    run("x");
    run("y");
    let same = |a: &str, b: &str| {
        let (x, y) = (fs::read(d.join(a)).unwrap(), fs::read(d.join(b)).unwrap());
        assert!(x == y, "{a} and {b} differ");
    };
    same("train_x/weights.bin", "train_y/weights.bin");
    same("train_x/loss.csv", "train_y/loss.csv");
    for f in ["a", "b"] {
        same(&format!("kp_{f}_x.txt"), &format!("kp_{f}_y.txt"));
        same(&format!("d_{f}_x.sdvd"), &format!("d_{f}_y.sdvd"));
        same(&format!("d_{f}_x.sdvd.skipped"), &format!("d_{f}_y.sdvd.skipped"));
    }
    same("c_x.csv", "c_y.csv");
    same("t_x.txt", "t_y.txt");

    let desc = fs::read(d.join("d_a_x.sdvd")).unwrap();
    assert_eq!(&desc[..4], b"SDVD");
    let count = u32::from_le_bytes(desc[8..12].try_into().unwrap()) as usize;
    let kp = fs::read_to_string(d.join("kp_a_x.txt")).unwrap().lines().count();
    let skipped = fs::read_to_string(d.join("d_a_x.sdvd.skipped")).unwrap().lines().count();
    assert_eq!(count + skipped, kp);
}

#[test]
fn downsample_reduces_points() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "1");
    let o = smoothnet(&["downsample", "--cloud", "data/pair000_a.ply", "--cell", "0.1", "--out", "small.ply"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let small = smoothnet::io::read_ply(dir.path().join("small.ply")).unwrap();
    assert!(small.len() < 3000 && !small.is_empty());
    let o = smoothnet(&["downsample", "--cloud", "data/pair000_a.ply", "--out", "x.ply"], dir.path());
    assert_eq!(code(&o), 2, "default cell 0 is not usable");
}
