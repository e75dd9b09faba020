use std::path::Path;
use std::process::{Command, Output};

use fracop::nodf::Dataset;

fn fracop(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fracop"))
        .current_dir(dir)
        .env_remove("FRACOP_CACHE_DIR")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = fracop(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    fracop(dir, args).status.code().unwrap()
}

const TINY: &[&str] = &[
    "--set", "width=4", "--set", "n_layers=1", "--set", "modes=4", "--set", "padding=0", "--quiet",
];

fn train(dir: &Path, data: &str, out: &str, extra: &[&str]) {
    let mut args = vec!["train", "--data", data, "-o", out];
    args.extend_from_slice(TINY);
    args.extend_from_slice(extra);
    ok(dir, &args);
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines().map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn gen_shapes_and_reruns() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen", "darcy2d", "--n", "2", "--grid", "85", "--seed", "7", "-o", "darcy.nodf"]);
    let darcy = Dataset::read(&d.join("darcy.nodf")).unwrap();
    assert_eq!(darcy.input_shape, vec![85, 85, 1]);

    let line = ok(d, &["gen", "heat1d", "--n", "10", "--grid", "64"]);
    assert!(line.contains("10 samples"));
    assert_eq!(Dataset::read(&d.join("heat1d.nodf")).unwrap().len(), 10);
    ok(d, &["gen", "heat1d", "--n", "10", "--grid", "64", "-o", "again.nodf"]);
    assert_eq!(std::fs::read(d.join("heat1d.nodf")).unwrap(), std::fs::read(d.join("again.nodf")).unwrap());

    // a manifest repeats its run
    ok(d, &["gen", "--config", "heat1d.nodf.manifest.txt", "-o", "third.nodf"]);
    assert_eq!(std::fs::read(d.join("heat1d.nodf")).unwrap(), std::fs::read(d.join("third.nodf")).unwrap());

    for task in ["burgers1d", "chirp"] {
        ok(d, &["gen", task, "--n", "2", "--grid", "32"]);
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(d, &["gen", "heat1d", "--n", "3"]), 2);
    assert_eq!(code(d, &["gen", "heat1d", "--n", "3", "--grid", "32", "--set", "viscosity=1"]), 2);
    assert_eq!(code(d, &["bogus"]), 2);
    assert_eq!(code(d, &["inspect", "missing.nodf"]), 3);
    std::fs::write(d.join("junk.nodf"), b"NODF\x07").unwrap();
    assert_eq!(code(d, &["inspect", "junk.nodf"]), 3);
    ok(d, &["gen", "heat1d", "--n", "12", "--grid", "16", "-o", "h.nodf"]);
    assert_eq!(code(d, &["train", "--data", "h.nodf", "-o", "r", "--set", "widht=3"]), 2);
    assert_eq!(code(d, &["train", "--data", "h.nodf", "-o", "r", "--ablation", "no_thing"]), 2);
    assert_eq!(code(d, &["train", "--data", "h.nodf", "-o", "r", "--set", "grid_ndim=2"]), 5);
    // a learning rate this large overflows within the first epoch
    let mut args = vec!["train", "--data", "h.nodf", "-o", "blow", "--set", "lr=1e300", "--epochs", "3"];
    args.extend_from_slice(TINY);
    assert_eq!(code(d, &args), 4);
}

#[test]
fn train_outputs_and_eval() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen", "heat1d", "--n", "36", "--grid", "16", "-o", "h.nodf"]);
    train(d, "h.nodf", "run", &["--epochs", "1"]);
    let metrics = csv_rows(&d.join("run/metrics.csv"));
    assert_eq!(metrics.len(), 2);
    assert_eq!(metrics[0][..4], ["epoch", "train_rel_l2", "test_rel_l2", "lr"]);
    assert_eq!(metrics[1][3], "0.001");
    let manifest = std::fs::read_to_string(d.join("run/manifest.txt")).unwrap();
    assert!(manifest.contains("\nlr=0.001\n") && manifest.contains("\nbatch_size=20\n"));
    assert_eq!(std::fs::read_dir(d.join("run")).unwrap().filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().contains("manifest")).count(), 1);

    // the best checkpoint on the held-out sixth reproduces the logged metric
    let out = ok(d, &["eval", "--checkpoint", "run/best.ckpt", "--data", "h.nodf", "--holdout"]);
    let evaluated: f64 = out.lines().nth(1).unwrap().split(',').nth(1).unwrap().parse().unwrap();
    let logged: f64 = metrics[1][2].parse().unwrap();
    assert!((evaluated - logged).abs() < 1e-12);

    let out = ok(d, &["eval", "--checkpoint", "run/best.ckpt", "--protocol", "resolution", "--task", "heat1d", "--res", "32,64,128", "--n", "6"]);
    assert_eq!(out.lines().count(), 4);

    let out = ok(d, &[
        "eval", "--checkpoint", "run/best.ckpt", "--protocol", "noise", "--gamma", "0,0.001,0.01,0.1", "--data", "h.nodf",
        "--seeds", "0", "--epochs", "1", "-o", "noise.csv",
    ]);
    assert_eq!(out.lines().filter(|l| l.starts_with("noise,") && !l.contains(",mean,")).count(), 4);
    assert!(d.join("noise.csv").exists());

    ok(d, &["gen", "darcy2d", "--n", "2", "--grid", "16", "-o", "d.nodf"]);
    assert_eq!(code(d, &["eval", "--checkpoint", "run/best.ckpt", "--data", "d.nodf"]), 5);

    let info = ok(d, &["inspect", "run/best.ckpt"]);
    assert!(info.contains("kind: checkpoint") && info.contains("width: 4"));
}

#[test]
fn ablation_freezes_orders_and_manifest_reruns() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen", "heat1d", "--n", "24", "--grid", "16", "-o", "h.nodf"]);
    train(d, "h.nodf", "frozen", &["--epochs", "3", "--ablation", "no_frft"]);
    let rows = csv_rows(&d.join("frozen/metrics.csv"));
    for row in &rows[1..] {
        for a in &row[4..] {
            assert_eq!(a, "1");
        }
    }
    train(d, "h.nodf", "first", &["--epochs", "2", "--seed", "5"]);
    ok(d, &["train", "--config", "first/manifest.txt", "-o", "second", "--quiet"]);
    assert_eq!(std::fs::read(d.join("first/metrics.csv")).unwrap(), std::fs::read(d.join("second/metrics.csv")).unwrap());
}

fn read_grid(path: &Path) -> Vec<f64> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .flat_map(|l| l.split(',').map(|v| v.parse::<f64>().unwrap()).collect::<Vec<_>>())
        .collect()
}

#[test]
fn frft_verb() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let rows: Vec<String> = (0..8)
        .map(|i| (0..8).map(|j| ((i * 8 + j) as f64 * 0.37).sin().to_string()).collect::<Vec<_>>().join(","))
        .collect();
    std::fs::write(d.join("field.csv"), rows.join("\n")).unwrap();
    let input: Vec<f64> = rows.iter().flat_map(|r| r.split(',').map(|v| v.parse::<f64>().unwrap()).collect::<Vec<_>>()).collect();
    ok(d, &["frft", "--input", "field.csv", "--order", "0,0.25,0.5,0.75,1", "-o", "sweep"]);
    let files = std::fs::read_dir(d).unwrap().filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with("sweep_")).count();
    assert_eq!(files, 10);
    let mag0 = read_grid(&d.join("sweep_a0_magnitude.csv"));
    for (m, x) in mag0.iter().zip(&input) {
        assert!((m - x.abs()).abs() < 1e-12);
    }
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    for a in ["0.25", "0.5", "0.75", "1"] {
        let mag = read_grid(&d.join(format!("sweep_a{a}_magnitude.csv")));
        assert_eq!(mag.len(), 64);
        assert!((norm(&mag) - norm(&input)).abs() < 1e-10);
    }
    std::fs::write(d.join("bad.csv"), "1,2\nx,3\n").unwrap();
    assert_eq!(code(d, &["frft", "--input", "bad.csv", "--order", "1"]), 2);
    std::fs::write(d.join("ragged.csv"), "1,2\n3\n").unwrap();
    assert_eq!(code(d, &["frft", "--input", "ragged.csv", "--order", "1"]), 2);

    ok(d, &["gen", "heat1d", "--n", "2", "--grid", "16", "-o", "h.nodf"]);
    ok(d, &["frft", "--input", "h.nodf", "--index", "1", "--order", "0.5", "-o", "nodf"]);
    assert_eq!(read_grid(&d.join("nodf_a0.5_phase.csv")).len(), 16);
}

#[test]
fn plan_cache_directory_is_used() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cache = d.join("plans");
    std::fs::write(d.join("f.csv"), "1\n2\n3\n4\n5\n6\n7\n8\n9\n10\n").unwrap();
    let run = || {
        Command::new(env!("CARGO_BIN_EXE_fracop"))
            .current_dir(d)
            .env("FRACOP_CACHE_DIR", &cache)
            .args(["frft", "--input", "f.csv", "--order", "0.5", "-o", "c"])
            .output()
            .unwrap()
    };
    assert!(run().status.success());
    let first = std::fs::read_to_string(d.join("c_a0.5_magnitude.csv")).unwrap();
    assert!(cache.join("frft-10-w4.plan").exists());
    assert!(run().status.success());
    assert_eq!(std::fs::read_to_string(d.join("c_a0.5_magnitude.csv")).unwrap(), first);
    let info = ok(d, &["inspect", "plans/frft-10-w4.plan"]);
    assert!(info.contains("n: 10"));
}
