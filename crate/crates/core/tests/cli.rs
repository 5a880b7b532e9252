use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use skipnet::dataset::{write_shape_dataset, DatasetIndex, Shape};

const TINY_CONFIG: &str = "\
n_points = 48
stage1.n_out = 12
stage1.radius = 0.5
stage1.group_size = 6
stage1.mlp_widths = 8
stage1.reduce_width = 8
stage2.n_out = 4
stage2.radius = 1.0
stage2.group_size = 4
stage2.mlp_widths = 8
stage2.reduce_width = 8
global_hidden =
global_width = 16
fc_widths = 8
dropout = 0.0
";

fn skipnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_skipnet"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_original_index(dir: &Path) -> PathBuf {
    let index = DatasetIndex::synthetic(&[
        ("flower_pot", 149, 20),
        ("plant", 239, 100),
        ("vase", 475, 100),
        ("cup", 79, 20),
        ("bowl", 64, 20),
    ])
    .unwrap();
    let path = dir.join("index.csv");
    index.write_csv(std::fs::File::create(&path).unwrap()).unwrap();
    path
}

/// Two-class shape dataset plus the tiny model config.
fn tiny_workspace(dir: &Path) -> (PathBuf, PathBuf) {
    let root = dir.join("data");
    write_shape_dataset(&root, &[Shape::Sphere, Shape::Cube], 6, 2, 3).unwrap();
    let config = dir.join("tiny.conf");
    std::fs::write(&config, TINY_CONFIG).unwrap();
    (root, config)
}

fn train_tiny(root: &Path, config: &Path, out: &Path) -> Output {
    skipnet(&[
        "train",
        "--root",
        arg(root),
        "--config",
        arg(config),
        "--out",
        arg(out),
        "--epochs",
        "1",
        "--seed",
        "5",
        "--quiet",
    ])
}

#[test]
fn refine_writes_audit_and_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let index = write_original_index(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = skipnet(&["refine", "--root", arg(&index), "--out", arg(out)]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(stdout(&o).contains("removed=19 touched=1266"));
    }
    for f in ["refined_index.csv", "audit_table.csv", "audit_final_counts.csv"] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    let counts = std::fs::read_to_string(a.join("audit_final_counts.csv")).unwrap();
    assert_eq!(
        counts,
        "class,count\nflower_pot,262\nplant,152\nvase,722\ncup,43\nbowl,68\n"
    );
}

#[test]
fn manifest_naming_an_absent_instance_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let index = write_original_index(dir.path());
    let manifest = dir.path().join("m.csv");
    std::fs::write(&manifest, "class,instance,action,target\nvase,vase_9999,remove,\n").unwrap();
    let o = skipnet(&[
        "refine",
        "--root",
        arg(&index),
        "--manifest",
        arg(&manifest),
        "--out",
        arg(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("vase_9999"));

    std::fs::write(&manifest, "class,instance,action,target\nvase,vase_0001,explode,\n").unwrap();
    let o = skipnet(&[
        "refine",
        "--root",
        arg(&index),
        "--manifest",
        arg(&manifest),
        "--out",
        arg(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_inputs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope");
    let o = skipnet(&["refine", "--root", arg(&missing), "--out", arg(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    let o = skipnet(&["train", "--root", arg(&missing), "--out", arg(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(skipnet(&["train"]).status.code(), Some(2));
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let (root, _) = tiny_workspace(dir.path());
    let config = dir.path().join("bad.conf");
    std::fs::write(&config, "n_point = 64\n").unwrap();
    let o = skipnet(&[
        "train",
        "--root",
        arg(&root),
        "--config",
        arg(&config),
        "--out",
        arg(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("n_point"));
}

#[test]
fn stats_of_builtin_table() {
    let o = skipnet(&["stats"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("40"), "{text}");
    assert!(text.contains("12311"), "{text}");
}

#[test]
fn train_eval_classify_round() {
    let dir = tempfile::tempdir().unwrap();
    let (root, config) = tiny_workspace(dir.path());
    let (a, b) = (dir.path().join("run_a"), dir.path().join("run_b"));
    for out in [&a, &b] {
        let o = train_tiny(&root, &config, out);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let log = std::fs::read_to_string(a.join("train_log.csv")).unwrap();
    let lines: Vec<&str> = log.lines().collect();
    assert_eq!(lines[0], "epoch,train_loss,train_oa,eval_oa,eval_macc");
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("1,"));
    assert_eq!(log, std::fs::read_to_string(b.join("train_log.csv")).unwrap());
    let ckpt = a.join("checkpoint.pskn");
    assert_eq!(
        std::fs::read(&ckpt).unwrap(),
        std::fs::read(b.join("checkpoint.pskn")).unwrap()
    );

    let eval_out = dir.path().join("eval");
    let o = skipnet(&[
        "eval",
        "--checkpoint",
        arg(&ckpt),
        "--root",
        arg(&root),
        "--n-points",
        "48",
        "--out",
        arg(&eval_out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let confusion = std::fs::read_to_string(eval_out.join("confusion.csv")).unwrap();
    assert!(confusion.starts_with("true_class,"));
    assert_eq!(confusion.lines().count(), 3);

    let mesh = root.join("cube").join("test").join("cube_0007.off");
    let o = skipnet(&["classify", "--checkpoint", arg(&ckpt), "--n-points", "48", arg(&mesh)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let probs: Vec<f64> = text
        .lines()
        .map(|l| l.split('\t').nth(1).unwrap().trim().parse().unwrap())
        .collect();
    assert_eq!(probs.len(), 2, "{text}");
    assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-6);
}

#[test]
fn truncated_checkpoint_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let (root, config) = tiny_workspace(dir.path());
    let out = dir.path().join("run");
    assert_eq!(train_tiny(&root, &config, &out).status.code(), Some(0));
    let bytes = std::fs::read(out.join("checkpoint.pskn")).unwrap();
    let cut = dir.path().join("cut.pskn");
    std::fs::write(&cut, &bytes[..bytes.len() - 9]).unwrap();
    let mesh = root.join("sphere").join("train").join("sphere_0001.off");
    let o = skipnet(&["classify", "--checkpoint", arg(&cut), arg(&mesh)]);
    assert_eq!(o.status.code(), Some(1));
    let o = skipnet(&["eval", "--checkpoint", arg(&cut), "--root", arg(&root)]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn synth_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = skipnet(&[
            "synth",
            "--out",
            arg(out),
            "--classes",
            "3",
            "--train",
            "2",
            "--test",
            "1",
            "--seed",
            "9",
        ]);
        assert_eq!(o.status.code(), Some(0));
    }
    let f = Path::new("cube").join("test").join("cube_0003.off");
    assert_eq!(std::fs::read(a.join(&f)).unwrap(), std::fs::read(b.join(&f)).unwrap());
    assert_eq!(
        skipnet(&["synth", "--out", arg(&a), "--classes", "11"]).status.code(),
        Some(2)
    );
}

#[test]
fn bench_writes_timing_table() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("tiny.conf");
    std::fs::write(&config, TINY_CONFIG).unwrap();
    let o = skipnet(&[
        "bench",
        "--sizes",
        "64,128",
        "--reps",
        "1",
        "--config",
        arg(&config),
        "--n-points",
        "48",
        "--out",
        arg(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let table = std::fs::read_to_string(dir.path().join("bench.csv")).unwrap();
    assert!(table.starts_with("kernel,points,median_ms,points_per_s\n"));
    for k in [
        "fps_half",
        "ball_query_scan",
        "ball_query_grid",
        "stage1_forward",
        "full_forward",
    ] {
        assert!(table.contains(k), "{k}");
    }
}
