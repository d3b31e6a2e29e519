use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use momhal::io;
use momhal::sdf::SaliencyFrame;

fn momhal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_momhal"))
        .args(args)
        .env("MOMHAL_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const DETECTIONS: &str = r#"{"video":"v1","detector":"frcnn","frame":1,"tau":3,"class":5,"conf":0.9,"box":[0.1,0.1,0.5,0.6],"inet_sparse":[[3,1.0]]}
{"video":"v1","detector":"frcnn","frame":2,"tau":3,"class":80,"conf":0.4,"box":[0.2,0.3,0.7,0.9],"inet_sparse":[[3,0.5],[10,0.5]]}
{"video":"v1","detector":"frcnn","frame":3,"tau":3,"class":171,"conf":0.7,"box":[0.0,0.0,1.0,1.0],"inet_sparse":[[1000,1.0]]}
"#;

#[test]
fn empty_detection_file_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("empty.jsonl");
    fs::write(&input, "").unwrap();
    let o = momhal(&[
        "encode-odf",
        "--input",
        p(&input),
        "--out",
        p(&dir.path().join("out")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no records"), "{}", stderr(&o));
}

#[test]
fn odf_descriptor_lengths() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("dets.jsonl");
    fs::write(&input, DETECTIONS).unwrap();
    for (flags, box_dim) in [(vec![], 1214), (vec!["--no-rbf"], 1178)] {
        for n in [1usize, 3, 5] {
            let out = dir.path().join(format!("out{box_dim}_{n}"));
            let ns = n.to_string();
            let mut args = vec![
                "encode-odf",
                "--input",
                p(&input),
                "--out",
                p(&out),
                "--n-prime",
                &ns,
            ];
            args.extend(&flags);
            let o = momhal(&args);
            assert!(o.status.success(), "{}", stderr(&o));
            let d = io::read_descriptor(&io::descriptor_path(&out, "v1", "frcnn")).unwrap();
            assert_eq!(d.dim(), box_dim);
            assert_eq!(d.flatten().len(), box_dim * (4 + n));
            assert!(
                stdout(&o).contains("1 descriptors, 3 records"),
                "{}",
                stdout(&o)
            );
        }
    }
}

#[test]
fn malformed_line_is_a_parse_error_unless_lenient() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("dets.jsonl");
    fs::write(&input, format!("{DETECTIONS}{{not json\n")).unwrap();
    let out = dir.path().join("out");
    let o = momhal(&["encode-odf", "--input", p(&input), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains('4'), "{}", stderr(&o));
    let o = momhal(&[
        "encode-odf",
        "--input",
        p(&input),
        "--out",
        p(&out),
        "--lenient",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("skipped"));
}

fn write_frames(dir: &Path, video: &str, frames: &[SaliencyFrame]) -> String {
    let mut manifest = String::new();
    for (k, f) in frames.iter().enumerate() {
        let name = format!("{video}_{k}.pgm");
        io::write_pgm(&dir.join(&name), f, 255).unwrap();
        manifest.push_str(&format!("{video} aclnet {name}\n"));
    }
    manifest
}

#[test]
fn sdf_descriptor_lengths_and_constant_frames() {
    let dir = tempfile::tempdir().unwrap();
    let blob: Vec<SaliencyFrame> = (0..4)
        .map(|k| {
            SaliencyFrame::from_fn(20, 18, |r, c| {
                let (x, y) = (
                    c as f64 / 19.0 - 0.3 - 0.1 * k as f64,
                    r as f64 / 17.0 - 0.5,
                );
                (-(x * x + y * y) / 0.05).exp()
            })
            .unwrap()
        })
        .collect();
    let flat: Vec<SaliencyFrame> = (0..3)
        .map(|_| SaliencyFrame::from_fn(16, 16, |_, _| 0.6).unwrap())
        .collect();
    let mut manifest = write_frames(dir.path(), "blob", &blob);
    manifest.push_str(&write_frames(dir.path(), "flat", &flat));
    let mpath = dir.path().join("saliency.txt");
    fs::write(&mpath, manifest).unwrap();

    for n in [1usize, 3] {
        let out = dir.path().join(format!("sdf{n}"));
        let ns = n.to_string();
        let o = momhal(&[
            "encode-sdf",
            "--manifest",
            p(&mpath),
            "--out",
            p(&out),
            "--n-dagger",
            &ns,
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        let d = io::read_descriptor(&io::descriptor_path(&out, "blob", "aclnet")).unwrap();
        assert_eq!(d.flatten().len(), 556 * (4 + n));
        let c = io::read_descriptor(&io::descriptor_path(&out, "flat", "aclnet")).unwrap();
        assert!(c.mean_dir[..300].iter().all(|v| *v == 0.0));
        assert!(c.mean_dir[300..].iter().any(|v| *v != 0.0));
    }
}

#[test]
fn synth_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = momhal(&[
            "synth",
            "--out",
            p(out),
            "--videos",
            "24",
            "--classes",
            "3",
            "--seed",
            "5",
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let mut names: Vec<_> = fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert!(names.len() >= 4);
    for name in names {
        assert_eq!(
            fs::read(a.join(&name)).unwrap(),
            fs::read(b.join(&name)).unwrap(),
            "{name:?}"
        );
    }
}

#[test]
fn train_then_eval_without_targets() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let run = dir.path().join("run");
    let o = momhal(&[
        "synth",
        "--out",
        p(&data),
        "--videos",
        "96",
        "--classes",
        "4",
        "--seed",
        "2",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = momhal(&[
        "train",
        "--data",
        p(&data),
        "--out",
        p(&run),
        "--epochs",
        "12",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["model.hal", "metrics.csv", "fusion.toml", "config.toml"] {
        assert!(run.join(f).exists(), "{f} missing");
    }
    let csv = fs::read_to_string(run.join("metrics.csv")).unwrap();
    assert!(csv.starts_with("epoch,loss,mse_fv1"));
    assert_eq!(csv.lines().count(), 13);

    // inference must not need the ground-truth descriptors
    fs::remove_file(data.join(io::TARGETS_FILE)).unwrap();
    let o = momhal(&[
        "eval",
        "--model",
        p(&run.join("model.hal")),
        "--data",
        p(&data),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("accuracy"), "{}", stdout(&o));

    let o = momhal(&[
        "search-beta",
        "--data",
        p(&data),
        "--out",
        p(&run),
        "--iters",
        "8",
    ]);
    assert_eq!(
        o.status.code(),
        Some(1),
        "search-beta needs targets: {}",
        stderr(&o)
    );
}

#[test]
fn config_errors_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "[train]\nlearning_rate = \"fast\"\n").unwrap();
    let o = momhal(&["train", "--config", p(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("train.learning_rate"), "{}", stderr(&o));

    fs::write(&cfg, "[odf]\nn_prime = 0\n").unwrap();
    let o = momhal(&[
        "synth",
        "--config",
        p(&cfg),
        "--out",
        p(&dir.path().join("d")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("odf.n_prime"), "{}", stderr(&o));
}

#[test]
fn verify_reports_each_check() {
    let o = momhal(&["verify", "--suite", "moments"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(
        stdout(&o).lines().all(|l| l.starts_with("PASS ")),
        "{}",
        stdout(&o)
    );
    let o = momhal(&["verify", "--suite", "bogus"]);
    assert_eq!(o.status.code(), Some(2));
}
