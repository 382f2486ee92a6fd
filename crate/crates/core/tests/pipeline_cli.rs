use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use flippoint::pipeline::{files, write_synthetic_batch, Manifest};

const STAGES: [&str; 7] = ["prepare", "train", "recon", "flip", "path", "regions", "attack"];

struct Workspace {
    _dir: tempfile::TempDir,
    root: PathBuf,
    config: PathBuf,
}

fn workspace() -> Workspace {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let data = root.join("data");
    fs::create_dir_all(&data).unwrap();
    write_synthetic_batch(&data.join("train.bin"), 120, (0, 8), 10).unwrap();
    write_synthetic_batch(&data.join("test.bin"), 30, (0, 8), 11).unwrap();
    let config = root.join("small.cfg");
    fs::write(
        &config,
        format!(
            "# small run\n\
             data_dir = {}\n\
             train_files = train.bin\n\
             test_files = test.bin\n\
             k = 16\n\
             hidden = 12,8\n\
             epochs = 6\n\
             batch_size = 16\n\
             flip_count = 5\n\
             attack_count = 3\n\
             attack_steps = 60\n\
             region_max_points = 8\n\
             recon_ks = 60,16\n\
             recon_train_subset = 70\n",
            data.display()
        ),
    )
    .unwrap();
    Workspace { _dir: dir, root, config }
}

fn flippoint(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flippoint")).args(args).output().unwrap()
}

fn run_all(ws: &Workspace, out: &Path, seed: &str) {
    for stage in STAGES {
        let o = flippoint(&[
            stage,
            "--config",
            ws.config.to_str().unwrap(),
            "--out-dir",
            out.to_str().unwrap(),
            "--seed",
            seed,
            "--threads",
            "1",
        ]);
        assert!(o.status.success(), "{stage}: {}", String::from_utf8_lossy(&o.stderr));
        let stdout = String::from_utf8(o.stdout).unwrap();
        assert!(stdout.contains(&format!("manifest_{stage}.txt")), "{stdout}");
    }
}

fn csv_files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    names.sort();
    names
}

#[test]
fn same_seed_gives_identical_outputs() {
    let ws = workspace();
    let (a, b, c) = (ws.root.join("a"), ws.root.join("b"), ws.root.join("c"));
    run_all(&ws, &a, "42");
    run_all(&ws, &b, "42");
    run_all(&ws, &c, "43");

    let names = csv_files(&a);
    assert!(names.len() >= 12, "{names:?}");
    assert_eq!(names, csv_files(&b));
    for n in &names {
        assert_eq!(fs::read(a.join(n)).unwrap(), fs::read(b.join(n)).unwrap(), "{n}");
    }
    for stage in STAGES {
        let name = Manifest::file_name(stage);
        assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap(), "{name}");
    }
    assert_ne!(
        fs::read(a.join(files::TRAIN_LOSS)).unwrap(),
        fs::read(c.join(files::TRAIN_LOSS)).unwrap()
    );
}

#[test]
fn manifests_match_outputs() {
    let ws = workspace();
    let out = ws.root.join("out");
    run_all(&ws, &out, "7");
    for stage in STAGES {
        let m = Manifest::read(&out.join(Manifest::file_name(stage))).unwrap();
        assert_eq!(m.command, stage);
        assert_eq!(m.seed, 7);
        assert!(!m.outputs.is_empty());
        for (f, digest) in &m.outputs {
            assert_eq!(&flippoint::pipeline::sha256_file(&out.join(f)).unwrap(), digest, "{f}");
        }
    }
    let header = fs::read_to_string(out.join(files::FLIPS)).unwrap();
    assert!(header.starts_with("query_id,class_i,class_j,distance,"));
    let losses = fs::read_to_string(out.join(files::TRAIN_LOSS)).unwrap();
    assert_eq!(losses.lines().count(), 1 + 6);
}

#[test]
fn missing_input_is_reported_as_json() {
    let ws = workspace();
    let out = ws.root.join("empty");
    let o = flippoint(&["flip", "--config", ws.config.to_str().unwrap(), "--out-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let rec: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(rec["error"], "dependency");
    assert_eq!(rec["command"], "flip");
    assert_eq!(rec["producer"], "flippoint train");
    assert!(!out.join(files::FLIPS).exists());
}

#[test]
fn bad_overrides_are_config_errors() {
    let ws = workspace();
    for set in ["nonsense=1", "epochs=-3", "k"] {
        let o = flippoint(&["prepare", "--config", ws.config.to_str().unwrap(), "--set", set]);
        assert_eq!(o.status.code(), Some(1), "{set}");
        let rec: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
        assert_eq!(rec["error"], "config", "{set}");
    }
}

#[test]
fn set_overrides_config_file() {
    let ws = workspace();
    let out = ws.root.join("o");
    let o = flippoint(&[
        "prepare",
        "--config",
        ws.config.to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
        "--set",
        "k=3",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let header = fs::read_to_string(out.join(files::TRAIN_FEATURES)).unwrap();
    assert_eq!(header.lines().next().unwrap(), "record,label,f0,f1,f2");
}
