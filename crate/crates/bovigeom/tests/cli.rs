use std::path::Path;
use std::process::{Command, Output};

fn bovigeom(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bovigeom")).args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_camera(dir: &Path) -> String {
    let p = dir.join("camera.toml");
    std::fs::write(&p, "fx = 575.0\nfy = 575.0\ncx = 9.5\ncy = 7.5\n").unwrap();
    p.to_string_lossy().into_owned()
}

fn write_raster(path: &Path, w: usize, h: usize) {
    let mut s = String::new();
    for v in 0..h {
        let row: Vec<String> = (0..w).map(|u| format!("{:.1}", 1200.0 + (u + v) as f64)).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    std::fs::write(path, s).unwrap();
}

#[test]
fn version_and_help_exit_zero() {
    let o = bovigeom(&["--version"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains(env!("CARGO_PKG_VERSION")));
    let o = bovigeom(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("synth"));
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    assert_eq!(bovigeom(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(bovigeom(&[]).status.code(), Some(1));
}

#[test]
fn missing_camera_names_the_flag() {
    let d = tempfile::tempdir().unwrap();
    let o = bovigeom(&["convert", "--in", d.path().to_str().unwrap(), "--out", d.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--camera"), "{}", stderr(&o));
}

#[test]
fn unknown_config_key_is_rejected() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("c.toml");
    std::fs::write(&cfg, "[forest]\ngird = \"single\"\n").unwrap();
    let o = bovigeom(&["--config", cfg.to_str().unwrap(), "stats", "--manifest", "nope.csv"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("gird"), "{}", stderr(&o));
}

#[test]
fn missing_input_is_a_data_error() {
    let d = tempfile::tempdir().unwrap();
    let o = bovigeom(&["stats", "--manifest", d.path().join("absent.csv").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("absent.csv"), "{}", stderr(&o));
}

#[test]
fn zero_jobs_is_rejected() {
    assert_eq!(bovigeom(&["--jobs", "0", "stats", "--manifest", "m.csv"]).status.code(), Some(1));
}

#[test]
fn batch_continues_past_bad_files() {
    let d = tempfile::tempdir().unwrap();
    let cam = write_camera(d.path());
    let input = d.path().join("depth");
    std::fs::create_dir(&input).unwrap();
    write_raster(&input.join("a.csv"), 20, 16);
    std::fs::write(input.join("b.csv"), "1200,1201\n1200,oops\n").unwrap();
    write_raster(&input.join("c.csv"), 20, 16);
    let out = d.path().join("pgm");
    let o = bovigeom(&["convert", "--camera", &cam, "--in", input.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("b.csv"), "{err}");
    assert!(err.contains("1 of 3"), "{err}");
    assert!(out.join("a.pgm").is_file());
    assert!(out.join("c.pgm").is_file());
    assert!(!out.join("b.pgm").exists());

    let out = d.path().join("ply");
    let o = bovigeom(&["cloud", "--camera", &cam, "--in", input.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(out.join("a.ply").is_file());
    assert!(out.join("c.ply").is_file());
}

#[test]
fn json_logs_are_one_object_per_line() {
    let d = tempfile::tempdir().unwrap();
    let o = bovigeom(&["--log", "json", "stats", "--manifest", d.path().join("absent.csv").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(!err.trim().is_empty());
    for line in err.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap_or_else(|e| panic!("{line}: {e}"));
        assert!(v.get("level").is_some() && v.get("msg").is_some());
    }
}

#[test]
fn synth_features_train_predict_round_trip() {
    let d = tempfile::tempdir().unwrap();
    let p = |s: &str| d.path().join(s).to_string_lossy().into_owned();
    let cfg = p("c.toml");
    std::fs::write(&cfg, "[forest]\ngrid = \"single\"\n[forest.single]\nn_estimators = 30\n").unwrap();
    let run = |args: &[&str]| {
        let mut full = vec!["-q", "--config", cfg.as_str()];
        full.extend_from_slice(args);
        let o = bovigeom(&full);
        assert_eq!(o.status.code(), Some(0), "{args:?}: {}", stderr(&o));
        o
    };
    run(&["synth", "--count", "5", "--seed", "2", "--out", &p("data"), "--no-oracle"]);
    assert!(!Path::new(&p("data/oracle_features.csv")).exists());
    run(&["features", "--camera", &p("data/camera.toml"), "--manifest", &p("data/manifest.csv"), "--out", &p("f.csv")]);
    let features = std::fs::read_to_string(p("f.csv")).unwrap();
    assert!(features.starts_with("cow_id,image_id,variant,maxdist_l1,"));
    assert_eq!(features.lines().count(), 1 + 10);
    run(&["train", "--features", &p("f.csv"), "--out", &p("m.json")]);
    run(&["predict", "--model", &p("m.json"), "--features", &p("f.csv"), "--out", &p("pred.csv")]);
    let preds = std::fs::read_to_string(p("pred.csv")).unwrap();
    assert!(preds.starts_with("cow_id,image_id,variant,predicted,label,p_2.00"));
    assert_eq!(preds.lines().count(), 1 + 10);
    let o = run(&["stats", "--manifest", &p("data/manifest.csv")]);
    assert!(String::from_utf8_lossy(&o.stdout).contains("unknown"));
}
