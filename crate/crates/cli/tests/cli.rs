use std::path::Path;
use std::process::{Command, Output};

fn lod3(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lod3"))
        .args(args)
        .env_remove("LOD3_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, extra: &[&str]) -> std::path::PathBuf {
    let mut args = vec!["synth", "--out-dir", s(dir)];
    args.extend_from_slice(extra);
    let out = lod3(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    dir.join("scene.cfg")
}

#[test]
fn help_lists_subcommands_and_flags() {
    let out = lod3(&["--help"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for cmd in [
        "raycast",
        "conflicts",
        "project-points",
        "project-image",
        "fuse",
        "extract",
        "reconstruct",
        "evaluate",
        "pipeline",
        "synth",
    ] {
        assert!(text.contains(cmd), "{cmd} missing from help");
    }
    let text = String::from_utf8_lossy(&lod3(&["pipeline", "--help"]).stdout).to_string();
    for flag in ["--vs", "--p-high", "--pe-up", "--pe-lo", "--cpt", "--depth", "--iou-min"] {
        assert!(text.contains(flag), "{flag} missing from pipeline help");
    }
}

#[test]
fn synth_then_pipeline_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synth(dir.path(), &[]);
    let out_dir = dir.path().join("run");
    let out = lod3(&["pipeline", "--config", s(&cfg), "--out-dir", s(&out_dir)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("DA=100%"), "{stdout}");
    let metrics = std::fs::read_to_string(out_dir.join("metrics.kv")).unwrap();
    assert!(metrics.contains("TP=3"));
}

#[test]
fn out_dir_environment_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synth(dir.path(), &[]);
    let target = dir.path().join("from_env");
    let out = Command::new(env!("CARGO_BIN_EXE_lod3"))
        .args(["pipeline", "--config", s(&cfg)])
        .env("LOD3_OUT_DIR", &target)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(target.join("metrics.kv").is_file());
    assert!(!dir.path().join("out").exists());
}

#[test]
fn stages_run_one_by_one_reproduce_the_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = synth(d, &[]);
    let full = d.join("full");
    assert!(lod3(&["pipeline", "--config", s(&cfg), "--out-dir", s(&full)]).status.success());

    let st = d.join("stages");
    std::fs::create_dir_all(&st).unwrap();
    let face = "building_wall_xmin";
    let run = |args: &[&str]| {
        let o = lod3(args);
        assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    };
    let occ = st.join("occupancy.txt");
    run(&["raycast", "--rays", s(&d.join("rays.txt")), "--out", s(&occ), "--vs", "0.1"]);
    run(&["conflicts", "--occupancy", s(&occ), "--solid", s(&d.join("solid.txt")), "--out-dir", s(&st)]);
    let pts = st.join("points.txt");
    run(&[
        "project-points",
        "--points",
        s(&d.join("points.txt")),
        "--solid",
        s(&d.join("solid.txt")),
        "--face",
        face,
        "--out",
        s(&pts),
    ]);
    let img = st.join("image.txt");
    run(&[
        "project-image",
        "--image",
        s(&d.join("image.txt")),
        "--correspondences",
        s(&d.join("correspondences.txt")),
        "--solid",
        s(&d.join("solid.txt")),
        "--face",
        face,
        "--out",
        s(&img),
    ]);
    let fused = st.join("fused.txt");
    let conflict = st.join(format!("conflict_{face}.txt"));
    run(&[
        "fuse",
        "--conflict",
        s(&conflict),
        "--points",
        s(&pts),
        "--image",
        s(&img),
        "--out",
        s(&fused),
    ]);
    let inst = st.join("instances.txt");
    run(&["extract", "--fused", s(&fused), "--out", s(&inst)]);
    let model = st.join("model.gml");
    run(&[
        "reconstruct",
        "--solid",
        s(&d.join("solid.txt")),
        "--instances",
        s(&inst),
        "--templates",
        s(&d.join("templates.txt")),
        "--out",
        s(&model),
    ]);
    let metrics = st.join("metrics.kv");
    run(&[
        "evaluate",
        "--instances",
        s(&inst),
        "--gt-instances",
        s(&d.join("gt_instances.txt")),
        "--model",
        s(&model),
        "--gt-model",
        s(&d.join("gt_model.gml")),
        "--out",
        s(&metrics),
    ]);

    let read = |p: &Path| std::fs::read(p).unwrap();
    assert_eq!(read(&conflict), read(&full.join(format!("conflict_{face}.txt"))));
    assert_eq!(read(&fused), read(&full.join(format!("fused_{face}.txt"))));
    assert_eq!(read(&inst), read(&full.join("instances.txt")));
    assert_eq!(read(&model), read(&full.join("model.gml")));
    let m = String::from_utf8(read(&metrics)).unwrap();
    assert!(m.contains("DA=100") && m.contains("watertight=true"), "{m}");
}

#[test]
fn missing_rays_exit_two_and_name_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synth(dir.path(), &[]);
    std::fs::remove_file(dir.path().join("rays.txt")).unwrap();
    let out = lod3(&["pipeline", "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("occupancy"));
}

#[test]
fn non_positive_voxel_size_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synth(dir.path(), &[]);
    let out = lod3(&["pipeline", "--config", s(&cfg), "--vs", "0"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("config"), "{err}");
    assert!(!dir.path().join("out").exists());
}

#[test]
fn bad_arguments_exit_two() {
    assert_eq!(lod3(&["extract"]).status.code(), Some(2));
    assert_eq!(lod3(&["synth", "--out-dir", "/nonexistent/x", "--blind", "9"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.txt");
    std::fs::write(&bad, "not a raster\n").unwrap();
    let out = lod3(&["fuse", "--points", s(&bad), "--out", s(&dir.path().join("f.txt"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn blind_window_is_still_found() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synth(dir.path(), &["--blind", "0"]);
    let out = lod3(&["pipeline", "--config", s(&cfg)]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("TP=3"));
}
