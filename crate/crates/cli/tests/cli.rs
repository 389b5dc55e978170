//! End-to-end runs of the `polysdf` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nalgebra::{DMatrix, DVector};
use polysdf::ingest::{load_mesh, write_point_cloud, CloudFormat, DomainTransform, MeshFormat};
use polysdf::oracle::{MetricsReport, Sphere};
use polysdf::recon::export::read_grid;
use polysdf::snapshot::Snapshot;
use polysdf::{BasisConfig, FieldModel};

fn polysdf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polysdf")).args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        Self { dir: tempfile::tempdir().unwrap() }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    /// Sphere cloud of radius 0.5 around (1, 2, 3).
    fn cloud(&self, name: &str, n: usize, seed: u64) -> PathBuf {
        let p = self.path(name);
        let samples = Sphere::new(vec![1.0, 2.0, 3.0], 0.5).unwrap().sample(n, seed);
        write_point_cloud(&p, &samples, CloudFormat::from_path(&p).unwrap()).unwrap();
        p
    }

    fn fitted(&self) -> PathBuf {
        let cloud = self.cloud("c.xyz", 600, 1);
        let model = self.path("m.snap");
        let o = polysdf(&["fit", "--in", s(&cloud), "--out", s(&model)]);
        assert!(o.status.success(), "{}", stderr(&o));
        model
    }
}

#[test]
fn help_lists_commands_and_defaults() {
    let o = polysdf(&["--help"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for word in ["fit", "update", "query", "reconstruct", "eval", "simulate", "--lambda-t", "[0.05]", "--config"] {
        assert!(text.contains(word), "missing {word}");
    }
}

#[test]
fn usage_and_config_errors_exit_1() {
    let f = Fixture::new();
    let o = polysdf(&["fit", "--lamda-d", "1"]);
    assert_eq!(o.status.code(), Some(1));
    fs::write(f.path("bad.cfg"), "segments = 4\nlamda_d = 1\n").unwrap();
    let o = polysdf(&["fit", "--config", s(&f.path("bad.cfg"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("lamda_d"));
    let o = polysdf(&["fit", "--out", "x.snap"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--in"));
    let o = polysdf(&["fit", "--margin", "0.6", "--in", "a.xyz", "--out", "b.snap"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("margin"));
}

#[test]
fn io_and_format_errors_exit_2() {
    let f = Fixture::new();
    let o = polysdf(&["fit", "--in", s(&f.path("missing.xyz")), "--out", s(&f.path("m.snap"))]);
    assert_eq!(o.status.code(), Some(2));
    fs::write(f.path("bad.xyz"), "0 0 0 1 0\n").unwrap();
    let o = polysdf(&["fit", "--in", s(&f.path("bad.xyz")), "--out", s(&f.path("m.snap"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains(":1"));
    let o = polysdf(&["fit", "--in", s(&f.path("cloud.dat")), "--out", s(&f.path("m.snap"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!f.path("m.snap").exists());
}

#[test]
fn config_file_and_flag_precedence() {
    let f = Fixture::new();
    let cloud = f.cloud("c.xyz", 200, 2);
    fs::write(f.path("run.cfg"), format!("# example\nsegments = 2\nin = {}\nout = {}\n", s(&cloud), s(&f.path("a.snap")))).unwrap();
    assert!(polysdf(&["fit", "--config", s(&f.path("run.cfg"))]).status.success());
    assert_eq!(Snapshot::load(&f.path("a.snap")).unwrap().model.config().segments(), 2);
    assert!(polysdf(&["fit", "--config", s(&f.path("run.cfg")), "--segments", "3"]).status.success());
    assert_eq!(Snapshot::load(&f.path("a.snap")).unwrap().model.config().segments(), 3);
}

#[test]
fn example_config_parses() {
    let example = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../config/polysdf.cfg");
    let f = Fixture::new();
    let o = polysdf(&["simulate", "--config", s(&example), "--sim-steps", "5", "--eval-points", "20", "--out", s(&f.path("sim"))]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn query_constant_model_prints_constant_and_zero_gradient() {
    let f = Fixture::new();
    let model = FieldModel::constant(BasisConfig::unit(3, 2, 3).unwrap(), 0.25, 1.0).unwrap();
    let snap = f.path("c.snap");
    Snapshot::new(model, DomainTransform::identity(3)).unwrap().save(&snap).unwrap();
    let o = polysdf(&["query", "--model", s(&snap), "--point", "0.1,0.2,0.3", "--point", "1 1 1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let lines: Vec<Vec<f64>> = stdout(&o)
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split_whitespace().map(|t| t.parse().unwrap()).collect())
        .collect();
    assert_eq!(lines.len(), 2);
    for l in lines {
        assert!((l[3] - 0.25).abs() < 1e-10);
        assert!(l[4..].iter().all(|g| g.abs() < 1e-10));
    }
    let o = polysdf(&["query", "--model", s(&snap), "--point", "2,0,0"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn query_reports_raw_units() {
    let f = Fixture::new();
    let model = f.fitted();
    let o = polysdf(&["query", "--model", s(&model), "--point", "1,2,3", "--point", "1.5,2,3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let vals: Vec<Vec<f64>> = stdout(&o)
        .lines()
        .skip(1)
        .map(|l| l.split_whitespace().map(|t| t.parse().unwrap()).collect())
        .collect();
    // the center is inside; the surface point sits on the zero set with an outward gradient
    assert!(vals[0][3] < 0.0, "{vals:?}");
    assert!(vals[1][3].abs() < 0.02, "{vals:?}");
    assert!(vals[1][4] > 0.9);
}

#[test]
fn update_with_empty_file_keeps_snapshot() {
    let f = Fixture::new();
    let model = f.fitted();
    let before = fs::read(&model).unwrap();
    fs::write(f.path("empty.xyz"), "# nothing here\n").unwrap();
    let o = polysdf(&["update", "--model", s(&model), "--in", s(&f.path("empty.xyz"))]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).to_lowercase().contains("warn"));
    assert_eq!(fs::read(&model).unwrap(), before);
}

#[test]
fn streaming_fit_matches_batch_fit() {
    let f = Fixture::new();
    let cloud = f.cloud("c.ply", 120, 4);
    let batch = f.path("b.snap");
    let streamed = f.path("s.snap");
    let common = ["--segments", "2", "--domain", "0,1,2,2,3,4"];
    let mut args = vec!["fit", "--in", s(&cloud), "--out", s(&batch)];
    args.extend(common);
    assert!(polysdf(&args).status.success());
    let mut args = vec!["fit", "--in", s(&cloud), "--out", s(&streamed), "--stream", "--batch-size", "16"];
    args.extend(common);
    let o = polysdf(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert_eq!(text.lines().filter(|l| l.starts_with("batch ")).count(), 8);
    assert!(text.contains("mean_update_ms"));
    let (a, b) = (Snapshot::load(&batch).unwrap(), Snapshot::load(&streamed).unwrap());
    let rel = (a.model.weights() - b.model.weights()).norm() / a.model.weights().norm();
    assert!(rel < 1e-6, "{rel}");
    let rel_cov = (a.model.covariance() - b.model.covariance()).norm() / a.model.covariance().norm();
    assert!(rel_cov < 1e-6, "{rel_cov}");
}

#[test]
fn update_in_batches_matches_single_fit() {
    let f = Fixture::new();
    let samples = Sphere::new(vec![1.0, 2.0, 3.0], 0.5).unwrap().sample(150, 5);
    write_point_cloud(&f.path("all.xyz"), &samples, CloudFormat::Xyz).unwrap();
    write_point_cloud(&f.path("a.xyz"), &samples[..40], CloudFormat::Xyz).unwrap();
    write_point_cloud(&f.path("b.xyz"), &samples[40..], CloudFormat::Xyz).unwrap();
    let domain = ["--segments", "3", "--domain", "0.4,1.4,2.4,1.6,2.6,3.6"];
    let run = |args: &[&str]| {
        let mut v = args.to_vec();
        v.extend(domain);
        let o = polysdf(&v);
        assert!(o.status.success(), "{}", stderr(&o));
    };
    run(&["fit", "--in", s(&f.path("all.xyz")), "--out", s(&f.path("one.snap"))]);
    run(&["fit", "--in", s(&f.path("a.xyz")), "--out", s(&f.path("two.snap"))]);
    run(&["update", "--model", s(&f.path("two.snap")), "--in", s(&f.path("b.xyz")), "--batch-size", "7"]);
    let one = Snapshot::load(&f.path("one.snap")).unwrap().model;
    let two = Snapshot::load(&f.path("two.snap")).unwrap().model;
    let rel = |a: &DVector<f64>, b: &DVector<f64>| (a - b).norm() / b.norm();
    assert!(rel(two.weights(), one.weights()) < 1e-6);
    let _: &DMatrix<f64> = two.covariance();
}

#[test]
fn reconstruct_writes_raw_mesh_and_grid() {
    let f = Fixture::new();
    let model = f.fitted();
    let mesh = f.path("m.ply");
    let grid = f.path("g.raw");
    let o = polysdf(&["reconstruct", "--model", s(&model), "--out", s(&mesh), "--grid-out", s(&grid), "--grid-res", "24"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("triangles"));
    let loaded = load_mesh(&mesh, MeshFormat::Ply).unwrap();
    for v in loaded.mesh.vertices() {
        let r = ((v[0] - 1.0).powi(2) + (v[1] - 2.0).powi(2) + (v[2] - 3.0).powi(2)).sqrt();
        assert!((r - 0.5).abs() < 0.05, "{r}");
    }
    let (g, _) = read_grid(&grid).unwrap();
    assert_eq!(g.dims(), &[24, 24, 24]);
    // raw frame: the grid spans the snapshot's domain box
    let frame = Snapshot::load(&model).unwrap().frame;
    let (lo, hi) = (frame.to_raw(&[0.0; 3]), frame.to_raw(&[1.0; 3]));
    for k in 0..3 {
        assert!((g.origin()[k] - lo[k]).abs() < 1e-9 && (g.upper()[k] - hi[k]).abs() < 1e-9);
    }
    assert!(g.interpolate(&[1.0, 2.0, 3.0]).unwrap() < 0.0);
    assert!(g.interpolate(&[1.5, 2.0, 3.0]).unwrap().abs() < 0.02);

    // a nonzero iso in raw units shrinks the surface
    let inner = f.path("inner.obj");
    assert!(polysdf(&["reconstruct", "--model", s(&model), "--out", s(&inner), "--grid-res", "24", "--iso=-0.05"]).status.success());
    let loaded = load_mesh(&inner, MeshFormat::Obj).unwrap();
    let mean_r: f64 = loaded
        .mesh
        .vertices()
        .iter()
        .map(|v| ((v[0] - 1.0).powi(2) + (v[1] - 2.0).powi(2) + (v[2] - 3.0).powi(2)).sqrt())
        .sum::<f64>()
        / loaded.mesh.vertices().len() as f64;
    assert!((0.4..0.49).contains(&mean_r), "{mean_r}");
}

#[test]
fn failed_reconstruct_leaves_no_partial_outputs() {
    let f = Fixture::new();
    let model = f.fitted();
    let mesh = f.path("m.obj");
    let grid = f.path("no/such/dir/g.raw");
    let o = polysdf(&["reconstruct", "--model", s(&model), "--out", s(&mesh), "--grid-out", s(&grid), "--grid-res", "8"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!mesh.exists());
}

#[test]
fn eval_against_mesh_and_sphere() {
    let f = Fixture::new();
    let model = f.fitted();
    let report = f.path("r.json");
    let o = polysdf(&["eval", "--model", s(&model), "--sphere", "1,2,3,0.5", "--eval-points", "400", "--out", s(&report)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let parsed = MetricsReport::from_json(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(parsed.overall.mae.count, 400);
    assert!(stdout(&o).contains("near.mae.mean="));
    assert!(parsed.near.mae.mean < 0.02);

    // the same sphere as a mesh gives similar numbers
    let ico = polysdf::oracle::icosphere([1.0, 2.0, 3.0], 0.5, 4).unwrap();
    let obj = f.path("ico.obj");
    let mut text = String::new();
    for v in ico.vertices() {
        text.push_str(&format!("v {} {} {}\n", v[0], v[1], v[2]));
    }
    for t in ico.faces() {
        text.push_str(&format!("f {} {} {}\n", t[0] + 1, t[1] + 1, t[2] + 1));
    }
    fs::write(&obj, text).unwrap();
    let o = polysdf(&["eval", "--model", s(&model), "--mesh", s(&obj), "--eval-points", "400"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("far.mae.mean="));

    let o = polysdf(&["eval", "--model", s(&model)]);
    assert_eq!(o.status.code(), Some(1));
    let o = polysdf(&["eval", "--model", s(&model), "--sphere", "0,0,0.5"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn two_dimensional_fit_reconstructs_contours() {
    let f = Fixture::new();
    let samples = Sphere::new(vec![0.0, 0.0], 2.0).unwrap().sample(200, 6);
    let cloud = f.path("circle.xyz");
    write_point_cloud(&cloud, &samples, CloudFormat::Xyz).unwrap();
    let model = f.path("c.snap");
    let o = polysdf(&["fit", "--dim", "2", "--in", s(&cloud), "--out", s(&model)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = f.path("c.obj");
    let o = polysdf(&["reconstruct", "--model", s(&model), "--out", s(&out), "--grid-res", "48"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.lines().any(|l| l.starts_with("l ")));
    for l in text.lines().filter(|l| l.starts_with("v ")) {
        let v: Vec<f64> = l.split_whitespace().skip(1).map(|t| t.parse().unwrap()).collect();
        assert!(((v[0].powi(2) + v[1].powi(2)).sqrt() - 2.0).abs() < 0.1);
    }
    let o = polysdf(&["reconstruct", "--model", s(&model), "--out", s(&f.path("c.ply"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulate_writes_artifacts_deterministically() {
    let f = Fixture::new();
    let run = |dir: &Path| {
        let o = polysdf(&["simulate", "--out", s(dir), "--sim-steps", "120", "--snapshot-interval", "50", "--eval-points", "100"]);
        assert!(o.status.success(), "{}", stderr(&o));
        stdout(&o)
    };
    let text = run(&f.path("a"));
    run(&f.path("b"));
    assert!(text.contains("steps=120"));
    assert!(text.contains("true_distance.min_after_100="));
    for name in ["trajectory.txt", "snapshot_000050.snap", "snapshot_000100.snap", "model.snap", "report.json"] {
        assert_eq!(fs::read(f.path("a").join(name)).unwrap(), fs::read(f.path("b").join(name)).unwrap(), "{name}");
    }
    let o = polysdf(&["simulate", "--out", s(&f.path("c")), "--shape", "blob 1 2"]);
    assert_eq!(o.status.code(), Some(1));
}
