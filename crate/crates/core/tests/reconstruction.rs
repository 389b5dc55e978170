//! Grid extraction accuracy and the fit → snapshot → grid → export pipeline.

use polysdf::ingest::{load_mesh, DomainTransform, MeshFormat};
use polysdf::oracle::{GroundTruth, Sphere, TriangleMesh};
use polysdf::recon::export::{read_grid, write_grid, write_mesh, GridDtype};
use polysdf::recon::{eval_grid, extract_level_set, marching_cubes, LevelSet, ScalarGrid};
use polysdf::snapshot::Snapshot;
use polysdf::solver::batch_fit;
use polysdf::{init_spherical_prior, BasisConfig, RegularizerSpec};

fn sphere_grid(n: usize) -> ScalarGrid {
    ScalarGrid::from_fn(vec![n; 3], vec![0.0; 3], vec![1.0; 3], |p| {
        p.iter().map(|x| (x - 0.5).powi(2)).sum::<f64>().sqrt() - 0.3
    })
    .unwrap()
}

/// Two-sided Hausdorff distance between the extracted mesh and the sphere,
/// with the mesh side measured by the triangle-mesh oracle.
fn hausdorff(n: usize, truth: &Sphere) -> f64 {
    let iso = marching_cubes(&sphere_grid(n), 0.0);
    let to_sphere = iso.vertices.iter().map(|v| truth.signed_distance(v).unwrap().0.abs()).fold(0.0, f64::max);
    let mesh = TriangleMesh::new(iso.vertices.clone(), iso.triangles.clone()).unwrap();
    let to_mesh = truth
        .sample(400, 1)
        .iter()
        .map(|s| mesh.signed_distance(&s.position).unwrap().0.abs())
        .fold(0.0, f64::max);
    to_sphere.max(to_mesh)
}

#[test]
fn doubling_resolution_improves_hausdorff_error() {
    let truth = Sphere::new(vec![0.5; 3], 0.3).unwrap();
    let errors: Vec<f64> = [12, 24, 48].iter().map(|&n| hausdorff(n, &truth)).collect();
    for pair in errors.windows(2) {
        assert!(pair[0] / pair[1] >= 1.5, "errors {errors:?}");
    }
}

#[test]
fn fitted_sphere_level_set_within_one_and_a_half_cells() {
    let config = BasisConfig::unit(3, 4, 3).unwrap();
    let truth = Sphere::new(vec![0.5; 3], 0.3).unwrap();
    let prior = init_spherical_prior(&config, &[0.5; 3], 0.25, 100.0).unwrap();
    let model = batch_fit(&truth.sample(800, 2), &RegularizerSpec::defaults_for(&config), &prior).unwrap();
    let grid = eval_grid(&model, &[48]).unwrap();
    let LevelSet::Mesh(mesh) = extract_level_set(&grid, 0.0).unwrap() else { panic!("3D grid gives a mesh") };
    assert!(!mesh.triangles.is_empty());
    assert_eq!(mesh.boundary_edge_count(), 0);
    let cell = grid.cell_size();
    for v in &mesh.vertices {
        assert!(truth.signed_distance(v).unwrap().0.abs() < 1.5 * cell);
        assert!((grid.interpolate(v).unwrap()).abs() < 1e-6);
    }
}

#[test]
fn pipeline_through_files_is_stable() {
    let dir = tempfile::tempdir().unwrap();
    let config = BasisConfig::unit(3, 3, 3).unwrap();
    let truth = Sphere::new(vec![0.5; 3], 0.3).unwrap();
    let prior = init_spherical_prior(&config, &[0.5; 3], 0.3, 100.0).unwrap();
    let model = batch_fit(&truth.sample(200, 3), &RegularizerSpec::defaults_for(&config), &prior).unwrap();

    let snap_path = dir.path().join("m.snap");
    Snapshot::new(model.clone(), DomainTransform::identity(3)).unwrap().save(&snap_path).unwrap();
    let loaded = Snapshot::load(&snap_path).unwrap();
    assert_eq!(loaded.model, model);

    let grid = eval_grid(&loaded.model, &[20]).unwrap();
    assert_eq!(grid, eval_grid(&model, &[20]).unwrap());
    let grid_path = dir.path().join("g.raw");
    write_grid(&grid, &grid_path, GridDtype::Float64).unwrap();
    assert_eq!(read_grid(&grid_path).unwrap().0, grid);

    let mesh = marching_cubes(&grid, 0.0);
    let mesh_path = dir.path().join("m.obj");
    write_mesh(&mesh, &mesh_path, MeshFormat::Obj).unwrap();
    let reloaded = load_mesh(&mesh_path, MeshFormat::Obj).unwrap();
    // a sparse fit may leave open sheets at the domain boundary; reloading keeps the topology
    assert_eq!(reloaded.non_manifold_edges, mesh.boundary_edge_count());
    assert_eq!(reloaded.mesh.faces().len() + reloaded.degenerate_dropped, mesh.triangles.len());
    assert!(!reloaded.mesh.is_empty());
}
