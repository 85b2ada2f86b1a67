mod common;

use common::*;

#[test]
fn oracle_meshes_are_small() {
    for (name, mesh) in oracle_meshes() {
        assert!(mesh.num_elements() <= 64, "{name}");
    }
}

#[test]
fn oracle_edges_match_mesh_topology() {
    for (name, mesh) in oracle_meshes() {
        let edges = oracle_edges(mesh.vertices(), mesh.triangles());
        assert_eq!(edges.len(), mesh.num_edges(), "{name}");
        let boundary = edges.iter().filter(|e| e.minus.is_none()).count();
        assert_eq!(boundary, mesh.num_boundary_edges(), "{name}");
    }
}

#[test]
fn oracle_mass_inverse_is_inverse() {
    let (_, mesh) = oracle_meshes().remove(0);
    let m = dense_mass(mesh.vertices(), mesh.triangles());
    let id = matmul(&m, &invert(&m));
    for (i, row) in id.iter().enumerate() {
        for (j, &x) in row.iter().enumerate() {
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((x - want).abs() < 1e-12);
        }
    }
}

#[test]
fn sparse_operators_match_dense_oracle() {
    let (worst, case) = oracle_discrepancy();
    assert!(worst <= 1e-12, "{case}: {worst:e}");
}
