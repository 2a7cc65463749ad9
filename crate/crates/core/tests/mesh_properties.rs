use nsfem::Mesh;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngSeed};

fn config() -> Config {
    Config { cases: 48, rng_seed: RngSeed::Fixed(0x3e5), failure_persistence: None, ..Config::default() }
}

/// The level-2 mesh with interior vertices moved by at most a fifth of the
/// mesh size, which keeps every triangle positively oriented.
fn jittered() -> impl Strategy<Value = Mesh> {
    let base = Mesh::unit_square(2);
    let n = base.num_vertices();
    prop::collection::vec((-0.05f64..0.05, -0.05f64..0.05), n).prop_map(move |shifts| {
        let mut dump = String::new();
        let mut lines = base.to_dump().lines().map(str::to_owned).collect::<Vec<_>>();
        for (i, (dx, dy)) in shifts.iter().enumerate() {
            let v = base.vertices[i];
            let interior = v[0] > 0.0 && v[0] < 1.0 && v[1] > 0.0 && v[1] < 1.0;
            if interior {
                lines[1 + i] = format!("{:.17e} {:.17e}", v[0] + dx, v[1] + dy);
            }
        }
        for l in lines {
            dump.push_str(&l);
            dump.push('\n');
        }
        Mesh::from_dump(&dump).unwrap()
    })
}

fn total_area(m: &Mesh) -> f64 {
    (0..m.num_triangles()).map(|k| m.area(k)).sum()
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn dump_round_trips(mesh in jittered()) {
        let back = Mesh::from_dump(&mesh.to_dump()).unwrap();
        prop_assert_eq!(&back.vertices, &mesh.vertices);
        prop_assert_eq!(&back.triangles, &mesh.triangles);
        prop_assert_eq!(back.edges(), mesh.edges());
    }

    #[test]
    fn red_refinement_splits_each_triangle_into_quarters(mesh in jittered()) {
        let fine = mesh.refine_red();
        prop_assert_eq!(fine.num_triangles(), 4 * mesh.num_triangles());
        prop_assert_eq!(fine.num_vertices(), mesh.num_vertices() + mesh.num_edges());
        // Euler characteristic of a disc
        prop_assert_eq!(fine.num_vertices() + fine.num_triangles(), fine.num_edges() + 1);
        prop_assert!((total_area(&fine) - 1.0).abs() < 1e-13);
        for (k, parent) in fine.parents.iter().enumerate() {
            let parent = parent.unwrap();
            prop_assert!((4.0 * fine.area(k) - mesh.area(parent)).abs() < 1e-14);
        }
        // children are similar to their parent
        let (c0, c1) = (mesh.chunkiness().unwrap(), fine.chunkiness().unwrap());
        prop_assert!((c0 - c1).abs() < 1e-9 * c0);
    }

    #[test]
    fn every_interior_edge_has_two_triangles(mesh in jittered()) {
        let fine = mesh.refine_red();
        let boundary = fine.edges().iter().filter(|e| e.is_boundary()).count();
        prop_assert_eq!(boundary, 32);
        let mut uses = vec![0usize; fine.num_edges()];
        for tri in &fine.topology.triangle_edges {
            for &e in tri {
                uses[e] += 1;
            }
        }
        for (e, edge) in fine.edges().iter().enumerate() {
            prop_assert_eq!(uses[e], if edge.is_boundary() { 1 } else { 2 });
        }
    }

    #[test]
    fn arbitrary_text_never_panics(text in "[0-9 .e\\-\\n]{0,200}") {
        let _ = Mesh::from_dump(&text);
    }
}
