use gpcspline::fixtures;
use gpcspline::gpc::*;
use gpcspline::merge::{merge_two_cube, merge_type1};
use gpcspline::solid::SplineSolid;
use gpcspline::tmesh::Face;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;

const PU: Face = Face { axis: 0, max: true };
const MU: Face = Face { axis: 0, max: false };
const PV: Face = Face { axis: 1, max: true };
const MV: Face = Face { axis: 1, max: false };

fn transforms() -> impl Strategy<Value = Transform> {
    (0usize..6, 0usize..6, 0u8..4, prop::array::uniform3(-3.0f64..3.0)).prop_map(|(a, b, n, off)| {
        let m = glue_rotation(Face::ALL[a], Face::ALL[b], n);
        Transform::from_matrix(m, off).unwrap()
    })
}

fn point() -> impl Strategy<Value = [f64; 3]> {
    prop::array::uniform3(-5.0f64..5.0)
}

proptest! {
    #[test]
    fn inverse_undoes_transform(t in transforms(), x in point()) {
        let y = t.inverse().apply(t.apply(x));
        for a in 0..3 {
            prop_assert!((y[a] - x[a]).abs() <= 1e-14);
        }
    }

    #[test]
    fn transforms_are_isometries(t in transforms(), x in point(), y in point()) {
        let d0 = gpcspline::geom::dist(&x, &y);
        let d1 = gpcspline::geom::dist(&t.apply(x), &t.apply(y));
        prop_assert!((d0 - d1).abs() <= 1e-12);
    }

    #[test]
    fn composition_matches_sequential_application(s in transforms(), t in transforms(), x in point()) {
        let a = s.compose(&t).apply(x);
        let b = s.apply(t.apply(x));
        for i in 0..3 {
            prop_assert!((a[i] - b[i]).abs() <= 1e-13);
        }
    }
}

#[test]
fn identity_transition() {
    let s = fixtures::two_cube_pair().unwrap();
    assert_eq!(s.graph.transition(1, 1, [0.2, 0.4, 0.6]).unwrap(), [0.2, 0.4, 0.6]);
}

#[test]
fn aligned_neighbours_translate() {
    let s = fixtures::two_cube_pair().unwrap();
    let y = s.graph.transition(1, 0, [0.5, 1.0, 1.5]).unwrap();
    assert_eq!(y, [2.5, 1.0, 1.5]);
}

#[test]
fn two_quarter_turns_compose_to_a_half_turn() {
    // Chain a -> b -> c sharing V faces, each glued with a quarter turn
    // about the V axis.
    let mut g = GpcGraph::new();
    let a = g.add_cuboid([1.0; 3]).unwrap();
    let b = g.add_cuboid([1.0; 3]).unwrap();
    let c = g.add_cuboid([1.0; 3]).unwrap();
    let e1 = g.glue((a, PV), (b, MV), 1).unwrap();
    let e2 = g.glue((b, PV), (c, MV), 1).unwrap();
    let composed = g.transform_between(c, a).unwrap();
    let m = composed.matrix();
    // A half turn about V negates U and W.
    assert_eq!(m[1][1], 1);
    assert_eq!(m[0][0] + m[2][2], -2);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..10 {
        let x: [f64; 3] = std::array::from_fn(|_| rng.gen_range(0.0..1.0));
        let step = g.edges()[e1].b_to_a.apply(g.edges()[e2].b_to_a.apply(x));
        let direct = g.transition(c, a, x).unwrap();
        for i in 0..3 {
            assert!((step[i] - direct[i]).abs() < 1e-14);
        }
    }
}

#[test]
fn glue_errors() {
    let mut g = GpcGraph::new();
    let a = g.add_cuboid([1.0, 2.0, 1.0]).unwrap();
    let b = g.add_cuboid([1.0; 3]).unwrap();
    assert!(matches!(g.glue((a, PU), (b, MU), 0), Err(GpcError::DimensionMismatch(..))));
    assert!(matches!(g.glue((b, PU), (b, PU), 0), Err(GpcError::SameFace)));
    assert!(matches!(g.glue((a, PU), (b, MU), 4), Err(GpcError::BadRotation(4))));
    assert!(matches!(g.add_cuboid([1.0, 0.0, 1.0]), Err(GpcError::BadExtents(_))));
    assert!(matches!(g.transition(a, b, [0.0; 3]), Err(GpcError::NoPath(..))));
    assert!(matches!(g.cuboid(7), Err(GpcError::UnknownCuboid(7))));
}

#[test]
fn self_glued_cuboid_is_a_single_node_loop() {
    let s = fixtures::torus_cuboid().unwrap();
    assert_eq!(s.graph.cuboids().len(), 1);
    assert!(s.graph.edges()[0].is_self_loop());
    let mut g = GpcGraph::new();
    let c = g.add_cuboid([1.0; 3]).unwrap();
    g.glue((c, PU), (c, MU), 1).unwrap();
    assert_eq!(g.edges().len(), 1);
}

#[test]
fn shortest_path_prefers_lowest_edge() {
    // A square of four cuboids: 0-1-2 and 0-3-2 are both two hops.
    let mut g = GpcGraph::new();
    let ids: Vec<usize> = (0..4).map(|_| g.add_cuboid([1.0; 3]).unwrap()).collect();
    g.glue((ids[0], PU), (ids[1], MU), 0).unwrap();
    g.glue((ids[1], PV), (ids[2], MV), 0).unwrap();
    g.glue((ids[0], PV), (ids[3], MV), 0).unwrap();
    g.glue((ids[3], PU), (ids[2], MU), 0).unwrap();
    let p = g.path(ids[0], ids[2]).unwrap();
    assert_eq!(p.len(), 2);
    assert_eq!(p[0].0, 0);
}

fn contributors(s: &SplineSolid, cuboid: usize, h: [f64; 3]) -> BTreeSet<usize> {
    let (ci, row) = s.basis_row(cuboid, h).unwrap();
    let pts = s.charts()[ci].mesh.points();
    row.iter().map(|(i, _)| pts[*i].cuboid).collect()
}

fn check_superset(s: &SplineSolid, n: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut widest = 0;
    for _ in 0..n {
        let c = &s.graph.cuboids()[rng.gen_range(0..s.graph.cuboids().len())];
        let h: [f64; 3] = std::array::from_fn(|a| rng.gen_range(0.0..c.extents[a]));
        let support: BTreeSet<usize> = s.support_cuboids(c.id, h).unwrap().into_iter().map(|(id, _)| id).collect();
        let exact = contributors(s, c.id, h);
        assert!(exact.is_subset(&support), "at {h:?} in {}: {exact:?} not in {support:?}", c.id);
        widest = widest.max(support.len());
    }
    widest
}

#[test]
fn support_cuboids_cover_every_contributor() {
    let pair = fixtures::two_cube_pair().unwrap();
    let (merged, _) = merge_two_cube(&pair, 0).unwrap();
    assert_eq!(check_superset(&merged, 400, 2), 2);
    let (j, ids) = fixtures::type1_junction().unwrap();
    let (merged, _) = merge_type1(&j, [ids[0], ids[1], ids[2]]).unwrap();
    assert_eq!(check_superset(&merged, 400, 3), 3);
}

#[test]
fn support_near_and_far_from_faces() {
    let mut g = GpcGraph::new();
    let a = g.add_cuboid([8.0, 2.0, 2.0]).unwrap();
    let b = g.add_cuboid([8.0, 2.0, 2.0]).unwrap();
    g.glue((a, PU), (b, MU), 0).unwrap();
    let long = SplineSolid::standard(g, &[[8, 2, 2]]).unwrap();
    assert_eq!(long.support_cuboids(0, [1.0, 1.0, 1.0]).unwrap().len(), 1);
    assert_eq!(long.support_cuboids(0, [6.5, 1.0, 1.0]).unwrap().len(), 2);
    let s = fixtures::two_cube_pair().unwrap();
    let on_face = s.support_cuboids(0, [2.0, 1.0, 1.0]).unwrap();
    let ids: Vec<usize> = on_face.iter().map(|x| x.0).collect();
    assert_eq!(ids, vec![0, 1]);
    assert_eq!(on_face[1].1, [0.0, 1.0, 1.0]);
}
