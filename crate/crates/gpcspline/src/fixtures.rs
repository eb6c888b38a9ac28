//! Bundled test solids, sample fields and lattices.

use crate::fit::{FitError, SampleSet};
use crate::geom::Vec3;
use crate::gpc::GpcGraph;
use crate::lattice::{Lattice, LatticeError};
use crate::merge::{junction_solid, MergeError, MergeKind};
use crate::solid::{SolidError, SplineSolid};
use crate::tmesh::Face;

/// Mild smooth bend applied to layout coordinates so fixtures are not
/// affine images of their domains.
pub fn bend(x: Vec3) -> Vec<f64> {
    vec![
        x[0] + 0.05 * x[1] * x[1],
        x[1] + 0.04 * x[0] * x[2],
        x[2] + 0.03 * x[0] * x[0],
    ]
}

fn bent(mut s: SplineSolid) -> SplineSolid {
    let layout = s.graph.layout();
    s.set_positions(|c, h| bend(layout[c].apply(h)));
    s
}

/// Single cuboid of extents `e` with `n` cells per axis, identity geometry.
pub fn cube(e: f64, n: usize) -> Result<SplineSolid, SolidError> {
    let mut g = GpcGraph::new();
    g.add_cuboid([e; 3])?;
    SplineSolid::standard(g, &[[n; 3]])
}

/// Two 2×2×2 cuboids glued along +U/−U, bent.
pub fn two_cube_pair() -> Result<SplineSolid, SolidError> {
    let mut g = GpcGraph::new();
    let a = g.add_cuboid([2.0; 3])?;
    let b = g.add_cuboid([2.0; 3])?;
    g.glue((a, Face { axis: 0, max: true }), (b, Face { axis: 0, max: false }), 0)?;
    Ok(bent(SplineSolid::standard(g, &[[2, 2, 2]])?))
}

/// Three unit-cell cuboids around a concave Type-1 corner, bent.
pub fn type1_junction() -> Result<(SplineSolid, Vec<usize>), MergeError> {
    let (s, ids, _) = junction_solid(MergeKind::Type1, 3)?;
    Ok((bent(s), ids))
}

/// One cuboid whose ±U faces are glued to each other.
pub fn torus_cuboid() -> Result<SplineSolid, SolidError> {
    let mut g = GpcGraph::new();
    let c = g.add_cuboid([4.0, 1.0, 1.0])?;
    g.glue((c, Face { axis: 0, max: true }), (c, Face { axis: 0, max: false }), 0)?;
    Ok(bent(SplineSolid::standard(g, &[[4, 1, 1]])?))
}

/// Every bundled solid by name.
pub fn solids() -> Result<Vec<(&'static str, SplineSolid)>, MergeError> {
    Ok(vec![
        ("cube", cube(4.0, 2)?),
        ("two_cube", two_cube_pair()?),
        ("type1", type1_junction()?.0),
        ("torus", torus_cuboid()?),
    ])
}

/// Low-frequency trigonometric blend around the identity.
pub fn smooth_field(h: Vec3) -> Vec<f64> {
    vec![
        h[0] + 0.3 * (1.5 * h[1]).sin(),
        h[1] + 0.2 * (1.6 * h[2]).cos() * h[0],
        h[2] + 0.25 * (1.7 * h[0] + 0.5 * h[1]).sin(),
    ]
}

pub const BUMP_CENTER: Vec3 = [1.0, 1.0, 1.0];
pub const BUMP_RADIUS: f64 = 0.6;

/// Identity plus a compact smooth bump.
pub fn bump_field(h: Vec3) -> Vec<f64> {
    let r2: f64 = (0..3).map(|a| (h[a] - BUMP_CENTER[a]).powi(2)).sum::<f64>() / (BUMP_RADIUS * BUMP_RADIUS);
    let b = if r2 < 1.0 { (1.0 - r2).powi(4) } else { 0.0 };
    vec![h[0] + 0.3 * b, h[1], h[2] + 0.2 * b]
}

/// Trivariate cubic that degree-three splines reproduce exactly.
pub fn cubic_field(h: Vec3) -> Vec<f64> {
    let [u, v, w] = h;
    vec![
        u + 0.01 * u * u * v - 0.02 * w * w * w,
        v + 0.03 * u * v * w,
        w - 0.01 * v * v * v + 0.02 * u * w,
    ]
}

pub fn field_samples(solid: &SplineSolid, n: usize, f: fn(Vec3) -> Vec<f64>) -> Result<SampleSet, FitError> {
    SampleSet::lattice(solid, n, |_, h| f(h))
}

/// Unit-cube surface nodes with the interior at the centroid.
pub fn cube_boundary(n: usize) -> Result<Lattice, LatticeError> {
    let s = (n - 1).max(1) as f64;
    Lattice::with_boundary([n; 3], |t| t.iter().map(|&i| i as f64 / s).collect())
}

/// Sheared unit-cube boundary.
pub fn sheared_boundary(n: usize) -> Result<Lattice, LatticeError> {
    let s = (n - 1).max(1) as f64;
    Lattice::with_boundary([n; 3], |t| {
        let [x, y, z] = [t[0] as f64 / s, t[1] as f64 / s, t[2] as f64 / s];
        shear([x, y, z]).to_vec()
    })
}

pub fn shear(x: Vec3) -> Vec3 {
    [x[0] + 0.5 * x[1] + 0.2 * x[2], 1.5 * x[1] - 0.3 * x[2], 0.8 * x[2] + 0.1 * x[0]]
}

/// Quarter of a thick tube: the `i` axis runs along the bend.
pub fn bent_tube_boundary(n: usize) -> Result<Lattice, LatticeError> {
    let s = (n - 1).max(1) as f64;
    Lattice::with_boundary([n; 3], |t| {
        let theta = std::f64::consts::FRAC_PI_2 * t[0] as f64 / s;
        let r = 1.0 + t[1] as f64 / s;
        let z = t[2] as f64 / s;
        vec![r * theta.cos(), r * theta.sin(), z]
    })
}

pub fn lattices() -> Result<Vec<(&'static str, Lattice)>, LatticeError> {
    Ok(vec![
        ("cube", cube_boundary(9)?),
        ("sheared", sheared_boundary(9)?),
        ("tube", bent_tube_boundary(9)?),
    ])
}
