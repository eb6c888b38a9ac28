//! Generalized poly-cube domains: cuboids glued face to face, and the
//! transition maps carrying parameters between glued cuboids.

use crate::geom::{Aabb, Vec3};
use crate::tmesh::Face;
use std::collections::VecDeque;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GpcError {
    #[error("cuboid extents must be positive and finite, got {0:?}")]
    BadExtents([f64; 3]),
    #[error("unknown cuboid {0}")]
    UnknownCuboid(usize),
    #[error("face {1} of cuboid {0} is already glued")]
    Occupied(usize, &'static str),
    #[error("glued faces differ in size: {0:?} vs {1:?}")]
    DimensionMismatch([f64; 2], [f64; 2]),
    #[error("a face cannot be glued to itself")]
    SameFace,
    #[error("rotation must be 0..=3, got {0}")]
    BadRotation(u8),
    #[error("no path from cuboid {0} to cuboid {1}")]
    NoPath(usize, usize),
    #[error("transform is not a signed permutation")]
    NotPermutation,
}

/// Isometry `y[i] = sign[i] * x[perm[i]] + offset[i]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transform {
    pub perm: [usize; 3],
    pub sign: [f64; 3],
    pub offset: Vec3,
}

impl Default for Transform {
    fn default() -> Self {
        Self::identity()
    }
}

impl Transform {
    pub fn identity() -> Self {
        Self {
            perm: [0, 1, 2],
            sign: [1.0; 3],
            offset: [0.0; 3],
        }
    }

    pub fn translation(offset: Vec3) -> Self {
        Self {
            offset,
            ..Self::identity()
        }
    }

    /// From an integer rotation matrix with one nonzero entry per row.
    pub fn from_matrix(m: [[i32; 3]; 3], offset: Vec3) -> Result<Self, GpcError> {
        let mut perm = [0; 3];
        let mut sign = [0.0; 3];
        let mut seen = [false; 3];
        for i in 0..3 {
            let nz: Vec<usize> = (0..3).filter(|&j| m[i][j] != 0).collect();
            if nz.len() != 1 || m[i][nz[0]].abs() != 1 || seen[nz[0]] {
                return Err(GpcError::NotPermutation);
            }
            seen[nz[0]] = true;
            perm[i] = nz[0];
            sign[i] = m[i][nz[0]] as f64;
        }
        Ok(Self { perm, sign, offset })
    }

    pub fn matrix(&self) -> [[i32; 3]; 3] {
        let mut m = [[0; 3]; 3];
        for i in 0..3 {
            m[i][self.perm[i]] = self.sign[i] as i32;
        }
        m
    }

    pub fn apply(&self, x: Vec3) -> Vec3 {
        std::array::from_fn(|i| self.sign[i] * x[self.perm[i]] + self.offset[i])
    }

    /// Direction part only.
    pub fn apply_vector(&self, x: Vec3) -> Vec3 {
        std::array::from_fn(|i| self.sign[i] * x[self.perm[i]])
    }

    pub fn inverse(&self) -> Self {
        let mut perm = [0; 3];
        let mut sign = [0.0; 3];
        for i in 0..3 {
            perm[self.perm[i]] = i;
            sign[self.perm[i]] = self.sign[i];
        }
        let mut t = Self {
            perm,
            sign,
            offset: [0.0; 3],
        };
        let o = t.apply_vector(self.offset);
        t.offset = [-o[0], -o[1], -o[2]];
        t
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Transform) -> Self {
        let perm = std::array::from_fn(|i| other.perm[self.perm[i]]);
        let sign = std::array::from_fn(|i| self.sign[i] * other.sign[self.perm[i]]);
        let o = self.apply(other.offset);
        Self {
            perm,
            sign,
            offset: o,
        }
    }

    pub fn apply_box(&self, b: &Aabb) -> Aabb {
        let p = self.apply(b.lo);
        let q = self.apply(b.hi);
        Aabb::new(
            std::array::from_fn(|i| p[i].min(q[i])),
            std::array::from_fn(|i| p[i].max(q[i])),
        )
    }

    /// Chart axis that local axis `a` maps to, with its sign.
    pub fn image_axis(&self, a: usize) -> (usize, f64) {
        let i = (0..3).find(|&i| self.perm[i] == a).unwrap();
        (i, self.sign[i])
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::identity()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cuboid {
    pub id: usize,
    pub extents: [f64; 3],
}

impl Cuboid {
    pub fn bounds(&self) -> Aabb {
        Aabb::new([0.0; 3], self.extents)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlueEdge {
    pub id: usize,
    pub a: (usize, Face),
    pub b: (usize, Face),
    pub rotation: u8,
    /// Maps coordinates of cuboid `b` into the frame of cuboid `a`.
    pub b_to_a: Transform,
}

impl GlueEdge {
    pub fn is_self_loop(&self) -> bool {
        self.a.0 == self.b.0
    }

    /// Transform from `from` to the other endpoint, if `from` is incident.
    pub fn hop(&self, from: usize) -> Option<(usize, Transform)> {
        if self.b.0 == from {
            Some((self.a.0, self.b_to_a))
        } else if self.a.0 == from {
            Some((self.b.0, self.b_to_a.inverse()))
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GpcGraph {
    cuboids: Vec<Cuboid>,
    edges: Vec<GlueEdge>,
}

fn face_dims(c: &Cuboid, f: Face) -> [f64; 2] {
    let o = crate::geom::others(f.axis);
    [c.extents[o[0]], c.extents[o[1]]]
}

fn face_center(c: &Cuboid, f: Face) -> Vec3 {
    let mut x: Vec3 = std::array::from_fn(|i| 0.5 * c.extents[i]);
    x[f.axis] = if f.max { c.extents[f.axis] } else { 0.0 };
    x
}

/// Rotation taking face `fb` of one cuboid onto face `fa` of another, with
/// the outward normals opposed, followed by `n` quarter turns about the
/// normal of `fa`.
pub fn glue_rotation(fa: Face, fb: Face, n: u8) -> [[i32; 3]; 3] {
    let (al, be) = (fa.axis, fb.axis);
    let sa = if fa.max { 1 } else { -1 };
    let sb = if fb.max { 1 } else { -1 };
    let s = -sa * sb;
    let mut r = [[0i32; 3]; 3];
    // Columns are images of the basis vectors of b.
    r[al][be] = s;
    r[(al + 1) % 3][(be + 1) % 3] = 1;
    r[(al + 2) % 3][(be + 2) % 3] = s;
    let mut q = [[0i32; 3]; 3];
    q[al][al] = 1;
    q[(al + 2) % 3][(al + 1) % 3] = 1;
    q[(al + 1) % 3][(al + 2) % 3] = -1;
    for _ in 0..n % 4 {
        r = matmul(&q, &r);
    }
    r
}

fn matmul(a: &[[i32; 3]; 3], b: &[[i32; 3]; 3]) -> [[i32; 3]; 3] {
    std::array::from_fn(|i| std::array::from_fn(|j| (0..3).map(|k| a[i][k] * b[k][j]).sum()))
}

impl GpcGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_cuboid(&mut self, extents: [f64; 3]) -> Result<usize, GpcError> {
        if extents.iter().any(|e| !e.is_finite() || *e <= 0.0) {
            return Err(GpcError::BadExtents(extents));
        }
        let id = self.cuboids.len();
        self.cuboids.push(Cuboid { id, extents });
        Ok(id)
    }

    pub fn cuboids(&self) -> &[Cuboid] {
        &self.cuboids
    }

    pub fn cuboid(&self, id: usize) -> Result<&Cuboid, GpcError> {
        self.cuboids.get(id).ok_or(GpcError::UnknownCuboid(id))
    }

    pub fn edges(&self) -> &[GlueEdge] {
        &self.edges
    }

    pub fn edge_at(&self, cuboid: usize, face: Face) -> Option<&GlueEdge> {
        self.edges
            .iter()
            .find(|e| e.a == (cuboid, face) || e.b == (cuboid, face))
    }

    /// Glues face `fb` of cuboid `b` onto face `fa` of cuboid `a`.
    pub fn glue(&mut self, a: (usize, Face), b: (usize, Face), rotation: u8) -> Result<usize, GpcError> {
        if rotation > 3 {
            return Err(GpcError::BadRotation(rotation));
        }
        let ca = self.cuboid(a.0)?.clone();
        let cb = self.cuboid(b.0)?.clone();
        if a == b {
            return Err(GpcError::SameFace);
        }
        for side in [a, b] {
            if self.edge_at(side.0, side.1).is_some() {
                return Err(GpcError::Occupied(side.0, side.1.name()));
            }
        }
        let m = glue_rotation(a.1, b.1, rotation);
        let rot = Transform::from_matrix(m, [0.0; 3])?;
        let img = rot.apply_vector(cb.extents).map(f64::abs);
        let o = crate::geom::others(a.1.axis);
        let mapped = [img[o[0]], img[o[1]]];
        let want = face_dims(&ca, a.1);
        let tol = 1e-12 * want[0].max(want[1]).max(1.0);
        if (0..2).any(|j| (mapped[j] - want[j]).abs() > tol) {
            return Err(GpcError::DimensionMismatch(want, face_dims(&cb, b.1)));
        }
        let c_a = face_center(&ca, a.1);
        let rc_b = rot.apply_vector(face_center(&cb, b.1));
        let offset = std::array::from_fn(|i| c_a[i] - rc_b[i]);
        let id = self.edges.len();
        self.edges.push(GlueEdge {
            id,
            a,
            b,
            rotation,
            b_to_a: Transform { offset, ..rot },
        });
        Ok(id)
    }

    /// Breadth-first shortest path as a list of (edge id, next cuboid);
    /// edges are scanned in increasing id order.
    pub fn path(&self, from: usize, to: usize) -> Result<Vec<(usize, usize)>, GpcError> {
        self.cuboid(from)?;
        self.cuboid(to)?;
        let n = self.cuboids.len();
        let mut prev: Vec<Option<(usize, usize)>> = vec![None; n];
        let mut seen = vec![false; n];
        seen[from] = true;
        let mut queue = VecDeque::from([from]);
        while let Some(u) = queue.pop_front() {
            if u == to {
                break;
            }
            for e in self.edges.iter().filter(|e| !e.is_self_loop()) {
                if let Some((v, _)) = e.hop(u) {
                    if !seen[v] {
                        seen[v] = true;
                        prev[v] = Some((e.id, u));
                        queue.push_back(v);
                    }
                }
            }
        }
        if !seen[to] {
            return Err(GpcError::NoPath(from, to));
        }
        let mut out = Vec::new();
        let mut v = to;
        while v != from {
            let (e, u) = prev[v].unwrap();
            out.push((e, v));
            v = u;
        }
        out.reverse();
        Ok(out)
    }

    /// Map taking coordinates of `from` into the frame of `to`.
    pub fn transform_between(&self, from: usize, to: usize) -> Result<Transform, GpcError> {
        let mut t = Transform::identity();
        let mut at = from;
        for (e, next) in self.path(from, to)? {
            let (v, hop) = self.edges[e].hop(at).unwrap();
            debug_assert_eq!(v, next);
            t = hop.compose(&t);
            at = v;
        }
        Ok(t)
    }

    pub fn transition(&self, from: usize, to: usize, h: Vec3) -> Result<Vec3, GpcError> {
        Ok(self.transform_between(from, to)?.apply(h))
    }

    /// Home cuboid plus every cuboid reached by crossing glued faces that
    /// the (mapped) point lies within `reach(cuboid, face)` of, with `h`
    /// mapped into each. Crossings chain, so cuboids meeting only along a
    /// junction edge are found through their common neighbour.
    pub fn support_cuboids_with(
        &self,
        home: usize,
        h: Vec3,
        reach: impl Fn(usize, Face) -> f64,
    ) -> Result<Vec<(usize, Vec3)>, GpcError> {
        self.cuboid(home)?;
        let mut out = vec![(home, h)];
        let mut queue = VecDeque::from([(home, h)]);
        while let Some((cur, x)) = queue.pop_front() {
            let c = &self.cuboids[cur];
            let tol = 1e-12 * c.extents.iter().fold(1.0f64, |m, &e| m.max(e));
            for e in &self.edges {
                for (side, other, t) in [(e.a, e.b.0, e.b_to_a.inverse()), (e.b, e.a.0, e.b_to_a)] {
                    if side.0 != cur || out.iter().any(|(id, _)| *id == other) {
                        continue;
                    }
                    let f = side.1;
                    let plane = if f.max { c.extents[f.axis] } else { 0.0 };
                    if (x[f.axis] - plane).abs() > reach(cur, f) + tol {
                        continue;
                    }
                    // The tangential coordinates must also be near the face.
                    let o = crate::geom::others(f.axis);
                    let r = reach(cur, f);
                    if o.iter().any(|&i| x[i] < -r - tol || x[i] > c.extents[i] + r + tol) {
                        continue;
                    }
                    let y = t.apply(x);
                    out.push((other, y));
                    queue.push_back((other, y));
                }
            }
        }
        Ok(out)
    }

    /// Component layout: a transform per cuboid into the frame of the lowest
    /// cuboid id it is connected to.
    pub fn layout(&self) -> Vec<Transform> {
        (0..self.cuboids.len())
            .map(|c| {
                (0..=c)
                    .find_map(|root| self.transform_between(c, root).ok())
                    .unwrap_or_default()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const PU: Face = Face { axis: 0, max: true };
    const MU: Face = Face { axis: 0, max: false };

    #[test]
    fn aligned_glue_is_translation() {
        let mut g = GpcGraph::new();
        let a = g.add_cuboid([1.0, 1.0, 1.0]).unwrap();
        let b = g.add_cuboid([1.0, 1.0, 1.0]).unwrap();
        g.glue((a, PU), (b, MU), 0).unwrap();
        let t = g.transform_between(b, a).unwrap();
        assert_eq!(t, Transform::translation([1.0, 0.0, 0.0]));
        assert_eq!(g.transition(a, a, [0.3, 0.2, 0.1]).unwrap(), [0.3, 0.2, 0.1]);
    }

    #[test]
    fn size_mismatch_and_occupancy() {
        let mut g = GpcGraph::new();
        let a = g.add_cuboid([1.0, 2.0, 1.0]).unwrap();
        let b = g.add_cuboid([1.0, 1.0, 1.0]).unwrap();
        assert!(matches!(g.glue((a, PU), (b, MU), 0), Err(GpcError::DimensionMismatch(..))));
        let c = g.add_cuboid([1.0, 2.0, 1.0]).unwrap();
        g.glue((a, PU), (c, MU), 0).unwrap();
        assert!(matches!(g.glue((a, PU), (b, MU), 0), Err(GpcError::Occupied(..))));
    }

    #[test]
    fn self_loop_allowed() {
        let mut g = GpcGraph::new();
        let a = g.add_cuboid([1.0, 1.0, 1.0]).unwrap();
        g.glue((a, PU), (a, MU), 2).unwrap();
        assert_eq!(g.edges().len(), 1);
        assert!(g.path(a, a).unwrap().is_empty());
    }

    #[test]
    fn glue_maps_face_onto_face_for_all_orientations() {
        for fa in Face::ALL {
            for fb in Face::ALL {
                for n in 0..4 {
                    let mut g = GpcGraph::new();
                    let a = g.add_cuboid([2.0, 2.0, 2.0]).unwrap();
                    let b = g.add_cuboid([2.0, 2.0, 2.0]).unwrap();
                    let e = g.glue((a, fa), (b, fb), n).unwrap();
                    let t = g.edges()[e].b_to_a;
                    let m = t.matrix();
                    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
                    assert_eq!(det, 1);
                    let mut p = [0.5, 1.5, 0.25];
                    p[fb.axis] = if fb.max { 2.0 } else { 0.0 };
                    let q = t.apply(p);
                    let plane = if fa.max { 2.0 } else { 0.0 };
                    assert!((q[fa.axis] - plane).abs() < 1e-14);
                    // The image of b lies on the far side of a's face.
                    let mut inside = [1.0; 3];
                    inside[fb.axis] = if fb.max { 1.5 } else { 0.5 };
                    let qi = t.apply(inside);
                    assert!(if fa.max { qi[fa.axis] > 2.0 } else { qi[fa.axis] < 0.0 });
                }
            }
        }
    }
}
