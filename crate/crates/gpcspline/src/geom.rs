//! Small axis-aligned geometry helpers shared by the mesh and domain code.

pub type Vec3 = [f64; 3];

/// The two axes orthogonal to `axis`, in increasing order.
pub fn others(axis: usize) -> [usize; 2] {
    match axis {
        0 => [1, 2],
        1 => [0, 2],
        _ => [0, 1],
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub lo: Vec3,
    pub hi: Vec3,
}

impl Aabb {
    pub fn new(lo: Vec3, hi: Vec3) -> Self {
        Self { lo, hi }
    }

    pub fn extent(&self) -> Vec3 {
        [
            self.hi[0] - self.lo[0],
            self.hi[1] - self.lo[1],
            self.hi[2] - self.lo[2],
        ]
    }

    pub fn volume(&self) -> f64 {
        let e = self.extent();
        e[0] * e[1] * e[2]
    }

    pub fn diagonal(&self) -> f64 {
        let e = self.extent();
        (e[0] * e[0] + e[1] * e[1] + e[2] * e[2]).sqrt()
    }

    pub fn center(&self) -> Vec3 {
        [
            0.5 * (self.lo[0] + self.hi[0]),
            0.5 * (self.lo[1] + self.hi[1]),
            0.5 * (self.lo[2] + self.hi[2]),
        ]
    }

    pub fn contains(&self, p: Vec3, eps: f64) -> bool {
        (0..3).all(|i| p[i] >= self.lo[i] - eps && p[i] <= self.hi[i] + eps)
    }

    /// Closed containment of the projection onto the axes other than `axis`.
    pub fn touches_line(&self, axis: usize, p: Vec3, eps: f64) -> bool {
        others(axis)
            .iter()
            .all(|&i| p[i] >= self.lo[i] - eps && p[i] <= self.hi[i] + eps)
    }

    /// True when the interiors intersect with positive volume.
    pub fn overlaps(&self, other: &Aabb, eps: f64) -> bool {
        (0..3).all(|i| self.lo[i] < other.hi[i] - eps && other.lo[i] < self.hi[i] - eps)
    }

    pub fn intersection(&self, other: &Aabb) -> Option<Aabb> {
        let mut lo = [0.0; 3];
        let mut hi = [0.0; 3];
        for i in 0..3 {
            lo[i] = self.lo[i].max(other.lo[i]);
            hi[i] = self.hi[i].min(other.hi[i]);
            if lo[i] > hi[i] {
                return None;
            }
        }
        Some(Aabb { lo, hi })
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        let mut out = *self;
        for i in 0..3 {
            out.lo[i] = out.lo[i].min(other.lo[i]);
            out.hi[i] = out.hi[i].max(other.hi[i]);
        }
        out
    }

    /// Eight children from a midpoint split on every axis.
    pub fn octants(&self) -> [Aabb; 8] {
        let m = self.center();
        std::array::from_fn(|k| {
            let mut lo = self.lo;
            let mut hi = self.hi;
            for i in 0..3 {
                if k >> i & 1 == 0 {
                    hi[i] = m[i];
                } else {
                    lo[i] = m[i];
                }
            }
            Aabb { lo, hi }
        })
    }

    pub fn split_at(&self, axis: usize, k: f64) -> (Aabb, Aabb) {
        let mut a = *self;
        let mut b = *self;
        a.hi[axis] = k;
        b.lo[axis] = k;
        (a, b)
    }
}

/// An axis-aligned rectangle lying in the plane `x[axis] = at`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneRect {
    pub axis: usize,
    pub at: f64,
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

impl PlaneRect {
    /// Face of `b` orthogonal to `axis` on the low (`max == false`) or high side.
    pub fn face_of(b: &Aabb, axis: usize, max: bool) -> Self {
        let o = others(axis);
        PlaneRect {
            axis,
            at: if max { b.hi[axis] } else { b.lo[axis] },
            lo: [b.lo[o[0]], b.lo[o[1]]],
            hi: [b.hi[o[0]], b.hi[o[1]]],
        }
    }

    pub fn touches(&self, p: Vec3, eps: f64) -> bool {
        let o = others(self.axis);
        (0..2).all(|j| p[o[j]] >= self.lo[j] - eps && p[o[j]] <= self.hi[j] + eps)
    }

    pub fn contains_point(&self, p: Vec3, eps: f64) -> bool {
        (p[self.axis] - self.at).abs() <= eps && self.touches(p, eps)
    }

    pub fn same_as(&self, other: &PlaneRect, eps: f64) -> bool {
        self.axis == other.axis
            && (self.at - other.at).abs() <= eps
            && (0..2).all(|j| {
                (self.lo[j] - other.lo[j]).abs() <= eps && (self.hi[j] - other.hi[j]).abs() <= eps
            })
    }

    /// Overlap with positive area, both rectangles in the same plane.
    pub fn overlaps(&self, other: &PlaneRect, eps: f64) -> bool {
        self.axis == other.axis
            && (self.at - other.at).abs() <= eps
            && (0..2).all(|j| self.lo[j] < other.hi[j] - eps && other.lo[j] < self.hi[j] - eps)
    }
}

/// Total-order key of a float, so that knot tuples can live in ordered maps.
pub fn order_key(x: f64) -> u64 {
    let x = if x == 0.0 { 0.0 } else { x };
    let bits = x.to_bits();
    if bits >> 63 == 1 {
        !bits
    } else {
        bits | (1 << 63)
    }
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
