//! T-mesh control grids: construction, ray-traced knot inference, boundary
//! restriction, cell subdivision with weight-preserving local refinement, and
//! merge-readiness boundary modification.
//!
//! A mesh covers a region made of one or more axis-aligned boxes sharing one
//! parametric frame. A plain cuboid mesh has a single box; merged solids use
//! several. Cells tile the region, and `walls` are plane pieces whose knot
//! carries multiplicity four: the outer boundary of the region plus any
//! designed knots around concave junctions.

use crate::basis::{cubic_basis_side, split_knots, KnotVector5, Side};
use crate::exact::{split_coefficients, Weight};
use crate::geom::{order_key, others, Aabb, PlaneRect, Vec3};
use num_rational::BigRational;
use num_traits::Zero;
use std::collections::{BTreeMap, HashMap, HashSet};
use thiserror::Error;

pub type CellId = u64;
pub type PointId = u64;

/// Iteration cap of the refinement loop.
pub const MAX_SWEEPS: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TMeshError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("boundary restriction was already applied")]
    AlreadyRestricted,
    #[error("operation needs a plain tensor-product grid")]
    NotTensor,
    #[error("operation needs a boundary-restricted mesh")]
    NotRestricted,
    #[error("malformed mesh: {0}")]
    Malformed(String),
    #[error("unknown cell id {0}")]
    UnknownCell(CellId),
    #[error("cell {0} lies outside the solid and cannot be refined")]
    AuxiliaryCell(CellId),
    #[error("refinement did not settle after {0} sweeps")]
    Divergence(usize),
    #[error("to-be-merged point {0} kept weight {1} after boundary modification")]
    BoundaryRequirement(PointId, String),
}

/// Per-axis grid coordinates of a tensor-product block.
#[derive(Debug, Clone, PartialEq)]
pub struct GridCoordinates {
    axes: [Vec<f64>; 3],
}

impl GridCoordinates {
    pub fn new(s1: Vec<f64>, s2: Vec<f64>, s3: Vec<f64>) -> Result<Self, TMeshError> {
        for (i, s) in [&s1, &s2, &s3].iter().enumerate() {
            if s.len() < 2 {
                return Err(TMeshError::InvalidGrid(format!(
                    "axis {i} has {} coordinates, need at least 2",
                    s.len()
                )));
            }
            if s.iter().any(|x| !x.is_finite()) || s.windows(2).any(|w| w[0] >= w[1]) {
                return Err(TMeshError::InvalidGrid(format!(
                    "axis {i} is not strictly increasing"
                )));
            }
        }
        Ok(Self { axes: [s1, s2, s3] })
    }

    /// `n` equal spans of `[0, len]` on every axis.
    pub fn uniform(n: [usize; 3], len: [f64; 3]) -> Result<Self, TMeshError> {
        let axis = |k: usize| -> Vec<f64> {
            (0..=n[k]).map(|i| len[k] * i as f64 / n[k] as f64).collect()
        };
        if n.contains(&0) {
            return Err(TMeshError::InvalidGrid("zero spans".into()));
        }
        Self::new(axis(0), axis(1), axis(2))
    }

    pub fn axis(&self, i: usize) -> &[f64] {
        &self.axes[i]
    }

    /// Knot line with the ends replicated to multiplicity four.
    pub fn replicated(&self, i: usize) -> Vec<f64> {
        let s = &self.axes[i];
        let (first, last) = (s[0], s[s.len() - 1]);
        let mut out = vec![first; 3];
        out.extend_from_slice(s);
        out.extend(std::iter::repeat_n(last, 3));
        out
    }

    pub fn bounds(&self) -> Aabb {
        Aabb::new(
            [self.axes[0][0], self.axes[1][0], self.axes[2][0]],
            [
                *self.axes[0].last().unwrap(),
                *self.axes[1].last().unwrap(),
                *self.axes[2].last().unwrap(),
            ],
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub id: CellId,
    pub bounds: Aabb,
    /// Cuboid whose box holds the cell.
    pub cuboid: usize,
    /// Cells filling the complement of a concave junction; never refined.
    pub aux: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlPoint {
    pub id: PointId,
    pub position: Vec<f64>,
    pub weight: Weight,
    pub knots: [KnotVector5; 3],
    pub cuboid: usize,
}

impl ControlPoint {
    /// Anchor `(r2, s2, t2)`.
    pub fn param(&self) -> Vec3 {
        [
            self.knots[0].center(),
            self.knots[1].center(),
            self.knots[2].center(),
        ]
    }

    pub fn support(&self) -> Aabb {
        Aabb::new(
            [self.knots[0][0], self.knots[1][0], self.knots[2][0]],
            [self.knots[0][4], self.knots[1][4], self.knots[2][4]],
        )
    }

    pub fn blending(&self, x: Vec3) -> f64 {
        self.blending_side(x, [Side::Right; 3])
    }

    pub fn blending_side(&self, x: Vec3, sides: [Side; 3]) -> f64 {
        let mut b = 1.0;
        for a in 0..3 {
            b *= cubic_basis_side(&self.knots[a], x[a], sides[a]);
            if b == 0.0 {
                return 0.0;
            }
        }
        b
    }

    /// True when four knots coincide at one end of some axis: such a
    /// function is nonzero on that plane and is a bd-control-point.
    pub fn is_bd(&self) -> bool {
        self.knots.iter().any(|k| {
            let t = k.knots();
            t[1] == t[4] || t[0] == t[3]
        })
    }

    pub(crate) fn key(&self) -> FnKey {
        fn_key(&[*self.knots[0].knots(), *self.knots[1].knots(), *self.knots[2].knots()])
    }
}

pub(crate) type FnKey = [[u64; 5]; 3];

pub(crate) fn fn_key(k: &[[f64; 5]; 3]) -> FnKey {
    std::array::from_fn(|a| std::array::from_fn(|i| order_key(k[a][i])))
}

/// Outcome of a refinement request.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RefinementLog {
    /// Cells created by the requested subdivision (excludes repair splits).
    pub new_cells: Vec<CellId>,
    pub sweeps: usize,
    pub repairs: usize,
}

/// Sets from the merge-boundary definitions for one face.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MergeBoundary {
    pub to_be_merged: Vec<PointId>,
    pub modification_zone: Vec<CellId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TMesh {
    pub(crate) domain: Vec<(usize, Aabb)>,
    pub(crate) cells: Vec<Cell>,
    pub(crate) walls: Vec<PlaneRect>,
    pub(crate) points: Vec<ControlPoint>,
    pub(crate) coords: Option<GridCoordinates>,
    pub(crate) restricted: bool,
    pub(crate) dim: usize,
    pub(crate) next_cell: CellId,
    pub(crate) next_point: PointId,
}

struct Accum {
    weight: BigRational,
    wf: f64,
    wpos: Vec<f64>,
    keep: Option<PointId>,
    cuboid: usize,
}

/// Extrapolate a strictly increasing line by the end spacings so every
/// index has two neighbours on each side.
fn open_window(s: &[f64], i: usize) -> [f64; 5] {
    let n = s.len() as isize;
    let at = |j: isize| -> f64 {
        if j < 0 {
            s[0] + j as f64 * (s[1] - s[0])
        } else if j >= n {
            s[(n - 1) as usize] + (j - n + 1) as f64 * (s[(n - 1) as usize] - s[(n - 2) as usize])
        } else {
            s[j as usize]
        }
    };
    let i = i as isize;
    [at(i - 2), at(i - 1), at(i), at(i + 1), at(i + 2)]
}

fn greville(k: &[f64; 5]) -> f64 {
    (k[1] + k[2] + k[3]) / 3.0
}

impl TMesh {
    /// Tensor-product mesh with one control point per lattice node. Knot
    /// vectors at the block ends are extended with the end spacing (the open
    /// construction); positions are the Greville abscissae.
    pub fn build_grid(coords: &GridCoordinates) -> Result<Self, TMeshError> {
        let mut mesh = Self::empty(vec![(0, coords.bounds())], 3);
        let s = &coords.axes;
        for k in 0..s[2].len() - 1 {
            for j in 0..s[1].len() - 1 {
                for i in 0..s[0].len() - 1 {
                    let b = Aabb::new(
                        [s[0][i], s[1][j], s[2][k]],
                        [s[0][i + 1], s[1][j + 1], s[2][k + 1]],
                    );
                    mesh.push_cell(b, 0, false);
                }
            }
        }
        for k in 0..s[2].len() {
            for j in 0..s[1].len() {
                for i in 0..s[0].len() {
                    let knots = [open_window(&s[0], i), open_window(&s[1], j), open_window(&s[2], k)];
                    mesh.push_point(knots, Weight::one(), None);
                }
            }
        }
        mesh.coords = Some(coords.clone());
        Ok(mesh)
    }

    pub(crate) fn empty(domain: Vec<(usize, Aabb)>, dim: usize) -> Self {
        Self {
            domain,
            cells: Vec::new(),
            walls: Vec::new(),
            points: Vec::new(),
            coords: None,
            restricted: false,
            dim,
            next_cell: 0,
            next_point: 0,
        }
    }

    pub(crate) fn push_cell(&mut self, bounds: Aabb, cuboid: usize, aux: bool) -> CellId {
        let id = self.next_cell;
        self.next_cell += 1;
        self.cells.push(Cell {
            id,
            bounds,
            cuboid,
            aux,
        });
        id
    }

    /// Adds a point with Greville position (padded/truncated to `dim`).
    pub(crate) fn push_point(&mut self, knots: [[f64; 5]; 3], weight: Weight, id: Option<PointId>) -> PointId {
        let id = id.unwrap_or_else(|| {
            let v = self.next_point;
            self.next_point += 1;
            v
        });
        let g = [greville(&knots[0]), greville(&knots[1]), greville(&knots[2])];
        let mut position = vec![0.0; self.dim];
        for (i, p) in position.iter_mut().enumerate().take(3) {
            *p = g[i];
        }
        let anchor = [knots[0][2], knots[1][2], knots[2][2]];
        let cuboid = self.home_cuboid(anchor).unwrap_or(self.domain[0].0);
        self.points.push(ControlPoint {
            id,
            position,
            weight,
            knots: knots.map(KnotVector5::from_raw),
            cuboid,
        });
        id
    }

    /// Scale-aware coincidence tolerance.
    pub fn eps(&self) -> f64 {
        let hull = self.hull();
        let e = hull.extent();
        1e-12 * e[0].max(e[1]).max(e[2]).max(1.0)
    }

    pub fn hull(&self) -> Aabb {
        let mut it = self.domain.iter().map(|(_, b)| *b);
        let first = it.next().expect("mesh has a domain");
        it.fold(first, |acc, b| acc.union(&b))
    }

    pub fn domain(&self) -> &[(usize, Aabb)] {
        &self.domain
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn walls(&self) -> &[PlaneRect] {
        &self.walls
    }

    pub fn points(&self) -> &[ControlPoint] {
        &self.points
    }

    pub fn points_mut(&mut self) -> &mut [ControlPoint] {
        &mut self.points
    }

    pub fn coords(&self) -> Option<&GridCoordinates> {
        self.coords.as_ref()
    }

    pub fn is_restricted(&self) -> bool {
        self.restricted
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, id: PointId) -> Option<&ControlPoint> {
        self.points.iter().find(|p| p.id == id)
    }

    /// Changes the attribute dimension, zero-padding or truncating positions.
    pub fn set_dim(&mut self, dim: usize) {
        self.dim = dim;
        for p in &mut self.points {
            p.position.resize(dim, 0.0);
        }
    }

    /// Lowest cuboid id whose box holds `x` (closed).
    pub fn home_cuboid(&self, x: Vec3) -> Option<usize> {
        let eps = self.eps();
        self.domain
            .iter()
            .filter(|(_, b)| b.contains(x, eps))
            .map(|(c, _)| *c)
            .min()
    }

    pub fn in_domain(&self, x: Vec3) -> bool {
        self.home_cuboid(x).is_some()
    }

    /// One-sided limits to use at `x`: the first octant direction (right
    /// limits preferred) whose neighbourhood lies inside the region.
    pub fn sides_at(&self, x: Vec3) -> Option<[Side; 3]> {
        let e = self.hull().extent();
        let delta = 1e-9 * e[0].max(e[1]).max(e[2]).max(1.0);
        const ORDER: [u8; 8] = [0, 1, 2, 4, 3, 5, 6, 7];
        for &m in &ORDER {
            let mut probe = x;
            let mut sides = [Side::Right; 3];
            for a in 0..3 {
                if m >> a & 1 == 1 {
                    probe[a] -= delta;
                    sides[a] = Side::Left;
                } else {
                    probe[a] += delta;
                }
            }
            if self.domain.iter().any(|(_, b)| b.contains(probe, 0.0)) {
                return Some(sides);
            }
        }
        None
    }

    /// Knots met by the axis-parallel line through `p`, with multiplicity,
    /// in increasing order. Every cell touching the line contributes its two
    /// faces; walls touching the line contribute four copies.
    pub fn ray(&self, axis: usize, p: Vec3) -> Vec<f64> {
        self.ray_through(self.cells.iter(), axis, p)
    }

    fn ray_through<'a>(&self, cells: impl Iterator<Item = &'a Cell>, axis: usize, p: Vec3) -> Vec<f64> {
        let eps = self.eps();
        let mut hits: Vec<(f64, usize)> = Vec::new();
        for c in cells {
            if c.bounds.touches_line(axis, p, eps) {
                hits.push((c.bounds.lo[axis], 1));
                hits.push((c.bounds.hi[axis], 1));
            }
        }
        for w in &self.walls {
            if w.axis == axis && w.touches(p, eps) {
                hits.push((w.at, 4));
            }
        }
        hits.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut out: Vec<f64> = Vec::with_capacity(hits.len());
        let mut i = 0;
        while i < hits.len() {
            let v = hits[i].0;
            let mut m = hits[i].1;
            let mut j = i + 1;
            while j < hits.len() && hits[j].0 - v <= eps {
                m = m.max(hits[j].1);
                j += 1;
            }
            out.extend(std::iter::repeat_n(v, m));
            i = j;
        }
        out
    }

    /// Same as [`TMesh::ray`], answered from a bucket index of the cells.
    fn ray_indexed(&self, index: &RayIndex, axis: usize, p: Vec3) -> Vec<f64> {
        self.ray_through(index.near(axis, p).iter().map(|&i| &self.cells[i as usize]), axis, p)
    }

    /// The five-knot window centred on `point[axis]`; the neighbours on each
    /// side are the first two face intersections of the ray.
    pub fn trace_knot_vector(&self, point: Vec3, axis: usize) -> Result<KnotVector5, TMeshError> {
        let eps = self.eps();
        let r = self.ray(axis, point);
        let c = point[axis];
        let copies: Vec<usize> = (0..r.len()).filter(|&i| (r[i] - c).abs() <= eps).collect();
        let Some(&first) = copies.first() else {
            return Err(TMeshError::Malformed(format!(
                "coordinate {c} on axis {axis} is not a knot of the ray"
            )));
        };
        let last = *copies.last().unwrap();
        let j = if first == 0 && copies.len() > 1 && last + 1 < r.len() {
            last
        } else {
            first
        };
        if j < 2 || j + 2 >= r.len() {
            return Err(TMeshError::Malformed(format!(
                "ray along axis {axis} through {point:?} has fewer than two hits on one side"
            )));
        }
        Ok(KnotVector5::from_raw([r[j - 2], r[j - 1], r[j], r[j + 1], r[j + 2]]))
    }

    /// Replicates the block-end knots and adds the bd-control-point stacks,
    /// so every blending function vanishes outside the block.
    pub fn apply_boundary_restriction(mut self) -> Result<Self, TMeshError> {
        if self.restricted {
            return Err(TMeshError::AlreadyRestricted);
        }
        let coords = self.coords.clone().ok_or(TMeshError::NotTensor)?;
        let tensor: usize = (0..3).map(|a| coords.axes[a].len() - 1).product();
        if self.cells.len() != tensor || self.domain.len() != 1 {
            return Err(TMeshError::NotTensor);
        }
        let lines: [Vec<f64>; 3] = std::array::from_fn(|a| coords.replicated(a));
        let old: HashMap<FnKey, PointId> = self.points.iter().map(|p| (p.key(), p.id)).collect();
        self.points.clear();
        for k in 0..lines[2].len() - 4 {
            for j in 0..lines[1].len() - 4 {
                for i in 0..lines[0].len() - 4 {
                    let win = |l: &Vec<f64>, s: usize| -> [f64; 5] { std::array::from_fn(|t| l[s + t]) };
                    let knots = [win(&lines[0], i), win(&lines[1], j), win(&lines[2], k)];
                    let id = old.get(&fn_key(&knots)).copied();
                    self.push_point(knots, Weight::one(), id);
                }
            }
        }
        self.points.sort_by_key(|p| p.id);
        let b = self.domain[0].1;
        self.walls = (0..3)
            .flat_map(|a| [PlaneRect::face_of(&b, a, false), PlaneRect::face_of(&b, a, true)])
            .collect();
        self.restricted = true;
        Ok(self)
    }

    /// Splits each queued cell into eight and re-establishes a consistent
    /// set of blending functions.
    pub fn subdivide_cells(&mut self, queue: &[CellId]) -> Result<RefinementLog, TMeshError> {
        if !self.restricted {
            return Err(TMeshError::NotRestricted);
        }
        let wanted: HashSet<CellId> = queue.iter().copied().collect();
        for &id in &wanted {
            match self.cells.iter().find(|c| c.id == id) {
                None => return Err(TMeshError::UnknownCell(id)),
                Some(c) if c.aux => return Err(TMeshError::AuxiliaryCell(id)),
                _ => {}
            }
        }
        let mut order: Vec<CellId> = wanted.into_iter().collect();
        order.sort_unstable();
        let mut new_cells = Vec::with_capacity(order.len() * 8);
        for id in order {
            let idx = self.cells.iter().position(|c| c.id == id).unwrap();
            let cell = self.cells.remove(idx);
            for child in cell.bounds.octants() {
                new_cells.push(self.push_cell(child, cell.cuboid, false));
            }
        }
        let (sweeps, repairs) = self.make_consistent()?;
        Ok(RefinementLog {
            new_cells,
            sweeps,
            repairs,
        })
    }

    /// Cuts cells along single axes: each entry asks for `cell` to be split
    /// at `k` on `axis`. Several cuts of one cell produce the product grid.
    pub fn split_cells(&mut self, cuts: &[(CellId, usize, f64)]) -> Result<RefinementLog, TMeshError> {
        if !self.restricted {
            return Err(TMeshError::NotRestricted);
        }
        let eps = self.eps();
        let mut by_cell: BTreeMap<CellId, [Vec<f64>; 3]> = BTreeMap::new();
        for &(id, axis, k) in cuts {
            match self.cells.iter().find(|c| c.id == id) {
                None => return Err(TMeshError::UnknownCell(id)),
                Some(c) if c.aux => return Err(TMeshError::AuxiliaryCell(id)),
                Some(c) if k > c.bounds.lo[axis] + eps && k < c.bounds.hi[axis] - eps => {
                    by_cell.entry(id).or_default()[axis].push(k);
                }
                _ => {}
            }
        }
        let mut new_cells = Vec::new();
        for (id, mut planes) in by_cell {
            let idx = self.cells.iter().position(|c| c.id == id).unwrap();
            let cell = self.cells.remove(idx);
            for (a, v) in planes.iter_mut().enumerate() {
                v.push(cell.bounds.lo[a]);
                v.push(cell.bounds.hi[a]);
                v.sort_by(f64::total_cmp);
                v.dedup_by(|x, y| (*x - *y).abs() <= eps);
            }
            for z in planes[2].windows(2) {
                for y in planes[1].windows(2) {
                    for x in planes[0].windows(2) {
                        let b = Aabb::new([x[0], y[0], z[0]], [x[1], y[1], z[1]]);
                        new_cells.push(self.push_cell(b, cell.cuboid, false));
                    }
                }
            }
        }
        let (sweeps, repairs) = self.make_consistent()?;
        Ok(RefinementLog {
            new_cells,
            sweeps,
            repairs,
        })
    }

    /// First knot the ray shows inside `(t0, t4)` more often than `t` does.
    fn missing_inner(t: &[f64; 5], r: &[f64], eps: f64) -> Option<f64> {
        let mut i = 0;
        while i < r.len() {
            let v = r[i];
            let mut j = i;
            while j < r.len() && r[j] - v <= eps {
                j += 1;
            }
            if v > t[0] + eps && v < t[4] - eps {
                let own = t.iter().filter(|&&x| (x - v).abs() <= eps).count();
                if j - i > own {
                    return Some(v);
                }
            }
            i = j;
        }
        None
    }

    /// First knot value of `t` that the ray does not cross at all. Missing
    /// multiplicity is not repairable by cutting cells and is left alone.
    fn unsupported(t: &[f64; 5], r: &[f64], eps: f64) -> Option<f64> {
        t.iter()
            .copied()
            .find(|&v| !r.iter().any(|&x| (x - v).abs() <= eps))
    }

    /// Knot-insertion loop: split every blending function whose ray shows
    /// knots it lacks, collect fragments with identical knot vectors, and
    /// cut the mesh where a function carries knots the mesh lacks. Repeats
    /// until nothing changes. Returns (sweeps, repair splits).
    pub(crate) fn make_consistent(&mut self) -> Result<(usize, usize), TMeshError> {
        let eps = self.eps();
        let has_aux = self.cells.iter().any(|c| c.aux);
        let mut repairs_total = 0;
        for sweep in 0..MAX_SWEEPS {
            let index = RayIndex::build(self);
            let mut rays: HashMap<(usize, u64, u64), Vec<f64>> = HashMap::new();
            let mut ray_of = |mesh: &TMesh, axis: usize, p: Vec3| -> Vec<f64> {
                let o = others(axis);
                let key = (axis, order_key(p[o[0]]), order_key(p[o[1]]));
                rays.entry(key).or_insert_with(|| mesh.ray_indexed(&index, axis, p)).clone()
            };
            let mut points = std::mem::take(&mut self.points);
            points.sort_by_key(|p| p.id);
            // Fragments with equal knot vectors are pooled as soon as they
            // appear, so each distinct function is split at most once.
            let mut pending: BTreeMap<FnKey, Accum> = BTreeMap::new();
            let mut acc: BTreeMap<FnKey, Accum> = BTreeMap::new();
            let pool = |map: &mut BTreeMap<FnKey, Accum>, key: FnKey, add: Accum| {
                match map.entry(key) {
                    std::collections::btree_map::Entry::Vacant(v) => {
                        v.insert(add);
                    }
                    std::collections::btree_map::Entry::Occupied(mut o) => {
                        let e = o.get_mut();
                        e.weight += add.weight;
                        e.wf += add.wf;
                        for (s, x) in e.wpos.iter_mut().zip(&add.wpos) {
                            *s += x;
                        }
                        if let Some(id) = add.keep {
                            e.keep = Some(e.keep.map_or(id, |k: PointId| k.min(id)));
                        }
                    }
                }
            };
            for p in points {
                let knots = [*p.knots[0].knots(), *p.knots[1].knots(), *p.knots[2].knots()];
                let wf = p.weight.value();
                let add = Accum {
                    weight: p.weight.exact().clone(),
                    wf,
                    wpos: p.position.iter().map(|x| wf * x).collect(),
                    keep: Some(p.id),
                    cuboid: p.cuboid,
                };
                pool(&mut pending, fn_key(&knots), add);
            }
            while let Some((key, f)) = pending.pop_first() {
                let knots: [[f64; 5]; 3] =
                    std::array::from_fn(|a| std::array::from_fn(|i| from_order_key(key[a][i])));
                let anchor = [knots[0][2], knots[1][2], knots[2][2]];
                let mut split = None;
                for a in 0..3 {
                    let r = ray_of(self, a, anchor);
                    if let Some(k) = Self::missing_inner(&knots[a], &r, eps) {
                        split = Some((a, k));
                        break;
                    }
                }
                let Some((a, k)) = split else {
                    pool(&mut acc, key, f);
                    continue;
                };
                let (t1, t2) = split_knots(&knots[a], k);
                let (c1, c2) = split_coefficients(&knots[a], k);
                for (t, c) in [(t1, c1), (t2, c2)] {
                    if c.is_zero() || t[0] >= t[4] {
                        continue;
                    }
                    let mut child = knots;
                    child[a] = t;
                    let cf = num_traits::ToPrimitive::to_f64(&c).unwrap_or(0.0);
                    let add = Accum {
                        weight: &f.weight * &c,
                        wf: f.wf * cf,
                        wpos: f.wpos.iter().map(|x| x * cf).collect(),
                        keep: None,
                        cuboid: f.cuboid,
                    };
                    let ck = fn_key(&child);
                    if acc.contains_key(&ck) {
                        pool(&mut acc, ck, add);
                    } else {
                        pool(&mut pending, ck, add);
                    }
                }
            }
            let boxes: Vec<Aabb> = self.domain.iter().map(|(_, b)| *b).collect();
            let mut points = Vec::with_capacity(acc.len());
            for (key, e) in acc {
                if e.weight.is_zero() {
                    continue;
                }
                let knots: [[f64; 5]; 3] =
                    std::array::from_fn(|a| std::array::from_fn(|i| from_order_key(key[a][i])));
                let support = Aabb::new(
                    [knots[0][0], knots[1][0], knots[2][0]],
                    [knots[0][4], knots[1][4], knots[2][4]],
                );
                if has_aux && !boxes.iter().any(|b| b.overlaps(&support, eps)) {
                    continue;
                }
                let position: Vec<f64> = if e.wf != 0.0 {
                    e.wpos.iter().map(|s| s / e.wf).collect()
                } else {
                    e.wpos
                };
                let anchor = [knots[0][2], knots[1][2], knots[2][2]];
                points.push((e.keep, knots, Weight::from_rational(e.weight), position, self.home_cuboid(anchor).unwrap_or(e.cuboid)));
            }
            let mut used: HashSet<PointId> = HashSet::new();
            self.points = Vec::with_capacity(points.len());
            for (keep, knots, weight, position, cuboid) in points {
                let id = match keep {
                    Some(id) if used.insert(id) => id,
                    _ => {
                        let v = self.next_point;
                        self.next_point += 1;
                        used.insert(v);
                        v
                    }
                };
                self.points.push(ControlPoint {
                    id,
                    position,
                    weight,
                    knots: knots.map(KnotVector5::from_raw),
                    cuboid,
                });
            }
            self.points.sort_by_key(|p| p.id);

            let mut repairs: Vec<(usize, f64, Vec3)> = Vec::new();
            for p in &self.points {
                let anchor = p.param();
                for a in 0..3 {
                    let r = ray_of(self, a, anchor);
                    if let Some(k) = Self::unsupported(p.knots[a].knots(), &r, eps) {
                        repairs.push((a, k, anchor));
                    }
                }
            }
            if repairs.is_empty() {
                return Ok((sweep + 1, repairs_total));
            }
            for (a, k, anchor) in repairs {
                repairs_total += self.insert_face(a, k, anchor)?;
            }
        }
        Err(TMeshError::Divergence(MAX_SWEEPS))
    }

    /// Cuts every cell crossed by the axis line through `anchor` at `k`.
    fn insert_face(&mut self, axis: usize, k: f64, anchor: Vec3) -> Result<usize, TMeshError> {
        let eps = self.eps();
        let hit: Vec<usize> = (0..self.cells.len())
            .filter(|&i| {
                let b = &self.cells[i].bounds;
                b.touches_line(axis, anchor, eps) && b.lo[axis] + eps < k && k < b.hi[axis] - eps
            })
            .collect();
        if hit.is_empty() {
            if self.ray(axis, anchor).iter().any(|&x| (x - k).abs() <= eps) {
                // Already cut by an earlier repair of this sweep.
                return Ok(0);
            }
            return Err(TMeshError::Malformed(format!(
                "knot {k} on axis {axis} at {anchor:?} cannot be added to the mesh"
            )));
        }
        for &i in hit.iter().rev() {
            let cell = self.cells.remove(i);
            let (lo, hi) = cell.bounds.split_at(axis, k);
            self.push_cell(lo, cell.cuboid, cell.aux);
            self.push_cell(hi, cell.cuboid, cell.aux);
        }
        Ok(hit.len())
    }
}


/// Cells bucketed on a square grid over the two coordinates orthogonal to
/// each axis, so a line query only inspects nearby cells.
struct RayIndex {
    lo: Vec3,
    size: Vec3,
    n: usize,
    buckets: [Vec<Vec<u32>>; 3],
}

impl RayIndex {
    fn build(mesh: &TMesh) -> Self {
        let hull = mesh.hull();
        let n = ((mesh.cells.len() as f64).sqrt() as usize).clamp(1, 128);
        let size: Vec3 = std::array::from_fn(|a| (hull.hi[a] - hull.lo[a]).max(f64::MIN_POSITIVE) / n as f64);
        let eps = mesh.eps();
        let mut out = Self {
            lo: hull.lo,
            size,
            n,
            buckets: std::array::from_fn(|_| vec![Vec::new(); n * n]),
        };
        for (i, c) in mesh.cells.iter().enumerate() {
            for axis in 0..3 {
                let o = others(axis);
                let r0 = out.bucket(o[0], c.bounds.lo[o[0]] - eps)..=out.bucket(o[0], c.bounds.hi[o[0]] + eps);
                let r1 = out.bucket(o[1], c.bounds.lo[o[1]] - eps)..=out.bucket(o[1], c.bounds.hi[o[1]] + eps);
                for x in r0 {
                    for y in r1.clone() {
                        out.buckets[axis][x * n + y].push(i as u32);
                    }
                }
            }
        }
        out
    }

    fn bucket(&self, a: usize, x: f64) -> usize {
        (((x - self.lo[a]) / self.size[a]).floor().max(0.0) as usize).min(self.n - 1)
    }

    fn near(&self, axis: usize, p: Vec3) -> &[u32] {
        let o = others(axis);
        &self.buckets[axis][self.bucket(o[0], p[o[0]]) * self.n + self.bucket(o[1], p[o[1]])]
    }
}

/// One of the six faces of a member box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Face {
    pub axis: usize,
    pub max: bool,
}

impl Face {
    pub const ALL: [Face; 6] = [
        Face { axis: 0, max: false },
        Face { axis: 0, max: true },
        Face { axis: 1, max: false },
        Face { axis: 1, max: true },
        Face { axis: 2, max: false },
        Face { axis: 2, max: true },
    ];

    /// Index 0..6 in the order -U, +U, -V, +V, -W, +W.
    pub fn index(&self) -> usize {
        2 * self.axis + self.max as usize
    }

    pub fn from_index(i: usize) -> Option<Face> {
        Face::ALL.get(i).copied()
    }

    pub fn name(&self) -> &'static str {
        ["-U", "+U", "-V", "+V", "-W", "+W"][self.index()]
    }

    pub fn parse(s: &str) -> Option<Face> {
        Face::ALL.iter().copied().find(|f| f.name().eq_ignore_ascii_case(s.trim()))
    }
}

impl TMesh {
    /// Shifts every point and cell id by `base`.
    pub fn offset_ids(&mut self, base: u64) {
        for p in &mut self.points {
            p.id += base;
        }
        for c in &mut self.cells {
            c.id += base;
        }
        self.next_point += base;
        self.next_cell += base;
    }

    /// The mesh expressed in another frame: boxes, walls and knot vectors
    /// are mapped; positions and weights are untouched.
    pub fn transformed(&self, t: &crate::gpc::Transform) -> TMesh {
        let mut out = self.clone();
        for d in &mut out.domain {
            d.1 = t.apply_box(&d.1);
        }
        for c in &mut out.cells {
            c.bounds = t.apply_box(&c.bounds);
        }
        for w in &mut out.walls {
            let o = others(w.axis);
            let mut lo = [0.0; 3];
            let mut hi = [0.0; 3];
            lo[w.axis] = w.at;
            hi[w.axis] = w.at;
            for j in 0..2 {
                lo[o[j]] = w.lo[j];
                hi[o[j]] = w.hi[j];
            }
            let b = t.apply_box(&Aabb::new(lo, hi));
            let (axis, _) = t.image_axis(w.axis);
            let on = others(axis);
            *w = PlaneRect {
                axis,
                at: b.lo[axis],
                lo: [b.lo[on[0]], b.lo[on[1]]],
                hi: [b.hi[on[0]], b.hi[on[1]]],
            };
        }
        for p in &mut out.points {
            let old = p.knots;
            for i in 0..3 {
                let k = old[t.perm[i]].knots();
                let mut m: [f64; 5] = std::array::from_fn(|j| t.sign[i] * k[j] + t.offset[i]);
                if t.sign[i] < 0.0 {
                    m.reverse();
                }
                p.knots[i] = KnotVector5::from_raw(m);
            }
        }
        out.coords = None;
        out
    }

    /// Relabels a single-cuboid mesh as belonging to `cuboid`.
    pub fn reassign_cuboid(&mut self, cuboid: usize) {
        for d in &mut self.domain {
            d.0 = cuboid;
        }
        for c in &mut self.cells {
            c.cuboid = cuboid;
        }
        for p in &mut self.points {
            p.cuboid = cuboid;
        }
    }

    pub fn member_box(&self, cuboid: usize) -> Option<Aabb> {
        self.domain.iter().find(|(c, _)| *c == cuboid).map(|(_, b)| *b)
    }

    fn face_rect(&self, cuboid: usize, face: Face) -> Result<PlaneRect, TMeshError> {
        let b = self
            .member_box(cuboid)
            .ok_or_else(|| TMeshError::Malformed(format!("cuboid {cuboid} is not part of this mesh")))?;
        Ok(PlaneRect::face_of(&b, face.axis, face.max))
    }

    /// Non-auxiliary cells with a face lying on the given member face.
    pub fn boundary_cells(&self, cuboid: usize, face: Face) -> Result<Vec<CellId>, TMeshError> {
        let rect = self.face_rect(cuboid, face)?;
        let eps = self.eps();
        Ok(self
            .cells
            .iter()
            .filter(|c| !c.aux && c.cuboid == cuboid)
            .filter(|c| {
                let side = if face.max { c.bounds.hi[face.axis] } else { c.bounds.lo[face.axis] };
                (side - rect.at).abs() <= eps
                    && PlaneRect::face_of(&c.bounds, face.axis, face.max).overlaps(&rect, eps)
            })
            .map(|c| c.id)
            .collect())
    }

    /// To-be-merged points (at least two copies of the face knot and a
    /// support reaching the face) and the cells around their anchors.
    pub fn classify_merge_boundary(&self, cuboid: usize, face: Face) -> Result<MergeBoundary, TMeshError> {
        let rect = self.face_rect(cuboid, face)?;
        let eps = self.eps();
        let a = face.axis;
        let o = others(a);
        let mut out = MergeBoundary::default();
        let mut anchors = Vec::new();
        for p in &self.points {
            let t = p.knots[a].knots();
            if t.iter().filter(|&&x| (x - rect.at).abs() <= eps).count() < 2 {
                continue;
            }
            let s = p.support();
            let on = (0..2).all(|j| s.lo[o[j]] < rect.hi[j] - eps && rect.lo[j] < s.hi[o[j]] - eps);
            if on {
                out.to_be_merged.push(p.id);
                anchors.push(p.param());
            }
        }
        out.modification_zone = self
            .cells
            .iter()
            .filter(|c| !c.aux && anchors.iter().any(|&x| c.bounds.contains(x, eps)))
            .map(|c| c.id)
            .collect();
        out.modification_zone.sort_unstable();
        Ok(out)
    }

    /// A to-be-merged point on the face whose weight is not one, if any.
    pub fn face_blocker(&self, cuboid: usize, face: Face) -> Result<Option<(PointId, String)>, TMeshError> {
        let mb = self.classify_merge_boundary(cuboid, face)?;
        Ok(mb.to_be_merged.iter().find_map(|&id| {
            let p = self.point(id).unwrap();
            (!p.weight.is_one()).then(|| (id, p.weight.to_string()))
        }))
    }

    /// Restores the weight-one requirement on a face after a refinement.
    /// Returns whether the mesh changed.
    pub fn boundary_modification(
        &mut self,
        new_cells: &[CellId],
        cuboid: usize,
        face: Face,
    ) -> Result<bool, TMeshError> {
        let zone: HashSet<CellId> =
            self.classify_merge_boundary(cuboid, face)?.modification_zone.into_iter().collect();
        if !new_cells.iter().any(|c| zone.contains(c)) {
            return Ok(false);
        }
        let mut last = None;
        for _ in 0..8 {
            self.split_face_layer(cuboid, face)?;
            match self.face_blocker(cuboid, face)? {
                None => return Ok(true),
                Some(bad) => last = Some(bad),
            }
        }
        let (id, w) = last.unwrap();
        Err(TMeshError::BoundaryRequirement(id, w))
    }

    /// Splits every cell touching the face into the tensor lattice formed by
    /// all tangential lines of the face, and at half the thinnest layer
    /// depth, so the new face layer is a uniform slab.
    fn split_face_layer(&mut self, cuboid: usize, face: Face) -> Result<RefinementLog, TMeshError> {
        let eps = self.eps();
        let ids = self.boundary_cells(cuboid, face)?;
        let layer: Vec<(CellId, Aabb)> = ids
            .iter()
            .map(|id| (*id, self.cells.iter().find(|c| c.id == *id).unwrap().bounds))
            .collect();
        let o = others(face.axis);
        let mut lines: [Vec<f64>; 2] = Default::default();
        for (_, b) in &layer {
            for j in 0..2 {
                lines[j].extend([b.lo[o[j]], b.hi[o[j]]]);
            }
        }
        for l in &mut lines {
            l.sort_by(f64::total_cmp);
            l.dedup_by(|x, y| (*x - *y).abs() <= eps);
        }
        let thin = layer.iter().map(|(_, b)| b.extent()[face.axis]).fold(f64::INFINITY, f64::min);
        let at = self.face_rect(cuboid, face)?.at;
        let depth = if face.max { at - thin / 2.0 } else { at + thin / 2.0 };
        let mut cuts = Vec::new();
        for (id, _) in &layer {
            cuts.push((*id, face.axis, depth));
            for j in 0..2 {
                cuts.extend(lines[j].iter().map(|&v| (*id, o[j], v)));
            }
        }
        self.split_cells(&cuts)
    }

    /// Structural audit: cells tile the region without overlap and every
    /// blending function agrees with the knots its rays see.
    pub fn rule1_violations(&self) -> Vec<String> {
        let eps = self.eps();
        let mut issues = Vec::new();
        let region: f64 = self.domain.iter().map(|(_, b)| b.volume()).sum();
        let member: f64 = self.cells.iter().filter(|c| !c.aux).map(|c| c.bounds.volume()).sum();
        if (region - member).abs() > 1e-9 * region.max(1.0) {
            issues.push(format!("cells cover volume {member}, region has {region}"));
        }
        let mut order: Vec<&Cell> = self.cells.iter().collect();
        order.sort_by(|a, b| a.bounds.lo[0].total_cmp(&b.bounds.lo[0]));
        for i in 0..order.len() {
            for j in i + 1..order.len() {
                if order[j].bounds.lo[0] >= order[i].bounds.hi[0] - eps {
                    break;
                }
                if order[i].bounds.overlaps(&order[j].bounds, eps) {
                    issues.push(format!("cells {} and {} overlap", order[i].id, order[j].id));
                }
            }
        }
        for c in self.cells.iter().filter(|c| !c.aux) {
            if self.home_cuboid(c.bounds.center()).is_none() {
                issues.push(format!("cell {} lies outside the region", c.id));
            }
        }
        let index = RayIndex::build(self);
        for p in &self.points {
            let anchor = p.param();
            for a in 0..3 {
                let r = self.ray_indexed(&index, a, anchor);
                let t = p.knots[a].knots();
                if let Some(k) = Self::missing_inner(t, &r, eps) {
                    issues.push(format!("point {} lacks knot {k} on axis {a}", p.id));
                }
                if let Some(k) = Self::unsupported(t, &r, eps) {
                    issues.push(format!("point {} uses knot {k} on axis {a} absent from the mesh", p.id));
                }
            }
        }
        issues
    }

    /// Points whose support box leaves the region, with the escaping volume
    /// fraction.
    pub fn support_escapes(&self) -> Vec<(PointId, f64)> {
        let eps = self.eps();
        let mut out = Vec::new();
        for p in &self.points {
            let s = p.support();
            let mut cuts: [Vec<f64>; 3] = std::array::from_fn(|a| vec![s.lo[a], s.hi[a]]);
            for (_, b) in &self.domain {
                for a in 0..3 {
                    for v in [b.lo[a], b.hi[a]] {
                        if v > s.lo[a] + eps && v < s.hi[a] - eps {
                            cuts[a].push(v);
                        }
                    }
                }
            }
            for c in &mut cuts {
                c.sort_by(f64::total_cmp);
                c.dedup_by(|x, y| (*x - *y).abs() <= eps);
            }
            let mut outside = 0.0;
            for i in 0..cuts[0].len() - 1 {
                for j in 0..cuts[1].len() - 1 {
                    for k in 0..cuts[2].len() - 1 {
                        let sub = Aabb::new(
                            [cuts[0][i], cuts[1][j], cuts[2][k]],
                            [cuts[0][i + 1], cuts[1][j + 1], cuts[2][k + 1]],
                        );
                        if !self.domain.iter().any(|(_, b)| b.contains(sub.center(), 0.0)) {
                            outside += sub.volume();
                        }
                    }
                }
            }
            if outside > 0.0 {
                out.push((p.id, outside / s.volume()));
            }
        }
        out
    }
}

fn from_order_key(k: u64) -> f64 {
    if k >> 63 == 1 {
        f64::from_bits(k & !(1 << 63))
    } else {
        f64::from_bits(!k)
    }
}
