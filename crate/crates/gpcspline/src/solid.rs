//! Multi-cuboid spline solids: evaluation in rational and division-free
//! form, partial derivatives, and the partition-of-unity audit.
//!
//! Cuboids are grouped into charts. An unmerged cuboid is a chart of its
//! own; merging places several cuboids into one chart frame so their
//! blending functions cross the glued faces.

use crate::basis::{basis_derivative_side, cubic_basis_side, Side};
use crate::geom::{Aabb, Vec3};
use crate::gpc::{GpcError, GpcGraph, Transform};
use crate::tmesh::{ControlPoint, Face, GridCoordinates, TMesh, TMeshError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::sync::OnceLock;
use thiserror::Error;

/// Deviation bound under which a solid counts as semi-standard.
pub const SEMI_STANDARD_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolidError {
    #[error(transparent)]
    Mesh(#[from] TMeshError),
    #[error(transparent)]
    Graph(#[from] GpcError),
    #[error("parameter {1:?} lies outside cuboid {0}")]
    OutsideDomain(usize, Vec3),
    #[error("rational denominator {0:e} vanishes: hole in the domain")]
    Hole(f64),
    #[error("solid has not passed the semi-standard audit")]
    NotAudited,
    #[error("derivative of order {0} is discontinuous at {1:?}")]
    Discontinuity(u8, Vec3),
    #[error("unsupported derivative order {0}")]
    Order(u8),
    #[error("{0}")]
    Invalid(String),
}

/// Start of the id range owned by a cuboid's own mesh.
pub fn id_base(cuboid: usize) -> u64 {
    (cuboid as u64) << 32
}

/// A cuboid-local face expressed in the chart frame.
pub fn chart_face(t: &Transform, f: Face) -> Face {
    let (axis, sign) = t.image_axis(f.axis);
    Face {
        axis,
        max: f.max == (sign > 0.0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    Rational,
    SemiStandard,
}

/// Bucket grid over a chart for fast lookup of functions whose support
/// holds a point.
#[derive(Debug, Clone)]
pub struct SupportIndex {
    lo: Vec3,
    step: Vec3,
    n: [usize; 3],
    buckets: Vec<Vec<u32>>,
}

impl SupportIndex {
    pub fn build(mesh: &TMesh) -> Self {
        let hull = mesh.hull();
        let per = (mesh.points().len() as f64 / 4.0).cbrt().ceil() as usize;
        let n = [per.clamp(1, 48); 3];
        let e = hull.extent();
        let step: Vec3 = std::array::from_fn(|a| e[a] / n[a] as f64);
        let mut buckets = vec![Vec::new(); n[0] * n[1] * n[2]];
        let cell = |x: f64, a: usize| -> usize {
            (((x - hull.lo[a]) / step[a]).floor().max(0.0) as usize).min(n[a] - 1)
        };
        for (i, p) in mesh.points().iter().enumerate() {
            let s = p.support();
            let lo: [usize; 3] = std::array::from_fn(|a| cell(s.lo[a], a));
            let hi: [usize; 3] = std::array::from_fn(|a| cell(s.hi[a], a));
            for z in lo[2]..=hi[2] {
                for y in lo[1]..=hi[1] {
                    for x in lo[0]..=hi[0] {
                        buckets[x + n[0] * (y + n[1] * z)].push(i as u32);
                    }
                }
            }
        }
        Self {
            lo: hull.lo,
            step,
            n,
            buckets,
        }
    }

    pub fn candidates(&self, x: Vec3) -> &[u32] {
        let idx: [usize; 3] = std::array::from_fn(|a| {
            (((x[a] - self.lo[a]) / self.step[a]).floor().max(0.0) as usize).min(self.n[a] - 1)
        });
        &self.buckets[idx[0] + self.n[0] * (idx[1] + self.n[1] * idx[2])]
    }
}

#[derive(Debug, Clone)]
pub struct Chart {
    pub mesh: TMesh,
    /// Cuboid-local to chart-frame maps of the member cuboids.
    pub frames: Vec<(usize, Transform)>,
}

impl Chart {
    pub fn frame(&self, cuboid: usize) -> Option<&Transform> {
        self.frames.iter().find(|(c, _)| *c == cuboid).map(|(_, t)| t)
    }
}

#[derive(Debug)]
pub struct SplineSolid {
    pub graph: GpcGraph,
    charts: Vec<Chart>,
    semi_standard: bool,
    deviation: Option<f64>,
    index: OnceLock<Vec<SupportIndex>>,
}

impl Clone for SplineSolid {
    fn clone(&self) -> Self {
        Self {
            graph: self.graph.clone(),
            charts: self.charts.clone(),
            semi_standard: self.semi_standard,
            deviation: self.deviation,
            index: OnceLock::new(),
        }
    }
}

impl PartialEq for SplineSolid {
    fn eq(&self, other: &Self) -> bool {
        self.graph == other.graph
            && self.semi_standard == other.semi_standard
            && self.deviation == other.deviation
            && self.charts.len() == other.charts.len()
            && self
                .charts
                .iter()
                .zip(&other.charts)
                .all(|(a, b)| a.mesh == b.mesh && a.frames == b.frames)
    }
}

/// Sum of `w B` and `w p B` over the chart functions at `x`.
fn accumulate(mesh: &TMesh, index: &SupportIndex, x: Vec3, sides: [Side; 3], num: &mut [f64]) -> f64 {
    let pts = mesh.points();
    let mut den = 0.0;
    for &i in index.candidates(x) {
        let p = &pts[i as usize];
        let b = p.blending_side(x, sides);
        if b != 0.0 {
            let wb = p.weight.value() * b;
            den += wb;
            for (n, c) in num.iter_mut().zip(&p.position) {
                *n += wb * c;
            }
        }
    }
    den
}

impl SplineSolid {
    /// Boundary-restricted tensor grid on every cuboid (`spans[c]` cells per
    /// axis). Positions are the Greville abscissae placed by the graph
    /// layout, so the solid reproduces the poly-cube's own geometry.
    pub fn standard(graph: GpcGraph, spans: &[[usize; 3]]) -> Result<Self, SolidError> {
        let layout = graph.layout();
        let mut charts = Vec::with_capacity(graph.cuboids().len());
        for c in graph.cuboids() {
            let n = spans
                .get(c.id)
                .or(spans.last())
                .copied()
                .ok_or_else(|| SolidError::Invalid("no grid resolution given".into()))?;
            let coords = GridCoordinates::uniform(n, c.extents)?;
            let mut mesh = TMesh::build_grid(&coords)?.apply_boundary_restriction()?;
            mesh.reassign_cuboid(c.id);
            mesh.offset_ids(id_base(c.id));
            for p in mesh.points_mut() {
                let g = [p.position[0], p.position[1], p.position[2]];
                let y = layout[c.id].apply(g);
                p.position = y.to_vec();
            }
            charts.push(Chart {
                mesh,
                frames: vec![(c.id, Transform::identity())],
            });
        }
        Ok(Self::from_charts(graph, charts))
    }

    pub fn from_charts(graph: GpcGraph, charts: Vec<Chart>) -> Self {
        Self {
            graph,
            charts,
            semi_standard: false,
            deviation: None,
            index: OnceLock::new(),
        }
    }

    pub fn charts(&self) -> &[Chart] {
        &self.charts
    }

    /// Mutable access; clears the audit flag and cached lookups.
    pub fn charts_mut(&mut self) -> &mut Vec<Chart> {
        self.invalidate();
        &mut self.charts
    }

    pub fn into_parts(self) -> (GpcGraph, Vec<Chart>) {
        (self.graph, self.charts)
    }

    fn invalidate(&mut self) {
        self.semi_standard = false;
        self.deviation = None;
        self.index = OnceLock::new();
    }

    /// Positions changed but weights and knots did not: keep the audit.
    pub fn positions_changed(&mut self) {
        self.index = OnceLock::new();
    }

    pub fn is_semi_standard(&self) -> bool {
        self.semi_standard
    }

    pub fn deviation(&self) -> Option<f64> {
        self.deviation
    }

    pub(crate) fn set_audit(&mut self, flag: bool, deviation: Option<f64>) {
        self.semi_standard = flag;
        self.deviation = deviation;
    }

    pub fn dim(&self) -> usize {
        self.charts.first().map_or(3, |c| c.mesh.dim())
    }

    pub fn set_dim(&mut self, dim: usize) {
        for c in &mut self.charts {
            c.mesh.set_dim(dim);
        }
        self.index = OnceLock::new();
    }

    pub fn point_count(&self) -> usize {
        self.charts.iter().map(|c| c.mesh.points().len()).sum()
    }

    pub fn chart_of(&self, cuboid: usize) -> Result<(usize, &Transform), SolidError> {
        self.charts
            .iter()
            .enumerate()
            .find_map(|(i, ch)| ch.frame(cuboid).map(|t| (i, t)))
            .ok_or(SolidError::Graph(GpcError::UnknownCuboid(cuboid)))
    }

    pub fn indices(&self) -> &[SupportIndex] {
        self.index
            .get_or_init(|| self.charts.iter().map(|c| SupportIndex::build(&c.mesh)).collect())
    }

    /// Chart index and chart-frame coordinates of a cuboid-local parameter.
    pub fn locate(&self, cuboid: usize, h: Vec3) -> Result<(usize, Vec3), SolidError> {
        let (ci, t) = self.chart_of(cuboid)?;
        let x = t.apply(h);
        let mesh = &self.charts[ci].mesh;
        let b = mesh.member_box(cuboid).unwrap();
        if !b.contains(x, mesh.eps()) {
            return Err(SolidError::OutsideDomain(cuboid, h));
        }
        Ok((ci, x))
    }

    /// Σ wB at a cuboid-local parameter.
    pub fn weight_sum(&self, cuboid: usize, h: Vec3) -> Result<f64, SolidError> {
        let (ci, x) = self.locate(cuboid, h)?;
        let mesh = &self.charts[ci].mesh;
        let sides = mesh.sides_at(x).ok_or(SolidError::OutsideDomain(cuboid, h))?;
        Ok(accumulate(mesh, &self.indices()[ci], x, sides, &mut []))
    }

    pub fn evaluate(&self, cuboid: usize, h: Vec3, mode: EvalMode) -> Result<Vec<f64>, SolidError> {
        let (ci, x) = self.locate(cuboid, h)?;
        self.evaluate_chart(ci, x, mode)
            .map_err(|e| match e {
                SolidError::OutsideDomain(..) => SolidError::OutsideDomain(cuboid, h),
                e => e,
            })
    }

    /// Evaluation at chart-frame coordinates.
    pub fn evaluate_chart(&self, ci: usize, x: Vec3, mode: EvalMode) -> Result<Vec<f64>, SolidError> {
        let mesh = &self.charts[ci].mesh;
        let index = &self.indices()[ci];
        let sides = mesh.sides_at(x).ok_or(SolidError::OutsideDomain(ci, x))?;
        let mut num = vec![0.0; mesh.dim()];
        match mode {
            EvalMode::SemiStandard => {
                if !self.semi_standard {
                    return Err(SolidError::NotAudited);
                }
                accumulate(mesh, index, x, sides, &mut num);
            }
            EvalMode::Rational => {
                // Rational basis R_i = w_i B_i / Σ w_j B_j, formed per function.
                let pts = mesh.points();
                let den: f64 = index
                    .candidates(x)
                    .iter()
                    .map(|&i| {
                        let p = &pts[i as usize];
                        p.weight.value() * p.blending_side(x, sides)
                    })
                    .sum();
                if den.abs() < 1e-14 {
                    return Err(SolidError::Hole(den));
                }
                for &i in index.candidates(x) {
                    let p = &pts[i as usize];
                    let r = p.weight.value() * p.blending_side(x, sides) / den;
                    if r != 0.0 {
                        for (n, c) in num.iter_mut().zip(&p.position) {
                            *n += r * c;
                        }
                    }
                }
            }
        }
        Ok(num)
    }

    /// Rational basis values `w B / Σ w B` of the home chart at a
    /// cuboid-local parameter, as (point index within the chart, value).
    pub fn basis_row(&self, cuboid: usize, h: Vec3) -> Result<(usize, Vec<(usize, f64)>), SolidError> {
        let (ci, x) = self.locate(cuboid, h)?;
        let row = self.basis_row_chart(ci, x).map_err(|e| match e {
            SolidError::OutsideDomain(..) => SolidError::OutsideDomain(cuboid, h),
            e => e,
        })?;
        Ok((ci, row))
    }

    pub fn basis_row_chart(&self, ci: usize, x: Vec3) -> Result<Vec<(usize, f64)>, SolidError> {
        let mesh = &self.charts[ci].mesh;
        let sides = mesh.sides_at(x).ok_or(SolidError::OutsideDomain(ci, x))?;
        let pts = mesh.points();
        let mut row: Vec<(usize, f64)> = self.indices()[ci]
            .candidates(x)
            .iter()
            .filter_map(|&i| {
                let p = &pts[i as usize];
                let b = p.weight.value() * p.blending_side(x, sides);
                (b != 0.0).then_some((i as usize, b))
            })
            .collect();
        let den: f64 = row.iter().map(|r| r.1).sum();
        if den.abs() < 1e-14 {
            return Err(SolidError::Hole(den));
        }
        row.iter_mut().for_each(|r| r.1 /= den);
        row.sort_unstable_by_key(|r| r.0);
        Ok(row)
    }

    /// Whether a chart-frame point lies on the boundary of the chart's
    /// region (glued faces inside a merged chart do not count).
    pub fn on_chart_boundary(&self, ci: usize, x: Vec3) -> bool {
        let mesh = &self.charts[ci].mesh;
        let e = mesh.hull().extent();
        let delta = 1e-9 * e[0].max(e[1]).max(e[2]).max(1.0);
        (0..27).filter(|&k| k != 13).any(|k: usize| {
            let p: Vec3 = std::array::from_fn(|a| x[a] + delta * ((k / 3usize.pow(a as u32)) % 3) as f64 - delta);
            !mesh.domain().iter().any(|(_, b)| b.contains(p, 0.0))
        })
    }

    /// Partial derivative along a cuboid-local axis (division-free form).
    pub fn partial(&self, cuboid: usize, h: Vec3, axis: usize, order: u8) -> Result<Vec<f64>, SolidError> {
        if !(1..=2).contains(&order) || axis > 2 {
            return Err(SolidError::Order(order));
        }
        if !self.semi_standard {
            return Err(SolidError::NotAudited);
        }
        let (_, t) = self.chart_of(cuboid)?;
        let (ci, x) = self.locate(cuboid, h)?;
        let (ca, sign) = t.image_axis(axis);
        let mesh = &self.charts[ci].mesh;
        let sides = mesh.sides_at(x).ok_or(SolidError::OutsideDomain(cuboid, h))?;
        let eps = mesh.eps();
        let mut out = vec![0.0; mesh.dim()];
        let pts = mesh.points();
        for &i in self.indices()[ci].candidates(x) {
            let p = &pts[i as usize];
            let in_support = (0..3).all(|a| {
                let k = p.knots[a].knots();
                x[a] >= k[0] - eps && x[a] <= k[4] + eps
            });
            if !in_support {
                continue;
            }
            let k = p.knots[ca].knots();
            for &v in &k[1..4] {
                if (x[ca] - v).abs() <= eps && p.knots[ca].count(v) >= 4 - order as usize {
                    return Err(SolidError::Discontinuity(order, h));
                }
            }
            let mut d = p.weight.value();
            for a in 0..3 {
                d *= if a == ca {
                    basis_derivative_side(&p.knots[a], x[a], order, sides[a]).map_err(|_| SolidError::Order(order))?
                } else {
                    cubic_basis_side(&p.knots[a], x[a], sides[a])
                };
            }
            if d != 0.0 {
                for (o, c) in out.iter_mut().zip(&p.position) {
                    *o += d * c;
                }
            }
        }
        if order == 1 && sign < 0.0 {
            out.iter_mut().for_each(|v| *v = -*v);
        }
        Ok(out)
    }

    /// Stratified sample sites: jittered points in every member cell plus
    /// all cell corners, as (cuboid, local parameter).
    pub fn audit_sites(&self, samples: usize, seed: u64) -> Vec<(usize, Vec3)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cells: usize = self.charts.iter().map(|c| c.mesh.cells().iter().filter(|c| !c.aux).count()).sum();
        let per = samples.div_ceil(cells.max(1)).max(1);
        let mut out = Vec::with_capacity(cells * (per + 8));
        for ch in &self.charts {
            let inv: Vec<(usize, Transform)> = ch.frames.iter().map(|(c, t)| (*c, t.inverse())).collect();
            for cell in ch.mesh.cells().iter().filter(|c| !c.aux) {
                let Some((_, t)) = inv.iter().find(|(c, _)| *c == cell.cuboid) else { continue };
                let b = cell.bounds;
                for _ in 0..per {
                    let x: Vec3 = std::array::from_fn(|a| b.lo[a] + rng.gen::<f64>() * (b.hi[a] - b.lo[a]));
                    out.push((cell.cuboid, t.apply(x)));
                }
                for k in 0..8 {
                    let x: Vec3 = std::array::from_fn(|a| if k >> a & 1 == 1 { b.hi[a] } else { b.lo[a] });
                    out.push((cell.cuboid, t.apply(x)));
                }
            }
        }
        out
    }

    /// Worst |Σ wB − 1| over stratified samples; sets the semi-standard flag
    /// when it is within tolerance.
    pub fn audit_semi_standard(&mut self, samples: usize) -> (f64, (usize, Vec3)) {
        let sites = self.audit_sites(samples.max(1), 0x5eed);
        let worst = sites
            .par_iter()
            .map(|&(c, h)| {
                let d = match self.weight_sum(c, h) {
                    Ok(s) => (s - 1.0).abs(),
                    Err(_) => f64::INFINITY,
                };
                (d, (c, h))
            })
            .reduce(|| (0.0, (0, [0.0; 3])), |a, b| if b.0 > a.0 { b } else { a });
        self.semi_standard = worst.0 <= SEMI_STANDARD_TOL;
        self.deviation = Some(worst.0);
        worst
    }

    /// Uniform refinement of every member cell of every chart.
    pub fn refine_all(&mut self) -> Result<(), SolidError> {
        for ch in self.charts_mut() {
            let ids: Vec<u64> = ch.mesh.cells().iter().filter(|c| !c.aux).map(|c| c.id).collect();
            ch.mesh.subdivide_cells(&ids)?;
        }
        Ok(())
    }

    /// Subdivides cells of a chart and runs boundary modification on every
    /// open glued face whose merge requirement the refinement broke.
    pub fn refine_cells(&mut self, chart: usize, cells: &[u64]) -> Result<Vec<u64>, SolidError> {
        if chart >= self.charts.len() {
            return Err(SolidError::Invalid(format!("no chart {chart}")));
        }
        let faces: Vec<(usize, Face)> = self
            .open_glued_faces(chart)
            .into_iter()
            .map(|(c, f)| (c, chart_face(self.charts[chart].frame(c).unwrap(), f)))
            .collect();
        self.invalidate();
        let mesh = &mut self.charts[chart].mesh;
        let log = mesh.subdivide_cells(cells)?;
        // Modifying one face can disturb the weights near another, so faces
        // are revisited until every one is ready. Ready faces are left alone.
        for _ in 0..faces.len() + 1 {
            let mut stale = false;
            for &(c, f) in &faces {
                if mesh.face_blocker(c, f)?.is_some() {
                    stale = true;
                    let all: Vec<u64> = mesh.cells().iter().filter(|x| !x.aux).map(|x| x.id).collect();
                    mesh.boundary_modification(&all, c, f)?;
                }
            }
            if !stale {
                return Ok(log.new_cells);
            }
        }
        match faces.iter().find_map(|&(c, f)| mesh.face_blocker(c, f).transpose()) {
            None => Ok(log.new_cells),
            Some(r) => {
                let (id, w) = r?;
                Err(TMeshError::BoundaryRequirement(id, w).into())
            }
        }
    }

    /// Glued faces of chart members whose partner lies in another chart.
    pub fn open_glued_faces(&self, chart: usize) -> Vec<(usize, Face)> {
        let members: Vec<usize> = self.charts[chart].frames.iter().map(|(c, _)| *c).collect();
        let mut out = Vec::new();
        for e in self.graph.edges() {
            for (side, other) in [(e.a, e.b), (e.b, e.a)] {
                if members.contains(&side.0) && !members.contains(&other.0) {
                    out.push(side);
                }
            }
        }
        out.sort();
        out.dedup();
        out
    }

    /// Sets every control point's position from its Greville parameter,
    /// given in cuboid-local coordinates.
    pub fn set_positions(&mut self, f: impl Fn(usize, Vec3) -> Vec<f64>) {
        for ch in &mut self.charts {
            let inv: Vec<(usize, Transform)> = ch.frames.iter().map(|(c, t)| (*c, t.inverse())).collect();
            for p in ch.mesh.points_mut() {
                let g: Vec3 = std::array::from_fn(|a| {
                    let k = p.knots[a].knots();
                    (k[1] + k[2] + k[3]) / 3.0
                });
                let (c, t) = inv.iter().find(|(c, _)| *c == p.cuboid).unwrap_or(&inv[0]);
                p.position = f(*c, t.apply(g));
            }
        }
        self.index = OnceLock::new();
    }

    /// Every control point with its chart index.
    pub fn all_points(&self) -> impl Iterator<Item = (usize, &ControlPoint)> {
        self.charts
            .iter()
            .enumerate()
            .flat_map(|(i, c)| c.mesh.points().iter().map(move |p| (i, p)))
    }

    /// Member boxes in cuboid-local frames.
    pub fn cuboid_box(&self, cuboid: usize) -> Result<Aabb, SolidError> {
        Ok(self.graph.cuboid(cuboid)?.bounds())
    }

    /// Cuboids whose chart functions may reach `h`, found by chaining glued
    /// faces; reach is three cell widths normal to each face.
    pub fn support_cuboids(&self, cuboid: usize, h: Vec3) -> Result<Vec<(usize, Vec3)>, SolidError> {
        self.chart_of(cuboid)?;
        let reach = |c: usize, f: Face| -> f64 {
            let Ok((ci, t)) = self.chart_of(c) else { return 0.0 };
            let mesh = &self.charts[ci].mesh;
            mesh.boundary_cells(c, chart_face(t, f))
                .ok()
                .and_then(|ids| {
                    ids.iter()
                        .filter_map(|id| mesh.cells().iter().find(|x| x.id == *id))
                        .map(|x| x.bounds.extent()[t.image_axis(f.axis).0])
                        .reduce(f64::max)
                })
                .map_or(0.0, |w| 3.0 * w)
        };
        Ok(self.graph.support_cuboids_with(cuboid, h, reach)?)
    }
}
