//! Least-squares fitting of control point positions to sampled targets:
//! boundary, interior (harmonic stencil), global and hierarchical fits.

use crate::geom::Vec3;
use crate::solid::{EvalMode, SolidError, SplineSolid};
use crate::tmesh::ControlPoint;
use nalgebra::DVector;
use nalgebra_sparse::{CooMatrix, CsrMatrix};
use rayon::prelude::*;
use std::collections::BTreeMap;
use thiserror::Error;

/// Relative Tikhonov weight.
pub const REGULARIZATION: f64 = 1e-9;
/// Samples per audit after each hierarchical level.
const AUDIT_SAMPLES: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("empty sample set")]
    Empty,
    #[error("sample {0}: {1}")]
    Sample(usize, SolidError),
    #[error("sample {0} has {1} target components, expected {2}")]
    Dimension(usize, usize, usize),
    #[error("sample {0} has a non-finite value")]
    NonFinite(usize),
    #[error("singular fit system: {0}")]
    Singular(String),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Solid(#[from] SolidError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub cuboid: usize,
    pub param: Vec3,
    pub target: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SampleSet {
    samples: Vec<Sample>,
    dim: usize,
}

impl SampleSet {
    pub fn new(samples: Vec<Sample>) -> Result<Self, FitError> {
        let dim = samples.first().map_or(0, |s| s.target.len());
        for (i, s) in samples.iter().enumerate() {
            if s.target.len() != dim {
                return Err(FitError::Dimension(i, s.target.len(), dim));
            }
            if !s.param.iter().chain(&s.target).all(|v| v.is_finite()) {
                return Err(FitError::NonFinite(i));
            }
        }
        Ok(Self { samples, dim })
    }

    /// `n³` samples per cuboid on a uniform parameter lattice that includes
    /// the faces; `f` maps (cuboid, local parameter) to the target.
    pub fn lattice(solid: &SplineSolid, n: usize, f: impl Fn(usize, Vec3) -> Vec<f64>) -> Result<Self, FitError> {
        let n = n.max(2);
        let mut out = Vec::new();
        for c in solid.graph.cuboids() {
            let e = c.extents;
            for k in 0..n {
                for j in 0..n {
                    for i in 0..n {
                        let t = [i, j, k];
                        let h: Vec3 = std::array::from_fn(|a| e[a] * t[a] as f64 / (n - 1) as f64);
                        out.push(Sample {
                            cuboid: c.id,
                            param: h,
                            target: f(c.id, h),
                        });
                    }
                }
            }
        }
        Self::new(out)
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Bounding-box diagonal of the targets; 1 for a degenerate box so that
    /// errors of constant fields stay in model units.
    pub fn diagonal(&self) -> f64 {
        let mut lo = vec![f64::INFINITY; self.dim];
        let mut hi = vec![f64::NEG_INFINITY; self.dim];
        for s in &self.samples {
            for (d, v) in s.target.iter().enumerate() {
                lo[d] = lo[d].min(*v);
                hi[d] = hi[d].max(*v);
            }
        }
        let d = lo.iter().zip(&hi).map(|(l, h)| (h - l).powi(2)).sum::<f64>().sqrt();
        if d > 0.0 && d.is_finite() {
            d
        } else {
            1.0
        }
    }

    /// Every parameter lies in its cuboid's box.
    pub fn validate(&self, solid: &SplineSolid) -> Result<(), FitError> {
        for (i, s) in self.samples.iter().enumerate() {
            solid.locate(s.cuboid, s.param).map_err(|e| FitError::Sample(i, e))?;
        }
        Ok(())
    }

    /// True for samples on the boundary of their chart's region.
    pub fn surface_mask(&self, solid: &SplineSolid) -> Result<Vec<bool>, FitError> {
        self.samples
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let (ci, x) = solid.locate(s.cuboid, s.param).map_err(|e| FitError::Sample(i, e))?;
                Ok(solid.on_chart_boundary(ci, x))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellError {
    pub chart: usize,
    pub cell: u64,
    /// Worst normalized error over the samples in the cell.
    pub max: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FitReport {
    pub level: usize,
    pub rms: f64,
    pub cell_errors: Vec<CellError>,
    pub points: usize,
    /// Cells subdivided after this level.
    pub subdivided: usize,
    pub converged: bool,
    pub solver_iterations: usize,
    pub deviation: Option<f64>,
    pub warnings: Vec<String>,
}

impl FitReport {
    pub fn max_cell_error(&self) -> f64 {
        self.cell_errors.iter().map(|c| c.max).fold(0.0, f64::max)
    }
}

/// Residual of the harmonic stencil after an interior fit.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InteriorReport {
    pub equations: usize,
    pub unknowns: usize,
    pub max_residual: f64,
    pub solver_iterations: usize,
    pub warnings: Vec<String>,
}

fn eval_mode(solid: &SplineSolid) -> EvalMode {
    if solid.is_semi_standard() {
        EvalMode::SemiStandard
    } else {
        EvalMode::Rational
    }
}

/// `sqrt(mean ‖F(h) − v‖²)` divided by the target diagonal.
pub fn rms(solid: &SplineSolid, samples: &SampleSet) -> Result<f64, FitError> {
    let errs = sample_errors(solid, samples)?;
    Ok(rms_from(&errs, samples.diagonal()))
}

/// Unnormalized error norm per sample.
fn sample_errors(solid: &SplineSolid, samples: &SampleSet) -> Result<Vec<f64>, FitError> {
    if samples.is_empty() {
        return Err(FitError::Empty);
    }
    let mode = eval_mode(solid);
    samples
        .samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let f = solid.evaluate(s.cuboid, s.param, mode).map_err(|e| FitError::Sample(i, e))?;
            Ok(f.iter()
                .zip(&s.target)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt())
        })
        .collect()
}

/// Worst normalized error per member cell holding at least one sample.
pub fn cell_errors(solid: &SplineSolid, samples: &SampleSet) -> Result<Vec<CellError>, FitError> {
    let errs = sample_errors(solid, samples)?;
    cells_from(solid, samples, &errs)
}

fn rms_from(errs: &[f64], diag: f64) -> f64 {
    let ss: f64 = errs.iter().map(|e| e * e).sum();
    (ss / errs.len() as f64).sqrt() / diag
}

fn cells_from(solid: &SplineSolid, samples: &SampleSet, errs: &[f64]) -> Result<Vec<CellError>, FitError> {
    let diag = samples.diagonal();
    let locators: Vec<CellLocator> = solid.charts().iter().map(|c| CellLocator::new(&c.mesh)).collect();
    let mut acc: BTreeMap<(usize, u64), (f64, usize)> = BTreeMap::new();
    for (s, &e) in samples.samples.iter().zip(errs) {
        let (ci, x) = solid.locate(s.cuboid, s.param)?;
        if let Some(cell) = locators[ci].find(&solid.charts()[ci].mesh, x) {
            let slot = acc.entry((ci, cell)).or_insert((0.0, 0));
            slot.0 = slot.0.max(e / diag);
            slot.1 += 1;
        }
    }
    Ok(acc
        .into_iter()
        .map(|((chart, cell), (max, n))| CellError {
            chart,
            cell,
            max,
            samples: n,
        })
        .collect())
}

/// Bucket lookup from a chart-frame point to the member cell holding it.
struct CellLocator {
    lo: Vec3,
    step: Vec3,
    n: [usize; 3],
    buckets: Vec<Vec<u32>>,
}

impl CellLocator {
    fn new(mesh: &crate::tmesh::TMesh) -> Self {
        let hull = mesh.hull();
        let count = mesh.cells().len();
        let per = (count as f64).cbrt().ceil() as usize;
        let n = [per.clamp(1, 64); 3];
        let e = hull.extent();
        let step: Vec3 = std::array::from_fn(|a| (e[a] / n[a] as f64).max(f64::MIN_POSITIVE));
        let idx = |x: f64, a: usize| (((x - hull.lo[a]) / step[a]).floor().max(0.0) as usize).min(n[a] - 1);
        let mut buckets = vec![Vec::new(); n[0] * n[1] * n[2]];
        for (i, c) in mesh.cells().iter().enumerate().filter(|(_, c)| !c.aux) {
            let lo: [usize; 3] = std::array::from_fn(|a| idx(c.bounds.lo[a], a));
            let hi: [usize; 3] = std::array::from_fn(|a| idx(c.bounds.hi[a], a));
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

    fn find(&self, mesh: &crate::tmesh::TMesh, x: Vec3) -> Option<u64> {
        let idx: [usize; 3] = std::array::from_fn(|a| {
            (((x[a] - self.lo[a]) / self.step[a]).floor().max(0.0) as usize).min(self.n[a] - 1)
        });
        let eps = mesh.eps();
        self.buckets[idx[0] + self.n[0] * (idx[1] + self.n[1] * idx[2])]
            .iter()
            .map(|&i| &mesh.cells()[i as usize])
            .find(|c| c.bounds.contains(x, eps))
            .map(|c| c.id)
    }
}

/// Which points of the solid are unknowns: column per (chart, point index).
struct Unknowns {
    cols: Vec<Vec<Option<usize>>>,
    list: Vec<(usize, usize)>,
}

impl Unknowns {
    fn new(solid: &SplineSolid, pick: impl Fn(&ControlPoint) -> bool) -> Self {
        let mut list = Vec::new();
        let cols = solid
            .charts()
            .iter()
            .enumerate()
            .map(|(ci, ch)| {
                ch.mesh
                    .points()
                    .iter()
                    .enumerate()
                    .map(|(i, p)| {
                        pick(p).then(|| {
                            list.push((ci, i));
                            list.len() - 1
                        })
                    })
                    .collect()
            })
            .collect();
        Self { cols, list }
    }
}

/// One least-squares row: unknown coefficients and the right-hand side
/// after moving the fixed points over.
struct Row {
    coef: Vec<(usize, f64)>,
    rhs: Vec<f64>,
}

fn split_row(solid: &SplineSolid, unk: &Unknowns, ci: usize, basis: &[(usize, f64)], target: &[f64]) -> Row {
    let pts = solid.charts()[ci].mesh.points();
    let mut rhs = target.to_vec();
    let mut coef = Vec::with_capacity(basis.len());
    for &(i, b) in basis {
        match unk.cols[ci][i] {
            Some(col) => coef.push((col, b)),
            None => {
                for (r, x) in rhs.iter_mut().zip(&pts[i].position) {
                    *r -= b * x;
                }
            }
        }
    }
    Row { coef, rhs }
}

struct Solution {
    values: Vec<Vec<f64>>,
    iterations: usize,
    warnings: Vec<String>,
}

/// Minimizes `‖B P − V‖² + λ ‖P − P₀‖²` with Jacobi-preconditioned
/// conjugate gradients on the normal equations, one solve per component.
/// The prior `P₀` keeps unconstrained points where they are.
fn solve(rows: &[Row], n: usize, prior: &[Vec<f64>], dim: usize) -> Result<Solution, FitError> {
    if n == 0 {
        return Ok(Solution {
            values: Vec::new(),
            iterations: 0,
            warnings: Vec::new(),
        });
    }
    let mut coo = CooMatrix::new(rows.len(), n);
    for (r, row) in rows.iter().enumerate() {
        for &(c, v) in &row.coef {
            coo.push(r, c, v);
        }
    }
    let b = CsrMatrix::from(&coo);
    let bt = b.transpose();
    let mut diag = vec![0.0; n];
    for (r, c, v) in b.triplet_iter() {
        let _ = r;
        diag[c] += v * v;
    }
    let trace: f64 = diag.iter().sum();
    if trace <= 0.0 || !trace.is_finite() {
        return Err(FitError::Singular("no equation involves an unknown".into()));
    }
    let lambda = REGULARIZATION * trace / n as f64;
    let mut warnings = Vec::new();
    let free = diag.iter().filter(|d| **d == 0.0).count();
    if free > 0 {
        warnings.push(format!("{free} unknowns have no equations; regularization keeps them in place"));
    }
    let precond: Vec<f64> = diag.iter().map(|d| 1.0 / (d + lambda)).collect();
    let normal = &bt * &b;
    let apply = |x: &DVector<f64>| -> DVector<f64> {
        let mut y = &normal * x;
        y.axpy(lambda, x, 1.0);
        y
    };
    // Iterated Tikhonov: re-centring the prior on the last solution removes
    // the regularization bias along every well-determined direction.
    const ROUNDS: usize = 3;
    let solved: Vec<(Vec<f64>, usize, f64)> = (0..dim)
        .into_par_iter()
        .map(|d| {
            let v = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.rhs[d]));
            let btv = &bt * &v;
            let mut x = DVector::from_iterator(n, prior.iter().map(|p| p[d]));
            let mut total = 0;
            let mut rel = 0.0;
            for _ in 0..ROUNDS {
                let mut rhs = btv.clone();
                rhs.axpy(lambda, &x, 1.0);
                let (next, it, r) = cg(&apply, &rhs, x.clone(), &precond);
                x = DVector::from_vec(next);
                total += it;
                rel = r;
            }
            (x.iter().copied().collect(), total, rel)
        })
        .collect();
    let mut values = vec![vec![0.0; dim]; n];
    let mut iterations = 0;
    for (d, (x, it, rel)) in solved.into_iter().enumerate() {
        iterations = iterations.max(it);
        if !(rel <= 1e-8) {
            return Err(FitError::Singular(format!("solver stalled at relative residual {rel:e}")));
        }
        for (v, xi) in values.iter_mut().zip(x) {
            v[d] = xi;
        }
    }
    Ok(Solution {
        values,
        iterations,
        warnings,
    })
}

fn cg(apply: &impl Fn(&DVector<f64>) -> DVector<f64>, rhs: &DVector<f64>, mut x: DVector<f64>, m: &[f64]) -> (Vec<f64>, usize, f64) {
    let n = rhs.len();
    let bnorm = rhs.norm();
    if bnorm == 0.0 {
        return (vec![0.0; n], 0, 0.0);
    }
    let tol = 1e-14 * bnorm;
    let mut r = rhs - apply(&x);
    let precondition = |r: &DVector<f64>| DVector::from_iterator(n, r.iter().zip(m).map(|(a, b)| a * b));
    let mut z = precondition(&r);
    let mut p = z.clone();
    let mut rz = r.dot(&z);
    let cap = (20 * n).clamp(200, 50_000);
    let mut it = 0;
    while it < cap && r.norm() > tol {
        let ap = apply(&p);
        let pap = p.dot(&ap);
        if pap <= 0.0 {
            break;
        }
        let alpha = rz / pap;
        x.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &ap, 1.0);
        z = precondition(&r);
        let rz2 = r.dot(&z);
        p = &z + (rz2 / rz) * &p;
        rz = rz2;
        it += 1;
    }
    // Recompute the true residual to guard against drift.
    let rel = (rhs - apply(&x)).norm() / bnorm;
    (x.iter().copied().collect(), it, rel)
}

fn prior(solid: &SplineSolid, unk: &Unknowns, dim: usize) -> Vec<Vec<f64>> {
    unk.list
        .iter()
        .map(|&(ci, i)| {
            let mut p = solid.charts()[ci].mesh.points()[i].position.clone();
            p.resize(dim, 0.0);
            p
        })
        .collect()
}

fn write_back(solid: &mut SplineSolid, unk: &Unknowns, values: Vec<Vec<f64>>) {
    let charts = solid.charts().len();
    let mut per: Vec<Vec<(usize, Vec<f64>)>> = vec![Vec::new(); charts];
    for (&(ci, i), v) in unk.list.iter().zip(values) {
        per[ci].push((i, v));
    }
    // Positions only: the audit flag stays valid.
    let audit = (solid.is_semi_standard(), solid.deviation());
    for (ci, items) in per.into_iter().enumerate() {
        let pts = solid.charts_mut()[ci].mesh.points_mut();
        for (i, v) in items {
            pts[i].position = v;
        }
    }
    solid.set_audit(audit.0, audit.1);
}

/// Solid with its attribute dimension matching the samples.
fn with_dim(solid: &SplineSolid, dim: usize) -> SplineSolid {
    let mut s = solid.clone();
    if s.dim() != dim {
        s.set_dim(dim);
    }
    s
}

fn fit_subset(
    solid: &SplineSolid,
    samples: &SampleSet,
    subset: &[usize],
    pick: impl Fn(&ControlPoint) -> bool,
) -> Result<(SplineSolid, FitReport), FitError> {
    if subset.is_empty() {
        return Err(FitError::Empty);
    }
    let dim = samples.dim();
    let mut out = with_dim(solid, dim);
    let unk = Unknowns::new(&out, pick);
    let rows: Vec<Row> = subset
        .par_iter()
        .map(|&i| {
            let s = &samples.samples[i];
            let (ci, basis) = out.basis_row(s.cuboid, s.param).map_err(|e| FitError::Sample(i, e))?;
            Ok(split_row(&out, &unk, ci, &basis, &s.target))
        })
        .collect::<Result<_, FitError>>()?;
    let p0 = prior(&out, &unk, dim);
    let sol = solve(&rows, unk.list.len(), &p0, dim)?;
    write_back(&mut out, &unk, sol.values);
    let used = SampleSet {
        samples: subset.iter().map(|&i| samples.samples[i].clone()).collect(),
        dim,
    };
    let errs = sample_errors(&out, &used)?;
    let report = FitReport {
        rms: rms_from(&errs, used.diagonal()),
        cell_errors: cells_from(&out, &used, &errs)?,
        points: out.point_count(),
        converged: true,
        solver_iterations: sol.iterations,
        deviation: out.deviation(),
        warnings: sol.warnings,
        ..Default::default()
    };
    Ok((out, report))
}

/// Positions the bd-control-points from the surface samples; every other
/// point is held fixed.
pub fn boundary_fit(solid: &SplineSolid, samples: &SampleSet) -> Result<(SplineSolid, FitReport), FitError> {
    let mask = samples.surface_mask(solid)?;
    let subset: Vec<usize> = (0..samples.len()).filter(|&i| mask[i]).collect();
    fit_subset(solid, samples, &subset, ControlPoint::is_bd)
}

/// Solves for every control point jointly.
pub fn global_fit(solid: &SplineSolid, samples: &SampleSet) -> Result<(SplineSolid, FitReport), FitError> {
    let subset: Vec<usize> = (0..samples.len()).collect();
    fit_subset(solid, samples, &subset, |_| true)
}

/// Per-axis uniform node coordinates of the harmonic lattice of a chart:
/// as many interior nodes as there are distinct interior Greville values.
fn interior_lattice(mesh: &crate::tmesh::TMesh) -> [Vec<f64>; 3] {
    let hull = mesh.hull();
    let eps = mesh.eps();
    std::array::from_fn(|a| {
        let mut g: Vec<f64> = mesh
            .points()
            .iter()
            .filter(|p| !p.is_bd())
            .map(|p| {
                let k = p.knots[a].knots();
                (k[1] + k[2] + k[3]) / 3.0
            })
            .collect();
        g.sort_by(f64::total_cmp);
        g.dedup_by(|x, y| (*x - *y).abs() <= eps);
        let n = g.len() + 2;
        (0..n)
            .map(|i| hull.lo[a] + (hull.hi[a] - hull.lo[a]) * i as f64 / (n - 1) as f64)
            .collect()
    })
}

/// Harmonic completion of the interior: with the bd-control-points fixed,
/// solves `F(uᵢ) − ⅙ Σⱼ F(uⱼ) = 0` over the interior nodes of a tensor
/// lattice, `uⱼ` being the six lattice neighbours of `uᵢ`.
pub fn interior_fit(solid: &SplineSolid) -> Result<(SplineSolid, InteriorReport), FitError> {
    let mut out = solid.clone();
    let dim = out.dim();
    let unk = Unknowns::new(&out, |p| !p.is_bd());
    let mut rows = Vec::new();
    for ci in 0..out.charts().len() {
        let mesh = &out.charts()[ci].mesh;
        let axes = interior_lattice(mesh);
        let n = [axes[0].len(), axes[1].len(), axes[2].len()];
        let nodes: Vec<[usize; 3]> = (0..n[2])
            .flat_map(|k| (0..n[1]).flat_map(move |j| (0..n[0]).map(move |i| [i, j, k])))
            .filter(|t| (0..3).all(|a| t[a] > 0 && t[a] + 1 < n[a]))
            .collect();
        let at = |t: [usize; 3]| -> Vec3 { std::array::from_fn(|a| axes[a][t[a]]) };
        let chart_rows: Vec<Option<Row>> = nodes
            .par_iter()
            .map(|&t| {
                let x = at(t);
                if !mesh.in_domain(x) || out.on_chart_boundary(ci, x) {
                    return Ok(None);
                }
                let mut combo: BTreeMap<usize, f64> = BTreeMap::new();
                for (i, b) in out.basis_row_chart(ci, x)? {
                    *combo.entry(i).or_default() += b;
                }
                for a in 0..3 {
                    for d in [-1isize, 1] {
                        let mut u = t;
                        u[a] = (u[a] as isize + d) as usize;
                        let y = at(u);
                        if !mesh.in_domain(y) {
                            return Ok(None);
                        }
                        for (i, b) in out.basis_row_chart(ci, y)? {
                            *combo.entry(i).or_default() -= b / 6.0;
                        }
                    }
                }
                let basis: Vec<(usize, f64)> = combo.into_iter().collect();
                Ok(Some(split_row(&out, &unk, ci, &basis, &vec![0.0; dim])))
            })
            .collect::<Result<_, SolidError>>()?;
        rows.extend(chart_rows.into_iter().flatten());
    }
    let p0 = prior(&out, &unk, dim);
    let sol = solve(&rows, unk.list.len(), &p0, dim)?;
    let max_residual = rows
        .iter()
        .map(|r| {
            (0..dim)
                .map(|d| {
                    let v: f64 = r.coef.iter().map(|&(c, b)| b * sol.values[c][d]).sum();
                    (v - r.rhs[d]).abs()
                })
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max);
    let report = InteriorReport {
        equations: rows.len(),
        unknowns: unk.list.len(),
        max_residual,
        solver_iterations: sol.iterations,
        warnings: sol.warnings,
    };
    write_back(&mut out, &unk, sol.values);
    Ok((out, report))
}

/// Adaptive loop: fit every point, measure the worst error per cell,
/// subdivide the cells above `epsilon` and fit again, for at most
/// `max_levels` fits. Refinement runs boundary modification on faces
/// still waiting to be merged so the solid stays merge-ready.
pub fn hierarchical_fit(
    solid: &SplineSolid,
    samples: &SampleSet,
    epsilon: f64,
    max_levels: usize,
) -> Result<(SplineSolid, Vec<FitReport>), FitError> {
    if !(epsilon > 0.0) {
        return Err(FitError::Invalid(format!("epsilon must be positive, got {epsilon}")));
    }
    if max_levels == 0 {
        return Err(FitError::Invalid("at least one level is required".into()));
    }
    samples.validate(solid)?;
    let mut current = solid.clone();
    let mut reports = Vec::new();
    for level in 0..max_levels {
        let (mut fitted, mut report) = global_fit(&current, samples)?;
        report.level = level;
        report.deviation = Some(fitted.audit_semi_standard(AUDIT_SAMPLES).0);
        let mut bad: BTreeMap<usize, Vec<u64>> = BTreeMap::new();
        for c in report.cell_errors.iter().filter(|c| c.max > epsilon) {
            bad.entry(c.chart).or_default().push(c.cell);
        }
        if bad.is_empty() || level + 1 == max_levels {
            report.converged = bad.is_empty();
            reports.push(report);
            current = fitted;
            break;
        }
        report.converged = false;
        report.subdivided = bad.values().map(Vec::len).sum();
        for (chart, cells) in bad {
            fitted.refine_cells(chart, &cells)?;
        }
        reports.push(report);
        current = fitted;
    }
    Ok((current, reports))
}
