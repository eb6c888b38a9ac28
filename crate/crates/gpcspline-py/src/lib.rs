use gpcspline::basis::{cubic_basis, KnotVector5};
use gpcspline::fit::{self, Sample, SampleSet};
use gpcspline::gpc::GpcGraph;
use gpcspline::io;
use gpcspline::lattice::{self, Lattice as CoreLattice};
use gpcspline::merge::{self, MergeKind};
use gpcspline::solid::{EvalMode, SplineSolid};
use gpcspline::tmesh::Face;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use std::collections::BTreeMap;

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn mode(name: &str) -> PyResult<EvalMode> {
    match name {
        "semi" | "semi_standard" => Ok(EvalMode::SemiStandard),
        "rational" => Ok(EvalMode::Rational),
        _ => Err(err(format!("unknown mode '{name}'"))),
    }
}

fn face(name: &str) -> PyResult<Face> {
    Face::parse(name).ok_or_else(|| err(format!("bad face '{name}'")))
}

fn kind(name: &str) -> PyResult<MergeKind> {
    name.parse().map_err(err)
}

/// A spline solid over a glued set of cuboids.
#[pyclass(name = "Solid", skip_from_py_object)]
#[derive(Clone)]
struct PySolid {
    inner: SplineSolid,
}

#[pymethods]
impl PySolid {
    /// Standard boundary-restricted grid. `glue` entries are
    /// `(a, face_a, b, face_b, rotation)` with faces like "+U".
    #[staticmethod]
    #[pyo3(signature = (extents, spans, glue=Vec::new()))]
    fn standard(
        extents: Vec<[f64; 3]>,
        spans: Vec<[usize; 3]>,
        glue: Vec<(usize, String, usize, String, u8)>,
    ) -> PyResult<Self> {
        let mut g = GpcGraph::new();
        for e in extents {
            g.add_cuboid(e).map_err(err)?;
        }
        for (a, fa, b, fb, r) in glue {
            g.glue((a, face(&fa)?), (b, face(&fb)?), r).map_err(err)?;
        }
        let inner = SplineSolid::standard(g, &spans).map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: io::parse_solid(text).map_err(err)?,
        })
    }

    fn to_text(&self) -> String {
        io::write_solid(&self.inner)
    }

    #[getter]
    fn point_count(&self) -> usize {
        self.inner.point_count()
    }

    #[getter]
    fn cuboid_count(&self) -> usize {
        self.inner.graph.cuboids().len()
    }

    #[getter]
    fn is_semi_standard(&self) -> bool {
        self.inner.is_semi_standard()
    }

    /// Worst partition-of-unity deviation over stratified samples.
    #[pyo3(signature = (samples=10_000))]
    fn audit(&mut self, samples: usize) -> f64 {
        self.inner.audit_semi_standard(samples).0
    }

    #[pyo3(signature = (cuboid, u, v, w, mode_name="semi"))]
    fn evaluate(&self, cuboid: usize, u: f64, v: f64, w: f64, mode_name: &str) -> PyResult<Vec<f64>> {
        self.inner.evaluate(cuboid, [u, v, w], mode(mode_name)?).map_err(err)
    }

    fn partial(&self, cuboid: usize, u: f64, v: f64, w: f64, axis: usize, order: u8) -> PyResult<Vec<f64>> {
        self.inner.partial(cuboid, [u, v, w], axis, order).map_err(err)
    }

    fn refine_all(&mut self) -> PyResult<()> {
        self.inner.refine_all().map_err(err)
    }

    fn refine(&mut self, chart: usize, cells: Vec<u64>) -> PyResult<Vec<u64>> {
        self.inner.refine_cells(chart, &cells).map_err(err)
    }

    /// Cell ids of a chart, auxiliary cells excluded.
    fn cells(&self, chart: usize) -> PyResult<Vec<u64>> {
        let ch = self.inner.charts().get(chart).ok_or_else(|| err(format!("no chart {chart}")))?;
        Ok(ch.mesh.cells().iter().filter(|c| !c.aux).map(|c| c.id).collect())
    }

    /// Merges the listed cuboids; returns the merged solid.
    fn merge(&self, kind_name: &str, cuboids: Vec<usize>) -> PyResult<Self> {
        let k = kind(kind_name)?;
        let entry = io::PlanEntry { kind: k, cuboids };
        let (inner, _) = gpcspline::cli::apply_plan_entry(&self.inner, &entry).map_err(err)?;
        Ok(Self { inner })
    }

    /// Runs the audit, support and knot-consistency checks.
    fn check(&self) -> (bool, String) {
        let r = gpcspline::cli::check_solid(&self.inner);
        (r.passed, r.text)
    }

    /// Hierarchical fit to `(cuboid, (u, v, w), target)` samples; returns
    /// the fitted solid and the per-level RMS values.
    fn fit(&self, samples: Vec<(usize, [f64; 3], Vec<f64>)>, epsilon: f64, levels: usize) -> PyResult<(Self, Vec<f64>)> {
        let set = SampleSet::new(
            samples
                .into_iter()
                .map(|(cuboid, param, target)| Sample { cuboid, param, target })
                .collect(),
        )
        .map_err(err)?;
        let (inner, reports) = fit::hierarchical_fit(&self.inner, &set, epsilon, levels).map_err(err)?;
        Ok((Self { inner }, reports.iter().map(|r| r.rms).collect()))
    }

    fn __repr__(&self) -> String {
        format!(
            "Solid(cuboids={}, charts={}, points={})",
            self.inner.graph.cuboids().len(),
            self.inner.charts().len(),
            self.inner.point_count()
        )
    }
}

#[pyfunction]
fn basis(knots: [f64; 5], u: f64) -> PyResult<f64> {
    Ok(cubic_basis(&KnotVector5::new(knots).map_err(err)?, u))
}

/// Derived junction weights as `{slot: "p/q"}`; raises when the
/// derivation disagrees with the stored table.
#[pyfunction]
fn weight_table(kind_name: &str) -> PyResult<BTreeMap<u8, String>> {
    let t = merge::derive_weight_table(kind(kind_name)?).map_err(err)?;
    Ok(t.entries
        .into_iter()
        .filter_map(|(i, w)| w.map(|w| (i, w.to_string())))
        .collect())
}

/// Relaxes a lattice given as `k`-fastest node rows; returns the nodes,
/// the sweep count and whether it converged.
#[pyfunction]
#[pyo3(signature = (dims, nodes, threshold=1e-10, max_iters=10_000))]
fn relax(dims: [usize; 3], nodes: Vec<Vec<f64>>, threshold: f64, max_iters: usize) -> PyResult<(Vec<Vec<f64>>, usize, bool)> {
    let l = CoreLattice::new(dims, nodes).map_err(err)?;
    let r = lattice::relax(&l, threshold, max_iters).map_err(err)?;
    Ok((r.lattice.nodes().to_vec(), r.iterations, r.converged))
}

#[pymodule]
fn gpcspline_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySolid>()?;
    m.add_function(wrap_pyfunction!(basis, m)?)?;
    m.add_function(wrap_pyfunction!(weight_table, m)?)?;
    m.add_function(wrap_pyfunction!(relax, m)?)?;
    Ok(())
}
