//! Structured volumetric lattices and their harmonic relaxation.

use crate::geom::Vec3;
use crate::solid::{EvalMode, SolidError, SplineSolid};
use rayon::prelude::*;
use thiserror::Error;

pub const DEFAULT_MAX_ITERS: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LatticeError {
    #[error("lattice dims must be at least 2 per axis, got {0:?}")]
    Dims([usize; 3]),
    #[error("expected {expected} nodes, found {found}")]
    Count { expected: usize, found: usize },
    #[error("node {0} has {1} components, expected {2}")]
    Dimension(usize, usize, usize),
    #[error("node {0} has a non-finite coordinate")]
    NonFinite(usize),
    #[error("threshold must be positive and finite, got {0}")]
    Threshold(f64),
    #[error(transparent)]
    Solid(#[from] SolidError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    dims: [usize; 3],
    nodes: Vec<Vec<f64>>,
    surface: Vec<bool>,
}

impl Lattice {
    /// Nodes in `k`-fastest order: index `(i·n₁ + j)·n₂ + k`.
    pub fn new(dims: [usize; 3], nodes: Vec<Vec<f64>>) -> Result<Self, LatticeError> {
        if dims.iter().any(|&n| n < 2) {
            return Err(LatticeError::Dims(dims));
        }
        let expected = dims[0] * dims[1] * dims[2];
        if nodes.len() != expected {
            return Err(LatticeError::Count {
                expected,
                found: nodes.len(),
            });
        }
        let dim = nodes[0].len();
        for (i, n) in nodes.iter().enumerate() {
            if n.len() != dim {
                return Err(LatticeError::Dimension(i, n.len(), dim));
            }
            if !n.iter().all(|v| v.is_finite()) {
                return Err(LatticeError::NonFinite(i));
            }
        }
        let surface = (0..expected)
            .map(|idx| {
                let t = unindex(dims, idx);
                (0..3).any(|a| t[a] == 0 || t[a] + 1 == dims[a])
            })
            .collect();
        Ok(Self { dims, nodes, surface })
    }

    pub fn from_fn(dims: [usize; 3], f: impl Fn([usize; 3]) -> Vec<f64>) -> Result<Self, LatticeError> {
        let count = dims.iter().product::<usize>();
        Self::new(dims, (0..count).map(|i| f(unindex(dims, i))).collect())
    }

    /// Surface nodes from `f`; interior nodes start at the surface centroid.
    pub fn with_boundary(dims: [usize; 3], f: impl Fn([usize; 3]) -> Vec<f64>) -> Result<Self, LatticeError> {
        let mut l = Self::from_fn(dims, f)?;
        let dim = l.dim();
        let mut c = vec![0.0; dim];
        let mut n = 0.0;
        for (p, _) in l.nodes.iter().zip(&l.surface).filter(|(_, s)| **s) {
            c.iter_mut().zip(p).for_each(|(a, b)| *a += b);
            n += 1.0;
        }
        c.iter_mut().for_each(|a| *a /= n);
        for (p, s) in l.nodes.iter_mut().zip(&l.surface) {
            if !s {
                p.clone_from(&c);
            }
        }
        Ok(l)
    }

    /// Uniform lattice over the unit cube.
    pub fn unit_cube(dims: [usize; 3]) -> Result<Self, LatticeError> {
        Self::from_fn(dims, |t| (0..3).map(|a| t[a] as f64 / (dims[a] - 1).max(1) as f64).collect())
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn dim(&self) -> usize {
        self.nodes[0].len()
    }

    pub fn nodes(&self) -> &[Vec<f64>] {
        &self.nodes
    }

    pub fn surface(&self) -> &[bool] {
        &self.surface
    }

    pub fn index(&self, t: [usize; 3]) -> usize {
        (t[0] * self.dims[1] + t[1]) * self.dims[2] + t[2]
    }

    pub fn node(&self, t: [usize; 3]) -> &[f64] {
        &self.nodes[self.index(t)]
    }

    /// Bounding-box diagonal of the surface nodes.
    pub fn diagonal(&self) -> f64 {
        let (lo, hi) = self.surface_range();
        lo.iter().zip(&hi).map(|(l, h)| (h - l).powi(2)).sum::<f64>().sqrt()
    }

    /// Component-wise min and max over the surface nodes.
    pub fn surface_range(&self) -> (Vec<f64>, Vec<f64>) {
        let dim = self.dim();
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for (p, _) in self.nodes.iter().zip(&self.surface).filter(|(_, s)| **s) {
            for d in 0..dim {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        (lo, hi)
    }

    fn neighbour_mean(&self, nodes: &[Vec<f64>], idx: usize) -> Vec<f64> {
        let t = unindex(self.dims, idx);
        let mut m = vec![0.0; self.dim()];
        for a in 0..3 {
            for up in [false, true] {
                let mut u = t;
                u[a] = if up { u[a] + 1 } else { u[a] - 1 };
                for (s, v) in m.iter_mut().zip(&nodes[self.index(u)]) {
                    *s += v;
                }
            }
        }
        m.iter_mut().for_each(|s| *s /= 6.0);
        m
    }

    /// Largest `|nᵢ − mean of six neighbours|` over interior nodes.
    pub fn stencil_residual(&self) -> f64 {
        (0..self.nodes.len())
            .filter(|&i| !self.surface[i])
            .map(|i| {
                let m = self.neighbour_mean(&self.nodes, i);
                m.iter()
                    .zip(&self.nodes[i])
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }
}

fn unindex(dims: [usize; 3], idx: usize) -> [usize; 3] {
    let k = idx % dims[2];
    let j = (idx / dims[2]) % dims[1];
    let i = idx / (dims[1] * dims[2]);
    [i, j, k]
}

#[derive(Debug, Clone, PartialEq)]
pub struct Relaxed {
    pub lattice: Lattice,
    pub iterations: usize,
    pub converged: bool,
    /// Normalized max displacement of every sweep.
    pub displacements: Vec<f64>,
}

/// Jacobi sweeps moving every interior node to the mean of its six
/// neighbours, until the largest move (relative to the surface diagonal)
/// drops below `threshold` or `max_iters` sweeps have run.
pub fn relax(lattice: &Lattice, threshold: f64, max_iters: usize) -> Result<Relaxed, LatticeError> {
    if !(threshold > 0.0 && threshold.is_finite()) {
        return Err(LatticeError::Threshold(threshold));
    }
    let diag = lattice.diagonal();
    let scale = if diag > 0.0 { diag } else { 1.0 };
    let mut cur = lattice.nodes.clone();
    let mut next = cur.clone();
    let mut displacements = Vec::new();
    let mut converged = false;
    while displacements.len() < max_iters {
        let moved = next
            .par_iter_mut()
            .enumerate()
            .filter(|(i, _)| !lattice.surface[*i])
            .map(|(i, slot)| {
                let m = lattice.neighbour_mean(&cur, i);
                let d = m.iter().zip(&cur[i]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                *slot = m;
                d
            })
            .reduce(|| 0.0, f64::max);
        std::mem::swap(&mut cur, &mut next);
        displacements.push(moved / scale);
        if moved / scale < threshold {
            converged = true;
            break;
        }
    }
    Ok(Relaxed {
        iterations: displacements.len(),
        lattice: Lattice {
            nodes: cur,
            ..lattice.clone()
        },
        converged,
        displacements,
    })
}

/// One lattice per cuboid: the solid evaluated on a uniform parameter grid
/// that includes the faces.
pub fn sample_solid_to_lattice(solid: &SplineSolid, dims: [usize; 3]) -> Result<Vec<Lattice>, LatticeError> {
    sample_solid_to_lattice_with(solid, dims, EvalMode::SemiStandard)
}

pub fn sample_solid_to_lattice_with(
    solid: &SplineSolid,
    dims: [usize; 3],
    mode: EvalMode,
) -> Result<Vec<Lattice>, LatticeError> {
    if dims.iter().any(|&n| n < 2) {
        return Err(LatticeError::Dims(dims));
    }
    if mode == EvalMode::SemiStandard && !solid.is_semi_standard() {
        return Err(SolidError::NotAudited.into());
    }
    solid
        .graph
        .cuboids()
        .iter()
        .map(|c| {
            let count = dims.iter().product::<usize>();
            let nodes = (0..count)
                .into_par_iter()
                .map(|idx| {
                    let t = unindex(dims, idx);
                    let h: Vec3 = std::array::from_fn(|a| c.extents[a] * t[a] as f64 / (dims[a] - 1) as f64);
                    solid.evaluate(c.id, h, mode)
                })
                .collect::<Result<Vec<_>, SolidError>>()?;
            Lattice::new(dims, nodes)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_round_trip() {
        let dims = [3, 4, 5];
        for i in 0..60 {
            let l = Lattice::unit_cube(dims).unwrap();
            assert_eq!(l.index(unindex(dims, i)), i);
        }
    }

    #[test]
    fn surface_mask_matches_index_boundary() {
        let l = Lattice::unit_cube([3, 3, 3]).unwrap();
        assert_eq!(l.surface().iter().filter(|s| !**s).count(), 1);
        assert!(!l.surface()[l.index([1, 1, 1])]);
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(Lattice::unit_cube([1, 2, 2]), Err(LatticeError::Dims([1, 2, 2])));
        let l = Lattice::unit_cube([2, 2, 2]).unwrap();
        assert!(matches!(relax(&l, 0.0, 10), Err(LatticeError::Threshold(_))));
    }
}
