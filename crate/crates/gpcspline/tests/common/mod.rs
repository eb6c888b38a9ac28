//! Shared helpers for the integration tests.
#![allow(dead_code)]

use gpcspline::basis::Side;
use gpcspline::solid::SplineSolid;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, One, ToPrimitive, Zero};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

type Poly = Vec<BigRational>;

fn q(x: f64) -> BigRational {
    BigRational::from_f64(x).expect("finite")
}

fn poly_add(a: &Poly, b: &Poly) -> Poly {
    let n = a.len().max(b.len());
    (0..n)
        .map(|i| {
            let x = a.get(i).cloned().unwrap_or_else(BigRational::zero);
            x + b.get(i).cloned().unwrap_or_else(BigRational::zero)
        })
        .collect()
}

/// `(c0 + c1 u) · p`
fn poly_lin(c0: &BigRational, c1: &BigRational, p: &Poly) -> Poly {
    let mut out = vec![BigRational::zero(); p.len() + 1];
    for (i, x) in p.iter().enumerate() {
        out[i] += c0 * x;
        out[i + 1] += c1 * x;
    }
    out
}

/// Exact polynomial piece of the cubic B-spline over `t` on the knot span
/// holding `u` (span `[t_j, t_{j+1})`, or `(t_j, t_{j+1}]` on the left side),
/// evaluated in rational arithmetic.
pub fn oracle_basis(t: &[f64; 5], u: f64, side: Side) -> f64 {
    let span = (0..4).find(|&j| match side {
        Side::Right => t[j] <= u && u < t[j + 1],
        Side::Left => t[j] < u && u <= t[j + 1],
    });
    let Some(span) = span else { return 0.0 };
    let k: Vec<BigRational> = t.iter().map(|&x| q(x)).collect();
    let mut n: Vec<Poly> = (0..4)
        .map(|j| vec![if j == span { BigRational::one() } else { BigRational::zero() }])
        .collect();
    for p in 1..=3 {
        for j in 0..4 - p {
            let d1 = &k[j + p] - &k[j];
            let d2 = &k[j + p + 1] - &k[j + 1];
            let left = if d1.is_zero() {
                vec![]
            } else {
                poly_lin(&(-&k[j] / &d1), &(BigRational::one() / &d1), &n[j])
            };
            let right = if d2.is_zero() {
                vec![]
            } else {
                poly_lin(&(&k[j + p + 1] / &d2), &(-BigRational::one() / &d2), &n[j + 1])
            };
            n[j] = poly_add(&left, &right);
        }
    }
    let x = q(u);
    let v = n[0].iter().rev().fold(BigRational::zero(), |acc, c| acc * &x + c);
    v.to_f64().unwrap()
}

/// Random nondecreasing knots on a coarse grid so repeats occur.
pub fn random_knots(rng: &mut ChaCha8Rng) -> [f64; 5] {
    loop {
        let scale = rng.gen_range(0.25..4.0);
        let shift = rng.gen_range(-2.0..2.0);
        let mut t: [f64; 5] = std::array::from_fn(|_| rng.gen_range(0..6) as f64 * scale + shift);
        t.sort_by(f64::total_cmp);
        if t[0] < t[4] {
            return t;
        }
    }
}

pub fn rational(v: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(v))
}

/// Random (cuboid, local parameter) pairs spread over every cuboid.
pub fn random_sites(solid: &SplineSolid, n: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, [f64; 3])> {
    let cs = solid.graph.cuboids();
    (0..n)
        .map(|i| {
            let c = &cs[i % cs.len()];
            (c.id, std::array::from_fn(|a| rng.gen_range(0.0..c.extents[a])))
        })
        .collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
