//! Univariate spline primitives: Bernstein/Bézier curves, the cubic
//! Cox–de Boor basis on five-knot vectors, de Boor and NURBS evaluation,
//! and single-knot insertion into a cubic basis function.

use thiserror::Error;

/// Tolerance used when deciding whether two knots coincide.
pub const KNOT_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BasisError {
    #[error("parameter {t} lies outside the valid range [{lo}, {hi}]")]
    Domain { t: f64, lo: f64, hi: f64 },
    #[error("knot vector {0:?} is not nondecreasing")]
    Unsorted([f64; 5]),
    #[error("knot vector {0:?} has zero support")]
    Degenerate([f64; 5]),
    #[error("curve needs at least {need} control points, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error("knot count {knots} does not match {points} control points of degree {degree}")]
    KnotCount {
        knots: usize,
        points: usize,
        degree: usize,
    },
    #[error("control points have inconsistent dimensions")]
    Dimension,
    #[error("weights must be positive and one per control point")]
    Weights,
    #[error("rational denominator {0:e} is too small to divide by")]
    Singular(f64),
    #[error("derivative order must be 1 or 2, got {0}")]
    Order(u8),
}

/// Which one-sided limit to take when a parameter sits exactly on a knot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Side {
    /// Value of the span starting at the knot (half-open `[a, b)` spans).
    #[default]
    Right,
    /// Value of the span ending at the knot.
    Left,
}

/// Five nondecreasing knots defining one cubic B-spline basis function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KnotVector5([f64; 5]);

impl KnotVector5 {
    pub fn new(knots: [f64; 5]) -> Result<Self, BasisError> {
        if knots.iter().any(|k| !k.is_finite()) || knots.windows(2).any(|w| w[0] > w[1]) {
            return Err(BasisError::Unsorted(knots));
        }
        if knots[0] >= knots[4] {
            return Err(BasisError::Degenerate(knots));
        }
        Ok(Self(knots))
    }

    /// Builds a vector without validation. Callers guarantee ordering.
    pub(crate) fn from_raw(knots: [f64; 5]) -> Self {
        Self(knots)
    }

    pub fn knots(&self) -> &[f64; 5] {
        &self.0
    }

    pub fn center(&self) -> f64 {
        self.0[2]
    }

    pub fn start(&self) -> f64 {
        self.0[0]
    }

    pub fn end(&self) -> f64 {
        self.0[4]
    }

    pub fn is_degenerate(&self) -> bool {
        self.0[0] >= self.0[4]
    }

    /// Number of entries equal to `k`.
    pub fn count(&self, k: f64) -> usize {
        self.0.iter().filter(|&&x| x == k).count()
    }

    /// True when `[r0, r4]` of `self` contains the whole support of `other`.
    pub fn covers(&self, lo: f64, hi: f64) -> bool {
        self.0[0] >= lo && self.0[4] <= hi
    }
}

impl std::ops::Index<usize> for KnotVector5 {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Degree-0 indicator of `[a, b)` (or `(a, b]` for the left limit).
fn indicator(a: f64, b: f64, u: f64, side: Side) -> f64 {
    let inside = match side {
        Side::Right => a <= u && u < b,
        Side::Left => a < u && u <= b,
    };
    if inside {
        1.0
    } else {
        0.0
    }
}

/// Cox–de Boor recursion for the basis function on `t[i..=i+p+1]`.
fn cox_de_boor(t: &[f64], i: usize, p: usize, u: f64, side: Side) -> f64 {
    if p == 0 {
        return indicator(t[i], t[i + 1], u, side);
    }
    let left = ratio(u - t[i], t[i + p] - t[i]);
    let right = ratio(t[i + p + 1] - u, t[i + p + 1] - t[i + 1]);
    let mut acc = 0.0;
    if left != 0.0 {
        acc += left * cox_de_boor(t, i, p - 1, u, side);
    }
    if right != 0.0 {
        acc += right * cox_de_boor(t, i + 1, p - 1, u, side);
    }
    acc
}

/// General-degree B-spline basis `N_{i,p}(u)` over a full knot sequence.
/// Right-continuous; zero-denominator terms are dropped.
pub fn basis_function(knots: &[f64], i: usize, p: usize, u: f64) -> f64 {
    cox_de_boor(knots, i, p, u, Side::Right)
}

/// Cubic basis with half-open support `[r0, r4)`.
pub fn cubic_basis(kv: &KnotVector5, u: f64) -> f64 {
    cubic_basis_side(kv, u, Side::Right)
}

/// Cubic basis choosing the one-sided limit at knots.
pub fn cubic_basis_side(kv: &KnotVector5, u: f64, side: Side) -> f64 {
    let t = kv.knots();
    if u < t[0] || u > t[4] {
        return 0.0;
    }
    cubic_fast(t, u, side)
}

/// Closed-form evaluation of the cubic recursion over five knots.
fn cubic_fast(t: &[f64; 5], u: f64, side: Side) -> f64 {
    // Degree-0 terms.
    let mut n = [0.0f64; 4];
    for (j, nj) in n.iter_mut().enumerate() {
        *nj = indicator(t[j], t[j + 1], u, side);
    }
    // Raise degree in place; after degree p, n[0..4-p] are valid.
    for p in 1..=3 {
        for j in 0..(4 - p) {
            let left = ratio(u - t[j], t[j + p] - t[j]);
            let right = ratio(t[j + p + 1] - u, t[j + p + 1] - t[j + 1]);
            n[j] = left * n[j] + right * n[j + 1];
        }
    }
    n[0]
}

/// Analytic first or second derivative of the cubic basis.
pub fn basis_derivative(kv: &KnotVector5, u: f64, order: u8) -> Result<f64, BasisError> {
    basis_derivative_side(kv, u, order, Side::Right)
}

pub fn basis_derivative_side(
    kv: &KnotVector5,
    u: f64,
    order: u8,
    side: Side,
) -> Result<f64, BasisError> {
    if !(1..=2).contains(&order) {
        return Err(BasisError::Order(order));
    }
    let t = kv.knots();
    if u < t[0] || u > t[4] {
        return Ok(0.0);
    }
    Ok(derivative_rec(t, 0, 3, u, order, side))
}

/// d^k/du^k N_{i,p} = p * (D^{k-1}N_{i,p-1}/(t_{i+p}-t_i) - D^{k-1}N_{i+1,p-1}/(t_{i+p+1}-t_{i+1})).
fn derivative_rec(t: &[f64], i: usize, p: usize, u: f64, k: u8, side: Side) -> f64 {
    if k == 0 {
        return cox_de_boor(t, i, p, u, side);
    }
    let a = ratio(1.0, t[i + p] - t[i]);
    let b = ratio(1.0, t[i + p + 1] - t[i + 1]);
    let mut acc = 0.0;
    if a != 0.0 {
        acc += a * derivative_rec(t, i, p - 1, u, k - 1, side);
    }
    if b != 0.0 {
        acc -= b * derivative_rec(t, i + 1, p - 1, u, k - 1, side);
    }
    p as f64 * acc
}

/// The two five-knot vectors obtained by inserting `k` into `kv`.
///
/// Rows are half-open in `k` (`r_i <= k < r_{i+1}`) except the last which is
/// closed; when several knots coincide the row whose left bound equals `k`
/// and sits furthest right wins.
pub fn split_knots(t: &[f64; 5], k: f64) -> ([f64; 5], [f64; 5]) {
    let [r0, r1, r2, r3, r4] = *t;
    if k >= r3 {
        ([r0, r1, r2, r3, k], [r1, r2, r3, k, r4])
    } else if k >= r2 {
        ([r0, r1, r2, k, r3], [r1, r2, k, r3, r4])
    } else if k >= r1 {
        ([r0, r1, k, r2, r3], [r1, k, r2, r3, r4])
    } else {
        ([r0, k, r1, r2, r3], [k, r1, r2, r3, r4])
    }
}

/// Knot-insertion coefficients `c1 = min((k-r0)/(r3-r0), 1)` and
/// `c2 = min((r4-k)/(r4-r1), 1)`; a vanishing denominator means the ratio
/// is unbounded and clamps to 1.
pub fn split_coefficients(t: &[f64; 5], k: f64) -> (f64, f64) {
    let c1 = if t[3] > t[0] {
        ((k - t[0]) / (t[3] - t[0])).min(1.0)
    } else {
        1.0
    };
    let c2 = if t[4] > t[1] {
        ((t[4] - k) / (t[4] - t[1])).min(1.0)
    } else {
        1.0
    };
    (c1, c2)
}

/// A knot vector with its coefficient in a refinement.
pub type Piece = (KnotVector5, f64);

/// Inserts `k` into a cubic basis function: `N = c1 N1 + c2 N2`.
///
/// A piece whose knots collapse to a single point is returned with
/// coefficient 0 since it vanishes identically.
pub fn refine_basis(
    kv: &KnotVector5,
    k: f64,
) -> Result<(Piece, Piece), BasisError> {
    let t = kv.knots();
    if !(t[0] <= k && k <= t[4]) {
        return Err(BasisError::Domain {
            t: k,
            lo: t[0],
            hi: t[4],
        });
    }
    let (a, b) = split_knots(t, k);
    let (mut c1, mut c2) = split_coefficients(t, k);
    if a[0] >= a[4] {
        c1 = 0.0;
    }
    if b[0] >= b[4] {
        c2 = 0.0;
    }
    Ok((
        (KnotVector5::from_raw(a), c1),
        (KnotVector5::from_raw(b), c2),
    ))
}

pub type Point = Vec<f64>;

fn check_dims(control: &[Point]) -> Result<usize, BasisError> {
    let d = control.first().map(Vec::len).unwrap_or(0);
    if control.iter().any(|p| p.len() != d) {
        return Err(BasisError::Dimension);
    }
    Ok(d)
}

fn lerp(a: &[f64], b: &[f64], t: f64) -> Point {
    a.iter().zip(b).map(|(x, y)| (1.0 - t) * x + t * y).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BezierCurve {
    control: Vec<Point>,
}

impl BezierCurve {
    pub fn new(control: Vec<Point>) -> Result<Self, BasisError> {
        if control.len() < 2 {
            return Err(BasisError::TooFewPoints {
                need: 2,
                got: control.len(),
            });
        }
        check_dims(&control)?;
        Ok(Self { control })
    }

    pub fn degree(&self) -> usize {
        self.control.len() - 1
    }

    pub fn control(&self) -> &[Point] {
        &self.control
    }
}

/// Bernstein polynomial `B_{i,n}(t)`.
pub fn bernstein(i: usize, n: usize, t: f64) -> f64 {
    if i > n {
        return 0.0;
    }
    let mut binom = 1.0;
    for j in 0..i {
        binom = binom * (n - j) as f64 / (j + 1) as f64;
    }
    binom * t.powi(i as i32) * (1.0 - t).powi((n - i) as i32)
}

fn check_unit(t: f64) -> Result<(), BasisError> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(BasisError::Domain { t, lo: 0.0, hi: 1.0 })
    }
}

/// Direct Bernstein summation `Σ P_i B_{i,n}(t)`.
pub fn bernstein_eval(curve: &BezierCurve, t: f64) -> Result<Point, BasisError> {
    check_unit(t)?;
    let n = curve.degree();
    let d = curve.control[0].len();
    let mut out = vec![0.0; d];
    for (i, p) in curve.control.iter().enumerate() {
        let b = bernstein(i, n, t);
        for (o, x) in out.iter_mut().zip(p) {
            *o += b * x;
        }
    }
    Ok(out)
}

/// de Casteljau evaluation, also returning the two halves of the
/// subdivided curve on `[0, t]` and `[t, 1]`.
pub fn de_casteljau(
    curve: &BezierCurve,
    t: f64,
) -> Result<(Point, BezierCurve, BezierCurve), BasisError> {
    check_unit(t)?;
    let n = curve.degree();
    let mut level = curve.control.clone();
    let mut left = vec![level[0].clone()];
    let mut right = vec![level[n].clone()];
    for r in 1..=n {
        level = (0..=n - r)
            .map(|i| lerp(&level[i], &level[i + 1], t))
            .collect();
        left.push(level[0].clone());
        right.push(level[n - r].clone());
    }
    right.reverse();
    let point = level[0].clone();
    Ok((point, BezierCurve { control: left }, BezierCurve { control: right }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BSplineCurve {
    control: Vec<Point>,
    knots: Vec<f64>,
    degree: usize,
}

impl BSplineCurve {
    pub fn new(control: Vec<Point>, knots: Vec<f64>, degree: usize) -> Result<Self, BasisError> {
        if control.len() < degree + 1 {
            return Err(BasisError::TooFewPoints {
                need: degree + 1,
                got: control.len(),
            });
        }
        check_dims(&control)?;
        if knots.len() != control.len() + degree + 1 {
            return Err(BasisError::KnotCount {
                knots: knots.len(),
                points: control.len(),
                degree,
            });
        }
        if knots.windows(2).any(|w| w[0] > w[1]) {
            return Err(BasisError::Unsorted([knots[0], 0.0, 0.0, 0.0, 0.0]));
        }
        Ok(Self {
            control,
            knots,
            degree,
        })
    }

    pub fn control(&self) -> &[Point] {
        &self.control
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Valid parameter range `[t_p, t_{m-p}]`.
    pub fn range(&self) -> (f64, f64) {
        let m = self.knots.len() - 1;
        (self.knots[self.degree], self.knots[m - self.degree])
    }

    fn check(&self, u: f64) -> Result<(), BasisError> {
        let (lo, hi) = self.range();
        if u < lo || u > hi {
            return Err(BasisError::Domain { t: u, lo, hi });
        }
        Ok(())
    }

    /// Index `s` of the span `[t_s, t_{s+1})` holding `u`; the right end of
    /// the range maps to the last nonempty span.
    fn span(&self, u: f64) -> usize {
        let p = self.degree;
        let n = self.control.len() - 1;
        if u >= self.knots[n + 1] {
            let mut s = n;
            while s > p && self.knots[s] >= self.knots[s + 1] {
                s -= 1;
            }
            return s;
        }
        let mut s = p;
        while s < n && self.knots[s + 1] <= u {
            s += 1;
        }
        s
    }

    /// Brute-force summation `Σ P_i N_{i,p}(u)` (left limit at the range end).
    pub fn eval_by_summation(&self, u: f64) -> Result<Point, BasisError> {
        self.check(u)?;
        let (_, hi) = self.range();
        let side = if u >= hi { Side::Left } else { Side::Right };
        let d = self.control[0].len();
        let mut out = vec![0.0; d];
        for (i, p) in self.control.iter().enumerate() {
            let b = cox_de_boor(&self.knots, i, self.degree, u, side);
            for (o, x) in out.iter_mut().zip(p) {
                *o += b * x;
            }
        }
        Ok(out)
    }
}

/// de Boor's algorithm.
pub fn deboor_eval(curve: &BSplineCurve, u: f64) -> Result<Point, BasisError> {
    curve.check(u)?;
    let p = curve.degree;
    let s = curve.span(u);
    let t = &curve.knots;
    let mut d: Vec<Point> = (0..=p).map(|j| curve.control[s - p + j].clone()).collect();
    for r in 1..=p {
        for j in (r..=p).rev() {
            let i = s - p + j;
            let den = t[i + p + 1 - r] - t[i];
            let alpha = if den == 0.0 { 0.0 } else { (u - t[i]) / den };
            d[j] = lerp(&d[j - 1], &d[j], alpha);
        }
    }
    Ok(d.swap_remove(p))
}

#[derive(Debug, Clone, PartialEq)]
pub struct NurbsCurve {
    base: BSplineCurve,
    weights: Vec<f64>,
}

impl NurbsCurve {
    pub fn new(base: BSplineCurve, weights: Vec<f64>) -> Result<Self, BasisError> {
        if weights.len() != base.control.len() || weights.iter().any(|&w| !(w > 0.0)) {
            return Err(BasisError::Weights);
        }
        Ok(Self { base, weights })
    }

    pub fn base(&self) -> &BSplineCurve {
        &self.base
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Rational evaluation `Σ w_i P_i N_i / Σ w_i N_i` via homogeneous de Boor.
pub fn nurbs_eval(curve: &NurbsCurve, u: f64) -> Result<Point, BasisError> {
    let homogeneous: Vec<Point> = curve
        .base
        .control
        .iter()
        .zip(&curve.weights)
        .map(|(p, &w)| p.iter().map(|x| x * w).chain(std::iter::once(w)).collect())
        .collect();
    let lifted = BSplineCurve {
        control: homogeneous,
        knots: curve.base.knots.clone(),
        degree: curve.base.degree,
    };
    let mut h = deboor_eval(&lifted, u)?;
    let w = h.pop().unwrap_or(0.0);
    if w.abs() < 1e-14 {
        return Err(BasisError::Singular(w));
    }
    Ok(h.into_iter().map(|x| x / w).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kv(k: [f64; 5]) -> KnotVector5 {
        KnotVector5::new(k).unwrap()
    }

    /// Uniform cubic B-spline on [0,4] written piece by piece.
    fn uniform_oracle(u: f64) -> f64 {
        match u {
            u if (0.0..1.0).contains(&u) => u.powi(3) / 6.0,
            u if (1.0..2.0).contains(&u) => {
                (-3.0 * u.powi(3) + 12.0 * u * u - 12.0 * u + 4.0) / 6.0
            }
            u if (2.0..3.0).contains(&u) => {
                (3.0 * u.powi(3) - 24.0 * u * u + 60.0 * u - 44.0) / 6.0
            }
            u if (3.0..4.0).contains(&u) => (4.0 - u).powi(3) / 6.0,
            _ => 0.0,
        }
    }

    #[test]
    fn uniform_values() {
        let k = kv([0.0, 1.0, 2.0, 3.0, 4.0]);
        assert!((cubic_basis(&k, 2.0) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(cubic_basis(&k, 0.0), 0.0);
        assert_eq!(cubic_basis(&k, 5.0), 0.0);
        for i in 0..=400 {
            let u = i as f64 * 0.01;
            assert!((cubic_basis(&k, u) - uniform_oracle(u)).abs() < 1e-14);
        }
    }

    #[test]
    fn clamped_end() {
        let k = kv([0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(cubic_basis(&k, 0.0), 1.0);
        assert!((cubic_basis(&k, 1e-9) - 1.0).abs() < 1e-8);
        let d = basis_derivative(&k, 0.5, 1).unwrap();
        assert!((d + 0.75).abs() < 1e-14);
        // Left limit at the upper end of a clamped right boundary.
        let r = kv([0.0, 1.0, 1.0, 1.0, 1.0]);
        assert_eq!(cubic_basis(&r, 1.0), 0.0);
        assert_eq!(cubic_basis_side(&r, 1.0, Side::Left), 1.0);
    }

    #[test]
    fn uniform_derivatives() {
        let k = kv([0.0, 1.0, 2.0, 3.0, 4.0]);
        assert!(basis_derivative(&k, 2.0, 1).unwrap().abs() < 1e-15);
        assert!((basis_derivative(&k, 1.0, 1).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(basis_derivative(&k, 1.0, 3), Err(BasisError::Order(3))));
    }

    #[test]
    fn refine_examples() {
        let k = kv([0.0, 1.0, 2.0, 3.0, 4.0]);
        let ((a, c1), (b, c2)) = refine_basis(&k, 2.0).unwrap();
        assert_eq!(a.knots(), &[0.0, 1.0, 2.0, 2.0, 3.0]);
        assert_eq!(b.knots(), &[1.0, 2.0, 2.0, 3.0, 4.0]);
        assert!((c1 - 2.0 / 3.0).abs() < 1e-15 && (c2 - 2.0 / 3.0).abs() < 1e-15);
        let ((_, c1), _) = refine_basis(&k, 0.0).unwrap();
        assert_eq!(c1, 0.0);
        let ((a, c1), (b, c2)) = refine_basis(&k, 3.5).unwrap();
        assert_eq!(a.knots(), &[0.0, 1.0, 2.0, 3.0, 3.5]);
        assert_eq!(b.knots(), &[1.0, 2.0, 3.0, 3.5, 4.0]);
        assert_eq!(c1, 1.0);
        assert!((c2 - 1.0 / 6.0).abs() < 1e-15);
        assert!(refine_basis(&k, 4.5).is_err());
    }

    #[test]
    fn bezier_examples() {
        let c = |v: &[f64]| BezierCurve::new(v.iter().map(|&x| vec![x]).collect()).unwrap();
        assert!((bernstein_eval(&c(&[1.0; 4]), 0.37).unwrap()[0] - 1.0).abs() < 1e-15);
        assert!((bernstein_eval(&c(&[0.0, 1.0, 2.0, 3.0]), 0.5).unwrap()[0] - 1.5).abs() < 1e-15);
        assert!((bernstein_eval(&c(&[0.0, 0.0, 0.0, 1.0]), 0.5).unwrap()[0] - 0.125).abs() < 1e-15);
        let (p, _, r) = de_casteljau(&c(&[0.0, 0.0, 0.0, 1.0]), 1.0).unwrap();
        assert_eq!(p[0], 1.0);
        assert!(r.control().iter().all(|q| q[0] == 1.0));
        // 3 * (B1 + B2) at 1/2 = 3 * 0.75.
        let (p, _, _) = de_casteljau(&c(&[0.0, 3.0, 3.0, 0.0]), 0.5).unwrap();
        assert!((p[0] - 2.25).abs() < 1e-15);
        assert!(bernstein_eval(&c(&[0.0, 1.0]), 1.5).is_err());
    }

    #[test]
    fn deboor_matches_bezier() {
        let curve = BSplineCurve::new(
            vec![vec![0.0], vec![0.0], vec![0.0], vec![1.0]],
            vec![0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0],
            3,
        )
        .unwrap();
        assert!((deboor_eval(&curve, 0.5).unwrap()[0] - 0.125).abs() < 1e-15);
        assert!((deboor_eval(&curve, 1.0).unwrap()[0] - 1.0).abs() < 1e-15);
        assert!(deboor_eval(&curve, 1.5).is_err());
    }

    #[test]
    fn quarter_circle() {
        let base = BSplineCurve::new(
            vec![vec![1.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0]],
            vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0],
            2,
        )
        .unwrap();
        let curve = NurbsCurve::new(base, vec![1.0, 0.5f64.sqrt(), 1.0]).unwrap();
        for i in 0..50 {
            let p = nurbs_eval(&curve, i as f64 / 49.0).unwrap();
            assert!(((p[0] * p[0] + p[1] * p[1]).sqrt() - 1.0).abs() < 1e-12);
        }
    }
}
