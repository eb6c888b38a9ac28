//! Merging glued cuboids into one spline.
//!
//! Every merge runs the same engine. The member cuboids are placed in one
//! frame; their bounding hull is cut along all member box planes, and hull
//! cells outside the members become auxiliary cells whose faces carry
//! four-fold knots. A clamped tensor spline on the hull planes is then
//! refined against the member cells, which yields a consistent
//! partition-of-unity family across the seams. Functions without support
//! in the members are dropped, and positions are inherited from the
//! pre-merge points whose knots agree once clamped to a member box.

use crate::exact::Weight;
use crate::geom::{order_key, others, Aabb, PlaneRect, Vec3};
use crate::gpc::Transform;
use crate::solid::{chart_face, Chart, SolidError, SplineSolid};
use crate::tmesh::{fn_key, ControlPoint, Face, FnKey, PointId, TMesh, TMeshError};
use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MergeKind {
    TwoCube,
    Type1,
    Type2,
    Type3,
    Type4,
}

impl MergeKind {
    pub const JUNCTIONS: [MergeKind; 4] = [MergeKind::Type1, MergeKind::Type2, MergeKind::Type3, MergeKind::Type4];
}

impl fmt::Display for MergeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MergeKind::TwoCube => "TwoCube",
            MergeKind::Type1 => "Type1",
            MergeKind::Type2 => "Type2",
            MergeKind::Type3 => "Type3",
            MergeKind::Type4 => "Type4",
        })
    }
}

impl std::str::FromStr for MergeKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "twocube" => Ok(MergeKind::TwoCube),
            "type1" => Ok(MergeKind::Type1),
            "type2" => Ok(MergeKind::Type2),
            "type3" => Ok(MergeKind::Type3),
            "type4" => Ok(MergeKind::Type4),
            _ => Err(format!("unknown merge kind '{s}'")),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MergeError {
    #[error(transparent)]
    Solid(#[from] SolidError),
    #[error(transparent)]
    Mesh(#[from] TMeshError),
    #[error("boundary of cuboid {0} face {1} is not merge-ready: point {2} has weight {3}")]
    Precondition(usize, &'static str, PointId, String),
    #[error("knot intervals on the seam still differ after {0} subdivision rounds")]
    SubdivisionFailure(usize),
    #[error("cuboids {0:?} are not connected by glued faces")]
    Disconnected(Vec<usize>),
    #[error("cuboid {0} is glued to itself; self-glued faces cannot be merged")]
    SelfLoop(usize),
    #[error("gluing among {0:?} does not embed in a single frame")]
    Inconsistent(Vec<usize>),
    #[error("{0} needs at least {1} cuboids")]
    TooFew(MergeKind, usize),
    #[error("cuboids are already merged")]
    AlreadyMerged,
    #[error("derived weights disagree with the stored table at {0:?}")]
    Derivation(Vec<Mismatch>),
}

/// Weights on the 27 slots around a junction point, indexed
/// `1 + x + 3y + 9z` with 0 = below, 1 = on, 2 = above per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTable {
    pub kind: MergeKind,
    pub entries: BTreeMap<u8, Option<Weight>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mismatch {
    pub index: u8,
    pub derived: Option<Weight>,
    pub stored: Option<Weight>,
}

impl fmt::Display for Mismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = |w: &Option<Weight>| w.as_ref().map_or("-".to_string(), |w| w.to_string());
        write!(f, "slot {}: derived {} stored {}", self.index, s(&self.derived), s(&self.stored))
    }
}

/// Entry printed as "27/27" in the published Type-2 row.
pub const FLAGGED_TYPE2_SLOT: u8 = 7;

fn row(kind: MergeKind, cells: [&str; 27]) -> WeightTable {
    // `cells` lists slots 7..9,16..18,25..27, then 4..6,13..15,22..24, then
    // 1..3,10..12,19..21, the order of the published rows.
    const ORDER: [u8; 27] = [
        7, 8, 9, 16, 17, 18, 25, 26, 27, 4, 5, 6, 13, 14, 15, 22, 23, 24, 1, 2, 3, 10, 11, 12, 19, 20, 21,
    ];
    let entries = ORDER
        .iter()
        .zip(cells)
        .map(|(&i, c)| (i, if c == "-" { None } else { Some(c.parse::<Weight>().unwrap()) }))
        .collect();
    WeightTable { kind, entries }
}

/// The published weight tables.
pub fn stored_table(kind: MergeKind) -> Option<WeightTable> {
    Some(match kind {
        MergeKind::TwoCube => return None,
        MergeKind::Type1 => row(
            kind,
            [
                "-", "-", "-", "-", "-", "-", "-", "-", "-", //
                "1", "1", "-", "17/18", "35/36", "1", "8/9", "17/18", "1", //
                "1", "1", "-", "17/18", "35/36", "1", "8/9", "17/18", "1",
            ],
        ),
        MergeKind::Type2 => row(
            kind,
            [
                "27/27", "53/54", "1", "53/54", "107/108", "1", "1", "1", "-", //
                "53/54", "107/108", "1", "107/108", "209/216", "17/18", "1", "1", "-", //
                "1", "1", "1", "1", "17/18", "8/9", "-", "-", "-",
            ],
        ),
        MergeKind::Type3 => row(
            kind,
            [
                "20/27", "22/27", "8/9", "22/27", "95/108", "17/18", "8/9", "17/18", "1", //
                "22/27", "95/108", "17/18", "95/108", "25/27", "35/36", "17/18", "35/36", "1", //
                "8/9", "17/18", "1", "17/18", "35/36", "1", "1", "1", "-",
            ],
        ),
        MergeKind::Type4 => row(
            kind,
            [
                "26/27", "53/54", "1", "53/54", "107/108", "1", "1", "1", "-", //
                "53/54", "107/108", "1", "107/108", "215/216", "1", "1", "1", "-", //
                "1", "1", "-", "1", "1", "1", "-", "-", "-",
            ],
        ),
    })
}

/// Octants (signs per axis) filled by the solid around each junction point.
pub fn junction_octants(kind: MergeKind) -> Vec<[i8; 3]> {
    let all = |mask: u8| -> Vec<[i8; 3]> {
        (0..8u8)
            .filter(|i| mask >> i & 1 == 1)
            .map(|i| {
                let s = |b: u8| if i >> b & 1 == 1 { 1 } else { -1 };
                [s(2), s(1), s(0)]
            })
            .collect()
    };
    match kind {
        MergeKind::TwoCube => vec![[-1, -1, -1], [1, -1, -1]],
        // L-shaped section along the concave edge, which ends on the y = 0 face.
        MergeKind::Type1 => vec![[-1, -1, -1], [-1, -1, 1], [1, -1, 1]],
        MergeKind::Type2 => all(0b0101_1101),
        MergeKind::Type3 => all(0b1101_1111),
        MergeKind::Type4 => all(0b0100_1101),
    }
}

/// Correspondence and edits produced by a merge.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MergePlan {
    pub kind: Option<MergeKind>,
    pub cuboids: Vec<usize>,
    /// New point id and the pre-merge points it was built from.
    pub correspondence: Vec<(PointId, Vec<PointId>)>,
    /// Points with no pre-merge counterpart (bd stacks at junctions).
    pub inserted: Vec<PointId>,
    /// Points whose weight is not one after the merge.
    pub weight_edits: Vec<(PointId, Weight)>,
    pub seam_rounds: usize,
}

/// Merges the two cuboids joined by `edge`.
pub fn merge_two_cube(solid: &SplineSolid, edge: usize) -> Result<(SplineSolid, MergePlan), MergeError> {
    let e = solid
        .graph
        .edges()
        .get(edge)
        .ok_or_else(|| SolidError::Invalid(format!("no glue edge {edge}")))?;
    if e.is_self_loop() {
        return Err(MergeError::SelfLoop(e.a.0));
    }
    merge_group(solid, &[e.a.0, e.b.0], MergeKind::TwoCube)
}

pub fn merge_type1(solid: &SplineSolid, cuboids: [usize; 3]) -> Result<(SplineSolid, MergePlan), MergeError> {
    merge_group(solid, &cuboids, MergeKind::Type1)
}

pub fn merge_type234(
    solid: &SplineSolid,
    cuboids: &[usize],
    kind: MergeKind,
) -> Result<(SplineSolid, MergePlan), MergeError> {
    if matches!(kind, MergeKind::TwoCube | MergeKind::Type1) {
        return Err(SolidError::Invalid(format!("{kind} is not a Type-2/3/4 junction")).into());
    }
    merge_group(solid, cuboids, kind)
}

/// Frames placing every cuboid of `group` in the frame of its lowest id.
fn group_frames(solid: &SplineSolid, group: &BTreeSet<usize>) -> Result<BTreeMap<usize, Transform>, MergeError> {
    let g = &solid.graph;
    let root = *group.iter().next().unwrap();
    let mut frames = BTreeMap::from([(root, Transform::identity())]);
    let mut queue = VecDeque::from([root]);
    while let Some(u) = queue.pop_front() {
        for e in g.edges() {
            if e.is_self_loop() {
                if group.contains(&e.a.0) {
                    return Err(MergeError::SelfLoop(e.a.0));
                }
                continue;
            }
            let Some((v, hop)) = e.hop(u) else { continue };
            if !group.contains(&v) || frames.contains_key(&v) {
                continue;
            }
            // hop maps u-local to v-local; the frame of v is frame(u) ∘ hop⁻¹.
            let fv = frames[&u].compose(&hop.inverse());
            frames.insert(v, fv);
            queue.push_back(v);
        }
    }
    if frames.len() != group.len() {
        return Err(MergeError::Disconnected(group.iter().copied().collect()));
    }
    // Every glue inside the group has to agree with the placement.
    for e in g.edges() {
        if group.contains(&e.a.0) && group.contains(&e.b.0) {
            let lhs = frames[&e.a.0].compose(&e.b_to_a);
            let rhs = frames[&e.b.0];
            let ok = lhs.perm == rhs.perm
                && lhs.sign == rhs.sign
                && (0..3).all(|i| (lhs.offset[i] - rhs.offset[i]).abs() <= 1e-9);
            if !ok {
                return Err(MergeError::Inconsistent(group.iter().copied().collect()));
            }
        }
    }
    Ok(frames)
}

fn chart_face_of(frames: &BTreeMap<usize, Transform>, c: usize, f: Face) -> Face {
    chart_face(&frames[&c], f)
}

fn face_rects(mesh: &TMesh, cuboid: usize, face: Face) -> Result<Vec<(u64, PlaneRect)>, TMeshError> {
    let ids = mesh.boundary_cells(cuboid, face)?;
    Ok(ids
        .into_iter()
        .map(|id| {
            let c = mesh.cells().iter().find(|c| c.id == id).unwrap();
            (id, PlaneRect::face_of(&c.bounds, face.axis, face.max))
        })
        .collect())
}

/// Cuts that carry every edge line of `theirs` into the overlapping faces
/// of `mine`, as (cell, chart axis, coordinate).
fn missing_lines(mine: &[(u64, PlaneRect)], theirs: &[(u64, PlaneRect)], eps: f64) -> Vec<(u64, usize, f64)> {
    let mut out = Vec::new();
    for (id, r) in mine {
        let o = others(r.axis);
        for (_, q) in theirs {
            let overl = (0..2).all(|j| r.lo[j] < q.hi[j] - eps && q.lo[j] < r.hi[j] - eps);
            if !overl {
                continue;
            }
            for j in 0..2 {
                for k in [q.lo[j], q.hi[j]] {
                    if k > r.lo[j] + eps && k < r.hi[j] - eps {
                        out.push((*id, o[j], k));
                    }
                }
            }
        }
    }
    out
}

fn not_ready(mesh: &TMesh, cuboid: usize, face: Face) -> Result<Option<(PointId, String)>, TMeshError> {
    let mb = mesh.classify_merge_boundary(cuboid, face)?;
    Ok(mb.to_be_merged.iter().find_map(|&id| {
        let p = mesh.point(id).unwrap();
        (!p.weight.is_one()).then(|| (id, p.weight.to_string()))
    }))
}

/// Splits a clamped box-plane line into per-axis sorted unique values.
fn sorted_unique(mut v: Vec<f64>, eps: f64) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() <= eps);
    v
}

/// The general merge of every chart touching `cuboids`.
pub fn merge_group(
    solid: &SplineSolid,
    cuboids: &[usize],
    kind: MergeKind,
) -> Result<(SplineSolid, MergePlan), MergeError> {
    let need = if kind == MergeKind::TwoCube { 2 } else { 3 };
    let distinct: BTreeSet<usize> = cuboids.iter().copied().collect();
    if distinct.len() < need {
        return Err(MergeError::TooFew(kind, need));
    }
    // Whole charts join the merge.
    let mut chart_ids = BTreeSet::new();
    for &c in &distinct {
        chart_ids.insert(solid.chart_of(c)?.0);
    }
    if chart_ids.len() < 2 {
        return Err(MergeError::AlreadyMerged);
    }
    let group: BTreeSet<usize> = chart_ids
        .iter()
        .flat_map(|&i| solid.charts()[i].frames.iter().map(|(c, _)| *c))
        .collect();
    let frames = group_frames(solid, &group)?;

    // Old charts re-expressed in the common frame.
    let mut parts: Vec<(usize, TMesh)> = Vec::new();
    for &ci in &chart_ids {
        let ch = &solid.charts()[ci];
        let (c0, f0) = ch.frames[0];
        let to_new = frames[&c0].compose(&f0.inverse());
        for (c, f) in &ch.frames {
            let m = frames[c].compose(&f.inverse());
            let same = m.perm == to_new.perm
                && m.sign == to_new.sign
                && (0..3).all(|i| (m.offset[i] - to_new.offset[i]).abs() <= 1e-9);
            if !same {
                return Err(MergeError::Inconsistent(group.iter().copied().collect()));
            }
        }
        parts.push((ci, ch.mesh.transformed(&to_new)));
    }
    let order: Vec<usize> = parts.iter().map(|(i, _)| *i).collect();
    let part_of = |c: usize| -> usize {
        let ci = solid.chart_of(c).unwrap().0;
        order.iter().position(|i| *i == ci).unwrap()
    };

    // Seams: glued faces between different old charts.
    let mut seams = Vec::new();
    for e in solid.graph.edges() {
        if group.contains(&e.a.0) && group.contains(&e.b.0) && part_of(e.a.0) != part_of(e.b.0) {
            seams.push((
                (e.a.0, chart_face_of(&frames, e.a.0, e.a.1), e.a.1),
                (e.b.0, chart_face_of(&frames, e.b.0, e.b.1), e.b.1),
            ));
        }
    }
    for ((ca, fa, la), (cb, fb, lb)) in &seams {
        for (c, f, l) in [(*ca, *fa, *la), (*cb, *fb, *lb)] {
            if let Some((id, w)) = not_ready(&parts[part_of(c)].1, c, f)? {
                return Err(MergeError::Precondition(c, l.name(), id, w));
            }
        }
    }

    // Step 1: equal knot intervals on every seam. Copying the other side's
    // edge lines makes the patterns match; boundary modification then runs on both sides of
    // a seam together, so a matched pattern stays matched.
    const MAX_ROUNDS: usize = 8;
    let mut rounds = 0;
    loop {
        let mut changed = false;
        for ((ca, fa, _), (cb, fb, _)) in &seams {
            let (pa, pb) = (part_of(*ca), part_of(*cb));
            let eps = parts[pa].1.eps().max(parts[pb].1.eps());
            let ra = face_rects(&parts[pa].1, *ca, *fa)?;
            let rb = face_rects(&parts[pb].1, *cb, *fb)?;
            for (p, mine, theirs) in [(pa, &ra, &rb), (pb, &rb, &ra)] {
                let cuts = missing_lines(mine, theirs, eps);
                if !cuts.is_empty() {
                    parts[p].1.split_cells(&cuts)?;
                    changed = true;
                }
            }
        }
        if !changed {
            for ((ca, fa, _), (cb, fb, _)) in &seams {
                let sides = [(*ca, *fa), (*cb, *fb)];
                let mut ready = true;
                for &(c, f) in &sides {
                    ready &= not_ready(&parts[part_of(c)].1, c, f)?.is_none();
                }
                if !ready {
                    for &(c, f) in &sides {
                        let m = &mut parts[part_of(c)].1;
                        let zone = m.classify_merge_boundary(c, f)?.modification_zone;
                        m.boundary_modification(&zone, c, f)?;
                    }
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
        rounds += 1;
        if rounds >= MAX_ROUNDS {
            return Err(MergeError::SubdivisionFailure(rounds));
        }
    }

    let merged = assemble(&parts, &group)?;
    let (mesh, plan) = inherit(merged, &parts, kind, &group)?;
    let plan = MergePlan {
        seam_rounds: rounds,
        ..plan
    };

    let mut charts: Vec<Chart> = solid
        .charts()
        .iter()
        .enumerate()
        .filter(|(i, _)| !chart_ids.contains(i))
        .map(|(_, c)| c.clone())
        .collect();
    charts.push(Chart {
        mesh,
        frames: frames.iter().map(|(c, t)| (*c, *t)).collect(),
    });
    charts.sort_by_key(|c| c.frames.iter().map(|(c, _)| *c).min());
    Ok((SplineSolid::from_charts(solid.graph.clone(), charts), plan))
}

/// Builds the merged mesh: member cells, hull auxiliary cells, walls, and a
/// refined clamped tensor family over the hull planes.
fn assemble(parts: &[(usize, TMesh)], group: &BTreeSet<usize>) -> Result<TMesh, MergeError> {
    let mut domain: Vec<(usize, Aabb)> = parts.iter().flat_map(|(_, m)| m.domain().iter().copied()).collect();
    domain.sort_by_key(|d| d.0);
    debug_assert_eq!(domain.len(), group.len());
    let dim = parts.iter().map(|(_, m)| m.dim()).max().unwrap_or(3);
    let mut mesh = TMesh::empty(domain.clone(), dim);
    let eps = mesh.eps();
    let mut next_cell = 0;
    for (_, m) in parts {
        for c in m.cells().iter().filter(|c| !c.aux) {
            mesh.cells.push(c.clone());
        }
        next_cell = next_cell.max(m.next_cell);
    }
    mesh.next_cell = next_cell.max(mesh.cells.iter().map(|c| c.id + 1).max().unwrap_or(0));
    mesh.next_point = parts.iter().map(|(_, m)| m.next_point).max().unwrap_or(0);

    let planes: [Vec<f64>; 3] = std::array::from_fn(|a| {
        sorted_unique(domain.iter().flat_map(|(_, b)| [b.lo[a], b.hi[a]]).collect(), eps)
    });
    let inside = |b: &Aabb| domain.iter().any(|(_, d)| d.contains(b.center(), 0.0));
    let n: [usize; 3] = std::array::from_fn(|a| planes[a].len() - 1);
    let hull_cell = |i: usize, j: usize, k: usize| {
        Aabb::new(
            [planes[0][i], planes[1][j], planes[2][k]],
            [planes[0][i + 1], planes[1][j + 1], planes[2][k + 1]],
        )
    };
    let root = *group.iter().next().unwrap();
    // Auxiliary boxes are gridded with the member cell planes so rays
    // through them see the same knots as a locally uniform grid would.
    let cell_planes: [Vec<f64>; 3] = std::array::from_fn(|a| {
        sorted_unique(mesh.cells.iter().flat_map(|c| [c.bounds.lo[a], c.bounds.hi[a]]).collect(), eps)
    });
    let mut walls: Vec<PlaneRect> = Vec::new();
    for k in 0..n[2] {
        for j in 0..n[1] {
            for i in 0..n[0] {
                let b = hull_cell(i, j, k);
                let filled = inside(&b);
                if !filled {
                    let cuts: [Vec<f64>; 3] = std::array::from_fn(|a| {
                        let mut v: Vec<f64> = cell_planes[a]
                            .iter()
                            .copied()
                            .filter(|&x| x > b.lo[a] + eps && x < b.hi[a] - eps)
                            .collect();
                        v.insert(0, b.lo[a]);
                        v.push(b.hi[a]);
                        v
                    });
                    for z in 0..cuts[2].len() - 1 {
                        for y in 0..cuts[1].len() - 1 {
                            for x in 0..cuts[0].len() - 1 {
                                let sub = Aabb::new(
                                    [cuts[0][x], cuts[1][y], cuts[2][z]],
                                    [cuts[0][x + 1], cuts[1][y + 1], cuts[2][z + 1]],
                                );
                                mesh.push_cell(sub, root, true);
                            }
                        }
                    }
                }
                let idx = [i, j, k];
                for a in 0..3 {
                    for max in [false, true] {
                        let mut nb = idx;
                        let beyond = if max {
                            nb[a] += 1;
                            nb[a] >= n[a]
                        } else if nb[a] == 0 {
                            true
                        } else {
                            nb[a] -= 1;
                            false
                        };
                        let other_filled = !beyond && inside(&hull_cell(nb[0], nb[1], nb[2]));
                        if !filled || !other_filled {
                            walls.push(PlaneRect::face_of(&b, a, max));
                        }
                    }
                }
            }
        }
    }
    walls.sort_by(|x, y| {
        (x.axis, order_key(x.at), order_key(x.lo[0]), order_key(x.lo[1]))
            .cmp(&(y.axis, order_key(y.at), order_key(y.lo[0]), order_key(y.lo[1])))
    });
    walls.dedup_by(|x, y| x.same_as(y, eps));
    let hull = mesh.hull();
    mesh.walls = (0..3)
        .flat_map(|a| [PlaneRect::face_of(&hull, a, false), PlaneRect::face_of(&hull, a, true)])
        .collect();

    let lines: [Vec<f64>; 3] = std::array::from_fn(|a| {
        let p = &planes[a];
        let mut l = vec![p[0]; 3];
        l.extend_from_slice(p);
        l.extend(std::iter::repeat_n(*p.last().unwrap(), 3));
        l
    });
    for k in 0..lines[2].len() - 4 {
        for j in 0..lines[1].len() - 4 {
            for i in 0..lines[0].len() - 4 {
                let w = |l: &Vec<f64>, s: usize| -> [f64; 5] { std::array::from_fn(|t| l[s + t]) };
                mesh.push_point([w(&lines[0], i), w(&lines[1], j), w(&lines[2], k)], Weight::one(), None);
            }
        }
    }
    mesh.restricted = true;
    // First the standard family of the whole hull, then the designed knots.
    mesh.make_consistent()?;
    mesh.walls = walls;
    mesh.make_consistent()?;
    Ok(mesh)
}

/// Positions and ids for the merged family from the pre-merge points.
fn inherit(
    mut mesh: TMesh,
    parts: &[(usize, TMesh)],
    kind: MergeKind,
    group: &BTreeSet<usize>,
) -> Result<(TMesh, MergePlan), MergeError> {
    let eps = mesh.eps();
    let mut originals: HashMap<FnKey, Vec<&ControlPoint>> = HashMap::new();
    for (_, m) in parts {
        for p in m.points() {
            originals.entry(p.key()).or_default().push(p);
        }
    }
    let all: Vec<&ControlPoint> = parts.iter().flat_map(|(_, m)| m.points().iter()).collect();
    let boxes: Vec<Aabb> = mesh.domain().iter().map(|(_, b)| *b).collect();
    let dim = mesh.dim();
    let mut used: BTreeSet<PointId> = BTreeSet::new();
    let mut plan = MergePlan {
        kind: Some(kind),
        cuboids: group.iter().copied().collect(),
        ..Default::default()
    };
    let mut next = mesh.next_point.max(all.iter().map(|p| p.id + 1).max().unwrap_or(0));

    let mut order: Vec<usize> = (0..mesh.points.len()).collect();
    order.sort_by_key(|&i| mesh.points[i].key());
    let mut assigned: Vec<(usize, PointId)> = Vec::new();
    for i in order {
        let key = mesh.points[i].key();
        let mut found: Vec<&ControlPoint> = originals.get(&key).cloned().unwrap_or_default();
        if found.is_empty() {
            let s = mesh.points[i].support();
            for b in boxes.iter().filter(|b| b.overlaps(&s, eps)) {
                let k: [[f64; 5]; 3] = std::array::from_fn(|a| {
                    let t = mesh.points[i].knots[a].knots();
                    std::array::from_fn(|j| t[j].clamp(b.lo[a], b.hi[a]))
                });
                if let Some(v) = originals.get(&fn_key(&k)) {
                    for p in v {
                        if !found.iter().any(|q| q.id == p.id) {
                            found.push(p);
                        }
                    }
                }
            }
        }
        let p = &mut mesh.points[i];
        if found.is_empty() {
            let a = p.param();
            let near = all
                .iter()
                .min_by(|x, y| {
                    let d = |q: &ControlPoint| crate::geom::dist(&q.param(), &a);
                    d(x).total_cmp(&d(y)).then(x.id.cmp(&y.id))
                })
                .unwrap();
            p.position = near.position.clone();
            p.position.resize(dim, 0.0);
            let id = next;
            next += 1;
            used.insert(id);
            assigned.push((i, id));
            plan.inserted.push(id);
            continue;
        }
        let mut pos = vec![0.0; dim];
        for q in &found {
            for (s, x) in pos.iter_mut().zip(&q.position) {
                *s += x;
            }
        }
        pos.iter_mut().for_each(|s| *s /= found.len() as f64);
        p.position = pos;
        let mut ids: Vec<PointId> = found.iter().map(|q| q.id).collect();
        ids.sort_unstable();
        let id = match ids.iter().find(|id| !used.contains(id)) {
            Some(&id) => id,
            None => {
                next += 1;
                next - 1
            }
        };
        used.insert(id);
        assigned.push((i, id));
        plan.correspondence.push((id, ids));
    }
    for (i, id) in assigned {
        mesh.points[i].id = id;
    }
    mesh.points.sort_by_key(|p| p.id);
    mesh.next_point = next;
    plan.correspondence.sort();
    plan.inserted.sort_unstable();
    plan.weight_edits = mesh
        .points
        .iter()
        .filter(|p| !p.weight.is_one())
        .map(|p| (p.id, p.weight.clone()))
        .collect();
    Ok((mesh, plan))
}

/// Slot weights of the functions anchored at `c` whose knots on each axis
/// are the three `c`-centred windows of spacing `h`.
pub fn slot_weights(mesh: &TMesh, kind: MergeKind, c: Vec3, h: f64) -> WeightTable {
    let by_key: HashMap<FnKey, &ControlPoint> = mesh.points().iter().map(|p| (p.key(), p)).collect();
    let windows = |a: usize, s: usize| -> Vec<[f64; 5]> {
        let x = c[a];
        match s {
            0 => vec![[x - 2.0 * h, x - h, x, x, x]],
            2 => vec![[x, x, x, x + h, x + 2.0 * h]],
            _ => vec![[x - h, x, x, x, x + h], [x - h, x, x, x, x], [x, x, x, x, x + h]],
        }
    };
    let mut entries = BTreeMap::new();
    for z in 0..3 {
        for y in 0..3 {
            for x in 0..3 {
                let idx = (1 + x + 3 * y + 9 * z) as u8;
                let mut w = None;
                'search: for kx in windows(0, x) {
                    for ky in windows(1, y) {
                        for kz in windows(2, z) {
                            if let Some(p) = by_key.get(&fn_key(&[kx, ky, kz])) {
                                w = Some(p.weight.clone());
                                break 'search;
                            }
                        }
                    }
                }
                entries.insert(idx, w);
            }
        }
    }
    WeightTable { kind, entries }
}

/// Octant cuboids of the junction glued into a fresh solid, with the
/// junction point in the frame of the lowest cuboid.
pub fn junction_solid(kind: MergeKind, cells: usize) -> Result<(SplineSolid, Vec<usize>, Vec3), MergeError> {
    let octs = junction_octants(kind);
    let w = cells as f64;
    let mut g = crate::gpc::GpcGraph::new();
    let ids: Vec<usize> = octs
        .iter()
        .map(|_| g.add_cuboid([w; 3]))
        .collect::<Result<_, _>>()
        .map_err(SolidError::from)?;
    for (i, a) in octs.iter().enumerate() {
        for (j, b) in octs.iter().enumerate() {
            let diff: Vec<usize> = (0..3).filter(|&k| a[k] != b[k]).collect();
            if diff.len() == 1 && a[diff[0]] < b[diff[0]] {
                let axis = diff[0];
                g.glue((ids[i], Face { axis, max: true }), (ids[j], Face { axis, max: false }), 0)
                    .map_err(SolidError::from)?;
            }
        }
    }
    let solid = SplineSolid::standard(g, &[[cells; 3]])?;
    let c0 = octs[0];
    let center: Vec3 = std::array::from_fn(|a| if c0[a] < 0 { w } else { 0.0 });
    Ok((solid, ids, center))
}

/// Weight table obtained by merging a locally uniform junction
/// configuration, without comparing against the published values.
pub fn derive_slots(kind: MergeKind) -> Result<WeightTable, MergeError> {
    let (solid, ids, center) = junction_solid(kind, 3)?;
    let (merged, _) = merge_group(&solid, &ids, kind)?;
    let ch = merged.chart_of(ids[0])?.0;
    Ok(slot_weights(&merged.charts()[ch].mesh, kind, center, 1.0))
}

pub fn compare_tables(derived: &WeightTable, stored: &WeightTable) -> Vec<Mismatch> {
    (1..=27u8)
        .filter_map(|i| {
            let d = derived.entries.get(&i).cloned().flatten();
            let s = stored.entries.get(&i).cloned().flatten();
            (d != s).then_some(Mismatch {
                index: i,
                derived: d,
                stored: s,
            })
        })
        .collect()
}

/// Derives the table and checks it against the published one; only the
/// flagged Type-2 entry may differ.
pub fn derive_weight_table(kind: MergeKind) -> Result<WeightTable, MergeError> {
    let derived = derive_slots(kind)?;
    let Some(stored) = stored_table(kind) else { return Ok(derived) };
    let bad: Vec<Mismatch> = compare_tables(&derived, &stored)
        .into_iter()
        .filter(|m| !(kind == MergeKind::Type2 && m.index == FLAGGED_TYPE2_SLOT))
        .collect();
    if bad.is_empty() {
        Ok(derived)
    } else {
        Err(MergeError::Derivation(bad))
    }
}
