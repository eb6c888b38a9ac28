//! Text formats for solids, sample sets, lattices and merge plans.
//!
//! Floats are written with 17 significant digits so every value survives a
//! round trip, weights as reduced fractions, and every list in id order, so
//! writing a parsed file reproduces it byte for byte.

use crate::basis::KnotVector5;
use crate::exact::Weight;
use crate::fit::{Sample, SampleSet};
use crate::geom::{Aabb, PlaneRect};
use crate::gpc::{GpcGraph, Transform};
use crate::lattice::Lattice;
use crate::merge::MergeKind;
use crate::solid::{Chart, SplineSolid};
use crate::tmesh::{Cell, ControlPoint, Face, GridCoordinates, TMesh};
use std::fmt::Write as _;
use std::str::FromStr;
use thiserror::Error;

pub const SOLID_MAGIC: &str = "GPCSPLINE SOLID 1";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormatError {
    #[error("line {line}: {msg}")]
    Line { line: usize, msg: String },
    #[error("unexpected end of input: {0}")]
    Eof(String),
    #[error("{0}")]
    Invalid(String),
}

fn bad(line: usize, msg: impl Into<String>) -> FormatError {
    FormatError::Line { line, msg: msg.into() }
}

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn push_floats(out: &mut String, xs: &[f64]) {
    for x in xs {
        out.push(' ');
        out.push_str(&fmt_f64(*x));
    }
}

/// Canonical order: cells and points by id, walls by geometry.
fn sorted_mesh(mesh: &TMesh) -> (Vec<&Cell>, Vec<&PlaneRect>, Vec<&ControlPoint>) {
    let mut cells: Vec<&Cell> = mesh.cells().iter().collect();
    cells.sort_by_key(|c| c.id);
    let mut walls: Vec<&PlaneRect> = mesh.walls().iter().collect();
    walls.sort_by(|a, b| wall_key(a).partial_cmp(&wall_key(b)).unwrap_or(std::cmp::Ordering::Equal));
    let mut points: Vec<&ControlPoint> = mesh.points().iter().collect();
    points.sort_by_key(|p| p.id);
    (cells, walls, points)
}

fn wall_key(w: &PlaneRect) -> (usize, f64, f64, f64, f64, f64) {
    (w.axis, w.at, w.lo[0], w.lo[1], w.hi[0], w.hi[1])
}

fn push_transform(out: &mut String, t: &Transform) {
    let p = t.perm;
    let s = t.sign.map(|v| if v < 0.0 { -1 } else { 1 });
    let _ = write!(out, " {} {} {} {} {} {}", p[0], p[1], p[2], s[0], s[1], s[2]);
    push_floats(out, &t.offset);
}

pub fn write_solid(solid: &SplineSolid) -> String {
    let mut o = String::new();
    let g = &solid.graph;
    let _ = writeln!(o, "{SOLID_MAGIC}");
    let _ = writeln!(o, "HEADER");
    let _ = writeln!(o, "cuboids {}", g.cuboids().len());
    let _ = writeln!(o, "charts {}", solid.charts().len());
    let _ = writeln!(o, "dim {}", solid.dim());
    let _ = writeln!(o, "CUBOIDS");
    for c in g.cuboids() {
        let _ = write!(o, "{}", c.id);
        push_floats(&mut o, &c.extents);
        o.push('\n');
    }
    let _ = writeln!(o, "GLUE {}", g.edges().len());
    for e in g.edges() {
        let _ = write!(o, "{} {} {} {} {} {}", e.id, e.a.0, e.a.1.name(), e.b.0, e.b.1.name(), e.rotation);
        push_transform(&mut o, &e.b_to_a);
        o.push('\n');
    }
    for (ci, ch) in solid.charts().iter().enumerate() {
        let m = &ch.mesh;
        let (cells, walls, points) = sorted_mesh(m);
        let _ = writeln!(o, "MESH {ci}");
        let _ = writeln!(o, "frames {}", ch.frames.len());
        for (c, t) in &ch.frames {
            let _ = write!(o, "frame {c}");
            push_transform(&mut o, t);
            o.push('\n');
        }
        let _ = writeln!(o, "restricted {}", m.is_restricted() as u8);
        let _ = writeln!(o, "next {} {}", m.next_cell, m.next_point);
        let _ = writeln!(o, "domain {}", m.domain().len());
        for (c, b) in m.domain() {
            let _ = write!(o, "box {c}");
            push_floats(&mut o, &b.lo);
            push_floats(&mut o, &b.hi);
            o.push('\n');
        }
        match m.coords() {
            None => {
                let _ = writeln!(o, "grid none");
            }
            Some(gc) => {
                let _ = writeln!(o, "grid {} {} {}", gc.axis(0).len(), gc.axis(1).len(), gc.axis(2).len());
                for a in 0..3 {
                    let _ = write!(o, "axis {a}");
                    push_floats(&mut o, gc.axis(a));
                    o.push('\n');
                }
            }
        }
        let _ = writeln!(o, "cells {}", cells.len());
        for c in cells {
            let _ = write!(o, "cell {} {} {}", c.id, c.cuboid, c.aux as u8);
            push_floats(&mut o, &c.bounds.lo);
            push_floats(&mut o, &c.bounds.hi);
            o.push('\n');
        }
        let _ = writeln!(o, "walls {}", walls.len());
        for w in walls {
            let _ = write!(o, "wall {}", w.axis);
            push_floats(&mut o, &[w.at, w.lo[0], w.lo[1], w.hi[0], w.hi[1]]);
            o.push('\n');
        }
        let _ = writeln!(o, "POINTS {ci} {}", points.len());
        for p in points {
            let _ = write!(o, "{} {} {} |", p.id, p.cuboid, p.weight);
            push_floats(&mut o, &p.param());
            o.push_str(" |");
            for k in &p.knots {
                push_floats(&mut o, k.knots());
            }
            o.push_str(" |");
            push_floats(&mut o, &p.position);
            o.push('\n');
        }
    }
    let _ = writeln!(o, "AUDIT");
    let _ = writeln!(o, "semi_standard {}", solid.is_semi_standard() as u8);
    match solid.deviation() {
        Some(d) => {
            let _ = writeln!(o, "deviation {}", fmt_f64(d));
        }
        None => {
            let _ = writeln!(o, "deviation none");
        }
    }
    let _ = writeln!(o, "END");
    o
}

/// Line cursor skipping blank lines and `#` comments.
struct Lines<'a> {
    it: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            it: text.lines().enumerate().peekable(),
            last: 0,
        }
    }

    fn skip_blank(&mut self) {
        while let Some((_, l)) = self.it.peek() {
            let t = l.trim();
            if t.is_empty() || t.starts_with('#') {
                self.it.next();
            } else {
                break;
            }
        }
    }

    fn next(&mut self, what: &str) -> Result<(usize, &'a str), FormatError> {
        self.skip_blank();
        let (i, l) = self.it.next().ok_or_else(|| FormatError::Eof(what.into()))?;
        self.last = i + 1;
        Ok((i + 1, l.trim()))
    }

    fn at_end(&mut self) -> bool {
        self.skip_blank();
        self.it.peek().is_none()
    }

    /// Next line split into tokens, whose first token must be `key`.
    fn keyed(&mut self, key: &str) -> Result<(usize, Vec<&'a str>), FormatError> {
        let (n, l) = self.next(key)?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.first() != Some(&key) {
            return Err(bad(n, format!("expected '{key}', found '{l}'")));
        }
        Ok((n, toks[1..].to_vec()))
    }
}

fn num<T: FromStr>(line: usize, tok: Option<&&str>, what: &str) -> Result<T, FormatError> {
    let t = tok.ok_or_else(|| bad(line, format!("missing {what}")))?;
    t.parse().map_err(|_| bad(line, format!("bad {what} '{t}'")))
}

fn float(line: usize, tok: &str) -> Result<f64, FormatError> {
    let v: f64 = tok.parse().map_err(|_| bad(line, format!("bad number '{tok}'")))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(bad(line, format!("non-finite number '{tok}'")))
    }
}

fn floats<const N: usize>(line: usize, toks: &[&str]) -> Result<[f64; N], FormatError> {
    if toks.len() < N {
        return Err(bad(line, format!("expected {N} numbers, found {}", toks.len())));
    }
    let mut out = [0.0; N];
    for (o, t) in out.iter_mut().zip(toks) {
        *o = float(line, t)?;
    }
    Ok(out)
}

fn exact_len(line: usize, toks: &[&str], n: usize) -> Result<(), FormatError> {
    if toks.len() != n {
        return Err(bad(line, format!("expected {n} fields, found {}", toks.len())));
    }
    Ok(())
}

fn transform(line: usize, toks: &[&str]) -> Result<Transform, FormatError> {
    let mut perm = [0usize; 3];
    let mut sign = [1.0; 3];
    for a in 0..3 {
        perm[a] = num(line, toks.get(a), "permutation entry")?;
        let s: i32 = num(line, toks.get(3 + a), "sign")?;
        sign[a] = match s {
            1 => 1.0,
            -1 => -1.0,
            _ => return Err(bad(line, format!("sign must be 1 or -1, got {s}"))),
        };
    }
    let mut seen = [false; 3];
    for &p in &perm {
        if p > 2 || std::mem::replace(&mut seen[p], true) {
            return Err(bad(line, "transform is not a signed permutation"));
        }
    }
    let offset = floats::<3>(line, &toks[6.min(toks.len())..])?;
    Ok(Transform { perm, sign, offset })
}

fn count(line: usize, toks: &[&str], what: &str) -> Result<usize, FormatError> {
    exact_len(line, toks, 1)?;
    num(line, toks.first(), what)
}

pub fn parse_solid(text: &str) -> Result<SplineSolid, FormatError> {
    let mut ls = Lines::new(text);
    let (n, magic) = ls.next("header")?;
    if magic != SOLID_MAGIC {
        return Err(bad(n, format!("expected '{SOLID_MAGIC}'")));
    }
    ls.keyed("HEADER")?;
    let (n, t) = ls.keyed("cuboids")?;
    let ncub = count(n, &t, "cuboid count")?;
    let (n, t) = ls.keyed("charts")?;
    let ncharts = count(n, &t, "chart count")?;
    let (n, t) = ls.keyed("dim")?;
    let dim = count(n, &t, "dimension")?;
    if dim == 0 {
        return Err(bad(n, "dimension must be positive"));
    }

    ls.keyed("CUBOIDS")?;
    let mut graph = GpcGraph::new();
    for i in 0..ncub {
        let (n, l) = ls.next("cuboid")?;
        let t: Vec<&str> = l.split_whitespace().collect();
        exact_len(n, &t, 4)?;
        let id: usize = num(n, t.first(), "cuboid id")?;
        if id != i {
            return Err(bad(n, format!("cuboid ids must be consecutive, expected {i}")));
        }
        let e = floats::<3>(n, &t[1..])?;
        graph.add_cuboid(e).map_err(|e| bad(n, e.to_string()))?;
    }

    let (n, t) = ls.keyed("GLUE")?;
    let nglue = count(n, &t, "glue count")?;
    for i in 0..nglue {
        let (n, l) = ls.next("glue")?;
        let t: Vec<&str> = l.split_whitespace().collect();
        exact_len(n, &t, 15)?;
        let id: usize = num(n, t.first(), "glue id")?;
        if id != i {
            return Err(bad(n, format!("glue ids must be consecutive, expected {i}")));
        }
        let face = |s: &str| Face::parse(s).ok_or_else(|| bad(n, format!("bad face '{s}'")));
        let a = (num(n, t.get(1), "cuboid")?, face(t[2])?);
        let b = (num(n, t.get(3), "cuboid")?, face(t[4])?);
        let rot: u8 = num(n, t.get(5), "rotation")?;
        let want = transform(n, &t[6..])?;
        let e = graph.glue(a, b, rot).map_err(|e| bad(n, e.to_string()))?;
        let got = graph.edges()[e].b_to_a;
        let same = got.perm == want.perm
            && got.sign == want.sign
            && (0..3).all(|k| (got.offset[k] - want.offset[k]).abs() <= 1e-9);
        if !same {
            return Err(bad(n, "glue transform disagrees with the face pair and rotation"));
        }
    }

    let mut charts = Vec::with_capacity(ncharts);
    for ci in 0..ncharts {
        let (n, t) = ls.keyed("MESH")?;
        if count(n, &t, "chart index")? != ci {
            return Err(bad(n, format!("expected MESH {ci}")));
        }
        let (n, t) = ls.keyed("frames")?;
        let nf = count(n, &t, "frame count")?;
        let mut frames = Vec::with_capacity(nf);
        for _ in 0..nf {
            let (n, t) = ls.keyed("frame")?;
            exact_len(n, &t, 10)?;
            let c: usize = num(n, t.first(), "cuboid")?;
            if c >= ncub {
                return Err(bad(n, format!("unknown cuboid {c}")));
            }
            frames.push((c, transform(n, &t[1..])?));
        }
        let (n, t) = ls.keyed("restricted")?;
        let restricted = match count(n, &t, "flag")? {
            0 => false,
            1 => true,
            _ => return Err(bad(n, "flag must be 0 or 1")),
        };
        let (n, t) = ls.keyed("next")?;
        exact_len(n, &t, 2)?;
        let next_cell: u64 = num(n, t.first(), "next cell id")?;
        let next_point: u64 = num(n, t.get(1), "next point id")?;
        let (n, t) = ls.keyed("domain")?;
        let nd = count(n, &t, "domain count")?;
        let mut domain = Vec::with_capacity(nd);
        for _ in 0..nd {
            let (n, t) = ls.keyed("box")?;
            exact_len(n, &t, 7)?;
            let c: usize = num(n, t.first(), "cuboid")?;
            let v = floats::<6>(n, &t[1..])?;
            domain.push((c, Aabb::new([v[0], v[1], v[2]], [v[3], v[4], v[5]])));
        }
        let (n, t) = ls.keyed("grid")?;
        let coords = if t == ["none"] {
            None
        } else {
            exact_len(n, &t, 3)?;
            let mut axes: [Vec<f64>; 3] = Default::default();
            for (a, slot) in axes.iter_mut().enumerate() {
                let want: usize = num(n, t.get(a), "grid size")?;
                let (m, at) = ls.keyed("axis")?;
                exact_len(m, &at, want + 1)?;
                if num::<usize>(m, at.first(), "axis")? != a {
                    return Err(bad(m, format!("expected axis {a}")));
                }
                *slot = at[1..].iter().map(|s| float(m, s)).collect::<Result<_, _>>()?;
            }
            let [s1, s2, s3] = axes;
            Some(GridCoordinates::new(s1, s2, s3).map_err(|e| bad(n, e.to_string()))?)
        };
        let (n, t) = ls.keyed("cells")?;
        let nc = count(n, &t, "cell count")?;
        let mut cells = Vec::with_capacity(nc);
        for _ in 0..nc {
            let (n, t) = ls.keyed("cell")?;
            exact_len(n, &t, 9)?;
            let v = floats::<6>(n, &t[3..])?;
            let aux: u8 = num(n, t.get(2), "aux flag")?;
            cells.push(Cell {
                id: num(n, t.first(), "cell id")?,
                cuboid: num(n, t.get(1), "cuboid")?,
                aux: aux == 1,
                bounds: Aabb::new([v[0], v[1], v[2]], [v[3], v[4], v[5]]),
            });
        }
        let (n, t) = ls.keyed("walls")?;
        let nw = count(n, &t, "wall count")?;
        let mut walls = Vec::with_capacity(nw);
        for _ in 0..nw {
            let (n, t) = ls.keyed("wall")?;
            exact_len(n, &t, 6)?;
            let axis: usize = num(n, t.first(), "axis")?;
            if axis > 2 {
                return Err(bad(n, "axis out of range"));
            }
            let v = floats::<5>(n, &t[1..])?;
            walls.push(PlaneRect {
                axis,
                at: v[0],
                lo: [v[1], v[2]],
                hi: [v[3], v[4]],
            });
        }
        let (n, t) = ls.keyed("POINTS")?;
        exact_len(n, &t, 2)?;
        if num::<usize>(n, t.first(), "chart index")? != ci {
            return Err(bad(n, format!("expected POINTS {ci}")));
        }
        let np: usize = num(n, t.get(1), "point count")?;
        let mut points = Vec::with_capacity(np);
        for _ in 0..np {
            let (n, l) = ls.next("point")?;
            points.push(parse_point(n, l, dim)?);
        }
        let mesh = TMesh {
            domain,
            cells,
            walls,
            points,
            coords,
            restricted,
            dim,
            next_cell,
            next_point,
        };
        charts.push(Chart { mesh, frames });
    }
    ls.keyed("AUDIT")?;
    let (n, t) = ls.keyed("semi_standard")?;
    let flag = count(n, &t, "flag")? == 1;
    let (n, t) = ls.keyed("deviation")?;
    exact_len(n, &t, 1)?;
    let deviation = if t[0] == "none" { None } else { Some(float(n, t[0])?) };
    ls.keyed("END")?;
    if !ls.at_end() {
        return Err(bad(ls.last + 1, "trailing content after END"));
    }
    let mut solid = SplineSolid::from_charts(graph, charts);
    check_membership(&solid)?;
    solid.set_audit(flag, deviation);
    Ok(solid)
}

fn parse_point(n: usize, l: &str, dim: usize) -> Result<ControlPoint, FormatError> {
    let parts: Vec<&str> = l.split('|').collect();
    if parts.len() != 4 {
        return Err(bad(n, "point needs four '|'-separated groups"));
    }
    let head: Vec<&str> = parts[0].split_whitespace().collect();
    exact_len(n, &head, 3)?;
    let weight: Weight = head[2].parse().map_err(|e: String| bad(n, e))?;
    if !weight.is_positive() {
        return Err(bad(n, "weights must be positive"));
    }
    let param = floats::<3>(n, &parts[1].split_whitespace().collect::<Vec<_>>())?;
    let kt: Vec<&str> = parts[2].split_whitespace().collect();
    exact_len(n, &kt, 15)?;
    let k = floats::<15>(n, &kt)?;
    let knots: [KnotVector5; 3] = [0, 1, 2]
        .map(|a| KnotVector5::new(std::array::from_fn(|i| k[5 * a + i])))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| bad(n, e.to_string()))?
        .try_into()
        .unwrap();
    let pt: Vec<&str> = parts[3].split_whitespace().collect();
    exact_len(n, &pt, dim)?;
    let position = pt.iter().map(|s| float(n, s)).collect::<Result<_, _>>()?;
    let p = ControlPoint {
        id: num(n, head.first(), "point id")?,
        cuboid: num(n, head.get(1), "cuboid")?,
        weight,
        knots,
        position,
    };
    if p.param() != param {
        return Err(bad(n, "anchor does not match the knot vectors"));
    }
    Ok(p)
}

/// Every cuboid sits in exactly one chart whose domain lists it.
fn check_membership(solid: &SplineSolid) -> Result<(), FormatError> {
    for c in solid.graph.cuboids() {
        let owners = solid.charts().iter().filter(|ch| ch.frame(c.id).is_some()).count();
        if owners != 1 {
            return Err(FormatError::Invalid(format!("cuboid {} belongs to {owners} charts", c.id)));
        }
    }
    for (i, ch) in solid.charts().iter().enumerate() {
        for (c, _) in &ch.frames {
            if ch.mesh.member_box(*c).is_none() {
                return Err(FormatError::Invalid(format!("chart {i} has no domain box for cuboid {c}")));
            }
        }
    }
    Ok(())
}

/// Column names of a sample file: `cuboid,u,v,w` then the target columns.
pub fn write_samples(samples: &SampleSet, columns: Option<&[String]>) -> String {
    let mut o = String::from("cuboid,u,v,w");
    let d = samples.dim();
    let default = ["x", "y", "z"];
    for i in 0..d {
        o.push(',');
        match columns.and_then(|c| c.get(i)) {
            Some(c) => o.push_str(c),
            None if i < 3 => o.push_str(default[i]),
            None => {
                let _ = write!(o, "a{}", i - 3);
            }
        }
    }
    o.push('\n');
    for s in samples.samples() {
        let _ = write!(o, "{}", s.cuboid);
        for v in s.param.iter().chain(&s.target) {
            o.push(',');
            o.push_str(&fmt_f64(*v));
        }
        o.push('\n');
    }
    o
}

/// Parses a sample file. Targets may be absent (parameter lists).
pub fn parse_samples(text: &str) -> Result<(SampleSet, Vec<String>), FormatError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| bad(1, e.to_string()))?.clone();
    let names: Vec<String> = header.iter().map(str::to_string).collect();
    if names.len() < 4 || names[..4].iter().map(|s| s.to_ascii_lowercase()).ne(["cuboid", "u", "v", "w"]) {
        return Err(bad(1, "header must start with cuboid,u,v,w"));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| bad(e.position().map_or(0, |p| p.line() as usize), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != names.len() {
            return Err(bad(line, format!("expected {} columns, found {}", names.len(), rec.len())));
        }
        let cuboid: usize = rec[0].parse().map_err(|_| bad(line, format!("bad cuboid id '{}'", &rec[0])))?;
        let vals: Vec<f64> = rec.iter().skip(1).map(|s| float(line, s)).collect::<Result<_, _>>()?;
        out.push(Sample {
            cuboid,
            param: [vals[0], vals[1], vals[2]],
            target: vals[3..].to_vec(),
        });
    }
    let set = SampleSet::new(out).map_err(|e| FormatError::Invalid(e.to_string()))?;
    Ok((set, names[4..].to_vec()))
}

/// One or more lattices, each a `DIMS` line followed by its nodes.
pub fn write_lattices(lattices: &[Lattice]) -> String {
    let mut o = String::new();
    for l in lattices {
        let d = l.dims();
        let _ = writeln!(o, "DIMS {} {} {}", d[0], d[1], d[2]);
        for p in l.nodes() {
            let s: Vec<String> = p.iter().map(|v| fmt_f64(*v)).collect();
            let _ = writeln!(o, "{}", s.join(" "));
        }
    }
    o
}

pub fn parse_lattices(text: &str) -> Result<Vec<Lattice>, FormatError> {
    let mut ls = Lines::new(text);
    let mut out = Vec::new();
    while !ls.at_end() {
        let (n, t) = ls.keyed("DIMS")?;
        exact_len(n, &t, 3)?;
        let dims: [usize; 3] = [
            num(n, t.first(), "size")?,
            num(n, t.get(1), "size")?,
            num(n, t.get(2), "size")?,
        ];
        let total = dims.iter().try_fold(1usize, |a, &b| a.checked_mul(b)).ok_or_else(|| bad(n, "lattice too large"))?;
        let mut nodes = Vec::with_capacity(total.min(1 << 24));
        for _ in 0..total {
            let (m, l) = ls.next("lattice node")?;
            if l.starts_with("DIMS") {
                return Err(bad(m, format!("lattice at line {n} has fewer than {total} nodes")));
            }
            nodes.push(l.split_whitespace().map(|s| float(m, s)).collect::<Result<Vec<_>, _>>()?);
        }
        out.push(Lattice::new(dims, nodes).map_err(|e| bad(n, e.to_string()))?);
    }
    if out.is_empty() {
        return Err(FormatError::Eof("DIMS".into()));
    }
    Ok(out)
}

/// One planned junction merge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanEntry {
    pub kind: MergeKind,
    pub cuboids: Vec<usize>,
}

/// Cuboids a junction of each kind joins.
pub fn junction_size(kind: MergeKind) -> usize {
    crate::merge::junction_octants(kind).len()
}

/// Plan lines: `<kind> <cuboid>...`, e.g. `TwoCube 0 1` or `Type1 0 1 2`.
pub fn parse_plan(text: &str) -> Result<Vec<PlanEntry>, FormatError> {
    let mut ls = Lines::new(text);
    let mut out = Vec::new();
    while !ls.at_end() {
        let (n, l) = ls.next("plan entry")?;
        let t: Vec<&str> = l.split_whitespace().collect();
        let kind: MergeKind = t[0].parse().map_err(|e: String| bad(n, e))?;
        let cuboids: Vec<usize> = t[1..]
            .iter()
            .map(|s| s.parse().map_err(|_| bad(n, format!("bad cuboid id '{s}'"))))
            .collect::<Result<_, _>>()?;
        let want = junction_size(kind);
        if cuboids.len() != want {
            return Err(bad(n, format!("{kind} joins {want} cuboids, plan lists {}", cuboids.len())));
        }
        out.push(PlanEntry { kind, cuboids });
    }
    Ok(out)
}

pub fn write_plan(plan: &[PlanEntry]) -> String {
    let mut o = String::new();
    for e in plan {
        let ids: Vec<String> = e.cuboids.iter().map(usize::to_string).collect();
        let _ = writeln!(o, "{} {}", e.kind, ids.join(" "));
    }
    o
}
