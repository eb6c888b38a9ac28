//! Command-line front end. Exit codes: 0 success, 2 usage or input error,
//! 3 internal invariant failure.

use crate::fit::{self, FitError, FitReport};
use crate::io::{self, FormatError, PlanEntry};
use crate::lattice::{self, LatticeError, DEFAULT_MAX_ITERS};
use crate::merge::{self, MergeError, MergeKind};
use crate::solid::{EvalMode, SolidError, SplineSolid};
use crate::tmesh::TMeshError;
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const AUDIT_SAMPLES: usize = 10_000;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Internal(_) => 3,
        }
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        CliError::Usage(e.to_string())
    }
}

fn solid_err(e: SolidError) -> CliError {
    match e {
        SolidError::OutsideDomain(..) | SolidError::Invalid(_) | SolidError::Graph(_) => CliError::Usage(e.to_string()),
        SolidError::Mesh(TMeshError::UnknownCell(_) | TMeshError::AuxiliaryCell(_)) => CliError::Usage(e.to_string()),
        _ => CliError::Internal(e.to_string()),
    }
}

impl From<SolidError> for CliError {
    fn from(e: SolidError) -> Self {
        solid_err(e)
    }
}

impl From<FitError> for CliError {
    fn from(e: FitError) -> Self {
        match e {
            FitError::Singular(_) => CliError::Internal(e.to_string()),
            FitError::Solid(s) => solid_err(s),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<MergeError> for CliError {
    fn from(e: MergeError) -> Self {
        match e {
            MergeError::Solid(s) => solid_err(s),
            MergeError::SubdivisionFailure(_) | MergeError::Derivation(_) | MergeError::Mesh(_) => {
                CliError::Internal(e.to_string())
            }
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<LatticeError> for CliError {
    fn from(e: LatticeError) -> Self {
        match e {
            LatticeError::Solid(s) => solid_err(s),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "gpcspline", version, about = "Semi-standard T-spline solids over poly-cube domains")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FitMode {
    Boundary,
    Interior,
    Global,
    Hierarchical,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit control points to samples.
    Fit {
        solid: PathBuf,
        samples: PathBuf,
        #[arg(long, value_enum, default_value = "hierarchical")]
        mode: FitMode,
        #[arg(long, default_value_t = 1e-3)]
        epsilon: f64,
        #[arg(long, default_value_t = 3)]
        levels: usize,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Evaluate at listed parameters or on a uniform grid per cuboid.
    Eval {
        solid: PathBuf,
        #[command(flatten)]
        at: EvalAt,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Subdivide cells.
    Refine {
        solid: PathBuf,
        #[command(flatten)]
        which: RefineWhich,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Merge cuboids along the junctions listed in a plan file.
    Merge {
        #[arg(required = true)]
        solids: Vec<PathBuf>,
        #[arg(long)]
        plan: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Audit partition of unity, support confinement and knot consistency.
    Check { solid: PathBuf },
    /// Relax lattice interiors toward the six-neighbour mean.
    Relax {
        lattice: PathBuf,
        #[arg(long, default_value_t = 1e-10)]
        threshold: f64,
        #[arg(long, default_value_t = DEFAULT_MAX_ITERS)]
        max_iters: usize,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Write the bundled fixtures into a directory.
    GenFixtures { dir: PathBuf },
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct EvalAt {
    /// Parameter file with columns cuboid,u,v,w.
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long, num_args = 3, value_names = ["D0", "D1", "D2"])]
    grid: Option<Vec<usize>>,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct RefineWhich {
    /// Comma-separated cell ids.
    #[arg(long, value_delimiter = ',')]
    cells: Option<Vec<u64>>,
    #[arg(long)]
    all: bool,
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn read_solid(path: &Path) -> Result<SplineSolid, CliError> {
    io::parse_solid(&read(path)?).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

/// Thread cap from `KERNEL_THREADS`; unset means the default pool.
pub fn thread_cap() -> Result<Option<usize>, CliError> {
    match std::env::var("KERNEL_THREADS") {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(CliError::Usage(format!("KERNEL_THREADS must be an integer >= 1, got '{v}'"))),
        },
    }
}

/// Runs a parsed command, returning the text written to stdout.
pub fn run(cli: Cli) -> Result<String, CliError> {
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = thread_cap()? {
            b = b.num_threads(n);
        }
        b.build().map_err(|e| CliError::Internal(e.to_string()))?
    };
    pool.install(|| dispatch(cli.command))
}

fn dispatch(cmd: Command) -> Result<String, CliError> {
    match cmd {
        Command::Fit {
            solid,
            samples,
            mode,
            epsilon,
            levels,
            out,
            report,
        } => cmd_fit(&solid, &samples, mode, epsilon, levels, &out, report.as_deref()),
        Command::Eval { solid, at, out } => cmd_eval(&solid, at.params.as_deref(), at.grid, &out),
        Command::Refine { solid, which, out } => cmd_refine(&solid, which.cells, which.all, &out),
        Command::Merge { solids, plan, out } => cmd_merge(&solids, &plan, &out),
        Command::Check { solid } => cmd_check(&solid),
        Command::Relax {
            lattice,
            threshold,
            max_iters,
            out,
        } => cmd_relax(&lattice, threshold, max_iters, &out),
        Command::GenFixtures { dir } => gen_fixtures(&dir),
    }
}

pub fn format_report(mode: FitMode, epsilon: f64, reports: &[FitReport]) -> String {
    let mut o = String::new();
    let stamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    let _ = writeln!(o, "# generated at unix time {stamp}");
    let _ = writeln!(o, "mode {}", format!("{mode:?}").to_ascii_lowercase());
    let _ = writeln!(o, "epsilon {}", io::fmt_f64(epsilon));
    let _ = writeln!(o, "level rms max_cell_error points subdivided");
    for r in reports {
        let _ = writeln!(
            o,
            "{} {} {} {} {}",
            r.level,
            io::fmt_f64(r.rms),
            io::fmt_f64(r.max_cell_error()),
            r.points,
            r.subdivided
        );
    }
    for w in reports.iter().flat_map(|r| &r.warnings) {
        let _ = writeln!(o, "warning {w}");
    }
    let converged = reports.last().is_some_and(|r| r.converged);
    let _ = writeln!(o, "converged {converged}");
    o
}

fn cmd_fit(
    solid: &Path,
    samples: &Path,
    mode: FitMode,
    epsilon: f64,
    levels: usize,
    out: &Path,
    report: Option<&Path>,
) -> Result<String, CliError> {
    let s = read_solid(solid)?;
    let (set, _) = io::parse_samples(&read(samples)?).map_err(|e| CliError::Usage(format!("{}: {e}", samples.display())))?;
    if set.is_empty() {
        return Err(CliError::Usage(format!("{}: no samples", samples.display())));
    }
    set.validate(&s)?;
    let (fitted, reports) = match mode {
        FitMode::Boundary => {
            let (f, r) = fit::boundary_fit(&s, &set)?;
            (f, vec![r])
        }
        FitMode::Global => {
            let (f, r) = fit::global_fit(&s, &set)?;
            (f, vec![r])
        }
        FitMode::Interior => {
            let (f, ir) = fit::interior_fit(&s)?;
            let r = FitReport {
                rms: fit::rms(&f, &set)?,
                points: f.point_count(),
                converged: true,
                solver_iterations: ir.solver_iterations,
                warnings: ir.warnings,
                ..Default::default()
            };
            (f, vec![r])
        }
        FitMode::Hierarchical => fit::hierarchical_fit(&s, &set, epsilon, levels)?,
    };
    write(out, &io::write_solid(&fitted))?;
    let text = format_report(mode, epsilon, &reports);
    if let Some(p) = report {
        write(p, &text)?;
    }
    Ok(text)
}

fn cmd_eval(solid: &Path, params: Option<&Path>, grid: Option<Vec<usize>>, out: &Path) -> Result<String, CliError> {
    let mut s = read_solid(solid)?;
    if !s.is_semi_standard() {
        s.audit_semi_standard(AUDIT_SAMPLES);
    }
    let mode = if s.is_semi_standard() {
        EvalMode::SemiStandard
    } else {
        EvalMode::Rational
    };
    if let Some(dims) = grid {
        let dims = [dims[0], dims[1], dims[2]];
        let ls = lattice::sample_solid_to_lattice_with(&s, dims, mode)?;
        write(out, &io::write_lattices(&ls))?;
        return Ok(format!("wrote {} lattices\n", ls.len()));
    }
    let path = params.expect("clap enforces one of --params/--grid");
    let (set, _) = io::parse_samples(&read(path)?).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let mut o = String::from("cuboid,u,v,w");
    for d in 0..s.dim() {
        let _ = write!(o, ",f{d}");
    }
    o.push('\n');
    let mut failed = 0;
    for smp in set.samples() {
        let h = smp.param;
        let _ = write!(o, "{},{},{},{}", smp.cuboid, io::fmt_f64(h[0]), io::fmt_f64(h[1]), io::fmt_f64(h[2]));
        match s.evaluate(smp.cuboid, h, mode) {
            Ok(v) => v.iter().for_each(|x| {
                let _ = write!(o, ",{}", io::fmt_f64(*x));
            }),
            Err(e) => {
                failed += 1;
                let _ = write!(o, ",ERROR {}", e.to_string().replace(',', ";"));
            }
        }
        o.push('\n');
    }
    write(out, &o)?;
    if failed > 0 {
        return Err(CliError::Usage(format!("{failed} parameters could not be evaluated")));
    }
    Ok(format!("evaluated {} parameters\n", set.len()))
}

fn cmd_refine(solid: &Path, cells: Option<Vec<u64>>, all: bool, out: &Path) -> Result<String, CliError> {
    let mut s = read_solid(solid)?;
    let mut per_chart: Vec<Vec<u64>> = vec![Vec::new(); s.charts().len()];
    if all {
        for (i, ch) in s.charts().iter().enumerate() {
            per_chart[i] = ch.mesh.cells().iter().filter(|c| !c.aux).map(|c| c.id).collect();
        }
    } else {
        for id in cells.unwrap_or_default() {
            let i = s
                .charts()
                .iter()
                .position(|ch| ch.mesh.cells().iter().any(|c| c.id == id))
                .ok_or_else(|| CliError::Usage(format!("unknown cell id {id}")))?;
            per_chart[i].push(id);
        }
    }
    let mut created = 0;
    for (i, ids) in per_chart.iter().enumerate().filter(|(_, v)| !v.is_empty()) {
        created += s.refine_cells(i, ids)?.len();
    }
    let (dev, _) = s.audit_semi_standard(AUDIT_SAMPLES);
    write(out, &io::write_solid(&s))?;
    Ok(format!("created {created} cells, deviation {}\n", io::fmt_f64(dev)))
}

/// Applies one plan entry.
pub fn apply_plan_entry(s: &SplineSolid, e: &PlanEntry) -> Result<(SplineSolid, merge::MergePlan), CliError> {
    for &c in &e.cuboids {
        if c >= s.graph.cuboids().len() {
            return Err(CliError::Usage(format!("plan names unknown cuboid {c}")));
        }
    }
    let out = match e.kind {
        MergeKind::TwoCube => {
            let (a, b) = (e.cuboids[0], e.cuboids[1]);
            let edge = s
                .graph
                .edges()
                .iter()
                .find(|g| (g.a.0 == a && g.b.0 == b) || (g.a.0 == b && g.b.0 == a))
                .ok_or_else(|| CliError::Usage(format!("cuboids {a} and {b} are not glued")))?;
            merge::merge_two_cube(s, edge.id)?
        }
        MergeKind::Type1 => merge::merge_type1(s, [e.cuboids[0], e.cuboids[1], e.cuboids[2]])?,
        k => merge::merge_type234(s, &e.cuboids, k)?,
    };
    Ok(out)
}

fn cmd_merge(solids: &[PathBuf], plan: &Path, out: &Path) -> Result<String, CliError> {
    if solids.len() != 1 {
        return Err(CliError::Usage(
            "merge reads one solid whose glue graph links all cuboids to be merged".into(),
        ));
    }
    let mut s = read_solid(&solids[0])?;
    let entries = io::parse_plan(&read(plan)?).map_err(|e| CliError::Usage(format!("{}: {e}", plan.display())))?;
    let mut o = String::new();
    for e in &entries {
        let (next, p) = apply_plan_entry(&s, e)?;
        let _ = writeln!(
            o,
            "{} {:?}: {} points, {} inserted, {} weight edits",
            e.kind,
            e.cuboids,
            next.point_count(),
            p.inserted.len(),
            p.weight_edits.len()
        );
        s = next;
    }
    let (dev, _) = s.audit_semi_standard(AUDIT_SAMPLES);
    let _ = writeln!(o, "deviation {}", io::fmt_f64(dev));
    write(out, &io::write_solid(&s))?;
    if !s.is_semi_standard() {
        return Err(CliError::Internal(format!("merged solid fails the audit: deviation {dev:e}")));
    }
    Ok(o)
}

/// Check results; `passed` is the conjunction of the three checks.
pub struct CheckReport {
    pub text: String,
    pub passed: bool,
}

pub fn check_solid(solid: &SplineSolid) -> CheckReport {
    let mut s = solid.clone();
    let claimed = solid.is_semi_standard();
    let (dev, (c, h)) = s.audit_semi_standard(AUDIT_SAMPLES);
    let mut o = String::new();
    let audit_ok = s.is_semi_standard();
    let _ = writeln!(
        o,
        "semi-standard {} deviation {} worst cuboid {c} at {} {} {}",
        pass(audit_ok),
        io::fmt_f64(dev),
        io::fmt_f64(h[0]),
        io::fmt_f64(h[1]),
        io::fmt_f64(h[2])
    );
    if claimed && !audit_ok {
        let _ = writeln!(o, "note file claims semi-standard but the audit fails");
    }
    let mut escapes = Vec::new();
    let mut rule1 = Vec::new();
    for (i, ch) in s.charts().iter().enumerate() {
        escapes.extend(ch.mesh.support_escapes().into_iter().map(|e| (i, e)));
        rule1.extend(ch.mesh.rule1_violations().into_iter().map(|v| (i, v)));
    }
    let worst = escapes.iter().max_by(|a, b| a.1 .1.total_cmp(&b.1 .1));
    match worst {
        None => {
            let _ = writeln!(o, "boundary-restriction PASS escapes 0");
        }
        Some((ci, (id, f))) => {
            let _ = writeln!(
                o,
                "boundary-restriction FAIL escapes {} worst point {id} chart {ci} outside fraction {}",
                escapes.len(),
                io::fmt_f64(*f)
            );
        }
    }
    let _ = writeln!(o, "rule1 {} violations {}", pass(rule1.is_empty()), rule1.len());
    for (ci, v) in rule1.iter().take(10) {
        let _ = writeln!(o, "  chart {ci}: {v}");
    }
    let passed = audit_ok && escapes.is_empty() && rule1.is_empty();
    let _ = writeln!(o, "overall {}", pass(passed));
    CheckReport { text: o, passed }
}

fn pass(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn cmd_check(solid: &Path) -> Result<String, CliError> {
    let s = read_solid(solid)?;
    let r = check_solid(&s);
    if r.passed {
        Ok(r.text)
    } else {
        print!("{}", r.text);
        Err(CliError::Internal("check failed".into()))
    }
}

fn cmd_relax(input: &Path, threshold: f64, max_iters: usize, out: &Path) -> Result<String, CliError> {
    if !(threshold > 0.0 && threshold.is_finite()) {
        return Err(CliError::Usage(format!("threshold must be positive, got {threshold}")));
    }
    let ls = io::parse_lattices(&read(input)?).map_err(|e| CliError::Usage(format!("{}: {e}", input.display())))?;
    let mut o = String::new();
    let mut relaxed = Vec::new();
    for (i, l) in ls.iter().enumerate() {
        let r = lattice::relax(l, threshold, max_iters)?;
        let _ = writeln!(o, "lattice {i} iterations {} converged {}", r.iterations, r.converged);
        relaxed.push(r.lattice);
    }
    write(out, &io::write_lattices(&relaxed))?;
    Ok(o)
}

fn gen_fixtures(dir: &Path) -> Result<String, CliError> {
    use crate::fixtures;
    std::fs::create_dir_all(dir).map_err(|e| CliError::Usage(format!("{}: {e}", dir.display())))?;
    let mut o = String::new();
    for (name, mut s) in fixtures::solids()? {
        s.audit_semi_standard(AUDIT_SAMPLES);
        let p = dir.join(format!("{name}.solid"));
        write(&p, &io::write_solid(&s))?;
        let _ = writeln!(o, "{}", p.display());
    }
    let cube = fixtures::cube(4.0, 2)?;
    for (name, f) in [
        ("smooth", fixtures::smooth_field as fn(_) -> _),
        ("bump", fixtures::bump_field),
        ("cubic", fixtures::cubic_field),
    ] {
        let set = fixtures::field_samples(&cube, 32, f)?;
        let p = dir.join(format!("{name}.samples"));
        write(&p, &io::write_samples(&set, None))?;
        let _ = writeln!(o, "{}", p.display());
    }
    for (name, l) in fixtures::lattices()? {
        let p = dir.join(format!("{name}.lattice"));
        write(&p, &io::write_lattices(&[l]))?;
        let _ = writeln!(o, "{}", p.display());
    }
    let plans = [
        ("two_cube.plan", vec![PlanEntry { kind: MergeKind::TwoCube, cuboids: vec![0, 1] }]),
        ("type1.plan", vec![PlanEntry { kind: MergeKind::Type1, cuboids: vec![0, 1, 2] }]),
    ];
    for (name, plan) in plans {
        let p = dir.join(name);
        write(&p, &io::write_plan(&plan))?;
        let _ = writeln!(o, "{}", p.display());
    }
    Ok(o)
}
