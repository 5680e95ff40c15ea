//! Command-line surface: family selection or config loading, runs over
//! k ranges, sweep and hypothesis-test commands, CSV and JSON output.

use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::chausdorff::estimate_centered;
use crate::cloud::{self, build_cloud, DEFAULT_POINT_BUDGET};
use crate::config::load_config;
use crate::error::{Error, Result};
use crate::estimate::{detect_stabilization, MeasureEstimate, MeasureKind, Witness};
use crate::formulas::{closed_form, test_hypothesis, FormulaName, Verdict};
use crate::ifs::{cantor, derive_constants, planar_cantor, sierpinski, IfSystem};
use crate::oracle::{brute_centered, brute_packing};
use crate::packing::estimate_packing;

pub const EXIT_OK: u8 = 0;
pub const EXIT_ERROR: u8 = 1;
pub const EXIT_INFEASIBLE: u8 = 2;
pub const EXIT_REJECTED: u8 = 3;

#[derive(Parser)]
#[command(name = "selfsim", version, about = "Certified packing and centered Hausdorff measure estimates for totally disconnected self-similar sets")]
pub struct Cli {
    /// Worker threads; defaults to available parallelism.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Emit structured JSON instead of CSV/text.
    #[arg(long, global = true)]
    pub json: bool,
    /// Print floats with 17 significant digits.
    #[arg(long, global = true)]
    pub full_precision: bool,
    /// Point budget for cloud construction.
    #[arg(long, global = true, default_value_t = DEFAULT_POINT_BUDGET)]
    pub budget: u64,
    #[command(subcommand)]
    pub system: SystemArg,
}

#[derive(Subcommand)]
pub enum SystemArg {
    /// Linear Cantor set: {rx, rx + 1 - r}.
    Cantor {
        #[arg(long)]
        r: f64,
        #[command(subcommand)]
        cmd: Cmd,
    },
    /// Sierpinski gasket on the unit triangle.
    Sierpinski {
        #[arg(long)]
        r: f64,
        #[command(subcommand)]
        cmd: Cmd,
    },
    /// Planar Cantor set on the unit square corners.
    Planar {
        #[arg(long)]
        r: f64,
        #[command(subcommand)]
        cmd: Cmd,
    },
    /// Custom system from a TOML description file.
    Config {
        path: PathBuf,
        #[command(subcommand)]
        cmd: Cmd,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Packing,
    Centered,
}

impl KindArg {
    fn kind(self) -> MeasureKind {
        match self {
            KindArg::Packing => MeasureKind::Packing,
            KindArg::Centered => MeasureKind::CenteredHausdorff,
        }
    }
}

#[derive(Subcommand)]
pub enum Cmd {
    /// Print the similarity dimension and derived constants.
    Dimension,
    /// Estimate a measure over a range of levels; CSV rows per k.
    Measure {
        kind: KindArg,
        /// Level or inclusive range, e.g. 8 or 5..10.
        #[arg(long)]
        k: String,
        /// Use the brute-force reference instead of the fast path.
        #[arg(long)]
        oracle: bool,
    },
    /// Estimate across a grid of ratios at fixed k; plot-data CSV.
    Sweep {
        kind: KindArg,
        #[arg(long)]
        k: u32,
        /// Grid start; defaults to the family ratio.
        #[arg(long)]
        from: Option<f64>,
        /// Grid end; defaults to the family ratio.
        #[arg(long)]
        to: Option<f64>,
        #[arg(long, default_value_t = 1)]
        points: usize,
    },
    /// Test a hypothesis value against the confidence interval at k.
    Test {
        kind: KindArg,
        /// Closed-form name g1..g5; alternative to --alpha.
        formula: Option<String>,
        #[arg(long)]
        k: u32,
        /// Explicit hypothesis value.
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Dump the point cloud at level k as CSV.
    Cloud {
        #[arg(long)]
        k: u32,
    },
}

struct Printer {
    full: bool,
}

impl Printer {
    fn num(&self, v: f64) -> String {
        if self.full {
            format!("{v:.16e}")
        } else {
            format!("{v:.12}")
        }
    }

    fn eps(&self, v: f64) -> String {
        if self.full {
            format!("{v:.16e}")
        } else {
            format!("{v:.5e}")
        }
    }

    fn witness(&self, w: &Witness) -> String {
        w.coords
            .iter()
            .map(|&v| self.num(v))
            .collect::<Vec<_>>()
            .join(";")
    }
}

fn parse_k_range(text: &str) -> Result<(u32, u32)> {
    let parse_one = |s: &str| {
        u32::from_str(s).map_err(|_| Error::Config(format!("bad level `{s}` in --k {text}")))
    };
    let (lo, hi) = match text.split_once("..") {
        Some((a, b)) => (parse_one(a)?, parse_one(b)?),
        None => {
            let k = parse_one(text)?;
            (k, k)
        }
    };
    if lo == 0 || hi < lo {
        return Err(Error::Config(format!("bad level range `{text}`")));
    }
    Ok((lo, hi))
}

fn build_target(system: &SystemArg) -> Result<IfSystem> {
    match system {
        SystemArg::Cantor { r, .. } => cantor(*r),
        SystemArg::Sierpinski { r, .. } => sierpinski(*r),
        SystemArg::Planar { r, .. } => planar_cantor(*r),
        SystemArg::Config { path, .. } => load_config(path),
    }
}

fn default_formula(system: &SystemArg, kind: MeasureKind) -> Option<FormulaName> {
    match (system, kind) {
        (SystemArg::Cantor { .. }, MeasureKind::Packing) => Some(FormulaName::G1),
        (SystemArg::Sierpinski { .. }, MeasureKind::Packing) => Some(FormulaName::G1),
        (SystemArg::Planar { .. }, MeasureKind::Packing) => Some(FormulaName::G2),
        (SystemArg::Cantor { .. }, MeasureKind::CenteredHausdorff) => Some(FormulaName::G3),
        (SystemArg::Sierpinski { .. }, MeasureKind::CenteredHausdorff) => Some(FormulaName::G4),
        (SystemArg::Planar { .. }, MeasureKind::CenteredHausdorff) => Some(FormulaName::G5),
        (SystemArg::Config { .. }, _) => None,
    }
}

fn rebuild_with_ratio(system: &SystemArg, r: f64) -> Result<IfSystem> {
    match system {
        SystemArg::Cantor { .. } => cantor(r),
        SystemArg::Sierpinski { .. } => sierpinski(r),
        SystemArg::Planar { .. } => planar_cantor(r),
        SystemArg::Config { .. } => Err(Error::Config(
            "sweep needs a built-in family with a ratio parameter".to_string(),
        )),
    }
}

fn estimate(
    system: &IfSystem,
    kind: MeasureKind,
    k: u32,
    budget: u64,
    oracle: bool,
) -> Result<MeasureEstimate> {
    match (kind, oracle) {
        (MeasureKind::Packing, false) => estimate_packing(system, k, budget),
        (MeasureKind::Packing, true) => brute_packing(system, k),
        (MeasureKind::CenteredHausdorff, false) => estimate_centered(system, k, budget),
        (MeasureKind::CenteredHausdorff, true) => brute_centered(system, k),
    }
}

const MEASURE_HEADER: &str = "k,estimate,epsilon,interval_lo,interval_hi,witness_center,witness_partner,witness_radius,q_or_qk,Q,elapsed_ms";

fn io_err(e: std::io::Error) -> Error {
    Error::Config(format!("output error: {e}"))
}

#[derive(Serialize)]
struct MeasureReport<'a> {
    kind: &'static str,
    rows: &'a [MeasureEstimate],
    skipped: &'a [(u32, String)],
    k_stb: Option<u32>,
}

fn cmd_measure<W: Write>(
    cli: &Cli,
    out: &mut W,
    kind: MeasureKind,
    k: &str,
    oracle: bool,
) -> Result<u8> {
    let system = build_target(&cli.system)?;
    let (k_lo, k_hi) = parse_k_range(k)?;
    let mut rows: Vec<MeasureEstimate> = Vec::new();
    let mut skipped: Vec<(u32, String)> = Vec::new();
    for k in k_lo..=k_hi {
        match estimate(&system, kind, k, cli.budget, oracle) {
            Ok(est) => rows.push(est),
            Err(Error::WindowInfeasible { k }) => {
                skipped.push((k, "admissibility window is empty".to_string()));
            }
            Err(e) => return Err(e),
        }
    }
    let values: Vec<(u32, f64)> = rows.iter().map(|e| (e.level, e.value)).collect();
    let k_stb = detect_stabilization(&values);
    if cli.json {
        let report = MeasureReport {
            kind: kind.label(),
            rows: &rows,
            skipped: &skipped,
            k_stb,
        };
        serde_json::to_writer_pretty(&mut *out, &report)
            .map_err(|e| Error::Config(format!("json: {e}")))?;
        writeln!(out).map_err(io_err)?;
        return Ok(EXIT_OK);
    }
    let p = Printer {
        full: cli.full_precision,
    };
    writeln!(out, "{MEASURE_HEADER}").map_err(io_err)?;
    for (k, reason) in &skipped {
        writeln!(out, "# k={k} infeasible: {reason}").map_err(io_err)?;
    }
    for est in &rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{:.1}",
            est.level,
            p.num(est.value),
            p.eps(est.epsilon),
            p.num(est.interval.0),
            p.num(est.interval.1),
            p.witness(&est.witness_center),
            p.witness(&est.witness_partner),
            p.num(est.witness_radius),
            est.bound.q,
            p.num(est.bound.big_q),
            est.elapsed_ms,
        )
        .map_err(io_err)?;
    }
    match k_stb {
        Some(k) => writeln!(out, "# k_stb = {k}").map_err(io_err)?,
        None => writeln!(out, "# not stabilized").map_err(io_err)?,
    }
    Ok(EXIT_OK)
}

fn cmd_dimension<W: Write>(cli: &Cli, out: &mut W) -> Result<u8> {
    let system = build_target(&cli.system)?;
    let consts = derive_constants(&system)?;
    if cli.json {
        serde_json::to_writer_pretty(&mut *out, &consts)
            .map_err(|e| Error::Config(format!("json: {e}")))?;
        writeln!(out).map_err(io_err)?;
        return Ok(EXIT_OK);
    }
    let p = Printer {
        full: cli.full_precision,
    };
    writeln!(
        out,
        "s={} c=[{},{}] R=[{},{}] r_min={} r_max={}",
        p.num(consts.s),
        p.num(consts.c_lo),
        p.num(consts.c_hi),
        p.num(consts.diam_lo),
        p.num(consts.diam_hi),
        p.num(consts.r_min),
        p.num(consts.r_max),
    )
    .map_err(io_err)?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct SweepRow {
    r: f64,
    lower: Option<f64>,
    estimate: Option<f64>,
    upper: Option<f64>,
    closed_form: Option<f64>,
    note: Option<String>,
}

fn cmd_sweep<W: Write>(
    cli: &Cli,
    out: &mut W,
    kind: MeasureKind,
    k: u32,
    from: Option<f64>,
    to: Option<f64>,
    points: usize,
) -> Result<u8> {
    let base_r = match &cli.system {
        SystemArg::Cantor { r, .. }
        | SystemArg::Sierpinski { r, .. }
        | SystemArg::Planar { r, .. } => *r,
        SystemArg::Config { .. } => {
            return Err(Error::Config(
                "sweep needs a built-in family with a ratio parameter".to_string(),
            ))
        }
    };
    let from = from.unwrap_or(base_r);
    let to = to.unwrap_or(base_r);
    if points == 0 {
        return Err(Error::Config("sweep needs at least one grid point".to_string()));
    }
    let formula = default_formula(&cli.system, kind);
    let mut rows = Vec::with_capacity(points);
    for i in 0..points {
        let r = if points == 1 {
            from
        } else {
            from + (to - from) * i as f64 / (points - 1) as f64
        };
        let row = match rebuild_with_ratio(&cli.system, r)
            .and_then(|sys| estimate(&sys, kind, k, cli.budget, false).map(|e| (sys, e)))
        {
            Ok((sys, est)) => {
                let cf = formula.and_then(|name| closed_form(name, &sys).ok().map(|f| f.value));
                SweepRow {
                    r,
                    lower: Some(est.interval.0),
                    estimate: Some(est.value),
                    upper: Some(est.interval.1),
                    closed_form: cf,
                    note: None,
                }
            }
            Err(e) => SweepRow {
                r,
                lower: None,
                estimate: None,
                upper: None,
                closed_form: None,
                note: Some(e.to_string()),
            },
        };
        rows.push(row);
    }
    if cli.json {
        serde_json::to_writer_pretty(&mut *out, &rows)
            .map_err(|e| Error::Config(format!("json: {e}")))?;
        writeln!(out).map_err(io_err)?;
        return Ok(EXIT_OK);
    }
    let p = Printer {
        full: cli.full_precision,
    };
    let cell = |v: Option<f64>| v.map(|x| p.num(x)).unwrap_or_default();
    writeln!(out, "r,lower,estimate,upper,closed_form").map_err(io_err)?;
    for row in &rows {
        if let Some(note) = &row.note {
            writeln!(out, "# r={} skipped: {note}", p.num(row.r)).map_err(io_err)?;
        } else {
            writeln!(
                out,
                "{},{},{},{},{}",
                p.num(row.r),
                cell(row.lower),
                cell(row.estimate),
                cell(row.upper),
                cell(row.closed_form),
            )
            .map_err(io_err)?;
        }
    }
    Ok(EXIT_OK)
}

fn cmd_test<W: Write>(
    cli: &Cli,
    out: &mut W,
    kind: MeasureKind,
    formula: Option<&str>,
    k: u32,
    alpha: Option<f64>,
) -> Result<u8> {
    let system = build_target(&cli.system)?;
    let (alpha, label) = match (alpha, formula) {
        (Some(a), None) => (a, format!("alpha={a}")),
        (None, Some(name)) => {
            let f = closed_form(name.parse()?, &system)?;
            (f.value, format!("{}={:.12}", name, f.value))
        }
        _ => {
            return Err(Error::Config(
                "give exactly one hypothesis: a formula name or --alpha".to_string(),
            ))
        }
    };
    let est = estimate(&system, kind, k, cli.budget, false)?;
    let verdict = test_hypothesis(alpha, &est);
    if cli.json {
        serde_json::to_writer_pretty(&mut *out, &verdict)
            .map_err(|e| Error::Config(format!("json: {e}")))?;
        writeln!(out).map_err(io_err)?;
    } else {
        let p = Printer {
            full: cli.full_precision,
        };
        let word = match verdict.verdict {
            Verdict::Rejected => "rejected",
            Verdict::Consistent => "consistent",
        };
        let guarantee = verdict
            .guaranteed_bound
            .map(|b| format!(" guaranteed |measure-alpha| <= {}", p.eps(b)))
            .unwrap_or_default();
        writeln!(
            out,
            "{word}: {label} vs interval [{}, {}] at k={k} (slack {}){guarantee}",
            p.num(verdict.interval.0),
            p.num(verdict.interval.1),
            p.eps(verdict.slack),
        )
        .map_err(io_err)?;
    }
    Ok(match verdict.verdict {
        Verdict::Rejected => EXIT_REJECTED,
        Verdict::Consistent => EXIT_OK,
    })
}

fn cmd_cloud<W: Write>(cli: &Cli, out: &mut W, k: u32) -> Result<u8> {
    let system = build_target(&cli.system)?;
    let consts = derive_constants(&system)?;
    let cloud = build_cloud(&system, consts.s, k, cli.budget)?;
    cloud::write_csv(&cloud, out).map_err(io_err)?;
    Ok(EXIT_OK)
}

/// Dispatch a parsed invocation; returns the process exit code.
pub fn run<W: Write>(cli: &Cli, out: &mut W) -> Result<u8> {
    if let Some(n) = cli.threads {
        // Best effort: the global pool can only be set once per process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let cmd = match &cli.system {
        SystemArg::Cantor { cmd, .. }
        | SystemArg::Sierpinski { cmd, .. }
        | SystemArg::Planar { cmd, .. }
        | SystemArg::Config { cmd, .. } => cmd,
    };
    match cmd {
        Cmd::Dimension => cmd_dimension(cli, out),
        Cmd::Measure { kind, k, oracle } => cmd_measure(cli, out, kind.kind(), k, *oracle),
        Cmd::Sweep {
            kind,
            k,
            from,
            to,
            points,
        } => cmd_sweep(cli, out, kind.kind(), *k, *from, *to, *points),
        Cmd::Test {
            kind,
            formula,
            k,
            alpha,
        } => cmd_test(cli, out, kind.kind(), formula.as_deref(), *k, *alpha),
        Cmd::Cloud { k } => cmd_cloud(cli, out, *k),
    }
}

/// Exit code for a failed run.
pub fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::WindowInfeasible { .. }
        | Error::CapacityExceeded { .. }
        | Error::TooLarge { .. } => EXIT_INFEASIBLE,
        _ => EXIT_ERROR,
    }
}
