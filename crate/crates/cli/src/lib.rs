//! Configuration and table emission for the `nsfem` command-line tool.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use nsfem::assembly::ConvectiveMode;
use nsfem::solver::NewtonConfig;
use nsfem::spaces::ElementPair;
use nsfem::study::{StudyConfig, StudyReport, DEFAULT_BETA};
use nsfem::FlowLaw;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

pub const DEFAULT_DELTA: f64 = 1e-5;
pub const DEFAULT_NU0: f64 = 100.0;
/// Lower end of the admissible exponent range of the skew-symmetric form in 2D.
pub const TEMAM_MIN_P: f64 = 4.0 / 3.0;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Solver(#[from] nsfem::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Solver(_) => 1,
            CliError::Io(_) => 3,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    #[default]
    Csv,
    Md,
}

impl FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(Format::Csv),
            "md" => Ok(Format::Md),
            other => Err(format!("unknown format '{other}' (expected csv or md)")),
        }
    }
}

/// Every setting a flag or a config file line may provide.
#[derive(Clone, Debug, Default, PartialEq, clap::Args)]
pub struct Settings {
    /// Power-law exponent (> 1).
    #[arg(long)]
    pub p: Option<f64>,
    /// Shift of the power law [default: 1e-5].
    #[arg(long)]
    pub delta: Option<f64>,
    /// Viscosity scale [default: 100].
    #[arg(long)]
    pub nu0: Option<f64>,
    /// Element pair: br1, p2p0 or ccr.
    #[arg(long)]
    pub element: Option<ElementPair>,
    /// Convective form: reconstruction, temam or none.
    #[arg(long)]
    pub convective: Option<ConvectiveMode>,
    /// Finest refinement level; levels 0..=LEVELS are solved.
    #[arg(long)]
    pub levels: Option<usize>,
    /// Velocity exponent of the manufactured solution [default: 0.01].
    #[arg(long)]
    pub beta: Option<f64>,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Allow levels up to 7.
    #[arg(long)]
    pub full_tables: bool,
    /// Stream Newton iterations and level summaries to stderr.
    #[arg(long)]
    pub verbose: bool,
    /// Newton absolute residual tolerance.
    #[arg(long)]
    pub abs_tol: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub max_halvings: Option<usize>,
    /// Decrement of the continuation sequence in p.
    #[arg(long)]
    pub continuation_step: Option<f64>,
}

const KEYS: &[&str] = &[
    "p",
    "delta",
    "nu0",
    "element",
    "convective",
    "levels",
    "beta",
    "out",
    "format",
    "full_tables",
    "verbose",
    "abs_tol",
    "max_iters",
    "max_halvings",
    "continuation_step",
];

fn parse_value<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| CliError::Usage(format!("line {line}: invalid value for '{key}': {e}")))
}

fn parse_bool(line: usize, key: &str, value: &str) -> Result<bool, CliError> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(CliError::Usage(format!("line {line}: '{key}' expects true or false"))),
    }
}

impl Settings {
    /// Parses `key = value` lines; `#` starts a comment. Unknown and
    /// repeated keys are rejected.
    pub fn from_config_text(text: &str) -> Result<Settings, CliError> {
        let mut s = Settings::default();
        let mut seen: Vec<&str> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| CliError::Usage(format!("line {line}: expected 'key = value'")))?;
            let key = KEYS
                .iter()
                .find(|k| **k == key)
                .ok_or_else(|| CliError::Usage(format!("line {line}: unknown key '{key}'")))?;
            if seen.contains(key) {
                return Err(CliError::Usage(format!("line {line}: '{key}' given twice")));
            }
            seen.push(key);
            match *key {
                "p" => s.p = Some(parse_value(line, key, value)?),
                "delta" => s.delta = Some(parse_value(line, key, value)?),
                "nu0" => s.nu0 = Some(parse_value(line, key, value)?),
                "element" => s.element = Some(parse_value(line, key, value)?),
                "convective" => s.convective = Some(parse_value(line, key, value)?),
                "levels" => s.levels = Some(parse_value(line, key, value)?),
                "beta" => s.beta = Some(parse_value(line, key, value)?),
                "out" => s.out = Some(PathBuf::from(value)),
                "format" => s.format = Some(parse_value(line, key, value)?),
                "full_tables" => s.full_tables = parse_bool(line, key, value)?,
                "verbose" => s.verbose = parse_bool(line, key, value)?,
                "abs_tol" => s.abs_tol = Some(parse_value(line, key, value)?),
                "max_iters" => s.max_iters = Some(parse_value(line, key, value)?),
                "max_halvings" => s.max_halvings = Some(parse_value(line, key, value)?),
                "continuation_step" => s.continuation_step = Some(parse_value(line, key, value)?),
                _ => unreachable!("key list and match arms agree"),
            }
        }
        Ok(s)
    }

    /// `self` (flags) takes precedence over `file`.
    pub fn over(self, file: Settings) -> Settings {
        Settings {
            p: self.p.or(file.p),
            delta: self.delta.or(file.delta),
            nu0: self.nu0.or(file.nu0),
            element: self.element.or(file.element),
            convective: self.convective.or(file.convective),
            levels: self.levels.or(file.levels),
            beta: self.beta.or(file.beta),
            out: self.out.or(file.out),
            format: self.format.or(file.format),
            full_tables: self.full_tables || file.full_tables,
            verbose: self.verbose || file.verbose,
            abs_tol: self.abs_tol.or(file.abs_tol),
            max_iters: self.max_iters.or(file.max_iters),
            max_halvings: self.max_halvings.or(file.max_halvings),
            continuation_step: self.continuation_step.or(file.continuation_step),
        }
    }
}

/// A validated invocation.
#[derive(Clone, Debug, PartialEq)]
pub struct RunPlan {
    pub config: StudyConfig,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub verbose: bool,
    pub warnings: Vec<String>,
}

fn required<T>(v: Option<T>, name: &str) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::Usage(format!("missing required setting '{name}'")))
}

impl RunPlan {
    pub fn from_settings(s: Settings) -> Result<RunPlan, CliError> {
        let usage = |e: nsfem::Error| CliError::Usage(e.to_string());
        let p = required(s.p, "p")?;
        if !(p > 1.0) || !p.is_finite() {
            return Err(CliError::Usage(format!("p must be a finite number greater than 1, got {p}")));
        }
        let law = FlowLaw::new(p, s.delta.unwrap_or(DEFAULT_DELTA), s.nu0.unwrap_or(DEFAULT_NU0)).map_err(usage)?;
        let pair = required(s.element, "element")?;
        let mode = required(s.convective, "convective")?;
        let levels = required(s.levels, "levels")?;
        let mut config = StudyConfig::new(law, pair, mode, levels);
        config.beta = s.beta.unwrap_or(DEFAULT_BETA);
        if !(config.beta > 0.0) || !config.beta.is_finite() {
            return Err(CliError::Usage(format!("beta must be positive, got {}", config.beta)));
        }
        config.full_tables = s.full_tables;
        let defaults = NewtonConfig::default();
        config.newton = NewtonConfig {
            abs_tol: s.abs_tol.unwrap_or(defaults.abs_tol),
            max_iters: s.max_iters.unwrap_or(defaults.max_iters),
            max_halvings: s.max_halvings.unwrap_or(defaults.max_halvings),
            continuation_step: s.continuation_step.unwrap_or(defaults.continuation_step),
            verbose: s.verbose,
        };
        config.validate().map_err(usage)?;
        let mut warnings = Vec::new();
        if mode == ConvectiveMode::Temam && p < TEMAM_MIN_P {
            warnings.push(format!(
                "p = {p} lies below 4/3, outside the admissible range of the skew-symmetric convective form"
            ));
        }
        Ok(RunPlan { config, out: s.out, format: s.format.unwrap_or_default(), verbose: s.verbose, warnings })
    }
}

fn opt(v: Option<f64>, f: impl Fn(f64) -> String) -> String {
    v.map(f).unwrap_or_default()
}

pub const CSV_HEADER: &str = "level,h,ndof,newton_iters,eF,eq_lp,eq_l2,eocF,eoc_lp,eoc_l2";

/// One row per level; the EOC columns of row `i > 0` compare levels `i - 1`
/// and `i`. Reals carry 17 significant digits.
pub fn emit_csv(report: &StudyReport) -> String {
    let mut s = String::new();
    writeln!(s, "{CSV_HEADER}").unwrap();
    let e = |v: f64| format!("{v:.16e}");
    for (i, l) in report.levels.iter().enumerate() {
        let eoc = |col: &[Option<f64>]| if i == 0 { String::new() } else { opt(col[i - 1], e) };
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            l.level,
            e(l.h),
            l.ndof,
            l.newton_iters,
            e(l.e_f),
            e(l.e_q_lp),
            e(l.e_q_l2),
            eoc(&report.eoc_f),
            eoc(&report.eoc_lp),
            eoc(&report.eoc_l2)
        )
        .unwrap();
    }
    s
}

/// Markdown table with the same columns plus a final theory row.
pub fn emit_markdown(report: &StudyReport) -> String {
    let mut s = String::new();
    let cols: Vec<&str> = CSV_HEADER.split(',').collect();
    writeln!(s, "| {} |", cols.join(" | ")).unwrap();
    writeln!(s, "|{}", "---|".repeat(cols.len())).unwrap();
    let e = |v: f64| format!("{v:.3e}");
    let r = |v: f64| format!("{v:.3}");
    for (i, l) in report.levels.iter().enumerate() {
        let eoc = |col: &[Option<f64>]| if i == 0 { String::new() } else { opt(col[i - 1], r) };
        writeln!(
            s,
            "| {} | {} | {} | {} | {} | {} | {} | {} | {} | {} |",
            l.level,
            e(l.h),
            l.ndof,
            l.newton_iters,
            e(l.e_f),
            e(l.e_q_lp),
            e(l.e_q_l2),
            eoc(&report.eoc_f),
            eoc(&report.eoc_lp),
            eoc(&report.eoc_l2)
        )
        .unwrap();
    }
    let t = &report.theory;
    writeln!(s, "| theory | | | | | | | {} | {} | {} |", r(t.velocity), opt(t.pressure_lp, r), r(t.pressure_l2))
        .unwrap();
    s
}

pub fn emit(report: &StudyReport, format: Format) -> String {
    match format {
        Format::Csv => emit_csv(report),
        Format::Md => emit_markdown(report),
    }
}

/// Writes `contents` next to `path` and renames it into place, so a failed
/// run never leaves a partial file behind.
pub fn write_atomically(path: &Path, contents: &str) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(contents.as_bytes()).map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}
