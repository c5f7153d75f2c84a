//! Command-line driver: verification configs, report rendering and dumps.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Deserialize;

use crate::anomalous::AnomalousGreens;
use crate::contour::{
    contour_greens, convergence_study, kadanoff_baym_equilibrium, propagate, Contour, ContourGrid,
    ContourHamiltonian,
};
use crate::equilibrium::{
    default_matsubara_indices, line_samples, matsubara_points, sparsity_report,
    FiniteTemperatureGreens, GreensFunction, SectorData, ZeroTemperatureGreens,
};
use crate::error::{Error, Result};
use crate::fock::{FullFockSpace, Statistics};
use crate::gibbs::{
    classical_self_energy, gibbs_moments, random_quartic, random_spin, GibbsInteraction, GibbsModel,
    GibbsModelFile, GibbsPath, QuadratureParams,
};
use crate::linalg::{c64, max_abs_real, CMatrix, HermitianEigen};
use crate::model::{
    bose_impurity, random_anomalous, random_impurity, siam, AnomalousModel, BoseImpurityParams,
    ImpurityModel, LoadedModel, ModelFile,
};
use crate::report::{complex_label, sci, sci_digits, SparsityReport, DEFAULT_TOLERANCE, MIN_IMAG};

#[derive(Parser, Debug)]
#[command(name = "selab", version, about = "Self-energy sparsity checks for impurity models")]
pub struct Cli {
    /// Verification config (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override the tolerance of the config.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Also write the report records as CSV.
    #[arg(long, global = true)]
    pub csv: Option<PathBuf>,
    /// Override the seed of random built-in models.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for sample and quadrature evaluation.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run the verification suite of the config and write a report.
    Verify,
    /// Print sector eigenvalues of the config's model.
    Spectrum,
    /// Print G at the config's sample points or at `--z re,im`.
    Greens {
        #[arg(long = "z", value_parser = parse_complex)]
        z: Vec<Complex64>,
    },
    /// Re-render a saved report and recompute its verdict.
    Report { path: PathBuf },
}

fn parse_complex(s: &str) -> std::result::Result<Complex64, String> {
    let (re, im) = s.split_once(',').ok_or("expected re,im")?;
    let parse = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("{x:?}: {e}"));
    Ok(c64(parse(re)?, parse(im)?))
}

// ---------------------------------------------------------------------------
// Config

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Setting {
    ZeroTemp,
    FiniteTemp,
    Anomalous,
    Contour,
    Gibbs,
}

impl Setting {
    fn name(self) -> &'static str {
        match self {
            Setting::ZeroTemp => "zero-temp",
            Setting::FiniteTemp => "finite-temp",
            Setting::Anomalous => "anomalous",
            Setting::Contour => "contour",
            Setting::Gibbs => "gibbs",
        }
    }
}

/// A model file path (relative to the config), a built-in, or an inline
/// model in file format.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum ModelRef {
    Path(PathBuf),
    Builtin(BuiltinSpec),
    Inline(serde_json::Value),
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuiltinSpec {
    /// `siam`, `bose-impurity`, `random-impurity`, `random-anomalous`,
    /// `random-quartic` or `random-spin`.
    pub builtin: String,
    pub u: Option<f64>,
    pub eps_imp: Option<f64>,
    pub eps_bath: Option<f64>,
    pub v: Option<f64>,
    pub hopping: Option<f64>,
    pub d: Option<usize>,
    pub p: Option<usize>,
    pub seed: Option<u64>,
    pub statistics: Option<Statistics>,
    pub positive_definite: Option<bool>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum Sampling {
    List { points: Vec<[f64; 2]> },
    Grid { re_min: f64, re_max: f64, n_re: usize, im: Vec<f64> },
    Matsubara { count: Option<usize>, indices: Option<Vec<i64>> },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ContourSpec {
    KadanoffBaym { t0: f64, t1: f64, beta: f64 },
    /// Piecewise-linear path through `points` with a constant Hamiltonian.
    Segments { points: Vec<[f64; 2]> },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveSpec {
    /// Row-major `[re, im]` pairs; `h(t) = h + cos(omega t) h1`.
    pub h1: Vec<[f64; 2]>,
    pub omega: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum NodesSpec {
    Uniform(usize),
    PerSegment(Vec<usize>),
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSpec {
    /// `factorized`, `direct`, `spin` or `both`.
    pub path: Option<String>,
    pub tol: Option<f64>,
    pub min_order: Option<usize>,
    pub max_order: Option<usize>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerificationConfig {
    pub setting: Setting,
    pub model: ModelRef,
    /// Particle number of the zero-temperature reference state.
    pub particles: Option<usize>,
    pub beta: Option<f64>,
    pub mu: Option<f64>,
    pub n_max: Option<usize>,
    pub sampling: Option<Sampling>,
    pub min_imag: Option<f64>,
    pub contour: Option<ContourSpec>,
    pub drive: Option<DriveSpec>,
    /// Intervals per segment of the coarsest contour grid.
    pub nodes_per_segment: Option<NodesSpec>,
    /// Number of grids in the contour convergence study, each twice as fine.
    pub refinements: Option<usize>,
    /// Smallest accepted fitted order of the env residuals.
    pub min_order: Option<f64>,
    /// Smallest accepted fitted order of the jump error.
    pub min_jump_order: Option<f64>,
    pub quadrature: Option<QuadratureSpec>,
    pub tolerance: Option<f64>,
    pub output: Option<PathBuf>,
}

impl VerificationConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// The model of a config after resolution.
#[derive(Clone, Debug)]
pub enum ResolvedModel {
    Impurity(ImpurityModel),
    Anomalous(AnomalousModel),
    Gibbs(GibbsModel),
}

/// Config plus everything resolved from disk and the command line.
pub struct Run {
    pub config: VerificationConfig,
    pub model: ResolvedModel,
    pub tolerance: f64,
    pub output: Option<PathBuf>,
}

fn config_error(msg: impl Into<String>) -> Error {
    Error::Argument(msg.into())
}

fn resolve_builtin(spec: &BuiltinSpec, seed: Option<u64>) -> Result<ResolvedModel> {
    let seed = seed.or(spec.seed).unwrap_or(0);
    let need = |x: Option<usize>, name: &str| x.ok_or_else(|| config_error(format!("builtin {} needs {name}", spec.builtin)));
    Ok(match spec.builtin.as_str() {
        "siam" => {
            let u = spec.u.unwrap_or(2.0);
            ResolvedModel::Impurity(siam(
                u,
                spec.eps_imp.unwrap_or(-u / 2.0),
                spec.eps_bath.unwrap_or(0.0),
                spec.v.unwrap_or(0.5),
            )?)
        }
        "bose-impurity" => {
            let mut params = BoseImpurityParams::new(spec.d.unwrap_or(2), spec.u.unwrap_or(1.0));
            if let Some(x) = spec.eps_imp {
                params.eps_imp = x;
            }
            if let Some(x) = spec.eps_bath {
                params.eps_bath = x;
            }
            if let Some(x) = spec.hopping {
                params.hopping = x;
            }
            ResolvedModel::Impurity(bose_impurity(params)?)
        }
        "random-impurity" => ResolvedModel::Impurity(random_impurity(
            need(spec.d, "d")?,
            need(spec.p, "p")?,
            seed,
            spec.statistics.unwrap_or(Statistics::Fermion),
        )?),
        "random-anomalous" => {
            ResolvedModel::Anomalous(random_anomalous(need(spec.d, "d")?, need(spec.p, "p")?, seed)?)
        }
        "random-quartic" => ResolvedModel::Gibbs(random_quartic(
            need(spec.d, "d")?,
            need(spec.p, "p")?,
            seed,
            spec.positive_definite.unwrap_or(true),
        )?),
        "random-spin" => ResolvedModel::Gibbs(random_spin(need(spec.d, "d")?, need(spec.p, "p")?, seed)?),
        other => return Err(config_error(format!("unknown builtin model {other:?}"))),
    })
}

fn resolve_value(value: serde_json::Value, setting: Setting) -> Result<ResolvedModel> {
    if setting == Setting::Gibbs {
        let file: GibbsModelFile = serde_json::from_value(value)?;
        return Ok(ResolvedModel::Gibbs(file.into_model()?));
    }
    let file: ModelFile = serde_json::from_value(value)?;
    Ok(match file.into_model()? {
        LoadedModel::Impurity(m) => ResolvedModel::Impurity(m),
        LoadedModel::Anomalous(m) => ResolvedModel::Anomalous(m),
    })
}

/// Loads a config and its model. All failures here are usage errors.
pub fn load_run(path: &Path, tol: Option<f64>, seed: Option<u64>) -> Result<Run> {
    let text = std::fs::read_to_string(path)?;
    let config = VerificationConfig::from_json(&text)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let model = match &config.model {
        ModelRef::Path(p) => {
            let text = std::fs::read_to_string(base.join(p))?;
            resolve_value(serde_json::from_str(&text)?, config.setting)?
        }
        ModelRef::Builtin(spec) => resolve_builtin(spec, seed)?,
        ModelRef::Inline(v) => resolve_value(v.clone(), config.setting)?,
    };
    let expected = match (&model, config.setting) {
        (ResolvedModel::Gibbs(_), Setting::Gibbs) => true,
        (ResolvedModel::Anomalous(_), Setting::Anomalous) => true,
        (ResolvedModel::Impurity(m), Setting::Anomalous) => m.statistics() == Statistics::Fermion,
        (ResolvedModel::Impurity(_), Setting::ZeroTemp | Setting::FiniteTemp | Setting::Contour) => true,
        _ => false,
    };
    if !expected {
        return Err(config_error(format!(
            "model kind does not match setting {}",
            config.setting.name()
        )));
    }
    let default_tol = match config.setting {
        Setting::Contour => 1e-10,
        Setting::Gibbs => match &model {
            ResolvedModel::Gibbs(g) if matches!(g.interaction(), GibbsInteraction::Spin(_)) => 1e-10,
            _ => 1e-7,
        },
        _ => DEFAULT_TOLERANCE,
    };
    let tolerance = tol.or(config.tolerance).unwrap_or(default_tol);
    if !(tolerance > 0.0) {
        return Err(config_error("tolerance must be positive"));
    }
    let output = config.output.as_ref().map(|o| base.join(o));
    Ok(Run {
        config,
        model,
        tolerance,
        output,
    })
}

// ---------------------------------------------------------------------------
// Reports

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    Info,
}

impl Status {
    fn as_str(self) -> &'static str {
        match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Info => "INFO",
        }
    }

    fn upper(norm: f64, tol: f64) -> Self {
        if norm <= tol {
            Status::Pass
        } else {
            Status::Fail
        }
    }

    fn lower(value: f64, min: f64) -> Self {
        if value >= min {
            Status::Pass
        } else {
            Status::Fail
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Record {
    Norm {
        sample: String,
        block: String,
        norm: f64,
        tol: f64,
        status: Status,
    },
    Error {
        sample: Option<String>,
        class: String,
        message: String,
    },
}

/// Ordered report records with a verdict; any error record fails the run
/// unless it belongs to a single sample.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunReport {
    pub records: Vec<Record>,
}

impl RunReport {
    fn norm(&mut self, sample: impl Into<String>, block: impl Into<String>, norm: f64, tol: f64, status: Status) {
        self.records.push(Record::Norm {
            sample: sample.into(),
            block: block.into(),
            norm,
            tol,
            status,
        });
    }

    fn error(&mut self, e: &Error) {
        self.records.push(Record::Error {
            sample: None,
            class: e.class().into(),
            message: e.to_string(),
        });
    }

    fn sparsity(&mut self, report: &SparsityReport) {
        for s in &report.samples {
            match &s.outcome {
                Ok(b) => {
                    for (name, norm) in b.named() {
                        let status = if name == "frag_frag" {
                            Status::Info
                        } else {
                            Status::upper(norm, report.tolerance)
                        };
                        self.norm(&s.label, name, norm, report.tolerance, status);
                    }
                }
                Err(e) => self.records.push(Record::Error {
                    sample: Some(s.label.clone()),
                    class: e.class.clone(),
                    message: e.message.clone(),
                }),
            }
        }
    }

    /// Pass iff no norm line fails, no run-level error occurred, and at
    /// least one norm was checked.
    pub fn pass(&self) -> bool {
        let mut checked = false;
        for r in &self.records {
            match r {
                Record::Norm { status: Status::Fail, .. } => return false,
                Record::Norm { status: Status::Pass, .. } => checked = true,
                Record::Error { sample: None, .. } => return false,
                _ => {}
            }
        }
        checked
    }

    /// Report body without the header line.
    pub fn render_body(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            match r {
                Record::Norm {
                    sample,
                    block,
                    norm,
                    tol,
                    status,
                } => {
                    let _ = writeln!(
                        out,
                        "sample={sample} block={block} norm={} tol={} {}",
                        sci(*norm),
                        sci(*tol),
                        status.as_str()
                    );
                }
                Record::Error {
                    sample: Some(sample),
                    class,
                    message,
                } => {
                    let _ = writeln!(out, "sample={sample} ERROR class={class} {message}");
                }
                Record::Error {
                    sample: None,
                    class,
                    message,
                } => {
                    let _ = writeln!(out, "ERROR class={class} {message}");
                }
            }
        }
        let _ = writeln!(out, "VERDICT {}", if self.pass() { "PASS" } else { "FAIL" });
        out
    }

    pub fn render_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Io(e.into());
        w.write_record(["sample", "block", "norm", "tol", "status"]).map_err(io)?;
        for r in &self.records {
            let row = match r {
                Record::Norm {
                    sample,
                    block,
                    norm,
                    tol,
                    status,
                } => [sample.clone(), block.clone(), format!("{norm:e}"), format!("{tol:e}"), status.as_str().into()],
                Record::Error { sample, class, .. } => [
                    sample.clone().unwrap_or_default(),
                    "error".into(),
                    String::new(),
                    String::new(),
                    class.clone(),
                ],
            };
            w.write_record(&row).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("utf-8 records"))
    }

    /// Parses the body of a rendered report; the header and verdict lines are
    /// skipped and the verdict is recomputed on render.
    pub fn parse(text: &str) -> Result<Self> {
        let bad = |line: &str| Error::Argument(format!("unrecognized report line {line:?}"));
        let mut report = RunReport::default();
        for line in text.lines() {
            if line.starts_with('#') || line.starts_with("VERDICT ") || line.trim().is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("ERROR class=") {
                let (class, message) = rest.split_once(' ').unwrap_or((rest, ""));
                report.records.push(Record::Error {
                    sample: None,
                    class: class.into(),
                    message: message.into(),
                });
                continue;
            }
            let rest = line.strip_prefix("sample=").ok_or_else(|| bad(line))?;
            let (sample, rest) = rest.split_once(' ').ok_or_else(|| bad(line))?;
            if let Some(rest) = rest.strip_prefix("ERROR class=") {
                let (class, message) = rest.split_once(' ').unwrap_or((rest, ""));
                report.records.push(Record::Error {
                    sample: Some(sample.into()),
                    class: class.into(),
                    message: message.into(),
                });
                continue;
            }
            let fields: Vec<&str> = rest.split(' ').collect();
            let [block, norm, tol, status] = fields.as_slice() else {
                return Err(bad(line));
            };
            let value = |field: &str, key: &str| -> Result<f64> {
                field
                    .strip_prefix(key)
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| bad(line))
            };
            let status = match *status {
                "PASS" => Status::Pass,
                "FAIL" => Status::Fail,
                "INFO" => Status::Info,
                _ => return Err(bad(line)),
            };
            report.norm(
                sample,
                block.strip_prefix("block=").ok_or_else(|| bad(line))?,
                value(norm, "norm=")?,
                value(tol, "tol=")?,
                status,
            );
        }
        Ok(report)
    }
}

fn header(setting: &str) -> String {
    let now = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    format!("# selab {} setting={setting} generated={now}\n", env!("CARGO_PKG_VERSION"))
}

// ---------------------------------------------------------------------------
// Verification

fn samples_for(run: &Run, statistics: Statistics) -> Result<Vec<Complex64>> {
    let c = &run.config;
    match &c.sampling {
        None if c.setting == Setting::FiniteTemp => {
            let beta = c.beta.ok_or_else(|| config_error("finite-temp needs beta"))?;
            matsubara_points(beta, statistics, c.mu.unwrap_or(0.0), &default_matsubara_indices(statistics, 8))
        }
        None => {
            let mut s = line_samples(-3.0, 3.0, 10, 0.5);
            s.extend(line_samples(-3.0, 3.0, 10, -0.5));
            Ok(s)
        }
        Some(Sampling::List { points }) => Ok(points.iter().map(|p| c64(p[0], p[1])).collect()),
        Some(Sampling::Grid { re_min, re_max, n_re, im }) => {
            if *n_re == 0 || im.is_empty() {
                return Err(config_error("grid sampling needs n_re >= 1 and at least one im value"));
            }
            Ok(im.iter().flat_map(|&y| line_samples(*re_min, *re_max, *n_re, y)).collect())
        }
        Some(Sampling::Matsubara { count, indices }) => {
            let beta = c.beta.ok_or_else(|| config_error("matsubara sampling needs beta"))?;
            let indices = match indices {
                Some(i) => i.clone(),
                None => default_matsubara_indices(statistics, count.unwrap_or(8)),
            };
            matsubara_points(beta, statistics, c.mu.unwrap_or(0.0), &indices)
        }
    }
}

fn impurity(run: &Run) -> &ImpurityModel {
    match &run.model {
        ResolvedModel::Impurity(m) => m,
        _ => unreachable!("checked by load_run"),
    }
}

fn verify_zero_temp(run: &Run, report: &mut RunReport) -> Result<()> {
    let model = impurity(run);
    let n = run
        .config
        .particles
        .ok_or_else(|| config_error("zero-temp needs particles"))?;
    let samples = samples_for(run, model.statistics())?;
    let greens = ZeroTemperatureGreens::new(model, n)?;
    let r = sparsity_report(&greens, model.p(), &samples, run.tolerance, run.config.min_imag.unwrap_or(MIN_IMAG))?;
    report.sparsity(&r);
    Ok(())
}

fn verify_finite_temp(run: &Run, report: &mut RunReport) -> Result<()> {
    let model = impurity(run);
    let c = &run.config;
    let beta = c.beta.ok_or_else(|| config_error("finite-temp needs beta"))?;
    let samples = samples_for(run, model.statistics())?;
    let greens = FiniteTemperatureGreens::new(model, beta, c.mu.unwrap_or(0.0), c.n_max)?;
    let r = sparsity_report(&greens, model.p(), &samples, run.tolerance, c.min_imag.unwrap_or(MIN_IMAG))?;
    report.sparsity(&r);
    Ok(())
}

fn anomalous_model(run: &Run) -> Result<AnomalousModel> {
    match &run.model {
        ResolvedModel::Anomalous(m) => Ok(m.clone()),
        ResolvedModel::Impurity(m) => AnomalousModel::from_impurity(m, CMatrix::zeros(m.d(), m.d())),
        ResolvedModel::Gibbs(_) => unreachable!("checked by load_run"),
    }
}

fn verify_anomalous(run: &Run, report: &mut RunReport) -> Result<()> {
    let model = anomalous_model(run)?;
    let samples = samples_for(run, Statistics::Fermion)?;
    let greens = AnomalousGreens::new(&model)?;
    let r = greens.sparsity_report(model.p(), &samples, run.tolerance, run.config.min_imag.unwrap_or(MIN_IMAG))?;
    report.sparsity(&r);
    let mut worst = 0.0f64;
    for &z in &samples {
        if let Ok(v) = greens.redundancy_violation(z) {
            worst = worst.max(v);
        }
    }
    let tol = run.tolerance.max(1e-11);
    report.norm("all", "redundancy", worst, tol, Status::upper(worst, tol));
    Ok(())
}

fn contour_setup(run: &Run) -> Result<(Contour, ContourHamiltonian)> {
    let model = impurity(run);
    let c = &run.config;
    match c.contour.as_ref().ok_or_else(|| config_error("contour setting needs a contour"))? {
        ContourSpec::KadanoffBaym { t0, t1, beta } => {
            let drive = match &c.drive {
                None => None,
                Some(d) => {
                    let n = model.d();
                    if d.h1.len() != n * n {
                        return Err(config_error("drive h1 has the wrong number of entries"));
                    }
                    let h1 = CMatrix::from_row_iterator(n, n, d.h1.iter().map(|p| c64(p[0], p[1])));
                    Some((h1, d.omega))
                }
            };
            kadanoff_baym_equilibrium(*t0, *t1, *beta, model, c.mu.unwrap_or(0.0), drive)
        }
        ContourSpec::Segments { points } => {
            if c.drive.is_some() {
                return Err(config_error("drive is only supported on Kadanoff-Baym contours"));
            }
            let pts: Vec<Complex64> = points.iter().map(|p| c64(p[0], p[1])).collect();
            Ok((Contour::from_points(&pts)?, ContourHamiltonian::constant(model.clone())))
        }
    }
}

fn contour_grids(run: &Run) -> Vec<Vec<usize>> {
    let base = match &run.config.nodes_per_segment {
        None => vec![32],
        Some(NodesSpec::Uniform(k)) => vec![*k],
        Some(NodesSpec::PerSegment(v)) => v.clone(),
    };
    (0..run.config.refinements.unwrap_or(3))
        .map(|level| base.iter().map(|k| k << level).collect())
        .collect()
}

fn grid_label(intervals: &[usize]) -> String {
    let parts: Vec<String> = intervals.iter().map(usize::to_string).collect();
    format!("K={}", parts.join("/"))
}

fn verify_contour(run: &Run, report: &mut RunReport) -> Result<()> {
    let (contour, ch) = contour_setup(run)?;
    let study = convergence_study(&contour, &ch, &contour_grids(run), run.config.n_max, run.tolerance)?;
    for row in &study.rows {
        let label = grid_label(&row.intervals);
        let r = &row.residual;
        for (block, v) in [
            ("residual_left_env", r.left_env),
            ("residual_right_env", r.right_env),
            ("residual_left_frag", r.left_frag),
            ("residual_right_frag", r.right_frag),
            ("jump", r.jump),
        ] {
            report.norm(&label, block, v, r.max_delta_s, Status::Info);
        }
        report.norm(
            &label,
            "group_property",
            row.group_violation,
            run.tolerance,
            Status::upper(row.group_violation, run.tolerance),
        );
    }
    let min_order = run.config.min_order.unwrap_or(1.8);
    let min_jump = run.config.min_jump_order.unwrap_or(0.8);
    for (block, order, min) in [
        ("order_left_env", study.left_order, min_order),
        ("order_right_env", study.right_order, min_order),
        ("order_jump", study.jump_order, min_jump),
    ] {
        let status = if order.is_finite() { Status::lower(order, min) } else { Status::Fail };
        report.norm("fit", block, order, min, status);
    }
    Ok(())
}

fn gibbs_model(run: &Run) -> &GibbsModel {
    match &run.model {
        ResolvedModel::Gibbs(m) => m,
        _ => unreachable!("checked by load_run"),
    }
}

fn quadrature_params(run: &Run) -> QuadratureParams {
    let q = run.config.quadrature.clone().unwrap_or_default();
    let d = QuadratureParams::default();
    QuadratureParams {
        tol: q.tol.unwrap_or(d.tol),
        min_order: q.min_order.unwrap_or(d.min_order),
        max_order: q.max_order.unwrap_or(d.max_order),
    }
}

fn gibbs_paths(run: &Run) -> Result<Vec<GibbsPath>> {
    let model = gibbs_model(run);
    let spin = matches!(model.interaction(), GibbsInteraction::Spin(_));
    let path = run.config.quadrature.as_ref().and_then(|q| q.path.clone());
    Ok(match path.as_deref() {
        None if spin => vec![GibbsPath::Spin],
        None => vec![GibbsPath::Factorized],
        Some("both") => vec![GibbsPath::Factorized, GibbsPath::Direct],
        Some(other) => vec![other.parse()?],
    })
}

fn verify_gibbs(run: &Run, report: &mut RunReport) -> Result<()> {
    let model = gibbs_model(run);
    let params = quadrature_params(run);
    let mut results: Vec<DMatrix<f64>> = Vec::new();
    for path in gibbs_paths(run)? {
        let m = gibbs_moments(model, path, &params)?;
        let (_, r) = classical_self_energy(model.a(), &m.g, model.p(), run.tolerance)?;
        let label = match path {
            GibbsPath::Factorized => "factorized",
            GibbsPath::Direct => "direct",
            GibbsPath::Spin => "spin",
        };
        let mut r = r;
        for s in &mut r.samples {
            s.label = label.into();
        }
        report.sparsity(&r);
        results.push(m.g);
    }
    if let [a, b] = results.as_slice() {
        let diff = max_abs_real(&(a - b));
        let tol = 10.0 * params.tol;
        report.norm("paths", "agreement", diff, tol, Status::upper(diff, tol));
    }
    Ok(())
}

/// Runs the config's suite; module errors become report records.
pub fn verify(run: &Run) -> RunReport {
    let mut report = RunReport::default();
    let outcome = match run.config.setting {
        Setting::ZeroTemp => verify_zero_temp(run, &mut report),
        Setting::FiniteTemp => verify_finite_temp(run, &mut report),
        Setting::Anomalous => verify_anomalous(run, &mut report),
        Setting::Contour => verify_contour(run, &mut report),
        Setting::Gibbs => verify_gibbs(run, &mut report),
    };
    if let Err(e) = outcome {
        report.error(&e);
    }
    report
}

// ---------------------------------------------------------------------------
// Dumps

fn spectrum(run: &Run) -> Result<String> {
    let mut out = String::new();
    let line = |out: &mut String, sector: &str, values: &[f64]| {
        for (k, e) in values.iter().enumerate() {
            let _ = writeln!(out, "sector={sector} index={k} energy={}", sci_digits(*e, 15));
        }
    };
    match &run.model {
        ResolvedModel::Impurity(m) => {
            let top = match m.statistics() {
                Statistics::Fermion => m.d(),
                Statistics::Boson => run.config.n_max.unwrap_or(4),
            };
            for n in 0..=top {
                line(&mut out, &n.to_string(), &SectorData::new(m, n)?.eigen.values);
            }
        }
        ResolvedModel::Anomalous(m) => {
            let space = FullFockSpace::fermionic(m.d())?;
            let h = m.full_matrix(&space)?;
            line(&mut out, "full", &HermitianEigen::new(&h).values);
        }
        ResolvedModel::Gibbs(_) => {
            return Err(Error::Unsupported("spectrum needs a quantum model".into()));
        }
    }
    Ok(out)
}

fn dump_matrix(out: &mut String, label: &str, g: &CMatrix) {
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let v = g[(i, j)];
            let _ = writeln!(out, "sample={label} row={i} col={j} re={} im={}", sci_digits(v.re, 15), sci_digits(v.im, 15));
        }
    }
}

fn greens(run: &Run, z: &[Complex64]) -> Result<String> {
    let mut out = String::new();
    let c = &run.config;
    let points = |stats| -> Result<Vec<Complex64>> {
        if z.is_empty() {
            samples_for(run, stats)
        } else {
            Ok(z.to_vec())
        }
    };
    match c.setting {
        Setting::ZeroTemp | Setting::FiniteTemp => {
            let model = impurity(run);
            let g: Box<dyn GreensFunction> = if c.setting == Setting::ZeroTemp {
                let n = c.particles.ok_or_else(|| config_error("zero-temp needs particles"))?;
                Box::new(ZeroTemperatureGreens::new(model, n)?)
            } else {
                let beta = c.beta.ok_or_else(|| config_error("finite-temp needs beta"))?;
                Box::new(FiniteTemperatureGreens::new(model, beta, c.mu.unwrap_or(0.0), c.n_max)?)
            };
            for zk in points(model.statistics())? {
                dump_matrix(&mut out, &complex_label(zk), &g.evaluate(zk)?);
            }
        }
        Setting::Anomalous => {
            let g = AnomalousGreens::new(&anomalous_model(run)?)?;
            for zk in points(Statistics::Fermion)? {
                dump_matrix(&mut out, &complex_label(zk), &g.evaluate(zk)?);
            }
        }
        Setting::Contour => {
            let (contour, ch) = contour_setup(run)?;
            let grid = ContourGrid::new(contour, &contour_grids(run)[0])?;
            let table = contour_greens(&propagate(&ch, &grid, c.n_max)?);
            for k in 0..table.nodes() {
                for l in 0..table.nodes() {
                    dump_matrix(&mut out, &format!("({k},{l})"), &table.get(k, l));
                }
            }
        }
        Setting::Gibbs => {
            let model = gibbs_model(run);
            let path = gibbs_paths(run)?[0];
            let m = gibbs_moments(model, path, &quadrature_params(run))?;
            dump_matrix(&mut out, "gibbs", &m.g.map(|x| c64(x, 0.0)));
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Entry point

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn usage_failure(e: &Error) -> i32 {
    eprintln!("selab: {e}");
    2
}

fn execute(cli: &Cli) -> i32 {
    let load = || -> Result<Run> {
        let path = cli
            .config
            .as_deref()
            .ok_or_else(|| config_error("--config is required"))?;
        load_run(path, cli.tol, cli.seed)
    };
    match &cli.command {
        Command::Verify => {
            let run = match load() {
                Ok(r) => r,
                Err(e) => return usage_failure(&e),
            };
            let report = verify(&run);
            let text = header(run.config.setting.name()) + &report.render_body();
            print!("{text}");
            if let Some(path) = &run.output {
                if let Err(e) = write_file(path, &text) {
                    eprintln!("selab: {e}");
                    return 1;
                }
            }
            if let Some(path) = &cli.csv {
                if let Err(e) = report.render_csv().and_then(|t| write_file(path, &t)) {
                    eprintln!("selab: {e}");
                    return 1;
                }
            }
            if report.pass() {
                0
            } else {
                1
            }
        }
        Command::Spectrum | Command::Greens { .. } => {
            let run = match load() {
                Ok(r) => r,
                Err(e) => return usage_failure(&e),
            };
            let result = match &cli.command {
                Command::Greens { z } => greens(&run, z),
                _ => spectrum(&run),
            };
            match result {
                Ok(text) => {
                    print!("{text}");
                    0
                }
                Err(e) => {
                    eprintln!("selab: ERROR class={} {e}", e.class());
                    1
                }
            }
        }
        Command::Report { path } => {
            let parsed = std::fs::read_to_string(path)
                .map_err(Error::from)
                .and_then(|t| RunReport::parse(&t));
            let report = match parsed {
                Ok(r) => r,
                Err(e) => return usage_failure(&e),
            };
            print!("{}", report.render_body());
            if let Some(csv) = &cli.csv {
                if let Err(e) = report.render_csv().and_then(|t| write_file(csv, &t)) {
                    eprintln!("selab: {e}");
                    return 1;
                }
            }
            if report.pass() {
                0
            } else {
                1
            }
        }
    }
}

/// Parses arguments and runs; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match cli.threads {
        Some(0) => usage_failure(&config_error("--threads must be positive")),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| execute(&cli)),
            Err(e) => usage_failure(&config_error(e.to_string())),
        },
        None => execute(&cli),
    }
}
