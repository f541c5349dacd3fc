//! Scenario execution: resolve, override, validate, run every check and
//! write the reports.

mod file;
mod report;

pub use file::{line_column, parse_scenario, scenario_to_toml};
pub use report::{csv_table, json_report, metadata_json};

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use crate::builtins::builtin;
use crate::checks::{
    comparison_certify, confirm_findings, continuity_probe, default_test_functions,
    detect_discrepancies, integrated_identity, martingale_residual, ComparisonCertificate,
    ContinuityProbe, DiscrepancyAtomFinding, IntegratedIdentity, MartingaleResidual,
    ResidualOptions,
};
use crate::error::{DualityError, Result};
use crate::estimator::{DualityReport, HypothesisEstimate, Prepared};
use crate::scenario::{validate_scenario, Backend, Direction, Scenario, TimeGrid, Violation};
use crate::trajectory::write_jump_dump;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_CHECK_FAILED: i32 = 2;

pub const CSV_FILE: &str = "curves.csv";
pub const JSON_FILE: &str = "report.json";
pub const METADATA_FILE: &str = "metadata.json";

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ScenarioSource {
    Path(PathBuf),
    Builtin(String),
}

impl ScenarioSource {
    /// An existing file is read as a scenario; anything else names a builtin.
    pub fn resolve(spec: &str) -> Self {
        if Path::new(spec).is_file() {
            ScenarioSource::Path(spec.into())
        } else {
            ScenarioSource::Builtin(spec.into())
        }
    }

    pub fn load(&self) -> Result<Scenario<f64>> {
        match self {
            ScenarioSource::Path(p) => parse_scenario(&std::fs::read_to_string(p)?),
            ScenarioSource::Builtin(name) => builtin(name).ok_or_else(|| {
                DualityError::Validation(vec![Violation::new(
                    "unknown-scenario",
                    format!("'{name}' is neither a file nor a builtin scenario"),
                )])
            }),
        }
    }
}

/// `a:b:step` grid override.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridOverride {
    pub start: f64,
    pub end: f64,
    pub step: f64,
}

impl std::str::FromStr for GridOverride {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let parts: Vec<f64> = s
            .split(':')
            .map(|p| p.trim().parse::<f64>().map_err(|e| format!("bad grid '{s}': {e}")))
            .collect::<std::result::Result<_, _>>()?;
        match parts[..] {
            [start, end, step] => Ok(GridOverride { start, end, step }),
            _ => Err(format!("bad grid '{s}': expected a:b:step")),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub replicas: Option<usize>,
    pub grid: Option<GridOverride>,
    pub comparison: Option<Direction>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Emit {
    pub csv: bool,
    pub json: bool,
    pub paths: bool,
}

impl Default for Emit {
    fn default() -> Self {
        Emit {
            csv: true,
            json: true,
            paths: false,
        }
    }
}

impl std::str::FromStr for Emit {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let mut e = Emit {
            csv: false,
            json: false,
            paths: false,
        };
        for item in s.split(',').map(str::trim).filter(|i| !i.is_empty()) {
            match item {
                "csv" => e.csv = true,
                "json" => e.json = true,
                "paths" => e.paths = true,
                other => return Err(format!("unknown output '{other}' (use csv, json, paths)")),
            }
        }
        Ok(e)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub source: ScenarioSource,
    /// No files are written when unset.
    pub out_dir: Option<PathBuf>,
    pub overrides: Overrides,
    pub emit: Emit,
    /// Worker threads; `None` uses every core.
    pub workers: Option<usize>,
}

impl RunConfig {
    pub fn new(source: ScenarioSource) -> Self {
        RunConfig {
            source,
            out_dir: None,
            overrides: Overrides::default(),
            emit: Emit::default(),
            workers: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CheckVerdict {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResidualRecord {
    pub process: u8,
    pub outcome: std::result::Result<MartingaleResidual<f64>, String>,
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub scenario: Scenario<f64>,
    pub scenario_toml: String,
    pub curves: DualityReport<f64>,
    pub hypothesis: HypothesisEstimate<f64>,
    pub residuals: Vec<ResidualRecord>,
    pub identity: IntegratedIdentity<f64>,
    pub continuity: Option<ContinuityProbe<f64>>,
    pub comparison: Option<ComparisonCertificate<f64>>,
    pub findings: Vec<DiscrepancyAtomFinding<f64>>,
    pub verdicts: Vec<CheckVerdict>,
    /// Wall-clock seconds per phase, in execution order.
    pub timings: Vec<(&'static str, f64)>,
    pub workers: usize,
    pub started_unix: f64,
    pub finished_unix: f64,
    /// Rendered jump dumps of both processes, when requested.
    pub paths: Option<[String; 2]>,
    pub files: Vec<PathBuf>,
}

impl RunReport {
    pub fn exit_code(&self) -> i32 {
        if self.verdicts.iter().all(|v| v.pass) && self.findings.is_empty() {
            EXIT_PASS
        } else {
            EXIT_CHECK_FAILED
        }
    }

    pub fn csv(&self) -> String {
        csv_table(&self.curves)
    }

    pub fn json(&self) -> String {
        json_report(self)
    }

    /// One line per verdict and finding.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for v in &self.verdicts {
            let mark = if v.pass { "pass" } else { "FAIL" };
            out.push_str(&format!("{mark}  {}  {}\n", v.name, v.detail));
        }
        for f in &self.findings {
            out.push_str(&format!(
                "finding  T = {}  |g - f| = {:.6e}  {}\n",
                f.t,
                f.magnitude,
                f.class.name()
            ));
        }
        out
    }
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

fn override_error(message: impl Into<String>) -> DualityError {
    DualityError::Validation(vec![Violation::new("override-invalid", message)])
}

/// Applies overrides, rejecting any that do not fit the scenario.
pub fn apply_overrides(mut s: Scenario<f64>, o: &Overrides, emit: Emit) -> Result<Scenario<f64>> {
    if let Some(g) = o.grid {
        if g.start != 0.0 {
            return Err(override_error("grid overrides must start at 0"));
        }
        if !(g.end > 0.0 && g.step > 0.0 && g.end.is_finite()) {
            return Err(override_error("grid override needs b > 0 and step > 0"));
        }
        s.grid = TimeGrid::uniform(g.end, g.step, s.grid.inner_step);
    }
    match &mut s.backend {
        Backend::MonteCarlo { replicas, seed } => {
            if let Some(n) = o.replicas {
                if n < 2 {
                    return Err(override_error("at least 2 replicas are needed"));
                }
                *replicas = n;
            }
            if let Some(v) = o.seed {
                *seed = v;
            }
        }
        b => {
            if o.replicas.is_some() || o.seed.is_some() {
                return Err(override_error(format!(
                    "--seed and --replicas need a monte-carlo backend, not {}",
                    b.name()
                )));
            }
            if emit.paths {
                return Err(override_error("path dumps need a monte-carlo backend"));
            }
        }
    }
    if let Some(d) = o.comparison {
        s.checks.comparison = Some(d);
    }
    Ok(s)
}

/// Loads, overrides and validates the scenario, then runs every phase.
/// Output files are written only after all computation has succeeded.
pub fn run(config: &RunConfig) -> Result<RunReport> {
    let started_unix = unix_now();
    let scenario = apply_overrides(config.source.load()?, &config.overrides, config.emit)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers.unwrap_or(0))
        .build()
        .map_err(|e| DualityError::Unsupported(e.to_string()))?;
    let mut report = pool.install(|| execute(scenario, config.emit.paths))?;
    report.workers = pool.current_num_threads();
    report.started_unix = started_unix;
    report.finished_unix = unix_now();
    if let Some(dir) = &config.out_dir {
        report.files = write_outputs(&report, dir, config.emit)?;
    }
    Ok(report)
}

fn timed<T>(timings: &mut Vec<(&'static str, f64)>, phase: &'static str, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    timings.push((phase, start.elapsed().as_secs_f64()));
    out
}

fn execute(scenario: Scenario<f64>, dump_paths: bool) -> Result<RunReport> {
    let mut timings = Vec::new();
    let s = &scenario;
    let report = timed(&mut timings, "validate", || validate_scenario(s));
    report.into_result()?;
    let prepared = timed(&mut timings, "prepare", || Prepared::new(s))?;
    let mut verdicts = Vec::new();

    let residuals = timed(&mut timings, "martingale", || martingale_phase(s));
    for r in &residuals {
        verdicts.push(match &r.outcome {
            Ok(m) => CheckVerdict {
                name: format!("martingale[X{}, {}]", r.process, m.test_function),
                pass: m.pass,
                detail: format!("max deviation {:.3e}", m.max_deviation),
            },
            Err(e) => CheckVerdict {
                name: format!("martingale[X{}]", r.process),
                pass: false,
                detail: e.clone(),
            },
        });
    }

    let horizon = s.grid.horizon();
    let hypothesis = timed(&mut timings, "hypothesis", || prepared.hypothesis_estimate(horizon))?;
    let finite = hypothesis.phi1.is_finite() && hypothesis.phi2.is_finite();
    verdicts.push(CheckVerdict {
        name: "hypothesis".into(),
        pass: finite,
        detail: format!(
            "phi1 {:.6e}, phi2 {:.6e}, {}",
            hypothesis.phi1,
            hypothesis.phi2,
            if hypothesis.stable { "stable" } else { "unstable under refinement" }
        ),
    });

    let curves = timed(&mut timings, "curves", || prepared.curves());
    if let Some((t, msg)) = curves.failures.first() {
        return Err(DualityError::Eval(format!("duality curves failed at T = {t}: {msg}")));
    }

    let upto = s.checks.integrated_horizon.unwrap_or(horizon);
    let identity = timed(&mut timings, "integrated-identity", || {
        integrated_identity(&curves, upto, &s.tolerances)
    });
    verdicts.push(CheckVerdict {
        name: "integrated-identity".into(),
        pass: identity.pass,
        detail: format!(
            "|{:.6e} - {:.6e}| vs {:.3e}",
            identity.lhs, identity.rhs, identity.tolerance
        ),
    });

    let continuity = if s.backend.is_exact() {
        let probe = timed(&mut timings, "continuity", || continuity_probe(&prepared))?;
        verdicts.push(CheckVerdict {
            name: "continuity".into(),
            pass: probe.pass,
            detail: format!("max increment {:.3e} -> {:.3e}", probe.coarse_max, probe.fine_max),
        });
        Some(probe)
    } else {
        None
    };

    let comparison = s.checks.comparison.map(|d| {
        let cert = timed(&mut timings, "comparison", || comparison_certify(&prepared, d, &curves));
        verdicts.push(CheckVerdict {
            name: format!("comparison[{}]", d.symbol()),
            pass: cert.pass,
            detail: report::premise_label(&cert.premise),
        });
        cert
    });

    let findings = timed(&mut timings, "discrepancies", || {
        confirm_findings(&prepared, detect_discrepancies(&curves, &s.tolerances))
    })?;

    let paths = match (dump_paths, prepared.sampled_paths()) {
        (true, Some((p1, p2))) => {
            let render = |paths: &[crate::trajectory::Trajectory<f64>]| -> Result<String> {
                let mut buf = Vec::new();
                for (k, path) in paths.iter().enumerate() {
                    write_jump_dump(&mut buf, k as u64, path)?;
                }
                Ok(String::from_utf8(buf).expect("dump is ascii"))
            };
            Some([render(p1)?, render(p2)?])
        }
        _ => None,
    };

    let scenario_toml = scenario_to_toml(s)?;
    drop(prepared);
    Ok(RunReport {
        scenario,
        scenario_toml,
        curves,
        hypothesis,
        residuals,
        identity,
        continuity,
        comparison,
        findings,
        verdicts,
        timings,
        workers: 0,
        started_unix: 0.0,
        finished_unix: 0.0,
        paths,
        files: Vec::new(),
    })
}

fn martingale_phase(s: &Scenario<f64>) -> Vec<ResidualRecord> {
    let (replicas, seed) = s.replicas().unwrap_or((10_000, 0));
    let mut out = Vec::new();
    for (k, law) in [(1u8, &s.process1), (2, &s.process2)] {
        let opts = ResidualOptions {
            abs_tol: s.tolerances.abs_tol,
            singular_eps: s.tolerances.singular_eps,
            replicas,
            seed,
            process: k,
            ..ResidualOptions::default()
        };
        let tfs = if s.checks.test_functions.is_empty() {
            default_test_functions(law)
        } else {
            s.checks.test_functions.clone()
        };
        for f in &tfs {
            out.push(ResidualRecord {
                process: k,
                outcome: martingale_residual(law, f, &s.grid, &opts)
                    .map_err(|e| format!("{}: {e}", f.id)),
            });
        }
    }
    out
}

fn write_outputs(r: &RunReport, dir: &Path, emit: Emit) -> Result<Vec<PathBuf>> {
    let mut files: Vec<(PathBuf, String)> = Vec::new();
    if emit.csv {
        files.push((dir.join(CSV_FILE), r.csv()));
    }
    if emit.json {
        files.push((dir.join(JSON_FILE), r.json()));
        files.push((dir.join(METADATA_FILE), metadata_json(r)));
    }
    if let Some([p1, p2]) = &r.paths {
        let header = "# replica time from to\n";
        files.push((dir.join("paths1.txt"), format!("{header}{p1}")));
        files.push((dir.join("paths2.txt"), format!("{header}{p2}")));
    }
    std::fs::create_dir_all(dir)?;
    for (path, body) in &files {
        std::fs::write(path, body)?;
    }
    Ok(files.into_iter().map(|(p, _)| p).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_parse() {
        let g: GridOverride = "0:1.5:0.25".parse().unwrap();
        assert_eq!((g.start, g.end, g.step), (0.0, 1.5, 0.25));
        assert!("0:1".parse::<GridOverride>().is_err());
        let e: Emit = "csv,paths".parse().unwrap();
        assert!(e.csv && e.paths && !e.json);
        assert!("pdf".parse::<Emit>().is_err());
    }

    #[test]
    fn overrides_are_checked_against_the_backend() {
        let s = builtin::<f64>("two-state-exact").unwrap();
        let seed = Overrides {
            seed: Some(3),
            ..Overrides::default()
        };
        assert!(apply_overrides(s.clone(), &seed, Emit::default()).is_err());
        let grid = Overrides {
            grid: Some("0.5:1:0.1".parse().unwrap()),
            ..Overrides::default()
        };
        assert!(apply_overrides(s.clone(), &grid, Emit::default()).is_err());
        let mc = builtin::<f64>("two-state-mc").unwrap();
        let ok = apply_overrides(mc, &seed, Emit::default()).unwrap();
        assert_eq!(ok.replicas(), Some((10_000, 3)));
    }

    #[test]
    fn self_dual_zero_passes() {
        let r = run(&RunConfig::new(ScenarioSource::Builtin("self-dual-zero".into()))).unwrap();
        assert_eq!(r.exit_code(), EXIT_PASS, "{}", r.summary());
        assert!(r.curves.points.iter().all(|p| p.g.value == 0.0 && p.f.value == 0.0));
    }

    #[test]
    fn unknown_builtin_is_a_hard_error() {
        let err = run(&RunConfig::new(ScenarioSource::Builtin("nope".into()))).unwrap_err();
        assert!(matches!(err, DualityError::Validation(_)));
    }
}
