//! CSV and JSON renderings of a run.

use serde::{Serialize, Serializer};
use serde_json::value::RawValue;

use crate::checks::PremiseEvidence;
use crate::estimator::DualityReport;

use super::RunReport;

/// A number printed with 17 significant digits; non-finite values become `null`.
#[derive(Clone, Copy, Debug)]
struct Num(f64);

impl Serialize for Num {
    fn serialize<Ser: Serializer>(&self, s: Ser) -> Result<Ser::Ok, Ser::Error> {
        if self.0.is_finite() {
            RawValue::from_string(format!("{:.16e}", self.0))
                .map_err(serde::ser::Error::custom)?
                .serialize(s)
        } else {
            s.serialize_none()
        }
    }
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub const CSV_HEADER: &str = "T,g,g_ci_low,g_ci_high,f,f_ci_low,f_ci_high,gap,atom_measure";

/// One row per grid point; CI fields are empty for exact backends.
pub fn csv_table(report: &DualityReport<f64>) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    let ci = |c: Option<(f64, f64)>| c.map_or((String::new(), String::new()), |(lo, hi)| (num(lo), num(hi)));
    for p in &report.points {
        let (gl, gh) = ci(p.g.ci95());
        let (fl, fh) = ci(p.f.ci95());
        out.push_str(&format!(
            "{},{},{gl},{gh},{},{fl},{fh},{},{}\n",
            num(p.t),
            num(p.g.value),
            num(p.f.value),
            num(p.gap),
            num(p.atom_measure())
        ));
    }
    out
}

#[derive(Serialize)]
struct AtomJson<'a> {
    id: &'a str,
    measure: Num,
    value: Num,
    isolated_in_t: bool,
}

#[derive(Serialize)]
struct PointJson<'a> {
    #[serde(rename = "T")]
    t: Num,
    g: Num,
    g_ci: Option<[Num; 2]>,
    f: Num,
    f_ci: Option<[Num; 2]>,
    gap: Num,
    atom_measure: Num,
    quadrature_warning: bool,
    atoms: Vec<AtomJson<'a>>,
}

#[derive(Serialize)]
struct HypothesisJson {
    horizon: Num,
    phi1: Num,
    phi2: Num,
    intervals: usize,
    refined: [Num; 2],
    stable: bool,
}

#[derive(Serialize)]
struct ResidualJson<'a> {
    process: u8,
    test_function: Option<&'a str>,
    method: Option<String>,
    max_deviation: Option<Num>,
    pass: bool,
    error: Option<&'a str>,
}

#[derive(Serialize)]
struct IdentityJson {
    horizon: Num,
    lhs: Num,
    rhs: Num,
    tolerance: Num,
    pass: bool,
}

#[derive(Serialize)]
struct ContinuityJson {
    step: Num,
    coarse_max: Num,
    fine_max: Num,
    pass: bool,
}

#[derive(Serialize)]
struct ComparisonJson {
    direction: &'static str,
    premise: String,
    violations: Vec<(String, Num)>,
    conclusion_failures: Vec<Num>,
    pass: bool,
}

#[derive(Serialize)]
struct FindingJson {
    #[serde(rename = "T")]
    t: Num,
    magnitude: Num,
    threshold: Num,
    class: &'static str,
}

#[derive(Serialize)]
struct VerdictJson<'a> {
    name: &'a str,
    pass: bool,
    detail: &'a str,
}

#[derive(Serialize)]
struct ReportJson<'a> {
    name: &'a str,
    version: &'static str,
    backend: &'static str,
    seed: Option<u64>,
    replicas: Option<usize>,
    scenario: &'a str,
    points: Vec<PointJson<'a>>,
    hypothesis: HypothesisJson,
    martingale: Vec<ResidualJson<'a>>,
    integrated_identity: IdentityJson,
    continuity: Option<ContinuityJson>,
    comparison: Option<ComparisonJson>,
    findings: Vec<FindingJson>,
    verdicts: Vec<VerdictJson<'a>>,
    exit_code: i32,
}

pub fn premise_label<S>(p: &PremiseEvidence<S>) -> String {
    match p {
        PremiseEvidence::Proven => "proven".into(),
        PremiseEvidence::Exhaustive { pairs } => format!("exhaustive ({pairs} pairs)"),
        PremiseEvidence::Sampled { pairs } => format!("sampled ({pairs} pairs)"),
        PremiseEvidence::Violated { points } => format!("violated at {} pair(s)", points.len()),
    }
}

/// The deterministic report; timestamps and timings live in [`metadata_json`].
pub fn json_report(r: &RunReport) -> String {
    let pair = |c: Option<(f64, f64)>| c.map(|(lo, hi)| [Num(lo), Num(hi)]);
    let (replicas, seed) = r.scenario.replicas().unzip();
    let doc = ReportJson {
        name: &r.scenario.name,
        version: env!("CARGO_PKG_VERSION"),
        backend: r.scenario.backend.name(),
        seed,
        replicas,
        scenario: &r.scenario_toml,
        points: r
            .curves
            .points
            .iter()
            .map(|p| PointJson {
                t: Num(p.t),
                g: Num(p.g.value),
                g_ci: pair(p.g.ci95()),
                f: Num(p.f.value),
                f_ci: pair(p.f.ci95()),
                gap: Num(p.gap),
                atom_measure: Num(p.atom_measure()),
                quadrature_warning: p.quadrature_warning,
                atoms: p
                    .atoms
                    .iter()
                    .map(|a| AtomJson {
                        id: &a.atom_id,
                        measure: Num(a.measure),
                        value: Num(a.value),
                        isolated_in_t: a.isolated_in_t,
                    })
                    .collect(),
            })
            .collect(),
        hypothesis: HypothesisJson {
            horizon: Num(r.hypothesis.horizon),
            phi1: Num(r.hypothesis.phi1),
            phi2: Num(r.hypothesis.phi2),
            intervals: r.hypothesis.intervals,
            refined: [Num(r.hypothesis.refined.0), Num(r.hypothesis.refined.1)],
            stable: r.hypothesis.stable,
        },
        martingale: r
            .residuals
            .iter()
            .map(|m| match &m.outcome {
                Ok(res) => ResidualJson {
                    process: m.process,
                    test_function: Some(&res.test_function),
                    method: Some(format!("{:?}", res.method).to_lowercase()),
                    max_deviation: Some(Num(res.max_deviation)),
                    pass: res.pass,
                    error: None,
                },
                Err(e) => ResidualJson {
                    process: m.process,
                    test_function: None,
                    method: None,
                    max_deviation: None,
                    pass: false,
                    error: Some(e),
                },
            })
            .collect(),
        integrated_identity: IdentityJson {
            horizon: Num(r.identity.horizon),
            lhs: Num(r.identity.lhs),
            rhs: Num(r.identity.rhs),
            tolerance: Num(r.identity.tolerance),
            pass: r.identity.pass,
        },
        continuity: r.continuity.as_ref().map(|c| ContinuityJson {
            step: Num(c.step),
            coarse_max: Num(c.coarse_max),
            fine_max: Num(c.fine_max),
            pass: c.pass,
        }),
        comparison: r.comparison.as_ref().map(|c| ComparisonJson {
            direction: c.direction.symbol(),
            premise: premise_label(&c.premise),
            violations: match &c.premise {
                PremiseEvidence::Violated { points } => {
                    points.iter().map(|(at, v)| (at.clone(), Num(*v))).collect()
                }
                _ => Vec::new(),
            },
            conclusion_failures: c.conclusion_failures.iter().map(|&t| Num(t)).collect(),
            pass: c.pass,
        }),
        findings: r
            .findings
            .iter()
            .map(|f| FindingJson {
                t: Num(f.t),
                magnitude: Num(f.magnitude),
                threshold: Num(f.threshold),
                class: f.class.name(),
            })
            .collect(),
        verdicts: r
            .verdicts
            .iter()
            .map(|v| VerdictJson {
                name: &v.name,
                pass: v.pass,
                detail: &v.detail,
            })
            .collect(),
        exit_code: r.exit_code(),
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("report serializes");
    text.push('\n');
    text
}

/// Timestamps, worker count and per-phase timings.
pub fn metadata_json(r: &RunReport) -> String {
    let timings: serde_json::Map<String, serde_json::Value> = r
        .timings
        .iter()
        .map(|(phase, secs)| (phase.to_string(), serde_json::json!(secs)))
        .collect();
    let doc = serde_json::json!({
        "version": env!("CARGO_PKG_VERSION"),
        "started_unix": r.started_unix,
        "finished_unix": r.finished_unix,
        "workers": r.workers,
        "timings_seconds": timings,
    });
    let mut text = serde_json::to_string_pretty(&doc).expect("metadata serializes");
    text.push('\n');
    text
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::{DualityPoint, Estimate};

    #[test]
    fn numbers_keep_seventeen_digits() {
        let v = std::f64::consts::E.powf(1.0 - std::f64::consts::E);
        let s = serde_json::to_string(&Num(v)).unwrap();
        assert_eq!(s.trim_start_matches('-').split('e').next().unwrap().len(), 18);
        assert_eq!(s.parse::<f64>().unwrap(), v);
        assert_eq!(serde_json::to_string(&Num(f64::NAN)).unwrap(), "null");
    }

    #[test]
    fn csv_leaves_exact_cis_empty() {
        let report = DualityReport {
            points: vec![DualityPoint {
                t: 0.5,
                g: Estimate::exact(0.0),
                f: Estimate {
                    value: 1.0,
                    std_err: Some(0.5),
                },
                gap: -1.0,
                atoms: Vec::new(),
                quadrature_warning: false,
            }],
            failures: Vec::new(),
            exact: true,
        };
        let text = csv_table(&report);
        let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
        assert_eq!(row.len(), 9);
        assert_eq!((row[2], row[3]), ("", ""));
        assert!(!row[5].is_empty());
        assert_eq!(row[0].parse::<f64>().unwrap(), 0.5);
    }
}
