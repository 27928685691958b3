//! Command implementations behind the `ergokit` binary. Each command returns
//! a JSON document and an exit code; `main.rs` only parses flags and prints.

pub mod spec;

use std::path::Path;

use ergokit::coupling::{verify_coupling_lemma, CouplingComparison};
use ergokit::doeblin::{
    doeblin_split_lifted, spectral_check, stationary_by_power_iteration, tv_bound_doeblin, verify_error_recursion,
    DoeblinCurve, RecursionReport, SpectralCheck,
};
use ergokit::envelope::{convergence_curve, envelope_iterate, mixing_estimate, stationary_by_envelope, MixingEstimate};
use ergokit::stationary::{stationary_by_return_time, stationary_by_trees, stationary_linear, TreeMode};
use ergokit::{ErgodicityReport, Method, StationaryResult, StochasticMatrix};
use serde_json::{json, Value};

pub use spec::{ChainSource, ChainSpec};

/// Exit code for a successful, positive analysis.
pub const EXIT_OK: i32 = 0;
/// Exit code for usage and input errors.
pub const EXIT_USAGE: i32 = 1;
/// Exit code when the analysis itself comes back negative.
pub const EXIT_NEGATIVE: i32 = 2;

/// Methods may disagree by at most this multiple of `--tol`.
pub const AGREEMENT_FACTOR: f64 = 10.0;

/// Agreement required of the spectral dominant vector and the rank-one limit.
pub const SPECTRAL_AGREEMENT: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("file not found: {0}")]
    FileNotFound(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid generator parameters: {0}")]
    InvalidGeneratorParams(String),
    #[error("{0}")]
    Analysis(#[from] ergokit::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Analysis(_) => EXIT_NEGATIVE,
            _ => EXIT_USAGE,
        }
    }
}

/// A command's stdout document and exit code.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub json: Value,
    pub code: i32,
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn cmd_analyze(id: &str, p: &StochasticMatrix) -> Outcome {
    let report = ErgodicityReport::analyze(p);
    let mut json = report.to_json();
    json["chain"] = json!(id);
    Outcome { json, code: if report.is_ergodic() { EXIT_OK } else { EXIT_NEGATIVE } }
}

/// Parses `--methods`. `tree` expands to both tree modes.
pub fn parse_methods(text: &str) -> Result<Vec<Method>, CliError> {
    let mut out = Vec::new();
    for name in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let add: &[Method] = match name {
            "all" => &Method::ALL,
            "linear" | "linear_solve" => &[Method::LinearSolve],
            "tree" => &[Method::TreeEnumeration, Method::TreeDeterminant],
            "tree_enumeration" => &[Method::TreeEnumeration],
            "tree_determinant" => &[Method::TreeDeterminant],
            "return_time" => &[Method::ReturnTime],
            "envelope" => &[Method::Envelope],
            "power" | "power_iteration" => &[Method::PowerIteration],
            other => return Err(CliError::Usage(format!("unknown method {other:?}"))),
        };
        for m in add {
            if !out.contains(m) {
                out.push(*m);
            }
        }
    }
    if out.is_empty() {
        return Err(CliError::Usage("at least one method is required".into()));
    }
    Ok(out)
}

pub fn run_method(p: &StochasticMatrix, method: Method, tol: f64) -> ergokit::Result<StationaryResult> {
    match method {
        Method::LinearSolve => stationary_linear(p),
        Method::TreeEnumeration => stationary_by_trees(p, TreeMode::Enumeration),
        Method::TreeDeterminant => stationary_by_trees(p, TreeMode::Determinant),
        Method::ReturnTime => stationary_by_return_time(p),
        Method::Envelope => stationary_by_envelope(p, tol, None),
        Method::PowerIteration => stationary_by_power_iteration(p, tol * 1e-2),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Verdict {
    Pass,
    Fail,
    Error,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Error => "error",
        }
    }

    fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
}

fn verdict_of<T>(r: &Option<ergokit::Result<T>>, ok: impl Fn(&T) -> bool) -> Option<Verdict> {
    match r {
        None => None,
        Some(Ok(v)) => Some(Verdict::from_bool(ok(v))),
        Some(Err(_)) => Some(Verdict::Error),
    }
}

#[derive(Debug, Clone)]
pub struct DoeblinSummary {
    pub recursion: RecursionReport,
    pub curve: DoeblinCurve,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportOptions {
    pub tol: f64,
    pub epsilon: f64,
    pub trials: u64,
    pub horizon: u64,
    pub seed: u64,
    pub start: usize,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self { tol: 1e-10, epsilon: 0.25, trials: 100_000, horizon: 30, seed: 0, start: 0 }
    }
}

/// Everything the `report` command computes. `cmd_stationary` fills only the
/// stationary part.
#[derive(Debug, Clone)]
pub struct CrossValidationReport {
    pub chain: String,
    pub labels: Vec<String>,
    pub ergodicity: ErgodicityReport,
    pub tol: f64,
    pub methods: Vec<(Method, ergokit::Result<StationaryResult>)>,
    /// `‖π_a − π_b‖_∞` for each pair of successful methods.
    pub discrepancies: Vec<Vec<Option<f64>>>,
    pub mixing: Option<ergokit::Result<MixingEstimate>>,
    pub coupling: Option<ergokit::Result<CouplingComparison>>,
    pub doeblin: Option<ergokit::Result<DoeblinSummary>>,
    pub spectral: Option<ergokit::Result<SpectralCheck>>,
}

impl CrossValidationReport {
    pub fn stationary(id: &str, p: &StochasticMatrix, methods: &[Method], tol: f64) -> Self {
        let results: Vec<_> = methods.iter().map(|&m| (m, run_method(p, m, tol))).collect();
        let discrepancies = results
            .iter()
            .map(|(_, a)| {
                results
                    .iter()
                    .map(|(_, b)| match (a, b) {
                        (Ok(a), Ok(b)) => a.pi.max_abs_diff(&b.pi).ok(),
                        _ => None,
                    })
                    .collect()
            })
            .collect();
        Self {
            chain: id.to_string(),
            labels: p.space().labels().to_vec(),
            ergodicity: ErgodicityReport::analyze(p),
            tol,
            methods: results,
            discrepancies,
            mixing: None,
            coupling: None,
            doeblin: None,
            spectral: None,
        }
    }

    pub fn full(id: &str, p: &StochasticMatrix, opts: &ReportOptions) -> Self {
        let mut report = Self::stationary(id, p, &Method::ALL, opts.tol);
        report.mixing = Some(mixing_estimate(p, opts.epsilon));
        let pi = stationary_linear(p).map(|r| r.pi);
        report.coupling = Some(pi.clone().and_then(|pi| {
            verify_coupling_lemma(p, &pi, opts.start, opts.horizon, opts.trials, opts.seed)
        }));
        report.doeblin = Some(pi.and_then(|pi| {
            let split = doeblin_split_lifted(p, &pi)?;
            Ok(DoeblinSummary { recursion: verify_error_recursion(&split, 20)?, curve: tv_bound_doeblin(&split, 50) })
        }));
        report.spectral = Some(spectral_check(p, None));
        report
    }

    pub fn max_discrepancy(&self) -> Option<f64> {
        self.discrepancies.iter().flatten().flatten().copied().reduce(f64::max)
    }

    pub fn successes(&self) -> usize {
        self.methods.iter().filter(|(_, r)| r.is_ok()).count()
    }

    pub fn stationary_verdict(&self) -> Verdict {
        if self.successes() == 0 {
            return Verdict::Error;
        }
        Verdict::from_bool(self.max_discrepancy().unwrap_or(0.0) <= AGREEMENT_FACTOR * self.tol)
    }

    fn linear_pi(&self) -> Option<&StationaryResult> {
        self.methods.iter().find_map(|(m, r)| (*m == Method::LinearSolve).then_some(r.as_ref().ok()).flatten())
    }

    pub fn verdicts(&self) -> Vec<(&'static str, Verdict)> {
        let mut out = vec![
            ("ergodicity", Verdict::from_bool(self.ergodicity.is_ergodic())),
            ("stationary_agreement", self.stationary_verdict()),
        ];
        if let Some(v) = verdict_of(&self.mixing, |m: &MixingEstimate| m.empirical_tmix <= m.bound_tmix) {
            out.push(("mixing_bound", v));
        }
        if let Some(v) = verdict_of(&self.coupling, |c: &CouplingComparison| c.passed()) {
            out.push(("coupling_lemma", v));
        }
        if let Some(Ok(d)) = &self.doeblin {
            out.push(("doeblin_bound", Verdict::from_bool(d.curve.passed())));
            out.push(("error_recursion", Verdict::from_bool(d.recursion.passed())));
        } else if let Some(Err(_)) = &self.doeblin {
            out.push(("doeblin_bound", Verdict::Error));
            out.push(("error_recursion", Verdict::Error));
        }
        let linear = self.linear_pi().map(|r| r.pi.clone());
        if let Some(v) = verdict_of(&self.spectral, |s: &SpectralCheck| {
            (s.dominant_value - 1.0).abs() <= 1e-9
                && s.subdominant_modulus_estimate < 1.0
                && s.rank1_gap < SPECTRAL_AGREEMENT
                && linear
                    .as_ref()
                    .and_then(|pi| s.dominant_vector.max_abs_diff(pi).ok())
                    .is_some_and(|d| d <= SPECTRAL_AGREEMENT)
        }) {
            out.push(("spectral", v));
        }
        out
    }

    pub fn passed(&self) -> bool {
        self.verdicts().iter().all(|(_, v)| *v == Verdict::Pass)
    }

    pub fn to_json(&self) -> Value {
        let names: Vec<&str> = self.methods.iter().map(|(m, _)| m.name()).collect();
        let methods: Vec<Value> = self
            .methods
            .iter()
            .map(|(m, r)| match r {
                Ok(r) => r.to_json(),
                Err(e) => json!({ "method": m.name(), "error": e.to_string() }),
            })
            .collect();
        let mut out = json!({
            "chain": self.chain,
            "ergodicity": self.ergodicity.to_json(),
            "tol": self.tol,
            "methods": methods,
            "discrepancies": { "methods": names, "matrix": self.discrepancies, "max": self.max_discrepancy() },
        });
        let err = |e: &ergokit::Error| json!({ "error": e.to_string() });
        if let Some(m) = &self.mixing {
            out["mixing"] = m.as_ref().map_or_else(err, |m| {
                json!([{
                    "epsilon": m.epsilon,
                    "empirical_tmix": m.empirical_tmix,
                    "bound_tmix": m.bound_tmix,
                    "primitivity_m": m.primitivity_m,
                    "pmin_of_pm": m.pmin_of_pm,
                }])
            });
        }
        if let Some(c) = &self.coupling {
            out["coupling_lemma"] = c.as_ref().map_or_else(err, |c| {
                json!({
                    "start_y": self.labels.get(c.start_y),
                    "trials": c.trials,
                    "seed": c.seed,
                    "verdict": Verdict::from_bool(c.passed()).as_str(),
                    "rows": c.rows,
                })
            });
        }
        if let Some(d) = &self.doeblin {
            out["doeblin"] = d.as_ref().map_or_else(err, |d| {
                json!({
                    "step": d.curve.step,
                    "theta": d.curve.theta,
                    "worst_ratio": d.curve.worst_ratio(),
                    "bound_verdict": Verdict::from_bool(d.curve.passed()).as_str(),
                    "recursion_verdict": Verdict::from_bool(d.recursion.passed()).as_str(),
                    "recursion_max_error": d.recursion.rows.iter().map(|r| r.max_error).fold(0.0, f64::max),
                    "pi_fact": d.recursion.pi_fact,
                    "curve": d.curve.points,
                })
            });
        }
        if let Some(s) = &self.spectral {
            out["spectral"] = s.as_ref().map_or_else(err, SpectralCheck::to_json);
        }
        out["verdicts"] = self.verdicts().into_iter().map(|(k, v)| (k.to_string(), json!(v.as_str()))).collect();
        out
    }
}

pub fn cmd_stationary(id: &str, p: &StochasticMatrix, methods: &[Method], tol: f64) -> Outcome {
    let report = CrossValidationReport::stationary(id, p, methods, tol);
    let code = if report.stationary_verdict() == Verdict::Pass { EXIT_OK } else { EXIT_NEGATIVE };
    let mut json = report.to_json();
    json["verdict"] = json!(report.stationary_verdict().as_str());
    Outcome { json, code }
}

pub fn cmd_report(id: &str, p: &StochasticMatrix, opts: &ReportOptions) -> Outcome {
    let report = CrossValidationReport::full(id, p, opts);
    Outcome { json: report.to_json(), code: if report.passed() { EXIT_OK } else { EXIT_NEGATIVE } }
}

/// Mixing table plus the curve `t, d(t), n·Δ(t), θ^⌊t/m⌋`. The curve goes to
/// `csv` when given, otherwise into the JSON document.
pub fn cmd_mix(
    id: &str,
    p: &StochasticMatrix,
    epsilon: f64,
    horizon: Option<u64>,
    csv: Option<&Path>,
    trace: Option<&Path>,
) -> Result<Outcome, CliError> {
    let est = mixing_estimate(p, epsilon)?;
    let pi = stationary_linear(p)?.pi;
    let split = doeblin_split_lifted(p, &pi)?;
    let horizon = horizon.unwrap_or_else(|| (2 * est.empirical_tmix).max(20));
    let m = split.step;
    let curve = convergence_curve(p, &pi, horizon)?;
    let rows: Vec<(u64, f64, f64, f64)> = curve
        .iter()
        .map(|c| (c.t, c.distance, c.n_delta, split.theta.powi((c.t / m) as i32)))
        .collect();
    let mut json = json!({
        "chain": id,
        "mixing": [{
            "epsilon": est.epsilon,
            "empirical_tmix": est.empirical_tmix,
            "bound_tmix": est.bound_tmix,
            "primitivity_m": est.primitivity_m,
            "pmin_of_pm": est.pmin_of_pm,
            "ratio": est.ratio(),
        }],
        "theta": split.theta,
        "theta_step": m,
    });
    match csv {
        Some(path) => {
            let mut text = String::from("t,d,n_delta,theta_pow\n");
            for (t, d, nd, th) in &rows {
                text.push_str(&format!("{t},{d:.17e},{nd:.17e},{th:.17e}\n"));
            }
            write_file(path, &text)?;
            json["curve_csv"] = json!(path.display().to_string());
        }
        None => {
            json["curve"] = rows.iter().map(|(t, d, nd, th)| json!({ "t": t, "d": d, "n_delta": nd, "theta_pow": th })).collect();
        }
    }
    if let Some(path) = trace {
        let lifted = p.power(m);
        let mut text = String::from("column,i,m,M,delta\n");
        for k in 0..p.n() {
            let t = envelope_iterate(&lifted, k, 10_000, 1e-12)?;
            for r in &t.records {
                text.push_str(&format!("{},{},{:.17e},{:.17e},{:.17e}\n", p.space().label(k), r.i, r.min, r.max, r.delta));
            }
        }
        write_file(path, &text)?;
        json["trace_csv"] = json!(path.display().to_string());
    }
    Ok(Outcome { json, code: EXIT_OK })
}

/// Coupling-lemma table for `X₀ ~ π`, `Y₀ = start`.
pub fn cmd_couple(
    id: &str,
    p: &StochasticMatrix,
    start: usize,
    trials: u64,
    horizon: u64,
    seed: u64,
    csv: Option<&Path>,
) -> Result<Outcome, CliError> {
    let pi = match stationary_linear(p) {
        Ok(r) => r.pi,
        Err(ergokit::Error::NotIrreducible) => {
            return Err(ergokit::Error::NotErgodic("chain is reducible".into()).into())
        }
        Err(e) => return Err(e.into()),
    };
    let table = verify_coupling_lemma(p, &pi, start, horizon, trials, seed)?;
    let verdict = Verdict::from_bool(table.passed());
    let mut json = json!({
        "chain": id,
        "start_y": p.space().label(start),
        "trials": trials,
        "horizon": horizon,
        "seed": seed,
        "verdict": verdict.as_str(),
    });
    match csv {
        Some(path) => {
            write_file(path, &table.to_csv())?;
            json["csv"] = json!(path.display().to_string());
        }
        None => json["rows"] = json!(table.rows),
    }
    Ok(Outcome { json, code: if verdict == Verdict::Pass { EXIT_OK } else { EXIT_NEGATIVE } })
}
